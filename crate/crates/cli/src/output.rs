//! Output directory bookkeeping and in-run assertions.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::RunError;

/// Writes files into the run's output directory and remembers their names.
#[derive(Debug, Clone)]
pub struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    pub fn new(dir: PathBuf) -> Self {
        Self { dir, files: Vec::new() }
    }

    pub fn dir(&self) -> &PathBuf {
        &self.dir
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn text(&mut self, name: &str, content: &str) -> Result<(), RunError> {
        std::fs::write(self.dir.join(name), content)?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_owned());
        }
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), RunError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| RunError::Io(e.to_string()))?;
        self.text(name, &(text + "\n"))
    }
}

/// A named pass/fail check made during a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// State threaded through an experiment.
#[derive(Debug)]
pub struct Context {
    pub outputs: Outputs,
    pub seed: u64,
    pub assertions: Vec<Assertion>,
    /// Parameters with defaults filled in, set once parsing succeeds.
    pub resolved: Option<Value>,
}

impl Context {
    pub fn new(dir: PathBuf, seed: u64) -> Self {
        Self {
            outputs: Outputs::new(dir),
            seed,
            assertions: Vec::new(),
            resolved: None,
        }
    }

    pub fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.assertions.push(Assertion {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }
}
