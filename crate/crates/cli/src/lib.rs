//! Experiment runner: reads a flat JSON configuration, runs the named
//! experiment, writes CSV and JSON outputs, and records everything in a
//! manifest that is written even when the run fails.

pub mod experiments;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use gibbslab::CounterRng;

pub use experiments::Experiment;
pub use output::{Assertion, Context, Outputs};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "GIBBSLAB_OUT";

/// Directory used when neither the command line, the configuration nor the
/// environment names one.
pub const DEFAULT_OUT: &str = "gibbslab-out";

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O failure: {0}")]
    Io(String),
    #[error(transparent)]
    Module(#[from] gibbslab::Error),
}

impl RunError {
    /// Name recorded in the manifest: `ConfigError`, `IOFailure`, or the
    /// library's error variant.
    pub fn name(&self) -> &'static str {
        match self {
            RunError::Config(_) => "ConfigError",
            RunError::Io(_) => "IOFailure",
            RunError::Module(e) => e.name(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Io(_) | RunError::Module(_) => 3,
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

/// Command-line overrides; each takes precedence over the configuration.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    AssertionFailure,
    ConfigError,
    RuntimeError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact: String,
    pub version: String,
    pub experiment: Option<String>,
    /// The configuration with every default filled in.
    pub config: Value,
    pub seed: u64,
    pub rng: String,
    pub workers: Option<usize>,
    pub duration_seconds: f64,
    pub outputs: Vec<String>,
    pub assertions: Vec<Assertion>,
    pub status: Status,
    pub exit_code: i32,
    pub error: Option<ErrorRecord>,
}

/// Outcome of [`run`]: the manifest as written and where it went.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub manifest: RunManifest,
    pub out_dir: PathBuf,
}

impl RunResult {
    pub fn exit_code(&self) -> i32 {
        self.manifest.exit_code
    }
}

/// Keys every configuration may carry regardless of the experiment.
const COMMON_KEYS: [&str; 4] = ["experiment", "seed", "out", "workers"];

struct Common {
    experiment: Option<String>,
    seed: u64,
    out: Option<PathBuf>,
    workers: Option<usize>,
}

type Parsed = Result<(Experiment, Map<String, Value>), RunError>;

fn split_common(config: &Value, opts: &RunOptions) -> (Common, Parsed) {
    let obj = config.as_object();
    let get = |k: &str| obj.and_then(|o| o.get(k));
    let experiment = get("experiment").and_then(Value::as_str).map(str::to_owned);
    let seed = opts.seed.or_else(|| get("seed").and_then(Value::as_u64)).unwrap_or(0);
    let out = opts
        .out
        .clone()
        .or_else(|| get("out").and_then(Value::as_str).map(PathBuf::from));
    let workers = opts
        .workers
        .or_else(|| get("workers").and_then(Value::as_u64).map(|w| w as usize));
    let common = Common {
        experiment: experiment.clone(),
        seed,
        out,
        workers,
    };

    let parsed = (|| {
        let obj = obj.ok_or_else(|| RunError::Config("configuration must be a JSON object".into()))?;
        for (key, check) in [
            ("seed", Value::is_u64 as fn(&Value) -> bool),
            ("workers", Value::is_u64),
            ("out", Value::is_string),
        ] {
            if let Some(v) = obj.get(key) {
                if !check(v) {
                    return Err(RunError::Config(format!("`{key}` has the wrong type: {v}")));
                }
            }
        }
        if workers == Some(0) {
            return Err(RunError::Config("`workers` must be at least 1".into()));
        }
        let name = experiment.ok_or_else(|| RunError::Config("missing string field `experiment`".into()))?;
        let exp = Experiment::from_name(&name).ok_or_else(|| {
            let known: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
            RunError::Config(format!(
                "unknown experiment `{name}`; expected one of {}",
                known.join(", ")
            ))
        })?;
        let rest: Map<String, Value> = obj
            .iter()
            .filter(|(k, _)| !COMMON_KEYS.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        Ok((exp, rest))
    })();
    (common, parsed)
}

fn resolve_out(common_out: Option<PathBuf>) -> PathBuf {
    common_out
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Run the experiment a parsed configuration names. The manifest is always
/// written; failures are recorded in it rather than returned.
pub fn run(config: &Value, opts: &RunOptions) -> RunResult {
    let started = Instant::now();
    let (common, parsed) = split_common(config, opts);
    let out_dir = resolve_out(common.out);
    let mut ctx = Context::new(out_dir.clone(), common.seed);

    let mut resolved_config = config.clone();
    let outcome: Result<(), RunError> = match parsed {
        Err(e) => Err(e),
        Ok((exp, rest)) => {
            std::fs::create_dir_all(&out_dir)
                .map_err(RunError::from)
                .and_then(|_| match common.workers {
                    Some(k) => rayon::ThreadPoolBuilder::new()
                        .num_threads(k)
                        .build()
                        .map_err(|e| RunError::Config(e.to_string()))
                        .and_then(|pool| pool.install(|| exp.run(rest, &mut ctx))),
                    None => exp.run(rest, &mut ctx),
                })
        }
    };
    if let Some(params) = ctx.resolved.take() {
        let mut full = Map::new();
        full.insert("experiment".into(), Value::from(common.experiment.clone()));
        full.insert("seed".into(), Value::from(common.seed));
        full.insert("workers".into(), Value::from(common.workers));
        if let Value::Object(p) = params {
            full.extend(p);
        }
        resolved_config = Value::Object(full);
    }

    let (status, exit_code, error) = match &outcome {
        Ok(()) if ctx.assertions.iter().all(|a| a.passed) => (Status::Pass, 0, None),
        Ok(()) => (Status::AssertionFailure, 1, None),
        Err(e) => (
            if e.exit_code() == 2 {
                Status::ConfigError
            } else {
                Status::RuntimeError
            },
            e.exit_code(),
            Some(ErrorRecord {
                kind: e.name().to_owned(),
                message: e.to_string(),
            }),
        ),
    };
    let mut manifest = RunManifest {
        artifact: "gibbslab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        experiment: common.experiment,
        config: resolved_config,
        seed: common.seed,
        rng: CounterRng::ALGORITHM.into(),
        workers: common.workers,
        duration_seconds: started.elapsed().as_secs_f64(),
        outputs: ctx.outputs.files().to_vec(),
        assertions: ctx.assertions.clone(),
        status,
        exit_code,
        error,
    };
    if let Err(e) = write_manifest(&out_dir, &manifest) {
        manifest.status = Status::RuntimeError;
        manifest.exit_code = 3;
        manifest.error = Some(ErrorRecord {
            kind: "IOFailure".into(),
            message: e.to_string(),
        });
    }
    RunResult { manifest, out_dir }
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(manifest).map_err(std::io::Error::other)?;
    std::fs::write(dir.join(MANIFEST_FILE), text + "\n")
}

/// Read and run a configuration file. A file that cannot be read or parsed
/// is reported as a configuration error in the manifest.
pub fn run_file(path: &Path, opts: &RunOptions) -> RunResult {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return failed_before_parse(opts, format!("cannot read {}: {e}", path.display())),
    };
    match serde_json::from_str::<Value>(&text) {
        Ok(v) => run(&v, opts),
        Err(e) => failed_before_parse(opts, format!("{} is not valid JSON: {e}", path.display())),
    }
}

fn failed_before_parse(opts: &RunOptions, message: String) -> RunResult {
    let out_dir = resolve_out(opts.out.clone());
    let manifest = RunManifest {
        artifact: "gibbslab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        experiment: None,
        config: Value::Null,
        seed: opts.seed.unwrap_or(0),
        rng: CounterRng::ALGORITHM.into(),
        workers: opts.workers,
        duration_seconds: 0.0,
        outputs: Vec::new(),
        assertions: Vec::new(),
        status: Status::ConfigError,
        exit_code: 2,
        error: Some(ErrorRecord {
            kind: "ConfigError".into(),
            message,
        }),
    };
    let mut result = RunResult { manifest, out_dir };
    if let Err(e) = write_manifest(&result.out_dir, &result.manifest) {
        result.manifest.error = Some(ErrorRecord {
            kind: "IOFailure".into(),
            message: e.to_string(),
        });
        result.manifest.exit_code = 3;
    }
    result
}

/// One row of `list`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentInfo {
    pub name: String,
    pub anchor: String,
    pub description: String,
    /// Every parameter with its default value.
    pub parameters: Value,
}

pub fn list_experiments() -> Vec<ExperimentInfo> {
    Experiment::ALL
        .iter()
        .map(|e| ExperimentInfo {
            name: e.name().into(),
            anchor: e.anchor().into(),
            description: e.description().into(),
            parameters: e.default_parameters(),
        })
        .collect()
}

/// Plain-text table: name, anchor, then the parameter keys.
pub fn list_table() -> String {
    let rows = list_experiments();
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut out = String::new();
    for r in rows {
        let keys: Vec<String> = r
            .parameters
            .as_object()
            .map(|o| o.keys().cloned().collect())
            .unwrap_or_default();
        out.push_str(&format!(
            "{:width$}  {}\n{:width$}  parameters: {}\n",
            r.name,
            r.anchor,
            "",
            keys.join(", ")
        ));
    }
    out
}
