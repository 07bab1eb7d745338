//! Run configuration: a JSON object whose keys mirror the command-line flags.
//!
//! ```json
//! {
//!   "input": "siso_benchmark.plant.json",
//!   "command": "compare",
//!   "rho": [100, 0.25],
//!   "bounds": [1],
//!   "horizon": 20, "dt": 0.001, "seed": 0,
//!   "out": "out/siso"
//! }
//! ```
//!
//! Relative `input` and `out` paths in a file are taken relative to the file's
//! directory. Flags override file values field by field.

use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Lqr,
    Mintime,
    Simulate,
    Compare,
    Sweep,
    Synth2d,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Lqr,
        Command::Mintime,
        Command::Simulate,
        Command::Compare,
        Command::Sweep,
        Command::Synth2d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Lqr => "lqr",
            Command::Mintime => "mintime",
            Command::Simulate => "simulate",
            Command::Compare => "compare",
            Command::Sweep => "sweep",
            Command::Synth2d => "synth2d",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

/// Controller used by `simulate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerChoice {
    None,
    Lqr,
    Bang,
    Synth2d,
}

impl ControllerChoice {
    pub const ALL: [ControllerChoice; 4] = [
        ControllerChoice::None,
        ControllerChoice::Lqr,
        ControllerChoice::Bang,
        ControllerChoice::Synth2d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ControllerChoice::None => "none",
            ControllerChoice::Lqr => "lqr",
            ControllerChoice::Bang => "bang",
            ControllerChoice::Synth2d => "synth2d",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

/// Every field optional; a file and the flags each produce one of these.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigPatch {
    pub input: Option<PathBuf>,
    pub command: Option<Command>,
    pub rho: Option<Vec<f64>>,
    pub bounds: Option<Vec<f64>>,
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub controller: Option<ControllerChoice>,
    pub csv_stride: Option<usize>,
    pub restarts: Option<usize>,
}

impl ConfigPatch {
    /// Fields set in `other` replace those in `self`.
    pub fn merge(self, other: ConfigPatch) -> ConfigPatch {
        ConfigPatch {
            input: other.input.or(self.input),
            command: other.command.or(self.command),
            rho: other.rho.or(self.rho),
            bounds: other.bounds.or(self.bounds),
            horizon: other.horizon.or(self.horizon),
            dt: other.dt.or(self.dt),
            seed: other.seed.or(self.seed),
            out: other.out.or(self.out),
            jobs: other.jobs.or(self.jobs),
            controller: other.controller.or(self.controller),
            csv_stride: other.csv_stride.or(self.csv_stride),
            restarts: other.restarts.or(self.restarts),
        }
    }

    fn rebase(mut self, dir: &Path) -> Self {
        for p in [&mut self.input, &mut self.out].into_iter().flatten() {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: PathBuf,
    pub command: Command,
    pub rho: Vec<f64>,
    /// Uniform actuator bound overrides; empty means use the plant file's bounds.
    pub bounds: Vec<f64>,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub jobs: Option<usize>,
    pub controller: ControllerChoice,
    /// Write every k-th sample to trajectory CSVs.
    pub csv_stride: usize,
    pub restarts: usize,
}

impl RunConfig {
    /// The resolved configuration in the file grammar.
    pub fn to_json(&self) -> Value {
        let mut obj = json!({
            "input": self.input.display().to_string(),
            "command": self.command.name(),
            "rho": self.rho,
            "bounds": self.bounds.iter().map(|&b| bound_json(b)).collect::<Vec<_>>(),
            "horizon": self.horizon,
            "dt": self.dt,
            "seed": self.seed,
            "out": self.out.display().to_string(),
            "controller": self.controller.name(),
            "csv_stride": self.csv_stride,
            "restarts": self.restarts,
        });
        if let Some(j) = self.jobs {
            obj["jobs"] = json!(j);
        }
        obj
    }
}

pub fn bound_json(b: f64) -> Value {
    if b.is_infinite() {
        Value::from("inf")
    } else {
        Value::from(b)
    }
}

/// Parses a bound token from the command line.
pub fn parse_bound(s: &str) -> Result<f64, String> {
    if s.eq_ignore_ascii_case("inf") {
        return Ok(f64::INFINITY);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(format!("`{s}` is not a positive number or \"inf\"")),
    }
}

const KEYS: [&str; 12] = [
    "input", "command", "rho", "bounds", "horizon", "dt", "seed", "out", "jobs", "controller",
    "csv_stride", "restarts",
];

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

/// Parses the text of a run-config file. Paths stay as written.
pub fn parse_run_config(text: &str) -> Result<ConfigPatch, CliError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| invalid(format!("config: invalid JSON: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| invalid("config: top level must be an object"))?;
    if let Some(k) = obj.keys().find(|k| !KEYS.contains(&k.as_str())) {
        return Err(invalid(format!("config: unknown key `{k}`")));
    }
    Ok(ConfigPatch {
        input: string(obj, "input")?.map(PathBuf::from),
        command: string(obj, "command")?
            .map(|s| Command::parse(&s).ok_or_else(|| invalid(format!("`command`: unknown command `{s}`"))))
            .transpose()?,
        rho: obj
            .get("rho")
            .map(|v| list(v, "rho", |x| x.as_f64().filter(|r| r.is_finite())))
            .transpose()?,
        bounds: obj
            .get("bounds")
            .map(|v| list(v, "bounds", bound_value))
            .transpose()?,
        horizon: real(obj, "horizon")?,
        dt: real(obj, "dt")?,
        seed: obj
            .get("seed")
            .map(|v| v.as_u64().ok_or_else(|| invalid("`seed` must be a nonnegative integer")))
            .transpose()?,
        out: string(obj, "out")?.map(PathBuf::from),
        jobs: count(obj, "jobs")?,
        controller: string(obj, "controller")?
            .map(|s| {
                ControllerChoice::parse(&s)
                    .ok_or_else(|| invalid(format!("`controller`: unknown controller `{s}`")))
            })
            .transpose()?,
        csv_stride: count(obj, "csv_stride")?,
        restarts: count(obj, "restarts")?,
    })
}

/// Reads a config file and resolves its relative paths against its directory.
pub fn read_run_config(path: &Path) -> Result<ConfigPatch, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| invalid(format!("config: cannot read {}: {e}", path.display())))?;
    let dir = path.parent().unwrap_or(Path::new(""));
    Ok(parse_run_config(&text)?.rebase(dir))
}

fn bound_value(v: &Value) -> Option<f64> {
    match v {
        Value::String(s) if s.eq_ignore_ascii_case("inf") => Some(f64::INFINITY),
        Value::Number(n) => n.as_f64().filter(|x| x.is_finite()),
        _ => None,
    }
}

fn string(obj: &Map<String, Value>, key: &str) -> Result<Option<String>, CliError> {
    obj.get(key)
        .map(|v| {
            v.as_str()
                .map(str::to_owned)
                .ok_or_else(|| invalid(format!("`{key}` must be a string")))
        })
        .transpose()
}

fn real(obj: &Map<String, Value>, key: &str) -> Result<Option<f64>, CliError> {
    obj.get(key)
        .map(|v| {
            v.as_f64()
                .filter(|x| x.is_finite())
                .ok_or_else(|| invalid(format!("`{key}` must be a finite number")))
        })
        .transpose()
}

fn count(obj: &Map<String, Value>, key: &str) -> Result<Option<usize>, CliError> {
    obj.get(key)
        .map(|v| {
            v.as_u64()
                .and_then(|x| usize::try_from(x).ok())
                .ok_or_else(|| invalid(format!("`{key}` must be a nonnegative integer")))
        })
        .transpose()
}

fn list(v: &Value, key: &str, item: impl Fn(&Value) -> Option<f64>) -> Result<Vec<f64>, CliError> {
    let items = v
        .as_array()
        .ok_or_else(|| invalid(format!("`{key}` must be an array")))?;
    items
        .iter()
        .enumerate()
        .map(|(i, x)| item(x).ok_or_else(|| invalid(format!("`{key}` entry {i} is not valid"))))
        .collect()
}

/// Applies defaults and checks every field.
pub fn finalize(patch: ConfigPatch) -> Result<RunConfig, CliError> {
    let command = patch
        .command
        .ok_or_else(|| invalid("`command` is required (positional argument or config key)"))?;
    let input = patch
        .input
        .ok_or_else(|| invalid("`input` is required (--input or config key)"))?;
    let rho = patch.rho.unwrap_or_else(|| vec![1.0]);
    let bounds = patch.bounds.unwrap_or_default();
    let horizon = patch.horizon.unwrap_or(20.0);
    let dt = patch.dt.unwrap_or(1e-3);
    let csv_stride = patch.csv_stride.unwrap_or(1);
    let restarts = patch.restarts.unwrap_or(16);

    if rho.is_empty() {
        return Err(invalid("`rho` must not be empty"));
    }
    if let Some(i) = rho.iter().position(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(invalid(format!("`rho` entry {i} must be positive")));
    }
    if let Some(i) = bounds.iter().position(|b| !(*b > 0.0)) {
        return Err(invalid(format!("`bounds` entry {i} must be positive or \"inf\"")));
    }
    if command == Command::Sweep && bounds.is_empty() {
        return Err(invalid("`bounds` must not be empty for sweep"));
    }
    if matches!(command, Command::Compare | Command::Mintime | Command::Simulate | Command::Synth2d)
        && bounds.len() > 1
    {
        return Err(invalid(format!("`bounds` takes at most one entry for {}", command.name())));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(invalid("`horizon` must be positive"));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(invalid("`dt` must be positive"));
    }
    if dt > horizon / 10.0 {
        return Err(invalid("`dt` must be at most `horizon` / 10"));
    }
    if csv_stride == 0 {
        return Err(invalid("`csv_stride` must be at least 1"));
    }
    if restarts == 0 {
        return Err(invalid("`restarts` must be at least 1"));
    }
    if patch.jobs == Some(0) {
        return Err(invalid("`jobs` must be at least 1"));
    }
    Ok(RunConfig {
        input,
        command,
        rho,
        bounds,
        horizon,
        dt,
        seed: patch.seed.unwrap_or(0),
        out: patch.out.unwrap_or_else(|| PathBuf::from("optreg-out")),
        jobs: patch.jobs,
        controller: patch.controller.unwrap_or(ControllerChoice::Lqr),
        csv_stride,
        restarts,
    })
}
