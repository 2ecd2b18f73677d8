//! Command-line flags, `key = value` config files and their merge.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qbcharge_core::analysis::{ChargingPath, DEFAULT_EPSILON};
use qbcharge_core::models::{EffectiveParams, EngineParams};

use crate::error::CliError;
use crate::output::fmt_g;

#[derive(Debug, Parser)]
#[command(name = "qbcharge", version, about = "Collective charging of quantum batteries by a three-level engine")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Battery energy and fluctuations over time, collective vs individual
    Dynamics(PathArgs),
    /// Steady-state density, fluctuation and ergotropy ratio against N
    SteadySweep(SweepArgs),
    /// Charging time to within epsilon of the steady energy
    ChargingTime(PathArgs),
    /// Closed-form ergotropy against the numeric value for small N
    Ergotropy(Shared),
    /// Numerical self-checks; exits with status 3 if any fails
    Validate(MicroArgs),
    /// Full engine + battery dynamics against the effective model
    Microscopic(MicroArgs),
}

#[derive(Debug, Default, Args)]
pub struct Shared {
    /// Inverse effective temperature times omega_0 (negative: inverted)
    #[arg(long, allow_hyphen_values = true)]
    pub beta_e: Option<f64>,
    /// Effective dissipation rate
    #[arg(long, allow_hyphen_values = true)]
    pub gamma_e: Option<f64>,
    /// Number of batteries
    #[arg(long, conflicts_with = "n_list")]
    pub n: Option<usize>,
    /// Battery counts, comma separated; `a..b` is an inclusive range
    #[arg(long)]
    pub n_list: Option<String>,
    /// Relative deficit that defines the charging time
    #[arg(long, allow_hyphen_values = true)]
    pub epsilon: Option<f64>,
    /// End of the simulated interval
    #[arg(long, allow_hyphen_values = true)]
    pub t_end: Option<f64>,
    /// Spacing of recorded samples
    #[arg(long, allow_hyphen_values = true)]
    pub record_dt: Option<f64>,
    /// Output CSV path (standard output when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads
    #[arg(long)]
    pub workers: Option<usize>,
    /// `key = value` file; flags take precedence over it
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PathChoice {
    Auto,
    Reduced,
    Populations,
}

impl PathChoice {
    fn name(self) -> &'static str {
        match self {
            PathChoice::Auto => "auto",
            PathChoice::Reduced => "reduced",
            PathChoice::Populations => "populations",
        }
    }
}

impl FromStr for PathChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        <PathChoice as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Args)]
pub struct PathArgs {
    #[command(flatten)]
    pub shared: Shared,
    /// Collective solver: reduced density matrix or birth-death populations
    #[arg(long, value_enum)]
    pub path: Option<PathChoice>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub path: PathArgs,
    /// Take steady values from long-time dynamics instead of closed forms
    #[arg(long)]
    pub from_dynamics: bool,
}

#[derive(Debug, Args)]
pub struct MicroArgs {
    #[command(flatten)]
    pub shared: Shared,
    /// beta_h * omega_h
    #[arg(long, allow_hyphen_values = true)]
    pub beta_h_wh: Option<f64>,
    /// beta_c * omega_c
    #[arg(long, allow_hyphen_values = true)]
    pub beta_c_wc: Option<f64>,
    /// Hot transition frequency in units of omega_0
    #[arg(long, allow_hyphen_values = true)]
    pub omega_h: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub gamma_h: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub gamma_c: Option<f64>,
    /// Engine-battery coupling
    #[arg(long, allow_hyphen_values = true)]
    pub g: Option<f64>,
    /// Number of engines
    #[arg(long)]
    pub engines: Option<usize>,
    /// Keep g fixed instead of scaling it by 1/sqrt(N)
    #[arg(long)]
    pub no_normalize: bool,
}

const KNOWN_KEYS: &[&str] = &[
    "command",
    "beta-e",
    "gamma-e",
    "n",
    "n-list",
    "epsilon",
    "t-end",
    "record-dt",
    "out",
    "workers",
    "path",
    "from-dynamics",
    "beta-h-wh",
    "beta-c-wc",
    "omega-h",
    "gamma-h",
    "gamma-c",
    "g",
    "engines",
    "normalize",
    "no-normalize",
];

/// Parses `key = value` lines; `#` starts a comment, `_` and `-` are
/// interchangeable in keys.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("config line {}: expected `key = value`", i + 1)))?;
        let key = k.trim().replace('_', "-").to_ascii_lowercase();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(CliError::usage(format!("config line {}: unknown key `{}`", i + 1, k.trim())));
        }
        if map.insert(key, v.trim().to_string()).is_some() {
            return Err(CliError::usage(format!("config line {}: duplicate key `{}`", i + 1, k.trim())));
        }
    }
    Ok(map)
}

struct FileLayer(BTreeMap<String, String>);

impl FileLayer {
    fn load(path: Option<&PathBuf>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(FileLayer(BTreeMap::new())) };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        parse_config_text(&text).map(FileLayer)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.0
            .get(key)
            .map(|v| v.parse().map_err(|_| CliError::usage(format!("config: invalid value `{v}` for `{key}`"))))
            .transpose()
    }

    fn flag(&self, key: &str) -> Result<Option<bool>, CliError> {
        self.0
            .get(key)
            .map(|v| match v.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(CliError::usage(format!("config: invalid boolean `{v}` for `{key}`"))),
            })
            .transpose()
    }
}

/// Comma-separated counts; `a..b` expands to the inclusive range.
pub fn parse_n_list(s: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::usage(format!("invalid battery list `{s}`"));
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim) {
        if let Some((a, b)) = item.split_once("..") {
            let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            if a > b {
                return Err(bad());
            }
            out.extend(a..=b);
        } else {
            out.push(item.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() || out.contains(&0) {
        return Err(CliError::usage(format!("battery counts must be positive: `{s}`")));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub beta_h_wh: f64,
    pub beta_c_wc: f64,
    pub omega_h: f64,
    pub gamma_h: f64,
    pub gamma_c: f64,
    pub g: f64,
    pub engines: usize,
    pub normalize: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            beta_h_wh: 0.2,
            beta_c_wc: 1.0,
            omega_h: 2.0,
            gamma_h: 1.0,
            gamma_c: 1.0,
            g: 0.01,
            engines: 1,
            normalize: true,
        }
    }
}

impl EngineConfig {
    pub fn params(&self) -> Result<EngineParams, CliError> {
        EngineParams::from_products(self.beta_h_wh, self.beta_c_wc, self.omega_h, self.gamma_h, self.gamma_c, self.g)
            .map_err(|e| CliError::usage(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Dynamics,
    SteadySweep,
    ChargingTime,
    Ergotropy,
    Validate,
    Microscopic,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Dynamics => "dynamics",
            CommandKind::SteadySweep => "steady-sweep",
            CommandKind::ChargingTime => "charging-time",
            CommandKind::Ergotropy => "ergotropy",
            CommandKind::Validate => "validate",
            CommandKind::Microscopic => "microscopic",
        }
    }

    fn default_n_list(self) -> Vec<usize> {
        match self {
            CommandKind::Dynamics => vec![10],
            CommandKind::SteadySweep => vec![1, 2, 5, 10, 20, 50, 100, 200, 500, 1000],
            CommandKind::ChargingTime => vec![1, 2, 5, 10, 20, 50, 100, 200, 500],
            CommandKind::Ergotropy => (1..=12).collect(),
            CommandKind::Validate | CommandKind::Microscopic => vec![1],
        }
    }
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: CommandKind,
    pub beta_e: f64,
    pub gamma_e: f64,
    pub n_list: Vec<usize>,
    pub epsilon: f64,
    pub t_end: Option<f64>,
    pub record_dt: Option<f64>,
    pub out: Option<PathBuf>,
    pub workers: usize,
    pub path: PathChoice,
    pub from_dynamics: bool,
    pub engine: EngineConfig,
}

impl ExperimentConfig {
    pub fn defaults(command: CommandKind) -> Self {
        ExperimentConfig {
            command,
            beta_e: -0.8,
            gamma_e: 0.1,
            n_list: command.default_n_list(),
            epsilon: DEFAULT_EPSILON,
            t_end: None,
            record_dt: None,
            out: None,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            path: PathChoice::Auto,
            from_dynamics: false,
            engine: EngineConfig::default(),
        }
    }

    pub fn from_command(cmd: Command) -> Result<Self, CliError> {
        let (kind, shared, path, from_dynamics, micro) = match cmd {
            Command::Dynamics(a) => (CommandKind::Dynamics, a.shared, a.path, false, None),
            Command::SteadySweep(a) => (CommandKind::SteadySweep, a.path.shared, a.path.path, a.from_dynamics, None),
            Command::ChargingTime(a) => (CommandKind::ChargingTime, a.shared, a.path, false, None),
            Command::Ergotropy(s) => (CommandKind::Ergotropy, s, None, false, None),
            Command::Validate(m) => (CommandKind::Validate, Shared::default(), None, false, Some(m)),
            Command::Microscopic(m) => (CommandKind::Microscopic, Shared::default(), None, false, Some(m)),
        };
        // micro commands carry their shared flags inside MicroArgs
        let (shared, micro) = match micro {
            Some(mut m) => (std::mem::take(&mut m.shared), Some(m)),
            None => (shared, None),
        };
        let file = FileLayer::load(shared.config.as_ref())?;
        if let Some(c) = file.get::<String>("command")? {
            if c != kind.name() {
                return Err(CliError::usage(format!("config is for `{c}`, not `{}`", kind.name())));
            }
        }

        let mut cfg = ExperimentConfig::defaults(kind);
        macro_rules! merge {
            ($field:expr, $flag:expr, $key:literal) => {
                if let Some(v) = $flag.or(file.get($key)?) {
                    $field = v;
                }
            };
        }
        merge!(cfg.beta_e, shared.beta_e, "beta-e");
        merge!(cfg.gamma_e, shared.gamma_e, "gamma-e");
        merge!(cfg.epsilon, shared.epsilon, "epsilon");
        merge!(cfg.workers, shared.workers, "workers");
        cfg.t_end = shared.t_end.or(file.get("t-end")?);
        cfg.record_dt = shared.record_dt.or(file.get("record-dt")?);
        cfg.out = shared.out.or(file.get("out")?);

        let n_list = match (shared.n, shared.n_list) {
            (Some(n), _) => Some(vec![n]),
            (None, Some(s)) => Some(parse_n_list(&s)?),
            (None, None) => match (file.get::<usize>("n")?, file.get::<String>("n-list")?) {
                (Some(_), Some(_)) => return Err(CliError::usage("config sets both `n` and `n-list`")),
                (Some(n), None) => Some(vec![n]),
                (None, Some(s)) => Some(parse_n_list(&s)?),
                (None, None) => None,
            },
        };
        if let Some(list) = n_list {
            cfg.n_list = list;
        }

        merge!(cfg.path, path, "path");
        cfg.from_dynamics = from_dynamics || file.flag("from-dynamics")?.unwrap_or(false);

        if let Some(m) = micro {
            let e = &mut cfg.engine;
            merge!(e.beta_h_wh, m.beta_h_wh, "beta-h-wh");
            merge!(e.beta_c_wc, m.beta_c_wc, "beta-c-wc");
            merge!(e.omega_h, m.omega_h, "omega-h");
            merge!(e.gamma_h, m.gamma_h, "gamma-h");
            merge!(e.gamma_c, m.gamma_c, "gamma-c");
            merge!(e.g, m.g, "g");
            merge!(e.engines, m.engines, "engines");
            e.normalize = if m.no_normalize {
                false
            } else {
                match (file.flag("normalize")?, file.flag("no-normalize")?) {
                    (Some(a), Some(b)) if a == b => {
                        return Err(CliError::usage("config: `normalize` contradicts `no-normalize`"))
                    }
                    (Some(a), _) => a,
                    (None, Some(b)) => !b,
                    (None, None) => true,
                }
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let positive = |name: &str, x: f64| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(CliError::usage(format!("--{name} must be positive and finite, got {x}")))
            }
        };
        if !self.beta_e.is_finite() {
            return Err(CliError::usage("--beta-e must be finite"));
        }
        positive("gamma-e", self.gamma_e)?;
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(CliError::usage(format!("--epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        if let Some(t) = self.t_end {
            positive("t-end", t)?;
        }
        if let Some(dt) = self.record_dt {
            positive("record-dt", dt)?;
        }
        if let (Some(t), Some(dt)) = (self.t_end, self.record_dt) {
            if dt > t {
                return Err(CliError::usage("--record-dt exceeds --t-end"));
            }
        }
        if self.workers == 0 {
            return Err(CliError::usage("--workers must be at least 1"));
        }
        if self.n_list.contains(&0) {
            return Err(CliError::usage("battery counts must be positive"));
        }
        let needs_inversion = matches!(self.command, CommandKind::Dynamics | CommandKind::ChargingTime);
        if needs_inversion && self.beta_e >= 0.0 {
            return Err(CliError::usage(format!(
                "{} needs population inversion (--beta-e < 0), got {}",
                self.command.name(),
                self.beta_e
            )));
        }
        if self.command == CommandKind::Dynamics && self.n_list.len() != 1 {
            return Err(CliError::usage("dynamics takes a single --n"));
        }
        if self.command == CommandKind::Microscopic {
            self.engine.params()?;
            if self.engine.engines == 0 {
                return Err(CliError::usage("--engines must be at least 1"));
            }
            if self.n_list.len() != 1 {
                return Err(CliError::usage("microscopic takes a single --n"));
            }
        }
        if self.command == CommandKind::Validate {
            self.engine.params()?;
        }
        Ok(())
    }

    pub fn effective(&self) -> Result<EffectiveParams, CliError> {
        EffectiveParams::new(self.beta_e, self.gamma_e).map_err(|e| CliError::usage(e.to_string()))
    }

    pub fn charging_path(&self) -> ChargingPath {
        match self.path {
            PathChoice::Auto => ChargingPath::Auto,
            PathChoice::Reduced => ChargingPath::Reduced,
            PathChoice::Populations => ChargingPath::Populations,
        }
    }

    /// `# key = value` lines; only settings that shape the output appear.
    pub fn echo(&self) -> Vec<(String, String)> {
        let mut v: Vec<(String, String)> = vec![("command".into(), self.command.name().into())];
        let mut put = |k: &str, s: String| v.push((k.to_string(), s));
        let micro = matches!(self.command, CommandKind::Microscopic | CommandKind::Validate);
        if micro {
            let e = &self.engine;
            put("beta-h-wh", fmt_g(e.beta_h_wh));
            put("beta-c-wc", fmt_g(e.beta_c_wc));
            put("omega-h", fmt_g(e.omega_h));
            put("gamma-h", fmt_g(e.gamma_h));
            put("gamma-c", fmt_g(e.gamma_c));
            put("g", fmt_g(e.g));
        }
        if self.command != CommandKind::Microscopic {
            put("beta-e", fmt_g(self.beta_e));
            put("gamma-e", fmt_g(self.gamma_e));
        }
        match self.command {
            CommandKind::Validate => {}
            CommandKind::Dynamics | CommandKind::Microscopic => put("n", self.n_list[0].to_string()),
            _ => put("n-list", self.n_list.iter().map(usize::to_string).collect::<Vec<_>>().join(",")),
        }
        if self.command == CommandKind::Microscopic {
            put("engines", self.engine.engines.to_string());
            put("normalize", self.engine.normalize.to_string());
        }
        if matches!(self.command, CommandKind::ChargingTime | CommandKind::SteadySweep) {
            put("epsilon", fmt_g(self.epsilon));
        }
        if matches!(self.command, CommandKind::Dynamics | CommandKind::ChargingTime | CommandKind::SteadySweep) {
            put("path", self.path.name().into());
        }
        if self.command == CommandKind::SteadySweep {
            put("from-dynamics", self.from_dynamics.to_string());
        }
        if let Some(t) = self.t_end {
            put("t-end", fmt_g(t));
        }
        if let Some(dt) = self.record_dt {
            put("record-dt", fmt_g(dt));
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn n_list_ranges() {
        assert_eq!(parse_n_list("1,3..5, 9").unwrap(), vec![1, 3, 4, 5, 9]);
        assert!(parse_n_list("0").is_err());
        assert!(parse_n_list("5..3").is_err());
        assert!(parse_n_list("a").is_err());
    }

    #[test]
    fn config_text() {
        let m = parse_config_text("# comment\nbeta_e = -0.5 # trailing\n\nN-LIST = 1,2\n").unwrap();
        assert_eq!(m["beta-e"], "-0.5");
        assert_eq!(m["n-list"], "1,2");
        assert!(parse_config_text("bogus = 1").is_err());
        assert!(parse_config_text("beta-e").is_err());
        assert!(parse_config_text("g = 1\ng = 2").is_err());
    }
}
