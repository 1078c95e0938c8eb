//! Run configuration: command-line flags layered over an optional TOML file.
//!
//! The file grammar is documented in `docs/config.md`.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use entropic_transfer::systems::LorenzParams;
use entropic_transfer::{EigenMethod, ThreeStateModel, TrajectoryFormat};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    Shift,
    Lorenz,
    DelayFile,
    ThreeState,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Entropic,
    NormalizedGaussian,
    Edmd,
    DiffusionMap,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Entropic => "entropic",
            Method::NormalizedGaussian => "normalized-gaussian",
            Method::Edmd => "edmd",
            Method::DiffusionMap => "diffusion-map",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    Auto,
    Dense,
    Arnoldi,
}

impl From<Solver> for EigenMethod {
    fn from(s: Solver) -> Self {
        match s {
            Solver::Auto => EigenMethod::Auto,
            Solver::Dense => EigenMethod::Dense,
            Solver::Arnoldi => EigenMethod::Arnoldi,
        }
    }
}

/// Flags shared by every subcommand. Unset flags fall back to the config
/// file, then to built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub system: Option<SystemKind>,
    /// Points per axis (shift), samples (lorenz, identity) or a cap on delay pairs.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Shift angle; a comma list gives a shift on the d-torus.
    #[arg(long, global = true, value_name = "THETA[,THETA...]")]
    pub theta: Option<String>,
    /// Comma list of values, or `logspace:a:b:k` for k values from 10^a to 10^b.
    #[arg(long, global = true, value_name = "GRID")]
    pub eps: Option<String>,
    #[arg(long, global = true, value_enum)]
    pub method: Option<Method>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Also write a JSON copy of every CSV table.
    #[arg(long, global = true)]
    pub json: bool,
    #[arg(long, global = true)]
    pub lag: Option<usize>,
    #[arg(long, global = true)]
    pub stride: Option<usize>,
    #[arg(long, global = true, value_name = "PATH")]
    pub input: Option<PathBuf>,
    #[arg(long, global = true, value_name = "csv|raw-f64")]
    pub format: Option<String>,
    #[arg(long = "top-k", global = true)]
    pub top_k: Option<usize>,
    /// Ridge parameter for EDMD.
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub solver: Option<Solver>,
    /// Number of clusters for `cluster`.
    #[arg(long, global = true)]
    pub clusters: Option<usize>,
    /// Smallest nontrivial real eigenvalue used by `cluster`.
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// k-means restarts for `cluster` with more than 2 clusters.
    #[arg(long, global = true)]
    pub restarts: Option<usize>,
    /// Iteration cap per k-means run.
    #[arg(long = "max-iter", global = true)]
    pub max_iter: Option<usize>,
    /// Largest denominator in the rational-approximation table.
    #[arg(long = "q-max", global = true)]
    pub q_max: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub lorenz: LorenzSection,
    #[serde(default)]
    pub three_state: ThreeStateSection,
    #[serde(default)]
    pub operator: OperatorSection,
    #[serde(default)]
    pub eigen: EigenSection,
    #[serde(default)]
    pub cluster: ClusterSection,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Numbers {
    One(f64),
    Many(Vec<f64>),
    Text(String),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub kind: Option<SystemKind>,
    pub n: Option<usize>,
    pub theta: Option<Numbers>,
    pub dim: Option<usize>,
    pub input: Option<PathBuf>,
    pub format: Option<String>,
    pub lag: Option<usize>,
    pub stride: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LorenzSection {
    pub sigma: Option<f64>,
    pub rho: Option<f64>,
    pub beta: Option<f64>,
    pub tau: Option<f64>,
    pub rk4_step: Option<f64>,
    pub t_burn: Option<f64>,
    pub t_end: Option<f64>,
    pub initial: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThreeStateSection {
    pub p1: Option<f64>,
    pub p2: Option<f64>,
    pub d1: Option<f64>,
    pub d2: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSection {
    pub method: Option<Method>,
    pub eps: Option<Numbers>,
    pub sigma: Option<f64>,
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenSection {
    pub top_k: Option<usize>,
    pub tolerance: Option<f64>,
    pub solver: Option<Solver>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSection {
    pub clusters: Option<usize>,
    pub threshold: Option<f64>,
    pub restarts: Option<usize>,
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub q_max: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub json: Option<bool>,
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub system: SystemKind,
    pub n: Option<usize>,
    pub theta: Vec<f64>,
    pub dim: usize,
    pub input: Option<PathBuf>,
    pub format: TrajectoryFormat,
    pub lag: usize,
    pub stride: usize,
    pub lorenz: LorenzParams,
    pub t_burn: f64,
    pub t_end: f64,
    pub initial: [f64; 3],
    pub three_state: ThreeStateModel,
    pub method: Method,
    pub eps: Vec<f64>,
    pub sigma: f64,
    pub sinkhorn_tolerance: f64,
    pub top_k: usize,
    pub eig_tolerance: f64,
    pub solver: Solver,
    pub clusters: usize,
    pub threshold: f64,
    pub restarts: usize,
    pub max_iter: usize,
    pub q_max: u64,
    pub out: PathBuf,
    pub json: bool,
    pub seed: u64,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Parses `a,b,c` or `logspace:a:b:k` (base-10 exponents, both ends included).
pub fn parse_eps_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let text = text.trim();
    let grid = if let Some(rest) = text.strip_prefix("logspace:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 3 {
            return Err(config_err(format!(
                "logspace grid must be logspace:a:b:k, got {text:?}"
            )));
        }
        let a: f64 = parse_num(parts[0])?;
        let b: f64 = parse_num(parts[1])?;
        let k: usize = parts[2]
            .trim()
            .parse()
            .map_err(|_| config_err(format!("logspace count {:?} is not an integer", parts[2])))?;
        match k {
            0 => Vec::new(),
            1 => vec![10f64.powf(a)],
            _ => (0..k)
                .map(|i| 10f64.powf(a + (b - a) * i as f64 / (k - 1) as f64))
                .collect(),
        }
    } else if text.is_empty() {
        Vec::new()
    } else {
        text.split(',').map(parse_num).collect::<Result<_, _>>()?
    };
    check_grid(grid)
}

fn check_grid(grid: Vec<f64>) -> Result<Vec<f64>, CliError> {
    if grid.is_empty() {
        return Err(config_err("epsilon grid is empty"));
    }
    if let Some(e) = grid.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
        return Err(config_err(format!(
            "epsilon values must be positive and finite, got {e}"
        )));
    }
    Ok(grid)
}

fn parse_num(s: &str) -> Result<f64, CliError> {
    s.trim()
        .parse()
        .map_err(|_| config_err(format!("{:?} is not a number", s.trim())))
}

fn parse_list(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',').map(parse_num).collect()
}

fn numbers(n: Numbers, what: &str) -> Result<Vec<f64>, CliError> {
    match n {
        Numbers::One(v) => Ok(vec![v]),
        Numbers::Many(v) => Ok(v),
        Numbers::Text(t) if what == "eps" => parse_eps_grid(&t),
        Numbers::Text(t) => parse_list(&t),
    }
}

pub fn load_file(path: &Path) -> Result<FileConfig, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

impl RunConfig {
    pub fn resolve(args: &RunArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(p) => load_file(p)?,
            None => FileConfig::default(),
        };
        Self::merge(args, file)
    }

    pub fn merge(args: &RunArgs, file: FileConfig) -> Result<Self, CliError> {
        let system = args
            .system
            .or(file.system.kind)
            .unwrap_or(SystemKind::Shift);
        let theta = match (&args.theta, file.system.theta) {
            (Some(t), _) => parse_list(t)?,
            (None, Some(t)) => numbers(t, "theta")?,
            (None, None) => vec![1.0 / std::f64::consts::PI],
        };
        let eps = match (&args.eps, file.operator.eps) {
            (Some(e), _) => parse_eps_grid(e)?,
            (None, Some(e)) => check_grid(numbers(e, "eps")?)?,
            (None, None) => vec![1e-2],
        };
        let format = match args.format.as_deref().or(file.system.format.as_deref()) {
            Some(f) => TrajectoryFormat::from_str(f).map_err(|e| config_err(e.to_string()))?,
            None => TrajectoryFormat::Csv,
        };
        let defaults = LorenzParams::default();
        let l = &file.lorenz;
        let lorenz = LorenzParams {
            sigma: l.sigma.unwrap_or(defaults.sigma),
            rho: l.rho.unwrap_or(defaults.rho),
            beta: l.beta.unwrap_or(defaults.beta),
            tau: l.tau.unwrap_or(defaults.tau),
            rk4_step: l.rk4_step.unwrap_or(defaults.rk4_step),
        };
        let ts_default = ThreeStateModel::default();
        let ts = &file.three_state;
        let three_state = ThreeStateModel::new(
            ts.p1.unwrap_or(ts_default.p1),
            ts.p2.unwrap_or(ts_default.p2),
            ts.d1.unwrap_or(ts_default.d1),
            ts.d2.unwrap_or(ts_default.d2),
        )
        .map_err(|e| config_err(e.to_string()))?;

        let cfg = RunConfig {
            system,
            n: args.n.or(file.system.n),
            theta,
            dim: file.system.dim.unwrap_or(2),
            input: args.input.clone().or(file.system.input),
            format,
            lag: args.lag.or(file.system.lag).unwrap_or(1),
            stride: args.stride.or(file.system.stride).unwrap_or(1),
            lorenz,
            t_burn: l.t_burn.unwrap_or(200.0),
            t_end: l.t_end.unwrap_or(2000.0),
            initial: l.initial.unwrap_or([1.0, 1.0, 1.0]),
            three_state,
            method: args
                .method
                .or(file.operator.method)
                .unwrap_or(Method::Entropic),
            eps,
            sigma: args.sigma.or(file.operator.sigma).unwrap_or(0.1),
            sinkhorn_tolerance: file.operator.tolerance.unwrap_or(1e-9),
            top_k: args.top_k.or(file.eigen.top_k).unwrap_or(10),
            eig_tolerance: file.eigen.tolerance.unwrap_or(1e-8),
            solver: args.solver.or(file.eigen.solver).unwrap_or(Solver::Auto),
            clusters: args.clusters.or(file.cluster.clusters).unwrap_or(2),
            threshold: args.threshold.or(file.cluster.threshold).unwrap_or(0.5),
            restarts: args.restarts.or(file.cluster.restarts).unwrap_or(10),
            max_iter: args.max_iter.or(file.cluster.max_iter).unwrap_or(300),
            q_max: args.q_max.or(file.oracle.q_max).unwrap_or(1000),
            out: args
                .out
                .clone()
                .or(file.output.dir)
                .unwrap_or_else(|| PathBuf::from("out")),
            json: args.json || file.output.json.unwrap_or(false),
            seed: args.seed.or(file.seed).unwrap_or(0),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.n == Some(0) {
            return Err(config_err("n must be positive"));
        }
        if self.top_k == 0 {
            return Err(config_err("top-k must be positive"));
        }
        if self.lag == 0 || self.stride == 0 {
            return Err(config_err("lag and stride must be positive"));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(config_err(format!(
                "sigma must be nonnegative, got {}",
                self.sigma
            )));
        }
        if !(self.sinkhorn_tolerance > 0.0 && self.eig_tolerance > 0.0) {
            return Err(config_err("tolerances must be positive"));
        }
        if self.restarts == 0 || self.max_iter == 0 {
            return Err(config_err("restarts and max-iter must be positive"));
        }
        if self.clusters < 2 {
            return Err(config_err("need at least 2 clusters"));
        }
        if self.dim == 0 {
            return Err(config_err("dim must be positive"));
        }
        if self.system == SystemKind::DelayFile && self.input.is_none() {
            return Err(config_err("system delay-file needs --input"));
        }
        if self.system == SystemKind::ThreeState && self.method != Method::Entropic {
            return Err(config_err(
                "the three-state model only supports the entropic method",
            ));
        }
        self.lorenz
            .validate()
            .map_err(|e| config_err(e.to_string()))?;
        Ok(())
    }
}
