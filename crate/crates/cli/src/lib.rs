//! Command-line front end: simulations, strategy tables, boundary export,
//! single recommendations, campaigns and the HTTP service.
//!
//! Every command reads the same JSON experiment document (see
//! `harvest_core::config`); without `--config` the reference process is
//! used. Text outputs start with `# config_sha256=<hex> seed=<n>`.

use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use harvest_core::campaign::run_campaigns;
use harvest_core::config::ExperimentConfig;
use harvest_core::evaluation::{historical_data, play, StrategyKind, StrategySpec};
use harvest_core::learning::fit_improper;
use harvest_core::myopic::{default_p_grid, trace_boundary, Beliefs, DEFAULT_BOUNDARY_POINTS, DEFAULT_BOUNDARY_TOL};
use harvest_core::planner::recommend;
use harvest_core::{Channel, Error, HyperState, KnowledgeState, PhysicalState, RecommendMode, Recommendation};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "harvest", version, about = "Harvest timing for fermentation batches under model risk")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment document (JSON). Defaults to the reference process.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one batch and write its trajectory as CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Master seed; defaults to `strategies.seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = Strategy::RlWithMr)]
        strategy: Strategy,
        /// Historical data size; defaults to the first of `strategies.data_sizes`.
        #[arg(long)]
        j0: Option<usize>,
    },
    /// Estimate every configured strategy and write the comparison table.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Replications per strategy; defaults to `strategies.replications`.
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Trace the myopic harvest boundary.
    Boundary {
        #[command(flatten)]
        common: Common,
        /// Use knowledge fitted to this many simulated observations.
        #[arg(long, conflicts_with = "truth", required_unless_present = "truth")]
        j0: Option<usize>,
        /// Use the true growth law.
        #[arg(long = "true")]
        truth: bool,
        #[arg(long, default_value_t = DEFAULT_BOUNDARY_POINTS)]
        points: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the action at one state.
    Recommend {
        #[command(flatten)]
        common: Common,
        /// `p,i,t` as measured.
        #[arg(long)]
        state: String,
        /// Knowledge state (JSON with alpha_p, nu_p, ... beta_i).
        #[arg(long)]
        knowledge: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Planner)]
        mode: Mode,
        /// Planner seed; defaults to `planner.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Non-zero draws a different planner sample.
        #[arg(long, default_value_t = 0)]
        resample: u64,
    },
    /// Run multi-batch campaigns and write one summary row per campaign.
    Campaign {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long)]
        j0: Option<usize>,
    },
    /// Serve the /v1 HTTP API.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Session directory; in-memory when absent.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Require `Authorization: Bearer <token>`.
        #[arg(long, env = "HARVEST_API_TOKEN")]
        token: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Strategy {
    PiMdp,
    Cp,
    RlIgnoringMr,
    Myopic,
    RlWithMr,
}

impl From<Strategy> for StrategyKind {
    fn from(s: Strategy) -> Self {
        match s {
            Strategy::PiMdp => StrategyKind::PiMdp,
            Strategy::Cp => StrategyKind::Cp,
            Strategy::RlIgnoringMr => StrategyKind::RlIgnoringMr,
            Strategy::Myopic => StrategyKind::Myopic,
            Strategy::RlWithMr => StrategyKind::RlWithMr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Planner,
    Myopic,
}

impl From<Mode> for RecommendMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Planner => RecommendMode::Planner,
            Mode::Myopic => RecommendMode::Myopic,
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { .. } => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

/// Validated document plus the hash of its canonical form.
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub sha256: String,
}

pub fn load_config(path: Option<&Path>) -> Result<LoadedConfig, CliError> {
    let config = match path {
        None => ExperimentConfig::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            ExperimentConfig::from_json(&text)?
        }
    };
    config.validate()?;
    let canonical = serde_json::to_vec(&config).map_err(|e| CliError::Runtime(e.to_string()))?;
    let sha256 = hex::encode(Sha256::digest(&canonical));
    Ok(LoadedConfig { config, sha256 })
}

fn header(cfg: &LoadedConfig, seed: u64) -> String {
    format!("# config_sha256={} seed={seed}\n", cfg.sha256)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Run a command that produces text output.
pub fn execute(command: &Command) -> Result<String, CliError> {
    match command {
        Command::Simulate { common, seed, strategy, j0 } => {
            let cfg = load_config(common.config.as_deref())?;
            let c = &cfg.config;
            let seed = seed.unwrap_or(c.strategies.seed);
            let j0 = j0.unwrap_or_else(|| c.strategies.data_sizes.first().copied().unwrap_or(0));
            simulate(&cfg, (*strategy).into(), j0, seed).map(|body| header(&cfg, seed) + &body)
        }
        Command::Evaluate { common, reps } => {
            let cfg = load_config(common.config.as_deref())?;
            if reps.is_some_and(|n| n < 2) {
                return Err(CliError::Config("--reps must be at least 2".into()));
            }
            let report = cfg.config.evaluate(*reps)?;
            Ok(header(&cfg, cfg.config.strategies.seed) + &report.to_csv())
        }
        Command::Boundary { common, j0, truth: _, points, seed } => {
            let cfg = load_config(common.config.as_deref())?;
            let c = &cfg.config;
            let seed = seed.unwrap_or(c.strategies.seed);
            if *points < 2 {
                return Err(CliError::Config("--points must be at least 2".into()));
            }
            let beliefs = match j0 {
                None => Beliefs::Truth(c.truth),
                Some(n) if *n < 3 => {
                    return Err(CliError::Config(format!(
                        "--j0 {n} gives lambda = {}; the predictive needs lambda > 1 (J0 >= 3)",
                        *n as f64 / 2.0
                    )))
                }
                Some(n) => Beliefs::Knowledge(fit_improper(&historical_data(&c.truth, *n, seed, 0))?),
            };
            let grid = default_p_grid(&c.limits, *points);
            let b = trace_boundary(&beliefs, &c.economics, &c.limits, &grid, DEFAULT_BOUNDARY_TOL)?;
            Ok(header(&cfg, seed) + &b.to_csv())
        }
        Command::Recommend { common, state, knowledge, mode, seed, resample } => {
            let cfg = load_config(common.config.as_deref())?;
            let seed = seed.unwrap_or(cfg.config.planner.seed);
            let h = HyperState { knowledge: read_knowledge(knowledge)?, ..parse_state(state)? };
            let rec = recommend_at(&cfg.config, &h, (*mode).into(), seed, *resample)?;
            Ok(header(&cfg, seed) + &format_recommendation(&rec) + "\n")
        }
        Command::Campaign { common, seed, runs, j0 } => {
            let cfg = load_config(common.config.as_deref())?;
            let c = &cfg.config;
            let seed = seed.unwrap_or(c.strategies.seed);
            let params = c.campaign.clone().unwrap_or_default();
            params.validate()?;
            let j0 = j0.unwrap_or_else(|| c.strategies.data_sizes.first().copied().unwrap_or(0));
            if j0 < 3 {
                return Err(CliError::Config(format!(
                    "J0 = {j0} gives lambda = {}; learned strategies need lambda > 1 (J0 >= 3)",
                    j0 as f64 / 2.0
                )));
            }
            if *runs < 1 {
                return Err(CliError::Config("--runs must be at least 1".into()));
            }
            let planner = harvest_core::PlannerConfig { branch_k: params.branch_k, ..c.planner.clone() };
            let recs = run_campaigns(j0, &c.truth, &params, &planner, &c.economics, &c.limits, *runs, seed)?;
            let mut out = header(&cfg, seed);
            out.push_str("run,total_reward,batches,failures,growth_periods,setup_periods\n");
            for (r, rec) in recs.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{r},{},{},{},{},{}",
                    rec.total_reward,
                    rec.batch_count(),
                    rec.failures,
                    rec.growth_periods,
                    rec.setup_periods
                );
            }
            Ok(out)
        }
        Command::Serve { .. } => Err(CliError::Runtime("serve does not produce text output".into())),
    }
}

/// Trajectory CSV of one replication (without the header line).
pub fn simulate(cfg: &LoadedConfig, kind: StrategyKind, j0: usize, seed: u64) -> Result<String, CliError> {
    let c = &cfg.config;
    let spec = StrategySpec {
        cp_fraction: c.strategies.cp_fraction,
        online_baselines: c.strategies.online_baselines,
        ..StrategySpec::new(kind, j0, &c.planner)
    };
    spec.validate()?;
    let ep = play(&spec, &c.truth, &c.economics, &c.limits, seed, 0)?;
    let mut out = String::from("t,p,i,action,reward,alpha_p,sigma_tilde_p,alpha_i,sigma_tilde_i\n");
    for s in &ep.steps {
        let sd = |ch| s.knowledge.decompose_variance(ch).ok().map(|v| v.total().sqrt());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            s.t,
            s.p,
            s.i,
            s.action.label(),
            s.reward,
            s.knowledge.alpha_p,
            opt(sd(Channel::Protein)),
            s.knowledge.alpha_i,
            opt(sd(Channel::Impurity)),
        );
    }
    Ok(out)
}

/// `"p,i,t"` into a hyper-state with empty knowledge.
pub fn parse_state(s: &str) -> Result<HyperState, CliError> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || CliError::Config(format!("--state expects p,i,t; got {s:?}"));
    let [p, i, t] = parts.as_slice() else { return Err(bad()) };
    let p: f64 = p.parse().map_err(|_| bad())?;
    let i: f64 = i.parse().map_err(|_| bad())?;
    let t: u32 = t.parse().map_err(|_| bad())?;
    if !(p.is_finite() && p > 0.0 && i.is_finite() && i > 0.0) {
        return Err(CliError::Config("--state needs positive p and i".into()));
    }
    Ok(HyperState::new(PhysicalState::new(p, i), KnowledgeState::default(), t))
}

pub fn read_knowledge(path: &Path) -> Result<KnowledgeState, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let k: KnowledgeState = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    k.validate()?;
    Ok(k)
}

/// The recommendation the service gives for a session with this config and seed.
pub fn recommend_at(
    c: &ExperimentConfig,
    h: &HyperState,
    mode: RecommendMode,
    seed: u64,
    resample: u64,
) -> Result<Recommendation, CliError> {
    Ok(recommend(h, &c.planner, mode, Some(&c.truth), &c.economics, &c.limits, seed, resample)?)
}

/// `HARVEST (forced: capacity) q_harvest=...` or `CONTINUE q_harvest=... q_continue=...`.
pub fn format_recommendation(r: &Recommendation) -> String {
    let mut line = r.action.label().to_owned();
    if let Some(class) = r.forced {
        let _ = write!(line, " (forced: {})", class.label());
    }
    let _ = write!(line, " q_harvest={:.6}", r.q_harvest);
    if let Some(qc) = r.q_continue {
        let _ = write!(line, " q_continue={qc:.6}");
    }
    line
}

pub fn write_output(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Serve { config, port, host, data_dir, token } => {
            let cfg = load_config(config.as_deref())?;
            serve(cfg.config, SocketAddr::new(*host, *port), data_dir.as_deref(), token.clone())
        }
        cmd => {
            let text = execute(cmd)?;
            let out = match cmd {
                Command::Simulate { common, .. }
                | Command::Evaluate { common, .. }
                | Command::Boundary { common, .. }
                | Command::Recommend { common, .. }
                | Command::Campaign { common, .. } => common.out.as_deref(),
                Command::Serve { .. } => None,
            };
            write_output(out, &text)
        }
    }
}

fn serve(config: ExperimentConfig, addr: SocketAddr, data_dir: Option<&Path>, token: Option<String>) -> Result<(), CliError> {
    use harvest_service::{AppState, Store};
    let store = match data_dir {
        Some(d) => Store::open(d).map_err(|e| CliError::Runtime(format!("session store {}: {e}", d.display())))?,
        None => Store::memory(),
    };
    let state = AppState::new(store).with_token(token).with_default_config(config);
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
    eprintln!("listening on http://{addr}/v1");
    rt.block_on(harvest_service::serve(addr, state)).map_err(|e| CliError::Runtime(e.to_string()))
}
