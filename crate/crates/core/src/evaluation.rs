//! Monte Carlo evaluation of harvesting strategies against the true process.
//!
//! Replication `r` of every strategy sees the same historical dataset and the
//! same process noise (common random numbers), drawn from streams derived
//! from the master seed and `r`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::{fit_improper, KnowledgeState};
use crate::model::{
    clamp_and_classify, EconomicParams, GrowthTruth, Observation, PhysicalState, ProcessLimits,
    TerminalClass,
};
use crate::myopic::{myopic_decide, Beliefs};
use crate::planner::{decide, run_episode_with, EpisodeRecord, HyperState, PlannerConfig, SamplerMode};
use crate::reward::Action;
use crate::rng::{replication, Purpose};
use crate::stats::Summary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Planner with the true growth law.
    PiMdp,
    /// Harvest once impurity reaches a fixed fraction of the failure limit.
    Cp,
    /// Planner with maximum-likelihood point estimates.
    RlIgnoringMr,
    /// One-step lookahead with predictive moments.
    Myopic,
    /// Bayes-adaptive planner.
    RlWithMr,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::PiMdp,
        StrategyKind::Cp,
        StrategyKind::RlIgnoringMr,
        StrategyKind::Myopic,
        StrategyKind::RlWithMr,
    ];

    pub fn label(self) -> &'static str {
        match self {
            StrategyKind::PiMdp => "PI-MDP",
            StrategyKind::Cp => "CP",
            StrategyKind::RlIgnoringMr => "RL-ignoring-MR",
            StrategyKind::Myopic => "Myopic",
            StrategyKind::RlWithMr => "RL-with-MR",
        }
    }

    /// Whether the strategy uses historical data.
    pub fn learns(self) -> bool {
        matches!(self, StrategyKind::RlIgnoringMr | StrategyKind::Myopic | StrategyKind::RlWithMr)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    /// Historical data size; ignored by strategies that do not learn.
    pub j0: usize,
    pub planner: PlannerConfig,
    pub cp_fraction: f64,
    /// Whether Myopic and RL-ignoring-MR refresh their estimates with the
    /// batch's own observations. RL-with-MR always learns online.
    pub online_baselines: bool,
}

impl StrategySpec {
    pub fn new(kind: StrategyKind, j0: usize, planner: &PlannerConfig) -> Self {
        let mode = match kind {
            StrategyKind::PiMdp => SamplerMode::FixedTruth,
            StrategyKind::RlIgnoringMr => SamplerMode::FixedPlugin,
            _ => SamplerMode::BayesAdaptive,
        };
        Self {
            kind,
            j0: if kind.learns() { j0 } else { 0 },
            planner: PlannerConfig { mode, ..planner.clone() },
            cp_fraction: 0.6,
            online_baselines: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind.learns() && self.j0 < 3 {
            return Err(Error::invalid(
                "strategies.data_sizes",
                format!(
                    "J0 = {} gives lambda = {}; learned strategies need lambda > 1 (J0 >= 3)",
                    self.j0,
                    self.j0 as f64 / 2.0
                ),
            ));
        }
        if !(self.cp_fraction > 0.0 && self.cp_fraction <= 1.0) {
            return Err(Error::invalid("strategies.cp_fraction", "must lie in (0, 1]"));
        }
        self.planner.validate()
    }
}

/// Fixed-fraction rule: harvest once `i ≥ fraction·Ī`, or when forced.
pub fn cp_policy(state: &PhysicalState, t: u32, limits: &ProcessLimits, fraction: f64) -> Action {
    let (_, class) = clamp_and_classify(state, t, limits);
    if class.is_forced() || state.i >= fraction * limits.i_bar {
        Action::Harvest
    } else {
        Action::Continue
    }
}

/// `j0` historical observations for replication `rep`. Larger datasets
/// extend smaller ones.
pub fn historical_data(truth: &GrowthTruth, j0: usize, master_seed: u64, rep: u64) -> Vec<Observation> {
    let mut rng = replication(master_seed, rep, Purpose::Dataset);
    (0..j0).map(|_| truth.sample(&mut rng)).collect()
}

/// Play one replication of a strategy.
pub fn play(
    spec: &StrategySpec,
    truth: &GrowthTruth,
    econ: &EconomicParams,
    limits: &ProcessLimits,
    master_seed: u64,
    rep: u64,
) -> Result<EpisodeRecord> {
    let k0 = if spec.j0 > 0 {
        fit_improper(&historical_data(truth, spec.j0, master_seed, rep))?
    } else {
        KnowledgeState::improper()
    };
    let mut process = replication(master_seed, rep, Purpose::Process);
    let mut planner_rng = replication(master_seed, rep, Purpose::Planner);
    let frozen = |h: &HyperState| {
        if spec.online_baselines {
            *h
        } else {
            HyperState { knowledge: k0, ..*h }
        }
    };
    match spec.kind {
        StrategyKind::Cp => run_episode_with(&k0, truth, econ, limits, &mut process, |h| {
            Ok(cp_policy(&h.physical, h.t, limits, spec.cp_fraction))
        }),
        StrategyKind::Myopic => run_episode_with(&k0, truth, econ, limits, &mut process, |h| {
            myopic_decide(&h.physical, h.t, &Beliefs::Knowledge(frozen(h).knowledge), econ, limits)
        }),
        StrategyKind::RlIgnoringMr => run_episode_with(&k0, truth, econ, limits, &mut process, |h| {
            Ok(decide(&frozen(h), &spec.planner, Some(truth), econ, limits, &mut planner_rng)?.action)
        }),
        StrategyKind::PiMdp | StrategyKind::RlWithMr => {
            run_episode_with(&k0, truth, econ, limits, &mut process, |h| {
                Ok(decide(h, &spec.planner, Some(truth), econ, limits, &mut planner_rng)?.action)
            })
        }
    }
}

/// Per-replication outcome kept in reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub total_reward: f64,
    pub stopping_time: u32,
    pub final_class: TerminalClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyResult {
    pub strategy: StrategyKind,
    pub j0: usize,
    pub mean: f64,
    pub sd: f64,
    pub n_reps: usize,
    pub failures: usize,
    pub mean_stopping_time: f64,
    pub pct_of_pi_mdp: Option<f64>,
    pub records: Vec<ReplicationRecord>,
}

impl StrategyResult {
    pub fn se(&self) -> f64 {
        self.sd / (self.n_reps as f64).sqrt()
    }
}

/// Estimate the expected total reward of one strategy from `n` replications.
pub fn evaluate(
    spec: &StrategySpec,
    truth: &GrowthTruth,
    econ: &EconomicParams,
    limits: &ProcessLimits,
    n: usize,
    master_seed: u64,
) -> Result<StrategyResult> {
    if n < 2 {
        return Err(Error::invalid("strategies.replications", "need at least 2 replications"));
    }
    spec.validate()?;
    let episodes = crate::par::map_range(n, |r| play(spec, truth, econ, limits, master_seed, r as u64));
    let mut records = Vec::with_capacity(n);
    for e in episodes {
        let e = e?;
        records.push(ReplicationRecord {
            total_reward: e.total_reward,
            stopping_time: e.stopping_time,
            final_class: e.final_class,
        });
    }
    let totals: Vec<f64> = records.iter().map(|r| r.total_reward).collect();
    let s = Summary::of(&totals);
    Ok(StrategyResult {
        strategy: spec.kind,
        j0: spec.j0,
        mean: s.mean,
        sd: s.sd,
        n_reps: n,
        failures: records.iter().filter(|r| r.final_class == TerminalClass::Failed).count(),
        mean_stopping_time: records.iter().map(|r| r.stopping_time as f64).sum::<f64>() / n as f64,
        pct_of_pi_mdp: None,
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub rows: Vec<StrategyResult>,
}

impl EvaluationReport {
    pub fn row(&self, kind: StrategyKind, j0: usize) -> Option<&StrategyResult> {
        self.rows
            .iter()
            .find(|r| r.strategy == kind && (r.j0 == j0 || !kind.learns()))
    }

    /// Fill the percent-of-PI-MDP column from the PI-MDP row, if present.
    pub fn fill_percentages(&mut self) {
        let base = self.rows.iter().find(|r| r.strategy == StrategyKind::PiMdp).map(|r| r.mean);
        for row in &mut self.rows {
            row.pct_of_pi_mdp = base.map(|b| row.mean / b * 100.0);
        }
    }

    /// Comma-separated table: `strategy,J0,mean,sd,pct_of_pi_mdp,n_reps`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("strategy,J0,mean,sd,pct_of_pi_mdp,n_reps\n");
        for r in &self.rows {
            let pct = r.pct_of_pi_mdp.map(|v| format!("{v:.2}")).unwrap_or_default();
            let j0 = if r.strategy.learns() { r.j0.to_string() } else { String::new() };
            out.push_str(&format!(
                "{},{},{:.4},{:.4},{},{}\n",
                r.strategy.label(),
                j0,
                r.mean,
                r.sd,
                pct,
                r.n_reps
            ));
        }
        out
    }
}

/// Every requested strategy at every data size, sharing replications.
pub fn compare(
    kinds: &[StrategyKind],
    data_sizes: &[usize],
    planner: &PlannerConfig,
    cp_fraction: f64,
    truth: &GrowthTruth,
    econ: &EconomicParams,
    limits: &ProcessLimits,
    n: usize,
    master_seed: u64,
) -> Result<EvaluationReport> {
    let mut specs = Vec::new();
    for &kind in kinds.iter().filter(|k| !k.learns()) {
        specs.push(StrategySpec { cp_fraction, ..StrategySpec::new(kind, 0, planner) });
    }
    for &j0 in data_sizes {
        for &kind in kinds.iter().filter(|k| k.learns()) {
            specs.push(StrategySpec::new(kind, j0, planner));
        }
    }
    evaluate_specs(&specs, truth, econ, limits, n, master_seed)
}

/// Evaluate each spec on the same replications and fill the percentage column.
pub fn evaluate_specs(
    specs: &[StrategySpec],
    truth: &GrowthTruth,
    econ: &EconomicParams,
    limits: &ProcessLimits,
    n: usize,
    master_seed: u64,
) -> Result<EvaluationReport> {
    for s in specs {
        s.validate()?;
    }
    let mut rows = Vec::with_capacity(specs.len());
    for s in specs {
        rows.push(evaluate(s, truth, econ, limits, n, master_seed)?);
    }
    let mut report = EvaluationReport { rows };
    report.fill_percentages();
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub c1: f64,
    pub r_f: f64,
    pub report: EvaluationReport,
}

/// Trend checks over a sensitivity grid, per strategy row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendDiagnostics {
    /// `(strategy, J0, r_f)` where the mean failed to increase in `c1`.
    pub mean_not_increasing_in_c1: Vec<(StrategyKind, usize, f64)>,
    /// `(strategy, J0, c1)` where the mean increased in `r_f`.
    pub mean_increasing_in_rf: Vec<(StrategyKind, usize, f64)>,
    /// `(strategy, J0, c1)` where the SD decreased in `r_f`.
    pub sd_decreasing_in_rf: Vec<(StrategyKind, usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityTable {
    pub cells: Vec<SweepCell>,
}

impl SensitivityTable {
    pub fn cell(&self, c1: f64, r_f: f64) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.c1 == c1 && c.r_f == r_f)
    }

    fn series<F>(&self, keys: &[(StrategyKind, usize)], outer: &[f64], inner: &[f64], pick: F) -> Vec<((StrategyKind, usize, f64), Vec<&StrategyResult>)>
    where
        F: Fn(f64, f64) -> (f64, f64),
    {
        let mut out = Vec::new();
        for &(kind, j0) in keys {
            for &o in outer {
                let rows = inner
                    .iter()
                    .filter_map(|&x| {
                        let (c1, rf) = pick(o, x);
                        self.cell(c1, rf).and_then(|c| c.report.row(kind, j0))
                    })
                    .collect();
                out.push(((kind, j0, o), rows));
            }
        }
        out
    }

    pub fn trends(&self) -> TrendDiagnostics {
        let mut c1s: Vec<f64> = self.cells.iter().map(|c| c.c1).collect();
        let mut rfs: Vec<f64> = self.cells.iter().map(|c| c.r_f).collect();
        c1s.sort_by(f64::total_cmp);
        c1s.dedup();
        rfs.sort_by(f64::total_cmp);
        rfs.dedup();
        let keys: Vec<(StrategyKind, usize)> = self
            .cells
            .first()
            .map(|c| c.report.rows.iter().map(|r| (r.strategy, r.j0)).collect())
            .unwrap_or_default();
        let mut d = TrendDiagnostics {
            mean_not_increasing_in_c1: Vec::new(),
            mean_increasing_in_rf: Vec::new(),
            sd_decreasing_in_rf: Vec::new(),
        };
        for (key, rows) in self.series(&keys, &rfs, &c1s, |rf, c1| (c1, rf)) {
            if rows.windows(2).any(|w| w[1].mean <= w[0].mean) {
                d.mean_not_increasing_in_c1.push(key);
            }
        }
        for (key, rows) in self.series(&keys, &c1s, &rfs, |c1, rf| (c1, rf)) {
            if rows.windows(2).any(|w| w[1].mean > w[0].mean) {
                d.mean_increasing_in_rf.push(key);
            }
            if rows.windows(2).any(|w| w[1].sd < w[0].sd) {
                d.sd_decreasing_in_rf.push(key);
            }
        }
        d
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("c1,r_f,strategy,J0,mean,sd,pct_of_pi_mdp,n_reps\n");
        for c in &self.cells {
            for line in c.report.to_csv().lines().skip(1) {
                out.push_str(&format!("{},{},{}\n", c.c1, c.r_f, line));
            }
        }
        out
    }
}

/// Evaluate the strategy set over a grid of unit protein rewards and failure
/// penalties; other economics come from `econ`.
pub fn sensitivity_sweep(
    protein_values: &[f64],
    failure_costs: &[f64],
    kinds: &[StrategyKind],
    data_sizes: &[usize],
    planner: &PlannerConfig,
    truth: &GrowthTruth,
    econ: &EconomicParams,
    limits: &ProcessLimits,
    n: usize,
    master_seed: u64,
) -> Result<SensitivityTable> {
    let mut cells = Vec::new();
    for &c1 in protein_values {
        for &r_f in failure_costs {
            let e = EconomicParams { c1, r_f, ..*econ };
            e.validate(limits)?;
            let report = compare(kinds, data_sizes, planner, 0.6, truth, &e, limits, n, master_seed)?;
            cells.push(SweepCell { c1, r_f, report });
        }
    }
    Ok(SensitivityTable { cells })
}
