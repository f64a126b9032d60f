//! Sparse-sampling lookahead over hyper-states and the online control loop.
//!
//! The continue value at a node is estimated by drawing `K` growth pairs,
//! advancing the physical state (and, in Bayes-adaptive mode, the knowledge
//! state) for each, and recursing until every leaf is a forced harvest.
//! Harvest values are exact, so only the continue branch is sampled.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::{Channel, KnowledgeState};
use crate::model::{
    clamp_and_classify, step_true, EconomicParams, GrowthTruth, Observation, PhysicalState,
    ProcessLimits, TerminalClass,
};
use crate::reward::{harvest_reward, terminal_value, Action};
use crate::rng::{stream, SimRng};

/// Physical state, knowledge state and epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperState {
    pub physical: PhysicalState,
    pub knowledge: KnowledgeState,
    pub t: u32,
}

impl HyperState {
    pub fn new(physical: PhysicalState, knowledge: KnowledgeState, t: u32) -> Self {
        Self { physical, knowledge, t }
    }
}

/// A finite growth law: independent discrete distributions for `φ` and `ψ`,
/// each given as `(value, probability)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteLaw {
    pub phi: Vec<(f64, f64)>,
    pub psi: Vec<(f64, f64)>,
}

impl DiscreteLaw {
    /// `φ ∈ {lo, hi}` and `ψ ∈ {lo, hi}`, each with probability ½.
    pub fn two_point(phi: (f64, f64), psi: (f64, f64)) -> Self {
        Self {
            phi: vec![(phi.0, 0.5), (phi.1, 0.5)],
            psi: vec![(psi.0, 0.5), (psi.1, 0.5)],
        }
    }

    /// Every joint outcome with its probability.
    pub fn outcomes(&self) -> impl Iterator<Item = (Observation, f64)> + '_ {
        self.phi.iter().flat_map(move |&(a, pa)| {
            self.psi.iter().map(move |&(b, pb)| (Observation::new(a, b), pa * pb))
        })
    }

    fn pick<R: Rng + ?Sized>(support: &[(f64, f64)], rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for &(v, p) in support {
            acc += p;
            if u < acc {
                return v;
            }
        }
        support.last().expect("non-empty support").0
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Observation {
        Observation::new(Self::pick(&self.phi, rng), Self::pick(&self.psi, rng))
    }

    pub fn validate(&self) -> Result<()> {
        for (name, s) in [("phi", &self.phi), ("psi", &self.psi)] {
            let total: f64 = s.iter().map(|x| x.1).sum();
            if s.is_empty() || s.iter().any(|x| !(x.1 >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(
                    if name == "phi" { "discrete.phi" } else { "discrete.psi" },
                    "probabilities must be non-negative and sum to 1",
                ));
            }
        }
        Ok(())
    }
}

/// Where the planner draws its simulated growth rates from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMode {
    /// Posterior-predictive Student-t, with knowledge updated along each branch.
    BayesAdaptive,
    /// The known true normal law.
    FixedTruth,
    /// Normal law at the maximum-likelihood estimates of the current knowledge.
    FixedPlugin,
    /// A fixed discrete law; used by exact oracles.
    Discrete(DiscreteLaw),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Samples per expansion.
    pub branch_k: usize,
    /// Per-depth sample counts; depths past the end reuse the last entry.
    pub schedule: Vec<usize>,
    pub seed: u64,
    pub mode: SamplerMode,
    /// Reuse the same child draws at every node of a given depth. Off by
    /// default; only for variance-reduction experiments.
    pub crn: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            branch_k: 10,
            schedule: Vec::new(),
            seed: 0,
            mode: SamplerMode::BayesAdaptive,
            crn: false,
        }
    }
}

impl PlannerConfig {
    pub fn with_k(branch_k: usize, mode: SamplerMode) -> Self {
        Self { branch_k, mode, ..Self::default() }
    }

    pub fn branching(&self, depth: usize) -> usize {
        match self.schedule.last() {
            None => self.branch_k,
            Some(&last) => *self.schedule.get(depth).unwrap_or(&last),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.branch_k < 1 {
            return Err(Error::invalid("planner.branch_k", "must be at least 1"));
        }
        if self.schedule.iter().any(|&k| k < 1) {
            return Err(Error::invalid("planner.schedule", "entries must be at least 1"));
        }
        if let SamplerMode::Discrete(law) = &self.mode {
            law.validate()?;
        }
        Ok(())
    }
}

/// A concrete growth sampler for one planning call.
#[derive(Debug, Clone, PartialEq)]
pub enum Sampler {
    Bayes,
    Normal(GrowthTruth),
    Discrete(DiscreteLaw),
}

impl Sampler {
    /// One growth pair at knowledge `k`.
    pub fn draw<R: Rng + ?Sized>(&self, k: &KnowledgeState, rng: &mut R) -> Result<Observation> {
        Ok(match self {
            Sampler::Bayes => Observation::new(
                k.predictive(Channel::Protein)?.sample(rng),
                k.predictive(Channel::Impurity)?.sample(rng),
            ),
            Sampler::Normal(g) => g.sample(rng),
            Sampler::Discrete(law) => law.sample(rng),
        })
    }

    /// Mean and standard deviation of the growth law at knowledge `k`.
    pub fn moments(&self, k: &KnowledgeState) -> Result<GrowthTruth> {
        match self {
            Sampler::Bayes => k.predictive_moments(),
            Sampler::Normal(g) => Ok(*g),
            Sampler::Discrete(law) => {
                let m = |s: &[(f64, f64)]| {
                    let mean: f64 = s.iter().map(|&(v, p)| v * p).sum();
                    let var: f64 = s.iter().map(|&(v, p)| p * (v - mean).powi(2)).sum();
                    (mean, var.sqrt())
                };
                let ((mp, sp), (mi, si)) = (m(&law.phi), m(&law.psi));
                Ok(GrowthTruth { mu_p: mp, sigma_p: sp, mu_i: mi, sigma_i: si })
            }
        }
    }
}

/// Build the sampler a planning call at `knowledge` uses.
pub fn make_sampler(
    mode: &SamplerMode,
    truth: Option<&GrowthTruth>,
    knowledge: &KnowledgeState,
) -> Result<Sampler> {
    match mode {
        SamplerMode::BayesAdaptive => {
            for c in Channel::BOTH {
                let lambda = knowledge.channel(c).lambda;
                if !(lambda > 1.0) {
                    return Err(Error::InsufficientData { channel: c.name(), lambda });
                }
                knowledge.predictive(c)?;
            }
            Ok(Sampler::Bayes)
        }
        SamplerMode::FixedTruth => truth
            .copied()
            .map(Sampler::Normal)
            .ok_or_else(|| Error::invalid("truth", "fixed-truth planning needs the true growth law")),
        SamplerMode::FixedPlugin => Ok(Sampler::Normal(knowledge.plugin_estimate()?)),
        SamplerMode::Discrete(law) => Ok(Sampler::Discrete(law.clone())),
    }
}

struct Tree<'a> {
    cfg: &'a PlannerConfig,
    econ: &'a EconomicParams,
    limits: &'a ProcessLimits,
    sampler: &'a Sampler,
    crn_key: u64,
}

impl Tree<'_> {
    /// `V̂` of a node that has already been clamped and classified.
    fn value(
        &self,
        state: PhysicalState,
        class: TerminalClass,
        k: &KnowledgeState,
        t: u32,
        depth: usize,
        rng: &mut SimRng,
    ) -> f64 {
        if class.is_forced() {
            return terminal_value(&state, class, self.econ);
        }
        let qh = harvest_reward(state.p, state.i, self.econ);
        qh.max(self.q_continue(state, k, t, depth, rng))
    }

    fn q_continue(
        &self,
        state: PhysicalState,
        k: &KnowledgeState,
        t: u32,
        depth: usize,
        rng: &mut SimRng,
    ) -> f64 {
        if self.econ.gamma == 0.0 {
            return -self.econ.c_u;
        }
        let n = self.cfg.branching(depth);
        let mut sum = 0.0;
        let draw_rng = |j: usize| self.cfg.crn.then(|| stream(self.crn_key, ((depth as u64) << 32) | j as u64));
        match self.sampler {
            Sampler::Bayes => {
                let dp = k.predictive(Channel::Protein).expect("checked at root");
                let di = k.predictive(Channel::Impurity).expect("checked at root");
                let tp = StudentT::new(dp.dof).expect("positive dof");
                let ti = StudentT::new(di.dof).expect("positive dof");
                let (sp, si) = (dp.scale_sq.sqrt(), di.scale_sq.sqrt());
                for j in 0..n {
                    let obs = match draw_rng(j) {
                        Some(mut r) => Observation::new(dp.mean + sp * tp.sample(&mut r), di.mean + si * ti.sample(&mut r)),
                        None => Observation::new(dp.mean + sp * tp.sample(rng), di.mean + si * ti.sample(rng)),
                    };
                    sum += self.child(state, &k.update(&obs), &obs, t, depth, rng);
                }
            }
            Sampler::Normal(g) => {
                for j in 0..n {
                    let obs = match draw_rng(j) {
                        Some(mut r) => g.sample(&mut r),
                        None => g.sample(rng),
                    };
                    sum += self.child(state, k, &obs, t, depth, rng);
                }
            }
            Sampler::Discrete(law) => {
                for j in 0..n {
                    let obs = match draw_rng(j) {
                        Some(mut r) => law.sample(&mut r),
                        None => law.sample(rng),
                    };
                    sum += self.child(state, k, &obs, t, depth, rng);
                }
            }
        }
        -self.econ.c_u + self.econ.gamma * sum / n as f64
    }

    fn child(
        &self,
        state: PhysicalState,
        k: &KnowledgeState,
        obs: &Observation,
        t: u32,
        depth: usize,
        rng: &mut SimRng,
    ) -> f64 {
        let (next, class) = clamp_and_classify(&state.grow(obs), t + 1, self.limits);
        self.value(next, class, k, t + 1, depth + 1, rng)
    }
}

/// Sparse-sampling estimate of the continue value at a free-choice state.
pub fn q_continue(
    h: &HyperState,
    cfg: &PlannerConfig,
    truth: Option<&GrowthTruth>,
    econ: &EconomicParams,
    limits: &ProcessLimits,
    rng: &mut SimRng,
) -> Result<f64> {
    let (state, class) = clamp_and_classify(&h.physical, h.t, limits);
    if class.is_forced() {
        return Err(Error::InfeasibleAction("continue value requested at a forced-harvest state"));
    }
    let sampler = make_sampler(&cfg.mode, truth, &h.knowledge)?;
    q_continue_with(&sampler, state, h, cfg, econ, limits, rng)
}

fn q_continue_with(
    sampler: &Sampler,
    state: PhysicalState,
    h: &HyperState,
    cfg: &PlannerConfig,
    econ: &EconomicParams,
    limits: &ProcessLimits,
    rng: &mut SimRng,
) -> Result<f64> {
    let crn_key = if cfg.crn { rng.next_u64() } else { 0 };
    let tree = Tree { cfg, econ, limits, sampler, crn_key };
    Ok(tree.q_continue(state, &h.knowledge, h.t, 0, rng))
}

/// Outcome of one decision, with the values it was based on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub action: Action,
    pub q_harvest: f64,
    /// Absent at forced states.
    pub q_continue: Option<f64>,
    /// The rule that forced a harvest, if any.
    pub forced: Option<TerminalClass>,
}

impl Recommendation {
    pub fn forced(state: &PhysicalState, class: TerminalClass, econ: &EconomicParams) -> Self {
        Self {
            action: Action::Harvest,
            q_harvest: terminal_value(state, class, econ),
            q_continue: None,
            forced: Some(class),
        }
    }
}

/// Harvest iff the exact harvest value is at least the sampled continue value.
pub fn decide(
    h: &HyperState,
    cfg: &PlannerConfig,
    truth: Option<&GrowthTruth>,
    econ: &EconomicParams,
    limits: &ProcessLimits,
    rng: &mut SimRng,
) -> Result<Recommendation> {
    let (state, class) = clamp_and_classify(&h.physical, h.t, limits);
    if class.is_forced() {
        return Ok(Recommendation::forced(&state, class, econ));
    }
    let q_harvest = harvest_reward(state.p, state.i, econ);
    let sampler = make_sampler(&cfg.mode, truth, &h.knowledge)?;
    let qc = q_continue_with(&sampler, state, h, cfg, econ, limits, rng)?;
    Ok(Recommendation {
        action: if q_harvest >= qc { Action::Harvest } else { Action::Continue },
        q_harvest,
        q_continue: Some(qc),
        forced: None,
    })
}

/// Which rule produces an operator-facing recommendation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecommendMode {
    #[default]
    Planner,
    Myopic,
}

/// Reproducible recommendation at `h`: the planner draws from
/// `stream(seed, t)` (plus `nonce` to resample on request). In myopic mode
/// `q_continue` is the value of continuing one period and then harvesting.
#[allow(clippy::too_many_arguments)]
pub fn recommend(
    h: &HyperState,
    cfg: &PlannerConfig,
    mode: RecommendMode,
    truth: Option<&GrowthTruth>,
    econ: &EconomicParams,
    limits: &ProcessLimits,
    seed: u64,
    nonce: u64,
) -> Result<Recommendation> {
    let (state, class) = clamp_and_classify(&h.physical, h.t, limits);
    if class.is_forced() {
        return Ok(Recommendation::forced(&state, class, econ));
    }
    match mode {
        RecommendMode::Planner => {
            let mut rng = stream(seed, (nonce << 32) | u64::from(h.t));
            decide(h, cfg, truth, econ, limits, &mut rng)
        }
        RecommendMode::Myopic => {
            let q_harvest = harvest_reward(state.p, state.i, econ);
            let hv = crate::myopic::h_tilde(state.p, state.i, &h.knowledge, econ, limits)?;
            Ok(Recommendation {
                action: if hv >= 0.0 { Action::Harvest } else { Action::Continue },
                q_harvest,
                q_continue: Some(q_harvest - hv),
                forced: None,
            })
        }
    }
}

/// One epoch of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStep {
    pub t: u32,
    pub p: f64,
    pub i: f64,
    pub action: Action,
    pub reward: f64,
    pub class: TerminalClass,
    /// Knowledge at the time of the decision.
    pub knowledge: KnowledgeState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub steps: Vec<EpisodeStep>,
    pub stopping_time: u32,
    pub total_reward: f64,
    pub final_class: TerminalClass,
    /// Knowledge after the last growth observation.
    pub final_knowledge: KnowledgeState,
}

impl EpisodeRecord {
    pub fn failed(&self) -> bool {
        self.final_class == TerminalClass::Failed
    }
}

/// Online control loop against the true process with an arbitrary policy.
///
/// The policy is consulted only at free-choice states. Knowledge is updated
/// with every realised growth pair except the one that ends in failure.
pub fn run_episode_with<P>(
    initial: &KnowledgeState,
    truth: &GrowthTruth,
    econ: &EconomicParams,
    limits: &ProcessLimits,
    process_rng: &mut SimRng,
    mut policy: P,
) -> Result<EpisodeRecord>
where
    P: FnMut(&HyperState) -> Result<Action>,
{
    let mut raw = limits.initial_state();
    let mut k = *initial;
    let mut t = 0u32;
    let mut total = 0.0;
    let mut discount = 1.0;
    let mut steps = Vec::new();
    loop {
        let (state, class) = clamp_and_classify(&raw, t, limits);
        let action = if class.is_forced() {
            Action::Harvest
        } else {
            policy(&HyperState::new(state, k, t))?
        };
        if action == Action::Harvest {
            let reward = terminal_value(&state, class, econ);
            total += discount * reward;
            steps.push(EpisodeStep { t, p: state.p, i: state.i, action, reward, class, knowledge: k });
            return Ok(EpisodeRecord {
                steps,
                stopping_time: t,
                total_reward: total,
                final_class: class,
                final_knowledge: k,
            });
        }
        total -= discount * econ.c_u;
        steps.push(EpisodeStep { t, p: state.p, i: state.i, action, reward: -econ.c_u, class, knowledge: k });
        let (next, obs) = step_true(&state, truth, process_rng);
        if next.i < limits.i_bar {
            k = k.update(&obs);
        }
        raw = next;
        t += 1;
        discount *= econ.gamma;
    }
}

/// Run one batch with the sparse-sampling planner making every free decision.
pub fn run_episode(
    initial: &KnowledgeState,
    truth: &GrowthTruth,
    cfg: &PlannerConfig,
    econ: &EconomicParams,
    limits: &ProcessLimits,
    process_rng: &mut SimRng,
    planner_rng: &mut SimRng,
) -> Result<EpisodeRecord> {
    run_episode_with(initial, truth, econ, limits, process_rng, |h| {
        Ok(decide(h, cfg, Some(truth), econ, limits, planner_rng)?.action)
    })
}
