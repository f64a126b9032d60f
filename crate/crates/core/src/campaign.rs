//! Campaigns: consecutive batches in one reactor over a fixed horizon `L`,
//! separated by setups of random length.
//!
//! After a harvest at epoch `t` the setup lasts `S ~ setup_pmf` periods and
//! the next batch starts at `t + S`. The `S − 1` epochs in between are setup
//! epochs, each charged `c_s`. Knowledge carries over from batch to batch.
//!
//! The planner is a depth-limited version of the single-batch sparse
//! sampler: growth is sampled `K` times per node, setup transitions are
//! expanded exactly, and nodes past the lookahead depth are valued by one
//! rollout of the myopic rule.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::KnowledgeState;
use crate::model::{
    clamp_and_classify, EconomicParams, GrowthTruth, PhysicalState, ProcessLimits, TerminalClass,
};
use crate::myopic::h_value;
use crate::planner::{make_sampler, DiscreteLaw, PlannerConfig, Sampler};
use crate::reward::{terminal_value, Action};
use crate::rng::{replication, Purpose, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignParams {
    /// Horizon `L` in periods.
    pub campaign_length: u32,
    /// `setup_pmf[s − 1] = P(S = s)`.
    pub setup_pmf: Vec<f64>,
    /// Cost per setup epoch.
    pub setup_cost: f64,
    /// Growth samples per planner node.
    pub branch_k: usize,
    /// Epochs expanded before switching to a myopic rollout.
    pub lookahead_depth: usize,
}

impl Default for CampaignParams {
    fn default() -> Self {
        Self {
            campaign_length: 20,
            setup_pmf: vec![0.2, 0.5, 0.3],
            setup_cost: 1.0,
            branch_k: 4,
            lookahead_depth: 3,
        }
    }
}

impl CampaignParams {
    pub fn validate(&self) -> Result<()> {
        if self.campaign_length < 1 {
            return Err(Error::invalid("campaign.campaign_length", "must be at least 1"));
        }
        let total: f64 = self.setup_pmf.iter().sum();
        if self.setup_pmf.is_empty()
            || self.setup_pmf.iter().any(|p| !(*p >= 0.0))
            || (total - 1.0).abs() > 1e-9
        {
            return Err(Error::invalid(
                "campaign.setup_pmf",
                "probabilities must be non-negative and sum to 1",
            ));
        }
        if !(self.setup_cost >= 0.0) {
            return Err(Error::invalid("campaign.setup_cost", "must be non-negative"));
        }
        if self.branch_k < 1 {
            return Err(Error::invalid("campaign.branch_k", "must be at least 1"));
        }
        if self.lookahead_depth < 1 {
            return Err(Error::invalid("campaign.lookahead_depth", "must be at least 1"));
        }
        Ok(())
    }

    /// `P(S = τ+1 | S > τ)`. Zero past the support.
    pub fn hazard(&self, tau: u32) -> f64 {
        let tau = tau as usize;
        let tail: f64 = self.setup_pmf.iter().skip(tau).sum();
        match self.setup_pmf.get(tau) {
            Some(&p) if tail > 0.0 => (p / tail).min(1.0),
            _ => 1.0,
        }
    }

    pub fn max_setup(&self) -> usize {
        self.setup_pmf.len()
    }
}

/// Reactor status at a campaign epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CampaignState {
    /// Present iff a batch is live. May overshoot the limits; classified on use.
    pub physical: Option<PhysicalState>,
    /// Setup in progress.
    pub delta: bool,
    /// Age of the current batch, or setup epochs elapsed.
    pub tau: u32,
    pub t: u32,
}

impl CampaignState {
    pub fn start(limits: &ProcessLimits) -> Self {
        Self::fresh(limits, 0)
    }

    fn fresh(limits: &ProcessLimits, t: u32) -> Self {
        Self { physical: Some(limits.initial_state()), delta: false, tau: 0, t }
    }

    /// Clamped physical state and class of a live batch.
    pub fn batch(&self, limits: &ProcessLimits) -> Option<(PhysicalState, TerminalClass)> {
        self.physical.map(|raw| clamp_and_classify(&raw, self.tau, limits))
    }

    pub fn validate(&self, params: &CampaignParams, limits: &ProcessLimits) -> Result<()> {
        if self.delta == self.physical.is_some() {
            return Err(Error::invalid("campaign.state", "setup flag and physical state disagree"));
        }
        if self.tau as usize > params.max_setup().max(limits.t_bar as usize) {
            return Err(Error::invalid("campaign.state.tau", "exceeds the longest activity"));
        }
        if self.t > params.campaign_length {
            return Err(Error::invalid("campaign.state.t", "past the campaign horizon"));
        }
        Ok(())
    }
}

/// Reward of `action` at a non-terminal epoch.
pub fn campaign_reward(
    state: &CampaignState,
    action: Action,
    econ: &EconomicParams,
    setup_cost: f64,
    limits: &ProcessLimits,
) -> Result<f64> {
    match (state.batch(limits), action) {
        (None, Action::Continue) => Ok(-setup_cost),
        (None, Action::Harvest) => Err(Error::InfeasibleAction("harvest during setup")),
        (Some((_, class)), Action::Continue) if class.is_forced() => {
            Err(Error::InfeasibleAction("continue requested at a forced-harvest state"))
        }
        (Some(_), Action::Continue) => Ok(-econ.c_u),
        (Some((s, class)), Action::Harvest) => Ok(terminal_value(&s, class, econ)),
    }
}

/// Value collected at `t = L`: the live batch is harvested, a setup pays 0.
pub fn campaign_terminal_value(state: &CampaignState, econ: &EconomicParams, limits: &ProcessLimits) -> f64 {
    match state.batch(limits) {
        Some((s, class)) => terminal_value(&s, class, econ),
        None => 0.0,
    }
}

/// State after a harvest at epoch `t`, once setup-completion is known.
fn after_harvest(t: u32, ends: bool, limits: &ProcessLimits) -> CampaignState {
    if ends {
        CampaignState::fresh(limits, t + 1)
    } else {
        CampaignState { physical: None, delta: true, tau: 1, t: t + 1 }
    }
}

fn after_setup(state: &CampaignState, ends: bool, limits: &ProcessLimits) -> CampaignState {
    if ends {
        CampaignState::fresh(limits, state.t + 1)
    } else {
        CampaignState { tau: state.tau + 1, t: state.t + 1, ..*state }
    }
}

fn after_growth(state: &CampaignState, raw: PhysicalState) -> CampaignState {
    CampaignState { physical: Some(raw), delta: false, tau: state.tau + 1, t: state.t + 1 }
}

fn learn(k: &KnowledgeState, raw: &PhysicalState, obs: &crate::model::Observation, limits: &ProcessLimits) -> KnowledgeState {
    if raw.i < limits.i_bar {
        k.update(obs)
    } else {
        *k
    }
}

/// Result of one campaign transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: CampaignState,
    pub knowledge: KnowledgeState,
}

/// Advance one epoch. Growth is drawn from `sampler`, setup completion from
/// the hazard. Knowledge absorbs every growth pair except one ending in
/// failure.
pub fn campaign_transition<R: Rng + ?Sized>(
    state: &CampaignState,
    action: Action,
    knowledge: &KnowledgeState,
    sampler: &Sampler,
    params: &CampaignParams,
    limits: &ProcessLimits,
    rng: &mut R,
) -> Result<Transition> {
    let next = match (state.batch(limits), action) {
        (None, Action::Harvest) => return Err(Error::InfeasibleAction("harvest during setup")),
        (None, Action::Continue) => {
            let ends = rng.random::<f64>() < params.hazard(state.tau);
            Transition { state: after_setup(state, ends, limits), knowledge: *knowledge }
        }
        (Some((_, class)), Action::Continue) if class.is_forced() => {
            return Err(Error::InfeasibleAction("continue requested at a forced-harvest state"))
        }
        (Some((s, _)), Action::Continue) => {
            let obs = sampler.draw(knowledge, rng)?;
            let raw = s.grow(&obs);
            Transition { state: after_growth(state, raw), knowledge: learn(knowledge, &raw, &obs, limits) }
        }
        (Some(_), Action::Harvest) => {
            let ends = rng.random::<f64>() < params.hazard(0);
            Transition { state: after_harvest(state.t, ends, limits), knowledge: *knowledge }
        }
    };
    Ok(next)
}

/// Draw one setup length by running the hazard chain.
pub fn sample_setup_length<R: Rng + ?Sized>(params: &CampaignParams, rng: &mut R) -> usize {
    let mut tau = 0u32;
    loop {
        if rng.random::<f64>() < params.hazard(tau) {
            return tau as usize + 1;
        }
        tau += 1;
    }
}

struct Planner<'a> {
    params: &'a CampaignParams,
    econ: &'a EconomicParams,
    limits: &'a ProcessLimits,
    sampler: &'a Sampler,
}

impl Planner<'_> {
    fn value(&self, s: &CampaignState, k: &KnowledgeState, depth: usize, rng: &mut SimRng) -> Result<f64> {
        if s.t >= self.params.campaign_length {
            return Ok(campaign_terminal_value(s, self.econ, self.limits));
        }
        if depth >= self.params.lookahead_depth {
            return self.rollout(s, k, rng);
        }
        match s.batch(self.limits) {
            None => {
                let h = self.params.hazard(s.tau);
                let v = self.mix(h, |me, ends, rng| me.value(&after_setup(s, ends, me.limits), k, depth + 1, rng), rng)?;
                Ok(-self.params.setup_cost + self.econ.gamma * v)
            }
            Some((p, class)) => {
                let qh = self.q_harvest(s, p, class, k, depth, rng)?;
                if class.is_forced() {
                    return Ok(qh);
                }
                Ok(qh.max(self.q_continue(s, p, k, depth, rng)?))
            }
        }
    }

    /// `h·f(true) + (1 − h)·f(false)`, skipping impossible branches.
    fn mix<F>(&self, h: f64, mut f: F, rng: &mut SimRng) -> Result<f64>
    where
        F: FnMut(&Self, bool, &mut SimRng) -> Result<f64>,
    {
        let mut v = 0.0;
        if h > 0.0 {
            v += h * f(self, true, rng)?;
        }
        if h < 1.0 {
            v += (1.0 - h) * f(self, false, rng)?;
        }
        Ok(v)
    }

    fn q_harvest(
        &self,
        s: &CampaignState,
        p: PhysicalState,
        class: TerminalClass,
        k: &KnowledgeState,
        depth: usize,
        rng: &mut SimRng,
    ) -> Result<f64> {
        let h = self.params.hazard(0);
        let v = self.mix(h, |me, ends, rng| me.value(&after_harvest(s.t, ends, me.limits), k, depth + 1, rng), rng)?;
        Ok(terminal_value(&p, class, self.econ) + self.econ.gamma * v)
    }

    fn q_continue(
        &self,
        s: &CampaignState,
        p: PhysicalState,
        k: &KnowledgeState,
        depth: usize,
        rng: &mut SimRng,
    ) -> Result<f64> {
        let n = self.params.branch_k;
        let mut sum = 0.0;
        for _ in 0..n {
            let obs = self.sampler.draw(k, rng)?;
            let raw = p.grow(&obs);
            let k2 = match self.sampler {
                Sampler::Bayes => learn(k, &raw, &obs, self.limits),
                _ => *k,
            };
            sum += self.value(&after_growth(s, raw), &k2, depth + 1, rng)?;
        }
        Ok(-self.econ.c_u + self.econ.gamma * sum / n as f64)
    }

    /// One simulated path to `L` under the myopic rule.
    fn rollout(&self, s: &CampaignState, k: &KnowledgeState, rng: &mut SimRng) -> Result<f64> {
        let (mut s, mut k) = (*s, *k);
        let (mut total, mut disc) = (0.0, 1.0);
        while s.t < self.params.campaign_length {
            let action = myopic_action(&s, &self.sampler.moments(&k)?, self.econ, self.limits)?;
            total += disc * campaign_reward(&s, action, self.econ, self.params.setup_cost, self.limits)?;
            let next = campaign_transition(&s, action, &k, self.sampler, self.params, self.limits, rng)?;
            if matches!(self.sampler, Sampler::Bayes) {
                k = next.knowledge;
            }
            s = next.state;
            disc *= self.econ.gamma;
        }
        Ok(total + disc * campaign_terminal_value(&s, self.econ, self.limits))
    }
}

/// Single-batch myopic rule lifted to campaign states.
fn myopic_action(
    s: &CampaignState,
    g: &GrowthTruth,
    econ: &EconomicParams,
    limits: &ProcessLimits,
) -> Result<Action> {
    Ok(match s.batch(limits) {
        None => Action::Continue,
        Some((_, class)) if class.is_forced() => Action::Harvest,
        Some((p, _)) => {
            if h_value(p.p, p.i, g, econ, limits)? >= 0.0 {
                Action::Harvest
            } else {
                Action::Continue
            }
        }
    })
}

/// A campaign decision with the values it was based on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CampaignDecision {
    pub action: Action,
    /// Absent during setup.
    pub q_harvest: Option<f64>,
    /// Absent at forced states.
    pub q_continue: Option<f64>,
}

/// Lookahead decision at a campaign state.
pub fn campaign_decide(
    state: &CampaignState,
    knowledge: &KnowledgeState,
    sampler: &Sampler,
    params: &CampaignParams,
    econ: &EconomicParams,
    limits: &ProcessLimits,
    rng: &mut SimRng,
) -> Result<CampaignDecision> {
    let planner = Planner { params, econ, limits, sampler };
    match state.batch(limits) {
        None => Ok(CampaignDecision { action: Action::Continue, q_harvest: None, q_continue: None }),
        Some((p, class)) if class.is_forced() => Ok(CampaignDecision {
            action: Action::Harvest,
            q_harvest: Some(planner.q_harvest(state, p, class, knowledge, 0, rng)?),
            q_continue: None,
        }),
        Some((p, class)) => {
            let qh = planner.q_harvest(state, p, class, knowledge, 0, rng)?;
            let qc = planner.q_continue(state, p, knowledge, 0, rng)?;
            Ok(CampaignDecision {
                action: if qh >= qc { Action::Harvest } else { Action::Continue },
                q_harvest: Some(qh),
                q_continue: Some(qc),
            })
        }
    }
}

/// Exact optimal value under a discrete growth law, by full enumeration.
pub fn exact_value(
    state: &CampaignState,
    law: &DiscreteLaw,
    params: &CampaignParams,
    econ: &EconomicParams,
    limits: &ProcessLimits,
) -> f64 {
    let (qh, qc) = exact_q(state, law, params, econ, limits);
    match (qh, qc) {
        (Some(h), Some(c)) => h.max(c),
        (Some(h), None) => h,
        (None, Some(c)) => c,
        (None, None) => campaign_terminal_value(state, econ, limits),
    }
}

/// Exact `(Q_H, Q_C)`; `None` where the action is unavailable. Both are
/// `None` at the horizon.
pub fn exact_q(
    state: &CampaignState,
    law: &DiscreteLaw,
    params: &CampaignParams,
    econ: &EconomicParams,
    limits: &ProcessLimits,
) -> (Option<f64>, Option<f64>) {
    if state.t >= params.campaign_length {
        return (None, None);
    }
    let v = |s: &CampaignState| exact_value(s, law, params, econ, limits);
    let mix = |h: f64, f: &dyn Fn(bool) -> f64| {
        let mut out = 0.0;
        if h > 0.0 {
            out += h * f(true);
        }
        if h < 1.0 {
            out += (1.0 - h) * f(false);
        }
        out
    };
    match state.batch(limits) {
        None => {
            let h = params.hazard(state.tau);
            let c = -params.setup_cost + econ.gamma * mix(h, &|ends| v(&after_setup(state, ends, limits)));
            (None, Some(c))
        }
        Some((p, class)) => {
            let h = params.hazard(0);
            let qh = terminal_value(&p, class, econ)
                + econ.gamma * mix(h, &|ends| v(&after_harvest(state.t, ends, limits)));
            if class.is_forced() {
                return (Some(qh), None);
            }
            let cont: f64 = law
                .outcomes()
                .map(|(obs, prob)| prob * v(&after_growth(state, p.grow(&obs))))
                .sum();
            (Some(qh), Some(-econ.c_u + econ.gamma * cont))
        }
    }
}

/// One completed or truncated batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub start: u32,
    pub end: u32,
    pub growth_periods: u32,
    /// Harvest reward, or `−r_f` on failure.
    pub reward: f64,
    pub class: TerminalClass,
    /// Observations absorbed when the batch started (`ν` of the protein channel).
    pub nu_at_start: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CampaignStep {
    pub t: u32,
    pub delta: bool,
    pub tau: u32,
    pub p: Option<f64>,
    pub i: Option<f64>,
    pub action: Action,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignRecord {
    pub steps: Vec<CampaignStep>,
    pub batches: Vec<BatchRecord>,
    /// Lengths of setups that finished before the horizon.
    pub setup_lengths: Vec<usize>,
    pub growth_periods: u32,
    pub setup_periods: u32,
    pub failures: u32,
    pub total_reward: f64,
    pub final_knowledge: KnowledgeState,
}

impl CampaignRecord {
    pub fn batch_count(&self) -> usize {
        self.batches.len()
    }

    /// `Σ harvests − c_u·growth − c_s·setup − r_f·failures`; equals the total
    /// reward when there is no discounting.
    pub fn accounting_total(&self, econ: &EconomicParams, setup_cost: f64) -> f64 {
        let harvests: f64 = self
            .batches
            .iter()
            .filter(|b| b.class != TerminalClass::Failed)
            .map(|b| b.reward)
            .sum();
        harvests
            - econ.c_u * self.growth_periods as f64
            - setup_cost * self.setup_periods as f64
            - econ.r_f * self.failures as f64
    }
}

/// Run one campaign against the true process. `rng` drives growth and
/// setups; `planner_rng` the lookahead.
#[allow(clippy::too_many_arguments)]
pub fn run_campaign_episode(
    knowledge: &KnowledgeState,
    truth: &GrowthTruth,
    params: &CampaignParams,
    planner: &PlannerConfig,
    econ: &EconomicParams,
    limits: &ProcessLimits,
    rng: &mut SimRng,
    planner_rng: &mut SimRng,
) -> Result<CampaignRecord> {
    params.validate()?;
    let world = Sampler::Normal(*truth);
    let mut s = CampaignState::start(limits);
    let mut k = *knowledge;
    let mut rec = CampaignRecord {
        steps: Vec::new(),
        batches: Vec::new(),
        setup_lengths: Vec::new(),
        growth_periods: 0,
        setup_periods: 0,
        failures: 0,
        total_reward: 0.0,
        final_knowledge: k,
    };
    let (mut disc, mut batch_start, mut nu_start) = (1.0, 0u32, k.channel(crate::learning::Channel::Protein).nu);
    let mut setup_started = None;
    let close_batch = |rec: &mut CampaignRecord, s: &CampaignState, start: u32, nu: f64| {
        let (p, class) = s.batch(limits).expect("live batch");
        if class == TerminalClass::Failed {
            rec.failures += 1;
        }
        rec.batches.push(BatchRecord {
            start,
            end: s.t,
            growth_periods: s.tau,
            reward: terminal_value(&p, class, econ),
            class,
            nu_at_start: nu,
        });
    };
    while s.t < params.campaign_length {
        let action = match s.batch(limits) {
            None => Action::Continue,
            Some((_, class)) if class.is_forced() => Action::Harvest,
            Some(_) => {
                let sampler = make_sampler(&planner.mode, Some(truth), &k)?;
                campaign_decide(&s, &k, &sampler, params, econ, limits, planner_rng)?.action
            }
        };
        let reward = campaign_reward(&s, action, econ, params.setup_cost, limits)?;
        let (p, i) = match s.batch(limits) {
            Some((p, _)) => (Some(p.p), Some(p.i)),
            None => (None, None),
        };
        rec.steps.push(CampaignStep { t: s.t, delta: s.delta, tau: s.tau, p, i, action, reward });
        rec.total_reward += disc * reward;
        match (s.delta, action) {
            (true, _) => rec.setup_periods += 1,
            (false, Action::Continue) => rec.growth_periods += 1,
            (false, Action::Harvest) => {
                close_batch(&mut rec, &s, batch_start, nu_start);
                setup_started = Some(s.t);
            }
        }
        let next = campaign_transition(&s, action, &k, &world, params, limits, rng)?;
        if next.state.physical.is_some() && next.state.tau == 0 {
            if let Some(h) = setup_started.take() {
                rec.setup_lengths.push((next.state.t - h) as usize);
            }
            batch_start = next.state.t;
            nu_start = next.knowledge.channel(crate::learning::Channel::Protein).nu;
        }
        s = next.state;
        k = next.knowledge;
        disc *= econ.gamma;
    }
    if s.physical.is_some() {
        let v = campaign_terminal_value(&s, econ, limits);
        close_batch(&mut rec, &s, batch_start, nu_start);
        rec.total_reward += disc * v;
    }
    rec.final_knowledge = k;
    Ok(rec)
}

/// `n` independent campaigns; replication `r` uses streams derived from
/// `(seed, r)` and, if `j0 > 0`, a fresh historical dataset of that size.
#[allow(clippy::too_many_arguments)]
pub fn run_campaigns(
    j0: usize,
    truth: &GrowthTruth,
    params: &CampaignParams,
    planner: &PlannerConfig,
    econ: &EconomicParams,
    limits: &ProcessLimits,
    n: usize,
    seed: u64,
) -> Result<Vec<CampaignRecord>> {
    crate::par::map_range(n, |r| {
        let r = r as u64;
        let k0 = if j0 > 0 {
            crate::learning::fit_improper(&crate::evaluation::historical_data(truth, j0, seed, r))?
        } else {
            KnowledgeState::improper()
        };
        let mut process = replication(seed, r, Purpose::Setup);
        let mut planner_rng = replication(seed, r, Purpose::Planner);
        run_campaign_episode(&k0, truth, params, planner, econ, limits, &mut process, &mut planner_rng)
    })
    .into_iter()
    .collect()
}
