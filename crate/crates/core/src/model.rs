//! Ground-truth fermentation dynamics and the rules that force a harvest.
//!
//! Protein and impurity grow multiplicatively with i.i.d. normal log-growth
//! rates: `p' = p·e^φ`, `i' = i·e^ψ`. A state that overshoots a limit is
//! clamped to it; impurity at or above the failure limit is a lost batch.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Protein and impurity mass (grams) at a decision epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalState {
    pub p: f64,
    pub i: f64,
}

impl PhysicalState {
    pub fn new(p: f64, i: f64) -> Self {
        Self { p, i }
    }

    /// Log growth ratios `(ln p'/p, ln i'/i)` from `self` to `next`.
    pub fn log_ratio(&self, next: &PhysicalState) -> Observation {
        Observation {
            phi: (next.p / self.p).ln(),
            psi: (next.i / self.i).ln(),
        }
    }

    pub fn grow(&self, obs: &Observation) -> PhysicalState {
        PhysicalState {
            p: self.p * obs.phi.exp(),
            i: self.i * obs.psi.exp(),
        }
    }
}

/// Mean and standard deviation of the per-period log-growth of each channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthTruth {
    pub mu_p: f64,
    pub sigma_p: f64,
    pub mu_i: f64,
    pub sigma_i: f64,
}

impl GrowthTruth {
    pub fn new(mu_p: f64, sigma_p: f64, mu_i: f64, sigma_i: f64) -> Self {
        Self {
            mu_p,
            sigma_p,
            mu_i,
            sigma_i,
        }
    }

    /// Growth parameters of the reference production process.
    pub fn case_study() -> Self {
        Self::new(0.488, 0.144, 0.488, 0.144)
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [("mu_p", self.mu_p), ("mu_i", self.mu_i)] {
            if !v.is_finite() {
                return Err(Error::invalid(field, "must be finite"));
            }
        }
        for (field, v) in [("sigma_p", self.sigma_p), ("sigma_i", self.sigma_i)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(field, "must be finite and non-negative"));
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Observation {
        let zp: f64 = rng.sample(StandardNormal);
        let zi: f64 = rng.sample(StandardNormal);
        Observation {
            phi: self.mu_p + self.sigma_p * zp,
            psi: self.mu_i + self.sigma_i * zi,
        }
    }
}

/// Harvest limit, failure limit, horizon, and seed amounts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessLimits {
    pub p_bar: f64,
    pub i_bar: f64,
    pub t_bar: u32,
    pub p0: f64,
    pub i0: f64,
}

impl ProcessLimits {
    pub fn case_study() -> Self {
        Self {
            p_bar: 30.0,
            i_bar: 50.0,
            t_bar: 8,
            p0: 1.5,
            i0: 2.0,
        }
    }

    pub fn initial_state(&self) -> PhysicalState {
        PhysicalState::new(self.p0, self.i0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p0 > 0.0 && self.p0 < self.p_bar) {
            return Err(Error::invalid("p0", "need 0 < p0 < p_bar"));
        }
        if !(self.i0 > 0.0 && self.i0 < self.i_bar) {
            return Err(Error::invalid("i0", "need 0 < i0 < i_bar"));
        }
        if self.t_bar < 1 {
            return Err(Error::invalid("t_bar", "need t_bar >= 1"));
        }
        Ok(())
    }
}

/// Rewards and costs: `r_h(p, i) = c0 + c1·p − c2·i`, `c_u` per continued
/// period, `r_f` for a failed batch, discount `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EconomicParams {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c_u: f64,
    pub r_f: f64,
    pub gamma: f64,
}

impl EconomicParams {
    /// `r_h = 10p − i`, `c_u = 2`, `r_f = 880`, undiscounted.
    pub fn case_study() -> Self {
        Self {
            c0: 0.0,
            c1: 10.0,
            c2: 1.0,
            c_u: 2.0,
            r_f: 880.0,
            gamma: 1.0,
        }
    }

    /// Multiply every monetary coefficient by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            c0: self.c0 * k,
            c1: self.c1 * k,
            c2: self.c2 * k,
            c_u: self.c_u * k,
            r_f: self.r_f * k,
            gamma: self.gamma,
        }
    }

    /// `c0` may be zero (the reference process has no lump-sum reward); the
    /// other coefficients must be positive and a failure must cost more than
    /// the worst harvest.
    pub fn validate(&self, limits: &ProcessLimits) -> Result<()> {
        if !(self.c0 >= 0.0) {
            return Err(Error::invalid("c0", "must be non-negative"));
        }
        for (field, v) in [("c1", self.c1), ("c2", self.c2), ("c_u", self.c_u), ("r_f", self.r_f)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(field, "must be positive"));
            }
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::invalid("gamma", "must lie in (0, 1]"));
        }
        if self.r_f <= self.c2 * limits.i_bar {
            return Err(Error::invalid("r_f", "must exceed c2 * i_bar"));
        }
        Ok(())
    }
}

/// One realised pair of log-growth rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub phi: f64,
    pub psi: f64,
}

impl Observation {
    pub fn new(phi: f64, psi: f64) -> Self {
        Self { phi, psi }
    }
}

/// Which actions are available at a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TerminalClass {
    #[serde(rename = "free")]
    FreeChoice,
    #[serde(rename = "capacity")]
    ForcedHarvestCapacity,
    #[serde(rename = "failure")]
    Failed,
    #[serde(rename = "time")]
    ForcedHarvestTime,
}

impl TerminalClass {
    pub fn is_forced(self) -> bool {
        self != TerminalClass::FreeChoice
    }

    pub fn label(self) -> &'static str {
        match self {
            TerminalClass::FreeChoice => "free",
            TerminalClass::ForcedHarvestCapacity => "capacity",
            TerminalClass::Failed => "failure",
            TerminalClass::ForcedHarvestTime => "time",
        }
    }
}

/// Advance one period under the true growth law. The returned state is not
/// clamped; the observation carries the sampled log-growth rates.
pub fn step_true<R: Rng + ?Sized>(
    state: &PhysicalState,
    truth: &GrowthTruth,
    rng: &mut R,
) -> (PhysicalState, Observation) {
    let obs = truth.sample(rng);
    (state.grow(&obs), obs)
}

/// Clamp an (possibly overshooting) state to the limits and classify it.
///
/// Failure dominates capacity when both limits are crossed.
pub fn clamp_and_classify(
    state: &PhysicalState,
    t: u32,
    limits: &ProcessLimits,
) -> (PhysicalState, TerminalClass) {
    let mut clamped = *state;
    let failed = state.i >= limits.i_bar;
    let capped = state.p >= limits.p_bar;
    if failed {
        clamped.i = limits.i_bar;
    }
    if capped {
        clamped.p = limits.p_bar;
    }
    let class = if failed {
        TerminalClass::Failed
    } else if capped {
        TerminalClass::ForcedHarvestCapacity
    } else if t >= limits.t_bar {
        TerminalClass::ForcedHarvestTime
    } else {
        TerminalClass::FreeChoice
    };
    (clamped, class)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use approx::assert_relative_eq;

    #[test]
    fn zero_growth_is_identity() {
        let truth = GrowthTruth::new(0.0, 0.0, 0.0, 0.0);
        let (next, obs) = step_true(&PhysicalState::new(2.0, 3.0), &truth, &mut seeded(1));
        assert_eq!(next, PhysicalState::new(2.0, 3.0));
        assert_eq!(obs, Observation::new(0.0, 0.0));
    }

    #[test]
    fn deterministic_growth_exponentiates() {
        let truth = GrowthTruth::new(0.488, 0.0, 0.0, 0.0);
        let (next, _) = step_true(&PhysicalState::new(1.5, 1.0), &truth, &mut seeded(1));
        assert_relative_eq!(next.p, 1.5 * 0.488f64.exp(), epsilon = 1e-12);
        assert!((next.p - 2.443).abs() < 1e-3);
    }

    #[test]
    fn sampled_mean_matches_truth() {
        let truth = GrowthTruth::case_study();
        let mut rng = seeded(42);
        let n = 100_000;
        let s = PhysicalState::new(1.0, 1.0);
        let mean = (0..n).map(|_| step_true(&s, &truth, &mut rng).1.phi).sum::<f64>() / n as f64;
        let se = 0.144 / (n as f64).sqrt();
        assert!((mean - 0.488).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn same_seed_same_step() {
        let truth = GrowthTruth::case_study();
        let s = PhysicalState::new(1.5, 2.0);
        let a = step_true(&s, &truth, &mut seeded(9));
        let b = step_true(&s, &truth, &mut seeded(9));
        assert_eq!(a, b);
    }

    #[test]
    fn log_ratio_recovers_sample() {
        let truth = GrowthTruth::case_study();
        let mut rng = seeded(3);
        let s = PhysicalState::new(1.5, 2.0);
        for _ in 0..100 {
            let (next, obs) = step_true(&s, &truth, &mut rng);
            let back = s.log_ratio(&next);
            assert!((back.phi - obs.phi).abs() < 1e-12);
            assert!((back.psi - obs.psi).abs() < 1e-12);
        }
    }

    #[test]
    fn classification_examples() {
        let lim = ProcessLimits::case_study();
        let (s, c) = clamp_and_classify(&PhysicalState::new(30.0, 10.0), 3, &lim);
        assert_eq!(c, TerminalClass::ForcedHarvestCapacity);
        assert_eq!(s.p, 30.0);
        let (s, c) = clamp_and_classify(&PhysicalState::new(5.0, 50.0), 3, &lim);
        assert_eq!(c, TerminalClass::Failed);
        assert_eq!(s.i, 50.0);
        let (_, c) = clamp_and_classify(&PhysicalState::new(5.0, 10.0), 8, &lim);
        assert_eq!(c, TerminalClass::ForcedHarvestTime);
        let (_, c) = clamp_and_classify(&PhysicalState::new(5.0, 10.0), 7, &lim);
        assert_eq!(c, TerminalClass::FreeChoice);
    }

    #[test]
    fn overshoot_is_clamped_and_failure_dominates() {
        let lim = ProcessLimits::case_study();
        let (s, c) = clamp_and_classify(&PhysicalState::new(45.0, 80.0), 2, &lim);
        assert_eq!(c, TerminalClass::Failed);
        assert_eq!(s, PhysicalState::new(30.0, 50.0));
    }

    #[test]
    fn limits_and_economics_validate() {
        let lim = ProcessLimits::case_study();
        assert!(lim.validate().is_ok());
        assert!(EconomicParams::case_study().validate(&lim).is_ok());
        let mut econ = EconomicParams::case_study();
        econ.r_f = 40.0;
        assert!(econ.validate(&lim).is_err());
        let bad = ProcessLimits { p0: 31.0, ..lim };
        assert!(bad.validate().is_err());
    }
}
