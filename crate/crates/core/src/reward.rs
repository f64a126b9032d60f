//! Stage rewards, terminal values, and the survival-probability primitives
//! behind the control-limit condition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::PredictiveDist;
use crate::model::{EconomicParams, PhysicalState, ProcessLimits, TerminalClass};
use crate::stats::phi_cdf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Action {
    Continue,
    Harvest,
}

impl Action {
    pub fn label(self) -> &'static str {
        match self {
            Action::Continue => "CONTINUE",
            Action::Harvest => "HARVEST",
        }
    }
}

/// `c0 + c1·p − c2·i`. Only meaningful for `i < Ī`; failed batches pay
/// `−r_f` through [`terminal_value`].
pub fn harvest_reward(p: f64, i: f64, econ: &EconomicParams) -> f64 {
    econ.c0 + econ.c1 * p - econ.c2 * i
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub reward: f64,
    pub terminal: bool,
    pub class: TerminalClass,
}

pub fn stage_reward(
    state: &PhysicalState,
    action: Action,
    class: TerminalClass,
    econ: &EconomicParams,
) -> Result<StageOutcome> {
    match (action, class) {
        (Action::Continue, TerminalClass::FreeChoice) => Ok(StageOutcome {
            reward: -econ.c_u,
            terminal: false,
            class,
        }),
        (Action::Continue, _) => Err(Error::InfeasibleAction(
            "continue requested at a forced-harvest state",
        )),
        (Action::Harvest, _) => Ok(StageOutcome {
            reward: terminal_value(state, class, econ),
            terminal: true,
            class,
        }),
    }
}

/// Reward collected when the batch ends at `state`.
pub fn terminal_value(state: &PhysicalState, class: TerminalClass, econ: &EconomicParams) -> f64 {
    if class == TerminalClass::Failed {
        -econ.r_f
    } else {
        harvest_reward(state.p, state.i, econ)
    }
}

/// One-period log-growth distribution used for survival probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GrowthLaw {
    Normal { mean: f64, sd: f64 },
    StudentT(PredictiveDist),
}

impl GrowthLaw {
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            GrowthLaw::Normal { mean, sd } => {
                if sd > 0.0 {
                    phi_cdf((x - mean) / sd)
                } else if x >= mean {
                    1.0
                } else {
                    0.0
                }
            }
            GrowthLaw::StudentT(d) => d.cdf(x),
        }
    }
}

/// `Pr(i·e^Ψ < Ī) = F(ln Ī − ln i)`.
pub fn survival_probability(i: f64, law: &GrowthLaw, i_bar: f64) -> f64 {
    law.cdf(i_bar.ln() - i.ln())
}

/// Right-hand side minus left-hand side of the control-limit condition
/// `c2(i⁺ − i⁻) ≤ γ r_f [S(i⁻) − S(i⁺)] − γ c1 P̄ S(i⁻)`. Non-negative means
/// the condition holds.
pub fn control_limit_margin(
    i_minus: f64,
    i_plus: f64,
    law: &GrowthLaw,
    econ: &EconomicParams,
    limits: &ProcessLimits,
) -> f64 {
    let s_minus = survival_probability(i_minus, law, limits.i_bar);
    let s_plus = survival_probability(i_plus, law, limits.i_bar);
    let rhs = econ.gamma * econ.r_f * (s_minus - s_plus) - econ.gamma * econ.c1 * limits.p_bar * s_minus;
    rhs - econ.c2 * (i_plus - i_minus)
}

pub fn control_limit_condition(
    i_minus: f64,
    i_plus: f64,
    law: &GrowthLaw,
    econ: &EconomicParams,
    limits: &ProcessLimits,
) -> bool {
    control_limit_margin(i_minus, i_plus, law, econ, limits) >= 0.0
}

/// Fraction of grid pairs `i⁻ < i⁺` in `[i0, Ī)` satisfying the control-limit
/// condition.
pub fn control_limit_sweep(
    law: &GrowthLaw,
    econ: &EconomicParams,
    limits: &ProcessLimits,
    points: usize,
) -> f64 {
    let grid: Vec<f64> = (0..points)
        .map(|k| limits.i0 + (limits.i_bar - limits.i0) * k as f64 / points as f64)
        .collect();
    let (mut ok, mut total) = (0usize, 0usize);
    for (a, &lo) in grid.iter().enumerate() {
        for &hi in &grid[a + 1..] {
            total += 1;
            if control_limit_condition(lo, hi, law, econ, limits) {
                ok += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        ok as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GrowthTruth, ProcessLimits};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn econ() -> EconomicParams {
        EconomicParams::case_study()
    }

    #[test]
    fn harvest_reward_examples() {
        assert_eq!(harvest_reward(1.5, 2.0, &econ()), 13.0);
        assert_eq!(harvest_reward(30.0, 0.0, &econ()), 300.0);
        assert_relative_eq!(harvest_reward(20.0, 50.0 - 1e-9, &econ()), 150.0, epsilon = 1e-8);
    }

    #[test]
    fn stage_reward_branches() {
        let s = PhysicalState::new(30.0, 10.0);
        let c = stage_reward(&s, Action::Continue, TerminalClass::FreeChoice, &econ()).unwrap();
        assert_eq!((c.reward, c.terminal), (-2.0, false));
        let f = stage_reward(&PhysicalState::new(5.0, 50.0), Action::Harvest, TerminalClass::Failed, &econ())
            .unwrap();
        assert_eq!((f.reward, f.terminal), (-880.0, true));
        let h = stage_reward(&s, Action::Harvest, TerminalClass::ForcedHarvestCapacity, &econ()).unwrap();
        assert_eq!((h.reward, h.terminal), (290.0, true));
        assert!(stage_reward(&s, Action::Continue, TerminalClass::ForcedHarvestTime, &econ()).is_err());
        assert_eq!(terminal_value(&s, TerminalClass::ForcedHarvestCapacity, &econ()), 290.0);
    }

    #[test]
    fn survival_examples() {
        let zero = GrowthLaw::Normal { mean: 0.0, sd: 0.3 };
        assert_relative_eq!(survival_probability(50.0, &zero, 50.0), 0.5);
        let t = GrowthTruth::case_study();
        let law = GrowthLaw::Normal { mean: t.mu_i, sd: t.sigma_i };
        let s = survival_probability(2.0, &law, 50.0);
        assert!(s > 1.0 - 1e-12);
        let mut last = 1.0;
        for k in 1..500 {
            let v = survival_probability(k as f64 * 0.1, &law, 50.0);
            assert!(v <= last);
            last = v;
        }
        assert!(survival_probability(30.0, &law, 60.0) > survival_probability(30.0, &law, 50.0));
    }

    #[test]
    fn t_law_survival_approaches_normal() {
        let d = PredictiveDist { mean: 0.488, dof: 1e6, scale_sq: 0.144f64.powi(2) };
        let n = GrowthLaw::Normal { mean: 0.488, sd: 0.144 };
        for i in [20.0, 30.0, 35.0, 40.0] {
            let a = survival_probability(i, &GrowthLaw::StudentT(d), 50.0);
            let b = survival_probability(i, &n, 50.0);
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn control_limit_examples() {
        let limits = ProcessLimits::case_study();
        let t = GrowthTruth::case_study();
        let law = GrowthLaw::Normal { mean: t.mu_i, sd: t.sigma_i };
        assert!(!control_limit_condition(2.0, 2.001, &law, &econ(), &limits));
        let mut rich = econ();
        rich.r_f = 1e9;
        assert!(control_limit_condition(40.0, 45.0, &law, &rich, &limits));
        let frac = control_limit_sweep(&law, &econ(), &limits, 40);
        assert!((0.0..1.0).contains(&frac));
    }

    proptest! {
        #[test]
        fn failure_always_worse_than_harvest(p in 0.01f64..30.0, i in 0.0f64..50.0) {
            let e = econ();
            prop_assert!(harvest_reward(p, i, &e) > -e.r_f);
        }

        #[test]
        fn harvest_reward_is_affine(p in 0.0f64..30.0, i in 0.0f64..50.0, dp in -1.0f64..1.0, di in -1.0f64..1.0) {
            let e = econ();
            let d = harvest_reward(p + dp, i + di, &e) - harvest_reward(p, i, &e);
            prop_assert!((d - (e.c1 * dp - e.c2 * di)).abs() < 1e-9);
        }
    }
}
