//! Exact backward induction when the growth law has finite support.
//!
//! The recursion enumerates every outcome sequence, so the cost is
//! `|support|^depth`; intended for small horizons as an oracle for the
//! sampled planner.

use crate::model::{clamp_and_classify, EconomicParams, PhysicalState, ProcessLimits};
use crate::planner::DiscreteLaw;
use crate::reward::{harvest_reward, terminal_value};

/// Optimal value of a (possibly overshooting) state at epoch `t`.
pub fn value(
    raw: &PhysicalState,
    t: u32,
    law: &DiscreteLaw,
    econ: &EconomicParams,
    limits: &ProcessLimits,
) -> f64 {
    let (state, class) = clamp_and_classify(raw, t, limits);
    if class.is_forced() {
        return terminal_value(&state, class, econ);
    }
    harvest_reward(state.p, state.i, econ).max(continue_value(&state, t, law, econ, limits))
}

/// Exact `Q(state, C)` at a free-choice state.
pub fn continue_value(
    state: &PhysicalState,
    t: u32,
    law: &DiscreteLaw,
    econ: &EconomicParams,
    limits: &ProcessLimits,
) -> f64 {
    if econ.gamma == 0.0 {
        return -econ.c_u;
    }
    let expected: f64 = law
        .outcomes()
        .map(|(obs, prob)| prob * value(&state.grow(&obs), t + 1, law, econ, limits))
        .sum();
    -econ.c_u + econ.gamma * expected
}

/// Value function on a `(p, i)` grid at epoch `t`: `out[a][b] = V(p[a], i[b])`.
pub fn value_grid(
    p_grid: &[f64],
    i_grid: &[f64],
    t: u32,
    law: &DiscreteLaw,
    econ: &EconomicParams,
    limits: &ProcessLimits,
) -> Vec<Vec<f64>> {
    crate::par::map_slice(p_grid, |&p| {
        i_grid
            .iter()
            .map(|&i| value(&PhysicalState::new(p, i), t, law, econ, limits))
            .collect()
    })
}

/// Shift every support point of both channels.
pub fn shifted(law: &DiscreteLaw, d_phi: f64, d_psi: f64) -> DiscreteLaw {
    DiscreteLaw {
        phi: law.phi.iter().map(|&(v, p)| (v + d_phi, p)).collect(),
        psi: law.psi.iter().map(|&(v, p)| (v + d_psi, p)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TerminalClass;

    fn setup() -> (DiscreteLaw, EconomicParams, ProcessLimits) {
        let law = DiscreteLaw::two_point((0.3, 0.7), (0.2, 0.6));
        let limits = ProcessLimits { p_bar: 30.0, i_bar: 50.0, t_bar: 3, p0: 4.0, i0: 4.0 };
        (law, EconomicParams::case_study(), limits)
    }

    #[test]
    fn one_step_by_hand() {
        let (law, econ, mut limits) = setup();
        limits.t_bar = 1;
        let s = PhysicalState::new(4.0, 4.0);
        let mut expect = 0.0;
        for (a, b) in [(0.3, 0.2), (0.3, 0.6), (0.7, 0.2), (0.7, 0.6)] {
            expect += 0.25 * harvest_reward(4.0 * f64::exp(a), 4.0 * f64::exp(b), &econ);
        }
        let q = continue_value(&s, 0, &law, &econ, &limits);
        assert!((q - (expect - 2.0)).abs() < 1e-12);
        assert_eq!(value(&s, 0, &law, &econ, &limits), q.max(36.0));
    }

    #[test]
    fn forced_states_are_terminal() {
        let (law, econ, limits) = setup();
        assert_eq!(value(&PhysicalState::new(10.0, 60.0), 0, &law, &econ, &limits), -880.0);
        assert_eq!(value(&PhysicalState::new(31.0, 10.0), 0, &law, &econ, &limits), 290.0);
        let (_, class) = clamp_and_classify(&PhysicalState::new(5.0, 5.0), 3, &limits);
        assert_eq!(class, TerminalClass::ForcedHarvestTime);
        assert_eq!(value(&PhysicalState::new(5.0, 5.0), 3, &law, &econ, &limits), 45.0);
    }

    #[test]
    fn shift_moves_support() {
        let (law, _, _) = setup();
        let s = shifted(&law, 0.1, -0.1);
        assert!((s.phi[0].0 - 0.4).abs() < 1e-15 && (s.psi[1].0 - 0.5).abs() < 1e-15);
    }
}
