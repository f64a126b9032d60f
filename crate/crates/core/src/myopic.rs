//! One-step-lookahead harvesting rules, the sufficient conditions under which
//! they are optimal, and harvest-boundary tracing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::{KnowledgeState, PredictiveDist};
use crate::model::{EconomicParams, GrowthTruth, PhysicalState, ProcessLimits, TerminalClass};
use crate::model::clamp_and_classify;
use crate::reward::{harvest_reward, Action};
use crate::stats::{phi_cdf, phi_inv, phi_pdf};

/// Parameters the myopic rule plugs into its one-step expectation: either
/// the true growth law or the normal approximation of a knowledge state's
/// predictive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Beliefs {
    Truth(GrowthTruth),
    Knowledge(KnowledgeState),
}

impl Beliefs {
    pub fn moments(&self) -> Result<GrowthTruth> {
        match self {
            Beliefs::Truth(t) => Ok(*t),
            Beliefs::Knowledge(k) => k.predictive_moments(),
        }
    }
}

fn check_domain(p: f64, i: f64, g: &GrowthTruth, limits: &ProcessLimits) -> Result<()> {
    if !(p > 0.0 && p <= limits.p_bar) {
        return Err(Error::Domain(format!("protein {p} outside (0, {}]", limits.p_bar)));
    }
    if !(i > 0.0 && i < limits.i_bar) {
        return Err(Error::Domain(format!("impurity {i} outside (0, {})", limits.i_bar)));
    }
    if !(g.sigma_p >= 0.0 && g.sigma_i >= 0.0) {
        return Err(Error::Domain("growth standard deviations must be non-negative".into()));
    }
    Ok(())
}

/// `E[min(p e^φ, cap)]` for `φ ~ N(mu, sd²)`.
fn capped_lognormal_mean(p: f64, cap: f64, mu: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        return (p * mu.exp()).min(cap);
    }
    let y = (cap.ln() - p.ln() - mu) / sd;
    cap * (1.0 - phi_cdf(y)) + p * (mu + sd * sd / 2.0).exp() * phi_cdf(y - sd)
}

/// `(Pr(i e^ψ < Ī), E[i e^ψ; i e^ψ < Ī])` for `ψ ~ N(mu, sd²)`.
fn survival_terms(i: f64, i_bar: f64, mu: f64, sd: f64) -> (f64, f64) {
    if sd == 0.0 {
        let next = i * mu.exp();
        return if next < i_bar { (1.0, next) } else { (0.0, 0.0) };
    }
    let x = (i_bar.ln() - i.ln() - mu) / sd;
    (phi_cdf(x), i * (mu + sd * sd / 2.0).exp() * phi_cdf(x - sd))
}

/// Expected reward of harvesting one period from now, with normal log-growth
/// `N(mu_p, sd_p²)`, `N(mu_i, sd_i²)` and clamping at the limits.
pub fn expected_next_harvest_reward(
    p: f64,
    i: f64,
    g: &GrowthTruth,
    econ: &EconomicParams,
    limits: &ProcessLimits,
) -> Result<f64> {
    check_domain(p, i, g, limits)?;
    let protein = capped_lognormal_mean(p, limits.p_bar, g.mu_p, g.sigma_p);
    let (surv, impurity) = survival_terms(i, limits.i_bar, g.mu_i, g.sigma_i);
    Ok(-econ.r_f * (1.0 - surv) + surv * (econ.c0 + econ.c1 * protein) - econ.c2 * impurity)
}

/// Same expectation under the exact Student-t predictives, by quadrature.
/// Slow; meant for checking the normal approximation.
pub fn expected_next_harvest_reward_t(
    p: f64,
    i: f64,
    k: &KnowledgeState,
    econ: &EconomicParams,
    limits: &ProcessLimits,
) -> Result<f64> {
    use crate::learning::Channel;
    let dp = k.predictive(Channel::Protein)?;
    let di = k.predictive(Channel::Impurity)?;
    check_domain(p, i, &GrowthTruth::new(0.0, 0.0, 0.0, 0.0), limits)?;
    let y0 = (limits.p_bar / p).ln();
    let x0 = (limits.i_bar / i).ln();
    let protein = limits.p_bar * (1.0 - dp.cdf(y0)) + p * truncated_exp_moment(&dp, y0);
    let surv = di.cdf(x0);
    let impurity = i * truncated_exp_moment(&di, x0);
    Ok(-econ.r_f * (1.0 - surv) + surv * (econ.c0 + econ.c1 * protein) - econ.c2 * impurity)
}

/// `∫_{-∞}^{c} e^x f(x) dx` for a Student-t density `f`.
fn truncated_exp_moment(d: &PredictiveDist, c: f64) -> f64 {
    use statrs::distribution::{Continuous, StudentsT};
    let t = StudentsT::new(d.mean, d.scale_sq.sqrt(), d.dof).expect("valid t");
    let f = |x: f64| x.exp() * t.pdf(x);
    let s = d.scale_sq.sqrt();
    let lo = c.min(d.mean) - 60.0 - 200.0 * s;
    let mut knots: Vec<f64> = (-40..=40)
        .map(|j| d.mean + j as f64 * s * 0.5)
        .filter(|&x| x > lo && x < c)
        .collect();
    knots.insert(0, lo);
    knots.push(c);
    knots.windows(2).map(|w| adaptive_simpson(&f, w[0], w[1], 1e-12, 40)).sum()
}

fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    fn go<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        go(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
            + go(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    go(f, a, fa, b, fb, m, fm, whole, tol, depth)
}

/// `h = r_h(p, i) + c_u − γ E[R(p', i'; H)]`; harvesting now is at least as
/// good as harvesting next period iff `h ≥ 0`.
pub fn h_value(
    p: f64,
    i: f64,
    g: &GrowthTruth,
    econ: &EconomicParams,
    limits: &ProcessLimits,
) -> Result<f64> {
    let next = expected_next_harvest_reward(p, i, g, econ, limits)?;
    Ok(harvest_reward(p, i, econ) + econ.c_u - econ.gamma * next)
}

/// Perfect-information `h` under the true growth law.
pub fn h_perfect(
    p: f64,
    i: f64,
    truth: &GrowthTruth,
    econ: &EconomicParams,
    limits: &ProcessLimits,
) -> Result<f64> {
    h_value(p, i, truth, econ, limits)
}

/// Model-risk `h̃`: `h` with the predictive means and standard deviations.
pub fn h_tilde(
    p: f64,
    i: f64,
    k: &KnowledgeState,
    econ: &EconomicParams,
    limits: &ProcessLimits,
) -> Result<f64> {
    h_value(p, i, &k.predictive_moments()?, econ, limits)
}

/// Myopic action at epoch `t`. Forced states harvest; otherwise harvest iff
/// `h ≥ 0`.
pub fn myopic_decide(
    state: &PhysicalState,
    t: u32,
    beliefs: &Beliefs,
    econ: &EconomicParams,
    limits: &ProcessLimits,
) -> Result<Action> {
    let (clamped, class) = clamp_and_classify(state, t, limits);
    if class != TerminalClass::FreeChoice {
        return Ok(Action::Harvest);
    }
    let h = h_value(clamped.p, clamped.i, &beliefs.moments()?, econ, limits)?;
    Ok(if h >= 0.0 { Action::Harvest } else { Action::Continue })
}

/// Protein level above which the perfect-information myopic rule keeps
/// harvesting as protein grows.
pub fn p_lower_bound(truth: &GrowthTruth, econ: &EconomicParams, limits: &ProcessLimits) -> Result<f64> {
    let (mu, s) = (truth.mu_p, truth.sigma_p);
    let x0 = (limits.i_bar.ln() - limits.i0.ln() - truth.mu_i) / truth.sigma_i;
    let arg = (-mu - s * s / 2.0).exp() / (econ.gamma * phi_cdf(x0));
    if !(arg > 0.0 && arg < 1.0) {
        return Err(Error::Unattainable(arg));
    }
    Ok((limits.p_bar.ln() - mu - s * s - s * phi_inv(arg)).exp())
}

/// Both sides `(lhs, rhs)` of the impurity-monotonicity sufficient condition
/// for a pair `i < i⁺`; the condition holds iff `lhs ≤ rhs`.
pub fn failure_cost_sides(
    i: f64,
    i_plus: f64,
    truth: &GrowthTruth,
    econ: &EconomicParams,
    limits: &ProcessLimits,
) -> (f64, f64) {
    let (mu, s) = (truth.mu_i, truth.sigma_i);
    let x = (limits.i_bar.ln() - i.ln() - mu) / s;
    let xp = (limits.i_bar.ln() - i_plus.ln() - mu) / s;
    let lhs = econ.c2 / econ.gamma * (i_plus - i);
    let rhs = econ.r_f * (phi_cdf(x) - phi_cdf(xp))
        - econ.c2 * limits.i_bar * (mu + s * s / 2.0).exp() * (phi_cdf(x - s) - phi_cdf(xp - s));
    (lhs, rhs)
}

pub fn failure_cost_condition(
    i: f64,
    i_plus: f64,
    truth: &GrowthTruth,
    econ: &EconomicParams,
    limits: &ProcessLimits,
) -> bool {
    let (lhs, rhs) = failure_cost_sides(i, i_plus, truth, econ, limits);
    lhs <= rhs
}

/// Right-hand side of the first-order approximation
/// `r_f ≥ c2 Ī [√(2π) σ_i / γ + e^{μ_i + σ_i²/2}]`.
pub fn taylor_rhs(truth: &GrowthTruth, econ: &EconomicParams, limits: &ProcessLimits) -> f64 {
    let s = truth.sigma_i;
    econ.c2
        * limits.i_bar
        * ((2.0 * std::f64::consts::PI).sqrt() * s / econ.gamma + (truth.mu_i + s * s / 2.0).exp())
}

pub fn taylor_threshold(truth: &GrowthTruth, econ: &EconomicParams, limits: &ProcessLimits) -> bool {
    econ.r_f >= taylor_rhs(truth, econ, limits)
}

/// `σ Φ(z) − φ(z)` with `z = (ln cap − ln x − α − σ²)/σ`.
pub fn sigma_condition_margin(cap: f64, x: f64, alpha: f64, sigma: f64) -> f64 {
    let z = (cap.ln() - x.ln() - alpha - sigma * sigma) / sigma;
    sigma * phi_cdf(z) - phi_pdf(z)
}

/// Whether `h̃` is guaranteed increasing in `σ̃_i` (first flag) and is
/// decreasing in `σ̃_p` (second flag) at `(p, i)`.
pub fn sigma_monotonicity_conditions(
    p: f64,
    i: f64,
    k: &KnowledgeState,
    limits: &ProcessLimits,
) -> Result<(bool, bool)> {
    Ok(sigma_conditions(p, i, &k.predictive_moments()?, limits))
}

pub fn sigma_conditions(p: f64, i: f64, g: &GrowthTruth, limits: &ProcessLimits) -> (bool, bool) {
    let headroom = limits.i_bar.ln() - i.ln() > g.mu_i;
    let iii = headroom && sigma_condition_margin(limits.i_bar, i, g.mu_i, g.sigma_i) > 0.0;
    let iv = sigma_condition_margin(limits.p_bar, p, g.mu_p, g.sigma_p) > 0.0;
    (iii, iv)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryStatus {
    /// `h` changes sign once along the slice.
    Crossing,
    /// More than one sign change was detected; `i_star` is the lowest.
    MultiRoot,
    /// `h ≥ 0` already at `i0`.
    AlwaysHarvest,
    /// `h < 0` right up to `Ī`.
    NeverHarvest,
}

impl BoundaryStatus {
    pub fn label(self) -> &'static str {
        match self {
            BoundaryStatus::Crossing => "crossing",
            BoundaryStatus::MultiRoot => "multi_root",
            BoundaryStatus::AlwaysHarvest => "always_harvest",
            BoundaryStatus::NeverHarvest => "never_harvest",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub p: f64,
    /// Critical impurity; `i0` for always-harvest and `Ī` for never-harvest
    /// slices.
    pub i_star: f64,
    pub status: BoundaryStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarvestBoundary {
    pub points: Vec<BoundaryPoint>,
}

impl HarvestBoundary {
    /// Largest `|i*_a(p) − i*_b(p)|` over a shared grid.
    pub fn sup_distance(&self, other: &HarvestBoundary) -> f64 {
        self.points
            .iter()
            .zip(&other.points)
            .map(|(a, b)| (a.i_star - b.i_star).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("p,i_star,status\n");
        for pt in &self.points {
            out.push_str(&format!("{},{},{}\n", pt.p, pt.i_star, pt.status.label()));
        }
        out
    }
}

pub const DEFAULT_BOUNDARY_POINTS: usize = 120;
pub const DEFAULT_BOUNDARY_TOL: f64 = 1e-6;

/// `n` log-spaced protein values from `p0` to `P̄`.
pub fn default_p_grid(limits: &ProcessLimits, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![limits.p0];
    }
    let (a, b) = (limits.p0.ln(), limits.p_bar.ln());
    let mut grid: Vec<f64> = (0..n)
        .map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp())
        .collect();
    grid[0] = limits.p0;
    grid[n - 1] = limits.p_bar;
    grid
}

const SCAN_POINTS: usize = 64;

fn trace_slice(
    p: f64,
    g: &GrowthTruth,
    econ: &EconomicParams,
    limits: &ProcessLimits,
    tol: f64,
) -> Result<BoundaryPoint> {
    let h = |i: f64| h_value(p, i, g, econ, limits);
    let lo = limits.i0;
    let hi = limits.i_bar * (1.0 - 1e-12);
    if h(lo)? >= 0.0 {
        return Ok(BoundaryPoint { p, i_star: lo, status: BoundaryStatus::AlwaysHarvest });
    }
    // Scan for sign changes so non-monotone slices are reported, not hidden.
    let mut changes = Vec::new();
    let mut prev = (lo, h(lo)?);
    for k in 1..=SCAN_POINTS {
        let i = lo + (hi - lo) * k as f64 / SCAN_POINTS as f64;
        let v = h(i)?;
        if (v >= 0.0) != (prev.1 >= 0.0) {
            changes.push((prev.0, i));
        }
        prev = (i, v);
    }
    let Some(&(mut a, mut b)) = changes.first() else {
        return Ok(BoundaryPoint { p, i_star: limits.i_bar, status: BoundaryStatus::NeverHarvest });
    };
    let mut root = 0.5 * (a + b);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let v = h(m)?;
        root = m;
        if b - a <= tol && v.abs() <= tol {
            break;
        }
        if v >= 0.0 {
            b = m;
        } else {
            a = m;
        }
    }
    let status = if changes.len() > 1 { BoundaryStatus::MultiRoot } else { BoundaryStatus::Crossing };
    Ok(BoundaryPoint { p, i_star: root, status })
}

/// Critical impurity `i*(p)` where `h` crosses zero on each protein slice.
pub fn trace_boundary(
    beliefs: &Beliefs,
    econ: &EconomicParams,
    limits: &ProcessLimits,
    p_grid: &[f64],
    tol: f64,
) -> Result<HarvestBoundary> {
    let g = beliefs.moments()?;
    let points = crate::par::map_slice(p_grid, |&p| trace_slice(p, &g, econ, limits, tol));
    Ok(HarvestBoundary { points: points.into_iter().collect::<Result<_>>()? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::{fit_improper, Channel, Nig};
    use crate::model::step_true;
    use crate::rng::seeded;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn case() -> (GrowthTruth, EconomicParams, ProcessLimits) {
        (GrowthTruth::case_study(), EconomicParams::case_study(), ProcessLimits::case_study())
    }

    /// Knowledge whose normal approximation is exactly `g`.
    fn matched_knowledge(g: &GrowthTruth) -> KnowledgeState {
        // With λ = 2, ν = 1 the predictive variance is β(1+ν)/(ν(λ−1)) = 2β.
        let nig = |mu: f64, s: f64| Nig { alpha: mu, nu: 1.0, lambda: 2.0, beta: s * s / 2.0 };
        KnowledgeState::from_channels(nig(g.mu_p, g.sigma_p), nig(g.mu_i, g.sigma_i))
    }

    #[test]
    fn degenerate_growth_reduces_to_harvest_reward() {
        let (_, e, l) = case();
        let g = GrowthTruth::new(0.2, 0.0, 0.1, 0.0);
        let v = expected_next_harvest_reward(5.0, 5.0, &g, &e, &l).unwrap();
        assert_relative_eq!(v, harvest_reward(5.0 * 0.2f64.exp(), 5.0 * 0.1f64.exp(), &e), epsilon = 1e-12);
        let tiny = GrowthTruth::new(0.2, 1e-9, 0.1, 1e-9);
        let w = expected_next_harvest_reward(5.0, 5.0, &tiny, &e, &l).unwrap();
        assert_relative_eq!(v, w, epsilon = 1e-6);
    }

    #[test]
    fn lognormal_density_identity() {
        let (mu, s, cap) = (0.488, 0.144, 30.0);
        for k in 1..60 {
            let p = 0.5 * k as f64;
            let y = (f64::ln(cap) - p.ln() - mu) / s;
            let lhs = p * (mu + s * s / 2.0).exp() * phi_pdf(y - s);
            assert!((lhs - cap * phi_pdf(y)).abs() < 1e-9);
        }
    }

    #[test]
    fn closed_form_matches_simulation_at_five_five() {
        let (t, e, l) = case();
        let exact = expected_next_harvest_reward(5.0, 5.0, &t, &e, &l).unwrap();
        let mut rng = seeded(99);
        let n = 200_000;
        let mut acc = Vec::with_capacity(n);
        for _ in 0..n {
            let (next, _) = step_true(&PhysicalState::new(5.0, 5.0), &t, &mut rng);
            let (c, class) = clamp_and_classify(&next, 1, &l);
            acc.push(crate::reward::terminal_value(&c, class, &e));
        }
        let s = crate::stats::Summary::of(&acc);
        assert!((s.mean - exact).abs() < 3.0 * s.se().max(1e-9), "{} vs {exact}", s.mean);
    }

    #[test]
    fn h_signs_at_reference_states() {
        let (t, e, l) = case();
        assert!(h_perfect(29.0, 20.0, &t, &e, &l).unwrap() > 0.0);
        assert!(h_perfect(1.5, 2.0, &t, &e, &l).unwrap() < 0.0);
        let beliefs = Beliefs::Truth(t);
        assert_eq!(myopic_decide(&PhysicalState::new(1.5, 2.0), 0, &beliefs, &e, &l).unwrap(), Action::Continue);
        assert_eq!(myopic_decide(&PhysicalState::new(29.0, 20.0), 0, &beliefs, &e, &l).unwrap(), Action::Harvest);
        assert_eq!(myopic_decide(&PhysicalState::new(5.0, 50.0), 0, &beliefs, &e, &l).unwrap(), Action::Harvest);
    }

    #[test]
    fn h_tilde_equals_h_perfect_when_matched() {
        let (t, e, l) = case();
        let k = matched_knowledge(&t);
        for (p, i) in [(2.0, 3.0), (10.0, 20.0), (25.0, 40.0)] {
            let a = h_tilde(p, i, &k, &e, &l).unwrap();
            let b = h_perfect(p, i, &t, &e, &l).unwrap();
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn h_tilde_needs_three_observations() {
        let (t, e, l) = case();
        let mut rng = seeded(1);
        let data: Vec<_> = (0..2).map(|_| t.sample(&mut rng)).collect();
        let k = fit_improper(&data).unwrap();
        assert!(matches!(h_tilde(2.0, 2.0, &k, &e, &l), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn exact_t_expectation_approaches_normal() {
        let (t, e, l) = case();
        let mut k = matched_knowledge(&t);
        // Huge λ with the same predictive variance.
        for c in Channel::BOTH {
            let s = if c == Channel::Protein { t.sigma_p } else { t.sigma_i };
            let lam = 1e6;
            let nig = Nig { alpha: 0.488, nu: 1.0, lambda: lam, beta: s * s * (lam - 1.0) / 2.0 };
            k = match c {
                Channel::Protein => KnowledgeState::from_channels(nig, k.channel(Channel::Impurity)),
                Channel::Impurity => KnowledgeState::from_channels(k.channel(Channel::Protein), nig),
            };
        }
        for (p, i) in [(5.0, 5.0), (20.0, 25.0), (28.0, 35.0)] {
            let a = expected_next_harvest_reward_t(p, i, &k, &e, &l).unwrap();
            let b = expected_next_harvest_reward(p, i, &t, &e, &l).unwrap();
            assert!((a - b).abs() < 1e-3 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn p_lower_bound_case_study() {
        let (t, e, l) = case();
        let p = p_lower_bound(&t, &e, &l).unwrap();
        assert!((p - 17.34).abs() < 0.01, "{p}");
    }

    #[test]
    fn p_lower_bound_grows_with_gamma() {
        let (t, mut e, l) = case();
        e.gamma = 0.8;
        let a = p_lower_bound(&t, &e, &l).unwrap();
        e.gamma = 0.9;
        let b = p_lower_bound(&t, &e, &l).unwrap();
        assert!(b > a);
    }

    #[test]
    fn p_lower_bound_without_impurity_noise() {
        let (mut t, e, l) = case();
        t.sigma_i = 1e-12;
        let (mu, s) = (t.mu_p, t.sigma_p);
        let expect = (l.p_bar.ln() - mu - s * s - s * phi_inv((-mu - s * s / 2.0).exp())).exp();
        assert_relative_eq!(p_lower_bound(&t, &e, &l).unwrap(), expect, epsilon = 1e-10);
        let shrink = GrowthTruth::new(-0.5, 0.1, 0.1, 0.1);
        assert!(matches!(p_lower_bound(&shrink, &e, &l), Err(Error::Unattainable(_))));
    }

    #[test]
    fn taylor_examples() {
        let (t, e, l) = case();
        let rhs = taylor_rhs(&t, &e, &l);
        let oracle = 50.0 * ((2.0 * std::f64::consts::PI).sqrt() * 0.144 + (0.488f64 + 0.144 * 0.144 / 2.0).exp());
        assert_relative_eq!(rhs, oracle, epsilon = 1e-12);
        assert!((rhs - 100.4).abs() < 0.5);
        assert!(taylor_threshold(&t, &e, &l));
        let flat = GrowthTruth::new(0.0, 0.0, 0.0, 0.0);
        let mut edge = e;
        edge.r_f = edge.c2 * l.i_bar;
        assert!(taylor_threshold(&flat, &edge, &l));
        let mut myopic = e;
        myopic.gamma = 1e-6;
        assert!(!taylor_threshold(&t, &myopic, &l));
    }

    #[test]
    fn failure_cost_examples() {
        let (t, e, l) = case();
        assert!(failure_cost_condition(35.0, 40.0, &t, &e, &l));
        let mut free = e;
        free.r_f = 0.0;
        assert!(!failure_cost_condition(20.0, 20.5, &t, &free, &l));
        let (lhs, rhs) = failure_cost_sides(30.0, 30.0 + 1e-9, &t, &e, &l);
        assert!(lhs.abs() < 1e-8 && rhs.abs() < 1e-6);
    }

    #[test]
    fn sigma_margin_root_by_bisection() {
        // Locate the protein level where the margin changes sign and check
        // the flag flips there.
        let (t, _, l) = case();
        let f = |p: f64| sigma_condition_margin(l.p_bar, p, t.mu_p, t.sigma_p);
        let (mut a, mut b) = (1.0, 29.99);
        assert!(f(a) > 0.0 && f(b) < 0.0);
        for _ in 0..100 {
            let m = 0.5 * (a + b);
            if f(m) > 0.0 { a = m } else { b = m }
        }
        let below = sigma_conditions(a - 1e-6, 5.0, &t, &l).1;
        let above = sigma_conditions(b + 1e-6, 5.0, &t, &l).1;
        assert!(below && !above);
    }

    #[test]
    fn boundary_matches_perfect_information_when_matched() {
        let (t, e, l) = case();
        let grid = default_p_grid(&l, 30);
        let a = trace_boundary(&Beliefs::Truth(t), &e, &l, &grid, 1e-8).unwrap();
        let b = trace_boundary(&Beliefs::Knowledge(matched_knowledge(&t)), &e, &l, &grid, 1e-8).unwrap();
        assert!(a.sup_distance(&b) <= 1e-6);
        for pt in &a.points {
            if pt.status == BoundaryStatus::Crossing {
                let h = h_perfect(pt.p, pt.i_star, &t, &e, &l).unwrap();
                assert!(h.abs() <= 1e-6, "residual {h} at p = {}", pt.p);
            }
        }
        assert!(a.to_csv().starts_with("p,i_star,status\n"));
    }

    #[test]
    fn boundary_moves_with_predictive_means() {
        let (t, e, l) = case();
        let grid = default_p_grid(&l, 25);
        let base = trace_boundary(&Beliefs::Truth(t), &e, &l, &grid, 1e-8).unwrap();
        let mut up_i = t;
        up_i.mu_i *= 1.1;
        let down = trace_boundary(&Beliefs::Truth(up_i), &e, &l, &grid, 1e-8).unwrap();
        let mut up_p = t;
        up_p.mu_p *= 1.1;
        let up = trace_boundary(&Beliefs::Truth(up_p), &e, &l, &grid, 1e-8).unwrap();
        for k in 0..grid.len() {
            assert!(down.points[k].i_star <= base.points[k].i_star + 1e-9);
            assert!(up.points[k].i_star >= base.points[k].i_star - 1e-9);
        }
        assert!(down.points.iter().zip(&base.points).any(|(a, b)| a.i_star < b.i_star));
        assert!(up.points.iter().zip(&base.points).any(|(a, b)| a.i_star > b.i_star));
    }

    proptest! {
        #[test]
        fn h_scales_with_economics(p in 1.0f64..29.0, i in 1.0f64..49.0, k in 0.1f64..10.0) {
            let (t, e, l) = case();
            let a = h_perfect(p, i, &t, &e, &l).unwrap();
            let b = h_perfect(p, i, &t, &e.scaled(k), &l).unwrap();
            prop_assert!((b - k * a).abs() <= 1e-9 * (1.0 + (k * a).abs()));
            prop_assert_eq!(a >= 0.0, b >= 0.0);
        }

        #[test]
        fn h_monotone_in_means(p in 1.5f64..29.5, i in 2.0f64..49.5) {
            let (t, e, l) = case();
            let d = 1e-4;
            let h = |g: GrowthTruth| h_perfect(p, i, &g, &e, &l).unwrap();
            let mut gi = t; gi.mu_i += d;
            let mut gp = t; gp.mu_p += d;
            prop_assert!(h(gi) >= h(t));
            prop_assert!(h(gp) <= h(t));
        }
    }
}
