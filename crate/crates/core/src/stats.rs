//! Small numerical helpers: normal distribution functions, sample summaries,
//! a two-sample Kolmogorov-Smirnov test, and least-squares slopes.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Standard normal CDF.
pub fn phi_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        std_normal().cdf(x)
    }
}

/// Standard normal density.
pub fn phi_pdf(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        std_normal().pdf(x)
    }
}

/// Standard normal quantile; `p` must lie in (0, 1).
pub fn phi_inv(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// Mean and sample standard deviation (divisor `n − 1`).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Summary {
        let n = xs.len();
        if n == 0 {
            return Summary { n, mean: f64::NAN, sd: f64::NAN };
        }
        // Shift by the first value so constant samples give exactly zero spread.
        let shift = xs[0];
        let nf = n as f64;
        let s1: f64 = xs.iter().map(|x| x - shift).sum();
        let mean = shift + s1 / nf;
        let sd = if n < 2 {
            0.0
        } else {
            let s2: f64 = xs.iter().map(|x| (x - shift - s1 / nf).powi(2)).sum();
            (s2 / (nf - 1.0)).sqrt()
        };
        Summary { n, mean, sd }
    }

    pub fn se(&self) -> f64 {
        self.sd / (self.n as f64).sqrt()
    }

    pub fn variance(&self) -> f64 {
        self.sd * self.sd
    }
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, kolmogorov_q(lambda))
}

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let term = sign * (-2.0 * (k as f64 * lambda).powi(2)).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Pearson chi-square goodness-of-fit statistic and upper-tail p-value.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> (f64, f64) {
    use statrs::distribution::ChiSquared;
    let total: u64 = observed.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&o, &p) in observed.iter().zip(probs) {
        if p <= 0.0 {
            continue;
        }
        let e = p * total as f64;
        stat += (o as f64 - e).powi(2) / e;
        cells += 1;
    }
    if cells < 2 {
        return (stat, 1.0);
    }
    let dist = ChiSquared::new((cells - 1) as f64).expect("dof > 0");
    (stat, 1.0 - dist.cdf(stat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn normal_functions() {
        assert_relative_eq!(phi_cdf(0.0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(phi_cdf(1.959963984540054), 0.975, epsilon = 1e-9);
        assert_relative_eq!(phi_inv(0.975), 1.959963984540054, epsilon = 1e-9);
        assert_relative_eq!(phi_pdf(0.0), 1.0 / (2.0 * std::f64::consts::PI).sqrt());
        assert_eq!(phi_cdf(f64::INFINITY), 1.0);
        assert_eq!(phi_pdf(f64::NEG_INFINITY), 0.0);
    }

    #[test]
    fn summary_uses_n_minus_one() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert_relative_eq!(s.sd, (5.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        assert_eq!(Summary::of(&[7.0, 7.0, 7.0]).sd, 0.0);
    }

    #[test]
    fn ks_detects_shift() {
        let a: Vec<f64> = (0..1000).map(|k| k as f64 / 1000.0).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 0.3).collect();
        let (d, p) = ks_two_sample(&a, &b);
        assert_relative_eq!(d, 0.3, epsilon = 2e-3);
        assert!(p < 1e-10);
        let (d, p) = ks_two_sample(&a, &a);
        assert_eq!(d, 0.0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn slope_of_line() {
        assert_relative_eq!(ols_slope(&[1.0, 2.0, 3.0], &[5.0, 3.0, 1.0]), -2.0);
    }

    #[test]
    fn chi_square_exact_fit() {
        let (s, p) = chi_square_gof(&[50, 50], &[0.5, 0.5]);
        assert_eq!(s, 0.0);
        assert_relative_eq!(p, 1.0);
    }
}
