//! Conjugate normal-inverse-gamma learning of the growth-rate distributions.
//!
//! Each channel (protein, impurity) carries hyperparameters `(α, ν, λ, β)`:
//! `σ² ~ InvGamma(λ, β)` and `μ | σ² ~ N(α, σ²/ν)`. The all-zero state is the
//! improper prior; folding `J` observations into it gives the sample mean,
//! `ν = J`, `λ = J/2` and `β = ½Σ(x − x̄)²`.

use rand::Rng;
use rand_distr::{Distribution, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GrowthTruth, Observation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Protein,
    Impurity,
}

impl Channel {
    pub const BOTH: [Channel; 2] = [Channel::Protein, Channel::Impurity];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Protein => "protein",
            Channel::Impurity => "impurity",
        }
    }

    fn pick(self, obs: &Observation) -> f64 {
        match self {
            Channel::Protein => obs.phi,
            Channel::Impurity => obs.psi,
        }
    }
}

/// Hyperparameters of one channel.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Nig {
    pub alpha: f64,
    pub nu: f64,
    pub lambda: f64,
    pub beta: f64,
}

impl Nig {
    pub fn update(&self, x: f64) -> Nig {
        let nu = self.nu + 1.0;
        let dev = x - self.alpha;
        Nig {
            alpha: self.alpha + dev / nu,
            nu,
            lambda: self.lambda + 0.5,
            beta: self.beta + self.nu * dev * dev / (2.0 * nu),
        }
    }
}

/// Posterior hyperparameters for both channels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KnowledgeState {
    pub alpha_p: f64,
    pub nu_p: f64,
    pub lambda_p: f64,
    pub beta_p: f64,
    pub alpha_i: f64,
    pub nu_i: f64,
    pub lambda_i: f64,
    pub beta_i: f64,
}

impl KnowledgeState {
    /// The all-zero improper prior.
    pub fn improper() -> Self {
        Self::default()
    }

    pub fn from_channels(protein: Nig, impurity: Nig) -> Self {
        Self {
            alpha_p: protein.alpha,
            nu_p: protein.nu,
            lambda_p: protein.lambda,
            beta_p: protein.beta,
            alpha_i: impurity.alpha,
            nu_i: impurity.nu,
            lambda_i: impurity.lambda,
            beta_i: impurity.beta,
        }
    }

    pub fn channel(&self, c: Channel) -> Nig {
        match c {
            Channel::Protein => Nig {
                alpha: self.alpha_p,
                nu: self.nu_p,
                lambda: self.lambda_p,
                beta: self.beta_p,
            },
            Channel::Impurity => Nig {
                alpha: self.alpha_i,
                nu: self.nu_i,
                lambda: self.lambda_i,
                beta: self.beta_i,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("alpha_p", self.alpha_p),
            ("nu_p", self.nu_p),
            ("lambda_p", self.lambda_p),
            ("beta_p", self.beta_p),
            ("alpha_i", self.alpha_i),
            ("nu_i", self.nu_i),
            ("lambda_i", self.lambda_i),
            ("beta_i", self.beta_i),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::invalid(name, "must be finite"));
            }
            if !name.starts_with("alpha") && v < 0.0 {
                return Err(Error::invalid(name, "must be non-negative"));
            }
        }
        Ok(())
    }

    /// Conjugate update with one observed pair of log-growth rates.
    pub fn update(&self, obs: &Observation) -> KnowledgeState {
        KnowledgeState::from_channels(
            self.channel(Channel::Protein).update(obs.phi),
            self.channel(Channel::Impurity).update(obs.psi),
        )
    }

    pub fn update_all<'a, I>(&self, data: I) -> KnowledgeState
    where
        I: IntoIterator<Item = &'a Observation>,
    {
        data.into_iter().fold(*self, |k, obs| k.update(obs))
    }

    /// Posterior-predictive Student-t of one channel.
    pub fn predictive(&self, c: Channel) -> Result<PredictiveDist> {
        let n = self.channel(c);
        if !(n.lambda > 0.0 && n.nu > 0.0 && n.beta > 0.0) {
            return Err(Error::InsufficientPredictive { channel: c.name() });
        }
        Ok(PredictiveDist {
            mean: n.alpha,
            dof: 2.0 * n.lambda,
            scale_sq: n.beta * (1.0 + n.nu) / (n.nu * n.lambda),
        })
    }

    /// Split the predictive variance into inherent stochasticity
    /// `β/(λ−1)` and model risk `β/((λ−1)ν)`.
    pub fn decompose_variance(&self, c: Channel) -> Result<VarianceSplit> {
        let n = self.channel(c);
        if !(n.lambda > 1.0) {
            return Err(Error::VarianceUndefined { lambda: n.lambda });
        }
        if !(n.nu > 0.0) {
            return Err(Error::InsufficientPredictive { channel: c.name() });
        }
        let inherent = n.beta / (n.lambda - 1.0);
        Ok(VarianceSplit {
            inherent,
            model_risk: inherent / n.nu,
        })
    }

    /// Predictive moments `(α, σ̃)` of both channels, used as normal
    /// approximations by the myopic rule. Needs `λ > 1` on both channels.
    pub fn predictive_moments(&self) -> Result<GrowthTruth> {
        let mut out = [(0.0, 0.0); 2];
        for (slot, c) in out.iter_mut().zip(Channel::BOTH) {
            let lambda = self.channel(c).lambda;
            if !(lambda > 1.0) {
                return Err(Error::InsufficientData {
                    channel: c.name(),
                    lambda,
                });
            }
            *slot = normal_approx(&self.predictive(c)?)?;
        }
        Ok(GrowthTruth::new(out[0].0, out[0].1, out[1].0, out[1].1))
    }

    /// Maximum-likelihood point estimates (sample mean, unadjusted sample
    /// variance) implied by a knowledge state folded from the improper prior.
    pub fn plugin_estimate(&self) -> Result<GrowthTruth> {
        let mut out = [(0.0, 0.0); 2];
        for (slot, c) in out.iter_mut().zip(Channel::BOTH) {
            let n = self.channel(c);
            if n.nu < 2.0 {
                return Err(Error::TooFewForMle(n.nu as usize));
            }
            *slot = (n.alpha, (2.0 * n.beta / n.nu).sqrt());
        }
        Ok(GrowthTruth::new(out[0].0, out[0].1, out[1].0, out[1].1))
    }

    /// Number of observations folded into the protein channel.
    pub fn count(&self) -> f64 {
        self.nu_p
    }
}

/// Batch posterior under the improper prior.
pub fn fit_improper(data: &[Observation]) -> Result<KnowledgeState> {
    if data.is_empty() {
        return Err(Error::NoObservations);
    }
    let j = data.len() as f64;
    let fit = |c: Channel| {
        let mean = data.iter().map(|o| c.pick(o)).sum::<f64>() / j;
        let ss = data.iter().map(|o| (c.pick(o) - mean).powi(2)).sum::<f64>();
        Nig {
            alpha: mean,
            nu: j,
            lambda: j / 2.0,
            beta: ss / 2.0,
        }
    };
    Ok(KnowledgeState::from_channels(
        fit(Channel::Protein),
        fit(Channel::Impurity),
    ))
}

/// Maximum-likelihood normal fit: sample mean and variance with divisor `J`.
pub fn mle(data: &[Observation]) -> Result<GrowthTruth> {
    if data.len() < 2 {
        return Err(Error::TooFewForMle(data.len()));
    }
    let j = data.len() as f64;
    let fit = |c: Channel| {
        let mean = data.iter().map(|o| c.pick(o)).sum::<f64>() / j;
        let var = data.iter().map(|o| (c.pick(o) - mean).powi(2)).sum::<f64>() / j;
        (mean, var.sqrt())
    };
    let (mp, sp) = fit(Channel::Protein);
    let (mi, si) = fit(Channel::Impurity);
    Ok(GrowthTruth::new(mp, sp, mi, si))
}

/// `t_dof(mean, scale_sq)`: `(X − mean)/√scale_sq` is standard-t with `dof`
/// degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDist {
    pub mean: f64,
    pub dof: f64,
    pub scale_sq: f64,
}

impl PredictiveDist {
    /// `scale_sq · dof / (dof − 2)`, defined for `dof > 2`.
    pub fn variance(&self) -> Option<f64> {
        (self.dof > 2.0).then(|| self.scale_sq * self.dof / (self.dof - 2.0))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let t = StudentT::new(self.dof).expect("dof > 0 checked at construction");
        self.mean + self.scale_sq.sqrt() * t.sample(rng)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        use statrs::distribution::{ContinuousCDF, StudentsT};
        StudentsT::new(self.mean, self.scale_sq.sqrt(), self.dof)
            .expect("valid t parameters")
            .cdf(x)
    }
}

/// Inherent and model-risk components of the predictive variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceSplit {
    pub inherent: f64,
    pub model_risk: f64,
}

impl VarianceSplit {
    pub fn total(&self) -> f64 {
        self.inherent + self.model_risk
    }
}

/// Expectation and variance of the predictive variance `σ̃²` over random
/// datasets of size `j` drawn from a normal with variance `sigma_sq`.
pub fn sigma_tilde_moments(j: usize, sigma_sq: f64) -> Result<(f64, f64)> {
    if j <= 2 {
        return Err(Error::MomentsUndefined(j));
    }
    let jf = j as f64;
    let expectation = sigma_sq * (1.0 + (2.0 * jf - 1.0) / (jf * jf - 2.0 * jf));
    let variance = 2.0 * (jf.powi(3) + jf.powi(2) - jf - 1.0) * sigma_sq.powi(2)
        / (jf.powi(4) - 4.0 * jf.powi(3) + 4.0 * jf.powi(2));
    Ok((expectation, variance))
}

pub fn sample_predictive<R: Rng + ?Sized>(
    k: &KnowledgeState,
    c: Channel,
    rng: &mut R,
) -> Result<f64> {
    Ok(k.predictive(c)?.sample(rng))
}

/// Moment-matched normal `(mean, sd)` for a predictive with `dof > 2`.
pub fn normal_approx(d: &PredictiveDist) -> Result<(f64, f64)> {
    match d.variance() {
        Some(v) => Ok((d.mean, v.sqrt())),
        None => Err(Error::VarianceUndefined { lambda: d.dof / 2.0 }),
    }
}
