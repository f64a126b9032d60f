//! The JSON experiment document shared by the CLI and the service.
//!
//! Every section is optional and defaults to the reference process:
//!
//! ```json
//! {
//!   "truth": {"mu_p": 0.488, "sigma_p": 0.144, "mu_i": 0.488, "sigma_i": 0.144},
//!   "economics": {"c0": 0, "c1": 10, "c2": 1, "c_u": 2, "r_f": 880, "gamma": 1},
//!   "limits": {"p_bar": 30, "i_bar": 50, "t_bar": 8, "p0": 1.5, "i0": 2},
//!   "planner": {"branch_k": 10, "schedule": [], "seed": 0, "mode": "bayes_adaptive", "crn": false},
//!   "strategies": {"data_sizes": [3, 10, 20], "kinds": ["pi_mdp", "cp", "rl_ignoring_mr", "myopic", "rl_with_mr"],
//!                  "cp_fraction": 0.6, "replications": 100, "seed": 1, "online_baselines": false},
//!   "campaign": {"campaign_length": 20, "setup_pmf": [0.2, 0.5, 0.3], "setup_cost": 1}
//! }
//! ```

use serde::{Deserialize, Serialize};

use crate::campaign::CampaignParams;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_specs, EvaluationReport, StrategyKind, StrategySpec};
use crate::model::{EconomicParams, GrowthTruth, ProcessLimits};
use crate::planner::PlannerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategiesConfig {
    pub data_sizes: Vec<usize>,
    pub kinds: Vec<StrategyKind>,
    pub cp_fraction: f64,
    pub replications: usize,
    pub seed: u64,
    pub online_baselines: bool,
}

impl Default for StrategiesConfig {
    fn default() -> Self {
        Self {
            data_sizes: vec![3, 10, 20],
            kinds: StrategyKind::ALL.to_vec(),
            cp_fraction: 0.6,
            replications: 100,
            seed: 1,
            online_baselines: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub truth: GrowthTruth,
    pub economics: EconomicParams,
    pub limits: ProcessLimits,
    pub planner: PlannerConfig,
    pub strategies: StrategiesConfig,
    pub campaign: Option<CampaignParams>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            truth: GrowthTruth::case_study(),
            economics: EconomicParams::case_study(),
            limits: ProcessLimits::case_study(),
            planner: PlannerConfig::default(),
            strategies: StrategiesConfig::default(),
            campaign: None,
        }
    }
}

impl ExperimentConfig {
    /// Parse and validate.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| Error::invalid("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.truth.validate().map_err(|e| e.within("truth"))?;
        self.limits.validate().map_err(|e| e.within("limits"))?;
        self.economics.validate(&self.limits).map_err(|e| e.within("economics"))?;
        self.planner.validate()?;
        let s = &self.strategies;
        if s.replications < 2 {
            return Err(Error::invalid("strategies.replications", "need at least 2"));
        }
        if s.kinds.is_empty() {
            return Err(Error::invalid("strategies.kinds", "must not be empty"));
        }
        for spec in self.strategy_specs() {
            spec.validate()?;
        }
        if let Some(c) = &self.campaign {
            c.validate()?;
        }
        Ok(())
    }

    /// One spec per requested strategy and (for learned strategies) data size.
    pub fn strategy_specs(&self) -> Vec<StrategySpec> {
        let s = &self.strategies;
        let mut out = Vec::new();
        for &kind in &s.kinds {
            let sizes: &[usize] = if kind.learns() { &s.data_sizes } else { &[0] };
            for &j0 in sizes {
                out.push(StrategySpec {
                    cp_fraction: s.cp_fraction,
                    online_baselines: s.online_baselines,
                    ..StrategySpec::new(kind, j0, &self.planner)
                });
            }
        }
        out
    }

    /// Run every configured strategy with `reps` replications (default from
    /// the document).
    pub fn evaluate(&self, reps: Option<usize>) -> Result<EvaluationReport> {
        let n = reps.unwrap_or(self.strategies.replications);
        evaluate_specs(&self.strategy_specs(), &self.truth, &self.economics, &self.limits, n, self.strategies.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_reference_case() {
        let cfg = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.strategy_specs().len(), 2 + 3 * 3);
    }

    #[test]
    fn round_trip() {
        let cfg = ExperimentConfig { campaign: Some(CampaignParams::default()), ..Default::default() };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn errors_name_the_field() {
        let err = ExperimentConfig::from_json(r#"{"strategies": {"data_sizes": [2]}}"#).unwrap_err();
        assert_eq!(err.field(), Some("strategies.data_sizes"));
        assert!(err.to_string().contains("lambda > 1"));
        let err = ExperimentConfig::from_json(r#"{"limits": {"p_bar": 30, "i_bar": 50, "t_bar": 8, "p0": 0, "i0": 2}}"#)
            .unwrap_err();
        assert_eq!(err.field(), Some("limits.p0"));
        let err = ExperimentConfig::from_json(r#"{"campaign": {"setup_pmf": [0.5]}}"#).unwrap_err();
        assert_eq!(err.field(), Some("campaign.setup_pmf"));
        let err = ExperimentConfig::from_json(r#"{"planner": {"branch_k": 0}}"#).unwrap_err();
        assert_eq!(err.field(), Some("planner.branch_k"));
        let err = ExperimentConfig::from_json(r#"{"bogus": 1}"#).unwrap_err();
        assert_eq!(err.field(), Some("config"));
    }
}
