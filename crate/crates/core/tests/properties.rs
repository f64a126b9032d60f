//! Invariants checked through the public API only.

use proptest::prelude::*;

use harvest_core::campaign::{run_campaigns, CampaignParams};
use harvest_core::evaluation::{play, StrategyKind, StrategySpec};
use harvest_core::par::{map_range, map_range_sequential};
use harvest_core::planner::recommend;
use harvest_core::{
    Action, EconomicParams, GrowthTruth, HyperState, KnowledgeState, Observation, PhysicalState, PlannerConfig,
    ProcessLimits, RecommendMode, SamplerMode, TerminalClass,
};

fn case() -> (GrowthTruth, EconomicParams, ProcessLimits) {
    (GrowthTruth::case_study(), EconomicParams::case_study(), ProcessLimits::case_study())
}

fn kind() -> impl Strategy<Value = StrategyKind> {
    prop::sample::select(StrategyKind::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn replications_do_not_depend_on_scheduling(k in kind(), seed in 0u64..1000) {
        let (t, e, l) = case();
        let spec = StrategySpec::new(k, 5, &PlannerConfig::with_k(2, SamplerMode::BayesAdaptive));
        let run = |r: usize| play(&spec, &t, &e, &l, seed, r as u64).unwrap();
        prop_assert_eq!(map_range(6, run), map_range_sequential(6, run));
    }

    #[test]
    fn episodes_respect_the_horizon_and_account(k in kind(), seed in 0u64..1000, rep in 0u64..50) {
        let (t, e, l) = case();
        let spec = StrategySpec::new(k, 5, &PlannerConfig::with_k(2, SamplerMode::BayesAdaptive));
        let ep = play(&spec, &t, &e, &l, seed, rep).unwrap();
        prop_assert!(ep.stopping_time <= l.t_bar);
        let summed: f64 = ep.steps.iter().map(|s| s.reward).sum();
        prop_assert!((summed - ep.total_reward).abs() <= 1e-9 * ep.total_reward.abs().max(1.0));
        if ep.final_class == TerminalClass::Failed {
            prop_assert!((ep.steps.last().unwrap().reward + e.r_f).abs() < 1e-9);
        }
        let last = ep.steps.last().unwrap();
        prop_assert!(last.p <= l.p_bar && last.i <= l.i_bar);
    }

    #[test]
    fn recommendations_are_pure_functions_of_their_inputs(
        p in 1.5f64..29.0, i in 2.0f64..49.0, t in 0u32..8, seed in 0u64..1000, nonce in 0u64..4,
    ) {
        let (truth, e, l) = case();
        let k = KnowledgeState::improper().update_all(&[
            Observation { phi: 0.4, psi: 0.5 },
            Observation { phi: 0.6, psi: 0.3 },
            Observation { phi: 0.5, psi: 0.6 },
            Observation { phi: 0.45, psi: 0.45 },
        ]);
        let h = HyperState::new(PhysicalState::new(p, i), k, t);
        let cfg = PlannerConfig::with_k(3, SamplerMode::BayesAdaptive);
        for mode in [RecommendMode::Planner, RecommendMode::Myopic] {
            let a = recommend(&h, &cfg, mode, Some(&truth), &e, &l, seed, nonce).unwrap();
            let b = recommend(&h, &cfg, mode, Some(&truth), &e, &l, seed, nonce).unwrap();
            prop_assert_eq!(a, b);
            if let Some(qc) = a.q_continue {
                prop_assert_eq!(a.action == Action::Harvest, a.q_harvest >= qc);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn campaigns_balance_their_books(
        seed in 0u64..1000,
        length in 3u32..15,
        cost in 0.0f64..20.0,
        w in prop::collection::vec(0.05f64..1.0, 1..4),
    ) {
        let (t, e, l) = case();
        let total: f64 = w.iter().sum();
        let params = CampaignParams {
            campaign_length: length,
            setup_pmf: w.iter().map(|x| x / total).collect(),
            setup_cost: cost,
            branch_k: 2,
            lookahead_depth: 2,
        };
        let planner = PlannerConfig::with_k(2, SamplerMode::BayesAdaptive);
        for rec in run_campaigns(5, &t, &params, &planner, &e, &l, 4, seed).unwrap() {
            let books = rec.accounting_total(&e, cost);
            prop_assert!((books - rec.total_reward).abs() <= 1e-9 * books.abs().max(1.0));
            let harvests = rec.steps.iter().filter(|s| !s.delta && s.action == Action::Harvest).count();
            prop_assert_eq!((rec.growth_periods + rec.setup_periods) as usize + harvests, rec.steps.len());
            prop_assert!(rec.batch_count() >= harvests && rec.batch_count() <= harvests + 1);
            prop_assert!(rec.steps.len() as u32 <= length);
        }
    }
}
