use std::process::Command;

use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use harvest_cli::{format_recommendation, recommend_at};
use harvest_core::config::ExperimentConfig;
use harvest_core::evaluation::historical_data;
use harvest_core::rng::seeded;
use harvest_core::{GrowthTruth, HyperState, RecommendMode, Recommendation};
use harvest_service::{router, AppState, Store};

fn harvest(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_harvest")).args(args).output().unwrap()
}

fn stdout(o: &std::process::Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn simulate_is_byte_identical_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = harvest(&["simulate", "--seed", "11", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (a, b) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config_sha256="));
    assert_eq!(lines.next().unwrap(), "t,p,i,action,reward,alpha_p,sigma_tilde_p,alpha_i,sigma_tilde_i");
    assert!(!text.contains('\r'));
    let other = stdout(&harvest(&["simulate", "--seed", "12"]));
    assert_ne!(other, text);
}

#[test]
fn missing_config_exits_2() {
    let o = harvest(&["simulate", "--config", "/definitely/not/here.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn too_small_dataset_names_the_lambda_rule() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"strategies": {"data_sizes": [2], "kinds": ["rl_with_mr"]}}"#).unwrap();
    let o = harvest(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("lambda > 1"), "{err}");
    assert!(err.contains("strategies.data_sizes"), "{err}");
}

#[test]
fn evaluate_header_and_columns() {
    let o = harvest(&["evaluate", "--reps", "3"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].ends_with("seed=1"));
    assert_eq!(lines[1], "strategy,J0,mean,sd,pct_of_pi_mdp,n_reps");
    assert_eq!(lines.len(), 2 + 11);
}

#[test]
fn boundary_requires_a_source() {
    assert_eq!(harvest(&["boundary"]).status.code(), Some(2));
    assert_eq!(harvest(&["boundary", "--j0", "2"]).status.code(), Some(2));
    let o = harvest(&["boundary", "--true", "--points", "8"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 2 + 8);
}

#[test]
fn forced_state_prints_forced_harvest() {
    let dir = tempfile::tempdir().unwrap();
    let k = dir.path().join("k.json");
    std::fs::write(&k, r#"{"alpha_p":0.49,"nu_p":10,"lambda_p":5,"beta_p":0.1,"alpha_i":0.49,"nu_i":10,"lambda_i":5,"beta_i":0.1}"#)
        .unwrap();
    let o = harvest(&["recommend", "--state", "6,8,8", "--knowledge", k.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).lines().nth(1).unwrap().starts_with("HARVEST (forced: time)"));
    let o = harvest(&["recommend", "--state", "6,8", "--knowledge", k.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn campaign_rows() {
    let o = harvest(&["campaign", "--runs", "4", "--seed", "3"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().nth(1).unwrap(), "run,total_reward,batches,failures,growth_periods,setup_periods");
    assert_eq!(text.lines().count(), 2 + 4);
}

async fn call(state: &AppState, method: &str, uri: &str, body: Option<Value>) -> Value {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    assert!(resp.status().is_success(), "{uri}: {}", resp.status());
    serde_json::from_slice(&resp.into_body().collect().await.unwrap().to_bytes()).unwrap()
}

#[tokio::test]
async fn replaying_a_session_matches_service_recommendations() {
    let truth = GrowthTruth::case_study();
    let st = AppState::new(Store::memory());
    let data = historical_data(&truth, 10, 4, 0);
    let created = call(&st, "POST", "/v1/sessions", Some(json!({"historical_data": data, "seed": 77}))).await;
    let id = created["id"].as_str().unwrap().to_owned();
    let cfg = ExperimentConfig::default();
    let dir = tempfile::tempdir().unwrap();
    let kfile = dir.path().join("k.json");

    let mut rng = seeded(5);
    let mut epochs = 0;
    for _ in 0..8 {
        let sess = call(&st, "GET", &format!("/v1/sessions/{id}"), None).await;
        let h: HyperState = serde_json::from_value(sess["state"].clone()).unwrap();
        for mode in [RecommendMode::Planner, RecommendMode::Myopic] {
            let q = if mode == RecommendMode::Planner { "planner" } else { "myopic" };
            let v = call(&st, "GET", &format!("/v1/sessions/{id}/recommendation?mode={q}"), None).await;
            let service: Recommendation = serde_json::from_value(v).unwrap();
            let cli = recommend_at(&cfg, &h, mode, 77, 0).unwrap();
            assert_eq!(cli.action, service.action, "epoch {}", h.t);
            assert_eq!(cli.forced, service.forced);
            assert!((cli.q_harvest - service.q_harvest).abs() < 1e-9);
            match (cli.q_continue, service.q_continue) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-9 * a.abs().max(1.0)),
                (a, b) => assert_eq!(a, b),
            }

            std::fs::write(&kfile, serde_json::to_string(&h.knowledge).unwrap()).unwrap();
            let state = format!("{},{},{}", h.physical.p, h.physical.i, h.t);
            let o = harvest(&["recommend", "--state", &state, "--knowledge", kfile.to_str().unwrap(), "--seed", "77", "--mode", q]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
            assert_eq!(stdout(&o).lines().nth(1).unwrap(), format_recommendation(&service));
        }
        if sess["state"]["t"].as_u64().unwrap() >= 8 || h.physical.p >= 30.0 {
            break;
        }
        let g = truth.sample(&mut rng);
        let next = json!({"p_next": h.physical.p * g.phi.exp(), "i_next": h.physical.i * g.psi.exp()});
        let obs = call(&st, "POST", &format!("/v1/sessions/{id}/observe"), Some(next)).await;
        epochs += 1;
        if obs["class"] != "free" {
            break;
        }
    }
    assert!(epochs >= 3);
}
