use std::path::Path;
use std::sync::OnceLock;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use cascade_advisory::{router, AppState, ServiceConfig};
use cascade_core::cascade::{CascadeSample, Policy};
use cascade_core::grid::native::{case_hash, to_json};
use cascade_core::grid::{ieee30, Contingency};
use cascade_core::influence::{PredictionMode, TrainedModel};
use cascade_core::pipeline::{predict, simulate_level, train_on_pools, write_json_compact, LoadedPool, RunConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

const LOADING: f64 = 1.2;

struct Trained {
    model: TrainedModel,
    samples: Vec<CascadeSample>,
}

fn trained(policy: Policy) -> &'static Trained {
    static NONE: OnceLock<Trained> = OnceLock::new();
    static SMART: OnceLock<Trained> = OnceLock::new();
    let cell = match policy {
        Policy::RedispatchSmart => &SMART,
        _ => &NONE,
    };
    cell.get_or_init(|| {
        let cfg = RunConfig { samples: 40, loading: vec![LOADING], policy, ..RunConfig::default() };
        let outcome = simulate_level(&ieee30(), &cfg, LOADING).unwrap();
        let pool = outcome.pool.unwrap();
        let samples = pool.samples.clone();
        let loaded = LoadedPool { path: "pool.jsonl".into(), manifest: outcome.manifest, pool };
        Trained { model: train_on_pools(&[loaded], &cfg).unwrap(), samples }
    })
}

fn store(policies: &[Policy]) -> TempDir {
    let dir = TempDir::new().unwrap();
    std::fs::create_dir_all(dir.path().join("cases")).unwrap();
    std::fs::create_dir_all(dir.path().join("models")).unwrap();
    std::fs::write(dir.path().join("cases/ieee30.json"), to_json(&ieee30())).unwrap();
    for &p in policies {
        write_model(dir.path(), &format!("{p}-c1.20"), p);
    }
    dir
}

fn write_model(store: &Path, id: &str, policy: Policy) {
    write_json_compact(&store.join(format!("models/{id}.json")), &trained(policy).model).unwrap();
}

fn app(store: &Path) -> Router {
    let state = AppState::open(store).unwrap();
    router(state, &ServiceConfig { store_dir: store.to_path_buf(), ..ServiceConfig::default() })
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call(app, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn advise_body(strategies: &[&str], weights: Option<[f64; 2]>) -> Value {
    let mut body = json!({
        "case_id": "ieee30",
        "contingency": [1, 2],
        "loading_c": LOADING,
        "strategies": strategies,
    });
    if let Some([l, s]) = weights {
        body["weights"] = json!({ "link_fail": l, "load_shed": s });
    }
    body
}

#[tokio::test]
async fn empty_store_lists_nothing() {
    let dir = TempDir::new().unwrap();
    let app = app(dir.path());
    assert_eq!(call_json(&app, "GET", "/cases", None).await, (StatusCode::OK, json!([])));
    assert_eq!(call_json(&app, "GET", "/models", None).await, (StatusCode::OK, json!([])));
}

#[tokio::test]
async fn lists_cases_and_models() {
    let dir = store(&[Policy::None]);
    let app = app(dir.path());
    let (status, cases) = call_json(&app, "GET", "/cases", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(cases[0]["id"], "ieee30");
    assert_eq!(cases[0]["case_hash"], case_hash(&ieee30()));
    assert_eq!(cases[0]["n_buses"], 30);
    assert_eq!(cases[0]["n_branches"], 41);

    let (_, models) = call_json(&app, "GET", "/models", None).await;
    assert_eq!(models.as_array().unwrap().len(), 1);
    assert_eq!(models[0]["id"], "none-c1.20");
    assert_eq!(models[0]["policy"], "none");
    assert_eq!(models[0]["case_hash"], case_hash(&ieee30()));
    assert_eq!(models[0]["loading_levels"], json!([LOADING]));
}

#[tokio::test]
async fn predict_matches_library() {
    let dir = store(&[Policy::None]);
    let app = app(dir.path());
    let (status, body) = call_json(
        &app,
        "POST",
        "/predict",
        Some(json!({ "model_id": "none-c1.20", "contingency": [3, 7], "loading_c": LOADING })),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let pair = Contingency::new(2, 6, 41).unwrap();
    let expected = predict(&trained(Policy::None).model, pair, LOADING, PredictionMode::Advisory, None).unwrap();
    assert_eq!(body, serde_json::to_value(&expected).unwrap());
    assert_eq!(body["contingency"], json!([3, 7]));
}

#[tokio::test]
async fn predict_eval_uses_posted_states() {
    let dir = store(&[Policy::None]);
    let app = app(dir.path());
    let sample = &trained(Policy::None).samples[0];
    let [a, b] = sample.initial_failures;
    let rows: Vec<Vec<u8>> = sample.states.iter().map(|r| r.iter().map(|&x| x as u8).collect()).collect();
    let request = json!({
        "model_id": "none-c1.20",
        "contingency": [a + 1, b + 1],
        "loading_c": LOADING,
        "mode": "eval",
        "states": rows,
    });
    let (status, body) = call_json(&app, "POST", "/predict", Some(request.clone())).await;
    assert_eq!(status, StatusCode::OK);
    let pair = Contingency::new(a, b, 41).unwrap();
    let expected =
        predict(&trained(Policy::None).model, pair, LOADING, PredictionMode::Eval, Some(&sample.states)).unwrap();
    assert_eq!(body, serde_json::to_value(&expected).unwrap());

    let mut missing = request;
    missing.as_object_mut().unwrap().remove("states");
    let (status, _) = call_json(&app, "POST", "/predict", Some(missing)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn predict_rejects_bad_requests() {
    let dir = store(&[Policy::None]);
    let app = app(dir.path());
    let req = |model: &str, pair: [usize; 2]| json!({ "model_id": model, "contingency": pair, "loading_c": LOADING });

    let (status, body) = call_json(&app, "POST", "/predict", Some(req("missing", [1, 2]))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "not_found");
    let (status, _) = call_json(&app, "POST", "/predict", Some(req("../models/none-c1.20", [1, 2]))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    for pair in [[0, 1], [2, 2], [1, 42]] {
        let (status, body) = call_json(&app, "POST", "/predict", Some(req("none-c1.20", pair))).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{pair:?}");
        assert!(body["message"].is_string());
    }

    let (status, body) = call_json(&app, "POST", "/predict", Some(json!({ "model_id": "none-c1.20" }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["code"], "invalid_request");
}

#[tokio::test]
async fn models_added_after_start_are_loaded_on_demand() {
    let dir = store(&[]);
    let app = app(dir.path());
    write_model(dir.path(), "late", Policy::None);
    let (status, _) = call_json(
        &app,
        "POST",
        "/predict",
        Some(json!({ "model_id": "late", "contingency": [1, 2], "loading_c": LOADING })),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let (_, models) = call_json(&app, "GET", "/models", None).await;
    assert_eq!(models[0]["id"], "late");
}

fn ranked(body: &Value) -> Vec<(f64, usize, usize)> {
    body["entries"]
        .as_array()
        .unwrap()
        .iter()
        .enumerate()
        .filter(|(_, e)| !e["rank"].is_null())
        .map(|(k, e)| (e["score"].as_f64().unwrap(), e["rank"].as_u64().unwrap() as usize, k))
        .collect()
}

#[tokio::test]
async fn advise_ranks_by_weighted_score() {
    let dir = store(&[Policy::None, Policy::RedispatchSmart]);
    let app = app(dir.path());
    for weights in [None, Some([1.0, 0.0]), Some([0.0, 1.0]), Some([2.0, 0.5])] {
        let (status, body) =
            call_json(&app, "POST", "/advise", Some(advise_body(&["none", "redispatch-smart"], weights))).await;
        assert_eq!(status, StatusCode::OK);
        let [wl, ws] = weights.unwrap_or([1.0, 1.0]);
        assert_eq!(body["weights"], json!({ "link_fail": wl, "load_shed": ws }));
        assert_eq!(body["case_hash"], case_hash(&ieee30()));
        for e in body["entries"].as_array().unwrap() {
            let score = wl * e["link_fail_loss"].as_f64().unwrap() + ws * e["load_shed_loss"].as_f64().unwrap();
            assert!((e["score"].as_f64().unwrap() - score).abs() <= 1e-12 * score.abs().max(1.0));
        }
        let mut rows = ranked(&body);
        assert_eq!(rows.len(), 2);
        rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
        let ranks: Vec<usize> = rows.iter().map(|r| r.1).collect();
        assert_eq!(ranks, vec![1, 2]);
    }
}

#[tokio::test]
async fn advise_smart_model_predicts_no_propagation() {
    let dir = store(&[Policy::RedispatchSmart]);
    let app = app(dir.path());
    let (status, body) = call_json(&app, "POST", "/advise", Some(advise_body(&["redispatch-smart"], None))).await;
    assert_eq!(status, StatusCode::OK);
    let entry = &body["entries"][0];
    assert_eq!(entry["rank"], 1);
    assert_eq!(entry["model_id"], "redispatch-smart-c1.20");
    let states = entry["predicted_cascade"]["states"].as_array().unwrap();
    assert_eq!(states.first(), states.last());
    assert!(entry["link_fail_loss"].as_f64().unwrap().is_finite());
}

#[tokio::test]
async fn advise_reports_missing_models_without_failing() {
    let dir = store(&[Policy::None]);
    let app = app(dir.path());
    let (status, body) =
        call_json(&app, "POST", "/advise", Some(advise_body(&["redispatch-full", "none"], None))).await;
    assert_eq!(status, StatusCode::OK);
    let missing = &body["entries"][0];
    assert_eq!(missing["strategy"], "redispatch-full");
    assert_eq!(missing["error"]["code"], "no_model");
    assert!(missing["rank"].is_null());
    assert!(missing["score"].is_null());
    assert_eq!(body["entries"][1]["rank"], 1);
}

#[tokio::test]
async fn advise_validates_input() {
    let dir = store(&[Policy::None]);
    let app = app(dir.path());
    let cases = [
        advise_body(&[], None),
        advise_body(&["none"], Some([0.0, 0.0])),
        advise_body(&["none"], Some([-1.0, 1.0])),
        json!({ "case_id": "ieee30", "contingency": [1, 1], "loading_c": LOADING, "strategies": ["none"] }),
        json!({ "case_id": "ieee30", "contingency": [1, 2], "loading_c": 0.0, "strategies": ["none"] }),
        json!({ "case_id": "ieee30", "contingency": [1, 2], "loading_c": LOADING, "strategies": ["bogus"] }),
    ];
    for body in cases {
        let (status, _) = call_json(&app, "POST", "/advise", Some(body.clone())).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
    }
    let mut unknown = advise_body(&["none"], None);
    unknown["case_id"] = json!("case118");
    let (status, _) = call_json(&app, "POST", "/advise", Some(unknown)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn advise_oracle_runs_the_simulator() {
    let dir = store(&[]);
    let app = app(dir.path());
    let (status, body) =
        call_json(&app, "POST", "/advise?oracle=true", Some(advise_body(&["none", "redispatch-smart"], None))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["oracle"], true);
    for e in body["entries"].as_array().unwrap() {
        assert!(e.get("predicted_cascade").is_none());
        let sample: CascadeSample = serde_json::from_value(e["oracle_sample"].clone()).unwrap();
        assert_eq!(sample.initial_failures, [0, 1]);
        assert_eq!(sample.loading_c, LOADING);
        let shed: Vec<usize> =
            sample.ever_shed().iter().enumerate().filter(|(_, &s)| s).map(|(i, _)| i + 1).collect();
        assert_eq!(e["shed_buses"], json!(shed));
    }
    let smart = &body["entries"][1]["oracle_sample"]["states"];
    let rows = smart.as_array().unwrap();
    assert_eq!(rows.first(), rows.last());
}

#[tokio::test]
async fn identical_requests_get_identical_bodies() {
    let dir = store(&[Policy::None, Policy::RedispatchSmart]);
    let body = advise_body(&["none", "redispatch-smart", "redispatch-full"], Some([1.0, 0.25]));
    let (s1, first) = call(&app(dir.path()), "POST", "/advise", Some(body.clone())).await;
    let (s2, second) = call(&app(dir.path()), "POST", "/advise", Some(body)).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(first, second);
}

#[tokio::test]
async fn criticality_ranks_every_link() {
    let dir = store(&[Policy::None]);
    let app = app(dir.path());
    let (status, body) = call_json(&app, "GET", "/criticality?model_id=none-c1.20", None).await;
    assert_eq!(status, StatusCode::OK);
    for (scores, ranks) in [("cd", "rank_cd"), ("ce", "rank_ce")] {
        let scores: Vec<f64> = serde_json::from_value(body[scores].clone()).unwrap();
        let ranks: Vec<usize> = serde_json::from_value(body[ranks].clone()).unwrap();
        assert_eq!(scores.len(), 41);
        let mut sorted = ranks.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (1..=41).collect::<Vec<_>>());
        for w in ranks.windows(2) {
            assert!(scores[w[0] - 1] >= scores[w[1] - 1]);
        }
    }
    let (status, _) = call_json(&app, "GET", "/criticality?model_id=nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn cors_allows_the_configured_origin() {
    let dir = store(&[]);
    let state = AppState::open(dir.path()).unwrap();
    let cfg = ServiceConfig {
        store_dir: dir.path().to_path_buf(),
        cors_origin: Some("http://localhost:5173".into()),
        static_dir: None,
    };
    let app = router(state, &cfg);
    let req = Request::get("/cases").header("origin", "http://localhost:5173").body(Body::empty()).unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert_eq!(resp.headers()["access-control-allow-origin"], "http://localhost:5173");
}
