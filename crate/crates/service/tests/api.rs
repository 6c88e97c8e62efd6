use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use dosestrat_core::cohort::{generate_synthetic_cohort, Cohort, SyntheticConfig};
use dosestrat_service::{router, AppState, ServiceConfig, REVISION_HEADER};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

struct Reply {
    status: StatusCode,
    revision: Option<u64>,
    content_type: String,
    text: String,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_str(&self.text).unwrap_or_else(|e| panic!("{e}: {}", self.text))
    }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let revision = resp
        .headers()
        .get(REVISION_HEADER)
        .map(|v| v.to_str().unwrap().parse().unwrap());
    let content_type = resp
        .headers()
        .get("content-type")
        .map(|v| v.to_str().unwrap().to_string())
        .unwrap_or_default();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    Reply {
        status,
        revision,
        content_type,
        text: String::from_utf8(bytes.to_vec()).unwrap(),
    }
}

fn app() -> (Arc<AppState>, Router) {
    let state = AppState::new(None, ServiceConfig::default());
    (Arc::clone(&state), router(state))
}

fn small_synthetic() -> Value {
    json!({ "kind": "synthetic", "config": { "n_patients": 80 }, "seed": 5 })
}

async fn new_session(app: &Router, cohort: Value) -> String {
    let r = call(app, "POST", "/session", Some(json!({ "cohort": cohort }))).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.text);
    r.json()["session"].as_str().unwrap().to_string()
}

fn twelve_organ_spec() -> Value {
    let organs: Vec<String> = dosestrat_core::cohort::layout::default_organs()
        .iter()
        .take(12)
        .map(|o| o.name().to_string())
        .collect();
    json!({ "organs": organs, "window": { "lo": 40, "hi": 55 } })
}

#[tokio::test]
async fn reads_are_idempotent_and_mutations_bump_the_revision() {
    let (_, app) = app();
    let id = new_session(&app, small_synthetic()).await;
    let spec = json!({ "organs": ["Parotid_Ipsi", "Parotid_Contra", "Tongue"] });
    let put = call(&app, "PUT", &format!("/session/{id}/spec"), Some(spec)).await;
    assert_eq!(put.status, StatusCode::OK, "{}", put.text);
    assert_eq!(put.revision, Some(1));
    assert_eq!(put.json()["window"], json!({ "lo": 40, "hi": 55 }));

    let a = call(&app, "GET", &format!("/session/{id}/clusters"), None).await;
    let b = call(&app, "GET", &format!("/session/{id}/clusters"), None).await;
    assert_eq!(a.status, StatusCode::OK);
    assert_eq!(a.text, b.text);
    assert_eq!(a.revision, Some(1));
    assert_eq!(a.json()["sizes"].as_array().unwrap().iter().map(|s| s.as_u64().unwrap()).sum::<u64>(), 80);

    let params = call(&app, "PUT", &format!("/session/{id}/params"), Some(json!({ "k": 2, "method": "kmeans" }))).await;
    assert_eq!(params.revision, Some(2));
    let c = call(&app, "GET", &format!("/session/{id}/clusters"), None).await;
    assert_eq!(c.revision, Some(2));
    assert_eq!(c.json()["k"], 2);

    let outcome = call(
        &app,
        "PUT",
        &format!("/session/{id}/outcome"),
        Some(json!({ "confounders": ["smoker", "chemotherapy"], "selected_cluster": 0 })),
    )
    .await;
    assert_eq!(outcome.status, StatusCode::OK, "{}", outcome.text);
    assert_eq!(outcome.json()["threshold"], 4);
    let got = call(&app, "GET", &format!("/session/{id}/outcome"), None).await;
    assert_eq!(got.text, outcome.text);
    let info = call(&app, "GET", &format!("/session/{id}"), None).await;
    assert_eq!(info.json()["revision"], 3);
    assert_eq!(info.json()["patients"], 80);
}

#[tokio::test]
async fn additive_effects_cover_all_49_candidates() {
    let (_, app) = app();
    let id = new_session(&app, small_synthetic()).await;
    call(&app, "PUT", &format!("/session/{id}/spec"), Some(twelve_organ_spec())).await;
    let r = call(&app, "GET", &format!("/session/{id}/additive_effects?metric=bic"), None).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text);
    assert_eq!(r.json()["entries"].as_array().unwrap().len(), 49);
    let csv = call(&app, "GET", &format!("/session/{id}/additive_effects?metric=p&format=csv"), None).await;
    assert!(csv.content_type.starts_with("text/csv"));
    assert_eq!(csv.text.lines().count(), 50);
    let bad = call(&app, "GET", &format!("/session/{id}/additive_effects?metric=xyz"), None).await;
    assert_eq!(bad.status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn views_render() {
    let (_, app) = app();
    let id = new_session(&app, small_synthetic()).await;
    call(&app, "PUT", &format!("/session/{id}/spec"), Some(json!({ "organs": ["Parotid_Ipsi", "Tongue"] }))).await;
    let lrt = call(&app, "GET", &format!("/session/{id}/lrt?thresholds=3,4,5"), None).await;
    assert_eq!(lrt.status, StatusCode::OK, "{}", lrt.text);
    assert_eq!(lrt.json()["results"].as_array().unwrap().len(), 3);
    let grid = call(&app, "GET", &format!("/session/{id}/outcome_grid?date_bins=5"), None).await;
    assert_eq!(grid.json()["date_bins"].as_array().unwrap().len(), 5);
    let scatter = call(&app, "GET", &format!("/session/{id}/scatter?x=dose_pc1&y=rating:drymouth:6mo_post"), None).await;
    assert_eq!(scatter.status, StatusCode::OK, "{}", scatter.text);
    assert_eq!(scatter.json()["points"].as_array().unwrap().len(), 80);
    let pid = scatter.json()["points"][0]["patient"].as_str().unwrap().to_string();
    let patient = call(&app, "GET", &format!("/session/{id}/patient/{pid}"), None).await;
    assert_eq!(patient.json()["id"], pid.as_str());
    assert_eq!(patient.json()["dvh"].as_object().unwrap().len(), 45);
    let rules = call(
        &app,
        "POST",
        &format!("/session/{id}/rules"),
        Some(json!({ "target": "cluster:2", "config": { "min_support": 5 } })),
    )
    .await;
    assert_eq!(rules.status, StatusCode::OK, "{}", rules.text);
    let set = &rules.json()["rulesets"][0];
    assert!(set["rules"][0]["op"] == ">=");
    assert_eq!(set["trace"].as_array().unwrap().len(), 80);
    let layout = call(&app, "GET", "/layout", None).await;
    assert_eq!(layout.status, StatusCode::OK);
    assert!(layout.json().is_array() || layout.json().is_object());
}

fn calm_cohort() -> Value {
    let synth = generate_synthetic_cohort(
        &SyntheticConfig {
            n_patients: 40,
            ..SyntheticConfig::default()
        },
        1,
    )
    .unwrap();
    let c = synth.cohort;
    let mut patients = c.patients().to_vec();
    for p in &mut patients {
        for s in &mut p.symptoms {
            s.ratings.iter_mut().for_each(|r| *r = Some(2));
        }
    }
    let calm = Cohort::new(
        c.organs().to_vec(),
        c.time_points().to_vec(),
        c.symptoms().to_vec(),
        c.confounders().to_vec(),
        patients,
        false,
    )
    .unwrap();
    serde_json::from_str(&calm.to_json_string().unwrap()).unwrap()
}

#[tokio::test]
async fn constant_rule_target_is_a_diagnostic_not_an_error() {
    let (_, app) = app();
    let id = new_session(&app, json!({ "kind": "inline", "cohort": calm_cohort() })).await;
    let r = call(&app, "POST", &format!("/session/{id}/rules"), Some(json!({ "target": "outcome" }))).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text);
    assert_eq!(r.json()["rulesets"], json!([]));
    assert!(r.json()["diagnostic"].as_str().unwrap().contains("constant"));
}

#[tokio::test]
async fn error_statuses() {
    let (state, app) = app();
    assert_eq!(call(&app, "GET", "/session/nope/clusters", None).await.status, StatusCode::NOT_FOUND);
    let id = new_session(&app, small_synthetic()).await;
    let missing = call(&app, "GET", &format!("/session/{id}/patient/ghost"), None).await;
    assert_eq!(missing.status, StatusCode::NOT_FOUND);

    let bad = call(&app, "PUT", &format!("/session/{id}/spec"), Some(json!({ "organs": ["Spleen"] }))).await;
    assert_eq!(bad.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(bad.json()["field"], "organ");
    let window = call(
        &app,
        "PUT",
        &format!("/session/{id}/spec"),
        Some(json!({ "organs": ["Tongue"], "window": { "lo": 42, "hi": 55 } })),
    )
    .await;
    assert_eq!(window.json()["field"], "window.lo");
    let unknown = call(&app, "PUT", &format!("/session/{id}/params"), Some(json!({ "kk": 3 }))).await;
    assert_eq!(unknown.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(call(&app, "GET", &format!("/session/{id}"), None).await.json()["revision"], 0);

    let session = state.session(&id).unwrap();
    let guard = session.begin_mutation().unwrap();
    let busy = call(&app, "PUT", &format!("/session/{id}/params"), Some(json!({ "k": 4 }))).await;
    assert_eq!(busy.status, StatusCode::CONFLICT);
    let read = call(&app, "GET", &format!("/session/{id}/params"), None).await;
    assert_eq!(read.status, StatusCode::OK);
    drop(guard);
    let too_few = call(&app, "PUT", &format!("/session/{id}/params"), Some(json!({ "k": 200, "method": "kmeans" }))).await;
    assert_eq!(too_few.status, StatusCode::OK);
    let fail = call(&app, "GET", &format!("/session/{id}/clusters"), None).await;
    assert_eq!(fail.status, StatusCode::INTERNAL_SERVER_ERROR);
    assert_eq!(fail.json()["error"], "need more rows than clusters (rows = 80, k = 200)");
    assert_eq!(fail.json()["kind"], "engine");
}

#[tokio::test]
async fn sessions_save_and_load() {
    let (_, app) = app();
    let id = new_session(&app, small_synthetic()).await;
    call(&app, "PUT", &format!("/session/{id}/spec"), Some(json!({ "organs": ["Parotid_Ipsi", "Tongue"] }))).await;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("session.json");
    let saved = call(&app, "POST", &format!("/session/{id}/save"), Some(json!({ "path": path }))).await;
    assert_eq!(saved.status, StatusCode::OK, "{}", saved.text);
    let loaded = call(&app, "POST", "/session/load", Some(json!({ "path": path }))).await;
    assert_eq!(loaded.status, StatusCode::CREATED, "{}", loaded.text);
    let id2 = loaded.json()["session"].as_str().unwrap().to_string();
    let a = call(&app, "GET", &format!("/session/{id}/clusters"), None).await;
    let b = call(&app, "GET", &format!("/session/{id2}/clusters"), None).await;
    assert_eq!(a.text, b.text);
    let export = call(&app, "GET", &format!("/session/{id}/export"), None).await;
    assert_eq!(export.text, std::fs::read_to_string(&path).unwrap());
    assert_eq!(call(&app, "DELETE", &format!("/session/{id}"), None).await.status, StatusCode::NO_CONTENT);
    assert_eq!(call(&app, "GET", &format!("/session/{id}"), None).await.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn default_cohort_and_cors() {
    let (_, app) = app();
    let none = call(&app, "POST", "/session", None).await;
    assert_eq!(none.status, StatusCode::UNPROCESSABLE_ENTITY);
    let cohort = generate_synthetic_cohort(
        &SyntheticConfig {
            n_patients: 30,
            ..SyntheticConfig::default()
        },
        2,
    )
    .unwrap()
    .cohort;
    let app = router(AppState::new(Some(cohort), ServiceConfig::default()));
    let r = call(&app, "POST", "/session", None).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.text);
    assert_eq!(r.json()["patients"], 30);
    let req = Request::builder()
        .uri("/layout")
        .header("origin", "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert_eq!(resp.headers().get("access-control-allow-origin").unwrap(), "*");
}
