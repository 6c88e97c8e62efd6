//! CLI/service parity: the same inputs through both front ends give the same bytes.

use std::path::Path;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use clap::Parser;
use dosestrat_service::{router, AppState, ServiceConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use crate::acceptance::Tally;
use crate::{run, Cli};

fn cli(args: &[&str]) -> Result<(), String> {
    let cli = Cli::try_parse_from(std::iter::once("dosestrat").chain(args.iter().copied()))
        .map_err(|e| e.to_string())?;
    run(cli).map_err(|e| e.to_string())
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<&Value>) -> (StatusCode, String) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = match req.body(body.map_or_else(Body::empty, |b| Body::from(b.to_string()))) {
        Ok(r) => r,
        Err(e) => return (StatusCode::BAD_REQUEST, e.to_string()),
    };
    let Ok(resp) = app.clone().oneshot(req).await;
    let status = resp.status();
    let text = match resp.into_body().collect().await {
        Ok(b) => String::from_utf8_lossy(&b.to_bytes()).into_owned(),
        Err(e) => e.to_string(),
    };
    (status, text)
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| format!("<unreadable: {e}>"))
}

/// Config files shared by both front ends.
struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> std::io::Result<Fixture> {
        let dir = tempfile::tempdir()?;
        let files = [
            ("synth.json", json!({ "n_patients": 150 })),
            ("spec.json", json!({ "organs": ["Parotid_Ipsi", "Tongue"], "window": { "lo": 40, "hi": 55 } })),
            ("params.json", json!({ "k": 3, "seed": 7 })),
            ("outcome.json", json!({ "confounders": ["smoker", "chemotherapy"] })),
            ("miner.json", json!({ "min_support": 8, "k_beam": 4 })),
        ];
        for (name, value) in files {
            std::fs::write(dir.path().join(name), value.to_string())?;
        }
        Ok(Fixture { dir })
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).display().to_string()
    }

    fn json(&self, name: &str) -> Value {
        serde_json::from_str(&read(&self.dir.path().join(name))).unwrap_or(Value::Null)
    }
}

pub(crate) fn cli_service_parity() -> Tally {
    let mut t = Tally::default();
    let fx = match Fixture::new() {
        Ok(f) => f,
        Err(e) => {
            t.fail(e.to_string());
            return t;
        }
    };
    let p = |n: &str| fx.path(n);
    let cohort = p("cohort.csv");

    // Batch side.
    for out in ["cohort.csv", "cohort_again.csv"] {
        if let Err(e) = cli(&["synth", "--config", &p("synth.json"), "--seed", "9", "--out", &p(out)]) {
            t.fail(format!("synth: {e}"));
            return t;
        }
    }
    t.check(read(Path::new(&cohort)) == read(Path::new(&p("cohort_again.csv"))), || {
        "synth is not deterministic".into()
    });
    let miner_path = p("miner.json");
    let inputs = [
        "--cohort", &cohort, "--spec", &p("spec.json"), "--params", &p("params.json"), "--outcome", &p("outcome.json"),
    ];
    let batch: [(&str, Vec<&str>); 6] = [
        ("lrt.json", vec!["lrt", "--thresholds", "3,4,5"]),
        ("lrt.csv", vec!["lrt", "--thresholds", "3,4,5"]),
        ("effects.csv", vec!["search", "--metric", "bic"]),
        ("effects.json", vec!["search", "--metric", "p"]),
        ("rules_cluster.json", vec!["rules", "--target", "cluster:2", "--miner", &miner_path]),
        ("rules_outcome.json", vec!["rules", "--target", "outcome", "--miner", &miner_path, "--all-features"]),
    ];
    for (out, args) in &batch {
        let out_path = p(out);
        let mut all: Vec<&str> = args.clone();
        all.extend(inputs);
        all.extend(["--out", &out_path]);
        if let Err(e) = cli(&all) {
            t.fail(format!("{}: {e}", args[0]));
        }
    }

    // Service side.
    let runtime = match tokio::runtime::Builder::new_current_thread().enable_all().build() {
        Ok(r) => r,
        Err(e) => {
            t.fail(e.to_string());
            return t;
        }
    };
    let app = router(AppState::new(None, ServiceConfig::default()));
    let miner = fx.json("miner.json");
    let served: Vec<(&str, StatusCode, String)> = runtime.block_on(async {
        let (status, text) = call(&app, "POST", "/session", Some(&json!({ "cohort": { "kind": "path", "path": cohort } }))).await;
        let id = serde_json::from_str::<Value>(&text)
            .ok()
            .and_then(|v| v["session"].as_str().map(String::from));
        let Some(id) = id else {
            return vec![("session", status, text)];
        };
        let mut out = Vec::new();
        for (part, file) in [("spec", "spec.json"), ("params", "params.json"), ("outcome", "outcome.json")] {
            let (status, text) = call(&app, "PUT", &format!("/session/{id}/{part}"), Some(&fx.json(file))).await;
            if status != StatusCode::OK {
                out.push((part, status, text));
            }
        }
        let gets = [
            ("lrt.json", format!("/session/{id}/lrt?thresholds=3,4,5")),
            ("lrt.csv", format!("/session/{id}/lrt?thresholds=3,4,5&format=csv")),
            ("effects.csv", format!("/session/{id}/additive_effects?metric=bic&format=csv")),
            ("effects.json", format!("/session/{id}/additive_effects?metric=p")),
        ];
        for (name, uri) in gets {
            let (status, text) = call(&app, "GET", &uri, None).await;
            out.push((name, status, text));
        }
        for (name, body) in [
            ("rules_cluster.json", json!({ "target": "cluster:2", "config": miner })),
            ("rules_outcome.json", json!({ "target": "outcome", "config": miner, "scope": "all_features" })),
        ] {
            let (status, text) = call(&app, "POST", &format!("/session/{id}/rules"), Some(&body)).await;
            out.push((name, status, text));
        }
        out
    });

    let mut compared = 0;
    for (name, status, text) in served {
        if status != StatusCode::OK {
            t.fail(format!("{name}: HTTP {status}: {text}"));
            continue;
        }
        let file = read(Path::new(&p(name)));
        t.check(file == text, || format!("{name}: CLI and service bodies differ"));
        compared += 1;
    }
    let effects = read(Path::new(&p("effects.csv")));
    t.check(effects.lines().count() == 50, || format!("effects.csv has {} lines", effects.lines().count()));
    t.note(format!("synth deterministic; {compared} bodies byte-identical (lrt json/csv, search csv/json, rules x2)"));
    t
}
