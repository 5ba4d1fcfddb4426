use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use chainvoice_core::bn::{query, Evidence};
use chainvoice_core::model::{ids, FinanceModel};
use chainvoice_gateway::server::{router, VERSION_HEADER};
use chainvoice_gateway::session::Session;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app() -> Router {
    router(Arc::new(Mutex::new(Session::standard(42).unwrap())), None)
}

struct Reply {
    status: StatusCode,
    version: u64,
    body: Value,
}

async fn call(
    app: &Router,
    method: &str,
    uri: &str,
    token: Option<&str>,
    body: Option<Value>,
) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let version = resp.headers()[VERSION_HEADER]
        .to_str()
        .unwrap()
        .parse()
        .unwrap();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let body: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(body["version"], json!(version));
    Reply {
        status,
        version,
        body,
    }
}

async fn token(app: &Router, party: &str) -> String {
    let r = call(app, "GET", "/v1/session", None, None).await;
    r.body["parties"]
        .as_array()
        .unwrap()
        .iter()
        .find(|p| p["party"] == party)
        .unwrap()["token"]
        .as_str()
        .unwrap()
        .to_string()
}

fn probability(posterior: &Value, state: &str) -> f64 {
    posterior["distribution"]
        .as_array()
        .unwrap()
        .iter()
        .find(|s| s["state"] == state)
        .unwrap()["probability"]
        .as_f64()
        .unwrap()
}

#[tokio::test]
async fn query_matches_the_engine() {
    let app = app();
    let r = call(
        &app,
        "POST",
        "/v1/query",
        None,
        Some(json!({ "model": "supplier_profile", "evidence": { "GWaL": "Yes" }, "target": "SupplierProfile" })),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK);
    let p = probability(&r.body["posterior"], "LowRisk");
    assert!((p - 0.795).abs() <= 0.01);

    let model = FinanceModel::golden();
    let direct = query(
        model.network(chainvoice_core::model::ModelKind::SupplierProfile),
        &Evidence::new().with(ids::GWAL, "Yes"),
        ids::SUPPLIER_PROFILE,
    )
    .unwrap();
    assert_eq!(p, direct.probability("LowRisk").unwrap());
}

#[tokio::test]
async fn empty_evidence_is_uniform() {
    let app = app();
    let r = call(
        &app,
        "POST",
        "/v1/query",
        None,
        Some(json!({ "target": "FinancingDecision" })),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK);
    assert!((probability(&r.body["posterior"], "Fund") - 0.5).abs() <= 1e-6);
}

#[tokio::test]
async fn malformed_and_unknown_queries_are_bad_requests() {
    let app = app();
    let mut req = Request::builder()
        .method("POST")
        .uri("/v1/query")
        .body(Body::from("{not json"))
        .unwrap();
    req.headers_mut()
        .insert(header::CONTENT_TYPE, "application/json".parse().unwrap());
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);

    let r = call(
        &app,
        "POST",
        "/v1/query",
        None,
        Some(json!({ "target": "Ghost" })),
    )
    .await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert!(r.body["message"].as_str().unwrap().contains("Ghost"));

    let r = call(
        &app,
        "POST",
        "/v1/query",
        None,
        Some(json!({ "evidence": { "GWaL": "Maybe" }, "target": "FinancingDecision" })),
    )
    .await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.body["error"], "invalid_query");
    assert!(
        r.body["message"].as_str().unwrap().contains("GWaL"),
        "{}",
        r.body
    );
}

#[tokio::test]
async fn eric_is_refused_the_t2t3_log() {
    let app = app();
    let eric = token(&app, "FarmerEric").await;
    let r = call(&app, "GET", "/v1/chains/T2T3/log", Some(&eric), None).await;
    assert_eq!(r.status, StatusCode::FORBIDDEN);
    assert_eq!(r.body["error"], "privacy_violation");

    let fran = token(&app, "FarmerFran").await;
    let r = call(&app, "GET", "/v1/chains/T2T3/log", Some(&fran), None).await;
    assert_eq!(r.status, StatusCode::OK);
    assert!(!r.body["entries"].as_array().unwrap().is_empty());

    let r = call(&app, "GET", "/v1/chains/T2T3/log", None, None).await;
    assert_eq!(r.status, StatusCode::UNAUTHORIZED);
    let forged = format!("FarmerFran.{}", "00".repeat(64));
    let r = call(&app, "GET", "/v1/chains/T2T3/log", Some(&forged), None).await;
    assert_eq!(r.status, StatusCode::UNAUTHORIZED);
    let r = call(&app, "GET", "/v1/chains/Nope/log", Some(&fran), None).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn chain_list_hides_details_from_non_members() {
    let app = app();
    let eric = token(&app, "FarmerEric").await;
    let r = call(&app, "GET", "/v1/chains", Some(&eric), None).await;
    for c in r.body["chains"].as_array().unwrap() {
        assert_eq!(c["member"], false);
        assert!(c.get("members").is_none());
        assert!(c.get("balances").is_none());
    }
    let fran = token(&app, "FarmerFran").await;
    let r = call(&app, "GET", "/v1/chains", Some(&fran), None).await;
    let t2t3 = r.body["chains"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["id"] == "T2T3")
        .unwrap()
        .clone();
    assert_eq!(t2t3["member"], true);
    assert!(t2t3["members"]
        .as_array()
        .unwrap()
        .contains(&json!("FarmerFran")));
}

#[tokio::test]
async fn request_flow_with_versions_and_faults() {
    let app = app();
    let fran = token(&app, "FarmerFran").await;
    let ilze = token(&app, "FinancierIlze").await;
    let eric = token(&app, "FarmerEric").await;

    let r = call(&app, "POST", "/v1/requests", Some(&eric), Some(json!({}))).await;
    assert_eq!(r.status, StatusCode::FORBIDDEN);
    assert_eq!(r.version, 0);

    let r = call(
        &app,
        "POST",
        "/v1/requests",
        Some(&fran),
        Some(json!({ "expected_version": 0 })),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.body);
    assert_eq!(r.version, 1);
    assert_eq!(r.body["outcome"]["decision"], "Fund");
    assert_eq!(r.body["outcome"]["settlement"]["amount"], 10_000);

    // stale what-if submission
    let r = call(
        &app,
        "POST",
        "/v1/requests",
        Some(&ilze),
        Some(json!({ "expected_version": 0 })),
    )
    .await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    assert_eq!(r.version, 1);

    let r = call(
        &app,
        "POST",
        "/v1/faults",
        None,
        Some(json!({ "fault": { "at": "step", "step": 11 } })),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.version, 2);
    let r = call(&app, "GET", "/v1/faults", None, None).await;
    assert_eq!(r.body["fault"], json!({ "at": "step", "step": 11 }));

    let r = call(
        &app,
        "POST",
        "/v1/requests",
        Some(&ilze),
        Some(json!({ "decision": "approve" })),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.version, 3);
    let outcome = &r.body["outcome"];
    assert!(outcome.get("settlement").is_none());
    assert_eq!(outcome["pre_tx_digest"], outcome["final_digest"]);
    assert_eq!(outcome["steps"][10]["status"], "failed");

    // the fault applied to one run only
    let r = call(&app, "GET", "/v1/faults", None, None).await;
    assert_eq!(r.body["fault"], Value::Null);

    let r = call(
        &app,
        "POST",
        "/v1/requests",
        Some(&ilze),
        Some(json!({ "decision": "decline" })),
    )
    .await;
    assert_eq!(r.body["outcome"]["decision"], "DoNotFund");
    assert_eq!(r.body["outcome"]["steps"][10]["status"], "failed");
}

#[tokio::test]
async fn same_seed_and_requests_give_same_history() {
    async fn history() -> Vec<(u64, Value)> {
        let app = app();
        let fran = token(&app, "FarmerFran").await;
        let mut out = Vec::new();
        for body in [
            json!({}),
            json!({ "fault": "commit" }),
            json!({ "decision": "decline" }),
        ] {
            let r = if body.get("fault").is_some() {
                let plan = json!({ "fault": { "at": "commit" } });
                call(&app, "POST", "/v1/faults", None, Some(plan)).await
            } else {
                call(&app, "POST", "/v1/requests", Some(&fran), Some(body)).await
            };
            out.push((r.version, r.body));
        }
        let fran_chains = call(&app, "GET", "/v1/chains", Some(&fran), None).await;
        out.push((fran_chains.version, fran_chains.body));
        out
    }
    assert_eq!(history().await, history().await);
}

#[tokio::test]
async fn models_and_scenarios_are_listed() {
    let app = app();
    let r = call(&app, "GET", "/v1/models", None, None).await;
    assert_eq!(
        r.body["models"]["overall"]["nodes"]
            .as_array()
            .unwrap()
            .len(),
        10
    );
    let r = call(&app, "GET", "/v1/scenarios", None, None).await;
    assert_eq!(r.body["scenarios"].as_array().unwrap().len(), 15);
}
