use std::sync::{Arc, OnceLock};
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use chromaseq::color::{VocabConfig, Vocabulary};
use chromaseq::document::sample_poster;
use chromaseq::eval::{synth_corpus, SynthConfig, SynthCorpus};
use chromaseq::model::{train, TrainConfig};
use chromaseq::{Checkpoint, ModelConfig};
use chromaseq_server::contract::run_contract_suite;
use chromaseq_server::{app, ServerConfig};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

fn checkpoint() -> Arc<Checkpoint> {
    static CK: OnceLock<Arc<Checkpoint>> = OnceLock::new();
    CK.get_or_init(|| {
        let corpus = synth_corpus(&SynthConfig::new(200, 1)).unwrap();
        let seqs = SynthCorpus::sequences(&corpus.train);
        let vocab = Vocabulary::build(&seqs, VocabConfig::default()).unwrap();
        let mut mc = ModelConfig::new(vocab.len());
        mc.d_model = 16;
        mc.n_heads = 2;
        mc.d_ff = 32;
        let tc = TrainConfig { epochs: 3, ..Default::default() };
        Arc::new(train(&seqs, &[], &vocab, &mc, &tc, |_| {}).unwrap().checkpoint)
    })
    .clone()
}

async fn send(router: &Router, method: &str, uri: &str, body: Vec<u8>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).body(Body::from(body)).unwrap();
    let resp = router.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

async fn upload(router: &Router) -> String {
    let (status, body) = send(router, "POST", "/documents", sample_poster().to_json().into_bytes()).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    body["id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn contract_suite_passes() {
    let ck = checkpoint();
    let router = app(ck.clone(), ServerConfig::default()).unwrap();
    let results = run_contract_suite(router, &sample_poster(), ck.vocab()).await;
    assert!(results.len() > 15);
    let failed: Vec<_> = results.iter().filter_map(|r| r.outcome.as_ref().err().map(|e| format!("{}: {e}", r.name))).collect();
    assert!(failed.is_empty(), "{failed:#?}");
}

#[tokio::test]
async fn idle_sessions_are_evicted() {
    let cfg = ServerConfig {
        session_ttl: Some(Duration::from_millis(20)),
        ..Default::default()
    };
    let router = app(checkpoint(), cfg).unwrap();
    let id = upload(&router).await;
    assert_eq!(send(&router, "GET", &format!("/documents/{id}"), vec![]).await.0, StatusCode::OK);
    tokio::time::sleep(Duration::from_millis(60)).await;
    assert_eq!(send(&router, "GET", &format!("/documents/{id}"), vec![]).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn sessions_survive_restart_when_persisted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ServerConfig {
        persist_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    let first = app(checkpoint(), cfg.clone()).unwrap();
    let id = upload(&first).await;
    let (_, fav) = send(&first, "POST", &format!("/documents/{id}/favorites"), b"{}".to_vec()).await;
    assert_eq!(fav["created"], true);
    let (_, before) = send(&first, "GET", &format!("/documents/{id}"), vec![]).await;

    let second = app(checkpoint(), cfg).unwrap();
    let (status, after) = send(&second, "GET", &format!("/documents/{id}"), vec![]).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(after, before);
    let (_, favs) = send(&second, "GET", &format!("/documents/{id}/favorites"), vec![]).await;
    assert_eq!(favs["favorites"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn concurrent_requests_on_one_document() {
    let router = app(checkpoint(), ServerConfig::default()).unwrap();
    let id = upload(&router).await;
    let mut tasks = Vec::new();
    for i in 0..8 {
        let (router, id) = (router.clone(), id.clone());
        tasks.push(tokio::spawn(async move {
            let body = if i % 2 == 0 {
                serde_json::json!({"slots": ["svg:0"], "n": 3})
            } else {
                serde_json::json!({"slots": ["text:0"], "n": 2})
            };
            send(&router, "POST", &format!("/documents/{id}/recommend"), body.to_string().into_bytes()).await
        }));
    }
    let mut bodies = Vec::new();
    for t in tasks {
        let (status, body) = t.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        bodies.push(body);
    }
    assert!(bodies.iter().step_by(2).all(|b| *b == bodies[0]));
    assert!(bodies.iter().skip(1).step_by(2).all(|b| *b == bodies[1]));
}

#[tokio::test]
async fn serves_its_schema() {
    let router = app(checkpoint(), ServerConfig::default()).unwrap();
    let (status, body) = send(&router, "GET", "/openapi.json", vec![]).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["openapi"], "3.1.0");
    assert!(body["paths"]["/documents/{id}/recolor"]["post"].is_object());
}
