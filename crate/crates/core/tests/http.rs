mod common;

use std::sync::{Arc, Mutex};

use serde_json::{json, Value};
use worldplan_core::arena::read_log;
use worldplan_core::arena::server::router;
use worldplan_core::{ArenaConfig, ArenaState};

const MODELS: [&str; 3] = ["alpha_model", "beta_model", "gamma_model"];

fn config() -> ArenaConfig {
    let mut cfg = ArenaConfig::new(&MODELS, &["kitchen"]);
    cfg.annotations_per_item = Some(1);
    cfg.seed = 11;
    cfg
}

async fn spawn(state: ArenaState) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let app = router(Arc::new(Mutex::new(state)));
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    format!("http://{addr}")
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_annotators_over_tcp() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("battles.jsonl");
    let inv = common::inventory(&["kitchen"], &MODELS, 2);
    let base = spawn(ArenaState::open(config(), inv.clone(), &log).unwrap()).await;
    let client = reqwest::Client::new();

    // 3 setups x 2 goals, each item served once.
    let mut battles = Vec::new();
    for _ in 0..6 {
        let resp = client
            .get(format!("{base}/api/battle/next"))
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status(), 200);
        let text = resp.text().await.unwrap();
        assert!(MODELS.iter().all(|m| !text.contains(m)), "{text}");
        battles.push(serde_json::from_str::<Value>(&text).unwrap());
    }
    let resp = client
        .get(format!("{base}/api/battle/next"))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 404);
    assert_eq!(resp.json::<Value>().await.unwrap()["error"], "exhausted");

    let tasks: Vec<_> = battles
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let client = client.clone();
            let url = format!(
                "{base}/api/battle/{}/choice",
                b["battle_id"].as_str().unwrap()
            );
            let winner = if i % 2 == 0 { "A" } else { "B" };
            tokio::spawn(async move {
                let resp = client
                    .post(url)
                    .json(&json!({"winner": winner, "annotator": format!("ann{i}")}))
                    .send()
                    .await
                    .unwrap();
                assert_eq!(resp.status(), 200);
                resp.json::<Value>().await.unwrap()["seq"].as_u64().unwrap()
            })
        })
        .collect();
    let mut seqs = Vec::new();
    for t in tasks {
        seqs.push(t.await.unwrap());
    }
    seqs.sort();
    assert_eq!(seqs, [1, 2, 3, 4, 5, 6]);

    let resp = client
        .post(format!(
            "{base}/api/battle/{}/choice",
            battles[0]["battle_id"].as_str().unwrap()
        ))
        .json(&json!({"winner": "B", "annotator": "late"}))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 409);

    let export = client
        .get(format!("{base}/api/export"))
        .send()
        .await
        .unwrap();
    assert_eq!(export.headers()["content-type"], "application/x-ndjson");
    let export = export.text().await.unwrap();
    assert_eq!(export, std::fs::read_to_string(&log).unwrap());
    let records = read_log(export.as_bytes()).unwrap();
    let order: Vec<u64> = records.iter().map(|r| r.seq).collect();
    assert_eq!(order, [1, 2, 3, 4, 5, 6]);

    let board: Value = client
        .get(format!("{base}/api/leaderboard"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    let total: f64 = board["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["elo"].as_f64().unwrap())
        .sum();
    assert!((total - 3000.0).abs() < 1e-9);

    // A restarted server replays the log to the same table.
    let reopened = ArenaState::open(config(), inv, &log).unwrap();
    assert_eq!(serde_json::to_value(reopened.leaderboard()).unwrap(), board);
}

#[tokio::test]
async fn malformed_requests_are_rejected() {
    let base =
        spawn(ArenaState::new(config(), common::inventory(&["kitchen"], &MODELS, 1)).unwrap())
            .await;
    let client = reqwest::Client::new();
    let id = client
        .get(format!("{base}/api/battle/next"))
        .send()
        .await
        .unwrap()
        .json::<Value>()
        .await
        .unwrap()["battle_id"]
        .as_str()
        .unwrap()
        .to_string();
    let url = format!("{base}/api/battle/{id}/choice");

    let resp = client
        .post(&url)
        .json(&json!({"winner": "draw"}))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 422);
    assert_eq!(
        resp.json::<Value>().await.unwrap()["error"],
        "invalid_winner"
    );

    let resp = client
        .post(&url)
        .header("content-type", "application/json")
        .body("{not json")
        .send()
        .await
        .unwrap();
    assert!(resp.status().is_client_error());

    let resp = client
        .get(format!("{base}/api/nothing"))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 404);

    // The rejected attempts left the battle open.
    let resp = client
        .post(&url)
        .json(&json!({"winner": "A"}))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 200, "{}", resp.text().await.unwrap());
}
