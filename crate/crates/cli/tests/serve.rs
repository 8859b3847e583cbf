use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use futures_util::{SinkExt, StreamExt};
use hetsoc_cli::serve::{drive, router, serve, Advance, AppState, Served};
use hetsoc_core::case_study::{build_pmo, PmoFixture};
use hetsoc_core::robot::RobotSim;
use hetsoc_core::runtime::{RunConfig, SocietyRun};
use serde_json::{json, Value};
use tokio_tungstenite::tungstenite::Message;
use tower::ServiceExt;

fn state() -> (AppState, PmoFixture) {
    let f = build_pmo();
    let mut run = SocietyRun::new(&f.spec, &f.derivation, RunConfig::default()).unwrap();
    run.attach_robot(Box::new(RobotSim::new()));
    (Served::new(run, Duration::ZERO), f)
}

async fn call(state: &AppState, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

/// The scripted answer for a request, as a POST body.
fn answer_for(f: &PmoFixture, request: &Value) -> Value {
    let proc = request["procedure"].as_str().unwrap();
    let a = &f.answers.answers[proc][0];
    json!({"outputs": a.outputs, "robot_commands": a.robot_commands})
}

async fn pending(state: &AppState) -> Vec<Value> {
    for _ in 0..200 {
        let (status, body) = call(state, "GET", "/requests", None).await;
        assert_eq!(status, StatusCode::OK);
        let list = body.as_array().unwrap().clone();
        if !list.is_empty() {
            return list;
        }
        if call(state, "GET", "/marking", None).await.1["quiescent"] == json!(true) {
            return list;
        }
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    panic!("no request and not quiescent");
}

#[tokio::test]
async fn endpoints_drive_the_society_to_quiescence() {
    let (s, f) = state();
    let driver = tokio::spawn(drive(s.clone()));

    let first = pending(&s).await;
    assert_eq!(first.len(), 1);
    assert_eq!(first[0]["procedure"], "Des");
    assert_eq!(first[0]["agent"], "WP");
    assert_eq!(first[0]["state"], "pending");
    let id = first[0]["id"].as_str().unwrap().to_string();

    let (status, _) = call(&s, "POST", "/requests/req-99/result", Some(json!({"outputs": {}}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, body) = call(&s, "POST", &format!("/requests/{id}/result"), Some(json!({"outputs": {"Bogus": "x"}}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
    let (status, _) = call(&s, "POST", &format!("/requests/{id}/result"), Some(json!({"outputs": {}}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&s, "POST", &format!("/requests/{id}/result"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let mut claimed = answer_for(&f, &first[0]);
    claimed["agent"] = json!("M");
    let (status, _) = call(&s, "POST", &format!("/requests/{id}/result"), Some(claimed.clone())).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    assert_eq!(pending(&s).await.len(), 1);
    claimed["agent"] = json!("WP");

    let (status, _) = call(&s, "POST", &format!("/requests/{id}/result"), Some(claimed)).await;
    assert_eq!(status, StatusCode::OK);
    let (status, _) = call(&s, "POST", &format!("/requests/{id}/result"), Some(answer_for(&f, &first[0]))).await;
    assert_eq!(status, StatusCode::CONFLICT);

    loop {
        let reqs = pending(&s).await;
        if reqs.is_empty() {
            break;
        }
        for r in reqs {
            let uri = format!("/requests/{}/result", r["id"].as_str().unwrap());
            let (status, body) = call(&s, "POST", &uri, Some(answer_for(&f, &r))).await;
            assert_eq!(status, StatusCode::OK, "{body}");
        }
    }
    assert_eq!(driver.await.unwrap(), Advance::Quiescent);

    let (_, trace) = call(&s, "GET", "/trace", None).await;
    let trace = trace.as_array().unwrap();
    let work: Vec<&str> = trace
        .iter()
        .filter(|e| e["kind"] == "work")
        .map(|e| e["procedure"].as_str().unwrap())
        .collect();
    assert_eq!(work.len(), 6);
    assert_eq!(work[0], "Des");
    assert_eq!(work[5], "C");
    for (i, e) in trace.iter().enumerate() {
        assert_eq!(e["seq"], json!(i + 1));
    }

    let (_, m) = call(&s, "GET", "/marking", None).await;
    assert_eq!(m["quiescent"], true);
    assert_eq!(m["agents"].as_object().unwrap().len(), 3);
    assert_eq!(m["agents"]["M"]["status"], "done");
    assert!(m["channels"].as_array().unwrap().iter().all(|c| c["messages"].as_array().unwrap().is_empty()));
}

async fn next_frame<S>(ws: &mut S) -> Value
where
    S: StreamExt<Item = Result<Message, tokio_tungstenite::tungstenite::Error>> + Unpin,
{
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(10), ws.next()).await.expect("frame timeout");
        if let Message::Text(t) = msg.unwrap().unwrap() {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

#[tokio::test]
async fn websocket_streams_events_and_accepts_results() {
    let (s, f) = state();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve(listener, s.clone()));

    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/events")).await.unwrap();
    let mut seqs = Vec::new();
    let mut kinds = Vec::new();
    loop {
        let frame = next_frame(&mut ws).await;
        let obj = frame.as_object().unwrap();
        assert_eq!(obj.len(), 3, "{frame}");
        let kind = frame["type"].as_str().unwrap().to_string();
        let seq = frame["seq"].as_u64().unwrap();
        if seq == 0 {
            assert_eq!(kind, "ack", "{frame}");
            continue;
        }
        seqs.push(seq);
        kinds.push(kind.clone());
        match kind.as_str() {
            "request" => {
                let answer = answer_for(&f, &frame["payload"]);
                let mut payload = answer.as_object().unwrap().clone();
                payload.insert("id".into(), frame["payload"]["id"].clone());
                let out = json!({"type": "result", "payload": payload});
                ws.send(Message::Text(out.to_string().into())).await.unwrap();
            }
            "quiescent" => break,
            "error" => panic!("{frame}"),
            _ => {}
        }
    }
    assert_eq!(seqs, (1..=seqs.len() as u64).collect::<Vec<_>>());
    assert_eq!(kinds.iter().filter(|k| *k == "request").count(), 4);
    assert_eq!(kinds.iter().filter(|k| *k == "answered").count(), 4);
    assert!(kinds.iter().any(|k| k == "robot"));

    // a bad frame is answered, not logged
    ws.send(Message::Text(json!({"type": "result", "payload": {"id": "req-1", "outputs": {}}}).to_string().into()))
        .await
        .unwrap();
    let reply = next_frame(&mut ws).await;
    assert_eq!(reply["type"], "error");
    assert_eq!(reply["seq"], 0);
    assert_eq!(reply["payload"]["status"], 409);

    // resuming replays only the tail
    let n = seqs.len() as u64;
    let (mut again, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/events?since={}", n - 3)).await.unwrap();
    for want in n - 2..=n {
        assert_eq!(next_frame(&mut again).await["seq"], want);
    }
}
