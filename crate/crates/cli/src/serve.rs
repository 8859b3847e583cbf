//! HTTP and websocket front of a running society.
//!
//! The run advances on its own between requests; human procedures wait for
//! a `POST /requests/{id}/result` (or a `result` frame on the socket). Every
//! event of the run is pushed to `/events` subscribers as a
//! `{type, payload, seq}` frame. A client reconnecting with `?since=N`
//! receives the frames after `N`. Replies to client frames carry `seq` 0 and
//! are not part of the event log.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hetsoc_core::cpn::{Token, TokenValue};
use hetsoc_core::runtime::{HumanRequest, RuntimeError, SocietyRun};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::sync::{watch, Notify};

/// Outcome of one attempt to advance the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Advance {
    Progress,
    /// Waiting for a human answer.
    Blocked,
    Quiescent,
    Failed,
}

pub struct Served {
    run: Mutex<SocietyRun>,
    /// Latest event seq, for waking subscribers.
    latest: watch::Sender<u64>,
    wake: Notify,
    step_delay: Duration,
    finished: Mutex<Option<Advance>>,
}

pub type AppState = Arc<Served>;

impl Served {
    pub fn new(run: SocietyRun, step_delay: Duration) -> AppState {
        let latest = run.events().len() as u64;
        Arc::new(Served {
            run: Mutex::new(run),
            latest: watch::Sender::new(latest),
            wake: Notify::new(),
            step_delay,
            finished: Mutex::new(None),
        })
    }

    pub fn run(&self) -> MutexGuard<'_, SocietyRun> {
        self.run.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn publish(&self, run: &SocietyRun) {
        self.latest.send_replace(run.events().len() as u64);
    }

    /// Takes one step. Quiescence and failures are logged as `quiescent`
    /// and `error` events, once.
    pub fn advance(&self) -> Advance {
        let mut finished = self.finished.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(done) = *finished {
            return done;
        }
        let mut run = self.run();
        let outcome = if run.is_quiescent() {
            let steps = run.steps();
            run.log_event("quiescent", json!({"steps": steps}));
            Advance::Quiescent
        } else {
            match run.step() {
                Ok(true) => Advance::Progress,
                Ok(false) if !run.pending_requests().is_empty() => Advance::Blocked,
                Ok(false) => {
                    let queued = run.channels.queued();
                    run.log_event("error", json!({"message": RuntimeError::Deadlock { queued }.to_string()}));
                    Advance::Failed
                }
                Err(e) => {
                    run.log_event("error", json!({"message": e.to_string()}));
                    Advance::Failed
                }
            }
        };
        if matches!(outcome, Advance::Quiescent | Advance::Failed) {
            *finished = Some(outcome);
        }
        self.publish(&run);
        outcome
    }

    /// Checks `body` against the request's schema and submits it.
    pub fn submit(&self, id: &str, body: ResultBody) -> Result<(), (StatusCode, String)> {
        let mut run = self.run();
        let req: HumanRequest = run
            .requests()
            .iter()
            .find(|r| r.id == id)
            .cloned()
            .ok_or((StatusCode::NOT_FOUND, RuntimeError::UnknownRequest(id.into()).to_string()))?;
        if let Some(claim) = body.agent.as_deref().filter(|a| *a != req.agent) {
            return Err((StatusCode::FORBIDDEN, format!("{id} belongs to `{}`, not `{claim}`", req.agent)));
        }
        let mut outputs = BTreeMap::new();
        for (label, value) in body.outputs {
            let colorset = req.result_schema.iter().find(|p| p.label == label).map(|p| p.colorset.clone());
            let token = match (colorset, value) {
                (Some(cs), Value::String(s)) => Token::new(cs.name.clone(), cs.value_from_scalar(&s)),
                (Some(cs), v) => {
                    let tv: TokenValue = serde_json::from_value(v)
                        .map_err(|e| (StatusCode::UNPROCESSABLE_ENTITY, format!("output `{label}`: {e}")))?;
                    Token::new(cs.name, tv)
                }
                (None, _) => {
                    return Err((
                        StatusCode::UNPROCESSABLE_ENTITY,
                        RuntimeError::SchemaMismatch {
                            request: id.into(),
                            reason: format!("unexpected output `{label}`"),
                        }
                        .to_string(),
                    ))
                }
            };
            outputs.insert(label, token);
        }
        if req.state == hetsoc_core::runtime::RequestState::Pending {
            for line in &body.robot_commands {
                let reply = run.robot_command(line).map_err(|e| (StatusCode::BAD_GATEWAY, e))?;
                run.log_event("robot", json!({"agent": req.agent, "command": line, "reply": reply.to_string()}));
            }
        }
        let result = run.submit_result(id, outputs).map_err(|e| {
            let status = match e {
                RuntimeError::AlreadyAnswered(_) => StatusCode::CONFLICT,
                RuntimeError::UnknownRequest(_) => StatusCode::NOT_FOUND,
                _ => StatusCode::UNPROCESSABLE_ENTITY,
            };
            (status, e.to_string())
        });
        self.publish(&run);
        drop(run);
        if result.is_ok() {
            self.wake.notify_one();
        }
        result
    }
}

/// Advances the run until it is quiescent or fails, pausing `step_delay`
/// between steps and sleeping while humans are asked.
pub async fn drive(state: AppState) -> Advance {
    loop {
        match state.advance() {
            Advance::Progress => {
                if !state.step_delay.is_zero() {
                    tokio::time::sleep(state.step_delay).await;
                }
            }
            Advance::Blocked => state.wake.notified().await,
            done => return done,
        }
    }
}

/// Body of `POST /requests/{id}/result`. Outputs are scalars or token
/// values by label; robot commands are sent before the result is taken.
/// A submitter naming an `agent` may only answer that agent's requests.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultBody {
    #[serde(default)]
    pub outputs: BTreeMap<String, Value>,
    #[serde(default)]
    pub robot_commands: Vec<String>,
    #[serde(default)]
    pub agent: Option<String>,
}

fn error(status: StatusCode, message: String) -> Response {
    (status, Json(json!({"error": message}))).into_response()
}

async fn requests(State(s): State<AppState>) -> Json<Vec<HumanRequest>> {
    Json(s.run().pending_requests().into_iter().cloned().collect())
}

async fn submit(State(s): State<AppState>, Path(id): Path<String>, body: Option<Json<ResultBody>>) -> Response {
    let Some(Json(body)) = body else {
        return error(StatusCode::BAD_REQUEST, "expected a JSON body with `outputs`".into());
    };
    match s.submit(&id, body) {
        Ok(()) => Json(json!({"id": id, "state": "answered"})).into_response(),
        Err((status, message)) => error(status, message),
    }
}

async fn trace(State(s): State<AppState>) -> Response {
    Json(json!(s.run().trace())).into_response()
}

fn marking_json(run: &SocietyRun) -> Value {
    let statuses = run.statuses();
    let agents: BTreeMap<String, Value> = run
        .markings()
        .into_iter()
        .map(|(a, m)| {
            let status = statuses.get(&a).map(|s| json!(s)).unwrap_or(Value::Null);
            (a, json!({"status": status, "marking": m}))
        })
        .collect();
    let channels: Vec<Value> = run
        .channels
        .contents()
        .into_iter()
        .map(|(k, msgs)| json!({"sender": k.sender, "receiver": k.receiver, "messages": msgs}))
        .collect();
    json!({
        "agents": agents,
        "channels": channels,
        "steps": run.steps(),
        "quiescent": run.is_quiescent(),
        "robot": run.robot_state(),
    })
}

async fn marking(State(s): State<AppState>) -> Json<Value> {
    Json(marking_json(&s.run()))
}

#[derive(Debug, Deserialize)]
struct Since {
    since: Option<u64>,
}

async fn events(ws: WebSocketUpgrade, Query(q): Query<Since>, State(s): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| stream(socket, s, q.since.unwrap_or(0)))
}

#[derive(Debug, Deserialize)]
struct ClientFrame {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default)]
    payload: Value,
}

#[derive(Debug, Deserialize)]
struct ResultFrame {
    id: String,
    #[serde(flatten)]
    body: ResultBody,
}

fn reply(kind: &str, payload: Value) -> String {
    json!({"type": kind, "payload": payload, "seq": 0}).to_string()
}

fn handle_frame(s: &Served, text: &str) -> String {
    let frame: ClientFrame = match serde_json::from_str(text) {
        Ok(f) => f,
        Err(e) => return reply("error", json!({"message": e.to_string()})),
    };
    match frame.kind.as_str() {
        "result" => match serde_json::from_value::<ResultFrame>(frame.payload) {
            Ok(r) => match s.submit(&r.id, r.body) {
                Ok(()) => reply("ack", json!({"id": r.id})),
                Err((status, message)) => reply("error", json!({"id": r.id, "status": status.as_u16(), "message": message})),
            },
            Err(e) => reply("error", json!({"message": e.to_string()})),
        },
        "marking" => reply("marking", marking_json(&s.run())),
        other => reply("error", json!({"message": format!("unknown frame type `{other}`")})),
    }
}

async fn stream(mut socket: WebSocket, s: AppState, mut last: u64) {
    let mut rx = s.latest.subscribe();
    loop {
        let frames: Vec<(u64, String)> = s
            .run()
            .events()
            .iter()
            .filter(|e| e.seq > last)
            .map(|e| (e.seq, serde_json::to_string(e).expect("events serialize")))
            .collect();
        for (seq, f) in frames {
            if socket.send(WsMessage::Text(f.into())).await.is_err() {
                return;
            }
            last = seq;
        }
        tokio::select! {
            changed = rx.changed() => {
                if changed.is_err() {
                    return;
                }
            }
            msg = socket.recv() => match msg {
                Some(Ok(WsMessage::Text(t))) => {
                    let r = handle_frame(&s, &t);
                    if socket.send(WsMessage::Text(r.into())).await.is_err() {
                        return;
                    }
                }
                Some(Ok(WsMessage::Close(_))) | Some(Err(_)) | None => return,
                Some(Ok(_)) => {}
            },
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/requests", get(requests))
        .route("/requests/{id}/result", post(submit))
        .route("/trace", get(trace))
        .route("/marking", get(marking))
        .route("/events", get(events))
        .with_state(state)
}

/// Serves `state` on `listener` while driving the run in the background.
pub async fn serve(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    tokio::spawn(drive(state.clone()));
    axum::serve(listener, router(state)).await
}
