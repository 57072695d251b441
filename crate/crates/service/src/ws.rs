use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::response::Response;
use earshot_core::audio::AudioClip;
use earshot_core::fewshot::{Encoder, Verdict};
use tokio::sync::{mpsc, Notify};

use crate::error::ServiceError;
use crate::session::{ActiveModel, Session};
use crate::stream::{StreamEvent, StreamItem, StreamState, BUFFER_S, WINDOW_S};
use crate::AppState;

pub async fn stream_handler(
    ws: WebSocketUpgrade,
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Response, ServiceError> {
    let session = state.session(&id)?;
    Ok(ws.on_upgrade(move |socket| run_stream(socket, state.encoder.clone(), session)))
}

fn to_message(event: &StreamEvent) -> Message {
    Message::Text(serde_json::to_string(event).expect("event serializes").into())
}

fn span(first: u64, last: u64) -> [f64; 2] {
    [(first * WINDOW_S as u64) as f64, ((last + 1) * WINDOW_S as u64) as f64]
}

/// Scores one window and logs the prediction before it is sent.
fn score_window(
    encoder: &Encoder,
    session: &Session,
    active: &ActiveModel,
    stream: u64,
    sequence: u64,
    samples: Vec<f32>,
) -> Result<StreamEvent, ServiceError> {
    let clip = AudioClip::canonical(samples, format!("stream-{stream}-{sequence}"));
    let pred = active.model.predict_clip(encoder, &clip)?;
    let (verdict, class_name, class_index) = match (pred.all_quiet, pred.verdict) {
        (true, _) => ("quiet", "quiet".to_string(), None),
        (false, Verdict::Class(i)) => ("class", active.model.class_names[i].clone(), Some(i)),
        (false, _) => ("unknown", "unknown".to_string(), None),
    };
    session.record_prediction(stream, sequence, verdict, &class_name, &active.version)?;
    Ok(StreamEvent::Prediction {
        stream,
        sequence,
        window_span: span(sequence, sequence),
        verdict: verdict.to_string(),
        class_name,
        class_index,
        probabilities: pred.mean_probabilities,
        model_version: active.version.clone(),
    })
}

struct Shared {
    state: Mutex<StreamState>,
    wake: Notify,
    closing: AtomicBool,
}

/// Consumes windows in order, one at a time, on the blocking pool. The
/// model is looked up per window, so a retrain takes effect at the next
/// window boundary.
async fn worker(shared: Arc<Shared>, encoder: Arc<Encoder>, session: Arc<Session>, stream: u64, tx: mpsc::Sender<StreamEvent>) -> (u64, u64) {
    let (mut predictions, mut dropped) = (0, 0);
    loop {
        let item = shared.state.lock().expect("stream lock").next_item();
        let event = match item {
            Some(StreamItem::Window { sequence, samples }) => {
                let Some(active) = session.current_model() else { break };
                let (enc, sess) = (encoder.clone(), session.clone());
                let scored = tokio::task::spawn_blocking(move || score_window(&enc, &sess, &active, stream, sequence, samples)).await;
                match scored {
                    Ok(Ok(ev)) => {
                        predictions += 1;
                        ev
                    }
                    Ok(Err(e)) => StreamEvent::Error { kind: e.kind().into(), message: e.to_string() },
                    Err(e) => StreamEvent::Error { kind: "Internal".into(), message: e.to_string() },
                }
            }
            Some(StreamItem::Dropped { first, last }) => {
                dropped += last - first + 1;
                tracing::warn!(stream, first, last, "stream buffer overflow, windows dropped");
                StreamEvent::Dropped {
                    stream,
                    first_sequence: first,
                    last_sequence: last,
                    window_span: span(first, last),
                }
            }
            None if shared.closing.load(Ordering::Acquire) => break,
            None => {
                shared.wake.notified().await;
                continue;
            }
        };
        if tx.send(event).await.is_err() {
            break;
        }
    }
    (predictions, dropped)
}

async fn run_stream(mut socket: WebSocket, encoder: Arc<Encoder>, session: Arc<Session>) {
    let Some(active) = session.current_model() else {
        let e = ServiceError::Untrained;
        let _ = socket
            .send(to_message(&StreamEvent::Error { kind: e.kind().into(), message: e.to_string() }))
            .await;
        let _ = socket.send(Message::Close(None)).await;
        return;
    };
    let stream = match session.open_stream() {
        Ok(s) => s,
        Err(e) => {
            let _ = socket
                .send(to_message(&StreamEvent::Error { kind: e.kind().into(), message: e.to_string() }))
                .await;
            return;
        }
    };
    let ready = StreamEvent::Ready {
        stream,
        model_version: active.version.clone(),
        class_names: active.model.class_names.clone(),
        window_s: WINDOW_S as f64,
        buffer_s: BUFFER_S as f64,
    };
    drop(active);
    if socket.send(to_message(&ready)).await.is_err() {
        return;
    }
    tracing::info!(location = %session.id, stream, "stream opened");

    let shared = Arc::new(Shared {
        state: Mutex::new(StreamState::default()),
        wake: Notify::new(),
        closing: AtomicBool::new(false),
    });
    let (tx, mut rx) = mpsc::channel::<StreamEvent>(16);
    let worker = tokio::spawn(worker(shared.clone(), encoder, session.clone(), stream, tx));
    let close = |shared: &Shared| {
        shared.closing.store(true, Ordering::Release);
        shared.wake.notify_one();
    };

    // Read audio and forward events until the client ends or leaves.
    let mut client_gone = false;
    loop {
        tokio::select! {
            msg = socket.recv() => match msg {
                Some(Ok(Message::Binary(bytes))) => {
                    shared.state.lock().expect("stream lock").push_pcm(&bytes);
                    shared.wake.notify_one();
                }
                Some(Ok(Message::Text(text))) => {
                    let end = serde_json::from_str::<serde_json::Value>(&text)
                        .ok()
                        .and_then(|v| v.get("type").and_then(|t| t.as_str()).map(|t| t == "end"))
                        .unwrap_or(false);
                    if end {
                        close(&shared);
                        break;
                    }
                    let e = StreamEvent::Error { kind: "BadRequest".into(), message: "expected binary PCM or {\"type\":\"end\"}".into() };
                    if socket.send(to_message(&e)).await.is_err() {
                        client_gone = true;
                        break;
                    }
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => {
                    client_gone = true;
                    close(&shared);
                    break;
                }
                Some(Ok(_)) => {}
            },
            Some(event) = rx.recv() => {
                if socket.send(to_message(&event)).await.is_err() {
                    client_gone = true;
                    close(&shared);
                    break;
                }
            }
        }
    }
    if client_gone {
        worker.abort();
        tracing::info!(location = %session.id, stream, "stream closed by client");
        return;
    }
    // Finish every complete window, then report and close.
    while let Some(event) = rx.recv().await {
        if socket.send(to_message(&event)).await.is_err() {
            worker.abort();
            return;
        }
    }
    let (predictions, dropped_windows) = worker.await.unwrap_or((0, 0));
    let discarded_samples = shared.state.lock().expect("stream lock").pending_partial();
    let end = StreamEvent::End { stream, predictions, dropped_windows, discarded_samples };
    let _ = socket.send(to_message(&end)).await;
    let _ = socket.send(Message::Close(None)).await;
    tracing::info!(location = %session.id, stream, predictions, dropped_windows, "stream ended");
}
