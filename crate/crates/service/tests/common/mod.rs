#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use earshot_core::audio::{encode_wav, AudioClip, SAMPLE_RATE};
use earshot_core::eval::synth::ClassSignature;
use earshot_core::{EmbedderConfig, EmbedderModel};
use earshot_service::stream::StreamEvent;
use earshot_service::{AppState, ServiceConfig};
use futures_util::{SinkExt, StreamExt};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tokio_tungstenite::tungstenite::Message;

pub struct Server {
    pub addr: SocketAddr,
    pub state: Arc<AppState>,
    pub handle: tokio::task::JoinHandle<()>,
}

impl Server {
    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }

    pub fn ws_url(&self, path: &str) -> String {
        format!("ws://{}{path}", self.addr)
    }
}

pub fn embedder() -> EmbedderModel {
    EmbedderModel::init(EmbedderConfig {
        conv_channels: vec![8, 16],
        embed_dim: 16,
        seed: 5,
        ..EmbedderConfig::default()
    })
    .unwrap()
}

pub fn config(root: &Path) -> ServiceConfig {
    let mut c = ServiceConfig::new(root);
    // Random-weight embedder: accept every non-quiet window.
    c.location.ratio_threshold = 1.0;
    c
}

pub async fn start(config: ServiceConfig) -> Server {
    let state = AppState::open(config, embedder()).unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let s = state.clone();
    let handle = tokio::spawn(async move {
        earshot_service::serve(listener, s).await.unwrap();
    });
    Server { addr, state, handle }
}

/// `seconds` of class `id`'s synthetic signature over a faint white noise
/// floor, as a microphone would record it.
pub fn class_audio(id: u64, seconds: f64, seed: u64) -> Vec<f32> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = ClassSignature::for_id(id).render((seconds * SAMPLE_RATE as f64) as usize, &mut rng);
    for s in &mut v {
        *s += rng.gen_range(-0.005f32..0.005);
    }
    v
}

pub fn wav(samples: Vec<f32>) -> Vec<u8> {
    encode_wav(&AudioClip::canonical(samples, "test"))
}

pub fn pcm(samples: &[f32]) -> Vec<u8> {
    samples
        .iter()
        .flat_map(|&s| earshot_core::audio::quantize_i16(s).to_le_bytes())
        .collect()
}

pub async fn create(client: &reqwest::Client, server: &Server, name: &str) -> String {
    let r = client
        .post(server.url("/locations"))
        .json(&serde_json::json!({ "name": name }))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 201);
    r.json::<serde_json::Value>().await.unwrap()["id"].as_str().unwrap().to_string()
}

pub async fn add_sample(client: &reqwest::Client, server: &Server, id: &str, class: &str, audio: Vec<f32>) -> reqwest::Response {
    client
        .post(server.url(&format!("/locations/{id}/classes/{class}/samples")))
        .body(wav(audio))
        .send()
        .await
        .unwrap()
}

/// Records five samples for each class id and a 10 s quiet ambient.
pub async fn populate(client: &reqwest::Client, server: &Server, id: &str, classes: &[u64]) {
    for &c in classes {
        for k in 0..5 {
            let r = add_sample(client, server, id, &format!("class-{c}"), class_audio(c, 1.0, k)).await;
            assert_eq!(r.status(), 201, "{}", r.text().await.unwrap());
        }
    }
    let ambient: Vec<f32> = class_audio(999, 10.0, 0).iter().map(|v| v * 0.05).collect();
    let r = client
        .post(server.url(&format!("/locations/{id}/ambient")))
        .body(wav(ambient))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 200);
}

pub async fn train(client: &reqwest::Client, server: &Server, id: &str) -> serde_json::Value {
    let r = client.post(server.url(&format!("/locations/{id}/train"))).send().await.unwrap();
    let status = r.status();
    let body: serde_json::Value = r.json().await.unwrap();
    assert_eq!(status, 200, "{body}");
    body
}

/// Streams `audio` in 250 ms chunks, pausing `pace` between chunks, then
/// ends the stream and returns every event after `ready`.
pub async fn stream(server: &Server, id: &str, audio: &[f32], pace: Duration) -> (StreamEvent, Vec<StreamEvent>) {
    let (mut ws, _) = tokio_tungstenite::connect_async(server.ws_url(&format!("/locations/{id}/stream")))
        .await
        .unwrap();
    let ready = next_event(&mut ws).await.expect("ready");
    for chunk in pcm(audio).chunks(8_000) {
        ws.send(Message::Binary(chunk.to_vec().into())).await.unwrap();
        if !pace.is_zero() {
            tokio::time::sleep(pace).await;
        }
    }
    ws.send(Message::Text(r#"{"type":"end"}"#.into())).await.unwrap();
    let mut events = Vec::new();
    while let Some(ev) = next_event(&mut ws).await {
        let end = matches!(ev, StreamEvent::End { .. });
        events.push(ev);
        if end {
            break;
        }
    }
    (ready, events)
}

pub async fn next_event<S>(ws: &mut S) -> Option<StreamEvent>
where
    S: futures_util::Stream<Item = Result<Message, tokio_tungstenite::tungstenite::Error>> + Unpin,
{
    loop {
        match ws.next().await? {
            Ok(Message::Text(t)) => return Some(serde_json::from_str(&t).unwrap()),
            Ok(Message::Close(_)) | Err(_) => return None,
            Ok(_) => continue,
        }
    }
}

pub fn predictions(events: &[StreamEvent]) -> Vec<&StreamEvent> {
    events.iter().filter(|e| matches!(e, StreamEvent::Prediction { .. })).collect()
}
