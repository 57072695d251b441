use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use earshot_core::audio::{load_and_normalize, AudioClip, Segment};
use earshot_core::fewshot::{normalize_class_name, train_location, Origin};
use earshot_core::LocationModel;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::ServiceError;
use crate::session::{ClassMeta, ModelMeta, Rating, RatingEntry, Session};
use crate::{ws, AppState};

type Shared = State<Arc<AppState>>;
type ApiResult<T> = Result<T, ServiceError>;

/// Uploads are WAV files of a few seconds; leave room for long ambients.
const BODY_LIMIT: usize = 64 * 1024 * 1024;
const MAX_NAME_LEN: usize = 64;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/library", get(library))
        .route("/locations", post(create_location).get(list_locations))
        .route("/locations/import", post(import_model))
        .route("/locations/{id}", get(get_location))
        .route("/locations/{id}/classes/{name}/samples", post(add_sample))
        .route(
            "/locations/{id}/classes/{name}/samples/{sample}",
            delete(delete_sample).get(get_sample),
        )
        .route("/locations/{id}/library-classes", post(add_library_class))
        .route("/locations/{id}/ambient", post(set_ambient))
        .route("/locations/{id}/train", post(train))
        .route("/locations/{id}/ratings", post(rate).get(ratings))
        .route("/locations/{id}/export", get(export_model))
        .route("/locations/{id}/stream", get(ws::stream_handler))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

fn check_name(kind: &str, name: &str) -> ApiResult<String> {
    let name = name.trim();
    if name.is_empty() || name.chars().count() > MAX_NAME_LEN || name.chars().any(char::is_control) {
        return Err(ServiceError::BadRequest(format!(
            "{kind} name must be 1-{MAX_NAME_LEN} printable characters"
        )));
    }
    Ok(name.to_string())
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(format!("worker failed: {e}")))?
}

async fn health(State(state): Shared) -> Json<Value> {
    Json(json!({ "status": "ok", "embedder": state.encoder.version() }))
}

async fn library(State(state): Shared) -> Json<Value> {
    let classes = state.library.as_ref().map(|l| l.class_names()).unwrap_or_default();
    Json(json!({ "classes": classes }))
}

#[derive(Debug, Serialize)]
struct ClassView {
    name: String,
    origin: Origin,
    samples: Vec<String>,
    complete: bool,
}

#[derive(Debug, Serialize)]
struct LocationView {
    id: String,
    name: String,
    created_at: f64,
    updated_at: f64,
    classes: Vec<ClassView>,
    ambient_seconds: Option<f64>,
    model: Option<ModelMeta>,
    trainable: bool,
    predictions: usize,
    ratings: usize,
}

fn view(state: &AppState, s: &Session) -> LocationView {
    let meta = s.meta();
    let k = state.config.k_shot;
    let classes: Vec<ClassView> = meta
        .classes
        .iter()
        .map(|c: &ClassMeta| ClassView {
            name: c.name.clone(),
            origin: c.origin,
            samples: c.samples.clone(),
            complete: c.samples.len() == k,
        })
        .collect();
    let trainable = classes.len() >= 2 && classes.iter().all(|c| c.complete) && meta.ambient_seconds.is_some();
    LocationView {
        id: meta.id,
        name: meta.name,
        created_at: meta.created_at,
        updated_at: meta.updated_at,
        classes,
        ambient_seconds: meta.ambient_seconds,
        model: meta.model,
        trainable,
        predictions: s.prediction_count(),
        ratings: s.ratings().len(),
    }
}

#[derive(Debug, Deserialize)]
struct CreateLocation {
    name: String,
}

async fn create_location(State(state): Shared, Json(body): Json<CreateLocation>) -> ApiResult<impl IntoResponse> {
    let name = check_name("location", &body.name)?;
    let st = state.clone();
    let s = blocking(move || st.create_session(&name)).await?;
    Ok((StatusCode::CREATED, Json(view(&state, &s))))
}

async fn list_locations(State(state): Shared) -> Json<Vec<LocationView>> {
    Json(state.sessions().iter().map(|s| view(&state, s)).collect())
}

async fn get_location(State(state): Shared, Path(id): Path<String>) -> ApiResult<Json<LocationView>> {
    let s = state.session(&id)?;
    Ok(Json(view(&state, &s)))
}

fn decode_upload(bytes: &[u8]) -> ApiResult<AudioClip> {
    let clip = load_and_normalize(bytes)?;
    if clip.is_empty() {
        return Err(ServiceError::BadAudio("recording is empty".into()));
    }
    Ok(clip)
}

async fn add_sample(
    State(state): Shared,
    Path((id, name)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let s = state.session(&id)?;
    let name = check_name("class", &name)?;
    let clip = decode_upload(&body)?;
    let k = state.config.k_shot;
    let _gate = s.write_gate.lock().await;
    let meta = s.meta();
    if let Some(c) = meta.class(&name) {
        if c.origin == Origin::Library {
            return Err(ServiceError::BadRequest(format!("{name:?} is a library class")));
        }
        if c.samples.len() >= k {
            return Err(ServiceError::BadRequest(format!(
                "{name:?} already has {k} recordings; delete one to re-record"
            )));
        }
    }
    // Recordings are one second; longer uploads keep their first second.
    let segment = Segment::new(clip.samples, "upload", 0.0);
    let sess = s.clone();
    let cname = name.clone();
    let sample_id = blocking(move || sess.add_sample(&cname, Origin::User, &segment)).await?;
    let count = s.meta().class(&name).map_or(0, |c| c.samples.len());
    Ok((
        StatusCode::CREATED,
        Json(json!({ "sample_id": sample_id, "class": name, "count": count, "complete": count == k })),
    ))
}

async fn delete_sample(
    State(state): Shared,
    Path((id, name, sample)): Path<(String, String, String)>,
) -> ApiResult<StatusCode> {
    let s = state.session(&id)?;
    let _gate = s.write_gate.lock().await;
    let sess = s.clone();
    blocking(move || sess.delete_sample(&name, &sample)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn get_sample(
    State(state): Shared,
    Path((id, name, sample)): Path<(String, String, String)>,
) -> ApiResult<impl IntoResponse> {
    let s = state.session(&id)?;
    let bytes = s.sample_wav(&name, &sample)?;
    Ok(([(header::CONTENT_TYPE, "audio/wav")], bytes))
}

#[derive(Debug, Deserialize)]
struct LibraryClassRequest {
    class: String,
}

async fn add_library_class(
    State(state): Shared,
    Path(id): Path<String>,
    Json(body): Json<LibraryClassRequest>,
) -> ApiResult<impl IntoResponse> {
    let s = state.session(&id)?;
    let library = state
        .library
        .as_ref()
        .ok_or_else(|| ServiceError::UnknownLibraryClass(body.class.clone()))?;
    let class = library.canonical_name(&body.class)?;
    let _gate = s.write_gate.lock().await;
    if s.meta().class(&class).is_some() {
        return Err(ServiceError::BadRequest(format!("class {class:?} already exists")));
    }
    // Seeded by location and class so a given location always draws the
    // same library recordings.
    let seed = state.config.location.seed ^ fnv(&format!("{id}/{}", normalize_class_name(&class)));
    let segments = library.sample(&class, state.config.k_shot, seed)?;
    let sess = s.clone();
    let cname = class.clone();
    let ids = blocking(move || {
        segments
            .iter()
            .map(|seg| sess.add_sample(&cname, Origin::Library, seg))
            .collect::<ApiResult<Vec<_>>>()
    })
    .await?;
    Ok((StatusCode::CREATED, Json(json!({ "class": class, "sample_ids": ids }))))
}

fn fnv(s: &str) -> u64 {
    s.bytes().fold(0xcbf29ce484222325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3))
}

async fn set_ambient(State(state): Shared, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let s = state.session(&id)?;
    let clip = decode_upload(&body)?;
    let _gate = s.write_gate.lock().await;
    let seconds = clip.duration_s();
    let sess = s.clone();
    blocking(move || sess.set_ambient(&clip)).await?;
    Ok(Json(json!({ "ambient_seconds": seconds })))
}

async fn train(State(state): Shared, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let s = state.session(&id)?;
    let _gate = s.write_gate.lock().await;
    let st = state.clone();
    let sess = s.clone();
    let (active, ms, augmented) = blocking(move || {
        let (support, ambient) = sess.support_set(st.config.k_shot)?;
        let started = Instant::now();
        let trained = train_location(&sess.meta().name, &support, &ambient, &st.encoder, &st.config.location)?;
        let ms = started.elapsed().as_secs_f64() * 1000.0;
        let active = sess.install_model(trained.model, Some(ms))?;
        Ok((active, ms, trained.augmented))
    })
    .await?;
    tracing::info!(location = %id, version = %active.version, training_ms = ms, "model trained");
    Ok(Json(json!({
        "model_version": active.version,
        "training_ms": ms,
        "class_names": active.model.class_names,
        "augmented": augmented,
    })))
}

#[derive(Debug, Deserialize)]
struct RateRequest {
    #[serde(default)]
    stream: Option<u64>,
    sequence: u64,
    rating: Rating,
}

async fn rate(State(state): Shared, Path(id): Path<String>, Json(body): Json<RateRequest>) -> ApiResult<impl IntoResponse> {
    let s = state.session(&id)?;
    let entry = blocking(move || s.rate(body.stream, body.sequence, body.rating)).await?;
    Ok((StatusCode::CREATED, Json(entry)))
}

async fn ratings(State(state): Shared, Path(id): Path<String>) -> ApiResult<Json<Vec<RatingEntry>>> {
    Ok(Json(state.session(&id)?.ratings()))
}

async fn export_model(State(state): Shared, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let s = state.session(&id)?;
    let active = s.current_model().ok_or(ServiceError::Untrained)?;
    Ok((
        [
            (header::CONTENT_TYPE, "application/octet-stream".to_string()),
            (header::HeaderName::from_static("x-model-version"), active.version.clone()),
        ],
        active.bytes.clone(),
    ))
}

#[derive(Debug, Deserialize)]
struct ImportQuery {
    #[serde(default)]
    name: Option<String>,
}

async fn import_model(State(state): Shared, Query(q): Query<ImportQuery>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let model = LocationModel::from_bytes(&body)?;
    if model.embedder_ref != state.encoder.version() {
        return Err(ServiceError::VersionMismatch(format!(
            "model was built with embedder {}, service runs {}",
            model.embedder_ref,
            state.encoder.version()
        )));
    }
    let name = check_name("location", q.name.as_deref().unwrap_or(&model.location_name))?;
    let st = state.clone();
    let s = blocking(move || {
        let s = st.create_session(&name)?;
        if !model.soundscape.is_empty() {
            s.set_ambient(&AudioClip::canonical(model.soundscape.clone(), "ambient"))?;
        }
        s.install_bytes(model, body.to_vec(), None)?;
        Ok(s)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(view(&state, &s))))
}
