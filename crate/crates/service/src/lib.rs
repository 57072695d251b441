//! HTTP + WebSocket service for per-location few-shot sound recognition.
//! See `docs/protocol.md` for the wire format.

mod api;
pub mod error;
pub mod session;
pub mod stream;
mod ws;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use earshot_core::fewshot::{Encoder, LocationConfig, SoundLibrary};
use earshot_core::EmbedderModel;
use serde::{Deserialize, Serialize};

pub use error::ServiceError;
pub use session::{ActiveModel, Rating, RatingEntry, Session, SessionMeta};
pub use stream::{StreamItem, StreamState, BUFFER_S, WINDOW_S};

/// Recordings required per class.
pub const K_SHOT: usize = 5;
pub const LOCATIONS_DIR: &str = "locations";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    /// Holds `locations/<id>/` session directories.
    pub root: PathBuf,
    pub location: LocationConfig,
    /// Directory of `<class>/*.wav` library recordings.
    #[serde(default)]
    pub library_dir: Option<PathBuf>,
    #[serde(default = "default_k")]
    pub k_shot: usize,
}

fn default_k() -> usize {
    K_SHOT
}

impl ServiceConfig {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            location: LocationConfig::default(),
            library_dir: None,
            k_shot: K_SHOT,
        }
    }
}

pub struct AppState {
    pub config: ServiceConfig,
    pub encoder: Arc<Encoder>,
    pub library: Option<SoundLibrary>,
    sessions: RwLock<BTreeMap<String, Arc<Session>>>,
}

impl AppState {
    /// Loads every persisted session under `config.root`.
    pub fn open(config: ServiceConfig, embedder: EmbedderModel) -> Result<Arc<Self>, ServiceError> {
        config.location.validate()?;
        let dir = config.root.join(LOCATIONS_DIR);
        std::fs::create_dir_all(&dir)?;
        let mut sessions = BTreeMap::new();
        let mut entries: Vec<_> = std::fs::read_dir(&dir)?.filter_map(Result::ok).map(|e| e.path()).collect();
        entries.sort();
        for path in entries {
            if !path.join(session::META_FILE).exists() {
                // Created but never committed.
                continue;
            }
            let s = Session::load(path)?;
            sessions.insert(s.id.clone(), Arc::new(s));
        }
        let library = match &config.library_dir {
            Some(d) => Some(SoundLibrary::load_dir(d)?),
            None => None,
        };
        tracing::info!(sessions = sessions.len(), root = %config.root.display(), "service state loaded");
        Ok(Arc::new(Self {
            config,
            encoder: Arc::new(Encoder::new(embedder)),
            library,
            sessions: RwLock::new(sessions),
        }))
    }

    pub fn session(&self, id: &str) -> Result<Arc<Session>, ServiceError> {
        self.sessions
            .read()
            .expect("sessions lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownLocation(id.to_string()))
    }

    pub fn sessions(&self) -> Vec<Arc<Session>> {
        self.sessions.read().expect("sessions lock").values().cloned().collect()
    }

    pub fn create_session(&self, name: &str) -> Result<Arc<Session>, ServiceError> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let dir = self.config.root.join(LOCATIONS_DIR).join(&id);
        let s = Arc::new(Session::create(dir, id.clone(), name.to_string())?);
        self.sessions.write().expect("sessions lock").insert(id, s.clone());
        Ok(s)
    }
}

pub fn router(state: Arc<AppState>) -> axum::Router {
    api::router(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
