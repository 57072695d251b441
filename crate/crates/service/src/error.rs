use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use earshot_core::audio::AudioError;
use earshot_core::container::ContainerError;
use earshot_core::fewshot::FewShotError;
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("no location {0:?}")]
    UnknownLocation(String),
    #[error("location has no class {0:?}")]
    UnknownClass(String),
    #[error("no sample {0:?}")]
    UnknownSample(String),
    #[error("library has no class {0:?}")]
    UnknownLibraryClass(String),
    #[error("no prediction with stream {stream} sequence {sequence}")]
    UnknownPrediction { stream: u64, sequence: u64 },
    #[error("prediction stream {stream} sequence {sequence} is already rated")]
    AlreadyRated { stream: u64, sequence: u64 },
    #[error("bad audio: {0}")]
    BadAudio(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("{0}")]
    IncompleteClasses(String),
    #[error("{0}")]
    MissingSoundscape(String),
    #[error("location has no trained model")]
    Untrained,
    #[error("{0}")]
    VersionMismatch(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ServiceError {
    pub fn kind(&self) -> &'static str {
        match self {
            ServiceError::UnknownLocation(_) => "UnknownLocation",
            ServiceError::UnknownClass(_) => "UnknownClass",
            ServiceError::UnknownSample(_) => "UnknownSample",
            ServiceError::UnknownLibraryClass(_) => "UnknownLibraryClass",
            ServiceError::UnknownPrediction { .. } => "UnknownPrediction",
            ServiceError::AlreadyRated { .. } => "AlreadyRated",
            ServiceError::BadAudio(_) => "BadAudio",
            ServiceError::BadRequest(_) => "BadRequest",
            ServiceError::IncompleteClasses(_) => "IncompleteClasses",
            ServiceError::MissingSoundscape(_) => "MissingSoundscape",
            ServiceError::Untrained => "Untrained",
            ServiceError::VersionMismatch(_) => "VersionMismatch",
            ServiceError::Internal(_) => "Internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::UnknownLocation(_)
            | ServiceError::UnknownClass(_)
            | ServiceError::UnknownSample(_)
            | ServiceError::UnknownLibraryClass(_)
            | ServiceError::UnknownPrediction { .. } => StatusCode::NOT_FOUND,
            ServiceError::BadAudio(_) | ServiceError::BadRequest(_) | ServiceError::VersionMismatch(_) => {
                StatusCode::BAD_REQUEST
            }
            ServiceError::IncompleteClasses(_)
            | ServiceError::MissingSoundscape(_)
            | ServiceError::Untrained
            | ServiceError::AlreadyRated { .. } => StatusCode::CONFLICT,
            ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn body(&self) -> serde_json::Value {
        json!({ "error": { "kind": self.kind(), "message": self.to_string() } })
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        if matches!(self, ServiceError::Internal(_)) {
            tracing::error!(error = %self, "request failed");
        }
        (self.status(), Json(self.body())).into_response()
    }
}

impl From<std::io::Error> for ServiceError {
    fn from(e: std::io::Error) -> Self {
        ServiceError::Internal(e.to_string())
    }
}

impl From<serde_json::Error> for ServiceError {
    fn from(e: serde_json::Error) -> Self {
        ServiceError::Internal(e.to_string())
    }
}

impl From<AudioError> for ServiceError {
    fn from(e: AudioError) -> Self {
        match e {
            AudioError::Io(io) => io.into(),
            other => ServiceError::BadAudio(other.to_string()),
        }
    }
}

impl From<FewShotError> for ServiceError {
    fn from(e: FewShotError) -> Self {
        match e {
            FewShotError::MissingSoundscape(m) => ServiceError::MissingSoundscape(m),
            FewShotError::UnknownLibraryClass(c) => ServiceError::UnknownLibraryClass(c),
            FewShotError::VersionMismatch { .. } | FewShotError::Container(ContainerError::VersionMismatch(_)) => {
                ServiceError::VersionMismatch(e.to_string())
            }
            FewShotError::Container(c) => ServiceError::BadRequest(c.to_string()),
            FewShotError::TooFewClasses(_) | FewShotError::EmptyClass(_) | FewShotError::UnevenClass { .. } => {
                ServiceError::IncompleteClasses(e.to_string())
            }
            FewShotError::Audio(a) => a.into(),
            FewShotError::EmptyClip => ServiceError::BadAudio(e.to_string()),
            other => ServiceError::Internal(other.to_string()),
        }
    }
}
