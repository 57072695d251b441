use std::fmt;

use earshot_core::audio::AudioError;
use earshot_core::container::ContainerError;
use earshot_core::eval::EvalError;
use earshot_core::fewshot::FewShotError;
use earshot_core::nn::ModelError;
use earshot_service::ServiceError;

/// A failed run. Usage errors exit 2, everything else exits 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data { kind: &'static str, message: String },
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self::Usage(message.into())
    }

    pub fn data(kind: &'static str, message: impl fmt::Display) -> Self {
        Self::Data { kind, message: message.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Data { .. } => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Usage(_) => "usage",
            Self::Data { kind, .. } => kind,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Self::Usage(m) | Self::Data { message: m, .. } => m,
        }
    }

    /// `error: kind=<kind> message="<escaped>"` on a single line.
    pub fn line(&self) -> String {
        format!("error: kind={} message={:?}", self.kind(), self.message())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::data("io", e)
    }
}

impl From<AudioError> for CliError {
    fn from(e: AudioError) -> Self {
        Self::data("audio", e)
    }
}

impl From<ContainerError> for CliError {
    fn from(e: ContainerError) -> Self {
        Self::data("model", e)
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        Self::data("model", e)
    }
}

impl From<FewShotError> for CliError {
    fn from(e: FewShotError) -> Self {
        match e {
            FewShotError::Audio(a) => a.into(),
            FewShotError::Model(m) => m.into(),
            FewShotError::Container(c) => c.into(),
            FewShotError::VersionMismatch { .. } => Self::data("version_mismatch", e),
            other => Self::data("fewshot", other),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Audio(a) => a.into(),
            EvalError::FewShot(f) => f.into(),
            EvalError::Model(m) => m.into(),
            other => Self::data("eval", other),
        }
    }
}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> Self {
        Self::data("service", e)
    }
}
