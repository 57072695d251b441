//! Run settings, layered as defaults < config file < flags. The resolved
//! result is written next to every run's outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use earshot_core::eval::{EpisodeSpec, Method, PretrainConfig, SynthSpec};
use earshot_core::fewshot::{FinetuneConfig, LocationConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Manifest written next to file outputs as `<file>.run.toml` and inside
/// directory outputs as this name.
pub const RUN_MANIFEST: &str = "earshot-run.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    /// Class signatures with no background.
    Clean,
    /// A quiet room and a noisy street.
    ContextShift,
    /// Disjoint classes for training the embedder.
    Pretraining,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    pub suite: Suite,
    pub classes: usize,
    pub clips: usize,
    pub seed: u64,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self { suite: Suite::ContextShift, classes: 8, clips: 20, seed: 0 }
    }
}

impl SynthSettings {
    pub fn spec(&self) -> SynthSpec {
        match self.suite {
            Suite::Clean => SynthSpec::clean(self.classes, self.clips, self.seed),
            Suite::ContextShift => SynthSpec::context_shift(self.classes, self.clips, self.seed),
            Suite::Pretraining => SynthSpec::pretraining(self.classes, self.clips, self.seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub methods: Vec<Method>,
    /// Classes held out of every episode and used as open-set queries.
    pub held_out_classes: usize,
    pub thresholds: Vec<f64>,
    /// Classes the embedder was trained on; episodes containing them fail.
    pub pretraining_classes: Vec<String>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            held_out_classes: 0,
            thresholds: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            pretraining_classes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSettings {
    pub addr: String,
    pub k_shot: usize,
}

impl Default for ServeSettings {
    fn default() -> Self {
        Self { addr: "127.0.0.1:8080".into(), k_shot: earshot_service::K_SHOT }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub synth: SynthSettings,
    pub pretrain: PretrainConfig,
    pub episodes: EpisodeSpec,
    pub eval: EvalSettings,
    pub location: LocationConfig,
    pub finetune: FinetuneConfig,
    pub serve: ServeSettings,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {}", path.display(), e.message())))
    }
}

/// Resolved config plus the paths a run read and wrote.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub command: &'a str,
    pub version: &'a str,
    pub inputs: BTreeMap<&'a str, String>,
    pub outputs: BTreeMap<&'a str, String>,
    pub settings: &'a Settings,
}

impl RunManifest<'_> {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }
}

/// Where the manifest for `output` goes.
pub fn manifest_path(output: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        output.join(RUN_MANIFEST)
    } else {
        let mut name = output.file_name().unwrap_or_default().to_os_string();
        name.push(".run.toml");
        output.with_file_name(name)
    }
}
