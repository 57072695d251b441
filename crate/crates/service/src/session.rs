//! One location's state and its on-disk layout:
//!
//! ```text
//! <root>/locations/<id>/
//!   meta.json            session metadata, rewritten atomically
//!   samples/<sample>.wav 1 s canonical recordings
//!   ambient.wav          location soundscape
//!   model-<version>.psnd trained model named in meta.json
//!   events.jsonl         append-only log of streams, predictions, ratings
//! ```
//!
//! Every mutation is durable when the call returns: files are written to a
//! temporary name, synced and renamed, and meta.json is committed last.

use std::collections::{HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use earshot_core::audio::{encode_wav, load_wav_file, AudioClip, Segment, SEGMENT_LEN};
use earshot_core::fewshot::{Origin, SupportSet};
use earshot_core::LocationModel;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

pub const META_FILE: &str = "meta.json";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const AMBIENT_FILE: &str = "ambient.wav";
pub const SAMPLES_DIR: &str = "samples";

pub fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

/// Writes `bytes` to `path` through a synced temporary file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    sync_dir(path.parent().unwrap_or(Path::new(".")))
}

fn sync_dir(dir: &Path) -> std::io::Result<()> {
    File::open(dir)?.sync_all()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMeta {
    pub name: String,
    pub origin: Origin,
    pub samples: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub version: String,
    pub file: String,
    pub class_names: Vec<String>,
    pub trained_at: f64,
    /// Wall-clock training time; absent for imported models.
    pub training_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub id: String,
    pub name: String,
    pub created_at: f64,
    pub updated_at: f64,
    pub classes: Vec<ClassMeta>,
    pub ambient_seconds: Option<f64>,
    pub model: Option<ModelMeta>,
    /// Number of models installed so far; part of each model version.
    pub generation: u64,
}

impl SessionMeta {
    pub fn class(&self, name: &str) -> Option<&ClassMeta> {
        self.classes.iter().find(|c| c.name == name)
    }
}

/// A trained model together with the version tag carried by its events.
#[derive(Debug)]
pub struct ActiveModel {
    pub version: String,
    pub model: LocationModel,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rating {
    Correct,
    Incorrect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    StreamOpened {
        stream: u64,
        at: f64,
    },
    Prediction {
        stream: u64,
        sequence: u64,
        verdict: String,
        class_name: String,
        model_version: String,
        at: f64,
    },
    Rating {
        stream: u64,
        sequence: u64,
        rating: Rating,
        at: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingEntry {
    pub stream: u64,
    pub sequence: u64,
    pub rating: Rating,
    pub predicted: String,
    pub model_version: String,
    pub at: f64,
}

#[derive(Debug)]
struct EventLog {
    file: File,
    next_stream: u64,
    /// (stream, sequence) → (class_name, model_version).
    predictions: HashMap<(u64, u64), (String, String)>,
    rated: HashSet<(u64, u64)>,
    ratings: Vec<RatingEntry>,
}

impl EventLog {
    fn open(path: &Path) -> Result<Self, ServiceError> {
        let mut log = Self {
            file: OpenOptions::new().create(true).append(true).read(true).open(path)?,
            next_stream: 0,
            predictions: HashMap::new(),
            rated: HashSet::new(),
            ratings: Vec::new(),
        };
        let reader = BufReader::new(File::open(path)?);
        let mut torn = false;
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<LogRecord>(&line) {
                Ok(rec) => log.apply(rec),
                // A kill mid-append leaves at most one partial final line.
                Err(_) => torn = true,
            }
        }
        if torn {
            tracing::warn!(path = %path.display(), "skipped a torn event log line");
            log.file.write_all(b"\n")?;
        }
        Ok(log)
    }

    fn apply(&mut self, rec: LogRecord) {
        match rec {
            LogRecord::StreamOpened { stream, .. } => self.next_stream = self.next_stream.max(stream + 1),
            LogRecord::Prediction {
                stream,
                sequence,
                class_name,
                model_version,
                ..
            } => {
                self.next_stream = self.next_stream.max(stream + 1);
                self.predictions.insert((stream, sequence), (class_name, model_version));
            }
            LogRecord::Rating {
                stream,
                sequence,
                rating,
                at,
            } => {
                let (predicted, model_version) = self.predictions.get(&(stream, sequence)).cloned().unwrap_or_default();
                self.rated.insert((stream, sequence));
                self.ratings.push(RatingEntry {
                    stream,
                    sequence,
                    rating,
                    predicted,
                    model_version,
                    at,
                });
            }
        }
    }

    fn append(&mut self, rec: LogRecord) -> Result<(), ServiceError> {
        let mut line = serde_json::to_vec(&rec)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()?;
        self.apply(rec);
        Ok(())
    }
}

#[derive(Debug)]
pub struct Session {
    pub id: String,
    dir: PathBuf,
    /// Serializes mutations (recording, training); readers never take it.
    pub write_gate: tokio::sync::Mutex<()>,
    meta: RwLock<SessionMeta>,
    model: RwLock<Option<Arc<ActiveModel>>>,
    log: Mutex<EventLog>,
}

impl Session {
    pub fn create(dir: PathBuf, id: String, name: String) -> Result<Self, ServiceError> {
        fs::create_dir_all(dir.join(SAMPLES_DIR))?;
        let t = now();
        let meta = SessionMeta {
            id: id.clone(),
            name,
            created_at: t,
            updated_at: t,
            classes: Vec::new(),
            ambient_seconds: None,
            model: None,
            generation: 0,
        };
        write_atomic(&dir.join(META_FILE), &serde_json::to_vec_pretty(&meta)?)?;
        if let Some(parent) = dir.parent() {
            sync_dir(parent)?;
        }
        let log = EventLog::open(&dir.join(EVENTS_FILE))?;
        Ok(Self {
            id,
            dir,
            write_gate: tokio::sync::Mutex::new(()),
            meta: RwLock::new(meta),
            model: RwLock::new(None),
            log: Mutex::new(log),
        })
    }

    pub fn load(dir: PathBuf) -> Result<Self, ServiceError> {
        let meta: SessionMeta = serde_json::from_slice(&fs::read(dir.join(META_FILE))?)?;
        let model = match &meta.model {
            Some(m) => {
                let bytes = fs::read(dir.join(&m.file))?;
                let model = LocationModel::from_bytes(&bytes)?;
                Some(Arc::new(ActiveModel {
                    version: m.version.clone(),
                    model,
                    bytes,
                }))
            }
            None => None,
        };
        let log = EventLog::open(&dir.join(EVENTS_FILE))?;
        Ok(Self {
            id: meta.id.clone(),
            dir,
            write_gate: tokio::sync::Mutex::new(()),
            meta: RwLock::new(meta),
            model: RwLock::new(model),
            log: Mutex::new(log),
        })
    }

    pub fn meta(&self) -> SessionMeta {
        self.meta.read().expect("meta lock").clone()
    }

    fn commit(&self, mut meta: SessionMeta) -> Result<(), ServiceError> {
        meta.updated_at = now();
        write_atomic(&self.dir.join(META_FILE), &serde_json::to_vec_pretty(&meta)?)?;
        *self.meta.write().expect("meta lock") = meta;
        Ok(())
    }

    fn sample_path(&self, sample_id: &str) -> PathBuf {
        self.dir.join(SAMPLES_DIR).join(format!("{sample_id}.wav"))
    }

    /// Stores one recording under `class`, creating the class if needed.
    /// Callers hold the write gate.
    pub fn add_sample(&self, class: &str, origin: Origin, segment: &Segment) -> Result<String, ServiceError> {
        let sample_id = uuid::Uuid::new_v4().simple().to_string();
        let clip = AudioClip::canonical(segment.samples().to_vec(), &sample_id);
        write_atomic(&self.sample_path(&sample_id), &encode_wav(&clip))?;
        let mut meta = self.meta();
        match meta.classes.iter_mut().find(|c| c.name == class) {
            Some(c) => c.samples.push(sample_id.clone()),
            None => meta.classes.push(ClassMeta {
                name: class.to_string(),
                origin,
                samples: vec![sample_id.clone()],
            }),
        }
        self.commit(meta)?;
        Ok(sample_id)
    }

    /// Removes a recording; a class left empty is removed too.
    pub fn delete_sample(&self, class: &str, sample_id: &str) -> Result<(), ServiceError> {
        let mut meta = self.meta();
        let c = meta
            .classes
            .iter_mut()
            .find(|c| c.name == class)
            .ok_or_else(|| ServiceError::UnknownClass(class.to_string()))?;
        let pos = c
            .samples
            .iter()
            .position(|s| s == sample_id)
            .ok_or_else(|| ServiceError::UnknownSample(sample_id.to_string()))?;
        c.samples.remove(pos);
        meta.classes.retain(|c| !c.samples.is_empty());
        self.commit(meta)?;
        // The meta commit is the point of no return; a leftover file is harmless.
        let _ = fs::remove_file(self.sample_path(sample_id));
        Ok(())
    }

    pub fn sample_wav(&self, class: &str, sample_id: &str) -> Result<Vec<u8>, ServiceError> {
        let meta = self.meta();
        let c = meta.class(class).ok_or_else(|| ServiceError::UnknownClass(class.to_string()))?;
        if !c.samples.iter().any(|s| s == sample_id) {
            return Err(ServiceError::UnknownSample(sample_id.to_string()));
        }
        Ok(fs::read(self.sample_path(sample_id))?)
    }

    pub fn set_ambient(&self, clip: &AudioClip) -> Result<(), ServiceError> {
        write_atomic(&self.dir.join(AMBIENT_FILE), &encode_wav(clip))?;
        let mut meta = self.meta();
        meta.ambient_seconds = Some(clip.duration_s());
        self.commit(meta)
    }

    pub fn ambient(&self) -> Result<Option<AudioClip>, ServiceError> {
        if self.meta().ambient_seconds.is_none() {
            return Ok(None);
        }
        let mut clip = load_wav_file(self.dir.join(AMBIENT_FILE))?;
        clip.source_id = format!("{}/ambient", self.id);
        Ok(Some(clip))
    }

    /// The recorded support set, with the location's own ambient as the
    /// source soundscape of user recordings. Every class must hold exactly
    /// `k` recordings and there must be at least two classes.
    pub fn support_set(&self, k: usize) -> Result<(SupportSet, AudioClip), ServiceError> {
        let meta = self.meta();
        let incomplete: Vec<String> = meta
            .classes
            .iter()
            .filter(|c| c.samples.len() != k)
            .map(|c| format!("{} ({}/{k})", c.name, c.samples.len()))
            .collect();
        if meta.classes.len() < 2 || !incomplete.is_empty() {
            return Err(ServiceError::IncompleteClasses(format!(
                "need at least 2 classes with exactly {k} recordings; have {} classes{}",
                meta.classes.len(),
                if incomplete.is_empty() { String::new() } else { format!(", incomplete: {}", incomplete.join(", ")) }
            )));
        }
        let ambient = self
            .ambient()?
            .ok_or_else(|| ServiceError::MissingSoundscape("record an ambient soundscape before training".into()))?;
        let mut set = SupportSet::new(Some(ambient.clone()));
        for c in &meta.classes {
            let segments = c
                .samples
                .iter()
                .map(|id| {
                    let clip = load_wav_file(self.sample_path(id))?;
                    let mut samples = clip.samples;
                    samples.resize(SEGMENT_LEN, 0.0);
                    Ok(Segment::new(samples, id.clone(), 0.0))
                })
                .collect::<Result<Vec<_>, ServiceError>>()?;
            set.add_class(c.name.clone(), c.origin, segments);
        }
        Ok((set, ambient))
    }

    pub fn current_model(&self) -> Option<Arc<ActiveModel>> {
        self.model.read().expect("model lock").clone()
    }

    /// Persists `model` and swaps it in. Streams pick it up at their next
    /// window; a window already being scored finishes on the old model.
    pub fn install_model(&self, model: LocationModel, training_ms: Option<f64>) -> Result<Arc<ActiveModel>, ServiceError> {
        let bytes = model.to_bytes();
        self.install_bytes(model, bytes, training_ms)
    }

    pub fn install_bytes(
        &self,
        model: LocationModel,
        bytes: Vec<u8>,
        training_ms: Option<f64>,
    ) -> Result<Arc<ActiveModel>, ServiceError> {
        let mut meta = self.meta();
        meta.generation += 1;
        let version = format!("{}-{:016x}", meta.generation, fnv1a(&bytes));
        let file = format!("model-{version}.psnd");
        write_atomic(&self.dir.join(&file), &bytes)?;
        let previous = meta.model.replace(ModelMeta {
            version: version.clone(),
            file,
            class_names: model.class_names.clone(),
            trained_at: now(),
            training_ms,
        });
        self.commit(meta)?;
        if let Some(old) = previous {
            let _ = fs::remove_file(self.dir.join(old.file));
        }
        let active = Arc::new(ActiveModel { version, model, bytes });
        *self.model.write().expect("model lock") = Some(active.clone());
        Ok(active)
    }

    pub fn open_stream(&self) -> Result<u64, ServiceError> {
        let mut log = self.log.lock().expect("log lock");
        let stream = log.next_stream;
        log.append(LogRecord::StreamOpened { stream, at: now() })?;
        Ok(stream)
    }

    pub fn record_prediction(
        &self,
        stream: u64,
        sequence: u64,
        verdict: &str,
        class_name: &str,
        model_version: &str,
    ) -> Result<(), ServiceError> {
        self.log.lock().expect("log lock").append(LogRecord::Prediction {
            stream,
            sequence,
            verdict: verdict.to_string(),
            class_name: class_name.to_string(),
            model_version: model_version.to_string(),
            at: now(),
        })
    }

    /// Rates an emitted prediction. Without `stream`, the most recent
    /// stream that emitted `sequence` is meant.
    pub fn rate(&self, stream: Option<u64>, sequence: u64, rating: Rating) -> Result<RatingEntry, ServiceError> {
        let mut log = self.log.lock().expect("log lock");
        let stream = match stream {
            Some(s) => s,
            None => log
                .predictions
                .keys()
                .filter(|(_, q)| *q == sequence)
                .map(|(s, _)| *s)
                .max()
                .ok_or(ServiceError::UnknownPrediction { stream: log.next_stream.saturating_sub(1), sequence })?,
        };
        if !log.predictions.contains_key(&(stream, sequence)) {
            return Err(ServiceError::UnknownPrediction { stream, sequence });
        }
        if log.rated.contains(&(stream, sequence)) {
            return Err(ServiceError::AlreadyRated { stream, sequence });
        }
        log.append(LogRecord::Rating {
            stream,
            sequence,
            rating,
            at: now(),
        })?;
        Ok(log.ratings.last().expect("just appended").clone())
    }

    pub fn ratings(&self) -> Vec<RatingEntry> {
        self.log.lock().expect("log lock").ratings.clone()
    }

    pub fn prediction_count(&self) -> usize {
        self.log.lock().expect("log lock").predictions.len()
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf29ce484222325u64, |h, &b| (h ^ b as u64).wrapping_mul(0x100000001b3))
}
