//! On-disk corpus layout: one directory per class holding WAV clips, an
//! `_ambient/` directory with one recording per context, and
//! `manifest.tsv` with one record per file:
//!
//! ```text
//! kind	path	class	context	snr_db
//! clip	chirp-0002/noisy-004.wav	chirp-0002	noisy	10
//! ambient	_ambient/noisy.wav	-	noisy	10
//! ```
//!
//! `snr_db` is `inf` for clean clips. A directory without a manifest is read
//! as `<class>/*.wav` in a single context named `default`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{Corpus, EvalError, LabeledClip};
use crate::audio::{load_wav_file, write_wav_file, AudioError};

pub const MANIFEST: &str = "manifest.tsv";
pub const AMBIENT_DIR: &str = "_ambient";
const HEADER: &str = "kind\tpath\tclass\tcontext\tsnr_db";

pub(crate) fn format_snr(snr: f64) -> String {
    if snr.is_infinite() {
        "inf".into()
    } else {
        format!("{snr}")
    }
}

fn parse_snr(s: &str) -> Result<f64, EvalError> {
    match s {
        "inf" => Ok(f64::INFINITY),
        other => other
            .parse()
            .map_err(|_| EvalError::InvalidSpec(format!("bad snr_db {other:?}"))),
    }
}

fn file_stem(id: &str) -> String {
    id.rsplit('/').next().unwrap_or(id).to_string()
}

impl Corpus {
    /// Writes WAVs and the manifest under `dir` (created if needed).
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), EvalError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir.join(AMBIENT_DIR)).map_err(AudioError::from)?;
        let mut manifest = format!("{HEADER}\n");
        for lc in &self.clips {
            std::fs::create_dir_all(dir.join(&lc.class)).map_err(AudioError::from)?;
            let rel = format!("{}/{}.wav", lc.class, file_stem(&lc.clip.source_id));
            write_wav_file(dir.join(&rel), &lc.clip)?;
            let _ = writeln!(manifest, "clip\t{rel}\t{}\t{}\t{}", lc.class, lc.context, format_snr(lc.snr_db));
        }
        for (ctx, clip) in &self.ambients {
            let rel = format!("{AMBIENT_DIR}/{ctx}.wav");
            write_wav_file(dir.join(&rel), clip)?;
            let snr = self
                .clips
                .iter()
                .find(|c| &c.context == ctx)
                .map_or(f64::INFINITY, |c| c.snr_db);
            let _ = writeln!(manifest, "ambient\t{rel}\t-\t{ctx}\t{}", format_snr(snr));
        }
        std::fs::write(dir.join(MANIFEST), manifest).map_err(AudioError::from)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, EvalError> {
        let dir = dir.as_ref();
        let manifest_path = dir.join(MANIFEST);
        if !manifest_path.exists() {
            return Self::load_plain(dir);
        }
        let text = std::fs::read_to_string(&manifest_path).map_err(AudioError::from)?;
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(HEADER) {
            return Err(EvalError::InvalidSpec(format!("{MANIFEST}: unexpected header")));
        }
        let mut clips = Vec::new();
        let mut ambients = BTreeMap::new();
        for (n, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [kind, path, class, context, snr] = fields[..] else {
                return Err(EvalError::InvalidSpec(format!("{MANIFEST} line {}: expected 5 fields", n + 2)));
            };
            let mut clip = load_wav_file(dir.join(path))?;
            clip.source_id = path.trim_end_matches(".wav").to_string();
            match kind {
                "clip" => clips.push(LabeledClip {
                    clip,
                    class: class.to_string(),
                    context: context.to_string(),
                    snr_db: parse_snr(snr)?,
                }),
                "ambient" => {
                    ambients.insert(context.to_string(), clip);
                }
                other => return Err(EvalError::InvalidSpec(format!("{MANIFEST}: unknown kind {other:?}"))),
            }
        }
        Ok(Self { clips, ambients })
    }

    fn load_plain(dir: &Path) -> Result<Self, EvalError> {
        let mut class_dirs: Vec<_> = std::fs::read_dir(dir)
            .map_err(AudioError::from)?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.is_dir())
            .collect();
        class_dirs.sort();
        let mut clips = Vec::new();
        for cd in class_dirs {
            let class = cd.file_name().unwrap_or_default().to_string_lossy().to_string();
            if class == AMBIENT_DIR {
                continue;
            }
            let mut files: Vec<_> = std::fs::read_dir(&cd)
                .map_err(AudioError::from)?
                .filter_map(Result::ok)
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
                .collect();
            files.sort();
            for f in files {
                let mut clip = load_wav_file(&f)?;
                clip.source_id = format!("{class}/{}", f.file_stem().unwrap_or_default().to_string_lossy());
                clips.push(LabeledClip {
                    clip,
                    class: class.clone(),
                    context: "default".into(),
                    snr_db: f64::INFINITY,
                });
            }
        }
        Ok(Self {
            clips,
            ambients: BTreeMap::new(),
        })
    }
}
