use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::FewShotError;
use crate::audio::{load_wav_file, segment_one_second, AudioError, Segment};

/// Predefined classes available to every location, stored as one-second
/// segments per class.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SoundLibrary {
    classes: BTreeMap<String, Vec<Segment>>,
}

/// Case-insensitive, with `_` and `-` treated as spaces.
pub fn normalize_class_name(name: &str) -> String {
    name.trim()
        .chars()
        .map(|c| if c == '_' || c == '-' { ' ' } else { c.to_ascii_lowercase() })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

impl SoundLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, class: &str, segments: Vec<Segment>) {
        self.classes
            .entry(normalize_class_name(class))
            .or_default()
            .extend(segments);
    }

    /// Loads `<dir>/<class>/*.wav`, segmenting each file into one-second
    /// segments.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, FewShotError> {
        let mut lib = Self::new();
        let mut class_dirs: Vec<_> = std::fs::read_dir(dir.as_ref())
            .map_err(AudioError::Io)?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.is_dir())
            .collect();
        class_dirs.sort();
        for class_dir in class_dirs {
            let class = class_dir.file_name().unwrap_or_default().to_string_lossy().to_string();
            let mut files: Vec<_> = std::fs::read_dir(&class_dir)
                .map_err(AudioError::Io)?
                .filter_map(Result::ok)
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
                .collect();
            files.sort();
            for f in files {
                let clip = load_wav_file(&f)?;
                match segment_one_second(&clip) {
                    Ok(segs) => lib.insert(&class, segs),
                    Err(AudioError::EmptyClip) => {}
                    Err(e) => return Err(e.into()),
                }
            }
        }
        Ok(lib)
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.keys().cloned().collect()
    }

    pub fn canonical_name(&self, class: &str) -> Result<String, FewShotError> {
        let key = normalize_class_name(class);
        if self.classes.contains_key(&key) {
            Ok(key)
        } else {
            Err(FewShotError::UnknownLibraryClass(class.to_string()))
        }
    }

    pub fn segments(&self, class: &str) -> Option<&[Segment]> {
        self.classes.get(&normalize_class_name(class)).map(Vec::as_slice)
    }

    /// `count` distinct segments of `class`, chosen with a seeded RNG.
    pub fn sample(&self, class: &str, count: usize, seed: u64) -> Result<Vec<Segment>, FewShotError> {
        let key = self.canonical_name(class)?;
        let all = &self.classes[&key];
        if all.len() < count {
            return Err(FewShotError::InsufficientLibrary {
                class: key,
                available: all.len(),
                needed: count,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picks = sample(&mut rng, all.len(), count).into_vec();
        picks.sort_unstable();
        Ok(picks.into_iter().map(|i| all[i].clone()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(v: f32) -> Segment {
        Segment::new(vec![v; 16_000], "lib", 0.0)
    }

    #[test]
    fn names_normalize() {
        assert_eq!(normalize_class_name("  Door_Knock "), "door knock");
        assert_eq!(normalize_class_name("door-knock"), "door knock");
    }

    #[test]
    fn sampling_is_seeded_and_distinct() {
        let mut lib = SoundLibrary::new();
        lib.insert("Dog Bark", (0..9).map(|i| seg(i as f32 / 100.0)).collect());
        let a = lib.sample("dog_bark", 5, 3).unwrap();
        assert_eq!(a, lib.sample("DOG BARK", 5, 3).unwrap());
        assert_eq!(a.len(), 5);
        for i in 0..5 {
            for j in i + 1..5 {
                assert_ne!(a[i], a[j]);
            }
        }
        assert!(matches!(lib.sample("cat", 5, 0), Err(FewShotError::UnknownLibraryClass(_))));
        assert!(matches!(lib.sample("dog bark", 10, 0), Err(FewShotError::InsufficientLibrary { .. })));
    }
}
