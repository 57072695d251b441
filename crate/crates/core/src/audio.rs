//! Audio ingest: WAV decoding, canonicalization (16 kHz mono, [-1, 1]),
//! silence trimming, one-second segmentation and loudness measurement.

use std::io::Cursor;
use std::path::Path;

use thiserror::Error;

/// Canonical sample rate for everything downstream of ingest.
pub const SAMPLE_RATE: u32 = 16_000;
/// Samples in one canonical segment (one second).
pub const SEGMENT_LEN: usize = SAMPLE_RATE as usize;
/// Frame length used by silence detection (100 ms).
pub const SILENCE_FRAME: usize = 1_600;
/// RMS level below which a 100 ms frame counts as silent.
pub const SILENCE_FLOOR_DBFS: f64 = -60.0;
/// Silent runs strictly longer than this are removed by [`trim_silences`].
pub const MAX_KEPT_SILENCE_S: f64 = 1.0;
/// Loudness reported for an all-zero signal.
pub const LOUDNESS_FLOOR_DBFS: f64 = -120.0;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt audio file: {0}")]
    CorruptFile(String),
    #[error("clip is empty")]
    EmptyClip,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Mono PCM audio at a known sample rate, amplitudes in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub source_id: String,
}

impl AudioClip {
    /// Wraps canonical (16 kHz mono) samples, clamping amplitudes into range.
    pub fn canonical(samples: Vec<f32>, source_id: impl Into<String>) -> Self {
        let samples = samples.into_iter().map(|s| s.clamp(-1.0, 1.0)).collect();
        Self {
            samples,
            sample_rate: SAMPLE_RATE,
            source_id: source_id.into(),
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Exactly one second of canonical audio.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    samples: Vec<f32>,
    pub parent_id: String,
    pub offset_s: f64,
}

impl Segment {
    /// Builds a segment, zero-padding or truncating to [`SEGMENT_LEN`].
    pub fn new(mut samples: Vec<f32>, parent_id: impl Into<String>, offset_s: f64) -> Self {
        samples.resize(SEGMENT_LEN, 0.0);
        Self {
            samples,
            parent_id: parent_id.into(),
            offset_s,
        }
    }

    pub fn silent(parent_id: impl Into<String>) -> Self {
        Self::new(vec![0.0; SEGMENT_LEN], parent_id, 0.0)
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }
}

/// Reads a WAV file and converts it to the canonical representation.
pub fn load_wav_file(path: impl AsRef<Path>) -> Result<AudioClip, AudioError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let mut clip = load_and_normalize(&bytes)?;
    clip.source_id = path.display().to_string();
    Ok(clip)
}

/// Decodes RIFF/WAVE PCM bytes, downmixes to mono, resamples to 16 kHz and
/// scales amplitudes into `[-1, 1]`.
pub fn load_and_normalize(bytes: &[u8]) -> Result<AudioClip, AudioError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        if bytes.len() >= 4 && &bytes[0..4] == b"RIFF" && bytes.len() < 12 {
            return Err(AudioError::CorruptFile("truncated RIFF header".into()));
        }
        return Err(AudioError::UnsupportedFormat("not a RIFF/WAVE container".into()));
    }
    let reader = hound::WavReader::new(Cursor::new(bytes)).map_err(map_hound_error)?;
    let spec = reader.spec();
    if spec.channels == 0 || spec.channels > 2 {
        return Err(AudioError::UnsupportedFormat(format!(
            "{} channels (only mono and stereo are accepted)",
            spec.channels
        )));
    }
    let interleaved = decode_samples(reader, spec)?;
    let channels = spec.channels as usize;
    let mono: Vec<f32> = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f32>() / channels as f32)
            .collect()
    };
    let samples = if spec.sample_rate == SAMPLE_RATE {
        mono
    } else {
        resample(&mono, spec.sample_rate, SAMPLE_RATE)
    };
    Ok(AudioClip::canonical(samples, "wav"))
}

fn decode_samples<R: std::io::Read>(
    mut reader: hound::WavReader<R>,
    spec: hound::WavSpec,
) -> Result<Vec<f32>, AudioError> {
    match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map_err(map_hound_error))
            .collect(),
        (hound::SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| (v as f64 * scale) as f32).map_err(map_hound_error))
                .collect()
        }
        (format, bits) => Err(AudioError::UnsupportedFormat(format!(
            "{bits}-bit {format:?} samples"
        ))),
    }
}

fn map_hound_error(err: hound::Error) -> AudioError {
    match err {
        hound::Error::IoError(e) => AudioError::CorruptFile(e.to_string()),
        hound::Error::FormatError(m) => AudioError::CorruptFile(m.to_string()),
        hound::Error::TooWide => AudioError::UnsupportedFormat("sample width too large".into()),
        hound::Error::Unsupported => {
            AudioError::UnsupportedFormat("compressed or unknown WAV codec".into())
        }
        other => AudioError::CorruptFile(other.to_string()),
    }
}

/// Encodes canonical audio as 16-bit little-endian PCM WAV.
pub fn encode_wav(clip: &AudioClip) -> Vec<u8> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut cursor = Cursor::new(Vec::new());
    {
        let mut writer = hound::WavWriter::new(&mut cursor, spec).expect("in-memory wav writer");
        for &s in &clip.samples {
            writer
                .write_sample(quantize_i16(s))
                .expect("in-memory write cannot fail");
        }
        writer.finalize().expect("in-memory finalize cannot fail");
    }
    cursor.into_inner()
}

pub fn write_wav_file(path: impl AsRef<Path>, clip: &AudioClip) -> Result<(), AudioError> {
    std::fs::write(path, encode_wav(clip))?;
    Ok(())
}

/// Rounds a float sample to the nearest 16-bit code (full scale = 32768).
pub fn quantize_i16(s: f32) -> i16 {
    (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Converts 16-bit little-endian PCM bytes (wire format) to canonical floats.
/// A trailing odd byte is ignored.
pub fn pcm_i16le_to_f32(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as f32 / 32768.0)
        .collect()
}

const SINC_HALF_WIDTH: usize = 32;

/// Band-limited resampling with a Blackman-windowed sinc kernel. The cutoff
/// sits at the lower of the two Nyquist frequencies, slightly rolled off.
pub fn resample(input: &[f32], from_rate: u32, to_rate: u32) -> Vec<f32> {
    if from_rate == to_rate || input.is_empty() {
        return input.to_vec();
    }
    let ratio = to_rate as f64 / from_rate as f64;
    let out_len = ((input.len() as f64) * ratio).round() as usize;
    // Cutoff relative to the input rate.
    let cutoff = 0.5 * ratio.min(1.0) * 0.95;
    let half_width = (SINC_HALF_WIDTH as f64 / ratio.min(1.0)).ceil() as isize;
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len {
        let center = n as f64 / ratio;
        let lo = (center.floor() as isize - half_width + 1).max(0);
        let hi = (center.floor() as isize + half_width).min(input.len() as isize - 1);
        let mut acc = 0.0f64;
        for k in lo..=hi {
            let x = k as f64 - center;
            let w = blackman(x / (half_width as f64 + 1.0));
            acc += input[k as usize] as f64 * 2.0 * cutoff * sinc(2.0 * cutoff * x) * w;
        }
        out.push(acc as f32);
    }
    out
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Blackman window on `u ∈ [-1, 1]`.
fn blackman(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        return 0.0;
    }
    let t = std::f64::consts::PI * (u + 1.0);
    0.42 - 0.5 * t.cos() + 0.08 * (2.0 * t).cos()
}

fn rms(samples: &[f32]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let sum_sq: f64 = samples.iter().map(|&s| (s as f64) * (s as f64)).sum();
    (sum_sq / samples.len() as f64).sqrt()
}

/// `20·log10(RMS)` in dBFS, floored at [`LOUDNESS_FLOOR_DBFS`].
pub fn rms_dbfs(samples: &[f32]) -> f64 {
    let r = rms(samples);
    if r <= 0.0 {
        return LOUDNESS_FLOOR_DBFS;
    }
    (20.0 * r.log10()).max(LOUDNESS_FLOOR_DBFS)
}

pub fn loudness_db(segment: &Segment) -> f64 {
    rms_dbfs(segment.samples())
}

/// Removes every run of silent 100 ms frames lasting more than one second.
/// A trailing partial frame is classified like a full one.
pub fn trim_silences(clip: &AudioClip) -> AudioClip {
    let frames: Vec<&[f32]> = clip.samples.chunks(SILENCE_FRAME).collect();
    let silent: Vec<bool> = frames
        .iter()
        .map(|f| rms_dbfs(f) < SILENCE_FLOOR_DBFS)
        .collect();
    let mut out = Vec::with_capacity(clip.samples.len());
    let mut i = 0;
    while i < frames.len() {
        if !silent[i] {
            out.extend_from_slice(frames[i]);
            i += 1;
            continue;
        }
        let start = i;
        while i < frames.len() && silent[i] {
            i += 1;
        }
        let run_len: usize = frames[start..i].iter().map(|f| f.len()).sum();
        if run_len as f64 / clip.sample_rate as f64 <= MAX_KEPT_SILENCE_S {
            for f in &frames[start..i] {
                out.extend_from_slice(f);
            }
        }
    }
    AudioClip {
        samples: out,
        sample_rate: clip.sample_rate,
        source_id: clip.source_id.clone(),
    }
}

/// Tiles the clip into one-second segments. A trailing partial window is
/// zero-padded when it holds at least half a second, otherwise dropped.
pub fn segment_one_second(clip: &AudioClip) -> Result<Vec<Segment>, AudioError> {
    if clip.samples.is_empty() {
        return Err(AudioError::EmptyClip);
    }
    let segments = clip
        .samples
        .chunks(SEGMENT_LEN)
        .enumerate()
        .filter(|(_, chunk)| chunk.len() * 2 >= SEGMENT_LEN)
        .map(|(i, chunk)| Segment::new(chunk.to_vec(), clip.source_id.clone(), i as f64))
        .collect();
    Ok(segments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sine(freq: f64, amp: f64, rate: u32, len: usize) -> Vec<f32> {
        (0..len)
            .map(|n| (amp * (2.0 * std::f64::consts::PI * freq * n as f64 / rate as f64).sin()) as f32)
            .collect()
    }

    fn wav_bytes(spec: hound::WavSpec, write: impl FnOnce(&mut hound::WavWriter<&mut Cursor<Vec<u8>>>)) -> Vec<u8> {
        let mut cursor = Cursor::new(Vec::new());
        {
            let mut w = hound::WavWriter::new(&mut cursor, spec).unwrap();
            write(&mut w);
            w.finalize().unwrap();
        }
        cursor.into_inner()
    }

    #[test]
    fn canonical_16bit_wav_is_preserved() {
        let codes: Vec<i16> = (0..16000).map(|n| ((n * 37) % 65536) as i32 as i16).collect();
        let spec = hound::WavSpec { channels: 1, sample_rate: 16000, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
        let bytes = wav_bytes(spec, |w| codes.iter().for_each(|&c| w.write_sample(c).unwrap()));
        let clip = load_and_normalize(&bytes).unwrap();
        assert_eq!(clip.samples.len(), 16000);
        for (s, c) in clip.samples.iter().zip(&codes) {
            assert_eq!(*s, *c as f32 / 32768.0);
        }
        // And back to identical codes.
        let again = load_and_normalize(&encode_wav(&clip)).unwrap();
        assert_eq!(again.samples, clip.samples);
    }

    #[test]
    fn stereo_is_averaged() {
        let spec = hound::WavSpec { channels: 2, sample_rate: 16000, bits_per_sample: 32, sample_format: hound::SampleFormat::Float };
        let bytes = wav_bytes(spec, |w| {
            for _ in 0..1000 {
                w.write_sample(0.4f32).unwrap();
                w.write_sample(0.2f32).unwrap();
            }
        });
        let clip = load_and_normalize(&bytes).unwrap();
        assert_eq!(clip.samples.len(), 1000);
        assert!(clip.samples.iter().all(|&s| (s - 0.3).abs() < 1e-7));
    }

    #[test]
    fn decodes_8_24_32_bit_int() {
        for bits in [8u16, 24, 32] {
            let spec = hound::WavSpec { channels: 1, sample_rate: 16000, bits_per_sample: bits, sample_format: hound::SampleFormat::Int };
            let half = 1i32 << (bits - 2);
            let bytes = wav_bytes(spec, |w| {
                for _ in 0..10 {
                    w.write_sample(half).unwrap();
                }
            });
            let clip = load_and_normalize(&bytes).unwrap();
            assert!(clip.samples.iter().all(|&s| (s - 0.5).abs() < 1e-6), "bits {bits}");
        }
    }

    #[test]
    fn rejects_non_wav_and_truncated() {
        assert!(matches!(load_and_normalize(b"ID3\x03 mp3 data here"), Err(AudioError::UnsupportedFormat(_))));
        let spec = hound::WavSpec { channels: 1, sample_rate: 16000, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
        let bytes = wav_bytes(spec, |w| (0..100).for_each(|_| w.write_sample(1i16).unwrap()));
        assert!(matches!(load_and_normalize(&bytes[..30]), Err(AudioError::CorruptFile(_))));
    }

    #[test]
    fn resampled_48k_sine_keeps_pitch() {
        let input = sine(1000.0, 0.5, 48000, 48000);
        let out = resample(&input, 48000, 16000);
        assert_eq!(out.len(), 16000);
        // Compare against the analytic 16 kHz sine away from the edges.
        let reference = sine(1000.0, 0.5, 16000, 16000);
        let max_err = out[200..15800]
            .iter()
            .zip(&reference[200..15800])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max_err < 5e-3, "max_err {max_err}");
    }

    #[test]
    fn resampling_suppresses_aliases() {
        // 7 kHz at 48 kHz must not fold back when going to 16 kHz... it stays in band,
        // but 12 kHz is above the new Nyquist and must vanish.
        let input = sine(12000.0, 0.5, 48000, 48000);
        let out = resample(&input, 48000, 16000);
        assert!(rms_dbfs(&out[500..15500]) < -40.0);
    }

    #[test]
    fn loudness_reference_values() {
        let full = Segment::new(sine(1000.0, 1.0, 16000, 16000), "t", 0.0);
        assert!((loudness_db(&full) + 3.0103).abs() < 1e-3);
        let tenth = Segment::new(sine(1000.0, 0.1, 16000, 16000), "t", 0.0);
        assert!((loudness_db(&tenth) + 23.0103).abs() < 1e-3);
        assert_eq!(loudness_db(&Segment::silent("z")), -120.0);
    }

    fn tone_then(parts: &[(bool, f64)]) -> AudioClip {
        let mut s = Vec::new();
        for &(tone, secs) in parts {
            let n = (secs * 16000.0).round() as usize;
            if tone {
                s.extend(sine(440.0, 0.5, 16000, n));
            } else {
                s.extend(std::iter::repeat(0.0).take(n));
            }
        }
        AudioClip::canonical(s, "t")
    }

    #[test]
    fn trim_removes_long_silence_only() {
        let loud = tone_then(&[(true, 1.0), (true, 1.0)]);
        assert_eq!(trim_silences(&loud), loud);
        let long_gap = tone_then(&[(true, 1.0), (false, 3.0), (true, 1.0)]);
        assert_eq!(trim_silences(&long_gap).samples.len(), 32000);
        let short_gap = tone_then(&[(true, 1.0), (false, 0.8), (true, 1.0)]);
        assert_eq!(trim_silences(&short_gap), short_gap);
        let all_silent = tone_then(&[(false, 2.0)]);
        assert!(trim_silences(&all_silent).is_empty());
    }

    #[test]
    fn segmentation_pad_and_drop_rules() {
        let two = tone_then(&[(true, 2.0)]);
        let segs = segment_one_second(&two).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[1].offset_s, 1.0);
        let two_half = tone_then(&[(true, 2.5)]);
        let segs = segment_one_second(&two_half).unwrap();
        assert_eq!(segs.len(), 3);
        assert!(segs[2].samples()[8000..].iter().all(|&s| s == 0.0));
        assert_eq!(segment_one_second(&tone_then(&[(true, 2.3)])).unwrap().len(), 2);
        assert!(matches!(segment_one_second(&AudioClip::canonical(vec![], "e")), Err(AudioError::EmptyClip)));
    }

    #[test]
    fn pcm_wire_decoding() {
        let bytes = [0x00, 0x40, 0x00, 0xC0, 0xFF];
        assert_eq!(pcm_i16le_to_f32(&bytes), vec![0.5, -0.5]);
    }

    proptest! {
        #[test]
        fn loudness_scaling_law(amp in 0.01f64..0.5, c in 0.05f64..1.9, freq in 50.0f64..4000.0) {
            let x: Vec<f32> = sine(freq, amp, 16000, 16000);
            let base = rms_dbfs(&x);
            let scaled: Vec<f64> = x.iter().map(|&s| s as f64 * c).collect();
            let r = (scaled.iter().map(|s| s * s).sum::<f64>() / scaled.len() as f64).sqrt();
            // Evaluate the law on the exact scaled signal (no f32 rounding).
            let direct = 20.0 * r.log10();
            prop_assert!((direct - (base + 20.0 * c.log10())).abs() < 1e-9);
        }

        #[test]
        fn trim_is_idempotent(pattern in proptest::collection::vec((any::<bool>(), 1usize..30), 1..8)) {
            let parts: Vec<(bool, f64)> = pattern.iter().map(|&(t, n)| (t, n as f64 * 0.1)).collect();
            let clip = tone_then(&parts);
            let once = trim_silences(&clip);
            prop_assert_eq!(trim_silences(&once), once.clone());
            prop_assert!(once.samples.len() <= clip.samples.len());
        }

        #[test]
        fn segments_reconstruct_clip(len in 8000usize..60000) {
            let clip = AudioClip::canonical((0..len).map(|i| ((i % 97) as f32 / 97.0) - 0.5).collect(), "p");
            let segs = segment_one_second(&clip).unwrap();
            let joined: Vec<f32> = segs.iter().flat_map(|s| s.samples().iter().copied()).collect();
            let kept = joined.len().min(len);
            prop_assert_eq!(&joined[..kept], &clip.samples[..kept]);
            let remainder = len % SEGMENT_LEN;
            let expected_kept = if remainder * 2 >= SEGMENT_LEN || remainder == 0 { len } else { len - remainder };
            prop_assert_eq!(kept, expected_kept);
        }
    }
}
