use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{validate_meta, AudioClip};
use crate::error::{Error, Result};

fn map_hound(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        hound::Error::Unsupported => {
            Error::UnsupportedFormat(format!("{}: unsupported wav encoding", path.display()))
        }
        other => Error::Decode(format!("{}: {other}", path.display())),
    }
}

/// Reads a PCM16 or float32 WAV file as mono samples in [-1, 1] plus its rate.
/// Channels are averaged; integer samples are divided by 32768.
pub fn read_wav_samples(path: &Path) -> Result<(Vec<f64>, u32)> {
    let reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::Decode(format!("{}: zero channels", path.display())));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (fmt, bits) => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: {bits}-bit {fmt:?} samples (expected 16-bit PCM or 32-bit float)",
                path.display()
            )))
        }
    };
    let mono = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect::<Vec<_>>();
    if mono.iter().any(|v| !v.is_finite()) {
        return Err(Error::Decode(format!("{}: non-finite samples", path.display())));
    }
    Ok((mono.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect(), spec.sample_rate))
}

/// Parses `{fold}-{source}-{take}-{class}` into `(clip_id, fold, class)`.
pub fn parse_clip_name(path: &Path) -> Result<(String, u8, u16)> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Metadata(format!("{}: no file name", path.display())))?;
    let bad = || {
        Error::Metadata(format!(
            "{stem}: expected {{fold}}-{{source}}-{{take}}-{{class}}"
        ))
    };
    let parts: Vec<&str> = stem.split('-').collect();
    let [fold, source, take, class] = parts[..] else {
        return Err(bad());
    };
    if source.is_empty() || take.is_empty() {
        return Err(bad());
    }
    let fold: u8 = fold.parse().map_err(|_| bad())?;
    let class: u16 = class.parse().map_err(|_| bad())?;
    validate_meta(class, fold)?;
    Ok((stem.to_string(), fold, class))
}

/// Decodes a WAV file whose name follows the ESC-50 convention.
pub fn decode_wav(path: &Path) -> Result<AudioClip> {
    let (clip_id, fold, class) = parse_clip_name(path)?;
    let (samples, rate) = read_wav_samples(path)?;
    AudioClip::new(samples, rate, clip_id, class, fold)
}

/// Writes mono 16-bit PCM, clamping to [-1, 1).
pub fn write_wav_pcm16(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    for &s in samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(v).map_err(|e| map_hound(path, e))?;
    }
    w.finalize().map_err(|e| map_hound(path, e))
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ManifestEntry {
    pub clip_id: String,
    pub path: PathBuf,
    pub fold: u8,
    pub class_label: u16,
}

/// Reads a `clip_id,path,fold,class_label` CSV. Relative paths resolve
/// against the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Metadata(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for row in rdr.deserialize::<ManifestEntry>() {
        let mut e = row.map_err(|e| Error::Metadata(format!("{}: {e}", path.display())))?;
        validate_meta(e.class_label, e.fold)?;
        if e.path.is_relative() {
            e.path = base.join(&e.path);
        }
        out.push(e);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_esc50_names() {
        let (id, fold, class) = parse_clip_name(Path::new("audio/1-100032-A-0.wav")).unwrap();
        assert_eq!((id.as_str(), fold, class), ("1-100032-A-0", 1, 0));
        let (_, fold, class) = parse_clip_name(Path::new("5-9032-A-49.wav")).unwrap();
        assert_eq!((fold, class), (5, 49));
    }

    #[test]
    fn rejects_bad_names() {
        for name in ["foo.wav", "1-2-3.wav", "6-1-A-0.wav", "1-1-A-50.wav", "x-1-A-0.wav"] {
            assert!(
                matches!(parse_clip_name(Path::new(name)), Err(Error::Metadata(_))),
                "{name}"
            );
        }
    }

    #[test]
    fn pcm16_full_scale_and_silence() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("2-1-A-3.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 44100,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        w.write_sample(32767i16).unwrap();
        w.write_sample(-32768i16).unwrap();
        for _ in 0..44098 {
            w.write_sample(0i16).unwrap();
        }
        w.finalize().unwrap();
        let c = decode_wav(&p).unwrap();
        assert_eq!(c.samples.len(), 44100);
        assert_eq!(c.samples[0], 32767.0 / 32768.0);
        assert_eq!(c.samples[1], -1.0);
        assert!(c.samples[2..].iter().all(|&v| v == 0.0));
        assert_eq!((c.fold, c.class_label, c.sample_rate), (2, 3, 44100));
    }

    #[test]
    fn stereo_float_is_averaged() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("1-1-A-1.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 22050,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        for (l, r) in [(0.5f32, -0.25f32), (1.0, 0.0)] {
            w.write_sample(l).unwrap();
            w.write_sample(r).unwrap();
        }
        w.finalize().unwrap();
        let c = decode_wav(&p).unwrap();
        assert_eq!(c.samples, vec![0.125, 0.5]);
    }

    #[test]
    fn unsupported_and_malformed_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("1-1-A-1.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 22050,
            bits_per_sample: 24,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        w.write_sample(5i32).unwrap();
        w.finalize().unwrap();
        assert!(matches!(decode_wav(&p), Err(Error::UnsupportedFormat(_))));

        let q = dir.path().join("1-2-A-1.wav");
        std::fs::write(&q, b"RIFF\x04\x00\x00\x00JUNKJUNK").unwrap();
        assert!(matches!(decode_wav(&q), Err(Error::Decode(_))));
    }

    #[test]
    fn pcm16_round_trip_within_one_lsb() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("3-7-B-12.wav");
        let x: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin() * 0.9).collect();
        write_wav_pcm16(&p, &x, 44100).unwrap();
        let c = decode_wav(&p).unwrap();
        for (a, b) in x.iter().zip(&c.samples) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn manifest_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("manifest.csv");
        std::fs::write(&m, "clip_id,path,fold,class_label\nabc,clips/a.wav,2,7\n").unwrap();
        let rows = read_manifest(&m).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].path, dir.path().join("clips/a.wav"));
        assert_eq!((rows[0].fold, rows[0].class_label), (2, 7));
        std::fs::write(&m, "clip_id,path,fold,class_label\nabc,a.wav,9,7\n").unwrap();
        assert!(read_manifest(&m).is_err());
    }
}
