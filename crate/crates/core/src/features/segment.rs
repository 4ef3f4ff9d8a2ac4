//! Fixed-length, half-overlapping segments of a clip.
//!
//! A segment covering `n` target frames owns `n * hop` raw samples starting at
//! `start_frame * hop`. The raw slice is peak-normalized, and its target is
//! the first `n` columns of the centered log-mel of that normalized slice
//! (which has `n + 1` columns; the last is dropped). MST segments use
//! `segment_frames - 1` target frames, classifier segments `segment_frames`.

use serde::{Deserialize, Serialize};

use super::{frame_count, FeatureParams, MelExtractor};
use crate::audio::AudioClip;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    /// Regression pairs for the transform model (last window frame sliced off).
    Mst,
    /// Classifier inputs covering the full window.
    Classification,
}

impl SegmentKind {
    pub fn target_frames(self, params: &FeatureParams) -> usize {
        match self {
            SegmentKind::Mst => params.segment_frames - 1,
            SegmentKind::Classification => params.segment_frames,
        }
    }

    pub fn raw_len(self, params: &FeatureParams) -> usize {
        self.target_frames(params) * params.hop
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    /// Peak-normalized waveform slice.
    pub raw: Vec<f32>,
    /// Log-mel of `raw`, `n_mels x frames`, before trainset normalization.
    pub log_mel: Vec<f32>,
    pub n_mels: usize,
    pub frames: usize,
    pub start_frame: usize,
    /// Peak absolute amplitude before normalization.
    pub peak: f64,
    pub parent_clip: String,
    pub variant: String,
    pub fold: u8,
    pub class_label: u16,
}

/// Window start frames for a clip of `n_samples`.
pub fn segment_starts(n_samples: usize, params: &FeatureParams, kind: SegmentKind) -> Vec<usize> {
    let total = frame_count(n_samples, params.hop);
    let raw_len = kind.raw_len(params);
    let stride = params.segment_stride();
    (0..)
        .map(|i| i * stride)
        .take_while(|&s| s + params.segment_frames <= total && s * params.hop + raw_len <= n_samples)
        .collect()
}

pub fn is_silent(slice: &[f64], threshold: f64) -> bool {
    peak(slice) < threshold
}

fn peak(slice: &[f64]) -> f64 {
    slice.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Divides by the maximum absolute value; all-zero input is returned as is.
pub fn normalize_peak(slice: &[f64]) -> Vec<f64> {
    let p = peak(slice);
    if p == 0.0 {
        slice.to_vec()
    } else {
        slice.iter().map(|v| v / p).collect()
    }
}

fn build_segment(
    clip: &AudioClip,
    variant: &str,
    extractor: &MelExtractor,
    kind: SegmentKind,
    start: usize,
    samples: &[f64],
) -> Result<Segment> {
    let params = extractor.params();
    let frames = kind.target_frames(params);
    let a = start * params.hop;
    let slice = &samples[a..a + kind.raw_len(params)];
    let normalized = normalize_peak(slice);
    let mel = extractor.log_mel(&normalized)?.values.columns(0, frames);
    Ok(Segment {
        raw: normalized.iter().map(|&v| v as f32).collect(),
        log_mel: mel.data().iter().map(|&v| v as f32).collect(),
        n_mels: params.n_mels,
        frames,
        start_frame: start,
        peak: peak(slice),
        parent_clip: clip.clip_id.clone(),
        variant: variant.to_string(),
        fold: clip.fold,
        class_label: clip.class_label,
    })
}

/// Non-silent segments of `clip` at 50%-overlapping window positions.
/// Trailing partial windows are dropped; a too-short clip yields nothing.
pub fn segment_clip(
    clip: &AudioClip,
    variant: &str,
    extractor: &MelExtractor,
    kind: SegmentKind,
) -> Result<Vec<Segment>> {
    let params = extractor.params();
    let raw_len = kind.raw_len(params);
    segment_starts(clip.samples.len(), params, kind)
        .into_iter()
        .filter(|&s| {
            let a = s * params.hop;
            !is_silent(&clip.samples[a..a + raw_len], params.silence_threshold)
        })
        .map(|s| build_segment(clip, variant, extractor, kind, s, &clip.samples))
        .collect()
}

/// Like [`segment_clip`], but never empty: when every window is silent the
/// highest-energy window is kept, and a too-short clip is zero-padded to one
/// window.
pub fn segment_clip_with_fallback(
    clip: &AudioClip,
    variant: &str,
    extractor: &MelExtractor,
    kind: SegmentKind,
) -> Result<Vec<Segment>> {
    let segs = segment_clip(clip, variant, extractor, kind)?;
    if !segs.is_empty() {
        return Ok(segs);
    }
    let params = extractor.params();
    let raw_len = kind.raw_len(params);
    let mut samples = clip.samples.clone();
    let mut starts = segment_starts(samples.len(), params, kind);
    if starts.is_empty() {
        let need = raw_len.max(params.segment_frames.saturating_sub(1) * params.hop);
        samples.resize(need, 0.0);
        starts = vec![0];
    }
    let energy = |s: usize| -> f64 {
        let a = s * params.hop;
        samples[a..a + raw_len].iter().map(|v| v * v).sum()
    };
    let best = starts
        .iter()
        .copied()
        .fold((starts[0], f64::NEG_INFINITY), |(bs, be), s| {
            let e = energy(s);
            if e > be {
                (s, e)
            } else {
                (bs, be)
            }
        })
        .0;
    Ok(vec![build_segment(clip, variant, extractor, kind, best, &samples)?])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> FeatureParams {
        FeatureParams::default()
    }

    fn brute_force_starts(n_samples: usize, frames: usize, stride: usize, hop: usize, raw_len: usize) -> Vec<usize> {
        let total = 1 + n_samples / hop;
        let mut out = Vec::new();
        for s in 0..total {
            if s % stride == 0 && s + frames <= total && s * hop + raw_len <= n_samples {
                out.push(s);
            }
        }
        out
    }

    #[test]
    fn five_second_clip_has_three_windows() {
        let p = params();
        assert_eq!(p.segment_stride(), 50);
        for kind in [SegmentKind::Mst, SegmentKind::Classification] {
            let s = segment_starts(110250, &p, kind);
            assert_eq!(s, vec![0, 50, 100]);
            assert_eq!(s, brute_force_starts(110250, 101, 50, 512, kind.raw_len(&p)));
        }
        assert_eq!(SegmentKind::Mst.raw_len(&p), 51200);
        assert_eq!(SegmentKind::Classification.raw_len(&p), 51712);
    }

    #[test]
    fn starts_match_enumeration_for_many_lengths() {
        let p = params();
        for n in (0..300_000).step_by(997) {
            for kind in [SegmentKind::Mst, SegmentKind::Classification] {
                assert_eq!(
                    segment_starts(n, &p, kind),
                    brute_force_starts(n, 101, 50, 512, kind.raw_len(&p)),
                    "n={n}"
                );
            }
        }
    }

    #[test]
    fn consecutive_windows_share_51_frames() {
        let s = segment_starts(110250, &params(), SegmentKind::Mst);
        for w in s.windows(2) {
            assert_eq!(w[0] + 101 - w[1], 51);
        }
    }

    #[test]
    fn silent_clip_yields_nothing_and_fallback_yields_one() {
        let ex = MelExtractor::new(&params()).unwrap();
        let clip = AudioClip::new(vec![1e-4; 110250], 22050, "quiet", 0, 1).unwrap();
        assert!(segment_clip(&clip, "orig", &ex, SegmentKind::Mst).unwrap().is_empty());
        let fb = segment_clip_with_fallback(&clip, "orig", &ex, SegmentKind::Classification).unwrap();
        assert_eq!(fb.len(), 1);
        assert_eq!(fb[0].raw.len(), 51712);
    }

    #[test]
    fn short_clip_yields_nothing() {
        let ex = MelExtractor::new(&params()).unwrap();
        let clip = AudioClip::new(vec![0.5; 40000], 22050, "short", 0, 1).unwrap();
        assert!(segment_clip(&clip, "orig", &ex, SegmentKind::Mst).unwrap().is_empty());
        assert_eq!(
            segment_clip_with_fallback(&clip, "orig", &ex, SegmentKind::Mst).unwrap().len(),
            1
        );
    }

    #[test]
    fn segments_are_peak_normalized() {
        let ex = MelExtractor::new(&params()).unwrap();
        let x: Vec<f64> = (0..110250).map(|i| 0.3 * (i as f64 * 0.05).sin()).collect();
        let clip = AudioClip::new(x, 22050, "tone", 4, 2).unwrap();
        let segs = segment_clip(&clip, "orig", &ex, SegmentKind::Mst).unwrap();
        assert_eq!(segs.len(), 3);
        for s in &segs {
            let m = s.raw.iter().fold(0.0f32, |m, v| m.max(v.abs()));
            assert_eq!(m, 1.0);
            assert_eq!(s.log_mel.len(), 60 * 100);
            assert_eq!((s.fold, s.class_label), (2, 4));
        }
    }
}
