//! Log-mel spectrogram of a synthetic chirp, cut into half-overlapping
//! segments the way the training pipeline sees them.

use std::f64::consts::PI;

use melseed::audio::AudioClip;
use melseed::features::{segment_clip, FeatureParams, MelExtractor, SegmentKind};

fn main() -> melseed::Result<()> {
    let params = FeatureParams::default();
    let extractor = MelExtractor::new(&params)?;
    let sr = params.sample_rate as f64;
    // 5 s chirp from 200 Hz to 4 kHz
    let samples: Vec<f64> = (0..110_250)
        .map(|i| {
            let t = i as f64 / sr;
            0.5 * (2.0 * PI * (200.0 * t + 380.0 * t * t)).sin()
        })
        .collect();

    let mel = extractor.log_mel(&samples)?;
    println!("clip log-mel: {} bands x {} frames", mel.n_mels(), mel.n_frames());
    for frame in [0, 100, 200] {
        let col: Vec<f64> = (0..mel.n_mels()).map(|b| mel.values.get(b, frame)).collect();
        let peak = (0..col.len()).max_by(|&a, &b| col[a].total_cmp(&col[b])).unwrap();
        println!("  frame {frame:>3}: loudest band {peak:>2} ({:.2})", col[peak]);
    }

    let clip = AudioClip::new(samples, params.sample_rate, "1-1-A-0", 0, 1)?;
    for kind in [SegmentKind::Mst, SegmentKind::Classification] {
        let segs = segment_clip(&clip, "orig", &extractor, kind)?;
        println!(
            "{kind:?}: {} segments of {} samples -> {}x{} targets, starts {:?}",
            segs.len(),
            kind.raw_len(&params),
            segs[0].n_mels,
            segs[0].frames,
            segs.iter().map(|s| s.start_frame).collect::<Vec<_>>()
        );
    }
    Ok(())
}
