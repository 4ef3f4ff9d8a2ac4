//! Writes a 44.1 kHz clip in dataset naming style, decodes it and conforms
//! it to the 22.05 kHz, five-second working format.

use std::f64::consts::PI;

use melseed::audio::{decode_wav, load_clip, write_wav_pcm16, Resampler, WORKING_RATE};

fn main() -> melseed::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let path = dir.path().join("3-41522-B-17.wav");
    let tone: Vec<f64> = (0..44_100 * 4)
        .map(|i| 0.4 * (2.0 * PI * 1000.0 * i as f64 / 44_100.0).sin())
        .collect();
    write_wav_pcm16(&path, &tone, 44_100)?;

    let raw = decode_wav(&path)?;
    println!(
        "decoded {}: fold {}, class {}, {} samples at {} Hz",
        raw.clip_id,
        raw.fold,
        raw.class_label,
        raw.samples.len(),
        raw.sample_rate
    );

    let r = Resampler::new(44_100, WORKING_RATE);
    println!("resampling ratio {:?}", r.ratio());

    let clip = load_clip(&path, WORKING_RATE)?;
    println!(
        "conformed: {} samples ({:.2} s) at {} Hz, tail is zero-padded: {}",
        clip.samples.len(),
        clip.duration_secs(),
        clip.sample_rate,
        clip.samples[clip.samples.len() - 100..].iter().all(|&v| v == 0.0)
    );
    Ok(())
}
