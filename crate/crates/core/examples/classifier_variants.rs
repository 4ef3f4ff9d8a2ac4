//! The three classifier variants side by side: input shapes, parameter
//! counts and which layers train. A frozen model is built from a freshly
//! initialized transform checkpoint and trained briefly on two tones to show
//! that its transform layers stay bit-identical.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use melseed::audio::AudioClip;
use melseed::classifier::{build_classifier, train_classifier, ClassifierConfig, ClfDataset, InitVariant};
use melseed::features::{segment_clip, FeatureParams, MelExtractor, SegmentKind};
use melseed::mst::{build_mst, MstArchitecture};
use melseed::nn::ModelCheckpoint;

fn main() -> melseed::Result<()> {
    let mst_arch = MstArchitecture { filters1: 32, filters2: 16, ..Default::default() };
    let mut cfg = ClassifierConfig::default();
    cfg.arch.piczak.conv_a_filters = 8;
    cfg.arch.piczak.conv_b_filters = 8;
    cfg.arch.piczak.hidden = 64;
    cfg.arch.piczak.classes = 2;
    cfg.epochs = 15;
    cfg.batch_size = 12;

    let mst_ckpt = ModelCheckpoint::from_model(&build_mst(&mst_arch, 11)?, BTreeMap::new());
    for v in InitVariant::ALL {
        let c = build_classifier(v, &cfg.arch, &mst_arch, 0, Some(&mst_ckpt))?;
        let trainable: usize = c.net.layers.iter().filter(|l| l.is_trainable()).flat_map(|l| &l.params).map(|p| p.len()).sum();
        println!(
            "{v:<22} input {:?}, {} layers, {} parameters, {} trainable",
            c.input_shape,
            c.net.layers.len(),
            c.net.num_params(),
            trainable
        );
    }

    let params = FeatureParams::default();
    let extractor = MelExtractor::new(&params)?;
    let mut segs = Vec::new();
    for (class, f) in [(0u16, 330.0), (1, 1760.0)] {
        for j in 0..2 {
            let x = (0..110_250).map(|i| 0.5 * (2.0 * PI * (f + 15.0 * j as f64) * i as f64 / 22_050.0).sin()).collect();
            let clip = AudioClip::new(x, 22_050, format!("1-{class}{j}-A-{class}"), class, 1)?;
            segs.extend(segment_clip(&clip, "orig", &extractor, SegmentKind::Classification)?);
        }
    }
    let data = ClfDataset::from_segments(&segs, InitVariant::RawPretrainedFrozen, None)?;
    let mut model = build_classifier(InitVariant::RawPretrainedFrozen, &cfg.arch, &mst_arch, 0, Some(&mst_ckpt))?;
    let before = model.mst_parameter_bytes();
    let outcome = train_classifier(&mut model, &data, None, &cfg)?;
    let (first, last) = (outcome.curve[0], outcome.curve[outcome.curve.len() - 1]);
    println!("frozen variant: loss {:.4} at epoch 0, {:.4} at epoch {}", first.train_loss, last.train_loss, last.epoch);
    println!("transform layers unchanged: {}", before == model.mst_parameter_bytes());
    Ok(())
}
