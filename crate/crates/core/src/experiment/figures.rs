//! PNG renderings with CSV twins for the learned filters and the
//! target/predicted spectrogram comparison.

use std::fmt::Write as _;
use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::Matrix;

fn save_err(path: &Path, e: image::ImageError) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

/// Row-major matrix as CSV without a header.
pub fn matrix_csv(m: &Matrix) -> String {
    let mut s = String::with_capacity(m.rows() * m.cols() * 12);
    for r in 0..m.rows() {
        for (c, v) in m.row(r).iter().enumerate() {
            if c > 0 {
                s.push(',');
            }
            let _ = write!(s, "{v}");
        }
        s.push('\n');
    }
    s
}

/// One grayscale row per filter, mid-gray at zero, scaled by the largest
/// absolute weight.
pub fn write_filters_png(filters: &Matrix, path: &Path) -> Result<()> {
    let scale = filters.data().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let img = GrayImage::from_fn(filters.cols() as u32, filters.rows() as u32, |x, y| {
        let v = filters.get(y as usize, x as usize) / scale;
        Luma([(127.5 + 127.5 * v).round().clamp(0.0, 255.0) as u8])
    });
    img.save(path).map_err(|e| save_err(path, e))
}

/// Piecewise-linear dark-blue to yellow color ramp for `t` in [0, 1].
fn ramp(t: f64) -> Rgb<u8> {
    const STOPS: [[f64; 3]; 4] = [
        [20.0, 10.0, 70.0],
        [60.0, 80.0, 160.0],
        [60.0, 180.0, 120.0],
        [250.0, 230.0, 40.0],
    ];
    let t = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - i as f64;
    let c = |k: usize| (STOPS[i][k] + f * (STOPS[i + 1][k] - STOPS[i][k])).round() as u8;
    Rgb([c(0), c(1), c(2)])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub clip: String,
    pub bands: usize,
    pub frames: usize,
    pub mse: f64,
    pub color_min: f64,
    pub color_max: f64,
}

pub fn grid_mse(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!((a.rows(), a.cols()), (b.rows(), b.cols()), "grid shapes differ");
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        / a.data().len().max(1) as f64
}

/// Writes `{stem}.png` (target left, prediction right, low bands at the
/// bottom, one shared color scale), `{stem}.csv` and `{stem}.json`.
pub fn write_comparison(
    clip: &str,
    target: &Matrix,
    predicted: &Matrix,
    dir: &Path,
    stem: &str,
) -> Result<Comparison> {
    let mse = grid_mse(target, predicted);
    let all = target.data().iter().chain(predicted.data());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let span = (hi - lo).max(1e-12);
    let (rows, cols) = (target.rows(), target.cols());
    const CELL: u32 = 4;
    const GAP: u32 = 8;
    let width = 2 * cols as u32 * CELL + GAP;
    let height = rows as u32 * CELL;
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    for (panel, m) in [target, predicted].into_iter().enumerate() {
        let x0 = panel as u32 * (cols as u32 * CELL + GAP);
        for r in 0..rows {
            for c in 0..cols {
                let px = ramp((m.get(r, c) - lo) / span);
                let y = (rows - 1 - r) as u32 * CELL;
                for dy in 0..CELL {
                    for dx in 0..CELL {
                        img.put_pixel(x0 + c as u32 * CELL + dx, y + dy, px);
                    }
                }
            }
        }
    }
    let png = dir.join(format!("{stem}.png"));
    img.save(&png).map_err(|e| save_err(&png, e))?;

    let mut csv = String::from("grid,band");
    for c in 0..cols {
        let _ = write!(csv, ",f{c}");
    }
    csv.push('\n');
    for (name, m) in [("target", target), ("predicted", predicted)] {
        for r in 0..rows {
            let _ = write!(csv, "{name},{r}");
            for v in m.row(r) {
                let _ = write!(csv, ",{v}");
            }
            csv.push('\n');
        }
    }
    let csv_path = dir.join(format!("{stem}.csv"));
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;

    let summary = Comparison {
        clip: clip.to_string(),
        bands: rows,
        frames: cols,
        mse,
        color_min: lo,
        color_max: hi,
    };
    let json_path = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(&summary).expect("serialize");
    std::fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))?;
    Ok(summary)
}
