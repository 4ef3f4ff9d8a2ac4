//! Per clip-variant feature cache.
//!
//! ```text
//! magic    8 bytes "MELSFEAT"
//! version  u32
//! dtype    u8 (0 = float32 little-endian)
//! clip_id  u32 len + UTF-8
//! variant  u32 len + UTF-8
//! fold     u8
//! class    u16
//! rate     u32
//! arrays   u32 count, then per array:
//!          u32 len + name, u32 ndim, ndim x u32 dims, row-major payload
//! ```
//!
//! Arrays: `waveform` `[samples]`, `mst_starts` / `clf_starts` `[n]`
//! (start frames stored as float32), `mst_log_mel` `[n, n_mels, frames-1]`,
//! `clf_log_mel` `[n, n_mels, frames]`. Log-mel values are stored before
//! trainset normalization because the statistics depend on the fold.

use std::path::Path;

use super::{normalize_peak, segment_clip, FeatureParams, MelExtractor, Segment, SegmentKind};
use crate::audio::AudioClip;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"MELSFEAT";
pub const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct CachedClip {
    pub clip: AudioClip,
    pub variant: String,
    pub mst: Vec<Segment>,
    pub clf: Vec<Segment>,
}

impl CachedClip {
    /// Segments a working-rate clip for both consumers. The waveform is first
    /// rounded to `f32` so that segments rebuilt from the cache are identical.
    pub fn build(clip: &AudioClip, variant: &str, extractor: &MelExtractor) -> Result<Self> {
        let samples = clip.samples.iter().map(|&v| v as f32 as f64).collect();
        let clip = clip.with_samples(samples, clip.sample_rate);
        Ok(Self {
            mst: segment_clip(&clip, variant, extractor, SegmentKind::Mst)?,
            clf: segment_clip(&clip, variant, extractor, SegmentKind::Classification)?,
            variant: variant.to_string(),
            clip,
        })
    }

    pub fn segments(&self, kind: SegmentKind) -> &[Segment] {
        match kind {
            SegmentKind::Mst => &self.mst,
            SegmentKind::Classification => &self.clf,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(DTYPE_F32);
        put_str(&mut out, &self.clip.clip_id);
        put_str(&mut out, &self.variant);
        out.push(self.clip.fold);
        out.extend_from_slice(&self.clip.class_label.to_le_bytes());
        out.extend_from_slice(&self.clip.sample_rate.to_le_bytes());
        out.extend_from_slice(&5u32.to_le_bytes());
        let wave: Vec<f32> = self.clip.samples.iter().map(|&v| v as f32).collect();
        put_array(&mut out, "waveform", &[wave.len()], &wave);
        for (name, segs) in [("mst", &self.mst), ("clf", &self.clf)] {
            let starts: Vec<f32> = segs.iter().map(|s| s.start_frame as f32).collect();
            put_array(&mut out, &format!("{name}_starts"), &[starts.len()], &starts);
            let (n_mels, frames) = segs.first().map(|s| (s.n_mels, s.frames)).unwrap_or((0, 0));
            let mel: Vec<f32> = segs.iter().flat_map(|s| s.log_mel.iter().copied()).collect();
            put_array(
                &mut out,
                &format!("{name}_log_mel"),
                &[segs.len(), n_mels, frames],
                &mel,
            );
        }
        out
    }

    /// Rebuilds the clip and its segments; raw slices are re-cut from the
    /// cached waveform.
    pub fn from_bytes(bytes: &[u8], params: &FeatureParams) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Cache("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Cache(format!("unsupported version {version}")));
        }
        if r.u8()? != DTYPE_F32 {
            return Err(Error::Cache("unsupported dtype".into()));
        }
        let clip_id = r.string()?;
        let variant = r.string()?;
        let fold = r.u8()?;
        let class = r.u16()?;
        let rate = r.u32()?;
        let mut arrays = std::collections::BTreeMap::new();
        for _ in 0..r.u32()? {
            let name = r.string()?;
            let ndim = r.u32()? as usize;
            let dims = (0..ndim)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = dims.iter().product();
            let data: Vec<f32> = r
                .take(n * 4)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            arrays.insert(name, (dims, data));
        }
        let get = |name: &str| {
            arrays
                .get(name)
                .ok_or_else(|| Error::Cache(format!("missing array {name}")))
        };
        let (_, wave) = get("waveform")?;
        let clip = AudioClip::new(
            wave.iter().map(|&v| v as f64).collect(),
            rate,
            clip_id,
            class,
            fold,
        )?;
        let mut parts = Vec::new();
        for (name, kind) in [("mst", SegmentKind::Mst), ("clf", SegmentKind::Classification)] {
            let (_, starts) = get(&format!("{name}_starts"))?;
            let (dims, mel) = get(&format!("{name}_log_mel"))?;
            let per = dims[1] * dims[2];
            let raw_len = kind.raw_len(params);
            let mut segs = Vec::with_capacity(starts.len());
            for (i, &s) in starts.iter().enumerate() {
                let start = s as usize;
                let a = start * params.hop;
                let slice = clip
                    .samples
                    .get(a..a + raw_len)
                    .ok_or_else(|| Error::Cache("segment beyond waveform".into()))?;
                let peak = slice.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                segs.push(Segment {
                    raw: normalize_peak(slice).iter().map(|&v| v as f32).collect(),
                    log_mel: mel[i * per..(i + 1) * per].to_vec(),
                    n_mels: dims[1],
                    frames: dims[2],
                    start_frame: start,
                    peak,
                    parent_clip: clip.clip_id.clone(),
                    variant: variant.clone(),
                    fold,
                    class_label: class,
                });
            }
            parts.push(segs);
        }
        let clf = parts.pop().unwrap_or_default();
        let mst = parts.pop().unwrap_or_default();
        Ok(Self {
            clip,
            variant,
            mst,
            clf,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path, params: &FeatureParams) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, params)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_array(out: &mut Vec<u8>, name: &str, dims: &[usize], data: &[f32]) {
    put_str(out, name);
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Cache("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Cache("invalid utf-8".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_round_trip_is_exact() {
        let params = FeatureParams::default();
        let ex = MelExtractor::new(&params).unwrap();
        let x: Vec<f64> = (0..110250)
            .map(|i| 0.4 * (i as f64 * 0.031).sin() * if i > 60000 { 0.0 } else { 1.0 })
            .collect();
        let clip = AudioClip::new(x, 22050, "1-5-A-3", 3, 1).unwrap();
        let c = CachedClip::build(&clip, "orig", &ex).unwrap();
        assert!(!c.mst.is_empty() && !c.clf.is_empty());
        let bytes = c.to_bytes();
        let back = CachedClip::from_bytes(&bytes, &params).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
        assert!(CachedClip::from_bytes(&bytes[..bytes.len() - 1], &params).is_err());
    }
}
