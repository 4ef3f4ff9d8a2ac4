//! Band-limited rational resampling with a Kaiser-windowed sinc kernel.
//!
//! For a reduced ratio `up / down`, output sample `n` sits at input time
//! `n * down / up`. Its integer part selects the input neighbourhood and the
//! remainder selects one of `up` precomputed polyphase rows. Every row is
//! normalized to unit sum so constant signals pass through unchanged.

/// Kaiser shape parameter.
pub const KAISER_BETA: f64 = 12.0;
/// Kernel half-width, in zero crossings of the (lower-rate) sinc.
pub const HALF_WIDTH_ZEROS: usize = 32;
/// Cutoff as a fraction of the lower Nyquist rate.
pub const ROLLOFF: f64 = 0.9;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

#[derive(Debug, Clone)]
pub struct Resampler {
    up: usize,
    down: usize,
    /// Kernel taps to the left of the output time (inclusive of the centre tap).
    left: usize,
    taps: usize,
    /// `up` rows of `taps` coefficients each.
    table: Vec<f64>,
}

impl Resampler {
    pub fn new(from_rate: u32, to_rate: u32) -> Self {
        assert!(from_rate > 0 && to_rate > 0, "sample rates must be positive");
        let g = gcd(from_rate as u64, to_rate as u64);
        let up = (to_rate as u64 / g) as usize;
        let down = (from_rate as u64 / g) as usize;
        // cutoff in cycles per input sample
        let cutoff = 0.5 * ROLLOFF * (up as f64 / down as f64).min(1.0);
        let half_width = HALF_WIDTH_ZEROS as f64 / (2.0 * cutoff);
        let left = half_width.floor() as usize + 1;
        let taps = 2 * left + 1;
        let i0_beta = bessel_i0(KAISER_BETA);
        let mut table = vec![0.0; up * taps];
        for phase in 0..up {
            let frac = phase as f64 / up as f64;
            let row = &mut table[phase * taps..(phase + 1) * taps];
            for (j, c) in row.iter_mut().enumerate() {
                // tap j reads input index base + j - left, at offset t from the output time
                let t = j as f64 - left as f64 - frac;
                let r = t / half_width;
                if r.abs() < 1.0 {
                    let w = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / i0_beta;
                    *c = 2.0 * cutoff * sinc(2.0 * cutoff * t) * w;
                }
            }
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|c| *c /= s);
        }
        Self {
            up,
            down,
            left,
            taps,
            table,
        }
    }

    /// Reduced `(up, down)` ratio.
    pub fn ratio(&self) -> (usize, usize) {
        (self.up, self.down)
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        ((input_len as f64) * self.up as f64 / self.down as f64).round() as usize
    }

    /// Resamples `input`, treating samples outside the signal as zero.
    pub fn process(&self, input: &[f64]) -> Vec<f64> {
        if self.up == self.down {
            return input.to_vec();
        }
        let n_out = self.output_len(input.len());
        let len = input.len() as isize;
        (0..n_out)
            .map(|n| {
                let pos = n * self.down;
                let base = (pos / self.up) as isize;
                let phase = pos % self.up;
                let row = &self.table[phase * self.taps..(phase + 1) * self.taps];
                let first = base - self.left as isize;
                let lo = (-first).max(0) as usize;
                let hi = ((len - first).max(0) as usize).min(self.taps);
                (lo..hi)
                    .map(|j| row[j] * input[(first + j as isize) as usize])
                    .sum()
            })
            .collect()
    }
}

/// Resamples `input` from `from_rate` to `to_rate`.
pub fn resample_signal(input: &[f64], from_rate: u32, to_rate: u32) -> Vec<f64> {
    Resampler::new(from_rate, to_rate).process(input)
}
