//! Uniform mid-rise quantizer over `[-r, r]` with saturation and optional
//! subtractive dither.
//!
//! With subtractive dither a uniform draw `d` on `[-step/2, step/2]` is added
//! before quantization and subtracted afterwards. The transmitted symbol is
//! the codebook value `Q(w + d)`; the receiver (which shares the dither
//! stream) uses `Q(w + d) - d`, so the effective error is uniform and
//! independent of the input.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vector};

pub const MAX_BITS: u32 = 52;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dither {
    Off,
    #[default]
    Subtractive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizerConfig {
    pub bits: u32,
    pub range: f64,
    #[serde(default)]
    pub dither: Dither,
}

impl QuantizerConfig {
    pub fn new(bits: u32, range: f64, dither: Dither) -> Result<Self> {
        let cfg = QuantizerConfig { bits, range, dither };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_BITS).contains(&self.bits) {
            return Err(Error::arg(
                "bits",
                format!("must lie in 1..={MAX_BITS}, got {}", self.bits),
            ));
        }
        if !(self.range > 0.0 && self.range.is_finite()) {
            return Err(Error::arg("range", format!("must be positive, got {}", self.range)));
        }
        Ok(())
    }

    pub fn levels(&self) -> u64 {
        1u64 << self.bits
    }

    /// Quantization step `2 r / 2^b`.
    pub fn step(&self) -> f64 {
        2.0 * self.range / self.levels() as f64
    }

    /// Codebook value for index `idx` in `0..levels()`.
    pub fn code(&self, idx: u64) -> f64 {
        -self.range + (idx as f64 + 0.5) * self.step()
    }

    /// `step^2 / 12 = r^2 / (3 * 4^b)`.
    pub fn noise_variance(&self) -> f64 {
        let step = self.step();
        step * step / 12.0
    }

    fn quantize_scalar(&self, v: f64) -> (f64, bool) {
        let overflow = !(-self.range..=self.range).contains(&v);
        let top = self.levels() - 1;
        let raw = ((v + self.range) / self.step()).floor();
        let idx = if raw <= 0.0 {
            0
        } else if raw >= top as f64 {
            top
        } else {
            raw as u64
        };
        (self.code(idx), overflow)
    }
}

pub fn noise_variance(cfg: &QuantizerConfig) -> f64 {
    cfg.noise_variance()
}

/// Outcome of quantizing a state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizationResult {
    /// Value the fusion step uses: the codebook value, minus the dither when
    /// dither is on.
    pub quantized: Vector,
    /// `quantized - input`.
    pub error: Vector,
    /// Dither added before quantization, if any. `quantized + dither` is
    /// always a codebook value.
    pub dither: Option<Vector>,
    pub overflow_count: usize,
}

pub fn quantize<R: Rng + ?Sized>(w: &Vector, cfg: &QuantizerConfig, rng: &mut R) -> QuantizationResult {
    let n = w.len();
    let mut quantized = Vector::zeros(n);
    let mut error = Vector::zeros(n);
    let mut overflow_count = 0;
    let dither = match cfg.dither {
        Dither::Off => None,
        Dither::Subtractive => {
            let half = cfg.step() / 2.0;
            Some(Vector::from_fn(n, |_, _| rng.random_range(-half..half)))
        }
    };
    for i in 0..n {
        let d = dither.as_ref().map_or(0.0, |d| d[i]);
        let (code, overflow) = cfg.quantize_scalar(w[i] + d);
        overflow_count += usize::from(overflow);
        if dither.is_some() {
            // defined so that input + error reproduces the output exactly
            error[i] = (code - d) - w[i];
            quantized[i] = w[i] + error[i];
        } else {
            quantized[i] = code;
            error[i] = code - w[i];
        }
    }
    QuantizationResult {
        quantized,
        error,
        dither,
        overflow_count,
    }
}

/// A base configuration with an optional per-stage range override. Stage
/// `k` is the `k`-th FIR exchange or the `k`-th ARMA branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerSchedule {
    pub base: QuantizerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_ranges: Option<Vec<f64>>,
}

impl QuantizerSchedule {
    pub fn uniform(base: QuantizerConfig) -> Self {
        QuantizerSchedule {
            base,
            stage_ranges: None,
        }
    }

    pub fn with_ranges(base: QuantizerConfig, ranges: Vec<f64>) -> Result<Self> {
        for &r in &ranges {
            QuantizerConfig { range: r, ..base }.validate()?;
        }
        Ok(QuantizerSchedule {
            base,
            stage_ranges: Some(ranges),
        })
    }

    pub fn stage(&self, k: usize) -> QuantizerConfig {
        match &self.stage_ranges {
            Some(r) if !r.is_empty() => QuantizerConfig {
                range: r[k.min(r.len() - 1)],
                ..self.base
            },
            _ => self.base,
        }
    }

    /// Noise variance of each of the first `stages` stages.
    pub fn variances(&self, stages: usize) -> Vec<f64> {
        (0..stages).map(|k| self.stage(k).noise_variance()).collect()
    }
}
