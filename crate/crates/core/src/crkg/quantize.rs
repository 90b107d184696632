//! Guard-band quantization of channel measurements.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bits::BitString;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizerConfig {
    /// Half-width of the guard band in units of the window standard deviation.
    pub guard_alpha: f64,
    /// Samples per statistics window.
    pub block_len: usize,
}

impl Default for QuantizerConfig {
    fn default() -> Self {
        Self {
            guard_alpha: 0.3,
            block_len: 4096,
        }
    }
}

impl QuantizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.guard_alpha >= 0.0 && self.guard_alpha.is_finite()) {
            return Err(Error::invalid(format!("guard_alpha = {} must be ≥ 0", self.guard_alpha)));
        }
        if self.block_len < 2 {
            return Err(Error::invalid(format!("block_len = {} must be ≥ 2", self.block_len)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizeResult {
    pub bits: BitString,
    pub kept_mask: Vec<bool>,
}

impl QuantizeResult {
    /// Per-sample decisions, `None` where the sample was dropped.
    pub fn decisions(&self) -> Vec<Option<bool>> {
        let mut next = 0;
        self.kept_mask
            .iter()
            .map(|&k| {
                k.then(|| {
                    next += 1;
                    self.bits.get(next - 1)
                })
            })
            .collect()
    }
}

/// Windowed mean/σ guard-band quantizer. Trailing samples that do not fill a
/// whole window are dropped.
pub fn quantize(samples: &[f64], cfg: &QuantizerConfig) -> Result<QuantizeResult> {
    cfg.validate()?;
    if samples.len() < cfg.block_len {
        return Err(Error::InsufficientMaterial {
            needed: cfg.block_len,
            got: samples.len(),
        });
    }
    let mut bits = BitString::with_capacity(samples.len());
    let mut kept_mask = vec![false; samples.len()];
    for (w, window) in samples.chunks_exact(cfg.block_len).enumerate() {
        let n = window.len() as f64;
        let mean = window.iter().sum::<f64>() / n;
        let var = window.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        if sd == 0.0 {
            continue;
        }
        let (lo, hi) = (mean - cfg.guard_alpha * sd, mean + cfg.guard_alpha * sd);
        for (i, &x) in window.iter().enumerate() {
            let bit = if x > hi {
                true
            } else if x < lo {
                false
            } else {
                continue;
            };
            bits.push(bit);
            kept_mask[w * cfg.block_len + i] = true;
        }
    }
    Ok(QuantizeResult { bits, kept_mask })
}

/// Windowed rank normalization: every sample is replaced by the standard
/// normal quantile of its (tie-averaged) rank within its window. The output
/// is symmetric around zero whatever the marginal law of the input, which
/// keeps the quantizer unbiased on skewed data.
pub fn normalize_ranks(samples: &[f64], block_len: usize) -> Vec<f64> {
    let normal = Normal::standard();
    let mut out = vec![0.0; samples.len()];
    for (w, window) in samples.chunks(block_len.max(1)).enumerate() {
        let base = w * block_len;
        let m = window.len();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| window[a].total_cmp(&window[b]));
        let mut i = 0;
        while i < m {
            let mut j = i + 1;
            while j < m && window[order[j]] == window[order[i]] {
                j += 1;
            }
            // ranks i..j share the average rank
            let rank = (i + j - 1) as f64 / 2.0;
            let score = normal.inverse_cdf((rank + 0.5) / m as f64);
            for &idx in &order[i..j] {
                out[base + idx] = score;
            }
            i = j;
        }
    }
    out
}

/// Both parties' bits restricted to positions that both kept.
#[derive(Debug, Clone, PartialEq)]
pub struct Intersection {
    pub a: BitString,
    pub b: BitString,
    pub mask: Vec<bool>,
}

pub fn intersect(a: &QuantizeResult, b: &QuantizeResult) -> Result<Intersection> {
    if a.kept_mask.len() != b.kept_mask.len() {
        return Err(Error::invalid("kept masks differ in length"));
    }
    let (da, db) = (a.decisions(), b.decisions());
    let mut out = Intersection {
        a: BitString::new(),
        b: BitString::new(),
        mask: vec![false; da.len()],
    };
    for (i, (x, y)) in da.into_iter().zip(db).enumerate() {
        if let (Some(x), Some(y)) = (x, y) {
            out.a.push(x);
            out.b.push(y);
            out.mask[i] = true;
        }
    }
    Ok(out)
}

/// An eavesdropper's best guess at the legitimate bits: she follows the
/// public mask and thresholds her own normalized samples at the window mean.
pub fn eavesdropper_bits(eve_samples: &[f64], mask: &[bool], block_len: usize) -> BitString {
    let scores = normalize_ranks(eve_samples, block_len);
    let mut out = BitString::new();
    for (w, window) in scores.chunks(block_len.max(1)).enumerate() {
        let mean = window.iter().sum::<f64>() / window.len() as f64;
        for (i, &x) in window.iter().enumerate() {
            if mask.get(w * block_len + i).copied().unwrap_or(false) {
                out.push(x > mean);
            }
        }
    }
    out
}
