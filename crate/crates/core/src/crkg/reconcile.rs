//! One-way syndrome reconciliation over fixed-size blocks.
//!
//! The reference party splits its sequence into blocks (the last one
//! zero-padded) and discloses one syndrome per block under a linear code,
//! plus 64-bit verification digests: one over the whole sequence, or one per
//! block when blocks may be discarded individually. The other party decodes
//! each block against its own bits and checks the digests. One message per
//! block, no interaction.

use serde::{Deserialize, Serialize};

use crate::bch::BchSyndromeCode;
use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::polar::{PolarCode, KNOWN_LLR};
use crate::toeplitz::digest64;

pub const DEFAULT_BLOCK_LEN: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReconcileCode {
    /// Shortened BCH syndrome with guaranteed correction radius `t` per block.
    Bch { t: usize },
    /// Polar frozen-bit syndrome decoded by successive cancellation. The
    /// disclosure per block is `block_len - info_len` bits.
    Polar { info_len: usize, design_epsilon: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconcileConfig {
    pub code: ReconcileCode,
    #[serde(default = "default_block_len")]
    pub block_len: usize,
    /// Verify (and keep or discard) each block on its own.
    #[serde(default)]
    pub per_block_verification: bool,
}

fn default_block_len() -> usize {
    DEFAULT_BLOCK_LEN
}

impl Default for ReconcileConfig {
    fn default() -> Self {
        Self {
            code: ReconcileCode::Polar {
                info_len: 384,
                design_epsilon: 0.08,
            },
            block_len: DEFAULT_BLOCK_LEN,
            per_block_verification: true,
        }
    }
}

impl ReconcileConfig {
    /// BCH reconciliation sized for an estimated mismatch rate: the radius
    /// covers the expected error count plus four standard deviations, with
    /// 50% headroom. Zero estimated errors disclose nothing.
    pub fn bch_for_error_rate(error_rate: f64, block_len: usize) -> Self {
        let mean = error_rate.clamp(0.0, 1.0) * block_len as f64;
        let t = if mean == 0.0 {
            0
        } else {
            (1.5 * mean + 4.0 * mean.sqrt()).ceil() as usize
        };
        Self {
            code: ReconcileCode::Bch { t },
            block_len,
            per_block_verification: false,
        }
    }

    /// Syndrome bits disclosed per block.
    pub fn syndrome_len(&self) -> usize {
        match self.code {
            ReconcileCode::Bch { t } => t * BchSyndromeCode::BITS_PER_SYNDROME,
            ReconcileCode::Polar { info_len, .. } => self.block_len.saturating_sub(info_len),
        }
    }

    /// Whether the code discloses less than a whole block; otherwise
    /// reconciliation is pointless and is reported as a failure.
    pub fn is_feasible(&self) -> bool {
        self.syndrome_len() < self.block_len
    }

    fn build(&self) -> Result<BlockCode> {
        match self.code {
            ReconcileCode::Bch { t } => Ok(BlockCode::Bch(BchSyndromeCode::new(self.block_len, t)?)),
            ReconcileCode::Polar {
                info_len,
                design_epsilon,
            } => Ok(BlockCode::Polar(
                PolarCode::construct(self.block_len, info_len, design_epsilon)?,
                design_epsilon,
            )),
        }
    }
}

enum BlockCode {
    Bch(BchSyndromeCode),
    Polar(PolarCode, f64),
}

impl BlockCode {
    fn syndrome(&self, block: &BitString) -> Result<BitString> {
        match self {
            BlockCode::Bch(c) => c.syndrome(block),
            BlockCode::Polar(c, _) => c.syndrome(block),
        }
    }

    fn correct(&self, block: &BitString, padded_from: usize, syndrome: &BitString) -> Result<Option<BitString>> {
        match self {
            BlockCode::Bch(c) => c.correct(block, syndrome),
            BlockCode::Polar(c, eps) => {
                let mag = ((1.0 - eps) / eps).ln();
                let llr: Vec<f64> = block
                    .iter()
                    .enumerate()
                    .map(|(i, b)| {
                        let m = if i >= padded_from { KNOWN_LLR } else { mag };
                        if b {
                            -m
                        } else {
                            m
                        }
                    })
                    .collect();
                c.decode_with_frozen(&llr, syndrome).map(Some)
            }
        }
    }
}

/// Verification digest bits published per block.
pub const DIGEST_BITS: usize = 64;

/// Everything the reference party publishes.
#[derive(Debug, Clone, PartialEq)]
pub struct SyndromeMessage {
    pub len: usize,
    pub syndromes: Vec<BitString>,
    pub digests: Vec<u64>,
    pub digest_seed: u64,
}

impl SyndromeMessage {
    /// An infeasible configuration publishes no syndromes.
    pub fn from_reference(reference: &BitString, cfg: &ReconcileConfig, digest_seed: u64) -> Result<Self> {
        let syndromes = if cfg.is_feasible() {
            let code = cfg.build()?;
            blocks(reference, cfg.block_len)
                .map(|(b, _)| code.syndrome(&b))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        let digests = if cfg.per_block_verification {
            blocks(reference, cfg.block_len)
                .map(|(b, valid)| digest64(&b.slice(0..valid), digest_seed))
                .collect()
        } else {
            vec![digest64(reference, digest_seed)]
        };
        Ok(Self {
            len: reference.len(),
            syndromes,
            digests,
            digest_seed,
        })
    }

    pub fn syndrome_bits(&self) -> usize {
        self.syndromes.iter().map(BitString::len).sum()
    }

    pub fn digest_bits(&self) -> usize {
        DIGEST_BITS * self.digests.len()
    }

    /// Digest bits beyond the first, which the security margin covers.
    pub fn extra_digest_bits(&self) -> usize {
        self.digest_bits().saturating_sub(DIGEST_BITS)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconcileResult {
    pub corrected: BitString,
    /// Syndrome bits disclosed.
    pub leaked_bits: usize,
    /// True iff every block verified.
    pub success: bool,
    /// Per-block verification outcome.
    pub block_ok: Vec<bool>,
}

impl ReconcileResult {
    /// Keeps only the bits of verified blocks of `bits` (a sequence aligned
    /// with the reconciled one).
    pub fn retain_verified(&self, bits: &BitString, block_len: usize) -> BitString {
        let mut out = BitString::with_capacity(bits.len());
        for (i, &ok) in self.block_ok.iter().enumerate() {
            if ok {
                let start = i * block_len;
                out.extend_from(&bits.slice(start..(start + block_len).min(bits.len())));
            }
        }
        out
    }
}

/// Corrects `local` toward the reference described by `remote`.
pub fn reconcile(local: &BitString, remote: &SyndromeMessage, cfg: &ReconcileConfig) -> Result<ReconcileResult> {
    if local.len() != remote.len {
        return Err(Error::invalid(format!(
            "local length {} differs from reference length {}",
            local.len(),
            remote.len
        )));
    }
    let leaked_bits = remote.syndrome_bits();
    let expected_blocks = local.len().div_ceil(cfg.block_len);
    let expected_digests = if cfg.per_block_verification { expected_blocks } else { 1 };
    if remote.digests.len() != expected_digests {
        return Err(Error::invalid(format!(
            "{} digests, expected {expected_digests}",
            remote.digests.len()
        )));
    }
    if !cfg.is_feasible() {
        return Ok(ReconcileResult {
            corrected: local.clone(),
            leaked_bits,
            success: false,
            block_ok: vec![false; expected_blocks],
        });
    }
    if remote.syndromes.len() != expected_blocks {
        return Err(Error::invalid(format!(
            "{} syndromes for {expected_blocks} blocks",
            remote.syndromes.len()
        )));
    }
    let code = cfg.build()?;
    let mut corrected = BitString::with_capacity(local.len());
    let mut block_ok = Vec::with_capacity(expected_blocks);
    for (i, ((block, valid), syndrome)) in blocks(local, cfg.block_len).zip(&remote.syndromes).enumerate() {
        let fixed = match code.correct(&block, valid, syndrome)? {
            Some(fixed) => fixed.slice(0..valid),
            None => block.slice(0..valid),
        };
        if cfg.per_block_verification {
            block_ok.push(digest64(&fixed, remote.digest_seed) == remote.digests[i]);
        }
        corrected.extend_from(&fixed);
    }
    if !cfg.per_block_verification {
        let ok = digest64(&corrected, remote.digest_seed) == remote.digests[0];
        block_ok = vec![ok; expected_blocks];
    }
    Ok(ReconcileResult {
        corrected,
        leaked_bits,
        success: block_ok.iter().all(|&ok| ok),
        block_ok,
    })
}

/// Splits into `block_len` chunks, zero-padding the last; yields each block
/// with the count of real (unpadded) bits.
fn blocks(bits: &BitString, block_len: usize) -> impl Iterator<Item = (BitString, usize)> + '_ {
    (0..bits.len().div_ceil(block_len)).map(move |b| {
        let start = b * block_len;
        let end = (start + block_len).min(bits.len());
        let mut block = bits.slice(start..end);
        let valid = block.len();
        block.extend_from(&BitString::zeros(block_len - valid));
        (block, valid)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::index::sample;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn with_errors(reference: &BitString, weight: usize, rng: &mut ChaCha8Rng) -> BitString {
        let mut local = reference.clone();
        for i in sample(rng, reference.len(), weight) {
            local.flip(i);
        }
        local
    }

    #[test]
    fn identical_inputs_leak_one_syndrome() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = ReconcileConfig {
            code: ReconcileCode::Bch { t: 30 },
            block_len: 1024,
            per_block_verification: false,
        };
        let reference = BitString::random(1024, &mut rng);
        let msg = SyndromeMessage::from_reference(&reference, &cfg, 5).unwrap();
        let r = reconcile(&reference, &msg, &cfg).unwrap();
        assert!(r.success);
        assert_eq!(r.corrected, reference);
        assert_eq!(r.leaked_bits, cfg.syndrome_len());
    }

    #[test]
    fn partial_last_block_is_padded() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for cfg in [
            ReconcileConfig::bch_for_error_rate(0.02, 1024),
            ReconcileConfig {
                code: ReconcileCode::Polar {
                    info_len: 700,
                    design_epsilon: 0.02,
                },
                block_len: 1024,
                per_block_verification: false,
            },
        ] {
            let reference = BitString::random(2500, &mut rng);
            let local = with_errors(&reference, 20, &mut rng);
            let msg = SyndromeMessage::from_reference(&reference, &cfg, 6).unwrap();
            assert_eq!(msg.syndromes.len(), 3);
            let r = reconcile(&local, &msg, &cfg).unwrap();
            assert!(r.success, "{cfg:?}");
            assert_eq!(r.corrected, reference);
            assert_eq!(r.leaked_bits, 3 * cfg.syndrome_len());
        }
    }

    #[test]
    fn zero_error_rate_discloses_nothing() {
        let cfg = ReconcileConfig::bch_for_error_rate(0.0, 1024);
        assert_eq!(cfg.syndrome_len(), 0);
        let reference = BitString::ones(1500);
        let msg = SyndromeMessage::from_reference(&reference, &cfg, 1).unwrap();
        let r = reconcile(&reference, &msg, &cfg).unwrap();
        assert!(r.success);
        assert_eq!(r.leaked_bits, 0);
    }

    #[test]
    fn heavy_mismatch_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let reference = BitString::random(1024, &mut rng);
        let local = with_errors(&reference, 410, &mut rng);
        let cfg = ReconcileConfig::bch_for_error_rate(0.4, 1024);
        assert!(!cfg.is_feasible());
        let msg = SyndromeMessage::from_reference(&reference, &cfg, 1).unwrap();
        assert!(!reconcile(&local, &msg, &cfg).unwrap().success);
        let polar = ReconcileConfig::default();
        let msg = SyndromeMessage::from_reference(&reference, &polar, 1).unwrap();
        assert!(!reconcile(&local, &msg, &polar).unwrap().success);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let cfg = ReconcileConfig::default();
        let msg = SyndromeMessage::from_reference(&BitString::zeros(10), &cfg, 1).unwrap();
        assert!(reconcile(&BitString::zeros(11), &msg, &cfg).is_err());
    }

    #[test]
    fn failed_blocks_are_isolated() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = ReconcileConfig {
            code: ReconcileCode::Bch { t: 10 },
            block_len: 1024,
            per_block_verification: true,
        };
        let reference = BitString::random(3072, &mut rng);
        let mut local = reference.clone();
        for i in sample(&mut rng, 1024, 200) {
            local.flip(1024 + i);
        }
        let msg = SyndromeMessage::from_reference(&reference, &cfg, 2).unwrap();
        assert_eq!(msg.digest_bits(), 3 * DIGEST_BITS);
        let r = reconcile(&local, &msg, &cfg).unwrap();
        assert!(!r.success);
        assert_eq!(r.block_ok, vec![true, false, true]);
        let kept = r.retain_verified(&r.corrected, 1024);
        assert_eq!(kept, r.retain_verified(&reference, 1024));
        assert_eq!(kept.len(), 2048);
    }
}
