//! Channel-reciprocity key generation: probing, quantization, reconciliation,
//! privacy amplification and verification.
//!
//! The distillation primitives here (reconciliation, amplification,
//! verification) are shared with the quantum link.

pub mod quantize;
pub mod reconcile;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::channel::ChannelState;
use crate::error::{Error, Result};
use crate::toeplitz::{digest64, toeplitz_hash};

pub use quantize::{
    eavesdropper_bits, intersect, normalize_ranks, quantize, Intersection, QuantizeResult, QuantizerConfig,
};
pub use reconcile::{reconcile, ReconcileCode, ReconcileConfig, ReconcileResult, SyndromeMessage};

/// Bits withheld at privacy amplification on top of the disclosed ones.
pub const SECURITY_MARGIN: usize = 64;

const VERIFY_SEED: u64 = 0x005e_ed0f_7e51_f1ed;

/// Hashes `bits` down to `out_len` bits with a seeded Toeplitz matrix.
/// `out_len` may not exceed `bits.len() - leaked_bits - margin`.
pub fn privacy_amplify(
    bits: &BitString,
    leaked_bits: usize,
    out_len: usize,
    seed: u64,
    margin: usize,
) -> Result<BitString> {
    let available = bits.len().saturating_sub(leaked_bits).saturating_sub(margin);
    if out_len > available {
        return Err(Error::InsufficientEntropy {
            requested: out_len,
            available,
        });
    }
    Ok(toeplitz_hash(bits, out_len, seed))
}

/// True iff the 64-bit universal-hash digests of `a` and `b` agree.
pub fn verify_keys(a: &BitString, b: &BitString) -> bool {
    verify_keys_seeded(a, b, VERIFY_SEED)
}

pub fn verify_keys_seeded(a: &BitString, b: &BitString, seed: u64) -> bool {
    a.len() == b.len() && digest64(a, seed) == digest64(b, seed)
}

/// Key disagreement rate: Hamming distance over length.
pub fn kdr(a: &BitString, b: &BitString) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("kdr of lengths {} and {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::invalid("kdr of empty sequences"));
    }
    Ok(a.hamming_distance(b) as f64 / a.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrkgMode {
    /// Reconcile, amplify and verify: both sides end with the same key.
    Reconciled,
    /// Stop after quantization; the two sequences still disagree.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrkgConfig {
    pub quantizer: QuantizerConfig,
    pub reconcile: ReconcileConfig,
    pub security_margin: usize,
}

impl Default for CrkgConfig {
    fn default() -> Self {
        Self {
            quantizer: QuantizerConfig::default(),
            reconcile: ReconcileConfig::default(),
            security_margin: SECURITY_MARGIN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrkgStats {
    pub n_probes: usize,
    /// Probing time at the channel's probe rate.
    pub duration_s: f64,
    pub quantized_len: usize,
    /// Disagreement between the two quantized sequences.
    pub epsilon_q: f64,
    pub disagreements: usize,
    /// Disagreement between the access point's sequence and Eve's estimate.
    pub eve_kdr: f64,
    pub eve_disagreements: usize,
    pub leaked_bits: usize,
    /// Reconciliation blocks, and how many failed verification and were
    /// discarded by both sides.
    pub blocks: usize,
    pub blocks_failed: usize,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrkgOutput {
    /// Access-point side (reconciliation reference).
    pub key_qap: BitString,
    pub key_user: BitString,
    /// Eve's best estimate of `key_qap`, aligned bit for bit.
    pub key_eve: BitString,
    pub stats: CrkgStats,
}

/// Runs one key-generation session of `n_probes` probes. `public` supplies
/// the publicly announced randomness (hash seeds).
pub fn run_crkg<R: Rng + ?Sized>(
    channel: &mut ChannelState,
    n_probes: usize,
    cfg: &CrkgConfig,
    mode: CrkgMode,
    public: &mut R,
) -> Result<CrkgOutput> {
    cfg.quantizer.validate()?;
    let block = cfg.quantizer.block_len;
    if n_probes < block {
        return Err(Error::InsufficientMaterial {
            needed: block,
            got: n_probes,
        });
    }
    let probes = channel.probes(n_probes);
    let at_qap: Vec<f64> = probes.iter().map(|p| p.gain_backward).collect();
    let at_user: Vec<f64> = probes.iter().map(|p| p.gain_forward).collect();
    let at_eve: Vec<f64> = probes.iter().map(|p| p.gain_eve).collect();

    let q_qap = quantize(&normalize_ranks(&at_qap, block), &cfg.quantizer)?;
    let q_user = quantize(&normalize_ranks(&at_user, block), &cfg.quantizer)?;
    let common = intersect(&q_qap, &q_user)?;
    let eve = eavesdropper_bits(&at_eve, &common.mask, block);
    if common.a.is_empty() {
        return Err(Error::InsufficientMaterial { needed: 1, got: 0 });
    }

    let mut stats = CrkgStats {
        n_probes,
        duration_s: n_probes as f64 / channel.params().probe_rate_hz,
        quantized_len: common.a.len(),
        epsilon_q: kdr(&common.a, &common.b)?,
        disagreements: common.a.hamming_distance(&common.b),
        eve_kdr: kdr(&common.a, &eve)?,
        eve_disagreements: common.a.hamming_distance(&eve),
        leaked_bits: 0,
        blocks: 0,
        blocks_failed: 0,
        success: true,
    };

    if mode == CrkgMode::Raw {
        return Ok(CrkgOutput {
            key_qap: common.a,
            key_user: common.b,
            key_eve: eve,
            stats,
        });
    }

    let msg = SyndromeMessage::from_reference(&common.a, &cfg.reconcile, public.random())?;
    let rec = reconcile(&common.b, &msg, &cfg.reconcile)?;
    stats.leaked_bits = rec.leaked_bits;
    stats.blocks = rec.block_ok.len();
    stats.blocks_failed = rec.block_ok.iter().filter(|ok| !**ok).count();
    let block = cfg.reconcile.block_len;
    let kept_qap = rec.retain_verified(&common.a, block);
    let kept_user = rec.retain_verified(&rec.corrected, block);
    let kept_eve = rec.retain_verified(&eve, block);
    let hidden = rec.leaked_bits + msg.extra_digest_bits();
    let out_len = kept_qap.len().saturating_sub(hidden).saturating_sub(cfg.security_margin);
    let pa_seed: u64 = public.random();
    let empty = |mut stats: CrkgStats| {
        stats.success = false;
        CrkgOutput {
            key_qap: BitString::new(),
            key_user: BitString::new(),
            key_eve: BitString::new(),
            stats,
        }
    };
    if out_len == 0 {
        return Ok(empty(stats));
    }
    let amplify = |bits: &BitString| privacy_amplify(bits, hidden, out_len, pa_seed, cfg.security_margin);
    let key_qap = amplify(&kept_qap)?;
    let key_user = amplify(&kept_user)?;
    let key_eve = amplify(&kept_eve)?;
    if !verify_keys(&key_qap, &key_user) {
        return Ok(empty(stats));
    }
    Ok(CrkgOutput {
        key_qap,
        key_user,
        key_eve,
        stats,
    })
}
