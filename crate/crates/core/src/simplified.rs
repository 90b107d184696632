//! Forwarding over non-reconciled channel keys.
//!
//! The access point polar-encodes each quantum chunk together with a 64-bit
//! tag and pads the codeword with its raw quantized channel bits. The user
//! removes its own raw bits, which leaves the codeword seen through a binary
//! symmetric channel whose crossover is the channel-key disagreement, and
//! decodes. A failed tag check triggers a retransmission under fresh pads.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::polar::{bsc_llr, PolarCode};
use crate::toeplitz::digest64;

/// Verification tag appended to every chunk.
pub const TAG_BITS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EccConfig {
    pub code_len_n: usize,
    pub info_len_k: usize,
    pub design_epsilon: f64,
}

impl Default for EccConfig {
    fn default() -> Self {
        Self {
            code_len_n: 4096,
            info_len_k: 1088,
            design_epsilon: 0.1,
        }
    }
}

impl EccConfig {
    pub fn validate(&self) -> Result<()> {
        if self.info_len_k >= self.code_len_n {
            return Err(Error::invalid(format!(
                "info_len_k = {} must be below code_len_n = {}",
                self.info_len_k, self.code_len_n
            )));
        }
        if self.info_len_k <= TAG_BITS {
            return Err(Error::invalid(format!("info_len_k = {} leaves no room past the tag", self.info_len_k)));
        }
        if !(self.design_epsilon > 0.0 && self.design_epsilon < 0.5) {
            return Err(Error::invalid(format!("design_epsilon = {} outside (0, 0.5)", self.design_epsilon)));
        }
        Ok(())
    }

    pub fn rate(&self) -> f64 {
        self.info_len_k as f64 / self.code_len_n as f64
    }

    /// Quantum bits carried per codeword.
    pub fn payload_len(&self) -> usize {
        self.info_len_k - TAG_BITS
    }

    /// Codewords needed to carry one group of `l_g` bits.
    pub fn codewords_per_group(&self, l_g: usize) -> usize {
        l_g.div_ceil(self.payload_len())
    }
}

/// A constructed code, reused across codewords.
#[derive(Debug, Clone)]
pub struct EccCode {
    cfg: EccConfig,
    polar: PolarCode,
}

impl EccCode {
    pub fn new(cfg: EccConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            polar: PolarCode::construct(cfg.code_len_n, cfg.info_len_k, cfg.design_epsilon)?,
            cfg,
        })
    }

    pub fn config(&self) -> &EccConfig {
        &self.cfg
    }

    pub fn n(&self) -> usize {
        self.cfg.code_len_n
    }

    pub fn encode(&self, info: &BitString) -> Result<BitString> {
        self.polar.encode_systematic(info)
    }

    /// Chunk, tag and zero fill laid out as `k` information bits.
    fn pack(&self, chunk: &BitString, tag_seed: u64) -> Result<BitString> {
        if chunk.len() > self.cfg.payload_len() {
            return Err(Error::invalid(format!(
                "chunk of {} bits exceeds payload {}",
                chunk.len(),
                self.cfg.payload_len()
            )));
        }
        let mut info = chunk.clone();
        let tag = digest64(chunk, tag_seed);
        for b in 0..TAG_BITS {
            info.push(tag >> b & 1 == 1);
        }
        info.extend_from(&BitString::zeros(self.cfg.info_len_k - info.len()));
        Ok(info)
    }

    fn unpack(&self, info: &BitString, chunk_len: usize, tag_seed: u64) -> (BitString, bool) {
        let chunk = info.slice(0..chunk_len);
        let tag: u64 = (0..TAG_BITS).fold(0, |acc, b| acc | (info.get(chunk_len + b) as u64) << b);
        let fill_clean = info.slice(chunk_len + TAG_BITS..info.len()).count_ones() == 0;
        let ok = fill_clean && tag == digest64(&chunk, tag_seed);
        (chunk, ok)
    }
}

pub fn ecc_encode(info: &BitString, cfg: &EccConfig) -> Result<BitString> {
    EccCode::new(*cfg)?.encode(info)
}

/// Public tag seed of chunk `chunk` of group `group_no`.
pub fn tag_seed(group_no: u32, chunk: usize) -> u64 {
    (u64::from(group_no) << 16) ^ chunk as u64 ^ 0x7a6_0000_0000_0000
}

/// Access-point side: encodes `chunk` and pads it with the first `n` raw
/// channel bits, which are consumed.
pub fn forward_simplified(
    chunk: &BitString,
    raw_channel_qap: &mut BitString,
    code: &EccCode,
    tag_seed: u64,
) -> Result<BitString> {
    let n = code.n();
    if raw_channel_qap.len() < n {
        return Err(Error::InsufficientMaterial {
            needed: n,
            got: raw_channel_qap.len(),
        });
    }
    let pad = raw_channel_qap.drain_front(n);
    Ok(code.encode(&code.pack(chunk, tag_seed)?)?.xor(&pad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeDecode {
    pub chunk: BitString,
    pub ok: bool,
    /// Disagreement weight between the decoded codeword and the observation;
    /// meaningful only when `ok`.
    pub observed_weight: usize,
}

/// User side: strips its own pad and decodes the equivalent BSC.
pub fn decode_cascade(
    received: &BitString,
    raw_channel_user: &BitString,
    epsilon_hat: f64,
    code: &EccCode,
    chunk_len: usize,
    tag_seed: u64,
) -> Result<CascadeDecode> {
    let n = code.n();
    if received.len() != n || raw_channel_user.len() != n {
        return Err(Error::invalid(format!(
            "cascade decode needs {n} bits, got {} and {}",
            received.len(),
            raw_channel_user.len()
        )));
    }
    if chunk_len > code.cfg.payload_len() {
        return Err(Error::invalid("chunk longer than the code payload"));
    }
    let y = received.xor(raw_channel_user);
    let x = code.polar.decode(&bsc_llr(&y, epsilon_hat))?;
    let (chunk, ok) = code.unpack(&code.polar.extract_info(&x), chunk_len, tag_seed);
    Ok(CascadeDecode {
        chunk,
        ok,
        observed_weight: x.hamming_distance(&y),
    })
}

/// Sliding-window estimate of the cascade crossover, fed by the disagreement
/// observed after each successful decode.
#[derive(Debug, Clone)]
pub struct EpsilonEstimator {
    window: usize,
    initial: f64,
    samples: VecDeque<f64>,
}

impl EpsilonEstimator {
    pub fn new(initial: f64, window: usize) -> Self {
        Self {
            window: window.max(1),
            initial,
            samples: VecDeque::new(),
        }
    }

    pub fn estimate(&self) -> f64 {
        if self.samples.is_empty() {
            return self.initial;
        }
        let mean = self.samples.iter().sum::<f64>() / self.samples.len() as f64;
        mean.clamp(1e-3, 0.49)
    }

    pub fn observe(&mut self, epsilon: f64) {
        if self.samples.len() == self.window {
            self.samples.pop_front();
        }
        self.samples.push_back(epsilon);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimplifiedStats {
    pub attempts: usize,
    pub failures: usize,
    pub rr: f64,
    /// Disagreement measured between the pads actually consumed.
    pub residual_epsilon: f64,
    /// Outcome of every attempt, in order.
    pub log: Vec<bool>,
    /// Pad bits consumed on each side.
    pub pad_bits: usize,
    pub pad_disagreements: usize,
}

impl SimplifiedStats {
    pub fn record(&mut self, ok: bool, n: usize, disagreements: usize) {
        self.attempts += 1;
        self.failures += usize::from(!ok);
        self.log.push(ok);
        self.pad_bits += n;
        self.pad_disagreements += disagreements;
        self.refresh();
    }

    pub fn merge(&mut self, other: &SimplifiedStats) {
        self.attempts += other.attempts;
        self.failures += other.failures;
        self.log.extend_from_slice(&other.log);
        self.pad_bits += other.pad_bits;
        self.pad_disagreements += other.pad_disagreements;
        self.refresh();
    }

    fn refresh(&mut self) {
        self.rr = if self.attempts == 0 {
            0.0
        } else {
            self.failures as f64 / self.attempts as f64
        };
        self.residual_epsilon = if self.pad_bits == 0 {
            0.0
        } else {
            self.pad_disagreements as f64 / self.pad_bits as f64
        };
    }
}

/// Fresh pad material for one attempt, aligned across the three parties.
#[derive(Debug, Clone, PartialEq)]
pub struct Pads {
    pub qap: BitString,
    pub user: BitString,
    pub eve: BitString,
}

/// What happened to one group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupDelivery {
    /// The group as recovered by the user, if every chunk got through.
    pub recovered: Option<BitString>,
    /// Whether Eve, decoding every transmission with her own pads, recovered
    /// the whole group.
    pub eve_cracked: bool,
    /// Encrypted codewords actually sent, in order.
    pub transmissions: Vec<BitString>,
    pub stats: SimplifiedStats,
}

/// Sends `group` chunk by chunk, retransmitting each chunk under fresh pads
/// until it decodes or `max_attempts` is reached. `next_pads(n)` must return
/// unused pad material of `n` bits for all three parties.
pub fn retransmit_loop(
    group: &BitString,
    group_no: u32,
    code: &EccCode,
    estimator: &mut EpsilonEstimator,
    max_attempts: usize,
    next_pads: &mut dyn FnMut(usize) -> Result<Pads>,
) -> Result<GroupDelivery> {
    if max_attempts == 0 {
        return Err(Error::invalid("max_attempts must be ≥ 1"));
    }
    let n = code.n();
    let payload = code.cfg.payload_len();
    let mut stats = SimplifiedStats::default();
    let mut recovered = BitString::with_capacity(group.len());
    let mut eve_all = true;
    let mut delivered = true;
    let mut transmissions = Vec::new();
    for (c, start) in (0..group.len()).step_by(payload).enumerate() {
        let chunk = group.slice(start..(start + payload).min(group.len()));
        let seed = tag_seed(group_no, c);
        let mut got = None;
        let mut eve_got = false;
        for _ in 0..max_attempts {
            let mut pads = next_pads(n)?;
            if pads.qap.len() != n || pads.user.len() != n || pads.eve.len() != n {
                return Err(Error::invalid("pad source returned the wrong length"));
            }
            let disagreements = pads.qap.hamming_distance(&pads.user);
            let sent = forward_simplified(&chunk, &mut pads.qap, code, seed)?;
            let eps = estimator.estimate();
            let user = decode_cascade(&sent, &pads.user, eps, code, chunk.len(), seed)?;
            let eve = decode_cascade(&sent, &pads.eve, eps, code, chunk.len(), seed)?;
            eve_got |= eve.ok && eve.chunk == chunk;
            transmissions.push(sent);
            stats.record(user.ok, n, disagreements);
            if user.ok {
                estimator.observe(user.observed_weight as f64 / n as f64);
                got = Some(user.chunk);
                break;
            }
        }
        eve_all &= eve_got;
        match got {
            Some(bits) => recovered.extend_from(&bits),
            None => delivered = false,
        }
    }
    Ok(GroupDelivery {
        recovered: delivered.then_some(recovered),
        eve_cracked: eve_all && !group.is_empty(),
        transmissions,
        stats,
    })
}
