//! BB84 between the two access points at symbol level.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::crkg::{privacy_amplify, reconcile, verify_keys, ReconcileConfig, SyndromeMessage, SECURITY_MARGIN};
use crate::error::{Error, Result};

/// Shortest sifted sequence on which the detection test is run.
pub const MIN_TEST_LEN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Rectilinear,
    Diagonal,
}

impl Basis {
    fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        if rng.random::<bool>() {
            Basis::Diagonal
        } else {
            Basis::Rectilinear
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QubitRecord {
    pub bit: bool,
    pub basis: Basis,
    pub detected: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QkdConfig {
    pub n_qubits: usize,
    pub detection_prob: f64,
    pub channel_flip_prob: f64,
    pub eve_active: bool,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_qber_threshold")]
    pub qber_abort_threshold: f64,
    #[serde(default = "default_margin")]
    pub security_margin: usize,
}

fn default_test_fraction() -> f64 {
    0.5
}

fn default_qber_threshold() -> f64 {
    0.11
}

fn default_margin() -> usize {
    SECURITY_MARGIN
}

impl Default for QkdConfig {
    fn default() -> Self {
        Self {
            n_qubits: 100_000,
            detection_prob: 1.0,
            channel_flip_prob: 0.0,
            eve_active: false,
            test_fraction: default_test_fraction(),
            qber_abort_threshold: default_qber_threshold(),
            security_margin: SECURITY_MARGIN,
        }
    }
}

impl QkdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 {
            return Err(Error::invalid("n_qubits must be ≥ 1"));
        }
        for (name, p) in [
            ("detection_prob", self.detection_prob),
            ("channel_flip_prob", self.channel_flip_prob),
            ("qber_abort_threshold", self.qber_abort_threshold),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} = {p} outside [0, 1]")));
            }
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "test_fraction = {} outside (0, 1)",
                self.test_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QkdOutcome {
    /// QAP1's final key.
    pub key: BitString,
    /// QAP2's final key; equal to `key` unless aborted.
    pub peer_key: BitString,
    pub qber_estimate: f64,
    pub aborted: bool,
    pub sifted_len: usize,
    /// Test bits plus syndrome bits made public.
    pub leaked_bits: usize,
}

impl QkdOutcome {
    fn abort(qber_estimate: f64, sifted_len: usize, leaked_bits: usize) -> Self {
        Self {
            key: BitString::new(),
            peer_key: BitString::new(),
            qber_estimate,
            aborted: true,
            sifted_len,
            leaked_bits,
        }
    }
}

pub fn prepare_qubits<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<QubitRecord>> {
    if n == 0 {
        return Err(Error::invalid("cannot prepare zero qubits"));
    }
    Ok((0..n)
        .map(|_| QubitRecord {
            bit: rng.random(),
            basis: Basis::random(rng),
            detected: true,
        })
        .collect())
}

/// Receiver side: loss, a random measurement basis per qubit, channel noise.
pub fn transmit_and_measure<R: Rng + ?Sized>(
    sent: &[QubitRecord],
    cfg: &QkdConfig,
    rng: &mut R,
) -> Result<Vec<QubitRecord>> {
    if sent.is_empty() {
        return Err(Error::invalid("nothing to transmit"));
    }
    Ok(sent
        .iter()
        .map(|q| {
            let basis = Basis::random(rng);
            measure(q, basis, cfg, rng)
        })
        .collect())
}

/// As [`transmit_and_measure`] with the receiver's bases fixed by the caller.
pub fn measure_in_bases<R: Rng + ?Sized>(
    sent: &[QubitRecord],
    bases: &[Basis],
    cfg: &QkdConfig,
    rng: &mut R,
) -> Result<Vec<QubitRecord>> {
    if sent.is_empty() {
        return Err(Error::invalid("nothing to transmit"));
    }
    if bases.len() != sent.len() {
        return Err(Error::invalid("one basis per qubit required"));
    }
    Ok(sent.iter().zip(bases).map(|(q, &b)| measure(q, b, cfg, rng)).collect())
}

fn measure<R: Rng + ?Sized>(q: &QubitRecord, basis: Basis, cfg: &QkdConfig, rng: &mut R) -> QubitRecord {
    if !rng.random_bool(cfg.detection_prob) {
        return QubitRecord {
            bit: false,
            basis,
            detected: false,
        };
    }
    let bit = if basis == q.basis {
        q.bit ^ rng.random_bool(cfg.channel_flip_prob)
    } else {
        rng.random()
    };
    QubitRecord {
        bit,
        basis,
        detected: true,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Interception {
    /// States Eve re-prepares and sends on.
    pub resent: Vec<QubitRecord>,
    /// Eve's own measurement results.
    pub eve: Vec<QubitRecord>,
}

/// Intercept-resend: Eve measures every qubit in a random basis and
/// re-prepares what she saw.
pub fn eve_intercept_resend<R: Rng + ?Sized>(in_flight: &[QubitRecord], rng: &mut R) -> Interception {
    let eve: Vec<QubitRecord> = in_flight
        .iter()
        .map(|q| {
            let basis = Basis::random(rng);
            let bit = if basis == q.basis { q.bit } else { rng.random() };
            QubitRecord {
                bit,
                basis,
                detected: q.detected,
            }
        })
        .collect();
    Interception {
        resent: eve.clone(),
        eve,
    }
}

/// Keeps positions that were detected and measured in the sender's basis.
pub fn sift(sender: &[QubitRecord], receiver: &[QubitRecord]) -> Result<(BitString, BitString)> {
    if sender.len() != receiver.len() {
        return Err(Error::invalid(format!(
            "sender has {} records, receiver {}",
            sender.len(),
            receiver.len()
        )));
    }
    let mut a = BitString::new();
    let mut b = BitString::new();
    for (s, r) in sender.iter().zip(receiver) {
        if r.detected && s.basis == r.basis {
            a.push(s.bit);
            b.push(r.bit);
        }
    }
    Ok((a, b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub qber: f64,
    pub aborted: bool,
    pub tested: usize,
    pub remaining_a: BitString,
    pub remaining_b: BitString,
}

/// Publishes and compares a random `test_fraction` of positions.
pub fn detect_eavesdropping<R: Rng + ?Sized>(
    a: &BitString,
    b: &BitString,
    test_fraction: f64,
    threshold: f64,
    rng: &mut R,
) -> Result<DetectionResult> {
    if a.len() != b.len() {
        return Err(Error::invalid("sifted sequences differ in length"));
    }
    if a.len() < MIN_TEST_LEN {
        return Err(Error::InsufficientMaterial {
            needed: MIN_TEST_LEN,
            got: a.len(),
        });
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!("test_fraction = {test_fraction} outside (0, 1)")));
    }
    let n = a.len();
    let tested = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let mut is_test = vec![false; n];
    for i in sample(rng, n, tested) {
        is_test[i] = true;
    }
    let mut errors = 0;
    let mut remaining_a = BitString::with_capacity(n - tested);
    let mut remaining_b = BitString::with_capacity(n - tested);
    for (i, &t) in is_test.iter().enumerate() {
        let (x, y) = (a.get(i), b.get(i));
        if t {
            errors += usize::from(x != y);
        } else {
            remaining_a.push(x);
            remaining_b.push(y);
        }
    }
    let qber = errors as f64 / tested as f64;
    Ok(DetectionResult {
        qber,
        aborted: qber > threshold,
        tested,
        remaining_a,
        remaining_b,
    })
}

/// Reconciles `b` toward `a` with a BCH code sized from `qber`, amplifies and
/// verifies. `leaked_bits` in the outcome counts syndrome bits only.
pub fn distill_qkd_key<R: Rng + ?Sized>(a: &BitString, b: &BitString, qber: f64, rng: &mut R) -> Result<QkdOutcome> {
    distill_with_margin(a, b, qber, SECURITY_MARGIN, rng)
}

pub fn distill_with_margin<R: Rng + ?Sized>(
    a: &BitString,
    b: &BitString,
    qber: f64,
    margin: usize,
    rng: &mut R,
) -> Result<QkdOutcome> {
    if a.len() != b.len() {
        return Err(Error::invalid("sequences differ in length"));
    }
    let qber = qber.clamp(0.0, 1.0);
    let rcfg = ReconcileConfig::bch_for_error_rate(qber, crate::crkg::reconcile::DEFAULT_BLOCK_LEN);
    let msg = SyndromeMessage::from_reference(a, &rcfg, rng.random())?;
    let rec = reconcile(b, &msg, &rcfg)?;
    let leaked = rec.leaked_bits;
    let out_len = a.len().saturating_sub(leaked).saturating_sub(margin);
    let pa_seed: u64 = rng.random();
    if !rec.success || out_len == 0 {
        return Ok(QkdOutcome::abort(qber, a.len(), leaked));
    }
    let key = privacy_amplify(a, leaked, out_len, pa_seed, margin)?;
    let peer_key = privacy_amplify(&rec.corrected, leaked, out_len, pa_seed, margin)?;
    if !verify_keys(&key, &peer_key) {
        return Ok(QkdOutcome::abort(qber, a.len(), leaked));
    }
    Ok(QkdOutcome {
        key,
        peer_key,
        qber_estimate: qber,
        aborted: false,
        sifted_len: a.len(),
        leaked_bits: leaked,
    })
}

/// One full session: prepare, (intercept), measure, sift, test, distill.
pub fn run_qkd<R: Rng + ?Sized>(cfg: &QkdConfig, rng: &mut R) -> Result<QkdOutcome> {
    cfg.validate()?;
    let sent = prepare_qubits(cfg.n_qubits, rng)?;
    let received = if cfg.eve_active {
        let intercepted = eve_intercept_resend(&sent, rng);
        transmit_and_measure(&intercepted.resent, cfg, rng)?
    } else {
        transmit_and_measure(&sent, cfg, rng)?
    };
    let (a, b) = sift(&sent, &received)?;
    let sifted_len = a.len();
    if sifted_len < MIN_TEST_LEN {
        return Ok(QkdOutcome::abort(0.0, sifted_len, 0));
    }
    let det = detect_eavesdropping(&a, &b, cfg.test_fraction, cfg.qber_abort_threshold, rng)?;
    if det.aborted {
        return Ok(QkdOutcome::abort(det.qber, sifted_len, det.tested));
    }
    let mut out = distill_with_margin(&det.remaining_a, &det.remaining_b, det.qber, cfg.security_margin, rng)?;
    out.qber_estimate = det.qber;
    out.sifted_len = sifted_len;
    out.leaked_bits += det.tested;
    Ok(out)
}
