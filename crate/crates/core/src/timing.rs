//! Analytic delay and key-rate model for the three forwarding mechanisms.
//!
//! Every classical message costs `frame_overhead_us + payload / payload_rate`.
//! Per user and group of `L_G` bits:
//!
//! * reconciled CRKG probes `L_G / (1 - f(L_G)·h2(ε))` quantized bits and
//!   sends `reconciliation_rounds` syndrome messages carrying
//!   `f(L_G)·h2(ε)` of those bits in total, where
//!   `f(L) = efficiency_floor + finite_length_coeff / sqrt(L)`;
//! * simplified CRKG probes `L_G / (1 - h2(ε))` bits (the pad of a code at
//!   capacity) and sends nothing;
//! * forwarding sends one frame per group, carrying `L_G` bits (reconciled)
//!   or the `L_G / (1 - h2(ε))`-bit codeword (simplified), the latter
//!   repeated `1 / (1 - RR(ε))` times on average.
//!
//! Each access point serves its users one after another; the two access
//! points work side by side.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forwarding::Demand;
use crate::frame::OVERHEAD_BITS;

pub fn h2(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingConfig {
    pub qkd_rate_bps: f64,
    pub probe_rate_hz: f64,
    /// Quantized bits kept per probe.
    pub bits_per_probe: f64,
    pub frame_overhead_us: f64,
    pub payload_rate_bps: f64,
    pub reconciliation_rounds: usize,
    pub l_g: usize,
    pub efficiency_floor: f64,
    pub finite_length_coeff: f64,
    /// Retransmission rate as a function of ε, as `[ε, rr]` points sorted by
    /// ε; linear in between, flat outside.
    pub rr_curve: Vec<[f64; 2]>,
}

impl TimingConfig {
    /// HT-Mixed frames (40 µs fixed overhead).
    pub fn ht_mixed() -> Self {
        Self {
            qkd_rate_bps: 40.0e6,
            probe_rate_hz: 12.0e6,
            bits_per_probe: 1.0,
            frame_overhead_us: 40.0,
            payload_rate_bps: 65.0e6,
            // syndrome, then key confirmation
            reconciliation_rounds: 2,
            l_g: 1024,
            efficiency_floor: 1.0,
            finite_length_coeff: 3.2,
            rr_curve: vec![[0.0, 0.0], [0.047, 0.021], [0.058, 0.067], [0.081, 0.116]],
        }
    }

    /// Non-HT frames (20 µs fixed overhead).
    pub fn non_ht() -> Self {
        Self {
            frame_overhead_us: 20.0,
            ..Self::ht_mixed()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("qkd_rate_bps", self.qkd_rate_bps),
            ("probe_rate_hz", self.probe_rate_hz),
            ("bits_per_probe", self.bits_per_probe),
            ("payload_rate_bps", self.payload_rate_bps),
            ("efficiency_floor", self.efficiency_floor),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} = {v} must be positive")));
            }
        }
        if !(self.frame_overhead_us >= 0.0 && self.finite_length_coeff >= 0.0) {
            return Err(Error::invalid("overhead and finite-length coefficient must be ≥ 0"));
        }
        if self.l_g == 0 {
            return Err(Error::invalid("l_g must be positive"));
        }
        if self.rr_curve.windows(2).any(|w| w[1][0] < w[0][0]) {
            return Err(Error::invalid("rr_curve must be sorted by ε"));
        }
        if self.rr_curve.iter().any(|p| !(0.0..1.0).contains(&p[1])) {
            return Err(Error::invalid("rr_curve values must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Quantized channel bits per second on one link.
    pub fn quantized_rate(&self) -> f64 {
        self.probe_rate_hz * self.bits_per_probe
    }

    /// Reconciliation inefficiency at group size `l_g`.
    pub fn reconcile_efficiency(&self) -> f64 {
        self.efficiency_floor + self.finite_length_coeff / (self.l_g as f64).sqrt()
    }

    pub fn rr(&self, epsilon: f64) -> f64 {
        let c = &self.rr_curve;
        match c.iter().position(|p| p[0] >= epsilon) {
            None => c.last().map_or(0.0, |p| p[1]),
            Some(0) => c[0][1],
            Some(i) => {
                let ([x0, y0], [x1, y1]) = (c[i - 1], c[i]);
                if x1 == x0 {
                    y1
                } else {
                    y0 + (y1 - y0) * (epsilon - x0) / (x1 - x0)
                }
            }
        }
    }

    fn frame_s(&self, payload_bits: f64) -> f64 {
        self.frame_overhead_us * 1e-6 + payload_bits / self.payload_rate_bps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Serial,
    Parallel,
    Simplified,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DelayBreakdown {
    pub t_qkd: f64,
    pub t_crkg_qap1: f64,
    pub t_crkg_qap2: f64,
    pub t_forward: f64,
    pub total: f64,
}

impl DelayBreakdown {
    pub fn crkg(&self) -> f64 {
        self.t_crkg_qap1.max(self.t_crkg_qap2)
    }
}

/// Groups each user needs, split by access point.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Workload {
    pub qap1_users: Vec<usize>,
    pub qap2_users: Vec<usize>,
    pub total_groups: usize,
}

impl Workload {
    pub fn single_pair(groups: usize) -> Self {
        Self {
            qap1_users: vec![groups],
            qap2_users: vec![groups],
            total_groups: groups,
        }
    }

    pub fn from_demand(d: &Demand) -> Self {
        let mut a = std::collections::BTreeMap::<&str, usize>::new();
        let mut b = std::collections::BTreeMap::<&str, usize>::new();
        for ((ai, bi), &n) in &d.pairs {
            *a.entry(ai).or_default() += n;
            *b.entry(bi).or_default() += n;
        }
        Self {
            qap1_users: a.into_values().collect(),
            qap2_users: b.into_values().collect(),
            total_groups: d.total(),
        }
    }
}

/// Per-group costs of one mechanism at disagreement ε.
#[derive(Debug, Clone, Copy)]
struct GroupCost {
    crkg: f64,
    forward: f64,
}

fn group_cost(cfg: &TimingConfig, epsilon: f64, simplified: bool) -> GroupCost {
    let l_g = cfg.l_g as f64;
    let h = h2(epsilon);
    if simplified {
        let n = l_g / (1.0 - h);
        let repeats = 1.0 / (1.0 - cfg.rr(epsilon));
        GroupCost {
            crkg: n / cfg.quantized_rate(),
            forward: cfg.frame_s(n + OVERHEAD_BITS as f64) * repeats,
        }
    } else {
        let fh = cfg.reconcile_efficiency() * h;
        if fh >= 1.0 {
            return GroupCost {
                crkg: f64::INFINITY,
                forward: f64::INFINITY,
            };
        }
        let q = l_g / (1.0 - fh);
        let messaging = if cfg.reconciliation_rounds == 0 || h == 0.0 {
            0.0
        } else {
            let rounds = cfg.reconciliation_rounds as f64;
            rounds * cfg.frame_s(fh * q / rounds)
        };
        GroupCost {
            crkg: q / cfg.quantized_rate() + messaging,
            forward: cfg.frame_s(l_g + OVERHEAD_BITS as f64),
        }
    }
}

fn stages(cfg: &TimingConfig, w: &Workload, epsilon: f64, simplified: bool) -> DelayBreakdown {
    if w.total_groups == 0 {
        return DelayBreakdown::default();
    }
    let c = group_cost(cfg, epsilon, simplified);
    let per_user = |users: &[usize]| users.iter().map(|&g| g as f64 * c.crkg).collect::<Vec<_>>();
    let fwd = |users: &[usize]| users.iter().sum::<usize>() as f64 * c.forward;
    DelayBreakdown {
        t_qkd: (w.total_groups * cfg.l_g) as f64 / cfg.qkd_rate_bps,
        t_crkg_qap1: per_user(&w.qap1_users).iter().sum(),
        t_crkg_qap2: per_user(&w.qap2_users).iter().sum(),
        t_forward: fwd(&w.qap1_users).max(fwd(&w.qap2_users)),
        total: 0.0,
    }
}

/// QKD, then channel keys, then forwarding.
pub fn compose_serial(t_qkd: f64, crkg_qap1: &[f64], crkg_qap2: &[f64], t_forward: f64) -> DelayBreakdown {
    let (c1, c2) = (crkg_qap1.iter().sum::<f64>(), crkg_qap2.iter().sum::<f64>());
    DelayBreakdown {
        t_qkd,
        t_crkg_qap1: c1,
        t_crkg_qap2: c2,
        t_forward,
        total: t_qkd + c1.max(c2) + t_forward,
    }
}

/// QKD alongside channel-key generation, then forwarding.
pub fn compose_parallel(t_qkd: f64, crkg_qap1: &[f64], crkg_qap2: &[f64], t_forward: f64) -> DelayBreakdown {
    let mut d = compose_serial(t_qkd, crkg_qap1, crkg_qap2, t_forward);
    d.total = t_qkd.max(d.crkg()) + t_forward;
    d
}

pub fn delay_serial(cfg: &TimingConfig, w: &Workload, epsilon: f64) -> DelayBreakdown {
    let mut d = stages(cfg, w, epsilon, false);
    d.total = if w.total_groups == 0 { 0.0 } else { d.t_qkd + d.crkg() + d.t_forward };
    d
}

pub fn delay_parallel(cfg: &TimingConfig, w: &Workload, epsilon: f64) -> DelayBreakdown {
    let mut d = stages(cfg, w, epsilon, false);
    d.total = if w.total_groups == 0 { 0.0 } else { d.t_qkd.max(d.crkg()) + d.t_forward };
    d
}

/// Parallel operation without reconciliation.
pub fn delay_simplified(cfg: &TimingConfig, w: &Workload, epsilon: f64) -> Result<DelayBreakdown> {
    if !(0.0..0.5).contains(&epsilon) {
        return Err(Error::invalid(format!("ε = {epsilon} outside [0, 0.5)")));
    }
    let mut d = stages(cfg, w, epsilon, true);
    d.total = if w.total_groups == 0 { 0.0 } else { d.t_qkd.max(d.crkg()) + d.t_forward };
    Ok(d)
}

pub fn delay(cfg: &TimingConfig, w: &Workload, epsilon: f64, mechanism: Mechanism) -> Result<DelayBreakdown> {
    match mechanism {
        Mechanism::Serial => Ok(delay_serial(cfg, w, epsilon)),
        Mechanism::Parallel => Ok(delay_parallel(cfg, w, epsilon)),
        Mechanism::Simplified => delay_simplified(cfg, w, epsilon),
    }
}

/// Secret-key rate bound of one link in bits per second.
pub fn skr_upper_bound(epsilon: f64, cfg: &TimingConfig, mechanism: Mechanism) -> Result<f64> {
    if !(0.0..0.5).contains(&epsilon) {
        return Err(Error::invalid(format!("ε = {epsilon} outside [0, 0.5)")));
    }
    let h = h2(epsilon);
    let rate = match mechanism {
        Mechanism::Simplified => 1.0 - h,
        // the syndrome leakage exceeds h2 by the reconciliation inefficiency
        Mechanism::Serial | Mechanism::Parallel => (1.0 - cfg.reconcile_efficiency() * h).max(0.0),
    };
    Ok(cfg.quantized_rate() * rate)
}

/// `(a - b) / a`, the fraction of `a` saved by `b`.
pub fn reduction(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        (a - b) / a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub l_g: usize,
    pub epsilon: f64,
    pub serial_s: f64,
    pub parallel_s: f64,
    pub simplified_s: f64,
    /// Serial to parallel.
    pub parallel_reduction: f64,
    /// Parallel to simplified.
    pub simplified_reduction: f64,
    pub skr_reconciled: f64,
    pub skr_simplified: f64,
    pub skr_growth: f64,
}

/// One row per `(l_g, ε)` for a single pair requesting `groups` groups.
pub fn sweep(base: &TimingConfig, l_gs: &[usize], epsilons: &[f64], groups: usize) -> Result<Vec<SweepRow>> {
    base.validate()?;
    let w = Workload::single_pair(groups);
    let mut rows = Vec::with_capacity(l_gs.len() * epsilons.len());
    for &l_g in l_gs {
        let cfg = TimingConfig { l_g, ..base.clone() };
        for &epsilon in epsilons {
            let s = delay_serial(&cfg, &w, epsilon).total;
            let p = delay_parallel(&cfg, &w, epsilon).total;
            let q = delay_simplified(&cfg, &w, epsilon)?.total;
            let rr = skr_upper_bound(epsilon, &cfg, Mechanism::Parallel)?;
            let rs = skr_upper_bound(epsilon, &cfg, Mechanism::Simplified)?;
            rows.push(SweepRow {
                l_g,
                epsilon,
                serial_s: s,
                parallel_s: p,
                simplified_s: q,
                parallel_reduction: reduction(s, p),
                simplified_reduction: reduction(p, q),
                skr_reconciled: rr,
                skr_simplified: rs,
                skr_growth: if rr > 0.0 { rs / rr - 1.0 } else { f64::INFINITY },
            });
        }
    }
    Ok(rows)
}

pub const SWEEP_HEADER: &str =
    "l_g,epsilon,serial_s,parallel_s,simplified_s,parallel_reduction,simplified_reduction,skr_reconciled_bps,skr_simplified_bps,skr_growth";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.9e},{:.9e},{:.9e},{:.6},{:.6},{:.6e},{:.6e},{:.6}\n",
            r.l_g,
            r.epsilon,
            r.serial_s,
            r.parallel_s,
            r.simplified_s,
            r.parallel_reduction,
            r.simplified_reduction,
            r.skr_reconciled,
            r.skr_simplified,
            r.skr_growth
        ));
    }
    out
}
