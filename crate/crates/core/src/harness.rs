//! End-to-end rounds: request collection, QKD between the access points,
//! segmentation and allocation, channel-key generation on every user link,
//! encrypted forwarding and per-pair key assembly.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::channel::ChannelState;
use crate::crkg::reconcile::DIGEST_BITS;
use crate::crkg::{run_crkg, CrkgConfig, CrkgMode};
use crate::error::{Error, Result};
use crate::forwarding::{
    allocate, assemble, collect_requests, forward_round, otp, receive, AddressedFrame, AllocationTable, ChannelKeyStore,
    QuantumKeyBuffer, Segmenter, Side,
};
use crate::frame::{decode_frame, OVERHEAD_BITS};
use crate::qkd::run_qkd;
use crate::randomness::{randomness_tests, RandomnessVerdicts, MIN_BITS};
use crate::scenario::{Mode, ScenarioConfig};
use crate::simplified::{retransmit_loop, EccCode, EpsilonEstimator, Pads, SimplifiedStats};
use crate::timing::{delay, DelayBreakdown, TimingConfig, Workload};

const ESTIMATOR_WINDOW: usize = 16;
/// Public seeds and the key-confirmation tag sent with each reconciled session.
const SESSION_CONTROL_BITS: usize = 2 * 64;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream `stream` of the run seeded with `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix(seed ^ splitmix(stream))
}

const STREAM_QKD: u64 = 1;
const STREAM_CHANNEL: u64 = 0x100;
const STREAM_PUBLIC: u64 = 0x200;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkMetrics {
    pub user: String,
    pub qap: u8,
    pub sessions: usize,
    pub probes: usize,
    pub quantized_bits: usize,
    pub kdr: f64,
    pub eve_kdr: f64,
    /// Quantum-key bits delivered to the user.
    pub key_bits: usize,
    /// Simulated link time: probing plus every frame sent.
    pub link_time_s: f64,
    pub kgr_bps: f64,
    pub attempts: usize,
    pub failures: usize,
    pub rr: f64,
    pub groups_forwarded: usize,
    pub eve_cracked: usize,
    pub discarded_blocks: usize,
    pub randomness: Option<RandomnessVerdicts>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QkdSummary {
    pub sessions: usize,
    pub key_bits: usize,
    pub qber: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub kgr_bps: f64,
    pub kdr: f64,
    pub rr: f64,
    pub eve_kdr: f64,
    pub eve_cr: f64,
    pub attempts: usize,
    pub failures: usize,
    pub groups_requested: usize,
    pub groups_allocated: usize,
    pub groups_delivered: usize,
    pub eve_cracked: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub mode: Option<Mode>,
    pub seed: u64,
    pub l_g: usize,
    pub aborted: Option<String>,
    pub qkd: QkdSummary,
    pub links: Vec<LinkMetrics>,
    pub overall: Summary,
    pub delay: DelayBreakdown,
}

/// One pair's outcome, with the access points' copies for comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDelivery {
    pub pair_id: u16,
    pub a_id: String,
    pub b_id: String,
    pub requested: usize,
    pub allocated: Vec<u32>,
    /// Groups that reached both users.
    pub delivered: Vec<u32>,
    pub a_key: BitString,
    pub b_key: BitString,
    pub qap1_key: BitString,
    pub qap2_key: BitString,
}

impl PairDelivery {
    pub fn unified(&self) -> bool {
        self.a_key == self.b_key && self.a_key == self.qap1_key && self.qap1_key == self.qap2_key
    }
}

#[derive(Debug, Clone)]
pub struct RoundResult {
    pub report: MetricsReport,
    pub allocation: AllocationTable,
    pub pairs: Vec<PairDelivery>,
    /// Simplified-mode statistics per user, including the attempt log.
    pub link_stats: BTreeMap<String, SimplifiedStats>,
}

struct Link {
    user: String,
    side: Side,
    channel: ChannelState,
    public: ChaCha8Rng,
    pad_qap: BitString,
    pad_user: BitString,
    pad_eve: BitString,
    user_store: ChannelKeyStore,
    eve_store: ChannelKeyStore,
    sessions: usize,
    probes: usize,
    quantized_bits: usize,
    disagreements: usize,
    eve_disagreements: usize,
    discarded_blocks: usize,
    time_s: f64,
    key_bits: usize,
    sample: BitString,
    stats: SimplifiedStats,
    groups_forwarded: usize,
    eve_cracked: usize,
}

impl Link {
    fn session(&mut self, cfg: &ScenarioConfig, crkg: &CrkgConfig, mode: CrkgMode, qap_store: Option<&mut ChannelKeyStore>) -> Result<()> {
        let out = run_crkg(&mut self.channel, cfg.n_probes, crkg, mode, &mut self.public)?;
        let s = &out.stats;
        self.sessions += 1;
        self.probes += s.n_probes;
        self.quantized_bits += s.quantized_len;
        self.disagreements += s.disagreements;
        self.eve_disagreements += s.eve_disagreements;
        self.discarded_blocks += s.blocks_failed;
        self.time_s += s.duration_s;
        match mode {
            CrkgMode::Raw => {
                self.sample.extend_from(&out.key_qap);
                self.pad_qap.extend_from(&out.key_qap);
                self.pad_user.extend_from(&out.key_user);
                self.pad_eve.extend_from(&out.key_eve);
            }
            CrkgMode::Reconciled => {
                let syndrome = s.leaked_bits + s.blocks * DIGEST_BITS + SESSION_CONTROL_BITS;
                self.time_s += frame_time(&cfg.timing, syndrome) + frame_time(&cfg.timing, DIGEST_BITS);
                self.sample.extend_from(&out.key_qap);
                self.user_store.deposit(&out.key_user);
                self.eve_store.deposit(&out.key_eve);
                if let Some(q) = qap_store {
                    q.deposit(&out.key_qap);
                }
            }
        }
        Ok(())
    }

    fn pads(&mut self, n: usize, cfg: &ScenarioConfig, crkg: &CrkgConfig) -> Result<Pads> {
        let mut sessions = 0;
        while self.pad_qap.len() < n {
            if sessions == cfg.max_sessions {
                return Err(Error::InsufficientMaterial {
                    needed: n,
                    got: self.pad_qap.len(),
                });
            }
            self.session(cfg, crkg, CrkgMode::Raw, None)?;
            sessions += 1;
        }
        Ok(Pads {
            qap: self.pad_qap.drain_front(n),
            user: self.pad_user.drain_front(n),
            eve: self.pad_eve.drain_front(n),
        })
    }

    fn metrics(&self) -> Result<LinkMetrics> {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let randomness = if self.sample.len() >= MIN_BITS {
            Some(randomness_tests(&self.sample)?)
        } else {
            None
        };
        Ok(LinkMetrics {
            user: self.user.clone(),
            qap: match self.side {
                Side::A => 1,
                Side::B => 2,
            },
            sessions: self.sessions,
            probes: self.probes,
            quantized_bits: self.quantized_bits,
            kdr: ratio(self.disagreements, self.quantized_bits),
            eve_kdr: ratio(self.eve_disagreements, self.quantized_bits),
            key_bits: self.key_bits,
            link_time_s: self.time_s,
            kgr_bps: if self.time_s > 0.0 { self.key_bits as f64 / self.time_s } else { 0.0 },
            attempts: self.stats.attempts,
            failures: self.stats.failures,
            rr: self.stats.rr,
            groups_forwarded: self.groups_forwarded,
            eve_cracked: self.eve_cracked,
            discarded_blocks: self.discarded_blocks,
            randomness,
        })
    }
}

fn frame_time(t: &TimingConfig, payload_bits: usize) -> f64 {
    t.frame_overhead_us * 1e-6 + (payload_bits + OVERHEAD_BITS) as f64 / t.payload_rate_bps
}

type Received = BTreeMap<u16, BTreeMap<u32, BitString>>;

/// Runs the configured requests through one full round.
pub fn run_multiuser_round(cfg: &ScenarioConfig) -> Result<RoundResult> {
    cfg.validate()?;
    let demand = collect_requests(&cfg.pair_requests())?;
    let mut report = MetricsReport {
        scenario: cfg.name.clone(),
        mode: Some(cfg.mode),
        seed: cfg.seed,
        l_g: cfg.l_g,
        ..MetricsReport::default()
    };
    report.overall.groups_requested = demand.total();

    // QKD between the access points until the buffer covers the demand.
    let mut qkd_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_QKD));
    let (mut seg1, mut seg2) = (Segmenter::new(cfg.l_g, 0)?, Segmenter::new(cfg.l_g, 0)?);
    let (mut buf1, mut buf2) = (QuantumKeyBuffer::new(), QuantumKeyBuffer::new());
    let (mut errors, mut tested) = (0.0, 0usize);
    while buf1.len() < demand.total() && report.qkd.sessions < cfg.max_sessions {
        let out = run_qkd(&cfg.qkd, &mut qkd_rng)?;
        report.qkd.sessions += 1;
        if out.aborted {
            report.qkd.qber = out.qber_estimate;
            report.aborted = Some(format!(
                "QKD aborted: estimated QBER {:.4} exceeds {}",
                out.qber_estimate, cfg.qkd.qber_abort_threshold
            ));
            return Ok(RoundResult {
                report,
                allocation: AllocationTable::default(),
                pairs: Vec::new(),
                link_stats: BTreeMap::new(),
            });
        }
        errors += out.qber_estimate * out.sifted_len as f64;
        tested += out.sifted_len;
        report.qkd.key_bits += out.key.len();
        buf1.deposit(seg1.push(&out.key))?;
        buf2.deposit(seg2.push(&out.peer_key))?;
    }
    report.qkd.qber = if tested == 0 { 0.0 } else { errors / tested as f64 };

    let table = allocate(&demand, &buf1.available())?;
    let q1 = buf1.withdraw(&table)?;
    let q2 = buf2.withdraw(&table)?;
    report.overall.groups_allocated = table.allocated();

    let crkg = cfg.crkg();
    let users: Vec<(&String, Side)> = cfg
        .topology
        .qap1
        .iter()
        .map(|u| (u, Side::A))
        .chain(cfg.topology.qap2.iter().map(|u| (u, Side::B)))
        .collect();
    let mut links = BTreeMap::new();
    let mut qap_stores: [BTreeMap<String, ChannelKeyStore>; 2] = Default::default();
    for (i, (user, side)) in users.iter().enumerate() {
        let params = cfg.link_params(user);
        let link = Link {
            user: (*user).clone(),
            side: *side,
            channel: ChannelState::new(params, derive_seed(cfg.seed, STREAM_CHANNEL + i as u64))?,
            public: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_PUBLIC + i as u64)),
            pad_qap: BitString::new(),
            pad_user: BitString::new(),
            pad_eve: BitString::new(),
            user_store: ChannelKeyStore::new(user.as_str(), cfg.l_g)?,
            eve_store: ChannelKeyStore::new(user.as_str(), cfg.l_g)?,
            sessions: 0,
            probes: 0,
            quantized_bits: 0,
            disagreements: 0,
            eve_disagreements: 0,
            discarded_blocks: 0,
            time_s: 0.0,
            key_bits: 0,
            sample: BitString::new(),
            stats: SimplifiedStats::default(),
            groups_forwarded: 0,
            eve_cracked: 0,
        };
        qap_stores[side_index(*side)].insert((*user).clone(), ChannelKeyStore::new(user.as_str(), cfg.l_g)?);
        links.insert((*user).clone(), link);
    }

    let mut recv: [Received; 2] = Default::default();
    let mut cracked = BTreeSet::new();
    match cfg.mode {
        Mode::Basic | Mode::Parallel => {
            let mut need: BTreeMap<&str, usize> = BTreeMap::new();
            for e in &table.entries {
                *need.entry(e.a_id.as_str()).or_default() += e.groups.len();
                *need.entry(e.b_id.as_str()).or_default() += e.groups.len();
            }
            for (user, n) in need {
                let link = links.get_mut(user).expect("requests name known users");
                let store = qap_stores[side_index(link.side)].get_mut(user).expect("store per user");
                while link.user_store.ready() < n && link.sessions < cfg.max_sessions {
                    link.session(cfg, &crkg, CrkgMode::Reconciled, Some(store))?;
                }
            }
            for (side, quantum) in [(Side::A, &q1), (Side::B, &q2)] {
                let round = forward_round(&table, quantum, &mut qap_stores[side_index(side)], side)?;
                let mut by_user: BTreeMap<String, Vec<AddressedFrame>> = BTreeMap::new();
                for f in round.frames {
                    // over the air and back
                    let frame = decode_frame(&f.frame.encode()?)?;
                    by_user.entry(f.user.clone()).or_default().push(AddressedFrame { frame, ..f });
                }
                for (user, frames) in by_user {
                    let link = links.get_mut(&user).expect("frames go to known users");
                    receive(&frames, &mut link.user_store, &mut recv[side_index(side)])?;
                    for f in &frames {
                        link.groups_forwarded += 1;
                        link.key_bits += f.frame.payload.len();
                        link.time_s += frame_time(&cfg.timing, f.frame.payload.len());
                        let pad = link.eve_store.take(f.channel_group)?;
                        if otp(&f.frame.payload, &pad.bits)? == quantum[&f.frame.group_no] {
                            link.eve_cracked += 1;
                            cracked.insert(f.frame.group_no);
                        }
                    }
                }
            }
        }
        Mode::Simplified => {
            let code = EccCode::new(cfg.ecc)?;
            let mut estimators: BTreeMap<String, EpsilonEstimator> = links
                .keys()
                .map(|u| (u.clone(), EpsilonEstimator::new(cfg.ecc.design_epsilon, ESTIMATOR_WINDOW)))
                .collect();
            for e in &table.entries {
                for &g in &e.groups {
                    for (side, user, quantum) in [(Side::A, &e.a_id, &q1), (Side::B, &e.b_id, &q2)] {
                        let link = links.get_mut(user).expect("requests name known users");
                        let est = estimators.get_mut(user).expect("estimator per user");
                        let d = retransmit_loop(&quantum[&g], g, &code, est, cfg.max_attempts, &mut |n| {
                            link.pads(n, cfg, &crkg)
                        })?;
                        link.stats.merge(&d.stats);
                        link.groups_forwarded += 1;
                        for t in &d.transmissions {
                            link.time_s += frame_time(&cfg.timing, t.len());
                        }
                        if d.eve_cracked {
                            link.eve_cracked += 1;
                            cracked.insert(g);
                        }
                        if let Some(bits) = d.recovered {
                            link.key_bits += bits.len();
                            recv[side_index(side)].entry(e.pair_id).or_default().insert(g, bits);
                        }
                    }
                }
            }
        }
    }

    let mut pairs = Vec::with_capacity(table.entries.len());
    let empty = BTreeMap::new();
    for e in &table.entries {
        let a = recv[0].get(&e.pair_id).unwrap_or(&empty);
        let b = recv[1].get(&e.pair_id).unwrap_or(&empty);
        let delivered: Vec<u32> = e.groups.iter().copied().filter(|g| a.contains_key(g) && b.contains_key(g)).collect();
        let pick = |m: &BTreeMap<u32, BitString>| {
            assemble(&delivered.iter().map(|g| (*g, m[g].clone())).collect())
        };
        pairs.push(PairDelivery {
            pair_id: e.pair_id,
            a_id: e.a_id.clone(),
            b_id: e.b_id.clone(),
            requested: e.requested,
            allocated: e.groups.clone(),
            a_key: pick(a),
            b_key: pick(b),
            qap1_key: pick(&q1),
            qap2_key: pick(&q2),
            delivered,
        });
    }

    let mut link_stats = BTreeMap::new();
    for (user, _) in &users {
        let link = &links[*user];
        if link.sessions == 0 && link.groups_forwarded == 0 {
            continue;
        }
        report.links.push(link.metrics()?);
        link_stats.insert((*user).clone(), link.stats.clone());
    }
    let o = &mut report.overall;
    let sum = |f: fn(&Link) -> usize| links.values().map(f).sum::<usize>();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let qbits = sum(|l| l.quantized_bits);
    o.kdr = ratio(sum(|l| l.disagreements), qbits);
    o.eve_kdr = ratio(sum(|l| l.eve_disagreements), qbits);
    o.attempts = sum(|l| l.stats.attempts);
    o.failures = sum(|l| l.stats.failures);
    o.rr = ratio(o.failures, o.attempts);
    o.groups_delivered = pairs.iter().map(|p| p.delivered.len()).sum();
    o.eve_cracked = cracked.len();
    o.eve_cr = ratio(cracked.len(), o.groups_allocated);
    o.kgr_bps = if report.links.is_empty() {
        0.0
    } else {
        report.links.iter().map(|l| l.kgr_bps).sum::<f64>() / report.links.len() as f64
    };
    let timing = TimingConfig {
        l_g: cfg.l_g,
        ..cfg.timing.clone()
    };
    report.delay = delay(&timing, &Workload::from_demand(&demand), o.kdr.min(0.49), cfg.mode.mechanism())?;
    Ok(RoundResult {
        report,
        allocation: table,
        pairs,
        link_stats,
    })
}

/// Single-scenario entry point; the report of [`run_multiuser_round`].
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<MetricsReport> {
    Ok(run_multiuser_round(cfg)?.report)
}

/// At least `n_bits` raw quantized bits from the access point's side of the
/// first QAP1 user's link.
pub fn quantized_sample(cfg: &ScenarioConfig, n_bits: usize) -> Result<BitString> {
    cfg.validate()?;
    let user = &cfg.topology.qap1[0];
    let mut channel = ChannelState::new(cfg.link_params(user), derive_seed(cfg.seed, STREAM_CHANNEL))?;
    let mut public = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_PUBLIC));
    let crkg = cfg.crkg();
    let mut out = BitString::with_capacity(n_bits);
    while out.len() < n_bits {
        out.extend_from(&run_crkg(&mut channel, cfg.n_probes, &crkg, CrkgMode::Raw, &mut public)?.key_qap);
    }
    Ok(out)
}

fn side_index(side: Side) -> usize {
    match side {
        Side::A => 0,
        Side::B => 1,
    }
}
