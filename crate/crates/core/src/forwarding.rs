//! Key alignment, multi-user allocation and one-time-pad forwarding.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::frame::ForwardFrame;

pub const DEFAULT_LG: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyGroup {
    pub group_no: u32,
    pub bits: BitString,
}

fn check_lg(l_g: usize) -> Result<()> {
    if l_g < 8 || !l_g.is_multiple_of(8) || l_g > u16::MAX as usize {
        return Err(Error::invalid(format!("group size {l_g} must be a multiple of 8 in 8..=65528")));
    }
    Ok(())
}

/// Cuts a key stream into numbered groups, carrying any remainder over to
/// the next push.
#[derive(Debug, Clone)]
pub struct Segmenter {
    l_g: usize,
    next_no: u32,
    carry: BitString,
}

impl Segmenter {
    pub fn new(l_g: usize, first_no: u32) -> Result<Self> {
        check_lg(l_g)?;
        Ok(Self {
            l_g,
            next_no: first_no,
            carry: BitString::new(),
        })
    }

    pub fn l_g(&self) -> usize {
        self.l_g
    }

    pub fn carry(&self) -> &BitString {
        &self.carry
    }

    pub fn next_group_no(&self) -> u32 {
        self.next_no
    }

    pub fn push(&mut self, stream: &BitString) -> Vec<KeyGroup> {
        self.carry.extend_from(stream);
        let mut out = Vec::with_capacity(self.carry.len() / self.l_g);
        while self.carry.len() >= self.l_g {
            out.push(KeyGroup {
                group_no: self.next_no,
                bits: self.carry.drain_front(self.l_g),
            });
            self.next_no = self.next_no.wrapping_add(1);
        }
        out
    }
}

/// One-shot segmentation; returns the groups and the carried remainder.
pub fn segment(stream: &BitString, l_g: usize, first_no: u32) -> Result<(Vec<KeyGroup>, BitString)> {
    let mut s = Segmenter::new(l_g, first_no)?;
    let groups = s.push(stream);
    Ok((groups, s.carry))
}

pub fn otp_encrypt(q: &KeyGroup, c: &KeyGroup) -> Result<BitString> {
    otp(&q.bits, &c.bits)
}

pub fn otp(data: &BitString, pad: &BitString) -> Result<BitString> {
    if data.len() != pad.len() {
        return Err(Error::invalid(format!(
            "pad of {} bits for {} data bits",
            pad.len(),
            data.len()
        )));
    }
    Ok(data.xor(pad))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserPairRequest {
    pub a_id: String,
    pub b_id: String,
    pub n_groups: usize,
}

impl UserPairRequest {
    pub fn new(a_id: impl Into<String>, b_id: impl Into<String>, n_groups: usize) -> Self {
        Self {
            a_id: a_id.into(),
            b_id: b_id.into(),
            n_groups,
        }
    }
}

pub type PairKey = (String, String);

/// Merged requests, keyed and ordered by `(a_id, b_id)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Demand {
    pub pairs: BTreeMap<PairKey, usize>,
}

impl Demand {
    pub fn total(&self) -> usize {
        self.pairs.values().sum()
    }

    /// Total groups requested by one user across all of its pairs.
    pub fn for_user(&self, id: &str) -> usize {
        self.pairs
            .iter()
            .filter(|((a, b), _)| a == id || b == id)
            .map(|(_, n)| n)
            .sum()
    }
}

pub fn collect_requests(requests: &[UserPairRequest]) -> Result<Demand> {
    let mut d = Demand::default();
    for r in requests {
        if r.a_id == r.b_id {
            return Err(Error::invalid(format!("user {} paired with itself", r.a_id)));
        }
        if r.n_groups == 0 {
            return Err(Error::invalid(format!("pair {}-{} requests no groups", r.a_id, r.b_id)));
        }
        *d.pairs.entry((r.a_id.clone(), r.b_id.clone())).or_default() += r.n_groups;
    }
    Ok(d)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationEntry {
    pub pair_id: u16,
    pub a_id: String,
    pub b_id: String,
    pub requested: usize,
    pub groups: Vec<u32>,
}

impl AllocationEntry {
    pub fn shortfall(&self) -> usize {
        self.requested - self.groups.len()
    }
}

/// Pair-to-group mapping published to the peer access point and the users.
/// `pair_id` is the entry's index.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationTable {
    pub entries: Vec<AllocationEntry>,
    /// Groups left in the buffer after allocation.
    pub unallocated: Vec<u32>,
}

impl AllocationTable {
    pub fn shortfall(&self) -> usize {
        self.entries.iter().map(AllocationEntry::shortfall).sum()
    }

    pub fn allocated(&self) -> usize {
        self.entries.iter().map(|e| e.groups.len()).sum()
    }

    pub fn entry(&self, a_id: &str, b_id: &str) -> Option<&AllocationEntry> {
        self.entries.iter().find(|e| e.a_id == a_id && e.b_id == b_id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("allocation table serializes")
    }
}

/// Serves pairs in `(a_id, b_id)` order from groups in ascending number. The
/// pair reached at exhaustion gets what is left; later pairs get nothing.
pub fn allocate(demand: &Demand, available: &[KeyGroup]) -> Result<AllocationTable> {
    if demand.pairs.len() > u16::MAX as usize + 1 {
        return Err(Error::invalid("more pairs than 16-bit pair ids"));
    }
    let mut supply: Vec<u32> = available.iter().map(|g| g.group_no).collect();
    supply.sort_unstable();
    let mut supply = supply.into_iter();
    let entries = demand
        .pairs
        .iter()
        .enumerate()
        .map(|(i, ((a, b), &n))| AllocationEntry {
            pair_id: i as u16,
            a_id: a.clone(),
            b_id: b.clone(),
            requested: n,
            groups: supply.by_ref().take(n).collect(),
        })
        .collect();
    Ok(AllocationTable {
        entries,
        unallocated: supply.collect(),
    })
}

/// Quantum key groups held identically by both access points.
#[derive(Debug, Clone, Default)]
pub struct QuantumKeyBuffer {
    groups: BTreeMap<u32, BitString>,
    produced: usize,
    allocated: usize,
}

impl QuantumKeyBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn deposit(&mut self, groups: Vec<KeyGroup>) -> Result<()> {
        for g in groups {
            if self.groups.insert(g.group_no, g.bits).is_some() {
                return Err(Error::invalid(format!("quantum group {} deposited twice", g.group_no)));
            }
            self.produced += 1;
        }
        Ok(())
    }

    pub fn available(&self) -> Vec<KeyGroup> {
        self.groups
            .iter()
            .map(|(&group_no, bits)| KeyGroup {
                group_no,
                bits: bits.clone(),
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn produced(&self) -> usize {
        self.produced
    }

    pub fn allocated(&self) -> usize {
        self.allocated
    }

    pub fn get(&self, group_no: u32) -> Option<&BitString> {
        self.groups.get(&group_no)
    }

    /// Removes every group named in `table`.
    pub fn withdraw(&mut self, table: &AllocationTable) -> Result<BTreeMap<u32, BitString>> {
        let mut out = BTreeMap::new();
        for no in table.entries.iter().flat_map(|e| &e.groups) {
            let bits = self
                .groups
                .remove(no)
                .ok_or_else(|| Error::invalid(format!("quantum group {no} not in buffer")))?;
            out.insert(*no, bits);
            self.allocated += 1;
        }
        Ok(out)
    }
}

/// One user's channel-key groups as held on one side of the wireless link.
/// Every group is handed out at most once and then destroyed.
#[derive(Debug, Clone)]
pub struct ChannelKeyStore {
    user: String,
    segmenter: Segmenter,
    ready: VecDeque<KeyGroup>,
    consumed: BTreeSet<u32>,
}

impl ChannelKeyStore {
    pub fn new(user: impl Into<String>, l_g: usize) -> Result<Self> {
        Ok(Self {
            user: user.into(),
            segmenter: Segmenter::new(l_g, 0)?,
            ready: VecDeque::new(),
            consumed: BTreeSet::new(),
        })
    }

    pub fn user(&self) -> &str {
        &self.user
    }

    /// Appends freshly generated channel key.
    pub fn deposit(&mut self, key: &BitString) {
        let groups = self.segmenter.push(key);
        self.ready.extend(groups);
    }

    pub fn ready(&self) -> usize {
        self.ready.len()
    }

    pub fn consumed(&self) -> &BTreeSet<u32> {
        &self.consumed
    }

    /// Hands out the next unused group.
    pub fn take_next(&mut self) -> Option<KeyGroup> {
        let g = self.ready.pop_front()?;
        self.consumed.insert(g.group_no);
        Some(g)
    }

    /// Hands out group `group_no`, which must not have been used before.
    pub fn take(&mut self, group_no: u32) -> Result<KeyGroup> {
        if self.consumed.contains(&group_no) {
            return Err(Error::ChannelKeyReused {
                user: self.user.clone(),
                group_no,
            });
        }
        let pos = self
            .ready
            .iter()
            .position(|g| g.group_no == group_no)
            .ok_or_else(|| Error::invalid(format!("user {} has no channel group {group_no}", self.user)))?;
        let g = self.ready.remove(pos).expect("position is valid");
        self.consumed.insert(group_no);
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// QAP1 serving the `a_id` users.
    A,
    /// QAP2 serving the `b_id` users.
    B,
}

impl Side {
    pub fn user<'a>(&self, e: &'a AllocationEntry) -> &'a str {
        match self {
            Side::A => &e.a_id,
            Side::B => &e.b_id,
        }
    }
}

/// A frame together with the channel-key group used as its pad, which is
/// published (the number, not the bits).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddressedFrame {
    pub user: String,
    pub channel_group: u32,
    pub frame: ForwardFrame,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RoundOutput {
    pub frames: Vec<AddressedFrame>,
    /// `(pair_id, group_no)` not sent because the user lacked channel key.
    pub deferred: Vec<(u16, u32)>,
}

/// Encrypts every allocated group for the users on `side`. A user without
/// enough channel-key groups for all of its frames gets none this round.
pub fn forward_round(
    table: &AllocationTable,
    quantum: &BTreeMap<u32, BitString>,
    stores: &mut BTreeMap<String, ChannelKeyStore>,
    side: Side,
) -> Result<RoundOutput> {
    let mut per_user: BTreeMap<&str, Vec<(u16, u32)>> = BTreeMap::new();
    for e in &table.entries {
        for &g in &e.groups {
            per_user.entry(side.user(e)).or_default().push((e.pair_id, g));
        }
    }
    let mut out = RoundOutput::default();
    for (user, jobs) in per_user {
        let store = match stores.get_mut(user) {
            Some(s) if s.ready() >= jobs.len() => s,
            _ => {
                out.deferred.extend(jobs);
                continue;
            }
        };
        for (pair_id, group_no) in jobs {
            let q = quantum
                .get(&group_no)
                .ok_or_else(|| Error::invalid(format!("quantum group {group_no} missing")))?;
            let c = store.take_next().expect("checked above");
            out.frames.push(AddressedFrame {
                user: user.to_string(),
                channel_group: c.group_no,
                frame: ForwardFrame::new(pair_id, group_no, otp(q, &c.bits)?),
            });
        }
    }
    Ok(out)
}

/// User side: decrypts frames addressed to `store`'s user and files the
/// quantum groups under their pair, ordered by group number.
pub fn receive(
    frames: &[AddressedFrame],
    store: &mut ChannelKeyStore,
    keys: &mut BTreeMap<u16, BTreeMap<u32, BitString>>,
) -> Result<usize> {
    let mut n = 0;
    let user = store.user.clone();
    for f in frames.iter().filter(|f| f.user == user) {
        let pad = store.take(f.channel_group)?;
        let plain = otp(&f.frame.payload, &pad.bits)?;
        keys.entry(f.frame.pair_id).or_default().insert(f.frame.group_no, plain);
        n += 1;
    }
    Ok(n)
}

/// Concatenates a pair's groups in group-number order.
pub fn assemble(groups: &BTreeMap<u32, BitString>) -> BitString {
    let mut out = BitString::new();
    for bits in groups.values() {
        out.extend_from(bits);
    }
    out
}
