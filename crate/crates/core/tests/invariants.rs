use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crqkd::bch::BchSyndromeCode;
use crqkd::bits::BitString;
use crqkd::forwarding::{allocate, assemble, collect_requests, segment, KeyGroup, UserPairRequest};
use crqkd::polar::{bsc_llr, PolarCode};
use crqkd::scenario::{ScenarioConfig, PRESETS};
use crqkd::timing::{delay_parallel, delay_serial, delay_simplified, TimingConfig, Workload};
use crqkd::toeplitz::toeplitz_hash;

fn arb_bits(max: usize) -> impl Strategy<Value = BitString> {
    proptest::collection::vec(any::<bool>(), 0..max).prop_map(BitString::from_bools)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn segmentation_loses_nothing(stream in arb_bits(5000), l_g in (1usize..64).prop_map(|x| 8 * x), first: u32) {
        let (groups, carry) = segment(&stream, l_g, first).unwrap();
        prop_assert!(carry.len() < l_g);
        prop_assert!(groups.iter().all(|g| g.bits.len() == l_g));
        let map: BTreeMap<u32, BitString> = groups.iter().map(|g| (g.group_no, g.bits.clone())).collect();
        if first.checked_add(groups.len() as u32).is_some() {
            let mut whole = assemble(&map);
            whole.extend_from(&carry);
            prop_assert_eq!(whole, stream);
        }
    }

    #[test]
    fn allocation_never_double_spends(
        reqs in proptest::collection::vec((0u8..6, 0u8..6, 1usize..30), 1..10),
        supply in proptest::collection::btree_set(any::<u32>(), 0..100),
    ) {
        let requests: Vec<UserPairRequest> = reqs
            .into_iter()
            .filter(|(a, b, _)| a != b)
            .map(|(a, b, n)| UserPairRequest::new(format!("U{a}"), format!("U{b}"), n))
            .collect();
        prop_assume!(!requests.is_empty());
        let demand = collect_requests(&requests).unwrap();
        let available: Vec<KeyGroup> =
            supply.iter().map(|&group_no| KeyGroup { group_no, bits: BitString::zeros(8) }).collect();
        let table = allocate(&demand, &available).unwrap();
        let mut all: Vec<u32> = table.entries.iter().flat_map(|e| e.groups.clone()).collect();
        all.extend(&table.unallocated);
        all.sort_unstable();
        prop_assert_eq!(all, supply.iter().copied().collect::<Vec<_>>());
        prop_assert_eq!(table.allocated(), demand.total().min(supply.len()));
        prop_assert_eq!(table.shortfall(), demand.total() - table.allocated());
    }

    #[test]
    fn toeplitz_hash_is_linear(seed: u64, len in 1usize..700, out in 1usize..300) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = BitString::random(len, &mut rng);
        let b = BitString::random(len, &mut rng);
        let h = |x: &BitString| toeplitz_hash(x, out, seed);
        prop_assert_eq!(h(&a.xor(&b)), h(&a).xor(&h(&b)));
        prop_assert_eq!(h(&BitString::zeros(len)), BitString::zeros(out));
    }

    #[test]
    fn bch_corrects_within_radius(seed: u64, t in 1usize..20) {
        let code = BchSyndromeCode::new(1024, t).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let reference = BitString::random(1024, &mut rng);
        let mut local = reference.clone();
        let weight = (seed as usize) % (t + 1);
        for i in sample(&mut rng, 1024, weight) {
            local.flip(i);
        }
        let fixed = code.correct(&local, &code.syndrome(&reference).unwrap()).unwrap();
        prop_assert_eq!(fixed, Some(reference));
    }

    #[test]
    fn timing_breakdowns_are_consistent(
        l_g in (4usize..=11).prop_map(|e| 1 << e),
        eps in 0.0..0.2f64,
        groups in 1usize..50,
    ) {
        let cfg = TimingConfig { l_g, ..TimingConfig::ht_mixed() };
        let w = Workload::single_pair(groups);
        let s = delay_serial(&cfg, &w, eps);
        let p = delay_parallel(&cfg, &w, eps);
        let q = delay_simplified(&cfg, &w, eps).unwrap();
        prop_assert!(q.total > 0.0 && q.total.is_finite());
        // reconciliation is infeasible once its leakage covers the whole key
        prop_assume!(s.total.is_finite());
        prop_assert!(p.total <= s.total);
        prop_assert!((s.total - (s.t_qkd + s.crkg() + s.t_forward)).abs() <= 1e-12 * s.total);
        prop_assert!((p.total - (p.t_qkd.max(p.crkg()) + p.t_forward)).abs() <= 1e-12 * p.total);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn polar_round_trip_without_noise(seed: u64, m in 6u32..11, rate in 0.2..0.8f64) {
        let n = 1usize << m;
        let k = ((n as f64 * rate) as usize).max(1);
        let code = PolarCode::construct(n, k, 0.05).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let info = BitString::random(k, &mut rng);
        let x = code.encode_systematic(&info).unwrap();
        prop_assert_eq!(code.syndrome(&x).unwrap().count_ones(), 0);
        let decoded = code.decode(&bsc_llr(&x, 0.05)).unwrap();
        prop_assert_eq!(code.extract_info(&decoded), info);
    }
}

#[test]
fn scenario_files_round_trip() {
    for p in PRESETS {
        let cfg = ScenarioConfig::preset(p).unwrap();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ScenarioConfig::from_toml(&text).unwrap(), cfg);
    }
}
