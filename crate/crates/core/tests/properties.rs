use proptest::prelude::*;

use permlab::perm::{i_nk_rational, subset_sum_hits};
use permlab::processes::{sample_conditioned_lower, sample_conditioned_upper};
use permlab::sumstats::{
    rho_raw_count, tau_distinct_bitset, tau_distinct_brute, tau_distinct_split, tau_star, tau_unstar, Bitset, EngineLimits,
    RhoEngine,
};
use permlab::walks::{r_bounded_index, reversal_symmetry_tv, t_positive_index, Walk, WalkKind, WalkParams};
use permlab::{McPlan, StreamSeed};

fn all_sums(vals: &[u64]) -> Vec<u64> {
    let mut sums = vec![0u64];
    for &v in vals {
        let n = sums.len();
        for i in 0..n {
            sums.push(sums[i] + v);
        }
    }
    sums
}

fn exponents() -> impl Strategy<Value = (Vec<f64>, f64)> {
    (1usize..=20, 1.0f64..24.0).prop_flat_map(|(m, top)| {
        (proptest::collection::vec(0.0..top, m), 0.0..top + 1.0)
    })
}

fn values(max_m: usize) -> impl Strategy<Value = Vec<u64>> {
    (1usize..=max_m, 1u32..=16).prop_flat_map(|(m, bits)| proptest::collection::vec(1u64..=(1 << bits), m))
}

fn upper_increments() -> impl Strategy<Value = Vec<i64>> {
    proptest::collection::vec(prop_oneof![4 => -1i64..=1, 1 => 2i64..=6], 1..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn rho_engines_agree((exps, window) in exponents()) {
        let limits = EngineLimits::default();
        let brute = rho_raw_count(&exps, window, RhoEngine::Brute, &limits).unwrap();
        let mitm = rho_raw_count(&exps, window, RhoEngine::Mitm, &limits).unwrap();
        prop_assert_eq!(brute, mitm);
    }

    #[test]
    fn tau_engines_agree(vals in values(20)) {
        let brute = tau_distinct_brute(&vals);
        prop_assert_eq!(tau_distinct_bitset(&vals, &mut Bitset::default()).unwrap(), brute);
        let tight = EngineLimits { tau_dense_max_bits: 256, ..EngineLimits::default() };
        prop_assert_eq!(tau_distinct_split(&vals, &tight, &mut Bitset::default()).unwrap(), brute);
    }

    #[test]
    fn subset_sum_matches_enumeration(vals in values(20), pick in 0.0f64..1.1) {
        let total: u64 = vals.iter().sum();
        let target = (total as f64 * pick) as u64;
        let expect = all_sums(&vals).contains(&target);
        prop_assert_eq!(subset_sum_hits(&vals, target).unwrap(), expect);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn r_and_t_match_rescan(inc in upper_increments(), lower in any::<bool>()) {
        let (kind, inc) = if lower {
            (WalkKind::Lower, inc.iter().map(|x| -x).collect::<Vec<_>>())
        } else {
            (WalkKind::Upper, inc)
        };
        let w = Walk::from_increments(kind, &inc).unwrap();
        let p = WalkParams::default();
        let l = w.len();
        let r = (1u64..).find(|&r| (1..=l).all(|i| w.xi(i).unsigned_abs() as f64 <= r as f64 * (i as f64).powf(p.kappa))).unwrap();
        prop_assert_eq!(r_bounded_index(&w, l, p).unwrap(), r);
        let t = (0u64..).find(|&t| (0..=l).all(|j| {
            let b = w.beta(j) as f64;
            let jf = j as f64;
            -(t as f64) + jf.powf(0.5 - p.eta) <= b && b <= t as f64 + jf.powf(0.5 + p.eta)
        })).unwrap();
        prop_assert_eq!(t_positive_index(&w, l, p).unwrap(), t);
    }

    #[test]
    fn processes_recover_their_walks(inc in upper_increments(), seed in any::<u64>()) {
        let mut s = StreamSeed::new(seed, 0).stream();
        let up = Walk::from_increments(WalkKind::Upper, &inc).unwrap();
        prop_assert_eq!(sample_conditioned_upper(&up, &mut s).unwrap().recover_walk(), up);
        let neg: Vec<i64> = inc.iter().map(|x| -x).collect();
        let low = Walk::from_increments(WalkKind::Lower, &neg).unwrap();
        prop_assert_eq!(sample_conditioned_lower(&low, &mut s).unwrap().recover_walk(), low);
    }

    #[test]
    fn tau_star_is_shifted_tau(inc in proptest::collection::vec(-3i64..=1, 1..14), seed in any::<u64>()) {
        let w = Walk::from_increments(WalkKind::Lower, &inc).unwrap();
        let proc = sample_conditioned_lower(&w, &mut StreamSeed::new(seed, 1).stream()).unwrap();
        let mut prev = f64::INFINITY;
        for ell in 0..=w.len() {
            let j = (ell as i64 - w.beta(ell)) as usize;
            prop_assert_eq!(tau_star(&proc, ell).unwrap(), tau_unstar(&proc, j).unwrap());
            let t = tau_unstar(&proc, j).unwrap();
            prop_assert!(t > 0.0 && t <= 1.0);
            prop_assert!(t <= prev || j == 0);
            prev = t;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn invariant_set_probability_is_symmetric(n in 1u64..=24, frac in 0.0f64..=1.0) {
        let k = (n as f64 * frac).round() as u64;
        prop_assert_eq!(i_nk_rational(n, k).unwrap(), i_nk_rational(n, n - k).unwrap());
    }
}

#[test]
fn reversal_symmetry() {
    let plan = McPlan::new(5, 2_000_000);
    let tv = reversal_symmetry_tv(40, &plan);
    assert!(tv <= 0.005, "{tv}");
}
