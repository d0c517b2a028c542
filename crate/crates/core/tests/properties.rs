mod common;

use common::*;
use gwlab::exact::{extinction_by, law_at, skeleton_law, sum_law};
use gwlab::{convolve, convolve_power, OffspringLaw, Pmf};
use proptest::prelude::*;

fn law_strategy(max_len: usize) -> impl Strategy<Value = OffspringLaw> {
    prop::collection::vec(0.0f64..1.0, 1..=max_len).prop_filter_map("zero weight", |w| {
        let total: f64 = w.iter().sum();
        if total < 1e-3 {
            return None;
        }
        OffspringLaw::from_probs(w.iter().map(|x| x / total).collect()).ok()
    })
}

fn pmf_strategy(max_len: usize, cap: usize) -> impl Strategy<Value = Pmf> {
    law_strategy(max_len).prop_map(move |l| l.to_pmf(cap))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn convolution_conserves_mass(a in pmf_strategy(8, 16), b in pmf_strategy(8, 16)) {
        let c = convolve(&a, &b, 16);
        prop_assert!((c.total_mass() - 1.0).abs() < 1e-12);
        prop_assert!(c.probs().len() <= 17);
    }

    #[test]
    fn convolution_matches_naive(a in pmf_strategy(8, 64), b in pmf_strategy(8, 64)) {
        let c = convolve(&a, &b, 64);
        prop_assert_eq!(c.tail_mass(), 0.0);
        prop_assert!(max_gap(c.probs(), &naive_convolve(a.probs(), b.probs())) < 1e-15);
    }

    #[test]
    fn propagation_conserves_mass(law in law_strategy(5), n in 1usize..4, t in 0usize..6) {
        let pmf = law_at(&Pmf::delta(n, 64), &law, t, 64);
        prop_assert!((pmf.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn law_at_matches_brute_force(law in law_strategy(4), n in 1usize..3, t in 0usize..4) {
        let pmf = law_at(&Pmf::delta(n, 4096), &law, t, 4096);
        let naive = naive_law_at(law.probs(), n, t);
        prop_assert!(max_gap(pmf.probs(), &naive) < 1e-12);
    }

    #[test]
    fn truncation_is_idempotent(law in law_strategy(10), level in 0usize..12) {
        let once = law.truncate(level);
        prop_assert_eq!(once.truncate(level), once.clone());
        prop_assert!(once.max_support() <= level);
        prop_assert!((once.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn truncated_mean_is_monotone(law in law_strategy(10), l1 in 0usize..12, l2 in 0usize..12) {
        let (lo, hi) = (l1.min(l2), l1.max(l2));
        let m_lo = law.truncate(lo).mean().value;
        let m_hi = law.truncate(hi).mean().value;
        prop_assert!(m_lo <= m_hi + 1e-12);
        prop_assert!(m_hi <= law.mean().value + 1e-12);
    }

    #[test]
    fn thinning_scales_mean(law in law_strategy(8), p in 0.0f64..=1.0) {
        let thinned = law.thin(p).unwrap();
        prop_assert!((thinned.mean().value - p * law.mean().value).abs() < 1e-12);
        prop_assert!((thinned.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn convolution_powers_add(law in law_strategy(4), k1 in 0u64..6, k2 in 0u64..6) {
        let cap = 64;
        let joint = convolve_power(&law, k1 + k2, cap);
        let split = convolve(&convolve_power(&law, k1, cap), &convolve_power(&law, k2, cap), cap);
        prop_assert!(max_gap(joint.probs(), split.probs()) < 1e-10);
    }

    #[test]
    fn superposition_routes_agree(
        law in law_strategy(4),
        a in pmf_strategy(3, 256),
        b in pmf_strategy(3, 256),
        t in 0usize..4,
    ) {
        let s = sum_law(&a, &b, &law, t, 256).unwrap();
        prop_assert!((s.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn extinction_from_n_is_a_power(law in law_strategy(4), n in 1u32..5, t in 0usize..8) {
        let cap = 1024;
        let one = extinction_by(&Pmf::delta(1, cap), &law, t, cap);
        let many = extinction_by(&Pmf::delta(n as usize, cap), &law, t, cap);
        prop_assert!((many.lower - one.lower.powi(n as i32)).abs() < 1e-10);
        prop_assert!((one.lower - extinct_by_oracle(&law, 1, t)).abs() < 1e-12);
    }

    #[test]
    fn skeleton_law_is_consistent(law in law_strategy(3), t in 1usize..3) {
        let skeleton = skeleton_law(&law, t, 512).unwrap();
        let direct = naive_law_at(law.probs(), 1, t);
        prop_assert!(max_gap(skeleton.probs(), &direct) < 1e-12);
    }
}
