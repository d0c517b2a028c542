//! Monte Carlo checks against exact values, at 4 standard errors.

mod common;

use common::*;
use gwlab::chain::{batch_fold, batch_simulate, ChainConfig, Trajectory};
use gwlab::couplings::Coupler;
use gwlab::exact::{extinction_by, law_at};
use gwlab::rng::derive_seed;
use gwlab::stats::frequency_se_against;
use gwlab::{OffspringLaw, Pmf};

const RUNS: u64 = 20_000;

fn within(hits: u64, runs: u64, p: f64) -> bool {
    let est = hits as f64 / runs as f64;
    (est - p).abs() <= 4.0 * frequency_se_against(hits, runs, p) + 1e-12
}

#[test]
fn mean_population_grows_like_m_to_the_t() {
    for (name, law, n, t) in [
        ("1/4 d0 + 3/4 d2", pairs(&[(0, 0.25), (2, 0.75)]), 1u64, 8usize),
        ("poisson(0.8)", OffspringLaw::poisson(0.8).unwrap(), 3, 6),
        ("1/2 d1 + 1/2 d2", pairs(&[(1, 0.5), (2, 0.5)]), 2, 5),
    ] {
        let config = ChainConfig::new(law.clone(), n, t).with_seed(11);
        let stats = batch_simulate(&config, RUNS, None).unwrap();
        let expected = n as f64 * law.mean().value.powi(t as i32);
        let got = stats.mean_size(t);
        let se = stats.mean_size_se(t);
        assert!((got - expected).abs() <= 4.0 * se, "{name}: {got} vs {expected} (se {se})");
    }
}

#[test]
fn extinction_from_several_ancestors_matches_power() {
    let law = pairs(&[(0, 0.5), (2, 0.5)]);
    for n in 1..=3u64 {
        let config = ChainConfig::new(law.clone(), n, 10).with_seed(derive_seed(5, n));
        let stats = batch_simulate(&config, RUNS, None).unwrap();
        let p = extinct_by_oracle(&law, n as u32, 10);
        assert!(within(stats.extinct_by(10), RUNS, p), "n = {n}");
    }
}

#[test]
fn supercritical_extinction_frequency_near_one_third() {
    let law = pairs(&[(0, 0.25), (2, 0.75)]);
    let config = ChainConfig::new(law, 1, 60).with_seed(3);
    let stats = batch_simulate(&config, RUNS, None).unwrap();
    assert!(within(stats.extinct_by(60), RUNS, two_point_q(0.25, 0.75)));
}

#[test]
fn survival_past_three_matches_exact() {
    let law = pairs(&[(0, 0.75), (2, 0.25)]);
    let config = ChainConfig::new(law.clone(), 1, 3).with_seed(17);
    let stats = batch_simulate(&config, RUNS, None).unwrap();
    let p = 1.0 - extinct_by_oracle(&law, 1, 3);
    assert!(within(stats.survival_count_at(3), RUNS, p));
}

#[test]
fn event_predicate_counts_match_fold() {
    let law = OffspringLaw::poisson(1.1).unwrap();
    let config = ChainConfig::new(law.clone(), 2, 6).with_seed(23);
    let pred = |tr: &Trajectory| tr.size_at(6).is_some_and(|y| y >= 4);
    let stats = batch_simulate(&config, RUNS, Some(&pred)).unwrap();
    let folded = batch_fold(&config, RUNS, || 0u64, |acc, tr| acc + pred(tr) as u64, |a, b| a + b)
        .unwrap();
    assert_eq!(stats.event_count, folded);
    let exact = law_at(&Pmf::delta(2, 1024), &law, 6, 1024).table_mass_from(4);
    assert!(within(folded, RUNS, exact));
}

fn coupled_hits(mut f: impl FnMut(u64) -> bool) -> u64 {
    (0..RUNS).filter(|&i| f(derive_seed(99, i))).count() as u64
}

#[test]
fn block_chain_marginal_is_galton_watson() {
    let law = pairs(&[(0, 0.25), (2, 0.75)]);
    let coupler = Coupler::new(&law).unwrap();
    // N = 1, a = 2: blocks reaching 2 are exactly the individuals with 2 children
    let block_law = pairs(&[(0, 0.25), (2, 0.75)]);
    let hits = coupled_hits(|s| coupler.block_minorant(1, 2.0, 6, s).unwrap().lower.tau.is_some());
    assert!(within(hits, RUNS, extinct_by_oracle(&block_law, 1, 6)));

    // N = 2, a = 2: M has law (1 - q)δ_0 + qδ_2 with q = P(X_1 + X_2 ≥ 4)
    let q = 0.75 * 0.75;
    let block_law = pairs(&[(0, 1.0 - q), (2, q)]);
    let hits = coupled_hits(|s| coupler.block_minorant(2, 2.0, 5, s).unwrap().lower.tau.is_some());
    assert!(within(hits, RUNS, extinct_by_oracle(&block_law, 1, 5)));
}

#[test]
fn thinned_marginal_is_thinned_law() {
    let law = pairs(&[(0, 0.25), (2, 0.75)]);
    let coupler = Coupler::new(&law).unwrap();
    let p = 0.7;
    let thinned = law.thin(p).unwrap();
    let hits = coupled_hits(|s| coupler.thinning(p, 2, 6, s).unwrap().lower.tau.is_some());
    let exact = extinction_by(&Pmf::delta(2, 1024), &thinned, 6, 1024).lower;
    assert!(within(hits, RUNS, exact));
    assert!((exact - extinct_by_oracle(&thinned, 2, 6)).abs() < 1e-12);
}

#[test]
fn truncated_marginal_is_truncated_law() {
    let law = OffspringLaw::poisson(1.5).unwrap();
    let coupler = Coupler::new(&law).unwrap();
    let truncated = law.truncate(2);
    let hits = coupled_hits(|s| coupler.truncation(2, 1, 6, s).unwrap().lower.tau.is_some());
    assert!(within(hits, RUNS, extinct_by_oracle(&truncated, 1, 6)));
}

#[test]
fn superposition_has_law_from_two() {
    let law = pairs(&[(0, 0.5), (2, 0.5)]);
    let coupler = Coupler::new(&law).unwrap();
    let mut extinct = 0u64;
    let mut at_least_four = 0u64;
    for i in 0..RUNS {
        let (x, y, z) = coupler.superposition(4, derive_seed(7, i)).unwrap();
        for t in 0..=4 {
            if let (Some(a), Some(b)) = (x.size_at(t), y.size_at(t)) {
                assert_eq!(z.size_at(t), Some(a + b));
            }
        }
        extinct += z.tau.is_some() as u64;
        at_least_four += z.size_at(4).is_some_and(|v| v >= 4) as u64;
    }
    let exact = naive_law_at(law.probs(), 2, 4);
    assert!(within(extinct, RUNS, exact[0]));
    assert!(within(at_least_four, RUNS, exact[4..].iter().sum()));
}
