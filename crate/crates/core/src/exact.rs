//! Exact, cap-truncated laws of `Y_n`.
//!
//! Everything here is deterministic pmf arithmetic and serves as the oracle
//! for the Monte Carlo side. Mass that leaves the represented support is kept
//! in `tail_mass` and never comes back, so table entries are exact and
//! probabilities read from the table are certified lower bounds.

use serde::{Deserialize, Serialize};

use crate::error::{GwError, Result};
use crate::offspring::{convolve, convolve_power, OffspringLaw, Pmf};

/// Tolerance for the pointwise identities checked below the cap.
pub const IDENTITY_TOL: f64 = 1e-10;

/// Fixed-point iteration budget.
pub const MAX_ITERATIONS: usize = 1_000_000;

/// Law of the next generation: `Σ_k pop(k) ν^{*k}`.
///
/// Convolution powers are built incrementally, one multiplication by `ν` per
/// support point of `pop`.
pub fn propagate(pop: &Pmf, law: &OffspringLaw, cap: usize) -> Pmf {
    let nu = law.to_pmf(cap);
    let mut out = vec![0.0; 1];
    let mut tail = pop.tail_mass();
    let mut power = Pmf::delta(0, cap);
    for (k, &w) in pop.probs().iter().enumerate() {
        if k > 0 {
            power = convolve(&power, &nu, cap);
        }
        if w == 0.0 {
            continue;
        }
        let probs = power.probs();
        if out.len() < probs.len() {
            out.resize(probs.len(), 0.0);
        }
        for (o, p) in out.iter_mut().zip(probs) {
            *o += w * p;
        }
        tail += w * power.tail_mass();
    }
    Pmf::from_parts(out, tail, cap)
}

/// `t`-fold [`propagate`]; `t = 0` returns `initial` under `cap`.
pub fn law_at(initial: &Pmf, law: &OffspringLaw, t: usize, cap: usize) -> Pmf {
    let mut pop = initial.with_cap(cap);
    for _ in 0..t {
        pop = propagate(&pop, law, cap);
    }
    pop
}

/// Laws at times `0..=t`.
pub fn laws_through(initial: &Pmf, law: &OffspringLaw, t: usize, cap: usize) -> Vec<Pmf> {
    let mut out = Vec::with_capacity(t + 1);
    out.push(initial.with_cap(cap));
    for _ in 0..t {
        let next = propagate(out.last().unwrap(), law, cap);
        out.push(next);
    }
    out
}

/// Law of `Y_t` restricted to paths whose running maximum stays `≤ level`.
///
/// Every path that exceeds `level` before or at `t` ends up in `tail_mass`.
pub fn law_at_restricted(initial: &Pmf, law: &OffspringLaw, t: usize, level: usize) -> Pmf {
    law_at(initial, law, t, level)
}

/// `P(τ ≤ t)` is in `[lower, lower + tail]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtinctionBound {
    pub lower: f64,
    pub tail: f64,
}

impl ExtinctionBound {
    pub fn upper(&self) -> f64 {
        (self.lower + self.tail).min(1.0)
    }
}

pub fn extinction_by(initial: &Pmf, law: &OffspringLaw, t: usize, cap: usize) -> ExtinctionBound {
    let pmf = law_at(initial, law, t, cap);
    ExtinctionBound {
        lower: pmf.mass_at(0),
        tail: pmf.tail_mass(),
    }
}

/// Bounds on `P(Y ≥ x)` from a pmf: the table part is certain, the tail may
/// or may not be above `x`.
pub fn prob_at_least(pmf: &Pmf, x: usize) -> (f64, f64) {
    let lower = pmf.table_mass_from(x);
    (lower, (lower + pmf.tail_mass()).min(1.0))
}

/// Smallest fixed point of the generating function, by monotone iteration
/// `q ← Σ_j ν(j) q^j` from `q = 0`.
///
/// Stops when successive iterates differ by less than `tol`. Near criticality
/// the iterates approach the root like `1/k`, so the returned value can be
/// further from the root than `tol`.
pub fn extinction_probability(law: &OffspringLaw, tol: f64) -> Result<f64> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(GwError::InvalidParameter(format!("tolerance {tol}")));
    }
    let mut q = 0.0;
    for _ in 0..MAX_ITERATIONS {
        let next = law.pgf(q).clamp(0.0, 1.0);
        if (next - q).abs() < tol {
            return Ok(next);
        }
        q = next;
    }
    Err(GwError::NoConvergence {
        iterations: MAX_ITERATIONS,
        last: q,
    })
}

/// `P(τ < ∞)` from `initial`, by propagating until the extinct mass moves by
/// less than `tol` in one generation.
///
/// Independent of the generating function; used to cross-check
/// `P^n(τ < ∞) = q^n`.
pub fn extinction_limit(
    initial: &Pmf,
    law: &OffspringLaw,
    tol: f64,
    max_generations: usize,
    cap: usize,
) -> Result<ExtinctionBound> {
    let mut pop = initial.with_cap(cap);
    let mut last = pop.mass_at(0);
    for _ in 0..max_generations {
        pop = propagate(&pop, law, cap);
        let now = pop.mass_at(0);
        if (now - last).abs() < tol {
            return Ok(ExtinctionBound {
                lower: now,
                tail: pop.tail_mass(),
            });
        }
        last = now;
    }
    Err(GwError::NoConvergence {
        iterations: max_generations,
        last,
    })
}

fn pointwise_gap(a: &Pmf, b: &Pmf) -> (usize, f64) {
    let len = a.probs().len().max(b.probs().len());
    (0..len)
        .map(|k| (k, (a.mass_at(k) - b.mass_at(k)).abs()))
        .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best })
}

fn check_agreement(a: &Pmf, b: &Pmf, what: &str) -> Result<()> {
    let (k, gap) = pointwise_gap(a, b);
    let allowed = IDENTITY_TOL + a.tail_mass().max(b.tail_mass());
    if gap > allowed {
        return Err(GwError::InvariantViolation(format!(
            "{what}: pointwise gap {gap:e} at {k} exceeds {allowed:e}"
        )));
    }
    Ok(())
}

/// Law of `X_t + Y_t` for independent chains from `a` and `b` with the same
/// offspring law.
///
/// Computed both as the convolution of the two time-`t` laws and as the
/// time-`t` law of a single chain started from `a * b`; the two must agree
/// pointwise to [`IDENTITY_TOL`] plus the larger tail budget.
pub fn sum_law(a: &Pmf, b: &Pmf, law: &OffspringLaw, t: usize, cap: usize) -> Result<Pmf> {
    let separate = convolve(&law_at(a, law, t, cap), &law_at(b, law, t, cap), cap);
    let joint = law_at(&convolve(a, b, cap), law, t, cap);
    check_agreement(&separate, &joint, "superposition")?;
    Ok(joint)
}

/// Reproduction law of the skeleton `(Y_{Tn})_n`: the law of `Y_T` from one
/// individual.
///
/// Also checks `law_at(δ_k, ν, T) = skeleton^{*k}` for `k ≤ 5`.
pub fn skeleton_law(law: &OffspringLaw, t: usize, cap: usize) -> Result<OffspringLaw> {
    if t < 1 {
        return Err(GwError::InvalidParameter("skeleton step must be >= 1".into()));
    }
    let one = law_at(&Pmf::delta(1, cap), law, t, cap);
    let skeleton = OffspringLaw::from_pmf(&one);
    for k in 1..=5usize {
        let direct = law_at(&Pmf::delta(k, cap), law, t, cap);
        let power = convolve_power(&skeleton, k as u64, cap);
        check_agreement(&direct, &power, &format!("skeleton from {k}"))?;
    }
    Ok(skeleton)
}

/// `φ(k, x) = P^k(Y_1 < x)`, the table mass of `ν^{*k}` strictly below `x`.
pub fn phi(k: u64, x: f64, law: &OffspringLaw, cap: usize) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let below = x.ceil() as usize;
    convolve_power(law, k, cap).mass_below(below)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::offspring::DEFAULT_CAP;

    const CAP: usize = 256;

    fn law(pairs: &[(usize, f64)]) -> OffspringLaw {
        OffspringLaw::from_pairs(pairs).unwrap()
    }

    fn critical() -> OffspringLaw {
        law(&[(0, 0.5), (2, 0.5)])
    }

    fn assert_table(p: &Pmf, expected: &[f64]) {
        for (k, e) in expected.iter().enumerate() {
            assert!(
                (p.mass_at(k) - e).abs() < 1e-15,
                "mass at {k}: {} vs {e}",
                p.mass_at(k)
            );
        }
        assert!(p.probs().len() <= expected.len());
    }

    #[test]
    fn propagate_examples() {
        let nu = critical();
        assert_table(&propagate(&Pmf::delta(0, CAP), &nu, CAP), &[1.0]);
        assert_table(&propagate(&Pmf::delta(1, CAP), &nu, CAP), &[0.5, 0.0, 0.5]);
        assert_table(
            &propagate(&Pmf::delta(2, CAP), &nu, CAP),
            &[0.25, 0.0, 0.5, 0.0, 0.25],
        );
    }

    #[test]
    fn propagate_forwards_tail() {
        let pop = Pmf::new(vec![0.5, 0.25], 0.25, 4).unwrap();
        let next = propagate(&pop, &critical(), 4);
        assert!(next.tail_mass() >= 0.25);
        assert!((next.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn law_at_examples() {
        let nu = critical();
        let init = Pmf::delta(1, CAP);
        assert_eq!(law_at(&init, &nu, 0, CAP), init);
        // two-step tree: 1/2 + 1/2·1/4 at 0, 1/2·1/2 at 2, 1/2·1/4 at 4
        assert_table(&law_at(&init, &nu, 2, CAP), &[0.625, 0.0, 0.25, 0.0, 0.125]);
    }

    #[test]
    fn extinct_mass_is_nondecreasing() {
        let nu = law(&[(0, 0.25), (1, 0.25), (3, 0.5)]);
        let laws = laws_through(&Pmf::delta(1, CAP), &nu, 15, CAP);
        for w in laws.windows(2) {
            assert!(w[1].mass_at(0) >= w[0].mass_at(0));
        }
    }

    #[test]
    fn extinction_by_examples() {
        let one = Pmf::delta(1, CAP);
        assert_eq!(extinction_by(&one, &OffspringLaw::delta(0), 1, CAP).lower, 1.0);
        let sub = law(&[(0, 0.75), (2, 0.25)]);
        assert_eq!(extinction_by(&one, &sub, 1, CAP).lower, 0.75);
        let sup = law(&[(0, 0.25), (2, 0.75)]);
        let mut prev = 0.0;
        for t in [1, 5, 10, 20] {
            let e = extinction_by(&one, &sup, t, CAP);
            assert!(e.lower <= 1.0 / 3.0 + 1e-15);
            assert!(e.lower >= prev);
            prev = e.lower;
        }
        assert!(1.0 / 3.0 - prev < 1e-5);
    }

    #[test]
    fn extinction_probability_examples() {
        let q = extinction_probability(&critical(), 1e-10).unwrap();
        // slow 1/k convergence at criticality
        assert!((q - 1.0).abs() < 1e-4, "{q}");
        let q = extinction_probability(&law(&[(0, 0.25), (2, 0.75)]), 1e-14).unwrap();
        assert!((q - 1.0 / 3.0).abs() < 1e-13);
        let q = extinction_probability(&law(&[(1, 0.5), (2, 0.5)]), 1e-12).unwrap();
        assert_eq!(q, 0.0);
        assert!(extinction_probability(&critical(), 0.0).is_err());
    }

    #[test]
    fn extinction_probability_reports_non_convergence() {
        match extinction_probability(&critical(), 1e-15) {
            Err(GwError::NoConvergence { iterations, last }) => {
                assert_eq!(iterations, MAX_ITERATIONS);
                assert!(last > 0.99 && last < 1.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn extinction_limit_matches_power_of_q() {
        let nu = law(&[(0, 0.25), (2, 0.75)]);
        for n in 1..=4 {
            let b = extinction_limit(&Pmf::delta(n, 512), &nu, 1e-14, 500, 512).unwrap();
            assert!((b.lower - (1.0f64 / 3.0).powi(n as i32)).abs() < 1e-10);
        }
    }

    #[test]
    fn sum_law_examples() {
        let nu = critical();
        let one = Pmf::delta(1, CAP);
        let s = sum_law(&one, &one, &nu, 1, CAP).unwrap();
        assert_table(&s, &[0.25, 0.0, 0.5, 0.0, 0.25]);
        let s0 = sum_law(&one, &Pmf::delta(2, CAP), &nu, 0, CAP).unwrap();
        assert_eq!(s0, Pmf::delta(3, CAP));
        let b = Pmf::new(vec![0.0, 0.5, 0.5], 0.0, CAP).unwrap();
        let s = sum_law(&Pmf::delta(0, CAP), &b, &nu, 3, CAP).unwrap();
        let direct = law_at(&b, &nu, 3, CAP);
        for k in 0..20 {
            assert!((s.mass_at(k) - direct.mass_at(k)).abs() < 1e-15);
        }
    }

    #[test]
    fn skeleton_examples() {
        let nu = critical();
        assert_eq!(skeleton_law(&nu, 1, CAP).unwrap(), nu);
        let s = skeleton_law(&nu, 2, CAP).unwrap();
        assert_eq!(s.probs(), &[0.625, 0.0, 0.25, 0.0, 0.125]);
        assert!(skeleton_law(&nu, 0, CAP).is_err());
    }

    #[test]
    fn skeleton_semigroup() {
        let nu = law(&[(0, 0.3), (1, 0.3), (2, 0.4)]);
        let outer = skeleton_law(&skeleton_law(&nu, 2, CAP).unwrap(), 3, CAP).unwrap();
        let direct = skeleton_law(&nu, 6, CAP).unwrap();
        for k in 0..=CAP {
            assert!((outer.mass_at(k) - direct.mass_at(k)).abs() < 1e-9);
        }
    }

    #[test]
    fn phi_examples() {
        let nu = critical();
        assert_eq!(phi(0, 1.0, &nu, CAP), 1.0);
        assert_eq!(phi(1, 1.0, &nu, CAP), 0.5);
        assert_eq!(phi(1, 3.0, &nu, CAP), 1.0);
        assert_eq!(phi(2, 3.0, &nu, DEFAULT_CAP), 0.75);
        assert_eq!(phi(2, 2.5, &nu, CAP), 0.75);
        assert_eq!(phi(2, 0.0, &nu, CAP), 0.0);
    }

    #[test]
    fn restricted_law_discards_overflow() {
        let nu = critical();
        // from 1 with level 2: paths that reach 4 by t = 2 are discarded
        let r = law_at_restricted(&Pmf::delta(1, 2), &nu, 2, 2);
        assert_table(&r, &[0.625, 0.0, 0.25]);
        assert!((r.tail_mass() - 0.125).abs() < 1e-15);
    }
}
