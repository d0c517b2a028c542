//! Pairs of chains built on one shared array of offspring draws.
//!
//! Generation `n` consumes draws `X_1^n, X_2^n, ...` lazily and in index
//! order from stream 0 of the path seed. The upper chain reads indices
//! `1..=Y_n`; the lower chain reads a prefix of the same sequence. Bernoulli
//! marks for thinning come from stream 1, so the offspring draws are the same
//! whatever the thinning probability.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{simulate, ChainConfig, Trajectory, DEFAULT_POPULATION_CAP};
use crate::error::{GwError, Result};
use crate::offspring::{OffspringLaw, Sampler};
use crate::rng::{derive_seed, stream};

/// Declared pathwise order between the two chains of a [`CoupledPath`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    /// `upper_n ≥ factor · lower_n`.
    ScaledDominates { factor: u64 },
    /// `lower_n ≤ upper_n`.
    Dominates,
}

impl Relation {
    pub fn holds(&self, upper: u64, lower: u64) -> bool {
        match *self {
            Relation::ScaledDominates { factor } => {
                lower.checked_mul(factor).is_some_and(|v| upper >= v)
            }
            Relation::Dominates => lower <= upper,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoupledPath {
    pub upper: Trajectory,
    pub lower: Trajectory,
    pub relation: Relation,
    pub shared_seed: u64,
}

impl CoupledPath {
    /// First index at which the declared relation fails, if any.
    pub fn first_violation(&self) -> Option<usize> {
        let len = self.upper.sizes.len().max(self.lower.sizes.len());
        (0..len).find(|&t| match (self.upper.size_at(t), self.lower.size_at(t)) {
            (Some(u), Some(l)) => !self.relation.holds(u, l),
            _ => false,
        })
    }

    /// Both chains equal at every index where both are known.
    pub fn identical(&self) -> bool {
        let len = self.upper.sizes.len().max(self.lower.sizes.len());
        (0..len).all(|t| match (self.upper.size_at(t), self.lower.size_at(t)) {
            (Some(u), Some(l)) => u == l,
            _ => true,
        })
    }

    fn checked(self) -> Result<Self> {
        match self.first_violation() {
            None => Ok(self),
            Some(t) => Err(GwError::InvariantViolation(format!(
                "{:?} fails at n = {t}: upper {:?}, lower {:?} (seed {})",
                self.relation,
                self.upper.size_at(t),
                self.lower.size_at(t),
                self.shared_seed
            ))),
        }
    }
}

/// Builds coupled pairs for one offspring law.
#[derive(Debug, Clone)]
pub struct Coupler {
    law: OffspringLaw,
    sampler: Sampler,
    /// Paths whose upper chain exceeds this are stopped and left censored.
    pub population_cap: u64,
}

fn add(total: u64, x: u64, parents: u64) -> Result<u64> {
    total.checked_add(x).ok_or(GwError::Overflow { parents })
}

impl Coupler {
    pub fn new(law: &OffspringLaw) -> Result<Self> {
        Ok(Coupler {
            sampler: law.sampler()?,
            law: law.clone(),
            population_cap: DEFAULT_POPULATION_CAP,
        })
    }

    pub fn with_population_cap(mut self, cap: u64) -> Self {
        self.population_cap = cap;
        self
    }

    pub fn law(&self) -> &OffspringLaw {
        &self.law
    }

    /// Two independent chains from `δ_1` and their pointwise sum.
    pub fn superposition(
        &self,
        t: usize,
        seed: u64,
    ) -> Result<(Trajectory, Trajectory, Trajectory)> {
        if t < 1 {
            return Err(GwError::InvalidParameter("horizon must be >= 1".into()));
        }
        let config = |i| {
            ChainConfig::new(self.law.clone(), 1, t)
                .with_population_cap(self.population_cap)
                .with_seed(derive_seed(seed, i))
        };
        let x = simulate(&config(0))?;
        let y = simulate(&config(1))?;
        let mut sizes = Vec::with_capacity(t + 1);
        for k in 0..=t {
            match (x.size_at(k), y.size_at(k)) {
                (Some(a), Some(b)) => sizes.push(a + b),
                _ => break,
            }
        }
        let capped = x.cap_exceeded || y.cap_exceeded;
        let sum = Trajectory::from_sizes(sizes, capped, seed);
        Ok((x, y, sum))
    }

    /// The block chain of the survival lemma.
    ///
    /// `Y` starts from `block` individuals and `M` from 1. At generation `n`
    /// the first `block · M_n` draws are cut into consecutive blocks of
    /// `block`; each block whose sum reaches `a · block` contributes `a` to
    /// `M_{n+1}`. Asserts `Y_n ≥ block · M_n` at every step.
    pub fn block_minorant(&self, block: u64, a: f64, t: usize, seed: u64) -> Result<CoupledPath> {
        if block < 1 {
            return Err(GwError::InvalidParameter("block size must be >= 1".into()));
        }
        let a = integer_rate(a)?;
        let threshold = a
            .checked_mul(block)
            .ok_or(GwError::InvalidParameter("a · N overflows".into()))?;
        let mut rng = stream(seed, 0);
        let mut y = block;
        let mut m = 1u64;
        let mut ys = vec![y];
        let mut ms = vec![m];
        let mut capped = false;
        for _ in 0..t {
            if y == 0 {
                break;
            }
            let in_blocks = block.saturating_mul(m);
            let (mut y_next, mut m_next, mut block_sum) = (0u64, 0u64, 0u64);
            for i in 1..=y {
                let x = self.sampler.draw(&mut rng);
                y_next = add(y_next, x, y)?;
                if i <= in_blocks {
                    block_sum = add(block_sum, x, y)?;
                    if i % block == 0 {
                        if block_sum >= threshold {
                            m_next = add(m_next, a, y)?;
                        }
                        block_sum = 0;
                    }
                }
            }
            y = y_next;
            m = m_next;
            ys.push(y);
            ms.push(m);
            if y > self.population_cap {
                capped = true;
                break;
            }
        }
        CoupledPath {
            upper: Trajectory::from_sizes(ys, capped, seed),
            lower: Trajectory::from_sizes(ms, capped, seed),
            relation: Relation::ScaledDominates { factor: block },
            shared_seed: seed,
        }
        .checked()
    }

    /// `Y` and its Bernoulli(`p`) thinning `Y^p`, both from `initial`.
    ///
    /// `Y^p_{n+1} = Σ_{i ≤ Y^p_n} B_i^n X_i^n` on the draws that also drive
    /// `Y`. Asserts `Y^p_n ≤ Y_n`; [`CoupledPath::identical`] reports whether
    /// the two never separated.
    pub fn thinning(&self, p: f64, initial: u64, t: usize, seed: u64) -> Result<CoupledPath> {
        if !(0.0..=1.0).contains(&p) {
            return Err(GwError::InvalidParameter(format!(
                "thinning probability {p} not in [0,1]"
            )));
        }
        let mut draws = stream(seed, 0);
        let mut marks = stream(seed, 1);
        let mut y = initial;
        let mut yp = initial;
        let mut ys = vec![y];
        let mut yps = vec![yp];
        let mut capped = y > self.population_cap;
        for _ in 0..t {
            if y == 0 || capped {
                break;
            }
            let (mut y_next, mut yp_next) = (0u64, 0u64);
            for i in 1..=y {
                let x = self.sampler.draw(&mut draws);
                y_next = add(y_next, x, y)?;
                if i <= yp && marks.random::<f64>() < p {
                    yp_next = add(yp_next, x, y)?;
                }
            }
            y = y_next;
            yp = yp_next;
            ys.push(y);
            yps.push(yp);
            capped = y > self.population_cap;
        }
        CoupledPath {
            upper: Trajectory::from_sizes(ys, capped, seed),
            lower: Trajectory::from_sizes(yps, capped, seed),
            relation: Relation::Dominates,
            shared_seed: seed,
        }
        .checked()
    }

    /// `Y` driven by `X_i^n` and `Z` driven by `min(X_i^n, level)`, same start.
    pub fn truncation(&self, level: u64, initial: u64, t: usize, seed: u64) -> Result<CoupledPath> {
        let mut rng = stream(seed, 0);
        let mut y = initial;
        let mut z = initial;
        let mut ys = vec![y];
        let mut zs = vec![z];
        let mut capped = y > self.population_cap;
        for _ in 0..t {
            if y == 0 || capped {
                break;
            }
            let (mut y_next, mut z_next) = (0u64, 0u64);
            for i in 1..=y {
                let x = self.sampler.draw(&mut rng);
                y_next = add(y_next, x, y)?;
                if i <= z {
                    z_next = add(z_next, x.min(level), y)?;
                }
            }
            y = y_next;
            z = z_next;
            ys.push(y);
            zs.push(z);
            capped = y > self.population_cap;
        }
        CoupledPath {
            upper: Trajectory::from_sizes(ys, capped, seed),
            lower: Trajectory::from_sizes(zs, capped, seed),
            relation: Relation::Dominates,
            shared_seed: seed,
        }
        .checked()
    }
}

/// Accepts integral `a ≥ 1` only; the block chain must stay integer-valued.
fn integer_rate(a: f64) -> Result<u64> {
    if !a.is_finite() || a < 1.0 || a.fract() != 0.0 || a > u32::MAX as f64 {
        return Err(GwError::InvalidParameter(format!(
            "block rate a = {a} must be an integer >= 1"
        )));
    }
    Ok(a as u64)
}

pub fn couple_superposition(
    law: &OffspringLaw,
    t: usize,
    seed: u64,
) -> Result<(Trajectory, Trajectory, Trajectory)> {
    Coupler::new(law)?.superposition(t, seed)
}

pub fn couple_block_minorant(
    law: &OffspringLaw,
    block: u64,
    a: f64,
    t: usize,
    seed: u64,
) -> Result<CoupledPath> {
    Coupler::new(law)?.block_minorant(block, a, t, seed)
}

pub fn couple_thinning(
    law: &OffspringLaw,
    p: f64,
    initial: u64,
    t: usize,
    seed: u64,
) -> Result<CoupledPath> {
    Coupler::new(law)?.thinning(p, initial, t, seed)
}

pub fn couple_truncation(
    law: &OffspringLaw,
    level: u64,
    initial: u64,
    t: usize,
    seed: u64,
) -> Result<CoupledPath> {
    Coupler::new(law)?.truncation(level, initial, t, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law(pairs: &[(usize, f64)]) -> OffspringLaw {
        OffspringLaw::from_pairs(pairs).unwrap()
    }

    #[test]
    fn superposition_examples() {
        let (x, y, s) = couple_superposition(&OffspringLaw::delta(1), 5, 1).unwrap();
        assert_eq!(x.sizes, vec![1; 6]);
        assert_eq!(y.sizes, vec![1; 6]);
        assert_eq!(s.sizes, vec![2; 6]);
        let (_, _, s) = couple_superposition(&OffspringLaw::delta(0), 5, 1).unwrap();
        assert_eq!(s.sizes, vec![2, 0]);
        assert_eq!(s.tau, Some(1));
        assert!(couple_superposition(&OffspringLaw::delta(0), 0, 1).is_err());
    }

    #[test]
    fn superposition_sums_pointwise() {
        let nu = law(&[(0, 0.3), (1, 0.3), (3, 0.4)]);
        for seed in 0..200 {
            let (x, y, s) = couple_superposition(&nu, 8, seed).unwrap();
            for k in 0..=8 {
                if let Some(v) = s.size_at(k) {
                    assert_eq!(v, x.size_at(k).unwrap() + y.size_at(k).unwrap());
                }
            }
        }
    }

    #[test]
    fn block_minorant_deterministic_doubling() {
        let c = couple_block_minorant(&OffspringLaw::delta(2), 1, 2.0, 10, 0).unwrap();
        let pow: Vec<u64> = (0..=10).map(|n| 1u64 << n).collect();
        assert_eq!(c.upper.sizes, pow);
        assert_eq!(c.lower.sizes, pow);
    }

    #[test]
    fn block_minorant_extinct_law() {
        let c = couple_block_minorant(&OffspringLaw::delta(0), 3, 2.0, 10, 0).unwrap();
        assert_eq!(c.upper.sizes, vec![3, 0]);
        assert_eq!(c.lower.sizes, vec![1, 0]);
    }

    #[test]
    fn block_minorant_rejects_fractional_rate() {
        let nu = law(&[(0, 0.25), (2, 0.75)]);
        assert!(matches!(
            couple_block_minorant(&nu, 3, 1.5, 5, 0),
            Err(GwError::InvalidParameter(_))
        ));
        assert!(couple_block_minorant(&nu, 3, 0.0, 5, 0).is_err());
        assert!(couple_block_minorant(&nu, 0, 2.0, 5, 0).is_err());
    }

    #[test]
    fn thinning_extremes() {
        let nu = law(&[(0, 0.25), (2, 0.75)]);
        for seed in 0..50 {
            let c = couple_thinning(&nu, 1.0, 2, 10, seed).unwrap();
            assert!(c.identical());
            assert_eq!(c.upper.sizes, c.lower.sizes);
            let c = couple_thinning(&nu, 0.0, 2, 10, seed).unwrap();
            assert_eq!(c.lower.size_at(1), Some(0));
        }
        assert!(couple_thinning(&nu, 1.5, 2, 10, 0).is_err());
    }

    #[test]
    fn thinning_shares_offspring_draws() {
        // the unthinned chain does not depend on p
        let nu = law(&[(0, 0.25), (1, 0.25), (2, 0.5)]);
        let a = couple_thinning(&nu, 0.3, 4, 10, 9).unwrap();
        let b = couple_thinning(&nu, 0.8, 4, 10, 9).unwrap();
        assert_eq!(a.upper, b.upper);
    }

    #[test]
    fn truncation_examples() {
        let nu = law(&[(0, 0.5), (3, 0.5)]);
        for seed in 0..50 {
            let c = couple_truncation(&nu, 3, 2, 6, seed).unwrap();
            assert!(c.identical());
            let c = couple_truncation(&nu, 0, 2, 6, seed).unwrap();
            assert_eq!(c.lower.size_at(1), Some(0));
        }
    }

    #[test]
    fn relation_detects_violation() {
        let bad = CoupledPath {
            upper: Trajectory::from_sizes(vec![2, 3], false, 0),
            lower: Trajectory::from_sizes(vec![1, 2], false, 0),
            relation: Relation::ScaledDominates { factor: 2 },
            shared_seed: 0,
        };
        assert_eq!(bad.first_violation(), Some(1));
        assert!(matches!(bad.checked(), Err(GwError::InvariantViolation(_))));
    }

    #[test]
    fn population_cap_censors_coupled_paths() {
        let c = Coupler::new(&OffspringLaw::delta(2))
            .unwrap()
            .with_population_cap(100);
        let p = c.thinning(0.5, 1, 30, 0).unwrap();
        assert!(p.upper.cap_exceeded);
        assert_eq!(p.upper.last_size(), 128);
    }
}
