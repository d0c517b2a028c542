//! Offspring laws and population-size distributions.
//!
//! Both are stored as dense probability tables starting at 0, plus an explicit
//! `tail_mass` for probability that lives beyond the represented support.
//! Arithmetic never moves tail mass back below the cap, so every table entry is
//! exact up to floating-point rounding and all truncation error is accounted
//! for in the tail.

use std::fmt;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Geometric, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{GwError, Result};

/// Representation tolerance on total mass.
pub const MASS_TOL: f64 = 1e-12;

/// Default support cap for pmf arithmetic.
pub const DEFAULT_CAP: usize = 4096;

/// Tail mass above which results carry a [`TailWarning`].
pub const TAIL_WARN: f64 = 1e-6;

/// Table entries smaller than this are moved into the tail. Keeps the
/// convolution loops out of subnormal arithmetic.
pub const PRUNE_FLOOR: f64 = 1e-40;

/// Parametric origin of an infinite-support law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Parametric {
    Poisson { lambda: f64 },
    /// Support {0, 1, ...}, `P(k) = (1 - p)^k p`.
    Geometric { p: f64 },
}

impl Parametric {
    fn mean(&self) -> f64 {
        match *self {
            Parametric::Poisson { lambda } => lambda,
            Parametric::Geometric { p } => (1.0 - p) / p,
        }
    }

    fn variance(&self) -> f64 {
        match *self {
            Parametric::Poisson { lambda } => lambda,
            Parametric::Geometric { p } => (1.0 - p) / (p * p),
        }
    }

    fn pgf(&self, s: f64) -> f64 {
        match *self {
            Parametric::Poisson { lambda } => (lambda * (s - 1.0)).exp(),
            Parametric::Geometric { p } => p / (1.0 - (1.0 - p) * s),
        }
    }

    /// `pmf(k + 1) / pmf(k)`.
    fn ratio(&self, k: usize) -> f64 {
        match *self {
            Parametric::Poisson { lambda } => lambda / (k + 1) as f64,
            Parametric::Geometric { p } => 1.0 - p,
        }
    }
}

impl fmt::Display for Parametric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Parametric::Poisson { lambda } => write!(f, "poisson({lambda})"),
            Parametric::Geometric { p } => write!(f, "geometric({p})"),
        }
    }
}

/// Emitted when an operation leaves more than [`TAIL_WARN`] outside the cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailWarning {
    pub tail_mass: f64,
    pub cap: usize,
}

/// Mean of a law. `upper` is `+inf` when tail mass of unknown location remains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mean {
    pub value: f64,
    pub upper: f64,
}

impl Mean {
    pub fn is_exact(&self) -> bool {
        self.value == self.upper
    }
}

/// Moves entries above `cap` and entries below [`PRUNE_FLOOR`] into the tail,
/// then drops trailing zeros. Returns the mass moved.
fn normalize_table(probs: &mut Vec<f64>, cap: usize) -> f64 {
    let mut moved = 0.0;
    if probs.len() > cap + 1 {
        moved += probs[cap + 1..].iter().sum::<f64>();
        probs.truncate(cap + 1);
    }
    for p in probs.iter_mut() {
        if *p != 0.0 && *p < PRUNE_FLOOR {
            moved += *p;
            *p = 0.0;
        }
    }
    while probs.len() > 1 && *probs.last().unwrap() == 0.0 {
        probs.pop();
    }
    if probs.is_empty() {
        probs.push(0.0);
    }
    moved
}

fn check_entries(probs: &[f64], tail_mass: f64) -> Result<()> {
    if let Some((k, p)) = probs
        .iter()
        .enumerate()
        .find(|(_, p)| !p.is_finite() || **p < 0.0)
    {
        return Err(GwError::InvalidLaw(format!("probability {p} at {k}")));
    }
    if !tail_mass.is_finite() || !(0.0..=1.0 + MASS_TOL).contains(&tail_mass) {
        return Err(GwError::InvalidLaw(format!("tail mass {tail_mass}")));
    }
    let total: f64 = probs.iter().sum::<f64>() + tail_mass;
    if (total - 1.0).abs() > MASS_TOL {
        return Err(GwError::InvalidLaw(format!("mass ≠ 1 (total {total})")));
    }
    Ok(())
}

/// Distribution of a population size under a support cap.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    probs: Vec<f64>,
    tail_mass: f64,
    cap: usize,
}

impl Pmf {
    pub fn new(mut probs: Vec<f64>, tail_mass: f64, cap: usize) -> Result<Self> {
        check_entries(&probs, tail_mass)?;
        let moved = normalize_table(&mut probs, cap);
        Ok(Pmf {
            probs,
            tail_mass: tail_mass + moved,
            cap,
        })
    }

    /// Builds from a computed table without the mass check.
    pub(crate) fn from_parts(mut probs: Vec<f64>, tail_mass: f64, cap: usize) -> Self {
        let moved = normalize_table(&mut probs, cap);
        Pmf {
            probs,
            tail_mass: tail_mass + moved,
            cap,
        }
    }

    pub fn delta(k: usize, cap: usize) -> Self {
        if k > cap {
            return Pmf {
                probs: vec![0.0],
                tail_mass: 1.0,
                cap,
            };
        }
        let mut probs = vec![0.0; k + 1];
        probs[k] = 1.0;
        Pmf {
            probs,
            tail_mass: 0.0,
            cap,
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn max_support(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn mass_at(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum::<f64>() + self.tail_mass
    }

    /// Table mass on `[0, x)`.
    pub fn mass_below(&self, x: usize) -> f64 {
        self.probs.iter().take(x).sum()
    }

    /// Table mass on `[x, cap]`; tail excluded.
    pub fn table_mass_from(&self, x: usize) -> f64 {
        self.probs.iter().skip(x).sum()
    }

    /// Mean over the represented support.
    pub fn table_mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p)
            .sum()
    }

    pub fn tail_warning(&self) -> Option<TailWarning> {
        (self.tail_mass > TAIL_WARN).then_some(TailWarning {
            tail_mass: self.tail_mass,
            cap: self.cap,
        })
    }

    /// Same distribution under a different cap.
    pub fn with_cap(&self, cap: usize) -> Pmf {
        Pmf::from_parts(self.probs.clone(), self.tail_mass, cap)
    }
}

/// A reproduction law on the non-negative integers.
#[derive(Debug, Clone, PartialEq)]
pub struct OffspringLaw {
    probs: Vec<f64>,
    tail_mass: f64,
    descriptor: Option<Parametric>,
}

impl OffspringLaw {
    /// Finite law from a dense table `probs[k] = P(X = k)`.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        Self::with_tail(probs, 0.0)
    }

    /// Finite law from `(value, probability)` pairs; repeated values add up.
    pub fn from_pairs(pairs: &[(usize, f64)]) -> Result<Self> {
        let len = pairs.iter().map(|&(k, _)| k + 1).max().unwrap_or(1);
        let mut probs = vec![0.0; len];
        for &(k, p) in pairs {
            if !p.is_finite() || p < 0.0 {
                return Err(GwError::InvalidLaw(format!("probability {p} at {k}")));
            }
            probs[k] += p;
        }
        Self::from_probs(probs)
    }

    /// Table plus probability mass of unknown location beyond it.
    pub fn with_tail(mut probs: Vec<f64>, tail_mass: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(GwError::InvalidLaw("empty table".into()));
        }
        check_entries(&probs, tail_mass)?;
        while probs.len() > 1 && *probs.last().unwrap() == 0.0 {
            probs.pop();
        }
        Ok(OffspringLaw {
            probs,
            tail_mass,
            descriptor: None,
        })
    }

    pub fn delta(k: usize) -> Self {
        let mut probs = vec![0.0; k + 1];
        probs[k] = 1.0;
        OffspringLaw {
            probs,
            tail_mass: 0.0,
            descriptor: None,
        }
    }

    /// `(1 - q) δ_0 + q δ_a`.
    pub fn two_point(a: usize, q: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&q) {
            return Err(GwError::InvalidParameter(format!("q = {q} not in [0,1]")));
        }
        Self::from_pairs(&[(0, 1.0 - q), (a, q)])
    }

    pub fn poisson(lambda: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(GwError::InvalidParameter(format!("poisson rate {lambda}")));
        }
        if lambda == 0.0 {
            return Ok(Self::delta(0));
        }
        Ok(Self::parametric_table(Parametric::Poisson { lambda }, (-lambda).exp()))
    }

    pub fn geometric(p: f64) -> Result<Self> {
        if !p.is_finite() || p <= 0.0 || p > 1.0 {
            return Err(GwError::InvalidParameter(format!("geometric p = {p}")));
        }
        if p == 1.0 {
            return Ok(Self::delta(0));
        }
        Ok(Self::parametric_table(Parametric::Geometric { p }, p))
    }

    /// Tabulates until the terms drop below 1e-20 past the mode, then sums
    /// the remaining series into the tail.
    fn parametric_table(desc: Parametric, p0: f64) -> Self {
        let mode_guard = desc.mean().ceil() as usize + 1;
        let mut probs = vec![p0];
        let mut term = p0;
        let mut k = 0;
        loop {
            term *= desc.ratio(k);
            k += 1;
            if k > mode_guard && term < 1e-20 {
                break;
            }
            probs.push(term);
        }
        let mut tail = 0.0;
        while term > 0.0 && term >= tail * f64::EPSILON {
            tail += term;
            term *= desc.ratio(k);
            k += 1;
        }
        OffspringLaw {
            probs,
            tail_mass: tail,
            descriptor: Some(desc),
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn descriptor(&self) -> Option<Parametric> {
        self.descriptor
    }

    pub fn mass_at(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    pub fn max_support(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn is_finite_support(&self) -> bool {
        self.tail_mass <= MASS_TOL && self.descriptor.is_none()
    }

    pub fn mean(&self) -> Mean {
        if let Some(d) = self.descriptor {
            let m = d.mean();
            return Mean { value: m, upper: m };
        }
        let value = self
            .probs
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p)
            .sum();
        let upper = if self.tail_mass > 0.0 {
            f64::INFINITY
        } else {
            value
        };
        Mean { value, upper }
    }

    pub fn variance(&self) -> Result<f64> {
        if let Some(d) = self.descriptor {
            return Ok(d.variance());
        }
        if self.tail_mass > MASS_TOL {
            return Err(GwError::VarianceUndefined {
                tail_mass: self.tail_mass,
            });
        }
        let m = self.mean().value;
        Ok(self
            .probs
            .iter()
            .enumerate()
            .map(|(k, p)| (k as f64 - m).powi(2) * p)
            .sum())
    }

    /// Generating function `E[s^X]`. For laws without a descriptor the tail
    /// contributes nothing, giving a lower bound for `s ∈ [0,1]`.
    pub fn pgf(&self, s: f64) -> f64 {
        if let Some(d) = self.descriptor {
            return d.pgf(s);
        }
        self.probs.iter().rev().fold(0.0, |acc, p| acc * s + p)
    }

    /// Law of `min(X, level)`.
    ///
    /// Tail mass with a known parametric origin is tabulated as far as needed.
    /// Tail mass of unknown location is placed at `level`.
    pub fn truncate(&self, level: usize) -> OffspringLaw {
        let mut probs = self.probs.clone();
        let mut tail = self.tail_mass;
        if let Some(d) = self.descriptor {
            while probs.len() <= level && tail > 0.0 {
                let k = probs.len() - 1;
                let next = probs[k] * d.ratio(k);
                if next == 0.0 {
                    break;
                }
                probs.push(next);
                tail = (tail - next).max(0.0);
            }
        }
        let len = if tail > 0.0 {
            level + 1
        } else {
            level.min(probs.len() - 1) + 1
        };
        let mut out = vec![0.0; len];
        for (k, p) in probs.iter().enumerate() {
            out[k.min(level)] += p;
        }
        if tail > 0.0 {
            out[level] += tail;
        }
        while out.len() > 1 && *out.last().unwrap() == 0.0 {
            out.pop();
        }
        OffspringLaw {
            probs: out,
            tail_mass: 0.0,
            descriptor: None,
        }
    }

    /// Law of `B X` with `B ~ Bernoulli(p)` independent of `X`.
    pub fn thin(&self, p: f64) -> Result<OffspringLaw> {
        if !(0.0..=1.0).contains(&p) {
            return Err(GwError::InvalidParameter(format!(
                "thinning probability {p} not in [0,1]"
            )));
        }
        if p == 1.0 {
            return Ok(self.clone());
        }
        if p == 0.0 {
            return Ok(Self::delta(0));
        }
        let mut probs: Vec<f64> = self.probs.iter().map(|q| p * q).collect();
        probs[0] += 1.0 - p;
        Ok(OffspringLaw {
            probs,
            tail_mass: p * self.tail_mass,
            descriptor: None,
        })
    }

    pub fn to_pmf(&self, cap: usize) -> Pmf {
        Pmf::from_parts(self.probs.clone(), self.tail_mass, cap)
    }

    /// Repackages a population-size law as a reproduction law.
    pub fn from_pmf(pmf: &Pmf) -> OffspringLaw {
        let mut probs = pmf.probs.clone();
        while probs.len() > 1 && *probs.last().unwrap() == 0.0 {
            probs.pop();
        }
        OffspringLaw {
            probs,
            tail_mass: pmf.tail_mass,
            descriptor: None,
        }
    }

    /// Preprocessed sampler for repeated draws.
    pub fn sampler(&self) -> Result<Sampler> {
        let kind = match self.descriptor {
            Some(Parametric::Poisson { lambda }) => SamplerKind::Poisson(lambda),
            Some(Parametric::Geometric { p }) => SamplerKind::Geometric(p),
            None => {
                if self.tail_mass > MASS_TOL {
                    return Err(GwError::Unsampleable {
                        tail_mass: self.tail_mass,
                    });
                }
                let total: f64 = self.probs.iter().sum();
                let mut acc = 0.0;
                let cdf = self
                    .probs
                    .iter()
                    .map(|p| {
                        acc += p / total;
                        acc
                    })
                    .collect();
                let atoms = self
                    .probs
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| **p > 0.0)
                    .map(|(k, p)| (k as u64, p / total))
                    .collect();
                SamplerKind::Table { cdf, atoms }
            }
        };
        Ok(Sampler { kind })
    }

    /// One draw from the law.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<u64> {
        Ok(self.sampler()?.draw(rng))
    }
}

impl fmt::Display for OffspringLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(d) = self.descriptor {
            return write!(f, "{d}");
        }
        let mut first = true;
        for (k, p) in self.probs.iter().enumerate().filter(|(_, p)| **p > 0.0) {
            if !first {
                write!(f, ",")?;
            }
            write!(f, "{k}:{p}")?;
            first = false;
        }
        if self.tail_mass > 0.0 {
            write!(f, " (+tail {:e})", self.tail_mass)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Table { cdf: Vec<f64>, atoms: Vec<(u64, f64)> },
    Poisson(f64),
    Geometric(f64),
}

/// Exact sampler for an [`OffspringLaw`].
#[derive(Debug, Clone)]
pub struct Sampler {
    kind: SamplerKind,
}

/// Below this count, sums are drawn one individual at a time.
pub const MULTINOMIAL_THRESHOLD: u64 = 64;

impl Sampler {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match &self.kind {
            SamplerKind::Table { cdf, .. } => {
                let u: f64 = rng.random();
                let idx = cdf.partition_point(|&c| c <= u);
                // guard against the last cdf entry rounding below 1
                idx.min(cdf.len() - 1) as u64
            }
            SamplerKind::Poisson(lambda) => Poisson::new(*lambda).unwrap().sample(rng) as u64,
            SamplerKind::Geometric(p) => Geometric::new(*p).unwrap().sample(rng),
        }
    }

    /// Sum of `n` independent draws, or `None` on `u64` overflow.
    ///
    /// Large `n` uses the exact compound form: sequential binomial counts per
    /// atom for tables, `Poisson(nλ)` for Poisson, and a gamma-Poisson
    /// mixture (negative binomial) for geometric laws.
    pub fn draw_sum<R: Rng + ?Sized>(&self, n: u64, rng: &mut R) -> Option<u64> {
        if n == 0 {
            return Some(0);
        }
        if n <= MULTINOMIAL_THRESHOLD {
            let mut total: u64 = 0;
            for _ in 0..n {
                total = total.checked_add(self.draw(rng))?;
            }
            return Some(total);
        }
        match &self.kind {
            SamplerKind::Table { atoms, .. } => {
                let mut remaining = n;
                let mut rest = 1.0;
                let mut total: u64 = 0;
                for (i, &(k, p)) in atoms.iter().enumerate() {
                    if remaining == 0 {
                        break;
                    }
                    let count = if i + 1 == atoms.len() {
                        remaining
                    } else {
                        let q = (p / rest).clamp(0.0, 1.0);
                        Binomial::new(remaining, q).unwrap().sample(rng)
                    };
                    total = total.checked_add(k.checked_mul(count)?)?;
                    remaining -= count;
                    rest -= p;
                }
                Some(total)
            }
            SamplerKind::Poisson(lambda) => poisson_count(n as f64 * lambda, rng),
            SamplerKind::Geometric(p) => {
                let scale = (1.0 - p) / p;
                let rate = Gamma::new(n as f64, scale).unwrap().sample(rng);
                poisson_count(rate, rng)
            }
        }
    }
}

fn poisson_count<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Option<u64> {
    if rate <= 0.0 {
        return Some(0);
    }
    if rate >= 1e18 {
        return None;
    }
    let x: f64 = Poisson::new(rate).ok()?.sample(rng);
    Some(x as u64)
}

/// Dense convolution of two tables. Returns the table up to `cap` and the
/// mass that landed above it.
fn convolve_tables(a: &[f64], b: &[f64], cap: usize) -> (Vec<f64>, f64) {
    let nz = |t: &[f64]| t.iter().filter(|p| **p != 0.0).count();
    // iterate over the sparser operand
    let (sparse, dense) = if nz(a) <= nz(b) { (a, b) } else { (b, a) };
    let len = (sparse.len() + dense.len() - 1).min(cap + 1);
    let mut out = vec![0.0; len];
    let mut suffix = vec![0.0; dense.len() + 1];
    for j in (0..dense.len()).rev() {
        suffix[j] = suffix[j + 1] + dense[j];
    }
    let mut overflow = 0.0;
    for (i, &pa) in sparse.iter().enumerate() {
        if pa == 0.0 {
            continue;
        }
        if i > cap {
            overflow += pa * suffix[0];
            continue;
        }
        let room = (cap - i + 1).min(dense.len());
        for (o, &pb) in out[i..i + room].iter_mut().zip(&dense[..room]) {
            *o += pa * pb;
        }
        overflow += pa * suffix[room];
    }
    (out, overflow)
}

/// Law of the independent sum; mass above `cap` accumulates in the tail.
pub fn convolve(a: &Pmf, b: &Pmf, cap: usize) -> Pmf {
    let (out, overflow) = convolve_tables(&a.probs, &b.probs, cap);
    let tail = a.tail_mass + b.tail_mass - a.tail_mass * b.tail_mass;
    Pmf::from_parts(out, tail + overflow, cap)
}

/// `ν^{*k}` by repeated squaring; `ν^{*0} = δ_0`.
pub fn convolve_power(law: &OffspringLaw, k: u64, cap: usize) -> Pmf {
    let mut result = Pmf::delta(0, cap);
    let mut base = law.to_pmf(cap);
    let mut k = k;
    while k > 0 {
        if k & 1 == 1 {
            result = convolve(&result, &base, cap);
        }
        k >>= 1;
        if k > 0 {
            base = convolve(&base, &base, cap);
        }
    }
    result
}
