//! Quantitative bounds and certificates.
//!
//! Each routine returns a [`Certificate`]: the parameters it was given, the
//! bound it computed, a pass/fail verdict and enough provenance (method, cap,
//! seed, runs) to reproduce it bit for bit.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{batch_fold, batch_simulate, ChainConfig, Trajectory};
use crate::error::{GwError, Result};
use crate::exact::{
    extinction_probability, law_at, law_at_restricted, laws_through, prob_at_least, skeleton_law,
};
use crate::offspring::{convolve, convolve_power, OffspringLaw, Pmf, MASS_TOL};
use crate::rng::derive_seed;
use crate::stats::{frequency_se, frequency_se_against, hoeffding_radius};

/// Slack allowed when comparing an exact probability with a bound.
pub const EXACT_TOL: f64 = 1e-10;

/// `|m - 1|` at or below this counts as critical.
pub const CRITICAL_TOL: f64 = 1e-12;

/// Tail of the infinite product is summed until its log-bound is below this.
const PRODUCT_TAIL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateKind {
    SubcriticalDecay,
    SupercriticalSurvival,
    Lemma1Rate,
    CriterionWitness,
    CriticalMarkov,
    ThinningPipeline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn passed(&self) -> bool {
        *self == Verdict::Pass
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exact,
    MonteCarlo,
    Mixed,
    Analytic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runs: Option<u64>,
}

impl Provenance {
    fn exact(cap: usize) -> Self {
        Provenance {
            method: Method::Exact,
            cap: Some(cap),
            seed: None,
            runs: None,
        }
    }
}

/// Numeric witness of a bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub kind: CertificateKind,
    pub law: String,
    pub parameters: BTreeMap<String, f64>,
    pub bound_value: f64,
    pub verdict: Verdict,
    /// Derived quantities reported alongside the bound.
    pub observations: BTreeMap<String, f64>,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl Certificate {
    fn new(kind: CertificateKind, law: &OffspringLaw, provenance: Provenance) -> Self {
        Certificate {
            kind,
            law: law.to_string(),
            parameters: BTreeMap::new(),
            bound_value: 0.0,
            verdict: Verdict::Fail,
            observations: BTreeMap::new(),
            provenance,
            warnings: Vec::new(),
        }
    }

    fn param(mut self, name: &str, value: f64) -> Self {
        self.parameters.insert(name.to_string(), value);
        self
    }

    fn observe(&mut self, name: &str, value: f64) {
        self.observations.insert(name.to_string(), value);
    }

    fn warn_tail(&mut self, pmf: &Pmf) {
        if let Some(w) = pmf.tail_warning() {
            self.warnings.push(format!(
                "tail mass {:e} beyond cap {}",
                w.tail_mass, w.cap
            ));
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict.passed()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate values are finite")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

fn exact_mean(law: &OffspringLaw) -> Result<f64> {
    let m = law.mean();
    if !m.is_exact() {
        return Err(GwError::Precondition(format!(
            "mean only known to lie in [{}, inf)",
            m.value
        )));
    }
    Ok(m.value)
}

/// Checks `P(τ > n) ≤ m^n E[Y_0]` exactly for `n = 0..=n_max`.
///
/// `P(τ > n)` is taken as one minus the exact extinct mass, an upper bound
/// when tail mass is present.
pub fn subcritical_decay_check(
    law: &OffspringLaw,
    initial: &Pmf,
    n_max: usize,
    cap: usize,
) -> Result<Certificate> {
    let m = exact_mean(law)?;
    if m >= 1.0 {
        return Err(GwError::Precondition(format!("mean {m} is not < 1")));
    }
    if initial.tail_mass() > MASS_TOL {
        return Err(GwError::Precondition(
            "initial law must have finite support".into(),
        ));
    }
    let mean0 = initial.table_mean();
    let laws = laws_through(initial, law, n_max, cap);
    let mut cert = Certificate::new(CertificateKind::SubcriticalDecay, law, Provenance::exact(cap))
        .param("m", m)
        .param("n_max", n_max as f64)
        .param("initial_mean", mean0);
    let mut max_excess = f64::NEG_INFINITY;
    let mut max_ratio: f64 = 0.0;
    let mut first_failure = None;
    for (n, pmf) in laws.iter().enumerate() {
        let survival = (1.0 - pmf.mass_at(0)).max(0.0);
        let bound = m.powi(n as i32) * mean0;
        let excess = survival - bound;
        max_excess = max_excess.max(excess);
        if bound > 0.0 {
            max_ratio = max_ratio.max(survival / bound);
        }
        if excess > EXACT_TOL && first_failure.is_none() {
            first_failure = Some(n);
        }
    }
    let last = laws.last().unwrap();
    cert.warn_tail(last);
    cert.bound_value = (1.0 - last.mass_at(0)).max(0.0);
    cert.observe("max_excess", max_excess);
    cert.observe("max_ratio", max_ratio);
    cert.observe("bound_at_n_max", m.powi(n_max as i32) * mean0);
    if let Some(n) = first_failure {
        cert.observe("first_failure", n as f64);
    }
    cert.verdict = Verdict::from_bool(first_failure.is_none());
    Ok(cert)
}

/// Smallest truncation level `M` with `E[X ∧ M] > a`.
pub fn truncation_level(law: &OffspringLaw, a: f64) -> Result<(usize, OffspringLaw)> {
    let limit = law.max_support() + 10_000;
    (0..=limit)
        .map(|level| (level, law.truncate(level)))
        .find(|(_, t)| t.mean().value > a)
        .ok_or_else(|| GwError::Precondition(format!("no truncation level has mean > {a}")))
}

/// `∏_{i ≥ 0} (1 - c/(n a^i))` as a certified lower bound, with the
/// uncorrected partial product and the number of factors summed.
fn geometric_product(c: f64, n: f64, a: f64) -> (f64, f64, usize) {
    if c == 0.0 {
        return (1.0, 1.0, 0);
    }
    let mut log_sum = 0.0;
    let mut i = 0usize;
    loop {
        let x = c / (n * a.powi(i as i32));
        // Σ_{j ≥ i} -ln(1 - x_j) ≤ x_i / ((1 - x_i)(1 - 1/a))
        let tail = x / ((1.0 - x) * (1.0 - 1.0 / a));
        if tail < PRODUCT_TAIL_TOL {
            return ((log_sum - tail).exp(), log_sum.exp(), i);
        }
        log_sum += (-x).ln_1p();
        i += 1;
    }
}

/// Chebyshev-and-product lower bound on `P^n(τ = ∞)` for `1 < a < m`.
///
/// Uses `c = Var(X ∧ M) / (E[X ∧ M] - a)^2`; the value with the unsquared
/// denominator is reported as `c_unsquared`. When `n ≤ c` the certificate
/// fails and reports the smallest admissible `n`.
pub fn supercritical_certificate(law: &OffspringLaw, a: f64, n: u64) -> Result<Certificate> {
    let m = law.mean().value;
    if !(a > 1.0 && a < m) {
        return Err(GwError::Precondition(format!(
            "need 1 < a < m, got a = {a}, m = {m}"
        )));
    }
    if n < 1 {
        return Err(GwError::InvalidParameter("n must be >= 1".into()));
    }
    let (level, truncated) = truncation_level(law, a)?;
    let tmean = truncated.mean().value;
    let tvar = truncated.variance()?;
    let gap = tmean - a;
    let c = tvar / (gap * gap);
    let minimal_n = c.floor() as u64 + 1;
    let mut cert = Certificate::new(
        CertificateKind::SupercriticalSurvival,
        law,
        Provenance {
            method: Method::Analytic,
            cap: None,
            seed: None,
            runs: None,
        },
    )
    .param("a", a)
    .param("n", n as f64)
    .param("m", m);
    cert.observe("truncation_level", level as f64);
    cert.observe("truncated_mean", tmean);
    cert.observe("truncated_variance", tvar);
    cert.observe("c", c);
    cert.observe("c_unsquared", tvar / gap);
    cert.observe("minimal_n", minimal_n as f64);
    if (n as f64) <= c {
        cert.bound_value = 0.0;
        cert.verdict = Verdict::Fail;
        return Ok(cert);
    }
    let (bound, partial, factors) = geometric_product(c, n as f64, a);
    cert.observe("partial_product", partial);
    cert.observe("factors", factors as f64);
    cert.bound_value = bound;
    cert.verdict = Verdict::from_bool(bound > 0.0);
    Ok(cert)
}

fn integer_rate(a: f64) -> Result<u64> {
    if !a.is_finite() || a < 1.0 || a.fract() != 0.0 {
        return Err(GwError::InvalidParameter(format!(
            "a = {a} must be an integer >= 1"
        )));
    }
    Ok(a as u64)
}

/// `a · P^N(Y_1 ≥ aN)`; passes when it exceeds 1.
///
/// The probability is the table mass of `ν^{*N}` at or above `aN`, a
/// certified lower bound. On a pass the extinction probability of the
/// dominated block chain, with law `(1 - q)δ_0 + qδ_a`, is reported as
/// `block_chain_extinction`.
pub fn lemma1_rate(law: &OffspringLaw, block: u64, a: f64, cap: usize) -> Result<Certificate> {
    if block < 1 {
        return Err(GwError::InvalidParameter("N must be >= 1".into()));
    }
    let a_int = integer_rate(a)?;
    let threshold = (a_int * block) as usize;
    let cap = cap.max(threshold);
    let pmf = convolve_power(law, block, cap);
    let (q, q_upper) = prob_at_least(&pmf, threshold);
    let mut cert = Certificate::new(CertificateKind::Lemma1Rate, law, Provenance::exact(cap))
        .param("N", block as f64)
        .param("a", a);
    cert.warn_tail(&pmf);
    cert.bound_value = a * q;
    cert.observe("q", q);
    cert.observe("q_upper", q_upper);
    cert.observe("rate_upper", a * q_upper);
    cert.verdict = Verdict::from_bool(a * q > 1.0);
    if cert.passed() {
        let block_law = OffspringLaw::two_point(a_int as usize, q)?;
        let qe = extinction_probability(&block_law, 1e-14)?;
        cert.observe("block_chain_extinction", qe);
    }
    Ok(cert)
}

/// Lemma certificate at `a = 2` on the `T`-skeleton, the forward direction
/// of the local criterion at a witness `(N, T)`.
pub fn skeleton_lemma(law: &OffspringLaw, block: u64, t: usize, cap: usize) -> Result<Certificate> {
    let skeleton = skeleton_law(law, t, cap)?;
    let mut cert = lemma1_rate(&skeleton, block, 2.0, cap)?;
    cert.law = law.to_string();
    cert.parameters.insert("T".into(), t as f64);
    Ok(cert)
}

/// Settings for [`criterion_search`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionOptions {
    pub n_max: u64,
    pub t_max: usize,
    /// Cells with `N ≤ exact_n_max` and `T ≤ exact_t_max` are computed exactly.
    pub exact_n_max: u64,
    pub exact_t_max: usize,
    /// Compute every cell exactly.
    pub force_exact: bool,
    pub cap: usize,
    pub runs: u64,
    pub confidence: f64,
    pub seed: u64,
    pub population_cap: u64,
}

impl Default for CriterionOptions {
    fn default() -> Self {
        CriterionOptions {
            n_max: 64,
            t_max: 64,
            exact_n_max: 16,
            exact_t_max: 16,
            force_exact: false,
            cap: 1024,
            runs: 10_000,
            confidence: 0.99,
            seed: 0,
            population_cap: crate::chain::DEFAULT_POPULATION_CAP,
        }
    }
}

/// Value of `P^N(Y_T ≥ 2N)` at one scan cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellValue {
    pub n: u64,
    pub t: usize,
    pub exact: bool,
    /// Exact table mass, or the Monte Carlo frequency.
    pub value: f64,
    /// Certified lower bound (exact) or Hoeffding lower confidence bound.
    pub lower: f64,
    /// Exact value plus tail mass, or the Hoeffding upper confidence bound.
    pub upper: f64,
}

/// Result of a criterion scan.
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionScan {
    /// Cells in scan order.
    pub cells: Vec<CellValue>,
    pub witness: Option<CellValue>,
    pub mc_cells: usize,
}

/// Scan order: diagonals `N + T = 2, 3, ...`, `N` ascending within each.
pub fn scan_order(n_max: u64, t_max: usize) -> Vec<(u64, usize)> {
    let mut cells = Vec::new();
    for d in 2..=(n_max + t_max as u64) {
        let lo = 1.max(d.saturating_sub(t_max as u64));
        let hi = n_max.min(d - 1);
        for n in lo..=hi {
            cells.push((n, (d - n) as usize));
        }
    }
    cells
}

/// Exact `P^N(Y_T ≥ 2N)` for `N ≤ n_max`, `T ≤ t_max`.
///
/// Uses `law_at(δ_N, T) = law_at(δ_1, T)^{*N}`, one incremental convolution
/// per `N`. Returns `values[t - 1][n - 1] = (lower, upper)`.
pub fn exact_criterion_grid(
    law: &OffspringLaw,
    n_max: u64,
    t_max: usize,
    cap: usize,
) -> Vec<Vec<(f64, f64)>> {
    let singles = laws_through(&Pmf::delta(1, cap), law, t_max, cap);
    singles[1..]
        .par_iter()
        .map(|single| {
            let mut power = Pmf::delta(0, cap);
            (1..=n_max)
                .map(|n| {
                    power = convolve(&power, single, cap);
                    prob_at_least(&power, 2 * n as usize)
                })
                .collect()
        })
        .collect()
}

/// Per-`T` counts of `Y_T ≥ 2N` over a batch from `N`. Paths stopped at the
/// population cap count as misses from then on.
fn mc_column(law: &OffspringLaw, n: u64, opts: &CriterionOptions) -> Result<Vec<u64>> {
    let config = ChainConfig::new(law.clone(), n, opts.t_max)
        .with_seed(derive_seed(opts.seed, n))
        .with_population_cap(opts.population_cap);
    let horizon = opts.t_max;
    let threshold = 2 * n;
    batch_fold(
        &config,
        opts.runs,
        || vec![0u64; horizon + 1],
        |mut acc, traj: &Trajectory| {
            for (t, slot) in acc.iter_mut().enumerate() {
                if traj.size_at(t).is_some_and(|y| y >= threshold) {
                    *slot += 1;
                }
            }
            acc
        },
        |mut a, b| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            a
        },
    )
}

/// Scans `(N, T)` for `P^N(Y_T ≥ 2N) > 1/2` with a certified lower bound.
///
/// Monte Carlo cells use a one-sided Hoeffding bound with the failure
/// probability `1 - confidence` split evenly over all Monte Carlo cells.
pub fn criterion_scan(law: &OffspringLaw, opts: &CriterionOptions) -> Result<CriterionScan> {
    if opts.n_max < 1 || opts.t_max < 1 {
        return Err(GwError::InvalidParameter("N_max and T_max must be >= 1".into()));
    }
    if !(opts.confidence > 0.0 && opts.confidence < 1.0) {
        return Err(GwError::InvalidParameter(format!(
            "confidence {} not in (0,1)",
            opts.confidence
        )));
    }
    let order = scan_order(opts.n_max, opts.t_max);
    let is_exact = |n: u64, t: usize| {
        opts.force_exact || (n <= opts.exact_n_max && t <= opts.exact_t_max)
    };
    let (en, et) = if opts.force_exact {
        (opts.n_max, opts.t_max)
    } else {
        (opts.exact_n_max.min(opts.n_max), opts.exact_t_max.min(opts.t_max))
    };
    let grid = exact_criterion_grid(law, en, et, opts.cap);
    let exact_cell = |n: u64, t: usize| {
        let (lower, upper) = grid[t - 1][(n - 1) as usize];
        CellValue {
            n,
            t,
            exact: true,
            value: lower,
            lower,
            upper,
        }
    };

    let mc_positions: Vec<usize> = order
        .iter()
        .enumerate()
        .filter(|(_, &(n, t))| !is_exact(n, t))
        .map(|(i, _)| i)
        .collect();
    let first_exact_witness = order
        .iter()
        .enumerate()
        .filter(|(_, &(n, t))| is_exact(n, t))
        .map(|(i, &(n, t))| (i, exact_cell(n, t)))
        .find(|(_, c)| c.lower > 0.5);

    // an exact witness ahead of every Monte Carlo cell settles the scan
    let mc_needed = match first_exact_witness {
        Some((i, _)) => mc_positions.first().is_some_and(|&j| j < i),
        None => !mc_positions.is_empty(),
    };

    let mut columns: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    if mc_needed {
        if opts.runs < 1 {
            return Err(GwError::InvalidParameter("runs must be >= 1".into()));
        }
        let ns: Vec<u64> = {
            let mut v: Vec<u64> = mc_positions.iter().map(|&i| order[i].0).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        let computed: Result<Vec<(u64, Vec<u64>)>> =
            ns.iter().map(|&n| Ok((n, mc_column(law, n, opts)?))).collect();
        columns = computed?.into_iter().collect();
    }
    let delta = (1.0 - opts.confidence) / mc_positions.len().max(1) as f64;
    let mut cells = Vec::with_capacity(order.len());
    for &(n, t) in &order {
        if is_exact(n, t) {
            cells.push(exact_cell(n, t));
        } else if let Some(col) = columns.get(&n) {
            let hits = col[t];
            let value = hits as f64 / opts.runs as f64;
            let r = hoeffding_radius(opts.runs, delta);
            cells.push(CellValue {
                n,
                t,
                exact: false,
                value,
                lower: (value - r).max(0.0),
                upper: (value + r).min(1.0),
            });
        }
    }
    let witness = cells.iter().find(|c| c.lower > 0.5).copied();
    Ok(CriterionScan {
        cells,
        witness,
        mc_cells: if mc_needed { mc_positions.len() } else { 0 },
    })
}

/// Local survival criterion: first `(N, T)` in scan order whose lower bound
/// on `P^N(Y_T ≥ 2N)` exceeds 1/2.
pub fn criterion_search(law: &OffspringLaw, opts: &CriterionOptions) -> Result<Certificate> {
    let scan = criterion_scan(law, opts)?;
    let method = match (scan.mc_cells, scan.witness) {
        (0, _) => Method::Exact,
        (_, Some(w)) if w.exact => Method::Exact,
        (_, Some(_)) => Method::MonteCarlo,
        (_, None) => Method::Mixed,
    };
    let mc_used = scan.mc_cells > 0;
    let mut cert = Certificate::new(
        CertificateKind::CriterionWitness,
        law,
        Provenance {
            method,
            cap: Some(opts.cap),
            seed: mc_used.then_some(opts.seed),
            runs: mc_used.then_some(opts.runs),
        },
    )
    .param("N_max", opts.n_max as f64)
    .param("T_max", opts.t_max as f64)
    .param("confidence", opts.confidence);
    if law.mass_at(0) <= 0.0 {
        cert.warnings
            .push("ν(0) = 0: the criterion's hypothesis does not hold".into());
    }
    match scan.witness {
        Some(w) => {
            cert.parameters.insert("N".into(), w.n as f64);
            cert.parameters.insert("T".into(), w.t as f64);
            cert.bound_value = w.lower;
            cert.observe("value", w.value);
            cert.observe("upper", w.upper);
            cert.observe("exact", if w.exact { 1.0 } else { 0.0 });
            cert.verdict = Verdict::Pass;
        }
        None => {
            let best = scan
                .cells
                .iter()
                .max_by(|a, b| a.value.total_cmp(&b.value))
                .unwrap();
            cert.bound_value = best.value;
            cert.observe("max_value_N", best.n as f64);
            cert.observe("max_value_T", best.t as f64);
            if let Some(e) = scan
                .cells
                .iter()
                .filter(|c| c.exact)
                .max_by(|a, b| a.upper.total_cmp(&b.upper))
            {
                cert.observe("max_exact_upper", e.upper);
            }
            cert.verdict = Verdict::Fail;
        }
    }
    Ok(cert)
}

/// Markov bound `P^N(Y_T ≥ 2N) ≤ E^N[Y_T]/(2N) = 1/2` for a critical law.
pub fn critical_markov_bound(
    law: &OffspringLaw,
    block: u64,
    t: usize,
    cap: usize,
) -> Result<Certificate> {
    let m = exact_mean(law)?;
    if (m - 1.0).abs() > CRITICAL_TOL {
        return Err(GwError::Precondition(format!("mean {m} is not 1")));
    }
    if block < 1 || t < 1 {
        return Err(GwError::InvalidParameter("N and T must be >= 1".into()));
    }
    let pmf = law_at(&Pmf::delta(block as usize, cap), law, t, cap);
    let (lower, upper) = prob_at_least(&pmf, 2 * block as usize);
    let markov = m.powi(t as i32) / 2.0;
    let mut cert = Certificate::new(CertificateKind::CriticalMarkov, law, Provenance::exact(cap))
        .param("N", block as f64)
        .param("T", t as f64);
    cert.warn_tail(&pmf);
    if law.mass_at(0) <= 0.0 {
        cert.warnings.push("ν(0) = 0".into());
    }
    cert.bound_value = markov;
    cert.observe("exact_lower", lower);
    cert.observe("exact_upper", upper);
    cert.observe("tail_mass", pmf.tail_mass());
    cert.verdict = Verdict::from_bool(upper <= 0.5 + EXACT_TOL);
    Ok(cert)
}

/// Settings for [`thinning_pipeline`]. `runs = 0` skips the simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub cap: usize,
    pub runs: u64,
    pub seed: u64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            cap: 1024,
            runs: 10_000,
            seed: 0,
        }
    }
}

/// Lower bound `r · p^{TM}` on `P(Y^p_T ≥ 2N)` where
/// `r = P^N(max_{i ≤ T} Y_i ≤ M, Y_T ≥ 2N)`.
///
/// `r` is computed by propagating with cap `M`, so that every path whose
/// running maximum exceeds `M` lands in the tail. The bound is checked
/// against the exact law of the thinned chain and, when `runs > 0`, against a
/// direct simulation (`bound ≤ estimate + 4σ`). A bound above 1/2 for a
/// thinned chain with `p·m < 1` is reported as a contradiction and fails.
pub fn thinning_pipeline(
    law: &OffspringLaw,
    block: u64,
    t: usize,
    level: usize,
    p: f64,
    opts: &PipelineOptions,
) -> Result<Certificate> {
    if !(p > 0.0 && p < 1.0) {
        return Err(GwError::InvalidParameter(format!("p = {p} not in (0,1)")));
    }
    if block < 1 || t < 1 {
        return Err(GwError::InvalidParameter("N and T must be >= 1".into()));
    }
    let n = block as usize;
    let r = if n > level {
        0.0
    } else {
        let restricted = law_at_restricted(&Pmf::delta(n, level), law, t, level);
        restricted.table_mass_from(2 * n)
    };
    let p_pow = p.powf((t * level) as f64);
    let bound = r * p_pow;

    let thinned = law.thin(p)?;
    let direct = law_at(&Pmf::delta(n, opts.cap), &thinned, t, opts.cap);
    let (d_lower, d_upper) = prob_at_least(&direct, 2 * n);
    let thinned_mean = p * law.mean().value;

    let mc = opts.runs > 0;
    let mut cert = Certificate::new(
        CertificateKind::ThinningPipeline,
        law,
        Provenance {
            method: if mc { Method::Mixed } else { Method::Exact },
            cap: Some(opts.cap),
            seed: mc.then_some(opts.seed),
            runs: mc.then_some(opts.runs),
        },
    )
    .param("N", block as f64)
    .param("T", t as f64)
    .param("M", level as f64)
    .param("p", p);
    cert.warn_tail(&direct);
    cert.bound_value = bound;
    cert.observe("r", r);
    cert.observe("p_pow_TM", p_pow);
    cert.observe("direct_exact_lower", d_lower);
    cert.observe("direct_exact_upper", d_upper);
    cert.observe("thinned_mean", thinned_mean);
    let mut ok = bound <= d_upper + EXACT_TOL;
    if mc {
        let config = ChainConfig::new(thinned, block, t).with_seed(opts.seed);
        let threshold = 2 * block;
        let pred = |tr: &Trajectory| tr.size_at(t).map_or(tr.cap_exceeded, |y| y >= threshold);
        let stats = batch_simulate(&config, opts.runs, Some(&pred))?;
        let est = stats.event_fraction();
        let se = frequency_se_against(stats.event_count, stats.runs, bound.min(1.0));
        cert.observe("direct_mc_estimate", est);
        cert.observe("direct_mc_se", frequency_se(stats.event_count, stats.runs));
        ok &= bound <= est + 4.0 * se;
    }
    let contradiction = bound > 0.5 && thinned_mean < 1.0;
    if contradiction {
        cert.warnings.push(
            "bound exceeds 1/2 for a thinned chain with mean < 1".into(),
        );
    }
    cert.observe("contradiction", if contradiction { 1.0 } else { 0.0 });
    cert.verdict = Verdict::from_bool(ok && !contradiction);
    Ok(cert)
}
