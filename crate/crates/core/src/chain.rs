//! Simulation of Galton-Watson trajectories.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GwError, Result};
use crate::offspring::{OffspringLaw, Pmf, Sampler, MASS_TOL};
use crate::rng::{derive_seed, stream};
use crate::stats::{frequency_se, ConfidenceMethod};

/// Populations above this are stopped and reported alive.
pub const DEFAULT_POPULATION_CAP: u64 = 10_000_000;

/// Initial population: a fixed size or a law.
#[derive(Debug, Clone, PartialEq)]
pub enum Initial {
    Fixed(u64),
    Law(Pmf),
}

#[derive(Debug, Clone)]
pub struct ChainConfig {
    pub offspring: OffspringLaw,
    pub initial: Initial,
    pub horizon: usize,
    pub population_cap: u64,
    pub seed: u64,
}

impl ChainConfig {
    pub fn new(offspring: OffspringLaw, initial: u64, horizon: usize) -> Self {
        ChainConfig {
            offspring,
            initial: Initial::Fixed(initial),
            horizon,
            population_cap: DEFAULT_POPULATION_CAP,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_population_cap(mut self, cap: u64) -> Self {
        self.population_cap = cap;
        self
    }

    pub fn with_initial_law(mut self, law: Pmf) -> Self {
        self.initial = Initial::Law(law);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(GwError::InvalidParameter("horizon must be >= 1".into()));
        }
        if self.population_cap < 1 {
            return Err(GwError::InvalidParameter(
                "population cap must be >= 1".into(),
            ));
        }
        if let Initial::Law(pmf) = &self.initial {
            if pmf.tail_mass() > MASS_TOL {
                return Err(GwError::Unsampleable {
                    tail_mass: pmf.tail_mass(),
                });
            }
        }
        Ok(())
    }
}

/// One simulated path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `Y_0, Y_1, ...`, stopped at extinction, horizon or population cap.
    pub sizes: Vec<u64>,
    /// First index with `Y_n = 0`; `None` while alive.
    pub tau: Option<usize>,
    /// Alive when the simulation stopped.
    pub censored: bool,
    /// Stopped because the population exceeded the cap.
    pub cap_exceeded: bool,
    pub seed: u64,
}

impl Trajectory {
    /// Builds a trajectory from recorded sizes, truncating after the first 0.
    pub fn from_sizes(mut sizes: Vec<u64>, cap_exceeded: bool, seed: u64) -> Self {
        let tau = tau_of_sizes(&sizes);
        if let Some(t) = tau {
            sizes.truncate(t + 1);
        }
        Trajectory {
            censored: tau.is_none(),
            cap_exceeded: cap_exceeded && tau.is_none(),
            sizes,
            tau,
            seed,
        }
    }

    /// `Y_t` if known: after extinction it is 0, after a cap stop it is unknown.
    pub fn size_at(&self, t: usize) -> Option<u64> {
        match self.sizes.get(t) {
            Some(&y) => Some(y),
            None if self.tau.is_some() => Some(0),
            None => None,
        }
    }

    /// Alive at `t`. Paths stopped at the population cap count as alive.
    pub fn alive_at(&self, t: usize) -> bool {
        match self.tau {
            Some(tau) => t < tau,
            None => true,
        }
    }

    pub fn last_size(&self) -> u64 {
        *self.sizes.last().unwrap()
    }
}

/// First hitting time of 0.
pub fn tau_of_sizes(sizes: &[u64]) -> Option<usize> {
    sizes.iter().position(|&y| y == 0)
}

/// Extinction time of a trajectory; `None` if censored.
pub fn tau_of(traj: &Trajectory) -> Option<usize> {
    tau_of_sizes(&traj.sizes)
}

/// Total offspring of `y` individuals.
pub fn step<R: Rng + ?Sized>(y: u64, sampler: &Sampler, rng: &mut R) -> Result<u64> {
    sampler
        .draw_sum(y, rng)
        .ok_or(GwError::Overflow { parents: y })
}

fn sample_initial<R: Rng + ?Sized>(initial: &Initial, rng: &mut R) -> u64 {
    match initial {
        Initial::Fixed(n) => *n,
        Initial::Law(pmf) => {
            let u: f64 = rng.random::<f64>() * (pmf.total_mass() - pmf.tail_mass());
            let mut acc = 0.0;
            for (k, p) in pmf.probs().iter().enumerate() {
                acc += p;
                if u < acc {
                    return k as u64;
                }
            }
            pmf.max_support() as u64
        }
    }
}

fn run(config: &ChainConfig, sampler: &Sampler, seed: u64) -> Result<Trajectory> {
    let mut rng = stream(seed, 0);
    let mut y = sample_initial(&config.initial, &mut rng);
    let mut sizes = Vec::with_capacity(config.horizon + 1);
    sizes.push(y);
    let mut capped = y > config.population_cap;
    while y > 0 && !capped && sizes.len() <= config.horizon {
        y = step(y, sampler, &mut rng)?;
        sizes.push(y);
        capped = y > config.population_cap;
    }
    Ok(Trajectory::from_sizes(sizes, capped, seed))
}

/// Simulates one trajectory from `config.seed`.
pub fn simulate(config: &ChainConfig) -> Result<Trajectory> {
    config.validate()?;
    let sampler = config.offspring.sampler()?;
    run(config, &sampler, config.seed)
}

/// Trajectory `index` of a batch driven by `config.seed`.
pub fn simulate_indexed(config: &ChainConfig, index: u64) -> Result<Trajectory> {
    config.validate()?;
    let sampler = config.offspring.sampler()?;
    run(config, &sampler, derive_seed(config.seed, index))
}

pub type Predicate<'a> = &'a (dyn Fn(&Trajectory) -> bool + Sync);

/// Aggregate counts over a batch of trajectories.
///
/// All accumulators are integers so the result does not depend on how the
/// batch was split across workers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub runs: u64,
    pub horizon: usize,
    /// `alive[t]`: trajectories alive at time `t`.
    pub alive: Vec<u64>,
    /// `observed[t]`: trajectories whose size at `t` is known.
    pub observed: Vec<u64>,
    pub size_sum: Vec<u128>,
    pub size_sq_sum: Vec<u128>,
    pub tau_histogram: BTreeMap<usize, u64>,
    pub cap_exceeded: u64,
    pub event_count: u64,
    pub confidence: ConfidenceMethod,
}

impl EnsembleStats {
    fn empty(horizon: usize) -> Self {
        EnsembleStats {
            runs: 0,
            horizon,
            alive: vec![0; horizon + 1],
            observed: vec![0; horizon + 1],
            size_sum: vec![0; horizon + 1],
            size_sq_sum: vec![0; horizon + 1],
            tau_histogram: BTreeMap::new(),
            cap_exceeded: 0,
            event_count: 0,
            confidence: ConfidenceMethod::Hoeffding,
        }
    }

    fn record(&mut self, traj: &Trajectory, event: bool) {
        self.runs += 1;
        for t in 0..=self.horizon {
            if traj.alive_at(t) {
                self.alive[t] += 1;
            }
            if let Some(y) = traj.size_at(t) {
                self.observed[t] += 1;
                self.size_sum[t] += y as u128;
                self.size_sq_sum[t] += (y as u128) * (y as u128);
            }
        }
        if let Some(tau) = traj.tau {
            *self.tau_histogram.entry(tau).or_insert(0) += 1;
        }
        self.cap_exceeded += traj.cap_exceeded as u64;
        self.event_count += event as u64;
    }

    fn merge(mut self, other: Self) -> Self {
        self.runs += other.runs;
        for t in 0..=self.horizon {
            self.alive[t] += other.alive[t];
            self.observed[t] += other.observed[t];
            self.size_sum[t] += other.size_sum[t];
            self.size_sq_sum[t] += other.size_sq_sum[t];
        }
        for (tau, c) in other.tau_histogram {
            *self.tau_histogram.entry(tau).or_insert(0) += c;
        }
        self.cap_exceeded += other.cap_exceeded;
        self.event_count += other.event_count;
        self
    }

    pub fn survival_count_at(&self, t: usize) -> u64 {
        self.alive[t]
    }

    pub fn survival_fraction(&self, t: usize) -> f64 {
        self.alive[t] as f64 / self.runs as f64
    }

    pub fn survival_se(&self, t: usize) -> f64 {
        frequency_se(self.alive[t], self.runs)
    }

    /// Trajectories extinct by time `t`.
    pub fn extinct_by(&self, t: usize) -> u64 {
        self.runs - self.alive[t]
    }

    /// Mean of `Y_t` over trajectories whose size at `t` is known.
    pub fn mean_size(&self, t: usize) -> f64 {
        if self.observed[t] == 0 {
            return f64::NAN;
        }
        self.size_sum[t] as f64 / self.observed[t] as f64
    }

    /// Standard error of [`mean_size`](Self::mean_size).
    pub fn mean_size_se(&self, t: usize) -> f64 {
        let n = self.observed[t] as f64;
        let mean = self.mean_size(t);
        let var = (self.size_sq_sum[t] as f64 / n - mean * mean).max(0.0) * n / (n - 1.0);
        (var / n).sqrt()
    }

    pub fn event_fraction(&self) -> f64 {
        self.event_count as f64 / self.runs as f64
    }
}

/// Folds over `runs` trajectories; trajectory `i` uses seed
/// `derive_seed(config.seed, i)`.
///
/// Executes on the current rayon pool. When `fold` and `reduce` only add
/// integers the result is the same for any pool size.
pub fn batch_fold<A, I, F, G>(
    config: &ChainConfig,
    runs: u64,
    identity: I,
    fold: F,
    reduce: G,
) -> Result<A>
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(A, &Trajectory) -> A + Sync + Send,
    G: Fn(A, A) -> A + Sync + Send,
{
    if runs < 1 {
        return Err(GwError::InvalidParameter("runs must be >= 1".into()));
    }
    config.validate()?;
    let sampler = config.offspring.sampler()?;
    (0..runs)
        .into_par_iter()
        .try_fold(&identity, |acc, i| {
            let traj = run(config, &sampler, derive_seed(config.seed, i))?;
            Ok(fold(acc, &traj))
        })
        .try_reduce(&identity, |a, b| Ok(reduce(a, b)))
}

/// Runs `runs` trajectories and aggregates survival, size moments,
/// extinction times and the optional event.
pub fn batch_simulate(
    config: &ChainConfig,
    runs: u64,
    predicate: Option<Predicate<'_>>,
) -> Result<EnsembleStats> {
    let horizon = config.horizon;
    batch_fold(
        config,
        runs,
        || EnsembleStats::empty(horizon),
        |mut acc, traj| {
            let event = predicate.map(|p| p(traj)).unwrap_or(false);
            acc.record(traj, event);
            acc
        },
        EnsembleStats::merge,
    )
}
