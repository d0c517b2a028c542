//! Test laws and independent oracles shared by the integration tests.
#![allow(dead_code)]

use gwlab::OffspringLaw;

pub fn pairs(p: &[(usize, f64)]) -> OffspringLaw {
    OffspringLaw::from_pairs(p).unwrap()
}

/// The finite-support test family, labelled.
pub fn finite_family() -> Vec<(&'static str, OffspringLaw)> {
    vec![
        ("3/4 d0 + 1/4 d2", pairs(&[(0, 0.75), (2, 0.25)])),
        ("1/2 d0 + 1/2 d2", pairs(&[(0, 0.5), (2, 0.5)])),
        ("1/4 d0 + 3/4 d2", pairs(&[(0, 0.25), (2, 0.75)])),
        ("d1", OffspringLaw::delta(1)),
        ("1/2 d1 + 1/2 d2", pairs(&[(1, 0.5), (2, 0.5)])),
    ]
}

/// Finite family plus tabulated Poisson(0.8), Poisson(1.0), Poisson(1.2) and
/// geometric(1/2).
pub fn full_family() -> Vec<(&'static str, OffspringLaw)> {
    let mut v = finite_family();
    v.push(("poisson(0.8)", OffspringLaw::poisson(0.8).unwrap()));
    v.push(("poisson(1.0)", OffspringLaw::poisson(1.0).unwrap()));
    v.push(("poisson(1.2)", OffspringLaw::poisson(1.2).unwrap()));
    v.push(("geometric(0.5)", OffspringLaw::geometric(0.5).unwrap()));
    v
}

/// `Σ_k ν(k) s^k` straight from the table, by Horner.
pub fn pgf_oracle(law: &OffspringLaw, s: f64) -> f64 {
    law.probs().iter().rev().fold(0.0, |acc, &p| acc * s + p)
}

/// `P^n(Y_t = 0) = f_t(0)^n` with `f_t` the `t`-fold composition.
pub fn extinct_by_oracle(law: &OffspringLaw, n: u32, t: usize) -> f64 {
    let mut s = 0.0;
    for _ in 0..t {
        s = pgf_oracle(law, s);
    }
    s.powi(n as i32)
}

/// Quadratic-time convolution of plain vectors, no cap.
pub fn naive_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Law of `Y_t` from `δ_n` by brute force on plain vectors.
pub fn naive_law_at(law: &[f64], n: usize, t: usize) -> Vec<f64> {
    let mut pop = vec![0.0; n + 1];
    pop[n] = 1.0;
    for _ in 0..t {
        let mut next = vec![0.0];
        let mut power = vec![1.0];
        for &w in &pop {
            if w > 0.0 {
                if next.len() < power.len() {
                    next.resize(power.len(), 0.0);
                }
                for (k, &p) in power.iter().enumerate() {
                    next[k] += w * p;
                }
            }
            power = naive_convolve(&power, law);
        }
        pop = next;
    }
    pop
}

/// Mean and variance of a finite table.
pub fn moments(probs: &[f64]) -> (f64, f64) {
    let m: f64 = probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
    let m2: f64 = probs.iter().enumerate().map(|(k, p)| (k * k) as f64 * p).sum();
    (m, m2 - m * m)
}

/// Extinction probability of `(1-q)δ_0 + qδ_2`-type laws in closed form,
/// `min(1, ν(0)/ν(2))`.
pub fn two_point_q(p0: f64, p2: f64) -> f64 {
    (p0 / p2).min(1.0)
}

pub fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    let len = a.len().max(b.len());
    (0..len)
        .map(|k| (a.get(k).copied().unwrap_or(0.0) - b.get(k).copied().unwrap_or(0.0)).abs())
        .fold(0.0, f64::max)
}
