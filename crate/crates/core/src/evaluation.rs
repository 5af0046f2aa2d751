//! Misclassification risk, cluster separation, and sub-Gaussian norm
//! estimates.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::generators::{normal_cdf, sample_component, ComponentSpec};
use crate::rankings::{embed, pair_count};
use crate::rng::{substream, Purpose};

/// Largest label count for which matchings are enumerated exhaustively.
pub const EXHAUSTIVE_MAX_LABELS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchingStrategy {
    /// Exhaustive up to [`EXHAUSTIVE_MAX_LABELS`], assignment above.
    Auto,
    Exhaustive,
    Assignment,
}

/// Best matching of predicted to true labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Misclassification {
    pub risk: f64,
    /// `(predicted label, true label)` pairs, sorted by predicted label.
    pub matching: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaBounds {
    pub mnl: Option<f64>,
    pub gaussian: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub risk: f64,
    pub matching: Vec<(usize, usize)>,
    pub gamma: Option<f64>,
    pub gamma_bounds: Option<GammaBounds>,
    pub tau_hat: Option<f64>,
}

pub fn misclassification_rate(predicted: &[usize], truth: &[usize]) -> Result<Misclassification> {
    misclassification_rate_with(predicted, truth, MatchingStrategy::Auto)
}

/// Fraction of rows whose predicted label disagrees with the true label
/// under the best injective matching between the two label sets. Rows of
/// unmatched labels count as errors.
pub fn misclassification_rate_with(
    predicted: &[usize],
    truth: &[usize],
    strategy: MatchingStrategy,
) -> Result<Misclassification> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: predicted.len(),
        });
    }
    if predicted.is_empty() {
        return Ok(Misclassification {
            risk: 0.0,
            matching: Vec::new(),
        });
    }
    let pred_ids = compact(predicted);
    let true_ids = compact(truth);
    let (kp, kt) = (pred_ids.len(), true_ids.len());
    let mut agreement = vec![vec![0u64; kt]; kp];
    for (p, t) in predicted.iter().zip(truth) {
        agreement[pred_ids[p]][true_ids[t]] += 1;
    }
    let use_exhaustive = match strategy {
        MatchingStrategy::Exhaustive => true,
        MatchingStrategy::Assignment => false,
        MatchingStrategy::Auto => kp.max(kt) <= EXHAUSTIVE_MAX_LABELS,
    };
    let pairs = if use_exhaustive {
        exhaustive_matching(&agreement)
    } else {
        assignment_matching(&agreement)
    };
    let agreed: u64 = pairs.iter().map(|&(i, j)| agreement[i][j]).sum();
    let pred_labels: Vec<usize> = pred_ids.keys().copied().collect();
    let true_labels: Vec<usize> = true_ids.keys().copied().collect();
    let mut matching: Vec<(usize, usize)> = pairs
        .into_iter()
        .map(|(i, j)| (pred_labels[i], true_labels[j]))
        .collect();
    matching.sort_unstable();
    Ok(Misclassification {
        risk: 1.0 - agreed as f64 / predicted.len() as f64,
        matching,
    })
}

fn compact(labels: &[usize]) -> BTreeMap<usize, usize> {
    let mut ids: BTreeMap<usize, usize> = labels.iter().map(|&l| (l, 0)).collect();
    for (i, v) in ids.values_mut().enumerate() {
        *v = i;
    }
    ids
}

/// Enumerates every injective map from the smaller label set into the
/// larger one; the first maximum in lexicographic order wins.
fn exhaustive_matching(agreement: &[Vec<u64>]) -> Vec<(usize, usize)> {
    let kp = agreement.len();
    let kt = agreement[0].len();
    let transpose = kp > kt;
    let (small, large) = if transpose { (kt, kp) } else { (kp, kt) };
    let score = |i: usize, j: usize| {
        if transpose {
            agreement[j][i]
        } else {
            agreement[i][j]
        }
    };
    let mut best_total = None;
    let mut best: Vec<usize> = Vec::new();
    let mut current = Vec::with_capacity(small);
    let mut used = vec![false; large];
    fn recurse(
        depth: usize,
        small: usize,
        large: usize,
        total: u64,
        current: &mut Vec<usize>,
        used: &mut [bool],
        score: &dyn Fn(usize, usize) -> u64,
        best_total: &mut Option<u64>,
        best: &mut Vec<usize>,
    ) {
        if depth == small {
            if best_total.is_none_or(|b| total > b) {
                *best_total = Some(total);
                best.clone_from(current);
            }
            return;
        }
        for j in 0..large {
            if used[j] {
                continue;
            }
            used[j] = true;
            current.push(j);
            recurse(
                depth + 1,
                small,
                large,
                total + score(depth, j),
                current,
                used,
                score,
                best_total,
                best,
            );
            current.pop();
            used[j] = false;
        }
    }
    recurse(
        0,
        small,
        large,
        0,
        &mut current,
        &mut used,
        &score,
        &mut best_total,
        &mut best,
    );
    best.into_iter()
        .enumerate()
        .map(|(i, j)| if transpose { (j, i) } else { (i, j) })
        .collect()
}

/// Hungarian algorithm (shortest augmenting paths with potentials) on the
/// square zero-padded agreement matrix, maximising total agreement.
fn assignment_matching(agreement: &[Vec<u64>]) -> Vec<(usize, usize)> {
    let kp = agreement.len();
    let kt = agreement[0].len();
    let size = kp.max(kt);
    let max = agreement.iter().flatten().copied().max().unwrap_or(0) as i64;
    let cost = |i: usize, j: usize| -> i64 {
        let a = if i < kp && j < kt { agreement[i][j] as i64 } else { 0 };
        max - a
    };
    // 1-based arrays as in the classic formulation; index 0 is a sentinel
    let mut u = vec![0i64; size + 1];
    let mut v = vec![0i64; size + 1];
    let mut way = vec![0usize; size + 1];
    let mut owner = vec![0usize; size + 1];
    for i in 1..=size {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; size + 1];
        let mut used = vec![false; size + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=size {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=size {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=size)
        .filter_map(|j| {
            let i = owner[j];
            (i >= 1 && i <= kp && j <= kt).then(|| (i - 1, j - 1))
        })
        .collect()
}

/// Smallest pairwise Euclidean distance between the given centers.
pub fn separation_gamma(means: &[Vec<f64>]) -> Result<f64> {
    if means.len() < 2 {
        return Err(Error::invalid(format!(
            "separation needs at least 2 centers, got {}",
            means.len()
        )));
    }
    let d = means[0].len();
    let mut best = f64::INFINITY;
    for (i, a) in means.iter().enumerate() {
        if a.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: a.len(),
            });
        }
        for b in &means[i + 1..] {
            let dist = a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            best = best.min(dist);
        }
    }
    Ok(best)
}

fn slack(n: f64) -> f64 {
    4.0 * (n * n.ln()).sqrt()
}

/// High-probability lower bound on the separation of MNL components whose
/// utilities are a shuffled ladder with spacing `rho`:
/// `√(n(n−1))/2 · (1 − e^{−ρ/β})/(1 + e^{−ρ/β}) − 4√(n ln n)`.
pub fn gamma_lower_bound_mnl(n: usize, rho: f64, beta: f64) -> f64 {
    let n = n as f64;
    let e = (-rho / beta).exp();
    (n * (n - 1.0)).sqrt() / 2.0 * (1.0 - e) / (1.0 + e) - slack(n)
}

/// High-probability lower bound on the separation of Gaussian components
/// with hypercube utilities:
/// `√(n(n−1))/√2 · (Φ(1/(σ√2)) − 1/2) − 4√(n ln n)`.
pub fn gamma_lower_bound_gaussian(n: usize, sigma: f64) -> f64 {
    let n = n as f64;
    let phi = normal_cdf(1.0 / (sigma * std::f64::consts::SQRT_2));
    (n * (n - 1.0)).sqrt() / std::f64::consts::SQRT_2 * (phi - 0.5) - slack(n)
}

/// Empirical ψ₂ norm of a scalar sample: the smallest `t` with
/// `mean(exp(x²/t²)) ≤ 2`, by bisection to relative tolerance `1e-6`.
pub fn psi2_norm(xs: &[f64]) -> f64 {
    let top = xs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if top == 0.0 || xs.is_empty() {
        return 0.0;
    }
    let excess = |t: f64| {
        let inv = 1.0 / (t * t);
        xs.iter().map(|x| (x * x * inv).exp()).sum::<f64>() / xs.len() as f64 > 2.0
    };
    let (mut lo, mut hi) = (0.0, 10.0 * top);
    debug_assert!(!excess(hi));
    while hi - lo > 1e-6 * hi {
        let mid = 0.5 * (lo + hi);
        if excess(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Settings for [`empirical_tau`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauEstimator {
    pub samples: usize,
    /// Random unit directions.
    pub directions: usize,
    /// Leading principal directions, each fitted on an independent batch
    /// of the same size.
    pub principal_directions: usize,
    pub power_iterations: usize,
}

impl Default for TauEstimator {
    fn default() -> Self {
        TauEstimator {
            samples: 1000,
            directions: 32,
            principal_directions: 1,
            power_iterations: 60,
        }
    }
}

/// Sign matrix of `m` sampled rankings, row-major `m × d`.
fn sample_signs(spec: &ComponentSpec, m: usize, seed: u64, offset: u64) -> Vec<i8> {
    let rows: Vec<Vec<i8>> = (0..m)
        .into_par_iter()
        .map(|row| {
            let mut rng = substream(seed, offset + row as u64, Purpose::Sample);
            embed(&sample_component(spec, &mut rng)).signs().to_vec()
        })
        .collect();
    rows.concat()
}

fn column_means(signs: &[i8], m: usize, d: usize) -> Vec<f64> {
    let mut mean = vec![0.0; d];
    for row in signs.chunks_exact(d) {
        for (acc, &s) in mean.iter_mut().zip(row) {
            *acc += 0.5 * f64::from(s);
        }
    }
    mean.iter_mut().for_each(|x| *x /= m as f64);
    mean
}

/// Centered projections `⟨u, X_j − X̄⟩` for every sample row.
fn projections(signs: &[i8], mean: &[f64], d: usize, u: &[f64]) -> Vec<f64> {
    let offset: f64 = u.iter().zip(mean).map(|(a, b)| a * b).sum();
    signs
        .par_chunks_exact(d)
        .map(|row| {
            let dot: f64 = row.iter().zip(u).map(|(&s, &w)| 0.5 * f64::from(s) * w).sum();
            dot - offset
        })
        .collect()
}

fn normalize(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

/// Top eigenvector of the sample covariance by power iteration.
fn principal_direction(signs: &[i8], mean: &[f64], d: usize, iters: usize, seed: u64) -> Option<Vec<f64>> {
    let mut rng = substream(seed, u64::MAX, Purpose::Directions);
    let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    if !normalize(&mut v) {
        return None;
    }
    for _ in 0..iters {
        let proj = projections(signs, mean, d, &v);
        let mut next = signs
            .par_chunks_exact(d)
            .zip(proj.par_iter())
            .fold(
                || vec![0.0; d],
                |mut acc, (row, &c)| {
                    for ((a, &s), mu) in acc.iter_mut().zip(row).zip(mean) {
                        *a += c * (0.5 * f64::from(s) - mu);
                    }
                    acc
                },
            )
            .reduce(
                || vec![0.0; d],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            );
        if !normalize(&mut next) {
            return None;
        }
        v = next;
    }
    Some(v)
}

/// Empirical sub-Gaussian norm of a component's embedding: the largest ψ₂
/// norm of the centered projections over the probe directions.
///
/// Random directions alone concentrate near the average coordinate
/// variance and miss the high-variance directions, so the leading
/// principal direction of an independent batch is also probed.
pub fn empirical_tau(spec: &ComponentSpec, settings: &TauEstimator, seed: u64) -> Result<f64> {
    if settings.samples < 100 {
        return Err(Error::invalid(format!(
            "tau estimation needs at least 100 samples, got {}",
            settings.samples
        )));
    }
    if settings.directions + settings.principal_directions == 0 {
        return Err(Error::invalid("tau estimation needs at least one direction"));
    }
    spec.validate()?;
    let d = pair_count(spec.n());
    if d == 0 {
        return Ok(0.0);
    }
    let m = settings.samples;
    let signs = sample_signs(spec, m, seed, 0);
    let mean = column_means(&signs, m, d);

    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for k in 0..settings.principal_directions {
        let offset = (k as u64 + 1) * m as u64;
        let fit = sample_signs(spec, m, seed, offset);
        let fit_mean = column_means(&fit, m, d);
        if let Some(v) = principal_direction(&fit, &fit_mean, d, settings.power_iterations, seed ^ offset) {
            dirs.push(v);
        }
    }
    for k in 0..settings.directions {
        let mut rng = substream(seed, k as u64, Purpose::Directions);
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        if normalize(&mut v) {
            dirs.push(v);
        }
    }
    Ok(dirs
        .iter()
        .map(|u| psi2_norm(&projections(&signs, &mean, d, u)))
        .fold(0.0, f64::max))
}

/// Evaluation of the sufficient observation rate
/// `p ≥ C''·τ*·√r·ln n / Γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorollaryReport {
    pub required_p: f64,
    pub satisfied: bool,
    /// `required_p > 1`: no observation rate can meet the condition.
    pub unsatisfiable: bool,
    /// Expected number of observed comparisons, `(n choose 2)·N·p`.
    pub comparisons: f64,
    /// Comparisons needed at the smallest sufficient rate.
    pub required_comparisons: f64,
}

pub fn corollary_condition_check(
    n: usize,
    n_rows: usize,
    p: f64,
    rank: usize,
    gamma: f64,
    tau_star: f64,
    constant: f64,
) -> CorollaryReport {
    let required_p = constant * tau_star * (rank as f64).sqrt() * (n as f64).ln() / gamma;
    let pairs = pair_count(n) as f64;
    CorollaryReport {
        required_p,
        satisfied: p >= required_p,
        unsatisfiable: required_p > 1.0,
        comparisons: pairs * n_rows as f64 * p,
        required_comparisons: pairs * n_rows as f64 * required_p,
    }
}
