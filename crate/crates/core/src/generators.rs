//! Samplers for random utility models and their mixtures.
//!
//! MNL and Gaussian components draw `Z_a = u_a + ε_a` and sort the items by
//! decreasing `Z`; Mallows components use the repeated-insertion sampler.
//! Mixture rows and masks each draw from their own substream
//! (see [`crate::rng`]), so any row can be regenerated in isolation.

use rand::distr::Open01;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rankings::{embed, pair_count, EmbeddedObservation, Permutation};
use crate::rng::{substream, Purpose};

/// Largest `n` for which Mallows marginals are computed by enumerating `S_n`.
pub const MALLOWS_EXACT_MAX_N: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Mnl,
    Gaussian,
    Mallows,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Mnl => "mnl",
            Family::Gaussian => "gaussian",
            Family::Mallows => "mallows",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mnl" => Ok(Family::Mnl),
            "gaussian" => Ok(Family::Gaussian),
            "mallows" => Ok(Family::Mallows),
            other => Err(Error::invalid(format!("unknown family `{other}`"))),
        }
    }
}

/// One mixture component.
#[derive(Debug, Clone, PartialEq)]
pub enum ComponentSpec {
    /// Gumbel noise with scale `beta`.
    Mnl { utilities: Vec<f64>, beta: f64 },
    /// Normal noise with standard deviation `sigma`.
    Gaussian { utilities: Vec<f64>, sigma: f64 },
    /// `P(σ) ∝ phi^{d_KT(σ, center)}`.
    Mallows { center: Permutation, phi: f64 },
}

impl ComponentSpec {
    pub fn mnl(utilities: Vec<f64>, beta: f64) -> Result<Self> {
        let spec = ComponentSpec::Mnl { utilities, beta };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gaussian(utilities: Vec<f64>, sigma: f64) -> Result<Self> {
        let spec = ComponentSpec::Gaussian { utilities, sigma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn mallows(center: Permutation, phi: f64) -> Result<Self> {
        let spec = ComponentSpec::Mallows { center, phi };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ComponentSpec::Mnl { utilities, beta } => {
                check_utilities(utilities)?;
                if !(beta.is_finite() && *beta > 0.0) {
                    return Err(Error::invalid(format!("MNL beta must be > 0, got {beta}")));
                }
            }
            ComponentSpec::Gaussian { utilities, sigma } => {
                check_utilities(utilities)?;
                if !(sigma.is_finite() && *sigma > 0.0) {
                    return Err(Error::invalid(format!(
                        "Gaussian sigma must be > 0, got {sigma}"
                    )));
                }
            }
            ComponentSpec::Mallows { phi, .. } => {
                if !(*phi > 0.0 && *phi < 1.0) {
                    return Err(Error::invalid(format!(
                        "Mallows phi must lie in (0, 1), got {phi}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn family(&self) -> Family {
        match self {
            ComponentSpec::Mnl { .. } => Family::Mnl,
            ComponentSpec::Gaussian { .. } => Family::Gaussian,
            ComponentSpec::Mallows { .. } => Family::Mallows,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            ComponentSpec::Mnl { utilities, .. } | ComponentSpec::Gaussian { utilities, .. } => {
                utilities.len()
            }
            ComponentSpec::Mallows { center, .. } => center.n(),
        }
    }

    /// The scalar noise parameter: `beta`, `sigma` or `phi`.
    pub fn noise(&self) -> f64 {
        match self {
            ComponentSpec::Mnl { beta, .. } => *beta,
            ComponentSpec::Gaussian { sigma, .. } => *sigma,
            ComponentSpec::Mallows { phi, .. } => *phi,
        }
    }
}

fn check_utilities(utilities: &[f64]) -> Result<()> {
    if utilities.is_empty() {
        return Err(Error::invalid("utility vector is empty"));
    }
    if utilities.iter().any(|u| !u.is_finite()) {
        return Err(Error::invalid("utilities must be finite"));
    }
    Ok(())
}

/// Draws one Gumbel(0, beta) variate as `−β·ln(−ln U)`.
pub fn gumbel<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    -beta * (-u.ln()).ln()
}

/// Item indices sorted by decreasing score; equal scores keep the lower
/// index first.
fn sort_descending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Repeated-insertion sampler: the `j`-th item of the center is inserted
/// `r` slots before the end of the current list with probability `∝ φ^r`.
fn sample_mallows<R: Rng + ?Sized>(center: &Permutation, phi: f64, rng: &mut R) -> Vec<usize> {
    let n = center.n();
    let mut order = Vec::with_capacity(n);
    for j in 0..n {
        let total: f64 = (0..=j).map(|r| phi.powi(r as i32)).sum();
        let mut target = rng.random::<f64>() * total;
        let mut displacement = j;
        let mut weight = 1.0;
        for r in 0..=j {
            if target < weight {
                displacement = r;
                break;
            }
            target -= weight;
            weight *= phi;
        }
        order.insert(j - displacement, center.item_at(j));
    }
    order
}

pub fn sample_component<R: Rng + ?Sized>(spec: &ComponentSpec, rng: &mut R) -> Permutation {
    let order = match spec {
        ComponentSpec::Mnl { utilities, beta } => {
            let scores: Vec<f64> = utilities.iter().map(|u| u + gumbel(*beta, rng)).collect();
            sort_descending(&scores)
        }
        ComponentSpec::Gaussian { utilities, sigma } => {
            let scores: Vec<f64> = utilities
                .iter()
                .map(|u| {
                    let z: f64 = rng.sample(StandardNormal);
                    u + sigma * z
                })
                .collect();
            sort_descending(&scores)
        }
        ComponentSpec::Mallows { center, phi } => sample_mallows(center, *phi, rng),
    };
    Permutation::from_order(order).expect("samplers emit bijections")
}

/// [`sample_component`] driven by a dedicated seed.
pub fn sample_component_seeded(spec: &ComponentSpec, seed: u64) -> Permutation {
    let mut rng = substream(seed, 0, Purpose::Sample);
    sample_component(spec, &mut rng)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Probability that item `a` is ranked ahead of item `b`.
pub fn exact_pairwise_marginal(spec: &ComponentSpec, a: usize, b: usize) -> Result<f64> {
    let n = spec.n();
    if a == b || a >= n || b >= n {
        return Err(Error::InvalidPair { a, b, n });
    }
    match spec {
        ComponentSpec::Mnl { utilities, beta } => {
            // w_a / (w_a + w_b) with w_x = exp(u_x / β), written as a logistic
            let x = (utilities[a] - utilities[b]) / beta;
            Ok(1.0 / (1.0 + (-x).exp()))
        }
        ComponentSpec::Gaussian { utilities, sigma } => Ok(normal_cdf(
            (utilities[a] - utilities[b]) / (sigma * std::f64::consts::SQRT_2),
        )),
        ComponentSpec::Mallows { center, phi } => {
            let pmf = mallows_pmf(center, *phi)?;
            Ok(pmf
                .iter()
                .filter(|(perm, _)| perm.precedes(a, b))
                .map(|(_, prob)| prob)
                .sum())
        }
    }
}

/// Exact Mallows PMF over all of `S_n`, `n ≤ 8`.
pub fn mallows_pmf(center: &Permutation, phi: f64) -> Result<Vec<(Permutation, f64)>> {
    let n = center.n();
    if n > MALLOWS_EXACT_MAX_N {
        return Err(Error::Unsupported(format!(
            "exact Mallows enumeration needs n ≤ {MALLOWS_EXACT_MAX_N}, got {n}"
        )));
    }
    let mut out = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    loop {
        let perm = Permutation::from_order(order.clone())?;
        let dist = crate::rankings::kendall_tau(&perm, center)?;
        out.push((perm, phi.powi(dist as i32)));
        if !next_permutation(&mut order) {
            break;
        }
    }
    let z: f64 = out.iter().map(|(_, w)| w).sum();
    for (_, w) in &mut out {
        *w /= z;
    }
    Ok(out)
}

fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = v.windows(2).rposition(|w| w[0] < w[1]) else {
        return false;
    };
    let j = v.iter().rposition(|&x| x > v[i]).expect("pivot has a successor");
    v.swap(i, j);
    v[i + 1..].reverse();
    true
}

/// The component center `E[ι(σ)]`: coordinate `(a, b)` is
/// `P(a ahead of b) − 1/2`.
pub fn cluster_mean(spec: &ComponentSpec) -> Result<Vec<f64>> {
    let n = spec.n();
    let mut mean = Vec::with_capacity(pair_count(n));
    if let ComponentSpec::Mallows { center, phi } = spec {
        let pmf = mallows_pmf(center, *phi)?;
        for a in 0..n {
            for b in a + 1..n {
                let prob: f64 = pmf
                    .iter()
                    .filter(|(perm, _)| perm.precedes(a, b))
                    .map(|(_, w)| w)
                    .sum();
                mean.push(prob - 0.5);
            }
        }
        return Ok(mean);
    }
    for a in 0..n {
        for b in a + 1..n {
            mean.push(exact_pairwise_marginal(spec, a, b)? - 0.5);
        }
    }
    Ok(mean)
}

/// Mixture weights and components sharing one item count.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    components: Vec<ComponentSpec>,
    weights: Vec<f64>,
}

impl MixtureSpec {
    pub fn new(components: Vec<ComponentSpec>, weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        if weights.len() != components.len() {
            return Err(Error::DimensionMismatch {
                expected: components.len(),
                actual: weights.len(),
            });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("mixture weights must be nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        let n = components[0].n();
        for c in &components {
            c.validate()?;
            if c.n() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: c.n(),
                });
            }
        }
        Ok(MixtureSpec {
            components,
            weights,
        })
    }

    /// Equal weights over the given components.
    pub fn uniform(components: Vec<ComponentSpec>) -> Result<Self> {
        let k = components.len().max(1);
        let mut weights = vec![1.0 / k as f64; components.len()];
        // keep the sum exactly 1 so validation never trips on rounding
        if let Some(last) = weights.last_mut() {
            *last = 1.0 - (k - 1) as f64 / k as f64;
        }
        MixtureSpec::new(components, weights)
    }

    pub fn components(&self) -> &[ComponentSpec] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn n(&self) -> usize {
        self.components[0].n()
    }

    fn draw_label<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        // u landed in the rounding slack above the last cumulative weight
        self.weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
    }
}

/// An observation together with the component it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub observation: EmbeddedObservation,
    pub true_label: usize,
}

/// Draws `num` labelled rows: label from the weights, then a ranking from
/// that component.
pub fn sample_mixture(spec: &MixtureSpec, num: usize, seed: u64) -> Result<Vec<LabeledSample>> {
    if num == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    Ok((0..num)
        .into_par_iter()
        .map(|row| {
            let mut label_rng = substream(seed, row as u64, Purpose::Label);
            let label = spec.draw_label(&mut label_rng);
            let mut rng = substream(seed, row as u64, Purpose::Sample);
            let perm = sample_component(&spec.components[label], &mut rng);
            LabeledSample {
                observation: embed(&perm),
                true_label: label,
            }
        })
        .collect())
}

/// Draws exactly `counts[i]` rows from component `i`, grouped by component.
pub fn sample_with_counts(
    components: &[ComponentSpec],
    counts: &[usize],
    seed: u64,
) -> Result<Vec<LabeledSample>> {
    if components.len() != counts.len() {
        return Err(Error::DimensionMismatch {
            expected: components.len(),
            actual: counts.len(),
        });
    }
    let labels: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(i, &c)| std::iter::repeat_n(i, c))
        .collect();
    Ok(labels
        .into_par_iter()
        .enumerate()
        .map(|(row, label)| {
            let mut rng = substream(seed, row as u64, Purpose::Sample);
            let perm = sample_component(&components[label], &mut rng);
            LabeledSample {
                observation: embed(&perm),
                true_label: label,
            }
        })
        .collect())
}

/// Keeps every coordinate independently with probability `p`.
///
/// Row `ℓ` is masked from its own substream, so its mask does not depend on
/// the other rows.
pub fn mask(samples: &[LabeledSample], p: f64, seed: u64) -> Result<Vec<LabeledSample>> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::invalid(format!(
            "observation probability must lie in (0, 1], got {p}"
        )));
    }
    Ok(samples
        .par_iter()
        .enumerate()
        .map(|(row, sample)| {
            let mut rng = substream(seed, row as u64, Purpose::Mask);
            let mut out = sample.clone();
            for s in out.observation.signs_mut() {
                if rng.random::<f64>() >= p {
                    *s = 0;
                }
            }
            out
        })
        .collect())
}

/// Utilities drawn i.i.d. from `N(0, 1)`.
pub fn gaussian_utilities<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Utilities drawn uniformly from the hypercube `{±1/2}^n`.
pub fn hypercube_utilities<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| if rng.random::<bool>() { 0.5 } else { -0.5 })
        .collect()
}

/// Evenly spaced utilities `(n−1−a)·ρ` assigned to items in a uniformly
/// random order, so consecutive utilities differ by exactly `ρ`.
pub fn shuffled_ladder_utilities<R: Rng + ?Sized>(n: usize, rho: f64, rng: &mut R) -> Vec<f64> {
    let mut ladder: Vec<f64> = (0..n).map(|a| (n - 1 - a) as f64 * rho).collect();
    ladder.shuffle(rng);
    ladder
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rankings::kendall_tau;
    use approx::assert_abs_diff_eq;
    use std::collections::HashMap;

    fn rng(seed: u64) -> crate::rng::StreamRng {
        substream(seed, 0, Purpose::Trial)
    }

    #[test]
    fn validation() {
        assert!(ComponentSpec::mnl(vec![0.0, 1.0], 0.0).is_err());
        assert!(ComponentSpec::gaussian(vec![0.0, 1.0], -1.0).is_err());
        assert!(ComponentSpec::mallows(Permutation::identity(3), 1.0).is_err());
        assert!(ComponentSpec::mallows(Permutation::identity(3), 0.0).is_err());
        assert!(ComponentSpec::mnl(vec![], 1.0).is_err());
        let a = ComponentSpec::mnl(vec![0.0, 1.0], 1.0).unwrap();
        let b = ComponentSpec::mnl(vec![0.0, 1.0, 2.0], 1.0).unwrap();
        assert!(MixtureSpec::new(vec![a.clone(), b], vec![0.5, 0.5]).is_err());
        assert!(MixtureSpec::new(vec![a.clone()], vec![0.9]).is_err());
        assert!(MixtureSpec::new(vec![a.clone(), a], vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn gumbel_mean() {
        let mut r = rng(1);
        let beta = 2.0;
        let m = 100_000;
        let mean: f64 = (0..m).map(|_| gumbel(beta, &mut r)).sum::<f64>() / m as f64;
        let euler = 0.577_215_664_901_532_9;
        assert!((mean - beta * euler).abs() < 0.02 * beta * euler, "mean {mean}");
    }

    #[test]
    fn noiseless_gaussian_sorts_utilities() {
        let spec = ComponentSpec::gaussian(vec![3.0, 2.0, 1.0], 1e-9).unwrap();
        let mut r = rng(2);
        for _ in 0..1000 {
            assert_eq!(sample_component(&spec, &mut r).order(), &[0, 1, 2]);
        }
    }

    #[test]
    fn ties_break_toward_lower_index() {
        assert_eq!(sort_descending(&[1.0, 2.0, 1.0, 2.0]), vec![1, 3, 0, 2]);
    }

    #[test]
    fn seeded_sampling_is_deterministic() {
        let spec = ComponentSpec::mnl(vec![0.3, -0.1, 1.2, 0.0], 1.0).unwrap();
        assert_eq!(
            sample_component_seeded(&spec, 99),
            sample_component_seeded(&spec, 99)
        );
    }

    #[test]
    fn mnl_two_item_marginal() {
        let u = [0.7, -0.2];
        let spec = ComponentSpec::mnl(u.to_vec(), 1.0).unwrap();
        let mut r = rng(3);
        let m = 100_000;
        let wins = (0..m)
            .filter(|_| sample_component(&spec, &mut r).precedes(0, 1))
            .count();
        let expected = u[0].exp() / (u[0].exp() + u[1].exp());
        assert!((wins as f64 / m as f64 - expected).abs() < 0.01);
    }

    #[test]
    fn exact_marginal_values() {
        let mnl = ComponentSpec::mnl(vec![1.0, 0.0], 1.0).unwrap();
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(exact_pairwise_marginal(&mnl, 0, 1).unwrap(), e / (e + 1.0), epsilon = 1e-14);
        assert_abs_diff_eq!(exact_pairwise_marginal(&mnl, 0, 1).unwrap(), 0.731_058_578_630_004_9, epsilon = 1e-12);
        let flat = ComponentSpec::mnl(vec![0.4, 0.4], 0.3).unwrap();
        assert_eq!(exact_pairwise_marginal(&flat, 0, 1).unwrap(), 0.5);
        let g = ComponentSpec::gaussian(vec![1.0, 0.0], 1.0).unwrap();
        // Φ(1/√2)
        assert_abs_diff_eq!(exact_pairwise_marginal(&g, 0, 1).unwrap(), 0.760_249_938_906_523_5, epsilon = 1e-12);
        assert!(exact_pairwise_marginal(&g, 1, 1).is_err());
    }

    #[test]
    fn mallows_marginal_limits_and_size_guard() {
        let spec = ComponentSpec::mallows(Permutation::identity(9), 0.5).unwrap();
        assert!(matches!(
            exact_pairwise_marginal(&spec, 0, 1),
            Err(Error::Unsupported(_))
        ));
        let spec = ComponentSpec::mallows(Permutation::identity(2), 0.25).unwrap();
        // P(identity) = 1/(1+φ)
        assert_abs_diff_eq!(exact_pairwise_marginal(&spec, 0, 1).unwrap(), 0.8, epsilon = 1e-14);
    }

    #[test]
    fn mallows_sampler_matches_brute_force_pmf() {
        for n in 1..=5 {
            let center = Permutation::from_order((0..n).rev().collect()).unwrap();
            let phi = 0.6;
            let pmf = mallows_pmf(&center, phi).unwrap();
            let spec = ComponentSpec::mallows(center.clone(), phi).unwrap();
            let mut r = rng(10 + n as u64);
            let m = 100_000;
            let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
            for _ in 0..m {
                *counts.entry(sample_component(&spec, &mut r).order().to_vec()).or_default() += 1;
            }
            let tv: f64 = pmf
                .iter()
                .map(|(perm, p)| {
                    let emp = counts.get(perm.order()).copied().unwrap_or(0) as f64 / m as f64;
                    (emp - p).abs()
                })
                .sum::<f64>()
                / 2.0;
            assert!(tv <= 0.02, "n={n} tv={tv}");
        }
    }

    #[test]
    fn mallows_pmf_sums_to_one_and_peaks_at_center() {
        let center = Permutation::from_order(vec![2, 0, 3, 1]).unwrap();
        let pmf = mallows_pmf(&center, 0.5).unwrap();
        assert_eq!(pmf.len(), 24);
        assert_abs_diff_eq!(pmf.iter().map(|(_, p)| p).sum::<f64>(), 1.0, epsilon = 1e-12);
        let (best, _) = pmf.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        assert_eq!(kendall_tau(best, &center).unwrap(), 0);
    }

    #[test]
    fn cluster_mean_equal_utilities_is_zero() {
        let spec = ComponentSpec::gaussian(vec![0.5; 6], 0.7).unwrap();
        assert!(cluster_mean(&spec).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn cluster_mean_mnl_per_pair() {
        let spec = ComponentSpec::mnl(vec![1.0, 0.0, -1.0], 1.0).unwrap();
        let mean = cluster_mean(&spec).unwrap();
        let logistic = |x: f64| 1.0 / (1.0 + (-x).exp());
        let expected = [logistic(1.0) - 0.5, logistic(2.0) - 0.5, logistic(1.0) - 0.5];
        for (m, e) in mean.iter().zip(expected) {
            assert_abs_diff_eq!(*m, e, epsilon = 1e-14);
        }
    }

    fn monte_carlo_mean(spec: &ComponentSpec, m: usize, seed: u64) -> Vec<f64> {
        let mut r = rng(seed);
        let d = pair_count(spec.n());
        let mut acc = vec![0.0; d];
        for _ in 0..m {
            for (a, v) in acc.iter_mut().zip(embed(&sample_component(spec, &mut r)).filled_values()) {
                *a += v;
            }
        }
        acc.iter().map(|a| a / m as f64).collect()
    }

    #[test]
    fn cluster_mean_matches_sampling_for_every_family() {
        let specs = [
            ComponentSpec::mnl(vec![0.5, -0.3, 1.1, 0.0], 0.8).unwrap(),
            ComponentSpec::gaussian(vec![0.5, -0.3, 1.1, 0.0], 0.6).unwrap(),
            ComponentSpec::mallows(Permutation::from_order(vec![1, 3, 0, 2]).unwrap(), 0.4).unwrap(),
        ];
        for (i, spec) in specs.iter().enumerate() {
            let exact = cluster_mean(spec).unwrap();
            let emp = monte_carlo_mean(spec, 100_000, 20 + i as u64);
            for (e, x) in emp.iter().zip(&exact) {
                assert!((e - x).abs() < 0.01, "{:?}: {e} vs {x}", spec.family());
            }
        }
    }

    #[test]
    fn monte_carlo_error_shrinks_like_inverse_sqrt() {
        let spec = ComponentSpec::gaussian(vec![0.2, -0.4, 0.9, 0.0, 0.3], 1.0).unwrap();
        let exact = cluster_mean(&spec).unwrap();
        let err = |m: usize| {
            // average over several seeds to tame the spread of a single run
            (0..8)
                .map(|s| {
                    let emp = monte_carlo_mean(&spec, m, 100 + s);
                    emp.iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
                })
                .sum::<f64>()
                / 8.0
        };
        let small = err(1_000);
        let large = err(16_000);
        // √16 = 4; allow generous slack
        let ratio = small / large;
        assert!(ratio > 2.5 && ratio < 6.5, "ratio {ratio}");
    }

    #[test]
    fn single_component_labels_are_zero() {
        let spec = MixtureSpec::uniform(vec![ComponentSpec::mnl(vec![0.0, 1.0, 2.0], 1.0).unwrap()]).unwrap();
        let rows = sample_mixture(&spec, 50, 4).unwrap();
        assert!(rows.iter().all(|s| s.true_label == 0));
        assert!(sample_mixture(&spec, 0, 4).is_err());
    }

    #[test]
    fn label_frequencies_follow_weights() {
        let c = ComponentSpec::gaussian(vec![0.0, 1.0], 1.0).unwrap();
        let spec = MixtureSpec::new(vec![c.clone(), c], vec![0.5, 0.5]).unwrap();
        let rows = sample_mixture(&spec, 100_000, 5).unwrap();
        let zeros = rows.iter().filter(|s| s.true_label == 0).count() as f64 / 1e5;
        assert!((zeros - 0.5).abs() < 0.01);
    }

    #[test]
    fn mixture_rows_sit_near_their_component_mean() {
        let mut r = rng(6);
        let comps: Vec<ComponentSpec> = (0..2)
            .map(|_| ComponentSpec::gaussian(gaussian_utilities(10, &mut r), 0.3).unwrap())
            .collect();
        let means: Vec<Vec<f64>> = comps.iter().map(|c| cluster_mean(c).unwrap()).collect();
        let spec = MixtureSpec::uniform(comps).unwrap();
        let rows = sample_mixture(&spec, 100, 7).unwrap();
        for label in 0..2 {
            let group: Vec<_> = rows.iter().filter(|s| s.true_label == label).collect();
            let d = means[0].len();
            let mut avg = vec![0.0; d];
            for s in &group {
                for (a, v) in avg.iter_mut().zip(s.observation.filled_values()) {
                    *a += v / group.len() as f64;
                }
            }
            let dist = |m: &Vec<f64>| avg.iter().zip(m).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            assert!(dist(&means[label]) < dist(&means[1 - label]));
        }
    }

    #[test]
    fn mask_edge_cases() {
        let spec = MixtureSpec::uniform(vec![ComponentSpec::mnl(vec![0.0, 1.0, 2.0, 3.0], 1.0).unwrap()]).unwrap();
        let rows = sample_mixture(&spec, 20, 8).unwrap();
        assert_eq!(mask(&rows, 1.0, 1).unwrap(), rows);
        assert!(mask(&rows, 0.0, 1).is_err());
        assert!(mask(&rows, 1.5, 1).is_err());
    }

    #[test]
    fn mask_keeps_fraction_p() {
        let spec = MixtureSpec::uniform(vec![ComponentSpec::gaussian(vec![0.0; 50], 1.0).unwrap()]).unwrap();
        // d = 1225, 817 rows ≈ 10^6 entries
        let rows = sample_mixture(&spec, 817, 9).unwrap();
        let masked = mask(&rows, 0.3, 10).unwrap();
        let total = (817 * 1225) as f64;
        let kept: usize = masked.iter().map(|s| s.observation.observed_count()).sum();
        assert!((kept as f64 / total - 0.3).abs() < 0.002);
    }

    #[test]
    fn row_mask_depends_only_on_its_index() {
        let spec = MixtureSpec::uniform(vec![ComponentSpec::mnl(vec![0.0, 0.5, 1.0, 1.5, 2.0], 1.0).unwrap()]).unwrap();
        let rows = sample_mixture(&spec, 30, 11).unwrap();
        let full = mask(&rows, 0.5, 12).unwrap();
        let prefix = mask(&rows[..10], 0.5, 12).unwrap();
        assert_eq!(&full[..10], &prefix[..]);
    }

    #[test]
    fn utility_helpers() {
        let mut r = rng(13);
        let h = hypercube_utilities(100, &mut r);
        assert!(h.iter().all(|&x| x == 0.5 || x == -0.5));
        let mut l = shuffled_ladder_utilities(6, 0.3, &mut r);
        l.sort_by(f64::total_cmp);
        for (i, x) in l.iter().enumerate() {
            assert_abs_diff_eq!(*x, i as f64 * 0.3, epsilon = 1e-12);
        }
        assert_eq!(gaussian_utilities(7, &mut r).len(), 7);
    }
}
