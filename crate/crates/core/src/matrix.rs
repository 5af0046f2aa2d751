//! Observation matrices, SVD, and hard singular value thresholding.
//!
//! Observed rows are stacked into an `N × d` matrix with missing cells
//! filled by zero. The estimate keeps the singular triplets of that matrix
//! whose singular value strictly exceeds the threshold and rescales by the
//! observed fraction `p̂`.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};
use crate::generators::LabeledSample;
use crate::rankings::EmbeddedObservation;

const SVD_EPS: f64 = 1e-14;
const SVD_MAX_ITER: usize = 0; // 0 lets nalgebra iterate until convergence

/// Stacked observations with missing cells stored as 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMatrix {
    values: DMatrix<f64>,
    mask: Vec<bool>,
}

impl ObservationMatrix {
    pub fn from_observations<'a, I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a EmbeddedObservation>,
    {
        let rows: Vec<&EmbeddedObservation> = rows.into_iter().collect();
        let Some(first) = rows.first() else {
            return Err(Error::invalid("observation matrix needs at least one row"));
        };
        let d = first.d();
        if d == 0 {
            return Err(Error::invalid("observations have no coordinates"));
        }
        let n_rows = rows.len();
        let mut values = DMatrix::zeros(n_rows, d);
        let mut mask = vec![false; n_rows * d];
        for (i, row) in rows.iter().enumerate() {
            if row.d() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: row.d(),
                });
            }
            for (j, &s) in row.signs().iter().enumerate() {
                if s != 0 {
                    values[(i, j)] = 0.5 * f64::from(s);
                    mask[i * d + j] = true;
                }
            }
        }
        Ok(ObservationMatrix { values, mask })
    }

    pub fn from_samples(samples: &[LabeledSample]) -> Result<Self> {
        ObservationMatrix::from_observations(samples.iter().map(|s| &s.observation))
    }

    /// Builds the matrix from raw entries; observed cells must be `±0.5`.
    pub fn from_entries(rows: &[Vec<Option<f64>>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::invalid("observation matrix needs at least one row"));
        };
        let d = first.len();
        if d == 0 {
            return Err(Error::invalid("observations have no coordinates"));
        }
        let mut values = DMatrix::zeros(rows.len(), d);
        let mut mask = vec![false; rows.len() * d];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: row.len(),
                });
            }
            for (j, entry) in row.iter().enumerate() {
                if let Some(v) = *entry {
                    if v != 0.5 && v != -0.5 {
                        return Err(Error::invalid(format!(
                            "observed entry ({i}, {j}) = {v} is not ±0.5"
                        )));
                    }
                    values[(i, j)] = v;
                    mask[i * d + j] = true;
                }
            }
        }
        Ok(ObservationMatrix { values, mask })
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// Zero-filled values.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn is_observed(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.ncols() + col]
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn entry(&self, row: usize, col: usize) -> Option<f64> {
        self.is_observed(row, col).then(|| self.values[(row, col)])
    }
}

/// Observed fraction of cells, floored at `1/(N·d)`.
pub fn estimate_p_hat(obs: &ObservationMatrix) -> f64 {
    let total = (obs.nrows() * obs.ncols()) as f64;
    (obs.observed_count() as f64 / total).max(1.0 / total)
}

/// Thin SVD with singular values in nonincreasing order.
#[derive(Debug, Clone)]
pub struct SvdResult {
    singular_values: Vec<f64>,
    u: DMatrix<f64>,
    v_t: DMatrix<f64>,
}

impl SvdResult {
    pub fn compute(matrix: &DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = matrix.shape();
        if rows == 0 || cols == 0 {
            return Err(Error::Numerical("SVD of an empty matrix".into()));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("SVD input has non-finite entries".into()));
        }
        let svd = SVD::try_new(matrix.clone(), true, true, SVD_EPS, SVD_MAX_ITER).ok_or_else(
            || Error::Numerical(format!("SVD did not converge for a {rows}×{cols} matrix")),
        )?;
        let u = svd.u.ok_or_else(|| Error::Numerical("SVD returned no U".into()))?;
        let v_t = svd
            .v_t
            .ok_or_else(|| Error::Numerical("SVD returned no Vᵀ".into()))?;
        let singular_values: Vec<f64> = svd.singular_values.iter().copied().collect();
        if singular_values.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Numerical("singular values are not sorted".into()));
        }
        Ok(SvdResult {
            singular_values,
            u,
            v_t,
        })
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// Left singular vectors as columns, `N × q`.
    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// Right singular vectors as rows, `q × d`.
    pub fn v_t(&self) -> &DMatrix<f64> {
        &self.v_t
    }

    pub fn nrows(&self) -> usize {
        self.u.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.v_t.ncols()
    }

    /// `Σ_{j<rank} σ_j u_j v_jᵀ`.
    pub fn truncated(&self, rank: usize) -> DMatrix<f64> {
        let rank = rank.min(self.singular_values.len());
        let u = self.u.columns(0, rank);
        let s = DMatrix::from_diagonal(&DVector::from_row_slice(&self.singular_values[..rank]));
        let v_t = self.v_t.rows(0, rank);
        u * s * v_t
    }
}

/// Chooses the singular value threshold.
///
/// With a target rank `r` the threshold is the midpoint of `σ_r` and
/// `σ_{r+1}` (`σ_{q+1} = 0`). Without one, `r` is the index of the largest
/// ratio `σ_j / σ_{j+1}` for `j ≤ ⌈√min(N, d)⌉`.
pub fn select_threshold(svd: &SvdResult, target_rank: Option<usize>) -> Result<f64> {
    select_threshold_from_spectrum(svd.singular_values(), svd.nrows(), svd.ncols(), target_rank)
}

pub fn select_threshold_from_spectrum(
    spectrum: &[f64],
    rows: usize,
    cols: usize,
    target_rank: Option<usize>,
) -> Result<f64> {
    let q = spectrum.len();
    if q < 2 {
        return Err(Error::invalid(format!(
            "threshold selection needs at least 2 singular values, got {q}"
        )));
    }
    let sigma = |j: usize| if j <= q { spectrum[j - 1] } else { 0.0 };
    let rank = match target_rank {
        Some(r) if r == 0 || r > q => {
            return Err(Error::invalid(format!(
                "target rank {r} outside 1..={q}"
            )))
        }
        Some(r) => r,
        None => {
            let m = rows.min(cols);
            let cap = (m as f64).sqrt().ceil() as usize;
            let j_max = m.min(cap).min(q - 1).max(1);
            let mut best = (1, f64::NEG_INFINITY);
            for j in 1..=j_max {
                let (hi, lo) = (sigma(j), sigma(j + 1));
                let ratio = if lo > 0.0 {
                    hi / lo
                } else if hi > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                };
                if ratio > best.1 {
                    best = (j, ratio);
                }
            }
            best.0
        }
    };
    Ok(0.5 * (sigma(rank) + sigma(rank + 1)))
}

/// Output of hard singular value thresholding.
#[derive(Debug, Clone)]
pub struct HsvtEstimate {
    /// `HSVT_t(Y) / p̂`.
    pub m_hat: DMatrix<f64>,
    pub kept_rank: usize,
    pub threshold_used: f64,
    pub p_hat: f64,
    /// Kept right singular vectors as columns, `d × kept_rank`.
    pub basis: DMatrix<f64>,
    /// Row coordinates in `basis`, `N × kept_rank`. Pairwise distances
    /// between these rows equal those between rows of `m_hat`.
    pub scores: DMatrix<f64>,
}

impl HsvtEstimate {
    /// The row map induced by the thresholding: orthogonal projection onto
    /// the kept right singular subspace (no `1/p̂` rescaling).
    pub fn project_row(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.basis.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.basis.nrows(),
                actual: w.len(),
            });
        }
        let w = DVector::from_column_slice(w);
        let coeffs = self.basis.tr_mul(&w);
        Ok((&self.basis * coeffs).iter().copied().collect())
    }
}

pub fn hsvt(obs: &ObservationMatrix, threshold: f64) -> Result<HsvtEstimate> {
    let svd = SvdResult::compute(obs.values())?;
    hsvt_with_svd(obs, &svd, threshold)
}

/// Thresholds a precomputed SVD of `obs.values()`.
pub fn hsvt_with_svd(obs: &ObservationMatrix, svd: &SvdResult, threshold: f64) -> Result<HsvtEstimate> {
    if !(threshold >= 0.0) {
        return Err(Error::invalid(format!(
            "singular value threshold must be ≥ 0, got {threshold}"
        )));
    }
    if svd.nrows() != obs.nrows() || svd.ncols() != obs.ncols() {
        return Err(Error::DimensionMismatch {
            expected: obs.nrows() * obs.ncols(),
            actual: svd.nrows() * svd.ncols(),
        });
    }
    let p_hat = estimate_p_hat(obs);
    let kept_rank = svd
        .singular_values()
        .iter()
        .take_while(|&&s| s > threshold)
        .count();
    let mut scores = svd.u().columns(0, kept_rank).into_owned();
    for (j, mut col) in scores.column_iter_mut().enumerate() {
        col *= svd.singular_values()[j] / p_hat;
    }
    let basis = svd.v_t().rows(0, kept_rank).transpose();
    let m_hat = &scores * basis.transpose();
    Ok(HsvtEstimate {
        m_hat,
        kept_rank,
        threshold_used: threshold,
        p_hat,
        basis,
        scores,
    })
}

/// Sub-Gaussian norm of a centred Bernoulli(`p`) variable as used in the
/// noise bound: `(2p − 1) / (2 ln(p/(1−p)))`, with 0 at the endpoints and
/// 1/4 at `p = 1/2`.
pub fn k_of_p(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else if p == 0.5 {
        0.25
    } else {
        (2.0 * p - 1.0) / (2.0 * (p / (1.0 - p)).ln())
    }
}

/// Noise level
/// `C{(√p + p·τ*)√N + (τ* + K(p))(n + √n·N^{1/4})}`.
pub fn delta_bound(n_rows: f64, n_items: f64, p: f64, tau_star: f64, c: f64) -> f64 {
    let first = (p.sqrt() + p * tau_star) * n_rows.sqrt();
    let second = (tau_star + k_of_p(p)) * (n_items + n_items.sqrt() * n_rows.powf(0.25));
    c * (first + second)
}

/// Recovers `n` from `d = n(n−1)/2`.
pub fn items_for_pairs(d: usize) -> Option<usize> {
    let n = ((1.0 + (1.0 + 8.0 * d as f64).sqrt()) / 2.0).round() as usize;
    (n * (n - 1) / 2 == d).then_some(n)
}

/// Stacks per-row component means into the `N × d` mean matrix.
pub fn mean_matrix(labels: &[usize], means: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = means.first().map(Vec::len).unwrap_or(0);
    let mut m = DMatrix::zeros(labels.len(), d);
    for (i, &label) in labels.iter().enumerate() {
        let mean = means
            .get(label)
            .ok_or_else(|| Error::invalid(format!("label {label} has no mean vector")))?;
        if mean.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: mean.len(),
            });
        }
        for (j, v) in mean.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    Ok(m)
}

pub fn singular_values(matrix: &DMatrix<f64>) -> Result<Vec<f64>> {
    let svd = SVD::try_new(matrix.clone(), false, false, SVD_EPS, SVD_MAX_ITER)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    Ok(svd.singular_values.iter().copied().collect())
}

/// Numerical rank: singular values above `1e-8·σ₁`.
pub fn numerical_rank(spectrum: &[f64]) -> usize {
    let top = spectrum.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return 0;
    }
    spectrum.iter().filter(|&&s| s > 1e-8 * top).count()
}

/// Synthetic-data diagnostics comparing the observed noise with the
/// theoretical noise level and the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    /// `‖Y − pM‖₂`.
    pub noise_norm: f64,
    /// The formula noise level `Δ`.
    pub delta: f64,
    pub rank_m: usize,
    pub sigma_r_m: f64,
    pub sigma_r_pm: f64,
    /// `p > 4Δ / σ_r(M)`.
    pub p_condition: bool,
    /// `Δ < t₁ < σ_r(pM) − Δ`.
    pub threshold_proper: bool,
    /// `‖Y − pM‖₂ < t₁ < σ_r(pM) − ‖Y − pM‖₂`.
    pub rank_hypothesis: bool,
    /// `rank(M)` when `rank_hypothesis` holds.
    pub predicted_rank: Option<usize>,
    /// `#{j : σ_j(Y) > t₁}`.
    pub observed_rank: usize,
}

pub fn spectral_gap_check(
    obs: &ObservationMatrix,
    mean: &DMatrix<f64>,
    p: f64,
    threshold: f64,
    tau_star: f64,
    c: f64,
) -> Result<GapReport> {
    if mean.shape() != obs.values().shape() {
        return Err(Error::DimensionMismatch {
            expected: obs.nrows() * obs.ncols(),
            actual: mean.nrows() * mean.ncols(),
        });
    }
    let n_items = items_for_pairs(obs.ncols())
        .ok_or_else(|| Error::invalid(format!("{} is not a pair count", obs.ncols())))?;
    let noise = obs.values() - mean * p;
    let noise_norm = singular_values(&noise)?.first().copied().unwrap_or(0.0);
    let mean_spectrum = singular_values(mean)?;
    let rank_m = numerical_rank(&mean_spectrum);
    let sigma_r_m = if rank_m > 0 { mean_spectrum[rank_m - 1] } else { 0.0 };
    let sigma_r_pm = p * sigma_r_m;
    let delta = delta_bound(obs.nrows() as f64, n_items as f64, p, tau_star, c);
    let p_condition = sigma_r_m > 0.0 && p > 4.0 * delta / sigma_r_m;
    let threshold_proper = delta < threshold && threshold < sigma_r_pm - delta;
    let rank_hypothesis = noise_norm < threshold && threshold < sigma_r_pm - noise_norm;
    let observed_rank = singular_values(obs.values())?
        .iter()
        .filter(|&&s| s > threshold)
        .count();
    Ok(GapReport {
        noise_norm,
        delta,
        rank_m,
        sigma_r_m,
        sigma_r_pm,
        p_condition,
        threshold_proper,
        rank_hypothesis,
        predicted_rank: rank_hypothesis.then_some(rank_m),
        observed_rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{cluster_mean, gaussian_utilities, mask, sample_mixture, ComponentSpec, MixtureSpec};
    use crate::rng::{substream, Purpose};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut r = substream(seed, 0, Purpose::Trial);
        DMatrix::from_fn(rows, cols, |_, _| r.random::<f64>() - 0.5)
    }

    fn two_cluster_setup(
        n: usize,
        rows: usize,
        sigma: f64,
        p: f64,
        seed: u64,
    ) -> (ObservationMatrix, DMatrix<f64>) {
        let mut r = substream(seed, 0, Purpose::Utilities);
        let comps: Vec<ComponentSpec> = (0..2)
            .map(|_| ComponentSpec::gaussian(gaussian_utilities(n, &mut r), sigma).unwrap())
            .collect();
        let means: Vec<Vec<f64>> = comps.iter().map(|c| cluster_mean(c).unwrap()).collect();
        let spec = MixtureSpec::uniform(comps).unwrap();
        let samples = mask(&sample_mixture(&spec, rows, seed).unwrap(), p, seed + 1).unwrap();
        let labels: Vec<usize> = samples.iter().map(|s| s.true_label).collect();
        (
            ObservationMatrix::from_samples(&samples).unwrap(),
            mean_matrix(&labels, &means).unwrap(),
        )
    }

    #[test]
    fn missing_cells_are_zero() {
        let obs = ObservationMatrix::from_entries(&[
            vec![Some(0.5), None, Some(-0.5)],
            vec![None, None, Some(0.5)],
        ])
        .unwrap();
        assert_eq!(obs.values()[(0, 1)], 0.0);
        assert_eq!(obs.values()[(1, 0)], 0.0);
        assert_eq!(obs.entry(0, 2), Some(-0.5));
        assert_eq!(obs.entry(1, 1), None);
        assert_eq!(obs.observed_count(), 3);
        assert!(ObservationMatrix::from_entries(&[vec![Some(0.3)]]).is_err());
        assert!(ObservationMatrix::from_entries(&[vec![Some(0.5)], vec![]]).is_err());
    }

    #[test]
    fn p_hat_cases() {
        let full = ObservationMatrix::from_entries(&vec![vec![Some(0.5); 4]; 3]).unwrap();
        assert_eq!(estimate_p_hat(&full), 1.0);
        let empty = ObservationMatrix::from_entries(&vec![vec![None; 10]; 10]).unwrap();
        assert_eq!(estimate_p_hat(&empty), 0.01);
    }

    #[test]
    fn svd_contract() {
        for (rows, cols, seed) in [(30, 12, 1), (12, 30, 2), (25, 25, 3)] {
            let m = random_matrix(rows, cols, seed);
            let svd = SvdResult::compute(&m).unwrap();
            let q = rows.min(cols);
            assert_eq!(svd.singular_values().len(), q);
            assert!(svd.singular_values().windows(2).all(|w| w[0] >= w[1]));
            assert!(svd.singular_values().iter().all(|&s| s >= 0.0));
            let utu = svd.u().tr_mul(svd.u());
            let vvt = svd.v_t() * svd.v_t().transpose();
            assert!((utu - DMatrix::identity(q, q)).amax() < 1e-8);
            assert!((vvt - DMatrix::identity(q, q)).amax() < 1e-8);
            let err = (svd.truncated(q) - &m).norm() / m.norm();
            assert!(err < 1e-8, "reconstruction {err}");
        }
    }

    #[test]
    fn svd_is_deterministic() {
        let m = random_matrix(40, 20, 4);
        let a = SvdResult::compute(&m).unwrap();
        let b = SvdResult::compute(&m).unwrap();
        assert_eq!(a.singular_values(), b.singular_values());
        assert_eq!(a.u(), b.u());
    }

    #[test]
    fn threshold_examples() {
        let spec = [10.0, 9.0, 0.1, 0.05];
        let t = select_threshold_from_spectrum(&spec, 4, 4, None).unwrap();
        assert_abs_diff_eq!(t, 4.55, epsilon = 1e-12);
        assert_eq!(select_threshold_from_spectrum(&[5.0, 1.0], 2, 2, Some(1)).unwrap(), 3.0);
        assert_eq!(select_threshold_from_spectrum(&[5.0, 1.0], 2, 2, Some(2)).unwrap(), 0.5);
        assert!(select_threshold_from_spectrum(&[5.0], 1, 1, None).is_err());
        assert!(select_threshold_from_spectrum(&[5.0, 1.0], 2, 2, Some(3)).is_err());
        assert!(select_threshold_from_spectrum(&[5.0, 1.0], 2, 2, Some(0)).is_err());
    }

    #[test]
    fn hsvt_zero_threshold_reproduces_full_matrix() {
        let (obs, _) = two_cluster_setup(6, 40, 0.5, 1.0, 5);
        let est = hsvt(&obs, 0.0).unwrap();
        assert_eq!(est.p_hat, 1.0);
        assert!((&est.m_hat - obs.values()).amax() < 1e-10);
    }

    #[test]
    fn hsvt_above_top_singular_value_is_zero() {
        let (obs, _) = two_cluster_setup(6, 40, 0.5, 1.0, 6);
        let top = SvdResult::compute(obs.values()).unwrap().singular_values()[0];
        let est = hsvt(&obs, top + 1.0).unwrap();
        assert_eq!(est.kept_rank, 0);
        assert!(est.m_hat.iter().all(|&x| x == 0.0));
        assert!(hsvt(&obs, -1.0).is_err());
    }

    #[test]
    fn hsvt_recovers_noiseless_rank_two() {
        let mut r = substream(7, 0, Purpose::Utilities);
        let a: Vec<f64> = (0..15).map(|_| r.random::<f64>() - 0.5).collect();
        let b: Vec<f64> = (0..15).map(|_| r.random::<f64>() - 0.5).collect();
        let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let m = mean_matrix(&labels, &[a, b]).unwrap();
        let svd = SvdResult::compute(&m).unwrap();
        assert!(svd.singular_values()[2] < 1e-10);
        let t = 0.5 * svd.singular_values()[1];
        // feed the noiseless matrix through the estimator with p̂ = 1
        let obs = ObservationMatrix {
            values: m.clone(),
            mask: vec![true; 20 * 15],
        };
        let est = hsvt_with_svd(&obs, &svd, t).unwrap();
        assert_eq!(est.kept_rank, 2);
        assert!((&est.m_hat - &m).amax() < 1e-8);
    }

    #[test]
    fn estimate_has_kept_rank() {
        let (obs, _) = two_cluster_setup(8, 60, 0.4, 0.7, 8);
        let svd = SvdResult::compute(obs.values()).unwrap();
        let t = select_threshold(&svd, Some(2)).unwrap();
        let est = hsvt_with_svd(&obs, &svd, t).unwrap();
        assert_eq!(est.kept_rank, 2);
        let sv = singular_values(&est.m_hat).unwrap();
        assert!(sv[2] <= 1e-8 * sv[0]);
    }

    #[test]
    fn scores_preserve_row_distances() {
        let (obs, _) = two_cluster_setup(8, 30, 0.4, 0.8, 9);
        let est = hsvt(&obs, 1.0).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let dm = (est.m_hat.row(i) - est.m_hat.row(j)).norm();
                let ds = (est.scores.row(i) - est.scores.row(j)).norm();
                assert_abs_diff_eq!(dm, ds, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn projection_is_a_contraction() {
        let (obs, _) = two_cluster_setup(8, 50, 0.5, 0.6, 10);
        let est = hsvt(&obs, 2.0).unwrap();
        let mut r = substream(11, 0, Purpose::Trial);
        for _ in 0..1000 {
            let w: Vec<f64> = (0..obs.ncols()).map(|_| r.random::<f64>() * 2.0 - 1.0).collect();
            let pw = est.project_row(&w).unwrap();
            let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(norm(&pw) <= norm(&w) + 1e-12);
        }
    }

    #[test]
    fn projection_reproduces_rows() {
        let (obs, _) = two_cluster_setup(8, 50, 0.5, 0.6, 12);
        let est = hsvt(&obs, 2.0).unwrap();
        for i in 0..obs.nrows() {
            let row: Vec<f64> = obs.values().row(i).iter().copied().collect();
            let projected = est.project_row(&row).unwrap();
            for (j, v) in projected.iter().enumerate() {
                assert!((v / est.p_hat - est.m_hat[(i, j)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rethresholding_keeps_rank() {
        let (obs, _) = two_cluster_setup(8, 80, 0.3, 0.8, 13);
        let svd = SvdResult::compute(obs.values()).unwrap();
        let t = select_threshold(&svd, None).unwrap();
        let est = hsvt_with_svd(&obs, &svd, t).unwrap();
        let again = hsvt(
            &ObservationMatrix {
                values: est.m_hat.clone(),
                mask: vec![true; obs.nrows() * obs.ncols()],
            },
            t / est.p_hat,
        )
        .unwrap();
        assert_eq!(again.kept_rank, est.kept_rank);
    }

    #[test]
    fn noise_has_zero_mean() {
        let n = 5;
        let p = 0.6;
        let mut r = substream(14, 0, Purpose::Utilities);
        let comps: Vec<ComponentSpec> = (0..2)
            .map(|_| ComponentSpec::mnl(gaussian_utilities(n, &mut r), 1.0).unwrap())
            .collect();
        let means: Vec<Vec<f64>> = comps.iter().map(|c| cluster_mean(c).unwrap()).collect();
        let spec = MixtureSpec::uniform(comps).unwrap();
        let reps = 4000;
        let d = 10;
        let mut acc = vec![0.0; d];
        for rep in 0..reps {
            let samples = mask(&sample_mixture(&spec, 1, 1000 + rep).unwrap(), p, 5000 + rep).unwrap();
            let obs = ObservationMatrix::from_samples(&samples).unwrap();
            let label = samples[0].true_label;
            for j in 0..d {
                acc[j] += obs.values()[(0, j)] - p * means[label][j];
            }
        }
        for a in acc {
            // per-entry std ≤ 1/2, so 4000 reps gives a standard error below 0.008
            assert!((a / reps as f64).abs() < 0.03);
        }
    }

    #[test]
    fn k_of_p_values() {
        assert_eq!(k_of_p(0.5), 0.25);
        assert_eq!(k_of_p(0.0), 0.0);
        assert_eq!(k_of_p(1.0), 0.0);
        assert_abs_diff_eq!(k_of_p(0.9), 0.8 / (2.0 * 9f64.ln()), epsilon = 1e-15);
        assert_abs_diff_eq!(k_of_p(0.9), 0.182_047_845_325_367_2, epsilon = 1e-12);
        // continuity and range
        assert_abs_diff_eq!(k_of_p(0.5 + 1e-7), 0.25, epsilon = 1e-9);
        for i in 0..=1000 {
            let k = k_of_p(i as f64 / 1000.0);
            assert!((0.0..=0.25).contains(&k));
        }
        assert_abs_diff_eq!(k_of_p(0.2), k_of_p(0.8), epsilon = 1e-15);
    }

    #[test]
    fn delta_examples() {
        // p → 0: (0 + 0)·1 + (1 + K(p))(1 + 1) → 2; K vanishes only like 1/ln(1/p)
        let p = 1e-300;
        assert_abs_diff_eq!(delta_bound(1.0, 1.0, p, 1.0, 1.0), 2.0 * (1.0 + k_of_p(p)), epsilon = 1e-12);
        assert_abs_diff_eq!(delta_bound(1.0, 1.0, p, 1.0, 1.0), 2.0, epsilon = 2e-3);
        assert_eq!(delta_bound(1.0, 1.0, 0.0, 1.0, 1.0), 2.0);
        let n: f64 = 30.0;
        let rows = n.powi(4);
        let tau = n.sqrt();
        let got = delta_bound(rows, n, 0.5, tau, 1.0);
        // independent evaluation: √N = n², N^{1/4} = n
        let expected = (0.5f64.sqrt() + 0.5 * tau) * n * n + (tau + 0.25) * (n + n.sqrt() * n);
        assert_abs_diff_eq!(got, expected, epsilon = 1e-9);
        assert_abs_diff_eq!(delta_bound(rows, n, 0.5, tau, 3.0), 3.0 * expected, epsilon = 1e-8);
    }

    #[test]
    fn delta_is_monotone() {
        let base = delta_bound(100.0, 10.0, 0.3, 2.0, 1.0);
        assert!(delta_bound(200.0, 10.0, 0.3, 2.0, 1.0) >= base);
        assert!(delta_bound(100.0, 20.0, 0.3, 2.0, 1.0) >= base);
        assert!(delta_bound(100.0, 10.0, 0.3, 3.0, 1.0) >= base);
    }

    #[test]
    fn pair_count_inverse() {
        assert_eq!(items_for_pairs(435), Some(30));
        assert_eq!(items_for_pairs(1), Some(2));
        assert_eq!(items_for_pairs(4), None);
    }

    #[test]
    fn gap_check_noiseless() {
        let mut r = substream(15, 0, Purpose::Utilities);
        let a: Vec<f64> = (0..10).map(|_| r.random::<f64>() - 0.5).collect();
        let b: Vec<f64> = (0..10).map(|_| r.random::<f64>() - 0.5).collect();
        let labels: Vec<usize> = (0..12).map(|i| i % 2).collect();
        let m = mean_matrix(&labels, &[a, b]).unwrap();
        let obs = ObservationMatrix {
            values: m.clone(),
            mask: vec![true; 12 * 10],
        };
        let sv = singular_values(&m).unwrap();
        for t in [0.1 * sv[1], 0.5 * sv[1], 0.9 * sv[1]] {
            let report = spectral_gap_check(&obs, &m, 1.0, t, 1.0, 1.0).unwrap();
            assert!(report.noise_norm < 1e-10);
            assert_eq!(report.rank_m, 2);
            assert!(report.rank_hypothesis);
            assert_eq!(report.predicted_rank, Some(2));
            assert_eq!(report.observed_rank, 2);
        }
    }

    #[test]
    fn gap_check_reports_failure_without_error() {
        let (obs, m) = two_cluster_setup(6, 30, 5.0, 0.3, 16);
        let report = spectral_gap_check(&obs, &m, 0.3, 1.0, 3.0, 1.0).unwrap();
        assert!(!report.p_condition);
        assert!(!report.threshold_proper);
    }

    #[test]
    fn gap_check_noise_within_delta() {
        for trial in 0..20 {
            let (obs, m) = two_cluster_setup(30, 1000, 0.3, 0.8, 100 + trial);
            let report = spectral_gap_check(&obs, &m, 0.8, 1.0, 30f64.sqrt(), 3.0).unwrap();
            assert!(report.noise_norm <= report.delta, "{report:?}");
        }
    }
}
