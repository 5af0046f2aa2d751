//! End-to-end clustering: sample, mask, stack, threshold, cluster, score.

use crate::clustering::{cluster_auto, cut_tree, minimum_spanning_tree, ClusteringResult, GapRule};
use crate::error::{Result, StageExt};
use crate::evaluation::{misclassification_rate, separation_gamma, EvaluationReport};
use crate::generators::{cluster_mean, mask, sample_mixture, LabeledSample, MixtureSpec};
use crate::matrix::{hsvt_with_svd, select_threshold, HsvtEstimate, ObservationMatrix, SvdResult};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PipelineOptions {
    /// Keep exactly this many singular components; otherwise the rank is
    /// picked from the largest relative spectral gap.
    pub rank_hint: Option<usize>,
    /// Fixed distance threshold; otherwise chosen from the MST gaps.
    pub t2: Option<f64>,
    pub gap_rule: GapRule,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub clustering: ClusteringResult,
    pub evaluation: EvaluationReport,
    pub svd: SvdResult,
    pub estimate: HsvtEstimate,
    pub true_labels: Vec<usize>,
}

impl PipelineOutcome {
    pub fn t1(&self) -> f64 {
        self.estimate.threshold_used
    }

    pub fn p_hat(&self) -> f64 {
        self.estimate.p_hat
    }
}

/// Thresholds the stacked observations at an automatically chosen `t₁`.
pub fn denoise(obs: &ObservationMatrix, rank_hint: Option<usize>) -> Result<(SvdResult, HsvtEstimate)> {
    let svd = SvdResult::compute(obs.values()).stage("svd")?;
    let t1 = select_threshold(&svd, rank_hint).stage("threshold")?;
    let estimate = hsvt_with_svd(obs, &svd, t1).stage("hsvt")?;
    Ok((svd, estimate))
}

/// Clusters the rows of a denoised estimate. Distances are taken between
/// the low-dimensional row scores, which match distances between rows of
/// `m_hat` exactly.
pub fn cluster_estimate(estimate: &HsvtEstimate, options: &PipelineOptions) -> Result<ClusteringResult> {
    let rows = &estimate.scores;
    match options.t2 {
        Some(t2) => {
            let edges = minimum_spanning_tree(rows);
            Ok(cut_tree(rows.nrows(), &edges, t2))
        }
        None => cluster_auto(rows, &options.gap_rule),
    }
    .stage("clustering")
}

/// Runs thresholding and clustering on already masked samples and scores
/// the result against their hidden labels.
pub fn run_on_samples(
    samples: &[LabeledSample],
    means: Option<&[Vec<f64>]>,
    options: &PipelineOptions,
) -> Result<PipelineOutcome> {
    let obs = ObservationMatrix::from_samples(samples).stage("stack")?;
    let (svd, estimate) = denoise(&obs, options.rank_hint)?;
    let clustering = cluster_estimate(&estimate, options)?;
    let true_labels: Vec<usize> = samples.iter().map(|s| s.true_label).collect();
    let mis = misclassification_rate(&clustering.labels, &true_labels).stage("evaluate")?;
    let gamma = match means {
        Some(m) if m.len() >= 2 => Some(separation_gamma(m).stage("evaluate")?),
        _ => None,
    };
    Ok(PipelineOutcome {
        evaluation: EvaluationReport {
            risk: mis.risk,
            matching: mis.matching,
            gamma,
            gamma_bounds: None,
            tau_hat: None,
        },
        clustering,
        svd,
        estimate,
        true_labels,
    })
}

/// Samples `n_rows` rankings from the mixture, keeps each comparison with
/// probability `p` and clusters the result.
pub fn run_pipeline(
    spec: &MixtureSpec,
    n_rows: usize,
    p: f64,
    seed: u64,
    options: &PipelineOptions,
) -> Result<PipelineOutcome> {
    let full = sample_mixture(spec, n_rows, seed).stage("sample")?;
    let samples = mask(&full, p, seed).stage("mask")?;
    // exact centers are unavailable for large Mallows components
    let means: Option<Vec<Vec<f64>>> = spec
        .components()
        .iter()
        .map(cluster_mean)
        .collect::<Result<Vec<_>>>()
        .ok();
    run_on_samples(&samples, means.as_deref(), options)
}
