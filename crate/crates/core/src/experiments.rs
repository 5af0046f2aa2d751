//! Parameter sweeps over synthetic mixtures, written as CSV.
//!
//! Each dataset draws utilities `u⁽ⁱ⁾ ~ N(0, I_n)` and a component size
//! `N_i ~ Poisson(λ)` per component, then samples `N_i` rankings from each
//! component. Grid cells run in parallel and results are emitted in grid
//! order, so output files depend only on the configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::config::KeyValues;
use crate::error::{Error, Result, StageExt};
use crate::evaluation::{empirical_tau, TauEstimator};
use crate::generators::{cluster_mean, gaussian_utilities, mask, sample_with_counts, ComponentSpec, Family};
use crate::io::write_file;
use crate::pipeline::{run_on_samples, PipelineOptions, PipelineOutcome};
use crate::rng::{derive_seed, substream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentId {
    /// Distance histograms and principal-component views at several noise
    /// levels.
    Exp1,
    /// Misclassification rate against the observation probability.
    Exp2,
    /// Empirical sub-Gaussian norm against the number of items.
    Exp3,
}

impl std::str::FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp1" => Ok(ExperimentId::Exp1),
            "exp2" => Ok(ExperimentId::Exp2),
            "exp3" => Ok(ExperimentId::Exp3),
            other => Err(Error::invalid(format!("unknown experiment `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub id: ExperimentId,
    pub seed: u64,
    /// Trials per grid cell (repeats of the estimate for exp3).
    pub trials: usize,
    pub family: Family,
    pub n: Vec<usize>,
    pub k: usize,
    pub lambda: f64,
    /// `sigma` for Gaussian components, `beta` for MNL.
    pub noise: Vec<f64>,
    pub p: Vec<f64>,
    /// Rankings per estimate (exp3).
    pub samples: usize,
    /// Random probe directions per estimate (exp3).
    pub directions: usize,
    pub rank: Option<usize>,
    /// Histogram bins (exp1).
    pub bins: usize,
}

const CONFIG_KEYS: &[&str] = &[
    "seed", "trials", "family", "n", "k", "lambda", "sigma", "beta", "noise", "p", "samples",
    "directions", "rank", "bins",
];

impl ExperimentConfig {
    /// Small grids that finish in minutes.
    pub fn desk(id: ExperimentId) -> Self {
        let base = ExperimentConfig {
            id,
            seed: 1,
            trials: 10,
            family: Family::Gaussian,
            n: vec![30],
            k: 2,
            lambda: 500.0,
            noise: vec![0.3, 0.7],
            p: vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0],
            samples: 1000,
            directions: 32,
            rank: None,
            bins: 40,
        };
        match id {
            ExperimentId::Exp1 => ExperimentConfig {
                trials: 1,
                k: 5,
                lambda: 50.0,
                noise: vec![0.3, 0.5, 1.0],
                p: vec![1.0],
                ..base
            },
            ExperimentId::Exp2 => base,
            ExperimentId::Exp3 => ExperimentConfig {
                trials: 3,
                n: vec![5, 10, 20, 40, 60],
                noise: vec![0.05, 0.25, 1.0],
                p: vec![1.0],
                ..base
            },
        }
    }

    /// The grids of the original study.
    pub fn paper_scale(id: ExperimentId) -> Self {
        let desk = ExperimentConfig::desk(id);
        match id {
            ExperimentId::Exp1 => ExperimentConfig {
                k: 100,
                ..desk
            },
            ExperimentId::Exp2 => ExperimentConfig {
                trials: 20,
                n: vec![20, 30, 50],
                noise: vec![0.3, 0.5, 0.7, 1.0],
                p: vec![
                    0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0,
                ],
                ..desk
            },
            ExperimentId::Exp3 => ExperimentConfig {
                trials: 100,
                n: vec![2, 5, 10, 20, 50, 100, 200],
                noise: vec![0.05, 0.1, 0.25, 0.5, 1.0],
                ..desk
            },
        }
    }

    /// Defaults for `id` overridden by the keys present in `kv`.
    pub fn from_key_values(id: ExperimentId, kv: &KeyValues, paper_scale: bool) -> Result<Self> {
        kv.reject_unknown(|k| CONFIG_KEYS.contains(&k))?;
        let mut c = if paper_scale {
            ExperimentConfig::paper_scale(id)
        } else {
            ExperimentConfig::desk(id)
        };
        if let Some(v) = kv.parsed("seed")? {
            c.seed = v;
        }
        if let Some(v) = kv.parsed("trials")? {
            c.trials = v;
        }
        if let Some(v) = kv.parsed("family")? {
            c.family = v;
        }
        if let Some(v) = kv.list("n")? {
            c.n = v;
        }
        if let Some(v) = kv.parsed("k")? {
            c.k = v;
        }
        if let Some(v) = kv.parsed("lambda")? {
            c.lambda = v;
        }
        for key in ["noise", "sigma", "beta"] {
            if let Some(v) = kv.list(key)? {
                c.noise = v;
            }
        }
        if let Some(v) = kv.list("p")? {
            c.p = v;
        }
        if let Some(v) = kv.parsed("samples")? {
            c.samples = v;
        }
        if let Some(v) = kv.parsed("directions")? {
            c.directions = v;
        }
        if let Some(v) = kv.get("rank") {
            c.rank = if v == "auto" {
                None
            } else {
                Some(kv.required::<usize>("rank")?)
            };
        }
        if let Some(v) = kv.parsed("bins")? {
            c.bins = v;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(msg));
        if self.trials == 0 {
            return bad("trials must be ≥ 1".into());
        }
        if self.family == Family::Mallows {
            return bad("experiments support the mnl and gaussian families".into());
        }
        if self.n.is_empty() || self.n.iter().any(|&n| n < 2) {
            return bad(format!("n values must be ≥ 2, got {:?}", self.n));
        }
        if self.noise.is_empty() || self.noise.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return bad(format!("noise levels must be > 0, got {:?}", self.noise));
        }
        if self.id != ExperimentId::Exp3 {
            if self.k == 0 {
                return bad("k must be ≥ 1".into());
            }
            if !(self.lambda > 0.0 && self.lambda.is_finite()) {
                return bad(format!("lambda must be > 0, got {}", self.lambda));
            }
            if self.p.is_empty() || self.p.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
                return bad(format!("p values must lie in (0, 1], got {:?}", self.p));
            }
        }
        if self.id == ExperimentId::Exp3 && self.samples < 100 {
            return bad(format!("samples must be ≥ 100, got {}", self.samples));
        }
        if self.id == ExperimentId::Exp1 && self.bins == 0 {
            return bad("bins must be ≥ 1".into());
        }
        Ok(())
    }
}

fn component(family: Family, utilities: Vec<f64>, noise: f64) -> Result<ComponentSpec> {
    match family {
        Family::Mnl => ComponentSpec::mnl(utilities, noise),
        Family::Gaussian => ComponentSpec::gaussian(utilities, noise),
        Family::Mallows => Err(Error::Unsupported("Mallows components in sweeps".into())),
    }
}

/// One synthetic dataset: components with Gaussian utilities and Poisson
/// sizes. Sizes are floored at 1 so every component is represented.
#[derive(Debug, Clone)]
pub struct SyntheticMixture {
    pub components: Vec<ComponentSpec>,
    pub counts: Vec<usize>,
}

impl SyntheticMixture {
    pub fn draw(family: Family, n: usize, k: usize, lambda: f64, noise: f64, seed: u64) -> Result<Self> {
        let mut urng = substream(seed, 0, Purpose::Utilities);
        let mut crng = substream(seed, 0, Purpose::Counts);
        let poisson = Poisson::new(lambda).map_err(|e| Error::invalid(format!("lambda: {e}")))?;
        let components = (0..k)
            .map(|_| component(family, gaussian_utilities(n, &mut urng), noise))
            .collect::<Result<Vec<_>>>()?;
        let counts = (0..k)
            .map(|_| (poisson.sample(&mut crng) as usize).max(1))
            .collect();
        Ok(SyntheticMixture { components, counts })
    }

    pub fn means(&self) -> Result<Vec<Vec<f64>>> {
        self.components.iter().map(cluster_mean).collect()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Samples the rankings and masks them with probability `p`.
    pub fn observe(&self, p: f64, sample_seed: u64, mask_seed: u64) -> Result<Vec<crate::generators::LabeledSample>> {
        let full = sample_with_counts(&self.components, &self.counts, sample_seed)?;
        mask(&full, p, mask_seed)
    }
}

fn dataset_seed(master: u64, n_idx: usize, noise_idx: usize, trial: usize) -> u64 {
    let job = ((n_idx as u64) << 40) | ((noise_idx as u64) << 20) | trial as u64;
    derive_seed(master, job, Purpose::Trial)
}

fn run_cell(
    config: &ExperimentConfig,
    n: usize,
    noise: f64,
    p: f64,
    data_seed: u64,
    p_idx: usize,
) -> Result<(SyntheticMixture, Vec<Vec<f64>>, PipelineOutcome, DMatrix<f64>)> {
    let mixture = SyntheticMixture::draw(config.family, n, config.k, config.lambda, noise, data_seed)?;
    let means = mixture.means()?;
    let mask_seed = derive_seed(data_seed, p_idx as u64, Purpose::Mask);
    let samples = mixture.observe(p, data_seed, mask_seed).stage("sample")?;
    let options = PipelineOptions {
        rank_hint: config.rank,
        ..PipelineOptions::default()
    };
    let outcome = run_on_samples(&samples, Some(&means), &options)?;
    let obs = crate::matrix::ObservationMatrix::from_samples(&samples)?;
    Ok((mixture, means, outcome, obs.values().clone()))
}

/// One row of the exp2 table.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskRow {
    pub n: usize,
    pub k: usize,
    pub noise: f64,
    pub p: f64,
    pub trial: usize,
    pub risk: f64,
    pub k_hat: usize,
    pub p_hat: f64,
    pub t1: f64,
    pub t2: f64,
}

pub const EXP2_HEADER: &str = "n,k,sigma_or_beta,p,trial,risk,k_hat,p_hat,t1,t2";

pub fn risk_sweep(config: &ExperimentConfig) -> Result<Vec<RiskRow>> {
    let mut jobs = Vec::new();
    for (ni, &n) in config.n.iter().enumerate() {
        for (si, &noise) in config.noise.iter().enumerate() {
            for (pi, &p) in config.p.iter().enumerate() {
                for trial in 0..config.trials {
                    jobs.push((ni, n, si, noise, pi, p, trial));
                }
            }
        }
    }
    jobs.into_par_iter()
        .map(|(ni, n, si, noise, pi, p, trial)| {
            let seed = dataset_seed(config.seed, ni, si, trial);
            let (_, _, out, _) = run_cell(config, n, noise, p, seed, pi)?;
            Ok(RiskRow {
                n,
                k: config.k,
                noise,
                p,
                trial,
                risk: out.evaluation.risk,
                k_hat: out.clustering.k_hat,
                p_hat: out.p_hat(),
                t1: out.t1(),
                t2: out.clustering.threshold_used,
            })
        })
        .collect()
}

pub fn format_risk_csv(rows: &[RiskRow]) -> String {
    let mut out = String::from(EXP2_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.n, r.k, r.noise, r.p, r.trial, r.risk, r.k_hat, r.p_hat, r.t1, r.t2
        );
    }
    out
}

/// One row of the exp3 table.
#[derive(Debug, Clone, PartialEq)]
pub struct TauRow {
    pub family: Family,
    pub noise: f64,
    pub n: usize,
    pub repeats: usize,
    pub tau_mean: f64,
    pub tau_std: f64,
}

pub const EXP3_HEADER: &str = "family,noise,n,repeats,tau_hat_mean,tau_hat_std";
pub const EXP3_SLOPE_HEADER: &str = "family,noise,slope";

pub fn tau_sweep(config: &ExperimentConfig) -> Result<Vec<TauRow>> {
    let settings = TauEstimator {
        samples: config.samples,
        directions: config.directions,
        ..TauEstimator::default()
    };
    let mut cells = Vec::new();
    for (si, &noise) in config.noise.iter().enumerate() {
        for (ni, &n) in config.n.iter().enumerate() {
            cells.push((si, noise, ni, n));
        }
    }
    cells
        .into_par_iter()
        .map(|(si, noise, ni, n)| {
            let taus = (0..config.trials)
                .map(|trial| {
                    let seed = dataset_seed(config.seed, ni, si, trial);
                    let mut urng = substream(seed, 0, Purpose::Utilities);
                    let spec = component(config.family, gaussian_utilities(n, &mut urng), noise)?;
                    empirical_tau(&spec, &settings, seed)
                })
                .collect::<Result<Vec<f64>>>()?;
            let mean = taus.iter().sum::<f64>() / taus.len() as f64;
            let var = if taus.len() > 1 {
                taus.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (taus.len() - 1) as f64
            } else {
                0.0
            };
            Ok(TauRow {
                family: config.family,
                noise,
                n,
                repeats: taus.len(),
                tau_mean: mean,
                tau_std: var.sqrt(),
            })
        })
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`, skipping non-positive
/// values. `None` with fewer than two usable points.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if logs.len() < 2 {
        return None;
    }
    let m = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / m;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn format_tau_csv(rows: &[TauRow]) -> String {
    let mut out = String::from(EXP3_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.family.name(),
            r.noise,
            r.n,
            r.repeats,
            r.tau_mean,
            r.tau_std
        );
    }
    out
}

pub fn format_slope_csv(rows: &[TauRow], noise: &[f64]) -> String {
    let mut out = String::from(EXP3_SLOPE_HEADER);
    out.push('\n');
    for &level in noise {
        let points: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.noise == level)
            .map(|r| (r.n as f64, r.tau_mean))
            .collect();
        let family = rows.first().map_or("", |r| r.family.name());
        let slope = log_log_slope(&points).map_or_else(|| "NA".to_string(), |s| s.to_string());
        let _ = writeln!(out, "{family},{level},{slope}");
    }
    out
}

/// Summary of one exp1 run.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringSnapshot {
    pub noise: f64,
    pub trial: usize,
    pub rows: usize,
    pub k_hat: usize,
    pub risk: f64,
    pub t1: f64,
    pub t2: f64,
    pub kept_rank: usize,
    /// `min inter-cluster distance − max intra-cluster distance` on the
    /// observed rows.
    pub gap_before: f64,
    /// The same quantity on the thresholded rows.
    pub gap_after: f64,
    pub histograms: [DistanceHistogram; 2],
    /// `(true label, predicted label, pc1, pc2)` per row.
    pub projection: Vec<(usize, usize, f64, f64)>,
}

/// Histogram of squared pairwise distances split by whether the two rows
/// share a true label.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceHistogram {
    pub edges: Vec<f64>,
    pub intra: Vec<u64>,
    pub inter: Vec<u64>,
}

pub const EXP1_SUMMARY_HEADER: &str = "sigma_or_beta,trial,n,k,rows,k_hat,risk,t1,t2,kept_rank,gap_before,gap_after";
pub const EXP1_HIST_HEADER: &str = "sigma_or_beta,trial,stage,bin,sq_dist_lo,sq_dist_hi,intra_count,inter_count";
pub const EXP1_PROJ_HEADER: &str = "sigma_or_beta,trial,row,true_label,pred_label,pc1,pc2";

fn pairwise_sq_distances(rows: &DMatrix<f64>) -> Vec<Vec<f64>> {
    let n = rows.nrows();
    let data: Vec<Vec<f64>> = (0..n).map(|i| rows.row(i).iter().copied().collect()).collect();
    (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| {
                    data[i]
                        .iter()
                        .zip(&data[j])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                })
                .collect()
        })
        .collect()
}

fn distance_summary(rows: &DMatrix<f64>, labels: &[usize], bins: usize) -> (f64, DistanceHistogram) {
    let dist = pairwise_sq_distances(rows);
    let mut max_intra: f64 = 0.0;
    let mut min_inter = f64::INFINITY;
    let mut top: f64 = 0.0;
    for (i, row) in dist.iter().enumerate() {
        for (off, &d) in row.iter().enumerate() {
            let j = i + 1 + off;
            top = top.max(d);
            if labels[i] == labels[j] {
                max_intra = max_intra.max(d);
            } else {
                min_inter = min_inter.min(d);
            }
        }
    }
    let width = if top > 0.0 { top / bins as f64 } else { 1.0 };
    let edges: Vec<f64> = (0..=bins).map(|b| b as f64 * width).collect();
    let mut intra = vec![0u64; bins];
    let mut inter = vec![0u64; bins];
    for (i, row) in dist.iter().enumerate() {
        for (off, &d) in row.iter().enumerate() {
            let j = i + 1 + off;
            let b = ((d / width) as usize).min(bins - 1);
            if labels[i] == labels[j] {
                intra[b] += 1;
            } else {
                inter[b] += 1;
            }
        }
    }
    let gap = if min_inter.is_finite() {
        min_inter.sqrt() - max_intra.sqrt()
    } else {
        f64::NAN
    };
    (gap, DistanceHistogram { edges, intra, inter })
}

pub fn clustering_snapshots(config: &ExperimentConfig) -> Result<Vec<ClusteringSnapshot>> {
    let n = config.n[0];
    let p = config.p[0];
    let mut jobs = Vec::new();
    for (si, &noise) in config.noise.iter().enumerate() {
        for trial in 0..config.trials {
            jobs.push((si, noise, trial));
        }
    }
    jobs.into_par_iter()
        .map(|(si, noise, trial)| {
            let seed = dataset_seed(config.seed, 0, si, trial);
            let (_, _, out, observed) = run_cell(config, n, noise, p, seed, 0)?;
            let labels = &out.true_labels;
            let (gap_before, hist_before) = distance_summary(&observed, labels, config.bins);
            let (gap_after, hist_after) = distance_summary(&out.estimate.scores, labels, config.bins);
            let sv = out.svd.singular_values();
            let projection = (0..labels.len())
                .map(|i| {
                    let pc = |j: usize| if j < sv.len() { sv[j] * out.svd.u()[(i, j)] } else { 0.0 };
                    (labels[i], out.clustering.labels[i], pc(0), pc(1))
                })
                .collect();
            Ok(ClusteringSnapshot {
                noise,
                trial,
                rows: labels.len(),
                k_hat: out.clustering.k_hat,
                risk: out.evaluation.risk,
                t1: out.t1(),
                t2: out.clustering.threshold_used,
                kept_rank: out.estimate.kept_rank,
                gap_before,
                gap_after,
                histograms: [hist_before, hist_after],
                projection,
            })
        })
        .collect()
}

fn exp1_files(config: &ExperimentConfig, snaps: &[ClusteringSnapshot]) -> [String; 3] {
    let mut summary = format!("{EXP1_SUMMARY_HEADER}\n");
    let mut hist = format!("{EXP1_HIST_HEADER}\n");
    let mut proj = format!("{EXP1_PROJ_HEADER}\n");
    for s in snaps {
        let _ = writeln!(
            summary,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            s.noise, s.trial, config.n[0], config.k, s.rows, s.k_hat, s.risk, s.t1, s.t2, s.kept_rank, s.gap_before, s.gap_after
        );
        for (stage, h) in ["before", "after"].iter().zip(&s.histograms) {
            for b in 0..h.intra.len() {
                let _ = writeln!(
                    hist,
                    "{},{},{},{},{},{},{},{}",
                    s.noise, s.trial, stage, b, h.edges[b], h.edges[b + 1], h.intra[b], h.inter[b]
                );
            }
        }
        for (row, (t, pl, a, b)) in s.projection.iter().enumerate() {
            let _ = writeln!(proj, "{},{},{},{},{},{},{}", s.noise, s.trial, row, t, pl, a, b);
        }
    }
    [summary, hist, proj]
}

/// Runs the configured sweep and writes its CSV files into `out_dir`,
/// returning their paths.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let files: Vec<(&str, String)> = match config.id {
        ExperimentId::Exp1 => {
            let snaps = clustering_snapshots(config)?;
            let [summary, hist, proj] = exp1_files(config, &snaps);
            vec![
                ("exp1_summary.csv", summary),
                ("exp1_distances.csv", hist),
                ("exp1_projection.csv", proj),
            ]
        }
        ExperimentId::Exp2 => vec![("exp2_risk.csv", format_risk_csv(&risk_sweep(config)?))],
        ExperimentId::Exp3 => {
            let rows = tau_sweep(config)?;
            vec![
                ("exp3_tau.csv", format_tau_csv(&rows)),
                ("exp3_slopes.csv", format_slope_csv(&rows, &config.noise)),
            ]
        }
    };
    let mut written = Vec::with_capacity(files.len());
    for (name, contents) in files {
        let path = out_dir.join(name);
        write_file(&path, &contents)?;
        written.push(path);
    }
    Ok(written)
}

/// Mean of `f` over the rows matching `keep`.
pub fn mean_by<T>(rows: &[T], keep: impl Fn(&T) -> bool, f: impl Fn(&T) -> f64) -> Option<f64> {
    let vals: Vec<f64> = rows.iter().filter(|r| keep(r)).map(f).collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}
