use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rankmix::config::{parse_mixture_spec, KeyValues};
use rankmix::error::{Error, Result};
use rankmix::evaluation::{empirical_tau, misclassification_rate, TauEstimator};
use rankmix::experiments::{run_experiment, ExperimentConfig, ExperimentId};
use rankmix::generators::{mask, sample_mixture};
use rankmix::io::{
    format_labels, format_meta, format_observations, format_real_matrix, join_floats,
    parse_labels, parse_matrix, parse_rankings, parse_real_matrix, read_file, sidecar, write_file,
};
use rankmix::matrix::ObservationMatrix;
use rankmix::clustering::{cluster_auto, single_linkage, GapRule};
use rankmix::pipeline::denoise;
use rankmix::rankings::embed;

#[derive(Parser)]
#[command(name = "rankmix", version, about = "Cluster mixtures of ranking models from partial comparisons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a masked mixture and write its observation matrix.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        num: usize,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert a rankings file into a fully observed matrix file.
    Embed {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Hard singular value thresholding of a matrix file.
    Denoise {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        rank: RankChoice,
        #[arg(long)]
        out: PathBuf,
    },
    /// Single-linkage clustering of matrix rows.
    Cluster {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        t2: ThresholdChoice,
        #[arg(long)]
        out: PathBuf,
    },
    /// Misclassification risk of predicted labels.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Empirical sub-Gaussian norm of one mixture component.
    TauEstimate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 32)]
        directions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        component: usize,
    },
    /// Run a parameter sweep and write CSV files.
    Experiment {
        #[arg(value_parser = ["exp1", "exp2", "exp3"])]
        id: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        paper_scale: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct RankChoice {
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    auto: bool,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ThresholdChoice {
    #[arg(long)]
    t2: Option<f64>,
    #[arg(long)]
    auto: bool,
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn read_observations(path: &Path) -> Result<ObservationMatrix> {
    ObservationMatrix::from_entries(&parse_matrix(&read_file(path)?)?)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate { spec, num, p, seed, out } => {
            let spec = parse_mixture_spec(&read_file(&spec)?)?;
            let full = sample_mixture(&spec, num, seed)?;
            let samples = mask(&full, p, seed)?;
            let obs = ObservationMatrix::from_samples(&samples)?;
            write_file(&out, &format_observations(&obs))?;
            let labels: Vec<usize> = samples.iter().map(|s| s.true_label).collect();
            write_file(&sidecar(&out, ".labels"), &format_labels(&labels))
        }
        Command::Embed { input, out } => {
            let perms = parse_rankings(&read_file(&input)?)?;
            let rows: Vec<_> = perms.iter().map(embed).collect();
            let obs = ObservationMatrix::from_observations(rows.iter())?;
            write_file(&out, &format_observations(&obs))
        }
        Command::Denoise { input, rank, out } => {
            let obs = read_observations(&input)?;
            let (svd, estimate) = denoise(&obs, rank.rank)?;
            write_file(&out, &format_real_matrix(&estimate.m_hat))?;
            let top: Vec<f64> = svd.singular_values().iter().take(20).copied().collect();
            let meta = format_meta(&[
                ("p_hat", estimate.p_hat.to_string()),
                ("threshold_used", estimate.threshold_used.to_string()),
                ("kept_rank", estimate.kept_rank.to_string()),
                ("singular_values", join_floats(&top)),
            ]);
            write_file(&sidecar(&out, ".meta"), &meta)
        }
        Command::Cluster { input, t2, out } => {
            let rows = parse_real_matrix(&read_file(&input)?)?;
            let result = match t2.t2 {
                Some(t) => single_linkage(&rows, t)?,
                None => cluster_auto(&rows, &GapRule::default())?,
            };
            write_file(&out, &format_labels(&result.labels))?;
            let meta = format_meta(&[
                ("k_hat", result.k_hat.to_string()),
                ("threshold_used", result.threshold_used.to_string()),
                ("mst_weights", join_floats(&result.mst_edge_weights)),
            ]);
            write_file(&sidecar(&out, ".meta"), &meta)
        }
        Command::Evaluate { pred, truth } => {
            let pred = parse_labels(&read_file(&pred)?)?;
            let truth = parse_labels(&read_file(&truth)?)?;
            let m = misclassification_rate(&pred, &truth)?;
            let pairs: Vec<String> = m.matching.iter().map(|(i, j)| format!("{i}:{j}")).collect();
            println!("risk={}", m.risk);
            println!("matching={}", pairs.join(","));
            Ok(())
        }
        Command::TauEstimate { spec, samples, directions, seed, component } => {
            let spec = parse_mixture_spec(&read_file(&spec)?)?;
            let comp = spec.components().get(component).ok_or_else(|| {
                Error::invalid(format!("component {component} out of range (k = {})", spec.k()))
            })?;
            let settings = TauEstimator {
                samples,
                directions,
                ..TauEstimator::default()
            };
            println!("tau_hat={}", empirical_tau(comp, &settings, seed)?);
            Ok(())
        }
        Command::Experiment { id, config, paper_scale, out } => {
            let id: ExperimentId = id.parse()?;
            let kv = match config {
                Some(path) => KeyValues::parse(&read_file(&path)?)?,
                None => KeyValues::default(),
            };
            let config = ExperimentConfig::from_key_values(id, &kv, paper_scale)?;
            for path in run_experiment(&config, &out)? {
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}
