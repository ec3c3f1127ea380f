//! Command-line frontend: stats, preprocess, cluster, recommend, evaluate.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 internal invariant violation. All randomness flows from `--seed` flags;
//! results are identical at any `--threads` setting.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use clickrec_core::clustering::{
    cbc_assign, fcm_with, form_clusters, kmeans_with, Clustering, FcmParams, KMeansInit,
    KMeansParams, MethodTag,
};
use clickrec_core::correlation::correlation_matrix;
use clickrec_core::data_model::{
    filter_phase1, filter_phase2, load_dataset_from_path, Dataset, ErrorPolicy, LoadOptions,
    StatsSummary,
};
use clickrec_core::error::{Error, ErrorClass};
use clickrec_core::evaluation::{
    db_index, dunn_index, dunn_index_conventional, run_experiment, ClusterMethodConfig,
    ExperimentConfig,
};
use clickrec_core::recommender::{profiles_from_dataset, RecommendOptions, Recommender};

const THREADS_ENV: &str = "CLICKREC_THREADS";

#[derive(Parser)]
#[command(
    name = "clickrec",
    version,
    about = "Clickstream recommendation engine: preprocess, cluster, recommend, evaluate"
)]
struct Cli {
    /// Worker threads for parallel stages; 0 means machine parallelism.
    /// Also settable via CLICKREC_THREADS.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum OnErrorArg {
    /// Stop at the first malformed line.
    #[default]
    Fail,
    /// Drop malformed lines and report how many were skipped.
    Skip,
}

impl From<OnErrorArg> for ErrorPolicy {
    fn from(value: OnErrorArg) -> Self {
        match value {
            OnErrorArg::Fail => ErrorPolicy::FailFast,
            OnErrorArg::Skip => ErrorPolicy::SkipAndCount,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum MethodArg {
    Cbc,
    Kmeans,
    Fcm,
}

#[derive(Subcommand)]
enum Command {
    /// Print entity and record counts for a dataset as JSON.
    Stats {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        on_error: OnErrorArg,
    },
    /// Apply the two-phase filter and write the reduced dataset plus a
    /// before/after stats sidecar.
    Preprocess {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// View-count threshold for phase 1 (products with only views).
        #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
        phi: u64,
        /// Minimum records per customer for phase 2.
        #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
        tau: u64,
        #[arg(long, value_enum, default_value_t)]
        on_error: OnErrorArg,
        /// Stats sidecar path; defaults to <output>.stats.json.
        #[arg(long)]
        stats_out: Option<PathBuf>,
    },
    /// Cluster customers and write the assignment dump plus validity indexes.
    Cluster {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Cluster count for kmeans/fcm.
        #[arg(short, long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 2.0)]
        fuzzifier: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Distance-weighted kmeans seeding instead of uniform.
        #[arg(long)]
        kmeans_plus_plus: bool,
        /// Summary sidecar path; defaults to <output>.summary.json.
        #[arg(long)]
        summary_out: Option<PathBuf>,
        /// Also dump the correlation matrix as customer,category,value
        /// triplets.
        #[arg(long)]
        matrix_out: Option<PathBuf>,
    },
    /// Score active customers against a trained clustering and emit JSON
    /// lines.
    Recommend {
        /// Training dataset the clustering was built from.
        #[arg(long)]
        train: PathBuf,
        /// Clustering dump produced by the cluster subcommand.
        #[arg(long)]
        clustering: PathBuf,
        /// Active customers' behavior records (same wire format).
        #[arg(long)]
        active: PathBuf,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(usize))]
        top_k: usize,
        /// Output path; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Allow recommending products the active customer already touched.
        #[arg(long)]
        include_seen: bool,
    },
    /// Run the fold-based evaluation protocol described by a config file.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Directory for report.json and report.txt; default current dir.
        #[arg(short, long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        phi: Option<u64>,
        #[arg(long)]
        tau: Option<u64>,
        #[arg(long)]
        observed_fraction: Option<f64>,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(error) => {
            let _ = error.print();
            return match error.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };

    let threads = if cli.threads > 0 {
        cli.threads
    } else {
        std::env::var(THREADS_ENV)
            .ok()
            .and_then(|value| value.parse().ok())
            .unwrap_or(0)
    };
    if let Err(error) = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
    {
        eprintln!("error: thread pool: {error}");
        return ExitCode::from(3);
    }

    match run(cli.command) {
        Ok(code) => code,
        Err(error) => {
            eprintln!("error: {error}");
            let mut source = std::error::Error::source(&error);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            match error.class() {
                ErrorClass::Config => ExitCode::from(1),
                ErrorClass::Data => ExitCode::from(2),
                ErrorClass::Internal => ExitCode::from(3),
            }
        }
    }
}

fn run(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Stats { input, on_error } => cmd_stats(&input, on_error),
        Command::Preprocess {
            input,
            output,
            phi,
            tau,
            on_error,
            stats_out,
        } => cmd_preprocess(&input, &output, phi, tau, on_error, stats_out),
        Command::Cluster {
            input,
            output,
            method,
            k,
            fuzzifier,
            seed,
            kmeans_plus_plus,
            summary_out,
            matrix_out,
        } => cmd_cluster(
            &input,
            &output,
            method,
            k,
            fuzzifier,
            seed,
            kmeans_plus_plus,
            summary_out,
            matrix_out,
        ),
        Command::Recommend {
            train,
            clustering,
            active,
            top_k,
            output,
            include_seen,
        } => cmd_recommend(&train, &clustering, &active, top_k, output, include_seen),
        Command::Evaluate {
            config,
            out_dir,
            seed,
            folds,
            phi,
            tau,
            observed_fraction,
            method,
            dataset,
        } => cmd_evaluate(
            &config,
            out_dir,
            EvaluateOverrides {
                seed,
                folds,
                phi,
                tau,
                observed_fraction,
                method,
                dataset,
            },
        ),
    }
}

fn load(path: &Path, on_error: OnErrorArg) -> Result<(Dataset, u64), Error> {
    let options = LoadOptions {
        on_error: on_error.into(),
        ..LoadOptions::default()
    };
    let loaded = load_dataset_from_path(path, &options)?;
    Ok((loaded.dataset, loaded.skipped_lines))
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::io(format!("write {}", path.display()), e))
}

#[derive(Serialize)]
struct StatsOutput<'a> {
    config: StatsConfigEcho<'a>,
    skipped_lines: u64,
    stats: &'a StatsSummary,
}

#[derive(Serialize)]
struct StatsConfigEcho<'a> {
    input: &'a Path,
    on_error: OnErrorArg,
}

fn cmd_stats(input: &Path, on_error: OnErrorArg) -> Result<ExitCode, Error> {
    let (dataset, skipped_lines) = load(input, on_error)?;
    let output = StatsOutput {
        config: StatsConfigEcho { input, on_error },
        skipped_lines,
        stats: dataset.stats(),
    };
    println!("{}", serde_json::to_string_pretty(&output).expect("stats serialize"));
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct PreprocessOutput<'a> {
    config: PreprocessConfigEcho<'a>,
    skipped_lines: u64,
    before: &'a StatsSummary,
    after_phase1: &'a StatsSummary,
    after_phase2: &'a StatsSummary,
}

#[derive(Serialize)]
struct PreprocessConfigEcho<'a> {
    input: &'a Path,
    output: &'a Path,
    phi: u64,
    tau: u64,
    on_error: OnErrorArg,
}

#[allow(clippy::too_many_arguments)]
fn cmd_preprocess(
    input: &Path,
    output: &Path,
    phi: u64,
    tau: u64,
    on_error: OnErrorArg,
    stats_out: Option<PathBuf>,
) -> Result<ExitCode, Error> {
    let (dataset, skipped_lines) = load(input, on_error)?;
    let phase1 = filter_phase1(&dataset, phi);
    let phase2 = filter_phase2(&phase1, tau);

    let file =
        File::create(output).map_err(|e| Error::io(format!("create {}", output.display()), e))?;
    let mut writer = BufWriter::new(file);
    phase2
        .write_csv(&mut writer)
        .and_then(|()| writer.flush())
        .map_err(|e| Error::io(format!("write {}", output.display()), e))?;

    let sidecar = PreprocessOutput {
        config: PreprocessConfigEcho {
            input,
            output,
            phi,
            tau,
            on_error,
        },
        skipped_lines,
        before: dataset.stats(),
        after_phase1: phase1.stats(),
        after_phase2: phase2.stats(),
    };
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serialize");
    let sidecar_path =
        stats_out.unwrap_or_else(|| PathBuf::from(format!("{}.stats.json", output.display())));
    write_text(&sidecar_path, &json)?;
    println!("{json}");
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct ClusterSummary<'a> {
    config: ClusterConfigEcho<'a>,
    cluster_count: usize,
    db: Option<f64>,
    dunn: Option<f64>,
    dunn_conventional: Option<f64>,
    degeneracy: Option<String>,
}

#[derive(Serialize)]
struct ClusterConfigEcho<'a> {
    input: &'a Path,
    output: &'a Path,
    method: MethodArg,
    k: Option<usize>,
    fuzzifier: Option<f64>,
    seed: u64,
    kmeans_plus_plus: bool,
}

#[allow(clippy::too_many_arguments)]
fn cmd_cluster(
    input: &Path,
    output: &Path,
    method: MethodArg,
    k: Option<usize>,
    fuzzifier: f64,
    seed: u64,
    kmeans_plus_plus: bool,
    summary_out: Option<PathBuf>,
    matrix_out: Option<PathBuf>,
) -> Result<ExitCode, Error> {
    let (dataset, _) = load(input, OnErrorArg::Fail)?;
    let matrix = correlation_matrix(&dataset);
    if let Some(path) = &matrix_out {
        let file =
            File::create(path).map_err(|e| Error::io(format!("create {}", path.display()), e))?;
        let mut writer = BufWriter::new(file);
        matrix
            .write_triplets(&mut writer)
            .and_then(|()| writer.flush())
            .map_err(|e| Error::io(format!("write {}", path.display()), e))?;
    }

    let clustering = match method {
        MethodArg::Cbc => form_clusters(&cbc_assign(&matrix)?, &dataset)?,
        MethodArg::Kmeans => {
            let k = k.ok_or_else(|| Error::InvalidConfig("--k is required for kmeans".into()))?;
            let params = KMeansParams {
                seed,
                init: if kmeans_plus_plus {
                    KMeansInit::PlusPlus
                } else {
                    KMeansInit::Uniform
                },
                ..KMeansParams::default()
            };
            let run = kmeans_with(&matrix, k, &params)?;
            Clustering::from_assignment_with_dataset(
                MethodTag::KMeans,
                run.clustering.assignment().clone(),
                &dataset,
            )?
        }
        MethodArg::Fcm => {
            let k = k.ok_or_else(|| Error::InvalidConfig("--k is required for fcm".into()))?;
            let params = FcmParams {
                seed,
                fuzzifier,
                ..FcmParams::default()
            };
            let run = fcm_with(&matrix, k, &params)?;
            Clustering::from_assignment_with_dataset(
                MethodTag::Fcm,
                run.clustering.assignment().clone(),
                &dataset,
            )?
        }
    };

    let file =
        File::create(output).map_err(|e| Error::io(format!("create {}", output.display()), e))?;
    let mut writer = BufWriter::new(file);
    clustering
        .write_csv(&mut writer)
        .and_then(|()| writer.flush())
        .map_err(|e| Error::io(format!("write {}", output.display()), e))?;

    // validity degeneracy is a data condition, not a failure
    let mut degeneracy = None;
    let mut grab = |result: Result<f64, Error>| match result {
        Ok(value) => Some(value),
        Err(error) => {
            if degeneracy.is_none() {
                degeneracy = Some(error.to_string());
            }
            None
        }
    };
    let db = grab(db_index(&clustering, &matrix));
    let dunn = grab(dunn_index(&clustering, &matrix));
    let dunn_conventional = grab(dunn_index_conventional(&clustering, &matrix));

    let summary = ClusterSummary {
        config: ClusterConfigEcho {
            input,
            output,
            method,
            k,
            fuzzifier: (method == MethodArg::Fcm).then_some(fuzzifier),
            seed,
            kmeans_plus_plus,
        },
        cluster_count: clustering.cluster_count(),
        db,
        dunn,
        dunn_conventional,
        degeneracy,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serialize");
    let summary_path =
        summary_out.unwrap_or_else(|| PathBuf::from(format!("{}.summary.json", output.display())));
    write_text(&summary_path, &json)?;
    println!("{json}");
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct RecommendConfigEcho<'a> {
    train: &'a Path,
    clustering: &'a Path,
    active: &'a Path,
    top_k: usize,
    include_seen: bool,
    method: String,
}

fn cmd_recommend(
    train_path: &Path,
    clustering_path: &Path,
    active_path: &Path,
    top_k: usize,
    output: Option<PathBuf>,
    include_seen: bool,
) -> Result<ExitCode, Error> {
    if top_k < 1 {
        return Err(Error::InvalidConfig("--top-k must be at least 1".into()));
    }
    let (train, _) = load(train_path, OnErrorArg::Fail)?;

    let file = File::open(clustering_path)
        .map_err(|e| Error::io(format!("open {}", clustering_path.display()), e))?;
    let (method, assignment) = Clustering::read_csv(BufReader::new(file))?;
    let clustering = Clustering::from_assignment_with_dataset(method, assignment, &train)?;

    let (active, _) = load(active_path, OnErrorArg::Fail)?;
    for &product in active.products() {
        let active_category = active.product_category(product);
        if let (Some(theirs), Some(ours)) = (train.product_category(product), active_category) {
            if theirs != ours {
                return Err(Error::Mismatch(format!(
                    "product {product} is category {ours} in the active file but {theirs} in the training data"
                )));
            }
        }
    }

    let recommender = Recommender::new(&train, &clustering, RecommendOptions { include_seen })?;
    let profiles = profiles_from_dataset(&active);
    let lists = recommender.recommend_batch(&profiles, top_k)?;

    let echo = RecommendConfigEcho {
        train: train_path,
        clustering: clustering_path,
        active: active_path,
        top_k,
        include_seen,
        method: method.to_string(),
    };
    let echo_json = serde_json::to_string_pretty(&echo).expect("echo serialize");

    let mut lines = String::new();
    for list in &lists {
        lines.push_str(&list.to_json_line());
        lines.push('\n');
    }
    match output {
        Some(path) => {
            write_text(&path, &lines)?;
            write_text(&PathBuf::from(format!("{}.meta.json", path.display())), &echo_json)?;
        }
        None => {
            print!("{lines}");
            eprintln!("{echo_json}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

struct EvaluateOverrides {
    seed: Option<u64>,
    folds: Option<usize>,
    phi: Option<u64>,
    tau: Option<u64>,
    observed_fraction: Option<f64>,
    method: Option<MethodArg>,
    dataset: Option<PathBuf>,
}

fn cmd_evaluate(
    config_path: &Path,
    out_dir: Option<PathBuf>,
    overrides: EvaluateOverrides,
) -> Result<ExitCode, Error> {
    let mut config = ExperimentConfig::load(config_path)?;
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(folds) = overrides.folds {
        config.folds = folds;
    }
    if let Some(phi) = overrides.phi {
        config.phi = phi;
    }
    if let Some(tau) = overrides.tau {
        config.tau = tau;
    }
    if let Some(fraction) = overrides.observed_fraction {
        config.observed_fraction = fraction;
    }
    if let Some(method) = overrides.method {
        config.method = match method {
            MethodArg::Cbc => ClusterMethodConfig::Cbc,
            MethodArg::Kmeans => ClusterMethodConfig::Kmeans,
            MethodArg::Fcm => ClusterMethodConfig::Fcm,
        };
    }
    if let Some(dataset) = overrides.dataset {
        config.dataset = dataset;
    }
    config.validate()?;

    // the dataset path in the config is relative to the config file
    if config.dataset.is_relative() {
        if let Some(parent) = config_path.parent() {
            config.dataset = parent.join(&config.dataset);
        }
    }

    let report = run_experiment(&config)?;

    let dir = out_dir.unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| Error::io(format!("create {}", dir.display()), e))?;
    write_text(&dir.join("report.json"), &report.to_json())?;
    let text = report.render_text();
    write_text(&dir.join("report.txt"), &text)?;
    print!("{text}");

    if report.protocol.failed_folds > 0 {
        eprintln!(
            "error: {} fold(s) failed; partial results written to {}",
            report.protocol.failed_folds,
            dir.display()
        );
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}
