//! Declarative experiment configuration, the fold-based evaluation loop, and
//! report generation.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{f_measure, hits_in_prefix, precision_at_k, recall_at_k};
use super::protocol::{split_folds, split_profile, ExclusionReason, RelevanceMode};
use super::validity::{db_index, dunn_index, dunn_index_conventional};
use crate::clustering::{
    cbc_assign, fcm_with, form_clusters, kmeans_with, Clustering, FcmParams, KMeansInit,
    KMeansParams, MethodTag,
};
use crate::correlation::correlation_matrix;
use crate::data_model::{
    filter_phase1, filter_phase2, load_dataset_from_path, BehaviorRecord, Dataset, LoadOptions,
    ProductId, StatsSummary,
};
use crate::error::{Error, Result};
use crate::recommender::{RecommendOptions, Recommender};

fn default_phi() -> u64 {
    1
}
fn default_tau() -> u64 {
    1
}
fn default_folds() -> usize {
    5
}
fn default_fraction() -> f64 {
    0.8
}
fn default_top_k() -> Vec<usize> {
    vec![1, 3, 6]
}
fn default_cluster_k() -> usize {
    8
}
fn default_fuzzifier() -> f64 {
    2.0
}
fn default_true() -> bool {
    true
}

/// Which clustering stage the pipeline trains per fold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterMethodConfig {
    #[default]
    Cbc,
    Kmeans,
    Fcm,
}

impl ClusterMethodConfig {
    pub fn label(self) -> &'static str {
        match self {
            ClusterMethodConfig::Cbc => "cbc",
            ClusterMethodConfig::Kmeans => "kmeans",
            ClusterMethodConfig::Fcm => "fcm",
        }
    }
}

/// Everything one experiment run depends on. Loaded from a TOML file; every
/// report echoes the resolved values back for reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    #[serde(default = "default_phi")]
    pub phi: u64,
    #[serde(default = "default_tau")]
    pub tau: u64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_fraction")]
    pub observed_fraction: f64,
    #[serde(default = "default_top_k")]
    pub top_k: Vec<usize>,
    #[serde(default)]
    pub method: ClusterMethodConfig,
    /// Cluster count for the kmeans/fcm baselines; ignored by cbc.
    #[serde(default = "default_cluster_k")]
    pub cluster_k: usize,
    #[serde(default = "default_fuzzifier")]
    pub fuzzifier: f64,
    #[serde(default)]
    pub kmeans_plus_plus: bool,
    #[serde(default)]
    pub relevance: RelevanceMode,
    /// Also score a uniform-random recommender under the same protocol.
    #[serde(default = "default_true")]
    pub random_baseline: bool,
    #[serde(default)]
    pub include_seen: bool,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("config parse: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("read config {}", path.display()), e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.phi < 1 || self.tau < 1 {
            return Err(Error::InvalidConfig("phi and tau must be at least 1".into()));
        }
        if self.folds < 2 {
            return Err(Error::InvalidConfig("folds must be at least 2".into()));
        }
        if !(self.observed_fraction > 0.0 && self.observed_fraction < 1.0) {
            return Err(Error::InvalidConfig(
                "observed_fraction must lie in (0, 1)".into(),
            ));
        }
        if self.top_k.is_empty() || self.top_k.contains(&0) {
            return Err(Error::InvalidConfig(
                "top_k must list at least one positive size".into(),
            ));
        }
        if self.method != ClusterMethodConfig::Cbc && self.cluster_k < 1 {
            return Err(Error::InvalidConfig("cluster_k must be at least 1".into()));
        }
        if self.method == ClusterMethodConfig::Fcm && self.fuzzifier <= 1.0 {
            return Err(Error::InvalidConfig("fuzzifier must exceed 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStatsSection {
    pub raw: StatsSummary,
    pub after_phase1: StatsSummary,
    pub preprocessed: StatsSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_customers: u64,
    pub test_customers: u64,
    pub cluster_count: Option<usize>,
    pub db: Option<f64>,
    pub dunn: Option<f64>,
    pub dunn_conventional: Option<f64>,
    /// Why a validity index is missing, when it is.
    pub degeneracy: Option<String>,
    /// Set when the whole fold failed; its customers are absent from averages.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringSection {
    pub method: String,
    pub per_fold: Vec<FoldReport>,
    pub mean_cluster_count: Option<f64>,
    pub mean_db: Option<f64>,
    pub mean_dunn: Option<f64>,
    pub mean_dunn_conventional: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub k: usize,
    /// Stored as fractions in [0, 1]; rendered as percentages.
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub method: String,
    pub rows: Vec<MetricRow>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionCounts {
    pub too_few_records: u64,
    pub empty_heldout: u64,
    pub empty_relevant: u64,
    pub fully_seen_relevant: u64,
    pub cold_categories: u64,
}

impl ExclusionCounts {
    pub fn total(&self) -> u64 {
        self.too_few_records
            + self.empty_heldout
            + self.empty_relevant
            + self.fully_seen_relevant
            + self.cold_categories
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSection {
    /// Active customers that entered the averages, summed over folds.
    pub evaluated_customers: u64,
    pub exclusions: ExclusionCounts,
    pub degraded_recommendations: u64,
    pub failed_folds: u64,
}

/// Wall-clock timings; the one section allowed to differ between reruns.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_seconds: f64,
    pub per_fold_seconds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub config: ExperimentConfig,
    pub dataset_stats: DatasetStatsSection,
    pub clustering: ClusteringSection,
    pub recommendation: Vec<MethodMetrics>,
    pub protocol: ProtocolSection,
    pub timings: Timings,
}

struct CustomerOutcome {
    /// (precision, recall) per configured K for the trained pipeline.
    main: Vec<(f64, f64)>,
    /// Same for the uniform-random baseline, when enabled.
    random: Option<Vec<(f64, f64)>>,
    degraded: bool,
}

enum CustomerResult {
    Evaluated(Box<CustomerOutcome>),
    Excluded(ExclusionField),
}

enum ExclusionField {
    TooFewRecords,
    EmptyHeldout,
    EmptyRelevant,
    FullySeenRelevant,
    ColdCategories,
}

struct FoldOutcome {
    report: FoldReport,
    per_k_main: Vec<(f64, f64)>,
    per_k_random: Vec<(f64, f64)>,
    evaluated: u64,
    exclusions: ExclusionCounts,
    degraded: u64,
    seconds: f64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn derive_seed(base: u64, salt: u64, a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base ^ salt) ^ a) ^ b)
}

const SALT_CLUSTERING: u64 = 0x5EED_C105;
const SALT_RANDOM_REC: u64 = 0x5EED_BA5E;

fn train_clustering(
    config: &ExperimentConfig,
    train: &Dataset,
    matrix: &crate::correlation::CorrelationMatrix,
    fold: usize,
) -> Result<Clustering> {
    let seed = derive_seed(config.seed, SALT_CLUSTERING, fold as u64, 0);
    match config.method {
        ClusterMethodConfig::Cbc => form_clusters(&cbc_assign(matrix)?, train),
        ClusterMethodConfig::Kmeans => {
            let params = KMeansParams {
                seed,
                init: if config.kmeans_plus_plus {
                    KMeansInit::PlusPlus
                } else {
                    KMeansInit::Uniform
                },
                ..KMeansParams::default()
            };
            let run = kmeans_with(matrix, config.cluster_k, &params)?;
            Clustering::from_assignment_with_dataset(
                MethodTag::KMeans,
                run.clustering.assignment().clone(),
                train,
            )
        }
        ClusterMethodConfig::Fcm => {
            let params = FcmParams {
                seed,
                fuzzifier: config.fuzzifier,
                ..FcmParams::default()
            };
            let run = fcm_with(matrix, config.cluster_k, &params)?;
            Clustering::from_assignment_with_dataset(
                MethodTag::Fcm,
                run.clustering.assignment().clone(),
                train,
            )
        }
    }
}

/// Samples `k` distinct unseen products uniformly; the baseline ranking is
/// the sample order.
fn random_recommendation(
    candidates: &[ProductId],
    k: usize,
    seed: u64,
) -> Vec<ProductId> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let take = k.min(candidates.len());
    rand::seq::index::sample(&mut rng, candidates.len(), take)
        .into_iter()
        .map(|index| candidates[index])
        .collect()
}

fn evaluate_customer(
    config: &ExperimentConfig,
    preprocessed: &Dataset,
    recommender: &Recommender<'_>,
    train_products: &[ProductId],
    fold: usize,
    customer: u64,
    k_max: usize,
) -> Result<CustomerResult> {
    let records: Vec<BehaviorRecord> =
        preprocessed.customer_records(customer).copied().collect();
    if records.len() < 2 {
        return Ok(CustomerResult::Excluded(ExclusionField::TooFewRecords));
    }
    let split = split_profile(&records, config.observed_fraction, config.relevance)?;
    match split.exclusion {
        Some(ExclusionReason::EmptyHeldout) => {
            return Ok(CustomerResult::Excluded(ExclusionField::EmptyHeldout))
        }
        Some(ExclusionReason::EmptyRelevant) => {
            return Ok(CustomerResult::Excluded(ExclusionField::EmptyRelevant))
        }
        Some(ExclusionReason::FullySeenRelevant) => {
            return Ok(CustomerResult::Excluded(ExclusionField::FullySeenRelevant))
        }
        None => {}
    }

    let recommendation = match recommender.recommend_top_k(&split.observed, k_max) {
        Ok(list) => list,
        Err(Error::ColdCategories(_)) => {
            return Ok(CustomerResult::Excluded(ExclusionField::ColdCategories))
        }
        Err(other) => return Err(other),
    };

    let relevant = &split.heldout_relevant;
    let main: Vec<(f64, f64)> = config
        .top_k
        .iter()
        .map(|&k| {
            let precision = precision_at_k(&recommendation, relevant, k);
            let recall = recall_at_k(&recommendation, relevant, k).expect("relevant is non-empty");
            (precision, recall)
        })
        .collect();

    let random = if config.random_baseline {
        let candidates: Vec<ProductId> = if config.include_seen {
            train_products.to_vec()
        } else {
            train_products
                .iter()
                .copied()
                .filter(|&product| !split.observed.touched(product))
                .collect()
        };
        let picks = random_recommendation(
            &candidates,
            k_max,
            derive_seed(config.seed, SALT_RANDOM_REC, fold as u64, customer),
        );
        Some(
            config
                .top_k
                .iter()
                .map(|&k| {
                    let hits = hits_in_prefix(picks.iter().copied(), relevant, k);
                    let precision = hits as f64 / k as f64;
                    let recall = hits as f64 / relevant.len() as f64;
                    (precision, recall)
                })
                .collect(),
        )
    } else {
        None
    };

    Ok(CustomerResult::Evaluated(Box::new(CustomerOutcome {
        main,
        random,
        degraded: recommendation.degraded,
    })))
}

fn run_fold(
    config: &ExperimentConfig,
    preprocessed: &Dataset,
    plan: &super::protocol::FoldPlan,
    fold: usize,
    k_max: usize,
) -> FoldOutcome {
    let started = Instant::now();
    let test_customers = plan.test_customers(fold);
    let train_records: Vec<BehaviorRecord> = preprocessed
        .records()
        .iter()
        .filter(|record| plan.fold_of(record.customer_id) != Some(fold))
        .copied()
        .collect();
    let train = Dataset::rebuild(train_records);

    let mut report = FoldReport {
        fold,
        train_customers: train.stats().customer_count,
        test_customers: test_customers.len() as u64,
        cluster_count: None,
        db: None,
        dunn: None,
        dunn_conventional: None,
        degeneracy: None,
        error: None,
    };
    let k_count = config.top_k.len();
    let empty = FoldOutcome {
        report: report.clone(),
        per_k_main: vec![(0.0, 0.0); k_count],
        per_k_random: vec![(0.0, 0.0); k_count],
        evaluated: 0,
        exclusions: ExclusionCounts::default(),
        degraded: 0,
        seconds: 0.0,
    };

    let matrix = correlation_matrix(&train);
    let clustering = match train_clustering(config, &train, &matrix, fold) {
        Ok(clustering) => clustering,
        Err(error) => {
            report.error = Some(error.to_string());
            return FoldOutcome {
                report,
                seconds: started.elapsed().as_secs_f64(),
                ..empty
            };
        }
    };
    report.cluster_count = Some(clustering.cluster_count());

    let mut degeneracy: Option<String> = None;
    let mut note = |result: Result<f64>, slot: &mut Option<f64>| match result {
        Ok(value) => *slot = Some(value),
        Err(error) => {
            if degeneracy.is_none() {
                degeneracy = Some(error.to_string());
            }
        }
    };
    note(db_index(&clustering, &matrix), &mut report.db);
    note(dunn_index(&clustering, &matrix), &mut report.dunn);
    note(
        dunn_index_conventional(&clustering, &matrix),
        &mut report.dunn_conventional,
    );
    report.degeneracy = degeneracy;

    let recommender = match Recommender::new(
        &train,
        &clustering,
        RecommendOptions {
            include_seen: config.include_seen,
        },
    ) {
        Ok(recommender) => recommender,
        Err(error) => {
            report.error = Some(error.to_string());
            return FoldOutcome {
                report,
                seconds: started.elapsed().as_secs_f64(),
                ..empty
            };
        }
    };
    let train_products = train.products();

    let results: Vec<Result<CustomerResult>> = test_customers
        .par_iter()
        .map(|&customer| {
            evaluate_customer(
                config,
                preprocessed,
                &recommender,
                train_products,
                fold,
                customer,
                k_max,
            )
        })
        .collect();

    let mut per_k_main = vec![(0.0, 0.0); k_count];
    let mut per_k_random = vec![(0.0, 0.0); k_count];
    let mut evaluated = 0u64;
    let mut exclusions = ExclusionCounts::default();
    let mut degraded = 0u64;

    for result in results {
        match result {
            Ok(CustomerResult::Evaluated(outcome)) => {
                evaluated += 1;
                if outcome.degraded {
                    degraded += 1;
                }
                for (slot, &(precision, recall)) in per_k_main.iter_mut().zip(&outcome.main) {
                    slot.0 += precision;
                    slot.1 += recall;
                }
                if let Some(random) = &outcome.random {
                    for (slot, &(precision, recall)) in per_k_random.iter_mut().zip(random) {
                        slot.0 += precision;
                        slot.1 += recall;
                    }
                }
            }
            Ok(CustomerResult::Excluded(reason)) => match reason {
                ExclusionField::TooFewRecords => exclusions.too_few_records += 1,
                ExclusionField::EmptyHeldout => exclusions.empty_heldout += 1,
                ExclusionField::EmptyRelevant => exclusions.empty_relevant += 1,
                ExclusionField::FullySeenRelevant => exclusions.fully_seen_relevant += 1,
                ExclusionField::ColdCategories => exclusions.cold_categories += 1,
            },
            Err(error) => {
                report.error = Some(error.to_string());
                return FoldOutcome {
                    report,
                    seconds: started.elapsed().as_secs_f64(),
                    ..empty
                };
            }
        }
    }

    FoldOutcome {
        report,
        per_k_main,
        per_k_random,
        evaluated,
        exclusions,
        degraded,
        seconds: started.elapsed().as_secs_f64(),
    }
}

/// Runs the full protocol: preprocess, fold loop, per-customer scoring, and
/// aggregation. Per-fold failures land in the report rather than aborting the
/// run; whole-run preconditions (unreadable dataset, bad config) error out.
pub fn run_experiment(config: &ExperimentConfig) -> Result<EvaluationReport> {
    config.validate()?;
    let started = Instant::now();

    let loaded = load_dataset_from_path(&config.dataset, &LoadOptions::default())
        .map_err(Error::in_stage("load"))?;
    let raw_stats = *loaded.dataset.stats();
    let phase1 = filter_phase1(&loaded.dataset, config.phi);
    let after_phase1 = *phase1.stats();
    let preprocessed = filter_phase2(&phase1, config.tau);
    let preprocessed_stats = *preprocessed.stats();

    let plan = split_folds(&preprocessed, config.folds, config.seed)
        .map_err(Error::in_stage("fold-planning"))?;
    let k_max = *config.top_k.iter().max().expect("validated non-empty");

    let outcomes: Vec<FoldOutcome> = (0..config.folds)
        .into_par_iter()
        .map(|fold| run_fold(config, &preprocessed, &plan, fold, k_max))
        .collect();

    let mut per_k_main = vec![(0.0, 0.0); config.top_k.len()];
    let mut per_k_random = vec![(0.0, 0.0); config.top_k.len()];
    let mut evaluated = 0u64;
    let mut exclusions = ExclusionCounts::default();
    let mut degraded = 0u64;
    let mut failed_folds = 0u64;
    let mut per_fold = Vec::with_capacity(outcomes.len());
    let mut per_fold_seconds = Vec::with_capacity(outcomes.len());

    for outcome in outcomes {
        if outcome.report.error.is_some() {
            failed_folds += 1;
        }
        evaluated += outcome.evaluated;
        degraded += outcome.degraded;
        exclusions.too_few_records += outcome.exclusions.too_few_records;
        exclusions.empty_heldout += outcome.exclusions.empty_heldout;
        exclusions.empty_relevant += outcome.exclusions.empty_relevant;
        exclusions.fully_seen_relevant += outcome.exclusions.fully_seen_relevant;
        exclusions.cold_categories += outcome.exclusions.cold_categories;
        for (total, fold_sum) in per_k_main.iter_mut().zip(&outcome.per_k_main) {
            total.0 += fold_sum.0;
            total.1 += fold_sum.1;
        }
        for (total, fold_sum) in per_k_random.iter_mut().zip(&outcome.per_k_random) {
            total.0 += fold_sum.0;
            total.1 += fold_sum.1;
        }
        per_fold_seconds.push(outcome.seconds);
        per_fold.push(outcome.report);
    }

    let to_rows = |sums: &[(f64, f64)]| -> Vec<MetricRow> {
        config
            .top_k
            .iter()
            .zip(sums)
            .map(|(&k, &(precision_sum, recall_sum))| {
                let (precision, recall) = if evaluated > 0 {
                    (precision_sum / evaluated as f64, recall_sum / evaluated as f64)
                } else {
                    (0.0, 0.0)
                };
                MetricRow {
                    k,
                    precision,
                    recall,
                    f_measure: f_measure(precision, recall),
                }
            })
            .collect()
    };

    let mut recommendation = vec![MethodMetrics {
        method: config.method.label().to_string(),
        rows: to_rows(&per_k_main),
    }];
    if config.random_baseline {
        recommendation.push(MethodMetrics {
            method: "random".to_string(),
            rows: to_rows(&per_k_random),
        });
    }

    let mean_of = |values: Vec<f64>| -> Option<f64> {
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    };
    let clustering = ClusteringSection {
        method: config.method.label().to_string(),
        mean_cluster_count: mean_of(
            per_fold
                .iter()
                .filter_map(|fold| fold.cluster_count.map(|count| count as f64))
                .collect(),
        ),
        mean_db: mean_of(per_fold.iter().filter_map(|fold| fold.db).collect()),
        mean_dunn: mean_of(per_fold.iter().filter_map(|fold| fold.dunn).collect()),
        mean_dunn_conventional: mean_of(
            per_fold
                .iter()
                .filter_map(|fold| fold.dunn_conventional)
                .collect(),
        ),
        per_fold,
    };

    Ok(EvaluationReport {
        config: config.clone(),
        dataset_stats: DatasetStatsSection {
            raw: raw_stats,
            after_phase1,
            preprocessed: preprocessed_stats,
        },
        clustering,
        recommendation,
        protocol: ProtocolSection {
            evaluated_customers: evaluated,
            exclusions,
            degraded_recommendations: degraded,
            failed_folds,
        },
        timings: Timings {
            total_seconds: started.elapsed().as_secs_f64(),
            per_fold_seconds,
        },
    })
}

impl EvaluationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned-column text rendering; metric fractions become percentages
    /// with two decimals.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let c = &self.config;
        let _ = writeln!(
            out,
            "config: dataset={} phi={} tau={} folds={} seed={} observed_fraction={} method={} relevance={} random_baseline={} include_seen={}",
            c.dataset.display(),
            c.phi,
            c.tau,
            c.folds,
            c.seed,
            c.observed_fraction,
            c.method.label(),
            c.relevance.as_str(),
            c.random_baseline,
            c.include_seen,
        );
        let _ = writeln!(out);

        let _ = writeln!(out, "clustering validity (method={})", self.clustering.method);
        let header = format!(
            "{:<6} {:>9} {:>12} {:>12} {:>12}  note",
            "fold", "clusters", "db", "dunn", "dunn_conv"
        );
        let _ = writeln!(out, "{header}");
        let fmt_opt = |value: Option<f64>| match value {
            Some(v) => format!("{v:.4}"),
            None => "-".to_string(),
        };
        for fold in &self.clustering.per_fold {
            let note = fold
                .error
                .clone()
                .or_else(|| fold.degeneracy.clone())
                .unwrap_or_else(|| "-".to_string());
            let _ = writeln!(
                out,
                "{:<6} {:>9} {:>12} {:>12} {:>12}  {}",
                fold.fold,
                fold.cluster_count.map_or("-".to_string(), |v| v.to_string()),
                fmt_opt(fold.db),
                fmt_opt(fold.dunn),
                fmt_opt(fold.dunn_conventional),
                note
            );
        }
        let _ = writeln!(
            out,
            "{:<6} {:>9} {:>12} {:>12} {:>12}",
            "mean",
            self.clustering
                .mean_cluster_count
                .map_or("-".to_string(), |v| format!("{v:.1}")),
            fmt_opt(self.clustering.mean_db),
            fmt_opt(self.clustering.mean_dunn),
            fmt_opt(self.clustering.mean_dunn_conventional),
        );
        let _ = writeln!(out);

        let _ = writeln!(
            out,
            "recommendation metrics (percent; evaluated customers={}, excluded={}, degraded={})",
            self.protocol.evaluated_customers,
            self.protocol.exclusions.total(),
            self.protocol.degraded_recommendations,
        );
        let _ = writeln!(
            out,
            "{:<10} {:>4} {:>10} {:>10} {:>10}",
            "method", "K", "precision", "recall", "f_measure"
        );
        for method in &self.recommendation {
            for row in &method.rows {
                let _ = writeln!(
                    out,
                    "{:<10} {:>4} {:>10.2} {:>10.2} {:>10.2}",
                    method.method,
                    row.k,
                    row.precision * 100.0,
                    row.recall * 100.0,
                    row.f_measure * 100.0,
                );
            }
        }
        if self.protocol.failed_folds > 0 {
            let _ = writeln!(out);
            let _ = writeln!(out, "WARNING: {} fold(s) failed", self.protocol.failed_folds);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn write_fixture_csv(dir: &Path) -> PathBuf {
        // three categories, customers with clear preferences, enough records
        // per customer to survive splitting
        let mut lines = String::new();
        let mut timestamp = 0;
        for customer in 1..=9u64 {
            let category = 100 + (customer % 3) * 100;
            let base_product = category * 10;
            for event in 0..6u64 {
                let product = base_product + (event % 3);
                lines.push_str(&format!(
                    "{customer},{product},{category},pv,{timestamp}\n"
                ));
                timestamp += 1;
            }
        }
        let path = dir.join("fixture.csv");
        let mut file = fs::File::create(&path).unwrap();
        file.write_all(lines.as_bytes()).unwrap();
        path
    }

    #[test]
    fn config_defaults_and_validation() {
        let config = ExperimentConfig::from_toml_str("dataset = \"x.csv\"").unwrap();
        assert_eq!(config.phi, 1);
        assert_eq!(config.tau, 1);
        assert_eq!(config.folds, 5);
        assert_eq!(config.observed_fraction, 0.8);
        assert_eq!(config.top_k, vec![1, 3, 6]);
        assert_eq!(config.method, ClusterMethodConfig::Cbc);
        assert!(config.random_baseline);

        assert!(ExperimentConfig::from_toml_str("dataset = \"x\"\nfolds = 1").is_err());
        assert!(ExperimentConfig::from_toml_str("dataset = \"x\"\nobserved_fraction = 1.5").is_err());
        assert!(ExperimentConfig::from_toml_str("dataset = \"x\"\ntop_k = []").is_err());
        assert!(ExperimentConfig::from_toml_str("dataset = \"x\"\nnot_a_key = 3").is_err());
    }

    #[test]
    fn report_shape_mirrors_method_by_k_grid() {
        let dir = tempfile::tempdir().unwrap();
        let dataset = write_fixture_csv(dir.path());
        let config = ExperimentConfig {
            dataset,
            phi: 1,
            tau: 1,
            folds: 3,
            seed: 7,
            observed_fraction: 0.8,
            top_k: vec![1, 3, 6],
            method: ClusterMethodConfig::Cbc,
            cluster_k: 2,
            fuzzifier: 2.0,
            kmeans_plus_plus: false,
            relevance: RelevanceMode::All,
            random_baseline: true,
            include_seen: false,
        };
        let report = run_experiment(&config).unwrap();
        assert_eq!(report.recommendation.len(), 2);
        assert_eq!(report.recommendation[0].method, "cbc");
        assert_eq!(report.recommendation[1].method, "random");
        for method in &report.recommendation {
            let ks: Vec<usize> = method.rows.iter().map(|row| row.k).collect();
            assert_eq!(ks, vec![1, 3, 6]);
            for row in &method.rows {
                assert!((0.0..=1.0).contains(&row.precision));
                assert!((0.0..=1.0).contains(&row.recall));
                let expected = f_measure(row.precision, row.recall);
                assert!((row.f_measure - expected).abs() < 1e-12);
            }
        }
        assert_eq!(report.clustering.per_fold.len(), 3);
        assert_eq!(report.protocol.failed_folds, 0);
    }

    #[test]
    fn repeated_runs_are_identical_modulo_timings() {
        let dir = tempfile::tempdir().unwrap();
        let dataset = write_fixture_csv(dir.path());
        let config = ExperimentConfig {
            dataset,
            phi: 1,
            tau: 1,
            folds: 3,
            seed: 11,
            observed_fraction: 0.8,
            top_k: vec![1, 3],
            method: ClusterMethodConfig::Cbc,
            cluster_k: 2,
            fuzzifier: 2.0,
            kmeans_plus_plus: false,
            relevance: RelevanceMode::All,
            random_baseline: true,
            include_seen: false,
        };
        let mut a = run_experiment(&config).unwrap();
        let mut b = run_experiment(&config).unwrap();
        a.timings = Timings::default();
        b.timings = Timings::default();
        assert_eq!(a, b);
    }

    #[test]
    fn failed_fold_is_reported_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let dataset = write_fixture_csv(dir.path());
        // cluster_k larger than any fold's training customers forces per-fold
        // failures while the run itself still produces a report
        let config = ExperimentConfig {
            dataset,
            phi: 1,
            tau: 1,
            folds: 3,
            seed: 0,
            observed_fraction: 0.8,
            top_k: vec![1],
            method: ClusterMethodConfig::Kmeans,
            cluster_k: 100,
            fuzzifier: 2.0,
            kmeans_plus_plus: false,
            relevance: RelevanceMode::All,
            random_baseline: false,
            include_seen: false,
        };
        let report = run_experiment(&config).unwrap();
        assert_eq!(report.protocol.failed_folds, 3);
        assert!(report.clustering.per_fold.iter().all(|fold| fold.error.is_some()));
    }

    #[test]
    fn render_text_has_method_rows() {
        let dir = tempfile::tempdir().unwrap();
        let dataset = write_fixture_csv(dir.path());
        let config = ExperimentConfig {
            dataset,
            phi: 1,
            tau: 1,
            folds: 3,
            seed: 1,
            observed_fraction: 0.8,
            top_k: vec![3],
            method: ClusterMethodConfig::Cbc,
            cluster_k: 2,
            fuzzifier: 2.0,
            kmeans_plus_plus: false,
            relevance: RelevanceMode::All,
            random_baseline: true,
            include_seen: false,
        };
        let report = run_experiment(&config).unwrap();
        let text = report.render_text();
        assert!(text.contains("clustering validity"));
        assert!(text.contains("recommendation metrics"));
        assert!(text.lines().any(|line| line.starts_with("cbc")));
        assert!(text.lines().any(|line| line.starts_with("random")));
    }
}
