//! End-to-end experiment over repeated train/test splits.
//!
//! One split runs: load → patch filter → balanced sampling → PCA → min-max →
//! alignment at θ₀ → SPSA → alignment at θ* → quantum Gram → hybrid SVM, and
//! alongside it the RBF baseline on the same features. Every stochastic stage
//! draws from a stream seeded by `(master seed, split index, stage)`, so split
//! results do not depend on how many splits run or on how many workers run
//! them.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::{optimize_alignment, AlignOptions, AlignmentTrace, SpsaConfig};
use crate::data::{
    band_matrix, data_points, label_vector, load_pixels_with, patch_stats, pixels_in_patches,
    sample_split, select_patches_with, FeaturePipeline, PatchFilter, PixelRecord, ScalingOrder,
    SplitSpec,
};
use crate::featuremap::{AnsatzParams, DataPoint, FeatureMapConfig};
use crate::fmt::{fmt_sig, round_sig};
use crate::labels::LabelVector;
use crate::matrix::Matrix;
use crate::qkernel::{cross_gram, gram_matrix, KernelMode};
use crate::seed::{self, stream};
use crate::stats::{summarize, wilcoxon_signed_rank, PairedSample, WilcoxonMethod, WilcoxonResult};
use crate::svm::{self, SvmModel};
use crate::{Error, Result};

/// Significance level for the hybrid-vs-classic comparison.
pub const SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data_path: PathBuf,
    /// Field delimiter of the pixel table.
    pub delimiter: char,
    pub n_splits: usize,
    /// Train/test sizes and balancing; the seed is replaced per split.
    pub split: SplitSpec,
    pub filter: PatchFilter,
    pub depth: usize,
    pub pca_components: usize,
    pub scaling_order: ScalingOrder,
    /// SPSA settings; the seed is replaced per split.
    pub spsa: SpsaConfig,
    /// Per-iteration alignment subsample size; off by default.
    pub align_subset: Option<usize>,
    /// Start SPSA from uniform angles in [-π, π] instead of zeros.
    pub random_theta0: bool,
    /// Kernel evaluation mode; a shot-mode seed is replaced per split.
    pub kernel_mode: KernelMode,
    pub c: f64,
    pub seed: u64,
    /// Concurrent splits; `None` uses every core.
    pub workers: Option<usize>,
    /// Record per-stage wall-clock timings in split results.
    pub timings: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data_path: PathBuf::new(),
            delimiter: ',',
            n_splits: 20,
            split: SplitSpec::default(),
            filter: PatchFilter::default(),
            depth: 2,
            pca_components: 2,
            scaling_order: ScalingOrder::default(),
            spsa: SpsaConfig::default(),
            align_subset: None,
            random_theta0: false,
            kernel_mode: KernelMode::Exact,
            c: 1.0,
            seed: 0,
            workers: None,
            timings: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_splits == 0 {
            return Err(Error::Size("at least one split is required".into()));
        }
        if !self.delimiter.is_ascii() {
            return Err(Error::Domain(format!(
                "delimiter {:?} is not ASCII",
                self.delimiter
            )));
        }
        self.feature_map()?;
        self.spsa.validate()?;
        self.kernel_mode.validate()?;
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Domain(format!("C must be positive, got {}", self.c)));
        }
        if self.pca_components == 0 || self.pca_components > crate::data::N_BANDS {
            return Err(Error::Shape(format!(
                "PCA target {} not in 1..={}",
                self.pca_components,
                crate::data::N_BANDS
            )));
        }
        if self.workers == Some(0) {
            return Err(Error::Size("worker count must be positive".into()));
        }
        Ok(())
    }

    pub fn feature_map(&self) -> Result<FeatureMapConfig> {
        FeatureMapConfig::new(self.pca_components, self.depth)
    }

    pub fn split_seed(&self, split: usize) -> u64 {
        seed::derive(self.seed, &[split as u64])
    }

    pub fn load(&self) -> Result<Vec<PixelRecord>> {
        load_pixels_with(&self.data_path, self.delimiter as u8)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub load: f64,
    pub select: f64,
    pub sample: f64,
    pub preprocess: f64,
    pub align: f64,
    pub hybrid: f64,
    pub classic: f64,
    /// Wall-clock of the whole split.
    pub total: f64,
}

impl StageTimings {
    pub fn stage_sum(&self) -> f64 {
        self.load
            + self.select
            + self.sample
            + self.preprocess
            + self.align
            + self.hybrid
            + self.classic
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub split: usize,
    pub t_i: f64,
    pub t_f: f64,
    pub hsvm_accuracy: f64,
    pub svm_accuracy: f64,
    pub theta_final: Vec<f64>,
    pub rbf_gamma: f64,
    pub hybrid_support_vectors: usize,
    pub rbf_support_vectors: usize,
    /// Test-set feature values clamped into [0, 1] by min-max scaling.
    pub clamped_test_values: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<StageTimings>,
}

/// Features and labels of one split, ready for the kernels.
#[derive(Debug, Clone)]
pub struct PreparedSplit {
    pub split: usize,
    pub split_seed: u64,
    pub train_points: Vec<DataPoint>,
    pub test_points: Vec<DataPoint>,
    pub train_features: Matrix,
    pub test_features: Matrix,
    pub train_labels: LabelVector,
    pub test_labels: LabelVector,
    pub pipeline: FeaturePipeline,
    pub clamped_test_values: usize,
}

#[derive(Debug)]
struct Clock {
    origin: Instant,
    last: Instant,
}

impl Clock {
    fn start() -> Self {
        let now = Instant::now();
        Self {
            origin: now,
            last: now,
        }
    }

    fn lap(&mut self) -> f64 {
        let now = Instant::now();
        let d = now - self.last;
        self.last = now;
        d.as_secs_f64()
    }

    fn since_origin(&self) -> f64 {
        (self.last - self.origin).as_secs_f64()
    }
}

fn prepare_timed(
    pixels: &[PixelRecord],
    config: &ExperimentConfig,
    split: usize,
    clock: &mut Clock,
    laps: &mut [f64; 3],
) -> Result<PreparedSplit> {
    let split_seed = config.split_seed(split);
    let stats = patch_stats(pixels);
    let ids =
        select_patches_with(&stats, &config.filter).map_err(|e| e.at_stage(split, "select"))?;
    let pool = pixels_in_patches(pixels, &ids);
    laps[0] = clock.lap();

    let spec = SplitSpec {
        seed: seed::derive(split_seed, &[stream::SAMPLING]),
        ..config.split
    };
    let (train, test) = sample_split(&pool, &spec).map_err(|e| e.at_stage(split, "sample"))?;
    laps[1] = clock.lap();

    let pre = |e: Error| e.at_stage(split, "preprocess");
    let pipeline = FeaturePipeline::fit(
        &band_matrix(&train),
        config.pca_components,
        config.scaling_order,
    )
    .map_err(pre)?;
    let (train_features, _) = pipeline.transform(&band_matrix(&train)).map_err(pre)?;
    let (test_features, clamped_test_values) =
        pipeline.transform(&band_matrix(&test)).map_err(pre)?;
    let prepared = PreparedSplit {
        split,
        split_seed,
        train_points: data_points(&train_features).map_err(pre)?,
        test_points: data_points(&test_features).map_err(pre)?,
        train_features,
        test_features,
        train_labels: label_vector(&train),
        test_labels: label_vector(&test),
        pipeline,
        clamped_test_values,
    };
    laps[2] = clock.lap();
    Ok(prepared)
}

/// Select, sample and scale the data for one split.
pub fn prepare_split(
    pixels: &[PixelRecord],
    config: &ExperimentConfig,
    split: usize,
) -> Result<PreparedSplit> {
    prepare_timed(pixels, config, split, &mut Clock::start(), &mut [0.0; 3])
}

impl PreparedSplit {
    pub fn kernel_mode(&self, config: &ExperimentConfig) -> KernelMode {
        match config.kernel_mode {
            KernelMode::Exact => KernelMode::Exact,
            KernelMode::Shots { count, .. } => KernelMode::Shots {
                count,
                seed: seed::derive(self.split_seed, &[stream::SHOTS]),
            },
        }
    }

    pub fn theta0(&self, config: &ExperimentConfig) -> AnsatzParams {
        let n = config.pca_components;
        if config.random_theta0 {
            let mut rng = seed::rng(seed::derive(self.split_seed, &[stream::THETA_INIT]));
            let pi = std::f64::consts::PI;
            AnsatzParams::new(
                (0..AnsatzParams::len_for(n))
                    .map(|_| rng.random_range(-pi..=pi))
                    .collect(),
            )
            .expect("finite angles")
        } else {
            AnsatzParams::zeros(n)
        }
    }

    pub fn align_options(&self, config: &ExperimentConfig) -> AlignOptions {
        AlignOptions {
            spsa: SpsaConfig {
                seed: seed::derive(self.split_seed, &[stream::SPSA]),
                ..config.spsa
            },
            mode: self.kernel_mode(config),
            subset: config.align_subset,
        }
    }

    /// SPSA alignment maximization on the training set.
    pub fn align(&self, config: &ExperimentConfig) -> Result<AlignmentTrace> {
        let fm = config.feature_map()?;
        optimize_alignment(
            &self.train_points,
            &self.train_labels,
            &fm,
            &self.theta0(config),
            &self.align_options(config),
        )
        .map_err(|e| e.at_stage(self.split, "align"))
    }

    /// Train the hybrid SVM at `theta` and score it on the test set.
    pub fn hybrid(
        &self,
        config: &ExperimentConfig,
        theta: &AnsatzParams,
    ) -> Result<(SvmModel, f64)> {
        let stage = |e: Error| e.at_stage(self.split, "hybrid");
        let fm = config.feature_map()?;
        let mode = self.kernel_mode(config);
        let k = gram_matrix(&self.train_points, theta, &fm, mode).map_err(stage)?;
        let model = svm::train(&k, &self.train_labels, config.c).map_err(stage)?;
        let support: Vec<DataPoint> = model
            .support_indices
            .iter()
            .map(|&i| self.train_points[i].clone())
            .collect();
        let acc = if support.is_empty() {
            let pred = LabelVector::new(vec![
                if model.bias >= 0.0 { 1 } else { -1 };
                self.test_points.len()
            ])?;
            svm::accuracy(&pred, &self.test_labels)
        } else {
            let rows = cross_gram(&self.test_points, &support, theta, &fm, mode.reseeded(&[1]))
                .map_err(stage)?;
            svm::accuracy(
                &svm::predict(&model, &rows).map_err(stage)?,
                &self.test_labels,
            )
        }
        .map_err(stage)?;
        Ok((model, acc))
    }

    /// RBF baseline with the default γ on the same features.
    pub fn classic(&self, config: &ExperimentConfig) -> Result<(SvmModel, f64)> {
        let stage = |e: Error| e.at_stage(self.split, "classic");
        let gamma = svm::rbf_default_gamma(&self.train_features).map_err(stage)?;
        let model = svm::train_rbf(&self.train_features, &self.train_labels, gamma, config.c)
            .map_err(stage)?;
        let acc = if model.n_support() == 0 {
            let pred = LabelVector::new(vec![
                if model.bias >= 0.0 { 1 } else { -1 };
                self.test_labels.len()
            ])?;
            svm::accuracy(&pred, &self.test_labels)
        } else {
            svm::accuracy(
                &svm::predict_rbf(&model, &self.test_features)?,
                &self.test_labels,
            )
        }
        .map_err(stage)?;
        Ok((model, acc))
    }
}

/// Run one split from the data on disk.
pub fn run_split(config: &ExperimentConfig, split: usize) -> Result<SplitResult> {
    config.validate()?;
    let mut clock = Clock::start();
    let pixels = config.load().map_err(|e| e.at_stage(split, "load"))?;
    let load = clock.lap();
    run_split_inner(&pixels, config, split, clock, load)
}

/// Run one split on already-loaded pixels.
pub fn run_split_on(
    pixels: &[PixelRecord],
    config: &ExperimentConfig,
    split: usize,
) -> Result<SplitResult> {
    config.validate()?;
    run_split_inner(pixels, config, split, Clock::start(), 0.0)
}

fn run_split_inner(
    pixels: &[PixelRecord],
    config: &ExperimentConfig,
    split: usize,
    mut clock: Clock,
    load: f64,
) -> Result<SplitResult> {
    let mut laps = [0.0; 3];
    let prepared = prepare_timed(pixels, config, split, &mut clock, &mut laps)?;
    let trace = prepared.align(config)?;
    let align = clock.lap();
    let (hmodel, hsvm_accuracy) = prepared.hybrid(config, &trace.theta_final)?;
    let hybrid = clock.lap();
    let gamma = svm::rbf_default_gamma(&prepared.train_features)
        .map_err(|e| e.at_stage(split, "classic"))?;
    let (cmodel, svm_accuracy) = prepared.classic(config)?;
    let classic = clock.lap();
    let total = clock.since_origin();

    Ok(SplitResult {
        split,
        t_i: round_sig(trace.initial_alignment),
        t_f: round_sig(trace.final_alignment),
        hsvm_accuracy: round_sig(hsvm_accuracy),
        svm_accuracy: round_sig(svm_accuracy),
        theta_final: trace
            .theta_final
            .as_slice()
            .iter()
            .map(|&t| round_sig(t))
            .collect(),
        rbf_gamma: round_sig(gamma),
        hybrid_support_vectors: hmodel.n_support(),
        rbf_support_vectors: cmodel.n_support(),
        clamped_test_values: prepared.clamped_test_values,
        timings: config.timings.then_some(StageTimings {
            load,
            select: laps[0],
            sample: laps[1],
            preprocess: laps[2],
            align,
            hybrid,
            classic,
            total,
        }),
    })
}

/// Per-column values of the four Table-style columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Columns {
    pub t_i: f64,
    pub t_f: f64,
    pub hsvm: f64,
    pub svm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub splits: Vec<SplitResult>,
    pub average: Columns,
    /// Absent with a single split.
    pub standard_deviation: Option<Columns>,
    /// Absent with a single split or when every accuracy pair ties.
    pub wilcoxon: Option<WilcoxonResult>,
    pub notes: Vec<String>,
}

fn column(splits: &[SplitResult], f: impl Fn(&SplitResult) -> f64) -> Vec<f64> {
    splits.iter().map(f).collect()
}

/// Aggregate split results into a report. Aggregates are computed from the
/// (already rounded) per-split values.
pub fn assemble_report(
    config: &ExperimentConfig,
    mut splits: Vec<SplitResult>,
) -> Result<ExperimentReport> {
    if splits.is_empty() {
        return Err(Error::Size("no split results to aggregate".into()));
    }
    splits.sort_by_key(|s| s.split);
    let cols = [
        column(&splits, |s| s.t_i),
        column(&splits, |s| s.t_f),
        column(&splits, |s| s.hsvm_accuracy),
        column(&splits, |s| s.svm_accuracy),
    ];
    let mut notes = Vec::new();
    let means: Vec<f64> = cols
        .iter()
        .map(|c| crate::stats::mean(c).map(round_sig))
        .collect::<Result<_>>()?;
    let average = Columns {
        t_i: means[0],
        t_f: means[1],
        hsvm: means[2],
        svm: means[3],
    };
    let (standard_deviation, wilcoxon) = if splits.len() < 2 {
        notes.push("single split: standard deviation and Wilcoxon test skipped".into());
        (None, None)
    } else {
        let sds: Vec<f64> = cols
            .iter()
            .map(|c| summarize(c).map(|s| round_sig(s.sd)))
            .collect::<Result<_>>()?;
        let sd = Columns {
            t_i: sds[0],
            t_f: sds[1],
            hsvm: sds[2],
            svm: sds[3],
        };
        let sample = PairedSample::new(cols[2].clone(), cols[3].clone())?;
        let w = match wilcoxon_signed_rank(&sample) {
            Ok(mut w) => {
                w.p_value = round_sig(w.p_value);
                Some(w)
            }
            Err(Error::Degenerate(_)) => {
                notes.push(
                    "hybrid and classic accuracies tie on every split: Wilcoxon test undefined"
                        .into(),
                );
                None
            }
            Err(e) => return Err(e),
        };
        (Some(sd), w)
    };
    Ok(ExperimentReport {
        config: config.clone(),
        splits,
        average,
        standard_deviation,
        wilcoxon,
        notes,
    })
}

/// Run every split on loaded pixels. Completed results are returned even when
/// a split fails, together with the first error by split index.
pub fn run_splits(
    pixels: &[PixelRecord],
    config: &ExperimentConfig,
) -> (Vec<SplitResult>, Option<Error>) {
    let work = || -> Vec<Result<SplitResult>> {
        (0..config.n_splits)
            .into_par_iter()
            .map(|i| run_split_on(pixels, config, i))
            .collect()
    };
    let results = match config.workers {
        Some(w) => match rayon::ThreadPoolBuilder::new().num_threads(w).build() {
            Ok(pool) => pool.install(work),
            Err(e) => {
                return (
                    Vec::new(),
                    Some(Error::Consistency(format!("thread pool: {e}"))),
                )
            }
        },
        None => work(),
    };
    let mut done = Vec::new();
    let mut first_err = None;
    for r in results {
        match r {
            Ok(s) => done.push(s),
            Err(e) if first_err.is_none() => first_err = Some(e),
            Err(_) => {}
        }
    }
    (done, first_err)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let pixels = config.load()?;
    run_experiment_on(&pixels, config)
}

pub fn run_experiment_on(
    pixels: &[PixelRecord],
    config: &ExperimentConfig,
) -> Result<ExperimentReport> {
    config.validate()?;
    let (splits, err) = run_splits(pixels, config);
    if let Some(e) = err {
        return Err(e);
    }
    assemble_report(config, splits)
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Shape(format!("report JSON: {e}")))
    }

    /// Whether the Wilcoxon test finds no significant difference at p < 0.05.
    /// A test that could not be run (every pair tied) counts as no difference.
    pub fn no_significant_difference(&self) -> Option<bool> {
        if self.splits.len() < 2 {
            return None;
        }
        Some(
            self.wilcoxon
                .as_ref()
                .is_none_or(|w| w.p_value >= SIGNIFICANCE),
        )
    }

    /// Table-shaped text with columns T_i, T_f, hSVM, SVM.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let row = |out: &mut String, name: &str, c: [f64; 4]| {
            writeln!(
                out,
                "{:<20} {:>16} {:>16} {:>16} {:>16}",
                name,
                fmt_sig(c[0]),
                fmt_sig(c[1]),
                fmt_sig(c[2]),
                fmt_sig(c[3])
            )
            .unwrap();
        };
        writeln!(
            out,
            "{:<20} {:>16} {:>16} {:>16} {:>16}",
            "", "T_i", "T_f", "hSVM", "SVM"
        )
        .unwrap();
        for s in &self.splits {
            row(
                &mut out,
                &format!("split {}", s.split),
                [s.t_i, s.t_f, s.hsvm_accuracy, s.svm_accuracy],
            );
        }
        let a = self.average;
        row(&mut out, "Average", [a.t_i, a.t_f, a.hsvm, a.svm]);
        if let Some(sd) = self.standard_deviation {
            row(
                &mut out,
                "Standard deviation",
                [sd.t_i, sd.t_f, sd.hsvm, sd.svm],
            );
        }
        match &self.wilcoxon {
            Some(w) => {
                let method = match w.method {
                    WilcoxonMethod::Exact => "exact",
                    WilcoxonMethod::NormalApprox => "normal approximation",
                };
                let verdict = if w.p_value < SIGNIFICANCE {
                    "significant difference"
                } else {
                    "no significant difference"
                };
                writeln!(
                    out,
                    "Wilcoxon signed-rank (hSVM vs SVM): W = {}, p = {} ({method}, n = {}): {verdict} at p < {SIGNIFICANCE}",
                    fmt_sig(w.statistic),
                    fmt_sig(w.p_value),
                    w.n_effective
                )
                .unwrap();
            }
            None => writeln!(out, "Wilcoxon signed-rank: not computed").unwrap(),
        }
        for n in &self.notes {
            writeln!(out, "note: {n}").unwrap();
        }
        writeln!(
            out,
            "config: {}",
            serde_json::to_string(&self.config).expect("config serializes")
        )
        .unwrap();
        out
    }
}

/// Configuration behind the bundled golden preprocessing file.
pub fn golden_config() -> ExperimentConfig {
    ExperimentConfig {
        seed: 7,
        split: SplitSpec {
            n_train: 100,
            n_test: 100,
            ..SplitSpec::default()
        },
        ..ExperimentConfig::default()
    }
}

/// Fitted pipeline, scaled train and test features and labels of a split, as
/// plain text.
pub fn golden_text(p: &PreparedSplit) -> String {
    let labels = |y: &LabelVector| {
        y.as_slice()
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    format!(
        "# pipeline\n{}# train\n{}# test\n{}# train labels\n{}\n# test labels\n{}\n",
        p.pipeline.to_text(),
        p.train_features.to_text(),
        p.test_features.to_text(),
        labels(&p.train_labels),
        labels(&p.test_labels)
    )
}
