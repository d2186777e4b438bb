use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use hybrid_svm::bench::{self, assemble_report, run_splits, ExperimentConfig, PreparedSplit};
use hybrid_svm::data::{patch_stats, select_patches_with, write_pixels, ScalingOrder};
use hybrid_svm::featuremap::AnsatzParams;
use hybrid_svm::fmt::{fmt_sig, round_sig};
use hybrid_svm::qkernel::{gram_matrix, KernelMode};
use hybrid_svm::svm;
use hybrid_svm::Error;

const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "hsvm",
    version,
    about = "Quantum-kernel SVM experiments on pixel tables"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a pixel table, print patch statistics, optionally re-export it.
    Prep {
        #[command(flatten)]
        common: Common,
        /// Write the validated table here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump the quantum or RBF Gram matrix of one split's training set.
    Kernel {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = KernelKind::Quantum)]
        kind: KernelKind,
        #[arg(long, default_value_t = 0)]
        split: usize,
        /// Comma-separated ansatz angles; zeros when omitted.
        #[arg(long, allow_hyphen_values = true)]
        theta: Option<String>,
        /// Use only the first N training points.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the alignment optimization on one split and print its trace.
    Align {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        split: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train both SVMs on one split and report the model and accuracies.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        split: usize,
        /// Write the hybrid model record here.
        #[arg(long)]
        model_out: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full experiment over repeated splits.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KernelKind {
    Quantum,
    Rbf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Exact,
    Shots,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OrderArg {
    PcaThenMinmax,
    MinmaxThenPca,
}

#[derive(Args, Clone)]
struct Common {
    /// Pixel table (CSV with patch_id, blue, green, red, nir, label, is_margin).
    #[arg(long)]
    data: Option<PathBuf>,
    /// TOML file whose keys override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Master seed (required for bench).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    splits: Option<usize>,
    #[arg(long = "spsa-iters", visible_alias = "iters")]
    spsa_iters: Option<usize>,
    #[arg(long)]
    train: Option<usize>,
    #[arg(long)]
    test: Option<usize>,
    /// Sample without class balancing.
    #[arg(long)]
    unbalanced: bool,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    pca: Option<usize>,
    #[arg(long, value_enum)]
    order: Option<OrderArg>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    shots: Option<u64>,
    #[arg(long = "c")]
    c: Option<f64>,
    /// Per-iteration alignment subsample size.
    #[arg(long)]
    subset: Option<usize>,
    /// Start SPSA from random angles.
    #[arg(long)]
    random_theta0: bool,
    #[arg(long)]
    workers: Option<usize>,
    /// Record per-stage timings (reports are then no longer reproducible).
    #[arg(long)]
    timings: bool,
    #[arg(long)]
    delimiter: Option<char>,
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: e.exit_code() as u8,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

type CliResult<T> = Result<T, Failure>;

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl Common {
    fn resolve(&self) -> CliResult<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        if let Some(p) = &self.data {
            cfg.data_path = p.clone();
        }
        if let Some(d) = self.delimiter {
            cfg.delimiter = d;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.splits {
            cfg.n_splits = n;
        }
        if let Some(n) = self.spsa_iters {
            cfg.spsa.iterations = n;
        }
        if let Some(n) = self.train {
            cfg.split.n_train = n;
        }
        if let Some(n) = self.test {
            cfg.split.n_test = n;
        }
        cfg.split.balanced = !self.unbalanced;
        if let Some(d) = self.depth {
            cfg.depth = d;
        }
        if let Some(k) = self.pca {
            cfg.pca_components = k;
        }
        if let Some(o) = self.order {
            cfg.scaling_order = match o {
                OrderArg::PcaThenMinmax => ScalingOrder::PcaThenMinmax,
                OrderArg::MinmaxThenPca => ScalingOrder::MinmaxThenPca,
            };
        }
        match (self.mode, self.shots) {
            (Some(ModeArg::Shots), shots) | (None, shots @ Some(_)) => {
                cfg.kernel_mode = KernelMode::Shots {
                    count: shots.unwrap_or(1024),
                    seed: 0,
                }
            }
            (Some(ModeArg::Exact), Some(_)) => {
                return Err(usage("--shots conflicts with --mode exact"))
            }
            _ => {}
        }
        if let Some(c) = self.c {
            cfg.c = c;
        }
        cfg.align_subset = self.subset.or(cfg.align_subset);
        cfg.random_theta0 = self.random_theta0;
        cfg.workers = self.workers;
        cfg.timings = self.timings;

        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            let table: toml::Table = toml::from_str(&text)
                .map_err(|e| usage(format!("config {}: {e}", path.display())))?;
            let over = serde_json::to_value(table).map_err(|e| usage(format!("config: {e}")))?;
            let mut base = serde_json::to_value(&cfg).expect("config serializes");
            merge(&mut base, over);
            cfg = serde_json::from_value(base)
                .map_err(|e| usage(format!("config {}: {e}", path.display())))?;
        }
        if cfg.data_path.as_os_str().is_empty() {
            return Err(usage(
                "no pixel table given: pass --data or set data_path in the config",
            ));
        }
        cfg.validate()
            .map_err(|e| usage(format!("invalid configuration: {e}")))?;
        Ok(cfg)
    }
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e).into()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json_text(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("value serializes") + "\n"
}

fn prep(common: &Common, out: Option<&Path>) -> CliResult<String> {
    let cfg = common.resolve()?;
    let pixels = cfg.load()?;
    let stats = patch_stats(&pixels);
    let selected = select_patches_with(&stats, &cfg.filter).unwrap_or_default();
    let pool: usize = pixels
        .iter()
        .filter(|p| !p.is_margin && selected.contains(&p.patch_id))
        .count();
    if let Some(p) = out {
        let file = fs::File::create(p).map_err(|e| Error::io(p, e))?;
        write_pixels(file, &pixels)?;
    }
    Ok(match common.format {
        Format::Json => {
            let patches: Vec<Value> = stats
                .iter()
                .map(|s| {
                    json!({
                        "patch_id": s.patch_id,
                        "fill": round_sig(s.fill),
                        "cloudiness": round_sig(s.cloudiness),
                        "pixel_count": s.pixel_count,
                        "selected": selected.contains(&s.patch_id),
                    })
                })
                .collect();
            json_text(&json!({
                "pixels": pixels.len(),
                "patches": patches,
                "selected_patches": selected.len(),
                "pool_pixels": pool,
            }))
        }
        Format::Text => {
            let mut s = format!(
                "{:<24} {:>8} {:>12} {:>8} selected\n",
                "patch_id", "fill", "cloudiness", "pixels"
            );
            for p in &stats {
                writeln!(
                    s,
                    "{:<24} {:>8} {:>12} {:>8} {}",
                    p.patch_id,
                    fmt_sig(p.fill),
                    fmt_sig(p.cloudiness),
                    p.pixel_count,
                    if selected.contains(&p.patch_id) {
                        "yes"
                    } else {
                        "no"
                    }
                )
                .unwrap();
            }
            writeln!(
                s,
                "{} pixels, {} of {} patches selected, {} pixels in the sampling pool",
                pixels.len(),
                selected.len(),
                stats.len(),
                pool
            )
            .unwrap();
            s
        }
    })
}

fn parse_theta(text: &str, n_qubits: usize) -> CliResult<AnsatzParams> {
    let values: Vec<f64> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| usage(format!("--theta: {e}")))?;
    if values.len() != AnsatzParams::len_for(n_qubits) {
        return Err(usage(format!(
            "--theta needs {} angles, got {}",
            AnsatzParams::len_for(n_qubits),
            values.len()
        )));
    }
    AnsatzParams::new(values).map_err(|e| usage(format!("--theta: {e}")))
}

fn prepare(cfg: &ExperimentConfig, split: usize) -> CliResult<PreparedSplit> {
    let pixels = cfg.load()?;
    Ok(bench::prepare_split(&pixels, cfg, split)?)
}

fn kernel(
    common: &Common,
    kind: KernelKind,
    split: usize,
    theta: Option<&str>,
    n: Option<usize>,
) -> CliResult<String> {
    let cfg = common.resolve()?;
    let prepared = prepare(&cfg, split)?;
    let total = prepared.train_points.len();
    let n = n.unwrap_or(total);
    if n == 0 || n > total {
        return Err(usage(format!("--n must be in 1..={total}")));
    }
    let idx: Vec<usize> = (0..n).collect();
    let (k, label) = match kind {
        KernelKind::Quantum => {
            let fm = cfg.feature_map()?;
            let params = match theta {
                Some(t) => parse_theta(t, fm.n_qubits())?,
                None => AnsatzParams::zeros(fm.n_qubits()),
            };
            let k = gram_matrix(
                &prepared.train_points[..n],
                &params,
                &fm,
                prepared.kernel_mode(&cfg),
            )?;
            (k, json!({"kind": "quantum", "theta": params.as_slice()}))
        }
        KernelKind::Rbf => {
            let gamma = svm::rbf_default_gamma(&prepared.train_features)?;
            let x = prepared.train_features.select(
                &idx,
                &(0..prepared.train_features.cols()).collect::<Vec<_>>(),
            );
            (
                svm::rbf_gram(&x, gamma)?,
                json!({"kind": "rbf", "gamma": round_sig(gamma)}),
            )
        }
    };
    Ok(match common.format {
        Format::Text => k.to_text(),
        Format::Json => {
            let rows: Vec<Vec<f64>> = k
                .iter_rows()
                .map(|r| r.iter().map(|&v| round_sig(v)).collect())
                .collect();
            let mut v = label;
            v["split"] = json!(split);
            v["n"] = json!(n);
            v["matrix"] = json!(rows);
            json_text(&v)
        }
    })
}

fn align(common: &Common, split: usize) -> CliResult<String> {
    let cfg = common.resolve()?;
    let prepared = prepare(&cfg, split)?;
    let trace = prepared.align(&cfg)?;
    Ok(match common.format {
        Format::Json => {
            let mut v = trace.summary_json();
            v["split"] = json!(split);
            v["values"] = json!(trace
                .values
                .iter()
                .map(|&x| round_sig(x))
                .collect::<Vec<_>>());
            json_text(&v)
        }
        Format::Text => {
            let theta: Vec<String> = trace
                .theta_final
                .as_slice()
                .iter()
                .map(|&t| fmt_sig(t))
                .collect();
            format!(
                "T_i = {}\nT_f = {}\ntheta_final = {}\n{}",
                fmt_sig(trace.initial_alignment),
                fmt_sig(trace.final_alignment),
                theta.join(","),
                trace.to_lines()
            )
        }
    })
}

fn train(common: &Common, split: usize, model_out: Option<&Path>) -> CliResult<String> {
    let cfg = common.resolve()?;
    let prepared = prepare(&cfg, split)?;
    let trace = prepared.align(&cfg)?;
    let (model, hsvm) = prepared.hybrid(&cfg, &trace.theta_final)?;
    let (classic, svm_acc) = prepared.classic(&cfg)?;
    if let Some(p) = model_out {
        fs::write(p, model.to_text()).map_err(|e| Error::io(p, e))?;
    }
    Ok(match common.format {
        Format::Json => {
            let mut v = trace.summary_json();
            v["split"] = json!(split);
            v["hsvm_accuracy"] = json!(round_sig(hsvm));
            v["svm_accuracy"] = json!(round_sig(svm_acc));
            v["hybrid_support_vectors"] = json!(model.n_support());
            v["rbf_support_vectors"] = json!(classic.n_support());
            v["hybrid_model"] = json!(model.to_text());
            json_text(&v)
        }
        Format::Text => format!(
            "split {split}\nT_i = {}\nT_f = {}\nhSVM accuracy = {}\nSVM accuracy = {}\n{}",
            fmt_sig(trace.initial_alignment),
            fmt_sig(trace.final_alignment),
            fmt_sig(hsvm),
            fmt_sig(svm_acc),
            model.to_text()
        ),
    })
}

fn bench_cmd(common: &Common, out: Option<&Path>) -> CliResult<()> {
    if common.seed.is_none() {
        return Err(usage("bench requires --seed"));
    }
    let cfg = common.resolve()?;
    let pixels = cfg.load()?;
    let (splits, err) = run_splits(&pixels, &cfg);
    let render = |r: &bench::ExperimentReport| match common.format {
        Format::Json => r.to_json(),
        Format::Text => r.to_text(),
    };
    match err {
        None => {
            let report = assemble_report(&cfg, splits)?;
            emit(out, &render(&report))
        }
        Some(e) => {
            if !splits.is_empty() {
                let mut report = assemble_report(&cfg, splits)?;
                report.notes.push(format!("partial results: {e}"));
                let saved = match out {
                    Some(p) => {
                        let mut s = p.as_os_str().to_owned();
                        s.push(".partial");
                        PathBuf::from(s)
                    }
                    None => PathBuf::from("hsvm-partial-report"),
                };
                if fs::write(&saved, render(&report)).is_ok() {
                    log::warn!("partial report saved to {}", saved.display());
                }
            }
            Err(e.into())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Prep { common, out } => {
            let text = prep(common, out.as_deref())?;
            emit(None, &text)
        }
        Command::Kernel {
            common,
            kind,
            split,
            theta,
            n,
            out,
        } => emit(
            out.as_deref(),
            &kernel(common, *kind, *split, theta.as_deref(), *n)?,
        ),
        Command::Align { common, split, out } => emit(out.as_deref(), &align(common, *split)?),
        Command::Train {
            common,
            split,
            model_out,
            out,
        } => emit(
            out.as_deref(),
            &train(common, *split, model_out.as_deref())?,
        ),
        Command::Bench { common, out } => bench_cmd(common, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
