mod report;
mod trace;

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use anyhow::{ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use deep_forest::stats::{
    friedman_test, nemenyi_cd, paired_t_statistic, rank_matrix, AccuracyTable, Q_CRIT_0_10_7,
};
use deep_forest::{
    diagnostics_csv, load_csv, load_features_csv, CascadeConfig, Dataset, Error, LabelColumn,
    Matrix, ScanConfig, ScreeningStrategy, TaMode,
};
use report::run_cv;

#[derive(Parser)]
#[command(
    name = "deep-forest",
    version,
    about = "Train and evaluate deep-forest models with confidence screening"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a cascade, optionally under cross-validation.
    Train(TrainArgs),
    /// Predict with a saved model.
    Predict(PredictArgs),
    /// Compare prefix and binning thresholds on a confidence trace.
    Analyze(AnalyzeArgs),
    /// Rank models and run the comparison statistics on an accuracy table.
    Stats(StatsArgs),
    /// Cross-validate all three screening strategies side by side.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    /// No screening: every instance reaches the last level.
    Gcforest,
    /// Prefix confidence screening.
    Gccs,
    /// Binning confidence screening.
    Dbc,
}

impl StrategyArg {
    fn to_strategy(self) -> ScreeningStrategy {
        match self {
            StrategyArg::Gcforest => ScreeningStrategy::None,
            StrategyArg::Gccs => ScreeningStrategy::Prefix,
            StrategyArg::Dbc => ScreeningStrategy::Binning,
        }
    }

    fn display_name(self) -> &'static str {
        match self {
            StrategyArg::Gcforest => "gcForest",
            StrategyArg::Gccs => "gcForestcs",
            StrategyArg::Dbc => "DBC-Forest",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TaModeArg {
    /// Halve the error rate of each level's own out-of-fold accuracy.
    Halve,
    /// Halve the error rate once at level 1 and keep that target.
    HalveFixed,
}

impl TaModeArg {
    fn to_mode(self) -> TaMode {
        match self {
            TaModeArg::Halve => TaMode::HalveErrorPerLevel,
            TaModeArg::HalveFixed => TaMode::HalveErrorFixed,
        }
    }
}

#[derive(Args)]
struct DataArgs {
    /// CSV dataset path.
    #[arg(long)]
    data: PathBuf,
    /// Label column name, or a 0-based index when numeric.
    #[arg(long, default_value = "label")]
    label_column: String,
    /// Treat the first CSV row as data, not a header.
    #[arg(long)]
    no_header: bool,
}

impl DataArgs {
    fn label(&self) -> LabelColumn {
        match self.label_column.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(self.label_column.clone()),
        }
    }

    fn load(&self) -> Result<Dataset> {
        load_csv(&self.data, &self.label(), !self.no_header)
            .with_context(|| format!("loading {}", self.data.display()))
    }
}

#[derive(Args)]
struct CascadeArgs {
    /// Trees per forest at each cascade level.
    #[arg(long, default_value_t = 50)]
    trees: usize,
    /// Cross-validation folds inside each level.
    #[arg(long, default_value_t = 3)]
    folds: usize,
    /// Bin size for the binning strategy.
    #[arg(long, default_value_t = 100)]
    bin_size: usize,
    #[arg(long, value_enum, default_value_t = TaModeArg::Halve)]
    ta_mode: TaModeArg,
    #[arg(long, default_value_t = 50)]
    max_levels: usize,
    /// Stop growing when fewer instances remain (default: the fold count).
    #[arg(long)]
    min_remaining: Option<usize>,
    /// Enable multi-grained scanning.
    #[arg(long)]
    scan: bool,
    /// Trees per scanning forest.
    #[arg(long, default_value_t = 30)]
    scan_trees: usize,
    /// Comma-separated window sizes (default: d/4, d/6, d/8).
    #[arg(long, value_delimiter = ',')]
    scan_windows: Option<Vec<usize>>,
    #[arg(long, default_value_t = 1)]
    scan_stride: usize,
    /// Folds for out-of-fold scoring of training rows by the scanner.
    #[arg(long, default_value_t = 3)]
    scan_folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl CascadeArgs {
    fn to_config(&self, strategy: ScreeningStrategy) -> CascadeConfig {
        CascadeConfig {
            strategy,
            trees_per_forest: self.trees,
            folds: self.folds,
            bin_size: self.bin_size,
            ta_mode: self.ta_mode.to_mode(),
            max_levels: self.max_levels,
            min_remaining: self.min_remaining,
            seed: self.seed,
            scanning: if self.scan {
                Some(ScanConfig {
                    window_sizes: self.scan_windows.clone(),
                    stride: self.scan_stride,
                    trees_per_forest: self.scan_trees,
                    folds: self.scan_folds,
                })
            } else {
                None
            },
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value_t = StrategyArg::Dbc)]
    strategy: StrategyArg,
    #[command(flatten)]
    cascade: CascadeArgs,
    /// Evaluate with F-fold cross-validation instead of only fitting.
    #[arg(long)]
    cv: Option<usize>,
    /// Write the fitted model (trained on the full file) as JSON.
    #[arg(long)]
    model_out: Option<PathBuf>,
    /// Write the cross-validation report as JSON (requires --cv).
    #[arg(long)]
    report_out: Option<PathBuf>,
    /// Write level 1's confidence trace (id,confidence,correct,predicted).
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Write per-level diagnostics CSV.
    #[arg(long)]
    curves_out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Output CSV path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Confidence trace file.
    #[arg(long)]
    trace: PathBuf,
    /// Target accuracy in (0, 1].
    #[arg(long)]
    ta: f64,
    #[arg(long, default_value_t = 100)]
    bin_size: usize,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct StatsArgs {
    /// Accuracy table CSV: dataset rows, model columns.
    #[arg(long)]
    table: PathBuf,
    /// Critical value for the Nemenyi critical difference.
    #[arg(long, default_value_t = Q_CRIT_0_10_7)]
    q: f64,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    cascade: CascadeArgs,
    #[arg(long, default_value_t = 5)]
    cv: usize,
    /// Write fold-by-strategy accuracies as an accuracy table CSV.
    #[arg(long)]
    table_out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(args) => cmd_train(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Stats(args) => cmd_stats(args),
        Command::Bench(args) => cmd_bench(args),
    }
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let dataset = args.data.load()?;
    let config = args.cascade.to_config(args.strategy.to_strategy());
    if let Some(folds) = args.cv {
        let report = run_cv(
            &dataset,
            &config,
            folds,
            &args.data.data.display().to_string(),
        )?;
        for (f, acc) in report.fold_accuracies.iter().enumerate() {
            println!("fold {f}: accuracy {acc:.2}%");
        }
        println!(
            "cv mean accuracy {:.2}% +/- {:.2} over {} folds",
            report.mean_accuracy, report.std_accuracy, folds
        );
        if let Some(path) = &args.report_out {
            fs::write(path, report.to_json())
                .with_context(|| format!("writing report to {}", path.display()))?;
        }
    } else {
        ensure!(args.report_out.is_none(), "--report-out requires --cv");
    }
    let need_full_fit = args.cv.is_none()
        || args.model_out.is_some()
        || args.trace_out.is_some()
        || args.curves_out.is_some();
    if need_full_fit {
        let fit = deep_forest::fit(&dataset, &config)?;
        let last = fit
            .diagnostics
            .last()
            .expect("a fitted cascade has at least one level");
        println!(
            "trained {} level(s) on {} instances; training accuracy {:.2}%",
            fit.model.level_count(),
            dataset.len(),
            100.0 * last.cumulative_training_accuracy
        );
        if let Some(path) = &args.model_out {
            deep_forest::persist::save(&fit.model, path)
                .with_context(|| format!("writing model to {}", path.display()))?;
            println!("model written to {}", path.display());
        }
        if let Some(path) = &args.trace_out {
            trace::write_trace(path, &fit.first_level_records)?;
        }
        if let Some(path) = &args.curves_out {
            fs::write(path, diagnostics_csv(&fit.diagnostics))
                .with_context(|| format!("writing curves to {}", path.display()))?;
        }
    }
    Ok(())
}

/// Loads prediction inputs: uses the label column when present, otherwise
/// treats every column as a feature.
fn load_prediction_features(args: &DataArgs) -> Result<(Matrix, Option<Vec<usize>>, Vec<String>)> {
    match load_csv(&args.data, &args.label(), !args.no_header) {
        Ok(ds) => Ok((ds.features, Some(ds.labels), ds.label_names)),
        Err(Error::LabelColumnNotFound { .. }) | Err(Error::SingleClass) => {
            let features = load_features_csv(&args.data, !args.no_header)?;
            Ok((features, None, Vec::new()))
        }
        Err(Error::InvalidConfig(_)) if args.no_header => {
            let features = load_features_csv(&args.data, !args.no_header)?;
            Ok((features, None, Vec::new()))
        }
        Err(e) => Err(e).with_context(|| format!("loading {}", args.data.display())),
    }
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let model = deep_forest::persist::load(&args.model)
        .with_context(|| format!("loading model {}", args.model.display()))?;
    let (features, labels, input_label_names) = load_prediction_features(&args.data)?;
    let predictions = deep_forest::predict(&model, &features)?;
    let mut out = String::from("id,predicted,confidence,exit_level\n");
    for (i, p) in predictions.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{:.4},{}",
            i, model.label_names[p.class], p.confidence, p.exit_level
        );
    }
    match &args.out {
        Some(path) => fs::write(path, out)
            .with_context(|| format!("writing predictions to {}", path.display()))?,
        None => print!("{out}"),
    }
    if let Some(labels) = labels {
        let correct = predictions
            .iter()
            .zip(&labels)
            .filter(|(p, &l)| model.label_names[p.class] == input_label_names[l])
            .count();
        eprintln!(
            "accuracy: {:.2}% ({correct}/{})",
            100.0 * correct as f64 / labels.len() as f64,
            labels.len()
        );
    }
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    ensure!(
        args.ta > 0.0 && args.ta <= 1.0,
        "--ta must lie in (0, 1], got {}",
        args.ta
    );
    ensure!(args.bin_size >= 1, "--bin-size must be at least 1");
    let records = trace::read_trace(&args.trace)?;
    ensure!(
        !records.is_empty(),
        "trace {} has no rows",
        args.trace.display()
    );
    let comparison = trace::compare_thresholds(records, args.ta, args.bin_size);
    if args.json {
        println!("{}", serde_json::to_string_pretty(&comparison)?);
    } else {
        print!("{}", trace::render_comparison(&comparison));
    }
    Ok(())
}

#[derive(Serialize)]
struct PairwiseT {
    a: String,
    b: String,
    /// `None` renders as null: the statistic is infinite (zero variance with
    /// a nonzero mean difference).
    t: Option<f64>,
}

#[derive(Serialize)]
struct StatsOutput {
    models: Vec<String>,
    datasets: Vec<String>,
    rank_rows: Vec<Vec<f64>>,
    mean_ranks: Vec<f64>,
    chi_square: f64,
    /// `None` renders as null: every dataset ranked the models identically.
    friedman_statistic: Option<f64>,
    q: f64,
    nemenyi_cd: f64,
    pairwise_t: Vec<PairwiseT>,
}

fn finite_or_none(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn cmd_stats(args: StatsArgs) -> Result<()> {
    let table = AccuracyTable::read_csv(&args.table)
        .with_context(|| format!("loading accuracy table {}", args.table.display()))?;
    let friedman = friedman_test(&table)?;
    let cd = nemenyi_cd(table.model_count(), table.dataset_count(), args.q);
    let ranks = rank_matrix(&table);
    let column = |j: usize| -> Vec<f64> { table.accuracies.iter().map(|row| row[j]).collect() };
    let mut pairwise = Vec::new();
    for i in 0..table.model_count() {
        for j in i + 1..table.model_count() {
            pairwise.push(PairwiseT {
                a: table.model_names[i].clone(),
                b: table.model_names[j].clone(),
                t: finite_or_none(paired_t_statistic(&column(i), &column(j))),
            });
        }
    }
    let output = StatsOutput {
        models: table.model_names.clone(),
        datasets: table.dataset_names.clone(),
        rank_rows: ranks,
        mean_ranks: friedman.mean_ranks.clone(),
        chi_square: friedman.chi_square,
        friedman_statistic: finite_or_none(friedman.statistic),
        q: args.q,
        nemenyi_cd: cd,
        pairwise_t: pairwise,
    };
    if args.json {
        println!("{}", serde_json::to_string_pretty(&output)?);
        return Ok(());
    }
    println!("mean ranks (1 = best):");
    for (name, rank) in output.models.iter().zip(&output.mean_ranks) {
        println!("  {name}: {rank:.3}");
    }
    match output.friedman_statistic {
        Some(f) => println!(
            "friedman chi-square {:.4}, statistic {:.4}",
            output.chi_square, f
        ),
        None => println!(
            "friedman chi-square {:.4}, statistic infinite (unanimous ranking)",
            output.chi_square
        ),
    }
    println!(
        "nemenyi critical difference (q={}): {:.4}",
        output.q, output.nemenyi_cd
    );
    println!("pairwise |t|:");
    for p in &output.pairwise_t {
        match p.t {
            Some(t) => println!("  {} vs {}: {:.3}", p.a, p.b, t),
            None => println!("  {} vs {}: infinite", p.a, p.b),
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct StrategySummary {
    strategy: String,
    fold_accuracies: Vec<f64>,
    mean_accuracy: f64,
    std_accuracy: f64,
    fold_levels: Vec<usize>,
    train_seconds: f64,
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let dataset = args.data.load()?;
    let data_label = args.data.data.display().to_string();
    let mut summaries = Vec::new();
    let mut fold_rows: Vec<Vec<f64>> = Vec::new();
    for strategy in [StrategyArg::Gcforest, StrategyArg::Gccs, StrategyArg::Dbc] {
        let config = args.cascade.to_config(strategy.to_strategy());
        let report = run_cv(&dataset, &config, args.cv, &data_label)?;
        if fold_rows.is_empty() {
            fold_rows = vec![Vec::with_capacity(3); args.cv];
        }
        for (f, acc) in report.fold_accuracies.iter().enumerate() {
            fold_rows[f].push(*acc);
        }
        summaries.push(StrategySummary {
            strategy: strategy.display_name().to_string(),
            mean_accuracy: report.mean_accuracy,
            std_accuracy: report.std_accuracy,
            fold_levels: report.fold_levels.clone(),
            train_seconds: report.timing.fold_train_seconds.iter().sum(),
            fold_accuracies: report.fold_accuracies,
        });
    }
    if let Some(path) = &args.table_out {
        let table = AccuracyTable::new(
            summaries.iter().map(|s| s.strategy.clone()).collect(),
            (0..args.cv).map(|f| format!("fold{f}")).collect(),
            fold_rows,
        )?;
        table.write_csv(path)?;
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&summaries)?);
        return Ok(());
    }
    println!("{} folds on {}:", args.cv, data_label);
    for s in &summaries {
        let levels: Vec<String> = s.fold_levels.iter().map(|l| l.to_string()).collect();
        println!(
            "  {:<11} {:.2}% +/- {:.2}  train {:.1}s  levels [{}]",
            s.strategy,
            s.mean_accuracy,
            s.std_accuracy,
            s.train_seconds,
            levels.join(",")
        );
    }
    Ok(())
}
