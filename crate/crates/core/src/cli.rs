//! Command-line front end: cohort synthesis, feature extraction, training,
//! the four evaluation protocols, embedding, and model reports.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::domain::FeatureTable;
use crate::error::{Error, Result};
use crate::eval::{lopo_eval, pairwise_eval, pooled_eval, within_patient_eval};
use crate::features::table_io::{read_table, write_table};
use crate::features::record_io::{read_cohort, write_patient_dir};
use crate::features::{extract_features, WindowSpec};
use crate::forest::io::{load_model, save_model};
use crate::forest::{fit_forest, ClassWeighting, ForestParams};
use crate::reports::{
    write_embedding_csv, write_embedding_svg, write_eval_report, write_lopo_report,
    write_manifest, write_pairwise_report, write_within_report, EmbeddingRow, RunManifest,
};
use crate::synth::{load_cohort_spec, synth_cohort};
use crate::tsne::{standardize, tsne, TsneParams};

pub const THREADS_ENV: &str = "CEABENCH_THREADS";

#[derive(Parser)]
#[command(name = "ceabench", version, about = "Cross-patient ML workbench for CEA monitoring signals")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort from a TOML spec into per-patient directories.
    Synth {
        /// Cohort spec file (TOML).
        #[arg(long)]
        spec: PathBuf,
        /// Output directory; one subdirectory per patient.
        #[arg(long)]
        out: PathBuf,
        /// Master seed; overrides the spec's master_seed when given.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Extract windowed feature tables from a cohort directory.
    Extract {
        /// Cohort directory as written by `synth`.
        #[arg(long)]
        data: PathBuf,
        /// Output directory; one feature CSV per patient.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 60.0)]
        window_s: f64,
        #[arg(long, default_value_t = 60.0)]
        stride_s: f64,
    },
    /// Train a forest on feature tables and save the model file.
    Train {
        /// Feature CSV file or directory of them.
        #[arg(long)]
        features: PathBuf,
        /// Output model path.
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        forest: ForestArgs,
    },
    /// Evaluate under one of the four protocols and write report artifacts.
    Eval {
        #[command(subcommand)]
        protocol: EvalCommand,
    },
    /// Embed a feature table to 2-D and write coordinates plus a scatter chart.
    Tsne {
        #[arg(long)]
        features: PathBuf,
        /// Output directory for embedding.csv and embedding.svg.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 30.0)]
        perplexity: f64,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Emit report artifacts from a saved model.
    Report {
        #[command(subcommand)]
        what: ReportCommand,
    },
}

#[derive(Args)]
struct ForestArgs {
    #[arg(long, default_value_t = 64)]
    trees: usize,
    #[arg(long, default_value_t = 128)]
    max_leaves: usize,
    #[arg(long, default_value_t = 7)]
    features_per_split: usize,
    #[arg(long, default_value_t = 1)]
    min_samples_leaf: usize,
    #[arg(long, value_enum, default_value_t = WeightingArg::Balanced)]
    class_weighting: WeightingArg,
    /// Training seed; always explicit, never wall clock.
    #[arg(long)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WeightingArg {
    None,
    Balanced,
}

impl ForestArgs {
    fn params(&self) -> ForestParams {
        ForestParams {
            n_trees: self.trees,
            max_leaves: self.max_leaves,
            features_per_split: self.features_per_split,
            min_samples_leaf: self.min_samples_leaf,
            class_weighting: match self.class_weighting {
                WeightingArg::None => ClassWeighting::None,
                WeightingArg::Balanced => ClassWeighting::Balanced,
            },
            seed: self.seed,
        }
    }
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Stratified split over all patients pooled.
    Pooled {
        #[arg(long)]
        features: PathBuf,
        /// Report output directory.
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 0.33)]
        test_frac: f64,
        #[command(flatten)]
        forest: ForestArgs,
    },
    /// Train on each patient, test on every other (ordered pairs).
    Pairwise {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        forest: ForestArgs,
    },
    /// Leave-one-patient-out.
    Lopo {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        forest: ForestArgs,
    },
    /// Per-patient stratified split.
    Within {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 0.67)]
        train_frac: f64,
        #[command(flatten)]
        forest: ForestArgs,
    },
}

#[derive(Subcommand)]
enum ReportCommand {
    /// Feature-importance chart and table from a saved model.
    Importance {
        #[arg(long)]
        model: PathBuf,
        /// How many features to chart, largest first.
        #[arg(long, default_value_t = 15)]
        top: usize,
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

/// Applies CEABENCH_THREADS before any parallel work starts.
fn init_thread_pool() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| Error::param(THREADS_ENV, format!("expected a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::param(THREADS_ENV, e.to_string()))
}

/// Reads one feature CSV, or every `*.csv` in a directory concatenated in
/// file-name order.
fn load_features(path: &Path) -> Result<FeatureTable> {
    if path.is_file() {
        return read_table(path);
    }
    if !path.is_dir() {
        return Err(Error::MissingInput(path.display().to_string()));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::MissingInput(format!("no .csv files under {}", path.display())));
    }
    let tables = files.iter().map(|f| read_table(f)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&FeatureTable> = tables.iter().collect();
    FeatureTable::concat(&refs)
}

/// Splits a pooled table into per-patient tables in lexicographic id order,
/// the canonical patient order for matrices and folds.
fn split_by_patient(table: &FeatureTable) -> Vec<(String, FeatureTable)> {
    let mut ids = table.patient_ids();
    ids.sort();
    ids.into_iter().map(|id| (id.clone(), table.filter_patients(&[id.as_str()]))).collect()
}

fn path_string(path: &Path) -> String {
    path.display().to_string()
}

fn forest_params_json(params: &ForestParams) -> serde_json::Value {
    serde_json::to_value(params).unwrap_or(serde_json::Value::Null)
}

fn run_synth(spec_path: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut spec = load_cohort_spec(spec_path)?;
    if let Some(seed) = seed {
        spec.master_seed = seed;
    }
    let records = synth_cohort(&spec)?;
    std::fs::create_dir_all(out)?;
    for record in &records {
        write_patient_dir(record, out)?;
    }
    write_manifest(
        out,
        &RunManifest::new(
            "synth",
            vec![path_string(spec_path)],
            Some(spec.master_seed),
            serde_json::json!({ "n_patients": spec.n_patients }),
        ),
    )?;
    println!("wrote {} patients to {}", records.len(), out.display());
    Ok(())
}

fn run_extract(data: &Path, out: &Path, window_s: f64, stride_s: f64) -> Result<()> {
    let spec = WindowSpec { length_s: window_s, stride_s };
    spec.validate()?;
    let records = read_cohort(data)?;
    std::fs::create_dir_all(out)?;
    let mut rows = 0usize;
    for record in &records {
        let table = extract_features(record, &spec)?;
        rows += table.len();
        write_table(&table, &out.join(format!("{}.csv", record.id)))?;
    }
    write_manifest(
        out,
        &RunManifest::new(
            "extract",
            vec![path_string(data)],
            None,
            serde_json::json!({ "window_s": window_s, "stride_s": stride_s }),
        ),
    )?;
    println!("extracted {rows} windows from {} patients into {}", records.len(), out.display());
    Ok(())
}

fn run_train(features: &Path, model_path: &Path, params: &ForestParams) -> Result<()> {
    let table = load_features(features)?;
    let model = fit_forest(&table, params)?;
    if let Some(parent) = model_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    save_model(&model, model_path)?;
    let manifest_dir = model_path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    write_manifest(
        manifest_dir,
        &RunManifest::new(
            "train",
            vec![path_string(features)],
            Some(params.seed),
            forest_params_json(params),
        ),
    )?;
    println!(
        "trained {} trees on {} rows ({} classes) -> {}",
        model.params.n_trees,
        model.trained_rows,
        model.classes.len(),
        model_path.display()
    );
    Ok(())
}

fn run_eval(protocol: &EvalCommand) -> Result<()> {
    match protocol {
        EvalCommand::Pooled { features, report, test_frac, forest } => {
            let params = forest.params();
            let table = load_features(features)?;
            let per_patient: Vec<FeatureTable> =
                split_by_patient(&table).into_iter().map(|(_, t)| t).collect();
            let result = pooled_eval(&per_patient, &params, *test_frac, params.seed)?;
            write_eval_report(report, &result, &table.schema.names)?;
            write_manifest(
                report,
                &RunManifest::new(
                    "eval pooled",
                    vec![path_string(features)],
                    Some(params.seed),
                    serde_json::json!({ "forest": forest_params_json(&params), "test_frac": test_frac }),
                ),
            )?;
            println!("pooled accuracy {:.4} ({} test rows) -> {}", result.accuracy, result.test_rows, report.display());
        }
        EvalCommand::Pairwise { features, report, forest } => {
            let params = forest.params();
            let table = load_features(features)?;
            let result = pairwise_eval(&split_by_patient(&table), &params)?;
            write_pairwise_report(report, &result)?;
            write_manifest(
                report,
                &RunManifest::new(
                    "eval pairwise",
                    vec![path_string(features)],
                    Some(params.seed),
                    serde_json::json!({ "forest": forest_params_json(&params) }),
                ),
            )?;
            println!("pairwise {} cells -> {}", result.cells.len(), report.display());
        }
        EvalCommand::Lopo { features, report, forest } => {
            let params = forest.params();
            let table = load_features(features)?;
            let results = lopo_eval(&split_by_patient(&table), &params)?;
            write_lopo_report(report, &results, &table.schema.names)?;
            write_manifest(
                report,
                &RunManifest::new(
                    "eval lopo",
                    vec![path_string(features)],
                    Some(params.seed),
                    serde_json::json!({ "forest": forest_params_json(&params) }),
                ),
            )?;
            let mean = results.iter().map(|r| r.accuracy).sum::<f64>() / results.len() as f64;
            println!("lopo mean accuracy {:.4} over {} folds -> {}", mean, results.len(), report.display());
        }
        EvalCommand::Within { features, report, train_frac, forest } => {
            let params = forest.params();
            let table = load_features(features)?;
            let result = within_patient_eval(&split_by_patient(&table), &params, *train_frac, params.seed)?;
            write_within_report(report, &result, &table.schema.names)?;
            write_manifest(
                report,
                &RunManifest::new(
                    "eval within",
                    vec![path_string(features)],
                    Some(params.seed),
                    serde_json::json!({ "forest": forest_params_json(&params), "train_frac": train_frac }),
                ),
            )?;
            println!(
                "within-patient {} folds ({} skipped) -> {}",
                result.reports.len(),
                result.skipped.len(),
                report.display()
            );
        }
    }
    Ok(())
}

fn run_tsne(features: &Path, out: &Path, perplexity: f64, iterations: usize, seed: u64) -> Result<()> {
    let table = load_features(features)?;
    let standardized = standardize(&table)?;
    let params = TsneParams { perplexity, iterations, seed, ..Default::default() };
    let result = tsne(&standardized.matrix, &params)?;
    let rows: Vec<EmbeddingRow> = standardized
        .row_indices
        .iter()
        .zip(&result.coordinates)
        .map(|(&idx, coord)| {
            let row = &table.rows[idx];
            EmbeddingRow {
                patient_id: row.patient_id.clone(),
                window_start_s: row.window_start_s,
                x: coord[0],
                y: coord[1],
                label: row.label.clone(),
            }
        })
        .collect();
    std::fs::create_dir_all(out)?;
    write_embedding_csv(&out.join("embedding.csv"), &rows)?;
    write_embedding_svg(&out.join("embedding.svg"), &rows)?;
    write_manifest(
        out,
        &RunManifest::new(
            "tsne",
            vec![path_string(features)],
            Some(seed),
            serde_json::to_value(&params).unwrap_or(serde_json::Value::Null),
        ),
    )?;
    println!(
        "embedded {} windows (KL {:.4} -> {:.4}) -> {}",
        rows.len(),
        result.initial_kl,
        result.final_kl,
        out.display()
    );
    Ok(())
}

fn run_report(what: &ReportCommand) -> Result<()> {
    match what {
        ReportCommand::Importance { model, top, svg, csv } => {
            if svg.is_none() && csv.is_none() {
                return Err(Error::param("svg", "need --svg and/or --csv output paths".to_string()));
            }
            let loaded = load_model(model)?;
            let names = &loaded.schema.names;
            if let Some(svg_path) = svg {
                if let Some(parent) = svg_path.parent().filter(|p| !p.as_os_str().is_empty()) {
                    std::fs::create_dir_all(parent)?;
                }
                let chart = crate::charts::importance_bars_svg(names, &loaded.importances, *top);
                std::fs::write(svg_path, chart)?;
            }
            if let Some(csv_path) = csv {
                if let Some(parent) = csv_path.parent().filter(|p| !p.as_os_str().is_empty()) {
                    std::fs::create_dir_all(parent)?;
                }
                let mut order: Vec<usize> = (0..names.len()).collect();
                order.sort_by(|&a, &b| loaded.importances[b].total_cmp(&loaded.importances[a]));
                let mut w = csv::Writer::from_path(csv_path).map_err(|e| Error::Format(format!("csv: {e}")))?;
                w.write_record(["feature", "importance"]).map_err(|e| Error::Format(format!("csv: {e}")))?;
                for &i in order.iter().take(*top) {
                    w.write_record([names[i].as_str(), &loaded.importances[i].to_string()])
                        .map_err(|e| Error::Format(format!("csv: {e}")))?;
                }
                w.flush()?;
            }
            let outputs: Vec<&PathBuf> = [svg.as_ref(), csv.as_ref()].into_iter().flatten().collect();
            let manifest_dir = outputs[0].parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
            write_manifest(
                manifest_dir,
                &RunManifest::new(
                    "report importance",
                    vec![path_string(model)],
                    None,
                    serde_json::json!({ "top": top }),
                ),
            )?;
            println!("importance report for {} features -> {}", names.len(), outputs[0].display());
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Synth { spec, out, seed } => run_synth(spec, out, *seed),
        Command::Extract { data, out, window_s, stride_s } => {
            run_extract(data, out, *window_s, *stride_s)
        }
        Command::Train { features, model, forest } => run_train(features, model, &forest.params()),
        Command::Eval { protocol } => run_eval(protocol),
        Command::Tsne { features, out, perplexity, iterations, seed } => {
            run_tsne(features, out, *perplexity, *iterations, *seed)
        }
        Command::Report { what } => run_report(what),
    }
}

/// Parses arguments and runs one command; returns the process exit code.
/// Usage errors exit directly through clap with code 2; every domain error
/// maps to its own documented code with a single-line message on stderr.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match init_thread_pool().and_then(|()| dispatch(cli)) {
        Ok(()) => 0,
        Err(e) => {
            let message = e.to_string().replace('\n', "; ");
            eprintln!("ceabench error: kind={} msg={}", e.kind(), message);
            e.exit_code()
        }
    }
}
