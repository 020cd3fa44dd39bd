//! `clsc`: generate synthetic corpora, train and evaluate models, run the
//! noise experiments, and inspect embeddings, all from dataset files.
//!
//! Every subcommand emits flat `key=value` records (tab-delimited) to stdout
//! or `--out`. Exit codes: 0 success, 1 invalid input or configuration,
//! 2 numerical failure during computation.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Parser, Subcommand};
use ndarray::Array2;
use serde::Deserialize;

use clsc_core::dataset::Dataset;
use clsc_core::experiment::{
    ablation, evaluate_dataset, noise_sweep, project_embeddings, record_line, split_dataset,
};
use clsc_core::graph::{build_graph_with, propagate};
use clsc_core::model::ModelParams;
use clsc_core::synth::{clean_fraction, generate, SynthConfig};
use clsc_core::train::{train, TrainConfig};
use clsc_core::{build_batch, Error as CoreError};

#[derive(Parser)]
#[command(name = "clsc", version, about = "Latent-space clustering under noisy candidate labels")]
struct Cli {
    /// TOML file with optional [train] and [synth] tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the seed of every config section.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Write result records here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic noisy-typing dataset file.
    Generate {
        /// Where to write the dataset.
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Train a model on a dataset file.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Write the trained model checkpoint here.
        #[arg(long)]
        save: Option<PathBuf>,
    },
    /// Score a trained model against a gold-labeled dataset.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// One label-propagation pass over a file of embeddings and masks.
    Propagate {
        #[arg(long)]
        input: PathBuf,
        /// Iteration cap.
        #[arg(long, default_value_t = 200)]
        s_lp: usize,
        /// Exclude self-transitions from the similarity graph.
        #[arg(long)]
        zero_diagonal: bool,
    },
    /// Paired comparison of the regularizer against its ablation while the
    /// clean-data fraction shrinks.
    Sweep {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.2,0.15,0.1,0.05")]
        fractions: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
    },
    /// Chain-length ablation over clean and clean+noisy pools.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
    },
    /// Project a model's embeddings to 2-D for plotting.
    Project {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AppConfig {
    #[serde(default)]
    train: TrainConfig,
    #[serde(default)]
    synth: SynthConfig,
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> anyhow::Result<AppConfig> {
    let mut cfg: AppConfig = match path {
        None => AppConfig::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
        }
    };
    if let Some(s) = seed {
        cfg.train.seed = s;
        cfg.synth.seed = s;
    }
    Ok(cfg)
}

fn emit(out: Option<&Path>, lines: &[String]) -> anyhow::Result<()> {
    match out {
        None => {
            let stdout = std::io::stdout();
            let mut h = stdout.lock();
            for l in lines {
                writeln!(h, "{l}")?;
            }
        }
        Some(p) => {
            let mut f = File::create(p).with_context(|| format!("creating {}", p.display()))?;
            for l in lines {
                writeln!(f, "{l}")?;
            }
        }
    }
    Ok(())
}

fn metrics_pairs(m: &clsc_core::metrics::EvalResult) -> Vec<(&'static str, String)> {
    vec![
        ("strict_acc", m.strict_acc.to_string()),
        ("macro_f1", m.macro_f1.to_string()),
        ("micro_f1", m.micro_f1.to_string()),
    ]
}

fn main() {
    // Clap's own usage failures must map to the validation exit code, and
    // --help/--version to success.
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        let code = err
            .downcast_ref::<CoreError>()
            .map_or(1, |e| if e.is_numerical() { 2 } else { 1 });
        std::process::exit(code);
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = load_config(cli.config.as_deref(), cli.seed)?;
    let out = cli.out.as_deref();
    match cli.cmd {
        Cmd::Generate { dataset } => {
            let ds = generate(&cfg.synth)?;
            ds.save(&dataset)?;
            emit(
                out,
                &[record_line(&[
                    ("dataset", dataset.display().to_string()),
                    ("n_samples", ds.len().to_string()),
                    ("n_types", ds.hierarchy.len().to_string()),
                    ("clean_fraction", clean_fraction(&ds).to_string()),
                ])],
            )
        }
        Cmd::Train { data, save } => {
            let ds = Dataset::load(&data)?;
            let report = train(&ds, &cfg.train)?;
            let mut lines = Vec::new();
            for e in &report.epochs {
                let mut pairs = vec![
                    ("epoch", e.epoch.to_string()),
                    ("sup_loss", e.sup_loss.to_string()),
                    ("clsc_loss", e.clsc_loss.to_string()),
                    ("total_loss", e.total_loss.to_string()),
                ];
                if let Some(dev) = &e.dev {
                    pairs.push(("dev_strict_acc", dev.strict_acc.to_string()));
                }
                lines.push(record_line(&pairs));
            }
            if let Some(best) = report.best_epoch {
                lines.push(record_line(&[("best_epoch", best.to_string())]));
            }
            if let Some(path) = save {
                report.selected_params().save(&path)?;
                lines.push(record_line(&[("checkpoint", path.display().to_string())]));
            }
            emit(out, &lines)
        }
        Cmd::Eval { data, model } => {
            let ds = Dataset::load(&data)?;
            let params = ModelParams::load(&model)?;
            let metrics = evaluate_dataset(&params, &ds)?;
            emit(out, &[record_line(&metrics_pairs(&metrics))])
        }
        Cmd::Propagate {
            input,
            s_lp,
            zero_diagonal,
        } => {
            let seed = cli.seed.unwrap_or(cfg.train.seed);
            run_propagate(&input, s_lp, zero_diagonal, seed, out)
        }
        Cmd::Sweep {
            data,
            fractions,
            seeds,
            test_fraction,
        } => {
            let ds = Dataset::load(&data)?;
            let (train_ds, test_ds) = split_dataset(&ds, test_fraction, cfg.train.seed)?;
            let rows = noise_sweep(&train_ds, &test_ds, &cfg.train, &fractions, &seeds)?;
            emit(out, &rows.iter().map(|r| r.record()).collect::<Vec<_>>())
        }
        Cmd::Ablate {
            data,
            seeds,
            test_fraction,
        } => {
            let ds = Dataset::load(&data)?;
            let (train_ds, test_ds) = split_dataset(&ds, test_fraction, cfg.train.seed)?;
            let rows = ablation(&train_ds, &test_ds, &cfg.train, &seeds)?;
            emit(out, &rows.iter().map(|r| r.record()).collect::<Vec<_>>())
        }
        Cmd::Project { data, model } => {
            let ds = Dataset::load(&data)?;
            let params = ModelParams::load(&model)?;
            let batch = build_batch(&ds.hierarchy, ds.samples.clone())?;
            let encoded = clsc_core::encoder::encode(&params.encoder, &batch)?;
            let coords = project_embeddings(&encoded.z)?;
            let mut lines = vec!["id\tx\ty\tgold".to_string()];
            for (i, s) in ds.samples.iter().enumerate() {
                let gold = s
                    .gold
                    .map(|g| ds.hierarchy.path(g).to_string())
                    .unwrap_or_else(|| "-".to_string());
                lines.push(format!(
                    "{}\t{}\t{}\t{}",
                    s.id,
                    coords[[i, 0]],
                    coords[[i, 1]],
                    gold
                ));
            }
            emit(out, &lines)
        }
    }
}

#[derive(Deserialize)]
struct PropagateHeader {
    schema: u32,
    d_z: usize,
    k: usize,
}

#[derive(Deserialize)]
struct PropagateRec {
    id: String,
    z: Vec<f64>,
    mask: Vec<f64>,
}

/// Reads `{"schema":1,"d_z":...,"k":...}` followed by one
/// `{"id","z","mask"}` object per line, and writes one `{"id","phi"}` line
/// per sample.
fn run_propagate(
    input: &Path,
    s_lp: usize,
    zero_diagonal: bool,
    seed: u64,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    let file = File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let mut lines = BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| CoreError::validation_at(1, "missing header line"))??;
    let header: PropagateHeader = serde_json::from_str(&header_line)
        .map_err(|e| CoreError::validation_at(1, format!("bad header: {e}")))?;
    if header.schema != 1 {
        return Err(CoreError::validation_at(1, "unsupported schema").into());
    }
    if header.d_z == 0 || header.k == 0 {
        return Err(CoreError::validation_at(1, "d_z and k must be positive").into());
    }
    let mut ids = Vec::new();
    let mut z_rows = Vec::new();
    let mut mask_rows = Vec::new();
    for (offset, line) in lines.enumerate() {
        let lineno = offset + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PropagateRec = serde_json::from_str(&line)
            .map_err(|e| CoreError::validation_at(lineno, format!("bad record: {e}")))?;
        if rec.z.len() != header.d_z {
            return Err(CoreError::validation_at(
                lineno,
                format!("z has width {}, header says {}", rec.z.len(), header.d_z),
            )
            .into());
        }
        if rec.mask.len() != header.k {
            return Err(CoreError::validation_at(
                lineno,
                format!("mask has width {}, header says {}", rec.mask.len(), header.k),
            )
            .into());
        }
        ids.push(rec.id);
        z_rows.push(rec.z);
        mask_rows.push(rec.mask);
    }
    let b = ids.len();
    if b < 2 {
        return Err(CoreError::validation("need at least 2 embedding rows").into());
    }
    let z = Array2::from_shape_vec((b, header.d_z), z_rows.concat())?;
    let mask = Array2::from_shape_vec((b, header.k), mask_rows.concat())?;
    let graph = build_graph_with(&z, zero_diagonal)?;
    let result = propagate(&graph, &mask, s_lp, seed)?;
    let mut out_lines = Vec::with_capacity(b);
    for (i, id) in ids.iter().enumerate() {
        let row: Vec<f64> = result.phi.row(i).to_vec();
        out_lines.push(serde_json::to_string(&serde_json::json!({
            "id": id,
            "phi": row,
        }))?);
    }
    emit(out, &out_lines)?;
    eprintln!(
        "{}",
        record_line(&[
            ("iterations", result.iterations.to_string()),
            ("converged", result.converged.to_string()),
            ("residual", result.residual.to_string()),
        ])
    );
    Ok(())
}
