use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use dfbnet::checkpoint;
use dfbnet::config;
use dfbnet::eval;
use dfbnet::gradcheck;
use dfbnet::localize;
use dfbnet::scalar::{Dtype, Scalar};
use dfbnet::synth;
use dfbnet::train::{self, TrainConfig};

#[derive(Parser)]
#[command(
    name = "dfbnet",
    about = "Fine-grained video action recognition with a discriminative filter bank head, at desk scale"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic fine-grained clip dataset plus manifests.
    Synth {
        /// Dataset config file (flat key = value).
        #[arg(long)]
        config: PathBuf,
        /// Output directory for clips and manifests.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write a checkpoint directory plus metrics.log.
    Train {
        /// Training config file (flat key = value).
        #[arg(long)]
        config: PathBuf,
        /// Training manifest.
        #[arg(long)]
        data: PathBuf,
        /// Optional validation manifest for per-epoch val accuracy.
        #[arg(long)]
        val: Option<PathBuf>,
        /// Checkpoint output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint: accuracy, confusion matrix, confused pairs.
    Eval {
        /// Checkpoint directory written by `train`.
        #[arg(long)]
        ckpt: PathBuf,
        /// Evaluation manifest.
        #[arg(long)]
        data: PathBuf,
        /// Optional meta-category map (`<class-index>\t<meta-name>` lines).
        #[arg(long)]
        meta: Option<PathBuf>,
        /// Report output path (JSON); the confusion matrix is also written
        /// next to it as `<out>.confusion.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Check analytic gradients against central finite differences.
    Gradcheck {
        /// Check a single operation (see `--op help` for names).
        #[arg(long)]
        op: Option<String>,
        /// Check the full four-term head loss on a micro model.
        #[arg(long)]
        full_head: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the machine-readable key-value report here.
        #[arg(long)]
        kv_out: Option<PathBuf>,
    },
    /// Map a discriminative filter's maximal response to input-space boxes.
    Localize {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Class whose filters to probe.
        #[arg(long)]
        class: usize,
        /// Filter index within the class (0..N).
        #[arg(long)]
        filter: usize,
        /// CSV output path, one row per clip.
        #[arg(long)]
        out: PathBuf,
    },
}

fn cmd_train(config: &PathBuf, data: &PathBuf, val: Option<&PathBuf>, out: &PathBuf) -> anyhow::Result<()> {
    let cfg = TrainConfig::read(config)?;
    let train_manifest = synth::read_manifest(data)?;
    let val_manifest = val.map(|p| synth::read_manifest(p)).transpose()?;

    fn run<T: Scalar>(
        cfg: &TrainConfig,
        train_manifest: &synth::ClipManifest,
        val_manifest: Option<&synth::ClipManifest>,
        out: &PathBuf,
    ) -> anyhow::Result<()> {
        let result = train::train::<T>(cfg, train_manifest, val_manifest)?;
        checkpoint::save(out, &result.params, cfg)?;
        let mut log = String::from(train::METRICS_HEADER);
        log.push('\n');
        for line in &result.metrics {
            log.push_str(line);
            log.push('\n');
        }
        fs::write(out.join("metrics.log"), log)
            .with_context(|| format!("writing {}", out.join("metrics.log").display()))?;
        println!(
            "trained {} epochs: train top-1 {:.4}{}",
            cfg.epochs,
            result.final_train_top1,
            match result.final_val_top1 {
                Some(v) => format!(", val top-1 {v:.4}"),
                None => String::new(),
            }
        );
        println!("checkpoint written to {}", out.display());
        Ok(())
    }

    match cfg.dtype {
        Dtype::F32 => run::<f32>(&cfg, &train_manifest, val_manifest.as_ref(), out),
        Dtype::F64 => run::<f64>(&cfg, &train_manifest, val_manifest.as_ref(), out),
    }
}

fn cmd_eval(ckpt: &PathBuf, data: &PathBuf, meta: Option<&PathBuf>, out: &PathBuf) -> anyhow::Result<()> {
    let manifest = synth::read_manifest(data)?;
    let meta_map = meta.map(|p| eval::read_meta_map(p)).transpose()?;
    let cfg = checkpoint::load_config(ckpt)?;
    let model_cfg = cfg.model_config();

    let report = match checkpoint::stored_dtype(ckpt)? {
        Dtype::F32 => {
            let params = checkpoint::load::<f32>(ckpt)?;
            eval::evaluate(&params, &model_cfg, &manifest, meta_map.as_deref())?
        }
        Dtype::F64 => {
            let params = checkpoint::load::<f64>(ckpt)?;
            eval::evaluate(&params, &model_cfg, &manifest, meta_map.as_deref())?
        }
    };

    let json = serde_json::to_string_pretty(&report).context("serializing report")?;
    fs::write(out, &json).with_context(|| format!("writing {}", out.display()))?;
    let csv_path = out.with_extension("confusion.csv");
    fs::write(&csv_path, eval::confusion_csv(&report))
        .with_context(|| format!("writing {}", csv_path.display()))?;
    println!(
        "top-1 {:.4}  top-5 {:.4}  ({} clips)",
        report.top1, report.top5, report.total
    );
    if let Some(metas) = &report.meta {
        for m in metas {
            println!("meta {:<20} top-1 {:.4}", m.name, m.top1);
        }
    }
    println!("report: {}  confusion: {}", out.display(), csv_path.display());
    Ok(())
}

fn cmd_gradcheck(
    op: Option<&str>,
    full_head: bool,
    seed: u64,
    kv_out: Option<&PathBuf>,
) -> anyhow::Result<bool> {
    let mut reports = Vec::new();
    match (op, full_head) {
        (Some(name), false) => reports.push((name.to_string(), gradcheck::check_op(name, seed)?)),
        (None, true) => reports.push(("full-head".to_string(), gradcheck::check_full_head(seed)?)),
        (Some(name), true) => {
            reports.push((name.to_string(), gradcheck::check_op(name, seed)?));
            reports.push(("full-head".to_string(), gradcheck::check_full_head(seed)?));
        }
        (None, false) => {
            for name in gradcheck::OP_NAMES {
                reports.push((name.to_string(), gradcheck::check_op(name, seed)?));
            }
            reports.push(("full-head".to_string(), gradcheck::check_full_head(seed)?));
        }
    }

    let mut all_pass = true;
    let mut kv = String::new();
    for (name, report) in &reports {
        println!("== {name} ==");
        print!("{}", report.table());
        all_pass &= report.pass();
        kv.push_str(&format!("[{name}]\n{}", report.to_kv()));
    }
    if let Some(path) = kv_out {
        fs::write(path, kv).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(all_pass)
}

fn cmd_localize(
    ckpt: &PathBuf,
    data: &PathBuf,
    class: usize,
    filter: usize,
    out: &PathBuf,
) -> anyhow::Result<()> {
    let manifest = synth::read_manifest(data)?;
    let cfg = checkpoint::load_config(ckpt)?;
    let model_cfg = cfg.model_config();
    let results = match checkpoint::stored_dtype(ckpt)? {
        Dtype::F32 => {
            let params = checkpoint::load::<f32>(ckpt)?;
            localize::localize_manifest(&params, &model_cfg, &manifest, class, filter)?
        }
        Dtype::F64 => {
            let params = checkpoint::load::<f64>(ckpt)?;
            localize::localize_manifest(&params, &model_cfg, &manifest, class, filter)?
        }
    };
    fs::write(out, localize::to_csv(&results))
        .with_context(|| format!("writing {}", out.display()))?;
    let hits = results.iter().filter(|r| r.hit).count();
    println!(
        "class {class} filter {filter}: {hits}/{} boxes hit the planted patch",
        results.len()
    );
    println!("rows written to {}", out.display());
    Ok(())
}

fn real_main() -> anyhow::Result<bool> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Synth { config, out } => {
            let cfg = config::read_synth_config(config)?;
            let (train_m, val_m) = synth::generate(&cfg, out)?;
            println!(
                "wrote {} train + {} val clips under {}",
                train_m.entries.len(),
                val_m.entries.len(),
                out.display()
            );
            Ok(true)
        }
        Command::Train { config, data, val, out } => {
            cmd_train(config, data, val.as_ref(), out)?;
            Ok(true)
        }
        Command::Eval { ckpt, data, meta, out } => {
            cmd_eval(ckpt, data, meta.as_ref(), out)?;
            Ok(true)
        }
        Command::Gradcheck { op, full_head, seed, kv_out } => {
            if let Some(name) = op {
                if !gradcheck::OP_NAMES.contains(&name.as_str()) {
                    bail!(
                        "unknown op '{name}'; known ops: {}",
                        gradcheck::OP_NAMES.join(", ")
                    );
                }
            }
            cmd_gradcheck(op.as_deref(), *full_head, *seed, kv_out.as_ref())
        }
        Command::Localize { ckpt, data, class, filter, out } => {
            cmd_localize(ckpt, data, *class, *filter, out)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("gradcheck FAILED");
            ExitCode::FAILURE
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
