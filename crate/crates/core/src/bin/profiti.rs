use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use profiti::checkpoint;
use profiti::data::{load_jsonl, save_jsonl};
use profiti::metrics::{instance_rng, EvalConfig};
use profiti::plot::{fan_svg, loss_curve_csv, loss_curve_svg};
use profiti::synthetic::{generate_synthetic, SyntheticConfig};
use profiti::train::{evaluate, run_ablation, train, TrainConfig};
use profiti::ProfitiError;

#[derive(Parser)]
#[command(name = "profiti", version, about = "Conditional normalizing flows for irregular time series")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic dataset as JSONL.
    GenerateData {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model; writes ckpt/, run.json, report.json and loss curves.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a JSONL dataset.
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        folds: usize,
        #[arg(long, env = "PROFITI_SEED", default_value_t = 0)]
        seed: u64,
        /// Optional per-query CSV dump.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Draw joint samples for every instance of a dataset.
    Sample {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "PROFITI_SEED", default_value_t = 0)]
        seed: u64,
        /// Also plot the first instance's sample fan.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Train all ablation variants on shared data and seed.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| ProfitiError::Config(format!("{}: {e}", path.display())).into())
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn train_config(path: &Path) -> anyhow::Result<TrainConfig> {
    let mut cfg: TrainConfig = read_json(path)?;
    cfg.apply_overrides(|k| std::env::var(k).ok())?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.cmd {
        Cmd::GenerateData { spec, out, seed } => {
            let mut cfg: SyntheticConfig = read_json(&spec)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let data = generate_synthetic(&cfg)?;
            save_jsonl(&data, &out)?;
            println!("wrote {} series to {}", data.len(), out.display());
        }
        Cmd::Train { config, out } => {
            let cfg = train_config(&config)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let (rec, _) = train(&cfg, Some(&out))?;
            write(&out.join("report.json"), serde_json::to_string_pretty(&rec.report)?)?;
            write(&out.join("loss_curve.csv"), loss_curve_csv(&rec))?;
            write(&out.join("loss_curve.svg"), loss_curve_svg(&rec))?;
            println!("{} (best epoch {})", rec.stop_reason, rec.best_epoch);
            print!("{}", rec.report.to_table());
        }
        Cmd::Evaluate {
            ckpt,
            data,
            report,
            samples,
            folds,
            seed,
            csv,
        } => {
            let cfg = EvalConfig {
                n_samples: samples,
                folds,
                seed,
            };
            let r = evaluate(&ckpt, &data, &cfg)?;
            write(&report, serde_json::to_string_pretty(&r)?)?;
            if let Some(path) = csv {
                write(&path, r.rows_csv())?;
            }
            print!("{}", r.to_table());
        }
        Cmd::Sample {
            ckpt,
            data,
            n,
            out,
            seed,
            svg,
        } => {
            let model = checkpoint::load(&ckpt)?;
            let data = load_jsonl(&data)?;
            let mut csv = String::from("id,sample,query,t,channel,value\n");
            for (i, inst) in data.iter().enumerate() {
                inst.validate()?;
                let samples = model.sample(inst, n, &mut instance_rng(seed, i))?;
                for (s, row) in samples.iter().enumerate() {
                    for (k, v) in row.iter().enumerate() {
                        let q = inst.queries[k];
                        csv.push_str(&format!("{},{s},{k},{},{},{v}\n", inst.id, q.t, q.channel));
                    }
                }
                if i == 0 {
                    if let Some(path) = &svg {
                        write(path, fan_svg(inst, &samples))?;
                    }
                }
            }
            write(&out, csv)?;
            println!("wrote {n} samples for {} series to {}", data.len(), out.display());
        }
        Cmd::Ablate { config, out } => {
            let cfg = train_config(&config)?;
            let table = run_ablation(&cfg)?;
            write(&out, serde_json::to_string_pretty(&table)?)?;
            print!("{}", table.to_table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let numeric = e.downcast_ref::<ProfitiError>().is_some_and(ProfitiError::is_numeric);
            ExitCode::from(if numeric { 3 } else { 2 })
        }
    }
}
