//! Train on synthetic heavy-tailed data, save a checkpoint and evaluate it.
//!
//! ```text
//! cargo run --release -p profiti --example train_synthetic
//! ```

use profiti::checkpoint;
use profiti::metrics::evaluate_model;
use profiti::synthetic::{ProcessFamily, SyntheticConfig};
use profiti::train::{split_dataset, train, DataSource, TrainConfig};

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut cfg = TrainConfig {
        data: DataSource::Synthetic(SyntheticConfig {
            n_series: 600,
            family: ProcessFamily::CorrelatedHeavytail,
            ..SyntheticConfig::default()
        }),
        epochs: 20,
        lr: 3e-3,
        ..TrainConfig::default()
    };
    cfg.model.encoder.d = 16;
    cfg.model.encoder.layers = 1;

    let dir = tempfile_dir()?;
    let (record, model) = train(&cfg, Some(&dir))?;
    println!("{} (best epoch {})", record.stop_reason, record.best_epoch);
    print!("{}", record.report.to_table());

    let loaded = checkpoint::load(record.checkpoint.as_ref().expect("checkpoint written"))?;
    let splits = split_dataset(cfg.data.load()?, cfg.split, cfg.seed)?;
    let again = evaluate_model(&splits.test, &loaded, &cfg.eval)?;
    assert_eq!(again, record.report);
    println!("checkpoint in {} reproduces the report", dir.display());
    drop(model);
    Ok(())
}

fn tempfile_dir() -> std::io::Result<std::path::PathBuf> {
    let dir = std::env::temp_dir().join("profiti-train-example");
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}
