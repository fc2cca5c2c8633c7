//! Compare the six model variants on correlated heavy-tailed data.
//!
//! ```text
//! cargo run --release -p profiti --example ablation
//! ```

use profiti::synthetic::{ProcessFamily, SyntheticConfig};
use profiti::train::{run_ablation, DataSource, TrainConfig};

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let mut cfg = TrainConfig {
        data: DataSource::Synthetic(SyntheticConfig {
            n_series: 1000,
            channels: 3,
            max_queries: 8,
            family: ProcessFamily::CorrelatedHeavytail,
            ..SyntheticConfig::default()
        }),
        epochs: 30,
        lr: 3e-3,
        ..TrainConfig::default()
    };
    cfg.model.encoder.d = 16;
    cfg.model.encoder.layers = 1;
    let table = run_ablation(&cfg)?;
    print!("{}", table.to_table());
    Ok(())
}
