//! Generate a synthetic dataset, write it as JSONL and read it back.
//!
//! ```text
//! cargo run -p profiti --example generate_data -- /tmp/data.jsonl
//! ```

use profiti::data::{load_jsonl, save_jsonl};
use profiti::synthetic::{empirical_channel_correlation, generate_synthetic, ProcessFamily, SyntheticConfig};

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "synthetic.jsonl".into());
    let cfg = SyntheticConfig {
        n_series: 200,
        family: ProcessFamily::CorrelatedHeavytail,
        ..SyntheticConfig::default()
    };
    let data = generate_synthetic(&cfg)?;
    save_jsonl(&data, &out)?;
    let back = load_jsonl(&out)?;
    assert_eq!(back, data);

    let first = &data[0];
    println!("{} series written to {out}", data.len());
    println!(
        "series {}: {} observations, {} queries, answers {:?}",
        first.id,
        first.observations.len(),
        first.queries.len(),
        first.answers.as_deref().unwrap_or_default()
    );
    println!(
        "empirical cross-channel correlation of the latent process: {:.3}",
        empirical_channel_correlation(&cfg, 5_000, 1)
    );
    Ok(())
}
