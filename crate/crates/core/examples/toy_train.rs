//! Short toy training run printing per-step metrics.
//!
//! `cargo run --release -p surftex --example toy_train -- 20`

use std::time::Instant;

use surftex::gan::{train, RunConfig};

fn main() -> surftex::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let mut cfg = RunConfig::default();
    cfg.train.steps = steps;
    let start = Instant::now();
    let out = train(&cfg)?;
    for m in &out.metrics {
        println!("{}", serde_json::to_string(m).expect("metrics serialize"));
    }
    eprintln!("{steps} steps in {:.1?}", start.elapsed());
    Ok(())
}
