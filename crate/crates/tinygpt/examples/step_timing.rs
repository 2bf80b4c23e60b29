//! Times forward/backward passes at a given configuration.
//!
//! `cargo run --release -p tinygpt --example step_timing -- [paper|tiny] [batch]`

use std::time::Instant;

use tinygpt::model::{loss_and_grads_into, Workspace};
use tinygpt::{ModelConfig, Params32};

fn main() {
    let mut args = std::env::args().skip(1);
    let cfg = match args.next().as_deref() {
        Some("tiny") => ModelConfig::tiny(),
        _ => ModelConfig::paper(),
    };
    let batch: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(64);
    let params = Params32::init(cfg, 0);
    let rows: Vec<Vec<u32>> = (0..batch)
        .map(|b| (0..=cfg.block_size).map(|t| ((b * 7 + t * 13) % cfg.vocab_size) as u32).collect())
        .collect();
    let mut ws = Workspace::new();
    let mut grads = Vec::new();
    for _ in 0..4 {
        let start = Instant::now();
        let loss = loss_and_grads_into(&params, &rows, &mut ws, &mut grads).unwrap();
        println!("loss {loss:.4} in {:.3}s", start.elapsed().as_secs_f64());
    }
}
