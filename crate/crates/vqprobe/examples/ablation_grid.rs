//! Decay-rate / commitment-coefficient ablation on the compact preset:
//! the aggressive decay with strong commitment stabilizes the codebook,
//! slow decay with weak commitment degrades it.
//!
//! Run with `cargo run --example ablation_grid`.

use vqprobe::projection::LRSchedule;
use vqprobe::synth::{compact_pair, generate};
use vqprobe::trainer::{ablation_csv, ablation_grid, TrainConfig};

fn config(gamma: f64, beta: f64, seed: u64) -> TrainConfig {
    TrainConfig {
        steps: 500,
        batch_size: 32,
        gamma,
        beta,
        d_proj: 64,
        // constant learning rate keeps the batch jitter alive, which is
        // what separates fast and slow codebook tracking
        lr: LRSchedule { eta0: 1e-3, eta_min: 1e-3, t_max: 500 },
        seed,
        ..TrainConfig::default()
    }
}

fn main() -> vqprobe::Result<()> {
    let (_, batch) = generate(&compact_pair(64, 1000))?;
    let grid = vec![
        config(0.99, 0.25, 0),
        config(0.95, 1.00, 0),
        config(0.90, 2.00, 0),
    ];
    let rows = ablation_grid(&batch, &grid)?;
    println!("gamma  beta   active  perplexity  outcome");
    for r in &rows {
        println!(
            "{:<6.2} {:<6.2} {:<7.3} {:<11.3} {}",
            r.gamma,
            r.beta,
            r.active_ratio,
            r.perplexity,
            r.outcome.as_str()
        );
    }
    let dir = std::path::Path::new("target/examples/ablation_grid");
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("ablation.csv"), ablation_csv(&rows))?;
    println!("wrote {}/ablation.csv", dir.display());
    Ok(())
}
