//! Render the training-curve SVGs (commitment loss, perplexity with its
//! health-threshold and maximum reference lines).
//!
//! Run with `cargo run --example plot_curves`.

use std::path::Path;

use vqprobe::plot::{loss_curve_svg, perplexity_curve_svg};
use vqprobe::projection::LRSchedule;
use vqprobe::synth::{compact_pair, generate};
use vqprobe::trainer::{run_stage_a, TrainConfig};

fn main() -> vqprobe::Result<()> {
    let dir = Path::new("target/examples/plot_curves");
    std::fs::create_dir_all(dir)?;

    let (_, batch) = generate(&compact_pair(64, 42))?;
    let config = TrainConfig {
        steps: 600,
        d_proj: 64,
        lr: LRSchedule { eta0: 1e-3, eta_min: 1e-4, t_max: 600 },
        seed: 7,
        ..TrainConfig::default()
    };
    let (_, _, log) = run_stage_a(&batch, &config)?;

    std::fs::write(dir.join("loss.svg"), loss_curve_svg(&log.records)?)?;
    std::fs::write(dir.join("perplexity.svg"), perplexity_curve_svg(&log.records, config.k)?)?;
    println!("wrote {}/loss.svg and perplexity.svg", dir.display());
    println!(
        "final loss {:.3e}, final perplexity {:.3} (threshold {:.1}, max {})",
        log.summary.final_commit_loss,
        log.summary.final_perplexity,
        0.4 * config.k as f64,
        config.k
    );
    Ok(())
}
