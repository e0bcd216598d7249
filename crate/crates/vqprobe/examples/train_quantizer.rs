//! Train the quantizer on a synthetic store and write the artifacts:
//! checkpoint JSON and the per-step training CSV.
//!
//! Run with `cargo run --example train_quantizer`.

use std::path::Path;

use vqprobe::checkpoint::{self, Checkpoint};
use vqprobe::projection::LRSchedule;
use vqprobe::synth::{compact_pair, generate};
use vqprobe::trainer::{run_stage_a, TrainConfig};

fn main() -> vqprobe::Result<()> {
    let dir = Path::new("target/examples/train_quantizer");
    std::fs::create_dir_all(dir)?;

    let (_, batch) = generate(&compact_pair(64, 42))?;
    let config = TrainConfig {
        steps: 600,
        d_proj: 64,
        lr: LRSchedule { eta0: 1e-3, eta_min: 1e-4, t_max: 600 },
        seed: 7,
        ..TrainConfig::default()
    };
    let (params, codebook, log) = run_stage_a(&batch, &config)?;

    let s = &log.summary;
    println!("steps: {}", s.steps);
    println!("final commit loss: {:.4e}", s.final_commit_loss);
    println!("final perplexity:  {:.3} (eval pass: {:.3})", s.final_perplexity, s.eval_perplexity);
    println!("active ratio:      {:.3} (eval pass: {:.3})", s.final_active_ratio, s.eval_active_ratio);
    println!("convergence:       {} (stabilized: {})", s.convergence.as_str(), s.stabilized);
    for ev in &log.reset_events {
        println!("dead-code reset at step {}: entries {:?}", ev.step, ev.entries);
    }

    let ckpt = Checkpoint { params, codebook, summary: log.summary.clone() };
    std::fs::write(dir.join("checkpoint.json"), checkpoint::to_json(&ckpt))?;
    std::fs::write(dir.join("train_log.csv"), log.to_csv())?;
    println!("wrote {}/checkpoint.json and train_log.csv", dir.display());
    Ok(())
}
