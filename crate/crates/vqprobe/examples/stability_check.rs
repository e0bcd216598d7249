//! Repeated-run stability of the frozen pipeline.
//!
//! With a frozen projection and codebook, the same video always maps to
//! the same mode symbol, so the stability score is exactly 1. A perturbed
//! pipeline (simulated mid-measurement mutation) scores below 1, which
//! shows the detector actually detects.
//!
//! Run with `cargo run --example stability_check`.

use vqprobe::pipeline::Pipeline;
use vqprobe::projection::LRSchedule;
use vqprobe::stats::{h1_stability, stability_over_runs, StabilityReport};
use vqprobe::synth::{compact_pair, generate};
use vqprobe::trainer::{run_stage_a, TrainConfig};

fn main() -> vqprobe::Result<()> {
    let mut spec = compact_pair(64, 42);
    spec.videos_per_condition = 3;
    let (header, batch) = generate(&spec)?;
    let config = TrainConfig {
        steps: 300,
        d_proj: 64,
        lr: LRSchedule { eta0: 1e-3, eta_min: 1e-4, t_max: 300 },
        seed: 7,
        ..TrainConfig::default()
    };
    let (params, codebook, _) = run_stage_a(&batch, &config)?;
    let pipeline = Pipeline::new(params, codebook);

    let mut scores = Vec::new();
    for rec in &header.videos {
        scores.push(h1_stability(&pipeline, batch.video_rows(rec), 20)?);
    }
    let report = StabilityReport::from_scores(scores, 20);
    println!("per-video stability: {:?}", report.per_video);
    println!("mean stability: {:.3} (frozen pipeline: exactly 1.0)", report.mean);

    // fault injection: pretend the codebook changed after repeat 12
    let rec = &header.videos[0];
    let honest_mode = pipeline.video_mode(batch.video_rows(rec))?;
    let perturbed = stability_over_runs(20, |m| {
        Ok(if m < 12 { honest_mode } else { (honest_mode + 1) % pipeline.k() })
    })?;
    println!("stability with a mid-measurement perturbation: {perturbed:.2} (< 1.0)");
    Ok(())
}
