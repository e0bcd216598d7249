//! End-to-end diagnostic run: generate a two-condition store, train the
//! quantizer, then run the full battery (stability, chi-squared, mutual
//! information, JSD, noise-baseline MI ratio, codebook health) and print
//! the pass table.
//!
//! Run with `cargo run --example run_diagnostics`.

use std::path::Path;

use vqprobe::pipeline::Pipeline;
use vqprobe::projection::LRSchedule;
use vqprobe::report::{
    dictionary_to_json, report_to_json, run_diagnostics, DiagnoseOptions, InterventionSpec,
};
use vqprobe::synth::{generate, separable_pair};
use vqprobe::trainer::{run_stage_a, TrainConfig};

fn main() -> vqprobe::Result<()> {
    let dir = Path::new("target/examples/run_diagnostics");
    std::fs::create_dir_all(dir)?;

    let (header, batch) = generate(&separable_pair(64, 42))?;
    let config = TrainConfig {
        steps: 600,
        d_proj: 64,
        lr: LRSchedule { eta0: 1e-3, eta_min: 1e-4, t_max: 600 },
        seed: 7,
        ..TrainConfig::default()
    };
    let (params, codebook, log) = run_stage_a(&batch, &config)?;
    let pipeline = Pipeline::new(params, codebook);

    let interventions = vec![InterventionSpec {
        name: "direction_contrast".into(),
        condition_a: "cond_a".into(),
        condition_b: "cond_b".into(),
    }];
    let opts = DiagnoseOptions::default();
    let (report, dictionary) =
        run_diagnostics(&header, &batch, &pipeline, &log.summary, &interventions, &opts)?;

    println!("h1 stability: {:.3} over {} repeats", report.h1.mean, report.h1.repeats);
    println!("baseline MI:  {:.3e} bits ({} noise vectors)", report.baseline_mi_bits, report.baseline_count);
    for iv in &report.h2 {
        let v = &iv.video_mode;
        println!(
            "{} [{} vs {}]: p={:.3e} mi={:.4} nmi={:.4} jsd={:.3} ratio={:.3e} pass={}",
            iv.name, iv.condition_a, iv.condition_b, v.p, v.mi_bits, v.nmi, v.jsd, v.mi_ratio, v.pass
        );
    }
    for row in &report.pass_table {
        println!(
            "  {} {}: {:.4e} {} {:.4e}",
            if row.pass { "PASS" } else { "FAIL" },
            row.criterion,
            row.value,
            row.comparison,
            row.threshold
        );
    }
    println!("overall: {}", if report.overall_pass { "PASS" } else { "FAIL" });
    for c in &dictionary.conditions {
        println!(
            "condition {}: dominant symbol {} with mass {:.2}",
            c.condition, c.dominant_symbol, c.dominant_mass
        );
    }

    std::fs::write(dir.join("report.json"), report_to_json(&report))?;
    std::fs::write(dir.join("dictionary.json"), dictionary_to_json(&dictionary))?;
    println!("wrote {}/report.json and dictionary.json", dir.display());
    Ok(())
}
