//! Command implementations behind the thin `vqprobe` binary. Each command
//! is a plain function over paths so integration tests and the examples
//! can drive the same flows without a process boundary.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::checkpoint::{self, Checkpoint};
use crate::error::{Error, Result};
use crate::pipeline::Pipeline;
use crate::plot;
use crate::report::{
    dictionary_to_json, interventions_from_json, report_to_json, run_diagnostics, DiagnoseOptions,
    InterventionSpec,
};
use crate::stats::AnalysisUnit;
use crate::store::{load_store, save_store};
use crate::synth::{generate, SynthSpec};
use crate::trainer::{ablation_csv, ablation_grid, run_stage_a, TrainConfig, TrainLog};

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

/// `gen`: synthesize a latent store from a spec JSON and print norm stats.
pub fn cmd_gen(spec_path: &Path, out: &Path, seed_override: Option<u64>) -> Result<()> {
    let mut spec: SynthSpec = SynthSpec::from_json(&read_file(spec_path)?)?;
    if let Some(seed) = seed_override {
        spec.seed = seed;
    }
    let (header, batch) = generate(&spec)?;
    save_store(&header, &batch, out)?;

    let norms: Vec<f64> = batch
        .data
        .outer_iter()
        .map(|r| r.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt())
        .collect();
    let n = norms.len().max(1) as f64;
    let mean = norms.iter().sum::<f64>() / n;
    let var = norms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let min = norms.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = norms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    println!(
        "wrote {} tokens x {} dims ({} videos, {} conditions) to {}",
        header.count,
        header.dim,
        header.videos.len(),
        header.conditions().len(),
        out.display()
    );
    println!("token norms: mean {mean:.2}, std {:.2}, range [{min:.2}, {max:.2}]", var.sqrt());
    Ok(())
}

/// `train`: run the full training loop, write checkpoint + CSV log.
pub fn cmd_train(
    store_path: &Path,
    config_path: Option<&Path>,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> Result<(PathBuf, PathBuf)> {
    let mut config = match config_path {
        Some(p) => TrainConfig::from_json(&read_file(p)?)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    let (_, batch) = load_store(store_path)?;
    let (params, codebook, log) = run_stage_a(&batch, &config)?;

    fs::create_dir_all(out_dir)?;
    let ckpt_path = out_dir.join("checkpoint.json");
    let csv_path = out_dir.join("train_log.csv");
    let ckpt = Checkpoint { params, codebook, summary: log.summary.clone() };
    fs::write(&ckpt_path, checkpoint::to_json(&ckpt))?;
    fs::write(&csv_path, log.to_csv())?;

    let s = &log.summary;
    println!(
        "trained {} steps: loss {:.3e}, perplexity {:.3} (eval {:.3}), active {:.3} (eval {:.3}), {}",
        s.steps,
        s.final_commit_loss,
        s.final_perplexity,
        s.eval_perplexity,
        s.final_active_ratio,
        s.eval_active_ratio,
        s.convergence.as_str()
    );
    Ok((ckpt_path, csv_path))
}

/// `diagnose`: run the battery, write report + dictionary, return overall
/// pass so the caller can plumb the exit code.
pub fn cmd_diagnose(
    store_path: &Path,
    checkpoint_path: &Path,
    interventions_path: Option<&Path>,
    out_dir: &Path,
    unit: AnalysisUnit,
    seed: u64,
    baseline_count: Option<usize>,
) -> Result<bool> {
    let (header, batch) = load_store(store_path)?;
    let ckpt = checkpoint::from_json(&read_file(checkpoint_path)?)?;
    let interventions: Vec<InterventionSpec> = match interventions_path {
        Some(p) => interventions_from_json(&read_file(p)?)?,
        None => Vec::new(),
    };
    let mut opts = DiagnoseOptions { unit, baseline_seed: seed, ..DiagnoseOptions::default() };
    if let Some(count) = baseline_count {
        opts.baseline_count = count;
    }
    let pipeline = Pipeline::new(ckpt.params, ckpt.codebook);
    let (report, dictionary) =
        run_diagnostics(&header, &batch, &pipeline, &ckpt.summary, &interventions, &opts)?;

    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("report.json"), report_to_json(&report))?;
    fs::write(out_dir.join("dictionary.json"), dictionary_to_json(&dictionary))?;

    for row in &report.pass_table {
        println!(
            "{} {}: value {:.6e} {} {:.6e}",
            if row.pass { "PASS" } else { "FAIL" },
            row.criterion,
            row.value,
            row.comparison,
            row.threshold
        );
    }
    println!("overall: {}", if report.overall_pass { "PASS" } else { "FAIL" });
    Ok(report.overall_pass)
}

#[derive(Deserialize)]
struct GridFile {
    configs: Vec<TrainConfig>,
}

/// `ablate`: train each grid config on the store, write the outcome CSV.
pub fn cmd_ablate(store_path: &Path, grid_path: &Path, out_csv: &Path) -> Result<()> {
    let grid: GridFile = serde_json::from_str(&read_file(grid_path)?)
        .map_err(|e| Error::Config(format!("bad grid file: {e}")))?;
    for config in &grid.configs {
        config.validate()?;
    }
    let (_, batch) = load_store(store_path)?;
    let rows = ablation_grid(&batch, &grid.configs)?;
    if let Some(dir) = out_csv.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(out_csv, ablation_csv(&rows))?;
    for r in &rows {
        println!(
            "gamma {:.2} beta {:.2}: active {:.3}, perplexity {:.3} -> {}",
            r.gamma,
            r.beta,
            r.active_ratio,
            r.perplexity,
            r.outcome.as_str()
        );
    }
    Ok(())
}

/// `plot`: training CSV -> loss/perplexity curves; report JSON ->
/// significance chart + per-intervention histograms. Returns written paths.
pub fn cmd_plot(input: &Path, out_dir: &Path, k: usize) -> Result<Vec<PathBuf>> {
    let ext = input.extension().and_then(|e| e.to_str()).unwrap_or("");
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    match ext {
        "csv" => {
            let records = TrainLog::records_from_csv(&read_file(input)?)?;
            let loss_path = out_dir.join("loss.svg");
            fs::write(&loss_path, plot::loss_curve_svg(&records)?)?;
            written.push(loss_path);
            let perp_path = out_dir.join("perplexity.svg");
            fs::write(&perp_path, plot::perplexity_curve_svg(&records, k)?)?;
            written.push(perp_path);
        }
        "json" => {
            let value: serde_json::Value = serde_json::from_str(&read_file(input)?)
                .map_err(|e| Error::Config(format!("bad report JSON: {e}")))?;
            let unit = value["unit"].as_str().unwrap_or("video_mode").to_string();
            let h2 = value["h2"]
                .as_array()
                .ok_or_else(|| Error::Config("report has no h2 array".into()))?;
            let threshold = value["thresholds"]["chi2_p"].as_f64().unwrap_or(0.01);
            let mut entries = Vec::new();
            for iv in h2 {
                let name = iv["intervention"]
                    .as_str()
                    .ok_or_else(|| Error::Config("intervention missing name".into()))?
                    .to_string();
                let p = iv[&unit]["p"]
                    .as_f64()
                    .ok_or_else(|| Error::Config("intervention missing p".into()))?;
                entries.push((name.clone(), p));

                let counts_key =
                    if unit == "token" { "counts_token" } else { "counts_video_mode" };
                let counts: Vec<Vec<u64>> = iv[counts_key]
                    .as_array()
                    .ok_or_else(|| Error::Config("missing counts".into()))?
                    .iter()
                    .map(|row| {
                        row.as_array()
                            .map(|r| r.iter().filter_map(|x| x.as_u64()).collect())
                            .unwrap_or_default()
                    })
                    .collect();
                let cond_a = iv["condition_a"].as_str().unwrap_or("a");
                let cond_b = iv["condition_b"].as_str().unwrap_or("b");
                let hist_path = out_dir.join(format!("hist_{name}.svg"));
                fs::write(
                    &hist_path,
                    plot::symbol_histogram_svg(&name, [cond_a, cond_b], &counts)?,
                )?;
                written.push(hist_path);
            }
            if !entries.is_empty() {
                let sig_path = out_dir.join("significance.svg");
                fs::write(&sig_path, plot::significance_svg(&entries, threshold)?)?;
                written.push(sig_path);
            }
        }
        other => {
            return Err(Error::Config(format!(
                "cannot plot {:?}: expected a .csv training log or .json report",
                other
            )));
        }
    }
    for p in &written {
        println!("wrote {}", p.display());
    }
    Ok(written)
}
