//! Generate synthetic latent stores and inspect their statistics.
//!
//! Three presets ship with the crate:
//! - `compact_pair`: both conditions share one diffuse pocket, contrast
//!   lives in small separated satellites
//! - `separable_pair`: conditions on exactly opposed directions
//! - `null_pair`: identical generators (no real contrast)
//!
//! Run with `cargo run --example generate_store`.

use std::path::Path;

use vqprobe::store::save_store;
use vqprobe::synth::{compact_pair, generate, null_pair, separable_pair};

fn describe(name: &str, spec: &vqprobe::synth::SynthSpec, out: &Path) -> vqprobe::Result<()> {
    let (header, batch) = generate(spec)?;
    let norms: Vec<f64> = batch
        .data
        .outer_iter()
        .map(|r| r.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt())
        .collect();
    let n = norms.len() as f64;
    let mean = norms.iter().sum::<f64>() / n;
    let std = (norms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    println!(
        "{name}: {} tokens x {} dims, {} videos, norm {mean:.2} +- {std:.2}",
        header.count,
        header.dim,
        header.videos.len()
    );
    save_store(&header, &batch, out)?;
    println!("  wrote {}.json / {}.bin", out.display(), out.display());
    Ok(())
}

fn main() -> vqprobe::Result<()> {
    let dir = Path::new("target/examples/generate_store");
    std::fs::create_dir_all(dir)?;
    describe("compact", &compact_pair(64, 42), &dir.join("compact"))?;
    describe("separable", &separable_pair(64, 42), &dir.join("separable"))?;
    describe("null", &null_pair(64, 42), &dir.join("null"))?;
    Ok(())
}
