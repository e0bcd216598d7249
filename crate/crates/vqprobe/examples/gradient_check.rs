//! Verify the analytic commitment-loss gradient against central finite
//! differences on random small instances.
//!
//! Run with `cargo run --example gradient_check`.

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use vqprobe::projection::{backward, commitment_loss, forward, ProjectionParams};

fn numeric_grad_w(
    params: &ProjectionParams,
    z: &Array1<f64>,
    c: &Array1<f64>,
    beta: f64,
    h: f64,
) -> Array2<f64> {
    let eval = |p: &ProjectionParams| {
        let (z_hat, _) = forward(p, z.view()).unwrap();
        commitment_loss(z_hat.view(), c.view(), beta)
    };
    let mut g = Array2::zeros(params.w.raw_dim());
    for i in 0..params.w.nrows() {
        for j in 0..params.w.ncols() {
            let mut plus = params.clone();
            plus.w[(i, j)] += h;
            let mut minus = params.clone();
            minus.w[(i, j)] -= h;
            g[(i, j)] = (eval(&plus) - eval(&minus)) / (2.0 * h);
        }
    }
    g
}

fn main() -> vqprobe::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut worst = 0.0f64;
    for trial in 0..20u64 {
        let params = ProjectionParams::init(16, 8, trial)?;
        let z = Array1::from_shape_fn(16, |_| rng.sample::<f64, _>(StandardNormal));
        let mut c = Array1::from_shape_fn(8, |_| rng.sample::<f64, _>(StandardNormal));
        let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        c.mapv_inplace(|x| x / norm);

        let (_, cache) = forward(&params, z.view())?;
        let (analytic, _) = backward(&params, &cache, c.view(), 2.0);
        let numeric = numeric_grad_w(&params, &z, &c, 2.0, 1e-5);

        let diff = (&analytic - &numeric).mapv(|x| x * x).sum().sqrt();
        let scale = analytic.mapv(|x| x * x).sum().sqrt().max(1e-12);
        let rel = diff / scale;
        worst = worst.max(rel);
        println!("trial {trial:2}: relative error {rel:.3e}");
    }
    println!("worst relative error over 20 trials: {worst:.3e} (contract: <= 1e-4)");
    Ok(())
}
