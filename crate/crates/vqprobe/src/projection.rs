//! Trainable projection: linear map, per-vector standardization, unit-sphere
//! normalization, commitment loss with exact analytic gradients, Adam, and
//! the cosine learning-rate schedule.
//!
//! Standardization uses the population variance with `ln_eps` inside the
//! square root and no learned affine rescale, so the standardized vector's
//! norm is `sqrt(d_proj)` up to the epsilon. The subsequent L2 step divides
//! that norm away entirely, which makes the final output invariant to
//! positive input scaling when the bias is zero.

use ndarray::{Array1, Array2, ArrayView1};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Projection weights: `w` is (d_proj, dim), `b` is (d_proj).
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionParams {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub ln_eps: f64,
}

pub const DEFAULT_LN_EPS: f64 = 1e-5;

impl ProjectionParams {
    /// Seeded init: weights i.i.d. Normal(0, 1/dim), zero bias.
    pub fn init(dim: usize, d_proj: usize, seed: u64) -> Result<Self> {
        if d_proj < 2 {
            return Err(Error::Config("d_proj must be at least 2".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let std = (1.0 / dim as f64).sqrt();
        let w = Array2::from_shape_fn((d_proj, dim), |_| {
            std * rng.sample::<f64, _>(StandardNormal)
        });
        let b = Array1::zeros(d_proj);
        Ok(ProjectionParams { w, b, ln_eps: DEFAULT_LN_EPS })
    }

    pub fn dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn d_proj(&self) -> usize {
        self.w.nrows()
    }

    /// Linear map followed by standardization (mean 0, population std 1).
    /// This is the pre-normalization vector whose norm is ~sqrt(d_proj).
    pub fn project_standardize(&self, z: ArrayView1<'_, f64>) -> Array1<f64> {
        let a = self.w.dot(&z) + &self.b;
        standardize(a, self.ln_eps).1
    }
}

/// Returns (mean, standardized, std_divisor) for one vector.
fn standardize(a: Array1<f64>, ln_eps: f64) -> (f64, Array1<f64>, f64) {
    let d = a.len() as f64;
    let mean = a.sum() / d;
    let var = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d;
    let s = (var + ln_eps).sqrt();
    let y = a.mapv(|x| (x - mean) / s);
    (mean, y, s)
}

/// Intermediates retained by `forward` for the exact backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Array1<f64>,
    /// standardized vector (pre L2)
    pub standardized: Array1<f64>,
    /// population-std divisor used by standardization
    pub std_divisor: f64,
    /// L2 norm of the standardized vector
    pub norm: f64,
    pub z_hat: Array1<f64>,
}

/// Projects, standardizes and L2-normalizes one input vector.
pub fn forward(params: &ProjectionParams, z: ArrayView1<'_, f64>) -> Result<(Array1<f64>, ForwardCache)> {
    if z.iter().any(|x| !x.is_finite()) {
        return Err(Error::Shape("non-finite input to forward".into()));
    }
    let a = params.w.dot(&z) + &params.b;
    let (_, y, s) = standardize(a, params.ln_eps);
    let norm = y.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return Err(Error::DegenerateVector);
    }
    let z_hat = y.mapv(|x| x / norm);
    let cache = ForwardCache {
        input: z.to_owned(),
        standardized: y,
        std_divisor: s,
        norm,
        z_hat: z_hat.clone(),
    };
    Ok((z_hat, cache))
}

/// Batched analogue of `ForwardCache`, one row per input.
#[derive(Debug, Clone)]
pub struct BatchCache {
    pub input: Array2<f64>,
    pub standardized: Array2<f64>,
    pub std_divisor: Array1<f64>,
    pub norm: Array1<f64>,
    pub z_hat: Array2<f64>,
}

/// Row-wise forward over a batch. Matrix form of `forward`; one GEMM for
/// the linear map, then per-row standardize and normalize.
pub fn forward_batch(
    params: &ProjectionParams,
    z: ndarray::ArrayView2<'_, f64>,
) -> Result<(Array2<f64>, BatchCache)> {
    if z.ncols() != params.dim() {
        return Err(Error::Shape(format!(
            "batch dim {} does not match projection dim {}",
            z.ncols(),
            params.dim()
        )));
    }
    let n = z.nrows();
    let d = params.d_proj() as f64;
    let mut a = z.dot(&params.w.t());
    a += &params.b;

    let mut std_divisor = Array1::zeros(n);
    let mut norm = Array1::zeros(n);
    for (i, mut row) in a.outer_iter_mut().enumerate() {
        let mean = row.sum() / d;
        let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d;
        let s = (var + params.ln_eps).sqrt();
        row.mapv_inplace(|x| (x - mean) / s);
        let nrm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm < 1e-12 {
            return Err(Error::DegenerateVector);
        }
        std_divisor[i] = s;
        norm[i] = nrm;
    }
    let standardized = a;
    let mut z_hat = standardized.clone();
    for (mut row, &nrm) in z_hat.outer_iter_mut().zip(norm.iter()) {
        row.mapv_inplace(|x| x / nrm);
    }
    let cache = BatchCache {
        input: z.to_owned(),
        standardized,
        std_divisor,
        norm,
        z_hat: z_hat.clone(),
    };
    Ok((z_hat, cache))
}

/// Mean commitment loss over a batch against each row's assigned codeword.
pub fn commitment_loss_batch(
    z_hat: ndarray::ArrayView2<'_, f64>,
    assigned: ndarray::ArrayView2<'_, f64>,
    beta: f64,
) -> f64 {
    let n = z_hat.nrows().max(1);
    let mut total = 0.0;
    for (row, c) in z_hat.outer_iter().zip(assigned.outer_iter()) {
        total += commitment_loss(row, c, beta);
    }
    total / n as f64
}

/// Gradient of the mean batch commitment loss with respect to (w, b).
pub fn backward_batch(
    params: &ProjectionParams,
    cache: &BatchCache,
    assigned: ndarray::ArrayView2<'_, f64>,
    beta: f64,
) -> (Array2<f64>, Array1<f64>) {
    let n = cache.input.nrows();
    let d = params.d_proj() as f64;
    let mut g_a = Array2::<f64>::zeros((n, params.d_proj()));
    for i in 0..n {
        let z_hat = cache.z_hat.row(i);
        let y = cache.standardized.row(i);
        let c = assigned.row(i);
        let mut g_zhat: Vec<f64> = z_hat.iter().zip(c.iter()).map(|(a, cc)| 2.0 * beta * (a - cc)).collect();
        let dot: f64 = z_hat.iter().zip(g_zhat.iter()).map(|(a, b)| a * b).sum();
        for (j, g) in g_zhat.iter_mut().enumerate() {
            *g = (*g - dot * z_hat[j]) / cache.norm[i];
        }
        let g_mean: f64 = g_zhat.iter().sum::<f64>() / d;
        let y_dot: f64 = y.iter().zip(g_zhat.iter()).map(|(a, b)| a * b).sum();
        let s = cache.std_divisor[i];
        for j in 0..params.d_proj() {
            g_a[(i, j)] = (g_zhat[j] - g_mean - y[j] * y_dot / d) / s;
        }
    }
    let scale = 1.0 / n.max(1) as f64;
    let g_w = g_a.t().dot(&cache.input).mapv(|x| x * scale);
    let g_b = g_a.sum_axis(ndarray::Axis(0)).mapv(|x| x * scale);
    (g_w, g_b)
}

/// Commitment loss `beta * ||c - z_hat||^2` with the codeword treated as a
/// constant (stop-gradient).
pub fn commitment_loss(z_hat: ArrayView1<'_, f64>, codeword: ArrayView1<'_, f64>, beta: f64) -> f64 {
    let d2: f64 = z_hat
        .iter()
        .zip(codeword.iter())
        .map(|(a, c)| (c - a).powi(2))
        .sum();
    beta * d2
}

/// Straight-through output: forward value is the codeword; the gradient
/// contract with respect to `z_hat` is the identity (see `ste_backward`).
/// The training loss here is commitment-only, so this path carries no
/// gradient in practice; the contract is still exposed and tested.
pub fn ste_output(_z_hat: ArrayView1<'_, f64>, codeword: ArrayView1<'_, f64>) -> Array1<f64> {
    codeword.to_owned()
}

/// Identity gradient of the straight-through estimator.
pub fn ste_backward(upstream: ArrayView1<'_, f64>) -> Array1<f64> {
    upstream.to_owned()
}

/// Exact gradient of `commitment_loss` with respect to `w` and `b`,
/// propagated through L2 normalization, standardization and the linear map.
pub fn backward(
    params: &ProjectionParams,
    cache: &ForwardCache,
    codeword: ArrayView1<'_, f64>,
    beta: f64,
) -> (Array2<f64>, Array1<f64>) {
    let d = cache.standardized.len() as f64;

    // dL/dz_hat = 2 beta (z_hat - c)
    let g_zhat = cache.z_hat.iter().zip(codeword.iter()).map(|(a, c)| 2.0 * beta * (a - c));
    let g_zhat = Array1::from_iter(g_zhat);

    // through L2 normalization: (I - z_hat z_hat^T) / ||y||
    let dot: f64 = cache.z_hat.iter().zip(g_zhat.iter()).map(|(a, b)| a * b).sum();
    let g_y = Array1::from_shape_fn(cache.standardized.len(), |i| {
        (g_zhat[i] - dot * cache.z_hat[i]) / cache.norm
    });

    // through standardization: (g - mean(g) - y * (y.g)/d) / s
    let g_mean = g_y.sum() / d;
    let y_dot: f64 = cache.standardized.iter().zip(g_y.iter()).map(|(a, b)| a * b).sum();
    let g_a = Array1::from_shape_fn(cache.standardized.len(), |i| {
        (g_y[i] - g_mean - cache.standardized[i] * y_dot / d) / cache.std_divisor
    });

    // through the linear map
    let g_w = Array2::from_shape_fn((params.d_proj(), params.dim()), |(i, j)| {
        g_a[i] * cache.input[j]
    });
    (g_w, g_a)
}

/// Adam optimizer state for the projection parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m_w: Array2<f64>,
    pub v_w: Array2<f64>,
    pub m_b: Array1<f64>,
    pub v_b: Array1<f64>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &ProjectionParams) -> Self {
        AdamState {
            m_w: Array2::zeros(params.w.raw_dim()),
            v_w: Array2::zeros(params.w.raw_dim()),
            m_b: Array1::zeros(params.b.raw_dim()),
            v_b: Array1::zeros(params.b.raw_dim()),
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam step, in place. Aborts on non-finite gradients.
pub fn adam_step(
    params: &mut ProjectionParams,
    state: &mut AdamState,
    g_w: &Array2<f64>,
    g_b: &Array1<f64>,
    lr: f64,
) -> Result<()> {
    if g_w.iter().chain(g_b.iter()).any(|x| !x.is_finite()) {
        return Err(Error::TrainAbort("non-finite gradient".into()));
    }
    if g_w.raw_dim() != params.w.raw_dim() || g_b.raw_dim() != params.b.raw_dim() {
        return Err(Error::Shape("gradient shape mismatch".into()));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);

    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    ndarray::Zip::from(&mut params.w)
        .and(&mut state.m_w)
        .and(&mut state.v_w)
        .and(g_w)
        .for_each(|p, m, v, &g| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
        });
    ndarray::Zip::from(&mut params.b)
        .and(&mut state.m_b)
        .and(&mut state.v_b)
        .and(g_b)
        .for_each(|p, m, v, &g| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
        });
    Ok(())
}

/// Cosine-annealed learning rate.
#[derive(Debug, Clone, Copy, PartialEq, serde::Deserialize)]
pub struct LRSchedule {
    pub eta0: f64,
    pub eta_min: f64,
    pub t_max: u64,
}

impl Default for LRSchedule {
    fn default() -> Self {
        LRSchedule { eta0: 1e-3, eta_min: 1e-4, t_max: 3000 }
    }
}

impl LRSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_min > 0.0) || self.eta0 < self.eta_min {
            return Err(Error::Config("require eta0 >= eta_min > 0".into()));
        }
        if self.t_max == 0 {
            return Err(Error::Config("t_max must be positive".into()));
        }
        Ok(())
    }
}

/// `eta_min + (eta0 - eta_min)/2 * (1 + cos(pi t / t_max))` for t in [0, t_max].
pub fn lr_at(schedule: &LRSchedule, t: u64) -> Result<f64> {
    if t > schedule.t_max {
        return Err(Error::Config(format!(
            "step {} outside schedule range 0..={}",
            t, schedule.t_max
        )));
    }
    let phase = std::f64::consts::PI * t as f64 / schedule.t_max as f64;
    Ok(schedule.eta_min + 0.5 * (schedule.eta0 - schedule.eta_min) * (1.0 + phase.cos()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn rand_vec(n: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
        Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal))
    }

    fn unit(v: Array1<f64>) -> Array1<f64> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.mapv(|x| x / n)
    }

    #[test]
    fn standardized_norm_is_sqrt_d() {
        let params = ProjectionParams::init(32, 16, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let z = rand_vec(32, &mut rng);
            let y = params.project_standardize(z.view());
            let norm = y.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 4.0).abs() / 4.0 < 1e-3, "norm {norm}");
        }
    }

    #[test]
    fn forward_matches_hand_computed_chain() {
        // identity weights at dim 4, zero bias
        let params = ProjectionParams {
            w: Array2::eye(4),
            b: Array1::zeros(4),
            ln_eps: 1e-5,
        };
        let z = array![1.0, 2.0, 3.0, 4.0];
        let (z_hat, cache) = forward(&params, z.view()).unwrap();

        // hand chain: mean 2.5, population var 1.25, s = sqrt(1.25 + 1e-5)
        let s = (1.25f64 + 1e-5).sqrt();
        let y_expected = [-1.5 / s, -0.5 / s, 0.5 / s, 1.5 / s];
        let norm_expected = y_expected.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (a, e) in cache.standardized.iter().zip(y_expected.iter()) {
            assert!((a - e).abs() < 1e-12);
        }
        for (a, e) in z_hat.iter().zip(y_expected.iter()) {
            assert!((a - e / norm_expected).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_is_unit_norm_and_scale_invariant() {
        let params = ProjectionParams::init(16, 8, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let z = rand_vec(16, &mut rng);
            let (z_hat, _) = forward(&params, z.view()).unwrap();
            let norm = z_hat.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-6);

            let scaled = z.mapv(|x| 3.25 * x);
            let (z_hat2, _) = forward(&params, scaled.view()).unwrap();
            for (a, b) in z_hat.iter().zip(z_hat2.iter()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn forward_rejects_constant_projection() {
        // zero weights + zero bias give a constant (zero) projection
        let params = ProjectionParams {
            w: Array2::zeros((4, 4)),
            b: Array1::zeros(4),
            ln_eps: 1e-5,
        };
        let z = array![1.0, 2.0, 3.0, 4.0];
        // y = (0 - 0)/sqrt(0 + eps) = 0 -> degenerate
        assert!(matches!(forward(&params, z.view()), Err(Error::DegenerateVector)));
    }

    #[test]
    fn commitment_loss_cases() {
        let u = array![1.0, 0.0];
        let v = array![0.0, 1.0];
        assert_eq!(commitment_loss(u.view(), u.view(), 3.0), 0.0);
        // orthogonal unit vectors: ||c - z||^2 = 2
        assert!((commitment_loss(u.view(), v.view(), 2.0) - 4.0).abs() < 1e-12);
        let w = array![-1.0, 0.0];
        assert!((commitment_loss(u.view(), w.view(), 1.0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn ste_forward_is_codeword_and_backward_is_identity() {
        let z = unit(array![0.3, -0.4, 0.5]);
        let c = unit(array![1.0, 1.0, 0.0]);
        assert_eq!(ste_output(z.view(), c.view()), c);
        let g = array![0.1, -0.2, 0.3];
        assert_eq!(ste_backward(g.view()), g);
    }

    /// Central finite differences over every parameter of (w, b).
    fn numeric_grads(
        params: &ProjectionParams,
        z: &Array1<f64>,
        c: &Array1<f64>,
        beta: f64,
        h: f64,
    ) -> (Array2<f64>, Array1<f64>) {
        let eval = |p: &ProjectionParams| {
            let (z_hat, _) = forward(p, z.view()).unwrap();
            commitment_loss(z_hat.view(), c.view(), beta)
        };
        let mut g_w = Array2::zeros(params.w.raw_dim());
        for i in 0..params.w.nrows() {
            for j in 0..params.w.ncols() {
                let mut plus = params.clone();
                plus.w[(i, j)] += h;
                let mut minus = params.clone();
                minus.w[(i, j)] -= h;
                g_w[(i, j)] = (eval(&plus) - eval(&minus)) / (2.0 * h);
            }
        }
        let mut g_b = Array1::zeros(params.b.raw_dim());
        for i in 0..params.b.len() {
            let mut plus = params.clone();
            plus.b[i] += h;
            let mut minus = params.clone();
            minus.b[i] -= h;
            g_b[i] = (eval(&plus) - eval(&minus)) / (2.0 * h);
        }
        (g_w, g_b)
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        diff / na.max(nb).max(1e-12)
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..20 {
            let params = ProjectionParams::init(16, 8, 100 + trial).unwrap();
            let z = rand_vec(16, &mut rng);
            let c = unit(rand_vec(8, &mut rng));
            let beta = 2.0;
            let (_, cache) = forward(&params, z.view()).unwrap();
            let (g_w, g_b) = backward(&params, &cache, c.view(), beta);
            let (n_w, n_b) = numeric_grads(&params, &z, &c, beta, 1e-5);
            let ew = rel_err(g_w.as_slice().unwrap(), n_w.as_slice().unwrap());
            let eb = rel_err(g_b.as_slice().unwrap(), n_b.as_slice().unwrap());
            assert!(ew <= 1e-4, "trial {trial}: w rel err {ew}");
            assert!(eb <= 1e-4, "trial {trial}: b rel err {eb}");
        }
    }

    #[test]
    fn gradient_is_zero_at_the_minimum() {
        let params = ProjectionParams::init(8, 4, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let z = rand_vec(8, &mut rng);
        let (z_hat, cache) = forward(&params, z.view()).unwrap();
        let (g_w, g_b) = backward(&params, &cache, z_hat.view(), 2.0);
        assert!(g_w.iter().all(|x| x.abs() < 1e-12));
        assert!(g_b.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn gradient_scales_linearly_in_beta() {
        let params = ProjectionParams::init(8, 4, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let z = rand_vec(8, &mut rng);
        let c = unit(rand_vec(4, &mut rng));
        let (_, cache) = forward(&params, z.view()).unwrap();
        let (g1, _) = backward(&params, &cache, c.view(), 1.0);
        let (g3, _) = backward(&params, &cache, c.view(), 3.0);
        for (a, b) in g1.iter().zip(g3.iter()) {
            assert!((3.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_forward_and_backward_match_single_path() {
        let params = ProjectionParams::init(10, 6, 21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let z = Array2::from_shape_fn((5, 10), |_| rng.sample::<f64, _>(StandardNormal));
        let c = {
            let mut m = Array2::from_shape_fn((5, 6), |_| rng.sample::<f64, _>(StandardNormal));
            for mut row in m.outer_iter_mut() {
                let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
                row.mapv_inplace(|x| x / n);
            }
            m
        };
        let (z_hat_b, cache_b) = forward_batch(&params, z.view()).unwrap();
        let (gw_b, gb_b) = backward_batch(&params, &cache_b, c.view(), 2.0);

        let mut gw_sum = Array2::<f64>::zeros(params.w.raw_dim());
        let mut gb_sum = Array1::<f64>::zeros(params.b.raw_dim());
        let mut loss_sum = 0.0;
        for i in 0..5 {
            let (z_hat, cache) = forward(&params, z.row(i)).unwrap();
            for (a, b) in z_hat.iter().zip(z_hat_b.row(i).iter()) {
                assert!((a - b).abs() < 1e-12);
            }
            loss_sum += commitment_loss(z_hat.view(), c.row(i), 2.0);
            let (gw, gb) = backward(&params, &cache, c.row(i), 2.0);
            gw_sum += &gw;
            gb_sum += &gb;
        }
        let batch_loss = commitment_loss_batch(z_hat_b.view(), c.view(), 2.0);
        assert!((batch_loss - loss_sum / 5.0).abs() < 1e-12);
        for (a, b) in gw_b.iter().zip(gw_sum.iter()) {
            assert!((a - b / 5.0).abs() < 1e-12);
        }
        for (a, b) in gb_b.iter().zip(gb_sum.iter()) {
            assert!((a - b / 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_zero_gradient_leaves_params_unchanged() {
        let mut params = ProjectionParams::init(4, 2, 13).unwrap();
        let snapshot = params.clone();
        let mut state = AdamState::new(&params);
        let g_w = Array2::zeros(params.w.raw_dim());
        let g_b = Array1::zeros(params.b.raw_dim());
        adam_step(&mut params, &mut state, &g_w, &g_b, 1e-3).unwrap();
        assert_eq!(params, snapshot);
        assert_eq!(state.step_count, 1);
    }

    #[test]
    fn adam_first_step_is_bias_corrected() {
        // single scalar parameter, g = 1: first step moves by ~lr
        let mut params = ProjectionParams {
            w: array![[0.5]],
            b: array![0.0],
            ln_eps: 1e-5,
        };
        let mut state = AdamState::new(&params);
        let g_w = array![[1.0]];
        let g_b = array![0.0];
        adam_step(&mut params, &mut state, &g_w, &g_b, 1e-3).unwrap();
        let moved = 0.5 - params.w[(0, 0)];
        assert!((moved - 1e-3).abs() < 1e-10, "moved {moved}");
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut params = ProjectionParams::init(4, 3, 14).unwrap();
            let mut state = AdamState::new(&params);
            let g_w = Array2::from_elem(params.w.raw_dim(), 0.25);
            let g_b = Array1::from_elem(params.b.raw_dim(), -0.5);
            for _ in 0..5 {
                adam_step(&mut params, &mut state, &g_w, &g_b, 1e-3).unwrap();
            }
            (params, state)
        };
        let (p1, s1) = run();
        let (p2, s2) = run();
        assert_eq!(p1, p2);
        assert_eq!(s1, s2);
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let mut params = ProjectionParams::init(2, 2, 15).unwrap();
        let mut state = AdamState::new(&params);
        let mut g_w = Array2::zeros(params.w.raw_dim());
        g_w[(0, 0)] = f64::NAN;
        let g_b = Array1::zeros(params.b.raw_dim());
        assert!(matches!(
            adam_step(&mut params, &mut state, &g_w, &g_b, 1e-3),
            Err(Error::TrainAbort(_))
        ));
    }

    #[test]
    fn lr_schedule_endpoints_and_midpoint() {
        let s = LRSchedule::default();
        assert!((lr_at(&s, 0).unwrap() - 1e-3).abs() < 1e-15);
        assert!((lr_at(&s, 3000).unwrap() - 1e-4).abs() < 1e-15);
        assert!((lr_at(&s, 1500).unwrap() - 5.5e-4).abs() < 1e-12);
        assert!(lr_at(&s, 3001).is_err());
    }

    proptest! {
        #[test]
        fn unit_norm_law(seed in 0u64..200) {
            let params = ProjectionParams::init(12, 6, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
            let z = rand_vec(12, &mut rng);
            let (z_hat, _) = forward(&params, z.view()).unwrap();
            let norm = z_hat.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-6);
        }

        #[test]
        fn distance_cosine_identity(seed in 0u64..200) {
            let params = ProjectionParams::init(12, 6, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1234);
            let z = rand_vec(12, &mut rng);
            let c = unit(rand_vec(6, &mut rng));
            let (z_hat, _) = forward(&params, z.view()).unwrap();
            let d2: f64 = z_hat.iter().zip(c.iter()).map(|(a, b)| (a - b).powi(2)).sum();
            let cos: f64 = z_hat.iter().zip(c.iter()).map(|(a, b)| a * b).sum();
            prop_assert!((d2 - 2.0 * (1.0 - cos)).abs() < 1e-6);
        }

        #[test]
        fn lr_is_monotone_non_increasing(t in 0u64..3000) {
            let s = LRSchedule::default();
            prop_assert!(lr_at(&s, t).unwrap() >= lr_at(&s, t + 1).unwrap());
        }
    }
}
