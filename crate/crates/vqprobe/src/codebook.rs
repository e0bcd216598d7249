//! Unit-hypersphere codebook with EMA statistics.
//!
//! Codewords live on the unit sphere, so nearest-neighbor assignment by
//! squared Euclidean distance is the same index as argmax inner product.
//! Codewords are never trained by gradient: `ema_update` tracks hit counts
//! and vector sums with decay `gamma` and renormalizes the weighted mean
//! back onto the sphere. Entries whose hit share drops below `tau / k`
//! are reset onto rows of the current batch.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    /// (k, d_proj), rows unit-norm
    pub codewords: Array2<f64>,
    /// EMA hit counts per entry
    pub ema_counts: Array1<f64>,
    /// EMA sums of assigned vectors, (k, d_proj)
    pub ema_sums: Array2<f64>,
    /// cumulative hits per entry since init or the entry's last reset
    pub usage: Vec<u64>,
    pub gamma: f64,
    pub eps: f64,
    pub tau: f64,
    pub reset_interval: u64,
}

pub const DEFAULT_GAMMA: f64 = 0.90;
pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_TAU: f64 = 0.01;
pub const DEFAULT_RESET_INTERVAL: u64 = 200;

/// Per-batch assignment: one symbol per row, optionally the full distance
/// matrix when the caller wants to inspect the competition.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentBatch {
    pub symbols: Vec<usize>,
    pub distances: Option<Array2<f64>>,
}

impl Codebook {
    pub fn k(&self) -> usize {
        self.codewords.nrows()
    }

    pub fn d_proj(&self) -> usize {
        self.codewords.ncols()
    }

    /// Every codeword must be unit-norm; used by tests and debug checks.
    pub fn check_unit_norm(&self) -> Result<()> {
        for (i, row) in self.codewords.outer_iter().enumerate() {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(Error::Shape(format!("codeword {i} has norm {norm}")));
            }
        }
        Ok(())
    }
}

/// Initializes a codebook from `k` distinct rows of a pool of projected
/// unit vectors, sampled uniformly without replacement. EMA state starts
/// at `counts = 1`, `sums = codeword` so the first update cannot divide
/// by zero.
pub fn init_from_samples(
    pool: ArrayView2<'_, f64>,
    k: usize,
    seed: u64,
    gamma: f64,
) -> Result<Codebook> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Config(format!("gamma {gamma} outside (0, 1)")));
    }
    if pool.nrows() < k {
        return Err(Error::Config(format!(
            "pool has {} rows, need at least k = {}",
            pool.nrows(),
            k
        )));
    }
    if k < 1 {
        return Err(Error::Config("k must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..pool.nrows()).collect();
    // partial Fisher-Yates: the first k slots end up uniform without replacement
    for i in 0..k {
        let j = rng.random_range(i..indices.len());
        indices.swap(i, j);
    }
    let mut codewords = Array2::zeros((k, pool.ncols()));
    for (row, &idx) in indices[..k].iter().enumerate() {
        codewords.row_mut(row).assign(&pool.row(idx));
    }
    let ema_sums = codewords.clone();
    Ok(Codebook {
        codewords,
        ema_counts: Array1::ones(k),
        ema_sums,
        usage: vec![0; k],
        gamma,
        eps: DEFAULT_EPS,
        tau: DEFAULT_TAU,
        reset_interval: DEFAULT_RESET_INTERVAL,
    })
}

fn nearest(codewords: &Array2<f64>, z: ArrayView1<'_, f64>) -> usize {
    // argmax inner product == argmin distance on the sphere;
    // strict improvement keeps ties at the lowest index
    let mut best = 0usize;
    let mut best_dot = f64::NEG_INFINITY;
    for (k, c) in codewords.outer_iter().enumerate() {
        let dot: f64 = c.iter().zip(z.iter()).map(|(a, b)| a * b).sum();
        if dot > best_dot {
            best_dot = dot;
            best = k;
        }
    }
    best
}

/// Assigns each row to its nearest codeword. Ties break to the lowest index.
pub fn assign(codebook: &Codebook, z_hat: ArrayView2<'_, f64>) -> AssignmentBatch {
    let symbols = z_hat.outer_iter().map(|row| nearest(&codebook.codewords, row)).collect();
    AssignmentBatch { symbols, distances: None }
}

/// Like `assign` but also returns squared distances to every codeword.
pub fn assign_with_distances(codebook: &Codebook, z_hat: ArrayView2<'_, f64>) -> AssignmentBatch {
    let n = z_hat.nrows();
    let k = codebook.k();
    let mut distances = Array2::zeros((n, k));
    let mut symbols = Vec::with_capacity(n);
    for (i, row) in z_hat.outer_iter().enumerate() {
        for (j, c) in codebook.codewords.outer_iter().enumerate() {
            let d2: f64 = c.iter().zip(row.iter()).map(|(a, b)| (a - b).powi(2)).sum();
            distances[(i, j)] = d2;
        }
        symbols.push(nearest(&codebook.codewords, row));
    }
    AssignmentBatch { symbols, distances: Some(distances) }
}

/// EMA update from one assigned batch:
/// counts <- g*counts + (1-g)*hits, sums <- g*sums + (1-g)*sum(assigned),
/// codeword <- normalize(sums / (counts + eps)). Cumulative usage counters
/// are incremented by the batch hits.
pub fn ema_update(codebook: &mut Codebook, z_hat: ArrayView2<'_, f64>, assignment: &AssignmentBatch) {
    let k = codebook.k();
    let d = codebook.d_proj();
    debug_assert_eq!(z_hat.nrows(), assignment.symbols.len());

    let mut hits = vec![0.0f64; k];
    let mut sums = Array2::<f64>::zeros((k, d));
    for (row, &s) in z_hat.outer_iter().zip(assignment.symbols.iter()) {
        hits[s] += 1.0;
        let mut target = sums.row_mut(s);
        target += &row;
        codebook.usage[s] += 1;
    }

    let g = codebook.gamma;
    for kk in 0..k {
        codebook.ema_counts[kk] = g * codebook.ema_counts[kk] + (1.0 - g) * hits[kk];
        for dd in 0..d {
            codebook.ema_sums[(kk, dd)] = g * codebook.ema_sums[(kk, dd)] + (1.0 - g) * sums[(kk, dd)];
        }
        let denom = codebook.ema_counts[kk] + codebook.eps;
        let mean: Vec<f64> = (0..d).map(|dd| codebook.ema_sums[(kk, dd)] / denom).collect();
        let norm = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            for dd in 0..d {
                codebook.codewords[(kk, dd)] = mean[dd] / norm;
            }
        }
        // zero-mass entries keep their direction untouched
    }
}

/// EMA memory half-life in steps: ln 2 / ln(1/gamma).
pub fn half_life(gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Config(format!("gamma {gamma} outside (0, 1)")));
    }
    Ok(2.0f64.ln() / (1.0 / gamma).ln())
}

/// Population variance of a vector's own components.
fn component_variance(row: ArrayView1<'_, f64>) -> f64 {
    let d = row.len() as f64;
    let mean = row.sum() / d;
    row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d
}

/// Resets entries whose EMA hit share is below `tau / k` onto the batch
/// row with the highest per-vector component variance (first such row on
/// ties). Every dead entry receives that same row; reset entries restart
/// their full state as at init, including the usage counter, so "active"
/// afterwards means used since the entry's latest revival. Returns the
/// reset indices; an empty batch skips with a warning.
pub fn dead_code_reset(codebook: &mut Codebook, z_hat: ArrayView2<'_, f64>) -> Vec<usize> {
    let total: f64 = codebook.ema_counts.sum();
    let threshold = codebook.tau / codebook.k() as f64;
    let dead: Vec<usize> = (0..codebook.k())
        .filter(|&kk| codebook.ema_counts[kk] / total < threshold)
        .collect();
    if dead.is_empty() {
        return dead;
    }
    if z_hat.nrows() == 0 {
        log::warn!("dead-code reset skipped: empty batch");
        return Vec::new();
    }

    let mut best = 0usize;
    let mut best_var = f64::NEG_INFINITY;
    for (i, row) in z_hat.outer_iter().enumerate() {
        let v = component_variance(row);
        if v > best_var {
            best_var = v;
            best = i;
        }
    }
    for &kk in &dead {
        codebook.codewords.row_mut(kk).assign(&z_hat.row(best));
        let c = codebook.codewords.row(kk).to_owned();
        codebook.ema_sums.row_mut(kk).assign(&c);
        codebook.ema_counts[kk] = 1.0;
        codebook.usage[kk] = 0;
    }
    dead
}

/// Perplexity of a count vector: exp of the entropy of `counts / total`.
/// Zero-probability entries contribute nothing; all-zero counts error.
pub fn perplexity(counts: ArrayView1<'_, f64>) -> Result<f64> {
    let total: f64 = counts.sum();
    if !(total > 0.0) {
        return Err(Error::Empty("perplexity of all-zero counts".into()));
    }
    let mut entropy = 0.0;
    for &c in counts.iter() {
        if c > 0.0 {
            let p = c / total;
            entropy -= p * p.ln();
        }
    }
    Ok(entropy.exp())
}

/// Fraction of entries whose cumulative usage meets `threshold` hits.
pub fn active_ratio(usage: &[u64], threshold: u64) -> f64 {
    if usage.is_empty() {
        return 0.0;
    }
    usage.iter().filter(|&&u| u >= threshold).count() as f64 / usage.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand_distr::StandardNormal;

    fn unit_rows(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Array2::from_shape_fn((n, d), |_| rng.sample::<f64, _>(StandardNormal));
        for mut row in m.outer_iter_mut() {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            row.mapv_inplace(|x| x / norm);
        }
        m
    }

    #[test]
    fn init_from_exact_pool_is_a_permutation() {
        let pool = unit_rows(4, 6, 0);
        let cb = init_from_samples(pool.view(), 4, 1, 0.9).unwrap();
        let mut found = vec![false; 4];
        for c in cb.codewords.outer_iter() {
            for (i, p) in pool.outer_iter().enumerate() {
                if c.iter().zip(p.iter()).all(|(a, b)| a == b) {
                    assert!(!found[i], "pool row used twice");
                    found[i] = true;
                }
            }
        }
        assert!(found.iter().all(|&f| f));
    }

    #[test]
    fn init_is_deterministic_and_sets_ema_state() {
        let pool = unit_rows(32, 6, 2);
        let a = init_from_samples(pool.view(), 8, 7, 0.9).unwrap();
        let b = init_from_samples(pool.view(), 8, 7, 0.9).unwrap();
        assert_eq!(a, b);
        assert!(a.ema_counts.iter().all(|&n| n == 1.0));
        assert_eq!(a.ema_sums, a.codewords);
        assert!(a.usage.iter().all(|&u| u == 0));
    }

    #[test]
    fn init_rejects_small_pool() {
        let pool = unit_rows(3, 4, 3);
        assert!(init_from_samples(pool.view(), 8, 0, 0.9).is_err());
    }

    #[test]
    fn assign_exact_codeword_hit() {
        let pool = unit_rows(8, 5, 4);
        let cb = init_from_samples(pool.view(), 8, 0, 0.9).unwrap();
        let z = cb.codewords.row(3).to_owned().insert_axis(ndarray::Axis(0));
        let a = assign(&cb, z.view());
        assert_eq!(a.symbols, vec![3]);
    }

    #[test]
    fn assign_tie_breaks_to_lowest_index() {
        // codewords 2 and 5 equidistant from the probe vector
        let d = 4;
        let mut codewords = Array2::zeros((8, d));
        for (i, mut row) in codewords.outer_iter_mut().enumerate() {
            row[i % d] = if i < d { 1.0 } else { -1.0 };
        }
        // target halfway between codeword 2 (+e2) and codeword 5 (-e1)
        let inv = 1.0 / 2.0f64.sqrt();
        let z = array![[0.0, -inv, inv, 0.0]];
        let cb = Codebook {
            codewords,
            ema_counts: Array1::ones(8),
            ema_sums: Array2::zeros((8, d)),
            usage: vec![0; 8],
            gamma: 0.9,
            eps: 1e-5,
            tau: 0.01,
            reset_interval: 200,
        };
        let a = assign(&cb, z.view());
        assert_eq!(a.symbols, vec![2]);
    }

    /// Brute-force nearest neighbor by exhaustive distance scan with the
    /// same tie rule; independent of the assign implementation.
    fn oracle_nearest(codewords: &Array2<f64>, z: ArrayView1<'_, f64>) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, c) in codewords.outer_iter().enumerate() {
            let mut d2 = 0.0;
            for (a, b) in c.iter().zip(z.iter()) {
                d2 += (a - b) * (a - b);
            }
            if d2 < best_d {
                best_d = d2;
                best = k;
            }
        }
        best
    }

    #[test]
    fn assign_matches_exhaustive_oracle() {
        let pool = unit_rows(64, 4, 5);
        let cb = init_from_samples(pool.view(), 8, 1, 0.9).unwrap();
        let batch = unit_rows(64, 4, 6);
        let a = assign(&cb, batch.view());
        for (i, row) in batch.outer_iter().enumerate() {
            assert_eq!(a.symbols[i], oracle_nearest(&cb.codewords, row));
        }
    }

    #[test]
    fn ema_single_vector_hand_computed() {
        let pool = unit_rows(8, 4, 7);
        let mut cb = init_from_samples(pool.view(), 8, 2, 0.9).unwrap();
        let c3 = cb.codewords.row(3).to_owned();
        let v = unit_rows(1, 4, 8);
        // force the assignment to entry 3 regardless of geometry
        let assignment = AssignmentBatch { symbols: vec![3], distances: None };
        ema_update(&mut cb, v.view(), &assignment);
        assert!((cb.ema_counts[3] - 1.0).abs() < 1e-12); // 0.9*1 + 0.1*1
        for d in 0..4 {
            let expected = 0.9 * c3[d] + 0.1 * v[(0, d)];
            assert!((cb.ema_sums[(3, d)] - expected).abs() < 1e-12);
        }
        assert_eq!(cb.usage[3], 1);
    }

    #[test]
    fn ema_zero_hit_entry_decays_and_keeps_direction() {
        let pool = unit_rows(8, 4, 9);
        let mut cb = init_from_samples(pool.view(), 8, 3, 0.9).unwrap();
        let before = cb.codewords.row(0).to_owned();
        let v = cb.codewords.row(5).to_owned().insert_axis(ndarray::Axis(0));
        let a = assign(&cb, v.view());
        assert_eq!(a.symbols, vec![5]);
        ema_update(&mut cb, v.view(), &a);
        assert!((cb.ema_counts[0] - 0.9).abs() < 1e-12);
        for (x, y) in cb.codewords.row(0).iter().zip(before.iter()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn ema_preserves_unit_norm() {
        let pool = unit_rows(32, 6, 10);
        let mut cb = init_from_samples(pool.view(), 8, 4, 0.9).unwrap();
        for round in 0..10 {
            let batch = unit_rows(16, 6, 100 + round);
            let a = assign(&cb, batch.view());
            ema_update(&mut cb, batch.view(), &a);
            cb.check_unit_norm().unwrap();
        }
    }

    #[test]
    fn half_life_reference_values() {
        assert!((half_life(0.90).unwrap() - 6.58).abs() < 0.01);
        assert!((half_life(0.99).unwrap() - 68.97).abs() < 0.05);
        assert!((half_life(0.5).unwrap() - 1.0).abs() < 1e-12);
        assert!(half_life(1.0).is_err());
        assert!(half_life(0.0).is_err());
    }

    #[test]
    fn reset_threshold_fraction() {
        // tau/k at the defaults
        assert!((DEFAULT_TAU / 8.0 - 0.00125).abs() < 1e-12);
    }

    #[test]
    fn no_reset_when_all_entries_healthy() {
        let pool = unit_rows(8, 4, 11);
        let mut cb = init_from_samples(pool.view(), 8, 5, 0.9).unwrap();
        let batch = unit_rows(4, 4, 12);
        assert!(dead_code_reset(&mut cb, batch.view()).is_empty());
    }

    #[test]
    fn zero_count_entry_is_reset() {
        let pool = unit_rows(8, 4, 13);
        let mut cb = init_from_samples(pool.view(), 8, 6, 0.9).unwrap();
        cb.ema_counts[2] = 0.0;
        cb.usage[2] = 41;
        let batch = unit_rows(4, 4, 14);
        let reset = dead_code_reset(&mut cb, batch.view());
        assert_eq!(reset, vec![2]);
        assert_eq!(cb.ema_counts[2], 1.0);
        assert_eq!(cb.usage[2], 0);
        assert_eq!(cb.ema_sums.row(2), cb.codewords.row(2));
        // reset target is the max-variance batch row
        let vars: Vec<f64> = batch.outer_iter().map(component_variance).collect();
        let best = vars
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(cb.codewords.row(2), batch.row(best));
    }

    #[test]
    fn multiple_dead_entries_share_the_reset_row() {
        let pool = unit_rows(8, 4, 23);
        let mut cb = init_from_samples(pool.view(), 8, 9, 0.9).unwrap();
        cb.ema_counts[1] = 0.0;
        cb.ema_counts[6] = 0.0;
        let batch = unit_rows(4, 4, 24);
        let reset = dead_code_reset(&mut cb, batch.view());
        assert_eq!(reset, vec![1, 6]);
        assert_eq!(cb.codewords.row(1), cb.codewords.row(6));
    }

    #[test]
    fn empty_batch_skips_reset() {
        let pool = unit_rows(8, 4, 15);
        let mut cb = init_from_samples(pool.view(), 8, 7, 0.9).unwrap();
        cb.ema_counts[1] = 0.0;
        let empty = Array2::<f64>::zeros((0, 4));
        assert!(dead_code_reset(&mut cb, empty.view()).is_empty());
        assert_eq!(cb.ema_counts[1], 0.0);
    }

    #[test]
    fn perplexity_reference_points() {
        let uniform = Array1::from_elem(8, 5.0);
        assert!((perplexity(uniform.view()).unwrap() - 8.0).abs() < 1e-12);
        let single = array![0.0, 7.0, 0.0];
        assert!((perplexity(single.view()).unwrap() - 1.0).abs() < 1e-12);
        let two = array![0.5, 0.5, 0.0, 0.0];
        assert!((perplexity(two.view()).unwrap() - 2.0).abs() < 1e-12);
        let zero = array![0.0, 0.0];
        assert!(perplexity(zero.view()).is_err());
    }

    #[test]
    fn active_ratio_cases() {
        assert!((active_ratio(&[3, 1, 0, 0, 2, 9, 1, 0], 1) - 0.625).abs() < 1e-12);
        assert_eq!(active_ratio(&[0; 8], 1), 0.0);
        assert_eq!(active_ratio(&[1; 8], 1), 1.0);
    }

    proptest! {
        #[test]
        fn assign_oracle_equivalence(n in 1usize..64, k in 1usize..16, seed in 0u64..300) {
            let pool = unit_rows(k.max(2) * 2, 4, seed);
            let cb = init_from_samples(pool.view(), k.max(2), seed, 0.9).unwrap();
            let batch = unit_rows(n, 4, seed ^ 0xff);
            let a = assign(&cb, batch.view());
            for (i, row) in batch.outer_iter().enumerate() {
                prop_assert_eq!(a.symbols[i], oracle_nearest(&cb.codewords, row));
            }
        }

        #[test]
        fn argmax_dot_equals_argmin_distance(seed in 0u64..300) {
            let pool = unit_rows(16, 5, seed);
            let cb = init_from_samples(pool.view(), 8, seed, 0.9).unwrap();
            let batch = unit_rows(8, 5, seed ^ 0xa5);
            let a = assign_with_distances(&cb, batch.view());
            let d = a.distances.unwrap();
            for i in 0..8 {
                // argmin over the distance row with the same tie rule
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for k in 0..8 {
                    if d[(i, k)] < best_d {
                        best_d = d[(i, k)];
                        best = k;
                    }
                }
                prop_assert_eq!(a.symbols[i], best);
            }
        }

        #[test]
        fn ema_decay_law_is_exact(t in 1usize..60, seed in 0u64..100) {
            let pool = unit_rows(8, 4, seed);
            let mut cb = init_from_samples(pool.view(), 8, seed, 0.9).unwrap();
            // entry 0's own codeword as the only batch row; it absorbs all
            // hits, every other entry decays geometrically
            let target = cb.codewords.row(0).to_owned().insert_axis(ndarray::Axis(0));
            let n1_start = cb.ema_counts[1];
            for _ in 0..t {
                let a = AssignmentBatch { symbols: vec![0], distances: None };
                ema_update(&mut cb, target.view(), &a);
            }
            let expected = n1_start * 0.9f64.powi(t as i32);
            let got = cb.ema_counts[1];
            prop_assert!(((got - expected) / expected).abs() < 1e-12);
        }

        #[test]
        fn perplexity_bounds(counts in proptest::collection::vec(0.0f64..100.0, 2..16)) {
            let c = Array1::from_vec(counts);
            prop_assume!(c.sum() > 0.0);
            let p = perplexity(c.view()).unwrap();
            prop_assert!(p >= 1.0 - 1e-12);
            prop_assert!(p <= c.len() as f64 + 1e-12);
        }
    }
}
