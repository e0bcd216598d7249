//! Synthetic latent stores and Gaussian baseline batches.
//!
//! The generator emulates the measured statistics of a frozen video
//! encoder's token vectors: large, near-uniform L2 norms and a compact
//! directional cluster structure with condition-dependent satellite mass.
//! Tokens are drawn as `norm * normalize(direction + spread * noise)`, a
//! von-Mises-Fisher-like draw on the hypersphere.
//!
//! Every store is a pure function of its spec: one RNG stream per video,
//! selected by the video's global index, so adding videos never perturbs
//! earlier ones.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::store::{LatentBatch, LatentHeader, VideoRecord};

/// One mixture component: a seeded unit direction and its weight.
/// `negate` flips the direction, which lets two conditions sit on exactly
/// opposed poles of the sphere. When `center_seed` is set, the component
/// direction becomes `normalize(center + offset * dir)`: components with a
/// shared center form sub-structure inside one narrow pocket of the sphere
/// instead of isolated clusters.
#[derive(Debug, Clone, Deserialize)]
pub struct MixtureComponent {
    pub direction_seed: u64,
    pub weight: f64,
    #[serde(default)]
    pub negate: bool,
    #[serde(default)]
    pub center_seed: Option<u64>,
    #[serde(default = "default_offset")]
    pub offset: f64,
}

fn default_offset() -> f64 {
    0.25
}

#[derive(Debug, Clone, Deserialize)]
pub struct ConditionSpec {
    pub label: String,
    pub mixture: Vec<MixtureComponent>,
}

/// Full description of a synthetic store.
#[derive(Debug, Clone, Deserialize)]
pub struct SynthSpec {
    pub dim: usize,
    #[serde(default = "default_norm_mean")]
    pub norm_mean: f64,
    #[serde(default = "default_norm_std")]
    pub norm_std: f64,
    #[serde(default = "default_spread")]
    pub angular_spread: f64,
    pub conditions: Vec<ConditionSpec>,
    pub videos_per_condition: usize,
    pub tokens_per_video: usize,
    pub seed: u64,
}

fn default_norm_mean() -> f64 {
    97.70
}

fn default_norm_std() -> f64 {
    0.81
}

fn default_spread() -> f64 {
    0.3
}

/// Description of a Gaussian-noise baseline batch.
#[derive(Debug, Clone, Deserialize)]
pub struct BaselineSpec {
    pub dim: usize,
    pub count: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Spec("dim must be positive".into()));
        }
        if !(self.norm_mean > 0.0) {
            return Err(Error::Spec("norm_mean must be positive".into()));
        }
        if self.norm_std < 0.0 {
            return Err(Error::Spec("norm_std must be non-negative".into()));
        }
        if self.angular_spread < 0.0 {
            return Err(Error::Spec("angular_spread must be non-negative".into()));
        }
        if self.conditions.is_empty() {
            return Err(Error::Spec("at least one condition required".into()));
        }
        if self.videos_per_condition == 0 || self.tokens_per_video == 0 {
            return Err(Error::Spec("videos_per_condition and tokens_per_video must be positive".into()));
        }
        for c in &self.conditions {
            if c.label.is_empty() {
                return Err(Error::Spec("condition label must be non-empty".into()));
            }
            if c.mixture.is_empty() {
                return Err(Error::Spec(format!("condition {:?} has an empty mixture", c.label)));
            }
            let total: f64 = c.mixture.iter().map(|m| m.weight).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Spec(format!(
                    "mixture weights for {:?} sum to {}, expected 1",
                    c.label, total
                )));
            }
            if c.mixture.iter().any(|m| m.weight < 0.0) {
                return Err(Error::Spec(format!("negative mixture weight in {:?}", c.label)));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<SynthSpec> {
        let spec: SynthSpec =
            serde_json::from_str(text).map_err(|e| Error::Spec(format!("bad synth spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Deterministic unit direction for a seed. Error if the draw degenerates
/// to (numerically) zero length.
fn unit_for_seed(dim: usize, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return Err(Error::Spec(format!("direction seed {seed} produced a zero vector")));
    }
    for x in &mut v {
        *x /= norm;
    }
    Ok(v)
}

/// Resolves a mixture component to its unit direction.
fn component_direction(dim: usize, m: &MixtureComponent) -> Result<Vec<f64>> {
    let sign = if m.negate { -1.0 } else { 1.0 };
    let base = unit_for_seed(dim, m.direction_seed)?;
    let mut v: Vec<f64> = match m.center_seed {
        Some(cs) => {
            let center = unit_for_seed(dim, cs)?;
            center.iter().zip(base.iter()).map(|(c, d)| c + m.offset * sign * d).collect()
        }
        None => base.iter().map(|d| sign * d).collect(),
    };
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return Err(Error::Spec("degenerate component direction".into()));
    }
    for x in &mut v {
        *x /= norm;
    }
    Ok(v)
}

/// Generates a synthetic latent store. Deterministic in the spec.
pub fn generate(spec: &SynthSpec) -> Result<(LatentHeader, LatentBatch)> {
    spec.validate()?;
    let dim = spec.dim;

    // Resolve directions and cumulative weights per condition up front.
    let mut directions: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut cum_weights: Vec<Vec<f64>> = Vec::new();
    for c in &spec.conditions {
        let mut dirs = Vec::new();
        let mut cums = Vec::new();
        let mut acc = 0.0;
        for m in &c.mixture {
            dirs.push(component_direction(dim, m)?);
            acc += m.weight;
            cums.push(acc);
        }
        directions.push(dirs);
        cum_weights.push(cums);
    }

    let n_videos = spec.conditions.len() * spec.videos_per_condition;
    let count = n_videos * spec.tokens_per_video;
    let mut data = Array2::<f32>::zeros((count, dim));
    let mut videos = Vec::with_capacity(n_videos);
    let mut row_video = Vec::with_capacity(count);

    let mut video_index = 0usize;
    let mut row = 0usize;
    for (ci, c) in spec.conditions.iter().enumerate() {
        for vi in 0..spec.videos_per_condition {
            // independent stream per video: same master seed, stream = index
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(video_index as u64);

            for _ in 0..spec.tokens_per_video {
                let pick: f64 = rng.random::<f64>();
                let k = cum_weights[ci]
                    .iter()
                    .position(|&cw| pick < cw)
                    .unwrap_or(c.mixture.len() - 1);
                let dir = &directions[ci][k];

                let v: Vec<f64> = (0..dim)
                    .map(|d| dir[d] + spec.angular_spread * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm < 1e-12 {
                    return Err(Error::Spec("degenerate token direction".into()));
                }
                let target: f64 = spec.norm_mean + spec.norm_std * rng.sample::<f64, _>(StandardNormal);
                let scale = target / norm;
                for (d, x) in v.iter().enumerate() {
                    data[(row, d)] = (x * scale) as f32;
                }
                row_video.push(video_index as u32);
                row += 1;
            }

            videos.push(VideoRecord {
                id: format!("{}_{:02}", c.label, vi),
                condition: c.label.clone(),
                token_offset: video_index * spec.tokens_per_video,
                token_count: spec.tokens_per_video,
            });
            video_index += 1;
        }
    }
    debug_assert_eq!(row, count);

    let header = LatentHeader::new(dim, videos);
    Ok((header, LatentBatch { data, row_video }))
}

/// I.i.d. standard-normal batch for the noise baseline. The projection
/// normalizes per vector, so no norm matching is applied.
pub fn generate_baseline(spec: &BaselineSpec) -> Result<LatentBatch> {
    if spec.count == 0 {
        return Err(Error::Spec("baseline count must be positive".into()));
    }
    if spec.dim == 0 {
        return Err(Error::Spec("baseline dim must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(u64::MAX); // keep clear of per-video store streams
    let data = Array2::from_shape_fn((spec.count, spec.dim), |_| {
        rng.sample::<f64, _>(StandardNormal) as f32
    });
    let row_video = (0..spec.count as u32).collect();
    Ok(LatentBatch { data, row_video })
}

// ---------------------------------------------------------------------------
// Presets used by the examples and the acceptance runs.
// ---------------------------------------------------------------------------

fn free_component(direction_seed: u64, weight: f64) -> MixtureComponent {
    MixtureComponent { direction_seed, weight, negate: false, center_seed: None, offset: 0.0 }
}

fn pocket_component(direction_seed: u64, weight: f64, offset: f64) -> MixtureComponent {
    MixtureComponent { direction_seed, weight, negate: false, center_seed: Some(100), offset }
}

/// Two conditions sharing one diffuse pocket of the sphere (84% of the
/// mass in overlapping sub-clusters around a common center) plus two
/// small well-separated satellites per condition (8% each). Mirrors the
/// dominant-symbol-collision geometry: both conditions keep the same
/// dominant symbol while the contrast lives in secondary satellite mass.
pub fn compact_pair(dim: usize, seed: u64) -> SynthSpec {
    let offset = 0.30;
    let cond = |label: &str, sat_base: u64| ConditionSpec {
        label: label.to_string(),
        mixture: vec![
            pocket_component(101, 0.3360, offset),
            pocket_component(102, 0.2688, offset),
            pocket_component(103, 0.2352, offset),
            free_component(sat_base, 0.08),
            free_component(sat_base + 1, 0.08),
        ],
    };
    SynthSpec {
        dim,
        norm_mean: 97.70,
        norm_std: 0.81,
        angular_spread: 0.10,
        conditions: vec![cond("cond_a", 210), cond("cond_b", 230)],
        videos_per_condition: 10,
        tokens_per_video: 196,
        seed,
    }
}

/// Two conditions on exactly opposed dominant directions (cosine -1).
pub fn separable_pair(dim: usize, seed: u64) -> SynthSpec {
    let mut opposed = free_component(301, 1.0);
    opposed.negate = true;
    SynthSpec {
        dim,
        norm_mean: 97.70,
        norm_std: 0.81,
        angular_spread: 0.10,
        conditions: vec![
            ConditionSpec { label: "cond_a".into(), mixture: vec![free_component(301, 1.0)] },
            ConditionSpec { label: "cond_b".into(), mixture: vec![opposed] },
        ],
        videos_per_condition: 10,
        tokens_per_video: 196,
        seed,
    }
}

/// Two conditions drawn from the identical generator: the null case.
pub fn null_pair(dim: usize, seed: u64) -> SynthSpec {
    let cond = |label: &str| ConditionSpec {
        label: label.to_string(),
        mixture: vec![free_component(401, 0.6), free_component(402, 0.4)],
    };
    SynthSpec {
        dim,
        norm_mean: 97.70,
        norm_std: 0.81,
        angular_spread: 0.10,
        conditions: vec![cond("cond_a"), cond("cond_b")],
        videos_per_condition: 10,
        tokens_per_video: 196,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_direction_spec(spread: f64, norm_std: f64) -> SynthSpec {
        SynthSpec {
            dim: 16,
            norm_mean: 97.70,
            norm_std,
            angular_spread: spread,
            conditions: vec![ConditionSpec {
                label: "c".into(),
                mixture: vec![free_component(5, 1.0)],
            }],
            videos_per_condition: 2,
            tokens_per_video: 8,
            seed: 9,
        }
    }

    #[test]
    fn pocket_components_stay_near_their_center() {
        let dim = 64;
        let center = unit_for_seed(dim, 100).unwrap();
        let m = pocket_component(7, 1.0, 0.3);
        let d = component_direction(dim, &m).unwrap();
        let cos: f64 = d.iter().zip(center.iter()).map(|(a, b)| a * b).sum();
        // offset 0.3 keeps the direction within the pocket cap
        assert!(cos > 0.9, "cos {cos}");
        // negation flips only the offset, not the pocket
        let mut neg = m.clone();
        neg.negate = true;
        let dn = component_direction(dim, &neg).unwrap();
        let cos_n: f64 = dn.iter().zip(center.iter()).map(|(a, b)| a * b).sum();
        assert!(cos_n > 0.9, "cos_n {cos_n}");
        assert!(d != dn);
    }

    #[test]
    fn zero_norm_std_gives_exact_norms() {
        let spec = one_direction_spec(0.2, 0.0);
        let (_, batch) = generate(&spec).unwrap();
        for row in batch.data.outer_iter() {
            let norm = row.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            assert!((norm - 97.70).abs() / 97.70 < 1e-4, "norm {norm}");
        }
    }

    #[test]
    fn zero_spread_gives_parallel_rows() {
        let spec = one_direction_spec(0.0, 0.5);
        let (_, batch) = generate(&spec).unwrap();
        let rows: Vec<Vec<f64>> = batch
            .data
            .outer_iter()
            .map(|r| {
                let v: Vec<f64> = r.iter().map(|&x| x as f64).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| x / n).collect()
            })
            .collect();
        for r in &rows[1..] {
            let cos: f64 = r.iter().zip(rows[0].iter()).map(|(a, b)| a * b).sum();
            assert!((cos - 1.0).abs() < 1e-9, "cos {cos}");
        }
    }

    #[test]
    fn norm_statistics_match_spec_at_scale() {
        let mut spec = one_direction_spec(0.3, 0.81);
        spec.videos_per_condition = 10;
        spec.tokens_per_video = 1000; // 10k tokens
        let (_, batch) = generate(&spec).unwrap();
        let norms: Vec<f64> = batch
            .data
            .outer_iter()
            .map(|r| r.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt())
            .collect();
        let n = norms.len() as f64;
        let mean = norms.iter().sum::<f64>() / n;
        let var = norms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!((mean - 97.70).abs() < 0.05, "mean {mean}");
        assert!((var.sqrt() - 0.81).abs() < 0.1, "std {}", var.sqrt());
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = compact_pair(32, 7);
        let (h1, b1) = generate(&spec).unwrap();
        let (h2, b2) = generate(&spec).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(b1.data, b2.data);
    }

    #[test]
    fn adding_videos_does_not_perturb_earlier_ones() {
        let mut small = compact_pair(16, 3);
        small.videos_per_condition = 2;
        let mut large = small.clone();
        large.videos_per_condition = 3;
        let (_, b_small) = generate(&small).unwrap();
        let (_, b_large) = generate(&large).unwrap();
        // first condition's first two videos occupy the same rows
        let per = small.tokens_per_video;
        let a = b_small.data.slice(ndarray::s![..2 * per, ..]);
        let b = b_large.data.slice(ndarray::s![..2 * per, ..]);
        assert_eq!(a, b);
    }

    #[test]
    fn mixture_weights_must_sum_to_one() {
        let mut spec = one_direction_spec(0.1, 0.1);
        spec.conditions[0].mixture[0].weight = 0.9;
        assert!(matches!(generate(&spec), Err(Error::Spec(_))));
    }

    #[test]
    fn baseline_is_deterministic_and_seed_sensitive() {
        let a = generate_baseline(&BaselineSpec { dim: 8, count: 16, seed: 1 }).unwrap();
        let b = generate_baseline(&BaselineSpec { dim: 8, count: 16, seed: 1 }).unwrap();
        let c = generate_baseline(&BaselineSpec { dim: 8, count: 16, seed: 2 }).unwrap();
        assert_eq!(a.data, b.data);
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn baseline_moments_are_standard_normal() {
        let b = generate_baseline(&BaselineSpec { dim: 64, count: 10_000, seed: 3 }).unwrap();
        for d in 0..64 {
            let col = b.data.column(d);
            let n = col.len() as f64;
            let mean = col.iter().map(|&x| x as f64).sum::<f64>() / n;
            let var = col.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 0.05, "dim {d} mean {mean}");
            assert!((var - 1.0).abs() < 0.05, "dim {d} var {var}");
        }
    }

    #[test]
    fn generated_store_passes_header_validation() {
        let spec = separable_pair(16, 1);
        let (header, batch) = generate(&spec).unwrap();
        header.validate().unwrap();
        assert_eq!(header.count, batch.rows());
        assert_eq!(header.conditions(), vec!["cond_a".to_string(), "cond_b".to_string()]);
    }
}
