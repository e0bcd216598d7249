//! On-disk latent token store.
//!
//! A store is a pair of files sharing a base path: `<base>.json` holds the
//! header (dimensions, per-video ranges, condition labels), `<base>.bin`
//! holds the payload as row-major little-endian f32. The format is
//! bit-exact under round-trip and inspectable with any hex/JSON tool.
//!
//! Token layout inside a video is time-major: consecutive blocks of
//! `(H/p)^2` spatial tokens per time step. The header records this
//! explicitly (`layout` field) because upstream encoders do not pin a
//! serialization order.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::jsonio::JsonWriter;

pub const DTYPE_TAG: &str = "f32le";
pub const LAYOUT_TAG: &str = "time_major";

/// One video's slice of the store, with its condition label.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct VideoRecord {
    pub id: String,
    pub condition: String,
    pub token_offset: usize,
    pub token_count: usize,
}

/// Store header: shape, dtype tag and the ordered video ranges.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct LatentHeader {
    pub version: u32,
    pub dim: usize,
    pub count: usize,
    pub dtype: String,
    #[serde(default = "default_layout")]
    pub layout: String,
    pub videos: Vec<VideoRecord>,
}

fn default_layout() -> String {
    LAYOUT_TAG.to_string()
}

impl LatentHeader {
    pub fn new(dim: usize, videos: Vec<VideoRecord>) -> Self {
        let count = videos.iter().map(|v| v.token_count).sum();
        LatentHeader {
            version: 1,
            dim,
            count,
            dtype: DTYPE_TAG.to_string(),
            layout: LAYOUT_TAG.to_string(),
            videos,
        }
    }

    /// Checks the header's internal invariants: positive dim, known dtype,
    /// and contiguous, ordered, non-overlapping video ranges covering
    /// exactly `count` tokens.
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::CorruptStore("dim must be positive".into()));
        }
        if self.dtype != DTYPE_TAG {
            return Err(Error::CorruptStore(format!(
                "unsupported dtype tag {:?}, expected {:?}",
                self.dtype, DTYPE_TAG
            )));
        }
        if self.layout != LAYOUT_TAG {
            return Err(Error::CorruptStore(format!(
                "unsupported layout {:?}, expected {:?}",
                self.layout, LAYOUT_TAG
            )));
        }
        let mut cursor = 0usize;
        for v in &self.videos {
            if v.token_count == 0 {
                return Err(Error::CorruptStore(format!("video {:?} has zero tokens", v.id)));
            }
            if v.condition.is_empty() {
                return Err(Error::CorruptStore(format!("video {:?} has empty condition", v.id)));
            }
            if v.token_offset != cursor {
                return Err(Error::CorruptStore(format!(
                    "video {:?} offset {} breaks contiguity (expected {})",
                    v.id, v.token_offset, cursor
                )));
            }
            cursor += v.token_count;
        }
        if cursor != self.count {
            return Err(Error::CorruptStore(format!(
                "video token counts sum to {} but header count is {}",
                cursor, self.count
            )));
        }
        Ok(())
    }

    /// Ordered list of distinct condition labels.
    pub fn conditions(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for v in &self.videos {
            if !out.contains(&v.condition) {
                out.push(v.condition.clone());
            }
        }
        out
    }
}

/// Dense (n, D) block of token vectors plus each row's video index.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBatch {
    pub data: Array2<f32>,
    pub row_video: Vec<u32>,
}

impl LatentBatch {
    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    /// View of one video's rows given its header record.
    pub fn video_rows(&self, rec: &VideoRecord) -> ArrayView2<'_, f32> {
        self.data
            .slice(ndarray::s![rec.token_offset..rec.token_offset + rec.token_count, ..])
    }
}

/// Tubelet token geometry of the upstream encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub struct TokenGeometry {
    pub frames: usize,
    pub temporal_patch: usize,
    pub spatial_patch: usize,
    pub height: usize,
}

impl TokenGeometry {
    fn check(&self) -> Result<()> {
        if self.temporal_patch == 0 || self.spatial_patch == 0 {
            return Err(Error::Geometry("patch sizes must be positive".into()));
        }
        if self.frames % self.temporal_patch != 0 {
            return Err(Error::Geometry(format!(
                "frames {} not divisible by temporal patch {}",
                self.frames, self.temporal_patch
            )));
        }
        if self.height % self.spatial_patch != 0 {
            return Err(Error::Geometry(format!(
                "height {} not divisible by spatial patch {}",
                self.height, self.spatial_patch
            )));
        }
        Ok(())
    }

    pub fn time_steps(&self) -> usize {
        self.frames / self.temporal_patch
    }

    pub fn spatial_tokens(&self) -> usize {
        let side = self.height / self.spatial_patch;
        side * side
    }
}

/// Number of output tokens for a video: `(T/t_p) * (H/p)^2`.
pub fn token_count(geom: TokenGeometry) -> Result<usize> {
    geom.check()?;
    Ok(geom.time_steps() * geom.spatial_tokens())
}

/// Averages each time step's spatial tokens, collapsing (T/t_p * S, D)
/// down to (T/t_p, D). Kept for comparison runs; the main pipeline
/// deliberately does not pool.
pub fn pool_temporal(video_tokens: ArrayView2<'_, f32>, geom: TokenGeometry) -> Result<Array2<f32>> {
    let expected = token_count(geom)?;
    if video_tokens.nrows() != expected {
        return Err(Error::Shape(format!(
            "video has {} rows but geometry implies {}",
            video_tokens.nrows(),
            expected
        )));
    }
    let steps = geom.time_steps();
    let spatial = geom.spatial_tokens();
    let dim = video_tokens.ncols();
    let mut pooled = Array2::<f32>::zeros((steps, dim));
    for t in 0..steps {
        let block = video_tokens.slice(ndarray::s![t * spatial..(t + 1) * spatial, ..]);
        for d in 0..dim {
            let mut acc = 0.0f64;
            for r in 0..spatial {
                acc += block[(r, d)] as f64;
            }
            pooled[(t, d)] = (acc / spatial as f64) as f32;
        }
    }
    Ok(pooled)
}

/// Concatenates per-video token matrices into one flat batch,
/// video-major then token-major. All videos must have equal token counts.
pub fn flatten_spatial(videos: &[Array2<f32>]) -> Result<LatentBatch> {
    if videos.is_empty() {
        return Err(Error::Empty("no videos to flatten".into()));
    }
    let per_video = videos[0].nrows();
    let dim = videos[0].ncols();
    for (i, v) in videos.iter().enumerate() {
        if v.nrows() != per_video || v.ncols() != dim {
            return Err(Error::Shape(format!(
                "video {} has shape ({}, {}), expected ({}, {})",
                i,
                v.nrows(),
                v.ncols(),
                per_video,
                dim
            )));
        }
    }
    let mut data = Array2::<f32>::zeros((videos.len() * per_video, dim));
    let mut row_video = Vec::with_capacity(videos.len() * per_video);
    for (i, v) in videos.iter().enumerate() {
        data.slice_mut(ndarray::s![i * per_video..(i + 1) * per_video, ..])
            .assign(v);
        row_video.extend(std::iter::repeat(i as u32).take(per_video));
    }
    Ok(LatentBatch { data, row_video })
}

/// Resolves a user-supplied store path to the `.json`/`.bin` pair.
/// Accepts the bare base path or either file's path.
pub fn store_paths(path: &Path) -> (PathBuf, PathBuf) {
    let base = match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("bin") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    (base.with_extension("json"), base.with_extension("bin"))
}

fn header_to_json(header: &LatentHeader) -> String {
    let mut w = JsonWriter::new();
    w.begin_obj();
    w.key("version").uint(header.version as u64);
    w.key("dim").uint(header.dim as u64);
    w.key("count").uint(header.count as u64);
    w.key("dtype").str_val(&header.dtype);
    w.key("layout").str_val(&header.layout);
    w.key("videos").begin_arr();
    for v in &header.videos {
        w.begin_obj();
        w.key("id").str_val(&v.id);
        w.key("condition").str_val(&v.condition);
        w.key("token_offset").uint(v.token_offset as u64);
        w.key("token_count").uint(v.token_count as u64);
        w.end_obj();
    }
    w.end_arr();
    w.end_obj();
    w.finish()
}

fn check_consistent(header: &LatentHeader, batch: &LatentBatch) -> Result<()> {
    header.validate()?;
    if batch.rows() != header.count {
        return Err(Error::CorruptStore(format!(
            "batch has {} rows but header count is {}",
            batch.rows(),
            header.count
        )));
    }
    if header.count > 0 && batch.dim() != header.dim {
        return Err(Error::CorruptStore(format!(
            "batch dim {} does not match header dim {}",
            batch.dim(),
            header.dim
        )));
    }
    if batch.row_video.len() != batch.rows() {
        return Err(Error::CorruptStore("row_video length mismatch".into()));
    }
    Ok(())
}

/// Writes header and payload. Rejects non-finite values before touching
/// the filesystem; the upstream contract is finite latents only.
pub fn save_store(header: &LatentHeader, batch: &LatentBatch, path: &Path) -> Result<()> {
    check_consistent(header, batch)?;
    for (i, row) in batch.data.outer_iter().enumerate() {
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::CorruptStore(format!("non-finite value in row {}", i)));
        }
    }
    let (hpath, bpath) = store_paths(path);
    if let Some(dir) = hpath.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut payload = Vec::with_capacity(batch.rows() * batch.dim() * 4);
    for x in batch.data.iter() {
        payload.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(&hpath, header_to_json(header))?;
    fs::write(&bpath, payload)?;
    Ok(())
}

/// Loads a store, validating header invariants, payload length and
/// finiteness of every value.
pub fn load_store(path: &Path) -> Result<(LatentHeader, LatentBatch)> {
    let (hpath, bpath) = store_paths(path);
    let header_text = fs::read_to_string(&hpath)
        .map_err(|e| Error::CorruptStore(format!("cannot read {}: {}", hpath.display(), e)))?;
    let header: LatentHeader = serde_json::from_str(&header_text)
        .map_err(|e| Error::CorruptStore(format!("bad header {}: {}", hpath.display(), e)))?;
    header.validate()?;

    let payload = fs::read(&bpath)
        .map_err(|e| Error::CorruptStore(format!("cannot read {}: {}", bpath.display(), e)))?;
    let expected = header.count * header.dim * 4;
    if payload.len() != expected {
        return Err(Error::CorruptStore(format!(
            "payload is {} bytes, header implies {}",
            payload.len(),
            expected
        )));
    }

    let mut values = Vec::with_capacity(header.count * header.dim);
    for chunk in payload.chunks_exact(4) {
        let x = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if !x.is_finite() {
            return Err(Error::CorruptStore(format!(
                "non-finite value at flat index {}",
                values.len()
            )));
        }
        values.push(x);
    }
    let data = Array2::from_shape_vec((header.count, header.dim), values)
        .map_err(|e| Error::CorruptStore(e.to_string()))?;

    let mut row_video = Vec::with_capacity(header.count);
    for (i, v) in header.videos.iter().enumerate() {
        row_video.extend(std::iter::repeat(i as u32).take(v.token_count));
    }
    Ok((header, LatentBatch { data, row_video }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn geom(frames: usize, tp: usize, p: usize, h: usize) -> TokenGeometry {
        TokenGeometry { frames, temporal_patch: tp, spatial_patch: p, height: h }
    }

    #[test]
    fn token_count_matches_reference_geometry() {
        // 16 frames, tubelet 2, 16px patches on 224px input
        assert_eq!(token_count(geom(16, 2, 16, 224)).unwrap(), 1568);
    }

    #[test]
    fn token_count_single_tubelet() {
        assert_eq!(token_count(geom(2, 2, 16, 16)).unwrap(), 1);
    }

    #[test]
    fn token_count_hand_computed() {
        assert_eq!(token_count(geom(4, 2, 8, 32)).unwrap(), 32);
    }

    #[test]
    fn token_count_rejects_indivisible_geometry() {
        assert!(matches!(token_count(geom(15, 2, 16, 224)), Err(Error::Geometry(_))));
        assert!(matches!(token_count(geom(16, 2, 16, 225)), Err(Error::Geometry(_))));
    }

    fn tiny_store(rows: usize, dim: usize, seed: u64) -> (LatentHeader, LatentBatch) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = Array2::from_shape_fn((rows, dim), |_| rng.random_range(-1.0f32..1.0));
        let videos = vec![VideoRecord {
            id: "v0".into(),
            condition: "cond".into(),
            token_offset: 0,
            token_count: rows,
        }];
        let header = LatentHeader::new(dim, videos);
        let row_video = vec![0u32; rows];
        (header, LatentBatch { data, row_video })
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store");
        let (header, batch) = tiny_store(5, 8, 7);
        save_store(&header, &batch, &path).unwrap();
        let (h2, b2) = load_store(&path).unwrap();
        assert_eq!(header, h2);
        assert_eq!(batch.data, b2.data);
        assert_eq!(batch.row_video, b2.row_video);
    }

    #[test]
    fn round_trip_preserves_condition_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store");
        let data = Array2::from_elem((4, 3), 1.0f32);
        let videos = vec![
            VideoRecord { id: "a".into(), condition: "fast".into(), token_offset: 0, token_count: 2 },
            VideoRecord { id: "b".into(), condition: "slow".into(), token_offset: 2, token_count: 2 },
        ];
        let header = LatentHeader::new(3, videos);
        let batch = LatentBatch { data, row_video: vec![0, 0, 1, 1] };
        save_store(&header, &batch, &path).unwrap();
        let (h2, _) = load_store(&path).unwrap();
        assert_eq!(h2.videos[0].condition, "fast");
        assert_eq!(h2.videos[1].condition, "slow");
        assert_eq!(h2.conditions(), vec!["fast".to_string(), "slow".to_string()]);
    }

    #[test]
    fn empty_store_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty");
        let header = LatentHeader::new(4, vec![]);
        let batch = LatentBatch { data: Array2::zeros((0, 4)), row_video: vec![] };
        save_store(&header, &batch, &path).unwrap();
        let (h2, b2) = load_store(&path).unwrap();
        assert_eq!(h2.count, 0);
        assert_eq!(b2.rows(), 0);
    }

    #[test]
    fn payload_size_arithmetic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s");
        let (header, batch) = tiny_store(2, 3, 1);
        save_store(&header, &batch, &path).unwrap();
        let bin = std::fs::read(dir.path().join("s.bin")).unwrap();
        assert_eq!(bin.len(), 24);
        let (_, b2) = load_store(&path).unwrap();
        assert_eq!(b2.data.shape(), &[2, 3]);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s");
        let (header, batch) = tiny_store(2, 3, 2);
        save_store(&header, &batch, &path).unwrap();
        let bin_path = dir.path().join("s.bin");
        let mut bytes = std::fs::read(&bin_path).unwrap();
        bytes.pop();
        std::fs::write(&bin_path, bytes).unwrap();
        assert!(matches!(load_store(&path), Err(Error::CorruptStore(_))));
    }

    #[test]
    fn nan_row_is_rejected_before_write() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s");
        let (header, mut batch) = tiny_store(2, 3, 3);
        batch.data[(1, 1)] = f32::NAN;
        assert!(matches!(save_store(&header, &batch, &path), Err(Error::CorruptStore(_))));
        assert!(!dir.path().join("s.bin").exists());
    }

    #[test]
    fn pool_temporal_of_constant_rows_is_constant() {
        let g = geom(4, 2, 8, 16); // 2 steps, 4 spatial tokens
        let v = array![[1.0f32, -2.0, 0.5]];
        let tokens = Array2::from_shape_fn((8, 3), |(_, j)| v[(0, j)]);
        let pooled = pool_temporal(tokens.view(), g).unwrap();
        assert_eq!(pooled.shape(), &[2, 3]);
        for row in pooled.outer_iter() {
            for (a, b) in row.iter().zip(v.iter()) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn pool_temporal_cancels_opposed_tokens() {
        let g = geom(2, 2, 8, 16); // 1 step, 4 spatial tokens
        let mut tokens = Array2::<f32>::zeros((4, 3));
        tokens[(0, 0)] = 1.0;
        tokens[(1, 0)] = -1.0;
        let pooled = pool_temporal(tokens.view(), g).unwrap();
        for x in pooled.iter() {
            assert!(x.abs() < 1e-7);
        }
    }

    #[test]
    fn pool_temporal_matches_per_step_mean_oracle() {
        let g = geom(16, 2, 16, 224); // 8 steps x 196 spatial
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let tokens = Array2::from_shape_fn((1568, 4), |_| rng.random_range(-2.0f32..2.0));
        let pooled = pool_temporal(tokens.view(), g).unwrap();
        for t in 0..8 {
            for d in 0..4 {
                let mut acc = 0.0f64;
                for r in 0..196 {
                    acc += tokens[(t * 196 + r, d)] as f64;
                }
                let oracle = (acc / 196.0) as f32;
                assert!((pooled[(t, d)] - oracle).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn pool_temporal_rejects_wrong_shape() {
        let g = geom(4, 2, 8, 16);
        let tokens = Array2::<f32>::zeros((7, 3));
        assert!(matches!(pool_temporal(tokens.view(), g), Err(Error::Shape(_))));
    }

    #[test]
    fn flatten_single_video_is_identity() {
        let v = array![[1.0f32, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let flat = flatten_spatial(&[v.clone()]).unwrap();
        assert_eq!(flat.data, v);
        assert_eq!(flat.row_video, vec![0, 0, 0]);
    }

    #[test]
    fn flatten_orders_video_major() {
        let v0 = array![[0.0f32], [1.0]];
        let v1 = array![[10.0f32], [11.0]];
        let flat = flatten_spatial(&[v0, v1]).unwrap();
        let col: Vec<f32> = flat.data.column(0).to_vec();
        assert_eq!(col, vec![0.0, 1.0, 10.0, 11.0]);
        assert_eq!(flat.row_video, vec![0, 0, 1, 1]);
    }

    #[test]
    fn flatten_full_scale_row_count() {
        // 48 videos x 1568 tokens at a narrow dim; checks the row count law
        let videos: Vec<Array2<f32>> = (0..48).map(|i| Array2::from_elem((1568, 2), i as f32)).collect();
        let flat = flatten_spatial(&videos).unwrap();
        assert_eq!(flat.rows(), 75_264);
    }

    #[test]
    fn flatten_rejects_ragged_videos() {
        let v0 = Array2::<f32>::zeros((2, 3));
        let v1 = Array2::<f32>::zeros((3, 3));
        assert!(matches!(flatten_spatial(&[v0, v1]), Err(Error::Shape(_))));
    }

    proptest! {
        #[test]
        fn token_count_is_multiplicative(steps in 1usize..32, side in 1usize..24) {
            let g = geom(2 * steps, 2, 8, 8 * side);
            let g2 = geom(4 * steps, 2, 8, 8 * side);
            let n = token_count(g).unwrap();
            prop_assert_eq!(n, steps * side * side);
            prop_assert_eq!(token_count(g2).unwrap(), 2 * n);
        }

        #[test]
        fn save_load_round_trip_random_stores(
            rows in 1usize..24,
            dim in 1usize..12,
            seed in 0u64..1000,
        ) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("p");
            let (header, batch) = tiny_store(rows, dim, seed);
            save_store(&header, &batch, &path).unwrap();
            let (h2, b2) = load_store(&path).unwrap();
            prop_assert_eq!(header, h2);
            prop_assert_eq!(batch.data, b2.data);
        }

        #[test]
        fn pool_commutes_with_scaling(seed in 0u64..500, alpha in -3.0f32..3.0) {
            let g = geom(4, 2, 8, 16);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let tokens = Array2::from_shape_fn((8, 3), |_| rng.random_range(-1.0f32..1.0));
            let scaled = tokens.mapv(|x| alpha * x);
            let a = pool_temporal(tokens.view(), g).unwrap().mapv(|x| alpha * x);
            let b = pool_temporal(scaled.view(), g).unwrap();
            for (x, y) in a.iter().zip(b.iter()) {
                prop_assert!((x - y).abs() <= 1e-5);
            }
        }

        #[test]
        fn flatten_preserves_per_video_rows(nv in 1usize..5, per in 1usize..6, seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let videos: Vec<Array2<f32>> = (0..nv)
                .map(|_| Array2::from_shape_fn((per, 2), |_| rng.random_range(-1.0f32..1.0)))
                .collect();
            let flat = flatten_spatial(&videos).unwrap();
            prop_assert_eq!(flat.rows(), nv * per);
            for (i, v) in videos.iter().enumerate() {
                let slice = flat.data.slice(ndarray::s![i * per..(i + 1) * per, ..]);
                prop_assert_eq!(&slice, v);
                for r in 0..per {
                    prop_assert_eq!(flat.row_video[i * per + r], i as u32);
                }
            }
        }
    }
}
