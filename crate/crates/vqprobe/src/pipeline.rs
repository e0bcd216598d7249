//! Frozen evaluation pipeline: projection + codebook with no updates.
//!
//! All methods take `&self`, so the type system already rules out state
//! mutation during evaluation; the stability battery in `stats` leans on
//! that guarantee.

use ndarray::{Array2, ArrayView2};

use crate::codebook::{assign, Codebook};
use crate::error::Result;
use crate::projection::{forward_batch, ProjectionParams};
use crate::stats::mode_symbol;

#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub params: ProjectionParams,
    pub codebook: Codebook,
}

/// Rows processed per chunk during full-store passes.
const CHUNK: usize = 2048;

impl Pipeline {
    pub fn new(params: ProjectionParams, codebook: Codebook) -> Self {
        Pipeline { params, codebook }
    }

    pub fn k(&self) -> usize {
        self.codebook.k()
    }

    /// Projects and assigns a block of raw latent rows.
    pub fn assign_rows(&self, rows: ArrayView2<'_, f32>) -> Result<Vec<usize>> {
        let mut symbols = Vec::with_capacity(rows.nrows());
        let mut start = 0;
        while start < rows.nrows() {
            let end = (start + CHUNK).min(rows.nrows());
            let chunk = rows.slice(ndarray::s![start..end, ..]);
            let z = Array2::from_shape_fn(chunk.raw_dim(), |(i, j)| chunk[(i, j)] as f64);
            let (z_hat, _) = forward_batch(&self.params, z.view())?;
            let a = assign(&self.codebook, z_hat.view());
            symbols.extend(a.symbols);
            start = end;
        }
        Ok(symbols)
    }

    /// Mode symbol of one video's token rows.
    pub fn video_mode(&self, rows: ArrayView2<'_, f32>) -> Result<usize> {
        let symbols = self.assign_rows(rows)?;
        mode_symbol(&symbols)
    }

    /// Per-entry assignment counts over a block of rows (a fresh usage
    /// histogram, independent of the training-time cumulative counters).
    pub fn eval_usage(&self, rows: ArrayView2<'_, f32>) -> Result<Vec<u64>> {
        let mut usage = vec![0u64; self.k()];
        for s in self.assign_rows(rows)? {
            usage[s] += 1;
        }
        Ok(usage)
    }
}
