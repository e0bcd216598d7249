//! Checkpoint JSON: projection weights, codebook state and the training
//! summary, written deterministically and read back with serde.

use ndarray::{Array1, Array2};
use serde::Deserialize;

use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::jsonio::JsonWriter;
use crate::projection::ProjectionParams;
use crate::trainer::{ConvergenceStatus, TrainSummary};

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ProjectionParams,
    pub codebook: Codebook,
    pub summary: TrainSummary,
}

pub fn to_json(ckpt: &Checkpoint) -> String {
    let mut w = JsonWriter::new();
    w.begin_obj();
    w.key("schema_version").uint(1);

    w.key("projection").begin_obj();
    w.key("dim").uint(ckpt.params.dim() as u64);
    w.key("d_proj").uint(ckpt.params.d_proj() as u64);
    w.key("ln_eps").float(ckpt.params.ln_eps);
    w.key("w").begin_arr();
    for row in ckpt.params.w.outer_iter() {
        w.float_row(row.as_slice().expect("contiguous"));
    }
    w.end_arr();
    w.key("b").float_row(ckpt.params.b.as_slice().expect("contiguous"));
    w.end_obj();

    w.key("codebook").begin_obj();
    w.key("k").uint(ckpt.codebook.k() as u64);
    w.key("gamma").float(ckpt.codebook.gamma);
    w.key("eps").float(ckpt.codebook.eps);
    w.key("tau").float(ckpt.codebook.tau);
    w.key("reset_interval").uint(ckpt.codebook.reset_interval);
    w.key("codewords").begin_arr();
    for row in ckpt.codebook.codewords.outer_iter() {
        w.float_row(row.as_slice().expect("contiguous"));
    }
    w.end_arr();
    w.key("ema_counts")
        .float_row(ckpt.codebook.ema_counts.as_slice().expect("contiguous"));
    w.key("ema_sums").begin_arr();
    for row in ckpt.codebook.ema_sums.outer_iter() {
        w.float_row(row.as_slice().expect("contiguous"));
    }
    w.end_arr();
    w.key("usage").uint_row(&ckpt.codebook.usage);
    w.end_obj();

    w.key("training").begin_obj();
    w.key("steps").uint(ckpt.summary.steps);
    w.key("k").uint(ckpt.summary.k as u64);
    w.key("final_commit_loss").float(ckpt.summary.final_commit_loss);
    w.key("final_perplexity").float(ckpt.summary.final_perplexity);
    w.key("eval_perplexity").float(ckpt.summary.eval_perplexity);
    w.key("final_active_ratio").float(ckpt.summary.final_active_ratio);
    w.key("eval_active_ratio").float(ckpt.summary.eval_active_ratio);
    w.key("convergence").str_val(ckpt.summary.convergence.as_str());
    w.key("stabilized").boolean(ckpt.summary.stabilized);
    w.end_obj();

    w.end_obj();
    w.finish()
}

#[derive(Deserialize)]
struct ProjectionFile {
    dim: usize,
    d_proj: usize,
    ln_eps: f64,
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Deserialize)]
struct CodebookFile {
    k: usize,
    gamma: f64,
    eps: f64,
    tau: f64,
    reset_interval: u64,
    codewords: Vec<Vec<f64>>,
    ema_counts: Vec<f64>,
    ema_sums: Vec<Vec<f64>>,
    usage: Vec<u64>,
}

#[derive(Deserialize)]
struct TrainingFile {
    steps: u64,
    k: usize,
    final_commit_loss: f64,
    final_perplexity: f64,
    eval_perplexity: f64,
    final_active_ratio: f64,
    eval_active_ratio: f64,
    convergence: String,
    stabilized: bool,
}

#[derive(Deserialize)]
struct CheckpointFile {
    schema_version: u32,
    projection: ProjectionFile,
    codebook: CodebookFile,
    training: TrainingFile,
}

fn matrix_from_rows(rows: Vec<Vec<f64>>, ncols: usize, what: &str) -> Result<Array2<f64>> {
    let nrows = rows.len();
    let mut m = Array2::zeros((nrows, ncols));
    for (i, row) in rows.into_iter().enumerate() {
        if row.len() != ncols {
            return Err(Error::Config(format!(
                "{what} row {i} has {} entries, expected {ncols}",
                row.len()
            )));
        }
        for (j, x) in row.into_iter().enumerate() {
            m[(i, j)] = x;
        }
    }
    Ok(m)
}

pub fn from_json(text: &str) -> Result<Checkpoint> {
    let file: CheckpointFile =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("bad checkpoint: {e}")))?;
    if file.schema_version != 1 {
        return Err(Error::Config(format!(
            "unsupported checkpoint schema_version {}",
            file.schema_version
        )));
    }
    let p = file.projection;
    if p.w.len() != p.d_proj || p.b.len() != p.d_proj {
        return Err(Error::Config("projection shape mismatch".into()));
    }
    let params = ProjectionParams {
        w: matrix_from_rows(p.w, p.dim, "projection w")?,
        b: Array1::from_vec(p.b),
        ln_eps: p.ln_eps,
    };

    let c = file.codebook;
    if c.codewords.len() != c.k
        || c.ema_sums.len() != c.k
        || c.ema_counts.len() != c.k
        || c.usage.len() != c.k
    {
        return Err(Error::Config("codebook shape mismatch".into()));
    }
    let d_proj = params.d_proj();
    let codebook = Codebook {
        codewords: matrix_from_rows(c.codewords, d_proj, "codewords")?,
        ema_counts: Array1::from_vec(c.ema_counts),
        ema_sums: matrix_from_rows(c.ema_sums, d_proj, "ema_sums")?,
        usage: c.usage,
        gamma: c.gamma,
        eps: c.eps,
        tau: c.tau,
        reset_interval: c.reset_interval,
    };

    let t = file.training;
    let convergence = match t.convergence.as_str() {
        "converged" => ConvergenceStatus::Converged,
        "not_converged" => ConvergenceStatus::NotConverged,
        "undefined_low_loss" => ConvergenceStatus::UndefinedLowLoss,
        "not_evaluated" => ConvergenceStatus::NotEvaluated,
        other => return Err(Error::Config(format!("unknown convergence status {other:?}"))),
    };
    let summary = TrainSummary {
        steps: t.steps,
        k: t.k,
        final_commit_loss: t.final_commit_loss,
        final_perplexity: t.final_perplexity,
        eval_perplexity: t.eval_perplexity,
        final_active_ratio: t.final_active_ratio,
        eval_active_ratio: t.eval_active_ratio,
        convergence,
        stabilized: t.stabilized,
    };
    Ok(Checkpoint { params, codebook, summary })
}
