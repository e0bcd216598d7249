//! Stage-A training loop: seeded mini-batch sampling, commitment-loss
//! updates to the projection through Adam with cosine-annealed LR, EMA
//! codebook updates, periodic dead-code resets, and metric logging.
//!
//! The latent store is read-only throughout; the only mutable state is the
//! projection, its optimizer moments, and the codebook. Everything is a
//! deterministic function of (store bytes, config, seed).
//!
//! Per step, in order: sample batch -> forward -> assign -> loss/backward/
//! Adam -> EMA update -> (reset at interval boundaries). The commitment
//! target is the pre-update codeword, matching stop-gradient semantics.

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::codebook::{self, assign, dead_code_reset, ema_update, init_from_samples, Codebook};
use crate::error::{Error, Result};
use crate::pipeline::Pipeline;
use crate::projection::{
    adam_step, backward_batch, commitment_loss_batch, forward_batch, lr_at, AdamState,
    LRSchedule, ProjectionParams,
};
use crate::store::LatentBatch;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub beta: f64,
    pub gamma: f64,
    pub k: usize,
    pub d_proj: usize,
    pub lr: LRSchedule,
    pub reset_interval: u64,
    pub convergence_window: usize,
    pub convergence_rel_tol: f64,
    /// how many store rows feed the codebook init pool
    pub init_pool_size: usize,
    /// codebook health: perplexity must exceed this fraction of k
    pub perplexity_fraction: f64,
    /// codebook health: evaluation active ratio must exceed this
    pub active_ratio_threshold: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 3000,
            batch_size: 64,
            beta: 2.0,
            gamma: 0.90,
            k: 8,
            d_proj: 256,
            lr: LRSchedule::default(),
            reset_interval: 200,
            convergence_window: 200,
            convergence_rel_tol: 1e-3,
            init_pool_size: 512,
            perplexity_fraction: 0.4,
            active_ratio_threshold: 0.30,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.beta > 0.0) {
            return Err(Error::Config("beta must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma {} outside (0, 1)", self.gamma)));
        }
        if self.k < 2 {
            return Err(Error::Config("k must be at least 2".into()));
        }
        if self.d_proj < 2 {
            return Err(Error::Config("d_proj must be at least 2".into()));
        }
        self.lr.validate()?;
        if self.steps > self.lr.t_max {
            return Err(Error::Config(format!(
                "steps {} exceed lr.t_max {}",
                self.steps, self.lr.t_max
            )));
        }
        if self.reset_interval < 1 {
            return Err(Error::Config("reset_interval must be at least 1".into()));
        }
        if self.convergence_window < 2 {
            return Err(Error::Config("convergence_window must be at least 2".into()));
        }
        if self.init_pool_size < self.k {
            return Err(Error::Config("init_pool_size must be at least k".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<TrainConfig> {
        let cfg: TrainConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("bad train config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One logged training step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub lr: f64,
    pub commit_loss: f64,
    pub perplexity: f64,
    pub active_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResetEvent {
    pub step: u64,
    pub entries: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvergenceStatus {
    Converged,
    NotConverged,
    /// loss is effectively zero across the window, so the relative change
    /// is undefined rather than large
    UndefinedLowLoss,
    /// run shorter than the monitoring window
    NotEvaluated,
}

impl ConvergenceStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConvergenceStatus::Converged => "converged",
            ConvergenceStatus::NotConverged => "not_converged",
            ConvergenceStatus::UndefinedLowLoss => "undefined_low_loss",
            ConvergenceStatus::NotEvaluated => "not_evaluated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceReport {
    pub status: ConvergenceStatus,
    /// perplexity plateau over the same window
    pub stabilized: bool,
}

/// End-of-run summary. Perplexity and active ratio appear twice: the
/// `final_*` values are training-time statistics (EMA counts; usage
/// counters, which resets zero), the `eval_*` values come from a fresh
/// full-store assignment pass after training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub steps: u64,
    pub k: usize,
    pub final_commit_loss: f64,
    pub final_perplexity: f64,
    pub eval_perplexity: f64,
    pub final_active_ratio: f64,
    pub eval_active_ratio: f64,
    pub convergence: ConvergenceStatus,
    pub stabilized: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub records: Vec<StepRecord>,
    pub reset_events: Vec<ResetEvent>,
    pub summary: TrainSummary,
}

impl TrainLog {
    /// CSV export: `step,lr,commit_loss,perplexity,active_ratio`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,lr,commit_loss,perplexity,active_ratio\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.step,
                crate::jsonio::fmt_float(r.lr),
                crate::jsonio::fmt_float(r.commit_loss),
                crate::jsonio::fmt_float(r.perplexity),
                crate::jsonio::fmt_float(r.active_ratio),
            ));
        }
        out
    }

    /// Parses records back from the CSV form.
    pub fn records_from_csv(text: &str) -> Result<Vec<StepRecord>> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Empty("empty CSV".into()))?;
        if header.trim() != "step,lr,commit_loss,perplexity,active_ratio" {
            return Err(Error::Config(format!("unexpected CSV header {header:?}")));
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(Error::Config(format!("bad CSV row {}", i + 2)));
            }
            let parse_f = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad CSV number {s:?}: {e}")))
            };
            records.push(StepRecord {
                step: fields[0]
                    .trim()
                    .parse()
                    .map_err(|e| Error::Config(format!("bad CSV step: {e}")))?,
                lr: parse_f(fields[1])?,
                commit_loss: parse_f(fields[2])?,
                perplexity: parse_f(fields[3])?,
                active_ratio: parse_f(fields[4])?,
            });
        }
        if records.is_empty() {
            return Err(Error::Empty("CSV has no data rows".into()));
        }
        Ok(records)
    }
}

fn gather_rows_f64(store: &LatentBatch, indices: &[usize]) -> Array2<f64> {
    let dim = store.dim();
    let mut out = Array2::zeros((indices.len(), dim));
    for (r, &idx) in indices.iter().enumerate() {
        for d in 0..dim {
            out[(r, d)] = store.data[(idx, d)] as f64;
        }
    }
    out
}

/// Relative half-window change of a series: |mean(late) - mean(early)| over
/// |mean(early)|.
fn half_window_rel_change(values: &[f64]) -> f64 {
    let half = values.len() / 2;
    let early = &values[..half];
    let late = &values[half..];
    let m_early = early.iter().sum::<f64>() / early.len() as f64;
    let m_late = late.iter().sum::<f64>() / late.len() as f64;
    (m_late - m_early).abs() / m_early.abs().max(1e-300)
}

/// Convergence monitor over the trailing `window` records. Mean loss below
/// 1e-8 makes the relative change undefined rather than large, which is
/// reported as its own status; the perplexity-plateau flag rides along so
/// callers can still see that the run stabilized.
pub fn check_convergence(log: &[StepRecord], window: usize, rel_tol: f64) -> Result<ConvergenceReport> {
    if log.len() < window {
        return Err(Error::InsufficientHistory { have: log.len(), need: window });
    }
    let tail = &log[log.len() - window..];
    let losses: Vec<f64> = tail.iter().map(|r| r.commit_loss).collect();
    let perps: Vec<f64> = tail.iter().map(|r| r.perplexity).collect();
    let stabilized = half_window_rel_change(&perps) < rel_tol;
    let mean_loss = losses.iter().sum::<f64>() / losses.len() as f64;
    let status = if mean_loss < 1e-8 {
        ConvergenceStatus::UndefinedLowLoss
    } else if half_window_rel_change(&losses) < rel_tol {
        ConvergenceStatus::Converged
    } else {
        ConvergenceStatus::NotConverged
    };
    Ok(ConvergenceReport { status, stabilized })
}

// seed-stream derivation constants; any fixed distinct values work
const STREAM_SAMPLING: u64 = 0;
const STREAM_INIT_POOL: u64 = 1;
const SEED_SALT_PROJ: u64 = 0x50524f4a; // "PROJ"
const SEED_SALT_CODE: u64 = 0x434f4445; // "CODE"

/// Runs the full Stage-A training loop.
pub fn run_stage_a(
    store: &LatentBatch,
    config: &TrainConfig,
) -> Result<(ProjectionParams, Codebook, TrainLog)> {
    config.validate()?;
    let n = store.rows();
    if n == 0 {
        return Err(Error::Empty("cannot train on an empty store".into()));
    }
    if store.data.iter().any(|x| !x.is_finite()) {
        return Err(Error::CorruptStore("non-finite value in training store".into()));
    }

    let mut sample_rng = ChaCha8Rng::seed_from_u64(config.seed);
    sample_rng.set_stream(STREAM_SAMPLING);
    let mut pool_rng = ChaCha8Rng::seed_from_u64(config.seed);
    pool_rng.set_stream(STREAM_INIT_POOL);

    let mut params =
        ProjectionParams::init(store.dim(), config.d_proj, config.seed ^ SEED_SALT_PROJ)?;
    let mut adam = AdamState::new(&params);

    // codebook init: k entries drawn from a pool of projected real tokens
    let pool_size = config.init_pool_size.min(n);
    if pool_size < config.k {
        return Err(Error::Config(format!(
            "store has only {n} rows; need at least k = {}",
            config.k
        )));
    }
    let mut pool_indices: Vec<usize> = (0..n).collect();
    for i in 0..pool_size {
        let j = pool_rng.random_range(i..pool_indices.len());
        pool_indices.swap(i, j);
    }
    pool_indices.truncate(pool_size);
    let pool = gather_rows_f64(store, &pool_indices);
    let (pool_projected, _) = forward_batch(&params, pool.view())?;
    let mut cb = init_from_samples(
        pool_projected.view(),
        config.k,
        config.seed ^ SEED_SALT_CODE,
        config.gamma,
    )?;
    cb.reset_interval = config.reset_interval;

    let mut records = Vec::with_capacity(config.steps as usize);
    let mut reset_events = Vec::new();

    for step in 1..=config.steps {
        let indices: Vec<usize> =
            (0..config.batch_size).map(|_| sample_rng.random_range(0..n)).collect();
        let z = gather_rows_f64(store, &indices);
        let (z_hat, cache) = forward_batch(&params, z.view())?;
        let assignment = assign(&cb, z_hat.view());

        // commitment targets: pre-update codewords of the assigned entries
        let mut targets = Array2::zeros((config.batch_size, config.d_proj));
        for (r, &s) in assignment.symbols.iter().enumerate() {
            targets.row_mut(r).assign(&cb.codewords.row(s));
        }
        let loss = commitment_loss_batch(z_hat.view(), targets.view(), config.beta);
        if !loss.is_finite() {
            return Err(Error::TrainAbort(format!("non-finite loss at step {step}")));
        }
        let (g_w, g_b) = backward_batch(&params, &cache, targets.view(), config.beta);
        let lr = lr_at(&config.lr, step - 1)?;
        adam_step(&mut params, &mut adam, &g_w, &g_b, lr)?;

        ema_update(&mut cb, z_hat.view(), &assignment);

        if step % config.reset_interval == 0 {
            let reset = dead_code_reset(&mut cb, z_hat.view());
            if !reset.is_empty() {
                reset_events.push(ResetEvent { step, entries: reset });
            }
        }

        records.push(StepRecord {
            step,
            lr,
            commit_loss: loss,
            perplexity: codebook::perplexity(cb.ema_counts.view())?,
            active_ratio: codebook::active_ratio(&cb.usage, 1),
        });
    }

    let convergence = match check_convergence(&records, config.convergence_window, config.convergence_rel_tol)
    {
        Ok(r) => r,
        Err(Error::InsufficientHistory { .. }) => {
            ConvergenceReport { status: ConvergenceStatus::NotEvaluated, stabilized: false }
        }
        Err(e) => return Err(e),
    };

    // fresh evaluation pass over the whole store with the frozen result
    let pipeline = Pipeline::new(params.clone(), cb.clone());
    let eval_usage = pipeline.eval_usage(store.data.view())?;
    let eval_counts = Array1::from_iter(eval_usage.iter().map(|&u| u as f64));
    let eval_perplexity = codebook::perplexity(eval_counts.view())?;
    let eval_active_ratio = codebook::active_ratio(&eval_usage, 1);

    let last = records.last().expect("at least one step");
    let summary = TrainSummary {
        steps: config.steps,
        k: config.k,
        final_commit_loss: last.commit_loss,
        final_perplexity: last.perplexity,
        eval_perplexity,
        final_active_ratio: last.active_ratio,
        eval_active_ratio,
        convergence: convergence.status,
        stabilized: convergence.stabilized,
    };
    let log = TrainLog { records, reset_events, summary };
    Ok((params, cb, log))
}

/// Outcome classification for one ablation row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationOutcome {
    /// active ratio below 5%
    Collapse,
    /// neither collapsed nor meeting both health thresholds
    Degraded,
    /// perplexity and active ratio both above their thresholds
    Stabilized,
}

impl AblationOutcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            AblationOutcome::Collapse => "collapse",
            AblationOutcome::Degraded => "degraded",
            AblationOutcome::Stabilized => "stabilized",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub gamma: f64,
    pub beta: f64,
    /// final training-time active ratio (usage counters at the last step)
    pub active_ratio: f64,
    /// end-of-training EMA perplexity
    pub perplexity: f64,
    pub outcome: AblationOutcome,
}

pub fn classify_outcome(config: &TrainConfig, summary: &TrainSummary) -> AblationOutcome {
    if summary.final_active_ratio < 0.05 {
        AblationOutcome::Collapse
    } else if summary.final_perplexity > config.perplexity_fraction * config.k as f64
        && summary.final_active_ratio > config.active_ratio_threshold
    {
        AblationOutcome::Stabilized
    } else {
        AblationOutcome::Degraded
    }
}

/// Trains each config independently on the same store and classifies the
/// outcomes.
pub fn ablation_grid(store: &LatentBatch, configs: &[TrainConfig]) -> Result<Vec<AblationRow>> {
    if configs.is_empty() {
        return Err(Error::Config("empty ablation grid".into()));
    }
    let mut rows = Vec::with_capacity(configs.len());
    for config in configs {
        let (_, _, log) = run_stage_a(store, config)?;
        rows.push(AblationRow {
            gamma: config.gamma,
            beta: config.beta,
            active_ratio: log.summary.final_active_ratio,
            perplexity: log.summary.final_perplexity,
            outcome: classify_outcome(config, &log.summary),
        });
    }
    Ok(rows)
}

/// CSV export of an ablation table.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("gamma,beta,active_ratio,perplexity,outcome\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            crate::jsonio::fmt_float(r.gamma),
            crate::jsonio::fmt_float(r.beta),
            crate::jsonio::fmt_float(r.active_ratio),
            crate::jsonio::fmt_float(r.perplexity),
            r.outcome.as_str(),
        ));
    }
    out
}
