//! H1/H2 statistical battery.
//!
//! Symbol-vs-condition association is tested three ways: a chi-squared
//! independence test with exact p-values from the regularized upper
//! incomplete gamma function, a Laplace-smoothed plug-in mutual-information
//! estimate in bits, and the pairwise Jensen-Shannon divergence between
//! condition distributions. A Gaussian-noise baseline MI anchors the MI
//! ratio. H1 is the pipeline-determinism score: the fraction of repeated
//! runs whose per-video mode symbol matches the first run.
//!
//! Two analysis units exist: `VideoMode` counts one mode symbol per video,
//! `Token` counts every spatial token. Token-level counts treat tokens as
//! independent observations, which overstates the effective sample size;
//! reports carry both units.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::pipeline::Pipeline;

/// Which observation unit fills the contingency table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalysisUnit {
    VideoMode,
    Token,
}

impl AnalysisUnit {
    pub fn as_str(&self) -> &'static str {
        match self {
            AnalysisUnit::VideoMode => "video_mode",
            AnalysisUnit::Token => "token",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "video" | "video_mode" => Ok(AnalysisUnit::VideoMode),
            "token" => Ok(AnalysisUnit::Token),
            other => Err(Error::Config(format!("unknown analysis unit {other:?}"))),
        }
    }
}

/// Observed condition-by-symbol counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ContingencyMatrix {
    pub counts: Array2<u64>,
    pub condition_labels: Vec<String>,
    pub unit: AnalysisUnit,
}

/// One video's symbol sequence plus its condition label.
#[derive(Debug, Clone)]
pub struct VideoSymbols {
    pub video_id: String,
    pub condition: String,
    pub symbols: Vec<usize>,
}

/// Most frequent symbol; ties break to the lowest index.
pub fn mode_symbol(symbols: &[usize]) -> Result<usize> {
    if symbols.is_empty() {
        return Err(Error::Empty("mode of empty symbol sequence".into()));
    }
    let k = symbols.iter().max().unwrap() + 1;
    let mut hist = vec![0usize; k];
    for &s in symbols {
        hist[s] += 1;
    }
    let mut best = 0;
    for (s, &c) in hist.iter().enumerate() {
        if c > hist[best] {
            best = s;
        }
    }
    Ok(best)
}

/// Builds the observed frequency matrix for the chosen unit.
pub fn build_contingency(
    videos: &[VideoSymbols],
    conditions: &[String],
    k: usize,
    unit: AnalysisUnit,
) -> Result<ContingencyMatrix> {
    let mut counts = Array2::<u64>::zeros((conditions.len(), k));
    let mut seen = vec![0usize; conditions.len()];
    for v in videos {
        let c = conditions
            .iter()
            .position(|l| l == &v.condition)
            .ok_or_else(|| Error::UnknownCondition(v.condition.clone()))?;
        seen[c] += 1;
        match unit {
            AnalysisUnit::VideoMode => {
                let m = mode_symbol(&v.symbols)?;
                counts[(c, m)] += 1;
            }
            AnalysisUnit::Token => {
                for &s in &v.symbols {
                    counts[(c, s)] += 1;
                }
            }
        }
    }
    for (c, &n) in seen.iter().enumerate() {
        if n == 0 {
            return Err(Error::DegenerateTable(format!(
                "condition {:?} has zero videos",
                conditions[c]
            )));
        }
    }
    Ok(ContingencyMatrix { counts, condition_labels: conditions.to_vec(), unit })
}

// ---------------------------------------------------------------------------
// Regularized incomplete gamma (for the chi-squared survival function)
// ---------------------------------------------------------------------------

/// Lanczos log-gamma.
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 6] = [
        76.180_091_729_471_46,
        -86.505_320_329_416_77,
        24.014_098_240_830_91,
        -1.231_739_572_450_155,
        0.120_865_097_386_617_9e-2,
        -0.539_523_938_495_3e-5,
    ];
    let tmp = x + 5.5;
    let tmp = tmp - (x + 0.5) * tmp.ln();
    let mut ser = 1.000_000_000_190_015;
    for (j, &c) in COEFFS.iter().enumerate() {
        ser += c / (x + 1.0 + j as f64);
    }
    -tmp + (2.506_628_274_631_000_5 * ser / x).ln()
}

/// P(a, x) via the series expansion; converges fast for x < a + 1.
fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    for n in 1..500 {
        term *= x / (a + n as f64);
        sum += term;
        if term.abs() < sum.abs() * 1e-15 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// Q(a, x) via Lentz's continued fraction; converges fast for x >= a + 1.
fn gamma_q_cf(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-15 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_cf(a, x)
    }
}

/// Chi-squared survival function: P(X >= chi2) for `df` degrees of freedom.
pub fn chi2_sf(chi2: f64, df: u64) -> f64 {
    gamma_q(df as f64 / 2.0, chi2 / 2.0)
}

/// Chi-squared test result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquared {
    pub chi2: f64,
    pub df: u64,
    pub p: f64,
    /// number of symbol columns retained (nonzero total)
    pub retained: usize,
}

/// Independence test on an observed matrix. Symbol columns with zero total
/// are dropped before computing expected counts, and `df` reflects the
/// retained columns. Tables with fewer than two rows, a zero row total, or
/// fewer than two retained columns are degenerate.
pub fn chi_squared_test(table: &ContingencyMatrix) -> Result<ChiSquared> {
    let o = &table.counts;
    let c = o.nrows();
    if c < 2 {
        return Err(Error::DegenerateTable("need at least two conditions".into()));
    }
    let row_totals: Vec<f64> = o.outer_iter().map(|r| r.iter().map(|&x| x as f64).sum()).collect();
    if row_totals.iter().any(|&r| r <= 0.0) {
        return Err(Error::DegenerateTable("zero row total".into()));
    }
    let col_totals: Vec<f64> = (0..o.ncols())
        .map(|j| o.column(j).iter().map(|&x| x as f64).sum())
        .collect();
    let retained: Vec<usize> = (0..o.ncols()).filter(|&j| col_totals[j] > 0.0).collect();
    if retained.len() < 2 {
        return Err(Error::DegenerateTable("fewer than two retained symbol columns".into()));
    }
    let n: f64 = row_totals.iter().sum();
    let mut chi2 = 0.0;
    for (i, &r) in row_totals.iter().enumerate() {
        for &j in &retained {
            let e = r * col_totals[j] / n;
            let diff = o[(i, j)] as f64 - e;
            chi2 += diff * diff / e;
        }
    }
    let df = ((c - 1) * (retained.len() - 1)) as u64;
    Ok(ChiSquared { chi2, df, p: chi2_sf(chi2, df), retained: retained.len() })
}

// ---------------------------------------------------------------------------
// Information-theoretic measures (all base 2)
// ---------------------------------------------------------------------------

/// Plug-in mutual information in bits over the add-alpha smoothed joint
/// distribution. Marginals come from the smoothed joint; alpha = 0 is the
/// raw plug-in estimate.
pub fn mutual_information(counts: ArrayView2<'_, u64>, alpha: f64) -> Result<f64> {
    let total_raw: u64 = counts.iter().sum();
    if total_raw == 0 && alpha == 0.0 {
        return Err(Error::Empty("mutual information of an empty table".into()));
    }
    let (rows, cols) = (counts.nrows(), counts.ncols());
    let total = total_raw as f64 + alpha * (rows * cols) as f64;
    if total <= 0.0 {
        return Err(Error::Empty("mutual information of an empty table".into()));
    }
    let mut p_row = vec![0.0; rows];
    let mut p_col = vec![0.0; cols];
    for i in 0..rows {
        for j in 0..cols {
            let p = (counts[(i, j)] as f64 + alpha) / total;
            p_row[i] += p;
            p_col[j] += p;
        }
    }
    let mut mi = 0.0;
    for i in 0..rows {
        for j in 0..cols {
            let p = (counts[(i, j)] as f64 + alpha) / total;
            if p > 0.0 {
                mi += p * (p / (p_row[i] * p_col[j])).log2();
            }
        }
    }
    // clamp the tiny negative rounding residue; MI is non-negative
    Ok(mi.max(0.0))
}

/// Normalized MI: `mi_bits / log2(k)`.
pub fn normalized_mi(mi_bits: f64, k: usize) -> f64 {
    debug_assert!(k >= 2);
    mi_bits / (k as f64).log2()
}

/// Jensen-Shannon divergence between two distributions, base 2 so the
/// range is [0, 1]. Zero-mass terms contribute nothing.
pub fn jsd(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape("jsd length mismatch".into()));
    }
    for (name, dist) in [("p", p), ("q", q)] {
        let sum: f64 = dist.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || dist.iter().any(|&x| x < 0.0) {
            return Err(Error::Shape(format!("{name} is not a distribution (sum {sum})")));
        }
    }
    let mut acc = 0.0;
    for (&pi, &qi) in p.iter().zip(q.iter()) {
        let m = 0.5 * (pi + qi);
        if pi > 0.0 {
            acc += 0.5 * pi * (pi / m).log2();
        }
        if qi > 0.0 {
            acc += 0.5 * qi * (qi / m).log2();
        }
    }
    Ok(acc.max(0.0))
}

pub const MI_RATIO_EPS: f64 = 1e-8;

/// Experiment MI over (baseline MI + epsilon).
pub fn mi_ratio(mi_experiment: f64, mi_baseline: f64) -> f64 {
    mi_experiment / (mi_baseline + MI_RATIO_EPS)
}

/// Noise-floor MI: pushes a Gaussian batch through the frozen pipeline,
/// splits the rows into two pseudo-conditions by half, and computes the raw
/// (alpha = 0) MI of the resulting table. Structure-free input should carry
/// no condition information.
pub fn baseline_mi(pipeline: &Pipeline, noise: ArrayView2<'_, f32>) -> Result<f64> {
    if noise.nrows() < 2 {
        return Err(Error::Empty("baseline batch needs at least two rows".into()));
    }
    let symbols = pipeline.assign_rows(noise)?;
    let half = symbols.len() / 2;
    let mut counts = Array2::<u64>::zeros((2, pipeline.k()));
    for (i, &s) in symbols.iter().enumerate() {
        let row = if i < half { 0 } else { 1 };
        counts[(row, s)] += 1;
    }
    mutual_information(counts.view(), 0.0)
}

// ---------------------------------------------------------------------------
// H1 stability
// ---------------------------------------------------------------------------

/// Stability over repeated runs: fraction of runs whose mode symbol equals
/// the first run's. `run(m)` produces the mode symbol of repeat `m`.
pub fn stability_over_runs(
    repeats: usize,
    mut run: impl FnMut(usize) -> Result<usize>,
) -> Result<f64> {
    if repeats == 0 {
        return Err(Error::Empty("stability needs at least one repeat".into()));
    }
    let first = run(0)?;
    let mut matches = 1usize;
    for m in 1..repeats {
        if run(m)? == first {
            matches += 1;
        }
    }
    Ok(matches as f64 / repeats as f64)
}

/// H1 for one video under the frozen pipeline. The pipeline is borrowed
/// immutably for the whole measurement, so state cannot change between
/// repeats; for a deterministic pipeline the score is exactly 1.
pub fn h1_stability(
    pipeline: &Pipeline,
    video_rows: ArrayView2<'_, f32>,
    repeats: usize,
) -> Result<f64> {
    stability_over_runs(repeats, |_| pipeline.video_mode(video_rows))
}

/// Per-video stability scores and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub per_video: Vec<f64>,
    pub mean: f64,
    pub repeats: usize,
}

impl StabilityReport {
    pub fn from_scores(per_video: Vec<f64>, repeats: usize) -> Self {
        let mean = if per_video.is_empty() {
            0.0
        } else {
            per_video.iter().sum::<f64>() / per_video.len() as f64
        };
        StabilityReport { per_video, mean, repeats }
    }
}
