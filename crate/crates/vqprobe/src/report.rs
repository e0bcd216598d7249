//! Diagnostic report and symbol dictionary.
//!
//! `run_diagnostics` drives the full battery over a frozen pipeline:
//! per-video symbol extraction, the repeated-run stability score, the
//! per-intervention association statistics at both analysis units, the
//! Gaussian-noise baseline, a fresh codebook-health evaluation pass, and
//! the pass table. Thresholds are embedded in the report so the artifact
//! is self-describing.

use ndarray::Array1;
use serde::Deserialize;

use crate::codebook::{active_ratio, perplexity};
use crate::error::{Error, Result};
use crate::jsonio::JsonWriter;
use crate::pipeline::Pipeline;
use crate::stats::{
    baseline_mi, build_contingency, chi_squared_test, h1_stability, jsd, mi_ratio,
    mutual_information, normalized_mi, AnalysisUnit, ContingencyMatrix, StabilityReport,
    VideoSymbols,
};
use crate::store::{LatentBatch, LatentHeader};
use crate::synth::{generate_baseline, BaselineSpec};
use crate::trainer::TrainSummary;

/// Pass thresholds. Defaults: chi-squared p below 0.01, MI ratio above 5,
/// stability above 0.95, evaluation active ratio above 30%.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub chi2_p: f64,
    pub mi_ratio: f64,
    pub stability: f64,
    pub active_ratio: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { chi2_p: 0.01, mi_ratio: 5.0, stability: 0.95, active_ratio: 0.30 }
    }
}

/// One named condition pair to contrast.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct InterventionSpec {
    pub name: String,
    pub condition_a: String,
    pub condition_b: String,
}

#[derive(Debug, Clone, Deserialize)]
struct InterventionsFile {
    interventions: Vec<InterventionSpec>,
}

pub fn interventions_from_json(text: &str) -> Result<Vec<InterventionSpec>> {
    let file: InterventionsFile = serde_json::from_str(text)
        .map_err(|e| Error::Config(format!("bad interventions spec: {e}")))?;
    Ok(file.interventions)
}

/// Association statistics for one condition pair at one analysis unit.
#[derive(Debug, Clone, PartialEq)]
pub struct InterventionResult {
    pub unit: AnalysisUnit,
    pub chi2: f64,
    pub df: u64,
    pub retained_symbols: usize,
    /// true when the table collapsed to a single retained column and the
    /// test defaults to p = 1
    pub degenerate: bool,
    pub p: f64,
    pub mi_bits: f64,
    pub nmi: f64,
    pub jsd: f64,
    pub mi_ratio: f64,
    pub pass: bool,
}

/// Both units' results for one intervention, plus the raw count tables.
#[derive(Debug, Clone, PartialEq)]
pub struct InterventionReport {
    pub name: String,
    pub condition_a: String,
    pub condition_b: String,
    pub video_mode: InterventionResult,
    pub token: InterventionResult,
    pub counts_video_mode: Vec<Vec<u64>>,
    pub counts_token: Vec<Vec<u64>>,
}

impl InterventionReport {
    pub fn at_unit(&self, unit: AnalysisUnit) -> &InterventionResult {
        match unit {
            AnalysisUnit::VideoMode => &self.video_mode,
            AnalysisUnit::Token => &self.token,
        }
    }
}

/// One pass-table row: a named criterion compared against its threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct PassRow {
    pub criterion: String,
    pub value: f64,
    pub threshold: f64,
    /// "<" or ">"
    pub comparison: &'static str,
    pub pass: bool,
}

/// Per-condition dominant-symbol mapping at the report's analysis unit.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionSymbols {
    pub condition: String,
    pub dominant_symbol: usize,
    pub dominant_mass: f64,
    pub distribution: Vec<f64>,
}

/// Codebook payload plus usage counters and the condition mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolDictionary {
    pub k: usize,
    pub d_proj: usize,
    pub unit: AnalysisUnit,
    pub codewords: Vec<Vec<f64>>,
    pub ema_counts: Vec<f64>,
    /// cumulative training-time usage
    pub usage: Vec<u64>,
    /// fresh assignment counts over the diagnosed store
    pub eval_usage: Vec<u64>,
    pub conditions: Vec<ConditionSymbols>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Report {
    pub unit: AnalysisUnit,
    pub thresholds: Thresholds,
    pub ln_eps: f64,
    pub training: TrainSummary,
    /// fresh evaluation over the diagnosed store
    pub eval_perplexity: f64,
    pub eval_active_ratio: f64,
    pub h1: StabilityReport,
    pub baseline_mi_bits: f64,
    pub baseline_count: usize,
    pub h2: Vec<InterventionReport>,
    pub pass_table: Vec<PassRow>,
    pub overall_pass: bool,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnoseOptions {
    pub unit: AnalysisUnit,
    pub repeats: usize,
    pub baseline_count: usize,
    pub baseline_seed: u64,
    /// Laplace smoothing for experiment MI
    pub alpha: f64,
    pub thresholds: Thresholds,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        DiagnoseOptions {
            unit: AnalysisUnit::VideoMode,
            repeats: 20,
            // large enough that the plug-in MI bias floor, roughly
            // (K-1)/(2 N ln 2), sits well below 1e-3 bits
            baseline_count: 16384,
            baseline_seed: 0,
            alpha: 1.0,
            thresholds: Thresholds::default(),
        }
    }
}

const TOKEN_UNIT_NOTE: &str = "token-unit statistics treat spatial tokens as independent \
observations; tokens within a video share context, so the effective sample size is closer \
to the video count and token-level p-values are upper bounds on significance";

/// Pure pass-table evaluation; kept separate so threshold logic is testable
/// in isolation.
pub fn evaluate_pass_table(
    h1_mean: f64,
    interventions: &[(String, f64, f64)], // (name, p, mi_ratio)
    eval_active_ratio: f64,
    thresholds: &Thresholds,
) -> (Vec<PassRow>, bool) {
    let mut rows = Vec::new();
    rows.push(PassRow {
        criterion: "h1_stability".into(),
        value: h1_mean,
        threshold: thresholds.stability,
        comparison: ">",
        pass: h1_mean > thresholds.stability,
    });
    for (name, p, _) in interventions {
        rows.push(PassRow {
            criterion: format!("chi2_p:{name}"),
            value: *p,
            threshold: thresholds.chi2_p,
            comparison: "<",
            pass: *p < thresholds.chi2_p,
        });
    }
    if !interventions.is_empty() {
        let min_ratio = interventions.iter().map(|(_, _, r)| *r).fold(f64::INFINITY, f64::min);
        rows.push(PassRow {
            criterion: "mi_ratio_min".into(),
            value: min_ratio,
            threshold: thresholds.mi_ratio,
            comparison: ">",
            pass: min_ratio > thresholds.mi_ratio,
        });
    }
    rows.push(PassRow {
        criterion: "active_ratio".into(),
        value: eval_active_ratio,
        threshold: thresholds.active_ratio,
        comparison: ">",
        pass: eval_active_ratio > thresholds.active_ratio,
    });
    let overall = rows.iter().all(|r| r.pass);
    (rows, overall)
}

fn result_for_unit(
    videos: &[VideoSymbols],
    pair: [&str; 2],
    k: usize,
    unit: AnalysisUnit,
    alpha: f64,
    baseline: f64,
    thresholds: &Thresholds,
) -> Result<(InterventionResult, ContingencyMatrix)> {
    let conditions = vec![pair[0].to_string(), pair[1].to_string()];
    let table = build_contingency(videos, &conditions, k, unit)?;
    let (chi2, df, retained, p, degenerate) = match chi_squared_test(&table) {
        Ok(r) => (r.chi2, r.df, r.retained, r.p, false),
        // single retained column: no association measurable, default p = 1
        Err(Error::DegenerateTable(_)) => (0.0, 0, 1, 1.0, true),
        Err(e) => return Err(e),
    };
    let mi = mutual_information(table.counts.view(), alpha)?;
    let nmi = normalized_mi(mi, k);
    let rows: Vec<Vec<f64>> = (0..2)
        .map(|i| {
            let total: u64 = table.counts.row(i).iter().sum();
            table.counts.row(i).iter().map(|&c| c as f64 / total.max(1) as f64).collect()
        })
        .collect();
    let jsd_val = jsd(&rows[0], &rows[1])?;
    let ratio = mi_ratio(mi, baseline);
    let pass = p < thresholds.chi2_p && ratio > thresholds.mi_ratio;
    Ok((
        InterventionResult {
            unit,
            chi2,
            df,
            retained_symbols: retained,
            degenerate,
            p,
            mi_bits: mi,
            nmi,
            jsd: jsd_val,
            mi_ratio: ratio,
            pass,
        },
        table,
    ))
}

fn counts_to_rows(table: &ContingencyMatrix) -> Vec<Vec<u64>> {
    table.counts.outer_iter().map(|r| r.to_vec()).collect()
}

/// Condition-to-dominant-symbol mapping at the chosen unit.
fn condition_symbols(
    videos: &[VideoSymbols],
    conditions: &[String],
    k: usize,
    unit: AnalysisUnit,
) -> Result<Vec<ConditionSymbols>> {
    let table = build_contingency(videos, conditions, k, unit)?;
    let mut out = Vec::new();
    for (i, label) in conditions.iter().enumerate() {
        let row = table.counts.row(i);
        let total: u64 = row.iter().sum();
        let mut dominant = 0usize;
        for (s, &c) in row.iter().enumerate() {
            if c > row[dominant] {
                dominant = s;
            }
        }
        let distribution: Vec<f64> = row.iter().map(|&c| c as f64 / total.max(1) as f64).collect();
        out.push(ConditionSymbols {
            condition: label.clone(),
            dominant_symbol: dominant,
            dominant_mass: distribution[dominant],
            distribution,
        });
    }
    Ok(out)
}

/// Runs the full diagnostic battery.
pub fn run_diagnostics(
    header: &LatentHeader,
    batch: &LatentBatch,
    pipeline: &Pipeline,
    training: &TrainSummary,
    interventions: &[InterventionSpec],
    opts: &DiagnoseOptions,
) -> Result<(Stage1Report, SymbolDictionary)> {
    header.validate()?;
    if header.count == 0 {
        return Err(Error::Empty("cannot diagnose an empty store".into()));
    }
    if header.dim != pipeline.params.dim() {
        return Err(Error::Config(format!(
            "store dim {} does not match checkpoint dim {}",
            header.dim,
            pipeline.params.dim()
        )));
    }
    let k = pipeline.k();
    let known = header.conditions();
    for iv in interventions {
        for cond in [&iv.condition_a, &iv.condition_b] {
            if !known.contains(cond) {
                return Err(Error::UnknownCondition(cond.clone()));
            }
        }
    }

    // per-video symbols, one pass
    let mut videos = Vec::with_capacity(header.videos.len());
    for rec in &header.videos {
        let symbols = pipeline.assign_rows(batch.video_rows(rec))?;
        videos.push(VideoSymbols {
            video_id: rec.id.clone(),
            condition: rec.condition.clone(),
            symbols,
        });
    }

    // H1: repeated-run stability per video
    let mut per_video = Vec::with_capacity(header.videos.len());
    for rec in &header.videos {
        per_video.push(h1_stability(pipeline, batch.video_rows(rec), opts.repeats)?);
    }
    let h1 = StabilityReport::from_scores(per_video, opts.repeats);

    // Gaussian-noise baseline through the same frozen pipeline
    let noise = generate_baseline(&BaselineSpec {
        dim: header.dim,
        count: opts.baseline_count,
        seed: opts.baseline_seed,
    })?;
    let baseline = baseline_mi(pipeline, noise.data.view())?;

    // per-intervention association statistics at both units
    let mut h2 = Vec::with_capacity(interventions.len());
    for iv in interventions {
        let pair = [iv.condition_a.as_str(), iv.condition_b.as_str()];
        let (video_mode, table_v) =
            result_for_unit(&videos, pair, k, AnalysisUnit::VideoMode, opts.alpha, baseline, &opts.thresholds)?;
        let (token, table_t) =
            result_for_unit(&videos, pair, k, AnalysisUnit::Token, opts.alpha, baseline, &opts.thresholds)?;
        h2.push(InterventionReport {
            name: iv.name.clone(),
            condition_a: iv.condition_a.clone(),
            condition_b: iv.condition_b.clone(),
            video_mode,
            token,
            counts_video_mode: counts_to_rows(&table_v),
            counts_token: counts_to_rows(&table_t),
        });
    }

    // fresh codebook-health evaluation over this store
    let eval_usage = pipeline.eval_usage(batch.data.view())?;
    let eval_counts = Array1::from_iter(eval_usage.iter().map(|&u| u as f64));
    let eval_perplexity = perplexity(eval_counts.view())?;
    let eval_active_ratio = active_ratio(&eval_usage, 1);

    let selected: Vec<(String, f64, f64)> = h2
        .iter()
        .map(|r| {
            let u = r.at_unit(opts.unit);
            (r.name.clone(), u.p, u.mi_ratio)
        })
        .collect();
    // the active-ratio criterion gates on the training-time counter, the
    // same statistic the ablation table reports
    let (pass_table, overall_pass) =
        evaluate_pass_table(h1.mean, &selected, training.final_active_ratio, &opts.thresholds);

    let report = Stage1Report {
        unit: opts.unit,
        thresholds: opts.thresholds,
        ln_eps: pipeline.params.ln_eps,
        training: training.clone(),
        eval_perplexity,
        eval_active_ratio,
        h1,
        baseline_mi_bits: baseline,
        baseline_count: opts.baseline_count,
        h2,
        pass_table,
        overall_pass,
        notes: vec![TOKEN_UNIT_NOTE.to_string()],
    };

    let dictionary = SymbolDictionary {
        k,
        d_proj: pipeline.params.d_proj(),
        unit: opts.unit,
        codewords: pipeline.codebook.codewords.outer_iter().map(|r| r.to_vec()).collect(),
        ema_counts: pipeline.codebook.ema_counts.to_vec(),
        usage: pipeline.codebook.usage.clone(),
        eval_usage,
        conditions: condition_symbols(&videos, &known, k, opts.unit)?,
    };
    Ok((report, dictionary))
}

// ---------------------------------------------------------------------------
// JSON emission
// ---------------------------------------------------------------------------

fn write_intervention_result(w: &mut JsonWriter, r: &InterventionResult) {
    w.begin_obj();
    w.key("unit").str_val(r.unit.as_str());
    w.key("chi2").float(r.chi2);
    w.key("df").uint(r.df);
    w.key("retained_symbols").uint(r.retained_symbols as u64);
    w.key("degenerate").boolean(r.degenerate);
    w.key("p").float(r.p);
    w.key("mi_bits").float(r.mi_bits);
    w.key("nmi").float(r.nmi);
    w.key("jsd").float(r.jsd);
    w.key("mi_ratio").float(r.mi_ratio);
    w.key("pass").boolean(r.pass);
    w.end_obj();
}

fn write_counts(w: &mut JsonWriter, counts: &[Vec<u64>]) {
    w.begin_arr();
    for row in counts {
        w.uint_row(row);
    }
    w.end_arr();
}

pub fn report_to_json(report: &Stage1Report) -> String {
    let mut w = JsonWriter::new();
    w.begin_obj();
    w.key("schema_version").uint(1);
    w.key("unit").str_val(report.unit.as_str());

    w.key("thresholds").begin_obj();
    w.key("chi2_p").float(report.thresholds.chi2_p);
    w.key("mi_ratio").float(report.thresholds.mi_ratio);
    w.key("stability").float(report.thresholds.stability);
    w.key("active_ratio").float(report.thresholds.active_ratio);
    w.end_obj();

    w.key("projection_normalization").begin_obj();
    w.key("variance").str_val("population");
    w.key("ln_eps").float(report.ln_eps);
    w.end_obj();

    w.key("training").begin_obj();
    w.key("steps").uint(report.training.steps);
    w.key("k").uint(report.training.k as u64);
    w.key("final_commit_loss").float(report.training.final_commit_loss);
    w.key("final_perplexity").float(report.training.final_perplexity);
    w.key("eval_perplexity").float(report.training.eval_perplexity);
    w.key("final_active_ratio").float(report.training.final_active_ratio);
    w.key("eval_active_ratio").float(report.training.eval_active_ratio);
    w.key("convergence").str_val(report.training.convergence.as_str());
    w.key("stabilized").boolean(report.training.stabilized);
    w.end_obj();

    w.key("evaluation").begin_obj();
    w.key("perplexity").float(report.eval_perplexity);
    w.key("active_ratio").float(report.eval_active_ratio);
    w.end_obj();

    w.key("h1").begin_obj();
    w.key("repeats").uint(report.h1.repeats as u64);
    w.key("per_video").float_row(&report.h1.per_video);
    w.key("mean").float(report.h1.mean);
    w.end_obj();

    w.key("baseline_mi_bits").float(report.baseline_mi_bits);
    w.key("baseline_count").uint(report.baseline_count as u64);

    w.key("h2").begin_arr();
    for iv in &report.h2 {
        w.begin_obj();
        w.key("intervention").str_val(&iv.name);
        w.key("condition_a").str_val(&iv.condition_a);
        w.key("condition_b").str_val(&iv.condition_b);
        w.key("video_mode");
        write_intervention_result(&mut w, &iv.video_mode);
        w.key("token");
        write_intervention_result(&mut w, &iv.token);
        w.key("counts_video_mode");
        write_counts(&mut w, &iv.counts_video_mode);
        w.key("counts_token");
        write_counts(&mut w, &iv.counts_token);
        w.end_obj();
    }
    w.end_arr();

    w.key("pass_table").begin_arr();
    for row in &report.pass_table {
        w.begin_obj();
        w.key("criterion").str_val(&row.criterion);
        w.key("value").float(row.value);
        w.key("threshold").float(row.threshold);
        w.key("comparison").str_val(row.comparison);
        w.key("pass").boolean(row.pass);
        w.end_obj();
    }
    w.end_arr();

    w.key("overall_pass").boolean(report.overall_pass);
    w.key("notes").begin_arr();
    for n in &report.notes {
        w.str_val(n);
    }
    w.end_arr();
    w.end_obj();
    w.finish()
}

pub fn dictionary_to_json(dict: &SymbolDictionary) -> String {
    let mut w = JsonWriter::new();
    w.begin_obj();
    w.key("schema_version").uint(1);
    w.key("k").uint(dict.k as u64);
    w.key("d_proj").uint(dict.d_proj as u64);
    w.key("unit").str_val(dict.unit.as_str());
    w.key("codewords").begin_arr();
    for row in &dict.codewords {
        w.float_row(row);
    }
    w.end_arr();
    w.key("ema_counts").float_row(&dict.ema_counts);
    w.key("usage").uint_row(&dict.usage);
    w.key("eval_usage").uint_row(&dict.eval_usage);
    w.key("conditions").begin_arr();
    for c in &dict.conditions {
        w.begin_obj();
        w.key("condition").str_val(&c.condition);
        w.key("dominant_symbol").uint(c.dominant_symbol as u64);
        w.key("dominant_mass").float(c.dominant_mass);
        w.key("distribution").float_row(&c.distribution);
        w.end_obj();
    }
    w.end_arr();
    w.end_obj();
    w.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pass_table_happy_path() {
        let interventions = vec![
            ("grasp".to_string(), 1e-4, 100.0),
            ("motion".to_string(), 1e-11, 1000.0),
        ];
        let (rows, overall) =
            evaluate_pass_table(1.0, &interventions, 0.625, &Thresholds::default());
        assert!(overall);
        assert_eq!(rows.len(), 5); // h1 + 2 chi2 + ratio + active
        assert!(rows.iter().all(|r| r.pass));
        let ratio_row = rows.iter().find(|r| r.criterion == "mi_ratio_min").unwrap();
        assert_eq!(ratio_row.value, 100.0); // minimum across interventions
    }

    #[test]
    fn pass_table_without_interventions_has_no_h2_rows() {
        let (rows, overall) = evaluate_pass_table(1.0, &[], 0.5, &Thresholds::default());
        assert_eq!(rows.len(), 2);
        assert!(overall);
    }

    proptest! {
        /// Perturbing any single metric across its threshold flips that
        /// row's flag and keeps overall == AND of rows.
        #[test]
        fn pass_flags_flip_at_thresholds(
            h1 in 0.0f64..1.0,
            p in 1e-6f64..1.0,
            ratio in 0.0f64..100.0,
            active in 0.0f64..1.0,
        ) {
            let t = Thresholds::default();
            let iv = vec![("x".to_string(), p, ratio)];
            let (rows, overall) = evaluate_pass_table(h1, &iv, active, &t);
            prop_assert_eq!(rows[0].pass, h1 > t.stability);
            prop_assert_eq!(rows[1].pass, p < t.chi2_p);
            prop_assert_eq!(rows[2].pass, ratio > t.mi_ratio);
            prop_assert_eq!(rows[3].pass, active > t.active_ratio);
            prop_assert_eq!(overall, rows.iter().all(|r| r.pass));

            // reflect each metric across its threshold; the row must flip
            let (rows2, _) = evaluate_pass_table(2.0 * t.stability - h1, &iv, active, &t);
            if (h1 - t.stability).abs() > 1e-12 {
                prop_assert_ne!(rows[0].pass, rows2[0].pass);
            }
            let iv_flip = vec![("x".to_string(), p, 2.0 * t.mi_ratio - ratio)];
            let (rows3, _) = evaluate_pass_table(h1, &iv_flip, active, &t);
            if (ratio - t.mi_ratio).abs() > 1e-12 {
                prop_assert_ne!(rows[2].pass, rows3[2].pass);
            }
        }
    }
}
