//! Hand-emitted SVG plots: training curves, per-condition symbol
//! histograms, and the significance bar chart.
//!
//! No plotting dependency; geometry is fixed and floats are formatted with
//! two decimals, so output is byte-stable. Golden tests check structure
//! (element counts, reference-line coordinates), not pixels.

use crate::error::{Error, Result};
use crate::trainer::StepRecord;

pub const WIDTH: f64 = 640.0;
pub const HEIGHT: f64 = 400.0;
pub const MARGIN_LEFT: f64 = 64.0;
pub const MARGIN_RIGHT: f64 = 24.0;
pub const MARGIN_TOP: f64 = 36.0;
pub const MARGIN_BOTTOM: f64 = 48.0;

/// Ceiling for -log10(p); underflowed p-values clamp here.
pub const NEG_LOG_P_CEILING: f64 = 16.0;

fn fmt(v: f64) -> String {
    format!("{:.2}", v)
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        let span = (self.x_max - self.x_min).max(1e-12);
        MARGIN_LEFT + (v - self.x_min) / span * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        let span = (self.y_max - self.y_min).max(1e-12);
        HEIGHT - MARGIN_BOTTOM - (v - self.y_min) / span * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

struct Svg {
    body: String,
}

impl Svg {
    fn new(title: &str) -> Svg {
        let mut body = String::new();
        body.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n",
            w = WIDTH,
            h = HEIGHT
        ));
        body.push_str(&format!(
            "  <rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"white\"/>\n",
            WIDTH, HEIGHT
        ));
        body.push_str(&format!(
            "  <text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
            WIDTH / 2.0,
            title
        ));
        Svg { body }
    }

    fn axes(&mut self, x_label: &str, y_label: &str) {
        self.line(MARGIN_LEFT, HEIGHT - MARGIN_BOTTOM, WIDTH - MARGIN_RIGHT, HEIGHT - MARGIN_BOTTOM, "black", None);
        self.line(MARGIN_LEFT, MARGIN_TOP, MARGIN_LEFT, HEIGHT - MARGIN_BOTTOM, "black", None);
        self.body.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
            (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0,
            HEIGHT - 10.0,
            x_label
        ));
        self.body.push_str(&format!(
            "  <text x=\"16\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
            (MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0,
            (MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0,
            y_label
        ));
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, dash: Option<&str>) {
        let dash_attr = dash.map(|d| format!(" stroke-dasharray=\"{d}\"")).unwrap_or_default();
        self.body.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\"{}/>\n",
            fmt(x1),
            fmt(y1),
            fmt(x2),
            fmt(y2),
            stroke,
            dash_attr
        ));
    }

    fn polyline(&mut self, points: &[(f64, f64)], stroke: &str) {
        let pts: Vec<String> =
            points.iter().map(|(x, y)| format!("{},{}", fmt(*x), fmt(*y))).collect();
        self.body.push_str(&format!(
            "  <polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
            pts.join(" "),
            stroke
        ));
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        self.body.push_str(&format!(
            "  <rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>\n",
            fmt(x),
            fmt(y),
            fmt(w),
            fmt(h),
            fill
        ));
    }

    fn label(&mut self, x: f64, y: f64, anchor: &str, text: &str) {
        self.body.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"{}\">{}</text>\n",
            fmt(x),
            fmt(y),
            anchor,
            text
        ));
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

/// Commitment-loss curve over training steps.
pub fn loss_curve_svg(records: &[StepRecord]) -> Result<String> {
    if records.is_empty() {
        return Err(Error::Empty("no records to plot".into()));
    }
    let y_max = records.iter().map(|r| r.commit_loss).fold(0.0f64, f64::max).max(1e-12);
    let frame = Frame {
        x_min: records[0].step as f64,
        x_max: records.last().unwrap().step as f64,
        y_min: 0.0,
        y_max: y_max * 1.05,
    };
    let mut svg = Svg::new("Commitment loss");
    svg.axes("step", "loss");
    let points: Vec<(f64, f64)> =
        records.iter().map(|r| (frame.x(r.step as f64), frame.y(r.commit_loss))).collect();
    svg.polyline(&points, "steelblue");
    svg.label(MARGIN_LEFT, MARGIN_TOP - 6.0, "start", &format!("max {:.3e}", y_max));
    Ok(svg.finish())
}

/// Perplexity curve with the health-threshold line at `0.4 k` (dashed) and
/// the theoretical maximum at `k` (dotted).
pub fn perplexity_curve_svg(records: &[StepRecord], k: usize) -> Result<String> {
    if records.is_empty() {
        return Err(Error::Empty("no records to plot".into()));
    }
    let threshold = 0.4 * k as f64;
    let frame = Frame {
        x_min: records[0].step as f64,
        x_max: records.last().unwrap().step as f64,
        y_min: 0.0,
        y_max: k as f64 * 1.05,
    };
    let mut svg = Svg::new("Codebook perplexity");
    svg.axes("step", "perplexity");
    let y_thresh = frame.y(threshold);
    let y_max_line = frame.y(k as f64);
    svg.line(MARGIN_LEFT, y_thresh, WIDTH - MARGIN_RIGHT, y_thresh, "crimson", Some("6 3"));
    svg.line(MARGIN_LEFT, y_max_line, WIDTH - MARGIN_RIGHT, y_max_line, "gray", Some("2 3"));
    let points: Vec<(f64, f64)> =
        records.iter().map(|r| (frame.x(r.step as f64), frame.y(r.perplexity))).collect();
    svg.polyline(&points, "steelblue");
    svg.label(WIDTH - MARGIN_RIGHT, y_thresh - 4.0, "end", &format!("threshold {:.1}", threshold));
    svg.label(WIDTH - MARGIN_RIGHT, y_max_line - 4.0, "end", &format!("max {k}"));
    Ok(svg.finish())
}

/// Pixel y-coordinate of a horizontal line at value `v` on a [0, v_max]
/// axis; exposed so structural tests can predict reference coordinates.
pub fn y_on_axis(v: f64, v_max: f64) -> f64 {
    let frame = Frame { x_min: 0.0, x_max: 1.0, y_min: 0.0, y_max: v_max };
    frame.y(v)
}

/// Side-by-side per-condition symbol histogram for one intervention.
pub fn symbol_histogram_svg(
    intervention: &str,
    conditions: [&str; 2],
    counts: &[Vec<u64>],
) -> Result<String> {
    if counts.len() != 2 || counts[0].len() != counts[1].len() || counts[0].is_empty() {
        return Err(Error::Shape("histogram needs two equal-length count rows".into()));
    }
    let k = counts[0].len();
    let totals: Vec<f64> = counts.iter().map(|r| r.iter().sum::<u64>().max(1) as f64).collect();
    let mut svg = Svg::new(&format!("Symbol distribution: {intervention}"));
    svg.axes("symbol", "frequency");
    let frame = Frame { x_min: 0.0, x_max: k as f64, y_min: 0.0, y_max: 1.05 };
    let slot = (WIDTH - MARGIN_LEFT - MARGIN_RIGHT) / k as f64;
    let bar = slot * 0.38;
    let colors = ["steelblue", "darkorange"];
    for s in 0..k {
        for c in 0..2 {
            let f = counts[c][s] as f64 / totals[c];
            let x = frame.x(s as f64) + slot * 0.08 + c as f64 * bar;
            let y = frame.y(f);
            svg.rect(x, y, bar, (HEIGHT - MARGIN_BOTTOM) - y, colors[c]);
        }
        svg.label(frame.x(s as f64) + slot / 2.0, HEIGHT - MARGIN_BOTTOM + 16.0, "middle", &s.to_string());
    }
    svg.label(MARGIN_LEFT + 8.0, MARGIN_TOP + 4.0, "start", &format!("{} (blue)", conditions[0]));
    svg.label(MARGIN_LEFT + 8.0, MARGIN_TOP + 18.0, "start", &format!("{} (orange)", conditions[1]));
    Ok(svg.finish())
}

/// Bar chart of -log10(p) per intervention with the significance reference
/// line at -log10(0.01) = 2. Underflowed p-values clamp to the ceiling.
pub fn significance_svg(entries: &[(String, f64)], p_threshold: f64) -> Result<String> {
    if entries.is_empty() {
        return Err(Error::Empty("no interventions to plot".into()));
    }
    let reference = -p_threshold.log10();
    let frame = Frame {
        x_min: 0.0,
        x_max: entries.len() as f64,
        y_min: 0.0,
        y_max: NEG_LOG_P_CEILING,
    };
    let mut svg = Svg::new("Association significance");
    svg.axes("intervention", "-log10(p)");
    let y_ref = frame.y(reference);
    svg.line(MARGIN_LEFT, y_ref, WIDTH - MARGIN_RIGHT, y_ref, "crimson", Some("6 3"));
    svg.label(WIDTH - MARGIN_RIGHT, y_ref - 4.0, "end", &format!("p = {p_threshold}"));
    let slot = (WIDTH - MARGIN_LEFT - MARGIN_RIGHT) / entries.len() as f64;
    for (i, (name, p)) in entries.iter().enumerate() {
        let v = if *p <= 0.0 {
            NEG_LOG_P_CEILING
        } else {
            (-p.log10()).min(NEG_LOG_P_CEILING)
        };
        let x = frame.x(i as f64) + slot * 0.25;
        let y = frame.y(v);
        svg.rect(x, y, slot * 0.5, (HEIGHT - MARGIN_BOTTOM) - y, "steelblue");
        svg.label(frame.x(i as f64) + slot / 2.0, HEIGHT - MARGIN_BOTTOM + 16.0, "middle", name);
    }
    Ok(svg.finish())
}
