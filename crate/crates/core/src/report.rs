//! CSV and SVG output.
//!
//! Floats are written with 17 significant digits (`{:.16e}`), which
//! round-trips every `f64`; `-inf` marks singular results. Lines end in `\n`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::detcore::{DecompositionTrace, StepRecord};
use crate::diagnostics::LemmaReport;
use crate::ensembles::std_normal_pdf;
use crate::error::{Error, Result};
use crate::experiments::TrialRecord;

pub fn format_float(x: f64) -> String {
    if x == f64::NEG_INFINITY {
        "-inf".to_string()
    } else if x == f64::INFINITY {
        "inf".to_string()
    } else if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.16e}")
    }
}

/// A row type with a fixed CSV header.
pub trait CsvRecord {
    const HEADER: &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

impl CsvRecord for TrialRecord {
    const HEADER: &'static [&'static str] =
        &["n", "trial_index", "statistic", "log_abs_det", "sign", "degenerate"];

    fn fields(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            self.trial_index.to_string(),
            format_float(self.statistic),
            format_float(self.log_abs_det),
            self.sign.to_string(),
            self.degenerate.to_string(),
        ]
    }
}

impl CsvRecord for LemmaReport {
    const HEADER: &'static [&'static str] = &[
        "lemma_id",
        "n",
        "trials",
        "observed",
        "predicted",
        "std_error",
        "pass",
        "notes",
    ];

    fn fields(&self) -> Vec<String> {
        vec![
            self.lemma_id.clone(),
            self.n.to_string(),
            self.trials.to_string(),
            format_float(self.observed),
            format_float(self.predicted),
            format_float(self.std_error),
            self.pass.to_string(),
            self.notes(),
        ]
    }
}

/// Trace rows; diagnostics columns are empty when not computed.
impl CsvRecord for StepRecord {
    const HEADER: &'static [&'static str] = &["i", "k", "delta_sq", "x", "r", "qss_sq_sum", "y", "z"];

    fn fields(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(format_float).unwrap_or_default();
        vec![
            self.i.to_string(),
            format_float(self.k),
            format_float(self.delta_sq),
            format_float(self.x),
            format_float(self.r),
            opt(self.diag.map(|d| d.qss_sq_sum)),
            opt(self.diag.map(|d| d.y)),
            opt(self.diag.map(|d| d.z)),
        ]
    }
}

pub fn csv_string<R: CsvRecord>(records: &[R]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    // Writing into a Vec cannot fail.
    w.write_record(R::HEADER).expect("in-memory write");
    for r in records {
        w.write_record(r.fields()).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

pub fn trace_csv(trace: &DecompositionTrace) -> String {
    csv_string(&trace.steps)
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn emit_csv<R: CsvRecord>(records: &[R], path: &Path) -> Result<()> {
    write_file(path, &csv_string(records))
}

pub const HIST_BINS: usize = 40;
pub const HIST_LO: f64 = -4.0;
pub const HIST_HI: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// Bar heights normalized so the bars integrate to one.
    pub densities: Vec<f64>,
    /// Samples below/above the range, counted into the end bins.
    pub clipped: usize,
    pub count: usize,
}

impl Histogram {
    pub fn bin_width() -> f64 {
        (HIST_HI - HIST_LO) / HIST_BINS as f64
    }

    pub fn bin_center(j: usize) -> f64 {
        HIST_LO + (j as f64 + 0.5) * Self::bin_width()
    }
}

pub fn histogram(samples: &[f64]) -> Result<Histogram> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::config("histogram samples must be finite"));
    }
    let width = Histogram::bin_width();
    let mut counts = vec![0usize; HIST_BINS];
    let mut clipped = 0;
    for &x in samples {
        if !(HIST_LO..HIST_HI).contains(&x) {
            clipped += 1;
        }
        let j = ((x - HIST_LO) / width).floor().clamp(0.0, (HIST_BINS - 1) as f64) as usize;
        counts[j] += 1;
    }
    let total = samples.len() as f64;
    Ok(Histogram {
        densities: counts.iter().map(|&c| c as f64 / (total * width)).collect(),
        clipped,
        count: samples.len(),
    })
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 400.0;
const MARGIN_L: f64 = 50.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 20.0;
const MARGIN_B: f64 = 60.0;
const PALETTE: [&str; 4] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52"];

/// Renders one or more labelled sample sets. A single set is drawn as
/// bars; several sets are drawn as step outlines so they stay readable.
pub fn render_histogram_svg(series: &[(&str, &[f64])], overlay_normal: bool) -> Result<String> {
    if series.is_empty() {
        return Err(Error::EmptySample);
    }
    let hists = series
        .iter()
        .map(|(_, s)| histogram(s))
        .collect::<Result<Vec<_>>>()?;
    let peak = hists
        .iter()
        .flat_map(|h| h.densities.iter().copied())
        .fold(std_normal_pdf(0.0), f64::max)
        * 1.1;
    let plot_w = SVG_W - MARGIN_L - MARGIN_R;
    let plot_h = SVG_H - MARGIN_T - MARGIN_B;
    let px = |x: f64| MARGIN_L + (x - HIST_LO) / (HIST_HI - HIST_LO) * plot_w;
    let py = |y: f64| MARGIN_T + plot_h * (1.0 - y / peak);
    let width = Histogram::bin_width();

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    // axes
    let _ = writeln!(
        svg,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        MARGIN_L,
        py(0.0),
        MARGIN_L + plot_w,
        py(0.0)
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        MARGIN_L,
        MARGIN_T,
        MARGIN_L,
        py(0.0)
    );
    for t in -4..=4 {
        let x = px(t as f64);
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{t}</text>"#,
            py(0.0) + 14.0
        );
    }
    for j in 0..=4 {
        let y = peak * j as f64 / 4.0 / 1.1;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{y:.2}</text>"#,
            MARGIN_L - 4.0,
            py(y) + 4.0
        );
    }

    if let [h] = hists.as_slice() {
        for (j, &d) in h.densities.iter().enumerate() {
            let x0 = px(HIST_LO + j as f64 * width);
            let x1 = px(HIST_LO + (j + 1) as f64 * width);
            let _ = writeln!(
                svg,
                r#"<rect x="{x0:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}" fill-opacity="0.6" stroke="white" stroke-width="0.5"/>"#,
                py(d),
                x1 - x0,
                py(0.0) - py(d),
                PALETTE[0]
            );
        }
    } else {
        for (idx, h) in hists.iter().enumerate() {
            let mut pts = vec![format!("{:.2},{:.2}", px(HIST_LO), py(0.0))];
            for (j, &d) in h.densities.iter().enumerate() {
                let x0 = px(HIST_LO + j as f64 * width);
                let x1 = px(HIST_LO + (j + 1) as f64 * width);
                pts.push(format!("{x0:.2},{:.2}", py(d)));
                pts.push(format!("{x1:.2},{:.2}", py(d)));
            }
            pts.push(format!("{:.2},{:.2}", px(HIST_HI), py(0.0)));
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
                pts.join(" "),
                PALETTE[idx % PALETTE.len()]
            );
        }
    }

    if overlay_normal {
        let pts: Vec<String> = (0..200)
            .map(|j| {
                let x = HIST_LO + (HIST_HI - HIST_LO) * j as f64 / 199.0;
                format!("{:.2},{:.2}", px(x), py(std_normal_pdf(x)))
            })
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="black" stroke-width="1.5" stroke-dasharray="4 2"/>"#,
            pts.join(" ")
        );
    }

    // legend and caption
    let mut legend_y = MARGIN_T + 12.0;
    for (idx, ((label, _), h)) in series.iter().zip(&hists).enumerate() {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{legend_y:.2}" fill="{}">{} (T={}, clipped={})</text>"#,
            SVG_W - MARGIN_R - 220.0,
            PALETTE[idx % PALETTE.len()],
            xml_escape(label),
            h.count,
            h.clipped
        );
        legend_y += 14.0;
    }
    if overlay_normal {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{legend_y:.2}">N(0,1) density</text>"#,
            SVG_W - MARGIN_R - 220.0
        );
    }
    let clipped: usize = hists.iter().map(|h| h.clipped).sum();
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{} bins on [-4, 4]; {} samples outside the range counted in the end bins</text>"#,
        MARGIN_L + plot_w / 2.0,
        SVG_H - 16.0,
        HIST_BINS,
        clipped
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn emit_histogram_svg(samples: &[f64], path: &Path, overlay_normal: bool) -> Result<()> {
    write_file(path, &render_histogram_svg(&[("samples", samples)], overlay_normal)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::SeedSpec;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn record(n: usize, idx: u64, stat: f64) -> TrialRecord {
        TrialRecord {
            n,
            trial_index: idx,
            statistic: stat,
            log_abs_det: 0.0,
            sign: 1,
            wall_time_ms: 3.5,
            degenerate: false,
        }
    }

    #[test]
    fn float_format() {
        assert_eq!(format_float(f64::NEG_INFINITY), "-inf");
        assert_eq!(format_float(0.0), "0.0000000000000000e0");
        let x = 0.1 + 0.2;
        assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
        assert_eq!(format_float(x).split('e').next().unwrap().replace(['.', '-'], "").len(), 17);
    }

    #[test]
    fn csv_header_only_and_one_row() {
        let empty: Vec<TrialRecord> = Vec::new();
        assert_eq!(csv_string(&empty), "n,trial_index,statistic,log_abs_det,sign,degenerate\n");
        let s = csv_string(&[record(2, 0, 0.0)]);
        assert_eq!(s.lines().count(), 2);
        assert!(s.ends_with("2,0,0.0000000000000000e0,0.0000000000000000e0,1,false\n"));
        let singular = csv_string(&[record(2, 1, f64::NEG_INFINITY)]);
        assert!(singular.contains(",-inf,"));
    }

    #[test]
    fn emit_csv_to_nested_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b/trials.csv");
        emit_csv(&[record(3, 0, 1.0)], &p).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), csv_string(&[record(3, 0, 1.0)]));
    }

    #[test]
    fn lemma_notes_are_quoted_when_needed() {
        let r = LemmaReport::new("x", 4, 10, 1.0, 1.0, 0.0, crate::Criterion::ReportOnly)
            .with_remark("a, b");
        let s = csv_string(&[r]);
        assert!(s.lines().nth(1).unwrap().ends_with("\"report-only; a, b\""));
    }

    #[test]
    fn constant_samples_fill_center_bin() {
        let h = histogram(&[0.0; 10]).unwrap();
        let nonzero: Vec<usize> = (0..HIST_BINS).filter(|&j| h.densities[j] > 0.0).collect();
        assert_eq!(nonzero, vec![20]);
        assert!((h.densities[20] * Histogram::bin_width() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn clipping_counts() {
        let h = histogram(&[-10.0, 10.0, 4.0, 0.5]).unwrap();
        assert_eq!(h.clipped, 3);
        assert!(h.densities[0] > 0.0 && h.densities[HIST_BINS - 1] > 0.0);
        assert!(histogram(&[]).is_err());
    }

    #[test]
    fn normal_draws_match_density() {
        let mut rng = SeedSpec::new(31, 0).rng();
        let draws: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
        let h = histogram(&draws).unwrap();
        for j in 0..HIST_BINS {
            let gap = (h.densities[j] - std_normal_pdf(Histogram::bin_center(j))).abs();
            assert!(gap <= 0.03, "bin {j}: {gap}");
        }
    }

    #[test]
    fn svg_is_self_contained() {
        let a = [0.0, 0.1, -0.2];
        let b = [1.0, -1.0];
        let one = render_histogram_svg(&[("x", &a)], true).unwrap();
        assert!(one.starts_with("<svg") && one.trim_end().ends_with("</svg>"));
        assert_eq!(one.matches("<rect").count(), 1 + HIST_BINS);
        assert_eq!(one.matches("<polyline").count(), 1);
        let two = render_histogram_svg(&[("a", &a), ("b<c", &b)], false).unwrap();
        assert_eq!(two.matches("<polyline").count(), 2);
        assert!(two.contains("b&lt;c"));
    }
}
