//! SVG line plots and PNG heatmaps rendered from the CSV outputs.
//!
//! Output is a pure function of the input, so rerunning a plot reproduces
//! the same bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::stats;

#[derive(Clone, Debug, PartialEq)]
pub struct Style {
    pub label: String,
    pub color: &'static str,
    pub dashed: bool,
}

/// Median and interquartile range across several series.
#[derive(Clone, Debug, PartialEq)]
pub struct Band {
    pub x: Vec<f64>,
    pub median: Vec<f64>,
    pub q1: Vec<f64>,
    pub q3: Vec<f64>,
}

impl Band {
    /// Summarizes series point by point, truncated to the shortest one.
    pub fn across(x: &[f64], series: &[Vec<f64>]) -> Result<Band> {
        let len = series.iter().map(Vec::len).min().unwrap_or(0).min(x.len());
        if len == 0 {
            return Err(Error::Plot("no data points to plot".into()));
        }
        let mut band = Band {
            x: x[..len].to_vec(),
            median: Vec::with_capacity(len),
            q1: Vec::with_capacity(len),
            q3: Vec::with_capacity(len),
        };
        for i in 0..len {
            let col: Vec<f64> = series.iter().map(|s| s[i]).collect();
            band.median.push(stats::quantile(&col, 0.5));
            band.q1.push(stats::quantile(&col, 0.25));
            band.q3.push(stats::quantile(&col, 0.75));
        }
        Ok(band)
    }
}

#[derive(Clone, Debug, Default)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Fixed y range; derived from the data when absent.
    pub y_range: Option<(f64, f64)>,
    pub bands: Vec<(Band, Style)>,
    /// Dotted horizontal reference lines.
    pub reference_lines: Vec<f64>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 52.0;

fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|&s| s >= raw)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + step * 1e-9 {
        out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    out
}

impl LinePlot {
    pub fn to_svg(&self) -> Result<String> {
        if self.bands.is_empty() || self.bands.iter().all(|(b, _)| b.x.is_empty()) {
            return Err(Error::Plot("plot has no series".into()));
        }
        let xs = self.bands.iter().flat_map(|(b, _)| b.x.iter().copied());
        let (x_lo, x_hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let (y_lo, y_hi) = self.y_range.unwrap_or_else(|| {
            let ys = self
                .bands
                .iter()
                .flat_map(|(b, _)| b.q1.iter().chain(&b.q3).copied())
                .chain(self.reference_lines.iter().copied());
            let (lo, hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            let pad = 0.05 * (hi - lo).max(1e-6);
            (lo - pad, hi + pad)
        });
        let x_hi = if x_hi > x_lo { x_hi } else { x_lo + 1.0 };
        let pw = WIDTH - MARGIN_L - MARGIN_R;
        let ph = HEIGHT - MARGIN_T - MARGIN_B;
        let sx = |x: f64| MARGIN_L + (x - x_lo) / (x_hi - x_lo) * pw;
        let sy = |y: f64| MARGIN_T + (1.0 - (y - y_lo) / (y_hi - y_lo)) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for t in nice_ticks(x_lo, x_hi, 6) {
            let _ = writeln!(
                s,
                r#"<line x1="{0:.1}" y1="{1:.1}" x2="{0:.1}" y2="{2:.1}" stroke="black"/><text x="{0:.1}" y="{3:.1}" text-anchor="middle">{4}</text>"#,
                sx(t),
                MARGIN_T + ph,
                MARGIN_T + ph + 5.0,
                MARGIN_T + ph + 18.0,
                t
            );
        }
        for t in nice_ticks(y_lo, y_hi, 5) {
            let _ = writeln!(
                s,
                r#"<line x1="{0:.1}" y1="{1:.1}" x2="{2:.1}" y2="{1:.1}" stroke="black"/><text x="{3:.1}" y="{4:.1}" text-anchor="end">{5}</text>"#,
                MARGIN_L - 5.0,
                sy(t),
                MARGIN_L,
                MARGIN_L - 8.0,
                sy(t) + 4.0,
                t
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            MARGIN_L + pw / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{0:.1}" text-anchor="middle" transform="rotate(-90 16 {0:.1})">{1}</text>"#,
            MARGIN_T + ph / 2.0,
            escape(&self.y_label)
        );
        for &y in &self.reference_lines {
            let _ = writeln!(
                s,
                r#"<line x1="{:.1}" y1="{2:.1}" x2="{:.1}" y2="{2:.1}" stroke="gray" stroke-dasharray="2,3"/>"#,
                MARGIN_L,
                MARGIN_L + pw,
                sy(y)
            );
        }
        for (band, style) in &self.bands {
            let mut area = String::new();
            for (x, y) in band.x.iter().zip(&band.q3) {
                let _ = write!(area, "{:.2},{:.2} ", sx(*x), sy(*y));
            }
            for (x, y) in band.x.iter().zip(&band.q1).rev() {
                let _ = write!(area, "{:.2},{:.2} ", sx(*x), sy(*y));
            }
            let _ = writeln!(
                s,
                r#"<polygon points="{}" fill="{}" fill-opacity="0.2" stroke="none"/>"#,
                area.trim_end(),
                style.color
            );
            let line: Vec<String> = band
                .x
                .iter()
                .zip(&band.median)
                .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
                .collect();
            let dash = if style.dashed { r#" stroke-dasharray="6,4""# } else { "" };
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"{dash}/>"#,
                line.join(" "),
                style.color
            );
        }
        for (k, (_, style)) in self.bands.iter().enumerate() {
            let y = MARGIN_T + 14.0 + 16.0 * k as f64;
            let x = MARGIN_L + pw - 150.0;
            let dash = if style.dashed { r#" stroke-dasharray="6,4""# } else { "" };
            let _ = writeln!(
                s,
                r#"<line x1="{x:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{}" stroke-width="1.5"{dash}/><text x="{:.1}" y="{:.1}">{}</text>"#,
                x + 24.0,
                style.color,
                x + 30.0,
                y + 4.0,
                escape(&style.label)
            );
        }
        s.push_str("</svg>\n");
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_svg()?)?;
        Ok(())
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[derive(Debug, Deserialize)]
struct ReportRow {
    #[serde(rename = "gen")]
    generation: u64,
    #[allow(dead_code)]
    task: String,
    loss: f64,
    frac_correct: f64,
    is_withheld: u8,
}

/// Per-generation means from one evolution report.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportSummary {
    pub generations: Vec<u64>,
    pub train_loss: Vec<f64>,
    pub train_frac_correct: Vec<f64>,
    /// (generation, mean fraction correct) at each withheld evaluation.
    pub withheld: Vec<(u64, f64)>,
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let rows = rdr
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::Plot(format!("{}: {e}", path.display())))?;
    if rows.is_empty() {
        return Err(Error::Plot(format!("{} has no data rows", path.display())));
    }
    Ok(rows)
}

/// Reads a `gen,task,loss,frac_correct,is_withheld` report.
pub fn read_report(path: &Path) -> Result<ReportSummary> {
    let rows: Vec<ReportRow> = read_rows(path)?;
    let mut train: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
    let mut held: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for r in rows {
        if r.is_withheld != 0 {
            let e = held.entry(r.generation).or_default();
            e.0 += r.frac_correct;
            e.1 += 1;
        } else {
            let e = train.entry(r.generation).or_default();
            e.0 += r.loss;
            e.1 += r.frac_correct;
            e.2 += 1;
        }
    }
    let mut out = ReportSummary::default();
    for (g, (loss, fc, n)) in train {
        out.generations.push(g);
        out.train_loss.push(loss / n as f64);
        out.train_frac_correct.push(fc / n as f64);
    }
    out.withheld = held.into_iter().map(|(g, (fc, n))| (g, fc / n as f64)).collect();
    Ok(out)
}

/// Training (solid) and withheld (dashed) fraction correct across runs.
pub fn evolution_figure(reports: &[&Path], out: &Path) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::Plot("no reports given".into()));
    }
    let summaries = reports.iter().map(|p| read_report(p)).collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = summaries[0].generations.iter().map(|&g| g as f64).collect();
    let train: Vec<Vec<f64>> = summaries.iter().map(|s| s.train_frac_correct.clone()).collect();
    let mut plot = LinePlot {
        title: "Fraction correct over evolution".into(),
        x_label: "generation".into(),
        y_label: "fraction correct".into(),
        y_range: Some((0.3, 1.0)),
        bands: vec![(
            Band::across(&x, &train)?,
            Style { label: "training tasks".into(), color: "#1f5fbf", dashed: false },
        )],
        reference_lines: vec![0.5],
    };
    if summaries.iter().all(|s| !s.withheld.is_empty()) {
        let hx: Vec<f64> = summaries[0].withheld.iter().map(|&(g, _)| g as f64).collect();
        let held: Vec<Vec<f64>> = summaries.iter().map(|s| s.withheld.iter().map(|w| w.1).collect()).collect();
        plot.bands.push((
            Band::across(&hx, &held)?,
            Style { label: "withheld task".into(), color: "#c0392b", dashed: true },
        ));
    }
    plot.save(out)
}

#[derive(Debug, Deserialize)]
struct CurveRow {
    trial: usize,
    #[allow(dead_code)]
    error: f64,
    correct: f64,
}

/// Reads the `correct` column of a `trial,error,correct` curve.
pub fn read_curve(path: &Path) -> Result<Vec<f64>> {
    let rows: Vec<CurveRow> = read_rows(path)?;
    if rows.iter().enumerate().any(|(i, r)| r.trial != i) {
        return Err(Error::Plot(format!("{}: trial column is not 0, 1, 2, ...", path.display())));
    }
    Ok(rows.into_iter().map(|r| r.correct).collect())
}

/// Fraction correct against trial with a chance line. `smooth` is a moving
/// average window; 1 plots raw values.
pub fn lifetime_figure(curves: &[&Path], smooth: usize, out: &Path) -> Result<()> {
    if curves.is_empty() {
        return Err(Error::Plot("no curves given".into()));
    }
    let series = curves
        .iter()
        .map(|p| read_curve(p).map(|c| stats::moving_average(&c, smooth.max(1))))
        .collect::<Result<Vec<_>>>()?;
    let len = series.iter().map(Vec::len).min().unwrap_or(0);
    let x: Vec<f64> = (0..len).map(|t| t as f64).collect();
    LinePlot {
        title: "Lifetime learning curve".into(),
        x_label: "trial".into(),
        y_label: "fraction correct".into(),
        y_range: Some((0.0, 1.0)),
        bands: vec![(
            Band::across(&x, &series)?,
            Style { label: "withheld task".into(), color: "#c0392b", dashed: false },
        )],
        reference_lines: vec![0.5],
    }
    .save(out)
}

fn lerp(a: [u8; 3], b: [u8; 3], t: f64) -> [u8; 3] {
    let f = |x: u8, y: u8| (x as f64 + (y as f64 - x as f64) * t).round() as u8;
    [f(a[0], b[0]), f(a[1], b[1]), f(a[2], b[2])]
}

/// Blue for `lo`, white at the midpoint, red for `hi`.
fn diverging(v: f64, lo: f64, hi: f64) -> [u8; 3] {
    const BLUE: [u8; 3] = [33, 80, 160];
    const WHITE: [u8; 3] = [247, 247, 247];
    const RED: [u8; 3] = [180, 30, 40];
    let t = if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.5 };
    if t < 0.5 {
        lerp(BLUE, WHITE, t * 2.0)
    } else {
        lerp(WHITE, RED, (t - 0.5) * 2.0)
    }
}

/// Writes `m` as a PNG, `cell` pixels per entry, row 0 at the top.
pub fn heatmap_png(m: &Matrix, lo: f64, hi: f64, cell: u32, out: &Path) -> Result<()> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(Error::Plot("empty matrix".into()));
    }
    let cell = cell.max(1);
    let img = image::RgbImage::from_fn(m.cols() as u32 * cell, m.rows() as u32 * cell, |x, y| {
        image::Rgb(diverging(m[((y / cell) as usize, (x / cell) as usize)], lo, hi))
    });
    img.save_with_format(out, image::ImageFormat::Png)?;
    Ok(())
}

/// Weight matrix heatmap, symmetric around zero.
pub fn weight_heatmap(m: &Matrix, cell: u32, out: &Path) -> Result<()> {
    let bound = m.as_slice().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-12);
    heatmap_png(m, -bound, bound, cell, out)
}

#[derive(Debug, Deserialize)]
struct DecodeRow {
    t1_ms: f64,
    t2_ms: f64,
    accuracy: f64,
}

/// Reads a `t1_ms,t2_ms,accuracy` decoding matrix into a square matrix with
/// training time along rows.
pub fn read_decoding_csv(path: &Path) -> Result<Matrix> {
    let rows: Vec<DecodeRow> = read_rows(path)?;
    let t = (rows.len() as f64).sqrt().round() as usize;
    if t * t != rows.len() {
        return Err(Error::Plot(format!("{}: {} rows is not a square matrix", path.display(), rows.len())));
    }
    let mut times: Vec<f64> = rows.iter().map(|r| r.t1_ms).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    if times.len() != t {
        return Err(Error::Plot(format!("{}: expected {t} distinct t1 values", path.display())));
    }
    let index = |v: f64| times.binary_search_by(|p| p.total_cmp(&v)).ok();
    let mut m = Matrix::filled(t, t, f64::NAN);
    for r in &rows {
        match (index(r.t1_ms), index(r.t2_ms)) {
            (Some(i), Some(j)) => m[(i, j)] = r.accuracy,
            _ => return Err(Error::Plot(format!("{}: t2_ms {} has no matching t1_ms", path.display(), r.t2_ms))),
        }
    }
    if !m.all_finite() {
        return Err(Error::Plot(format!("{}: duplicate or missing entries", path.display())));
    }
    Ok(m)
}

/// Decoding heatmap with chance (0.5) rendered white. The PNG puts training
/// time on the horizontal axis and testing time on the vertical axis,
/// earliest testing time at the bottom.
pub fn decoding_heatmap(csv_path: &Path, out: &Path) -> Result<()> {
    let m = read_decoding_csv(csv_path)?;
    let t = m.rows();
    let mut img = Matrix::zeros(t, t);
    for t1 in 0..t {
        for t2 in 0..t {
            img[(t - 1 - t2, t1)] = m[(t1, t2)];
        }
    }
    heatmap_png(&img, 0.0, 1.0, 8, out)
}
