//! Rendered tables and plots for a finished run.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::pipeline::{evaluate_scores, split_images, EvalSummary, MethodEvaluation, ScoreVariant};
use super::store::{
    ResultStore, CONFIG_FILE, CORRELATION_FILE, DATASET_FILE, DISTORTION_FILE, PLOT_DIR, QUARTILE_CURVES, REPORT_TABLE,
    SCORES_FILE,
};

/// One line of the method table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub variant: String,
    pub t: Option<usize>,
    pub auc: f64,
    pub asr: f64,
    pub tpr_at_1_fpr: f64,
    /// Random-group baseline (mean, std) at the best t.
    pub baseline: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedReport {
    pub rows: Vec<ReportRow>,
    /// Influence-filtered minus unfiltered, per metric, averaged over methods.
    pub mean_delta: Option<[f64; 3]>,
    pub min_delta: Option<[f64; 3]>,
    pub plots: Vec<PathBuf>,
}

fn metrics(e: &MethodEvaluation) -> [f64; 3] {
    [e.best.auc, e.best.asr, e.best.tpr_at_1_fpr]
}

/// Method rows in method order, then variant order.
pub fn report_rows(summary: &EvalSummary) -> Vec<ReportRow> {
    let mut evals: Vec<&MethodEvaluation> = summary.evaluations.iter().collect();
    evals.sort_by_key(|e| (e.method, e.variant));
    evals
        .into_iter()
        .map(|e| ReportRow {
            method: e.method.display_name().to_string(),
            variant: e.variant.to_string(),
            t: e.best.t,
            auc: e.best.auc,
            asr: e.best.asr,
            tpr_at_1_fpr: e.best.tpr_at_1_fpr,
            baseline: Some((e.baseline.mean_auc, e.baseline.std_auc)),
        })
        .collect()
}

/// Per-method influence − unfiltered differences for AUC, ASR and TPR@1%FPR.
pub fn filtering_deltas(summary: &EvalSummary) -> Vec<(String, [f64; 3])> {
    let mut methods: Vec<_> = summary.evaluations.iter().map(|e| e.method).collect();
    methods.sort();
    methods.dedup();
    methods
        .into_iter()
        .filter_map(|m| {
            let base = summary.find(m, ScoreVariant::Unfiltered)?;
            let filtered = summary.find(m, ScoreVariant::Influence)?;
            let (b, f) = (metrics(base), metrics(filtered));
            Some((m.display_name().to_string(), std::array::from_fn(|i| f[i] - b[i])))
        })
        .collect()
}

fn delta_summary(summary: &EvalSummary) -> (Option<[f64; 3]>, Option<[f64; 3]>) {
    let deltas = filtering_deltas(summary);
    if deltas.is_empty() {
        return (None, None);
    }
    let n = deltas.len() as f64;
    let mean = std::array::from_fn(|i| deltas.iter().map(|d| d.1[i]).sum::<f64>() / n);
    let min = std::array::from_fn(|i| deltas.iter().map(|d| d.1[i]).fold(f64::INFINITY, f64::min));
    (Some(mean), Some(min))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn table_records(hash: &str, rows: &[ReportRow], mean: Option<[f64; 3]>, min: Option<[f64; 3]>) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                hash.to_string(),
                r.method.clone(),
                r.variant.clone(),
                opt(r.t),
                r.auc.to_string(),
                r.asr.to_string(),
                r.tpr_at_1_fpr.to_string(),
                opt(r.baseline.map(|b| b.0)),
                opt(r.baseline.map(|b| b.1)),
            ]
        })
        .collect();
    for (label, d) in [("Mean Δ", mean), ("Min Δ", min)] {
        if let Some(d) = d {
            out.push(vec![
                hash.to_string(),
                label.to_string(),
                "influence-unfiltered".to_string(),
                String::new(),
                d[0].to_string(),
                d[1].to_string(),
                d[2].to_string(),
                String::new(),
                String::new(),
            ]);
        }
    }
    out
}

fn curve_records(hash: &str, summary: &EvalSummary) -> Vec<Vec<String>> {
    let mut evals: Vec<&MethodEvaluation> = summary.evaluations.iter().collect();
    evals.sort_by_key(|e| (e.method, e.variant));
    let mut out = Vec::new();
    for e in evals {
        for p in &e.quartile_curves {
            for (q, auc) in p.auc.iter().enumerate() {
                out.push(vec![
                    hash.to_string(),
                    e.method.display_name().to_string(),
                    e.variant.to_string(),
                    p.t.to_string(),
                    (q + 1).to_string(),
                    opt(*auc),
                    if auc.is_some() { "ok" } else { "empty" }.to_string(),
                ]);
            }
        }
    }
    out
}

const QUARTILE_COLORS: [[u8; 3]; 4] = [[40, 90, 200], [40, 160, 80], [230, 140, 20], [200, 40, 40]];

struct Canvas {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Canvas {
    fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![255; width * height * 3],
        }
    }

    fn set(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            let i = (y as usize * self.width + x as usize) * 3;
            self.pixels[i..i + 3].copy_from_slice(&c);
        }
    }

    fn line(&mut self, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: [u8; 3]) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        loop {
            self.set(x, y, c);
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    fn fill(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, c: [u8; 3]) {
        for y in y0.min(y1)..=y0.max(y1) {
            for x in x0.min(x1)..=x0.max(x1) {
                self.set(x, y, c);
            }
        }
    }

    fn save(&self, path: &Path, config_hash: &str) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let png_err = |e: png::EncodingError| Error::InvalidInput(format!("{}: {e}", path.display()));
        let mut enc = png::Encoder::new(std::io::BufWriter::new(file), self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        enc.add_text_chunk("config_hash".to_string(), config_hash.to_string())
            .map_err(png_err)?;
        let mut writer = enc.write_header().map_err(png_err)?;
        writer.write_image_data(&self.pixels).map_err(png_err)?;
        writer.finish().map_err(png_err)
    }
}

/// AUC-vs-t per distortion quartile, y from 0 to 100, with the random
/// baseline band shaded grey.
fn plot_quartile_curves(e: &MethodEvaluation, path: &Path, config_hash: &str) -> Result<()> {
    let (w, h, margin) = (320i64, 240i64, 24i64);
    let mut c = Canvas::new(w as usize, h as usize);
    let ts: Vec<usize> = e.quartile_curves.iter().map(|p| p.t).collect();
    let (t_min, t_max) = (*ts.first().unwrap_or(&0) as f64, *ts.last().unwrap_or(&0) as f64);
    let x_of = |t: usize| {
        let span = (t_max - t_min).max(1.0);
        margin + ((t as f64 - t_min) / span * (w - 2 * margin) as f64).round() as i64
    };
    let y_of = |auc: f64| h - margin - (auc.clamp(0.0, 100.0) / 100.0 * (h - 2 * margin) as f64).round() as i64;
    let band = (e.baseline.mean_auc - e.baseline.std_auc, e.baseline.mean_auc + e.baseline.std_auc);
    c.fill(margin, y_of(band.0), w - margin, y_of(band.1), [225, 225, 225]);
    c.line((margin, y_of(50.0)), (w - margin, y_of(50.0)), [180, 180, 180]);
    c.line((margin, h - margin), (w - margin, h - margin), [0, 0, 0]);
    c.line((margin, margin), (margin, h - margin), [0, 0, 0]);
    for q in 0..4 {
        let mut prev: Option<(i64, i64)> = None;
        for p in &e.quartile_curves {
            match p.auc[q] {
                Some(auc) => {
                    let pt = (x_of(p.t), y_of(auc));
                    if let Some(pp) = prev {
                        c.line(pp, pt, QUARTILE_COLORS[q]);
                    }
                    c.fill(pt.0 - 1, pt.1 - 1, pt.0 + 1, pt.1 + 1, QUARTILE_COLORS[q]);
                    prev = Some(pt);
                }
                None => prev = None,
            }
        }
    }
    c.save(path, config_hash)
}

/// Recomputes the evaluation from the run's CSVs and writes the table,
/// quartile curves, correlation table and plots.
pub fn render_report(store: &ResultStore) -> Result<RenderedReport> {
    store.require(&[CONFIG_FILE, DATASET_FILE, DISTORTION_FILE, SCORES_FILE])?;
    let (_, cfg) = ResultStore::open(store.root())?;
    let split = store.read_dataset()?;
    let images = split_images(&split)?;
    let summary = evaluate_scores(&cfg, &store.read_scores()?, &store.read_distortion()?, Some(&images))?;
    store.write_summary(&summary)?;
    let hash = store.config_hash();

    let rows = report_rows(&summary);
    let (mean_delta, min_delta) = delta_summary(&summary);
    write_csv(
        &store.path(REPORT_TABLE),
        &["config_hash", "method", "variant", "t", "auc", "asr", "tpr_at_1_fpr", "baseline_mean_auc", "baseline_std_auc"],
        &table_records(hash, &rows, mean_delta, min_delta),
    )?;
    write_csv(
        &store.path(QUARTILE_CURVES),
        &["config_hash", "method", "variant", "t", "quartile", "auc", "status"],
        &curve_records(hash, &summary),
    )?;
    let corr: Vec<Vec<String>> = summary
        .correlation
        .iter()
        .map(|c| {
            vec![
                hash.to_string(),
                c.radius.to_string(),
                c.samples.to_string(),
                c.low_frequency_r.to_string(),
                c.high_frequency_r.to_string(),
            ]
        })
        .collect();
    write_csv(
        &store.path(CORRELATION_FILE),
        &["config_hash", "radius", "samples", "low_frequency_r", "high_frequency_r"],
        &corr,
    )?;

    let plot_dir = store.path(PLOT_DIR);
    fs::create_dir_all(&plot_dir).map_err(|e| Error::io(&plot_dir, e))?;
    let mut plots = Vec::new();
    let mut evals: Vec<&MethodEvaluation> = summary.evaluations.iter().collect();
    evals.sort_by_key(|e| (e.method, e.variant));
    for e in evals {
        let path = plot_dir.join(format!("quartile_auc_{}_{}.png", e.method.as_str(), e.variant));
        plot_quartile_curves(e, &path, hash)?;
        plots.push(path);
    }
    Ok(RenderedReport {
        rows,
        mean_delta,
        min_delta,
        plots,
    })
}
