//! Metrics JSON, result tables and the F1-versus-fraction plot.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use serde::Serialize;

use super::ablation::AblationResult;
use super::sweep::SweepRecord;
use crate::error::{Error, Result};

#[derive(Serialize)]
struct MetricsEntry<'a> {
    model: &'a str,
    rouge1_f1: f64,
    em: f64,
    n: usize,
}

#[derive(Serialize)]
struct TableRow<'a> {
    #[serde(rename = "Model")]
    model: &'a str,
    #[serde(rename = "F1")]
    f1: String,
    #[serde(rename = "EM")]
    em: String,
}

/// Writes `metrics.json` and `ablation.csv` for ablation results and
/// `sweep.csv` plus `sweep.svg` for sweep records. Returns the written paths.
pub fn emit_report(ablations: &[AblationResult], sweep: &[SweepRecord], outdir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    if ablations.is_empty() && sweep.is_empty() {
        return Err(Error::EmptyResults);
    }
    let outdir = outdir.as_ref();
    fs::create_dir_all(outdir)?;
    let mut written = Vec::new();
    if !ablations.is_empty() {
        let entries: Vec<MetricsEntry> = ablations
            .iter()
            .map(|a| MetricsEntry { model: &a.name, rouge1_f1: a.report.rouge1_f1, em: a.report.em, n: a.report.n })
            .collect();
        let path = outdir.join("metrics.json");
        fs::write(&path, serde_json::to_string_pretty(&entries)?)?;
        written.push(path);

        let path = outdir.join("ablation.csv");
        let mut w = csv::Writer::from_path(&path)?;
        for a in ablations {
            w.serialize(TableRow {
                model: &a.name,
                f1: format!("{:.4}", a.report.rouge1_f1),
                em: format!("{:.2}", a.report.em),
            })?;
        }
        w.flush()?;
        written.push(path);
    }
    if !sweep.is_empty() {
        let path = outdir.join("sweep.csv");
        let mut w = csv::Writer::from_path(&path)?;
        for r in sweep {
            w.serialize(r)?;
        }
        w.flush()?;
        written.push(path);
        let path = outdir.join("sweep.svg");
        plot_sweep(sweep, &path)?;
        written.push(path);
    }
    Ok(written)
}

fn plot_error(e: impl std::fmt::Display) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// One line per variant, F1 against training fraction.
pub fn plot_sweep(records: &[SweepRecord], path: &Path) -> Result<()> {
    let mut curves: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for r in records {
        curves.entry(&r.variant).or_default().push((r.fraction, r.rouge1_f1));
    }
    for points in curves.values_mut() {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let root = SVGBackend::new(path, (640, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_error)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("ROUGE-1 F1 vs. training fraction", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(0.0..1.0, 0.0..1.0)
        .map_err(plot_error)?;
    chart
        .configure_mesh()
        .x_desc("fraction of training data")
        .y_desc("F1")
        .draw()
        .map_err(plot_error)?;
    for (k, (variant, points)) in curves.iter().enumerate() {
        let color = Palette99::pick(k).to_rgba();
        chart
            .draw_series(LineSeries::new(points.iter().copied(), color.stroke_width(2)))
            .map_err(plot_error)?
            .label(*variant)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
        chart
            .draw_series(points.iter().map(|&p| Circle::new(p, 3, color.filled())))
            .map_err(plot_error)?;
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.8))
        .draw()
        .map_err(plot_error)?;
    root.present().map_err(plot_error)?;
    Ok(())
}
