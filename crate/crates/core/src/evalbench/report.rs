//! Accuracy table, JSON summary and scatter coordinates.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trainer::Variant;

use super::embed::{centroid_dispersion, EmbeddingSet, Origin};
use super::CellSummary;

/// Dispersion of each origin in one t-SNE layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionReport {
    pub tsne_seed: u64,
    /// `(origin, mean distance, std of distances)`.
    pub by_origin: Vec<(Origin, f64, f64)>,
    /// WAC-GAN-GPT < AC-GAN < real on the mean distance.
    pub ordering_holds: bool,
}

/// Per-origin dispersion of a 2-D layout, with centroids computed within
/// each origin.
pub fn dispersion_by_origin(
    layout: &EmbeddingSet,
    num_classes: usize,
    tsne_seed: u64,
) -> Result<DispersionReport> {
    let mut by_origin = Vec::new();
    for origin in [Origin::Real, Origin::AcganGen, Origin::WacganGptGen] {
        if layout.count(origin) == 0 {
            continue;
        }
        let (p, l) = layout.subset(origin);
        let (m, s) = centroid_dispersion(&p, &l, num_classes)?;
        by_origin.push((origin, m, s));
    }
    let get = |o| {
        by_origin
            .iter()
            .find(|e: &&(Origin, f64, f64)| e.0 == o)
            .map(|e| e.1)
    };
    let ordering_holds = match (
        get(Origin::WacganGptGen),
        get(Origin::AcganGen),
        get(Origin::Real),
    ) {
        (Some(w), Some(a), Some(r)) => w < a && a < r,
        _ => false,
    };
    Ok(DispersionReport {
        tsne_seed,
        by_origin,
        ordering_holds,
    })
}

fn cell_text(s: &CellSummary) -> String {
    match s.half_width {
        Some(h) => format!("{:.4}±{:.4}", s.mean, h),
        None => format!("{:.4}", s.mean),
    }
}

/// Rows are train sizes, columns variants, cells `mean±half_width`.
pub fn render_accuracy_csv(summaries: &[CellSummary]) -> String {
    let mut variants: Vec<Variant> = summaries.iter().map(|s| s.variant).collect();
    variants.sort();
    variants.dedup();
    let mut sizes: Vec<usize> = summaries.iter().map(|s| s.train_size).collect();
    sizes.sort();
    sizes.dedup();
    let mut out = String::from("train_size");
    for v in &variants {
        write!(out, ",{v}").unwrap();
    }
    out.push('\n');
    let cells: BTreeMap<(usize, Variant), &CellSummary> = summaries
        .iter()
        .map(|s| ((s.train_size, s.variant), s))
        .collect();
    for &n in &sizes {
        write!(out, "{n}").unwrap();
        for &v in &variants {
            match cells.get(&(n, v)) {
                Some(s) => write!(out, ",{}", cell_text(s)).unwrap(),
                None => {
                    log::warn!("no results for {v} at train size {n}");
                    out.push(',');
                }
            }
        }
        out.push('\n');
    }
    if summaries.is_empty() {
        log::warn!("accuracy table is empty");
    }
    out
}

/// Inverse of [`render_accuracy_csv`]: `(train_size, variant, mean, half_width)`.
pub fn parse_accuracy_csv(text: &str) -> Result<Vec<(usize, Variant, f64, Option<f64>)>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config("empty CSV".into()))?;
    let variants: Vec<Variant> = header
        .split(',')
        .skip(1)
        .map(str::parse)
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for line in lines {
        let mut fields = line.split(',');
        let n: usize = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| Error::Config(format!("bad CSV row `{line}`")))?;
        for (v, cell) in variants.iter().zip(fields) {
            if cell.is_empty() {
                continue;
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad CSV cell `{cell}`")))
            };
            let (m, h) = match cell.split_once('±') {
                Some((m, h)) => (num(m)?, Some(num(h)?)),
                None => (num(cell)?, None),
            };
            out.push((n, *v, m, h));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportPaths {
    pub accuracy_csv: PathBuf,
    pub summary_json: PathBuf,
    pub scatter_csv: Option<PathBuf>,
}

/// Writes `accuracy.csv`, `summary.json` and, given a 2-D layout,
/// `scatter.csv` (x, y, label, origin) into `dir`.
pub fn render_report(
    dir: &Path,
    summaries: &[CellSummary],
    dispersions: &[DispersionReport],
    scatter: Option<&EmbeddingSet>,
) -> Result<ReportPaths> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: String| -> Result<PathBuf> {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    };
    let accuracy_csv = write("accuracy.csv", render_accuracy_csv(summaries))?;
    let json = serde_json::json!({ "cells": summaries, "dispersion": dispersions });
    let summary_json = write("summary.json", serde_json::to_string_pretty(&json)? + "\n")?;
    let scatter_csv = match scatter {
        Some(s) => Some(write("scatter.csv", render_scatter_csv(s)?)?),
        None => None,
    };
    Ok(ReportPaths {
        accuracy_csv,
        summary_json,
        scatter_csv,
    })
}

/// `x,y,label,origin` rows of a 2-D layout.
pub fn render_scatter_csv(set: &EmbeddingSet) -> Result<String> {
    let (points, labels, origins) = (&set.points, &set.labels, &set.origins);
    if points.shape().len() != 2 || points.row_len() != 2 {
        return Err(Error::Shape("scatter output needs a [n, 2] layout".into()));
    }
    let mut out = String::from("x,y,label,origin\n");
    for (i, (l, o)) in labels.iter().zip(origins).enumerate() {
        let r = points.row(i);
        writeln!(out, "{},{},{l},{}", r[0], r[1], o.name()).unwrap();
    }
    Ok(out)
}
