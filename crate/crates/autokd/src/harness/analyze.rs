//! Trial-log serialization and the analysis reports.
//!
//! The trial log is JSON-lines, one object per record. Reports are plain
//! CSV plus small self-contained SVG renderings: per-budget accuracy
//! histograms, the best-accuracy-so-far curve against cumulative training
//! cost, and the budget-pair rank-correlation matrix. Re-running analysis on
//! the same log produces byte-identical files.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::bohb::TrialRecord;
use crate::error::{Error, Result};
use crate::harness::stats::rank_correlation_report;

const HIST_BINS: usize = 10;

pub fn append_record<W: Write>(w: &mut W, record: &TrialRecord) -> Result<()> {
    let line = serde_json::to_string(record)
        .map_err(|e| Error::Internal(format!("record serialization: {e}")))?;
    writeln!(w, "{line}").map_err(|e| Error::io("trial log", e))
}

pub fn write_trial_log(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let mut bytes = Vec::new();
    for r in records {
        append_record(&mut bytes, r)?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Reads a JSON-lines trial log; parse failures carry the 1-based line
/// number.
pub fn read_trial_log(path: &Path) -> Result<Vec<TrialRecord>> {
    let name = path.display().to_string();
    let file = fs::File::open(path).map_err(|e| Error::io(name.clone(), e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(name.clone(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TrialRecord = serde_json::from_str(&line).map_err(|e| Error::LogParse {
            path: name.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Accuracy histogram counts for one budget: `HIST_BINS` equal bins on
/// `[0, 1]`, the last bin closed.
fn histogram(accs: &[f64]) -> [usize; HIST_BINS] {
    let mut bins = [0usize; HIST_BINS];
    for &a in accs {
        let idx = ((a * HIST_BINS as f64) as usize).min(HIST_BINS - 1);
        bins[idx] += 1;
    }
    bins
}

fn sorted_budgets(records: &[TrialRecord]) -> Vec<u32> {
    let mut budgets: Vec<u32> = records.iter().map(|r| r.budget).collect();
    budgets.sort_unstable();
    budgets.dedup();
    budgets
}

/// Writes every report file into `out_dir` and returns their paths.
pub fn analyze(records: &[TrialRecord], out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let budgets = sorted_budgets(records);
    let mut written = Vec::new();

    // Per-budget accuracy histograms.
    let mut hist_rows: Vec<(u32, [usize; HIST_BINS])> = Vec::new();
    for &b in &budgets {
        let accs: Vec<f64> = records
            .iter()
            .filter(|r| r.budget == b)
            .map(|r| r.val_accuracy)
            .collect();
        hist_rows.push((b, histogram(&accs)));
    }
    let mut csv = String::from("budget,bin_lo,bin_hi,count\n");
    for (b, bins) in &hist_rows {
        for (i, count) in bins.iter().enumerate() {
            csv.push_str(&format!(
                "{b},{:.2},{:.2},{count}\n",
                i as f64 / HIST_BINS as f64,
                (i + 1) as f64 / HIST_BINS as f64
            ));
        }
    }
    let path = out_dir.join("accuracy_histograms.csv");
    write_file(&path, &csv)?;
    written.push(path);

    // Best validation accuracy so far vs cumulative training cost.
    let mut ordered: Vec<&TrialRecord> = records.iter().collect();
    ordered.sort_by_key(|r| r.trial_id);
    let mut csv = String::from("trial_id,cum_wall_seconds,best_accuracy\n");
    let mut curve = Vec::new();
    let mut cum = 0.0;
    let mut best = 0.0f64;
    for r in &ordered {
        cum += r.wall_seconds;
        best = best.max(r.val_accuracy);
        csv.push_str(&format!("{},{:.6},{:.6}\n", r.trial_id, cum, best));
        curve.push((cum, best));
    }
    let path = out_dir.join("best_over_time.csv");
    write_file(&path, &csv)?;
    written.push(path);

    // Rank-correlation matrix over budget pairs.
    let report = rank_correlation_report(records);
    let mut csv = String::from("budget");
    for b in &report.budgets {
        csv.push_str(&format!(",{b}"));
    }
    csv.push('\n');
    for (i, b) in report.budgets.iter().enumerate() {
        csv.push_str(&b.to_string());
        for j in 0..report.budgets.len() {
            match report.matrix[i][j] {
                Some(v) => csv.push_str(&format!(",{v:.4}")),
                None => csv.push(','),
            }
        }
        csv.push('\n');
    }
    let path = out_dir.join("rank_correlation.csv");
    write_file(&path, &csv)?;
    written.push(path);

    // SVG renderings.
    let path = out_dir.join("accuracy_histograms.svg");
    write_file(&path, &histogram_svg(&hist_rows))?;
    written.push(path);
    let path = out_dir.join("best_over_time.svg");
    write_file(&path, &curve_svg(&curve))?;
    written.push(path);
    let path = out_dir.join("rank_correlation.svg");
    write_file(&path, &matrix_svg(&report.budgets, &report.matrix))?;
    written.push(path);

    Ok(written)
}

fn svg_header(width: usize, height: usize) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\">\n\
         <rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    )
}

/// One row of bars per budget.
fn histogram_svg(rows: &[(u32, [usize; HIST_BINS])]) -> String {
    let row_h = 120usize;
    let width = 520usize;
    let height = row_h * rows.len().max(1) + 20;
    let mut svg = svg_header(width, height);
    for (row, (budget, bins)) in rows.iter().enumerate() {
        let base_y = row * row_h + 20;
        let max = *bins.iter().max().unwrap_or(&1) as f64;
        let max = max.max(1.0);
        svg.push_str(&format!(
            "<text x=\"8\" y=\"{}\" font-size=\"12\" font-family=\"monospace\">budget {budget}</text>\n",
            base_y
        ));
        for (i, &count) in bins.iter().enumerate() {
            let h = (90.0 * count as f64 / max) as usize;
            let x = 80 + i * 42;
            let y = base_y + 90 - h;
            svg.push_str(&format!(
                "<rect x=\"{x}\" y=\"{y}\" width=\"36\" height=\"{h}\" fill=\"#4878a8\"/>\n"
            ));
            svg.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-size=\"9\" font-family=\"monospace\">{:.1}</text>\n",
                x,
                base_y + 102,
                i as f64 / HIST_BINS as f64
            ));
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn curve_svg(points: &[(f64, f64)]) -> String {
    let width = 520usize;
    let height = 260usize;
    let mut svg = svg_header(width, height);
    if !points.is_empty() {
        let x_max = points.last().map(|p| p.0).unwrap_or(1.0).max(1e-9);
        let mut path = String::new();
        for (i, &(x, y)) in points.iter().enumerate() {
            let px = 40.0 + 460.0 * x / x_max;
            let py = 230.0 - 200.0 * y;
            path.push_str(if i == 0 { "M" } else { " L" });
            path.push_str(&format!("{px:.1},{py:.1}"));
        }
        svg.push_str(&format!(
            "<path d=\"{path}\" stroke=\"#a84848\" stroke-width=\"2\" fill=\"none\"/>\n"
        ));
        svg.push_str(
            "<line x1=\"40\" y1=\"230\" x2=\"500\" y2=\"230\" stroke=\"black\"/>\n\
             <line x1=\"40\" y1=\"30\" x2=\"40\" y2=\"230\" stroke=\"black\"/>\n",
        );
        svg.push_str(&format!(
            "<text x=\"200\" y=\"252\" font-size=\"11\" font-family=\"monospace\">cumulative training cost (s), max {x_max:.2}</text>\n"
        ));
        svg.push_str(
            "<text x=\"8\" y=\"20\" font-size=\"11\" font-family=\"monospace\">best accuracy so far</text>\n",
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn matrix_svg(budgets: &[u32], matrix: &[Vec<Option<f64>>]) -> String {
    let cell = 64usize;
    let margin = 60usize;
    let size = margin + cell * budgets.len().max(1) + 10;
    let mut svg = svg_header(size, size);
    for (i, b) in budgets.iter().enumerate() {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" font-family=\"monospace\">{b}</text>\n",
            margin + i * cell + cell / 2 - 8,
            margin - 10
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" font-family=\"monospace\">{b}</text>\n",
            16,
            margin + i * cell + cell / 2 + 4
        ));
    }
    for (i, row) in matrix.iter().enumerate() {
        for (j, entry) in row.iter().enumerate() {
            let x = margin + j * cell;
            let y = margin + i * cell;
            match entry {
                Some(v) => {
                    // Map [-1, 1] to a blue-white-red ramp.
                    let t = ((v + 1.0) / 2.0).clamp(0.0, 1.0);
                    let r = (255.0 * t) as u8;
                    let b = (255.0 * (1.0 - t)) as u8;
                    let g = (255.0 * (1.0 - (t - 0.5).abs() * 2.0)) as u8;
                    svg.push_str(&format!(
                        "<rect x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" \
                         fill=\"rgb({r},{g},{b})\" stroke=\"black\"/>\n"
                    ));
                    svg.push_str(&format!(
                        "<text x=\"{}\" y=\"{}\" font-size=\"11\" font-family=\"monospace\">{v:.2}</text>\n",
                        x + 12,
                        y + cell / 2 + 4
                    ));
                }
                None => {
                    svg.push_str(&format!(
                        "<rect x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" \
                         fill=\"#dddddd\" stroke=\"black\"/>\n"
                    ));
                }
            }
        }
    }
    svg.push_str("</svg>\n");
    svg
}
