use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{Cell, Report, ReportFormat, METRICS};
use crate::error::{Error, Result};

fn cell_text(cell: &Cell, metric: &str) -> String {
    if cell.failed() {
        return "failed".into();
    }
    match cell.metric(metric) {
        Some(s) => format!("{}±{}", s.mean, s.variance),
        None => "n/a".into(),
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        source: e,
    }
}

fn write_csv_rows(path: &Path, rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the report into `dir` and returns the files written, in order.
///
/// * `markdown`: `report.md`
/// * `json`: `report.json`
/// * `csv`: `accuracy.csv`, `purity.csv`, `scores_long.csv`, and when the
///   significance test ran, `ranks.csv` and `stats.csv`
///
/// `provenance.csv` (constraint pairs and test rows of every fold, global
/// row indices) is always written.
pub fn emit_report(report: &Report, formats: &[ReportFormat], dir: &Path) -> Result<Vec<PathBuf>> {
    let formats: BTreeSet<_> = formats
        .iter()
        .map(|f| match f {
            ReportFormat::Csv => 0,
            ReportFormat::Json => 1,
            ReportFormat::Markdown => 2,
        })
        .collect();
    if formats.is_empty() {
        return Err(Error::InvalidArgument("no report formats requested".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    if formats.contains(&0) {
        for metric in METRICS {
            let path = dir.join(format!("{metric}.csv"));
            write_csv_rows(&path, metric_csv_rows(report, metric))?;
            written.push(path);
        }
        let path = dir.join("scores_long.csv");
        let header = ["dataset", "algorithm", "fraction", "seed", "fold", "metric", "value"];
        let rows = std::iter::once(header.map(String::from).to_vec()).chain(report.records.iter().map(|r| {
            vec![
                r.dataset.clone(),
                r.algorithm.clone(),
                r.fraction.to_string(),
                r.seed.to_string(),
                r.fold.to_string(),
                r.metric.to_string(),
                r.value.to_string(),
            ]
        }));
        write_csv_rows(&path, rows)?;
        written.push(path);

        if let Some(sig) = &report.significance {
            let path = dir.join("ranks.csv");
            let mut rows = vec![std::iter::once("dataset".to_string())
                .chain(report.algorithms.iter().cloned())
                .chain(std::iter::once("row_sum".to_string()))
                .collect::<Vec<_>>()];
            for (i, name) in report.datasets.iter().enumerate() {
                let mut row = vec![name.clone()];
                row.extend(sig.ranks.ranks.row(i).iter().map(|r| r.to_string()));
                row.push(sig.ranks.row_sums[i].to_string());
                rows.push(row);
            }
            let mut last = vec!["column_sum".to_string()];
            last.extend(sig.ranks.col_sums.iter().map(|r| r.to_string()));
            last.push(sig.ranks.row_sums.sum().to_string());
            rows.push(last);
            write_csv_rows(&path, rows)?;
            written.push(path);

            let path = dir.join("stats.csv");
            let f = &sig.friedman;
            let rows = [
                ["statistic", "value"].map(String::from).to_vec(),
                vec!["T".into(), f.t.to_string()],
                vec!["df".into(), f.df.to_string()],
                vec!["p_one_tailed".into(), f.p_one_tailed.to_string()],
                vec!["p_two_tailed".into(), f.p_two_tailed.to_string()],
            ];
            write_csv_rows(&path, rows)?;
            written.push(path);
        }
    }

    if formats.contains(&1) {
        let path = dir.join("report.json");
        let mut text = serde_json::to_string_pretty(report)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        text.push('\n');
        write_text(&path, &text)?;
        written.push(path);
    }

    if formats.contains(&2) {
        let path = dir.join("report.md");
        write_text(&path, &markdown(report))?;
        written.push(path);
    }

    let path = dir.join("provenance.csv");
    write_csv_rows(&path, provenance_rows(report))?;
    written.push(path);
    Ok(written)
}

fn metric_csv_rows(report: &Report, metric: &str) -> Vec<Vec<String>> {
    let mut rows = vec![["dataset", "fraction"]
        .map(String::from)
        .into_iter()
        .chain(report.algorithms.iter().cloned())
        .collect::<Vec<_>>()];
    for d in &report.datasets {
        for (fi, f) in report.fractions.iter().enumerate() {
            let mut row = vec![d.clone(), f.to_string()];
            for a in &report.algorithms {
                row.push(cell_text(report.cell(d, a, fi).expect("cell exists"), metric));
            }
            rows.push(row);
        }
    }
    rows
}

fn provenance_rows(report: &Report) -> Vec<Vec<String>> {
    let mut rows = vec![["dataset", "seed", "fold", "fraction", "kind", "i", "j"]
        .map(String::from)
        .to_vec()];
    for p in &report.provenance {
        let head = || vec![p.dataset.clone(), p.seed.to_string(), p.fold.to_string()];
        for &t in &p.test_indices {
            let mut row = head();
            row.extend([String::new(), "test".into(), t.to_string(), String::new()]);
            rows.push(row);
        }
        for fc in &p.constraints {
            for (kind, pairs) in [("must", &fc.must), ("cannot", &fc.cannot)] {
                for &(i, j) in pairs {
                    let mut row = head();
                    row.extend([fc.fraction.to_string(), kind.into(), i.to_string(), j.to_string()]);
                    rows.push(row);
                }
            }
        }
    }
    rows
}

const METRIC_HEADING: &str = ", constraint fraction ";

fn markdown(report: &Report) -> String {
    let mut out = String::from("# Experiment report\n\n");
    let header = |out: &mut String, first: &str, cols: &[String], extra: Option<&str>| {
        let mut names: Vec<&str> = vec![first];
        names.extend(cols.iter().map(String::as_str));
        names.extend(extra);
        let _ = writeln!(out, "| {} |", names.join(" | "));
        let _ = writeln!(out, "|{}", "---|".repeat(names.len()));
    };

    for metric in METRICS {
        for (fi, f) in report.fractions.iter().enumerate() {
            let _ = writeln!(out, "## {metric}{METRIC_HEADING}{f}\n");
            header(&mut out, "dataset", &report.algorithms, None);
            for d in &report.datasets {
                let cells: Vec<String> = report
                    .algorithms
                    .iter()
                    .map(|a| cell_text(report.cell(d, a, fi).expect("cell exists"), metric))
                    .collect();
                let _ = writeln!(out, "| {d} | {} |", cells.join(" | "));
            }
            out.push('\n');
        }
    }

    match &report.significance {
        Some(sig) => {
            let f = report.fractions.last().expect("fractions are non-empty");
            let _ = writeln!(out, "## Aligned ranks (accuracy{METRIC_HEADING}{f})\n");
            header(&mut out, "dataset", &report.algorithms, Some("row sum"));
            for (i, d) in report.datasets.iter().enumerate() {
                let ranks: Vec<String> = sig.ranks.ranks.row(i).iter().map(|r| r.to_string()).collect();
                let _ = writeln!(out, "| {d} | {} | {} |", ranks.join(" | "), sig.ranks.row_sums[i]);
            }
            let sums: Vec<String> = sig.ranks.col_sums.iter().map(|r| r.to_string()).collect();
            let _ = writeln!(
                out,
                "| column sum | {} | {} |\n",
                sums.join(" | "),
                sig.ranks.row_sums.sum()
            );
            let r = &sig.friedman;
            let _ = writeln!(out, "## Friedman aligned ranks test\n");
            let _ = writeln!(out, "| statistic | value |\n|---|---|");
            let _ = writeln!(out, "| T | {} |", r.t);
            let _ = writeln!(out, "| df | {} |", r.df);
            let _ = writeln!(out, "| p (one-tailed) | {} |", r.p_one_tailed);
            let _ = writeln!(out, "| p (two-tailed) | {} |\n", r.p_two_tailed);
        }
        None => {
            let note = report.significance_note.as_deref().unwrap_or("not computed");
            let _ = writeln!(out, "## Friedman aligned ranks test\n\nSkipped: {note}\n");
        }
    }

    if report.any_failed() {
        let _ = writeln!(out, "## Failures\n");
        for c in report.cells.iter().filter(|c| c.failed()) {
            for reason in &c.failures {
                let _ = writeln!(out, "- {} / {} / {}: {}", c.dataset, c.algorithm, c.fraction, reason);
            }
        }
        out.push('\n');
    }
    out
}

/// One metric cell read back from `report.md`. `value` is `(mean, variance)`,
/// or `None` for a failed cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkdownCell {
    pub metric: String,
    pub fraction: f64,
    pub dataset: String,
    pub algorithm: String,
    pub value: Option<(f64, f64)>,
}

fn table_cells(line: &str) -> Vec<&str> {
    line.trim()
        .trim_start_matches('|')
        .trim_end_matches('|')
        .split('|')
        .map(str::trim)
        .collect()
}

/// Parses the per-metric tables of a markdown report.
pub fn parse_markdown_cells(text: &str) -> Result<Vec<MarkdownCell>> {
    let bad = |m: String| Error::InvalidArgument(format!("malformed report: {m}"));
    let mut out = Vec::new();
    let mut lines = text.lines().peekable();
    while let Some(line) = lines.next() {
        let Some(heading) = line.strip_prefix("## ") else {
            continue;
        };
        let Some((metric, fraction)) = heading.split_once(METRIC_HEADING) else {
            continue;
        };
        if !METRICS.contains(&metric) {
            continue;
        }
        let fraction: f64 = fraction
            .parse()
            .map_err(|_| bad(format!("fraction in {heading:?}")))?;
        while lines.peek().is_some_and(|l| l.trim().is_empty()) {
            lines.next();
        }
        let header = lines.next().ok_or_else(|| bad("missing table header".into()))?;
        let algorithms: Vec<String> = table_cells(header)[1..].iter().map(|s| s.to_string()).collect();
        lines.next();
        while let Some(row) = lines.next_if(|l| l.starts_with('|')) {
            let cells = table_cells(row);
            if cells.len() != algorithms.len() + 1 {
                return Err(bad(format!("row {row:?}")));
            }
            for (alg, text) in algorithms.iter().zip(&cells[1..]) {
                let value = match text.split_once('±') {
                    Some((m, v)) => Some((
                        m.parse().map_err(|_| bad(format!("cell {text:?}")))?,
                        v.parse().map_err(|_| bad(format!("cell {text:?}")))?,
                    )),
                    None => None,
                };
                out.push(MarkdownCell {
                    metric: metric.to_string(),
                    fraction,
                    dataset: cells[0].to_string(),
                    algorithm: alg.clone(),
                    value,
                });
            }
        }
    }
    Ok(out)
}
