//! Result tables (CSV plus a plain-text rendering) and step-function plot data.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use dpkm_core::collab::MonteCarloResult;
use dpkm_core::metrics::{ConfidenceBand, MetricReport};
use dpkm_core::KmCurve;
use serde::{Deserialize, Serialize};

/// Value with an interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub value: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl Cell {
    fn bare(value: f64) -> Self {
        Self {
            value,
            lower: None,
            upper: None,
        }
    }
}

/// One row: p-value, median and the three survival percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub label: String,
    pub epsilon: Option<f64>,
    pub p: Option<Cell>,
    pub median: Option<Cell>,
    pub s25: Option<Cell>,
    pub s50: Option<Cell>,
    pub s75: Option<Cell>,
}

impl TableRow {
    /// Row for a single estimate; intervals are the Greenwood band and its median crossings.
    pub fn from_report(label: impl Into<String>, epsilon: Option<f64>, r: &MetricReport) -> Self {
        let s = |i: usize| {
            r.survival.get(i).map(|p| Cell {
                value: p.value,
                lower: Some(p.lower),
                upper: Some(p.upper),
            })
        };
        Self {
            label: label.into(),
            epsilon,
            p: r.p_value.map(Cell::bare),
            median: r.median.median.map(|m| Cell {
                value: m,
                lower: r.median.lower,
                upper: r.median.upper,
            }),
            s25: s(0),
            s50: s(1),
            s75: s(2),
        }
    }

    /// Row of Monte-Carlo means with bootstrap intervals.
    pub fn from_monte_carlo(label: impl Into<String>, epsilon: f64, mc: &MonteCarloResult) -> Self {
        let cell = |name: &str| {
            mc.metric(name).and_then(|m| m.ci).map(|c| Cell {
                value: c.mean,
                lower: Some(c.lower),
                upper: Some(c.upper),
            })
        };
        Self {
            label: label.into(),
            epsilon: Some(epsilon),
            p: cell("p"),
            median: cell("median"),
            s25: cell("s25"),
            s50: cell("s50"),
            s75: cell("s75"),
        }
    }

    fn cells(&self) -> [Option<Cell>; 5] {
        [self.p, self.median, self.s25, self.s50, self.s75]
    }
}

const COLUMNS: [&str; 5] = ["p", "median", "s25", "s50", "s75"];

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub fn write_table_csv(rows: &[TableRow], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["label".to_string(), "epsilon".to_string()];
    for c in COLUMNS {
        header.extend([c.to_string(), format!("{c}_lower"), format!("{c}_upper")]);
    }
    w.write_record(&header)?;
    for row in rows {
        let mut rec = vec![row.label.clone(), fmt_opt(row.epsilon)];
        for cell in row.cells() {
            rec.push(fmt_opt(cell.map(|c| c.value)));
            rec.push(fmt_opt(cell.and_then(|c| c.lower)));
            rec.push(fmt_opt(cell.and_then(|c| c.upper)));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn render_cell(c: Option<Cell>, median: bool) -> String {
    let Some(c) = c else { return "-".into() };
    let f = |x: f64| {
        if median {
            format!("{x:.1}")
        } else {
            format!("{x:.2}")
        }
    };
    let bound = |x: Option<f64>| x.map_or("NA".to_string(), f);
    match (c.lower, c.upper) {
        (None, None) => f(c.value),
        (lo, hi) => format!("{} ({}; {})", f(c.value), bound(lo), bound(hi)),
    }
}

/// Fixed-width text table for terminals.
pub fn render_table(rows: &[TableRow]) -> String {
    let mut lines = vec![format!(
        "{:<24} {:>8} {:>20} {:>22} {:>20} {:>20} {:>20}",
        "label", "epsilon", "p", "median", "s25", "s50", "s75"
    )];
    for row in rows {
        let cells = row.cells();
        lines.push(format!(
            "{:<24} {:>8} {:>20} {:>22} {:>20} {:>20} {:>20}",
            row.label,
            row.epsilon.map_or("-".to_string(), |e| format!("{e}")),
            render_cell(cells[0], false),
            render_cell(cells[1], true),
            render_cell(cells[2], false),
            render_cell(cells[3], false),
            render_cell(cells[4], false),
        ));
    }
    lines.join("\n") + "\n"
}

/// Step vertices: each grid point contributes `(t_j, S_{j-1})` then `(t_j, S_j)`,
/// with `S_{-1} = 1`, so plotters joining points with lines draw exact steps.
pub fn write_plotdata(curve: &KmCurve, band: Option<&ConfidenceBand>, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["time", "survival"];
    if band.is_some() {
        header.extend(["lower", "upper"]);
    }
    w.write_record(&header)?;
    let grid = curve.grid();
    let v = curve.values();
    for j in 0..v.len() {
        let t = grid.point(j).to_string();
        let prev = if j == 0 { 0 } else { j - 1 };
        for (k, first) in [(prev, true), (j, false)] {
            let s = if j == 0 && first { 1.0 } else { v[k] };
            let mut rec = vec![t.clone(), s.to_string()];
            if let Some(b) = band {
                let (lo, hi) = if j == 0 && first { (1.0, 1.0) } else { (b.lower[k], b.upper[k]) };
                rec.extend([lo.to_string(), hi.to_string()]);
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `contents` produced by `f` into `path`, creating parent directories.
pub fn write_file(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut buf = Vec::new();
    f(&mut buf)?;
    std::fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, |buf| {
        serde_json::to_writer_pretty(&mut *buf, value)?;
        buf.push(b'\n');
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use dpkm_core::survival::{build_grid, count_events, km_estimate};
    use dpkm_core::SurvivalDataset;

    fn toy_curve() -> KmCurve {
        let ds = SurvivalDataset::from_pairs([(1.0, true), (2.0, true), (3.0, false), (4.0, true), (5.0, false)])
            .unwrap();
        km_estimate(&count_events(&ds, &build_grid(5.0, 1.0).unwrap()).unwrap())
    }

    fn rows(csv: &[u8]) -> Vec<Vec<String>> {
        let mut r = csv::Reader::from_reader(csv);
        r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect()
    }

    #[test]
    fn toy_plot_has_twelve_vertices() {
        let mut buf = Vec::new();
        write_plotdata(&toy_curve(), None, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("time,survival\n"));
        let r = rows(&buf);
        assert_eq!(r.len(), 12);
        assert_eq!(r[0], vec!["0", "1"]);
        assert_eq!(r[2], vec!["1", "1"]);
        assert_eq!(r[3], vec!["1", "0.8"]);
    }

    #[test]
    fn flat_curve_and_band_columns() {
        let g = build_grid(3.0, 1.0).unwrap();
        let flat = KmCurve::new(g, vec![1.0; 4]).unwrap();
        let band = ConfidenceBand {
            lower: vec![1.0; 4],
            upper: vec![1.0; 4],
            alpha: 0.05,
        };
        let mut buf = Vec::new();
        write_plotdata(&flat, Some(&band), &mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("time,survival,lower,upper\n"));
        assert!(rows(&buf).iter().all(|r| r[1] == "1" && r.len() == 4));
    }

    #[test]
    fn table_csv_layout() {
        let row = TableRow {
            label: "non-dp".into(),
            epsilon: None,
            p: None,
            median: Some(Cell {
                value: 24.0,
                lower: Some(22.0),
                upper: Some(25.0),
            }),
            s25: Some(Cell::bare(0.58)),
            s50: None,
            s75: None,
        };
        let mut buf = Vec::new();
        write_table_csv(&[row.clone()], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "label,epsilon,p,p_lower,p_upper,median,median_lower,median_upper,s25,s25_lower,s25_upper,s50,s50_lower,s50_upper,s75,s75_lower,s75_upper"
        );
        assert_eq!(lines.next().unwrap(), "non-dp,,,,,24,22,25,0.58,,,,,,,,");
        assert!(render_table(&[row]).contains("24.0 (22.0; 25.0)"));
    }
}
