//! Deterministic artifact emission: CSV tables and minimal SVG line charts.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};

/// First 12 hex characters of the SHA-256 of `text`; artifact filenames are
/// derived from this so identical configs overwrite their own outputs.
pub fn short_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
}

/// One CSV cell.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            // 17 significant digits: round-trips every f64 exactly.
            Cell::Float(v) => format!("{v:.16e}"),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

/// Writes a CSV table: header row, `,` separator, `.` decimal point,
/// 17-significant-digit floats, LF line endings.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<Cell>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        if row.len() != header.len() {
            bail!("row has {} cells for {} columns", row.len(), header.len());
        }
        let line: Vec<String> = row.iter().map(Cell::render).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// Parses a CSV written by [`write_csv`] back into float rows (non-numeric
/// cells become `NaN`, empty cells are skipped as `None`).
#[cfg(test)]
pub fn read_csv_floats(path: &Path) -> Result<(Vec<String>, Vec<Vec<Option<f64>>>)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .context("empty CSV")?
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .map(|l| {
            l.split(',')
                .map(|c| if c.is_empty() { None } else { Some(c.parse().unwrap_or(f64::NAN)) })
                .collect()
        })
        .collect();
    Ok((header, rows))
}

/// A named polyline for [`emit_svg`].
pub struct Series<'a> {
    pub label: &'a str,
    pub points: &'a [(f64, f64)],
}

const SVG_W: f64 = 800.0;
const SVG_H: f64 = 500.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 50.0;
const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

/// Emits a single dependency-free line chart. Output bytes are a pure
/// function of the inputs (fixed-precision coordinates, no timestamps).
pub fn emit_svg(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series<'_>],
) -> Result<()> {
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-300 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-300 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * (SVG_W - MARGIN_L - MARGIN_R);
    let py = |y: f64| SVG_H - MARGIN_B - (y - y0) / (y1 - y0) * (SVG_H - MARGIN_T - MARGIN_B);

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_W}\" height=\"{SVG_H}\" \
         viewBox=\"0 0 {SVG_W} {SVG_H}\" font-family=\"monospace\" font-size=\"12\">"
    );
    let _ = writeln!(s, "<rect width=\"{SVG_W}\" height=\"{SVG_H}\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"18\" text-anchor=\"middle\">{}</text>",
        SVG_W / 2.0,
        escape(title)
    );
    // Axes.
    let (ax0, ax1) = (px(x0), px(x1));
    let (ay0, ay1) = (py(y0), py(y1));
    let _ = writeln!(
        s,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        fmt6(ax0),
        fmt6(ay0),
        fmt6(ax1),
        fmt6(ay0)
    );
    let _ = writeln!(
        s,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        fmt6(ax0),
        fmt6(ay0),
        fmt6(ax0),
        fmt6(ay1)
    );
    // Axis labels and extreme ticks.
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
        SVG_W / 2.0,
        SVG_H - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>",
        fmt6((ay0 + ay1) / 2.0),
        fmt6((ay0 + ay1) / 2.0),
        escape(y_label)
    );
    for (v, x, y, anchor) in [
        (x0, ax0, ay0 + 16.0, "middle"),
        (x1, ax1, ay0 + 16.0, "middle"),
        (y0, ax0 - 6.0, ay0, "end"),
        (y1, ax0 - 6.0, ay1 + 4.0, "end"),
    ] {
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"{anchor}\">{:.4e}</text>",
            fmt6(x),
            fmt6(y),
            v
        );
    }
    for (idx, ser) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .map(|&(x, y)| format!("{},{}", fmt6(px(x)), fmt6(py(y))))
            .collect();
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{}</text>",
            SVG_W - MARGIN_R - 150.0,
            MARGIN_T + 14.0 * idx as f64,
            escape(ser.label)
        );
    }
    s.push_str("</svg>\n");
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trips_floats() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let vals = [1.0 / 3.0, -2.5e-17, 6.02214076e23, f64::MIN_POSITIVE];
        let rows: Vec<Vec<Cell>> =
            vals.iter().map(|&v| vec![Cell::Int(7), Cell::Float(v), Cell::Empty]).collect();
        write_csv(&path, &["n", "v", "opt"], &rows).unwrap();
        let (header, parsed) = read_csv_floats(&path).unwrap();
        assert_eq!(header, ["n", "v", "opt"]);
        for (row, &v) in parsed.iter().zip(&vals) {
            assert_eq!(row[0], Some(7.0));
            assert_eq!(row[1], Some(v), "exact round-trip");
            assert_eq!(row[2], None);
        }
        let text = fs::read_to_string(&path).unwrap();
        assert!(!text.contains('\r'), "LF endings only");
    }

    #[test]
    fn empty_table_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        write_csv(&path, &["a", "b"], &[]).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "a,b\n");
    }

    #[test]
    fn identical_svg_inputs_give_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let pts: Vec<(f64, f64)> =
            (0..100).map(|k| (k as f64 / 99.0, (k as f64 * 0.37).sin())).collect();
        let series = [Series { label: "H_d", points: &pts }];
        let p1 = dir.path().join("a.svg");
        let p2 = dir.path().join("b.svg");
        emit_svg(&p1, "energy", "t", "H", &series).unwrap();
        emit_svg(&p2, "energy", "t", "H", &series).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
        assert!(fs::read_to_string(&p1).unwrap().contains("polyline"));
    }

    #[test]
    fn hash_is_stable_and_short() {
        assert_eq!(short_hash("abc").len(), 12);
        assert_eq!(short_hash("abc"), short_hash("abc"));
        assert_ne!(short_hash("abc"), short_hash("abd"));
    }
}
