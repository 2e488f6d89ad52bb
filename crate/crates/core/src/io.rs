//! File formats: series CSV ingestion, draw archives, summary tables and
//! minimal SVG plots.
//!
//! Decimal output uses 17 significant digits so every written value parses
//! back to the identical double.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::{PosteriorDraws, TraceRow};
use crate::summary::{CoherencySummary, SummaryBundle};
use crate::timefreq::TimeSeries;

/// Magic prefix of a draw archive.
pub const DRAWS_MAGIC: &[u8; 8] = b"VNPCDRW1";

/// Formats `x` with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Column selection for CSV ingestion: header names, or 1-based positions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ColumnSelector {
    All,
    Names(Vec<String>),
}

impl ColumnSelector {
    /// Parses a comma-separated list; an empty string selects all columns.
    pub fn parse(spec: &str) -> Self {
        let names: Vec<String> = spec
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        if names.is_empty() {
            ColumnSelector::All
        } else {
            ColumnSelector::Names(names)
        }
    }

    fn resolve(&self, header: &[String]) -> Result<Vec<usize>> {
        match self {
            ColumnSelector::All => Ok((0..header.len()).collect()),
            ColumnSelector::Names(names) => names
                .iter()
                .map(|name| {
                    if let Some(i) = header.iter().position(|h| h == name) {
                        return Ok(i);
                    }
                    match name.parse::<usize>() {
                        Ok(i) if (1..=header.len()).contains(&i) => Ok(i - 1),
                        _ => Err(Error::InvalidConfig(format!(
                            "column '{name}' not found (available: {})",
                            header.join(", ")
                        ))),
                    }
                })
                .collect(),
        }
    }
}

/// A series read from disk together with its column names.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedSeries {
    pub names: Vec<String>,
    pub series: TimeSeries,
}

/// Reads a CSV with a header row, one column per series and one row per
/// time point. Empty or non-numeric cells are rejected.
pub fn read_series_csv(path: &Path, columns: &ColumnSelector) -> Result<NamedSeries> {
    let file = File::open(path)?;
    read_series_from(BufReader::new(file), columns)
}

pub fn read_series_from(reader: impl Read, columns: &ColumnSelector) -> Result<NamedSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() {
        return Err(Error::Parse("CSV has no header columns".into()));
    }
    let cols = columns.resolve(&header)?;
    let mut values = Vec::new();
    let mut n = 0;
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        for &c in &cols {
            let cell = record.get(c).unwrap_or("");
            if cell.is_empty() {
                return Err(Error::Parse(format!(
                    "missing value in row {} column '{}'",
                    row + 2,
                    header[c]
                )));
            }
            let v: f64 = cell.parse().map_err(|_| {
                Error::Parse(format!(
                    "non-numeric value '{cell}' in row {} column '{}'",
                    row + 2,
                    header[c]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Parse(format!(
                    "non-finite value in row {} column '{}'",
                    row + 2,
                    header[c]
                )));
            }
            values.push(v);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::InsufficientData("CSV contains no data rows".into()));
    }
    Ok(NamedSeries {
        names: cols.iter().map(|&c| header[c].clone()).collect(),
        series: TimeSeries::new(n, cols.len(), values)?,
    })
}

pub fn write_series_csv(path: &Path, z: &TimeSeries, names: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(names)?;
    for t in 0..z.len() {
        w.write_record(z.row(t).iter().map(|&v| fmt17(v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Header of a draw archive.
#[derive(Clone, Debug, PartialEq)]
pub struct DrawsHeader {
    pub n: usize,
    pub d: usize,
    pub draws: usize,
    pub omegas: Vec<f64>,
}

/// Writes spectral draws as: magic `VNPCDRW1`; little-endian `u64` values
/// `n`, `d`, `M`, `H`; `H` frequencies as `f64`; then `M * H * d * d` realified
/// components as `f64`, draw-major, frequency next, component fastest.
pub fn write_draws(path: &Path, draws: &PosteriorDraws) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(DRAWS_MAGIC)?;
    for v in [draws.grid.n(), draws.d, draws.len(), draws.half_len()] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    for om in draws.grid.omegas() {
        w.write_all(&om.to_le_bytes())?;
    }
    for v in &draws.spectra {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_draws(path: &Path) -> Result<(DrawsHeader, Vec<f64>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != DRAWS_MAGIC {
        return Err(Error::Parse(format!(
            "{} is not a draw archive",
            path.display()
        )));
    }
    let mut word = [0u8; 8];
    let mut next_u64 = |r: &mut BufReader<File>| -> Result<usize> {
        r.read_exact(&mut word)?;
        Ok(u64::from_le_bytes(word) as usize)
    };
    let (n, d, m, h) = (
        next_u64(&mut r)?,
        next_u64(&mut r)?,
        next_u64(&mut r)?,
        next_u64(&mut r)?,
    );
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    let expected = (h + m * h * d * d) * 8;
    if rest.len() != expected {
        return Err(Error::Parse(format!(
            "draw archive has {} payload bytes, expected {expected}",
            rest.len()
        )));
    }
    let mut vals = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let omegas = vals.by_ref().take(h).collect();
    let data = vals.collect();
    Ok((
        DrawsHeader {
            n,
            d,
            draws: m,
            omegas,
        },
        data,
    ))
}

pub fn write_traces_csv(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record([
        "iter",
        "k",
        "log_posterior",
        "acc_k",
        "acc_radial",
        "acc_location",
        "acc_angle",
        "acc_beta",
    ])?;
    for row in trace {
        let r = row.rates;
        w.write_record([
            row.iter.to_string(),
            row.k.to_string(),
            fmt17(row.log_posterior),
            rate_cell(r.k),
            rate_cell(r.radial),
            rate_cell(r.location),
            rate_cell(r.angle),
            rate_cell(r.beta),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Acceptance rate cell; blocks that never proposed are written as `NA`.
fn rate_cell(r: Option<f64>) -> String {
    r.map_or_else(|| "NA".into(), fmt17)
}

/// One row of a per-component summary table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub omega: f64,
    pub median: f64,
    pub lo90_pointwise: f64,
    pub hi90_pointwise: f64,
    pub lo90_uniform: f64,
    pub hi90_uniform: f64,
}

pub fn summary_rows(bundle: &SummaryBundle, c: usize) -> Vec<SummaryRow> {
    let comps = bundle.d * bundle.d;
    bundle
        .omegas
        .iter()
        .enumerate()
        .map(|(j, &omega)| {
            let i = j * comps + c;
            SummaryRow {
                omega,
                median: bundle.median[i],
                lo90_pointwise: bundle.lo_pointwise[i],
                hi90_pointwise: bundle.hi_pointwise[i],
                lo90_uniform: bundle.region.lower[i],
                hi90_uniform: bundle.region.upper[i],
            }
        })
        .collect()
}

/// Writes `summary_<component>.csv` for every realified component.
pub fn write_summary_csvs(dir: &Path, bundle: &SummaryBundle) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for (c, label) in bundle.component_labels().iter().enumerate() {
        let path = dir.join(format!("summary_{label}.csv"));
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&path)?));
        w.write_record([
            "omega",
            "median",
            "lo90_pointwise",
            "hi90_pointwise",
            "lo90_uniform",
            "hi90_uniform",
        ])?;
        for r in summary_rows(bundle, c) {
            w.write_record(
                [
                    r.omega,
                    r.median,
                    r.lo90_pointwise,
                    r.hi90_pointwise,
                    r.lo90_uniform,
                    r.hi90_uniform,
                ]
                .map(fmt17),
            )?;
        }
        w.flush()?;
        paths.push(path);
    }
    Ok(paths)
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let rows = rdr
        .deserialize()
        .collect::<std::result::Result<Vec<SummaryRow>, _>>()?;
    Ok(rows)
}

pub fn write_coherency_csv(path: &Path, coh: &CoherencySummary) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["omega", "median", "lo90_pointwise", "hi90_pointwise"])?;
    for j in 0..coh.omegas.len() {
        w.write_record([coh.omegas[j], coh.median[j], coh.lower[j], coh.upper[j]].map(fmt17))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// A labelled polyline for [`svg_plot`].
#[derive(Clone, Debug)]
pub struct Line {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub color: &'static str,
    pub dashed: bool,
}

impl Line {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>, color: &'static str) -> Self {
        Self {
            label: label.into(),
            points,
            color,
            dashed: false,
        }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

/// Renders polylines on shared axes as a standalone SVG document.
pub fn svg_plot(title: &str, x_label: &str, y_label: &str, lines: &[Line]) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (70.0, 20.0, 40.0, 50.0);
    let finite = lines
        .iter()
        .flat_map(|l| l.points.iter())
        .filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in finite {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let sy = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r##"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
        w - left - right,
        h - top - bottom
    );
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            sx(fx),
            h - bottom + 16.0,
            tick(fx)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 6.0,
            sy(fy) + 4.0,
            tick(fy)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (left + w - right) / 2.0,
        h - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (top + h - bottom) / 2.0,
        (top + h - bottom) / 2.0,
        escape(y_label)
    );
    for (i, line) in lines.iter().enumerate() {
        let pts: Vec<String> = line
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let dash = if line.dashed {
            r#" stroke-dasharray="5,4""#
        } else {
            ""
        };
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5"{dash} points="{}"/>"#,
            line.color,
            pts.join(" ")
        );
        let ly = top + 14.0 + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}"{dash}/><text x="{}" y="{}">{}</text>"#,
            w - right - 120.0,
            w - right - 100.0,
            line.color,
            w - right - 95.0,
            ly + 4.0,
            escape(&line.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt17_round_trips() {
        for x in [
            0.1,
            1.0 / 3.0,
            -2.5e-300,
            6.02214076e23,
            f64::MIN_POSITIVE,
            0.0,
        ] {
            assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt17(f64::NAN), "NaN");
    }

    #[test]
    fn csv_ingestion_selects_and_validates() {
        let text = "a,b,c\n1,2,3\n4,5,6\n";
        let all = read_series_from(text.as_bytes(), &ColumnSelector::All).unwrap();
        assert_eq!(all.series.dim(), 3);
        assert_eq!(all.series.row(1), &[4.0, 5.0, 6.0]);
        let sel = read_series_from(text.as_bytes(), &ColumnSelector::parse("c,1")).unwrap();
        assert_eq!(sel.names, ["c", "a"]);
        assert_eq!(sel.series.row(0), &[3.0, 1.0]);
        assert!(matches!(
            read_series_from(text.as_bytes(), &ColumnSelector::parse("z")),
            Err(Error::InvalidConfig(_))
        ));
        let missing = "a,b\n1,\n";
        assert!(matches!(
            read_series_from(missing.as_bytes(), &ColumnSelector::All),
            Err(Error::Parse(_))
        ));
        let bad = "a\nx\n";
        assert!(matches!(
            read_series_from(bad.as_bytes(), &ColumnSelector::All),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn svg_is_well_formed_enough() {
        let s = svg_plot(
            "t <1>",
            "x",
            "y",
            &[Line::new("a", vec![(0.0, 1.0), (1.0, 2.0)], "black").dashed()],
        );
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("t &lt;1&gt;"));
        assert!(s.contains("stroke-dasharray"));
    }
}
