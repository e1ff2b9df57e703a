//! Wide CSV panels and result tables.
//!
//! A panel file may start with `# key=value` lines (`target`, `horizon`),
//! followed by a header `t,y,<name>...` and one row per time.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::harness::{ResultTable, RobustnessRow};
use crate::types::ForecastPanel;

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim().to_ascii_lowercase().as_str(), "" | "na" | "nan" | "null" | ".")
}

pub fn parse_panel<R: BufRead>(reader: R) -> Result<ForecastPanel> {
    let mut target = None;
    let mut horizon = None;
    let mut body = String::new();
    for line in reader.lines() {
        let line = line?;
        if let Some(meta) = line.strip_prefix('#') {
            if let Some((k, v)) = meta.split_once('=') {
                match k.trim() {
                    "target" => target = Some(v.trim().to_string()),
                    "horizon" => {
                        horizon = Some(
                            v.trim().parse().map_err(|_| Error::Schema(format!("bad horizon `{}`", v.trim())))?,
                        )
                    }
                    _ => {}
                }
            }
            continue;
        }
        if !line.trim().is_empty() {
            body.push_str(&line);
            body.push('\n');
        }
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(body.as_bytes());
    let header = rdr.headers().map_err(|e| Error::Schema(e.to_string()))?.clone();
    if header.len() < 2 || &header[0] != "t" || &header[1] != "y" {
        return Err(Error::Schema("header must start with `t,y`".into()));
    }
    let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    if names.is_empty() {
        return Err(Error::Schema("panel has no candidate columns".into()));
    }
    let (mut times, mut y, mut rows) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Schema(e.to_string()))?;
        let row = i + 1;
        let t: i64 = rec[0].parse().map_err(|_| Error::Schema(format!("row {row}: bad time `{}`", &rec[0])))?;
        if times.last().is_some_and(|&p| t <= p) {
            return Err(Error::Schema(format!("row {row}: time {t} is not increasing")));
        }
        let mut vals = Vec::with_capacity(rec.len() - 1);
        for (j, cell) in rec.iter().enumerate().skip(1) {
            let column = header[j].to_string();
            if is_missing(cell) {
                return Err(Error::MissingData { row, column });
            }
            let v: f64 = cell.parse().map_err(|_| Error::Schema(format!("row {row}, column {column}: `{cell}`")))?;
            if !v.is_finite() {
                return Err(Error::MissingData { row, column });
            }
            vals.push(v);
        }
        times.push(t);
        y.push(vals[0]);
        rows.push(vals[1..].to_vec());
    }
    let mut panel = ForecastPanel::new(times, y, names, rows)?;
    panel.target = target;
    panel.horizon = horizon;
    Ok(panel)
}

pub fn read_panel(path: &std::path::Path) -> Result<ForecastPanel> {
    parse_panel(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn write_panel<W: Write>(panel: &ForecastPanel, mut w: W) -> Result<()> {
    if let Some(t) = &panel.target {
        writeln!(w, "# target={t}")?;
    }
    if let Some(h) = panel.horizon {
        writeln!(w, "# horizon={h}")?;
    }
    let mut out = csv::Writer::from_writer(w);
    let header: Vec<&str> = ["t", "y"].into_iter().chain(panel.names().iter().map(String::as_str)).collect();
    out.write_record(&header).map_err(csv_io)?;
    for i in 0..panel.len() {
        let mut rec = vec![panel.times()[i].to_string(), panel.y()[i].to_string()];
        rec.extend(panel.candidates(i).iter().map(f64::to_string));
        out.write_record(&rec).map_err(csv_io)?;
    }
    out.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Result rows as CSV, preceded by `# seed=`, `# version=` and one `# flag=` line per flag.
pub fn write_results<W: Write>(table: &ResultTable, mut w: W) -> Result<()> {
    writeln!(w, "# seed={}", table.metadata.seed)?;
    writeln!(w, "# version={}", table.metadata.version)?;
    for f in &table.metadata.flags {
        writeln!(w, "# flag={f}")?;
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["scenario", "method", "rw", "grid", "point", "se", "n_reps"]).map_err(csv_io)?;
    for r in &table.rows {
        out.write_record([
            r.scenario.clone(),
            r.method.as_str().to_string(),
            r.rw.map_or_else(String::new, |v| v.to_string()),
            r.grid.to_string(),
            r.point.to_string(),
            r.se.to_string(),
            r.n_reps.to_string(),
        ])
        .map_err(csv_io)?;
    }
    out.flush()?;
    Ok(())
}

/// Robustness ratios as CSV with a `# seed=` line.
pub fn write_robustness<W: Write>(rows: &[RobustnessRow], seed: u64, mut w: W) -> Result<()> {
    writeln!(w, "# seed={seed}")?;
    writeln!(w, "# version={}", env!("CARGO_PKG_VERSION"))?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["case", "method", "snr", "ratio", "se"]).map_err(csv_io)?;
    for r in rows {
        out.write_record([
            format!("case{}", r.case.index()),
            r.method.as_str().to_string(),
            r.snr.to_string(),
            r.ratio.to_string(),
            r.se.to_string(),
        ])
        .map_err(csv_io)?;
    }
    out.flush()?;
    Ok(())
}
