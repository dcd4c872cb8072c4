//! CSV emission and parsing. Floats are written with 17 significant digits
//! so parsing reproduces them exactly.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};

use enlarged_risk::axioms::AxiomReport;

pub const TRAJECTORY_HEADER: &str = "path_id,t,w,tau,rho,rho0,rho1";
pub const SURFACE_HEADER: &str = "path_id,t,w,tau,y,y0,y1";
pub const REPORT_HEADER: &str = "check_id,engine,max_violation,tolerance,verdict";

pub fn fmt_f64(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

/// One row of a trajectory or surface file.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub path_id: usize,
    pub t: f64,
    pub w: f64,
    /// `inf` when no default occurred.
    pub tau: f64,
    pub values: [f64; 3],
}

pub fn write_rows(header: &str, rows: &[Row]) -> String {
    let mut s = String::with_capacity(rows.len() * 120);
    s.push_str(header);
    s.push('\n');
    for r in rows {
        let _ = write!(s, "{},{},{},{}", r.path_id, fmt_f64(r.t), fmt_f64(r.w), fmt_f64(r.tau));
        for v in r.values {
            s.push(',');
            s.push_str(&fmt_f64(v));
        }
        s.push('\n');
    }
    s
}

pub fn parse_rows(header: &str, text: &str) -> Result<Vec<Row>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == header => {}
        other => bail!("schema mismatch: expected header `{header}`, found {other:?}"),
    }
    lines
        .enumerate()
        .map(|(n, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                bail!("line {}: expected 7 fields, found {}", n + 2, f.len());
            }
            let num = |i: usize| f[i].parse::<f64>().with_context(|| format!("line {}: field {}", n + 2, i + 1));
            Ok(Row {
                path_id: f[0].parse().with_context(|| format!("line {}: path_id", n + 2))?,
                t: num(1)?,
                w: num(2)?,
                tau: num(3)?,
                values: [num(4)?, num(5)?, num(6)?],
            })
        })
        .collect()
}

pub fn read_rows(header: &str, path: &Path) -> Result<Vec<Row>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_rows(header, &text)
}

pub fn write_reports(reports: &[AxiomReport]) -> String {
    let mut s = String::from(REPORT_HEADER);
    s.push('\n');
    for r in reports {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.check_id,
            r.engine,
            fmt_f64(r.max_violation),
            fmt_f64(r.tolerance),
            r.verdict
        );
    }
    s
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_round_trip_exactly() {
        let rows = vec![
            Row {
                path_id: 0,
                t: 0.1,
                w: -1.0 / 3.0,
                tau: f64::INFINITY,
                values: [std::f64::consts::PI, 1e-300, -0.0],
            },
            Row {
                path_id: 3,
                t: 1.0,
                w: 2.0f64.sqrt(),
                tau: 0.123456789012345678,
                values: [f64::MIN_POSITIVE, f64::MAX, 5e-324],
            },
        ];
        let text = write_rows(TRAJECTORY_HEADER, &rows);
        let back = parse_rows(TRAJECTORY_HEADER, &text).unwrap();
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(a.path_id, b.path_id);
            for (x, y) in [a.t, a.w, a.tau].iter().chain(&a.values).zip([b.t, b.w, b.tau].iter().chain(&b.values)) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn header_mismatch_is_rejected() {
        assert!(parse_rows(TRAJECTORY_HEADER, "a,b\n").is_err());
    }
}
