//! CSV emission and ingestion.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nanomotion::correlator::{Click, G2Curve};

use crate::error::{io_err, CliError};

/// Shortest decimal that round-trips; exponent form outside `[1e-4, 1e15)`.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// `x` rounded to six significant digits.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let decimals = (5 - x.abs().log10().floor() as i32).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Accumulates rows and writes them in one piece.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &str) -> Self {
        Self {
            text: format!("{header}\n"),
        }
    }

    pub fn row<I: IntoIterator<Item = String>>(&mut self, cells: I) {
        let mut first = true;
        for c in cells {
            if !first {
                self.text.push(',');
            }
            first = false;
            self.text.push_str(&c);
        }
        self.text.push('\n');
    }

    pub fn nums(&mut self, values: &[f64]) {
        self.row(values.iter().map(|&v| num(v)));
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        fs::write(path, &self.text).map_err(io_err(path))
    }
}

pub fn key_values(pairs: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        let _ = writeln!(out, "{k}={v}");
    }
    out
}

/// Data rows (after the header) as numeric columns.
fn read_table(path: &Path, header: &[&str], min_cols: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let bad = |line: usize, msg: String| CliError::Csv {
        path: path.display().to_string(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    let (_, head) = lines.next().ok_or_else(|| bad(1, "file is empty".into()))?;
    let cols: Vec<&str> = head.split(',').map(str::trim).collect();
    if cols.len() < min_cols || cols[..min_cols] != header[..min_cols] {
        return Err(bad(1, format!("expected header starting {:?}, found {head:?}", header[..min_cols].join(","))));
    }
    let mut rows = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| bad(n + 1, format!("{e}")))?;
        if row.len() < min_cols {
            return Err(bad(n + 1, format!("expected {min_cols} columns, found {}", row.len())));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(bad(2, "no data rows".into()));
    }
    Ok(rows)
}

/// Reads `tau_s,g2[,stderr]`.
pub fn read_g2(path: &Path) -> Result<G2Curve, CliError> {
    let rows = read_table(path, &["tau_s", "g2", "stderr"], 2)?;
    Ok(G2Curve {
        tau: rows.iter().map(|r| r[0]).collect(),
        g2: rows.iter().map(|r| r[1]).collect(),
        stderr: rows.iter().map(|r| r.get(2).copied().unwrap_or(f64::NAN)).collect(),
    })
}

/// Reads `t_s,detector`, sorted by time.
pub fn read_clicks(path: &Path) -> Result<Vec<Click>, CliError> {
    let rows = read_table(path, &["t_s", "detector"], 2)?;
    let mut clicks = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        if r[1] != 1.0 && r[1] != 2.0 {
            return Err(CliError::Csv {
                path: path.display().to_string(),
                line: i + 2,
                msg: format!("detector must be 1 or 2, found {}", r[1]),
            });
        }
        clicks.push(Click {
            time: r[0],
            detector: r[1] as u8,
        });
    }
    clicks.sort_by(|a, b| a.time.total_cmp(&b.time));
    Ok(clicks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.0, 1.0, -2.5, 1e-9, 8.3e7, 1.0 / 3.0, 6.02e23, 1e-300, 123456.789] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(1e-9), "1e-9");
        assert_eq!(num(0.25), "0.25");
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(1.875104068711961), "1.87510");
        assert_eq!(sig6(10.995540734875467), "10.9955");
        assert_eq!(sig6(0.25), "0.250000");
        assert_eq!(sig6(-1.3622), "-1.36220");
    }
}
