use std::fmt::Write as _;

use clap::ValueEnum;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
    Csv,
}

/// Every command output can be shown as a human table, a JSON document or
/// CSV records.
pub trait Report: Serialize {
    fn table(&self) -> String;
    fn csv(&self) -> csv::Result<String>;

    fn render(&self, format: Format) -> Result<String, String> {
        match format {
            Format::Table => Ok(self.table()),
            Format::Json => serde_json::to_string_pretty(self)
                .map(|mut s| {
                    s.push('\n');
                    s
                })
                .map_err(|e| e.to_string()),
            Format::Csv => self.csv().map_err(|e| e.to_string()),
        }
    }
}

/// Four significant digits, switching to exponent form for very small or
/// large magnitudes.
pub fn sig4(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-3..6).contains(&mag) {
        return format!("{x:.3e}");
    }
    let s = format!("{:.*}", (3 - mag).max(0) as usize, x);
    // rounding can carry into a new digit, e.g. 9.9996 -> 10.000
    let rounded: f64 = s.parse().unwrap_or(x);
    if rounded != 0.0 && rounded.abs().log10().floor() as i32 > mag {
        return format!("{:.*}", (2 - mag).max(0) as usize, x);
    }
    s
}

pub fn pct(x: f64) -> String {
    format!("{}%", sig4(100.0 * x))
}

/// Machine format: 17 significant digits, locale independent.
pub fn full(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn opt_full(x: Option<f64>) -> String {
    x.map(full).unwrap_or_default()
}

/// Left-aligned first column, right-aligned others.
pub fn grid(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &mut dyn Iterator<Item = &str>| {
        for (i, (cell, w)) in cells.zip(&widths).enumerate() {
            let pad = w - cell.chars().count();
            if i == 0 {
                out.push_str(cell);
                out.push_str(&" ".repeat(pad));
            } else {
                out.push_str("  ");
                out.push_str(&" ".repeat(pad));
                out.push_str(cell);
            }
        }
        let trimmed = out.trim_end().len();
        out.truncate(trimmed);
        out.push('\n');
    };
    line(&mut out, &mut headers.iter().copied());
    let rule: usize = widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1);
    let _ = writeln!(out, "{}", "-".repeat(rule));
    for row in rows {
        line(&mut out, &mut row.iter().map(String::as_str));
    }
    out
}

pub fn csv_string(
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> csv::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_significant_digits() {
        assert_eq!(sig4(0.36193), "0.3619");
        assert_eq!(sig4(36.193), "36.19");
        assert_eq!(sig4(1.0), "1.000");
        assert_eq!(sig4(9.99996), "10.00");
        assert_eq!(sig4(1e-6), "1.000e-6");
        assert_eq!(sig4(1e14), "1.000e14");
        assert_eq!(pct(0.2890), "28.90%");
    }

    #[test]
    fn full_precision_round_trips() {
        for x in [0.1, 1.0 / 3.0, 2.5e-4, 8e10] {
            assert_eq!(full(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn grid_aligns() {
        let t = grid(&["a", "bb"], &[vec!["xyz".into(), "1".into()]]);
        assert_eq!(t, "a    bb\n-------\nxyz   1\n");
    }
}
