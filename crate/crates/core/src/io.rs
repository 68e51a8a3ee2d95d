//! Plain-text CSV helpers shared by the matrix, filter, law and run exports.
//!
//! Numbers are written with 17 significant digits in `%g` style so every
//! `f64` round-trips. Lines starting with `#` are provenance comments and are
//! skipped by the readers.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{IlcError, Result};

/// Formats `x` like C's `%.17g`.
pub fn fmt_g17(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (16 - exp).max(0) as usize;
        strip_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_comment_block(out: &mut String, text: &str) {
    for line in text.lines() {
        let _ = writeln!(out, "# {line}");
    }
}

pub fn write_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let row: Vec<String> = values.into_iter().map(fmt_g17).collect();
    out.push_str(&row.join(","));
    out.push('\n');
}

pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        write_row(&mut out, m.row(i).iter().copied());
    }
    out
}

/// Data lines of a CSV document, with comments and blank lines removed.
pub fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub fn parse_row(lineno: usize, line: &str) -> Result<Vec<f64>> {
    line.split(',')
        .map(|field| {
            field.trim().parse::<f64>().map_err(|e| {
                IlcError::Parse(format!("line {lineno}: cannot parse '{}' as a number: {e}", field.trim()))
            })
        })
        .collect()
}

pub fn matrix_from_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut rows = Vec::new();
    for (lineno, line) in data_lines(text) {
        rows.push((lineno, parse_row(lineno, line)?));
    }
    let Some((_, first)) = rows.first() else {
        return Ok(DMatrix::zeros(0, 0));
    };
    let ncols = first.len();
    if let Some((lineno, r)) = rows.iter().find(|(_, r)| r.len() != ncols) {
        return Err(IlcError::Parse(format!(
            "line {lineno}: expected {ncols} columns, found {}",
            r.len()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i].1[j]))
}

/// Reads `# key = value` metadata comments. The last occurrence wins, so an
/// artifact's own headers override any provenance block written above them.
pub fn metadata<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines().rev().find_map(|l| {
        let rest = l.trim().strip_prefix('#')?.trim();
        let (k, v) = rest.split_once('=')?;
        (k.trim() == key).then(|| v.trim())
    })
}
