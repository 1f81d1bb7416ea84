//! CSV output with 12 significant digits, `.` decimal point and `\n` line endings.

use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::model::{COMPARTMENT_NAMES, NUM_COMPARTMENTS};
use crate::ocp::ControlPath;

pub const SIGNIFICANT_DIGITS: usize = 12;

pub fn trajectory_header() -> String {
    let mut h = String::from("t");
    for name in COMPARTMENT_NAMES {
        h.push(',');
        h.push_str(name);
    }
    h.push_str(",u1,u2,N");
    h
}

pub fn adjoint_header() -> String {
    let mut h = String::from("t");
    for name in COMPARTMENT_NAMES {
        h.push_str(",lambda_");
        h.push_str(name);
    }
    h
}

/// Formats like C's `%.12g`: shortest of fixed or scientific notation with
/// trailing zeros removed.
pub fn format_number(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= SIGNIFICANT_DIGITS as i32 {
        let mantissa = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_fraction(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn push_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(',');
        }
        first = false;
        out.push_str(&format_number(v));
    }
    out.push('\n');
}

/// State trajectory with controls and total population, one row per node.
pub fn write_trajectory(traj: &Trajectory<NUM_COMPARTMENTS>, controls: &ControlPath) -> String {
    let mut out = trajectory_header();
    out.push('\n');
    for (i, (t, x)) in traj.grid.times().zip(&traj.values).enumerate() {
        let n: f64 = x.iter().sum();
        push_row(
            &mut out,
            std::iter::once(t)
                .chain(x.iter().copied())
                .chain([controls.u1[i], controls.u2[i], n]),
        );
    }
    out
}

pub fn write_adjoint(traj: &Trajectory<NUM_COMPARTMENTS>) -> String {
    let mut out = adjoint_header();
    out.push('\n');
    for (t, lam) in traj.grid.times().zip(&traj.values) {
        push_row(&mut out, std::iter::once(t).chain(lam.iter().copied()));
    }
    out
}

/// Generic table writer for auxiliary outputs.
pub fn write_table(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        push_row(&mut out, row);
    }
    out
}

/// Parses a numeric CSV with a header line.
pub fn parse(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Numerical("empty CSV".into()))?
        .split(',')
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|field| {
                field.parse::<f64>().map_err(|e| {
                    Error::Numerical(format!("CSV line {}: `{field}`: {e}", lineno + 2))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if row.len() != header.len() {
            return Err(Error::Numerical(format!(
                "CSV line {} has {} fields, header has {}",
                lineno + 2,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok((header, rows))
}
