//! CSV emission and per-grid-point aggregation.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

/// Formats like C's `%.6g`.
pub fn fmt_g6(v: f64) -> String {
    fmt_g(v, 6)
}

/// Formats like C's `%.<precision>g`.
pub fn fmt_g(v: f64, precision: usize) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let p = precision.max(1);
    // Exponent after rounding to p significant digits.
    let sci = format!("{:.*e}", p - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= p as i32 {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp) as usize;
        strip_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Mean and 95% normal-approximation half-width (`1.96 sd / sqrt(n)`, sample
/// sd). The half-width is 0 for a single value.
pub fn mean_ci(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, 1.96 * var.sqrt() / (n as f64).sqrt())
}

/// Group regret of every replication at the grid points of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioCurves {
    pub scenario: String,
    pub grid: Vec<u64>,
    /// `curves[rep][g]`
    pub curves: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub t: u64,
    pub mean: f64,
    pub ci_half: f64,
    pub replications: usize,
}

impl ScenarioCurves {
    pub fn summary(&self) -> Vec<SummaryRow> {
        self.grid
            .iter()
            .enumerate()
            .map(|(g, &t)| {
                let col: Vec<f64> = self.curves.iter().map(|c| c[g]).collect();
                let (mean, ci_half) = mean_ci(&col);
                SummaryRow { t, mean, ci_half, replications: col.len() }
            })
            .collect()
    }

    /// Final-horizon values, one per replication.
    pub fn finals(&self) -> Vec<f64> {
        self.curves.iter().map(|c| *c.last().unwrap_or(&0.0)).collect()
    }
}

pub fn write_curves<W: Write>(out: &mut W, all: &[ScenarioCurves]) -> io::Result<()> {
    writeln!(out, "scenario,replication,t,group_regret")?;
    for sc in all {
        for (rep, curve) in sc.curves.iter().enumerate() {
            for (t, v) in sc.grid.iter().zip(curve) {
                writeln!(out, "{},{rep},{t},{}", sc.scenario, fmt_g6(*v))?;
            }
        }
    }
    Ok(())
}

pub fn write_summary<W: Write>(out: &mut W, all: &[ScenarioCurves]) -> io::Result<()> {
    writeln!(out, "scenario,t,mean,ci_half,replications")?;
    for sc in all {
        for row in sc.summary() {
            writeln!(
                out,
                "{},{},{},{},{}",
                sc.scenario,
                row.t,
                fmt_g6(row.mean),
                fmt_g6(row.ci_half),
                row.replications
            )?;
        }
    }
    Ok(())
}

/// Writes `curves.csv` and `summary.csv` into `dir`, creating it if needed.
pub fn emit_csv(dir: &Path, all: &[ScenarioCurves]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut f = BufWriter::new(fs::File::create(dir.join("curves.csv"))?);
    write_curves(&mut f, all)?;
    f.flush()?;
    let mut f = BufWriter::new(fs::File::create(dir.join("summary.csv"))?);
    write_summary(&mut f, all)?;
    f.flush()
}
