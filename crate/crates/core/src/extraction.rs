//! On-resistance extraction from averaged drain voltage, and log-time fits.
//!
//! Averaged drain voltage over a period, with a waveform shape factor `k`
//! (2 for a triangular off-time excursion):
//!
//! ```text
//! V̄ = I_on · R_on · D + V_max · (1 - D) / k
//! R_on = (V̄ - V_max · (1 - D) / k) / (Ī · D)
//! ```

use std::fmt::Write as _;
use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

pub const DEFAULT_SHAPE_FACTOR: f64 = 2.0;
pub const RDS_CSV_HEADER: &str = "t_min,rds_on_ohm";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdsSample {
    /// Minutes.
    pub t: f64,
    pub rds_on: f64,
}

impl RdsSample {
    pub fn new(t: f64, rds_on: f64) -> Result<Self> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::invalid("t_min", format!("must be >= 0, got {t}")));
        }
        if !(rds_on > 0.0) || !rds_on.is_finite() {
            return Err(Error::invalid(
                "rds_on_ohm",
                format!("must be > 0, got {rds_on}"),
            ));
        }
        Ok(Self { t, rds_on })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Ω per unit of ln(minutes).
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n: usize,
    /// Samples at t = 0 excluded from the fit.
    pub dropped: usize,
}

impl FitResult {
    /// Slope per decade of time.
    pub fn slope_log10(&self) -> f64 {
        self.slope * std::f64::consts::LN_10
    }

    /// Flat `key=value` record, one per line.
    pub fn to_record(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "slope={}", self.slope);
        let _ = writeln!(s, "intercept={}", self.intercept);
        let _ = writeln!(s, "r_squared={}", self.r_squared);
        let _ = writeln!(s, "n={}", self.n);
        let _ = writeln!(s, "slope_log10={}", self.slope_log10());
        let _ = writeln!(s, "dropped={}", self.dropped);
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quality {
    Ok,
    /// Extracted resistance ≤ 0: the inputs are mutually inconsistent.
    NonPositive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub rds_on: f64,
    pub quality: Quality,
}

pub fn predict_avg_vin(
    i_on: f64,
    rds_on: f64,
    duty: f64,
    v_max: f64,
    shape_factor: f64,
) -> Result<f64> {
    ensure_finite("i_on", i_on)?;
    ensure_finite("rds_on", rds_on)?;
    ensure_finite("duty", duty)?;
    ensure_finite("v_max", v_max)?;
    ensure_finite("shape_factor", shape_factor)?;
    if !(0.0..=1.0).contains(&duty) {
        return Err(Error::invalid(
            "duty",
            format!("must be in [0, 1], got {duty}"),
        ));
    }
    if shape_factor <= 0.0 {
        return Err(Error::invalid("shape_factor", "must be > 0"));
    }
    Ok(i_on * rds_on * duty + v_max * (1.0 - duty) / shape_factor)
}

pub fn extract_rds_on(
    v_in_avg: f64,
    v_max: f64,
    duty: f64,
    i_avg: f64,
    shape_factor: f64,
) -> Result<Extraction> {
    ensure_finite("v_in_avg", v_in_avg)?;
    ensure_finite("v_max", v_max)?;
    ensure_finite("duty", duty)?;
    ensure_finite("i_avg", i_avg)?;
    ensure_finite("shape_factor", shape_factor)?;
    if !(0.0..=1.0).contains(&duty) {
        return Err(Error::invalid(
            "duty",
            format!("must be in (0, 1], got {duty}"),
        ));
    }
    if shape_factor <= 0.0 {
        return Err(Error::invalid("shape_factor", "must be > 0"));
    }
    let denom = i_avg * duty;
    if denom == 0.0 {
        return Err(Error::Domain("i_avg · duty = 0 divides by zero".into()));
    }
    if i_avg < 0.0 {
        return Err(Error::invalid("i_avg", "must be > 0"));
    }
    let rds_on = (v_in_avg - v_max * (1.0 - duty) / shape_factor) / denom;
    let quality = if rds_on > 0.0 {
        Quality::Ok
    } else {
        Quality::NonPositive
    };
    Ok(Extraction { rds_on, quality })
}

/// Divides every sample by the first one.
pub fn normalize_series(samples: &[RdsSample]) -> Result<Vec<RdsSample>> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InsufficientData("cannot normalise an empty series".into()))?;
    if !(first.rds_on > 0.0) {
        return Err(Error::invalid("rds_on_ohm", "first sample must be > 0"));
    }
    let base = first.rds_on;
    Ok(samples
        .iter()
        .map(|s| RdsSample {
            t: s.t,
            rds_on: s.rds_on / base,
        })
        .collect())
}

/// Ordinary least squares of R_DS(on) against ln(t).
///
/// Samples at `t = 0` have no logarithm; they are dropped and counted in
/// [`FitResult::dropped`]. A series with no spread in R_DS(on) reports
/// `r_squared = 0`.
pub fn fit_log_time(samples: &[RdsSample]) -> Result<FitResult> {
    let used: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.t > 0.0)
        .map(|s| (s.t.ln(), s.rds_on))
        .collect();
    let dropped = samples.len() - used.len();
    if used.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 samples with t > 0, have {}",
            used.len()
        )));
    }
    let n = used.len() as f64;
    let mean_x = used.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = used.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in &used {
        let dx = x - mean_x;
        let dy = y - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx <= f64::EPSILON * mean_x.abs().max(1.0) * n {
        return Err(Error::DegenerateRegression(
            "all samples share the same time".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let r_squared = if syy > 0.0 {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Ok(FitResult {
        slope,
        intercept,
        r_squared,
        n: used.len(),
        dropped,
    })
}

pub fn read_rds_csv<R: Read>(input: R) -> Result<Vec<RdsSample>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .clone();
    let t_col = headers.iter().position(|h| h == "t_min");
    let r_col = headers.iter().position(|h| h == "rds_on_ohm");
    let (Some(t_col), Some(r_col)) = (t_col, r_col) else {
        return Err(Error::Parse(format!(
            "expected header `{RDS_CSV_HEADER}`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    };
    let mut out = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let field = |col: usize, name: &str| -> Result<f64> {
            rec.get(col)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| Error::Parse(format!("row {}: bad `{name}`", row + 2)))
        };
        let t = field(t_col, "t_min")?;
        let r = field(r_col, "rds_on_ohm")?;
        out.push(RdsSample::new(t, r)?);
    }
    Ok(out)
}

pub fn write_rds_csv<W: Write>(samples: &[RdsSample], mut out: W) -> io::Result<()> {
    writeln!(out, "{RDS_CSV_HEADER}")?;
    for s in samples {
        writeln!(out, "{},{}", s.t, s.rds_on)?;
    }
    Ok(())
}
