//! The switch under test: datasheet ratings, live on-resistance, SOA checks.
//!
//! Defaults are the EPC2038 eGaN FET. The datasheet on-resistance is taken as
//! 3.3 Ω; the worked measurement example quotes 3.33 Ω for the same part, a
//! difference well inside the 5% extraction tolerance used downstream.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::celsius_to_kelvin;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceRatings {
    /// Pulsed drain-source limit, V. Applied to peak (ringing) values.
    pub vds_max_pulsed: f64,
    /// Continuous drain-source limit, V. Applied to cycle-averaged values.
    pub vds_max_continuous: f64,
    pub id_max: f64,
    pub vgs_max: f64,
    pub vgs_min: f64,
    /// Junction temperature window, K.
    pub tj_min: f64,
    pub tj_max: f64,
    pub rds_on_nominal: f64,
}

impl DeviceRatings {
    pub fn epc2038() -> Self {
        Self {
            vds_max_pulsed: 120.0,
            vds_max_continuous: 100.0,
            id_max: 0.5,
            vgs_max: 6.0,
            vgs_min: -5.0,
            tj_min: celsius_to_kelvin(-40.0),
            tj_max: celsius_to_kelvin(150.0),
            rds_on_nominal: 3.3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("vds_max_pulsed", self.vds_max_pulsed),
            ("vds_max_continuous", self.vds_max_continuous),
            ("id_max", self.id_max),
            ("vgs_max", self.vgs_max),
            ("vgs_min", self.vgs_min),
            ("tj_min", self.tj_min),
            ("tj_max", self.tj_max),
            ("rds_on_nominal", self.rds_on_nominal),
        ];
        for (name, v) in all {
            crate::error::ensure_finite(name, v)?;
        }
        if self.vds_max_continuous <= 0.0 {
            return Err(Error::invalid("vds_max_continuous", "must be > 0"));
        }
        if self.vds_max_pulsed < self.vds_max_continuous {
            return Err(Error::invalid(
                "vds_max_pulsed",
                "must be >= vds_max_continuous",
            ));
        }
        if self.id_max <= 0.0 {
            return Err(Error::invalid("id_max", "must be > 0"));
        }
        if !(self.vgs_min < 0.0 && 0.0 < self.vgs_max) {
            return Err(Error::invalid("vgs_min", "require vgs_min < 0 < vgs_max"));
        }
        if !(0.0 < self.tj_min && self.tj_min < self.tj_max) {
            return Err(Error::invalid("tj_min", "require 0 K < tj_min < tj_max"));
        }
        if self.rds_on_nominal <= 0.0 {
            return Err(Error::invalid("rds_on_nominal", "must be > 0"));
        }
        Ok(())
    }
}

impl Default for DeviceRatings {
    fn default() -> Self {
        Self::epc2038()
    }
}

/// Which rating an operating point exceeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Limit {
    VdsPulsed,
    VdsContinuous,
    IdMax,
    TjMin,
    TjMax,
}

impl Limit {
    pub fn name(self) -> &'static str {
        match self {
            Limit::VdsPulsed => "vds_max_pulsed",
            Limit::VdsContinuous => "vds_max_continuous",
            Limit::IdMax => "id_max",
            Limit::TjMin => "tj_min",
            Limit::TjMax => "tj_max",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoaViolation {
    pub limit: Limit,
    pub value: f64,
    pub bound: f64,
    /// Always positive: how far past the bound the value sits.
    pub excess: f64,
}

impl fmt::Display for SoaViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} exceeded: {} vs {} (by {})",
            self.limit.name(),
            self.value,
            self.bound,
            self.excess
        )
    }
}

/// Peak operating point against the pulsed V_DS limit, I_D and T_J.
pub fn check_soa(
    ratings: &DeviceRatings,
    vds_peak: f64,
    id_peak: f64,
    tj: f64,
) -> Vec<SoaViolation> {
    let mut out = Vec::new();
    if vds_peak > ratings.vds_max_pulsed {
        out.push(over(Limit::VdsPulsed, vds_peak, ratings.vds_max_pulsed));
    }
    if id_peak > ratings.id_max {
        out.push(over(Limit::IdMax, id_peak, ratings.id_max));
    }
    if tj < ratings.tj_min {
        out.push(SoaViolation {
            limit: Limit::TjMin,
            value: tj,
            bound: ratings.tj_min,
            excess: ratings.tj_min - tj,
        });
    }
    if tj > ratings.tj_max {
        out.push(over(Limit::TjMax, tj, ratings.tj_max));
    }
    out
}

/// Cycle-averaged V_DS against the continuous limit.
pub fn check_soa_continuous(ratings: &DeviceRatings, vds_avg: f64) -> Option<SoaViolation> {
    (vds_avg > ratings.vds_max_continuous)
        .then(|| over(Limit::VdsContinuous, vds_avg, ratings.vds_max_continuous))
}

fn over(limit: Limit, value: f64, bound: f64) -> SoaViolation {
    SoaViolation {
        limit,
        value,
        bound,
        excess: value - bound,
    }
}

/// Live on-resistance of the switch, tracking accumulated degradation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceState {
    pub rds_on: f64,
    pub delta_r_fraction: f64,
    /// Minutes under stress so far.
    pub stress_time: f64,
}

impl DeviceState {
    pub fn fresh(nominal: f64) -> Result<Self> {
        Ok(Self {
            rds_on: effective_rds_on(0.0, nominal)?,
            delta_r_fraction: 0.0,
            stress_time: 0.0,
        })
    }

    /// State with the given degradation applied to `nominal`.
    pub fn with_degradation(nominal: f64, delta_r_fraction: f64, stress_time: f64) -> Result<Self> {
        Ok(Self {
            rds_on: effective_rds_on(delta_r_fraction, nominal)?,
            delta_r_fraction,
            stress_time,
        })
    }

    /// The undegraded resistance this state was built from.
    pub fn nominal(&self) -> f64 {
        self.rds_on / (1.0 + self.delta_r_fraction)
    }
}

pub fn effective_rds_on(delta_r_fraction: f64, nominal: f64) -> Result<f64> {
    if !(nominal > 0.0) || !nominal.is_finite() {
        return Err(Error::invalid(
            "rds_on_nominal",
            format!("must be > 0, got {nominal}"),
        ));
    }
    if !(delta_r_fraction >= 0.0) || !delta_r_fraction.is_finite() {
        return Err(Error::invalid(
            "delta_r_fraction",
            format!("must be >= 0, got {delta_r_fraction}"),
        ));
    }
    Ok(nominal * (1.0 + delta_r_fraction))
}
