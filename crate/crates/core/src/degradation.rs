//! Hot-carrier / surface-trap dynamic on-resistance model.
//!
//! The fractional on-resistance shift grows with the logarithm of stress time:
//!
//! ```text
//! slope(V, T) = a + b · ln(1 + exp((V - V_FD) / α)) · √T · exp(ħω_LO / kT)
//! ΔR/R(t)     = slope(V, T) · ln(1 + t / t0) + offset
//! ```
//!
//! The `exp(ħω_LO/kT)` factor decays faster than `√T` grows for every
//! `T < 2ħω_LO/k` (≈ 2135 K with the default phonon energy), which gives the
//! slope its negative temperature coefficient. `offset` carries the small
//! vertical shift attributed to switching frequency and current; it never
//! changes the slope.

use serde::{Deserialize, Serialize};

use crate::device::DeviceState;
use crate::error::{Error, Result};

pub const BOLTZMANN_EV_PER_K: f64 = 8.617_333_262e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradationParams {
    pub a: f64,
    /// Per √K.
    pub b: f64,
    /// Optical phonon energy, eV.
    pub hbar_omega_lo: f64,
    /// Full-depletion voltage, V.
    pub v_fd: f64,
    /// Knee width of the voltage acceleration term, V.
    pub alpha: f64,
    /// Log-law reference time, minutes.
    pub t0: f64,
    pub k_boltzmann: f64,
    /// Additive ΔR/R offset (frequency / current effects).
    pub offset: f64,
}

impl DegradationParams {
    /// Fitted values for 100 V fifth-generation eGaN parts (EPC2038 class).
    pub fn epc_gen5_100v() -> Self {
        Self {
            a: 0.0,
            b: 2.0e-5,
            hbar_omega_lo: 0.092,
            v_fd: 100.0,
            alpha: 10.0,
            t0: 1.0,
            k_boltzmann: BOLTZMANN_EV_PER_K,
            offset: 0.0,
        }
    }

    /// Same parameters with no degradation at all.
    pub fn inert() -> Self {
        Self {
            a: 0.0,
            b: 0.0,
            ..Self::epc_gen5_100v()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("a", self.a),
            ("b", self.b),
            ("hbar_omega_lo", self.hbar_omega_lo),
            ("v_fd", self.v_fd),
            ("alpha", self.alpha),
            ("t0", self.t0),
            ("k_boltzmann", self.k_boltzmann),
            ("offset", self.offset),
        ] {
            crate::error::ensure_finite(name, v)?;
        }
        if self.b < 0.0 {
            return Err(Error::invalid("b", "must be >= 0"));
        }
        if self.alpha <= 0.0 {
            return Err(Error::invalid("alpha", "must be > 0"));
        }
        if self.hbar_omega_lo <= 0.0 {
            return Err(Error::invalid("hbar_omega_lo", "must be > 0"));
        }
        if self.t0 <= 0.0 {
            return Err(Error::invalid("t0", "must be > 0"));
        }
        if self.k_boltzmann <= 0.0 {
            return Err(Error::invalid("k_boltzmann", "must be > 0"));
        }
        if self.offset < 0.0 {
            return Err(Error::invalid("offset", "must be >= 0"));
        }
        Ok(())
    }
}

impl Default for DegradationParams {
    fn default() -> Self {
        Self::epc_gen5_100v()
    }
}

/// `ln(1 + e^x)` without overflow for large `x`.
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// ΔR/R gained per unit of `ln(1 + t/t0)`.
pub fn stress_slope(params: &DegradationParams, v_ds: f64, temp: f64) -> Result<f64> {
    if !(temp > 0.0) || !temp.is_finite() {
        return Err(Error::invalid("temp", format!("must be > 0 K, got {temp}")));
    }
    if !v_ds.is_finite() {
        return Err(Error::invalid("v_ds", "must be finite"));
    }
    let voltage = softplus((v_ds - params.v_fd) / params.alpha);
    let thermal = temp.sqrt() * (params.hbar_omega_lo / (params.k_boltzmann * temp)).exp();
    Ok(params.a + params.b * voltage * thermal)
}

pub fn delta_r_fraction(params: &DegradationParams, v_ds: f64, temp: f64, t: f64) -> Result<f64> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::invalid("t", format!("must be >= 0 min, got {t}")));
    }
    let slope = stress_slope(params, v_ds, temp)?;
    Ok(slope * (t / params.t0).ln_1p() + params.offset)
}

/// Advances the stress clock by `dt` minutes at a fixed (V, T).
///
/// ΔR/R is evaluated in closed form at the new total time, so splitting a
/// run into steps gives the same answer as one long step. When (V, T) change
/// between steps the larger of the previous and the closed-form value is kept:
/// no recovery is modelled.
pub fn apply_stress_step(
    state: &DeviceState,
    params: &DegradationParams,
    v_ds: f64,
    temp: f64,
    dt: f64,
) -> Result<DeviceState> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid("dt", format!("must be > 0 min, got {dt}")));
    }
    let stress_time = state.stress_time + dt;
    let fresh = delta_r_fraction(params, v_ds, temp, stress_time)?;
    let delta = fresh.max(state.delta_r_fraction);
    DeviceState::with_degradation(state.nominal(), delta, stress_time)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    const ROOM: f64 = 298.15;

    // Independent evaluation (mpmath, 30 digits) with the CODATA k_B.
    const SLOPE_100V_ROOM: f64 = 0.008_593_988_313_329_466;
    const SLOPE_40V_ROOM: f64 = 3.069_479_287_782_939e-5;
    const DELTA_100V_ROOM_100MIN: f64 = 0.039_662_291_786_340_83;

    fn gen5() -> DegradationParams {
        DegradationParams::epc_gen5_100v()
    }

    #[test]
    fn zero_coefficient_gives_offset_a() {
        let p = DegradationParams::inert();
        for v in [0.0, 40.0, 100.0, 250.0] {
            for t in [250.0, 300.0, 450.0] {
                assert_eq!(stress_slope(&p, v, t).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn slope_matches_oracle() {
        let s = stress_slope(&gen5(), 100.0, ROOM).unwrap();
        assert!((s - SLOPE_100V_ROOM).abs() / SLOPE_100V_ROOM < 1e-12, "{s}");
        let s40 = stress_slope(&gen5(), 40.0, ROOM).unwrap();
        assert!(
            (s40 - SLOPE_40V_ROOM).abs() / SLOPE_40V_ROOM < 1e-12,
            "{s40}"
        );
        assert!(s40 < s);
    }

    #[test]
    fn slope_huge_voltage_does_not_overflow() {
        let s = stress_slope(&gen5(), 1.0e5, ROOM).unwrap();
        assert!(s.is_finite() && s > 0.0);
    }

    #[test]
    fn slope_rejects_bad_temperature() {
        assert!(stress_slope(&gen5(), 100.0, 0.0).is_err());
        assert!(stress_slope(&gen5(), 100.0, -5.0).is_err());
    }

    #[test]
    fn delta_examples() {
        let p = gen5();
        assert_eq!(delta_r_fraction(&p, 100.0, ROOM, 0.0).unwrap(), 0.0);
        let at_e = delta_r_fraction(&p, 100.0, ROOM, (E - 1.0) * p.t0).unwrap();
        assert!((at_e - SLOPE_100V_ROOM).abs() < 1e-15);
        let d = delta_r_fraction(&p, 100.0, ROOM, 100.0).unwrap();
        assert!((d - DELTA_100V_ROOM_100MIN).abs() / DELTA_100V_ROOM_100MIN < 1e-12);
        assert!(delta_r_fraction(&p, 100.0, ROOM, -1.0).is_err());
    }

    #[test]
    fn offset_is_vertical_only() {
        let mut p = gen5();
        p.offset = 0.002;
        let base = gen5();
        for t in [1.0, 10.0, 100.0] {
            let d = delta_r_fraction(&p, 80.0, ROOM, t).unwrap()
                - delta_r_fraction(&base, 80.0, ROOM, t).unwrap();
            assert!((d - 0.002).abs() < 1e-15);
        }
        assert_eq!(
            stress_slope(&p, 80.0, ROOM).unwrap(),
            stress_slope(&base, 80.0, ROOM).unwrap()
        );
    }

    #[test]
    fn inert_step_stays_fresh() {
        let s = DeviceState::fresh(3.3).unwrap();
        let s = apply_stress_step(&s, &DegradationParams::inert(), 100.0, ROOM, 10.0).unwrap();
        assert_eq!(s.delta_r_fraction, 0.0);
        assert_eq!(s.rds_on, 3.3);
        assert_eq!(s.stress_time, 10.0);
    }

    #[test]
    fn split_steps_equal_one_step() {
        let p = gen5();
        let s0 = DeviceState::fresh(3.3).unwrap();
        let two = apply_stress_step(&s0, &p, 100.0, ROOM, 50.0).unwrap();
        let two = apply_stress_step(&two, &p, 100.0, ROOM, 50.0).unwrap();
        let one = apply_stress_step(&s0, &p, 100.0, ROOM, 100.0).unwrap();
        assert!((two.delta_r_fraction - one.delta_r_fraction).abs() < 1e-12);
        assert!((one.delta_r_fraction - DELTA_100V_ROOM_100MIN).abs() < 1e-12);
    }

    #[test]
    fn minute_steps_are_concave_increasing() {
        let p = gen5();
        let mut s = DeviceState::fresh(3.3).unwrap();
        let mut seq = vec![0.0];
        for _ in 0..60 {
            s = apply_stress_step(&s, &p, 100.0, ROOM, 1.0).unwrap();
            seq.push(s.delta_r_fraction);
        }
        let inc: Vec<f64> = seq.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(inc.iter().all(|&d| d > 0.0));
        assert!(inc.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn step_never_decreases() {
        let p = gen5();
        let s = DeviceState::fresh(3.3).unwrap();
        let hot = apply_stress_step(&s, &p, 110.0, ROOM, 100.0).unwrap();
        let mild = apply_stress_step(&hot, &p, 40.0, ROOM, 1.0).unwrap();
        assert_eq!(mild.delta_r_fraction, hot.delta_r_fraction);
        assert!(apply_stress_step(&s, &p, 40.0, ROOM, 0.0).is_err());
    }

    #[test]
    fn params_validation() {
        let mut p = gen5();
        p.alpha = 0.0;
        assert!(p.validate().is_err());
        let mut p = gen5();
        p.b = -1.0;
        assert!(p.validate().is_err());
        gen5().validate().unwrap();
    }
}
