//! HVRB stress campaigns: a matrix of (stress voltage, temperature) cells.
//!
//! Each cell marches the device through its sample schedule. At every sample
//! the degradation model advances the on-resistance, the converter is re-run
//! with the input voltage re-solved so the on-time drain current stays at the
//! target, and R_DS(on) is extracted back out of the simulated averages. The
//! extracted series is fitted against ln(t).
//!
//! Cells share nothing and run on the rayon pool when the `parallel` feature
//! is on; results always come back in input order.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::converter::{
    simulate, steady_state_metrics, CircuitParams, DriveSignal, SimConfig, SteadyStateMetrics,
    Waveform,
};
use crate::degradation::{apply_stress_step, DegradationParams};
use crate::device::{check_soa, check_soa_continuous, DeviceRatings, DeviceState, SoaViolation};
use crate::error::{ensure_finite, Error, Result};
use crate::extraction::{extract_rds_on, fit_log_time, FitResult, Quality, RdsSample};

/// How the averaged-voltage relation's waveform factor is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ShapeFactor {
    /// Measured from each simulated waveform as V_max / mean off-time v_ds.
    Measured(MeasuredTag),
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasuredTag {
    Measured,
}

impl ShapeFactor {
    pub const MEASURED: ShapeFactor = ShapeFactor::Measured(MeasuredTag::Measured);
}

impl Default for ShapeFactor {
    fn default() -> Self {
        Self::MEASURED
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressCell {
    /// Output clamp level, V.
    pub v_stress: f64,
    /// Device temperature, K.
    pub temp: f64,
    /// Target mean drain current over the on-time, A.
    pub i_drive: f64,
    pub duty: f64,
    /// Minutes.
    pub duration: f64,
    /// Minutes, ascending, within (0, duration].
    pub sample_times: Vec<f64>,
}

impl StressCell {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("v_stress", self.v_stress)?;
        ensure_finite("temp", self.temp)?;
        ensure_finite("i_drive", self.i_drive)?;
        ensure_finite("duration", self.duration)?;
        if self.v_stress <= 0.0 {
            return Err(Error::invalid("v_stress", "must be > 0"));
        }
        if self.temp <= 0.0 {
            return Err(Error::invalid("temp", "must be > 0 K"));
        }
        if self.i_drive <= 0.0 {
            return Err(Error::invalid("i_drive", "must be > 0"));
        }
        if !(self.duty > 0.0 && self.duty < 1.0) {
            return Err(Error::invalid(
                "duty",
                format!("must be in (0, 1), got {}", self.duty),
            ));
        }
        if self.duration <= 0.0 {
            return Err(Error::invalid("duration", "must be > 0"));
        }
        if self.sample_times.is_empty() {
            return Err(Error::invalid("sample_times", "must not be empty"));
        }
        let mut prev = 0.0;
        for &t in &self.sample_times {
            if !(t > prev) || t > self.duration {
                return Err(Error::invalid(
                    "sample_times",
                    "must be strictly increasing within (0, duration]",
                ));
            }
            prev = t;
        }
        Ok(())
    }
}

/// `per_decade` log-spaced times from `t_start` up to and including `duration`.
pub fn log_schedule(t_start: f64, duration: f64, per_decade: usize) -> Result<Vec<f64>> {
    if !(t_start > 0.0) || !(duration >= t_start) || per_decade == 0 {
        return Err(Error::invalid(
            "sample_times",
            "log schedule needs 0 < t_start <= duration and per_decade >= 1",
        ));
    }
    let mut out = Vec::new();
    for k in 0.. {
        let t = t_start * 10f64.powf(k as f64 / per_decade as f64);
        if t >= duration * (1.0 - 1e-9) {
            break;
        }
        out.push(t);
    }
    out.push(duration);
    Ok(out)
}

/// Everything a cell needs besides the cell itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSettings {
    pub circuit: CircuitParams,
    pub drive: DriveSignal,
    pub sim: SimConfig,
    pub ratings: DeviceRatings,
    pub degradation: DegradationParams,
    pub shape_factor: ShapeFactor,
    /// Relative tolerance on the drive-current match.
    pub current_tolerance: f64,
    pub max_secant_iterations: usize,
}

impl Default for CampaignSettings {
    fn default() -> Self {
        Self {
            circuit: CircuitParams::hvrb_board(),
            drive: DriveSignal::default(),
            sim: SimConfig::default(),
            ratings: DeviceRatings::epc2038(),
            degradation: DegradationParams::epc_gen5_100v(),
            shape_factor: ShapeFactor::MEASURED,
            current_tolerance: 0.02,
            max_secant_iterations: 20,
        }
    }
}

impl CampaignSettings {
    pub fn validate(&self) -> Result<()> {
        self.circuit.validate()?;
        self.drive.validate()?;
        self.sim.validate()?;
        self.ratings.validate()?;
        self.degradation.validate()?;
        if let ShapeFactor::Fixed(k) = self.shape_factor {
            if !(k > 0.0) || !k.is_finite() {
                return Err(Error::invalid("shape_factor", "must be > 0"));
            }
        }
        if !(self.current_tolerance > 0.0 && self.current_tolerance <= 0.02) {
            return Err(Error::invalid("current_tolerance", "must be in (0, 0.02]"));
        }
        if self.max_secant_iterations == 0 || self.max_secant_iterations > 20 {
            return Err(Error::invalid(
                "max_secant_iterations",
                "must be in [1, 20]",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CellStatus {
    Completed,
    Aborted(String),
}

impl CellStatus {
    pub fn is_completed(&self) -> bool {
        matches!(self, CellStatus::Completed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedViolation {
    pub t: f64,
    pub violation: SoaViolation,
}

/// One simulated measurement inside a cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub t: f64,
    pub vin: f64,
    pub rds_true: f64,
    pub metrics: SteadyStateMetrics,
    pub shape_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: StressCell,
    pub samples: Vec<RdsSample>,
    pub measurements: Vec<Measurement>,
    /// Peak drain voltage of the unstressed reference run.
    pub v_max_measured: f64,
    pub fit: Option<FitResult>,
    pub soa: Vec<TimedViolation>,
    pub status: CellStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    /// SHA-256 of the canonical settings + cells.
    pub config_hash: String,
    pub cells: Vec<CellResult>,
}

struct Solved {
    vin: f64,
    waveform: Waveform,
    metrics: SteadyStateMetrics,
}

/// Secant search on the input voltage for a target on-time mean current.
fn solve_drive(
    circuit: &CircuitParams,
    drive: &DriveSignal,
    device: &DeviceState,
    settings: &CampaignSettings,
    target: f64,
    guess: f64,
) -> Result<Solved> {
    let eval = |vin: f64| -> Result<Solved> {
        let c = CircuitParams { vin, ..*circuit };
        let waveform = simulate(&c, drive, device, &settings.sim)?;
        let metrics = steady_state_metrics(&waveform, &settings.sim, drive)?;
        Ok(Solved {
            vin,
            waveform,
            metrics,
        })
    };
    let tol = settings.current_tolerance * 1e-3;
    let mut a = eval(guess)?;
    let mut b = eval(guess * 1.05)?;
    for _ in 0..settings.max_secant_iterations {
        let fb = b.metrics.i_avg - target;
        if (fb / target).abs() <= tol {
            return Ok(b);
        }
        let fa = a.metrics.i_avg - target;
        let slope = (fb - fa) / (b.vin - a.vin);
        let mut next = if slope.is_finite() && slope > 0.0 {
            b.vin - fb / slope
        } else {
            b.vin * if fb < 0.0 { 2.0 } else { 0.5 }
        };
        if !(next > 0.0) {
            next = 0.5 * b.vin;
        }
        a = b;
        b = eval(next)?;
    }
    if ((b.metrics.i_avg - target) / target).abs() <= settings.current_tolerance {
        return Ok(b);
    }
    Err(Error::NoConvergence {
        iterations: settings.max_secant_iterations,
        what: format!(
            "drive current {} A vs target {target} A at vin {} V",
            b.metrics.i_avg, b.vin
        ),
    })
}

/// Runs one stress cell. Errors only for invalid inputs; numeric trouble
/// during the march aborts the cell and keeps what was measured so far.
pub fn run_cell(cell: &StressCell, settings: &CampaignSettings) -> Result<CellResult> {
    settings.validate()?;
    cell.validate()?;

    let circuit = CircuitParams {
        v_supply: cell.v_stress,
        ..settings.circuit
    };
    let drive = DriveSignal {
        duty: cell.duty,
        ..settings.drive
    };
    let nominal = settings.ratings.rds_on_nominal;

    let mut out = CellResult {
        cell: cell.clone(),
        samples: Vec::with_capacity(cell.sample_times.len()),
        measurements: Vec::with_capacity(cell.sample_times.len()),
        v_max_measured: f64::NAN,
        fit: None,
        soa: Vec::new(),
        status: CellStatus::Completed,
    };

    if let Err(e) = march(cell, settings, &circuit, &drive, nominal, &mut out) {
        out.status = CellStatus::Aborted(e.to_string());
    }
    if out.samples.len() >= 2 {
        out.fit = fit_log_time(&out.samples).ok();
    }
    Ok(out)
}

fn march(
    cell: &StressCell,
    settings: &CampaignSettings,
    circuit: &CircuitParams,
    drive: &DriveSignal,
    nominal: f64,
    out: &mut CellResult,
) -> Result<()> {
    let mut state = DeviceState::fresh(nominal)?;
    let first_guess = cell.i_drive * (nominal + circuit.series_r);
    let reference = solve_drive(circuit, drive, &state, settings, cell.i_drive, first_guess)?;
    let v_max = reference.metrics.v_max;
    out.v_max_measured = v_max;
    let mut vin = reference.vin;

    for &t in &cell.sample_times {
        state = apply_stress_step(
            &state,
            &settings.degradation,
            v_max,
            cell.temp,
            t - state.stress_time,
        )?;
        let solved = solve_drive(circuit, drive, &state, settings, cell.i_drive, vin)?;
        vin = solved.vin;
        let m = solved.metrics;
        drop(solved.waveform);

        out.soa.extend(
            check_soa(&settings.ratings, m.v_max, m.i_peak, cell.temp)
                .into_iter()
                .chain(check_soa_continuous(&settings.ratings, m.v_in_avg))
                .map(|violation| TimedViolation { t, violation }),
        );

        let shape = match settings.shape_factor {
            ShapeFactor::Fixed(k) => k,
            ShapeFactor::Measured(_) => m.measured_shape_factor().ok_or_else(|| {
                Error::Domain(format!("t = {t} min: no gate-off drain voltage to measure"))
            })?,
        };
        let e = extract_rds_on(m.v_in_avg, m.v_max, cell.duty, m.i_avg, shape)?;
        out.measurements.push(Measurement {
            t,
            vin,
            rds_true: state.rds_on,
            metrics: m,
            shape_factor: shape,
        });
        if e.quality != Quality::Ok {
            return Err(Error::Domain(format!(
                "t = {t} min: extracted R_DS(on) = {} Ω is not positive (shape factor {shape})",
                e.rds_on
            )));
        }
        out.samples.push(RdsSample::new(t, e.rds_on)?);
    }
    Ok(())
}

fn config_hash(cells: &[StressCell], settings: &CampaignSettings) -> String {
    #[derive(Serialize)]
    struct Canonical<'a> {
        settings: &'a CampaignSettings,
        cells: &'a [StressCell],
    }
    let text = toml::to_string(&Canonical { settings, cells }).unwrap_or_default();
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn validate_all(cells: &[StressCell], settings: &CampaignSettings) -> Result<()> {
    settings.validate()?;
    cells.iter().try_for_each(StressCell::validate)
}

/// Runs every cell, in parallel when the `parallel` feature is enabled.
pub fn run_matrix(cells: &[StressCell], settings: &CampaignSettings) -> Result<CampaignResult> {
    #[cfg(feature = "parallel")]
    {
        run_matrix_parallel(cells, settings)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_matrix_sequential(cells, settings)
    }
}

pub fn run_matrix_sequential(
    cells: &[StressCell],
    settings: &CampaignSettings,
) -> Result<CampaignResult> {
    validate_all(cells, settings)?;
    let results = cells
        .iter()
        .map(|c| run_cell(c, settings))
        .collect::<Result<Vec<_>>>()?;
    Ok(CampaignResult {
        config_hash: config_hash(cells, settings),
        cells: results,
    })
}

#[cfg(feature = "parallel")]
pub fn run_matrix_parallel(
    cells: &[StressCell],
    settings: &CampaignSettings,
) -> Result<CampaignResult> {
    use rayon::prelude::*;

    validate_all(cells, settings)?;
    let results = cells
        .par_iter()
        .map(|c| run_cell(c, settings))
        .collect::<Result<Vec<_>>>()?;
    Ok(CampaignResult {
        config_hash: config_hash(cells, settings),
        cells: results,
    })
}
