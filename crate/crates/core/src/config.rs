//! TOML run configuration.
//!
//! Every section and key is optional; omitted values take the board and
//! device defaults. Numeric values may be written in engineering notation
//! (`l_drain = "10u"`). Temperatures are given in Celsius (`*_c`) or kelvin
//! (`*_k`) and held in kelvin.
//!
//! ```toml
//! mode = "campaign"
//!
//! [circuit]
//! l_drain = "10u"
//! c_out = "25p"
//! v_supply = 60
//!
//! [cell]            # defaults for every cell
//! temp_c = 25
//! duration_min = 1000
//!
//! [[cells]]         # optional explicit matrix
//! v_stress = 85
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::campaign::{log_schedule, CampaignSettings, ShapeFactor, StressCell};
use crate::converter::{CircuitParams, DriveSignal, SimConfig};
use crate::degradation::DegradationParams;
use crate::device::DeviceRatings;
use crate::error::{Error, Result};
use crate::units::{celsius_to_kelvin, de_eng_opt};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Simulate,
    Campaign,
    Fit,
    Extract,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Option<Mode>,
    pub out_dir: Option<PathBuf>,
    pub settings: CampaignSettings,
    pub cells: Vec<StressCell>,
}

pub const DEFAULT_TEMP_K: f64 = 298.15;
pub const DEFAULT_I_DRIVE: f64 = 0.4;
pub const DEFAULT_DURATION_MIN: f64 = 1000.0;
pub const DEFAULT_T_START_MIN: f64 = 1.0;
pub const DEFAULT_POINTS_PER_DECADE: usize = 20;

type Extra = BTreeMap<String, toml::Value>;

#[derive(Debug, Default, Deserialize)]
struct Doc {
    mode: Option<Mode>,
    out_dir: Option<PathBuf>,
    device: Option<DeviceSection>,
    circuit: Option<CircuitSection>,
    drive: Option<DriveSection>,
    sim: Option<SimSection>,
    degradation: Option<DegradationSection>,
    campaign: Option<CampaignSection>,
    cell: Option<CellSection>,
    cells: Option<Vec<CellSection>>,
    #[serde(flatten)]
    extra: Extra,
}

macro_rules! eng_section {
    ($name:ident { $($field:ident),* $(,)? }) => {
        #[derive(Debug, Default, Deserialize)]
        struct $name {
            $(
                #[serde(default, deserialize_with = "de_eng_opt")]
                $field: Option<f64>,
            )*
            #[serde(flatten)]
            extra: Extra,
        }
    };
}

eng_section!(DeviceSection {
    vds_max_pulsed,
    vds_max_continuous,
    id_max,
    vgs_max,
    vgs_min,
    tj_min_c,
    tj_min_k,
    tj_max_c,
    tj_max_k,
    rds_on_nominal,
});
eng_section!(CircuitSection {
    vin,
    l_drain,
    c_in,
    c_out,
    v_supply,
    diode_vf,
    series_r,
    r_load
});
eng_section!(DriveSection {
    frequency,
    duty,
    v_gate_high,
    v_gate_low
});
eng_section!(DegradationSection {
    a,
    b,
    hbar_omega_lo,
    v_fd,
    alpha,
    t0_min,
    k_boltzmann,
    offset
});

#[derive(Debug, Default, Deserialize)]
struct SimSection {
    steps_per_period: Option<usize>,
    n_periods: Option<usize>,
    #[serde(default, deserialize_with = "de_eng_opt")]
    settle_fraction: Option<f64>,
    #[serde(flatten)]
    extra: Extra,
}

#[derive(Debug, Default, Deserialize)]
struct CampaignSection {
    shape_factor: Option<ShapeFactor>,
    #[serde(default, deserialize_with = "de_eng_opt")]
    current_tolerance: Option<f64>,
    max_secant_iterations: Option<usize>,
    #[serde(flatten)]
    extra: Extra,
}

#[derive(Debug, Default, Clone, Deserialize)]
struct CellSection {
    #[serde(default, deserialize_with = "de_eng_opt")]
    v_stress: Option<f64>,
    #[serde(default, deserialize_with = "de_eng_opt")]
    temp_c: Option<f64>,
    #[serde(default, deserialize_with = "de_eng_opt")]
    temp_k: Option<f64>,
    #[serde(default, deserialize_with = "de_eng_opt")]
    i_drive: Option<f64>,
    #[serde(default, deserialize_with = "de_eng_opt")]
    duty: Option<f64>,
    #[serde(default, deserialize_with = "de_eng_opt")]
    duration_min: Option<f64>,
    #[serde(default, deserialize_with = "de_eng_opt")]
    t_start_min: Option<f64>,
    points_per_decade: Option<usize>,
    sample_times_min: Option<Vec<f64>>,
    #[serde(flatten)]
    extra: Extra,
}

impl CellSection {
    /// Fields set here win over `base`.
    fn over(&self, base: &CellSection) -> CellSection {
        CellSection {
            v_stress: self.v_stress.or(base.v_stress),
            // a temperature given in either unit replaces both of the base's
            temp_c: if self.temp_c.is_some() || self.temp_k.is_some() {
                self.temp_c
            } else {
                base.temp_c
            },
            temp_k: if self.temp_c.is_some() || self.temp_k.is_some() {
                self.temp_k
            } else {
                base.temp_k
            },
            i_drive: self.i_drive.or(base.i_drive),
            duty: self.duty.or(base.duty),
            duration_min: self.duration_min.or(base.duration_min),
            t_start_min: self.t_start_min.or(base.t_start_min),
            points_per_decade: self.points_per_decade.or(base.points_per_decade),
            sample_times_min: self
                .sample_times_min
                .clone()
                .or_else(|| base.sample_times_min.clone()),
            extra: Extra::new(),
        }
    }
}

fn collect_unknown(prefix: &str, extra: &Extra, out: &mut Vec<String>) {
    out.extend(extra.keys().map(|k| {
        if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        }
    }));
}

fn temperature(name: &'static str, c: Option<f64>, k: Option<f64>, default: f64) -> Result<f64> {
    match (c, k) {
        (Some(_), Some(_)) => Err(Error::invalid(
            name,
            "give either the _c or the _k form, not both",
        )),
        (Some(c), None) => Ok(celsius_to_kelvin(c)),
        (None, Some(k)) => Ok(k),
        (None, None) => Ok(default),
    }
}

/// Parses and validates a configuration document, filling defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let doc: Doc = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;

    let mut unknown = Vec::new();
    collect_unknown("", &doc.extra, &mut unknown);
    let device = doc.device.unwrap_or_default();
    collect_unknown("device", &device.extra, &mut unknown);
    let circuit = doc.circuit.unwrap_or_default();
    collect_unknown("circuit", &circuit.extra, &mut unknown);
    let drive = doc.drive.unwrap_or_default();
    collect_unknown("drive", &drive.extra, &mut unknown);
    let sim = doc.sim.unwrap_or_default();
    collect_unknown("sim", &sim.extra, &mut unknown);
    let deg = doc.degradation.unwrap_or_default();
    collect_unknown("degradation", &deg.extra, &mut unknown);
    let campaign = doc.campaign.unwrap_or_default();
    collect_unknown("campaign", &campaign.extra, &mut unknown);
    let cell_defaults = doc.cell.unwrap_or_default();
    collect_unknown("cell", &cell_defaults.extra, &mut unknown);
    for (i, c) in doc.cells.iter().flatten().enumerate() {
        collect_unknown(&format!("cells[{i}]"), &c.extra, &mut unknown);
    }
    if !unknown.is_empty() {
        return Err(Error::UnknownKeys(unknown));
    }

    let d = DeviceRatings::epc2038();
    let ratings = DeviceRatings {
        vds_max_pulsed: device.vds_max_pulsed.unwrap_or(d.vds_max_pulsed),
        vds_max_continuous: device.vds_max_continuous.unwrap_or(d.vds_max_continuous),
        id_max: device.id_max.unwrap_or(d.id_max),
        vgs_max: device.vgs_max.unwrap_or(d.vgs_max),
        vgs_min: device.vgs_min.unwrap_or(d.vgs_min),
        tj_min: temperature("tj_min", device.tj_min_c, device.tj_min_k, d.tj_min)?,
        tj_max: temperature("tj_max", device.tj_max_c, device.tj_max_k, d.tj_max)?,
        rds_on_nominal: device.rds_on_nominal.unwrap_or(d.rds_on_nominal),
    };
    ratings.validate()?;

    let c = CircuitParams::hvrb_board();
    let circuit = CircuitParams {
        vin: circuit.vin.unwrap_or(c.vin),
        l_drain: circuit.l_drain.unwrap_or(c.l_drain),
        c_in: circuit.c_in.unwrap_or(c.c_in),
        c_out: circuit.c_out.unwrap_or(c.c_out),
        v_supply: circuit.v_supply.unwrap_or(c.v_supply),
        diode_vf: circuit.diode_vf.unwrap_or(c.diode_vf),
        series_r: circuit.series_r.unwrap_or(c.series_r),
        r_load: circuit.r_load.or(c.r_load),
    };
    circuit.validate()?;

    let dr = DriveSignal::default();
    let drive = DriveSignal {
        frequency: drive.frequency.unwrap_or(dr.frequency),
        duty: drive.duty.unwrap_or(dr.duty),
        v_gate_high: drive.v_gate_high.unwrap_or(dr.v_gate_high),
        v_gate_low: drive.v_gate_low.unwrap_or(dr.v_gate_low),
    };
    drive.validate()?;

    let s = SimConfig::default();
    let sim = SimConfig {
        steps_per_period: sim.steps_per_period.unwrap_or(s.steps_per_period),
        n_periods: sim.n_periods.unwrap_or(s.n_periods),
        settle_fraction: sim.settle_fraction.unwrap_or(s.settle_fraction),
    };
    sim.validate()?;

    let g = DegradationParams::epc_gen5_100v();
    let degradation = DegradationParams {
        a: deg.a.unwrap_or(g.a),
        b: deg.b.unwrap_or(g.b),
        hbar_omega_lo: deg.hbar_omega_lo.unwrap_or(g.hbar_omega_lo),
        v_fd: deg.v_fd.unwrap_or(g.v_fd),
        alpha: deg.alpha.unwrap_or(g.alpha),
        t0: deg.t0_min.unwrap_or(g.t0),
        k_boltzmann: deg.k_boltzmann.unwrap_or(g.k_boltzmann),
        offset: deg.offset.unwrap_or(g.offset),
    };
    degradation.validate()?;

    let cs = CampaignSettings::default();
    let settings = CampaignSettings {
        circuit,
        drive,
        sim,
        ratings,
        degradation,
        shape_factor: campaign.shape_factor.unwrap_or(cs.shape_factor),
        current_tolerance: campaign.current_tolerance.unwrap_or(cs.current_tolerance),
        max_secant_iterations: campaign
            .max_secant_iterations
            .unwrap_or(cs.max_secant_iterations),
    };
    settings.validate()?;

    let sections = match doc.cells {
        Some(list) => list.iter().map(|c| c.over(&cell_defaults)).collect(),
        None => vec![cell_defaults],
    };
    let cells = sections
        .iter()
        .map(|c| build_cell(c, &settings))
        .collect::<Result<Vec<_>>>()?;

    Ok(RunConfig {
        mode: doc.mode,
        out_dir: doc.out_dir,
        settings,
        cells,
    })
}

fn build_cell(c: &CellSection, settings: &CampaignSettings) -> Result<StressCell> {
    let duration = c.duration_min.unwrap_or(DEFAULT_DURATION_MIN);
    let sample_times = match &c.sample_times_min {
        Some(times) => times.clone(),
        None => log_schedule(
            c.t_start_min.unwrap_or(DEFAULT_T_START_MIN),
            duration,
            c.points_per_decade.unwrap_or(DEFAULT_POINTS_PER_DECADE),
        )?,
    };
    let cell = StressCell {
        v_stress: c.v_stress.unwrap_or(settings.circuit.v_supply),
        temp: temperature("temp", c.temp_c, c.temp_k, DEFAULT_TEMP_K)?,
        i_drive: c.i_drive.unwrap_or(DEFAULT_I_DRIVE),
        duty: c.duty.unwrap_or(settings.drive.duty),
        duration,
        sample_times,
    };
    cell.validate()?;
    Ok(cell)
}

#[derive(Serialize)]
struct EchoDoc<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    mode: Option<Mode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    out_dir: Option<&'a PathBuf>,
    device: EchoDevice,
    circuit: &'a CircuitParams,
    drive: &'a DriveSignal,
    sim: &'a SimConfig,
    degradation: EchoDegradation,
    campaign: EchoCampaign,
    cells: Vec<EchoCell<'a>>,
}

#[derive(Serialize)]
struct EchoDevice {
    vds_max_pulsed: f64,
    vds_max_continuous: f64,
    id_max: f64,
    vgs_max: f64,
    vgs_min: f64,
    tj_min_k: f64,
    tj_max_k: f64,
    rds_on_nominal: f64,
}

#[derive(Serialize)]
struct EchoDegradation {
    a: f64,
    b: f64,
    hbar_omega_lo: f64,
    v_fd: f64,
    alpha: f64,
    t0_min: f64,
    k_boltzmann: f64,
    offset: f64,
}

#[derive(Serialize)]
struct EchoCampaign {
    shape_factor: ShapeFactor,
    current_tolerance: f64,
    max_secant_iterations: usize,
}

#[derive(Serialize)]
struct EchoCell<'a> {
    v_stress: f64,
    temp_k: f64,
    i_drive: f64,
    duty: f64,
    duration_min: f64,
    sample_times_min: &'a [f64],
}

impl RunConfig {
    /// Every resolved field as a document `parse_config` reads back unchanged.
    pub fn to_toml(&self) -> String {
        let s = &self.settings;
        let r = &s.ratings;
        let g = &s.degradation;
        let doc = EchoDoc {
            mode: self.mode,
            out_dir: self.out_dir.as_ref(),
            device: EchoDevice {
                vds_max_pulsed: r.vds_max_pulsed,
                vds_max_continuous: r.vds_max_continuous,
                id_max: r.id_max,
                vgs_max: r.vgs_max,
                vgs_min: r.vgs_min,
                tj_min_k: r.tj_min,
                tj_max_k: r.tj_max,
                rds_on_nominal: r.rds_on_nominal,
            },
            circuit: &s.circuit,
            drive: &s.drive,
            sim: &s.sim,
            degradation: EchoDegradation {
                a: g.a,
                b: g.b,
                hbar_omega_lo: g.hbar_omega_lo,
                v_fd: g.v_fd,
                alpha: g.alpha,
                t0_min: g.t0,
                k_boltzmann: g.k_boltzmann,
                offset: g.offset,
            },
            campaign: EchoCampaign {
                shape_factor: s.shape_factor,
                current_tolerance: s.current_tolerance,
                max_secant_iterations: s.max_secant_iterations,
            },
            cells: self
                .cells
                .iter()
                .map(|c| EchoCell {
                    v_stress: c.v_stress,
                    temp_k: c.temp,
                    i_drive: c.i_drive,
                    duty: c.duty,
                    duration_min: c.duration,
                    sample_times_min: &c.sample_times,
                })
                .collect(),
        };
        toml::to_string(&doc).expect("config echo serialises")
    }
}
