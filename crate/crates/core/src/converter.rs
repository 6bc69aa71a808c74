//! Switched piecewise-linear model of the HVRB boost stage.
//!
//! Two state variables: inductor current `i_l` and output-node voltage
//! `v_out` (the 25 pF capacitor behind the diode). The drain node has no
//! state of its own; its voltage follows from the topology in force:
//!
//! | topology   | condition                               | v_ds            |
//! |------------|-----------------------------------------|-----------------|
//! | `On`       | gate high                               | R_on · i_l      |
//! | `Conduct`  | gate low, diode forward                 | v_out + V_f     |
//! | `Clamped`  | gate low, v_out pinned at the supply    | V_supply + V_f  |
//! | `Idle`     | gate low, i_l = 0, diode reverse biased | V_in            |
//!
//! Integration is fixed-step explicit trapezoidal (Heun). PWM edges sit on
//! grid points. The two in-step events, inductor current reaching zero and
//! the output reaching the supply clamp, are located by linear interpolation
//! and the step is split there. Besides point samples the integrator records
//! the exact mean of each quantity over every step; averaged metrics use
//! those, so a clamp pulse a few steps wide does not alias into the means.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::device::DeviceState;
use crate::error::{ensure_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    pub vin: f64,
    pub l_drain: f64,
    /// Input decoupling capacitor. Carried for completeness, not simulated.
    pub c_in: f64,
    pub c_out: f64,
    /// High-voltage supply the output is clamped to.
    pub v_supply: f64,
    pub diode_vf: f64,
    /// Lumped series resistance of the inductor loop.
    pub series_r: f64,
    /// Resistive load on the output node; `None` for the unloaded HVRB stage.
    pub r_load: Option<f64>,
}

impl CircuitParams {
    /// Component values of the HVRB test board.
    pub fn hvrb_board() -> Self {
        Self {
            vin: 10.0,
            l_drain: 10e-6,
            c_in: 100e-12,
            c_out: 25e-12,
            v_supply: 100.0,
            diode_vf: 0.5,
            series_r: 0.0,
            r_load: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("vin", self.vin),
            ("l_drain", self.l_drain),
            ("c_in", self.c_in),
            ("c_out", self.c_out),
            ("v_supply", self.v_supply),
            ("diode_vf", self.diode_vf),
            ("series_r", self.series_r),
        ] {
            ensure_finite(name, v)?;
        }
        if self.vin <= 0.0 {
            return Err(Error::invalid("vin", "must be > 0"));
        }
        if self.l_drain <= 0.0 {
            return Err(Error::invalid("l_drain", "must be > 0"));
        }
        if self.c_out <= 0.0 {
            return Err(Error::invalid("c_out", "must be > 0"));
        }
        if self.c_in < 0.0 {
            return Err(Error::invalid("c_in", "must be >= 0"));
        }
        if self.v_supply <= 0.0 {
            return Err(Error::invalid("v_supply", "must be > 0"));
        }
        if self.diode_vf < 0.0 {
            return Err(Error::invalid("diode_vf", "must be >= 0"));
        }
        if self.series_r < 0.0 {
            return Err(Error::invalid("series_r", "must be >= 0"));
        }
        if let Some(r) = self.r_load {
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::invalid("r_load", "must be > 0 when present"));
            }
        }
        Ok(())
    }

    fn load_current(&self, v_out: f64) -> f64 {
        self.r_load.map_or(0.0, |r| v_out / r)
    }

    /// Highest drain voltage the clamp allows.
    pub fn clamp_vds(&self) -> f64 {
        self.v_supply + self.diode_vf
    }
}

impl Default for CircuitParams {
    fn default() -> Self {
        Self::hvrb_board()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveSignal {
    pub frequency: f64,
    pub duty: f64,
    pub v_gate_high: f64,
    pub v_gate_low: f64,
}

impl DriveSignal {
    pub fn period(&self) -> f64 {
        1.0 / self.frequency
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("frequency", self.frequency),
            ("duty", self.duty),
            ("v_gate_high", self.v_gate_high),
            ("v_gate_low", self.v_gate_low),
        ] {
            ensure_finite(name, v)?;
        }
        if self.frequency <= 0.0 {
            return Err(Error::invalid("frequency", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.duty) {
            return Err(Error::invalid(
                "duty",
                format!("must be in [0, 1], got {}", self.duty),
            ));
        }
        if !(self.v_gate_low <= 0.0 && 0.0 <= self.v_gate_high) {
            return Err(Error::invalid(
                "v_gate_low",
                "require v_gate_low <= 0 <= v_gate_high",
            ));
        }
        Ok(())
    }
}

impl Default for DriveSignal {
    fn default() -> Self {
        Self {
            frequency: 100e3,
            duty: 0.7,
            v_gate_high: 5.0,
            v_gate_low: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub steps_per_period: usize,
    pub n_periods: usize,
    /// Leading fraction of the run excluded from metrics. The metrics window
    /// starts on the next whole period.
    pub settle_fraction: f64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps_per_period < 100 {
            return Err(Error::invalid("steps_per_period", "must be >= 100"));
        }
        if self.n_periods < 2 {
            return Err(Error::invalid("n_periods", "must be >= 2"));
        }
        if !(0.0..1.0).contains(&self.settle_fraction) {
            return Err(Error::invalid("settle_fraction", "must be in [0, 1)"));
        }
        Ok(())
    }

    /// Number of on-steps per period; the duty cycle is realised on the grid.
    pub fn on_steps(&self, duty: f64) -> usize {
        (duty * self.steps_per_period as f64).round() as usize
    }

    pub fn settle_periods(&self, total_periods: usize) -> usize {
        (self.settle_fraction * total_periods as f64).ceil() as usize
    }

    pub fn halved_step(&self) -> Self {
        Self {
            steps_per_period: self.steps_per_period * 2,
            ..*self
        }
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            steps_per_period: 2000,
            n_periods: 8,
            settle_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub v_ds: f64,
    pub i_l: f64,
    pub v_out: f64,
    /// Gate state over the step that starts at `t`.
    pub gate_on: bool,
}

/// Exact means over one integration step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IntervalMeans {
    pub v_ds: f64,
    pub i_l: f64,
    pub v_out: f64,
    pub i_diode: f64,
    pub i_clamp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub dt: f64,
    pub samples: Vec<Sample>,
    /// `intervals[k]` covers `[samples[k].t, samples[k + 1].t]`.
    pub intervals: Vec<IntervalMeans>,
}

pub const WAVEFORM_CSV_HEADER: &str = "t_s,v_ds_V,i_l_A,v_out_V,gate_on";

impl Waveform {
    /// Builds a waveform from point samples alone; interval means come from
    /// the trapezoid rule and diode/clamp currents are unknown (zero).
    pub fn from_samples(samples: Vec<Sample>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InsufficientData(
                "waveform needs at least two samples".into(),
            ));
        }
        let dt = samples[1].t - samples[0].t;
        if !(dt > 0.0) {
            return Err(Error::invalid("t", "time must be strictly increasing"));
        }
        for w in samples.windows(2) {
            let step = w[1].t - w[0].t;
            if !(step > 0.0) || (step - dt).abs() > 1e-9 * dt.max(w[1].t.abs() * 1e-6) {
                return Err(Error::invalid("t", "time step must be uniform"));
            }
        }
        let intervals = samples
            .windows(2)
            .map(|w| IntervalMeans {
                v_ds: 0.5 * (w[0].v_ds + w[1].v_ds),
                i_l: 0.5 * (w[0].i_l + w[1].i_l),
                v_out: 0.5 * (w[0].v_out + w[1].v_out),
                i_diode: 0.0,
                i_clamp: 0.0,
            })
            .collect();
        Ok(Self {
            dt,
            samples,
            intervals,
        })
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.intervals.len() as f64
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{WAVEFORM_CSV_HEADER}")?;
        for s in &self.samples {
            writeln!(
                out,
                "{},{},{},{},{}",
                s.t,
                s.v_ds,
                s.i_l,
                s.v_out,
                u8::from(s.gate_on)
            )?;
        }
        Ok(())
    }
}

/// Ideal continuous-conduction boost ratio.
pub fn ideal_boost_vout(vin: f64, duty: f64) -> Result<f64> {
    ensure_finite("vin", vin)?;
    if duty == 1.0 {
        return Err(Error::Domain(
            "duty = 1 divides by zero in V_in/(1-D)".into(),
        ));
    }
    if !(0.0..1.0).contains(&duty) {
        return Err(Error::invalid(
            "duty",
            format!("must be in [0, 1), got {duty}"),
        ));
    }
    Ok(vin / (1.0 - duty))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Topology {
    On,
    Conduct,
    Clamped,
    Idle,
}

#[derive(Debug, Clone, Copy)]
struct State {
    i: f64,
    v: f64,
}

struct Stage<'a> {
    c: &'a CircuitParams,
    r_on: f64,
}

impl Stage<'_> {
    fn topology(&self, gate_on: bool, s: State) -> Topology {
        if gate_on {
            Topology::On
        } else if s.i > 0.0 || self.c.vin > s.v + self.c.diode_vf {
            if s.v >= self.c.v_supply && s.i >= self.c.load_current(self.c.v_supply) {
                Topology::Clamped
            } else {
                Topology::Conduct
            }
        } else {
            Topology::Idle
        }
    }

    fn deriv(&self, topo: Topology, s: State) -> (f64, f64) {
        let c = self.c;
        let load = c.load_current(s.v);
        match topo {
            Topology::On => (
                (c.vin - (self.r_on + c.series_r) * s.i) / c.l_drain,
                -load / c.c_out,
            ),
            Topology::Conduct => (
                (c.vin - c.series_r * s.i - s.v - c.diode_vf) / c.l_drain,
                (s.i - load) / c.c_out,
            ),
            Topology::Clamped => (
                (c.vin - c.series_r * s.i - c.v_supply - c.diode_vf) / c.l_drain,
                0.0,
            ),
            Topology::Idle => (0.0, -load / c.c_out),
        }
    }

    fn heun(&self, topo: Topology, s: State, h: f64) -> State {
        let (di1, dv1) = self.deriv(topo, s);
        let pred = State {
            i: s.i + h * di1,
            v: s.v + h * dv1,
        };
        let (di2, dv2) = self.deriv(topo, pred);
        State {
            i: s.i + 0.5 * h * (di1 + di2),
            v: s.v + 0.5 * h * (dv1 + dv2),
        }
    }

    fn observe(&self, topo: Topology, s: State) -> IntervalMeans {
        let c = self.c;
        let (v_ds, i_diode, i_clamp) = match topo {
            Topology::On => (self.r_on * s.i, 0.0, 0.0),
            Topology::Conduct => (s.v + c.diode_vf, s.i, 0.0),
            Topology::Clamped => (
                c.v_supply + c.diode_vf,
                s.i,
                s.i - c.load_current(c.v_supply),
            ),
            Topology::Idle => (c.vin, 0.0, 0.0),
        };
        IntervalMeans {
            v_ds,
            i_l: s.i,
            v_out: s.v,
            i_diode,
            i_clamp,
        }
    }

    /// Fraction of the step at which the first in-step event fires, and the
    /// state it snaps to.
    fn first_event(&self, topo: Topology, s0: State, s1: State) -> Option<(f64, State)> {
        let c = self.c;
        let mut best: Option<(f64, State)> = None;
        let mut consider = |theta: f64, snapped: State| {
            let theta = theta.clamp(0.0, 1.0);
            if best.is_none_or(|(b, _)| theta < b) {
                best = Some((theta, snapped));
            }
        };
        match topo {
            Topology::Conduct => {
                if s1.i < 0.0 && s0.i > 0.0 {
                    consider(
                        s0.i / (s0.i - s1.i),
                        State {
                            i: 0.0,
                            v: f64::NAN,
                        },
                    );
                }
                if s1.v > c.v_supply && s0.v < c.v_supply {
                    consider(
                        (c.v_supply - s0.v) / (s1.v - s0.v),
                        State {
                            i: f64::NAN,
                            v: c.v_supply,
                        },
                    );
                }
            }
            Topology::Clamped => {
                let margin0 = s0.i - c.load_current(c.v_supply);
                let margin1 = s1.i - c.load_current(c.v_supply);
                if s1.i < 0.0 && s0.i > 0.0 {
                    consider(
                        s0.i / (s0.i - s1.i),
                        State {
                            i: 0.0,
                            v: c.v_supply,
                        },
                    );
                } else if margin1 < 0.0 && margin0 > 0.0 {
                    consider(
                        margin0 / (margin0 - margin1),
                        State {
                            i: f64::NAN,
                            v: c.v_supply,
                        },
                    );
                }
            }
            Topology::Idle => {
                // a loaded output can sag until the diode forward biases again
                let knee = c.vin - c.diode_vf;
                if s1.v < knee && s0.v > knee {
                    consider((s0.v - knee) / (s0.v - s1.v), State { i: 0.0, v: knee });
                }
            }
            Topology::On => {}
        }
        best
    }
}

const MAX_EVENTS_PER_STEP: usize = 16;

/// Runs the converter for `sim.n_periods` switching periods from a
/// pre-charged output (`v_out = V_in - V_f`, `i_l = 0`).
pub fn simulate(
    circuit: &CircuitParams,
    drive: &DriveSignal,
    device: &DeviceState,
    sim: &SimConfig,
) -> Result<Waveform> {
    circuit.validate()?;
    drive.validate()?;
    sim.validate()?;
    if !(device.rds_on >= 0.0) || !device.rds_on.is_finite() {
        return Err(Error::invalid("rds_on", "must be finite and >= 0"));
    }

    let n = sim.steps_per_period;
    let dt = drive.period() / n as f64;
    check_resolution(circuit, device.rds_on, dt)?;

    let stage = Stage {
        c: circuit,
        r_on: device.rds_on,
    };
    let on_steps = sim.on_steps(drive.duty);
    let gate_at = |k: usize| k % n < on_steps;
    let total = n * sim.n_periods;

    let mut s = State {
        i: 0.0,
        v: (circuit.vin - circuit.diode_vf).clamp(0.0, circuit.v_supply),
    };
    let mut samples = Vec::with_capacity(total + 1);
    let mut intervals = Vec::with_capacity(total);

    for k in 0..total {
        let gate = gate_at(k);
        let t = k as f64 * dt;
        let topo = stage.topology(gate, s);
        let obs = stage.observe(topo, s);
        samples.push(Sample {
            t,
            v_ds: obs.v_ds,
            i_l: s.i,
            v_out: s.v,
            gate_on: gate,
        });

        let mut acc = IntervalMeans::default();
        let mut remaining = 1.0;
        let mut events = 0;
        while remaining > 1e-12 {
            let topo = stage.topology(gate, s);
            let h = remaining * dt;
            let mut next = stage.heun(topo, s, h);
            let mut frac = remaining;
            if events < MAX_EVENTS_PER_STEP {
                if let Some((theta, snap)) = stage.first_event(topo, s, next) {
                    let partial = stage.heun(topo, s, theta * h);
                    next = State {
                        i: if snap.i.is_nan() { partial.i } else { snap.i },
                        v: if snap.v.is_nan() { partial.v } else { snap.v },
                    };
                    frac = theta * remaining;
                    events += 1;
                }
            }
            if topo != Topology::On && next.i < 0.0 {
                // rounding residue below the zero crossing
                next.i = 0.0;
            }
            if !next.i.is_finite() || !next.v.is_finite() {
                return Err(Error::NumericInstability {
                    step: k,
                    t,
                    what: format!("non-finite state i_l={}, v_out={}", next.i, next.v),
                });
            }
            let a = stage.observe(topo, s);
            let b = stage.observe(topo, next);
            let w = 0.5 * frac;
            acc.v_ds += w * (a.v_ds + b.v_ds);
            acc.i_l += w * (a.i_l + b.i_l);
            acc.v_out += w * (a.v_out + b.v_out);
            acc.i_diode += w * (a.i_diode + b.i_diode);
            acc.i_clamp += w * (a.i_clamp + b.i_clamp);
            s = next;
            remaining -= frac;
        }
        intervals.push(acc);
    }

    let gate = gate_at(total);
    let topo = stage.topology(gate, s);
    samples.push(Sample {
        t: total as f64 * dt,
        v_ds: stage.observe(topo, s).v_ds,
        i_l: s.i,
        v_out: s.v,
        gate_on: gate,
    });

    Ok(Waveform {
        dt,
        samples,
        intervals,
    })
}

/// Explicit Heun needs the step well inside every time constant.
fn check_resolution(c: &CircuitParams, r_on: f64, dt: f64) -> Result<()> {
    let lr = c.l_drain / (r_on + c.series_r).max(f64::MIN_POSITIVE);
    let lc = (c.l_drain * c.c_out).sqrt();
    let mut tightest = lr.min(lc);
    if let Some(r) = c.r_load {
        tightest = tightest.min(r * c.c_out);
    }
    if dt > 0.5 * tightest {
        return Err(Error::invalid(
            "steps_per_period",
            format!("step {dt:e} s too coarse for circuit time constant {tightest:e} s"),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateMetrics {
    /// Peak v_ds after settling.
    pub v_max: f64,
    /// Time-average v_ds after settling.
    pub v_in_avg: f64,
    /// Mean inductor current over gate-on time after settling.
    pub i_avg: f64,
    pub i_peak: f64,
    /// Mean v_ds over gate-off time after settling.
    pub v_off_avg: f64,
    /// Time-average v_out after settling.
    pub v_out_avg: f64,
    /// Duty cycle realised on the step grid.
    pub duty_realised: f64,
}

impl SteadyStateMetrics {
    /// Effective waveform shape factor for the averaged-voltage relation:
    /// `V_max · (1 - D) / shape` reproduces the gate-off contribution.
    pub fn measured_shape_factor(&self) -> Option<f64> {
        (self.v_off_avg > 0.0).then(|| self.v_max / self.v_off_avg)
    }
}

fn post_settle_window(w: &Waveform, sim: &SimConfig) -> Result<(usize, usize)> {
    let n = sim.steps_per_period;
    let periods = w.intervals.len() / n;
    let settle = sim.settle_periods(periods);
    if periods < settle + 2 {
        return Err(Error::InsufficientData(format!(
            "{periods} periods recorded, need {settle} settling plus 2 measured"
        )));
    }
    Ok((settle * n, periods * n))
}

pub fn steady_state_metrics(
    w: &Waveform,
    sim: &SimConfig,
    drive: &DriveSignal,
) -> Result<SteadyStateMetrics> {
    sim.validate()?;
    let expected_dt = drive.period() / sim.steps_per_period as f64;
    if (w.dt - expected_dt).abs() > 1e-9 * expected_dt {
        return Err(Error::invalid(
            "steps_per_period",
            format!(
                "waveform step {} s does not match drive period / steps ({expected_dt} s)",
                w.dt
            ),
        ));
    }
    let (start, end) = post_settle_window(w, sim)?;
    let span = &w.intervals[start..end];
    let gates = &w.samples[start..end];

    let mut sum_v = 0.0;
    let mut sum_vout = 0.0;
    let (mut sum_i_on, mut n_on) = (0.0, 0usize);
    let (mut sum_v_off, mut n_off) = (0.0, 0usize);
    for (m, s) in span.iter().zip(gates) {
        sum_v += m.v_ds;
        sum_vout += m.v_out;
        if s.gate_on {
            sum_i_on += m.i_l;
            n_on += 1;
        } else {
            sum_v_off += m.v_ds;
            n_off += 1;
        }
    }
    let count = span.len() as f64;
    let points = &w.samples[start..=end];
    let v_max = points
        .iter()
        .map(|s| s.v_ds)
        .fold(f64::NEG_INFINITY, f64::max);
    let i_peak = points
        .iter()
        .map(|s| s.i_l)
        .fold(f64::NEG_INFINITY, f64::max);

    Ok(SteadyStateMetrics {
        v_max,
        v_in_avg: sum_v / count,
        i_avg: if n_on > 0 {
            sum_i_on / n_on as f64
        } else {
            0.0
        },
        i_peak,
        v_off_avg: if n_off > 0 {
            sum_v_off / n_off as f64
        } else {
            0.0
        },
        v_out_avg: sum_vout / count,
        duty_realised: n_on as f64 / count,
    })
}

/// Per-period steady-state residuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodBalance {
    pub period: usize,
    /// |mean inductor voltage| / V_in.
    pub volt_second: f64,
    /// |net charge into C_out| / charge delivered through the diode.
    pub charge: f64,
}

pub fn period_balances(
    w: &Waveform,
    sim: &SimConfig,
    circuit: &CircuitParams,
) -> Result<Vec<PeriodBalance>> {
    let (start, end) = post_settle_window(w, sim)?;
    let n = sim.steps_per_period;
    let out = (start..end)
        .step_by(n)
        .map(|p0| {
            let span = &w.intervals[p0..p0 + n];
            let mut v_l = 0.0;
            let mut through = 0.0;
            let mut net = 0.0;
            for m in span {
                v_l += circuit.vin - circuit.series_r * m.i_l - m.v_ds;
                through += m.i_diode;
                net += m.i_diode - circuit.load_current(m.v_out) - m.i_clamp;
            }
            let v_l = v_l / n as f64;
            let charge = if through > 0.0 {
                (net / through).abs()
            } else if net == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            PeriodBalance {
                period: p0 / n,
                volt_second: (v_l / circuit.vin).abs(),
                charge,
            }
        })
        .collect();
    Ok(out)
}
