//! Exit criteria. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any fail.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use hvrb_core::campaign::{
    log_schedule, run_cell, run_matrix, CampaignSettings, CellResult, StressCell,
};
use hvrb_core::config::parse_config;
use hvrb_core::converter::{
    ideal_boost_vout, period_balances, simulate, steady_state_metrics, CircuitParams, DriveSignal,
    SimConfig, Waveform,
};
use hvrb_core::degradation::{delta_r_fraction, stress_slope, DegradationParams};
use hvrb_core::device::{effective_rds_on, DeviceState};
use hvrb_core::extraction::{extract_rds_on, fit_log_time, predict_avg_vin, RdsSample};
use rand::{rngs::StdRng, Rng, SeedableRng};

// Tolerances, fixed.
const EXTRACT_TARGET_OHM: f64 = 3.39;
const EXTRACT_TOL_OHM: f64 = 0.005;
const BOOST_LAW_REL: f64 = 0.02;
const ROUND_TRIP_REL: f64 = 1e-9;
const ROUND_TRIP_DRAWS: usize = 1000;
const LOG_LAW_R2: f64 = 0.99;
const LOG_LAW_SLOPE_REL: f64 = 0.02;
const BALANCE_REL: f64 = 0.01;
const STEP_HALVING_REL: f64 = 0.005;
const ROOM_K: f64 = 298.15;

const CAMPAIGN_CONFIG: &str = concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/tests/data/acceptance_campaign.toml"
);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn hvrb() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hvrb"))
}

fn c1_worked_example() -> Outcome {
    let out = hvrb()
        .args([
            "extract",
            "--vin-avg",
            "9.95",
            "--vmax",
            "60",
            "--duty",
            "0.7",
            "--iavg",
            "0.4",
        ])
        .output()
        .expect("run hvrb");
    let stdout = String::from_utf8_lossy(&out.stdout);
    let value = stdout
        .lines()
        .find_map(|l| l.strip_prefix("rds_on_ohm="))
        .and_then(|v| v.parse::<f64>().ok());
    match value {
        Some(r) if out.status.success() => outcome(
            (r - EXTRACT_TARGET_OHM).abs() <= EXTRACT_TOL_OHM,
            format!("R_DS(on) = {r} Ω (target {EXTRACT_TARGET_OHM} ± {EXTRACT_TOL_OHM})"),
        ),
        _ => outcome(false, format!("unexpected CLI output: {stdout}")),
    }
}

fn ideal_circuit() -> CircuitParams {
    CircuitParams {
        vin: 10.0,
        l_drain: 100e-6,
        c_in: 0.0,
        c_out: 10e-6,
        v_supply: 1e6,
        diode_vf: 0.0,
        series_r: 0.0,
        r_load: Some(20.0),
    }
}

fn ideal_sim() -> SimConfig {
    SimConfig {
        steps_per_period: 200,
        n_periods: 600,
        settle_fraction: 0.5,
    }
}

/// A simulation kept for the physics-invariant checks.
struct Run {
    label: String,
    circuit: CircuitParams,
    drive: DriveSignal,
    device: DeviceState,
    sim: SimConfig,
    waveform: Waveform,
}

fn c2_boost_law(runs: &mut Vec<Run>) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for d in [0.3, 0.5, 0.7] {
        let circuit = ideal_circuit();
        let drive = DriveSignal {
            duty: d,
            ..DriveSignal::default()
        };
        let device = DeviceState {
            rds_on: 0.0,
            delta_r_fraction: 0.0,
            stress_time: 0.0,
        };
        let sim = ideal_sim();
        let w = match simulate(&circuit, &drive, &device, &sim) {
            Ok(w) => w,
            Err(e) => return outcome(false, format!("D={d}: {e}")),
        };
        let m = steady_state_metrics(&w, &sim, &drive).unwrap();
        let expect = ideal_boost_vout(circuit.vin, d).unwrap();
        let err = (m.v_out_avg - expect).abs() / expect;
        worst = worst.max(err);
        parts.push(format!("D={d}: {:.4} V vs {expect:.4} V", m.v_out_avg));
        runs.push(Run {
            label: format!("ideal D={d}"),
            circuit,
            drive,
            device,
            sim,
            waveform: w,
        });
    }
    outcome(
        worst <= BOOST_LAW_REL,
        format!("{}; worst {:.3}%", parts.join(", "), worst * 100.0),
    )
}

fn c3_round_trip() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let mut worst: f64 = 0.0;
    for _ in 0..ROUND_TRIP_DRAWS {
        let i = rng.gen_range(0.01..2.0);
        let r = rng.gen_range(0.01..50.0);
        let d = rng.gen_range(0.05..=1.0);
        let vmax = rng.gen_range(1.0..200.0);
        let v = predict_avg_vin(i, r, d, vmax, 2.0).unwrap();
        let back = extract_rds_on(v, vmax, d, i, 2.0).unwrap().rds_on;
        worst = worst.max(((back - r) / r).abs());
    }
    outcome(
        worst <= ROUND_TRIP_REL,
        format!("{ROUND_TRIP_DRAWS} draws, worst relative error {worst:e}"),
    )
}

fn c4_log_law() -> Outcome {
    let params = DegradationParams::epc_gen5_100v();
    let nominal = 3.3;
    let times = log_schedule(10.0, 1000.0, 20).unwrap();

    // model-direct series
    let direct: Vec<RdsSample> = times
        .iter()
        .map(|&t| RdsSample {
            t,
            rds_on: effective_rds_on(
                delta_r_fraction(&params, 100.0, ROOM_K, t).unwrap(),
                nominal,
            )
            .unwrap(),
        })
        .collect();
    let fit = fit_log_time(&direct).unwrap();
    let expect = nominal * stress_slope(&params, 100.0, ROOM_K).unwrap();
    let direct_err = (fit.slope - expect).abs() / expect;
    let direct_ok = fit.r_squared >= LOG_LAW_R2 && direct_err <= LOG_LAW_SLOPE_REL;

    // same window through the simulated measurement chain
    let cell = StressCell {
        v_stress: 100.0,
        temp: ROOM_K,
        i_drive: 0.4,
        duty: 0.7,
        duration: 1000.0,
        sample_times: times,
    };
    let r = run_cell(&cell, &CampaignSettings::default()).unwrap();
    let Some(sfit) = r.fit.filter(|_| r.status.is_completed()) else {
        return outcome(
            false,
            format!("simulated cell did not complete: {:?}", r.status),
        );
    };
    let sexpect = nominal * stress_slope(&params, r.v_max_measured, ROOM_K).unwrap();
    let sim_err = (sfit.slope - sexpect).abs() / sexpect;
    let sim_ok = sfit.r_squared >= LOG_LAW_R2 && sim_err <= LOG_LAW_SLOPE_REL;

    outcome(
        direct_ok && sim_ok,
        format!(
            "model: r²={:.5}, slope err {:.3}%; simulated cell: r²={:.5}, slope err {:.3}%",
            fit.r_squared,
            direct_err * 100.0,
            sfit.r_squared,
            sim_err * 100.0
        ),
    )
}

fn c5_voltage_ordering(cells_out: &mut Vec<(CampaignSettings, CellResult)>) -> Outcome {
    let text = std::fs::read_to_string(CAMPAIGN_CONFIG).unwrap();
    let rc = parse_config(&text).unwrap();
    let result = match run_matrix(&rc.cells, &rc.settings) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let mut slopes = Vec::new();
    for c in &result.cells {
        match (&c.fit, c.status.is_completed()) {
            (Some(f), true) => slopes.push(f.slope),
            _ => return outcome(false, format!("cell {} V: {:?}", c.cell.v_stress, c.status)),
        }
    }
    cells_out.extend(result.cells.into_iter().map(|c| (rc.settings.clone(), c)));
    let ok = slopes.windows(2).all(|w| w[1] > w[0]);
    outcome(
        ok,
        format!("slopes (Ω/ln min) at V_max 60/85/110 V: {slopes:?}"),
    )
}

fn c6_temperature() -> Outcome {
    let p = DegradationParams::epc_gen5_100v();
    let mut ok = true;
    for v in [40.0, 70.0, 100.0] {
        let slopes: Vec<f64> = (0..21)
            .map(|k| stress_slope(&p, v, 250.0 + 10.0 * k as f64).unwrap())
            .collect();
        ok &= slopes.windows(2).all(|w| w[1] < w[0]);
    }
    outcome(ok, "21-point grid 250-450 K at 40, 70, 100 V")
}

fn metrics_pair(run: &Run) -> Option<(f64, f64)> {
    let h = run.sim.halved_step();
    let a = steady_state_metrics(&run.waveform, &run.sim, &run.drive).ok()?;
    let wb = simulate(&run.circuit, &run.drive, &run.device, &h).ok()?;
    let b = steady_state_metrics(&wb, &h, &run.drive).ok()?;
    let dv = (a.v_max - b.v_max).abs() / b.v_max.abs().max(f64::MIN_POSITIVE);
    let da = (a.v_in_avg - b.v_in_avg).abs() / b.v_in_avg.abs().max(f64::MIN_POSITIVE);
    Some((dv, da))
}

fn c7_physics(mut runs: Vec<Run>, cells: &[(CampaignSettings, CellResult)]) -> Outcome {
    // every measurement of every acceptance campaign cell, re-simulated
    for (settings, cell) in cells {
        let circuit = CircuitParams {
            v_supply: cell.cell.v_stress,
            ..settings.circuit
        };
        let drive = DriveSignal {
            duty: cell.cell.duty,
            ..settings.drive
        };
        for m in &cell.measurements {
            let device = DeviceState::with_degradation(
                settings.ratings.rds_on_nominal,
                m.rds_true / settings.ratings.rds_on_nominal - 1.0,
                m.t,
            )
            .unwrap();
            let circuit = CircuitParams {
                vin: m.vin,
                ..circuit
            };
            let waveform = simulate(&circuit, &drive, &device, &settings.sim).unwrap();
            runs.push(Run {
                label: format!("cell {} V t={} min", cell.cell.v_stress, m.t),
                circuit,
                drive,
                device,
                sim: settings.sim,
                waveform,
            });
        }
    }

    let (mut vs, mut q, mut step): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut failures = Vec::new();
    for (k, run) in runs.iter().enumerate() {
        if run.waveform.samples.iter().any(|s| s.i_l < 0.0) {
            failures.push(format!("{}: i_L < 0", run.label));
        }
        match period_balances(&run.waveform, &run.sim, &run.circuit) {
            Ok(b) => {
                for p in b {
                    vs = vs.max(p.volt_second);
                    q = q.max(p.charge);
                    if p.volt_second > BALANCE_REL || p.charge > BALANCE_REL {
                        failures.push(format!("{} period {}: {p:?}", run.label, p.period));
                    }
                }
            }
            Err(e) => failures.push(format!("{}: {e}", run.label)),
        }
        // step halving on the ideal runs and the first/last sample of each cell
        let edge = k < 3 || run.label.ends_with("t=1 min") || run.label.ends_with("t=1000 min");
        if edge {
            match metrics_pair(run) {
                Some((dv, da)) => {
                    step = step.max(dv).max(da);
                    if dv > STEP_HALVING_REL || da > STEP_HALVING_REL {
                        failures.push(format!("{}: step halving {dv:e} / {da:e}", run.label));
                    }
                }
                None => failures.push(format!("{}: step-halving rerun failed", run.label)),
            }
        }
    }
    failures.truncate(5);
    outcome(
        failures.is_empty(),
        format!(
            "{} simulations; worst volt-second {vs:e}, charge {q:e}, step-halving {step:e}{}",
            runs.len(),
            if failures.is_empty() {
                String::new()
            } else {
                format!("; {}", failures.join("; "))
            }
        ),
    )
}

fn c8_determinism() -> Outcome {
    let run = |dir: &Path| {
        hvrb()
            .args(["campaign", "--config", CAMPAIGN_CONFIG, "--out"])
            .arg(dir)
            .output()
            .expect("run hvrb")
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (ra, rb) = (run(a.path()), run(b.path()));
    if !ra.status.success() || !rb.status.success() {
        return outcome(
            false,
            format!("campaign failed: {}", String::from_utf8_lossy(&ra.stderr)),
        );
    }
    let mut names: Vec<_> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    let mut same = !names.is_empty();
    for n in &names {
        same &= std::fs::read(a.path().join(n)).ok() == std::fs::read(b.path().join(n)).ok();
    }
    let hash = |o: &std::process::Output| {
        String::from_utf8_lossy(&o.stdout)
            .lines()
            .find(|l| l.starts_with("config_sha256="))
            .map(str::to_owned)
    };
    same &= hash(&ra).is_some() && hash(&ra) == hash(&rb);
    outcome(
        same,
        format!(
            "{} files and the config hash compared byte for byte",
            names.len()
        ),
    )
}

fn report(name: &str, secs: f64, o: &Outcome) {
    let tag = if o.pass { "PASS" } else { "FAIL" };
    println!("[{tag}] criterion {name} ({secs:.2} s): {}", o.detail);
}

fn main() {
    let mut runs = Vec::new();
    let mut cells = Vec::new();
    let mut passed = 0;
    let mut failed = 0;
    let mut check = |name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        report(name, start.elapsed().as_secs_f64(), &o);
        if o.pass {
            passed += 1;
        } else {
            failed += 1;
        }
    };

    check("1 worked-example extraction", &mut c1_worked_example);
    check("2 boost law V_in/(1-D)", &mut || c2_boost_law(&mut runs));
    check("3 extraction round trip", &mut c3_round_trip);
    check("4 log-time law", &mut c4_log_law);
    check("5 stress-voltage ordering", &mut || {
        c5_voltage_ordering(&mut cells)
    });
    check("6 negative temperature coefficient", &mut c6_temperature);
    check("7 physics invariants", &mut || {
        c7_physics(std::mem::take(&mut runs), &cells)
    });
    check("8 determinism", &mut c8_determinism);

    println!("acceptance: {passed} passed, {failed} failed");
    if failed > 0 {
        std::process::exit(1);
    }
}
