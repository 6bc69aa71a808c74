use hvrb_core::converter::{
    ideal_boost_vout, period_balances, simulate, steady_state_metrics, CircuitParams, DriveSignal,
    SimConfig,
};
use hvrb_core::device::DeviceState;

fn ideal() -> CircuitParams {
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

fn lossless() -> DeviceState {
    DeviceState {
        rds_on: 0.0,
        delta_r_fraction: 0.0,
        stress_time: 0.0,
    }
}

fn long_run() -> SimConfig {
    SimConfig {
        steps_per_period: 200,
        n_periods: 600,
        settle_fraction: 0.5,
    }
}

fn drive(duty: f64) -> DriveSignal {
    DriveSignal {
        duty,
        ..DriveSignal::default()
    }
}

#[test]
fn ideal_boost_ratio_and_balances() {
    for d in [0.3, 0.5, 0.7] {
        let sim = long_run();
        let w = simulate(&ideal(), &drive(d), &lossless(), &sim).unwrap();
        let m = steady_state_metrics(&w, &sim, &drive(d)).unwrap();
        let expect = ideal_boost_vout(10.0, d).unwrap();
        assert!(
            (m.v_out_avg - expect).abs() / expect < 0.02,
            "D={d}: {} vs {expect}",
            m.v_out_avg
        );
        for b in period_balances(&w, &sim, &ideal()).unwrap() {
            assert!(
                b.volt_second <= 0.01,
                "D={d} period {}: {}",
                b.period,
                b.volt_second
            );
            assert!(b.charge <= 0.01, "D={d} period {}: {}", b.period, b.charge);
        }
        assert!(w.samples.iter().all(|s| s.i_l >= 0.0));
    }
}

#[test]
fn boost_ratio_monotone_in_duty() {
    let sim = long_run();
    let avg = |d: f64| {
        let w = simulate(&ideal(), &drive(d), &lossless(), &sim).unwrap();
        steady_state_metrics(&w, &sim, &drive(d)).unwrap().v_out_avg
    };
    let (a, b, c) = (avg(0.3), avg(0.45), avg(0.6));
    assert!(a < b && b < c, "{a} {b} {c}");
}

#[test]
fn step_halving_converges_on_board() {
    let c = CircuitParams {
        vin: 2.2,
        v_supply: 60.0,
        ..CircuitParams::hvrb_board()
    };
    let dev = DeviceState::fresh(3.3).unwrap();
    let d = DriveSignal::default();
    let sim = SimConfig::default();
    let a = steady_state_metrics(&simulate(&c, &d, &dev, &sim).unwrap(), &sim, &d).unwrap();
    let h = sim.halved_step();
    let b = steady_state_metrics(&simulate(&c, &d, &dev, &h).unwrap(), &h, &d).unwrap();
    assert!((a.v_max - b.v_max).abs() / b.v_max < 0.005);
    assert!((a.v_in_avg - b.v_in_avg).abs() / b.v_in_avg < 0.005);
}

#[test]
fn board_clamp_and_balances() {
    let c = CircuitParams {
        vin: 10.0,
        ..CircuitParams::hvrb_board()
    };
    let dev = DeviceState::fresh(3.3).unwrap();
    let d = drive(0.7);
    let sim = SimConfig::default();
    let w = simulate(&c, &d, &dev, &sim).unwrap();
    let bound = c.clamp_vds() * 1.01;
    assert!(w.samples.iter().all(|s| s.v_ds <= bound && s.i_l >= 0.0));
    let m = steady_state_metrics(&w, &sim, &d).unwrap();
    assert!((m.v_max - c.clamp_vds()).abs() < 1e-9);
    assert!(m.v_max >= m.v_in_avg && m.v_in_avg >= 0.0);
    for b in period_balances(&w, &sim, &c).unwrap() {
        assert!(b.volt_second <= 0.01 && b.charge <= 0.01, "{b:?}");
    }
}

#[test]
fn simulation_is_deterministic() {
    let c = CircuitParams::hvrb_board();
    let dev = DeviceState::fresh(3.3).unwrap();
    let d = DriveSignal::default();
    let sim = SimConfig::default();
    let a = simulate(&c, &d, &dev, &sim).unwrap();
    let b = simulate(&c, &d, &dev, &sim).unwrap();
    assert_eq!(a, b);
}
