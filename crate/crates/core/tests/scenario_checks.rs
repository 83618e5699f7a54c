mod common;

use std::io::Write;

use lqc_trust::controllers::{LambdaConfident, PredictionWindow, SelfTuning, ZeroConfident};
use lqc_trust::riccati::{solve_dare, DareOptions};
use lqc_trust::scenarios::{
    cartpole_instance, ev_charging_instance, generate_predictions, ingest_ev_csv, robot_tracking_instance,
    synthetic_ev_sessions, EvSession, NoiseKind, NoiseModel,
};
use lqc_trust::simulation::{rollout_cartpole, CartPoleParams, DisturbanceScaling};
use lqc_trust::Error;
use nalgebra::DVector;
use rand::Rng;

#[test]
fn tracking_disturbance_reproduces_kinematics() {
    let inst = robot_tracking_instance(50).unwrap();
    let mut rng = common::rng(30);
    let mut p = [0.3, -0.1];
    let mut v = [0.5, 0.2];
    let y0 = inst.trajectory[0];
    let mut x = DVector::from_vec(vec![p[0] - y0[0], p[1] - y0[1], v[0], v[1]]);
    for t in 0..50 {
        let u = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
        x = inst.sys.a() * &x + inst.sys.b() * &u + &inst.w[t];
        for i in 0..2 {
            p[i] += 0.2 * v[i];
            v[i] += 0.2 * u[i];
        }
        let y = inst.trajectory[t + 1];
        assert!((x[0] + y[0] - p[0]).abs() <= 1e-12);
        assert!((x[1] + y[1] - p[1]).abs() <= 1e-12);
        assert!((x[2] - v[0]).abs() <= 1e-12 && (x[3] - v[1]).abs() <= 1e-12);
    }
}

#[test]
fn ev_refill_keeps_state_constant() {
    let sessions = synthetic_ev_sessions(10, 60, 0.2, 5.0).unwrap();
    assert_eq!(sessions.len(), 12);
    assert_eq!(
        sessions[0],
        EvSession {
            arrival_slot: 0,
            charger_id: 0,
            energy_kwh: 5.0
        }
    );
    assert_eq!(sessions[11].charger_id, 1);
    let inst = ev_charging_instance(10, 60, &sessions).unwrap();
    let x0 = DVector::from_element(10, 3.0);
    let mut x = x0.clone();
    for w in &inst.w {
        let u = -w;
        x = inst.sys.a() * &x + inst.sys.b() * &u + w;
        assert_eq!(x, x0);
    }
    assert_eq!(inst.w[5][1], -5.0);
    assert_eq!(inst.w[0].sum() + inst.w[1].sum(), -5.0);
}

#[test]
fn prediction_noise_is_seed_deterministic() {
    let w: Vec<_> = (0..30)
        .map(|t| DVector::from_vec(vec![t as f64 * 0.1, -1.0, 2.0]))
        .collect();
    for kind in [
        NoiseKind::BinomialScaled,
        NoiseKind::GaussianIid,
        NoiseKind::GaussianScaledW,
    ] {
        for broadcast in [false, true] {
            let noise = NoiseModel {
                kind,
                param: 0.7,
                seed: 99,
                broadcast,
            };
            assert_eq!(
                generate_predictions(&w, &noise).unwrap(),
                generate_predictions(&w, &noise).unwrap()
            );
            let other = NoiseModel { seed: 100, ..noise };
            assert_ne!(
                generate_predictions(&w, &noise).unwrap(),
                generate_predictions(&w, &other).unwrap()
            );
        }
    }
    let unit = NoiseModel::new(NoiseKind::BinomialScaled, 1.0, 5);
    for (a, b) in generate_predictions(&w, &unit).unwrap().iter().zip(&w) {
        for e in (a - b).iter() {
            assert!(
                (e - e.round()).abs() < 1e-12 && (0.0..=10.0).contains(&e.round()),
                "{e}"
            );
        }
    }
    let broadcast = NoiseModel {
        broadcast: true,
        ..unit
    };
    for (a, b) in generate_predictions(&w, &broadcast).unwrap().iter().zip(&w) {
        let e = a - b;
        assert!(e.iter().all(|v| (v - e[0]).abs() < 1e-12));
    }
    let zeros = vec![DVector::zeros(3); 10];
    let scaled_w = NoiseModel::new(NoiseKind::GaussianScaledW, 4.0, 1);
    assert_eq!(generate_predictions(&zeros, &scaled_w).unwrap(), zeros);
}

#[test]
fn cartpole_linearization_is_accurate_near_upright() {
    let params = CartPoleParams::default();
    let inst = cartpole_instance(params, 1).unwrap();
    let mut rng = common::rng(31);
    for _ in 0..200 {
        let mut x = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
        x *= rng.random_range(0.0..1e-3) / x.norm();
        let u = rng.random_range(-1e-3..1e-3);
        let nonlinear = params.euler_step(&[x[0], x[1], x[2], x[3]], u);
        let linear = inst.sys.a() * &x + inst.sys.b() * DVector::from_element(1, u);
        let diff = (DVector::from_row_slice(&nonlinear) - linear).norm();
        assert!(diff <= 1e-5, "{diff}");
    }
}

#[test]
fn cartpole_one_step_error_is_second_order() {
    let params = CartPoleParams::default();
    let inst = cartpole_instance(params, 1).unwrap();
    let error = |theta: f64| {
        let x = [0.0, 0.0, theta, theta];
        let u = 50.0 * theta;
        let nonlinear = params.euler_step(&x, u);
        let linear = inst.sys.a() * DVector::from_row_slice(&x) + inst.sys.b() * DVector::from_element(1, u);
        (DVector::from_row_slice(&nonlinear) - linear).norm()
    };
    let (e1, e2) = (error(0.01), error(0.005));
    assert!(e1 > 0.0);
    assert!(e1 <= 0.01f64.powi(2));
    // Halving theta cuts the error at least fourfold (up to rounding).
    assert!(e2 <= 0.26 * e1, "{e1} {e2}");
}

#[test]
fn cartpole_equilibrium_and_failure_bookkeeping() {
    let params = CartPoleParams {
        failure_penalty: 1e3,
        ..CartPoleParams::default()
    };
    assert_eq!(params.euler_step(&[0.0; 4], 0.0), [0.0; 4]);

    let inst = cartpole_instance(params, 200).unwrap();
    let ric = solve_dare(&inst.sys, 200, DareOptions::default()).unwrap();
    let calm = PredictionWindow::new(vec![DVector::zeros(4); 200], vec![DVector::zeros(4); 200]).unwrap();
    let r = rollout_cartpole(&params, &inst.sys, &ric, &mut ZeroConfident, &calm, &DVector::zeros(4)).unwrap();
    assert!(r.states.iter().all(|x| x.norm() == 0.0));
    assert_eq!(r.total_cost, 0.0);

    let raw = CartPoleParams {
        disturbance_scaling: DisturbanceScaling::PerStep,
        ..params
    };
    let inst = cartpole_instance(raw, 200).unwrap();
    let window = PredictionWindow::new(inst.w.clone(), inst.w.clone()).unwrap();
    let r = rollout_cartpole(&raw, &inst.sys, &ric, &mut ZeroConfident, &window, &DVector::zeros(4)).unwrap();
    let step = r.failed_at.expect("unscaled forcing topples LQR");
    assert_eq!(r.actions.len(), step);
    assert_eq!(r.states.len(), step + 1);
    assert!(r.states[step][2].abs() > params.fail_angle);
    assert_eq!(r.terminal_cost, 1e3);
    assert!((r.total_cost - r.stage_costs.iter().sum::<f64>() - 1e3).abs() <= 1e-9 * r.total_cost);
}

#[test]
fn cartpole_self_tuning_survives_small_initial_tilt() {
    let params = CartPoleParams::default();
    let inst = cartpole_instance(params, 200).unwrap();
    let ric = solve_dare(&inst.sys, 200, DareOptions::default()).unwrap();
    let window = PredictionWindow::new(inst.w.clone(), inst.w.clone()).unwrap();
    let x0 = DVector::from_vec(vec![0.0, 0.0, 0.05, 0.0]);
    let mut c = SelfTuning::new(&ric, &inst.w, 0.3, false).unwrap();
    let r = rollout_cartpole(&params, &inst.sys, &ric, &mut c, &window, &x0).unwrap();
    assert!(r.failed_at.is_none());
    assert!(r.states.iter().all(|x| x[2].abs() < params.fail_angle));
    let mut fixed = LambdaConfident::new(&ric, &inst.w, 1.0).unwrap();
    let one = rollout_cartpole(&params, &inst.sys, &ric, &mut fixed, &window, &x0).unwrap();
    assert!(one.failed_at.is_none());
}

fn write_csv(dir: &tempfile::TempDir, body: &str) -> std::path::PathBuf {
    let path = dir.path().join("sessions.csv");
    let mut f = std::fs::File::create(&path).unwrap();
    f.write_all(body.as_bytes()).unwrap();
    path
}

#[test]
fn ev_csv_ingestion() {
    let dir = tempfile::tempdir().unwrap();
    let header = "arrival_slot,charger_id,energy_kwh\n";
    assert!(ingest_ev_csv(write_csv(&dir, header)).unwrap().is_empty());
    let sessions = ingest_ev_csv(write_csv(&dir, &format!("{header}5,2,5.0\n0,0,1.5\n"))).unwrap();
    assert_eq!(
        sessions[0],
        EvSession {
            arrival_slot: 5,
            charger_id: 2,
            energy_kwh: 5.0
        }
    );
    assert_eq!(sessions.len(), 2);

    match ingest_ev_csv(write_csv(&dir, &format!("{header}5,2,-1.0\n"))) {
        Err(Error::Validation { row, .. }) => assert_eq!(row, 2),
        other => panic!("{other:?}"),
    }
    match ingest_ev_csv(write_csv(&dir, &format!("{header}1,1,2.0\nx,2,5.0\n"))) {
        Err(Error::Parse { row, column, .. }) => assert_eq!((row, column.as_str()), (3, "arrival_slot")),
        other => panic!("{other:?}"),
    }
    match ingest_ev_csv(dir.path().join("missing.csv")) {
        Err(Error::MissingFile(p)) => assert!(p.ends_with("missing.csv")),
        other => panic!("{other:?}"),
    }
    let sample = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/ev_sessions_sample.csv");
    let sessions = ingest_ev_csv(sample).unwrap();
    assert!(!sessions.is_empty());
    assert!(sessions.iter().all(|s| s.charger_id < 52 && s.arrival_slot < 240));
}
