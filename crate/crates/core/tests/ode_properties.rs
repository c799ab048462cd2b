mod common;

use std::collections::BTreeMap;

use evmono::models::{get_model_with, ModelEntry};
use evmono::ode::{
    basin_probe, default_capture_radius, find_equilibrium, integrate, integrate_prolonged, integrate_with_stops,
    OdeError, Tolerances,
};
use evmono::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{model, uniform_in};

/// Models that the explicit integrator handles at their registered
/// parameters, plus the toxin model with a relaxed time-scale separation.
fn integrable_models() -> Vec<ModelEntry> {
    let mut out: Vec<ModelEntry> = [
        "linear_example1",
        "complex_counterexample",
        "three_state",
        "reduced_two_state",
        "fitzhugh_nagumo",
        "gut_kinetics",
    ]
    .iter()
    .map(|n| model(n))
    .collect();
    out.push(get_model_with("toxin_antitoxin", &BTreeMap::from([("eps".to_string(), 1.0)])).unwrap());
    out
}

fn rel_close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * x.abs().max(1.0))
}

#[test]
fn flow_is_a_semigroup() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let tol = Tolerances::new(1e-10, 1e-12);
    for m in integrable_models() {
        let w = &m.default_window;
        for _ in 0..10 {
            let x = uniform_in(&mut rng, &w.lo, &w.hi);
            let t = rng.gen_range(0.01..2.0);
            let s = rng.gen_range(0.01..2.0);
            let direct = integrate(&m.field, &x, t + s, tol).unwrap();
            let mid = integrate(&m.field, &x, s, tol).unwrap();
            let two = integrate(&m.field, mid.final_state(), t, tol).unwrap();
            assert!(
                rel_close(direct.final_state(), two.final_state(), 1e-6),
                "{}: {:?} vs {:?}",
                m.name,
                direct.final_state(),
                two.final_state()
            );
        }
    }
}

#[test]
fn variational_equations_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let tol = Tolerances::new(1e-11, 1e-13);
    for m in integrable_models() {
        let n = m.field.dim();
        let w = &m.default_window;
        for _ in 0..3 {
            let x = uniform_in(&mut rng, &w.lo, &w.hi);
            let t = rng.gen_range(0.2..2.0);
            let pro = integrate_prolonged(&m.field, &x, &Matrix::identity(n), t, &[t], tol).unwrap();
            let dx = &pro[0].dx;
            let h = 1e-5;
            for k in 0..n {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                let fp = integrate(&m.field, &xp, t, tol).unwrap();
                let fm = integrate(&m.field, &xm, t, tol).unwrap();
                let fd: Vec<f64> =
                    fp.final_state().iter().zip(fm.final_state()).map(|(a, b)| (a - b) / (2.0 * h)).collect();
                let col = dx.column(k);
                let scale = col.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1e-3);
                for (a, b) in col.iter().zip(&fd) {
                    assert!((a - b).abs() < 1e-3 * scale, "{} k={k}: {col:?} vs {fd:?}", m.name);
                }
            }
        }
    }
}

#[test]
fn prolonged_state_matches_plain_integration() {
    let m = model("three_state");
    let x = [2.0, 1.0, 0.3];
    let tol = Tolerances::default();
    let pro = integrate_prolonged(&m.field, &x, &Matrix::identity(3), 3.0, &[1.0, 3.0], tol).unwrap();
    let (_, stops) = integrate_with_stops(&m.field, &x, 3.0, &[1.0, 3.0], tol).unwrap();
    for (p, s) in pro.iter().zip(&stops) {
        assert!(rel_close(&p.x, s, 1e-7));
    }
}

#[test]
fn order_intervals_stay_in_the_basin() {
    let m = model("three_state");
    let sigma = [-1.0, 1.0, 1.0];
    let star = find_equilibrium(&m.field, &m.primary_equilibrium().guess, 1e-12, 50).unwrap();
    let radius = default_capture_radius(&star);
    let tol = Tolerances::new(1e-8, 1e-10);
    let w = &m.default_window;
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..10 {
        let z = uniform_in(&mut rng, &w.lo, &w.hi);
        let wpt: Vec<f64> = z.iter().zip(&sigma).map(|(a, s)| a + s * rng.gen_range(0.0..0.3)).collect();
        for p in [&z, &wpt] {
            assert!(basin_probe(&m.field, &star, p, 60.0, radius, tol).unwrap());
        }
        for _ in 0..20 {
            let u: f64 = rng.gen_range(0.0..1.0);
            let x: Vec<f64> = z.iter().zip(&wpt).map(|(a, b)| a + u * (b - a)).collect();
            assert!(basin_probe(&m.field, &star, &x, 60.0, radius, tol).unwrap(), "{x:?}");
        }
    }
}

#[test]
fn three_state_converges_from_the_unit_point() {
    let m = model("three_state");
    let star = find_equilibrium(&m.field, &m.primary_equilibrium().guess, 1e-12, 50).unwrap();
    let traj = integrate(&m.field, &[1.0, 1.0, 1.0], 50.0, Tolerances::default()).unwrap();
    let err = traj.final_state().iter().zip(&star).fold(0.0f64, |s, (a, b)| s.max((a - b).abs()));
    assert!(err < 1e-4, "distance {err:e}");
}

#[test]
fn toxin_second_equilibrium_is_not_in_the_basin_of_the_first() {
    // Near x• the fast rate is about 1.4e5/eps, so the time-scale separation
    // is relaxed further here. Equilibria do not depend on eps.
    let m = get_model_with("toxin_antitoxin", &BTreeMap::from([("eps".to_string(), 100.0)])).unwrap();
    let star = find_equilibrium(&m.field, &m.equilibrium("x_star").unwrap().guess, 1e-10, 100).unwrap();
    let bullet = find_equilibrium(&m.field, &m.equilibrium("x_bullet").unwrap().guess, 1e-10, 100).unwrap();
    let x0: Vec<f64> = bullet.iter().map(|v| v * (1.0 + 1e-3)).collect();
    let radius = default_capture_radius(&star);
    let tol = Tolerances::new(1e-8, 1e-10);
    assert!(!basin_probe(&m.field, &star, &x0, 50.0, radius, tol).unwrap());
    assert!(basin_probe(&m.field, &star, &star, 10.0, radius, tol).unwrap());
}

#[test]
fn dense_output_interpolates_between_steps() {
    let m = model("reduced_two_state");
    let x = [5.0, 0.6];
    let tol = Tolerances::new(1e-10, 1e-12);
    let traj = integrate(&m.field, &x, 4.0, tol).unwrap();
    let (_, stops) = integrate_with_stops(&m.field, &x, 4.0, &[0.77, 2.31], tol).unwrap();
    assert!(rel_close(&traj.interpolate(0.77), &stops[0], 1e-5));
    assert!(rel_close(&traj.interpolate(2.31), &stops[1], 1e-5));
    let mut dump = Vec::new();
    traj.write_dump(&mut dump).unwrap();
    let text = String::from_utf8(dump).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), traj.times.len());
}

#[test]
fn invalid_requests_are_rejected() {
    let m = model("reduced_two_state");
    assert!(matches!(
        integrate(&m.field, &[1.0, 1.0], 1.0, Tolerances::new(1e-15, 1e-12)),
        Err(OdeError::BadTolerance { .. })
    ));
    assert!(matches!(integrate(&m.field, &[1.0, 1.0], -1.0, Tolerances::default()), Err(OdeError::BadHorizon)));
    assert!(matches!(integrate(&m.field, &[1.0], 1.0, Tolerances::default()), Err(OdeError::Dimension(_))));
    assert!(matches!(
        integrate_with_stops(&m.field, &[1.0, 1.0], 1.0, &[0.5, 0.2], Tolerances::default()),
        Err(OdeError::BadTimes)
    ));
}
