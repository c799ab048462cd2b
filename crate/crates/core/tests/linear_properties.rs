mod common;

use std::collections::BTreeMap;

use evmono::linear::{
    check_eventual_positivity, find_alpha_certificates, schur_reduce, similarity_positivize, AlphaSearch,
    EvPosVerdict, LorentzConeSpec, Membership, DEFAULT_SAMPLES,
};
use evmono::models::get_model_with;
use evmono::ode::{integrate_with_stops, Tolerances};
use evmono::sampling::log_grid;
use evmono::spectral::{decompose, matrix_exp};
use evmono::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{max_abs_diff, random_dominant_stable, with_spectrum};

/// Dominant stable matrix whose subdominant pair is complex.
fn random_with_complex_pair(rng: &mut impl Rng) -> Matrix {
    let l1 = -rng.gen_range(0.2..1.0);
    let re = l1 - rng.gen_range(0.5..2.0);
    let im = rng.gen_range(0.5..3.0);
    let b = Matrix::from_rows(vec![vec![l1, 0.0, 0.0], vec![0.0, re, im], vec![0.0, -im, re]]).unwrap();
    loop {
        let q = Matrix::from_fn(3, 3, |i, j| if i == j { 2.0 } else { 0.0 } + rng.gen_range(-1.0..1.0));
        if let Ok(qi) = q.inverse() {
            if q.condition_1() < 50.0 {
                return q.matmul(&b).matmul(&qi);
            }
        }
    }
}

/// Point of `K_α` with head 1 and a random tail of norm `r < 1`.
fn cone_point(cone: &LorentzConeSpec<f64>, rng: &mut impl Rng) -> Vec<f64> {
    let n = cone.w.rows();
    let mut z: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let tail = z[1..].iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    let r = rng.gen_range(0.0..0.999);
    z[0] = 1.0;
    for v in &mut z[1..] {
        *v *= r / tail;
    }
    cone.w.solve(&z).unwrap()
}

#[test]
fn lorentz_cone_is_forward_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..40 {
        let a = if trial % 2 == 0 {
            let n = rng.gen_range(2..=5);
            random_dominant_stable(&mut rng, n)
        } else {
            random_with_complex_pair(&mut rng)
        };
        let dec = decompose(&a).unwrap();
        let n = dec.n();
        let alpha: Vec<f64> = (1..n).map(|_| rng.gen_range(0.1..10.0)).collect();
        let cone = LorentzConeSpec::from_decomposition(&dec, &alpha).unwrap();
        for _ in 0..25 {
            let y = cone_point(&cone, &mut rng);
            assert_ne!(cone.membership(&y), Membership::Outside);
            for t in [0.5, 1.0, 5.0] {
                let yt = matrix_exp(&a, t).unwrap().mul_vec(&y);
                assert_ne!(cone.membership(&yt), Membership::Outside, "trial {trial} t {t}");
            }
        }
    }
}

/// Strictly positive rank-one part plus a perturbation with negative
/// entries, shifted to be stable.
fn strongly_ep_candidate(rng: &mut impl Rng, n: usize) -> Matrix {
    let u: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
    let a = Matrix::from_fn(n, n, |i, j| 2.0 * u[i] * v[j] + rng.gen_range(-0.8..0.2));
    let dec = decompose(&a).unwrap();
    a.sub(&Matrix::identity(n).scale(dec.eigenvalues[0].re + rng.gen_range(0.1..1.0)))
}

#[test]
fn strong_verdict_implies_positive_flow_after_tau0() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut strong = 0;
    for _ in 0..30 {
        let n = rng.gen_range(2..=5);
        let a = strongly_ep_candidate(&mut rng, n);
        let rep = check_eventual_positivity(&a, None, DEFAULT_SAMPLES).unwrap();
        if rep.verdict != EvPosVerdict::StronglyEventuallyPositive {
            continue;
        }
        strong += 1;
        let tau0 = rep.tau0_estimate.unwrap();
        let times: Vec<f64> = log_grid(rep.t_max * 1e-6, rep.t_max, DEFAULT_SAMPLES)
            .into_iter()
            .filter(|t| *t >= tau0)
            .collect();
        let props: Vec<Matrix> = times.iter().map(|t| matrix_exp(&a, *t).unwrap()).collect();
        for _ in 0..100 {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(1e-3..1.0)).collect();
            for (t, e) in times.iter().zip(&props) {
                let y = e.mul_vec(&x);
                assert!(y.iter().all(|v| *v > 0.0), "t {t} tau0 {tau0}: {y:?}");
            }
        }
    }
    assert!(strong >= 10, "only {strong} strongly eventually positive samples");
}

fn sin_angle(y: &[f64], v: &[f64]) -> f64 {
    let ny = y.iter().map(|a| a * a).sum::<f64>().sqrt();
    let c: f64 = y.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / ny;
    y.iter().zip(v).map(|(a, b)| (a / ny - c * b).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn dominant_direction_attracts() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..40 {
        let n = rng.gen_range(2..=4);
        let a = random_dominant_stable(&mut rng, n);
        let dec = decompose(&a).unwrap();
        let (v1, w1) = (dec.v_re(0), dec.w_re(0));
        let gap = dec.eigenvalues[0].re - dec.eigenvalues[1].re;
        let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if w1.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() < 0.0 {
            x.iter_mut().for_each(|v| *v = -*v);
        }
        let t0 = 5.0 / gap;
        let angles: Vec<f64> = log_grid(t0, 8.0 * t0, 30)
            .iter()
            .map(|t| sin_angle(&matrix_exp(&a, *t).unwrap().mul_vec(&x), &v1))
            .collect();
        for w in angles.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9) || w[1] < 1e-12, "{angles:?}");
        }
    }
}

#[test]
fn reduced_dynamics_track_the_fast_limit() {
    let eps = 1e-4;
    let m = get_model_with("linear_example1", &BTreeMap::from([("eps".to_string(), eps)])).unwrap();
    let full = m.matrix.clone().unwrap();
    let reduced = schur_reduce(&full, &[0, 1], &[2]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let times: Vec<f64> = (0..=40).map(|k| 1.0 + 0.1 * k as f64).collect();
    for _ in 0..10 {
        let x0: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut sup = 0.0f64;
        for t in &times {
            let xf = matrix_exp(&full, *t).unwrap().mul_vec(&x0);
            let xr = matrix_exp(&reduced, *t).unwrap().mul_vec(&x0[..2]);
            sup = sup.max(max_abs_diff(&xf[..2], &xr));
        }
        assert!(sup < 0.05, "sup error {sup}");
        // The integrator agrees with the exact propagator on the stiff system.
        let (_, stops) =
            integrate_with_stops(&m.field, &x0, 2.0, &[1.0, 2.0], Tolerances::new(1e-8, 1e-10)).unwrap();
        let exact = matrix_exp(&full, 2.0).unwrap().mul_vec(&x0);
        assert!(max_abs_diff(&stops[1], &exact) < 1e-5);
    }
}

#[test]
fn positivizer_meets_its_constraints() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    for _ in 0..10 {
        let n = rng.gen_range(2..=6);
        let mut d = vec![rng.gen_range(-1.0..1.0)];
        for _ in 1..n {
            d.push(d[0] - rng.gen_range(0.3..3.0));
        }
        let a = with_spectrum(&mut rng, &d);
        let dec = decompose(&a).unwrap();
        let p = similarity_positivize(&dec).unwrap();
        let (v1, w1) = (dec.v_re(0), dec.w_re(0));
        let s1 = p.s.mul_vec(&vec![1.0; n]);
        let ws = p.s.vec_mul(&w1);
        assert!(max_abs_diff(&s1, &v1) < 1e-10);
        assert!(max_abs_diff(&ws, &vec![1.0 / n as f64; n]) < 1e-10);
        let b = p.s.inverse().unwrap().matmul(&a).matmul(&p.s);
        let rep = check_eventual_positivity(&b, None, DEFAULT_SAMPLES).unwrap();
        assert_ne!(rep.verdict, EvPosVerdict::NotEventuallyPositive, "{}", rep.reason);
    }
}

#[test]
fn alpha_certificates_sandwich_the_orthant() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let mut checked = 0;
    for _ in 0..20 {
        let n = rng.gen_range(2..=4);
        let a = strongly_ep_candidate(&mut rng, n);
        let dec = decompose(&a).unwrap();
        let AlphaSearch::Feasible(cert) = find_alpha_certificates(&dec).unwrap() else {
            continue;
        };
        checked += 1;
        let kb = LorentzConeSpec::from_decomposition(&dec, &cert.beta).unwrap();
        let kg = LorentzConeSpec::from_decomposition(&dec, &cert.gamma).unwrap();
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            assert_eq!(kg.membership(&e), Membership::Inside);
        }
        for _ in 0..200 {
            let y = cone_point(&kb, &mut rng);
            let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(y.iter().all(|v| *v > -1e-9 * scale), "{y:?}");
        }
        for _ in 0..200 {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            assert_eq!(kg.membership(&x), Membership::Inside);
        }
    }
    assert!(checked >= 5, "only {checked} feasible searches");
}
