mod common;

use common::{random_dense_plant, random_modal_plant, rng, siso_benchmark};
use nalgebra::{dmatrix, dvector, DMatrix};
use optreg::riccati::{feedback, siso_analytic_gain, solve_care, solve_care_matrices, LqrWeights};
use optreg::sim::{settling_time, simulate, Controller};
use optreg::{spectral_abscissa, Error, LinearPlant};
use proptest::prelude::*;
use rand::Rng;

fn check_solution(plant: &LinearPlant, rho: f64) {
    let sol = solve_care(plant, &LqrWeights::new(rho).unwrap()).unwrap();
    let a = plant.a();
    let s = plant.b() * plant.b().transpose();
    let q = DMatrix::identity(a.nrows(), a.nrows()) * rho;
    let res = (a.transpose() * &sol.p + &sol.p * a - &sol.p * &s * &sol.p + q).norm();
    assert!(res < 1e-8, "residual {res:.3e}, |P| = {:.3e}", sol.p.norm());
    assert!((res - sol.residual_norm).abs() <= 1e-9);
    assert!((&sol.p - sol.p.transpose()).norm() <= 1e-10 * sol.p.norm().max(1.0));
    let min_eig = sol.p.clone().symmetric_eigen().eigenvalues.min();
    assert!(min_eig >= -1e-8 * sol.p.norm().max(1.0));
    assert!(spectral_abscissa(&(a - plant.b() * &sol.gain)).unwrap() < 0.0);
}

#[test]
fn random_stabilizable_plants() {
    let mut r = rng(6);
    let start = std::time::Instant::now();
    for k in 0..200 {
        let p = r.random_range(1..=4usize);
        if k % 2 == 0 {
            let modes = r.random_range(1..=24usize);
            let plant = random_modal_plant(&mut r, modes, p);
            check_solution(&plant, 10f64.powf(r.random_range(-1.0..3.0)));
        } else {
            let n = r.random_range(1..=48usize);
            let plant = random_dense_plant(&mut r, n, p);
            check_solution(&plant, 10f64.powf(r.random_range(-1.0..2.0)));
        }
    }
    assert!(start.elapsed().as_secs_f64() < 30.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gain_is_invariant_to_joint_weight_scaling(
        seed in any::<u64>(),
        n in 1usize..12,
        p in 1usize..4,
        k in 0.01..100.0f64,
    ) {
        let mut r = rng(seed);
        let plant = random_dense_plant(&mut r, n, p);
        let q = DMatrix::identity(n, n) * 3.0;
        let rr = DMatrix::identity(p, p) * 0.5;
        let one = solve_care_matrices(plant.a(), plant.b(), &q, &rr).unwrap();
        let two = solve_care_matrices(plant.a(), plant.b(), &(&q * k), &(&rr * k)).unwrap();
        let scale = one.gain.norm().max(1.0);
        prop_assert!((&one.gain - &two.gain).norm() <= 1e-8 * scale);
        prop_assert!((&one.p * k - &two.p).norm() <= 1e-8 * (k * one.p.norm()).max(1.0));
    }
}

#[test]
fn scalar_examples() {
    let sol = solve_care_matrices(&dmatrix![-1.0], &dmatrix![1.0], &dmatrix![1.0], &dmatrix![1.0])
        .unwrap();
    let oracle = -1.0 + 2f64.sqrt();
    assert!((sol.p[(0, 0)] - oracle).abs() < 1e-12);
    let f = feedback(&sol, &dvector![1.0]).unwrap();
    assert!((f[0] + oracle).abs() < 1e-12);
}

/// Sign-corrected closed form for `x1' = x2, x2' = -w^2 x1 - 2 zeta w x2 + c f`
/// with `Q = diag(d1, d2)`, `R = g`, from expanding the 2x2 CARE by hand.
fn corrected_closed_form(w: f64, zeta: f64, c: f64, d1: f64, d2: f64, g: f64) -> [f64; 2] {
    let c0 = c * c / g;
    let w2 = w * w;
    let p12 = (-w2 + (w2 * w2 + c0 * d1).sqrt()) / c0;
    let zw = 2.0 * zeta * w;
    let p22 = (-zw + (zw * zw + c0 * (d2 + 2.0 * p12)).sqrt()) / c0;
    [c / g * p12, c / g * p22]
}

#[test]
fn siso_gain_matches_hand_expanded_oracle() {
    for ratio in [0.25, 1.0, 100.0] {
        let g = siso_analytic_gain(2.0, 0.03, 1.0, ratio, ratio, 1.0).unwrap();
        let oracle = corrected_closed_form(2.0, 0.03, 1.0, ratio, ratio, 1.0);
        for i in 0..2 {
            assert!((g.riccati[i] - oracle[i]).abs() <= 1e-10 * oracle[i].abs().max(1.0));
        }
    }
}

#[test]
fn siso_gain_depends_only_on_weight_ratio() {
    let a = siso_analytic_gain(2.0, 0.03, 1.0, 1.0, 1.0, 4.0).unwrap();
    let b = siso_analytic_gain(2.0, 0.03, 1.0, 25.0, 25.0, 100.0).unwrap();
    for i in 0..2 {
        assert!((a.riccati[i] - b.riccati[i]).abs() < 1e-12);
    }
    assert_eq!(a.closed_form.is_some(), b.closed_form.is_some());
}

#[test]
fn siso_gain_vanishes_with_state_weight() {
    let g = siso_analytic_gain(2.0, 0.03, 1.0, 1e-12, 1e-12, 1.0).unwrap();
    assert!(g.riccati[0].abs() < 1e-9 && g.riccati[1].abs() < 1e-9);
}

#[test]
fn siso_gain_regression_constant() {
    // Riccati gain for ratio 100, the value the printed closed form is checked against.
    let g = siso_analytic_gain(2.0, 0.03, 1.0, 100.0, 100.0, 1.0).unwrap();
    assert!((g.riccati[0] - 6.770329614269007).abs() < 1e-9);
    assert!((g.riccati[1] - 10.536221623).abs() < 1e-8);
}

#[test]
fn printed_closed_form_is_flagged() {
    // The printed form carries a sign slip in c12; the Riccati cross-check catches it.
    let g = siso_analytic_gain(2.0, 0.03, 1.0, 100.0, 100.0, 1.0).unwrap();
    assert!(g.discrepancy);
    assert!(siso_analytic_gain(2.0, 0.03, 0.0, 1.0, 1.0, 1.0).is_err());
}

#[test]
fn heavier_state_weight_settles_faster_unsaturated() {
    let plant = siso_benchmark(f64::INFINITY);
    let settle = |rho: f64| {
        let sol = solve_care(&plant, &LqrWeights::new(rho).unwrap()).unwrap();
        let ctrl = Controller::lqr("lqr", sol, plant.force_bounds().clone());
        settling_time(&simulate(&plant, &ctrl, 100.0, 1e-3).unwrap(), 0.02)
            .unwrap()
            .time()
    };
    assert!(settle(100.0) < settle(0.25));
}

#[test]
fn unstable_uncontrollable_mode_is_rejected() {
    let plant = LinearPlant::new(
        dmatrix![1.0, 0.0; 0.0, -1.0],
        dmatrix![0.0; 1.0],
        dvector![1.0],
        dvector![0.0, 0.0],
    )
    .unwrap();
    assert!(matches!(
        solve_care(&plant, &LqrWeights::new(1.0).unwrap()),
        Err(Error::NotStabilizable { .. })
    ));
}
