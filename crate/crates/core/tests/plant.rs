mod common;

use common::{random_matrix, random_spd, rng};
use nalgebra::{DMatrix, DVector};
use optreg::ode::rk4_step;
use optreg::plant::{
    modal_decompose, parse_plant_source, to_state_space, Damping, InitialState, PlantSource,
};
use optreg::{Error, StructuralModel};
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn modal_basis_is_mass_orthonormal(seed in any::<u64>(), n in 1usize..=24) {
        let mut r = rng(seed);
        let m = random_spd(&mut r, n, 0.5);
        let k = random_spd(&mut r, n, 0.1);
        let model = StructuralModel::new(
            m.clone(),
            k.clone(),
            Damping::Modal(DVector::from_element(n, 0.01)),
            random_matrix(&mut r, n, 2),
            n,
        )
        .unwrap();
        let modal = modal_decompose(&model).unwrap();
        let phi = &modal.mode_shapes;
        let w2 = DMatrix::from_diagonal(&modal.frequencies.map(|w| w * w));
        prop_assert!((phi.transpose() * &m * phi - DMatrix::identity(n, n)).norm() < 1e-8);
        prop_assert!((phi.transpose() * &k * phi - w2).norm() < 1e-8);
        for i in 1..n {
            prop_assert!(modal.frequencies[i - 1] <= modal.frequencies[i]);
        }
    }

    #[test]
    fn state_matrix_eigenvalues_match_modes(seed in any::<u64>(), n in 1usize..=8) {
        let mut r = rng(seed);
        let zeta = DVector::from_fn(n, |_, _| r.random_range(0.0..0.9));
        let model = StructuralModel::new(
            random_spd(&mut r, n, 0.5),
            random_spd(&mut r, n, 0.5),
            Damping::Modal(zeta.clone()),
            random_matrix(&mut r, n, 1),
            n,
        )
        .unwrap();
        let modal = modal_decompose(&model).unwrap();
        let plant = to_state_space(
            &model,
            &modal,
            &InitialState::Modal(DVector::zeros(2 * n)),
            DVector::from_element(1, 1.0),
        )
        .unwrap();
        let mut eig: Vec<_> = plant.a().complex_eigenvalues().iter().copied().collect();
        for i in 0..n {
            let w = modal.frequencies[i];
            let z = modal.damping_ratios[i];
            for sgn in [1.0, -1.0] {
                let target = nalgebra::Complex::new(-z * w, sgn * w * (1.0 - z * z).sqrt());
                let (pos, dist) = eig
                    .iter()
                    .enumerate()
                    .map(|(k, l)| (k, (l - target).norm()))
                    .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
                prop_assert!(dist < 1e-8, "mode {i}: {target} not found");
                eig.remove(pos);
            }
        }
    }
}

/// `M u'' + E u' + K u = D f` integrated directly in physical coordinates.
fn second_order_step(
    m_inv: &DMatrix<f64>,
    e: &DMatrix<f64>,
    k: &DMatrix<f64>,
    load: &DVector<f64>,
    z: &DVector<f64>,
    h: f64,
) -> DVector<f64> {
    let n = k.nrows();
    rk4_step(
        |_, s| {
            let u = s.rows(0, n);
            let v = s.rows(n, n);
            let acc = m_inv * (load - e * v - k * u);
            let mut out = DVector::zeros(2 * n);
            out.rows_mut(0, n).copy_from(&v);
            out.rows_mut(n, n).copy_from(&acc);
            out
        },
        0.0,
        z,
        h,
    )
}

#[test]
fn reduced_model_reproduces_full_model() {
    let mut r = rng(404);
    for _ in 0..5 {
        let n = 4;
        let m = random_spd(&mut r, n, 0.5);
        let k = random_spd(&mut r, n, 1.0);
        let d = random_matrix(&mut r, n, 2);
        let zeta = DVector::from_fn(n, |_, _| r.random_range(0.0..0.1));
        let model =
            StructuralModel::new(m.clone(), k.clone(), Damping::Modal(zeta.clone()), d.clone(), n)
                .unwrap();
        let modal = modal_decompose(&model).unwrap();
        let phi = modal.mode_shapes.clone();
        let u0 = DVector::from_fn(n, |_, _| r.random_range(-1.0..1.0));
        let plant = to_state_space(
            &model,
            &modal,
            &InitialState::Physical {
                displacement: u0.clone(),
                velocity: None,
            },
            DVector::from_element(2, f64::INFINITY),
        )
        .unwrap();

        // Physical damping equivalent to the modal ratios: E = M Phi diag(2 zeta w) Phi^T M.
        let c_modal = DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| {
            2.0 * modal.damping_ratios[i] * modal.frequencies[i]
        }));
        let e = &m * &phi * c_modal * phi.transpose() * &m;
        let m_inv = m.clone().try_inverse().unwrap();

        let h = 1e-3;
        let mut full = DVector::zeros(2 * n);
        full.rows_mut(0, n).copy_from(&u0);
        let mut reduced = plant.x0().clone();
        let mut worst: f64 = 0.0;
        for step in 0..10_000 {
            let t = step as f64 * h;
            let f = DVector::from_vec(vec![(1.3 * t).sin(), (0.7 * t).cos()]);
            full = second_order_step(&m_inv, &e, &k, &(&d * &f), &full, h);
            reduced = rk4_step(|_, x| plant.rhs(x, &f), t, &reduced, h);
            let u_reduced = &phi * reduced.rows(0, n);
            worst = worst.max((u_reduced - full.rows(0, n)).amax());
        }
        assert!(worst < 1e-6, "worst displacement mismatch {worst:.3e}");
    }
}

#[test]
fn malformed_stiffness_row_is_named() {
    let text = r#"{"M": [[1, 0], [0, 1]], "K": [[2, -1], [-1]], "D": [[1], [0]],
                   "zeta": [0.01, 0.01], "n_modes": 2, "x0": [1, 0]}"#;
    match parse_plant_source(text) {
        Err(Error::Parse(msg)) => assert!(msg.contains("`K` row 1"), "{msg}"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn structural_file_reduces_to_benchmark_plant() {
    let text = r#"{"M": [[1]], "K": [[4]], "D": [[1]], "zeta": [0.03], "n_modes": 1,
                   "x0": [0], "bounds": [1]}"#;
    let source = parse_plant_source(text).unwrap();
    assert!(matches!(source, PlantSource::Structural { .. }));
    let plant = source.to_plant(None).unwrap();
    assert!((plant.a()[(1, 0)] + 4.0).abs() < 1e-12);
    assert!((plant.a()[(1, 1)] + 0.12).abs() < 1e-12);
    assert_eq!(plant.b()[(1, 0)], 1.0);
}
