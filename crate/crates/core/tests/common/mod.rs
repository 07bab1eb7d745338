#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use optreg::LinearPlant;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `exp(M)` by scaling and squaring with a degree-18 Taylor series.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm = m.iter().map(|v| v.abs()).sum::<f64>().max(1e-300);
    let squarings = (norm.log2().ceil() as i32 + 1).max(0);
    let scaled = m / 2f64.powi(squarings);
    let mut term = DMatrix::identity(n, n);
    let mut sum = DMatrix::identity(n, n);
    for k in 1..=18 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

/// Symmetric positive definite `G G^T + shift I`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> DMatrix<f64> {
    let g = random_matrix(rng, n, n);
    &g * g.transpose() + DMatrix::identity(n, n) * shift
}

/// Lightly damped oscillator from the single-mode benchmark:
/// `x1' = x2`, `x2' = -4 x1 - 0.12 x2 + f`, `x(0) = (0, 1)`.
pub fn siso_benchmark(bound: f64) -> LinearPlant {
    siso(0.03, bound)
}

pub fn siso(zeta: f64, bound: f64) -> LinearPlant {
    let omega = 2.0;
    LinearPlant::new(
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -omega * omega, -2.0 * zeta * omega]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        DVector::from_element(1, bound),
        DVector::from_row_slice(&[0.0, 1.0]),
    )
    .unwrap()
}

/// Smallest singular value of `[A - lambda I, B]` over eigenvalues with
/// nonnegative real part; infinite for Hurwitz `A`.
pub fn stabilizability_margin(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    use nalgebra::Complex;
    let n = a.nrows();
    let p = b.ncols();
    let mut margin = f64::INFINITY;
    for l in a.complex_eigenvalues().iter() {
        if l.re < 0.0 {
            continue;
        }
        let mut h = DMatrix::<Complex<f64>>::zeros(n, n + p);
        for i in 0..n {
            for j in 0..n {
                h[(i, j)] = Complex::new(a[(i, j)], 0.0);
            }
            h[(i, i)] -= l;
            for j in 0..p {
                h[(i, n + j)] = Complex::new(b[(i, j)], 0.0);
            }
        }
        margin = margin.min(h.singular_values().min());
    }
    margin
}

/// Modal structural plant with `modes` lightly damped oscillators.
pub fn random_modal_plant(rng: &mut ChaCha8Rng, modes: usize, p: usize) -> LinearPlant {
    let n = 2 * modes;
    let mut a = DMatrix::zeros(n, n);
    for i in 0..modes {
        let w: f64 = rng.random_range(0.5..20.0);
        let z: f64 = rng.random_range(0.005..0.1);
        a[(i, modes + i)] = 1.0;
        a[(modes + i, i)] = -w * w;
        a[(modes + i, modes + i)] = -2.0 * z * w;
    }
    let mut b = DMatrix::zeros(n, p);
    b.view_mut((modes, 0), (modes, p))
        .copy_from(&random_matrix(rng, modes, p));
    LinearPlant::new(
        a,
        b,
        DVector::from_element(p, f64::INFINITY),
        DVector::zeros(n),
    )
    .unwrap()
}

/// Dense plant `A = U D U^T` with random orthogonal `U` and a block-diagonal
/// spectrum holding at most four unstable eigenvalues; redrawn until the
/// stabilizability margin is at least `0.1`.
pub fn random_dense_plant(rng: &mut ChaCha8Rng, n: usize, p: usize) -> LinearPlant {
    loop {
        let mut d = DMatrix::zeros(n, n);
        let mut i = 0;
        let mut unstable = 0;
        while i < n {
            let re = if unstable < 4 && rng.random_bool(0.15) {
                unstable += 1;
                rng.random_range(0.0..0.5)
            } else {
                rng.random_range(-3.0..-0.05)
            };
            if i + 1 < n && rng.random_bool(0.5) {
                let w = rng.random_range(0.2..5.0);
                d[(i, i)] = re;
                d[(i + 1, i + 1)] = re;
                d[(i, i + 1)] = w;
                d[(i + 1, i)] = -w;
                i += 2;
            } else {
                d[(i, i)] = re;
                i += 1;
            }
        }
        let u = random_matrix(rng, n, n).qr().q();
        let a = &u * d * u.transpose();
        let b = random_matrix(rng, n, p);
        if stabilizability_margin(&a, &b) >= 0.1 {
            return LinearPlant::new(
                a,
                b,
                DVector::from_element(p, f64::INFINITY),
                DVector::zeros(n),
            )
            .unwrap();
        }
    }
}

/// Twelve-mass chain with four actuators, six modes kept, 1% modal damping,
/// and a unit displacement of the free end.
pub fn synthetic_structure(bound: f64) -> LinearPlant {
    use optreg::plant::{modal_decompose, to_state_space, Damping, InitialState};
    let masses = [1.0, 1.5, 0.8, 1.2, 2.0, 1.0, 0.7, 1.3, 1.1, 0.9, 1.6, 1.0];
    let springs = [40.0, 35.0, 30.0, 28.0, 25.0, 22.0, 20.0, 18.0, 15.0, 12.0, 10.0, 8.0];
    let n = masses.len();
    let m = DMatrix::from_diagonal(&DVector::from_row_slice(&masses));
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] += springs[i];
        if i + 1 < n {
            k[(i, i)] += springs[i + 1];
            k[(i, i + 1)] -= springs[i + 1];
            k[(i + 1, i)] -= springs[i + 1];
        }
    }
    let mut d = DMatrix::zeros(n, 4);
    d[(11, 0)] = 1.0;
    d[(10, 0)] = -1.0;
    d[(9, 1)] = 1.0;
    d[(8, 1)] = -1.0;
    d[(11, 2)] = 1.0;
    d[(10, 3)] = 1.0;
    d[(7, 3)] = -1.0;
    let modes = 6;
    let model = optreg::StructuralModel::new(
        m,
        k,
        Damping::Modal(DVector::from_element(modes, 0.01)),
        d,
        modes,
    )
    .unwrap();
    let modal = modal_decompose(&model).unwrap();
    let mut u0 = DVector::zeros(n);
    u0[11] = 1.0;
    to_state_space(
        &model,
        &modal,
        &InitialState::Physical {
            displacement: u0,
            velocity: None,
        },
        DVector::from_element(4, bound),
    )
    .unwrap()
}
