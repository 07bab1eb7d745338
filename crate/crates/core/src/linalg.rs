//! Dense kernels shared by the Riccati solver and the synthesis modules.

use nalgebra::{Complex, DMatrix, Schur, SymmetricEigen};

use crate::error::{Error, Result};

const SIGN_MAX_ITER: usize = 100;
const SIGN_TOL: f64 = 1e-13;

fn log_abs_det(m: &DMatrix<f64>) -> Option<f64> {
    let lu = m.clone().lu();
    let u = lu.u();
    let mut acc = 0.0;
    for i in 0..u.nrows() {
        let d = u[(i, i)].abs();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        acc += d.ln();
    }
    Some(acc)
}

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix sign function by the determinant-scaled Newton iteration.
///
/// Fails when an iterate becomes singular, which happens when the input has
/// eigenvalues on (or numerically near) the imaginary axis.
pub(crate) fn sign_function(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows() as f64;
    let mut z = m.clone();
    let mut scaling = true;
    for _ in 0..SIGN_MAX_ITER {
        let inv = z.clone().try_inverse().ok_or_else(|| {
            Error::SolverDivergence("singular iterate in sign iteration".into())
        })?;
        let mu = if scaling {
            let ld = log_abs_det(&z).ok_or_else(|| {
                Error::SolverDivergence("singular iterate in sign iteration".into())
            })?;
            (-ld / n).exp()
        } else {
            1.0
        };
        let next = (&z * mu + inv / mu) * 0.5;
        let change = norm1(&(&next - &z));
        let size = norm1(&next);
        if !change.is_finite() {
            return Err(Error::SolverDivergence("sign iteration overflowed".into()));
        }
        z = next;
        if change <= 1e-2 * size {
            scaling = false;
        }
        if change <= SIGN_TOL * size {
            return Ok(z);
        }
    }
    Err(Error::SolverDivergence(
        "sign iteration did not converge".into(),
    ))
}

/// Solves `A^T X + X A + C = 0` for Hurwitz `A` (Bartels-Stewart).
///
/// With the real Schur form `A = U T U^T` the equation becomes
/// `T^T Y + Y T = -U^T C U`, solved block by block over the 1x1 and 2x2
/// diagonal blocks of `T`.
pub(crate) fn lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| Error::EigenFailure("Schur iteration did not converge".into()))?;
    let (u, t) = schur.unpack();
    let f = -(u.transpose() * c * &u);

    let tiny = 1e-15 * t.norm();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)].abs() > tiny {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }

    let mut y = DMatrix::<f64>::zeros(n, n);
    for &(k0, ks) in &blocks {
        for &(l0, ls) in &blocks {
            let mut rhs = f.view((k0, l0), (ks, ls)).clone_owned();
            // sum_{i < k} T_ik^T Y_il + sum_{j < l} Y_kj T_jl
            if k0 > 0 {
                rhs -= t.view((0, k0), (k0, ks)).transpose() * y.view((0, l0), (k0, ls));
            }
            if l0 > 0 {
                rhs -= y.view((k0, 0), (ks, l0)) * t.view((0, l0), (l0, ls));
            }
            let tkk = t.view((k0, k0), (ks, ks));
            let tll = t.view((l0, l0), (ls, ls));
            // Column-major vec: (I_ls (x) T_kk^T + T_ll^T (x) I_ks) vec(Y) = vec(rhs).
            let m = ks * ls;
            let mut sys = DMatrix::<f64>::zeros(m, m);
            for q in 0..ls {
                for pp in 0..ks {
                    let row = q * ks + pp;
                    for r in 0..ks {
                        sys[(row, q * ks + r)] += tkk[(r, pp)];
                    }
                    for r in 0..ls {
                        sys[(row, r * ks + pp)] += tll[(r, q)];
                    }
                }
            }
            let vec_rhs = DMatrix::from_column_slice(m, 1, rhs.as_slice());
            let sol = sys.lu().solve(&vec_rhs).ok_or_else(|| {
                Error::SolverDivergence("Lyapunov operator is singular".into())
            })?;
            y.view_mut((k0, l0), (ks, ls))
                .copy_from(&DMatrix::from_column_slice(ks, ls, sol.as_slice()));
        }
    }
    let x = &u * y * u.transpose();
    Ok((&x + x.transpose()) * 0.5)
}

pub(crate) fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| Error::EigenFailure("Schur iteration did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Largest real part among the eigenvalues of `a`.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(a)?
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

pub(crate) fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| Error::EigenFailure("symmetric eigensolver did not converge".into()))?;
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    #[test]
    fn sign_of_diagonal() {
        let s = sign_function(&dmatrix![-3.0, 0.0; 0.0, 0.5]).unwrap();
        assert_relative_eq!(s, dmatrix![-1.0, 0.0; 0.0, 1.0], epsilon = 1e-12);
    }

    #[test]
    fn lyapunov_residual() {
        let a = dmatrix![-1.0, 2.0, 0.0; -3.0, -0.5, 1.0; 0.0, 0.2, -2.0];
        let c = dmatrix![2.0, 0.5, 0.0; 0.5, 1.0, 0.1; 0.0, 0.1, 3.0];
        let x = lyapunov(&a, &c).unwrap();
        let r = a.transpose() * &x + &x * &a + &c;
        assert!(r.norm() < 1e-12, "{}", r.norm());
    }

    #[test]
    fn abscissa_of_oscillator() {
        let a = dmatrix![0.0, 1.0; -4.0, -0.12];
        assert_relative_eq!(spectral_abscissa(&a).unwrap(), -0.06, epsilon = 1e-12);
    }
}
