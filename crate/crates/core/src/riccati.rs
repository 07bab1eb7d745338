//! Continuous algebraic Riccati equation and the LQR state-feedback gain.
//!
//! The weighted index uses a single ratio knob `rho`:
//! `Q = rho * Qbar`, `R = Rbar`, so only the state-to-control weight ratio
//! enters the gain. The solver builds the stable invariant subspace of the
//! Hamiltonian with the matrix sign function, then applies Newton
//! corrections until the residual stops improving.

use log::warn;
use nalgebra::{dmatrix, Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::plant::LinearPlant;

const STABILIZABILITY_TOL: f64 = 1e-9;
const RESIDUAL_TOL: f64 = 1e-8;
const NEWTON_STEPS: usize = 12;
const SISO_AGREEMENT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LqrWeights {
    rho: f64,
    q_bar: Option<DMatrix<f64>>,
    r_bar: Option<DMatrix<f64>>,
}

impl LqrWeights {
    /// Identity `Qbar` and `Rbar`.
    pub fn new(rho: f64) -> Result<Self> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "rho must be positive and finite, got {rho}"
            )));
        }
        Ok(Self {
            rho,
            q_bar: None,
            r_bar: None,
        })
    }

    pub fn with_q_bar(mut self, q_bar: DMatrix<f64>) -> Result<Self> {
        if !q_bar.is_square() || (&q_bar - q_bar.transpose()).norm() > 1e-12 * q_bar.norm() {
            return Err(Error::InvalidArgument("Qbar must be square and symmetric".into()));
        }
        let min = linalg::min_symmetric_eigenvalue(&q_bar)?;
        if min < -1e-12 * q_bar.norm().max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "Qbar must be positive semidefinite (min eigenvalue {min:.3e})"
            )));
        }
        self.q_bar = Some(q_bar);
        Ok(self)
    }

    pub fn with_r_bar(mut self, r_bar: DMatrix<f64>) -> Result<Self> {
        if !r_bar.is_square() || (&r_bar - r_bar.transpose()).norm() > 1e-12 * r_bar.norm() {
            return Err(Error::InvalidArgument("Rbar must be square and symmetric".into()));
        }
        if r_bar.clone().cholesky().is_none() {
            return Err(Error::InvalidArgument("Rbar must be positive definite".into()));
        }
        self.r_bar = Some(r_bar);
        Ok(self)
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    fn q_eff(&self, n: usize) -> Result<DMatrix<f64>> {
        match &self.q_bar {
            Some(q) if q.nrows() != n => Err(Error::DimensionMismatch(format!(
                "Qbar is {}x{}, plant has {n} states",
                q.nrows(),
                q.ncols()
            ))),
            Some(q) => Ok(q * self.rho),
            None => Ok(DMatrix::identity(n, n) * self.rho),
        }
    }

    fn r_eff(&self, p: usize) -> Result<DMatrix<f64>> {
        match &self.r_bar {
            Some(r) if r.nrows() != p => Err(Error::DimensionMismatch(format!(
                "Rbar is {}x{}, plant has {p} inputs",
                r.nrows(),
                r.ncols()
            ))),
            Some(r) => Ok(r.clone()),
            None => Ok(DMatrix::identity(p, p)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    /// Stabilizing solution (symmetric, PSD).
    pub p: DMatrix<f64>,
    /// Gain `G = R^-1 B^T P`; the control law is `f = -G x`.
    pub gain: DMatrix<f64>,
    /// Frobenius norm of `A^T P + P A - P B R^-1 B^T P + Q`.
    pub residual_norm: f64,
}

pub fn solve_care(plant: &LinearPlant, weights: &LqrWeights) -> Result<RiccatiSolution> {
    let q = weights.q_eff(plant.n_states())?;
    let r = weights.r_eff(plant.n_inputs())?;
    solve_care_matrices(plant.a(), plant.b(), &q, &r)
}

/// Solves `A^T P + P A - P B R^-1 B^T P + Q = 0` for the stabilizing `P`.
pub fn solve_care_matrices(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<RiccatiSolution> {
    let n = a.nrows();
    let p = b.ncols();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (p, p) {
        return Err(Error::DimensionMismatch(
            "A, B, Q and R have inconsistent shapes".into(),
        ));
    }
    check_stabilizable(a, b)?;

    let r_chol = r
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("R must be positive definite".into()))?;
    let rinv_bt = r_chol.solve(&b.transpose());
    let s = b * &rinv_bt;

    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&s));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    // Stable subspace of H is the kernel of sign(H) + I, spanned by [I; P].
    let w = linalg::sign_function(&h)?;
    let mut lhs = DMatrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n))
        .copy_from(&(w.view((n, n), (n, n)) + DMatrix::identity(n, n)));
    let mut rhs = DMatrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n))
        .copy_from(&(-(w.view((0, 0), (n, n)) + DMatrix::identity(n, n))));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w.view((n, 0), (n, n))));
    let mut sol = lhs
        .svd(true, true)
        .solve(&rhs, f64::EPSILON)
        .map_err(|e| Error::SolverDivergence(e.to_string()))?;
    sol = (&sol + sol.transpose()) * 0.5;

    let residual = |p: &DMatrix<f64>| a.transpose() * p + p * a - p * &s * p + q;
    let mut best_res = residual(&sol).norm();
    for _ in 0..NEWTON_STEPS {
        if !best_res.is_finite() || best_res == 0.0 {
            break;
        }
        let closed = a - &s * &sol;
        let delta = match linalg::lyapunov(&closed, &residual(&sol)) {
            Ok(d) => d,
            Err(_) => break,
        };
        let mut next = &sol + delta;
        next = (&next + next.transpose()) * 0.5;
        let res = residual(&next).norm();
        if res < best_res {
            sol = next;
            best_res = res;
        } else {
            break;
        }
    }

    if !best_res.is_finite() {
        return Err(Error::SolverDivergence("non-finite Riccati residual".into()));
    }
    let scale = 1.0
        + (a.transpose() * &sol).norm()
        + (&sol * &s * &sol).norm()
        + q.norm();
    if best_res > RESIDUAL_TOL * scale {
        return Err(Error::SolverDivergence(format!(
            "Riccati residual {best_res:.3e} did not reach tolerance"
        )));
    }

    let min_eig = linalg::min_symmetric_eigenvalue(&sol)?;
    if min_eig < -1e-8 * sol.norm().max(1.0) {
        return Err(Error::IndefiniteResult(min_eig));
    }

    let gain = &rinv_bt * &sol;
    let abscissa = linalg::spectral_abscissa(&(a - b * &gain))?;
    if abscissa >= 0.0 {
        return Err(Error::SolverDivergence(format!(
            "closed loop is not Hurwitz (max real part {abscissa:.3e})"
        )));
    }

    Ok(RiccatiSolution {
        p: sol,
        gain,
        residual_norm: best_res,
    })
}

/// PBH test on every eigenvalue with nonnegative real part.
fn check_stabilizable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    let n = a.nrows();
    let p = b.ncols();
    for lambda in linalg::eigenvalues(a)? {
        if lambda.re < 0.0 {
            continue;
        }
        let mut pbh = DMatrix::<Complex<f64>>::zeros(n, n + p);
        for i in 0..n {
            for j in 0..n {
                pbh[(i, j)] = Complex::new(a[(i, j)], 0.0);
            }
            pbh[(i, i)] -= lambda;
            for j in 0..p {
                pbh[(i, n + j)] = Complex::new(b[(i, j)], 0.0);
            }
        }
        let sv = pbh.singular_values();
        let max = sv.iter().copied().fold(0.0, f64::max);
        let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
        if min < STABILIZABILITY_TOL * max.max(1.0) {
            return Err(Error::NotStabilizable {
                re: lambda.re,
                im: lambda.im,
            });
        }
    }
    Ok(())
}

/// Unsaturated control `f = -G x`.
pub fn feedback(sol: &RiccatiSolution, x: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != sol.gain.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "state has length {}, gain expects {}",
            x.len(),
            sol.gain.ncols()
        )));
    }
    Ok(-(&sol.gain * x))
}

/// Gains for the single-mode plant `x1' = x2, x2' = -w^2 x1 - 2 zeta w x2 + c f`
/// with index weights `delta1, delta2` on the states and `gamma` on the control.
#[derive(Debug, Clone, PartialEq)]
pub struct SisoGain {
    /// Gain `G` (with `f = -G x`) from the printed closed form, `None` when a
    /// radicand in that form is negative.
    pub closed_form: Option<[f64; 2]>,
    /// Gain from [`solve_care_matrices`] on the equivalent 2x2 problem.
    pub riccati: [f64; 2],
    /// Set when the closed form is missing or differs from the Riccati gain
    /// by more than 1e-6 relative.
    pub discrepancy: bool,
}

pub fn siso_analytic_gain(
    omega: f64,
    zeta: f64,
    c: f64,
    delta1: f64,
    delta2: f64,
    gamma: f64,
) -> Result<SisoGain> {
    if c == 0.0 || !c.is_finite() {
        return Err(Error::InvalidArgument("input coefficient c must be nonzero".into()));
    }
    if !(omega > 0.0 && zeta >= 0.0 && delta1 > 0.0 && delta2 > 0.0 && gamma > 0.0) {
        return Err(Error::InvalidArgument(
            "omega, delta1, delta2, gamma must be positive and zeta nonnegative".into(),
        ));
    }

    let c0 = c * c / gamma;
    let w2 = omega * omega;
    let c12 = -(w2 + (w2 * w2 + c0 * delta1).sqrt()) / (2.0 * c0);
    let zw = zeta * omega;
    let c2 = (-zw + (zw * zw + (0.25 * delta2 + c12) * c0).sqrt()) / c0;
    let closed_form = if c12.is_finite() && c2.is_finite() {
        let k = 2.0 * c / gamma;
        Some([-k * c12, -k * c2])
    } else {
        None
    };

    let a = dmatrix![0.0, 1.0; -w2, -2.0 * zw];
    let b = dmatrix![0.0; c];
    let q = dmatrix![delta1, 0.0; 0.0, delta2];
    let r = dmatrix![gamma];
    let sol = solve_care_matrices(&a, &b, &q, &r)?;
    let riccati = [sol.gain[(0, 0)], sol.gain[(0, 1)]];

    let discrepancy = match closed_form {
        None => true,
        Some(g) => {
            let scale = riccati[0].abs().max(riccati[1].abs()).max(f64::MIN_POSITIVE);
            let diff = (g[0] - riccati[0]).abs().max((g[1] - riccati[1]).abs());
            diff > SISO_AGREEMENT * scale
        }
    };
    if discrepancy {
        warn!(
            "closed-form SISO gain {:?} disagrees with Riccati gain {:?}",
            closed_form, riccati
        );
    }
    Ok(SisoGain {
        closed_form,
        riccati,
        discrepancy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    fn scalar(a: f64) -> RiccatiSolution {
        solve_care_matrices(&dmatrix![a], &dmatrix![1.0], &dmatrix![1.0], &dmatrix![1.0]).unwrap()
    }

    #[test]
    fn scalar_integrator() {
        let sol = scalar(0.0);
        assert_relative_eq!(sol.p[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(sol.gain[(0, 0)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn scalar_stable() {
        // -2P - P^2 + 1 = 0
        let root = 2f64.sqrt() - 1.0;
        let sol = scalar(-1.0);
        assert_relative_eq!(sol.p[(0, 0)], root, epsilon = 1e-12);
        let f = feedback(&sol, &dvector![1.0]).unwrap();
        assert_relative_eq!(f[0], -root, epsilon = 1e-12);
        assert_relative_eq!(f[0], -0.41421, epsilon = 1e-5);
    }

    #[test]
    fn feedback_is_linear() {
        let sol = RiccatiSolution {
            p: DMatrix::zeros(2, 2),
            gain: dmatrix![1.0, 2.0],
            residual_norm: 0.0,
        };
        assert_eq!(feedback(&sol, &dvector![1.0, 1.0]).unwrap(), dvector![-3.0]);
        assert_eq!(feedback(&sol, &dvector![0.0, 0.0]).unwrap(), dvector![0.0]);
        assert!(matches!(
            feedback(&sol, &dvector![1.0]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn uncontrollable_unstable_mode_is_rejected() {
        let a = dmatrix![1.0, 0.0; 0.0, -1.0];
        let b = dmatrix![0.0; 1.0];
        let err = solve_care_matrices(&a, &b, &DMatrix::identity(2, 2), &dmatrix![1.0]);
        assert!(matches!(err, Err(Error::NotStabilizable { .. })));
    }

    #[test]
    fn uncontrollable_stable_mode_is_fine() {
        let a = dmatrix![-1.0, 0.0; 0.0, 0.5];
        let b = dmatrix![0.0; 1.0];
        let sol = solve_care_matrices(&a, &b, &DMatrix::identity(2, 2), &dmatrix![1.0]).unwrap();
        assert!(sol.residual_norm < 1e-10);
    }

    #[test]
    fn weights_validation() {
        assert!(LqrWeights::new(0.0).is_err());
        assert!(LqrWeights::new(1.0)
            .unwrap()
            .with_q_bar(dmatrix![1.0, 0.0; 0.0, -1.0])
            .is_err());
        assert!(LqrWeights::new(1.0)
            .unwrap()
            .with_r_bar(dmatrix![0.0])
            .is_err());
    }

    #[test]
    fn siso_closed_form_rejects_zero_input() {
        assert!(matches!(
            siso_analytic_gain(2.0, 0.03, 0.0, 1.0, 1.0, 1.0),
            Err(Error::InvalidArgument(_))
        ));
    }
}
