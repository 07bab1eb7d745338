//! Closed-form time-optimal feedback for second-order, single-input plants
//! with real, distinct, nonzero eigenvalues.
//!
//! In canonical coordinates `dy_i/dt = lambda_i y_i + b_i u`, `|u| <= xi`.
//! The switching relation is evaluated in normalized coordinates
//! `w_i = y_i / (b_i xi)`, where the dynamics read `dw_i/dt = lambda_i w_i + v`
//! with `|v| <= 1`.

use nalgebra::{DMatrix, Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::mintime::sign;
use crate::plant::LinearPlant;

/// Half-width of the relay hysteresis band on the switching function.
pub const HYSTERESIS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalSystem2 {
    lambda: [f64; 2],
    b: [f64; 2],
    xi: f64,
    e: Matrix2<f64>,
    e_inv: Matrix2<f64>,
    condition: f64,
}

impl CanonicalSystem2 {
    /// A system already in canonical form (`E = I`).
    pub fn new(lambda1: f64, lambda2: f64, b1: f64, b2: f64, xi: f64) -> Result<Self> {
        check_eigenvalues(lambda1, lambda2)?;
        if !(lambda1 < lambda2) {
            return Err(Error::InvalidArgument(format!(
                "eigenvalues must be ordered, got {lambda1} >= {lambda2}"
            )));
        }
        for (i, b) in [b1, b2].into_iter().enumerate() {
            if b == 0.0 || !b.is_finite() {
                return Err(Error::NotControllable(i));
            }
        }
        if !(xi > 0.0 && xi.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "control bound must be positive and finite, got {xi}"
            )));
        }
        Ok(Self {
            lambda: [lambda1, lambda2],
            b: [b1, b2],
            xi,
            e: Matrix2::identity(),
            e_inv: Matrix2::identity(),
            condition: 1.0,
        })
    }

    pub fn lambda(&self) -> [f64; 2] {
        self.lambda
    }

    pub fn b(&self) -> [f64; 2] {
        self.b
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    /// `y = E x`.
    pub fn transform(&self) -> &Matrix2<f64> {
        &self.e
    }

    pub fn inverse_transform(&self) -> &Matrix2<f64> {
        &self.e_inv
    }

    /// 2-norm condition number of `E`.
    pub fn condition_number(&self) -> f64 {
        self.condition
    }

    pub fn to_canonical(&self, x: &[f64; 2]) -> [f64; 2] {
        let y = self.e * Vector2::new(x[0], x[1]);
        [y[0], y[1]]
    }

    pub fn to_physical(&self, y: &[f64; 2]) -> [f64; 2] {
        let x = self.e_inv * Vector2::new(y[0], y[1]);
        [x[0], x[1]]
    }

    fn normalize(&self, y: &[f64; 2]) -> [f64; 2] {
        [
            y[0] / (self.b[0] * self.xi),
            y[1] / (self.b[1] * self.xi),
        ]
    }
}

fn check_eigenvalues(l1: f64, l2: f64) -> Result<()> {
    let scale = l1.abs().max(l2.abs()).max(f64::MIN_POSITIVE);
    if l1.abs() <= 1e-12 * scale.max(1.0) || l2.abs() <= 1e-12 * scale.max(1.0) {
        return Err(Error::ZeroEigenvalue);
    }
    if (l1 - l2).abs() <= 1e-9 * scale {
        return Err(Error::RepeatedEigenvalues(0.5 * (l1 + l2)));
    }
    Ok(())
}

/// Unit row `e` with `e (A - lambda I) = 0`.
fn left_eigenvector(a: &Matrix2<f64>, lambda: f64) -> Vector2<f64> {
    // Rows of A^T - lambda I; any null vector is orthogonal to both.
    let m = a.transpose() - Matrix2::identity() * lambda;
    let c1 = Vector2::new(-m[(0, 1)], m[(0, 0)]);
    let c2 = Vector2::new(-m[(1, 1)], m[(1, 0)]);
    let v = if c1.norm() >= c2.norm() { c1 } else { c2 };
    if v.norm() == 0.0 {
        // A - lambda I vanishes; only reachable for repeated eigenvalues.
        return Vector2::new(1.0, 0.0);
    }
    v / v.norm()
}

/// Diagonalizes a 2-state, single-input plant into canonical form.
///
/// Rows of `E` are unit left eigenvectors of `A`, signed so that `b_i > 0`.
/// The control bound `xi` is the plant's force bound.
pub fn canonicalize(plant: &LinearPlant) -> Result<CanonicalSystem2> {
    if plant.n_states() != 2 || plant.n_inputs() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "canonical form needs 2 states and 1 input, plant has {} and {}",
            plant.n_states(),
            plant.n_inputs()
        )));
    }
    let a = Matrix2::from_fn(|i, j| plant.a()[(i, j)]);
    let bvec = Vector2::new(plant.b()[(0, 0)], plant.b()[(1, 0)]);
    let xi = plant.force_bounds()[0];
    if !xi.is_finite() {
        return Err(Error::InvalidArgument(
            "canonical synthesis needs a finite force bound".into(),
        ));
    }

    let tr = a.trace();
    let det = a.determinant();
    let disc = tr * tr - 4.0 * det;
    let scale = a.norm().max(f64::MIN_POSITIVE);
    if disc < -1e-14 * scale * scale {
        return Err(Error::ComplexEigenvalues {
            re: 0.5 * tr,
            im: 0.5 * (-disc).sqrt(),
        });
    }
    let root = disc.max(0.0).sqrt();
    // Roots of l^2 - tr l + det without cancellation.
    let q = 0.5 * (tr + root.copysign(tr));
    let (mut l1, mut l2) = if q != 0.0 {
        (q, det / q)
    } else {
        (-0.5 * root, 0.5 * root)
    };
    if l1 > l2 {
        std::mem::swap(&mut l1, &mut l2);
    }
    if root <= 1e-9 * scale {
        return Err(Error::RepeatedEigenvalues(0.5 * tr));
    }
    check_eigenvalues(l1, l2)?;

    let mut e = Matrix2::zeros();
    let mut b = [0.0; 2];
    for (i, &l) in [l1, l2].iter().enumerate() {
        let mut row = left_eigenvector(&a, l);
        let mut bi = row.dot(&bvec);
        if bi.abs() <= 1e-12 * bvec.norm().max(f64::MIN_POSITIVE) {
            return Err(Error::NotControllable(i));
        }
        if bi < 0.0 {
            row = -row;
            bi = -bi;
        }
        e.set_row(i, &row.transpose());
        b[i] = bi;
    }
    let e_inv = e
        .try_inverse()
        .ok_or_else(|| Error::EigenFailure("eigenvector matrix is singular".into()))?;
    let sv = e.singular_values();
    let condition = sv.max() / sv.min();

    let mut sys = CanonicalSystem2::new(l1, l2, b[0], b[1], xi)?;
    sys.e = e;
    sys.e_inv = e_inv;
    sys.condition = condition;
    Ok(sys)
}

fn switching_normalized(lambda: [f64; 2], w: [f64; 2]) -> Result<f64> {
    let [l1, l2] = lambda;
    let sg = sign(w[0]);
    let base = 1.0 - l1 * w[0] * sg;
    if base < 0.0 {
        return Err(Error::DomainError(format!(
            "1 - lambda1 |w1| = {base:.6e} is negative"
        )));
    }
    Ok(w[1] - sg / l2 * (1.0 - base.powf(l2 / l1)))
}

/// Switching function in normalized coordinates; zero on the curve of
/// trajectories that reach the origin with a single bang arc.
pub fn switching_function(sys: &CanonicalSystem2, y: &[f64; 2]) -> Result<f64> {
    switching_normalized(sys.lambda, sys.normalize(y))
}

fn check_region(sys: &CanonicalSystem2, y: &[f64; 2]) -> Result<()> {
    if instability_region(sys).contains(y) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::OutsideStabilityRegion(*y));
    }
    Ok(())
}

/// Stateless time-optimal feedback `u = -xi sign(s(y))`, with `u = +xi` on the curve.
pub fn feedback2d(sys: &CanonicalSystem2, y: &[f64; 2]) -> Result<f64> {
    check_region(sys, y)?;
    let s = switching_function(sys, y)?;
    Ok(if s == 0.0 { sys.xi } else { -sys.xi * sign(s) })
}

/// Exact solution of `dy_i/dt = lambda_i y_i + b_i u` after time `t` with constant `u`.
pub fn trajectory_arc(sys: &CanonicalSystem2, y_start: &[f64; 2], u: f64, t: f64) -> [f64; 2] {
    let arc = |i: usize| {
        let eq = sys.b[i] * u / sys.lambda[i];
        (y_start[i] + eq) * (sys.lambda[i] * t).exp() - eq
    };
    [arc(0), arc(1)]
}

/// Canonical states from which no admissible control returns to the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRegion {
    /// `(mode, threshold)`: mode `i` is unrecoverable when `|y_i| > threshold`.
    pub bands: Vec<(usize, f64)>,
}

impl StabilityRegion {
    /// True when `y` lies in an unrecoverable band.
    pub fn contains(&self, y: &[f64; 2]) -> bool {
        self.bands.iter().any(|&(i, t)| y[i].abs() > t)
    }

    pub fn is_recoverable(&self, y: &[f64; 2]) -> bool {
        !self.contains(y)
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }
}

/// Unrecoverable bands `|y_i| > |b_i| xi / lambda_i` for each unstable mode.
pub fn instability_region(sys: &CanonicalSystem2) -> StabilityRegion {
    StabilityRegion {
        bands: (0..2)
            .filter(|&i| sys.lambda[i] > 0.0)
            .map(|i| (i, sys.b[i].abs() * sys.xi / sys.lambda[i]))
            .collect(),
    }
}

/// Closed-loop synthesis with relay hysteresis, acting on physical states.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis2D {
    pub system: CanonicalSystem2,
    pub region: StabilityRegion,
}

impl Synthesis2D {
    pub fn new(system: CanonicalSystem2) -> Self {
        let region = instability_region(&system);
        Self { system, region }
    }

    pub fn from_plant(plant: &LinearPlant) -> Result<Self> {
        Ok(Self::new(canonicalize(plant)?))
    }

    /// Control for physical state `x`. `memory` carries the previous output;
    /// while `|s| <= HYSTERESIS` the previous output is kept.
    pub fn control(&self, x: &[f64; 2], memory: &mut Option<f64>) -> Result<f64> {
        let y = self.system.to_canonical(x);
        check_region(&self.system, &y)?;
        let s = switching_function(&self.system, &y)?;
        let u = match *memory {
            Some(prev) if s.abs() <= HYSTERESIS => prev,
            _ if s == 0.0 => self.system.xi,
            _ => -self.system.xi * sign(s),
        };
        *memory = Some(u);
        Ok(u)
    }
}

/// Points on the switching curve in canonical coordinates, both branches,
/// ordered from the `u = +xi` branch end through the origin to the `u = -xi` end.
///
/// Each branch is the backward-time arc into the origin for `sigma` in
/// `[0, sigma_max]`, `sigma_max = 3 / min |lambda_i|`.
pub fn switching_curve(sys: &CanonicalSystem2, points_per_branch: usize) -> Vec<[f64; 2]> {
    let n = points_per_branch.max(2);
    let sigma_max = 3.0 / sys.lambda[0].abs().min(sys.lambda[1].abs());
    let point = |v: f64, sigma: f64| {
        let w = |i: usize| v / sys.lambda[i] * ((-sys.lambda[i] * sigma).exp() - 1.0);
        [
            w(0) * sys.b[0] * sys.xi,
            w(1) * sys.b[1] * sys.xi,
        ]
    };
    let mut out = Vec::with_capacity(2 * n - 1);
    for k in (1..n).rev() {
        out.push(point(1.0, sigma_max * k as f64 / (n - 1) as f64));
    }
    for k in 0..n {
        out.push(point(-1.0, sigma_max * k as f64 / (n - 1) as f64));
    }
    out
}

/// `y1,y2` CSV of curve points.
pub fn curve_csv(points: &[[f64; 2]]) -> String {
    let mut s = String::from("y1,y2\n");
    for p in points {
        s.push_str(&format!("{:.16e},{:.16e}\n", p[0], p[1]));
    }
    s
}

/// `EA - diag(lambda) E` in Frobenius norm, for checking a canonicalization.
pub fn canonical_residual(plant: &LinearPlant, sys: &CanonicalSystem2) -> f64 {
    let a = Matrix2::from_fn(|i, j| plant.a()[(i, j)]);
    let d = Matrix2::from_diagonal(&Vector2::new(sys.lambda[0], sys.lambda[1]));
    (sys.e * a - d * sys.e).norm()
}

/// Canonical input vector `E B`, for checking a canonicalization.
pub fn canonical_input(plant: &LinearPlant, sys: &CanonicalSystem2) -> [f64; 2] {
    let b: DMatrix<f64> = plant.b().clone();
    let eb = sys.e * Vector2::new(b[(0, 0)], b[(1, 0)]);
    [eb[0], eb[1]]
}
