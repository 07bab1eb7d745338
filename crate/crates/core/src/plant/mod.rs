//! Plant representations.
//!
//! A [`LinearPlant`] is the first-order system `dx/dt = A x + B f` with
//! per-actuator force bounds. Structural models `M u'' + E u' + K u = D f`
//! are reduced to a `LinearPlant` through a mass-normalized modal basis:
//! the state is `[eta; eta']` for the kept modes, `A = [[0, I], [-w^2, -2 zeta w]]`
//! and `B = [[0], [Phi^T D]]`.

mod file;

pub use file::{parse_plant_source, read_plant_source, PlantSource};

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-10;
const OFF_DIAGONAL_DAMPING_WARN: f64 = 1e-6;

/// State-space plant with actuator bounds and an initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPlant {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    force_bounds: DVector<f64>,
    x0: DVector<f64>,
}

impl LinearPlant {
    /// Bounds may be `f64::INFINITY` (unsaturated actuator) but must be positive.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        force_bounds: DVector<f64>,
        x0: DVector<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "A must be square and nonempty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "B must be {n}xp with p >= 1, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        if force_bounds.len() != b.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} force bounds for {} inputs",
                force_bounds.len(),
                b.ncols()
            )));
        }
        if x0.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "x0 has length {}, expected {n}",
                x0.len()
            )));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("A and B must be finite".into()));
        }
        if let Some(i) = force_bounds.iter().position(|&f| f.is_nan() || f <= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "force bound {} must be positive, got {}",
                i + 1,
                force_bounds[i]
            )));
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("x0 must be finite".into()));
        }
        Ok(Self {
            a,
            b,
            force_bounds,
            x0,
        })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn force_bounds(&self) -> &DVector<f64> {
        &self.force_bounds
    }

    pub fn x0(&self) -> &DVector<f64> {
        &self.x0
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn with_force_bounds(&self, force_bounds: DVector<f64>) -> Result<Self> {
        Self::new(self.a.clone(), self.b.clone(), force_bounds, self.x0.clone())
    }

    pub fn with_initial_state(&self, x0: DVector<f64>) -> Result<Self> {
        Self::new(self.a.clone(), self.b.clone(), self.force_bounds.clone(), x0)
    }

    /// `A x + B f`
    pub fn rhs(&self, x: &DVector<f64>, f: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * f
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Damping {
    /// Physical damping matrix, projected onto the modal basis.
    Matrix(DMatrix<f64>),
    /// Per-mode damping ratios, lowest mode first.
    Modal(DVector<f64>),
}

/// Second-order structural model `M u'' + E u' + K u = D f`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralModel {
    mass: DMatrix<f64>,
    stiffness: DMatrix<f64>,
    damping: Damping,
    load: DMatrix<f64>,
    n_modes: usize,
}

impl StructuralModel {
    pub fn new(
        mass: DMatrix<f64>,
        stiffness: DMatrix<f64>,
        damping: Damping,
        load: DMatrix<f64>,
        n_modes: usize,
    ) -> Result<Self> {
        let n = mass.nrows();
        let square = |m: &DMatrix<f64>, name: &str| {
            if m.nrows() != n || m.ncols() != n {
                Err(Error::DimensionMismatch(format!(
                    "`{name}` is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )))
            } else {
                Ok(())
            }
        };
        if n == 0 {
            return Err(Error::DimensionMismatch("model has no degrees of freedom".into()));
        }
        square(&mass, "M")?;
        square(&stiffness, "K")?;
        if load.nrows() != n || load.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "`D` is {}x{}, expected {n}xp",
                load.nrows(),
                load.ncols()
            )));
        }
        if n_modes == 0 || n_modes > n {
            return Err(Error::InvalidArgument(format!(
                "n_modes must lie in 1..={n}, got {n_modes}"
            )));
        }
        match &damping {
            Damping::Matrix(e) => square(e, "E")?,
            Damping::Modal(zeta) => {
                if zeta.len() != n_modes && zeta.len() != n {
                    return Err(Error::DimensionMismatch(format!(
                        "`zeta` has {} entries, expected {n_modes} or {n}",
                        zeta.len()
                    )));
                }
                if zeta.iter().any(|z| !z.is_finite() || *z < 0.0) {
                    return Err(Error::InvalidArgument(
                        "damping ratios must be finite and nonnegative".into(),
                    ));
                }
            }
        }
        let all_finite = mass
            .iter()
            .chain(stiffness.iter())
            .chain(load.iter())
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidArgument("model matrices must be finite".into()));
        }
        Ok(Self {
            mass,
            stiffness,
            damping,
            load,
            n_modes,
        })
    }

    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }

    pub fn stiffness(&self) -> &DMatrix<f64> {
        &self.stiffness
    }

    pub fn damping(&self) -> &Damping {
        &self.damping
    }

    pub fn load(&self) -> &DMatrix<f64> {
        &self.load
    }

    pub fn n_dof(&self) -> usize {
        self.mass.nrows()
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn n_inputs(&self) -> usize {
        self.load.ncols()
    }
}

/// Mass-normalized modal basis of the kept (lowest) modes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalData {
    pub frequencies: DVector<f64>,
    pub mode_shapes: DMatrix<f64>,
    pub damping_ratios: DVector<f64>,
}

fn check_symmetric(m: &DMatrix<f64>, name: &'static str) -> Result<()> {
    let scale = m.norm().max(f64::MIN_POSITIVE);
    if (m - m.transpose()).norm() > SYMMETRY_TOL * scale {
        return Err(Error::NonSymmetric(name));
    }
    Ok(())
}

/// Solves `K phi = w^2 M phi` through the Cholesky reduction `M = L L^T`.
///
/// Mode shapes are mass-normalized and signed so that the largest-magnitude
/// entry of each column is positive.
pub fn modal_decompose(model: &StructuralModel) -> Result<ModalData> {
    check_symmetric(&model.mass, "M")?;
    check_symmetric(&model.stiffness, "K")?;
    if let Damping::Matrix(e) = &model.damping {
        check_symmetric(e, "E")?;
    }
    let l = model
        .mass
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("M"))?
        .unpack();
    if model.stiffness.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite("K"));
    }

    // C = L^-1 K L^-T
    let linv_k = l
        .solve_lower_triangular(&model.stiffness)
        .ok_or_else(|| Error::EigenFailure("singular Cholesky factor".into()))?;
    let mut c = l
        .solve_lower_triangular(&linv_k.transpose())
        .ok_or_else(|| Error::EigenFailure("singular Cholesky factor".into()))?;
    c = (&c + c.transpose()) * 0.5;

    let eig = SymmetricEigen::try_new(c, f64::EPSILON, 100_000)
        .ok_or_else(|| Error::EigenFailure("symmetric eigensolver did not converge".into()))?;

    let n = model.n_dof();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let kept = &order[..model.n_modes];
    let mut omega2 = DVector::zeros(kept.len());
    let mut v = DMatrix::zeros(n, kept.len());
    for (col, &idx) in kept.iter().enumerate() {
        omega2[col] = eig.eigenvalues[idx];
        v.set_column(col, &eig.eigenvectors.column(idx));
    }
    if omega2.iter().any(|&w2| w2 <= 0.0) {
        return Err(Error::NotPositiveDefinite("K"));
    }

    // Phi = L^-T V
    let mut phi = l
        .tr_solve_lower_triangular(&v)
        .ok_or_else(|| Error::EigenFailure("singular Cholesky factor".into()))?;
    for mut col in phi.column_iter_mut() {
        let mut pivot = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
    }

    let frequencies = omega2.map(f64::sqrt);
    let damping_ratios = match &model.damping {
        Damping::Modal(zeta) => zeta.rows(0, model.n_modes).into_owned(),
        Damping::Matrix(e) => projected_damping(e, &phi, &frequencies)?,
    };

    Ok(ModalData {
        frequencies,
        mode_shapes: phi,
        damping_ratios,
    })
}

fn projected_damping(
    e: &DMatrix<f64>,
    phi: &DMatrix<f64>,
    frequencies: &DVector<f64>,
) -> Result<DVector<f64>> {
    let modal = phi.transpose() * e * phi;
    let total = modal.norm();
    let diag = modal.diagonal();
    let off = (modal.norm_squared() - diag.norm_squared()).max(0.0).sqrt();
    if total > 0.0 && off > OFF_DIAGONAL_DAMPING_WARN * total {
        warn!(
            "damping matrix is not modal: off-diagonal fraction {:.3e} discarded",
            off / total
        );
    }
    let zeta = DVector::from_fn(diag.len(), |i, _| diag[i] / (2.0 * frequencies[i]));
    if zeta.iter().any(|z| *z < 0.0) {
        return Err(Error::InvalidArgument(
            "projected modal damping is negative".into(),
        ));
    }
    Ok(zeta)
}

/// Initial condition for the reduced plant.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    /// Physical displacement (and optional velocity), projected with `Phi^T M`.
    Physical {
        displacement: DVector<f64>,
        velocity: Option<DVector<f64>>,
    },
    /// Modal state `[eta; eta']` of length `2 n_modes`.
    Modal(DVector<f64>),
}

pub fn to_state_space(
    model: &StructuralModel,
    modal: &ModalData,
    initial: &InitialState,
    force_bounds: DVector<f64>,
) -> Result<LinearPlant> {
    let n = modal.frequencies.len();
    if modal.mode_shapes.nrows() != model.n_dof()
        || modal.mode_shapes.ncols() != n
        || modal.damping_ratios.len() != n
    {
        return Err(Error::DimensionMismatch(
            "modal data does not belong to this model".into(),
        ));
    }
    let w = &modal.frequencies;
    let zeta = &modal.damping_ratios;
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        a[(i, n + i)] = 1.0;
        a[(n + i, i)] = -w[i] * w[i];
        a[(n + i, n + i)] = -2.0 * zeta[i] * w[i];
    }
    let p = model.n_inputs();
    let mut b = DMatrix::zeros(2 * n, p);
    b.view_mut((n, 0), (n, p))
        .copy_from(&(modal.mode_shapes.transpose() * &model.load));

    let x0 = match initial {
        InitialState::Modal(x0) => x0.clone(),
        InitialState::Physical {
            displacement,
            velocity,
        } => {
            let projector = modal.mode_shapes.transpose() * &model.mass;
            if displacement.len() != model.n_dof() {
                return Err(Error::DimensionMismatch(format!(
                    "initial displacement has length {}, expected {}",
                    displacement.len(),
                    model.n_dof()
                )));
            }
            let mut x0 = DVector::zeros(2 * n);
            x0.rows_mut(0, n).copy_from(&(&projector * displacement));
            if let Some(v) = velocity {
                if v.len() != model.n_dof() {
                    return Err(Error::DimensionMismatch(format!(
                        "initial velocity has length {}, expected {}",
                        v.len(),
                        model.n_dof()
                    )));
                }
                x0.rows_mut(n, n).copy_from(&(&projector * v));
            }
            x0
        }
    };
    LinearPlant::new(a, b, force_bounds, x0)
}

/// Sensor layout for [`output_matrix`].
#[derive(Debug, Clone, PartialEq)]
pub enum Sensors {
    /// `count` sensors collocated with the actuators, so `C = B^T`.
    Collocated { count: usize },
    Custom(DMatrix<f64>),
}

pub fn output_matrix(plant: &LinearPlant, sensors: &Sensors) -> Result<DMatrix<f64>> {
    match sensors {
        Sensors::Collocated { count } => {
            if *count != plant.n_inputs() {
                return Err(Error::DimensionMismatch(format!(
                    "{count} collocated sensors for {} actuators",
                    plant.n_inputs()
                )));
            }
            Ok(plant.b().transpose())
        }
        Sensors::Custom(c) => {
            if c.ncols() != plant.n_states() || c.nrows() == 0 {
                return Err(Error::DimensionMismatch(format!(
                    "output matrix is {}x{}, expected qx{}",
                    c.nrows(),
                    c.ncols(),
                    plant.n_states()
                )));
            }
            Ok(c.clone())
        }
    }
}
