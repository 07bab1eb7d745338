//! Optimal regulation of linear structural systems under bounded control:
//! modal reduction, saturated LQR, minimum-time bang-bang synthesis and
//! closed-loop simulation.

pub mod error;
mod linalg;
pub mod mintime;
mod nelder_mead;
pub mod ode;
pub mod plant;
pub mod riccati;
pub mod sim;
pub mod synth2d;

pub use error::{Error, Result};
pub use linalg::spectral_abscissa;
pub use mintime::{shoot, switch_times, BangSchedule, ShootingConfig, ShootingResult};
pub use plant::{LinearPlant, StructuralModel};
pub use riccati::{solve_care, LqrWeights, RiccatiSolution};
pub use sim::{compare, settling_time, simulate, Controller, Settling, Trajectory};
pub use synth2d::{canonicalize, CanonicalSystem2, Synthesis2D};
