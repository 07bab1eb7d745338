//! Closed- and open-loop simulation under actuator saturation, and the
//! displacement-norm performance metrics.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mintime::{BangSchedule, ShootingResult};
use crate::ode::rk4_step;
use crate::plant::LinearPlant;
use crate::riccati::RiccatiSolution;
use crate::synth2d::Synthesis2D;

/// Which state coordinates enter the norm series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormKind {
    /// Euclidean norm of the whole state.
    #[default]
    FullState,
    /// Norm of the first half of the state (modal displacements).
    Displacements,
}

impl NormKind {
    pub fn eval(self, x: &[f64]) -> f64 {
        let n = match self {
            NormKind::FullState => x.len(),
            NormKind::Displacements => x.len() / 2,
        };
        x[..n].iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Uniformly sampled state and control record.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dt: f64,
    times: Vec<f64>,
    states: DMatrix<f64>,
    controls: DMatrix<f64>,
    norm_series: Vec<f64>,
    norm: NormKind,
}

impl Trajectory {
    /// `states` is `steps x n`, `controls` is `steps x p`; sample `k` sits at `k * dt`.
    pub fn new(
        dt: f64,
        states: DMatrix<f64>,
        controls: DMatrix<f64>,
        norm: NormKind,
    ) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        if states.nrows() != controls.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} state samples but {} control samples",
                states.nrows(),
                controls.nrows()
            )));
        }
        let times = (0..states.nrows()).map(|k| k as f64 * dt).collect();
        let norm_series = (0..states.nrows())
            .map(|k| {
                let row: Vec<f64> = states.row(k).iter().copied().collect();
                norm.eval(&row)
            })
            .collect();
        Ok(Self {
            dt,
            times,
            states,
            controls,
            norm_series,
            norm,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &DMatrix<f64> {
        &self.states
    }

    pub fn controls(&self) -> &DMatrix<f64> {
        &self.controls
    }

    pub fn norm_series(&self) -> &[f64] {
        &self.norm_series
    }

    pub fn norm_kind(&self) -> NormKind {
        self.norm
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_states(&self) -> usize {
        self.states.ncols()
    }

    pub fn n_inputs(&self) -> usize {
        self.controls.ncols()
    }

    pub fn final_state(&self) -> Option<DVector<f64>> {
        let k = self.len().checked_sub(1)?;
        Some(self.states.row(k).transpose())
    }

    /// CSV with header `t,x1..xn,f1..fp,norm`, 17 significant digits, LF endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for i in 1..=self.n_states() {
            out.push_str(&format!(",x{i}"));
        }
        for i in 1..=self.n_inputs() {
            out.push_str(&format!(",f{i}"));
        }
        out.push_str(",norm\n");
        for k in 0..self.len() {
            out.push_str(&format!("{:.16e}", self.times[k]));
            for v in self.states.row(k).iter().chain(self.controls.row(k).iter()) {
                out.push_str(&format!(",{v:.16e}"));
            }
            out.push_str(&format!(",{:.16e}\n", self.norm_series[k]));
        }
        out
    }

    /// Parses the format written by [`Trajectory::to_csv`].
    ///
    /// The sampling step is taken from the first two rows and every time
    /// stamp must agree with it; the norm column selects the [`NormKind`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("missing header".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 3 || cols[0] != "t" || cols[cols.len() - 1] != "norm" {
            return Err(Error::Parse("header must be `t,x1..,f1..,norm`".into()));
        }
        let middle = &cols[1..cols.len() - 1];
        let n = middle.iter().take_while(|c| c.starts_with('x')).count();
        let p = middle.len() - n;
        for (i, c) in middle[..n].iter().enumerate() {
            if *c != format!("x{}", i + 1) {
                return Err(Error::Parse(format!("unexpected column `{c}`")));
            }
        }
        for (i, c) in middle[n..].iter().enumerate() {
            if *c != format!("f{}", i + 1) {
                return Err(Error::Parse(format!("unexpected column `{c}`")));
            }
        }
        if n == 0 {
            return Err(Error::Parse("no state columns".into()));
        }

        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (line_no, line) in lines.enumerate() {
            let vals = line
                .split(',')
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse(format!("row {line_no}: {e}")))?;
            if vals.len() != cols.len() {
                return Err(Error::Parse(format!(
                    "row {line_no} has {} fields, expected {}",
                    vals.len(),
                    cols.len()
                )));
            }
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse(format!("row {line_no} is not finite")));
            }
            rows.push(vals);
        }
        if rows.len() < 2 {
            return Err(Error::Parse("need at least two samples".into()));
        }
        let dt = rows[1][0] - rows[0][0];
        if rows[0][0] != 0.0 || !(dt > 0.0) {
            return Err(Error::Parse("time stamps must start at 0 and increase".into()));
        }
        for (k, row) in rows.iter().enumerate() {
            let expected = k as f64 * dt;
            if (row[0] - expected).abs() > 1e-9 * expected.abs().max(dt) {
                return Err(Error::Parse(format!("row {k} breaks uniform spacing")));
            }
        }
        let states = DMatrix::from_fn(rows.len(), n, |k, i| rows[k][1 + i]);
        let controls = DMatrix::from_fn(rows.len(), p, |k, i| rows[k][1 + n + i]);
        let stored: Vec<f64> = rows.iter().map(|r| r[cols.len() - 1]).collect();
        for kind in [NormKind::FullState, NormKind::Displacements] {
            let traj = Trajectory::new(dt, states.clone(), controls.clone(), kind)?;
            let agrees = traj
                .norm_series
                .iter()
                .zip(&stored)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(1e-300));
            if agrees {
                return Ok(traj);
            }
        }
        Err(Error::Parse("norm column does not match the states".into()))
    }
}

#[derive(Debug, Clone)]
pub enum ControllerKind {
    /// Open loop, `f = 0`.
    None,
    /// `f = sat(-G x)`.
    LqrSaturated(RiccatiSolution),
    /// Replays a minimum-time bang-bang schedule, then holds `f = 0`.
    Bang(BangSchedule),
    /// Closed-form second-order time-optimal feedback.
    Synth2d(Synthesis2D),
}

#[derive(Debug, Clone)]
pub struct Controller {
    pub label: String,
    pub kind: ControllerKind,
    pub force_bounds: DVector<f64>,
}

impl Controller {
    pub fn open_loop(force_bounds: DVector<f64>) -> Self {
        Self {
            label: "none".into(),
            kind: ControllerKind::None,
            force_bounds,
        }
    }

    pub fn lqr(label: impl Into<String>, sol: RiccatiSolution, force_bounds: DVector<f64>) -> Self {
        Self {
            label: label.into(),
            kind: ControllerKind::LqrSaturated(sol),
            force_bounds,
        }
    }

    pub fn bang(result: &ShootingResult, force_bounds: DVector<f64>) -> Self {
        Self {
            label: "bang".into(),
            kind: ControllerKind::Bang(BangSchedule::from_result(result)),
            force_bounds,
        }
    }

    pub fn synth2d(synthesis: Synthesis2D, force_bounds: DVector<f64>) -> Self {
        Self {
            label: "synth2d".into(),
            kind: ControllerKind::Synth2d(synthesis),
            force_bounds,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    fn check(&self, plant: &LinearPlant) -> Result<()> {
        let p = plant.n_inputs();
        let n = plant.n_states();
        if self.force_bounds.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "controller `{}` has {} bounds, plant has {p} inputs",
                self.label,
                self.force_bounds.len()
            )));
        }
        match &self.kind {
            ControllerKind::None => Ok(()),
            ControllerKind::LqrSaturated(sol) if sol.gain.shape() != (p, n) => {
                Err(Error::DimensionMismatch(format!(
                    "controller `{}` gain is {:?}, expected ({p}, {n})",
                    self.label,
                    sol.gain.shape()
                )))
            }
            ControllerKind::LqrSaturated(_) => Ok(()),
            ControllerKind::Bang(s) if s.n_inputs() != p => Err(Error::DimensionMismatch(
                format!("controller `{}` schedules {} inputs", self.label, s.n_inputs()),
            )),
            ControllerKind::Bang(_) => Ok(()),
            ControllerKind::Synth2d(_) if n != 2 || p != 1 => Err(Error::DimensionMismatch(
                "synth2d controller needs a 2-state single-input plant".into(),
            )),
            ControllerKind::Synth2d(_) => Ok(()),
        }
    }

    fn raw_control(&self, t: f64, x: &DVector<f64>, memory: &mut Option<f64>) -> Result<DVector<f64>> {
        let p = self.force_bounds.len();
        Ok(match &self.kind {
            ControllerKind::None => DVector::zeros(p),
            ControllerKind::LqrSaturated(sol) => -(&sol.gain * x),
            ControllerKind::Bang(schedule) => schedule.control(t, &self.force_bounds),
            ControllerKind::Synth2d(syn) => {
                let u = syn.control(&[x[0], x[1]], memory)?;
                DVector::from_element(1, u)
            }
        })
    }
}

/// Integrates the plant from its initial state with sample-and-hold control
/// clamped to `[-F_i, F_i]`.
pub fn simulate(
    plant: &LinearPlant,
    controller: &Controller,
    horizon: f64,
    dt: f64,
) -> Result<Trajectory> {
    simulate_with_norm(plant, controller, horizon, dt, NormKind::FullState)
}

pub fn simulate_with_norm(
    plant: &LinearPlant,
    controller: &Controller,
    horizon: f64,
    dt: f64,
    norm: NormKind,
) -> Result<Trajectory> {
    if !(dt > 0.0 && horizon.is_finite() && dt <= horizon / 10.0) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < dt <= horizon / 10, got dt = {dt}, horizon = {horizon}"
        )));
    }
    controller.check(plant)?;
    let n = plant.n_states();
    let p = plant.n_inputs();
    let steps = (horizon / dt).round() as usize;
    let mut states = DMatrix::zeros(steps + 1, n);
    let mut controls = DMatrix::zeros(steps + 1, p);
    let mut x = plant.x0().clone();
    let mut memory = None;

    for k in 0..=steps {
        let t = k as f64 * dt;
        let mut f = controller.raw_control(t, &x, &mut memory)?;
        for (fi, bound) in f.iter_mut().zip(controller.force_bounds.iter()) {
            *fi = fi.clamp(-bound, *bound);
        }
        states.set_row(k, &x.transpose());
        controls.set_row(k, &f.transpose());
        if k == steps {
            break;
        }
        x = rk4_step(|_, y| plant.rhs(y, &f), t, &x, dt);
        if x.iter().any(|v| !v.is_finite()) {
            let keep = k + 1;
            let prefix = Trajectory::new(
                dt,
                states.rows(0, keep).into_owned(),
                controls.rows(0, keep).into_owned(),
                norm,
            )?;
            return Err(Error::NonFiniteState {
                time: (k + 1) as f64 * dt,
                trajectory: Box::new(prefix),
            });
        }
    }
    Trajectory::new(dt, states, controls, norm)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Settling {
    At(f64),
    NotSettled,
}

impl Settling {
    /// Settling time, with `NotSettled` mapped to infinity for ordering.
    pub fn time(self) -> f64 {
        match self {
            Settling::At(t) => t,
            Settling::NotSettled => f64::INFINITY,
        }
    }
}

impl fmt::Display for Settling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Settling::At(t) => write!(f, "{t:.4}"),
            Settling::NotSettled => f.write_str("NotSettled"),
        }
    }
}

/// First time after which the norm stays at or below `fraction` of its
/// initial value, interpolated between the straddling samples.
pub fn settling_time(traj: &Trajectory, fraction: f64) -> Result<Settling> {
    let norm = traj.norm_series();
    let first = *norm.first().ok_or(Error::EmptyTrajectory)?;
    if first == 0.0 {
        return Err(Error::ZeroInitialNorm);
    }
    let threshold = fraction * first;
    let last_above = match norm.iter().rposition(|&v| v > threshold) {
        None => return Ok(Settling::At(0.0)),
        Some(k) => k,
    };
    if last_above + 1 == norm.len() {
        return Ok(Settling::NotSettled);
    }
    let (hi, lo) = (norm[last_above], norm[last_above + 1]);
    let frac = (hi - threshold) / (hi - lo);
    Ok(Settling::At(traj.times()[last_above] + frac * traj.dt()))
}

/// Per-actuator peak `|f_i|` over the record.
pub fn max_control(traj: &Trajectory) -> Result<DVector<f64>> {
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let controls = traj.controls();
    Ok(DVector::from_fn(controls.ncols(), |i, _| {
        controls.column(i).iter().fold(0.0, |m: f64, v| m.max(v.abs()))
    }))
}

#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub label: String,
    pub settling: Settling,
    pub max_control: DVector<f64>,
    pub terminal_norm: f64,
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub trajectories: Vec<Trajectory>,
}

impl ComparisonReport {
    /// Fixed-width text table, one row per controller in input order.
    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<24} {:>14} {:>14}  {}\n",
            "controller", "settling_2pct", "terminal_norm", "max_actuator_forces"
        );
        for row in &self.rows {
            let forces: Vec<String> = row.max_control.iter().map(|f| format!("{f:.6}")).collect();
            out.push_str(&format!(
                "{:<24} {:>14} {:>14.6e}  {}\n",
                row.label,
                row.settling.to_string(),
                row.terminal_norm,
                forces.join(" ")
            ));
        }
        out
    }
}

/// Simulates every controller on the same plant; rows keep input order.
pub fn compare(
    plant: &LinearPlant,
    controllers: &[Controller],
    horizon: f64,
    dt: f64,
) -> Result<ComparisonReport> {
    let runs = controllers
        .par_iter()
        .map(|c| simulate(plant, c, horizon, dt))
        .collect::<Vec<_>>();
    let mut rows = Vec::with_capacity(runs.len());
    let mut trajectories = Vec::with_capacity(runs.len());
    for (controller, run) in controllers.iter().zip(runs) {
        let traj = run?;
        rows.push(ComparisonRow {
            label: controller.label.clone(),
            settling: settling_time(&traj, 0.02)?,
            max_control: max_control(&traj)?,
            terminal_norm: *traj.norm_series().last().unwrap_or(&0.0),
        });
        trajectories.push(traj);
    }
    Ok(ComparisonReport { rows, trajectories })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};

    fn oscillator(omega: f64, zeta: f64, x0: DVector<f64>) -> LinearPlant {
        LinearPlant::new(
            dmatrix![0.0, 1.0; -omega * omega, -2.0 * zeta * omega],
            dmatrix![0.0; 1.0],
            dvector![1.0],
            x0,
        )
        .unwrap()
    }

    fn synthetic(norm: impl Fn(f64) -> f64, dt: f64, steps: usize) -> Trajectory {
        let states = DMatrix::from_fn(steps, 1, |k, _| norm(k as f64 * dt));
        Trajectory::new(dt, states, DMatrix::zeros(steps, 1), NormKind::FullState).unwrap()
    }

    #[test]
    fn settling_of_exponential() {
        let traj = synthetic(|t| (-t).exp(), 1e-3, 10_001);
        match settling_time(&traj, 0.02).unwrap() {
            Settling::At(t) => assert_relative_eq!(t, 50f64.ln(), epsilon = 1e-6),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn constant_norm_never_settles() {
        let traj = synthetic(|_| 1.0, 0.1, 100);
        assert_eq!(settling_time(&traj, 0.02).unwrap(), Settling::NotSettled);
    }

    #[test]
    fn zero_initial_norm_is_rejected() {
        let traj = synthetic(|_| 0.0, 0.1, 10);
        assert!(matches!(settling_time(&traj, 0.02), Err(Error::ZeroInitialNorm)));
    }

    #[test]
    fn open_loop_controls_are_zero() {
        let plant = oscillator(2.0, 0.03, dvector![0.0, 1.0]);
        let traj = simulate(&plant, &Controller::open_loop(dvector![1.0]), 1.0, 1e-2).unwrap();
        assert_eq!(max_control(&traj).unwrap(), dvector![0.0]);
        assert_eq!(traj.len(), 101);
    }

    #[test]
    fn saturation_is_hard() {
        let plant = oscillator(2.0, 0.03, dvector![0.0, 10.0]);
        let sol = RiccatiSolution {
            p: DMatrix::zeros(2, 2),
            gain: dmatrix![5.0, 5.0],
            residual_norm: 0.0,
        };
        let bound = 0.15;
        let traj = simulate(&plant, &Controller::lqr("lqr", sol, dvector![bound]), 10.0, 1e-2).unwrap();
        assert!(traj.controls().iter().all(|f| f.abs() <= bound));
        assert_eq!(max_control(&traj).unwrap()[0], bound);
    }

    #[test]
    fn dt_must_resolve_horizon() {
        let plant = oscillator(1.0, 0.0, dvector![1.0, 0.0]);
        let err = simulate(&plant, &Controller::open_loop(dvector![1.0]), 1.0, 0.5);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn divergence_returns_prefix() {
        let plant = LinearPlant::new(
            dmatrix![2000.0],
            dmatrix![1.0],
            dvector![1.0],
            dvector![1.0],
        )
        .unwrap();
        match simulate(&plant, &Controller::open_loop(dvector![1.0]), 100.0, 1.0) {
            Err(Error::NonFiniteState { trajectory, .. }) => {
                assert!(!trajectory.is_empty());
                assert!(trajectory.states().iter().all(|v| v.is_finite()));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_header_and_precision() {
        let plant = oscillator(2.0, 0.03, dvector![0.0, 1.0]);
        let traj = simulate(&plant, &Controller::open_loop(dvector![1.0]), 1.0, 0.1).unwrap();
        let csv = traj.to_csv();
        assert!(csv.starts_with("t,x1,x2,f1,norm\n"));
        assert!(!csv.contains('\r'));
        let back = Trajectory::from_csv(&csv).unwrap();
        assert_eq!(back.states(), traj.states());
        assert_eq!(back.norm_series(), traj.norm_series());
    }

    #[test]
    fn csv_rejects_bad_norm_column() {
        let csv = "t,x1,f1,norm\n0,1,0,1\n0.1,0.5,0,0.7\n";
        assert!(Trajectory::from_csv(csv).is_err());
    }
}
