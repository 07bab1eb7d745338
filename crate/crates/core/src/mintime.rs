//! Minimum-time bang-bang synthesis by costate shooting.
//!
//! For `dx/dt = A x + B f`, `|f_i| <= F_i`, the time-optimal control is
//! `f_i = F_i sign((B^T lambda)_i)` with costate `dlambda/dt = -A^T lambda`.
//! The unknown initial costate is found by a search: time is rescaled as
//! `t = c tau` on the fixed interval `tau in [0, 1]`, and the terminal
//! penalty `sum C_i x_i(1)^2` is minimized over the direction of
//! `lambda(0)` (unit sphere, hyperspherical angles) and `log c`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;
use crate::nelder_mead::{self, Options};
use crate::ode::rk4_step_slice;
use crate::plant::LinearPlant;
use crate::sim::{NormKind, Trajectory};

/// `sign` with the tie `sign(0) = +1`.
#[inline]
pub(crate) fn sign(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Costate right-hand side `-A^T lambda`.
pub fn costate_rhs(plant: &LinearPlant, lambda: &DVector<f64>) -> Result<DVector<f64>> {
    if lambda.len() != plant.n_states() {
        return Err(Error::DimensionMismatch(format!(
            "costate has length {}, plant has {} states",
            lambda.len(),
            plant.n_states()
        )));
    }
    Ok(-(plant.a().tr_mul(lambda)))
}

/// Extremal control `F_i sign((B^T lambda)_i)`.
pub fn bang_control(plant: &LinearPlant, lambda: &DVector<f64>) -> Result<DVector<f64>> {
    if lambda.len() != plant.n_states() {
        return Err(Error::DimensionMismatch(format!(
            "costate has length {}, plant has {} states",
            lambda.len(),
            plant.n_states()
        )));
    }
    let s = plant.b().tr_mul(lambda);
    Ok(DVector::from_fn(s.len(), |i, _| {
        plant.force_bounds()[i] * sign(s[i])
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShootingConfig {
    /// Terminal penalty weights `C_i`; `None` means all ones.
    pub penalty_weights: Option<DVector<f64>>,
    /// Convergence threshold `C_o` on the terminal penalty.
    pub terminal_tolerance: f64,
    pub tau_steps: usize,
    /// Objective-evaluation budget per restart.
    pub max_iterations: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        Self {
            penalty_weights: None,
            terminal_tolerance: 1e-6,
            tau_steps: 2000,
            max_iterations: 5000,
            restarts: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShootingResult {
    /// Initial costate, unit norm.
    pub lambda0: DVector<f64>,
    /// Time-scale constant; the final time equals `c`.
    pub c: f64,
    pub final_time: f64,
    /// `sum C_i x_i(T)^2`.
    pub terminal_penalty: f64,
    pub trajectory: Trajectory,
    /// Costate samples aligned with the trajectory rows.
    pub costate: DMatrix<f64>,
    /// Switching function `B^T lambda` at each sample, one column per actuator.
    pub switching: DMatrix<f64>,
    pub converged: bool,
    /// Objective evaluations spent over all restarts.
    pub evaluations: usize,
}

/// Dense row-major copies of the plant for the inner loop.
struct Propagator {
    n: usize,
    p: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    bounds: Vec<f64>,
    x0: Vec<f64>,
    weights: Vec<f64>,
    steps: usize,
}

struct Run {
    /// `(steps + 1) x 2n` rows of `[x, lambda]`.
    samples: Vec<f64>,
    /// `(steps + 1) x p` control signs.
    signs: Vec<f64>,
    penalty: f64,
}

impl Propagator {
    fn new(plant: &LinearPlant, weights: Vec<f64>, steps: usize) -> Self {
        let n = plant.n_states();
        let p = plant.n_inputs();
        Self {
            n,
            p,
            a: (0..n * n).map(|k| plant.a()[(k / n, k % n)]).collect(),
            b: (0..n * p).map(|k| plant.b()[(k / p, k % p)]).collect(),
            bounds: plant.force_bounds().iter().copied().collect(),
            x0: plant.x0().iter().copied().collect(),
            weights,
            steps,
        }
    }

    fn switching(&self, z: &[f64], out: &mut [f64]) {
        let (n, p) = (self.n, self.p);
        let lambda = &z[n..];
        for j in 0..p {
            out[j] = (0..n).map(|i| self.b[i * p + j] * lambda[i]).sum();
        }
    }

    /// Integrates state and costate over `tau in [0, 1]`.
    ///
    /// The control sign is held over each step; when a component of the
    /// switching function changes sign inside a step, the step is split at
    /// the linearly interpolated crossing so the terminal state varies
    /// continuously with `lambda(0)` and `c`.
    fn run(&self, lambda0: &[f64], c: f64, record: bool) -> Option<Run> {
        let (n, p) = (self.n, self.p);
        let h = 1.0 / self.steps as f64;
        let mut z = vec![0.0; 2 * n];
        z[..n].copy_from_slice(&self.x0);
        z[n..].copy_from_slice(lambda0);
        let mut s_now = vec![0.0; p];
        let mut s_end = vec![0.0; p];
        self.switching(&z, &mut s_now);
        let mut signs: Vec<f64> = s_now.iter().map(|&v| sign(v)).collect();
        let mut scratch = vec![0.0; 10 * n];
        let mut trial = vec![0.0; 2 * n];
        let mut force = vec![0.0; p];

        let mut samples = Vec::new();
        let mut sign_log = Vec::new();
        if record {
            samples.reserve((self.steps + 1) * 2 * n);
            sign_log.reserve((self.steps + 1) * p);
            samples.extend_from_slice(&z);
            sign_log.extend_from_slice(&signs);
        }

        for _ in 0..self.steps {
            let mut remaining = 1.0;
            for _ in 0..=p {
                for j in 0..p {
                    force[j] = self.bounds[j] * signs[j];
                }
                let rhs = |y: &[f64], dy: &mut [f64]| {
                    let (x, lambda) = y.split_at(n);
                    let (dx, dl) = dy.split_at_mut(n);
                    for i in 0..n {
                        let row = &self.a[i * n..(i + 1) * n];
                        let mut acc: f64 = row.iter().zip(x).map(|(a, v)| a * v).sum();
                        for j in 0..p {
                            acc += self.b[i * p + j] * force[j];
                        }
                        dx[i] = c * acc;
                        let mut back = 0.0;
                        for k in 0..n {
                            back += self.a[k * n + i] * lambda[k];
                        }
                        dl[i] = -c * back;
                    }
                };
                trial.copy_from_slice(&z);
                rk4_step_slice(&rhs, &mut trial, remaining * h, &mut scratch);
                self.switching(&trial, &mut s_end);

                let mut first: Option<f64> = None;
                for j in 0..p {
                    if sign(s_end[j]) != signs[j] {
                        let theta = (s_now[j] / (s_now[j] - s_end[j])).clamp(0.0, 1.0);
                        first = Some(first.map_or(theta, |t: f64| t.min(theta)));
                    }
                }
                match first {
                    None => {
                        z.copy_from_slice(&trial);
                        s_now.copy_from_slice(&s_end);
                        break;
                    }
                    Some(theta) => {
                        if theta > 0.0 {
                            rk4_step_slice(&rhs, &mut z, theta * remaining * h, &mut scratch);
                        }
                        // Flip every component crossing at (numerically) the same point.
                        for j in 0..p {
                            if sign(s_end[j]) != signs[j] {
                                let t = (s_now[j] / (s_now[j] - s_end[j])).clamp(0.0, 1.0);
                                if t <= theta + 1e-12 {
                                    signs[j] = -signs[j];
                                }
                            }
                        }
                        self.switching(&z, &mut s_now);
                        remaining *= 1.0 - theta;
                        if remaining <= 0.0 {
                            break;
                        }
                    }
                }
            }
            if z.iter().any(|v| !v.is_finite()) {
                return None;
            }
            if record {
                samples.extend_from_slice(&z);
                sign_log.extend_from_slice(&signs);
            }
        }

        let penalty = self
            .weights
            .iter()
            .zip(&z[..n])
            .map(|(w, x)| w * x * x)
            .sum::<f64>();
        penalty.is_finite().then_some(Run {
            samples,
            signs: sign_log,
            penalty,
        })
    }
}

/// Unit vector from hyperspherical angles (`n - 1` angles for `n` components).
fn sphere_point(angles: &[f64], n: usize, sign_for_scalar: f64) -> Vec<f64> {
    if n == 1 {
        return vec![sign_for_scalar];
    }
    let mut out = vec![0.0; n];
    let mut radius = 1.0;
    for (i, &theta) in angles.iter().enumerate() {
        out[i] = radius * theta.cos();
        radius *= theta.sin();
    }
    out[n - 1] = radius;
    out
}

fn angles_of(dir: &[f64]) -> Vec<f64> {
    let n = dir.len();
    let mut angles = Vec::with_capacity(n.saturating_sub(1));
    for i in 0..n.saturating_sub(1) {
        let tail: f64 = dir[i + 1..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if i == n - 2 {
            angles.push(dir[n - 1].atan2(dir[n - 2]));
        } else {
            angles.push(tail.atan2(dir[i]));
        }
    }
    angles
}

/// Heuristic initial time scale: `4 / |Re lambda_max(A)|` for Hurwitz `A`, else 10.
fn initial_time_scale(plant: &LinearPlant) -> f64 {
    match linalg::spectral_abscissa(plant.a()) {
        Ok(re) if re < 0.0 => 4.0 / re.abs(),
        _ => 10.0,
    }
}

const LOG_C_RANGE: f64 = 30.0;
const C_LADDER: usize = 8;
const POOL_FACTOR: usize = 16;
/// Extra rounds of fresh restarts run only while nothing has converged.
const MAX_ROUNDS: usize = 4;

struct Candidate {
    lambda0: Vec<f64>,
    c: f64,
    penalty: f64,
    evals: usize,
}

struct Start {
    angles: Vec<f64>,
    log_c: f64,
    /// Costate sign for scalar plants, where the sphere is two points.
    scalar_sign: f64,
}

/// Draws a seeded pool of `POOL_FACTOR * restarts` points, scores each by a
/// single propagation, and keeps the best points of every time-scale octave
/// in turn so the restarts do not all fall into one basin.
fn seeded_starts(
    prop: &Propagator,
    rng: &mut ChaCha8Rng,
    c_guess: f64,
    restarts: usize,
) -> Vec<Start> {
    let n = prop.n;
    let pool: Vec<(Start, usize)> = (0..POOL_FACTOR * restarts)
        .map(|k| {
            let dir: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let octave = rng.random_range(0.0..C_LADDER as f64);
            let start = Start {
                angles: angles_of(&dir),
                log_c: c_guess.ln() + std::f64::consts::LN_2 * (octave - (C_LADDER - 2) as f64),
                scalar_sign: if k % 2 == 0 { 1.0 } else { -1.0 },
            };
            (start, (octave as usize).min(C_LADDER - 1))
        })
        .collect();
    let scores: Vec<f64> = pool
        .par_iter()
        .map(|(s, _)| {
            let lambda0 = sphere_point(&s.angles, n, s.scalar_sign);
            prop.run(&lambda0, s.log_c.exp(), false)
                .map_or(f64::INFINITY, |r| r.penalty)
        })
        .collect();
    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); C_LADDER];
    for (k, (_, bin)) in pool.iter().enumerate() {
        bins[*bin].push(k);
    }
    for bin in &mut bins {
        bin.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]).then(i.cmp(&j)));
    }
    let mut picked = Vec::with_capacity(restarts);
    let mut depth = 0;
    while picked.len() < restarts && depth < pool.len() {
        for bin in &bins {
            if picked.len() < restarts {
                if let Some(&k) = bin.get(depth) {
                    picked.push(k);
                }
            }
        }
        depth += 1;
    }
    let mut pool: Vec<Option<Start>> = pool.into_iter().map(|(s, _)| Some(s)).collect();
    picked.into_iter().filter_map(|k| pool[k].take()).collect()
}

/// Nelder-Mead from one start with shrinking initial simplices.
fn polish(prop: &Propagator, start: &Start, max_evals: usize, target: f64) -> Candidate {
    let n = prop.n;
    let objective = |params: &[f64]| {
        let (ang, lc) = params.split_at(params.len() - 1);
        let lc = lc[0];
        if lc.abs() > LOG_C_RANGE {
            return f64::INFINITY;
        }
        let lambda0 = sphere_point(ang, n, start.scalar_sign);
        prop.run(&lambda0, lc.exp(), false)
            .map_or(f64::INFINITY, |r| r.penalty)
    };
    let mut x: Vec<f64> = start.angles.clone();
    x.push(start.log_c);
    let mut evals = 0;
    let mut best = f64::INFINITY;
    for step in [0.3, 0.05, 0.01] {
        let budget = max_evals.saturating_sub(evals);
        if budget == 0 {
            break;
        }
        let m = nelder_mead::minimize(
            objective,
            &x,
            step,
            Options {
                max_evals: budget,
                f_target: target,
                x_tol: 1e-11,
            },
        );
        evals += m.evals;
        if m.f <= best {
            best = m.f;
            x = m.x;
        }
        if best <= target {
            break;
        }
    }
    let (ang, lc) = x.split_at(x.len() - 1);
    Candidate {
        lambda0: sphere_point(ang, n, start.scalar_sign),
        c: lc[0].exp(),
        penalty: best,
        evals,
    }
}

/// Searches for the minimum-time bang-bang control from `plant.x0()` to the origin.
///
/// Restarts run in parallel; the outcome is the best over all restarts with
/// ties going to the lowest restart index, so it does not depend on
/// scheduling. Among converged restarts the smallest final time wins.
pub fn shoot(plant: &LinearPlant, config: &ShootingConfig) -> Result<ShootingResult> {
    let n = plant.n_states();
    let p = plant.n_inputs();
    if plant.force_bounds().iter().any(|f| !f.is_finite()) {
        return Err(Error::InvalidArgument(
            "minimum-time synthesis needs finite force bounds".into(),
        ));
    }
    if !(config.terminal_tolerance > 0.0) || config.tau_steps == 0 || config.restarts == 0 {
        return Err(Error::InvalidArgument(
            "terminal tolerance, tau_steps and restarts must be positive".into(),
        ));
    }
    let weights: Vec<f64> = match &config.penalty_weights {
        None => vec![1.0; n],
        Some(w) if w.len() != n => {
            return Err(Error::DimensionMismatch(format!(
                "{} penalty weights for {n} states",
                w.len()
            )))
        }
        Some(w) if w.iter().any(|v| !(*v > 0.0)) => {
            return Err(Error::InvalidArgument("penalty weights must be positive".into()))
        }
        Some(w) => w.iter().copied().collect(),
    };

    if plant.x0().iter().all(|v| *v == 0.0) {
        let mut lambda0 = DVector::zeros(n);
        lambda0[0] = 1.0;
        let trajectory = Trajectory::new(
            1.0,
            DMatrix::zeros(1, n),
            DMatrix::zeros(1, p),
            NormKind::FullState,
        )?;
        return Ok(ShootingResult {
            lambda0: lambda0.clone(),
            c: 0.0,
            final_time: 0.0,
            terminal_penalty: 0.0,
            trajectory,
            costate: DMatrix::from_row_slice(1, n, lambda0.as_slice()),
            switching: DMatrix::from_row_slice(1, p, plant.b().tr_mul(&lambda0).as_slice()),
            converged: true,
            evaluations: 0,
        });
    }

    let prop = Propagator::new(plant, weights, config.tau_steps);
    let c_guess = initial_time_scale(plant);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let target = config.terminal_tolerance * 1e-6;
    let mut candidates: Vec<Candidate> = Vec::new();
    for _ in 0..MAX_ROUNDS {
        let starts = seeded_starts(&prop, &mut rng, c_guess, config.restarts);
        let round: Vec<Candidate> = starts
            .par_iter()
            .map(|start| polish(&prop, start, config.max_iterations, target))
            .collect();
        candidates.extend(round);
        if candidates
            .iter()
            .any(|c| c.penalty < config.terminal_tolerance)
        {
            break;
        }
    }

    let tol = config.terminal_tolerance;
    let evaluations = candidates.iter().map(|c| c.evals).sum();
    let mut chosen = 0;
    for (i, cand) in candidates.iter().enumerate() {
        let best = &candidates[chosen];
        let better = match (cand.penalty < tol, best.penalty < tol) {
            (true, true) => cand.c < best.c,
            (true, false) => true,
            (false, true) => false,
            (false, false) => cand.penalty < best.penalty,
        };
        if i > 0 && better {
            chosen = i;
        }
    }
    let best = &candidates[chosen];
    let run = prop
        .run(&best.lambda0, best.c, true)
        .ok_or_else(|| Error::InvalidArgument("no restart produced finite dynamics".into()))?;

    let rows = config.tau_steps + 1;
    let states = DMatrix::from_fn(rows, n, |k, i| run.samples[k * 2 * n + i]);
    let costate = DMatrix::from_fn(rows, n, |k, i| run.samples[k * 2 * n + n + i]);
    let controls = DMatrix::from_fn(rows, p, |k, j| {
        plant.force_bounds()[j] * run.signs[k * p + j]
    });
    let trajectory = Trajectory::new(
        best.c / config.tau_steps as f64,
        states,
        controls,
        NormKind::FullState,
    )?;
    Ok(ShootingResult {
        lambda0: DVector::from_vec(best.lambda0.clone()),
        c: best.c,
        final_time: best.c,
        terminal_penalty: run.penalty,
        trajectory,
        switching: &costate * plant.b(),
        costate,
        converged: run.penalty < tol,
        evaluations,
    })
}

/// Zero crossings of one switching-function column, linearly interpolated.
fn crossings(s: &[f64], times: &[f64], dt: f64) -> Vec<f64> {
    s.windows(2)
        .enumerate()
        .filter(|(_, w)| sign(w[0]) != sign(w[1]))
        .map(|(k, w)| times[k] + dt * (w[0] / (w[0] - w[1])).clamp(0.0, 1.0))
        .collect()
}

fn actuator_switches(result: &ShootingResult) -> Vec<Vec<f64>> {
    let traj = &result.trajectory;
    (0..result.switching.ncols())
        .map(|j| {
            let col: Vec<f64> = result.switching.column(j).iter().copied().collect();
            crossings(&col, traj.times(), traj.dt())
        })
        .collect()
}

/// Switch times of every actuator, merged and sorted.
pub fn switch_times(result: &ShootingResult) -> Vec<f64> {
    let mut all: Vec<f64> = actuator_switches(result).into_iter().flatten().collect();
    all.sort_by(f64::total_cmp);
    all
}

/// Open-loop replay of a shooting result: per-actuator signs switching at
/// fixed times, and zero control after the final time.
#[derive(Debug, Clone, PartialEq)]
pub struct BangSchedule {
    initial_signs: Vec<f64>,
    switches: Vec<Vec<f64>>,
    final_time: f64,
}

impl BangSchedule {
    pub fn from_result(result: &ShootingResult) -> Self {
        let initial_signs = result
            .switching
            .row(0)
            .iter()
            .map(|&v| sign(v))
            .collect();
        Self {
            initial_signs,
            switches: actuator_switches(result),
            final_time: result.final_time,
        }
    }

    /// Builds a schedule from explicit switch instants.
    pub fn new(initial_signs: Vec<f64>, switches: Vec<Vec<f64>>, final_time: f64) -> Self {
        Self {
            initial_signs,
            switches,
            final_time,
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.initial_signs.len()
    }

    pub fn final_time(&self) -> f64 {
        self.final_time
    }

    pub fn switches(&self) -> &[Vec<f64>] {
        &self.switches
    }

    pub fn control(&self, t: f64, bounds: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.initial_signs.len(), |j, _| {
            if t >= self.final_time {
                return 0.0;
            }
            let flips = self.switches[j].iter().filter(|&&ts| ts <= t).count();
            let s = if flips % 2 == 0 {
                self.initial_signs[j]
            } else {
                -self.initial_signs[j]
            };
            s * bounds[j]
        })
    }
}
