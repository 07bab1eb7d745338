use std::fs;
use std::path::PathBuf;

use log::{info, warn};
use nalgebra::DMatrix;
use optreg::mintime::{shoot, switch_times, ShootingConfig, ShootingResult};
use optreg::plant::{read_plant_source, PlantSource};
use optreg::riccati::{solve_care, LqrWeights, RiccatiSolution};
use optreg::sim::{compare, ComparisonReport, ComparisonRow, Controller, Trajectory};
use optreg::synth2d::{curve_csv, switching_curve, Synthesis2D};
use optreg::LinearPlant;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{Command, ControllerChoice, RunConfig};
use crate::CliError;

const CURVE_POINTS: usize = 200;

#[derive(Debug, Clone)]
pub struct RunSummary {
    /// Files written, relative to the output directory, manifest last.
    pub files: Vec<String>,
    pub report: String,
}

/// What a command produced; `failure` is reported after the artifacts are written.
struct Outcome {
    report: String,
    failure: Option<CliError>,
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        if self.files.is_empty() {
            fs::create_dir_all(&self.dir)
                .map_err(|e| CliError::Io(format!("cannot create {}: {e}", self.dir.display())))?;
        }
        let path = self.dir.join(name);
        fs::write(&path, contents)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_owned());
        }
        Ok(())
    }

    fn trajectory(&mut self, name: &str, traj: &Trajectory, stride: usize) -> Result<(), CliError> {
        let csv = if stride == 1 {
            traj.to_csv()
        } else {
            decimate(traj, stride)
                .map_err(|e| CliError::Solver { stage: format!("write {name}"), source: e })?
                .to_csv()
        };
        self.write(name, &csv)
    }

    fn manifest(&mut self, cfg: &RunConfig, status: &str) -> Result<(), CliError> {
        let manifest = json!({
            "tool": "optreg",
            "version": env!("CARGO_PKG_VERSION"),
            "status": status,
            "command": cfg.command.name(),
            "seed": cfg.seed,
            "config": cfg.to_json(),
            "files": self.files,
        });
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        self.write("manifest.json", &text)
    }
}

fn decimate(traj: &Trajectory, stride: usize) -> optreg::Result<Trajectory> {
    let rows = (traj.len() - 1) / stride + 1;
    let pick = |m: &DMatrix<f64>| DMatrix::from_fn(rows, m.ncols(), |i, j| m[(i * stride, j)]);
    Trajectory::new(
        traj.dt() * stride as f64,
        pick(traj.states()),
        pick(traj.controls()),
        traj.norm_kind(),
    )
}

/// Runs one command and writes its artifacts plus `manifest.json` to `cfg.out`.
///
/// On solver failure the artifacts produced so far, `diagnostics.txt` and a
/// manifest with status `failed` are still written.
pub fn run(cfg: &RunConfig) -> Result<RunSummary, CliError> {
    let source = read_plant_source(&cfg.input)
        .map_err(|e| CliError::Validation(format!("input {}: {e}", cfg.input.display())))?;
    let mut out = Outputs {
        dir: cfg.out.clone(),
        files: Vec::new(),
    };
    let result = match cfg.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| CliError::Io(format!("cannot start {jobs} workers: {e}")))?
            .install(|| execute(cfg, &source, &mut out)),
        None => execute(cfg, &source, &mut out),
    };
    let (report, failure) = match result {
        Ok(Outcome { report, failure }) => {
            out.write("report.txt", &report)?;
            (report, failure)
        }
        Err(e) => (String::new(), Some(e)),
    };
    match failure {
        None => {
            out.manifest(cfg, "ok")?;
            Ok(RunSummary {
                files: out.files,
                report,
            })
        }
        Some(CliError::Validation(msg)) if out.files.is_empty() => Err(CliError::Validation(msg)),
        Some(err) => {
            if let CliError::Solver {
                source: optreg::Error::NonFiniteState { trajectory, .. },
                ..
            } = &err
            {
                out.trajectory("diverged.csv", trajectory, 1)?;
            }
            out.write("diagnostics.txt", &format!("{err}\n"))?;
            out.manifest(cfg, "failed")?;
            Err(err)
        }
    }
}

fn execute(cfg: &RunConfig, source: &PlantSource, out: &mut Outputs) -> Result<Outcome, CliError> {
    info!("{} on {}", cfg.command.name(), cfg.input.display());
    match cfg.command {
        Command::Lqr => run_lqr(cfg, source, out),
        Command::Mintime => run_mintime(cfg, source, out),
        Command::Simulate => run_simulate(cfg, source, out),
        Command::Compare => run_compare(cfg, source, out),
        Command::Sweep => run_sweep(cfg, source, out),
        Command::Synth2d => run_synth2d(cfg, source, out),
    }
}

fn plant_for(source: &PlantSource, bound: Option<f64>) -> Result<LinearPlant, CliError> {
    source
        .to_plant(bound)
        .map_err(|e| CliError::Validation(format!("input: {e}")))
}

fn solver(stage: impl Into<String>) -> impl FnOnce(optreg::Error) -> CliError {
    let stage = stage.into();
    move |source| CliError::Solver { stage, source }
}

fn lqr_label(rho: f64) -> String {
    format!("lqr_rho{rho}")
}

fn solve_all(plant: &LinearPlant, rhos: &[f64]) -> Result<Vec<RiccatiSolution>, CliError> {
    rhos.par_iter()
        .map(|&rho| {
            let weights = LqrWeights::new(rho).map_err(solver(format!("riccati (rho = {rho})")))?;
            solve_care(plant, &weights).map_err(solver(format!("riccati (rho = {rho})")))
        })
        .collect()
}

fn shooting(cfg: &RunConfig, plant: &LinearPlant) -> Result<ShootingResult, CliError> {
    if let Some(i) = plant.force_bounds().iter().position(|f| f.is_infinite()) {
        return Err(CliError::Validation(format!(
            "`bounds`: minimum-time control needs finite bounds, actuator {i} is unbounded"
        )));
    }
    let config = ShootingConfig {
        seed: cfg.seed,
        restarts: cfg.restarts,
        ..ShootingConfig::default()
    };
    shoot(plant, &config).map_err(solver("shooting"))
}

fn shooting_json(res: &ShootingResult) -> String {
    let doc = json!({
        "converged": res.converged,
        "final_time": res.final_time,
        "c": res.c,
        "terminal_penalty": res.terminal_penalty,
        "lambda0": res.lambda0.as_slice(),
        "switch_times": switch_times(res),
        "evaluations": res.evaluations,
    });
    serde_json::to_string_pretty(&doc).expect("shooting result serializes") + "\n"
}

fn not_converged(res: &ShootingResult) -> CliError {
    CliError::NotConverged {
        stage: "shooting".into(),
        message: format!(
            "terminal penalty {:.3e} above tolerance after {} evaluations",
            res.terminal_penalty, res.evaluations
        ),
    }
}

/// Simulates `controllers`, writes one CSV per controller and returns the table.
fn simulate_and_write(
    cfg: &RunConfig,
    plant: &LinearPlant,
    controllers: &[Controller],
    out: &mut Outputs,
) -> Result<ComparisonReport, CliError> {
    let report = compare(plant, controllers, cfg.horizon, cfg.dt).map_err(solver("simulate"))?;
    for (c, traj) in controllers.iter().zip(&report.trajectories) {
        out.trajectory(&format!("{}.csv", c.label), traj, cfg.csv_stride)?;
    }
    Ok(report)
}

fn run_lqr(cfg: &RunConfig, source: &PlantSource, out: &mut Outputs) -> Result<Outcome, CliError> {
    let plant = plant_for(source, cfg.bounds.first().copied())?;
    let sols = solve_all(&plant, &cfg.rho)?;
    let n = plant.n_states();
    let mut gains = String::from("rho,input,residual");
    for j in 0..n {
        gains.push_str(&format!(",g{j}"));
    }
    gains.push('\n');
    for (rho, sol) in cfg.rho.iter().zip(&sols) {
        for i in 0..sol.gain.nrows() {
            gains.push_str(&format!("{rho},{i},{:.6e}", sol.residual_norm));
            for j in 0..n {
                gains.push_str(&format!(",{:.16e}", sol.gain[(i, j)]));
            }
            gains.push('\n');
        }
    }
    out.write("gains.csv", &gains)?;
    let controllers: Vec<Controller> = cfg
        .rho
        .iter()
        .zip(sols)
        .map(|(&rho, sol)| Controller::lqr(lqr_label(rho), sol, plant.force_bounds().clone()))
        .collect();
    let report = simulate_and_write(cfg, &plant, &controllers, out)?;
    Ok(Outcome {
        report: report.render(),
        failure: None,
    })
}

fn run_mintime(cfg: &RunConfig, source: &PlantSource, out: &mut Outputs) -> Result<Outcome, CliError> {
    let plant = plant_for(source, cfg.bounds.first().copied())?;
    let res = shooting(cfg, &plant)?;
    out.write("shooting.json", &shooting_json(&res))?;
    out.trajectory("shooting.csv", &res.trajectory, cfg.csv_stride)?;
    let controllers = [Controller::bang(&res, plant.force_bounds().clone())];
    let report = simulate_and_write(cfg, &plant, &controllers, out)?;
    let mut text = report.render();
    text.push_str(&format!(
        "\nfinal_time {:.6}  converged {}  switches {}\n",
        res.final_time,
        res.converged,
        switch_times(&res).len()
    ));
    Ok(Outcome {
        report: text,
        failure: (!res.converged).then(|| not_converged(&res)),
    })
}

fn run_simulate(cfg: &RunConfig, source: &PlantSource, out: &mut Outputs) -> Result<Outcome, CliError> {
    let plant = plant_for(source, cfg.bounds.first().copied())?;
    let bounds = plant.force_bounds().clone();
    let mut failure = None;
    let controller = match cfg.controller {
        ControllerChoice::None => Controller::open_loop(bounds),
        ControllerChoice::Lqr => {
            let sol = solve_all(&plant, &cfg.rho[..1])?.remove(0);
            Controller::lqr(lqr_label(cfg.rho[0]), sol, bounds)
        }
        ControllerChoice::Bang => {
            let res = shooting(cfg, &plant)?;
            out.write("shooting.json", &shooting_json(&res))?;
            if !res.converged {
                failure = Some(not_converged(&res));
            }
            Controller::bang(&res, bounds)
        }
        ControllerChoice::Synth2d => {
            let syn = Synthesis2D::from_plant(&plant).map_err(solver("synth2d"))?;
            Controller::synth2d(syn, bounds)
        }
    };
    let report = simulate_and_write(cfg, &plant, &[controller], out)?;
    Ok(Outcome {
        report: report.render(),
        failure,
    })
}

fn run_compare(cfg: &RunConfig, source: &PlantSource, out: &mut Outputs) -> Result<Outcome, CliError> {
    let plant = plant_for(source, cfg.bounds.first().copied())?;
    let bounds = plant.force_bounds().clone();
    let mut controllers = Vec::new();
    let mut failure = None;
    if bounds.iter().all(|f| f.is_finite()) {
        let res = shooting(cfg, &plant)?;
        out.write("shooting.json", &shooting_json(&res))?;
        if !res.converged {
            failure = Some(not_converged(&res));
        }
        controllers.push(Controller::bang(&res, bounds.clone()));
    } else {
        warn!("unbounded actuator; the bang-bang row is omitted");
    }
    for (&rho, sol) in cfg.rho.iter().zip(solve_all(&plant, &cfg.rho)?) {
        controllers.push(Controller::lqr(lqr_label(rho), sol, bounds.clone()));
    }
    controllers.push(Controller::open_loop(bounds));
    let report = simulate_and_write(cfg, &plant, &controllers, out)?;
    Ok(Outcome {
        report: report.render(),
        failure,
    })
}

fn run_sweep(cfg: &RunConfig, source: &PlantSource, out: &mut Outputs) -> Result<Outcome, CliError> {
    // Gains do not depend on the bounds.
    let base = plant_for(source, Some(f64::INFINITY))?;
    let sols = solve_all(&base, &cfg.rho)?;
    let mut cells: Vec<(f64, f64, &RiccatiSolution)> = cfg
        .rho
        .iter()
        .zip(&sols)
        .flat_map(|(&rho, sol)| cfg.bounds.iter().map(move |&b| (rho, b, sol)))
        .collect();
    cells.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let runs = cells
        .par_iter()
        .map(|&(rho, bound, sol)| {
            let plant = plant_for(source, Some(bound))?;
            let label = format!("lqr_rho{rho}_F{bound}");
            let ctrl = Controller::lqr(label.clone(), sol.clone(), plant.force_bounds().clone());
            compare(&plant, &[ctrl], cfg.horizon, cfg.dt).map_err(solver(format!("simulate {label}")))
        })
        .collect::<Vec<_>>();

    let p = base.n_inputs();
    let mut table = String::from("rho,bound,settling_time,terminal_norm");
    for i in 0..p {
        table.push_str(&format!(",max_f{i}"));
    }
    table.push('\n');
    let mut rows: Vec<ComparisonRow> = Vec::with_capacity(cells.len());
    for (&(rho, bound, _), run) in cells.iter().zip(runs) {
        let mut report = run?;
        let row = report.rows.remove(0);
        out.trajectory(&format!("{}.csv", row.label), &report.trajectories[0], cfg.csv_stride)?;
        table.push_str(&format!(
            "{rho},{bound},{},{:.6e}",
            row.settling,
            row.terminal_norm
        ));
        for f in row.max_control.iter() {
            table.push_str(&format!(",{f:.6e}"));
        }
        table.push('\n');
        rows.push(row);
    }
    out.write("sweep.csv", &table)?;
    let report = ComparisonReport {
        rows,
        trajectories: Vec::new(),
    };
    Ok(Outcome {
        report: report.render(),
        failure: None,
    })
}

fn run_synth2d(cfg: &RunConfig, source: &PlantSource, out: &mut Outputs) -> Result<Outcome, CliError> {
    let plant = plant_for(source, cfg.bounds.first().copied())?;
    let syn = Synthesis2D::from_plant(&plant).map_err(solver("synth2d"))?;
    let sys = &syn.system;
    out.write("switching_curve.csv", &curve_csv(&switching_curve(sys, CURVE_POINTS)))?;
    let e = sys.transform();
    let canonical = json!({
        "lambda": sys.lambda(),
        "b": sys.b(),
        "xi": sys.xi(),
        "transform": [[e[(0, 0)], e[(0, 1)]], [e[(1, 0)], e[(1, 1)]]],
        "condition_number": sys.condition_number(),
        "unrecoverable_bands": syn.region.bands.iter()
            .map(|&(i, t)| json!({"mode": i, "threshold": t}))
            .collect::<Vec<Value>>(),
    });
    out.write(
        "canonical.json",
        &(serde_json::to_string_pretty(&canonical).expect("canonical data serializes") + "\n"),
    )?;
    let controller = Controller::synth2d(syn.clone(), plant.force_bounds().clone());
    let report = simulate_and_write(cfg, &plant, &[controller], out)?;
    Ok(Outcome {
        report: report.render(),
        failure: None,
    })
}
