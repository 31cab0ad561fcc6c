//! The four experiments.

use bscahn_core::bdf::{
    bootstrap_mode, build_step_operator, run, BdfScheme, MonitorRow, Observer, Problem, StartMode,
    StepOperator,
};
use bscahn_core::fem::FemMatrices;
use bscahn_core::manufactured::{
    default_exact, discrete_error_norms, error_norms, time_composite_errors, ErrorNorms, ExactSolution,
    ManufacturedForcing,
};
use bscahn_core::mesh::{unit_disk_mesh, unit_square_mesh, Mesh};
use bscahn_core::system::{CoupledOperator, State};

use crate::config::{Experiment, ExperimentConfig, MeshSpec};
use crate::init;
use crate::table::{ConvergenceRow, ConvergenceTable};
use crate::CliError;

/// Meshes described by a spec, coarse to fine.
pub fn build_meshes(spec: &MeshSpec) -> Result<Vec<Mesh>, CliError> {
    Ok(match spec {
        MeshSpec::Disk { level } => vec![unit_disk_mesh(*level)?],
        MeshSpec::DiskFamily { levels } => levels.iter().map(|&l| unit_disk_mesh(l)).collect::<Result<_, _>>()?,
        MeshSpec::Square { n } => vec![unit_square_mesh(*n)?],
    })
}

/// Result of a convergence study.
#[derive(Clone, Debug)]
pub struct Study {
    pub table: ConvergenceTable,
    /// Monitors of the finest run.
    pub monitors: Vec<MonitorRow>,
    pub notes: Vec<String>,
    /// Operator and step matrix of the finest run, for matrix dumps.
    pub finest: Option<(Mesh, SystemDump)>,
}

/// Matrices worth exporting from a run.
#[derive(Clone, Debug)]
pub struct SystemDump {
    pub fem: FemMatrices,
    pub step: StepOperator,
}

fn notes(cfg: &ExperimentConfig) -> Vec<String> {
    cfg.params.region_note().map(|s| vec![s.to_string()]).unwrap_or_default()
}

struct Collect<F: FnMut(usize, &State) -> bscahn_core::Result<()>>(F);

impl<F: FnMut(usize, &State) -> bscahn_core::Result<()>> Observer for Collect<F> {
    fn state(&mut self, step: usize, s: &State) -> bscahn_core::Result<()> {
        (self.0)(step, s)
    }
}

/// Forced run on one mesh from exact or given starting values, reporting
/// every state to `visit`.
fn manufactured_run(
    cfg: &ExperimentConfig,
    mesh: &Mesh,
    ex: &ExactSolution,
    q: usize,
    tau: f64,
    n_steps: usize,
    start: &dyn Fn(f64) -> State,
    visit: &mut dyn FnMut(usize, &State) -> bscahn_core::Result<()>,
) -> Result<(Vec<MonitorRow>, SystemDump), CliError> {
    let (f_om, f_ga) = cfg.potentials()?;
    let fem = FemMatrices::assemble(mesh)?;
    let op = CoupledOperator::new(fem, cfg.params.clone())?;
    let forcing = ManufacturedForcing {
        exact: ex,
        params: &cfg.params,
        f_om: &f_om,
        f_ga: &f_ga,
        mesh,
    };
    let pb = Problem::new(&op, &f_om, &f_ga).with_forcing(&forcing);
    let scheme = BdfScheme::new(q)?;
    let so = build_step_operator(&op, &scheme, tau)?;
    let h = bootstrap_mode(StartMode::Exact, &scheme, tau, &pb, Some(start), None)?;
    let (_, rows) = run(&so, &pb, h, n_steps, &[], &mut Collect(visit))?;
    let dump = SystemDump {
        fem: op.fem.clone(),
        step: so,
    };
    Ok((rows, dump))
}

/// BDF-q to the final time on every mesh of the family; errors against the
/// exact solution at the levels `k >= q`.
pub fn convergence_space(cfg: &ExperimentConfig) -> Result<Study, CliError> {
    expect_kind(cfg, Experiment::ConvergenceSpace)?;
    let tau = cfg.tau.ok_or_else(|| CliError::Config("`tau` is required".into()))?;
    let n_steps = cfg.steps_for(tau)?;
    let ex = default_exact();
    let mut table = ConvergenceTable::default();
    let mut last = None;
    let mut monitors = Vec::new();
    for mesh in build_meshes(&cfg.mesh)? {
        let mut errs: Vec<ErrorNorms> = Vec::with_capacity(n_steps);
        let exact = |t: f64| ex.interpolate(&mesh, t);
        let (rows, dump) = manufactured_run(cfg, &mesh, &ex, cfg.q, tau, n_steps, &exact, &mut |k, s| {
            if k >= cfg.q {
                errs.push(error_norms(s, &ex, &mesh));
            }
            Ok(())
        })?;
        let errors = if errs.is_empty() {
            error_norms(&ex.interpolate(&mesh, 0.0), &ex, &mesh)
        } else {
            time_composite_errors(&errs, tau)?
        };
        table.push(ConvergenceRow {
            resolution: mesh.h_max,
            dofs: mesh.n_nodes() + mesh.n_boundary_nodes(),
            tau,
            errors,
        })?;
        monitors = rows;
        last = Some((mesh, dump));
    }
    Ok(Study {
        table,
        monitors,
        notes: notes(cfg),
        finest: last,
    })
}

/// Sweep of step sizes on one mesh. Errors are measured against a
/// high-order run with a much smaller step on the same mesh, so the spatial
/// error drops out. The reference starts earlier than the coarse runs and
/// supplies their starting values.
pub fn convergence_time(cfg: &ExperimentConfig) -> Result<Study, CliError> {
    expect_kind(cfg, Experiment::ConvergenceTime)?;
    let mesh = build_meshes(&cfg.mesh)?.remove(0);
    let ex = default_exact();
    let rs = cfg.reference();
    let tau_min = *cfg.taus.last().expect("validated");
    let tau_ref = tau_min / rs.substeps as f64;
    let lead = (rs.lead_in / tau_ref).round() as usize;
    let t_end = cfg.final_time();
    let ref_steps = lead + (t_end / tau_ref).round() as usize;

    // reference states on the grid of the smallest step
    let mut grid: Vec<State> = Vec::new();
    let shifted = |t: f64| ex.interpolate(&mesh, t - rs.lead_in);
    manufactured_run(cfg, &mesh, &ex, rs.q, tau_ref, ref_steps, &shifted, &mut |k, s| {
        if k >= lead && (k - lead) % rs.substeps == 0 {
            let mut s = s.clone();
            s.t = ((k - lead) / rs.substeps) as f64 * tau_min;
            grid.push(s);
        }
        Ok(())
    })?;
    let index = |t: f64| (t / tau_min).round() as usize;
    let reference = |t: f64| {
        let mut s = grid[index(t)].clone();
        s.t = t;
        s
    };

    let mut table = ConvergenceTable::default();
    let mut monitors = Vec::new();
    let mut last = None;
    let fem = FemMatrices::assemble(&mesh)?;
    for &tau in &cfg.taus {
        let n_steps = cfg.steps_for(tau)?;
        let mut errs: Vec<ErrorNorms> = Vec::with_capacity(n_steps);
        let (rows, dump) = manufactured_run(cfg, &mesh, &ex, cfg.q, tau, n_steps, &reference, &mut |k, s| {
            if k >= cfg.q {
                errs.push(discrete_error_norms(&fem, s, &grid[index(k as f64 * tau)])?);
            }
            Ok(())
        })?;
        let errors = if errs.is_empty() { ErrorNorms::default() } else { time_composite_errors(&errs, tau)? };
        table.push(ConvergenceRow {
            resolution: tau,
            dofs: mesh.n_nodes() + mesh.n_boundary_nodes(),
            tau,
            errors,
        })?;
        monitors = rows;
        last = Some(dump);
    }
    Ok(Study {
        table,
        monitors,
        notes: notes(cfg),
        finest: last.map(|d| (mesh, d)),
    })
}

/// Output of an unforced run.
#[derive(Clone, Debug)]
pub struct Dynamics {
    pub mesh: Mesh,
    pub dump: SystemDump,
    pub monitors: Vec<MonitorRow>,
    /// `(requested time, state)` for each snapshot time.
    pub snapshots: Vec<(f64, State)>,
    pub initial: State,
    pub last: State,
    pub notes: Vec<String>,
}

struct Snapshots(Vec<(f64, State)>);

impl Observer for Snapshots {
    fn snapshot(&mut self, requested: f64, s: &State) -> bscahn_core::Result<()> {
        self.0.push((requested, s.clone()));
        Ok(())
    }
}

/// Runs the unforced scheme from `(u⁰, ψ⁰)` with the config's order, step, and
/// snapshot times.
pub fn run_dynamics(cfg: &ExperimentConfig, mesh: Mesh, u0: Vec<f64>, psi0: Vec<f64>) -> Result<Dynamics, CliError> {
    let (f_om, f_ga) = cfg.potentials()?;
    let tau = cfg.tau.ok_or_else(|| CliError::Config("`tau` is required".into()))?;
    let n_steps = cfg.steps_for(tau)?;
    let fem = FemMatrices::assemble(&mesh)?;
    let op = CoupledOperator::new(fem, cfg.params.clone())?;
    let pb = Problem::new(&op, &f_om, &f_ga);
    let scheme = BdfScheme::new(cfg.q)?;
    let so = build_step_operator(&op, &scheme, tau)?;
    let h = bootstrap_mode(cfg.start_kind().into(), &scheme, tau, &pb, None, Some((u0, psi0)))?;
    let initial = h.back(h.len() - 1).clone();
    let mut times = cfg.snapshot_times.clone();
    if times.is_empty() && cfg.experiment == Experiment::RandomIc {
        times.push(n_steps as f64 * tau);
    }
    let mut snaps = Snapshots(Vec::new());
    let (h, monitors) = run(&so, &pb, h, n_steps, &times, &mut snaps)?;
    Ok(Dynamics {
        last: h.newest().clone(),
        dump: SystemDump {
            fem: op.fem.clone(),
            step: so,
        },
        mesh,
        monitors,
        snapshots: snaps.0,
        initial,
        notes: notes(cfg),
    })
}

pub fn droplet(cfg: &ExperimentConfig) -> Result<Dynamics, CliError> {
    expect_kind(cfg, Experiment::Droplet)?;
    let mesh = build_meshes(&cfg.mesh)?.remove(0);
    let (u0, psi0) = init::droplet_data(&mesh, &cfg.droplet(), &cfg.params);
    run_dynamics(cfg, mesh, u0, psi0)
}

pub fn random_ic(cfg: &ExperimentConfig) -> Result<Dynamics, CliError> {
    expect_kind(cfg, Experiment::RandomIc)?;
    let mesh = build_meshes(&cfg.mesh)?.remove(0);
    let seed = cfg.seed.ok_or_else(|| CliError::Config("random-ic requires a seed".into()))?;
    let (u0, psi0) = init::random_data(&mesh, seed, cfg.ic_range, &cfg.params);
    run_dynamics(cfg, mesh, u0, psi0)
}

fn expect_kind(cfg: &ExperimentConfig, kind: Experiment) -> Result<(), CliError> {
    if cfg.experiment == kind {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "config describes a {} experiment, not {}",
            cfg.experiment.name(),
            kind.name()
        )))
    }
}

