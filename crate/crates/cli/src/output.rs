//! Files written under the output directory.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use bscahn_core::bdf::{MonitorRow, MONITOR_HEADER};
use bscahn_core::linalg::{write_matrix_market, SparseMatrix};
use bscahn_core::mesh::Mesh;
use bscahn_core::system::State;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::init;
use crate::run::{Dynamics, Study, SystemDump};
use crate::table::ConvergenceTable;
use crate::CliError;

pub const SNAPSHOT_HEADER: &str = "x,y,value";

/// `snapshot_t<t>.csv` with `t` printed without trailing zeros.
pub fn snapshot_name(t: f64) -> String {
    let mut s = format!("{t:.10}");
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.pop();
    }
    format!("snapshot_t{s}.csv")
}

pub fn monitors_csv(rows: &[MonitorRow]) -> String {
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    s.push_str(MONITOR_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_line());
        s.push('\n');
    }
    s
}

/// Nodal values of `u` at the mesh vertices.
pub fn snapshot_csv(mesh: &Mesh, s: &State) -> String {
    let mut out = String::from(SNAPSHOT_HEADER);
    out.push('\n');
    for (p, v) in mesh.vertices.iter().zip(&s.u) {
        let _ = writeln!(out, "{:.17e},{:.17e},{:.17e}", p[0], p[1], v);
    }
    out
}

/// Scalar diagnostics of an unforced run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DynamicsSummary {
    pub steps: usize,
    pub t_final: f64,
    pub mean_u_initial: f64,
    pub mean_u_final: f64,
    pub energy_initial: f64,
    pub energy_final: f64,
    pub contact_length_final: f64,
    pub trace_variance_initial: f64,
    pub trace_variance_final: f64,
    pub notes: Vec<String>,
}

impl DynamicsSummary {
    pub fn of(d: &Dynamics) -> Self {
        let fem = &d.dump.fem;
        let first = d.monitors.first().expect("run emits the initial level");
        let last = d.monitors.last().expect("run emits the initial level");
        Self {
            steps: last.step,
            t_final: last.t,
            mean_u_initial: init::bulk_mean(fem, &d.initial.u),
            mean_u_final: init::bulk_mean(fem, &d.last.u),
            energy_initial: first.energy,
            energy_final: last.energy,
            contact_length_final: init::contact_length(&d.mesh, &d.last.u),
            trace_variance_initial: init::trace_variance(fem, &d.initial.psi),
            trace_variance_final: init::trace_variance(fem, &d.last.psi),
            notes: d.notes.clone(),
        }
    }
}

pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self, CliError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| CliError::io(&root, e))?;
        Ok(Self { root })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let p = self.root.join(name);
        fs::write(&p, contents).map_err(|e| CliError::io(&p, e))?;
        Ok(p)
    }

    fn write_matrix(&self, name: &str, a: &SparseMatrix) -> Result<(), CliError> {
        let p = self.root.join(name);
        let f = fs::File::create(&p).map_err(|e| CliError::io(&p, e))?;
        write_matrix_market(a, BufWriter::new(f)).map_err(|e| CliError::io(&p, e))
    }

    pub fn config_echo(&self, cfg: &ExperimentConfig) -> Result<(), CliError> {
        self.write("config_echo.json", &(cfg.to_json() + "\n")).map(drop)
    }

    pub fn convergence(&self, table: &ConvergenceTable) -> Result<(), CliError> {
        self.write("convergence.csv", &table.to_csv())?;
        self.write("eoc.csv", &table.eoc_csv()).map(drop)
    }

    pub fn monitors(&self, rows: &[MonitorRow]) -> Result<(), CliError> {
        self.write("monitors.csv", &monitors_csv(rows)).map(drop)
    }

    pub fn snapshots(&self, mesh: &Mesh, snaps: &[(f64, State)]) -> Result<(), CliError> {
        for (t, s) in snaps {
            self.write(&snapshot_name(*t), &snapshot_csv(mesh, s))?;
        }
        Ok(())
    }

    /// Mesh text and the assembled matrices in Matrix Market format.
    pub fn dump(&self, mesh: &Mesh, d: &SystemDump) -> Result<(), CliError> {
        self.write("mesh.txt", &mesh.to_text())?;
        self.write_matrix("bulk_mass.mtx", &d.fem.bulk_mass)?;
        self.write_matrix("bulk_stiffness.mtx", &d.fem.bulk_stiffness)?;
        self.write_matrix("surface_mass.mtx", &d.fem.surface_mass)?;
        self.write_matrix("surface_stiffness.mtx", &d.fem.surface_stiffness)?;
        self.write_matrix("trace.mtx", &d.fem.trace)?;
        self.write_matrix("step_matrix.mtx", d.step.matrix())
    }

    pub fn study(&self, cfg: &ExperimentConfig, st: &Study, dump_matrices: bool) -> Result<(), CliError> {
        self.config_echo(cfg)?;
        self.convergence(&st.table)?;
        self.monitors(&st.monitors)?;
        if dump_matrices {
            if let Some((mesh, d)) = &st.finest {
                self.dump(mesh, d)?;
            }
        }
        Ok(())
    }

    pub fn dynamics(&self, cfg: &ExperimentConfig, d: &Dynamics, dump_matrices: bool) -> Result<DynamicsSummary, CliError> {
        self.config_echo(cfg)?;
        self.monitors(&d.monitors)?;
        self.snapshots(&d.mesh, &d.snapshots)?;
        let summary = DynamicsSummary::of(d);
        let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
        self.write("summary.json", &(json + "\n"))?;
        if dump_matrices {
            self.dump(&d.mesh, &d.dump)?;
        }
        Ok(summary)
    }
}
