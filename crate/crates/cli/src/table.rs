//! Convergence tables and experimental orders of convergence.

use std::fmt::Write as _;

use bscahn_core::manufactured::ErrorNorms;

use crate::CliError;

pub const CONVERGENCE_HEADER: &str = "resolution,dofs,tau,l2_u,h1_u,l2_psi,h1_psi,l2mu_composite,h1mu_composite,l2theta_composite,h1theta_composite";

/// Rates `log(e_i/e_{i+1}) / log(r_i/r_{i+1})` between consecutive entries.
pub fn eoc(errors: &[f64], resolutions: &[f64]) -> Result<Vec<f64>, CliError> {
    if errors.len() != resolutions.len() || errors.len() < 2 {
        return Err(CliError::Config("eoc needs two or more matching entries".into()));
    }
    if let Some(e) = errors.iter().find(|e| !(**e > 0.0)) {
        return Err(CliError::Config(format!("errors must be positive, got {e}")));
    }
    if resolutions.windows(2).any(|w| !(w[0] > w[1] && w[1] > 0.0)) {
        return Err(CliError::Config("resolutions must be positive and strictly decreasing".into()));
    }
    Ok(errors
        .windows(2)
        .zip(resolutions.windows(2))
        .map(|(e, r)| (e[0] / e[1]).ln() / (r[0] / r[1]).ln())
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    /// Mesh size `h` for spatial studies, step size `τ` for temporal ones.
    pub resolution: f64,
    pub dofs: usize,
    pub tau: f64,
    pub errors: ErrorNorms,
}

impl ConvergenceRow {
    fn metrics(&self) -> [f64; 8] {
        let e = &self.errors;
        [e.l2_u, e.h1_u, e.l2_psi, e.h1_psi, e.l2_mu, e.h1_mu, e.l2_theta, e.h1_theta]
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// Appends a row; resolutions must decrease strictly.
    pub fn push(&mut self, row: ConvergenceRow) -> Result<(), CliError> {
        if let Some(last) = self.rows.last() {
            if !(row.resolution < last.resolution) {
                return Err(CliError::Config(format!(
                    "resolution {} does not refine {}",
                    row.resolution, last.resolution
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    /// EOC of one metric between consecutive rows; empty for fewer than two rows.
    pub fn rates(&self, metric: impl Fn(&ErrorNorms) -> f64) -> Vec<f64> {
        if self.rows.len() < 2 {
            return Vec::new();
        }
        let e: Vec<f64> = self.rows.iter().map(|r| metric(&r.errors)).collect();
        let h: Vec<f64> = self.rows.iter().map(|r| r.resolution).collect();
        eoc(&e, &h).unwrap_or_else(|_| vec![f64::NAN; e.len() - 1])
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CONVERGENCE_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "{:.17e},{},{:e}", r.resolution, r.dofs, r.tau);
            for v in r.metrics() {
                let _ = write!(s, ",{v:.17e}");
            }
            s.push('\n');
        }
        s
    }

    /// Rates between consecutive rows, one line per refinement.
    pub fn eoc_csv(&self) -> String {
        let mut s = String::from("resolution,l2_u,h1_u,l2_psi,h1_psi,l2mu_composite,h1mu_composite,l2theta_composite,h1theta_composite\n");
        let cols: Vec<Vec<f64>> = (0..8).map(|k| self.rates(|e| metric_at(e, k))).collect();
        for (i, r) in self.rows.iter().enumerate().skip(1) {
            let _ = write!(s, "{:.17e}", r.resolution);
            for c in &cols {
                let _ = write!(s, ",{:.6}", c[i - 1]);
            }
            s.push('\n');
        }
        s
    }

    /// Human-readable summary with L² and H¹ rates of `u` and `ψ`.
    pub fn summary(&self) -> String {
        let mut s = String::from("resolution      l2_u       eoc    h1_u       eoc    l2_psi     eoc    h1_psi     eoc\n");
        let rates: Vec<Vec<f64>> = (0..4).map(|k| self.rates(|e| metric_at(e, k))).collect();
        for (i, r) in self.rows.iter().enumerate() {
            let m = r.metrics();
            let _ = write!(s, "{:<15.6e}", r.resolution);
            for k in 0..4 {
                let rate = if i == 0 { "-".to_string() } else { format!("{:.2}", rates[k][i - 1]) };
                let _ = write!(s, " {:.3e}  {rate:>5}", m[k]);
            }
            s.push('\n');
        }
        s
    }
}

fn metric_at(e: &ErrorNorms, k: usize) -> f64 {
    [e.l2_u, e.h1_u, e.l2_psi, e.h1_psi, e.l2_mu, e.h1_mu, e.l2_theta, e.h1_theta][k]
}
