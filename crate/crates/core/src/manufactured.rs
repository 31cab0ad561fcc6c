//! Manufactured solutions: exact fields, weak-residual forcing and error norms.

use std::sync::Arc;

use crate::bdf::Forcing;
use crate::error::{Error, Result};
use crate::fem::{barycentric_point, basis_gradients, FemMatrices, Quadrature};
use crate::linalg::SparseMatrix;
use crate::mesh::{Mesh, Point};
use crate::potentials::Potential;
use crate::system::{h_of, ModelParams, State};

type ScalarField = Arc<dyn Fn(f64, Point) -> f64 + Send + Sync>;
type VectorField = Arc<dyn Fn(f64, Point) -> [f64; 2] + Send + Sync>;

/// A closed-form scalar field of `(t, x)` with its gradient and time derivative.
#[derive(Clone)]
pub struct ExactField {
    pub value: ScalarField,
    pub grad: VectorField,
    pub dt: ScalarField,
}

impl ExactField {
    pub fn new(
        value: impl Fn(f64, Point) -> f64 + Send + Sync + 'static,
        grad: impl Fn(f64, Point) -> [f64; 2] + Send + Sync + 'static,
        dt: impl Fn(f64, Point) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(value),
            grad: Arc::new(grad),
            dt: Arc::new(dt),
        }
    }

    /// The zero field.
    pub fn zero() -> Self {
        Self::new(|_, _| 0.0, |_, _| [0.0, 0.0], |_, _| 0.0)
    }

    /// `e^{−t} x₁ x₂`.
    pub fn decaying_product() -> Self {
        Self::new(
            |t, x| (-t).exp() * x[0] * x[1],
            |t, x| {
                let e = (-t).exp();
                [e * x[1], e * x[0]]
            },
            |t, x| -(-t).exp() * x[0] * x[1],
        )
    }
}

/// Exact `(u, ψ, μ, θ)`; surface fields are restrictions of ambient fields.
#[derive(Clone)]
pub struct ExactSolution {
    pub u: ExactField,
    pub psi: ExactField,
    pub mu: ExactField,
    pub theta: ExactField,
}

/// `u = ψ = μ = θ = e^{−t} x₁ x₂`.
pub fn default_exact() -> ExactSolution {
    let f = ExactField::decaying_product();
    ExactSolution {
        u: f.clone(),
        psi: f.clone(),
        mu: f.clone(),
        theta: f,
    }
}

/// Normal derivative of `e^{−t}x₁x₂` on the unit circle (`ν = x`): `2u`.
pub fn product_normal_derivative(t: f64, x: Point) -> f64 {
    2.0 * (-t).exp() * x[0] * x[1]
}

/// Laplace-Beltrami of `e^{−t}x₁x₂` on the unit circle: `−4ψ`.
pub fn product_surface_laplacian(t: f64, x: Point) -> f64 {
    -4.0 * (-t).exp() * x[0] * x[1]
}

impl ExactSolution {
    /// Nodal interpolant at time `t`; surface values at the boundary vertices.
    pub fn interpolate(&self, mesh: &Mesh, t: f64) -> State {
        let nodal = |f: &ExactField, ids: &mut dyn Iterator<Item = usize>| -> Vec<f64> {
            ids.map(|i| (f.value)(t, mesh.vertices[i])).collect()
        };
        State {
            t,
            u: nodal(&self.u, &mut (0..mesh.n_nodes())),
            psi: nodal(&self.psi, &mut mesh.boundary_nodes.iter().copied()),
            mu: nodal(&self.mu, &mut (0..mesh.n_nodes())),
            theta: nodal(&self.theta, &mut mesh.boundary_nodes.iter().copied()),
        }
    }
}

fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Weak residuals of the exact solution, as full `(bulk | surface)` vectors:
///
/// `load₁ = m((∂_t u, ∂_t ψ), ·) + a^{L,β}((μ, θ), ·)` and
/// `load₂ = m((μ, θ), ·) − a^{K,α}((u, ψ), ·) − m((ε⁻¹F_Ω′(u), δ⁻¹F_Γ′(ψ)), ·)`,
/// where the `K`-Robin term uses `αψ + α₂ − u`.
pub fn residual_loads(
    ex: &ExactSolution,
    p: &ModelParams,
    f_om: &Potential,
    f_ga: &Potential,
    mesh: &Mesh,
    t: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (n, m) = (mesh.n_nodes(), mesh.n_boundary_nodes());
    let mut l1 = vec![0.0; n + m];
    let mut l2 = vec![0.0; n + m];

    let tq = Quadrature::triangle_degree4();
    for (k, tri) in mesh.triangles.iter().enumerate() {
        let v = tri.map(|i| mesh.vertices[i]);
        let area = mesh.triangle_area(k);
        let g = basis_gradients(&v);
        for (bary, w) in tq.points.iter().zip(&tq.weights) {
            let x = barycentric_point(&v, bary);
            let wa = w * area;
            let dtu = (ex.u.dt)(t, x);
            let gmu = (ex.mu.grad)(t, x);
            let gu = (ex.u.grad)(t, x);
            let mu = (ex.mu.value)(t, x);
            let fu = f_om.derivative((ex.u.value)(t, x)) / p.eps;
            for i in 0..3 {
                l1[tri[i]] += wa * (dtu * bary[i] + p.m_om * dot2(gmu, g[i]));
                l2[tri[i]] += wa * ((mu - fu) * bary[i] - p.eps * dot2(gu, g[i]));
            }
        }
    }

    let hl = h_of(p.l)?;
    let hk = h_of(p.k)?;
    let eq = Quadrature::edge_gauss3();
    for (e, &[a, b]) in mesh.boundary_edges.iter().enumerate() {
        let v = [mesh.vertices[a], mesh.vertices[b]];
        let d = [v[1][0] - v[0][0], v[1][1] - v[0][1]];
        let len = dot2(d, d).sqrt();
        let tan = [d[0] / len, d[1] / len];
        let ds = [-1.0 / len, 1.0 / len];
        let bulk = [a, b];
        let surf = [n + e, n + (e + 1) % m];
        for (bary, w) in eq.points.iter().zip(&eq.weights) {
            let x = barycentric_point(&v, bary);
            let wl = w * len;
            let u = (ex.u.value)(t, x);
            let psi = (ex.psi.value)(t, x);
            let mu = (ex.mu.value)(t, x);
            let theta = (ex.theta.value)(t, x);
            let r_l = p.beta * theta - mu;
            let r_k = p.alpha * psi + p.alpha2 - u;
            let dtpsi = (ex.psi.dt)(t, x);
            let dtheta = dot2((ex.theta.grad)(t, x), tan);
            let dpsi = dot2((ex.psi.grad)(t, x), tan);
            let fpsi = f_ga.derivative(psi) / p.delta;
            for i in 0..2 {
                let phi = bary[i];
                l1[bulk[i]] -= wl * hl * r_l * phi;
                l1[surf[i]] += wl * (dtpsi * phi + p.m_ga * dtheta * ds[i] + hl * p.beta * r_l * phi);
                l2[bulk[i]] += wl * hk * r_k * phi;
                l2[surf[i]] += wl
                    * ((theta - fpsi - hk * p.alpha * r_k) * phi - p.delta * p.kappa * dpsi * ds[i]);
            }
        }
    }
    Ok((l1, l2))
}

/// [`Forcing`] from the weak residual of an exact solution.
pub struct ManufacturedForcing<'a> {
    pub exact: &'a ExactSolution,
    pub params: &'a ModelParams,
    pub f_om: &'a Potential,
    pub f_ga: &'a Potential,
    pub mesh: &'a Mesh,
}

impl Forcing for ManufacturedForcing<'_> {
    fn loads(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        residual_loads(self.exact, self.params, self.f_om, self.f_ga, self.mesh, t)
    }
}

/// L² norms and full H¹ norms of the errors of all four fields.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorNorms {
    pub l2_u: f64,
    pub h1_u: f64,
    pub l2_psi: f64,
    pub h1_psi: f64,
    pub l2_mu: f64,
    pub h1_mu: f64,
    pub l2_theta: f64,
    pub h1_theta: f64,
}

/// Squared L² error and squared gradient error of a bulk P1 field.
fn bulk_errors(mesh: &Mesh, nodal: &[f64], f: &ExactField, t: f64) -> (f64, f64) {
    let q = Quadrature::triangle_degree4();
    let (mut l2, mut semi) = (0.0, 0.0);
    for (k, tri) in mesh.triangles.iter().enumerate() {
        let v = tri.map(|i| mesh.vertices[i]);
        let area = mesh.triangle_area(k);
        let g = basis_gradients(&v);
        let mut gh = [0.0; 2];
        for i in 0..3 {
            gh[0] += nodal[tri[i]] * g[i][0];
            gh[1] += nodal[tri[i]] * g[i][1];
        }
        for (bary, w) in q.points.iter().zip(&q.weights) {
            let x = barycentric_point(&v, bary);
            let uh: f64 = (0..3).map(|i| nodal[tri[i]] * bary[i]).sum();
            let ge = (f.grad)(t, x);
            l2 += w * area * (uh - (f.value)(t, x)).powi(2);
            semi += w * area * ((gh[0] - ge[0]).powi(2) + (gh[1] - ge[1]).powi(2));
        }
    }
    (l2, semi)
}

/// Same on the boundary polyline, with the tangential derivative.
fn surface_errors(mesh: &Mesh, nodal: &[f64], f: &ExactField, t: f64) -> (f64, f64) {
    let q = Quadrature::edge_gauss3();
    let m = mesh.n_boundary_nodes();
    let (mut l2, mut semi) = (0.0, 0.0);
    for (e, &[a, b]) in mesh.boundary_edges.iter().enumerate() {
        let v = [mesh.vertices[a], mesh.vertices[b]];
        let d = [v[1][0] - v[0][0], v[1][1] - v[0][1]];
        let len = dot2(d, d).sqrt();
        let tan = [d[0] / len, d[1] / len];
        let (s0, s1) = (nodal[e], nodal[(e + 1) % m]);
        let dh = (s1 - s0) / len;
        for (bary, w) in q.points.iter().zip(&q.weights) {
            let x = barycentric_point(&v, bary);
            let vh = bary[0] * s0 + bary[1] * s1;
            l2 += w * len * (vh - (f.value)(t, x)).powi(2);
            semi += w * len * (dh - dot2((f.grad)(t, x), tan)).powi(2);
        }
    }
    (l2, semi)
}

/// Errors of `s` against `ex` at time `s.t`, by element quadrature on `Ω_h`, `Γ_h`.
pub fn error_norms(s: &State, ex: &ExactSolution, mesh: &Mesh) -> ErrorNorms {
    let pair = |(l2, semi): (f64, f64)| (l2.sqrt(), (l2 + semi).sqrt());
    let (l2_u, h1_u) = pair(bulk_errors(mesh, &s.u, &ex.u, s.t));
    let (l2_mu, h1_mu) = pair(bulk_errors(mesh, &s.mu, &ex.mu, s.t));
    let (l2_psi, h1_psi) = pair(surface_errors(mesh, &s.psi, &ex.psi, s.t));
    let (l2_theta, h1_theta) = pair(surface_errors(mesh, &s.theta, &ex.theta, s.t));
    ErrorNorms {
        l2_u,
        h1_u,
        l2_psi,
        h1_psi,
        l2_mu,
        h1_mu,
        l2_theta,
        h1_theta,
    }
}

/// Norms of `s − r` for two discrete states on the same mesh, through the
/// assembled mass and stiffness matrices.
pub fn discrete_error_norms(fem: &FemMatrices, s: &State, r: &State) -> Result<ErrorNorms> {
    let diff = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x - y).collect() };
    let norms = |m: &SparseMatrix, a: &SparseMatrix, d: &[f64]| -> Result<(f64, f64)> {
        let l2 = m.quadratic_form(d, d)?.max(0.0);
        let semi = a.quadratic_form(d, d)?.max(0.0);
        Ok((l2.sqrt(), (l2 + semi).sqrt()))
    };
    let (l2_u, h1_u) = norms(&fem.bulk_mass, &fem.bulk_stiffness, &diff(&s.u, &r.u))?;
    let (l2_mu, h1_mu) = norms(&fem.bulk_mass, &fem.bulk_stiffness, &diff(&s.mu, &r.mu))?;
    let (l2_psi, h1_psi) = norms(&fem.surface_mass, &fem.surface_stiffness, &diff(&s.psi, &r.psi))?;
    let (l2_theta, h1_theta) = norms(&fem.surface_mass, &fem.surface_stiffness, &diff(&s.theta, &r.theta))?;
    Ok(ErrorNorms {
        l2_u,
        h1_u,
        l2_psi,
        h1_psi,
        l2_mu,
        h1_mu,
        l2_theta,
        h1_theta,
    })
}

/// Maximum in time of the phase-field errors, `(τ Σ e²)^{1/2}` of the
/// chemical-potential errors. `per_step` holds the errors at the time levels
/// to include.
pub fn time_composite_errors(per_step: &[ErrorNorms], tau: f64) -> Result<ErrorNorms> {
    if per_step.is_empty() {
        return Err(Error::Other("empty trajectory".into()));
    }
    let mut c = ErrorNorms::default();
    for e in per_step {
        c.l2_u = c.l2_u.max(e.l2_u);
        c.h1_u = c.h1_u.max(e.h1_u);
        c.l2_psi = c.l2_psi.max(e.l2_psi);
        c.h1_psi = c.h1_psi.max(e.h1_psi);
        c.l2_mu += tau * e.l2_mu * e.l2_mu;
        c.h1_mu += tau * e.h1_mu * e.h1_mu;
        c.l2_theta += tau * e.l2_theta * e.l2_theta;
        c.h1_theta += tau * e.h1_theta * e.h1_theta;
    }
    c.l2_mu = c.l2_mu.sqrt();
    c.h1_mu = c.h1_mu.sqrt();
    c.l2_theta = c.l2_theta.sqrt();
    c.h1_theta = c.h1_theta.sqrt();
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_values() {
        let ex = default_exact();
        assert_eq!((ex.u.value)(0.0, [1.0, 1.0]), 1.0);
        assert_eq!((ex.theta.grad)(0.0, [2.0, 3.0]), [3.0, 2.0]);
        assert_eq!((ex.mu.dt)(0.0, [2.0, 3.0]), -6.0);
    }

    #[test]
    fn composite_rules() {
        let e = ErrorNorms {
            l2_u: 1.0,
            h1_u: 2.0,
            l2_psi: 3.0,
            h1_psi: 4.0,
            l2_mu: 0.5,
            h1_mu: 0.25,
            l2_theta: 1.0,
            h1_theta: 2.0,
        };
        let tau = 0.01;
        let one = time_composite_errors(&[e], tau).unwrap();
        assert_eq!(one.l2_u, 1.0);
        assert!((one.l2_mu - 0.5 * tau.sqrt()).abs() < 1e-15);
        let many = time_composite_errors(&vec![e; 16], tau).unwrap();
        assert!((many.h1_theta - 2.0 * (16.0 * tau).sqrt()).abs() < 1e-14);
        assert!(time_composite_errors(&[], tau).is_err());
    }
}
