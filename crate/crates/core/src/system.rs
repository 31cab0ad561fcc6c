//! Coupled bulk-surface operators, model parameters, constraint elimination,
//! and the mass and energy monitors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::FemMatrices;
use crate::linalg::{block_assemble_sized, SparseMatrix, WeightedBlock};
use crate::potentials::Potential;

/// Relaxation parameter in `[0, ∞]`; infinity is a distinct value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RelaxationRepr", into = "RelaxationRepr")]
pub enum Relaxation {
    Finite(f64),
    Infinite,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RelaxationRepr {
    Number(f64),
    Text(String),
}

impl TryFrom<RelaxationRepr> for Relaxation {
    type Error = String;

    fn try_from(r: RelaxationRepr) -> std::result::Result<Self, String> {
        match r {
            RelaxationRepr::Number(x) => Relaxation::new(x).map_err(|e| e.to_string()),
            RelaxationRepr::Text(s) => match s.as_str() {
                "inf" | "infinity" | "Infinity" => Ok(Relaxation::Infinite),
                _ => Err(format!("expected a non-negative number or \"inf\", got \"{s}\"")),
            },
        }
    }
}

impl From<Relaxation> for RelaxationRepr {
    fn from(r: Relaxation) -> Self {
        match r {
            Relaxation::Finite(x) => RelaxationRepr::Number(x),
            Relaxation::Infinite => RelaxationRepr::Text("inf".into()),
        }
    }
}

impl Relaxation {
    /// `f64::INFINITY` maps to [`Relaxation::Infinite`]; negatives and NaN are rejected.
    pub fn new(x: f64) -> Result<Self> {
        if x == f64::INFINITY {
            Ok(Self::Infinite)
        } else if x >= 0.0 && x.is_finite() {
            Ok(Self::Finite(x))
        } else {
            Err(Error::InvalidParameter(format!("relaxation parameter must lie in [0, inf], got {x}")))
        }
    }

    pub fn is_zero(self) -> bool {
        self == Self::Finite(0.0)
    }

    pub fn is_infinite(self) -> bool {
        self == Self::Infinite
    }

    /// Finite and strictly positive.
    pub fn is_positive_finite(self) -> bool {
        matches!(self, Self::Finite(x) if x > 0.0)
    }
}

impl std::fmt::Display for Relaxation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Finite(x) => write!(f, "{x}"),
            Self::Infinite => write!(f, "inf"),
        }
    }
}

/// Coupling weight `𝕙(J)`: `1/J` for finite positive `J`, zero at `0` and `∞`.
pub fn h_of(j: Relaxation) -> Result<f64> {
    match j {
        Relaxation::Infinite => Ok(0.0),
        Relaxation::Finite(x) if x == 0.0 => Ok(0.0),
        Relaxation::Finite(x) if x > 0.0 && x.is_finite() => Ok(1.0 / x),
        Relaxation::Finite(x) => Err(Error::InvalidParameter(format!(
            "relaxation parameter must be non-negative, got {x}"
        ))),
    }
}

fn default_alpha2() -> f64 {
    0.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    #[serde(rename = "K")]
    pub k: Relaxation,
    #[serde(rename = "L")]
    pub l: Relaxation,
    pub alpha: f64,
    pub beta: f64,
    /// Affine offset in the transmission condition `αψ + α₂ − u`.
    #[serde(default = "default_alpha2")]
    pub alpha2: f64,
    pub eps: f64,
    pub delta: f64,
    pub kappa: f64,
    pub m_om: f64,
    pub m_ga: f64,
}

impl ModelParams {
    /// All coefficients set to one and no affine offset.
    pub fn unit(k: Relaxation, l: Relaxation) -> Self {
        Self {
            k,
            l,
            alpha: 1.0,
            beta: 1.0,
            alpha2: 0.0,
            eps: 1.0,
            delta: 1.0,
            kappa: 1.0,
            m_om: 1.0,
            m_ga: 1.0,
        }
    }

    /// Mesh-independent checks.
    pub fn validate(&self) -> Result<()> {
        h_of(self.k)?;
        h_of(self.l)?;
        for (name, v) in [
            ("eps", self.eps),
            ("delta", self.delta),
            ("kappa", self.kappa),
            ("m_om", self.m_om),
            ("m_ga", self.m_ga),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("alpha2", self.alpha2)] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite, got {v}")));
            }
        }
        if self.k.is_zero() && self.alpha == 0.0 {
            return Err(Error::InvalidParameter(
                "K = 0 with alpha = 0 degenerates the constrained space".into(),
            ));
        }
        if self.k.is_positive_finite() && self.l.is_infinite() && self.alpha == 0.0 {
            return Err(Error::InvalidParameter(
                "K in (0, inf) with L = inf requires alpha != 0".into(),
            ));
        }
        Ok(())
    }

    /// `αβ|Ω_h| + |Γ_h| ≠ 0`, required when `K < ∞` and `0 < L < ∞`.
    pub fn check_compatibility(&self, bulk_measure: f64, surface_measure: f64) -> Result<()> {
        if self.k.is_infinite() || !self.l.is_positive_finite() {
            return Ok(());
        }
        let ab = self.alpha * self.beta * bulk_measure;
        let value = ab + surface_measure;
        if value.abs() <= 1e-10 * (ab.abs() + surface_measure.abs()) {
            return Err(Error::IllPosed(format!(
                "alpha*beta*|Omega| + |Gamma| = {value:e} vanishes (alpha = {}, beta = {})",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }

    /// Why the pair `(K, L)` lies outside the region covered by the
    /// convergence theory, if it does. Such runs are still carried out.
    pub fn region_note(&self) -> Option<&'static str> {
        if self.k.is_infinite() {
            Some("K = inf is outside the proven convergence region")
        } else if self.l.is_infinite() && self.k.is_zero() {
            Some("L = inf with K = 0 is outside the proven convergence region")
        } else if self.l.is_zero() && !self.k.is_zero() {
            Some("L = 0 with K > 0 is outside the proven convergence region")
        } else {
            None
        }
    }

    pub fn in_proven_region(&self) -> bool {
        self.region_note().is_none()
    }
}

/// `𝕙(J) ∫_{Γ_h} (λψ − φ)(λξ − ζ)` as an `(N+M)×(N+M)` block matrix.
pub fn robin_form(fem: &FemMatrices, j: Relaxation, lambda: f64) -> Result<SparseMatrix> {
    let h = h_of(j)?;
    let (n, m) = (fem.n_bulk(), fem.n_surf());
    if h == 0.0 {
        return Ok(SparseMatrix::zeros(n + m, n + m));
    }
    let tt = fem.trace.transpose();
    let tmt = SparseMatrix::triple_product(&fem.trace, &fem.surface_mass, &fem.trace)?;
    let tm = tt.matmul(&fem.surface_mass)?;
    let mt = fem.surface_mass.matmul(&fem.trace)?;
    block_assemble_sized(
        &[n, m],
        &[n, m],
        &[
            vec![Some(WeightedBlock::new(&tmt, h)), Some(WeightedBlock::new(&tm, -h * lambda))],
            vec![
                Some(WeightedBlock::new(&mt, -h * lambda)),
                Some(WeightedBlock::new(&fem.surface_mass, h * lambda * lambda)),
            ],
        ],
    )
}

/// `a_h^{J,λ}` with gradient weights `w_b` (bulk) and `w_s` (surface).
pub fn a_form(fem: &FemMatrices, j: Relaxation, lambda: f64, w_b: f64, w_s: f64) -> Result<SparseMatrix> {
    let (n, m) = (fem.n_bulk(), fem.n_surf());
    let grad = block_assemble_sized(
        &[n, m],
        &[n, m],
        &[
            vec![Some(WeightedBlock::new(&fem.bulk_stiffness, w_b)), None],
            vec![None, Some(WeightedBlock::new(&fem.surface_stiffness, w_s))],
        ],
    )?;
    grad.add(&robin_form(fem, j, lambda)?)
}

/// `diag(M_Ω, M_Γ)`.
pub fn block_mass(fem: &FemMatrices) -> Result<SparseMatrix> {
    block_assemble_sized(
        &[fem.n_bulk(), fem.n_surf()],
        &[fem.n_bulk(), fem.n_surf()],
        &[
            vec![Some(WeightedBlock::unit(&fem.bulk_mass)), None],
            vec![None, Some(WeightedBlock::unit(&fem.surface_mass))],
        ],
    )
}

/// Affine parametrization `(u, ψ) = P·masters + c` of the pairs with
/// `u|_Γ = λψ + offset`.
///
/// Masters are the interior bulk nodes in increasing order followed by all
/// surface nodes. For `λ = 0` the bulk boundary values are pinned to the
/// offset and `ψ` stays free.
pub fn constraint_prolongation(
    dofs: &crate::fem::DofMap,
    lambda: f64,
    offset: f64,
) -> Result<(SparseMatrix, Vec<f64>)> {
    if !lambda.is_finite() || !offset.is_finite() {
        return Err(Error::InvalidParameter("constraint coefficients must be finite".into()));
    }
    let (n, m) = (dofs.n_bulk, dofs.n_surf);
    let interior = dofs.interior_nodes();
    let n_int = interior.len();
    let mut master_of = vec![usize::MAX; n];
    for (k, &i) in interior.iter().enumerate() {
        master_of[i] = k;
    }
    let mut trip = Vec::with_capacity(n + m);
    let mut c = vec![0.0; n + m];
    for i in 0..n {
        match dofs.bulk_to_surf[i] {
            None => trip.push((i, master_of[i], 1.0)),
            Some(s) => {
                if lambda != 0.0 {
                    trip.push((i, n_int + s, lambda));
                }
                c[i] = offset;
            }
        }
    }
    for s in 0..m {
        trip.push((n + s, n_int + s, 1.0));
    }
    Ok((SparseMatrix::from_triplets(n + m, n_int + m, &trip)?, c))
}

/// Matrices of the discrete forms for one mesh and parameter set.
#[derive(Clone, Debug)]
pub struct CoupledOperator {
    pub fem: FemMatrices,
    pub params: ModelParams,
    /// `diag(M_Ω, M_Γ)`.
    pub mass: SparseMatrix,
    /// `a_h^{K,α}` with weights `(ε, δκ)`.
    pub a_k: SparseMatrix,
    /// `a_h^{L,β}` with weights `(m_Ω, m_Γ)`.
    pub a_l: SparseMatrix,
    /// Parametrization of `V_h^{K,α}` (identity unless `K = 0`).
    pub p_k: SparseMatrix,
    pub c_k: Vec<f64>,
    /// Parametrization of `V_h^{L,β}` (identity unless `L = 0`).
    pub p_l: SparseMatrix,
    /// Load from the affine offset when `K ∈ (0, ∞)`.
    pub offset_load: Vec<f64>,
}

impl CoupledOperator {
    pub fn new(fem: FemMatrices, params: ModelParams) -> Result<Self> {
        params.validate()?;
        let p = &params;
        let (n, m) = (fem.n_bulk(), fem.n_surf());
        let mass = block_mass(&fem)?;
        let a_k = a_form(&fem, p.k, p.alpha, p.eps, p.delta * p.kappa)?;
        let a_l = a_form(&fem, p.l, p.beta, p.m_om, p.m_ga)?;
        let (p_k, c_k) = if p.k.is_zero() {
            constraint_prolongation(&fem.dofs, p.alpha, p.alpha2)?
        } else {
            (SparseMatrix::identity(n + m), vec![0.0; n + m])
        };
        let p_l = if p.l.is_zero() {
            constraint_prolongation(&fem.dofs, p.beta, 0.0)?.0
        } else {
            SparseMatrix::identity(n + m)
        };
        let mut offset_load = vec![0.0; n + m];
        let hk = h_of(p.k)?;
        if hk != 0.0 && p.alpha2 != 0.0 {
            // ∫ h(K) α₂ (αϑ − η)
            let w = hk * p.alpha2;
            let tm1 = fem.trace.spmv_transpose(&fem.surface_lumped)?;
            for i in 0..n {
                offset_load[i] = -w * tm1[i];
            }
            for s in 0..m {
                offset_load[n + s] = w * p.alpha * fem.surface_lumped[s];
            }
        }
        Ok(Self {
            fem,
            params,
            mass,
            a_k,
            a_l,
            p_k,
            c_k,
            p_l,
            offset_load,
        })
    }

    pub fn n_bulk(&self) -> usize {
        self.fem.n_bulk()
    }

    pub fn n_surf(&self) -> usize {
        self.fem.n_surf()
    }

    /// Length of a full `(u, ψ)` or `(μ, θ)` vector.
    pub fn n_pair(&self) -> usize {
        self.n_bulk() + self.n_surf()
    }
}

/// Nodal fields at one time level.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub t: f64,
    pub u: Vec<f64>,
    pub psi: Vec<f64>,
    pub mu: Vec<f64>,
    pub theta: Vec<f64>,
}

impl State {
    pub fn zeros(n_bulk: usize, n_surf: usize, t: f64) -> Self {
        Self {
            t,
            u: vec![0.0; n_bulk],
            psi: vec![0.0; n_surf],
            mu: vec![0.0; n_bulk],
            theta: vec![0.0; n_surf],
        }
    }

    /// Builds a state from stacked `(u, ψ)` and `(μ, θ)` vectors.
    pub fn from_pairs(t: f64, n_bulk: usize, phase: &[f64], chem: &[f64]) -> Self {
        Self {
            t,
            u: phase[..n_bulk].to_vec(),
            psi: phase[n_bulk..].to_vec(),
            mu: chem[..n_bulk].to_vec(),
            theta: chem[n_bulk..].to_vec(),
        }
    }

    /// Stacked `(u, ψ)`.
    pub fn phase(&self) -> Vec<f64> {
        [self.u.as_slice(), self.psi.as_slice()].concat()
    }

    /// Stacked `(μ, θ)`.
    pub fn chem(&self) -> Vec<f64> {
        [self.mu.as_slice(), self.theta.as_slice()].concat()
    }

    /// Largest violation of the constraints active for `p`:
    /// `u|_Γ = αψ + α₂` if `K = 0`, `μ|_Γ = βθ` if `L = 0`.
    pub fn constraint_defect(&self, dofs: &crate::fem::DofMap, p: &ModelParams) -> f64 {
        let mut d = 0.0f64;
        for (s, &b) in dofs.surf_to_bulk.iter().enumerate() {
            if p.k.is_zero() {
                d = d.max((self.u[b] - p.alpha * self.psi[s] - p.alpha2).abs());
            }
            if p.l.is_zero() {
                d = d.max((self.mu[b] - p.beta * self.theta[s]).abs());
            }
        }
        d
    }
}

/// `∫_{Ω_h} u`.
pub fn bulk_mass_of(fem: &FemMatrices, u: &[f64]) -> f64 {
    crate::linalg::dot(&fem.bulk_lumped, u)
}

/// `∫_{Γ_h} ψ`.
pub fn surface_mass_of(fem: &FemMatrices, psi: &[f64]) -> f64 {
    crate::linalg::dot(&fem.surface_lumped, psi)
}

/// `β ∫_{Ω_h} u + ∫_{Γ_h} ψ`.
pub fn combined_mass(fem: &FemMatrices, s: &State, beta: f64) -> f64 {
    beta * bulk_mass_of(fem, &s.u) + surface_mass_of(fem, &s.psi)
}

/// Ginzburg-Landau energy `E_K` with mass-lumped potential integrals. The
/// Robin penalty uses the residual `αψ + α₂ − u` of the affine condition.
pub fn energy(fem: &FemMatrices, p: &ModelParams, s: &State, f_om: &Potential, f_ga: &Potential) -> Result<f64> {
    let grad_b = fem.bulk_stiffness.quadratic_form(&s.u, &s.u)?;
    let grad_s = fem.surface_stiffness.quadratic_form(&s.psi, &s.psi)?;
    let pot_b: f64 = fem.bulk_lumped.iter().zip(&s.u).map(|(w, &u)| w * f_om.value(u)).sum();
    let pot_s: f64 = fem.surface_lumped.iter().zip(&s.psi).map(|(w, &v)| w * f_ga.value(v)).sum();
    let mut e = 0.5 * p.eps * grad_b + pot_b / p.eps + 0.5 * p.delta * p.kappa * grad_s + pot_s / p.delta;
    let hk = h_of(p.k)?;
    if hk != 0.0 {
        let tu = fem.trace.spmv(&s.u)?;
        let r: Vec<f64> = s.psi.iter().zip(&tu).map(|(&v, &t)| p.alpha * v + p.alpha2 - t).collect();
        e += 0.5 * hk * fem.surface_mass.quadratic_form(&r, &r)?;
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::unit_square_mesh;
    use crate::potentials::double_well;

    fn square(n: usize) -> FemMatrices {
        FemMatrices::assemble(&unit_square_mesh(n).unwrap()).unwrap()
    }

    #[test]
    fn h_values() {
        assert_eq!(h_of(Relaxation::Finite(0.01)).unwrap(), 100.0);
        assert_eq!(h_of(Relaxation::Infinite).unwrap(), 0.0);
        assert_eq!(h_of(Relaxation::Finite(0.0)).unwrap(), 0.0);
        assert!(h_of(Relaxation::Finite(-1.0)).is_err());
        assert!(Relaxation::new(-1.0).is_err());
        assert_eq!(Relaxation::new(f64::INFINITY).unwrap(), Relaxation::Infinite);
    }

    #[test]
    fn relaxation_json() {
        let r: Relaxation = serde_json::from_str("\"inf\"").unwrap();
        assert_eq!(r, Relaxation::Infinite);
        let r: Relaxation = serde_json::from_str("0.5").unwrap();
        assert_eq!(r, Relaxation::Finite(0.5));
        assert!(serde_json::from_str::<Relaxation>("-2").is_err());
        assert_eq!(serde_json::to_string(&Relaxation::Infinite).unwrap(), "\"inf\"");
    }

    #[test]
    fn params_json_rejects_unknown_keys() {
        let text = r#"{"K":0,"L":"inf","alpha":1,"beta":1,"eps":1,"delta":1,"kappa":1,"m_om":1,"m_ga":1}"#;
        let p: ModelParams = serde_json::from_str(text).unwrap();
        assert_eq!(p.alpha2, 0.0);
        assert!(p.l.is_infinite());
        let bad = text.replace("\"m_ga\":1", "\"m_ga\":1,\"gamma\":2");
        assert!(serde_json::from_str::<ModelParams>(&bad).is_err());
    }

    #[test]
    fn parameter_rules() {
        let mut p = ModelParams::unit(Relaxation::Finite(0.0), Relaxation::Finite(1.0));
        p.alpha = 0.0;
        assert!(p.validate().is_err());
        let mut p = ModelParams::unit(Relaxation::Finite(1.0), Relaxation::Infinite);
        p.alpha = 0.0;
        assert!(p.validate().is_err());
        let mut p = ModelParams::unit(Relaxation::Finite(0.0), Relaxation::Finite(1.0));
        p.eps = 0.0;
        assert!(p.validate().is_err());
        let p = ModelParams::unit(Relaxation::Finite(0.0), Relaxation::Finite(1.0));
        assert!(p.check_compatibility(1.0, 4.0).is_ok());
        let mut q = p.clone();
        q.beta = -4.0;
        assert!(matches!(q.check_compatibility(1.0, 4.0), Err(Error::IllPosed(_))));
    }

    #[test]
    fn region_flags() {
        use Relaxation::{Finite, Infinite};
        assert!(ModelParams::unit(Finite(0.0), Finite(100.0)).in_proven_region());
        assert!(ModelParams::unit(Finite(10.0), Infinite).in_proven_region());
        assert!(ModelParams::unit(Finite(0.0), Finite(0.0)).in_proven_region());
        assert!(!ModelParams::unit(Infinite, Finite(1.0)).in_proven_region());
        assert!(!ModelParams::unit(Finite(0.0), Infinite).in_proven_region());
    }

    #[test]
    fn robin_vanishes_at_infinity_and_on_compatible_pairs() {
        let fem = square(3);
        assert_eq!(robin_form(&fem, Relaxation::Infinite, 1.0).unwrap().nnz(), 0);
        let r = robin_form(&fem, Relaxation::Finite(0.5), 2.0).unwrap();
        let c = 0.7;
        let mut x = vec![2.0 * c; fem.n_bulk()];
        x.extend(vec![c; fem.n_surf()]);
        assert!(r.quadratic_form(&x, &x).unwrap().abs() < 1e-13);
    }

    #[test]
    fn kernel_pair() {
        let fem = square(4);
        for (j, lambda) in [(Relaxation::Finite(0.3), -1.5), (Relaxation::Infinite, 2.0), (Relaxation::Finite(0.0), 1.0)] {
            let a = a_form(&fem, j, lambda, 0.7, 1.3).unwrap();
            let mut x = vec![lambda; fem.n_bulk()];
            x.extend(vec![1.0; fem.n_surf()]);
            for v in a.spmv(&x).unwrap() {
                assert!(v.abs() < 1e-12);
            }
            assert!(a.max_asymmetry().unwrap() < 1e-15);
        }
    }

    #[test]
    fn prolongation_reproduces_constraint() {
        let fem = square(3);
        let (p, c) = constraint_prolongation(&fem.dofs, 1.0, 0.0).unwrap();
        let n_int = fem.dofs.interior_nodes().len();
        assert_eq!(p.ncols(), n_int + fem.n_surf());
        let masters: Vec<f64> = (0..p.ncols()).map(|i| (i as f64).sin()).collect();
        let (p2, c2) = constraint_prolongation(&fem.dofs, -0.5, 0.25).unwrap();
        for (p, c, lam, off) in [(&p, &c, 1.0, 0.0), (&p2, &c2, -0.5, 0.25)] {
            let mut x = p.spmv(&masters).unwrap();
            for (xi, ci) in x.iter_mut().zip(c) {
                *xi += ci;
            }
            let n = fem.n_bulk();
            for (s, &b) in fem.dofs.surf_to_bulk.iter().enumerate() {
                assert_eq!(x[b], lam * x[n + s] + off);
            }
        }
        let (p0, c0) = constraint_prolongation(&fem.dofs, 0.0, 0.3).unwrap();
        let x = p0.spmv(&masters).unwrap();
        for &b in &fem.dofs.surf_to_bulk {
            assert_eq!(x[b] + c0[b], 0.3);
        }
    }

    #[test]
    fn combined_mass_values() {
        let fem = square(5);
        let s = State {
            t: 0.0,
            u: vec![1.0; fem.n_bulk()],
            psi: vec![1.0; fem.n_surf()],
            mu: vec![],
            theta: vec![],
        };
        assert!((combined_mass(&fem, &s, 1.0) - 5.0).abs() < 1e-13);
        assert!((combined_mass(&fem, &s, 0.0) - 4.0).abs() < 1e-13);
        let mesh = unit_square_mesh(5).unwrap();
        let x1: Vec<f64> = mesh.vertices.iter().map(|p| p[0]).collect();
        assert!((bulk_mass_of(&fem, &x1) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn energy_of_constants() {
        let fem = square(1);
        let w = double_well(0.25);
        let mut p = ModelParams::unit(Relaxation::Finite(1.0), Relaxation::Finite(1.0));
        let ones = State {
            t: 0.0,
            u: vec![1.0; 4],
            psi: vec![1.0; 4],
            mu: vec![0.0; 4],
            theta: vec![0.0; 4],
        };
        assert_eq!(energy(&fem, &p, &ones, &w, &w).unwrap(), 0.0);
        p.k = Relaxation::Infinite;
        let zeros = State::zeros(4, 4, 0.0);
        assert!((energy(&fem, &p, &zeros, &w, &w).unwrap() - 1.25).abs() < 1e-14);
    }
}
