//! Linear (P1) finite elements on the bulk triangulation and on the boundary
//! polyline, plus quadrature-based load vectors.

use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;
use crate::mesh::{Mesh, Point};

/// Degrees of freedom: one bulk DOF per mesh vertex, one surface DOF per
/// boundary vertex (ordered along the boundary loop).
#[derive(Clone, Debug, PartialEq)]
pub struct DofMap {
    pub n_bulk: usize,
    pub n_surf: usize,
    pub surf_to_bulk: Vec<usize>,
    /// Inverse of `surf_to_bulk`; `None` for interior vertices.
    pub bulk_to_surf: Vec<Option<usize>>,
}

impl DofMap {
    pub fn new(mesh: &Mesh) -> Self {
        let n_bulk = mesh.n_nodes();
        let surf_to_bulk = mesh.boundary_nodes.clone();
        let mut bulk_to_surf = vec![None; n_bulk];
        for (s, &b) in surf_to_bulk.iter().enumerate() {
            bulk_to_surf[b] = Some(s);
        }
        Self {
            n_bulk,
            n_surf: surf_to_bulk.len(),
            surf_to_bulk,
            bulk_to_surf,
        }
    }

    /// Interior bulk vertices in increasing order.
    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.n_bulk)
            .filter(|&i| self.bulk_to_surf[i].is_none())
            .collect()
    }

    /// Restriction of a bulk nodal vector to the boundary nodes.
    pub fn trace(&self, bulk: &[f64]) -> Vec<f64> {
        self.surf_to_bulk.iter().map(|&b| bulk[b]).collect()
    }
}

/// Quadrature rule in barycentric coordinates of an `N-1`-simplex; weights
/// sum to one and are scaled by the element measure at use.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadrature<const N: usize> {
    pub points: Vec<[f64; N]>,
    pub weights: Vec<f64>,
    /// Highest polynomial degree integrated exactly.
    pub degree: usize,
}

impl Quadrature<3> {
    /// Six-point rule on triangles, exact through degree four.
    pub fn triangle_degree4() -> Self {
        const A1: f64 = 0.445_948_490_915_965;
        const W1: f64 = 0.223_381_589_678_011;
        const A2: f64 = 0.091_576_213_509_771;
        const W2: f64 = 0.109_951_743_655_322;
        let perms = |a: f64| [[a, a, 1.0 - 2.0 * a], [a, 1.0 - 2.0 * a, a], [1.0 - 2.0 * a, a, a]];
        let mut points = Vec::with_capacity(6);
        points.extend(perms(A1));
        points.extend(perms(A2));
        Self {
            points,
            weights: vec![W1, W1, W1, W2, W2, W2],
            degree: 4,
        }
    }
}

impl Quadrature<2> {
    /// Three-point Gauss-Legendre rule on an edge, exact through degree five.
    pub fn edge_gauss3() -> Self {
        let d = 0.5 * (0.6f64).sqrt();
        let points = [0.5 - d, 0.5, 0.5 + d].map(|s| [1.0 - s, s]).to_vec();
        Self {
            points,
            weights: vec![5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0],
            degree: 5,
        }
    }
}

/// Scalar field of `(t, x)`.
pub type Field<'a> = &'a dyn Fn(f64, Point) -> f64;

fn tri_vertices(mesh: &Mesh, t: usize) -> [Point; 3] {
    mesh.triangles[t].map(|v| mesh.vertices[v])
}

fn checked_area(mesh: &Mesh, t: usize) -> Result<f64> {
    let a = mesh.triangle_area(t);
    if a > 0.0 {
        Ok(a)
    } else {
        Err(Error::DegenerateElement { index: t })
    }
}

fn checked_length(mesh: &Mesh, e: usize) -> Result<f64> {
    let [a, b] = mesh.boundary_edges[e];
    let (p, q) = (mesh.vertices[a], mesh.vertices[b]);
    let l = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
    if l > 0.0 {
        Ok(l)
    } else {
        Err(Error::DegenerateElement { index: e })
    }
}

pub fn barycentric_point<const N: usize>(vertices: &[Point; N], bary: &[f64; N]) -> Point {
    let mut x = [0.0, 0.0];
    for k in 0..N {
        x[0] += bary[k] * vertices[k][0];
        x[1] += bary[k] * vertices[k][1];
    }
    x
}

/// Constant gradients of the three barycentric basis functions.
pub fn basis_gradients(v: &[Point; 3]) -> [[f64; 2]; 3] {
    let two_area = (v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]);
    let mut g = [[0.0; 2]; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        g[i] = [
            (v[j][1] - v[k][1]) / two_area,
            (v[k][0] - v[j][0]) / two_area,
        ];
    }
    g
}

pub fn element_mass(area: f64) -> [[f64; 3]; 3] {
    let d = area / 6.0;
    let o = area / 12.0;
    [[d, o, o], [o, d, o], [o, o, d]]
}

pub fn element_stiffness(v: &[Point; 3]) -> [[f64; 3]; 3] {
    let area = crate::mesh::signed_area(v[0], v[1], v[2]);
    let g = basis_gradients(v);
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
        }
    }
    k
}

/// Bulk mass matrix `M_Ω`.
pub fn bulk_mass(mesh: &Mesh) -> Result<SparseMatrix> {
    let mut trip = Vec::with_capacity(9 * mesh.triangles.len());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let m = element_mass(checked_area(mesh, t)?);
        for i in 0..3 {
            for j in 0..3 {
                trip.push((tri[i], tri[j], m[i][j]));
            }
        }
    }
    SparseMatrix::from_triplets(mesh.n_nodes(), mesh.n_nodes(), &trip)
}

/// Bulk stiffness matrix `A_Ω`.
pub fn bulk_stiffness(mesh: &Mesh) -> Result<SparseMatrix> {
    let mut trip = Vec::with_capacity(9 * mesh.triangles.len());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        checked_area(mesh, t)?;
        let k = element_stiffness(&tri_vertices(mesh, t));
        for i in 0..3 {
            for j in 0..3 {
                trip.push((tri[i], tri[j], k[i][j]));
            }
        }
    }
    SparseMatrix::from_triplets(mesh.n_nodes(), mesh.n_nodes(), &trip)
}

fn surface_matrix(mesh: &Mesh, element: impl Fn(f64) -> [[f64; 2]; 2]) -> Result<SparseMatrix> {
    // boundary_nodes[k] starts boundary_edges[k], so edge k joins DOFs k and k+1
    let m = mesh.n_boundary_nodes();
    let mut trip = Vec::with_capacity(4 * m);
    for e in 0..mesh.boundary_edges.len() {
        let el = element(checked_length(mesh, e)?);
        let dofs = [e, (e + 1) % m];
        for i in 0..2 {
            for j in 0..2 {
                trip.push((dofs[i], dofs[j], el[i][j]));
            }
        }
    }
    SparseMatrix::from_triplets(m, m, &trip)
}

/// Surface mass matrix `M_Γ` on the boundary polyline.
pub fn surface_mass(mesh: &Mesh) -> Result<SparseMatrix> {
    surface_matrix(mesh, |l| [[l / 3.0, l / 6.0], [l / 6.0, l / 3.0]])
}

/// Surface stiffness matrix `A_Γ`; the tangential gradient on an edge is the
/// derivative along the edge.
pub fn surface_stiffness(mesh: &Mesh) -> Result<SparseMatrix> {
    surface_matrix(mesh, |l| [[1.0 / l, -1.0 / l], [-1.0 / l, 1.0 / l]])
}

/// Trace matrix `T` (`n_surf × n_bulk`) selecting the boundary values.
pub fn trace_matrix(dofs: &DofMap) -> SparseMatrix {
    let trip: Vec<_> = dofs
        .surf_to_bulk
        .iter()
        .enumerate()
        .map(|(s, &b)| (s, b, 1.0))
        .collect();
    SparseMatrix::from_triplets(dofs.n_surf, dofs.n_bulk, &trip).expect("indices in range")
}

/// `b_i = ∫_{Ω_h} f(t, ·) φ_i` with the degree-4 triangle rule.
pub fn bulk_load(mesh: &Mesh, f: Field<'_>, t: f64) -> Vec<f64> {
    let quad = Quadrature::triangle_degree4();
    let mut b = vec![0.0; mesh.n_nodes()];
    for (k, tri) in mesh.triangles.iter().enumerate() {
        let v = tri_vertices(mesh, k);
        let area = mesh.triangle_area(k);
        for (bary, w) in quad.points.iter().zip(&quad.weights) {
            let fx = f(t, barycentric_point(&v, bary)) * w * area;
            for i in 0..3 {
                b[tri[i]] += fx * bary[i];
            }
        }
    }
    b
}

/// `b_s = ∫_{Γ_h} g(t, ·) φ_s` with three-point Gauss per boundary edge.
pub fn surface_load(mesh: &Mesh, g: Field<'_>, t: f64) -> Vec<f64> {
    let quad = Quadrature::edge_gauss3();
    let m = mesh.n_boundary_nodes();
    let mut b = vec![0.0; m];
    for (e, &[a, c]) in mesh.boundary_edges.iter().enumerate() {
        let v = [mesh.vertices[a], mesh.vertices[c]];
        let len = ((v[0][0] - v[1][0]).powi(2) + (v[0][1] - v[1][1]).powi(2)).sqrt();
        let dofs = [e, (e + 1) % m];
        for (bary, w) in quad.points.iter().zip(&quad.weights) {
            let gx = g(t, barycentric_point(&v, bary)) * w * len;
            for i in 0..2 {
                b[dofs[i]] += gx * bary[i];
            }
        }
    }
    b
}

/// All matrices of the bulk-surface discretization of one mesh.
#[derive(Clone, Debug)]
pub struct FemMatrices {
    pub dofs: DofMap,
    pub bulk_mass: SparseMatrix,
    pub bulk_stiffness: SparseMatrix,
    pub surface_mass: SparseMatrix,
    pub surface_stiffness: SparseMatrix,
    pub trace: SparseMatrix,
    /// `M_Ω 1` (lumped bulk masses).
    pub bulk_lumped: Vec<f64>,
    /// `M_Γ 1` (lumped surface masses).
    pub surface_lumped: Vec<f64>,
}

impl FemMatrices {
    pub fn assemble(mesh: &Mesh) -> Result<Self> {
        let dofs = DofMap::new(mesh);
        let bulk_mass = bulk_mass(mesh)?;
        let surface_mass = surface_mass(mesh)?;
        let bulk_lumped = bulk_mass.row_sums();
        let surface_lumped = surface_mass.row_sums();
        Ok(Self {
            trace: trace_matrix(&dofs),
            bulk_stiffness: bulk_stiffness(mesh)?,
            surface_stiffness: surface_stiffness(mesh)?,
            dofs,
            bulk_mass,
            surface_mass,
            bulk_lumped,
            surface_lumped,
        })
    }

    pub fn n_bulk(&self) -> usize {
        self.dofs.n_bulk
    }

    pub fn n_surf(&self) -> usize {
        self.dofs.n_surf
    }

    /// `|Ω_h|`.
    pub fn bulk_measure(&self) -> f64 {
        self.bulk_lumped.iter().sum()
    }

    /// `|Γ_h|`.
    pub fn surface_measure(&self) -> f64 {
        self.surface_lumped.iter().sum()
    }
}
