//! Initial data for the dynamic experiments and a few diagnostics on them.

use bscahn_core::fem::FemMatrices;
use bscahn_core::mesh::{Mesh, Point};
use bscahn_core::system::ModelParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::DropletSpec;

/// Root of `(r₀z₀/(s+r₀))² + (z₁/(s+1))² = 1` by bisection.
fn ellipse_root(r0: f64, z0: f64, z1: f64, g: f64) -> f64 {
    let n0 = r0 * z0;
    let mut s0 = z1 - 1.0;
    let mut s1 = if g < 0.0 { 0.0 } else { n0.hypot(z1) - 1.0 };
    let mut s = 0.0;
    for _ in 0..1100 {
        s = 0.5 * (s0 + s1);
        if s == s0 || s == s1 {
            break;
        }
        let g = (n0 / (s + r0)).powi(2) + (z1 / (s + 1.0)).powi(2) - 1.0;
        if g > 0.0 {
            s0 = s;
        } else if g < 0.0 {
            s1 = s;
        } else {
            break;
        }
    }
    s
}

/// Distance from `(y0, y1)`, both non-negative, to the ellipse with semi-axes
/// `e0 >= e1 > 0` centred at the origin.
fn first_quadrant_distance(e0: f64, e1: f64, y0: f64, y1: f64) -> f64 {
    if y1 > 0.0 {
        if y0 > 0.0 {
            let (z0, z1) = (y0 / e0, y1 / e1);
            let g = z0 * z0 + z1 * z1 - 1.0;
            if g == 0.0 {
                return 0.0;
            }
            let r0 = (e0 / e1).powi(2);
            let s = ellipse_root(r0, z0, z1, g);
            let x0 = r0 * y0 / (s + r0);
            let x1 = y1 / (s + 1.0);
            (x0 - y0).hypot(x1 - y1)
        } else {
            (y1 - e1).abs()
        }
    } else {
        let numer = e0 * y0;
        let denom = e0 * e0 - e1 * e1;
        if numer < denom {
            let xd = numer / denom;
            let x0 = e0 * xd;
            let x1 = e1 * (1.0 - xd * xd).max(0.0).sqrt();
            (x0 - y0).hypot(x1)
        } else {
            (y0 - e0).abs()
        }
    }
}

/// Signed distance to an axis-aligned ellipse, negative inside.
pub fn ellipse_sdf(center: Point, semi_axes: [f64; 2], x: Point) -> f64 {
    let (dx, dy) = ((x[0] - center[0]).abs(), (x[1] - center[1]).abs());
    let [a, b] = semi_axes;
    let d = if a >= b {
        first_quadrant_distance(a, b, dx, dy)
    } else {
        first_quadrant_distance(b, a, dy, dx)
    };
    if (dx / a).powi(2) + (dy / b).powi(2) < 1.0 {
        -d
    } else {
        d
    }
}

/// Surface datum from the transmission relation `αψ + α₂ = u` on the boundary.
pub fn affine_trace(mesh: &Mesh, u: &[f64], p: &ModelParams) -> Vec<f64> {
    let alpha = if p.alpha == 0.0 { 1.0 } else { p.alpha };
    mesh.boundary_nodes
        .iter()
        .map(|&v| (u[v] - p.alpha2) / alpha)
        .collect()
}

/// `u⁰ = tanh(−d/(√2 ε))` with `d` the signed distance to the droplet
/// boundary, and the matching surface datum.
pub fn droplet_data(mesh: &Mesh, drop: &DropletSpec, p: &ModelParams) -> (Vec<f64>, Vec<f64>) {
    let w = std::f64::consts::SQRT_2 * p.eps;
    let u: Vec<f64> = mesh
        .vertices
        .iter()
        .map(|&x| (-ellipse_sdf(drop.center, drop.semi_axes, x) / w).tanh())
        .collect();
    let psi = affine_trace(mesh, &u, p);
    (u, psi)
}

/// Independent uniform nodal values in `[lo, hi)` from a ChaCha8 stream.
pub fn random_data(mesh: &Mesh, seed: u64, range: [f64; 2], p: &ModelParams) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: Vec<f64> = (0..mesh.n_nodes()).map(|_| rng.random_range(range[0]..range[1])).collect();
    let psi = affine_trace(mesh, &u, p);
    (u, psi)
}

/// `∫_Ω u / |Ω|` with the consistent mass matrix.
pub fn bulk_mean(fem: &FemMatrices, u: &[f64]) -> f64 {
    let m = fem.bulk_mass.spmv(u).expect("bulk field length");
    m.iter().sum::<f64>() / fem.bulk_measure()
}

/// `∫_Γ (ψ − ψ̄)² / |Γ|`.
pub fn trace_variance(fem: &FemMatrices, psi: &[f64]) -> f64 {
    let len = fem.surface_measure();
    let mean = fem.surface_mass.spmv(psi).expect("surface field length").iter().sum::<f64>() / len;
    let d: Vec<f64> = psi.iter().map(|v| v - mean).collect();
    fem.surface_mass.quadratic_form(&d, &d).expect("surface field length") / len
}

/// Length of boundary on which the piecewise linear trace of `u` is positive.
pub fn contact_length(mesh: &Mesh, u: &[f64]) -> f64 {
    mesh.boundary_edges
        .iter()
        .map(|&[a, b]| {
            let (p, q) = (mesh.vertices[a], mesh.vertices[b]);
            let len = (p[0] - q[0]).hypot(p[1] - q[1]);
            let (ua, ub) = (u[a], u[b]);
            match (ua > 0.0, ub > 0.0) {
                (true, true) => len,
                (false, false) => 0.0,
                (true, false) => len * ua / (ua - ub),
                (false, true) => len * ub / (ub - ua),
            }
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use bscahn_core::mesh::unit_square_mesh;
    use bscahn_core::system::Relaxation;

    #[test]
    fn circle_distance() {
        for x in [[0.0, 0.0], [0.3, 0.4], [2.0, -1.0], [-0.1, 0.05]] {
            let d = ellipse_sdf([0.0, 0.0], [1.0, 1.0], x);
            assert!((d - (x[0].hypot(x[1]) - 1.0)).abs() < 1e-12, "{x:?}");
        }
    }

    #[test]
    fn ellipse_distance_on_axes() {
        let (c, ax) = ([0.1, 0.5], [0.3, 0.2]);
        assert!((ellipse_sdf(c, ax, [0.6, 0.5]) - 0.2).abs() < 1e-14);
        assert!((ellipse_sdf(c, ax, [0.1, 0.9]) - 0.2).abs() < 1e-14);
        assert!((ellipse_sdf(c, ax, [0.1, 0.5]) + 0.2).abs() < 1e-14);
        // tall ellipse: nearest point from the centre is at the end of the minor axis
        assert!((ellipse_sdf([0.0, 0.0], [0.1, 0.4], [0.0, 0.0]) + 0.1).abs() < 1e-14);
    }

    #[test]
    fn ellipse_distance_is_attained() {
        // distance to a dense sample of the boundary curve
        let ax = [0.3407, 0.1835];
        for x in [[0.5, 0.4], [0.05, 0.05], [-0.2, 0.3], [0.12, -0.02], [0.3, 0.1]] {
            let brute = (0..200_000)
                .map(|k| {
                    let t = k as f64 / 200_000.0 * std::f64::consts::TAU;
                    (ax[0] * t.cos() - x[0]).hypot(ax[1] * t.sin() - x[1])
                })
                .fold(f64::INFINITY, f64::min);
            assert!((ellipse_sdf([0.0, 0.0], ax, x).abs() - brute).abs() < 1e-8, "{x:?}");
        }
    }

    #[test]
    fn contact_length_of_half_positive_boundary() {
        let m = unit_square_mesh(8).unwrap();
        let u: Vec<f64> = m.vertices.iter().map(|p| p[0] - 0.5).collect();
        // positive on x > 1/2: half of the top and bottom sides plus the right side
        assert!((contact_length(&m, &u) - 2.0).abs() < 1e-12);
        assert_eq!(contact_length(&m, &vec![-1.0; m.n_nodes()]), 0.0);
    }

    #[test]
    fn random_data_is_reproducible() {
        let m = unit_square_mesh(4).unwrap();
        let mut p = ModelParams::unit(Relaxation::Finite(1e-5), Relaxation::Infinite);
        p.alpha2 = 0.3;
        let (u, psi) = random_data(&m, 42, [0.3, 0.5], &p);
        assert_eq!((u.clone(), psi.clone()), random_data(&m, 42, [0.3, 0.5], &p));
        assert_ne!(u, random_data(&m, 43, [0.3, 0.5], &p).0);
        assert!(u.iter().all(|v| (0.3..0.5).contains(v)));
        for (s, &v) in psi.iter().zip(&m.boundary_nodes) {
            assert!((s - (u[v] - 0.3)).abs() < 1e-15);
        }
    }
}
