//! Triangulations of the unit disk and unit square with an extracted
//! boundary polyline.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Largest disk refinement level accepted by [`unit_disk_mesh`].
pub const MAX_DISK_LEVEL: u32 = 12;

/// Conforming triangulation of a polygonal domain.
///
/// Triangles are counterclockwise. `boundary_edges` traverse the boundary
/// counterclockwise as one closed loop, and `boundary_nodes[k]` is the first
/// vertex of `boundary_edges[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<[usize; 2]>,
    pub boundary_nodes: Vec<usize>,
    pub h_max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeshStats {
    pub h_max: f64,
    pub h_min: f64,
    /// Smallest interior angle over all triangles, in degrees.
    pub min_angle: f64,
    pub n_nodes: usize,
    pub n_boundary_nodes: usize,
}

pub fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl Mesh {
    /// Validates the triangulation and extracts its boundary loop.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let nv = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing vertex")));
            }
            let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if !(area > 0.0) {
                return Err(Error::DegenerateElement { index: t });
            }
        }

        let mut directed: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let e = (tri[k], tri[(k + 1) % 3]);
                if directed.insert(e, t).is_some() {
                    return Err(Error::InvalidMesh(format!(
                        "edge {e:?} appears twice with the same orientation"
                    )));
                }
            }
        }

        // boundary edges are the directed edges without a reversed twin
        let mut next: HashMap<usize, usize> = HashMap::new();
        for tri in &triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                if !directed.contains_key(&(b, a)) && next.insert(a, b).is_some() {
                    return Err(Error::InvalidMesh(format!(
                        "vertex {a} starts two boundary edges"
                    )));
                }
            }
        }
        let start = *next
            .keys()
            .min()
            .ok_or_else(|| Error::InvalidMesh("mesh has no boundary".into()))?;
        let mut boundary_nodes = Vec::with_capacity(next.len());
        let mut boundary_edges = Vec::with_capacity(next.len());
        let mut v = start;
        loop {
            let w = next[&v];
            boundary_nodes.push(v);
            boundary_edges.push([v, w]);
            v = w;
            if v == start {
                break;
            }
            if boundary_nodes.len() > next.len() {
                return Err(Error::InvalidMesh("boundary does not close".into()));
            }
        }
        if boundary_edges.len() != next.len() {
            return Err(Error::InvalidMesh(format!(
                "boundary splits into several loops ({} of {} edges reached)",
                boundary_edges.len(),
                next.len()
            )));
        }

        let mut h_max = 0.0f64;
        for tri in &triangles {
            for k in 0..3 {
                h_max = h_max.max(dist(vertices[tri[k]], vertices[tri[(k + 1) % 3]]));
            }
        }
        Ok(Self {
            vertices,
            triangles,
            boundary_edges,
            boundary_nodes,
            h_max,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_boundary_nodes(&self) -> usize {
        self.boundary_nodes.len()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    /// Sum of triangle areas, `|Ω_h|`.
    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Shoelace area of the boundary loop.
    pub fn boundary_polygon_area(&self) -> f64 {
        0.5 * self
            .boundary_edges
            .iter()
            .map(|&[a, b]| {
                let (p, q) = (self.vertices[a], self.vertices[b]);
                p[0] * q[1] - q[0] * p[1]
            })
            .sum::<f64>()
    }

    /// Length of the boundary polyline, `|Γ_h|`.
    pub fn boundary_length(&self) -> f64 {
        self.boundary_edges
            .iter()
            .map(|&[a, b]| dist(self.vertices[a], self.vertices[b]))
            .sum()
    }

    pub fn is_boundary_node(&self) -> Vec<bool> {
        let mut flag = vec![false; self.n_nodes()];
        for &v in &self.boundary_nodes {
            flag[v] = true;
        }
        flag
    }

    /// Plain-text export: a header line, then vertices, triangles and
    /// boundary edges, one per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "nodes {} triangles {} boundary {}",
            self.vertices.len(),
            self.triangles.len(),
            self.boundary_edges.len()
        );
        for p in &self.vertices {
            let _ = writeln!(s, "{:.17e} {:.17e}", p[0], p[1]);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        for e in &self.boundary_edges {
            let _ = writeln!(s, "{} {}", e[0], e[1]);
        }
        s
    }

    /// Parses the format written by [`Mesh::to_text`]; the boundary is
    /// re-extracted and must match the stored edge list.
    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidMesh(format!("mesh text: {msg}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty"))?.split_whitespace().collect();
        if header.len() != 6 || header[0] != "nodes" || header[2] != "triangles" || header[4] != "boundary" {
            return Err(bad("malformed header"));
        }
        let parse_n = |s: &str| s.parse::<usize>().map_err(|_| bad("bad count"));
        let (nv, nt, nb) = (parse_n(header[1])?, parse_n(header[3])?, parse_n(header[5])?);
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let f: Vec<f64> = lines
                .next()
                .ok_or_else(|| bad("missing vertex"))?
                .split_whitespace()
                .map(|x| x.parse::<f64>().map_err(|_| bad("bad coordinate")))
                .collect::<Result<_>>()?;
            if f.len() != 2 {
                return Err(bad("vertex needs two coordinates"));
            }
            vertices.push([f[0], f[1]]);
        }
        let mut read_ints = |what: &str, k: usize| -> Result<Vec<usize>> {
            let v: Vec<usize> = lines
                .next()
                .ok_or_else(|| bad(what))?
                .split_whitespace()
                .map(|x| x.parse::<usize>().map_err(|_| bad("bad index")))
                .collect::<Result<_>>()?;
            if v.len() != k {
                return Err(bad(what));
            }
            Ok(v)
        };
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let v = read_ints("triangle", 3)?;
            triangles.push([v[0], v[1], v[2]]);
        }
        let mut edges = Vec::with_capacity(nb);
        for _ in 0..nb {
            let v = read_ints("boundary edge", 2)?;
            edges.push([v[0], v[1]]);
        }
        let mesh = Self::new(vertices, triangles)?;
        if mesh.boundary_edges != edges {
            return Err(bad("boundary edges do not match the triangulation"));
        }
        Ok(mesh)
    }
}

/// Quasi-uniform disk mesh with roughly `20·2^level` nodes.
///
/// Nodes sit on concentric rings `r_i = i / n_rings` with about `c·i` nodes on
/// ring `i`; consecutive rings are stitched by an angular merge. All nodes of
/// the outermost ring lie on the unit circle.
pub fn unit_disk_mesh(level: u32) -> Result<Mesh> {
    if level > MAX_DISK_LEVEL {
        return Err(Error::InvalidParameter(format!(
            "disk level {level} exceeds the guard {MAX_DISK_LEVEL}"
        )));
    }
    let target = 20.0 * 2f64.powi(level as i32);
    let guess = ((target - 1.0) / PI).sqrt();
    let density = |rings: usize| 2.0 * (target - 1.0) / (rings * (rings + 1)) as f64;
    // among the ring counts near the guess, keep the spacing closest to isotropic
    let rings = [guess.floor().max(1.0) as usize, guess.ceil().max(1.0) as usize]
        .into_iter()
        .min_by(|&a, &b| {
            (density(a) - 2.0 * PI)
                .abs()
                .total_cmp(&(density(b) - 2.0 * PI).abs())
        })
        .unwrap();
    ring_disk(rings, density(rings))
}

fn ring_disk(rings: usize, density: f64) -> Result<Mesh> {
    struct Ring {
        start: usize,
        len: usize,
        staggered: bool,
    }
    impl Ring {
        fn angle(&self, j: usize) -> f64 {
            let o = if self.staggered { 0.5 } else { 0.0 };
            2.0 * PI * (j as f64 + o) / self.len as f64
        }
        /// Index of the node mirrored across the x₁-axis.
        fn mirror(&self, j: usize) -> usize {
            let n = self.len;
            if self.staggered {
                (2 * n - 1 - j) % n
            } else {
                (n - j) % n
            }
        }
        /// Nodes with angle in `[0, π]`, in increasing angle.
        fn upper(&self) -> std::ops::RangeInclusive<usize> {
            0..=self.len / 2
        }
    }

    let mut vertices: Vec<Point> = vec![[0.0, 0.0]];
    let mut ring = vec![Ring {
        start: 0,
        len: 1,
        staggered: false,
    }];
    for i in 1..=rings {
        // stagger interior rings by half a spacing; the outer ring starts at angle 0
        let staggered = i != rings && i % 2 == 1;
        // every ring has a node at angle π: even counts unstaggered, odd staggered
        let ideal = density * i as f64;
        let mut count = (ideal.round() as usize).max(3);
        if (count % 2 == 1) != staggered {
            count = if ideal > count as f64 { count + 1 } else { count - 1 };
        }
        let rg = Ring {
            start: vertices.len(),
            len: count,
            staggered,
        };
        let r = i as f64 / rings as f64;
        let mut pts = vec![[0.0, 0.0]; count];
        for j in rg.upper() {
            let a = rg.angle(j);
            let (x, y) = if 2 * j + usize::from(staggered) == count {
                (-r, 0.0)
            } else if j == 0 && !staggered {
                (r, 0.0)
            } else if i == rings {
                (a.cos(), a.sin())
            } else {
                (r * a.cos(), r * a.sin())
            };
            pts[rg.mirror(j)] = [x, -y];
            pts[j] = [x, y];
        }
        vertices.extend(pts);
        ring.push(rg);
    }

    let mut triangles = Vec::new();
    let n1 = ring[1].len;
    for j in 0..n1 {
        triangles.push([0, ring[1].start + j, ring[1].start + (j + 1) % n1]);
    }
    for i in 1..rings {
        let (a, b) = (&ring[i], &ring[i + 1]);
        let va = |j: usize| a.start + j;
        let vb = |j: usize| b.start + j;
        let ma = |j: usize| a.start + a.mirror(j);
        let mb = |j: usize| b.start + b.mirror(j);
        // the two rings never both straddle the axis at angle 0
        if b.staggered {
            triangles.push([va(0), mb(0), vb(0)]);
        } else if a.staggered {
            triangles.push([ma(0), vb(0), va(0)]);
        }
        let (na, nb) = (*a.upper().end(), *b.upper().end());
        let mut upper = Vec::new();
        let (mut ia, mut ib) = (0usize, 0usize);
        while ia < na || ib < nb {
            let advance_a = if ia == na {
                false
            } else if ib == nb {
                true
            } else {
                a.angle(ia + 1) < b.angle(ib + 1)
            };
            if advance_a {
                upper.push([ia, ib, ia + 1, 0]);
                ia += 1;
            } else {
                upper.push([ia, ib, ib + 1, 1]);
                ib += 1;
            }
        }
        for &[x, y, z, kind] in &upper {
            let third = if kind == 0 { (va(z), ma(z)) } else { (vb(z), mb(z)) };
            triangles.push([va(x), vb(y), third.0]);
            // mirrored copy, reversed to stay counterclockwise
            triangles.push([ma(x), third.1, mb(y)]);
        }
    }
    Mesh::new(vertices, triangles)
}

/// Uniform `n × n` grid of the unit square, each cell split along the
/// diagonal from its lower-left to its upper-right corner.
pub fn unit_square_mesh(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::InvalidParameter("square mesh needs n >= 1".into()));
    }
    let h = 1.0 / n as f64;
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            let x = if i == n { 1.0 } else { i as f64 * h };
            let y = if j == n { 1.0 } else { j as f64 * h };
            vertices.push([x, y]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    Mesh::new(vertices, triangles)
}

/// Uniform red refinement: every triangle is split into four through its
/// edge midpoints. Boundary midpoints are pushed radially onto the unit
/// circle when `project_to_circle` is set.
pub fn refine(m: &Mesh, project_to_circle: bool) -> Mesh {
    let mut vertices = m.vertices.clone();
    let on_boundary: std::collections::HashSet<(usize, usize)> = m
        .boundary_edges
        .iter()
        .map(|&[a, b]| (a.min(b), a.max(b)))
        .collect();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut mid = |a: usize, b: usize, vertices: &mut Vec<Point>| -> usize {
        let key = (a.min(b), a.max(b));
        *midpoint.entry(key).or_insert_with(|| {
            let (p, q) = (vertices[a], vertices[b]);
            let mut x = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
            if project_to_circle && on_boundary.contains(&key) {
                let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
                x = [x[0] / r, x[1] / r];
            }
            vertices.push(x);
            vertices.len() - 1
        })
    };
    let mut triangles = Vec::with_capacity(4 * m.triangles.len());
    for &[a, b, c] in &m.triangles {
        let ab = mid(a, b, &mut vertices);
        let bc = mid(b, c, &mut vertices);
        let ca = mid(c, a, &mut vertices);
        triangles.push([a, ab, ca]);
        triangles.push([ab, b, bc]);
        triangles.push([ca, bc, c]);
        triangles.push([ab, bc, ca]);
    }
    Mesh::new(vertices, triangles).expect("red refinement of a valid mesh is valid")
}

pub fn mesh_stats(m: &Mesh) -> MeshStats {
    let mut h_min = f64::INFINITY;
    let mut h_max = 0.0f64;
    let mut min_angle = f64::INFINITY;
    for &[a, b, c] in &m.triangles {
        let (pa, pb, pc) = (m.vertices[a], m.vertices[b], m.vertices[c]);
        let (la, lb, lc) = (dist(pb, pc), dist(pc, pa), dist(pa, pb));
        for l in [la, lb, lc] {
            h_min = h_min.min(l);
            h_max = h_max.max(l);
        }
        // law of cosines for each corner
        let angle = |opp: f64, s1: f64, s2: f64| {
            ((s1 * s1 + s2 * s2 - opp * opp) / (2.0 * s1 * s2)).clamp(-1.0, 1.0).acos()
        };
        for ang in [angle(la, lb, lc), angle(lb, lc, la), angle(lc, la, lb)] {
            min_angle = min_angle.min(ang.to_degrees());
        }
    }
    MeshStats {
        h_max,
        h_min,
        min_angle,
        n_nodes: m.n_nodes(),
        n_boundary_nodes: m.n_boundary_nodes(),
    }
}
