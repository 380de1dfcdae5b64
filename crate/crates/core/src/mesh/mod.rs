//! Conforming P1 triangulations of graph domains `{a < x < b, lower(x) < y < upper(x)}`.
//!
//! All builders produce *terrain* meshes: `nx + 1` equispaced columns, each carrying
//! `ny + 1` nodes spread linearly between the two height functions, with every quad
//! split along the diagonal through its lower-left node.

mod field;
mod io;
mod locate;

pub use field::{interpolate, FieldRole, NodalField};
pub use io::{read_mesh, write_mesh};
pub use locate::Location;

use std::collections::HashMap;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Absolute tolerance for node pairing and degenerate-column detection.
pub const GEOM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    Bottom,
    Top,
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
}

/// Per-triangle P1 geometry: area and the constant gradients of the three hat functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriGeom {
    pub area: f64,
    pub grad: [[f64; 2]; 3],
}

/// Column structure of a terrain mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Terrain {
    pub xs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub layers: usize,
    /// First node index of each column and its node count (1 when collapsed).
    pub column_start: Vec<usize>,
    pub column_len: Vec<usize>,
}

impl Terrain {
    /// Lower and upper boundary heights at `x` (linear between columns).
    pub fn heights_at(&self, x: f64) -> (f64, f64) {
        let n = self.xs.len() - 1;
        let a = self.xs[0];
        let b = self.xs[n];
        let t = ((x - a) / (b - a) * n as f64).clamp(0.0, n as f64);
        let i = (t.floor() as usize).min(n - 1);
        let s = t - i as f64;
        (
            self.lower[i] + s * (self.lower[i + 1] - self.lower[i]),
            self.upper[i] + s * (self.upper[i + 1] - self.upper[i]),
        )
    }

    pub fn node(&self, column: usize, layer: usize) -> usize {
        if self.column_len[column] == 1 {
            self.column_start[column]
        } else {
            self.column_start[column] + layer
        }
    }
}

#[derive(Debug)]
pub struct Mesh {
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    geom: Vec<TriGeom>,
    boundary: Vec<BoundaryEdge>,
    periodic: Vec<(usize, usize)>,
    node_dof: Vec<usize>,
    dof_node: Vec<usize>,
    width: f64,
    terrain: Option<Terrain>,
    locator: OnceLock<locate::Locator>,
}

impl Clone for Mesh {
    fn clone(&self) -> Self {
        Mesh {
            nodes: self.nodes.clone(),
            triangles: self.triangles.clone(),
            geom: self.geom.clone(),
            boundary: self.boundary.clone(),
            periodic: self.periodic.clone(),
            node_dof: self.node_dof.clone(),
            dof_node: self.dof_node.clone(),
            width: self.width,
            terrain: self.terrain.clone(),
            locator: OnceLock::new(),
        }
    }
}

impl Mesh {
    /// Assembles a mesh from raw parts, validating orientation and pairing.
    pub fn from_parts(
        nodes: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        periodic: Vec<(usize, usize)>,
    ) -> Result<Mesh> {
        Mesh::assemble(nodes, triangles, periodic, None, None)
    }

    fn assemble(
        nodes: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        periodic: Vec<(usize, usize)>,
        terrain: Option<Terrain>,
        tags: Option<&dyn Fn(usize, usize) -> BoundaryTag>,
    ) -> Result<Mesh> {
        let n = nodes.len();
        let mut geom = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::Mesh(format!(
                    "triangle {t} references a missing node"
                )));
            }
            let g = tri_geom(&nodes, tri);
            if !(g.area > 0.0) {
                return Err(Error::Mesh(format!(
                    "triangle {t} has non-positive signed area {}",
                    g.area
                )));
            }
            geom.push(g);
        }

        let (xmin, xmax) = nodes
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p[0]), hi.max(p[0]))
            });
        let width = if n == 0 { 0.0 } else { xmax - xmin };

        // periodic pairs share one dof; the left node owns it
        let mut parent: Vec<usize> = (0..n).collect();
        for &(l, r) in &periodic {
            if l >= n || r >= n {
                return Err(Error::Mesh(
                    "periodic pair references a missing node".into(),
                ));
            }
            let (pl, pr) = (nodes[l], nodes[r]);
            if (pl[1] - pr[1]).abs() > GEOM_TOL || ((pr[0] - pl[0]) - width).abs() > GEOM_TOL {
                return Err(Error::Mesh(format!(
                    "periodic pair ({l}, {r}) is not a horizontal translate by the domain width"
                )));
            }
            parent[r] = l;
        }
        let mut node_dof = vec![usize::MAX; n];
        let mut dof_node = Vec::new();
        for i in 0..n {
            if parent[i] == i {
                node_dof[i] = dof_node.len();
                dof_node.push(i);
            }
        }
        for i in 0..n {
            let mut root = parent[i];
            while parent[root] != root {
                root = parent[root];
            }
            node_dof[i] = node_dof[root];
        }

        // boundary edges: edges owned by exactly one triangle
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let ymin = nodes.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
        let mut boundary = Vec::new();
        for tri in &triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                if count[&(a.min(b), a.max(b))] == 1 {
                    let tag = match tags {
                        Some(f) => f(a, b),
                        None => classify_edge(&nodes[a], &nodes[b], xmin, xmax, ymin),
                    };
                    boundary.push(BoundaryEdge { nodes: [a, b], tag });
                }
            }
        }

        Ok(Mesh {
            nodes,
            triangles,
            geom,
            boundary,
            periodic,
            node_dof,
            dof_node,
            width,
            terrain,
            locator: OnceLock::new(),
        })
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn geometry(&self) -> &[TriGeom] {
        &self.geom
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    pub fn periodic_pairs(&self) -> &[(usize, usize)] {
        &self.periodic
    }

    pub fn is_periodic(&self) -> bool {
        !self.periodic.is_empty()
    }

    pub fn terrain(&self) -> Option<&Terrain> {
        self.terrain.as_ref()
    }

    /// Number of independent values (periodic pairs merged).
    pub fn dofs(&self) -> usize {
        self.dof_node.len()
    }

    pub fn dof(&self, node: usize) -> usize {
        self.node_dof[node]
    }

    pub fn node_dofs(&self) -> &[usize] {
        &self.node_dof
    }

    /// A representative node for every dof.
    pub fn dof_nodes(&self) -> &[usize] {
        &self.dof_node
    }

    pub fn triangle_dofs(&self, t: usize) -> [usize; 3] {
        let tri = self.triangles[t];
        [
            self.node_dof[tri[0]],
            self.node_dof[tri[1]],
            self.node_dof[tri[2]],
        ]
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn area(&self) -> f64 {
        self.geom.iter().map(|g| g.area).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// `∫ φ_i` for every dof; sums to the mesh area.
    pub fn lumped_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.dofs()];
        for (t, g) in self.geom.iter().enumerate() {
            for d in self.triangle_dofs(t) {
                w[d] += g.area / 3.0;
            }
        }
        w
    }

    /// Counts edge multiplicities; a conforming mesh has only 1s and 2s.
    pub fn audit(&self) -> AuditReport {
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut report = AuditReport {
            interior_edges: 0,
            boundary_edges: 0,
            overshared_edges: 0,
            min_area: self
                .geom
                .iter()
                .map(|g| g.area)
                .fold(f64::INFINITY, f64::min),
        };
        for c in count.values() {
            match c {
                1 => report.boundary_edges += 1,
                2 => report.interior_edges += 1,
                _ => report.overshared_edges += 1,
            }
        }
        report
    }

    /// Same mesh with every node mapped by `f`; topology and pairing are kept.
    pub fn mapped(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Result<Mesh> {
        let nodes: Vec<[f64; 2]> = self.nodes.iter().map(|&p| f(p)).collect();
        let tags: HashMap<(usize, usize), BoundaryTag> = self
            .boundary
            .iter()
            .map(|e| ((e.nodes[0], e.nodes[1]), e.tag))
            .collect();
        let tag_fn = move |a: usize, b: usize| tags[&(a, b)];
        let terrain = self.terrain.as_ref().map(|t| {
            let map_col = |i: usize, layer: usize| f([t.xs[i], node_y(t, i, layer)]);
            Terrain {
                xs: t
                    .xs
                    .iter()
                    .enumerate()
                    .map(|(i, _)| map_col(i, 0)[0])
                    .collect(),
                lower: (0..t.xs.len()).map(|i| map_col(i, 0)[1]).collect(),
                upper: (0..t.xs.len()).map(|i| map_col(i, t.layers)[1]).collect(),
                layers: t.layers,
                column_start: t.column_start.clone(),
                column_len: t.column_len.clone(),
            }
        });
        let mut m = Mesh::assemble(
            nodes,
            self.triangles.clone(),
            Vec::new(),
            terrain,
            Some(&tag_fn),
        )?;
        // pairing is inherited, not re-validated, since f may change the width
        m.periodic = self.periodic.clone();
        m.node_dof = self.node_dof.clone();
        m.dof_node = self.dof_node.clone();
        Ok(m)
    }

    /// Vertical stretch `(x, y) ↦ (x, (1 + η) y)`.
    pub fn stretched(&self, eta: f64) -> Result<Mesh> {
        self.mapped(|p| [p[0], (1.0 + eta) * p[1]])
    }
}

fn node_y(t: &Terrain, column: usize, layer: usize) -> f64 {
    if t.column_len[column] == 1 {
        t.lower[column]
    } else {
        t.lower[column] + (t.upper[column] - t.lower[column]) * layer as f64 / t.layers as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditReport {
    pub interior_edges: usize,
    pub boundary_edges: usize,
    pub overshared_edges: usize,
    pub min_area: f64,
}

impl AuditReport {
    pub fn conforming(&self) -> bool {
        self.overshared_edges == 0 && self.min_area > 0.0
    }
}

fn tri_geom(nodes: &[[f64; 2]], tri: &[usize; 3]) -> TriGeom {
    let [p0, p1, p2] = [nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]];
    let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
    let inv = 1.0 / det;
    TriGeom {
        area: 0.5 * det,
        grad: [
            [(p1[1] - p2[1]) * inv, (p2[0] - p1[0]) * inv],
            [(p2[1] - p0[1]) * inv, (p0[0] - p2[0]) * inv],
            [(p0[1] - p1[1]) * inv, (p1[0] - p0[0]) * inv],
        ],
    }
}

fn classify_edge(a: &[f64; 2], b: &[f64; 2], xmin: f64, xmax: f64, ymin: f64) -> BoundaryTag {
    let tol = GEOM_TOL * (1.0 + xmax.abs());
    if (a[0] - xmin).abs() <= tol && (b[0] - xmin).abs() <= tol {
        BoundaryTag::Left
    } else if (a[0] - xmax).abs() <= tol && (b[0] - xmax).abs() <= tol {
        BoundaryTag::Right
    } else if (a[1] - ymin).abs() <= GEOM_TOL && (b[1] - ymin).abs() <= GEOM_TOL {
        BoundaryTag::Bottom
    } else {
        BoundaryTag::Top
    }
}

fn check_counts(nx: usize, ny: usize) -> Result<()> {
    if nx == 0 || ny == 0 {
        return Err(Error::Mesh(format!(
            "need nx, ny >= 1, got nx={nx}, ny={ny}"
        )));
    }
    Ok(())
}

fn column_xs(interval: (f64, f64), nx: usize) -> Result<Vec<f64>> {
    let (a, b) = interval;
    if !(b > a) {
        return Err(Error::Mesh(format!("empty interval ({a}, {b})")));
    }
    Ok((0..=nx)
        .map(|i| {
            if i == nx {
                b
            } else {
                a + (b - a) * i as f64 / nx as f64
            }
        })
        .collect())
}

/// Terrain mesh of `{a < x < b, 0 < y < h(x)}`.
pub fn build_graph_mesh<H>(
    h: H,
    interval: (f64, f64),
    nx: usize,
    ny: usize,
    periodic: bool,
) -> Result<Mesh>
where
    H: Fn(f64) -> Result<f64>,
{
    check_counts(nx, ny)?;
    let xs = column_xs(interval, nx)?;
    let mut upper = Vec::with_capacity(xs.len());
    for &x in &xs {
        let v = h(x)?;
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Mesh(format!("height h({x}) = {v} is not positive")));
        }
        upper.push(v);
    }
    if periodic && (upper[0] - upper[nx]).abs() > GEOM_TOL {
        return Err(Error::Mesh(format!(
            "periodic mesh needs h(a) = h(b), got {} and {}",
            upper[0], upper[nx]
        )));
    }
    if periodic {
        upper[nx] = upper[0];
    }
    let lower = vec![0.0; xs.len()];
    terrain_mesh(xs, lower, upper, ny, periodic)
}

/// Terrain mesh between two graphs; columns with a gap below [`GEOM_TOL`] collapse to a point.
pub fn build_strip_mesh<L, U>(
    lower: L,
    upper: U,
    interval: (f64, f64),
    nx: usize,
    ny: usize,
) -> Result<Mesh>
where
    L: Fn(f64) -> Result<f64>,
    U: Fn(f64) -> Result<f64>,
{
    check_counts(nx, ny)?;
    let xs = column_xs(interval, nx)?;
    let mut lo = Vec::with_capacity(xs.len());
    let mut hi = Vec::with_capacity(xs.len());
    for &x in &xs {
        let (l, u) = (lower(x)?, upper(x)?);
        if !l.is_finite() || !u.is_finite() {
            return Err(Error::Mesh(format!("non-finite strip bound at x = {x}")));
        }
        if u < l - GEOM_TOL {
            return Err(Error::Mesh(format!("upper {u} below lower {l} at x = {x}")));
        }
        lo.push(l);
        hi.push(u.max(l));
    }
    terrain_mesh(xs, lo, hi, ny, false)
}

fn terrain_mesh(
    xs: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    ny: usize,
    periodic: bool,
) -> Result<Mesh> {
    let nx = xs.len() - 1;
    let mut nodes = Vec::new();
    let mut column_start = Vec::with_capacity(nx + 1);
    let mut column_len = Vec::with_capacity(nx + 1);
    // per node: (column, layer, collapsed)
    let mut info = Vec::new();
    for i in 0..=nx {
        column_start.push(nodes.len());
        let gap = upper[i] - lower[i];
        if gap <= GEOM_TOL {
            nodes.push([xs[i], lower[i]]);
            info.push((i, 0usize, true));
            column_len.push(1);
        } else {
            for j in 0..=ny {
                let y = if j == ny {
                    upper[i]
                } else {
                    lower[i] + gap * (j as f64 / ny as f64)
                };
                nodes.push([xs[i], y]);
                info.push((i, j, false));
            }
            column_len.push(ny + 1);
        }
    }
    let terrain = Terrain {
        xs,
        lower,
        upper,
        layers: ny,
        column_start,
        column_len,
    };
    let at = |i: usize, j: usize| terrain.node(i, j);

    let mut triangles = Vec::new();
    for i in 0..nx {
        let lc = terrain.column_len[i] == 1;
        let rc = terrain.column_len[i + 1] == 1;
        match (lc, rc) {
            (true, true) => {}
            (false, false) => {
                for j in 0..ny {
                    let (ll, lr, ur, ul) = (at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1));
                    // diagonals alternate by column so every node patch is mirror symmetric
                    if i % 2 == 0 {
                        triangles.push([ll, lr, ur]);
                        triangles.push([ll, ur, ul]);
                    } else {
                        triangles.push([ll, lr, ul]);
                        triangles.push([lr, ur, ul]);
                    }
                }
            }
            (true, false) => {
                let l = at(i, 0);
                for j in 0..ny {
                    triangles.push([l, at(i + 1, j), at(i + 1, j + 1)]);
                }
            }
            (false, true) => {
                let r = at(i + 1, 0);
                for j in 0..ny {
                    triangles.push([at(i, j), r, at(i, j + 1)]);
                }
            }
        }
    }

    let mut pairs = Vec::new();
    if periodic {
        for j in 0..=ny {
            pairs.push((at(0, j), at(nx, j)));
        }
    }
    let tag = |a: usize, b: usize| {
        let (ia, ja, ca) = info[a];
        let (ib, jb, cb) = info[b];
        if ia == ib && ia == 0 {
            BoundaryTag::Left
        } else if ia == ib && ia == nx {
            BoundaryTag::Right
        } else if (ja == 0 || ca) && (jb == 0 || cb) {
            BoundaryTag::Bottom
        } else {
            BoundaryTag::Top
        }
    };
    Mesh::assemble(nodes, triangles, pairs, Some(terrain), Some(&tag))
}
