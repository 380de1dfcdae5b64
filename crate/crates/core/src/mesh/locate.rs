//! Point location on a bucket grid.

use super::Mesh;

/// Barycentric coordinates may dip this far below zero and still count as inside.
pub const BARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Location {
    Inside { triangle: usize, bary: [f64; 3] },
    Outside,
}

impl Location {
    pub fn triangle(&self) -> Option<usize> {
        match self {
            Location::Inside { triangle, .. } => Some(*triangle),
            Location::Outside => None,
        }
    }
}

#[derive(Debug)]
pub(crate) struct Locator {
    origin: [f64; 2],
    cell: [f64; 2],
    dims: [usize; 2],
    /// Triangle indices per bucket, ascending.
    buckets: Vec<Vec<usize>>,
}

impl Locator {
    pub(crate) fn new(mesh: &Mesh) -> Locator {
        let nodes = mesh.nodes();
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in nodes {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let nt = mesh.triangles().len().max(1);
        if nodes.is_empty() {
            return Locator {
                origin: [0.0; 2],
                cell: [1.0; 2],
                dims: [1, 1],
                buckets: vec![Vec::new()],
            };
        }
        let w = (hi[0] - lo[0]).max(f64::MIN_POSITIVE);
        let h = (hi[1] - lo[1]).max(f64::MIN_POSITIVE);
        // aim for about one triangle per bucket with cells shaped like the domain
        let aspect = w / h;
        let nx = ((nt as f64 * aspect).sqrt().ceil() as usize).clamp(1, nt);
        let ny = ((nt as f64 / aspect).sqrt().ceil() as usize).clamp(1, nt);
        let cell = [w / nx as f64, h / ny as f64];
        let mut loc = Locator {
            origin: lo,
            cell,
            dims: [nx, ny],
            buckets: vec![Vec::new(); nx * ny],
        };
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let mut tlo = [f64::INFINITY; 2];
            let mut thi = [f64::NEG_INFINITY; 2];
            for &i in tri {
                for k in 0..2 {
                    tlo[k] = tlo[k].min(nodes[i][k]);
                    thi[k] = thi[k].max(nodes[i][k]);
                }
            }
            let (i0, j0) = loc.bucket_of(tlo);
            let (i1, j1) = loc.bucket_of(thi);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    loc.buckets[j * nx + i].push(t);
                }
            }
        }
        loc
    }

    fn bucket_of(&self, p: [f64; 2]) -> (usize, usize) {
        let f = |k: usize| {
            let s = ((p[k] - self.origin[k]) / self.cell[k]).floor();
            if s.is_nan() || s < 0.0 {
                0
            } else {
                (s as usize).min(self.dims[k] - 1)
            }
        };
        (f(0), f(1))
    }

    /// Sorted, deduplicated triangles from every bucket touching the box `p ± r`.
    fn candidates(&self, p: [f64; 2], r: f64) -> Vec<usize> {
        let (i0, j0) = self.bucket_of([p[0] - r, p[1] - r]);
        let (i1, j1) = self.bucket_of([p[0] + r, p[1] + r]);
        let mut out = Vec::new();
        for j in j0..=j1 {
            for i in i0..=i1 {
                out.extend_from_slice(&self.buckets[j * self.dims[0] + i]);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

pub(crate) fn barycentric(mesh: &Mesh, t: usize, p: [f64; 2]) -> [f64; 3] {
    let tri = mesh.triangles()[t];
    let g = &mesh.geometry()[t];
    let p0 = mesh.nodes()[tri[0]];
    let d = [p[0] - p0[0], p[1] - p0[1]];
    // λ_k = λ_k(p0) + ∇λ_k · (p − p0)
    let l1 = g.grad[1][0] * d[0] + g.grad[1][1] * d[1];
    let l2 = g.grad[2][0] * d[0] + g.grad[2][1] * d[1];
    [1.0 - l1 - l2, l1, l2]
}

fn clamp_bary(b: [f64; 3]) -> [f64; 3] {
    let c = [b[0].max(0.0), b[1].max(0.0), b[2].max(0.0)];
    let s = c[0] + c[1] + c[2];
    [c[0] / s, c[1] / s, c[2] / s]
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let s = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = [a[0] + s * ab[0] - p[0], a[1] + s * ab[1] - p[1]];
    q[0].hypot(q[1])
}

impl Mesh {
    fn locator(&self) -> &Locator {
        self.locator.get_or_init(|| Locator::new(self))
    }

    /// The lowest-index triangle containing `p`, with clamped barycentric coordinates.
    pub fn locate_point(&self, p: [f64; 2]) -> Location {
        if self.is_empty() {
            return Location::Outside;
        }
        let loc = self.locator();
        let (i, j) = loc.bucket_of(p);
        for &t in &loc.buckets[j * loc.dims[0] + i] {
            let b = barycentric(self, t, p);
            if b.iter().all(|&v| v >= -BARY_TOL) {
                return Location::Inside {
                    triangle: t,
                    bary: clamp_bary(b),
                };
            }
        }
        Location::Outside
    }

    /// Like [`Mesh::locate_point`], but a point within distance `tol` of the mesh
    /// snaps to the nearest triangle (lowest index among equals).
    pub fn locate_snapped(&self, p: [f64; 2], tol: f64) -> Location {
        let hit = self.locate_point(p);
        if hit != Location::Outside || self.is_empty() {
            return hit;
        }
        let mut best: Option<(f64, usize)> = None;
        for t in self.locator().candidates(p, tol) {
            let tri = self.triangles()[t];
            let nodes = self.nodes();
            let d = (0..3)
                .map(|k| point_segment_distance(p, nodes[tri[k]], nodes[tri[(k + 1) % 3]]))
                .fold(f64::INFINITY, f64::min);
            if d <= tol && best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, t));
            }
        }
        match best {
            Some((_, t)) => Location::Inside {
                triangle: t,
                bary: clamp_bary(barycentric(self, t, p)),
            },
            None => Location::Outside,
        }
    }
}
