use std::sync::Arc;

use super::{Location, Mesh};
use crate::error::{Error, Result};

/// Distance within which a point outside the mesh is snapped back onto it.
pub const SNAP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldRole {
    Solution,
    Corrector,
    Datum,
}

/// A P1 function: one value per dof of `mesh`.
#[derive(Debug, Clone)]
pub struct NodalField {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
    p: f64,
    role: FieldRole,
}

impl NodalField {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>, p: f64, role: FieldRole) -> Result<NodalField> {
        if values.len() != mesh.dofs() {
            return Err(Error::MeshMismatch(format!(
                "{} values for a mesh with {} dofs",
                values.len(),
                mesh.dofs()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::IllPosed(format!(
                "non-finite nodal value at dof {i}"
            )));
        }
        Ok(NodalField {
            mesh,
            values,
            p,
            role,
        })
    }

    pub fn zeros(mesh: Arc<Mesh>, p: f64, role: FieldRole) -> NodalField {
        let n = mesh.dofs();
        NodalField {
            mesh,
            values: vec![0.0; n],
            p,
            role,
        }
    }

    /// Samples `f` at one representative node per dof.
    pub fn from_fn(
        mesh: Arc<Mesh>,
        p: f64,
        role: FieldRole,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<NodalField> {
        let values = mesh
            .dof_nodes()
            .iter()
            .map(|&n| {
                let q = mesh.nodes()[n];
                f(q[0], q[1])
            })
            .collect();
        NodalField::new(mesh, values, p, role)
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn role(&self) -> FieldRole {
        self.role
    }

    pub fn with_role(mut self, role: FieldRole) -> NodalField {
        self.role = role;
        self
    }

    /// Value at a mesh node (not a dof).
    pub fn at_node(&self, node: usize) -> f64 {
        self.values[self.mesh.dof(node)]
    }

    /// Values at every mesh node, periodic copies expanded.
    pub fn node_values(&self) -> Vec<f64> {
        self.mesh
            .node_dofs()
            .iter()
            .map(|&d| self.values[d])
            .collect()
    }

    /// Gradient on triangle `t` (constant for P1).
    pub fn gradient(&self, t: usize) -> [f64; 2] {
        let g = &self.mesh.geometry()[t];
        let d = self.mesh.triangle_dofs(t);
        let mut out = [0.0; 2];
        for k in 0..3 {
            out[0] += self.values[d[k]] * g.grad[k][0];
            out[1] += self.values[d[k]] * g.grad[k][1];
        }
        out
    }

    pub fn eval_at(&self, loc: Location) -> Option<f64> {
        match loc {
            Location::Inside { triangle, bary } => {
                let d = self.mesh.triangle_dofs(triangle);
                Some((0..3).map(|k| bary[k] * self.values[d[k]]).sum())
            }
            Location::Outside => None,
        }
    }

    /// P1 evaluation at `p`, snapping within [`SNAP_TOL`].
    pub fn eval(&self, p: [f64; 2]) -> Result<f64> {
        self.eval_at(self.mesh.locate_snapped(p, SNAP_TOL))
            .ok_or(Error::OutsideDomain {
                count: 1,
                x: p[0],
                y: p[1],
            })
    }

    /// P1 evaluation returning 0 outside the mesh (extension by zero).
    pub fn eval_or_zero(&self, p: [f64; 2]) -> f64 {
        self.eval_at(self.mesh.locate_point(p)).unwrap_or(0.0)
    }
}

/// Evaluates `field` at every dof of `target`; all offenders are counted before failing.
pub fn interpolate(field: &NodalField, target: Arc<Mesh>) -> Result<NodalField> {
    let mut values = Vec::with_capacity(target.dofs());
    let mut outside = 0;
    let mut first = [0.0; 2];
    for &n in target.dof_nodes() {
        let p = target.nodes()[n];
        match field.eval_at(field.mesh.locate_snapped(p, SNAP_TOL)) {
            Some(v) => values.push(v),
            None => {
                if outside == 0 {
                    first = p;
                }
                outside += 1;
                values.push(0.0);
            }
        }
    }
    if outside > 0 {
        return Err(Error::OutsideDomain {
            count: outside,
            x: first[0],
            y: first[1],
        });
    }
    NodalField::new(target, values, field.p, field.role)
}
