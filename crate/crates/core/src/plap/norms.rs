//! `L^p` and `W^{1,p}` norms with the assembly quadrature, plus the ε-rescaled variants.

use serde::Serialize;

use super::assemble::MIDPOINT_BASIS;
use crate::error::{Error, Result};
use crate::mesh::NodalField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Norms {
    pub lp: f64,
    pub grad_lp: f64,
    pub w1p: f64,
    /// `ε^{−1/p}` times the plain norms, when `ε` was given.
    pub triple_lp: Option<f64>,
    pub triple_w1p: Option<f64>,
}

/// `∫|u|^p` by the edge-midpoint rule.
pub fn lp_power(u: &NodalField, p: f64) -> f64 {
    let m = u.mesh();
    let v = u.values();
    let mut s = 0.0;
    for (t, g) in m.geometry().iter().enumerate() {
        let d = m.triangle_dofs(t);
        for phi in &MIDPOINT_BASIS {
            let q: f64 = (0..3).map(|a| phi[a] * v[d[a]]).sum();
            s += g.area / 3.0 * q.abs().powf(p);
        }
    }
    s
}

/// `∫|K∇u|^p` with `K = diag(1, k_y)`, exact per triangle.
pub fn grad_lp_power_weighted(u: &NodalField, p: f64, k_y: f64) -> f64 {
    let m = u.mesh();
    (0..m.triangles().len())
        .map(|t| {
            let g = u.gradient(t);
            m.geometry()[t].area * g[0].hypot(k_y * g[1]).powf(p)
        })
        .sum()
}

pub fn grad_lp_power(u: &NodalField, p: f64) -> f64 {
    grad_lp_power_weighted(u, p, 1.0)
}

pub fn norms(u: &NodalField, p: f64, eps: Option<f64>) -> Result<Norms> {
    if !(p >= 1.0) {
        return Err(Error::IllPosed(format!(
            "norm exponent must be >= 1, got {p}"
        )));
    }
    if let Some(e) = eps {
        if !(e > 0.0) {
            return Err(Error::IllPosed(format!(
                "epsilon must be positive, got {e}"
            )));
        }
    }
    let a = lp_power(u, p);
    let b = grad_lp_power(u, p);
    let lp = a.powf(1.0 / p);
    let w1p = (a + b).powf(1.0 / p);
    let scale = eps.map(|e| e.powf(-1.0 / p));
    Ok(Norms {
        lp,
        grad_lp: b.powf(1.0 / p),
        w1p,
        triple_lp: scale.map(|s| s * lp),
        triple_w1p: scale.map(|s| s * w1p),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_graph_mesh, FieldRole};
    use std::sync::Arc;

    #[test]
    fn unit_function_on_thin_flat_domain() {
        let eps = 0.125;
        let m = Arc::new(build_graph_mesh(|_| Ok(eps), (0.0, 1.0), 32, 4, false).unwrap());
        let u = NodalField::from_fn(m, 3.0, FieldRole::Solution, |_, _| 1.0).unwrap();
        let n = norms(&u, 3.0, Some(eps)).unwrap();
        assert!((n.triple_lp.unwrap() - 1.0).abs() < 1e-14);
        assert!((n.triple_w1p.unwrap() - 1.0).abs() < 1e-14);
        let n1 = norms(&u, 3.0, Some(1.0)).unwrap();
        assert_eq!(n1.triple_lp, Some(n1.lp));
    }

    #[test]
    fn homogeneity() {
        let m = Arc::new(build_graph_mesh(|_| Ok(1.0), (0.0, 1.0), 6, 6, false).unwrap());
        let u = NodalField::from_fn(m.clone(), 2.5, FieldRole::Datum, |x, y| x - y * y).unwrap();
        let v = NodalField::from_fn(m, 2.5, FieldRole::Datum, |x, y| 2.0 * (x - y * y)).unwrap();
        let (a, b) = (norms(&u, 2.5, None).unwrap(), norms(&v, 2.5, None).unwrap());
        assert!((b.lp - 2.0 * a.lp).abs() < 1e-13);
        assert!((b.w1p - 2.0 * a.w1p).abs() < 1e-13);
    }
}
