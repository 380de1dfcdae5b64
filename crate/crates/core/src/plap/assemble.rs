//! P1 assembly of the p-energy `(1/p)∫|e + ∇u|^p + (1/p)∫|u|^p − ∫f u` and its derivatives.
//!
//! The gradient term is exact per triangle. Mass and load terms use the edge-midpoint
//! rule with weight `area/3` per point.

use std::sync::Arc;

use super::ap::{a_p, a_p_scalar, flux_sensitivity, gradient_floor};
use super::sparse::CsrMatrix;
use super::Objective;
use crate::error::{Error, Result};
use crate::mesh::{Mesh, NodalField};

/// Hat-function values at the three edge midpoints.
pub const MIDPOINT_BASIS: [[f64; 3]; 3] = [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    None,
    ZeroMean,
    PeriodicZeroMean,
}

#[derive(Clone)]
pub enum Load {
    None,
    Nodal(Vec<f64>),
    Function(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for Load {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Load::None => write!(f, "Load::None"),
            Load::Nodal(v) => write!(f, "Load::Nodal({} values)", v.len()),
            Load::Function(_) => write!(f, "Load::Function"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnergySpec {
    mesh: Arc<Mesh>,
    p: f64,
    gradient_term: bool,
    mass_term: bool,
    offset: [f64; 2],
    constraint: Constraint,
    /// Load values at the midpoint quadrature points of every triangle.
    load_q: Option<Vec<[f64; 3]>>,
    pattern: CsrMatrix,
    /// CSR slot of local entry `(a, b)` at `3a + b`, per triangle.
    slots: Vec<[usize; 9]>,
    weights: Vec<f64>,
}

impl EnergySpec {
    pub fn new(
        mesh: Arc<Mesh>,
        p: f64,
        gradient_term: bool,
        mass_term: bool,
        load: Load,
        offset: [f64; 2],
        constraint: Constraint,
    ) -> Result<EnergySpec> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::IllPosed(format!("p must exceed 1, got {p}")));
        }
        if !mass_term && constraint == Constraint::None {
            return Err(Error::IllPosed(
                "without a mass term the constraint must remove constants".into(),
            ));
        }
        if constraint == Constraint::PeriodicZeroMean && !mesh.is_periodic() {
            return Err(Error::IllPosed(
                "periodic constraint on a non-periodic mesh".into(),
            ));
        }
        let nodes = mesh.nodes();
        let load_q = match load {
            Load::None => None,
            Load::Nodal(v) => {
                if v.len() != mesh.dofs() {
                    return Err(Error::MeshMismatch(format!(
                        "load has {} values, mesh has {} dofs",
                        v.len(),
                        mesh.dofs()
                    )));
                }
                Some(
                    (0..mesh.triangles().len())
                        .map(|t| {
                            let d = mesh.triangle_dofs(t);
                            let mut q = [0.0; 3];
                            for (k, phi) in MIDPOINT_BASIS.iter().enumerate() {
                                q[k] = (0..3).map(|a| phi[a] * v[d[a]]).sum();
                            }
                            q
                        })
                        .collect(),
                )
            }
            Load::Function(f) => Some(
                mesh.triangles()
                    .iter()
                    .map(|tri| {
                        let mut q = [0.0; 3];
                        for k in 0..3 {
                            let (a, b) = (nodes[tri[k]], nodes[tri[(k + 1) % 3]]);
                            q[k] = f(0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]));
                        }
                        q
                    })
                    .collect(),
            ),
        };
        let n = mesh.dofs();
        let mut trip = Vec::with_capacity(9 * mesh.triangles().len());
        for t in 0..mesh.triangles().len() {
            let d = mesh.triangle_dofs(t);
            for a in 0..3 {
                for b in 0..3 {
                    trip.push((d[a], d[b], 0.0));
                }
            }
        }
        let pattern = CsrMatrix::from_triplets(n, &trip);
        let slots = (0..mesh.triangles().len())
            .map(|t| {
                let d = mesh.triangle_dofs(t);
                let mut s = [0; 9];
                for a in 0..3 {
                    for b in 0..3 {
                        s[3 * a + b] = pattern.slot(d[a], d[b]).unwrap();
                    }
                }
                s
            })
            .collect();
        let weights = mesh.lumped_weights();
        Ok(EnergySpec {
            mesh,
            p,
            gradient_term,
            mass_term,
            offset,
            constraint,
            load_q,
            pattern,
            slots,
            weights,
        })
    }

    /// `(1/p)∫|∇u|^p + (1/p)∫|u|^p − ∫f u` with pure Neumann conditions.
    pub fn neumann(mesh: Arc<Mesh>, p: f64, load: Load) -> Result<EnergySpec> {
        EnergySpec::new(mesh, p, true, true, load, [0.0, 0.0], Constraint::None)
    }

    /// `(1/p)∫|e₁ + ∇ψ|^p` over periodic zero-mean `ψ`.
    pub fn cell(mesh: Arc<Mesh>, p: f64) -> Result<EnergySpec> {
        EnergySpec::new(
            mesh,
            p,
            true,
            false,
            Load::None,
            [1.0, 0.0],
            Constraint::PeriodicZeroMean,
        )
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn constraint(&self) -> Constraint {
        self.constraint
    }

    pub fn offset(&self) -> [f64; 2] {
        self.offset
    }

    pub fn load_at_quadrature(&self) -> Option<&[[f64; 3]]> {
        self.load_q.as_deref()
    }

    fn check(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.mesh.dofs() {
            return Err(Error::MeshMismatch(format!(
                "field has {} values, energy mesh has {} dofs",
                u.len(),
                self.mesh.dofs()
            )));
        }
        Ok(())
    }

    fn check_field(&self, u: &NodalField) -> Result<()> {
        if !Arc::ptr_eq(u.mesh(), &self.mesh) && u.mesh().dofs() != self.mesh.dofs() {
            return Err(Error::MeshMismatch(
                "field lives on a different mesh".into(),
            ));
        }
        self.check(u.values())
    }

    /// `e + ∇u` on triangle `t`.
    fn grad(&self, u: &[f64], t: usize) -> [f64; 2] {
        let g = &self.mesh.geometry()[t];
        let d = self.mesh.triangle_dofs(t);
        let mut out = self.offset;
        for k in 0..3 {
            out[0] += u[d[k]] * g.grad[k][0];
            out[1] += u[d[k]] * g.grad[k][1];
        }
        out
    }

    fn quad_values(&self, u: &[f64], t: usize) -> [f64; 3] {
        let d = self.mesh.triangle_dofs(t);
        let mut q = [0.0; 3];
        for (k, phi) in MIDPOINT_BASIS.iter().enumerate() {
            q[k] = (0..3).map(|a| phi[a] * u[d[a]]).sum();
        }
        q
    }

    pub fn assemble_energy(&self, u: &NodalField) -> Result<f64> {
        self.check_field(u)?;
        Ok(self.energy_values(u.values()))
    }

    pub fn assemble_gradient(&self, u: &NodalField) -> Result<Vec<f64>> {
        self.check_field(u)?;
        Ok(self.gradient_values(u.values()).0)
    }

    pub fn assemble_hessian(&self, u: &NodalField, gamma: f64) -> Result<CsrMatrix> {
        self.check_field(u)?;
        if !(gamma >= 0.0) {
            return Err(Error::IllPosed(format!(
                "regularization must be >= 0, got {gamma}"
            )));
        }
        Ok(self.hessian_values(u.values(), gamma, None))
    }

    fn energy_values(&self, u: &[f64]) -> f64 {
        let p = self.p;
        let mut e = 0.0;
        for (t, g) in self.mesh.geometry().iter().enumerate() {
            if self.gradient_term {
                let v = self.grad(u, t);
                e += g.area * v[0].hypot(v[1]).powf(p) / p;
            }
            if self.mass_term || self.load_q.is_some() {
                let q = self.quad_values(u, t);
                let w = g.area / 3.0;
                for k in 0..3 {
                    if self.mass_term {
                        e += w * q[k].abs().powf(p) / p;
                    }
                    if let Some(f) = &self.load_q {
                        e -= w * f[t][k] * q[k];
                    }
                }
            }
        }
        e
    }

    /// Residual vector and the norm below which it is indistinguishable from roundoff.
    fn gradient_values(&self, u: &[f64]) -> (Vec<f64>, f64) {
        let p = self.p;
        let n = self.mesh.dofs();
        let mut r = vec![0.0; n];
        let mut abs = vec![0.0; n];
        let mut sens = vec![0.0; n];
        for (t, g) in self.mesh.geometry().iter().enumerate() {
            let d = self.mesh.triangle_dofs(t);
            if self.gradient_term {
                let v = self.grad(u, t);
                let flux = a_p(v, p);
                // size of the gradient change caused by one-ulp changes of u
                let dv = f64::EPSILON
                    * (self.offset[0].hypot(self.offset[1])
                        + (0..3)
                            .map(|k| u[d[k]].abs() * g.grad[k][0].hypot(g.grad[k][1]))
                            .sum::<f64>());
                let s = flux_sensitivity(v[0].hypot(v[1]), dv, p);
                for k in 0..3 {
                    let c = g.area * (flux[0] * g.grad[k][0] + flux[1] * g.grad[k][1]);
                    r[d[k]] += c;
                    abs[d[k]] += c.abs();
                    sens[d[k]] += g.area * s * g.grad[k][0].hypot(g.grad[k][1]);
                }
            }
            if self.mass_term || self.load_q.is_some() {
                let q = self.quad_values(u, t);
                let w = g.area / 3.0;
                for (k, phi) in MIDPOINT_BASIS.iter().enumerate() {
                    let mut s = 0.0;
                    let mut ds = 0.0;
                    if self.mass_term {
                        s += a_p_scalar(q[k], p);
                        let du = f64::EPSILON * (0..3).map(|a| phi[a] * u[d[a]].abs()).sum::<f64>();
                        ds = flux_sensitivity(q[k].abs(), du, p);
                    }
                    if let Some(f) = &self.load_q {
                        s -= f[t][k];
                    }
                    for a in 0..3 {
                        let c = w * s * phi[a];
                        r[d[a]] += c;
                        abs[d[a]] += c.abs();
                        sens[d[a]] += w * ds * phi[a];
                    }
                }
            }
        }
        (r, gradient_floor(&abs, &sens))
    }

    /// With `floor = Some((δg, δu))` this is instead the reweighted (Kačanov) matrix
    /// with weights `max(|s|, δ)^{p−2}`; for p < 2 its quadratic model lies above
    /// the energy wherever `|s| ≥ δ`.
    fn hessian_values(&self, u: &[f64], gamma: f64, floor: Option<(f64, f64)>) -> CsrMatrix {
        let p = self.p;
        let g2 = gamma * gamma;
        let mut h = self.pattern.zeros_like();
        for (t, geo) in self.mesh.geometry().iter().enumerate() {
            let slots = &self.slots[t];
            if self.gradient_term {
                let v = self.grad(u, t);
                let s = g2 + v[0] * v[0] + v[1] * v[1];
                let (w, c) = if p == 2.0 {
                    (1.0, 0.0)
                } else if let Some((dg, _)) = floor {
                    (v[0].hypot(v[1]).max(dg).powf(p - 2.0), 0.0)
                } else {
                    (s.powf(0.5 * (p - 2.0)), (p - 2.0) * s.powf(0.5 * (p - 4.0)))
                };
                for a in 0..3 {
                    let ga = geo.grad[a];
                    let gva = ga[0] * v[0] + ga[1] * v[1];
                    for b in 0..3 {
                        let gb = geo.grad[b];
                        let gvb = gb[0] * v[0] + gb[1] * v[1];
                        h.values[slots[3 * a + b]] +=
                            geo.area * (w * (ga[0] * gb[0] + ga[1] * gb[1]) + c * gva * gvb);
                    }
                }
            }
            if self.mass_term {
                let q = self.quad_values(u, t);
                let w = geo.area / 3.0;
                for (k, phi) in MIDPOINT_BASIS.iter().enumerate() {
                    let m = if p == 2.0 {
                        1.0
                    } else if let Some((_, du)) = floor {
                        q[k].abs().max(du).powf(p - 2.0)
                    } else {
                        let s = g2 + q[k] * q[k];
                        s.powf(0.5 * (p - 4.0)) * (g2 + (p - 1.0) * q[k] * q[k])
                    };
                    for a in 0..3 {
                        for b in 0..3 {
                            h.values[slots[3 * a + b]] += w * m * phi[a] * phi[b];
                        }
                    }
                }
            }
        }
        h
    }
}

impl Objective for EnergySpec {
    fn dofs(&self) -> usize {
        self.mesh.dofs()
    }

    fn energy(&self, u: &[f64]) -> f64 {
        self.energy_values(u)
    }

    fn gradient(&self, u: &[f64]) -> (Vec<f64>, f64) {
        self.gradient_values(u)
    }

    fn hessian(&self, u: &[f64], gamma: f64) -> CsrMatrix {
        self.hessian_values(u, gamma, None)
    }

    fn majorant(&self, u: &[f64], gamma: f64) -> Option<CsrMatrix> {
        if self.p >= 2.0 {
            return None;
        }
        // weights are capped at the size of one-ulp changes of u
        let umax = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let gmax = self
            .mesh
            .geometry()
            .iter()
            .flat_map(|g| g.grad.iter().map(|d| d[0].hypot(d[1])))
            .fold(0.0f64, f64::max);
        let du = if umax > 0.0 {
            f64::EPSILON * umax
        } else {
            gamma
        };
        Some(self.hessian_values(u, gamma, Some((du * gmax.max(1.0), du))))
    }

    fn mean_weights(&self) -> Option<&[f64]> {
        match self.constraint {
            Constraint::None => None,
            _ => Some(&self.weights),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_graph_mesh, FieldRole};
    use rand::{Rng, SeedableRng};

    fn square(n: usize) -> Arc<Mesh> {
        Arc::new(build_graph_mesh(|_| Ok(1.0), (0.0, 1.0), n, n, false).unwrap())
    }

    fn field(m: &Arc<Mesh>, p: f64, f: impl Fn(f64, f64) -> f64) -> NodalField {
        NodalField::from_fn(m.clone(), p, FieldRole::Solution, f).unwrap()
    }

    fn grad_only(m: Arc<Mesh>, p: f64) -> EnergySpec {
        EnergySpec::new(
            m,
            p,
            true,
            false,
            Load::None,
            [0.0, 0.0],
            Constraint::ZeroMean,
        )
        .unwrap()
    }

    #[test]
    fn energy_examples() {
        let m = square(4);
        let spec = EnergySpec::neumann(m.clone(), 3.0, Load::None).unwrap();
        assert_eq!(
            spec.assemble_energy(&field(&m, 3.0, |_, _| 0.0)).unwrap(),
            0.0
        );
        let e = grad_only(m.clone(), 2.0)
            .assemble_energy(&field(&m, 2.0, |_, y| y))
            .unwrap();
        assert!((e - 0.5).abs() < 1e-14);
        let e = grad_only(m.clone(), 3.0)
            .assemble_energy(&field(&m, 3.0, |x, _| x))
            .unwrap();
        assert!((e - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn midpoint_rule_is_exact_for_quadratics() {
        // ∫ u² with u = x + 2y on the unit square: 1/3 + 2·2/4 + 4/3 = 8/3
        let m = square(3);
        let spec = EnergySpec::new(
            m.clone(),
            2.0,
            false,
            true,
            Load::None,
            [0.0, 0.0],
            Constraint::None,
        )
        .unwrap();
        let e = spec
            .assemble_energy(&field(&m, 2.0, |x, y| x + 2.0 * y))
            .unwrap();
        assert!((e - 0.5 * 8.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn p2_hessian_independent_of_state_and_gamma() {
        let m = square(5);
        let spec = EnergySpec::neumann(m.clone(), 2.0, Load::None).unwrap();
        let h1 = spec
            .assemble_hessian(&field(&m, 2.0, |x, y| x * y + 3.0), 0.1)
            .unwrap();
        let h2 = spec
            .assemble_hessian(&field(&m, 2.0, |x, _| (5.0 * x).sin()), 1e-7)
            .unwrap();
        assert_eq!(h1.col_idx, h2.col_idx);
        for (a, b) in h1.values.iter().zip(&h2.values) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(h1.max_asymmetry() < 1e-15);
    }

    fn random_field(
        m: &Arc<Mesh>,
        p: f64,
        seed: u64,
        base: impl Fn(f64, f64) -> f64,
    ) -> NodalField {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let vals: Vec<f64> = m
            .dof_nodes()
            .iter()
            .map(|&n| {
                let q = m.nodes()[n];
                base(q[0], q[1]) + rng.gen_range(-0.5..0.5)
            })
            .collect();
        NodalField::new(m.clone(), vals, p, FieldRole::Solution).unwrap()
    }

    #[test]
    fn gradient_matches_energy_differences() {
        let m = square(4);
        for &p in &[1.5, 2.0, 3.0] {
            let load: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync> = Arc::new(|x, y| x - y + 0.3);
            let spec = EnergySpec::neumann(m.clone(), p, Load::Function(load)).unwrap();
            let u = random_field(&m, p, 3, |x, y| 2.0 + x + y);
            let g = spec.assemble_gradient(&u).unwrap();
            let h = 1e-6;
            let mut err: f64 = 0.0;
            for i in 0..m.dofs() {
                let mut v = u.values().to_vec();
                v[i] += h;
                let ep = spec.energy(&v);
                v[i] -= 2.0 * h;
                let em = spec.energy(&v);
                let fd = (ep - em) / (2.0 * h);
                err = err.max((fd - g[i]).abs());
            }
            let gn = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
            assert!(err <= 1e-6 * gn, "p={p}: {err} vs {gn}");
        }
    }

    #[test]
    fn hessian_vector_product_matches_gradient_differences() {
        let m = square(4);
        let p = 3.0;
        let spec = EnergySpec::neumann(m.clone(), p, Load::None).unwrap();
        // large gradients and values keep the γ = 1e-2 perturbation below 1e-5 relative
        let u = random_field(&m, p, 17, |x, y| 50.0 * x + 30.0 * y + 5.0);
        let hm = spec.assemble_hessian(&u, 1e-2).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(4);
        let dir: Vec<f64> = (0..m.dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut hv = vec![0.0; m.dofs()];
        hm.mul_vec(&dir, &mut hv);
        let step = 1e-6;
        let shifted = |s: f64| {
            let v: Vec<f64> = u
                .values()
                .iter()
                .zip(&dir)
                .map(|(a, d)| a + s * d)
                .collect();
            spec.gradient(&v).0
        };
        let (gp, gm) = (shifted(step), shifted(-step));
        let fd: Vec<f64> = gp
            .iter()
            .zip(&gm)
            .map(|(a, b)| (a - b) / (2.0 * step))
            .collect();
        let num: f64 = fd
            .iter()
            .zip(&hv)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let den: f64 = hv.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(num <= 1e-5 * den, "{num} / {den}");
    }

    #[test]
    fn ill_posed_specs_rejected() {
        let m = square(2);
        assert!(EnergySpec::new(
            m.clone(),
            2.0,
            true,
            false,
            Load::None,
            [0.0; 2],
            Constraint::None
        )
        .is_err());
        assert!(EnergySpec::neumann(m.clone(), 1.0, Load::None).is_err());
        assert!(EnergySpec::cell(m, 2.0).is_err());
    }
}
