//! The homogenized Neumann problem on `(0, 1)`:
//!
//! ```text
//! ∫₀¹ q |u'|^{p−2} u' φ' + r |u|^{p−2} u φ = ∫₀¹ f̂ φ
//! ```
//!
//! discretized with P1 elements and solved as the minimization of
//! `(1/p)∫q|u'|^p + (1/p)∫r|u|^p − ∫f̂u`.

use std::io::Write;
use std::sync::Arc;

use crate::cell::EffectiveCoefficients;
use crate::error::{Error, Result};
use crate::plap::{
    a_p_scalar, flux_sensitivity, gradient_floor, minimize_objective, CsrMatrix, Objective,
    SolveConfig, SolveReport,
};
use crate::quad::GAUSS2_UNIT;

/// Nodal values on a uniform grid of `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field1D {
    pub values: Vec<f64>,
    pub p: f64,
}

impl Field1D {
    pub fn new(values: Vec<f64>, p: f64) -> Result<Field1D> {
        if values.len() < 2 {
            return Err(Error::Config("a 1D field needs at least 2 nodes".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::IllPosed("non-finite value in 1D field".into()));
        }
        Ok(Field1D { values, p })
    }

    pub fn from_fn(n: usize, p: f64, f: impl Fn(f64) -> f64) -> Field1D {
        let values = (0..=n).map(|i| f(i as f64 / n as f64)).collect();
        Field1D { values, p }
    }

    pub fn elements(&self) -> usize {
        self.values.len() - 1
    }

    pub fn h(&self) -> f64 {
        1.0 / self.elements() as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 / self.elements() as f64
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.values.len()).map(|i| self.x(i)).collect()
    }

    /// Linear interpolation, constant beyond `[0, 1]`.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.elements();
        let t = (x * n as f64).clamp(0.0, n as f64);
        let i = (t.floor() as usize).min(n - 1);
        let s = t - i as f64;
        self.values[i] + s * (self.values[i + 1] - self.values[i])
    }

    /// `(‖u − v‖_{L^p}^p, ‖u' − v'‖_{L^p}^p)` with two-point Gauss per element; grids must match.
    fn distance_powers(&self, other: &Field1D, p: f64) -> Result<(f64, f64)> {
        if self.values.len() != other.values.len() {
            return Err(Error::MeshMismatch(format!(
                "1D grids differ: {} vs {} nodes",
                self.values.len(),
                other.values.len()
            )));
        }
        let h = self.h();
        let d: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        let (mut a, mut b) = (0.0, 0.0);
        for e in 0..self.elements() {
            for s in GAUSS2_UNIT {
                let v = d[e] + s * (d[e + 1] - d[e]);
                a += 0.5 * h * v.abs().powf(p);
            }
            b += h * ((d[e + 1] - d[e]) / h).abs().powf(p);
        }
        Ok((a, b))
    }

    pub fn lp_distance(&self, other: &Field1D, p: f64) -> Result<f64> {
        Ok(self.distance_powers(other, p)?.0.powf(1.0 / p))
    }

    pub fn w1p_distance(&self, other: &Field1D, p: f64) -> Result<f64> {
        let (a, b) = self.distance_powers(other, p)?;
        Ok((a + b).powf(1.0 / p))
    }

    pub fn max_distance(&self, other: &Field1D) -> Result<f64> {
        if self.values.len() != other.values.len() {
            return Err(Error::MeshMismatch("1D grids differ".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// `x,u` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,u")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{:.16e},{:.16e}", self.x(i), v)?;
        }
        Ok(())
    }
}

/// Right-hand side of the limit problem.
#[derive(Clone)]
pub enum FHat {
    Field(Field1D),
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl FHat {
    pub fn function(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> FHat {
        FHat::Function(Arc::new(f))
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            FHat::Field(f) => f.eval(x),
            FHat::Function(f) => f(x),
        }
    }
}

/// `x ↦ r(x) f(x)` on the nodes of an `n`-element grid, the weak limit of the
/// column-averaged load for `y`-independent `f`.
pub fn fhat_from(
    f: impl Fn(f64) -> f64,
    coeffs: &EffectiveCoefficients,
    n: usize,
    p: f64,
) -> Field1D {
    Field1D::from_fn(n, p, |x| coeffs.r_at(x) * f(x))
}

struct Energy1D {
    p: f64,
    h: f64,
    q: Vec<f64>,
    r: Vec<f64>,
    /// `f̂` at the two Gauss points of each element.
    f: Vec<[f64; 2]>,
}

impl Energy1D {
    fn at_gauss(u: &[f64], e: usize) -> [f64; 2] {
        [
            u[e] + GAUSS2_UNIT[0] * (u[e + 1] - u[e]),
            u[e] + GAUSS2_UNIT[1] * (u[e + 1] - u[e]),
        ]
    }
}

impl Objective for Energy1D {
    fn dofs(&self) -> usize {
        self.q.len() + 1
    }

    fn energy(&self, u: &[f64]) -> f64 {
        let (p, h) = (self.p, self.h);
        let mut e = 0.0;
        for k in 0..self.q.len() {
            let du = (u[k + 1] - u[k]) / h;
            e += h * self.q[k] * du.abs().powf(p) / p;
            let g = Energy1D::at_gauss(u, k);
            for s in 0..2 {
                e += 0.5 * h * (self.r[k] * g[s].abs().powf(p) / p - self.f[k][s] * g[s]);
            }
        }
        e
    }

    fn gradient(&self, u: &[f64]) -> (Vec<f64>, f64) {
        let (p, h) = (self.p, self.h);
        let n = u.len();
        let mut g = vec![0.0; n];
        let mut abs = vec![0.0; n];
        let mut sens = vec![0.0; n];
        for k in 0..self.q.len() {
            let du = (u[k + 1] - u[k]) / h;
            let flux = self.q[k] * a_p_scalar(du, p);
            let ddu = f64::EPSILON * (u[k].abs() + u[k + 1].abs()) / h;
            let sf = self.q[k] * flux_sensitivity(du.abs(), ddu, p);
            g[k] -= flux;
            g[k + 1] += flux;
            for i in [k, k + 1] {
                abs[i] += flux.abs();
                sens[i] += sf;
            }
            let ug = Energy1D::at_gauss(u, k);
            for s in 0..2 {
                let c = 0.5 * h * (self.r[k] * a_p_scalar(ug[s], p) - self.f[k][s]);
                let dm = 0.5
                    * h
                    * self.r[k]
                    * flux_sensitivity(ug[s].abs(), f64::EPSILON * ug[s].abs(), p);
                let phi = [1.0 - GAUSS2_UNIT[s], GAUSS2_UNIT[s]];
                for i in 0..2 {
                    g[k + i] += c * phi[i];
                    abs[k + i] += (c * phi[i]).abs();
                    sens[k + i] += dm * phi[i];
                }
            }
        }
        (g, gradient_floor(&abs, &sens))
    }

    fn hessian(&self, u: &[f64], gamma: f64) -> CsrMatrix {
        self.matrix(u, gamma, None)
    }

    fn majorant(&self, u: &[f64], gamma: f64) -> Option<CsrMatrix> {
        if self.p >= 2.0 {
            return None;
        }
        // weights are capped at the size of one-ulp changes of u
        let umax = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let du = if umax > 0.0 {
            f64::EPSILON * umax
        } else {
            gamma
        };
        Some(self.matrix(u, gamma, Some((du / self.h, du))))
    }

    fn mean_weights(&self) -> Option<&[f64]> {
        None
    }
}

impl Energy1D {
    /// Newton matrix, or the reweighted one with weights `max(|s|, δ)^{p−2}`.
    fn matrix(&self, u: &[f64], gamma: f64, floor: Option<(f64, f64)>) -> CsrMatrix {
        let (p, h) = (self.p, self.h);
        let g2 = gamma * gamma;
        let weight = |s: f64, floor: Option<f64>| {
            if p == 2.0 {
                1.0
            } else if let Some(d) = floor {
                s.abs().max(d).powf(p - 2.0)
            } else {
                let t = g2 + s * s;
                t.powf(0.5 * (p - 4.0)) * (g2 + (p - 1.0) * s * s)
            }
        };
        let mut trip = Vec::with_capacity(4 * self.q.len() * 3);
        for k in 0..self.q.len() {
            let du = (u[k + 1] - u[k]) / h;
            let a = self.q[k] * weight(du, floor.map(|f| f.0)) / h;
            trip.push((k, k, a));
            trip.push((k + 1, k + 1, a));
            trip.push((k, k + 1, -a));
            trip.push((k + 1, k, -a));
            let ug = Energy1D::at_gauss(u, k);
            for s in 0..2 {
                let m = 0.5 * h * self.r[k] * weight(ug[s], floor.map(|f| f.1));
                let phi = [1.0 - GAUSS2_UNIT[s], GAUSS2_UNIT[s]];
                for i in 0..2 {
                    for j in 0..2 {
                        trip.push((k + i, k + j, m * phi[i] * phi[j]));
                    }
                }
            }
        }
        CsrMatrix::from_triplets(self.q.len() + 1, &trip)
    }
}

/// P1 solve of the limit problem on `n` uniform elements; `q`, `r` taken at element midpoints.
pub fn solve_homogenized(
    coeffs: &EffectiveCoefficients,
    fhat: &FHat,
    p: f64,
    n: usize,
    config: &SolveConfig,
) -> Result<(Field1D, SolveReport)> {
    if !(p > 1.0) {
        return Err(Error::IllPosed(format!("p must exceed 1, got {p}")));
    }
    if n < 4 {
        return Err(Error::Config(format!("need at least 4 elements, got {n}")));
    }
    let h = 1.0 / n as f64;
    let mut q = Vec::with_capacity(n);
    let mut r = Vec::with_capacity(n);
    let mut f = Vec::with_capacity(n);
    for k in 0..n {
        let x0 = k as f64 * h;
        let mid = x0 + 0.5 * h;
        let (qk, rk) = (coeffs.q_at(mid), coeffs.r_at(mid));
        if !(qk > 0.0 && rk > 0.0) {
            return Err(Error::IllPosed(format!(
                "coefficients must be positive, got q={qk}, r={rk} at x={mid}"
            )));
        }
        q.push(qk);
        r.push(rk);
        f.push([
            fhat.eval(x0 + GAUSS2_UNIT[0] * h),
            fhat.eval(x0 + GAUSS2_UNIT[1] * h),
        ]);
    }
    let obj = Energy1D { p, h, q, r, f };
    let (u, report) = minimize_objective(&obj, config, vec![0.0; n + 1])?;
    Ok((Field1D::new(u, p)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constants_solve_unit_problem() {
        let c = EffectiveCoefficients::constant(1.0, 1.0);
        for &p in &[1.5, 2.0, 2.5, 4.0] {
            let (u, _) =
                solve_homogenized(&c, &FHat::function(|_| 1.0), p, 32, &SolveConfig::default())
                    .unwrap();
            assert!(u.values.iter().all(|v| (v - 1.0).abs() < 1e-10), "p={p}");
        }
    }

    #[test]
    fn zero_load_gives_zero() {
        let c = EffectiveCoefficients::constant(1.0, 1.0);
        let (u, _) = solve_homogenized(
            &c,
            &FHat::function(|_| 0.0),
            3.0,
            16,
            &SolveConfig::default(),
        )
        .unwrap();
        assert!(u.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn cosine_eigenfunction() {
        let c = EffectiveCoefficients::constant(1.0, 1.0);
        let f = FHat::function(|x| (PI * x).cos());
        let (u, _) = solve_homogenized(&c, &f, 2.0, 256, &SolveConfig::default()).unwrap();
        let exact = Field1D::from_fn(256, 2.0, |x| (PI * x).cos() / (1.0 + PI * PI));
        assert!(u.max_distance(&exact).unwrap() <= 1e-4);
    }

    #[test]
    fn nonpositive_coefficients_rejected() {
        let c =
            EffectiveCoefficients::from_samples(vec![0.0, 1.0], vec![1.0, -1.0], vec![1.0, 1.0])
                .unwrap();
        let err = solve_homogenized(
            &c,
            &FHat::function(|_| 1.0),
            2.0,
            8,
            &SolveConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::IllPosed(_)));
    }

    #[test]
    fn fhat_scales_by_r() {
        let c = EffectiveCoefficients::constant(1.0, 2.0);
        let f = fhat_from(|x| x, &c, 4, 2.0);
        assert_eq!(f.values, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
    }

    #[test]
    fn csv_format() {
        let f = Field1D::from_fn(2, 2.0, |x| x);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("x,u\n0.0000000000000000e0,"));
        assert_eq!(s.lines().count(), 4);
    }
}
