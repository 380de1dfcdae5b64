//! The ε-problem on the thin domain `R^ε = {0 < x < 1, 0 < y < εG(x, x/ε)}`,
//! column averages, unfolding, the vertical stretch `P_{1+η}` and the
//! domain-dependence measurement.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::homog1d::Field1D;
use crate::mesh::{
    build_graph_mesh, build_strip_mesh, interpolate, FieldRole, Mesh, NodalField, GEOM_TOL,
};
use crate::plap::{
    grad_lp_power, grad_lp_power_weighted, lp_power, minimize, EnergySpec, Load, SolveConfig,
    SolveReport,
};
use crate::profiles::{Profile, Side};
use crate::quad::trapezoid;

pub type Forcing = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Mesh policy for `R^ε`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThinResolution {
    /// Columns per oscillation period `εL`; at least 8.
    pub points_per_period: usize,
    /// Vertical layers; at least 6.
    pub layers: usize,
    /// Floor on the number of columns, used alone for flat profiles.
    pub min_columns: usize,
}

impl Default for ThinResolution {
    fn default() -> Self {
        ThinResolution {
            points_per_period: 32,
            layers: 8,
            min_columns: 64,
        }
    }
}

#[derive(Clone)]
pub struct EpsilonProblem {
    pub profile: Profile,
    pub eps: f64,
    pub f: Forcing,
    pub p: f64,
    pub resolution: ThinResolution,
}

impl std::fmt::Debug for EpsilonProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EpsilonProblem")
            .field("profile", &self.profile.key())
            .field("eps", &self.eps)
            .field("p", &self.p)
            .field("resolution", &self.resolution)
            .finish()
    }
}

impl EpsilonProblem {
    pub fn new(
        profile: Profile,
        eps: f64,
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        p: f64,
        resolution: ThinResolution,
    ) -> Result<EpsilonProblem> {
        let prob = EpsilonProblem {
            profile,
            eps,
            f: Arc::new(f),
            p,
            resolution,
        };
        prob.validate()?;
        Ok(prob)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(Error::Config(format!(
                "epsilon must lie in (0, 1], got {}",
                self.eps
            )));
        }
        if !(self.p > 1.0 && self.p.is_finite()) {
            return Err(Error::Config(format!("p must exceed 1, got {}", self.p)));
        }
        let r = self.resolution;
        // an even count keeps the diagonal pattern identical in every period
        if r.points_per_period < 8 || r.points_per_period % 2 == 1 || r.layers < 6 {
            return Err(Error::Resolution(format!(
                "need an even number (at least 8) of points per period and 6 layers, got {} and {}",
                r.points_per_period, r.layers
            )));
        }
        Ok(())
    }

    /// Number of oscillation periods on `(0, 1)`.
    pub fn periods(&self) -> f64 {
        1.0 / (self.eps * self.profile.period())
    }

    pub fn columns(&self) -> usize {
        let r = self.resolution;
        if self.profile.is_flat() {
            return r.min_columns.max(1);
        }
        let n = (r.points_per_period as f64 * self.periods() - 1e-9).ceil() as usize;
        n.max(r.min_columns)
    }

    pub fn mesh(&self) -> Result<Mesh> {
        build_graph_mesh(
            |x| self.profile.thin_height(self.eps, x),
            (0.0, 1.0),
            self.columns(),
            self.resolution.layers,
            false,
        )
    }
}

#[derive(Debug, Clone)]
pub struct EpsilonSolution {
    pub u: NodalField,
    pub report: SolveReport,
    pub eps: f64,
    /// `|||u_ε|||_{W^{1,p}} = ε^{−1/p} ‖u_ε‖_{W^{1,p}}`.
    pub triple_w1p: f64,
    /// `|||f^ε|||_{L^{p'}}` with the load quadrature.
    pub triple_f: f64,
}

impl EpsilonSolution {
    /// `(|||u_ε|||^{p−1}, |||f^ε|||_{L^{p'}})`: the a-priori bound says the first is at most the second.
    pub fn apriori_bound(&self) -> (f64, f64) {
        let p = self.u.p();
        (self.triple_w1p.powf(p - 1.0), self.triple_f)
    }

    pub fn apriori_holds(&self, slack: f64) -> bool {
        let (a, b) = self.apriori_bound();
        a <= b + slack
    }
}

/// `ε^{−1}(∫|u|^p + ∫|∇u|^p)`.
pub fn triple_w1p_power(u: &NodalField, p: f64, eps: f64) -> f64 {
    (lp_power(u, p) + grad_lp_power(u, p)) / eps
}

/// Minimizes `(1/p)∫(|∇u|^p + |u|^p) − ∫f u` on a terrain mesh of `R^ε`.
pub fn solve_epsilon_problem(
    prob: &EpsilonProblem,
    config: &SolveConfig,
) -> Result<EpsilonSolution> {
    prob.validate()?;
    let p = prob.p;
    let mesh = Arc::new(prob.mesh()?);
    let f = prob.f.clone();
    let spec = EnergySpec::neumann(mesh.clone(), p, Load::Function(f))?;
    let start = NodalField::zeros(mesh.clone(), p, FieldRole::Solution);
    let (u, report) = minimize(&spec, config, &start)?;

    let q = p / (p - 1.0);
    let fq: f64 = spec
        .load_at_quadrature()
        .map(|vals| {
            mesh.geometry()
                .iter()
                .zip(vals)
                .map(|(g, v)| g.area / 3.0 * v.iter().map(|x| x.abs().powf(q)).sum::<f64>())
                .sum()
        })
        .unwrap_or(0.0);
    let eps = prob.eps;
    Ok(EpsilonSolution {
        triple_w1p: triple_w1p_power(&u, p, eps).powf(1.0 / p),
        triple_f: (fq / eps).powf(1.0 / q),
        u,
        report,
        eps,
    })
}

/// Pointwise samples of a function of `x`, linear in between, constant beyond the ends.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Samples1D {
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
}

impl Samples1D {
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.values[0];
        }
        if x >= self.xs[n - 1] {
            return self.values[n - 1];
        }
        let k = self.xs.partition_point(|&a| a <= x).clamp(1, n - 1);
        let (x0, x1) = (self.xs[k - 1], self.xs[k]);
        let s = (x - x0) / (x1 - x0);
        self.values[k - 1] + s * (self.values[k] - self.values[k - 1])
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,value")?;
        for (x, v) in self.xs.iter().zip(&self.values) {
            writeln!(w, "{x:.16e},{v:.16e}")?;
        }
        Ok(())
    }
}

/// Something that can be paired with test functions on `(0, 1)`.
pub trait Function1D {
    fn value_at(&self, x: f64) -> f64;
    /// Points where the function may have kinks.
    fn knots(&self) -> Vec<f64> {
        Vec::new()
    }
}

impl Function1D for Samples1D {
    fn value_at(&self, x: f64) -> f64 {
        self.eval(x)
    }
    fn knots(&self) -> Vec<f64> {
        self.xs.clone()
    }
}

impl Function1D for Field1D {
    fn value_at(&self, x: f64) -> f64 {
        self.eval(x)
    }
    fn knots(&self) -> Vec<f64> {
        self.xs()
    }
}

impl<F: Fn(f64) -> f64> Function1D for F {
    fn value_at(&self, x: f64) -> f64 {
        self(x)
    }
}

/// Midpoints of the columns of a terrain mesh, the default averaging grid.
pub fn column_midpoints(mesh: &Mesh) -> Result<Vec<f64>> {
    let t = mesh
        .terrain()
        .ok_or_else(|| Error::MeshMismatch("column average needs a terrain mesh".into()))?;
    Ok(t.xs.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect())
}

/// `(L / (|Y*(x)| ε)) ∫₀^{top(x)} u(x, y) dy` at each `x`, where `top` is the discrete
/// upper boundary and the integral is a 64-point trapezoid rule.
pub fn column_average(
    u: &NodalField,
    profile: &Profile,
    eps: f64,
    x_grid: &[f64],
) -> Result<Samples1D> {
    const POINTS: usize = 64;
    let t = u
        .mesh()
        .terrain()
        .ok_or_else(|| Error::MeshMismatch("column average needs a terrain mesh".into()))?;
    let mut values = Vec::with_capacity(x_grid.len());
    for &x in x_grid {
        let (lo, hi) = t.heights_at(x);
        let h = (hi - lo) / (POINTS - 1) as f64;
        let mut col = Vec::with_capacity(POINTS);
        for j in 0..POINTS {
            let y = if j == POINTS - 1 {
                hi
            } else {
                lo + h * j as f64
            };
            col.push(u.eval([x, y])?);
        }
        // |Y*(x)| = L r(x)
        let r = profile.mean_over_period(x, Side::Right)?;
        values.push(trapezoid(&col, h) / (r * eps));
    }
    Ok(Samples1D {
        xs: x_grid.to_vec(),
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunction {
    One,
    X,
    X2,
    SinPi,
    CosPi,
}

impl TestFunction {
    pub const DEFAULTS: [TestFunction; 5] = [
        TestFunction::One,
        TestFunction::X,
        TestFunction::X2,
        TestFunction::SinPi,
        TestFunction::CosPi,
    ];

    pub fn eval(self, x: f64) -> f64 {
        use std::f64::consts::PI;
        match self {
            TestFunction::One => 1.0,
            TestFunction::X => x,
            TestFunction::X2 => x * x,
            TestFunction::SinPi => (PI * x).sin(),
            TestFunction::CosPi => (PI * x).cos(),
        }
    }

    /// Identifier usable as a CSV column name.
    pub fn key(self) -> &'static str {
        match self {
            TestFunction::One => "one",
            TestFunction::X => "x",
            TestFunction::X2 => "x2",
            TestFunction::SinPi => "sin_pi",
            TestFunction::CosPi => "cos_pi",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TestFunction::One => "1",
            TestFunction::X => "x",
            TestFunction::X2 => "x^2",
            TestFunction::SinPi => "sin(pi x)",
            TestFunction::CosPi => "cos(pi x)",
        }
    }
}

/// `|∫₀¹ (a − b) φ dx|` for each test function `φ`.
pub fn weak_compare(a: &dyn Function1D, b: &dyn Function1D, tests: &[TestFunction]) -> Vec<f64> {
    // two-point Gauss on the merged knots, refined to at least 1024 pieces
    let mut knots: Vec<f64> = a.knots();
    knots.extend(b.knots());
    knots.extend((0..=1024).map(|k| k as f64 / 1024.0));
    knots.retain(|x| (0.0..=1.0).contains(x));
    knots.sort_by(|x, y| x.total_cmp(y));
    knots.dedup_by(|x, y| (*x - *y).abs() < 1e-14);
    let mut out = vec![0.0; tests.len()];
    for w in knots.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        let h = x1 - x0;
        for s in crate::quad::GAUSS2_UNIT {
            let x = x0 + s * h;
            let d = a.value_at(x) - b.value_at(x);
            for (o, t) in out.iter_mut().zip(tests) {
                *o += 0.5 * h * d * t.eval(x);
            }
        }
    }
    out.iter().map(|v| v.abs()).collect()
}

/// Unfolded values on one `εL`-cell (or on a leftover piece, where they are zero).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnfoldSample {
    pub cell: usize,
    pub x_range: (f64, f64),
    pub values: Vec<f64>,
    pub leftover: bool,
}

/// Periodic unfolding sampled at a reference quadrature of `Y*`.
#[derive(Debug, Clone, Serialize)]
pub struct PeriodicUnfolding {
    pub eps: f64,
    pub period: f64,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub samples: Vec<UnfoldSample>,
}

/// Edge-midpoint quadrature of a mesh: points and weights `area/3`.
pub fn mesh_quadrature(mesh: &Mesh) -> (Vec<[f64; 2]>, Vec<f64>) {
    let mut pts = Vec::with_capacity(3 * mesh.triangles().len());
    let mut wts = Vec::with_capacity(pts.capacity());
    for (tri, g) in mesh.triangles().iter().zip(mesh.geometry()) {
        let v = tri.map(|i| mesh.nodes()[i]);
        for (a, b) in [(0, 1), (1, 2), (2, 0)] {
            pts.push([0.5 * (v[a][0] + v[b][0]), 0.5 * (v[a][1] + v[b][1])]);
            wts.push(g.area / 3.0);
        }
    }
    (pts, wts)
}

/// Indices `k` of the cells `[εLk, εL(k+1)]` that lie inside `(a, b)`.
fn complete_cells(eps: f64, period: f64, a: f64, b: f64) -> std::ops::Range<usize> {
    let c = eps * period;
    let first = (a / c - 1e-9).ceil().max(0.0) as usize;
    let end = (b / c + 1e-9).floor().max(0.0) as usize;
    first..end.max(first)
}

/// `T_ε u(x, y) = u(εL[x/(εL)] + εy₁, εy₂)` for `x` in the complete cells of `interval`,
/// sampled at the edge midpoints of `cell_mesh`.
pub fn unfold_periodic(
    u: &NodalField,
    cell_mesh: &Mesh,
    eps: f64,
    period: f64,
    interval: (f64, f64),
) -> Result<PeriodicUnfolding> {
    let (points, weights) = mesh_quadrature(cell_mesh);
    let c = eps * period;
    let (a, b) = interval;
    let cells = complete_cells(eps, period, a, b);
    let mut samples = Vec::new();
    let (mut lo, mut hi) = (b, a);
    for k in cells.clone() {
        let x0 = c * k as f64;
        let mut values = Vec::with_capacity(points.len());
        for q in &points {
            values.push(u.eval([x0 + eps * q[0], eps * q[1]])?);
        }
        samples.push(UnfoldSample {
            cell: k,
            x_range: (x0, x0 + c),
            values,
            leftover: false,
        });
        lo = lo.min(x0);
        hi = hi.max(x0 + c);
    }
    if cells.is_empty() {
        (lo, hi) = (b, b);
    }
    for (x0, x1) in [(a, lo.max(a)), (hi.min(b), b)] {
        if x1 - x0 > 1e-12 {
            samples.push(UnfoldSample {
                cell: usize::MAX,
                x_range: (x0, x1),
                values: vec![0.0; points.len()],
                leftover: true,
            });
        }
    }
    Ok(PeriodicUnfolding {
        eps,
        period,
        points,
        weights,
        samples,
    })
}

impl PeriodicUnfolding {
    /// `(1/L) ∫_{ω × Y*} T_ε u`.
    pub fn integral(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| {
                let len = s.x_range.1 - s.x_range.0;
                len * s
                    .values
                    .iter()
                    .zip(&self.weights)
                    .map(|(v, w)| v * w)
                    .sum::<f64>()
            })
            .sum::<f64>()
            / self.period
    }

    /// `‖T_ε u‖_{L^p(ω × Y*)}`.
    pub fn lp_norm(&self, p: f64) -> f64 {
        self.samples
            .iter()
            .map(|s| {
                let len = s.x_range.1 - s.x_range.0;
                len * s
                    .values
                    .iter()
                    .zip(&self.weights)
                    .map(|(v, w)| w * v.abs().powf(p))
                    .sum::<f64>()
            })
            .sum::<f64>()
            .powf(1.0 / p)
    }

    /// Union of the complete cells.
    fn complete_range(&self) -> Vec<(f64, f64)> {
        self.samples
            .iter()
            .filter(|s| !s.leftover)
            .map(|s| s.x_range)
            .collect()
    }

    /// Compares the integral and norm identities against direct integration of `u`
    /// over the complete cells with the mesh quadrature of `u`.
    pub fn check(&self, u: &NodalField, p: f64) -> UnfoldingCheck {
        let ranges = self.complete_range();
        let (s1, sp) = direct_integrals(u, p, |x| ranges.iter().any(|&(a, b)| x > a && x < b));
        UnfoldingCheck {
            integral_unfolded: self.integral(),
            integral_direct: s1 / self.eps,
            norm_unfolded: self.lp_norm(p),
            norm_direct: (self.period / self.eps).powf(1.0 / p) * sp.powf(1.0 / p),
        }
    }
}

/// `(∫u, ∫|u|^p)` over the triangles whose centroid satisfies `keep`.
fn direct_integrals(u: &NodalField, p: f64, keep: impl Fn(f64) -> bool) -> (f64, f64) {
    let m = u.mesh();
    let v = u.values();
    let (mut s1, mut sp) = (0.0, 0.0);
    for (t, tri) in m.triangles().iter().enumerate() {
        let cx = tri.iter().map(|&i| m.nodes()[i][0]).sum::<f64>() / 3.0;
        if !keep(cx) {
            continue;
        }
        let d = m.triangle_dofs(t);
        let w = m.geometry()[t].area / 3.0;
        for (a, b) in [(0, 1), (1, 2), (2, 0)] {
            let q = 0.5 * (v[d[a]] + v[d[b]]);
            s1 += w * q;
            sp += w * q.abs().powf(p);
        }
    }
    (s1, sp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnfoldingCheck {
    pub integral_unfolded: f64,
    pub integral_direct: f64,
    pub norm_unfolded: f64,
    pub norm_direct: f64,
}

impl UnfoldingCheck {
    pub fn integral_defect(&self) -> f64 {
        (self.integral_unfolded - self.integral_direct).abs()
    }

    pub fn norm_defect(&self) -> f64 {
        (self.norm_unfolded - self.norm_direct).abs()
    }
}

/// Locally periodic unfolding sampled on a midpoint grid of `(0, L) × (0, G1)`,
/// one block of `n1 · n2` values per cell, extended by zero outside `R^ε`.
#[derive(Debug, Clone, Serialize)]
pub struct LocallyPeriodicUnfolding {
    pub eps: f64,
    pub period: f64,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    pub cells: Vec<(f64, f64)>,
    /// `values[k][i * y2.len() + j]` at `(y1[i], y2[j])` on cell `k`.
    pub values: Vec<Vec<f64>>,
}

pub fn unfold_locally_periodic(
    u: &NodalField,
    profile: &Profile,
    eps: f64,
    grid: (usize, usize),
) -> Result<LocallyPeriodicUnfolding> {
    let (n1, n2) = grid;
    if n1 == 0 || n2 == 0 {
        return Err(Error::Config("unfolding grid must be nonempty".into()));
    }
    let l = profile.period();
    let top = profile.g1();
    let y1: Vec<f64> = (0..n1).map(|i| (i as f64 + 0.5) * l / n1 as f64).collect();
    let y2: Vec<f64> = (0..n2)
        .map(|j| (j as f64 + 0.5) * top / n2 as f64)
        .collect();
    let c = eps * l;
    let count = (1.0 / c - 1e-9).ceil() as usize;
    let mut cells = Vec::with_capacity(count);
    let mut values = Vec::with_capacity(count);
    for k in 0..count {
        let x0 = c * k as f64;
        cells.push((x0, (x0 + c).min(1.0)));
        let mut block = Vec::with_capacity(n1 * n2);
        for &a in &y1 {
            for &b in &y2 {
                block.push(u.eval_or_zero([x0 + eps * a, eps * b]));
            }
        }
        values.push(block);
    }
    Ok(LocallyPeriodicUnfolding {
        eps,
        period: l,
        y1,
        y2,
        cells,
        values,
    })
}

/// Integral identity `(1/L)∫ T^lp_ε u = (1/ε)∫_{R^ε} u` over the complete cells,
/// with the mesh quadrature of `u` pulled back to reference coordinates and the
/// unfolded values obtained through point location.
pub fn locally_periodic_identity(u: &NodalField, eps: f64, period: f64) -> Result<UnfoldingCheck> {
    let c = eps * period;
    let cells = complete_cells(eps, period, 0.0, 1.0);
    let m = u.mesh();
    let (pts, wts) = mesh_quadrature(m);
    let mut unfolded = 0.0;
    let mut unfolded_p = 0.0;
    for (t, tri) in m.triangles().iter().enumerate() {
        let cx = tri.iter().map(|&i| m.nodes()[i][0]).sum::<f64>() / 3.0;
        let k = (cx / c).floor() as usize;
        if !cells.contains(&k) {
            continue;
        }
        let x0 = c * k as f64;
        for q in 3 * t..3 * t + 3 {
            let y = [(pts[q][0] - x0) / eps, pts[q][1] / eps];
            let w = wts[q] / (eps * eps);
            let v = u.eval([x0 + eps * y[0], eps * y[1]]).unwrap_or(0.0);
            // T^lp is constant in x across the cell, of length εL
            unfolded += c * w * v;
            unfolded_p += c * w * v.abs().powf(u.p());
        }
    }
    let (lo, hi) = (c * cells.start as f64, c * cells.end as f64);
    let (s1, sp) = direct_integrals(u, u.p(), |x| x > lo && x < hi);
    let p = u.p();
    Ok(UnfoldingCheck {
        integral_unfolded: unfolded / period,
        integral_direct: s1 / eps,
        norm_unfolded: unfolded_p.powf(1.0 / p),
        norm_direct: (period / eps).powf(1.0 / p) * sp.powf(1.0 / p),
    })
}

/// `(P_{1+η}u)(x, y) = u(x, y/(1+η))` on `target`, the vertical stretch of `u`'s mesh.
pub fn apply_p(u: &NodalField, eta: f64, target: Arc<Mesh>) -> Result<NodalField> {
    if !(eta >= 0.0) {
        return Err(Error::IllPosed(format!("η must be >= 0, got {eta}")));
    }
    if let (Some(a), Some(b)) = (u.mesh().terrain(), target.terrain()) {
        let same = a.xs.len() == b.xs.len()
            && a.xs
                .iter()
                .zip(&b.xs)
                .all(|(x, y)| (x - y).abs() <= GEOM_TOL);
        if !same {
            return Err(Error::MeshMismatch(
                "P_{1+η} needs matching column grids".into(),
            ));
        }
    }
    let s = 1.0 + eta;
    let mut values = Vec::with_capacity(target.dofs());
    for &n in target.dof_nodes() {
        let q = target.nodes()[n];
        values.push(u.eval([q[0], q[1] / s])?);
    }
    NodalField::new(target, values, u.p(), u.role())
}

/// `‖w‖^p_{W^{1,p}_{1+η}} = (1/(1+η)) [‖w‖^p_{L^p} + ‖K_{1+η}∇w‖^p_{L^p}]`, `K = diag(1, 1+η)`.
pub fn stretch_norm_power(w: &NodalField, p: f64, eta: f64) -> f64 {
    (lp_power(w, p) + grad_lp_power_weighted(w, p, 1.0 + eta)) / (1.0 + eta)
}

/// `‖w‖^p_{W^{1,p}}`.
pub fn w1p_power(w: &NodalField, p: f64) -> f64 {
    lp_power(w, p) + grad_lp_power(w, p)
}

/// The three terms of the domain-dependence estimate and their sum.
#[derive(Debug, Clone, Serialize)]
pub struct DomainDependence {
    pub eps: f64,
    pub delta: f64,
    /// Sampled `sup |G_ε − Ĝ_ε|`.
    pub measured_sup: f64,
    /// `|||u_ε − û_ε|||^p` on `R^ε ∩ R̂^ε`.
    pub intersection: f64,
    /// `|||u_ε|||^p` on `R^ε ∖ R̂^ε`.
    pub outer: f64,
    /// `|||û_ε|||^p` on `R̂^ε ∖ R^ε`.
    pub inner: f64,
    pub total: f64,
    pub solutions: [EpsilonSummary; 2],
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EpsilonSummary {
    pub dofs: usize,
    pub iterations: usize,
    pub triple_w1p: f64,
    pub triple_f: f64,
    pub wall_time: f64,
}

impl From<&EpsilonSolution> for EpsilonSummary {
    fn from(s: &EpsilonSolution) -> Self {
        EpsilonSummary {
            dofs: s.u.mesh().dofs(),
            iterations: s.report.iterations,
            triple_w1p: s.triple_w1p,
            triple_f: s.triple_f,
            wall_time: s.report.wall_time,
        }
    }
}

/// Samples `sup_x |G(x, x/ε) − Ĝ(x, x/ε)|` on the mesh columns and a fine uniform grid.
pub fn sup_distance(g: &Profile, ghat: &Profile, eps: f64, columns: usize) -> Result<f64> {
    let n = (16 * columns).max(4096);
    let mut m = 0.0f64;
    for k in 0..=n {
        let x = k as f64 / n as f64;
        m = m.max((g.eval(x, x / eps)? - ghat.eval(x, x / eps)?).abs());
    }
    Ok(m)
}

/// Solves on `R^ε` and `R̂^ε` with a shared column grid and measures the three terms.
pub fn domain_dependence(
    g: &EpsilonProblem,
    ghat: &Profile,
    delta: f64,
    config: &SolveConfig,
) -> Result<DomainDependence> {
    let u = solve_epsilon_problem(g, config)?;
    domain_dependence_with(g, &u, ghat, delta, config)
}

/// As [`domain_dependence`], reusing a solution on `R^ε`.
pub fn domain_dependence_with(
    g: &EpsilonProblem,
    u: &EpsilonSolution,
    ghat: &Profile,
    delta: f64,
    config: &SolveConfig,
) -> Result<DomainDependence> {
    let eps = g.eps;
    let p = g.p;
    let columns = g.columns();
    let measured = sup_distance(&g.profile, ghat, eps, columns)?;
    if measured > delta * (1.0 + 1e-12) + 1e-15 {
        return Err(Error::Hypothesis(format!(
            "sampled sup |G_ε − Ĝ_ε| = {measured} exceeds δ = {delta}"
        )));
    }
    // force the same column grid on the second domain
    let mut hat = g.clone();
    hat.profile = ghat.clone();
    hat.resolution.min_columns = columns;
    if hat.columns() != columns {
        return Err(Error::MeshMismatch(format!(
            "domain meshes need the same columns, got {columns} and {}",
            hat.columns()
        )));
    }
    let uh = solve_epsilon_problem(&hat, config)?;
    for s in [u, &uh] {
        if s.triple_f > 1.0 + 1e-12 {
            return Err(Error::Hypothesis(format!(
                "|||f|||_{{L^p'}} = {} exceeds 1",
                s.triple_f
            )));
        }
    }

    let ta = u.u.mesh().terrain().expect("terrain mesh");
    let tb = uh.u.mesh().terrain().expect("terrain mesh");
    if ta.xs.len() != tb.xs.len() {
        return Err(Error::MeshMismatch(
            "domain meshes must share columns".into(),
        ));
    }
    let top_a = |x: f64| Ok(ta.heights_at(x).1);
    let top_b = |x: f64| Ok(tb.heights_at(x).1);
    let low = |x: f64| Ok(ta.heights_at(x).1.min(tb.heights_at(x).1));
    let layers = g.resolution.layers;

    let inter = Arc::new(build_graph_mesh(low, (0.0, 1.0), columns, layers, false)?);
    let ua = interpolate(&u.u, inter.clone())?;
    let ub = interpolate(&uh.u, inter.clone())?;
    let diff: Vec<f64> = ua
        .values()
        .iter()
        .zip(ub.values())
        .map(|(a, b)| a - b)
        .collect();
    let diff = NodalField::new(inter, diff, p, FieldRole::Datum)?;
    let intersection = w1p_power(&diff, p) / eps;

    let strip_term = |field: &NodalField, top: &dyn Fn(f64) -> Result<f64>| -> Result<f64> {
        let any = ta
            .xs
            .iter()
            .any(|&x| top(x).unwrap_or(0.0) - low(x).unwrap_or(0.0) > GEOM_TOL);
        if !any {
            return Ok(0.0);
        }
        let strip = Arc::new(build_strip_mesh(
            low,
            |x| top(x),
            (0.0, 1.0),
            columns,
            layers,
        )?);
        let v = interpolate(field, strip)?;
        Ok(w1p_power(&v, p) / eps)
    };
    let outer = strip_term(&u.u, &top_a)?;
    let inner = strip_term(&uh.u, &top_b)?;
    Ok(DomainDependence {
        eps,
        delta,
        measured_sup: measured,
        intersection,
        outer,
        inner,
        total: intersection + outer + inner,
        solutions: [u.into(), (&uh).into()],
    })
}
