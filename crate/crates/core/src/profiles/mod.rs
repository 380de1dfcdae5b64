//! Boundary profiles `G(x, y)`: positive, bounded, `L`-periodic in `y`, and
//! piecewise C¹ in `x` between a finite list of breakpoints.

mod expr;
mod piecewise;

pub use expr::{parse_expression, BinOp, Expr, Func, Var};
pub use piecewise::{build_piecewise_approx, PiecewiseOptions, PiecewiseProfile};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Step used for every finite-difference derivative of a profile.
pub const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum ProfileKind {
    Constant(f64),
    Expr(Expr),
    /// `pieces[i]` is active on `(breakpoints[i], breakpoints[i + 1])`.
    Piecewise {
        breakpoints: Vec<f64>,
        pieces: Vec<Expr>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    kind: ProfileKind,
    period: f64,
    g0: f64,
    g1: f64,
    slope_bound: Option<f64>,
}

/// Which one-sided limit to take when `x` sits on a breakpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// On-disk description of a profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breakpoints: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exprs: Option<Vec<String>>,
    #[serde(rename = "L")]
    pub period: f64,
    #[serde(rename = "G0", default, skip_serializing_if = "Option::is_none")]
    pub g0: Option<f64>,
    #[serde(rename = "G1", default, skip_serializing_if = "Option::is_none")]
    pub g1: Option<f64>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
}

impl Profile {
    pub fn new(
        kind: ProfileKind,
        period: f64,
        g0: f64,
        g1: f64,
        slope_bound: Option<f64>,
    ) -> Result<Profile> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::Profile(format!(
                "period L must be positive, got {period}"
            )));
        }
        if !(g0 > 0.0 && g0 <= g1 && g1.is_finite()) {
            return Err(Error::Profile(format!(
                "bounds must satisfy 0 < G0 <= G1, got G0={g0}, G1={g1}"
            )));
        }
        if let Some(m) = slope_bound {
            if !(m > 0.0) {
                return Err(Error::Profile(format!(
                    "derivative bound M must be positive, got {m}"
                )));
            }
        }
        if let ProfileKind::Piecewise {
            breakpoints,
            pieces,
        } = &kind
        {
            check_breakpoints(breakpoints)?;
            if pieces.len() + 1 != breakpoints.len() {
                return Err(Error::Profile(format!(
                    "{} breakpoints need {} expressions, got {}",
                    breakpoints.len(),
                    breakpoints.len() - 1,
                    pieces.len()
                )));
            }
        }
        Ok(Profile {
            kind,
            period,
            g0,
            g1,
            slope_bound,
        })
    }

    /// `G ≡ c` with bounds `[c, c]`.
    pub fn constant(c: f64, period: f64) -> Result<Profile> {
        Profile::new(ProfileKind::Constant(c), period, c, c, None)
    }

    /// Expression profile with declared bounds.
    pub fn expression(src: &str, period: f64, g0: f64, g1: f64) -> Result<Profile> {
        Profile::new(ProfileKind::Expr(Expr::parse(src)?), period, g0, g1, None)
    }

    /// Expression profile whose bounds are taken from a sampling pass.
    pub fn expression_sampled(src: &str, period: f64) -> Result<Profile> {
        let e = Expr::parse(src)?;
        let (lo, hi) = sampled_range(&ProfileKind::Expr(e.clone()), period)?;
        Profile::new(ProfileKind::Expr(e), period, lo, hi, None)
    }

    pub fn from_spec(spec: &ProfileSpec) -> Result<Profile> {
        let kind = match spec.kind.as_str() {
            "constant" => {
                let src = spec
                    .expr
                    .as_deref()
                    .ok_or_else(|| Error::Profile("constant profile needs 'expr'".into()))?;
                let e = Expr::parse(src)?;
                if e.uses(Var::X) || e.uses(Var::Y) {
                    return Err(Error::Profile(format!(
                        "constant profile depends on x or y: {src}"
                    )));
                }
                ProfileKind::Constant(e.eval(0.0, 0.0)?)
            }
            "expr" => {
                let src = spec
                    .expr
                    .as_deref()
                    .ok_or_else(|| Error::Profile("expr profile needs 'expr'".into()))?;
                ProfileKind::Expr(Expr::parse(src)?)
            }
            "piecewise" => {
                let breakpoints = spec.breakpoints.clone().ok_or_else(|| {
                    Error::Profile("piecewise profile needs 'breakpoints'".into())
                })?;
                let exprs = spec
                    .exprs
                    .as_ref()
                    .ok_or_else(|| Error::Profile("piecewise profile needs 'exprs'".into()))?;
                let pieces = exprs
                    .iter()
                    .map(|s| Expr::parse(s))
                    .collect::<Result<Vec<_>>>()?;
                ProfileKind::Piecewise {
                    breakpoints,
                    pieces,
                }
            }
            other => {
                return Err(Error::Profile(format!(
                    "unknown profile kind '{other}' (expected constant, expr or piecewise)"
                )))
            }
        };
        let (g0, g1) = match (spec.g0, spec.g1) {
            (Some(a), Some(b)) => (a, b),
            (a, b) => {
                let (lo, hi) = sampled_range(&kind, spec.period)?;
                (a.unwrap_or(lo), b.unwrap_or(hi))
            }
        };
        Profile::new(kind, spec.period, g0, g1, spec.m)
    }

    pub fn to_spec(&self) -> ProfileSpec {
        let mut spec = ProfileSpec {
            kind: String::new(),
            expr: None,
            breakpoints: None,
            exprs: None,
            period: self.period,
            g0: Some(self.g0),
            g1: Some(self.g1),
            m: self.slope_bound,
        };
        match &self.kind {
            ProfileKind::Constant(c) => {
                spec.kind = "constant".into();
                spec.expr = Some(format!("{c:?}"));
            }
            ProfileKind::Expr(e) => {
                spec.kind = "expr".into();
                spec.expr = Some(e.to_string());
            }
            ProfileKind::Piecewise {
                breakpoints,
                pieces,
            } => {
                spec.kind = "piecewise".into();
                spec.breakpoints = Some(breakpoints.clone());
                spec.exprs = Some(pieces.iter().map(|e| e.to_string()).collect());
            }
        }
        spec
    }

    /// Stable textual identity, used as a cache key.
    pub fn key(&self) -> String {
        serde_json::to_string(&self.to_spec()).unwrap_or_default()
    }

    pub fn kind(&self) -> &ProfileKind {
        &self.kind
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn g0(&self) -> f64 {
        self.g0
    }

    pub fn g1(&self) -> f64 {
        self.g1
    }

    pub fn slope_bound(&self) -> Option<f64> {
        self.slope_bound
    }

    /// `0 = ξ₀ < … < ξ_N = 1`.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.kind {
            ProfileKind::Piecewise { breakpoints, .. } => breakpoints.clone(),
            _ => vec![0.0, 1.0],
        }
    }

    pub fn is_x_independent(&self) -> bool {
        match &self.kind {
            ProfileKind::Constant(_) => true,
            ProfileKind::Expr(e) => !e.uses(Var::X),
            ProfileKind::Piecewise { .. } => false,
        }
    }

    pub fn is_flat(&self) -> bool {
        match &self.kind {
            ProfileKind::Constant(_) => true,
            ProfileKind::Expr(e) => !e.uses(Var::X) && !e.uses(Var::Y),
            ProfileKind::Piecewise { pieces, .. } => {
                pieces.iter().all(|e| !e.uses(Var::X) && !e.uses(Var::Y))
            }
        }
    }

    /// Index of the piece active at `x`; right-continuous except at `x = 1`.
    pub fn piece_index(&self, x: f64, side: Side) -> usize {
        match &self.kind {
            ProfileKind::Piecewise { breakpoints, .. } => piece_index(breakpoints, x, side),
            _ => 0,
        }
    }

    /// The expression that defines `G` on piece `i`, valid for every `x`.
    pub fn piece_expr(&self, i: usize) -> Expr {
        match &self.kind {
            ProfileKind::Constant(c) => Expr::constant(*c),
            ProfileKind::Expr(e) => e.clone(),
            ProfileKind::Piecewise { pieces, .. } => pieces[i].clone(),
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        self.eval_side(x, y, Side::Right)
    }

    pub fn eval_side(&self, x: f64, y: f64, side: Side) -> Result<f64> {
        match &self.kind {
            ProfileKind::Constant(c) => Ok(*c),
            ProfileKind::Expr(e) => e.eval(x, y),
            ProfileKind::Piecewise {
                breakpoints,
                pieces,
            } => pieces[piece_index(breakpoints, x, side)].eval(x, y),
        }
    }

    /// `y ↦ G(x, y)` as a standalone function of the fast variable.
    pub fn section(&self, x: f64, side: Side) -> Section {
        match &self.kind {
            ProfileKind::Constant(c) => Section::Constant(*c),
            _ => {
                let e = self.piece_expr(self.piece_index(x, side)).bind_x(x);
                if e.uses(Var::Y) {
                    Section::Expr(e)
                } else {
                    match e.eval(0.0, 0.0) {
                        Ok(c) => Section::Constant(c),
                        Err(_) => Section::Expr(e),
                    }
                }
            }
        }
    }

    /// `ε G(x, x/ε)`, the upper boundary of the thin domain.
    pub fn thin_height(&self, eps: f64, x: f64) -> Result<f64> {
        Ok(eps * self.eval(x, x / eps)?)
    }

    /// `G · factor`, bounds scaled accordingly.
    pub fn scaled(&self, factor: f64) -> Result<Profile> {
        let kind = match &self.kind {
            ProfileKind::Constant(c) => ProfileKind::Constant(c * factor),
            ProfileKind::Expr(e) => ProfileKind::Expr(e.clone().scale(factor)),
            ProfileKind::Piecewise {
                breakpoints,
                pieces,
            } => ProfileKind::Piecewise {
                breakpoints: breakpoints.clone(),
                pieces: pieces.iter().map(|e| e.clone().scale(factor)).collect(),
            },
        };
        Profile::new(
            kind,
            self.period,
            self.g0 * factor,
            self.g1 * factor,
            self.slope_bound.map(|m| m * factor),
        )
    }

    /// `G + t·h` for an x-independent perturbation `h(y)`.
    pub fn perturbed(&self, bump: &Expr, t: f64, g0: f64, g1: f64) -> Result<Profile> {
        if bump.uses(Var::X) {
            return Err(Error::Profile("perturbation must not depend on x".into()));
        }
        let add = |e: Expr| Expr::binary(BinOp::Add, e, bump.clone().scale(t));
        let kind = match &self.kind {
            ProfileKind::Constant(c) => ProfileKind::Expr(add(Expr::constant(*c))),
            ProfileKind::Expr(e) => ProfileKind::Expr(add(e.clone())),
            ProfileKind::Piecewise {
                breakpoints,
                pieces,
            } => ProfileKind::Piecewise {
                breakpoints: breakpoints.clone(),
                pieces: pieces.iter().cloned().map(add).collect(),
            },
        };
        Profile::new(kind, self.period, g0, g1, None)
    }

    /// Mean of `G(x, ·)` over one period: composite 4-point Gauss–Legendre on 64 panels.
    pub fn mean_over_period(&self, x: f64, side: Side) -> Result<f64> {
        let s = self.section(x, side);
        if let Section::Constant(c) = s {
            return Ok(c);
        }
        let l = self.period;
        crate::quad::gauss_legendre_composite(0.0, l, 64, |y| s.eval(y)).map(|v| v / l)
    }
}

/// One vertical slice `y ↦ G(x₀, y)` of a profile.
#[derive(Debug, Clone, PartialEq)]
pub enum Section {
    Constant(f64),
    Expr(Expr),
}

impl Section {
    pub fn eval(&self, y: f64) -> Result<f64> {
        match self {
            Section::Constant(c) => Ok(*c),
            Section::Expr(e) => e.eval(0.0, y),
        }
    }

    pub fn lifted(self, c: f64) -> Section {
        match self {
            Section::Constant(v) => Section::Constant(v + c),
            Section::Expr(e) => Section::Expr(e.add_constant(c)),
        }
    }

    pub fn expr(&self) -> Expr {
        match self {
            Section::Constant(c) => Expr::constant(*c),
            Section::Expr(e) => e.clone(),
        }
    }
}

fn check_breakpoints(b: &[f64]) -> Result<()> {
    if b.len() < 2 || b[0] != 0.0 || *b.last().unwrap() != 1.0 {
        return Err(Error::Profile(format!(
            "breakpoints must start at 0 and end at 1, got {b:?}"
        )));
    }
    if b.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Profile(format!(
            "breakpoints must be strictly increasing, got {b:?}"
        )));
    }
    Ok(())
}

fn piece_index(breakpoints: &[f64], x: f64, side: Side) -> usize {
    let n = breakpoints.len() - 1;
    let mut i = match side {
        Side::Right => breakpoints.partition_point(|&b| b <= x),
        Side::Left => breakpoints.partition_point(|&b| b < x),
    };
    i = i.saturating_sub(1);
    i.min(n - 1)
}

fn sampled_range(kind: &ProfileKind, period: f64) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let probe = Profile {
        kind: kind.clone(),
        period,
        g0: 1.0,
        g1: 1.0,
        slope_bound: None,
    };
    for (x, side) in validation_xs(&probe.breakpoints(), 32) {
        for j in 0..128 {
            let y = period * j as f64 / 128.0;
            let v = probe.eval_side(x, y, side)?;
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !(lo > 0.0) {
        return Err(Error::Hypothesis(format!(
            "sampled profile value {lo} is not positive"
        )));
    }
    Ok((lo, hi))
}

/// Sample abscissae per x-subinterval, endpoints taken as one-sided limits.
fn validation_xs(breakpoints: &[f64], per_interval: usize) -> Vec<(f64, Side)> {
    let mut xs = Vec::new();
    for w in breakpoints.windows(2) {
        for k in 0..=per_interval {
            let x = w[0] + (w[1] - w[0]) * k as f64 / per_interval as f64;
            let side = if k == per_interval {
                Side::Left
            } else {
                Side::Right
            };
            xs.push((x, side));
        }
    }
    xs
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationGrid {
    /// Samples per period in `y`.
    pub per_period: usize,
    /// Samples per x-subinterval.
    pub per_interval: usize,
}

impl Default for ValidationGrid {
    fn default() -> Self {
        ValidationGrid {
            per_period: 64,
            per_interval: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BreakpointLimits {
    pub x: f64,
    /// `sup_y |G(ξ+, y) − G(ξ−, y)|`
    pub max_jump: f64,
    pub left_mean: f64,
    pub right_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub min: f64,
    pub max: f64,
    pub periodicity_defect: f64,
    pub max_dy: f64,
    pub breakpoints: Vec<BreakpointLimits>,
    pub failures: Vec<String>,
    pub pass: bool,
}

/// Samples `G` and checks the bounds, periodicity and slope parts of (H).
pub fn validate_hypothesis(
    profile: &Profile,
    grid: ValidationGrid,
    tol: f64,
) -> Result<ValidationReport> {
    if grid.per_period < 16 || grid.per_interval < 16 {
        return Err(Error::Hypothesis(format!(
            "validation grid too coarse: need >= 16 samples, got {} per period and {} per interval",
            grid.per_period, grid.per_interval
        )));
    }
    let l = profile.period();
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut periodicity_defect: f64 = 0.0;
    let mut max_dy: f64 = 0.0;
    for (x, side) in validation_xs(&profile.breakpoints(), grid.per_interval) {
        for j in 0..grid.per_period {
            let y = l * j as f64 / grid.per_period as f64;
            let g = profile.eval_side(x, y, side)?;
            if g <= 0.0 {
                return Err(Error::Hypothesis(format!(
                    "G({x}, {y}) = {g} is not positive"
                )));
            }
            min = min.min(g);
            max = max.max(g);
            let shifted = profile.eval_side(x, y + l, side)?;
            periodicity_defect = periodicity_defect.max((shifted - g).abs());
            let dy = (profile.eval_side(x, y + FD_STEP, side)?
                - profile.eval_side(x, y - FD_STEP, side)?)
                / (2.0 * FD_STEP);
            max_dy = max_dy.max(dy.abs());
        }
    }

    let bps = profile.breakpoints();
    let mut limits = Vec::new();
    for &xi in &bps[1..bps.len() - 1] {
        let mut max_jump: f64 = 0.0;
        let (mut lm, mut rm) = (0.0, 0.0);
        for j in 0..grid.per_period {
            let y = l * j as f64 / grid.per_period as f64;
            let left = profile.eval_side(xi, y, Side::Left)?;
            let right = profile.eval_side(xi, y, Side::Right)?;
            max_jump = max_jump.max((right - left).abs());
            lm += left;
            rm += right;
        }
        limits.push(BreakpointLimits {
            x: xi,
            max_jump,
            left_mean: lm / grid.per_period as f64,
            right_mean: rm / grid.per_period as f64,
        });
    }

    let mut failures = Vec::new();
    if min < profile.g0() - tol {
        failures.push(format!("sampled min {min} below G0 = {}", profile.g0()));
    }
    if max > profile.g1() + tol {
        failures.push(format!("sampled max {max} above G1 = {}", profile.g1()));
    }
    if periodicity_defect > (1e-12 * profile.g1()).max(tol) {
        failures.push(format!("periodicity defect {periodicity_defect:e}"));
    }
    if let Some(m) = profile.slope_bound() {
        if max_dy > m * (1.0 + 1e-6) + tol {
            failures.push(format!("max |dG/dy| = {max_dy} exceeds M = {m}"));
        }
    }
    Ok(ValidationReport {
        min,
        max,
        periodicity_defect,
        max_dy,
        breakpoints: limits,
        pass: failures.is_empty(),
        failures,
    })
}

/// `sup_y |a − b| + sup_y |a' − b'|` for x-independent profiles with a common period.
pub fn c1_distance(a: &Profile, b: &Profile, samples: usize) -> Result<f64> {
    if (a.period() - b.period()).abs() > 1e-12 * a.period().max(b.period()) {
        return Err(Error::Profile(format!(
            "profiles have different periods {} and {}",
            a.period(),
            b.period()
        )));
    }
    if !a.is_x_independent() || !b.is_x_independent() {
        return Err(Error::Profile(
            "C1 distance needs x-independent profiles".into(),
        ));
    }
    let sa = a.section(0.5, Side::Right);
    let sb = b.section(0.5, Side::Right);
    let l = a.period();
    let mut dv: f64 = 0.0;
    let mut dd: f64 = 0.0;
    for j in 0..samples.max(1) {
        let y = l * j as f64 / samples.max(1) as f64;
        dv = dv.max((sa.eval(y)? - sb.eval(y)?).abs());
        let da = (sa.eval(y + FD_STEP)? - sa.eval(y - FD_STEP)?) / (2.0 * FD_STEP);
        let db = (sb.eval(y + FD_STEP)? - sb.eval(y - FD_STEP)?) / (2.0 * FD_STEP);
        dd = dd.max((da - db).abs());
    }
    Ok(dv + dd)
}
