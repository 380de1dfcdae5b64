//! The four studies as config-driven pipelines: homogenization convergence,
//! piecewise consistency, domain dependence and coefficient continuity.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cell::{
    piecewise_coefficients, sample_coefficients, solve_cell, CellResolution, CoefficientCache,
    EffectiveCoefficients,
};
use crate::error::{Error, Result};
use crate::homog1d::{fhat_from, solve_homogenized, FHat, Field1D};
use crate::mesh::build_graph_mesh;
use crate::plap::SolveConfig;
use crate::profiles::{
    build_piecewise_approx, c1_distance, Expr, PiecewiseOptions, Profile, ProfileSpec, Side, Var,
};
use crate::quad::gauss_legendre_composite;
use crate::thin2d::{
    column_average, column_midpoints, domain_dependence_with, solve_epsilon_problem,
    unfold_periodic, weak_compare, EpsilonProblem, EpsilonSolution, EpsilonSummary, TestFunction,
    ThinResolution,
};

/// Largest number of unknowns any single solve may have.
pub const MAX_DOFS: usize = 200_000;

/// Slack on the a-priori bound `|||u|||^{p−1} ≤ |||f|||`.
pub const APRIORI_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    Convergence,
    Piecewise,
    DomainDependence,
    Appendix,
}

impl Study {
    pub fn name(self) -> &'static str {
        match self {
            Study::Convergence => "convergence",
            Study::Piecewise => "piecewise",
            Study::DomainDependence => "domain_dependence",
            Study::Appendix => "appendix",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Resolutions {
    /// Cell mesh; by default the one matching the thin-domain mesh.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell: Option<CellResolution>,
    #[serde(default)]
    pub thin: ThinResolution,
    /// Elements of the 1D limit problem.
    #[serde(default = "default_n1d")]
    pub n1d: usize,
    /// Uniform x-samples (endpoints included) for q(x), r(x).
    #[serde(default = "default_x_samples")]
    pub x_samples: usize,
}

fn default_n1d() -> usize {
    512
}

fn default_x_samples() -> usize {
    33
}

impl Default for Resolutions {
    fn default() -> Self {
        Resolutions {
            cell: None,
            thin: ThinResolution::default(),
            n1d: default_n1d(),
            x_samples: default_x_samples(),
        }
    }
}

impl Resolutions {
    pub fn cell(&self) -> CellResolution {
        self.cell.unwrap_or(CellResolution {
            n1: self.thin.points_per_period,
            n2: self.thin.layers,
        })
    }
}

fn default_f() -> String {
    "cos(pi*x)".into()
}

fn default_bump() -> String {
    "0.3*sin(2*pi*y)".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub study: Study,
    pub profile: ProfileSpec,
    pub p: f64,
    #[serde(default)]
    pub eps: Vec<f64>,
    #[serde(default)]
    pub delta: Vec<f64>,
    /// Perturbation sizes of the continuity study.
    #[serde(default)]
    pub t: Vec<f64>,
    /// Perturbation shape `h(y)` of the continuity study.
    #[serde(default = "default_bump")]
    pub bump: String,
    /// Load `f(x, y)`.
    #[serde(default = "default_f")]
    pub f: String,
    #[serde(default)]
    pub resolution: Resolutions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(default)]
    pub seed: u64,
}

/// Strict JSON parsing; errors name the offending key path.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Config(format!("at '{path}': {}", e.into_inner()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.p > 1.0 && self.p.is_finite()) {
            return bad(format!("p must exceed 1, got {}", self.p));
        }
        let profile = Profile::from_spec(&self.profile)?;
        let f = Expr::parse(&self.f)?;
        let list = |name: &str, v: &[f64], lo: f64, hi: f64| -> Result<()> {
            if v.is_empty() {
                return bad(format!("'{name}' must be a nonempty list for this study"));
            }
            if let Some(x) = v.iter().find(|x| !(**x > lo && **x <= hi)) {
                return bad(format!(
                    "'{name}' entries must lie in ({lo}, {hi}], got {x}"
                ));
            }
            if !strictly_decreasing(v) {
                return bad(format!("'{name}' must be strictly decreasing"));
            }
            Ok(())
        };
        match self.study {
            Study::Convergence => list("eps", &self.eps, 0.0, 1.0)?,
            Study::Piecewise => list("delta", &self.delta, 0.0, f64::INFINITY)?,
            Study::DomainDependence => {
                list("eps", &self.eps, 0.0, 1.0)?;
                list("delta", &self.delta, 0.0, 1.0)?;
                if self.delta[0] >= 1.0 {
                    return bad("'delta' entries must be below 1".into());
                }
            }
            Study::Appendix => {
                list("t", &self.t, 0.0, f64::INFINITY)?;
                if !profile.is_x_independent() {
                    return bad("the continuity study needs an x-independent profile".into());
                }
                if Expr::parse(&self.bump)?.uses(Var::X) {
                    return bad("'bump' must not depend on x".into());
                }
            }
        }
        if matches!(self.study, Study::Convergence | Study::Piecewise) && f.uses(Var::Y) {
            return bad("'f' must not depend on y for the limit problem".into());
        }

        let r = &self.resolution;
        let c = r.cell();
        if c.n1 < 4 || c.n2 < 2 {
            return bad(format!("cell resolution {}x{} is too coarse", c.n1, c.n2));
        }
        if c.n1 * (c.n2 + 1) > MAX_DOFS {
            return bad(format!(
                "cell resolution {}x{} exceeds {MAX_DOFS} dofs",
                c.n1, c.n2
            ));
        }
        if r.n1d < 8 || r.n1d > MAX_DOFS {
            return bad(format!("n1d must lie in [8, {MAX_DOFS}], got {}", r.n1d));
        }
        if r.x_samples < 2 {
            return bad(format!("x_samples must be at least 2, got {}", r.x_samples));
        }
        if let Some(&eps) = self.eps.last() {
            let prob = EpsilonProblem::new(profile.clone(), eps, |_, _| 0.0, self.p, r.thin)?;
            let dofs = (prob.columns() + 1) * (r.thin.layers + 1);
            if dofs > MAX_DOFS {
                return bad(format!(
                    "eps = {eps} needs about {dofs} dofs, above {MAX_DOFS}"
                ));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON with the output directory left out.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut c = self.clone();
        c.out = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    fn profile(&self) -> Result<Profile> {
        Profile::from_spec(&self.profile)
    }

    fn forcing(&self) -> Result<Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>> {
        let e = Expr::parse(&self.f)?;
        Ok(Arc::new(move |x, y| e.eval(x, y).unwrap_or(f64::NAN)))
    }

    fn x_grid(&self) -> Vec<f64> {
        let n = self.resolution.x_samples - 1;
        (0..=n).map(|k| k as f64 / n as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub config_hash: String,
    pub params: BTreeMap<String, f64>,
    pub metrics: BTreeMap<String, f64>,
    /// Seconds; kept out of the CSV so reruns give identical bytes.
    pub runtime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Criterion {
    pub id: String,
    pub description: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Environment {
    pub version: String,
    pub os: String,
    pub arch: String,
    pub threads: usize,
}

impl Environment {
    pub fn current() -> Environment {
        #[cfg(feature = "parallel")]
        let threads = rayon::current_num_threads();
        #[cfg(not(feature = "parallel"))]
        let threads = 1;
        Environment {
            version: env!("CARGO_PKG_VERSION").into(),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            threads,
        }
    }
}

/// A plot-ready side table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub study: String,
    pub config_hash: String,
    pub rows: Vec<Row>,
    /// Fitted slopes and other whole-study numbers.
    pub summary: BTreeMap<String, f64>,
    pub criteria: Vec<Criterion>,
    pub pass: bool,
    pub environment: Environment,
    #[serde(skip)]
    pub tables: Vec<Table>,
}

/// A failed study with whatever rows were finished.
#[derive(Debug, Clone)]
pub struct StudyError {
    pub error: Error,
    pub partial: Box<StudyReport>,
}

impl std::fmt::Display for StudyError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} study aborted after {} rows: {}",
            self.partial.study,
            self.partial.rows.len(),
            self.error
        )
    }
}

impl std::error::Error for StudyError {}

pub type StudyResult = std::result::Result<StudyReport, StudyError>;

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

impl StudyReport {
    fn new(cfg: &ExperimentConfig) -> StudyReport {
        StudyReport {
            study: cfg.study.name().into(),
            config_hash: cfg.hash(),
            rows: Vec::new(),
            summary: BTreeMap::new(),
            criteria: Vec::new(),
            pass: false,
            environment: Environment::current(),
            tables: Vec::new(),
        }
    }

    fn push(&mut self, params: &[(&str, f64)], metrics: Vec<(String, f64)>, runtime: f64) {
        self.rows.push(Row {
            config_hash: self.config_hash.clone(),
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            metrics: metrics.into_iter().collect(),
            runtime,
        });
    }

    fn criterion(&mut self, id: &str, description: String, pass: bool) {
        self.criteria.push(Criterion {
            id: id.into(),
            description,
            pass,
        });
    }

    fn finish(mut self) -> StudyReport {
        self.pass = !self.criteria.is_empty() && self.criteria.iter().all(|c| c.pass);
        self
    }

    fn fail(self, error: Error) -> StudyError {
        StudyError {
            error,
            partial: Box::new(self.finish()),
        }
    }

    /// Column of a metric (or parameter) over all rows, in row order.
    pub fn column(&self, key: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter_map(|r| r.metrics.get(key).or_else(|| r.params.get(key)).copied())
            .collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let Some(first) = self.rows.first() else {
            writeln!(w, "config_hash")?;
            return Ok(());
        };
        let params: Vec<&String> = first.params.keys().collect();
        let metrics: Vec<&String> = first.metrics.keys().collect();
        let mut head = vec!["config_hash".to_string()];
        head.extend(params.iter().map(|s| s.to_string()));
        head.extend(metrics.iter().map(|s| s.to_string()));
        writeln!(w, "{}", head.join(","))?;
        for r in &self.rows {
            let mut line = vec![r.config_hash.clone()];
            for k in &params {
                line.push(r.params.get(*k).map_or(String::new(), |v| num(*v)));
            }
            for k in &metrics {
                line.push(r.metrics.get(*k).map_or(String::new(), |v| num(*v)));
            }
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// The machine-readable summary: `{study, config_hash, rows, pass, ...}`.
    pub fn summary_json(&self) -> serde_json::Value {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|r| {
                let mut m = serde_json::Map::new();
                for (k, v) in r.params.iter().chain(&r.metrics) {
                    m.insert(k.clone(), serde_json::json!(v));
                }
                m.insert("runtime".into(), serde_json::json!(r.runtime));
                serde_json::Value::Object(m)
            })
            .collect();
        serde_json::json!({
            "study": self.study,
            "config_hash": self.config_hash,
            "rows": rows,
            "summary": self.summary,
            "criteria": self.criteria,
            "pass": self.pass,
            "environment": self.environment,
        })
    }

    /// Writes `<study>.csv`, one `<study>_<table>.csv` per side table and `<study>.json`.
    pub fn write_outputs(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut out = Vec::new();
        let main = dir.join(format!("{}.csv", self.study));
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(&main, buf)?;
        out.push(main);
        for t in &self.tables {
            let path = dir.join(format!("{}_{}.csv", self.study, t.name));
            let mut s = t.header.join(",");
            s.push('\n');
            for row in &t.rows {
                let cells: Vec<String> = row.iter().map(|v| num(*v)).collect();
                s.push_str(&cells.join(","));
                s.push('\n');
            }
            std::fs::write(&path, s)?;
            out.push(path);
        }
        let json = dir.join(format!("{}.json", self.study));
        let text = serde_json::to_string_pretty(&self.summary_json())
            .map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(&json, text + "\n")?;
        out.push(json);
        Ok(out)
    }
}

/// Ordered map over independent grid points, in parallel when available.
fn grid_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    items.iter().map(f).collect()
}

/// Least-squares slope of `ln y` against `ln x` over the last three points.
pub fn fitted_exponent(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    let k = n.saturating_sub(3);
    let pts: Vec<(f64, f64)> = x[k..n]
        .iter()
        .zip(&y[k..n])
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

fn apriori_ok(s: &EpsilonSummary, p: f64) -> bool {
    s.triple_w1p.powf(p - 1.0) <= s.triple_f + APRIORI_SLACK
}

/// `q`, `r` on the uniform x-grid and the limit solution with `f̂ = r f`.
fn limit_solution(
    cfg: &ExperimentConfig,
    coeffs: &EffectiveCoefficients,
    solver: &SolveConfig,
) -> Result<Field1D> {
    let f = Expr::parse(&cfg.f)?;
    let n = cfg.resolution.n1d;
    let fhat = fhat_from(|x| f.eval(x, 0.0).unwrap_or(f64::NAN), coeffs, n, cfg.p);
    Ok(solve_homogenized(coeffs, &FHat::Field(fhat), cfg.p, n, solver)?.0)
}

/// `‖T_ε u_ε − u‖_{L^p((0,1) × Y*)}` for a purely periodic profile, with the cell
/// mesh matching the thin-domain mesh.
pub fn strong_unfolding_defect(
    sol: &EpsilonSolution,
    profile: &Profile,
    u: &Field1D,
    res: ThinResolution,
) -> Result<f64> {
    let p = sol.u.p();
    let s = profile.section(0.5, Side::Right);
    let cell = build_graph_mesh(
        |y| s.eval(y),
        (0.0, profile.period()),
        res.points_per_period,
        res.layers,
        true,
    )?;
    let unf = unfold_periodic(&sol.u, &cell, sol.eps, profile.period(), (0.0, 1.0))?;
    let mut total = 0.0;
    for sample in &unf.samples {
        let (a, b) = sample.x_range;
        total += gauss_legendre_composite(a, b, 2, |x| {
            let ux = u.eval(x);
            Ok(sample
                .values
                .iter()
                .zip(&unf.weights)
                .map(|(v, w)| w * (v - ux).abs().powf(p))
                .sum::<f64>())
        })?;
    }
    Ok(total.powf(1.0 / p))
}

/// Weak convergence of the column averages to the limit solution, one row per ε.
pub fn run_convergence(cfg: &ExperimentConfig, solver: &SolveConfig) -> StudyResult {
    let mut report = StudyReport::new(cfg);
    let setup = || -> Result<_> {
        cfg.validate()?;
        let profile = cfg.profile()?;
        let cache = CoefficientCache::new();
        let xs = cfg.x_grid();
        let coeffs =
            sample_coefficients(&profile, &xs, cfg.p, cfg.resolution.cell(), solver, &cache)?;
        let u = limit_solution(cfg, &coeffs, solver)?;
        Ok((profile, coeffs, u))
    };
    let (profile, coeffs, u) = match setup() {
        Ok(v) => v,
        Err(e) => return Err(report.fail(e)),
    };
    report.tables.push(Table {
        name: "coefficients".into(),
        header: vec!["x".into(), "q".into(), "r".into()],
        rows: (0..coeffs.xs.len())
            .map(|k| vec![coeffs.xs[k], coeffs.q[k], coeffs.r[k]])
            .collect(),
    });
    report.tables.push(Table {
        name: "limit".into(),
        header: vec!["x".into(), "u".into()],
        rows: u
            .xs()
            .into_iter()
            .zip(&u.values)
            .map(|(x, v)| vec![x, *v])
            .collect(),
    });

    let periodic = profile.is_x_independent();
    let thin = cfg.resolution.thin;
    let forcing = match cfg.forcing() {
        Ok(f) => f,
        Err(e) => return Err(report.fail(e)),
    };
    let tests = TestFunction::DEFAULTS;
    let results = grid_map(
        &cfg.eps,
        |&eps| -> Result<(Vec<(String, f64)>, f64, bool)> {
            let f = forcing.clone();
            let prob = EpsilonProblem::new(profile.clone(), eps, move |x, y| f(x, y), cfg.p, thin)?;
            let sol = solve_epsilon_problem(&prob, solver)?;
            let xs = column_midpoints(sol.u.mesh())?;
            let avg = column_average(&sol.u, &profile, eps, &xs)?;
            let defects = weak_compare(&avg, &u, &tests);
            let summary = EpsilonSummary::from(&sol);
            let (lhs, rhs) = sol.apriori_bound();
            let mut m: Vec<(String, f64)> = tests
                .iter()
                .zip(&defects)
                .map(|(t, d)| (format!("defect_{}", t.key()), *d))
                .collect();
            m.push(("apriori_lhs".into(), lhs));
            m.push(("apriori_rhs".into(), rhs));
            m.push(("dofs".into(), summary.dofs as f64));
            m.push(("iterations".into(), summary.iterations as f64));
            if periodic {
                m.push((
                    "unfolding_defect".into(),
                    strong_unfolding_defect(&sol, &profile, &u, thin)?,
                ));
            }
            Ok((m, summary.wall_time, apriori_ok(&summary, cfg.p)))
        },
    );

    let mut apriori = true;
    for (&eps, r) in cfg.eps.iter().zip(results) {
        match r {
            Ok((m, time, ok)) => {
                apriori &= ok;
                report.push(&[("eps", eps), ("p", cfg.p)], m, time);
            }
            Err(e) => return Err(report.fail(e)),
        }
    }

    for t in [TestFunction::One, TestFunction::CosPi] {
        let d = report.column(&format!("defect_{}", t.key()));
        let roundoff = d.iter().all(|v| *v <= 1e-8);
        let decay = strictly_decreasing(&d) && d[d.len() - 1] <= d[0] / 3.0;
        report.criterion(
            "AC-3",
            format!(
                "weak defect against phi = {} strictly decreasing in eps, last <= first/3 (or all <= 1e-8)",
                t.name()
            ),
            decay || roundoff,
        );
    }
    report.criterion(
        "AC-10",
        format!("a-priori bound holds for every solve (slack {APRIORI_SLACK:e})"),
        apriori,
    );
    Ok(report.finish())
}

/// Sup-distance of piecewise coefficients to the reference ones and `W^{1,p}` distance
/// of the limit solutions, one row per δ.
pub fn run_piecewise_consistency(cfg: &ExperimentConfig, solver: &SolveConfig) -> StudyResult {
    let mut report = StudyReport::new(cfg);
    let cache = CoefficientCache::new();
    let res = cfg.resolution.cell();
    let setup = || -> Result<_> {
        cfg.validate()?;
        let profile = cfg.profile()?;
        let xs = cfg.x_grid();
        let reference = sample_coefficients(&profile, &xs, cfg.p, res, solver, &cache)?;
        let u = limit_solution(cfg, &reference, solver)?;
        Ok((profile, xs, reference, u))
    };
    let (profile, xs, reference, u) = match setup() {
        Ok(v) => v,
        Err(e) => return Err(report.fail(e)),
    };

    for &delta in &cfg.delta {
        let clock = crate::plap::Stopwatch::start();
        let row = || -> Result<Vec<(String, f64)>> {
            let pw = build_piecewise_approx(&profile, delta, PiecewiseOptions::default())?;
            let c = piecewise_coefficients(&pw.to_profile()?, cfg.p, res, solver, &cache)?;
            let mut sup_q = 0.0f64;
            let mut sup_r = 0.0f64;
            for (k, &x) in xs.iter().enumerate() {
                sup_q = sup_q.max((c.q_at(x) - reference.q[k]).abs());
                sup_r = sup_r.max((c.r_at(x) - reference.r[k]).abs());
            }
            let ud = limit_solution(cfg, &c, solver)?;
            Ok(vec![
                ("intervals".into(), pw.intervals() as f64),
                ("lift".into(), pw.lift()),
                ("sup_q".into(), sup_q),
                ("sup_r".into(), sup_r),
                ("w1p_distance".into(), ud.w1p_distance(&u, cfg.p)?),
            ])
        };
        match row() {
            Ok(m) => report.push(&[("delta", delta), ("p", cfg.p)], m, clock.seconds()),
            Err(e) => return Err(report.fail(e)),
        }
    }

    let deltas = report.column("delta");
    for key in ["sup_q", "sup_r", "w1p_distance"] {
        let col = report.column(key);
        report
            .summary
            .insert(format!("slope_{key}"), fitted_exponent(&deltas, &col));
        report.criterion(
            "AC-6",
            format!("{key} strictly decreasing in delta"),
            strictly_decreasing(&col),
        );
    }
    Ok(report.finish())
}

/// `Δq_t = |q(G + t h) − q(G)|` against the C¹ distance, one row per t.
pub fn run_appendix_continuity(cfg: &ExperimentConfig, solver: &SolveConfig) -> StudyResult {
    let mut report = StudyReport::new(cfg);
    let res = cfg.resolution.cell.unwrap_or_default();
    let setup = || -> Result<_> {
        cfg.validate()?;
        let profile = cfg.profile()?;
        let bump = Expr::parse(&cfg.bump)?;
        let l = profile.period();
        let mut hmax = 0.0f64;
        for j in 0..1024 {
            hmax = hmax.max(bump.eval(0.0, l * j as f64 / 1024.0)?.abs());
        }
        let q0 = solve_cell(&profile, 0.5, Side::Right, cfg.p, res, solver)?.q_flux;
        Ok((profile, bump, hmax, q0))
    };
    let (profile, bump, hmax, q0) = match setup() {
        Ok(v) => v,
        Err(e) => return Err(report.fail(e)),
    };
    report.summary.insert("q_base".into(), q0);

    let results = grid_map(&cfg.t, |&t| -> Result<(Vec<(String, f64)>, f64)> {
        let g0 = profile.g0() - t * hmax;
        if !(g0 > 0.0) {
            return Err(Error::Hypothesis(format!(
                "perturbation t = {t} makes the profile non-positive"
            )));
        }
        let gbar = profile.perturbed(&bump, t, g0, profile.g1() + t * hmax)?;
        let sol = solve_cell(&gbar, 0.5, Side::Right, cfg.p, res, solver)?;
        let d = c1_distance(&profile, &gbar, 1024)?;
        Ok((
            vec![
                ("c1_distance".into(), d),
                ("q".into(), sol.q_flux),
                ("delta_q".into(), (sol.q_flux - q0).abs()),
            ],
            sol.report.wall_time,
        ))
    });
    for (&t, r) in cfg.t.iter().zip(results) {
        match r {
            Ok((m, time)) => report.push(&[("t", t), ("p", cfg.p)], m, time),
            Err(e) => return Err(report.fail(e)),
        }
    }

    let dq = report.column("delta_q");
    let d = report.column("c1_distance");
    let slope = fitted_exponent(&d, &dq);
    let alpha = if cfg.p <= 2.0 { 0.5 } else { 1.0 / cfg.p };
    report.summary.insert("exponent".into(), slope);
    report.summary.insert("alpha".into(), alpha);
    report.criterion(
        "AC-7",
        "delta_q strictly decreasing in t".into(),
        strictly_decreasing(&dq),
    );
    report.criterion(
        "AC-7",
        format!(
            "fitted exponent {slope:.4} >= alpha - 0.15 = {:.4}",
            alpha - 0.15
        ),
        slope >= alpha - 0.15,
    );
    Ok(report.finish())
}

/// Discrepancy between solutions on `G` and `G (1 − δ)`, over a δ × ε grid.
pub fn run_domain_dependence(cfg: &ExperimentConfig, solver: &SolveConfig) -> StudyResult {
    let mut report = StudyReport::new(cfg);
    let setup = || -> Result<_> {
        cfg.validate()?;
        Ok((cfg.profile()?, cfg.forcing()?))
    };
    let (profile, forcing) = match setup() {
        Ok(v) => v,
        Err(e) => return Err(report.fail(e)),
    };
    let thin = cfg.resolution.thin;

    type Cell = (Vec<(String, f64)>, f64, bool);
    let results = grid_map(&cfg.eps, |&eps| -> Result<Vec<Cell>> {
        let f = forcing.clone();
        let prob = EpsilonProblem::new(profile.clone(), eps, move |x, y| f(x, y), cfg.p, thin)?;
        let sol = solve_epsilon_problem(&prob, solver)?;
        let mut out = Vec::new();
        for &delta in &cfg.delta {
            let ghat = profile.scaled(1.0 - delta)?;
            let dd = domain_dependence_with(&prob, &sol, &ghat, delta * profile.g1(), solver)?;
            let ok = dd.solutions.iter().all(|s| apriori_ok(s, cfg.p));
            let m = vec![
                ("total".into(), dd.total),
                ("intersection".into(), dd.intersection),
                ("outer".into(), dd.outer),
                ("inner".into(), dd.inner),
                ("measured_sup".into(), dd.measured_sup),
                ("dofs".into(), dd.solutions[0].dofs as f64),
                ("dofs_hat".into(), dd.solutions[1].dofs as f64),
            ];
            let time = dd.solutions[0].wall_time + dd.solutions[1].wall_time;
            out.push((m, time, ok));
        }
        Ok(out)
    });
    let mut grid: Vec<Vec<Cell>> = Vec::new();
    for r in results {
        match r {
            Ok(v) => grid.push(v),
            Err(e) => return Err(report.fail(e)),
        }
    }

    let mut apriori = true;
    let mut worst = Vec::new();
    let mut uniform = true;
    for (k, &delta) in cfg.delta.iter().enumerate() {
        let mut d = Vec::new();
        for (j, &eps) in cfg.eps.iter().enumerate() {
            let (m, time, ok) = grid[j][k].clone();
            apriori &= ok;
            d.push(m[0].1);
            report.push(&[("delta", delta), ("eps", eps), ("p", cfg.p)], m, time);
        }
        let max = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = d.iter().cloned().fold(f64::INFINITY, f64::min);
        report
            .summary
            .insert(format!("ratio_delta_{delta}"), max / min);
        uniform &= max <= 2.0 * min;
        worst.push(max);
    }
    report.summary.insert(
        "slope_max_total".into(),
        fitted_exponent(&cfg.delta, &worst),
    );
    report.criterion(
        "AC-5",
        "max/min of D over eps <= 2 for every delta".into(),
        uniform,
    );
    report.criterion(
        "AC-5",
        "max over eps of D strictly decreasing in delta, last <= first/3".into(),
        strictly_decreasing(&worst) && worst[worst.len() - 1] <= worst[0] / 3.0,
    );
    report.criterion(
        "AC-10",
        format!("a-priori bound holds for every solve (slack {APRIORI_SLACK:e})"),
        apriori,
    );
    Ok(report.finish())
}

pub fn run_study(cfg: &ExperimentConfig, solver: &SolveConfig) -> StudyResult {
    match cfg.study {
        Study::Convergence => run_convergence(cfg, solver),
        Study::Piecewise => run_piecewise_consistency(cfg, solver),
        Study::DomainDependence => run_domain_dependence(cfg, solver),
        Study::Appendix => run_appendix_continuity(cfg, solver),
    }
}
