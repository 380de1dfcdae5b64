//! Browser front end. Every operation is a plain function returning JSON so it can
//! be tested natively; the `#[wasm_bindgen]` wrappers only convert the error.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use thinhomog::cell::{sample_coefficients, solve_cell, CellResolution, CoefficientCache, EffectiveCoefficients};
use thinhomog::homog1d::{solve_homogenized, FHat};
use thinhomog::plap::SolveConfig;
use thinhomog::profiles::{Expr, Profile, Side, Var};

// keeps a click from freezing the tab
const MAX_CELL_NODES: usize = 128 * 128;
const MAX_1D: usize = 4096;

#[derive(Debug, Serialize)]
pub struct CellView {
    pub q: f64,
    pub r: f64,
    pub iterations: usize,
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub psi: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct Curve {
    pub x: Vec<f64>,
    pub q: Vec<f64>,
    pub r: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct Solution1D {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub iterations: usize,
}

fn profile(expr: &str, period: f64, g0: f64, g1: f64) -> Result<Profile, String> {
    Profile::expression(expr, period, g0, g1).map_err(|e| e.to_string())
}

fn x_only(src: &str, what: &str) -> Result<Expr, String> {
    let e = Expr::parse(src).map_err(|e| format!("{what}: {e}"))?;
    if e.uses(Var::Y) {
        return Err(format!("{what} must depend on x only"));
    }
    Ok(e)
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

/// Corrector ψ and coefficients q, r of the cell problem at `x`.
#[allow(clippy::too_many_arguments)]
pub fn cell_view(
    expr: &str,
    period: f64,
    g0: f64,
    g1: f64,
    p: f64,
    x: f64,
    n1: usize,
    n2: usize,
) -> Result<CellView, String> {
    if (n1 + 1) * (n2 + 1) > MAX_CELL_NODES {
        return Err(format!("grid {n1}x{n2} too fine for the demo"));
    }
    let g = profile(expr, period, g0, g1)?;
    let s = solve_cell(&g, x, Side::Right, p, CellResolution { n1, n2 }, &SolveConfig::default())
        .map_err(|e| e.to_string())?;
    Ok(CellView {
        q: s.q_flux,
        r: s.r,
        iterations: s.report.iterations,
        nodes: s.mesh.nodes().to_vec(),
        triangles: s.mesh.triangles().to_vec(),
        psi: (0..s.mesh.nodes().len()).map(|k| s.psi.at_node(k)).collect(),
    })
}

/// q(x) and r(x) at `samples` equispaced points of [0, 1].
#[allow(clippy::too_many_arguments)]
pub fn coefficient_curve(
    expr: &str,
    period: f64,
    g0: f64,
    g1: f64,
    p: f64,
    samples: usize,
    n1: usize,
    n2: usize,
) -> Result<Curve, String> {
    if !(2..=65).contains(&samples) {
        return Err("samples must be between 2 and 65".into());
    }
    if (n1 + 1) * (n2 + 1) * samples > 4 * MAX_CELL_NODES {
        return Err("too many cell solves for the demo".into());
    }
    let g = profile(expr, period, g0, g1)?;
    let xs: Vec<f64> = (0..samples).map(|k| k as f64 / (samples - 1) as f64).collect();
    let c = sample_coefficients(
        &g,
        &xs,
        p,
        CellResolution { n1, n2 },
        &SolveConfig::default(),
        &CoefficientCache::new(),
    )
    .map_err(|e| e.to_string())?;
    Ok(Curve {
        q: xs.iter().map(|&x| c.q_at(x)).collect(),
        r: xs.iter().map(|&x| c.r_at(x)).collect(),
        x: xs,
    })
}

/// Homogenized problem with coefficients and load given as expressions in x.
pub fn solve_limit(q: &str, r: &str, fhat: &str, p: f64, n: usize) -> Result<Solution1D, String> {
    if !(4..=MAX_1D).contains(&n) {
        return Err(format!("n must be between 4 and {MAX_1D}"));
    }
    let (qe, re, fe) = (x_only(q, "q")?, x_only(r, "r")?, x_only(fhat, "f")?);
    let xs: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
    let eval = |e: &Expr| -> Result<Vec<f64>, String> {
        xs.iter().map(|&x| e.eval(x, 0.0).map_err(|e| e.to_string())).collect()
    };
    let c = EffectiveCoefficients::from_samples(xs.clone(), eval(&qe)?, eval(&re)?)
        .map_err(|e| e.to_string())?;
    eval(&fe)?;
    let f = FHat::function(move |x| fe.eval(x, 0.0).unwrap_or(f64::NAN));
    let (u, report) = solve_homogenized(&c, &f, p, n, &SolveConfig::default()).map_err(|e| e.to_string())?;
    Ok(Solution1D {
        x: u.xs(),
        u: u.values,
        iterations: report.iterations,
    })
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn cell(expr: &str, period: f64, g0: f64, g1: f64, p: f64, x: f64, n1: usize, n2: usize) -> Result<String, JsError> {
    cell_view(expr, period, g0, g1, p, x, n1, n2)
        .and_then(|v| to_json(&v))
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn coefficients(
    expr: &str,
    period: f64,
    g0: f64,
    g1: f64,
    p: f64,
    samples: usize,
    n1: usize,
    n2: usize,
) -> Result<String, JsError> {
    coefficient_curve(expr, period, g0, g1, p, samples, n1, n2)
        .and_then(|v| to_json(&v))
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn limit(q: &str, r: &str, fhat: &str, p: f64, n: usize) -> Result<String, JsError> {
    solve_limit(q, r, fhat, p, n)
        .and_then(|v| to_json(&v))
        .map_err(|e| JsError::new(&e))
}
