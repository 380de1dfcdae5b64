//! Periodic cell problem on `Y*(x) = {0 < y₁ < L, 0 < y₂ < G(x, y₁)}` and the
//! effective coefficients
//!
//! ```text
//! q(x) = (1/L) ∫_{Y*(x)} |∇v|^{p−2} ∂_{y₁} v,    r(x) = |Y*(x)| / L,
//! ```
//!
//! where `v = y₁ + ψ` and `ψ` is periodic with zero mean.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{build_graph_mesh, FieldRole, Mesh, NodalField};
use crate::plap::{a_p, minimize, EnergySpec, SolveConfig, SolveReport};
use crate::profiles::{Profile, Section, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellResolution {
    /// Columns across one period.
    pub n1: usize,
    /// Layers between the bottom and the profile.
    pub n2: usize,
}

impl Default for CellResolution {
    fn default() -> Self {
        CellResolution { n1: 64, n2: 64 }
    }
}

#[derive(Debug, Clone)]
pub struct CellSolution {
    pub mesh: Arc<Mesh>,
    pub psi: NodalField,
    /// `v = y₁ + ψ` at every mesh node (periodic copies differ by `L`).
    pub v: Vec<f64>,
    pub p: f64,
    pub period: f64,
    pub q_flux: f64,
    pub q_energy: f64,
    pub r: f64,
    pub report: SolveReport,
}

impl CellSolution {
    pub fn max_abs_corrector(&self) -> f64 {
        self.psi.values().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Quadrature mean `⟨ψ⟩`.
    pub fn corrector_mean(&self) -> f64 {
        let w = self.mesh.lumped_weights();
        let total: f64 = w.iter().sum();
        self.psi
            .values()
            .iter()
            .zip(&w)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / total
    }

    /// `|q_flux − q_energy|`.
    pub fn dual_defect(&self) -> f64 {
        (self.q_flux - self.q_energy).abs()
    }
}

/// `q` in flux form: `(1/L) ∫ a_p(∇v)·e₁`.
pub fn effective_q(sol: &CellSolution) -> f64 {
    sol.q_flux
}

/// `q` in energy form: `(1/L) ∫ |∇v|^p`.
pub fn effective_q_energy(sol: &CellSolution) -> f64 {
    sol.q_energy
}

/// `r(x)`: the mean of `G(x, ·)` over one period.
pub fn effective_r(profile: &Profile, x: f64, side: Side) -> Result<f64> {
    profile.mean_over_period(x, side)
}

/// Solves the cell problem for the section `y ↦ G(x, y)`.
pub fn solve_cell(
    profile: &Profile,
    x: f64,
    side: Side,
    p: f64,
    res: CellResolution,
    config: &SolveConfig,
) -> Result<CellSolution> {
    let run = || {
        let section = profile.section(x, side);
        let r = effective_r(profile, x, side)?;
        solve_section(&section, profile.period(), r, p, res, config)
    };
    run().map_err(|e| Error::CellAt {
        x,
        source: Box::new(e),
    })
}

/// Solves the cell problem for an explicit section, with a precomputed `r`.
pub fn solve_section(
    section: &Section,
    period: f64,
    r: f64,
    p: f64,
    res: CellResolution,
    config: &SolveConfig,
) -> Result<CellSolution> {
    let mesh = Arc::new(build_graph_mesh(
        |y| section.eval(y),
        (0.0, period),
        res.n1,
        res.n2,
        true,
    )?);
    let spec = EnergySpec::cell(mesh.clone(), p)?;
    let start = NodalField::zeros(mesh.clone(), p, FieldRole::Corrector);
    let (psi, report) = minimize(&spec, config, &start)?;

    let mut flux = 0.0;
    let mut energy = 0.0;
    for (t, g) in mesh.geometry().iter().enumerate() {
        let d = psi.gradient(t);
        let grad_v = [1.0 + d[0], d[1]];
        flux += g.area * a_p(grad_v, p)[0];
        energy += g.area * grad_v[0].hypot(grad_v[1]).powf(p);
    }
    let v = mesh
        .nodes()
        .iter()
        .enumerate()
        .map(|(n, q)| q[0] + psi.at_node(n))
        .collect();
    Ok(CellSolution {
        mesh,
        psi,
        v,
        p,
        period,
        q_flux: flux / period,
        q_energy: energy / period,
        r,
        report,
    })
}

/// How coefficient samples are extended between grid points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Interpolation {
    /// Piecewise linear, constant beyond the outermost samples.
    Linear,
    /// Constant on each interval of a partition; `values[i]` belongs to interval `i`.
    Piecewise { breakpoints: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub profile_hash: String,
    pub p: f64,
    pub resolution: CellResolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveCoefficients {
    pub xs: Vec<f64>,
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub interpolation: Interpolation,
    pub provenance: Option<Provenance>,
}

impl EffectiveCoefficients {
    /// Constant coefficients.
    pub fn constant(q: f64, r: f64) -> EffectiveCoefficients {
        EffectiveCoefficients {
            xs: vec![0.0, 1.0],
            q: vec![q, q],
            r: vec![r, r],
            interpolation: Interpolation::Linear,
            provenance: None,
        }
    }

    pub fn from_samples(xs: Vec<f64>, q: Vec<f64>, r: Vec<f64>) -> Result<EffectiveCoefficients> {
        if xs.is_empty() || xs.len() != q.len() || xs.len() != r.len() {
            return Err(Error::Config(
                "coefficient arrays must be nonempty and equally long".into(),
            ));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config(
                "coefficient x-grid must be strictly increasing".into(),
            ));
        }
        Ok(EffectiveCoefficients {
            xs,
            q,
            r,
            interpolation: Interpolation::Linear,
            provenance: None,
        })
    }

    fn interp(&self, values: &[f64], x: f64) -> f64 {
        match &self.interpolation {
            Interpolation::Piecewise { breakpoints } => {
                let i = breakpoints
                    .partition_point(|&b| b <= x)
                    .saturating_sub(1)
                    .min(values.len() - 1);
                values[i]
            }
            Interpolation::Linear => {
                let n = self.xs.len();
                if x <= self.xs[0] {
                    return values[0];
                }
                if x >= self.xs[n - 1] {
                    return values[n - 1];
                }
                let k = self.xs.partition_point(|&a| a <= x).min(n - 1);
                let (x0, x1) = (self.xs[k - 1], self.xs[k]);
                let s = (x - x0) / (x1 - x0);
                values[k - 1] + s * (values[k] - values[k - 1])
            }
        }
    }

    pub fn q_at(&self, x: f64) -> f64 {
        self.interp(&self.q, x)
    }

    pub fn r_at(&self, x: f64) -> f64 {
        self.interp(&self.r, x)
    }

    /// `x,q,r` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,q,r")?;
        for k in 0..self.xs.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e}",
                self.xs[k], self.q[k], self.r[k]
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<EffectiveCoefficients> {
        let mut xs = Vec::new();
        let mut q = Vec::new();
        let mut rr = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if i == 0 {
                if line.trim() != "x,q,r" {
                    return Err(Error::Format {
                        line: 1,
                        message: "expected header 'x,q,r'".into(),
                    });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            if v.len() != 3 {
                return Err(Error::Format {
                    line: i + 1,
                    message: format!("expected 3 columns, found {}", v.len()),
                });
            }
            xs.push(v[0]);
            q.push(v[1]);
            rr.push(v[2]);
        }
        EffectiveCoefficients::from_samples(xs, q, rr)
    }
}

type CacheKey = (String, i64, u64, CellResolution);

/// Memo of `(q, r)` keyed by profile, position, exponent and resolution.
#[derive(Debug, Default)]
pub struct CoefficientCache {
    map: Mutex<HashMap<CacheKey, (f64, f64)>>,
    solves: Mutex<usize>,
}

impl CoefficientCache {
    pub fn new() -> CoefficientCache {
        CoefficientCache::default()
    }

    /// Number of cell problems actually solved through this cache.
    pub fn solves(&self) -> usize {
        *self.solves.lock().unwrap()
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Position part of the cache key: the piece index when the piece does not depend on
/// `x` (all its cells coincide), otherwise `x` rounded to `1e-12`.
fn position_key(profile: &Profile, x: f64) -> i64 {
    let i = profile.piece_index(x, Side::Right);
    if profile.piece_expr(i).uses(crate::profiles::Var::X) {
        (x * 1e12).round() as i64
    } else {
        -1 - i as i64
    }
}

/// One cell solve per distinct grid point (per interval for x-independent pieces).
pub fn sample_coefficients(
    profile: &Profile,
    x_grid: &[f64],
    p: f64,
    res: CellResolution,
    config: &SolveConfig,
    cache: &CoefficientCache,
) -> Result<EffectiveCoefficients> {
    if x_grid.is_empty() {
        return Err(Error::Config("empty x-grid".into()));
    }
    let pkey = profile.key();
    let keys: Vec<CacheKey> = x_grid
        .iter()
        .map(|&x| (pkey.clone(), position_key(profile, x), p.to_bits(), res))
        .collect();
    let mut todo: Vec<(CacheKey, f64)> = Vec::new();
    {
        let map = cache.map.lock().unwrap();
        for (k, &x) in keys.iter().zip(x_grid) {
            if !map.contains_key(k) && !todo.iter().any(|(t, _)| t == k) {
                todo.push((k.clone(), x));
            }
        }
    }

    let solve = |x: f64| -> Result<(f64, f64)> {
        let sol = solve_cell(profile, x, Side::Right, p, res, config)?;
        Ok((sol.q_flux, sol.r))
    };
    #[cfg(feature = "parallel")]
    let results: Vec<Result<(f64, f64)>> = {
        use rayon::prelude::*;
        todo.par_iter().map(|(_, x)| solve(*x)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<(f64, f64)>> = todo.iter().map(|(_, x)| solve(*x)).collect();

    {
        let mut map = cache.map.lock().unwrap();
        let mut count = cache.solves.lock().unwrap();
        for ((k, _), r) in todo.into_iter().zip(results) {
            map.entry(k).or_insert(r?);
            *count += 1;
        }
    }
    let map = cache.map.lock().unwrap();
    let (q, r): (Vec<f64>, Vec<f64>) = keys.iter().map(|k| map[k]).unzip();
    Ok(EffectiveCoefficients {
        xs: x_grid.to_vec(),
        q,
        r,
        interpolation: Interpolation::Linear,
        provenance: Some(Provenance {
            profile_hash: profile_hash(profile),
            p,
            resolution: res,
        }),
    })
}

/// Coefficients of a profile whose pieces are x-independent, one solve per piece,
/// extended as step functions over the partition.
pub fn piecewise_coefficients(
    profile: &Profile,
    p: f64,
    res: CellResolution,
    config: &SolveConfig,
    cache: &CoefficientCache,
) -> Result<EffectiveCoefficients> {
    let bps = profile.breakpoints();
    let mids: Vec<f64> = bps.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let mut c = sample_coefficients(profile, &mids, p, res, config, cache)?;
    c.interpolation = Interpolation::Piecewise { breakpoints: bps };
    Ok(c)
}

/// Hex SHA-256 of the profile's canonical JSON.
pub fn profile_hash(profile: &Profile) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(profile.key().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
