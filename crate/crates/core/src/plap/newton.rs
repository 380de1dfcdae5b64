//! Damped Newton with γ-continuation on a convex objective.

use serde::{Deserialize, Serialize};

use super::sparse::{pcg, remove_weighted_mean, CsrMatrix};
use super::Objective;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    /// Relative to the gradient norm at the initial guess.
    pub gradient_tol: f64,
    pub max_iterations: usize,
    pub gamma_start: f64,
    pub gamma_end: f64,
    pub gamma_factor: f64,
    pub armijo_slope: f64,
    pub backtrack: f64,
    pub min_step: f64,
    pub cg_tol: f64,
    /// CG iteration cap as a multiple of the dof count.
    pub cg_max_factor: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            gradient_tol: 1e-10,
            max_iterations: 200,
            gamma_start: 1e-1,
            gamma_end: 1e-8,
            gamma_factor: 10.0,
            armijo_slope: 1e-4,
            backtrack: 0.5,
            min_step: 1e-12,
            cg_tol: 1e-12,
            cg_max_factor: 10,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gradient_tol", self.gradient_tol),
            ("gamma_start", self.gamma_start),
            ("gamma_end", self.gamma_end),
            ("armijo_slope", self.armijo_slope),
            ("min_step", self.min_step),
            ("cg_tol", self.cg_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "solver.{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.gamma_factor > 1.0) || self.gamma_start < self.gamma_end {
            return Err(Error::Config(
                "regularization schedule must be strictly decreasing".into(),
            ));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) || self.armijo_slope >= 1.0 {
            return Err(Error::Config("line search parameters out of range".into()));
        }
        if self.max_iterations == 0 || self.cg_max_factor == 0 {
            return Err(Error::Config("iteration caps must be positive".into()));
        }
        Ok(())
    }

    /// `γ_start, γ_start/f, …` down to `γ_end`.
    pub fn schedule(&self) -> Vec<f64> {
        let mut out = vec![self.gamma_start];
        let mut g = self.gamma_start;
        while g > self.gamma_end * (1.0 + 1e-12) {
            g = (g / self.gamma_factor).max(self.gamma_end);
            out.push(g);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub gamma: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub stages: Vec<StageReport>,
    pub iterations: usize,
    pub cg_iterations: usize,
    /// `‖g‖ / ‖g(u₀)‖` at exit.
    pub final_gradient: f64,
    pub final_gradient_abs: f64,
    pub final_energy: f64,
    /// Energy at the start and after every accepted step.
    pub energies: Vec<f64>,
    pub steps: Vec<f64>,
    pub wall_time: f64,
    pub converged: bool,
}

impl SolveReport {
    /// True when no accepted step raised the energy beyond roundoff.
    pub fn energy_monotone(&self) -> bool {
        self.energies
            .windows(2)
            .all(|w| w[1] <= w[0] + 1e-13 * w[0].abs().max(1.0))
    }
}

pub(crate) struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Stopwatch {
    pub(crate) fn start() -> Stopwatch {
        Stopwatch {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    pub(crate) fn seconds(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        return self.start.elapsed().as_secs_f64();
        #[cfg(target_arch = "wasm32")]
        return 0.0;
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Steps a stage may spend after a floor-level iterate before falling back to it.
const STALL_STEPS: usize = 10;

/// Minimizes `obj` from `u`; on success the gradient norm is at most
/// `gradient_tol · ‖g(u₀)‖`, or below the roundoff floor reported by the objective.
pub fn minimize_objective<O: Objective + ?Sized>(
    obj: &O,
    config: &SolveConfig,
    mut u: Vec<f64>,
) -> Result<(Vec<f64>, SolveReport)> {
    config.validate()?;
    let clock = Stopwatch::start();
    let weights = obj.mean_weights();
    if let Some(w) = weights {
        remove_weighted_mean(&mut u, w);
    }
    let n = obj.dofs();
    let cg_max = config.cg_max_factor * n.max(1);

    let (mut g, mut floor) = obj.gradient(&u);
    if weights.is_some() {
        project(&mut g);
    }
    let mut gnorm = norm(&g);
    let g_ref = gnorm;
    let mut energy = obj.energy(&u);
    let mut report = SolveReport {
        stages: Vec::new(),
        iterations: 0,
        cg_iterations: 0,
        final_gradient: 0.0,
        final_gradient_abs: gnorm,
        final_energy: energy,
        energies: vec![energy],
        steps: Vec::new(),
        wall_time: 0.0,
        converged: false,
    };

    let schedule = config.schedule();
    let last = schedule.len() - 1;
    // last iterate that reached the roundoff floor; smaller gamma may still
    // improve on it, but for p < 2 the iteration can also stall near the kink
    let mut at_floor_point: Option<(Vec<f64>, f64)> = None;
    'stages: for (s, &gamma) in schedule.iter().enumerate() {
        report.stages.push(StageReport {
            gamma,
            iterations: 0,
        });
        let stage_tol = if s == last {
            config.gradient_tol
        } else {
            config.gradient_tol.max(gamma)
        };
        loop {
            // the floor only ends the solve once this stage has had a step;
            // for p < 2 it is reached early in the continuation
            let stage_steps = report.stages.last().map_or(0, |st| st.iterations);
            let at_floor = gnorm <= floor && stage_steps > 0;
            if gnorm <= config.gradient_tol * g_ref || (s == last && at_floor) {
                report.converged = true;
                break 'stages;
            }
            if at_floor {
                at_floor_point = Some((u.clone(), gnorm));
            }
            if s < last && (gnorm <= stage_tol * g_ref || at_floor) {
                break;
            }
            let stalled = stage_steps >= STALL_STEPS || report.iterations >= config.max_iterations;
            if stalled {
                if let Some(pt) = at_floor_point.take() {
                    (u, gnorm) = pt;
                    report.converged = true;
                    break 'stages;
                }
            }
            if report.iterations >= config.max_iterations {
                report.final_gradient = gnorm / g_ref;
                return Err(Error::NotConverged {
                    iterations: report.iterations,
                    gradient: report.final_gradient,
                });
            }

            let h = obj.hessian(&u, gamma);
            let d = direction(&h, &g, config, cg_max, weights, &mut report)?;
            let Some((mut trial, mut e_trial, mut alpha, mut trial_grad)) =
                line_search(obj, config, &u, &d, energy, &g, gnorm, weights)
            else {
                if gnorm <= floor {
                    report.converged = true;
                    break 'stages;
                }
                if let Some(pt) = at_floor_point.take() {
                    (u, gnorm) = pt;
                    report.converged = true;
                    break 'stages;
                }
                return Err(Error::LineSearch {
                    iteration: report.iterations,
                    min_step: config.min_step,
                    gradient: gnorm / g_ref,
                });
            };
            // a damped Newton step for p < 2 usually means oscillation around the
            // kink of |s|^p at 0; the majorant step does not overshoot there
            if alpha < 1.0 {
                if let Some(m) = obj.majorant(&u, gamma) {
                    let dm = direction(&m, &g, config, cg_max, weights, &mut report)?;
                    let mut t = add(&u, &dm, 1.0);
                    if let Some(w) = weights {
                        remove_weighted_mean(&mut t, w);
                    }
                    let e = obj.energy(&t);
                    if e < e_trial {
                        (trial, e_trial, alpha, trial_grad) = (t, e, 1.0, None);
                    }
                }
            }
            u = trial;
            energy = e_trial;
            let (gt, st) = match trial_grad {
                Some(v) => v,
                None => {
                    let (mut gt, st) = obj.gradient(&u);
                    if weights.is_some() {
                        project(&mut gt);
                    }
                    (gt, st)
                }
            };
            g = gt;
            floor = st;
            gnorm = norm(&g);
            report.energies.push(energy);
            report.steps.push(alpha);
            report.iterations += 1;
            report.stages.last_mut().unwrap().iterations += 1;
        }
    }
    if !report.converged {
        report.final_gradient = gnorm / g_ref;
        return Err(Error::NotConverged {
            iterations: report.iterations,
            gradient: report.final_gradient,
        });
    }
    report.final_gradient = if g_ref > 0.0 { gnorm / g_ref } else { 0.0 };
    report.final_gradient_abs = gnorm;
    report.final_energy = obj.energy(&u);
    report.wall_time = clock.seconds();
    Ok((u, report))
}

fn add(u: &[f64], d: &[f64], alpha: f64) -> Vec<f64> {
    u.iter().zip(d).map(|(a, b)| a + alpha * b).collect()
}

type Accepted = (Vec<f64>, f64, f64, Option<(Vec<f64>, f64)>);

/// Armijo backtracking on the true energy. Returns the accepted point, its
/// energy, the step and (when already computed) its gradient.
#[allow(clippy::too_many_arguments)]
fn line_search<O: Objective + ?Sized>(
    obj: &O,
    config: &SolveConfig,
    u: &[f64],
    d: &[f64],
    energy: f64,
    g: &[f64],
    gnorm: f64,
    weights: Option<&[f64]>,
) -> Option<Accepted> {
    let slope = dot(g, d);
    let mut alpha = 1.0;
    while alpha >= config.min_step {
        let mut trial = add(u, d, alpha);
        if let Some(w) = weights {
            remove_weighted_mean(&mut trial, w);
        }
        let e_trial = obj.energy(&trial);
        if e_trial <= energy + config.armijo_slope * alpha * slope {
            return Some((trial, e_trial, alpha, None));
        }
        // near the optimum energy differences drown in roundoff; fall back
        // to a decrease of the gradient norm
        let flat = (alpha * slope).abs() <= 1e-12 * energy.abs().max(f64::MIN_POSITIVE)
            && e_trial <= energy + 1e-12 * energy.abs();
        if flat {
            let (mut gt, st) = obj.gradient(&trial);
            if weights.is_some() {
                project(&mut gt);
            }
            if norm(&gt) < gnorm {
                return Some((trial, e_trial, alpha, Some((gt, st))));
            }
        }
        alpha *= config.backtrack;
    }
    None
}

/// Solves `H d = −g`; falls back to steepest descent if `d` is not a descent direction.
fn direction(
    h: &CsrMatrix,
    g: &[f64],
    config: &SolveConfig,
    cg_max: usize,
    weights: Option<&[f64]>,
    report: &mut SolveReport,
) -> Result<Vec<f64>> {
    let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut d = vec![0.0; g.len()];
    let stats = pcg(h, &rhs, &mut d, config.cg_tol, cg_max, weights)?;
    report.cg_iterations += stats.iterations;
    if !(dot(g, &d) < 0.0) {
        return Ok(rhs);
    }
    Ok(d)
}

/// Drops the component along constants; the energy is blind to it.
fn project(g: &mut [f64]) {
    let m = g.iter().sum::<f64>() / g.len() as f64;
    g.iter_mut().for_each(|v| *v -= m);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule() {
        let s = SolveConfig::default().schedule();
        assert_eq!(s.len(), 8);
        assert_eq!(s[0], 1e-1);
        assert!((s[7] - 1e-8).abs() < 1e-20);
        assert!(s.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn invalid_configs() {
        let mut c = SolveConfig::default();
        c.gradient_tol = 0.0;
        assert!(c.validate().is_err());
        let mut c = SolveConfig::default();
        c.gamma_factor = 1.0;
        assert!(c.validate().is_err());
    }
}
