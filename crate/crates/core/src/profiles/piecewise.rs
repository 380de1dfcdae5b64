//! Piecewise-periodic approximation `G^δ` of a locally periodic profile.
//!
//! On each interval `(z_r, z_{r+1})` of the partition, `G^δ(x, y) = G(z_r, y) + δ/2`.
//! Intervals are bisected until the sampled x-oscillation
//! `sup |G(x, y) − G(z_r, y)|` is at most `δ/2`, which gives `0 ≤ G^δ − G ≤ δ`.

use super::{Expr, Profile, ProfileKind, FD_STEP};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct PiecewiseOptions {
    pub max_intervals: usize,
    /// x-samples per candidate interval, endpoints included.
    pub x_samples: usize,
    /// y-samples per period.
    pub y_samples: usize,
}

impl Default for PiecewiseOptions {
    fn default() -> Self {
        PiecewiseOptions {
            max_intervals: 4096,
            x_samples: 17,
            y_samples: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseProfile {
    partition: Vec<f64>,
    pieces: Vec<Expr>,
    period: f64,
    lift: f64,
    g0: f64,
    g1: f64,
    /// Largest sampled `|∂_y G^δ − ∂_y G|`; informative only.
    pub derivative_gap: f64,
}

impl PiecewiseProfile {
    pub fn partition(&self) -> &[f64] {
        &self.partition
    }

    pub fn pieces(&self) -> &[Expr] {
        &self.pieces
    }

    pub fn intervals(&self) -> usize {
        self.pieces.len()
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// The `δ/2` offset that was added to every piece.
    pub fn lift(&self) -> f64 {
        self.lift
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        let i = self
            .partition
            .partition_point(|&b| b <= x)
            .saturating_sub(1)
            .min(self.pieces.len() - 1);
        self.pieces[i].eval(0.0, y)
    }

    pub fn to_profile(&self) -> Result<Profile> {
        Profile::new(
            ProfileKind::Piecewise {
                breakpoints: self.partition.clone(),
                pieces: self.pieces.clone(),
            },
            self.period,
            self.g0,
            self.g1,
            None,
        )
    }
}

pub fn build_piecewise_approx(
    profile: &Profile,
    delta: f64,
    opts: PiecewiseOptions,
) -> Result<PiecewiseProfile> {
    if !(delta > 0.0) {
        return Err(Error::Profile(format!(
            "delta must be positive, got {delta}"
        )));
    }
    let l = profile.period();
    let ys: Vec<f64> = (0..opts.y_samples)
        .map(|j| l * j as f64 / opts.y_samples as f64)
        .collect();
    let half = 0.5 * delta;
    let accept = half * (1.0 + 1e-12) + 1e-15;

    let mut partition = vec![0.0];
    let mut pieces = Vec::new();
    let mut derivative_gap: f64 = 0.0;

    let seeds = profile.breakpoints();
    for (i, w) in seeds.windows(2).enumerate() {
        let expr = profile.piece_expr(i);
        // depth-first over a dyadic tree keeps the output ordered in x
        let mut stack = vec![(w[0], w[1])];
        while let Some((a, b)) = stack.pop() {
            let (osc, dgap) = oscillation(&expr, a, b, &ys, opts.x_samples)?;
            if osc <= accept {
                partition.push(b);
                pieces.push(expr.bind_x(a).add_constant(half));
                derivative_gap = derivative_gap.max(dgap);
                if pieces.len() > opts.max_intervals {
                    return Err(Error::PartitionExplosion {
                        max: opts.max_intervals,
                        width: b - a,
                    });
                }
            } else {
                let m = 0.5 * (a + b);
                if (b - a) * (opts.max_intervals as f64) < (w[1] - w[0]) * 0.5 {
                    return Err(Error::PartitionExplosion {
                        max: opts.max_intervals,
                        width: b - a,
                    });
                }
                stack.push((m, b));
                stack.push((a, m));
            }
        }
    }
    // the seed breakpoints are exact; overwrite rounding in the last entry
    *partition.last_mut().unwrap() = 1.0;
    Ok(PiecewiseProfile {
        partition,
        pieces,
        period: l,
        lift: half,
        g0: profile.g0(),
        g1: profile.g1() + delta,
        derivative_gap,
    })
}

/// `(sup |G(x,y) − G(a,y)|, sup |∂_y G(x,y) − ∂_y G(a,y)|)` over `[a, b] × ys`.
fn oscillation(expr: &Expr, a: f64, b: f64, ys: &[f64], nx: usize) -> Result<(f64, f64)> {
    let nx = nx.max(2);
    let mut osc: f64 = 0.0;
    let mut dgap: f64 = 0.0;
    let base: Vec<(f64, f64)> = ys
        .iter()
        .map(|&y| {
            Ok((
                expr.eval(a, y)?,
                (expr.eval(a, y + FD_STEP)? - expr.eval(a, y - FD_STEP)?) / (2.0 * FD_STEP),
            ))
        })
        .collect::<Result<_>>()?;
    for k in 1..nx {
        let x = a + (b - a) * k as f64 / (nx - 1) as f64;
        for (&y, &(g_a, d_a)) in ys.iter().zip(&base) {
            osc = osc.max((expr.eval(x, y)? - g_a).abs());
            let d = (expr.eval(x, y + FD_STEP)? - expr.eval(x, y - FD_STEP)?) / (2.0 * FD_STEP);
            dgap = dgap.max((d - d_a).abs());
        }
    }
    Ok((osc, dgap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::{validate_hypothesis, ValidationGrid};
    use rand::{Rng, SeedableRng};

    fn locally_periodic() -> Profile {
        Profile::expression("1 + 0.2*x + 0.1*sin(2*pi*y)", 1.0, 0.9, 1.3).unwrap()
    }

    #[test]
    fn purely_periodic_profile_gives_one_interval() {
        let g = Profile::expression("1 + 0.5*sin(2*pi*y)", 1.0, 0.5, 1.5).unwrap();
        let pw = build_piecewise_approx(&g, 0.1, PiecewiseOptions::default()).unwrap();
        assert_eq!(pw.partition(), &[0.0, 1.0]);
        for k in 0..50 {
            let y = k as f64 * 0.021;
            let d = pw.eval(0.3, y).unwrap() - g.eval(0.3, y).unwrap();
            assert!((d - 0.05).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_drift_gives_quarter_partition() {
        let pw =
            build_piecewise_approx(&locally_periodic(), 0.1, PiecewiseOptions::default()).unwrap();
        assert_eq!(pw.partition(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        // dense sampling after construction
        let g = locally_periodic();
        for i in 0..=400 {
            for j in 0..40 {
                let (x, y) = (i as f64 / 400.0, j as f64 / 40.0);
                let gap = pw.eval(x, y).unwrap() - g.eval(x, y).unwrap();
                assert!(
                    gap >= -1e-12 && gap <= 0.1 + 1e-12,
                    "gap {gap} at ({x},{y})"
                );
            }
        }
    }

    #[test]
    fn large_delta_single_interval() {
        let pw =
            build_piecewise_approx(&locally_periodic(), 1.0, PiecewiseOptions::default()).unwrap();
        assert_eq!(pw.intervals(), 1);
    }

    #[test]
    fn seeded_with_profile_breakpoints() {
        let spec = crate::profiles::ProfileSpec {
            kind: "piecewise".into(),
            expr: None,
            breakpoints: Some(vec![0.0, 0.3, 1.0]),
            exprs: Some(vec![
                "1 + 0.1*sin(2*pi*y)".into(),
                "2 + 0.1*sin(2*pi*y)".into(),
            ]),
            period: 1.0,
            g0: Some(0.9),
            g1: Some(2.1),
            m: None,
        };
        let g = Profile::from_spec(&spec).unwrap();
        let pw = build_piecewise_approx(&g, 0.05, PiecewiseOptions::default()).unwrap();
        assert_eq!(pw.partition(), &[0.0, 0.3, 1.0]);
    }

    #[test]
    fn partition_explosion_reported() {
        let g = Profile::expression("1 + 0.5*x + 0.1*sin(2*pi*y)", 1.0, 0.9, 1.6).unwrap();
        let opts = PiecewiseOptions {
            max_intervals: 8,
            ..Default::default()
        };
        let err = build_piecewise_approx(&g, 1e-3, opts).unwrap_err();
        assert!(matches!(err, Error::PartitionExplosion { .. }));
    }

    #[test]
    fn gap_bound_at_random_points() {
        let g = Profile::expression("1 + 0.3*sin(2*pi*x)*cos(2*pi*y) + 0.1*x^2", 1.0, 0.6, 1.5)
            .unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for &delta in &[0.2, 0.05] {
            let pw = build_piecewise_approx(&g, delta, PiecewiseOptions::default()).unwrap();
            for _ in 0..10_000 {
                let x: f64 = rng.gen();
                let y: f64 = rng.gen();
                let gap = pw.eval(x, y).unwrap() - g.eval(x, y).unwrap();
                assert!(
                    gap >= -1e-12 && gap <= delta + 1e-12,
                    "gap {gap} at ({x},{y})"
                );
            }
        }
    }

    #[test]
    fn partitions_refine_as_delta_shrinks() {
        let g = Profile::expression("1 + 0.3*x^2 + 0.1*sin(2*pi*y)*x", 1.0, 0.9, 1.5).unwrap();
        let mut prev: Option<Vec<f64>> = None;
        for &delta in &[0.4, 0.2, 0.1, 0.05, 0.01] {
            let pw = build_piecewise_approx(&g, delta, PiecewiseOptions::default()).unwrap();
            if let Some(coarse) = &prev {
                assert!(pw.intervals() >= coarse.len() - 1);
                for b in coarse {
                    assert!(pw.partition().contains(b), "{b} missing at delta {delta}");
                }
            }
            prev = Some(pw.partition().to_vec());
        }
    }

    #[test]
    fn reinterpreted_profile_satisfies_hypothesis() {
        let pw =
            build_piecewise_approx(&locally_periodic(), 0.05, PiecewiseOptions::default()).unwrap();
        let p = pw.to_profile().unwrap();
        assert_eq!(p.period(), 1.0);
        let r = validate_hypothesis(&p, ValidationGrid::default(), 1e-12).unwrap();
        assert!(r.pass, "{:?}", r.failures);
    }
}
