//! The monotone map `a_p(v) = |v|^{p−2} v` and the elementary inequalities built on it.

use rand::Rng;
use serde::Serialize;

/// `|s|^{p−2} s` with `a_p(0) = 0`.
pub fn a_p_scalar(s: f64, p: f64) -> f64 {
    if s == 0.0 {
        0.0
    } else {
        s.abs().powf(p - 2.0) * s
    }
}

pub fn a_p(v: [f64; 2], p: f64) -> [f64; 2] {
    let n = v[0].hypot(v[1]);
    if n == 0.0 {
        [0.0, 0.0]
    } else {
        let w = n.powf(p - 2.0);
        [w * v[0], w * v[1]]
    }
}

/// Change of `|a_p|` when a magnitude `m` is perturbed by `delta`: `(m+δ)^{p−1} − m^{p−1}`.
/// For `p < 2` and `m ≈ 0` this is far larger than `δ`.
pub fn flux_sensitivity(m: f64, delta: f64, p: f64) -> f64 {
    ((m + delta).powf(p - 1.0) - m.powf(p - 1.0)).abs()
}

/// Norm of the residual noise given per-dof absolute contributions and sensitivities.
pub fn gradient_floor(abs: &[f64], sens: &[f64]) -> f64 {
    let l2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    16.0 * f64::EPSILON * l2(abs) + l2(sens)
}

fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// `⟨a_p(x) − a_p(y), x − y⟩`.
pub fn monotonicity_gap(x: [f64; 2], y: [f64; 2], p: f64) -> f64 {
    dot(sub(a_p(x, p), a_p(y, p)), sub(x, y))
}

/// Conjugate exponent `p' = p / (p − 1)`.
pub fn conjugate(p: f64) -> f64 {
    p / (p - 1.0)
}

/// Outcome of one randomized inequality suite at a fixed `p`.
#[derive(Debug, Clone, Serialize)]
pub struct InequalityReport {
    pub p: f64,
    pub pairs: usize,
    /// Pairs where `⟨a_p(x) − a_p(y), x − y⟩ < 0` beyond tolerance.
    pub monotonicity_violations: usize,
    /// Smallest observed ratio in the strong monotonicity bound
    /// (`|x−y|^p` for `p ≥ 2`, `|x−y|²(|x|+|y|)^{p−2}` otherwise).
    pub monotonicity_constant: f64,
    /// Largest observed ratio in the Hölder bound for `a_{p'}`.
    pub holder_constant: f64,
    /// Pairs where the Hölder bound with constant `2^{2−p'}` fails (only tested for `p' < 2`).
    pub holder_violations: usize,
    /// Pairs where `|y|^p ≥ |x|^p + p a_p(x)·(y−x)` fails beyond tolerance.
    pub convexity_violations: usize,
    /// Smallest observed ratio for the strengthened convexity bound.
    pub convexity_constant: f64,
}

impl InequalityReport {
    pub fn pass(&self) -> bool {
        self.monotonicity_violations == 0
            && self.holder_violations == 0
            && self.convexity_violations == 0
            && self.monotonicity_constant > 0.0
            && self.convexity_constant > 0.0
            && self.holder_constant.is_finite()
    }
}

/// Vector with log-uniform magnitude in `[1e-3, 1e3]` and uniform direction.
fn random_vector<R: Rng>(rng: &mut R) -> [f64; 2] {
    let r = 10f64.powf(rng.gen_range(-3.0..3.0));
    let t = rng.gen_range(0.0..std::f64::consts::TAU);
    [r * t.cos(), r * t.sin()]
}

/// Checks monotonicity, the Hölder bound on the inverse map and the convexity
/// inequality of `|·|^p` on `pairs` random vector pairs.
pub fn inequality_suite<R: Rng>(p: f64, pairs: usize, tol: f64, rng: &mut R) -> InequalityReport {
    let q = conjugate(p);
    let mut rep = InequalityReport {
        p,
        pairs,
        monotonicity_violations: 0,
        monotonicity_constant: f64::INFINITY,
        holder_constant: 0.0,
        holder_violations: 0,
        convexity_violations: 0,
        convexity_constant: f64::INFINITY,
    };
    let holder_bound = 2f64.powf(2.0 - q);
    for _ in 0..pairs {
        let x = random_vector(rng);
        let y = random_vector(rng);
        let (nx, ny) = (norm(x), norm(y));
        let d = norm(sub(x, y));
        if d == 0.0 {
            continue;
        }

        let gap = monotonicity_gap(x, y, p);
        let scale = (nx.powf(p) + ny.powf(p)).max(f64::MIN_POSITIVE);
        if gap < -tol * scale {
            rep.monotonicity_violations += 1;
        }
        let lower = if p >= 2.0 {
            d.powf(p)
        } else {
            d * d * (nx + ny).powf(p - 2.0)
        };
        rep.monotonicity_constant = rep.monotonicity_constant.min(gap / lower);

        let diff = norm(sub(a_p(x, q), a_p(y, q)));
        let ratio = if q < 2.0 {
            diff / d.powf(q - 1.0)
        } else {
            diff / (d * (nx + ny).powf(q - 2.0))
        };
        rep.holder_constant = rep.holder_constant.max(ratio);
        if q < 2.0 && ratio > holder_bound * (1.0 + tol) {
            rep.holder_violations += 1;
        }

        let excess = ny.powf(p) - nx.powf(p) - p * dot(a_p(x, p), sub(y, x));
        if excess < -tol * scale {
            rep.convexity_violations += 1;
        }
        let lower = if p >= 2.0 {
            d.powf(p)
        } else {
            d * d * (1.0 + nx + ny).powf(p - 2.0)
        };
        rep.convexity_constant = rep.convexity_constant.min(excess.max(0.0) / lower);
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn fixed_values() {
        assert_eq!(a_p([1.0, 0.0], 3.0), [1.0, 0.0]);
        assert_eq!(a_p([0.0, 0.0], 1.5), [0.0, 0.0]);
        assert_eq!(a_p_scalar(0.0, 1.5), 0.0);
        let v = a_p([3.0, 4.0], 4.0);
        assert!((v[0] - 75.0).abs() < 1e-12 && (v[1] - 100.0).abs() < 1e-12);
        assert_eq!(a_p_scalar(-2.0, 3.0), -4.0);
    }

    #[test]
    fn gap_examples() {
        assert_eq!(monotonicity_gap([0.3, -0.2], [0.3, -0.2], 2.5), 0.0);
        assert_eq!(monotonicity_gap([1.0, 0.0], [-1.0, 0.0], 2.0), 4.0);
    }

    #[test]
    fn inverse_of_conjugate() {
        for &p in &[1.2, 1.5, 3.0, 4.0] {
            let v = [0.7, -1.9];
            let w = a_p(a_p(v, p), conjugate(p));
            assert!((w[0] - v[0]).abs() < 1e-12 && (w[1] - v[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn suites_have_no_violations() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        for &p in &[1.5, 2.0, 3.0, 4.0] {
            let r = inequality_suite(p, 1000, 1e-12, &mut rng);
            assert!(r.pass(), "{r:?}");
        }
    }

    #[test]
    fn quadratic_case_constants() {
        // p = 2: the gap is exactly |x − y|² and a_2 is the identity
        let mut rng = rand::rngs::StdRng::seed_from_u64(9);
        let r = inequality_suite(2.0, 500, 1e-12, &mut rng);
        assert!((r.monotonicity_constant - 1.0).abs() < 1e-9);
        assert!((r.holder_constant - 1.0).abs() < 1e-9);
    }
}
