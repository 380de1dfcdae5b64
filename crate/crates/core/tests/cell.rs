use thinhomog::cell::{
    effective_r, piecewise_coefficients, sample_coefficients, solve_cell, CellResolution,
    CellSolution, CoefficientCache, EffectiveCoefficients,
};
use thinhomog::plap::SolveConfig;
use thinhomog::profiles::{Expr, Profile, ProfileKind, Side};

fn sine() -> Profile {
    Profile::expression("1 + 0.5*sin(2*pi*y)", 1.0, 0.5, 1.5).unwrap()
}

fn res(n1: usize, n2: usize) -> CellResolution {
    CellResolution { n1, n2 }
}

fn cell(profile: &Profile, x: f64, p: f64, r: CellResolution) -> CellSolution {
    solve_cell(profile, x, Side::Right, p, r, &SolveConfig::default()).unwrap()
}

#[test]
fn flat_cell_is_exact() {
    let g = Profile::constant(2.0, 1.0).unwrap();
    for &p in &[1.5, 2.0, 3.0] {
        let s = cell(&g, 0.3, p, res(12, 6));
        assert!(s.max_abs_corrector() <= 1e-14, "p={p}");
        assert!((s.q_flux - 2.0).abs() < 1e-12);
        assert!((s.q_energy - 2.0).abs() < 1e-12);
        assert!((s.r - 2.0).abs() < 1e-12);
        for (n, q) in s.mesh.nodes().iter().enumerate() {
            assert!((s.v[n] - q[0]).abs() < 1e-15);
        }
    }
}

/// Independent p = 2 solve: dense stiffness from raw coordinates, plain CG on the
/// zero-mean subspace.
fn linear_oracle(s: &CellSolution) -> f64 {
    let m = &s.mesh;
    let n = m.dofs();
    let mut k = vec![0.0; n * n];
    let mut b = vec![0.0; n];
    let mut geo = Vec::new();
    for tri in m.triangles() {
        let [a, bb, c] = tri.map(|i| m.nodes()[i]);
        let det = (bb[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (bb[1] - a[1]);
        let area = 0.5 * det;
        // gradients of the hat functions: rotated opposite edges over 2·area
        let grads = [
            [(bb[1] - c[1]) / det, (c[0] - bb[0]) / det],
            [(c[1] - a[1]) / det, (a[0] - c[0]) / det],
            [(a[1] - bb[1]) / det, (bb[0] - a[0]) / det],
        ];
        let d = tri.map(|i| m.dof(i));
        for i in 0..3 {
            b[d[i]] -= area * grads[i][0];
            for j in 0..3 {
                k[d[i] * n + d[j]] +=
                    area * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
            }
        }
        geo.push((area, grads, d));
    }
    let matvec = |x: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| (0..n).map(|j| k[i * n + j] * x[j]).sum())
            .collect()
    };
    let center = |v: &mut Vec<f64>| {
        let mean = v.iter().sum::<f64>() / n as f64;
        v.iter_mut().for_each(|x| *x -= mean);
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut x = vec![0.0; n];
    let mut r = b.clone();
    center(&mut r);
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let stop = 1e-28 * rr;
    for _ in 0..10 * n {
        if rr <= stop {
            break;
        }
        let ap = matvec(&p);
        let alpha = rr / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        center(&mut r);
        let next = dot(&r, &r);
        for i in 0..n {
            p[i] = r[i] + next / rr * p[i];
        }
        rr = next;
    }
    let mut q = 0.0;
    for (area, grads, d) in geo {
        let dx: f64 = (0..3).map(|i| x[d[i]] * grads[i][0]).sum();
        q += area * (1.0 + dx);
    }
    q / s.period
}

#[test]
fn p2_matches_independent_linear_solve() {
    let s = cell(&sine(), 0.5, 2.0, res(32, 16));
    let oracle = linear_oracle(&s);
    assert!(
        (s.q_flux - oracle).abs() <= 1e-8 * oracle,
        "{} vs {oracle}",
        s.q_flux
    );
    assert!(s.q_flux < 1.0 && (s.r - 1.0).abs() < 1e-12);
}

#[test]
fn converged_cells_satisfy_invariants() {
    let tol = SolveConfig::default().gradient_tol;
    for &p in &[1.5, 2.0, 3.0, 4.0] {
        let s = cell(&sine(), 0.5, p, res(32, 16));
        assert!(s.corrector_mean().abs() < 1e-12, "p={p}");
        assert!(s.q_flux > 0.0 && s.q_energy > 0.0);
        assert!(s.q_flux <= s.r, "p={p}: q={} r={}", s.q_flux, s.r);
        assert!(
            s.dual_defect() <= 10.0 * tol * s.q_energy.max(1.0),
            "p={p}: defect {}",
            s.dual_defect()
        );
        for &(l, r) in s.mesh.periodic_pairs() {
            assert_eq!(s.psi.at_node(l), s.psi.at_node(r));
        }
    }
}

#[test]
fn p3_refinement_is_stable() {
    let q: Vec<f64> = [(8, 4), (16, 8), (32, 16), (64, 32)]
        .iter()
        .map(|&(a, b)| cell(&sine(), 0.5, 3.0, res(a, b)).q_flux)
        .collect();
    for v in &q {
        assert!(*v > 0.0 && *v < 1.0);
    }
    let diffs: Vec<f64> = q.windows(2).map(|w| (w[0] - w[1]).abs()).collect();
    for w in diffs.windows(2) {
        assert!(w[1] < w[0], "{q:?}");
    }
}

#[test]
fn effective_r_examples() {
    let a = Profile::constant(0.7, 1.0).unwrap();
    assert!((effective_r(&a, 0.2, Side::Right).unwrap() - 0.7).abs() < 1e-14);
    assert!((effective_r(&sine(), 0.2, Side::Right).unwrap() - 1.0).abs() < 1e-14);
    let lin = Profile::expression("1 + 0.2*x", 1.0, 1.0, 1.2).unwrap();
    assert!((effective_r(&lin, 0.5, Side::Right).unwrap() - 1.1).abs() < 1e-14);
}

#[test]
fn x_independent_profile_gives_equal_samples() {
    let cache = CoefficientCache::new();
    let grid: Vec<f64> = (1..8).map(|k| k as f64 / 8.0).collect();
    let c = sample_coefficients(
        &sine(),
        &grid,
        2.0,
        res(16, 8),
        &SolveConfig::default(),
        &cache,
    )
    .unwrap();
    for q in &c.q {
        assert!((q - c.q[0]).abs() < 1e-10);
    }
    assert_eq!(cache.solves(), 1);
}

#[test]
fn piecewise_profile_needs_one_solve_per_interval() {
    let pieces = ["1 + 0.3*sin(2*pi*y)", "1.2", "0.9 + 0.2*cos(2*pi*y)"]
        .iter()
        .map(|s| Expr::parse(s).unwrap())
        .collect();
    let profile = Profile::new(
        ProfileKind::Piecewise {
            breakpoints: vec![0.0, 0.3, 0.6, 1.0],
            pieces,
        },
        1.0,
        0.7,
        1.3,
        None,
    )
    .unwrap();
    let cache = CoefficientCache::new();
    let config = SolveConfig::default();
    let grid: Vec<f64> = (0..40).map(|k| (k as f64 + 0.5) / 40.0).collect();
    let c = sample_coefficients(&profile, &grid, 2.0, res(16, 8), &config, &cache).unwrap();
    assert_eq!(cache.solves(), 3);
    let pw = piecewise_coefficients(&profile, 2.0, res(16, 8), &config, &cache).unwrap();
    assert_eq!(cache.solves(), 3);
    assert_eq!(pw.q.len(), 3);
    assert!((c.q_at(0.45) - 1.2).abs() < 1e-12);
    assert!((pw.q_at(0.45) - 1.2).abs() < 1e-12);
    assert_eq!(pw.q_at(0.1), c.q[0]);
}

#[test]
fn locally_periodic_q_increases_with_x() {
    let profile = Profile::expression("1 + 0.2*x + 0.3*sin(2*pi*y)", 1.0, 0.7, 1.5).unwrap();
    let grid: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
    let c = sample_coefficients(
        &profile,
        &grid,
        2.0,
        res(16, 8),
        &SolveConfig::default(),
        &CoefficientCache::new(),
    )
    .unwrap();
    for w in c.q.windows(2) {
        assert!(w[1] > w[0], "{:?}", c.q);
    }
    for k in 0..c.q.len() {
        assert!(c.q[k] > 0.0 && c.q[k] <= c.r[k]);
    }
}

#[test]
fn csv_round_trip() {
    let c = EffectiveCoefficients::from_samples(
        vec![0.1, 0.5, 0.9],
        vec![0.8, 0.85, 0.123456789012345678],
        vec![1.0, 1.1, 1.2],
    )
    .unwrap();
    let mut buf = Vec::new();
    c.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("x,q,r\n"));
    let back = EffectiveCoefficients::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.q, c.q);
    assert_eq!(back.xs, c.xs);
}
