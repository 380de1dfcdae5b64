use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use thinhomog::cell::EffectiveCoefficients;
use thinhomog::homog1d::{solve_homogenized, FHat};
use thinhomog::mesh::{build_graph_mesh, FieldRole, NodalField};
use thinhomog::plap::SolveConfig;
use thinhomog::profiles::Profile;
use thinhomog::thin2d::*;

fn sine() -> Profile {
    Profile::expression("1 + 0.5*sin(2*pi*y)", 1.0, 0.5, 1.5).unwrap()
}

fn flat(c: f64) -> Profile {
    Profile::constant(c, 1.0).unwrap()
}

fn res(min_columns: usize) -> ThinResolution {
    ThinResolution {
        min_columns,
        ..ThinResolution::default()
    }
}

fn solve(
    profile: Profile,
    eps: f64,
    p: f64,
    f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    r: ThinResolution,
) -> EpsilonSolution {
    let prob = EpsilonProblem::new(profile, eps, f, p, r).unwrap();
    solve_epsilon_problem(&prob, &SolveConfig::default()).unwrap()
}

#[test]
fn constant_load_on_flat_domain_gives_one() {
    for &p in &[1.5, 2.0, 3.0] {
        for &eps in &[0.25, 0.125] {
            let s = solve(flat(1.0), eps, p, |_, _| 1.0, res(32));
            let err =
                s.u.values()
                    .iter()
                    .fold(0.0f64, |m, v| m.max((v - 1.0).abs()));
            assert!(err <= 1e-9, "p={p} eps={eps}: {err}");
        }
    }
}

/// Max distance to the 1D solve and max spread across each column.
fn reduction_defect(n: usize) -> (f64, f64) {
    let f = |x: f64| (PI * x).cos();
    let s = solve(flat(1.0), 0.125, 2.0, move |x, _| f(x), res(n));
    let c = EffectiveCoefficients::constant(1.0, 1.0);
    let (u1, _) =
        solve_homogenized(&c, &FHat::function(f), 2.0, n, &SolveConfig::default()).unwrap();
    let m = s.u.mesh();
    let mut lo = vec![f64::INFINITY; n + 1];
    let mut hi = vec![f64::NEG_INFINITY; n + 1];
    let mut err = 0.0f64;
    for (node, q) in m.nodes().iter().enumerate() {
        let i = (q[0] * n as f64).round() as usize;
        let v = s.u.at_node(node);
        err = err.max((v - u1.values[i]).abs());
        lo[i] = lo[i].min(v);
        hi[i] = hi[i].max(v);
    }
    let spread = lo.iter().zip(&hi).fold(0.0f64, |m, (a, b)| m.max(b - a));
    (err, spread)
}

// the triangulated mass couples neighbouring layers, so the reduction holds up
// to an O(h²) consistency error
#[test]
fn flat_domain_reduces_to_one_dimensional_solve() {
    let d: Vec<(f64, f64)> = [64, 128, 256]
        .iter()
        .map(|&n| reduction_defect(n))
        .collect();
    for (k, w) in d.windows(2).enumerate() {
        let rate = if k == 0 { 3.0 } else { 3.5 };
        assert!(w[0].0 / w[1].0 > rate, "{d:?}");
        assert!(w[0].1 / w[1].1 > rate, "{d:?}");
        let h = 1.0 / (64 << (k + 1)) as f64;
        assert!(w[1].0 <= h * h && w[1].1 <= h * h, "{d:?}");
    }
}

#[test]
fn apriori_bound_holds_on_sine_domain() {
    let s = solve(sine(), 0.125, 3.0, |_, _| 1.0, ThinResolution::default());
    let (lhs, rhs) = s.apriori_bound();
    assert!(lhs <= rhs + 1e-6, "{lhs} > {rhs}");
    assert!(s.apriori_holds(1e-6));
}

#[test]
fn resolution_policy_is_enforced() {
    let bad = ThinResolution {
        points_per_period: 4,
        ..ThinResolution::default()
    };
    assert!(EpsilonProblem::new(sine(), 0.125, |_, _| 1.0, 2.0, bad).is_err());
    let odd = ThinResolution {
        points_per_period: 33,
        ..ThinResolution::default()
    };
    assert!(EpsilonProblem::new(sine(), 0.125, |_, _| 1.0, 2.0, odd).is_err());
    assert!(EpsilonProblem::new(sine(), 0.0, |_, _| 1.0, 2.0, ThinResolution::default()).is_err());
    let ok =
        EpsilonProblem::new(sine(), 0.125, |_, _| 1.0, 2.0, ThinResolution::default()).unwrap();
    assert_eq!(ok.columns(), 256);
}

fn field_on(profile: &Profile, eps: f64, f: impl Fn(f64, f64) -> f64) -> NodalField {
    let prob = EpsilonProblem::new(
        profile.clone(),
        eps,
        |_, _| 0.0,
        2.0,
        ThinResolution::default(),
    )
    .unwrap();
    NodalField::from_fn(Arc::new(prob.mesh().unwrap()), 2.0, FieldRole::Datum, f).unwrap()
}

#[test]
fn column_average_examples() {
    let eps = 0.125;
    let u = field_on(&flat(0.7), eps, |_, _| 1.0);
    let xs = column_midpoints(u.mesh()).unwrap();
    let a = column_average(&u, &flat(0.7), eps, &xs).unwrap();
    assert!(a.values.iter().all(|v| (v - 1.0).abs() < 1e-12));

    let u = field_on(&flat(1.0), eps, |_, y| y);
    let a = column_average(&u, &flat(1.0), eps, &xs).unwrap();
    assert!(a.values.iter().all(|v| (v - eps / 2.0).abs() < 1e-12));
    let u = field_on(&flat(1.0), eps, move |_, y| y / eps);
    let a = column_average(&u, &flat(1.0), eps, &xs).unwrap();
    assert!(a.values.iter().all(|v| (v - 0.5).abs() < 1e-12));

    // u ≡ 1 under the sine profile: the discrete height over ε, divided by r = 1
    let g = sine();
    let u = field_on(&g, eps, |_, _| 1.0);
    let xs = column_midpoints(u.mesh()).unwrap();
    let a = column_average(&u, &g, eps, &xs).unwrap();
    let t = u.mesh().terrain().unwrap();
    for (x, v) in xs.iter().zip(&a.values) {
        assert!((v - t.heights_at(*x).1 / eps).abs() < 1e-12);
        assert!((v - g.eval(*x, x / eps).unwrap()).abs() < 5e-3);
    }
}

#[test]
fn weak_compare_examples() {
    let a = |x: f64| 1.0 + x * x;
    let d = weak_compare(&a, &a, &TestFunction::DEFAULTS);
    assert!(d.iter().all(|v| *v == 0.0));

    let eps = 1.0 / 16.0;
    let osc = move |x: f64| 1.0 + (2.0 * PI * x / eps).sin();
    let one = |_: f64| 1.0;
    let d = weak_compare(&osc, &one, &[TestFunction::One])[0];
    assert!(d <= 2.0 / (2.0 * PI * 16.0), "{d}");
}

fn cell_mesh(profile: &Profile) -> thinhomog::mesh::Mesh {
    let s = profile.section(0.5, thinhomog::profiles::Side::Right);
    let r = ThinResolution::default();
    build_graph_mesh(
        |y| s.eval(y),
        (0.0, profile.period()),
        r.points_per_period,
        r.layers,
        true,
    )
    .unwrap()
}

#[test]
fn periodic_unfolding_identities() {
    let eps = 0.125;
    let g = sine();
    let cm = cell_mesh(&g);
    let solved = solve(
        g.clone(),
        eps,
        2.0,
        |x, _| (PI * x).cos(),
        ThinResolution::default(),
    )
    .u;
    let fields = [
        field_on(&g, eps, |_, _| 1.0),
        field_on(&g, eps, |x, _| x),
        solved,
    ];
    for u in &fields {
        let unf = unfold_periodic(u, &cm, eps, 1.0, (0.0, 1.0)).unwrap();
        for p in [2.0, 3.0] {
            let c = unf.check(u, p);
            assert!(c.integral_defect() <= 1e-10, "{c:?}");
            assert!(c.norm_defect() <= 1e-10, "{c:?}");
        }
        let c = locally_periodic_identity(u, eps, 1.0).unwrap();
        assert!(c.integral_defect() <= 1e-10, "{c:?}");
        assert!(c.norm_defect() <= 1e-10, "{c:?}");
    }
}

#[test]
fn unfolding_of_constants_and_leftovers() {
    let eps = 0.125;
    let g = sine();
    let cm = cell_mesh(&g);
    let u = field_on(&g, eps, |_, _| 2.5);
    let unf = unfold_periodic(&u, &cm, eps, 1.0, (0.05, 0.9)).unwrap();
    let full: Vec<_> = unf.samples.iter().filter(|s| !s.leftover).collect();
    assert_eq!(full.len(), 6);
    assert!(full
        .iter()
        .all(|s| s.values.iter().all(|v| (v - 2.5).abs() < 1e-12)));
    let left: Vec<_> = unf.samples.iter().filter(|s| s.leftover).collect();
    assert_eq!(left.len(), 2);
    assert!(left.iter().all(|s| s.values.iter().all(|v| *v == 0.0)));
    let covered: f64 = unf.samples.iter().map(|s| s.x_range.1 - s.x_range.0).sum();
    assert!((covered - 0.85).abs() < 1e-12);
}

#[test]
fn unfolded_smooth_field_is_close_to_cell_edge_values() {
    let eps = 0.125;
    let g = sine();
    let u = field_on(&g, eps, |x, _| x);
    let unf = unfold_periodic(&u, &cell_mesh(&g), eps, 1.0, (0.0, 1.0)).unwrap();
    for s in &unf.samples {
        for v in &s.values {
            assert!((v - s.x_range.0).abs() <= eps * 1.0 + 1e-12);
        }
    }
}

#[test]
fn locally_periodic_samples_extend_by_zero() {
    let eps = 0.125;
    let g = flat(0.8);
    let u = field_on(&Profile::constant(0.8, 1.0).unwrap(), eps, |_, _| 3.0);
    let unf = unfold_locally_periodic(&u, &g, eps, (4, 10)).unwrap();
    assert_eq!(unf.cells.len(), 8);
    let g1 = Profile::expression("1 + 0.5*sin(2*pi*y)", 1.0, 0.5, 1.5).unwrap();
    let u1 = field_on(&g1, eps, |_, _| 3.0);
    let unf1 = unfold_locally_periodic(&u1, &g1, eps, (4, 10)).unwrap();
    for (k, block) in unf1.values.iter().enumerate() {
        for (i, &a) in unf1.y1.iter().enumerate() {
            for (j, &b) in unf1.y2.iter().enumerate() {
                let inside = b < g1.eval(0.0, a).unwrap() - 0.02;
                let outside = b > g1.eval(0.0, a).unwrap() + 0.02;
                let v = block[i * unf1.y2.len() + j];
                if inside {
                    assert!((v - 3.0).abs() < 1e-12, "cell {k}");
                }
                if outside {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }
    // flat profile: every sample under the top equals the field
    for block in &unf.values {
        for (i, _) in unf.y1.iter().enumerate() {
            for (j, &b) in unf.y2.iter().enumerate() {
                let v = block[i * unf.y2.len() + j];
                let want = if b < 0.8 { 3.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-12);
            }
        }
    }
}

fn stretch_fixture() -> (Arc<thinhomog::mesh::Mesh>, NodalField) {
    let m = Arc::new(
        build_graph_mesh(
            |x| Ok(1.0 + 0.3 * (2.0 * PI * x).sin()),
            (0.0, 1.0),
            24,
            6,
            false,
        )
        .unwrap(),
    );
    let u = NodalField::from_fn(m.clone(), 3.0, FieldRole::Datum, |x, y| {
        (3.0 * x).sin() * (1.0 + y * y)
    })
    .unwrap();
    (m, u)
}

#[test]
fn stretch_operator_examples() {
    let (m, u) = stretch_fixture();
    let same = apply_p(&u, 0.0, m.clone()).unwrap();
    for (a, b) in same.values().iter().zip(u.values()) {
        assert!((a - b).abs() < 1e-14);
    }
    let y = NodalField::from_fn(m.clone(), 2.0, FieldRole::Datum, |_, y| y).unwrap();
    let t = Arc::new(m.stretched(1.0).unwrap());
    let py = apply_p(&y, 1.0, t.clone()).unwrap();
    for &n in t.dof_nodes() {
        let q = t.nodes()[n];
        assert!((py.at_node(n) - q[1] / 2.0).abs() < 1e-13);
    }
    let other = Arc::new(build_graph_mesh(|_| Ok(2.0), (0.0, 1.0), 10, 6, false).unwrap());
    assert!(apply_p(&u, 0.5, other).is_err());
}

#[test]
fn stretch_norm_identity_and_semigroup() {
    let (m, u) = stretch_fixture();
    for &p in &[1.5, 2.0, 3.0] {
        for &eta in &[0.1, 0.5] {
            let t = Arc::new(m.stretched(eta).unwrap());
            let pu = apply_p(&u, eta, t).unwrap();
            let lhs = w1p_power(&u, p);
            let rhs = stretch_norm_power(&pu, p, eta);
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.max(1.0), "p={p} eta={eta}");
        }
    }
    let (e1, e2) = (0.2, 0.3);
    let m1 = Arc::new(m.stretched(e1).unwrap());
    let m12 = Arc::new(m1.stretched(e2).unwrap());
    let two = apply_p(&apply_p(&u, e1, m1).unwrap(), e2, m12.clone()).unwrap();
    let once = apply_p(&u, (1.0 + e1) * (1.0 + e2) - 1.0, m12).unwrap();
    for (a, b) in two.values().iter().zip(once.values()) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn stretch_norm_sandwich_on_random_fields() {
    let (m, _) = stretch_fixture();
    let mut rng = rand::rngs::StdRng::seed_from_u64(5);
    for _ in 0..20 {
        let vals: Vec<f64> = (0..m.dofs()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let p = rng.gen_range(1.2..4.0);
        let eta: f64 = rng.gen_range(0.0..1.0);
        let w = NodalField::new(m.clone(), vals, p, FieldRole::Datum).unwrap();
        let base = w1p_power(&w, p);
        let s = stretch_norm_power(&w, p, eta);
        let upper = (1.0 + eta).max((1.0 + eta).powf(p - 1.0));
        assert!(base / (1.0 + eta) <= s * (1.0 + 1e-12));
        assert!(s <= upper * base * (1.0 + 1e-12));
    }
}

#[test]
fn identical_domains_have_no_discrepancy() {
    let prob = EpsilonProblem::new(
        sine(),
        0.25,
        |x, _| (PI * x).cos(),
        2.0,
        ThinResolution::default(),
    )
    .unwrap();
    let d = domain_dependence(&prob, &sine(), 0.0, &SolveConfig::default()).unwrap();
    assert!(d.total <= 1e-8, "{d:?}");
}

#[test]
fn flat_strips_have_analytic_discrepancy() {
    let delta = 0.1;
    let prob = EpsilonProblem::new(flat(1.0), 0.125, |_, _| 1.0, 2.0, res(64)).unwrap();
    let d = domain_dependence(&prob, &flat(1.0 - delta), delta, &SolveConfig::default()).unwrap();
    assert!(d.intersection < 1e-16, "{d:?}");
    assert!((d.outer - delta).abs() < 1e-9, "{d:?}");
    assert_eq!(d.inner, 0.0);
    assert!(d.total <= 2.0 * delta);
}

#[test]
fn domain_dependence_checks_the_distance() {
    let prob = EpsilonProblem::new(flat(1.0), 0.125, |_, _| 1.0, 2.0, res(64)).unwrap();
    assert!(domain_dependence(&prob, &flat(0.8), 0.1, &SolveConfig::default()).is_err());
}
