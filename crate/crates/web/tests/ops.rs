use std::f64::consts::PI;
use thinhomog_web::{cell_view, coefficient_curve, solve_limit};

#[test]
fn flat_cell_has_zero_corrector() {
    let v = cell_view("2", 1.0, 2.0, 2.0, 3.0, 0.5, 8, 8).unwrap();
    assert!((v.q - 2.0).abs() < 1e-10 && (v.r - 2.0).abs() < 1e-10);
    assert!(v.psi.iter().all(|s| s.abs() < 1e-10));
    assert_eq!(v.nodes.len(), v.psi.len());
}

#[test]
fn sine_cell_has_q_below_r() {
    let v = cell_view("1 + 0.5*sin(2*pi*y)", 1.0, 0.5, 1.5, 2.0, 0.5, 16, 8).unwrap();
    assert!(v.q > 0.0 && v.q < v.r, "q={} r={}", v.q, v.r);
    assert!((v.r - 1.0).abs() < 1e-10);
}

#[test]
fn curve_tracks_a_linear_mean() {
    let c = coefficient_curve("1 + 0.5*x", 1.0, 1.0, 1.5, 2.0, 5, 4, 4).unwrap();
    for (x, r) in c.x.iter().zip(&c.r) {
        assert!((r - (1.0 + 0.5 * x)).abs() < 1e-10);
    }
    assert_eq!(c.q, c.r);
}

#[test]
fn limit_matches_cosine_solution() {
    let s = solve_limit("1", "1", "cos(pi*x)", 2.0, 256).unwrap();
    let err = s
        .x
        .iter()
        .zip(&s.u)
        .fold(0.0f64, |m, (x, u)| m.max((u - (PI * x).cos() / (1.0 + PI * PI)).abs()));
    assert!(err < 1e-4, "{err}");
}

#[test]
fn bad_input_is_an_error_not_a_panic() {
    assert!(solve_limit("1", "1", "y", 2.0, 16).is_err());
    assert!(solve_limit("1", "1", "1", 0.5, 16).is_err());
    assert!(solve_limit("1 +", "1", "1", 2.0, 16).is_err());
    assert!(cell_view("1", 1.0, 1.0, 1.0, 2.0, 0.5, 1000, 1000).is_err());
    assert!(cell_view("1", 1.0, 0.0, 1.0, 2.0, 0.5, 8, 8).is_err());
}
