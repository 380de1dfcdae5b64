use std::sync::Arc;

use thinhomog::mesh::{build_graph_mesh, FieldRole, Mesh, NodalField};
use thinhomog::plap::{minimize, EnergySpec, Load, Objective, SolveConfig};

fn square(n: usize) -> Arc<Mesh> {
    Arc::new(build_graph_mesh(|_| Ok(1.0), (0.0, 1.0), n, n, false).unwrap())
}

fn constant_load(c: f64) -> Load {
    Load::Function(Arc::new(move |_, _| c))
}

#[test]
fn quadratic_problem_takes_one_newton_step() {
    let m = Arc::new(build_graph_mesh(|x| Ok(1.0 + 0.3 * x), (0.0, 2.0), 9, 5, false).unwrap());
    let spec = EnergySpec::neumann(m.clone(), 2.0, constant_load(1.0)).unwrap();
    let u0 = NodalField::zeros(m, 2.0, FieldRole::Solution);
    let (u, rep) = minimize(&spec, &SolveConfig::default(), &u0).unwrap();
    assert_eq!(rep.iterations, 1);
    assert_eq!(rep.steps, vec![1.0]);
    assert!(u.values().iter().all(|v| (v - 1.0).abs() < 1e-10));
}

#[test]
fn p4_energy_decreases_to_tight_residual() {
    let m = square(8);
    let spec = EnergySpec::neumann(m.clone(), 4.0, constant_load(1.0)).unwrap();
    let u0 = NodalField::zeros(m, 4.0, FieldRole::Solution);
    let (u, rep) = minimize(&spec, &SolveConfig::default(), &u0).unwrap();
    assert!(rep.converged);
    assert!(rep.final_gradient <= 1e-10);
    assert!(rep.energy_monotone(), "{:?}", rep.energies);
    assert!(rep.energies.windows(2).any(|w| w[1] < w[0]));
    assert!(u.values().iter().all(|v| (v - 1.0).abs() < 1e-8));
    let g = spec.gradient(u.values()).0;
    assert!(g.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-10 * rep.energies.len() as f64);
}

#[test]
fn nonconstant_load_for_several_exponents() {
    let m = square(10);
    for &p in &[1.5, 2.0, 3.0, 4.0] {
        let load = Load::Function(Arc::new(|x: f64, y: f64| (3.0 * x).cos() + y));
        let spec = EnergySpec::neumann(m.clone(), p, load).unwrap();
        let u0 = NodalField::zeros(m.clone(), p, FieldRole::Solution);
        let (_, rep) = minimize(&spec, &SolveConfig::default(), &u0).unwrap();
        assert!(rep.converged, "p={p}");
        assert!(rep.final_gradient <= 1e-10, "p={p}: {}", rep.final_gradient);
        assert!(rep.energy_monotone(), "p={p}");
    }
}

#[test]
fn flat_cell_corrector_is_zero() {
    let m = Arc::new(build_graph_mesh(|_| Ok(2.0), (0.0, 1.0), 16, 16, true).unwrap());
    for &p in &[1.5, 3.0] {
        let spec = EnergySpec::cell(m.clone(), p).unwrap();
        let u0 = NodalField::zeros(m.clone(), p, FieldRole::Corrector);
        let (psi, rep) = minimize(&spec, &SolveConfig::default(), &u0).unwrap();
        assert!(rep.converged);
        assert!(psi.values().iter().all(|v| v.abs() <= 1e-12));
    }
}
