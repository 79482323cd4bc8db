use std::f64::consts::PI;
use std::sync::Arc;

use hypercont::control::*;
use hypercont::kernels::*;
use hypercont::model::{build_example_continuum, build_example_nm};
use hypercont::numerics::{XGrid, YGrid};
use hypercont::sim::*;

fn zero_law(n_hat: usize, grid: &XGrid) -> OutputLaw {
    let c = build_example_continuum();
    let mesh = Arc::new(build_trimesh(2, |j, x| c.mu(j, x), 17).unwrap());
    let ctl = KernelField::zeros(KernelKind::Control, mesh, YGrid::new(120).unwrap());
    OutputLaw::continuum(&ctl, &c, n_hat, grid).unwrap()
}

fn unit_end_state(n: usize, grid: &XGrid) -> GridState {
    GridState::from_fn(n, 2, grid, |_, x| if x == 1.0 { 1.0 } else { 0.0 }, |_, _| 0.0)
}

#[test]
fn boundary_term_only_law_for_the_example() {
    let grid = XGrid::new(9).unwrap();
    for n in [2usize, 5, 60, 1000] {
        let u = zero_law(n, &grid).apply(&unit_end_state(n, &grid)).unwrap();
        // right Riemann sums of cos(2πy) and 2y(y + 5)
        let nf = n as f64;
        let r2 = 2.0 * (nf + 1.0) * (2.0 * nf + 1.0) / (6.0 * nf * nf) + 10.0 * (nf + 1.0) / (2.0 * nf);
        assert!(u[0].abs() < 1e-12, "n {n}: {}", u[0]);
        assert!((u[1] + r2).abs() < 1e-12, "n {n}: {} vs {}", u[1], -r2);
    }
    let u = zero_law(1000, &grid).apply(&unit_end_state(1000, &grid)).unwrap();
    assert!((u[1] + 17.0 / 3.0).abs() < 0.01);
}

#[test]
fn single_cell_law_is_minus_r_times_the_end_value() {
    let grid = XGrid::new(9).unwrap();
    let mut s = unit_end_state(1, &grid);
    s.u.iter_mut().for_each(|v| *v *= 0.7);
    let u = zero_law(1, &grid).apply(&s).unwrap();
    let c = build_example_continuum();
    for j in 0..2 {
        assert!((u[j] + c.r(j, 1.0) * 0.7).abs() < 1e-14);
    }
    assert!((u[0] + 0.7 * (2.0 * PI).cos()).abs() < 1e-14);
}

#[test]
fn zero_state_gives_zero_control() {
    let grid = XGrid::new(17).unwrap();
    let c = build_example_continuum();
    let mesh = Arc::new(build_trimesh(2, |j, x| c.mu(j, x), 33).unwrap());
    let yg = YGrid::new(120).unwrap();
    let ctl = solve_control_kernels(&c, &mesh, &yg, &KernelSolverConfig::default()).unwrap();
    let law = OutputLaw::continuum(&ctl, &c, 12, &grid).unwrap();
    assert_eq!(law.apply(&GridState::zeros(12, 2, 17)).unwrap(), vec![0.0, 0.0]);
    assert!(law.apply(&GridState::zeros(11, 2, 17)).is_err());
}

#[test]
fn state_feedback_matches_observer_feedback_with_exact_observer() {
    let n = 9;
    let grid = XGrid::new(65).unwrap();
    let c = build_example_continuum();
    let mesh = Arc::new(build_trimesh(2, |j, x| c.mu(j, x), 65).unwrap());
    let yg = YGrid::new(120).unwrap();
    let obs = closed_form_kernels("example-observer", mesh.clone(), yg.clone()).unwrap();
    let ctl = solve_control_kernels(&c, &mesh, &yg, &KernelSolverConfig::default()).unwrap();
    let gains = make_gains(&obs, &ctl, &c, n, &grid).unwrap();
    let p = build_example_nm(n).unwrap();
    let law = OutputLaw::nm(&gains, &p).unwrap();
    let sys = DiscreteSystem::from_plant(&p, &grid);
    let init = GridState::from_fn(n, 2, &grid, |i, x| (PI * x).sin() / (i + 1) as f64, |_, x| x * (1.0 - x));
    let cfg = SimConfig { nx: 65, horizon: 3.0, record_stride: 4, ..Default::default() };
    let state = Scenario { plant: sys.clone(), init: init.clone(), observer: None, law: Some((law.clone(), Feedback::Plant)) };
    let output = Scenario {
        plant: sys.clone(),
        init: init.clone(),
        observer: Some(Observer { system: sys, gains, init }),
        law: Some((law, Feedback::Observer)),
    };
    let (a, b) = (simulate(&state, &cfg).unwrap(), simulate(&output, &cfg).unwrap());
    for (p, q) in a.controls.iter().flatten().zip(b.controls.iter().flatten()) {
        assert!((p - q).abs() <= 1e-10 * p.abs().max(1.0));
    }
}

#[test]
fn estimate_requires_enough_observer_rows() {
    let grid = XGrid::new(9).unwrap();
    let s = GridState::from_fn(6, 2, &grid, |i, _| i as f64, |_, _| 1.0);
    let e = estimate_nm_state(&s, 3).unwrap();
    assert_eq!(e.u_row(0), &[0.5; 9]);
    assert_eq!(e.u_row(2), &[4.5; 9]);
    assert_eq!(e.v, s.v);
    assert!(estimate_nm_state(&s, 7).is_err());
    assert!(estimate_nm_state(&s, 0).is_err());
}

#[test]
fn nm_law_rejects_mismatched_plants() {
    let grid = XGrid::new(9).unwrap();
    let g = GainSet::zeros(4, 2, grid);
    assert!(OutputLaw::nm(&g, &build_example_nm(5).unwrap()).is_err());
    assert!(OutputLaw::nm(&g, &build_example_nm(4).unwrap()).is_ok());
}
