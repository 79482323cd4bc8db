use std::f64::consts::PI;
use std::sync::Arc;

use hypercont::control::OutputLaw;
use hypercont::diagnostics::{classify, Verdict};
use hypercont::kernels::*;
use hypercont::model::{build_example_continuum, build_example_nm, PlantCoefficients, PlantParams};
use hypercont::numerics::{XGrid, YGrid};
use hypercont::sim::*;

fn bump(x: f64) -> f64 {
    0.5 * (2.0 * PI * x).sin()
}

fn gains(n: usize, grid: &XGrid) -> GainSet {
    let c = build_example_continuum();
    let mesh = Arc::new(build_trimesh(2, |j, x| c.mu(j, x), 65).unwrap());
    let yg = YGrid::new(120).unwrap();
    let obs = closed_form_kernels("example-observer", mesh.clone(), yg.clone()).unwrap();
    let ctl = solve_control_kernels(&c, &mesh, &yg, &KernelSolverConfig::default()).unwrap();
    make_gains_with(&obs, &ctl, &c, n, grid, GainSampling::Node).unwrap()
}

fn cfg(nx: usize, horizon: f64) -> SimConfig {
    SimConfig { nx, horizon, record_stride: 5, ..Default::default() }
}

#[derive(Debug)]
struct Transport;

impl PlantCoefficients for Transport {
    fn n(&self) -> usize {
        3
    }
    fn m(&self) -> usize {
        2
    }
    fn lambda(&self, i: usize, _x: f64) -> f64 {
        1.0 + i as f64
    }
    fn mu(&self, j: usize, _x: f64) -> f64 {
        [1.5, 1.0][j]
    }
    fn sigma(&self, _i: usize, _l: usize, _x: f64) -> f64 {
        0.0
    }
    fn w(&self, _i: usize, _j: usize, _x: f64) -> f64 {
        0.0
    }
    fn theta(&self, _j: usize, _i: usize, _x: f64) -> f64 {
        0.0
    }
    fn psi(&self, _i: usize, _j: usize, _x: f64) -> f64 {
        0.0
    }
    fn q(&self, _i: usize, _j: usize) -> f64 {
        0.0
    }
    fn r(&self, _j: usize, _i: usize) -> f64 {
        0.0
    }
}

#[test]
fn zero_state_stays_zero() {
    let grid = XGrid::new(33).unwrap();
    let p = build_example_nm(5).unwrap();
    let sys = DiscreteSystem::from_plant(&p, &grid);
    let g = gains(5, &grid);
    let law = OutputLaw::nm(&g, &p).unwrap();
    let sc = Scenario {
        plant: sys.clone(),
        init: GridState::zeros(5, 2, 33),
        observer: Some(Observer { system: sys, gains: g, init: GridState::zeros(5, 2, 33) }),
        law: Some((law, Feedback::Observer)),
    };
    let tr = simulate(&sc, &cfg(33, 3.0)).unwrap();
    assert!(tr.e_norms.iter().chain(&tr.error_norms).all(|&v| v == 0.0));
    assert!(tr.controls.iter().flatten().all(|&v| v == 0.0));
}

#[test]
fn decoupled_transport_leaves_the_domain() {
    let grid = XGrid::new(65).unwrap();
    let sys = DiscreteSystem::from_plant(&PlantParams::new(Transport), &grid);
    let init = GridState::from_fn(3, 2, &grid, |_, x| bump(x), |_, x| bump(x));
    let sc = Scenario { plant: sys, init, observer: None, law: None };
    let tr = simulate(&sc, &cfg(65, 6.0)).unwrap();
    assert!(tr.e_norms[0] > 0.1);
    assert!(*tr.e_norms.last().unwrap() < 1e-8, "{}", tr.e_norms.last().unwrap());
}

#[test]
fn time_step_follows_cfl() {
    let grid = XGrid::new(129).unwrap();
    let p = build_example_nm(4).unwrap();
    let sys = DiscreteSystem::from_plant(&p, &grid);
    // fastest speed is μ₁ = 2
    let dt = cfl_dt(&sys, 0.9).unwrap();
    assert!((dt - 0.9 / 128.0 / 2.0).abs() < 1e-15);
    let sc = Scenario { plant: sys, init: GridState::zeros(4, 2, 129), observer: None, law: None };
    assert_eq!(simulate(&sc, &cfg(129, 0.5)).unwrap().dt, dt);
    let bad = SimConfig { cfl: 1.5, ..cfg(129, 0.5) };
    assert!(simulate(&sc, &bad).is_err());
}

#[test]
fn closed_loop_is_linear() {
    let n = 6;
    let grid = XGrid::new(33).unwrap();
    let p = build_example_nm(n).unwrap();
    let sys = DiscreteSystem::from_plant(&p, &grid);
    let g = gains(n, &grid);
    let law = OutputLaw::nm(&g, &p).unwrap();
    let run = |init: GridState| {
        let sc = Scenario {
            plant: sys.clone(),
            init,
            observer: Some(Observer { system: sys.clone(), gains: g.clone(), init: GridState::zeros(n, 2, 33) }),
            law: Some((law.clone(), Feedback::Observer)),
        };
        simulate(&sc, &cfg(33, 2.0)).unwrap()
    };
    let a = GridState::from_fn(n, 2, &grid, |i, x| bump(x) * (i + 1) as f64, |_, x| x * (1.0 - x));
    let b = GridState::from_fn(n, 2, &grid, |_, x| (3.0 * x).cos(), |j, x| bump(x) - j as f64 * x);
    let mut sum = a.scaled(2.5);
    sum.u.iter_mut().zip(&b.u).for_each(|(p, q)| *p += q);
    sum.v.iter_mut().zip(&b.v).for_each(|(p, q)| *p += q);
    let (ta, tb, ts) = (run(a), run(b), run(sum));
    let scale = ts.outputs.iter().flatten().fold(1.0f64, |s, v| s.max(v.abs()));
    for k in 0..ts.len() {
        for j in 0..2 {
            let lin = 2.5 * ta.outputs[k][j] + tb.outputs[k][j];
            assert!((ts.outputs[k][j] - lin).abs() <= 1e-10 * scale);
            let lin = 2.5 * ta.controls[k][j] + tb.controls[k][j];
            assert!((ts.controls[k][j] - lin).abs() <= 1e-10 * scale);
        }
    }
}

#[test]
fn observer_started_at_the_plant_state_tracks_it() {
    let n = 8;
    let grid = XGrid::new(65).unwrap();
    let p = build_example_nm(n).unwrap();
    let sys = DiscreteSystem::from_plant(&p, &grid);
    let g = gains(n, &grid);
    let law = OutputLaw::nm(&g, &p).unwrap();
    let init = GridState::from_fn(n, 2, &grid, |_, x| bump(x), |_, x| bump(x));
    let sc = Scenario {
        plant: sys.clone(),
        init: init.clone(),
        observer: Some(Observer { system: sys, gains: g, init }),
        law: Some((law, Feedback::Observer)),
    };
    let tr = simulate(&sc, &cfg(65, 5.0)).unwrap();
    assert!(tr.error_norms.iter().all(|&e| e < 1e-12), "{:?}", tr.error_norms.iter().cloned().fold(0.0, f64::max));
    for (y, yh) in tr.outputs.iter().zip(&tr.estimates) {
        assert!(y.iter().zip(yh).all(|(a, b)| (a - b).abs() < 1e-12));
    }
}

#[test]
fn continuum_discretization_at_plant_resolution_matches_the_plant() {
    let n = 7;
    let grid = XGrid::new(33).unwrap();
    let c = build_example_continuum();
    let a = DiscreteSystem::from_continuum(&c, n, &grid).unwrap();
    let b = DiscreteSystem::from_plant(&build_example_nm(n).unwrap(), &grid);
    let init = GridState::from_fn(n, 2, &grid, |_, x| bump(x), |_, x| bump(x));
    let run = |sys: DiscreteSystem| {
        let sc = Scenario { plant: sys, init: init.clone(), observer: None, law: None };
        simulate(&sc, &cfg(33, 2.0)).unwrap()
    };
    let (ta, tb) = (run(a), run(b));
    for (p, q) in ta.e_norms.iter().zip(&tb.e_norms) {
        assert!((p - q).abs() <= 1e-10 * p.max(1.0), "{p} vs {q}");
    }
}

#[test]
fn open_loop_example_is_unstable() {
    let n = 10;
    let grid = XGrid::new(128).unwrap();
    let sys = DiscreteSystem::from_plant(&build_example_nm(n).unwrap(), &grid);
    let init = GridState::from_fn(n, 2, &grid, |_, x| bump(x), |_, x| bump(x));
    let sc = Scenario { plant: sys, init, observer: None, law: None };
    let tr = match simulate(&sc, &SimConfig::default()) {
        Ok(t) => t,
        Err(hypercont::Error::Divergence { trace, .. }) => *trace,
        Err(e) => panic!("{e}"),
    };
    let v = classify(&tr, 0.2).unwrap();
    assert_eq!(v.verdict, Verdict::Unstable, "{v:?}");
}

#[test]
fn mismatched_shapes_are_rejected() {
    let grid = XGrid::new(17).unwrap();
    let sys = DiscreteSystem::from_plant(&build_example_nm(3).unwrap(), &grid);
    let sc = Scenario { plant: sys.clone(), init: GridState::zeros(4, 2, 17), observer: None, law: None };
    assert!(simulate(&sc, &cfg(17, 1.0)).is_err());
    let sc = Scenario { plant: sys, init: GridState::zeros(3, 2, 17), observer: None, law: None };
    assert!(simulate(&sc, &cfg(33, 1.0)).is_err());
}

#[test]
fn trace_csv_has_the_documented_columns() {
    let grid = XGrid::new(17).unwrap();
    let sys = DiscreteSystem::from_plant(&build_example_nm(3).unwrap(), &grid);
    let init = GridState::from_fn(3, 2, &grid, |_, x| bump(x), |_, x| bump(x));
    let sc = Scenario { plant: sys, init, observer: None, law: None };
    let tr = simulate(&sc, &cfg(17, 0.5)).unwrap();
    let mut buf = Vec::new();
    tr.write_csv(&mut buf, b';').unwrap();
    let text = String::from_utf8(buf).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(header.split(';').count(), 1 + 3 * 2 + 2, "{header}");
    assert_eq!(text.lines().count(), tr.len() + 1);
}
