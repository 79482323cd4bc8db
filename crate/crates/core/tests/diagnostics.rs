use std::sync::Arc;

use hypercont::diagnostics::*;
use hypercont::kernels::*;
use hypercont::model::build_example_continuum;
use hypercont::numerics::{XGrid, YGrid};
use hypercont::sim::{GridState, SimTrace};
use proptest::prelude::*;

fn series(rate: f64, scale: f64) -> (Vec<f64>, Vec<f64>) {
    let t: Vec<f64> = (0..301).map(|k| k as f64 * 0.1).collect();
    let y = t.iter().map(|&s| scale * (rate * s).exp()).collect();
    (t, y)
}

#[test]
fn pure_exponentials() {
    let (t, y) = series(-0.5, 1.0);
    let v = classify_series(&t, &y, 0.2, None).unwrap();
    assert_eq!(v.verdict, Verdict::Stable);
    assert!((v.rate + 0.5).abs() < 1e-6 && v.residual < 1e-9);
    let (t, y) = series(0.2, 1.0);
    assert_eq!(classify_series(&t, &y, 0.2, None).unwrap().verdict, Verdict::Unstable);
    let (t, y) = series(0.0, 3.0);
    assert_eq!(classify_series(&t, &y, 0.2, None).unwrap().verdict, Verdict::Inconclusive);
}

#[test]
fn zero_trace_is_stable_with_infinite_rate() {
    let t: Vec<f64> = (0..100).map(|k| k as f64).collect();
    let v = classify_series(&t, &[0.0; 100], 0.2, None).unwrap();
    assert_eq!(v.verdict, Verdict::Stable);
    assert_eq!(v.rate, f64::NEG_INFINITY);
}

#[test]
fn divergence_is_unstable() {
    let (t, y) = series(-0.5, 1.0);
    let v = classify_series(&t, &y, 0.2, Some(4.0)).unwrap();
    assert_eq!(v.verdict, Verdict::Unstable);
    assert!(v.diverged && v.rate == f64::INFINITY);
}

#[test]
fn short_or_malformed_traces_are_errors() {
    let (t, y) = series(-0.5, 1.0);
    assert!(classify_series(&t[..60], &y[..60], 0.2, None).is_err());
    assert!(classify_series(&t, &y[..10], 0.2, None).is_err());
    assert!(classify_series(&t, &y, 1.0, None).is_err());
    assert!(classify(&SimTrace::default(), 0.2).is_err());
}

#[test]
fn transient_overshoot_does_not_mask_decay() {
    let (t, mut y) = series(-0.3, 1.0);
    // a burst before burn-in ten times the initial value
    for (s, v) in t.iter().zip(y.iter_mut()) {
        if *s < 5.0 {
            *v *= 1.0 + 20.0 * (s / 5.0);
        }
    }
    assert_eq!(classify_series(&t, &y, 0.2, None).unwrap().verdict, Verdict::Stable);
}

proptest! {
    #[test]
    fn classification_is_scale_invariant(rate in -1.0f64..1.0, scale in 1e-6f64..1e6) {
        let (t, y1) = series(rate, 1.0);
        let (_, ys) = series(rate, scale);
        let a = classify_series(&t, &y1, 0.2, None).unwrap();
        let b = classify_series(&t, &ys, 0.2, None).unwrap();
        prop_assert_eq!(a.verdict, b.verdict);
        prop_assert!((a.rate - b.rate).abs() < 1e-9);
    }

    #[test]
    fn running_minimum_check(values in prop::collection::vec(0.1f64..10.0, 2..40)) {
        let t: Vec<f64> = (0..values.len()).map(|k| k as f64).collect();
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        prop_assert!(non_increasing_after(&t, &sorted, 0.0, 0.0));
        let rises = values.windows(2).any(|w| w[1] > 1.02 * w[0]);
        if rises {
            prop_assert!(!non_increasing_after(&t, &values, 0.0, 0.02));
        }
    }
}

#[test]
fn lyapunov_without_kernels_is_a_weighted_norm() {
    let c = build_example_continuum();
    let mesh = Arc::new(build_trimesh(2, |j, x| c.mu(j, x), 17).unwrap());
    let zero = KernelField::zeros(KernelKind::Observer, mesh, YGrid::new(120).unwrap());
    let w = LyapunovWeights {
        delta: 3.0,
        threshold: 3.0,
        b: vec![0.25, 0.5],
        m_b: 0.5,
        bound: 1.0,
        feasible: true,
        raised: Vec::new(),
    };
    let grid = XGrid::new(21).unwrap();
    let cells = 4;
    let eval = LyapunovEvaluator::new(&zero, &w, &c, cells, &grid).unwrap();
    let e = GridState::from_fn(cells, 2, &grid, |i, x| (i as f64 + 1.0) * x, |j, x| (1.0 - x) * (j + 1) as f64);
    assert_eq!(eval.target_state(&e).unwrap().u, e.u);
    // λ ≡ 1, μ = (2, 1), u-row sum of squares (1 + 4 + 9 + 16) x², v rows (1 − x)², 4(1 − x)²
    let alpha: Vec<f64> = grid.nodes().map(|x| (-3.0 * x).exp() * 30.0 * x * x / cells as f64).collect();
    let beta: Vec<f64> = grid
        .nodes()
        .map(|x| (3.0 * x).exp() * (0.25 * (1.0 - x).powi(2) / 2.0 + 0.5 * 4.0 * (1.0 - x).powi(2)))
        .collect();
    let expect = grid.trapezoid(&alpha) + grid.trapezoid(&beta);
    let v = eval.value(&e).unwrap();
    assert!((v - expect).abs() <= 1e-12 * expect, "{v} vs {expect}");
    assert!(eval.value(&GridState::zeros(3, 2, 21)).is_err());
}

#[test]
fn lyapunov_inversion_round_trips() {
    let c = build_example_continuum();
    let mesh = Arc::new(build_trimesh(2, |j, x| c.mu(j, x), 33).unwrap());
    let obs = closed_form_kernels("example-observer", mesh, YGrid::new(120).unwrap()).unwrap();
    let w = LyapunovWeights { delta: 3.0, threshold: 3.0, b: vec![1.0, 1.0], m_b: 1.0, bound: 1.0, feasible: true, raised: Vec::new() };
    let grid = XGrid::new(33).unwrap();
    let eval = LyapunovEvaluator::new(&obs, &w, &c, 6, &grid).unwrap();
    let e = GridState::from_fn(6, 2, &grid, |i, x| (x * i as f64).sin(), |j, x| x.powi(j as i32 + 1));
    let t = eval.target_state(&e).unwrap();
    // ṽ_j = β̃_j + Σ_i ∫_0^x N_{j,i}(x, ξ) β̃_i(ξ) dξ; with N_{1,·} = 0 the first row is unchanged
    assert!(t.v[..33].iter().zip(&e.v[..33]).all(|(a, b)| (a - b).abs() < 1e-12));
    assert!(eval.value(&e).unwrap() > 0.0);
}

fn trace(rate: f64, err_rate: f64) -> SimTrace {
    let (t, y) = series(rate, 1.0);
    let (_, e) = series(err_rate, 1.0);
    SimTrace {
        m: 1,
        dt: 0.1,
        controls: y.iter().map(|v| vec![*v]).collect(),
        outputs: y.iter().map(|v| vec![*v]).collect(),
        estimates: y.iter().map(|v| vec![*v]).collect(),
        times: t,
        e_norms: y,
        error_norms: e,
        error_states: Vec::new(),
        diverged_at: None,
    }
}

#[test]
fn separation_of_identical_traces() {
    let a = trace(-0.4, -2.0);
    let rep = compare_separation(&a, &a);
    assert!(rep.comparable);
    assert!((rep.ratio - 1.0).abs() < 1e-12);
    assert_eq!(rep.control_sup_diff, 0.0);
    assert!((rep.cutoff.unwrap() - 2.3).abs() < 0.11);
}

#[test]
fn separation_detects_slower_output_feedback() {
    let rep = compare_separation(&trace(-0.4, -2.0), &trace(-0.1, -2.0));
    assert!(rep.comparable && (rep.ratio - 0.25).abs() < 1e-9);
    let rep = compare_separation(&trace(-0.4, -2.0), &trace(-0.1, 0.0));
    assert!(!rep.comparable && rep.cutoff.is_none());
}

#[test]
fn verdict_table_round_trip() {
    let rows = vec![VerdictRow { scenario: "thm3".into(), n: 8, verdict: Verdict::Stable, rate: -0.4, residual: 0.01 }];
    let mut buf = Vec::new();
    write_verdicts(&rows, &mut buf, b',').unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "scenario,n,verdict,rate,residual");
    assert!(text.lines().nth(1).unwrap().starts_with("thm3,8,stable,"));
}
