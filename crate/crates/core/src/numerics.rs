//! Grids, quadrature and the lifting/sampling pair between `R^n` and step
//! functions on `(0, 1]`.
//!
//! Vectors of length `n` are identified with step functions that are constant
//! on the cells `((i-1)/n, i/n]`. [`lift`] embeds a vector, [`sample_mean`]
//! takes cell means of a function sampled at the midpoints of a finer uniform
//! partition. The pair is an isometry/retraction for the `1/n`-weighted
//! Euclidean norm, which is what makes [`e_norm`] comparable across `n`.

use crate::error::{invalid, Result};

/// Uniform nodes on `[0, 1]`, first node 0 and last node 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XGrid {
    num_points: usize,
    spacing: f64,
}

impl XGrid {
    pub fn new(num_points: usize) -> Result<Self> {
        if num_points < 3 {
            return invalid(format!("x-grid needs at least 3 points, got {num_points}"));
        }
        Ok(Self {
            num_points,
            spacing: 1.0 / (num_points - 1) as f64,
        })
    }

    pub fn len(&self) -> usize {
        self.num_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn node(&self, k: usize) -> f64 {
        if k + 1 == self.num_points {
            1.0
        } else {
            k as f64 * self.spacing
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.num_points).map(|k| self.node(k))
    }

    /// Composite trapezoid rule for samples given at the nodes.
    pub fn trapezoid(&self, samples: &[f64]) -> f64 {
        debug_assert_eq!(samples.len(), self.num_points);
        trapezoid(samples, self.spacing)
    }

    /// Trapezoid weight of node `k`.
    pub fn weight(&self, k: usize) -> f64 {
        if k == 0 || k + 1 == self.num_points {
            0.5 * self.spacing
        } else {
            self.spacing
        }
    }

    /// Linear interpolation of nodal samples at an arbitrary `x` in `[0, 1]`.
    pub fn interpolate(&self, samples: &[f64], x: f64) -> f64 {
        let s = (x.clamp(0.0, 1.0) / self.spacing).min((self.num_points - 1) as f64);
        let k = (s.floor() as usize).min(self.num_points - 2);
        let t = s - k as f64;
        samples[k] * (1.0 - t) + samples[k + 1] * t
    }
}

pub fn trapezoid(samples: &[f64], h: f64) -> f64 {
    match samples.len() {
        0 | 1 => 0.0,
        len => {
            let inner: f64 = samples[1..len - 1].iter().sum();
            h * (inner + 0.5 * (samples[0] + samples[len - 1]))
        }
    }
}

/// Node grid on `[0, 1]` used for the ensemble variable `y` of kernels.
///
/// Integrals over `y` use composite Simpson weights when the number of
/// intervals is even (exact for cubics), trapezoid otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct YGrid {
    intervals: usize,
    weights: Vec<f64>,
}

impl YGrid {
    pub fn new(intervals: usize) -> Result<Self> {
        if intervals < 2 {
            return invalid(format!("y-grid needs at least 2 intervals, got {intervals}"));
        }
        let h = 1.0 / intervals as f64;
        let weights = if intervals % 2 == 0 {
            (0..=intervals)
                .map(|k| {
                    let c = if k == 0 || k == intervals {
                        1.0
                    } else if k % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    c * h / 3.0
                })
                .collect()
        } else {
            (0..=intervals)
                .map(|k| if k == 0 || k == intervals { 0.5 * h } else { h })
                .collect()
        };
        Ok(Self { intervals, weights })
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, k: usize) -> f64 {
        k as f64 / self.intervals as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.intervals).map(|k| self.node(k))
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate(&self, samples: &[f64]) -> f64 {
        debug_assert_eq!(samples.len(), self.len());
        samples.iter().zip(&self.weights).map(|(s, w)| s * w).sum()
    }

    /// Piecewise-linear interpolation of nodal samples.
    pub fn interpolate(&self, samples: &[f64], y: f64) -> f64 {
        let s = y.clamp(0.0, 1.0) * self.intervals as f64;
        let k = (s.floor() as usize).min(self.intervals - 1);
        let t = s - k as f64;
        samples[k] * (1.0 - t) + samples[k + 1] * t
    }

    /// Cell means `n ∫_{(i-1)/n}^{i/n} g` of the piecewise-linear interpolant
    /// of `samples`, integrated exactly. Works for any `n`, aligned or not.
    pub fn cell_means(&self, samples: &[f64], n: usize) -> Result<Vec<f64>> {
        if n == 0 {
            return invalid("cell count must be positive");
        }
        let h = 1.0 / self.intervals as f64;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let a = i as f64 / n as f64;
            let b = (i + 1) as f64 / n as f64;
            let mut acc = 0.0;
            let k0 = ((a / h).floor() as usize).min(self.intervals - 1);
            let k1 = ((b / h).ceil() as usize).clamp(k0 + 1, self.intervals);
            for k in k0..k1 {
                let lo = a.max(k as f64 * h);
                let hi = b.min((k + 1) as f64 * h);
                if hi <= lo {
                    continue;
                }
                let mid = 0.5 * (lo + hi);
                // exact for a linear piece: midpoint value times length
                let t = mid / h - k as f64;
                acc += (samples[k] * (1.0 - t) + samples[k + 1] * t) * (hi - lo);
            }
            out.push(acc * n as f64);
        }
        Ok(out)
    }
}

/// Partition of `(0, 1]` into `n` cells `((i-1)/n, i/n]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct YPartition {
    n: usize,
}

impl YPartition {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return invalid("partition needs at least one cell");
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Zero-based index of the cell containing `y`. Cells are closed on the
    /// right, and `y = 0` is assigned to the first cell.
    pub fn cell_of(&self, y: f64) -> usize {
        let s = y * self.n as f64;
        let c = s.ceil() as usize;
        c.clamp(1, self.n) - 1
    }

    pub fn bounds(&self, cell: usize) -> (f64, f64) {
        (cell as f64 / self.n as f64, (cell + 1) as f64 / self.n as f64)
    }
}

/// A function on `(0, 1]` that is constant on each cell of a [`YPartition`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    values: Vec<f64>,
}

impl StepFunction {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn partition(&self) -> YPartition {
        YPartition { n: self.values.len() }
    }

    pub fn eval(&self, y: f64) -> f64 {
        self.values[self.partition().cell_of(y)]
    }

    pub fn l2_norm_sq(&self) -> f64 {
        let n = self.values.len() as f64;
        self.values.iter().map(|b| b * b).sum::<f64>() / n
    }

    /// Samples at the midpoints of `fine` uniform cells.
    pub fn midpoint_samples(&self, fine: usize) -> Vec<f64> {
        (0..fine)
            .map(|k| self.eval((k as f64 + 0.5) / fine as f64))
            .collect()
    }
}

/// Embeds `b ∈ R^n` as the step function equal to `b_i` on cell `i`.
pub fn lift(b: &[f64]) -> Result<StepFunction> {
    if b.is_empty() {
        return invalid("cannot lift an empty vector");
    }
    Ok(StepFunction { values: b.to_vec() })
}

/// Cell means over `n` cells of a function sampled at the midpoints of
/// `g.len()` uniform cells. `g.len()` must be a multiple of `n` so that every
/// coarse cell is a union of fine cells.
pub fn sample_mean(g: &[f64], n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return invalid("sample_mean needs n >= 1");
    }
    if g.is_empty() || g.len() % n != 0 {
        return invalid(format!(
            "fine sample count {} is not a positive multiple of n = {n}",
            g.len()
        ));
    }
    let per = g.len() / n;
    // A constant chunk returns its value untouched, so that F_n* F_n = I holds
    // bit for bit rather than up to rounding in the summation.
    Ok(g.chunks_exact(per)
        .map(|c| {
            if c.iter().all(|&v| v == c[0]) {
                c[0]
            } else {
                c.iter().sum::<f64>() / per as f64
            }
        })
        .collect())
}

/// `F_n* F_k`: means over `n` cells of the step function with `values` on
/// `values.len()` cells, computed exactly from the cell overlaps.
pub fn resample_means(values: &[f64], n: usize) -> Result<Vec<f64>> {
    if n == 0 || values.is_empty() {
        return invalid("resampling needs non-empty source and target partitions");
    }
    let k = values.len();
    let mut out = vec![0.0; n];
    // Work in units of 1/(n k) so overlaps are exact integers.
    for (i, o) in out.iter_mut().enumerate() {
        let lo = i * k;
        let hi = (i + 1) * k;
        let mut acc = 0.0;
        let mut only = None;
        let mut c = lo / n;
        while c * n < hi {
            let clo = (c * n).max(lo);
            let chi = ((c + 1) * n).min(hi);
            if chi > clo {
                acc += values[c] * (chi - clo) as f64;
                only = match only {
                    None => Some(values[c]),
                    Some(v) if v == values[c] => Some(v),
                    _ => Some(f64::NAN),
                };
            }
            c += 1;
        }
        *o = match only {
            Some(v) if !v.is_nan() => v,
            _ => acc / k as f64,
        };
    }
    Ok(out)
}

/// `||(u, v)||_E` with the `1/n` weighting on the `u` part.
///
/// `u` is `n` rows of `grid.len()` samples, `v` is `m` rows.
pub fn e_norm(u: &[f64], v: &[f64], n: usize, grid: &XGrid) -> Result<f64> {
    let nx = grid.len();
    if n == 0 || u.len() != n * nx || v.len() % nx != 0 {
        return invalid(format!(
            "state shape mismatch: u has {} samples for n = {n}, v has {}, Nx = {nx}",
            u.len(),
            v.len()
        ));
    }
    Ok(e_norm_sq_unchecked(u, v, n, grid).sqrt())
}

pub(crate) fn e_norm_sq_unchecked(u: &[f64], v: &[f64], n: usize, grid: &XGrid) -> f64 {
    let nx = grid.len();
    let mut acc = 0.0;
    for k in 0..nx {
        let mut s = 0.0;
        for row in u.chunks_exact(nx) {
            s += row[k] * row[k];
        }
        let mut t = 0.0;
        for row in v.chunks_exact(nx) {
            t += row[k] * row[k];
        }
        acc += grid.weight(k) * (s / n as f64 + t);
    }
    acc
}

/// `||(u, v)||_{E_c}`. `u_field` holds `ny` rows (midpoints of `ny` uniform
/// y-cells) of `grid.len()` samples each.
pub fn ec_norm(u_field: &[f64], ny: usize, v: &[f64], grid: &XGrid) -> Result<f64> {
    let nx = grid.len();
    if ny == 0 || u_field.len() != ny * nx || v.len() % nx != 0 {
        return invalid(format!(
            "field shape mismatch: {} samples for Ny = {ny}, Nx = {nx}",
            u_field.len()
        ));
    }
    // Midpoint rule in y is the (1/ny)-weighted row sum.
    Ok(e_norm_sq_unchecked(u_field, v, ny, grid).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lift_examples() {
        let c = lift(&[2.5; 7]).unwrap();
        assert!((0..50).all(|k| c.eval((k as f64 + 0.3) / 50.0) == 2.5));

        let f = lift(&[1.0, 3.0]).unwrap();
        assert_eq!(f.eval(0.25), 1.0);
        assert_eq!(f.eval(0.5), 1.0);
        assert_eq!(f.eval(0.75), 3.0);
        assert_eq!(f.l2_norm_sq(), 5.0);

        let g = lift(&[0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(g.l2_norm_sq(), 0.5);

        assert!(lift(&[]).is_err());
    }

    #[test]
    fn sample_mean_examples() {
        let b = [0.3, -1.0, 4.0];
        let back = sample_mean(&lift(&b).unwrap().midpoint_samples(300), 3).unwrap();
        assert_eq!(back, b);

        let lin: Vec<f64> = (0..200).map(|k| (k as f64 + 0.5) / 200.0).collect();
        let m = sample_mean(&lin, 2).unwrap();
        assert!((m[0] - 0.25).abs() < 1e-14 && (m[1] - 0.75).abs() < 1e-14);

        let s: Vec<f64> = (0..256)
            .map(|k| (2.0 * std::f64::consts::PI * (k as f64 + 0.5) / 256.0).sin())
            .collect();
        assert!(sample_mean(&s, 1).unwrap()[0].abs() < 1e-14);

        assert!(sample_mean(&lin, 0).is_err());
        assert!(sample_mean(&lin, 3).is_err());
    }

    #[test]
    fn e_norm_examples() {
        let grid = XGrid::new(33).unwrap();
        let nx = grid.len();
        assert_eq!(e_norm(&vec![0.0; 3 * nx], &vec![0.0; 2 * nx], 3, &grid).unwrap(), 0.0);
        for n in [1, 4, 9] {
            let e = e_norm(&vec![1.0; n * nx], &vec![0.0; nx], n, &grid).unwrap();
            assert!((e - 1.0).abs() < 1e-14);
        }
        let mut u = vec![1.0; nx];
        u.extend(vec![0.0; nx]);
        let e = e_norm(&u, &vec![1.0; nx], 2, &grid).unwrap();
        assert!((e - 1.5f64.sqrt()).abs() < 1e-14);
        assert!(e_norm(&u, &vec![1.0; nx], 3, &grid).is_err());
    }

    #[test]
    fn ec_norm_examples() {
        let grid = XGrid::new(17).unwrap();
        let nx = grid.len();
        assert_eq!(ec_norm(&vec![0.0; 8 * nx], 8, &[], &grid).unwrap(), 0.0);
        assert!((ec_norm(&vec![1.0; 8 * nx], 8, &vec![0.0; nx], &grid).unwrap() - 1.0).abs() < 1e-14);
        assert!(ec_norm(&vec![1.0; 8 * nx], 7, &[], &grid).is_err());
    }

    #[test]
    fn resample_means_matches_overlaps() {
        // three cells resampled onto two: (a + b/2) * 2/3, (b/2 + c) * 2/3
        let r = resample_means(&[3.0, 6.0, 9.0], 2).unwrap();
        assert!((r[0] - 4.0).abs() < 1e-14 && (r[1] - 8.0).abs() < 1e-14);
        let same = resample_means(&[1.0, 2.0, 5.0], 3).unwrap();
        assert_eq!(same, vec![1.0, 2.0, 5.0]);
    }

    #[test]
    fn ygrid_simpson_is_exact_for_cubics() {
        let g = YGrid::new(120).unwrap();
        let f: Vec<f64> = g.nodes().map(|y| 2.0 * y * (y + 5.0) * (y - 0.5)).collect();
        assert!((g.integrate(&f) - 1.0).abs() < 1e-13);
        let means = g.cell_means(&g.nodes().collect::<Vec<_>>(), 7).unwrap();
        for (i, m) in means.iter().enumerate() {
            assert!((m - (i as f64 + 0.5) / 7.0).abs() < 1e-13);
        }
    }

    #[test]
    fn partition_cells_are_right_closed() {
        let p = YPartition::new(4).unwrap();
        assert_eq!(p.cell_of(0.0), 0);
        assert_eq!(p.cell_of(0.25), 0);
        assert_eq!(p.cell_of(0.2500001), 1);
        assert_eq!(p.cell_of(1.0), 3);
    }

    proptest! {
        #[test]
        fn lift_is_an_isometry(b in prop::collection::vec(-10.0f64..10.0, 1..40), k in 1usize..6) {
            let n = b.len();
            let f = lift(&b).unwrap();
            let weighted = b.iter().map(|x| x * x).sum::<f64>() / n as f64;
            let fine = f.midpoint_samples(n * k);
            let l2 = fine.iter().map(|x| x * x).sum::<f64>() / fine.len() as f64;
            prop_assert!((l2 - weighted).abs() <= 1e-12 * weighted.max(1.0));
        }

        #[test]
        fn sample_mean_retracts_lift(b in prop::collection::vec(-1e3f64..1e3, 1..64), k in 1usize..5) {
            let f = lift(&b).unwrap();
            let back = sample_mean(&f.midpoint_samples(b.len() * k), b.len()).unwrap();
            for (x, y) in back.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
        }

        #[test]
        fn adjoint_pairing_for_steps(
            b in prop::collection::vec(-5.0f64..5.0, 1..20),
            g in prop::collection::vec(-5.0f64..5.0, 1..20),
        ) {
            // <lift(b), G>_{L2} = (1/n) <b, F_n* G> for a step function G
            let n = b.len();
            let fine = n * g.len();
            let gl = lift(&g).unwrap().midpoint_samples(fine);
            let bl = lift(&b).unwrap().midpoint_samples(fine);
            let lhs = bl.iter().zip(&gl).map(|(x, y)| x * y).sum::<f64>() / fine as f64;
            let means = sample_mean(&gl, n).unwrap();
            let rhs = b.iter().zip(&means).map(|(x, y)| x * y).sum::<f64>() / n as f64;
            prop_assert!((lhs - rhs).abs() < 1e-10);
        }

        #[test]
        fn norms_are_homogeneous_and_subadditive(
            seed in prop::collection::vec(-3.0f64..3.0, 4 * 9),
            other in prop::collection::vec(-3.0f64..3.0, 4 * 9),
            alpha in -4.0f64..4.0,
        ) {
            let grid = XGrid::new(9).unwrap();
            let (u1, v1) = seed.split_at(3 * 9);
            let (u2, v2) = other.split_at(3 * 9);
            let a = e_norm(u1, v1, 3, &grid).unwrap();
            let b = e_norm(u2, v2, 3, &grid).unwrap();
            let us: Vec<f64> = u1.iter().map(|x| alpha * x).collect();
            let vs: Vec<f64> = v1.iter().map(|x| alpha * x).collect();
            prop_assert!((e_norm(&us, &vs, 3, &grid).unwrap() - alpha.abs() * a).abs() < 1e-10);
            let usum: Vec<f64> = u1.iter().zip(u2).map(|(x, y)| x + y).collect();
            let vsum: Vec<f64> = v1.iter().zip(v2).map(|(x, y)| x + y).collect();
            prop_assert!(e_norm(&usum, &vsum, 3, &grid).unwrap() <= a + b + 1e-12);

            let c = ec_norm(u1, 3, v1, &grid).unwrap();
            prop_assert!((c - a).abs() < 1e-12);
        }
    }
}
