//! Triangular mesh on `T = {0 ≤ ξ ≤ x ≤ 1}` and its segmentation into
//! continuity regions.
//!
//! Every kernel component belongs to one characteristic family: `K_i` and
//! the row `L_{i,·}` to `Control(i)`, `M_j` and the column `N_{·,j}` to
//! `Observer(j)`. A family `f` with index `j` has regions `j, j+1, …, m-1`
//! (zero-based `p`), separated by the characteristic curves through `(0,0)`
//! (control) or `(1,1)` (observer). A node on a boundary belongs to the
//! region with the larger `p`.

use smallvec::SmallVec;

use super::characteristics::TravelTime;
use crate::error::{invalid, Result};

const TIE_TOL: f64 = 1e-10;
const SNAP_TOL: f64 = 1e-9;
const ORDER_SAMPLES: usize = 201;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Control(usize),
    Observer(usize),
}

impl Family {
    pub fn index(self) -> usize {
        match self {
            Family::Control(i) | Family::Observer(i) => i,
        }
    }
}

/// Interpolation weights on mesh nodes.
pub type Stencil = SmallVec<[(usize, f64); 4]>;

#[derive(Debug, Clone)]
pub struct TriMesh {
    resolution: usize,
    h: f64,
    m: usize,
    travel: Vec<TravelTime>,
    /// `regions[family slot][node]`, zero-based `p`.
    regions: Vec<Vec<u8>>,
    /// `columns[family slot][a][r]` = inclusive `b`-range of region `j + r`
    /// on column `a`, or `None`.
    columns: Vec<Vec<Vec<Option<(usize, usize)>>>>,
}

/// Builds the mesh for speeds `mu(j, x)`, `j < m`, with `resolution` nodes
/// per edge.
pub fn build_trimesh(m: usize, mu: impl Fn(usize, f64) -> f64, resolution: usize) -> Result<TriMesh> {
    if m == 0 {
        return invalid("mesh needs at least one leftward speed");
    }
    if resolution < 3 {
        return invalid(format!("mesh resolution must be at least 3, got {resolution}"));
    }
    for j in 0..m.saturating_sub(1) {
        let xs = (0..ORDER_SAMPLES).map(|k| k as f64 / (ORDER_SAMPLES - 1) as f64);
        let lo = xs.clone().map(|x| mu(j, x)).fold(f64::INFINITY, f64::min);
        let hi = xs.map(|x| mu(j + 1, x)).fold(f64::NEG_INFINITY, f64::max);
        if !(lo > hi) {
            return invalid(format!(
                "speeds must be strictly ordered: min mu_{} = {lo} <= max mu_{} = {hi}",
                j + 1,
                j + 2
            ));
        }
    }
    let travel = (0..m)
        .map(|j| TravelTime::new(|x| mu(j, x)))
        .collect::<Result<Vec<_>>>()?;
    let mut mesh = TriMesh {
        resolution,
        h: 1.0 / (resolution - 1) as f64,
        m,
        travel,
        regions: Vec::new(),
        columns: Vec::new(),
    };
    for slot in 0..2 * m {
        let f = mesh.family_of_slot(slot);
        let labels: Vec<u8> = (0..mesh.len())
            .map(|k| {
                let (x, xi) = mesh.coords(k);
                mesh.region_of(f, x, xi)
            })
            .collect();
        let mut cols = Vec::with_capacity(resolution);
        for a in 0..resolution {
            let mut ranges = vec![None; m - f.index()];
            for b in 0..=a {
                let r = (labels[node_index(a, b)] as usize) - f.index();
                ranges[r] = Some(match ranges[r] {
                    None => (b, b),
                    Some((lo, _)) => (lo, b),
                });
            }
            cols.push(ranges);
        }
        mesh.regions.push(labels);
        mesh.columns.push(cols);
    }
    Ok(mesh)
}

#[inline]
pub fn node_index(a: usize, b: usize) -> usize {
    debug_assert!(b <= a);
    a * (a + 1) / 2 + b
}

impl TriMesh {
    fn slot(&self, f: Family) -> usize {
        match f {
            Family::Control(i) => i,
            Family::Observer(j) => self.m + j,
        }
    }

    fn family_of_slot(&self, slot: usize) -> Family {
        if slot < self.m {
            Family::Control(slot)
        } else {
            Family::Observer(slot - self.m)
        }
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.resolution * (self.resolution + 1) / 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn travel_time(&self, j: usize) -> &TravelTime {
        &self.travel[j]
    }

    pub fn x(&self, a: usize) -> f64 {
        if a + 1 == self.resolution {
            1.0
        } else {
            a as f64 * self.h
        }
    }

    /// Column and row of node `k`.
    pub fn ab(&self, k: usize) -> (usize, usize) {
        // a(a+1)/2 <= k < (a+1)(a+2)/2
        let mut a = ((((8 * k + 1) as f64).sqrt() - 1.0) / 2.0) as usize;
        while a * (a + 1) / 2 > k {
            a -= 1;
        }
        while (a + 1) * (a + 2) / 2 <= k {
            a += 1;
        }
        (a, k - a * (a + 1) / 2)
    }

    pub fn coords(&self, k: usize) -> (f64, f64) {
        let (a, b) = self.ab(k);
        (self.x(a), self.x(b))
    }

    pub fn region(&self, f: Family, k: usize) -> u8 {
        self.regions[self.slot(f)][k]
    }

    pub fn region_ids(&self, f: Family) -> &[u8] {
        &self.regions[self.slot(f)]
    }

    /// Region label of an arbitrary point of `T`.
    pub fn region_of(&self, f: Family, x: f64, xi: f64) -> u8 {
        let j = f.index();
        let count = match f {
            Family::Control(i) => {
                let s = self.travel[i].eval(x);
                (i + 1..self.m)
                    .filter(|&p| self.travel[p].eval(xi) <= s + TIE_TOL)
                    .count()
            }
            Family::Observer(j) => {
                let tj = &self.travel[j];
                let s = tj.total() - tj.eval(xi);
                (j + 1..self.m)
                    .filter(|&p| {
                        let tp = &self.travel[p];
                        tp.total() - tp.eval(x) <= s + TIE_TOL
                    })
                    .count()
            }
        };
        (j + count) as u8
    }

    /// `ξ` on the boundary between regions `p-1` and `p` of family `f` at
    /// abscissa `x`, if the curve reaches that abscissa. `p` ranges over
    /// `f.index()+1 .. m`.
    pub fn boundary_xi(&self, f: Family, p: usize, x: f64) -> Option<f64> {
        debug_assert!(p > f.index() && p < self.m);
        match f {
            Family::Control(i) => Some(self.travel[p].inverse(self.travel[i].eval(x))),
            Family::Observer(j) => {
                let (tj, tp) = (&self.travel[j], &self.travel[p]);
                let s = tj.total() - tp.total() + tp.eval(x);
                (s >= 0.0).then(|| tj.inverse(s))
            }
        }
    }

    /// Inclusive `b`-range of region `p` on column `a`.
    pub fn column_range(&self, f: Family, a: usize, p: u8) -> Option<(usize, usize)> {
        let r = (p as usize).checked_sub(f.index())?;
        self.columns[self.slot(f)][a].get(r).copied().flatten()
    }

    /// Linear interpolation weights at `(x, ξ)` using only nodes of region
    /// `p`, extrapolating when the point lies outside that region's nodes.
    pub fn stencil(&self, f: Family, p: u8, x: f64, xi: f64) -> Stencil {
        self.stencil_within(f, p, x, xi, 0, self.resolution - 1)
    }

    /// As [`stencil`](Self::stencil), but a fallback fit only reads columns
    /// `a_min..=a_max`.
    pub fn stencil_within(
        &self,
        f: Family,
        p: u8,
        x: f64,
        xi: f64,
        a_min: usize,
        a_max: usize,
    ) -> Stencil {
        let n = self.resolution;
        let s = snap(x.clamp(0.0, 1.0) / self.h);
        let t = snap(xi.clamp(0.0, 1.0) / self.h).min(s);
        let on_column = s.fract() == 0.0 || s >= (n - 1) as f64;
        if on_column {
            let a = (s.round() as usize).min(n - 1);
            if let Some(st) = self.column_stencil(f, p, a, t) {
                return st;
            }
        } else {
            let a0 = (s.floor() as usize).min(n - 2);
            let b0 = (t.floor() as usize).min(a0);
            let (dp, dq) = (s - a0 as f64, t - b0 as f64);
            let mut st = Stencil::new();
            if dq <= dp || b0 == a0 {
                push(&mut st, node_index(a0, b0), 1.0 - dp);
                push(&mut st, node_index(a0 + 1, b0), dp - dq.min(dp));
                push(&mut st, node_index(a0 + 1, b0 + 1), dq.min(dp));
            } else {
                push(&mut st, node_index(a0, b0), 1.0 - dq);
                push(&mut st, node_index(a0 + 1, b0 + 1), dp);
                push(&mut st, node_index(a0, b0 + 1), dq - dp);
            }
            let labels = &self.regions[self.slot(f)];
            if st.iter().all(|&(k, _)| labels[k] == p) {
                return st;
            }
        }
        self.window_fit(f, p, s, t, a_min, a_max)
    }

    /// Interpolation along column `a` inside region `p`, or `None` when the
    /// region has a single node there that does not coincide with `ξ`.
    pub fn column_stencil_at(&self, f: Family, p: u8, a: usize, xi: f64) -> Option<Stencil> {
        let t = snap(xi.clamp(0.0, 1.0) / self.h).min(a as f64);
        self.column_stencil(f, p, a, t)
    }

    fn column_stencil(&self, f: Family, p: u8, a: usize, t: f64) -> Option<Stencil> {
        let (lo, hi) = self.column_range(f, a, p)?;
        let mut st = Stencil::new();
        if lo == hi {
            if t == lo as f64 {
                st.push((node_index(a, lo), 1.0));
                return Some(st);
            }
            return None;
        }
        let b1 = (t.floor() as usize).clamp(lo, hi - 1);
        let w = t - b1 as f64;
        push(&mut st, node_index(a, b1), 1.0 - w);
        push(&mut st, node_index(a, b1 + 1), w);
        if st.is_empty() {
            st.push((node_index(a, b1), 1.0));
        }
        Some(st)
    }

    /// Least-squares plane through nearby nodes of region `p`.
    fn window_fit(&self, f: Family, p: u8, s: f64, t: f64, a_min: usize, a_max: usize) -> Stencil {
        let n = self.resolution;
        let labels = &self.regions[self.slot(f)];
        let a0 = (s.floor() as usize).min(n - 1);
        let b0 = (t.floor() as usize).min(a0);
        for radius in 1..n {
            let mut pts: SmallVec<[(usize, f64, f64); 32]> = SmallVec::new();
            let a_lo = a0.saturating_sub(radius).max(a_min);
            let a_hi = (a0 + 1 + radius).min(n - 1).min(a_max);
            for a in a_lo..=a_hi {
                let b_lo = b0.saturating_sub(radius);
                let b_hi = (b0 + 1 + radius).min(a);
                for b in b_lo..=b_hi {
                    let k = node_index(a, b);
                    if labels[k] == p {
                        pts.push((k, a as f64 - s, b as f64 - t));
                    }
                }
            }
            if pts.is_empty() {
                continue;
            }
            // normal equations for c0 + c1 dx + c2 dy
            let mut g = [[0.0f64; 3]; 3];
            for &(_, dx, dy) in &pts {
                let v = [1.0, dx, dy];
                for r in 0..3 {
                    for c in 0..3 {
                        g[r][c] += v[r] * v[c];
                    }
                }
            }
            if let Some(inv) = invert3(&g) {
                let mut st = Stencil::new();
                for &(k, dx, dy) in &pts {
                    let w = inv[0][0] + inv[0][1] * dx + inv[0][2] * dy;
                    push(&mut st, k, w);
                }
                return st;
            }
            if radius >= 4 {
                // collinear: fit along the line through the points
                let (mut sx, mut sy) = (0.0, 0.0);
                for &(_, dx, dy) in &pts {
                    sx += dx;
                    sy += dy;
                }
                let np = pts.len() as f64;
                let (mx, my) = (sx / np, sy / np);
                let (mut sdd, mut dir) = (0.0, (0.0, 0.0));
                for &(_, dx, dy) in &pts {
                    dir.0 += (dx - mx).abs();
                    dir.1 += (dy - my).abs();
                }
                let norm = (dir.0 * dir.0 + dir.1 * dir.1).sqrt();
                let mut st = Stencil::new();
                if norm == 0.0 {
                    for &(k, _, _) in &pts {
                        push(&mut st, k, 1.0 / np);
                    }
                    return st;
                }
                let (ux, uy) = (dir.0 / norm, dir.1 / norm);
                let proj: SmallVec<[f64; 32]> =
                    pts.iter().map(|&(_, dx, dy)| (dx - mx) * ux + (dy - my) * uy).collect();
                for &d in &proj {
                    sdd += d * d;
                }
                let d0 = -(mx * ux + my * uy);
                for (i, &(k, _, _)) in pts.iter().enumerate() {
                    let w = 1.0 / np + if sdd > 0.0 { d0 * proj[i] / sdd } else { 0.0 };
                    push(&mut st, k, w);
                }
                return st;
            }
        }
        // region without nodes in reach: nearest node
        let mut st = Stencil::new();
        let a = a0.clamp(a_min, a_max);
        st.push((node_index(a, b0.min(a)), 1.0));
        st
    }
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP_TOL {
        r
    } else {
        v
    }
}

fn push(st: &mut Stencil, k: usize, w: f64) {
    if w.abs() > 1e-14 {
        st.push((k, w));
    }
}

fn invert3(g: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = g[0][0] * (g[1][1] * g[2][2] - g[1][2] * g[2][1])
        - g[0][1] * (g[1][0] * g[2][2] - g[1][2] * g[2][0])
        + g[0][2] * (g[1][0] * g[2][1] - g[1][1] * g[2][0]);
    let scale = g[0][0].abs().max(1.0).powi(3);
    if det.abs() < 1e-10 * scale {
        return None;
    }
    let c = |r: usize, c: usize| {
        let (r1, r2) = ((r + 1) % 3, (r + 2) % 3);
        let (c1, c2) = ((c + 1) % 3, (c + 2) % 3);
        g[r1][c1] * g[r2][c2] - g[r1][c2] * g[r2][c1]
    };
    let mut inv = [[0.0; 3]; 3];
    for r in 0..3 {
        for col in 0..3 {
            inv[r][col] = c(col, r) / det;
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example(res: usize) -> TriMesh {
        build_trimesh(2, |j, _| [2.0, 1.0][j], res).unwrap()
    }

    #[test]
    fn indexing_roundtrip() {
        let mesh = example(17);
        for a in 0..17 {
            for b in 0..=a {
                assert_eq!(mesh.ab(node_index(a, b)), (a, b));
            }
        }
        assert_eq!(mesh.len(), 17 * 18 / 2);
    }

    #[test]
    fn single_family_has_one_region() {
        let mesh = build_trimesh(1, |_, x| 1.0 + x, 33).unwrap();
        assert!(mesh.region_ids(Family::Control(0)).iter().all(|&r| r == 0));
        assert!(mesh.region_ids(Family::Observer(0)).iter().all(|&r| r == 0));
    }

    #[test]
    fn example_regions() {
        let mesh = example(65);
        for k in 0..mesh.len() {
            let (x, xi) = mesh.coords(k);
            let obs = mesh.region(Family::Observer(0), k);
            assert_eq!(obs, if xi <= 2.0 * x - 1.0 + 1e-12 { 1 } else { 0 }, "{x} {xi}");
            let ctl = mesh.region(Family::Control(0), k);
            assert_eq!(ctl, if xi <= x / 2.0 + 1e-12 { 1 } else { 0 });
            assert_eq!(mesh.region(Family::Observer(1), k), 1);
            assert_eq!(mesh.region(Family::Control(1), k), 1);
        }
        let b = mesh.boundary_xi(Family::Observer(0), 1, 0.8).unwrap();
        assert!((b - 0.6).abs() < 1e-10);
        assert!(mesh.boundary_xi(Family::Observer(0), 1, 0.3).is_none());
        let c = mesh.boundary_xi(Family::Control(0), 1, 0.8).unwrap();
        assert!((c - 0.4).abs() < 1e-10);
    }

    #[test]
    fn rejects_unordered_speeds() {
        assert!(build_trimesh(2, |j, _| [1.0, 2.0][j], 9).is_err());
        assert!(build_trimesh(2, |_, _| 1.0, 9).is_err());
    }

    fn apply(st: &Stencil, vals: &[f64]) -> f64 {
        st.iter().map(|&(k, w)| w * vals[k]).sum()
    }

    #[test]
    fn stencils_reproduce_linear_functions() {
        let mesh = example(33);
        let f = |x: f64, xi: f64| 0.3 + 2.0 * x - 1.5 * xi;
        let vals: Vec<f64> = (0..mesh.len())
            .map(|k| {
                let (x, xi) = mesh.coords(k);
                f(x, xi)
            })
            .collect();
        let fam = Family::Observer(0);
        for &(x, xi) in &[(0.5, 0.2), (0.8, 0.59), (0.8, 0.61), (0.71, 0.33), (1.0, 0.97), (0.75, 0.0), (0.53, 0.07)] {
            for p in [0u8, 1] {
                let st = mesh.stencil(fam, p, x, xi);
                assert!((apply(&st, &vals) - f(x, xi)).abs() < 1e-10, "{x} {xi} p={p}");
                let labels = mesh.region_ids(fam);
                assert!(st.iter().all(|&(k, _)| labels[k] == p));
            }
        }
    }
}
