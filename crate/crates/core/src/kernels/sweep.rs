//! Column-by-column transport along characteristics.
//!
//! Solves `A ∂ₓF + B ∂_ξ F = C F + g` on the mesh for a known source `g`,
//! where `A > 0`. Characteristics are parametrized by `x`; each node value is
//! obtained from the adjacent column (or from the boundary edge where the
//! characteristic enters) by trapezoidal integration of `dF/dx = (CF + g)/A`,
//! split at region boundaries so that piecewise smooth sources are never
//! integrated across a jump.

use smallvec::SmallVec;

use super::field::Edge;
use super::mesh::{node_index, Family, Stencil, TriMesh};

const BISECT_STEPS: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Direction {
    /// Inflow from smaller `x`; columns are processed left to right.
    Backward,
    /// Inflow from `x = 1` or the diagonal; columns right to left.
    Forward,
}

pub(crate) type Coef<'a> = dyn Fn(f64, f64, usize) -> (f64, f64, f64) + Sync + 'a;
pub(crate) type DiagBc<'a> = dyn Fn(f64, usize) -> f64 + Sync + 'a;

pub(crate) struct Transport<'a> {
    pub mesh: &'a TriMesh,
    pub family: Family,
    pub dir: Direction,
    pub ny: usize,
    /// `(A, B, C)` at `(x, ξ)` for y-index `iy`.
    pub coef: &'a Coef<'a>,
    /// Coefficients do not depend on `iy`, so one plan serves every `y`.
    pub uniform: bool,
    pub diag: Option<&'a DiagBc<'a>>,
    pub has_bottom: bool,
    pub has_right: bool,
}

#[derive(Debug, Clone)]
pub(super) enum Start {
    Column(Stencil),
    Edge(Edge, f64),
}

#[derive(Debug, Clone)]
pub(super) struct Piece {
    dx: f64,
    a0: f64,
    c0: f64,
    a1: f64,
    c1: f64,
    g0: Stencil,
    g1: Stencil,
}

#[derive(Debug, Clone)]
pub(crate) enum Plan {
    Fixed(Edge),
    Trace {
        start: Start,
        pieces: SmallVec<[Piece; 2]>,
    },
}

/// Boundary data for one sweep: nodal values on the bottom edge
/// (`[a * ny + iy]`) and on the right edge (`[b * ny + iy]`).
pub(crate) struct EdgeData<'a> {
    pub bottom: Option<&'a [f64]>,
    pub right: Option<&'a [f64]>,
}

impl<'a> Transport<'a> {
    /// Boundary conditions applicable at node `(a, b)`, preferred one first.
    pub fn fixed_edges(&self, a: usize, b: usize) -> SmallVec<[Edge; 2]> {
        let n = self.mesh.resolution();
        let mut e = SmallVec::new();
        let bottom = b == 0 && self.has_bottom;
        let right = a + 1 == n && self.has_right;
        let diag = a == b && self.diag.is_some();
        match self.dir {
            Direction::Backward => {
                if bottom {
                    e.push(Edge::Bottom);
                }
                if diag {
                    e.push(Edge::Diagonal);
                }
                if right {
                    e.push(Edge::Right);
                }
            }
            Direction::Forward => {
                if right {
                    e.push(Edge::Right);
                }
                if diag {
                    e.push(Edge::Diagonal);
                }
                if bottom {
                    e.push(Edge::Bottom);
                }
            }
        }
        e
    }

    pub fn plan(&self, a: usize, b: usize, iy: usize) -> Plan {
        if let Some(&e) = self.fixed_edges(a, b).first() {
            return Plan::Fixed(e);
        }
        let mesh = self.mesh;
        let n = mesh.resolution();
        let slope = |x: f64, xi: f64| {
            let (ca, cb, _) = (self.coef)(x, xi, iy);
            cb / ca
        };
        match self.dir {
            Direction::Backward => assert!(a > 0, "backward transport needs a boundary condition at the origin"),
            Direction::Forward => assert!(a + 1 < n, "forward transport needs a boundary condition at x = 1"),
        }

        // Walk back along the characteristic one column at a time until the
        // foot has a column stencil inside its region or meets an edge.
        let mut path: SmallVec<[(f64, f64); 4]> = SmallVec::new();
        path.push((mesh.x(a), mesh.x(b)));
        let mut ac = a;
        let start = loop {
            let (x0, xi0) = *path.last().unwrap();
            let ap = match self.dir {
                Direction::Backward => ac - 1,
                Direction::Forward => ac + 1,
            };
            let xp = mesh.x(ap);
            let dxp = xp - x0;
            let s0 = slope(x0, xi0);
            let pred = (xi0 + dxp * s0).clamp(0.0, xp);
            let s = 0.5 * (s0 + slope(xp, pred));
            let mut xi_f = xi0 + dxp * s;
            if xi_f < 0.0 {
                if self.has_bottom && s != 0.0 {
                    let xe = x0 - xi0 / s;
                    path.push((xe, 0.0));
                    break Start::Edge(Edge::Bottom, xe);
                }
                xi_f = 0.0;
            } else if xi_f > xp {
                if self.diag.is_some() && s != 1.0 {
                    let xe = ((xi0 - s * x0) / (1.0 - s)).clamp(x0.min(xp), x0.max(xp));
                    path.push((xe, xe));
                    break Start::Edge(Edge::Diagonal, xe);
                }
                xi_f = xp;
            }
            path.push((xp, xi_f));
            let p = mesh.region_of(self.family, xp, xi_f);
            if let Some(st) = mesh.column_stencil_at(self.family, p, ap, xi_f) {
                break Start::Column(st);
            }
            let more = match self.dir {
                Direction::Backward => ap > 0,
                Direction::Forward => ap + 1 < n,
            };
            if !more {
                let (a_min, a_max) = match self.dir {
                    Direction::Backward => (0, a - 1),
                    Direction::Forward => (a + 1, n - 1),
                };
                break Start::Column(mesh.stencil_within(self.family, p, xp, xi_f, a_min, a_max));
            }
            ac = ap;
        };

        let mut pieces = SmallVec::new();
        let p_node = mesh.region(self.family, node_index(a, b));
        for seg in (1..path.len()).rev() {
            let (foot, end) = (path[seg], path[seg - 1]);
            let p_end = if seg == 1 { p_node } else { mesh.region_of(self.family, end.0, end.1) };
            self.push_pieces(&mut pieces, foot, end, p_end, iy, (seg == 1).then_some(node_index(a, b)));
        }
        Plan::Trace { start, pieces }
    }

    /// Trapezoid pieces along the segment `foot → end`, split where the
    /// region changes. `node` replaces the source stencil at `end`.
    fn push_pieces(
        &self,
        pieces: &mut SmallVec<[Piece; 2]>,
        foot: (f64, f64),
        end: (f64, f64),
        p_end: u8,
        iy: usize,
        node: Option<usize>,
    ) {
        let mesh = self.mesh;
        let (x0, xi0) = end;
        let region = |t: f64| {
            let x = foot.0 + t * (x0 - foot.0);
            let xi = foot.1 + t * (xi0 - foot.1);
            mesh.region_of(self.family, x, xi)
        };
        let mut cuts: SmallVec<[(f64, u8); 3]> = SmallVec::new();
        let mut t_cur = 0.0;
        let mut p_cur = region(0.0);
        while p_cur != p_end {
            let (mut lo, mut hi) = (t_cur, 1.0);
            for _ in 0..BISECT_STEPS {
                let mid = 0.5 * (lo + hi);
                if region(mid) == p_cur {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            cuts.push((t_cur, p_cur));
            t_cur = hi;
            let next = region(hi);
            if next == p_cur {
                break;
            }
            p_cur = next;
        }
        cuts.push((t_cur, p_end));

        let point = |t: f64| (foot.0 + t * (x0 - foot.0), foot.1 + t * (xi0 - foot.1));
        for (q, &(t0, p)) in cuts.iter().enumerate() {
            let t1 = cuts.get(q + 1).map_or(1.0, |c| c.0);
            let (pa, pb) = (point(t0), point(t1));
            let (a0, _, c0) = (self.coef)(pa.0, pa.1, iy);
            let (a1, _, c1) = (self.coef)(pb.0, pb.1, iy);
            let g1 = match node {
                Some(k) if q + 1 == cuts.len() => {
                    let mut st = Stencil::new();
                    st.push((k, 1.0));
                    st
                }
                _ => mesh.stencil(self.family, p, pb.0, pb.1),
            };
            pieces.push(Piece {
                dx: pb.0 - pa.0,
                a0,
                c0,
                a1,
                c1,
                g0: mesh.stencil(self.family, p, pa.0, pa.1),
                g1,
            });
        }
    }

    /// Every node's plan for `iy = 0`, for use when `uniform` holds.
    pub fn plans(&self) -> Vec<Plan> {
        let n = self.mesh.resolution();
        let mut out = Vec::with_capacity(self.mesh.len());
        for a in 0..n {
            for b in 0..=a {
                out.push(self.plan(a, b, 0));
            }
        }
        out
    }

    fn edge_value(&self, e: Edge, pos: f64, iy: usize, edges: &EdgeData<'_>) -> f64 {
        let ny = self.ny;
        let lerp = |data: &[f64], s: f64| {
            let n = self.mesh.resolution();
            let u = (s / self.mesh.spacing()).clamp(0.0, (n - 1) as f64);
            let k = (u.floor() as usize).min(n - 2);
            let w = u - k as f64;
            data[k * ny + iy] * (1.0 - w) + data[(k + 1) * ny + iy] * w
        };
        match e {
            Edge::Bottom => lerp(edges.bottom.expect("bottom data"), pos),
            Edge::Right => lerp(edges.right.expect("right data"), pos),
            Edge::Diagonal => (self.diag.expect("diagonal data"))(pos, iy),
        }
    }

    fn apply(&self, plan: &Plan, a: usize, b: usize, iy: usize, g: &[f64], f: &[f64], edges: &EdgeData<'_>) -> f64 {
        let ny = self.ny;
        match plan {
            Plan::Fixed(e) => {
                let pos = match e {
                    Edge::Bottom | Edge::Diagonal => self.mesh.x(a),
                    Edge::Right => self.mesh.x(b),
                };
                self.edge_value(*e, pos, iy, edges)
            }
            Plan::Trace { start, pieces } => {
                let mut v = match start {
                    Start::Column(st) => st.iter().map(|&(k, w)| w * f[k * ny + iy]).sum(),
                    Start::Edge(e, pos) => self.edge_value(*e, *pos, iy, edges),
                };
                for p in pieces {
                    let g0: f64 = p.g0.iter().map(|&(k, w)| w * g[k * ny + iy]).sum();
                    let g1: f64 = p.g1.iter().map(|&(k, w)| w * g[k * ny + iy]).sum();
                    let h = 0.5 * p.dx;
                    v = (v * (1.0 + h * p.c0 / p.a0) + h * (g0 / p.a0 + g1 / p.a1))
                        / (1.0 - h * p.c1 / p.a1);
                }
                v
            }
        }
    }

    /// Overwrites `f` with the transport solution for source `g`.
    pub fn solve(&self, plans: Option<&[Plan]>, g: &[f64], f: &mut [f64], edges: &EdgeData<'_>) {
        let n = self.mesh.resolution();
        let ny = self.ny;
        let cols: Box<dyn Iterator<Item = usize>> = match self.dir {
            Direction::Backward => Box::new(0..n),
            Direction::Forward => Box::new((0..n).rev()),
        };
        for a in cols {
            for b in 0..=a {
                let k = node_index(a, b);
                match plans {
                    Some(plans) => {
                        let plan = &plans[k];
                        for iy in 0..ny {
                            f[k * ny + iy] = self.apply(plan, a, b, iy, g, f, edges);
                        }
                    }
                    None => {
                        for iy in 0..ny {
                            let plan = self.plan(a, b, iy);
                            f[k * ny + iy] = self.apply(&plan, a, b, iy, g, f, edges);
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::mesh::build_trimesh;

    fn errors(n: usize) -> (f64, f64) {
        let mesh = build_trimesh(2, |j, _| [2.0, 1.0][j], n).unwrap();
        let fam = Family::Control(0);
        let exact_k = |x: f64, xi: f64, p: u8| if p == 1 { (x - 2.0 * xi).exp() } else { 1.0 };
        let exact_l = |x: f64, xi: f64, p: u8| if p == 1 { -2.0 * (x - 2.0 * xi).exp() } else { 0.0 };
        let coef_k = |_x: f64, _xi: f64, _iy: usize| (2.0, -1.0, 0.0);
        let diag_k = |_x: f64, _iy: usize| 1.0;
        let t = Transport {
            mesh: &mesh,
            family: fam,
            dir: Direction::Backward,
            ny: 1,
            coef: &coef_k,
            uniform: true,
            diag: Some(&diag_k),
            has_bottom: false,
            has_right: false,
        };
        let g: Vec<f64> = (0..mesh.len())
            .map(|k| {
                let (x, xi) = mesh.coords(k);
                -2.0 * exact_l(x, xi, mesh.region(fam, k))
            })
            .collect();
        let mut f = vec![0.0; mesh.len()];
        t.solve(Some(&t.plans()), &g, &mut f, &EdgeData { bottom: None, right: None });
        let ek = (0..mesh.len())
            .map(|k| {
                let (x, xi) = mesh.coords(k);
                (f[k] - exact_k(x, xi, mesh.region(fam, k))).abs()
            })
            .fold(0.0, f64::max);

        let coef_l = |_x: f64, _xi: f64, _iy: usize| (2.0, 1.0, 0.0);
        let diag_l = |_x: f64, _iy: usize| 0.0;
        let t = Transport {
            coef: &coef_l,
            diag: Some(&diag_l),
            has_bottom: true,
            ..t
        };
        let bottom: Vec<f64> = (0..n).map(|a| -2.0 * mesh.x(a).exp()).collect();
        let g = vec![0.0; mesh.len()];
        t.solve(Some(&t.plans()), &g, &mut f, &EdgeData { bottom: Some(&bottom), right: None });
        let el = (0..mesh.len())
            .map(|k| {
                let (x, xi) = mesh.coords(k);
                (f[k] - exact_l(x, xi, mesh.region(fam, k))).abs()
            })
            .fold(0.0, f64::max);
        (ek, el)
    }

    #[test]
    fn piecewise_transport_converges() {
        // linear interpolation at the feet: first order overall
        let e: Vec<_> = [33, 65, 129].iter().map(|&n| errors(n)).collect();
        for w in e.windows(2) {
            let (rk, rl) = (w[1].0 / w[0].0, w[1].1 / w[0].1);
            assert!(rk < 0.6 && rl < 0.6, "{e:?}");
        }
        assert!(e[2].0 < 0.01 && e[2].1 < 0.01, "{e:?}");
    }
}
