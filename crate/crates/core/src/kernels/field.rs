use std::sync::Arc;

use serde::Serialize;

use super::mesh::{node_index, Family, TriMesh};
use crate::numerics::YGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    /// `K` (y-dependent) and `L`.
    Control,
    /// `M` (y-dependent) and `N`.
    Observer,
}

impl KernelKind {
    pub fn names(self) -> (&'static str, &'static str) {
        match self {
            KernelKind::Control => ("K", "L"),
            KernelKind::Observer => ("M", "N"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Edge {
    Bottom,
    Diagonal,
    Right,
}

/// Both boundary values available at an overdetermined corner node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CornerRecord {
    pub component: String,
    pub x: f64,
    pub xi: f64,
    pub chosen_edge: Edge,
    pub chosen: f64,
    pub other_edge: Edge,
    pub other: f64,
}

impl CornerRecord {
    pub fn discrepancy(&self) -> f64 {
        (self.chosen - self.other).abs()
    }
}

/// Kernel values tabulated on a [`TriMesh`] (and a [`YGrid`] for the
/// y-dependent part). Component `c` of the y-dependent part is `K_c` or
/// `M_c`; matrix entry `(i, j)` is `L_{i,j}` or `N_{i,j}`.
#[derive(Debug, Clone)]
pub struct KernelField {
    kind: KernelKind,
    mesh: Arc<TriMesh>,
    ygrid: YGrid,
    ydep: Vec<Vec<f64>>,
    mat: Vec<Vec<f64>>,
    pub corners: Vec<CornerRecord>,
    /// Sup-norm update per outer iteration of the solver, empty for
    /// tabulated closed forms.
    pub history: Vec<f64>,
}

impl KernelField {
    pub fn zeros(kind: KernelKind, mesh: Arc<TriMesh>, ygrid: YGrid) -> Self {
        let (m, nodes, ny) = (mesh.m(), mesh.len(), ygrid.len());
        Self {
            kind,
            ydep: vec![vec![0.0; nodes * ny]; m],
            mat: vec![vec![0.0; nodes]; m * m],
            mesh,
            ygrid,
            corners: Vec::new(),
            history: Vec::new(),
        }
    }

    /// Tabulates closed-form kernels. The closures receive the component,
    /// the zero-based region `p` of the node and the coordinates.
    pub fn from_fn(
        kind: KernelKind,
        mesh: Arc<TriMesh>,
        ygrid: YGrid,
        ydep: impl Fn(usize, u8, f64, f64, f64) -> f64,
        mat: impl Fn(usize, usize, u8, f64, f64) -> f64,
    ) -> Self {
        let mut f = Self::zeros(kind, mesh, ygrid);
        let (m, ny) = (f.m(), f.ygrid.len());
        let ys: Vec<f64> = f.ygrid.nodes().collect();
        for k in 0..f.mesh.len() {
            let (x, xi) = f.mesh.coords(k);
            for c in 0..m {
                let p = f.mesh.region(f.y_family(c), k);
                for (iy, &y) in ys.iter().enumerate() {
                    f.ydep[c][k * ny + iy] = ydep(c, p, x, xi, y);
                }
            }
            for i in 0..m {
                for j in 0..m {
                    let p = f.mesh.region(f.mat_family(i, j), k);
                    f.mat[i * m + j][k] = mat(i, j, p, x, xi);
                }
            }
        }
        f
    }

    /// Rebuilds a field from the tables returned by [`raw`](Self::raw).
    pub fn from_raw(
        kind: KernelKind,
        mesh: Arc<TriMesh>,
        ygrid: YGrid,
        ydep: Vec<Vec<f64>>,
        mat: Vec<Vec<f64>>,
    ) -> crate::Result<Self> {
        let (m, nodes, ny) = (mesh.m(), mesh.len(), ygrid.len());
        let ok = ydep.len() == m
            && mat.len() == m * m
            && ydep.iter().all(|c| c.len() == nodes * ny)
            && mat.iter().all(|c| c.len() == nodes);
        if !ok {
            return crate::error::invalid(format!(
                "kernel tables do not fit m = {m}, {nodes} mesh nodes, {ny} y-nodes"
            ));
        }
        Ok(Self { kind, mesh, ygrid, ydep, mat, corners: Vec::new(), history: Vec::new() })
    }

    /// The y-dependent tables (`[c][node * ny + iy]`) and matrix tables
    /// (`[i * m + j][node]`).
    pub fn raw(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.ydep, &self.mat)
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn mesh(&self) -> &Arc<TriMesh> {
        &self.mesh
    }

    pub fn ygrid(&self) -> &YGrid {
        &self.ygrid
    }

    pub fn m(&self) -> usize {
        self.mesh.m()
    }

    pub fn ny(&self) -> usize {
        self.ygrid.len()
    }

    pub fn y_family(&self, c: usize) -> Family {
        match self.kind {
            KernelKind::Control => Family::Control(c),
            KernelKind::Observer => Family::Observer(c),
        }
    }

    pub fn mat_family(&self, i: usize, j: usize) -> Family {
        match self.kind {
            KernelKind::Control => Family::Control(i),
            KernelKind::Observer => Family::Observer(j),
        }
    }

    pub fn ydep(&self, c: usize) -> &[f64] {
        &self.ydep[c]
    }

    pub fn ydep_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.ydep[c]
    }

    /// Values over the y-grid at node `k`.
    pub fn ydep_at(&self, c: usize, k: usize) -> &[f64] {
        let ny = self.ny();
        &self.ydep[c][k * ny..(k + 1) * ny]
    }

    pub fn mat(&self, i: usize, j: usize) -> &[f64] {
        &self.mat[i * self.m() + j]
    }

    pub fn mat_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let m = self.m();
        &mut self.mat[i * m + j]
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut [Vec<f64>], &mut [Vec<f64>]) {
        (&mut self.ydep, &mut self.mat)
    }

    /// Values over the y-grid at `(x, ξ)`, interpolated inside the region
    /// containing the point.
    pub fn eval_ydep(&self, c: usize, x: f64, xi: f64) -> Vec<f64> {
        let f = self.y_family(c);
        self.eval_ydep_in(c, self.mesh.region_of(f, x, xi), x, xi)
    }

    /// As [`eval_ydep`](Self::eval_ydep) using the smooth piece of region `p`.
    pub fn eval_ydep_in(&self, c: usize, p: u8, x: f64, xi: f64) -> Vec<f64> {
        let ny = self.ny();
        let st = self.mesh.stencil(self.y_family(c), p, x, xi);
        let mut out = vec![0.0; ny];
        for &(k, w) in &st {
            for (o, v) in out.iter_mut().zip(&self.ydep[c][k * ny..(k + 1) * ny]) {
                *o += w * v;
            }
        }
        out
    }

    pub fn eval_mat(&self, i: usize, j: usize, x: f64, xi: f64) -> f64 {
        let f = self.mat_family(i, j);
        self.eval_mat_in(i, j, self.mesh.region_of(f, x, xi), x, xi)
    }

    pub fn eval_mat_in(&self, i: usize, j: usize, p: u8, x: f64, xi: f64) -> f64 {
        let st = self.mesh.stencil(self.mat_family(i, j), p, x, xi);
        let data = self.mat(i, j);
        st.iter().map(|&(k, w)| w * data[k]).sum()
    }

    /// Largest absolute difference to another field on the same mesh.
    pub fn sup_diff(&self, other: &KernelField) -> f64 {
        let a = self.ydep.iter().flatten().zip(other.ydep.iter().flatten());
        let b = self.mat.iter().flatten().zip(other.mat.iter().flatten());
        a.chain(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
    }

    /// Reflection `(x, ξ) ↦ (1 − ξ, 1 − x)` across the line `x + ξ = 1`,
    /// which maps `T` onto itself. Applying it twice is the identity.
    pub fn mirror(&self) -> KernelField {
        let n = self.mesh.resolution();
        let ny = self.ny();
        let mut out = KernelField::zeros(self.kind, self.mesh.clone(), self.ygrid.clone());
        for a in 0..n {
            for b in 0..=a {
                let src = node_index(a, b);
                let dst = node_index(n - 1 - b, n - 1 - a);
                for c in 0..self.m() {
                    out.ydep[c][dst * ny..(dst + 1) * ny]
                        .copy_from_slice(&self.ydep[c][src * ny..(src + 1) * ny]);
                }
                for (o, s) in out.mat.iter_mut().zip(&self.mat) {
                    o[dst] = s[src];
                }
            }
        }
        out.corners = self.corners.clone();
        out.history = self.history.clone();
        out
    }
}
