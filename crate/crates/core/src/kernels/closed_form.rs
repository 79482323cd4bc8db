//! Kernels known in closed form, selectable by name.

use std::sync::Arc;

use super::field::{KernelField, KernelKind};
use super::mesh::TriMesh;
use crate::error::{invalid, Result};
use crate::numerics::YGrid;

/// Closed-form observer kernels of the benchmark system.
///
/// `example-observer-printed` keeps the constant `−1` in the exponent of the
/// second piece of `M_1` and `N_{2,1}`; it satisfies the equations and the
/// boundary conditions piecewise but `M_1` is then discontinuous across
/// `ξ = 2x − 1`. `example-observer` uses `−1/2`, the continuous solution.
pub const CLOSED_FORMS: &[&str] = &["example-observer", "example-observer-printed"];

pub fn closed_form_kernels(name: &str, mesh: Arc<TriMesh>, ygrid: YGrid) -> Result<KernelField> {
    let shift = match name {
        "example-observer" => -0.5,
        "example-observer-printed" => -1.0,
        _ => return invalid(format!("unknown closed-form kernel '{name}', known: {CLOSED_FORMS:?}")),
    };
    if mesh.m() != 2 {
        return invalid(format!("closed form '{name}' needs m = 2, mesh has m = {}", mesh.m()));
    }
    Ok(example_observer(mesh, ygrid, shift))
}

fn example_observer(mesh: Arc<TriMesh>, ygrid: YGrid, shift: f64) -> KernelField {
    KernelField::from_fn(
        KernelKind::Observer,
        mesh,
        ygrid,
        move |c, p, x, xi, y| match (c, p) {
            (0, 0) => y - 0.5,
            (0, _) => (x - xi / 2.0 + shift).exp() * (y - 0.5),
            _ => (x - xi).exp() * (y - 0.5),
        },
        move |i, j, p, x, xi| match (i, j, p) {
            (1, 0, 1) => (x - xi / 2.0 + shift).exp(),
            (1, 1, _) => (x - xi).exp(),
            _ => 0.0,
        },
    )
}
