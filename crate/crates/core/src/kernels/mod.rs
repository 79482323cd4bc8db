//! Control and observer kernels on the triangle `T`, the gains derived from
//! them, and the target-system quantities used by the Lyapunov diagnostics.

mod characteristics;
mod closed_form;
mod export;
mod field;
mod gains;
mod mesh;
mod residual;
mod solver;
mod sweep;
mod target;

pub use characteristics::{characteristic_phi, TravelTime};
pub use closed_form::{closed_form_kernels, CLOSED_FORMS};
pub use export::write_kernel_csv;
pub use field::{CornerRecord, Edge, KernelField, KernelKind};
pub use gains::{make_gains, make_gains_with, p_plus_continuum, GainSampling, GainSet};
pub use mesh::{build_trimesh, node_index, Family, Stencil, TriMesh};
pub use residual::{kernel_residual, BoundaryError, RegionResidual, ResidualReport};
pub use solver::{solve_control_kernels, solve_observer_kernels, ArtificialBc, KernelSolverConfig};
pub use target::{
    compute_h, lyapunov_weights, solve_d_minus, solve_d_plus, weights_for_delta, DMinus, DMinusConfig, DPlus,
    HMatrix, LyapunovData, LyapunovWeights,
};
