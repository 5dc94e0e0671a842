//! Forward dynamics of unrolled networks and of their deep-layer limit.

mod forward;
mod limit;
mod params;

pub use forward::{
    fbs_forward, fbs_forward_batch, fbs_step, fbs_step_batch, lista_forward, lista_forward_batch, Trajectory,
};
pub(crate) use forward::{fbs_step_batch_with_residual, lista_step_batch};
pub use limit::{aligned_depth, interpolate_pl, limit_solve, LimitSolution, DEFAULT_REFERENCE_DEPTH};
pub use params::{
    control_distance_lp, extend_params, param_norm_lp, project_control, shift_control, CellParams, Control,
    ListaParams, NetworkParams,
};
