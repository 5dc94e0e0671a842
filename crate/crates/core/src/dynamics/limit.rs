//! Reference solutions of the continuous-time system by fine unrolling.

use ndarray::{Array1, ArrayView1};

use crate::dynamics::forward::{fbs_forward, Trajectory};
use crate::dynamics::params::{project_control, Control};
use crate::error::{Error, Result};
use crate::regularizers::Regularizer;

pub const DEFAULT_REFERENCE_DEPTH: usize = 2048;

#[derive(Debug, Clone)]
pub struct LimitSolution {
    pub terminal: Array1<f64>,
    pub trajectory: Trajectory,
    /// `|x_{N}(T) - x_{N/2}(T)|_2` at the reference depth `N`.
    pub err_est: f64,
}

/// Smallest multiple of the control grid that is at least `depth`.
pub fn aligned_depth(u: &Control, depth: usize) -> usize {
    let grid = u.grid();
    depth.div_ceil(grid) * grid
}

/// Unrolls the projected control at `n_ref` layers (rounded up to a multiple
/// of the control grid) and estimates the error from the half-depth run.
pub fn limit_solve(
    u: &Control,
    x0: ArrayView1<f64>,
    b: ArrayView1<f64>,
    reg: &Regularizer,
    n_ref: usize,
) -> Result<LimitSolution> {
    if n_ref < 2 {
        return Err(Error::domain(format!("reference depth must be ≥ 2, got {n_ref}")));
    }
    let depth = aligned_depth(u, n_ref);
    let fine = fbs_forward(&project_control(u, depth)?, x0, b, reg)?;
    let coarse = fbs_forward(&project_control(u, depth / 2)?, x0, b, reg)?;
    let err_est = (fine.terminal() - coarse.terminal()).mapv(|d| d * d).sum().sqrt();
    Ok(LimitSolution {
        terminal: fine.terminal().clone(),
        trajectory: fine,
        err_est,
    })
}

/// Piecewise-linear interpolant of the layer states at time `t`.
pub fn interpolate_pl(traj: &Trajectory, t: f64) -> Result<Array1<f64>> {
    let horizon = traj.horizon;
    if !(0.0..=horizon).contains(&t) {
        return Err(Error::domain(format!("t = {t} outside [0, {horizon}]")));
    }
    let depth = traj.depth();
    let s = t / horizon * depth as f64;
    let k = (s.floor() as usize).min(depth.saturating_sub(1));
    let w = s - k as f64;
    if depth == 0 {
        return Ok(traj.states[0].clone());
    }
    if w == 0.0 {
        return Ok(traj.states[k].clone());
    }
    if w == 1.0 {
        return Ok(traj.states[k + 1].clone());
    }
    Ok(&traj.states[k] + &((&traj.states[k + 1] - &traj.states[k]) * w))
}
