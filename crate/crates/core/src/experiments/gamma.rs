use rayon::prelude::*;

use crate::dynamics::{project_control, Control};
use crate::error::{Error, Result};
use crate::experiments::sweep::check_increasing;
use crate::learning::{objective_continuous, objective_discrete, ObjectiveConfig, Sample};
use crate::regularizers::Regularizer;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaRow {
    pub depth: usize,
    /// Discrete objective at the projected control.
    pub value: f64,
    /// Distance to the continuous objective.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaCheck {
    /// Continuous objective at the reference depth.
    pub reference: f64,
    /// `|J(n_ref) - J(n_ref / 2)|`, the self-convergence gap of the reference.
    pub reference_err_est: f64,
    pub rows: Vec<GammaRow>,
}

impl GammaCheck {
    /// Least-squares slope of `-log(gap)` against `log(N)`.
    pub fn empirical_order(&self) -> f64 {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.gap > 0.0)
            .map(|r| ((r.depth as f64).ln(), r.gap.ln()))
            .collect();
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        -sxy / sxx
    }
}

/// Evaluates the discrete objective of the projected control at each depth
/// and compares with the continuous objective of the control itself.
pub fn gamma_check(
    target: &Control,
    layers: &[usize],
    samples: &[Sample],
    reg: &Regularizer,
    ocfg: &ObjectiveConfig,
    n_ref: usize,
) -> Result<GammaCheck> {
    check_increasing(layers)?;
    let max = *layers.last().expect("non-empty");
    if n_ref <= max {
        return Err(Error::domain(format!(
            "reference depth {n_ref} must exceed the largest tested depth {max}"
        )));
    }
    let reference = objective_continuous(target, samples, reg, ocfg, n_ref)?;
    let coarse = objective_continuous(target, samples, reg, ocfg, n_ref / 2)?;
    let rows = layers
        .par_iter()
        .map(|&depth| {
            let value = objective_discrete(&project_control(target, depth)?, samples, reg, ocfg)?;
            Ok(GammaRow {
                depth,
                value,
                gap: (value - reference).abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GammaCheck {
        reference,
        reference_err_est: (reference - coarse).abs(),
        rows,
    })
}
