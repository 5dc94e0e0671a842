//! Learning objectives of the discrete and continuous problems.

use ndarray::{ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{aligned_depth, fbs_forward_batch, project_control, CellParams, Control, NetworkParams};
use crate::error::{Error, Result};
use crate::learning::data::{check_sample_dims, stack, Sample};
use crate::linalg::frobenius_norm;
use crate::regularizers::Regularizer;

/// Samples per work unit. Reductions run in chunk order, so results do not
/// depend on how many threads process the chunks.
pub(crate) const CHUNK: usize = 32;

/// Outer map applied to the averaged parameter powers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Psi {
    Identity,
    Scaled(f64),
}

impl Psi {
    pub fn apply(&self, s: f64) -> f64 {
        match *self {
            Psi::Identity => s,
            Psi::Scaled(c) => c * s,
        }
    }

    pub fn derivative(&self, _s: f64) -> f64 {
        match *self {
            Psi::Identity => 1.0,
            Psi::Scaled(c) => c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub pnorm: f64,
    pub psi: Psi,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            beta1: 1e-7,
            beta2: 1e-7,
            beta3: 1e-7,
            pnorm: 2.0,
            psi: Psi::Identity,
        }
    }
}

impl ObjectiveConfig {
    pub fn unregularized() -> Self {
        ObjectiveConfig {
            beta1: 0.0,
            beta2: 0.0,
            beta3: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2), ("beta3", self.beta3)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("{name} must be ≥ 0, got {v}")));
            }
        }
        if !(self.pnorm >= 1.0 && self.pnorm.is_finite()) {
            return Err(Error::domain(format!(
                "pnorm must be ≥ 1 and finite, got {}",
                self.pnorm
            )));
        }
        if let Psi::Scaled(c) = self.psi {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::domain(format!("psi scale must be ≥ 0, got {c}")));
            }
        }
        Ok(())
    }
}

/// Values of the three parameter regularizers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegTerms {
    pub h1: f64,
    pub h2: f64,
    pub h3: f64,
}

impl RegTerms {
    pub fn penalty(&self, cfg: &ObjectiveConfig) -> f64 {
        cfg.beta1 * self.h1 + cfg.beta2 * self.h2 + cfg.beta3 * self.h3
    }
}

/// `1/2 |x - y|_2^2`
pub fn loss(x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::dim(format!("loss of R^{} against R^{}", x.len(), y.len())));
    }
    Ok(half_sq_dist(x, y))
}

fn half_sq_dist(x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    0.5 * x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}

/// `psi(mean_k |A_k|_F^p)`, `psi(mean_k |alpha_k|^p)`, `psi(mean_k |lambda_k|^p)`.
///
/// For a control on `M` cells the cell mean is the time average
/// `(1/T) int_0^T`, computed exactly.
pub fn reg_terms(p: &impl CellParams, cfg: &ObjectiveConfig) -> RegTerms {
    let cells = p.cells();
    let pw = cfg.pnorm;
    let mean = |f: &dyn Fn(usize) -> f64| (0..cells).map(f).sum::<f64>() / cells as f64;
    RegTerms {
        h1: cfg.psi.apply(mean(&|k| frobenius_norm(p.a(k).view()).powf(pw))),
        h2: cfg.psi.apply(mean(&|k| p.alpha(k).abs().powf(pw))),
        h3: cfg.psi.apply(mean(&|k| p.lambda(k).abs().powf(pw))),
    }
}

/// Sum of terminal losses over `samples`, reduced in chunk order.
pub(crate) fn data_loss_sum(p: &NetworkParams, samples: &[&Sample], reg: &Regularizer) -> Result<f64> {
    let (m, n) = p.dims();
    check_sample_dims(samples, m, n)?;
    let sums = samples
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let (x0, b, y) = stack(chunk);
            let xn = fbs_forward_batch(p, x0.view(), b.view(), reg).map_err(|e| e.at_sample(c * CHUNK))?;
            Ok(xn
                .axis_iter(Axis(1))
                .zip(y.axis_iter(Axis(1)))
                .map(|(x, y)| half_sq_dist(x, y))
                .sum::<f64>())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(sums.into_iter().sum())
}

/// Mean terminal loss without the parameter regularizers.
pub fn data_loss(p: &NetworkParams, samples: &[Sample], reg: &Regularizer) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::domain("objective needs at least one sample"));
    }
    let refs: Vec<&Sample> = samples.iter().collect();
    Ok(data_loss_sum(p, &refs, reg)? / samples.len() as f64)
}

/// Mean terminal loss plus the weighted parameter regularizers.
pub fn objective_discrete(
    p: &NetworkParams,
    samples: &[Sample],
    reg: &Regularizer,
    cfg: &ObjectiveConfig,
) -> Result<f64> {
    p.validate()?;
    Ok(data_loss(p, samples, reg)? + reg_terms(p, cfg).penalty(cfg))
}

/// Continuous objective: terminal states from the fine unrolling of `u` at
/// `n_ref` layers (rounded up to a multiple of the control grid), regularizers
/// integrated exactly over the piecewise-constant control.
pub fn objective_continuous(
    u: &Control,
    samples: &[Sample],
    reg: &Regularizer,
    cfg: &ObjectiveConfig,
    n_ref: usize,
) -> Result<f64> {
    if n_ref == 0 {
        return Err(Error::domain("reference depth must be ≥ 1"));
    }
    let fine = project_control(u, aligned_depth(u, n_ref))?;
    Ok(data_loss(&fine, samples, reg)? + reg_terms(u, cfg).penalty(cfg))
}
