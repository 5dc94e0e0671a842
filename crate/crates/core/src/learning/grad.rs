//! Reverse-mode gradients through the unrolled recursion.
//!
//! For layer `k` with `c = h alpha_k`, `rho = h alpha_k lambda_k`:
//!
//! ```text
//! r = A x - b,   z = x - c A^T r,   x' = prox_{rho R}(z)
//! ```
//!
//! Given `g = dL/dx'`, with `D = dx'/dz` (diagonal) and `q = dx'/drho`:
//!
//! ```text
//! gz = D g,   dL/drho = q . g,   dL/dc = -r . (A gz)
//! dL/dA = -c (r gz^T + (A gz) x^T),   dL/dx = gz - c A^T (A gz)
//! ```

use ndarray::{Array2, Axis, Zip};
use rayon::prelude::*;

use crate::dynamics::{fbs_step_batch_with_residual, CellParams, NetworkParams};
use crate::error::{Error, Result};
use crate::learning::data::{check_sample_dims, stack, Sample};
use crate::learning::objective::{reg_terms, ObjectiveConfig, CHUNK};
use crate::linalg::frobenius_norm;
use crate::regularizers::Regularizer;

/// Gradient with the same layout as [`NetworkParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub a: Vec<Array2<f64>>,
    pub alpha: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(p: &NetworkParams) -> Self {
        Gradients {
            a: p.a.iter().map(|a| Array2::zeros(a.dim())).collect(),
            alpha: vec![0.0; p.depth()],
            lambda: vec![0.0; p.depth()],
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.a.iter_mut().zip(&other.a) {
            *a += b;
        }
        for (a, b) in self.alpha.iter_mut().zip(&other.alpha) {
            *a += b;
        }
        for (a, b) in self.lambda.iter_mut().zip(&other.lambda) {
            *a += b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.a
            .iter()
            .flat_map(|a| a.iter())
            .chain(&self.alpha)
            .chain(&self.lambda)
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// `d/dv` of `psi(mean |v_k|^p)` for one entry, without the `psi'` factor.
pub(crate) fn power_mean_partial(v: f64, pnorm: f64, cells: usize) -> f64 {
    if v == 0.0 {
        return 0.0;
    }
    pnorm / cells as f64 * v.abs().powf(pnorm - 1.0) * v.signum()
}

/// Adds the gradients of `beta_i H_i` to `grads`.
fn add_reg_grads(p: &NetworkParams, cfg: &ObjectiveConfig, grads: &mut Gradients) {
    let cells = p.depth();
    let pw = cfg.pnorm;
    let mean = |f: &dyn Fn(usize) -> f64| (0..cells).map(f).sum::<f64>() / cells as f64;
    if cfg.beta1 != 0.0 {
        let norms: Vec<f64> = p.a.iter().map(|a| frobenius_norm(a.view())).collect();
        let s = mean(&|k| norms[k].powf(pw));
        let outer = cfg.beta1 * cfg.psi.derivative(s);
        for (k, ga) in grads.a.iter_mut().enumerate() {
            if norms[k] == 0.0 {
                continue;
            }
            // d|A|_F^p / dA = p |A|_F^(p-2) A
            let w = outer * pw / cells as f64 * norms[k].powf(pw - 2.0);
            ga.scaled_add(w, &p.a[k]);
        }
    }
    if cfg.beta2 != 0.0 {
        let s = mean(&|k| p.alpha(k).abs().powf(pw));
        let outer = cfg.beta2 * cfg.psi.derivative(s);
        for (k, g) in grads.alpha.iter_mut().enumerate() {
            *g += outer * power_mean_partial(p.alpha[k], pw, cells);
        }
    }
    if cfg.beta3 != 0.0 {
        let s = mean(&|k| p.lambda(k).abs().powf(pw));
        let outer = cfg.beta3 * cfg.psi.derivative(s);
        for (k, g) in grads.lambda.iter_mut().enumerate() {
            *g += outer * power_mean_partial(p.lambda[k], pw, cells);
        }
    }
}

/// Loss sum and data-term gradient of one chunk; the terminal adjoint is
/// scaled by `weight` so chunk gradients add up to the batch mean.
fn chunk_grad(
    p: &NetworkParams,
    chunk: &[&Sample],
    reg: &Regularizer,
    weight: f64,
    first_index: usize,
) -> Result<(f64, Gradients)> {
    let depth = p.depth();
    let h = p.step();
    let (x0, b, y) = stack(chunk);

    let mut states = Vec::with_capacity(depth + 1);
    let mut residuals = Vec::with_capacity(depth);
    states.push(x0);
    for k in 0..depth {
        let (next, r) = fbs_step_batch_with_residual(
            p.a[k].view(),
            p.alpha[k],
            p.lambda[k],
            h,
            b.view(),
            states[k].view(),
            reg,
        );
        states.push(next);
        residuals.push(r);
    }

    let terminal = &states[depth];
    let mut g = terminal - &y;
    let mut loss_sum = 0.0;
    for (j, col) in g.axis_iter(Axis(1)).enumerate() {
        let l = 0.5 * col.iter().map(|v| v * v).sum::<f64>();
        if !l.is_finite() {
            return Err(Error::numeric(format!("terminal loss is {l}")).at_sample(first_index + j));
        }
        loss_sum += l;
    }
    g.mapv_inplace(|v| v * weight);

    let mut grads = Gradients::zeros_like(p);
    for k in (0..depth).rev() {
        let a = &p.a[k];
        let c = h * p.alpha[k];
        let rho = c * p.lambda[k];
        let out = &states[k + 1];

        let mut gz = g;
        let mut d_rho = 0.0;
        Zip::from(&mut gz).and(out).for_each(|gv, &o| {
            let (dz, dr) = reg.prox_partials(rho, o);
            d_rho += dr * *gv;
            *gv *= dz;
        });
        let agz = a.dot(&gz);
        let r = &residuals[k];
        let d_c = -r.iter().zip(&agz).map(|(u, v)| u * v).sum::<f64>();

        // dA = -c (r gz^T + (A gz) x^T)
        let mut da = r.dot(&gz.t());
        da += &agz.dot(&states[k].t());
        da.mapv_inplace(|v| -c * v);
        grads.a[k] = da;

        grads.alpha[k] = h * d_c + h * p.lambda[k] * d_rho;
        grads.lambda[k] = h * p.alpha[k] * d_rho;

        // dx = gz - c A^T (A gz)
        let back = a.t().dot(&agz);
        gz.scaled_add(-c, &back);
        g = gz;
    }
    Ok((loss_sum, grads))
}

pub(crate) fn grad_objective_refs(
    p: &NetworkParams,
    batch: &[&Sample],
    reg: &Regularizer,
    cfg: &ObjectiveConfig,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::domain("gradient needs at least one sample"));
    }
    let (m, n) = p.dims();
    check_sample_dims(batch, m, n)?;
    let weight = 1.0 / batch.len() as f64;
    let parts = batch
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| chunk_grad(p, chunk, reg, weight, c * CHUNK))
        .collect::<Result<Vec<_>>>()?;

    let mut parts = parts.into_iter();
    let (mut loss_sum, mut grads) = parts.next().expect("non-empty batch");
    for (l, g) in parts {
        loss_sum += l;
        grads.add_assign(&g);
    }
    add_reg_grads(p, cfg, &mut grads);
    let value = loss_sum / batch.len() as f64 + reg_terms(p, cfg).penalty(cfg);
    Ok((value, grads))
}

/// Objective over `batch` and its exact gradient (almost everywhere).
///
/// Prox derivatives at kinks are taken as zero.
pub fn grad_objective(
    p: &NetworkParams,
    batch: &[Sample],
    reg: &Regularizer,
    cfg: &ObjectiveConfig,
) -> Result<(f64, Gradients)> {
    p.validate()?;
    let refs: Vec<&Sample> = batch.iter().collect();
    grad_objective_refs(p, &refs, reg, cfg)
}
