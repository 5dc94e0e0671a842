//! LISTA objective, gradient and training with weights shared across layers.

use ndarray::{Array2, Axis, Zip};
use rayon::prelude::*;

use crate::dynamics::{lista_forward_batch, lista_step_batch, ListaParams};
use crate::error::{Error, Result};
use crate::learning::data::{check_sample_dims, stack, Dataset, Sample};
use crate::learning::grad::power_mean_partial;
use crate::learning::objective::{ObjectiveConfig, RegTerms, CHUNK};
use crate::learning::train::{run_sgd, TrainConfig, TrainOutcome, Trainable};
use crate::linalg::frobenius_norm;
use crate::regularizers::Regularizer;

#[derive(Debug, Clone, PartialEq)]
pub struct ListaGradients {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
    pub theta: f64,
}

/// `psi(|W1|_F^p)`, `psi(|W2|_F^p)`, `psi(|theta|^p)`.
pub fn lista_reg_terms(p: &ListaParams, cfg: &ObjectiveConfig) -> RegTerms {
    let pw = cfg.pnorm;
    RegTerms {
        h1: cfg.psi.apply(frobenius_norm(p.w1.view()).powf(pw)),
        h2: cfg.psi.apply(frobenius_norm(p.w2.view()).powf(pw)),
        h3: cfg.psi.apply(p.theta.abs().powf(pw)),
    }
}

fn lista_loss_sum(p: &ListaParams, samples: &[&Sample]) -> Result<f64> {
    let (n, m) = p.w2.dim();
    check_sample_dims(samples, m, n)?;
    let sums = samples
        .par_chunks(CHUNK)
        .map(|chunk| {
            let (x0, b, y) = stack(chunk);
            let xn = lista_forward_batch(p, x0.view(), b.view())?;
            Ok(xn
                .axis_iter(Axis(1))
                .zip(y.axis_iter(Axis(1)))
                .map(|(x, y)| 0.5 * x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                .sum::<f64>())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(sums.into_iter().sum())
}

/// Mean terminal loss of the LISTA network plus its weighted regularizers.
pub fn lista_objective(p: &ListaParams, samples: &[Sample], cfg: &ObjectiveConfig) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::domain("objective needs at least one sample"));
    }
    let refs: Vec<&Sample> = samples.iter().collect();
    Ok(lista_loss_sum(p, &refs)? / samples.len() as f64 + lista_reg_terms(p, cfg).penalty(cfg))
}

fn lista_chunk_grad(p: &ListaParams, chunk: &[&Sample], weight: f64) -> Result<(f64, ListaGradients)> {
    let h = p.step();
    let (x0, b, y) = stack(chunk);
    let mut states = Vec::with_capacity(p.depth + 1);
    states.push(x0);
    for k in 0..p.depth {
        let next = lista_step_batch(p, b.view(), states[k].view());
        states.push(next);
    }
    let mut g = &states[p.depth] - &y;
    let loss_sum = 0.5 * g.iter().map(|v| v * v).sum::<f64>();
    if !loss_sum.is_finite() {
        return Err(Error::numeric("LISTA terminal loss is not finite"));
    }
    g.mapv_inplace(|v| v * weight);

    let mut w1 = Array2::zeros(p.w1.dim());
    let mut w2 = Array2::zeros(p.w2.dim());
    let mut theta = 0.0;
    for k in (0..p.depth).rev() {
        let out = &states[k + 1];
        let mut gz = g;
        // d out / d tau = -sign(out) on the active set, tau = h theta
        Zip::from(&mut gz).and(out).for_each(|gv, &o| {
            if o == 0.0 {
                *gv = 0.0;
            } else {
                theta -= h * o.signum() * *gv;
            }
        });
        w1.scaled_add(-h, &gz.dot(&states[k].t()));
        w2.scaled_add(h, &gz.dot(&b.t()));
        let back = p.w1.t().dot(&gz);
        gz.scaled_add(-h, &back);
        g = gz;
    }
    Ok((loss_sum, ListaGradients { w1, w2, theta }))
}

fn lista_grad_refs(p: &ListaParams, batch: &[&Sample], cfg: &ObjectiveConfig) -> Result<(f64, ListaGradients)> {
    if batch.is_empty() {
        return Err(Error::domain("gradient needs at least one sample"));
    }
    let (n, m) = p.w2.dim();
    check_sample_dims(batch, m, n)?;
    let weight = 1.0 / batch.len() as f64;
    let parts = batch
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| lista_chunk_grad(p, chunk, weight).map_err(|e| e.at_sample(c * CHUNK)))
        .collect::<Result<Vec<_>>>()?;
    let mut parts = parts.into_iter();
    let (mut loss_sum, mut grads) = parts.next().expect("non-empty batch");
    for (l, g) in parts {
        loss_sum += l;
        grads.w1 += &g.w1;
        grads.w2 += &g.w2;
        grads.theta += g.theta;
    }

    let pw = cfg.pnorm;
    let terms = lista_reg_terms(p, cfg);
    let n1 = frobenius_norm(p.w1.view());
    if cfg.beta1 != 0.0 && n1 > 0.0 {
        let s = n1.powf(pw);
        grads
            .w1
            .scaled_add(cfg.beta1 * cfg.psi.derivative(s) * pw * n1.powf(pw - 2.0), &p.w1);
    }
    let n2 = frobenius_norm(p.w2.view());
    if cfg.beta2 != 0.0 && n2 > 0.0 {
        let s = n2.powf(pw);
        grads
            .w2
            .scaled_add(cfg.beta2 * cfg.psi.derivative(s) * pw * n2.powf(pw - 2.0), &p.w2);
    }
    if cfg.beta3 != 0.0 {
        let s = p.theta.abs().powf(pw);
        grads.theta += cfg.beta3 * cfg.psi.derivative(s) * power_mean_partial(p.theta, pw, 1);
    }
    Ok((loss_sum / batch.len() as f64 + terms.penalty(cfg), grads))
}

/// LISTA objective over `batch` and its gradient in `(W1, W2, theta)`.
pub fn lista_grad_objective(p: &ListaParams, batch: &[Sample], cfg: &ObjectiveConfig) -> Result<(f64, ListaGradients)> {
    p.validate()?;
    let refs: Vec<&Sample> = batch.iter().collect();
    lista_grad_refs(p, &refs, cfg)
}

impl Trainable for ListaParams {
    type Grad = ListaGradients;

    fn depth(&self) -> usize {
        self.depth
    }

    fn zero_grad(&self) -> ListaGradients {
        ListaGradients {
            w1: Array2::zeros(self.w1.dim()),
            w2: Array2::zeros(self.w2.dim()),
            theta: 0.0,
        }
    }

    fn grad(&self, batch: &[&Sample], _reg: &Regularizer, ocfg: &ObjectiveConfig) -> Result<(f64, ListaGradients)> {
        lista_grad_refs(self, batch, ocfg)
    }

    fn data_loss_sum(&self, samples: &[&Sample], _reg: &Regularizer) -> Result<f64> {
        lista_loss_sum(self, samples)
    }

    fn penalty(&self, ocfg: &ObjectiveConfig) -> f64 {
        lista_reg_terms(self, ocfg).penalty(ocfg)
    }

    fn momentum_step(&mut self, g: &ListaGradients, v: &mut ListaGradients, rates: [f64; 3], tcfg: &TrainConfig) {
        let mu = tcfg.momentum;
        Zip::from(&mut self.w1).and(&mut v.w1).and(&g.w1).for_each(|p, v, &g| {
            *v = mu * *v + g;
            *p -= rates[0] * *v;
        });
        Zip::from(&mut self.w2).and(&mut v.w2).and(&g.w2).for_each(|p, v, &g| {
            *v = mu * *v + g;
            *p -= rates[0] * *v;
        });
        v.theta = mu * v.theta + g.theta;
        self.theta = (self.theta - rates[2] * v.theta).clamp(0.0, tcfg.lambda_max);
    }
}

/// Trains `(W1, W2, theta)` with the same momentum SGD as the FBS network;
/// the weights use the `A` learning rate and `theta` the `lambda` rate.
pub fn sgd_train_lista(
    p0: &ListaParams,
    data: &Dataset,
    ocfg: &ObjectiveConfig,
    tcfg: &TrainConfig,
) -> Result<TrainOutcome<ListaParams>> {
    p0.validate()?;
    if p0.w2.dim() != (data.n, data.m) {
        return Err(Error::dim("LISTA weights do not match dataset dimensions"));
    }
    run_sgd(p0, data, &Regularizer::l1(1.0), ocfg, tcfg, &mut |_| {})
}
