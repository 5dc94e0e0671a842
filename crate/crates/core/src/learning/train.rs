//! Projected SGD with momentum and per-group learning rates.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{CellParams, NetworkParams};
use crate::error::{Error, Result};
use crate::learning::data::{Dataset, Sample};
use crate::learning::grad::{grad_objective_refs, Gradients};
use crate::learning::objective::{data_loss_sum, reg_terms, ObjectiveConfig};
use crate::linalg::orthonormal_rows;
use crate::regularizers::Regularizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AInit {
    /// Transpose of the orthonormalised columns of `A_base^T`.
    OrthTranspose,
    /// `A_base` as given.
    Given,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub r0: f64,
    pub momentum: f64,
    /// Learning rate of each group is `r0 * N^e` for `(A, alpha, lambda)`.
    pub lr_exponents: [i32; 3],
    pub seed: u64,
    pub alpha_max: f64,
    pub lambda_max: f64,
    pub alpha0: f64,
    pub lambda0: f64,
    pub a_init: AInit,
}

/// Desk-scale defaults. The batch covers the whole 512-sample desk training
/// split: at that size mini-batch noise reorders the depth sweep from seed to
/// seed.
impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 512,
            r0: 1e-3,
            momentum: 0.9,
            lr_exponents: [1, 3, 1],
            seed: 0,
            alpha_max: 1e6,
            lambda_max: 1e6,
            alpha0: 10.0,
            lambda0: 0.05,
            a_init: AInit::OrthTranspose,
        }
    }
}

impl TrainConfig {
    /// The full-scale training setup: 800 epochs, batch 256, `r0 = 8e-3`.
    pub fn full_scale() -> Self {
        TrainConfig {
            epochs: 800,
            batch_size: 256,
            r0: 8e-3,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::domain("batch_size must be ≥ 1"));
        }
        if !(self.r0 >= 0.0 && self.r0.is_finite()) {
            return Err(Error::domain(format!("r0 must be ≥ 0, got {}", self.r0)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::domain(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.alpha_max > 0.0 && self.lambda_max > 0.0) {
            return Err(Error::domain("alpha_max and lambda_max must be positive"));
        }
        if !(self.alpha0 >= 0.0 && self.alpha0 <= self.alpha_max) {
            return Err(Error::domain(format!(
                "alpha0 must be in [0, alpha_max], got {}",
                self.alpha0
            )));
        }
        if !(self.lambda0 >= 0.0 && self.lambda0 <= self.lambda_max) {
            return Err(Error::domain(format!(
                "lambda0 must be in [0, lambda_max], got {}",
                self.lambda0
            )));
        }
        Ok(())
    }

    /// `[r_A, r_alpha, r_lambda]` at depth `depth`.
    pub fn group_rates(&self, depth: usize) -> [f64; 3] {
        self.lr_exponents.map(|e| self.r0 * (depth as f64).powi(e))
    }
}

/// Initial parameters: every layer gets the same `A`, `alpha0`, `lambda0`.
pub fn init_params(depth: usize, horizon: f64, a_base: &Array2<f64>, tcfg: &TrainConfig) -> Result<NetworkParams> {
    if depth == 0 {
        return Err(Error::domain("network depth must be ≥ 1"));
    }
    let a = match tcfg.a_init {
        AInit::OrthTranspose => orthonormal_rows(a_base.view())?,
        AInit::Given => a_base.clone(),
    };
    NetworkParams::constant(horizon, depth, a, tcfg.alpha0, tcfg.lambda0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub epoch: usize,
    pub train_objective: f64,
    pub train_data_loss: f64,
    pub val_data_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<P> {
    pub params: P,
    pub curve: Vec<CurvePoint>,
}

/// Passed to the observer after every parameter update.
pub struct StepEvent<'a, P> {
    pub epoch: usize,
    pub batch: usize,
    pub batch_objective: f64,
    pub params: &'a P,
}

/// What the generic trainer needs from a parametrised network.
pub(crate) trait Trainable: Clone {
    type Grad;

    fn depth(&self) -> usize;
    fn zero_grad(&self) -> Self::Grad;
    fn grad(&self, batch: &[&Sample], reg: &Regularizer, ocfg: &ObjectiveConfig) -> Result<(f64, Self::Grad)>;
    fn data_loss_sum(&self, samples: &[&Sample], reg: &Regularizer) -> Result<f64>;
    fn penalty(&self, ocfg: &ObjectiveConfig) -> f64;
    /// `v = mu v + g; p -= rate * v`, then projection onto the admissible box.
    fn momentum_step(&mut self, grad: &Self::Grad, velocity: &mut Self::Grad, rates: [f64; 3], tcfg: &TrainConfig);
}

fn momentum_update(p: &mut [f64], v: &mut [f64], g: &[f64], mu: f64, rate: f64) {
    for ((pi, vi), gi) in p.iter_mut().zip(v.iter_mut()).zip(g) {
        *vi = mu * *vi + gi;
        *pi -= rate * *vi;
    }
}

fn clamp_all(v: &mut [f64], hi: f64) {
    for x in v {
        *x = x.clamp(0.0, hi);
    }
}

impl Trainable for NetworkParams {
    type Grad = Gradients;

    fn depth(&self) -> usize {
        NetworkParams::depth(self)
    }

    fn zero_grad(&self) -> Gradients {
        Gradients::zeros_like(self)
    }

    fn grad(&self, batch: &[&Sample], reg: &Regularizer, ocfg: &ObjectiveConfig) -> Result<(f64, Gradients)> {
        grad_objective_refs(self, batch, reg, ocfg)
    }

    fn data_loss_sum(&self, samples: &[&Sample], reg: &Regularizer) -> Result<f64> {
        data_loss_sum(self, samples, reg)
    }

    fn penalty(&self, ocfg: &ObjectiveConfig) -> f64 {
        reg_terms(self, ocfg).penalty(ocfg)
    }

    fn momentum_step(&mut self, g: &Gradients, v: &mut Gradients, rates: [f64; 3], tcfg: &TrainConfig) {
        let mu = tcfg.momentum;
        for ((a, va), ga) in self.a.iter_mut().zip(v.a.iter_mut()).zip(&g.a) {
            momentum_update(
                a.as_slice_mut().expect("standard layout"),
                va.as_slice_mut().expect("standard layout"),
                ga.as_slice().expect("standard layout"),
                mu,
                rates[0],
            );
        }
        momentum_update(&mut self.alpha, &mut v.alpha, &g.alpha, mu, rates[1]);
        momentum_update(&mut self.lambda, &mut v.lambda, &g.lambda, mu, rates[2]);
        clamp_all(&mut self.alpha, tcfg.alpha_max);
        clamp_all(&mut self.lambda, tcfg.lambda_max);
    }
}

/// Permutation of `0..count` for one epoch; a pure function of `(seed, epoch)`.
pub fn epoch_order(seed: u64, epoch: usize, count: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut rng);
    order
}

fn mean_loss<P: Trainable>(p: &P, samples: &[Sample], reg: &Regularizer) -> Result<f64> {
    if samples.is_empty() {
        return Ok(f64::NAN);
    }
    let refs: Vec<&Sample> = samples.iter().collect();
    Ok(p.data_loss_sum(&refs, reg)? / samples.len() as f64)
}

pub(crate) fn run_sgd<P: Trainable>(
    p0: &P,
    data: &Dataset,
    reg: &Regularizer,
    ocfg: &ObjectiveConfig,
    tcfg: &TrainConfig,
    observer: &mut dyn FnMut(&StepEvent<'_, P>),
) -> Result<TrainOutcome<P>> {
    ocfg.validate()?;
    tcfg.validate()?;
    let train = data.train();
    if train.is_empty() && tcfg.epochs > 0 {
        return Err(Error::domain("training split is empty"));
    }
    let rates = tcfg.group_rates(p0.depth());
    let mut params = p0.clone();
    let mut velocity = params.zero_grad();
    let mut curve = Vec::with_capacity(tcfg.epochs);
    let diverged = |epoch, batch, e: Error, loss| {
        if e.is_numeric() {
            Error::Diverged { epoch, batch, loss }
        } else {
            e
        }
    };

    for epoch in 1..=tcfg.epochs {
        let order = epoch_order(tcfg.seed, epoch, train.len());
        for (bi, idx) in order.chunks(tcfg.batch_size).enumerate() {
            let batch: Vec<&Sample> = idx.iter().map(|&i| &train[i]).collect();
            let (value, grad) = params
                .grad(&batch, reg, ocfg)
                .map_err(|e| diverged(epoch, bi, e, f64::NAN))?;
            if !value.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: bi,
                    loss: value,
                });
            }
            params.momentum_step(&grad, &mut velocity, rates, tcfg);
            observer(&StepEvent {
                epoch,
                batch: bi,
                batch_objective: value,
                params: &params,
            });
        }
        let last_batch = train.len().div_ceil(tcfg.batch_size);
        let train_data_loss = mean_loss(&params, train, reg).map_err(|e| diverged(epoch, last_batch, e, f64::NAN))?;
        let train_objective = train_data_loss + params.penalty(ocfg);
        if !train_objective.is_finite() {
            return Err(Error::Diverged {
                epoch,
                batch: last_batch,
                loss: train_objective,
            });
        }
        let val_data_loss =
            mean_loss(&params, data.val(), reg).map_err(|e| diverged(epoch, last_batch, e, f64::NAN))?;
        curve.push(CurvePoint {
            epoch,
            train_objective,
            train_data_loss,
            val_data_loss,
        });
    }
    Ok(TrainOutcome { params, curve })
}

/// Trains the FBS network from `p0`; see [`sgd_train_observed`].
pub fn sgd_train(
    p0: &NetworkParams,
    data: &Dataset,
    reg: &Regularizer,
    ocfg: &ObjectiveConfig,
    tcfg: &TrainConfig,
) -> Result<TrainOutcome<NetworkParams>> {
    sgd_train_observed(p0, data, reg, ocfg, tcfg, &mut |_| {})
}

/// Momentum SGD over shuffled mini-batches of the training split.
///
/// After each update `alpha` and `lambda` are clamped to `[0, alpha_max]` and
/// `[0, lambda_max]`. The curve holds, per epoch, the full training objective
/// and the unregularized training and validation losses.
pub fn sgd_train_observed(
    p0: &NetworkParams,
    data: &Dataset,
    reg: &Regularizer,
    ocfg: &ObjectiveConfig,
    tcfg: &TrainConfig,
    observer: &mut dyn FnMut(&StepEvent<'_, NetworkParams>),
) -> Result<TrainOutcome<NetworkParams>> {
    p0.validate()?;
    if p0.dims() != (data.m, data.n) {
        return Err(Error::dim(format!(
            "network layers are {:?}, dataset has m = {}, n = {}",
            p0.dims(),
            data.m,
            data.n
        )));
    }
    run_sgd(p0, data, reg, ocfg, tcfg, observer)
}
