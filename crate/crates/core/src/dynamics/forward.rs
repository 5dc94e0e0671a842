//! Forward passes of the FBS and LISTA networks.
//!
//! States are stored column-wise: a batch of `B` samples is an `n x B` matrix.
//! Single-sample entry points run the same kernels on a one-column batch, so
//! a sample's trajectory does not depend on which route computed it.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use crate::dynamics::params::{ListaParams, NetworkParams};
use crate::error::{Error, Result};
use crate::regularizers::{check_finite, Regularizer};

/// Layer states `x^{N,0..N}` of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub horizon: f64,
    pub states: Vec<Array1<f64>>,
}

impl Trajectory {
    pub fn depth(&self) -> usize {
        self.states.len() - 1
    }

    pub fn terminal(&self) -> &Array1<f64> {
        self.states.last().expect("trajectory has at least one state")
    }
}

fn check_layer(a: ArrayView2<f64>, alpha: f64, lambda: f64, h: f64, b_rows: usize, x_rows: usize) -> Result<()> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::domain(format!("step size must be positive, got {h}")));
    }
    if alpha.is_nan() || lambda.is_nan() || alpha < 0.0 || lambda < 0.0 {
        return Err(Error::domain(format!(
            "alpha = {alpha}, lambda = {lambda}; both must be ≥ 0"
        )));
    }
    let (m, n) = a.dim();
    if b_rows != m || x_rows != n {
        return Err(Error::dim(format!(
            "A is {m}x{n}, b has {b_rows} rows, x has {x_rows} rows"
        )));
    }
    Ok(())
}

/// Residual `A X - B` for a batch.
pub(crate) fn residual(a: ArrayView2<f64>, x: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let mut r = a.dot(&x);
    r -= &b;
    r
}

/// One layer applied to a batch, returning `(X', R)` with `R = A X - B` the
/// pre-step residual.
pub(crate) fn fbs_step_batch_with_residual(
    a: ArrayView2<f64>,
    alpha: f64,
    lambda: f64,
    h: f64,
    b: ArrayView2<f64>,
    x: ArrayView2<f64>,
    reg: &Regularizer,
) -> (Array2<f64>, Array2<f64>) {
    let r = residual(a, x, b);
    let grad = a.t().dot(&r);
    let c = h * alpha;
    let rho = c * lambda;
    let mut out = x.to_owned();
    if rho == 0.0 {
        Zip::from(&mut out).and(&grad).for_each(|o, &g| *o -= c * g);
    } else {
        Zip::from(&mut out)
            .and(&grad)
            .for_each(|o, &g| *o = reg.prox_scalar(rho, *o - c * g));
    }
    (out, r)
}

/// One FBS layer on a batch of column states.
pub fn fbs_step_batch(
    a: ArrayView2<f64>,
    alpha: f64,
    lambda: f64,
    h: f64,
    b: ArrayView2<f64>,
    x: ArrayView2<f64>,
    reg: &Regularizer,
) -> Result<Array2<f64>> {
    check_layer(a, alpha, lambda, h, b.nrows(), x.nrows())?;
    if b.ncols() != x.ncols() {
        return Err(Error::dim(format!(
            "batch of {} observations for {} states",
            b.ncols(),
            x.ncols()
        )));
    }
    let (out, _) = fbs_step_batch_with_residual(a, alpha, lambda, h, b, x, reg);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("layer output is not finite"));
    }
    Ok(out)
}

fn column(v: ArrayView1<f64>) -> ArrayView2<f64> {
    v.insert_axis(Axis(1))
}

/// `prox_{h alpha lambda R}(x - h alpha A^T (A x - b))`: the resolvent form
/// of the implicit inclusion step.
pub fn fbs_step(
    a: ArrayView2<f64>,
    alpha: f64,
    lambda: f64,
    h: f64,
    b: ArrayView1<f64>,
    x: ArrayView1<f64>,
    reg: &Regularizer,
) -> Result<Array1<f64>> {
    check_finite(x, "state")?;
    check_finite(b, "observation")?;
    let out = fbs_step_batch(a, alpha, lambda, h, column(b), column(x), reg)?;
    Ok(out.index_axis_move(Axis(1), 0))
}

pub fn fbs_forward(
    params: &NetworkParams,
    x0: ArrayView1<f64>,
    b: ArrayView1<f64>,
    reg: &Regularizer,
) -> Result<Trajectory> {
    params.validate()?;
    check_finite(x0, "initial state")?;
    check_finite(b, "observation")?;
    let h = params.step();
    let mut states = Vec::with_capacity(params.depth() + 1);
    states.push(x0.to_owned());
    for k in 0..params.depth() {
        let next = fbs_step(
            params.a[k].view(),
            params.alpha[k],
            params.lambda[k],
            h,
            b,
            states[k].view(),
            reg,
        )
        .map_err(|e| e.at_layer(k))?;
        states.push(next);
    }
    Ok(Trajectory {
        horizon: params.horizon,
        states,
    })
}

/// Terminal states of a batch of samples; columns of `x0` and `b` are samples.
pub fn fbs_forward_batch(
    params: &NetworkParams,
    x0: ArrayView2<f64>,
    b: ArrayView2<f64>,
    reg: &Regularizer,
) -> Result<Array2<f64>> {
    let h = params.step();
    let mut x = x0.to_owned();
    for k in 0..params.depth() {
        x = fbs_step_batch(
            params.a[k].view(),
            params.alpha[k],
            params.lambda[k],
            h,
            b,
            x.view(),
            reg,
        )
        .map_err(|e| e.at_layer(k))?;
    }
    Ok(x)
}

/// One LISTA layer on a batch: soft-threshold at `h theta` of
/// `X - h (W1 X - W2 B)`.
pub(crate) fn lista_step_batch(p: &ListaParams, b: ArrayView2<f64>, x: ArrayView2<f64>) -> Array2<f64> {
    let h = p.step();
    let tau = h * p.theta;
    let mut drive = p.w1.dot(&x);
    drive -= &p.w2.dot(&b);
    let mut out = x.to_owned();
    Zip::from(&mut out).and(&drive).for_each(|o, &d| {
        let z = *o - h * d;
        *o = if z > tau {
            z - tau
        } else if z < -tau {
            z + tau
        } else {
            0.0
        };
    });
    out
}

fn check_lista_dims(p: &ListaParams, x_rows: usize, b_rows: usize) -> Result<()> {
    p.validate()?;
    if x_rows != p.w1.nrows() || b_rows != p.w2.ncols() {
        return Err(Error::dim(format!(
            "LISTA expects x in R^{} and b in R^{}, got {x_rows} and {b_rows}",
            p.w1.nrows(),
            p.w2.ncols()
        )));
    }
    Ok(())
}

pub fn lista_forward(p: &ListaParams, x0: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<Trajectory> {
    check_lista_dims(p, x0.len(), b.len())?;
    check_finite(x0, "initial state")?;
    check_finite(b, "observation")?;
    let mut states = Vec::with_capacity(p.depth + 1);
    states.push(x0.to_owned());
    for k in 0..p.depth {
        let next = lista_step_batch(p, column(b), column(states[k].view())).index_axis_move(Axis(1), 0);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("LISTA layer output is not finite").at_layer(k));
        }
        states.push(next);
    }
    Ok(Trajectory {
        horizon: p.horizon,
        states,
    })
}

pub fn lista_forward_batch(p: &ListaParams, x0: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_lista_dims(p, x0.nrows(), b.nrows())?;
    let mut x = x0.to_owned();
    for k in 0..p.depth {
        x = lista_step_batch(p, b, x.view());
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("LISTA layer output is not finite").at_layer(k));
        }
    }
    Ok(x)
}
