use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};

/// One training pair `(b, y)` with its initial network state.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x0: Array1<f64>,
    pub b: Array1<f64>,
    pub y: Array1<f64>,
}

/// How a synthetic dataset was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct GenMeta {
    pub a_true: Array2<f64>,
    pub sparsity: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Samples in split order: the first `train_count` are training samples, the
/// remaining `val_count` are held out.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub m: usize,
    pub n: usize,
    pub samples: Vec<Sample>,
    pub train_count: usize,
    pub val_count: usize,
    pub meta: GenMeta,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, train_count: usize, meta: GenMeta) -> Result<Self> {
        let (m, n) = meta.a_true.dim();
        if m == 0 || n == 0 {
            return Err(Error::domain("dataset dimensions must be positive"));
        }
        if train_count > samples.len() {
            return Err(Error::domain(format!(
                "train split {train_count} exceeds {} samples",
                samples.len()
            )));
        }
        for (j, s) in samples.iter().enumerate() {
            if s.b.len() != m || s.y.len() != n || s.x0.len() != n {
                return Err(Error::dim(format!(
                    "sample {j}: b in R^{}, y in R^{}, x0 in R^{}; expected m = {m}, n = {n}",
                    s.b.len(),
                    s.y.len(),
                    s.x0.len()
                )));
            }
        }
        let val_count = samples.len() - train_count;
        Ok(Dataset {
            m,
            n,
            samples,
            train_count,
            val_count,
            meta,
        })
    }

    pub fn train(&self) -> &[Sample] {
        &self.samples[..self.train_count]
    }

    pub fn val(&self) -> &[Sample] {
        &self.samples[self.train_count..]
    }
}

/// Column-stacked `(X0, B, Y)` for a group of samples.
pub(crate) fn stack(samples: &[&Sample]) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let n = samples[0].x0.len();
    let m = samples[0].b.len();
    let cols = samples.len();
    let mut x0 = Array2::zeros((n, cols));
    let mut b = Array2::zeros((m, cols));
    let mut y = Array2::zeros((n, cols));
    for (j, s) in samples.iter().enumerate() {
        x0.index_axis_mut(Axis(1), j).assign(&s.x0);
        b.index_axis_mut(Axis(1), j).assign(&s.b);
        y.index_axis_mut(Axis(1), j).assign(&s.y);
    }
    (x0, b, y)
}

pub(crate) fn check_sample_dims(samples: &[&Sample], m: usize, n: usize) -> Result<()> {
    for (j, s) in samples.iter().enumerate() {
        if s.b.len() != m || s.x0.len() != n || s.y.len() != n {
            return Err(Error::dim(format!(
                "sample has b in R^{}, x0 in R^{}, y in R^{}; network expects m = {m}, n = {n}",
                s.b.len(),
                s.x0.len(),
                s.y.len()
            ))
            .at_sample(j));
        }
    }
    Ok(())
}
