use ndarray::{Array1, Array2};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::{Dataset, GenMeta, Sample};

/// Parameters of a synthetic sparse-recovery dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSpec {
    pub m: usize,
    pub n: usize,
    pub train: usize,
    pub val: usize,
    pub sparsity: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec {
            m: 32,
            n: 128,
            train: 512,
            val: 64,
            sparsity: 0.1,
            noise: 0.01,
            seed: 7,
        }
    }
}

impl DataSpec {
    /// The full-size configuration: `m = 256`, `n = 1024`, 16384 + 2048 samples.
    pub fn full_scale() -> Self {
        DataSpec {
            m: 256,
            n: 1024,
            train: 16384,
            val: 2048,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::domain("m and n must be positive"));
        }
        if self.train + self.val == 0 {
            return Err(Error::domain("dataset needs at least one sample"));
        }
        if !(self.sparsity > 0.0 && self.sparsity <= 1.0) {
            return Err(Error::domain(format!(
                "sparsity must be in (0, 1], got {}",
                self.sparsity
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::domain(format!("noise must be ≥ 0, got {}", self.noise)));
        }
        Ok(())
    }

    pub fn nonzeros(&self) -> usize {
        ((self.sparsity * self.n as f64).ceil() as usize).clamp(1, self.n)
    }
}

/// Observations `b_j = A y_j + eps_j` of sparse `y_j` through a fixed Gaussian
/// matrix with entries of variance `1/m`; zero initial states.
///
/// Everything is drawn from one ChaCha8 stream seeded by `spec.seed`: first
/// `A` row by row, then per sample the support, its values, and the noise.
pub fn gen_dataset(spec: &DataSpec) -> Result<Dataset> {
    spec.validate()?;
    if spec.m > spec.n {
        log::warn!(
            "m = {} exceeds n = {}; the recovery problem is overdetermined",
            spec.m,
            spec.n
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let scale = 1.0 / (spec.m as f64).sqrt();
    let a = Array2::from_shape_simple_fn((spec.m, spec.n), || {
        let z: f64 = rng.sample(StandardNormal);
        z * scale
    });
    let k = spec.nonzeros();
    let total = spec.train + spec.val;
    let mut samples = Vec::with_capacity(total);
    for _ in 0..total {
        let mut y = Array1::<f64>::zeros(spec.n);
        for i in index::sample(&mut rng, spec.n, k) {
            y[i] = rng.sample(StandardNormal);
        }
        let mut b = a.dot(&y);
        if spec.noise > 0.0 {
            for bi in b.iter_mut() {
                let e: f64 = rng.sample(StandardNormal);
                *bi += spec.noise * e;
            }
        }
        samples.push(Sample {
            x0: Array1::zeros(spec.n),
            b,
            y,
        });
    }
    Dataset::new(
        samples,
        spec.train,
        GenMeta {
            a_true: a,
            sparsity: spec.sparsity,
            noise_sigma: spec.noise,
            seed: spec.seed,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_single_spike_is_a_scaled_column() {
        let spec = DataSpec {
            m: 6,
            n: 20,
            train: 5,
            val: 2,
            sparsity: 0.05,
            noise: 0.0,
            seed: 1,
        };
        assert_eq!(spec.nonzeros(), 1);
        let d = gen_dataset(&spec).unwrap();
        assert_eq!(d.train().len(), 5);
        assert_eq!(d.val().len(), 2);
        for s in &d.samples {
            let nz: Vec<usize> = (0..20).filter(|&i| s.y[i] != 0.0).collect();
            assert_eq!(nz.len(), 1);
            let col = d.meta.a_true.column(nz[0]).mapv(|v| v * s.y[nz[0]]);
            assert_eq!(s.b, col);
            assert!(s.x0.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn same_seed_same_data() {
        let spec = DataSpec {
            train: 30,
            val: 4,
            ..Default::default()
        };
        assert_eq!(gen_dataset(&spec).unwrap(), gen_dataset(&spec).unwrap());
        let other = DataSpec { seed: 8, ..spec };
        assert_ne!(gen_dataset(&spec).unwrap(), gen_dataset(&other).unwrap());
    }

    #[test]
    fn rejects_bad_specs() {
        for bad in [
            DataSpec {
                sparsity: 0.0,
                ..Default::default()
            },
            DataSpec {
                sparsity: 1.5,
                ..Default::default()
            },
            DataSpec {
                m: 0,
                ..Default::default()
            },
            DataSpec {
                noise: -0.1,
                ..Default::default()
            },
        ] {
            assert!(gen_dataset(&bad).is_err());
        }
    }

    #[test]
    fn full_scale_spec_is_accepted() {
        let spec = DataSpec::full_scale();
        assert!(spec.validate().is_ok());
        assert_eq!((spec.m, spec.n, spec.train, spec.val), (256, 1024, 16384, 2048));
    }
}
