#![allow(dead_code)]

use fbs_unroll::dynamics::{Control, NetworkParams};
use fbs_unroll::learning::{Dataset, GenMeta, Sample};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss_vec(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| rng.sample(StandardNormal))
}

pub fn gauss_mat(rng: &mut ChaCha8Rng, m: usize, n: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((m, n), |_| scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn random_params(rng: &mut ChaCha8Rng, depth: usize, m: usize, n: usize, horizon: f64) -> NetworkParams {
    NetworkParams::new(
        horizon,
        (0..depth).map(|_| gauss_mat(rng, m, n, 0.5)).collect(),
        (0..depth).map(|_| rng.random_range(0.1..2.0)).collect(),
        (0..depth).map(|_| rng.random_range(0.0..0.5)).collect(),
    )
    .unwrap()
}

pub fn random_control(rng: &mut ChaCha8Rng, grid: usize, m: usize, n: usize, horizon: f64) -> Control {
    let p = random_params(rng, grid, m, n, horizon);
    Control::new(p.horizon, p.a, p.alpha, p.lambda).unwrap()
}

/// A control that is Lipschitz in time, sampled at cell midpoints.
pub fn smooth_control(grid: usize, a0: &Array2<f64>, a1: &Array2<f64>) -> Control {
    Control::sample(1.0, grid, |t| {
        let s = (std::f64::consts::PI * t).sin();
        (
            a0 + &(a1 * s),
            1.0 + 0.5 * (2.0 * std::f64::consts::PI * t).cos(),
            0.05 + 0.05 * t,
        )
    })
    .unwrap()
}

pub fn random_samples(rng: &mut ChaCha8Rng, count: usize, m: usize, n: usize) -> Vec<Sample> {
    (0..count)
        .map(|_| Sample {
            x0: gauss_vec(rng, n) * 0.1,
            b: gauss_vec(rng, m),
            y: gauss_vec(rng, n),
        })
        .collect()
}

pub fn dataset(samples: Vec<Sample>, train: usize, a_true: Array2<f64>) -> Dataset {
    Dataset::new(
        samples,
        train,
        GenMeta {
            a_true,
            sparsity: 1.0,
            noise_sigma: 0.0,
            seed: 0,
        },
    )
    .unwrap()
}

pub fn l2(v: &Array1<f64>) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest singular value from the eigenvalues of `A^T A` by cyclic Jacobi
/// rotations.
pub fn spectral_norm_jacobi(a: &Array2<f64>) -> f64 {
    let mut s = a.t().dot(a);
    let n = s.nrows();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| s[[i, j]] * s[[i, j]])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if s[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (s[[q, q]] - s[[p, p]]) / (2.0 * s[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let (skp, skq) = (s[[k, p]], s[[k, q]]);
                    s[[k, p]] = c * skp - sn * skq;
                    s[[k, q]] = sn * skp + c * skq;
                }
                for k in 0..n {
                    let (spk, sqk) = (s[[p, k]], s[[q, k]]);
                    s[[p, k]] = c * spk - sn * sqk;
                    s[[q, k]] = sn * spk + c * sqk;
                }
            }
        }
    }
    (0..n).map(|i| s[[i, i]]).fold(0.0, f64::max).sqrt()
}

pub struct GradFixture {
    pub params: NetworkParams,
    pub samples: Vec<Sample>,
    pub reg: fbs_unroll::Regularizer,
    pub cfg: fbs_unroll::learning::ObjectiveConfig,
}

/// Smallest distance of any prox input to a soft-threshold kink.
pub fn kink_margin(p: &NetworkParams, samples: &[Sample], scale: f64) -> f64 {
    let h = p.horizon / p.a.len() as f64;
    let mut margin = f64::INFINITY;
    for s in samples {
        let mut x = s.x0.clone();
        for k in 0..p.a.len() {
            let c = h * p.alpha[k];
            let t = c * p.lambda[k] * scale;
            let v = &x - &(p.a[k].t().dot(&(p.a[k].dot(&x) - &s.b)) * c);
            margin = v.iter().map(|vi| (vi.abs() - t).abs()).fold(margin, f64::min);
            x = v.mapv(|vi| {
                if vi > t {
                    vi - t
                } else if vi < -t {
                    vi + t
                } else {
                    0.0
                }
            });
        }
    }
    margin
}

/// Random L1 problem with `n <= 8`, `m <= 4`, `N <= 4` whose prox inputs all
/// stay at least `margin` away from a kink.
pub fn grad_fixture(rng: &mut ChaCha8Rng, margin: f64) -> GradFixture {
    use fbs_unroll::learning::{ObjectiveConfig, Psi};
    loop {
        let n = rng.random_range(2..=8);
        let m = rng.random_range(1..=4);
        let depth = rng.random_range(1..=4);
        let params = random_params(rng, depth, m, n, 1.0);
        let samples = random_samples(rng, 3, m, n);
        let scale = 1.0;
        if kink_margin(&params, &samples, scale) < margin {
            continue;
        }
        let cfg = ObjectiveConfig {
            beta1: rng.random_range(0.0..0.1),
            beta2: rng.random_range(0.0..0.1),
            beta3: rng.random_range(0.0..0.1),
            pnorm: [1.5, 2.0, 3.0][rng.random_range(0..3)],
            psi: if rng.random_bool(0.5) {
                Psi::Identity
            } else {
                Psi::Scaled(0.7)
            },
        };
        return GradFixture {
            params,
            samples,
            reg: fbs_unroll::Regularizer::l1(scale),
            cfg,
        };
    }
}

/// Max relative error between the adjoint gradient and central differences
/// with step `step`. Relative errors are taken against `max(|g|, |fd|, 1e-3)`
/// so that entries that are zero up to rounding are compared absolutely.
pub fn max_fd_rel_error(f: &GradFixture, step: f64) -> f64 {
    use fbs_unroll::learning::{grad_objective, objective_discrete};
    let (_, g) = grad_objective(&f.params, &f.samples, &f.reg, &f.cfg).unwrap();
    let obj = |p: &NetworkParams| objective_discrete(p, &f.samples, &f.reg, &f.cfg).unwrap();
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-3);
    let mut worst: f64 = 0.0;
    let depth = f.params.a.len();
    for k in 0..depth {
        for idx in 0..f.params.a[k].len() {
            let (i, j) = (idx / f.params.a[k].ncols(), idx % f.params.a[k].ncols());
            let mut pp = f.params.clone();
            pp.a[k][[i, j]] += step;
            let mut pm = f.params.clone();
            pm.a[k][[i, j]] -= step;
            worst = worst.max(rel(g.a[k][[i, j]], (obj(&pp) - obj(&pm)) / (2.0 * step)));
        }
        let mut pp = f.params.clone();
        pp.alpha[k] += step;
        let mut pm = f.params.clone();
        pm.alpha[k] -= step;
        worst = worst.max(rel(g.alpha[k], (obj(&pp) - obj(&pm)) / (2.0 * step)));
        let mut pp = f.params.clone();
        pp.lambda[k] += step;
        let mut pm = f.params.clone();
        pm.lambda[k] = (pm.lambda[k] - step).max(0.0);
        let width = pp.lambda[k] - pm.lambda[k];
        worst = worst.max(rel(g.lambda[k], (obj(&pp) - obj(&pm)) / width));
    }
    worst
}
