mod common;

use common::*;
use fbs_unroll::dynamics::*;
use fbs_unroll::Regularizer;
use ndarray::{Array1, Array2};

/// `exp(m)` by scaling and squaring of a truncated Taylor series.
fn expm(m: &Array2<f64>) -> Array2<f64> {
    let norm = m.iter().map(|v| v.abs()).sum::<f64>();
    let s = (norm / 0.25).log2().ceil().max(0.0) as i32;
    let scaled = m / 2f64.powi(s);
    let n = m.nrows();
    let mut term = Array2::<f64>::eye(n);
    let mut sum = Array2::<f64>::eye(n);
    for k in 1..30 {
        term = term.dot(&scaled) / k as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = sum.dot(&sum);
    }
    sum
}

/// Gaussian elimination with partial pivoting.
fn solve(a: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = b.len();
    let mut m = a.clone();
    let mut x = b.clone();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| m[[i, c]].abs().total_cmp(&m[[j, c]].abs()))
            .unwrap();
        for k in 0..n {
            m.swap([c, k], [p, k]);
        }
        x.swap(c, p);
        for r in c + 1..n {
            let f = m[[r, c]] / m[[c, c]];
            for k in c..n {
                m[[r, k]] -= f * m[[c, k]];
            }
            x[r] -= f * x[c];
        }
    }
    for c in (0..n).rev() {
        let s: f64 = (c + 1..n).map(|k| m[[c, k]] * x[k]).sum();
        x[c] = (x[c] - s) / m[[c, c]];
    }
    x
}

#[test]
fn linear_limit_matches_matrix_exponential() {
    let mut r = rng(10);
    for _ in 0..5 {
        let a = gauss_mat(&mut r, 4, 3, 0.6);
        let alpha = 1.7;
        let x0 = gauss_vec(&mut r, 3);
        let b = gauss_vec(&mut r, 4);
        let u = Control::new(1.0, vec![a.clone()], vec![alpha], vec![0.0]).unwrap();
        let sol = limit_solve(&u, x0.view(), b.view(), &Regularizer::l1(1.0), 2048).unwrap();

        let ata = a.t().dot(&a);
        let e = expm(&(&ata * -alpha));
        let xstar = solve(&ata, &a.t().dot(&b));
        let exact = e.dot(&x0) + (Array2::<f64>::eye(3) - &e).dot(&xstar);
        let err = l2(&(&sol.terminal - &exact));
        assert!(err <= 10.0 * sol.err_est, "{err} vs err_est {}", sol.err_est);
        assert!(sol.err_est > 0.0);
    }
}

#[test]
fn frozen_limit_keeps_initial_state() {
    let mut r = rng(11);
    let u = Control::new(1.0, vec![gauss_mat(&mut r, 2, 3, 1.0); 4], vec![0.0; 4], vec![0.3; 4]).unwrap();
    let x0 = gauss_vec(&mut r, 3);
    let sol = limit_solve(&u, x0.view(), gauss_vec(&mut r, 2).view(), &Regularizer::zero(), 64).unwrap();
    assert_eq!(sol.terminal, x0);
    assert_eq!(sol.err_est, 0.0);
}

#[test]
fn error_estimate_halves_under_doubling() {
    let mut r = rng(12);
    let (a0, a1) = (gauss_mat(&mut r, 3, 5, 0.5), gauss_mat(&mut r, 3, 5, 0.3));
    let u = smooth_control(64, &a0, &a1);
    let x0 = gauss_vec(&mut r, 5);
    let b = gauss_vec(&mut r, 3);
    let est: Vec<f64> = [256, 512, 1024, 2048]
        .iter()
        .map(|&n| {
            limit_solve(&u, x0.view(), b.view(), &Regularizer::l1(1.0), n)
                .unwrap()
                .err_est
        })
        .collect();
    for w in est.windows(2) {
        let ratio = w[1] / w[0];
        assert!((ratio - 0.5).abs() <= 0.2, "{est:?}");
    }
}

#[test]
fn reference_depth_is_aligned_to_the_grid() {
    let mut r = rng(13);
    let u = random_control(&mut r, 6, 2, 2, 1.0);
    assert_eq!(aligned_depth(&u, 100), 102);
    let x0 = gauss_vec(&mut r, 2);
    let b = gauss_vec(&mut r, 2);
    let sol = limit_solve(&u, x0.view(), b.view(), &Regularizer::l1(1.0), 100).unwrap();
    assert_eq!(sol.trajectory.depth(), 102);
    assert!(limit_solve(&u, x0.view(), b.view(), &Regularizer::l1(1.0), 1).is_err());
}

#[test]
fn interpolation_hits_nodes_and_midpoints() {
    let mut r = rng(14);
    let p = random_params(&mut r, 5, 2, 3, 2.0);
    let x0 = gauss_vec(&mut r, 3);
    let traj = fbs_forward(&p, x0.view(), gauss_vec(&mut r, 2).view(), &Regularizer::l1(1.0)).unwrap();
    assert_eq!(interpolate_pl(&traj, 0.0).unwrap(), traj.states[0]);
    assert_eq!(interpolate_pl(&traj, 2.0).unwrap(), traj.states[5]);
    let mid = interpolate_pl(&traj, 0.4 * 2.5).unwrap();
    let want = (&traj.states[2] + &traj.states[3]) / 2.0;
    assert!((mid - want).iter().all(|d| d.abs() < 1e-14));
    assert!(interpolate_pl(&traj, 2.1).is_err());
}
