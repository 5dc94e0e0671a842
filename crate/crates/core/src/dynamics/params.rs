//! Layer parameters, piecewise-constant controls, and the operators that map
//! between them.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::linalg::spectral_norm;

/// Read access shared by layer parameters and piecewise-constant controls:
/// both are `cells` values of `(A, alpha, lambda)` on a uniform partition of
/// `[0, horizon]`.
pub trait CellParams {
    fn horizon(&self) -> f64;
    fn cells(&self) -> usize;
    fn a(&self, k: usize) -> &Array2<f64>;
    fn alpha(&self, k: usize) -> f64;
    fn lambda(&self, k: usize) -> f64;

    fn dims(&self) -> (usize, usize) {
        self.a(0).dim()
    }

    fn cell_width(&self) -> f64 {
        self.horizon() / self.cells() as f64
    }
}

/// Learnable parameters of an `N`-layer network with horizon `T`; the layer
/// step is `h = T / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub horizon: f64,
    pub a: Vec<Array2<f64>>,
    pub alpha: Vec<f64>,
    pub lambda: Vec<f64>,
}

/// A time-dependent parameter triple, constant on each of `grid` uniform cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Control {
    pub horizon: f64,
    pub a: Vec<Array2<f64>>,
    pub alpha: Vec<f64>,
    pub lambda: Vec<f64>,
}

macro_rules! impl_cells {
    ($t:ty) => {
        impl CellParams for $t {
            fn horizon(&self) -> f64 {
                self.horizon
            }
            fn cells(&self) -> usize {
                self.a.len()
            }
            fn a(&self, k: usize) -> &Array2<f64> {
                &self.a[k]
            }
            fn alpha(&self, k: usize) -> f64 {
                self.alpha[k]
            }
            fn lambda(&self, k: usize) -> f64 {
                self.lambda[k]
            }
        }
    };
}

impl_cells!(NetworkParams);
impl_cells!(Control);

fn validate_cells(what: &str, horizon: f64, a: &[Array2<f64>], alpha: &[f64], lambda: &[f64]) -> Result<()> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::domain(format!(
            "{what}: horizon must be positive, got {horizon}"
        )));
    }
    if a.is_empty() {
        return Err(Error::domain(format!("{what}: at least one cell is required")));
    }
    if alpha.len() != a.len() || lambda.len() != a.len() {
        return Err(Error::dim(format!(
            "{what}: {} matrices, {} alphas, {} lambdas",
            a.len(),
            alpha.len(),
            lambda.len()
        )));
    }
    let dim = a[0].dim();
    for (k, ak) in a.iter().enumerate() {
        if ak.dim() != dim {
            return Err(Error::dim(format!(
                "{what}: cell {k} matrix is {:?}, expected {dim:?}",
                ak.dim()
            )));
        }
        if ak.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("{what}: cell {k} matrix is not finite")));
        }
    }
    for (k, (&al, &la)) in alpha.iter().zip(lambda).enumerate() {
        if !(al.is_finite() && la.is_finite()) {
            return Err(Error::numeric(format!("{what}: cell {k} scalars are not finite")));
        }
        if al < 0.0 || la < 0.0 {
            return Err(Error::domain(format!(
                "{what}: cell {k} has alpha = {al}, lambda = {la}; both must be ≥ 0"
            )));
        }
    }
    Ok(())
}

impl NetworkParams {
    pub fn new(horizon: f64, a: Vec<Array2<f64>>, alpha: Vec<f64>, lambda: Vec<f64>) -> Result<Self> {
        validate_cells("network params", horizon, &a, &alpha, &lambda)?;
        Ok(NetworkParams {
            horizon,
            a,
            alpha,
            lambda,
        })
    }

    /// Same `(A, alpha, lambda)` on every layer.
    pub fn constant(horizon: f64, depth: usize, a: Array2<f64>, alpha: f64, lambda: f64) -> Result<Self> {
        if depth == 0 {
            return Err(Error::domain("network depth must be ≥ 1"));
        }
        Self::new(horizon, vec![a; depth], vec![alpha; depth], vec![lambda; depth])
    }

    pub fn validate(&self) -> Result<()> {
        validate_cells("network params", self.horizon, &self.a, &self.alpha, &self.lambda)
    }

    pub fn depth(&self) -> usize {
        self.a.len()
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.depth() as f64
    }

    /// Layer-wise difference `self - other` with the sign constraint dropped;
    /// used for parameter distances.
    pub fn difference(&self, other: &NetworkParams) -> Result<Control> {
        if self.depth() != other.depth() || self.dims() != other.dims() {
            return Err(Error::dim("parameter sets differ in depth or layer shape"));
        }
        Ok(Control {
            horizon: self.horizon,
            a: self.a.iter().zip(&other.a).map(|(x, y)| x - y).collect(),
            alpha: self.alpha.iter().zip(&other.alpha).map(|(x, y)| x - y).collect(),
            lambda: self.lambda.iter().zip(&other.lambda).map(|(x, y)| x - y).collect(),
        })
    }
}

impl Control {
    pub fn new(horizon: f64, a: Vec<Array2<f64>>, alpha: Vec<f64>, lambda: Vec<f64>) -> Result<Self> {
        validate_cells("control", horizon, &a, &alpha, &lambda)?;
        Ok(Control {
            horizon,
            a,
            alpha,
            lambda,
        })
    }

    /// Samples `f(t)` at the midpoint of each of `grid` cells.
    pub fn sample<F>(horizon: f64, grid: usize, f: F) -> Result<Self>
    where
        F: Fn(f64) -> (Array2<f64>, f64, f64),
    {
        if grid == 0 {
            return Err(Error::domain("control grid must be ≥ 1"));
        }
        let w = horizon / grid as f64;
        let (mut a, mut alpha, mut lambda) = (Vec::new(), Vec::new(), Vec::new());
        for k in 0..grid {
            let (ak, al, la) = f((k as f64 + 0.5) * w);
            a.push(ak);
            alpha.push(al);
            lambda.push(la);
        }
        Self::new(horizon, a, alpha, lambda)
    }

    pub fn grid(&self) -> usize {
        self.a.len()
    }

    /// Index of the partition cell containing `t`; the last cell is closed.
    pub fn cell_index(&self, t: f64) -> Result<usize> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::domain(format!("t = {t} outside [0, {}]", self.horizon)));
        }
        let k = (t / self.horizon * self.grid() as f64).floor() as usize;
        Ok(k.min(self.grid() - 1))
    }

    /// Splits every cell into `factor` equal cells.
    pub fn refine(&self, factor: usize) -> Control {
        assert!(factor >= 1);
        let rep = |k: usize| k / factor;
        let cells = self.grid() * factor;
        Control {
            horizon: self.horizon,
            a: (0..cells).map(|k| self.a[rep(k)].clone()).collect(),
            alpha: (0..cells).map(|k| self.alpha[rep(k)]).collect(),
            lambda: (0..cells).map(|k| self.lambda[rep(k)]).collect(),
        }
    }
}

/// Cell averages of `u` on `depth` uniform cells.
///
/// The overlap between cell `k` of the output and cell `j` of `u` is measured
/// in units of `T / (M N)`, so all weights are exact rationals and a cell that
/// is fully covered by one input cell copies it exactly.
pub fn project_control(u: &impl CellParams, depth: usize) -> Result<NetworkParams> {
    if depth == 0 {
        return Err(Error::domain("projection depth must be ≥ 1"));
    }
    let grid = u.cells();
    let (m, n) = u.dims();
    let mut a = Vec::with_capacity(depth);
    let mut alpha = Vec::with_capacity(depth);
    let mut lambda = Vec::with_capacity(depth);
    for k in 0..depth {
        // target cell k spans [k*grid, (k+1)*grid) in the common unit
        let (t0, t1) = (k * grid, (k + 1) * grid);
        let j0 = t0 / depth;
        let j1 = (t1 - 1) / depth;
        let mut ak = Array2::<f64>::zeros((m, n));
        let (mut al, mut la) = (0.0, 0.0);
        for j in j0..=j1 {
            let (s0, s1) = (j * depth, (j + 1) * depth);
            let overlap = t1.min(s1).saturating_sub(t0.max(s0));
            if overlap == 0 {
                continue;
            }
            let w = overlap as f64 / grid as f64;
            ak.scaled_add(w, u.a(j));
            al += w * u.alpha(j);
            la += w * u.lambda(j);
        }
        a.push(ak);
        alpha.push(al);
        lambda.push(la);
    }
    Ok(NetworkParams {
        horizon: u.horizon(),
        a,
        alpha,
        lambda,
    })
}

/// Piecewise-constant extension of layer values to a control on the same grid.
pub fn extend_params(p: &NetworkParams) -> Control {
    Control {
        horizon: p.horizon,
        a: p.a.clone(),
        alpha: p.alpha.clone(),
        lambda: p.lambda.clone(),
    }
}

/// Parameter norm `(cell_width * sum_k (|A_k|_2 + |alpha_k| + |lambda_k|)^p)^(1/p)`
/// with the spectral norm on matrices; `pnorm = inf` gives the max over cells.
pub fn param_norm_lp(p: &impl CellParams, pnorm: f64) -> Result<f64> {
    if pnorm.is_nan() || pnorm < 1.0 {
        return Err(Error::domain(format!("norm exponent must be ≥ 1, got {pnorm}")));
    }
    let cell_norm = |k: usize| spectral_norm(p.a(k).view()) + p.alpha(k).abs() + p.lambda(k).abs();
    if pnorm.is_infinite() {
        return Ok((0..p.cells()).map(cell_norm).fold(0.0, f64::max));
    }
    let sum: f64 = (0..p.cells()).map(|k| cell_norm(k).powf(pnorm)).sum();
    Ok((p.cell_width() * sum).powf(1.0 / pnorm))
}

/// `L^p` distance between two controls, evaluated on the common refinement
/// of their grids.
pub fn control_distance_lp(u: &Control, v: &Control, pnorm: f64) -> Result<f64> {
    if u.horizon != v.horizon || u.dims() != v.dims() {
        return Err(Error::dim("controls differ in horizon or matrix shape"));
    }
    let common = lcm(u.grid(), v.grid());
    let (ur, vr) = (u.refine(common / u.grid()), v.refine(common / v.grid()));
    let diff = Control {
        horizon: u.horizon,
        a: ur.a.iter().zip(&vr.a).map(|(x, y)| x - y).collect(),
        alpha: ur.alpha.iter().zip(&vr.alpha).map(|(x, y)| x - y).collect(),
        lambda: ur.lambda.iter().zip(&vr.lambda).map(|(x, y)| x - y).collect(),
    };
    param_norm_lp(&diff, pnorm)
}

/// Largest refinement factor tried when aligning a shift with the grid.
const MAX_SHIFT_REFINE: usize = 64;

/// `(tau_h u)(t) = u(t + h)` on `[0, T]`, zero where `t + h` leaves `[0, T]`.
///
/// The result lives on the finest grid `M * r` (`r <= 64`) on which `h` is a
/// whole number of cells, which makes it exact. When no such `r` exists the
/// shifted function is cell-averaged onto the `M * 64` grid.
pub fn shift_control(u: &Control, h: f64) -> Result<Control> {
    if !h.is_finite() {
        return Err(Error::numeric(format!("shift must be finite, got {h}")));
    }
    let (m, n) = u.dims();
    let zero_cell = || (Array2::<f64>::zeros((m, n)), 0.0, 0.0);
    if h == 0.0 {
        return Ok(u.clone());
    }
    if h.abs() >= u.horizon {
        let cells = u.grid();
        return Ok(Control {
            horizon: u.horizon,
            a: vec![Array2::zeros((m, n)); cells],
            alpha: vec![0.0; cells],
            lambda: vec![0.0; cells],
        });
    }
    let aligned = (1..=MAX_SHIFT_REFINE).find_map(|r| {
        let cells = h * (u.grid() * r) as f64 / u.horizon;
        let rounded = cells.round();
        ((cells - rounded).abs() <= 1e-9 * cells.abs().max(1.0)).then_some((r, rounded as i64))
    });
    match aligned {
        Some((r, offset)) => {
            let fine = u.refine(r);
            let cells = fine.grid() as i64;
            let mut out = Control {
                horizon: u.horizon,
                a: Vec::with_capacity(cells as usize),
                alpha: Vec::with_capacity(cells as usize),
                lambda: Vec::with_capacity(cells as usize),
            };
            for k in 0..cells {
                let src = k + offset;
                let (a, al, la) = if (0..cells).contains(&src) {
                    let s = src as usize;
                    (fine.a[s].clone(), fine.alpha[s], fine.lambda[s])
                } else {
                    zero_cell()
                };
                out.a.push(a);
                out.alpha.push(al);
                out.lambda.push(la);
            }
            Ok(out)
        }
        None => {
            let fine = u.refine(MAX_SHIFT_REFINE);
            let cells = fine.grid();
            let w = u.horizon / cells as f64;
            // fractional offset in cells: each output cell mixes two source cells
            let shift_cells = h / w;
            let base = shift_cells.floor();
            let frac = shift_cells - base;
            let base = base as i64;
            let get = |s: i64| {
                if (0..cells as i64).contains(&s) {
                    let s = s as usize;
                    (fine.a[s].clone(), fine.alpha[s], fine.lambda[s])
                } else {
                    zero_cell()
                }
            };
            let mut out = Control {
                horizon: u.horizon,
                a: Vec::with_capacity(cells),
                alpha: Vec::with_capacity(cells),
                lambda: Vec::with_capacity(cells),
            };
            for k in 0..cells as i64 {
                let (a0, al0, la0) = get(k + base);
                let (a1, al1, la1) = get(k + base + 1);
                out.a.push(a0 * (1.0 - frac) + a1 * frac);
                out.alpha.push(al0 * (1.0 - frac) + al1 * frac);
                out.lambda.push(la0 * (1.0 - frac) + la1 * frac);
            }
            Ok(out)
        }
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// Parameters of an `N`-layer LISTA network sharing `(W1, W2, theta)` across
/// layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ListaParams {
    pub horizon: f64,
    pub depth: usize,
    /// `n x n`
    pub w1: Array2<f64>,
    /// `n x m`
    pub w2: Array2<f64>,
    pub theta: f64,
}

impl ListaParams {
    pub fn new(horizon: f64, depth: usize, w1: Array2<f64>, w2: Array2<f64>, theta: f64) -> Result<Self> {
        let p = ListaParams {
            horizon,
            depth,
            w1,
            w2,
            theta,
        };
        p.validate()?;
        Ok(p)
    }

    /// The substitution `W1 = alpha A^T A`, `W2 = alpha A^T`, `theta = alpha lambda`.
    pub fn from_fbs(horizon: f64, depth: usize, a: &Array2<f64>, alpha: f64, lambda: f64) -> Result<Self> {
        let w1 = a.t().dot(a) * alpha;
        let w2 = a.t().to_owned() * alpha;
        Self::new(horizon, depth, w1, w2, alpha * lambda)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::domain("LISTA horizon must be positive"));
        }
        if self.depth == 0 {
            return Err(Error::domain("LISTA depth must be ≥ 1"));
        }
        let n = self.w1.nrows();
        if self.w1.ncols() != n || self.w2.nrows() != n {
            return Err(Error::dim(format!(
                "LISTA weights: W1 is {:?}, W2 is {:?}",
                self.w1.dim(),
                self.w2.dim()
            )));
        }
        if self.theta.is_nan() || self.theta < 0.0 {
            return Err(Error::domain(format!("LISTA theta must be ≥ 0, got {}", self.theta)));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.depth as f64
    }
}
