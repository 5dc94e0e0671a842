//! Convex regularizers with closed-form proximal maps.
//!
//! Every shipped regularizer is separable, so the prox, its partial
//! derivatives and the selected subgradient are all computed coordinatewise.

use ndarray::{Array1, ArrayView1, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizerKind {
    L1,
    SquaredL2,
    Zero,
}

/// Growth bound on the subdifferential.
///
/// `Linear(m)` means every subgradient satisfies `|g| <= m |x|`, `Bounded(m)`
/// means `|g| <= m` everywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GrowthCase {
    Linear(f64),
    Bounded(f64),
}

impl GrowthCase {
    pub fn admits(&self, g_norm: f64, x_norm: f64, tol: f64) -> bool {
        match *self {
            GrowthCase::Linear(m) => g_norm <= m * x_norm + tol,
            GrowthCase::Bounded(m) => g_norm <= m + tol,
        }
    }
}

/// `scale * base(x)` where `base` is `|x|_1`, `|x|_2^2` or `0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRegularizer", into = "RawRegularizer")]
pub struct Regularizer {
    kind: RegularizerKind,
    scale: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegularizer {
    kind: RegularizerKind,
    #[serde(default = "default_scale")]
    scale: f64,
}

fn default_scale() -> f64 {
    1.0
}

impl TryFrom<RawRegularizer> for Regularizer {
    type Error = Error;

    fn try_from(raw: RawRegularizer) -> Result<Self> {
        Regularizer::new(raw.kind, raw.scale)
    }
}

impl From<Regularizer> for RawRegularizer {
    fn from(r: Regularizer) -> Self {
        RawRegularizer {
            kind: r.kind,
            scale: r.scale,
        }
    }
}

impl Regularizer {
    pub fn new(kind: RegularizerKind, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::domain(format!(
                "regularizer scale must be positive and finite, got {scale}"
            )));
        }
        Ok(Regularizer { kind, scale })
    }

    pub fn l1(scale: f64) -> Self {
        Self::new(RegularizerKind::L1, scale).expect("positive scale")
    }

    pub fn squared_l2(scale: f64) -> Self {
        Self::new(RegularizerKind::SquaredL2, scale).expect("positive scale")
    }

    pub fn zero() -> Self {
        Regularizer {
            kind: RegularizerKind::Zero,
            scale: 1.0,
        }
    }

    pub fn kind(&self) -> RegularizerKind {
        self.kind
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// The subgradient growth bound in dimension `n`.
    pub fn growth_case(&self, n: usize) -> GrowthCase {
        match self.kind {
            RegularizerKind::L1 => GrowthCase::Bounded((n as f64).sqrt() * self.scale),
            RegularizerKind::SquaredL2 => GrowthCase::Linear(2.0 * self.scale),
            RegularizerKind::Zero => GrowthCase::Bounded(0.0),
        }
    }

    pub fn value(&self, x: ArrayView1<f64>) -> f64 {
        match self.kind {
            RegularizerKind::L1 => self.scale * x.iter().map(|v| v.abs()).sum::<f64>(),
            RegularizerKind::SquaredL2 => self.scale * x.iter().map(|v| v * v).sum::<f64>(),
            RegularizerKind::Zero => 0.0,
        }
    }

    /// Coordinate prox `argmin_u scale*base(u) + (u - v)^2 / (2 rho)`.
    ///
    /// No argument checks; callers validate `rho >= 0`.
    #[inline]
    pub fn prox_scalar(&self, rho: f64, v: f64) -> f64 {
        match self.kind {
            RegularizerKind::L1 => {
                let t = rho * self.scale;
                if v > t {
                    v - t
                } else if v < -t {
                    v + t
                } else {
                    0.0
                }
            }
            RegularizerKind::SquaredL2 => v / (1.0 + 2.0 * rho * self.scale),
            RegularizerKind::Zero => v,
        }
    }

    /// Partial derivatives `(d out / d v, d out / d rho)` of the coordinate
    /// prox, expressed through its output `out = prox_scalar(rho, v)`.
    ///
    /// At the L1 kink (`out == 0`) both derivatives are taken as zero, except
    /// at `rho == 0` where the map is the identity.
    #[inline]
    pub fn prox_partials(&self, rho: f64, out: f64) -> (f64, f64) {
        match self.kind {
            RegularizerKind::L1 => {
                if out > 0.0 {
                    (1.0, -self.scale)
                } else if out < 0.0 {
                    (1.0, self.scale)
                } else if rho == 0.0 {
                    (1.0, 0.0)
                } else {
                    (0.0, 0.0)
                }
            }
            RegularizerKind::SquaredL2 => {
                let denom = 1.0 + 2.0 * rho * self.scale;
                (1.0 / denom, -2.0 * self.scale * out / denom)
            }
            RegularizerKind::Zero => (1.0, 0.0),
        }
    }

    /// Proximal map of `rho * R` at `v`.
    pub fn prox(&self, rho: f64, v: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_rho(rho)?;
        check_finite(v, "prox input")?;
        if rho == 0.0 {
            return Ok(v.to_owned());
        }
        Ok(v.mapv(|vi| self.prox_scalar(rho, vi)))
    }

    /// One element of the subdifferential at `x`; zero at L1 kinks.
    pub fn subgrad_select(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_finite(x, "subgradient input")?;
        Ok(match self.kind {
            RegularizerKind::L1 => x.mapv(|xi| {
                if xi > 0.0 {
                    self.scale
                } else if xi < 0.0 {
                    -self.scale
                } else {
                    0.0
                }
            }),
            RegularizerKind::SquaredL2 => x.mapv(|xi| 2.0 * self.scale * xi),
            RegularizerKind::Zero => Array1::zeros(x.len()),
        })
    }

    /// Whether `g` lies in the subdifferential at `x`, checked coordinatewise
    /// with slack `tol`.
    pub fn is_subgradient(&self, x: ArrayView1<f64>, g: ArrayView1<f64>, tol: f64) -> bool {
        if x.len() != g.len() {
            return false;
        }
        let s = self.scale;
        Zip::from(&x).and(&g).all(|&xi, &gi| match self.kind {
            RegularizerKind::L1 => {
                if xi > 0.0 {
                    (gi - s).abs() <= tol
                } else if xi < 0.0 {
                    (gi + s).abs() <= tol
                } else {
                    gi.abs() <= s + tol
                }
            }
            RegularizerKind::SquaredL2 => (gi - 2.0 * s * xi).abs() <= tol,
            RegularizerKind::Zero => gi.abs() <= tol,
        })
    }

    /// `|prox(rho + drho, v) - prox(rho, v)|_2`.
    pub fn prox_rho_continuity_gap(&self, rho: f64, drho: f64, v: ArrayView1<f64>) -> Result<f64> {
        if !(rho > 0.0 && rho + drho > 0.0) {
            return Err(Error::domain(format!(
                "continuity gap needs rho > 0 and rho + drho > 0, got rho = {rho}, drho = {drho}"
            )));
        }
        let a = self.prox(rho + drho, v)?;
        let b = self.prox(rho, v)?;
        Ok((&a - &b).mapv(|d| d * d).sum().sqrt())
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if rho.is_nan() || rho < 0.0 {
        return Err(Error::domain(format!("prox parameter must be ≥ 0, got {rho}")));
    }
    if !rho.is_finite() {
        return Err(Error::numeric(format!("prox parameter is not finite: {rho}")));
    }
    Ok(())
}

pub(crate) fn check_finite(v: ArrayView1<f64>, what: &str) -> Result<()> {
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::numeric(format!("{what} has non-finite entry at {i}: {}", v[i])));
    }
    Ok(())
}
