//! Exterior data `g` on `|y| >= 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExteriorData {
    Zero,
    Constant {
        value: f64,
    },
    /// `left` on `y <= -1`, `right` on `y >= 1`.
    Sided {
        left: f64,
        right: f64,
    },
    /// Indicator of `[lo, hi]` intersected with the exterior.
    Indicator {
        lo: f64,
        hi: f64,
    },
    /// `c / (1 + y^2)`.
    Rational {
        c: f64,
    },
    /// `c (|y| - 1)^{-p}`, singular at both endpoints.
    BoundarySingular {
        c: f64,
        p: f64,
    },
}

impl ExteriorData {
    /// `g(y)` given `gap = |y| - 1`; the gap is passed separately so that
    /// singular data keep full precision near the endpoints.
    pub fn eval(&self, y: f64, gap: f64) -> f64 {
        match *self {
            ExteriorData::Zero => 0.0,
            ExteriorData::Constant { value } => value,
            ExteriorData::Sided { left, right } => {
                if y < 0.0 {
                    left
                } else {
                    right
                }
            }
            ExteriorData::Indicator { lo, hi } => {
                if y >= lo && y <= hi {
                    1.0
                } else {
                    0.0
                }
            }
            ExteriorData::Rational { c } => c / (1.0 + y * y),
            ExteriorData::BoundarySingular { c, p } => c * gap.powf(-p),
        }
    }

    pub fn at(&self, y: f64) -> f64 {
        self.eval(y, y.abs() - 1.0)
    }

    /// Points of `|y| > 1` where `g` is not smooth.
    pub fn breaks(&self) -> Vec<f64> {
        match *self {
            ExteriorData::Indicator { lo, hi } => vec![lo, hi]
                .into_iter()
                .filter(|b| b.abs() > 1.0 && b.is_finite())
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Power exponent of `g` at `+-1`.
    pub fn endpoint_exponent(&self) -> f64 {
        match *self {
            ExteriorData::BoundarySingular { p, .. } => -p,
            _ => 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            ExteriorData::Zero => true,
            ExteriorData::Constant { value } => value == 0.0,
            ExteriorData::Sided { left, right } => left == 0.0 && right == 0.0,
            ExteriorData::Indicator { lo, hi } => hi <= lo,
            ExteriorData::Rational { c } | ExteriorData::BoundarySingular { c, .. } => c == 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ExteriorData::Zero => true,
            ExteriorData::Constant { value } => value.is_finite(),
            ExteriorData::Sided { left, right } => left.is_finite() && right.is_finite(),
            ExteriorData::Indicator { lo, hi } => !lo.is_nan() && !hi.is_nan() && lo <= hi,
            ExteriorData::Rational { c } => c.is_finite(),
            ExteriorData::BoundarySingular { c, p } => c.is_finite() && p.is_finite() && p >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("malformed exterior data {self:?}")))
        }
    }

    /// Pointwise order `self <= other` on the exterior, checked on a sample
    /// grid of both half-lines.
    pub fn le_on_samples(&self, other: &ExteriorData) -> bool {
        let gaps = [1e-9, 1e-4, 1e-2, 0.1, 0.5, 1.0, 2.0, 10.0, 1e3];
        gaps.iter().all(|&gap| {
            [1.0, -1.0].iter().all(|&s| {
                let y = s * (1.0 + gap);
                self.eval(y, gap) <= other.eval(y, gap)
            })
        })
    }
}
