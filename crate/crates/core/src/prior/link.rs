use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SpatialField;
use crate::solver::AbsorptionField;

/// Link function `Phi(t) = f_min + (1 - f_min) softplus(t) / ln 2`.
///
/// Smooth, strictly increasing, onto `(f_min, inf)`, `Phi(0) = 1`, and every
/// derivative is bounded.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub f_min: f64,
}

impl Default for LinkSpec {
    fn default() -> Self {
        LinkSpec { f_min: 0.1 }
    }
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl LinkSpec {
    pub fn new(f_min: f64) -> Result<Self> {
        let link = LinkSpec { f_min };
        link.validate()?;
        Ok(link)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_min > 0.0 && self.f_min < 1.0) {
            return Err(Error::InvalidParameter(format!("f_min must lie in (0,1), got {}", self.f_min)));
        }
        Ok(())
    }

    pub fn phi(&self, t: f64) -> f64 {
        self.f_min + (1.0 - self.f_min) * softplus(t) / LN_2
    }

    pub fn phi_derivative(&self, t: f64) -> f64 {
        (1.0 - self.f_min) * sigmoid(t) / LN_2
    }

    /// `Phi^{-1}(y)` for `y > f_min`.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        if !(y > self.f_min) || !y.is_finite() {
            return Err(Error::InvalidParameter(format!("{y} is outside the range (f_min, inf) of the link")));
        }
        // softplus(t) = a  <=>  t = ln(e^a - 1) = a + ln(1 - e^{-a})
        let a = (y - self.f_min) * LN_2 / (1.0 - self.f_min);
        Ok(if a > 1.0 { a + (-(-a).exp_m1()).ln() } else { a.exp_m1().ln() })
    }
}

/// `Phi(t)`.
pub fn link_phi(t: f64, link: &LinkSpec) -> f64 {
    link.phi(t)
}

/// `Phi^{-1}(y)`.
pub fn link_inverse(y: f64, link: &LinkSpec) -> Result<f64> {
    link.inverse(y)
}

/// `Phi o F`, nodally, stamped with `f_min`.
pub fn link_phi_field(big_f: &SpatialField, link: &LinkSpec) -> Result<AbsorptionField> {
    AbsorptionField::new(big_f.map(|t| link.phi(t)), link.f_min)
}
