//! The ε-insensitive loss and the tilted density `g_s(x) ∝ exp(s·ρ_ε(x))`.
//!
//! `g_s` is flat on the insensitivity band `(-ε, ε)` and decays like a
//! Laplace density with rate `|s|` outside it. All closed forms below are in
//! nats. At `ε = 0` every quantity switches to its Laplace-density branch
//! instead of evaluating the `ε > 0` expressions at zero.

use serde::{Deserialize, Serialize};

use crate::error::{require_negative_slope, Error, Result};

/// The ε-insensitive loss `ρ_ε(z) = max(|z| - ε, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonLoss {
    epsilon: f64,
}

impl EpsilonLoss {
    pub fn new(epsilon: f64) -> Result<Self> {
        if epsilon >= 0.0 && epsilon.is_finite() {
            Ok(Self { epsilon })
        } else {
            Err(Error::Domain(format!(
                "epsilon must be finite and nonnegative, got {epsilon}"
            )))
        }
    }

    /// Plain absolute-error loss.
    pub fn absolute() -> Self {
        Self { epsilon: 0.0 }
    }

    #[inline]
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    #[inline]
    pub fn is_absolute(&self) -> bool {
        self.epsilon == 0.0
    }

    #[inline]
    pub fn rho(&self, z: f64) -> f64 {
        (z.abs() - self.epsilon).max(0.0)
    }
}

/// Convenience wrapper around [`EpsilonLoss::rho`].
#[inline]
pub fn rho(z: f64, loss: &EpsilonLoss) -> f64 {
    loss.rho(z)
}

/// `C_s = 2(1 + |s|ε)/|s|`, the normalizer of `exp(s·ρ_ε)`.
pub fn normalizer(s: f64, loss: &EpsilonLoss) -> Result<f64> {
    require_negative_slope(s)?;
    Ok(normalizer_unchecked(s.abs(), loss.epsilon))
}

#[inline]
fn normalizer_unchecked(a: f64, eps: f64) -> f64 {
    // 2/|s| + 2ε keeps full precision for very large |s|
    2.0 / a + 2.0 * eps
}

/// Density of `g_s` at `x`.
pub fn g_pdf(x: f64, s: f64, loss: &EpsilonLoss) -> Result<f64> {
    require_negative_slope(s)?;
    Ok(g_pdf_unchecked(x, s.abs(), loss.epsilon))
}

#[inline]
pub(crate) fn g_pdf_unchecked(x: f64, a: f64, eps: f64) -> f64 {
    let c = normalizer_unchecked(a, eps);
    let excess = x.abs() - eps;
    if excess <= 0.0 {
        1.0 / c
    } else {
        (-a * excess).exp() / c
    }
}

/// Cumulative distribution function of `g_s`.
pub fn g_cdf(x: f64, s: f64, loss: &EpsilonLoss) -> Result<f64> {
    require_negative_slope(s)?;
    Ok(g_cdf_unchecked(x, s.abs(), loss.epsilon))
}

#[inline]
pub(crate) fn g_cdf_unchecked(x: f64, a: f64, eps: f64) -> f64 {
    let c = normalizer_unchecked(a, eps);
    let tail = 1.0 / (c * a);
    if x <= -eps {
        tail * (-a * (-x - eps)).exp()
    } else if x < eps {
        tail + (x + eps) / c
    } else {
        1.0 - tail * (-a * (x - eps)).exp()
    }
}

/// Differential entropy `h(g_s) = log(2(1+|s|ε)/|s|) + 1/(1+|s|ε)`.
pub fn g_entropy(s: f64, loss: &EpsilonLoss) -> Result<f64> {
    require_negative_slope(s)?;
    let a = s.abs();
    let eps = loss.epsilon;
    if eps == 0.0 {
        return Ok((2.0 / a).ln() + 1.0);
    }
    Ok(normalizer_unchecked(a, eps).ln() + 1.0 / (1.0 + a * eps))
}

/// Average distortion `D_s = 1/((1 + ε|s|)|s|)` of the tilted density.
pub fn distortion_of_slope(s: f64, loss: &EpsilonLoss) -> Result<f64> {
    require_negative_slope(s)?;
    let a = s.abs();
    Ok(1.0 / ((1.0 + loss.epsilon * a) * a))
}

/// Inverse of [`distortion_of_slope`].
///
/// Uses `|s| = 2/(D + sqrt(D² + 4Dε))`, which is the rationalized form of
/// `(-D + sqrt(D² + 4Dε))/(2Dε)` and does not cancel when `D ≫ ε`.
pub fn slope_of_distortion(d: f64, loss: &EpsilonLoss) -> Result<f64> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::Domain(format!(
            "distortion must be finite and positive, got {d}"
        )));
    }
    let eps = loss.epsilon;
    if eps == 0.0 {
        return Ok(-1.0 / d);
    }
    let root = (d * d + 4.0 * d * eps).sqrt();
    Ok(-2.0 / (d + root))
}

/// Variance of `g_s`: `(2/C_s){ε³/3 + (1/|s|)(ε² + 2ε/|s| + 2/s²)}`.
pub fn g_variance(s: f64, loss: &EpsilonLoss) -> Result<f64> {
    require_negative_slope(s)?;
    let a = s.abs();
    let eps = loss.epsilon;
    if eps == 0.0 {
        return Ok(2.0 / (a * a));
    }
    let c = normalizer_unchecked(a, eps);
    let inner = eps.powi(3) / 3.0 + (eps * eps + 2.0 * eps / a + 2.0 / (a * a)) / a;
    Ok(2.0 / c * inner)
}

/// A slope together with every closed-form quantity derived from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeState {
    pub s: f64,
    pub epsilon: f64,
    /// `C_s`
    pub c_norm: f64,
    /// `D_s`
    pub d_s: f64,
    /// `h(g_s)` in nats
    pub h_gs: f64,
    /// variance of `g_s`
    pub v_gs: f64,
}

impl SlopeState {
    pub fn new(s: f64, loss: &EpsilonLoss) -> Result<Self> {
        Ok(Self {
            s,
            epsilon: loss.epsilon,
            c_norm: normalizer(s, loss)?,
            d_s: distortion_of_slope(s, loss)?,
            h_gs: g_entropy(s, loss)?,
            v_gs: g_variance(s, loss)?,
        })
    }

    /// State at the slope whose tilted density has average distortion `d`.
    pub fn from_distortion(d: f64, loss: &EpsilonLoss) -> Result<Self> {
        Self::new(slope_of_distortion(d, loss)?, loss)
    }

    pub fn loss(&self) -> EpsilonLoss {
        EpsilonLoss { epsilon: self.epsilon }
    }
}
