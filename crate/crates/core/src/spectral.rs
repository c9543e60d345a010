//! Characteristic functions of the tilted density and the certificates that
//! the Shannon lower bound is not attained.
//!
//! All densities here are even, so every characteristic function is the real
//! cosine transform `∫ f(x) cos(ωx) dx`.

use serde::{Deserialize, Serialize};

use crate::error::{require_negative_slope, Error, Result};
use crate::kernel::EpsilonLoss;
use crate::quad::integrate_breaks;

/// A characteristic-function sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CFValue {
    pub omega: f64,
    pub value: f64,
}

/// `sin(t)/t` with a series branch near zero.
pub fn sinc(t: f64) -> f64 {
    if t.abs() < 1e-4 {
        let t2 = t * t;
        1.0 - t2 / 6.0 + t2 * t2 / 120.0
    } else {
        t.sin() / t
    }
}

/// Characteristic function of the Laplace density `(|s|/2)e^{s|x|}`.
pub fn laplace_cf(omega: f64, s: f64) -> Result<f64> {
    require_negative_slope(s)?;
    let s2 = s * s;
    Ok(s2 / (s2 + omega * omega))
}

/// Characteristic function of the mixture of `δ(±ε)` and the uniform density on
/// `[-ε, ε]` in proportion `1 : ε|s|`.
pub fn mixture_cf(omega: f64, s: f64, loss: &EpsilonLoss) -> Result<f64> {
    require_negative_slope(s)?;
    let eps = loss.epsilon();
    if eps == 0.0 {
        return Ok(1.0);
    }
    let es = eps * s.abs();
    let t = omega * eps;
    Ok((es * sinc(t) + t.cos()) / (1.0 + es))
}

/// Characteristic function of `g_s`, as the product of the two factors above.
pub fn g_cf(omega: f64, s: f64, loss: &EpsilonLoss) -> Result<f64> {
    Ok(laplace_cf(omega, s)? * mixture_cf(omega, s, loss)?)
}

pub fn g_cf_value(omega: f64, s: f64, loss: &EpsilonLoss) -> Result<CFValue> {
    Ok(CFValue {
        omega,
        value: g_cf(omega, s, loss)?,
    })
}

/// Cosine transform of an even density given on `[0, reach]`, by quadrature.
///
/// `kinks` lists the nonnegative breakpoints of the density; panels are kept
/// narrower than a quarter period of `cos(ωx)`.
pub fn cosine_transform<F: Fn(f64) -> f64>(f: F, omega: f64, kinks: &[f64], reach: f64, scale: f64) -> f64 {
    let mut breaks = vec![0.0, reach];
    breaks.extend(kinks.iter().copied().filter(|k| *k > 0.0 && *k < reach));
    let period = if omega == 0.0 {
        f64::INFINITY
    } else {
        2.0 * std::f64::consts::PI / omega.abs()
    };
    let width = scale.min(period);
    2.0 * integrate_breaks(|x| f(x) * (omega * x).cos(), &breaks, width)
}

/// Laplace density convolved with the delta/uniform mixture, `(l_|s| * m)(x)`.
///
/// The delta pair contributes two shifted point evaluations; the uniform
/// part is integrated by quadrature.
pub fn laplace_mixture_convolution(x: f64, s: f64, loss: &EpsilonLoss) -> Result<f64> {
    require_negative_slope(s)?;
    let a = s.abs();
    let eps = loss.epsilon();
    let lap = |z: f64| 0.5 * a * (-a * z.abs()).exp();
    if eps == 0.0 {
        return Ok(lap(x));
    }
    let es = eps * a;
    let deltas = 0.5 * (lap(x - eps) + lap(x + eps));
    let (lo, hi) = (x - eps, x + eps);
    let mut breaks = vec![lo, hi];
    if lo < 0.0 && hi > 0.0 {
        breaks.push(0.0);
    }
    let uniform = integrate_breaks(lap, &breaks, (1.0 / a).min(eps)) / (2.0 * eps);
    Ok((deltas + es * uniform) / (1.0 + es))
}

/// Lower bound on `|Q(ω_k)|` at `ω_k = (2k - 1/2)π/ε` for the Laplacian source
/// with `|s| > α`. A value above 1 rules out every valid `Q`.
pub fn laplacian_witness(alpha: f64, s: f64, loss: &EpsilonLoss, k: u64) -> Result<f64> {
    require_negative_slope(s)?;
    let eps = loss.epsilon();
    if eps <= 0.0 {
        return Err(Error::Domain("witness requires epsilon > 0".into()));
    }
    if k == 0 {
        return Err(Error::Domain("witness index k starts at 1".into()));
    }
    let a = s.abs();
    if a <= alpha {
        return Err(Error::WitnessDomain { s_abs: a, alpha });
    }
    let es = eps * a;
    Ok((alpha * alpha) / (a * a) * (1.0 + es) / es * (2.0 * k as f64 - 0.5) * std::f64::consts::PI)
}

/// Smallest `k ≥ 1` for which [`laplacian_witness`] exceeds 1.
pub fn laplacian_witness_index(alpha: f64, s: f64, loss: &EpsilonLoss) -> Result<u64> {
    let per_unit = laplacian_witness(alpha, s, loss, 1)? / (1.5 * std::f64::consts::PI);
    // witness(k) = per_unit·(2k - 1/2)π > 1  ⇔  k > (1/(per_unit·π) + 1/2)/2
    let bound = (1.0 / (per_unit * std::f64::consts::PI) + 0.5) / 2.0;
    let mut k = (bound.floor() as u64).max(1);
    while laplacian_witness(alpha, s, loss, k)? <= 1.0 {
        k += 1;
    }
    Ok(k)
}

/// The characteristic function a reproduction density would need for the
/// Laplacian source to meet the SLB at slope `s`:
/// `Q(ω) = {α²/s² + (1 - α²/s²)α²/(α²+ω²)} / M(ω)`.
pub fn laplacian_required_q(omega: f64, alpha: f64, s: f64, loss: &EpsilonLoss) -> Result<f64> {
    let r = (alpha * alpha) / (s * s);
    let num = r + (1.0 - r) * alpha * alpha / (alpha * alpha + omega * omega);
    Ok(num / mixture_cf(omega, s, loss)?)
}

/// Inverse transform of `P(ω)/L_|s|(ω)` for the zero-mean Gaussian source:
/// `p(x)(1 + 1/(s²σ²) - x²/(s²σ⁴))`.
pub fn gaussian_deconvolution_density(x: f64, sigma2: f64, s: f64) -> Result<f64> {
    require_negative_slope(s)?;
    let s2 = s * s;
    let p = (-x * x / (2.0 * sigma2)).exp() / (2.0 * std::f64::consts::PI * sigma2).sqrt();
    Ok(p * (1.0 + 1.0 / (s2 * sigma2) - x * x / (s2 * sigma2 * sigma2)))
}

/// Abscissa beyond which [`gaussian_deconvolution_density`] is negative.
pub fn gaussian_deconvolution_sign_change(sigma2: f64, s: f64) -> f64 {
    sigma2.sqrt() * (1.0 + s * s * sigma2).sqrt()
}
