//! Lower and upper bounds on `R^(ε)(D)`.
//!
//! Every bound is parametrized by the slope `s < 0`, which fixes the
//! distortion `D_s` of the tilted density `g_s`. The upper bounds all start
//! from the test channel `q(y|x) = g_s(y - x)`, whose output density is the
//! convolution `r_s = g_s * p`; they differ in how `h(r_s)` is evaluated.

use serde::{Deserialize, Serialize};

use crate::error::{require_negative_slope, Error, Result};
use crate::kernel::{
    distortion_of_slope, g_cdf_unchecked, g_entropy, g_pdf_unchecked, g_variance, normalizer, EpsilonLoss,
};
use crate::quad::integrate_breaks;
use crate::sources::{Source, TabulatedSource};

/// Relative half-width of the window around `|s| = α` where the Laplacian
/// closed forms are 0/0.
pub const SINGULARITY_WINDOW: f64 = 1e-6;

/// Diagnostic flags attached to a computed point.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointFlags {
    /// The raw formula was negative and the rate was clamped to zero.
    pub clamped: bool,
    /// The closed form was singular and a numeric convolution was used instead.
    pub numeric_fallback: bool,
    /// The iterative solver hit its iteration cap.
    pub not_converged: bool,
    /// The value was extrapolated beyond a tabulated curve.
    pub extrapolated: bool,
}

impl PointFlags {
    pub fn any(&self) -> bool {
        self.clamped || self.numeric_fallback || self.not_converged || self.extrapolated
    }

    pub fn merge(&mut self, other: PointFlags) {
        self.clamped |= other.clamped;
        self.numeric_fallback |= other.numeric_fallback;
        self.not_converged |= other.not_converged;
        self.extrapolated |= other.extrapolated;
    }
}

/// One point of a rate-distortion curve, in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RDPoint {
    pub d: f64,
    /// Rate after clamping at zero.
    pub r: f64,
    /// Rate before clamping.
    pub raw: f64,
    pub s: Option<f64>,
    pub flags: PointFlags,
}

impl RDPoint {
    /// Builds a rate point, clamping negative rates to zero and flagging it.
    pub fn rate(d: f64, raw: f64, s: Option<f64>) -> Self {
        let clamped = raw < 0.0;
        Self {
            d,
            r: raw.max(0.0),
            raw,
            s,
            flags: PointFlags {
                clamped,
                ..PointFlags::default()
            },
        }
    }
}

/// Shannon lower bound at distortion `d` for a source with entropy `h_p`.
pub fn slb(d: f64, h_p: f64, loss: &EpsilonLoss) -> Result<f64> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::Domain(format!(
            "distortion must be finite and positive, got {d}"
        )));
    }
    let eps = loss.epsilon();
    if eps == 0.0 {
        return Ok(h_p - (2.0 * std::f64::consts::E * d).ln());
    }
    // With D̃ = D/(2ε):
    //   log(2ε) + log(1 + D̃ + √(D̃² + 2D̃)) = log(2ε + D + √(D² + 4Dε))
    //   D̃ - √(D̃² + 2D̃)                   = -2D/(D + √(D² + 4Dε))
    let root = (d * d + 4.0 * d * eps).sqrt();
    Ok(h_p - (2.0 * eps + d + root).ln() - 2.0 * d / (d + root))
}

/// Distortion at which the SLB of `src` crosses zero.
pub fn slb_zero(src: &Source, loss: &EpsilonLoss) -> Result<f64> {
    let h_p = src.differential_entropy();
    let d_max = src.d_max(loss);
    let mut lo = d_max * 1e-12;
    let mut hi = d_max;
    if slb(lo, h_p, loss)? <= 0.0 {
        return Err(Error::VacuousSlb { d_max });
    }
    let at_max = slb(hi, h_p, loss)?;
    if at_max > 1e-12 {
        // only reachable for a tabulated source whose piecewise-constant
        // entropy overshoots its point-mass D_max
        return Err(Error::Domain(format!(
            "SLB still positive at D_max = {d_max}; source tabulation too coarse"
        )));
    }
    if at_max >= 0.0 {
        // the SLB touches zero exactly at D_max (ε = 0 Laplacian)
        return Ok(hi);
    }
    while hi - lo > 1e-8 {
        let mid = 0.5 * (lo + hi);
        if slb(mid, h_p, loss)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `R^(0)(D) = -log(αD)` for the Laplacian source, zero beyond `1/α`.
pub fn trivial_bound_laplacian(d: f64, alpha: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!("distortion must be positive, got {d}")));
    }
    Ok((-(alpha * d).ln()).max(0.0))
}

/// SLB of the Laplacian at the slope `s = -α`: `1 - log(1+αε) - 1/(1+αε)`.
pub fn slb_strictness_smalls_laplacian(alpha: f64, loss: &EpsilonLoss) -> f64 {
    let ae = alpha * loss.epsilon();
    1.0 - ae.ln_1p() - 1.0 / (1.0 + ae)
}

fn check_singularity(s: f64, alpha: f64) -> Result<()> {
    if ((s.abs() - alpha) / alpha).abs() < SINGULARITY_WINDOW {
        Err(Error::SlopeSingularity { s_abs: s.abs(), alpha })
    } else {
        Ok(())
    }
}

/// Closed-form output density `r_s = g_s * p` for the Laplacian source.
pub fn r_s_pdf_laplacian(y: f64, s: f64, alpha: f64, loss: &EpsilonLoss) -> Result<f64> {
    require_negative_slope(s)?;
    check_singularity(s, alpha)?;
    let c = normalizer(s, loss)?;
    Ok(r_s_laplacian_unchecked(y, s, alpha, loss.epsilon(), c))
}

fn r_s_laplacian_unchecked(y: f64, s: f64, alpha: f64, eps: f64, c: f64) -> f64 {
    let k1 = s / (alpha - s);
    let ya = y.abs();
    let val = if ya < eps {
        k1 * (-alpha * (ya + eps)).exp() + k1 * (alpha * (ya - eps)).exp() + 2.0
    } else {
        let k2 = s / (alpha + s);
        let k3 = 2.0 * alpha * alpha / (alpha * alpha - s * s);
        k1 * (-alpha * (ya + eps)).exp() + k2 * (-alpha * (ya - eps)).exp() + k3 * (s * (ya - eps)).exp()
    };
    (val / (2.0 * c)).max(0.0)
}

/// Lower-bound constants `c_s`, `B_s`, `E_s` of the Laplacian analytic bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplacianAuxiliaries {
    pub c_s: f64,
    pub b_int: f64,
    pub e_int: f64,
}

pub fn laplacian_auxiliaries(s: f64, alpha: f64, loss: &EpsilonLoss) -> Result<LaplacianAuxiliaries> {
    require_negative_slope(s)?;
    check_singularity(s, alpha)?;
    let eps = loss.epsilon();
    let ae = alpha * eps;
    let k1 = s / (alpha - s);
    let k2 = s / (alpha + s);
    let k3 = 2.0 * alpha * alpha / (alpha * alpha - s * s);
    // 2e^{-αε}cosh(αε) = 1 + e^{-2αε}
    let c_s = 2.0 + k1 * (1.0 + (-2.0 * ae).exp());
    let b_int = k1 / alpha * (-2.0 * ae).exp()
        + (s * s * (alpha - s) - 2.0 * alpha.powi(3)) / ((alpha * alpha - s * s) * s * alpha);
    let lin = (1.0 + ae) / (alpha * alpha);
    let e_int = k1 * lin * (-2.0 * ae).exp() + k2 * lin + k3 * (1.0 - s * eps) / (s * s);
    Ok(LaplacianAuxiliaries { c_s, b_int, e_int })
}

/// Analytic upper bound `R_AU` for the Laplacian source.
pub fn analytic_upper_laplacian(s: f64, alpha: f64, loss: &EpsilonLoss) -> Result<RDPoint> {
    let aux = laplacian_auxiliaries(s, alpha, loss)?;
    let c = normalizer(s, loss)?;
    let eps = loss.epsilon();
    let h_upper = -(aux.c_s / (2.0 * c)).ln() - alpha * eps / c * aux.b_int + alpha / c * aux.e_int;
    let raw = h_upper - g_entropy(s, loss)?;
    Ok(RDPoint::rate(distortion_of_slope(s, loss)?, raw, Some(s)))
}

/// Gaussian entropy bound `R_GE = ½log(2πe(v_p + v_s)) - h(g_s)`.
pub fn gaussian_entropy_bound(src: &Source, s: f64, loss: &EpsilonLoss) -> Result<RDPoint> {
    let v = src.variance() + g_variance(s, loss)?;
    let raw = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * v).ln() - g_entropy(s, loss)?;
    Ok(RDPoint::rate(distortion_of_slope(s, loss)?, raw, Some(s)))
}

/// Controls the density of the quadrature panels used for `h(r_s)`.
///
/// `refine = 2.0` halves every panel width; used for Richardson-style
/// stability checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadSettings {
    pub refine: f64,
}

impl Default for QuadSettings {
    fn default() -> Self {
        Self { refine: 1.0 }
    }
}

/// Length scale on which the source density varies.
fn source_scale(src: &Source) -> f64 {
    match src {
        Source::Laplacian { alpha } => 1.0 / alpha,
        Source::Gaussian { sigma2 } => sigma2.sqrt(),
        Source::Tabulated(t) => t.step(),
    }
}

/// Numeric convolution `(g_s * p)(y) = ∫ g_s(y - x) p(x) dx`.
pub fn r_s_numeric(src: &Source, y: f64, s: f64, loss: &EpsilonLoss) -> Result<f64> {
    require_negative_slope(s)?;
    Ok(r_s_numeric_unchecked(
        src,
        y,
        s.abs(),
        loss.epsilon(),
        QuadSettings::default(),
    ))
}

fn r_s_numeric_unchecked(src: &Source, y: f64, a: f64, eps: f64, q: QuadSettings) -> f64 {
    if let Source::Tabulated(t) = src {
        return r_s_tabulated(t, y, a, eps);
    }
    let reach = src.half_width(1e-22);
    let scale = source_scale(src);
    let tail = 45.0 / a;
    let band_w = scale / (4.0 * q.refine);
    let tail_w = (8.0 / a).min(scale / 4.0) / q.refine;
    let f = |x: f64| g_pdf_unchecked(y - x, a, eps) * src.pdf(x);
    let clip = |v: f64| v.clamp(-reach, reach);
    let (l0, l1, r1, r0) = (clip(y - eps - tail), clip(y - eps), clip(y + eps), clip(y + eps + tail));
    let kinks: Vec<f64> = match src {
        Source::Laplacian { .. } => vec![0.0],
        _ => vec![],
    };
    let seg = |lo: f64, hi: f64, w: f64| {
        if hi <= lo {
            return 0.0;
        }
        let mut br = vec![lo, hi];
        br.extend(kinks.iter().copied().filter(|k| *k > lo && *k < hi));
        integrate_breaks(f, &br, w)
    };
    seg(l0, l1, tail_w) + seg(l1, r1, band_w) + seg(r1, r0, tail_w)
}

/// Exact convolution of `g_s` with a piecewise-constant density.
fn r_s_tabulated(t: &TabulatedSource, y: f64, a: f64, eps: f64) -> f64 {
    let half = 0.5 * t.step();
    let mass_between = |lo: f64, hi: f64| {
        // P(lo < Z < hi) for Z ~ g_s, using the upper tail on the right half
        // so that far-tail differences do not cancel
        if lo >= 0.0 {
            g_cdf_unchecked(-lo, a, eps) - g_cdf_unchecked(-hi, a, eps)
        } else {
            g_cdf_unchecked(hi, a, eps) - g_cdf_unchecked(lo, a, eps)
        }
    };
    t.grid()
        .iter()
        .zip(t.masses())
        .filter(|(_, m)| **m > 0.0)
        .map(|(x, m)| m * mass_between(y - x - half, y - x + half))
        .sum::<f64>()
        / t.step()
}

fn entropy_integrand(r: f64) -> f64 {
    if r > 0.0 {
        -r * r.ln()
    } else {
        0.0
    }
}

/// Differential entropy of `r_s = g_s * p` by quadrature.
///
/// The Laplacian source uses the closed-form density away from `|s| = α`;
/// other sources (and the singular window) use numeric convolution.
pub fn r_s_entropy(src: &Source, s: f64, loss: &EpsilonLoss, q: QuadSettings) -> Result<(f64, PointFlags)> {
    require_negative_slope(s)?;
    let a = s.abs();
    let eps = loss.epsilon();
    let mut flags = PointFlags::default();
    let closed = match src {
        Source::Laplacian { alpha } => match check_singularity(s, *alpha) {
            Ok(()) => Some(*alpha),
            Err(_) => {
                flags.numeric_fallback = true;
                None
            }
        },
        _ => None,
    };
    let c = normalizer(s, loss)?;
    let density = |y: f64| match closed {
        Some(alpha) => r_s_laplacian_unchecked(y, s, alpha, eps, c),
        None => r_s_numeric_unchecked(src, y, a, eps, q),
    };

    let scale = source_scale(src);
    let body = src.half_width(1e-22) + eps + src.mean().abs();
    // slowest decay rate of r_s in the tails
    let slow = match src {
        Source::Laplacian { alpha } => alpha.min(a),
        _ => a,
    };
    let outer = body + 45.0 / slow;
    let body_w = match src {
        Source::Tabulated(t) => t.step().min(eps.max(t.step() / 4.0)).min(1.0 / a) / q.refine,
        _ => (scale / 8.0).min(0.5 * eps.max(1.0 / a)).max(scale / 64.0) / q.refine,
    };
    let tail_w = (4.0 / slow).max(body_w) / q.refine;
    let mut breaks = vec![-body, -eps, 0.0, eps, body];
    if let Source::Tabulated(t) = src {
        breaks.push(t.grid()[0] - 0.5 * t.step() - eps);
        breaks.push(t.grid()[t.grid().len() - 1] + 0.5 * t.step() + eps);
    }
    let h_body = integrate_breaks(|y| entropy_integrand(density(y)), &breaks, body_w);
    let h_tails = integrate_breaks(|y| entropy_integrand(density(y)), &[-outer, -body], tail_w)
        + integrate_breaks(|y| entropy_integrand(density(y)), &[body, outer], tail_w);
    Ok((h_body + h_tails, flags))
}

/// General upper bound `R_U = h(r_s) - h(g_s)`.
pub fn r_u(src: &Source, s: f64, loss: &EpsilonLoss) -> Result<RDPoint> {
    r_u_with(src, s, loss, QuadSettings::default())
}

pub fn r_u_with(src: &Source, s: f64, loss: &EpsilonLoss, q: QuadSettings) -> Result<RDPoint> {
    let (h_r, flags) = r_s_entropy(src, s, loss, q)?;
    let raw = h_r - g_entropy(s, loss)?;
    let mut p = RDPoint::rate(distortion_of_slope(s, loss)?, raw, Some(s));
    p.flags.merge(flags);
    Ok(p)
}
