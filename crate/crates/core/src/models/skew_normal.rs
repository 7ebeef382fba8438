//! The standard skew-normal law `Ψ(z; γ) = ∫_{-∞}^{z} 2 φ(t) Φ(γ t) dt`.

use crate::error::{Error, Result};
use crate::special::{integrate, norm_cdf, norm_pdf, norm_quantile, owens_t};

/// Convergence target for the quantile root finder.
const ROOT_TOL: f64 = 1e-13;

/// `Ψ(z; γ) = Φ(z) - 2 T(z, γ)`.
///
/// Where that difference cancels (`z < 0 < γ`, and its mirror) the tail mass
/// is integrated directly.
pub fn skew_normal_cdf(z: f64, gamma: f64) -> f64 {
    if z == f64::INFINITY {
        return 1.0;
    }
    if z == f64::NEG_INFINITY {
        return 0.0;
    }
    if z < 0.0 && gamma > 0.0 {
        return lower_tail(z, gamma);
    }
    if z > 0.0 && gamma < 0.0 {
        return 1.0 - lower_tail(-z, -gamma);
    }
    (norm_cdf(z) - 2.0 * owens_t(z, gamma)).clamp(0.0, 1.0)
}

/// `Ψ(z; γ)` for `z < 0`, by quadrature with relative accuracy.
fn lower_tail(z: f64, gamma: f64) -> f64 {
    integrate(|t| skew_normal_pdf(t, gamma), z - 12.0, z, 0.0).clamp(0.0, 1.0)
}

/// `2 φ(z) Φ(γ z)`.
pub fn skew_normal_pdf(z: f64, gamma: f64) -> f64 {
    2.0 * norm_pdf(z) * norm_cdf(gamma * z)
}

/// `ln(2 φ(z) Φ(γ z))`, finite far into the tails.
pub fn skew_normal_ln_pdf(z: f64, gamma: f64) -> f64 {
    let a = gamma * z;
    let ln_cdf = if a > -30.0 {
        norm_cdf(a).ln()
    } else {
        // Mills-ratio asymptote of ln Φ(a) for very negative a.
        -0.5 * a * a - (-a).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    };
    std::f64::consts::LN_2 - 0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln() + ln_cdf
}

/// Root of `Ψ(z; γ) = u` by Newton steps safeguarded with bisection.
pub fn skew_normal_quantile(u: f64, gamma: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(format!("skew-normal quantile needs u in (0,1), got {u}")));
    }
    if gamma == 0.0 {
        return Ok(norm_quantile(u));
    }
    if gamma < 0.0 {
        return Ok(-skew_normal_quantile(1.0 - u, -gamma)?);
    }
    // For γ > 0 the law sits between the normal and the half-normal.
    let mut lo = norm_quantile(u);
    let mut hi = norm_quantile(0.5 * (1.0 + u));
    let mut z = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = skew_normal_cdf(z, gamma) - u;
        if f.abs() <= ROOT_TOL {
            break;
        }
        if f < 0.0 {
            lo = z;
        } else {
            hi = z;
        }
        let step = f / skew_normal_pdf(z, gamma);
        let newton = z - step;
        z = if step.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
    }
    Ok(z)
}
