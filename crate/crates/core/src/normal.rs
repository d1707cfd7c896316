//! Standard normal distribution helpers.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

#[cfg(test)]
pub(crate) fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// `Pr(|Z| > t)` for a standard normal `Z`.
pub(crate) fn two_sided_tail(t: f64) -> f64 {
    libm::erfc(t * FRAC_1_SQRT_2)
}

pub(crate) fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Inverse of [`two_sided_tail`] on `(0, 1)`.
///
/// Rational starting point (Abramowitz & Stegun 26.2.23, error below 4.5e-4)
/// refined by Halley steps on the tail equation.
pub(crate) fn two_sided_quantile(p: f64) -> f64 {
    let q = 0.5 * p;
    let s = (-2.0 * q.ln()).sqrt();
    let mut t = s - (2.515517 + 0.802853 * s + 0.010328 * s * s)
        / (1.0 + 1.432788 * s + 0.189269 * s * s + 0.001308 * s * s * s);
    for _ in 0..8 {
        // f(t) = tail(t) - p, f' = -2 pdf(t), f'' = 2 t pdf(t)
        let slope = -2.0 * pdf(t);
        if slope == 0.0 {
            break;
        }
        let newton = (two_sided_tail(t) - p) / slope;
        let step = newton / (1.0 + 0.5 * newton * t);
        t -= step;
        if step.abs() <= 4.0 * f64::EPSILON * t.abs() {
            break;
        }
    }
    t
}
