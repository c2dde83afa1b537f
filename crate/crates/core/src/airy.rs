//! The Airy function `Ai` on [-20, 200].
//!
//! Maclaurin series near the origin, a steepest-descent integral through the real
//! saddle for positive arguments, and two steepest-descent rays through the upper
//! complex saddle for negative arguments.

use crate::quad::GaussLegendre;
use num_complex::Complex64 as C64;
use std::f64::consts::PI;
use thiserror::Error;

/// `Ai(0) = 3^{-2/3} / Gamma(2/3)`.
pub const AI0: f64 = 0.355_028_053_887_817_24;
/// `-Ai'(0) = 3^{-1/3} / Gamma(1/3)`.
pub const AIP0: f64 = 0.258_819_403_792_806_8;

pub const SUPPORTED: (f64, f64) = (-20.0, 200.0);
const SERIES_RADIUS: f64 = 1.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AiryError {
    #[error("Ai({0}) requested outside the supported range [-20, 200]")]
    OutOfRange(f64),
}

/// `Ai(x)` to about 1e-13 absolute on the supported range.
pub fn airy_ai(x: f64) -> Result<f64, AiryError> {
    if !(SUPPORTED.0..=SUPPORTED.1).contains(&x) {
        return Err(AiryError::OutOfRange(x));
    }
    Ok(if x.abs() <= SERIES_RADIUS {
        airy_series(x)
    } else if x > 0.0 {
        airy_positive(x)
    } else {
        airy_negative(x)
    })
}

/// Maclaurin series `Ai(x) = Ai(0) f(x) + Ai'(0) g(x)`.
pub fn airy_series(x: f64) -> f64 {
    let x3 = x * x * x;
    let mut f = 1.0;
    let mut g = x;
    let mut a = 1.0;
    let mut b = x;
    for k in 1..200 {
        let kf = k as f64;
        a *= x3 / ((3.0 * kf - 1.0) * (3.0 * kf));
        b *= x3 / ((3.0 * kf) * (3.0 * kf + 1.0));
        f += a;
        g += b;
        if a.abs() + b.abs() < 1e-18 * (f.abs() + g.abs()) {
            break;
        }
    }
    AI0 * f - AIP0 * g
}

/// Vertical line through the saddle `sqrt(x)`:
/// `Ai(x) = e^{-2/3 x^{3/2}} / pi * int_0^inf exp(-sqrt(x) y^2) cos(y^3/3) dy`.
pub fn airy_positive(x: f64) -> f64 {
    let a = x.sqrt();
    let zeta = 2.0 / 3.0 * x * a;
    let y_max = (42.0 / a).sqrt();
    let panels = ((y_max.powi(3) / 3.0 / 2.0).ceil() as usize).max(8);
    let rule = GaussLegendre::cached(16);
    let h = y_max / panels as f64;
    let mut s = 0.0;
    for p in 0..panels {
        let lo = h * p as f64;
        s += rule.integrate(lo, lo + h, |y| (-a * y * y).exp() * (y * y * y / 3.0).cos());
    }
    (-zeta).exp() / PI * s
}

/// Rays leaving the saddle `i sqrt(-x)` at angles pi/4 and 9pi/8:
/// `Ai(x) = Im(I) / pi` with `I` the integral of `exp(t^3/3 - x t)` along the upper path.
pub fn airy_negative(x: f64) -> f64 {
    let b = (-x).sqrt();
    let t0 = C64::new(0.0, b);
    let h = |t: C64| (t * t * t / 3.0 - t * x).exp();
    let rule = GaussLegendre::cached(16);
    let mut total = C64::new(0.0, 0.0);
    for (angle, sign) in [(PI / 4.0, 1.0), (9.0 * PI / 8.0, -1.0)] {
        let dir = C64::from_polar(1.0, angle);
        // Decay of Re h along the ray: -c2 b s^2 - c3 s^3.
        let c2 = (2.0 * angle).sin().abs();
        let c3 = -(3.0 * angle).cos() / 3.0;
        let mut s_max = 1.0;
        while c2 * b * s_max * s_max + c3 * s_max.powi(3) < 45.0 {
            s_max *= 1.2;
        }
        let phase = b * s_max * s_max + s_max.powi(3) / 3.0;
        let panels = ((phase / 2.0).ceil() as usize).max(8);
        let hs = s_max / panels as f64;
        let mut acc = C64::new(0.0, 0.0);
        for p in 0..panels {
            let lo = hs * p as f64;
            for (s, w) in rule.mapped(lo, lo + hs) {
                acc += h(t0 + dir * s) * w;
            }
        }
        total += acc * dir * sign;
    }
    total.im / PI
}
