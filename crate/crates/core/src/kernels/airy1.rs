//! Explicit Airy_1 kernel.

use super::KernelError;
use crate::airy::{airy_ai, SUPPORTED};
use std::f64::consts::PI;

/// `K_{A1}(s1, r1; s2, r2)`: heat term for `r2 > r1` plus `Ai(s1 + s2 + r^2) e^{r (s1 + s2) + 2 r^3 / 3}`, `r = r2 - r1`.
pub fn eval_airy1_kernel(s1: f64, r1: f64, s2: f64, r2: f64) -> Result<f64, KernelError> {
    let r = r2 - r1;
    let arg = s1 + s2 + r * r;
    let mut k = if arg > SUPPORTED.1 { 0.0 } else { airy_ai(arg)? * (r * (s1 + s2) + 2.0 / 3.0 * r * r * r).exp() };
    if r > 0.0 {
        let ds = s2 - s1;
        k -= (-ds * ds / (4.0 * r)).exp() / (4.0 * PI * r).sqrt();
    }
    Ok(k)
}
