//! `F_k`, the Warren transition density and the functions `Psi`.

use super::{check_time, InitialCondition, KernelError};
use crate::linalg::Matrix;
use crate::quad::exp_ray_integral;
use num_complex::Complex64 as C64;
use std::f64::consts::PI;

const DECAY: f64 = 45.0;
const MAX_PARTICLES: usize = 12;

/// Gaussian heat kernel `F_0(x, t)`.
pub fn heat_kernel(x: f64, t: f64) -> f64 {
    (-x * x / (2.0 * t)).exp() / (2.0 * PI * t).sqrt()
}

/// `F_k(x, t) = (1/2 pi i) int_{i R + delta} e^{t z^2/2 - z x} z^{-k} dz`.
pub fn eval_fk(k: i64, x: f64, t: f64) -> Result<f64, KernelError> {
    check_time(t)?;
    if !x.is_finite() {
        return Err(KernelError::Domain(format!("x = {x}")));
    }
    if k <= 0 {
        Ok(hermite_fk((-k) as usize, x, t))
    } else if k == 1 {
        Ok(0.5 * libm::erfc(x / (2.0 * t).sqrt()))
    } else {
        Ok(fk_contour(k, x, t))
    }
}

/// `F_{-m}(x, t) = t^{-m/2} He_m(x / sqrt t) F_0(x, t)`.
pub fn hermite_fk(m: usize, x: f64, t: f64) -> f64 {
    let g0 = heat_kernel(x, t);
    if m == 0 {
        return g0;
    }
    let mut prev = g0;
    let mut cur = x / t * g0;
    for j in 1..m {
        let next = x / t * cur - j as f64 / t * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Contour route for `k >= 1` on the vertical line through the real saddle.
fn fk_contour(k: i64, x: f64, t: f64) -> f64 {
    let kf = k as f64;
    let root = (x * x + 4.0 * t * kf).sqrt();
    let delta = if x >= 0.0 { (x + root) / (2.0 * t) } else { 2.0 * kf / (root - x) };
    let e = |y: f64| {
        let z = C64::new(delta, y);
        z * z * (0.5 * t) - z * x - z.ln() * kf
    };
    exp_ray_integral(e, (1.0 / t.sqrt()).min(delta), DECAY).re / PI
}

/// `Psi^n_{n-k}(x)` for `1 <= k <= n` by quadrature on the steepest vertical line.
pub fn eval_psi(n: i64, k: i64, x: f64, t: f64) -> Result<f64, KernelError> {
    check_psi(n, k, t)?;
    let m = (n - k) as f64;
    let a = x + k as f64;
    let disc = a * a - 4.0 * t * m;
    let mut c = if disc >= 0.0 {
        let r = disc.sqrt();
        if a >= 0.0 {
            (a + r) / (2.0 * t)
        } else {
            (a - r) / (2.0 * t)
        }
    } else {
        a / (2.0 * t)
    };
    if c.abs() < 1e-3 {
        c = -0.5;
    }
    Ok(psi_line(n - k, a, t, c))
}

/// `Psi^n_{n-k}(x)` on the line `Re z = c`, `c != 0`.
pub fn eval_psi_on_line(n: i64, k: i64, x: f64, t: f64, c: f64) -> Result<f64, KernelError> {
    check_psi(n, k, t)?;
    if c == 0.0 {
        return Err(KernelError::Domain("the integration line must avoid z = 0".into()));
    }
    Ok(psi_line(n - k, x + k as f64, t, c))
}

fn check_psi(n: i64, k: i64, t: f64) -> Result<(), KernelError> {
    check_time(t)?;
    if k < 1 || k > n {
        return Err(KernelError::Label(format!("Psi needs 1 <= k <= n, got n = {n}, k = {k}")));
    }
    Ok(())
}

fn psi_line(m: i64, a: f64, t: f64, c: f64) -> f64 {
    let mf = m as f64;
    let e = |y: f64| {
        let z = C64::new(c, y);
        let mut v = z * z * (0.5 * t) - z * a;
        if m != 0 {
            v += z.ln() * mf;
        }
        v
    };
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    sign * exp_ray_integral(e, 1.0 / t.sqrt(), DECAY).re / PI
}

/// Closed form `Psi^n_{n-k}(x) = (-1)^{n-k} F_{-(n-k)}(x + k, t)` for `k <= n`.
pub fn psi_closed(n: i64, k: i64, x: f64, t: f64) -> Result<f64, KernelError> {
    check_psi(n, k, t)?;
    let m = (n - k) as usize;
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    Ok(sign * hermite_fk(m, x + k as f64, t))
}

/// Warren density `det(F_{i-j}(x_{N+1-i} - x_{N+1-j}(0), t))`; `x[0]` is the top particle.
pub fn transition_density(x: &[f64], t: f64, init: &InitialCondition) -> Result<f64, KernelError> {
    check_time(t)?;
    let n = x.len();
    if n == 0 {
        return Err(KernelError::Domain("empty configuration".into()));
    }
    if n > MAX_PARTICLES {
        return Err(KernelError::Domain(format!("at most {MAX_PARTICLES} particles, got {n}")));
    }
    let x0 = init.positions(n)?;
    let mut m = Matrix::zeros(n);
    for i in 1..=n {
        for j in 1..=n {
            let v = eval_fk(i as i64 - j as i64, x[n - i] - x0[n - j], t)?;
            m.set(i - 1, j - 1, v);
        }
    }
    Ok(m.det())
}
