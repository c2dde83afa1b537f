//! Biorthogonal polynomials `Phi`, the convolution term `phi^{(n1,n2)}` and the finite-N kernel
//! for the step-spaced start `x_k(0) = -k`.

use super::{check_time, eval_fk, KernelError, KernelPoint};
use crate::quad::{exp_ray_integral, GaussLegendre};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use std::f64::consts::PI;

const DECAY: f64 = 45.0;

/// `Phi^n_{n-l}(x)` by the trapezoidal rule on a circle around the origin.
pub fn eval_biphi(n: i64, l: i64, x: f64, t: f64) -> Result<f64, KernelError> {
    if let Some(v) = check_biphi(n, l, t)? {
        return Ok(v);
    }
    let m = (n - l) as f64;
    let a = x + l as f64;
    let r = ((-a.abs() + (a * a + 4.0 * t * (m + 1.0)).sqrt()) / (2.0 * t)).clamp(0.05, 4.0);
    let mut nodes = 2 * (m as usize + 1) + 2 * (a.abs() * r + 0.5 * t * r * r).ceil() as usize + 32;
    nodes += nodes % 2;
    let mut acc = 0.0;
    for j in 0..nodes {
        let th = 2.0 * PI * (j as f64 + 0.5) / nodes as f64;
        let w = C64::from_polar(r, th);
        let v = (w * a - w * w * (0.5 * t) - w.ln() * m).exp() * (w + 1.0);
        acc += v.re;
    }
    let sign = if (n - l) % 2 == 0 { 1.0 } else { -1.0 };
    Ok(sign * acc / nodes as f64)
}

/// `Phi^n_{n-l}(x) = (-1)^m (c_m + c_{m-1})` with `c_j = [w^j] e^{a w - t w^2 / 2}`, `a = x + l`.
pub fn biphi_polynomial(n: i64, l: i64, x: f64, t: f64) -> Result<f64, KernelError> {
    if let Some(v) = check_biphi(n, l, t)? {
        return Ok(v);
    }
    let m = (n - l) as usize;
    let a = x + l as f64;
    let c = |j: usize| -> f64 {
        let mut s = 0.0;
        let mut i = 0;
        while 2 * i <= j {
            s += (-0.5 * t).powi(i as i32) / factorial(i) * a.powi((j - 2 * i) as i32) / factorial(j - 2 * i);
            i += 1;
        }
        s
    };
    let v = c(m) + if m >= 1 { c(m - 1) } else { 0.0 };
    Ok(if m % 2 == 0 { v } else { -v })
}

fn check_biphi(n: i64, l: i64, t: f64) -> Result<Option<f64>, KernelError> {
    check_time(t)?;
    if n < 1 || l < 1 {
        return Err(KernelError::Label(format!("Phi needs n >= 1 and l >= 1, got n = {n}, l = {l}")));
    }
    Ok(if l > n { Some(0.0) } else { None })
}

fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |p, i| p * i as f64)
}

/// `phi^{(n1,n2)}(x1,x2) = (x1-x2)^{m-1}/(m-1)! 1(x1 >= x2) 1(m > 0)`, `m = n2 - n1`, in log space.
pub fn eval_phi_conv(n1: i64, n2: i64, x1: f64, x2: f64) -> f64 {
    let m = n2 - n1;
    let d = x1 - x2;
    if (1..=20).contains(&m) && d >= 0.0 {
        return d.powi((m - 1) as i32) / factorial((m - 1) as usize);
    }
    log_phi_conv(n1, n2, x1, x2).map_or(0.0, f64::exp)
}

/// `e^{x2 - x1} phi^{(n1,n2)}(x1, x2)`.
pub fn phi_conv_conjugated(n1: i64, n2: i64, x1: f64, x2: f64) -> f64 {
    log_phi_conv(n1, n2, x1, x2).map_or(0.0, |l| (l + x2 - x1).exp())
}

fn log_phi_conv(n1: i64, n2: i64, x1: f64, x2: f64) -> Option<f64> {
    let m = n2 - n1;
    let d = x1 - x2;
    if m <= 0 || d < 0.0 {
        return None;
    }
    if m == 1 {
        return Some(0.0);
    }
    if d == 0.0 {
        return None;
    }
    if m <= 20 {
        return Some((d.powi((m - 1) as i32) / factorial((m - 1) as usize)).ln());
    }
    let mf = m as f64;
    Some((mf - 1.0) * d.ln() - libm::lgamma(mf))
}

/// `(1/2 pi i) int_{i R - delta} e^{-z (x1-x2)} (-z)^{-(n2-n1)} dz`, for `x1 != x2`.
///
/// The vertical line is bent into rays of angle `pi/4` (or `3pi/4` when `x1 < x2`) from `-delta`.
pub fn phi_conv_line(n1: i64, n2: i64, x1: f64, x2: f64, delta: f64) -> Result<f64, KernelError> {
    let d = x1 - x2;
    if d == 0.0 || delta <= 0.0 {
        return Err(KernelError::Domain("line representation needs x1 != x2 and delta > 0".into()));
    }
    let m = (n2 - n1) as f64;
    let alpha = if d > 0.0 { PI / 4.0 } else { 3.0 * PI / 4.0 };
    let dir = C64::from_polar(1.0, alpha);
    let e = |s: f64| {
        let z = C64::new(-delta, 0.0) + dir * s;
        -z * d - (-z).ln() * m + C64::new(0.0, alpha)
    };
    Ok(exp_ray_integral(e, 0.5_f64.min(1.0 / d.abs()), DECAY).im / PI)
}

/// `(1/2 pi i) oint e^{w (x1-x2)} w^{-(n2-n1)} dw 1(x1 >= x2) 1(n2 > n1)` on a circle.
pub fn phi_conv_circle(n1: i64, n2: i64, x1: f64, x2: f64) -> f64 {
    let m = n2 - n1;
    let d = x1 - x2;
    if m <= 0 || d < 0.0 {
        return 0.0;
    }
    let mf = m as f64;
    let r = if d > 0.0 { ((mf - 1.0) / d).clamp(0.1, 1e3) } else { 1.0 };
    let nodes = 2 * (m as usize + (d * r).ceil() as usize) + 64;
    let mut acc = 0.0;
    for j in 0..nodes {
        let th = 2.0 * PI * (j as f64 + 0.5) / nodes as f64;
        let w = C64::from_polar(r, th);
        acc += (w * d - w.ln() * (mf - 1.0)).exp().re;
    }
    acc / nodes as f64
}

/// `Psi^n_{n-k}(x) = F_{k-n}(-(x + k), t)` for any `k >= 1`, the contour passing left of 0.
pub fn psi_extended(n: i64, k: i64, x: f64, t: f64) -> Result<f64, KernelError> {
    if k < 1 {
        return Err(KernelError::Label(format!("Psi needs k >= 1, got {k}")));
    }
    eval_fk(k - n, -(x + k as f64), t)
}

/// `K_t(x1,n1;x2,n2) = -phi^{(n1,n2)} + sum_{k=1}^{n2} Psi^{n1}_{n1-k}(x1) Phi^{n2}_{n2-k}(x2)`.
pub fn eval_finite_kernel(p1: KernelPoint, p2: KernelPoint, t: f64) -> Result<f64, KernelError> {
    check_time(t)?;
    check_labels(p1, p2)?;
    let mut s = 0.0;
    for k in 1..=p2.n {
        let phi = biphi_polynomial(p2.n, k, p2.x, t)?;
        if phi != 0.0 {
            s += psi_extended(p1.n, k, p1.x, t)? * phi;
        }
    }
    Ok(s - eval_phi_conv(p1.n, p2.n, p1.x, p2.x))
}

/// Finite kernel for all pairs `(rows[i], cols[j])`, row-major.
pub fn finite_kernel_matrix(rows: &[KernelPoint], cols: &[KernelPoint], t: f64) -> Result<Vec<f64>, KernelError> {
    let mut m = finite_kernel_sum_matrix(rows, cols, t)?;
    for (i, p1) in rows.iter().enumerate() {
        for (j, p2) in cols.iter().enumerate() {
            m[i * cols.len() + j] -= eval_phi_conv(p1.n, p2.n, p1.x, p2.x);
        }
    }
    Ok(m)
}

/// The biorthogonal sum of the finite kernel without `-phi^{(n1,n2)}`, with `Psi` and `Phi`
/// tabulated once per point.
pub fn finite_kernel_sum_matrix(rows: &[KernelPoint], cols: &[KernelPoint], t: f64) -> Result<Vec<f64>, KernelError> {
    check_time(t)?;
    let kmax = cols.iter().map(|p| p.n).max().unwrap_or(0);
    if let Some(p) = rows.iter().chain(cols).find(|p| p.n < 1) {
        return Err(KernelError::Label(format!("finite kernel labels must be >= 1, got {}", p.n)));
    }
    let psi: Vec<Vec<f64>> = rows
        .par_iter()
        .map(|p| (1..=kmax).map(|k| psi_extended(p.n, k, p.x, t)).collect())
        .collect::<Result<_, _>>()?;
    let phi: Vec<Vec<f64>> = cols
        .par_iter()
        .map(|p| (1..=kmax).map(|k| biphi_polynomial(p.n, k, p.x, t)).collect())
        .collect::<Result<_, _>>()?;
    let mut out = Vec::with_capacity(rows.len() * cols.len());
    for ps in &psi {
        for ph in &phi {
            out.push(ps.iter().zip(ph).map(|(a, b)| a * b).sum());
        }
    }
    Ok(out)
}

fn check_labels(p1: KernelPoint, p2: KernelPoint) -> Result<(), KernelError> {
    if p1.n < 1 || p2.n < 1 {
        return Err(KernelError::Label(format!("finite kernel labels must be >= 1, got {} and {}", p1.n, p2.n)));
    }
    Ok(())
}

/// Finite kernel with the geometric sum done inside a double contour integral,
/// `z = -1 + i y` and `w = e^{i theta} / 4`.
pub fn finite_kernel_double_contour(p1: KernelPoint, p2: KernelPoint, t: f64, n_theta: usize) -> Result<f64, KernelError> {
    check_time(t)?;
    check_labels(p1, p2)?;
    let (x1, n1) = (p1.x, p1.n as f64);
    let (x2, n2) = (p2.x, p2.n as f64);
    let z_part = |y: f64| {
        let z = C64::new(-1.0, y);
        z * z * (0.5 * t) - z * x1 + (-z).ln() * n1
    };
    // Truncation and panel width in y from the z factor alone.
    let mut y_max = 1.0;
    let ref0 = z_part(0.0).re;
    while z_part(y_max).re > ref0 - 50.0 || y_max < 2.0 {
        y_max *= 1.1;
    }
    let rate = t * y_max + x1.abs() + n1 + x2.abs() + 2.0;
    let panels = ((2.0 * y_max * rate / 4.0).ceil() as usize).max(16);
    let rule = GaussLegendre::cached(16);
    let h = 2.0 * y_max / panels as f64;
    let mut zs = Vec::with_capacity(panels * 16);
    for p in 0..panels {
        let lo = -y_max + h * p as f64;
        for (y, wy) in rule.mapped(lo, lo + h) {
            let z = C64::new(-1.0, y);
            zs.push((z, z * z.exp(), z_part(y), wy));
        }
    }
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..n_theta {
        let th = -PI + 2.0 * PI * (j as f64 + 0.5) / n_theta as f64;
        let w = C64::from_polar(0.25, th);
        let wew = w * w.exp();
        let w_part = -w * w * (0.5 * t) + w * x2 - (-w).ln() * n2;
        let pre = (w + 1.0) * w.exp() * w;
        let mut inner = C64::new(0.0, 0.0);
        for &(_, zez, zp, wy) in &zs {
            inner += (zp + w_part).exp() / (zez - wew) * wy;
        }
        acc += inner * pre;
    }
    let sum = acc.re * (2.0 * PI / n_theta as f64) / (4.0 * PI * PI);
    Ok(sum - eval_phi_conv(p1.n, p2.n, x1, x2))
}

/// `K_t(x1 - M, n1 + M; x2 - M, n2 + M)`, the finite kernel seen from a window of `M` extra labels.
pub fn shifted_finite_kernel(p1: KernelPoint, p2: KernelPoint, t: f64, m: i64) -> Result<f64, KernelError> {
    let mf = m as f64;
    eval_finite_kernel(KernelPoint::new(p1.x - mf, p1.n + m), KernelPoint::new(p2.x - mf, p2.n + m), t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn biphi_routes_agree() {
        for (n, l, x, t) in [(4, 1, -2.0, 1.0), (6, 2, 3.0, 0.5), (3, 3, 10.0, 2.0), (5, 1, -7.5, 1.0)] {
            let a = eval_biphi(n, l, x, t).unwrap();
            let b = biphi_polynomial(n, l, x, t).unwrap();
            assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()), "{n} {l} {x} {t}: {a} vs {b}");
        }
    }

    #[test]
    fn phi_conv_small_cases() {
        assert_eq!(eval_phi_conv(1, 3, 5.0, 2.0), 3.0);
        assert_eq!(eval_phi_conv(1, 3, 1.0, 2.0), 0.0);
        assert_eq!(eval_phi_conv(2, 3, 1.0, 1.0), 1.0);
        assert_eq!(eval_phi_conv(3, 2, 5.0, 1.0), 0.0);
        let l = log_phi_conv(0, 10_001, 2e4, 0.0).unwrap();
        assert!((l - (1e4 * 2e4f64.ln() - libm::lgamma(1e4 + 1.0))).abs() < 1e-9 * l.abs());
        assert!(phi_conv_conjugated(0, 10_001, 2e4, 0.0).is_finite());
    }
}
