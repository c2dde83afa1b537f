//! The flat kernel `K_t^flat` on a single contour, its conjugated and scaled forms, and two
//! independent routes: the residual double integral `K^(2)` and the multi-sheet sum.

use super::{check_time, eval_phi_conv, phi_conv_conjugated, KernelError, KernelPoint, ScaledPoint};
use crate::lambert::{lambert_w, phi_derivative, Arm, ArmPoint, ContourKind};
use crate::quad::GaussLegendre;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use std::f64::consts::PI;

const TWO_PI_I: C64 = C64::new(0.0, 2.0 * PI);
const MAX_NODES_PER_ARM: usize = 40_000;

/// Panel controls for contour quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolution {
    /// Gauss-Legendre points per panel.
    pub order: usize,
    /// Largest allowed change of the exponent across one panel.
    pub step: f64,
    /// Truncate once the integrand sits this far (in log) below its peak.
    pub decay: f64,
}

impl Default for Resolution {
    fn default() -> Self {
        Self { order: 16, step: 6.0, decay: 50.0 }
    }
}

impl Resolution {
    /// Panels `factor` times narrower and a longer tail.
    pub fn refined(self, factor: f64) -> Self {
        Self { order: self.order, step: self.step / factor, decay: self.decay + 5.0 * factor.log2().max(0.0) }
    }
}

/// Ranges of `(x, n)` over which one set of contour nodes must stay accurate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelBox {
    pub x1: (f64, f64),
    pub n1: (i64, i64),
    pub x2: (f64, f64),
    pub n2: (i64, i64),
}

impl KernelBox {
    pub fn point(p1: KernelPoint, p2: KernelPoint) -> Self {
        Self { x1: (p1.x, p1.x), n1: (p1.n, p1.n), x2: (p2.x, p2.x), n2: (p2.n, p2.n) }
    }

    /// Same position and label ranges on both sides.
    pub fn square(x: (f64, f64), n: (i64, i64)) -> Self {
        Self { x1: x, n1: n, x2: x, n2: n }
    }

    /// Smallest box holding all given points on both sides.
    pub fn cover(points: &[KernelPoint]) -> Self {
        let mut x = (f64::INFINITY, f64::NEG_INFINITY);
        let mut n = (i64::MAX, i64::MIN);
        for p in points {
            x = (x.0.min(p.x), x.1.max(p.x));
            n = (n.0.min(p.n), n.1.max(p.n));
        }
        Self::square(x, n)
    }
}

/// Output normalization for the flat kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// `K_t^flat`.
    Plain,
    /// `e^{x2 - x1} K_t^flat`.
    Conjugated,
    /// `(2t)^{1/3} e^{x2 - x1} K_t^flat`.
    Scaled,
}

#[derive(Debug, Clone, Copy)]
struct Node {
    z: C64,
    phi: C64,
    lz: C64,
    lphi: C64,
    quad: C64,
    measure: C64,
}

/// Quadrature nodes for `(1/2 pi i) int dz e^{t z^2/2 - z x1} (-z)^{n1} / (e^{t phi^2/2 - phi x2} (-phi)^{n2})`
/// prepared once for a time `t` and a box of arguments.
#[derive(Debug, Clone)]
pub struct FlatKernel {
    t: f64,
    kind: ContourKind,
    nodes: Vec<Node>,
    log_peak: f64,
}

impl FlatKernel {
    pub fn new(t: f64, kind: ContourKind, bbox: KernelBox, res: Resolution) -> Result<Self, KernelError> {
        check_time(t)?;
        if let ContourKind::GammaZero { .. } = kind {
            return Err(KernelError::Domain("the flat kernel needs an open contour".into()));
        }
        let mut nodes = Vec::new();
        let mut log_peak = f64::NEG_INFINITY;
        for arm in [Arm::Lower, Arm::Upper] {
            log_peak = log_peak.max(build_arm(t, kind, arm, &bbox, res, &mut nodes)?);
        }
        Ok(Self { t, kind, nodes, log_peak })
    }

    /// Nodes on `default_contour(t)` at default resolution.
    pub fn auto(t: f64, bbox: KernelBox) -> Result<Self, KernelError> {
        Self::new(t, Self::default_contour(t), bbox, Resolution::default())
    }

    /// The wedge for small times; otherwise `Gamma^rho` with `rho = (2t)^{-2/3} / 2`, which crosses the
    /// real axis about `(2t)^{-1/3}` left of the branch point `-1`.
    pub fn default_contour(t: f64) -> ContourKind {
        if t <= 4.0 {
            ContourKind::default_wedge()
        } else {
            ContourKind::GammaRho { rho: 0.5 * (2.0 * t).powf(-2.0 / 3.0) }
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn contour(&self) -> ContourKind {
        self.kind
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Largest log-modulus of the conjugated integrand over the box. Roughly this many
    /// nats of cancellation are needed to produce an O(1) kernel value.
    pub fn log_peak(&self) -> f64 {
        self.log_peak
    }

    /// Contour integral part; with `conjugated` it carries the factor `e^{x2 - x1}`.
    pub fn integral(&self, p1: KernelPoint, p2: KernelPoint, conjugated: bool) -> f64 {
        let kappa = if conjugated { 1.0 } else { 0.0 };
        let (x1, n1, x2, n2) = (p1.x, p1.n as f64, p2.x, p2.n as f64);
        let mut acc = C64::new(0.0, 0.0);
        for nd in &self.nodes {
            let e = nd.quad - (nd.z + kappa) * x1 + nd.lz * n1 + (nd.phi + kappa) * x2 - nd.lphi * n2;
            acc += nd.measure * e.exp();
        }
        acc.re
    }

    /// `K_t^flat(x1, n1; x2, n2)`.
    pub fn eval(&self, p1: KernelPoint, p2: KernelPoint) -> f64 {
        self.integral(p1, p2, false) - eval_phi_conv(p1.n, p2.n, p1.x, p2.x)
    }

    /// `e^{x2 - x1} K_t^flat(x1, n1; x2, n2)`.
    pub fn eval_conjugated(&self, p1: KernelPoint, p2: KernelPoint) -> f64 {
        self.integral(p1, p2, true) - phi_conv_conjugated(p1.n, p2.n, p1.x, p2.x)
    }

    pub fn eval_normalized(&self, p1: KernelPoint, p2: KernelPoint, norm: Normalization) -> f64 {
        match norm {
            Normalization::Plain => self.eval(p1, p2),
            Normalization::Conjugated => self.eval_conjugated(p1, p2),
            Normalization::Scaled => (2.0 * self.t).cbrt() * self.eval_conjugated(p1, p2),
        }
    }

    /// Contour part for all pairs `(rows[i], cols[j])`, row-major, without `-phi^{(n1,n2)}`. The sum
    /// factorizes into a row factor and a column factor per node, balanced per node against overflow.
    pub fn integral_matrix(&self, rows: &[KernelPoint], cols: &[KernelPoint], norm: Normalization) -> Vec<f64> {
        let kappa = if norm == Normalization::Plain { 0.0 } else { 1.0 };
        let scale = if norm == Normalization::Scaled { (2.0 * self.t).cbrt() } else { 1.0 };
        let row_exp = |nd: &Node, p: &KernelPoint| nd.z * nd.z * (0.5 * self.t) - (nd.z + kappa) * p.x + nd.lz * p.n as f64;
        let col_exp = |nd: &Node, p: &KernelPoint| -nd.phi * nd.phi * (0.5 * self.t) + (nd.phi + kappa) * p.x - nd.lphi * p.n as f64;
        let shifts: Vec<f64> = self
            .nodes
            .par_iter()
            .map(|nd| {
                let a = rows.iter().map(|p| row_exp(nd, p).re).fold(f64::NEG_INFINITY, f64::max);
                let b = cols.iter().map(|p| col_exp(nd, p).re).fold(f64::NEG_INFINITY, f64::max);
                0.5 * (a - b)
            })
            .collect();
        let factors = |pts: &[KernelPoint], row: bool| -> Vec<Vec<C64>> {
            pts.par_iter()
                .map(|p| {
                    self.nodes
                        .iter()
                        .zip(&shifts)
                        .map(|(nd, &sh)| {
                            if row {
                                nd.measure * (row_exp(nd, p) - sh).exp()
                            } else {
                                (col_exp(nd, p) + sh).exp()
                            }
                        })
                        .collect()
                })
                .collect()
        };
        let a = factors(rows, true);
        let b = factors(cols, false);
        rows.par_iter()
            .zip(&a)
            .flat_map_iter(|(_, ar)| {
                b.iter().map(move |bc| {
                    let mut acc = 0.0;
                    for (u, v) in ar.iter().zip(bc) {
                        acc += u.re * v.re - u.im * v.im;
                    }
                    scale * acc
                })
            })
            .collect()
    }

    /// Kernel values for all pairs `(rows[i], cols[j])`, row-major.
    pub fn matrix(&self, rows: &[KernelPoint], cols: &[KernelPoint], norm: Normalization) -> Vec<f64> {
        let scale = if norm == Normalization::Scaled { (2.0 * self.t).cbrt() } else { 1.0 };
        let mut m = self.integral_matrix(rows, cols, norm);
        for (i, p1) in rows.iter().enumerate() {
            for (j, p2) in cols.iter().enumerate() {
                let phi = if norm == Normalization::Plain {
                    eval_phi_conv(p1.n, p2.n, p1.x, p2.x)
                } else {
                    phi_conv_conjugated(p1.n, p2.n, p1.x, p2.x)
                };
                m[i * cols.len() + j] -= scale * phi;
            }
        }
        m
    }
}

fn build_arm(
    t: f64,
    kind: ContourKind,
    arm: Arm,
    bbox: &KernelBox,
    res: Resolution,
    out: &mut Vec<Node>,
) -> Result<f64, KernelError> {
    let mid = |a: (f64, f64)| 0.5 * (a.0 + a.1);
    let half = |a: (f64, f64)| 0.5 * (a.1 - a.0);
    let midn = |a: (i64, i64)| 0.5 * (a.0 as f64 + a.1 as f64);
    let halfn = |a: (i64, i64)| 0.5 * (a.1 as f64 - a.0 as f64);
    let (cx1, hx1, cn1, hn1) = (mid(bbox.x1), half(bbox.x1), midn(bbox.n1), halfn(bbox.n1));
    let (cx2, hx2, cn2, hn2) = (mid(bbox.x2), half(bbox.x2), midn(bbox.n2), halfn(bbox.n2));

    // Upper bound of the log-integrand over the box, and its rate of change along the arm.
    let profile = |p: &ArmPoint| -> (f64, f64) {
        let (z, phi) = (p.z, p.phi);
        let lz = (-z).ln();
        let lphi = (-phi).ln();
        let e = (z * z - phi * phi) * (0.5 * t) - (z + 1.0) * cx1 + lz * cn1 + (phi + 1.0) * cx2 - lphi * cn2;
        let env = e.re + hx1 * (z.re + 1.0).abs() + hn1 * lz.re.abs() + hx2 * (phi.re + 1.0).abs() + hn2 * lphi.re.abs();
        let dz = p.dz.norm();
        if dz == 0.0 {
            return (env, 0.0);
        }
        let dphi = phi_derivative(z, phi);
        let de = z * t - cx1 + cn1 / z + (-phi * t + cx2 - cn2 / phi) * dphi;
        let rate = (de.norm() + hx1 + hn1 / z.norm() + (hx2 + hn2 / phi.norm()) * dphi.norm()) * dz;
        (env, if rate.is_finite() { rate } else { 0.0 })
    };

    let rule = GaussLegendre::cached(res.order);
    let mut u = 0.0;
    let mut h = 0.25;
    let mut r_left = profile(&kind.arm_point(arm, u)?).1;
    let mut peak = f64::NEG_INFINITY;
    let mut quiet = 0;
    let start = out.len();
    loop {
        loop {
            let r_mid = profile(&kind.arm_point(arm, u + 0.5 * h)?).1;
            let r_right = profile(&kind.arm_point(arm, u + h)?).1;
            if h * r_left.max(r_mid).max(r_right) <= res.step || h < 1e-10 {
                break;
            }
            h *= 0.5;
        }
        let mut panel_max = f64::NEG_INFINITY;
        for (s, w) in rule.mapped(u, u + h) {
            let p = kind.arm_point(arm, s)?;
            panel_max = panel_max.max(profile(&p).0);
            out.push(Node {
                z: p.z,
                phi: p.phi,
                lz: (-p.z).ln(),
                lphi: (-p.phi).ln(),
                quad: (p.z * p.z - p.phi * p.phi) * (0.5 * t),
                measure: p.dz * w / TWO_PI_I,
            });
        }
        if panel_max < peak - res.decay {
            quiet += 1;
            if quiet >= 2 {
                return Ok(peak);
            }
        } else {
            quiet = 0;
        }
        peak = peak.max(panel_max);
        u += h;
        r_left = profile(&kind.arm_point(arm, u)?).1;
        h *= 1.3;
        if out.len() - start > MAX_NODES_PER_ARM || !peak.is_finite() && u > 1e3 {
            return Err(KernelError::NonConvergence(format!(
                "contour tail did not decay on {kind:?} at t = {t} (u = {u})"
            )));
        }
    }
}

/// `K_t^flat(p1, p2)` on `FlatKernel::default_contour(t)` at default resolution.
pub fn eval_flat_kernel(p1: KernelPoint, p2: KernelPoint, t: f64) -> Result<f64, KernelError> {
    Ok(FlatKernel::auto(t, KernelBox::point(p1, p2))?.eval(p1, p2))
}

/// Flat kernel at two Airy-scale points sharing the same `t`.
pub fn eval_conjugated_kernel(q1: ScaledPoint, q2: ScaledPoint, norm: Normalization) -> Result<f64, KernelError> {
    if q1.t != q2.t {
        return Err(KernelError::Domain(format!("mismatched times {} and {}", q1.t, q2.t)));
    }
    let (p1, p2) = (q1.to_kernel_point(), q2.to_kernel_point());
    Ok(FlatKernel::auto(q1.t, KernelBox::point(p1, p2))?.eval_normalized(p1, p2, norm))
}

/// `K^(2)`: the `M`-independent residual piece of the shifted finite kernel, as a double
/// integral with `z` on a wedge and `w` on the unit circle. Equals the contour part of
/// `K_t^flat` (without `-phi^{(n1,n2)}`).
pub fn flat_kernel_k2(p1: KernelPoint, p2: KernelPoint, t: f64, wedge: ContourKind, n_theta: usize) -> Result<f64, KernelError> {
    check_time(t)?;
    let ContourKind::GammaMinus { .. } = wedge else {
        return Err(KernelError::Domain("K2 needs a wedge contour for z".into()));
    };
    let (x1, n1, x2, n2) = (p1.x, p1.n as f64, p2.x, p2.n as f64);
    let z_part = |z: C64| z * z * (0.5 * t) - z * x1 + (-z).ln() * n1 - (z.ln() + z) * n2;
    let rule = GaussLegendre::cached(16);
    let mut zs: Vec<(C64, C64, C64)> = Vec::new();
    for arm in [Arm::Lower, Arm::Upper] {
        let mut u_max = 1.0;
        let base = z_part(wedge.arm_point(arm, 0.0)?.z).re;
        let mut peak = base;
        loop {
            let v = z_part(wedge.arm_point(arm, u_max)?.z).re;
            peak = peak.max(v);
            if v < peak - 50.0 && u_max > 2.0 {
                break;
            }
            u_max *= 1.1;
        }
        let rate = t * (u_max + 2.0) + x1.abs() + n1.abs() + n2.abs() + 2.0;
        let panels = ((u_max * rate / 4.0).ceil() as usize).max(8);
        let h = u_max / panels as f64;
        for p in 0..panels {
            for (u, w) in rule.mapped(h * p as f64, h * (p + 1) as f64) {
                let ap = wedge.arm_point(arm, u)?;
                zs.push((ap.z * ap.z.exp(), z_part(ap.z), ap.dz * w));
            }
        }
    }
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..n_theta {
        let th = -PI + 2.0 * PI * (j as f64 + 0.5) / n_theta as f64;
        let w = C64::from_polar(1.0, th);
        let wew = w * w.exp();
        let w_part = -w * w * (0.5 * t) + w * (x2 + n2) + C64::new(0.0, PI * n2);
        let pre = (w + 1.0) * w.exp() * C64::new(0.0, 1.0) * w;
        let mut inner = C64::new(0.0, 0.0);
        for &(zez, zp, dz) in &zs {
            inner += (zp + w_part).exp() / (zez - wew) * dz;
        }
        acc += inner * pre;
    }
    Ok((acc * (2.0 * PI / n_theta as f64)).re / (4.0 * PI * PI))
}

/// Multi-sheet form of the contour part of `K_t^flat`: a sum over the non-principal solutions
/// `z_k(w)` of `z e^z = w e^w`, `0 < |k| <= k_max`, with `w` on the unit circle.
pub fn flat_kernel_multisheet(p1: KernelPoint, p2: KernelPoint, t: f64, k_max: i32, n_theta: usize) -> Result<f64, KernelError> {
    check_time(t)?;
    let (x1, n1, x2, n2) = (p1.x, p1.n as f64, p2.x, p2.n as f64);
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..n_theta {
        let th = -PI + 2.0 * PI * (j as f64 + 0.5) / n_theta as f64;
        let w = C64::from_polar(1.0, th);
        let wew = w * w.exp();
        let w_part = -w * w * (0.5 * t) + w * x2 - (-w).ln() * n2;
        let pre = (w + 1.0) * w.exp() * w;
        let mut inner = C64::new(0.0, 0.0);
        for k in (-k_max..=k_max).filter(|&k| k != 0) {
            let z = lambert_w(k, wew)?;
            let e = z * z * (0.5 * t) - z * x1 + (-z).ln() * n1 - z + w_part;
            inner += e.exp() / (z + 1.0);
        }
        acc += inner * pre;
    }
    Ok((acc / n_theta as f64).re)
}
