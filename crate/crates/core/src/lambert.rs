//! Multi-branch complex Lambert W, the companion map `phi(z) = L0(z e^z)`,
//! and the steep-descent contours used by the flat kernel.

use num_complex::Complex64 as C64;
use std::f64::consts::{E, PI};
use thiserror::Error;

/// 1/e rounded to the nearest double.
pub const INV_E: f64 = 0.367_879_441_171_442_33;
const TWO_PI: f64 = 2.0 * PI;
const MAX_ITER: usize = 100;

/// Coefficients of `L0` expanded around the branch point in `p = sqrt(2(ez+1))`.
const BRANCH_SERIES: [f64; 10] = [
    -1.0,
    1.0,
    -1.0 / 3.0,
    11.0 / 72.0,
    -43.0 / 540.0,
    769.0 / 17280.0,
    -221.0 / 8505.0,
    680_863.0 / 43_545_600.0,
    -1963.0 / 204_120.0,
    226_287_557.0 / 37_623_398_400.0,
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LambertError {
    #[error("branch {k} of Lambert W is singular at z = 0")]
    Singular { k: i32 },
    #[error("non-finite argument {z}")]
    NonFinite { z: C64 },
    #[error("Lambert W did not converge on branch {k} at z = {z}: last iterate {last}, residual {residual:e}")]
    NonConvergence { k: i32, z: C64, last: C64, residual: f64 },
    #[error("contour parameter {tau} lies in the excluded interval [0, 1)")]
    ExcludedParameter { tau: f64 },
    #[error("invalid contour: {0}")]
    InvalidContour(String),
}

/// Branch label `k` of `L_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BranchIndex(pub i32);

impl BranchIndex {
    /// Closed interval that contains `Im L_k(z)` for every `z`.
    pub fn strip(self) -> (f64, f64) {
        let k = self.0 as f64;
        match self.0 {
            0 => (-PI, PI),
            k_ if k_ > 0 => ((2.0 * k - 2.0) * PI, (2.0 * k + 1.0) * PI),
            _ => ((2.0 * k - 1.0) * PI, (2.0 * k + 2.0) * PI),
        }
    }

    pub fn contains(self, w: C64) -> bool {
        let (lo, hi) = self.strip();
        let slack = 1e-12 * (1.0 + w.norm());
        w.im >= lo - slack && w.im <= hi + slack
    }
}

/// Side from which a point on a branch cut is approached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CutSide {
    #[default]
    Above,
    Below,
}

/// `L_k(z)`; points on the negative real axis are taken as limits from `Im z > 0`.
pub fn lambert_w(k: i32, z: C64) -> Result<C64, LambertError> {
    lambert_w_side(k, z, CutSide::Above)
}

/// `L_k(z)` with an explicit side for points on the negative real axis.
pub fn lambert_w_side(k: i32, z: C64, side: CutSide) -> Result<C64, LambertError> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(LambertError::NonFinite { z });
    }
    if z.im == 0.0 {
        let zr = C64::new(z.re, 0.0);
        return match side {
            CutSide::Above => solve(k, zr),
            CutSide::Below => solve(-k, zr).map(|w| w.conj()),
        };
    }
    solve(k, z)
}

/// Partial sum of the branch-point expansion in `p`.
pub fn branch_point_series(p: C64, terms: usize) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for &c in BRANCH_SERIES[..terms.min(BRANCH_SERIES.len())].iter().rev() {
        acc = acc * p + c;
    }
    acc
}

fn solve(k: i32, z: C64) -> Result<C64, LambertError> {
    if z.re == 0.0 && z.im == 0.0 {
        return if k == 0 { Ok(C64::new(0.0, 0.0)) } else { Err(LambertError::Singular { k }) };
    }
    let q = (z + INV_E) * E;
    let adjacent = match k {
        0 => Some(1.0),
        -1 if z.im >= 0.0 => Some(-1.0),
        1 if z.im < 0.0 => Some(-1.0),
        _ => None,
    };
    let mut seeds: Vec<C64> = Vec::with_capacity(4);
    if let Some(sign) = adjacent {
        if q.norm() < 0.09 {
            let p = (q * 2.0).sqrt() * sign;
            let w = branch_point_series(p, BRANCH_SERIES.len());
            if p.norm() < 1e-3 {
                return Ok(w);
            }
            seeds.push(w);
        }
    }
    if k == 0 {
        if z.norm() < 0.3 {
            seeds.push(z * (C64::new(1.0, 0.0) - z + z * z * 1.5));
        } else if z.re > -0.5 && z.norm() < 3.0 {
            seeds.push((z + 1.0).ln());
        }
    }
    seeds.push(asymptotic_seed(k, z));
    let log_form = k.abs() >= 2 || z.norm() > 1e50;

    let mut last = seeds[0];
    let mut last_res = f64::INFINITY;
    for &seed in &seeds {
        let w = if log_form { log_newton(k, z, seed) } else { halley(z, seed) };
        let res = residual(w, z);
        if accept(k, z, w) {
            return Ok(w);
        }
        if res < last_res || !last_res.is_finite() {
            last = w;
            last_res = res;
        }
        let alt = if log_form { halley(z, seed) } else { log_newton(k, z, seed) };
        if accept(k, z, alt) {
            return Ok(alt);
        }
    }
    Err(LambertError::NonConvergence { k, z, last, residual: last_res })
}

fn asymptotic_seed(k: i32, z: C64) -> C64 {
    let l1 = z.ln() + C64::new(0.0, TWO_PI * k as f64);
    if l1.norm() < 1e-8 {
        return C64::new(0.5, 0.0);
    }
    let l2 = l1.ln();
    l1 - l2 + l2 / l1 + l2 * (l2 - 2.0) / (l1 * l1 * 2.0)
}

fn halley(z: C64, seed: C64) -> C64 {
    let mut w = seed;
    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - z;
        let wp1 = w + 1.0;
        if wp1.norm() == 0.0 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (wp1 * 2.0);
        if denom.norm() == 0.0 || !denom.re.is_finite() {
            break;
        }
        let step = f / denom;
        w -= step;
        if !(w.re.is_finite() && w.im.is_finite()) {
            break;
        }
        if step.norm() <= 1e-15 * (1.0 + w.norm()) {
            break;
        }
    }
    w
}

/// Newton iteration on `w + log w = log z + 2 pi i k`, well conditioned for large `|w|`.
fn log_newton(k: i32, z: C64, seed: C64) -> C64 {
    let target = z.ln() + C64::new(0.0, TWO_PI * k as f64);
    let mut w = seed;
    for _ in 0..MAX_ITER {
        if w.norm() == 0.0 {
            break;
        }
        let g = w + w.ln() - target;
        let step = g * w / (w + 1.0);
        w -= step;
        if !(w.re.is_finite() && w.im.is_finite()) {
            break;
        }
        if step.norm() <= 1e-15 * (1.0 + w.norm()) {
            break;
        }
    }
    w
}

fn residual(w: C64, z: C64) -> f64 {
    let r = (w * w.exp() - z).norm();
    if r.is_finite() {
        r
    } else {
        f64::INFINITY
    }
}

fn accept(k: i32, z: C64, w: C64) -> bool {
    if !(w.re.is_finite() && w.im.is_finite()) {
        return false;
    }
    let tol = 1e-12 * (1.0 + z.norm());
    if residual(w, z) > tol {
        // Tiny |z| on non-principal branches: compare in log form instead.
        let g = w + w.ln() - z.ln() - C64::new(0.0, TWO_PI * k as f64);
        if g.norm() > 1e-12 * (1.0 + w.norm()) {
            return false;
        }
    }
    if !BranchIndex(k).contains(w) {
        return false;
    }
    branch_of(w, z).contains(&k)
}

/// Branch labels consistent with `w + log w = log z + 2 pi i k`.
fn branch_of(w: C64, z: C64) -> Vec<i32> {
    let arg_z = z.im.atan2(z.re);
    let near_negative_axis = w.re < 0.0 && w.im.abs() <= 1e-12 * (1.0 + w.norm());
    let args = if near_negative_axis { vec![PI, -PI] } else { vec![w.im.atan2(w.re)] };
    let mut out = Vec::new();
    for a in args {
        let m = ((w.im + a - arg_z) / TWO_PI).round() as i32;
        if near_negative_axis {
            // On the real axis, L0 covers [-1, 0) and the neighbouring branches cover (-inf, -1].
            let principal = w.re >= -1.0 - 1e-9;
            if (m == 0) != principal && w.re.abs() > 1e-300 {
                continue;
            }
        }
        if !out.contains(&m) {
            out.push(m);
        }
    }
    out
}

/// `phi(z) = L0(z e^z)`.
pub fn phi_map(z: C64) -> Result<C64, LambertError> {
    lambert_w(0, z * z.exp())
}

/// Derivative of `phi` given the pair `(z, phi(z))`.
pub fn phi_derivative(z: C64, phi: C64) -> C64 {
    (z + 1.0) * phi / ((phi + 1.0) * z)
}

/// Point `gamma(tau)` of the contour `Gamma^rho` and its derivative in `tau`.
///
/// At integer `tau` the branch `L_tau` is evaluated from below the cut, which makes
/// `gamma` continuous there.
pub fn gamma_contour(rho: f64, tau: f64) -> Result<(C64, C64), LambertError> {
    if !(0.0..1.0).contains(&rho) {
        return Err(LambertError::InvalidContour(format!("rho = {rho} outside [0, 1)")));
    }
    if (0.0..1.0).contains(&tau) {
        return Err(LambertError::ExcludedParameter { tau });
    }
    let k = tau.floor();
    let frac = tau - k;
    let arg = rho_circle(rho, frac);
    let side = if frac == 0.0 { CutSide::Below } else { CutSide::Above };
    let w = lambert_w_side(k as i32, arg, side)?;
    Ok((w, gamma_derivative(w)))
}

/// `d gamma / d tau = 2 pi i (1 - 1/(gamma + 1))`.
pub fn gamma_derivative(w: C64) -> C64 {
    C64::new(0.0, TWO_PI) * (C64::new(1.0, 0.0) - (w + 1.0).inv())
}

/// `phi(gamma(tau)) = L0(-(1-rho) e^{2 pi i {tau} - 1})`, evaluated without forming `z e^z`.
pub fn gamma_image(rho: f64, tau: f64) -> Result<C64, LambertError> {
    let frac = tau - tau.floor();
    lambert_w(0, rho_circle(rho, frac))
}

fn rho_circle(rho: f64, frac: f64) -> C64 {
    let ang = TWO_PI * frac;
    let r = -(1.0 - rho) * INV_E;
    if frac == 0.0 {
        C64::new(r, 0.0)
    } else {
        C64::new(r * ang.cos(), r * ang.sin())
    }
}

/// Real crossing `z0 <= -1` of `Gamma^rho`.
pub fn crossing_point(rho: f64) -> Result<f64, LambertError> {
    Ok(lambert_w(-1, C64::new(-(1.0 - rho) * INV_E, 0.0))?.re)
}

/// The two real points `z0* = phi(z0)` and `z1*` of `phi(Gamma^rho)`.
pub fn image_crossings(rho: f64) -> Result<(f64, f64), LambertError> {
    let c = (1.0 - rho) * INV_E;
    Ok((lambert_w(0, C64::new(-c, 0.0))?.re, lambert_w(0, C64::new(c, 0.0))?.re))
}

/// One half of a contour that runs from `-i inf` to `+i inf`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    Lower,
    Upper,
}

/// Contour families used by the flat kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContourKind {
    /// `Gamma^rho`, built from Lambert branches.
    GammaRho { rho: f64 },
    /// Two rays `vertex + e^{+-i theta} |y|`.
    GammaMinus { theta: f64, vertex: f64 },
    /// Circle `radius * e^{i theta}`.
    GammaZero { radius: f64 },
}

impl ContourKind {
    /// Default wedge: vertex -2, opening angle 2 pi / 3.
    pub fn default_wedge() -> Self {
        ContourKind::GammaMinus { theta: 2.0 * PI / 3.0, vertex: -2.0 }
    }

    pub fn unit_circle() -> Self {
        ContourKind::GammaZero { radius: 1.0 }
    }

    /// Point on an arm at parameter `u >= 0` and the oriented line element `dz/du`.
    ///
    /// Both arms start at the real crossing; the integral along the whole contour is
    /// the sum over arms of `int_0^inf f(z(u)) dz(u)`.
    pub fn arm_point(&self, arm: Arm, u: f64) -> Result<ArmPoint, LambertError> {
        match *self {
            ContourKind::GammaRho { rho } => {
                let (tau, dtau) = match arm {
                    Arm::Upper => (1.0 + u * u, 2.0 * u),
                    Arm::Lower => (-u * u, 2.0 * u),
                };
                let (z, d) = if u == 0.0 {
                    let z0 = C64::new(crossing_point(rho)?, 0.0);
                    (z0, C64::new(0.0, 0.0))
                } else {
                    gamma_contour(rho, tau)?
                };
                let phi = gamma_image(rho, tau)?;
                let dz = if u == 0.0 { C64::new(0.0, 0.0) } else { d * dtau };
                Ok(ArmPoint { z, phi, dz })
            }
            ContourKind::GammaMinus { theta, vertex } => {
                let dir = match arm {
                    Arm::Upper => C64::from_polar(1.0, theta),
                    Arm::Lower => C64::from_polar(1.0, -theta),
                };
                let z = C64::new(vertex, 0.0) + dir * u;
                let dz = match arm {
                    Arm::Upper => dir,
                    Arm::Lower => -dir,
                };
                Ok(ArmPoint { z, phi: phi_map(z)?, dz })
            }
            ContourKind::GammaZero { .. } => Err(LambertError::InvalidContour(
                "a circle has no arms; use circle nodes".into(),
            )),
        }
    }
}

/// Contour point with its `phi` image and oriented line element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmPoint {
    pub z: C64,
    pub phi: C64,
    pub dz: C64,
}

/// A quadrature node on a contour; `weight * dz` is the complex quadrature weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourNode {
    pub param: f64,
    pub z: C64,
    pub phi: C64,
    pub dz: C64,
    pub weight: f64,
}

impl ContourNode {
    #[inline]
    pub fn measure(&self) -> C64 {
        self.dz * self.weight
    }
}

/// A contour with a finite truncation and its quadrature nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourSpec {
    pub kind: ContourKind,
    pub truncation: f64,
    pub nodes: Vec<ContourNode>,
}

impl ContourSpec {
    /// Composite Gauss-Legendre nodes on both arms over `[0, u_max]` with given breakpoints.
    pub fn from_breaks(kind: ContourKind, breaks: &[f64], order: usize) -> Result<Self, LambertError> {
        let mut nodes = Vec::new();
        for arm in [Arm::Lower, Arm::Upper] {
            for (u, w) in crate::quad::composite(breaks, order) {
                let p = kind.arm_point(arm, u)?;
                nodes.push(ContourNode { param: u, z: p.z, phi: p.phi, dz: p.dz, weight: w });
            }
        }
        let truncation = breaks.last().copied().unwrap_or(0.0);
        Ok(Self { kind, truncation, nodes })
    }

    /// Trapezoidal nodes on a circle, counter-clockwise.
    pub fn circle(radius: f64, n: usize) -> Self {
        let nodes = (0..n)
            .map(|j| {
                let th = -PI + TWO_PI * j as f64 / n as f64;
                let w = C64::from_polar(radius, th);
                ContourNode { param: th, z: w, phi: w, dz: C64::new(0.0, 1.0) * w, weight: TWO_PI / n as f64 }
            })
            .collect();
        Self { kind: ContourKind::GammaZero { radius }, truncation: PI, nodes }
    }

    /// `(1 / 2 pi i) sum f(z, phi) dz`.
    pub fn integrate<F: FnMut(C64, C64) -> C64>(&self, mut f: F) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for n in &self.nodes {
            acc += f(n.z, n.phi) * n.measure();
        }
        acc / C64::new(0.0, TWO_PI)
    }
}

/// `f3(z) = (z^2 + 2z - phi^2 - 2phi) / 2`.
pub fn f3(z: C64, phi: C64) -> C64 {
    ((z + 1.0) * (z + 1.0) - (phi + 1.0) * (phi + 1.0)) * 0.5
}

/// Quadratic-order exponent piece in the label offsets `r1, r2`.
pub fn f2(z: C64, phi: C64, r1: f64, r2: f64) -> C64 {
    let c = 2f64.powf(5.0 / 3.0);
    ((z + 1.0 + (-z).ln()) * r1 - (phi + 1.0 + (-phi).ln()) * r2) * c
}

/// Linear-order exponent piece in the position offsets `s1, s2`.
pub fn f1(z: C64, phi: C64, s1: f64, s2: f64) -> C64 {
    ((z + 1.0) * s1 - (phi + 1.0) * s2) * 2f64.powf(1.0 / 3.0)
}

/// `f1` with shifted offsets `s~ = s + L`.
pub fn f11(z: C64, phi: C64, st1: f64, st2: f64) -> C64 {
    f1(z, phi, st1, st2)
}

/// Compensating piece `2^{1/3} L (phi - z)`.
pub fn f12(z: C64, phi: C64, l: f64) -> C64 {
    (phi - z) * (2f64.powf(1.0 / 3.0) * l)
}

/// Steep-descent exponent pieces evaluated on `z` with their parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteepDescentDiagnostics {
    pub r1: f64,
    pub r2: f64,
    pub s1: f64,
    pub s2: f64,
    pub l: f64,
}

impl SteepDescentDiagnostics {
    pub fn f3(&self, z: C64) -> Result<C64, LambertError> {
        Ok(f3(z, phi_map(z)?))
    }

    pub fn f2(&self, z: C64) -> Result<C64, LambertError> {
        Ok(f2(z, phi_map(z)?, self.r1, self.r2))
    }

    pub fn f11(&self, z: C64) -> Result<C64, LambertError> {
        Ok(f11(z, phi_map(z)?, self.s1 + self.l, self.s2 + self.l))
    }

    pub fn f12(&self, z: C64) -> Result<C64, LambertError> {
        Ok(f12(z, phi_map(z)?, self.l))
    }

    /// Full exponent `t f3 + t^{2/3} f2 + t^{1/3} (f11 + f12)`.
    pub fn exponent(&self, z: C64, t: f64) -> Result<C64, LambertError> {
        let phi = phi_map(z)?;
        Ok(f3(z, phi) * t
            + f2(z, phi, self.r1, self.r2) * t.powf(2.0 / 3.0)
            + (f11(z, phi, self.s1 + self.l, self.s2 + self.l) + f12(z, phi, self.l)) * t.powf(1.0 / 3.0))
    }
}

/// Outcome of one geometric check.
#[derive(Debug, Clone, PartialEq)]
pub struct ClaimCheck {
    pub id: &'static str,
    pub description: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// All checks run by [`validate_contour`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContourReport {
    pub checks: Vec<ClaimCheck>,
}

impl ContourReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&ClaimCheck> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    fn push(&mut self, id: &'static str, description: &'static str, passed: bool, detail: String) {
        self.checks.push(ClaimCheck { id, description, passed, detail });
    }
}

/// Parameter grid for `Gamma^rho` checks: `|tau|` in `[1.01, 20]` on both sides and
/// `tau` in `[-1.01, -0.01]`, avoiding the excluded interval `[0, 1)`.
pub fn standard_tau_grid() -> Vec<f64> {
    let mut g = Vec::new();
    for j in 0..=400 {
        let a = 1.01 + (20.0 - 1.01) * j as f64 / 400.0;
        g.push(a);
        g.push(-a);
    }
    for j in 0..=100 {
        g.push(-0.01 - j as f64 / 100.0);
    }
    g
}

/// Evaluates the geometric properties of a contour on a parameter grid.
pub fn validate_contour(kind: &ContourKind, tau_grid: &[f64]) -> Result<ContourReport, LambertError> {
    match *kind {
        ContourKind::GammaRho { rho } => validate_gamma_rho(rho, tau_grid),
        ContourKind::GammaMinus { theta, vertex } => validate_wedge(theta, vertex, tau_grid),
        ContourKind::GammaZero { radius } => validate_circle(radius),
    }
}

struct GridPoint {
    tau: f64,
    z: C64,
    dz: C64,
    phi: C64,
}

fn validate_gamma_rho(rho: f64, tau_grid: &[f64]) -> Result<ContourReport, LambertError> {
    let mut rep = ContourReport::default();
    let z0 = crossing_point(rho)?;
    let (z0s, z1s) = image_crossings(rho)?;
    let mut upper = Vec::new();
    let mut lower = Vec::new();
    for &tau in tau_grid {
        let (z, dz) = gamma_contour(rho, tau)?;
        let phi = gamma_image(rho, tau)?;
        let p = GridPoint { tau, z, dz, phi };
        if tau >= 1.0 {
            upper.push(p);
        } else {
            lower.push(p);
        }
    }
    upper.sort_by(|a, b| a.tau.total_cmp(&b.tau));
    upper.dedup_by(|a, b| a.tau == b.tau);
    // Lower arm ordered by increasing distance from the crossing.
    lower.sort_by(|a, b| b.tau.total_cmp(&a.tau));
    lower.dedup_by(|a, b| a.tau == b.tau);
    let all: Vec<&GridPoint> = upper.iter().chain(lower.iter()).collect();

    let off_axis = upper.iter().all(|p| p.z.im > 0.0) && lower.iter().all(|p| p.z.im < 0.0);
    rep.push(
        "contour.single_real_crossing",
        "the contour meets the real line only at z0 <= -1",
        off_axis && z0 <= -1.0,
        format!("z0 = {z0:.15}"),
    );

    let dev = (z0 + 1.0 + (2.0 * rho).sqrt()).abs();
    rep.push(
        "contour.crossing_expansion",
        "z0 + 1 + sqrt(2 rho) = O(rho)",
        dev <= 2.0 * rho + 1e-14,
        format!("|z0 + 1 + sqrt(2 rho)| = {dev:.3e}"),
    );

    let worst = all.iter().map(|p| p.z.re - z0).fold(f64::NEG_INFINITY, f64::max);
    rep.push(
        "contour.real_part_max_at_crossing",
        "Re z < z0 away from the crossing",
        worst < 0.0,
        format!("max Re z - z0 = {worst:.3e}"),
    );

    let mono = |arm: &[GridPoint]| arm.windows(2).all(|w| w[1].z.re < w[0].z.re);
    rep.push(
        "contour.real_part_monotone",
        "Re z decreases moving away from the crossing on each arm",
        mono(&upper) && mono(&lower),
        String::new(),
    );

    let slope = all
        .iter()
        .filter(|p| p.tau.abs() >= 2.0)
        .map(|p| p.dz.re.abs())
        .fold(0.0f64, f64::max);
    rep.push(
        "contour.real_part_slope_bound",
        "|d Re gamma / d tau| <= 3 pi for |tau| >= 2",
        slope <= 3.0 * PI,
        format!("max slope = {slope:.4}"),
    );

    let angle_dev = |p: &GridPoint| (p.dz.arg() - PI / 2.0).abs();
    let far_up = upper.last();
    let far_low = lower.last();
    let near = all.iter().filter(|p| p.tau.abs() >= 2.0).map(|p| angle_dev(p)).fold(0.0f64, f64::max);
    let angle_ok = match (far_up, far_low) {
        (Some(u), Some(l)) => {
            let du = angle_dev(u);
            let dl = angle_dev(l);
            let shrink = |arm: &[GridPoint]| {
                let devs: Vec<f64> = arm.iter().filter(|p| p.tau.abs() >= 2.0).map(angle_dev).collect();
                devs.windows(2).all(|w| w[1] <= w[0] + 1e-12)
            };
            du < 0.05 && dl < 0.05 && shrink(&upper) && shrink(&lower) && u.z.im > 0.0 && l.z.im < 0.0
        }
        _ => false,
    };
    rep.push(
        "contour.asymptotic_angle",
        "the arms leave towards +-i infinity",
        angle_ok,
        format!("largest direction deviation for |tau| >= 2: {near:.3e}"),
    );

    // Image checks use the grid plus a fine sweep of the fractional part.
    let mut fracs: Vec<f64> = all.iter().map(|p| p.tau - p.tau.floor()).collect();
    fracs.extend((1..512).map(|j| j as f64 / 512.0));
    fracs.sort_by(|a, b| a.total_cmp(b));
    fracs.dedup();
    let mut sign_ok = true;
    let mut image = Vec::with_capacity(fracs.len());
    for &s in &fracs {
        let w = gamma_image(rho, s)?;
        image.push((s, w));
        let ok = if s == 0.0 {
            (w.re - z0s).abs() < 1e-12 && w.im == 0.0
        } else if s == 0.5 {
            (w.re - z1s).abs() < 1e-12 && w.im.abs() < 1e-15
        } else if s < 0.5 {
            w.im < 0.0
        } else {
            w.im > 0.0
        };
        sign_ok &= ok;
    }
    rep.push(
        "image.real_crossings",
        "phi(Gamma) meets the real line only at z0* >= -1 and z1* > z0*",
        sign_ok && z0s >= -1.0 && z1s > z0s && (crate::lambert::phi_map(C64::new(z0, 0.0))?.re - z0s).abs() < 1e-10,
        format!("z0* = {z0s:.15}, z1* = {z1s:.15}"),
    );

    let is_minus_one = (z0s + 1.0).abs() < 1e-12;
    rep.push(
        "image.crossing_is_minus_one_iff_rho_zero",
        "z0* = -1 exactly when rho = 0",
        is_minus_one == (rho == 0.0),
        format!("z0* + 1 = {:.3e}", z0s + 1.0),
    );

    let min_re = all
        .iter()
        .filter(|p| p.tau != p.tau.floor())
        .map(|p| p.phi.re - z0s)
        .fold(f64::INFINITY, f64::min);
    let min_fine = image.iter().filter(|(s, _)| *s != 0.0).map(|(_, w)| w.re - z0s).fold(f64::INFINITY, f64::min);
    rep.push(
        "image.real_part_min_at_crossing",
        "Re phi > Re phi(z0) wherever phi != phi(z0)",
        min_re > 0.0 && min_fine > 0.0,
        format!("min Re phi - z0* = {:.3e}", min_re.min(min_fine)),
    );

    let rising = image.iter().filter(|(s, _)| *s > 0.0 && *s <= 0.5).map(|(_, w)| w.re).collect::<Vec<_>>();
    let falling = image.iter().filter(|(s, _)| *s >= 0.5).map(|(_, w)| w.re).collect::<Vec<_>>();
    let mono_img = rising.windows(2).all(|w| w[1] > w[0]) && falling.windows(2).all(|w| w[1] < w[0]);
    rep.push(
        "image.real_part_monotone",
        "Re phi is monotone between z0* and z1* on each side",
        mono_img,
        String::new(),
    );

    // f3 along the contour; the doubled form (z+1)^2 - (phi+1)^2 has tau-derivative
    // 4 pi i (gamma(tau) - gamma({tau})).
    let f3_z0 = f3(C64::new(z0, 0.0), C64::new(z0s, 0.0));
    let im_ok = upper.iter().all(|p| f3(p.z, p.phi).im < 0.0) && lower.iter().all(|p| f3(p.z, p.phi).im > 0.0);
    rep.push(
        "f3.single_real_crossing",
        "f3(Gamma) meets the real line only at f3(z0)",
        im_ok && f3_z0.im == 0.0,
        format!("f3(z0) = {:.15}", f3_z0.re),
    );

    rep.push(
        "f3.zero_at_crossing_when_rho_zero",
        "f3(z0) = 0 for rho = 0",
        rho != 0.0 || f3_z0.norm() < 1e-14,
        format!("|f3(z0)| = {:.3e}", f3_z0.norm()),
    );

    let f3_gap = all.iter().map(|p| f3(p.z, p.phi).re - f3_z0.re).fold(f64::NEG_INFINITY, f64::max);
    rep.push(
        "f3.real_part_max_at_crossing",
        "Re f3 < Re f3(z0) away from the crossing",
        f3_gap < 0.0,
        format!("max Re f3 - Re f3(z0) = {f3_gap:.3e}"),
    );

    let f3_mono = |arm: &[GridPoint]| arm.windows(2).all(|w| f3(w[1].z, w[1].phi).re < f3(w[0].z, w[0].phi).re);
    rep.push(
        "f3.real_part_monotone",
        "Re f3 decreases moving away from the crossing on each arm",
        f3_mono(&upper) && f3_mono(&lower),
        String::new(),
    );

    let mut min_ratio = f64::INFINITY;
    for p in all.iter().filter(|p| p.tau.abs() >= 5.0) {
        let d = C64::new(0.0, 4.0 * PI) * (p.z - p.phi);
        min_ratio = min_ratio.min(d.re.abs() / (4.0 * PI * PI * p.tau.abs()));
    }
    rep.push(
        "f3.slope_growth",
        "|d Re((z+1)^2 - (phi+1)^2) / d tau| >= 4 pi^2 |tau| for |tau| >= 5",
        min_ratio >= 1.0,
        format!("min slope / (4 pi^2 |tau|) = {min_ratio:.4}"),
    );
    Ok(rep)
}

fn validate_wedge(theta: f64, vertex: f64, grid: &[f64]) -> Result<ContourReport, LambertError> {
    let mut rep = ContourReport::default();
    rep.push(
        "wedge.angle",
        "opening angle in [pi/2, 3pi/4)",
        (PI / 2.0..0.75 * PI).contains(&theta),
        format!("theta = {theta:.6}"),
    );
    rep.push(
        "wedge.crossing_left_of_minus_one",
        "the wedge meets the real line left of -1",
        vertex < -1.0,
        format!("vertex = {vertex}"),
    );
    let y_max = grid.iter().fold(40.0f64, |m, &y| m.max(y.abs()));
    let steps = 40_000;
    let mut cut_hits = Vec::new();
    let mut max_phi = 0.0f64;
    for arm_sign in [1.0, -1.0] {
        let dir = C64::from_polar(1.0, arm_sign * theta);
        let mut prev: Option<C64> = None;
        for j in 0..=steps {
            let y = y_max * j as f64 / steps as f64;
            let z = C64::new(vertex, 0.0) + dir * y;
            let w = z * z.exp();
            if let Some(pw) = prev {
                if pw.im.signum() != w.im.signum() && w.re.min(pw.re) < -INV_E {
                    cut_hits.push(arm_sign * y);
                }
            }
            prev = Some(w);
            max_phi = max_phi.max(phi_map(z)?.norm());
        }
    }
    rep.push(
        "wedge.phi_continuous",
        "z e^z never crosses the cut (-inf, -1/e] of L0 along the wedge",
        cut_hits.is_empty(),
        format!("cut crossings at y = {cut_hits:?}"),
    );
    rep.push(
        "wedge.phi_bounded",
        "phi stays bounded along the wedge",
        max_phi.is_finite() && max_phi < 2.0,
        format!("max |phi| = {max_phi:.4}"),
    );
    Ok(rep)
}

fn validate_circle(radius: f64) -> Result<ContourReport, LambertError> {
    let mut rep = ContourReport::default();
    let mut worst = 0.0f64;
    for j in 0..1024 {
        let th = -PI + TWO_PI * (j as f64 + 0.5) / 1024.0;
        let w = C64::from_polar(radius, th);
        worst = worst.max((phi_map(w)? - w).norm());
    }
    rep.push(
        "circle.principal",
        "phi(w) = w on the circle",
        worst < 1e-10,
        format!("max |phi(w) - w| = {worst:.3e}"),
    );
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn trivial_values() {
        assert_eq!(lambert_w(0, c(0.0, 0.0)).unwrap(), c(0.0, 0.0));
        assert!((lambert_w(0, c(E, 0.0)).unwrap() - 1.0).norm() < 1e-15);
        assert!((lambert_w(0, c(-INV_E, 0.0)).unwrap() + 1.0).norm() < 1e-15);
        assert!((lambert_w(-1, c(-INV_E, 0.0)).unwrap() + 1.0).norm() < 1e-15);
        assert!((lambert_w_side(1, c(-INV_E, 0.0), CutSide::Below).unwrap() + 1.0).norm() < 1e-15);
        assert!(matches!(lambert_w(2, c(0.0, 0.0)), Err(LambertError::Singular { k: 2 })));
    }

    #[test]
    fn real_branches_on_the_short_cut() {
        let w0 = lambert_w(0, c(-0.2, 0.0)).unwrap();
        let wm = lambert_w(-1, c(-0.2, 0.0)).unwrap();
        assert!(w0.im.abs() < 1e-15 && w0.re > -1.0);
        assert!(wm.im.abs() < 1e-14 && wm.re < -1.0);
        assert!((wm.re + 2.542_641_357_773_526).abs() < 1e-12);
        let wm_small = lambert_w(-1, c(-1e-3, 0.0)).unwrap();
        assert!((wm_small.re + 9.118_006_470_402_74).abs() < 1e-10, "{wm_small}");
    }

    #[test]
    fn cut_sides_are_conjugate() {
        for x in [-5.0, -1.0, -0.3] {
            for k in -2..=2 {
                let a = lambert_w_side(k, c(x, 0.0), CutSide::Above).unwrap();
                let b = lambert_w_side(-k, c(x, 0.0), CutSide::Below).unwrap();
                assert!((a - b.conj()).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn series_matches_iteration() {
        for p in [0.05, 0.1, 0.2] {
            let z = c((p * p / 2.0 - 1.0) * INV_E, 0.0);
            let w = halley(z, c(-1.0 + p, 0.0));
            let s = branch_point_series(c(p, 0.0), BRANCH_SERIES.len());
            assert!((w - s).norm() < 2.0 * p.powi(10), "p={p}: {}", (w - s).norm());
        }
    }

    #[test]
    fn gamma_is_continuous_at_integers() {
        for rho in [0.0, 0.2] {
            for k in [-3.0, -2.0, -1.0, 1.0, 2.0, 3.0] {
                let eps = 1e-9;
                if k == 1.0 {
                    let (a, _) = gamma_contour(rho, k).unwrap();
                    let (b, _) = gamma_contour(rho, k + eps).unwrap();
                    assert!((a - b).norm() < 1e-3);
                    continue;
                }
                let (a, _) = gamma_contour(rho, k - eps).unwrap();
                let (b, _) = gamma_contour(rho, k).unwrap();
                assert!((a - b).norm() < 1e-6, "rho={rho} k={k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn gamma_rejects_excluded_parameters() {
        assert!(matches!(gamma_contour(0.0, 0.5), Err(LambertError::ExcludedParameter { .. })));
    }

    #[test]
    fn f3_vanishes_at_minus_one() {
        assert_eq!(f3(c(-1.0, 0.0), c(-1.0, 0.0)), c(0.0, 0.0));
    }
}
