//! Gauss-Legendre rules and composite panel quadrature.

use num_complex::Complex64 as C64;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Nodes and weights of an `n`-point Gauss-Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds the rule by Newton iteration on the Legendre polynomial.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Shared cached rule of size `n`.
    pub fn cached(n: usize) -> Arc<GaussLegendre> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("quadrature cache poisoned");
        guard
            .entry(n)
            .or_insert_with(|| Arc::new(GaussLegendre::new(n)))
            .clone()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped affinely to [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite rule: `order`-point Gauss-Legendre on each consecutive pair of `breaks`.
pub fn composite(breaks: &[f64], order: usize) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::cached(order);
    let mut out = Vec::with_capacity(order * breaks.len().saturating_sub(1));
    for pair in breaks.windows(2) {
        out.extend(rule.mapped(pair[0], pair[1]));
    }
    out
}

/// Integrates `f` over [a, b] with `panels` equal panels of an `order`-point rule.
pub fn integrate_panels<F: FnMut(f64) -> f64>(a: f64, b: f64, panels: usize, order: usize, mut f: F) -> f64 {
    let rule = GaussLegendre::cached(order);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + h * p as f64;
        total += rule.integrate(lo, lo + h, &mut f);
    }
    total
}

/// Breakpoints on [0, end] refined geometrically toward 0: first panel `h0`, growth `ratio`.
pub fn graded_breaks(h0: f64, ratio: f64, end: f64) -> Vec<f64> {
    let mut breaks = vec![0.0];
    let mut h = h0;
    let mut x = 0.0;
    while x + h < end {
        x += h;
        breaks.push(x);
        h *= ratio;
    }
    breaks.push(end);
    breaks
}

/// `int_0^inf exp(e(s)) ds` for an analytic exponent whose real part eventually decays.
///
/// Panels are accepted when the exponent changes by at most a few units across them and
/// the integration stops once two consecutive panels sit `decay` below the running peak.
pub fn exp_ray_integral<F: Fn(f64) -> C64>(e: F, h_max: f64, decay: f64) -> C64 {
    let rule = GaussLegendre::cached(16);
    let reference = e(0.0).re;
    let mut peak = reference;
    let mut acc = C64::new(0.0, 0.0);
    let mut s = 0.0;
    let mut h = h_max;
    let mut quiet = 0;
    for _ in 0..100_000 {
        let es = e(s);
        loop {
            let e1 = e(s + h);
            let em = e(s + 0.5 * h);
            if ((e1 - es).norm() <= 3.0 && (em - (es + e1) * 0.5).norm() <= 1.0) || h < 1e-9 {
                break;
            }
            h *= 0.5;
        }
        let mut panel_max = f64::NEG_INFINITY;
        for (x, w) in rule.mapped(s, s + h) {
            let v = e(x);
            panel_max = panel_max.max(v.re);
            acc += (v - reference).exp() * w;
        }
        if panel_max < peak - decay {
            quiet += 1;
            if quiet >= 2 {
                break;
            }
        } else {
            quiet = 0;
        }
        peak = peak.max(panel_max);
        s += h;
        h = (1.5 * h).min(h_max);
    }
    acc * reference.exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        for n in [1usize, 2, 5, 16, 40] {
            let rule = GaussLegendre::new(n);
            for deg in 0..(2 * n) {
                let got = rule.integrate(-1.0, 1.0, |x| x.powi(deg as i32));
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((got - exact).abs() < 1e-13, "n={n} deg={deg} got={got}");
            }
        }
    }

    #[test]
    fn weights_sum_to_two() {
        let rule = GaussLegendre::new(200);
        let s: f64 = rule.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-13);
    }

    #[test]
    fn ray_integrals() {
        let g = exp_ray_integral(|s| C64::new(-s * s, 0.0), 1.0, 45.0);
        assert!((g.re - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-13);
        let o = exp_ray_integral(|s| C64::new(-s, 20.0 * s), 1.0, 45.0);
        let exact = C64::new(1.0, -20.0).inv();
        assert!((o - exact).norm() < 1e-13, "{o}");
    }

    #[test]
    fn graded_breaks_cover_interval() {
        let b = graded_breaks(0.01, 1.5, 3.0);
        assert_eq!(b[0], 0.0);
        assert_eq!(*b.last().unwrap(), 3.0);
        assert!(b.windows(2).all(|w| w[1] > w[0]));
    }
}
