//! Nystrom discretization of projected kernels on `L^2(R x S)` and their Fredholm determinants.

use crate::kernels::{
    check_time, eval_airy1_kernel, eval_phi_conv, finite_kernel_matrix, finite_kernel_sum_matrix, phi_conv_conjugated, FlatKernel, KernelBox, KernelError, KernelPoint, Normalization,
    Resolution, ScaledPoint,
};
use crate::linalg::Matrix;
use crate::quad::GaussLegendre;
use rayon::prelude::*;
use thiserror::Error;

pub const MIN_NODES: usize = 8;
const MAX_SCAN_STEPS: usize = 4000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FredholmError {
    #[error("invalid label set: {0}")]
    Labels(String),
    #[error("need at least {MIN_NODES} nodes per label, got {0}")]
    Nodes(usize),
    #[error("invalid window: {0}")]
    Window(String),
    #[error("kernel failed at ({x1}, label #{l1}; {x2}, label #{l2}): {source}")]
    Kernel { x1: f64, l1: usize, x2: f64, l2: usize, source: KernelError },
    #[error(transparent)]
    Setup(#[from] KernelError),
    #[error("non-finite operator entry at ({0}, {1})")]
    NonFinite(usize, usize),
    #[error("determinant did not settle across refinements: {0:?}")]
    NonConvergence(Vec<(usize, f64)>),
}

/// Side of each threshold that the projection keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// `P_a`: integrate over `(-inf, a_k)`.
    BelowThreshold,
    /// `chi_s`: integrate over `(s_k, inf)`.
    AboveThreshold,
}

/// Distinct integer labels with one threshold each.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    labels: Vec<i64>,
    thresholds: Vec<f64>,
}

impl LabelSet {
    pub fn new(labels: Vec<i64>, thresholds: Vec<f64>) -> Result<Self, FredholmError> {
        if labels.is_empty() || labels.len() != thresholds.len() {
            return Err(FredholmError::Labels(format!(
                "{} labels with {} thresholds",
                labels.len(),
                thresholds.len()
            )));
        }
        let mut sorted = labels.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(FredholmError::Labels(format!("repeated label in {labels:?}")));
        }
        if thresholds.iter().any(|a| !a.is_finite()) {
            return Err(FredholmError::Labels(format!("non-finite threshold in {thresholds:?}")));
        }
        Ok(Self { labels, thresholds })
    }

    pub fn single(label: i64, a: f64) -> Result<Self, FredholmError> {
        Self::new(vec![label], vec![a])
    }

    /// Labels `n(r_k, t)` and thresholds `x(r_k, s_k)` of the Airy-scale points `(r_k, s_k)`.
    pub fn from_scaled(t: f64, points: &[(f64, f64)]) -> Result<Self, FredholmError> {
        check_time(t)?;
        let q: Vec<ScaledPoint> = points.iter().map(|&(r, s)| ScaledPoint::new(s, r, t)).collect();
        Self::new(q.iter().map(ScaledPoint::label).collect(), q.iter().map(ScaledPoint::position).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }
}

/// Truncated windows and node count for a Nystrom discretization.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretization {
    pub orientation: Orientation,
    pub thresholds: Vec<f64>,
    pub widths: Vec<f64>,
    pub n_nodes: usize,
}

impl Discretization {
    pub fn new(orientation: Orientation, thresholds: Vec<f64>, widths: Vec<f64>, n_nodes: usize) -> Result<Self, FredholmError> {
        if n_nodes < MIN_NODES {
            return Err(FredholmError::Nodes(n_nodes));
        }
        if thresholds.is_empty() || thresholds.len() != widths.len() {
            return Err(FredholmError::Window(format!("{} thresholds with {} widths", thresholds.len(), widths.len())));
        }
        if widths.iter().chain(&thresholds).any(|v| !v.is_finite()) || widths.iter().any(|&w| w <= 0.0) {
            return Err(FredholmError::Window(format!("thresholds {thresholds:?}, widths {widths:?}")));
        }
        Ok(Self { orientation, thresholds, widths, n_nodes })
    }

    pub fn with_nodes(&self, n_nodes: usize) -> Result<Self, FredholmError> {
        Self::new(self.orientation, self.thresholds.clone(), self.widths.clone(), n_nodes)
    }

    /// Window of label `i`.
    pub fn interval(&self, i: usize) -> (f64, f64) {
        let (a, w) = (self.thresholds[i], self.widths[i]);
        match self.orientation {
            Orientation::BelowThreshold => (a - w, a),
            Orientation::AboveThreshold => (a, a + w),
        }
    }

    /// Window of label `i` split at the window ends of the other labels.
    pub fn panels(&self, i: usize) -> Vec<(f64, f64)> {
        let (lo, hi) = self.interval(i);
        let eps = 1e-9 * (hi - lo);
        let mut cuts = vec![lo, hi];
        for j in 0..self.thresholds.len() {
            let (a, b) = self.interval(j);
            cuts.extend([a, b].into_iter().filter(|&c| c > lo + eps && c < hi - eps));
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() <= eps);
        cuts.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Gauss-Legendre nodes and weights per label, `n_nodes` on each panel.
    pub fn nodes(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let rule = GaussLegendre::cached(self.n_nodes);
        (0..self.thresholds.len())
            .map(|i| self.panels(i).into_iter().flat_map(|(lo, hi)| rule.mapped(lo, hi)).unzip())
            .unzip()
    }
}

/// `I - M` discretized: `M[(i,u),(j,v)] = sqrt(w_u w_v) K(x_u, i; x_v, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FredholmOperator {
    pub orientation: Orientation,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<Vec<f64>>,
    pub matrix: Matrix,
}

impl FredholmOperator {
    pub fn label_count(&self) -> usize {
        self.nodes.len()
    }

    /// Index of the first node of label `i` in the flattened matrix.
    pub fn offset(&self, i: usize) -> usize {
        self.nodes[..i].iter().map(Vec::len).sum()
    }

    /// Block `(i, j)` of the weighted matrix as rows.
    pub fn block(&self, i: usize, j: usize) -> Vec<Vec<f64>> {
        let (oi, oj) = (self.offset(i), self.offset(j));
        (0..self.nodes[i].len())
            .map(|u| (0..self.nodes[j].len()).map(|v| self.matrix.get(oi + u, oj + v)).collect())
            .collect()
    }
}

/// Operator from a pointwise kernel `K(x1, label index i; x2, label index j)`, assembled in parallel.
pub fn build_operator<K>(kernel: K, disc: &Discretization) -> Result<FredholmOperator, FredholmError>
where
    K: Fn(f64, usize, f64, usize) -> Result<f64, KernelError> + Sync,
{
    build_operator_batched(
        |pts| {
            pts.par_iter()
                .flat_map_iter(|&(x1, l1)| pts.iter().map(move |&(x2, l2)| (x1, l1, x2, l2)))
                .map(|(x1, l1, x2, l2)| kernel(x1, l1, x2, l2).map_err(|source| FredholmError::Kernel { x1, l1, x2, l2, source }))
                .collect()
        },
        disc,
    )
}

/// Operator from a kernel that fills the whole row-major matrix of raw values at once, given the
/// flattened node list `(x, label index)`.
pub fn build_operator_batched<K>(kernel: K, disc: &Discretization) -> Result<FredholmOperator, FredholmError>
where
    K: FnOnce(&[(f64, usize)]) -> Result<Vec<f64>, FredholmError>,
{
    let (nodes, weights) = disc.nodes();
    let pts: Vec<(f64, usize)> =
        nodes.iter().enumerate().flat_map(|(i, xs)| xs.iter().map(move |&x| (x, i))).collect();
    let sw: Vec<f64> = weights.iter().flatten().map(|w| w.sqrt()).collect();
    let raw = kernel(&pts)?;
    let size = pts.len();
    if raw.len() != size * size {
        return Err(FredholmError::Window(format!("kernel returned {} values for {size} nodes", raw.len())));
    }
    let data = raw.iter().enumerate().map(|(e, &k)| sw[e / size] * k * sw[e % size]).collect();
    Ok(FredholmOperator { orientation: disc.orientation, nodes, weights, matrix: Matrix { n: size, data } })
}

/// Operator for `K = K_smooth - phi^{(n_i, n_j)}`: the smooth part by Nystrom weights, the
/// convolution part, which jumps or kinks on `x1 = x2`, integrated exactly against the Lagrange basis
/// of each label's nodes. `conjugated` selects `e^{x2 - x1} phi`.
pub fn build_operator_with_convolution<K>(
    smooth: K,
    labels: &[i64],
    conjugated: bool,
    disc: &Discretization,
) -> Result<FredholmOperator, FredholmError>
where
    K: FnOnce(&[(f64, usize)]) -> Result<Vec<f64>, FredholmError>,
{
    if labels.len() != disc.thresholds.len() {
        return Err(FredholmError::Labels(format!("{} labels for {} windows", labels.len(), disc.thresholds.len())));
    }
    let mut op = build_operator_batched(smooth, disc)?;
    let n = disc.n_nodes;
    let size = op.matrix.n;
    let rule = GaussLegendre::cached(n);
    let bary: Vec<f64> = rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .enumerate()
        .map(|(v, (&x, &w))| if v % 2 == 0 { 1.0 } else { -1.0 } * ((1.0 - x * x) * w).sqrt())
        .collect();
    let panel_rule = GaussLegendre::cached(16);
    for (i, &ni) in labels.iter().enumerate() {
        for (j, &nj) in labels.iter().enumerate() {
            let m = nj - ni;
            if m < 1 {
                continue;
            }
            let panels = disc.panels(j);
            let ys = &op.nodes[j];
            let wy = &op.weights[j];
            let rows: Vec<Vec<f64>> = op.nodes[i]
                .par_iter()
                .zip(&op.weights[i])
                .map(|(&x, &wx)| {
                    let mut acc = vec![0.0; ys.len()];
                    let mut ell = vec![0.0; n];
                    for (k, &(lo, hi)) in panels.iter().enumerate() {
                        let c = x.min(hi);
                        if c <= lo {
                            continue;
                        }
                        let nodes = &ys[k * n..(k + 1) * n];
                        let len = c - lo;
                        let by_degree = (n + m as usize).div_ceil(16) + 1;
                        let pieces = if conjugated { by_degree.max(len.ceil() as usize) } else { by_degree };
                        let h = len / pieces as f64;
                        for p in 0..pieces {
                            for (y, wq) in panel_rule.mapped(lo + h * p as f64, lo + h * (p + 1) as f64) {
                                let f = if conjugated { phi_conv_conjugated(ni, nj, x, y) } else { eval_phi_conv(ni, nj, x, y) };
                                if f == 0.0 {
                                    continue;
                                }
                                lagrange_basis(nodes, &bary, y, &mut ell);
                                for (a, l) in acc[k * n..(k + 1) * n].iter_mut().zip(&ell) {
                                    *a += wq * f * l;
                                }
                            }
                        }
                    }
                    let sx = wx.sqrt();
                    acc.iter_mut().zip(wy).for_each(|(a, &w)| *a *= sx / w.sqrt());
                    acc
                })
                .collect();
            let (oi, oj) = (op.offset(i), op.offset(j));
            for (u, row) in rows.iter().enumerate() {
                let base = (oi + u) * size + oj;
                for (v, r) in row.iter().enumerate() {
                    op.matrix.data[base + v] -= r;
                }
            }
        }
    }
    Ok(op)
}

/// Values at `y` of the Lagrange basis on `nodes`, in barycentric form.
fn lagrange_basis(nodes: &[f64], bary: &[f64], y: f64, out: &mut [f64]) {
    if let Some(k) = nodes.iter().position(|&x| x == y) {
        out.fill(0.0);
        out[k] = 1.0;
        return;
    }
    let mut total = 0.0;
    for ((o, &x), &b) in out.iter_mut().zip(nodes).zip(bary) {
        *o = b / (y - x);
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

/// Determinant with its refinement history as `(matrix size, value)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterminantResult {
    pub value: f64,
    pub resolution_trace: Vec<(usize, f64)>,
}

/// `det(I - M)` by LU with partial pivoting.
pub fn fredholm_det(op: &FredholmOperator) -> Result<DeterminantResult, FredholmError> {
    let n = op.matrix.n;
    if let Some(e) = op.matrix.data.iter().position(|v| !v.is_finite()) {
        return Err(FredholmError::NonFinite(e / n, e % n));
    }
    let mut a = op.matrix.clone();
    for v in a.data.iter_mut() {
        *v = -*v;
    }
    for i in 0..n {
        a.data[i * n + i] += 1.0;
    }
    let value = a.det();
    Ok(DeterminantResult { value, resolution_trace: vec![(n, value)] })
}

/// Refinement and truncation controls for the probability determinants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetOptions {
    /// Nodes per label at the first refinement.
    pub n_start: usize,
    /// Largest node count per label before giving up.
    pub n_max: usize,
    /// Accept once two successive refinements differ by at most this.
    pub tol: f64,
    /// Truncate where the kernel diagonal, in units of the natural length scale, falls below this.
    pub diag_tol: f64,
    /// Multiplier applied to the chosen window widths.
    pub width_scale: f64,
    /// Contour quadrature controls for the flat kernel.
    pub resolution: Resolution,
}

impl Default for DetOptions {
    fn default() -> Self {
        Self { n_start: 16, n_max: 512, tol: 1e-9, diag_tol: 1e-13, width_scale: 1.0, resolution: Resolution::default() }
    }
}

/// Doubles the node count from `opts.n_start` until successive determinants agree to `opts.tol`.
pub fn refine<B>(build: B, opts: &DetOptions) -> Result<DeterminantResult, FredholmError>
where
    B: Fn(usize) -> Result<FredholmOperator, FredholmError>,
{
    let mut n = opts.n_start.max(MIN_NODES);
    let mut trace = Vec::new();
    loop {
        let d = fredholm_det(&build(n)?)?;
        trace.extend(d.resolution_trace);
        if let [.., (_, a), (_, b)] = trace[..] {
            if (a - b).abs() <= opts.tol {
                return Ok(DeterminantResult { value: b, resolution_trace: trace });
            }
        }
        n *= 2;
        if n > opts.n_max {
            return Err(FredholmError::NonConvergence(trace));
        }
    }
}

/// Smallest offset `d >= max(start, 0)` into the integration region past which the diagonal stays
/// below `tol` for two consecutive steps; the width is then one step further, at least `min_width`.
fn scan_width<D>(start: f64, step: f64, min_width: f64, tol: f64, mut diag: D) -> Result<f64, FredholmError>
where
    D: FnMut(f64) -> Result<f64, FredholmError>,
{
    let mut d = start.max(0.0);
    for _ in 0..MAX_SCAN_STEPS {
        if diag(d)?.abs() < tol && diag(d + step)?.abs() < tol {
            return Ok((d + 2.0 * step).max(min_width));
        }
        d += step;
    }
    Err(FredholmError::Window(format!("kernel diagonal did not decay within {} steps of {step}", MAX_SCAN_STEPS)))
}

/// `P(x_k(t) >= a_k for all k in S)` for the flat start `x_k(0) = -k`, as
/// `det(I - P_a K_t^flat P_a)` on the conjugated kernel.
pub fn joint_cdf_flat(t: f64, labels: &LabelSet) -> Result<DeterminantResult, FredholmError> {
    joint_cdf_flat_with(t, labels, &DetOptions::default())
}

pub fn joint_cdf_flat_with(t: f64, labels: &LabelSet, opts: &DetOptions) -> Result<DeterminantResult, FredholmError> {
    check_time(t)?;
    let scale = (2.0 * t).cbrt();
    let kind = FlatKernel::default_contour(t);
    let mut widths = Vec::with_capacity(labels.len());
    for (&n, &a) in labels.labels.iter().zip(&labels.thresholds) {
        let center = -(n as f64) - t;
        let w = scan_width(a - center, 0.5 * scale, 4.0 * scale, opts.diag_tol, |d| {
            let p = KernelPoint::new(a - d, n);
            Ok(scale * FlatKernel::new(t, kind, KernelBox::point(p, p), opts.resolution)?.eval_conjugated(p, p))
        })?;
        widths.push(w * opts.width_scale);
    }
    let disc = Discretization::new(Orientation::BelowThreshold, labels.thresholds.clone(), widths, opts.n_start.max(MIN_NODES))?;
    let lo = (0..labels.len()).map(|i| disc.interval(i).0).fold(f64::INFINITY, f64::min);
    let hi = labels.thresholds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let nlo = *labels.labels.iter().min().expect("nonempty");
    let nhi = *labels.labels.iter().max().expect("nonempty");
    let fk = FlatKernel::new(t, kind, KernelBox::square((lo, hi), (nlo, nhi)), opts.resolution)?;
    refine(
        |n| {
            build_operator_with_convolution(
                |pts| {
                    let kp: Vec<KernelPoint> = pts.iter().map(|&(x, i)| KernelPoint::new(x, labels.labels[i])).collect();
                    Ok(fk.integral_matrix(&kp, &kp, Normalization::Conjugated))
                },
                &labels.labels,
                true,
                &disc.with_nodes(n)?,
            )
        },
        opts,
    )
}

/// `P(x_k(t) >= a_k for all k in S)` for `x_k(0) = -k`, `k >= 1`, from the finite-N kernel.
/// Labels above `N` never enter, so the value does not depend on `N >= max S`.
pub fn joint_cdf_finite(t: f64, labels: &LabelSet) -> Result<DeterminantResult, FredholmError> {
    joint_cdf_finite_with(t, labels, &DetOptions::default())
}

pub fn joint_cdf_finite_with(t: f64, labels: &LabelSet, opts: &DetOptions) -> Result<DeterminantResult, FredholmError> {
    check_time(t)?;
    if let Some(&n) = labels.labels.iter().find(|&&n| n < 1) {
        return Err(FredholmError::Labels(format!("finite-N labels must be >= 1, got {n}")));
    }
    let scale = t.sqrt();
    let mut widths = Vec::with_capacity(labels.len());
    for (&n, &a) in labels.labels.iter().zip(&labels.thresholds) {
        let w = scan_width(a + n as f64, 0.5 * scale, 4.0 * scale, opts.diag_tol, |d| {
            let p = KernelPoint::new(a - d, n);
            Ok(scale * finite_kernel_matrix(&[p], &[p], t)?[0])
        })?;
        widths.push(w * opts.width_scale);
    }
    let disc = Discretization::new(Orientation::BelowThreshold, labels.thresholds.clone(), widths, opts.n_start.max(MIN_NODES))?;
    refine(
        |n| {
            build_operator_with_convolution(
                |pts| {
                    let kp: Vec<KernelPoint> = pts.iter().map(|&(x, i)| KernelPoint::new(x, labels.labels[i])).collect();
                    Ok(finite_kernel_sum_matrix(&kp, &kp, t)?)
                },
                &labels.labels,
                false,
                &disc.with_nodes(n)?,
            )
        },
        opts,
    )
}

/// `P(A_1(r_k) <= s_k for all k)` as `det(I - chi_s K_{A1} chi_s)` for points `(r_k, s_k)`.
pub fn joint_cdf_airy1(points: &[(f64, f64)]) -> Result<DeterminantResult, FredholmError> {
    joint_cdf_airy1_with(points, &DetOptions::default())
}

pub fn joint_cdf_airy1_with(points: &[(f64, f64)], opts: &DetOptions) -> Result<DeterminantResult, FredholmError> {
    if points.is_empty() {
        return Err(FredholmError::Labels("no points".into()));
    }
    for (i, p) in points.iter().enumerate() {
        if !p.0.is_finite() || !p.1.is_finite() || points[..i].iter().any(|q| q.0 == p.0) {
            return Err(FredholmError::Labels(format!("times must be finite and distinct: {points:?}")));
        }
    }
    let mut widths = Vec::with_capacity(points.len());
    for &(r, s) in points {
        let w = scan_width(-0.5 - s, 0.5, 4.0, opts.diag_tol, |d| Ok(eval_airy1_kernel(s + d, r, s + d, r)?))?;
        widths.push(w * opts.width_scale);
    }
    let disc = Discretization::new(
        Orientation::AboveThreshold,
        points.iter().map(|p| p.1).collect(),
        widths,
        opts.n_start.max(MIN_NODES),
    )?;
    refine(
        |n| build_operator(|s1, i, s2, j| eval_airy1_kernel(s1, points[i].0, s2, points[j].0), &disc.with_nodes(n)?),
        opts,
    )
}
