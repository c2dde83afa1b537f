//! Reproducible experiments wiring the simulator, kernels and Fredholm determinants.
//!
//! Every experiment is a pure function of its [`ExperimentConfig`] (which carries the master
//! seed). Reports are written as CSV with a JSON manifest.

use crate::fredholm::{joint_cdf_airy1_with, joint_cdf_finite_with, joint_cdf_flat_with, DetOptions, FredholmError, LabelSet};
use crate::kernels::{transition_density, InitialCondition, KernelError, TWO_5_3};
use crate::quad::{integrate_panels, GaussLegendre};
use crate::simulate::{
    binomial_stderr, choose_window, finite_probe, flat_label, replicates, rescale_position, rescale_tagged, FlatRun, Probe, Scheme, SimError,
    TaggedParams,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const CSV_HEADER: &str = "experiment,observable,t,label,arg,estimate,stderr,exact,source,seed";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("simulation failed at {point}: {source}")]
    Sim { point: String, source: SimError },
    #[error("determinant failed at {point}: {source}")]
    Fredholm { point: String, source: FredholmError },
    #[error("kernel failed at {point}: {source}")]
    Kernel { point: String, source: KernelError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(String),
}

fn sim_err(point: impl Into<String>) -> impl FnOnce(SimError) -> ExperimentError {
    let point = point.into();
    move |source| ExperimentError::Sim { point, source }
}

fn det_err(point: impl Into<String>) -> impl FnOnce(FredholmError) -> ExperimentError {
    let point = point.into();
    move |source| ExperimentError::Fredholm { point, source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    FlatConvergence,
    FiniteN,
    Tagged,
    StepGue,
}

impl ExperimentId {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentId::FlatConvergence => "flat-convergence",
            ExperimentId::FiniteN => "finite-n",
            ExperimentId::Tagged => "tagged",
            ExperimentId::StepGue => "step-gue",
        }
    }

    pub fn parse(s: &str) -> Result<Self, ExperimentError> {
        [ExperimentId::FlatConvergence, ExperimentId::FiniteN, ExperimentId::Tagged, ExperimentId::StepGue]
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| ExperimentError::Config(format!("unknown experiment '{s}'")))
    }
}

/// Flat key-value configuration shared by all experiments; unused keys are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: ExperimentId,
    pub seed: u64,
    pub times: Vec<f64>,
    /// Argument grid: `s` for scaled observables, threshold offsets `a_k + k` for finite N.
    pub grid: Vec<f64>,
    /// Scaled space points `r` (flat convergence).
    pub r: Vec<f64>,
    /// Label sets (finite N).
    pub label_sets: Vec<Vec<i64>>,
    pub particles: usize,
    pub replicates: usize,
    pub dt: f64,
    pub scheme: Scheme,
    /// Starting Nystrom node count; doubled until converged.
    pub nodes: usize,
    pub taus: Vec<f64>,
    pub nu: f64,
    pub epsilon: f64,
    pub decorrelation_times: Vec<f64>,
    pub output: String,
}

impl ExperimentConfig {
    pub fn default_for(id: ExperimentId) -> Self {
        let base = Self {
            id,
            seed: 20_120_601,
            times: vec![],
            grid: vec![],
            r: vec![0.0],
            label_sets: vec![],
            particles: 0,
            replicates: 10_000,
            dt: 0.5,
            scheme: Scheme::Bridge,
            nodes: 16,
            taus: vec![],
            nu: 0.4,
            epsilon: 0.25,
            decorrelation_times: vec![],
            output: "out".into(),
        };
        match id {
            ExperimentId::FlatConvergence => Self { times: vec![100.0], grid: linspace(-2.0, 2.0, 9), ..base },
            ExperimentId::FiniteN => Self {
                times: vec![1.0],
                grid: linspace(-1.5, 1.0, 6),
                label_sets: vec![vec![1], vec![2], vec![3], vec![1, 3], vec![2, 3]],
                particles: 3,
                dt: 1e-3,
                ..base
            },
            ExperimentId::Tagged => Self {
                times: vec![200.0],
                grid: linspace(-1.5, 1.5, 7),
                taus: vec![0.0, 0.5],
                decorrelation_times: vec![50.0, 200.0, 800.0],
                ..base
            },
            ExperimentId::StepGue => Self { times: vec![1.0], grid: linspace(-2.5, 4.0, 20), particles: 2, dt: 1e-2, ..base },
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.times.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return bad(format!("times must be positive: {:?}", self.times));
        }
        if self.decorrelation_times.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return bad("decorrelation times must be positive".into());
        }
        if !(self.dt > 0.0) || self.nodes < 8 {
            return bad(format!("need dt > 0 and nodes >= 8, got dt = {}, nodes = {}", self.dt, self.nodes));
        }
        if !(0.0..1.0).contains(&self.nu) || !(self.epsilon > 0.0) {
            return bad(format!("need nu in [0, 1) and epsilon > 0, got {} and {}", self.nu, self.epsilon));
        }
        match self.id {
            ExperimentId::FiniteN if self.particles == 0 || self.particles > 6 => bad(format!("finite-N needs 1..=6 particles, got {}", self.particles)),
            ExperimentId::StepGue if self.particles == 0 || self.particles > 4 => bad(format!("step-gue needs 1..=4 particles, got {}", self.particles)),
            ExperimentId::FiniteN => {
                for set in &self.label_sets {
                    if set.is_empty() || set.iter().any(|&k| k < 1 || k as usize > self.particles) {
                        return bad(format!("label set {set:?} outside 1..={}", self.particles));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn to_toml(&self) -> Result<String, ExperimentError> {
        toml::to_string(self).map_err(|e| ExperimentError::Parse(e.to_string()))
    }

    pub fn from_toml(s: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = toml::from_str(s).map_err(|e| ExperimentError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(|source| ExperimentError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> Result<String, ExperimentError> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }

    fn det_options(&self) -> DetOptions {
        DetOptions { n_start: self.nodes, ..DetOptions::default() }
    }
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// One CSV line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub observable: String,
    pub t: f64,
    pub label: String,
    pub arg: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub exact: Option<f64>,
    pub source: String,
    pub seed: u64,
    /// `(estimate - exact) / max(stderr, 1/n)` for Monte Carlo rows.
    pub z: Option<f64>,
}

impl ReportRow {
    fn monte_carlo(observable: &str, t: f64, label: String, arg: f64, hits: usize, n: usize, exact: f64, source: &str, seed: u64) -> Self {
        let p = hits as f64 / n as f64;
        let stderr = binomial_stderr(p, n);
        let z = (p - exact) / stderr.max(1.0 / n as f64);
        Self { observable: observable.into(), t, label, arg, estimate: p, stderr, exact: Some(exact), source: source.into(), seed, z: Some(z) }
    }

    fn deterministic(observable: &str, t: f64, label: String, arg: f64, estimate: f64, exact: f64, source: &str, seed: u64) -> Self {
        Self { observable: observable.into(), t, label, arg, estimate, stderr: 0.0, exact: Some(exact), source: source.into(), seed, z: None }
    }

    fn csv(&self, experiment: &str) -> String {
        let exact = self.exact.map(|e| e.to_string()).unwrap_or_default();
        format!(
            "{experiment},{},{},{},{},{},{},{},{},{}",
            self.observable, self.t, self.label, self.arg, self.estimate, self.stderr, exact, self.source, self.seed
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Summary {
    pub compared: usize,
    pub max_abs_z: f64,
    pub within_3: f64,
    /// Named sup distances and scalar diagnostics.
    pub metrics: Vec<(String, f64)>,
}

impl Summary {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub experiment: String,
    pub rows: Vec<ReportRow>,
    pub summary: Summary,
}

impl ComparisonReport {
    fn new(experiment: &str, rows: Vec<ReportRow>, metrics: Vec<(String, f64)>) -> Self {
        let zs: Vec<f64> = rows.iter().filter_map(|r| r.z).collect();
        let compared = zs.len();
        let max_abs_z = zs.iter().fold(0.0f64, |m, z| m.max(z.abs()));
        let within_3 = if compared == 0 { 1.0 } else { zs.iter().filter(|z| z.abs() <= 3.0).count() as f64 / compared as f64 };
        Self { experiment: experiment.into(), rows, summary: Summary { compared, max_abs_z, within_3, metrics } }
    }

    /// Mutual-oracle acceptance: `|z| <= 3` at 95% of points and `|z| <= 5` everywhere.
    pub fn agrees(&self) -> bool {
        self.summary.within_3 >= 0.95 && self.summary.max_abs_z <= 5.0
    }

    pub fn rows_for<'a>(&'a self, observable: &'a str) -> impl Iterator<Item = &'a ReportRow> + 'a {
        self.rows.iter().filter(move |r| r.observable == observable)
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<ComparisonReport, ExperimentError> {
    cfg.validate()?;
    match cfg.id {
        ExperimentId::FlatConvergence => run_flat_convergence(cfg),
        ExperimentId::FiniteN => run_finite_n_consistency(cfg),
        ExperimentId::Tagged => run_tagged(cfg),
        ExperimentId::StepGue => run_step_gue(cfg),
    }
}

/// Grid step close to `dt` that puts `t` on the grid.
fn grid_for(t: f64, dt: f64) -> (f64, usize) {
    let n = (t / dt).ceil().max(1.0) as usize;
    (t / n as f64, n)
}

/// Flat system at time `t`: Monte Carlo of `P(X_t(r) <= s)`, the finite-t determinant and the
/// Airy_1 limit; two-point events when two `r` values are given.
pub fn run_flat_convergence(cfg: &ExperimentConfig) -> Result<ComparisonReport, ExperimentError> {
    cfg.validate()?;
    let opts = cfg.det_options();
    let mut rows = Vec::new();
    let mut metrics = Vec::new();
    for &t in &cfg.times {
        let labels: Vec<i64> = cfg.r.iter().map(|&r| flat_label(r, t)).collect();
        let samples: Option<Vec<Vec<f64>>> = if cfg.replicates > 0 {
            let (dt, n_steps) = grid_for(t, cfg.dt);
            let run = FlatRun { dt, n_steps, window: choose_window(t, &labels, 1e-6), scheme: cfg.scheme };
            let probes: Vec<Probe> = labels.iter().map(|&label| Probe { label, step: n_steps }).collect();
            let xs = replicates(cfg.replicates, |rep| run.probe(cfg.seed, rep, &probes)).map_err(sim_err(format!("flat t={t}")))?;
            Some(xs.into_iter().map(|x| x.iter().zip(&cfg.r).map(|(&x, &r)| rescale_position(x, r, t)).collect()).collect())
        } else {
            None
        };
        let mut events: Vec<(String, Vec<usize>)> = (0..cfg.r.len()).map(|i| (format!("r={}", cfg.r[i]), vec![i])).collect();
        if cfg.r.len() >= 2 {
            events.push((format!("r={};{}", cfg.r[0], cfg.r[1]), vec![0, 1]));
        }
        for (label, idx) in &events {
            let (mut d_mc, mut d_lim) = (0.0f64, 0.0f64);
            for &s in &cfg.grid {
                let pts: Vec<(f64, f64)> = idx.iter().map(|&i| (cfg.r[i], s)).collect();
                let point = format!("flat t={t} {label} s={s}");
                let set = LabelSet::from_scaled(t, &pts).map_err(det_err(point.clone()))?;
                let exact = joint_cdf_flat_with(t, &set, &opts).map_err(det_err(point.clone()))?.value;
                let limit = joint_cdf_airy1_with(&pts, &opts).map_err(det_err(point))?.value;
                if let Some(xs) = &samples {
                    let hits = xs.iter().filter(|x| idx.iter().all(|&i| x[i] <= s)).count();
                    let row = ReportRow::monte_carlo("cdf", t, label.clone(), s, hits, xs.len(), exact, "fredholm-flat", cfg.seed);
                    d_mc = d_mc.max((row.estimate - exact).abs());
                    rows.push(row);
                }
                d_lim = d_lim.max((exact - limit).abs());
                rows.push(ReportRow::deterministic("limit", t, label.clone(), s, exact, limit, "airy1", cfg.seed));
            }
            if samples.is_some() {
                metrics.push((format!("sup|mc-fredholm| t={t} {label}"), d_mc));
            }
            metrics.push((format!("sup|fredholm-airy1| t={t} {label}"), d_lim));
        }
    }
    Ok(ComparisonReport::new(cfg.id.name(), rows, metrics))
}

/// `N` particles from `x_k(0) = -k`: Monte Carlo of `P(x_k(t) >= a_k, k in S)` against the
/// finite-N determinant, with thresholds `a_k = -k + g` for `g` in the grid. At `N = 2` the
/// determinant is also checked against quadrature of the transition density.
pub fn run_finite_n_consistency(cfg: &ExperimentConfig) -> Result<ComparisonReport, ExperimentError> {
    cfg.validate()?;
    let opts = cfg.det_options();
    let n = cfg.particles;
    let init = InitialCondition::Flat;
    let mut rows = Vec::new();
    let mut metrics = Vec::new();
    for &t in &cfg.times {
        let (dt, n_steps) = grid_for(t, cfg.dt);
        let samples = if cfg.replicates > 0 {
            let probes: Vec<Probe> = (1..=n as i64).map(|label| Probe { label, step: n_steps }).collect();
            Some(
                replicates(cfg.replicates, |rep| finite_probe(&init, n, dt, n_steps, cfg.scheme, cfg.seed, rep, &probes))
                    .map_err(sim_err(format!("finite N={n} t={t}")))?,
            )
        } else {
            None
        };
        for set in &cfg.label_sets {
            let label = set.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(";");
            let mut d_mc = 0.0f64;
            for &g in &cfg.grid {
                let thresholds: Vec<f64> = set.iter().map(|&k| -(k as f64) + g).collect();
                let point = format!("finite N={n} t={t} S={label} g={g}");
                let ls = LabelSet::new(set.clone(), thresholds.clone()).map_err(det_err(point.clone()))?;
                let det = joint_cdf_finite_with(t, &ls, &opts).map_err(det_err(point.clone()))?.value;
                if let Some(xs) = &samples {
                    let hits = xs.iter().filter(|x| set.iter().zip(&thresholds).all(|(&k, &a)| x[(k - 1) as usize] >= a)).count();
                    let row = ReportRow::monte_carlo("joint-tail", t, label.clone(), g, hits, xs.len(), det, "fredholm-finite", cfg.seed);
                    d_mc = d_mc.max((row.estimate - det).abs());
                    rows.push(row);
                }
                if n == 2 {
                    let a1 = set.contains(&1).then(|| thresholds[set.iter().position(|&k| k == 1).unwrap()]);
                    let a2 = set.contains(&2).then(|| thresholds[set.iter().position(|&k| k == 2).unwrap()]);
                    let w = warren_two_particle_tail(t, (-1.0, -2.0), a1, a2)
                        .map_err(|source| ExperimentError::Kernel { point: point.clone(), source })?;
                    rows.push(ReportRow::deterministic("density-check", t, label.clone(), g, det, w, "warren-quadrature", cfg.seed));
                }
            }
            if samples.is_some() {
                metrics.push((format!("sup|mc-fredholm| t={t} S={label}"), d_mc));
            }
        }
    }
    Ok(ComparisonReport::new(cfg.id.name(), rows, metrics))
}

/// `P(x_1(t) >= a1, x_2(t) >= a2)` for two particles started at `x0` by quadrature of the
/// transition density; a missing threshold means no constraint.
pub fn warren_two_particle_tail(t: f64, x0: (f64, f64), a1: Option<f64>, a2: Option<f64>) -> Result<f64, KernelError> {
    let init = InitialCondition::Custom(vec![x0.0, x0.1]);
    let reach = 14.0 * t.sqrt();
    let lo = a2.unwrap_or(x0.1 - reach);
    let hi = x0.0.max(lo) + reach;
    let mut breaks = vec![lo];
    if let Some(a) = a1 {
        if a > lo && a < hi {
            breaks.push(a);
        }
    }
    breaks.push(hi);
    let gl = GaussLegendre::cached(20);
    let mut total = 0.0;
    let mut err = None;
    for w in breaks.windows(2) {
        let panels = ((w[1] - w[0]) / (0.35 * t.sqrt())).ceil().max(1.0) as usize;
        let h = (w[1] - w[0]) / panels as f64;
        for p in 0..panels {
            for (x2, w2) in gl.mapped(w[0] + h * p as f64, w[0] + h * (p + 1) as f64) {
                let from = a1.map_or(x2, |a| a.max(x2));
                let inner = integrate_panels(from, from + reach, 28, 16, |x1| match transition_density(&[x1, x2], t, &init) {
                    Ok(v) => v,
                    Err(e) => {
                        err.get_or_insert(e);
                        0.0
                    }
                });
                total += w2 * inner;
            }
        }
    }
    match err {
        Some(e) => Err(e),
        None => Ok(total),
    }
}

/// Tagged-particle observables `X_t^tagged(tau)`: one-point laws against the finite-time
/// determinant at time `t + theta`, all events against Airy_1 at `u = -tau`, plus the
/// slow-decorrelation diagnostic on `decorrelation_times`. Only the finite-time comparisons
/// enter the z summary.
pub fn run_tagged(cfg: &ExperimentConfig) -> Result<ComparisonReport, ExperimentError> {
    cfg.validate()?;
    let opts = cfg.det_options();
    let mut rows = Vec::new();
    let mut metrics = Vec::new();
    for &t in &cfg.times {
        if cfg.taus.is_empty() {
            break;
        }
        let (dt, base_steps) = grid_for(t, cfg.dt);
        let scale = TWO_5_3 * t.powf(2.0 / 3.0);
        let theta: Vec<f64> = cfg.taus.iter().map(|tau| (tau * scale / dt).round() * dt).collect();
        let u: Vec<f64> = theta.iter().map(|th| -th / scale).collect();
        if theta.iter().any(|&th| th < 0.0) {
            return Err(ExperimentError::Config("negative tagged times are not supported".into()));
        }
        let params = TaggedParams::new(theta.clone(), u.clone(), 2.0 / 3.0).map_err(sim_err(format!("tagged t={t}")))?;
        let labels: Vec<i64> = (0..theta.len()).map(|k| params.observation(k, t).0).collect();
        let max_theta = theta.iter().cloned().fold(0.0, f64::max);
        let n_steps = base_steps + (max_theta / dt).round() as usize;
        let run = FlatRun { dt, n_steps, window: choose_window(t + max_theta, &labels, 1e-6), scheme: cfg.scheme };
        let xs = replicates(cfg.replicates, |rep| rescale_tagged(&run, cfg.seed, rep, t, &params)).map_err(sim_err(format!("tagged t={t}")))?;
        let mut events: Vec<(String, Vec<usize>)> = (0..theta.len()).map(|k| (format!("tau={}", cfg.taus[k]), vec![k])).collect();
        if theta.len() >= 2 {
            events.push((format!("tau={};{}", cfg.taus[0], cfg.taus[1]), vec![0, 1]));
        }
        for (label, idx) in &events {
            let (mut d_lim, mut d_exact) = (0.0f64, 0.0f64);
            for &s in &cfg.grid {
                let point = format!("tagged t={t} {label} s={s}");
                let pts: Vec<(f64, f64)> = idx.iter().map(|&k| (u[k], s)).collect();
                let limit = joint_cdf_airy1_with(&pts, &opts).map_err(det_err(point.clone()))?.value;
                let hits = xs.iter().filter(|x| idx.iter().all(|&k| x[k] <= s)).count();
                if let [k] = idx[..] {
                    let (n, time) = params.observation(k, t);
                    let a = -(2.0 * t).cbrt() * s - 2.0 * theta[k] - u[k] * scale;
                    let set = LabelSet::single(n, a).map_err(det_err(point.clone()))?;
                    let exact = joint_cdf_flat_with(time, &set, &opts).map_err(det_err(point))?.value;
                    let row = ReportRow::monte_carlo("cdf", t, label.clone(), s, hits, xs.len(), exact, "fredholm-flat", cfg.seed);
                    d_exact = d_exact.max((row.estimate - exact).abs());
                    rows.push(row);
                }
                let mut row = ReportRow::monte_carlo("cdf-limit", t, label.clone(), s, hits, xs.len(), limit, "airy1", cfg.seed);
                row.z = None;
                d_lim = d_lim.max((row.estimate - limit).abs());
                rows.push(row);
            }
            if idx.len() == 1 {
                metrics.push((format!("sup|mc-fredholm| t={t} {label}"), d_exact));
            }
            metrics.push((format!("sup|mc-airy1| t={t} {label}"), d_lim));
        }
    }
    for &t in &cfg.decorrelation_times {
        let dec = decorrelation_probability(t, cfg.nu, cfg.epsilon, cfg.replicates, cfg.dt, cfg.scheme, cfg.seed)?;
        rows.push(ReportRow {
            observable: "decorrelation".into(),
            t,
            label: format!("theta={}", dec.theta),
            arg: cfg.epsilon,
            estimate: dec.probability,
            stderr: dec.stderr,
            exact: None,
            source: "monte-carlo".into(),
            seed: cfg.seed,
            z: None,
        });
        metrics.push((format!("P(|Xi|>=eps) t={t}"), dec.probability));
    }
    Ok(ComparisonReport::new(cfg.id.name(), rows, metrics))
}

/// Estimate of `P(|x_{n+theta}(t+theta) - x_n(t) + 2 theta| >= eps (2t)^{1/3})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decorrelation {
    pub t: f64,
    pub theta: i64,
    pub probability: f64,
    pub stderr: f64,
    pub replicates: usize,
}

/// Slow-decorrelation statistic with integer offset `theta = floor(t^nu)`; by translation
/// invariance of the flat start the base label is `n = 0`.
pub fn decorrelation_probability(
    t: f64,
    nu: f64,
    eps: f64,
    reps: usize,
    dt: f64,
    scheme: Scheme,
    seed: u64,
) -> Result<Decorrelation, ExperimentError> {
    if reps == 0 {
        return Err(ExperimentError::Config("decorrelation needs replicates".into()));
    }
    let theta = t.powf(nu).floor() as i64;
    let (dt, base_steps) = grid_for(t, dt);
    let extra = (theta as f64 / dt).round() as usize;
    if ((extra as f64) * dt - theta as f64).abs() > 1e-9 * t {
        return Err(ExperimentError::Config(format!("theta = {theta} is not on the grid with dt = {dt}")));
    }
    let run = FlatRun { dt, n_steps: base_steps + extra, window: choose_window(t + theta as f64, &[0, theta], 1e-6), scheme };
    let probes = [Probe { label: 0, step: base_steps }, Probe { label: theta, step: base_steps + extra }];
    let cut = eps * (2.0 * t).cbrt();
    let hits = replicates(reps, |rep| {
        let x = run.probe(seed, rep, &probes)?;
        Ok((x[1] - x[0] + 2.0 * theta as f64).abs() >= cut)
    })
    .map_err(sim_err(format!("decorrelation t={t}")))?;
    let p = hits.iter().filter(|&&h| h).count() as f64 / reps as f64;
    Ok(Decorrelation { t, theta, probability: p, stderr: binomial_stderr(p, reps), replicates: reps })
}

/// Step start: Monte Carlo of `-x_N(t)/sqrt(t)` against the top eigenvalue of an `N x N` GUE.
pub fn run_step_gue(cfg: &ExperimentConfig) -> Result<ComparisonReport, ExperimentError> {
    cfg.validate()?;
    let n = cfg.particles;
    let exact: Vec<f64> = cfg.grid.iter().map(|&s| gue_top_cdf(n, s)).collect();
    let mut rows = Vec::new();
    let mut metrics = Vec::new();
    for &t in &cfg.times {
        let (dt, n_steps) = grid_for(t, cfg.dt);
        let probes = [Probe { label: n as i64, step: n_steps }];
        let xs = replicates(cfg.replicates, |rep| {
            finite_probe(&InitialCondition::Step, n, dt, n_steps, cfg.scheme, cfg.seed, rep, &probes).map(|v| -v[0] / t.sqrt())
        })
        .map_err(sim_err(format!("step N={n} t={t}")))?;
        let mut d = 0.0f64;
        for (&s, &e) in cfg.grid.iter().zip(&exact) {
            let hits = xs.iter().filter(|&&x| x <= s).count();
            let row = ReportRow::monte_carlo("top-cdf", t, format!("N={n}"), s, hits, xs.len(), e, "gue-quadrature", cfg.seed);
            d = d.max((row.estimate - e).abs());
            rows.push(row);
        }
        metrics.push((format!("sup|mc-gue| t={t}"), d));
    }
    Ok(ComparisonReport::new(cfg.id.name(), rows, metrics))
}

/// `P(lambda_max <= s)` for the GUE with density proportional to
/// `prod_{i<j} (l_i - l_j)^2 prod_i e^{-l_i^2 / 2}`, by tensor Gauss-Legendre quadrature over
/// `[-L, s]^N`, normalized by `(2 pi)^{N/2} prod_{j=1}^{N} j!`.
pub fn gue_top_cdf(n: usize, s: f64) -> f64 {
    assert!((1..=4).contains(&n), "GUE quadrature supports N <= 4");
    let lo = -10.0;
    if s <= lo {
        return 0.0;
    }
    let panels = if n <= 2 { 6 } else { 4 };
    let gl = GaussLegendre::cached(16);
    let h = (s - lo) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * 16);
    for p in 0..panels {
        for (x, w) in gl.mapped(lo + h * p as f64, lo + h * (p + 1) as f64) {
            nodes.push((x, w * (-0.5 * x * x).exp()));
        }
    }
    let norm = (2.0 * std::f64::consts::PI).powf(n as f64 / 2.0) * (1..=n).map(|j| (1..=j).product::<usize>() as f64).product::<f64>();
    let mut idx = vec![0usize; n];
    let mut total = 0.0;
    loop {
        let mut w = 1.0;
        for &i in &idx {
            w *= nodes[i].1;
        }
        let mut vdm = 1.0;
        for a in 0..n {
            for b in a + 1..n {
                let d = nodes[idx[a]].0 - nodes[idx[b]].0;
                vdm *= d * d;
            }
        }
        total += w * vdm;
        let mut k = 0;
        loop {
            if k == n {
                return (total / norm).clamp(0.0, 1.0);
            }
            idx[k] += 1;
            if idx[k] < nodes.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Writes `<experiment>.csv` and `<experiment>.manifest.json` under `dir`.
pub fn emit_report(report: &ComparisonReport, cfg: &ExperimentConfig, dir: &Path) -> Result<(PathBuf, PathBuf), ExperimentError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ExperimentError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let csv_path = dir.join(format!("{}.csv", report.experiment));
    let mut csv = Vec::new();
    writeln!(csv, "{CSV_HEADER}").map_err(io(&csv_path))?;
    for row in &report.rows {
        writeln!(csv, "{}", row.csv(&report.experiment)).map_err(io(&csv_path))?;
    }
    fs::write(&csv_path, csv).map_err(io(&csv_path))?;
    let manifest_path = dir.join(format!("{}.manifest.json", report.experiment));
    let timestamp = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let manifest = serde_json::json!({
        "experiment": report.experiment,
        "config_hash": cfg.hash()?,
        "seed": cfg.seed,
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "timestamp": timestamp,
        "rows": report.rows.len(),
        "summary": report.summary,
    });
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| ExperimentError::Parse(e.to_string()))?;
    fs::write(&manifest_path, text).map_err(io(&manifest_path))?;
    Ok((csv_path, manifest_path))
}
