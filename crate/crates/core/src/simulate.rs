//! Monte Carlo for Brownian motions with one-sided collisions.
//!
//! Particle `m` is driven by `B_m` and reflected downward off particle `m - 1`:
//! on the time grid `x_m(t_j) = min(x_m(t_{j-1}) + dB_m(j), x_{m-1}(t_j))`. The same
//! positions are produced by the last-passage formula
//! `x_m(t) = -max_k {Y_{k,m}(t) - x_k(0)}` with `Y` built from the mirrored noise `-B`.
//!
//! Every label owns a ChaCha8 stream keyed by `(master seed, replicate, label)`, so a
//! Brownian motion is reproduced exactly whatever the simulated window.

use crate::kernels::{InitialCondition, TWO_5_3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("label {label} outside simulated window [{lo}, {hi}]")]
    Label { label: i64, lo: i64, hi: i64 },
    #[error("time {t} is not a grid time below the horizon {horizon} (dt = {dt})")]
    Time { t: f64, dt: f64, horizon: f64 },
    #[error("invalid parameter: {0}")]
    Param(String),
}

/// Time discretization of the reflection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Supremum over grid times only.
    #[default]
    Grid,
    /// Within each step the barrier gap is treated as a Brownian bridge and its minimum
    /// is sampled exactly; exact when the barrier is itself a free Brownian motion.
    Bridge,
}

const NORMAL_CHANNEL: u64 = 0;
const UNIFORM_CHANNEL: u64 = 1;

/// Counter-based stream for `(master, replicate, label, channel)`.
pub fn label_stream(master: u64, replicate: u64, label: i64, channel: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master.to_le_bytes());
    seed[8..16].copy_from_slice(&replicate.to_le_bytes());
    seed[16..24].copy_from_slice(&0x6f6e_6573_6964_6564u64.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(seed);
    let zigzag = ((label << 1) ^ (label >> 63)) as u64;
    rng.set_stream(zigzag.wrapping_mul(2) + channel);
    rng
}

fn fill_increments(rng: &mut ChaCha8Rng, dt: f64, out: &mut [f64]) {
    let sd = dt.sqrt();
    for v in out.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v = sd * z;
    }
}

fn fill_exponentials(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = rng.sample(Exp1);
    }
}

/// Materialized Brownian increments on `labels x steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianGrid {
    pub dt: f64,
    pub n_steps: usize,
    pub k_min: i64,
    pub k_max: i64,
    pub master: u64,
    pub replicate: u64,
    increments: Vec<Vec<f64>>,
    exponentials: Option<Vec<Vec<f64>>>,
}

impl BrownianGrid {
    pub fn generate(dt: f64, n_steps: usize, k_min: i64, k_max: i64, master: u64, replicate: u64) -> Result<Self, SimError> {
        Self::generate_with(dt, n_steps, k_min, k_max, master, replicate, Scheme::Grid)
    }

    pub fn generate_with(
        dt: f64,
        n_steps: usize,
        k_min: i64,
        k_max: i64,
        master: u64,
        replicate: u64,
        scheme: Scheme,
    ) -> Result<Self, SimError> {
        check_grid(dt, k_min, k_max)?;
        let increments = (k_min..=k_max)
            .map(|k| {
                let mut v = vec![0.0; n_steps];
                fill_increments(&mut label_stream(master, replicate, k, NORMAL_CHANNEL), dt, &mut v);
                v
            })
            .collect();
        let exponentials = (scheme == Scheme::Bridge).then(|| {
            (k_min..=k_max)
                .map(|k| {
                    let mut v = vec![0.0; n_steps];
                    fill_exponentials(&mut label_stream(master, replicate, k, UNIFORM_CHANNEL), &mut v);
                    v
                })
                .collect()
        });
        Ok(Self { dt, n_steps, k_min, k_max, master, replicate, increments, exponentials })
    }

    /// Grid with given increments; `increments[i]` belongs to label `k_min + i`.
    pub fn from_increments(dt: f64, k_min: i64, increments: Vec<Vec<f64>>) -> Result<Self, SimError> {
        if increments.is_empty() {
            return Err(SimError::Param("no labels".into()));
        }
        let n_steps = increments[0].len();
        if increments.iter().any(|v| v.len() != n_steps) {
            return Err(SimError::Param("ragged increments".into()));
        }
        let k_max = k_min + increments.len() as i64 - 1;
        check_grid(dt, k_min, k_max)?;
        Ok(Self { dt, n_steps, k_min, k_max, master: 0, replicate: 0, increments, exponentials: None })
    }

    /// Same grid driven by `-B`.
    pub fn mirrored(&self) -> Self {
        let mut g = self.clone();
        for v in g.increments.iter_mut() {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
        g
    }

    /// Same Brownian paths sampled every `factor` steps.
    pub fn coarsen(&self, factor: usize) -> Result<Self, SimError> {
        if factor == 0 || self.n_steps % factor != 0 {
            return Err(SimError::Param(format!("factor {factor} does not divide {} steps", self.n_steps)));
        }
        let increments = self.increments.iter().map(|v| v.chunks(factor).map(|c| c.iter().sum()).collect()).collect();
        Ok(Self { dt: self.dt * factor as f64, n_steps: self.n_steps / factor, increments, exponentials: None, ..self.clone() })
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    pub fn increments(&self, k: i64) -> Result<&[f64], SimError> {
        self.check_label(k)?;
        Ok(&self.increments[(k - self.k_min) as usize])
    }

    /// `B_k(t_j)` for `j = 0..=n_steps`.
    pub fn path(&self, k: i64) -> Result<Vec<f64>, SimError> {
        let inc = self.increments(k)?;
        let mut out = Vec::with_capacity(inc.len() + 1);
        let mut b = 0.0;
        out.push(b);
        for d in inc {
            b += d;
            out.push(b);
        }
        Ok(out)
    }

    /// Grid index of time `t`.
    pub fn step_of(&self, t: f64) -> Result<usize, SimError> {
        step_index(t, self.dt, self.n_steps)
    }

    fn check_label(&self, k: i64) -> Result<(), SimError> {
        if k < self.k_min || k > self.k_max {
            Err(SimError::Label { label: k, lo: self.k_min, hi: self.k_max })
        } else {
            Ok(())
        }
    }

    fn noise(&self) -> GridNoise<'_> {
        GridNoise { grid: self }
    }
}

fn check_grid(dt: f64, k_min: i64, k_max: i64) -> Result<(), SimError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SimError::Param(format!("dt must be positive, got {dt}")));
    }
    if k_min > k_max {
        return Err(SimError::Param(format!("empty label range [{k_min}, {k_max}]")));
    }
    Ok(())
}

fn step_index(t: f64, dt: f64, n_steps: usize) -> Result<usize, SimError> {
    let err = || SimError::Time { t, dt, horizon: dt * n_steps as f64 };
    if !(t >= 0.0 && t.is_finite()) {
        return Err(err());
    }
    let j = (t / dt).round();
    if (j * dt - t).abs() > 1e-9 * t.max(1.0) || j > n_steps as f64 {
        return Err(err());
    }
    Ok(j as usize)
}

/// Number of steps of size close to `dt_target` that land exactly on every time in `times`.
pub fn steps_for(times: &[f64], dt_target: f64) -> Result<(f64, usize), SimError> {
    let horizon = times.iter().cloned().fold(0.0, f64::max);
    if !(horizon > 0.0) || !(dt_target > 0.0) {
        return Err(SimError::Param("need a positive horizon and dt".into()));
    }
    let n = (horizon / dt_target).ceil().max(1.0) as usize;
    let dt = horizon / n as f64;
    for &t in times {
        step_index(t, dt, n)?;
    }
    Ok((dt, n))
}

trait Noise {
    fn fill(&mut self, k: i64, inc: &mut [f64], expo: Option<&mut [f64]>);
}

struct GridNoise<'a> {
    grid: &'a BrownianGrid,
}

impl Noise for GridNoise<'_> {
    fn fill(&mut self, k: i64, inc: &mut [f64], expo: Option<&mut [f64]>) {
        let i = (k - self.grid.k_min) as usize;
        inc.copy_from_slice(&self.grid.increments[i][..inc.len()]);
        if let Some(e) = expo {
            match &self.grid.exponentials {
                Some(ex) => e.copy_from_slice(&ex[i][..e.len()]),
                None => fill_exponentials(&mut label_stream(self.grid.master, self.grid.replicate, k, UNIFORM_CHANNEL), e),
            }
        }
    }
}

struct StreamNoise {
    master: u64,
    replicate: u64,
    dt: f64,
}

impl Noise for StreamNoise {
    fn fill(&mut self, k: i64, inc: &mut [f64], expo: Option<&mut [f64]>) {
        fill_increments(&mut label_stream(self.master, self.replicate, k, NORMAL_CHANNEL), self.dt, inc);
        if let Some(e) = expo {
            fill_exponentials(&mut label_stream(self.master, self.replicate, k, UNIFORM_CHANNEL), e);
        }
    }
}

/// Observation request: position of `label` at grid step `step`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Probe {
    pub label: i64,
    pub step: usize,
}

/// Propagates labels `k_lo..=k_hi` top-down; `init(k)` gives `x_k(0)`.
fn propagate<N: Noise>(
    noise: &mut N,
    dt: f64,
    n_steps: usize,
    k_lo: i64,
    k_hi: i64,
    init: &dyn Fn(i64) -> f64,
    scheme: Scheme,
    probes: &[Probe],
) -> Vec<f64> {
    let mut out = vec![f64::NAN; probes.len()];
    let mut path = vec![f64::INFINITY; n_steps + 1];
    let mut inc = vec![0.0; n_steps];
    let mut expo = vec![0.0; if scheme == Scheme::Bridge { n_steps } else { 0 }];
    for k in k_lo..=k_hi {
        noise.fill(k, &mut inc, (scheme == Scheme::Bridge).then_some(&mut expo[..]));
        let x0 = init(k);
        let mut barrier_prev = path[0];
        path[0] = x0.min(barrier_prev);
        for j in 1..=n_steps {
            let d = inc[j - 1];
            let barrier = path[j];
            let free = path[j - 1] + d;
            path[j] = match scheme {
                Scheme::Grid => free.min(barrier),
                Scheme::Bridge => {
                    let (a, b, c) = (barrier_prev, barrier - d, path[j - 1]);
                    let e = expo[j - 1];
                    if !a.is_finite() || (c < a.min(b) && e * dt <= (a - c) * (b - c)) {
                        free
                    } else {
                        let low = 0.5 * (a + b - ((b - a) * (b - a) + 4.0 * dt * e).sqrt());
                        free.min(low + d)
                    }
                }
            };
            barrier_prev = barrier;
        }
        for (o, p) in out.iter_mut().zip(probes) {
            if p.label == k {
                *o = path[p.step];
            }
        }
    }
    out
}

/// Particle positions at one time, labels `k_lo..`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub k_lo: i64,
    pub positions: Vec<f64>,
    pub time: f64,
    pub init: InitialCondition,
    /// Flat-window size `M` (labels `-M+1..`), or the particle count for finite systems.
    pub window: usize,
}

impl SystemState {
    pub fn k_hi(&self) -> i64 {
        self.k_lo + self.positions.len() as i64 - 1
    }

    pub fn position(&self, k: i64) -> Result<f64, SimError> {
        if k < self.k_lo || k > self.k_hi() {
            return Err(SimError::Label { label: k, lo: self.k_lo, hi: self.k_hi() });
        }
        Ok(self.positions[(k - self.k_lo) as usize])
    }

    pub fn is_ordered(&self, tol: f64) -> bool {
        self.positions.windows(2).all(|w| w[1] <= w[0] + tol)
    }
}

/// Discretized `Y_{k,m}(t)` by the dynamic program over grid split times.
pub fn last_passage(grid: &BrownianGrid, k: i64, m: i64, t: f64) -> Result<f64, SimError> {
    if k > m {
        return Err(SimError::Param(format!("need k <= m, got k = {k}, m = {m}")));
    }
    grid.check_label(k)?;
    grid.check_label(m)?;
    let steps = grid.step_of(t)?;
    let mut z = grid.path(k)?;
    z.truncate(steps + 1);
    for i in k + 1..=m {
        let inc = grid.increments(i)?;
        for j in 1..=steps {
            z[j] = (z[j - 1] + inc[j - 1]).max(z[j]);
        }
    }
    Ok(z[steps])
}

/// Right-hand side of the last-passage representation for particles `1..=N`.
pub fn max_formula(grid: &BrownianGrid, init: &InitialCondition, n: usize, m: i64, t: f64) -> Result<f64, SimError> {
    let x0 = init.positions(n).map_err(|e| SimError::Param(e.to_string()))?;
    if m < 1 || m as usize > n {
        return Err(SimError::Label { label: m, lo: 1, hi: n as i64 });
    }
    let mirror = grid.mirrored();
    let mut best = f64::NEG_INFINITY;
    for k in 1..=m {
        best = best.max(last_passage(&mirror, k, m, t)? - x0[(k - 1) as usize]);
    }
    Ok(-best)
}

/// Reflected system of `n` particles with labels `1..=n` on the grid.
pub fn evolve_reflect(grid: &BrownianGrid, init: &InitialCondition, n: usize, t: f64) -> Result<SystemState, SimError> {
    evolve_reflect_with(grid, init, n, t, Scheme::Grid)
}

pub fn evolve_reflect_with(
    grid: &BrownianGrid,
    init: &InitialCondition,
    n: usize,
    t: f64,
    scheme: Scheme,
) -> Result<SystemState, SimError> {
    if n == 0 {
        return Err(SimError::Param("no particles".into()));
    }
    let x0 = init.positions(n).map_err(|e| SimError::Param(e.to_string()))?;
    grid.check_label(1)?;
    grid.check_label(n as i64)?;
    let step = grid.step_of(t)?;
    let probes: Vec<Probe> = (1..=n as i64).map(|label| Probe { label, step }).collect();
    let positions = propagate(&mut grid.noise(), grid.dt, step, 1, n as i64, &|k| x0[(k - 1) as usize], scheme, &probes);
    Ok(SystemState { k_lo: 1, positions, time: t, init: init.clone(), window: n })
}

/// Flat system truncated to labels `-M+1..=max(targets)`:
/// `x_m^{(M)}(t) = -max_{k in [-M+1, m]} {Y_{k,m}(t) + k}`.
pub fn evolve_flat(grid: &BrownianGrid, window: usize, targets: &[i64], t: f64) -> Result<Vec<f64>, SimError> {
    evolve_flat_with(grid, window, targets, t, Scheme::Grid)
}

pub fn evolve_flat_with(
    grid: &BrownianGrid,
    window: usize,
    targets: &[i64],
    t: f64,
    scheme: Scheme,
) -> Result<Vec<f64>, SimError> {
    let (lo, hi) = flat_range(window, targets)?;
    grid.check_label(lo)?;
    grid.check_label(hi)?;
    let step = grid.step_of(t)?;
    let probes: Vec<Probe> = targets.iter().map(|&label| Probe { label, step }).collect();
    Ok(propagate(&mut grid.noise(), grid.dt, step, lo, hi, &|k| -(k as f64), scheme, &probes))
}

/// Label `k` attaining the minimum in `x_m(t) = min_k {x_k(0) + ...}` for the flat window.
pub fn flat_argmax(grid: &BrownianGrid, window: usize, m: i64, t: f64) -> Result<i64, SimError> {
    let (lo, hi) = flat_range(window, &[m])?;
    grid.check_label(lo)?;
    grid.check_label(hi)?;
    let steps = grid.step_of(t)?;
    let mut path = vec![f64::INFINITY; steps + 1];
    let mut origin = vec![lo; steps + 1];
    for k in lo..=hi {
        let inc = grid.increments(k)?;
        let x0 = -(k as f64);
        if x0 < path[0] {
            path[0] = x0;
            origin[0] = k;
        }
        for j in 1..=steps {
            let free = path[j - 1] + inc[j - 1];
            if free < path[j] {
                path[j] = free;
                origin[j] = origin[j - 1];
            }
        }
    }
    Ok(origin[steps])
}

fn flat_range(window: usize, targets: &[i64]) -> Result<(i64, i64), SimError> {
    if window == 0 || targets.is_empty() {
        return Err(SimError::Param("need a positive window and at least one target".into()));
    }
    let lo = 1 - window as i64;
    let hi = *targets.iter().max().unwrap();
    for &m in targets {
        if m < lo || m > window as i64 {
            return Err(SimError::Label { label: m, lo, hi: window as i64 });
        }
    }
    Ok((lo, hi))
}

/// Streaming flat run: noise is drawn label by label, nothing is stored beyond one path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatRun {
    pub dt: f64,
    pub n_steps: usize,
    pub window: usize,
    pub scheme: Scheme,
}

impl FlatRun {
    /// Positions `x_{label}(step * dt)` for every probe.
    pub fn probe(&self, master: u64, replicate: u64, probes: &[Probe]) -> Result<Vec<f64>, SimError> {
        let targets: Vec<i64> = probes.iter().map(|p| p.label).collect();
        let (lo, hi) = flat_range(self.window, &targets)?;
        if let Some(p) = probes.iter().find(|p| p.step > self.n_steps) {
            return Err(SimError::Time { t: p.step as f64 * self.dt, dt: self.dt, horizon: self.horizon() });
        }
        let mut noise = StreamNoise { master, replicate, dt: self.dt };
        Ok(propagate(&mut noise, self.dt, self.n_steps, lo, hi, &|k| -(k as f64), self.scheme, probes))
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.n_steps as f64
    }
}

/// Streaming finite run with labels `1..=n`.
pub fn finite_probe(
    init: &InitialCondition,
    n: usize,
    dt: f64,
    n_steps: usize,
    scheme: Scheme,
    master: u64,
    replicate: u64,
    probes: &[Probe],
) -> Result<Vec<f64>, SimError> {
    let x0 = init.positions(n).map_err(|e| SimError::Param(e.to_string()))?;
    check_grid(dt, 1, n as i64)?;
    for p in probes {
        if p.label < 1 || p.label > n as i64 {
            return Err(SimError::Label { label: p.label, lo: 1, hi: n as i64 });
        }
        if p.step > n_steps {
            return Err(SimError::Time { t: p.step as f64 * dt, dt, horizon: dt * n_steps as f64 });
        }
    }
    let mut noise = StreamNoise { master, replicate, dt };
    Ok(propagate(&mut noise, dt, n_steps, 1, n as i64, &|k| x0[(k - 1) as usize], scheme, probes))
}

/// Window `M` for the flat system so that the argmax in the last-passage formula for every
/// target up to time `T` lies in `[-M+1, m]` except with probability about `eps`.
///
/// The depth `L` must satisfy `(sqrt(L) - sqrt(T))^2 >= c * 2 sqrt(T) L^{-1/6}` with `c` from
/// the Tracy-Widom upper tail `exp(-(4/3) x^{3/2})` at level `eps`; the result is never below
/// `max(target) + 4 ceil(sqrt(T)) + 16`.
pub fn choose_window(t: f64, targets: &[i64], eps: f64) -> usize {
    let t = t.max(0.0);
    let eps = eps.clamp(1e-300, 0.5);
    let c = (0.75 * (-eps.ln())).powf(2.0 / 3.0);
    let deficit = |l: f64| (l.sqrt() - t.sqrt()).powi(2) - 2.0 * c * t.sqrt() * l.powf(-1.0 / 6.0);
    let mut depth = 0.0;
    if t > 0.0 {
        let (mut lo, mut hi) = (t, 2.0 * t + 1.0);
        while deficit(hi) < 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if deficit(mid) >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        depth = hi;
    }
    let floor = 4.0 * t.sqrt().ceil() + 16.0;
    let depth = depth.max(floor).ceil() as i64;
    let max_target = targets.iter().cloned().max().unwrap_or(0);
    let min_target = targets.iter().cloned().min().unwrap_or(0);
    let m = (depth + 1 - min_target).max(max_target + depth).max(1);
    m as usize
}

/// Two systems on the same noise, labels `k_min..=k_max` of the grid; `init_a[i]` is the
/// start of label `k_min + i`.
pub fn coupled_evolve(grid: &BrownianGrid, init_a: &[f64], init_b: &[f64], t: f64) -> Result<(Vec<f64>, Vec<f64>), SimError> {
    let width = (grid.k_max - grid.k_min + 1) as usize;
    for init in [init_a, init_b] {
        if init.len() != width {
            return Err(SimError::Param(format!("initial condition has {} labels, grid has {width}", init.len())));
        }
        if init.windows(2).any(|w| w[1] > w[0]) {
            return Err(SimError::Param("initial positions must be weakly decreasing in the label".into()));
        }
    }
    let step = grid.step_of(t)?;
    let probes: Vec<Probe> = (grid.k_min..=grid.k_max).map(|label| Probe { label, step }).collect();
    let run = |init: &[f64]| {
        propagate(&mut grid.noise(), grid.dt, step, grid.k_min, grid.k_max, &|k| init[(k - grid.k_min) as usize], Scheme::Grid, &probes)
    };
    Ok((run(init_a), run(init_b)))
}

/// Rounding slack so that labels which are integers in exact arithmetic are not floored down.
const LABEL_SLACK: f64 = 1e-9;

/// `n(r, t) = floor(-t + 2^{5/3} t^{2/3} r)`.
pub fn flat_label(r: f64, t: f64) -> i64 {
    (-t + TWO_5_3 * t.powf(2.0 / 3.0) * r + LABEL_SLACK).floor() as i64
}

/// `X_t(r) = -(x_{n(r,t)}(t) + 2^{5/3} t^{2/3} r) / (2t)^{1/3}`.
pub fn rescale_flat(state: &SystemState, r: f64) -> Result<f64, SimError> {
    if state.init != InitialCondition::Flat {
        return Err(SimError::Param("rescale_flat needs a flat initial condition".into()));
    }
    let t = state.time;
    if !(t > 0.0) {
        return Err(SimError::Param(format!("time must be positive, got {t}")));
    }
    let x = state.position(flat_label(r, t))?;
    Ok(rescale_position(x, r, t))
}

/// Recentering of a raw position `x` observed at label `n(r, t)`.
pub fn rescale_position(x: f64, r: f64, t: f64) -> f64 {
    -(x + TWO_5_3 * t.powf(2.0 / 3.0) * r) / (2.0 * t).cbrt()
}

/// Offsets for the space-time rescaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedParams {
    pub theta: Vec<f64>,
    pub u: Vec<f64>,
    pub nu: f64,
}

impl TaggedParams {
    pub fn new(theta: Vec<f64>, u: Vec<f64>, nu: f64) -> Result<Self, SimError> {
        if theta.len() != u.len() || theta.is_empty() {
            return Err(SimError::Param("theta and u must be non-empty and of equal length".into()));
        }
        if !(0.0..1.0).contains(&nu) {
            return Err(SimError::Param(format!("nu must lie in [0, 1), got {nu}")));
        }
        Ok(Self { theta, u, nu })
    }

    /// Tagged particle: `theta = tau 2^{5/3} t^{2/3}`, `u = -tau`.
    pub fn tagged(taus: &[f64], t: f64) -> Self {
        let theta = taus.iter().map(|tau| tau * TWO_5_3 * t.powf(2.0 / 3.0)).collect();
        let u = taus.iter().map(|tau| -tau).collect();
        Self { theta, u, nu: 2.0 / 3.0 }
    }

    /// Whether every `|theta_k| <= t^nu`.
    pub fn in_regime(&self, t: f64) -> bool {
        self.theta.iter().all(|th| th.abs() <= t.powf(self.nu) + 1e-12)
    }

    /// `(label, time)` observed for entry `k`.
    pub fn observation(&self, k: usize, t: f64) -> (i64, f64) {
        let th = self.theta[k];
        let label = (-t + self.u[k] * TWO_5_3 * t.powf(2.0 / 3.0) + th + LABEL_SLACK).floor() as i64;
        (label, t + th)
    }

    /// `X^resc_t(u_k, theta_k)` from the raw position.
    pub fn rescale(&self, k: usize, t: f64, x: f64) -> f64 {
        let (th, u) = (self.theta[k], self.u[k]);
        -(x + 2.0 * th + u * TWO_5_3 * t.powf(2.0 / 3.0)) / (2.0 * t).cbrt()
    }
}

/// Rescaled space-time variables of the flat system for one replicate.
pub fn rescale_tagged(run: &FlatRun, master: u64, replicate: u64, t: f64, params: &TaggedParams) -> Result<Vec<f64>, SimError> {
    let mut probes = Vec::with_capacity(params.theta.len());
    for k in 0..params.theta.len() {
        let (label, time) = params.observation(k, t);
        let step = step_index(time, run.dt, run.n_steps)?;
        probes.push(Probe { label, step });
    }
    let xs = run.probe(master, replicate, &probes)?;
    Ok(xs.iter().enumerate().map(|(k, &x)| params.rescale(k, t, x)).collect())
}

/// Runs `f(replicate)` for `0..n` in parallel; results keep replicate order.
pub fn replicates<T, F>(n: usize, f: F) -> Result<Vec<T>, SimError>
where
    T: Send,
    F: Fn(u64) -> Result<T, SimError> + Sync + Send,
{
    (0..n as u64).into_par_iter().map(f).collect()
}

/// Empirical CDF with binomial standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub observable: String,
    pub n: usize,
    pub args: Vec<f64>,
    pub cdf: Vec<f64>,
    pub stderr: Vec<f64>,
    pub master_seed: u64,
    pub replicates: (u64, u64),
}

impl EnsembleStats {
    /// `P(sample <= arg)` for every `arg`.
    pub fn from_samples(observable: &str, samples: &[f64], args: &[f64], master_seed: u64) -> Self {
        let mut sorted = samples.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let n = sorted.len();
        let cdf: Vec<f64> = args
            .iter()
            .map(|&a| if n == 0 { 0.0 } else { sorted.partition_point(|&x| x <= a) as f64 / n as f64 })
            .collect();
        let stderr = cdf.iter().map(|&p| binomial_stderr(p, n)).collect();
        Self {
            observable: observable.to_string(),
            n,
            args: args.to_vec(),
            cdf,
            stderr,
            master_seed,
            replicates: (0, n as u64),
        }
    }

    /// Mean and standard error of the mean.
    pub fn mean(samples: &[f64]) -> (f64, f64) {
        let n = samples.len() as f64;
        let m = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        (m, (var / n).sqrt())
    }

    /// Columns `observable,argument,estimate,stderr,n,seed`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "observable,argument,estimate,stderr,n,seed")?;
        for i in 0..self.args.len() {
            writeln!(w, "{},{},{},{},{},{}", self.observable, self.args[i], self.cdf[i], self.stderr[i], self.n, self.master_seed)?;
        }
        Ok(())
    }
}

/// Frequency of `true` with its binomial standard error.
pub fn indicator_estimate(hits: &[bool]) -> (f64, f64) {
    let n = hits.len();
    let p = hits.iter().filter(|&&h| h).count() as f64 / n.max(1) as f64;
    (p, binomial_stderr(p, n))
}

pub fn binomial_stderr(p: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        (p * (1.0 - p) / n as f64).sqrt()
    }
}
