//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
//! Set `ACCEPTANCE_ONLY=1,4,7` to run a subset.

use num_complex::Complex64 as C64;
use onesided::experiments::*;
use onesided::fredholm::*;
use onesided::kernels::*;
use onesided::lambert::*;
use onesided::quad::GaussLegendre;
use onesided::simulate::{coupled_evolve, BrownianGrid, Scheme};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{E, PI};
use std::process::ExitCode;
use std::time::Instant;

type Outcome = (bool, String);

fn sci(v: &[f64]) -> String {
    format!("[{}]", v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", "))
}

fn lambert_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut count = 0;
    for k in -3..=3 {
        let (lo, hi) = BranchIndex(k).strip();
        let mut taken = 0;
        while taken < 1000 {
            let w = C64::new(rng.gen_range(-8.0..8.0), rng.gen_range(lo..hi));
            let z = w * w.exp();
            if !BranchIndex(k).contains(w) || (w + 1.0).norm() < 1e-3 || w.im.abs() < 1e-9 || !z.re.is_finite() {
                continue;
            }
            taken += 1;
            let got = match lambert_w(k, z) {
                Ok(v) => v,
                Err(e) => return (false, format!("k = {k}, z = {z}: {e}")),
            };
            worst = worst.max((got * got.exp() - z).norm() / (1.0 + z.norm()));
        }
        count += taken;
    }
    let ps = [1e-2, 1e-3];
    let errs: Vec<f64> = ps
        .iter()
        .map(|&p| {
            let z = C64::new((p * p / 2.0 - 1.0) / E, 0.0);
            let w = lambert_w(0, z).unwrap_or(C64::new(f64::NAN, 0.0));
            let q = (2.0 * (E * z.re + 1.0)).sqrt();
            (w.re - (-1.0 + q - q * q / 3.0 + 11.0 * q.powi(3) / 72.0)).abs()
        })
        .collect();
    let order = (errs[0].ln() - errs[1].ln()) / (ps[0].ln() - ps[1].ln());
    (worst <= 1e-12 && order >= 3.5, format!("{count} points, max |W e^W - z| / (1 + |z|) = {worst:.2e}, series order {order:.2}"))
}

fn contour_lemmas() -> Outcome {
    let grid = standard_tau_grid();
    let mut failures = Vec::new();
    let mut checks = 0;
    for rho in [0.0, 0.1, 0.5] {
        match validate_contour(&ContourKind::GammaRho { rho }, &grid) {
            Ok(rep) => {
                checks += rep.checks.len();
                failures.extend(rep.failures().iter().map(|c| format!("rho = {rho}: {}", c.id)));
            }
            Err(e) => failures.push(format!("rho = {rho}: {e}")),
        }
    }
    let rho = 1e-4;
    let target = -(1.0 - rho) / E;
    let (mut lo, mut hi) = (-3.0f64, -1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid * mid.exp() > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let dz = crossing_point(rho).map(|z0| (z0 - 0.5 * (lo + hi)).abs()).unwrap_or(f64::INFINITY);
    if dz > 1e-4 {
        failures.push(format!("z0(1e-4) off the root by {dz:e}"));
    }
    (failures.is_empty(), format!("{checks} checks on rho in {{0, 0.1, 0.5}}, |z0 - root| = {dz:.1e}, failures {failures:?}"))
}

fn biorthogonality() -> Outcome {
    let mut worst = 0.0f64;
    let rule = GaussLegendre::cached(16);
    for &t in &[0.5f64, 1.0, 2.0] {
        for n in 1..=6i64 {
            let lo = -(n as f64) - 12.0 * t.sqrt() - 2.0;
            let hi = 12.0 * t.sqrt() + 1.0;
            let panels = ((hi - lo) / (0.5 * t.sqrt())).ceil() as usize;
            let h = (hi - lo) / panels as f64;
            let nodes: Vec<(f64, f64)> = (0..panels).flat_map(|p| rule.mapped(lo + h * p as f64, lo + h * (p + 1) as f64).collect::<Vec<_>>()).collect();
            for k in 1..=n {
                for l in 1..=n {
                    let b: f64 = nodes.iter().map(|&(x, w)| w * eval_psi(n, k, x, t).unwrap() * eval_biphi(n, l, x, t).unwrap()).sum();
                    worst = worst.max((b - if k == l { 1.0 } else { 0.0 }).abs());
                }
            }
        }
    }
    (worst <= 1e-7, format!("max |B - I| = {worst:.2e} over n <= 6, t in {{0.5, 1, 2}}"))
}

fn kernel_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut sum_dev = 0.0f64;
    for _ in 0..20 {
        let p1 = KernelPoint::new(rng.gen_range(-4.0..1.0), rng.gen_range(1..=5));
        let p2 = KernelPoint::new(rng.gen_range(-4.0..1.0), rng.gen_range(1..=5));
        let t = rng.gen_range(0.5..2.0);
        let a = eval_finite_kernel(p1, p2, t).unwrap();
        let b = finite_kernel_double_contour(p1, p2, t, 128).unwrap();
        sum_dev = sum_dev.max((a - b).abs());
    }
    let wedges = [
        ContourKind::GammaMinus { theta: PI / 2.0 + 0.1, vertex: -3.0 },
        ContourKind::default_wedge(),
        ContourKind::GammaMinus { theta: 3.0 * PI / 4.0 - 0.05, vertex: -2.0 },
    ];
    let pts = [
        (KernelPoint::new(-1.0, 1), KernelPoint::new(-1.5, 1)),
        (KernelPoint::new(-0.5, 0), KernelPoint::new(-2.0, 1)),
        (KernelPoint::new(-2.0, 3), KernelPoint::new(-1.2, 0)),
        (KernelPoint::new(-2.0, 2), KernelPoint::new(-0.3, 1)),
        (KernelPoint::new(-2.5, -2), KernelPoint::new(-1.0, -1)),
    ];
    let mut wedge_dev = 0.0f64;
    for (p1, p2) in pts {
        let vals: Vec<f64> = wedges
            .iter()
            .map(|&k| FlatKernel::new(1.0, k, KernelBox::point(p1, p2), Resolution::default()).unwrap().eval(p1, p2))
            .collect();
        for v in &vals {
            wedge_dev = wedge_dev.max((v - vals[1]).abs());
        }
    }
    let mut decreasing = true;
    let mut shifted = Vec::new();
    for (p1, p2) in [(KernelPoint::new(-1.0, 1), KernelPoint::new(-1.5, 2)), (KernelPoint::new(-0.5, 0), KernelPoint::new(-0.2, 0))] {
        let flat = eval_flat_kernel(p1, p2, 1.0).unwrap();
        let errs: Vec<f64> = [5, 10, 20].iter().map(|&m| (shifted_finite_kernel(p1, p2, 1.0, m).unwrap() - flat).abs()).collect();
        decreasing &= errs[0] > errs[1] && errs[1] > errs[2];
        shifted.push(errs);
    }
    (
        sum_dev < 1e-8 && wedge_dev < 1e-8 && decreasing,
        format!("sum vs double contour {sum_dev:.1e}, wedge spread {wedge_dev:.1e}, shifted errors {}", sci(&shifted.concat())),
    )
}

fn mc_vs_fredholm() -> Outcome {
    let mut rows = Vec::new();
    for (n, sets) in [(2, vec![vec![1], vec![2], vec![1, 2]]), (3, vec![vec![1], vec![2], vec![3], vec![1, 3], vec![2, 3]])] {
        let cfg = ExperimentConfig {
            particles: n,
            label_sets: sets,
            times: vec![1.0],
            dt: 1e-3,
            replicates: 10_000,
            seed: 500 + n as u64,
            ..ExperimentConfig::default_for(ExperimentId::FiniteN)
        };
        match run_finite_n_consistency(&cfg) {
            Ok(r) => rows.extend(r.rows.into_iter().filter(|row| row.z.is_some())),
            Err(e) => return (false, e.to_string()),
        }
    }
    let within = rows.iter().filter(|r| r.z.unwrap().abs() <= 3.0).count();
    let max_z = rows.iter().fold(0.0f64, |m, r| m.max(r.z.unwrap().abs()));
    let frac = within as f64 / rows.len() as f64;
    (frac >= 0.95, format!("{within}/{} points with |z| <= 3 ({:.1}%), max |z| = {max_z:.2}", rows.len(), 100.0 * frac))
}

fn gue_check() -> Outcome {
    let cfg = ExperimentConfig::default_for(ExperimentId::StepGue);
    match run_step_gue(&cfg) {
        Ok(r) => {
            let max_z = r.rows.iter().fold(0.0f64, |m, row| m.max(row.z.unwrap().abs()));
            (max_z <= 3.0 && r.rows.len() == 20, format!("N = 2, {} points, {} replicates, max |z| = {max_z:.2}", r.rows.len(), cfg.replicates))
        }
        Err(e) => (false, e.to_string()),
    }
}

fn flat_trend() -> Outcome {
    let times = [1e2, 1e3, 1e4];
    let cfg = ExperimentConfig {
        times: times.to_vec(),
        grid: (0..=16).map(|i| -3.0 + 0.375 * i as f64).collect(),
        replicates: 0,
        ..ExperimentConfig::default_for(ExperimentId::FlatConvergence)
    };
    let report = match run_flat_convergence(&cfg) {
        Ok(r) => r,
        Err(e) => return (false, e.to_string()),
    };
    let d: Vec<f64> = times.iter().map(|t| report.summary.metric(&format!("sup|fredholm-airy1| t={t} r=0")).unwrap()).collect();
    let mut kerr = Vec::new();
    for &t in &times {
        let mut worst = 0.0f64;
        for (r1, r2) in [(0.0, 0.0), (0.0, 0.3), (0.3, 0.0)] {
            for s1 in -2..=2 {
                for s2 in -2..=2 {
                    let (s1, s2) = (s1 as f64, s2 as f64);
                    let k = match eval_conjugated_kernel(ScaledPoint::new(s1, r1, t), ScaledPoint::new(s2, r2, t), Normalization::Scaled) {
                        Ok(v) => v,
                        Err(e) => return (false, e.to_string()),
                    };
                    worst = worst.max((k - eval_airy1_kernel(s1, r1, s2, r2).unwrap()).abs());
                }
            }
        }
        kerr.push(worst);
    }
    let xs: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = kerr.iter().map(|e| e.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 3.0, ys.iter().sum::<f64>() / 3.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    (
        d[0] > d[1] && d[1] > d[2] && (-0.45..=-0.20).contains(&slope),
        format!("sup distances {}, kernel errors {}, slope {slope:.3}", sci(&d), sci(&kerr)),
    )
}

fn attractiveness() -> Outcome {
    let n = 10usize;
    let mut worst = 0.0f64;
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let init_a: Vec<f64> = (1..=n).map(|k| -(k as f64)).collect();
        let mut shift: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..=0.5)).collect();
        shift[rng.gen_range(0..n)] = if rng.gen::<bool>() { 0.5 } else { -0.5 };
        let init_b: Vec<f64> = init_a.iter().zip(&shift).map(|(a, s)| a + s).collect();
        let grid = match BrownianGrid::generate(1e-3, 1000, 1, n as i64, seed, 0) {
            Ok(g) => g,
            Err(e) => return (false, e.to_string()),
        };
        let (a, b) = match coupled_evolve(&grid, &init_a, &init_b, 1.0) {
            Ok(v) => v,
            Err(e) => return (false, e.to_string()),
        };
        worst = worst.max(a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())));
    }
    (worst <= 0.5 + 1e-12, format!("1000 seeds, N = {n}, initial gap 0.5, largest final gap {worst:.15}"))
}

fn slow_decorrelation() -> Outcome {
    let mut ps = Vec::new();
    for t in [50.0, 200.0, 800.0] {
        match decorrelation_probability(t, 0.4, 0.25, 10_000, 0.5, Scheme::Bridge, 900) {
            Ok(d) => ps.push(d),
            Err(e) => return (false, e.to_string()),
        }
    }
    let ok = ps.windows(2).all(|w| w[1].probability < w[0].probability);
    let detail: Vec<String> = ps.iter().map(|d| format!("t = {}: theta = {}, P = {:.4} +- {:.4}", d.t, d.theta, d.probability, d.stderr)).collect();
    (ok, detail.join("; "))
}

fn fredholm_engine() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let mut rank_one = 0.0f64;
    for (c, a) in [(0.7, 0.0), (0.3, -1.5), (1.1, 2.0)] {
        let disc = Discretization::new(Orientation::BelowThreshold, vec![a], vec![14.0], 64).unwrap();
        let op = build_operator(|x, _, y, _| Ok(c * (-0.5 * x * x).exp() * (-0.5 * y * y).exp()), &disc).unwrap();
        let exact = 1.0 - c * 0.5 * PI.sqrt() * libm::erfc(-a);
        rank_one = rank_one.max((fredholm_det(&op).unwrap().value - exact).abs());
    }
    ok &= rank_one < 1e-8;
    notes.push(format!("rank one {rank_one:.1e}"));
    let mut doubling = 0.0f64;
    let coarse = DetOptions::default();
    let fine = DetOptions { n_start: 4 * coarse.n_start, ..coarse };
    let flat_set = LabelSet::new(vec![0, 2], vec![-1.2, -2.9]).unwrap();
    let fin_set = LabelSet::new(vec![1, 3], vec![-1.5, -3.2]).unwrap();
    let pairs = [
        (joint_cdf_flat_with(1.0, &flat_set, &coarse), joint_cdf_flat_with(1.0, &flat_set, &fine)),
        (joint_cdf_finite_with(1.0, &fin_set, &coarse), joint_cdf_finite_with(1.0, &fin_set, &fine)),
        (joint_cdf_airy1_with(&[(0.0, -0.4), (0.8, 0.6)], &coarse), joint_cdf_airy1_with(&[(0.0, -0.4), (0.8, 0.6)], &fine)),
    ];
    for (a, b) in pairs {
        match (a, b) {
            (Ok(a), Ok(b)) => doubling = doubling.max((a.value - b.value).abs()),
            (Err(e), _) | (_, Err(e)) => return (false, e.to_string()),
        }
    }
    ok &= doubling < 1e-6;
    notes.push(format!("resolution change {doubling:.1e}"));
    let mut bounds = true;
    let mut monotone = true;
    let mut count = 0;
    for id in [ExperimentId::FlatConvergence, ExperimentId::FiniteN, ExperimentId::Tagged] {
        let mut cfg = ExperimentConfig::default_for(id);
        cfg.replicates = 0;
        cfg.decorrelation_times.clear();
        let values: Vec<Vec<f64>> = match id {
            ExperimentId::FlatConvergence => {
                let r = run_flat_convergence(&cfg).unwrap();
                let fr: Vec<f64> = r.rows_for("limit").map(|row| row.estimate).collect();
                let ai: Vec<f64> = r.rows_for("limit").map(|row| row.exact.unwrap()).collect();
                vec![fr, ai]
            }
            ExperimentId::FiniteN => cfg
                .label_sets
                .iter()
                .map(|set| {
                    cfg.grid
                        .iter()
                        .map(|&x| {
                            let th: Vec<f64> = set.iter().map(|&k| -(k as f64) + x).collect();
                            1.0 - joint_cdf_finite(1.0, &LabelSet::new(set.clone(), th).unwrap()).unwrap().value
                        })
                        .collect()
                })
                .collect(),
            _ => cfg
                .taus
                .iter()
                .map(|&tau| cfg.grid.iter().map(|&s| joint_cdf_airy1(&[(-tau, s)]).unwrap().value).collect())
                .collect(),
        };
        for v in values {
            count += v.len();
            bounds &= v.iter().all(|p| (-1e-8..=1.0 + 1e-8).contains(p));
            monotone &= v.windows(2).all(|w| w[1] >= w[0] - 1e-9);
        }
    }
    ok &= bounds && monotone;
    notes.push(format!("{count} shipped-grid values, bounds {bounds}, monotone {monotone}"));
    (ok, notes.join(", "))
}

fn main() -> ExitCode {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let criteria: [(usize, &str, fn() -> Outcome); 10] = [
        (1, "Lambert W round trip and branch-point series", lambert_round_trip),
        (2, "contour lemmas", contour_lemmas),
        (3, "biorthogonality", biorthogonality),
        (4, "kernel consistency", kernel_consistency),
        (5, "Monte Carlo vs Fredholm, N = 2, 3", mc_vs_fredholm),
        (6, "step start vs GUE top eigenvalue", gue_check),
        (7, "flat convergence trend", flat_trend),
        (8, "attractiveness", attractiveness),
        (9, "slow decorrelation", slow_decorrelation),
        (10, "Fredholm engine", fredholm_engine),
    ];
    let mut failed = 0;
    for (id, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = f();
        failed += usize::from(!ok);
        println!("criterion {id:>2} {}: {name}: {detail} [{:.1}s]", if ok { "PASS" } else { "FAIL" }, start.elapsed().as_secs_f64());
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
