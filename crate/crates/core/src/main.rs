use clap::{Parser, Subcommand, ValueEnum};
use onesided::experiments::{emit_report, run, ExperimentConfig, ExperimentId};
use onesided::fredholm::{joint_cdf_airy1_with, joint_cdf_finite_with, joint_cdf_flat_with, DetOptions, LabelSet};
use onesided::kernels::{eval_airy1_kernel, eval_conjugated_kernel, InitialCondition, Normalization, ScaledPoint};
use onesided::lambert::{standard_tau_grid, validate_contour, ContourKind};
use onesided::simulate::{choose_window, finite_probe, replicates, FlatRun, Probe, Scheme};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "onesided", version, about = "Brownian motions with one-sided collisions")]
struct Cli {
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for reports.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Starting Nystrom node count per label.
    #[arg(long, global = true)]
    resolution: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Start {
    Flat,
    Step,
}

#[derive(Subcommand)]
enum Command {
    /// Sample particle positions; prints one CSV line per replicate.
    Simulate {
        #[arg(long)]
        t: f64,
        #[arg(long, value_enum, default_value = "flat")]
        init: Start,
        /// Number of particles; omit for the infinite flat system.
        #[arg(long)]
        particles: Option<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        labels: Vec<i64>,
        #[arg(long, default_value_t = 1)]
        reps: usize,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        #[arg(long, value_enum, default_value = "bridge")]
        scheme: SchemeArg,
    },
    /// Flat kernel in Airy scaling next to its Airy_1 limit.
    Kernel {
        #[arg(long)]
        t: f64,
        #[arg(long)]
        s1: f64,
        #[arg(long, default_value_t = 0.0)]
        r1: f64,
        #[arg(long)]
        s2: f64,
        #[arg(long, default_value_t = 0.0)]
        r2: f64,
    },
    /// Joint distribution as a Fredholm determinant.
    Fredholm {
        /// Time; omit for the Airy_1 limit.
        #[arg(long)]
        t: Option<f64>,
        /// Scaled points `r:s`, comma separated.
        #[arg(long, value_delimiter = ',')]
        points: Vec<String>,
        /// Finite system from `x_k(0) = -k`: labels with thresholds `k:a`.
        #[arg(long)]
        finite: bool,
    },
    /// Run a named experiment and write its report.
    Experiment {
        /// flat-convergence, finite-n, tagged or step-gue.
        id: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Check the geometric properties of the standard contours.
    ValidateContours,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Grid,
    Bridge,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Grid => Scheme::Grid,
            SchemeArg::Bridge => Scheme::Bridge,
        }
    }
}

fn pair<A: std::str::FromStr, B: std::str::FromStr>(s: &str) -> Result<(A, B), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected a:b, got '{s}'"))?;
    Ok((a.trim().parse().map_err(|_| format!("bad value in '{s}'"))?, b.trim().parse().map_err(|_| format!("bad value in '{s}'"))?))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let seed = cli.seed.unwrap_or(1);
    let opts = DetOptions { n_start: cli.resolution.unwrap_or(DetOptions::default().n_start), ..DetOptions::default() };
    match cli.command {
        Command::Simulate { t, init, particles, labels, reps, dt, scheme } => {
            let n_steps = (t / dt).ceil().max(1.0) as usize;
            let dt = t / n_steps as f64;
            let probes: Vec<Probe> = labels.iter().map(|&label| Probe { label, step: n_steps }).collect();
            let rows = match (particles, init) {
                (Some(n), start) => {
                    let ic = match start {
                        Start::Flat => InitialCondition::Flat,
                        Start::Step => InitialCondition::Step,
                    };
                    replicates(reps, |rep| finite_probe(&ic, n, dt, n_steps, scheme.into(), seed, rep, &probes))?
                }
                (None, Start::Flat) => {
                    let run = FlatRun { dt, n_steps, window: choose_window(t, &labels, 1e-6), scheme: scheme.into() };
                    replicates(reps, |rep| run.probe(seed, rep, &probes))?
                }
                (None, Start::Step) => return Err("step start needs --particles".into()),
            };
            println!("replicate,{}", labels.iter().map(|k| format!("x{k}")).collect::<Vec<_>>().join(","));
            for (rep, xs) in rows.iter().enumerate() {
                println!("{rep},{}", xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","));
            }
        }
        Command::Kernel { t, s1, r1, s2, r2 } => {
            let k = eval_conjugated_kernel(ScaledPoint::new(s1, r1, t), ScaledPoint::new(s2, r2, t), Normalization::Scaled)?;
            let a = eval_airy1_kernel(s1, r1, s2, r2)?;
            println!("kernel,airy1,difference\n{k},{a},{}", k - a);
        }
        Command::Fredholm { t, points, finite } => {
            let value = if finite {
                let t = t.ok_or("finite system needs --t")?;
                let pts: Vec<(i64, f64)> = points.iter().map(|p| pair(p)).collect::<Result<_, _>>()?;
                let set = LabelSet::new(pts.iter().map(|p| p.0).collect(), pts.iter().map(|p| p.1).collect())?;
                joint_cdf_finite_with(t, &set, &opts)?
            } else {
                let pts: Vec<(f64, f64)> = points.iter().map(|p| pair(p)).collect::<Result<_, _>>()?;
                match t {
                    Some(t) => joint_cdf_flat_with(t, &LabelSet::from_scaled(t, &pts)?, &opts)?,
                    None => joint_cdf_airy1_with(&pts, &opts)?,
                }
            };
            println!("value,nodes");
            let nodes = value.resolution_trace.last().map(|r| r.0).unwrap_or(0);
            println!("{},{nodes}", value.value);
        }
        Command::Experiment { id, config, replicates } => {
            let id = ExperimentId::parse(&id)?;
            let mut cfg = match config {
                Some(path) => ExperimentConfig::load(&path)?,
                None => ExperimentConfig::default_for(id),
            };
            if cfg.id != id {
                return Err(format!("config is for '{}', not '{}'", cfg.id.name(), id.name()).into());
            }
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if let Some(n) = replicates {
                cfg.replicates = n;
            }
            if let Some(n) = cli.resolution {
                cfg.nodes = n;
            }
            let dir = cli.out.unwrap_or_else(|| PathBuf::from(&cfg.output));
            let report = run(&cfg)?;
            let (csv, manifest) = emit_report(&report, &cfg, &dir)?;
            println!("{}: {} rows, max |z| = {:.3}, {:.1}% within 3 sigma", report.experiment, report.rows.len(), report.summary.max_abs_z, 100.0 * report.summary.within_3);
            for (name, v) in &report.summary.metrics {
                println!("  {name} = {v:.6}");
            }
            println!("wrote {} and {}", csv.display(), manifest.display());
        }
        Command::ValidateContours => {
            let taus = standard_tau_grid();
            let kinds = [
                ContourKind::default_wedge(),
                ContourKind::GammaRho { rho: 0.0 },
                ContourKind::GammaRho { rho: 0.05 },
                ContourKind::unit_circle(),
            ];
            let mut ok = true;
            for kind in kinds {
                let report = validate_contour(&kind, &taus)?;
                for c in &report.checks {
                    println!("{:?} {} {}: {}", kind, if c.passed { "PASS" } else { "FAIL" }, c.id, c.detail);
                }
                ok &= report.all_passed();
            }
            return Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE });
        }
    }
    Ok(ExitCode::SUCCESS)
}
