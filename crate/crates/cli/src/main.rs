//! Command-line front end for the `fracpoisson` library.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Result};
use clap::{Parser, Subcommand};
use fracpoisson::experiments::{
    almost_sure_rate_probe, default_b_max, run_convergence_study, run_holder_study, run_isometry_study,
    run_kernel_rate_study, SmoothingConfig, StudyKind,
};
use fracpoisson::grid::GridSpec;
use fracpoisson::kernels::{k_tilde, kernel_discrepancy_l2, kernel_mixed_bound};
use fracpoisson::mollifier::MollifierTable;
use fracpoisson::noise::{NoiseSample, NoiseSampler};
use fracpoisson::rates::{exponent_report, HurstVector};
use fracpoisson::solver::{mild_residual, solve_scheme, SolveOptions, MILD_RESIDUAL_MAX_NODES};
use fracpoisson::spectral::SpectralPlan;

use config::{Format, Loaded};
use output::RunDir;

#[derive(Parser)]
#[command(name = "fracpoisson", version, about = "Lattice schemes for the fractional Poisson equation")]
struct Cli {
    /// Worker threads (overrides `workers` in the config).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exponent suprema and hypothesis verdicts for a Hurst vector.
    Rates {
        /// Comma-separated Hurst indices; a single value is repeated `k` times.
        #[arg(long)]
        h: String,
        #[arg(long)]
        k: Option<usize>,
        /// Kernel discrepancy exponent for the smoothed scheme (k >= 4).
        #[arg(long)]
        delta: Option<f64>,
        /// Mollifier exponent, checked against its admissible interval.
        #[arg(long)]
        mu: Option<f64>,
    },
    /// Draws the noise of every replicate on the reference grid.
    Sample { config: PathBuf },
    /// Solves the scheme once on the reference grid.
    Solve {
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        replicate: u64,
    },
    /// Runs the study described by the config.
    Study { config: PathBuf },
    /// Kernel constants on one grid.
    KernelCheck {
        #[arg(long)]
        h: String,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        n: usize,
        /// Mollifier width; defaults to `n^-mu` from the smoothing parameters when k >= 4.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Discrepancy modes run to `max(n, ceil(scale / epsilon))`.
        #[arg(long, default_value_t = 16.0)]
        b_max_scale: f64,
    },
    /// Monte Carlo check of the isometry on a panel of boxes.
    IsometryCheck { config: PathBuf },
}

/// Success or an acceptance failure; errors travel separately.
enum Outcome {
    Pass,
    Fail,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            let numerical = e.chain().any(|c| c.downcast_ref::<fracpoisson::Error>().is_some_and(|x| x.is_numerical()));
            ExitCode::from(if numerical { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Rates { h, k, delta, mu } => cmd_rates(&parse_h(&h, k)?, delta, mu),
        Command::KernelCheck { h, k, n, epsilon, b_max_scale } => {
            set_workers(cli.workers)?;
            cmd_kernel_check(&parse_h(&h, k)?, n, epsilon, b_max_scale)
        }
        Command::Sample { config } => with_config(&config, cli.workers, "sample", cmd_sample),
        Command::Solve { config, replicate } => {
            with_config(&config, cli.workers, "solve", |l, d| cmd_solve(l, d, replicate))
        }
        Command::Study { config } => with_config(&config, cli.workers, "study", cmd_study),
        Command::IsometryCheck { config } => with_config(&config, cli.workers, "isometry", |l, d| {
            if l.config.study.kind != StudyKind::Isometry {
                bail!("{}: study.kind must be \"isometry\"", l.path.display());
            }
            cmd_study(l, d)
        }),
    }
}

fn parse_h(text: &str, k: Option<usize>) -> Result<HurstVector> {
    let h = HurstVector::parse(text)?;
    match k {
        None => Ok(h),
        Some(k) if k == h.dim() => Ok(h),
        Some(k) if h.dim() == 1 => Ok(HurstVector::uniform(k, h.as_slice()[0])?),
        Some(k) => bail!("--h has {} entries but --k is {k}", h.dim()),
    }
}

fn set_workers(workers: Option<usize>) -> Result<()> {
    if let Some(w) = workers {
        if w == 0 {
            bail!("workers must be >= 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(w).build_global().map_err(|e| anyhow!("worker pool: {e}"))?;
    }
    Ok(())
}

fn with_config(
    path: &Path,
    workers: Option<usize>,
    command: &str,
    body: impl FnOnce(&Loaded, &RunDir) -> Result<Outcome>,
) -> Result<Outcome> {
    let loaded = config::load(path)?;
    set_workers(workers.or(loaded.config.workers))?;
    let dir = RunDir::create(&loaded.config.output_dir, command)?;
    dir.write_manifest(command, &loaded)?;
    if loaded.seed_source == config::SeedSource::Environment {
        println!("seed {} from {}", loaded.config.study.seed, config::SEED_ENV);
    }
    println!("output {}", dir.path.display());
    body(&loaded, &dir)
}

fn fmt_exponent(v: f64) -> String {
    if v.is_nan() {
        "-".into()
    } else {
        format!("{v}")
    }
}

fn cmd_rates(h: &HurstVector, delta: Option<f64>, mu: Option<f64>) -> Result<Outcome> {
    let r = exponent_report(h);
    let verdict = |ok: bool| if ok { "ok" } else { "fails" };
    println!("h = {:?} (k = {}, sum = {})", h.as_slice(), h.dim(), h.sum());
    println!("hypothesis (H): {}", verdict(r.hypothesis_ok));
    println!("hypothesis (H*): {}", verdict(r.hypothesis_star_ok));
    println!("lambda = {}", fmt_exponent(r.lambda_sup));
    println!("nu = {}", fmt_exponent(r.nu_sup));
    println!("gamma = {}", fmt_exponent(r.gamma_sup));
    if !r.hypothesis_ok {
        return Ok(Outcome::Fail);
    }
    if h.dim() >= 4 {
        let p = SmoothingConfig { delta, mu, ..SmoothingConfig::default() }.resolve(h)?;
        println!(
            "smoothing: delta = {}, mu = {} (admissible below {}), eps(n) = n^-mu",
            p.delta,
            p.mu,
            p.mu_upper(h.dim())
        );
    } else if delta.is_some() || mu.is_some() {
        println!("smoothing: not used for k = {}", h.dim());
    }
    Ok(Outcome::Pass)
}

fn cmd_kernel_check(h: &HurstVector, n: usize, epsilon: Option<f64>, b_max_scale: f64) -> Result<Outcome> {
    let k = h.dim();
    let grid = GridSpec::new(k, n)?;
    let plan = SpectralPlan::new(grid);
    let eps = match epsilon {
        Some(e) => Some(e),
        None if k >= 4 => Some(SmoothingConfig::default().resolve(h)?.epsilon(n)),
        None => None,
    };
    let table = eps.map(|e| MollifierTable::new(e, &grid)).transpose()?;
    let bound = kernel_mixed_bound(h, &plan, table.as_ref())?;
    let kt = k_tilde(&plan, table.as_ref());
    println!("k = {k}, n = {n}, epsilon = {}", eps.map_or("-".into(), |e| e.to_string()));
    println!("sup_x ||G(x, .)||_(1/h) = {bound:.10e}");
    println!("K~ = sup_x int |G(x, y)| dy = {kt:.10e}");
    if let (Some(e), true) = (eps, k >= 2) {
        let b_max = default_b_max(n, e, b_max_scale);
        let report = kernel_discrepancy_l2(&plan, &MollifierTable::with_len(e, b_max + 1)?, b_max)?;
        println!(
            "discrepancy = {:.10e} (b_max = {}, a1 = {:.3e}, tail = {:.3e}, a2 = {:.3e}, a3 = a4 = {:.3e})",
            report.discrepancy, report.b_max, report.a1, report.a1_tail, report.a2, report.a3
        );
    }
    Ok(Outcome::Pass)
}

fn noise_for(l: &Loaded, replicate: u64) -> Result<NoiseSample> {
    let s = &l.config.study;
    let grid = GridSpec::new(s.k(), s.reference_resolution)?;
    Ok(if s.zero_noise {
        NoiseSample::zeros(&s.h, grid)
    } else {
        NoiseSampler::new(&s.h, grid)?.sample(s.seed, 0, replicate)
    })
}

fn cmd_sample(l: &Loaded, dir: &RunDir) -> Result<Outcome> {
    let s = &l.config.study;
    let grid = GridSpec::new(s.k(), s.reference_resolution)?;
    let sampler = NoiseSampler::new(&s.h, grid)?;
    for r in 0..s.replicates as u64 {
        let sample = sampler.sample(s.seed, 0, r);
        match l.config.format {
            Format::Csv => dir.write_with(&format!("noise_{r:04}.csv"), |out| sample.write_csv(out))?,
            Format::Json => dir.write_json(&format!("noise_{r:04}.json"), &sample)?,
        }
    }
    println!("sample n={} k={} replicates={} seed={}", grid.n(), grid.k(), s.replicates, s.seed);
    Ok(Outcome::Pass)
}

fn cmd_solve(l: &Loaded, dir: &RunDir, replicate: u64) -> Result<Outcome> {
    let s = &l.config.study;
    let grid = GridSpec::new(s.k(), s.reference_resolution)?;
    let plan = SpectralPlan::new(grid);
    let moll = s.mollifier(&grid)?;
    let noise = noise_for(l, replicate)?;
    let opts = SolveOptions { tolerance: s.tolerance, max_iter: s.max_iter, ..SolveOptions::default() };
    let report = solve_scheme(&noise, &s.source, &s.nonlinearity, &plan, moll.as_ref(), &opts)?;
    let residual = if grid.num_interior() <= MILD_RESIDUAL_MAX_NODES {
        Some(mild_residual(&report.solution, &noise, &s.source, &s.nonlinearity, &plan, moll.as_ref())?)
    } else {
        None
    };
    match l.config.format {
        Format::Csv => dir.write_with("solution.csv", |out| report.solution.write_csv(out))?,
        Format::Json => dir.write_json("solution.json", &report.solution)?,
    }
    let mut summary = serde_json::to_value(report.summary())?;
    summary["replicate"] = replicate.into();
    summary["mild_residual"] = residual.map_or(serde_json::Value::Null, Into::into);
    dir.write_json("summary.json", &summary)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "solve n={} k={} iterations={} update={:.3e} residual={} {}",
        grid.n(),
        grid.k(),
        report.iterations,
        report.final_residual_sup,
        residual.map_or("-".into(), |r| format!("{r:.3e}")),
        if report.converged { "converged" } else { "not converged" }
    );
    if report.converged {
        Ok(Outcome::Pass)
    } else {
        Err(fracpoisson::Error::Divergence(format!("no convergence after {} iterations", report.iterations)).into())
    }
}

fn cmd_study(l: &Loaded, dir: &RunDir) -> Result<Outcome> {
    let s = &l.config.study;
    let format = l.config.format;
    let (line, pass) = match s.kind {
        StudyKind::Isometry => {
            let r = run_isometry_study(s)?;
            match format {
                Format::Csv => dir.write_with("isometry.csv", |out| r.write_csv(out))?,
                Format::Json => dir.write_json("isometry.json", &r)?,
            }
            dir.write_json(
                "summary.json",
                &serde_json::json!({ "study_kind": "isometry", "max_z": r.max_z, "max_z_limit": r.max_z_limit, "pass": r.pass }),
            )?;
            (r.summary_line(), r.pass)
        }
        StudyKind::AlmostSure => {
            let r = almost_sure_rate_probe(s)?;
            match format {
                Format::Csv => dir.write_with("xi.csv", |out| {
                    use std::io::Write;
                    writeln!(out, "replicate,xi")?;
                    for (i, x) in r.xi.iter().enumerate() {
                        writeln!(out, "{i},{x:.16e}")?;
                    }
                    Ok(())
                })?,
                Format::Json => dir.write_json("xi.json", &r.xi)?,
            }
            dir.write_json("summary.json", &r)?;
            let growth = r.growth_slope.map_or("-".into(), |g| format!("{g:.4}"));
            let line = format!(
                "almost_sure nu={} q99={:.4e} max={:.4e} growth_slope={growth} {}",
                r.nu,
                r.q99,
                r.max,
                if r.all_finite { "PASS" } else { "FAIL" }
            );
            (line, r.all_finite)
        }
        kind => {
            let est = match kind {
                StudyKind::Convergence => run_convergence_study(s)?,
                StudyKind::KernelRate => run_kernel_rate_study(s)?,
                StudyKind::Holder => run_holder_study(s)?,
                StudyKind::Isometry | StudyKind::AlmostSure => unreachable!(),
            };
            match format {
                Format::Csv => dir.write_with("rates.csv", |out| est.write_csv(out))?,
                Format::Json => dir.write_json("rates.json", &est)?,
            }
            dir.write_json("summary.json", &est.summary_json())?;
            (est.summary_line(), est.pass)
        }
    };
    println!("{line}");
    Ok(if pass { Outcome::Pass } else { Outcome::Fail })
}
