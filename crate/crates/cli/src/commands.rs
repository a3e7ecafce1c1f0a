use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rls_core::bench::{exact_recovery, run_solver, run_sweep, write_csv, ResultRecord, SolverKind};
use rls_core::format::fmt_g17;
use rls_core::instance::{Ensemble, ProblemInstance};
use rls_core::solvers::{RlsParams, VoteMode};
use rls_core::theory::{
    empirical_error_norm, mp_inverse_moment, mp_inverse_moment_quadrature, mp_mass_quadrature,
    predicted_error_norm, Estimate, MpParams,
};

use crate::args::{BenchArgs, Command, EnsembleArg, GenArgs, SolveArgs, TheoryArgs, VoteModeArg};
use crate::config::{BenchPlan, CliConfig, PlotAxis, TheoryPlan, BENCH_KEYS, THEORY_KEYS};
use crate::presets::{self, PresetKind};
use crate::CliError;

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Solve(a) => cmd_solve(&a).map(|_| ()),
        Command::Bench(a) => cmd_bench(&a),
        Command::Theory(a) => cmd_theory(&a),
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))
}

pub fn cmd_gen(a: &GenArgs) -> Result<(), CliError> {
    if a.n == 0 || a.d == 0 {
        return Err(usage("N and D must be positive"));
    }
    if a.k == 0 || a.k > a.d {
        return Err(usage(format!("k={} must lie in [1, D={}]", a.k, a.d)));
    }
    if !(a.sigma >= 0.0 && a.sigma.is_finite()) {
        return Err(usage(format!("sigma must be finite and nonnegative, got {}", a.sigma)));
    }
    let ensemble = match a.ensemble {
        EnsembleArg::Gaussian => Ensemble::GaussianIid,
        EnsembleArg::Toeplitz => Ensemble::Toeplitz { rho: a.rho },
        EnsembleArg::Bernoulli => Ensemble::Bernoulli,
    };
    ensemble.validate().map_err(|e| usage(e.to_string()))?;
    let instance = ProblemInstance::generate(ensemble, a.n, a.d, a.k, a.sigma, a.seed)?;
    instance.write_to(create(&a.out)?)?;
    println!("wrote {} (seed {})", a.out.display(), a.seed);
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub solver: SolverKind,
    pub support: String,
    pub set_match: bool,
    pub signed_match: bool,
    pub seconds: f64,
}

/// Prints the report and returns it; a set mismatch is an error so the exit
/// status reflects it.
pub fn cmd_solve(a: &SolveArgs) -> Result<SolveReport, CliError> {
    let file = File::open(&a.instance)
        .map_err(|e| CliError::Io(format!("cannot open {}: {e}", a.instance.display())))?;
    let instance = ProblemInstance::read_from(BufReader::new(file))?;
    let (n, k) = (instance.n(), instance.k());

    let solver = match a.solver.as_str() {
        "rls_fixed" => SolverKind::RlsFixed {
            n0: a.n0.unwrap_or(((0.875 * n as f64).round() as usize).max(1)),
            m: a.m,
        },
        tag => tag.parse().map_err(|e: rls_core::Error| usage(e.to_string()))?,
    };
    let params = RlsParams {
        m: a.m,
        frac_lo: a.frac_lo,
        frac_hi: a.frac_hi,
        votes: a.votes,
        seed: a.seed,
        vote_mode: match a.vote_mode {
            VoteModeArg::PerStep => VoteMode::PerStep,
            VoteModeArg::FullPeel => VoteMode::FullPeel,
        },
    };
    params.validate().map_err(|e| usage(e.to_string()))?;
    if a.m == 0 {
        return Err(usage("m must be at least 1"));
    }

    let start = Instant::now();
    let estimate = run_solver(solver, instance.x.entries(), &instance.y, k, &params, a.m, a.seed)?;
    let seconds = start.elapsed().as_secs_f64();
    let verdict = exact_recovery(&instance.theta_star, &estimate);

    let report = SolveReport {
        solver,
        support: estimate.to_string(),
        set_match: verdict.set_match,
        signed_match: verdict.signed_match,
        seconds,
    };
    println!("solver        {}", report.solver);
    println!("support       {}", report.support);
    println!("set_match     {}", report.set_match);
    println!("signed_match  {}", report.signed_match);
    println!("seconds       {:.6}", report.seconds);
    if report.set_match {
        Ok(report)
    } else {
        Err(CliError::Mismatch)
    }
}

fn load_config(
    config: Option<&PathBuf>,
    preset: Option<&str>,
    kind: PresetKind,
    keys: &[&str],
) -> Result<(CliConfig, String), CliError> {
    match (config, preset) {
        (Some(path), _) => {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run").to_string();
            Ok((CliConfig::load(path, keys)?, stem))
        }
        (None, Some(name)) => match presets::preset(name) {
            Some((k, text)) if k == kind => Ok((CliConfig::parse(text, keys)?, name.to_string())),
            _ => Err(usage(format!("unknown preset '{name}' (available: {})", presets::names(kind).join(", ")))),
        },
        (None, None) => Ok((CliConfig::default(), "run".to_string())),
    }
}

/// Resolves flags and configuration into a validated plan without running it.
pub fn bench_plan(a: &BenchArgs) -> Result<BenchPlan, CliError> {
    let (mut config, name) = load_config(a.config.as_ref(), a.preset.as_deref(), PresetKind::Bench, BENCH_KEYS)?;
    if let Some(trials) = a.trials {
        config.set("trials", &trials.to_string(), BENCH_KEYS)?;
    }
    if let Some(seed) = a.seed {
        config.set("seed", &seed.to_string(), BENCH_KEYS)?;
    }
    for o in &a.overrides {
        let (key, value) = o.split_once('=').ok_or_else(|| usage(format!("--set expects KEY=VALUE, got '{o}'")))?;
        config.set(key.trim(), value, BENCH_KEYS)?;
    }
    if a.timing {
        config.set("timing", "true", BENCH_KEYS)?;
    }
    BenchPlan::from_config(&config, &name)
}

pub fn cmd_bench(a: &BenchArgs) -> Result<(), CliError> {
    let plan = bench_plan(a)?;
    let mut records = Vec::new();
    for sweep in &plan.sweeps {
        records.extend(run_sweep(sweep)?);
    }

    match &a.out {
        Some(path) => write_csv(&records, create(path)?, plan.timing)?,
        None => write_csv(&records, io::stdout().lock(), plan.timing)?,
    }
    if let Some(dir) = &a.plot_dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        for (label, points) in plot_curves(&plan, &records) {
            let mut w = create(&dir.join(format!("{label}.dat")))?;
            writeln!(w, "# x prob_set")?;
            for (x, p) in points {
                writeln!(w, "{} {}", fmt_g17(x), fmt_g17(p))?;
            }
            w.flush()?;
        }
    }

    let summary = summary_table(&plan, &records);
    if a.out.is_some() {
        print!("{summary}");
    } else {
        eprint!("{summary}");
    }
    Ok(())
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '_' { c } else { '_' }).collect()
}

/// Groups records into named `(x, prob_set)` curves along the plan's plot
/// axis, in first-appearance order.
pub fn plot_curves(plan: &BenchPlan, records: &[ResultRecord]) -> Vec<(String, Vec<(f64, f64)>)> {
    let sigmas: Vec<f64> = plan.sweeps.iter().map(|s| s.sigma).collect();
    let many_n = plan.sweeps.first().is_some_and(|s| s.n_values.len() > 1);
    let many_k = plan.sweeps.first().is_some_and(|s| s.k_values.len() > 1);
    let mut curves: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for r in records {
        let mut label = plan.name.clone();
        if sigmas.len() > 1 {
            label += &format!("_sigma{}", fmt_g17(r.sigma));
        }
        let x = match plan.plot_x {
            PlotAxis::N => {
                label += &format!("_{}", sanitize(&r.solver.to_string()));
                if many_k {
                    label += &format!("_k{}", r.k);
                }
                r.n as f64
            }
            PlotAxis::K => {
                label += &format!("_{}", sanitize(&r.solver.to_string()));
                if many_n {
                    label += &format!("_N{}", r.n);
                }
                r.k as f64
            }
            PlotAxis::N0Frac => {
                let SolverKind::RlsFixed { n0, m } = r.solver else { continue };
                label += &format!("_rls_fixed_m{m}");
                if many_n {
                    label += &format!("_N{}", r.n);
                }
                if many_k {
                    label += &format!("_k{}", r.k);
                }
                n0 as f64 / r.n as f64
            }
        };
        match curves.iter_mut().find(|(l, _)| *l == label) {
            Some((_, points)) => points.push((x, r.prob_set())),
            None => curves.push((label, vec![(x, r.prob_set())])),
        }
    }
    curves
}

pub fn summary_table(plan: &BenchPlan, records: &[ResultRecord]) -> String {
    let mut out = format!("{} ({} trials per point)\n", plan.name, plan.sweeps.first().map_or(0, |s| s.trials));
    out += &format!(
        "{:<22} {:>4} {:>4} {:>6} {:>9} {:>11} {:>5}\n",
        "solver", "N", "k", "sigma", "prob_set", "prob_signed", "deg"
    );
    for r in records {
        out += &format!(
            "{:<22} {:>4} {:>4} {:>6} {:>9.3} {:>11.3} {:>5}\n",
            r.solver.to_string(),
            r.n,
            r.k,
            fmt_g17(r.sigma),
            r.prob_set(),
            r.prob_signed(),
            r.degenerate
        );
    }
    out
}

pub fn theory_plan(a: &TheoryArgs) -> Result<TheoryPlan, CliError> {
    let (mut config, name) =
        load_config(a.config.as_ref(), a.preset.as_deref(), PresetKind::Theory, THEORY_KEYS)?;
    if let Some(d) = a.d {
        config.set("D", &d.to_string(), THEORY_KEYS)?;
    }
    if let Some(n) = &a.n {
        config.set("N", n, THEORY_KEYS)?;
    }
    if let Some(trials) = a.trials {
        config.set("trials", &trials.to_string(), THEORY_KEYS)?;
    }
    if let Some(seed) = a.seed {
        config.set("seed", &seed.to_string(), THEORY_KEYS)?;
    }
    if let Some(lambdas) = &a.lambdas {
        config.set("lambdas", lambdas, THEORY_KEYS)?;
    }
    TheoryPlan::from_config(&config, &name)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryRow {
    pub n: usize,
    pub predicted: f64,
    pub empirical: Estimate,
}

impl TheoryRow {
    pub fn rel_deviation(&self) -> f64 {
        (self.empirical.mean - self.predicted).abs() / self.predicted
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpRow {
    pub lambda: f64,
    pub closed_form: f64,
    pub quadrature: f64,
    pub mass: f64,
}

pub fn theory_rows(plan: &TheoryPlan) -> Result<Vec<TheoryRow>, CliError> {
    plan.n_values
        .iter()
        .map(|&n| {
            Ok(TheoryRow {
                n,
                predicted: predicted_error_norm(n, plan.d)?,
                empirical: empirical_error_norm(n, plan.d, plan.trials, plan.seed)?,
            })
        })
        .collect()
}

pub fn mp_rows(lambdas: &[f64]) -> Result<Vec<MpRow>, CliError> {
    lambdas
        .iter()
        .map(|&lambda| {
            let p = MpParams::new(lambda)?;
            Ok(MpRow {
                lambda,
                closed_form: mp_inverse_moment(&p),
                quadrature: mp_inverse_moment_quadrature(&p),
                mass: mp_mass_quadrature(&p),
            })
        })
        .collect()
}

pub fn cmd_theory(a: &TheoryArgs) -> Result<(), CliError> {
    let plan = theory_plan(a)?;
    let rows = theory_rows(&plan)?;
    let mp = mp_rows(&plan.lambdas)?;

    println!("{} D={} trials={} seed={}", plan.name, plan.d, plan.trials, plan.seed);
    println!("{:>5} {:>12} {:>12} {:>12} {:>10}", "N", "predicted", "empirical", "std_error", "rel_dev");
    for r in &rows {
        println!(
            "{:>5} {:>12.6} {:>12.6} {:>12.6} {:>10.4}",
            r.n,
            r.predicted,
            r.empirical.mean,
            r.empirical.std_error,
            r.rel_deviation()
        );
    }
    println!();
    println!("{:>7} {:>14} {:>14} {:>10} {:>14}", "lambda", "closed_form", "quadrature", "abs_error", "mass");
    for r in &mp {
        println!(
            "{:>7} {:>14.10} {:>14.10} {:>10.2e} {:>14.10}",
            r.lambda,
            r.closed_form,
            r.quadrature,
            (r.quadrature - r.closed_form).abs(),
            r.mass
        );
    }

    if let Some(path) = &a.out {
        let mut w = create(path)?;
        writeln!(w, "D,N,predicted,empirical_mean,std_error,rel_deviation")?;
        for r in &rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                plan.d,
                r.n,
                fmt_g17(r.predicted),
                fmt_g17(r.empirical.mean),
                fmt_g17(r.empirical.std_error),
                fmt_g17(r.rel_deviation())
            )?;
        }
        w.flush()?;
    }
    if let Some(path) = &a.mp_out {
        let mut w = create(path)?;
        writeln!(w, "lambda,closed_form,quadrature,abs_error,mass")?;
        for r in &mp {
            writeln!(
                w,
                "{},{},{},{},{}",
                fmt_g17(r.lambda),
                fmt_g17(r.closed_form),
                fmt_g17(r.quadrature),
                fmt_g17((r.quadrature - r.closed_form).abs()),
                fmt_g17(r.mass)
            )?;
        }
        w.flush()?;
    }
    Ok(())
}
