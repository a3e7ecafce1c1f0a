//! Monte-Carlo exact-recovery harness.
//!
//! A sweep is the Cartesian product `n_values × k_values × solvers`. Each
//! point runs `trials` independent instances and counts how often the
//! estimated support equals the true one (`set` match), and how often the
//! signs agree as well (`signed` match).
//!
//! Seeds are derived, never drawn sequentially. The instance of trial `t`
//! depends on `(base_seed, ensemble, D, N, k, σ, t)` only, so every solver at
//! a given grid coordinate sees the same instances. The solver stream also
//! mixes in the solver tag.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::format::fmt_g17;
use crate::instance::{gen_design, gen_observation, gen_signal, Ensemble, ProblemInstance, Signal};
use crate::rng::{self, derive_seed, tag_hash};
use crate::solvers::{omp, rawls, rls, rls_fixed_size, RlsParams, Sign, SignedSupport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolverKind {
    Rls,
    RlsFixed { n0: usize, m: usize },
    Rawls,
    Omp,
    /// Exhaustive search; only for small `C(D, k) · 2^k`.
    Oracle,
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverKind::Rls => f.write_str("rls"),
            SolverKind::RlsFixed { n0, m } => write!(f, "rls_fixed[n0={n0},m={m}]"),
            SolverKind::Rawls => f.write_str("rawls"),
            SolverKind::Omp => f.write_str("omp"),
            SolverKind::Oracle => f.write_str("oracle"),
        }
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "rls" => return Ok(SolverKind::Rls),
            "rawls" => return Ok(SolverKind::Rawls),
            "omp" => return Ok(SolverKind::Omp),
            "oracle" => return Ok(SolverKind::Oracle),
            _ => {}
        }
        let body = s
            .strip_prefix("rls_fixed[")
            .and_then(|r| r.strip_suffix(']'))
            .ok_or_else(|| invalid(format!("unknown solver '{s}'")))?;
        let (mut n0, mut m) = (None, None);
        for part in body.split(',') {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| invalid(format!("bad rls_fixed parameter '{part}'")))?;
            let value: usize = value
                .trim()
                .parse()
                .map_err(|_| invalid(format!("bad rls_fixed value '{value}'")))?;
            match key.trim() {
                "n0" => n0 = Some(value),
                "m" => m = Some(value),
                other => return Err(invalid(format!("unknown rls_fixed parameter '{other}'"))),
            }
        }
        match (n0, m) {
            (Some(n0), Some(m)) => Ok(SolverKind::RlsFixed { n0, m }),
            _ => Err(invalid(format!("rls_fixed needs both n0 and m: '{s}'"))),
        }
    }
}

/// Largest `C(D, k) · 2^k` the oracle will enumerate.
pub const ORACLE_MAX_PATTERNS: f64 = 1e6;

fn oracle_patterns(d: usize, k: usize) -> f64 {
    let binom = (0..k).fold(1.0f64, |acc, i| acc * (d - i) as f64 / (i + 1) as f64);
    binom.round() * 2f64.powi(k as i32)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub ensemble: Ensemble,
    pub d: usize,
    pub n_values: Vec<usize>,
    pub k_values: Vec<usize>,
    pub sigma: f64,
    pub solvers: Vec<SolverKind>,
    pub trials: usize,
    pub base_seed: u64,
    /// Parameters for [`SolverKind::Rls`]; the seed field is replaced per trial.
    pub rls_params: RlsParams,
    /// Subsets per step for [`SolverKind::Rawls`].
    pub rawls_m: usize,
    /// Draw one design per `(D, N)` and reuse it across trials.
    pub fixed_design: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            ensemble: Ensemble::GaussianIid,
            d: 64,
            n_values: (25..=64).step_by(5).collect(),
            k_values: vec![30],
            sigma: 0.5,
            solvers: vec![SolverKind::Rls, SolverKind::Rawls, SolverKind::Omp],
            trials: 200,
            base_seed: 0,
            rls_params: RlsParams::default(),
            rawls_m: 100,
            fixed_design: false,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.ensemble.validate()?;
        if self.d == 0 {
            return Err(invalid("D must be positive"));
        }
        if let Some(n) = self.n_values.iter().find(|&&n| n == 0) {
            return Err(invalid(format!("N values must be positive, got {n}")));
        }
        if let Some(k) = self.k_values.iter().find(|&&k| k == 0 || k > self.d) {
            return Err(invalid(format!("k={k} must lie in [1, {}]", self.d)));
        }
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(invalid(format!("sigma must be finite and nonnegative, got {}", self.sigma)));
        }
        self.rls_params.validate()?;
        if self.rawls_m == 0 {
            return Err(invalid("rawls m must be at least 1"));
        }
        for solver in &self.solvers {
            match *solver {
                SolverKind::RlsFixed { n0, m } => {
                    if m == 0 {
                        return Err(invalid(format!("{solver}: m must be at least 1")));
                    }
                    if let Some(n) = self.n_values.iter().find(|&&n| n0 == 0 || n0 > n) {
                        return Err(invalid(format!("{solver}: n0 must lie in [1, N] for N={n}")));
                    }
                }
                SolverKind::Oracle => {
                    if let Some(k) = self.k_values.iter().find(|&&k| oracle_patterns(self.d, k) > ORACLE_MAX_PATTERNS) {
                        return Err(invalid(format!("oracle search space too large at D={}, k={k}", self.d)));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Grid points in lexicographic `(N, k, solver)` order.
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut points = Vec::new();
        for &n in &self.n_values {
            for &k in &self.k_values {
                for &solver in &self.solvers {
                    points.push(SweepPoint {
                        ensemble: self.ensemble,
                        d: self.d,
                        n,
                        k,
                        sigma: self.sigma,
                        solver,
                        trials: self.trials,
                        base_seed: self.base_seed,
                        rls_params: self.rls_params.clone(),
                        rawls_m: self.rawls_m,
                        fixed_design: self.fixed_design,
                    });
                }
            }
        }
        points
    }
}

/// One grid coordinate with everything needed to run its trials.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub ensemble: Ensemble,
    pub d: usize,
    pub n: usize,
    pub k: usize,
    pub sigma: f64,
    pub solver: SolverKind,
    pub trials: usize,
    pub base_seed: u64,
    pub rls_params: RlsParams,
    pub rawls_m: usize,
    pub fixed_design: bool,
}

const INSTANCE_STREAM: u64 = 1;
const SOLVER_STREAM: u64 = 2;
const DESIGN_STREAM: u64 = 3;

impl SweepPoint {
    fn coordinates(&self) -> [u64; 5] {
        [
            tag_hash(&self.ensemble.to_string()),
            self.d as u64,
            self.n as u64,
            self.k as u64,
            self.sigma.to_bits(),
        ]
    }

    pub fn instance_seed(&self, trial: usize) -> u64 {
        let c = self.coordinates();
        derive_seed(self.base_seed, &[INSTANCE_STREAM, c[0], c[1], c[2], c[3], c[4], trial as u64])
    }

    pub fn solver_seed(&self, trial: usize) -> u64 {
        let c = self.coordinates();
        let tag = tag_hash(&self.solver.to_string());
        derive_seed(self.base_seed, &[SOLVER_STREAM, c[0], c[1], c[2], c[3], c[4], trial as u64, tag])
    }

    fn design_seed(&self) -> u64 {
        let c = self.coordinates();
        derive_seed(self.base_seed, &[DESIGN_STREAM, c[0], c[1], c[2]])
    }

    /// The instance of trial `trial`.
    pub fn instance(&self, trial: usize) -> Result<ProblemInstance> {
        let seed = self.instance_seed(trial);
        if !self.fixed_design {
            return ProblemInstance::generate(self.ensemble, self.n, self.d, self.k, self.sigma, seed);
        }
        let x = gen_design(self.ensemble, self.n, self.d, &mut rng::stream(self.design_seed()))?;
        let mut stream = rng::stream(seed);
        let theta_star = gen_signal(self.d, self.k, &mut stream)?;
        let y = gen_observation(&x, &theta_star, self.sigma, &mut stream)?;
        Ok(ProblemInstance { x, theta_star, y, sigma: self.sigma, seed })
    }
}

/// Runs `solver` on `(x, y)`; `seed` feeds the randomized solvers.
pub fn run_solver(
    solver: SolverKind,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    k: usize,
    rls_params: &RlsParams,
    rawls_m: usize,
    seed: u64,
) -> Result<SignedSupport> {
    match solver {
        SolverKind::Rls => rls(x, y, k, &RlsParams { seed, ..rls_params.clone() }),
        SolverKind::RlsFixed { n0, m } => rls_fixed_size(x, y, k, n0, m, seed),
        SolverKind::Rawls => rawls(x, y, k, rawls_m, seed),
        SolverKind::Omp => omp(x, y, k),
        SolverKind::Oracle => brute_force_oracle(x, y, k),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecoveryMatch {
    pub set_match: bool,
    pub signed_match: bool,
}

/// Compares supports as sets; a length mismatch is simply a failure.
pub fn exact_recovery(theta_star: &Signal, estimate: &SignedSupport) -> RecoveryMatch {
    let mut est: Vec<usize> = estimate.indices().collect();
    est.sort_unstable();
    let set_match = est == theta_star.support();
    let signed_match = set_match
        && estimate
            .entries()
            .iter()
            .all(|&(i, s)| theta_star.values()[i] == s.as_i8());
    RecoveryMatch { set_match, signed_match }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialOutcome {
    pub matched: RecoveryMatch,
    /// The solver hit a degenerate step; the trial counts as a failure.
    pub degenerate: bool,
}

pub fn run_trial(point: &SweepPoint, trial: usize) -> Result<TrialOutcome> {
    let inst = point.instance(trial)?;
    let result = run_solver(
        point.solver,
        inst.x.entries(),
        &inst.y,
        point.k,
        &point.rls_params,
        point.rawls_m,
        point.solver_seed(trial),
    );
    match result {
        Ok(est) => Ok(TrialOutcome { matched: exact_recovery(&inst.theta_star, &est), degenerate: false }),
        Err(Error::DegenerateStep) => Ok(TrialOutcome {
            matched: RecoveryMatch { set_match: false, signed_match: false },
            degenerate: true,
        }),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub ensemble: Ensemble,
    pub d: usize,
    pub n: usize,
    pub k: usize,
    pub sigma: f64,
    pub solver: SolverKind,
    pub trials: usize,
    pub successes_set: usize,
    pub successes_signed: usize,
    /// Trials lost to degenerate solver steps (already counted as failures).
    pub degenerate: usize,
    pub wall_seconds: f64,
}

impl ResultRecord {
    pub fn prob_set(&self) -> f64 {
        self.successes_set as f64 / self.trials as f64
    }

    pub fn prob_signed(&self) -> f64 {
        self.successes_signed as f64 / self.trials as f64
    }
}

/// Per-trial outcomes of a point, in trial order.
pub fn point_outcomes(point: &SweepPoint) -> Result<Vec<TrialOutcome>> {
    (0..point.trials)
        .into_par_iter()
        .map(|t| run_trial(point, t))
        .collect()
}

pub fn run_point(point: &SweepPoint) -> Result<ResultRecord> {
    let start = Instant::now();
    let outcomes = point_outcomes(point)?;
    let count = |f: fn(&TrialOutcome) -> bool| outcomes.iter().filter(|o| f(o)).count();
    Ok(ResultRecord {
        ensemble: point.ensemble,
        d: point.d,
        n: point.n,
        k: point.k,
        sigma: point.sigma,
        solver: point.solver,
        trials: point.trials,
        successes_set: count(|o| o.matched.set_match),
        successes_signed: count(|o| o.matched.signed_match),
        degenerate: count(|o| o.degenerate),
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs every grid point. The configuration is validated before any work
/// starts, and records come back in [`SweepConfig::points`] order.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<ResultRecord>> {
    config.validate()?;
    config.points().par_iter().map(run_point).collect()
}

/// Exhaustive decoder: the `θ ∈ {−1, 0, 1}^D` with exactly `k` nonzeros that
/// minimizes `‖Xθ − y‖`, ties going to the lexicographically smallest `θ`.
pub fn brute_force_oracle(x: &DMatrix<f64>, y: &DVector<f64>, k: usize) -> Result<SignedSupport> {
    let (n, d) = x.shape();
    if y.len() != n {
        return Err(invalid(format!("observation has length {} but design has {n} rows", y.len())));
    }
    if k == 0 || k > d {
        return Err(invalid(format!("sparsity k={k} must lie in [1, {d}]")));
    }
    if oracle_patterns(d, k) > ORACLE_MAX_PATTERNS {
        return Err(invalid(format!("oracle search space C({d},{k})·2^{k} exceeds {ORACLE_MAX_PATTERNS}")));
    }
    let mut best: Option<(f64, Vec<i8>)> = None;
    let mut combo: Vec<usize> = (0..k).collect();
    let mut residual = DVector::zeros(n);
    loop {
        for pattern in 0u64..(1 << k) {
            residual.copy_from(y);
            let mut theta = vec![0i8; d];
            for (bit, &j) in combo.iter().enumerate() {
                let s: i8 = if pattern >> bit & 1 == 1 { 1 } else { -1 };
                theta[j] = s;
                residual.axpy(-f64::from(s), &x.column(j), 1.0);
            }
            let r2 = residual.norm_squared();
            let better = match &best {
                None => true,
                Some((b, t)) => r2 < *b || (r2 == *b && theta < *t),
            };
            if better {
                best = Some((r2, theta));
            }
        }
        // Next k-combination in lexicographic order.
        let Some(pos) = (0..k).rev().find(|&i| combo[i] != i + d - k) else {
            break;
        };
        combo[pos] += 1;
        for i in pos + 1..k {
            combo[i] = combo[i - 1] + 1;
        }
    }
    let (_, theta) = best.expect("at least one pattern");
    let entries = theta
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0)
        .map(|(i, &v)| (i, if v > 0 { Sign::Plus } else { Sign::Minus }))
        .collect();
    SignedSupport::new(entries)
}

pub const CSV_HEADER: &str =
    "ensemble,D,N,k,sigma,solver,trials,successes_set,successes_signed,prob_set,prob_signed,wall_seconds";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Writes the results CSV. Without `timing` the `wall_seconds` column is
/// written as `0` so that reruns are byte-identical.
pub fn write_csv<W: Write>(records: &[ResultRecord], mut w: W, timing: bool) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            csv_field(&r.ensemble.to_string()),
            r.d,
            r.n,
            r.k,
            fmt_g17(r.sigma),
            csv_field(&r.solver.to_string()),
            r.trials,
            r.successes_set,
            r.successes_signed,
            fmt_g17(r.prob_set()),
            fmt_g17(r.prob_signed()),
            fmt_g17(if timing { r.wall_seconds } else { 0.0 }),
        )?;
    }
    w.flush()?;
    Ok(())
}
