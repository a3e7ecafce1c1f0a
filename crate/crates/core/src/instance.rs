//! Problem instances `y = X θ* + σ g`.
//!
//! Three design ensembles are supported: i.i.d. standard Gaussian, Gaussian
//! rows with Toeplitz covariance `Σ_ij = ρ^|i−j|`, and fair ±1 Bernoulli.
//! The ground truth is ternary with exactly `k` unit-magnitude entries on a
//! uniformly random support and independent uniform signs.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::format::{fmt_g17, join_g17};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ensemble {
    GaussianIid,
    Toeplitz { rho: f64 },
    Bernoulli,
}

impl Ensemble {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Ensemble::Toeplitz { rho } if !(rho > 0.0 && rho < 1.0) => {
                Err(invalid(format!("toeplitz rho must lie in (0, 1), got {rho}")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Ensemble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ensemble::GaussianIid => f.write_str("gaussian"),
            Ensemble::Toeplitz { rho } => write!(f, "toeplitz(rho={rho})"),
            Ensemble::Bernoulli => f.write_str("bernoulli"),
        }
    }
}

impl FromStr for Ensemble {
    type Err = Error;

    /// Accepts `gaussian`, `bernoulli`, `toeplitz` (ρ = 0.3) and
    /// `toeplitz(rho=<value>)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let ensemble = match s {
            "gaussian" => Ensemble::GaussianIid,
            "bernoulli" => Ensemble::Bernoulli,
            "toeplitz" => Ensemble::Toeplitz { rho: 0.3 },
            _ => {
                let rho = s
                    .strip_prefix("toeplitz(rho=")
                    .and_then(|rest| rest.strip_suffix(')'))
                    .ok_or_else(|| invalid(format!("unknown ensemble '{s}'")))?;
                let rho = rho
                    .parse::<f64>()
                    .map_err(|_| invalid(format!("bad toeplitz rho '{rho}'")))?;
                Ensemble::Toeplitz { rho }
            }
        };
        ensemble.validate()?;
        Ok(ensemble)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    entries: DMatrix<f64>,
    ensemble: Ensemble,
}

impl DesignMatrix {
    pub fn from_entries(entries: DMatrix<f64>, ensemble: Ensemble) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(invalid("design matrix must have at least one row and column"));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(invalid("design matrix has non-finite entries"));
        }
        if ensemble == Ensemble::Bernoulli && entries.iter().any(|&v| v != 1.0 && v != -1.0) {
            return Err(invalid("bernoulli design entries must be ±1"));
        }
        Ok(Self { entries, ensemble })
    }

    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn ensemble(&self) -> Ensemble {
        self.ensemble
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }
}

fn check_dims(n: usize, d: usize) -> Result<()> {
    if n == 0 || d == 0 {
        return Err(invalid(format!("dimensions must be positive, got {n}x{d}")));
    }
    Ok(())
}

/// Fills an `n × d` matrix in row-major draw order.
fn fill_rows(n: usize, d: usize, mut draw: impl FnMut() -> f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            m[(i, j)] = draw();
        }
    }
    m
}

pub fn gen_gaussian_design<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Result<DesignMatrix> {
    check_dims(n, d)?;
    let entries = fill_rows(n, d, || rng.sample(StandardNormal));
    Ok(DesignMatrix { entries, ensemble: Ensemble::GaussianIid })
}

/// Covariance `Σ_ij = ρ^|i−j|`.
pub fn toeplitz_covariance(d: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |i, j| rho.powi(i.abs_diff(j) as i32))
}

/// Rows are `L z` with `Σ = L Lᵀ` and `z ~ N(0, I_d)`.
pub fn gen_toeplitz_design<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    rho: f64,
    rng: &mut R,
) -> Result<DesignMatrix> {
    check_dims(n, d)?;
    let ensemble = Ensemble::Toeplitz { rho };
    ensemble.validate()?;
    let chol = toeplitz_covariance(d, rho)
        .cholesky()
        .ok_or_else(|| invalid("toeplitz covariance is not positive definite"))?;
    let z = fill_rows(n, d, || rng.sample(StandardNormal));
    // Row i of X is (L z_i)ᵀ = z_iᵀ Lᵀ.
    let entries = z * chol.l().transpose();
    Ok(DesignMatrix { entries, ensemble })
}

pub fn gen_bernoulli_design<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Result<DesignMatrix> {
    check_dims(n, d)?;
    let entries = fill_rows(n, d, || if rng.random::<bool>() { 1.0 } else { -1.0 });
    Ok(DesignMatrix { entries, ensemble: Ensemble::Bernoulli })
}

pub fn gen_design<R: Rng + ?Sized>(
    ensemble: Ensemble,
    n: usize,
    d: usize,
    rng: &mut R,
) -> Result<DesignMatrix> {
    match ensemble {
        Ensemble::GaussianIid => gen_gaussian_design(n, d, rng),
        Ensemble::Toeplitz { rho } => gen_toeplitz_design(n, d, rho, rng),
        Ensemble::Bernoulli => gen_bernoulli_design(n, d, rng),
    }
}

/// A ternary vector together with its sorted support.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signal {
    values: Vec<i8>,
    support: Vec<usize>,
}

impl Signal {
    pub fn from_values(values: Vec<i8>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(-1..=1).contains(*v)) {
            return Err(invalid(format!("signal entries must be in {{-1, 0, 1}}, got {v}")));
        }
        let support = values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(|(i, _)| i)
            .collect();
        Ok(Self { values, support })
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_iterator(self.values.len(), self.values.iter().map(|&v| f64::from(v)))
    }
}

pub fn gen_signal<R: Rng + ?Sized>(d: usize, k: usize, rng: &mut R) -> Result<Signal> {
    if k > d {
        return Err(invalid(format!("sparsity k={k} exceeds dimension d={d}")));
    }
    let mut support = index::sample(rng, d, k).into_vec();
    support.sort_unstable();
    let mut values = vec![0i8; d];
    for &i in &support {
        values[i] = if rng.random::<bool>() { 1 } else { -1 };
    }
    Ok(Signal { values, support })
}

/// Returns `X θ + σ g` with `g ~ N(0, I_N)`.
pub fn gen_observation<R: Rng + ?Sized>(
    x: &DesignMatrix,
    theta: &Signal,
    sigma: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if theta.len() != x.cols() {
        return Err(invalid(format!(
            "signal length {} does not match {} design columns",
            theta.len(),
            x.cols()
        )));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(invalid(format!("sigma must be a finite nonnegative number, got {sigma}")));
    }
    let mut y = x.entries() * theta.to_dvector();
    if sigma > 0.0 {
        for v in y.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *v += sigma * g;
        }
    }
    Ok(y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub x: DesignMatrix,
    pub theta_star: Signal,
    pub y: DVector<f64>,
    pub sigma: f64,
    pub seed: u64,
}

impl ProblemInstance {
    /// Draws design, signal and noise in that order from one stream seeded
    /// with `seed`.
    pub fn generate(
        ensemble: Ensemble,
        n: usize,
        d: usize,
        k: usize,
        sigma: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = rng::stream(seed);
        let x = gen_design(ensemble, n, d, &mut rng)?;
        let theta_star = gen_signal(d, k, &mut rng)?;
        let y = gen_observation(&x, &theta_star, sigma, &mut rng)?;
        Ok(Self { x, theta_star, y, sigma, seed })
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    pub fn k(&self) -> usize {
        self.theta_star.sparsity()
    }

    /// Writes the plain-text instance format: `# key = value` metadata,
    /// the `N` rows of `X`, a blank line, `y`, a blank line, `θ*`.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# ensemble = {}", self.x.ensemble())?;
        writeln!(w, "# N = {}", self.n())?;
        writeln!(w, "# D = {}", self.d())?;
        writeln!(w, "# k = {}", self.k())?;
        writeln!(w, "# sigma = {}", fmt_g17(self.sigma))?;
        writeln!(w, "# seed = {}", self.seed)?;
        for row in self.x.entries().row_iter() {
            writeln!(w, "{}", join_g17(row.iter()))?;
        }
        writeln!(w)?;
        writeln!(w, "{}", join_g17(self.y.iter()))?;
        writeln!(w)?;
        let theta: Vec<String> = self.theta_star.values().iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", theta.join(","))?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut meta = Metadata::default();
        let mut blocks: Vec<Vec<(usize, String)>> = vec![Vec::new()];
        for (i, line) in r.lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            let trimmed = line.trim();
            if let Some(rest) = trimmed.strip_prefix('#') {
                meta.apply(rest, line_no)?;
            } else if trimmed.is_empty() {
                if !blocks.last().is_some_and(Vec::is_empty) {
                    blocks.push(Vec::new());
                }
            } else {
                blocks.last_mut().expect("nonempty").push((line_no, trimmed.to_string()));
            }
        }
        blocks.retain(|b| !b.is_empty());
        let (ensemble, n, d, k, sigma, seed) = meta.finish()?;
        let [rows, y_block, theta_block]: [Vec<(usize, String)>; 3] =
            blocks.try_into().map_err(|b: Vec<_>| Error::Parse {
                line: 0,
                msg: format!("expected 3 data blocks (X, y, theta), found {}", b.len()),
            })?;
        if rows.len() != n {
            return Err(Error::Parse {
                line: rows.first().map_or(0, |r| r.0),
                msg: format!("expected {n} matrix rows, found {}", rows.len()),
            });
        }
        let mut entries = DMatrix::zeros(n, d);
        for (i, (line, text)) in rows.iter().enumerate() {
            let row = parse_floats(text, *line, d)?;
            for (j, v) in row.into_iter().enumerate() {
                entries[(i, j)] = v;
            }
        }
        let (y_line, y_text) = single_line(&y_block, "y")?;
        let y = DVector::from_vec(parse_floats(y_text, y_line, n)?);
        let (t_line, t_text) = single_line(&theta_block, "theta")?;
        let values = parse_list::<i8>(t_text, t_line, d)?;
        let theta_star = Signal::from_values(values).map_err(|e| Error::Parse {
            line: t_line,
            msg: e.to_string(),
        })?;
        if theta_star.sparsity() != k {
            return Err(Error::Parse {
                line: t_line,
                msg: format!("metadata says k={k} but theta has {} nonzeros", theta_star.sparsity()),
            });
        }
        let x = DesignMatrix::from_entries(entries, ensemble).map_err(|e| Error::Parse {
            line: 0,
            msg: e.to_string(),
        })?;
        Ok(Self { x, theta_star, y, sigma, seed })
    }
}

#[derive(Default)]
struct Metadata {
    ensemble: Option<Ensemble>,
    n: Option<usize>,
    d: Option<usize>,
    k: Option<usize>,
    sigma: Option<f64>,
    seed: Option<u64>,
}

impl Metadata {
    fn apply(&mut self, text: &str, line: usize) -> Result<()> {
        let Some((key, value)) = text.split_once('=') else {
            // Free-form comment.
            return Ok(());
        };
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| Error::Parse { line, msg: format!("bad {what} value '{value}'") };
        match key {
            "ensemble" => {
                self.ensemble = Some(value.parse().map_err(|_| bad("ensemble"))?);
            }
            "N" => self.n = Some(value.parse().map_err(|_| bad("N"))?),
            "D" => self.d = Some(value.parse().map_err(|_| bad("D"))?),
            "k" => self.k = Some(value.parse().map_err(|_| bad("k"))?),
            "sigma" => self.sigma = Some(value.parse().map_err(|_| bad("sigma"))?),
            "seed" => self.seed = Some(value.parse().map_err(|_| bad("seed"))?),
            other => {
                return Err(Error::Parse { line, msg: format!("unknown metadata key '{other}'") })
            }
        }
        Ok(())
    }

    fn finish(self) -> Result<(Ensemble, usize, usize, usize, f64, u64)> {
        let missing = |key: &str| Error::Parse { line: 0, msg: format!("missing metadata key '{key}'") };
        Ok((
            self.ensemble.ok_or_else(|| missing("ensemble"))?,
            self.n.ok_or_else(|| missing("N"))?,
            self.d.ok_or_else(|| missing("D"))?,
            self.k.ok_or_else(|| missing("k"))?,
            self.sigma.ok_or_else(|| missing("sigma"))?,
            self.seed.ok_or_else(|| missing("seed"))?,
        ))
    }
}

fn single_line<'a>(block: &'a [(usize, String)], what: &str) -> Result<(usize, &'a str)> {
    match block {
        [(line, text)] => Ok((*line, text.as_str())),
        _ => Err(Error::Parse {
            line: block.first().map_or(0, |b| b.0),
            msg: format!("{what} block must be a single line"),
        }),
    }
}

fn parse_list<T: FromStr>(text: &str, line: usize, expected: usize) -> Result<Vec<T>> {
    let values = text
        .split(',')
        .map(|tok| {
            tok.trim().parse::<T>().map_err(|_| Error::Parse {
                line,
                msg: format!("cannot parse '{}'", tok.trim()),
            })
        })
        .collect::<Result<Vec<T>>>()?;
    if values.len() != expected {
        return Err(Error::Parse {
            line,
            msg: format!("expected {expected} values, found {}", values.len()),
        });
    }
    Ok(values)
}

fn parse_floats(text: &str, line: usize, expected: usize) -> Result<Vec<f64>> {
    parse_list::<f64>(text, line, expected)
}
