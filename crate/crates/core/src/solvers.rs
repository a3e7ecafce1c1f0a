//! Support-recovery solvers.
//!
//! All peeling solvers share one loop: nominate a signed coordinate on the
//! active system, record it, drop its column and subtract `sign · column`
//! from the observation. They differ in how the nomination is made:
//!
//! | solver            | nomination per step                                  | last coefficient |
//! |-------------------|------------------------------------------------------|------------------|
//! | [`rls`]           | majority vote over several subset sizes              | OMP flip         |
//! | [`rls_fixed_size`]| one averaged estimate at a fixed subset size         | OMP flip         |
//! | [`rawls`]         | one averaged estimate at `⌊0.6 · min(D_k, N)⌋`       | averaged estimate|
//!
//! [`omp`] is classical orthogonal matching pursuit and does not peel.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::linalg::{min_norm_least_squares, RowSubsetAverager, DEFAULT_SV_TOL_FACTOR};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sign {
    Minus,
    Plus,
}

impl Sign {
    /// Sign of `v`, with zero mapped to `Plus`.
    pub fn of(v: f64) -> Self {
        if v < 0.0 {
            Sign::Minus
        } else {
            Sign::Plus
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Sign::Minus => -1.0,
            Sign::Plus => 1.0,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Sign::Minus => -1,
            Sign::Plus => 1,
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Minus => "-",
            Sign::Plus => "+",
        })
    }
}

/// Signed column indices in selection order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedSupport {
    entries: Vec<(usize, Sign)>,
}

impl SignedSupport {
    pub fn new(entries: Vec<(usize, Sign)>) -> Result<Self> {
        let mut seen: Vec<usize> = entries.iter().map(|e| e.0).collect();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("signed support has repeated indices"));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(usize, Sign)] {
        &self.entries
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Dense ternary vector of length `d`.
    pub fn to_ternary(&self, d: usize) -> Vec<i8> {
        let mut v = vec![0; d];
        for &(i, s) in &self.entries {
            v[i] = s.as_i8();
        }
        v
    }
}

impl fmt::Display for SignedSupport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.entries.iter().map(|(i, s)| format!("{s}{i}")).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

/// How RLS combines its subset sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VoteMode {
    /// Vote inside each peeling step, then remove the winning column.
    #[default]
    PerStep,
    /// Run one complete peel per subset size and vote over the returned
    /// index sets.
    FullPeel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RlsParams {
    /// Random subsets averaged per estimate.
    pub m: usize,
    pub frac_lo: f64,
    pub frac_hi: f64,
    /// Subset sizes (and therefore votes) per step.
    pub votes: usize,
    pub seed: u64,
    pub vote_mode: VoteMode,
}

impl Default for RlsParams {
    fn default() -> Self {
        Self { m: 100, frac_lo: 0.85, frac_hi: 0.9, votes: 5, seed: 0, vote_mode: VoteMode::PerStep }
    }
}

impl RlsParams {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(invalid("m must be at least 1"));
        }
        if self.votes == 0 {
            return Err(invalid("votes must be at least 1"));
        }
        if !(self.frac_lo > 0.0 && self.frac_lo <= self.frac_hi && self.frac_hi <= 1.0) {
            return Err(invalid(format!(
                "need 0 < frac_lo <= frac_hi <= 1, got [{}, {}]",
                self.frac_lo, self.frac_hi
            )));
        }
        Ok(())
    }
}

/// A nominated coordinate of the active system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub index: usize,
    pub sign: Sign,
    pub score: f64,
}

/// First index of the largest `|v_j|`.
fn argmax_abs(v: &DVector<f64>) -> Option<(usize, f64)> {
    v.iter().enumerate().fold(None, |best, (j, &x)| match best {
        Some((_, b)) if x.abs() <= b => best,
        _ => Some((j, x.abs())),
    })
}

fn draw_subset<R: Rng + ?Sized>(rng: &mut R, n: usize, n0: usize) -> Vec<usize> {
    let mut rows = index::sample(rng, n, n0).into_vec();
    rows.sort_unstable();
    rows
}

/// Averages `m` subset solutions into `avg` (which is reset first) and
/// nominates the coordinate with the largest averaged magnitude.
fn averaged_candidate<R: Rng + ?Sized>(
    avg: &mut RowSubsetAverager<'_>,
    n: usize,
    n0: usize,
    m: usize,
    rng: &mut R,
) -> Result<Candidate> {
    avg.reset();
    for _ in 0..m {
        let rows = draw_subset(rng, n, n0);
        avg.add_subset(&rows)?;
    }
    let theta_bar = avg.average();
    match argmax_abs(&theta_bar) {
        Some((index, score)) if score > 0.0 => {
            Ok(Candidate { index, sign: Sign::of(theta_bar[index]), score })
        }
        _ => Err(Error::DegenerateStep),
    }
}

fn check_subset_size(n: usize, n0: usize) -> Result<()> {
    if n0 == 0 || n0 > n {
        return Err(invalid(format!("subset size n0={n0} must lie in [1, {n}]")));
    }
    Ok(())
}

/// One averaged estimate: draws `m` random `n0`-row subsets, averages their
/// minimum-norm least-squares solutions into `θ̄`, and nominates
/// `argmax_j |θ̄_j|` with the sign of `θ̄` there.
pub fn peel_step<R: Rng + ?Sized>(
    x_active: &DMatrix<f64>,
    y_cur: &DVector<f64>,
    n0: usize,
    m: usize,
    rng: &mut R,
) -> Result<Candidate> {
    let (n, d_k) = x_active.shape();
    check_subset_size(n, n0)?;
    if d_k == 0 {
        return Err(invalid("active system has no columns"));
    }
    if m == 0 {
        return Err(invalid("m must be at least 1"));
    }
    let mut avg = RowSubsetAverager::new(x_active, y_cur, DEFAULT_SV_TOL_FACTOR)?;
    averaged_candidate(&mut avg, n, n0, m, rng)
}

/// `votes` subset sizes evenly spaced over
/// `[frac_lo · min(d_k, n), frac_hi · min(d_k, n)]`, endpoints included,
/// rounded half away from zero and clamped to `[1, n]`. A single vote uses
/// the midpoint. Duplicates are kept.
pub fn subset_sizes(d_k: usize, n: usize, frac_lo: f64, frac_hi: f64, votes: usize) -> Vec<usize> {
    let base = d_k.min(n) as f64;
    let (lo, hi) = (frac_lo * base, frac_hi * base);
    let clamp = |v: f64| (v.round() as usize).clamp(1, n.max(1));
    match votes {
        0 => Vec::new(),
        1 => vec![clamp(0.5 * (lo + hi))],
        _ => (0..votes)
            .map(|i| clamp(lo + (hi - lo) * i as f64 / (votes - 1) as f64))
            .collect(),
    }
}

/// Most frequent candidate index.
///
/// Ties are broken uniformly at random among the most frequent indices;
/// randomness is consumed only when a tie exists. The sign is the majority
/// sign among candidates with the winning index, falling back to the sign
/// of the highest-scoring one.
pub fn majority_vote<R: Rng + ?Sized>(candidates: &[Candidate], rng: &mut R) -> Result<(usize, Sign)> {
    if candidates.is_empty() {
        return Err(invalid("majority vote needs at least one candidate"));
    }
    // Tally in order of first appearance.
    let mut tally: Vec<(usize, usize)> = Vec::new();
    for c in candidates {
        match tally.iter_mut().find(|(i, _)| *i == c.index) {
            Some(entry) => entry.1 += 1,
            None => tally.push((c.index, 1)),
        }
    }
    let best = tally.iter().map(|t| t.1).max().expect("nonempty tally");
    let tied: Vec<usize> = tally.iter().filter(|t| t.1 == best).map(|t| t.0).collect();
    let winner = if tied.len() == 1 { tied[0] } else { tied[rng.random_range(0..tied.len())] };

    let backing = candidates.iter().filter(|c| c.index == winner);
    let plus = backing.clone().filter(|c| c.sign == Sign::Plus).count();
    let minus = backing.clone().count() - plus;
    let sign = match plus.cmp(&minus) {
        std::cmp::Ordering::Greater => Sign::Plus,
        std::cmp::Ordering::Less => Sign::Minus,
        std::cmp::Ordering::Equal => {
            backing
                .fold(None::<&Candidate>, |top, c| match top {
                    Some(t) if t.score >= c.score => Some(t),
                    _ => Some(c),
                })
                .expect("winner has candidates")
                .sign
        }
    };
    Ok((winner, sign))
}

/// The OMP flip: the column with the largest `|⟨y, column⟩|`, lowest index
/// on exact ties.
pub fn omp_single_step(x_active: &DMatrix<f64>, y_cur: &DVector<f64>) -> Candidate {
    let corr = x_active.tr_mul(y_cur);
    let (index, score) = argmax_abs(&corr).unwrap_or((0, 0.0));
    let sign = if corr.is_empty() { Sign::Plus } else { Sign::of(corr[index]) };
    Candidate { index, sign, score }
}

fn check_problem(x: &DMatrix<f64>, y: &DVector<f64>, k: usize) -> Result<()> {
    let (n, d) = x.shape();
    if n == 0 || d == 0 {
        return Err(invalid("design matrix must be nonempty"));
    }
    if y.len() != n {
        return Err(invalid(format!("observation has length {} but design has {n} rows", y.len())));
    }
    if k == 0 || k > d {
        return Err(invalid(format!("sparsity k={k} must lie in [1, {d}]")));
    }
    Ok(())
}

/// The shrinking system of a peeling solver.
struct ActiveSystem {
    x: DMatrix<f64>,
    y: DVector<f64>,
    /// Original index of each active column.
    columns: Vec<usize>,
}

impl ActiveSystem {
    fn new(x: &DMatrix<f64>, y: &DVector<f64>) -> Self {
        Self { x: x.clone(), y: y.clone(), columns: (0..x.ncols()).collect() }
    }

    fn rows(&self) -> usize {
        self.x.nrows()
    }

    fn active(&self) -> usize {
        self.x.ncols()
    }

    /// Fixes active column `pos` at `sign`: `y ← y − sign · column`, then
    /// drops the column. Returns the original index.
    fn peel(&mut self, pos: usize, sign: Sign) -> (usize, Sign) {
        self.y.axpy(-sign.value(), &self.x.column(pos), 1.0);
        let x = std::mem::replace(&mut self.x, DMatrix::zeros(0, 0));
        self.x = x.remove_column(pos);
        (self.columns.remove(pos), sign)
    }

    fn omp_flip(&self) -> (usize, Sign) {
        let c = omp_single_step(&self.x, &self.y);
        (self.columns[c.index], c.sign)
    }
}

/// Shared peeling loop. `nominate` sees the active system and returns an
/// active-column position and sign. With `omp_flip`, the last coefficient
/// comes from [`omp_single_step`].
fn greedy_peel<R, F>(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    k: usize,
    omp_flip: bool,
    rng: &mut R,
    mut nominate: F,
) -> Result<Vec<(usize, Sign)>>
where
    R: Rng + ?Sized,
    F: FnMut(&ActiveSystem, &mut R) -> Result<(usize, Sign)>,
{
    let mut sys = ActiveSystem::new(x, y);
    let peels = if omp_flip { k - 1 } else { k };
    let mut out = Vec::with_capacity(k);
    for _ in 0..peels {
        let (pos, sign) = nominate(&sys, rng)?;
        out.push(sys.peel(pos, sign));
    }
    if omp_flip {
        out.push(sys.omp_flip());
    }
    Ok(out)
}

/// Refined least squares.
///
/// Each of the `k − 1` peeling steps computes [`subset_sizes`] for the
/// current number of active columns, forms one averaged estimate per size
/// (each from `params.m` subsets), majority-votes the nominations and peels
/// the winner. The final coefficient is chosen by [`omp_single_step`].
pub fn rls(x: &DMatrix<f64>, y: &DVector<f64>, k: usize, params: &RlsParams) -> Result<SignedSupport> {
    check_problem(x, y, k)?;
    params.validate()?;
    let mut rng = rng::stream(params.seed);
    let entries = match params.vote_mode {
        VoteMode::PerStep => greedy_peel(x, y, k, true, &mut rng, |sys, rng| {
            let sizes = subset_sizes(sys.active(), sys.rows(), params.frac_lo, params.frac_hi, params.votes);
            let mut avg = RowSubsetAverager::new(&sys.x, &sys.y, DEFAULT_SV_TOL_FACTOR)?;
            let candidates = sizes
                .iter()
                .map(|&n0| averaged_candidate(&mut avg, sys.rows(), n0, params.m, rng))
                .collect::<Result<Vec<_>>>()?;
            majority_vote(&candidates, rng)
        })?,
        VoteMode::FullPeel => rls_full_peel(x, y, k, params, &mut rng)?,
    };
    SignedSupport::new(entries)
}

/// One complete peel per vote slot (slot `v` uses the `v`-th subset size at
/// every step), then the `k` indices returned most often, ties broken at
/// random. Signs are the per-index majority, falling back to the first run
/// that reported the index.
fn rls_full_peel<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    k: usize,
    params: &RlsParams,
    rng: &mut R,
) -> Result<Vec<(usize, Sign)>> {
    let mut runs = Vec::with_capacity(params.votes);
    for slot in 0..params.votes {
        let run = greedy_peel(x, y, k, true, rng, |sys, rng| {
            let sizes = subset_sizes(sys.active(), sys.rows(), params.frac_lo, params.frac_hi, params.votes);
            let mut avg = RowSubsetAverager::new(&sys.x, &sys.y, DEFAULT_SV_TOL_FACTOR)?;
            let c = averaged_candidate(&mut avg, sys.rows(), sizes[slot], params.m, rng)?;
            Ok((c.index, c.sign))
        })?;
        runs.push(run);
    }

    // (index, count, plus votes, first-seen sign), in first-appearance order.
    let mut tally: Vec<(usize, usize, usize, Sign)> = Vec::new();
    for &(i, s) in runs.iter().flatten() {
        match tally.iter_mut().find(|t| t.0 == i) {
            Some(t) => {
                t.1 += 1;
                t.2 += usize::from(s == Sign::Plus);
            }
            None => tally.push((i, 1, usize::from(s == Sign::Plus), s)),
        }
    }
    let mut chosen = Vec::with_capacity(k);
    while chosen.len() < k {
        let best = tally.iter().map(|t| t.1).max().expect("k <= distinct indices");
        let tied: Vec<usize> = (0..tally.len()).filter(|&p| tally[p].1 == best).collect();
        let pick = if tied.len() == 1 { tied[0] } else { tied[rng.random_range(0..tied.len())] };
        let (index, count, plus, first) = tally.remove(pick);
        let sign = match (2 * plus).cmp(&count) {
            std::cmp::Ordering::Greater => Sign::Plus,
            std::cmp::Ordering::Less => Sign::Minus,
            std::cmp::Ordering::Equal => first,
        };
        chosen.push((index, sign));
    }
    Ok(chosen)
}

/// RLS with one averaged estimate per step at the fixed subset size `n0`.
pub fn rls_fixed_size(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    k: usize,
    n0: usize,
    m: usize,
    seed: u64,
) -> Result<SignedSupport> {
    check_problem(x, y, k)?;
    check_subset_size(x.nrows(), n0)?;
    if m == 0 {
        return Err(invalid("m must be at least 1"));
    }
    let mut rng = rng::stream(seed);
    let entries = greedy_peel(x, y, k, true, &mut rng, |sys, rng| {
        let mut avg = RowSubsetAverager::new(&sys.x, &sys.y, DEFAULT_SV_TOL_FACTOR)?;
        let c = averaged_candidate(&mut avg, sys.rows(), n0, m, rng)?;
        Ok((c.index, c.sign))
    })?;
    SignedSupport::new(entries)
}

/// Subset size used by RAWLS on an active system of `d_k` columns.
pub fn rawls_subset_size(d_k: usize, n: usize) -> usize {
    ((0.6 * d_k.min(n) as f64).floor() as usize).clamp(1, n.max(1))
}

/// Randomly aggregated least squares: `k` peeling steps, each from one
/// averaged estimate at size [`rawls_subset_size`]. No vote, no OMP flip.
pub fn rawls(x: &DMatrix<f64>, y: &DVector<f64>, k: usize, m: usize, seed: u64) -> Result<SignedSupport> {
    check_problem(x, y, k)?;
    if m == 0 {
        return Err(invalid("m must be at least 1"));
    }
    let mut rng = rng::stream(seed);
    let entries = greedy_peel(x, y, k, false, &mut rng, |sys, rng| {
        let n0 = rawls_subset_size(sys.active(), sys.rows());
        let mut avg = RowSubsetAverager::new(&sys.x, &sys.y, DEFAULT_SV_TOL_FACTOR)?;
        let c = averaged_candidate(&mut avg, sys.rows(), n0, m, rng)?;
        Ok((c.index, c.sign))
    })?;
    SignedSupport::new(entries)
}

/// Orthogonal matching pursuit with a least-squares refit on the selected
/// columns after every selection. Signs come from the final refit.
pub fn omp(x: &DMatrix<f64>, y: &DVector<f64>, k: usize) -> Result<SignedSupport> {
    check_problem(x, y, k)?;
    let d = x.ncols();
    let mut selected: Vec<usize> = Vec::with_capacity(k);
    let mut used = vec![false; d];
    let mut residual = y.clone();
    let mut coeffs = DVector::zeros(0);
    for _ in 0..k {
        let corr = x.tr_mul(&residual);
        let mut best: Option<(usize, f64)> = None;
        for (j, c) in corr.iter().enumerate() {
            if used[j] {
                continue;
            }
            if best.is_none_or(|(_, b)| c.abs() > b) {
                best = Some((j, c.abs()));
            }
        }
        let (j, _) = best.expect("k <= d leaves an unselected column");
        used[j] = true;
        selected.push(j);
        let sub = x.select_columns(&selected);
        let fit = min_norm_least_squares(&sub, y, DEFAULT_SV_TOL_FACTOR)?;
        residual = y - &sub * &fit.theta_hat;
        coeffs = fit.theta_hat;
    }
    SignedSupport::new(selected.into_iter().zip(coeffs.iter().map(|&c| Sign::of(c))).collect())
}
