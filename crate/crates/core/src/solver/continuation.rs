use serde::Serialize;

use super::diagnostics::{diagnostics, Diagnostics};
use super::{newton_solve, predicted_log_eps, Guess, RadialSolution, SolverOptions};
use crate::error::{invalid, Error, Result};

/// Largest exponent accepted by [`continuation`]. `u_max^{p+1}` stays far
/// from overflow (`√e^{400} ≈ 1e87`) and the origin spacing `0.04 ε_p` stays
/// well inside the normal range.
pub const MAX_EXPONENT: f64 = 400.0;

#[derive(Clone, Copy, Debug, Serialize)]
pub enum StepPolicy {
    /// `p_{k+1} = factor · p_k`.
    Multiplicative(f64),
    /// `p_{k+1} = p_k + step`.
    Additive(f64),
}

impl StepPolicy {
    fn next(&self, p: f64) -> f64 {
        match *self {
            StepPolicy::Multiplicative(f) => p * f,
            StepPolicy::Additive(s) => p + s,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BranchRecord {
    pub p: f64,
    pub solution: RadialSolution,
    pub diagnostics: Diagnostics,
}

/// Converged solutions at increasing `p`.
#[derive(Clone, Debug, Default)]
pub struct Branch {
    pub records: Vec<BranchRecord>,
}

impl Branch {
    pub fn exponents(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.p).collect()
    }
}

/// Exponent below which a bump guess converges directly.
const BUMP_EXPONENT: f64 = 3.0;

/// Solves at `p` without a nearby solution. Bumps `A(1−r²)²` with
/// `A ∈ {5, 10, 20}` are tried first (their amplitude is projected onto the
/// Nehari manifold, so `A` only matters through rounding), then the matched
/// bubble profile, and finally continuation from a bump solution at `p = 3`.
pub fn cold_start(p: f64, opts: &SolverOptions) -> Result<RadialSolution> {
    let eps = predicted_log_eps(p).exp();
    let u_max = 0.5f64.exp();
    let mut last = None;
    for guess in [Guess::Bump(5.0), Guess::Bump(10.0), Guess::Bump(20.0), Guess::Bubble { u_max, eps }] {
        match newton_solve(p, guess, opts) {
            Ok(s) => return Ok(s),
            Err(e) => last = Some(e),
        }
    }
    if p > BUMP_EXPONENT {
        let base = newton_solve(BUMP_EXPONENT, Guess::Bump(10.0), opts)?;
        return advance(&base, p, opts);
    }
    Err(last.unwrap())
}

/// Steps from `from` to `target`, bisecting the step whenever Newton fails.
fn advance(from: &RadialSolution, target: f64, opts: &SolverOptions) -> Result<RadialSolution> {
    match newton_solve(target, Guess::Solution(from), opts) {
        Ok(s) => Ok(s),
        Err(e) => {
            let mid = 0.5 * (from.p + target);
            if target - from.p < 1e-3 * from.p {
                return Err(Error::ContinuationStalled { last_good_p: from.p, reason: e.to_string() });
            }
            let half = advance(from, mid, opts)?;
            advance(&half, target, opts)
        }
    }
}

/// Ladder of Newton solves from `p_start` to `p_end`, each warm-started from
/// the previous record.
pub fn continuation(p_start: f64, p_end: f64, policy: StepPolicy, opts: &SolverOptions) -> Result<Branch> {
    if !(p_start >= 2.0) || !(p_end >= p_start) || p_end > MAX_EXPONENT {
        return invalid(format!("need 2 ≤ p_start ≤ p_end ≤ {MAX_EXPONENT}, got {p_start}, {p_end}"));
    }
    let step_ok = match policy {
        StepPolicy::Multiplicative(f) => f > 1.0,
        StepPolicy::Additive(s) => s > 0.0,
    };
    if !step_ok {
        return invalid("continuation step must increase p");
    }
    let mut branch = Branch::default();
    let mut sol = cold_start(p_start, opts)?;
    loop {
        let diag = diagnostics(&sol);
        let p = sol.p;
        branch.records.push(BranchRecord { p, solution: sol.clone(), diagnostics: diag });
        if p >= p_end * (1.0 - 1e-12) {
            break;
        }
        let target = policy.next(p).min(p_end);
        sol = advance(&sol, target, opts)?;
    }
    Ok(branch)
}

/// Solutions at exactly the given increasing exponents, each warm-started
/// from the previous one (with step bisection where needed).
pub fn branch_through(ps: &[f64], opts: &SolverOptions) -> Result<Branch> {
    if ps.is_empty() || ps.windows(2).any(|w| !(w[1] > w[0])) {
        return invalid("exponents must be non-empty and strictly increasing");
    }
    if !(ps[0] >= 2.0) || ps[ps.len() - 1] > MAX_EXPONENT {
        return invalid(format!("exponents must lie in [2, {MAX_EXPONENT}]"));
    }
    let mut branch = Branch::default();
    let mut sol = cold_start(ps[0], opts)?;
    for (k, &p) in ps.iter().enumerate() {
        if k > 0 {
            sol = advance(&sol, p, opts)?;
        }
        branch.records.push(BranchRecord { p, solution: sol.clone(), diagnostics: diagnostics(&sol) });
    }
    Ok(branch)
}
