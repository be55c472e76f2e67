//! Radial Newton solver for `Δ²u = (u⁺)^p` in the unit ball with
//! `u(1) = u'(1) = 0`, continuation in `p`, and the diagnostics that compare
//! the computed family with its large-`p` expansions.
//!
//! The unknowns are `u` and `w = Δu` on a sinh-graded grid whose spacing at
//! the origin follows the predicted concentration scale `ε_p`. Radial
//! symmetry of positive solutions in the ball is taken as given.

mod continuation;
mod diagnostics;

pub use continuation::{branch_through, cold_start, continuation, Branch, BranchRecord, StepPolicy, MAX_EXPONENT};
pub use diagnostics::{asymptotic_report, diagnostics, rescaled_profiles, AsymptoticReport, Diagnostics, RescaledProfiles};

use std::sync::Arc;

use serde::Serialize;

use crate::bubble::{bubble_b, BubbleProfile};
use crate::error::{invalid, Error, Result};
use crate::numerics::{BandMatrix, RadialField, RadialGrid, RadialOperator};

/// `ln ε_p ≈ −p/8 + c₂` with the leading-order constant, used to place grids.
pub fn predicted_log_eps(p: f64) -> f64 {
    -p / 8.0 - 0.5 - 0.5 * bubble_b().ln() - 13.0 / 24.0
}

/// `(u⁺)^p`, zero for `u ≤ 0`.
pub fn pos_pow(u: f64, p: f64) -> f64 {
    if u > 0.0 {
        u.powf(p)
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SolverOptions {
    /// Grid intervals on `[0, 1]`.
    pub intervals: usize,
    /// Origin spacing as a fraction of the predicted `ε_p`.
    pub h0_factor: f64,
    /// Convergence threshold on the relative residual.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { intervals: 2000, h0_factor: 0.04, tol: 1e-11, max_iter: 60 }
    }
}

/// Starting point for [`newton_solve`].
#[derive(Clone, Copy, Debug)]
pub enum Guess<'a> {
    /// `A(1 − r²)²`.
    Bump(f64),
    /// Matched bubble profile `u_max(1 + Z(r/ε)/p + 4r²/p)`, which satisfies the
    /// boundary conditions to leading order.
    Bubble { u_max: f64, eps: f64 },
    /// A converged solution at a nearby exponent; its `u_max` is reused and
    /// `ε` is advanced along `ln ε ≈ −p/8`.
    Solution(&'a RadialSolution),
}

/// One converged radial solution.
#[derive(Clone, Debug)]
pub struct RadialSolution {
    pub p: f64,
    pub grid: Arc<RadialGrid>,
    pub u: RadialField,
    /// `w = Δu`.
    pub w: RadialField,
    /// `u'` and `w'` at the nodes.
    pub du: Vec<f64>,
    pub dw: Vec<f64>,
    /// Largest relative equation residual at convergence.
    pub newton_residual: f64,
    pub iterations: usize,
}

impl RadialSolution {
    pub fn u_max(&self) -> f64 {
        self.u.values[0]
    }

    pub fn eps(&self) -> f64 {
        (self.p * self.u_max().powf(self.p - 1.0)).powf(-0.25)
    }

    /// `(U, U', U'', U''')` at radius `r`, with the two higher derivatives
    /// taken from `w = U'' + 3U'/r` and its derivative.
    pub fn jet(&self, r: f64) -> [f64; 4] {
        let g = &self.grid;
        let u = g.interpolate(&self.u.values, r, 4);
        let du = g.interpolate(&self.du, r, 4);
        let w = g.interpolate(&self.w.values, r, 4);
        let dw = g.interpolate(&self.dw, r, 4);
        if r == 0.0 {
            // U'(0) = 0, U''(0) = w(0)/4, U'''(0) = 0.
            return [u, 0.0, 0.25 * w, 0.0];
        }
        let d2 = w - 3.0 * du / r;
        let d3 = dw - 3.0 * d2 / r + 3.0 * du / (r * r);
        [u, du, d2, d3]
    }

    /// `[U, U', U'', U''', U'''']` at `r > 0`, closing the interpolated
    /// `u, u', w, w'` with `U'' = w − 3U'/r` and `w'' = (u⁺)^p − 3w'/r`.
    pub fn jet4(&self, r: f64) -> [f64; 5] {
        let [u, du, d2, d3] = self.jet(r);
        let dw = self.grid.interpolate(&self.dw, r, 4);
        let w2 = pos_pow(u, self.p) - 3.0 * dw / r;
        let d4 = w2 - 3.0 * d3 / r + 6.0 * d2 / (r * r) - 6.0 * du / (r * r * r);
        [u, du, d2, d3, d4]
    }

    /// `u(1)` and `u'(1)`.
    pub fn boundary_values(&self) -> (f64, f64) {
        (*self.u.values.last().unwrap(), *self.du.last().unwrap())
    }
}

/// Discrete system in interleaved unknowns `x = (u₀, w₀, u₁, w₁, …)`.
struct System {
    p: f64,
    n: usize,
    op: RadialOperator,
    half_band: usize,
}

impl System {
    fn new(grid: &RadialGrid, p: f64) -> Result<Self> {
        let op = RadialOperator::new(grid, 0)?;
        let n = grid.len();
        let mut s = 0;
        for (i, row) in op.lap.iter().chain(std::iter::once(&op.dr[n - 1])).enumerate() {
            let i = i.min(n - 1);
            for &(j, _) in row {
                s = s.max(i.abs_diff(j));
            }
        }
        Ok(System { p, n, op, half_band: 2 * s + 1 })
    }

    /// Residuals and their magnitudes `Σ|terms|` for the relative measure.
    fn residual(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let mut f = vec![0.0; 2 * n];
        let mut mag = vec![0.0; 2 * n];
        let u_scale = (0..n).map(|i| x[2 * i].abs()).fold(0.0, f64::max);
        for i in 0..n - 1 {
            let (mut lu, mut lw, mut au, mut aw) = (0.0, 0.0, 0.0, 0.0);
            for &(j, c) in &self.op.lap[i] {
                lu += c * x[2 * j];
                lw += c * x[2 * j + 1];
                au += (c * x[2 * j]).abs();
                aw += (c * x[2 * j + 1]).abs();
            }
            let src = pos_pow(x[2 * i], self.p);
            f[2 * i] = lu - x[2 * i + 1];
            mag[2 * i] = au + x[2 * i + 1].abs();
            f[2 * i + 1] = lw - src;
            mag[2 * i + 1] = aw + src;
        }
        f[2 * (n - 1)] = x[2 * (n - 1)];
        mag[2 * (n - 1)] = u_scale;
        let (mut d, mut ad) = (0.0, 0.0);
        for &(j, c) in &self.op.dr[n - 1] {
            d += c * x[2 * j];
            ad += (c * x[2 * j]).abs();
        }
        f[2 * n - 1] = d;
        mag[2 * n - 1] = ad.max(u_scale);
        (f, mag)
    }

    fn jacobian(&self, x: &[f64]) -> BandMatrix {
        let n = self.n;
        let k = self.half_band;
        let mut jac = BandMatrix::zeros(2 * n, k, k);
        for i in 0..n - 1 {
            for &(j, c) in &self.op.lap[i] {
                jac.add(2 * i, 2 * j, c);
                jac.add(2 * i + 1, 2 * j + 1, c);
            }
            jac.add(2 * i, 2 * i + 1, -1.0);
            let u = x[2 * i];
            let df = if u > 0.0 { self.p * u.powf(self.p - 1.0) } else { 0.0 };
            jac.add(2 * i + 1, 2 * i, -df);
        }
        jac.add(2 * (n - 1), 2 * (n - 1), 1.0);
        for &(j, c) in &self.op.dr[n - 1] {
            jac.add(2 * n - 1, 2 * j, c);
        }
        jac
    }
}

fn relative_residual(f: &[f64], mag: &[f64]) -> f64 {
    f.iter()
        .zip(mag)
        .map(|(&r, &m)| if r == 0.0 { 0.0 } else { (r / m).abs() })
        .fold(0.0, |a, b| if b.is_nan() || a.is_nan() { f64::NAN } else { a.max(b) })
}

/// Values `(u, w)` of an analytic guess at radius `r`; `None` for guesses
/// whose `w` is formed discretely.
fn guess_values(guess: &Guess, p: f64, r: f64) -> (f64, Option<f64>) {
    match *guess {
        Guess::Bump(a) => {
            let s = 1.0 - r * r;
            // Δ(1−r²)² = Δ(1 − 2r² + r⁴) = −16 + 24r².
            (a * s * s, Some(a * (-16.0 + 24.0 * r * r)))
        }
        Guess::Bubble { u_max, eps } => {
            let (u, w) = bubble_guess(u_max, eps, p, r);
            (u, Some(w))
        }
        Guess::Solution(s) => (transplant(s, p, r), None),
    }
}

/// Carries a solution at `p_old` over to `p` in rescaled variables. With
/// `Φ(y) = (p_old/u_max)(u_old(ε_old y) − u_max) − 4(ε_old y)²` the guess is
/// `u_max(1 + (Φ(r/ε) + 4r²)/p)` with `ε = ε_old e^{−(p−p_old)/8}`. Beyond the
/// old domain `Φ` continues with its logarithmic far field `−8 ln`, which
/// keeps `u(1) = 0`.
fn transplant(s: &RadialSolution, p: f64, r: f64) -> f64 {
    let (p_old, u_max, eps_old) = (s.p, s.u_max(), s.eps());
    let eps = eps_old * (-(p - p_old) / 8.0).exp();
    let r_old = r * eps_old / eps;
    let phi = if r_old <= 1.0 {
        p_old / u_max * (s.u.at(r_old) - u_max) - 4.0 * r_old * r_old
    } else {
        -p_old - 4.0 - 8.0 * r_old.ln()
    };
    u_max * (1.0 + (phi + 4.0 * r * r) / p)
}

fn bubble_guess(u_max: f64, eps: f64, p: f64, r: f64) -> (f64, f64) {
    let b = BubbleProfile;
    let y = r / eps;
    (u_max * (1.0 + (b.z(y) + 4.0 * r * r) / p), u_max * (b.lap_z(y) / (eps * eps) + 32.0) / p)
}

fn guess_eps(guess: &Guess, p: f64) -> f64 {
    match *guess {
        Guess::Bump(_) => predicted_log_eps(p).exp(),
        Guess::Bubble { eps, .. } => eps,
        Guess::Solution(s) => s.eps() * (-(p - s.p) / 8.0).exp(),
    }
}

/// Rescales `(u, w)` by the factor `t` for which `∫|Δ(tu)|² = ∫((tu)⁺)^{p+1}`,
/// the projection onto the Nehari manifold. Newton on a superlinear problem
/// is attracted to `u ≡ 0` from guesses that are too small, so only the
/// shape of a guess is kept.
fn nehari_rescale(x: &mut [f64], grid: &RadialGrid, p: f64) {
    let n = grid.len();
    let w2: Vec<f64> = (0..n).map(|i| x[2 * i + 1] * x[2 * i + 1]).collect();
    let up: Vec<f64> = (0..n).map(|i| pos_pow(x[2 * i], p + 1.0)).collect();
    let (a, b) = (grid.integrate_r3(&w2), grid.integrate_r3(&up));
    if a > 0.0 && b > 0.0 {
        let t = (a / b).powf(1.0 / (p - 1.0));
        if t.is_finite() && t > 0.0 {
            x.iter_mut().for_each(|v| *v *= t);
        }
    }
}

/// Grid used for exponent `p` when the concentration scale is about `eps`.
pub fn grid_for(eps: f64, opts: &SolverOptions) -> Result<RadialGrid> {
    RadialGrid::graded(opts.intervals, 1.0, opts.h0_factor * eps)
}

/// Newton iteration on the discretised clamped problem.
pub fn newton_solve(p: f64, guess: Guess, opts: &SolverOptions) -> Result<RadialSolution> {
    if !(p > 1.0) || !p.is_finite() {
        return invalid(format!("exponent must exceed 1, got {p}"));
    }
    if !(opts.tol > 0.0) {
        return invalid("solver tolerance must be positive");
    }
    let grid = grid_for(guess_eps(&guess, p), opts)?;
    newton_on_grid(p, &guess, grid, opts)
}

/// As [`newton_solve`] on a caller-supplied grid over `[0, 1]`.
pub fn newton_on_grid(p: f64, guess: &Guess, grid: RadialGrid, opts: &SolverOptions) -> Result<RadialSolution> {
    if (grid.r_max - 1.0).abs() > 0.0 {
        return invalid("solver grid must end at r = 1");
    }
    let sys = System::new(&grid, p)?;
    let n = grid.len();
    let mut x = vec![0.0; 2 * n];
    let mut discrete_w = false;
    for i in 0..n {
        let (u, w) = guess_values(guess, p, grid.nodes[i]);
        x[2 * i] = u;
        match w {
            Some(w) => x[2 * i + 1] = w,
            None => discrete_w = true,
        }
    }
    if discrete_w {
        let u: Vec<f64> = x.iter().step_by(2).copied().collect();
        for (i, w) in sys.op.apply_lap(&u).into_iter().enumerate() {
            x[2 * i + 1] = w;
        }
    }
    if !(x.iter().step_by(2).any(|&u| u > 0.0)) {
        return invalid("initial guess must be positive somewhere");
    }
    nehari_rescale(&mut x, &grid, p);
    let (mut f, mag) = sys.residual(&x);
    let mut res = relative_residual(&f, &mag);
    let mut iterations = 0;
    while !(res < opts.tol) {
        if iterations >= opts.max_iter {
            return Err(Error::SolverFailure(format!(
                "Newton did not converge at p = {p} after {iterations} iterations (residual {res:e})"
            )));
        }
        iterations += 1;
        let mut jac = sys.jacobian(&x);
        let mut rhs = f.clone();
        for k in 0..2 * n {
            let s = jac.row_max_abs(k);
            if s > 0.0 {
                jac.scale_row(k, 1.0 / s);
                rhs[k] /= s;
            }
        }
        let step = jac.factor()?.solve(&rhs);
        // Damped update: accept the first step length that lowers the residual
        // (the full step whenever Newton is in its quadratic regime).
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, d)| a - lambda * d).collect();
            let (ft, mt) = sys.residual(&trial);
            let rt = relative_residual(&ft, &mt);
            if rt.is_finite() && (rt < res || lambda < 1e-3 || res.is_nan()) {
                x = trial;
                f = ft;
                res = rt;
                break;
            }
            lambda *= 0.5;
        }
        let umax = x.iter().step_by(2).fold(0.0_f64, |a, &b| a.max(b));
        if umax < 1e-8 {
            return Err(Error::TrivialSolution(format!("iterates collapsed to u ≡ 0 at p = {p}")));
        }
    }
    let grid = Arc::new(grid);
    let u: Vec<f64> = x.iter().step_by(2).copied().collect();
    let w: Vec<f64> = x.iter().skip(1).step_by(2).copied().collect();
    if u.iter().all(|&v| v.abs() < 1e-8) {
        return Err(Error::TrivialSolution(format!("converged to u ≡ 0 at p = {p}")));
    }
    let du = sys.op.apply_dr(&u);
    let dw = sys.op.apply_dr(&w);
    Ok(RadialSolution {
        p,
        u: RadialField::new(grid.clone(), u, 0)?,
        w: RadialField::new(grid.clone(), w, 0)?,
        grid,
        du,
        dw,
        newton_residual: res,
        iterations,
    })
}

/// Clamped linear problem `Δ²u = 1`: one Newton step of the same
/// discretisation with the source replaced by a constant.
pub fn solve_linear_clamped(grid: &RadialGrid) -> Result<Vec<f64>> {
    let sys = System::new(grid, 1.0)?;
    let n = grid.len();
    let k = sys.half_band;
    let mut jac = BandMatrix::zeros(2 * n, k, k);
    let mut rhs = vec![0.0; 2 * n];
    for i in 0..n - 1 {
        for &(j, c) in &sys.op.lap[i] {
            jac.add(2 * i, 2 * j, c);
            jac.add(2 * i + 1, 2 * j + 1, c);
        }
        jac.add(2 * i, 2 * i + 1, -1.0);
        rhs[2 * i + 1] = 1.0;
    }
    jac.add(2 * (n - 1), 2 * (n - 1), 1.0);
    for &(j, c) in &sys.op.dr[n - 1] {
        jac.add(2 * n - 1, 2 * j, c);
    }
    let x = jac.factor()?.solve(&rhs);
    Ok(x.iter().step_by(2).copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_clamped_polynomial() {
        // Δ²u = 1 in the unit ball of R⁴ with u(1) = u'(1) = 0:
        // u = (1 − r²)²/192, since Δ²r⁴ = 192.
        let g = RadialGrid::uniform(200, 1.0).unwrap();
        let u = solve_linear_clamped(&g).unwrap();
        for (i, &r) in g.nodes.iter().enumerate() {
            let s = 1.0 - r * r;
            assert!((u[i] - s * s / 192.0).abs() < 1e-13, "{r}: {}", u[i]);
        }
    }

    #[test]
    fn p2_from_bump() {
        let opts = SolverOptions { intervals: 400, ..Default::default() };
        let s = newton_solve(2.0, Guess::Bump(10.0), &opts).unwrap();
        assert!(s.newton_residual < 1e-11);
        let (u1, du1) = s.boundary_values();
        assert_eq!(u1, 0.0);
        assert!(du1.abs() < 1e-12);
        assert!(s.u.values[..s.u.values.len() - 1].iter().all(|&u| u > 0.0));
        assert!(s.u.values.iter().all(|&u| u <= s.u_max()));
    }

    #[test]
    fn continuation_reaches_large_p() {
        let opts = SolverOptions::default();
        let b = continuation::continuation(10.0, 160.0, continuation::StepPolicy::Multiplicative(2.0), &opts).unwrap();
        assert_eq!(b.exponents(), vec![10.0, 20.0, 40.0, 80.0, 160.0]);
        for r in &b.records {
            assert!(r.solution.newton_residual < 1e-11, "{}", r.p);
            assert!(r.diagnostics.max_at_origin);
        }
        let last = &b.records[4].diagnostics;
        assert!((last.u_max - 1.706).abs() < 1e-2, "{}", last.u_max);
        assert!((last.mass_check / last.mass_prediction - 1.0).abs() < 1e-2);
    }

    #[test]
    fn jet_matches_profile() {
        let s = continuation::cold_start(10.0, &SolverOptions::default()).unwrap();
        let r = 0.2345;
        let j = s.jet(r);
        let h = 1e-4;
        let fd = (s.u.at(r + h) - s.u.at(r - h)) / (2.0 * h);
        assert!((j[1] - fd).abs() < 1e-7 * j[1].abs().max(1.0));
        let fd2 = (s.jet(r + h)[1] - s.jet(r - h)[1]) / (2.0 * h);
        assert!((j[2] - fd2).abs() < 1e-6 * j[2].abs().max(1.0));
    }
}
