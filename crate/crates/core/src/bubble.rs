//! The Liouville bubble `Z(r) = −4 ln(1 + r²/(8√6))`, solving `Δ²Z = e^Z` in
//! `R⁴` with mass `64π²`, and its first-order correction `η₀`:
//!
//! ```text
//! Δ²η₀ − e^Z η₀ = −(Z²/2) e^Z,   η₀(0) = 0,   η₀ = O(ln r) at infinity.
//! ```
//!
//! Far-field constants are reported in the rescaled frame `y = x/a`,
//! `a = √(8√6)`, where the equation reads `Δ²φ − Vφ = S` with
//! `V = 384/(1+|y|²)⁴` and `S = −3072 ln²(1+|y|²)/(1+|y|²)⁴`.

use crate::error::{Error, Result};
use crate::numerics::grid::{RadialField, RadialGrid, RadialOperator};
use crate::numerics::quadrature::{graded_unit_integral, improper_radial_integral};
use crate::numerics::Real;
use crate::S3_AREA;
use serde::Serialize;
use std::sync::Arc;

/// `8√6`, the squared bubble scale.
pub fn bubble_b() -> f64 {
    8.0 * 6f64.sqrt()
}

/// Bubble scale `a = √(8√6)`.
pub fn bubble_scale() -> f64 {
    bubble_b().sqrt()
}

/// Closed-form evaluators for the bubble.
#[derive(Clone, Copy, Debug, Default)]
pub struct BubbleProfile;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BubbleValues {
    pub z: f64,
    pub dz: f64,
    pub lap_z: f64,
    pub exp_z: f64,
}

impl BubbleProfile {
    pub fn scale(&self) -> f64 {
        bubble_scale()
    }

    /// `Z` as a function of `|x|²`, generic for automatic differentiation.
    pub fn z_of_r2<T: Real>(&self, r2: T) -> T {
        r2.scale(1.0 / bubble_b()).ln_1p().scale(-4.0)
    }

    pub fn z(&self, r: f64) -> f64 {
        self.z_of_r2(r * r)
    }

    pub fn dz(&self, r: f64) -> f64 {
        -8.0 * r / (bubble_b() + r * r)
    }

    pub fn d2z(&self, r: f64) -> f64 {
        let b = bubble_b();
        -8.0 * (b - r * r) / (b + r * r).powi(2)
    }

    /// `ΔZ = −16(2b + r²)/(b + r²)²` with `b = 8√6`.
    pub fn lap_z(&self, r: f64) -> f64 {
        let b = bubble_b();
        -16.0 * (2.0 * b + r * r) / (b + r * r).powi(2)
    }

    pub fn exp_z(&self, r: f64) -> f64 {
        (1.0 + r * r / bubble_b()).powi(-4)
    }
}

/// `(Z, Z', ΔZ, e^Z)` at radius `r ≥ 0`.
pub fn bubble_eval(r: f64) -> Result<BubbleValues> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::InvalidArgument(format!("radius must be finite and nonnegative, got {r}")));
    }
    let b = BubbleProfile;
    Ok(BubbleValues { z: b.z(r), dz: b.dz(r), lap_z: b.lap_z(r), exp_z: b.exp_z(r) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentKind {
    Mass,
    Log,
    Second,
}

/// `∫_{R⁴} m(|z|) e^{Z(z)} dz` for `m ∈ {1, ln|z|, |z|²}` by graded quadrature.
pub fn bubble_moment(kind: MomentKind) -> Result<f64> {
    let b = BubbleProfile;
    let weight = |r: f64| match kind {
        MomentKind::Mass => 1.0,
        MomentKind::Log => r.ln(),
        MomentKind::Second => r * r,
    };
    let i = improper_radial_integral(|r| weight(r) * b.exp_z(r), bubble_scale())?;
    Ok(S3_AREA * i)
}

/// Closed forms of the three moments (beta-function evaluations).
pub fn bubble_moment_closed_form(kind: MomentKind) -> f64 {
    let pi2 = std::f64::consts::PI.powi(2);
    let b = bubble_b();
    match kind {
        MomentKind::Mass => pi2 * b * b / 6.0,
        MomentKind::Log => pi2 * b * b * b.ln() / 12.0,
        MomentKind::Second => pi2 * b.powi(3) / 3.0,
    }
}

/// Residuals of `Δ²Z = e^Z` and of the rescaled identity
/// `Δ²W = 384(1+r²)⁻⁴`, `W = −4 ln(1+r²)`, on a grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LiouvilleResidual {
    pub max_residual: f64,
    pub rescaled_max_residual: f64,
    pub rescaled_at_zero: f64,
}

/// Exact increments `f(r_j) − f(r_i)` of `f = −4 ln(1 + r²/b)`.
fn log_increments(grid: &RadialGrid, b: f64) -> impl Fn(usize, usize) -> f64 + '_ {
    move |i, j| {
        let (ri, rj) = (grid.nodes[i], grid.nodes[j]);
        -4.0 * (grid.node_diff(i, j) * (rj + ri) / (b + ri * ri)).ln_1p()
    }
}

/// Maximum over interior nodes of `|Δ_h Δ_h Z − e^Z|` (the last node and
/// its two neighbours are excluded since the one-sided closures there act on
/// data that are not clamped).
pub fn liouville_residual(grid: &RadialGrid) -> Result<LiouvilleResidual> {
    let op = RadialOperator::new(grid, 0)?;
    let b = BubbleProfile;
    let bil = op.apply_lap(&op.apply_lap_increments(log_increments(grid, bubble_b())));
    let n = grid.len();
    let interior = 0..n - 3;
    let max_residual = interior
        .clone()
        .map(|i| (bil[i] - b.exp_z(grid.nodes[i])).abs())
        .fold(0.0, f64::max);

    let a = bubble_scale();
    let rescaled = RadialGrid::new(grid.intervals(), grid.r_max / a, grid.grading)?;
    let op = RadialOperator::new(&rescaled, 0)?;
    let bilw = op.apply_lap(&op.apply_lap_increments(log_increments(&rescaled, 1.0)));
    let v = |r: f64| 384.0 * (1.0 + r * r).powi(-4);
    let rescaled_max_residual =
        interior.map(|i| ((bilw[i] - v(rescaled.nodes[i])) / 384.0).abs()).fold(0.0, f64::max);
    Ok(LiouvilleResidual { max_residual, rescaled_max_residual, rescaled_at_zero: bilw[0] })
}

/// Constants of the far-field ledger for the correction `η₀`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CorrectionConstants {
    /// `∫₀^∞ r³(1−r²) ln²(1+r²)/(1+r²)⁵ dr`.
    pub j_half: f64,
    /// The same integral from the moment ledger `∫₀¹ uᵐ ln²(1/u) du = 2/(m+1)³`.
    pub j_half_ledger: f64,
    /// `∫ ΨS dy = −3072 |S³| J_half`.
    pub psi_s: f64,
    /// `A = −∫ΨS`.
    pub a: f64,
    pub a0: f64,
    pub l0: f64,
}

pub fn correction_constants() -> Result<CorrectionConstants> {
    let j_half = improper_radial_integral(
        |r| (1.0 - r * r) * (r * r).ln_1p().powi(2) / (1.0 + r * r).powi(5),
        1.0,
    )?;
    // r³(1−r²)ln²(1+r²)/(1+r²)⁵ dr = ½ u(1−u)(2u−1) ln²(1/u) du with u = 1/(1+r²),
    // and u(1−u)(2u−1) = −2u³ + 3u² − u.
    let moment = |m: i32| 2.0 / ((m + 1) as f64).powi(3);
    let j_half_ledger = 0.5 * (-2.0 * moment(3) + 3.0 * moment(2) - moment(1));
    let check = graded_unit_integral(|u| 0.5 * u * (1.0 - u) * (2.0 * u - 1.0) * (1.0 / u).ln().powi(2));
    if (j_half - j_half_ledger).abs() > 1e-10 * j_half_ledger.abs()
        || (check - j_half_ledger).abs() > 1e-10 * j_half_ledger.abs()
    {
        return Err(Error::InternalInconsistency(format!(
            "radial quadrature {j_half} and moment ledger {j_half_ledger} disagree"
        )));
    }
    let psi_s = -3072.0 * S3_AREA * j_half;
    let a0 = psi_s / (4.0 * S3_AREA);
    Ok(CorrectionConstants { j_half, j_half_ledger, psi_s, a: -psi_s, a0, l0: -4.0 * a0 })
}

/// Regular solution of the `η₀` problem on a radial grid.
#[derive(Clone, Debug)]
pub struct Eta0Solution {
    /// `η₀` on the unscaled grid.
    pub eta: RadialField,
    /// `w = Δη₀`.
    pub w: RadialField,
    /// `r³ η₀'`.
    pub r3_deta: Vec<f64>,
    /// `r³ w'`.
    pub r3_dw: Vec<f64>,
    /// Shooting value `s* = Δη₀(0)`.
    pub shoot: f64,
    /// Far-field constants in the rescaled frame.
    pub a0: f64,
    pub l0: f64,
    pub c0: f64,
    /// `∫_{R⁴} e^Z (η₀ − Z²/2)` accumulated along the integration.
    pub a_volume: f64,
    /// Max-norm discrete residual of `Δη₀ = w`, `Δw = e^Zη₀ − Z²e^Z/2`.
    pub ode_residual: f64,
    /// `sup |η₀(r)|/(1+r)^0.9` on the grid.
    pub growth_bound: f64,
}

impl Eta0Solution {
    pub fn eta_at(&self, r: f64) -> f64 {
        self.eta.at(r)
    }
}

const STATE: usize = 5;

/// Right-hand side in `t = ln r` for `(η, r³η', w, r³w', accumulated A)`.
fn eta_rhs(r: f64, y: &[f64; STATE], with_source: bool) -> [f64; STATE] {
    let b = BubbleProfile;
    let z = b.z(r);
    let ez = b.exp_z(r);
    let src = if with_source { 0.5 * z * z * ez } else { 0.0 };
    let r2 = r * r;
    let r4 = r2 * r2;
    let f = ez * y[0] - src;
    [
        y[1] / r2,
        r4 * y[2],
        y[3] / r2,
        r4 * f,
        S3_AREA * r4 * f,
    ]
}

fn rk4_step(r0: f64, dt: f64, y: &[f64; STATE], src: bool) -> [f64; STATE] {
    let add = |a: &[f64; STATE], k: &[f64; STATE], s: f64| -> [f64; STATE] {
        std::array::from_fn(|i| a[i] + s * k[i])
    };
    let t0 = r0.ln();
    let k1 = eta_rhs(r0, y, src);
    let k2 = eta_rhs((t0 + 0.5 * dt).exp(), &add(y, &k1, 0.5 * dt), src);
    let k3 = eta_rhs((t0 + 0.5 * dt).exp(), &add(y, &k2, 0.5 * dt), src);
    let k4 = eta_rhs((t0 + dt).exp(), &add(y, &k3, dt), src);
    std::array::from_fn(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// Integrates the regular solution with `η(0) = 0`, `w(0) = s` across the grid.
fn integrate_eta(grid: &RadialGrid, s: f64, with_source: bool, dt_max: f64) -> Vec<[f64; STATE]> {
    let mut out = Vec::with_capacity(grid.len());
    out.push([0.0, 0.0, s, 0.0, 0.0]);
    // Series start: η = s r²/8, w = s + O(r⁴); the source enters at O(r⁴) in w.
    let r_start = grid.nodes[1].min(1e-3);
    let rs2 = r_start * r_start;
    let mut y = [s * rs2 / 8.0, s * rs2 * rs2 / 4.0, s, s * rs2 * rs2 * rs2 / 48.0, 0.0];
    let mut r = r_start;
    for i in 1..grid.len() {
        let target = grid.nodes[i];
        let span = (target / r).ln();
        if span > 0.0 {
            let m = (span / dt_max).ceil().max(1.0) as usize;
            let dt = span / m as f64;
            for _ in 0..m {
                y = rk4_step(r, dt, &y, with_source);
                r *= dt.exp();
            }
        }
        r = target;
        out.push(y);
    }
    out
}

/// `w + r w'/2` at the last node: the constant term of `w = C − L/(2r²)`.
fn far_field_constant(state: &[f64; STATE], r: f64) -> f64 {
    state[2] + state[3] / (2.0 * r * r)
}

/// Default grid for [`solve_eta0`]: sinh-graded, `R_max = 200a`.
pub fn default_eta0_grid() -> Result<RadialGrid> {
    RadialGrid::graded(8000, 200.0 * bubble_scale(), 0.01)
}

/// Solves for `η₀` by shooting on `s = Δη₀(0)` so that `Δη₀ → 0` at infinity.
pub fn solve_eta0(grid: &RadialGrid, shoot_tol: f64) -> Result<Eta0Solution> {
    let a = bubble_scale();
    if grid.r_max < 50.0 * a {
        return Err(Error::InvalidArgument(format!(
            "grid extent {} too small for the far field (need at least 50a)",
            grid.r_max
        )));
    }
    let dt_max = 2e-3;
    let r_end = grid.r_max;
    let c_of = |s: f64| {
        let y = integrate_eta(grid, s, true, dt_max);
        far_field_constant(y.last().unwrap(), r_end)
    };
    // C(s) is affine in s; bracket around the root of the secant through two probes.
    let (s0, s1) = (0.0, 1.0);
    let (c0, c1) = (c_of(s0), c_of(s1));
    if c1 == c0 {
        return Err(Error::SolverFailure("shooting map is degenerate".into()));
    }
    let guess = s0 - c0 * (s1 - s0) / (c1 - c0);
    let (mut lo, mut hi) = (guess - 1.0, guess + 1.0);
    let (mut clo, mut chi) = (c_of(lo), c_of(hi));
    if clo.signum() == chi.signum() {
        return Err(Error::SolverFailure(format!("no sign change of C₀ on [{lo}, {hi}]")));
    }
    let mut s = guess;
    let mut cs = c_of(s);
    for _ in 0..60 {
        if cs.abs() * a * a < shoot_tol {
            break;
        }
        if cs.signum() == clo.signum() {
            lo = s;
            clo = cs;
        } else {
            hi = s;
            chi = cs;
        }
        let sec = lo - clo * (hi - lo) / (chi - clo);
        s = if sec > lo && sec < hi { sec } else { 0.5 * (lo + hi) };
        cs = c_of(s);
    }
    if cs.abs() * a * a >= shoot_tol {
        return Err(Error::SolverFailure(format!("shooting did not reach |C₀| < {shoot_tol}: {cs}")));
    }
    let states = integrate_eta(grid, s, true, dt_max);
    let n = grid.len();
    let last = states[n - 1];

    // In the far field r η₀' = A₀ − 2K/ρ² + O(ρ⁻⁴ ln²ρ); the slope is fitted from
    // the integrated r³η' on ρ ∈ [R/4, R/2] with the ρ⁻⁴ terms in the basis.
    let rmax = r_end / a;
    let mut ata = nalgebra::Matrix4::<f64>::zeros();
    let mut atb = nalgebra::Vector4::<f64>::zeros();
    for i in 0..n {
        let r = grid.nodes[i];
        let rho = r / a;
        if rho >= 0.25 * rmax && rho <= 0.5 * rmax {
            let l = rho.ln();
            let q = rho.powi(-4);
            let row = nalgebra::Vector4::new(1.0, rho.powi(-2), q * l * l, q * l);
            ata += row * row.transpose();
            atb += row * (states[i][1] / (r * r));
        }
    }
    let coef = ata
        .lu()
        .solve(&atb)
        .ok_or_else(|| Error::AccuracyFailure("far-field fit is singular".into()))?;
    let a0 = coef[0];
    // Constant term from the last node, with the fitted ρ⁻² correction.
    let rho_end = rmax;
    let b_far = last[0] - a0 * rho_end.ln() + 0.5 * coef[1] / (rho_end * rho_end);

    // Beyond R the source decays like r⁻⁸ ln² r; its tail is added with the
    // fitted far field η₀ ≈ A₀ ln(r/a) + B.
    let b = BubbleProfile;
    let tail_integrand = |r: f64| {
        let z = b.z(r);
        r.powi(3) * b.exp_z(r) * (a0 * (r / a).ln() + b_far - 0.5 * z * z)
    };
    let tail = graded_unit_integral(|t| {
        let r = r_end / (1.0 - t);
        let v = tail_integrand(r) * r_end / ((1.0 - t) * (1.0 - t));
        if v.is_finite() {
            v
        } else {
            0.0
        }
    });
    let half = (0..n).find(|&i| grid.nodes[i] >= 0.5 * r_end).unwrap();
    let r_half = grid.nodes[half];
    let tail_half = tail
        + graded_unit_integral(|t| {
            let r = r_half + t * (r_end - r_half);
            tail_integrand(r) * (r_end - r_half)
        });
    let l0 = last[3] + tail;
    let l_half = states[half][3] + tail_half;
    if (l_half - l0).abs() > 1e-6 * l0.abs() {
        return Err(Error::AccuracyFailure(format!("r³w' has no plateau: {l_half} vs {l0}")));
    }

    let grid_arc = Arc::new(grid.clone());
    let eta_vals: Vec<f64> = states.iter().map(|y| y[0]).collect();
    let w_vals: Vec<f64> = states.iter().map(|y| y[2]).collect();
    let op = RadialOperator::new(grid, 0)?;
    let lap_eta = op.apply_lap(&eta_vals);
    let lap_w = op.apply_lap(&w_vals);
    let mut ode_residual: f64 = 0.0;
    for i in 0..n - 3 {
        let r = grid.nodes[i];
        let z = b.z(r);
        let ez = b.exp_z(r);
        let r1 = (lap_eta[i] - w_vals[i]).abs();
        let r2 = (lap_w[i] - (ez * eta_vals[i] - 0.5 * z * z * ez)).abs();
        ode_residual = ode_residual.max(r1).max(r2);
    }
    let growth_bound = grid
        .nodes
        .iter()
        .zip(&eta_vals)
        .map(|(&r, &e)| e.abs() / (1.0 + r).powf(0.9))
        .fold(0.0, f64::max);

    Ok(Eta0Solution {
        eta: RadialField::new(grid_arc.clone(), eta_vals, 0)?,
        w: RadialField::new(grid_arc, w_vals, 0)?,
        r3_deta: states.iter().map(|y| y[1]).collect(),
        r3_dw: states.iter().map(|y| y[3]).collect(),
        shoot: s,
        a0,
        l0,
        c0: far_field_constant(&last, r_end) * a * a,
        a_volume: last[4] + S3_AREA * tail,
        ode_residual,
        growth_bound,
    })
}
