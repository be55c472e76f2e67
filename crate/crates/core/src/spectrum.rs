//! Mode-decomposed linearised operators `Δ_ℓ² − V` on radial grids.
//!
//! A function `ξ(r)Y_ℓ(ω)` with a spherical harmonic of degree `ℓ` turns
//! `Δ²ξ − Vξ` into a radial fourth-order operator. It is discretised as the
//! interleaved second-order system `Δ_ℓ ξ = ζ`, `Δ_ℓ ζ − Vξ = λ wξ`, with
//! `ξ = ξ' = 0` at the outer radius and parity at the origin. Two weights are
//! used:
//!
//! * `w = 1` (the `r³dr` volume weight of the collocation), whose
//!   smallest-magnitude eigenvalues measure how far the operator is from
//!   singular;
//! * `w = V` (potential weight), whose eigenvalue `ν` is `Λ − 1` for
//!   `Δ²ξ = Λ Vξ`. `ν = 0` is exactly a kernel element, `ν > −1` always, and
//!   the scale of `ν` is independent of `p`, which makes it the quantity to
//!   track along a branch.
//!
//! Eigenvalues come from shift-invert Arnoldi on the banded factorisation,
//! eigenvectors from inverse iteration.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bubble::{bubble_b, BubbleProfile};
use crate::error::{invalid, Error, Result};
use crate::greenball::kirchhoff_routh;
use crate::numerics::{gauss_rule, BandLu, BandMatrix, RadialGrid, RadialOperator};
use crate::solver::{pos_pow, Branch, RadialSolution};
use crate::S3_AREA;

/// Largest angular mode accepted.
pub const MAX_MODE: usize = 6;
/// Largest number of eigenvalues per request.
pub const MAX_COUNT: usize = 10;
/// Krylov dimension of the shift-invert Arnoldi iteration.
const KRYLOV_DIM: usize = 60;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Weight {
    Volume,
    Potential,
}

/// `Δ_ℓ² − V` with clamped outer boundary.
#[derive(Clone, Debug)]
pub struct ModeOperator {
    pub ell: usize,
    pub grid: Arc<RadialGrid>,
    pub potential: Vec<f64>,
    op: RadialOperator,
    half_band: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenPair {
    pub lambda: f64,
    /// `ξ` at the grid nodes.
    pub xi: Vec<f64>,
}

impl ModeOperator {
    pub fn new(grid: Arc<RadialGrid>, ell: usize, potential: Vec<f64>) -> Result<Self> {
        if ell > MAX_MODE {
            return invalid(format!("mode ℓ = {ell} exceeds {MAX_MODE}"));
        }
        if potential.len() != grid.len() || potential.iter().any(|v| !v.is_finite()) {
            return invalid("potential must be finite and match the grid");
        }
        let op = RadialOperator::new(&grid, ell)?;
        let n = grid.len();
        let mut s = 0;
        for (i, row) in op.lap.iter().chain(std::iter::once(&op.dr[n - 1])).enumerate() {
            let i = i.min(n - 1);
            for &(j, _) in row {
                s = s.max(i.abs_diff(j));
            }
        }
        Ok(ModeOperator { ell, grid, potential, op, half_band: 2 * s + 1 })
    }

    /// `L_p = Δ_ℓ² − p(u⁺)^{p−1}` for a computed solution.
    pub fn linearized(sol: &RadialSolution, ell: usize) -> Result<Self> {
        let p = sol.p;
        let v = sol.u.values.iter().map(|&u| p * pos_pow(u, p - 1.0)).collect();
        Self::new(sol.grid.clone(), ell, v)
    }

    /// The Liouville linearisation `Δ_ℓ² − e^Z`, truncated at the grid radius.
    pub fn liouville(grid: Arc<RadialGrid>, ell: usize) -> Result<Self> {
        let b = BubbleProfile;
        let v = grid.nodes.iter().map(|&r| b.exp_z(r)).collect();
        Self::new(grid, ell, v)
    }

    fn n(&self) -> usize {
        self.grid.len()
    }

    /// Weight `w_i` multiplying `λ`; zero on constrained nodes.
    fn weights(&self, weight: Weight) -> Vec<f64> {
        let n = self.n();
        let mut w: Vec<f64> = match weight {
            Weight::Volume => vec![1.0; n],
            Weight::Potential => self.potential.clone(),
        };
        w[n - 1] = 0.0;
        if self.ell > 0 {
            w[0] = 0.0;
        }
        w
    }

    /// Row-scaled factorisation of `A − σB` and the row scales.
    fn factor(&self, weight: Weight, sigma: f64) -> Result<(BandLu, Vec<f64>)> {
        let n = self.n();
        let k = self.half_band;
        let w = self.weights(weight);
        let mut m = BandMatrix::zeros(2 * n, k, k);
        for i in 0..n - 1 {
            if self.ell > 0 && i == 0 {
                m.add(0, 0, 1.0);
                m.add(1, 1, 1.0);
                continue;
            }
            for &(j, c) in &self.op.lap[i] {
                m.add(2 * i, 2 * j, c);
                m.add(2 * i + 1, 2 * j + 1, c);
            }
            m.add(2 * i, 2 * i + 1, -1.0);
            m.add(2 * i + 1, 2 * i, -self.potential[i] - sigma * w[i]);
        }
        m.add(2 * (n - 1), 2 * (n - 1), 1.0);
        for &(j, c) in &self.op.dr[n - 1] {
            m.add(2 * n - 1, 2 * j, c);
        }
        let mut scales = vec![1.0; 2 * n];
        for (r, s) in scales.iter_mut().enumerate() {
            let a = m.row_max_abs(r);
            if a > 0.0 {
                m.scale_row(r, 1.0 / a);
                *s = a;
            }
        }
        Ok((m.factor()?, scales))
    }

    /// `ξ`-part of `(A − σB)⁻¹ B (ξ, ·)`. `B` only reads `ξ`, so the
    /// iteration lives on `ξ` alone; `ζ = Δ_ℓξ` would otherwise dominate
    /// the Krylov vectors near a concentrated potential.
    fn shift_invert(lu: &BandLu, scales: &[f64], w: &[f64], x: &[f64]) -> Vec<f64> {
        let mut b = vec![0.0; 2 * x.len()];
        for (i, wi) in w.iter().enumerate() {
            b[2 * i + 1] = wi * x[i] / scales[2 * i + 1];
        }
        lu.solve(&b).iter().step_by(2).copied().collect()
    }

    /// `Δ_hΔ_h ξ − Vξ` at the nodes (no boundary rows).
    pub fn apply(&self, xi: &[f64]) -> Vec<f64> {
        let z = self.op.apply_lap(xi);
        let mut out = self.op.apply_lap(&z);
        for (o, (v, x)) in out.iter_mut().zip(self.potential.iter().zip(xi)) {
            *o -= v * x;
        }
        out
    }

    /// The `count` eigenvalues closest to `shift`, sorted by distance.
    pub fn eigenvalues(&self, weight: Weight, shift: f64, count: usize) -> Result<Vec<f64>> {
        if count == 0 || count > MAX_COUNT {
            return invalid(format!("eigenvalue count must be in 1..={MAX_COUNT}"));
        }
        let (lu, scales) = self.factor(weight, shift)?;
        let w = self.weights(weight);
        let dim = self.n();
        let m = KRYLOV_DIM.min(dim - 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut v0: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // One application removes the components that B annihilates.
        v0 = Self::shift_invert(&lu, &scales, &w, &v0);
        normalize(&mut v0);
        let mut basis = vec![v0];
        let mut h = DMatrix::<f64>::zeros(m + 1, m);
        let mut steps = m;
        for j in 0..m {
            let mut y = Self::shift_invert(&lu, &scales, &w, &basis[j]);
            for _ in 0..2 {
                for (i, q) in basis.iter().enumerate() {
                    let c = dotv(q, &y);
                    h[(i, j)] += c;
                    axpy(&mut y, -c, q);
                }
            }
            let nrm = dotv(&y, &y).sqrt();
            h[(j + 1, j)] = nrm;
            if !(nrm > 1e-300) || !nrm.is_finite() {
                steps = j + 1;
                break;
            }
            y.iter_mut().for_each(|v| *v /= nrm);
            basis.push(y);
        }
        let hm = h.view((0, 0), (steps, steps)).into_owned();
        let mu = hm.complex_eigenvalues();
        let mut lam: Vec<(f64, f64)> = mu
            .iter()
            .filter(|z| z.norm() > 0.0)
            .map(|z| {
                let inv = z.inv();
                (shift + inv.re, inv.im)
            })
            .filter(|(l, im)| l.is_finite() && im.abs() <= 1e-6 * (l - shift).abs().max(1e-300))
            .collect();
        if lam.len() < count {
            return Err(Error::SolverFailure(format!(
                "Arnoldi found {} real eigenvalues, {count} requested",
                lam.len()
            )));
        }
        lam.sort_by(|a, b| (a.0 - shift).abs().total_cmp(&(b.0 - shift).abs()));
        let mut out: Vec<f64> = Vec::with_capacity(count);
        for (l, _) in lam {
            if out.iter().all(|&o| (o - l).abs() > 1e-9 * l.abs().max((l - shift).abs())) {
                out.push(l);
            }
            if out.len() == count {
                break;
            }
        }
        if out.len() < count {
            return Err(Error::SolverFailure("too few distinct eigenvalues".into()));
        }
        Ok(out)
    }

    /// Eigenpair nearest to `near` by inverse iteration.
    pub fn eigenpair(&self, weight: Weight, near: f64) -> Result<EigenPair> {
        let s = near + 1e-9 * near.abs().max(1e-12);
        let (lu, scales) = self.factor(weight, s)?;
        let w = self.weights(weight);
        let n = self.n();
        let mut rng = ChaCha8Rng::seed_from_u64(0xe16);
        let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut lambda = near;
        for _ in 0..8 {
            let y = Self::shift_invert(&lu, &scales, &w, &x);
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..n {
                num += w[i] * x[i] * x[i];
                den += w[i] * x[i] * y[i];
            }
            if den != 0.0 {
                lambda = s + num / den;
            }
            x = y;
            normalize(&mut x);
        }
        if !lambda.is_finite() {
            return Err(Error::SolverFailure("inverse iteration diverged".into()));
        }
        Ok(EigenPair { lambda, xi: x })
    }

    /// Sign of `det(A − σB)`; it flips whenever an odd number of eigenvalues
    /// crosses `σ`.
    pub fn det_sign(&self, weight: Weight, sigma: f64) -> Result<f64> {
        Ok(self.factor(weight, sigma)?.0.det_sign())
    }
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn normalize(x: &mut [f64]) {
    let n = dotv(x, x).sqrt();
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
}

/// Residuals of the Liouville kernel functions and the truncated operators'
/// eigenvalues nearest the kernel.
#[derive(Clone, Debug, Serialize)]
pub struct KernelCheck {
    pub r_max: f64,
    /// `max |Δ_0²v₀ − e^Z v₀|` over `r ≤ R/2`, `v₀ = 4 + rZ'`.
    pub v0_max_residual: f64,
    /// `max |Δ_1²v₁ − e^Z v₁|` over `r ≤ R/2`, `v₁ = Z'`.
    pub v1_max_residual: f64,
    pub v0_at_zero: f64,
    /// `ν` nearest zero for `Δ_ℓ²ξ = (1 + ν)e^Zξ`, ℓ = 0 and 1.
    pub nu_l0: f64,
    pub nu_l1: f64,
}

pub fn liouville_kernel_check(grid: &RadialGrid) -> Result<KernelCheck> {
    if grid.r_max < 100.0 {
        return invalid(format!("kernel check needs R_max ≥ 100, got {}", grid.r_max));
    }
    let b = bubble_b();
    let bub = BubbleProfile;
    let v0 = |r: f64| 4.0 * (b - r * r) / (b + r * r);
    let v1 = |r: f64| -8.0 * r / (b + r * r);
    let nodes = &grid.nodes;
    let n = grid.len();
    let half = nodes.iter().take_while(|&&r| r <= 0.5 * grid.r_max).count();

    // v₀ → −4 at infinity, so its first Laplacian is formed from exact
    // increments to keep rounding proportional to the variation.
    let op0 = RadialOperator::new(grid, 0)?;
    let lap0 = op0.apply_lap_increments(|i, j| {
        let (ri, rj) = (nodes[i], nodes[j]);
        -8.0 * b * grid.node_diff(i, j) * (ri + rj) / ((b + ri * ri) * (b + rj * rj))
    });
    let bil0 = op0.apply_lap(&lap0);
    let op1 = RadialOperator::new(grid, 1)?;
    let f1: Vec<f64> = nodes.iter().map(|&r| v1(r)).collect();
    let bil1 = op1.apply_lap(&op1.apply_lap(&f1));
    let (mut r0, mut r1) = (0.0_f64, 0.0_f64);
    for i in 0..half.min(n - 3) {
        let r = nodes[i];
        let e = bub.exp_z(r);
        r0 = r0.max((bil0[i] - e * v0(r)).abs());
        if i > 0 {
            r1 = r1.max((bil1[i] - e * v1(r)).abs());
        }
    }
    let g = Arc::new(grid.clone());
    let nu_l0 = ModeOperator::liouville(g.clone(), 0)?.eigenvalues(Weight::Potential, 0.0, 1)?[0];
    let nu_l1 = ModeOperator::liouville(g, 1)?.eigenvalues(Weight::Potential, 0.0, 1)?[0];
    Ok(KernelCheck { r_max: grid.r_max, v0_max_residual: r0, v1_max_residual: r1, v0_at_zero: v0(0.0), nu_l0, nu_l1 })
}

/// Below this `|ν|` the discrete eigenvalue is at the rounding floor set by
/// the concentrated potential and its sign is not trusted.
pub const RESOLUTION: f64 = 1e-6;

/// The ℓ = 1 eigenvalue from the boundary identity with the translation mode.
///
/// `u'` solves `Δ_1²u' = Vu'` and vanishes at `r = 1`, so pairing it with the
/// eigenfunction leaves only a boundary term:
/// `ν ∫Vξu' r³dr = −Δ_1ξ(1) u''(1)`. Writing `ξ = u' + χ` with `χ = a r + b r³`
/// outside the core and clamping `ξ` gives
/// `ν ≈ −(w'(1) − 6w(1)) w(1) / ∫V u'² r³dr` (`w(1) = u''(1)` since `u'(1) = 0`),
/// built from O(1) quantities only. The relative error behaves like `20ε_p²`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TranslationEstimate {
    pub value: f64,
    pub error_bound: f64,
}

pub fn translation_eigenvalue(sol: &RadialSolution) -> TranslationEstimate {
    let last = sol.grid.len() - 1;
    let (w1, dw1) = (sol.w.values[last], sol.dw[last]);
    let p = sol.p;
    let v: Vec<f64> = sol.u.values.iter().zip(&sol.du).map(|(&u, &du)| p * pos_pow(u, p - 1.0) * du * du).collect();
    let value = -(dw1 - 6.0 * w1) * w1 / sol.grid.integrate_r3(&v);
    let eps = sol.eps();
    TranslationEstimate { value, error_bound: 50.0 * eps * eps * value.abs() }
}

/// Eigenvalues of `L_p` in one mode.
#[derive(Clone, Debug, Serialize)]
pub struct ModeEigenvalues {
    pub p: f64,
    pub ell: usize,
    /// Volume-weighted eigenvalues of smallest magnitude.
    pub volume: Vec<f64>,
    /// `ν` nearest zero for `Δ²ξ = (1 + ν) p(u⁺)^{p−1}ξ`.
    pub weighted: Vec<f64>,
    /// `weighted`, with an unresolved ℓ = 1 eigenvalue replaced by the
    /// boundary-identity value.
    pub tracked: Vec<f64>,
    pub translation: Option<TranslationEstimate>,
    /// Whether every tracked eigenvalue comes from the discrete operator.
    pub resolved: bool,
    /// Number of tracked `ν < 0` (the Morse index of the mode).
    pub morse_index: usize,
    /// Whether every `ν < 0` is among those found (`ν > −1`, so this holds
    /// once the farthest found `|ν|` reaches 1).
    pub morse_complete: bool,
    /// Sign of `det L_p` in the discrete mode-ℓ system. Not meaningful once an
    /// eigenvalue is below [`RESOLUTION`].
    pub det_sign: f64,
}

impl ModeEigenvalues {
    /// Tracked eigenvalue of smallest magnitude.
    pub fn min_abs(&self) -> f64 {
        self.tracked.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()))
    }

    /// Whether the smallest tracked eigenvalue is certainly nonzero.
    pub fn certified_nonzero(&self) -> bool {
        let m = self.min_abs();
        match (self.resolved, self.translation) {
            (true, _) => m >= RESOLUTION,
            (false, Some(t)) => m > t.error_bound,
            (false, None) => false,
        }
    }
}

pub fn mode_eigenvalues(sol: &RadialSolution, ell: usize, count: usize) -> Result<ModeEigenvalues> {
    let op = ModeOperator::linearized(sol, ell)?;
    let volume = op.eigenvalues(Weight::Volume, 0.0, count)?;
    let weighted = op.eigenvalues(Weight::Potential, 0.0, count)?;
    let translation = (ell == 1).then(|| translation_eigenvalue(sol));
    let mut tracked = weighted.clone();
    let mut resolved = true;
    if let Some(t) = translation {
        if tracked[0].abs() < RESOLUTION {
            tracked[0] = t.value;
            resolved = false;
        }
    }
    let morse_index = tracked.iter().filter(|&&v| v < 0.0).count();
    let morse_complete = weighted.iter().any(|v| v.abs() >= 1.0);
    Ok(ModeEigenvalues {
        p: sol.p,
        ell,
        volume,
        weighted,
        tracked,
        translation,
        resolved,
        morse_index,
        morse_complete,
        det_sign: op.det_sign(Weight::Volume, 0.0)?,
    })
}

/// Projection of a rescaled eigenfunction onto the limit profiles
/// `(b − |y|²)/(b + |y|²)` (ℓ = 0) and `y/(b + |y|²)` (ℓ = 1), `b = 8√6`.
#[derive(Clone, Debug, Serialize)]
pub struct ShapeCoefficients {
    pub p: f64,
    pub ell: usize,
    pub lambda: f64,
    pub a: f64,
    pub b: f64,
    /// Relative `L²(y³dy)` distance on `|y| ≤ 5` to the fitted profile.
    pub projection_residual: f64,
    /// `|a|/|b|` for ℓ = 1: zero, since a radial profile is orthogonal to
    /// every ℓ = 1 harmonic.
    pub a_type_fraction: Option<f64>,
    /// `p ∫(u⁺)^{p−1} ξ dx` for the sup-normalised eigenfunction.
    pub a_p: f64,
}

pub fn eigen_shape_check(sol: &RadialSolution, ell: usize, pair: &EigenPair) -> Result<ShapeCoefficients> {
    if ell > 1 {
        return invalid("shape check is defined for ℓ ∈ {0, 1}");
    }
    let grid = &sol.grid;
    if pair.xi.len() != grid.len() {
        return invalid("eigenvector does not match the solution grid");
    }
    let eps = sol.eps();
    if 5.0 * eps >= 1.0 || grid.nodes[1] > 0.25 * eps {
        return invalid("ε_p is not resolved by the grid");
    }
    let sup = pair.xi.iter().fold(0.0_f64, |a, &v| if v.abs() > a.abs() { v } else { a });
    if sup == 0.0 {
        return invalid("eigenvector vanishes");
    }
    let xi: Vec<f64> = pair.xi.iter().map(|v| v / sup).collect();
    let bb = bubble_b();
    let profile = |y: f64| if ell == 0 { (bb - y * y) / (bb + y * y) } else { y / (bb + y * y) };
    let q = gauss_rule(200, 0.0, 5.0)?;
    let (mut xf, mut ff, mut xx) = (0.0, 0.0, 0.0);
    for (&y, &w) in q.nodes.iter().zip(&q.weights) {
        let v = grid.interpolate(&xi, eps * y, 4);
        let f = profile(y);
        let wy = w * y * y * y;
        xf += wy * v * f;
        ff += wy * f * f;
        xx += wy * v * v;
    }
    let c = xf / ff;
    let projection_residual = ((xx - 2.0 * c * xf + c * c * ff).max(0.0) / xx).sqrt();
    let a_p = if ell == 0 {
        let vx: Vec<f64> = sol.u.values.iter().zip(&xi).map(|(&u, &x)| sol.p * pos_pow(u, sol.p - 1.0) * x).collect();
        S3_AREA * grid.integrate_r3(&vx)
    } else {
        0.0
    };
    let (a, b) = if ell == 0 { (c, 0.0) } else { (0.0, c) };
    Ok(ShapeCoefficients {
        p: sol.p,
        ell,
        lambda: pair.lambda,
        a,
        b,
        projection_residual,
        a_type_fraction: (ell == 1).then_some(0.0),
        a_p,
    })
}

/// Shape check for the mode-ℓ eigenpair with `ν` nearest 0. In mode 0 the
/// ground state (`ν = 1/p − 1`, the solution itself) is skipped: the lowest
/// eigenfunction of the kernel-like family is the next one.
pub fn kernel_shape(sol: &RadialSolution, ell: usize) -> Result<ShapeCoefficients> {
    let op = ModeOperator::linearized(sol, ell)?;
    let nu = op
        .eigenvalues(Weight::Potential, 0.0, 3)?
        .into_iter()
        .find(|&v| v > -0.5)
        .ok_or_else(|| Error::SolverFailure("no kernel-like eigenvalue found".into()))?;
    let pair = op.eigenpair(Weight::Potential, nu)?;
    eigen_shape_check(sol, ell, &pair)
}

/// A change of the Morse index, or of the determinant sign between two
/// resolved records.
#[derive(Clone, Debug, Serialize)]
pub struct SignChange {
    pub ell: usize,
    pub p_from: f64,
    pub p_to: f64,
    pub morse_from: usize,
    pub morse_to: usize,
    pub det_from: f64,
    pub det_to: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumReport {
    pub rows: Vec<ModeEigenvalues>,
    /// `(p, min_ℓ |ν|)` over the tracked eigenvalues.
    pub min_abs_eig: Vec<(f64, f64)>,
    /// `(p, min_ℓ |λ|)` for the volume weight.
    pub min_abs_volume: Vec<(f64, f64)>,
    /// Whether `min_abs_eig` is certainly nonzero at every record.
    pub all_nonzero: bool,
    pub sign_changes: Vec<SignChange>,
    pub no_sign_change: bool,
    pub shapes: Vec<ShapeCoefficients>,
    /// Hessian of the Robin function at its critical point 0.
    pub kr_hessian_eigs: Vec<f64>,
    pub kr_nondegenerate: bool,
}

/// Eigenvalues in every mode `ℓ ≤ ell_max` for every record of a branch.
pub fn nondegeneracy_scan(branch: &Branch, ell_max: usize, count: usize) -> Result<SpectrumReport> {
    if ell_max > MAX_MODE {
        return invalid(format!("ℓ_max = {ell_max} exceeds {MAX_MODE}"));
    }
    if branch.records.is_empty() {
        return invalid("empty branch");
    }
    let jobs: Vec<(usize, usize)> =
        (0..branch.records.len()).flat_map(|k| (0..=ell_max).map(move |l| (k, l))).collect();
    let rows: Vec<ModeEigenvalues> = jobs
        .par_iter()
        .map(|&(k, l)| mode_eigenvalues(&branch.records[k].solution, l, count))
        .collect::<Result<_>>()?;
    let per = ell_max + 1;
    let mut min_abs_eig = Vec::new();
    let mut min_abs_volume = Vec::new();
    for (k, rec) in branch.records.iter().enumerate() {
        let block = &rows[k * per..(k + 1) * per];
        min_abs_eig.push((rec.p, block.iter().map(ModeEigenvalues::min_abs).fold(f64::INFINITY, f64::min)));
        min_abs_volume.push((rec.p, block.iter().map(|r| r.volume[0].abs()).fold(f64::INFINITY, f64::min)));
    }
    let all_nonzero = rows.iter().all(ModeEigenvalues::certified_nonzero);
    let mut sign_changes = Vec::new();
    for k in 1..branch.records.len() {
        for l in 0..per {
            let (a, b) = (&rows[(k - 1) * per + l], &rows[k * per + l]);
            if a.morse_index != b.morse_index || (a.resolved && b.resolved && a.det_sign != b.det_sign) {
                sign_changes.push(SignChange {
                    ell: l,
                    p_from: a.p,
                    p_to: b.p,
                    morse_from: a.morse_index,
                    morse_to: b.morse_index,
                    det_from: a.det_sign,
                    det_to: b.det_sign,
                });
            }
        }
    }
    let shapes: Vec<ShapeCoefficients> = branch
        .records
        .par_iter()
        .flat_map_iter(|rec| (0..=ell_max.min(1)).map(move |l| kernel_shape(&rec.solution, l)))
        .collect::<Result<_>>()?;
    let kr = kirchhoff_routh(&[[0.0; 4]])?;
    Ok(SpectrumReport {
        no_sign_change: sign_changes.is_empty(),
        rows,
        min_abs_eig,
        min_abs_volume,
        all_nonzero,
        sign_changes,
        shapes,
        kr_hessian_eigs: kr.hessian_eigs.clone(),
        kr_nondegenerate: kr.nondegenerate,
    })
}

/// Asymmetry of the mode-ℓ Laplacian in the discrete `r³dr` inner product.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SymmetryDefect {
    /// `‖WL − (WL)ᵀ‖_F / ‖WL‖_F` for the collocation matrix.
    pub raw: f64,
    /// The same after replacing `WL` by its symmetric part.
    pub symmetrized: f64,
}

/// Dense construction check on a small grid (at most 400 intervals).
pub fn symmetry_defect(grid: &RadialGrid, ell: usize) -> Result<SymmetryDefect> {
    if grid.intervals() > 400 {
        return invalid("symmetry check is meant for grids of at most 400 intervals");
    }
    let op = RadialOperator::new(grid, ell)?;
    let n = grid.len();
    // Unknowns: nodes 1..n−1 (Dirichlet at the outer node; node 0 is either
    // constrained (ℓ ≥ 1) or kept for ℓ = 0).
    let first = if ell == 0 { 0 } else { 1 };
    let idx: Vec<usize> = (first..n - 1).collect();
    let m = idx.len();
    let h = grid.h();
    let mut l = DMatrix::<f64>::zeros(m, m);
    let mut w = vec![0.0; m];
    for (a, &i) in idx.iter().enumerate() {
        for &(j, c) in &op.lap[i] {
            if let Some(b) = idx.iter().position(|&k| k == j) {
                l[(a, b)] += c;
            }
        }
        let r = grid.nodes[i];
        w[a] = if i == 0 { (0.5 * h * grid.r_xi[0]).powi(4) / 4.0 } else { r.powi(3) * grid.r_xi[i] * h };
    }
    let s = DMatrix::from_fn(m, m, |a, b| w[a] * l[(a, b)]);
    let norm = s.norm();
    let raw = (&s - s.transpose()).norm() / norm;
    let sym = (&s + s.transpose()) * 0.5;
    let symmetrized = (&sym - sym.transpose()).norm() / norm;
    Ok(SymmetryDefect { raw, symmetrized })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Grading;
    use crate::solver::{cold_start, continuation, SolverOptions, StepPolicy};

    /// `J_n(x)` (or `I_n(x)` when `modified`) from the power series.
    fn bessel(n: i32, x: f64, modified: bool) -> f64 {
        let sign = if modified { 1.0 } else { -1.0 };
        let mut term = (0.5 * x).powi(n) / (1..=n).map(f64::from).product::<f64>();
        let mut sum = term;
        for k in 1..60 {
            let k = f64::from(k);
            term *= sign * 0.25 * x * x / (k * (k + f64::from(n)));
            sum += term;
        }
        sum
    }

    #[test]
    fn clamped_plate_mode_zero() {
        // Radial clamped eigenfunctions are A J_1(kr)/r + B I_1(kr)/r, so
        // λ = k⁴ with J_1(k)I_2(k) + I_1(k)J_2(k) = 0.
        let f = |k: f64| bessel(1, k, false) * bessel(2, k, true) + bessel(1, k, true) * bessel(2, k, false);
        let (mut a, mut b) = (4.0, 5.5);
        assert!(f(a) * f(b) < 0.0);
        for _ in 0..100 {
            let m = 0.5 * (a + b);
            if f(a) * f(m) <= 0.0 {
                b = m;
            } else {
                a = m;
            }
        }
        let exact = a.powi(4);
        let g = Arc::new(RadialGrid::new(400, 1.0, Grading::Uniform).unwrap());
        let op = ModeOperator::new(g.clone(), 0, vec![0.0; g.len()]).unwrap();
        let l = op.eigenvalues(Weight::Volume, 0.0, 3).unwrap();
        assert!(((l[0] - exact) / exact).abs() < 1e-8, "{} vs {exact}", l[0]);
        assert!(l[0] < l[1] && l[1] < l[2]);
    }

    #[test]
    fn kernel_functions_of_the_liouville_operator() {
        let g = RadialGrid::graded(4000, 200.0, 0.01).unwrap();
        let k = liouville_kernel_check(&g).unwrap();
        assert!(k.v0_max_residual < 1e-6 && k.v1_max_residual < 1e-6, "{k:?}");
        assert_eq!(k.v0_at_zero, 4.0);
        // The bounded ℓ = 1 kernel decays like 1/r, so clamping far out
        // leaves a near-zero eigenvalue.
        assert!(k.nu_l1.abs() < 1e-2, "{k:?}");
    }

    #[test]
    fn ground_state_is_the_solution_itself() {
        // Δ²u = (1/p)·p u^{p−1}u, so ν = 1/p − 1 exactly.
        for p in [10.0, 40.0] {
            let sol = cold_start(p, &SolverOptions::default()).unwrap();
            let m = mode_eigenvalues(&sol, 0, 4).unwrap();
            let ground = m.weighted.iter().copied().fold(f64::INFINITY, f64::min);
            assert!((ground - (1.0 / p - 1.0)).abs() < 1e-8, "{ground}");
            assert_eq!(m.morse_index, 1);
            assert!(m.morse_complete && m.resolved);
        }
    }

    #[test]
    fn translation_identity_matches_resolved_eigenvalues() {
        for p in [20.0, 40.0] {
            let sol = cold_start(p, &SolverOptions::default()).unwrap();
            let m = mode_eigenvalues(&sol, 1, 3).unwrap();
            let t = m.translation.unwrap();
            assert!(m.resolved && m.weighted[0] > 0.0);
            // The discrete value carries a rounding floor of a few 1e-9.
            assert!((m.weighted[0] - t.value).abs() < t.error_bound + 1e-8, "{m:?}");
            assert!((m.weighted[0] - t.value).abs() < 2e-3 * t.value, "{m:?}");
        }
    }

    #[test]
    fn eigenvalues_stable_under_grid_doubling() {
        let coarse = cold_start(10.0, &SolverOptions { intervals: 1000, ..Default::default() }).unwrap();
        let fine = cold_start(10.0, &SolverOptions { intervals: 2000, ..Default::default() }).unwrap();
        for ell in 0..=2 {
            let a = mode_eigenvalues(&coarse, ell, 5).unwrap();
            let b = mode_eigenvalues(&fine, ell, 5).unwrap();
            for (x, y) in a.tracked.iter().zip(&b.tracked).chain(a.volume.iter().zip(&b.volume)) {
                assert!(((x - y) / y).abs() < 1e-4, "ℓ = {ell}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn high_modes_are_monotone_in_ell() {
        let sol = cold_start(10.0, &SolverOptions::default()).unwrap();
        let low: Vec<f64> = (4..=6).map(|l| mode_eigenvalues(&sol, l, 1).unwrap().tracked[0]).collect();
        assert!(low[0] < low[1] && low[1] < low[2], "{low:?}");
        assert!(mode_eigenvalues(&sol, 7, 1).is_err());
        assert!(mode_eigenvalues(&sol, 1, 11).is_err());
    }

    #[test]
    fn shapes_approach_the_kernel_profiles() {
        let br = continuation(10.0, 80.0, StepPolicy::Multiplicative(2.0), &SolverOptions::default()).unwrap();
        let mut prev = [f64::INFINITY; 2];
        for rec in &br.records {
            for ell in 0..=1 {
                let s = kernel_shape(&rec.solution, ell).unwrap();
                assert!(s.projection_residual < prev[ell], "{s:?}");
                prev[ell] = s.projection_residual;
            }
        }
        assert!(prev[1] < 0.01);
        let sol = &br.records[0].solution;
        let op = ModeOperator::linearized(sol, 1).unwrap();
        let pair = op.eigenpair(Weight::Potential, op.eigenvalues(Weight::Potential, 0.0, 1).unwrap()[0]).unwrap();
        let flipped = EigenPair { lambda: pair.lambda, xi: pair.xi.iter().map(|v| -v).collect() };
        let (a, b) = (eigen_shape_check(sol, 1, &pair).unwrap(), eigen_shape_check(sol, 1, &flipped).unwrap());
        assert!((a.b - b.b).abs() < 1e-12 * a.b.abs() && (a.projection_residual - b.projection_residual).abs() < 1e-12);
        assert_eq!(a.a_type_fraction, Some(0.0));
        assert!(eigen_shape_check(sol, 2, &pair).is_err());
    }

    #[test]
    fn symmetrization_check() {
        let g = RadialGrid::graded(200, 1.0, 0.001).unwrap();
        for ell in [0, 1, 3] {
            let d = symmetry_defect(&g, ell).unwrap();
            assert!(d.raw.is_finite() && d.symmetrized < 1e-10, "{d:?}");
        }
        assert!(symmetry_defect(&RadialGrid::graded(800, 1.0, 0.001).unwrap(), 0).is_err());
    }
}
