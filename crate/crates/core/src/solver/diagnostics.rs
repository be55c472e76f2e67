use std::f64::consts::PI;

use serde::Serialize;

use super::continuation::Branch;
use super::{pos_pow, RadialSolution};
use crate::bubble::{bubble_b, BubbleProfile, Eta0Solution};
use crate::error::{invalid, Error, Result};
use crate::greenball::robin;
use crate::S3_AREA;

/// Scalar summaries of one solution.
#[derive(Clone, Debug, Serialize)]
pub struct Diagnostics {
    pub p: f64,
    pub u_max: f64,
    /// `ε_p = (p u_max^{p−1})^{−1/4}`.
    pub eps_p: f64,
    /// `C_p = ∫(u⁺)^p`.
    pub c_p: f64,
    /// `p ∫|Δu|²`.
    pub energy: f64,
    /// `p ∫(u⁺)^{p+1}`, equal to the energy for clamped solutions.
    pub energy_identity: f64,
    /// `(p/u_max) C_p`.
    pub mass_check: f64,
    /// `64π²(1 − 13/(3p))`.
    pub mass_prediction: f64,
    pub newton_residual: f64,
    pub boundary_u: f64,
    pub boundary_du: f64,
    /// Whether `u(0)` is the maximum over the grid.
    pub max_at_origin: bool,
}

pub fn diagnostics(sol: &RadialSolution) -> Diagnostics {
    let p = sol.p;
    let g = &sol.grid;
    let u = &sol.u.values;
    let u_max = sol.u_max();
    let up: Vec<f64> = u.iter().map(|&v| pos_pow(v, p)).collect();
    let up1: Vec<f64> = u.iter().zip(&up).map(|(&v, &q)| if v > 0.0 { v * q } else { 0.0 }).collect();
    let w2: Vec<f64> = sol.w.values.iter().map(|w| w * w).collect();
    let c_p = S3_AREA * g.integrate_r3(&up);
    let (boundary_u, boundary_du) = sol.boundary_values();
    Diagnostics {
        p,
        u_max,
        eps_p: sol.eps(),
        c_p,
        energy: p * S3_AREA * g.integrate_r3(&w2),
        energy_identity: p * S3_AREA * g.integrate_r3(&up1),
        mass_check: p / u_max * c_p,
        mass_prediction: 64.0 * PI * PI * (1.0 - 13.0 / (3.0 * p)),
        newton_residual: sol.newton_residual,
        boundary_u,
        boundary_du,
        max_at_origin: u.iter().all(|&v| v <= u_max),
    }
}

/// Distances between the rescaled solution `Z_p(y) = (p/u_max)(u(ε_p y) − u_max)`
/// and the bubble expansion `Z + η₀/p` on `|y| ≤ y_max`.
#[derive(Clone, Debug, Serialize)]
pub struct RescaledProfiles {
    pub p: f64,
    pub y_max: f64,
    pub z_at_zero: f64,
    pub dz_at_zero: f64,
    /// `sup |Z_p − Z|`.
    pub d0: f64,
    /// `sup |p(Z_p − Z) − η₀|`.
    pub d1: f64,
    /// `sup |p²(Z_p − Z − η₀/p)|`.
    pub d2: f64,
}

pub fn rescaled_profiles(sol: &RadialSolution, eta0: &Eta0Solution, y_max: f64) -> Result<RescaledProfiles> {
    let eps = sol.eps();
    if !(y_max > 0.0) || eps * y_max >= 1.0 {
        return invalid(format!("ε_p·y_max = {} exceeds the unit ball", eps * y_max));
    }
    if y_max > eta0.eta.grid.r_max {
        return invalid("y_max exceeds the η₀ grid");
    }
    let (p, u_max) = (sol.p, sol.u_max());
    let bubble = BubbleProfile;
    let samples = 1000;
    let (mut d0, mut d1) = (0.0_f64, 0.0_f64);
    for k in 0..=samples {
        let y = y_max * k as f64 / samples as f64;
        let zp = p / u_max * (sol.u.at(eps * y) - u_max);
        let dz = zp - bubble.z(y);
        d0 = d0.max(dz.abs());
        d1 = d1.max((p * dz - eta0.eta_at(y)).abs());
    }
    let z_at_zero = p / u_max * (sol.u.at(0.0) - u_max);
    let dz_at_zero = p / u_max * eps * sol.du[0];
    Ok(RescaledProfiles { p, y_max, z_at_zero, dz_at_zero, d0, d1, d2: p * d1 })
}

/// Constants fitted along a branch and their predicted values.
#[derive(Clone, Debug, Serialize)]
pub struct AsymptoticReport {
    pub robin_at_origin: f64,
    /// Fit of `u_max/√e − 1 + ln p/(p−1) ≈ c₁/p + d/p²`.
    pub c1_fit: f64,
    pub c1_predicted: f64,
    /// Fit of `ln ε_p + p/8 ≈ c₂ + d/p`.
    pub c2_fit: f64,
    pub c2_predicted: f64,
    /// Richardson limit of `p C_p` in `1/p`.
    pub pcp_limit: f64,
    pub pcp_target: f64,
    /// `p C_p` at the largest exponent.
    pub pcp_last: f64,
    /// Slope of `ln |mass_check − 64π²(1 − 13/(3p))|` against `ln p`
    /// (negative: decay rate).
    pub mass_residual_exponent: f64,
    pub u_max_monotone: bool,
    pub u_max_last: f64,
}

/// Least squares `y ≈ Σ c_k φ_k(p)`.
fn fit(ps: &[f64], ys: &[f64], basis: &[&dyn Fn(f64) -> f64]) -> Result<Vec<f64>> {
    let m = basis.len();
    let a = nalgebra::DMatrix::from_fn(ps.len(), m, |i, k| basis[k](ps[i]));
    let b = nalgebra::DVector::from_column_slice(ys);
    let svd = a.svd(true, true);
    let sv = &svd.singular_values;
    let cond = sv.max() / sv.min();
    if !cond.is_finite() || cond > 1e12 {
        return Err(Error::AccuracyFailure(format!("ill-conditioned fit (condition {cond:e})")));
    }
    let x = svd.solve(&b, 0.0).map_err(|e| Error::AccuracyFailure(e.to_string()))?;
    Ok(x.iter().copied().collect())
}

/// Fits the large-`p` constants on the records with `p ≥ p_last/2` (the top
/// octave) and compares them with the values predicted from `R(0)`.
pub fn asymptotic_report(branch: &Branch) -> Result<AsymptoticReport> {
    let recs = &branch.records;
    if recs.len() < 4 {
        return Err(Error::AccuracyFailure("need at least four records".into()));
    }
    let (p_first, p_last) = (recs[0].p, recs[recs.len() - 1].p);
    if p_last < 8.0 * p_first {
        return Err(Error::AccuracyFailure(format!(
            "branch spans p ∈ [{p_first}, {p_last}], less than a factor 8"
        )));
    }
    let psi = robin(&[0.0; 4]);
    let ln_b = bubble_b().ln();
    let c1_predicted = -32.0 * PI * PI * psi + 2.0 * ln_b + 8.0 / 3.0;
    let c2_predicted = 8.0 * PI * PI * psi - 0.5 * ln_b - 13.0 / 24.0;

    let top: Vec<_> = recs.iter().filter(|r| r.p >= 0.5 * p_last * (1.0 - 1e-12)).collect();
    if top.len() < 2 {
        return Err(Error::AccuracyFailure("fewer than two records in the top octave".into()));
    }
    let ps: Vec<f64> = top.iter().map(|r| r.p).collect();
    let sqrt_e = 0.5f64.exp();
    let y1: Vec<f64> = top
        .iter()
        .map(|r| r.diagnostics.u_max / sqrt_e - 1.0 + r.p.ln() / (r.p - 1.0))
        .collect();
    let c1 = fit(&ps, &y1, &[&|p| 1.0 / p, &|p| 1.0 / (p * p)])?;
    let y2: Vec<f64> = top.iter().map(|r| r.diagnostics.eps_p.ln() + r.p / 8.0).collect();
    let c2 = fit(&ps, &y2, &[&|_| 1.0, &|p| 1.0 / p])?;
    let y3: Vec<f64> = top.iter().map(|r| r.p * r.diagnostics.c_p).collect();
    let pcp = fit(&ps, &y3, &[&|_| 1.0, &|p| 1.0 / p])?;

    let all_p: Vec<f64> = recs.iter().map(|r| r.p.ln()).collect();
    let mres: Vec<f64> = recs
        .iter()
        .map(|r| (r.diagnostics.mass_check - r.diagnostics.mass_prediction).abs().ln())
        .collect();
    let slope = fit(&all_p, &mres, &[&|_| 1.0, &|x| x])?[1];

    let umax: Vec<f64> = recs.iter().map(|r| r.diagnostics.u_max).collect();
    let dec = umax.windows(2).all(|w| w[1] <= w[0]);
    let inc = umax.windows(2).all(|w| w[1] >= w[0]);
    Ok(AsymptoticReport {
        robin_at_origin: psi,
        c1_fit: c1[0],
        c1_predicted,
        c2_fit: c2[0],
        c2_predicted,
        pcp_limit: pcp[0],
        pcp_target: 64.0 * PI * PI * sqrt_e,
        pcp_last: *y3.last().unwrap(),
        mass_residual_exponent: slope,
        u_max_monotone: dec || inc,
        u_max_last: *umax.last().unwrap(),
    })
}
