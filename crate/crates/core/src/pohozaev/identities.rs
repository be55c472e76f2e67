use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use super::{form_p, form_q, BoundaryTrace};
use crate::error::{invalid, Result};
use crate::numerics::autodiff::{dot, unit};
use crate::numerics::{gauss_rule, Dilation, Directional, Real, ScalarField4, SphereRuleS3};
use crate::solver::{pos_pow, RadialSolution};
use crate::S3_AREA;

/// Number of even Taylor coefficients kept near the origin.
const SERIES_TERMS: usize = 14;

/// A radial solution as a field on `R⁴`.
///
/// Inside `|x| < ε_p/2` the solution is the even power series in `|x|²`
/// generated by `Δ²u = u^p` from `u(0)` and `Δu(0)`, which avoids the
/// `1/r` factors of the radial chain rule. Elsewhere it is the quartic Taylor
/// polynomial in `|x| − r₀` about `r₀ = |x|` itself, whose value and first
/// four derivatives at the evaluation point are exact for the interpolated
/// profile.
#[derive(Clone, Copy, Debug)]
pub struct SolutionField<'a> {
    sol: &'a RadialSolution,
    series: [f64; SERIES_TERMS],
    r_series: f64,
}

impl<'a> SolutionField<'a> {
    pub fn new(sol: &'a RadialSolution) -> Self {
        let p = sol.p;
        let u0 = sol.u.values[0];
        let w0 = sol.w.values[0];
        let mut a = [0.0; SERIES_TERMS];
        a[0] = u0;
        a[1] = w0 / 8.0;
        // g = (u/u0)^p by Miller's recurrence; a_{n+2} from Δ²(s^{n+2}) with s = |x|².
        let mut g = [0.0; SERIES_TERMS];
        g[0] = 1.0;
        let u0p = u0.powf(p);
        for n in 0..SERIES_TERMS - 2 {
            if n > 0 {
                let mut acc = 0.0;
                for k in 1..=n {
                    acc += ((p + 1.0) * k as f64 - n as f64) * (a[k] / u0) * g[n - k];
                }
                g[n] = acc / n as f64;
            }
            let m = 2.0 * n as f64;
            a[n + 2] = u0p * g[n] / ((m + 2.0) * (m + 4.0) * (m + 4.0) * (m + 6.0));
        }
        SolutionField { sol, series: a, r_series: 0.5 * sol.eps() }
    }

    pub fn solution(&self) -> &RadialSolution {
        self.sol
    }

    /// `(U(r), U'(r))`.
    pub fn radial(&self, r: f64) -> (f64, f64) {
        if r < self.r_series {
            let s = r * r;
            let (mut v, mut d) = (0.0, 0.0);
            for k in (0..SERIES_TERMS).rev() {
                v = v * s + self.series[k];
                if k > 0 {
                    d = d * s + 2.0 * k as f64 * self.series[k];
                }
            }
            (v, d * r)
        } else {
            let j = self.sol.jet(r);
            (j[0], j[1])
        }
    }
}

impl ScalarField4 for SolutionField<'_> {
    fn eval<T: Real>(&self, x: [T; 4]) -> T {
        let s = dot(&x, &x);
        let s0 = s.re();
        if s0 < self.r_series * self.r_series {
            let mut v = T::cst(0.0);
            for k in (0..SERIES_TERMS).rev() {
                v = (v * s).add_f(self.series[k]);
            }
            return v;
        }
        let r = s.sqrt();
        let r0 = r.re();
        let d = r.add_f(-r0);
        let j = self.sol.jet4(r0);
        let mut v = d.scale(j[4] / 24.0);
        v = (v.add_f(j[3] / 6.0)) * d;
        v = (v.add_f(j[2] / 2.0)) * d;
        v = (v.add_f(j[1])) * d;
        v.add_f(j[0])
    }
}

/// Angular weight in a volume integral of a radial function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum VolumeWeight {
    /// `∫ F(|x|) dx`.
    Radial,
    /// `∫ F(|x|) x_i/|x| dx`.
    FirstMoment(usize),
}

/// `∫_{B_θ(c)} F(|x|) [x_i/|x|] dx` reduced to one radial integral. The part
/// of the sphere `|x| = r` inside the ball is a cap about `ĉ` of half-angle
/// `ψ₀`, with area `2π(ψ₀ − sin ψ₀ cos ψ₀)` and first moment
/// `(4π/3) sin³ψ₀ ĉ`. Gauss panels are graded toward the kinks at
/// `r = |θ ± |c||` and toward the origin on the scale `feature`.
pub fn ball_integral(f: impl Fn(f64) -> f64, center: [f64; 4], theta: f64, weight: VolumeWeight, feature: f64) -> Result<f64> {
    if !(theta > 0.0) || !(feature > 0.0) {
        return invalid("ball radius and feature scale must be positive");
    }
    if let VolumeWeight::FirstMoment(i) = weight {
        if i >= 4 {
            return invalid(format!("direction index {i} is not in 0..4"));
        }
    }
    let d = dot(&center, &center).sqrt();
    let cap = |r: f64| -> f64 {
        if d == 0.0 {
            return match weight {
                VolumeWeight::Radial => S3_AREA,
                VolumeWeight::FirstMoment(_) => 0.0,
            };
        }
        let cos = ((r * r + d * d - theta * theta) / (2.0 * r * d)).clamp(-1.0, 1.0);
        let psi = cos.acos();
        let sin = psi.sin();
        match weight {
            VolumeWeight::Radial => 2.0 * PI * (psi - sin * cos),
            VolumeWeight::FirstMoment(i) => 4.0 * PI / 3.0 * sin.powi(3) * center[i] / d,
        }
    };
    let mut breaks = vec![0.0, (theta - d).abs(), d + theta];
    if d > theta {
        breaks[0] = d - theta;
        breaks.remove(1);
    }
    breaks.dedup();
    let q = gauss_rule(16, -1.0, 1.0)?;
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let h_a = if a == 0.0 { (0.25 * feature).min(0.25 * (b - a)) } else { 1e-7 * (b - a) };
        let h_b = 1e-7 * (b - a);
        for (lo, hi) in graded_panels(a, b, h_a, h_b) {
            let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
            for (&t, &wt) in q.nodes.iter().zip(&q.weights) {
                let r = mid + half * t;
                total += half * wt * f(r) * r.powi(3) * cap(r);
            }
        }
    }
    Ok(total)
}

/// Panels on `[a, b]` doubling in size away from both ends.
fn graded_panels(a: f64, b: f64, h_a: f64, h_b: f64) -> Vec<(f64, f64)> {
    let mid = 0.5 * (a + b);
    let mut left = vec![a];
    let mut h = h_a;
    while left[left.len() - 1] + h < mid {
        left.push(left[left.len() - 1] + h);
        h *= 2.0;
    }
    let mut right = vec![b];
    let mut h = h_b;
    while right[right.len() - 1] - h > mid {
        right.push(right[right.len() - 1] - h);
        h *= 2.0;
    }
    left.push(mid);
    left.extend(right.into_iter().rev());
    left.windows(2).map(|w| (w[0], w[1])).collect()
}

/// Sphere rule for traces of a solution on `∂B_θ(c)`: an exact product rule
/// for centred spheres, otherwise a rule graded toward the point of the sphere
/// nearest to the concentration point at the origin.
pub fn solution_rule(sol: &RadialSolution, center: [f64; 4], theta: f64) -> Result<Arc<SphereRuleS3>> {
    let d = dot(&center, &center).sqrt();
    if d == 0.0 {
        return Ok(Arc::new(SphereRuleS3::product(8)?));
    }
    let axis = center.map(|c| -c / d);
    let feature = sol.eps().max((theta - d).abs());
    let scale = (0.25 * feature / theta).min(0.5);
    Ok(Arc::new(SphereRuleS3::graded_polar(scale, 12, 8, axis)?))
}

/// Exact solutions of the linearised equation built from `u`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum LinearizedField {
    Zero,
    /// `∂_k u`.
    Translation(usize),
    /// `x·∇u + 4u/(p−1)`.
    Dilation,
}

/// Both sides of the translation (`Q_i`, all four directions) and dilation
/// (`P`) identities, with residuals relative to the size of the terms.
#[derive(Clone, Debug, Serialize)]
pub struct IdentityResiduals {
    pub p: f64,
    pub center: [f64; 4],
    pub theta: f64,
    pub q_lhs: [f64; 4],
    pub q_rhs: [f64; 4],
    /// Largest of the four relative `Q` residuals.
    pub q_residual: f64,
    pub p_lhs: f64,
    pub p_rhs: f64,
    pub p_residual: f64,
    /// Largest embedded quadrature error estimate among the surface terms.
    pub quadrature_error: f64,
}

fn check_ball(center: [f64; 4], theta: f64) -> Result<()> {
    if !(theta > 0.0) {
        return invalid(format!("θ must be positive, got {theta}"));
    }
    let d = dot(&center, &center).sqrt();
    if !(d + theta < 1.0) {
        return invalid(format!("B_θ(c) with |c| = {d}, θ = {theta} leaves the unit ball"));
    }
    Ok(())
}

fn relative(a: f64, b: f64, scale: f64) -> f64 {
    let s = scale.max(a.abs()).max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

/// Residuals of `Q_i(u,u) = (2/(p+1))∫_{∂B}(u⁺)^{p+1}ν_i` and
/// `P(u,u) = (8/(p+1))∫_B(u⁺)^{p+1} − (2θ/(p+1))∫_{∂B}(u⁺)^{p+1}`.
pub fn solution_identities(sol: &RadialSolution, center: [f64; 4], theta: f64) -> Result<IdentityResiduals> {
    check_ball(center, theta)?;
    let p = sol.p;
    let field = SolutionField::new(sol);
    let rule = solution_rule(sol, center, theta)?;
    let tu = BoundaryTrace::new(&field, center, theta, rule.clone())?;
    let up1: Vec<f64> = tu.value.iter().map(|&u| pos_pow(u, p + 1.0)).collect();
    let k1 = 2.0 / (p + 1.0);
    let mut out = IdentityResiduals {
        p,
        center,
        theta,
        q_lhs: [0.0; 4],
        q_rhs: [0.0; 4],
        q_residual: 0.0,
        p_lhs: 0.0,
        p_rhs: 0.0,
        p_residual: 0.0,
        quadrature_error: 0.0,
    };
    for i in 0..4 {
        let lhs = form_q(&tu, &tu, i)?;
        let rhs = tu.integrate(|k| up1[k] * rule.points[k][i]);
        out.q_lhs[i] = lhs.value;
        out.q_rhs[i] = k1 * rhs.value;
        out.q_residual = out.q_residual.max(relative(lhs.value, k1 * rhs.value, lhs.scale.max(k1 * rhs.scale)));
        out.quadrature_error = out.quadrature_error.max(lhs.error).max(k1 * rhs.error);
    }
    let lhs = form_p(&tu, &tu)?;
    let surf = tu.integrate(|k| up1[k]);
    let vol = ball_integral(|r| pos_pow(field.radial(r).0, p + 1.0), center, theta, VolumeWeight::Radial, sol.eps())?;
    let rhs = 4.0 * k1 * vol - theta * k1 * surf.value;
    out.p_lhs = lhs.value;
    out.p_rhs = rhs;
    out.p_residual = relative(lhs.value, rhs, lhs.scale.max(4.0 * k1 * vol + theta * k1 * surf.scale));
    out.quadrature_error = out.quadrature_error.max(lhs.error).max(theta * k1 * surf.error);
    Ok(out)
}

/// Residuals of `Q_i(ξ,u) = ∫_{∂B}(u⁺)^p ξ ν_i` and
/// `P(ξ,u) = 4∫_B(u⁺)^p ξ − θ∫_{∂B}(u⁺)^p ξ` for an exact linearised solution `ξ`.
pub fn linearized_identities(
    sol: &RadialSolution,
    xi: LinearizedField,
    center: [f64; 4],
    theta: f64,
) -> Result<IdentityResiduals> {
    check_ball(center, theta)?;
    let p = sol.p;
    let field = SolutionField::new(sol);
    let rule = solution_rule(sol, center, theta)?;
    let tu = BoundaryTrace::new(&field, center, theta, rule.clone())?;
    let c = 4.0 / (p - 1.0);
    let tx = match xi {
        LinearizedField::Zero => tu.combine(0.0, &tu, 0.0)?,
        LinearizedField::Translation(k) => {
            if k >= 4 {
                return invalid(format!("direction index {k} is not in 0..4"));
            }
            BoundaryTrace::new(&Directional { inner: field, dir: unit(k) }, center, theta, rule.clone())?
        }
        LinearizedField::Dilation => BoundaryTrace::new(&Dilation { inner: field, c }, center, theta, rule.clone())?,
    };
    let upxi: Vec<f64> = tu.value.iter().zip(&tx.value).map(|(&u, &x)| pos_pow(u, p) * x).collect();
    let mut out = IdentityResiduals {
        p,
        center,
        theta,
        q_lhs: [0.0; 4],
        q_rhs: [0.0; 4],
        q_residual: 0.0,
        p_lhs: 0.0,
        p_rhs: 0.0,
        p_residual: 0.0,
        quadrature_error: 0.0,
    };
    for i in 0..4 {
        let lhs = form_q(&tx, &tu, i)?;
        let rhs = tu.integrate(|k| upxi[k] * rule.points[k][i]);
        out.q_lhs[i] = lhs.value;
        out.q_rhs[i] = rhs.value;
        out.q_residual = out.q_residual.max(relative(lhs.value, rhs.value, lhs.scale.max(rhs.scale)));
        out.quadrature_error = out.quadrature_error.max(lhs.error).max(rhs.error);
    }
    let eps = sol.eps();
    let vol = match xi {
        LinearizedField::Zero => 0.0,
        LinearizedField::Translation(k) => ball_integral(
            |r| {
                let (u, du) = field.radial(r);
                pos_pow(u, p) * du
            },
            center,
            theta,
            VolumeWeight::FirstMoment(k),
            eps,
        )?,
        LinearizedField::Dilation => ball_integral(
            |r| {
                let (u, du) = field.radial(r);
                pos_pow(u, p) * (r * du + c * u)
            },
            center,
            theta,
            VolumeWeight::Radial,
            eps,
        )?,
    };
    let vol_abs = match xi {
        LinearizedField::Zero => 0.0,
        LinearizedField::Translation(_) => ball_integral(
            |r| {
                let (u, du) = field.radial(r);
                (pos_pow(u, p) * du).abs()
            },
            center,
            theta,
            VolumeWeight::Radial,
            eps,
        )?,
        LinearizedField::Dilation => vol.abs(),
    };
    let lhs = form_p(&tx, &tu)?;
    let surf = tu.integrate(|k| upxi[k]);
    let rhs = 4.0 * vol - theta * surf.value;
    out.p_lhs = lhs.value;
    out.p_rhs = rhs;
    out.p_residual = relative(lhs.value, rhs, lhs.scale.max(4.0 * vol_abs + theta * surf.scale));
    out.quadrature_error = out.quadrature_error.max(lhs.error).max(theta * surf.error);
    Ok(out)
}
