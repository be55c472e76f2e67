//! The boundary forms `P` and `Q` on spheres `∂B_θ(c)` and the Pohozaev
//! identities they encode.
//!
//! For `u, v` smooth on the closed ball
//!
//! ```text
//! P(u,v) = ∫ −θΔuΔv − θ(∂_νΔu ∂_νv + ∂_νΔv ∂_νu) + Δu ∂_ν⟨x−c,∇v⟩ + Δv ∂_ν⟨x−c,∇u⟩
//! Q_i(u,v) = ∫ ΔuΔv ν_i + ∂_νΔu ∂_iv + ∂_νΔv ∂_iu − Δu ∂_ν∂_iv − Δv ∂_ν∂_iu
//! ```
//!
//! Both are independent of `θ` when `u` and `v` are biharmonic in the
//! punctured ball. Surface data come from [`BoundaryTrace`], built by exact
//! automatic differentiation of a [`ScalarField4`].

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::greenball::{green, green_pole_derivative};
use crate::numerics::autodiff::{consts, dot, lift};
use crate::numerics::{Real, ScalarField4, SphereRuleS3};
use crate::KAPPA;

mod identities;
mod table;

pub use identities::{
    ball_integral, linearized_identities, solution_identities, solution_rule, IdentityResiduals, LinearizedField,
    SolutionField, VolumeWeight,
};
pub use table::{default_theta, green_form_table, theta_sweep, FormKind, GreenFormEntry, ThetaSweep};

/// Surface data of one field on `∂B_θ(c)`, one entry per rule point.
#[derive(Clone, Debug)]
pub struct BoundaryTrace {
    pub center: [f64; 4],
    pub radius: f64,
    rule: Arc<SphereRuleS3>,
    pub value: Vec<f64>,
    pub lap: Vec<f64>,
    /// `∂_νΔu`.
    pub dn_lap: Vec<f64>,
    pub grad: Vec<[f64; 4]>,
    /// `∂_ν ∂_i u`.
    pub dn_grad: Vec<[f64; 4]>,
    pub dn_u: Vec<f64>,
    /// `⟨x−c, ∇u⟩`.
    pub x_dot_grad: Vec<f64>,
    /// `∂_ν⟨x−c, ∇u⟩ = ∂_νu + θ Σ ν_i ∂_ν∂_i u`.
    pub dn_x_dot_grad: Vec<f64>,
}

/// Per-point derivatives of a field: value, `∂_k`, `∂_ν∂_k`, `Σ∂_kk`, `Σ∂_ν∂_kk`.
struct PointData {
    value: f64,
    grad: [f64; 4],
    dn_grad: [f64; 4],
    lap: f64,
    dn_lap: f64,
}

fn point_data<F: ScalarField4>(f: &F, x: [f64; 4], nu: [f64; 4]) -> PointData {
    let mut d = PointData { value: 0.0, grad: [0.0; 4], dn_grad: [0.0; 4], lap: 0.0, dn_lap: 0.0 };
    for k in 0..4 {
        let mut e = [0.0; 4];
        e[k] = 1.0;
        // Outer tangent ν, inner tangents e_k, e_k.
        let r = f.eval(lift(lift(lift(x, e), e), nu));
        d.value = r.v.v.v;
        d.grad[k] = r.v.v.d;
        d.dn_grad[k] = r.d.v.d;
        d.lap += r.v.d.d;
        d.dn_lap += r.d.d.d;
    }
    d
}

impl BoundaryTrace {
    /// Samples `f` on `∂B_radius(center)` at the points of `rule`.
    pub fn new<F: ScalarField4>(f: &F, center: [f64; 4], radius: f64, rule: Arc<SphereRuleS3>) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return invalid(format!("trace radius must be positive, got {radius}"));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return invalid("trace center must be finite");
        }
        let data: Vec<PointData> = rule
            .points
            .par_iter()
            .map(|nu| {
                let x = std::array::from_fn(|i| center[i] + radius * nu[i]);
                point_data(f, x, *nu)
            })
            .collect();
        let mut t = BoundaryTrace {
            center,
            radius,
            rule: rule.clone(),
            value: Vec::with_capacity(data.len()),
            lap: Vec::with_capacity(data.len()),
            dn_lap: Vec::with_capacity(data.len()),
            grad: Vec::with_capacity(data.len()),
            dn_grad: Vec::with_capacity(data.len()),
            dn_u: Vec::with_capacity(data.len()),
            x_dot_grad: Vec::with_capacity(data.len()),
            dn_x_dot_grad: Vec::with_capacity(data.len()),
        };
        for (d, nu) in data.iter().zip(&rule.points) {
            let dn_u = dot(nu, &d.grad);
            t.value.push(d.value);
            t.lap.push(d.lap);
            t.dn_lap.push(d.dn_lap);
            t.grad.push(d.grad);
            t.dn_grad.push(d.dn_grad);
            t.dn_u.push(dn_u);
            t.x_dot_grad.push(radius * dn_u);
            t.dn_x_dot_grad.push(dn_u + radius * dot(nu, &d.dn_grad));
        }
        Ok(t)
    }

    pub fn rule(&self) -> &SphereRuleS3 {
        &self.rule
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    /// Point `c + θν` of rule node `k`.
    pub fn point(&self, k: usize) -> [f64; 4] {
        let nu = self.rule.points[k];
        std::array::from_fn(|i| self.center[i] + self.radius * nu[i])
    }

    /// Trace of `a·u + b·v`; every stored quantity is linear in the field.
    pub fn combine(&self, a: f64, other: &BoundaryTrace, b: f64) -> Result<BoundaryTrace> {
        check_compatible(self, other)?;
        let lin = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| a * p + b * q).collect::<Vec<_>>();
        let lin4 = |x: &[[f64; 4]], y: &[[f64; 4]]| {
            x.iter().zip(y).map(|(p, q)| std::array::from_fn(|i| a * p[i] + b * q[i])).collect::<Vec<[f64; 4]>>()
        };
        Ok(BoundaryTrace {
            center: self.center,
            radius: self.radius,
            rule: self.rule.clone(),
            value: lin(&self.value, &other.value),
            lap: lin(&self.lap, &other.lap),
            dn_lap: lin(&self.dn_lap, &other.dn_lap),
            grad: lin4(&self.grad, &other.grad),
            dn_grad: lin4(&self.dn_grad, &other.dn_grad),
            dn_u: lin(&self.dn_u, &other.dn_u),
            x_dot_grad: lin(&self.x_dot_grad, &other.x_dot_grad),
            dn_x_dot_grad: lin(&self.dn_x_dot_grad, &other.dn_x_dot_grad),
        })
    }

    /// `∫_{∂B} g(k) dσ` over rule nodes, with the embedded error estimate.
    pub fn integrate(&self, g: impl Fn(usize) -> f64) -> FormValue {
        surface_sum(&self.rule, self.radius, |k| {
            let v = g(k);
            (v, v.abs())
        })
    }
}

fn check_compatible(a: &BoundaryTrace, b: &BoundaryTrace) -> Result<()> {
    if a.center != b.center || a.radius != b.radius {
        return invalid("traces live on different spheres");
    }
    if !Arc::ptr_eq(&a.rule, &b.rule) && (a.rule.points != b.rule.points || a.rule.weights != b.rule.weights) {
        return invalid("traces use different sphere rules");
    }
    Ok(())
}

/// A surface integral with its quadrature diagnostics.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FormValue {
    pub value: f64,
    pub theta: f64,
    /// Difference to the embedded coarser rule plus a rounding floor.
    pub error: f64,
    /// Integral of the sum of absolute values of the individual terms, the
    /// natural scale for relative residuals.
    pub scale: f64,
}

/// `θ³ Σ w_k g(k)` for a rule on the unit sphere; `g` returns the integrand
/// and its absolute-term magnitude.
fn surface_sum(rule: &SphereRuleS3, theta: f64, g: impl Fn(usize) -> (f64, f64)) -> FormValue {
    let coarse = rule.coarse_weights();
    let (mut fine, mut rough, mut mag) = (0.0, 0.0, 0.0);
    for k in 0..rule.len() {
        let (v, m) = g(k);
        fine += rule.weights[k] * v;
        rough += coarse[k] * v;
        mag += rule.weights[k] * m;
    }
    let t3 = theta.powi(3);
    FormValue {
        value: t3 * fine,
        theta,
        error: t3 * ((fine - rough).abs() + 64.0 * f64::EPSILON * mag),
        scale: t3 * mag,
    }
}

/// The dilation form `P(u, v)` on the common sphere of the traces.
pub fn form_p(u: &BoundaryTrace, v: &BoundaryTrace) -> Result<FormValue> {
    check_compatible(u, v)?;
    let th = u.radius;
    Ok(surface_sum(&u.rule, th, |k| {
        let terms = [
            -th * u.lap[k] * v.lap[k],
            -th * u.dn_lap[k] * v.dn_u[k],
            -th * v.dn_lap[k] * u.dn_u[k],
            u.lap[k] * v.dn_x_dot_grad[k],
            v.lap[k] * u.dn_x_dot_grad[k],
        ];
        (terms.iter().sum(), terms.iter().map(|t| t.abs()).sum())
    }))
}

/// The translation form `Q_i(u, v)` (`i` is a zero-based axis index).
pub fn form_q(u: &BoundaryTrace, v: &BoundaryTrace, i: usize) -> Result<FormValue> {
    check_compatible(u, v)?;
    if i >= 4 {
        return invalid(format!("direction index {i} is not in 0..4"));
    }
    Ok(surface_sum(&u.rule, u.radius, |k| {
        let nu = u.rule.points[k][i];
        let terms = [
            u.lap[k] * v.lap[k] * nu,
            u.dn_lap[k] * v.grad[k][i],
            v.dn_lap[k] * u.grad[k][i],
            -u.lap[k] * v.dn_grad[k][i],
            -v.lap[k] * u.dn_grad[k][i],
        ];
        (terms.iter().sum(), terms.iter().map(|t| t.abs()).sum())
    }))
}

/// `G(pole, ·)`.
#[derive(Clone, Copy, Debug)]
pub struct GreenPole {
    pub pole: [f64; 4],
}

impl ScalarField4 for GreenPole {
    fn eval<T: Real>(&self, x: [T; 4]) -> T {
        green(&consts::<T, 4>(self.pole), &x)
    }
}

/// `∂_{pole}G(pole, ·)` along `dir`.
#[derive(Clone, Copy, Debug)]
pub struct GreenPoleDerivative {
    pub pole: [f64; 4],
    pub dir: [f64; 4],
}

impl ScalarField4 for GreenPoleDerivative {
    fn eval<T: Real>(&self, x: [T; 4]) -> T {
        green_pole_derivative(self.pole, self.dir, &x)
    }
}

/// Fundamental solution `S(c, x) = −ln|x−c|/(8π²)` of `Δ²`.
#[derive(Clone, Copy, Debug)]
pub struct Fundamental {
    pub center: [f64; 4],
}

impl ScalarField4 for Fundamental {
    fn eval<T: Real>(&self, x: [T; 4]) -> T {
        let d: [T; 4] = std::array::from_fn(|i| x[i].add_f(-self.center[i]));
        dot(&d, &d).ln().scale(-0.5 * KAPPA)
    }
}

/// `|x−c|²`.
#[derive(Clone, Copy, Debug)]
pub struct Quadratic {
    pub center: [f64; 4],
}

impl ScalarField4 for Quadratic {
    fn eval<T: Real>(&self, x: [T; 4]) -> T {
        let d: [T; 4] = std::array::from_fn(|i| x[i].add_f(-self.center[i]));
        dot(&d, &d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::greenball::robin_derivatives;
    use crate::numerics::autodiff::unit;
    use approx::assert_abs_diff_eq;

    fn rule() -> Arc<SphereRuleS3> {
        Arc::new(SphereRuleS3::product(12).unwrap())
    }

    #[test]
    fn fundamental_solution_forms() {
        let c = [0.1, -0.2, 0.05, 0.3];
        let rule = rule();
        for theta in [0.05, 0.2] {
            let t = BoundaryTrace::new(&Fundamental { center: c }, c, theta, rule.clone()).unwrap();
            assert_abs_diff_eq!(form_p(&t, &t).unwrap().value, KAPPA, epsilon = 1e-14);
            for i in 0..4 {
                assert_abs_diff_eq!(form_q(&t, &t, i).unwrap().value, 0.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn quadratic_has_zero_dilation_form() {
        let c = [0.3, 0.0, 0.1, 0.0];
        let t = BoundaryTrace::new(&Quadratic { center: c }, c, 0.1, rule()).unwrap();
        assert_eq!(t.lap[0], 8.0);
        assert_abs_diff_eq!(t.x_dot_grad[0], 2.0 * 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(form_p(&t, &t).unwrap().value, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn green_forms_are_theta_independent() {
        let c = [0.3, 0.0, 0.0, 0.0];
        let f = GreenPole { pole: c };
        let mut p_vals = vec![];
        let mut q_vals = vec![];
        for theta in [0.05, 0.1, 0.2] {
            let t = BoundaryTrace::new(&f, c, theta, rule()).unwrap();
            p_vals.push(form_p(&t, &t).unwrap().value);
            q_vals.push(form_q(&t, &t, 0).unwrap().value);
        }
        for v in &p_vals {
            assert_abs_diff_eq!(*v, KAPPA, epsilon = 1e-12);
        }
        // ∂₁R(c) = κ ∂₁ ln(1 − |x|²) = −2·0.3κ/0.91.
        let expected = -(0.6 / 0.91) * KAPPA;
        assert_abs_diff_eq!(robin_derivatives(c, unit(0), unit(0)).0, expected, epsilon = 1e-15);
        for v in &q_vals {
            assert_abs_diff_eq!(*v, expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn forms_are_symmetric_and_bilinear() {
        let c = [0.0, 0.2, 0.0, -0.1];
        let rule = rule();
        let a = BoundaryTrace::new(&GreenPole { pole: c }, c, 0.1, rule.clone()).unwrap();
        let b = BoundaryTrace::new(&GreenPoleDerivative { pole: [0.4, 0.0, 0.1, 0.0], dir: unit(2) }, c, 0.1, rule.clone())
            .unwrap();
        let q = BoundaryTrace::new(&Quadratic { center: [0.1; 4] }, c, 0.1, rule).unwrap();
        let pab = form_p(&a, &b).unwrap().value;
        assert_abs_diff_eq!(pab, form_p(&b, &a).unwrap().value, epsilon = 1e-15);
        assert_abs_diff_eq!(form_q(&a, &b, 1).unwrap().value, form_q(&b, &a, 1).unwrap().value, epsilon = 1e-15);
        let mix = a.combine(2.0, &q, -3.0).unwrap();
        let lhs = form_p(&mix, &b).unwrap().value;
        let rhs = 2.0 * pab - 3.0 * form_p(&q, &b).unwrap().value;
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12 * rhs.abs().max(1.0));
    }

    #[test]
    fn mismatched_traces_are_rejected() {
        let f = Quadratic { center: [0.0; 4] };
        let a = BoundaryTrace::new(&f, [0.0; 4], 0.1, rule()).unwrap();
        let b = BoundaryTrace::new(&f, [0.0; 4], 0.2, rule()).unwrap();
        assert!(form_p(&a, &b).is_err());
        assert!(form_q(&a, &a, 4).is_err());
        assert!(BoundaryTrace::new(&f, [0.0; 4], 0.0, rule()).is_err());
    }
}
