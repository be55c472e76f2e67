//! Boggio's Green function of `Δ²` on the unit ball of `R⁴` with clamped
//! boundary conditions, its regular part, the Robin function and the
//! Kirchhoff–Routh functional.
//!
//! With `[x,y]² = |x−y|² + (1−|x|²)(1−|y|²)` and `M = [x,y]/|x−y|`,
//!
//! ```text
//! G(x,y) = κ ∫₁^M (v²−1)/v³ dv = κ (ln M + 1/(2M²) − 1/2),   κ = 1/(8π²).
//! ```
//!
//! Everything is written over [`Real`], so derivatives of any order come from
//! dual numbers rather than difference quotients.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::numerics::autodiff::{consts, dot, lift, lift_const, Dual, Real};
use crate::numerics::gauss_rule;
use crate::KAPPA;

/// Minimum `|eigenvalue|` of the Kirchhoff–Routh Hessian that counts as non-degenerate.
pub const NONDEGENERACY_GATE: f64 = 1e-6;

fn norm2<T: Real>(x: &[T; 4]) -> T {
    dot(x, x)
}

fn dist2<T: Real>(x: &[T; 4], y: &[T; 4]) -> T {
    let d: [T; 4] = std::array::from_fn(|i| x[i] - y[i]);
    dot(&d, &d)
}

/// `(1 − |x|²)(1 − |y|²)`.
fn boundary_product<T: Real>(x: &[T; 4], y: &[T; 4]) -> T {
    (T::cst(1.0) - norm2(x)) * (T::cst(1.0) - norm2(y))
}

/// `ln(1+A)/2 − A/(2(1+A))`, with its power series for small `A` where the two
/// terms cancel to leading order.
fn boggio_primitive<T: Real>(a: T) -> T {
    if a.re() < 0.05 {
        // Σ_{k≥2} (−1)^k (k−1)/k A^k / 2; 14 terms reach rounding for A < 0.05.
        let mut s = T::cst(0.0);
        let mut ak = a * a;
        for k in 2..=15 {
            let c = if k % 2 == 0 { 1.0 } else { -1.0 } * (k - 1) as f64 / k as f64;
            s = s + ak.scale(0.5 * c);
            ak = ak * a;
        }
        s
    } else {
        a.ln_1p().scale(0.5) - (a / a.add_f(1.0)).scale(0.5)
    }
}

/// Boggio's Green function `G(x, y)` without argument checks.
pub fn green<T: Real>(x: &[T; 4], y: &[T; 4]) -> T {
    let a = boundary_product(x, y) / dist2(x, y);
    boggio_primitive(a).scale(KAPPA)
}

/// Regular part `H(x,y) = G(x,y) + κ ln|x−y| = κ(ln[x,y] − P/(2[x,y]²))`,
/// `P = (1−|x|²)(1−|y|²)`. Smooth on the whole ball including the diagonal.
pub fn regular_part<T: Real>(x: &[T; 4], y: &[T; 4]) -> T {
    let p = boundary_product(x, y);
    let bracket2 = dist2(x, y) + p;
    (bracket2.ln().scale(0.5) - (p / bracket2).scale(0.5)).scale(KAPPA)
}

/// Robin function `R(x) = H(x,x) = κ(ln(1−|x|²) − 1/2)`.
pub fn robin<T: Real>(x: &[T; 4]) -> T {
    ((-norm2(x)).ln_1p().add_f(-0.5)).scale(KAPPA)
}

fn check_interior(x: &[f64; 4]) -> Result<()> {
    let n = norm2(x);
    if !n.is_finite() || n >= 1.0 {
        return invalid(format!("point {x:?} is not inside the unit ball"));
    }
    Ok(())
}

/// Checked evaluator for `G`, `H` and `R`, with a numerical `v`-quadrature
/// kept as an independent oracle.
#[derive(Clone, Copy, Debug)]
pub struct BallGreen {
    /// Gauss points for the `v`-integral in the quadrature oracle.
    pub quad_order: usize,
}

impl Default for BallGreen {
    fn default() -> Self {
        BallGreen { quad_order: 40 }
    }
}

impl BallGreen {
    pub fn g(&self, x: [f64; 4], y: [f64; 4]) -> Result<f64> {
        check_interior(&x)?;
        check_interior(&y)?;
        if dist2(&x, &y) == 0.0 {
            return Err(Error::SingularArgument(format!("G(x, y) with x = y = {x:?}")));
        }
        Ok(green(&x, &y))
    }

    pub fn h(&self, x: [f64; 4], y: [f64; 4]) -> Result<f64> {
        check_interior(&x)?;
        check_interior(&y)?;
        Ok(regular_part(&x, &y))
    }

    pub fn robin(&self, x: [f64; 4]) -> Result<f64> {
        check_interior(&x)?;
        Ok(robin(&x))
    }

    /// `G` by Gauss quadrature of `κ∫₁^M (v²−1)/v³ dv` in the variable
    /// `t = ln v`, where the integrand `1 − e^{−2t}` is smooth.
    pub fn g_quadrature(&self, x: [f64; 4], y: [f64; 4]) -> Result<f64> {
        check_interior(&x)?;
        check_interior(&y)?;
        let d2 = dist2(&x, &y);
        if d2 == 0.0 {
            return Err(Error::SingularArgument(format!("G(x, y) with x = y = {x:?}")));
        }
        let m = ((d2 + boundary_product(&x, &y)) / d2).sqrt();
        let q = gauss_rule(self.quad_order, 0.0, m.ln())?;
        Ok(KAPPA * q.integrate(|t| 1.0 - (-2.0 * t).exp()))
    }

    /// Diagonal limit of `H` from the quadrature form of `G`: symmetric
    /// differences `y = x ± δe` cancel the linear term and one Richardson
    /// step in `δ` removes the quadratic one.
    pub fn robin_quadrature_limit(&self, x: [f64; 4]) -> Result<f64> {
        check_interior(&x)?;
        let n = norm2(&x).sqrt();
        let e = if n > 0.0 { x.map(|v| v / n) } else { [1.0, 0.0, 0.0, 0.0] };
        let h_sym = |delta: f64| -> Result<f64> {
            let mut s = 0.0;
            for sign in [-1.0, 1.0] {
                let y = std::array::from_fn(|i| x[i] + sign * delta * e[i]);
                s += self.g_quadrature(x, y)? + KAPPA * delta.ln();
            }
            Ok(0.5 * s)
        };
        let delta = 1e-3 * (1.0 - n);
        let (h1, h2) = (h_sym(delta)?, h_sym(0.5 * delta)?);
        Ok((4.0 * h2 - h1) / 3.0)
    }
}

/// `Ψ_k(a) = Σ_j [R(a_j) + Σ_{m≠j} G(a_j, a_m)]` on flattened coordinates.
fn psi_generic<T: Real>(a: &[T]) -> T {
    let k = a.len() / 4;
    let pt = |j: usize| -> [T; 4] { std::array::from_fn(|i| a[4 * j + i]) };
    let mut s = T::cst(0.0);
    for j in 0..k {
        let aj = pt(j);
        s = s + robin(&aj);
        for m in 0..k {
            if m != j {
                s = s + green(&aj, &pt(m));
            }
        }
    }
    s
}

fn psi_gradient(a: &[f64]) -> Vec<f64> {
    (0..a.len())
        .map(|q| {
            let v: Vec<Dual<f64>> =
                a.iter().enumerate().map(|(i, &x)| Dual::var(x, if i == q { 1.0 } else { 0.0 })).collect();
            psi_generic(&v).d
        })
        .collect()
}

fn psi_hessian(a: &[f64]) -> DMatrix<f64> {
    let n = a.len();
    let mut h = DMatrix::zeros(n, n);
    for p in 0..n {
        for q in p..n {
            let v: Vec<Dual<Dual<f64>>> = a
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let inner = Dual::var(x, if i == q { 1.0 } else { 0.0 });
                    Dual::new(inner, Dual::new(if i == p { 1.0 } else { 0.0 }, 0.0))
                })
                .collect();
            let val = psi_generic(&v).d.d;
            h[(p, q)] = val;
            h[(q, p)] = val;
        }
    }
    h
}

/// Spike locations with the value, gradient and Hessian of `Ψ_k`.
#[derive(Clone, Debug, Serialize)]
pub struct KRConfiguration {
    pub k: usize,
    pub points: Vec<[f64; 4]>,
    pub psi: f64,
    pub gradient: Vec<f64>,
    pub hessian: Vec<Vec<f64>>,
    /// Eigenvalues of the Hessian in increasing order.
    pub hessian_eigs: Vec<f64>,
    pub min_abs_eig: f64,
    pub nondegenerate: bool,
}

impl KRConfiguration {
    pub fn gradient_norm(&self) -> f64 {
        self.gradient.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

fn validate_points(points: &[[f64; 4]]) -> Result<()> {
    if points.is_empty() {
        return invalid("Kirchhoff–Routh functional needs at least one point");
    }
    for p in points {
        check_interior(p)?;
    }
    for j in 0..points.len() {
        for m in j + 1..points.len() {
            if dist2(&points[j], &points[m]) == 0.0 {
                return invalid(format!("points {j} and {m} coincide"));
            }
        }
    }
    Ok(())
}

/// Evaluates `Ψ_k` with its gradient, Hessian and Hessian spectrum.
pub fn kirchhoff_routh(points: &[[f64; 4]]) -> Result<KRConfiguration> {
    validate_points(points)?;
    let a: Vec<f64> = points.iter().flatten().copied().collect();
    let hess = psi_hessian(&a);
    let mut eigs: Vec<f64> = SymmetricEigen::new(hess.clone()).eigenvalues.iter().copied().collect();
    eigs.sort_by(|x, y| x.total_cmp(y));
    let min_abs_eig = eigs.iter().map(|e| e.abs()).fold(f64::INFINITY, f64::min);
    Ok(KRConfiguration {
        k: points.len(),
        points: points.to_vec(),
        psi: psi_generic(&a),
        gradient: psi_gradient(&a),
        hessian: (0..a.len()).map(|i| hess.row(i).iter().copied().collect()).collect(),
        hessian_eigs: eigs,
        min_abs_eig,
        nondegenerate: min_abs_eig > NONDEGENERACY_GATE,
    })
}

/// Newton iteration on `∇Ψ_k = 0`, damped so the iterates stay inside the ball
/// and the points stay distinct.
pub fn find_kr_critical(initial: &[[f64; 4]], tol: f64) -> Result<KRConfiguration> {
    if !(tol > 0.0) {
        return invalid(format!("tolerance must be positive, got {tol}"));
    }
    validate_points(initial)?;
    let mut a: Vec<f64> = initial.iter().flatten().copied().collect();
    let unflatten = |a: &[f64]| -> Vec<[f64; 4]> {
        a.chunks(4).map(|c| [c[0], c[1], c[2], c[3]]).collect()
    };
    for _ in 0..100 {
        let g = psi_gradient(&a);
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gn < tol {
            return kirchhoff_routh(&unflatten(&a));
        }
        let h = psi_hessian(&a);
        let step = h
            .lu()
            .solve(&DVector::from_column_slice(&g))
            .ok_or_else(|| Error::SolverFailure("singular Kirchhoff–Routh Hessian".into()))?;
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = a.iter().zip(step.iter()).map(|(x, s)| x - lambda * s).collect();
            if validate_points(&unflatten(&trial)).is_ok() {
                a = trial;
                break;
            }
            lambda *= 0.5;
            if lambda < 1e-6 {
                return Err(Error::SolverFailure("Newton step leaves the ball".into()));
            }
        }
    }
    Err(Error::SolverFailure(format!("no critical point within 100 Newton steps (tol {tol})")))
}

/// `t*` with `∂Ψ₂/∂(a₁)₁ = 0` at `a = (t e₁, −t e₁)`, found by bisection.
pub fn symmetric_pair_critical(tol: f64) -> Result<f64> {
    let slope = |t: f64| psi_gradient(&[t, 0.0, 0.0, 0.0, -t, 0.0, 0.0, 0.0])[0];
    let (mut lo, mut hi) = (1e-3, 1.0 - 1e-6);
    let (flo, fhi) = (slope(lo), slope(hi));
    if flo.signum() == fhi.signum() {
        return Err(Error::SolverFailure(format!("no sign change on [{lo}, {hi}]")));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if slope(mid).signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Pole-derivative helpers used by the Pohozaev table: `∂_{x_h} G(x, y)` and
/// second derivatives in the pole, all by dual numbers.
pub fn green_pole_derivative<T: Real>(pole: [f64; 4], dir: [f64; 4], y: &[T; 4]) -> T {
    let x = lift(consts::<T, 4>(pole), dir);
    green(&x, &lift_const(*y)).d
}

/// `(∂_b R(x), ∂_a ∂_b R(x))`.
pub fn robin_derivatives(x: [f64; 4], a: [f64; 4], b: [f64; 4]) -> (f64, f64) {
    let r = robin(&lift(lift(x, b), a));
    (r.v.d, r.d.d)
}

/// Returns `(D_b G, D_a D_b G)`. `a` always acts on the first argument; `b`
/// acts on the second argument when `second_b` is set, otherwise on the first.
pub fn green_derivatives(x: [f64; 4], y: [f64; 4], a: [f64; 4], b: [f64; 4], second_b: bool) -> (f64, f64) {
    let zero = [0.0; 4];
    let (xb, yb) = if second_b { (lift(x, zero), lift(y, b)) } else { (lift(x, b), lift(y, zero)) };
    let xa = lift(xb, a);
    let ya = lift_const(yb);
    let r = green(&xa, &ya);
    (r.v.d, r.d.d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::autodiff::unit;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_point(rng: &mut impl Rng, rmax: f64) -> [f64; 4] {
        loop {
            let p: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            if norm2(&p) < rmax * rmax {
                return p;
            }
        }
    }

    #[test]
    fn green_from_origin() {
        let bg = BallGreen::default();
        let g = bg.g([0.0; 4], [0.5, 0.0, 0.0, 0.0]).unwrap();
        let expect = (2f64.ln() - 3.0 / 8.0) / (8.0 * PI * PI);
        assert!((g - expect).abs() < 1e-15);
        let gq = bg.g_quadrature([0.0; 4], [0.5, 0.0, 0.0, 0.0]).unwrap();
        assert!((gq - expect).abs() < 1e-14);
    }

    #[test]
    fn series_branch_is_continuous() {
        for &a in &[0.049, 0.0499999, 0.05, 0.0500001] {
            let direct = 0.5 * f64::ln_1p(a) - 0.5 * a / (1.0 + a);
            assert!((boggio_primitive(a) - direct).abs() < 1e-16, "{a}");
        }
    }

    #[test]
    fn closed_form_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bg = BallGreen::default();
        for _ in 0..200 {
            let (x, y) = (random_point(&mut rng, 0.99), random_point(&mut rng, 0.99));
            let (g, gq) = (bg.g(x, y).unwrap(), bg.g_quadrature(x, y).unwrap());
            assert!((g - gq).abs() < 1e-12 * g.abs().max(1e-3), "{g} {gq}");
        }
    }

    #[test]
    fn robin_values() {
        assert!((robin(&[0.0; 4]) + 1.0 / (16.0 * PI * PI)).abs() < 1e-16);
        let x = [0.3, 0.0, 0.0, 0.0];
        let expect = ((0.91f64).ln() - 0.5) / (8.0 * PI * PI);
        assert!((robin(&x) - expect).abs() < 1e-16);
        assert!((regular_part(&x, &x) - expect).abs() < 1e-16);
        let lim = BallGreen::default().robin_quadrature_limit(x).unwrap();
        assert!((lim - expect).abs() < 1e-8);
    }

    #[test]
    fn errors() {
        let bg = BallGreen::default();
        let x = [0.1, 0.2, 0.0, 0.0];
        assert!(matches!(bg.g(x, x), Err(Error::SingularArgument(_))));
        assert!(matches!(bg.robin([1.0, 0.0, 0.0, 0.0]), Err(Error::InvalidArgument(_))));
        assert!(matches!(kirchhoff_routh(&[x, x]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn k1_hessian_at_origin() {
        let c = kirchhoff_routh(&[[0.0; 4]]).unwrap();
        assert!(c.gradient_norm() < 1e-16);
        for e in &c.hessian_eigs {
            assert!((e + 1.0 / (4.0 * PI * PI)).abs() < 1e-14);
        }
        assert!(c.nondegenerate);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        // Fourth-order central differences with the distance-scaled step.
        let pts = [[0.2, -0.1, 0.3, 0.0], [-0.4, 0.1, 0.0, 0.2]];
        let c = kirchhoff_routh(&pts).unwrap();
        let a: Vec<f64> = pts.iter().flatten().copied().collect();
        for q in 0..8 {
            let j = q / 4;
            let h = 1e-3 * (1.0 - norm2(&pts[j]).sqrt());
            let at = |s: f64| {
                let mut b = a.clone();
                b[q] += s;
                psi_generic(&b)
            };
            let fd = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
            assert!((fd - c.gradient[q]).abs() < 1e-9, "{q}: {fd} {}", c.gradient[q]);
        }
    }

    #[test]
    fn symmetric_pair_has_no_critical_point() {
        // Both R(t e₁) and G(t e₁, −t e₁) decrease in t, so Ψ₂ is monotone along the pair.
        for i in 1..1000 {
            let t = i as f64 / 1000.0;
            assert!(psi_gradient(&[t, 0.0, 0.0, 0.0, -t, 0.0, 0.0, 0.0])[0] < 0.0, "{t}");
        }
        assert!(matches!(symmetric_pair_critical(1e-12), Err(Error::SolverFailure(_))));
        let r = find_kr_critical(&[[0.4, 0.0, 0.0, 0.0], [-0.4, 0.0, 0.0, 0.0]], 1e-12);
        assert!(matches!(r, Err(Error::SolverFailure(_))), "{r:?}");
    }

    #[test]
    fn derivative_helpers() {
        let x = [0.3, 0.0, 0.0, 0.0];
        let (d1, d11) = robin_derivatives(x, unit(0), unit(0));
        assert!((d1 + 0.6 / 0.91 * KAPPA).abs() < 1e-16);
        let expect = -KAPPA * (2.0 * 0.91 + 4.0 * 0.09) / (0.91 * 0.91);
        assert!((d11 - expect).abs() < 1e-15);
        let y = [-0.2, 0.1, 0.0, 0.3];
        let (dg, _) = green_derivatives(x, y, unit(0), unit(1), false);
        let fd = (green(&[0.3, 1e-6, 0.0, 0.0], &y) - green(&[0.3, -1e-6, 0.0, 0.0], &y)) / 2e-6;
        assert!((dg - fd).abs() < 1e-9);
        assert!((green_pole_derivative(x, unit(1), &y) - dg).abs() < 1e-16);
    }
}
