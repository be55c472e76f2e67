use crate::error::{invalid, Error, Result};
use crate::S3_AREA;
use std::f64::consts::PI;

/// Interpolatory rule on a finite interval.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadrature1D {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub interval: (f64, f64),
}

impl Quadrature1D {
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Legendre polynomial `P_n(x)` and its derivative by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss–Legendre rule with `n` points mapped to `(a, b)`.
pub fn gauss_rule(n: usize, a: f64, b: f64) -> Result<Quadrature1D> {
    if n == 0 {
        return invalid("gauss_rule needs at least one node");
    }
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return invalid(format!("gauss_rule interval ({a}, {b}) is empty or not finite"));
    }
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi's initial guess, then Newton on P_n.
        let theta = PI * (i as f64 + 0.75) / (nf + 0.5);
        let mut x = (1.0 - (nf - 1.0) / (8.0 * nf * nf * nf)) * theta.cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // x is the i-th largest root; store ascending.
        nodes[n - 1 - i] = mid + half * x;
        nodes[i] = mid - half * x;
        weights[n - 1 - i] = half * w;
        weights[i] = half * w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = mid;
    }
    Ok(Quadrature1D { nodes, weights, interval: (a, b) })
}

/// Composite Gauss rule on `(0, 1)` with panels graded geometrically toward
/// both endpoints, so that algebraic and logarithmic endpoint behaviour is
/// integrated with geometric convergence.
fn graded_unit_rule(per_panel: usize, levels: usize) -> Quadrature1D {
    let mut breaks = vec![0.0];
    for k in (1..=levels).rev() {
        breaks.push(0.5f64.powi(k as i32 + 1));
    }
    breaks.push(0.5);
    for k in 2..=levels + 1 {
        breaks.push(1.0 - 0.5f64.powi(k as i32));
    }
    breaks.push(1.0);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for w in breaks.windows(2) {
        let q = gauss_rule(per_panel, w[0], w[1]).expect("valid panel");
        nodes.extend(q.nodes);
        weights.extend(q.weights);
    }
    Quadrature1D { nodes, weights, interval: (0.0, 1.0) }
}

/// `∫₀^∞ r³ f(r) dr` through the algebraic map `r = c·s/(1 − s)`.
///
/// Two graded rules of different order are compared; a relative drift above
/// `1e-12` is reported as an accuracy failure.
pub fn improper_radial_integral(f: impl Fn(f64) -> f64, map_scale: f64) -> Result<f64> {
    improper_radial_integral_tol(f, map_scale, 1e-12)
}

pub fn improper_radial_integral_tol(
    f: impl Fn(f64) -> f64,
    map_scale: f64,
    rtol: f64,
) -> Result<f64> {
    if !(map_scale > 0.0) {
        return invalid(format!("map_scale must be positive, got {map_scale}"));
    }
    let c = map_scale;
    let integrand = |s: f64| {
        if s >= 1.0 {
            return 0.0;
        }
        let r = c * s / (1.0 - s);
        let jac = c / ((1.0 - s) * (1.0 - s));
        let v = r * r * r * f(r) * jac;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let coarse = graded_unit_rule(16, 40).integrate(integrand);
    let fine = graded_unit_rule(24, 48).integrate(integrand);
    let scale = fine.abs().max(f64::MIN_POSITIVE);
    if !fine.is_finite() || (fine - coarse).abs() > rtol * scale.max(1e-300) {
        return Err(Error::AccuracyFailure(format!(
            "improper integral drifts under refinement: {coarse} vs {fine}"
        )));
    }
    Ok(fine)
}

/// `∫₀¹ g(s) ds` for integrands with (possibly logarithmic) endpoint singularities.
pub fn graded_unit_integral(g: impl Fn(f64) -> f64) -> f64 {
    graded_unit_rule(24, 48).integrate(g)
}

/// Product rule on the unit three-sphere.
///
/// Points are `ω = (cos ψ, sin ψ cos θ, sin ψ sin θ cos φ, sin ψ sin θ sin φ)`
/// with surface density `sin²ψ sin θ`, rotated so that the `ψ = 0` pole
/// points along `axis`.
#[derive(Clone, Debug)]
pub struct SphereRuleS3 {
    pub points: Vec<[f64; 4]>,
    pub weights: Vec<f64>,
    /// Total degree of polynomials in `ω` integrated exactly.
    pub order: usize,
    /// Index of the `φ` node for each point (used for embedded error estimates).
    pub phi_index: Vec<usize>,
    pub n_phi: usize,
}

impl SphereRuleS3 {
    /// Exact product rule: Gauss–Chebyshev (second kind) in `cos ψ`,
    /// Gauss–Legendre in `cos θ`, and the trapezoid rule in `φ` with `2n`
    /// nodes offset by half a step. Degree of exactness `2n − 1`.
    pub fn product(n: usize) -> Result<Self> {
        if n == 0 {
            return invalid("sphere rule needs at least one node per angle");
        }
        let psi = (1..=n)
            .map(|k| {
                let p = k as f64 * PI / (n as f64 + 1.0);
                (p, PI / (n as f64 + 1.0) * p.sin().powi(2))
            })
            .collect();
        Self::build(psi, n, 2 * n, [1.0, 0.0, 0.0, 0.0], 2 * n - 1)
    }

    /// Variant with `n_psi` Gauss–Legendre nodes in the polar angle itself,
    /// which cluster toward both poles. Suited to integrands concentrated
    /// near the pole set by `axis`.
    pub fn polar_refined(n_psi: usize, n: usize, axis: [f64; 4]) -> Result<Self> {
        if n_psi == 0 {
            return invalid("sphere rule needs at least one node per angle");
        }
        let q = gauss_rule(n_psi, 0.0, PI)?;
        let psi = q.nodes.iter().zip(&q.weights).map(|(&p, &w)| (p, w * p.sin().powi(2))).collect();
        Self::build(psi, n, 2 * n, axis, 2 * n - 1)
    }

    /// Rule for integrands with a feature of angular width `psi_scale` at the
    /// pole set by `axis`: Gauss panels `[0, s], [s, 2s], [2s, 4s], …` in the
    /// polar angle with `per_panel` nodes each, and `n` nodes in the other two
    /// angles. Exact for the low harmonics in `θ, φ`.
    pub fn graded_polar(psi_scale: f64, per_panel: usize, n: usize, axis: [f64; 4]) -> Result<Self> {
        if !(psi_scale > 0.0) || per_panel == 0 {
            return invalid("graded sphere rule needs a positive scale and nodes per panel");
        }
        let mut edges = vec![0.0];
        let mut e = psi_scale.min(PI);
        while e < PI {
            edges.push(e);
            e *= 2.0;
        }
        if PI - edges[edges.len() - 1] < 0.25 * edges[edges.len() - 1] && edges.len() > 1 {
            edges.pop();
        }
        edges.push(PI);
        let mut psi = Vec::new();
        for w in edges.windows(2) {
            let q = gauss_rule(per_panel, w[0], w[1])?;
            psi.extend(q.nodes.iter().zip(&q.weights).map(|(&p, &wt)| (p, wt * p.sin().powi(2))));
        }
        Self::build(psi, n, 2 * n, axis, 2 * n - 1)
    }

    fn build(psi: Vec<(f64, f64)>, n_theta: usize, n_phi: usize, axis: [f64; 4], order: usize) -> Result<Self> {
        if psi.is_empty() || n_theta == 0 || n_phi == 0 {
            return invalid("sphere rule needs at least one node per angle");
        }
        let norm = axis.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return invalid("sphere rule axis must be nonzero");
        }
        let frame = orthonormal_frame([axis[0] / norm, axis[1] / norm, axis[2] / norm, axis[3] / norm]);
        let theta = gauss_rule(n_theta, -1.0, 1.0)?;
        let mut points = Vec::with_capacity(psi.len() * n_theta * n_phi);
        let mut weights = Vec::with_capacity(points.capacity());
        let mut phi_index = Vec::with_capacity(points.capacity());
        let wphi = 2.0 * PI / n_phi as f64;
        for &(ps, wps) in &psi {
            let (sp, cp) = ps.sin_cos();
            for (&ct, &wt) in theta.nodes.iter().zip(&theta.weights) {
                let st = (1.0 - ct * ct).max(0.0).sqrt();
                for j in 0..n_phi {
                    let ph = (j as f64 + 0.5) * wphi;
                    let (sf, cf) = ph.sin_cos();
                    let local = [cp, sp * ct, sp * st * cf, sp * st * sf];
                    let mut x = [0.0; 4];
                    for (k, e) in frame.iter().enumerate() {
                        for i in 0..4 {
                            x[i] += local[k] * e[i];
                        }
                    }
                    points.push(x);
                    weights.push(wps * wt * wphi);
                    phi_index.push(j);
                }
            }
        }
        Ok(SphereRuleS3 { points, weights, order, phi_index, n_phi })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Weights of the embedded coarser rule that keeps every other `φ` node.
    pub fn coarse_weights(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.phi_index)
            .map(|(&w, &j)| if j % 2 == 0 { 2.0 * w } else { 0.0 })
            .collect()
    }
}

/// Completes a unit vector to an orthonormal basis of `R⁴` (first element is `a`).
fn orthonormal_frame(a: [f64; 4]) -> [[f64; 4]; 4] {
    let mut basis = vec![a];
    for k in 0..4 {
        if basis.len() == 4 {
            break;
        }
        let mut v = [0.0; 4];
        v[k] = 1.0;
        for b in &basis {
            let d: f64 = (0..4).map(|i| v[i] * b[i]).sum();
            for i in 0..4 {
                v[i] -= d * b[i];
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            basis.push(v.map(|x| x / n));
        }
    }
    [basis[0], basis[1], basis[2], basis[3]]
}

/// `∫_{∂B_radius(center)} g dσ`.
pub fn sphere_surface_integral(
    g: impl Fn([f64; 4], [f64; 4]) -> f64,
    center: [f64; 4],
    radius: f64,
    rule: &SphereRuleS3,
) -> Result<f64> {
    if !(radius > 0.0) {
        return invalid(format!("sphere radius must be positive, got {radius}"));
    }
    let r3 = radius.powi(3);
    let mut s = 0.0;
    for (nu, &w) in rule.points.iter().zip(&rule.weights) {
        let x = std::array::from_fn(|i| center[i] + radius * nu[i]);
        s += w * g(x, *nu);
    }
    Ok(s * r3)
}

/// `∫_{B_radius(center)} f dx` in polar coordinates about `center`.
pub fn ball_volume_integral(
    f: impl Fn([f64; 4]) -> f64,
    center: [f64; 4],
    radius: f64,
    n_rho: usize,
    rule: &SphereRuleS3,
) -> Result<f64> {
    if !(radius > 0.0) {
        return invalid(format!("ball radius must be positive, got {radius}"));
    }
    let q = gauss_rule(n_rho, 0.0, radius)?;
    let mut total = 0.0;
    for (&rho, &wr) in q.nodes.iter().zip(&q.weights) {
        let shell = sphere_surface_integral(|x, _| f(x), center, rho, rule)?;
        total += wr * shell;
    }
    Ok(total)
}

/// Surface area of the sphere of radius `r` in `R⁴`.
pub fn sphere_area(r: f64) -> f64 {
    S3_AREA * r.powi(3)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_rule() {
        let q = gauss_rule(2, -1.0, 1.0).unwrap();
        let r = 1.0 / 3f64.sqrt();
        assert!((q.nodes[0] + r).abs() < 1e-15 && (q.nodes[1] - r).abs() < 1e-15);
        assert!((q.weights[0] - 1.0).abs() < 1e-15);
        assert!((q.integrate(|x| x * x) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn degree_nine_exactness() {
        let q = gauss_rule(5, 0.0, 1.0).unwrap();
        assert!((q.integrate(|x| x.powi(9)) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn large_rules_have_correct_weight_sum() {
        for n in [1, 3, 40, 200, 513] {
            let q = gauss_rule(n, 2.0, 5.0).unwrap();
            assert!((q.weights.iter().sum::<f64>() - 3.0).abs() < 1e-13 * 3.0, "n = {n}");
            assert!(q.nodes.windows(2).all(|w| w[0] < w[1]));
            assert!(q.nodes[0] > 2.0 && q.nodes[n - 1] < 5.0);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(gauss_rule(0, 0.0, 1.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(gauss_rule(3, 1.0, 1.0), Err(Error::InvalidArgument(_))));
        assert!(improper_radial_integral(|_| 1.0, -1.0).is_err());
    }

    #[test]
    fn log_weighted_polynomial_on_unit_interval() {
        // ∫ u(1−u)(2u−1) ln²(1/u) du = Σ c_m · 2/(m+1)³ for −2u³ + 3u² − u
        let q = gauss_rule(40, 0.0, 1.0).unwrap();
        let exact = -2.0 * 2.0 / 64.0 + 3.0 * 2.0 / 27.0 - 2.0 / 8.0;
        let graded = graded_unit_integral(|u| u * (1.0 - u) * (2.0 * u - 1.0) * (1.0 / u).ln().powi(2));
        assert!((graded - exact).abs() < 1e-14);
        let plain = q.integrate(|u| u * (1.0 - u) * (2.0 * u - 1.0) * (1.0 / u).ln().powi(2));
        // A plain rule converges only algebraically on the log² endpoint singularity.
        assert!((plain - exact).abs() < 1e-4 && (plain - exact).abs() > 1e-12);
        assert!((exact + 13.0 / 144.0).abs() < 1e-16);
    }

    #[test]
    fn improper_integrals() {
        let b = 8.0 * 6f64.sqrt();
        let m = improper_radial_integral(|r| (1.0 + r * r / b).powi(-4), b.sqrt()).unwrap();
        assert!((m - 32.0).abs() < 1e-12 * 32.0);
        let q = improper_radial_integral(|r| (1.0 + r * r).powi(-3), 1.0).unwrap();
        assert!((q - 0.25).abs() < 1e-14);
        let j = improper_radial_integral(
            |r| (1.0 - r * r) * (r * r).ln_1p().powi(2) / (1.0 + r * r).powi(5),
            1.0,
        )
        .unwrap();
        assert!((j + 13.0 / 288.0).abs() < 1e-12);
    }

    #[test]
    fn divergent_integral_is_flagged() {
        let r = improper_radial_integral(|r| 1.0 / (1.0 + r.powi(3)), 1.0);
        assert!(matches!(r, Err(Error::AccuracyFailure(_))));
    }

    #[test]
    fn sphere_moments() {
        for rule in [
            SphereRuleS3::product(6).unwrap(),
            SphereRuleS3::polar_refined(24, 6, [0.3, -0.1, 0.5, 0.2]).unwrap(),
        ] {
            assert!((rule.weight_sum() - S3_AREA).abs() < 1e-12 * S3_AREA);
            let theta = 0.37;
            let c = [0.1, 0.2, -0.3, 0.05];
            let area = sphere_surface_integral(|_, _| 1.0, c, theta, &rule).unwrap();
            assert!((area - sphere_area(theta)).abs() < 1e-13);
            for h in 0..4 {
                let m = sphere_surface_integral(|_, nu| nu[h], c, 1.0, &rule).unwrap();
                assert!(m.abs() < 1e-12);
                for l in 0..4 {
                    let m = sphere_surface_integral(|_, nu| nu[h] * nu[l], c, theta, &rule).unwrap();
                    let e = if h == l { PI * PI / 2.0 * theta.powi(3) } else { 0.0 };
                    assert!((m - e).abs() < 1e-12, "{h}{l}: {m} vs {e}");
                }
            }
        }
    }

    #[test]
    fn ball_volume() {
        let rule = SphereRuleS3::product(4).unwrap();
        let v = ball_volume_integral(|_| 1.0, [0.0; 4], 0.5, 6, &rule).unwrap();
        assert!((v - PI * PI / 2.0 * 0.0625).abs() < 1e-14);
        // ∫_{B_R} |x|² = 2π² R⁶/6
        let v = ball_volume_integral(|x| x.iter().map(|a| a * a).sum(), [0.0; 4], 0.5, 6, &rule).unwrap();
        assert!((v - S3_AREA * 0.5f64.powi(6) / 6.0).abs() < 1e-14);
    }
}
