use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::{form_p, form_q, BoundaryTrace, FormValue, GreenPole, GreenPoleDerivative};
use crate::error::{invalid, Result};
use crate::greenball::{green_derivatives, robin_derivatives};
use crate::numerics::autodiff::{dot, unit};
use crate::numerics::{ScalarField4, SphereRuleS3};
use crate::KAPPA;

/// Points per angle of the product rule used for Green traces. The forms of
/// poles at distance `d` from the centre converge like `(θ/d)^{2n}`.
const GREEN_RULE_ORDER: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum FormKind {
    P,
    /// `Q_i` with a zero-based axis index.
    Q(usize),
}

/// One entry of the Green table: a form on `∂B_θ(x_j)` of `G(x_s,·)` (or
/// `G(x_m,·)`) against `G(x_m,·)` or its pole derivative `∂_h G(x_m,·)`.
#[derive(Clone, Debug, Serialize)]
pub struct GreenFormEntry {
    pub id: String,
    pub form: FormKind,
    /// Zero-based indices of the sphere centre and the two poles.
    pub j: usize,
    pub first: usize,
    pub second: usize,
    /// Pole-derivative direction of the second argument, if any.
    pub h: Option<usize>,
    pub computed: FormValue,
    pub expected: f64,
    pub deviation: f64,
}

fn dist(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let d: [f64; 4] = std::array::from_fn(|i| a[i] - b[i]);
    dot(&d, &d).sqrt()
}

/// `θ = 0.1`, halved until `B_{2θ}(x_j)` lies in the ball and contains no
/// other centre.
pub fn default_theta(centers: &[[f64; 4]], j: usize) -> Result<f64> {
    let c = centers.get(j).ok_or_else(|| crate::Error::InvalidArgument(format!("no centre {j}")))?;
    let mut theta = 0.1;
    for _ in 0..40 {
        let inside = dot(c, c).sqrt() + 2.0 * theta < 1.0;
        let apart = centers.iter().enumerate().all(|(s, x)| s == j || dist(x, c) > 2.0 * theta);
        if inside && apart {
            return Ok(theta);
        }
        theta *= 0.5;
    }
    invalid(format!("no admissible θ around centre {j}"))
}

fn check_centers(centers: &[[f64; 4]]) -> Result<()> {
    if centers.is_empty() {
        return invalid("need at least one centre");
    }
    for (a, x) in centers.iter().enumerate() {
        if !(dot(x, x) < 1.0) {
            return invalid(format!("centre {a} is not inside the unit ball"));
        }
        for y in &centers[a + 1..] {
            if dist(x, y) == 0.0 {
                return invalid("centres must be distinct");
            }
        }
    }
    Ok(())
}

/// Right-hand sides of the table in terms of `R` and `G` derivatives.
struct Expected<'a> {
    x: &'a [[f64; 4]],
    j: usize,
}

impl Expected<'_> {
    fn p(&self, s: usize, m: usize) -> f64 {
        if s == self.j && m == self.j {
            KAPPA
        } else {
            0.0
        }
    }

    fn p_dh(&self, s: usize, m: usize, h: usize) -> f64 {
        let (x, j) = (self.x, self.j);
        if m != j {
            0.0
        } else if s == j {
            -0.5 * robin_derivatives(x[j], unit(h), unit(h)).0
        } else {
            // D_{x_h} G(x_s, x_j): derivative in the second argument.
            -green_derivatives(x[j], x[s], unit(h), unit(h), false).0
        }
    }

    fn q(&self, m: usize, s: usize, i: usize) -> f64 {
        let (x, j) = (self.x, self.j);
        match (m == j, s == j) {
            (true, true) => robin_derivatives(x[j], unit(i), unit(i)).0,
            (false, true) => green_derivatives(x[j], x[m], unit(i), unit(i), false).0,
            (true, false) => green_derivatives(x[j], x[s], unit(i), unit(i), false).0,
            (false, false) => 0.0,
        }
    }

    fn q_dh(&self, m: usize, s: usize, i: usize, h: usize) -> f64 {
        let (x, j) = (self.x, self.j);
        match (m == j, s == j) {
            (true, true) => 0.5 * robin_derivatives(x[j], unit(i), unit(h)).1,
            // D_{x_i} ∂_h G(x_s, x_j): ∂_h on the pole, D_{x_i} on the second argument.
            (true, false) => green_derivatives(x[s], x[j], unit(h), unit(i), true).1,
            // D²_{x_i x_h} G(x_m, x_j): both derivatives on the second argument.
            (false, true) => green_derivatives(x[j], x[m], unit(i), unit(h), false).1,
            (false, false) => 0.0,
        }
    }
}

/// Evaluates `P` and `Q_i` on `∂B_θ(x_j)` for every `j` and every pair of
/// `G(x_s,·)`, `G(x_m,·)`, `∂_h G(x_m,·)`, and compares with the closed forms
/// in terms of the Robin function and Green derivatives.
pub fn green_form_table(centers: &[[f64; 4]]) -> Result<Vec<GreenFormEntry>> {
    check_centers(centers)?;
    let k = centers.len();
    let rule = Arc::new(SphereRuleS3::product(GREEN_RULE_ORDER)?);
    let per_center: Vec<Result<Vec<GreenFormEntry>>> = (0..k)
        .into_par_iter()
        .map(|j| {
            let theta = default_theta(centers, j)?;
            let c = centers[j];
            let g: Vec<BoundaryTrace> = centers
                .iter()
                .map(|&x| BoundaryTrace::new(&GreenPole { pole: x }, c, theta, rule.clone()))
                .collect::<Result<_>>()?;
            let dg: Vec<Vec<BoundaryTrace>> = centers
                .iter()
                .map(|&x| {
                    (0..4)
                        .map(|h| BoundaryTrace::new(&GreenPoleDerivative { pole: x, dir: unit(h) }, c, theta, rule.clone()))
                        .collect::<Result<_>>()
                })
                .collect::<Result<_>>()?;
            let ex = Expected { x: centers, j };
            let mut out = Vec::new();
            let mut push = |id: String, form, a, b, h, computed: FormValue, expected: f64| {
                out.push(GreenFormEntry {
                    id,
                    form,
                    j,
                    first: a,
                    second: b,
                    h,
                    deviation: (computed.value - expected).abs(),
                    computed,
                    expected,
                });
            };
            for a in 0..k {
                for b in 0..k {
                    let (ja, jb, jj) = (a + 1, b + 1, j + 1);
                    push(format!("P[G{ja},G{jb}]@{jj}"), FormKind::P, a, b, None, form_p(&g[a], &g[b])?, ex.p(a, b));
                    for h in 0..4 {
                        let hh = h + 1;
                        push(
                            format!("P[G{ja},d{hh}G{jb}]@{jj}"),
                            FormKind::P,
                            a,
                            b,
                            Some(h),
                            form_p(&g[a], &dg[b][h])?,
                            ex.p_dh(a, b, h),
                        );
                    }
                    for i in 0..4 {
                        let ii = i + 1;
                        push(
                            format!("Q{ii}[G{ja},G{jb}]@{jj}"),
                            FormKind::Q(i),
                            a,
                            b,
                            None,
                            form_q(&g[a], &g[b], i)?,
                            ex.q(a, b, i),
                        );
                        for h in 0..4 {
                            let hh = h + 1;
                            push(
                                format!("Q{ii}[G{ja},d{hh}G{jb}]@{jj}"),
                                FormKind::Q(i),
                                a,
                                b,
                                Some(h),
                                form_q(&g[a], &dg[b][h], i)?,
                                ex.q_dh(a, b, i, h),
                            );
                        }
                    }
                }
            }
            Ok(out)
        })
        .collect();
    let mut table = Vec::new();
    for r in per_center {
        table.extend(r?);
    }
    Ok(table)
}

/// `P` and `Q_i` of one pair of fields for several radii about one centre.
#[derive(Clone, Debug, Serialize)]
pub struct ThetaSweep {
    pub center: [f64; 4],
    pub thetas: Vec<f64>,
    pub p: Vec<f64>,
    /// `q[n][i]` at `thetas[n]`.
    pub q: Vec<[f64; 4]>,
    /// Largest spread `max − min` over the radii, across `P` and all `Q_i`.
    pub max_variation: f64,
}

pub fn theta_sweep<F: ScalarField4, G: ScalarField4>(
    u: &F,
    v: &G,
    center: [f64; 4],
    thetas: &[f64],
) -> Result<ThetaSweep> {
    if thetas.is_empty() {
        return invalid("need at least one radius");
    }
    let rule = Arc::new(SphereRuleS3::product(GREEN_RULE_ORDER)?);
    let mut sweep = ThetaSweep { center, thetas: thetas.to_vec(), p: vec![], q: vec![], max_variation: 0.0 };
    for &theta in thetas {
        let tu = BoundaryTrace::new(u, center, theta, rule.clone())?;
        let tv = BoundaryTrace::new(v, center, theta, rule.clone())?;
        sweep.p.push(form_p(&tu, &tv)?.value);
        let mut q = [0.0; 4];
        for (i, qi) in q.iter_mut().enumerate() {
            *qi = form_q(&tu, &tv, i)?.value;
        }
        sweep.q.push(q);
    }
    let spread = |v: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        hi - lo
    };
    let mut var = spread(&mut sweep.p.iter().copied());
    for i in 0..4 {
        var = var.max(spread(&mut sweep.q.iter().map(|q| q[i])));
    }
    sweep.max_variation = var;
    Ok(sweep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_theta_halves_near_the_boundary_and_other_centres() {
        assert_eq!(default_theta(&[[0.0; 4]], 0).unwrap(), 0.1);
        assert_eq!(default_theta(&[[0.85, 0.0, 0.0, 0.0]], 0).unwrap(), 0.05);
        let c = [[0.0; 4], [0.15, 0.0, 0.0, 0.0]];
        assert_eq!(default_theta(&c, 0).unwrap(), 0.05);
    }

    #[test]
    fn table_for_two_centres() {
        let c = [[0.3, 0.0, 0.0, 0.0], [-0.1, 0.35, 0.1, 0.0]];
        let t = green_form_table(&c).unwrap();
        assert_eq!(t.len(), 2 * 25 * 4);
        let mut worst = (0.0, String::new());
        for e in &t {
            if e.deviation > worst.0 {
                worst = (e.deviation, e.id.clone());
            }
        }
        for e in t.iter().filter(|e| e.deviation > 1e-8).take(20) {
            eprintln!("{} computed {:e} expected {:e}", e.id, e.computed.value, e.expected);
        }
        assert!(worst.0 < 1e-8, "{worst:?}");
    }
}
