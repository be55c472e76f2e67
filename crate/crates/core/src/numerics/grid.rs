use crate::error::{invalid, Result};
use std::sync::Arc;

/// Smooth map `r(ξ)` from the uniform computational coordinate `ξ ∈ [0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Grading {
    /// `r = R ξ`.
    Uniform,
    /// `r = R sinh(βξ)/sinh(β)`: spacing near the origin is reduced by
    /// `β/sinh β`, and the outer part is close to geometric.
    Sinh { beta: f64 },
}

/// Nodes `r_i = r(i/N)`, `i = 0..=N`, of an odd map, so `r₀ = 0` exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialGrid {
    pub nodes: Vec<f64>,
    pub r_max: f64,
    pub grading: Grading,
    /// `dr/dξ` at the nodes.
    pub r_xi: Vec<f64>,
    /// `d²r/dξ²` at the nodes.
    pub r_xixi: Vec<f64>,
}

impl RadialGrid {
    pub fn uniform(intervals: usize, r_max: f64) -> Result<Self> {
        Self::new(intervals, r_max, Grading::Uniform)
    }

    /// Sinh-graded grid whose spacing at the origin is about `h0`
    /// (falls back to the uniform grid when `h0 ≥ r_max/intervals`).
    pub fn graded(intervals: usize, r_max: f64, h0: f64) -> Result<Self> {
        if !(h0 > 0.0) {
            return invalid("origin spacing must be positive");
        }
        let target = intervals as f64 * h0 / r_max;
        if target >= 1.0 {
            return Self::uniform(intervals, r_max);
        }
        // Bisection on ln(β/sinh β) = ln(target), written to stay accurate for small and large β.
        let f = |b: f64| b.ln() - b - (-(-2.0 * b).exp_m1() / 2.0).ln() - target.ln();
        let (mut lo, mut hi) = (1e-6_f64, 800.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Self::new(intervals, r_max, Grading::Sinh { beta: 0.5 * (lo + hi) })
    }

    pub fn new(intervals: usize, r_max: f64, grading: Grading) -> Result<Self> {
        if intervals < 8 {
            return invalid(format!("radial grid needs at least 8 intervals, got {intervals}"));
        }
        if !(r_max > 0.0) || !r_max.is_finite() {
            return invalid(format!("radial grid extent must be positive, got {r_max}"));
        }
        if let Grading::Sinh { beta } = grading {
            if !(beta > 0.0) || beta > 700.0 {
                return invalid(format!("grading parameter out of range: {beta}"));
            }
        }
        let n = intervals;
        let mut nodes = Vec::with_capacity(n + 1);
        let mut r_xi = Vec::with_capacity(n + 1);
        let mut r_xixi = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let xi = i as f64 / n as f64;
            let (r, d1, d2) = map_eval(grading, r_max, xi);
            nodes.push(r);
            r_xi.push(d1);
            r_xixi.push(d2);
        }
        nodes[0] = 0.0;
        nodes[n] = r_max;
        Ok(RadialGrid { nodes, r_max, grading, r_xi, r_xixi })
    }

    /// Number of intervals `N` (the grid has `N + 1` nodes).
    pub fn intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn h(&self) -> f64 {
        1.0 / self.intervals() as f64
    }

    /// `r_j − r_i` from the map itself, accurate to rounding in the difference
    /// (the stored nodes carry independent rounding errors of size `ε r`).
    pub fn node_diff(&self, i: usize, j: usize) -> f64 {
        let n = self.intervals() as f64;
        match self.grading {
            Grading::Uniform => self.r_max * (j as f64 - i as f64) / n,
            Grading::Sinh { beta } => {
                let s = self.r_max / beta.sinh();
                let mid = beta * (i + j) as f64 / (2.0 * n);
                let half = beta * (j as f64 - i as f64) / (2.0 * n);
                2.0 * s * mid.cosh() * half.sinh()
            }
        }
    }

    /// Inverse map `ξ(r)`.
    pub fn xi_of(&self, r: f64) -> f64 {
        match self.grading {
            Grading::Uniform => r / self.r_max,
            Grading::Sinh { beta } => (r / self.r_max * beta.sinh()).asinh() / beta,
        }
    }

    /// `∫₀^{R} r³ f(r) dr` for samples of `f` at the nodes, by composite
    /// Newton–Cotes in `ξ` (see [`newton_cotes`]).
    pub fn integrate_r3(&self, f: &[f64]) -> f64 {
        let g: Vec<f64> = (0..self.len()).map(|i| self.nodes[i].powi(3) * self.r_xi[i] * f[i]).collect();
        newton_cotes(&g, self.h())
    }

    /// Local Lagrange interpolation of nodal data in `ξ`
    /// using `2m` nodes around `r`.
    pub fn interpolate(&self, f: &[f64], r: f64, m: usize) -> f64 {
        let n = self.intervals();
        let xi = self.xi_of(r.clamp(0.0, self.r_max)) * n as f64;
        let k = xi.floor() as isize;
        let start = (k - m as isize + 1).clamp(0, (n + 1 - 2 * m) as isize) as usize;
        let mut s = 0.0;
        for j in start..start + 2 * m {
            let mut l = 1.0;
            for q in start..start + 2 * m {
                if q != j {
                    l *= (xi - q as f64) / (j as f64 - q as f64);
                }
            }
            s += l * f[j];
        }
        s
    }
}

fn map_eval(g: Grading, r_max: f64, xi: f64) -> (f64, f64, f64) {
    match g {
        Grading::Uniform => (r_max * xi, r_max, 0.0),
        Grading::Sinh { beta } => {
            let s = r_max / beta.sinh();
            let bx = beta * xi;
            (s * bx.sinh(), s * beta * bx.cosh(), s * beta * beta * bx.sinh())
        }
    }
}

/// Composite Boole rule (sixth order) when the interval count is a multiple
/// of four, composite Simpson otherwise.
pub fn newton_cotes(g: &[f64], h: f64) -> f64 {
    let n = g.len() - 1;
    if !n.is_multiple_of(4) {
        return simpson(g, h);
    }
    let mut s = 0.0;
    for k in (0..n).step_by(4) {
        s += 7.0 * (g[k] + g[k + 4]) + 32.0 * (g[k + 1] + g[k + 3]) + 12.0 * g[k + 2];
    }
    s * 2.0 * h / 45.0
}

pub fn simpson(g: &[f64], h: f64) -> f64 {
    let n = g.len() - 1;
    let (even_end, tail) = if n.is_multiple_of(2) {
        (n, 0.0)
    } else {
        let m = n - 3;
        (m, 3.0 * h / 8.0 * (g[m] + 3.0 * g[m + 1] + 3.0 * g[m + 2] + g[m + 3]))
    };
    let mut s = g[0] + g[even_end];
    for i in 1..even_end {
        s += if i % 2 == 1 { 4.0 * g[i] } else { 2.0 * g[i] };
    }
    s * h / 3.0 + tail
}

/// Sampled radial function living in the angular sector `ℓ`.
#[derive(Clone, Debug)]
pub struct RadialField {
    pub grid: Arc<RadialGrid>,
    pub values: Vec<f64>,
    pub mode: usize,
}

impl RadialField {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>, mode: usize) -> Result<Self> {
        if values.len() != grid.len() {
            return invalid(format!("field has {} values for {} nodes", values.len(), grid.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("field values must be finite");
        }
        Ok(RadialField { grid, values, mode })
    }

    pub fn sample(grid: Arc<RadialGrid>, mode: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes.iter().map(|&r| f(r)).collect();
        Self::new(grid, values, mode)
    }

    pub fn at(&self, r: f64) -> f64 {
        self.grid.interpolate(&self.values, r, 4)
    }
}

/// Finite-difference weights for derivatives `0..=m` at `z` on nodes `x`
/// (Fornberg's recursion). Row `k` holds the weights of the `k`-th derivative.
pub fn fornberg(z: f64, x: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Sparse row `Σ c_j f_j`.
pub type Stencil = Vec<(usize, f64)>;

/// Sixth-order first and second `ξ`-derivative stencils (seven-point central,
/// eight-point one-sided closures at the outer end), with the parity
/// extension `f(−ξ) = (−1)^ℓ f(ξ)` at the origin.
///
/// Fourth order would not be enough: for odd modes the `3/r` and `1/r²`
/// terms amplify the first-derivative error near the origin by `1/r`, which
/// costs one order in the maximum norm.
#[derive(Clone, Debug)]
pub struct XiStencils {
    pub d1: Vec<Stencil>,
    pub d2: Vec<Stencil>,
}

impl XiStencils {
    pub fn new(intervals: usize, parity_odd: bool) -> Self {
        let n = intervals as isize;
        let h = 1.0 / intervals as f64;
        let sign = if parity_odd { -1.0 } else { 1.0 };
        let mut d1 = Vec::with_capacity(intervals + 1);
        let mut d2 = Vec::with_capacity(intervals + 1);
        for i in 0..=n {
            let offsets: Vec<isize> = if i <= n - 3 {
                (-3..=3).collect()
            } else {
                (n - 7 - i..=n - i).collect()
            };
            let xs: Vec<f64> = offsets.iter().map(|&o| o as f64).collect();
            let w = fornberg(0.0, &xs, 2);
            let mut s1: Stencil = Vec::new();
            let mut s2: Stencil = Vec::new();
            for (k, &o) in offsets.iter().enumerate() {
                let j = i + o;
                let (idx, sg) = if j < 0 { ((-j) as usize, sign) } else { (j as usize, 1.0) };
                push_merge(&mut s1, idx, sg * w[1][k] / h);
                push_merge(&mut s2, idx, sg * w[2][k] / (h * h));
            }
            d1.push(s1);
            d2.push(s2);
        }
        XiStencils { d1, d2 }
    }
}

fn push_merge(s: &mut Stencil, idx: usize, c: f64) {
    if let Some(e) = s.iter_mut().find(|e| e.0 == idx) {
        e.1 += c;
    } else {
        s.push((idx, c));
    }
}

pub fn apply(s: &Stencil, f: &[f64]) -> f64 {
    s.iter().map(|&(j, c)| c * f[j]).sum()
}

/// Discrete `Δ_{r,ℓ} = d²/dr² + (3/r) d/dr − ℓ(ℓ+2)/r²` on a mapped grid.
///
/// Row 0 is `4 f''(0)` for `ℓ = 0` and empty for `ℓ ≥ 1` (mode-`ℓ`
/// functions vanish at the origin).
#[derive(Clone, Debug)]
pub struct RadialOperator {
    pub ell: usize,
    pub lap: Vec<Stencil>,
    /// `d/dr` rows.
    pub dr: Vec<Stencil>,
}

impl RadialOperator {
    pub fn new(grid: &RadialGrid, ell: usize) -> Result<Self> {
        if grid.intervals() < 8 {
            return invalid("grid too small for the fourth-order stencils");
        }
        let xs = XiStencils::new(grid.intervals(), ell % 2 == 1);
        let ll = (ell * (ell + 2)) as f64;
        let mut lap = Vec::with_capacity(grid.len());
        let mut dr = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            let r = grid.nodes[i];
            let a = grid.r_xi[i];
            let b = grid.r_xixi[i];
            let d1: Stencil = xs.d1[i].iter().map(|&(j, c)| (j, c / a)).collect();
            if i == 0 {
                if ell == 0 {
                    lap.push(xs.d2[0].iter().map(|&(j, c)| (j, 4.0 * c / (a * a))).collect());
                } else {
                    lap.push(Vec::new());
                }
                dr.push(d1);
                continue;
            }
            let mut row: Stencil = Vec::new();
            for &(j, c) in &xs.d2[i] {
                push_merge(&mut row, j, c / (a * a));
            }
            let k1 = -b / (a * a * a) + 3.0 / (r * a);
            for &(j, c) in &xs.d1[i] {
                push_merge(&mut row, j, k1 * c);
            }
            if ll != 0.0 {
                push_merge(&mut row, i, -ll / (r * r));
            }
            lap.push(row);
            dr.push(d1);
        }
        Ok(RadialOperator { ell, lap, dr })
    }

    pub fn apply_lap(&self, f: &[f64]) -> Vec<f64> {
        self.lap.iter().map(|s| apply(s, f)).collect()
    }

    /// `Δ_h f` evaluated as `Σ_j c_ij (f_j − f_i)`, with the increments
    /// supplied by `diff(i, j)`. Row sums vanish for `ℓ = 0`, so this is the
    /// same operator; accurate increments keep the rounding error
    /// proportional to `|f_j − f_i|` instead of `|f|`.
    pub fn apply_lap_increments(&self, diff: impl Fn(usize, usize) -> f64) -> Vec<f64> {
        assert_eq!(self.ell, 0, "increment form needs vanishing row sums");
        self.lap
            .iter()
            .enumerate()
            .map(|(i, s)| s.iter().map(|&(j, c)| if j == i { 0.0 } else { c * diff(i, j) }).sum())
            .collect()
    }

    pub fn apply_dr(&self, f: &[f64]) -> Vec<f64> {
        self.dr.iter().map(|s| apply(s, f)).collect()
    }
}

/// `Δ_{r,ℓ} u` of a sampled field.
pub fn radial_laplacian(field: &RadialField, ell: usize) -> Result<RadialField> {
    let op = RadialOperator::new(&field.grid, ell)?;
    let values = op.apply_lap(&field.values);
    RadialField::new(field.grid.clone(), values, ell)
}
