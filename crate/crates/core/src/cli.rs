//! Batch front end: argument parsing, the check suites behind each
//! subcommand, and report emission.

use std::f64::consts::PI;
use std::io::Write;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bubble::{
    correction_constants, bubble_b, bubble_moment, bubble_moment_closed_form, default_eta0_grid, solve_eta0,
    Eta0Solution, MomentKind,
};
use crate::greenball::{find_kr_critical, kirchhoff_routh, BallGreen};
use crate::numerics::RadialGrid;
use crate::pohozaev::{
    green_form_table, linearized_identities, solution_identities, theta_sweep, FormKind, GreenPole,
    GreenPoleDerivative, LinearizedField,
};
use crate::report::{fmt_real, Check, Report, PLUMBING};
use crate::solver::{
    asymptotic_report, branch_through, cold_start, continuation, rescaled_profiles, Branch, RadialSolution,
    SolverOptions, StepPolicy,
};
use crate::spectrum::{liouville_kernel_check, nondegeneracy_scan};
use crate::{Error, S3_AREA};

#[derive(Parser, Debug)]
#[command(name = "biharmonic-lab", version, about = "Verification runs for Δ²u = (u⁺)^p on the unit ball in R⁴")]
pub struct Cli {
    /// Output path, `-` for standard output.
    #[arg(long, global = true, default_value = "-")]
    pub out: String,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Replaces every check's own tolerance.
    #[arg(long, global = true, value_parser = positive)]
    pub tol: Option<f64>,
    /// Seed for randomly sampled property checks.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Bubble moments, the correction η₀ and its far-field constants.
    Bubble,
    /// Green function, Robin function and Kirchhoff–Routh functional.
    Green(GreenArgs),
    /// Surface forms: Green table, θ-independence and solution identities.
    Pohozaev(PohozaevArgs),
    /// One radial solution.
    Solve(SolveArgs),
    /// Continuation in p with asymptotic fits.
    Branch(BranchArgs),
    /// Mode-by-mode spectrum of the linearised operator along a branch.
    Spectrum(SpectrumArgs),
    /// Run check suites.
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Default)]
pub struct GreenArgs {
    /// Compare R(x) with its quadrature limit at `x1,x2,x3,x4`.
    #[arg(long, value_parser = parse_point)]
    pub robin: Option<[f64; 4]>,
    /// Evaluate Ψ_k at `a1;a2;...`, each point `x1,x2,x3,x4`.
    #[arg(long, value_parser = parse_points)]
    pub kr: Option<Points>,
    /// Newton search for a critical point of Ψ_k, started from `--kr`.
    #[arg(long)]
    pub find_critical: bool,
    /// Random pairs for the positivity and symmetry checks.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
}

#[derive(Args, Debug, Default)]
pub struct PohozaevArgs {
    #[arg(long)]
    pub table: bool,
    #[arg(long)]
    pub identities: bool,
    #[arg(long)]
    pub theta_sweep: bool,
    /// Poles of the Green table, `a1;a2;...`.
    #[arg(long, value_parser = parse_points)]
    pub centers: Option<Points>,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[arg(long, value_parser = exponent)]
    pub p: f64,
    #[arg(long, default_value_t = 2000)]
    pub grid_size: usize,
}

#[derive(Args, Debug)]
pub struct BranchArgs {
    #[arg(long, default_value_t = 10.0, value_parser = exponent)]
    pub p_start: f64,
    #[arg(long, default_value_t = 160.0, value_parser = exponent)]
    pub p_end: f64,
    #[arg(long, default_value_t = 1.25, value_parser = factor)]
    pub factor: f64,
    #[arg(long, default_value_t = 2000)]
    pub grid_size: usize,
    /// Also write one CSV row per record to this path.
    #[arg(long)]
    pub records_csv: Option<String>,
}

#[derive(Args, Debug)]
pub struct SpectrumArgs {
    /// Increasing exponents, comma separated.
    #[arg(long, default_value = "10,20,40,80,160", value_delimiter = ',', value_parser = exponent)]
    pub p_grid: Vec<f64>,
    #[arg(long, default_value_t = 4)]
    pub lmax: usize,
    /// Eigenvalues per mode.
    #[arg(long, default_value_t = 6)]
    pub count: usize,
    #[arg(long, default_value_t = 2000)]
    pub grid_size: usize,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Every suite.
    #[arg(long)]
    pub all: bool,
    /// Constant reproduction only (bubble and Green table).
    #[arg(long)]
    pub quick: bool,
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x > 0.0 && x.is_finite() => Ok(x),
        _ => Err(format!("expected a positive number, got `{s}`")),
    }
}

fn exponent(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if (2.0..=crate::solver::MAX_EXPONENT).contains(&x) => Ok(x),
        _ => Err(format!("exponent must lie in [2, {}], got `{s}`", crate::solver::MAX_EXPONENT)),
    }
}

fn factor(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x > 1.0 && x.is_finite() => Ok(x),
        _ => Err(format!("factor must exceed 1, got `{s}`")),
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"))).collect()
}

fn parse_point(s: &str) -> Result<[f64; 4], String> {
    let v = parse_list(s)?;
    let p: [f64; 4] = v.try_into().map_err(|_| format!("a point needs four coordinates, got `{s}`"))?;
    if p.iter().map(|x| x * x).sum::<f64>() >= 1.0 {
        return Err(format!("point `{s}` is not inside the unit ball"));
    }
    Ok(p)
}

/// Points of the ball given as `a1;a2;...`.
#[derive(Clone, Debug, PartialEq)]
pub struct Points(pub Vec<[f64; 4]>);

fn parse_points(s: &str) -> Result<Points, String> {
    s.split(';').map(parse_point).collect::<Result<_, _>>().map(Points)
}

/// Per-check tolerance, unless `--tol` overrides it.
#[derive(Clone, Copy, Debug, Default)]
pub struct Tolerance(pub Option<f64>);

impl Tolerance {
    fn get(&self, default: f64) -> f64 {
        self.0.unwrap_or(default)
    }
}

fn opts(grid_size: usize) -> SolverOptions {
    SolverOptions { intervals: grid_size, ..Default::default() }
}

/// Record of a check that could not be evaluated.
fn fail(r: &mut Report, id: &str, anchor: &str, e: Error) {
    r.error(id, anchor, e);
}

const SECOND_MOMENT: &str = "second moment of e^Z by the beta-function route";

pub fn bubble_checks(tol: Tolerance) -> Report {
    let mut r = Report::new("bubble");
    let pi2 = PI * PI;
    let targets = [
        (MomentKind::Mass, "mass", "bubble mass 64π²", 64.0 * pi2, 1e-10),
        (MomentKind::Log, "log_moment", "log moment 32π² ln(8√6)", 32.0 * pi2 * bubble_b().ln(), 1e-8),
        (MomentKind::Second, "second_moment", SECOND_MOMENT, bubble_moment_closed_form(MomentKind::Second), 1e-8),
    ];
    let mut data = serde_json::Map::new();
    for (kind, id, anchor, expected, t) in targets {
        match bubble_moment(kind) {
            Ok(v) => {
                r.push(Check::relative(id, anchor, v, expected, tol.get(t)));
                data.insert(id.into(), v.into());
            }
            Err(e) => fail(&mut r, id, anchor, e),
        }
    }
    let target_a = -416.0 / 3.0 * S3_AREA;
    match correction_constants() {
        Ok(c) => {
            r.push(Check::relative("J_half", "J = −13/288", c.j_half, -13.0 / 288.0, tol.get(1e-10)));
            r.push(Check::relative("J_half_ledger", "moment ledger 2/(m+1)³", c.j_half_ledger, -13.0 / 288.0, tol.get(1e-10)));
            r.push(Check::relative("A_from_PsiS", "A = −∫ΨS = −(416/3)|S³|", c.a, target_a, tol.get(1e-4)));
            data.insert("J_half".into(), c.j_half.into());
            data.insert("PsiS".into(), c.psi_s.into());
            data.insert("A".into(), c.a.into());
        }
        Err(e) => fail(&mut r, "J_half", "J = −13/288", e),
    }
    match default_eta0_grid().and_then(|g| solve_eta0(&g, 1e-10)) {
        Ok(e) => {
            r.push(Check::relative("A_volume", "A = ∫e^Z(η₀ − Z²/2)", e.a_volume, target_a, tol.get(1e-4)));
            r.push(Check::relative("A_far_field", "A = |S³|L₀", S3_AREA * e.l0, target_a, tol.get(1e-4)));
            r.push(Check::relative("A0", "far-field slope A₀ = 104/3", e.a0, 104.0 / 3.0, tol.get(1e-3)));
            r.push(Check::relative("L0", "far-field L₀ = −416/3", e.l0, -416.0 / 3.0, tol.get(1e-3)));
            r.push(Check::relative("L0_vs_A0", "L₀ = −4A₀", e.l0, -4.0 * e.a0, tol.get(1e-6)));
            r.push(Check::at_most("C0", "shooting condition C₀ = 0", e.c0.abs(), tol.get(1e-8)));
            r.push(Check::at_most("eta0_ode_residual", "η₀ equation residual", e.ode_residual, tol.get(1e-6)));
            r.push(Check::holds("eta0_regular", "η₀(0) = 0, η₀'(0) = 0", e.eta.values[0] == 0.0));
            for (k, v) in [("A0", e.a0), ("L0", e.l0), ("C0", e.c0), ("ode_residual", e.ode_residual)] {
                data.insert(k.into(), v.into());
            }
            data.insert("A_volume".into(), e.a_volume.into());
        }
        Err(e) => fail(&mut r, "eta0", "η₀ shooting", e),
    }
    r.data("bubble", &data);
    r
}

#[derive(Serialize)]
struct KrOutput {
    psi: f64,
    grad: Vec<f64>,
    hessian_eigs: Vec<f64>,
    nondegenerate: bool,
    points: Vec<[f64; 4]>,
}

fn random_point(rng: &mut ChaCha8Rng, radius: f64) -> [f64; 4] {
    loop {
        let x: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let n2: f64 = x.iter().map(|v| v * v).sum();
        if n2 < 1.0 && n2 > 1e-6 {
            let s = radius * rng.gen_range(0.0f64..1.0).powf(0.25) / n2.sqrt();
            return x.map(|v| v * s);
        }
    }
}

pub fn green_checks(args: &GreenArgs, tol: Tolerance, seed: u64) -> Report {
    let mut r = Report::new("green");
    let bg = BallGreen::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut positive, mut worst_sym) = (true, 0.0_f64);
    for _ in 0..args.samples {
        let (x, y) = (random_point(&mut rng, 0.999), random_point(&mut rng, 0.999));
        match (bg.g(x, y), bg.g(y, x)) {
            (Ok(a), Ok(b)) => {
                positive &= a > 0.0;
                worst_sym = worst_sym.max((a - b).abs() / a.abs());
            }
            (Err(e), _) | (_, Err(e)) => fail(&mut r, "green_sample", PLUMBING, e),
        }
    }
    r.push(Check::holds("green_positive", "Boggio positivity G > 0", positive));
    r.push(Check::at_most("green_symmetric", "symmetry G(x,y) = G(y,x)", worst_sym, tol.get(1e-12)));
    r.push(Check::absolute("robin_origin", "R(0) = −1/(16π²)", crate::greenball::robin(&[0.0; 4]), -1.0 / (16.0 * PI * PI), tol.get(1e-14)));
    let mut worst = 0.0_f64;
    for k in 0..=9 {
        let rad = 0.1 * k as f64;
        let mut x = random_point(&mut rng, 1.0);
        let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x = x.map(|v| v * rad / n);
        match (bg.robin(x), bg.robin_quadrature_limit(x)) {
            (Ok(a), Ok(b)) => worst = worst.max((a - b).abs()),
            (Err(e), _) | (_, Err(e)) => fail(&mut r, "robin_sample", PLUMBING, e),
        }
    }
    r.push(Check::at_most("robin_vs_quadrature", "R(x) = κ(ln(1−|x|²) − ½) against the quadrature limit", worst, tol.get(1e-8)));
    match find_kr_critical(&[[0.3, -0.2, 0.1, 0.05]], 1e-13) {
        Ok(c) => {
            let dist = c.points[0].iter().map(|v| v * v).sum::<f64>().sqrt();
            r.push(Check::at_most("kr1_critical_at_origin", "k = 1 critical point at 0", dist, tol.get(1e-10)));
            let target = -1.0 / (4.0 * PI * PI);
            let dev = c.hessian_eigs.iter().map(|e| (e - target).abs()).fold(0.0, f64::max);
            r.push(Check::at_most("kr1_hessian", "Hessian −(1/4π²)·I at 0", dev, tol.get(1e-6)));
            r.push(Check::holds("kr1_nondegenerate", "nondegenerate critical point", c.nondegenerate));
        }
        Err(e) => fail(&mut r, "kr1_critical_at_origin", "k = 1 critical point at 0", e),
    }
    if let Some(x) = args.robin {
        match (bg.robin(x), bg.robin_quadrature_limit(x)) {
            (Ok(a), Ok(b)) => {
                r.push(Check::absolute("robin_at_point", "R(x) closed form against quadrature limit", a, b, tol.get(1e-8)));
                r.data("robin", &serde_json::json!({ "x": x, "closed_form": a, "quadrature": b }));
            }
            (Err(e), _) | (_, Err(e)) => fail(&mut r, "robin_at_point", PLUMBING, e),
        }
    }
    if let Some(Points(points)) = &args.kr {
        let res = if args.find_critical { find_kr_critical(points, 1e-12) } else { kirchhoff_routh(points) };
        match res {
            Ok(c) => {
                if args.find_critical {
                    r.push(Check::at_most("kr_gradient", "critical point of Ψ_k", c.gradient_norm(), tol.get(1e-10)));
                }
                r.data(
                    "kr",
                    &KrOutput {
                        psi: c.psi,
                        grad: c.gradient.clone(),
                        hessian_eigs: c.hessian_eigs.clone(),
                        nondegenerate: c.nondegenerate,
                        points: c.points.clone(),
                    },
                );
            }
            Err(e) => fail(&mut r, "kr", "critical point of Ψ_k", e),
        }
    } else if args.find_critical {
        r.error("kr", PLUMBING, "--find-critical needs starting points from --kr");
    }
    r
}

/// Poles used by the Green table when none are given.
pub const DEFAULT_CENTERS: [[f64; 4]; 2] = [[0.3, 0.0, 0.0, 0.0], [-0.1, 0.35, 0.1, 0.0]];

fn table_anchor(form: FormKind, same_center: bool, derivative: bool) -> &'static str {
    match (form, same_center, derivative) {
        (FormKind::P, true, false) => "P[G,G] = 1/(8π²)",
        (FormKind::P, true, true) => "P[G,∂G] = −½∂R or −D G",
        (FormKind::Q(_), true, false) => "Q[G,G] = ∂R or D G",
        (FormKind::Q(_), true, true) => "Q[G,∂G] = ∂²R/2 or D²G",
        (_, false, _) => "forms of fields regular in B_θ vanish",
    }
}

pub fn pohozaev_table_checks(centers: &[[f64; 4]], tol: Tolerance) -> Report {
    let mut r = Report::new("pohozaev");
    match green_form_table(centers) {
        Ok(t) => {
            for e in &t {
                let involved = e.first == e.j || e.second == e.j;
                r.push(Check::absolute(&e.id, table_anchor(e.form, involved, e.h.is_some()), e.computed.value, e.expected, tol.get(1e-5)));
            }
            r.data("table", &t);
        }
        Err(e) => fail(&mut r, "table", "Green form table", e),
    }
    r
}

pub fn theta_sweep_checks(tol: Tolerance) -> Report {
    let mut r = Report::new("pohozaev");
    let c = DEFAULT_CENTERS[0];
    let other = DEFAULT_CENTERS[1];
    let thetas = [0.05, 0.1, 0.2];
    let g_c = GreenPole { pole: c };
    let g_o = GreenPole { pole: other };
    let dg_c = GreenPoleDerivative { pole: c, dir: [0.0, 1.0, 0.0, 0.0] };
    let sweeps = [
        ("theta_sweep[Gc,Gc]", theta_sweep(&g_c, &g_c, c, &thetas)),
        ("theta_sweep[Gc,Go]", theta_sweep(&g_c, &g_o, c, &thetas)),
        ("theta_sweep[Gc,d2Gc]", theta_sweep(&g_c, &dg_c, c, &thetas)),
        ("theta_sweep[Go,d2Gc]", theta_sweep(&g_o, &dg_c, c, &thetas)),
    ];
    let mut data = Vec::new();
    for (id, s) in sweeps {
        match s {
            Ok(s) => {
                r.push(Check::at_most(id, "forms independent of θ", s.max_variation, tol.get(1e-8)));
                data.push(s);
            }
            Err(e) => fail(&mut r, id, "forms independent of θ", e),
        }
    }
    r.data("theta_sweep", &data);
    r
}

/// Identity residuals at the given exponents, about 0 (θ = 0.5) and about
/// 0.2e₁ (θ = 0.2).
pub fn identity_checks(ps: &[f64], tol: Tolerance) -> Report {
    let mut r = Report::new("pohozaev");
    let mut data = Vec::new();
    for &p in ps {
        let sol = match cold_start(p, &SolverOptions::default()) {
            Ok(s) => s,
            Err(e) => {
                fail(&mut r, &format!("solve(p={p})"), PLUMBING, e);
                continue;
            }
        };
        identity_checks_for(&sol, &mut r, &mut data, tol);
    }
    r.data("identities", &data);
    r
}

fn identity_checks_for(sol: &RadialSolution, r: &mut Report, data: &mut Vec<serde_json::Value>, tol: Tolerance) {
    let p = sol.p;
    for (c, theta) in [([0.0; 4], 0.5), ([0.2, 0.0, 0.0, 0.0], 0.2)] {
        let tag = format!("p={p},c1={},theta={theta}", c[0]);
        match solution_identities(sol, c, theta) {
            Ok(s) => {
                r.push(Check::at_most(&format!("translation_identity[{tag}]"), "Q_i(u,u) translation identity", s.q_residual, tol.get(1e-5)));
                r.push(Check::at_most(&format!("dilation_identity[{tag}]"), "P(u,u) dilation identity", s.p_residual, tol.get(1e-5)));
                data.push(serde_json::json!({ "kind": "solution", "result": s }));
            }
            Err(e) => fail(r, &format!("solution_identities[{tag}]"), PLUMBING, e),
        }
        for (name, xi) in [("d1u", LinearizedField::Translation(0)), ("dilation", LinearizedField::Dilation)] {
            match linearized_identities(sol, xi, c, theta) {
                Ok(s) => {
                    r.push(Check::at_most(&format!("linearized_Q[{name},{tag}]"), "Q_i(ξ,u) for an exact linearised solution", s.q_residual, tol.get(1e-5)));
                    r.push(Check::at_most(&format!("linearized_P[{name},{tag}]"), "P(ξ,u) for an exact linearised solution", s.p_residual, tol.get(1e-5)));
                    data.push(serde_json::json!({ "kind": name, "result": s }));
                }
                Err(e) => fail(r, &format!("linearized_identities[{name},{tag}]"), PLUMBING, e),
            }
        }
    }
}

/// One JSON record of a solution.
#[derive(Serialize)]
struct SolutionRecord {
    p: f64,
    u_max: f64,
    eps_p: f64,
    #[serde(rename = "C_p")]
    c_p: f64,
    energy: f64,
    energy_identity: f64,
    mass_check: f64,
    mass_prediction: f64,
    newton_residual: f64,
    pohozaev_residuals: Option<[f64; 2]>,
    rescaled_distances: Option<[f64; 2]>,
}

fn solution_record(sol: &RadialSolution, eta0: Option<&Eta0Solution>, identities: bool) -> SolutionRecord {
    let d = crate::solver::diagnostics(sol);
    let pohozaev_residuals = if identities {
        solution_identities(sol, [0.0; 4], 0.5).ok().map(|s| [s.q_residual, s.p_residual])
    } else {
        None
    };
    let rescaled_distances = eta0.and_then(|e| rescaled_profiles(sol, e, 5.0).ok()).map(|r| [r.d0, r.d1]);
    SolutionRecord {
        p: d.p,
        u_max: d.u_max,
        eps_p: d.eps_p,
        c_p: d.c_p,
        energy: d.energy,
        energy_identity: d.energy_identity,
        mass_check: d.mass_check,
        mass_prediction: d.mass_prediction,
        newton_residual: d.newton_residual,
        pohozaev_residuals,
        rescaled_distances,
    }
}

fn eta0() -> Option<Eta0Solution> {
    default_eta0_grid().and_then(|g| solve_eta0(&g, 1e-10)).ok()
}

pub fn solve_checks(p: f64, grid_size: usize, tol: Tolerance) -> Report {
    let mut r = Report::new("solve");
    r.config("p", fmt_real(p));
    r.config("grid_size", grid_size);
    let sol = match cold_start(p, &opts(grid_size)) {
        Ok(s) => s,
        Err(e) => {
            fail(&mut r, "solve", PLUMBING, e);
            return r;
        }
    };
    let d = crate::solver::diagnostics(&sol);
    r.push(Check::at_most("newton_residual", PLUMBING, d.newton_residual, tol.get(1e-11)));
    r.push(Check::at_most("boundary_u", "clamped boundary u = 0", d.boundary_u.abs(), tol.get(1e-12)));
    r.push(Check::at_most("boundary_du", "clamped boundary ∂_νu = 0", d.boundary_du.abs(), tol.get(1e-10)));
    r.push(Check::holds("max_at_origin", "radial decreasing solution", d.max_at_origin));
    r.push(Check::relative("energy_identity", "p∫|Δu|² = p∫(u⁺)^{p+1}", d.energy, d.energy_identity, tol.get(1e-8)));
    let mut data = Vec::new();
    identity_checks_for(&sol, &mut r, &mut data, tol);
    let e = eta0();
    r.data("solution", &solution_record(&sol, e.as_ref(), true));
    r.data("identities", &data);
    r
}

/// Relative spread `(max − min)/max` of `values`.
fn spread(values: &[f64]) -> f64 {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    (hi - lo) / hi.abs()
}

pub fn branch_report(branch: &Branch, tol: Tolerance, identities: bool) -> Report {
    let mut r = Report::new("branch");
    let e = eta0();
    let records: Vec<SolutionRecord> =
        branch.records.iter().map(|rec| solution_record(&rec.solution, e.as_ref(), identities)).collect();
    for rec in &branch.records {
        r.push(Check::at_most(&format!("newton_residual[p={}]", rec.p), PLUMBING, rec.diagnostics.newton_residual, tol.get(1e-11)));
    }
    match asymptotic_report(branch) {
        Ok(a) => {
            r.push(Check::holds("u_max_monotone", "u_max → √e monotonically", a.u_max_monotone));
            r.push(Check::relative("c1", "u_max expansion coefficient c₁ = 2 + 2ln(8√6) + 8/3", a.c1_fit, a.c1_predicted, tol.get(0.1)));
            r.push(Check::relative("c2", "ln ε_p + p/8 → −½ − ½ln(8√6) − 13/24", a.c2_fit, a.c2_predicted, tol.get(0.1)));
            r.push(Check::relative("pCp_limit", "p C_p → 64π²√e", a.pcp_limit, a.pcp_target, tol.get(0.03)));
            r.push(Check::at_least("mass_residual_decay", "mass_check − 64π²(1 − 13/(3p)) = o(1/p)", -a.mass_residual_exponent, 1.5));
            r.data("asymptotics", &a);
        }
        Err(e) => fail(&mut r, "asymptotics", PLUMBING, e),
    }
    let p_last = branch.records.last().map(|x| x.p).unwrap_or(0.0);
    let top: Vec<&SolutionRecord> = records.iter().filter(|x| x.p >= 0.5 * p_last * (1.0 - 1e-12)).collect();
    let scaled: Option<Vec<[f64; 2]>> =
        top.iter().map(|x| x.rescaled_distances.map(|[d0, d1]| [x.p * d0, x.p * d1])).collect();
    match scaled {
        Some(s) if s.len() >= 2 => {
            let d0: Vec<f64> = s.iter().map(|v| v[0]).collect();
            let d1: Vec<f64> = s.iter().map(|v| v[1]).collect();
            r.push(Check::at_most("p_d0_bounded", "sup_{|y|≤5}|Z_p − Z| = O(1/p)", spread(&d0), tol.get(0.25)));
            r.push(Check::at_most("p_d1_bounded", "‖p(Z_p − Z) − η₀‖ = O(1/p)", spread(&d1), tol.get(0.25)));
        }
        _ => r.error("rescaled", PLUMBING, "rescaled distances unavailable on the top octave"),
    }
    r.data("records", &records);
    r
}

fn records_csv(branch: &Branch) -> String {
    let mut s = String::from("p,u_max,eps_p,C_p,energy,mass_check,mass_prediction,newton_residual\n");
    for rec in &branch.records {
        let d = &rec.diagnostics;
        let row: Vec<String> = [d.p, d.u_max, d.eps_p, d.c_p, d.energy, d.mass_check, d.mass_prediction, d.newton_residual]
            .iter()
            .map(|&x| fmt_real(x))
            .collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
struct SpectrumRow {
    p: f64,
    l: usize,
    eigs: Vec<f64>,
    volume_eigs: Vec<f64>,
    min_abs_eig: f64,
    a_coeff: Option<f64>,
    b_coeff: Option<f64>,
    #[serde(rename = "A_p")]
    a_p: Option<f64>,
    projection_residual: Option<f64>,
}

pub fn spectrum_checks(branch: &Branch, lmax: usize, count: usize, tol: Tolerance) -> Report {
    let mut r = Report::new("spectrum");
    match RadialGrid::graded(4000, 200.0, 0.01).and_then(|g| liouville_kernel_check(&g)) {
        Ok(k) => {
            r.push(Check::at_most("kernel_l0", "Δ²v = e^Z v for v = 4 + rZ'", k.v0_max_residual, tol.get(1e-6)));
            r.push(Check::at_most("kernel_l1", "Δ²v = e^Z v for v = Z'", k.v1_max_residual, tol.get(1e-6)));
            r.push(Check::absolute("kernel_l0_at_origin", "4 + rZ' equals 4 at 0", k.v0_at_zero, 4.0, 0.0));
            r.data("liouville_kernel", &k);
        }
        Err(e) => fail(&mut r, "kernel", "kernel of the linearised Liouville operator", e),
    }
    let scan = match nondegeneracy_scan(branch, lmax, count) {
        Ok(s) => s,
        Err(e) => {
            fail(&mut r, "scan", "nondegeneracy along the branch", e);
            return r;
        }
    };
    r.push(Check::holds("no_sign_change", "no eigenvalue crosses zero along the branch", scan.no_sign_change));
    for (p, m) in scan.min_abs_eig.iter() {
        r.push(Check::holds(&format!("nonzero[p={p}]"), "L_p has trivial kernel", *m > 0.0));
    }
    r.push(Check::holds("nonzero_certified", "L_p has trivial kernel", scan.all_nonzero));
    for row in &scan.rows {
        r.push(Check::holds(&format!("morse_complete[p={},l={}]", row.p, row.ell), PLUMBING, row.morse_complete));
    }
    r.push(Check::holds("kr_gate", "Robin Hessian at 0 nondegenerate", scan.kr_nondegenerate));
    let rows: Vec<SpectrumRow> = scan
        .rows
        .iter()
        .map(|m| {
            let shape = scan.shapes.iter().find(|s| s.p == m.p && s.ell == m.ell);
            SpectrumRow {
                p: m.p,
                l: m.ell,
                eigs: m.tracked.clone(),
                volume_eigs: m.volume.clone(),
                min_abs_eig: m.min_abs(),
                a_coeff: shape.map(|s| s.a),
                b_coeff: shape.map(|s| s.b),
                a_p: shape.map(|s| s.a_p),
                projection_residual: shape.map(|s| s.projection_residual),
            }
        })
        .collect();
    r.data("rows", &rows);
    r.data("scan", &scan);
    r
}

pub fn run(cli: &Cli) -> Report {
    let tol = Tolerance(cli.tol);
    let mut report = match &cli.command {
        Command::Bubble => bubble_checks(tol),
        Command::Green(a) => green_checks(a, tol, cli.seed),
        Command::Pohozaev(a) => {
            let none = !(a.table || a.identities || a.theta_sweep);
            let mut r = Report::new("pohozaev");
            if a.table || none {
                r.extend(pohozaev_table_checks(a.centers.as_ref().map_or(&DEFAULT_CENTERS[..], |c| &c.0[..]), tol));
            }
            if a.theta_sweep || none {
                r.extend(theta_sweep_checks(tol));
            }
            if a.identities || none {
                r.extend(identity_checks(&[10.0, 40.0], tol));
            }
            r
        }
        Command::Solve(a) => solve_checks(a.p, a.grid_size, tol),
        Command::Branch(a) => {
            let mut r = match continuation(a.p_start, a.p_end, StepPolicy::Multiplicative(a.factor), &opts(a.grid_size)) {
                Ok(b) => {
                    if let Some(path) = &a.records_csv {
                        if let Err(e) = std::fs::write(path, records_csv(&b)) {
                            let mut r = Report::new("branch");
                            r.error("records_csv", PLUMBING, e);
                            return r;
                        }
                    }
                    branch_report(&b, tol, true)
                }
                Err(e) => {
                    let mut r = Report::new("branch");
                    r.error("continuation", PLUMBING, e);
                    r
                }
            };
            r.config("p_start", fmt_real(a.p_start));
            r.config("p_end", fmt_real(a.p_end));
            r.config("factor", fmt_real(a.factor));
            r.config("grid_size", a.grid_size);
            r
        }
        Command::Spectrum(a) => {
            let mut r = match branch_through(&a.p_grid, &opts(a.grid_size)) {
                Ok(b) => spectrum_checks(&b, a.lmax, a.count, tol),
                Err(e) => {
                    let mut r = Report::new("spectrum");
                    r.error("branch", PLUMBING, e);
                    r
                }
            };
            r.config("p_grid", a.p_grid.iter().map(|&x| fmt_real(x)).collect::<Vec<_>>().join(","));
            r.config("lmax", a.lmax);
            r.config("count", a.count);
            r
        }
        Command::Verify(a) => {
            let mut r = Report::new("verify");
            r.extend(bubble_checks(tol));
            r.extend(pohozaev_table_checks(&DEFAULT_CENTERS, tol));
            if a.all && !a.quick {
                r.extend(green_checks(&GreenArgs { samples: 1000, ..Default::default() }, tol, cli.seed));
                r.extend(theta_sweep_checks(tol));
                r.extend(identity_checks(&[10.0, 40.0], tol));
                match continuation(10.0, 160.0, StepPolicy::Multiplicative(1.25), &SolverOptions::default()) {
                    Ok(b) => r.extend(branch_report(&b, tol, false)),
                    Err(e) => r.error("branch", PLUMBING, e),
                }
                match branch_through(&[10.0, 20.0, 40.0, 80.0, 160.0], &SolverOptions::default()) {
                    Ok(b) => r.extend(spectrum_checks(&b, 4, 6, tol)),
                    Err(e) => r.error("spectrum", PLUMBING, e),
                }
            }
            r.config("all", a.all);
            r.config("quick", a.quick);
            r
        }
    };
    report.config("seed", cli.seed);
    report.config("format", format!("{:?}", cli.format).to_lowercase());
    if let Some(t) = cli.tol {
        report.config("tol", fmt_real(t));
    }
    report
}

/// Serialises `report` and writes it to `--out`.
pub fn emit(report: &Report, cli: &Cli) -> std::io::Result<()> {
    let text = match cli.format {
        Format::Json => report.to_json(),
        Format::Csv => report.to_csv(),
    };
    if cli.out == "-" {
        std::io::stdout().write_all(text.as_bytes())
    } else {
        std::fs::write(&cli.out, text)
    }
}

/// Parses, runs, emits; returns the process exit code (2 for usage errors,
/// 1 for failed checks or I/O errors, 0 otherwise).
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let report = run(&cli);
    if let Err(e) = emit(&report, &cli) {
        eprintln!("cannot write report: {e}");
        return 1;
    }
    if report.all_pass() {
        0
    } else {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_with_two() {
        assert_eq!(main_with_args(["biharmonic-lab", "--bogus", "bubble"]), 2);
        assert_eq!(main_with_args(["biharmonic-lab", "solve", "--p", "1"]), 2);
        assert_eq!(main_with_args(["biharmonic-lab", "--tol", "-1", "bubble"]), 2);
        assert_eq!(main_with_args(["biharmonic-lab", "green", "--robin", "1,0,0,0"]), 2);
        assert_eq!(main_with_args(["biharmonic-lab", "green", "--kr", "0.1,0.2"]), 2);
        assert_eq!(main_with_args(["biharmonic-lab"]), 2);
    }

    #[test]
    fn point_lists_parse() {
        assert_eq!(parse_points("0.1,0,0,0;0,0.2,0,0").unwrap().0, vec![[0.1, 0.0, 0.0, 0.0], [0.0, 0.2, 0.0, 0.0]]);
        assert!(parse_point("0.1,0,0").is_err());
        assert_eq!(parse_list("10, 20,40").unwrap(), vec![10.0, 20.0, 40.0]);
    }

    #[test]
    fn tolerance_override() {
        assert_eq!(Tolerance(None).get(1e-5), 1e-5);
        assert_eq!(Tolerance(Some(1e-3)).get(1e-5), 1e-3);
        let strict = bubble_checks(Tolerance(Some(1e-300)));
        assert!(!strict.all_pass());
    }

    #[test]
    fn green_with_flags() {
        let args = GreenArgs { robin: Some([0.2, 0.1, 0.0, 0.3]), kr: Some(Points(vec![[0.2, 0.0, 0.0, 0.0]])), find_critical: true, samples: 50 };
        let r = green_checks(&args, Tolerance(None), 7);
        assert!(r.all_pass(), "{}", r.to_json());
        assert!(r.data.contains_key("kr") && r.data.contains_key("robin"));
        let same = green_checks(&args, Tolerance(None), 7);
        assert_eq!(r.to_json(), same.to_json());
    }
}
