//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs with `cargo test --test acceptance`.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use biharmonic_lab::bubble::{
    correction_constants, bubble_b, bubble_moment, bubble_moment_closed_form, default_eta0_grid, solve_eta0,
    MomentKind,
};
use biharmonic_lab::cli::{green_checks, identity_checks, pohozaev_table_checks, theta_sweep_checks, GreenArgs, Tolerance, DEFAULT_CENTERS};
use biharmonic_lab::numerics::RadialGrid;
use biharmonic_lab::report::Report;
use biharmonic_lab::solver::{
    asymptotic_report, branch_through, continuation, rescaled_profiles, Branch, SolverOptions, StepPolicy,
};
use biharmonic_lab::spectrum::{liouville_kernel_check, nondegeneracy_scan};
use biharmonic_lab::S3_AREA;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new() -> Outcome {
        Outcome { pass: true, detail: String::new() }
    }

    fn check(&mut self, name: &str, ok: bool, value: impl std::fmt::Display) {
        self.pass &= ok;
        if !self.detail.is_empty() {
            self.detail.push_str("; ");
        }
        let mark = if ok { "" } else { " (!)" };
        self.detail.push_str(&format!("{name} {value}{mark}"));
    }

    fn rel(&mut self, name: &str, computed: f64, expected: f64, tol: f64) {
        let dev = (computed - expected).abs() / expected.abs();
        self.check(name, dev < tol, format!("rel {dev:.1e} < {tol:.0e}"));
    }

    fn report(&mut self, name: &str, r: &Report) {
        let failed: Vec<&str> = r.checks.iter().filter(|c| !c.pass).map(|c| c.check_id.as_str()).collect();
        let ok = r.all_pass();
        let msg = if ok { format!("{} checks", r.checks.len()) } else { format!("failing {failed:?} {:?}", r.errors) };
        self.check(name, ok, msg);
    }

    fn err(&mut self, name: &str, e: impl std::fmt::Display) {
        self.check(name, false, format!("error: {e}"));
    }
}

fn criterion(n: usize, title: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let mut o = f();
    let elapsed = t.elapsed();
    o.check("runtime", elapsed < limit, format!("{:.2}s < {}s", elapsed.as_secs_f64(), limit.as_secs()));
    let tag = if o.pass { "PASS" } else { "FAIL" };
    println!("{tag} criterion {n}: {title} [{}]", o.detail);
    o.pass
}

fn bubble_constants() -> Outcome {
    let mut o = Outcome::new();
    let pi2 = PI * PI;
    let cases = [
        (MomentKind::Mass, "mass", 64.0 * pi2, 1e-10),
        (MomentKind::Log, "log moment", 32.0 * pi2 * bubble_b().ln(), 1e-8),
        (MomentKind::Second, "second moment", bubble_moment_closed_form(MomentKind::Second), 1e-8),
    ];
    for (kind, name, expected, tol) in cases {
        match bubble_moment(kind) {
            Ok(v) => o.rel(name, v, expected, tol),
            Err(e) => o.err(name, e),
        }
    }
    o
}

fn correction_constants_routes() -> Outcome {
    let mut o = Outcome::new();
    let target = -416.0 / 3.0 * S3_AREA;
    match correction_constants() {
        Ok(c) => {
            o.rel("J", c.j_half, -13.0 / 288.0, 1e-10);
            o.rel("J ledger", c.j_half_ledger, -13.0 / 288.0, 1e-10);
            o.rel("A via ΨS", c.a, target, 1e-4);
        }
        Err(e) => o.err("constants", e),
    }
    match default_eta0_grid().and_then(|g| solve_eta0(&g, 1e-10)) {
        Ok(e) => {
            o.rel("A via volume", e.a_volume, target, 1e-4);
            o.rel("A via far field", S3_AREA * e.l0, target, 1e-4);
        }
        Err(e) => o.err("eta0", e),
    }
    o
}

fn eta0_solve() -> Outcome {
    let mut o = Outcome::new();
    match default_eta0_grid().and_then(|g| solve_eta0(&g, 1e-10)) {
        Ok(e) => {
            o.check("ODE residual", e.ode_residual < 1e-6, format!("{:.1e} < 1e-6", e.ode_residual));
            o.check("C0", e.c0.abs() < 1e-8, format!("{:.1e} < 1e-8", e.c0.abs()));
            o.rel("A0", e.a0, 104.0 / 3.0, 1e-3);
            o.rel("L0", e.l0, -416.0 / 3.0, 1e-3);
        }
        Err(e) => o.err("eta0", e),
    }
    o
}

fn green_layer() -> Outcome {
    let mut o = Outcome::new();
    let args = GreenArgs { samples: 1000, ..Default::default() };
    o.report("positivity, symmetry, Robin, k=1 critical point", &green_checks(&args, Tolerance(None), 0));
    o
}

fn pohozaev_table() -> Outcome {
    let mut o = Outcome::new();
    o.report("table to 1e-5", &pohozaev_table_checks(&DEFAULT_CENTERS, Tolerance(None)));
    o.report("θ-independence to 1e-8", &theta_sweep_checks(Tolerance(None)));
    o
}

fn solver_identities() -> Outcome {
    let mut o = Outcome::new();
    let r = identity_checks(&[10.0, 40.0], Tolerance(None));
    let worst = r.checks.iter().map(|c| c.computed).fold(0.0, f64::max);
    o.report(&format!("max residual {worst:.1e}"), &r);
    o
}

fn asymptotics(branch: &Option<Branch>) -> Outcome {
    let mut o = Outcome::new();
    let Some(branch) = branch else {
        o.check("branch", false, "continuation failed");
        return o;
    };
    match asymptotic_report(branch) {
        Ok(a) => {
            o.check("u_max monotone", a.u_max_monotone, format!("last {:.6}", a.u_max_last));
            o.rel("c1", a.c1_fit, a.c1_predicted, 0.1);
            o.rel("c2", a.c2_fit, a.c2_predicted, 0.1);
            o.rel("pC_p limit", a.pcp_limit, a.pcp_target, 0.03);
            let rate = -a.mass_residual_exponent;
            o.check("mass residual exponent", rate >= 1.5, format!("{rate:.2} >= 1.5"));
            match continuation(10.0, 320.0, StepPolicy::Multiplicative(1.25), &SolverOptions::default())
                .and_then(|b| asymptotic_report(&b))
            {
                Ok(l) => {
                    let dev = |x: &biharmonic_lab::solver::AsymptoticReport| (x.c1_fit / x.c1_predicted - 1.0).abs();
                    let (d160, d320) = (dev(&a), dev(&l));
                    o.check("c1 improves with p_end", d320 <= d160, format!("{d160:.1e} at 160 -> {d320:.1e} at 320"));
                }
                Err(e) => o.err("extended branch", e),
            }
        }
        Err(e) => o.err("asymptotics", e),
    }
    o
}

fn rescaled(branch: &Option<Branch>) -> Outcome {
    let mut o = Outcome::new();
    let Some(branch) = branch else {
        o.check("branch", false, "continuation failed");
        return o;
    };
    let eta0 = match default_eta0_grid().and_then(|g| solve_eta0(&g, 1e-10)) {
        Ok(e) => e,
        Err(e) => {
            o.err("eta0", e);
            return o;
        }
    };
    let p_last = branch.records.last().map_or(0.0, |r| r.p);
    let mut pd0 = Vec::new();
    let mut pd1 = Vec::new();
    for rec in branch.records.iter().filter(|r| r.p >= 0.5 * p_last * (1.0 - 1e-12)) {
        match rescaled_profiles(&rec.solution, &eta0, 5.0) {
            Ok(r) => {
                pd0.push(rec.p * r.d0);
                pd1.push(rec.p * r.d1);
            }
            Err(e) => o.err("profiles", e),
        }
    }
    for (name, v) in [("p·d0", &pd0), ("p·d1", &pd1)] {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let var = (hi - lo) / hi;
        o.check(name, v.len() >= 2 && var < 0.25, format!("in [{lo:.3}, {hi:.3}], variation {var:.3} < 0.25"));
    }
    o
}

fn spectrum() -> Outcome {
    let mut o = Outcome::new();
    match RadialGrid::graded(4000, 200.0, 0.01).and_then(|g| liouville_kernel_check(&g)) {
        Ok(k) => {
            o.check("kernel 4 + rZ'", k.v0_max_residual < 1e-6, format!("{:.1e} < 1e-6", k.v0_max_residual));
            o.check("kernel Z'", k.v1_max_residual < 1e-6, format!("{:.1e} < 1e-6", k.v1_max_residual));
        }
        Err(e) => o.err("kernel", e),
    }
    let scan = branch_through(&[10.0, 20.0, 40.0, 80.0, 160.0], &SolverOptions::default())
        .and_then(|b| nondegeneracy_scan(&b, 4, 6));
    match scan {
        Ok(s) => {
            o.check("no sign change", s.no_sign_change, format!("{} changes", s.sign_changes.len()));
            let smallest = s.min_abs_eig.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
            o.check("min|ν| > 0 certified", s.all_nonzero, format!("smallest {smallest:.2e}"));
        }
        Err(e) => o.err("scan", e),
    }
    o
}

fn main() -> ExitCode {
    let start = Instant::now();
    let secs = Duration::from_secs;
    let mut ok = vec![
        criterion(1, "bubble constants", secs(1), bubble_constants),
        criterion(2, "J integral and the three routes to A", secs(30), correction_constants_routes),
        criterion(3, "η₀ shooting", secs(30), eta0_solve),
        criterion(4, "Green layer", secs(10), green_layer),
        criterion(5, "Green form table and θ-independence", secs(30), pohozaev_table),
        criterion(6, "solver identities", secs(60), solver_identities),
    ];
    let t = Instant::now();
    let branch = continuation(10.0, 160.0, StepPolicy::Multiplicative(1.25), &SolverOptions::default()).ok();
    let branch_time = t.elapsed();
    ok.push(criterion(7, "asymptotics along p ∈ [10, 160]", secs(300).saturating_sub(branch_time), || asymptotics(&branch)));
    ok.push(criterion(8, "rescaled convergence", secs(60), || rescaled(&branch)));
    ok.push(criterion(9, "spectrum", secs(300), spectrum));
    let passed = ok.iter().filter(|&&x| x).count();
    println!("{passed}/{} criteria passed in {:.1}s", ok.len(), start.elapsed().as_secs_f64());
    if passed == ok.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
