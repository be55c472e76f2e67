use approx::assert_relative_eq;
use proptest::prelude::*;

use biharmonic_lab::greenball::{kirchhoff_routh, BallGreen};
use biharmonic_lab::numerics::BandMatrix;
use biharmonic_lab::report::{fmt_real, Check, PLUMBING};

/// A point of the open ball of radius `rmax`, from a direction and a radius fraction.
fn ball_point(rmax: f64) -> impl Strategy<Value = [f64; 4]> {
    (prop::array::uniform4(-1.0f64..1.0), 0.0f64..1.0).prop_filter_map("direction", move |(d, t)| {
        let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        (n > 1e-3).then(|| d.map(|v| v * t * rmax / n))
    })
}

fn apart(x: &[f64; 4], y: &[f64; 4]) -> bool {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() > 1e-8
}

proptest! {
    #[test]
    fn green_is_positive_and_symmetric(x in ball_point(0.99), y in ball_point(0.99)) {
        prop_assume!(apart(&x, &y));
        let bg = BallGreen::default();
        let (a, b) = (bg.g(x, y).unwrap(), bg.g(y, x).unwrap());
        prop_assert!(a > 0.0);
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }

    #[test]
    fn green_is_invariant_under_coordinate_symmetries(x in ball_point(0.95), y in ball_point(0.95), k in 0usize..4) {
        prop_assume!(apart(&x, &y));
        let bg = BallGreen::default();
        let flip = |p: [f64; 4]| {
            let mut q = [p[1], p[2], p[3], p[0]];
            q[k] = -q[k];
            q
        };
        assert_relative_eq!(bg.g(x, y).unwrap(), bg.g(flip(x), flip(y)).unwrap(), max_relative = 1e-12);
        assert_relative_eq!(bg.robin(x).unwrap(), bg.robin(flip(x)).unwrap(), max_relative = 1e-12);
    }

    #[test]
    fn regular_part_tends_to_robin(x in ball_point(0.9), d in prop::array::uniform4(-1.0f64..1.0)) {
        let bg = BallGreen::default();
        let y = [x[0] + 1e-7 * d[0], x[1] + 1e-7 * d[1], x[2] + 1e-7 * d[2], x[3] + 1e-7 * d[3]];
        let r = bg.robin(x).unwrap();
        prop_assert!((bg.h(x, y).unwrap() - r).abs() < 1e-6 * r.abs().max(1.0));
    }

    #[test]
    fn kirchhoff_routh_ignores_point_order(a in ball_point(0.8), b in ball_point(0.8)) {
        prop_assume!(apart(&a, &b));
        let ab = kirchhoff_routh(&[a, b]).unwrap();
        let ba = kirchhoff_routh(&[b, a]).unwrap();
        assert_relative_eq!(ab.psi, ba.psi, max_relative = 1e-12);
        for (u, v) in ab.hessian_eigs.iter().zip(&ba.hessian_eigs) {
            assert_relative_eq!(*u, *v, epsilon = 1e-9 * ab.min_abs_eig.max(1.0), max_relative = 1e-8);
        }
    }

    #[test]
    fn check_passes_iff_within_tolerance(c in -1e3f64..1e3, e in -1e3f64..1e3, tol in 1e-12f64..1e3) {
        let k = Check::absolute("x", PLUMBING, c, e, tol);
        prop_assert_eq!(k.pass, (c - e).abs() <= tol);
        let m = Check::at_most("x", PLUMBING, c, e);
        prop_assert_eq!(m.pass, c <= e);
    }

    #[test]
    fn printed_reals_round_trip(x in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO) {
        prop_assert_eq!(fmt_real(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn banded_solve_inverts_matvec(
        n in 5usize..40,
        kl in 0usize..4,
        ku in 0usize..4,
        seed in prop::collection::vec(-1.0f64..1.0, 40 * 9),
        x in prop::collection::vec(-10.0f64..10.0, 40),
    ) {
        let mut a = BandMatrix::zeros(n, kl, ku);
        for i in 0..n {
            for j in a.row_range(i) {
                a.add(i, j, seed[i * 9 + (j + 4 - i)]);
            }
        }
        // Off-diagonal pivoting is exercised by a weak diagonal on alternate rows.
        for i in (0..n).step_by(2) {
            a.add(i, i, 5.0);
        }
        let x = &x[..n];
        let b = a.matvec(x);
        let Ok(lu) = a.clone().factor() else { return Ok(()) };
        let y = lu.solve(&b);
        let r = a.matvec(&y);
        let scale = b.iter().map(|v| v.abs()).fold(1.0, f64::max);
        for (u, v) in r.iter().zip(&b) {
            prop_assert!((u - v).abs() < 1e-8 * scale);
        }
    }
}
