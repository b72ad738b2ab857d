mod common;

use std::f64::consts::PI;

use common::{arb_cvec, arb_lattice, arb_model, model};
use kgprop::discrete_operators::OperatorSet;
use kgprop::geometry::Lattice;
use kgprop::linalg::{adjoint, block2, form, herm_eigenvalues, identity, max_abs, solve, zeros, CMat};
use proptest::prelude::*;

fn ops_strategy() -> impl Strategy<Value = (OperatorSet, f64)> {
    (arb_model(), arb_lattice(), -1.0..1.0f64).prop_map(|(m, lat, t)| {
        let o = OperatorSet::assemble(&m, &lat, t).unwrap();
        (o, t)
    })
}

fn with_vectors() -> impl Strategy<Value = (OperatorSet, Vec<kgprop::linalg::CVec>)> {
    ops_strategy().prop_flat_map(|(o, _)| {
        let n2 = 2 * o.n();
        (Just(o), prop::collection::vec(arb_cvec(n2), 4))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn qb_is_hermitian((o, _) in ops_strategy()) {
        let qb = &o.q * &o.b;
        let scale = max_abs(o.b.as_ref()).max(1.0);
        prop_assert!(max_abs((&qb - adjoint(qb.as_ref())).as_ref()) <= 1e-14 * scale);
        let lhs = adjoint(o.b.as_ref()) * &o.q;
        prop_assert!(max_abs((&lhs - &qb).as_ref()) <= 1e-14 * scale);
        prop_assert_eq!(&qb, &o.h);
    }

    #[test]
    fn l_and_h_are_exactly_hermitian((o, _) in ops_strategy()) {
        prop_assert_eq!(&o.l, &adjoint(o.l.as_ref()));
        prop_assert_eq!(&o.h, &adjoint(o.h.as_ref()));
    }

    #[test]
    fn energy_form_bounds((o, vs) in with_vectors()) {
        let a = o.a_bound;
        prop_assert!(a < 1.0);
        for u in &vs {
            let e = form(u, &o.h, u).re;
            let e0 = form(u, &o.h0, u).re;
            prop_assert!(e >= (1.0 - a) * e0 * (1.0 - 1e-12));
            prop_assert!(e <= (1.0 + a) * e0 * (1.0 + 1e-12));
        }
    }

    #[test]
    fn dual_form_bounds((o, vs) in with_vectors()) {
        let a = o.a_bound;
        let n2 = 2 * o.n();
        let h0_inv = solve(&o.h0, &identity(n2));
        let d0 = &o.q * &h0_inv * &o.q;
        for u in &vs {
            let s = form(u, &o.s_dual, u).re;
            let s0 = form(u, &d0, u).re;
            prop_assert!(s >= s0 / (1.0 + a) * (1.0 - 1e-10));
            prop_assert!(s <= s0 / (1.0 - a) * (1.0 + 1e-10));
        }
    }

    #[test]
    fn generator_factorizes((o, _) in ops_strategy()) {
        let n = o.n();
        let (one, zero) = (identity(n), zeros(n, n));
        let wd = adjoint(o.w.as_ref());
        let left = block2(&one, &zero, &wd, &one);
        let mid = block2(&zero, &one, &(&o.l - &wd * &o.w), &zero);
        let right = block2(&one, &zero, &o.w, &one);
        let prod = &left * &mid * &right;
        let scale = max_abs(o.b.as_ref()).max(1.0);
        prop_assert!(max_abs((&prod - &o.b).as_ref()) <= 1e-12 * scale);
    }

    #[test]
    fn quantized_vector_potential_is_a_gauge(k in 1i32..4, n in 6usize..14, h in 0.5..1.5f64, m in 0.8..1.5f64) {
        let lat = Lattice::new(n, h).unwrap();
        let a1 = 2.0 * PI * f64::from(k) / (n as f64 * h);
        let l0 = OperatorSet::assemble(&model("static", &[("m", m)]), &lat, 0.0).unwrap().l;
        let la = OperatorSet::assemble(&model("static", &[("m", m), ("a1", a1)]), &lat, 0.0).unwrap().l;
        let e0 = herm_eigenvalues(&l0).unwrap();
        let ea = herm_eigenvalues(&la).unwrap();
        for (x, y) in e0.iter().zip(&ea) {
            prop_assert!((x - y).abs() <= 1e-10 * x.abs().max(1.0));
        }
        // conjugation by the diagonal phase exp(+-i a1 x_j)
        let conj = |sign: f64| {
            let d = CMat::from_fn(n, n, |i, j| if i == j { faer::c64::cis(sign * a1 * lat.x(i)) } else { faer::c64::new(0.0, 0.0) });
            max_abs((&d * &l0 * adjoint(d.as_ref()) - &la).as_ref())
        };
        prop_assert!(conj(1.0).min(conj(-1.0)) <= 1e-10 * max_abs(l0.as_ref()));
    }
}
