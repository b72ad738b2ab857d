mod common;

use common::{arb_cvec, arb_lattice, arb_model, model};
use kgprop::discrete_operators::{estimate_growth_constants, OperatorSet};
use kgprop::evolution::{
    check_norm_bound, evolve, EvolutionGrid, GeneratorProvider, LatticeProblem, Sampling, StepSchedule,
};
use kgprop::geometry::Lattice;
use kgprop::linalg::{adjoint, identity, inner, max_abs, op_norm, vnorm, I};
use kgprop::rng::SeedTree;
use kgprop::spaces::{geometric_mean, norm, relative_bounds, NormFamily};
use kgprop::verification::check_group_law;
use proptest::prelude::*;

fn frw(rho: f64) -> kgprop::geometry::ScenarioModel {
    model("frw", &[("a0", 1.0), ("a1", 2.0), ("rho", rho)])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn evolution_is_two_sided_invertible(m in arb_model(), lat in arb_lattice(), s in -1.0..1.0f64, t in -1.0..1.0f64) {
        let prob = LatticeProblem::new(m, lat);
        let fwd = evolve(&prob, &StepSchedule::new(s, t, 32, Sampling::Midpoint).unwrap(), false).unwrap();
        let bwd = evolve(&prob, &StepSchedule::new(t, s, 32, Sampling::Midpoint).unwrap(), false).unwrap();
        let dim = prob.dim();
        prop_assert!(max_abs((&bwd.u * &fwd.u - identity(dim)).as_ref()) <= 1e-10);
    }

    #[test]
    fn columns_solve_the_first_order_equation(m in arb_model(), t in -0.5..0.5f64) {
        let lat = Lattice::new(8, 1.0).unwrap();
        let prob = LatticeProblem::new(m, lat);
        let s = -1.0;
        let residual = |d: f64| {
            let grid = EvolutionGrid::build(&prob, &[s, t - d, t, t + d], 64, Sampling::Midpoint).unwrap();
            let (up, um, u) = (grid.u(t + d, s).unwrap(), grid.u(t - d, s).unwrap(), grid.u(t, s).unwrap());
            let deriv = (&up - &um) * faer::Scale(faer::c64::new(0.5 / d, 0.0));
            let b = prob.generator(t).unwrap();
            op_norm((&deriv + &b * &u * faer::Scale(I)).as_ref()).unwrap()
        };
        let (r1, r2) = (residual(0.02), residual(0.01));
        prop_assert!(r1 < 1e-2, "{r1}");
        prop_assert!(r2 < r1 / 3.0, "{r1} {r2}");
    }

    #[test]
    fn static_evolution_preserves_the_dual_gram(
        beta in -0.5..0.5f64, a0 in -0.3..0.3f64, t in 0.1..3.0f64,
    ) {
        let prob = LatticeProblem::new(model("static", &[("beta", beta), ("a0", a0)]), Lattice::new(10, 1.0).unwrap());
        let u = evolve(&prob, &StepSchedule::new(0.0, t, 16, Sampling::Midpoint).unwrap(), false).unwrap().u;
        let s = prob.operators(0.0).unwrap().s_dual;
        let d = adjoint(u.as_ref()) * &s * &u - &s;
        prop_assert!(max_abs(d.as_ref()) <= 1e-10 * max_abs(s.as_ref()));
    }

    #[test]
    fn growth_stays_below_the_energy_bound(rho in 0.3..1.5f64, a in -1.5..1.0f64, len in 0.2..1.0f64) {
        let m = frw(rho);
        let lat = Lattice::new(8, 1.0).unwrap();
        let prob = LatticeProblem::new(m.clone(), lat);
        let b = a + len;
        let times: Vec<f64> = (0..=40).map(|k| a + len * k as f64 / 40.0).collect();
        let table = estimate_growth_constants(&m, &lat, &times).unwrap();
        let u = evolve(&prob, &StepSchedule::new(a, b, 64, Sampling::Midpoint).unwrap(), false).unwrap();
        let families = |s: f64| NormFamily::build(&prob.operators(s).unwrap());
        let rep = check_norm_bound(&u, &families, &table, 1e-6).unwrap();
        for e in &rep.entries {
            prop_assert!(e.measured <= e.bound * (1.0 + 1e-6), "{e:?}");
        }
    }

    #[test]
    fn norms_are_equivalent_across_time(rho in 0.3..1.5f64, s in -1.0..1.0f64, len in 0.05..0.5f64, seed in 0u64..1000) {
        let m = frw(rho);
        let lat = Lattice::new(8, 1.0).unwrap();
        let t = s + len;
        let times: Vec<f64> = (0..=20).map(|k| s + len * k as f64 / 20.0).collect();
        let table = estimate_growth_constants(&m, &lat, &times).unwrap();
        let factor = (table.c_rt(s, t).unwrap() * table.integral(s, t).unwrap()).exp();
        let fs = NormFamily::build(&OperatorSet::assemble(&m, &lat, s).unwrap()).unwrap();
        let ft = NormFamily::build(&OperatorSet::assemble(&m, &lat, t).unwrap()).unwrap();
        let mut rng = SeedTree::new(seed).stream(0);
        for _ in 0..100 {
            let u = kgprop::rng::complex_gaussian(&mut rng, 16);
            for lambda in [-1.0, 0.0, 1.0] {
                let (ns, nt) = (norm(&u, &fs, lambda).unwrap(), norm(&u, &ft, lambda).unwrap());
                prop_assert!(ns <= nt * factor * (1.0 + 1e-9), "lambda {lambda}: {ns} > {nt} * {factor}");
                prop_assert!(nt <= ns * factor * (1.0 + 1e-9), "lambda {lambda}: {nt} > {ns} * {factor}");
            }
        }
    }

    #[test]
    fn middle_gram_is_the_geometric_mean(m in arb_model(), lat in arb_lattice(), t in -1.0..1.0f64) {
        let fam = NormFamily::build(&OperatorSet::assemble(&m, &lat, t).unwrap()).unwrap();
        let mean = geometric_mean(&fam.gram(-1.0).unwrap(), &fam.gram(1.0).unwrap()).unwrap();
        let (lo, hi) = relative_bounds(&mean, &fam.gram(0.0).unwrap()).unwrap();
        prop_assert!((lo - 1.0).abs() < 1e-8 && (hi - 1.0).abs() < 1e-8, "{lo} {hi}");
    }

    #[test]
    fn charge_form_is_bounded_and_symplectic(
        (fam, u, v) in (arb_model(), arb_lattice(), -1.0..1.0f64).prop_flat_map(|(m, lat, t)| {
            let fam = NormFamily::build(&OperatorSet::assemble(&m, &lat, t).unwrap()).unwrap();
            let n2 = fam.dim();
            (Just(fam), arb_cvec(n2), arb_cvec(n2))
        })
    ) {
        let q = kgprop::linalg::charge_matrix(fam.dim() / 2);
        let quv = inner(&u, &(&q * &v));
        let qvu = inner(&v, &(&q * &u));
        prop_assert!((quv.im + qvu.im).abs() <= 1e-14 * vnorm(&u) * vnorm(&v));
        let bound = fam.charge_bound().unwrap();
        prop_assert!(bound.is_finite());
        let (nu, nv) = (norm(&u, &fam, 0.0).unwrap(), norm(&v, &fam, 0.0).unwrap());
        prop_assert!(quv.norm() <= bound * nu * nv * (1.0 + 1e-10));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn group_law_within_richardson_allowance(m in arb_model(), seed in 0u64..100) {
        let prob = LatticeProblem::new(m, Lattice::new(8, 1.0).unwrap());
        let mut rng = SeedTree::new(seed).stream(4);
        let r = check_group_law(&prob, -1.0, 1.0, 5, 8.0, Sampling::Midpoint, &mut rng, "random").unwrap();
        prop_assert!(r.passed, "{r:?}");
    }
}
