//! Closed-form checks on a single mode (`L = omega^2`, `W = 0`) and on the
//! small static lattice.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use faer::c64;
use kgprop::discrete_operators::OperatorSet;
use kgprop::evolution::{compose, evolve, ConstantProvider, EvolutionGrid, EvolutionOperator, Sampling, StepSchedule};
use kgprop::geometry::{builtin_scenario, Lattice};
use kgprop::linalg::{max_abs, CMat};
use kgprop::propagators::{
    classical_kernel, feynman_kernel, freq_projection, freq_projection_pair, instantaneous_kernel, to_g_form,
    KernelLabel, Sign,
};
use kgprop::spaces::{basis_vector, norm, NormFamily};

fn mode(omega: f64) -> OperatorSet {
    let l = CMat::from_fn(1, 1, |_, _| c64::new(omega * omega, 0.0));
    let w = CMat::zeros(1, 1);
    OperatorSet::from_blocks(0.0, l, w).unwrap()
}

fn m2(a: [[c64; 2]; 2]) -> CMat {
    CMat::from_fn(2, 2, |i, j| a[i][j])
}

fn close(a: &CMat, b: &CMat, tol: f64) {
    let d = max_abs((a - b).as_ref());
    assert!(d <= tol, "difference {d:e} > {tol:e}\n{a:?}\n{b:?}");
}

const Z: c64 = c64 { re: 0.0, im: 0.0 };

fn r(x: f64) -> c64 {
    c64::new(x, 0.0)
}

fn im(x: f64) -> c64 {
    c64::new(0.0, x)
}

#[test]
fn mode_generator_and_dual_gram() {
    let ops = mode(2.0);
    close(&ops.b, &m2([[Z, r(1.0)], [r(4.0), Z]]), 0.0);
    close(&ops.s_dual, &m2([[r(1.0), Z], [Z, r(0.25)]]), 1e-15);
    close(&(&ops.q * &ops.h), &ops.b, 0.0);
}

#[test]
fn mode_norm_family() {
    let fam = NormFamily::build(&mode(2.0)).unwrap();
    close(&fam.gram(0.0).unwrap(), &m2([[r(2.0), Z], [Z, r(0.5)]]), 1e-14);
    close(&fam.gram(-1.0).unwrap(), &fam.gram_dual, 0.0);
    close(&fam.gram(1.0).unwrap(), &fam.gram_en, 1e-13);
    let u = basis_vector(2, 0);
    assert!((norm(&u, &fam, 0.0).unwrap() - 2f64.sqrt()).abs() < 1e-14);
    let mut ev = fam.b_tilde_eig.values.iter().map(|x| x.abs()).collect::<Vec<_>>();
    ev.sort_by(f64::total_cmp);
    assert!((ev[0] - 2.0).abs() < 1e-14 && (ev[1] - 2.0).abs() < 1e-14);
    assert!((fam.charge_bound().unwrap() - 1.0).abs() < 1e-13);
}

#[test]
fn mode_projection() {
    let ops = mode(2.0);
    let fam = NormFamily::build(&ops).unwrap();
    let p = freq_projection(&ops, &fam, Sign::Plus).unwrap();
    close(&p.p, &m2([[r(0.5), r(0.25)], [r(1.0), r(0.5)]]), 1e-14);
    let d = p.defects(&ops.b).unwrap();
    assert!(d.idempotent < 1e-14 && d.commutator < 1e-14 && d.self_adjoint < 1e-14);
    assert!(d.charge_sign <= 0.0);
}

#[test]
fn mode_evolution_quarter_period() {
    let prov = ConstantProvider::new(mode(1.0)).unwrap();
    for n in [1, 7, 64] {
        let s = StepSchedule::new(0.0, PI / 2.0, n, Sampling::Left).unwrap();
        let u = evolve(&prov, &s, false).unwrap();
        close(&u.u, &m2([[Z, im(-1.0)], [im(-1.0), Z]]), 1e-14);
    }
    let id = evolve(&prov, &StepSchedule::new(3.0, 3.0, 5, Sampling::Midpoint).unwrap(), true).unwrap();
    close(&id.u, &CMat::identity(2, 2), 0.0);
}

#[test]
fn compose_with_identity_is_exact() {
    let prov = ConstantProvider::new(mode(1.5)).unwrap();
    let u = evolve(&prov, &StepSchedule::new(0.0, 0.7, 9, Sampling::Midpoint).unwrap(), true).unwrap();
    let id = EvolutionOperator::identity(0.7, 2, Sampling::Midpoint);
    let c = compose(&id, &u).unwrap();
    assert_eq!(c.u, u.u);
    let back = evolve(&prov, &StepSchedule::new(0.7, 0.0, 9, Sampling::Midpoint).unwrap(), false).unwrap();
    close(&compose(&back, &u).unwrap().u, &CMat::identity(2, 2), 1e-13);
    assert!(compose(&u, &u).is_err());
}

#[test]
fn mode_kernels() {
    let omega = 2.0;
    let ops = mode(omega);
    let prov = ConstantProvider::new(ops.clone()).unwrap();
    let dt = PI / 4.0;
    let grid = EvolutionGrid::build(&prov, &[0.0, dt, 2.0 * dt], 4, Sampling::Midpoint).unwrap();
    let ret = classical_kernel(KernelLabel::Retarded, &grid).unwrap();
    close(&ret.eval(dt, 0.0).unwrap(), &m2([[Z, im(-0.5)], [im(-2.0), Z]]), 1e-14);
    let adv = classical_kernel(KernelLabel::Advanced, &grid).unwrap();
    close(&adv.eval(dt, 0.0).unwrap(), &CMat::zeros(2, 2), 0.0);
    let pj = classical_kernel(KernelLabel::PauliJordan, &grid).unwrap();
    close(&pj.eval(dt, dt).unwrap(), &CMat::identity(2, 2), 1e-15);

    let fam = NormFamily::build(&ops).unwrap();
    let (pp, pm) = freq_projection_pair(&ops, &fam).unwrap();
    let pos = instantaneous_kernel(&grid, &pp).unwrap();
    let neg = instantaneous_kernel(&grid, &pm).unwrap();
    let f = feynman_kernel(KernelLabel::Feynman, &grid, &pp, &pm).unwrap();
    // Lattice::new rejects one site; the G form only reads alpha = 1 here
    let lat = Lattice { n_sites: 1, spacing: 1.0 };
    let model = builtin_scenario("static", &BTreeMap::new(), 0.0).unwrap();
    let g_pj = to_g_form(&pj, &model, &lat).unwrap();
    let g_pos = to_g_form(&pos, &model, &lat).unwrap();
    let g_neg = to_g_form(&neg, &model, &lat).unwrap();
    let g_f = to_g_form(&f, &model, &lat).unwrap();
    let d = dt;
    let val = |k: &kgprop::propagators::PropagatorKernel, t: f64, s: f64| k.eval(t, s).unwrap()[(0, 0)];
    assert!((val(&g_pj, d, 0.0) - r(0.5)).norm() < 1e-14);
    assert!((val(&g_pj, d, d)).norm() == 0.0);
    let e = |x: f64| c64::cis(x);
    assert!((val(&g_pos, d, 0.0) - e(-omega * d) / (2.0 * omega)).norm() < 1e-14);
    assert!((val(&g_neg, d, 0.0) - e(omega * d) / (2.0 * omega)).norm() < 1e-14);
    for (t, s) in [(d, 0.0), (0.0, 2.0 * d)] {
        let want = im(1.0) * e(-omega * (t - s).abs()) / (2.0 * omega);
        assert!((val(&g_f, t, s) - want).norm() < 1e-14);
    }
}

#[test]
fn static_lattice_examples() {
    let model = builtin_scenario("static", &BTreeMap::new(), 0.0).unwrap();
    let lat = Lattice::new(4, PI / 2.0).unwrap();
    let ops = OperatorSet::assemble(&model, &lat, 0.0).unwrap();
    let fam = NormFamily::build(&ops).unwrap();
    let u = basis_vector(8, 0);
    let want = (1.0 + 8.0 / (PI * PI)).sqrt();
    assert!((norm(&u, &fam, 1.0).unwrap() - want).abs() < 1e-12);
    let (pp, _) = freq_projection_pair(&ops, &fam).unwrap();
    let tr: c64 = (0..8).map(|i| pp.p[(i, i)]).sum();
    assert!((tr - r(4.0)).norm() < 1e-12);
}
