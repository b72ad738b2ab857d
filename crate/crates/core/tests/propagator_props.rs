mod common;

use common::{arb_model, model};
use kgprop::discrete_operators::OperatorSet;
use kgprop::evolution::{EvolutionGrid, LatticeProblem, Sampling};
use kgprop::geometry::{bump, Lattice, ScenarioModel};
use kgprop::linalg::{max_abs, CVec};
use kgprop::propagators::{
    classical_kernel, freq_projection_pair, instantaneous_kernel, lapse_on_grid, solve_cauchy, to_g_form, DiscreteK,
    KernelLabel,
};
use kgprop::rng::{complex_gaussian, SeedTree};
use kgprop::spaces::NormFamily;
use kgprop::verification::{check_relations, KernelSet};
use proptest::prelude::*;

const LAT: Lattice = Lattice { n_sites: 6, spacing: 1.0 };

fn grid_with(model: &ScenarioModel, times: &[f64], substeps: usize) -> EvolutionGrid {
    EvolutionGrid::build(&LatticeProblem::new(model.clone(), LAT), times, substeps, Sampling::Midpoint).unwrap()
}

fn projections(
    model: &ScenarioModel,
    tau: f64,
) -> (kgprop::propagators::FrequencyProjection, kgprop::propagators::FrequencyProjection) {
    let ops = OperatorSet::assemble(model, &LAT, tau).unwrap();
    freq_projection_pair(&ops, &NormFamily::build_with(&ops, &[]).unwrap()).unwrap()
}

/// Smooth step: 0 below `a`, 1 above `b`.
fn step(t: f64, a: f64, b: f64) -> f64 {
    if t <= a {
        0.0
    } else if t >= b {
        1.0
    } else {
        let x = (t - a) / (b - a);
        let (p, q) = (bump(1.0 - x).0, bump(x).0);
        p / (p + q)
    }
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn relation_web_holds_exactly(m in arb_model(), tau in -0.5..0.5f64, a in -1.0..-0.6f64, b in 0.6..1.0f64) {
        let times = sorted(vec![a, tau, 0.0, b]);
        let grid = grid_with(&m, &times, 16);
        let (pp, pm) = projections(&m, tau);
        let set = KernelSet::build(&grid, &pp, &pm).unwrap();
        let idx: Vec<usize> = (0..grid.len()).collect();
        for r in check_relations(&set, &m, &LAT, &idx, m.id(), 1e-10).unwrap() {
            prop_assert!(r.passed, "{} = {:e}", r.check_id, r.measured);
        }
    }

    #[test]
    fn frequency_kernels_are_hermitian_symmetric(m in arb_model(), tau in -0.5..0.5f64) {
        let times = sorted(vec![-0.7, tau, 0.3, 0.8]);
        let grid = grid_with(&m, &times, 16);
        let (pp, pm) = projections(&m, tau);
        for p in [&pp, &pm] {
            let g = to_g_form(&instantaneous_kernel(&grid, p).unwrap(), &m, &LAT).unwrap();
            for j in 0..grid.len() {
                for k in 0..grid.len() {
                    let (a, b) = (g.eval_idx(j, k), g.eval_idx(k, j));
                    let scale = max_abs(a.as_ref()).max(1.0);
                    prop_assert!(max_abs((a.adjoint() - &b).as_ref()) <= 1e-10 * scale);
                }
            }
        }
    }

    #[test]
    fn static_projections_do_not_depend_on_tau(m0 in 0.8..1.5f64, beta in -0.5..0.5f64, t1 in -1.0..1.0f64, t2 in -1.0..1.0f64) {
        let m = model("static", &[("m", m0), ("beta", beta)]);
        let times = sorted(vec![-1.0, t1, t2, 1.0]);
        let grid = grid_with(&m, &times, 8);
        let (p1, _) = projections(&m, t1);
        let (p2, _) = projections(&m, t2);
        let (k1, k2) = (instantaneous_kernel(&grid, &p1).unwrap(), instantaneous_kernel(&grid, &p2).unwrap());
        for j in 0..grid.len() {
            for k in 0..grid.len() {
                prop_assert!(max_abs((k1.eval_idx(j, k) - k2.eval_idx(j, k)).as_ref()) <= 1e-10);
            }
        }
    }
}

/// Largest deviation of `G^PJ K(chi u)` from the homogeneous solution `u`
/// at interior times, relative to `max |u|`.
fn pj_reconstruction_error(m: &ScenarioModel, seed: u64, intervals: usize) -> f64 {
    let (t0, t1) = (0.0, 2.0);
    let grid =
        EvolutionGrid::uniform(&LatticeProblem::new(m.clone(), LAT), t0, t1, intervals, 1, Sampling::Midpoint).unwrap();
    let alpha = lapse_on_grid(m, &LAT, &grid.times);
    let mut rng = SeedTree::new(seed).stream(9);
    let (u1, u2) = (complex_gaussian(&mut rng, 6), complex_gaussian(&mut rng, 6));
    let u: Vec<CVec> =
        grid.times.iter().map(|&t| solve_cauchy(&u1, &u2, None, t0, t, &grid, &alpha).unwrap().0).collect();
    let cut: Vec<CVec> =
        grid.times.iter().zip(&u).map(|(&t, v)| v * faer::Scale(faer::c64::new(step(t, 0.5, 1.5), 0.0))).collect();
    let k = DiscreteK::build(m, &LAT, &grid.times).unwrap();
    let f: Vec<CVec> = k.apply(&cut).unwrap().into_iter().map(|x| x.unwrap_or_else(|| CVec::zeros(6))).collect();
    let pj = to_g_form(&classical_kernel(KernelLabel::PauliJordan, &grid).unwrap(), m, &LAT).unwrap();
    let rec = pj.apply(&f).unwrap();
    let scale = u.iter().map(|v| v.norm_l2()).fold(0.0, f64::max);
    (1..grid.len() - 1).map(|j| (&rec[j] - &u[j]).norm_l2()).fold(0.0, f64::max) / scale
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn pauli_jordan_reproduces_solutions(m in arb_model(), seed in 0u64..1000) {
        let coarse = pj_reconstruction_error(&m, seed, 256);
        let fine = pj_reconstruction_error(&m, seed, 512);
        prop_assert!(fine < 1e-3, "{coarse:e} {fine:e}");
        prop_assert!(fine < coarse / 3.0, "{coarse:e} {fine:e}");
    }
}
