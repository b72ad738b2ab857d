#![allow(dead_code)]

use std::collections::BTreeMap;

use kgprop::geometry::{builtin_scenario, Lattice, ScenarioModel};
use kgprop::linalg::CVec;
use proptest::prelude::*;

pub fn model(name: &str, params: &[(&str, f64)]) -> ScenarioModel {
    let p: BTreeMap<String, f64> = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    builtin_scenario(name, &p, 0.0).unwrap()
}

fn build(name: &'static str, params: Vec<(&'static str, f64)>) -> ScenarioModel {
    model(name, &params)
}

/// Parameters inside the positivity assumptions for every family.
pub fn arb_model() -> impl Strategy<Value = ScenarioModel> {
    prop_oneof![
        (0.8..1.5f64, -0.5..0.5f64, -0.3..0.3f64, -0.5..0.5f64)
            .prop_map(|(m, beta, a0, a1)| build("static", vec![("m", m), ("beta", beta), ("a0", a0), ("a1", a1)])),
        (0.7..2.5f64, 0.7..2.5f64, 0.3..1.0f64, 0.9..1.5f64)
            .prop_map(|(a0, a1, rho, m)| build("frw", vec![("a0", a0), ("a1", a1), ("rho", rho), ("m", m)])),
        (-0.3..0.5f64, -0.3..0.5f64, 0.5..2.0f64, 2.0..5.0f64).prop_map(|(amp, y_amp, t_width, width)| build(
            "bump",
            vec![("amp", amp), ("y_amp", y_amp), ("t_width", t_width), ("width", width)]
        )),
        (-0.5..0.5f64, 2.0..5.0f64).prop_map(|(v0, hw)| build("step-potential", vec![("v0", v0), ("half_width", hw)])),
    ]
}

pub fn arb_lattice() -> impl Strategy<Value = Lattice> {
    (6usize..12, 0.5..1.5f64).prop_map(|(n, h)| Lattice::new(n, h).unwrap())
}

pub fn arb_cvec(n: usize) -> impl Strategy<Value = CVec> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), n)
        .prop_map(|v| CVec::from_fn(v.len(), |i| faer::c64::new(v[i].0, v[i].1)))
}
