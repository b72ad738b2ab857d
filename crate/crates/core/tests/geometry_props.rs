mod common;

use common::{arb_lattice, arb_model, model};
use kgprop::geometry::{sample_slice, Lattice};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampled_fields_are_timelike(m in arb_model(), lat in arb_lattice(), t in -2.0..2.0f64) {
        let s = sample_slice(&m, &lat, t).unwrap();
        s.validate().unwrap();
        for j in 0..lat.n_sites {
            let p = m.at_site(&lat, t, j);
            prop_assert!(p.g_sigma * p.beta * p.beta < p.alpha * p.alpha);
        }
    }

    #[test]
    fn sampling_is_deterministic(m in arb_model(), lat in arb_lattice(), t in -2.0..2.0f64) {
        let a = sample_slice(&m, &lat, t).unwrap();
        let b = sample_slice(&m, &lat, t).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn static_slices_do_not_depend_on_time(
        beta in -0.5..0.5f64, a0 in -0.5..0.5f64, t1 in -5.0..5.0f64, t2 in -5.0..5.0f64,
    ) {
        let m = model("static", &[("beta", beta), ("a0", a0)]);
        let lat = Lattice::new(10, 0.7).unwrap();
        let mut a = sample_slice(&m, &lat, t1).unwrap();
        let b = sample_slice(&m, &lat, t2).unwrap();
        a.time_stamp = b.time_stamp;
        prop_assert_eq!(a, b);
    }
}
