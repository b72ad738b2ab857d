mod common;

use common::arb_model;
use kgprop::verification::{outcome, run_suite, CheckFamily, MetaValue, SuiteConfig};
use proptest::prelude::*;

fn small(model: &kgprop::geometry::ScenarioModel, seed: u64) -> SuiteConfig {
    let mut cfg = SuiteConfig::reference(model);
    cfg.n_sites = 8;
    cfg.n_intervals = 1024;
    cfg.seed = seed;
    cfg.n_positivity = 16;
    cfg.families = vec![CheckFamily::Charge, CheckFamily::Relations, CheckFamily::Residuals, CheckFamily::Positivity];
    cfg
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn reports_are_reproducible_and_controls_fail(m in arb_model(), seed in any::<u64>()) {
        let cfg = small(&m, seed);
        let a = run_suite(&m, &cfg).unwrap();
        let b = run_suite(&m, &cfg).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.windows(2).all(|w| w[0].check_id <= w[1].check_id));
        for r in &a {
            prop_assert_eq!(r.metadata.get("seed"), Some(&MetaValue::Int(seed)));
            if r.control {
                prop_assert!(!r.passed, "{} passed", r.check_id);
                prop_assert!(r.control_effective(), "{} = {:e}", r.check_id, r.measured);
            }
        }
        let o = outcome(&a);
        prop_assert!(o.checks_passed, "{:?}", a.iter().filter(|r| !r.control && !r.passed).collect::<Vec<_>>());
    }
}
