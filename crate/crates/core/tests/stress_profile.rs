//! Property suites on badly conditioned samples (condition numbers up to
//! `1e8`) at the looser stress tolerance.

use blgeo::datum::catalog::{loomis_whitney, young_triple};
use blgeo::opscale::DEFAULT_DIM_CAP;
use blgeo::{build_scaling_operator, run_suite, SuiteConfig};

fn assert_clean(label: &str, reports: &[blgeo::PropertyReport]) {
    for r in reports {
        assert!(
            r.passed(),
            "{label}: {} had {} violations (worst margin {:e}, tol {:e})",
            r.property_name,
            r.violations,
            r.worst_margin,
            r.tolerance
        );
    }
}

#[test]
fn stress_profile_on_young_triple() {
    let cfg = SuiteConfig {
        samples: 300,
        ..SuiteConfig::stress()
    };
    let d = young_triple();
    let k = build_scaling_operator(&d, DEFAULT_DIM_CAP).unwrap();
    assert_clean("young", &run_suite(Some(&d), Some(&k), &cfg));
}

#[test]
fn stress_profile_without_datum() {
    let cfg = SuiteConfig {
        samples: 300,
        seed: 7,
        ..SuiteConfig::stress()
    };
    assert_clean("generic", &run_suite(None, None, &cfg));
    assert_clean(
        "loomis-whitney",
        &run_suite(Some(&loomis_whitney()), None, &cfg),
    );
}
