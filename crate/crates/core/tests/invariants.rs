//! Structural invariants under random inputs.

use std::f64::consts::TAU;
use std::sync::OnceLock;

use isac_core::mdlearn::SoftmaxOptions;
use isac_core::scenario::{AngularSector, C64};
use isac_core::selftest::{self, Fixture};
use proptest::prelude::*;

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(Fixture::new)
}

fn complex() -> impl Strategy<Value = C64> {
    (-10.0f64..10.0, -10.0f64..10.0).prop_map(|(re, im)| C64::new(re, im))
}

fn observation() -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec(complex(), Fixture::K)
}

/// Sectors at least two grid steps wide so they always resolve.
fn sector() -> impl Strategy<Value = AngularSector> {
    (-85.0f64..80.0, 4.0f64..40.0).prop_map(|(lo, w)| AngularSector::from_degrees(lo, (lo + w).min(89.0)).unwrap())
}

fn holds(p: selftest::Property) -> Result<(), TestCaseError> {
    p.map_err(TestCaseError::fail)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn precoders_carry_exactly_the_energy_budget(
        target in sector(),
        comm in sector(),
        rho in 0.0f64..=1.0,
        phi in 0.0f64..TAU,
        e_tx in 0.1f64..10.0,
        net in 0usize..4,
    ) {
        holds(selftest::energy_budget(fixture(), &target, &comm, rho, phi, e_tx, net))?;
    }

    #[test]
    fn soft_argmax_is_a_convex_combination(
        y in observation(),
        s in sector(),
        masked in any::<bool>(),
        temperature in 0.05f64..5.0,
    ) {
        holds(selftest::soft_argmax_simplex(fixture(), &y, &s, SoftmaxOptions { masked, temperature }))?;
    }

    #[test]
    fn network_outputs_stay_in_range(
        y in observation(),
        s in sector(),
        y_c in complex(),
        kappa in complex(),
        net in 0usize..4,
    ) {
        holds(selftest::output_ranges(fixture(), &y, &s, y_c, kappa, net))?;
    }

    #[test]
    fn trade_off_endpoints_select_one_beam(
        xr in observation(),
        xc in observation(),
        phi in 0.0f64..TAU,
        e_tx in 0.1f64..10.0,
    ) {
        holds(selftest::tradeoff_endpoints(&xr, &xc, phi, e_tx))?;
    }

    #[test]
    fn decisions_ignore_a_common_complex_scale(
        y in observation(),
        s in sector(),
        scale in complex(),
        y_c in complex(),
        kappa in complex(),
        m in prop::sample::select(vec![4usize, 16, 64]),
    ) {
        holds(selftest::scale_invariance(fixture(), &y, &s, scale, y_c, kappa, m))?;
    }
}

#[test]
fn seeded_suite_passes() {
    for check in selftest::invariant_suite(1000, 5) {
        assert!(check.passed(), "{}: {:?}", check.name, check.first_failure);
    }
}
