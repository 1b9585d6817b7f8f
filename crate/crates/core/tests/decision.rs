mod common;

use corridor_planner::decision::dp_search;
use corridor_planner::planner::plan_cycle;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{dp_brute_force, random_lattice, scenario};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn dp_matches_exhaustive_search(seed in any::<u64>(), symmetric in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lattice, model) = random_lattice(&mut rng, symmetric, 40);
        let dp = dp_search(&lattice, &model);
        match dp_brute_force(&lattice, &model) {
            None => prop_assert!(dp.is_err()),
            Some((idx, cost)) => {
                let dp = dp.unwrap();
                prop_assert_eq!(&dp.indices, &idx);
                prop_assert!((dp.cost - cost).abs() <= 1e-9 * cost.abs().max(1.0));
            }
        }
    }
}

#[test]
fn static_obstacle_is_bypassed_on_the_open_side() {
    for (name, sign) in [("static_bypass_left", 1.0), ("static_bypass_right", -1.0)] {
        let sc = scenario(name);
        let t = plan_cycle(&sc, None);
        assert!(t.diagnostics.failure.is_none(), "{name}: {:?}", t.diagnostics.failure);
        let path = t.artifacts.path.as_ref().unwrap();
        let peak = path.l.iter().map(|l| l * sign).fold(f64::NEG_INFINITY, f64::max);
        assert!(peak > 0.3, "{name}: peak lateral {peak}");
    }
}

#[test]
fn wall_across_the_road_yields_stop_demand() {
    let t = plan_cycle(&scenario("wall_block"), None);
    assert!(t.diagnostics.stop_demand);
}
