//! Randomized checks of the analysis and retrieval primitives against brute-force oracles.

mod common;

use common::oracles::*;
use proptest::prelude::*;

fn check(r: Check) -> Result<(), TestCaseError> {
    r.map_err(TestCaseError::fail)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn summary_stats_match_brute_force(values in summary_inputs()) {
        check(summary_case(values))?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn linear_trend_recovers_planted_slope(input in trend_inputs()) {
        check(trend_case(input))?;
    }

    #[test]
    fn nearest_node_matches_exhaustive_scan(input in node_inputs()) {
        check(nearest_case(input))?;
    }

    #[test]
    fn threshold_fraction_is_monotone(input in threshold_inputs()) {
        check(threshold_case(input))?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn search_matches_exhaustive_cosine_ranking(input in search_inputs()) {
        check(search_case(input))?;
    }
}
