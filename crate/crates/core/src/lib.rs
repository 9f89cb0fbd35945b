//! Competitive equilibria in discrete Fisher markets, exactly.
//!
//! A market here is a set of indivisible items and agents with additive
//! cardinal valuations and budgets of artificial currency. This crate
//! constructs equilibrium prices where theory provides them, falls back to a
//! complete exhaustive search backed by an exact rational simplex, simulates
//! integer-price tatonnement, and certifies fairness notions (maximin shares,
//! envy variants, truncated shares, weighted Nash welfare).
//!
//! All correctness-bearing arithmetic is exact: values, budgets, prices and
//! shares are arbitrary-precision rationals, and equilibrium verification is
//! a strict-inequality check that tolerances would render unsound.
//!
//! ```
//! use fisher_market::prelude::*;
//!
//! // One item, two agents. Equal budgets admit no equilibrium; perturbed
//! // budgets do.
//! let market = Market::from_values(vec![
//!     vec![rat(1, 1)],
//!     vec![rat(1, 1)],
//! ]).unwrap();
//! let caps = Caps::default();
//!
//! let equal = BudgetProfile::equal(2);
//! let outcome = solve(&market, &equal, &caps).unwrap();
//! assert_eq!(outcome.status, SolveStatus::NoCeExists);
//!
//! let nudged = BudgetProfile::new(vec![rat(51, 100), rat(49, 100)]).unwrap();
//! let outcome = solve(&market, &nudged, &caps).unwrap();
//! assert_eq!(outcome.status, SolveStatus::CeFound);
//! ```

pub mod demand;
pub mod error;
pub mod experiments;
pub mod fairness;
pub mod frontier;
pub mod lp;
pub mod market;
pub mod pricing;
pub mod rational;
pub mod solver;
pub mod tatonnement;

#[cfg(doctest)]
mod book;

/// The commonly used surface in one import.
pub mod prelude {
    pub use crate::demand::{demand, exhaust_budgets, verify_ce, CeCertificate, VerifyOutcome};
    pub use crate::error::{Error, Result};
    pub use crate::experiments::{
        crossing_budgets, generate_market, ladder_budgets, perturb_budgets, run_batch, BatchConfig,
        BudgetMode, GenSpec, ValueDistribution,
    };
    pub use crate::fairness::{
        check_ce_mms_guarantee, envy_checks, fairness_report, mms_value, nash_welfare_argmax,
        FairnessOptions,
    };
    pub use crate::frontier::{
        classify_proportionality, enumerate_allocations, in_genericity_exclusion_r,
        is_pareto_optimal, pareto_frontier, rectangle_t, shares, ParetoFrontier,
    };
    pub use crate::market::{
        normalize, parse_market, Allocation, BudgetProfile, Bundle, Caps, Market, PriceVector,
    };
    pub use crate::pricing::{
        combination_prices, gamma_scaled_ce, proportional_ce, second_welfare_ce, CombinationParams,
    };
    pub use crate::rational::{format_rational, parse_rational, rat, Rational};
    pub use crate::solver::{
        price_lp, solve, solve_almost_equal, solve_with_strategy, SolveOutcome, SolveStatus,
        Strategy, StrategyChoice,
    };
    pub use crate::tatonnement::{run_tatonnement, TatonnementConfig, UpdateRule};
}
