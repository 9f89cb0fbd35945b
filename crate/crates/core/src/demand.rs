//! Exact demand oracle and equilibrium verification.
//!
//! [`demand`] computes, by full subset enumeration, the most valuable bundle an
//! agent can afford; [`verify_ce`] uses it to judge whether an
//! (allocation, prices) pair is a competitive equilibrium. Every price
//! constructor and every solver in this crate passes its output through
//! [`verify_ce`] before returning it.

use std::cmp::Ordering;

use num::Zero;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::market::{
    lex_cmp_bundles, subset_sum_table, Allocation, BudgetProfile, Bundle, Caps, Market, PriceVector,
};
use crate::rational::{serde_rat, serde_rat_vec, Rational};

/// Result of a demand query: the exact maximum value over affordable bundles,
/// with a canonical witness achieving it.
#[derive(Debug, Clone, Serialize)]
pub struct DemandResult {
    #[serde(with = "serde_rat")]
    pub best_value: Rational,
    /// Lexicographically smallest maximizer (as a sorted item sequence).
    pub witness: Bundle,
    /// Price of the witness; at most the budget by construction.
    #[serde(with = "serde_rat")]
    pub witness_price: Rational,
}

/// Most valuable bundle within budget, by enumeration of all `2^m` bundles.
///
/// Ties between equal-value affordable bundles are broken toward the
/// lexicographically smallest item set; under strict preferences such ties
/// occur only between bundles that are identical up to interchangeable items.
pub fn demand(
    values: &[Rational],
    prices: &[Rational],
    budget: &Rational,
    caps: &Caps,
) -> Result<DemandResult> {
    if values.len() != prices.len() {
        return Err(Error::Validation(format!(
            "{} values vs {} prices",
            values.len(),
            prices.len()
        )));
    }
    caps.check_items(values.len())?;
    let value_table = subset_sum_table(values);
    let price_table = subset_sum_table(prices);
    Ok(demand_from_tables(&value_table, &price_table, budget))
}

/// Demand with precomputed subset-sum tables (hot path for solvers).
pub(crate) fn demand_from_tables(
    value_table: &[Rational],
    price_table: &[Rational],
    budget: &Rational,
) -> DemandResult {
    // The empty bundle is always affordable, so a maximizer always exists.
    let mut best: Bundle = 0;
    for mask in 1..value_table.len() {
        if price_table[mask] > *budget {
            continue;
        }
        match value_table[mask].cmp(&value_table[best as usize]) {
            Ordering::Greater => best = mask as Bundle,
            Ordering::Equal => {
                if lex_cmp_bundles(mask as Bundle, best) == Ordering::Less {
                    best = mask as Bundle;
                }
            }
            Ordering::Less => {}
        }
    }
    DemandResult {
        best_value: value_table[best as usize].clone(),
        witness: best,
        witness_price: price_table[best as usize].clone(),
    }
}

/// A verified competitive equilibrium: each agent's bundle is affordable and
/// matches her exact demand value at the prices.
#[derive(Debug, Clone, Serialize)]
pub struct CeCertificate {
    pub owners: Vec<usize>,
    #[serde(with = "serde_rat_vec")]
    pub prices: Vec<Rational>,
    #[serde(with = "serde_rat_vec")]
    pub demand_values: Vec<Rational>,
}

impl CeCertificate {
    pub fn allocation(&self) -> Allocation {
        Allocation::new(self.owners.clone(), self.demand_values.len())
            .expect("certificate allocation is valid by construction")
    }

    pub fn price_vector(&self) -> PriceVector {
        PriceVector::new(self.prices.clone()).expect("certificate prices are valid")
    }
}

/// Why an (allocation, prices) pair fails to be a competitive equilibrium.
#[derive(Debug, Clone, Serialize)]
pub struct CeViolation {
    pub agent: usize,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind")]
pub enum ViolationKind {
    /// The agent cannot afford her own bundle.
    BundleUnaffordable {
        #[serde(with = "serde_rat")]
        bundle_price: Rational,
        #[serde(with = "serde_rat")]
        budget: Rational,
    },
    /// A strictly more valuable bundle is within budget.
    BetterAffordableBundle {
        bundle: Vec<usize>,
        #[serde(with = "serde_rat")]
        value: Rational,
        #[serde(with = "serde_rat")]
        price: Rational,
        #[serde(with = "serde_rat")]
        own_value: Rational,
    },
}

/// Outcome of a verification query.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status")]
pub enum VerifyOutcome {
    Certificate(CeCertificate),
    Violation(CeViolation),
}

impl VerifyOutcome {
    pub fn is_ce(&self) -> bool {
        matches!(self, VerifyOutcome::Certificate(_))
    }

    pub fn certificate(self) -> Option<CeCertificate> {
        match self {
            VerifyOutcome::Certificate(c) => Some(c),
            VerifyOutcome::Violation(_) => None,
        }
    }
}

/// Judge whether `(allocation, prices)` is a competitive equilibrium for the
/// market and budgets: every agent must afford her bundle, and its value must
/// equal her exact demand value at these prices.
///
/// The check is value-based rather than witness-based because identical items
/// make the demand maximizer non-unique.
pub fn verify_ce(
    market: &Market,
    budgets: &BudgetProfile,
    allocation: &Allocation,
    prices: &PriceVector,
    caps: &Caps,
) -> Result<VerifyOutcome> {
    check_dimensions(market, budgets, Some(allocation), Some(prices))?;
    caps.check_items(market.num_items())?;
    let price_table = prices.table();
    let mut demand_values = Vec::with_capacity(market.num_agents());
    for agent in 0..market.num_agents() {
        let value_table = market.bundle_value_table(agent);
        let own = allocation.bundle(agent);
        let budget = budgets.get(agent);
        if price_table[own as usize] > *budget {
            return Ok(VerifyOutcome::Violation(CeViolation {
                agent,
                kind: ViolationKind::BundleUnaffordable {
                    bundle_price: price_table[own as usize].clone(),
                    budget: budget.clone(),
                },
            }));
        }
        let result = demand_from_tables(&value_table, &price_table, budget);
        if result.best_value > value_table[own as usize] {
            return Ok(VerifyOutcome::Violation(CeViolation {
                agent,
                kind: ViolationKind::BetterAffordableBundle {
                    bundle: crate::market::bundle_items(result.witness),
                    value: result.best_value,
                    price: result.witness_price,
                    own_value: value_table[own as usize].clone(),
                },
            }));
        }
        demand_values.push(value_table[own as usize].clone());
    }
    Ok(VerifyOutcome::Certificate(CeCertificate {
        owners: allocation.owner().to_vec(),
        prices: prices.as_slice().to_vec(),
        demand_values,
    }))
}

/// Verify and consume the outcome, treating a violation as an internal error.
/// Used by price constructors whose output is guaranteed by a proof.
pub(crate) fn expect_certificate(
    market: &Market,
    budgets: &BudgetProfile,
    allocation: &Allocation,
    prices: &PriceVector,
    caps: &Caps,
    context: &str,
) -> Result<CeCertificate> {
    match verify_ce(market, budgets, allocation, prices, caps)? {
        VerifyOutcome::Certificate(cert) => Ok(cert),
        VerifyOutcome::Violation(v) => Err(Error::Internal(format!(
            "{context}: constructed prices failed verification for agent {} ({:?})",
            v.agent, v.kind
        ))),
    }
}

/// Raise prices on one owned item per agent until every budget is exhausted
/// (`p(S_i) = b_i`). Requires a verified equilibrium with nonempty bundles;
/// the returned prices verify again with the same allocation.
pub fn exhaust_budgets(
    market: &Market,
    budgets: &BudgetProfile,
    allocation: &Allocation,
    prices: &PriceVector,
    caps: &Caps,
) -> Result<PriceVector> {
    match verify_ce(market, budgets, allocation, prices, caps)? {
        VerifyOutcome::Certificate(_) => {}
        VerifyOutcome::Violation(v) => {
            return Err(Error::Precondition(format!(
                "exhaust_budgets requires a verified equilibrium; agent {} violates ({:?})",
                v.agent, v.kind
            )))
        }
    }
    let mut new_prices = prices.as_slice().to_vec();
    for agent in 0..market.num_agents() {
        let bundle = allocation.bundle(agent);
        if bundle == 0 {
            return Err(Error::Precondition(format!(
                "agent {agent} holds an empty bundle; budget exhaustion applies only when every agent is allocated"
            )));
        }
        let paid: Rational = crate::market::bundle_items(bundle)
            .iter()
            .map(|&j| new_prices[j].clone())
            .sum();
        let deficit = budgets.get(agent) - &paid;
        if deficit.is_zero() {
            continue;
        }
        let first_item = bundle.trailing_zeros() as usize;
        new_prices[first_item] += deficit;
    }
    let exhausted = PriceVector::new(new_prices)?;
    expect_certificate(
        market,
        budgets,
        allocation,
        &exhausted,
        caps,
        "exhaust_budgets",
    )
    .map(|_| exhausted)
}

pub(crate) fn check_dimensions(
    market: &Market,
    budgets: &BudgetProfile,
    allocation: Option<&Allocation>,
    prices: Option<&PriceVector>,
) -> Result<()> {
    if budgets.len() != market.num_agents() {
        return Err(Error::Validation(format!(
            "{} budgets for {} agents",
            budgets.len(),
            market.num_agents()
        )));
    }
    if let Some(alloc) = allocation {
        if alloc.num_items() != market.num_items() {
            return Err(Error::Validation(format!(
                "allocation covers {} items, market has {}",
                alloc.num_items(),
                market.num_items()
            )));
        }
        if let Some(&bad) = alloc.owner().iter().find(|&&a| a >= market.num_agents()) {
            return Err(Error::Validation(format!(
                "allocation references nonexistent agent {bad}"
            )));
        }
    }
    if let Some(p) = prices {
        if p.len() != market.num_items() {
            return Err(Error::Validation(format!(
                "{} prices for {} items",
                p.len(),
                market.num_items()
            )));
        }
    }
    Ok(())
}
