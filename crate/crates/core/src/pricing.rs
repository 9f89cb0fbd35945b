//! Constructive equilibrium pricing for two-agent markets.
//!
//! Three constructions, each returning a certificate only after the demand
//! oracle has re-verified it:
//!
//! - [`proportional_ce`]: budget-exhausting combination prices for a
//!   budget-proportional or anti-proportional Pareto-optimal allocation;
//! - [`gamma_scaled_ce`]: prices proportional to one agent's valuation, scaled
//!   so the case analysis over truncated/augmented shares closes;
//! - [`second_welfare_ce`]: budgets and prices supporting an arbitrary
//!   Pareto-optimal allocation.

use num::{One, Signed, Zero};

use crate::demand::{expect_certificate, CeCertificate};
use crate::error::{Error, Result};
use crate::frontier::{
    classify_with_frontier, is_pareto_optimal, pareto_frontier, r_membership_with_frontier,
    rectangle_t_with_frontier, shares_with_frontier, value_vector,
};
use crate::market::{Allocation, BudgetProfile, Caps, Market, PriceVector};
use crate::rational::Rational;

/// Parameters of a combination pricing `p_j = alpha v_1(j) + beta v_2(j)`.
/// Both weights are nonnegative and at least one is positive.
#[derive(Debug, Clone)]
pub struct CombinationParams {
    alpha: Rational,
    beta: Rational,
}

impl CombinationParams {
    pub fn new(alpha: Rational, beta: Rational) -> Result<Self> {
        if alpha.is_negative() || beta.is_negative() {
            return Err(Error::Validation(
                "combination weights must be nonnegative".into(),
            ));
        }
        if alpha.is_zero() && beta.is_zero() {
            return Err(Error::Validation(
                "at least one combination weight must be positive".into(),
            ));
        }
        Ok(CombinationParams { alpha, beta })
    }

    pub fn alpha(&self) -> &Rational {
        &self.alpha
    }

    pub fn beta(&self) -> &Rational {
        &self.beta
    }
}

/// Price every item as a weighted sum of the two agents' values for it.
/// Identical items receive identical prices by construction.
pub fn combination_prices(market: &Market, params: &CombinationParams) -> Result<PriceVector> {
    if market.num_agents() != 2 {
        return Err(Error::Precondition(
            "combination pricing is defined for two-agent markets".into(),
        ));
    }
    let prices = (0..market.num_items())
        .map(|j| &params.alpha * market.value(0, j) + &params.beta * market.value(1, j))
        .collect();
    PriceVector::new(prices)
}

/// Budget-exhausting combination weights for a Pareto-optimal allocation that
/// is budget-proportional or anti-proportional. In the degenerate case
/// `v_1(S_1) + v_2(S_2) = 1` the weights are `(1, 0)`; otherwise
/// `alpha = (v_2(S_2) - b_2) / (v_1(S_1) + v_2(S_2) - 1)` and `beta = 1 - alpha`.
pub fn proportional_combination_params(
    market: &Market,
    budgets: &BudgetProfile,
    allocation: &Allocation,
) -> Result<CombinationParams> {
    let v1 = market.bundle_value(0, allocation.bundle(0));
    let v2 = market.bundle_value(1, allocation.bundle(1));
    let total = &v1 + &v2;
    if total == Rational::one() {
        return CombinationParams::new(Rational::one(), Rational::zero());
    }
    let denom = total - Rational::one();
    let alpha = (&v2 - budgets.get(1)) / &denom;
    let beta = Rational::one() - &alpha;
    debug_assert_eq!(beta, (&v1 - budgets.get(0)) / &denom);
    CombinationParams::new(alpha, beta)
}

/// Support a budget-proportional or anti-proportional Pareto-optimal
/// allocation in an equilibrium with budget-exhausting combination prices.
pub fn proportional_ce(
    market: &Market,
    budgets: &BudgetProfile,
    allocation: &Allocation,
    caps: &Caps,
) -> Result<CeCertificate> {
    if market.num_agents() != 2 {
        return Err(Error::Precondition(
            "proportional pricing is defined for two-agent markets".into(),
        ));
    }
    crate::demand::check_dimensions(market, budgets, Some(allocation), None)?;
    if !is_pareto_optimal(market, allocation, caps)? {
        return Err(Error::Precondition(
            "allocation is not Pareto optimal".into(),
        ));
    }
    let values = value_vector(market, allocation);
    let proportional = values.iter().zip(budgets.as_slice()).all(|(v, b)| v >= b);
    let anti = values.iter().zip(budgets.as_slice()).all(|(v, b)| v <= b)
        && values.iter().zip(budgets.as_slice()).any(|(v, b)| v < b);
    if !proportional && !anti {
        return Err(Error::Precondition(
            "allocation is neither budget-proportional nor anti-proportional".into(),
        ));
    }
    let params = proportional_combination_params(market, budgets, allocation)?;
    let prices = combination_prices(market, &params)?;
    for agent in 0..2 {
        let paid = prices.bundle_price(allocation.bundle(agent));
        if &paid != budgets.get(agent) {
            return Err(Error::Internal(format!(
                "combination prices fail budget exhaustion for agent {agent}: paid {paid}, budget {}",
                budgets.get(agent)
            )));
        }
    }
    expect_certificate(
        market,
        budgets,
        allocation,
        &prices,
        caps,
        "proportional_ce",
    )
}

/// Which term attains the gamma maximum, and hence which allocation the
/// construction supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaCase {
    /// `gamma = b_i / b_i^+`: the agent's own augmented-share witness.
    OwnAugmented,
    /// `gamma = b_k / v_i(S-check^k_k)`: the other agent's witness.
    OtherAugmented,
}

/// Equilibrium with prices proportional to agent `i`'s valuation,
/// `p_j = gamma_i v_i(j)`.
///
/// Preconditions (each failure is reported by name): two agents with
/// `b_1 > b_2`; no budget-proportional allocation; no anti-proportional
/// Pareto-optimal allocation; the budget pair outside `R_i`; `T_i` empty.
/// The resulting equilibrium gives both agents their truncated shares.
pub fn gamma_scaled_ce(
    market: &Market,
    budgets: &BudgetProfile,
    agent: usize,
    caps: &Caps,
) -> Result<CeCertificate> {
    let (cert, _case) = gamma_scaled_ce_with_case(market, budgets, agent, caps)?;
    Ok(cert)
}

pub fn gamma_scaled_ce_with_case(
    market: &Market,
    budgets: &BudgetProfile,
    agent: usize,
    caps: &Caps,
) -> Result<(CeCertificate, GammaCase)> {
    if market.num_agents() != 2 {
        return Err(Error::Precondition(
            "gamma-scaled pricing is defined for two-agent markets".into(),
        ));
    }
    if agent > 1 {
        return Err(Error::Validation(format!("no agent {agent}")));
    }
    if budgets.get(0) <= budgets.get(1) {
        return Err(Error::Precondition(
            "gamma-scaled pricing requires b_1 > b_2".into(),
        ));
    }
    let frontier = pareto_frontier(market, caps)?;
    let report = classify_with_frontier(budgets, &frontier);
    if let Some(w) = report.budget_proportional {
        return Err(Error::Precondition(format!(
            "a budget-proportional allocation exists (owners {:?})",
            w.owner()
        )));
    }
    if let Some(w) = report.anti_proportional_po {
        return Err(Error::Precondition(format!(
            "an anti-proportional Pareto-optimal allocation exists (owners {:?})",
            w.owner()
        )));
    }
    let membership = r_membership_with_frontier(budgets, agent, &frontier);
    if membership.member {
        return Err(Error::Precondition(format!(
            "budget pair lies in R_i for agent {agent} (witness pair index {})",
            membership.witness_index.unwrap_or_default()
        )));
    }
    let t_inside = rectangle_t_with_frontier(market, budgets, agent, &frontier, caps)?;
    if let Some(w) = t_inside.first() {
        return Err(Error::Precondition(format!(
            "rectangle T_i for agent {agent} is nonempty (witness owners {:?})",
            w.owner()
        )));
    }

    let other = 1 - agent;
    let own = shares_with_frontier(budgets, agent, &frontier)?;
    let others = shares_with_frontier(budgets, other, &frontier)?;
    // gamma_i = max{ b_i / b_i^+, b_k / v_i(S-check^k_k) }.
    let term_own = budgets.get(agent) / &own.b_plus;
    let v_i_of_others_bundle = market.bundle_value(agent, others.s_check.bundle(other));
    let term_other = budgets.get(other) / &v_i_of_others_bundle;
    if term_own == term_other {
        // A tie would be an R_i membership at the consecutive pair
        // (b_i^-, b_i^+), which the precondition has already excluded.
        return Err(Error::Internal(
            "gamma terms tied despite the budgets being outside R_i".into(),
        ));
    }
    let (gamma, case, allocation) = if term_own > term_other {
        (term_own, GammaCase::OwnAugmented, own.s_check.clone())
    } else {
        (
            term_other,
            GammaCase::OtherAugmented,
            others.s_check.clone(),
        )
    };
    if gamma >= Rational::one() || !gamma.is_positive() {
        return Err(Error::Internal(format!(
            "gamma = {gamma} outside (0, 1); preconditions should rule this out"
        )));
    }
    let prices = PriceVector::new(
        (0..market.num_items())
            .map(|j| &gamma * market.value(agent, j))
            .collect(),
    )?;
    let cert = expect_certificate(
        market,
        budgets,
        &allocation,
        &prices,
        caps,
        "gamma_scaled_ce",
    )?;
    // The lemma also promises both agents their truncated shares.
    for a in 0..2 {
        let profile = shares_with_frontier(budgets, a, &frontier)?;
        let got = market.bundle_value(a, allocation.bundle(a));
        if got < profile.b_minus {
            return Err(Error::Internal(format!(
                "gamma-scaled equilibrium denies agent {a} her truncated share"
            )));
        }
    }
    Ok((cert, case))
}

/// Budgets and prices under which a given Pareto-optimal allocation is an
/// equilibrium. If one agent holds everything, every item is priced 1, the
/// holder's budget is `m` and the other's `1/2`, then both are normalized;
/// otherwise combination prices with weights `(1, 1)` and budgets
/// `b_i = p(S_i)`, normalized.
pub fn second_welfare_ce(
    market: &Market,
    allocation: &Allocation,
    caps: &Caps,
) -> Result<(BudgetProfile, CeCertificate)> {
    if market.num_agents() != 2 {
        return Err(Error::Precondition(
            "the second-welfare construction is for two-agent markets".into(),
        ));
    }
    if !is_pareto_optimal(market, allocation, caps)? {
        return Err(Error::Precondition(
            "allocation is not Pareto optimal".into(),
        ));
    }
    let full = market.full_bundle();
    let (raw_budgets, raw_prices): (Vec<Rational>, Vec<Rational>) =
        if allocation.bundle(0) == full || allocation.bundle(1) == full {
            let holder = if allocation.bundle(0) == full { 0 } else { 1 };
            let m = market.num_items();
            let mut budgets = vec![Rational::zero(); 2];
            budgets[holder] = Rational::from_integer((m as i64).into());
            budgets[1 - holder] = crate::rational::rat(1, 2);
            (budgets, vec![Rational::one(); m])
        } else {
            let params = CombinationParams::new(Rational::one(), Rational::one())?;
            let prices = combination_prices(market, &params)?;
            let budgets = vec![
                prices.bundle_price(allocation.bundle(0)),
                prices.bundle_price(allocation.bundle(1)),
            ];
            (budgets, prices.as_slice().to_vec())
        };
    // Normalize budgets to sum 1 and scale prices by the same factor so the
    // equilibrium is preserved.
    let total: Rational = raw_budgets.iter().sum();
    let budgets = BudgetProfile::new(raw_budgets)?;
    let prices = PriceVector::new(raw_prices)?.scaled(&(Rational::one() / total))?;
    let cert = expect_certificate(
        market,
        &budgets,
        allocation,
        &prices,
        caps,
        "second_welfare_ce",
    )?;
    Ok((budgets, cert))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::parse_market;
    use crate::rational::rat;

    fn caps() -> Caps {
        Caps::default()
    }

    fn opposed_market() -> Market {
        Market::from_values(vec![
            vec![rat(9, 10), rat(1, 10)],
            vec![rat(1, 10), rat(9, 10)],
        ])
        .unwrap()
    }

    #[test]
    fn combination_prices_basic() {
        let market = opposed_market();
        let p = combination_prices(
            &market,
            &CombinationParams::new(rat(1, 1), rat(0, 1)).unwrap(),
        )
        .unwrap();
        assert_eq!(p.as_slice(), market.values_row(0));

        let p = combination_prices(
            &market,
            &CombinationParams::new(rat(1, 1), rat(1, 1)).unwrap(),
        )
        .unwrap();
        assert_eq!(p.as_slice(), &[rat(1, 1), rat(1, 1)]);
    }

    #[test]
    fn combination_prices_identical_agents_halved() {
        let market = Market::from_values(vec![
            vec![rat(1, 6), rat(2, 6), rat(3, 6)],
            vec![rat(1, 6), rat(2, 6), rat(3, 6)],
        ])
        .unwrap();
        let p = combination_prices(
            &market,
            &CombinationParams::new(rat(1, 2), rat(1, 2)).unwrap(),
        )
        .unwrap();
        assert_eq!(p.as_slice(), market.values_row(0));
    }

    #[test]
    fn combination_params_rejects_invalid() {
        assert!(CombinationParams::new(rat(-1, 2), rat(1, 1)).is_err());
        assert!(CombinationParams::new(rat(0, 1), rat(0, 1)).is_err());
    }

    #[test]
    fn proportional_ce_degenerate_branch() {
        let market =
            Market::from_values(vec![vec![rat(1, 2), rat(1, 2)], vec![rat(1, 2), rat(1, 2)]])
                .unwrap();
        let budgets = BudgetProfile::equal(2);
        let allocation = Allocation::new(vec![0, 1], 2).unwrap();
        let params = proportional_combination_params(&market, &budgets, &allocation).unwrap();
        assert_eq!((params.alpha(), params.beta()), (&rat(1, 1), &rat(0, 1)));
        let cert = proportional_ce(&market, &budgets, &allocation, &caps()).unwrap();
        assert_eq!(cert.prices, vec![rat(1, 2), rat(1, 2)]);
    }

    #[test]
    fn proportional_ce_alpha_beta_equation() {
        let market = opposed_market();
        let budgets = BudgetProfile::equal(2);
        let allocation = Allocation::new(vec![0, 1], 2).unwrap();
        let params = proportional_combination_params(&market, &budgets, &allocation).unwrap();
        // alpha = (9/10 - 1/2) / (9/10 + 9/10 - 1) = 1/2.
        assert_eq!((params.alpha(), params.beta()), (&rat(1, 2), &rat(1, 2)));
        let cert = proportional_ce(&market, &budgets, &allocation, &caps()).unwrap();
        assert_eq!(cert.prices, vec![rat(1, 2), rat(1, 2)]);
    }

    #[test]
    fn proportional_ce_anti_proportional_market() {
        let market = Market::from_values(vec![
            vec![rat(100, 1), rat(101, 1)],
            vec![rat(1, 1), rat(1000, 1)],
        ])
        .unwrap();
        let budgets = BudgetProfile::new(vec![rat(5, 8), rat(3, 8)]).unwrap();
        let allocation = Allocation::new(vec![1, 0], 2).unwrap();
        let cert = proportional_ce(&market, &budgets, &allocation, &caps()).unwrap();
        // Budget exhaustion: total price of all items is b_1 + b_2 = 1.
        let total: Rational = cert.prices.iter().sum();
        assert_eq!(total, rat(1, 1));
    }

    #[test]
    fn proportional_ce_rejects_plain_allocations() {
        let market = opposed_market();
        let budgets = BudgetProfile::equal(2);
        // (B -> agent 0, A -> agent 1) is dominated, hence not eligible.
        let dominated = Allocation::new(vec![1, 0], 2).unwrap();
        assert!(matches!(
            proportional_ce(&market, &budgets, &dominated, &caps()),
            Err(Error::Precondition(_))
        ));
        // All-to-one is Pareto optimal but neither proportional nor
        // anti-proportional at equal budgets.
        let lopsided = Allocation::new(vec![0, 0], 2).unwrap();
        assert!(matches!(
            proportional_ce(&market, &budgets, &lopsided, &caps()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn gamma_single_item_case_one() {
        let market = Market::from_values(vec![vec![rat(1, 1)], vec![rat(1, 1)]]).unwrap();
        let budgets = BudgetProfile::new(vec![rat(51, 100), rat(49, 100)]).unwrap();
        let (cert, case) = gamma_scaled_ce_with_case(&market, &budgets, 0, &caps()).unwrap();
        assert_eq!(case, GammaCase::OwnAugmented);
        assert_eq!(cert.owners, vec![0]);
        assert_eq!(cert.prices, vec![rat(51, 100)]);
    }

    #[test]
    fn gamma_identical_preferences_truncated_shares() {
        let market = Market::from_values(vec![
            vec![rat(1, 6), rat(2, 6), rat(3, 6)],
            vec![rat(1, 6), rat(2, 6), rat(3, 6)],
        ])
        .unwrap();
        let budgets = BudgetProfile::new(vec![rat(3, 5), rat(2, 5)]).unwrap();
        let frontier = pareto_frontier(&market, &caps()).unwrap();
        assert!(crate::frontier::outside_r_union(&budgets, &frontier));
        let cert = gamma_scaled_ce(&market, &budgets, 0, &caps()).unwrap();
        for agent in 0..2 {
            let profile = shares_with_frontier(&budgets, agent, &frontier).unwrap();
            let got = market.bundle_value(agent, cert.allocation().bundle(agent));
            assert!(got >= profile.b_minus);
        }
    }

    #[test]
    fn gamma_rejects_proportional_markets() {
        let market = opposed_market();
        let budgets = BudgetProfile::new(vec![rat(51, 100), rat(49, 100)]).unwrap();
        let err = gamma_scaled_ce(&market, &budgets, 0, &caps()).unwrap_err();
        match err {
            Error::Precondition(msg) => assert!(msg.contains("budget-proportional"), "{msg}"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn second_welfare_all_to_one() {
        let market = Market::from_values(vec![
            vec![rat(1, 6), rat(2, 6), rat(3, 6)],
            vec![rat(1, 6), rat(2, 6), rat(3, 6)],
        ])
        .unwrap();
        let allocation = Allocation::new(vec![0, 0, 0], 2).unwrap();
        let (budgets, cert) = second_welfare_ce(&market, &allocation, &caps()).unwrap();
        assert_eq!(budgets.as_slice(), &[rat(6, 7), rat(1, 7)]);
        assert_eq!(cert.prices, vec![rat(2, 7), rat(2, 7), rat(2, 7)]);
    }

    #[test]
    fn second_welfare_combination_branch() {
        let market = opposed_market();
        let allocation = Allocation::new(vec![0, 1], 2).unwrap();
        let (budgets, cert) = second_welfare_ce(&market, &allocation, &caps()).unwrap();
        assert_eq!(budgets.as_slice(), &[rat(1, 2), rat(1, 2)]);
        assert_eq!(cert.prices, vec![rat(1, 2), rat(1, 2)]);
    }

    #[test]
    fn second_welfare_on_example_market() {
        let (market, _) = parse_market(
            r#"{ "items": ["A","B","C","D"],
                 "agents": [
                   { "name": "a1", "values": ["7.9","1","5","2"], "budget": "1/2" },
                   { "name": "a2", "values": ["7.9","1","5","2"], "budget": "1/2" } ] }"#,
        )
        .unwrap();
        let allocation = Allocation::new(vec![0, 0, 1, 1], 2).unwrap();
        let (budgets, cert) = second_welfare_ce(&market, &allocation, &caps()).unwrap();
        // alpha = beta = 1 prices on identical normalized rows sum to 2x the row.
        assert_eq!(cert.prices.len(), 4);
        let total: Rational = budgets.as_slice().iter().sum();
        assert_eq!(total, rat(1, 1));
    }

    #[test]
    fn second_welfare_rejects_dominated_allocation() {
        let market = opposed_market();
        let dominated = Allocation::new(vec![1, 0], 2).unwrap();
        assert!(matches!(
            second_welfare_ce(&market, &dominated, &caps()),
            Err(Error::Precondition(_))
        ));
    }
}
