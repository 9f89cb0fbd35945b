//! Complete equilibrium solving.
//!
//! The solver tries the constructive paths first (budget-proportional /
//! anti-proportional combination pricing, then gamma-scaled pricing), and
//! falls back to a complete exhaustive search: every Pareto-optimal allocation
//! is tested with an exact linear program for supporting prices. Because an
//! equilibrium allocation must be Pareto optimal, infeasibility across the
//! whole Pareto set proves nonexistence.

use num::{One, Signed, Zero};
use serde::Serialize;

use crate::demand::{expect_certificate, verify_ce, CeCertificate, VerifyOutcome};
use crate::error::{Error, Result};
use crate::frontier::{
    classify_with_frontier, outside_r_union, pareto_allocations, r_membership_with_frontier,
    rectangle_t_with_frontier, shares_with_frontier, ParetoFrontier,
};
use crate::lp::{maximize, Constraint, LpResult};
use crate::market::{Allocation, BudgetProfile, Bundle, Caps, Market, PriceVector};
use crate::pricing::{gamma_scaled_ce, proportional_ce};
use crate::rational::{serde_rat_vec, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SolveStatus {
    CeFound,
    NoCeExists,
    CapExceeded,
}

/// Which path produced the certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Proportional,
    GammaScaled,
    ExhaustiveLp,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Proportional => "proportional",
            Strategy::GammaScaled => "gamma_scaled",
            Strategy::ExhaustiveLp => "exhaustive_lp",
        })
    }
}

/// For the proportional strategy, which proportionality class fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProportionalKind {
    BudgetProportional,
    AntiProportional,
}

/// Restrict the solver to one path (`Auto` tries all in order).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyChoice {
    Auto,
    Proportional,
    Gamma,
    Exhaustive,
}

/// Truncated-share satisfaction of the returned certificate.
#[derive(Debug, Clone, Serialize)]
pub struct FairnessSummary {
    pub truncated_share_met: Vec<bool>,
    #[serde(with = "serde_rat_vec")]
    pub truncated_shares: Vec<Rational>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CeCertificate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub proportional_kind: Option<ProportionalKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fairness_summary: Option<FairnessSummary>,
    /// Some agent ties two non-identical bundles, so the strict-preference
    /// assumption behind the theory does not hold on this market; the result
    /// is still exact, but the strictness-dependent guarantees carry that
    /// caveat.
    pub strictness_violated: bool,
}

impl SolveOutcome {
    pub fn found(&self) -> bool {
        self.status == SolveStatus::CeFound
    }
}

/// Exact supporting-price search for one allocation.
///
/// Maximizes a slack `delta` subject to: prices nonnegative, every agent's own
/// bundle affordable, and for every agent and every inclusion-minimal bundle
/// strictly better than her own, price at least `budget + delta`. The
/// allocation is supportable iff the optimal slack is strictly positive; the
/// open "strictly more expensive" region is nonempty exactly when the closed
/// slack maximum is. Inclusion-minimal pruning is valid because prices are
/// nonnegative and additive, so a superset's constraint is implied.
pub fn price_lp(
    market: &Market,
    budgets: &BudgetProfile,
    allocation: &Allocation,
    caps: &Caps,
) -> Result<Option<PriceVector>> {
    crate::demand::check_dimensions(market, budgets, Some(allocation), None)?;
    caps.check_items(market.num_items())?;
    let value_tables: Vec<Vec<Rational>> = (0..market.num_agents())
        .map(|i| market.bundle_value_table(i))
        .collect();
    Ok(price_lp_with_tables(
        market,
        budgets,
        allocation,
        &value_tables,
    ))
}

pub(crate) fn price_lp_with_tables(
    market: &Market,
    budgets: &BudgetProfile,
    allocation: &Allocation,
    value_tables: &[Vec<Rational>],
) -> Option<PriceVector> {
    let m = market.num_items();
    let n = market.num_agents();
    // Variables: p_0..p_{m-1}, delta+ at m, delta- at m+1.
    let cols = m + 2;
    let mut objective = vec![Rational::zero(); cols];
    objective[m] = Rational::one();
    objective[m + 1] = -Rational::one();

    let mut constraints = Vec::new();
    for agent in 0..n {
        let own = allocation.bundle(agent);
        if own != 0 {
            let mut coeffs = vec![Rational::zero(); cols];
            for j in crate::market::bundle_items(own) {
                coeffs[j] = Rational::one();
            }
            constraints.push(Constraint {
                coeffs,
                rhs: budgets.get(agent).clone(),
            });
        }
        let threshold = &value_tables[agent][own as usize];
        for better in minimal_better_bundles(&value_tables[agent], threshold) {
            // p(T) >= b_i + delta, written -p(T) + delta <= -b_i.
            let mut coeffs = vec![Rational::zero(); cols];
            for j in crate::market::bundle_items(better) {
                coeffs[j] = -Rational::one();
            }
            coeffs[m] = Rational::one();
            coeffs[m + 1] = -Rational::one();
            constraints.push(Constraint {
                coeffs,
                rhs: -budgets.get(agent).clone(),
            });
        }
    }

    match maximize(&objective, &constraints) {
        LpResult::Optimal {
            objective: delta,
            solution,
        } => {
            if delta.is_positive() {
                let prices = solution[..m].to_vec();
                Some(PriceVector::new(prices).expect("LP prices are nonnegative"))
            } else {
                None
            }
        }
        LpResult::Infeasible => unreachable!("the slack formulation is always feasible"),
        LpResult::Unbounded => {
            unreachable!("own-bundle affordability bounds the slack from above")
        }
    }
}

/// Bundles with value strictly above `threshold`, pruned to inclusion-minimal
/// ones. Monotone values make a bundle minimal exactly when every single-item
/// removal drops it to the threshold or below.
fn minimal_better_bundles(value_table: &[Rational], threshold: &Rational) -> Vec<Bundle> {
    let mut minimal = Vec::new();
    for mask in 1..value_table.len() {
        if value_table[mask] <= *threshold {
            continue;
        }
        let mut is_minimal = true;
        let mut rest = mask;
        while rest != 0 {
            let bit = rest & rest.wrapping_neg();
            if value_table[mask & !bit] > *threshold {
                is_minimal = false;
                break;
            }
            rest &= rest - 1;
        }
        if is_minimal {
            minimal.push(mask as Bundle);
        }
    }
    minimal
}

/// Solve for a competitive equilibrium, trying in order:
/// 1. a budget-proportional Pareto-optimal allocation with combination prices,
/// 2. an anti-proportional Pareto-optimal allocation likewise,
/// 3. (two agents, unequal budgets) gamma-scaled pricing when the budget pair
///    is outside `R_i` and `T_i` is empty for some agent,
/// 4. the exhaustive LP search over every Pareto-optimal allocation.
///
/// `NO_CE_EXISTS` is a proof: a competitive allocation must be Pareto optimal,
/// so LP infeasibility across the entire Pareto set rules everything out.
pub fn solve(market: &Market, budgets: &BudgetProfile, caps: &Caps) -> Result<SolveOutcome> {
    solve_with_strategy(market, budgets, caps, StrategyChoice::Auto)
}

pub fn solve_with_strategy(
    market: &Market,
    budgets: &BudgetProfile,
    caps: &Caps,
    choice: StrategyChoice,
) -> Result<SolveOutcome> {
    let mut outcome = solve_inner(market, budgets, caps, choice)?;
    outcome.strictness_violated = !market.validate_strictness(caps)?.is_clean();
    Ok(outcome)
}

fn solve_inner(
    market: &Market,
    budgets: &BudgetProfile,
    caps: &Caps,
    choice: StrategyChoice,
) -> Result<SolveOutcome> {
    crate::demand::check_dimensions(market, budgets, None, None)?;
    caps.check_items(market.num_items())?;
    caps.check_labelings(market.num_agents(), market.num_items())?;

    let po_list = pareto_allocations(market, caps)?;
    let frontier = crate::frontier::pareto_frontier(market, caps)?;

    // The constructive paths are two-agent theory; other sizes go straight
    // to the exhaustive search.
    let two_agents = market.num_agents() == 2;
    if !two_agents && matches!(choice, StrategyChoice::Proportional | StrategyChoice::Gamma) {
        return Err(Error::Precondition(
            "the proportional and gamma strategies are defined for two-agent markets".into(),
        ));
    }

    if two_agents && matches!(choice, StrategyChoice::Auto | StrategyChoice::Proportional) {
        if let Some(outcome) = try_proportional(market, budgets, &frontier, caps)? {
            return Ok(outcome);
        }
        if choice == StrategyChoice::Proportional {
            return Err(Error::Precondition(
                "no budget-proportional or anti-proportional Pareto-optimal allocation exists"
                    .into(),
            ));
        }
    }

    if two_agents && matches!(choice, StrategyChoice::Auto | StrategyChoice::Gamma) {
        match try_gamma(market, budgets, caps) {
            Ok(Some(cert)) => {
                return Ok(finish(
                    market,
                    budgets,
                    &frontier,
                    cert,
                    Strategy::GammaScaled,
                    None,
                ))
            }
            Ok(None) => {
                if choice == StrategyChoice::Gamma {
                    return Err(Error::Precondition(
                        "gamma-scaled preconditions fail for both agents".into(),
                    ));
                }
            }
            Err(e) => return Err(e),
        }
    }

    if matches!(choice, StrategyChoice::Auto | StrategyChoice::Exhaustive) {
        if let Some(cert) = exhaustive_search_with_list(market, budgets, &po_list, caps)? {
            return Ok(finish(
                market,
                budgets,
                &frontier,
                cert,
                Strategy::ExhaustiveLp,
                None,
            ));
        }
        return Ok(SolveOutcome {
            status: SolveStatus::NoCeExists,
            certificate: None,
            strategy: None,
            proportional_kind: None,
            fairness_summary: None,
            strictness_violated: false,
        });
    }

    // A restricted non-exhaustive strategy that did not fire ends up here.
    Err(Error::Precondition(
        "requested strategy did not produce an equilibrium".into(),
    ))
}

fn try_proportional(
    market: &Market,
    budgets: &BudgetProfile,
    frontier: &ParetoFrontier,
    caps: &Caps,
) -> Result<Option<SolveOutcome>> {
    let report = classify_with_frontier(budgets, frontier);
    if let Some(witness) = report.budget_proportional {
        let cert = proportional_ce(market, budgets, &witness, caps)?;
        return Ok(Some(finish(
            market,
            budgets,
            frontier,
            cert,
            Strategy::Proportional,
            Some(ProportionalKind::BudgetProportional),
        )));
    }
    if let Some(witness) = report.anti_proportional_po {
        let cert = proportional_ce(market, budgets, &witness, caps)?;
        return Ok(Some(finish(
            market,
            budgets,
            frontier,
            cert,
            Strategy::Proportional,
            Some(ProportionalKind::AntiProportional),
        )));
    }
    Ok(None)
}

/// Try gamma-scaled pricing for either agent, relabeling so that the
/// `b_1 > b_2` normalization holds. Returns `None` when no agent satisfies
/// the preconditions (or the budgets are equal).
pub(crate) fn try_gamma(
    market: &Market,
    budgets: &BudgetProfile,
    caps: &Caps,
) -> Result<Option<CeCertificate>> {
    if market.num_agents() != 2 || budgets.get(0) == budgets.get(1) {
        return Ok(None);
    }
    if budgets.get(0) > budgets.get(1) {
        return try_gamma_ordered(market, budgets, caps);
    }
    // Relabel agents so the first has the larger budget, then map back.
    let swapped_market = Market::new(
        market.item_names().to_vec(),
        vec![
            market.agent_names()[1].clone(),
            market.agent_names()[0].clone(),
        ],
        vec![
            market.raw_values()[1].clone(),
            market.raw_values()[0].clone(),
        ],
    )?;
    let swapped_budgets =
        BudgetProfile::new(vec![budgets.raw()[1].clone(), budgets.raw()[0].clone()])?;
    let swapped = try_gamma_ordered(&swapped_market, &swapped_budgets, caps)?;
    Ok(swapped.map(|cert| CeCertificate {
        owners: cert.owners.iter().map(|&a| 1 - a).collect(),
        prices: cert.prices,
        demand_values: {
            let mut v = cert.demand_values;
            v.reverse();
            v
        },
    }))
}

fn try_gamma_ordered(
    market: &Market,
    budgets: &BudgetProfile,
    caps: &Caps,
) -> Result<Option<CeCertificate>> {
    let frontier = crate::frontier::pareto_frontier(market, caps)?;
    let report = classify_with_frontier(budgets, &frontier);
    if report.has_budget_proportional() || report.has_anti_proportional_po() {
        return Ok(None);
    }
    for agent in 0..2 {
        if r_membership_with_frontier(budgets, agent, &frontier).member {
            continue;
        }
        if !rectangle_t_with_frontier(market, budgets, agent, &frontier, caps)?.is_empty() {
            continue;
        }
        return gamma_scaled_ce(market, budgets, agent, caps).map(Some);
    }
    Ok(None)
}

/// Run the exact LP over every Pareto-optimal allocation in enumeration
/// order; the first supportable one wins.
pub fn exhaustive_search(
    market: &Market,
    budgets: &BudgetProfile,
    caps: &Caps,
) -> Result<Option<CeCertificate>> {
    let po_list = pareto_allocations(market, caps)?;
    exhaustive_search_with_list(market, budgets, &po_list, caps)
}

fn exhaustive_search_with_list(
    market: &Market,
    budgets: &BudgetProfile,
    po_list: &[(Allocation, Vec<Rational>)],
    caps: &Caps,
) -> Result<Option<CeCertificate>> {
    let value_tables: Vec<Vec<Rational>> = (0..market.num_agents())
        .map(|i| market.bundle_value_table(i))
        .collect();
    for (allocation, _) in po_list {
        if let Some(prices) = price_lp_with_tables(market, budgets, allocation, &value_tables) {
            let cert = expect_certificate(
                market,
                budgets,
                allocation,
                &prices,
                caps,
                "exhaustive_search",
            )?;
            return Ok(Some(cert));
        }
    }
    Ok(None)
}

fn finish(
    market: &Market,
    budgets: &BudgetProfile,
    frontier: &ParetoFrontier,
    cert: CeCertificate,
    strategy: Strategy,
    proportional_kind: Option<ProportionalKind>,
) -> SolveOutcome {
    let fairness = fairness_summary(market, budgets, frontier, &cert);
    SolveOutcome {
        status: SolveStatus::CeFound,
        certificate: Some(cert),
        strategy: Some(strategy),
        proportional_kind,
        fairness_summary: Some(fairness),
        strictness_violated: false,
    }
}

fn fairness_summary(
    market: &Market,
    budgets: &BudgetProfile,
    frontier: &ParetoFrontier,
    cert: &CeCertificate,
) -> FairnessSummary {
    let allocation = cert.allocation();
    let mut met = Vec::with_capacity(market.num_agents());
    let mut shares = Vec::with_capacity(market.num_agents());
    for agent in 0..market.num_agents() {
        let profile = shares_with_frontier(budgets, agent, frontier)
            .expect("truncated shares exist for every agent");
        let got = market.bundle_value(agent, allocation.bundle(agent));
        met.push(got >= profile.b_minus);
        shares.push(profile.b_minus);
    }
    FairnessSummary {
        truncated_share_met: met,
        truncated_shares: shares,
    }
}

/// One perturbation step of the almost-equal-budgets run.
#[derive(Debug, Clone, Serialize)]
pub struct AlmostEqualRun {
    #[serde(with = "crate::rational::serde_rat")]
    pub epsilon_requested: Rational,
    #[serde(with = "crate::rational::serde_rat")]
    pub epsilon_used: Rational,
    #[serde(with = "serde_rat_vec")]
    pub budgets: Vec<Rational>,
    pub outcome: SolveOutcome,
}

#[derive(Debug, Clone, Serialize)]
pub struct AlmostEqualReport {
    pub runs: Vec<AlmostEqualRun>,
    /// True when any perturbation failed to produce an equilibrium. For small
    /// epsilon this would contradict the almost-equal existence theorem, so
    /// callers treat it as an alarm, not a data point.
    pub any_no_ce: bool,
    /// True when every perturbation failed.
    pub all_failed: bool,
}

/// Solve under the canonical near-equal perturbation `b_1 = (1/2 + eps) / (1 + eps)`
/// for each epsilon in the grid, halving any epsilon whose budget pair lands in
/// `R_1` or `R_2`.
///
/// When some Pareto-optimal allocation gives both agents at least 1/2, the
/// equal-budget proportional equilibrium is rescaled to the perturbed budgets
/// and re-verified before the gamma and exhaustive paths are attempted.
pub fn solve_almost_equal(
    market: &Market,
    epsilon_grid: &[Rational],
    caps: &Caps,
) -> Result<AlmostEqualReport> {
    if market.num_agents() != 2 {
        return Err(Error::Precondition(
            "the almost-equal construction is for two-agent markets".into(),
        ));
    }
    caps.check_items(market.num_items())?;
    let frontier = crate::frontier::pareto_frontier(market, caps)?;
    let mut runs = Vec::new();
    for requested in epsilon_grid {
        if !requested.is_positive() {
            return Err(Error::Validation("epsilon must be positive".into()));
        }
        let mut epsilon = requested.clone();
        let mut budgets = perturbed_equal_budgets(&epsilon);
        let mut shrink_attempts = 0;
        while !outside_r_union(&budgets, &frontier) {
            shrink_attempts += 1;
            if shrink_attempts > 64 {
                return Err(Error::Internal(
                    "could not shrink epsilon out of the zero-measure exclusion set".into(),
                ));
            }
            epsilon /= Rational::from_integer(2.into());
            budgets = perturbed_equal_budgets(&epsilon);
        }
        let mut outcome = solve_almost_equal_at(market, &budgets, &frontier, caps)?;
        outcome.strictness_violated = !market.validate_strictness(caps)?.is_clean();
        runs.push(AlmostEqualRun {
            epsilon_requested: requested.clone(),
            epsilon_used: epsilon,
            budgets: budgets.as_slice().to_vec(),
            outcome,
        });
    }
    let any_no_ce = runs.iter().any(|r| !r.outcome.found());
    let all_failed = runs.iter().all(|r| !r.outcome.found());
    Ok(AlmostEqualReport {
        runs,
        any_no_ce,
        all_failed,
    })
}

/// Budgets `((1/2 + eps) / (1 + eps), rest)`.
pub fn perturbed_equal_budgets(epsilon: &Rational) -> BudgetProfile {
    let half = crate::rational::rat(1, 2);
    let b1 = (&half + epsilon) / (Rational::one() + epsilon);
    let b2 = Rational::one() - &b1;
    BudgetProfile::new(vec![b1, b2]).expect("perturbed budgets are positive")
}

fn solve_almost_equal_at(
    market: &Market,
    budgets: &BudgetProfile,
    frontier: &ParetoFrontier,
    caps: &Caps,
) -> Result<SolveOutcome> {
    if let Some(outcome) = try_proportional(market, budgets, frontier, caps)? {
        return Ok(outcome);
    }
    if let Some(outcome) = try_equal_budget_rescale(market, budgets, frontier, caps)? {
        return Ok(outcome);
    }
    if let Some(cert) = try_gamma(market, budgets, caps)? {
        return Ok(finish(
            market,
            budgets,
            frontier,
            cert,
            Strategy::GammaScaled,
            None,
        ));
    }
    if let Some(cert) = exhaustive_search(market, budgets, caps)? {
        return Ok(finish(
            market,
            budgets,
            frontier,
            cert,
            Strategy::ExhaustiveLp,
            None,
        ));
    }
    Ok(SolveOutcome {
        status: SolveStatus::NoCeExists,
        certificate: None,
        strategy: None,
        proportional_kind: None,
        fairness_summary: None,
        strictness_violated: false,
    })
}

/// When a Pareto-optimal allocation gives both agents at least 1/2, it is
/// proportional at exactly-equal budgets. Build that equilibrium, rescale its
/// prices so the smaller perturbed budget is exhausted, and re-verify at the
/// perturbed budgets. Fails (returning `None`) only when some bundle price
/// falls inside the perturbation window, in which case a smaller epsilon or
/// another path is needed.
fn try_equal_budget_rescale(
    market: &Market,
    budgets: &BudgetProfile,
    frontier: &ParetoFrontier,
    caps: &Caps,
) -> Result<Option<SolveOutcome>> {
    let half = crate::rational::rat(1, 2);
    let witness = frontier
        .entries
        .iter()
        .find(|e| e.values.iter().all(|v| *v >= half));
    let Some(entry) = witness else {
        return Ok(None);
    };
    let equal = BudgetProfile::equal(2);
    let cert = proportional_ce(market, &equal, &entry.allocation, caps)?;
    let small_budget = budgets.get(0).min(budgets.get(1));
    let factor = small_budget * Rational::from_integer(2.into());
    let scaled = cert.price_vector().scaled(&factor)?;
    match verify_ce(market, budgets, &entry.allocation, &scaled, caps)? {
        VerifyOutcome::Certificate(cert) => Ok(Some(finish(
            market,
            budgets,
            frontier,
            cert,
            Strategy::Proportional,
            Some(ProportionalKind::BudgetProportional),
        ))),
        VerifyOutcome::Violation(_) => Ok(None),
    }
}
