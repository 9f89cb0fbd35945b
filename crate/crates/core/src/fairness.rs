//! Fairness certification: maximin shares, envy variants, proportionality and
//! weighted Nash welfare, all in exact arithmetic.

use num::bigint::BigInt;
use num::{BigUint, Integer, One, ToPrimitive, Zero};
use serde::Serialize;

use crate::demand::CeCertificate;
use crate::error::{Error, Result};
use crate::frontier::{enumerate_allocations, pareto_frontier, shares_with_frontier, value_vector};
use crate::market::{Allocation, BudgetProfile, Caps, Market};
use crate::rational::{serde_rat, Rational};

/// Exact `l`-out-of-`d` maximin share of an additive value row: the best,
/// over partitions of the items into `d` (possibly empty) parts, of the total
/// value of the worst `l` parts.
pub fn mms_value(values: &[Rational], ell: usize, d: usize, caps: &Caps) -> Result<Rational> {
    let all = mms_values_for_d(values, d, caps)?;
    if ell == 0 || ell > d {
        return Err(Error::Validation(format!(
            "l = {ell} must satisfy 1 <= l <= d = {d}"
        )));
    }
    Ok(all[ell - 1].clone())
}

/// Maximin values for every `l` in `1..=d` at once; index `l - 1`.
///
/// Partitions are enumerated once in restricted-growth form (parts are
/// unlabeled, so each part multiset is visited exactly once) and the worst-`l`
/// prefix sums are maximized for all `l` simultaneously.
pub fn mms_values_for_d(values: &[Rational], d: usize, caps: &Caps) -> Result<Vec<Rational>> {
    if d == 0 {
        return Err(Error::Validation("d must be positive".into()));
    }
    let m = values.len();
    if m == 0 {
        return Err(Error::Validation("empty value row".into()));
    }
    caps.check_labelings(d, m)?;

    let mut best: Vec<Option<Rational>> = vec![None; d];
    let mut labels = vec![0usize; m];
    let mut part_sums: Vec<Rational> = vec![Rational::zero(); d.min(m)];

    // Depth-first over restricted growth strings: item 0 goes to part 0; item
    // t goes to any used part or the next fresh one, never beyond d parts.
    #[allow(clippy::too_many_arguments)]
    fn walk(
        item: usize,
        used: usize,
        m: usize,
        d: usize,
        values: &[Rational],
        labels: &mut Vec<usize>,
        part_sums: &mut Vec<Rational>,
        best: &mut Vec<Option<Rational>>,
    ) {
        if item == m {
            let mut sums: Vec<&Rational> = part_sums[..used].iter().collect();
            sums.sort();
            let zero = Rational::zero();
            let mut running = Rational::zero();
            for ell in 1..=d {
                // Worst `ell` parts: empty parts (value 0) fill in when the
                // partition uses fewer than d parts.
                let nonzero_taken = ell.saturating_sub(d - used);
                if nonzero_taken > 0 && nonzero_taken <= used {
                    running = &running + sums[nonzero_taken - 1];
                }
                let candidate = if ell <= d - used { &zero } else { &running };
                match &best[ell - 1] {
                    Some(b) if b >= candidate => {}
                    _ => best[ell - 1] = Some(candidate.clone()),
                }
            }
            return;
        }
        let limit = (used + 1).min(d);
        for part in 0..limit {
            labels[item] = part;
            let new_used = used.max(part + 1);
            if part == part_sums.len() {
                part_sums.push(Rational::zero());
            }
            part_sums[part] += &values[item];
            walk(item + 1, new_used, m, d, values, labels, part_sums, best);
            part_sums[part] -= &values[item];
        }
    }

    // Sorting the worst-l prefix incrementally inside the hot loop costs more
    // than recomputing: the recursion above recomputes at leaves only.
    walk(0, 0, m, d, values, &mut labels, &mut part_sums, &mut best);
    Ok(best
        .into_iter()
        .map(|b| b.expect("at least one partition exists"))
        .collect())
}

/// One maximin-guarantee check against a certificate.
#[derive(Debug, Clone, Serialize)]
pub struct MmsCheck {
    pub agent: usize,
    pub ell: usize,
    pub d: usize,
    #[serde(with = "serde_rat")]
    pub share_value: Rational,
    pub met: bool,
}

/// Check the equilibrium maximin guarantee: for every agent `i` and every
/// fraction `l/d <= b_i` with `d <= d_max`, the agent's equilibrium value must
/// reach her `l`-out-of-`d` maximin share. A failed check falsifies the
/// guarantee and is a bug, not a report entry; callers assert on it.
pub fn check_ce_mms_guarantee(
    market: &Market,
    budgets: &BudgetProfile,
    certificate: &CeCertificate,
    d_max: usize,
    caps: &Caps,
) -> Result<Vec<MmsCheck>> {
    let mut checks = Vec::new();
    for agent in 0..market.num_agents() {
        let own_value = &certificate.demand_values[agent];
        let budget = budgets.get(agent);
        for d in 1..=d_max {
            let all = mms_values_for_d(market.values_row(agent), d, caps)?;
            for ell in 1..=d {
                let fraction = crate::rational::rat(ell as i64, d as i64);
                if fraction > *budget {
                    continue;
                }
                let share = all[ell - 1].clone();
                checks.push(MmsCheck {
                    agent,
                    ell,
                    d,
                    met: own_value >= &share,
                    share_value: share,
                });
            }
        }
    }
    Ok(checks)
}

/// Envy-freeness up to one/any good and justified envy for coalitions.
#[derive(Debug, Clone, Serialize)]
pub struct EnvyReport {
    pub ef1: bool,
    /// Violating (envious agent, envied agent) when EF-1 fails.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ef1_witness: Option<(usize, usize)>,
    pub ef1_star: bool,
    /// Violating (agent, envied agent, removed item): after removing this
    /// item, the envied bundle is still strictly preferred.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ef1_star_witness: Option<(usize, usize, usize)>,
    pub justified_ef_coalitions: bool,
    /// Violating (agent, coalition members) when coalition justified-EF fails.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub justified_ef_witness: Option<(usize, Vec<usize>)>,
}

/// Exact envy checks. Non-envy is value-nonstrict (`<=`), so the guarantees
/// proved for equilibria hold verbatim when identical items create ties.
pub fn envy_checks(
    market: &Market,
    budgets: &BudgetProfile,
    allocation: &Allocation,
) -> Result<EnvyReport> {
    crate::demand::check_dimensions(market, budgets, Some(allocation), None)?;
    let n = market.num_agents();
    if n > 16 {
        return Err(Error::CapExceeded(format!(
            "coalition envy checks enumerate 2^{n} coalitions"
        )));
    }
    let bundles = allocation.bundles(n);

    let mut ef1 = true;
    let mut ef1_witness = None;
    let mut ef1_star = true;
    let mut ef1_star_witness = None;
    for i in 0..n {
        let own_value = market.bundle_value(i, bundles[i]);
        for k in 0..n {
            if i == k || bundles[k] == 0 {
                continue;
            }
            let mut some_removal_ok = false;
            for j in crate::market::bundle_items(bundles[k]) {
                let reduced = bundles[k] & !(1u32 << j);
                let reduced_value = market.bundle_value(i, reduced);
                if reduced_value <= own_value {
                    some_removal_ok = true;
                } else if ef1_star {
                    ef1_star = false;
                    ef1_star_witness = Some((i, k, j));
                }
            }
            if !some_removal_ok && ef1 {
                ef1 = false;
                ef1_witness = Some((i, k));
            }
        }
    }

    let mut justified = true;
    let mut justified_witness = None;
    'outer: for i in 0..n {
        let own_value = market.bundle_value(i, bundles[i]);
        let others: Vec<usize> = (0..n).filter(|&k| k != i).collect();
        for coalition_bits in 1u32..(1 << others.len()) {
            let members: Vec<usize> = others
                .iter()
                .enumerate()
                .filter(|(pos, _)| coalition_bits & (1 << pos) != 0)
                .map(|(_, &k)| k)
                .collect();
            let coalition_budget: Rational = members.iter().map(|&k| budgets.get(k).clone()).sum();
            if coalition_budget > *budgets.get(i) {
                continue;
            }
            let union = members.iter().fold(0u32, |acc, &k| acc | bundles[k]);
            if market.bundle_value(i, union) > own_value {
                justified = false;
                justified_witness = Some((i, members));
                break 'outer;
            }
        }
    }

    Ok(EnvyReport {
        ef1,
        ef1_witness,
        ef1_star,
        ef1_star_witness,
        justified_ef_coalitions: justified,
        justified_ef_witness: justified_witness,
    })
}

/// Weighted Nash product of an allocation, in exactly comparable form:
/// `prod_i v_i(S_i)^{B_i}` over the agents with positive factors, kept as an
/// exact (numerator, denominator) pair of big integers.
#[derive(Debug, Clone)]
struct NashScore {
    zero_factors: usize,
    numerator: BigUint,
    denominator: BigUint,
}

impl NashScore {
    /// Higher is better: all-positive beats any-zero, then the exact product
    /// decides by cross-multiplication.
    fn beats(&self, other: &NashScore) -> std::cmp::Ordering {
        use std::cmp::Ordering;
        match (self.zero_factors == 0, other.zero_factors == 0) {
            (true, false) => return Ordering::Greater,
            (false, true) => return Ordering::Less,
            _ => {}
        }
        (&self.numerator * &other.denominator).cmp(&(&other.numerator * &self.denominator))
    }
}

fn integer_weights(budgets: &BudgetProfile, caps: &Caps) -> Result<Vec<u32>> {
    let mut lcm = BigInt::one();
    for b in budgets.as_slice() {
        lcm = lcm.lcm(b.denom());
    }
    let mut weights = Vec::with_capacity(budgets.len());
    for b in budgets.as_slice() {
        let w = b.numer() * (&lcm / b.denom());
        let w = w
            .to_u64()
            .filter(|&w| w <= caps.max_nash_exponent)
            .ok_or_else(|| {
                Error::CapExceeded(format!(
                    "Nash-welfare exponent {w} exceeds the cap of {}",
                    caps.max_nash_exponent
                ))
            })?;
        weights.push(w as u32);
    }
    Ok(weights)
}

fn nash_score(market: &Market, allocation: &Allocation, weights: &[u32]) -> NashScore {
    let mut zero_factors = 0usize;
    let mut numerator = BigUint::one();
    let mut denominator = BigUint::one();
    for agent in 0..market.num_agents() {
        let value = market.bundle_value(agent, allocation.bundle(agent));
        if value.is_zero() {
            zero_factors += 1;
            continue;
        }
        numerator *= value.numer().magnitude().pow(weights[agent]);
        denominator *= value.denom().magnitude().pow(weights[agent]);
    }
    NashScore {
        zero_factors,
        numerator,
        denominator,
    }
}

/// Exact argmax of the budget-weighted Nash product `prod_i v_i(S_i)^{b_i}`
/// over all allocations, comparing integer powers by cross-multiplication
/// (never logarithms). Allocations with a zero factor rank below all
/// all-positive ones; among them the product of the nonzero factors decides;
/// remaining ties go to the lexicographically smallest owner vector.
pub fn nash_welfare_argmax(
    market: &Market,
    budgets: &BudgetProfile,
    caps: &Caps,
) -> Result<Allocation> {
    crate::demand::check_dimensions(market, budgets, None, None)?;
    let weights = integer_weights(budgets, caps)?;
    let mut best: Option<(Allocation, NashScore)> = None;
    for allocation in enumerate_allocations(market.num_agents(), market.num_items(), caps)? {
        let score = nash_score(market, &allocation, &weights);
        let replace = match &best {
            None => true,
            // Strictly-greater keeps the earliest (lexicographically
            // smallest) maximizer, because enumeration order is ascending.
            Some((_, incumbent)) => score.beats(incumbent) == std::cmp::Ordering::Greater,
        };
        if replace {
            best = Some((allocation, score));
        }
    }
    Ok(best.expect("at least one allocation exists").0)
}

/// Is the allocation a weighted-Nash maximizer (ties count)?
pub fn is_nash_welfare_optimal(
    market: &Market,
    budgets: &BudgetProfile,
    allocation: &Allocation,
    caps: &Caps,
) -> Result<bool> {
    let weights = integer_weights(budgets, caps)?;
    let own = nash_score(market, allocation, &weights);
    for other in enumerate_allocations(market.num_agents(), market.num_items(), caps)? {
        let score = nash_score(market, &other, &weights);
        if score.beats(&own) == std::cmp::Ordering::Greater {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Per-agent fairness flags for one allocation.
#[derive(Debug, Clone, Serialize)]
pub struct AgentFairness {
    pub agent: usize,
    #[serde(with = "serde_rat")]
    pub value: Rational,
    #[serde(with = "serde_rat")]
    pub budget: Rational,
    pub budget_proportional: bool,
    #[serde(with = "serde_rat")]
    pub truncated_share: Rational,
    pub truncated_share_met: bool,
    #[serde(with = "serde_rat")]
    pub augmented_share: Rational,
    pub augmented_share_met: bool,
}

/// Full fairness audit of an allocation (competitive or not).
#[derive(Debug, Clone, Serialize)]
pub struct FairnessReport {
    pub agents: Vec<AgentFairness>,
    pub envy: EnvyReport,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub mms_results: Vec<MmsCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nash_welfare_optimal: Option<bool>,
}

/// Options for [`fairness_report`].
#[derive(Debug, Clone, Default)]
pub struct FairnessOptions {
    /// Check `l`-out-of-`d` maximin shares for all `d <= mms_d_max`,
    /// restricted to fractions `l/d` at most the agent's budget.
    pub mms_d_max: Option<usize>,
    /// Compare against the exact weighted Nash argmax.
    pub check_nash: bool,
}

pub fn fairness_report(
    market: &Market,
    budgets: &BudgetProfile,
    allocation: &Allocation,
    options: &FairnessOptions,
    caps: &Caps,
) -> Result<FairnessReport> {
    crate::demand::check_dimensions(market, budgets, Some(allocation), None)?;
    let frontier = pareto_frontier(market, caps)?;
    let values = value_vector(market, allocation);
    let mut agents = Vec::with_capacity(market.num_agents());
    for agent in 0..market.num_agents() {
        let profile = shares_with_frontier(budgets, agent, &frontier)?;
        let value = values[agent].clone();
        agents.push(AgentFairness {
            agent,
            budget_proportional: value >= *budgets.get(agent),
            truncated_share_met: value >= profile.b_minus,
            augmented_share_met: value >= profile.b_plus,
            truncated_share: profile.b_minus,
            augmented_share: profile.b_plus,
            budget: budgets.get(agent).clone(),
            value,
        });
    }
    let envy = envy_checks(market, budgets, allocation)?;
    let mms_results = match options.mms_d_max {
        Some(d_max) => {
            let mut checks = Vec::new();
            for agent in 0..market.num_agents() {
                let own_value = &values[agent];
                for d in 1..=d_max {
                    let all = mms_values_for_d(market.values_row(agent), d, caps)?;
                    for ell in 1..=d {
                        let fraction = crate::rational::rat(ell as i64, d as i64);
                        if fraction > *budgets.get(agent) {
                            continue;
                        }
                        checks.push(MmsCheck {
                            agent,
                            ell,
                            d,
                            met: own_value >= &all[ell - 1],
                            share_value: all[ell - 1].clone(),
                        });
                    }
                }
            }
            checks
        }
        None => Vec::new(),
    };
    let nash_welfare_optimal = if options.check_nash {
        Some(is_nash_welfare_optimal(market, budgets, allocation, caps)?)
    } else {
        None
    };
    Ok(FairnessReport {
        agents,
        envy,
        mms_results,
        nash_welfare_optimal,
    })
}
