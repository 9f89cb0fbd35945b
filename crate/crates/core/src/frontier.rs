//! Allocation enumeration, the Pareto-optimal set, and the value-plane
//! geometry built on it: truncated/augmented shares, the rectangle `T_i` and
//! the genericity exclusion set `R_i` for two-agent markets.

use num::{One, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::market::{Allocation, BudgetProfile, Caps, Market};
use crate::rational::{serde_rat_vec, Rational};

/// Per-agent own-bundle values of an allocation. For two normalized additive
/// agents, `v_i(S_k) = 1 - v_i(S_i)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValuePoint(#[serde(with = "serde_rat_vec")] pub Vec<Rational>);

/// One Pareto-optimal value point with its canonical representative
/// allocation (the lexicographically smallest owner vector achieving it).
#[derive(Debug, Clone)]
pub struct FrontierEntry {
    pub allocation: Allocation,
    pub values: Vec<Rational>,
}

/// The set of Pareto-optimal allocations, one representative per value point.
/// For two agents the entries are sorted ascending by agent 0's value (agent
/// 1's value then descends strictly); for more agents the order is
/// lexicographic in the value vector.
#[derive(Debug, Clone)]
pub struct ParetoFrontier {
    pub entries: Vec<FrontierEntry>,
}

impl ParetoFrontier {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Agent `i`'s own-bundle values in frontier order.
    pub fn agent_values(&self, agent: usize) -> Vec<&Rational> {
        self.entries.iter().map(|e| &e.values[agent]).collect()
    }

    /// Entries reordered so agent `i`'s value ascends (two-agent markets).
    /// Agent 0's order is the stored order; agent 1's is its reverse.
    pub fn ordered_for_agent(&self, agent: usize) -> Vec<&FrontierEntry> {
        match agent {
            0 => self.entries.iter().collect(),
            1 => self.entries.iter().rev().collect(),
            _ => panic!("per-agent frontier order is defined for two agents"),
        }
    }
}

/// Iterator over all `n^m` owner vectors in lexicographic (odometer) order:
/// `[0,0,..,0], [0,0,..,1], ...` with the last item cycling fastest.
pub struct AllocationIter {
    next: Option<Vec<usize>>,
    num_agents: usize,
}

impl Iterator for AllocationIter {
    type Item = Allocation;

    fn next(&mut self) -> Option<Allocation> {
        let current = self.next.clone()?;
        // Advance the odometer.
        let mut advanced = current.clone();
        let mut pos = advanced.len();
        loop {
            if pos == 0 {
                self.next = None;
                break;
            }
            pos -= 1;
            if advanced[pos] + 1 < self.num_agents {
                advanced[pos] += 1;
                for later in advanced.iter_mut().skip(pos + 1) {
                    *later = 0;
                }
                self.next = Some(advanced);
                break;
            }
        }
        Some(Allocation::new(current, self.num_agents).expect("enumerated allocation is valid"))
    }
}

/// Enumerate every allocation of `m` items to `n` agents exactly once.
pub fn enumerate_allocations(n: usize, m: usize, caps: &Caps) -> Result<AllocationIter> {
    if n < 1 || m < 1 {
        return Err(Error::Validation("need at least one agent and item".into()));
    }
    caps.check_labelings(n, m)?;
    Ok(AllocationIter {
        next: Some(vec![0; m]),
        num_agents: n,
    })
}

/// `dominator` dominates `dominated` when it is weakly better for every agent
/// and strictly better for at least one.
pub fn dominates(dominator: &[Rational], dominated: &[Rational]) -> bool {
    let mut strict = false;
    for (a, b) in dominator.iter().zip(dominated) {
        if a < b {
            return false;
        }
        if a > b {
            strict = true;
        }
    }
    strict
}

/// Own-bundle value vector of an allocation.
pub fn value_vector(market: &Market, allocation: &Allocation) -> Vec<Rational> {
    let bundles = allocation.bundles(market.num_agents());
    (0..market.num_agents())
        .map(|i| market.bundle_value(i, bundles[i]))
        .collect()
}

/// All Pareto-optimal allocations in enumeration order, without value-point
/// deduplication. The complete solver iterates this list so that equilibria
/// hiding behind tied value points are never skipped.
pub fn pareto_allocations(
    market: &Market,
    caps: &Caps,
) -> Result<Vec<(Allocation, Vec<Rational>)>> {
    let n = market.num_agents();
    let m = market.num_items();
    caps.check_labelings(n, m)?;
    let mut entries: Vec<(Allocation, Vec<Rational>)> = Vec::new();
    if n == 2 {
        let table0 = market.bundle_value_table(0);
        let table1 = market.bundle_value_table(1);
        let full = market.full_bundle() as usize;
        for mask in 0..=full {
            let alloc = Allocation::from_bundle_two_agents(mask as u32, m);
            entries.push((
                alloc,
                vec![table0[mask].clone(), table1[full ^ mask].clone()],
            ));
        }
    } else {
        for alloc in enumerate_allocations(n, m, caps)? {
            let values = value_vector(market, &alloc);
            entries.push((alloc, values));
        }
    }
    let pareto_flags = non_dominated_flags(&entries);
    let mut result: Vec<(Allocation, Vec<Rational>)> = entries
        .into_iter()
        .zip(pareto_flags)
        .filter_map(|(entry, keep)| keep.then_some(entry))
        .collect();
    // Restore enumeration order for two agents (mask order is already it);
    // the general path enumerates in order too, so sorting is only needed to
    // make the contract explicit.
    result.sort_by(|a, b| a.0.owner().cmp(b.0.owner()));
    Ok(result)
}

fn non_dominated_flags(entries: &[(Allocation, Vec<Rational>)]) -> Vec<bool> {
    let k = entries.len();
    let mut keep = vec![true; k];
    if k == 0 {
        return keep;
    }
    if entries[0].1.len() == 2 {
        // Two-agent skyline sweep: sort by v0 descending, keep strictly rising v1.
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| entries[b].1[0].cmp(&entries[a].1[0]));
        let mut idx = 0;
        let mut best_v1: Option<Rational> = None;
        while idx < order.len() {
            // Group of equal v0.
            let group_start = idx;
            while idx < order.len() && entries[order[idx]].1[0] == entries[order[group_start]].1[0]
            {
                idx += 1;
            }
            let group = &order[group_start..idx];
            let group_max = group
                .iter()
                .map(|&e| &entries[e].1[1])
                .max()
                .expect("nonempty group");
            let survives = match &best_v1 {
                Some(best) => group_max > best,
                None => true,
            };
            for &e in group {
                keep[e] = survives && entries[e].1[1] == *group_max;
            }
            if survives {
                best_v1 = Some(group_max.clone());
            }
        }
        keep
    } else {
        // General incremental frontier; quadratic in the worst case, which the
        // labeling cap keeps manageable.
        let mut frontier: Vec<usize> = Vec::new();
        for e in 0..k {
            let mut dominated = false;
            for &f in &frontier {
                if dominates(&entries[f].1, &entries[e].1) {
                    dominated = true;
                    break;
                }
            }
            if dominated {
                keep[e] = false;
                continue;
            }
            frontier.retain(|&f| {
                if dominates(&entries[e].1, &entries[f].1) {
                    keep[f] = false;
                    false
                } else {
                    true
                }
            });
            frontier.push(e);
        }
        keep
    }
}

/// The Pareto frontier with one canonical representative per value point.
pub fn pareto_frontier(market: &Market, caps: &Caps) -> Result<ParetoFrontier> {
    let all = pareto_allocations(market, caps)?;
    let mut entries: Vec<FrontierEntry> = Vec::new();
    for (allocation, values) in all {
        match entries.iter_mut().find(|e| e.values == values) {
            // Enumeration order is ascending in the owner vector, so the first
            // representative seen is the lexicographically smallest.
            Some(_) => {}
            None => entries.push(FrontierEntry { allocation, values }),
        }
    }
    if market.num_agents() == 2 {
        entries.sort_by(|a, b| a.values[0].cmp(&b.values[0]));
    } else {
        entries.sort_by(|a, b| a.values.cmp(&b.values));
    }
    Ok(ParetoFrontier { entries })
}

/// Is this allocation Pareto optimal? Checked against every allocation.
pub fn is_pareto_optimal(market: &Market, allocation: &Allocation, caps: &Caps) -> Result<bool> {
    let values = value_vector(market, allocation);
    for other in enumerate_allocations(market.num_agents(), market.num_items(), caps)? {
        let other_values = value_vector(market, &other);
        if dominates(&other_values, &values) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Truncated and augmented shares of one agent, with witness allocations.
///
/// `b_minus` is the best value the agent obtains over Pareto optima that give
/// her at most her budget-proportional share; `b_plus` the least value over
/// Pareto optima that give her at least that share.
#[derive(Debug, Clone)]
pub struct ShareProfile {
    pub agent: usize,
    pub b_minus: Rational,
    pub b_plus: Rational,
    /// Allocation attaining `b_minus`.
    pub s_hat: Allocation,
    /// Allocation attaining `b_plus`.
    pub s_check: Allocation,
}

pub fn shares(
    market: &Market,
    budgets: &BudgetProfile,
    agent: usize,
    caps: &Caps,
) -> Result<ShareProfile> {
    let frontier = pareto_frontier(market, caps)?;
    shares_with_frontier(budgets, agent, &frontier)
}

/// Shares against a precomputed frontier. Both defining sets are always
/// nonempty: giving the agent nothing is Pareto optimal (its only dominator
/// would have to give every other agent everything they already have), and so
/// is giving her everything.
pub fn shares_with_frontier(
    budgets: &BudgetProfile,
    agent: usize,
    frontier: &ParetoFrontier,
) -> Result<ShareProfile> {
    let budget = budgets.get(agent);
    let mut below: Option<&FrontierEntry> = None;
    let mut above: Option<&FrontierEntry> = None;
    for entry in &frontier.entries {
        let v = &entry.values[agent];
        if v <= budget && below.is_none_or(|b| *v > b.values[agent]) {
            below = Some(entry);
        }
        if v >= budget && above.is_none_or(|a| *v < a.values[agent]) {
            above = Some(entry);
        }
    }
    let below = below.ok_or_else(|| {
        Error::Internal(format!(
            "no Pareto-optimal allocation gives agent {agent} at most her share"
        ))
    })?;
    let above = above.ok_or_else(|| {
        Error::Internal(format!(
            "no Pareto-optimal allocation gives agent {agent} at least her share"
        ))
    })?;
    Ok(ShareProfile {
        agent,
        b_minus: below.values[agent].clone(),
        b_plus: above.values[agent].clone(),
        s_hat: below.allocation.clone(),
        s_check: above.allocation.clone(),
    })
}

/// Existence of budget-proportional allocations and of anti-proportional
/// Pareto-optimal allocations, with canonical witnesses.
#[derive(Debug, Clone)]
pub struct ProportionalityReport {
    /// A Pareto-optimal budget-proportional witness, if any allocation is
    /// budget-proportional (any such allocation has a Pareto-optimal
    /// dominator that is still budget-proportional).
    pub budget_proportional: Option<Allocation>,
    /// A Pareto-optimal allocation giving every agent at most her share and
    /// at least one agent strictly less.
    pub anti_proportional_po: Option<Allocation>,
}

impl ProportionalityReport {
    pub fn has_budget_proportional(&self) -> bool {
        self.budget_proportional.is_some()
    }

    pub fn has_anti_proportional_po(&self) -> bool {
        self.anti_proportional_po.is_some()
    }
}

pub fn classify_proportionality(
    market: &Market,
    budgets: &BudgetProfile,
    caps: &Caps,
) -> Result<ProportionalityReport> {
    let frontier = pareto_frontier(market, caps)?;
    Ok(classify_with_frontier(budgets, &frontier))
}

pub fn classify_with_frontier(
    budgets: &BudgetProfile,
    frontier: &ParetoFrontier,
) -> ProportionalityReport {
    let mut budget_proportional = None;
    let mut anti_proportional_po = None;
    for entry in &frontier.entries {
        let at_least = entry
            .values
            .iter()
            .zip(budgets.as_slice())
            .all(|(v, b)| v >= b);
        if at_least && budget_proportional.is_none() {
            budget_proportional = Some(entry.allocation.clone());
        }
        let at_most = entry
            .values
            .iter()
            .zip(budgets.as_slice())
            .all(|(v, b)| v <= b);
        let strict = entry
            .values
            .iter()
            .zip(budgets.as_slice())
            .any(|(v, b)| v < b);
        if at_most && strict && anti_proportional_po.is_none() {
            anti_proportional_po = Some(entry.allocation.clone());
        }
    }
    ProportionalityReport {
        budget_proportional,
        anti_proportional_po,
    }
}

/// All allocations (Pareto optimal or not) strictly inside the open rectangle
/// `T_i`: more than the agent's truncated share but less than her augmented
/// share, while the other agent gets strictly between nothing and his own
/// truncated share.
///
/// Defined for two agents, and only when neither a budget-proportional
/// allocation nor an anti-proportional Pareto-optimal allocation exists.
pub fn rectangle_t(
    market: &Market,
    budgets: &BudgetProfile,
    agent: usize,
    caps: &Caps,
) -> Result<Vec<Allocation>> {
    if market.num_agents() != 2 {
        return Err(Error::Precondition(
            "rectangle T_i is defined for two-agent markets".into(),
        ));
    }
    let frontier = pareto_frontier(market, caps)?;
    let report = classify_with_frontier(budgets, &frontier);
    if let Some(witness) = report.budget_proportional {
        return Err(Error::Precondition(format!(
            "a budget-proportional allocation exists (owners {:?})",
            witness.owner()
        )));
    }
    if let Some(witness) = report.anti_proportional_po {
        return Err(Error::Precondition(format!(
            "an anti-proportional Pareto-optimal allocation exists (owners {:?})",
            witness.owner()
        )));
    }
    rectangle_t_with_frontier(market, budgets, agent, &frontier, caps)
}

pub(crate) fn rectangle_t_with_frontier(
    market: &Market,
    budgets: &BudgetProfile,
    agent: usize,
    frontier: &ParetoFrontier,
    caps: &Caps,
) -> Result<Vec<Allocation>> {
    let other = 1 - agent;
    let own_hat = shares_with_frontier(budgets, agent, frontier)?;
    let other_hat = shares_with_frontier(budgets, other, frontier)?;
    // Bounds: the agent's value strictly between her own truncated share and
    // her value in the other agent's truncated witness; the other agent's
    // value strictly between 0 and his truncated share.
    let lo_i = own_hat.b_minus.clone();
    let hi_i = market.bundle_value(agent, other_hat.s_hat.bundle(agent));
    let hi_k = other_hat.b_minus.clone();
    let zero = Rational::zero();
    let mut inside = Vec::new();
    for alloc in enumerate_allocations(2, market.num_items(), caps)? {
        let vi = market.bundle_value(agent, alloc.bundle(agent));
        let vk = market.bundle_value(other, alloc.bundle(other));
        if vi > lo_i && vi < hi_i && vk > zero && vk < hi_k {
            inside.push(alloc);
        }
    }
    Ok(inside)
}

/// Membership in the zero-measure exclusion set `R_i`, with the witness pair
/// index when the defining equality holds.
#[derive(Debug, Clone, Serialize)]
pub struct RMembership {
    pub member: bool,
    /// Index `r` (0-based into the agent-ascending frontier order) such that
    /// `b_i / v_i(S(r+1)_i) = (1 - b_i) / (1 - v_i(S(r)_i))`.
    pub witness_index: Option<usize>,
    #[serde(skip)]
    pub witness_values: Option<(Rational, Rational)>,
}

/// Test whether `(b_i, 1-b_i)` lies in `R_i`: some consecutive pair of
/// Pareto-optimal value points (ordered by agent `i`, ascending) satisfies the
/// exact crossing equality. Two-agent markets only.
pub fn in_genericity_exclusion_r(
    market: &Market,
    budgets: &BudgetProfile,
    agent: usize,
    caps: &Caps,
) -> Result<RMembership> {
    if market.num_agents() != 2 {
        return Err(Error::Precondition(
            "the exclusion set R_i is defined for two-agent markets".into(),
        ));
    }
    let frontier = pareto_frontier(market, caps)?;
    Ok(r_membership_with_frontier(budgets, agent, &frontier))
}

pub(crate) fn r_membership_with_frontier(
    budgets: &BudgetProfile,
    agent: usize,
    frontier: &ParetoFrontier,
) -> RMembership {
    let b = budgets.get(agent);
    let complement = Rational::one() - b;
    let ordered = frontier.ordered_for_agent(agent);
    for r in 0..ordered.len().saturating_sub(1) {
        let v_r = &ordered[r].values[agent];
        let v_r1 = &ordered[r + 1].values[agent];
        // b / v(r+1) = (1-b) / (1 - v(r)), cross-multiplied.
        if b * (Rational::one() - v_r) == &complement * v_r1 {
            return RMembership {
                member: true,
                witness_index: Some(r),
                witness_values: Some((v_r.clone(), v_r1.clone())),
            };
        }
    }
    RMembership {
        member: false,
        witness_index: None,
        witness_values: None,
    }
}

/// Convenience: is the budget pair generic for at least one agent, i.e.
/// outside `R_i`?
pub fn outside_r_union(budgets: &BudgetProfile, frontier: &ParetoFrontier) -> bool {
    !r_membership_with_frontier(budgets, 0, frontier).member
        && !r_membership_with_frontier(budgets, 1, frontier).member
}
