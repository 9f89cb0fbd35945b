//! Domain model: markets, budgets, allocations, prices.
//!
//! Valuations are additive and normalized so that every agent values the full
//! item set at exactly 1; budgets are positive and sum to exactly 1. Both
//! normalizations are performed on construction and the pre-normalization
//! inputs are retained for reporting.

use std::collections::BTreeMap;

use num::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rational::{format_rational, parse_rational, Rational};

/// A bundle of items encoded as a bitmask: bit `j` set means item `j` is in
/// the bundle. Caps keep `m` far below the mask width.
pub type Bundle = u32;

/// Enumeration limits. Exhaustive subset and allocation enumerations check
/// these before running; exceeding a cap is an error, never a silent truncation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Caps {
    /// Maximum item count for `2^m` subset enumerations (demand oracle,
    /// strictness audit, per-agent constraint generation).
    pub max_items: usize,
    /// Maximum number of labelings for `n^m`-style enumerations (allocations,
    /// maximin-share partitions).
    pub max_labelings: u64,
    /// Maximum integer exponent in exact weighted Nash-welfare comparisons.
    pub max_nash_exponent: u64,
    /// Maximum rejection-sampling attempts for budget perturbation.
    pub max_resamples: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            max_items: 14,
            max_labelings: 4_000_000,
            max_nash_exponent: 10_000,
            max_resamples: 10_000,
        }
    }
}

impl Caps {
    pub fn check_items(&self, m: usize) -> Result<()> {
        if m > self.max_items {
            return Err(Error::CapExceeded(format!(
                "{m} items exceeds the subset-enumeration cap of {}",
                self.max_items
            )));
        }
        Ok(())
    }

    /// Check an `n^m` enumeration against the labeling cap.
    pub fn check_labelings(&self, parts: usize, m: usize) -> Result<()> {
        let mut total: u64 = 1;
        for _ in 0..m {
            total = total.saturating_mul(parts as u64);
            if total > self.max_labelings {
                return Err(Error::CapExceeded(format!(
                    "{parts}^{m} labelings exceed the cap of {}",
                    self.max_labelings
                )));
            }
        }
        Ok(())
    }
}

/// Divide every entry by the exact sum so the result sums to exactly 1.
pub fn normalize(xs: &[Rational]) -> Result<Vec<Rational>> {
    if xs.iter().any(|x| x.is_negative()) {
        return Err(Error::Validation("negative entry in normalization".into()));
    }
    let sum: Rational = xs.iter().sum();
    if sum.is_zero() {
        return Err(Error::Validation(
            "cannot normalize an all-zero list".into(),
        ));
    }
    Ok(xs.iter().map(|x| x / &sum).collect())
}

/// A discrete Fisher market: `m` indivisible items and `n >= 2` agents with
/// strictly positive additive valuations, each row normalized to sum to 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Market {
    item_names: Vec<String>,
    agent_names: Vec<String>,
    /// Normalized values; `values[i][j]` is agent `i`'s value for item `j`.
    values: Vec<Vec<Rational>>,
    /// Values as supplied, before normalization.
    raw_values: Vec<Vec<Rational>>,
}

impl Market {
    pub fn new(
        item_names: Vec<String>,
        agent_names: Vec<String>,
        raw_values: Vec<Vec<Rational>>,
    ) -> Result<Self> {
        let m = item_names.len();
        let n = agent_names.len();
        if m < 1 {
            return Err(Error::Validation("a market needs at least one item".into()));
        }
        if n < 2 {
            return Err(Error::Validation(
                "a market needs at least two agents".into(),
            ));
        }
        if raw_values.len() != n {
            return Err(Error::Validation(format!(
                "{} value rows for {} agents",
                raw_values.len(),
                n
            )));
        }
        for (i, row) in raw_values.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Validation(format!(
                    "agent {i} has {} values for {m} items",
                    row.len()
                )));
            }
            // Strict monotonicity requires every item to carry positive value.
            if let Some(j) = row.iter().position(|v| !v.is_positive()) {
                return Err(Error::Validation(format!(
                    "agent {i} values item {j} at a non-positive amount"
                )));
            }
        }
        let values = raw_values
            .iter()
            .map(|row| normalize(row))
            .collect::<Result<Vec<_>>>()?;
        Ok(Market {
            item_names,
            agent_names,
            values,
            raw_values,
        })
    }

    /// Convenience constructor with generated names, for tests and generators.
    pub fn from_values(raw_values: Vec<Vec<Rational>>) -> Result<Self> {
        let m = raw_values.first().map(Vec::len).unwrap_or(0);
        let items = default_item_names(m);
        let agents = (1..=raw_values.len())
            .map(|i| format!("agent{i}"))
            .collect();
        Market::new(items, agents, raw_values)
    }

    pub fn num_items(&self) -> usize {
        self.item_names.len()
    }

    pub fn num_agents(&self) -> usize {
        self.agent_names.len()
    }

    pub fn item_names(&self) -> &[String] {
        &self.item_names
    }

    pub fn agent_names(&self) -> &[String] {
        &self.agent_names
    }

    /// Normalized value of item `j` for agent `i`.
    pub fn value(&self, agent: usize, item: usize) -> &Rational {
        &self.values[agent][item]
    }

    /// Agent `i`'s full normalized value row.
    pub fn values_row(&self, agent: usize) -> &[Rational] {
        &self.values[agent]
    }

    /// Value rows as supplied before normalization.
    pub fn raw_values(&self) -> &[Vec<Rational>] {
        &self.raw_values
    }

    pub fn full_bundle(&self) -> Bundle {
        full_bundle(self.num_items())
    }

    /// Additive value of a bundle for one agent.
    pub fn bundle_value(&self, agent: usize, bundle: Bundle) -> Rational {
        let mut total = Rational::zero();
        let mut rest = bundle;
        while rest != 0 {
            let j = rest.trailing_zeros() as usize;
            total += &self.values[agent][j];
            rest &= rest - 1;
        }
        total
    }

    /// All `2^m` bundle values for one agent, indexed by bundle mask.
    pub fn bundle_value_table(&self, agent: usize) -> Vec<Rational> {
        subset_sum_table(&self.values[agent])
    }

    /// Group items into equivalence classes of identical items: items `j`, `j'`
    /// are identical precisely when every agent gives them equal value.
    /// Classes are returned in order of their smallest member.
    pub fn identical_item_classes(&self) -> Vec<Vec<usize>> {
        let m = self.num_items();
        let mut classes: Vec<Vec<usize>> = Vec::new();
        for j in 0..m {
            let found = classes.iter_mut().find(|class| {
                let rep = class[0];
                self.values.iter().all(|row| row[j] == row[rep])
            });
            match found {
                Some(class) => class.push(j),
                None => classes.push(vec![j]),
            }
        }
        classes
    }

    /// Map each item to the index of its identity class.
    pub fn item_class_ids(&self) -> Vec<usize> {
        let classes = self.identical_item_classes();
        let mut ids = vec![0usize; self.num_items()];
        for (cid, class) in classes.iter().enumerate() {
            for &j in class {
                ids[j] = cid;
            }
        }
        ids
    }

    /// Audit the strict-preference assumption: list, per agent, pairs of
    /// non-identical bundles with exactly equal value. An empty report means
    /// the assumption holds (ties between bundles that are identical up to
    /// interchangeable items are expected and not reported).
    pub fn validate_strictness(&self, caps: &Caps) -> Result<StrictnessReport> {
        let m = self.num_items();
        caps.check_items(m)?;
        let class_ids = self.item_class_ids();
        let num_classes = class_ids.iter().max().map(|&c| c + 1).unwrap_or(0);
        // Multiset of item classes, as a sorted count vector; bundles with the
        // same signature are identical up to interchangeable items.
        let class_signature = |bundle: Bundle| -> Vec<u32> {
            let mut counts = vec![0u32; num_classes];
            let mut rest = bundle;
            while rest != 0 {
                let j = rest.trailing_zeros() as usize;
                counts[class_ids[j]] += 1;
                rest &= rest - 1;
            }
            counts
        };
        let mut per_agent = Vec::with_capacity(self.num_agents());
        for agent in 0..self.num_agents() {
            let table = self.bundle_value_table(agent);
            let mut by_value: BTreeMap<Rational, Vec<Bundle>> = BTreeMap::new();
            for (mask, value) in table.iter().enumerate() {
                by_value
                    .entry(value.clone())
                    .or_default()
                    .push(mask as Bundle);
            }
            let mut ties = AgentTies {
                agent,
                pairs: Vec::new(),
                tie_pair_count: 0,
            };
            for group in by_value.values() {
                if group.len() < 2 {
                    continue;
                }
                for (a_idx, &a) in group.iter().enumerate() {
                    let sig_a = class_signature(a);
                    for &b in &group[a_idx + 1..] {
                        if class_signature(b) != sig_a {
                            ties.tie_pair_count += 1;
                            if ties.pairs.len() < StrictnessReport::MAX_PAIRS_PER_AGENT {
                                ties.pairs.push((a, b));
                            }
                        }
                    }
                }
            }
            per_agent.push(ties);
        }
        Ok(StrictnessReport { per_agent })
    }

    /// Stable content digest of the normalized market (names and values).
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for name in &self.item_names {
            hasher.update(name.as_bytes());
            hasher.update([0]);
        }
        hasher.update([1]);
        for (agent, row) in self.values.iter().enumerate() {
            hasher.update(self.agent_names[agent].as_bytes());
            hasher.update([0]);
            for v in row {
                hasher.update(format_rational(v).as_bytes());
                hasher.update([0]);
            }
            hasher.update([1]);
        }
        let out = hasher.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn default_item_names(m: usize) -> Vec<String> {
    (0..m)
        .map(|j| {
            if m <= 26 {
                char::from(b'A' + j as u8).to_string()
            } else {
                format!("G{}", j + 1)
            }
        })
        .collect()
}

/// Bitmask with the lowest `m` bits set.
pub fn full_bundle(m: usize) -> Bundle {
    if m >= Bundle::BITS as usize {
        panic!("item count {m} does not fit in the bundle mask");
    }
    (1u32 << m) - 1
}

/// All `2^m` subset sums of `values`, indexed by bundle mask.
pub fn subset_sum_table(values: &[Rational]) -> Vec<Rational> {
    let m = values.len();
    let mut table = vec![Rational::zero(); 1usize << m];
    for mask in 1..(1usize << m) {
        let low = mask.trailing_zeros() as usize;
        table[mask] = &table[mask & (mask - 1)] + &values[low];
    }
    table
}

/// Items of a bundle in ascending index order.
pub fn bundle_items(bundle: Bundle) -> Vec<usize> {
    let mut items = Vec::new();
    let mut rest = bundle;
    while rest != 0 {
        items.push(rest.trailing_zeros() as usize);
        rest &= rest - 1;
    }
    items
}

/// Bundle mask from item indices.
pub fn bundle_from_items(items: &[usize]) -> Bundle {
    items.iter().fold(0, |acc, &j| acc | (1 << j))
}

/// Compare bundles as sorted item-index sequences (the tie-break order used by
/// the demand oracle): `{A,C} < {B}` because the sequences are `[0,2] < [1]`.
pub fn lex_cmp_bundles(a: Bundle, b: Bundle) -> std::cmp::Ordering {
    use std::cmp::Ordering;
    let (mut x, mut y) = (a, b);
    loop {
        match (x == 0, y == 0) {
            (true, true) => return Ordering::Equal,
            (true, false) => return Ordering::Less,
            (false, true) => return Ordering::Greater,
            (false, false) => {}
        }
        let i = x.trailing_zeros();
        let j = y.trailing_zeros();
        if i != j {
            return i.cmp(&j);
        }
        x &= x - 1;
        y &= y - 1;
    }
}

/// Strictness audit result; see [`Market::validate_strictness`].
#[derive(Debug, Clone)]
pub struct StrictnessReport {
    pub per_agent: Vec<AgentTies>,
}

#[derive(Debug, Clone)]
pub struct AgentTies {
    pub agent: usize,
    /// Tied non-identical bundle pairs, capped at `MAX_PAIRS_PER_AGENT`.
    pub pairs: Vec<(Bundle, Bundle)>,
    /// Total count, including pairs beyond the cap.
    pub tie_pair_count: usize,
}

impl StrictnessReport {
    pub const MAX_PAIRS_PER_AGENT: usize = 100;

    /// True when no agent ties any pair of non-identical bundles.
    pub fn is_clean(&self) -> bool {
        self.per_agent.iter().all(|t| t.tie_pair_count == 0)
    }
}

/// Positive budgets of artificial currency, normalized to sum to exactly 1.
/// The agent order follows the market's agent order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BudgetProfile {
    budgets: Vec<Rational>,
    raw: Vec<Rational>,
}

impl BudgetProfile {
    pub fn new(raw: Vec<Rational>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::Validation("empty budget profile".into()));
        }
        if let Some(i) = raw.iter().position(|b| !b.is_positive()) {
            return Err(Error::Validation(format!(
                "agent {i} has a non-positive budget"
            )));
        }
        let budgets = normalize(&raw)?;
        Ok(BudgetProfile { budgets, raw })
    }

    /// Equal budgets `1/n`.
    pub fn equal(n: usize) -> Self {
        let raw = vec![Rational::one(); n];
        BudgetProfile::new(raw).expect("equal budgets are valid")
    }

    pub fn len(&self) -> usize {
        self.budgets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.budgets.is_empty()
    }

    pub fn get(&self, agent: usize) -> &Rational {
        &self.budgets[agent]
    }

    pub fn as_slice(&self) -> &[Rational] {
        &self.budgets
    }

    pub fn raw(&self) -> &[Rational] {
        &self.raw
    }
}

/// A partition of all items among the agents: `owner[j]` holds item `j`.
/// Feasibility and market clearing hold by construction.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Allocation {
    owner: Vec<usize>,
}

impl Allocation {
    pub fn new(owner: Vec<usize>, num_agents: usize) -> Result<Self> {
        if owner.is_empty() {
            return Err(Error::Validation("empty allocation".into()));
        }
        if let Some(j) = owner.iter().position(|&a| a >= num_agents) {
            return Err(Error::Validation(format!(
                "item {j} assigned to nonexistent agent {}",
                owner[j]
            )));
        }
        Ok(Allocation { owner })
    }

    pub fn owner(&self) -> &[usize] {
        &self.owner
    }

    pub fn num_items(&self) -> usize {
        self.owner.len()
    }

    /// Bundle held by `agent`, as a bitmask.
    pub fn bundle(&self, agent: usize) -> Bundle {
        let mut mask = 0;
        for (j, &a) in self.owner.iter().enumerate() {
            if a == agent {
                mask |= 1 << j;
            }
        }
        mask
    }

    /// Bundles of all agents.
    pub fn bundles(&self, num_agents: usize) -> Vec<Bundle> {
        let mut masks = vec![0; num_agents];
        for (j, &a) in self.owner.iter().enumerate() {
            masks[a] |= 1 << j;
        }
        masks
    }

    /// The two-agent allocation determined by agent 0's bundle.
    pub fn from_bundle_two_agents(bundle: Bundle, m: usize) -> Self {
        let owner = (0..m)
            .map(|j| if bundle & (1 << j) != 0 { 0 } else { 1 })
            .collect();
        Allocation { owner }
    }

    /// Swap the two agents' bundles (two-agent markets only).
    pub fn swapped_two_agents(&self) -> Self {
        Allocation {
            owner: self.owner.iter().map(|&a| 1 - a).collect(),
        }
    }
}

/// Nonnegative per-item prices. Bundle prices are additive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriceVector {
    prices: Vec<Rational>,
}

impl PriceVector {
    pub fn new(prices: Vec<Rational>) -> Result<Self> {
        if let Some(j) = prices.iter().position(|p| p.is_negative()) {
            return Err(Error::Validation(format!("negative price for item {j}")));
        }
        Ok(PriceVector { prices })
    }

    pub fn zeros(m: usize) -> Self {
        PriceVector {
            prices: vec![Rational::zero(); m],
        }
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn get(&self, item: usize) -> &Rational {
        &self.prices[item]
    }

    pub fn as_slice(&self) -> &[Rational] {
        &self.prices
    }

    pub fn bundle_price(&self, bundle: Bundle) -> Rational {
        let mut total = Rational::zero();
        let mut rest = bundle;
        while rest != 0 {
            let j = rest.trailing_zeros() as usize;
            total += &self.prices[j];
            rest &= rest - 1;
        }
        total
    }

    pub fn table(&self) -> Vec<Rational> {
        subset_sum_table(&self.prices)
    }

    /// Scale all prices by a positive factor.
    pub fn scaled(&self, factor: &Rational) -> Result<Self> {
        if !factor.is_positive() {
            return Err(Error::Validation("price scale must be positive".into()));
        }
        Ok(PriceVector {
            prices: self.prices.iter().map(|p| p * factor).collect(),
        })
    }
}

// ---------------------------------------------------------------------------
// Market file format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct MarketFileAgent {
    name: String,
    values: Vec<String>,
    budget: String,
}

#[derive(Serialize, Deserialize)]
struct MarketFileDoc {
    items: Vec<String>,
    agents: Vec<MarketFileAgent>,
}

/// Parse a market file. Numeric strings accept decimal (`"7.9"`) or fraction
/// (`"79/10"`) syntax and are parsed exactly; values and budgets are
/// normalized on load.
///
/// ```json
/// { "items": ["A","B"],
///   "agents": [ { "name": "alice", "values": ["7.9","1"], "budget": "0.505" },
///               { "name": "bob",   "values": ["5","2"],   "budget": "0.495" } ] }
/// ```
pub fn parse_market(text: &str) -> Result<(Market, BudgetProfile)> {
    let doc: MarketFileDoc =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("bad market file: {e}")))?;
    let mut agent_names = Vec::with_capacity(doc.agents.len());
    let mut raw_values = Vec::with_capacity(doc.agents.len());
    let mut raw_budgets = Vec::with_capacity(doc.agents.len());
    for agent in &doc.agents {
        agent_names.push(agent.name.clone());
        raw_values.push(
            agent
                .values
                .iter()
                .map(|t| parse_rational(t))
                .collect::<Result<Vec<_>>>()?,
        );
        raw_budgets.push(parse_rational(&agent.budget)?);
    }
    let market = Market::new(doc.items, agent_names, raw_values)?;
    let budgets = BudgetProfile::new(raw_budgets)?;
    Ok((market, budgets))
}

/// Serialize a market and budgets back to the market file format, preserving
/// the pre-normalization inputs so that parse -> serialize -> parse
/// round-trips to identical rationals.
pub fn market_to_file_json(market: &Market, budgets: &BudgetProfile) -> String {
    let doc = MarketFileDoc {
        items: market.item_names().to_vec(),
        agents: (0..market.num_agents())
            .map(|i| MarketFileAgent {
                name: market.agent_names()[i].clone(),
                values: market.raw_values()[i].iter().map(format_rational).collect(),
                budget: format_rational(&budgets.raw()[i]),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("market file serialization cannot fail")
}
