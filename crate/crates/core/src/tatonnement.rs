//! Integer-price tatonnement with randomized update scheduling.
//!
//! Prices start at zero and stay nonnegative integers throughout. Each
//! iteration queries every agent's demand at the current prices; items
//! demanded by two or more agents get a price increase, items demanded by
//! nobody a decrease. In the randomized variant a coin is tossed after every
//! single-item update to decide whether to keep updating or to recompute
//! demands. The process converges when the demand witnesses partition the
//! items exactly; the result is then re-verified with the exact oracle.
//! Non-convergence within the iteration bound is a valid outcome.

use num::{Signed, ToPrimitive};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::demand::{expect_certificate, CeCertificate};
use crate::error::{Error, Result};
use crate::market::{lex_cmp_bundles, Allocation, BudgetProfile, Bundle, Caps, Market};
use crate::rational::{rat, Rational};

/// How price updates are scheduled within one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// After each single-item update, continue with the configured
    /// probability, otherwise recompute demands.
    Randomized,
    /// Update only the first over- or under-demanded item per iteration.
    SingleItem,
    /// Update every over- and under-demanded item, then recompute.
    AllItems,
}

#[derive(Debug, Clone, Serialize)]
pub struct TatonnementConfig {
    pub max_iterations: usize,
    pub price_step: u64,
    /// Probability of continuing after each price update (randomized rule),
    /// as an exact rational in (0, 1) whose parts fit in u32.
    #[serde(with = "crate::rational::serde_rat")]
    pub continue_probability: Rational,
    pub rng_seed: u64,
    /// Budgets are integerized to this many points (Spliddit-style 1000).
    pub budget_scale: u64,
    pub rule: UpdateRule,
}

impl Default for TatonnementConfig {
    fn default() -> Self {
        TatonnementConfig {
            max_iterations: 20_000,
            price_step: 1,
            continue_probability: rat(1, 2),
            rng_seed: 0,
            budget_scale: 1000,
            rule: UpdateRule::Randomized,
        }
    }
}

/// Per-item price statistics over a run.
#[derive(Debug, Clone, Serialize)]
pub struct PriceStat {
    pub min: u64,
    pub max: u64,
    pub last: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TatonnementTrace {
    pub converged: bool,
    pub iterations_used: usize,
    pub final_prices: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_allocation: Option<Vec<usize>>,
    /// Integerized budgets actually used (they sum to `budget_scale`).
    pub integer_budgets: Vec<u64>,
    pub price_history: Vec<PriceStat>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CeCertificate>,
}

/// Integerize budgets to `scale` points by largest remainder; the result sums
/// to exactly `scale` and every agent keeps at least one point.
pub fn integerize_budgets(budgets: &BudgetProfile, scale: u64) -> Result<Vec<u64>> {
    let n = budgets.len() as u64;
    if scale < n {
        return Err(Error::Validation(format!(
            "budget scale {scale} cannot represent {n} positive budgets"
        )));
    }
    let scale_rat = Rational::from_integer((scale as i64).into());
    let exact: Vec<Rational> = budgets.as_slice().iter().map(|b| b * &scale_rat).collect();
    let mut floors: Vec<u64> = exact
        .iter()
        .map(|x| (x.numer() / x.denom()).to_u64().unwrap_or(0))
        .collect();
    let mut remainders: Vec<(usize, Rational)> = exact
        .iter()
        .enumerate()
        .map(|(i, x)| (i, x - Rational::from_integer((floors[i] as i64).into())))
        .collect();
    let assigned: u64 = floors.iter().sum();
    let mut leftover = scale - assigned;
    // Largest remainder first; ties by agent index.
    remainders.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    for (idx, _) in remainders {
        if leftover == 0 {
            break;
        }
        floors[idx] += 1;
        leftover -= 1;
    }
    if floors.contains(&0) {
        return Err(Error::Validation(format!(
            "budget scale {scale} rounds some budget to zero points"
        )));
    }
    Ok(floors)
}

/// Per-agent demand order: bundles sorted by value descending, ties broken by
/// the lexicographic bundle order. The first affordable bundle in this order
/// is exactly the demand witness.
struct DemandOrder {
    sorted_bundles: Vec<Vec<Bundle>>,
}

impl DemandOrder {
    fn new(market: &Market) -> Self {
        let mut sorted_bundles = Vec::with_capacity(market.num_agents());
        for agent in 0..market.num_agents() {
            let table = market.bundle_value_table(agent);
            let mut order: Vec<Bundle> = (0..table.len() as u32).collect();
            order.sort_by(|&a, &b| {
                table[b as usize]
                    .cmp(&table[a as usize])
                    .then_with(|| lex_cmp_bundles(a, b))
            });
            sorted_bundles.push(order);
        }
        DemandOrder { sorted_bundles }
    }

    fn witness(&self, agent: usize, bundle_prices: &[u64], budget: u64) -> Bundle {
        *self.sorted_bundles[agent]
            .iter()
            .find(|&&mask| bundle_prices[mask as usize] <= budget)
            .expect("the empty bundle is always affordable")
    }
}

fn bundle_price_table(prices: &[u64], m: usize) -> Vec<u64> {
    let mut table = vec![0u64; 1 << m];
    for mask in 1..(1usize << m) {
        let low = mask.trailing_zeros() as usize;
        table[mask] = table[mask & (mask - 1)] + prices[low];
    }
    table
}

pub fn run_tatonnement(
    market: &Market,
    budgets: &BudgetProfile,
    config: &TatonnementConfig,
    caps: &Caps,
) -> Result<TatonnementTrace> {
    crate::demand::check_dimensions(market, budgets, None, None)?;
    caps.check_items(market.num_items())?;
    if config.price_step == 0 {
        return Err(Error::Validation("price step must be positive".into()));
    }
    let p = &config.continue_probability;
    if !p.is_positive() || *p >= Rational::from_integer(1.into()) {
        return Err(Error::Validation(
            "continue probability must lie strictly between 0 and 1".into(),
        ));
    }
    let (p_num, p_den) = (
        p.numer().to_u32().ok_or_else(|| {
            Error::Validation("continue probability numerator must fit in u32".into())
        })?,
        p.denom().to_u32().ok_or_else(|| {
            Error::Validation("continue probability denominator must fit in u32".into())
        })?,
    );

    let m = market.num_items();
    let n = market.num_agents();
    let integer_budgets = integerize_budgets(budgets, config.budget_scale)?;
    let order = DemandOrder::new(market);
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);

    let mut prices = vec![0u64; m];
    let mut stats: Vec<PriceStat> = prices
        .iter()
        .map(|&p| PriceStat {
            min: p,
            max: p,
            last: p,
        })
        .collect();
    let mut converged_allocation: Option<Allocation> = None;
    let mut iterations_used = 0;

    for _ in 0..config.max_iterations {
        iterations_used += 1;
        let table = bundle_price_table(&prices, m);
        let witnesses: Vec<Bundle> = (0..n)
            .map(|agent| order.witness(agent, &table, integer_budgets[agent]))
            .collect();
        let mut counts = vec![0u32; m];
        for &w in &witnesses {
            for j in crate::market::bundle_items(w) {
                counts[j] += 1;
            }
        }
        if counts.iter().all(|&c| c == 1) {
            let mut owner = vec![0usize; m];
            for (agent, &w) in witnesses.iter().enumerate() {
                for j in crate::market::bundle_items(w) {
                    owner[j] = agent;
                }
            }
            converged_allocation = Some(Allocation::new(owner, n)?);
            break;
        }
        // Price adjustments, ascending item index.
        for j in 0..m {
            let adjusted = if counts[j] >= 2 {
                prices[j] += config.price_step;
                true
            } else if counts[j] == 0 && prices[j] > 0 {
                prices[j] = prices[j].saturating_sub(config.price_step);
                true
            } else {
                false
            };
            if adjusted {
                stats[j].min = stats[j].min.min(prices[j]);
                stats[j].max = stats[j].max.max(prices[j]);
                match config.rule {
                    UpdateRule::AllItems => {}
                    UpdateRule::SingleItem => break,
                    UpdateRule::Randomized => {
                        if !rng.gen_ratio(p_num, p_den) {
                            break;
                        }
                    }
                }
            }
        }
    }

    for (j, stat) in stats.iter_mut().enumerate() {
        stat.last = prices[j];
    }

    let certificate = match &converged_allocation {
        Some(allocation) => {
            // Convergence means the witnesses partition the items; the scaled
            // rational pair must therefore verify, and a mismatch would be a
            // bug in one of the two demand paths.
            let scale = Rational::from_integer((config.budget_scale as i64).into());
            let rational_prices = crate::market::PriceVector::new(
                prices
                    .iter()
                    .map(|&p| Rational::from_integer((p as i64).into()) / &scale)
                    .collect(),
            )?;
            let rational_budgets = BudgetProfile::new(
                integer_budgets
                    .iter()
                    .map(|&b| Rational::from_integer((b as i64).into()))
                    .collect(),
            )?;
            Some(expect_certificate(
                market,
                &rational_budgets,
                allocation,
                &rational_prices,
                caps,
                "tatonnement convergence",
            )?)
        }
        None => None,
    };

    Ok(TatonnementTrace {
        converged: converged_allocation.is_some(),
        iterations_used,
        final_prices: prices,
        final_allocation: converged_allocation.map(|a| a.owner().to_vec()),
        integer_budgets,
        price_history: stats,
        certificate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn caps() -> Caps {
        Caps::default()
    }

    #[test]
    fn integerize_budgets_largest_remainder() {
        let budgets = BudgetProfile::new(vec![rat(1, 3), rat(1, 3), rat(1, 3)]).unwrap();
        assert_eq!(
            integerize_budgets(&budgets, 1000).unwrap(),
            vec![334, 333, 333]
        );
        let budgets = BudgetProfile::new(vec![rat(51, 100), rat(49, 100)]).unwrap();
        assert_eq!(integerize_budgets(&budgets, 1000).unwrap(), vec![510, 490]);
    }

    #[test]
    fn integerize_budgets_rejects_coarse_scale() {
        let budgets = BudgetProfile::new(vec![rat(999, 1000), rat(1, 1000)]).unwrap();
        assert!(integerize_budgets(&budgets, 10).is_err());
    }

    #[test]
    fn converges_on_opposed_preferences() {
        let market = Market::from_values(vec![
            vec![rat(9, 10), rat(1, 10)],
            vec![rat(1, 10), rat(9, 10)],
        ])
        .unwrap();
        let budgets = BudgetProfile::equal(2);
        let config = TatonnementConfig::default();
        let trace = run_tatonnement(&market, &budgets, &config, &caps()).unwrap();
        assert!(trace.converged, "{trace:?}");
        assert_eq!(trace.final_allocation, Some(vec![0, 1]));
        assert!(trace.certificate.is_some());
    }

    #[test]
    fn single_item_equal_budgets_never_converges() {
        let market = Market::from_values(vec![vec![rat(1, 1)], vec![rat(1, 1)]]).unwrap();
        let budgets = BudgetProfile::equal(2);
        let config = TatonnementConfig {
            max_iterations: 2_000,
            ..TatonnementConfig::default()
        };
        let trace = run_tatonnement(&market, &budgets, &config, &caps()).unwrap();
        assert!(!trace.converged);
        assert_eq!(trace.iterations_used, 2_000);
        assert!(trace.certificate.is_none());
    }

    #[test]
    fn deterministic_under_seed() {
        let market = Market::from_values(vec![
            vec![rat(3, 10), rat(3, 10), rat(4, 10)],
            vec![rat(5, 10), rat(2, 10), rat(3, 10)],
        ])
        .unwrap();
        let budgets = BudgetProfile::new(vec![rat(52, 100), rat(48, 100)]).unwrap();
        let config = TatonnementConfig {
            rng_seed: 7,
            max_iterations: 5_000,
            ..TatonnementConfig::default()
        };
        let a = run_tatonnement(&market, &budgets, &config, &caps()).unwrap();
        let b = run_tatonnement(&market, &budgets, &config, &caps()).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn prices_stay_nonnegative() {
        let market =
            Market::from_values(vec![vec![rat(1, 4), rat(3, 4)], vec![rat(1, 4), rat(3, 4)]])
                .unwrap();
        let budgets = BudgetProfile::new(vec![rat(50, 100), rat(50, 100)]).unwrap();
        let config = TatonnementConfig {
            max_iterations: 500,
            rng_seed: 3,
            ..TatonnementConfig::default()
        };
        // u64 prices cannot go negative; this exercises the floor-at-zero path.
        let trace = run_tatonnement(&market, &budgets, &config, &caps()).unwrap();
        assert_eq!(trace.final_prices.len(), 2);
    }
}
