//! Random instance generation, budget selection and batch experiment runs.
//!
//! Random draws use a named 64-bit PRNG (ChaCha8) with per-instance seeds
//! split off a master seed, so every report is reproducible bit for bit.
//! Floating point appears only at the draw itself; every sampled number is
//! converted to an exact rational before entering the model.

use std::time::Instant;

use num::{One, Signed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Pareto};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fairness::check_ce_mms_guarantee;
use crate::frontier::{classify_with_frontier, outside_r_union, pareto_frontier, ParetoFrontier};
use crate::market::{BudgetProfile, Caps, Market};
use crate::rational::{rat, serde_rat_vec, Rational};
use crate::solver::{solve, SolveStatus, Strategy};

/// Value distribution for generated markets.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ValueDistribution {
    Uniform,
    Pareto {
        #[serde(with = "crate::rational::serde_rat")]
        shape: Rational,
    },
}

impl ValueDistribution {
    pub fn pareto_default() -> Self {
        ValueDistribution::Pareto { shape: rat(2, 1) }
    }
}

/// Specification of one random market.
#[derive(Debug, Clone, Serialize)]
pub struct GenSpec {
    pub n: usize,
    pub m: usize,
    pub distribution: ValueDistribution,
    pub identical_preferences: bool,
    pub rng_seed: u64,
    /// When set, each agent divides this many integer points among the items
    /// (the Spliddit input format) instead of drawing continuous values.
    pub integer_points: Option<u64>,
}

impl GenSpec {
    pub fn new(n: usize, m: usize, rng_seed: u64) -> Self {
        GenSpec {
            n,
            m,
            distribution: ValueDistribution::Uniform,
            identical_preferences: false,
            rng_seed,
            integer_points: None,
        }
    }
}

/// Deterministically generate a market from a spec. Draws are 53-bit floats
/// rationalized exactly, then normalized by the market constructor.
pub fn generate_market(spec: &GenSpec) -> Result<Market> {
    if spec.n < 2 || spec.m < 1 {
        return Err(Error::Validation(
            "generation needs n >= 2 agents and m >= 1 items".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let rows_needed = if spec.identical_preferences {
        1
    } else {
        spec.n
    };
    let mut rows: Vec<Vec<Rational>> = Vec::with_capacity(spec.n);
    for _ in 0..rows_needed {
        rows.push(match spec.integer_points {
            Some(points) => integer_point_row(&mut rng, spec.m, points)?,
            None => continuous_row(&mut rng, spec.m, &spec.distribution)?,
        });
    }
    while rows.len() < spec.n {
        rows.push(rows[0].clone());
    }
    Market::from_values(rows)
}

fn continuous_row(
    rng: &mut ChaCha8Rng,
    m: usize,
    distribution: &ValueDistribution,
) -> Result<Vec<Rational>> {
    let mut row = Vec::with_capacity(m);
    for _ in 0..m {
        let x: f64 = match distribution {
            ValueDistribution::Uniform => loop {
                let draw: f64 = rng.gen();
                if draw > 0.0 {
                    break draw;
                }
            },
            ValueDistribution::Pareto { shape } => {
                let shape_f = crate::rational::to_f64_lossy(shape);
                let pareto = Pareto::new(1.0, shape_f)
                    .map_err(|e| Error::Validation(format!("bad Pareto shape: {e}")))?;
                pareto.sample(rng)
            }
        };
        let exact = Rational::from_float(x)
            .ok_or_else(|| Error::Internal("non-finite draw from distribution".into()))?;
        row.push(exact);
    }
    Ok(row)
}

/// Divide `points` among `m` items, each item getting at least one point.
fn integer_point_row(rng: &mut ChaCha8Rng, m: usize, points: u64) -> Result<Vec<Rational>> {
    if points < m as u64 {
        return Err(Error::Validation(format!(
            "{points} points cannot cover {m} items"
        )));
    }
    let spare = points - m as u64;
    let weights: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() + 1e-9).collect();
    let total: f64 = weights.iter().sum();
    let mut assigned: Vec<u64> = weights
        .iter()
        .map(|w| ((w / total) * spare as f64).floor() as u64)
        .collect();
    let mut leftover = spare - assigned.iter().sum::<u64>();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        let fa = (weights[a] / total) * spare as f64 - assigned[a] as f64;
        let fb = (weights[b] / total) * spare as f64 - assigned[b] as f64;
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for idx in order {
        if leftover == 0 {
            break;
        }
        assigned[idx] += 1;
        leftover -= 1;
    }
    Ok(assigned
        .into_iter()
        .map(|points| rat(points as i64 + 1, 1))
        .collect())
}

/// Budget pairs that "cross" between consecutive Pareto-frontier points: for
/// each adjacent pair in agent-0 order, emit the midpoint of the admissible
/// open interval plus two off-center points, skipping any pair that lands in
/// `R_1` or `R_2` (deterministic re-jitter within the interval). By
/// construction no budget-proportional allocation exists for these budgets.
pub fn crossing_budgets(market: &Market, caps: &Caps) -> Result<Vec<BudgetProfile>> {
    if market.num_agents() != 2 {
        return Err(Error::Precondition(
            "crossing budgets are defined for two-agent markets".into(),
        ));
    }
    let frontier = pareto_frontier(market, caps)?;
    Ok(crossing_budgets_with_frontier(&frontier))
}

pub(crate) fn crossing_budgets_with_frontier(frontier: &ParetoFrontier) -> Vec<BudgetProfile> {
    let mut out = Vec::new();
    if frontier.len() < 2 {
        return out;
    }
    // Candidate positions within each gap, as fractions of the interval; the
    // later entries are fallbacks for R-membership jitter.
    let positions = [
        rat(1, 2),
        rat(1, 4),
        rat(3, 4),
        rat(33, 64),
        rat(17, 64),
        rat(49, 64),
        rat(31, 64),
        rat(15, 64),
        rat(47, 64),
        rat(5, 11),
        rat(3, 11),
        rat(8, 11),
    ];
    for pair in frontier.entries.windows(2) {
        let (x_lo, y_lo) = (&pair[0].values[0], &pair[0].values[1]);
        let (x_hi, y_hi) = (&pair[1].values[0], &pair[1].values[1]);
        // b_1 strictly between the agent-0 values and 1 - b_1 strictly
        // between the agent-1 values.
        let lo = x_lo.max(&(Rational::one() - y_lo)).clone();
        let hi = x_hi.min(&(Rational::one() - y_hi)).clone();
        if lo >= hi {
            continue;
        }
        let width = &hi - &lo;
        let mut picked = 0;
        for (slot, position) in positions.iter().enumerate() {
            if picked == 3 {
                break;
            }
            // Walk the fallback region once the three canonical slots are done.
            let _ = slot;
            let b1 = &lo + &width * position;
            let profile = BudgetProfile::new(vec![b1.clone(), Rational::one() - &b1])
                .expect("interior budgets are positive");
            if outside_r_union(&profile, frontier) {
                out.push(profile);
                picked += 1;
            }
        }
    }
    out
}

/// Add independent uniform rational jitter in `(-epsilon, epsilon)` to every
/// budget and renormalize, resampling until all budgets are positive, no two
/// are equal, and (for two agents) the pair avoids `R_1` and `R_2`.
pub fn perturb_budgets(
    market: &Market,
    budgets: &BudgetProfile,
    epsilon: &Rational,
    rng_seed: u64,
    caps: &Caps,
) -> Result<BudgetProfile> {
    if !epsilon.is_positive() {
        return Err(Error::Validation("epsilon must be positive".into()));
    }
    crate::demand::check_dimensions(market, budgets, None, None)?;
    let frontier = if market.num_agents() == 2 {
        Some(pareto_frontier(market, caps)?)
    } else {
        None
    };
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    for _ in 0..caps.max_resamples {
        let jittered: Vec<Rational> = budgets
            .as_slice()
            .iter()
            .map(|b| {
                let draw: f64 = loop {
                    let x = rng.gen_range(-1.0..1.0);
                    if x > -1.0 {
                        break x;
                    }
                };
                let noise = epsilon * Rational::from_float(draw).expect("finite draw");
                b + noise
            })
            .collect();
        if jittered.iter().any(|b| !b.is_positive()) {
            continue;
        }
        let candidate = match BudgetProfile::new(jittered) {
            Ok(c) => c,
            Err(_) => continue,
        };
        let mut sorted = candidate.as_slice().to_vec();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            continue;
        }
        if let Some(frontier) = &frontier {
            if !outside_r_union(&candidate, frontier) {
                continue;
            }
        }
        return Ok(candidate);
    }
    Err(Error::Internal(format!(
        "perturbation failed to find admissible budgets within {} resamples",
        caps.max_resamples
    )))
}

/// The ladder budgets `(base, base + step, base + 2 step, ...)`, normalized.
pub fn ladder_budgets(n: usize, base: u64, step: u64) -> Result<BudgetProfile> {
    if base == 0 {
        return Err(Error::Validation("ladder base must be positive".into()));
    }
    BudgetProfile::new(
        (0..n)
            .map(|i| rat((base + step * i as u64) as i64, 1))
            .collect(),
    )
}

/// How budgets are chosen for each generated instance.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum BudgetMode {
    /// A frontier-crossing pair (two agents), cycled per instance.
    Crossing,
    /// Equal budgets with random jitter of the given width.
    PerturbedEqual {
        #[serde(with = "crate::rational::serde_rat")]
        epsilon: Rational,
    },
    /// The fixed ladder `(base, base+step, ...)`.
    Ladder { base: u64, step: u64 },
    /// Explicit budgets used for every instance.
    Explicit {
        #[serde(with = "serde_rat_vec")]
        budgets: Vec<Rational>,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct BatchConfig {
    pub count: usize,
    pub n: usize,
    pub m_min: usize,
    pub m_max: usize,
    pub distribution: ValueDistribution,
    pub identical_preferences: bool,
    pub integer_points: Option<u64>,
    pub budget_mode: BudgetMode,
    pub master_seed: u64,
    /// Check `l`-out-of-`d` maximin guarantees up to this `d` on every
    /// verified equilibrium (0 disables the audit).
    pub mms_d_max: usize,
}

impl BatchConfig {
    pub fn new(count: usize, n: usize, m_min: usize, m_max: usize, master_seed: u64) -> Self {
        BatchConfig {
            count,
            n,
            m_min,
            m_max,
            distribution: ValueDistribution::Uniform,
            identical_preferences: false,
            integer_points: None,
            budget_mode: BudgetMode::PerturbedEqual {
                epsilon: rat(1, 100),
            },
            master_seed,
            mms_d_max: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InstanceReport {
    pub index: usize,
    pub seed: u64,
    pub market_digest: String,
    pub m: usize,
    #[serde(with = "serde_rat_vec")]
    pub budgets: Vec<Rational>,
    pub status: SolveStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
    pub truncated_share_met: Vec<bool>,
    /// Number of failed maximin-guarantee checks (must be zero on a verified
    /// equilibrium; any nonzero count raises the batch alarm).
    pub mms_violations: usize,
    pub timing_ms: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BatchReport {
    pub config: BatchConfig,
    pub instances: Vec<InstanceReport>,
    pub existence_rate: (usize, usize),
    pub strategy_histogram: Vec<(Strategy, usize)>,
    /// Raised when a theorem-covered regime (identical preferences with
    /// generic budgets, or perturbed near-equal budgets) reports nonexistence,
    /// or when any verified equilibrium fails a maximin check.
    pub alarm: bool,
    pub alarm_details: Vec<String>,
}

impl BatchReport {
    /// Deterministic serialization with per-instance timings zeroed; two runs
    /// from the same config compare equal on this form.
    pub fn canonical_json(&self) -> String {
        let mut clone = self.clone();
        for instance in &mut clone.instances {
            instance.timing_ms = 0;
        }
        serde_json::to_string_pretty(&clone).expect("report serialization cannot fail")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

/// Generate, solve and audit `count` instances, in parallel across instances.
/// Every reported equilibrium has been re-verified by the demand oracle (the
/// solver already guarantees this; the batch re-runs the verification as a
/// second, independent pass). The report depends only on the config and the
/// master seed, never on scheduling.
pub fn run_batch(config: &BatchConfig, caps: &Caps) -> Result<BatchReport> {
    let mut seeder = ChaCha8Rng::seed_from_u64(config.master_seed);
    let seeds: Vec<u64> = (0..config.count).map(|_| seeder.gen()).collect();

    let instances: Vec<InstanceReport> = seeds
        .par_iter()
        .enumerate()
        .map(|(index, &seed)| run_instance(config, caps, index, seed))
        .collect::<Result<Vec<_>>>()?;

    // Regimes where two-agent theory guarantees existence: perturbed
    // near-equal budgets, and identical preferences with generic budgets
    // (crossing budgets are R-excluded by construction). Nonexistence there
    // is an alarm; elsewhere it is a data point.
    let generic_budgets = matches!(
        config.budget_mode,
        BudgetMode::PerturbedEqual { .. } | BudgetMode::Crossing
    );
    let theorem_regime = config.n == 2
        && (matches!(config.budget_mode, BudgetMode::PerturbedEqual { .. })
            || (config.identical_preferences && generic_budgets));
    let mut found = 0usize;
    let mut histogram: Vec<(Strategy, usize)> = Vec::new();
    let mut alarm_details = Vec::new();
    for instance in &instances {
        match instance.status {
            SolveStatus::CeFound => {
                found += 1;
                if let Some(strategy) = instance.strategy {
                    match histogram.iter_mut().find(|(s, _)| *s == strategy) {
                        Some((_, count)) => *count += 1,
                        None => histogram.push((strategy, 1)),
                    }
                }
            }
            SolveStatus::NoCeExists => {
                if theorem_regime {
                    alarm_details.push(format!(
                        "instance {}: nonexistence reported in a theorem-covered regime",
                        instance.index
                    ));
                }
            }
            SolveStatus::CapExceeded => {}
        }
        if instance.mms_violations > 0 {
            alarm_details.push(format!(
                "instance {}: {} maximin checks failed on a verified equilibrium",
                instance.index, instance.mms_violations
            ));
        }
    }

    histogram.sort_by_key(|(s, _)| format!("{s:?}"));
    Ok(BatchReport {
        config: config.clone(),
        existence_rate: (found, instances.len()),
        strategy_histogram: histogram,
        alarm: !alarm_details.is_empty(),
        alarm_details,
        instances,
    })
}

fn run_instance(
    config: &BatchConfig,
    caps: &Caps,
    index: usize,
    seed: u64,
) -> Result<InstanceReport> {
    let mut item_rng = ChaCha8Rng::seed_from_u64(seed);
    let m = if config.m_max > config.m_min {
        config.m_min + (item_rng.gen::<u64>() as usize) % (config.m_max - config.m_min + 1)
    } else {
        config.m_min
    };
    let spec = GenSpec {
        n: config.n,
        m,
        distribution: config.distribution.clone(),
        identical_preferences: config.identical_preferences,
        rng_seed: seed,
        integer_points: config.integer_points,
    };
    let market = generate_market(&spec)?;
    let budgets = instance_budgets(&market, config, seed, caps)?;

    let start = Instant::now();
    let outcome = solve(&market, &budgets, caps)?;
    let timing_ms = start.elapsed().as_millis() as u64;

    let mut mms_violations = 0usize;
    let mut truncated = Vec::new();
    if let Some(summary) = &outcome.fairness_summary {
        truncated = summary.truncated_share_met.clone();
    }
    if let Some(cert) = &outcome.certificate {
        let reverified = crate::demand::verify_ce(
            &market,
            &budgets,
            &cert.allocation(),
            &cert.price_vector(),
            caps,
        )?;
        if !reverified.is_ce() {
            return Err(Error::Internal(format!(
                "instance {index}: solver certificate failed independent re-verification"
            )));
        }
        if config.mms_d_max > 0 {
            let checks = check_ce_mms_guarantee(&market, &budgets, cert, config.mms_d_max, caps)?;
            mms_violations = checks.iter().filter(|c| !c.met).count();
        }
    }

    Ok(InstanceReport {
        index,
        seed,
        market_digest: market.digest(),
        m,
        budgets: budgets.as_slice().to_vec(),
        status: outcome.status,
        strategy: outcome.strategy,
        truncated_share_met: truncated,
        mms_violations,
        timing_ms,
    })
}

fn instance_budgets(
    market: &Market,
    config: &BatchConfig,
    seed: u64,
    caps: &Caps,
) -> Result<BudgetProfile> {
    match &config.budget_mode {
        BudgetMode::Crossing => {
            let frontier = pareto_frontier(market, caps)?;
            let candidates = crossing_budgets_with_frontier(&frontier);
            if candidates.is_empty() {
                // Degenerate frontier; fall back to a perturbed-equal pair.
                return perturb_budgets(
                    market,
                    &BudgetProfile::equal(market.num_agents()),
                    &rat(1, 50),
                    seed ^ 0x9e37,
                    caps,
                );
            }
            let pick = (seed as usize) % candidates.len();
            let chosen = candidates[pick].clone();
            debug_assert!(
                !classify_with_frontier(&chosen, &frontier).has_budget_proportional(),
                "crossing budgets admit no budget-proportional allocation"
            );
            Ok(chosen)
        }
        BudgetMode::PerturbedEqual { epsilon } => perturb_budgets(
            market,
            &BudgetProfile::equal(market.num_agents()),
            epsilon,
            seed ^ 0x517c,
            caps,
        ),
        BudgetMode::Ladder { base, step } => ladder_budgets(market.num_agents(), *base, *step),
        BudgetMode::Explicit { budgets } => BudgetProfile::new(budgets.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn caps() -> Caps {
        Caps::default()
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = GenSpec::new(2, 4, 1);
        let a = generate_market(&spec).unwrap();
        let b = generate_market(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.digest(), b.digest());
    }

    #[test]
    fn identical_preferences_duplicate_rows() {
        let spec = GenSpec {
            identical_preferences: true,
            ..GenSpec::new(2, 5, 11)
        };
        let market = generate_market(&spec).unwrap();
        assert_eq!(market.values_row(0), market.values_row(1));
    }

    #[test]
    fn pareto_rows_are_positive_and_normalized() {
        let spec = GenSpec {
            distribution: ValueDistribution::pareto_default(),
            ..GenSpec::new(2, 6, 5)
        };
        let market = generate_market(&spec).unwrap();
        for agent in 0..2 {
            let total: Rational = market.values_row(agent).iter().sum();
            assert_eq!(total, Rational::one());
            assert!(market.values_row(agent).iter().all(|v| v.is_positive()));
        }
    }

    #[test]
    fn integer_points_sum_to_pool() {
        let spec = GenSpec {
            integer_points: Some(1000),
            ..GenSpec::new(3, 6, 9)
        };
        let market = generate_market(&spec).unwrap();
        for agent in 0..3 {
            let total: Rational = market.raw_values()[agent].iter().sum();
            assert_eq!(total, rat(1000, 1));
        }
    }

    #[test]
    fn crossing_budgets_single_item() {
        let market = Market::from_values(vec![vec![rat(1, 1)], vec![rat(1, 1)]]).unwrap();
        let budgets = crossing_budgets(&market, &caps()).unwrap();
        assert!(!budgets.is_empty());
        for profile in &budgets {
            assert!(profile.get(0) > &rat(0, 1) && profile.get(0) < &rat(1, 1));
            assert_ne!(profile.get(0), profile.get(1));
        }
    }

    #[test]
    fn crossing_budgets_rule_out_budget_proportionality() {
        let spec = GenSpec::new(2, 5, 23);
        let market = generate_market(&spec).unwrap();
        let frontier = pareto_frontier(&market, &caps()).unwrap();
        for profile in crossing_budgets(&market, &caps()).unwrap() {
            let report = classify_with_frontier(&profile, &frontier);
            assert!(!report.has_budget_proportional());
            assert!(outside_r_union(&profile, &frontier));
        }
    }

    #[test]
    fn perturb_budgets_properties() {
        let market = generate_market(&GenSpec::new(2, 4, 3)).unwrap();
        let equal = BudgetProfile::equal(2);
        let perturbed = perturb_budgets(&market, &equal, &rat(1, 100), 17, &caps()).unwrap();
        assert_ne!(perturbed.get(0), perturbed.get(1));
        let total: Rational = perturbed.as_slice().iter().sum();
        assert_eq!(total, Rational::one());
        for b in perturbed.as_slice() {
            assert!((b - rat(1, 2)).abs() < rat(1, 25));
        }
        assert!(matches!(
            perturb_budgets(&market, &equal, &rat(0, 1), 17, &caps()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn ladder_budgets_reproduce_spliddit_shape() {
        let profile = ladder_budgets(3, 100, 3).unwrap();
        assert_eq!(
            profile.as_slice(),
            &[rat(100, 309), rat(103, 309), rat(106, 309)]
        );
    }

    #[test]
    fn batch_is_reproducible_bit_for_bit() {
        let mut config = BatchConfig::new(6, 2, 3, 4, 99);
        config.mms_d_max = 2;
        let a = run_batch(&config, &caps()).unwrap();
        let b = run_batch(&config, &caps()).unwrap();
        assert_eq!(a.canonical_json(), b.canonical_json());
        assert!(!a.alarm, "{:?}", a.alarm_details);
        assert_eq!(a.existence_rate.1, 6);
    }

    #[test]
    fn nonexistence_outside_theorem_regimes_is_data_not_alarm() {
        // Single-item markets at exactly-equal explicit budgets never have
        // an equilibrium; that regime is not theorem-covered, so the report
        // carries a zero existence rate without alarming.
        let mut config = BatchConfig::new(4, 2, 1, 1, 5);
        config.budget_mode = BudgetMode::Explicit {
            budgets: vec![rat(1, 2), rat(1, 2)],
        };
        let report = run_batch(&config, &caps()).unwrap();
        assert_eq!(report.existence_rate, (0, 4));
        assert!(!report.alarm);
    }

    #[test]
    fn identical_preference_batch_always_finds_equilibria() {
        let mut config = BatchConfig::new(8, 2, 4, 5, 42);
        config.identical_preferences = true;
        config.budget_mode = BudgetMode::PerturbedEqual {
            epsilon: rat(1, 10),
        };
        let report = run_batch(&config, &caps()).unwrap();
        assert_eq!(report.existence_rate, (8, 8));
        assert!(!report.alarm, "{:?}", report.alarm_details);
    }
}
