//! Acceptance suite: one test per criterion, each printing a PASS line.
//! Everything asserted here is exact; no tolerances appear anywhere.

use fisher_market::frontier::{classify_with_frontier, pareto_allocations, value_vector};
use fisher_market::prelude::*;
use fisher_market::solver::ProportionalKind;
use num::{One, Signed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn caps() -> Caps {
    Caps::default()
}

fn pass(number: u32, message: &str) {
    println!("acceptance criterion {number:02}: PASS - {message}");
}

fn rand_rat_in(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Rational {
    loop {
        let x: f64 = rng.gen_range(lo..hi);
        if x > lo && x < hi {
            if let Some(r) = Rational::from_float(x) {
                return r;
            }
        }
    }
}

fn single_item_market() -> Market {
    Market::from_values(vec![vec![rat(1, 1)], vec![rat(1, 1)]]).unwrap()
}

fn less_fair_market() -> (Market, BudgetProfile) {
    parse_market(
        r#"{ "items": ["A","B","C","D"],
             "agents": [
               { "name": "a1", "values": ["7.9","1","5","2"], "budget": "51/100" },
               { "name": "a2", "values": ["7.9","1","5","2"], "budget": "49/100" } ] }"#,
    )
    .unwrap()
}

fn footnote_seven_item_market() -> (Market, BudgetProfile) {
    parse_market(
        r#"{ "items": ["G1","G2","G3","G4","G5","G6","G7"],
             "agents": [
               { "name": "a1",
                 "values": ["0.1420","0.0808","0.1921","0.1717","0.1651","0.1200","0.1283"],
                 "budget": "0.8093" },
               { "name": "a2",
                 "values": ["0.0827","0.1056","0.1743","0.1515","0.1862","0.1123","0.1874"],
                 "budget": "0.1907" } ] }"#,
    )
    .unwrap()
}

fn nash_claim_market() -> (Market, BudgetProfile) {
    (
        Market::from_values(vec![
            vec![rat(5, 1), rat(4, 1)],
            vec![rat(1000, 1), rat(1, 1)],
        ])
        .unwrap(),
        BudgetProfile::new(vec![rat(101, 1), rat(100, 1)]).unwrap(),
    )
}

#[test]
fn criterion_01_single_item_nonexistence_and_perturbed_existence() {
    let market = single_item_market();
    let equal = solve(&market, &BudgetProfile::equal(2), &caps()).unwrap();
    assert_eq!(equal.status, SolveStatus::NoCeExists);

    let nudged =
        BudgetProfile::new(vec![rat(1, 2) + rat(1, 100), rat(1, 2) - rat(1, 100)]).unwrap();
    let outcome = solve(&market, &nudged, &caps()).unwrap();
    assert_eq!(outcome.status, SolveStatus::CeFound);
    pass(
        1,
        "single item: equal budgets prove nonexistence, perturbed budgets solve",
    );
}

#[test]
fn criterion_02_less_fair_example_prices_and_envy() {
    let (market, budgets) = less_fair_market();

    // First supporting price vector: ({B,C,D},{A}) at (1/2-e, 1/6, 1/6, 1/6+e).
    let alloc_bcd_a = Allocation::new(vec![1, 0, 0, 0], 2).unwrap();
    let prices1 = PriceVector::new(vec![
        rat(1, 2) - rat(1, 100),
        rat(1, 6),
        rat(1, 6),
        rat(1, 6) + rat(1, 100),
    ])
    .unwrap();
    assert!(
        verify_ce(&market, &budgets, &alloc_bcd_a, &prices1, &caps())
            .unwrap()
            .is_ce()
    );

    // Second: ({A,B},{C,D}) at ((1+e)/2, e/2, 1/4, 1/4-e).
    let alloc_ab_cd = Allocation::new(vec![0, 0, 1, 1], 2).unwrap();
    let prices2 = PriceVector::new(vec![
        rat(101, 200),
        rat(1, 200),
        rat(1, 4),
        rat(1, 4) - rat(1, 100),
    ])
    .unwrap();
    assert!(
        verify_ce(&market, &budgets, &alloc_ab_cd, &prices2, &caps())
            .unwrap()
            .is_ce()
    );

    // The second equilibrium allocation is not envy-free up to every good:
    // removing item B from {A,B} leaves {A}, still better than {C,D}.
    let envy = envy_checks(&market, &budgets, &alloc_ab_cd).unwrap();
    assert!(!envy.ef1_star);
    assert_eq!(envy.ef1_star_witness, Some((1, 0, 1)));

    // Agent 2's shares in the two equilibria, exactly.
    assert_eq!(market.bundle_value(1, alloc_bcd_a.bundle(1)), rat(79, 159));
    assert_eq!(market.bundle_value(1, alloc_ab_cd.bundle(1)), rat(70, 159));
    pass(
        2,
        "both footnote price vectors verify; EF-1* fails at item B; shares 79/159 and 70/159 exact",
    );
}

/// Exhaustive exact scan: is any price vector of the form `g * v_i` part of
/// an equilibrium? Affordability changes only where `g * v_i(S) = b_a` for
/// some bundle and agent, so it suffices to test those breakpoints and the
/// midpoints between them.
fn scaled_price_ce_exists(market: &Market, budgets: &BudgetProfile, agent: usize) -> bool {
    let m = market.num_items();
    let full = market.full_bundle() as usize;
    let price_proxy = market.bundle_value_table(agent);
    let tables: Vec<Vec<Rational>> = (0..2).map(|a| market.bundle_value_table(a)).collect();

    let mut breakpoints: Vec<Rational> = Vec::new();
    for a in 0..2 {
        for mask in 1..=full {
            let g = budgets.get(a) / &price_proxy[mask];
            if g.is_positive() && g <= Rational::one() {
                breakpoints.push(g);
            }
        }
    }
    breakpoints.sort();
    breakpoints.dedup();
    let mut candidates = breakpoints.clone();
    for pair in breakpoints.windows(2) {
        candidates.push((&pair[0] + &pair[1]) / rat(2, 1));
    }
    if let Some(first) = breakpoints.first() {
        candidates.push(first / rat(2, 1));
    }
    if let Some(last) = breakpoints.last() {
        if *last < Rational::one() {
            candidates.push((last + Rational::one()) / rat(2, 1));
            candidates.push(Rational::one());
        }
    }

    for g in &candidates {
        let afford = |a: usize, mask: usize| g * &price_proxy[mask] <= *budgets.get(a);
        let demand_value = |a: usize| {
            (0..=full)
                .filter(|&mask| afford(a, mask))
                .map(|mask| tables[a][mask].clone())
                .max()
                .expect("empty bundle is affordable")
        };
        let dv0 = demand_value(0);
        let dv1 = demand_value(1);
        let supported = (0..=full).any(|mask| {
            afford(0, mask)
                && afford(1, full ^ mask)
                && tables[0][mask] == dv0
                && tables[1][full ^ mask] == dv1
        });
        if supported {
            return true;
        }
    }
    let _ = m;
    false
}

#[test]
fn criterion_03_footnote_instance_t_nonempty_and_exhaustive_solves() {
    let (market, budgets) = footnote_seven_item_market();

    for agent in 0..2 {
        let inside = rectangle_t(&market, &budgets, agent, &caps()).unwrap();
        assert!(!inside.is_empty(), "T_i must be nonempty for agent {agent}");
        assert!(
            !scaled_price_ce_exists(&market, &budgets, agent),
            "no scaled-valuation prices may support an equilibrium (agent {agent})"
        );
        // The gamma construction itself must refuse, naming the nonempty
        // rectangle as the failed precondition.
        match gamma_scaled_ce(&market, &budgets, agent, &caps()) {
            Err(fisher_market::error::Error::Precondition(msg)) => {
                assert!(msg.contains("T_i"), "unexpected precondition: {msg}")
            }
            other => panic!("gamma construction must refuse here, got {other:?}"),
        }
    }

    let outcome = solve(&market, &budgets, &caps()).unwrap();
    assert_eq!(outcome.status, SolveStatus::CeFound);
    assert_eq!(outcome.strategy, Some(Strategy::ExhaustiveLp));
    pass(3, "7-item instance: T_i nonempty for both agents, no scaled-valuation prices work, exhaustive LP still finds an equilibrium");
}

#[test]
fn criterion_04_nash_welfare_claim() {
    let (market, budgets) = nash_claim_market();

    let outcome = solve(&market, &budgets, &caps()).unwrap();
    assert_eq!(outcome.status, SolveStatus::CeFound);
    let cert = outcome.certificate.unwrap();
    assert_eq!(cert.owners, vec![0, 1], "item A goes to agent 1");

    // Uniqueness of the equilibrium value point: every other allocation is
    // unsupportable.
    for alloc in enumerate_allocations(2, 2, &caps()).unwrap() {
        let supportable = price_lp(&market, &budgets, &alloc, &caps())
            .unwrap()
            .is_some();
        assert_eq!(supportable, alloc.owner() == [0, 1], "{:?}", alloc.owner());
    }

    let argmax = nash_welfare_argmax(&market, &budgets, &caps()).unwrap();
    assert_eq!(argmax.owner(), &[1, 0], "Nash argmax gives A to agent 2");
    assert!(price_lp(&market, &budgets, &argmax, &caps())
        .unwrap()
        .is_none());
    pass(
        4,
        "unique equilibrium gives A to agent 1; Nash argmax reverses it and admits no prices",
    );
}

#[test]
fn criterion_05_anti_proportional_claim() {
    let market = Market::from_values(vec![
        vec![rat(100, 1), rat(101, 1)],
        vec![rat(1, 1), rat(1000, 1)],
    ])
    .unwrap();
    let budgets = BudgetProfile::new(vec![rat(5, 8), rat(3, 8)]).unwrap();

    let outcome = solve(&market, &budgets, &caps()).unwrap();
    assert_eq!(outcome.status, SolveStatus::CeFound);
    let cert = outcome.certificate.unwrap();
    assert_eq!(cert.owners, vec![1, 0], "B to agent 1, A to agent 2");

    let report = classify_proportionality(&market, &budgets, &caps()).unwrap();
    assert!(report.budget_proportional.is_none());
    let witness = report
        .anti_proportional_po
        .expect("anti-proportional witness");
    assert_eq!(witness.owner(), &[1, 0]);
    assert!(is_pareto_optimal(&market, &witness, &caps()).unwrap());

    // Shares, exactly: v_1({B}) = 101/201 < 5/8 and v_2({A}) = 1/1001 < 3/8.
    let share1 = market.bundle_value(0, witness.bundle(0));
    let share2 = market.bundle_value(1, witness.bundle(1));
    assert_eq!(share1, rat(101, 201));
    assert!(share1 < rat(5, 8));
    assert_eq!(share2, rat(1, 1001));
    assert!(share2 < rat(3, 8));
    pass(
        5,
        "equilibrium is (B->1, A->2), certified anti-proportional with shares 101/201 and 1/1001",
    );
}

#[test]
fn criterion_06_maximin_share_examples() {
    let values = vec![rat(1, 1), rat(2, 1), rat(3, 1)];
    assert_eq!(mms_value(&values, 2, 3, &caps()).unwrap(), rat(3, 1));
    // 3 items into 13 parts: the worst 5 parts can all be empty.
    assert_eq!(mms_value(&values, 5, 13, &caps()).unwrap(), rat(0, 1));
    // 1-out-of-3 on 3 items guarantees the smallest item.
    assert_eq!(mms_value(&values, 1, 3, &caps()).unwrap(), rat(1, 1));
    pass(
        6,
        "maximin examples: 2-of-3 on (1,2,3) is 3; 5-of-13 is 0; 1-of-3 is the smallest item",
    );
}

#[test]
fn criterion_07_equilibria_always_meet_maximin_guarantee() {
    // 700 attempts, at least 500 verified equilibria, zero maximin violations
    // for every fraction l/d <= b_i with d <= 5.
    let attempts: Vec<u64> = (0..700).collect();
    let results: Vec<Option<usize>> = attempts
        .par_iter()
        .map(|&k| {
            let mut rng = ChaCha8Rng::seed_from_u64(0xACC7_0000 + k);
            let (n, m) = if k % 2 == 0 {
                (2, 4 + (k as usize % 4)) // m in 4..=7
            } else {
                (3, 3 + (k as usize % 3)) // m in 3..=5
            };
            let spec = GenSpec::new(n, m, rng.gen());
            let market = generate_market(&spec).unwrap();
            let budgets = if n == 2 {
                let b1 = rand_rat_in(&mut rng, 0.15, 0.85);
                BudgetProfile::new(vec![b1.clone(), Rational::one() - b1]).unwrap()
            } else {
                let ladder = ladder_budgets(3, 100, 3).unwrap();
                perturb_budgets(&market, &ladder, &rat(1, 50), rng.gen(), &caps()).unwrap()
            };
            let outcome = solve(&market, &budgets, &caps()).unwrap();
            let cert = outcome.certificate?;
            let checks = check_ce_mms_guarantee(&market, &budgets, &cert, 5, &caps()).unwrap();
            Some(checks.iter().filter(|c| !c.met).count())
        })
        .collect();

    let found = results.iter().flatten().count();
    let violations: usize = results.iter().flatten().sum();
    assert!(
        found >= 500,
        "only {found} verified equilibria out of 700 attempts"
    );
    assert_eq!(
        violations, 0,
        "maximin guarantee violated on a verified equilibrium"
    );
    pass(7, &format!("{found} verified equilibria (n in {{2,3}}), zero maximin violations for l/d <= b_i, d <= 5"));
}

#[test]
fn criterion_08_almost_equal_budgets_regression() {
    let failures: Vec<String> = (0u64..1000)
        .into_par_iter()
        .filter_map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(0xA1E0_0000 + k);
            let m = 4 + (k as usize % 5); // 4..=8
            let spec = GenSpec::new(2, m, rng.gen());
            let market = generate_market(&spec).unwrap();
            let mut report = solve_almost_equal(&market, &[rat(1, 100)], &caps()).unwrap();
            if report.all_failed {
                // The theorem guarantees existence for sufficiently small
                // epsilon; retry once with a much smaller value.
                report = solve_almost_equal(&market, &[rat(1, 1_000_000)], &caps()).unwrap();
                if report.all_failed {
                    return Some(format!("instance {k}: no equilibrium at any epsilon"));
                }
            }
            for run in &report.runs {
                let theorem_guided = matches!(run.outcome.strategy, Some(Strategy::GammaScaled))
                    || (matches!(run.outcome.strategy, Some(Strategy::Proportional))
                        && run.outcome.proportional_kind
                            == Some(ProportionalKind::BudgetProportional));
                if theorem_guided {
                    let summary = run.outcome.fairness_summary.as_ref().unwrap();
                    if !summary.truncated_share_met.iter().all(|&b| b) {
                        return Some(format!(
                            "instance {k}: theorem-guided equilibrium misses a truncated share"
                        ));
                    }
                }
            }
            None
        })
        .collect();
    assert!(failures.is_empty(), "{failures:?}");
    pass(8, "1000 near-equal perturbed markets: all solved, theorem-guided certificates meet truncated shares");
}

#[test]
fn criterion_09_identical_preferences_regression() {
    let failures: Vec<String> = (0u64..1000)
        .into_par_iter()
        .filter_map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(0x1DE7_0000 + k);
            let m = 4 + (k as usize % 5); // 4..=8
            let spec = GenSpec {
                identical_preferences: true,
                ..GenSpec::new(2, m, rng.gen())
            };
            let market = generate_market(&spec).unwrap();
            let frontier = pareto_frontier(&market, &caps()).unwrap();
            // Generic different budgets: rejected while inside R_1 or R_2.
            let budgets = loop {
                let b1 = rand_rat_in(&mut rng, 0.1, 0.9);
                if b1 == rat(1, 2) {
                    continue;
                }
                let candidate = BudgetProfile::new(vec![b1.clone(), Rational::one() - b1]).unwrap();
                if fisher_market::frontier::outside_r_union(&candidate, &frontier) {
                    break candidate;
                }
            };
            let outcome = solve(&market, &budgets, &caps()).unwrap();
            if outcome.status != SolveStatus::CeFound {
                return Some(format!("instance {k}: no equilibrium"));
            }
            let summary = outcome.fairness_summary.as_ref().unwrap();
            if !summary.truncated_share_met.iter().all(|&b| b) {
                return Some(format!("instance {k}: truncated share missed"));
            }
            None
        })
        .collect();
    assert!(failures.is_empty(), "{failures:?}");
    pass(9, "1000 identical-preference markets with generic budgets: all solved with truncated shares met");
}

#[test]
fn criterion_10_second_welfare_theorem() {
    let failures: Vec<String> = (0u64..500)
        .into_par_iter()
        .filter_map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5EC0_0000 + k);
            let m = 2 + (k as usize % 7); // 2..=8
            let spec = GenSpec::new(2, m, rng.gen());
            let market = generate_market(&spec).unwrap();
            let allocation = if k % 10 == 0 {
                // Degenerate branch: everything to one agent.
                Allocation::new(vec![(k as usize / 10) % 2; m], 2).unwrap()
            } else {
                let po = pareto_allocations(&market, &caps()).unwrap();
                po[(rng.gen::<u64>() as usize) % po.len()].0.clone()
            };
            match second_welfare_ce(&market, &allocation, &caps()) {
                Ok((budgets, cert)) => {
                    let check = verify_ce(
                        &market,
                        &budgets,
                        &cert.allocation(),
                        &cert.price_vector(),
                        &caps(),
                    )
                    .unwrap();
                    if !check.is_ce() {
                        return Some(format!("instance {k}: certificate failed re-verification"));
                    }
                    None
                }
                Err(e) => Some(format!("instance {k}: {e}")),
            }
        })
        .collect();
    assert!(failures.is_empty(), "{failures:?}");
    pass(10, "500 Pareto-optimal allocations (including all-to-one) supported by constructed budgets and prices");
}

/// A violating pair for the budget-exhausting characterization: bundles
/// `S subset of S_i`, `T subset of S_k` that both agents would swap toward,
/// yet priced weakly cheaper.
fn characterization_violation(
    tables: &[Vec<Rational>],
    price_table: &[Rational],
    bundles: &[Bundle],
) -> Option<(usize, Bundle, Bundle)> {
    for (i, k) in [(0usize, 1usize), (1, 0)] {
        let mut s = bundles[i];
        loop {
            let mut t = bundles[k];
            loop {
                if tables[i][s as usize] > tables[i][t as usize]
                    && tables[k][s as usize] > tables[k][t as usize]
                    && price_table[s as usize] <= price_table[t as usize]
                {
                    return Some((i, s, t));
                }
                if t == 0 {
                    break;
                }
                t = (t - 1) & bundles[k];
            }
            if s == 0 {
                break;
            }
            s = (s - 1) & bundles[i];
        }
    }
    None
}

#[test]
fn criterion_11_characterization_cross_check() {
    // Part 1: 200 budget-exhausting equilibria satisfy the swap condition for
    // every sub-bundle pair.
    let ce_failures: Vec<String> = (0u64..400)
        .into_par_iter()
        .filter_map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(0xC11A_0000 + k);
            let m = 3 + (k as usize % 5); // 3..=7
            let spec = GenSpec::new(2, m, rng.gen());
            let market = generate_market(&spec).unwrap();
            let b1 = rand_rat_in(&mut rng, 0.25, 0.75);
            let budgets = BudgetProfile::new(vec![b1.clone(), Rational::one() - b1]).unwrap();
            let outcome = solve(&market, &budgets, &caps()).unwrap();
            let cert = outcome.certificate?;
            let allocation = cert.allocation();
            if allocation.bundle(0) == 0 || allocation.bundle(1) == 0 {
                return None;
            }
            let exhausted = exhaust_budgets(
                &market,
                &budgets,
                &allocation,
                &cert.price_vector(),
                &caps(),
            )
            .unwrap();
            let tables: Vec<Vec<Rational>> =
                (0..2).map(|a| market.bundle_value_table(a)).collect();
            let bundles = [allocation.bundle(0), allocation.bundle(1)];
            characterization_violation(&tables, &exhausted.table(), &bundles).map(|(i, s, t)| {
                format!(
                    "instance {k}: equilibrium violates the characterization at agent {i} ({s:b},{t:b})"
                )
            })
        })
        .collect();
    assert!(ce_failures.is_empty(), "{ce_failures:?}");

    // Part 2: 200 budget-exhausting Pareto-optimal non-equilibria each expose
    // a violating pair.
    let mut produced = 0usize;
    let mut seed = 0u64;
    while produced < 200 {
        seed += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(0xD00D_0000 + seed);
        let m = 3 + (seed as usize % 5);
        let spec = GenSpec::new(2, m, rng.gen());
        let market = generate_market(&spec).unwrap();
        let po = pareto_allocations(&market, &caps()).unwrap();
        let full = market.full_bundle();
        let candidates: Vec<&Allocation> = po
            .iter()
            .map(|(a, _)| a)
            .filter(|a| a.bundle(0) != 0 && a.bundle(0) != full)
            .collect();
        if candidates.is_empty() {
            continue;
        }
        let allocation = candidates[(rng.gen::<u64>() as usize) % candidates.len()].clone();
        let raw_prices: Vec<Rational> = (0..m).map(|_| rand_rat_in(&mut rng, 0.01, 1.0)).collect();
        let total: Rational = raw_prices.iter().sum();
        let prices =
            PriceVector::new(raw_prices.into_iter().map(|p| p / &total).collect()).unwrap();
        // Budget-exhausting by construction.
        let budgets = BudgetProfile::new(vec![
            prices.bundle_price(allocation.bundle(0)),
            prices.bundle_price(allocation.bundle(1)),
        ])
        .unwrap();
        let outcome = verify_ce(&market, &budgets, &allocation, &prices, &caps()).unwrap();
        if outcome.is_ce() {
            continue; // want non-equilibria here
        }
        let tables: Vec<Vec<Rational>> = (0..2).map(|a| market.bundle_value_table(a)).collect();
        let bundles = [allocation.bundle(0), allocation.bundle(1)];
        assert!(
            characterization_violation(&tables, &prices.table(), &bundles).is_some(),
            "non-equilibrium budget-exhausting pair without a violating sub-bundle pair (seed {seed})"
        );
        produced += 1;
    }
    pass(11, "characterization holds on 200 budget-exhausting equilibria and exposes violations on 200 non-equilibria");
}

#[test]
fn criterion_12_oracle_equivalence_small_markets() {
    let failures: Vec<String> = (0u64..200)
        .into_par_iter()
        .filter_map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(0x0AC1_0000 + k);
            let m = 1 + (k as usize % 5); // 1..=5
            let spec = GenSpec {
                identical_preferences: k % 5 == 0,
                ..GenSpec::new(2, m, rng.gen())
            };
            let market = generate_market(&spec).unwrap();
            let budgets = match k % 3 {
                0 => BudgetProfile::equal(2),
                1 => {
                    let candidates = crossing_budgets(&market, &caps()).unwrap();
                    if candidates.is_empty() {
                        BudgetProfile::equal(2)
                    } else {
                        candidates[(rng.gen::<u64>() as usize) % candidates.len()].clone()
                    }
                }
                _ => {
                    let b1 = rand_rat_in(&mut rng, 0.2, 0.8);
                    BudgetProfile::new(vec![b1.clone(), Rational::one() - b1]).unwrap()
                }
            };
            let verdict = solve(&market, &budgets, &caps()).unwrap().found();
            // Doubly brute force: every allocation, not just Pareto optima.
            let oracle = enumerate_allocations(2, m, &caps()).unwrap().any(|alloc| {
                price_lp(&market, &budgets, &alloc, &caps())
                    .unwrap()
                    .is_some()
            });
            (verdict != oracle)
                .then(|| format!("instance {k}: solver says {verdict}, brute force says {oracle}"))
        })
        .collect();
    assert!(failures.is_empty(), "{failures:?}");
    pass(
        12,
        "200 small markets: solver existence verdicts match the all-allocations LP oracle",
    );
}

#[test]
fn criterion_13_tatonnement_soundness_and_determinism() {
    // 200 runs on solvable instances: every converged trace re-verifies.
    let outcomes: Vec<(bool, bool)> = (0u64..400)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(0x7A70_0000 + k);
            let m = 2 + (k as usize % 5); // 2..=6
            let spec = GenSpec::new(2, m, rng.gen());
            let market = generate_market(&spec).unwrap();
            let budgets = perturb_budgets(
                &market,
                &BudgetProfile::equal(2),
                &rat(1, 20),
                rng.gen(),
                &caps(),
            )
            .unwrap();
            if !solve(&market, &budgets, &caps()).unwrap().found() {
                return (false, false);
            }
            let config = TatonnementConfig {
                rng_seed: k,
                max_iterations: 3000,
                ..TatonnementConfig::default()
            };
            let trace = run_tatonnement(&market, &budgets, &config, &caps()).unwrap();
            if !trace.converged {
                return (true, false);
            }
            // Re-verify the converged state independently of the trace's own
            // certificate.
            let allocation = Allocation::new(trace.final_allocation.clone().unwrap(), 2).unwrap();
            let scale = rat(config.budget_scale as i64, 1);
            let prices = PriceVector::new(
                trace
                    .final_prices
                    .iter()
                    .map(|&p| rat(p as i64, 1) / &scale)
                    .collect(),
            )
            .unwrap();
            let int_budgets = BudgetProfile::new(
                trace
                    .integer_budgets
                    .iter()
                    .map(|&b| rat(b as i64, 1))
                    .collect(),
            )
            .unwrap();
            let check = verify_ce(&market, &int_budgets, &allocation, &prices, &caps()).unwrap();
            assert!(
                check.is_ce(),
                "converged trace fails verification (seed {k})"
            );
            (true, true)
        })
        .collect();
    let solvable = outcomes.iter().filter(|(s, _)| *s).count();
    let converged = outcomes.iter().filter(|(_, c)| *c).count();
    assert!(solvable >= 200, "only {solvable} solvable instances");

    // Determinism: identical config implies byte-identical traces.
    for k in 0..5u64 {
        let spec = GenSpec::new(2, 4, 0xDE7E_0000 + k);
        let market = generate_market(&spec).unwrap();
        let budgets = BudgetProfile::new(vec![rat(52, 100), rat(48, 100)]).unwrap();
        let config = TatonnementConfig {
            rng_seed: k,
            max_iterations: 2000,
            ..TatonnementConfig::default()
        };
        let a = run_tatonnement(&market, &budgets, &config, &caps()).unwrap();
        let b = run_tatonnement(&market, &budgets, &config, &caps()).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    // The knife-edge market never converges at the full iteration budget.
    let market = single_item_market();
    let config = TatonnementConfig {
        max_iterations: 20_000,
        ..TatonnementConfig::default()
    };
    let trace = run_tatonnement(&market, &BudgetProfile::equal(2), &config, &caps()).unwrap();
    assert!(!trace.converged);
    assert_eq!(trace.iterations_used, 20_000);
    pass(13, &format!("tatonnement: {converged}/{solvable} converged runs all verify, traces deterministic, knife-edge market never converges"));
}

// Supporting regression pinned alongside the criteria: the second welfare
// theorem's degenerate branch produces the documented budgets.
#[test]
fn second_welfare_degenerate_budgets_pinned() {
    let market = Market::from_values(vec![
        vec![rat(1, 6), rat(2, 6), rat(3, 6)],
        vec![rat(1, 6), rat(2, 6), rat(3, 6)],
    ])
    .unwrap();
    let allocation = Allocation::new(vec![0, 0, 0], 2).unwrap();
    let (budgets, _) = second_welfare_ce(&market, &allocation, &caps()).unwrap();
    assert_eq!(budgets.as_slice(), &[rat(6, 7), rat(1, 7)]);
}

// Alarm discipline: proportionality classification is consistent with the
// crossing-budget construction across a corpus.
#[test]
fn crossing_budgets_never_admit_budget_proportional_allocations() {
    for k in 0..40u64 {
        let spec = GenSpec::new(2, 3 + (k as usize % 4), 0xBEEF + k);
        let market = generate_market(&spec).unwrap();
        let frontier = pareto_frontier(&market, &caps()).unwrap();
        for profile in crossing_budgets(&market, &caps()).unwrap() {
            let report = classify_with_frontier(&profile, &frontier);
            assert!(!report.has_budget_proportional());
        }
        let _ = value_vector(
            &market,
            &Allocation::new(vec![0; market.num_items()], 2).unwrap(),
        );
    }
}
