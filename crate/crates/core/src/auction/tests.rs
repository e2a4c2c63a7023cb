use super::*;
use crate::market::{Buyer, MoneyUtility, Seller, SellerEndowment};
use crate::rational::q;
use proptest::collection::vec;
use proptest::prelude::*;

fn ints(v: &[i64]) -> Vec<Rational> {
    v.iter().map(|&x| Rational::from_integer(x)).collect()
}

fn seller(good: u64) -> Seller {
    Seller {
        endowment: SellerEndowment { good_count: good },
        money_utility: MoneyUtility::unit(),
    }
}

fn buyer(money: i64, rights: u64, marginals: &[i64]) -> Buyer {
    Buyer::new(
        Rational::from_integer(money),
        ints(marginals),
        q(1, 1),
        rights,
    )
    .unwrap()
}

fn market(sellers: Vec<Seller>, buyers: Vec<Buyer>, eps: Rational) -> MarketSpec {
    MarketSpec::new(sellers, buyers, eps, Mode::Unrestricted).unwrap()
}

fn set_couple_price(st: &mut AuctionState, c: Rational) {
    st.force_couple_price(c);
}

/// Utility-maximizing count by enumeration under the same caps as the solver.
fn demand_by_enumeration(st: &AuctionState, b: TraderId) -> u64 {
    let buyer = &st.spec.buyers[b.index()];
    let budget = st.price_couple() * st.owned(b) + st.spendable(b);
    let mut best = 0;
    let mut best_u = Rational::zero();
    for k in 0..=buyer.claim().min(st.volume) {
        if st.price_couple() * k > budget {
            break;
        }
        let u = buyer.good_utility.eval(k) - buyer.alpha() * st.price_couple() * k;
        if u > best_u {
            best = k;
            best_u = u;
        }
    }
    best
}

#[test]
fn initialize_gives_surplus_cash() {
    let m = market(vec![seller(3)], vec![buyer(20, 2, &[3, 3])], q(1, 10));
    let st = initialize(&m).unwrap();
    assert_eq!(st.cash(TraderId::Buyer(0)), 22);
    assert_eq!(*st.price_couple(), 2);
    assert_eq!(st.cash(TraderId::Seller(0)), 0);
    assert_eq!(st.loose_good(), 3);
    assert_eq!(st.loose_right(), 2);

    let m = market(
        vec![seller(3)],
        vec![buyer(20, 1, &[5, 4]), buyer(30, 2, &[6, 5])],
        q(1, 10),
    );
    let st = initialize(&m).unwrap();
    let total: Rational = (0..2).map(|i| st.cash(TraderId::buyer(i))).sum();
    assert_eq!(total, 53);
    assert!(total <= m.total_money() * 2u64);
}

#[test]
fn initialize_rejects_invalid_endowments() {
    let m = market(vec![seller(2)], vec![buyer(20, 2, &[1, 1])], q(1, 10));
    match initialize(&m) {
        Err(Error::InvalidEndowments { clause, .. }) => assert_eq!(clause.number(), 2),
        other => panic!("expected clause (2) failure, got {other:?}"),
    }
}

#[test]
fn ideal_demand_examples_match_enumeration() {
    let m = market(vec![seller(2)], vec![buyer(40, 2, &[6, 4])], q(1, 10));
    let b = TraderId::Buyer(0);
    for (c, expected) in [(2, 2), (5, 1), (7, 0)] {
        let mut st = initialize(&m).unwrap();
        set_couple_price(&mut st, Rational::from_integer(c));
        let oracle = demand_by_enumeration(&st, b);
        assert_eq!(oracle, expected, "oracle at c={c}");
        assert_eq!(
            ideal_demand(&mut st, b).want,
            expected,
            "binary search at c={c}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn ideal_demand_agrees_with_enumeration(
        mut marginals in vec(1i64..60, 1..9),
        alpha in prop::sample::select(vec![(1i64, 2i64), (1, 1), (3, 2), (2, 1)]),
        c in (1i64..240, 1i64..12),
        cash in (0i64..500, 1i64..7),
        volume in 1u64..12,
        eps in prop::sample::select(vec![(1i64, 2i64), (1, 10), (1, 100)]),
    ) {
        marginals.sort_unstable_by(|a, b| b.cmp(a));
        let b = Buyer::new(q(1000, 1), ints(&marginals), q(alpha.0, alpha.1), 0).unwrap();
        let m = MarketSpec::new(vec![seller(volume)], vec![b], q(eps.0, eps.1), Mode::Unrestricted)
            .unwrap();
        let cfg = SolverConfig { allow_invalid: true, ..Default::default() };
        let mut st = initialize_with(&m, &cfg).unwrap();
        let id = TraderId::Buyer(0);
        set_couple_price(&mut st, q(c.0, c.1));
        st.force_cash(id, q(cash.0, cash.1));
        let oracle = demand_by_enumeration(&st, id);
        prop_assert_eq!(ideal_demand(&mut st, id).want, oracle);
    }
}

#[test]
fn ideal_demand_ties_mean_do_not_buy() {
    let m = market(vec![seller(2)], vec![buyer(40, 2, &[6, 4])], q(1, 10));
    let mut st = initialize(&m).unwrap();
    set_couple_price(&mut st, q(4, 1));
    assert_eq!(ideal_demand(&mut st, TraderId::Buyer(0)).want, 1);
}

#[test]
fn ideal_demand_probe_count_is_logarithmic() {
    let m = market(
        vec![seller(8)],
        vec![buyer(600, 8, &[40, 39, 38, 37, 36, 35, 34, 33])],
        q(1, 10),
    );
    let mut st = initialize(&m).unwrap();
    let d = ideal_demand(&mut st, TraderId::Buyer(0));
    assert_eq!(d.want, 8);
    assert!(d.probes <= 4, "probes {}", d.probes);
    assert_eq!(st.step_counter(), d.probes);
}

#[test]
fn outbid_buys_own_base_couples_first() {
    let eps = q(1, 10);
    let m = market(vec![seller(2)], vec![buyer(24, 2, &[6, 5])], eps.clone());
    let b = TraderId::Buyer(0);
    let mut st = initialize(&m).unwrap();
    assert_eq!(outbid(&mut st, b, 2), 2);
    end_iteration(&mut st);
    assert_eq!(st.owned(b), 2);
    assert_eq!(st.owned_raised(b), 0);

    let before = st.cash(b);
    let c = st.price_couple().clone();
    assert_eq!(outbid(&mut st, b, 2), 2);
    assert_eq!(&before - &st.cash(b), &eps * &c * 2u64);
    assert_eq!(st.owned_raised(b), 2);
    assert!(st
        .trace()
        .iter()
        .rev()
        .take(2)
        .all(|e| matches!(e, TraceEvent::OutbidPurchase { from, .. } if *from == b)));
}

#[test]
fn outbid_composes_from_loose_items() {
    let m = market(vec![seller(1)], vec![buyer(20, 1, &[6])], q(1, 10));
    let b = TraderId::Buyer(0);
    let s = TraderId::Seller(0);
    let mut st = initialize(&m).unwrap();
    assert_eq!(outbid(&mut st, b, 1), 1);
    assert_eq!(st.cash(s), 1);
    // 21 surplus cash minus 2.2; own Right is not credited.
    assert_eq!(st.cash(b), q(188, 10));
    assert_eq!(st.owned_raised(b), 1);
    assert_eq!(st.loose_good(), 0);
    assert_eq!(st.loose_right(), 0);
    match st.trace().events.last().unwrap() {
        TraceEvent::CoupleFormed {
            right_from, paid, ..
        } => {
            assert_eq!(*right_from, b);
            assert_eq!(*paid, q(22, 10));
        }
        e => panic!("unexpected event {e:?}"),
    }
}

#[test]
fn outbid_with_zero_want_changes_nothing() {
    let m = market(vec![seller(1)], vec![buyer(20, 1, &[6])], q(1, 10));
    let b = TraderId::Buyer(0);
    let mut st = initialize(&m).unwrap();
    let cash = st.cash(b);
    assert_eq!(outbid(&mut st, b, 0), 0);
    assert_eq!(st.cash(b), cash);
    assert!(st.couples().is_empty());
    assert_eq!(st.loose_good(), 1);
}

#[test]
fn outbid_prefers_own_right_then_lowest_id() {
    let m = market(
        vec![seller(3)],
        vec![
            buyer(20, 1, &[6]),
            buyer(24, 1, &[6, 5]),
            buyer(20, 1, &[6]),
        ],
        q(1, 10),
    );
    let mut st = initialize(&m).unwrap();
    assert_eq!(outbid(&mut st, TraderId::Buyer(1), 2), 2);
    let sources: Vec<_> = st.couples().iter().map(|c| c.right_from).collect();
    assert_eq!(sources, vec![TraderId::Buyer(1), TraderId::Buyer(0)]);
}

#[test]
fn outbid_stops_when_cash_runs_out() {
    let m = market(vec![seller(3)], vec![buyer(5, 1, &[6, 5, 4])], q(1, 2));
    let mut st = initialize_with(
        &m,
        &SolverConfig {
            allow_invalid: true,
            ..Default::default()
        },
    )
    .unwrap();
    // Cash 6, each Couple costs 3: two composed from the single Right, then no Right left.
    let b = TraderId::Buyer(0);
    assert_eq!(outbid(&mut st, b, 3), 1);
    assert_eq!(st.cash(b), 3);
}

#[test]
fn restricted_reserve_blocks_spending_rights_money() {
    let m = MarketSpec::new(
        vec![seller(2)],
        vec![buyer(9, 2, &[8, 7]), buyer(9, 0, &[8])],
        q(1, 2),
        Mode::Restricted,
    )
    .unwrap();
    let cfg = SolverConfig {
        allow_invalid: true,
        ..Default::default()
    };
    let mut st = initialize_with(&m, &cfg).unwrap();
    let b0 = TraderId::Buyer(0);
    assert_eq!(st.reserve(b0), 2);
    assert_eq!(outbid(&mut st, b0, 2), 2);
    assert_eq!(st.reserve(b0), 0);
    // b1 buys one away from b0: b0's reserve rises by q and its cash covers it.
    end_iteration(&mut st);
    assert_eq!(outbid(&mut st, TraderId::Buyer(1), 1), 1);
    assert!(st.cash(b0) >= st.reserve(b0));
    assert_eq!(st.reserve(b0), st.price_right().clone());
}

#[test]
fn single_buyer_round_ends_iteration() {
    let m = market(vec![seller(2)], vec![buyer(24, 2, &[6, 5])], q(1, 10));
    let mut st = initialize(&m).unwrap();
    let out = run_round(&mut st);
    assert!(out.any_purchase);
    assert!(out.iteration_ended);
    assert_eq!(st.owned_raised(TraderId::Buyer(0)), 2);
}

#[test]
fn round_without_demand_reports_no_purchase() {
    let m = market(vec![seller(2)], vec![buyer(24, 2, &[6, 5])], q(1, 10));
    let mut st = initialize(&m).unwrap();
    run_round(&mut st);
    end_iteration(&mut st);
    set_couple_price(&mut st, q(7, 1));
    let out = run_round(&mut st);
    assert!(!out.any_purchase);
    assert!(!out.iteration_ended);
}

#[test]
fn second_buyer_outbids_first_and_pays_it() {
    let m = market(
        vec![seller(2)],
        vec![buyer(40, 1, &[5]), buyer(40, 1, &[9, 8])],
        q(1, 10),
    );
    let mut st = initialize(&m).unwrap();
    let (b0, b1) = (TraderId::Buyer(0), TraderId::Buyer(1));
    run_round(&mut st);
    end_iteration(&mut st);
    assert_eq!((st.owned(b0), st.owned(b1)), (1, 1));
    // At c = 6 b0 no longer wants its Couple; b1 wants two.
    set_couple_price(&mut st, q(6, 1));
    let cash0 = st.cash(b0);
    let out = run_round(&mut st);
    assert!(out.any_purchase);
    assert!(out.iteration_ended);
    assert_eq!((st.owned(b0), st.owned(b1)), (0, 2));
    assert_eq!(&st.cash(b0) - &cash0, q(6, 1));
}

#[test]
fn end_iteration_raises_prices_and_tops_up() {
    let m = market(vec![seller(2)], vec![buyer(24, 2, &[6, 5])], q(1, 2));
    let mut st = initialize(&m).unwrap();
    run_round(&mut st);
    end_iteration(&mut st);
    assert_eq!(*st.price_good(), q(3, 2));
    assert_eq!(*st.price_right(), q(3, 2));
    assert_eq!(*st.price_couple(), 3);
    assert!(st.couples().iter().all(|c| c.tier == Tier::Base));

    let m = market(vec![seller(2)], vec![buyer(24, 2, &[6, 5])], q(1, 10));
    let mut st = initialize(&m).unwrap();
    run_round(&mut st);
    let s = TraderId::Seller(0);
    let before = st.cash(s);
    end_iteration(&mut st);
    assert_eq!(&st.cash(s) - &before, q(2, 10));
    assert!(st.margin_pool().is_zero());
}

#[test]
fn solve_single_buyer_example() {
    let m = market(vec![seller(2)], vec![buyer(24, 2, &[6, 5])], q(1, 10));
    let out = solve(&m).unwrap();
    // Independent computation of the terminal price: the first grid value
    // 2 (11/10)^k at which the second marginal (5) is no longer strictly exceeded.
    let mut c = q(2, 1);
    while c < q(5, 1) {
        c = c * q(11, 10);
    }
    let s = &out.solution;
    assert_eq!(s.price_couple(), c);
    assert_eq!(s.price_good, s.price_right);
    let basket = s.basket(TraderId::Buyer(0)).unwrap();
    assert_eq!(basket.good_count, 2);
    assert_eq!(basket.rights_count, 2);
    assert_eq!(basket.money, q(24, 1) - &s.price_good * 2u64);
    let seller_basket = s.basket(TraderId::Seller(0)).unwrap();
    assert_eq!(seller_basket.money, &s.price_good * 2u64);
    assert_eq!(seller_basket.good_count, 0);
}

#[test]
fn solve_is_deterministic_and_replayable() {
    let m = market(
        vec![seller(3), seller(2)],
        vec![
            buyer(60, 2, &[9, 7, 3]),
            buyer(50, 2, &[8, 8]),
            buyer(40, 1, &[12, 2]),
        ],
        q(1, 10),
    );
    let a = solve(&m).unwrap();
    let b = solve(&m).unwrap();
    assert_eq!(a.solution, b.solution);
    assert_eq!(a.trace, b.trace);
    assert_eq!(replay(&a.trace).unwrap(), a.solution);
    let text = a.trace.to_jsonl();
    let parsed = Trace::read_jsonl(text.as_bytes()).unwrap();
    assert_eq!(parsed, a.trace);
    assert_eq!(replay(&parsed).unwrap(), a.solution);
}

#[test]
fn replay_rejects_tampered_trace() {
    let m = market(vec![seller(2)], vec![buyer(24, 2, &[6, 5])], q(1, 10));
    let out = solve(&m).unwrap();
    let mut trace = out.trace.clone();
    trace
        .events
        .retain(|e| !matches!(e, TraceEvent::Finalize { .. }));
    assert!(replay(&trace).is_err());

    let mut trace = out.trace.clone();
    for e in &mut trace.events {
        if let TraceEvent::CoupleFormed { paid, .. } = e {
            *paid = q(1000, 1);
        }
    }
    assert!(replay(&trace).is_err());
}

#[test]
fn shuffled_order_is_seed_deterministic() {
    let m = market(
        vec![seller(4)],
        vec![
            buyer(60, 1, &[9, 7]),
            buyer(50, 1, &[8, 8]),
            buyer(40, 1, &[12, 2]),
            buyer(40, 1, &[5]),
        ],
        q(1, 10),
    );
    let cfg = SolverConfig {
        order: BuyerOrder::Shuffled { seed: 7 },
        ..Default::default()
    };
    let a = solve_with(&m, &cfg).unwrap();
    let b = solve_with(&m, &cfg).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.solution.price_good, a.solution.price_right);
}

#[test]
fn basket_values_match_endowment_prices() {
    let m = market(
        vec![seller(3), seller(2)],
        vec![
            buyer(60, 2, &[9, 7, 3]),
            buyer(50, 2, &[8, 8]),
            buyer(40, 1, &[12, 2]),
        ],
        q(1, 2),
    );
    let out = solve(&m).unwrap();
    let s = &out.solution;
    for id in m.trader_ids() {
        let basket = s.basket(id).unwrap();
        assert_eq!(
            basket.price(&s.price_good, &s.price_right),
            m.endowment_price(id, &s.price_good, &s.price_right),
            "{id}"
        );
    }
    assert!(out.stats.cash_audit.violations.is_empty());
}
