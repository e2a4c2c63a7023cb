//! Brute-force checks of a solved market.
//!
//! Everything here reads only the market and the solution (plus the solver's
//! counters for the complexity check), never the auction state.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::auction::{iteration_bound, step_bound, SolveStats};
use crate::market::{Buyer, MarketSpec, Mode, Solution, TraderId};
use crate::rational::Rational;

/// Best basket a buyer can afford at fixed prices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptimalBasket {
    pub couples: u64,
    pub money: Rational,
    pub utility: Rational,
}

/// Enumerates `k = 0..=D_b` Couples at price `p + q` out of `budget`, keeping the
/// rest as Money. Restricted mode also requires `p k <= M_b`; a spend cap bounds
/// `p k` in either mode. Ties go to the smallest `k`.
pub fn optimal_basket_at_prices(
    b: &Buyer,
    p: &Rational,
    q: &Rational,
    budget: &Rational,
    mode: Mode,
) -> OptimalBasket {
    let c = p + q;
    let mut best = OptimalBasket {
        couples: 0,
        money: budget.clone(),
        utility: b.utility(0, budget),
    };
    for k in 1..=b.claim() {
        let cost = &c * k;
        if cost > *budget {
            break;
        }
        let good_spend = p * k;
        if mode == Mode::Restricted && good_spend > *b.money() {
            break;
        }
        if b.spend_cap.as_ref().is_some_and(|cap| good_spend > *cap) {
            break;
        }
        let money = budget - &cost;
        let utility = b.utility(k, &money);
        if utility > best.utility {
            best = OptimalBasket {
                couples: k,
                money,
                utility,
            };
        }
    }
    best
}

/// Which guarantee a failed check belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    StepBound,
    BudgetTightness,
    PriceEquality,
    Approximation,
    Feasibility,
    SellersSoldOut,
}

impl Check {
    pub fn describe(self) -> &'static str {
        match self {
            Check::StepBound => "complexity bound on algorithmic steps",
            Check::BudgetTightness => "basket price within 1 below endowment price",
            Check::PriceEquality => "terminal price of Right equals price of Good",
            Check::Approximation => "utility at least (1 - epsilon) times optimal",
            Check::Feasibility => "feasible baskets and conservation",
            Check::SellersSoldOut => "sellers sold all Good",
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.describe())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub check: Check,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trader: Option<TraderId>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.trader {
            Some(t) => write!(f, "{} [{t}]: {}", self.check, self.detail),
            None => write!(f, "{}: {}", self.check, self.detail),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuyerCheck {
    pub buyer: TraderId,
    pub achieved_utility: Rational,
    pub oracle_utility: Rational,
    pub oracle_couples: u64,
    /// `achieved / oracle`, absent when the oracle utility is zero.
    pub ratio: Option<Rational>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraderPrice {
    pub trader: TraderId,
    pub basket_price: Rational,
    pub endowment_price: Rational,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityCheck {
    pub steps: u64,
    pub step_bound: f64,
    pub iterations: u64,
    pub iteration_bound: f64,
    pub max_rounds_per_iteration: u64,
    pub round_bound: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub buyers: Vec<BuyerCheck>,
    pub traders: Vec<TraderPrice>,
    pub price_equality: bool,
    pub feasibility_ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_bound_ok: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complexity: Option<ComplexityCheck>,
    pub violations: Vec<Violation>,
    /// Checks not applied because a spend cap kept a buyer from bidding further.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<Check>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn failed_checks(&self) -> Vec<Check> {
        let mut v: Vec<Check> = self.violations.iter().map(|v| v.check).collect();
        v.sort();
        v.dedup();
        v
    }
}

/// Checks a solution against the solver's guarantees at its own terminal prices.
///
/// `stats` enables the complexity check; without it only the solution is judged.
pub fn verify_solution(
    m: &MarketSpec,
    s: &Solution,
    stats: Option<&SolveStats>,
) -> VerificationReport {
    let mut violations = Vec::new();
    let mut flag = |check: Check, trader: Option<TraderId>, detail: String| {
        violations.push(Violation {
            check,
            trader,
            detail,
        })
    };
    let p = &s.price_good;
    let q = &s.price_right;

    // A buyer stopped by its spend cap leaves Good unsold and Money unspent, so
    // sell-out and budget tightness no longer follow.
    let capped = m.buyers.iter().enumerate().any(|(i, b)| {
        let held = s
            .baskets
            .get(&TraderId::buyer(i))
            .map_or(0, |x| x.good_count);
        held < b.claim()
            && b.spend_cap
                .as_ref()
                .is_some_and(|cap| p * (held + 1) > *cap)
    });
    let skipped = if capped {
        vec![Check::BudgetTightness, Check::SellersSoldOut]
    } else {
        Vec::new()
    };

    let price_equality = p == q;
    if !price_equality {
        flag(Check::PriceEquality, None, format!("p = {p}, q = {q}"));
    }
    let prices_positive = p.is_positive() && q.is_positive();
    if !prices_positive {
        flag(
            Check::Feasibility,
            None,
            format!("prices must be positive, got p = {p}, q = {q}"),
        );
    }

    let mut feasibility_ok = prices_positive;
    let expected: Vec<TraderId> = m.trader_ids().collect();
    let present: Vec<TraderId> = s.baskets.keys().copied().collect();
    if expected != present {
        feasibility_ok = false;
        flag(
            Check::Feasibility,
            None,
            format!("basket set {present:?} does not match traders {expected:?}"),
        );
    }

    let mut good_total = 0u64;
    let mut rights_total = 0u64;
    let mut money_total = Rational::zero();
    for (&t, basket) in &s.baskets {
        good_total += basket.good_count;
        rights_total += basket.rights_count;
        money_total += &basket.money;
        if basket.money.is_negative() {
            feasibility_ok = false;
            flag(
                Check::Feasibility,
                Some(t),
                format!("negative money {}", basket.money),
            );
        }
        match t {
            TraderId::Buyer(_) => {
                if basket.good_count > basket.rights_count {
                    feasibility_ok = false;
                    flag(
                        Check::Feasibility,
                        Some(t),
                        format!(
                            "holds {} Good but only {} Right",
                            basket.good_count, basket.rights_count
                        ),
                    );
                }
            }
            TraderId::Seller(i) => {
                let initial = m
                    .sellers
                    .get(i as usize)
                    .map_or(0, |s| s.endowment.good_count);
                if basket.good_count > initial {
                    feasibility_ok = false;
                    flag(
                        Check::Feasibility,
                        Some(t),
                        format!(
                            "holds {} Good but started with {initial}",
                            basket.good_count
                        ),
                    );
                }
                if !capped && basket.good_count > 0 && m.total_rights() >= initial_volume(m) {
                    flag(
                        Check::SellersSoldOut,
                        Some(t),
                        format!("{} Good left unsold", basket.good_count),
                    );
                }
            }
        }
    }
    let volume = initial_volume(m);
    if good_total != volume {
        feasibility_ok = false;
        flag(
            Check::Feasibility,
            None,
            format!("baskets hold {good_total} Good, market offered {volume}"),
        );
    }
    if rights_total > m.total_rights() {
        feasibility_ok = false;
        flag(
            Check::Feasibility,
            None,
            format!(
                "baskets hold {rights_total} Right, only {} issued",
                m.total_rights()
            ),
        );
    }
    if money_total > m.total_money() {
        feasibility_ok = false;
        flag(
            Check::Feasibility,
            None,
            format!(
                "baskets hold {money_total} Money, only {} exists",
                m.total_money()
            ),
        );
    }

    let mut traders = Vec::new();
    for (&t, basket) in &s.baskets {
        let endowment_price = m.endowment_price(t, p, q);
        let basket_price = basket.price(p, q);
        let lower = &endowment_price - Rational::one();
        if !capped && !(basket_price > lower && basket_price <= endowment_price) {
            flag(
                Check::BudgetTightness,
                Some(t),
                format!("basket price {basket_price} outside ({lower}, {endowment_price}]"),
            );
        }
        traders.push(TraderPrice {
            trader: t,
            basket_price,
            endowment_price,
        });
    }

    let mut buyers = Vec::new();
    if prices_positive {
        let factor = Rational::one() - &m.epsilon;
        for (i, b) in m.buyers.iter().enumerate() {
            let id = TraderId::buyer(i);
            let Some(basket) = s.baskets.get(&id) else {
                continue;
            };
            let budget = m.endowment_price(id, p, q);
            let best = optimal_basket_at_prices(b, p, q, &budget, m.mode);
            let achieved = b.utility(basket.good_count, &basket.money);
            let floor = &factor * &best.utility;
            if achieved < floor {
                flag(
                    Check::Approximation,
                    Some(id),
                    format!(
                        "utility {achieved} below (1 - eps) * {} = {floor}",
                        best.utility
                    ),
                );
            }
            let ratio = best
                .utility
                .is_positive()
                .then(|| &achieved / &best.utility);
            buyers.push(BuyerCheck {
                buyer: id,
                achieved_utility: achieved,
                oracle_utility: best.utility,
                oracle_couples: best.couples,
                ratio,
            });
        }
    }

    let complexity = stats.map(|st| ComplexityCheck {
        steps: st.steps,
        step_bound: step_bound(m),
        iterations: st.iterations,
        iteration_bound: iteration_bound(m),
        max_rounds_per_iteration: st.max_rounds_per_iteration(),
        round_bound: 2 + m.buyers.len() as u64,
    });
    let step_bound_ok = complexity.as_ref().map(|cx| {
        let mut ok = true;
        if cx.steps as f64 > cx.step_bound {
            ok = false;
            flag(
                Check::StepBound,
                None,
                format!("{} steps exceed bound {:.3}", cx.steps, cx.step_bound),
            );
        }
        if cx.iterations as f64 > cx.iteration_bound {
            ok = false;
            flag(
                Check::StepBound,
                None,
                format!(
                    "{} iterations exceed bound {:.3}",
                    cx.iterations, cx.iteration_bound
                ),
            );
        }
        if cx.max_rounds_per_iteration > cx.round_bound {
            ok = false;
            flag(
                Check::StepBound,
                None,
                format!(
                    "{} rounds in one iteration exceed bound {}",
                    cx.max_rounds_per_iteration, cx.round_bound
                ),
            );
        }
        ok
    });

    VerificationReport {
        buyers,
        traders,
        price_equality,
        feasibility_ok,
        step_bound_ok,
        complexity,
        violations,
        skipped,
    }
}

fn initial_volume(m: &MarketSpec) -> u64 {
    m.sellers.iter().map(|s| s.endowment.good_count).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::Seller;
    use crate::rational::q;
    use crate::solve;

    fn buyer(money: i64, rights: u64, marginals: &[i64]) -> Buyer {
        let marginals = marginals.iter().map(|&v| q(v, 1)).collect();
        Buyer::new(q(money, 1), marginals, q(1, 1), rights).unwrap()
    }

    fn example() -> MarketSpec {
        MarketSpec::new(
            vec![Seller::new(2)],
            vec![buyer(24, 2, &[6, 5])],
            q(1, 10),
            Mode::Unrestricted,
        )
        .unwrap()
    }

    #[test]
    fn binding_spend_cap_skips_sell_out_and_tightness() {
        let mut m = example();
        m.buyers[0].spend_cap = Some(q(1, 1));
        let out = solve(&m).unwrap();
        let v = verify_solution(&m, &out.solution, Some(&out.stats));
        assert!(v.passed(), "{:?}", v.violations);
        assert_eq!(
            v.skipped,
            vec![Check::BudgetTightness, Check::SellersSoldOut]
        );
        assert!(out.solution.baskets[&TraderId::seller(0)].good_count > 0);

        let free = solve(&example()).unwrap();
        assert!(verify_solution(&example(), &free.solution, None)
            .skipped
            .is_empty());
    }

    #[test]
    fn enumeration_examples() {
        let b = buyer(20, 2, &[6, 5]);
        let one = q(1, 1);
        let best = optimal_basket_at_prices(&b, &one, &one, &q(22, 1), Mode::Unrestricted);
        assert_eq!(best.couples, 2);
        assert_eq!(best.money, q(18, 1));
        assert_eq!(best.utility, q(29, 1));

        let three = q(3, 1);
        let best = optimal_basket_at_prices(&b, &three, &three, &q(22, 1), Mode::Unrestricted);
        assert_eq!(best.couples, 0);
        assert_eq!(best.utility, q(22, 1));

        let best = optimal_basket_at_prices(&b, &one, &one, &Rational::zero(), Mode::Unrestricted);
        assert_eq!(best.couples, 0);
        assert_eq!(best.utility, Rational::zero());
    }

    #[test]
    fn restricted_mode_caps_good_spend_by_money() {
        let b = buyer(3, 2, &[9, 9]);
        let two = q(2, 1);
        let free = optimal_basket_at_prices(&b, &two, &two, &q(100, 1), Mode::Unrestricted);
        let held = optimal_basket_at_prices(&b, &two, &two, &q(100, 1), Mode::Restricted);
        assert_eq!(free.couples, 2);
        assert_eq!(held.couples, 1);
    }

    #[test]
    fn solver_output_passes() {
        let m = example();
        let out = solve(&m).unwrap();
        let report = verify_solution(&m, &out.solution, None);
        assert!(report.passed(), "{:?}", report.violations);
        assert!(report.price_equality);
        assert!(report.feasibility_ok);
    }

    #[test]
    fn unequal_prices_are_flagged() {
        let m = example();
        let mut s = solve(&m).unwrap().solution;
        s.price_right = &s.price_right + q(1, 7);
        let report = verify_solution(&m, &s, None);
        assert!(report.failed_checks().contains(&Check::PriceEquality));
    }

    #[test]
    fn more_good_than_rights_is_infeasible() {
        let m = example();
        let mut s = solve(&m).unwrap().solution;
        s.baskets.get_mut(&TraderId::buyer(0)).unwrap().rights_count -= 1;
        let report = verify_solution(&m, &s, None);
        assert!(!report.feasibility_ok);
        assert!(report.failed_checks().contains(&Check::Feasibility));
    }
}
