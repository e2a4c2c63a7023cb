//! Single-round market: traders, endowments, utilities, baskets and solutions.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::Rational;

/// A trader identifier. Buyers and sellers live in disjoint id spaces, so a
/// seller and a buyer can never be confused even with the same index.
///
/// Buyers order before sellers; within a role, by index.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TraderId {
    Buyer(u32),
    Seller(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Seller,
    Buyer,
}

impl TraderId {
    pub fn role(self) -> Role {
        match self {
            TraderId::Buyer(_) => Role::Buyer,
            TraderId::Seller(_) => Role::Seller,
        }
    }

    pub fn index(self) -> usize {
        match self {
            TraderId::Buyer(i) | TraderId::Seller(i) => i as usize,
        }
    }

    pub fn buyer(index: usize) -> Self {
        TraderId::Buyer(index as u32)
    }

    pub fn seller(index: usize) -> Self {
        TraderId::Seller(index as u32)
    }
}

impl fmt::Display for TraderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraderId::Buyer(i) => write!(f, "b{i}"),
            TraderId::Seller(i) => write!(f, "s{i}"),
        }
    }
}

impl fmt::Debug for TraderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for TraderId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (tag, rest) = s.split_at(s.len().min(1));
        let index: u32 = rest
            .parse()
            .map_err(|_| format!("invalid trader id `{s}`"))?;
        match tag {
            "b" => Ok(TraderId::Buyer(index)),
            "s" => Ok(TraderId::Seller(index)),
            _ => Err(format!("invalid trader id `{s}`")),
        }
    }
}

impl Serialize for TraderId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TraderId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Concave Good-utility given by per-item marginal values up to the claim.
///
/// Marginals are positive and nonincreasing; utility saturates at the claim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GoodUtility {
    marginals: Vec<Rational>,
}

impl GoodUtility {
    pub fn new(marginals: Vec<Rational>) -> std::result::Result<Self, String> {
        if marginals.is_empty() {
            return Err("claim must be positive (no marginal values given)".into());
        }
        if let Some(i) = marginals.iter().position(|m| !m.is_positive()) {
            return Err(format!("marginal #{} is not positive", i + 1));
        }
        if let Some(i) = marginals.windows(2).position(|w| w[1] > w[0]) {
            return Err(format!(
                "marginals must be nonincreasing, but #{} < #{}",
                i + 1,
                i + 2
            ));
        }
        Ok(GoodUtility { marginals })
    }

    pub fn marginals(&self) -> &[Rational] {
        &self.marginals
    }

    /// The claim `D_b`: number of items the buyer values.
    pub fn claim(&self) -> u64 {
        self.marginals.len() as u64
    }

    /// Marginal value of the `k`-th item (1-based); zero beyond the claim.
    pub fn marginal(&self, k: u64) -> Rational {
        if k == 0 {
            return Rational::zero();
        }
        self.marginals
            .get((k - 1) as usize)
            .cloned()
            .unwrap_or_else(Rational::zero)
    }

    pub fn eval(&self, x: u64) -> Rational {
        let n = (x.min(self.claim())) as usize;
        self.marginals[..n].iter().sum()
    }
}

impl<'de> Deserialize<'de> for GoodUtility {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            marginals: Vec<Rational>,
        }
        let raw = Raw::deserialize(d)?;
        GoodUtility::new(raw.marginals).map_err(serde::de::Error::custom)
    }
}

pub fn eval_good_utility(u: &GoodUtility, x: u64) -> Rational {
    u.eval(x)
}

/// Linear Money-utility `alpha * y`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MoneyUtility {
    alpha: Rational,
}

impl MoneyUtility {
    pub fn new(alpha: Rational) -> std::result::Result<Self, String> {
        if !alpha.is_positive() {
            return Err(format!("alpha must be positive, got {alpha}"));
        }
        Ok(MoneyUtility { alpha })
    }

    pub fn unit() -> Self {
        MoneyUtility {
            alpha: Rational::one(),
        }
    }

    pub fn alpha(&self) -> &Rational {
        &self.alpha
    }

    pub fn eval(&self, y: &Rational) -> Result<Rational> {
        if y.is_negative() {
            return Err(Error::NegativeAmount(y.clone()));
        }
        Ok(&self.alpha * y)
    }
}

impl<'de> Deserialize<'de> for MoneyUtility {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            alpha: Rational,
        }
        let raw = Raw::deserialize(d)?;
        MoneyUtility::new(raw.alpha).map_err(serde::de::Error::custom)
    }
}

pub fn eval_money_utility(u: &MoneyUtility, y: &Rational) -> Result<Rational> {
    u.eval(y)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SellerEndowment {
    pub good_count: u64,
}

/// A seller. Its Money-utility is carried for uniformity but never consulted:
/// sellers part with all Good at any positive price.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seller {
    pub endowment: SellerEndowment,
    pub money_utility: MoneyUtility,
}

impl Seller {
    pub fn new(good_count: u64) -> Self {
        Seller {
            endowment: SellerEndowment { good_count },
            money_utility: MoneyUtility::unit(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuyerEndowment {
    pub money: Rational,
    pub claim: u64,
    /// Filled by the rights distribution stage.
    pub rights_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Buyer {
    pub endowment: BuyerEndowment,
    pub good_utility: GoodUtility,
    pub money_utility: MoneyUtility,
    /// Optional cap on the value of Good (at the current Good price) the buyer
    /// is willing to hold. Used by crisis rounds to model willingness to spend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spend_cap: Option<Rational>,
}

impl Buyer {
    pub fn new(
        money: Rational,
        marginals: Vec<Rational>,
        alpha: Rational,
        rights_count: u64,
    ) -> std::result::Result<Self, String> {
        if money.is_negative() {
            return Err(format!("money must be non-negative, got {money}"));
        }
        let good_utility = GoodUtility::new(marginals)?;
        let money_utility = MoneyUtility::new(alpha)?;
        Ok(Buyer {
            endowment: BuyerEndowment {
                money,
                claim: good_utility.claim(),
                rights_count,
            },
            good_utility,
            money_utility,
            spend_cap: None,
        })
    }

    pub fn alpha(&self) -> &Rational {
        self.money_utility.alpha()
    }

    pub fn claim(&self) -> u64 {
        self.endowment.claim
    }

    pub fn money(&self) -> &Rational {
        &self.endowment.money
    }

    pub fn rights(&self) -> u64 {
        self.endowment.rights_count
    }

    /// Utility of holding `goods` items of Good and `money` units of Money.
    pub fn utility(&self, goods: u64, money: &Rational) -> Rational {
        self.good_utility.eval(goods) + self.money_utility.alpha() * money
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Unrestricted,
    Restricted,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "unrestricted" => Ok(Mode::Unrestricted),
            "restricted" => Ok(Mode::Restricted),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Unrestricted => "unrestricted",
            Mode::Restricted => "restricted",
        })
    }
}

/// A full single-round market instance. Seller `i` has id `s{i}`, buyer `i` has id `b{i}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketSpec {
    pub sellers: Vec<Seller>,
    pub buyers: Vec<Buyer>,
    pub epsilon: Rational,
    pub mode: Mode,
}

impl MarketSpec {
    pub fn new(
        sellers: Vec<Seller>,
        buyers: Vec<Buyer>,
        epsilon: Rational,
        mode: Mode,
    ) -> Result<Self> {
        let spec = MarketSpec {
            sellers,
            buyers,
            epsilon,
            mode,
        };
        spec.check_structure()?;
        Ok(spec)
    }

    /// Structural invariants: epsilon in (0,1), at least one buyer, positive volume,
    /// claims matching utility lengths.
    pub fn check_structure(&self) -> Result<()> {
        if !(self.epsilon.is_positive() && self.epsilon < Rational::one()) {
            return Err(Error::InvalidEpsilon(self.epsilon.clone()));
        }
        if self.buyers.is_empty() {
            return Err(Error::NoBuyers);
        }
        for (i, b) in self.buyers.iter().enumerate() {
            let buyer = TraderId::buyer(i);
            if b.endowment.claim != b.good_utility.claim() {
                return Err(Error::InvalidBuyer {
                    buyer,
                    reason: format!(
                        "claim {} does not match {} marginal values",
                        b.endowment.claim,
                        b.good_utility.claim()
                    ),
                });
            }
            if b.endowment.money.is_negative() {
                return Err(Error::InvalidBuyer {
                    buyer,
                    reason: "negative money endowment".into(),
                });
            }
        }
        self.offered_volume().map(|_| ())
    }

    pub fn offered_volume(&self) -> Result<u64> {
        offered_volume(self)
    }

    /// Total initial Money of all buyers (`m`).
    pub fn total_money(&self) -> Rational {
        self.buyers.iter().map(|b| b.money()).sum()
    }

    pub fn total_rights(&self) -> u64 {
        self.buyers.iter().map(Buyer::rights).sum()
    }

    pub fn buyer(&self, id: TraderId) -> Option<&Buyer> {
        match id {
            TraderId::Buyer(i) => self.buyers.get(i as usize),
            TraderId::Seller(_) => None,
        }
    }

    pub fn buyer_ids(&self) -> impl Iterator<Item = TraderId> {
        (0..self.buyers.len()).map(TraderId::buyer)
    }

    pub fn seller_ids(&self) -> impl Iterator<Item = TraderId> {
        (0..self.sellers.len()).map(TraderId::seller)
    }

    pub fn trader_ids(&self) -> impl Iterator<Item = TraderId> {
        self.buyer_ids().chain(self.seller_ids())
    }

    /// Price of a trader's initial endowment at prices `(p, q)`.
    pub fn endowment_price(&self, id: TraderId, p: &Rational, q: &Rational) -> Rational {
        match id {
            TraderId::Buyer(i) => {
                let b = &self.buyers[i as usize];
                b.money() + q * b.rights()
            }
            TraderId::Seller(i) => p * self.sellers[i as usize].endowment.good_count,
        }
    }
}

pub fn offered_volume(m: &MarketSpec) -> Result<u64> {
    let v: u64 = m.sellers.iter().map(|s| s.endowment.good_count).sum();
    if v == 0 {
        return Err(Error::DegenerateMarket);
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Basket {
    pub good_count: u64,
    pub rights_count: u64,
    pub money: Rational,
}

pub fn basket_price(b: &Basket, p: &Rational, q: &Rational) -> Rational {
    p * b.good_count + q * b.rights_count + &b.money
}

impl Basket {
    pub fn price(&self, p: &Rational, q: &Rational) -> Rational {
        basket_price(self, p, q)
    }
}

/// Terminal prices plus one basket per trader. Money is priced at 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Solution {
    pub price_good: Rational,
    pub price_right: Rational,
    pub baskets: BTreeMap<TraderId, Basket>,
}

impl Solution {
    pub fn price_couple(&self) -> Rational {
        &self.price_good + &self.price_right
    }

    pub fn basket(&self, id: TraderId) -> Option<&Basket> {
        self.baskets.get(&id)
    }
}

/// The condition of the endowment-validity test that a buyer failed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "clause", rename_all = "snake_case")]
pub enum ValidityClause {
    /// Money must strictly exceed four times the assigned Right.
    MoneyDominance { money: Rational, rights: u64 },
    /// For every `x <= rights`, `u^G(x) >= 2 alpha x`.
    EarlyGoodPreference { x: u64 },
    /// For every `x >= money / 2`, `alpha x > u^G(x)`.
    EventualMoneyPreference { x: u64 },
}

impl ValidityClause {
    pub fn number(&self) -> u8 {
        match self {
            ValidityClause::MoneyDominance { .. } => 1,
            ValidityClause::EarlyGoodPreference { .. } => 2,
            ValidityClause::EventualMoneyPreference { .. } => 3,
        }
    }
}

impl fmt::Display for ValidityClause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidityClause::MoneyDominance { money, rights } => write!(
                f,
                "clause (1): money {money} must exceed 4 x rights = {}",
                4 * rights
            ),
            ValidityClause::EarlyGoodPreference { x } => {
                write!(f, "clause (2): u^G({x}) < 2 alpha {x}")
            }
            ValidityClause::EventualMoneyPreference { x } => {
                write!(f, "clause (3): alpha {x} <= u^G({x})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuyerValidity {
    pub buyer: TraderId,
    pub failed: Option<ValidityClause>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub buyers: Vec<BuyerValidity>,
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.buyers.iter().all(|b| b.failed.is_none())
    }

    pub fn first_failure(&self) -> Option<(TraderId, &ValidityClause)> {
        self.buyers
            .iter()
            .find_map(|b| b.failed.as_ref().map(|c| (b.buyer, c)))
    }

    pub fn into_result(self) -> Result<()> {
        match self.first_failure() {
            None => Ok(()),
            Some((buyer, clause)) => Err(Error::InvalidEndowments {
                buyer,
                clause: clause.clone(),
            }),
        }
    }
}

/// Checks one buyer against the three endowment conditions, returning the first failure.
pub fn check_buyer_endowment(b: &Buyer) -> Option<ValidityClause> {
    let money = b.money();
    let rights = b.rights();
    let alpha = b.alpha();
    let u = &b.good_utility;

    if *money <= Rational::from(4 * rights) {
        return Some(ValidityClause::MoneyDominance {
            money: money.clone(),
            rights,
        });
    }

    // Running sums keep this linear in the claim.
    let mut acc = Rational::zero();
    for x in 1..=rights {
        acc += u.marginal(x);
        if acc < alpha * (2 * x) {
            return Some(ValidityClause::EarlyGoodPreference { x });
        }
    }

    // Beyond the claim u^G is constant while alpha x grows strictly, so the
    // finite window below decides the whole half-line.
    let start = (money / Rational::from(2u64)).ceil_u64();
    let end = start.max(u.claim());
    for x in start..=end {
        if alpha * x <= u.eval(x) {
            return Some(ValidityClause::EventualMoneyPreference { x });
        }
    }
    None
}

pub fn check_valid_endowments(m: &MarketSpec) -> ValidityReport {
    ValidityReport {
        buyers: m
            .buyers
            .iter()
            .enumerate()
            .map(|(i, b)| BuyerValidity {
                buyer: TraderId::buyer(i),
                failed: check_buyer_endowment(b),
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::q;

    fn ints(v: &[i64]) -> Vec<Rational> {
        v.iter().map(|&x| Rational::from_integer(x)).collect()
    }

    fn buyer(money: i64, rights: u64, alpha: Rational, marginals: &[i64]) -> Buyer {
        Buyer::new(
            Rational::from_integer(money),
            ints(marginals),
            alpha,
            rights,
        )
        .unwrap()
    }

    fn seller(good: u64) -> Seller {
        Seller {
            endowment: SellerEndowment { good_count: good },
            money_utility: MoneyUtility::unit(),
        }
    }

    #[test]
    fn good_utility_sums_and_saturates() {
        let u = GoodUtility::new(ints(&[3, 2, 1])).unwrap();
        assert_eq!(eval_good_utility(&u, 0), 0);
        assert_eq!(eval_good_utility(&u, 2), 5);
        assert_eq!(eval_good_utility(&u, 10), 6);
    }

    #[test]
    fn good_utility_rejects_bad_marginals() {
        assert!(GoodUtility::new(vec![]).is_err());
        assert!(GoodUtility::new(ints(&[3, 0])).is_err());
        assert!(GoodUtility::new(ints(&[2, 3])).is_err());
    }

    #[test]
    fn money_utility_is_linear() {
        let unit = MoneyUtility::unit();
        assert_eq!(eval_money_utility(&unit, &Rational::zero()).unwrap(), 0);
        let two = MoneyUtility::new(q(2, 1)).unwrap();
        assert_eq!(eval_money_utility(&two, &q(3, 1)).unwrap(), 6);
        let half = MoneyUtility::new(q(1, 2)).unwrap();
        assert_eq!(eval_money_utility(&half, &q(5, 1)).unwrap(), q(5, 2));
        assert!(eval_money_utility(&unit, &q(-1, 1)).is_err());
        assert!(MoneyUtility::new(Rational::zero()).is_err());
    }

    #[test]
    fn endowment_validity_examples() {
        let ok = buyer(20, 2, q(1, 1), &[3, 2, 1]);
        assert_eq!(check_buyer_endowment(&ok), None);

        let poor = buyer(7, 2, q(1, 1), &[3, 2, 1]);
        assert_eq!(check_buyer_endowment(&poor).map(|c| c.number()), Some(1));

        let greedy = buyer(10, 2, q(1, 1), &[3, 3, 2, 2]);
        assert_eq!(
            check_buyer_endowment(&greedy),
            Some(ValidityClause::EventualMoneyPreference { x: 5 })
        );

        let boundary = buyer(8, 2, q(1, 1), &[3, 2, 1]);
        assert_eq!(
            check_buyer_endowment(&boundary).map(|c| c.number()),
            Some(1)
        );

        let weak = buyer(20, 2, q(1, 1), &[1, 1]);
        assert_eq!(
            check_buyer_endowment(&weak),
            Some(ValidityClause::EarlyGoodPreference { x: 1 })
        );
    }

    #[test]
    fn validity_report_independent_of_order() {
        let a = buyer(20, 2, q(1, 1), &[3, 2, 1]);
        let b = buyer(7, 2, q(1, 1), &[3, 2, 1]);
        let m1 = MarketSpec::new(
            vec![seller(4)],
            vec![a.clone(), b.clone()],
            q(1, 10),
            Mode::Unrestricted,
        )
        .unwrap();
        let m2 =
            MarketSpec::new(vec![seller(4)], vec![b, a], q(1, 10), Mode::Unrestricted).unwrap();
        let r1: Vec<_> = check_valid_endowments(&m1)
            .buyers
            .into_iter()
            .map(|b| b.failed)
            .collect();
        let mut r2: Vec<_> = check_valid_endowments(&m2)
            .buyers
            .into_iter()
            .map(|b| b.failed)
            .collect();
        r2.reverse();
        assert_eq!(r1, r2);
    }

    #[test]
    fn basket_price_examples() {
        let one = q(1, 1);
        let b = Basket {
            good_count: 0,
            rights_count: 0,
            money: q(5, 1),
        };
        assert_eq!(basket_price(&b, &one, &one), 5);
        let b = Basket {
            good_count: 2,
            rights_count: 2,
            money: q(1, 1),
        };
        assert_eq!(basket_price(&b, &q(3, 1), &q(3, 1)), 13);
        let b = Basket {
            good_count: 1,
            rights_count: 2,
            money: Rational::zero(),
        };
        assert_eq!(basket_price(&b, &q(2, 1), &q(4, 1)), 10);
    }

    #[test]
    fn offered_volume_examples() {
        let b = buyer(20, 2, q(1, 1), &[3, 2, 1]);
        let m = MarketSpec::new(
            vec![seller(2), seller(3)],
            vec![b.clone()],
            q(1, 10),
            Mode::Unrestricted,
        )
        .unwrap();
        assert_eq!(offered_volume(&m).unwrap(), 5);
        let m = MarketSpec::new(
            vec![seller(1)],
            vec![b.clone()],
            q(1, 10),
            Mode::Unrestricted,
        )
        .unwrap();
        assert_eq!(offered_volume(&m).unwrap(), 1);
        let err = MarketSpec::new(
            vec![seller(0), seller(0)],
            vec![b],
            q(1, 10),
            Mode::Unrestricted,
        );
        assert!(matches!(err, Err(Error::DegenerateMarket)));
    }

    #[test]
    fn epsilon_must_be_in_open_unit_interval() {
        let b = buyer(20, 2, q(1, 1), &[3, 2, 1]);
        for eps in [Rational::zero(), Rational::one(), q(3, 2)] {
            let r = MarketSpec::new(vec![seller(2)], vec![b.clone()], eps, Mode::Unrestricted);
            assert!(matches!(r, Err(Error::InvalidEpsilon(_))));
        }
    }

    #[test]
    fn trader_ids_are_disjoint_and_ordered() {
        assert_ne!(TraderId::Buyer(0), TraderId::Seller(0));
        assert!(TraderId::Buyer(7) < TraderId::Seller(0));
        assert_eq!("s3".parse::<TraderId>().unwrap(), TraderId::Seller(3));
        assert!("x3".parse::<TraderId>().is_err());
        assert_eq!(TraderId::Buyer(2).to_string(), "b2");
    }
}
