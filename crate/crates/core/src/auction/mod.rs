//! Auction-based approximate clearing of a single market.
//!
//! Good and Right are traded as Couples (one of each) priced `c = p + q`.
//! Prices start at `p = q = 1` and rise by the factor `1 + epsilon` every time
//! each Couple has been bought once at the current price. Buyers are visited in
//! a fixed order; each one computes the number of Couples it wants at price `c`
//! and outbids the current holders, paying `(1 + epsilon) c` per Couple.
//! Trading stops after a full round without any purchase.

mod trace;

pub use trace::{replay, Trace, TraceEvent, Transfer};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{
    check_valid_endowments, Basket, Buyer, GoodUtility, MarketSpec, Mode, Solution, TraderId,
};
use crate::rational::Rational;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "order", rename_all = "snake_case")]
pub enum BuyerOrder {
    #[default]
    Ascending,
    Shuffled {
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SolverConfig {
    pub order: BuyerOrder,
    /// Skip the endowment-validity gate. The guarantees only hold on valid
    /// endowments; this exists for experiments on the boundary.
    pub allow_invalid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Base,
    Raised,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoupleItem {
    pub id: u32,
    pub owner: TraderId,
    pub tier: Tier,
    pub good_from: TraderId,
    pub right_from: TraderId,
}

/// Running check of the cash bounds: total buyer cash is at most `2m`
/// throughout and at most `m` once the first iteration is over.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CashAudit {
    pub checks: u64,
    pub max_buyer_cash: Rational,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: u64,
    pub rounds: u64,
    pub steps: u64,
    pub outbid_calls: u64,
    pub demand_probes: u64,
    pub rounds_per_iteration: Vec<u64>,
    /// Loose (Good, Right) left after the first iteration closed, if it did.
    pub loose_after_first_iteration: Option<(u64, u64)>,
    pub cash_audit: CashAudit,
}

impl SolveStats {
    pub fn max_rounds_per_iteration(&self) -> u64 {
        self.rounds_per_iteration.iter().copied().max().unwrap_or(0)
    }
}

/// Outcome of a demand query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Demand {
    pub want: u64,
    pub probes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RoundOutcome {
    pub any_purchase: bool,
    pub iteration_ended: bool,
}

/// Full auction state.
///
/// Cash, prices and the markup pool are kept as integer numerators over one
/// shared denominator `scale`. Every amount the auction produces is a multiple
/// of `1 / scale`: the scale starts as the common denominator of the Money
/// endowments and of epsilon, and is multiplied by epsilon's denominator each
/// time prices rise. Sums and comparisons are then plain integer operations.
#[derive(Debug, Clone)]
pub struct AuctionState {
    spec: MarketSpec,
    volume: u64,
    total_money: Rational,
    eps_numer: BigInt,
    eps_denom: BigInt,
    scale: BigInt,
    money_num: BigInt,
    p_num: BigInt,
    q_num: BigInt,
    p: Rational,
    q: Rational,
    c: Rational,
    buyer_cash: Vec<BigInt>,
    seller_cash: Vec<BigInt>,
    couples: Vec<CoupleItem>,
    loose_good: Vec<u64>,
    loose_right: Vec<u64>,
    /// Markups collected during the current iteration and not yet paid out.
    margin_pool: BigInt,
    order: Vec<usize>,
    iteration: u64,
    round: u64,
    step_counter: u64,
    stats: SolveStats,
    trace: Trace,
}

impl AuctionState {
    pub fn spec(&self) -> &MarketSpec {
        &self.spec
    }

    pub fn price_good(&self) -> &Rational {
        &self.p
    }

    pub fn price_right(&self) -> &Rational {
        &self.q
    }

    pub fn price_couple(&self) -> &Rational {
        &self.c
    }

    pub fn cash(&self, t: TraderId) -> Rational {
        self.rat(self.cash_num(t))
    }

    pub fn couples(&self) -> &[CoupleItem] {
        &self.couples
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn step_counter(&self) -> u64 {
        self.step_counter
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn stats(&self) -> &SolveStats {
        &self.stats
    }

    pub fn margin_pool(&self) -> Rational {
        self.rat(&self.margin_pool)
    }

    pub fn loose_good(&self) -> u64 {
        self.loose_good.iter().sum()
    }

    pub fn loose_right(&self) -> u64 {
        self.loose_right.iter().sum()
    }

    /// `o^b`: Couples currently owned by `b`.
    pub fn owned(&self, b: TraderId) -> u64 {
        self.couples.iter().filter(|c| c.owner == b).count() as u64
    }

    /// `o_+^b`: Couples owned by `b` already at the raised tier.
    pub fn owned_raised(&self, b: TraderId) -> u64 {
        self.couples
            .iter()
            .filter(|c| c.owner == b && c.tier == Tier::Raised)
            .count() as u64
    }

    fn composable(&self) -> u64 {
        self.loose_good().min(self.loose_right())
    }

    /// Couples purchasable at the current base price, including ones that can
    /// still be composed from loose items.
    pub fn available_at_base(&self) -> u64 {
        let base = self.couples.iter().filter(|c| c.tier == Tier::Base).count() as u64;
        base + self.composable()
    }

    /// Cash `b` must keep in restricted mode: `q * max(0, R_b - o^b)`.
    pub fn reserve(&self, b: TraderId) -> Rational {
        self.rat(&self.reserve_num(b, self.owned(b)))
    }

    pub fn spendable(&self, b: TraderId) -> Rational {
        self.rat(&self.spendable_num(b))
    }

    fn rat(&self, num: &BigInt) -> Rational {
        Rational::from_bigints(num.clone(), self.scale.clone())
    }

    /// `r * scale`, which must be an integer.
    fn num(&self, r: &Rational) -> BigInt {
        let (quot, rem) = (&self.scale * r.numer()).div_rem(r.denom());
        debug_assert!(rem.is_zero(), "{r} is not a multiple of 1/{}", self.scale);
        quot
    }

    fn c_num(&self) -> BigInt {
        &self.p_num + &self.q_num
    }

    /// `epsilon c` in scaled units. Exact because `p_num` and `q_num` stay
    /// multiples of epsilon's denominator.
    fn margin_num(&self) -> BigInt {
        &self.eps_numer * self.c_num() / &self.eps_denom
    }

    fn cash_num(&self, t: TraderId) -> &BigInt {
        match t {
            TraderId::Buyer(i) => &self.buyer_cash[i as usize],
            TraderId::Seller(i) => &self.seller_cash[i as usize],
        }
    }

    fn cash_mut(&mut self, t: TraderId) -> &mut BigInt {
        match t {
            TraderId::Buyer(i) => &mut self.buyer_cash[i as usize],
            TraderId::Seller(i) => &mut self.seller_cash[i as usize],
        }
    }

    fn reserve_num(&self, b: TraderId, owned: u64) -> BigInt {
        match self.spec.mode {
            Mode::Unrestricted => BigInt::zero(),
            Mode::Restricted => {
                let rights = self.spec.buyers[b.index()].rights();
                &self.q_num * rights.saturating_sub(owned)
            }
        }
    }

    fn spendable_num(&self, b: TraderId) -> BigInt {
        let s = self.cash_num(b) - self.reserve_num(b, self.owned(b));
        s.max(BigInt::zero())
    }

    /// Multiplies the common denominator, and with it every stored numerator, by `k`.
    fn rescale(&mut self, k: &BigInt) {
        self.scale *= k;
        self.money_num *= k;
        self.p_num *= k;
        self.q_num *= k;
        self.margin_pool *= k;
        for v in self
            .buyer_cash
            .iter_mut()
            .chain(self.seller_cash.iter_mut())
        {
            *v *= k;
        }
    }

    fn refresh_prices(&mut self) {
        self.p = self.rat(&self.p_num);
        self.q = self.rat(&self.q_num);
        self.c = &self.p + &self.q;
    }

    #[cfg(test)]
    fn force_couple_price(&mut self, c: Rational) {
        let half = &c / &Rational::from_integer(2);
        let k = half.denom().clone();
        self.rescale(&k);
        self.p_num = self.num(&half);
        self.q_num = self.p_num.clone();
        self.refresh_prices();
    }

    #[cfg(test)]
    fn force_cash(&mut self, t: TraderId, amount: Rational) {
        let k = amount.denom().clone();
        self.rescale(&k);
        *self.cash_mut(t) = self.num(&amount);
    }

    fn audit(&mut self) {
        let total: BigInt = self.buyer_cash.iter().sum();
        self.stats.cash_audit.checks += 1;
        let two_m = &self.money_num * 2u32;
        if total > two_m {
            let msg = format!(
                "iteration {}: buyer cash {} exceeds 2m = {}",
                self.iteration,
                self.rat(&total),
                self.rat(&two_m)
            );
            self.stats.cash_audit.violations.push(msg);
        }
        if self.iteration > 1 && total > self.money_num {
            let msg = format!(
                "iteration {}: buyer cash {} exceeds m = {}",
                self.iteration,
                self.rat(&total),
                self.total_money
            );
            self.stats.cash_audit.violations.push(msg);
        }
        let max = &self.stats.cash_audit.max_buyer_cash;
        if &total * max.denom() > max.numer() * &self.scale {
            self.stats.cash_audit.max_buyer_cash = self.rat(&total);
        }
        if self.spec.mode == Mode::Restricted {
            for i in 0..self.buyer_cash.len() {
                let b = TraderId::buyer(i);
                let reserve = self.reserve_num(b, self.owned(b));
                assert!(
                    self.buyer_cash[i] >= reserve,
                    "restricted reserve violated for {b}: cash {} < reserve {}",
                    self.rat(&self.buyer_cash[i]),
                    self.rat(&reserve)
                );
            }
        }
    }
}

fn lcm_of_denominators<'a>(values: impl Iterator<Item = &'a Rational>) -> BigInt {
    values.fold(BigInt::one(), |acc, r| acc.lcm(r.denom()))
}

/// Sets up prices `p = q = 1`, surplus cash `M_b + q |R_b|` for buyers, and
/// loose Good/Right with their initial holders.
pub fn initialize(m: &MarketSpec) -> Result<AuctionState> {
    initialize_with(m, &SolverConfig::default())
}

pub fn initialize_with(m: &MarketSpec, cfg: &SolverConfig) -> Result<AuctionState> {
    m.check_structure()?;
    if !cfg.allow_invalid {
        check_valid_endowments(m).into_result()?;
    }
    let volume = m.offered_volume()?;
    let eps_numer = m.epsilon.numer().clone();
    let eps_denom = m.epsilon.denom().clone();
    let scale = lcm_of_denominators(m.buyers.iter().map(|b| b.money())).lcm(&eps_denom);

    let mut order: Vec<usize> = (0..m.buyers.len()).collect();
    if let BuyerOrder::Shuffled { seed } = cfg.order {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }

    let mut st = AuctionState {
        volume,
        total_money: m.total_money(),
        eps_numer,
        eps_denom,
        money_num: BigInt::zero(),
        p_num: scale.clone(),
        q_num: scale.clone(),
        scale,
        p: Rational::one(),
        q: Rational::one(),
        c: Rational::from_integer(2),
        buyer_cash: Vec::new(),
        seller_cash: vec![BigInt::zero(); m.sellers.len()],
        couples: Vec::new(),
        loose_good: m.sellers.iter().map(|s| s.endowment.good_count).collect(),
        loose_right: m.buyers.iter().map(|b| b.rights()).collect(),
        margin_pool: BigInt::zero(),
        order,
        iteration: 1,
        round: 0,
        step_counter: 0,
        stats: SolveStats::default(),
        trace: Trace::default(),
        spec: m.clone(),
    };
    st.money_num = st.num(&st.total_money);
    st.buyer_cash = m
        .buyers
        .iter()
        .map(|b| st.num(b.money()) + &st.q_num * b.rights())
        .collect();
    let cash = st
        .spec
        .trader_ids()
        .map(|t| Transfer {
            trader: t,
            amount: st.cash(t),
        })
        .collect();
    st.trace.push(TraceEvent::Init {
        spec: m.clone(),
        order: st.order.iter().map(|&i| TraderId::buyer(i)).collect(),
        cash,
    });
    st.audit();
    Ok(st)
}

/// Largest number of Couples `b` wants to hold at price `c`.
///
/// The count is capped by the claim, the offered volume, what `c o^b` plus the
/// spendable cash can pay for at price `c`, and the buyer's spend cap if any.
/// Within those caps it is the number of leading marginals strictly above
/// `alpha c`, found by binary search over the nonincreasing marginals.
pub fn ideal_demand(st: &mut AuctionState, b: TraderId) -> Demand {
    let d = demand_at(st, b);
    st.step_counter += d.probes;
    st.stats.demand_probes += d.probes;
    st.trace.push(TraceEvent::DemandQuery {
        iteration: st.iteration,
        round: st.round,
        buyer: b,
        owned: st.owned(b),
        want: d.want,
        probes: d.probes,
    });
    d
}

fn to_u64_saturating(v: &BigInt) -> u64 {
    v.to_u64()
        .unwrap_or(if v.is_negative() { 0 } else { u64::MAX })
}

fn demand_at(st: &AuctionState, b: TraderId) -> Demand {
    let buyer = &st.spec.buyers[b.index()];
    let owned = st.owned(b);
    let c_num = st.c_num();
    let affordable = owned.saturating_add(to_u64_saturating(&(st.spendable_num(b) / &c_num)));
    let mut cap = buyer.claim().min(st.volume).min(affordable);
    if let Some(limit) = &buyer.spend_cap {
        // floor(limit / p) = floor(limit.numer * scale / (limit.denom * p_num))
        let units = (limit.numer() * &st.scale) / (limit.denom() * &st.p_num);
        cap = cap.min(to_u64_saturating(&units));
    }
    // marginal > alpha c  <=>  marginal.numer * alpha.denom * scale > alpha.numer * c_num * marginal.denom
    let alpha = buyer.alpha();
    let rhs_factor = alpha.numer() * &c_num;
    let lhs_factor = alpha.denom() * &st.scale;
    search_demand(&buyer.good_utility, cap, |mg| {
        mg.numer() * &lhs_factor > &rhs_factor * mg.denom()
    })
}

/// Demand of a buyer holding no Couples at prices `(p, q)` with `budget` to
/// spend. Same caps and search as [`ideal_demand`], in plain rationals.
pub fn demand_at_prices(
    buyer: &Buyer,
    p: &Rational,
    q: &Rational,
    budget: &Rational,
    volume: u64,
) -> Demand {
    let c = p + q;
    let mut cap = buyer.claim().min(volume).min((budget / &c).floor_u64());
    if let Some(limit) = &buyer.spend_cap {
        cap = cap.min((limit / p).floor_u64());
    }
    let threshold = buyer.alpha() * &c;
    search_demand(&buyer.good_utility, cap, |mg| *mg > threshold)
}

/// Largest `k <= cap` whose `k`-th marginal passes `above`; marginals are
/// nonincreasing so the passing ones form a prefix.
fn search_demand(u: &GoodUtility, cap: u64, above: impl Fn(&Rational) -> bool) -> Demand {
    let (mut lo, mut hi) = (0u64, cap);
    let mut probes = 0;
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        probes += 1;
        if above(&u.marginal(mid)) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    Demand { want: lo, probes }
}

enum Source {
    Own(usize),
    Compose { seller: usize, right_from: usize },
    Other(usize),
}

fn next_source(st: &AuctionState, b: TraderId) -> Option<Source> {
    if let Some(i) = st
        .couples
        .iter()
        .position(|c| c.owner == b && c.tier == Tier::Base)
    {
        return Some(Source::Own(i));
    }
    if let Some(seller) = st.loose_good.iter().position(|&g| g > 0) {
        let own = b.index();
        let right_from = if st.loose_right[own] > 0 {
            Some(own)
        } else {
            st.loose_right.iter().position(|&r| r > 0)
        };
        if let Some(right_from) = right_from {
            return Some(Source::Compose { seller, right_from });
        }
    }
    // Couples carrying b's own Right come back first, then Couples held on
    // someone else's Right, and only then a holder's Couples on its own Right.
    st.couples
        .iter()
        .enumerate()
        .filter(|(_, c)| c.tier == Tier::Base)
        .min_by_key(|(_, c)| (c.right_from != b, c.owner == c.right_from, c.owner, c.id))
        .map(|(i, _)| Source::Other(i))
}

/// Buys up to `want - o_+^b` base-tier Couples for `b` at `(1 + epsilon) c` each:
/// first `b`'s own, then freshly composed ones, then other holders'.
/// Stops early when `b` cannot pay without breaking the restricted reserve.
/// Returns the number of Couples bought.
pub fn outbid(st: &mut AuctionState, b: TraderId, want: u64) -> u64 {
    st.step_counter += 1;
    st.stats.outbid_calls += 1;
    if want < st.owned(b) {
        return 0;
    }
    let target = want - st.owned_raised(b);
    let c_num = st.c_num();
    let margin_num = st.margin_num();
    let price_num = &c_num + &margin_num;
    let price = &st.c * &(Rational::one() + &st.spec.epsilon);
    let mut bought = 0;
    while bought < target {
        let Some(src) = next_source(st, b) else { break };
        let owned = st.owned(b);
        let (net_cost, owned_after) = match src {
            Source::Own(_) => (&margin_num, owned),
            _ => (&price_num, owned + 1),
        };
        if st.cash_num(b) - net_cost < st.reserve_num(b, owned_after) {
            break;
        }
        match src {
            Source::Own(i) | Source::Other(i) => {
                let from = st.couples[i].owner;
                st.couples[i].owner = b;
                st.couples[i].tier = Tier::Raised;
                *st.cash_mut(b) -= &price_num;
                *st.cash_mut(from) += &c_num;
                st.margin_pool += &margin_num;
                st.trace.push(TraceEvent::OutbidPurchase {
                    buyer: b,
                    couple: st.couples[i].id,
                    from,
                    paid: price.clone(),
                    credited: st.c.clone(),
                });
            }
            Source::Compose { seller, right_from } => {
                st.loose_good[seller] -= 1;
                st.loose_right[right_from] -= 1;
                let id = st.couples.len() as u32;
                let seller_id = TraderId::seller(seller);
                let right_id = TraderId::buyer(right_from);
                st.couples.push(CoupleItem {
                    id,
                    owner: b,
                    tier: Tier::Raised,
                    good_from: seller_id,
                    right_from: right_id,
                });
                *st.cash_mut(b) -= &price_num;
                // Right from an initial endowment is already paid for inside
                // the holder's surplus cash, so only the seller is credited.
                let p_num = st.p_num.clone();
                *st.cash_mut(seller_id) += &p_num;
                st.margin_pool += &margin_num;
                st.trace.push(TraceEvent::CoupleFormed {
                    buyer: b,
                    couple: id,
                    seller: seller_id,
                    right_from: right_id,
                    paid: price.clone(),
                    seller_credit: st.p.clone(),
                });
            }
        }
        bought += 1;
        st.audit();
    }
    bought
}

/// Visits every buyer once in the fixed order. Ends early, flagging the end of
/// the iteration, as soon as no Couple is left at the base price.
pub fn run_round(st: &mut AuctionState) -> RoundOutcome {
    st.round += 1;
    st.stats.rounds += 1;
    let mut out = RoundOutcome::default();
    for idx in 0..st.order.len() {
        let b = TraderId::buyer(st.order[idx]);
        if st.available_at_base() == 0 {
            out.iteration_ended = true;
            return out;
        }
        let d = ideal_demand(st, b);
        if d.want < st.owned(b) {
            continue;
        }
        if outbid(st, b, d.want) > 0 {
            out.any_purchase = true;
        }
    }
    if st.available_at_base() == 0 {
        out.iteration_ended = true;
    }
    out
}

/// Raises all prices by `1 + epsilon`, pays each initial holder `epsilon p`
/// per sold Good and `epsilon q` per Right, and resets every Couple to base tier.
pub fn end_iteration(st: &mut AuctionState) {
    st.stats.rounds_per_iteration.push(st.round);
    if st.iteration == 1 {
        st.stats.loose_after_first_iteration = Some((st.loose_good(), st.loose_right()));
    }
    // In the new scale (old scale times eps_denom), epsilon p_old is eps_numer * p_num_old.
    let good_bonus = &st.eps_numer * &st.p_num;
    let right_bonus = &st.eps_numer * &st.q_num;
    let grow = &st.eps_denom + &st.eps_numer;
    let d = st.eps_denom.clone();
    let (p_old, q_old) = (st.p_num.clone(), st.q_num.clone());
    st.rescale(&d);
    st.p_num = p_old * &grow;
    st.q_num = q_old * &grow;
    st.refresh_prices();
    st.iteration += 1;
    st.round = 0;
    for c in &mut st.couples {
        c.tier = Tier::Base;
    }
    st.trace.push(TraceEvent::PriceRaise {
        iteration: st.iteration,
        p: st.p.clone(),
        q: st.q.clone(),
        c: st.c.clone(),
    });

    for s in 0..st.spec.sellers.len() {
        let sold = st.spec.sellers[s].endowment.good_count - st.loose_good[s];
        if sold == 0 {
            continue;
        }
        let amount = &good_bonus * sold;
        st.seller_cash[s] += &amount;
        st.margin_pool -= &amount;
        let amount = st.rat(&amount);
        st.trace.push(TraceEvent::CashTopup {
            trader: TraderId::seller(s),
            amount,
        });
    }
    for b in 0..st.spec.buyers.len() {
        let rights = st.spec.buyers[b].rights();
        if rights == 0 {
            continue;
        }
        let amount = &right_bonus * rights;
        st.buyer_cash[b] += &amount;
        st.margin_pool -= &amount;
        let amount = st.rat(&amount);
        st.trace.push(TraceEvent::CashTopup {
            trader: TraderId::buyer(b),
            amount,
        });
    }
    st.audit();
}

/// Closes trading: markups paid during the unfinished iteration go back to the
/// buyers who paid them, then the pooled Money is sold at price 1 for cash,
/// buyers first then sellers, ascending id.
pub fn finalize(st: &mut AuctionState) -> Solution {
    let margin = st.margin_num();
    let mut refunds = Vec::new();
    for b in 0..st.spec.buyers.len() {
        let id = TraderId::buyer(b);
        let raised = st.owned_raised(id);
        if raised == 0 {
            continue;
        }
        let amount = &margin * raised;
        st.buyer_cash[b] += &amount;
        st.margin_pool -= &amount;
        refunds.push(Transfer {
            trader: id,
            amount: st.rat(&amount),
        });
    }

    let ids: Vec<TraderId> = st.spec.trader_ids().collect();
    let total_cash: BigInt = ids.iter().map(|&t| st.cash_num(t)).sum();
    // Pro-rata fallback when cash exceeds the Money supply. The share
    // cash * m / total is an integer numerator once the scale absorbs `total`.
    let shares: Option<Vec<BigInt>> = (total_cash > st.money_num).then(|| {
        ids.iter()
            .map(|&t| st.cash_num(t) * &st.money_num)
            .collect()
    });
    if shares.is_some() {
        st.rescale(&total_cash);
    }
    let mut pool = st.money_num.clone();
    let mut money = Vec::new();
    let mut baskets = std::collections::BTreeMap::new();
    for (i, &t) in ids.iter().enumerate() {
        let amount = match &shares {
            Some(s) => s[i].clone(),
            None => st.cash_num(t).clone().min(pool.clone()),
        };
        pool -= &amount;
        *st.cash_mut(t) -= &amount;
        let (good, rights) = match t {
            TraderId::Buyer(_) => {
                let k = st.owned(t);
                (k, k)
            }
            TraderId::Seller(s) => (st.loose_good[s as usize], 0),
        };
        let amount = st.rat(&amount);
        baskets.insert(
            t,
            Basket {
                good_count: good,
                rights_count: rights,
                money: amount.clone(),
            },
        );
        if amount.is_positive() {
            money.push(Transfer { trader: t, amount });
        }
    }
    st.trace.push(TraceEvent::Finalize { refunds, money });
    Solution {
        price_good: st.p.clone(),
        price_right: st.q.clone(),
        baskets,
    }
}

/// Iteration guard: twice the `1 + log_{1+eps} m` bound on iterations.
pub fn iteration_guard(m: &MarketSpec) -> u64 {
    let bound = iteration_bound(m);
    (2.0 * bound).ceil().max(2.0) as u64
}

/// `1 + log_{1+eps} m`.
pub fn iteration_bound(m: &MarketSpec) -> f64 {
    let money = m.total_money().to_f64();
    let base = (1.0 + m.epsilon.to_f64()).ln();
    1.0 + money.ln() / base
}

/// `|B|^2 log2(V) (1 + log_{1+eps} m)`, with `log2 V` floored at 1 so a
/// single-item market does not get a zero bound.
pub fn step_bound(m: &MarketSpec) -> f64 {
    let b = m.buyers.len() as f64;
    let v = m.offered_volume().unwrap_or(1) as f64;
    b * b * v.log2().max(1.0) * iteration_bound(m)
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub solution: Solution,
    pub trace: Trace,
    pub stats: SolveStats,
}

pub fn solve(m: &MarketSpec) -> Result<SolveOutput> {
    solve_with(m, &SolverConfig::default())
}

pub fn solve_with(m: &MarketSpec, cfg: &SolverConfig) -> Result<SolveOutput> {
    let mut st = initialize_with(m, cfg)?;
    let guard = iteration_guard(m);
    if st.available_at_base() > 0 {
        loop {
            let out = run_round(&mut st);
            if out.iteration_ended {
                end_iteration(&mut st);
                if st.iteration > guard {
                    return Err(Error::NonTermination {
                        iterations: st.iteration,
                        guard,
                    });
                }
            } else if !out.any_purchase {
                break;
            }
        }
    }
    st.stats.rounds_per_iteration.push(st.round);
    st.stats.iterations = st.iteration;
    st.stats.steps = st.step_counter;
    let solution = finalize(&mut st);
    Ok(SolveOutput {
        solution,
        trace: st.trace,
        stats: st.stats,
    })
}

#[cfg(test)]
mod tests;
