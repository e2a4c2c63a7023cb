//! Frustration of buyers: how far the Good they ended with falls short of the
//! Right they were assigned.

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::auction::{Trace, TraceEvent};
use crate::error::{Error, Result};
use crate::market::{MarketSpec, Solution, TraderId};
use crate::rational::{Rational, SharedDenom};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrustrationRecord {
    pub buyer: TraderId,
    pub assigned: u64,
    pub acquired: u64,
    /// Good bought with the initial Money endowment, when a trace is available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acquired_with_initial_money: Option<u64>,
    pub price_good: Rational,
    pub price_right: Rational,
    pub f: Rational,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pf: Option<Rational>,
}

/// `max(0, (assigned - acquired) / assigned)`, and 0 for a buyer assigned nothing.
pub fn frustration(assigned: u64, acquired: u64) -> Rational {
    if assigned == 0 || acquired >= assigned {
        return Rational::zero();
    }
    Rational::new((assigned - acquired) as i64, assigned as i64)
}

/// Frustration discounted by what selling the unused rights at price `d'` buys:
/// `max(0, (a - g - d'/(d + d') |a - g|) / a)`, and 0 when `a = 0`.
pub fn potential_frustration(
    assigned: u64,
    acquired_initial: u64,
    d: &Rational,
    d_right: &Rational,
) -> Result<Rational> {
    if !d.is_positive() || !d_right.is_positive() {
        return Err(Error::NonPositivePrice {
            good: Box::new(d.clone()),
            right: Box::new(d_right.clone()),
        });
    }
    if assigned == 0 {
        return Ok(Rational::zero());
    }
    let a = Rational::from_integer(assigned as i64);
    let gap = &a - Rational::from_integer(acquired_initial as i64);
    let share = d_right / &(d + d_right);
    let value = (&gap - &share * &gap.abs()) / &a;
    Ok(value.max(Rational::zero()))
}

/// Number of Couples `b` acquired while its cumulative spending on Good stayed
/// within its initial Money.
///
/// Purchases are walked in trace order. The Good share of a payment is its
/// `p / c` fraction; buying back one's own Couple costs only the markup. The
/// count is capped by the Couples `b` still holds at the end.
pub fn acquired_with_initial_money(trace: &Trace, m: &MarketSpec, b: TraderId) -> Option<u64> {
    m.buyer(b)?;
    acquired_with_initial_money_all(trace, m).map(|v| v[b.index()])
}

/// [`acquired_with_initial_money`] for every buyer in one pass over the trace.
/// `None` when the trace never reaches its finalize event.
///
/// Outflows are summed per segment of constant Good share and folded into the
/// remaining Money only when the share changes.
pub fn acquired_with_initial_money_all(trace: &Trace, m: &MarketSpec) -> Option<Vec<u64>> {
    let n = m.buyers.len();
    let mut share = Rational::new(1, 2);
    let mut left: Vec<Rational> = m.buyers.iter().map(|b| b.money().clone()).collect();
    let mut seg = SharedDenom::new(n);
    let mut count = vec![0u64; n];
    let mut held = vec![0i64; n];
    let mut open = vec![true; n];
    let mut finished = false;
    for e in trace.iter() {
        let (b, paid, refund, acquires) = match e {
            TraceEvent::PriceRaise { p, c, .. } => {
                let (pn, cn) = (p.numer() * c.denom(), c.numer() * p.denom());
                if pn * share.denom() == cn * share.numer() {
                    continue;
                }
                for i in 0..n {
                    if open[i] && !seg.sums[i].is_zero() {
                        let sum = std::mem::take(&mut seg.sums[i]);
                        left[i] -= Rational::from_bigints(sum, seg.denom.clone()) * &share;
                    }
                }
                share = p / c;
                continue;
            }
            TraceEvent::OutbidPurchase {
                buyer,
                from,
                paid,
                credited,
                ..
            } => {
                if from == buyer {
                    (buyer.index(), paid, Some(credited), false)
                } else {
                    if let TraderId::Buyer(i) = from {
                        held[*i as usize] -= 1;
                    }
                    held[buyer.index()] += 1;
                    (buyer.index(), paid, None, true)
                }
            }
            TraceEvent::CoupleFormed { buyer, paid, .. } => {
                held[buyer.index()] += 1;
                (buyer.index(), paid, None, true)
            }
            TraceEvent::Finalize { .. } => {
                finished = true;
                break;
            }
            _ => continue,
        };
        if !open[b] {
            continue;
        }
        seg.add(b, paid);
        if let Some(r) = refund {
            seg.sub(b, r);
        }
        // share * sum / denom > left, cross-multiplied.
        let lhs = &seg.sums[b] * share.numer() * left[b].denom();
        let rhs = left[b].numer() * share.denom() * &seg.denom;
        if lhs > rhs {
            open[b] = false;
        } else if acquires {
            count[b] += 1;
        }
    }
    if !finished {
        return None;
    }
    Some(
        count
            .into_iter()
            .zip(held)
            .map(|(c, h)| c.min(h.max(0) as u64))
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrustrationReport {
    pub records: Vec<FrustrationRecord>,
    /// Buyers whose potential frustration exceeds 1/2 while `d = d'`.
    pub pf_cap_violations: Vec<TraderId>,
    pub warnings: Vec<String>,
}

/// One record per buyer. Without a trace the potential frustration is omitted.
pub fn market_frustration_report(
    m: &MarketSpec,
    s: &Solution,
    trace: Option<&Trace>,
) -> Result<FrustrationReport> {
    let d = &s.price_good;
    let d_right = &s.price_right;
    let half = Rational::new(1, 2);
    let mut records = Vec::new();
    let mut pf_cap_violations = Vec::new();
    let mut warnings = Vec::new();
    if trace.is_none() {
        warnings.push("no trace available; potential frustration omitted".to_string());
    }
    let initial_all = trace.and_then(|t| acquired_with_initial_money_all(t, m));
    if trace.is_some() && initial_all.is_none() {
        warnings.push("trace has no finalize event; potential frustration omitted".to_string());
    }
    for (i, b) in m.buyers.iter().enumerate() {
        let id = TraderId::buyer(i);
        let acquired = s.basket(id).map_or(0, |bk| bk.good_count);
        let assigned = b.rights();
        let initial = initial_all.as_ref().map(|v| v[i]);
        let pf = initial
            .map(|g| potential_frustration(assigned, g, d, d_right))
            .transpose()?;
        if d == d_right && pf.as_ref().is_some_and(|v| *v > half) {
            pf_cap_violations.push(id);
        }
        records.push(FrustrationRecord {
            buyer: id,
            assigned,
            acquired,
            acquired_with_initial_money: initial,
            price_good: d.clone(),
            price_right: d_right.clone(),
            f: frustration(assigned, acquired),
            pf,
        });
    }
    Ok(FrustrationReport {
        records,
        pf_cap_violations,
        warnings,
    })
}
