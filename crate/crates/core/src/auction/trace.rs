//! Auction event log and replay.
//!
//! The trace is self-contained: the `init` event carries the full market, and
//! every later event records the exact amounts moved. Replaying applies those
//! movements without re-running any demand logic and rebuilds the solution.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use num_traits::Signed;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{Basket, MarketSpec, Solution, TraderId};
use crate::rational::{Rational, SharedDenom};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transfer {
    pub trader: TraderId,
    pub amount: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEvent {
    Init {
        spec: MarketSpec,
        order: Vec<TraderId>,
        cash: Vec<Transfer>,
    },
    DemandQuery {
        iteration: u64,
        round: u64,
        buyer: TraderId,
        owned: u64,
        want: u64,
        probes: u64,
    },
    /// A base-tier couple changed hands (possibly from the buyer to itself).
    OutbidPurchase {
        buyer: TraderId,
        couple: u32,
        from: TraderId,
        paid: Rational,
        credited: Rational,
    },
    /// A new couple composed from loose Good and loose Right.
    CoupleFormed {
        buyer: TraderId,
        couple: u32,
        seller: TraderId,
        right_from: TraderId,
        paid: Rational,
        seller_credit: Rational,
    },
    PriceRaise {
        iteration: u64,
        p: Rational,
        q: Rational,
        c: Rational,
    },
    CashTopup {
        trader: TraderId,
        amount: Rational,
    },
    Finalize {
        refunds: Vec<Transfer>,
        money: Vec<Transfer>,
    },
}

impl TraceEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            TraceEvent::Init { .. } => "init",
            TraceEvent::DemandQuery { .. } => "demand_query",
            TraceEvent::OutbidPurchase { .. } => "outbid_purchase",
            TraceEvent::CoupleFormed { .. } => "couple_formed",
            TraceEvent::PriceRaise { .. } => "price_raise",
            TraceEvent::CashTopup { .. } => "cash_topup",
            TraceEvent::Finalize { .. } => "finalize",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn push(&mut self, e: TraceEvent) {
        self.events.push(e);
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TraceEvent> {
        self.events.iter()
    }

    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut events = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e = serde_json::from_str(&line).map_err(|err| Error::Replay {
                index: i,
                message: format!("line {}: {err}", i + 1),
            })?;
            events.push(e);
        }
        Ok(Trace { events })
    }
}

#[derive(Debug, Clone)]
struct ReplayCouple {
    owner: TraderId,
    raised: bool,
}

/// Rebuilds the solution by re-applying the recorded movements.
pub fn replay(trace: &Trace) -> Result<Solution> {
    let fail = |index: usize, message: String| Error::Replay { index, message };

    let mut events = trace.events.iter().enumerate();
    let (spec, cash0) = match events.next() {
        Some((_, TraceEvent::Init { spec, cash, .. })) => (spec.clone(), cash.clone()),
        _ => return Err(fail(0, "trace must start with an init event".into())),
    };

    let slots: BTreeMap<TraderId, usize> =
        spec.trader_ids().enumerate().map(|(k, t)| (t, k)).collect();
    let slot = |who: &TraderId| {
        slots
            .get(who)
            .copied()
            .ok_or_else(|| format!("unknown trader {who}"))
    };
    let mut cash = SharedDenom::new(slots.len());
    for t in cash0 {
        cash.add(slot(&t.trader).map_err(|m| fail(0, m))?, &t.amount);
    }
    let mut loose_good: Vec<u64> = spec
        .sellers
        .iter()
        .map(|s| s.endowment.good_count)
        .collect();
    let mut loose_right: Vec<u64> = spec.buyers.iter().map(|b| b.rights()).collect();
    let mut couples: Vec<ReplayCouple> = Vec::new();
    let mut p = Rational::one();
    let mut q = Rational::one();

    for (i, e) in events {
        match e {
            TraceEvent::Init { .. } => return Err(fail(i, "duplicate init event".into())),
            TraceEvent::DemandQuery { .. } => {}
            TraceEvent::OutbidPurchase {
                buyer,
                couple,
                from,
                paid,
                credited,
            } => {
                let item = couples
                    .get_mut(*couple as usize)
                    .ok_or_else(|| fail(i, format!("unknown couple {couple}")))?;
                if item.raised {
                    return Err(fail(i, format!("couple {couple} is not at base tier")));
                }
                if item.owner != *from {
                    return Err(fail(i, format!("couple {couple} is not owned by {from}")));
                }
                item.owner = *buyer;
                item.raised = true;
                // A buyback of one's own Couple settles net, so credit first.
                cash.add(slot(from).map_err(|m| fail(i, m))?, credited);
                slot(buyer)
                    .and_then(|k| debit(&mut cash, k, buyer, paid))
                    .map_err(|m| fail(i, m))?;
            }
            TraceEvent::CoupleFormed {
                buyer,
                couple,
                seller,
                right_from,
                paid,
                seller_credit,
            } => {
                if *couple as usize != couples.len() {
                    return Err(fail(i, format!("couple id {couple} out of sequence")));
                }
                let g = loose_good
                    .get_mut(seller.index())
                    .filter(|g| **g > 0)
                    .ok_or_else(|| fail(i, format!("{seller} has no loose Good")))?;
                *g -= 1;
                let r = loose_right
                    .get_mut(right_from.index())
                    .filter(|r| **r > 0)
                    .ok_or_else(|| fail(i, format!("{right_from} has no loose Right")))?;
                *r -= 1;
                couples.push(ReplayCouple {
                    owner: *buyer,
                    raised: true,
                });
                slot(buyer)
                    .and_then(|k| debit(&mut cash, k, buyer, paid))
                    .map_err(|m| fail(i, m))?;
                cash.add(slot(seller).map_err(|m| fail(i, m))?, seller_credit);
            }
            TraceEvent::PriceRaise { p: np, q: nq, .. } => {
                p = np.clone();
                q = nq.clone();
                for c in &mut couples {
                    c.raised = false;
                }
            }
            TraceEvent::CashTopup { trader, amount } => {
                cash.add(slot(trader).map_err(|m| fail(i, m))?, amount);
            }
            TraceEvent::Finalize { refunds, money } => {
                for t in refunds {
                    cash.add(slot(&t.trader).map_err(|m| fail(i, m))?, &t.amount);
                }
                let mut baskets = BTreeMap::new();
                for id in spec.trader_ids() {
                    let (good, rights) = match id {
                        TraderId::Buyer(_) => {
                            let k = couples.iter().filter(|c| c.owner == id).count() as u64;
                            (k, k)
                        }
                        TraderId::Seller(s) => (loose_good[s as usize], 0),
                    };
                    baskets.insert(
                        id,
                        Basket {
                            good_count: good,
                            rights_count: rights,
                            money: Rational::zero(),
                        },
                    );
                }
                for t in money {
                    slot(&t.trader)
                        .and_then(|k| debit(&mut cash, k, &t.trader, &t.amount))
                        .map_err(|m| fail(i, m))?;
                    baskets
                        .get_mut(&t.trader)
                        .ok_or_else(|| fail(i, format!("unknown trader {}", t.trader)))?
                        .money += &t.amount;
                }
                return Ok(Solution {
                    price_good: p,
                    price_right: q,
                    baskets,
                });
            }
        }
    }
    Err(fail(
        trace.len(),
        "trace ended without a finalize event".into(),
    ))
}

fn debit(
    cash: &mut SharedDenom,
    k: usize,
    who: &TraderId,
    amount: &Rational,
) -> std::result::Result<(), String> {
    cash.sub(k, amount);
    if cash.sums[k].is_negative() {
        return Err(format!("cash of {who} went negative ({})", cash.get(k)));
    }
    Ok(())
}
