//! Multi-round crisis: the same market repeated with myopic buyers.
//!
//! Supply, claims and utilities stay fixed across rounds, so the rights
//! allocation is the same every round. What changes is each buyer's
//! willingness to spend on Good: in a restricted crisis the proceeds from
//! Right sold in one round raise the willingness for the next.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::auction::{solve_with, SolveOutput, SolverConfig};
use crate::error::{Error, Result};
use crate::frustration::frustration;
use crate::market::{Basket, MarketSpec, Mode, TraderId};
use crate::rational::Rational;
use crate::rights::{ClaimsProblem, Mechanism};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrisisSpec {
    /// Market repeated every round. Its rights counts are overwritten by the
    /// mechanism; a buyer's `spend_cap`, if set, is its round-1 willingness,
    /// otherwise its Money.
    pub template: MarketSpec,
    pub rounds: usize,
    pub mode: Mode,
    pub mechanism: Mechanism,
}

impl CrisisSpec {
    pub fn initial_willingness(&self) -> Vec<Rational> {
        self.template
            .buyers
            .iter()
            .map(|b| b.spend_cap.clone().unwrap_or_else(|| b.money().clone()))
            .collect()
    }

    /// The rights allocation used in every round.
    pub fn rights(&self) -> Result<Vec<u64>> {
        let volume = self.template.offered_volume()?;
        let claims = self.template.buyers.iter().map(|b| b.claim()).collect();
        let problem = ClaimsProblem::new(volume, claims)?;
        Ok(self.mechanism.distribute(&problem).rights)
    }

    /// The single-round market of round `tau` given the buyers' willingness.
    pub fn market_for(&self, rights: &[u64], willingness: &[Rational]) -> MarketSpec {
        let mut m = self.template.clone();
        m.mode = self.mode;
        for (i, b) in m.buyers.iter_mut().enumerate() {
            b.endowment.rights_count = rights[i];
            b.spend_cap = Some(willingness[i].clone());
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuyerRound {
    pub buyer: TraderId,
    pub assigned: u64,
    pub couples: u64,
    /// `n_b = max(0, R_b - couples held at the end)`.
    pub rights_sold: u64,
    /// `z_b = q n_b`.
    pub rights_proceeds: Rational,
    /// Willingness in force during this round.
    pub willingness: Rational,
    pub f: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrisisRoundRecord {
    pub tau: usize,
    pub price_good: Rational,
    pub price_right: Rational,
    pub price_couple: Rational,
    pub baskets: BTreeMap<TraderId, Basket>,
    pub buyers: Vec<BuyerRound>,
    pub iterations: u64,
    pub steps: u64,
}

impl CrisisRoundRecord {
    pub fn frustration(&self, b: TraderId) -> Option<&Rational> {
        self.buyers.iter().find(|r| r.buyer == b).map(|r| &r.f)
    }
}

/// Runs every round, handing each record and the round's solver output to `sink`
/// as soon as the round is solved.
pub fn run_crisis_streaming<F>(spec: &CrisisSpec, mut sink: F) -> Result<Vec<CrisisRoundRecord>>
where
    F: FnMut(&CrisisRoundRecord, &SolveOutput) -> Result<()>,
{
    if spec.rounds == 0 {
        return Err(Error::InvalidCrisis(
            "a crisis needs at least one round".into(),
        ));
    }
    let rights = spec.rights()?;
    let mut willingness = spec.initial_willingness();
    let mut records = Vec::with_capacity(spec.rounds);
    for tau in 1..=spec.rounds {
        let market = spec.market_for(&rights, &willingness);
        let out =
            solve_with(&market, &SolverConfig::default()).map_err(|e| Error::CrisisRound {
                round: tau,
                source: Box::new(e),
            })?;
        let s = &out.solution;
        let mut buyers = Vec::with_capacity(rights.len());
        for (i, &assigned) in rights.iter().enumerate() {
            let id = TraderId::buyer(i);
            let couples = s.basket(id).map_or(0, |b| b.good_count);
            let rights_sold = assigned.saturating_sub(couples);
            buyers.push(BuyerRound {
                buyer: id,
                assigned,
                couples,
                rights_sold,
                rights_proceeds: &s.price_right * rights_sold,
                willingness: willingness[i].clone(),
                f: frustration(assigned, couples),
            });
        }
        let record = CrisisRoundRecord {
            tau,
            price_good: s.price_good.clone(),
            price_right: s.price_right.clone(),
            price_couple: s.price_couple(),
            baskets: s.baskets.clone(),
            buyers,
            iterations: out.stats.iterations,
            steps: out.stats.steps,
        };
        if spec.mode == Mode::Restricted {
            for (w, r) in willingness.iter_mut().zip(&record.buyers) {
                *w += &r.rights_proceeds;
            }
        }
        sink(&record, &out)?;
        records.push(record);
    }
    Ok(records)
}

pub fn run_crisis(spec: &CrisisSpec) -> Result<Vec<CrisisRoundRecord>> {
    run_crisis_streaming(spec, |_, _| Ok(()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrisisClause {
    /// From the second round on, no buyer's frustration exceeds 1/2.
    FrustrationCap,
    /// Each buyer's frustration never increases from one round to the next.
    FrustrationMonotone,
    /// The terminal Couple price at most doubles from one round to the next.
    PriceDoubling,
}

impl fmt::Display for CrisisClause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CrisisClause::FrustrationCap => "frustration at most 1/2 after the first round",
            CrisisClause::FrustrationMonotone => "frustration nonincreasing across rounds",
            CrisisClause::PriceDoubling => "Couple price at most doubles between rounds",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrisisViolation {
    pub tau: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buyer: Option<TraderId>,
    pub clause: CrisisClause,
    pub detail: String,
}

impl fmt::Display for CrisisViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "round {}", self.tau)?;
        if let Some(b) = self.buyer {
            write!(f, " [{b}]")?;
        }
        write!(f, ": {} ({})", self.clause, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrisisReport {
    pub rounds: usize,
    pub violations: Vec<CrisisViolation>,
}

impl CrisisReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the crisis frustration and price guarantees on a sequence of round records.
pub fn check_crisis(records: &[CrisisRoundRecord]) -> CrisisReport {
    let half = Rational::new(1, 2);
    let mut violations = Vec::new();
    for (idx, rec) in records.iter().enumerate() {
        if idx >= 1 {
            for r in rec.buyers.iter().filter(|r| r.f > half) {
                violations.push(CrisisViolation {
                    tau: rec.tau,
                    buyer: Some(r.buyer),
                    clause: CrisisClause::FrustrationCap,
                    detail: format!("f = {}", r.f),
                });
            }
        }
        let Some(prev) = idx.checked_sub(1).map(|i| &records[i]) else {
            continue;
        };
        for r in &rec.buyers {
            if let Some(before) = prev.frustration(r.buyer) {
                if r.f > *before {
                    violations.push(CrisisViolation {
                        tau: rec.tau,
                        buyer: Some(r.buyer),
                        clause: CrisisClause::FrustrationMonotone,
                        detail: format!("f rose from {before} to {}", r.f),
                    });
                }
            }
        }
        let limit = &prev.price_couple * 2u64;
        if rec.price_couple > limit {
            violations.push(CrisisViolation {
                tau: rec.tau,
                buyer: None,
                clause: CrisisClause::PriceDoubling,
                detail: format!("c went from {} to {}", prev.price_couple, rec.price_couple),
            });
        }
    }
    CrisisReport {
        rounds: records.len(),
        violations,
    }
}
