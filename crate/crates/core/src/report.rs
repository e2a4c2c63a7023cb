//! Report writers: full JSON records, a per-buyer CSV table and a plain-text
//! summary. Everything here is deterministic; no timestamps, no hash maps.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::auction::{SolveOutput, SolveStats};
use crate::crisis::{CrisisReport, CrisisRoundRecord};
use crate::error::Result;
use crate::frustration::{market_frustration_report, FrustrationReport};
use crate::market::{MarketSpec, Mode, Solution, TraderId};
use crate::oracle::{verify_solution, VerificationReport};
use crate::rational::Rational;

/// Everything known about one solved market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketReport {
    pub epsilon: Rational,
    pub mode: Mode,
    pub mechanism: String,
    pub seed: u64,
    pub rights: Vec<u64>,
    pub solution: Solution,
    pub stats: SolveStats,
    pub verification: VerificationReport,
    pub frustration: FrustrationReport,
}

impl MarketReport {
    pub fn new(m: &MarketSpec, mechanism: &str, seed: u64, out: &SolveOutput) -> Result<Self> {
        Ok(MarketReport {
            epsilon: m.epsilon.clone(),
            mode: m.mode,
            mechanism: mechanism.to_string(),
            seed,
            rights: m.buyers.iter().map(|b| b.rights()).collect(),
            solution: out.solution.clone(),
            stats: out.stats.clone(),
            verification: verify_solution(m, &out.solution, Some(&out.stats)),
            frustration: market_frustration_report(m, &out.solution, Some(&out.trace))?,
        })
    }

    pub fn rows(&self) -> Vec<BuyerRow> {
        buyer_rows(&self.frustration)
    }
}

/// One line of the per-buyer CSV table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuyerRow {
    pub buyer: TraderId,
    pub assigned: u64,
    pub acquired: u64,
    pub f: Rational,
    pub pf: Option<Rational>,
}

pub fn buyer_rows(fr: &FrustrationReport) -> Vec<BuyerRow> {
    fr.records
        .iter()
        .map(|r| BuyerRow {
            buyer: r.buyer,
            assigned: r.assigned,
            acquired: r.acquired,
            f: r.f.clone(),
            pf: r.pf.clone(),
        })
        .collect()
}

pub fn write_buyer_csv<W: Write>(rows: &[BuyerRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

/// A crisis buyer row: the market table plus the round and willingness.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrisisRow {
    pub tau: usize,
    pub buyer: TraderId,
    pub assigned: u64,
    pub acquired: u64,
    pub f: Rational,
    pub willingness: Rational,
    pub rights_sold: u64,
    pub price_couple: Rational,
}

pub fn crisis_rows(records: &[CrisisRoundRecord]) -> Vec<CrisisRow> {
    records
        .iter()
        .flat_map(|rec| {
            rec.buyers.iter().map(move |r| CrisisRow {
                tau: rec.tau,
                buyer: r.buyer,
                assigned: r.assigned,
                acquired: r.couples,
                f: r.f.clone(),
                willingness: r.willingness.clone(),
                rights_sold: r.rights_sold,
                price_couple: rec.price_couple.clone(),
            })
        })
        .collect()
}

pub fn write_crisis_csv<W: Write>(rows: &[CrisisRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrisisRunReport {
    pub epsilon: Rational,
    pub mode: Mode,
    pub mechanism: String,
    pub seed: u64,
    pub rounds: Vec<CrisisRoundRecord>,
    pub check: CrisisReport,
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    fs::write(path, to_json(v)?)?;
    Ok(())
}

/// Exact when short, otherwise a decimal approximation. Tables only; the JSON
/// records keep the exact values.
fn num(r: &Rational) -> String {
    let exact = r.to_string();
    if exact.len() <= 10 {
        exact
    } else {
        format!("{:.4}", r.to_f64())
    }
}

fn opt(r: &Option<Rational>) -> String {
    r.as_ref().map_or_else(|| "-".to_string(), num)
}

pub fn market_summary(r: &MarketReport) -> String {
    let s = &r.solution;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "market  eps={}  mode={}  mechanism={}",
        r.epsilon, r.mode, r.mechanism
    );
    let _ = writeln!(
        out,
        "prices  p={}  q={}  c={}",
        num(&s.price_good),
        num(&s.price_right),
        num(&s.price_couple())
    );
    let _ = writeln!(
        out,
        "effort  iterations={}  rounds={}  steps={}",
        r.stats.iterations, r.stats.rounds, r.stats.steps
    );
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:<6} {:>8} {:>8} {:>10} {:>10} {:>12} {:>12}",
        "buyer", "assigned", "acquired", "f", "pf", "utility", "oracle"
    );
    for (row, check) in r.rows().iter().zip(&r.verification.buyers) {
        let _ = writeln!(
            out,
            "{:<6} {:>8} {:>8} {:>10} {:>10} {:>12} {:>12}",
            row.buyer.to_string(),
            row.assigned,
            row.acquired,
            num(&row.f),
            opt(&row.pf),
            num(&check.achieved_utility),
            num(&check.oracle_utility),
        );
    }
    let _ = writeln!(out);
    if r.verification.passed() {
        let _ = writeln!(out, "verification: pass");
    } else {
        let _ = writeln!(out, "verification: FAIL");
        for v in &r.verification.violations {
            let _ = writeln!(out, "  {v}");
        }
    }
    if !r.stats.cash_audit.violations.is_empty() {
        let _ = writeln!(out, "cash audit: FAIL");
        for v in &r.stats.cash_audit.violations {
            let _ = writeln!(out, "  {v}");
        }
    }
    for b in &r.frustration.pf_cap_violations {
        let _ = writeln!(out, "potential frustration above 1/2: {b}");
    }
    out
}

pub fn verification_summary(v: &VerificationReport, fr: &FrustrationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<6} {:>8} {:>8} {:>10}",
        "buyer", "assigned", "acquired", "f"
    );
    for row in buyer_rows(fr) {
        let _ = writeln!(
            out,
            "{:<6} {:>8} {:>8} {:>10}",
            row.buyer.to_string(),
            row.assigned,
            row.acquired,
            num(&row.f)
        );
    }
    if v.passed() {
        let _ = writeln!(out, "verification: pass");
    } else {
        let _ = writeln!(out, "verification: FAIL");
        for x in &v.violations {
            let _ = writeln!(out, "  {x}");
        }
    }
    for c in &v.skipped {
        let _ = writeln!(out, "  skipped (spend cap binds): {c}");
    }
    out
}

pub fn crisis_summary(r: &CrisisRunReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "crisis  eps={}  mode={}  mechanism={}  rounds={}",
        r.epsilon,
        r.mode,
        r.mechanism,
        r.rounds.len()
    );
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:>3} {:<6} {:>8} {:>8} {:>10} {:>14} {:>14}",
        "tau", "buyer", "assigned", "acquired", "f", "willingness", "c"
    );
    for row in crisis_rows(&r.rounds) {
        let _ = writeln!(
            out,
            "{:>3} {:<6} {:>8} {:>8} {:>10} {:>14} {:>14}",
            row.tau,
            row.buyer.to_string(),
            row.assigned,
            row.acquired,
            num(&row.f),
            num(&row.willingness),
            num(&row.price_couple),
        );
    }
    let _ = writeln!(out);
    if r.check.passed() {
        let _ = writeln!(out, "crisis checks: pass");
    } else {
        let _ = writeln!(out, "crisis checks: FAIL");
        for v in &r.check.violations {
            let _ = writeln!(out, "  {v}");
        }
    }
    out
}
