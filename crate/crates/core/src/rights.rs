//! Stage-one rules splitting the offered volume of Right among buyers by claims.
//!
//! All rules are integral and deterministic. When claims cannot absorb the
//! volume (total claim below volume) every buyer receives exactly its claim
//! and the surplus rights are not issued.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClaimsProblem {
    volume: u64,
    claims: Vec<u64>,
}

impl ClaimsProblem {
    pub fn new(volume: u64, claims: Vec<u64>) -> Result<Self> {
        if volume == 0 {
            return Err(Error::DegenerateMarket);
        }
        if claims.iter().all(|&d| d == 0) {
            return Err(Error::ZeroClaims);
        }
        Ok(ClaimsProblem { volume, claims })
    }

    pub fn volume(&self) -> u64 {
        self.volume
    }

    pub fn claims(&self) -> &[u64] {
        &self.claims
    }

    pub fn total_claim(&self) -> u64 {
        self.claims.iter().sum()
    }

    fn saturated(&self) -> Option<RightsAllocation> {
        (self.total_claim() <= self.volume).then(|| RightsAllocation {
            rights: self.claims.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RightsAllocation {
    pub rights: Vec<u64>,
}

impl RightsAllocation {
    pub fn total(&self) -> u64 {
        self.rights.iter().sum()
    }
}

/// Largest-remainder apportionment of `V * D_b / sum(D)`; ties go to the lowest index.
pub fn proportional(p: &ClaimsProblem) -> RightsAllocation {
    if let Some(a) = p.saturated() {
        return a;
    }
    let total = p.total_claim() as u128;
    let v = p.volume as u128;
    let mut rights: Vec<u64> = Vec::with_capacity(p.claims.len());
    let mut remainders: Vec<(u128, usize)> = Vec::with_capacity(p.claims.len());
    for (i, &d) in p.claims.iter().enumerate() {
        let share = v * d as u128;
        rights.push((share / total) as u64);
        remainders.push((share % total, i));
    }
    let mut left = p.volume - rights.iter().sum::<u64>();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in &remainders {
        if left == 0 {
            break;
        }
        rights[i] += 1;
        left -= 1;
    }
    RightsAllocation { rights }
}

/// Water-filling on awards: everybody gets `min(D_b, level)` for the highest
/// feasible integer level; leftover units go to the largest remaining claims
/// first, lowest index among equals.
pub fn constrained_equal_awards(p: &ClaimsProblem) -> RightsAllocation {
    if let Some(a) = p.saturated() {
        return a;
    }
    let awarded = |level: u64| p.claims.iter().map(|&d| d.min(level)).sum::<u64>();
    // awarded(0) = 0 <= V and awarded(max D) = sum(D) > V.
    let mut lo = 0u64;
    let mut hi = *p.claims.iter().max().unwrap_or(&0);
    while lo + 1 < hi {
        let mid = lo + (hi - lo) / 2;
        if awarded(mid) <= p.volume {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let level = lo;
    let mut rights: Vec<u64> = p.claims.iter().map(|&d| d.min(level)).collect();
    let mut left = p.volume - rights.iter().sum::<u64>();
    let mut open: Vec<usize> = (0..p.claims.len())
        .filter(|&i| p.claims[i] > level)
        .collect();
    open.sort_by(|&a, &b| p.claims[b].cmp(&p.claims[a]).then(a.cmp(&b)));
    for i in open {
        if left == 0 {
            break;
        }
        rights[i] += 1;
        left -= 1;
    }
    RightsAllocation { rights }
}

/// Water-filling on losses: everybody gets `max(0, D_b - loss)` for the smallest
/// feasible integer loss; leftover units go one each, lowest index first.
pub fn constrained_equal_losses(p: &ClaimsProblem) -> RightsAllocation {
    if let Some(a) = p.saturated() {
        return a;
    }
    let awarded = |loss: u64| {
        p.claims
            .iter()
            .map(|&d| d.saturating_sub(loss))
            .sum::<u64>()
    };
    // awarded(0) = sum(D) > V and awarded(max D) = 0 <= V.
    let mut lo = 0u64;
    let mut hi = *p.claims.iter().max().unwrap_or(&0);
    while lo + 1 < hi {
        let mid = lo + (hi - lo) / 2;
        if awarded(mid) <= p.volume {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let loss = hi;
    let mut rights: Vec<u64> = p.claims.iter().map(|&d| d.saturating_sub(loss)).collect();
    let mut left = p.volume - rights.iter().sum::<u64>();
    for (i, &d) in p.claims.iter().enumerate() {
        if left == 0 {
            break;
        }
        if d >= loss && rights[i] < d {
            rights[i] += 1;
            left -= 1;
        }
    }
    RightsAllocation { rights }
}

/// Round-robin single units over buyers with unmet claims, lowest index first.
pub fn uniform(p: &ClaimsProblem) -> RightsAllocation {
    if let Some(a) = p.saturated() {
        return a;
    }
    let mut rights = vec![0u64; p.claims.len()];
    let mut left = p.volume;
    while left > 0 {
        for (i, &d) in p.claims.iter().enumerate() {
            if left == 0 {
                break;
            }
            if rights[i] < d {
                rights[i] += 1;
                left -= 1;
            }
        }
    }
    RightsAllocation { rights }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Mechanism {
    #[default]
    #[serde(rename = "proportional")]
    Proportional,
    #[serde(rename = "cea")]
    ConstrainedEqualAwards,
    #[serde(rename = "cel")]
    ConstrainedEqualLosses,
    #[serde(rename = "uniform")]
    Uniform,
}

impl Mechanism {
    pub const ALL: [Mechanism; 4] = [
        Mechanism::Proportional,
        Mechanism::ConstrainedEqualAwards,
        Mechanism::ConstrainedEqualLosses,
        Mechanism::Uniform,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mechanism::Proportional => "proportional",
            Mechanism::ConstrainedEqualAwards => "cea",
            Mechanism::ConstrainedEqualLosses => "cel",
            Mechanism::Uniform => "uniform",
        }
    }

    pub fn distribute(self, p: &ClaimsProblem) -> RightsAllocation {
        match self {
            Mechanism::Proportional => proportional(p),
            Mechanism::ConstrainedEqualAwards => constrained_equal_awards(p),
            Mechanism::ConstrainedEqualLosses => constrained_equal_losses(p),
            Mechanism::Uniform => uniform(p),
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mechanism::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownMechanism(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cp(v: u64, d: &[u64]) -> ClaimsProblem {
        ClaimsProblem::new(v, d.to_vec()).unwrap()
    }

    /// Brute force: every allocation with `a_b <= D_b` and `sum a = V`.
    fn all_allocations(v: u64, claims: &[u64]) -> Vec<Vec<u64>> {
        fn rec(i: usize, left: u64, claims: &[u64], cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
            if i == claims.len() {
                if left == 0 {
                    out.push(cur.clone());
                }
                return;
            }
            for a in 0..=claims[i].min(left) {
                cur.push(a);
                rec(i + 1, left - a, claims, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        rec(0, v, claims, &mut Vec::new(), &mut out);
        out
    }

    /// Leximin over the given per-buyer key, then prefer larger awards at lower indices.
    fn leximin_oracle(v: u64, claims: &[u64], key: impl Fn(usize, u64) -> i64) -> Vec<u64> {
        let mut best: Option<(Vec<i64>, Vec<u64>)> = None;
        for a in all_allocations(v, claims) {
            let mut k: Vec<i64> = a.iter().enumerate().map(|(i, &x)| key(i, x)).collect();
            k.sort();
            let better = match &best {
                None => true,
                Some((bk, ba)) => k > *bk || (k == *bk && a > *ba),
            };
            if better {
                best = Some((k, a));
            }
        }
        best.unwrap().1
    }

    #[test]
    fn proportional_examples() {
        assert_eq!(proportional(&cp(10, &[5, 3, 2])).rights, vec![5, 3, 2]);
        assert_eq!(proportional(&cp(10, &[7, 7, 6])).rights, vec![4, 3, 3]);
        assert_eq!(proportional(&cp(5, &[10, 0])).rights, vec![5, 0]);
    }

    #[test]
    fn cea_examples_match_leximin_oracle() {
        assert_eq!(
            constrained_equal_awards(&cp(6, &[4, 3, 1])).rights,
            vec![3, 2, 1]
        );
        assert_eq!(
            leximin_oracle(6, &[4, 3, 1], |_, a| a as i64),
            vec![3, 2, 1]
        );
        assert_eq!(
            constrained_equal_awards(&cp(9, &[3, 3, 3])).rights,
            vec![3, 3, 3]
        );
        assert_eq!(constrained_equal_awards(&cp(2, &[5, 5])).rights, vec![1, 1]);
    }

    #[test]
    fn cel_examples_match_loss_oracle() {
        assert_eq!(
            constrained_equal_losses(&cp(9, &[3, 3, 3])).rights,
            vec![3, 3, 3]
        );
        assert_eq!(constrained_equal_losses(&cp(2, &[5, 5])).rights, vec![1, 1]);
        assert_eq!(constrained_equal_losses(&cp(4, &[5, 3])).rights, vec![3, 1]);
        let claims = [5u64, 3];
        assert_eq!(
            leximin_oracle(4, &claims, |i, a| -((claims[i] - a) as i64)),
            vec![3, 1]
        );
    }

    #[test]
    fn uniform_examples() {
        assert_eq!(uniform(&cp(4, &[9, 9])).rights, vec![2, 2]);
        assert_eq!(uniform(&cp(3, &[9, 9])).rights, vec![2, 1]);
        assert_eq!(uniform(&cp(5, &[1, 9])).rights, vec![1, 4]);
    }

    #[test]
    fn cea_agrees_with_leximin_oracle_on_small_problems() {
        for v in 1..=7u64 {
            for a in 0..=4u64 {
                for b in 0..=4u64 {
                    for c in 0..=4u64 {
                        let claims = [a, b, c];
                        if claims.iter().sum::<u64>() < v {
                            continue;
                        }
                        let got = constrained_equal_awards(&cp(v, &claims)).rights;
                        let mut want_sorted = leximin_oracle(v, &claims, |_, x| x as i64);
                        let mut got_sorted = got.clone();
                        want_sorted.sort();
                        got_sorted.sort();
                        assert_eq!(got_sorted, want_sorted, "V={v} D={claims:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn under_subscribed_claims_are_met_exactly() {
        for mech in Mechanism::ALL {
            assert_eq!(mech.distribute(&cp(10, &[2, 3])).rights, vec![2, 3]);
        }
    }

    #[test]
    fn zero_claims_rejected() {
        assert!(matches!(
            ClaimsProblem::new(4, vec![0, 0]),
            Err(Error::ZeroClaims)
        ));
    }

    #[test]
    fn mechanism_names_round_trip() {
        for m in Mechanism::ALL {
            assert_eq!(m.name().parse::<Mechanism>().unwrap(), m);
        }
        assert!("dictator".parse::<Mechanism>().is_err());
    }
}
