//! Scenario files and random instance generation.
//!
//! A scenario is a JSON document describing sellers, buyers and the run
//! parameters. Buyers declare claims; their rights come from the mechanism.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::crisis::CrisisSpec;
use crate::error::{Error, Result};
use crate::market::{check_valid_endowments, Buyer, MarketSpec, Mode, Seller, TraderId};
use crate::rational::Rational;
use crate::rights::{ClaimsProblem, Mechanism};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Market,
    Crisis,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SellerSpec {
    pub good: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuyerSpec {
    pub money: Rational,
    pub claim: u64,
    pub alpha: Rational,
    pub marginals: Vec<Rational>,
    /// Cap on spending for Good; round-1 willingness in a crisis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub willingness: Option<Rational>,
}

fn one_round() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub sellers: Vec<SellerSpec>,
    pub buyers: Vec<BuyerSpec>,
    pub epsilon: Rational,
    #[serde(default)]
    pub mode: Mode,
    pub mechanism: String,
    #[serde(default = "one_round")]
    pub rounds: usize,
    #[serde(default)]
    pub seed: u64,
    /// Directory for reports, relative to the working directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl Scenario {
    /// Parses without validating.
    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Scenario {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    pub fn mechanism(&self) -> Result<Mechanism> {
        self.mechanism.parse()
    }

    /// Builds the single-round market, rights distributed by the mechanism.
    /// Checks structure but not endowment validity.
    pub fn market_spec(&self) -> Result<MarketSpec> {
        let mechanism = self.mechanism()?;
        if self.buyers.is_empty() {
            return Err(Error::NoBuyers);
        }
        let sellers: Vec<Seller> = self.sellers.iter().map(|s| Seller::new(s.good)).collect();
        let volume: u64 = self.sellers.iter().map(|s| s.good).sum();
        let claims: Vec<u64> = self.buyers.iter().map(|b| b.claim).collect();
        let rights = mechanism
            .distribute(&ClaimsProblem::new(volume, claims)?)
            .rights;

        let mut buyers = Vec::with_capacity(self.buyers.len());
        for (i, (spec, r)) in self.buyers.iter().zip(rights).enumerate() {
            let invalid = |reason: String| Error::InvalidBuyer {
                buyer: TraderId::buyer(i),
                reason,
            };
            if spec.claim != spec.marginals.len() as u64 {
                return Err(invalid(format!(
                    "claim {} does not match {} marginals",
                    spec.claim,
                    spec.marginals.len()
                )));
            }
            let mut b = Buyer::new(
                spec.money.clone(),
                spec.marginals.clone(),
                spec.alpha.clone(),
                r,
            )
            .map_err(invalid)?;
            if let Some(w) = &spec.willingness {
                if w.is_negative() {
                    return Err(invalid(format!(
                        "willingness must be non-negative, got {w}"
                    )));
                }
                b.spend_cap = Some(w.clone());
            }
            buyers.push(b);
        }
        MarketSpec::new(sellers, buyers, self.epsilon.clone(), self.mode)
    }

    pub fn crisis_spec(&self) -> Result<CrisisSpec> {
        Ok(CrisisSpec {
            template: self.market_spec()?,
            rounds: self.rounds,
            mode: self.mode,
            mechanism: self.mechanism()?,
        })
    }

    /// Full validation: mechanism name, market structure, then endowment validity.
    pub fn validate(&self) -> Result<()> {
        self.mechanism()?;
        if self.kind == ScenarioKind::Crisis && self.rounds == 0 {
            return Err(Error::InvalidCrisis(
                "a crisis needs at least one round".into(),
            ));
        }
        let m = self.market_spec()?;
        check_valid_endowments(&m).into_result()
    }

    pub fn from_market(m: &MarketSpec, mechanism: Mechanism, seed: u64) -> Self {
        Scenario {
            kind: ScenarioKind::Market,
            sellers: m
                .sellers
                .iter()
                .map(|s| SellerSpec {
                    good: s.endowment.good_count,
                })
                .collect(),
            buyers: m
                .buyers
                .iter()
                .map(|b| BuyerSpec {
                    money: b.money().clone(),
                    claim: b.claim(),
                    alpha: b.alpha().clone(),
                    marginals: b.good_utility.marginals().to_vec(),
                    willingness: b.spend_cap.clone(),
                })
                .collect(),
            epsilon: m.epsilon.clone(),
            mode: m.mode,
            mechanism: mechanism.name().to_string(),
            rounds: 1,
            seed,
            out: None,
        }
    }
}

/// Reads, parses and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Scenario {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let sc = Scenario::from_json(&text, path)?;
    sc.validate()?;
    Ok(sc)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenParams {
    pub buyers: usize,
    pub sellers: usize,
    pub vmax: u64,
    /// Largest claim; defaults to `vmax` when zero.
    pub dmax: u64,
    pub epsilon: Rational,
    pub mode: Mode,
    pub mechanism: Mechanism,
}

impl GenParams {
    pub fn new(buyers: usize, sellers: usize, vmax: u64) -> Self {
        GenParams {
            buyers,
            sellers,
            vmax,
            dmax: 0,
            epsilon: Rational::new(1, 10),
            mode: Mode::Unrestricted,
            mechanism: Mechanism::Proportional,
        }
    }
}

const ALPHAS: [(i64, i64); 4] = [(1, 2), (1, 1), (1, 1), (2, 1)];

/// Random scenario whose endowments are valid by construction.
///
/// The offered volume is at least 2 whenever `vmax` allows, and claims are
/// raised until they cover it. The first `R_b` marginals of each buyer lie
/// strictly above `2 alpha`, and Money exceeds both `4 R_b` and `2 u(D_b) / alpha`.
pub fn generate_scenario(seed: u64, params: &GenParams) -> Result<Scenario> {
    if params.buyers == 0 {
        return Err(Error::Generator("at least one buyer is required".into()));
    }
    if params.sellers == 0 {
        return Err(Error::Generator("at least one seller is required".into()));
    }
    if params.vmax < params.sellers as u64 {
        return Err(Error::Generator(format!(
            "vmax {} leaves some of the {} sellers without Good",
            params.vmax, params.sellers
        )));
    }
    let dmax = if params.dmax == 0 {
        params.vmax
    } else {
        params.dmax
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let lowest = (params.sellers as u64).max(params.vmax.min(2));
    let ceiling = params.vmax.min(dmax * params.buyers as u64).max(lowest);
    let volume = rng.gen_range(lowest..=ceiling);
    let mut goods = vec![1u64; params.sellers];
    for _ in params.sellers as u64..volume {
        let s = rng.gen_range(0..params.sellers);
        goods[s] += 1;
    }

    let mut claims: Vec<u64> = (0..params.buyers)
        .map(|_| rng.gen_range(1..=dmax))
        .collect();
    while claims.iter().sum::<u64>() < volume {
        let open: Vec<usize> = (0..claims.len()).filter(|&i| claims[i] < dmax).collect();
        let i = open[rng.gen_range(0..open.len())];
        claims[i] += 1;
    }
    let rights = params
        .mechanism
        .distribute(&ClaimsProblem::new(volume, claims.clone())?)
        .rights;

    let mut buyers = Vec::with_capacity(params.buyers);
    for (&claim, &r) in claims.iter().zip(&rights) {
        let (an, ad) = ALPHAS[rng.gen_range(0..ALPHAS.len())];
        let alpha = Rational::new(an, ad);
        // Marginals in quarter units of alpha.
        let mut units: Vec<i64> = (0..claim)
            .map(|k| {
                if k < r {
                    8 + rng.gen_range(1..=32)
                } else {
                    rng.gen_range(1..=40)
                }
            })
            .collect();
        units.sort_unstable_by(|a, b| b.cmp(a));
        let marginals: Vec<Rational> = units
            .iter()
            .map(|&u| &alpha * &Rational::new(u, 4))
            .collect();
        let total_units: i64 = units.iter().sum();
        // 2 u(D) / alpha = total_units / 2.
        let floor = (4 * r as i64).max(total_units / 2);
        let money = floor + 1 + rng.gen_range(0..=10);
        buyers.push(BuyerSpec {
            money: Rational::from_integer(money),
            claim,
            alpha,
            marginals,
            willingness: None,
        });
    }

    Ok(Scenario {
        kind: ScenarioKind::Market,
        sellers: goods.into_iter().map(|good| SellerSpec { good }).collect(),
        buyers,
        epsilon: params.epsilon.clone(),
        mode: params.mode,
        mechanism: params.mechanism.name().to_string(),
        rounds: 1,
        seed,
        out: None,
    })
}

/// Random measurable restricted crisis mixing rich and poor buyers.
///
/// Every buyer values Good highly (flat marginals well above `2 alpha`), so
/// spending is limited by willingness rather than utility. Rich buyers are
/// willing to pay 2 to 4 per unit of their claim; poor buyers start with a
/// willingness of at most half their rights at the initial price.
pub fn generate_crisis_scenario(seed: u64, params: &GenParams, rounds: usize) -> Result<Scenario> {
    if params.buyers < 2 {
        return Err(Error::Generator(
            "a mixed crisis needs at least two buyers".into(),
        ));
    }
    let mut sc = generate_scenario(seed, params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c415);
    let m = sc.market_spec()?;
    let poor_first = rng.gen_bool(0.5);
    for (i, (spec, b)) in sc.buyers.iter_mut().zip(&m.buyers).enumerate() {
        let (an, ad) = ALPHAS[rng.gen_range(0..ALPHAS.len())];
        let alpha = Rational::new(an, ad);
        let mut units: Vec<i64> = (0..spec.claim).map(|_| rng.gen_range(40..=60)).collect();
        units.sort_unstable_by(|a, b| b.cmp(a));
        let total_units: i64 = units.iter().sum();
        let money = (4 * b.rights() as i64).max(2 * total_units) + 1 + rng.gen_range(0..=10);
        let poor = (i % 2 == 0) == poor_first;
        let willingness = if poor {
            let half = (b.rights() / 2).max(1) as i64;
            Rational::new(rng.gen_range(1..=2 * half), 2)
        } else {
            Rational::from_integer(rng.gen_range(2..=4) * spec.claim as i64)
        };
        spec.marginals = units
            .iter()
            .map(|&u| &alpha * &Rational::from_integer(u))
            .collect();
        spec.alpha = alpha;
        spec.money = Rational::from_integer(money);
        spec.willingness = Some(willingness);
    }
    sc.kind = ScenarioKind::Crisis;
    sc.mode = Mode::Restricted;
    sc.rounds = rounds;
    Ok(sc)
}

pub fn generate_instance(seed: u64, params: &GenParams) -> Result<MarketSpec> {
    generate_scenario(seed, params)?.market_spec()
}
