//! Market equilibria with buying rights.
//!
//! A single-round market has sellers offering indivisible Good, buyers holding
//! Money and claims, and a stage that issues one Right per offered Good. A buyer
//! may end the market holding no more Good than Right. This crate distributes
//! the rights, approximates the market's clearing prices with an ascending
//! auction over Good+Right pairs, verifies the result against a brute-force
//! oracle, and measures how far buyers fall short of their assigned rights,
//! both for one market and across a multi-round crisis.

pub mod auction;
pub mod crisis;
pub mod error;
pub mod frustration;
pub mod market;
pub mod oracle;
pub mod rational;
pub mod report;
pub mod rights;
pub mod scenario;

pub use auction::{solve, solve_with, SolveOutput, SolveStats, SolverConfig};
pub use error::{Error, Result};
pub use market::{Basket, Buyer, MarketSpec, Mode, Seller, Solution, TraderId};
pub use rational::Rational;
pub use rights::Mechanism;
