//! Exact static-CVaR analysis for finite-horizon tabular MDPs.
//!
//! Everything is computed over arbitrary-precision rationals: return
//! distributions and CVaR curves ([`static_cvar`]), the risk-level value
//! recursion and its discretized optimizer ([`risk_dp`]), consistency of
//! risk-level assignments ([`consistency`]) and uniform-optimality
//! conflicts ([`uniform`]). Piecewise-linear functions with jumps live in
//! [`pwl`].

pub mod consistency;
pub mod error;
pub mod interval;
pub mod mdp;
pub mod pwl;
pub mod random;
pub mod rational;
pub mod risk_dp;
pub mod static_cvar;
pub mod uniform;

pub use error::{Error, Result};
pub use interval::Interval;
pub use rational::Rational;
