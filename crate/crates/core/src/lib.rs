//! Energy-efficient sleeping policies for tracking a single object through a
//! sensor network.
//!
//! The library covers the whole pipeline: network models ([`model`]), belief
//! filtering ([`filter`]), tracking-cost increment tables ([`tdelta`]),
//! per-sensor sleeping policies ([`policy`]), a hypothesis-testing lower bound
//! on the achievable tradeoff ([`lowerbound`]) and Monte-Carlo evaluation of
//! energy versus tracking cost ([`sim`]).

pub mod config;
pub mod error;
pub mod filter;
pub mod io;
pub mod lowerbound;
pub mod model;
pub mod policy;
pub mod sim;
pub mod tdelta;

pub use error::{Error, Result};

// The guide's snippets run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/networks.md")]
    mod networks {}
    #[doc = include_str!("../../../book/src/beliefs.md")]
    mod beliefs {}
    #[doc = include_str!("../../../book/src/tdelta.md")]
    mod tdelta {}
    #[doc = include_str!("../../../book/src/policies.md")]
    mod policies {}
    #[doc = include_str!("../../../book/src/lower-bound.md")]
    mod lower_bound {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
