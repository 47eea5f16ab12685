//! Tail-aware normalizing-flow density estimation.
//!
//! The crate is organised bottom-up:
//!
//! - [`autograd`]: scalar reverse-mode tape, conditioner networks, and the
//!   special functions (`lgamma`, `digamma`, `erf`).
//! - [`dists`]: closed-form univariate laws and iid product sources.
//! - [`tailquant`]: empirical quantiles, tail-coefficient estimation, tail
//!   classification, moment bounds, and the 1-D increasing rearrangement.
//! - [`flow`]: affine triangular layers, stacks, change-of-variables
//!   log-density, and the tail-adaptive student-t source.
//! - [`trainer`]: maximum-likelihood training with Adam.
//! - [`synthdata`]: synthetic targets and CSV ingestion.
//!
//! The guide in `book/` walks through the concepts; its code listings are
//! compiled and run as doctests of this crate.

pub mod autograd;
pub mod dists;
pub mod flow;
pub mod synthdata;
pub mod tailquant;
pub mod trainer;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/quantiles.md")]
    mod quantiles {}
    #[doc = include_str!("../../../book/src/rearrangement.md")]
    mod rearrangement {}
    #[doc = include_str!("../../../book/src/tail_estimation.md")]
    mod tail_estimation {}
    #[doc = include_str!("../../../book/src/affine_flows.md")]
    mod affine_flows {}
    #[doc = include_str!("../../../book/src/tail_adaptive.md")]
    mod tail_adaptive {}
    #[doc = include_str!("../../../book/src/autodiff.md")]
    mod autodiff {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
