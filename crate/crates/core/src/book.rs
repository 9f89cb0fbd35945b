//! The guide chapters under `book/src` double as doc-tests: every Rust code
//! fence in the book compiles and runs under `cargo test --doc`, which keeps
//! the narrative and the library in lockstep.

#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}

#[doc = include_str!("../../../book/src/equilibrium.md")]
pub mod equilibrium {}

#[doc = include_str!("../../../book/src/pricing.md")]
pub mod pricing {}

#[doc = include_str!("../../../book/src/frontier.md")]
pub mod frontier {}

#[doc = include_str!("../../../book/src/solving.md")]
pub mod solving {}

#[doc = include_str!("../../../book/src/fairness.md")]
pub mod fairness {}

#[doc = include_str!("../../../book/src/tatonnement.md")]
pub mod tatonnement {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
