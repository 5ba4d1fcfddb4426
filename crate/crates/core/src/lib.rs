//! Invoice financing for upstream suppliers: discrete Bayesian decision
//! networks coupled to simulated private blockchains with atomic crosschain
//! settlement.

pub mod bn;
pub mod flow;
pub mod ledger;
pub mod model;
pub mod oobn;
pub mod xchain;
