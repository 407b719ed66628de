//! Deterministic simulator of credit-based voltage-regulator election in
//! residential microgrids, coordinated either by a central authority or by a
//! smart contract on a private proof-of-work chain.

pub mod chain;
pub mod control;
pub mod costs;
pub mod digest;
pub mod grid;
pub mod harness;
pub mod netsim;
pub mod streams;
