//! Private proof-of-work chain carrying the per-feeder election contracts.

pub mod block;
pub mod contract;
pub mod update;
pub mod view;

pub use block::{agent_mining_rate, next_block_delay, Block, MiningRule, Pow};
pub use contract::{
    apply_block, apply_update, check_rules, replay_chain, validate_update, ChainError, ContractBook, ContractState,
    Election, Genesis, Phase, Rejection,
};
pub use update::{Action, ContractUpdate, KeyStub, UpdateKind, UpdateSigner};
pub use view::{assemble_block, verify_block, ChainView, Extension, Receipt, ViewStats};
