//! Covert messaging over a UTXO ledger.
//!
//! A sender leaks a private key to one receiver through two ordinary-looking
//! transactions, after which both sides derive the same sequence of
//! addresses. Each message segment rides in the ECDSA nonce of an input
//! spent from one of those addresses. Transaction shapes, amounts and fees
//! are drawn from a model of real traffic so the carriers blend in.
//!
//! Modules, bottom up: [`crypto`], [`hd`], [`tx`], [`chain`],
//! [`masquerade`], [`eval`], [`channel`].

pub mod chain;
pub mod channel;
pub mod crypto;
pub mod eval;
pub mod hd;
pub mod masquerade;
pub mod tx;
