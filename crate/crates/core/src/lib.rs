//! Password signaling as a Stackelberg game between an authentication server
//! and a rational offline attacker.
//!
//! The server stores a noisy signal of each password's strength next to its
//! salted hash. An attacker who steals the database updates its beliefs per
//! signal and picks a per-signal guessing budget; the server picks the signal
//! matrix that minimises the fraction of cracked accounts.
//!
//! This crate is `no_std` (with `alloc`): file formats, IO and the experiment
//! harness live in the `pwsignal` crate.
#![no_std]

extern crate alloc;

pub mod authsim;
pub mod corpus;
pub mod dpsketch;
pub mod error;
pub mod game;
pub mod optimizer;
pub mod strength;

pub use corpus::{EmpiricalDistribution, EquivalenceClass, EquivalenceClassList};
pub use dpsketch::DpCountSketch;
pub use error::{Error, Result};
pub use game::{AttackPlan, AttackerEconomy, BudgetPlan, GameInstance, LabeledClass, SignalMatrix};
pub use optimizer::{gen_sig_mat, minimize, simplex_repair, OptimizerConfig};
pub use strength::{label_strength, label_strength_top_k, FrequencyOracle, StrengthThresholds};
