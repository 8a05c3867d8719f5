//! File formats, the record file store and the experiment harness on top of
//! `pwsignal-core`.

pub mod error;
pub mod experiment;
pub mod formats;
pub mod store;

pub use error::{Error, Result};
pub use experiment::{attack_report, run_robustness, run_sweep, Mode, SketchParams, SweepSpec};
pub use store::FileStore;
