//! A precoding laboratory for multi-user massive MIMO downlink.
//!
//! The crate bundles, on top of one small complex-matrix / autodiff core:
//!
//! - classical precoders and rate metrics: zero forcing, the iterative
//!   WMMSE solver, and PE-AltMin hybrid factorization ([`precoding`]);
//! - a synthetic multi-site clustered channel generator with CSI estimation
//!   error and transmit-power-aware normalization ([`channel`]);
//! - the PaPP teacher-student backbone: shared feature extractor, teacher
//!   heads that seed a single differentiable WMMSE step, and fully digital
//!   or hybrid student heads ([`model`]);
//! - self-supervised losses with a reliability gate and MLDG
//!   meta-train / meta-generalize loops, site fine-tuning, and a DeepAll
//!   baseline trainer ([`training`]);
//! - closed-form MAC/weight/activation counters and the accelerator energy
//!   model for all method families ([`energy`]).
//!
//! Start with the runnable programs under `examples/`; each one demonstrates
//! a single capability end to end. The `papp` binary wires the same library
//! calls into `gen-data`, `train`, `finetune`, `eval`, and `energy`
//! subcommands for reproducible experiment runs.

pub mod channel;
pub mod cli;
pub mod config;
pub mod dataio;
pub mod energy;
pub mod error;
pub mod model;
pub mod numerics;
pub mod precoding;
pub mod training;

pub use error::{Error, Result};
