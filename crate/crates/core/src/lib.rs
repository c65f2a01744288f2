//! Simulation and analysis toolkit for polarization-agnostic
//! Gaussian-modulated coherent-state CVQKD.
//!
//! Alice encodes independent Gaussian quadratures on both polarization
//! modes. The fiber applies an unknown polarization transformation, Bob
//! measures only the horizontal output, and Alice recovers the
//! transformation from a revealed subset of Bob's data so she can rotate her
//! stored encodings digitally.
//!
//! The pipeline, bottom up:
//!
//! * [`polarization`]: Jones/Stokes algebra of the fiber model.
//! * [`encoding`]: Alice's Gaussian source and packets.
//! * [`channel`]: polarization transformation, loss and excess noise.
//! * [`receiver`]: single-polarization dual-quadrature homodyne detection.
//! * [`estimation`]: least-squares channel recovery and digital correction.
//! * [`keyrate`]: receiver variance, R^2 bounds and the asymptotic key rate.
//! * [`pipeline`]: the per-packet simulate/reveal/fit/evaluate chain.
//! * [`protocol`]: framed classical-channel messages and the session driver.
//! * [`campaign`]: configuration, multi-packet runs and dataset output.

pub mod campaign;
pub mod channel;
pub mod encoding;
pub mod error;
pub mod estimation;
pub mod keyrate;
pub mod pipeline;
pub mod polarization;
pub mod protocol;
pub mod receiver;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
