//! Desk-scale TDD-LTE downlink simulator and receiver toolkit for
//! device-free sensing experiments.
//!
//! The crate covers the full chain needed to study how inter-cell
//! interference affects CSI-based gesture sensing:
//!
//! * [`phy`] — deterministic downlink signals (PSS/SSS/CRS/PBCH) and
//!   per-cell transmit grids,
//! * [`channel`] — time-variant multipath channels with gesture-driven
//!   Doppler trajectories and oscillator phase noise,
//! * [`receiver`] — cell search, successive interference cancellation,
//!   MIB decoding and the two channel estimators (per-subcarrier CRS LS
//!   and the multi-cell joint LS over the broadcast region),
//! * [`dsp`] — CSI conditioning: main-path extraction, CSI ratio,
//!   band-pass filtering, Doppler spectrograms and subcarrier selection,
//! * [`gesture`] — the training-free six-gesture classifier and its
//!   evaluation metrics,
//! * [`scenario`] / [`pipeline`] — configuration, deterministic seeding
//!   and end-to-end experiment orchestration.
//!
//! Heavy loops (Monte Carlo trials, sweep points, capture batches) run on a
//! rayon pool when the default `parallel` feature is enabled and fall back
//! to plain sequential iteration without it.

pub mod channel;
pub mod dsp;
pub mod exec;
pub mod gesture;
pub mod grid;
pub mod phy;
pub mod pipeline;
pub mod receiver;
pub mod scenario;
pub mod seed;

pub use num_complex::Complex64;
