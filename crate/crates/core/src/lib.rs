//! Multi-user OFDM radar sensing with interference detection and exploitation.
//!
//! The crate simulates a reference UE (rUE) performing monostatic sensing on a
//! spectrally interleaved OFDM grid while interfering UEs (iUEs) transmit on
//! partly overlapping subcarriers. It provides:
//!
//! * [`scenario`]: geometry and deterministic channel parameters,
//! * [`waveform`]: resource allocation, transmit symbols and the received tensor,
//! * [`detect`]: order-statistics interference detection with calibrated
//!   familywise error rate,
//! * [`estimate`]: MUSIC angles on all resources, OMP delay/angle pairs on the
//!   clean resources, and their association,
//! * [`crlb`]: Slepian-Bangs Fisher information and delay/angle error bounds,
//! * [`harness`]: Monte Carlo experiment driver emitting CSV tables.

pub mod crlb;
pub mod detect;
pub mod error;
pub mod estimate;
pub mod harness;
pub mod linalg;
pub mod par;
pub mod scenario;
pub mod waveform;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
