//! Link-level simulator for beam alignment in the cell-free mmWave massive
//! MU-MIMO OFDM uplink.
//!
//! Multi-antenna UEs with one RF chain each pick an analog beam from a
//! phase-ramp codebook; distributed multi-antenna APs detect all UEs jointly
//! with an LMMSE equalizer at a central unit.

pub mod beam_alignment;
pub mod channel;
pub mod chest;
pub mod detection;
pub mod harness;
pub mod linalg;
pub mod model;
