//! Delay alignment modulation (DAM) for integrated sensing and communication.
//!
//! The crate covers the full simulation chain of a monostatic DAM-ISAC node:
//!
//! * [`channel`]: multipath MISO channels, sensing targets, ULA steering vectors.
//! * [`waveform`]: symbol frames, DAM and OFDM transmit synthesis, PAPR analysis.
//! * [`sensing`]: echo synthesis, matched filtering, delay-Doppler correlation
//!   matrices and the closed-form ambiguity function.
//! * [`ofdm_radar`]: the FFT-based OFDM radar baseline.
//! * [`conic_solver`]: a small first-order solver for Hermitian PSD programs
//!   with trace constraints and one second-order cone.
//! * [`beamforming_opt`]: zero-forcing path beamforming, semidefinite relaxation
//!   and rank-one recovery for the joint design.

pub mod beamforming_opt;
pub mod channel;
pub mod conic_solver;
pub mod error;
pub mod linalg;
pub mod ofdm_radar;
pub mod rng;
pub mod sensing;
pub mod units;
pub mod waveform;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector, C64};

pub use beamforming_opt::{IsacBeamformingResult, IsacThresholds, LiftedProblem, ZfProjectors};
pub use channel::{MultipathChannel, ScenarioConfig, SensingTarget, UlaGeometry};
pub use conic_solver::{ConicProgram, ConicSolution, SolveStatus, SolverSettings};
pub use sensing::{AmbiguitySurface, DelayDopplerGrid, EchoFrame};
pub use waveform::{BeamStream, BeamformerSet, Constellation, Modulation, SymbolFrame, TxFrame};
