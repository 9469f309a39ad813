//! CSI-ratio respiration sensing.
//!
//! The ratio of CSI between two antennas of one receiver cancels the per-packet
//! phase offset of commodity Wi-Fi cards. Its trace in the complex plane is a
//! Möbius image of the target's path phasor, so small chest movements trace arcs
//! on a circle. Projecting those arcs onto the best real axis recovers a clean
//! breathing waveform, and fusing autocorrelations over subcarriers gives the rate.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod csi;
pub mod extract;
pub mod mobius;
pub mod rate;
pub mod record;
pub mod sim;
pub mod verify;
