//! Core algorithms for simulating multiple adaptive-bitrate video players that
//! share a bottleneck link, and for allocating that bottleneck's bandwidth.
//!
//! The crate is organized around a discrete-time fluid model of streaming:
//! a [`trace::BandwidthTrace`] drives per-step link capacity, client-side
//! adaptation algorithms ([`abr`]) pick bitrates, buffers evolve through
//! [`sim::buffer_step`], and per-player quality of experience is scored by the
//! kernels in [`qoe`]. On top of the plant sit two pieces: [`model`] fits
//! polynomial surrogates of each client's adaptation behavior from observed
//! input/output data, and [`controller`] uses those surrogates inside a
//! receding-horizon optimizer that splits the link among players.
//!
//! Everything here is `no_std`-compatible (with `alloc`); file formats, the
//! CLI, and experiment orchestration live in the companion `cane-cli` crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod abr;
pub mod controller;
pub mod math;
pub mod model;
pub mod qoe;
pub mod rng;
pub mod sim;
pub mod trace;
