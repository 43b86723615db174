//! Arrival-time distributions for one-dimensional quantum wave packets.
//!
//! The crate computes the positive arrival-time density `Π(τ;X)` of a directed
//! packet at a detector `X`, both for free motion and for the part of a packet
//! transmitted through a finite-range barrier, and checks it against an
//! independent split-operator simulation that measures the probability
//! current at the detector.
//!
//! * [`packet`], [`grid`], [`units`]: momentum-space packets and quadrature.
//! * [`arrival`]: amplitudes, distributions, moments, covariance operations.
//! * [`scattering`]: stationary `T(p)`, `R(p)` and transmitted packets.
//! * [`evolve`]: time-domain propagation, flux and absorbers.
//! * [`config`], [`pipeline`], [`output`]: the batch front end used by the
//!   `qarrival` binary.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arrival;
pub mod config;
pub mod error;
pub mod evolve;
pub mod grid;
pub mod output;
pub mod packet;
pub mod pipeline;
pub mod scattering;
pub mod units;

pub use arrival::{
    arrival_amplitude, arrival_distribution, mean_arrival, moment_report, time_reverse,
    time_shift, ArrivalDistribution, MomentReport, TimeGrid,
};
pub use error::{Error, Result};
pub use grid::MomentumGrid;
pub use packet::{build_gaussian, GaussianSpec, WavePacket};
pub use config::{ConfigError, ExperimentConfig};
pub use evolve::{flux_mean_arrival, AbsorberSpec, Evolution, FluxRecord, SpaceGrid};
pub use pipeline::{ResultBundle, RunError};
pub use scattering::{solve_coefficients, transmitted_packet, PotentialSpec, ScatteringCoefficients};
pub use units::{Direction, UnitSystem};
