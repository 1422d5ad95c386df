//! Stochastic dynamic voltage-stability margin simulator.
//!
//! The system model couples differential device states (exponential
//! recovery loads, tap changers, generator limit logic) to the network's
//! algebraic power-balance equations, driven by Ornstein-Uhlenbeck noise
//! channels and distribution-shaped renewable processes. A slow ramp on
//! one load pushes each trial toward voltage collapse; the margin is the
//! MW distance covered before the collapse detectors fire. Monte Carlo
//! studies aggregate per-trial margins into distribution statistics.
//!
//! Layering, bottom up: [`stochastic`] (noise channels, memoryless
//! transforms, power curves), [`network`] (admittance, Newton solver,
//! algebraic Jacobian), [`devices`] (bus-attached component models),
//! [`integrator`] (the per-trial stepping loop), [`margin`] (collapse
//! detection), [`montecarlo`] (study orchestration), and [`io`] (file
//! formats plus the command-line interface).

// Negated float comparisons in the validation layer are deliberate: the
// `!(x > 0)` form rejects NaN, which `x <= 0` lets through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod devices;
pub mod error;
pub mod integrator;
pub mod io;
pub mod margin;
pub mod montecarlo;
pub mod network;
pub mod stochastic;
