//! A Monte Carlo laboratory for Schramm-Loewner evolutions.
//!
//! The crate simulates chordal and radial Loewner flows, the interval
//! diffusions that govern their survival exponents, and critical site
//! percolation on the triangular lattice, then estimates the classical
//! SLE exponents and fractal dimensions from seeded trial batches:
//!
//! * trace dimension 7/4 and boundary dimension 4/3 for SLE(6),
//! * disconnection exponent 1/4 and escape exponent 1/3,
//! * boundary-time dimension (4+kappa)/2kappa and cut-time dimension
//!   (8-kappa)/4,
//! * percolation two-arm exponent 1/4 and polychromatic three-arm
//!   exponent 2/3.
//!
//! Everything is a pure function of its inputs (seeds included), so trial
//! batches parallelize freely and reruns are byte-identical.
//!
//! The `sle-lab` binary drives batch experiments from flat key=value
//! config files; see the book under `book/` for a guided tour.

pub mod diffusion;
pub mod events;
pub mod experiment;
pub mod loewner;
pub mod percolation;
pub mod plot;
pub mod rng;
pub mod stats;

mod book;
