//! armlab: Monte Carlo and exact-enumeration tooling for arm events of
//! critical site percolation on the triangular lattice.
//!
//! The crate is organized bottom-up:
//! - [`lattice`]: hexagon coordinates, discretized disks/half-disks/annuli and
//!   their boundary b-paths;
//! - [`percolation`]: bit-packed colorings, a counter-based RNG, exhaustive
//!   enumeration and exact probabilities on micro domains;
//! - [`explore`]: interface tracing, exploration paths, faces, circuits and
//!   hitting-sequence checks;
//! - [`arms`]: arm-event specs, exponents, fast detectors and the independent
//!   peeling oracle;
//! - [`coupling`]: good events/sets, conditional sampling, maximal couplings
//!   and the layered coupling experiment;
//! - [`estimate`]: Monte Carlo estimates, log-log slope fits, geometric
//!   sequence fits and stability diagnostics;
//! - [`cli`]: the `armlab` command-line driver.

pub mod arms;
pub mod cli;
pub mod coupling;
pub mod error;
pub mod estimate;
pub mod explore;
pub mod lattice;
pub mod percolation;

pub use error::ArmlabError;
