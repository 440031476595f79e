//! Numerical laboratory for matrix-valued semiclassical Weyl calculus:
//! Moyal expansions, Weyl quantization, Hamiltonian flows and transport,
//! semiclassical projections, and long-time Egorov approximants with
//! measured remainder orders.

pub mod dynamics;
pub mod egorov;
pub mod error;
pub mod fft;
pub mod fitting;
pub mod grid;
pub mod harness;
pub mod interp;
pub mod moyal;
pub mod projections;
pub mod propagator;
pub mod quantize;
pub mod smallmat;
pub mod window;

pub use error::{LabError, Result};
