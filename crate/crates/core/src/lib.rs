//! Monte Carlo and exact small-box computations for gradient interface
//! models above a hard wall with pinning.
//!
//! The field lives on a box `Λ_N ⊂ Z^d` with zero boundary condition and
//! energy `H(φ) = Σ_<x,y> Ψ(φ_x − φ_y)` (bonds leaving the box see height 0).
//! Pinning is either a square well of width `a` and depth `b`, or a point
//! mass `ε δ_0` added to Lebesgue measure on each height.

pub mod chalker;
pub mod cli;
pub mod error;
pub mod lattice;
pub mod model;
pub mod observables;
pub mod oracle;
pub mod sampler;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use lattice::{BoundarySet, Lattice};
pub use model::{epsilon_of, FieldConfig, InteractionPotential, PinningSpec};
pub use observables::{Estimate, ScalingFit, ScalingModel};
pub use oracle::{ExactResult, QuadratureSpec};
pub use sampler::{run_chain, ChainParams, Kernel, Trace};
