//! Simulation and gradient-based optimization of resolved-sideband and EIT
//! laser cooling of a single trapped ion.
//!
//! The ion is modeled as a few internal levels coupled to one harmonic
//! motional mode, truncated at `d` Fock states. Cooling dynamics follow a
//! Lindblad master equation whose superoperator is built densely; the state
//! after a fixed interaction time is obtained from the matrix exponential,
//! and gradients of the final mean phonon number with respect to the laser
//! parameters are exact Frechet derivatives of that exponential. On top of
//! this sit line scans, 2-D scans, and a quasi-Newton optimizer.
//!
//! Internally the trap frequency sets the unit system: frequencies are in
//! units of the trap frequency and times in its inverse.

pub mod control;
pub mod dynamics;
pub mod error;
pub mod hilbert;
pub mod linalg;
pub mod liouville;
pub mod schemes;

pub use control::{
    minimize, multistart, scan1d, scan2d, ControlProblem, GridPoint, MultistartOutcome,
    OptimOptions, OptimResult, ScanPoint,
};
pub use dynamics::{RateFit, Trajectory};
pub use error::{Error, Result};
pub use hilbert::{DensityMatrix, SpaceSpec};
pub use liouville::{DipolePattern, RecoilChannel, Superoperator};
pub use schemes::{
    ControlParams, EitFourConsts, EitThreeConsts, Scheme, SchemeId, SchemeModel, SidebandConsts,
};
