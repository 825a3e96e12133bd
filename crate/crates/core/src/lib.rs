//! Explicit reference governor (ERG) for linear systems with a constant input delay.
//!
//! The crate is organized bottom-up:
//!
//! - [`model`]: the delay plant, linear constraints, the steady-state map and the
//!   primary feedback law.
//! - [`stability`]: Razumikhin / Krasovskii functionals, their LMIs, certificate
//!   synthesis and the level-set threshold used by the terminal safety margin.
//! - [`sim`]: fixed-step RK4 integration of the delayed closed loop with history
//!   buffers, and frozen-reference prediction.
//! - [`erg`]: dynamic safety margin, attraction field and the governor loop.
//!
//! All numerical code is generic over the scalar type through [`Scalar`]; the
//! aliases at the crate root fix it to `f64`, which is what the CLI uses.

pub mod erg;
pub mod error;
pub mod model;
pub mod optim;
pub mod sim;
pub mod stability;

mod scalar;

pub use error::{ErgError, Result};
pub use scalar::Scalar;

/// Plant with `f64` entries.
pub type DelaySystem = model::DelaySystem<f64>;
pub type ConstraintRow = model::ConstraintRow<f64>;
pub type ConstraintSet = model::ConstraintSet<f64>;
pub type Equilibrium = model::Equilibrium<f64>;
pub type PrimaryGain = model::PrimaryGain<f64>;
pub type SteadyStateMap = model::SteadyStateMap<f64>;
pub type Certificate = stability::Certificate<f64>;
pub type HistorySegment = stability::HistorySegment<f64>;
pub type HistoryBuffer = sim::HistoryBuffer<f64>;
pub type SimState = sim::SimState<f64>;
pub type ClosedLoop = sim::ClosedLoop<f64>;
pub type PredictionResult = sim::PredictionResult<f64>;
pub type ErgConfig = erg::ErgConfig<f64>;
pub type DsmBreakdown = erg::DsmBreakdown<f64>;
pub type Governor = erg::Governor<f64>;
pub type Trace = erg::Trace<f64>;
