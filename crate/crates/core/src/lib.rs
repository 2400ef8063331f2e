//! Synthesis and simulation of region-based self-triggered sampling for
//! perturbed, uncertain nonlinear control loops.
//!
//! The pipeline is:
//!
//! 1. [`models`] lifts the closed loop and its triggering function to a
//!    homogeneous system in one extra coordinate `w`.
//! 2. [`setsynth`] builds the working sets and fits the comparison
//!    coefficients `δ₀, δ₁` so that `dφ̃/dt ≤ δ₀ φ̃ + δ₁` on them.
//! 3. [`isochron`] turns the coefficients into the bound `μ`, its closed-form
//!    zero `τ↓`, and a partition of the state space into dwell-time regions.
//! 4. [`schedulers`] and [`simulate`] run the resulting sampler against an
//!    event-triggered reference and a fixed-formula self-triggered baseline.
//!
//! [`oracles`] contains slow, independent reference computations used to
//! cross-check the production paths.

pub mod isochron;
pub mod models;
pub mod oracles;
pub mod rng;
pub mod schedulers;
pub mod setsynth;
pub mod simulate;

pub use isochron::{IsochronEngine, RegionPartition, TimeGrid};
pub use models::{DisturbanceBox, Plant, Trigger};
pub use schedulers::SchedulerPolicy;
pub use setsynth::{BoxSet, DeltaCoefficients};
pub use simulate::{DisturbanceSignal, SimResult, Trajectory};
