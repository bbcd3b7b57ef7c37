//! Power allocation in parallel multiple access channels as a potential game:
//! equilibrium computation, replicator-dynamics learning under static and
//! fading channels, convergence certificates and figure-level experiments.

pub mod channels;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod experiments;
pub mod game;
pub mod metrics;
pub mod special;

pub use channels::{FadingKind, FadingSpec, Variance};
pub use dynamics::{StepSchedule, Trajectory};
pub use equilibrium::{Environment, EquilibriumResult};
pub use error::{Error, Result};
pub use game::{ChannelState, GameConfig, LinkMap, PowerProfile};
