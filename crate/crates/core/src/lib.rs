//! Exact simulation and analysis of the multitype contact process with
//! frozen states (the allelopathy model).
//!
//! Sites hold one of four states: free (0), blue / inhibitory (1),
//! red / susceptible (2) and frozen (3). Blue particles die into frozen
//! sites, which red cannot colonize until they thaw at rate `gamma`.
//!
//! The crate is organised bottom-up:
//!
//! - [`lattice`]: torus geometry, neighborhoods, site states, rates.
//! - [`rng`]: the keyed counter-based generator behind every random draw.
//! - [`graphical`]: the Harris graphical representation (arrows, crosses,
//!   dots) as lazily regenerable Poisson streams, plus explicit event logs.
//! - [`forward`]: event-driven forward evolution and observables.
//! - [`coupling`]: several parameter variants on one representation.
//! - [`dual`]: dual paths, ancestor hierarchy, color determination.
//! - [`meanfield`]: the mean-field ODE, fixed points and stability.
//! - [`blocks`]: block geometry and occupancy / blocking experiments.
//! - [`stats`]: interval estimates and trend tests used by the experiments.

pub mod blocks;
pub mod coupling;
pub mod dual;
mod error;
pub mod forward;
pub mod graphical;
pub mod lattice;
pub mod meanfield;
mod queue;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use forward::{make_initial, run, InitialCondition, Trajectory};
pub use graphical::{EventSource, GraphicalRep};
pub use lattice::{Configuration, Domain, Lattice, Neighborhood, Norm, Params, SiteState};
