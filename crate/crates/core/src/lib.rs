//! Power control and large-system analysis for partial-Rake receivers in
//! impulse-radio UWB uplinks.
//!
//! The crate is layered bottom-up:
//!
//! * [`channel`]: multipath topology and Rayleigh tap sampling.
//! * [`rake`]: partial-Rake combining and per-link gains.
//! * [`game`]: the energy-efficient power-control game and its equilibrium.
//! * [`lsa`]: closed forms of the large-system limit.
//! * [`oracle`]: finite-size and Monte Carlo checks of those closed forms.
//! * [`experiment`]: experiment runners with CSV output.

// `!(x > 0.0)` is used on purpose: it also rejects NaN. Index loops mirror
// the sums they implement.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod channel;
pub mod error;
pub mod experiment;
pub mod game;
pub mod lsa;
pub mod oracle;
pub mod rake;
pub mod rng;

pub use channel::{
    db_to_linear, linear_to_db, sample_channel, sample_network, sample_topology, ApdpProfile,
    ChannelRealization, NetworkTopology,
};
pub use error::{Error, Result};
pub use game::{
    best_response, efficiency, feasibility, gamma_star, solve_equilibrium, EquilibriumOutcome,
    PowerGame, Schedule, SolverOptions, UtilityParams,
};
pub use rake::{link_gains, link_gains_dense, sinr, sinrs, LinkGains, RakeSelector, SpreadingConfig};
pub use rng::SeedStream;
pub use lsa::{
    ber_estimate, invert_loss, loss, loss_db, min_frames, mu, nu, predict, predict_power, predict_utility,
    LsaParams, LsaPrediction, NuRegion, TargetRule,
};
pub use experiment::{ExperimentConfig, Table};
