//! Array geometry, parameter conversions and the five channel-model variants.
//!
//! Every function here is a pure function of its inputs. Subcarrier indices
//! are 1-based throughout (`1..=K`).

mod config;
mod geometry;
mod response;

pub use config::{dbm_to_watts, watts_to_dbm, ScenarioConfig, SubcarrierGrid, SPEED_OF_LIGHT};
pub use geometry::{
    antenna_positions, fresnel_fraunhofer, params_from_position, path_gain, position_from_params,
    wrap_phase, wrap_phase_difference, ArrayGeometry, ChannelParams, Position, StateParams,
};
pub use response::{
    channel_vector, delay_term, mm_channel_vector, mm_param_derivatives,
    mm_param_second_derivatives, sns_amplitude, spherical_phase, state_derivatives,
    steering_vector, steering_vector_bse, tm_state_derivatives, ChannelDerivatives, ModelKind,
    StateDerivatives,
};
