//! Near-field localization bounds under model mismatch.
//!
//! A uniform linear array at sub-THz carrier observes one line-of-sight path
//! over many OFDM subcarriers. The crate builds the exact near-field channel
//! and several simplified variants, computes Fisher-information bounds for
//! each, evaluates the misspecified bound of a far-field estimator applied to
//! near-field data, and runs Monte-Carlo maximum-likelihood estimators.
//!
//! ```
//! use nearfield_mcrb::{bounds, channel::{ModelKind, Position}, observation::Scenario, ScenarioConfig};
//!
//! let scenario = Scenario::from_config(ScenarioConfig::default()).unwrap();
//! let report = bounds::bounds_at(ModelKind::Tm, Position::new(2.0, 2.0), &scenario).unwrap();
//! assert!(report.peb > 0.0 && report.peb < 0.1);
//! ```

pub mod bounds;
pub mod channel;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod linalg;
pub mod mcrb;
pub mod observation;
mod optim;

pub use channel::{ModelKind, ScenarioConfig};
pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/channel.md")]
    struct Channel;
    #[doc = include_str!("../../../book/src/bounds.md")]
    struct Bounds;
    #[doc = include_str!("../../../book/src/mismatch.md")]
    struct Mismatch;
    #[doc = include_str!("../../../book/src/estimators.md")]
    struct Estimators;
    #[doc = include_str!("../../../book/src/experiments.md")]
    struct Experiments;
}
