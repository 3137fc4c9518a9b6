//! Misspecified Cramér-Rao analysis of the far-field estimator: pseudo-true
//! parameters, the sandwich bound, the mismatch metric and its contours.

mod bound;
mod contour;
mod mme;
mod pseudo_true;

pub use bound::{
    assemble, lower_bound, lower_bound_with, matrix_a, matrix_a_finite_difference, matrix_b,
    McrbResult,
};
pub use contour::{mismatch_boundary, GridField, Polyline};
pub use mme::{mismatch_at, mme, mme_report, MismatchPoint, MmeDomain, MmeReport, MME_FLOOR_DB};
pub use pseudo_true::{pseudo_true, PseudoTrueResult, PseudoTrueSearch, SearchOptions};
