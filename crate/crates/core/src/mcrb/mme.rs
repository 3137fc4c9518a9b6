//! Model-mismatch error: how far the lower bound sits from the matched CRB.

use std::fmt;
use std::str::FromStr;

use super::bound::{lower_bound_with, McrbResult};
use super::pseudo_true::PseudoTrueSearch;
use crate::bounds::{bounds_for_state, BoundReport};
use crate::channel::{ModelKind, Position, StateParams};
use crate::error::{Error, Result};

/// Value reported when the bound and the CRB coincide.
pub const MME_FLOOR_DB: f64 = -120.0;

/// Whether bounds enter the metric as variances or as their square roots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MmeDomain {
    Variance,
    #[default]
    Rmse,
}

impl MmeDomain {
    fn apply(self, variance: f64) -> f64 {
        match self {
            MmeDomain::Variance => variance,
            MmeDomain::Rmse => variance.sqrt(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MmeDomain::Variance => "variance",
            MmeDomain::Rmse => "rmse",
        }
    }
}

impl fmt::Display for MmeDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MmeDomain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "variance" => Ok(MmeDomain::Variance),
            "rmse" | "root" => Ok(MmeDomain::Rmse),
            other => Err(Error::InvalidConfig(format!(
                "unknown MME domain `{other}`"
            ))),
        }
    }
}

/// `10 log10(|crb - lb| / crb)`, floored at [`MME_FLOOR_DB`].
pub fn mme(crb: f64, lb: f64) -> Result<f64> {
    if !(crb > 0.0) || !crb.is_finite() {
        return Err(Error::OutOfRange {
            what: "CRB in MME",
            value: crb,
        });
    }
    if !lb.is_finite() {
        return Err(Error::NonFinite("lower bound in MME"));
    }
    let ratio = (crb - lb).abs() / crb;
    if ratio <= 0.0 {
        return Ok(MME_FLOOR_DB);
    }
    Ok((10.0 * ratio.log10()).max(MME_FLOOR_DB))
}

/// MME of the position, angle and delay bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmeReport {
    pub mme_peb: f64,
    pub mme_aeb: f64,
    pub mme_deb: f64,
    /// Matched CRB `[position, angle, delay]` in the chosen domain.
    pub crb: [f64; 3],
    /// Lower bound `[position, angle, delay]` in the chosen domain.
    pub lb: [f64; 3],
    pub domain: MmeDomain,
}

pub fn mme_report(crb: &BoundReport, lb: &McrbResult, domain: MmeDomain) -> Result<MmeReport> {
    let c = [
        crb.crb_state[(0, 0)] + crb.crb_state[(1, 1)],
        crb.crb_channel[(0, 0)],
        crb.crb_channel[(1, 1)],
    ]
    .map(|v| domain.apply(v));
    let l = [lb.position_lb.trace(), lb.lb[(0, 0)], lb.lb[(1, 1)]].map(|v| domain.apply(v));
    Ok(MmeReport {
        mme_peb: mme(c[0], l[0])?,
        mme_aeb: mme(c[1], l[1])?,
        mme_deb: mme(c[2], l[2])?,
        crb: c,
        lb: l,
        domain,
    })
}

/// Matched CRB, far-field lower bound and MME at one position.
#[derive(Debug, Clone, PartialEq)]
pub struct MismatchPoint {
    pub crb: BoundReport,
    pub lb: McrbResult,
    pub mme: MmeReport,
}

/// Evaluates the full mismatch analysis for data from `truth` at a
/// line-of-sight position.
pub fn mismatch_at(
    search: &PseudoTrueSearch<'_>,
    truth: ModelKind,
    position: Position,
    domain: MmeDomain,
) -> Result<MismatchPoint> {
    let scenario = search.scenario();
    let state = StateParams::line_of_sight(position, 0.0, scenario.geometry())?;
    let crb = bounds_for_state(truth, &state, scenario)?;
    let lb = lower_bound_with(search, truth, &state)?;
    let mme = mme_report(&crb, &lb, domain)?;
    Ok(MismatchPoint { crb, lb, mme })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_examples() {
        assert_eq!(mme(1.0, 1.0).unwrap(), MME_FLOOR_DB);
        assert!(mme(1.0, 2.0).unwrap().abs() < 1e-12);
        assert!((mme(1.0, 1.5).unwrap() + 3.0103).abs() < 1e-4);
        assert!((mme(2.0, 1.0).unwrap() + 3.0103).abs() < 1e-4);
        assert!(mme(0.0, 1.0).is_err());
        assert!(mme(1.0, f64::NAN).is_err());
    }

    #[test]
    fn domain_parsing() {
        assert_eq!(
            "variance".parse::<MmeDomain>().unwrap(),
            MmeDomain::Variance
        );
        assert_eq!("RMSE".parse::<MmeDomain>().unwrap(), MmeDomain::Rmse);
        assert!("db".parse::<MmeDomain>().is_err());
        assert_eq!(MmeDomain::default(), MmeDomain::Rmse);
    }
}
