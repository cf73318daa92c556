//! Theoretical bounds on the LMCL hyperparameters and the geometry behind
//! them.
//!
//! * [`s_lower_bound`]: smallest scale `s` for which unit class weights can
//!   give every class center a posterior of at least `P_W`.
//! * [`m_scope`]: largest cosine margin `m` compatible with uniformly spread
//!   class weights in `K` dimensions.
//! * [`simplex_weights`] builds the configuration that attains both bounds,
//!   and [`verify_weight_inequalities`] checks the inequalities they rest on
//!   for an arbitrary unit configuration.
//! * [`decision_regions`] labels the two-class decision plane of softmax,
//!   NSL, A-Softmax and LMCL.

mod regions;
mod simplex;
mod spread;

pub use regions::{
    decision_regions, lmcl_margin_width, GridSpec, RegionGrid, RegionLabel, RegionLoss, RegionSpace,
};
pub use simplex::{
    center_posterior, simplex_weights, verify_weight_inequalities, Evidence, WeightConfig,
};
pub use spread::{max_min_angle_search, SpreadResult, SpreadSearch};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no regular simplex of {classes} unit vectors exists in {dim} dimensions (needs classes <= dim + 1)")]
    Infeasible { classes: usize, dim: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid region configuration: {0}")]
    Config(String),
}

/// Lower bound on the scale: `s >= (C-1)/C * ln((C-1) P_W / (1 - P_W))`.
pub fn s_lower_bound(classes: usize, p_w: f64) -> Result<f64, BoundError> {
    if classes < 2 {
        return Err(BoundError::Domain(format!(
            "need at least 2 classes, got {classes}"
        )));
    }
    if !(p_w > 0.0 && p_w < 1.0) {
        return Err(BoundError::Domain(format!(
            "P_W must lie in (0, 1), got {p_w}"
        )));
    }
    let c = classes as f64;
    Ok((c - 1.0) / c * ((c - 1.0) * p_w / (1.0 - p_w)).ln())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BoundKind {
    /// Attained by a concrete weight configuration.
    Exact,
    /// Only a loose ceiling; the attainable margin is much smaller.
    Soft,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginScope {
    pub m_upper: f64,
    pub kind: BoundKind,
}

/// Upper end of the admissible cosine margin for `classes` classes in a
/// `dim`-dimensional feature space.
///
/// `dim == 2` uses weights evenly spaced on the circle, `1 - cos(2 pi / C)`.
/// Higher dimensions give `C / (C - 1)`, exact when a regular simplex fits
/// (`C <= K + 1`) and soft otherwise.
pub fn m_scope(classes: usize, dim: usize) -> Result<MarginScope, BoundError> {
    if classes < 2 || dim < 2 {
        return Err(BoundError::Domain(format!(
            "need classes >= 2 and dim >= 2, got classes = {classes}, dim = {dim}"
        )));
    }
    let c = classes as f64;
    Ok(if dim == 2 {
        MarginScope {
            m_upper: 1.0 - (2.0 * std::f64::consts::PI / c).cos(),
            kind: BoundKind::Exact,
        }
    } else if classes <= dim + 1 {
        MarginScope {
            m_upper: c / (c - 1.0),
            kind: BoundKind::Exact,
        }
    } else {
        MarginScope {
            m_upper: c / (c - 1.0),
            kind: BoundKind::Soft,
        }
    })
}

/// Computed bounds for one `(C, K, P_W)` setting, optionally checked against
/// user-chosen `s` and `m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub classes: usize,
    pub dim: usize,
    pub p_w: f64,
    pub s_lower: f64,
    pub m_upper: f64,
    pub m_bound_kind: BoundKind,
    /// `m_upper > 1`: the target logit `s (cos - m)` is negative even for a
    /// perfectly aligned feature.
    pub m_upper_exceeds_one: bool,
    pub s: Option<f64>,
    pub s_satisfied: Option<bool>,
    pub m: Option<f64>,
    pub m_satisfied: Option<bool>,
    /// Minimum class-center posterior of the uniform configuration at the
    /// supplied `s` (or at `s_lower` when none is supplied).
    pub center_posterior: Option<f64>,
    pub oracle_evidence: Vec<Evidence>,
}

/// Assembles a [`BoundReport`]. Evidence is gathered on the uniform
/// configuration from [`simplex_weights`] whenever one exists.
pub fn bound_report(
    classes: usize,
    dim: usize,
    p_w: f64,
    s: Option<f64>,
    m: Option<f64>,
) -> Result<BoundReport, BoundError> {
    let s_lower = s_lower_bound(classes, p_w)?;
    let scope = m_scope(classes, dim)?;
    if let Some(m) = m {
        if !(m >= 0.0 && m.is_finite()) {
            return Err(BoundError::Domain(format!(
                "m must be non-negative, got {m}"
            )));
        }
    }
    if let Some(s) = s {
        if !(s > 0.0 && s.is_finite()) {
            return Err(BoundError::Domain(format!("s must be positive, got {s}")));
        }
    }

    let mut evidence = Vec::new();
    let mut posterior = None;
    if dim == 2 || classes <= dim + 1 {
        let w = simplex_weights(classes, dim)?;
        let probe_s = s.unwrap_or(s_lower.max(0.0));
        posterior = Some(center_posterior(&w, probe_s));
        evidence = verify_weight_inequalities(&w, &[1.0, 8.0, 64.0]);
        let max_dot = w.max_pairwise_dot();
        evidence.push(Evidence::new(
            "1 - max pairwise dot of uniform weights equals m_upper".into(),
            1.0 - max_dot,
            scope.m_upper,
            ((1.0 - max_dot) - scope.m_upper).abs() <= 1e-9,
        ));
    }

    Ok(BoundReport {
        classes,
        dim,
        p_w,
        s_lower,
        m_upper: scope.m_upper,
        m_bound_kind: scope.kind,
        m_upper_exceeds_one: scope.m_upper > 1.0,
        s,
        s_satisfied: s.map(|s| s >= s_lower),
        m,
        m_satisfied: m.map(|m| m <= scope.m_upper),
        center_posterior: posterior,
        oracle_evidence: evidence,
    })
}
