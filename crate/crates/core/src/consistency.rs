//! Per-participant standardized effects and a global residual statistic.
//!
//! Both statistics are conventional constructions layered on the estimates;
//! no distributional claims are made beyond reporting the statistic and its
//! degrees of freedom.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::estimator::GlsSolution;
use crate::linalg::{SpdFactorization, DEFAULT_EPS_PD};
use crate::model::{CovarianceModel, ParticipantId};

pub const DEFAULT_Z_CRIT: f64 = 2.0;

/// Variances at or below this fraction of the largest diagonal element of
/// the covariance are treated as exactly zero.
const ZERO_VARIANCE_REL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantScore {
    pub participant: ParticipantId,
    pub effect: f64,
    pub uncertainty: f64,
    /// `None` when the effect is fixed by the constraint (zero variance).
    pub z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub per_participant: Vec<ParticipantScore>,
    pub chi_square: f64,
    pub dof: usize,
    pub z_crit: f64,
    /// Whether `FAF'` was included in the z-score variances.
    pub adjustment_included: bool,
    pub flagged: Vec<ParticipantId>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyOptions {
    pub z_crit: f64,
    pub include_adjustment: bool,
}

impl Default for ConsistencyOptions {
    fn default() -> Self {
        Self { z_crit: DEFAULT_Z_CRIT, include_adjustment: true }
    }
}

/// `Δ̂_λ / u_λ` for every participant, with `u_λ` from the total covariance
/// unless `include_adjustment` is false.
pub fn participant_zscores(dm: &DesignMatrix, sol: &GlsSolution, include_adjustment: bool) -> Vec<ParticipantScore> {
    let cov = if include_adjustment { &sol.cov } else { &sol.cov_statistical };
    let scale = cov.diagonal().iter().fold(0.0_f64, |a, &x| a.max(x));
    dm.columns
        .participants
        .iter()
        .enumerate()
        .map(|(l, id)| {
            let col = dm.columns.participant_col(l);
            let var = cov[(col, col)];
            let effect = sol.b[col];
            let (uncertainty, z) = if var <= ZERO_VARIANCE_REL * scale {
                (0.0, None)
            } else {
                let u = var.sqrt();
                (u, Some(effect / u))
            };
            ParticipantScore { participant: id.clone(), effect, uncertainty, z }
        })
        .collect()
}

/// `r'V0⁻¹r` with `r = Y - Xb`, and `m - (n - 1)` degrees of freedom.
pub fn global_chisq(dm: &DesignMatrix, sol: &GlsSolution, cov: &CovarianceModel) -> Result<(f64, usize)> {
    let r: DVector<f64> = &dm.y - &dm.x * &sol.b;
    let v0 = SpdFactorization::new(&cov.v0, DEFAULT_EPS_PD).ok_or(Error::NotPositiveDefinite { context: "V0" })?;
    let chi = r.dot(&v0.solve_vec(&r)).max(0.0);
    Ok((chi, dm.dof()))
}

pub fn consistency_report(
    dm: &DesignMatrix,
    sol: &GlsSolution,
    cov: &CovarianceModel,
    opts: ConsistencyOptions,
) -> Result<ConsistencyReport> {
    let per_participant = participant_zscores(dm, sol, opts.include_adjustment);
    let (chi_square, dof) = global_chisq(dm, sol, cov)?;
    let flagged = per_participant
        .iter()
        .filter(|s| s.z.is_some_and(|z| z.abs() > opts.z_crit))
        .map(|s| s.participant.clone())
        .collect();
    Ok(ConsistencyReport {
        per_participant,
        chi_square,
        dof,
        z_crit: opts.z_crit,
        adjustment_included: opts.include_adjustment,
        flagged,
    })
}
