//! Constrained generalised least squares for interlaboratory measurement
//! comparisons.
//!
//! Measurements `Y = Xβ + Xφ + ε` of shared artefacts by several
//! participants are fitted for artefact values, participant effects and
//! optional covariate coefficients, subject to one linear constraint
//! `w'β = d` on the participant effects. Random systematic effects `φ`
//! with covariance `Ã` do not change the estimate; they add `FAF'` to its
//! covariance.
//!
//! ```
//! use mcgls::{build_design, solve_reduced, ComparisonData, Constraint, CovarianceModel, MeasurementRecord};
//! use nalgebra::DMatrix;
//!
//! let data = ComparisonData::new(
//!     vec!["P1".into(), "P2".into()],
//!     vec!["A1".into()],
//!     vec![],
//!     vec![MeasurementRecord::new("P1", "A1", 1, 10.0), MeasurementRecord::new("P2", "A1", 1, 10.4)],
//! );
//! let dm = build_design(&data).unwrap();
//! let cov = CovarianceModel::new(DMatrix::identity(2, 2), DMatrix::zeros(2, 2), 1, 0);
//! let cons = Constraint::equal(&data.participants, 0.0);
//! let sol = solve_reduced(&dm, &cov, &cons).unwrap();
//! assert!((sol.b[0] - 10.2).abs() < 1e-12);
//! ```

// `!(x > 0.0)` is used deliberately so that NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjustment;
pub mod consistency;
pub mod design;
pub mod error;
pub mod estimator;
pub mod io;
pub mod linalg;
pub mod model;
pub mod simulate;

pub use adjustment::{adjustment_blocks, covariance_adjustment, diagonal_adjustment_variance, AdjustmentBlocks};
pub use consistency::{consistency_report, ConsistencyOptions, ConsistencyReport, ParticipantScore};
pub use design::{
    build_design, check_linkage, embed_constraint, DesignMatrix, LinkageResult, ParamKind, RankCertificate,
};
pub use error::{Error, Result};
pub use estimator::{
    build_projector, solve, solve_all, solve_augmented, solve_by_projection, solve_full, solve_projection_route,
    solve_pseudo_observation, solve_reduced, CChoice, GlsOperator, GlsSolution, Method, MethodComparison, ProjectorF,
};
pub use io::{parse_comparison_file, ComparisonFile, Report, ReportFormat};
pub use model::{
    validate_comparison, ArtefactId, ComparisonData, Constraint, CovarianceModel, MeasurementRecord, ParticipantId,
    ValidationReport, Violation,
};
pub use simulate::{
    generate_comparison, monte_carlo_cov_check, oracle_constrained_gls, MonteCarloReport, SimulationConfig,
};
