//! Comparison data, covariance specifications, constraints and their
//! validation.
//!
//! Record order is significant: it fixes the row order of the design matrix,
//! the observation vector and `V0`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, DEFAULT_EPS_PD};

macro_rules! id_newtype {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

id_newtype!(
    /// Identifier of a participating laboratory.
    ParticipantId
);
id_newtype!(
    /// Identifier of a travelling artefact.
    ArtefactId
);

/// One reported measurement `Y` of an artefact by a participant.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub participant: ParticipantId,
    pub artefact: ArtefactId,
    /// 1-based repeat ordinal.
    pub repeat: u32,
    pub value: f64,
    /// Covariate deviations from their reference values, keyed by name.
    pub covariates: BTreeMap<String, f64>,
}

impl MeasurementRecord {
    pub fn new(
        participant: impl Into<ParticipantId>,
        artefact: impl Into<ArtefactId>,
        repeat: u32,
        value: f64,
    ) -> Self {
        Self { participant: participant.into(), artefact: artefact.into(), repeat, value, covariates: BTreeMap::new() }
    }

    pub fn with_covariate(mut self, name: impl Into<String>, deviation: f64) -> Self {
        self.covariates.insert(name.into(), deviation);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonData {
    pub participants: Vec<ParticipantId>,
    pub artefacts: Vec<ArtefactId>,
    pub covariate_names: Vec<String>,
    pub records: Vec<MeasurementRecord>,
}

impl ComparisonData {
    pub fn new(
        participants: Vec<ParticipantId>,
        artefacts: Vec<ArtefactId>,
        covariate_names: Vec<String>,
        records: Vec<MeasurementRecord>,
    ) -> Self {
        Self { participants, artefacts, covariate_names, records }
    }

    /// Number of measurements `m`.
    pub fn n_records(&self) -> usize {
        self.records.len()
    }

    pub fn n_participants(&self) -> usize {
        self.participants.len()
    }

    pub fn n_artefacts(&self) -> usize {
        self.artefacts.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    /// Number of parameters `n = J + L + K`.
    pub fn n_params(&self) -> usize {
        self.n_artefacts() + self.n_participants() + self.n_covariates()
    }

    pub fn participant_index(&self, id: &ParticipantId) -> Option<usize> {
        self.participants.iter().position(|p| p == id)
    }

    pub fn artefact_index(&self, id: &ArtefactId) -> Option<usize> {
        self.artefacts.iter().position(|a| a == id)
    }

    pub fn observations(&self) -> DVector<f64> {
        DVector::from_iterator(self.records.len(), self.records.iter().map(|r| r.value))
    }
}

/// Random-error covariance `V0` and systematic-effect covariance `Ã`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceModel {
    pub v0: DMatrix<f64>,
    pub a_tilde: DMatrix<f64>,
    /// `Ã` placed in the participant block of an `n x n` zero matrix.
    pub a_embedded: DMatrix<f64>,
    n_artefacts: usize,
}

impl CovarianceModel {
    pub fn new(v0: DMatrix<f64>, a_tilde: DMatrix<f64>, n_artefacts: usize, n_covariates: usize) -> Self {
        let l = a_tilde.nrows();
        let n = n_artefacts + l + n_covariates;
        let mut a_embedded = DMatrix::zeros(n, n);
        if a_tilde.is_square() {
            a_embedded.view_mut((n_artefacts, n_artefacts), (l, l)).copy_from(&a_tilde);
        }
        Self { v0, a_tilde, a_embedded, n_artefacts }
    }

    /// Same `V0` and layout, different `Ã`.
    pub fn with_a_tilde(&self, a_tilde: DMatrix<f64>) -> Self {
        let k = self.a_embedded.nrows() - self.n_artefacts - self.a_tilde.nrows();
        Self::new(self.v0.clone(), a_tilde, self.n_artefacts, k)
    }

    /// The participant block of `a_embedded`.
    pub fn participant_block(&self) -> DMatrix<f64> {
        let l = self.a_tilde.nrows();
        self.a_embedded.view((self.n_artefacts, self.n_artefacts), (l, l)).into_owned()
    }

    pub fn n_artefacts(&self) -> usize {
        self.n_artefacts
    }
}

/// Weighted constraint `Σ w̃_λ Δ_λ = d` on the participant effects.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub weights: BTreeMap<ParticipantId, f64>,
    pub d: f64,
}

impl Constraint {
    pub fn new(weights: BTreeMap<ParticipantId, f64>, d: f64) -> Self {
        Self { weights, d }
    }

    /// All participants weighted equally.
    pub fn equal(participants: &[ParticipantId], d: f64) -> Self {
        let w = 1.0 / participants.len() as f64;
        Self::new(participants.iter().map(|p| (p.clone(), w)).collect(), d)
    }

    /// One participant acts as the reference (`w̃ = e_λ`).
    pub fn reference(participant: impl Into<ParticipantId>, d: f64) -> Self {
        Self::new(BTreeMap::from([(participant.into(), 1.0)]), d)
    }

    /// `w̃` in roster order; participants without an entry get weight 0.
    pub fn weight_vector(&self, participants: &[ParticipantId]) -> Result<DVector<f64>> {
        if let Some(unknown) = self.weights.keys().find(|k| !participants.contains(k)) {
            return Err(Error::UnknownParticipant(unknown.to_string()));
        }
        Ok(DVector::from_iterator(
            participants.len(),
            participants.iter().map(|p| self.weights.get(p).copied().unwrap_or(0.0)),
        ))
    }
}

/// A single failed invariant.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NoRecords,
    TooFewParticipants {
        count: usize,
    },
    NoArtefacts,
    DuplicateRosterEntry {
        id: String,
    },
    DuplicateRecord {
        participant: String,
        artefact: String,
        repeat: u32,
    },
    ZeroRepeatIndex {
        record: usize,
    },
    NonFiniteValue {
        record: usize,
    },
    RecordUnknownParticipant {
        record: usize,
        id: String,
    },
    RecordUnknownArtefact {
        record: usize,
        id: String,
    },
    RecordUnknownCovariate {
        record: usize,
        name: String,
    },
    RecordMissingCovariate {
        record: usize,
        name: String,
    },
    V0Shape {
        rows: usize,
        cols: usize,
        expected: usize,
    },
    V0NotSymmetric,
    V0NotPositiveDefinite {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },
    ATildeShape {
        rows: usize,
        cols: usize,
        expected: usize,
    },
    ATildeNotSymmetric,
    ATildeNotPositiveSemidefinite {
        min_eigenvalue: f64,
    },
    WeightUnknownParticipant {
        id: String,
    },
    NegativeWeight {
        participant: String,
        weight: f64,
    },
    WeightsSum {
        sum: f64,
    },
    AllWeightsZero,
    NonFiniteOffset,
    /// A covariance specification in an input file refers to something that
    /// does not exist or has the wrong shape.
    CovarianceSpec {
        detail: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            NoRecords => write!(f, "comparison has no measurements"),
            TooFewParticipants { count } => write!(f, "need at least 2 participants, found {count}"),
            NoArtefacts => write!(f, "comparison has no artefacts"),
            DuplicateRosterEntry { id } => write!(f, "duplicate roster entry `{id}`"),
            DuplicateRecord { participant, artefact, repeat } => {
                write!(f, "duplicate record ({participant}, {artefact}, repeat {repeat})")
            }
            ZeroRepeatIndex { record } => write!(f, "record {record}: repeat index must be >= 1"),
            NonFiniteValue { record } => write!(f, "record {record}: value is not finite"),
            RecordUnknownParticipant { record, id } => {
                write!(f, "record {record}: unknown participant `{id}`")
            }
            RecordUnknownArtefact { record, id } => write!(f, "record {record}: unknown artefact `{id}`"),
            RecordUnknownCovariate { record, name } => {
                write!(f, "record {record}: covariate `{name}` is not in the roster")
            }
            RecordMissingCovariate { record, name } => {
                write!(f, "record {record}: missing value for covariate `{name}`")
            }
            V0Shape { rows, cols, expected } => {
                write!(f, "V0 is {rows}x{cols}, expected {expected}x{expected}")
            }
            V0NotSymmetric => write!(f, "V0 not symmetric"),
            V0NotPositiveDefinite { min_eigenvalue, max_eigenvalue } => {
                write!(f, "V0 not positive definite (eigenvalues in [{min_eigenvalue:e}, {max_eigenvalue:e}])")
            }
            ATildeShape { rows, cols, expected } => {
                write!(f, "A~ is {rows}x{cols}, expected {expected}x{expected}")
            }
            ATildeNotSymmetric => write!(f, "A~ not symmetric"),
            ATildeNotPositiveSemidefinite { min_eigenvalue } => {
                write!(f, "A~ not positive semidefinite (min eigenvalue {min_eigenvalue:e})")
            }
            WeightUnknownParticipant { id } => write!(f, "weight given for unknown participant `{id}`"),
            NegativeWeight { participant, weight } => {
                write!(f, "weight for `{participant}` is negative ({weight})")
            }
            WeightsSum { sum } => write!(f, "weights must sum to 1 (sum = {sum})"),
            AllWeightsZero => write!(f, "at least one weight must be positive"),
            NonFiniteOffset => write!(f, "constraint offset d is not finite"),
            CovarianceSpec { detail } => write!(f, "covariance specification: {detail}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::Validation(self.violations))
        }
    }
}

/// Checks every input invariant with the default tolerance.
pub fn validate_comparison(data: &ComparisonData, cov: &CovarianceModel, cons: &Constraint) -> ValidationReport {
    validate_comparison_with(data, cov, cons, DEFAULT_EPS_PD)
}

pub fn validate_comparison_with(
    data: &ComparisonData,
    cov: &CovarianceModel,
    cons: &Constraint,
    eps_pd: f64,
) -> ValidationReport {
    let mut v = Vec::new();
    check_data(data, &mut v);
    check_covariance(data, cov, eps_pd, &mut v);
    check_constraint(data, cons, &mut v);
    ValidationReport { violations: v }
}

fn check_data(data: &ComparisonData, v: &mut Vec<Violation>) {
    if data.records.is_empty() {
        v.push(Violation::NoRecords);
    }
    if data.participants.len() < 2 {
        v.push(Violation::TooFewParticipants { count: data.participants.len() });
    }
    if data.artefacts.is_empty() {
        v.push(Violation::NoArtefacts);
    }

    let rosters: [Vec<&str>; 3] = [
        data.participants.iter().map(|p| p.as_str()).collect(),
        data.artefacts.iter().map(|a| a.as_str()).collect(),
        data.covariate_names.iter().map(|c| c.as_str()).collect(),
    ];
    for roster in rosters {
        let mut seen = BTreeSet::new();
        for id in roster {
            if !seen.insert(id) {
                v.push(Violation::DuplicateRosterEntry { id: id.to_owned() });
            }
        }
    }

    let participants: BTreeSet<_> = data.participants.iter().collect();
    let artefacts: BTreeSet<_> = data.artefacts.iter().collect();
    let covariates: BTreeSet<_> = data.covariate_names.iter().collect();
    let mut keys = BTreeSet::new();
    for (i, r) in data.records.iter().enumerate() {
        if !keys.insert((&r.participant, &r.artefact, r.repeat)) {
            v.push(Violation::DuplicateRecord {
                participant: r.participant.to_string(),
                artefact: r.artefact.to_string(),
                repeat: r.repeat,
            });
        }
        if r.repeat == 0 {
            v.push(Violation::ZeroRepeatIndex { record: i });
        }
        if !r.value.is_finite() {
            v.push(Violation::NonFiniteValue { record: i });
        }
        if !participants.contains(&r.participant) {
            v.push(Violation::RecordUnknownParticipant { record: i, id: r.participant.to_string() });
        }
        if !artefacts.contains(&r.artefact) {
            v.push(Violation::RecordUnknownArtefact { record: i, id: r.artefact.to_string() });
        }
        for name in r.covariates.keys() {
            if !covariates.contains(name) {
                v.push(Violation::RecordUnknownCovariate { record: i, name: name.clone() });
            }
        }
        for name in &data.covariate_names {
            match r.covariates.get(name) {
                None => v.push(Violation::RecordMissingCovariate { record: i, name: name.clone() }),
                Some(x) if !x.is_finite() => v.push(Violation::NonFiniteValue { record: i }),
                Some(_) => {}
            }
        }
    }
}

fn check_covariance(data: &ComparisonData, cov: &CovarianceModel, eps_pd: f64, v: &mut Vec<Violation>) {
    let m = data.n_records();
    let (rows, cols) = cov.v0.shape();
    if rows != m || cols != m {
        v.push(Violation::V0Shape { rows, cols, expected: m });
    } else if m > 0 {
        if !linalg::is_symmetric(&cov.v0, 1e-12) {
            v.push(Violation::V0NotSymmetric);
        }
        let (lo, hi) = linalg::eigen_extremes(&cov.v0);
        if !(hi > 0.0) || lo <= eps_pd * hi || !lo.is_finite() {
            v.push(Violation::V0NotPositiveDefinite { min_eigenvalue: lo, max_eigenvalue: hi });
        }
    }

    let l = data.n_participants();
    let (rows, cols) = cov.a_tilde.shape();
    if rows != l || cols != l {
        v.push(Violation::ATildeShape { rows, cols, expected: l });
    } else if l > 0 {
        if !linalg::is_symmetric(&cov.a_tilde, 1e-12) {
            v.push(Violation::ATildeNotSymmetric);
        }
        let (lo, hi) = linalg::eigen_extremes(&cov.a_tilde);
        if !(lo >= -eps_pd * hi.max(1.0)) {
            v.push(Violation::ATildeNotPositiveSemidefinite { min_eigenvalue: lo });
        }
    }
}

fn check_constraint(data: &ComparisonData, cons: &Constraint, v: &mut Vec<Violation>) {
    let mut sum = 0.0;
    let mut any_positive = false;
    for (p, &w) in &cons.weights {
        if !data.participants.contains(p) {
            v.push(Violation::WeightUnknownParticipant { id: p.to_string() });
        }
        if w < 0.0 || !w.is_finite() {
            v.push(Violation::NegativeWeight { participant: p.to_string(), weight: w });
        }
        any_positive |= w > 0.0;
        sum += w;
    }
    if !any_positive {
        v.push(Violation::AllWeightsZero);
    }
    if !((sum - 1.0).abs() <= 1e-12) {
        v.push(Violation::WeightsSum { sum });
    }
    if !cons.d.is_finite() {
        v.push(Violation::NonFiniteOffset);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e1() -> (ComparisonData, CovarianceModel, Constraint) {
        let data = ComparisonData::new(
            vec!["P1".into(), "P2".into()],
            vec!["A1".into()],
            vec![],
            vec![MeasurementRecord::new("P1", "A1", 1, 10.0), MeasurementRecord::new("P2", "A1", 1, 10.4)],
        );
        let cov = CovarianceModel::new(DMatrix::identity(2, 2), DMatrix::zeros(2, 2), 1, 0);
        let cons = Constraint::equal(&data.participants, 0.0);
        (data, cov, cons)
    }

    #[test]
    fn e1_is_valid() {
        let (data, cov, cons) = e1();
        let report = validate_comparison(&data, &cov, &cons);
        assert!(report.is_valid(), "{:?}", report.violations);
    }

    #[test]
    fn weights_must_sum_to_one() {
        let (data, cov, mut cons) = e1();
        cons.weights.insert("P2".into(), 0.4);
        let report = validate_comparison(&data, &cov, &cons);
        assert_eq!(report.violations.len(), 1);
        assert!(report.violations[0].to_string().starts_with("weights must sum to 1"));
    }

    #[test]
    fn indefinite_v0_is_flagged() {
        // eigenvalues of [[1,2],[2,1]] are 3 and -1
        let (data, mut cov, cons) = e1();
        cov.v0 = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let report = validate_comparison(&data, &cov, &cons);
        assert_eq!(report.violations.len(), 1);
        match &report.violations[0] {
            Violation::V0NotPositiveDefinite { min_eigenvalue, max_eigenvalue } => {
                assert!((min_eigenvalue + 1.0).abs() < 1e-12);
                assert!((max_eigenvalue - 3.0).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(report.violations[0].to_string().starts_with("V0 not positive definite"));
    }

    #[test]
    fn shape_and_reference_errors() {
        let (mut data, mut cov, mut cons) = e1();
        cov.v0 = DMatrix::identity(3, 3);
        cov.a_tilde = DMatrix::zeros(1, 1);
        data.records.push(MeasurementRecord::new("P9", "A1", 0, f64::NAN));
        data.records.push(MeasurementRecord::new("P1", "A1", 1, 10.0));
        cons.weights.insert("P9".into(), -0.5);
        let v = validate_comparison(&data, &cov, &cons).violations;
        let has = |pred: fn(&Violation) -> bool| v.iter().any(pred);
        assert!(has(|x| matches!(x, Violation::ATildeShape { .. })));
        assert!(has(|x| matches!(x, Violation::RecordUnknownParticipant { .. })));
        assert!(has(|x| matches!(x, Violation::ZeroRepeatIndex { .. })));
        assert!(has(|x| matches!(x, Violation::NonFiniteValue { .. })));
        assert!(has(|x| matches!(x, Violation::DuplicateRecord { .. })));
        assert!(has(|x| matches!(x, Violation::WeightUnknownParticipant { .. })));
        assert!(has(|x| matches!(x, Violation::NegativeWeight { .. })));
        // V0 is 3x3 but there are 4 records
        assert!(has(|x| matches!(x, Violation::V0Shape { expected: 4, .. })));
    }

    #[test]
    fn psd_tolerance_accepts_rounding() {
        let (data, mut cov, cons) = e1();
        // rank one, with a -1e-15 eigenvalue from rounding
        cov.a_tilde = DMatrix::from_row_slice(2, 2, &[0.01, 0.01, 0.01, 0.01 - 1e-15]);
        assert!(validate_comparison(&data, &cov, &cons).is_valid());
        cov.a_tilde = DMatrix::from_row_slice(2, 2, &[0.01, 0.02, 0.02, 0.01]);
        assert!(!validate_comparison(&data, &cov, &cons).is_valid());
    }

    #[test]
    fn covariate_roster_checks() {
        let (mut data, cov, cons) = e1();
        data.covariate_names.push("T".into());
        data.records[0].covariates.insert("T".into(), 0.3);
        data.records[1].covariates.insert("P".into(), 0.1);
        let v = validate_comparison(&data, &cov, &cons).violations;
        assert!(v.contains(&Violation::RecordUnknownCovariate { record: 1, name: "P".into() }));
        assert!(v.contains(&Violation::RecordMissingCovariate { record: 1, name: "T".into() }));
    }

    #[test]
    fn validation_is_idempotent() {
        let (data, mut cov, cons) = e1();
        cov.v0[(0, 1)] = 5.0;
        let a = validate_comparison(&data, &cov, &cons);
        let b = validate_comparison(&data, &cov, &cons);
        assert_eq!(a, b);
        assert!(!a.is_valid());
    }

    #[test]
    fn a_embedded_round_trips() {
        let a = DMatrix::from_row_slice(3, 3, &[0.1, 0.02, 0.0, 0.02, 0.3, 0.01, 0.0, 0.01, 0.2]);
        let cov = CovarianceModel::new(DMatrix::identity(4, 4), a.clone(), 2, 1);
        assert_eq!(cov.a_embedded.shape(), (6, 6));
        assert_eq!(cov.participant_block(), a);
        let rest = cov.a_embedded.sum() - a.sum();
        assert_eq!(rest, 0.0);
        assert_eq!(cov.a_embedded[(5, 5)], 0.0);
        assert_eq!(cov.a_embedded[(0, 0)], 0.0);
    }

    #[test]
    fn weight_vector_follows_roster() {
        let roster: Vec<ParticipantId> = vec!["B".into(), "A".into(), "C".into()];
        let cons = Constraint::reference("A", 0.0);
        let w = cons.weight_vector(&roster).unwrap();
        assert_eq!(w.as_slice(), &[0.0, 1.0, 0.0]);
        let bad = Constraint::reference("Z", 0.0);
        assert!(matches!(bad.weight_vector(&roster), Err(Error::UnknownParticipant(_))));
    }
}
