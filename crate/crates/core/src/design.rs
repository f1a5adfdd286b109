//! Design matrix construction and the identifiability (linkage) check.
//!
//! Columns are ordered artefacts, participants, covariates, each in roster
//! order, so `β' = (Θ' Λ' κ')`. Every row holds a single 1 in the artefact
//! block and a single 1 in the participant block, which makes
//! `f = (-1_J', 1_L', 0_K')'` an exact null vector of `X`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use petgraph::unionfind::UnionFind;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, DEFAULT_RANK_TOL};
use crate::model::{ArtefactId, ComparisonData, Constraint, ParticipantId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Artefact,
    Participant,
    Covariate,
}

/// Labels of the columns of `X` (equivalently the entries of `β`).
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMap {
    pub artefacts: Vec<ArtefactId>,
    pub participants: Vec<ParticipantId>,
    pub covariates: Vec<String>,
}

impl ColumnMap {
    pub fn n_params(&self) -> usize {
        self.artefacts.len() + self.participants.len() + self.covariates.len()
    }

    pub fn artefact_col(&self, j: usize) -> usize {
        j
    }

    pub fn participant_col(&self, l: usize) -> usize {
        self.artefacts.len() + l
    }

    pub fn covariate_col(&self, k: usize) -> usize {
        self.artefacts.len() + self.participants.len() + k
    }

    pub fn participant_range(&self) -> std::ops::Range<usize> {
        let j = self.artefacts.len();
        j..j + self.participants.len()
    }

    /// `(name, kind)` for every column in order.
    pub fn labels(&self) -> Vec<(String, ParamKind)> {
        let a = self.artefacts.iter().map(|x| (x.to_string(), ParamKind::Artefact));
        let p = self.participants.iter().map(|x| (x.to_string(), ParamKind::Participant));
        let c = self.covariates.iter().map(|x| (x.clone(), ParamKind::Covariate));
        a.chain(p).chain(c).collect()
    }
}

/// One connected piece of the participant/artefact exchange graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Component {
    pub participants: Vec<ParticipantId>,
    pub artefacts: Vec<ArtefactId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LinkageResult {
    /// Components ordered by their first roster member (artefacts first).
    pub components: Vec<Component>,
}

impl LinkageResult {
    pub fn passed(&self) -> bool {
        self.components.len() == 1
    }
}

/// Outcome of the identifiability checks made when `X` is built.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankCertificate {
    pub linkage: LinkageResult,
    /// Numeric rank of `X` (singular values, relative tolerance 1e-10).
    pub rank_x: usize,
    pub n_params: usize,
}

impl RankCertificate {
    /// Linkage passes and `rank(X) = n - 1`.
    pub fn identifiable(&self) -> bool {
        self.linkage.passed() && self.rank_x + 1 == self.n_params
    }

    pub fn describe(&self) -> String {
        if !self.linkage.passed() {
            format!("exchange graph has {} components", self.linkage.components.len())
        } else if self.rank_x + 1 != self.n_params {
            format!("rank(X) = {} but n - 1 = {} (covariate columns are degenerate)", self.rank_x, self.n_params - 1)
        } else {
            "identifiable".to_owned()
        }
    }
}

#[derive(Debug, Clone)]
pub struct DesignMatrix {
    /// `m x n` design matrix.
    pub x: DMatrix<f64>,
    /// Observation vector `Y` in record order.
    pub y: DVector<f64>,
    pub columns: ColumnMap,
    /// Canonical null vector, `X f = 0`.
    pub f: DVector<f64>,
    pub rank_certificate: RankCertificate,
}

impl DesignMatrix {
    pub fn n_records(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_artefacts(&self) -> usize {
        self.columns.artefacts.len()
    }

    /// Residual degrees of freedom `m - (n - 1)`.
    pub fn dof(&self) -> usize {
        (self.n_records() + 1).saturating_sub(self.n_params())
    }
}

pub fn build_design(data: &ComparisonData) -> Result<DesignMatrix> {
    let j = data.n_artefacts();
    let l = data.n_participants();
    let k = data.n_covariates();
    let n = j + l + k;
    let m = data.n_records();

    let mut x = DMatrix::zeros(m, n);
    for (row, r) in data.records.iter().enumerate() {
        let a = data.artefact_index(&r.artefact).ok_or_else(|| Error::UnknownArtefact(r.artefact.to_string()))?;
        let p = data
            .participant_index(&r.participant)
            .ok_or_else(|| Error::UnknownParticipant(r.participant.to_string()))?;
        x[(row, a)] = 1.0;
        x[(row, j + p)] = 1.0;
        for (c, name) in data.covariate_names.iter().enumerate() {
            let dev =
                r.covariates.get(name).ok_or_else(|| Error::MissingCovariate { record: row, name: name.clone() })?;
            x[(row, j + l + c)] = *dev;
        }
    }

    let f = canonical_null_vector(j, l, k);

    let rank_certificate = RankCertificate {
        linkage: check_linkage(data),
        rank_x: linalg::numeric_rank(&x, DEFAULT_RANK_TOL),
        n_params: n,
    };

    Ok(DesignMatrix {
        x,
        y: data.observations(),
        columns: ColumnMap {
            artefacts: data.artefacts.clone(),
            participants: data.participants.clone(),
            covariates: data.covariate_names.clone(),
        },
        f,
        rank_certificate,
    })
}

/// `(-1_J', 1_L', 0_K')'`.
pub fn canonical_null_vector(j: usize, l: usize, k: usize) -> DVector<f64> {
    DVector::from_iterator(
        j + l + k,
        std::iter::repeat_n(-1.0, j).chain(std::iter::repeat_n(1.0, l)).chain(std::iter::repeat_n(0.0, k)),
    )
}

/// Connected components of the bipartite graph whose nodes are the rostered
/// participants and artefacts, with an edge for every record pairing them.
pub fn check_linkage(data: &ComparisonData) -> LinkageResult {
    let j = data.n_artefacts();
    let l = data.n_participants();
    let mut uf = UnionFind::<usize>::new(j + l);
    for r in &data.records {
        if let (Some(a), Some(p)) = (data.artefact_index(&r.artefact), data.participant_index(&r.participant)) {
            uf.union(a, j + p);
        }
    }

    let mut groups: BTreeMap<usize, usize> = BTreeMap::new();
    let mut components: Vec<Component> = Vec::new();
    for node in 0..j + l {
        let root = uf.find(node);
        let idx = *groups.entry(root).or_insert_with(|| {
            components.push(Component { participants: Vec::new(), artefacts: Vec::new() });
            components.len() - 1
        });
        if node < j {
            components[idx].artefacts.push(data.artefacts[node].clone());
        } else {
            components[idx].participants.push(data.participants[node - j].clone());
        }
    }
    LinkageResult { components }
}

/// The full `n`-vector `w = (0_J', w̃', 0_K')'`.
pub fn embed_constraint(cons: &Constraint, dm: &DesignMatrix) -> Result<DVector<f64>> {
    let w_tilde = cons.weight_vector(&dm.columns.participants)?;
    let mut w = DVector::zeros(dm.n_params());
    w.rows_mut(dm.n_artefacts(), w_tilde.len()).copy_from(&w_tilde);
    Ok(w)
}
