//! Comparison input files, result reports and exchange-graph export.
//!
//! Inputs and reports are JSON; the flat report is CSV. Floating-point
//! values are written in shortest round-trip form, so a report read back
//! reproduces every number exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::consistency::ConsistencyReport;
use crate::design::{check_linkage, DesignMatrix, ParamKind};
use crate::error::{Error, Result};
use crate::estimator::{GlsSolution, Method, MethodComparison};
use crate::model::{
    validate_comparison, ArtefactId, ComparisonData, Constraint, CovarianceModel, MeasurementRecord, ParticipantId,
    Violation,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RosterEntry {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<serde_json::Value>,
}

impl RosterEntry {
    pub fn new(id: impl Into<String>) -> Self {
        Self { id: id.into(), metadata: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementEntry {
    pub participant: String,
    pub artefact: String,
    pub repeat: u32,
    pub value: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub covariates: BTreeMap<String, f64>,
}

/// Lower triangle of a symmetric block: row `i` holds `i + 1` entries.
pub type LowerTriangle = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct V0Block {
    pub participant: String,
    /// Covariance over this participant's records, in record order.
    pub lower: LowerTriangle,
}

/// Covariance between two records, addressed by 0-based record index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordCovariance {
    pub i: usize,
    pub j: usize,
    pub covariance: f64,
}

/// How the random-error covariance `V0` is written down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum V0Spec {
    /// One variance per record.
    Diagonal { variances: Vec<f64> },
    /// One dense block per participant plus optional cross-participant terms.
    Blocks {
        blocks: Vec<V0Block>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        cross: Vec<RecordCovariance>,
    },
    /// The whole `m x m` lower triangle.
    Dense { lower: LowerTriangle },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticipantCovariance {
    pub a: String,
    pub b: String,
    pub covariance: f64,
}

/// Systematic-effect covariance `Ã`: per-participant variances (missing
/// entries are zero) and optional pairwise covariances.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ATildeSpec {
    #[serde(default)]
    pub variances: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub covariances: Vec<ParticipantCovariance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    pub weights: BTreeMap<String, f64>,
    #[serde(default)]
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonFile {
    pub schema_version: u32,
    #[serde(default)]
    pub unit: String,
    pub participants: Vec<RosterEntry>,
    pub artefacts: Vec<RosterEntry>,
    #[serde(default)]
    pub covariates: Vec<String>,
    pub measurements: Vec<MeasurementEntry>,
    pub v0: V0Spec,
    #[serde(default)]
    pub a_tilde: ATildeSpec,
    pub constraint: ConstraintSpec,
}

fn spec_err(detail: impl Into<String>) -> Violation {
    Violation::CovarianceSpec { detail: detail.into() }
}

fn fill_lower(target: &mut DMatrix<f64>, rows: &[usize], lower: &LowerTriangle, what: &str) -> Result<(), Violation> {
    if lower.len() != rows.len() {
        return Err(spec_err(format!("{what}: expected {} rows, found {}", rows.len(), lower.len())));
    }
    for (i, row) in lower.iter().enumerate() {
        if row.len() != i + 1 {
            return Err(spec_err(format!("{what}: row {i} has {} entries, expected {}", row.len(), i + 1)));
        }
        for (j, &x) in row.iter().enumerate() {
            target[(rows[i], rows[j])] = x;
            target[(rows[j], rows[i])] = x;
        }
    }
    Ok(())
}

impl V0Spec {
    /// Dense `V0` over `records`, filled symmetrically.
    pub fn build(&self, records: &[MeasurementRecord]) -> Result<DMatrix<f64>, Violation> {
        let m = records.len();
        let mut v0 = DMatrix::zeros(m, m);
        match self {
            V0Spec::Diagonal { variances } => {
                if variances.len() != m {
                    return Err(spec_err(format!("diagonal V0 has {} variances for {m} records", variances.len())));
                }
                v0.set_diagonal(&nalgebra::DVector::from_column_slice(variances));
            }
            V0Spec::Dense { lower } => {
                let rows: Vec<usize> = (0..m).collect();
                fill_lower(&mut v0, &rows, lower, "dense V0")?;
            }
            V0Spec::Blocks { blocks, cross } => {
                let mut covered = vec![false; m];
                let mut seen = BTreeMap::new();
                for block in blocks {
                    if seen.insert(block.participant.as_str(), ()).is_some() {
                        return Err(spec_err(format!("duplicate V0 block for `{}`", block.participant)));
                    }
                    let rows: Vec<usize> = records
                        .iter()
                        .enumerate()
                        .filter(|(_, r)| r.participant.as_str() == block.participant)
                        .map(|(i, _)| i)
                        .collect();
                    fill_lower(&mut v0, &rows, &block.lower, &format!("V0 block `{}`", block.participant))?;
                    for &r in &rows {
                        covered[r] = true;
                    }
                }
                if let Some(i) = covered.iter().position(|c| !c) {
                    return Err(spec_err(format!(
                        "record {i} (participant `{}`) is not covered by any V0 block",
                        records[i].participant
                    )));
                }
                for c in cross {
                    if c.i >= m || c.j >= m || c.i == c.j {
                        return Err(spec_err(format!("cross entry ({}, {}) is out of range or diagonal", c.i, c.j)));
                    }
                    v0[(c.i, c.j)] = c.covariance;
                    v0[(c.j, c.i)] = c.covariance;
                }
            }
        }
        Ok(v0)
    }

    /// Dense lower triangle of an existing matrix.
    pub fn dense(v0: &DMatrix<f64>) -> Self {
        V0Spec::Dense { lower: lower_triangle(v0) }
    }
}

fn lower_triangle(m: &DMatrix<f64>) -> LowerTriangle {
    (0..m.nrows()).map(|i| (0..=i).map(|j| m[(i, j)]).collect()).collect()
}

impl ATildeSpec {
    pub fn build(&self, participants: &[ParticipantId]) -> Result<DMatrix<f64>, Violation> {
        let l = participants.len();
        let index = |id: &str| {
            participants
                .iter()
                .position(|p| p.as_str() == id)
                .ok_or_else(|| spec_err(format!("A~ refers to unknown participant `{id}`")))
        };
        let mut a = DMatrix::zeros(l, l);
        for (id, &var) in &self.variances {
            let i = index(id)?;
            a[(i, i)] = var;
        }
        for c in &self.covariances {
            let (i, j) = (index(&c.a)?, index(&c.b)?);
            if i == j {
                return Err(spec_err(format!("A~ covariance pairs `{}` with itself", c.a)));
            }
            a[(i, j)] = c.covariance;
            a[(j, i)] = c.covariance;
        }
        Ok(a)
    }

    /// All diagonal entries and every non-zero off-diagonal pair.
    pub fn from_matrix(a: &DMatrix<f64>, participants: &[ParticipantId]) -> Self {
        let l = participants.len();
        let variances = participants.iter().enumerate().map(|(i, p)| (p.to_string(), a[(i, i)])).collect();
        let mut covariances = Vec::new();
        for i in 0..l {
            for j in 0..i {
                if a[(i, j)] != 0.0 {
                    covariances.push(ParticipantCovariance {
                        a: participants[j].to_string(),
                        b: participants[i].to_string(),
                        covariance: a[(i, j)],
                    });
                }
            }
        }
        Self { variances, covariances }
    }
}

impl ComparisonFile {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: Self = serde_json::from_str(s)?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        Ok(file)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Assembled domain objects; every invariant is checked and all
    /// violations are reported together.
    pub fn to_domain(&self) -> Result<(ComparisonData, CovarianceModel, Constraint)> {
        let records: Vec<MeasurementRecord> = self
            .measurements
            .iter()
            .map(|e| MeasurementRecord {
                participant: e.participant.as_str().into(),
                artefact: e.artefact.as_str().into(),
                repeat: e.repeat,
                value: e.value,
                covariates: e.covariates.clone(),
            })
            .collect();
        let data = ComparisonData::new(
            self.participants.iter().map(|p| p.id.as_str().into()).collect(),
            self.artefacts.iter().map(|a| a.id.as_str().into()).collect(),
            self.covariates.clone(),
            records,
        );

        let mut violations = Vec::new();
        let v0 = self.v0.build(&data.records).unwrap_or_else(|v| {
            violations.push(v);
            DMatrix::zeros(0, 0)
        });
        let a_tilde = self.a_tilde.build(&data.participants).unwrap_or_else(|v| {
            violations.push(v);
            DMatrix::zeros(0, 0)
        });
        if !violations.is_empty() {
            return Err(Error::Validation(violations));
        }

        let cov = CovarianceModel::new(v0, a_tilde, data.n_artefacts(), data.n_covariates());
        let cons = Constraint::new(
            self.constraint.weights.iter().map(|(k, &w)| (ParticipantId::from(k.as_str()), w)).collect(),
            self.constraint.d,
        );
        validate_comparison(&data, &cov, &cons).into_result()?;
        Ok((data, cov, cons))
    }

    /// A file that reproduces the given objects exactly (`V0` written dense).
    pub fn from_domain(data: &ComparisonData, cov: &CovarianceModel, cons: &Constraint, unit: &str) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            unit: unit.to_owned(),
            participants: data.participants.iter().map(|p| RosterEntry::new(p.as_str())).collect(),
            artefacts: data.artefacts.iter().map(|a| RosterEntry::new(a.as_str())).collect(),
            covariates: data.covariate_names.clone(),
            measurements: data
                .records
                .iter()
                .map(|r| MeasurementEntry {
                    participant: r.participant.to_string(),
                    artefact: r.artefact.to_string(),
                    repeat: r.repeat,
                    value: r.value,
                    covariates: r.covariates.clone(),
                })
                .collect(),
            v0: V0Spec::dense(&cov.v0),
            a_tilde: ATildeSpec::from_matrix(&cov.a_tilde, &data.participants),
            constraint: ConstraintSpec {
                weights: cons.weights.iter().map(|(k, &w)| (k.to_string(), w)).collect(),
                d: cons.d,
            },
        }
    }
}

pub fn read_comparison_file(path: impl AsRef<Path>) -> Result<ComparisonFile> {
    ComparisonFile::from_json_str(&fs::read_to_string(path)?)
}

pub fn parse_comparison_file(path: impl AsRef<Path>) -> Result<(ComparisonData, CovarianceModel, Constraint)> {
    read_comparison_file(path)?.to_domain()
}

pub fn write_comparison_file(file: &ComparisonFile, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, file.to_json_string()?)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(format!("unknown report format `{s}` (expected json or csv)")),
        }
    }
}

/// One row of the flat report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterRow {
    pub name: String,
    pub kind: ParamKind,
    pub estimate: f64,
    pub variance_statistical: f64,
    pub variance_adjustment: f64,
    pub variance_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodAgreement {
    pub methods: Vec<Method>,
    pub max_b_rel_dev: f64,
    pub max_cov_rel_dev: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub method: Method,
    pub c_used: Option<f64>,
    pub unit: String,
    pub parameters: Vec<ParameterRow>,
    pub cov: Vec<Vec<f64>>,
    pub cov_statistical: Vec<Vec<f64>>,
    pub cov_adjustment: Vec<Vec<f64>>,
    pub consistency: ConsistencyReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method_agreement: Option<MethodAgreement>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl Report {
    pub fn new(dm: &DesignMatrix, sol: &GlsSolution, consistency: ConsistencyReport, unit: &str) -> Self {
        let parameters = dm
            .columns
            .labels()
            .into_iter()
            .enumerate()
            .map(|(i, (name, kind))| ParameterRow {
                name,
                kind,
                estimate: sol.b[i],
                variance_statistical: sol.cov_statistical[(i, i)],
                variance_adjustment: sol.cov_adjustment[(i, i)],
                variance_total: sol.cov[(i, i)],
            })
            .collect();
        Self {
            tool: env!("CARGO_PKG_NAME").to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            method: sol.method,
            c_used: sol.c_used,
            unit: unit.to_owned(),
            parameters,
            cov: rows(&sol.cov),
            cov_statistical: rows(&sol.cov_statistical),
            cov_adjustment: rows(&sol.cov_adjustment),
            consistency,
            method_agreement: None,
        }
    }

    pub fn with_agreement(mut self, cmp: &MethodComparison, tolerance: f64) -> Self {
        self.method_agreement = Some(MethodAgreement {
            methods: cmp.solutions.iter().map(|s| s.method).collect(),
            max_b_rel_dev: cmp.max_b_rel_dev,
            max_cov_rel_dev: cmp.max_cov_rel_dev,
            tolerance,
            passed: cmp.agrees_within(tolerance),
        });
        self
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.parameters {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn render(&self, format: ReportFormat) -> Result<String> {
        match format {
            ReportFormat::Json => self.to_json_string(),
            ReportFormat::Csv => self.to_csv_string(),
        }
    }
}

pub fn write_report(report: &Report, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    fs::write(path, report.render(format)?)?;
    Ok(())
}

pub fn read_report(path: impl AsRef<Path>) -> Result<Report> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn read_report_table(path: impl AsRef<Path>) -> Result<Vec<ParameterRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<ParameterRow>, _>>()?)
}

fn dot_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn participant_node(p: &ParticipantId) -> String {
    dot_quote(&format!("participant:{p}"))
}

fn artefact_node(a: &ArtefactId) -> String {
    dot_quote(&format!("artefact:{a}"))
}

/// Graphviz DOT description of who measured what: participants are boxes,
/// artefacts ellipses, and each edge is labelled with its number of
/// measurements. Each connected component is drawn as its own cluster.
pub fn exchange_graph_dot(data: &ComparisonData) -> String {
    let mut counts: Vec<((&ParticipantId, &ArtefactId), usize)> = Vec::new();
    for r in &data.records {
        match counts.iter_mut().find(|((p, a), _)| *p == &r.participant && *a == &r.artefact) {
            Some((_, n)) => *n += 1,
            None => counts.push(((&r.participant, &r.artefact), 1)),
        }
    }

    let mut out = String::from("graph exchange {\n");
    for (k, comp) in check_linkage(data).components.iter().enumerate() {
        let _ = writeln!(out, "  subgraph cluster_{k} {{");
        let _ = writeln!(out, "    label=\"component {}\";", k + 1);
        for p in &comp.participants {
            let _ = writeln!(out, "    {} [label={}, shape=box];", participant_node(p), dot_quote(p.as_str()));
        }
        for a in &comp.artefacts {
            let _ = writeln!(out, "    {} [label={}, shape=ellipse];", artefact_node(a), dot_quote(a.as_str()));
        }
        out.push_str("  }\n");
    }
    for ((p, a), n) in counts {
        let _ = writeln!(out, "  {} -- {} [label=\"{n}\"];", participant_node(p), artefact_node(a));
    }
    out.push_str("}\n");
    out
}

pub fn export_exchange_graph(data: &ComparisonData, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, exchange_graph_dot(data))?;
    Ok(())
}
