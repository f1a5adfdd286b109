//! Synthetic comparisons with known ground truth, a brute-force oracle for
//! the constrained estimate, and Monte Carlo checks of the analytic
//! covariance.
//!
//! Every draw is addressed by an index: draw `i` uses a ChaCha stream
//! `i` of the configured seed, so any subset of draws can be regenerated
//! independently and parallel runs match sequential ones bit for bit.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{build_design, check_linkage, DesignMatrix};
use crate::error::{Error, Result};
use crate::estimator::{CChoice, GlsOperator};
use crate::io::{ATildeSpec, ConstraintSpec, LowerTriangle, ParticipantCovariance, V0Block, V0Spec};
use crate::linalg;
use crate::model::{
    validate_comparison, ComparisonData, Constraint, CovarianceModel, MeasurementRecord, ParticipantId, Violation,
};

/// Smallest draw count accepted by [`monte_carlo_cov_check`].
pub const MIN_MC_DRAWS: usize = 10_000;

/// Tolerance on `w̃'Δ = d` for the declared true effects.
const TRUTH_CONSTRAINT_TOL: f64 = 1e-12;

/// One participant/artefact pairing and how often it was measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exchange {
    pub participant: String,
    pub artefact: String,
    pub repeats: u32,
    /// Covariate deviations for each repeat; may be omitted when the
    /// comparison has no covariates.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub covariates: Vec<BTreeMap<String, f64>>,
}

/// Everything needed to forward-sample a comparison.
///
/// Records are generated exchange by exchange, repeats in order; the `V0`
/// specification refers to records in that order. `V0` may be zero here,
/// which is useful for noiseless round trips but cannot be solved with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default)]
    pub unit: String,
    pub participants: Vec<String>,
    pub artefacts: Vec<String>,
    #[serde(default)]
    pub covariates: Vec<String>,
    pub exchanges: Vec<Exchange>,
    /// True artefact values, in artefact order.
    pub theta: Vec<f64>,
    /// True participant effects, in participant order.
    pub delta: Vec<f64>,
    /// True covariate coefficients, in covariate order.
    #[serde(default)]
    pub kappa: Vec<f64>,
    pub constraint: ConstraintSpec,
    #[serde(default)]
    pub a_tilde: ATildeSpec,
    pub v0: V0Spec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_draws")]
    pub draws: usize,
}

fn default_draws() -> usize {
    MIN_MC_DRAWS
}

impl SimulationConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Total number of records the configuration generates.
    pub fn n_records(&self) -> usize {
        self.exchanges.iter().map(|e| e.repeats as usize).sum()
    }
}

/// The values the simulation was generated from.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// `(θ', Δ', κ')'` in design-column order.
    pub beta: DVector<f64>,
    /// The systematic effects drawn for this dataset, in participant order.
    pub phi: DVector<f64>,
    /// The random errors drawn for this dataset, in record order.
    pub epsilon: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct SimulatedComparison {
    pub data: ComparisonData,
    pub cov: CovarianceModel,
    pub cons: Constraint,
    pub truth: GroundTruth,
}

/// The fixed part of a configuration: layout, covariances, true parameters
/// and the factors used to sample from `N(0, Ã)` and `N(0, V0)`.
#[derive(Debug, Clone)]
pub struct Simulator {
    seed: u64,
    template: ComparisonData,
    cov: CovarianceModel,
    cons: Constraint,
    design: DesignMatrix,
    beta: DVector<f64>,
    mean: DVector<f64>,
    a_factor: DMatrix<f64>,
    v0_factor: DMatrix<f64>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

impl Simulator {
    pub fn new(cfg: &SimulationConfig) -> Result<Self> {
        let (j, l, k) = (cfg.artefacts.len(), cfg.participants.len(), cfg.covariates.len());
        for (what, got, want) in
            [("theta", cfg.theta.len(), j), ("delta", cfg.delta.len(), l), ("kappa", cfg.kappa.len(), k)]
        {
            if got != want {
                return Err(invalid(format!("{what} has {got} entries, expected {want}")));
            }
        }

        let mut repeats: BTreeMap<(&str, &str), u32> = BTreeMap::new();
        let mut records = Vec::with_capacity(cfg.n_records());
        for e in &cfg.exchanges {
            if !e.covariates.is_empty() && e.covariates.len() != e.repeats as usize {
                return Err(invalid(format!(
                    "exchange {}/{} lists covariates for {} of {} repeats",
                    e.participant,
                    e.artefact,
                    e.covariates.len(),
                    e.repeats
                )));
            }
            for r in 0..e.repeats as usize {
                let next = repeats.entry((&e.participant, &e.artefact)).or_insert(0);
                *next += 1;
                let mut rec = MeasurementRecord::new(e.participant.as_str(), e.artefact.as_str(), *next, 0.0);
                rec.covariates = match e.covariates.get(r) {
                    Some(c) => c.clone(),
                    None => cfg.covariates.iter().map(|name| (name.clone(), 0.0)).collect(),
                };
                records.push(rec);
            }
        }
        let template = ComparisonData::new(
            cfg.participants.iter().map(|p| p.as_str().into()).collect(),
            cfg.artefacts.iter().map(|a| a.as_str().into()).collect(),
            cfg.covariates.clone(),
            records,
        );

        let v0 = cfg.v0.build(&template.records).map_err(|v| Error::Validation(vec![v]))?;
        let a_tilde = cfg.a_tilde.build(&template.participants).map_err(|v| Error::Validation(vec![v]))?;
        let cov = CovarianceModel::new(v0, a_tilde, j, k);
        let cons = Constraint::new(
            cfg.constraint.weights.iter().map(|(p, &w)| (ParticipantId::from(p.as_str()), w)).collect(),
            cfg.constraint.d,
        );

        // V0 only needs to be a covariance here, not an invertible one.
        let violations: Vec<Violation> = validate_comparison(&template, &cov, &cons)
            .violations
            .into_iter()
            .filter(|v| !matches!(v, Violation::V0NotPositiveDefinite { .. }))
            .collect();
        if !violations.is_empty() {
            return Err(Error::Validation(violations));
        }
        if !linalg::is_psd(&cov.v0, linalg::DEFAULT_EPS_PD) {
            return Err(invalid("V0 is not positive semidefinite"));
        }

        let linkage = check_linkage(&template);
        if !linkage.passed() {
            return Err(invalid(format!("exchange pattern is not linked ({} components)", linkage.components.len())));
        }

        let w_tilde = cons.weight_vector(&template.participants)?;
        let delta = DVector::from_column_slice(&cfg.delta);
        let gap = w_tilde.dot(&delta) - cons.d;
        if gap.abs() > TRUTH_CONSTRAINT_TOL * cons.d.abs().max(1.0) {
            return Err(invalid(format!("true effects miss the constraint: w'delta - d = {gap:e}")));
        }

        let beta = DVector::from_iterator(j + l + k, cfg.theta.iter().chain(&cfg.delta).chain(&cfg.kappa).copied());
        let design = build_design(&template)?;
        let mean = &design.x * &beta;
        Ok(Self {
            seed: cfg.seed,
            a_factor: linalg::psd_factor(&cov.a_tilde),
            v0_factor: linalg::psd_factor(&cov.v0),
            template,
            cov,
            cons,
            design,
            beta,
            mean,
        })
    }

    pub fn design(&self) -> &DesignMatrix {
        &self.design
    }

    pub fn covariance(&self) -> &CovarianceModel {
        &self.cov
    }

    pub fn constraint(&self) -> &Constraint {
        &self.cons
    }

    pub fn true_beta(&self) -> &DVector<f64> {
        &self.beta
    }

    fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }

    /// Observations and the random terms behind them for draw `index`.
    ///
    /// `φ` is drawn first (once per participant), then `ε`.
    pub fn draw(&self, index: u64) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let mut rng = self.rng(index);
        let mut normals =
            |len: usize| DVector::from_iterator(len, (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let l = self.template.n_participants();
        let m = self.template.n_records();
        let phi = &self.a_factor * normals(l);
        let epsilon = &self.v0_factor * normals(m);
        let j = self.template.n_artefacts();
        let x_phi = self.design.x.columns(j, l) * &phi;
        let y = &self.mean + x_phi + &epsilon;
        (y, phi, epsilon)
    }

    pub fn generate(&self, index: u64) -> SimulatedComparison {
        let (y, phi, epsilon) = self.draw(index);
        let mut data = self.template.clone();
        for (rec, &v) in data.records.iter_mut().zip(y.iter()) {
            rec.value = v;
        }
        SimulatedComparison {
            data,
            cov: self.cov.clone(),
            cons: self.cons.clone(),
            truth: GroundTruth { beta: self.beta.clone(), phi, epsilon },
        }
    }
}

/// Forward-samples `Y = Xβ + Xφ + ε` once (draw 0 of the configured seed).
pub fn generate_comparison(cfg: &SimulationConfig) -> Result<SimulatedComparison> {
    Ok(Simulator::new(cfg)?.generate(0))
}

/// Constrained GLS by brute force: solves the bordered system
///
/// ```text
/// | X'Σ⁻¹X  w | | β |   | X'Σ⁻¹y |
/// | w'      0 | | μ | = | d      |
/// ```
///
/// with pivoted LU. The border is scaled to the normal matrix so the pivot
/// test is meaningful whatever the units of `Σ`.
pub fn oracle_constrained_gls(
    x: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    w: &DVector<f64>,
    d: f64,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    let (m, n) = x.shape();
    if sigma.shape() != (m, m) || w.len() != n || y.len() != m {
        return Err(Error::DimensionMismatch("oracle inputs".into()));
    }
    let sigma_lu = sigma.clone().lu();
    let sinv_x = sigma_lu.solve(x).ok_or(Error::SingularKkt)?;
    let sinv_y = sigma_lu.solve(y).ok_or(Error::SingularKkt)?;
    let normal = x.transpose() * &sinv_x;
    let rhs_top = x.transpose() * &sinv_y;

    let scale = normal.amax().max(f64::MIN_POSITIVE);
    let mut kkt = DMatrix::zeros(n + 1, n + 1);
    kkt.view_mut((0, 0), (n, n)).copy_from(&normal);
    kkt.view_mut((0, n), (n, 1)).copy_from(&(w * scale));
    kkt.view_mut((n, 0), (1, n)).copy_from(&(w.transpose() * scale));
    let mut rhs = DVector::zeros(n + 1);
    rhs.rows_mut(0, n).copy_from(&rhs_top);
    rhs[n] = d * scale;

    let lu = kkt.lu();
    let u = lu.u();
    let pivots = u.diagonal().map(f64::abs);
    if pivots.min() <= 1e-12 * pivots.max() {
        return Err(Error::SingularKkt);
    }
    let sol = lu.solve(&rhs).ok_or(Error::SingularKkt)?;
    Ok(sol.rows(0, n).into_owned())
}

/// Empirical against analytic covariance of the estimates.
#[derive(Debug, Clone)]
pub struct MonteCarloReport {
    pub draws: usize,
    pub labels: Vec<String>,
    pub true_beta: DVector<f64>,
    pub mean: DVector<f64>,
    pub empirical_cov: DMatrix<f64>,
    /// Total analytic covariance, `cov_statistical + FAF'`.
    pub analytic_cov: DMatrix<f64>,
    pub analytic_cov_statistical: DMatrix<f64>,
    /// Standard error of each empirical covariance element.
    pub standard_errors: DMatrix<f64>,
    /// `(empirical - analytic) / standard error`, element-wise.
    pub studentized: DMatrix<f64>,
    pub max_abs_studentized: f64,
}

impl MonteCarloReport {
    pub fn within(&self, n_se: f64) -> bool {
        self.max_abs_studentized <= n_se
    }

    /// Studentized deviations against an arbitrary reference covariance.
    pub fn studentize_against(&self, reference: &DMatrix<f64>) -> DMatrix<f64> {
        studentize(&self.empirical_cov, reference, &self.standard_errors)
    }

    pub fn to_json_string(&self) -> Result<String> {
        let rows = |m: &DMatrix<f64>| m.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>();
        let value = serde_json::json!({
            "draws": self.draws,
            "labels": self.labels,
            "true_beta": self.true_beta.as_slice(),
            "mean": self.mean.as_slice(),
            "empirical_cov": rows(&self.empirical_cov),
            "analytic_cov": rows(&self.analytic_cov),
            "analytic_cov_statistical": rows(&self.analytic_cov_statistical),
            "standard_errors": rows(&self.standard_errors),
            "studentized": rows(&self.studentized.map(|z| if z.is_finite() { z } else { f64::MAX })),
            "max_abs_studentized": if self.max_abs_studentized.is_finite() { self.max_abs_studentized } else { f64::MAX },
        });
        Ok(serde_json::to_string_pretty(&value)?)
    }

    pub fn summary(&self) -> String {
        let mut out = format!(
            "draws: {}\nmax |studentized deviation|: {:.3}\n{:<24} {:>14} {:>14} {:>14} {:>8}\n",
            self.draws, self.max_abs_studentized, "parameter", "empirical var", "analytic var", "std error", "z"
        );
        for (i, name) in self.labels.iter().enumerate() {
            out.push_str(&format!(
                "{:<24} {:>14.6e} {:>14.6e} {:>14.3e} {:>8.3}\n",
                name,
                self.empirical_cov[(i, i)],
                self.analytic_cov[(i, i)],
                self.standard_errors[(i, i)],
                self.studentized[(i, i)],
            ));
        }
        out
    }
}

/// Elements whose standard error vanishes (for example, a reference
/// participant's effect) are exact in every draw; they score 0 if they also
/// agree with the reference to rounding and infinity otherwise.
fn studentize(empirical: &DMatrix<f64>, reference: &DMatrix<f64>, se: &DMatrix<f64>) -> DMatrix<f64> {
    let scale = reference.amax().max(empirical.amax()).max(f64::MIN_POSITIVE);
    DMatrix::from_fn(empirical.nrows(), empirical.ncols(), |i, j| {
        let diff = empirical[(i, j)] - reference[(i, j)];
        if se[(i, j)] > 1e-14 * scale {
            diff / se[(i, j)]
        } else if diff.abs() <= 1e-10 * scale {
            0.0
        } else {
            f64::INFINITY
        }
    })
}

/// Draws `n_draws` datasets, estimates each with one prepared operator, and
/// compares the sample covariance of the estimates with the analytic one.
///
/// The standard error of element `(i, j)` is the sample standard deviation
/// of the centred products `(b_i - b̄_i)(b_j - b̄_j)` over `√N`.
pub fn monte_carlo_cov_check(cfg: &SimulationConfig, n_draws: usize) -> Result<MonteCarloReport> {
    if n_draws < MIN_MC_DRAWS {
        return Err(invalid(format!("Monte Carlo needs at least {MIN_MC_DRAWS} draws, got {n_draws}")));
    }
    let sim = Simulator::new(cfg)?;
    let op = GlsOperator::augmented(sim.design(), sim.covariance(), sim.constraint(), CChoice::Auto)?;

    let estimates: Vec<DVector<f64>> =
        (0..n_draws as u64).into_par_iter().map(|i| op.estimate(&sim.draw(i).0)).collect();

    let n = sim.design().n_params();
    let big_n = n_draws as f64;
    let mut mean = DVector::zeros(n);
    for b in &estimates {
        mean += b;
    }
    mean /= big_n;

    let mut sum = DMatrix::zeros(n, n);
    let mut sum_sq = DMatrix::zeros(n, n);
    for b in &estimates {
        let c = b - &mean;
        let prod = &c * c.transpose();
        sum_sq += prod.component_mul(&prod);
        sum += prod;
    }
    let empirical_cov = &sum / (big_n - 1.0);
    let product_mean = &sum / big_n;
    let standard_errors = DMatrix::from_fn(n, n, |i, j| {
        let var = (sum_sq[(i, j)] / big_n - product_mean[(i, j)].powi(2)) * big_n / (big_n - 1.0);
        (var.max(0.0) / big_n).sqrt()
    });

    let analytic_cov = op.cov();
    let studentized = studentize(&empirical_cov, &analytic_cov, &standard_errors);
    let max_abs_studentized = studentized.iter().fold(0.0_f64, |a, &z| a.max(z.abs()));
    Ok(MonteCarloReport {
        draws: n_draws,
        labels: sim.design().columns.labels().into_iter().map(|(name, _)| name).collect(),
        true_beta: sim.true_beta().clone(),
        mean,
        empirical_cov,
        analytic_cov,
        analytic_cov_statistical: op.cov_statistical.clone(),
        standard_errors,
        studentized,
        max_abs_studentized,
    })
}

/// Size ranges for [`random_instance`].
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceParams {
    pub participants: (usize, usize),
    pub artefacts: (usize, usize),
    pub max_covariates: usize,
    pub max_records: usize,
    pub max_repeats: u32,
    pub offsets: Vec<f64>,
}

impl Default for InstanceParams {
    fn default() -> Self {
        Self {
            participants: (2, 10),
            artefacts: (1, 6),
            max_covariates: 1,
            max_records: 60,
            max_repeats: 3,
            offsets: vec![0.0, 0.3],
        }
    }
}

fn random_spd_block(rng: &mut impl Rng, p: usize) -> DMatrix<f64> {
    let scale = rng.gen_range(0.05..2.0);
    let g = DMatrix::from_fn(p, p, |_, _| rng.gen_range(-1.0..1.0));
    (DMatrix::identity(p, p) * 0.5 + &g * g.transpose() / p as f64) * scale
}

fn random_weights(rng: &mut impl Rng, l: usize) -> Vec<f64> {
    match rng.gen_range(0..3) {
        0 => vec![1.0 / l as f64; l],
        1 => {
            let mut w = vec![0.0; l];
            w[rng.gen_range(0..l)] = 1.0;
            w
        }
        _ => {
            let mut raw: Vec<f64> =
                (0..l).map(|_| if rng.gen_bool(0.25) { 0.0 } else { rng.gen_range(0.1..1.0) }).collect();
            if raw.iter().all(|&x| x == 0.0) {
                raw[0] = 1.0;
            }
            let s: f64 = raw.iter().sum();
            raw.iter().map(|x| x / s).collect()
        }
    }
}

/// Bipartite spanning tree over `l` participants and `j` artefacts, as
/// `(participant, artefact)` index pairs.
fn spanning_edges(rng: &mut impl Rng, l: usize, j: usize) -> Vec<(usize, usize)> {
    // node ids: participants 0..l, artefacts l..l+j
    let mut rest: Vec<usize> = (0..l + j).collect();
    rest.shuffle(rng);
    let first_p = rng.gen_range(0..l);
    let first_a = l + rng.gen_range(0..j);
    rest.retain(|&x| x != first_p && x != first_a);
    let mut tree = vec![(first_p, first_a - l)];
    let mut linked_p = vec![first_p];
    let mut linked_a = vec![first_a - l];
    for node in rest {
        if node < l {
            tree.push((node, *linked_a.choose(rng).unwrap()));
            linked_p.push(node);
        } else {
            tree.push((*linked_p.choose(rng).unwrap(), node - l));
            linked_a.push(node - l);
        }
    }
    tree
}

/// A random linked comparison: spanning tree plus extra exchanges, random
/// repeats, block-structured positive definite `V0`, positive semidefinite
/// `Ã` with off-diagonal terms, random weights and offset.
pub fn random_instance(rng: &mut impl Rng, params: &InstanceParams) -> SimulationConfig {
    let l = rng.gen_range(params.participants.0..=params.participants.1);
    let j = rng.gen_range(params.artefacts.0..=params.artefacts.1);
    let k = rng.gen_range(0..=params.max_covariates);
    let n = j + l + k;

    let mut edges = spanning_edges(rng, l, j);
    let extra = rng.gen_range(0..=(l + j) / 2);
    for _ in 0..extra {
        let e = (rng.gen_range(0..l), rng.gen_range(0..j));
        if !edges.contains(&e) && edges.len() < params.max_records {
            edges.push(e);
        }
    }
    edges.shuffle(rng);

    // one record per edge, then extra repeats while room remains; at least
    // `n` records so covariate columns are identifiable
    let mut repeats = vec![1u32; edges.len()];
    let mut total = edges.len();
    let capacity = (edges.len() * params.max_repeats as usize).min(params.max_records);
    let target = rng.gen_range(total.max(n)..=capacity.max(n));
    while total < target {
        let e = rng.gen_range(0..edges.len());
        if repeats[e] < params.max_repeats || total < n {
            repeats[e] += 1;
            total += 1;
        }
    }

    let participants: Vec<String> = (0..l).map(|i| format!("P{}", i + 1)).collect();
    let artefacts: Vec<String> = (0..j).map(|i| format!("A{}", i + 1)).collect();
    let covariates: Vec<String> = (0..k).map(|i| format!("x{}", i + 1)).collect();

    let exchanges: Vec<Exchange> = edges
        .iter()
        .zip(&repeats)
        .map(|(&(p, a), &r)| Exchange {
            participant: participants[p].clone(),
            artefact: artefacts[a].clone(),
            repeats: r,
            covariates: if k == 0 {
                Vec::new()
            } else {
                (0..r).map(|_| covariates.iter().map(|c| (c.clone(), rng.gen_range(-1.0..1.0))).collect()).collect()
            },
        })
        .collect();

    let mut per_participant = vec![0usize; l];
    for (&(p, _), &r) in edges.iter().zip(&repeats) {
        per_participant[p] += r as usize;
    }
    let blocks = (0..l)
        .filter(|&p| per_participant[p] > 0)
        .map(|p| {
            let b = random_spd_block(rng, per_participant[p]);
            let lower: LowerTriangle = (0..b.nrows()).map(|i| (0..=i).map(|c| b[(i, c)]).collect()).collect();
            V0Block { participant: participants[p].clone(), lower }
        })
        .collect();

    let rank = rng.gen_range(1..=l);
    let g = DMatrix::from_fn(l, rank, |_, _| rng.gen_range(-0.5..0.5));
    let a = &g * g.transpose() + DMatrix::from_fn(l, l, |r, c| if r == c { rng.gen_range(0.0..0.1) } else { 0.0 });
    let mut a_tilde = ATildeSpec::default();
    for (i, p) in participants.iter().enumerate() {
        a_tilde.variances.insert(p.clone(), a[(i, i)]);
        for c in 0..i {
            a_tilde.covariances.push(ParticipantCovariance {
                a: participants[c].clone(),
                b: p.clone(),
                covariance: a[(i, c)],
            });
        }
    }

    let weights = random_weights(rng, l);
    let d = *params.offsets.choose(rng).unwrap_or(&0.0);
    let mut delta: Vec<f64> = (0..l).map(|_| rng.gen_range(-1.0..1.0)).collect();
    // weights sum to one, so a common shift moves w'delta by the same amount
    let gap: f64 = weights.iter().zip(&delta).map(|(w, x)| w * x).sum::<f64>() - d;
    for x in &mut delta {
        *x -= gap;
    }

    SimulationConfig {
        unit: String::new(),
        participants: participants.clone(),
        artefacts,
        covariates,
        exchanges,
        theta: (0..j).map(|_| rng.gen_range(-5.0..5.0)).collect(),
        delta,
        kappa: (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        constraint: ConstraintSpec {
            weights: participants.iter().cloned().zip(weights).filter(|(_, w)| *w != 0.0).collect(),
            d,
        },
        a_tilde,
        v0: V0Spec::Blocks { blocks, cross: Vec::new() },
        seed: rng.gen(),
        draws: MIN_MC_DRAWS,
    }
}

/// Covariate-free data with a random exchange pattern that may or may not
/// be linked. With `force_disconnected`, participants and artefacts are
/// split into two groups that never exchange.
pub fn random_exchange_data(
    rng: &mut impl Rng,
    max_l: usize,
    max_j: usize,
    force_disconnected: bool,
) -> ComparisonData {
    let l = rng.gen_range(2..=max_l.max(2));
    let j = rng.gen_range(if force_disconnected { 2 } else { 1 }..=max_j.max(2));
    let split_p = rng.gen_range(1..l);
    let split_a = rng.gen_range(1..j.max(2));
    let density = rng.gen_range(0.15..0.9);

    let mut records = Vec::new();
    for p in 0..l {
        for a in 0..j {
            if force_disconnected && ((p < split_p) != (a < split_a)) {
                continue;
            }
            if rng.gen_bool(density) {
                for r in 1..=rng.gen_range(1..=2) {
                    records.push(MeasurementRecord::new(format!("P{}", p + 1), format!("A{}", a + 1), r, 0.0));
                }
            }
        }
    }
    ComparisonData::new(
        (0..l).map(|i| format!("P{}", i + 1).into()).collect(),
        (0..j).map(|i| format!("A{}", i + 1).into()).collect(),
        Vec::new(),
        records,
    )
}
