//! Constrained GLS estimators of `β` under `w'β = d`.
//!
//! Four routes are provided and they agree to rounding:
//!
//! * **reduced**: reparametrise `β = S β̃` with `S` an orthonormal basis of
//!   `w⊥`, solve the unconstrained GLS problem in `β̃`;
//! * **augmented**: solve `(X'V0⁻¹X + c·ww') b = X'V0⁻¹Y` for any `c > 0`
//!   and correct the covariance by `-ff'/{c(w'f)²}`;
//! * **full**: the augmented route with `V0 + XAX'` in place of `V0` and no
//!   separate random-effect term;
//! * **projection**: take any solution under another constraint and map it
//!   with `F = I - fw'/(w'f)`.
//!
//! In every route except `full` the systematic-effect covariance `A` enters
//! only through the additive term `FAF'`; the estimate `b` never depends
//! on it.
//!
//! A non-zero `d` is handled once for all routes: the data are shifted to
//! `Y - ď·Xw` with `ď = d/‖w‖²`, the `d = 0` problem is solved, and `ď·w` is
//! added back to the estimate.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::adjustment::covariance_adjustment;
use crate::design::{embed_constraint, DesignMatrix};
use crate::error::{Error, Result};
use crate::linalg::{self, SpdFactorization, DEFAULT_EPS_PD};
use crate::model::{Constraint, CovarianceModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Reduced,
    Augmented,
    Full,
    Projection,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Reduced, Method::Augmented, Method::Full, Method::Projection];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Reduced => "reduced",
            Method::Augmented => "augmented",
            Method::Full => "full",
            Method::Projection => "projection",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Method::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| format!("unknown method `{s}`"))
    }
}

/// Scalar `c` of the augmented normal matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum CChoice {
    /// `trace(X'V0⁻¹X) / n`.
    #[default]
    Auto,
    Value(f64),
}

impl FromStr for CChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(CChoice::Auto);
        }
        let c: f64 = s.parse().map_err(|_| format!("c must be `auto` or a number, got `{s}`"))?;
        if c == 0.0 || !c.is_finite() {
            return Err("c must be finite and non-zero".into());
        }
        Ok(CChoice::Value(c))
    }
}

/// `F = I - f w'/(w'f)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorF {
    pub f: DVector<f64>,
    pub w: DVector<f64>,
    /// `w / ‖w‖₂`.
    pub v: DVector<f64>,
    pub matrix: DMatrix<f64>,
}

impl ProjectorF {
    pub fn wf(&self) -> f64 {
        self.w.dot(&self.f)
    }
}

pub fn build_projector(f: &DVector<f64>, w: &DVector<f64>) -> Result<ProjectorF> {
    if f.len() != w.len() {
        return Err(Error::DimensionMismatch(format!("f has {} entries, w has {}", f.len(), w.len())));
    }
    let wf = w.dot(f);
    if !(wf.abs() >= 1e-12) {
        return Err(Error::DegenerateConstraint { wf });
    }
    let n = f.len();
    let matrix = DMatrix::identity(n, n) - f * w.transpose() / wf;
    Ok(ProjectorF { f: f.clone(), w: w.clone(), v: w.normalize(), matrix })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlsSolution {
    /// Estimates `(θ̂', Δ̂', κ̂')'`.
    pub b: DVector<f64>,
    /// Total covariance, `cov_statistical + cov_adjustment`.
    pub cov: DMatrix<f64>,
    pub cov_statistical: DMatrix<f64>,
    /// `FAF'`; zero for [`Method::Full`], which folds `A` into the statistical term.
    pub cov_adjustment: DMatrix<f64>,
    pub method: Method,
    pub c_used: Option<f64>,
    /// `Y - X b`.
    pub residuals: DVector<f64>,
    /// `m - (n - 1)`.
    pub dof: usize,
}

impl GlsSolution {
    fn assemble(
        b: DVector<f64>,
        cov_statistical: DMatrix<f64>,
        cov_adjustment: DMatrix<f64>,
        method: Method,
        c_used: Option<f64>,
        residuals: DVector<f64>,
        dof: usize,
    ) -> Self {
        let cov = linalg::symmetrize(&(&cov_statistical + &cov_adjustment));
        Self { b, cov, cov_statistical, cov_adjustment, method, c_used, residuals, dof }
    }

    /// `w'b - d`.
    pub fn constraint_residual(&self, w: &DVector<f64>, d: f64) -> f64 {
        w.dot(&self.b) - d
    }
}

/// A constrained GLS estimator prepared for fixed design and covariances.
///
/// The estimate is linear in `Y`, so Monte Carlo studies can reuse one
/// operator for every draw.
#[derive(Debug, Clone)]
pub struct GlsOperator {
    pub method: Method,
    pub c_used: Option<f64>,
    /// `n x m` map from the shifted observations to the `d = 0` estimate.
    gain: DMatrix<f64>,
    x: DMatrix<f64>,
    w: DVector<f64>,
    d: f64,
    pub cov_statistical: DMatrix<f64>,
    pub cov_adjustment: DMatrix<f64>,
    dof: usize,
}

struct Prepared {
    w: DVector<f64>,
    proj: ProjectorF,
}

fn prepare(dm: &DesignMatrix, cov: &CovarianceModel, cons: &Constraint) -> Result<Prepared> {
    let (m, n) = dm.x.shape();
    if cov.v0.shape() != (m, m) {
        return Err(Error::DimensionMismatch(format!("V0 is {:?}, expected {m}x{m}", cov.v0.shape())));
    }
    if cov.a_embedded.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!("embedded A is {:?}, expected {n}x{n}", cov.a_embedded.shape())));
    }
    let w = embed_constraint(cons, dm)?;
    let proj = build_projector(&dm.f, &w)?;
    Ok(Prepared { w, proj })
}

fn factor_v0(v0: &DMatrix<f64>) -> Result<SpdFactorization> {
    SpdFactorization::new(v0, DEFAULT_EPS_PD).ok_or(Error::NotPositiveDefinite { context: "V0" })
}

fn auto_c(normal: &DMatrix<f64>) -> f64 {
    normal.trace() / normal.nrows() as f64
}

impl GlsOperator {
    /// Reparametrised route: `b = S(S'X'V0⁻¹XS)⁻¹S'X'V0⁻¹Y`.
    pub fn reduced(dm: &DesignMatrix, cov: &CovarianceModel, cons: &Constraint) -> Result<Self> {
        let Prepared { w, proj } = prepare(dm, cov, cons)?;
        Self::reduced_with(dm, cov, w, cons.d, &proj)
    }

    fn reduced_with(
        dm: &DesignMatrix,
        cov: &CovarianceModel,
        w: DVector<f64>,
        d: f64,
        proj: &ProjectorF,
    ) -> Result<Self> {
        if !dm.rank_certificate.identifiable() {
            return Err(Error::SingularReducedSystem(dm.rank_certificate.describe()));
        }
        let v0 = factor_v0(&cov.v0)?;
        let vinv_x = v0.solve(&dm.x);
        let normal = linalg::symmetrize(&(dm.x.transpose() * &vinv_x));

        let s = linalg::orthonormal_complement(&proj.v)?;
        let q = linalg::symmetrize(&(s.transpose() * &normal * &s));
        let qf = SpdFactorization::new(&q, DEFAULT_EPS_PD)
            .ok_or_else(|| Error::SingularReducedSystem("S'X'V0^-1 XS failed the PD check".into()))?;

        let gain = &s * qf.solve(&(s.transpose() * vinv_x.transpose()));
        let cov_statistical = linalg::symmetrize(&(&s * qf.inverse() * s.transpose()));
        let cov_adjustment = covariance_adjustment(&cov.a_embedded, proj);

        Ok(Self {
            method: Method::Reduced,
            c_used: None,
            gain,
            x: dm.x.clone(),
            w,
            d,
            cov_statistical,
            cov_adjustment,
            dof: dm.dof(),
        })
    }

    /// Augmented normal equations: `b = (X'V0⁻¹X + c·ww')⁻¹X'V0⁻¹Y`.
    pub fn augmented(dm: &DesignMatrix, cov: &CovarianceModel, cons: &Constraint, c: CChoice) -> Result<Self> {
        let Prepared { w, proj } = prepare(dm, cov, cons)?;
        if !dm.rank_certificate.identifiable() {
            return Err(Error::SingularAugmentedSystem(dm.rank_certificate.describe()));
        }
        let v0 = factor_v0(&cov.v0)?;
        let (gain, cov_statistical, c) = augmented_parts(&dm.x, &v0, &w, &proj, c)?;
        Ok(Self {
            method: Method::Augmented,
            c_used: Some(c),
            gain,
            x: dm.x.clone(),
            w,
            d: cons.d,
            cov_statistical,
            cov_adjustment: covariance_adjustment(&cov.a_embedded, &proj),
            dof: dm.dof(),
        })
    }

    /// Augmented route on the full covariance `V0 + XAX'`, with `A` set to
    /// zero in the covariance formula.
    pub fn full(dm: &DesignMatrix, cov: &CovarianceModel, cons: &Constraint, c: CChoice) -> Result<Self> {
        let Prepared { w, proj } = prepare(dm, cov, cons)?;
        if !dm.rank_certificate.identifiable() {
            return Err(Error::SingularAugmentedSystem(dm.rank_certificate.describe()));
        }
        let sigma = linalg::symmetrize(&(&cov.v0 + &dm.x * &cov.a_embedded * dm.x.transpose()));
        let sigma = SpdFactorization::new(&sigma, DEFAULT_EPS_PD).ok_or(Error::SingularFullCovariance)?;
        let (gain, cov_statistical, c) = augmented_parts(&dm.x, &sigma, &w, &proj, c)?;
        let n = dm.n_params();
        Ok(Self {
            method: Method::Full,
            c_used: Some(c),
            gain,
            x: dm.x.clone(),
            w,
            d: cons.d,
            cov_statistical,
            cov_adjustment: DMatrix::zeros(n, n),
            dof: dm.dof(),
        })
    }

    pub fn build(
        method: Method,
        dm: &DesignMatrix,
        cov: &CovarianceModel,
        cons: &Constraint,
        c: CChoice,
    ) -> Result<Self> {
        match method {
            Method::Reduced => Self::reduced(dm, cov, cons),
            Method::Augmented => Self::augmented(dm, cov, cons, c),
            Method::Full => Self::full(dm, cov, cons, c),
            Method::Projection => Err(Error::DimensionMismatch(
                "the projection route maps an existing solution; use solve_projection_route".into(),
            )),
        }
    }

    /// The estimate for observations `y`.
    pub fn estimate(&self, y: &DVector<f64>) -> DVector<f64> {
        let wn2 = self.w.norm_squared();
        let d_check = self.d / wn2;
        if d_check == 0.0 {
            &self.gain * y
        } else {
            let shifted = y - &self.x * &self.w * d_check;
            &self.gain * shifted + &self.w * d_check
        }
    }

    pub fn solve(&self, y: &DVector<f64>) -> GlsSolution {
        let b = self.estimate(y);
        let residuals = y - &self.x * &b;
        GlsSolution::assemble(
            b,
            self.cov_statistical.clone(),
            self.cov_adjustment.clone(),
            self.method,
            self.c_used,
            residuals,
            self.dof,
        )
    }

    pub fn cov(&self) -> DMatrix<f64> {
        linalg::symmetrize(&(&self.cov_statistical + &self.cov_adjustment))
    }
}

/// Gain, statistical covariance `P⁻¹ - ff'/{c(w'f)²}` and the `c` used, for
/// `P = X'Σ⁻¹X + c·ww'`.
fn augmented_parts(
    x: &DMatrix<f64>,
    sigma: &SpdFactorization,
    w: &DVector<f64>,
    proj: &ProjectorF,
    c: CChoice,
) -> Result<(DMatrix<f64>, DMatrix<f64>, f64)> {
    let sinv_x = sigma.solve(x);
    let normal = linalg::symmetrize(&(x.transpose() * &sinv_x));
    let c = match c {
        CChoice::Auto => auto_c(&normal),
        CChoice::Value(c) => c,
    };
    if c == 0.0 || !c.is_finite() {
        return Err(Error::SingularAugmentedSystem(format!("c = {c} is not usable")));
    }
    let p = linalg::symmetrize(&(&normal + w * w.transpose() * c));
    let pf = SpdFactorization::new(&p, DEFAULT_EPS_PD)
        .ok_or_else(|| Error::SingularAugmentedSystem("X'V0^-1 X + c ww' failed the PD check".into()))?;
    let gain = pf.solve(&sinv_x.transpose());
    let wf = proj.wf();
    let f = &proj.f;
    let cov_statistical = linalg::symmetrize(&(pf.inverse() - f * f.transpose() / (c * wf * wf)));
    Ok((gain, cov_statistical, c))
}

pub fn solve_reduced(dm: &DesignMatrix, cov: &CovarianceModel, cons: &Constraint) -> Result<GlsSolution> {
    Ok(GlsOperator::reduced(dm, cov, cons)?.solve(&dm.y))
}

pub fn solve_augmented(dm: &DesignMatrix, cov: &CovarianceModel, cons: &Constraint, c: CChoice) -> Result<GlsSolution> {
    Ok(GlsOperator::augmented(dm, cov, cons, c)?.solve(&dm.y))
}

pub fn solve_full(dm: &DesignMatrix, cov: &CovarianceModel, cons: &Constraint, c: CChoice) -> Result<GlsSolution> {
    Ok(GlsOperator::full(dm, cov, cons, c)?.solve(&dm.y))
}

/// The augmented system read as ordinary GLS with one extra observation:
/// a row `c1·w'` appended to `X`, `c1·d` appended to `Y`, and variance `c2`
/// for it, which gives `c = c1²/c2`.
pub fn solve_pseudo_observation(
    dm: &DesignMatrix,
    cov: &CovarianceModel,
    cons: &Constraint,
    c1: f64,
    c2: f64,
) -> Result<GlsSolution> {
    let Prepared { w, proj } = prepare(dm, cov, cons)?;
    if c1 == 0.0 || !(c2 > 0.0) {
        return Err(Error::SingularAugmentedSystem(format!("c1 = {c1}, c2 = {c2}")));
    }
    if !dm.rank_certificate.identifiable() {
        return Err(Error::SingularAugmentedSystem(dm.rank_certificate.describe()));
    }
    let m = dm.n_records();
    let mut xa = dm.x.clone().insert_row(m, 0.0);
    xa.row_mut(m).copy_from(&(&w * c1).transpose());
    let ya = dm.y.clone().insert_row(m, c1 * cons.d);
    let mut va = cov.v0.clone().insert_row(m, 0.0).insert_column(m, 0.0);
    va[(m, m)] = c2;

    let vf = factor_v0(&va)?;
    let vinv_x = vf.solve(&xa);
    let p = linalg::symmetrize(&(xa.transpose() * &vinv_x));
    let pf = SpdFactorization::new(&p, DEFAULT_EPS_PD)
        .ok_or_else(|| Error::SingularAugmentedSystem("pseudo-observation normal matrix".into()))?;
    let b = pf.solve_vec(&(vinv_x.transpose() * &ya));

    let c = c1 * c1 / c2;
    let wf = proj.wf();
    let cov_statistical = linalg::symmetrize(&(pf.inverse() - &proj.f * proj.f.transpose() / (c * wf * wf)));
    let residuals = &dm.y - &dm.x * &b;
    Ok(GlsSolution::assemble(
        b,
        cov_statistical,
        covariance_adjustment(&cov.a_embedded, &proj),
        Method::Augmented,
        Some(c),
        residuals,
        dm.dof(),
    ))
}

/// Maps a solution obtained under some other constraint onto `w'b = d`:
/// `b = F b0 + (d/w'f) f`, with both covariance terms transformed as `F·F'`.
///
/// Because `Xf = 0` the fitted values, and so the residuals, are unchanged.
pub fn solve_by_projection(seed: &GlsSolution, proj: &ProjectorF, d: f64) -> Result<GlsSolution> {
    let n = proj.f.len();
    if seed.b.len() != n {
        return Err(Error::DimensionMismatch(format!("seed has {} estimates, F is {n}x{n}", seed.b.len())));
    }
    let wf = proj.wf();
    if !(wf.abs() >= 1e-12) {
        return Err(Error::DegenerateConstraint { wf });
    }
    let fm = &proj.matrix;
    let b = fm * &seed.b + &proj.f * (d / wf);
    let cov_statistical = linalg::symmetrize(&(fm * &seed.cov_statistical * fm.transpose()));
    let cov_adjustment = linalg::symmetrize(&(fm * &seed.cov_adjustment * fm.transpose()));
    Ok(GlsSolution::assemble(
        b,
        cov_statistical,
        cov_adjustment,
        Method::Projection,
        seed.c_used,
        seed.residuals.clone(),
        seed.dof,
    ))
}

/// Solves with the first participant's effect pinned to zero, then projects
/// onto the requested constraint.
pub fn solve_projection_route(dm: &DesignMatrix, cov: &CovarianceModel, cons: &Constraint) -> Result<GlsSolution> {
    let Prepared { proj, .. } = prepare(dm, cov, cons)?;
    let pinned = dm.columns.participants.first().ok_or_else(|| Error::DimensionMismatch("no participants".into()))?;
    let pin = Constraint::reference(pinned.clone(), 0.0);
    let w0 = embed_constraint(&pin, dm)?;
    let proj0 = build_projector(&dm.f, &w0)?;
    let seed = GlsOperator::reduced_with(dm, cov, w0, 0.0, &proj0)?.solve(&dm.y);
    solve_by_projection(&seed, &proj, cons.d)
}

pub fn solve(
    method: Method,
    dm: &DesignMatrix,
    cov: &CovarianceModel,
    cons: &Constraint,
    c: CChoice,
) -> Result<GlsSolution> {
    match method {
        Method::Reduced => solve_reduced(dm, cov, cons),
        Method::Augmented => solve_augmented(dm, cov, cons, c),
        Method::Full => solve_full(dm, cov, cons, c),
        Method::Projection => solve_projection_route(dm, cov, cons),
    }
}

/// Every route on one problem, with the largest disagreement against the
/// reduced solution.
#[derive(Debug, Clone)]
pub struct MethodComparison {
    pub solutions: Vec<GlsSolution>,
    pub max_b_rel_dev: f64,
    pub max_cov_rel_dev: f64,
}

impl MethodComparison {
    pub fn agrees_within(&self, tol: f64) -> bool {
        self.max_b_rel_dev <= tol && self.max_cov_rel_dev <= tol
    }

    pub fn get(&self, method: Method) -> Option<&GlsSolution> {
        self.solutions.iter().find(|s| s.method == method)
    }
}

pub fn solve_all(dm: &DesignMatrix, cov: &CovarianceModel, cons: &Constraint, c: CChoice) -> Result<MethodComparison> {
    let solutions = Method::ALL.into_iter().map(|m| solve(m, dm, cov, cons, c)).collect::<Result<Vec<_>>>()?;
    let reference = &solutions[0];
    let mut max_b = 0.0_f64;
    let mut max_cov = 0.0_f64;
    for s in &solutions[1..] {
        max_b = max_b.max(linalg::rel_diff(reference.b.as_slice(), s.b.as_slice()));
        max_cov = max_cov.max(linalg::rel_diff(reference.cov.as_slice(), s.cov.as_slice()));
    }
    Ok(MethodComparison { solutions, max_b_rel_dev: max_b, max_cov_rel_dev: max_cov })
}
