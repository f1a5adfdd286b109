//! The covariance adjustment `FAF'` for participant-specific random
//! systematic effects.
//!
//! With `A` zero outside the participant block and `w = (0_J', w̃', 0_K')'`,
//! `FAF'` has the block form
//!
//! ```text
//! | B   C  0 |      B = (w̃'Ãw̃) 1_J 1_J'
//! | C'  D  0 |      C = 1_J w̃'Ã (I - w̃ 1_L')
//! | 0   0  0 |      D = (I - 1_L w̃') Ã (I - w̃ 1_L')
//! ```
//!
//! so every artefact value inherits the same floor `w̃'Ãw̃`, and `D` is the
//! extra covariance of the participant effects.

use nalgebra::{DMatrix, DVector};

use crate::estimator::ProjectorF;
use crate::linalg::{self, DEFAULT_EPS_PD};

/// `F A F'`, symmetrized.
pub fn covariance_adjustment(a_embedded: &DMatrix<f64>, proj: &ProjectorF) -> DMatrix<f64> {
    let f = &proj.matrix;
    let out = linalg::symmetrize(&(f * a_embedded * f.transpose()));
    debug_assert!(
        !linalg::is_psd(a_embedded, DEFAULT_EPS_PD) || linalg::is_psd(&out, 1e-10),
        "FAF' lost positive semidefiniteness"
    );
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjustmentBlocks {
    /// `J x J`, every entry equal to `scalar_b`.
    pub b_block: DMatrix<f64>,
    /// `J x L`, identical rows.
    pub c_block: DMatrix<f64>,
    /// `L x L` adjustment to the participant effects.
    pub d_block: DMatrix<f64>,
    /// `w̃'Ãw̃`.
    pub scalar_b: f64,
}

impl AdjustmentBlocks {
    /// The full `(J + L + K) x (J + L + K)` matrix, zero in the covariate rows
    /// and columns.
    pub fn assemble(&self, n_covariates: usize) -> DMatrix<f64> {
        let j = self.b_block.nrows();
        let l = self.d_block.nrows();
        let n = j + l + n_covariates;
        let mut m = DMatrix::zeros(n, n);
        m.view_mut((0, 0), (j, j)).copy_from(&self.b_block);
        m.view_mut((0, j), (j, l)).copy_from(&self.c_block);
        m.view_mut((j, 0), (l, j)).copy_from(&self.c_block.transpose());
        m.view_mut((j, j), (l, l)).copy_from(&self.d_block);
        m
    }

    pub fn is_psd(&self, eps: f64) -> bool {
        linalg::is_psd(&self.assemble(0), eps)
    }
}

/// Block form of `FAF'` computed by matrix products.
pub fn adjustment_blocks(a_tilde: &DMatrix<f64>, w_tilde: &DVector<f64>, n_artefacts: usize) -> AdjustmentBlocks {
    let l = w_tilde.len();
    let ones_l = DVector::from_element(l, 1.0);
    let ones_j = DVector::from_element(n_artefacts, 1.0);
    let right = DMatrix::identity(l, l) - w_tilde * ones_l.transpose();

    let aw = a_tilde * w_tilde;
    let scalar_b = w_tilde.dot(&aw);
    let b_block = DMatrix::from_element(n_artefacts, n_artefacts, scalar_b);
    let c_block = &ones_j * (w_tilde.transpose() * a_tilde * &right);
    let d_block = linalg::symmetrize(&(right.transpose() * a_tilde * &right));
    AdjustmentBlocks { b_block, c_block, d_block, scalar_b }
}

/// One entry of the participant block,
/// `D_{λμ} = Ã_{λμ} - Σ_ξ Ã_{λξ} w̃_ξ - Σ_γ w̃_γ Ã_{γμ} + Σ_γ Σ_ξ w̃_γ Ã_{γξ} w̃_ξ`.
pub fn d_element(a_tilde: &DMatrix<f64>, w_tilde: &DVector<f64>, lambda: usize, mu: usize) -> f64 {
    let l = w_tilde.len();
    let row: f64 = (0..l).map(|xi| a_tilde[(lambda, xi)] * w_tilde[xi]).sum();
    let col: f64 = (0..l).map(|g| w_tilde[g] * a_tilde[(g, mu)]).sum();
    let mut both = 0.0;
    for g in 0..l {
        for xi in 0..l {
            both += w_tilde[g] * a_tilde[(g, xi)] * w_tilde[xi];
        }
    }
    a_tilde[(lambda, mu)] - row - col + both
}

/// Diagonal of `D` when the systematic effects are uncorrelated:
/// `(1 - w̃_λ)² Ã_λλ + Σ_{γ≠λ} w̃_γ² Ã_γγ`.
pub fn diagonal_adjustment_variance(a_diag: &DVector<f64>, w_tilde: &DVector<f64>, lambda: usize) -> f64 {
    let own = (1.0 - w_tilde[lambda]).powi(2) * a_diag[lambda];
    let others: f64 = (0..w_tilde.len()).filter(|&g| g != lambda).map(|g| w_tilde[g] * w_tilde[g] * a_diag[g]).sum();
    own + others
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::canonical_null_vector;
    use crate::estimator::build_projector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn equal_weights(l: usize) -> DVector<f64> {
        DVector::from_element(l, 1.0 / l as f64)
    }

    fn embed(a_tilde: &DMatrix<f64>, j: usize, k: usize) -> DMatrix<f64> {
        let l = a_tilde.nrows();
        let mut a = DMatrix::zeros(j + l + k, j + l + k);
        a.view_mut((j, j), (l, l)).copy_from(a_tilde);
        a
    }

    fn projector(w_tilde: &DVector<f64>, j: usize, k: usize) -> ProjectorF {
        let l = w_tilde.len();
        let mut w = DVector::zeros(j + l + k);
        w.rows_mut(j, l).copy_from(w_tilde);
        build_projector(&canonical_null_vector(j, l, k), &w).unwrap()
    }

    #[test]
    fn zero_a_gives_zero_adjustment() {
        let proj = projector(&equal_weights(3), 2, 0);
        assert_eq!(covariance_adjustment(&DMatrix::zeros(5, 5), &proj), DMatrix::zeros(5, 5));
    }

    #[test]
    fn e1_hand_values() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![0.01, 0.04]));
        let w = equal_weights(2);
        let blocks = adjustment_blocks(&a, &w, 1);
        assert!((blocks.scalar_b - 0.0125).abs() < 1e-15);
        let expected = DMatrix::from_row_slice(2, 2, &[0.0125, -0.0125, -0.0125, 0.0125]);
        assert!((&blocks.d_block - &expected).amax() < 1e-15);
        assert!((d_element(&a, &w, 0, 1) + 0.0125).abs() < 1e-15);

        let direct = covariance_adjustment(&embed(&a, 1, 0), &projector(&w, 1, 0));
        assert!((direct.view((1, 1), (2, 2)) - &expected).amax() < 1e-15);
        assert!((diagonal_adjustment_variance(&a.diagonal(), &w, 0) - 0.0125).abs() < 1e-15);
    }

    #[test]
    fn reference_participant_has_no_adjustment() {
        let a = DMatrix::from_row_slice(3, 3, &[0.2, 0.05, 0.0, 0.05, 0.3, 0.01, 0.0, 0.01, 0.1]);
        let w = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let blocks = adjustment_blocks(&a, &w, 2);
        assert_eq!(blocks.d_block[(0, 0)], 0.0);
        assert_eq!(diagonal_adjustment_variance(&a.diagonal(), &w, 0), 0.0);
    }

    #[test]
    fn isotropic_effects() {
        let sigma2 = 0.7;
        for l in 2..7 {
            let a = DMatrix::identity(l, l) * sigma2;
            let w = equal_weights(l);
            let blocks = adjustment_blocks(&a, &w, 3);
            let expected = sigma2 * (1.0 - 1.0 / l as f64);
            for lambda in 0..l {
                assert!((blocks.d_block[(lambda, lambda)] - expected).abs() < 1e-14);
                assert!((diagonal_adjustment_variance(&a.diagonal(), &w, lambda) - expected).abs() < 1e-14);
            }
        }
    }

    fn random_case(seed: u64) -> (DMatrix<f64>, DVector<f64>, usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = rng.gen_range(2..8);
        let j = rng.gen_range(1..6);
        let r = rng.gen_range(1..=l);
        let g = DMatrix::from_fn(l, r, |_, _| rng.gen_range(-0.5..0.5));
        let raw = DVector::from_fn(l, |_, _| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..1.0) });
        let w = if raw.sum() > 0.0 { &raw / raw.sum() } else { equal_weights(l) };
        (&g * g.transpose(), w, j)
    }

    #[test]
    fn blocks_match_direct_product() {
        for seed in 0..50 {
            let (a, w, j) = random_case(seed);
            let blocks = adjustment_blocks(&a, &w, j);
            let direct = covariance_adjustment(&embed(&a, j, 1), &projector(&w, j, 1));
            assert!((blocks.assemble(1) - &direct).amax() < 1e-12);
            assert!(blocks.is_psd(1e-12));
            // structural invariants
            assert!(blocks.b_block.iter().all(|&x| x == blocks.scalar_b));
            for r in 1..j {
                assert_eq!(blocks.c_block.row(r), blocks.c_block.row(0));
            }
            assert!((w.transpose() * &blocks.d_block).amax() < 1e-12);
            assert!((&blocks.d_block * &w).amax() < 1e-12);
            let l = w.len();
            for lambda in 0..l {
                for mu in 0..l {
                    assert!((d_element(&a, &w, lambda, mu) - blocks.d_block[(lambda, mu)]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn diagonal_formula_matches_blocks() {
        for seed in 100..150 {
            let (a, w, j) = random_case(seed);
            let a = DMatrix::from_diagonal(&a.diagonal());
            let blocks = adjustment_blocks(&a, &w, j);
            for lambda in 0..w.len() {
                let white = diagonal_adjustment_variance(&a.diagonal(), &w, lambda);
                assert!((white - blocks.d_block[(lambda, lambda)]).abs() < 1e-14);
            }
        }
    }
}
