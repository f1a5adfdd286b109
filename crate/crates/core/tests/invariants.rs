//! Structural properties of the constrained estimator.

mod common;

use common::{e1, instance, rel};
use mcgls::design::{build_design, check_linkage};
use mcgls::linalg::{numeric_rank, DEFAULT_RANK_TOL};
use mcgls::simulate::random_exchange_data;
use mcgls::{build_projector, embed_constraint, solve, solve_reduced, CChoice, CovarianceModel, Method};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projector_and_constraint(seed in any::<u64>()) {
        let inst = instance(seed);
        let w = embed_constraint(&inst.cons, &inst.dm).unwrap();
        let proj = build_projector(&inst.dm.f, &w).unwrap();
        prop_assert!((&proj.matrix * &proj.matrix - &proj.matrix).amax() < 1e-12);
        prop_assert!((&inst.dm.x * &inst.dm.f).amax() == 0.0);
        for method in Method::ALL {
            let s = solve(method, &inst.dm, &inst.cov, &inst.cons, CChoice::Auto).unwrap();
            prop_assert!(s.constraint_residual(&w, inst.cons.d).abs() < 1e-10);
        }
    }

    #[test]
    fn record_order_does_not_matter(seed in any::<u64>(), shuffle in any::<u64>()) {
        let inst = instance(seed);
        let m = inst.data.n_records();
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle));

        let mut data = inst.data.clone();
        data.records = perm.iter().map(|&i| inst.data.records[i].clone()).collect();
        let v0 = DMatrix::from_fn(m, m, |r, c| inst.cov.v0[(perm[r], perm[c])]);
        let cov = CovarianceModel::new(v0, inst.cov.a_tilde.clone(), data.n_artefacts(), data.n_covariates());
        let dm = build_design(&data).unwrap();

        let a = solve_reduced(&inst.dm, &inst.cov, &inst.cons).unwrap();
        let b = solve_reduced(&dm, &cov, &inst.cons).unwrap();
        prop_assert!(rel(a.b.as_slice(), b.b.as_slice()) < 1e-10);
        prop_assert!(rel(a.cov.as_slice(), b.cov.as_slice()) < 1e-10);
    }

    #[test]
    fn participant_roster_order_does_not_matter(seed in any::<u64>()) {
        let inst = instance(seed);
        let mut data = inst.data.clone();
        data.participants.reverse();
        let a_rev = DMatrix::from_fn(data.n_participants(), data.n_participants(), |r, c| {
            let l = data.n_participants();
            inst.cov.a_tilde[(l - 1 - r, l - 1 - c)]
        });
        let cov = CovarianceModel::new(inst.cov.v0.clone(), a_rev, data.n_artefacts(), data.n_covariates());
        let dm = build_design(&data).unwrap();
        let a = solve_reduced(&inst.dm, &inst.cov, &inst.cons).unwrap();
        let b = solve_reduced(&dm, &cov, &inst.cons).unwrap();
        let j = data.n_artefacts();
        let l = data.n_participants();
        let n = a.b.len();
        let map = |i: usize| if i >= j && i < j + l { j + (l - 1 - (i - j)) } else { i };
        let b_back = DVector::from_fn(n, |i, _| b.b[map(i)]);
        let cov_back = DMatrix::from_fn(n, n, |r, c| b.cov[(map(r), map(c))]);
        prop_assert!(rel(a.b.as_slice(), b_back.as_slice()) < 1e-10);
        prop_assert!(rel(a.cov.as_slice(), cov_back.as_slice()) < 1e-10);
    }

    #[test]
    fn translation_equivariance(seed in any::<u64>(), shift in -5.0f64..5.0) {
        let inst = instance(seed);
        let base = solve_reduced(&inst.dm, &inst.cov, &inst.cons).unwrap();
        let j = inst.data.n_artefacts();

        // every observation shifted: every artefact value moves by the shift
        let mut dm = inst.dm.clone();
        dm.y.add_scalar_mut(shift);
        let moved = solve_reduced(&dm, &inst.cov, &inst.cons).unwrap();
        let mut expected = base.b.clone();
        expected.rows_mut(0, j).add_scalar_mut(shift);
        prop_assert!((&moved.b - &expected).amax() < 1e-10 * (1.0 + expected.amax()));

        // one artefact's observations shifted: only that artefact value moves
        let target = (seed % j as u64) as usize;
        let mut dm = inst.dm.clone();
        for (row, r) in inst.data.records.iter().enumerate() {
            if r.artefact == inst.data.artefacts[target] {
                dm.y[row] += shift;
            }
        }
        let moved = solve_reduced(&dm, &inst.cov, &inst.cons).unwrap();
        let mut expected = base.b.clone();
        expected[target] += shift;
        prop_assert!((&moved.b - &expected).amax() < 1e-10 * (1.0 + expected.amax()));
    }
}

#[test]
fn e1_structure() {
    let inst = e1(DMatrix::from_diagonal(&DVector::from_vec(vec![0.01, 0.04])));
    let s = solve_reduced(&inst.dm, &inst.cov, &inst.cons).unwrap();
    let w = embed_constraint(&inst.cons, &inst.dm).unwrap();
    let d = s.cov_adjustment.view((1, 1), (2, 2)).into_owned();
    let w_tilde = w.rows(1, 2).into_owned();
    assert!((w_tilde.transpose() * &d).amax() < 1e-12);
    assert!((&d * &w_tilde).amax() < 1e-12);
}

#[test]
fn linkage_agrees_with_stacked_rank() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut linked = 0;
    for i in 0..300 {
        let data = random_exchange_data(&mut rng, 7, 5, i % 3 == 0);
        let dm = build_design(&data).unwrap();
        let cons = mcgls::Constraint::equal(&data.participants, 0.0);
        let w = embed_constraint(&cons, &dm).unwrap();
        let n = dm.n_params();
        let mut stacked = dm.x.clone().insert_row(dm.n_records(), 0.0);
        stacked.row_mut(dm.n_records()).copy_from(&w.transpose());
        let full_rank = numeric_rank(&stacked, DEFAULT_RANK_TOL) == n;
        let passed = check_linkage(&data).passed();
        assert_eq!(passed, full_rank, "design {i}");
        linked += passed as usize;
    }
    assert!(linked > 30 && linked < 270, "{linked} linked designs");
}
