#![allow(dead_code)]

use mcgls::design::{build_design, DesignMatrix};
use mcgls::simulate::{generate_comparison, random_instance, InstanceParams};
use mcgls::{ComparisonData, Constraint, CovarianceModel, MeasurementRecord};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub data: ComparisonData,
    pub dm: DesignMatrix,
    pub cov: CovarianceModel,
    pub cons: Constraint,
}

/// A random linked comparison with block `V0`, correlated `Ã` and random
/// weights, reproducible from `seed`.
pub fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = random_instance(&mut rng, &InstanceParams::default());
    let sim = generate_comparison(&cfg).expect("random instance generates");
    let dm = build_design(&sim.data).expect("design builds");
    Instance { data: sim.data, dm, cov: sim.cov, cons: sim.cons }
}

pub fn e1_data() -> ComparisonData {
    ComparisonData::new(
        vec!["P1".into(), "P2".into()],
        vec!["A1".into()],
        vec![],
        vec![MeasurementRecord::new("P1", "A1", 1, 10.0), MeasurementRecord::new("P2", "A1", 1, 10.4)],
    )
}

pub fn e1(a_tilde: DMatrix<f64>) -> Instance {
    let data = e1_data();
    let dm = build_design(&data).unwrap();
    let cov = CovarianceModel::new(DMatrix::identity(2, 2), a_tilde, 1, 0);
    let cons = Constraint::equal(&data.participants, 0.0);
    Instance { data, dm, cov, cons }
}

/// Norm-wise relative difference, see `mcgls::linalg::rel_diff`.
pub fn rel(a: &[f64], b: &[f64]) -> f64 {
    mcgls::linalg::rel_diff(a, b)
}
