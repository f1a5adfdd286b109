//! Forward simulation, noiseless recovery and Monte Carlo covariance checks.

use std::path::PathBuf;

use mcgls::design::build_design;
use mcgls::io::{ComparisonFile, V0Spec};
use mcgls::simulate::{generate_comparison, monte_carlo_cov_check, Simulator, MIN_MC_DRAWS};
use mcgls::{solve_reduced, SimulationConfig};

fn config(name: &str) -> SimulationConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name);
    SimulationConfig::from_path(path).unwrap()
}

#[test]
fn fifteen_lab_exchange() {
    let cfg = config("fifteen_labs_sim.json");
    assert_eq!(cfg.participants.len(), 15);
    assert_eq!(cfg.artefacts.len(), 7);
    assert!(cfg.exchanges.iter().all(|e| (1..=4).contains(&e.repeats)));
    let sim = generate_comparison(&cfg).unwrap();
    assert_eq!(sim.data.n_records(), cfg.exchanges.iter().map(|e| e.repeats as usize).sum::<usize>());
    let dm = build_design(&sim.data).unwrap();
    assert!(dm.rank_certificate.identifiable());
}

#[test]
fn generation_is_deterministic() {
    let cfg = config("correlated_sim.json");
    let render = || {
        let s = generate_comparison(&cfg).unwrap();
        ComparisonFile::from_domain(&s.data, &s.cov, &s.cons, "").to_json_string().unwrap()
    };
    assert_eq!(render(), render());
}

#[test]
fn noiseless_recovery_scales_with_noise() {
    let mut cfg = config("fifteen_labs_sim.json");
    let m = cfg.n_records();
    for eps in [1e-2, 1e-4, 1e-6] {
        cfg.v0 = V0Spec::Diagonal { variances: vec![eps * eps; m] };
        cfg.a_tilde = Default::default();
        let sim = generate_comparison(&cfg).unwrap();
        let dm = build_design(&sim.data).unwrap();
        let b = solve_reduced(&dm, &sim.cov, &sim.cons).unwrap().b;
        let err = (b - &sim.truth.beta).amax();
        assert!(err < 20.0 * eps, "eps {eps}: error {err}");
    }
}

#[test]
fn monte_carlo_without_systematic_effects() {
    let mut cfg = config("correlated_sim.json");
    cfg.a_tilde = Default::default();
    let report = monte_carlo_cov_check(&cfg, MIN_MC_DRAWS).unwrap();
    assert_eq!(report.analytic_cov, report.analytic_cov_statistical);
    assert!(report.within(5.0), "{}", report.summary());
}

#[test]
fn monte_carlo_is_reproducible() {
    let cfg = config("e1_sim.json");
    let a = monte_carlo_cov_check(&cfg, MIN_MC_DRAWS).unwrap();
    let b = monte_carlo_cov_check(&cfg, MIN_MC_DRAWS).unwrap();
    assert_eq!(a.empirical_cov, b.empirical_cov);
    assert_eq!(a.mean, b.mean);
}

#[test]
fn draw_zero_is_the_generated_dataset() {
    let cfg = config("e1_sim.json");
    let sim = Simulator::new(&cfg).unwrap();
    assert_eq!(sim.draw(0).0, generate_comparison(&cfg).unwrap().data.observations());
}
