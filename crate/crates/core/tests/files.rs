//! Input files, reports and graph export.

mod common;

use std::path::PathBuf;

use common::{e1, instance};
use mcgls::consistency::{consistency_report, ConsistencyOptions};
use mcgls::io::{
    exchange_graph_dot, export_exchange_graph, read_report, read_report_table, write_report, ComparisonFile, Report,
    ReportFormat,
};
use mcgls::{parse_comparison_file, solve_all, solve_reduced, CChoice, Error, ParamKind};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn data_file(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

#[test]
fn sample_e1_file() {
    let (data, cov, cons) = parse_comparison_file(data_file("e1.json")).unwrap();
    assert_eq!(data.observations().as_slice(), &[10.0, 10.4]);
    assert_eq!(cov.a_tilde, DMatrix::from_diagonal(&DVector::from_vec(vec![0.01, 0.04])));
    assert_eq!(cons.d, 0.0);
}

#[test]
fn correlated_repeats_form_a_block() {
    let (data, cov, _) = parse_comparison_file(data_file("correlated_blocks.json")).unwrap();
    assert_eq!(data.n_records(), 7);
    // records 0, 1, 2 are the correlated repeats; record 5 is independent of them
    for i in 0..3 {
        for j in 0..3 {
            let expected = if i == j { 0.0025 } else { 0.0016 };
            assert_eq!(cov.v0[(i, j)], expected);
        }
        assert_eq!(cov.v0[(i, 5)], 0.0);
        assert_eq!(cov.v0[(5, i)], 0.0);
    }
    assert_eq!(cov.v0[(5, 5)], 0.0025);
    assert_eq!(cov.a_tilde[(0, 1)], 0.0003);
    assert_eq!(cov.a_tilde[(1, 0)], 0.0003);
}

#[test]
fn missing_file_is_io_error() {
    assert!(matches!(parse_comparison_file(data_file("no-such-file.json")), Err(Error::Io(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn comparison_file_round_trip(seed in any::<u64>()) {
        let inst = instance(seed);
        let file = ComparisonFile::from_domain(&inst.data, &inst.cov, &inst.cons, "K");
        let text = file.to_json_string().unwrap();
        let (data, cov, cons) = ComparisonFile::from_json_str(&text).unwrap().to_domain().unwrap();
        prop_assert_eq!(data, inst.data);
        prop_assert_eq!(cov, inst.cov);
        prop_assert_eq!(cons, inst.cons);
    }

    #[test]
    fn report_round_trip(seed in any::<u64>()) {
        let inst = instance(seed);
        let cmp = solve_all(&inst.dm, &inst.cov, &inst.cons, CChoice::Auto).unwrap();
        let sol = &cmp.solutions[0];
        let cr = consistency_report(&inst.dm, sol, &inst.cov, ConsistencyOptions::default()).unwrap();
        let report = Report::new(&inst.dm, sol, cr, "K").with_agreement(&cmp, 1e-8);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        write_report(&report, &path, ReportFormat::Json).unwrap();
        let back = read_report(&path).unwrap();
        prop_assert_eq!(&back, &report);
        for (a, b) in back.cov.iter().flatten().zip(report.cov.iter().flatten()) {
            prop_assert!((a - b).abs() <= 1e-15);
        }
    }
}

#[test]
fn e1_report_rows() {
    let inst = e1(DMatrix::from_diagonal(&DVector::from_vec(vec![0.01, 0.04])));
    let sol = solve_reduced(&inst.dm, &inst.cov, &inst.cons).unwrap();
    let cr = consistency_report(&inst.dm, &sol, &inst.cov, ConsistencyOptions::default()).unwrap();
    let report = Report::new(&inst.dm, &sol, cr, "mK");
    let names: Vec<_> = report.parameters.iter().map(|r| (r.name.as_str(), r.kind)).collect();
    assert_eq!(names, [("A1", ParamKind::Artefact), ("P1", ParamKind::Participant), ("P2", ParamKind::Participant)]);
    assert!((report.parameters[1].estimate + 0.2).abs() < 1e-12);
    assert!((report.parameters[2].estimate - 0.2).abs() < 1e-12);
    assert!((report.parameters[1].variance_statistical - 0.5).abs() < 1e-12);
    assert!((report.parameters[1].variance_adjustment - 0.0125).abs() < 1e-12);
    assert!((report.parameters[1].variance_total - 0.5125).abs() < 1e-12);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.csv");
    write_report(&report, &path, ReportFormat::Csv).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "name,kind,estimate,variance_statistical,variance_adjustment,variance_total"
    );
    assert_eq!(text.lines().count(), 4);
    assert_eq!(read_report_table(&path).unwrap(), report.parameters);
}

#[test]
fn graph_export() {
    let (data, _, _) = parse_comparison_file(data_file("correlated_blocks.json")).unwrap();
    let dot = exchange_graph_dot(&data);
    assert!(dot.contains("\"participant:NIST\" -- \"artefact:E\" [label=\"4\"]"));
    assert!(dot.contains("\"participant:MSL\" -- \"artefact:F\" [label=\"1\"]"));
    assert_eq!(dot.matches(" -- ").count(), 4);
    assert_eq!(dot.matches("subgraph").count(), 1);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("graph.dot");
    export_exchange_graph(&data, &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), dot);
}

#[test]
fn disconnected_file_parses_but_is_not_identifiable() {
    let (data, _, _) = parse_comparison_file(data_file("disconnected.json")).unwrap();
    let dot = exchange_graph_dot(&data);
    assert_eq!(dot.matches("subgraph").count(), 2);
    assert!(!mcgls::check_linkage(&data).passed());
}
