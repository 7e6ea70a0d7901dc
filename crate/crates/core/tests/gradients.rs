use rvf_core::autodiff::OP_NAMES;
use rvf_core::gradcheck::{attention_cases, op_cases, relative_error, GradCase};

fn assert_passes(case: &GradCase, samples: usize) {
    let report = case.run(samples, 99).unwrap();
    assert!(report.checked > 0, "{}: nothing checked", case.name);
    assert!(report.passes(), "{}: {report:?}", case.name);
}

#[test]
fn every_tape_op_has_a_passing_case() {
    let cases = op_cases(5);
    for op in OP_NAMES {
        assert!(
            cases.iter().any(|c| c.name.starts_with(op)),
            "no gradient case for {op}"
        );
    }
    for case in &cases {
        assert_passes(case, 64);
    }
}

#[test]
fn attention_blocks_pass_gradient_checks() {
    for case in attention_cases(13).unwrap() {
        assert_passes(&case, 12);
    }
}

#[test]
fn relative_error_floors_tiny_denominators() {
    assert_eq!(relative_error(0.0, 0.0), 0.0);
    assert!((relative_error(1e-9, 0.0) - 1e-3).abs() < 1e-12);
    assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-12);
}
