use ogrg_core::gradsuite::{run, TOLERANCE};

#[test]
fn every_case_matches_finite_differences() {
    let report = run(3, 12, |c| eprintln!("{:<32} {:.3e} ({} coords)", c.name, c.max_rel_err, c.coords)).unwrap();
    assert!(report.passed(), "max relative error {:.3e} >= {TOLERANCE:e}", report.max_rel_err());
}
