use std::time::Instant;

use aasist3::diagnostics::{run_gradcheck_suite, CheckTarget};
use aasist3::model::ModelConfig;

#[test]
fn every_layer_passes_on_pocket_shapes() {
    let start = Instant::now();
    let checks = run_gradcheck_suite(&ModelConfig::pocket(), &CheckTarget::ALL, 5).unwrap();
    for c in &checks {
        let worst = c.report.worst().map(|p| p.name.as_str()).unwrap_or("-");
        eprintln!(
            "{:<14} {:<40} max rel err {:.3e} (worst {worst})",
            c.target.name(),
            c.shapes,
            c.max_rel_error()
        );
    }
    eprintln!("suite took {:?}", start.elapsed());
    assert_eq!(checks.len(), CheckTarget::ALL.len());
    for c in &checks {
        assert!(c.passed(), "{} failed: {:?}", c.target, c.report.worst());
    }
}

#[test]
fn target_names_round_trip() {
    for t in CheckTarget::ALL {
        assert_eq!(t.name().parse::<CheckTarget>().unwrap(), t);
    }
    assert!("attention".parse::<CheckTarget>().is_err());
}
