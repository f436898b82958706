use filtralab::config::{PartialConfig, ScenarioConfig, ScenarioKind};
use filtralab::scenario::{self, null_suite};
use filtralab::paths::TimeGrid;

fn config(kind: ScenarioKind, no_correction: bool) -> ScenarioConfig {
    let layers = PartialConfig {
        scenario: Some(kind),
        n_paths: Some(4000),
        dt: Some(0.01),
        seed: Some(17),
        no_correction: Some(no_correction),
        ..Default::default()
    };
    ScenarioConfig::resolve(layers, None).unwrap()
}

fn statistical() -> impl Iterator<Item = ScenarioKind> {
    ScenarioKind::ALL.into_iter().filter(|k| k.is_statistical())
}

#[test]
fn corrected_scenarios_pass() {
    for kind in statistical() {
        let out = scenario::run(&config(kind, false)).unwrap();
        assert!(out.pass, "{}", out.summary);
    }
}

#[test]
fn uncorrected_scenarios_fail() {
    for kind in statistical() {
        let out = scenario::run(&config(kind, true)).unwrap();
        assert!(!out.pass, "{}", out.summary);
    }
}

#[test]
fn both_bessel_candidates_agree_on_the_same_paths() {
    let out = scenario::run(&config(ScenarioKind::Pitman, false)).unwrap();
    let verdict = |label: &str| {
        let rows: Vec<_> = out.report.rows.iter().filter(|r| r.scenario == label).collect();
        assert!(!rows.is_empty());
        rows.iter().all(|r| r.verdict == filtralab::report::Verdict::Pass)
    };
    assert_eq!(verdict("pitman"), verdict("pitman/scale"));
    assert!(verdict("pitman"));
}

#[test]
fn null_suite_rejects_rarely() {
    let grid = TimeGrid::from_horizon(1.0, 0.05).unwrap();
    let rejections = (0..20).filter(|&seed| !null_suite(grid, 1000, seed, 3.0).unwrap().pass).count();
    assert!(rejections <= 2, "{rejections} of 20");
}
