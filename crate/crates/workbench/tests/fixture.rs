mod common;

use std::fs;

use polimarket::par::Execution;
use polimarket_workbench::fixture::{generate, Fixture, FixtureSpec};
use polimarket_workbench::pipeline;

#[test]
fn bundled_files_match_the_generator() {
    let fresh = generate(&FixtureSpec::default());
    for (name, text) in Fixture::FILES.iter().zip(fresh.contents()) {
        let committed = fs::read_to_string(common::fixture_dir().join(name)).unwrap();
        assert!(
            committed == text,
            "{name} is stale; rerun `cargo run --example write_fixture`"
        );
    }
}

#[test]
fn bundled_config_is_valid() {
    let cfg = common::config(std::path::Path::new("unused"));
    cfg.validate().unwrap();
    cfg.require_inputs().unwrap();
    assert!(cfg.paths.moral.is_some());
}

#[test]
fn fixture_yields_a_two_class_twenty_core_and_a_fit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::config(dir.path());
    common::prepare_service(&cfg);
    let exec = Execution::Parallel;
    pipeline::metrics(&cfg, &[polimarket::polmetrics::CategoryLevel::Main], exec).unwrap();
    pipeline::lifestyle(&cfg).unwrap();
    pipeline::features(&cfg, exec).unwrap();
    let summary = pipeline::fit(&cfg, exec).unwrap();
    assert!(summary.contains("coefficients"), "{summary}");

    let nodes = fs::read_to_string(dir.path().join("core_20_nodes.txt")).unwrap();
    assert!(nodes.lines().count() >= 150);
    let labels = fs::read_to_string(dir.path().join(pipeline::LABELS)).unwrap();
    for class in ["conservative", "liberal"] {
        assert!(labels.contains(class));
    }
    let fit: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join(pipeline::FIT_REPORT)).unwrap()).unwrap();
    assert!(fit.to_string().contains("product_alignment"));
}
