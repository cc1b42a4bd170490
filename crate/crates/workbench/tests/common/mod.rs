#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use polimarket::par::Execution;
use polimarket_workbench::{pipeline, PipelineConfig};
use sha2::{Digest, Sha256};

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/market200")
}

pub fn fixture_config() -> PathBuf {
    fixture_dir().join("config.toml")
}

/// Bundled fixture configuration writing into `work`.
pub fn config(work: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::load(Some(&fixture_config())).unwrap();
    cfg.paths.workdir = work.to_path_buf();
    cfg
}

/// Runs the stages the labeling service needs.
pub fn prepare_service(cfg: &PipelineConfig) {
    let exec = Execution::Parallel;
    pipeline::ingest(cfg, exec).unwrap();
    pipeline::sample(cfg, exec).unwrap();
    pipeline::kcore(cfg, None, None, exec).unwrap();
    pipeline::augment(cfg, None, exec).unwrap();
    pipeline::train(cfg, false, exec).unwrap();
    pipeline::classify(cfg, exec).unwrap();
}

pub fn hash_artifacts(dir: &Path, names: &[String]) -> BTreeMap<String, String> {
    names
        .iter()
        .map(|n| {
            let bytes = fs::read(dir.join(n)).unwrap_or_else(|e| panic!("{n}: {e}"));
            let digest = Sha256::digest(&bytes);
            (n.clone(), digest.iter().map(|b| format!("{b:02x}")).collect())
        })
        .collect()
}

pub const STAGES: [&str; 12] = [
    "ingest",
    "sample",
    "kcore",
    "augment",
    "train",
    "classify",
    "metrics",
    "lifestyle",
    "features",
    "fit",
    "export",
    "report",
];
