//! Pipeline configuration: a TOML file overlaid with `POLIMARKET_*`
//! environment variables.
//!
//! Nested keys are addressed with a double underscore, so
//! `POLIMARKET_METRICS__REPLICATES=200` sets `metrics.replicates` and
//! `POLIMARKET_SEED=9` sets the master seed. Values are parsed as TOML
//! scalars when possible and fall back to strings.

use std::path::{Path, PathBuf};

use polimarket::polmetrics::{EdgeScope, NullMode};
use polimarket::rgcn::RgcnConfig;
use polimarket::sampler::SampleWavePlan;
use serde::{Deserialize, Serialize};

use crate::Invalid;

pub const ENV_PREFIX: &str = "POLIMARKET_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub reviews: PathBuf,
    pub metadata: PathBuf,
    pub seeds: PathBuf,
    pub moral: Option<PathBuf>,
    pub categories: Option<PathBuf>,
    /// Directory that receives every artifact.
    pub workdir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            reviews: "reviews.json".into(),
            metadata: "metadata.json".into(),
            seeds: "seeds.csv".into(),
            moral: None,
            categories: None,
            workdir: "work".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSettings {
    pub seed_threshold: u8,
}

impl Default for IngestSettings {
    fn default() -> Self {
        IngestSettings { seed_threshold: 90 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KcoreSettings {
    /// Core orders to compute, ascending; the last feeds augmentation.
    pub values: Vec<usize>,
    /// Reviewers above this review count are skipped by co-review augmentation.
    pub max_reviewer_degree: Option<usize>,
}

impl Default for KcoreSettings {
    fn default() -> Self {
        KcoreSettings {
            values: vec![5, 20],
            max_reviewer_degree: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    #[serde(flatten)]
    pub rgcn: RgcnConfig,
    /// Train on nodes up to this sampling wave; `None` keeps all.
    pub max_wave: Option<u8>,
    pub search_budget: usize,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            rgcn: RgcnConfig::paper_preset(),
            max_wave: Some(1),
            search_budget: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSettings {
    pub replicates: usize,
    pub mode: NullMode,
    /// Edge-kind preset: `all` or `co_purchase`.
    pub edges: String,
}

impl Default for MetricsSettings {
    fn default() -> Self {
        MetricsSettings {
            replicates: 1000,
            mode: NullMode::MonteCarlo,
            edges: "all".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSettings {
    pub min_reviews: usize,
    /// Empty means every column plus the product alignment by relevance
    /// interaction.
    pub formula: String,
    pub cluster_by_reviewer: bool,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            min_reviews: 5,
            formula: String::new(),
            cluster_by_reviewer: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSettings {
    pub bind: String,
    pub token: Option<String>,
    pub batch_size: usize,
    /// Distinct operators that must agree before a verdict applies.
    pub agreement: usize,
    /// Directory with a built label-ui bundle to serve at `/`.
    pub static_dir: Option<PathBuf>,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        ServiceSettings {
            bind: "127.0.0.1:8750".into(),
            token: None,
            batch_size: 50,
            agreement: 1,
            static_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed; every stochastic step derives its seed from it.
    pub seed: u64,
    /// Model labels at or above this probability are merged.
    pub accept_threshold: f64,
    pub paths: Paths,
    pub ingest: IngestSettings,
    pub sampler: SampleWavePlan,
    pub kcore: KcoreSettings,
    pub model: ModelSettings,
    pub metrics: MetricsSettings,
    pub fit: FitSettings,
    pub service: ServiceSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            accept_threshold: 0.95,
            paths: Paths::default(),
            ingest: IngestSettings::default(),
            sampler: SampleWavePlan::default(),
            kcore: KcoreSettings::default(),
            model: ModelSettings::default(),
            metrics: MetricsSettings::default(),
            fit: FitSettings::default(),
            service: ServiceSettings::default(),
        }
    }
}

fn scalar(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(root: &mut toml::Table, path: &[String], value: toml::Value) -> Result<(), Invalid> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut table = root;
    for key in parents {
        let entry = table
            .entry(key.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Invalid(format!("config key {key:?} is not a table")))?;
    }
    table.insert(last.clone(), value);
    Ok(())
}

impl PipelineConfig {
    /// Parses TOML text and applies `vars` (name, value) overrides.
    pub fn from_sources<I>(text: &str, vars: I) -> Result<PipelineConfig, Invalid>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut root: toml::Table = text.parse().map_err(|e| Invalid(format!("config: {e}")))?;
        let mut overrides: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|k| (k.to_string(), v)))
            .filter(|(k, _)| k != "CONFIG" && k != "LOG")
            .collect();
        overrides.sort();
        for (key, raw) in overrides {
            let path: Vec<String> = key.split("__").map(str::to_ascii_lowercase).collect();
            if path.iter().any(String::is_empty) {
                return Err(Invalid(format!("bad override {ENV_PREFIX}{key}")));
            }
            set_path(&mut root, &path, scalar(&raw))?;
        }
        PipelineConfig::deserialize(toml::Value::Table(root)).map_err(|e| Invalid(format!("config: {e}")))
    }

    /// Reads `path` (if given) and the process environment. Relative input
    /// paths resolve against the config file's directory.
    pub fn load(path: Option<&Path>) -> Result<PipelineConfig, Invalid> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Invalid(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        let mut cfg = PipelineConfig::from_sources(&text, std::env::vars())?;
        if let Some(base) = path.and_then(Path::parent) {
            cfg.paths.rebase(base);
        }
        Ok(cfg)
    }

    /// Range checks that do not touch the filesystem.
    pub fn validate(&self) -> Result<(), Invalid> {
        if !(self.accept_threshold > 0.0 && self.accept_threshold <= 1.0) {
            return Err(Invalid("accept_threshold must be in (0, 1]".into()));
        }
        if self.ingest.seed_threshold > 100 {
            return Err(Invalid("ingest.seed_threshold must be at most 100".into()));
        }
        if self.sampler.waves == 0 {
            return Err(Invalid("sampler.waves must be at least 1".into()));
        }
        if self.kcore.values.is_empty() || self.kcore.values.windows(2).any(|w| w[0] > w[1]) {
            return Err(Invalid("kcore.values must be non-empty and ascending".into()));
        }
        self.model.rgcn.validate().map_err(|e| Invalid(e.to_string()))?;
        if self.model.search_budget == 0 {
            return Err(Invalid("model.search_budget must be at least 1".into()));
        }
        if self.metrics.replicates < 2 {
            return Err(Invalid("metrics.replicates must be at least 2".into()));
        }
        if self.edge_scope().is_none() {
            return Err(Invalid(format!("unknown edge preset {:?}", self.metrics.edges)));
        }
        if self.service.batch_size == 0 || self.service.agreement == 0 {
            return Err(Invalid(
                "service.batch_size and service.agreement must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Checks that the inputs a stage reads exist.
    pub fn require_inputs(&self) -> Result<(), Invalid> {
        let mut required = vec![&self.paths.reviews, &self.paths.metadata, &self.paths.seeds];
        required.extend(self.paths.moral.as_ref());
        required.extend(self.paths.categories.as_ref());
        match required.into_iter().find(|p| !p.exists()) {
            Some(p) => Err(Invalid(format!("input {} does not exist", p.display()))),
            None => Ok(()),
        }
    }

    pub fn edge_scope(&self) -> Option<EdgeScope> {
        EdgeScope::preset(&self.metrics.edges)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

impl Paths {
    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.reviews);
        fix(&mut self.metadata);
        fix(&mut self.seeds);
        fix(&mut self.workdir);
        self.moral.as_mut().map(fix);
        self.categories.as_mut().map(fix);
    }
}

/// Commented template written by `polimarket init`-style tooling and the README.
pub const TEMPLATE: &str = r#"# Master seed for sampling-independent randomness (splits, dropout, null model).
seed = 42
# Model labels at or above this probability are merged into the label set.
accept_threshold = 0.95

[paths]
reviews = "reviews.json"      # one JSON review per line
metadata = "metadata.json"    # one JSON product per line
seeds = "seeds.csv"           # title,class
# moral = "moral.csv"         # reviewer,asin + 11 probabilities
# categories = "categories.json"
workdir = "work"

[ingest]
seed_threshold = 90           # fuzzy title match cut-off, 0-100

[sampler]
waves = 2
step2 = "reviewed_products"   # or "frontier_products"
next_frontier = "cumulative"  # or "new_only"

[kcore]
values = [5, 20]              # the last core feeds co-review augmentation

[model]
layers = 3
hidden = 19
dropout = 0.68
lr = 0.05
clip = 3.358
l2 = 1.66e-7
epochs = 100
optimizer = "momentum"        # "gd", "momentum" or "adam"
max_wave = 1
search_budget = 8

[metrics]
replicates = 1000
mode = "monte_carlo"          # or "exact"
edges = "all"                 # or "co_purchase"

[fit]
min_reviews = 5
formula = ""                  # empty: all columns + product_alignment:product_relevance
cluster_by_reviewer = true

[service]
bind = "127.0.0.1:8750"
# token = "change-me"
batch_size = 50
agreement = 1
"#;
