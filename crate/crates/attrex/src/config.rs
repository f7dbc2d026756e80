//! Experiment configuration.
//!
//! One TOML file declares everything a reproducible experiment needs: dataset
//! paths, split and sampling seeds, the category→attribute map, backends and
//! the list of runs. Relative paths are resolved against the config file's
//! directory.
//!
//! ```toml
//! price_per_1k = "0.002"
//! cache_dir = ".attrex-cache"
//! output_dir = "out"
//!
//! [dataset]
//! records = "records.jsonl"
//! [dataset.split]
//! ratio = [8, 1, 1]
//! seed = 17
//!
//! [sampling]
//! max_positive_per_cell = 40
//! max_negative_per_cell = 10
//! seed = 99
//!
//! [backends.stub]
//! kind = "stub"
//! script = "stub_script.json"
//!
//! [[runs]]
//! name = "explicit-zero"
//! design = "explicit"
//! shots = 0
//! backend = "stub"
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::client::{Backend, ClientError, HttpBackend, RetryPolicy, StubBackend};
use crate::corpus::{CategoryMap, SamplingPolicy};
use crate::eval::OpenEvalMode;
use crate::money::Money;
use crate::prompt::{MessageLayout, PromptDesign};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse config {path}: {source}")]
    Parse {
        path: String,
        source: Box<toml::de::Error>,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// The default category→attribute map: three categories, fifteen attributes.
pub fn default_category_map() -> CategoryMap {
    let mut map = CategoryMap::new();
    map.insert(
        "Digital Camera".to_string(),
        [
            "Camera Weight",
            "Optical Zoom",
            "Resolution",
            "Sensor Size",
            "Sensor Type",
        ]
        .map(String::from)
        .to_vec(),
    );
    map.insert(
        "Memory Cards".to_string(),
        ["Capacity", "SD Format"].map(String::from).to_vec(),
    );
    map.insert(
        "Laptops".to_string(),
        [
            "Battery Life",
            "No. Cores",
            "Processor Brand",
            "Processor Speed",
            "Refresh Rate",
            "Resolution",
            "Screen Size",
            "Weight",
        ]
        .map(String::from)
        .to_vec(),
    );
    map
}

fn default_price() -> Money {
    Money::parse("0.002").expect("default price parses")
}

fn default_cache_dir() -> PathBuf {
    PathBuf::from(".attrex-cache")
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_allowed_shots() -> Vec<usize> {
    vec![0, 1, 3, 6]
}

fn default_ratio() -> [u64; 3] {
    [8, 1, 1]
}

fn default_model() -> String {
    "gpt-3.5-turbo".to_string()
}

fn default_marker() -> String {
    "n/a".to_string()
}

fn default_concurrency() -> usize {
    4
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// JSONL corpus of product records.
    pub records: PathBuf,
    #[serde(default)]
    pub split: SplitConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub ratio: [u64; 3],
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            ratio: default_ratio(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct BackendConfig {
    #[serde(flatten)]
    pub kind: BackendKind,
    #[serde(default = "default_concurrency")]
    pub max_concurrent_requests: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendKind {
    Http {
        endpoint: String,
        credential_env: String,
    },
    Stub {
        script: PathBuf,
    },
}

impl BackendConfig {
    /// Instantiates the runtime backend (loading the stub script, if any).
    pub fn build(&self) -> Result<Backend, ClientError> {
        match &self.kind {
            BackendKind::Stub { script } => Ok(Backend::Stub(StubBackend::from_file(script)?)),
            BackendKind::Http {
                endpoint,
                credential_env,
            } => Ok(Backend::Http(HttpBackend::new(
                endpoint.clone(),
                credential_env.clone(),
                self.retry,
            ))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub design: PromptDesign,
    #[serde(default)]
    pub shots: usize,
    #[serde(default)]
    pub demo_seed: u64,
    pub backend: String,
    #[serde(default = "default_marker")]
    pub unknown_marker: String,
    #[serde(default)]
    pub open_mode: OpenEvalMode,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default)]
    pub max_output_tokens: Option<u32>,
    #[serde(default)]
    pub case_insensitive_match: bool,
    #[serde(default)]
    pub message_layout: MessageLayout,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    /// Run whose F1 the ΔF1 column is measured against. Defaults to the
    /// first run named on the report command line.
    #[serde(default)]
    pub reference: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub sampling: SamplingPolicy,
    #[serde(default = "default_category_map")]
    pub categories: CategoryMap,
    #[serde(default = "default_price")]
    pub price_per_1k: Money,
    #[serde(default = "default_cache_dir")]
    pub cache_dir: PathBuf,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub templates: Option<PathBuf>,
    #[serde(default)]
    pub normalization_rules: Option<PathBuf>,
    #[serde(default)]
    pub gold_overrides: Option<PathBuf>,
    #[serde(default = "default_allowed_shots")]
    pub allowed_shots: Vec<usize>,
    #[serde(default)]
    pub report: ReportConfig,
    #[serde(default)]
    pub backends: BTreeMap<String, BackendConfig>,
    #[serde(default)]
    pub runs: Vec<RunConfig>,
}

impl ExperimentConfig {
    /// Parses a config file, resolves relative paths against its directory
    /// and validates it.
    pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut config: ExperimentConfig =
            toml::from_str(&text).map_err(|source| ConfigError::Parse {
                path: path.display().to_string(),
                source: Box::new(source),
            })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        resolve(&mut self.dataset.records);
        resolve(&mut self.cache_dir);
        resolve(&mut self.output_dir);
        for p in [
            &mut self.templates,
            &mut self.normalization_rules,
            &mut self.gold_overrides,
        ]
        .into_iter()
        .flatten()
        {
            resolve(p);
        }
        for backend in self.backends.values_mut() {
            if let BackendKind::Stub { script } = &mut backend.kind {
                resolve(script);
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        if self.dataset.split.ratio.contains(&0) {
            return invalid(format!(
                "dataset.split.ratio components must be positive, got {:?}",
                self.dataset.split.ratio
            ));
        }
        if self.price_per_1k.is_negative() {
            return invalid("price_per_1k must be non-negative".into());
        }
        if self.categories.is_empty() {
            return invalid("categories map must not be empty".into());
        }
        for (category, attributes) in &self.categories {
            if attributes.is_empty() {
                return invalid(format!("category {category:?} lists no attributes"));
            }
            let mut seen = std::collections::BTreeSet::new();
            for attr in attributes {
                if !seen.insert(attr) {
                    return invalid(format!(
                        "category {category:?} lists attribute {attr:?} twice"
                    ));
                }
            }
        }
        for (name, backend) in &self.backends {
            if backend.max_concurrent_requests == 0 {
                return invalid(format!(
                    "backend {name:?}: max_concurrent_requests must be at least 1"
                ));
            }
            if backend.retry.max_attempts == 0 {
                return invalid(format!(
                    "backend {name:?}: retry.max_attempts must be at least 1"
                ));
            }
        }
        let mut run_names = std::collections::BTreeSet::new();
        for run in &self.runs {
            if !run_names.insert(&run.name) {
                return invalid(format!("run name {:?} is used twice", run.name));
            }
            if !self.backends.contains_key(&run.backend) {
                return invalid(format!(
                    "run {:?} references undefined backend {:?}",
                    run.name, run.backend
                ));
            }
            if !self.allowed_shots.contains(&run.shots) {
                return invalid(format!(
                    "run {:?}: shots = {} not in allowed_shots {:?}",
                    run.name, run.shots, self.allowed_shots
                ));
            }
            if run.temperature < 0.0 {
                return invalid(format!(
                    "run {:?}: temperature must be non-negative",
                    run.name
                ));
            }
            if run.unknown_marker.trim().is_empty() {
                return invalid(format!(
                    "run {:?}: unknown_marker must be non-empty",
                    run.name
                ));
            }
        }
        if let Some(reference) = &self.report.reference {
            if !self.runs.iter().any(|r| &r.name == reference) {
                return invalid(format!("report.reference names unknown run {reference:?}"));
            }
        }
        Ok(())
    }

    pub fn run(&self, name: &str) -> Result<&RunConfig, ConfigError> {
        self.runs
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown run {name:?}")))
    }

    pub fn backend_config(&self, name: &str) -> Result<&BackendConfig, ConfigError> {
        self.backends
            .get(name)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown backend {name:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_config(body: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("experiment.toml");
        std::fs::write(&path, body).unwrap();
        (dir, path)
    }

    const MINIMAL: &str = r#"
[dataset]
records = "records.jsonl"

[backends.stub]
kind = "stub"
script = "script.json"

[[runs]]
name = "explicit-zero"
design = "explicit"
shots = 0
backend = "stub"
"#;

    #[test]
    fn minimal_config_loads_with_defaults() {
        let (dir, path) = write_config(MINIMAL);
        let config = ExperimentConfig::load(&path).unwrap();
        assert_eq!(config.dataset.split.ratio, [8, 1, 1]);
        assert_eq!(config.sampling.max_positive_per_cell, 40);
        assert_eq!(config.sampling.max_negative_per_cell, 10);
        assert_eq!(config.price_per_1k, Money::parse("0.002").unwrap());
        assert_eq!(config.allowed_shots, vec![0, 1, 3, 6]);
        // paths resolve against the config directory
        assert_eq!(config.dataset.records, dir.path().join("records.jsonl"));
        match &config.backends["stub"].kind {
            BackendKind::Stub { script } => assert_eq!(script, &dir.path().join("script.json")),
            other => panic!("unexpected backend {other:?}"),
        }
    }

    #[test]
    fn default_map_covers_fifteen_attributes_in_three_categories() {
        let map = default_category_map();
        assert_eq!(map.len(), 3);
        let total: usize = map.values().map(Vec::len).sum();
        assert_eq!(total, 15);
        assert_eq!(map["Memory Cards"], vec!["Capacity", "SD Format"]);
        assert_eq!(map["Digital Camera"].len(), 5);
        assert_eq!(map["Laptops"].len(), 8);
    }

    #[test]
    fn undefined_backend_is_rejected() {
        let body = MINIMAL.replace("backend = \"stub\"", "backend = \"ghost\"");
        let (_dir, path) = write_config(&body);
        assert!(matches!(
            ExperimentConfig::load(&path).unwrap_err(),
            ConfigError::Invalid(_)
        ));
    }

    #[test]
    fn disallowed_shot_counts_are_rejected() {
        let body = MINIMAL.replace("shots = 0", "shots = 2");
        let (_dir, path) = write_config(&body);
        let err = ExperimentConfig::load(&path).unwrap_err();
        assert!(err.to_string().contains("shots"));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let body = format!("{MINIMAL}\ntypo_field = 1\n");
        let (_dir, path) = write_config(&body);
        assert!(matches!(
            ExperimentConfig::load(&path).unwrap_err(),
            ConfigError::Parse { .. }
        ));
    }

    #[test]
    fn http_backend_parses() {
        let body = r#"
[dataset]
records = "records.jsonl"

[backends.live]
kind = "http"
endpoint = "https://example.test/v1/chat/completions"
credential_env = "KEY"
max_concurrent_requests = 2

[backends.live.retry]
max_attempts = 5
backoff_base_ms = 10
"#;
        let (_dir, path) = write_config(body);
        let config = ExperimentConfig::load(&path).unwrap();
        let backend = &config.backends["live"];
        assert_eq!(backend.max_concurrent_requests, 2);
        assert_eq!(backend.retry.max_attempts, 5);
        assert!(matches!(backend.kind, BackendKind::Http { .. }));
    }

    #[test]
    fn duplicate_run_names_are_rejected() {
        let body = format!(
            "{MINIMAL}\n[[runs]]\nname = \"explicit-zero\"\ndesign = \"open\"\nshots = 0\nbackend = \"stub\"\n"
        );
        let (_dir, path) = write_config(&body);
        assert!(ExperimentConfig::load(&path).is_err());
    }

    #[test]
    fn report_reference_must_name_a_run() {
        let body = format!("{MINIMAL}\n[report]\nreference = \"ghost\"\n");
        let (_dir, path) = write_config(&body);
        assert!(ExperimentConfig::load(&path).is_err());
    }
}
