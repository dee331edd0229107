//! Run configuration: a TOML file with one section per pipeline stage,
//! overridden key by key from the command line.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context};
use emoforge_core::eval::StdMode;
use emoforge_core::llm::BackendConfig;
use emoforge_core::prompt::DEFAULT_SEEDS_PER_REQUEST;
use emoforge_core::{Kind, KindSet};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Provider {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub backend: BackendSection,
    pub attribute_schema: AttributeSection,
    pub prompt_builder: PromptSection,
    pub instruction_parser: ParserSection,
    pub dataset_store: StoreSection,
    pub eval_harness: EvalSection,
    pub paths: PathsSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSection {
    pub provider: Option<Provider>,
    pub endpoint: Option<String>,
    pub model_name: Option<String>,
    pub max_in_flight: Option<usize>,
    pub max_retries: Option<u32>,
    pub base_backoff_ms: Option<u64>,
    pub temperature: Option<f64>,
    pub timeout_secs: Option<u64>,
    /// Mock provider only.
    pub corruption_rate: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttributeSection {
    pub taxonomy: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptSection {
    pub seed_examples: Option<PathBuf>,
    pub seeds_per_request: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParserSection {
    pub regenerate: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoreSection {
    pub kinds: Option<Vec<Kind>>,
    pub sample_fraction: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub std: Option<StdMode>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub attributes: Option<PathBuf>,
    pub captions: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub completions_log: Option<PathBuf>,
    pub quarantine: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(FileConfig::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Paths {
    pub attributes: PathBuf,
    pub captions: PathBuf,
    pub output: PathBuf,
    pub completions_log: PathBuf,
    pub quarantine: PathBuf,
}

impl Paths {
    /// Every referenced file, including the dataset manifest, must be distinct.
    pub fn check_distinct(&self) -> anyhow::Result<()> {
        let manifest = emoforge_core::dataset::manifest_path(&self.output);
        let named = [
            ("attributes", &self.attributes),
            ("captions", &self.captions),
            ("output", &self.output),
            ("output manifest", &manifest),
            ("completions_log", &self.completions_log),
            ("quarantine", &self.quarantine),
        ];
        let mut seen: BTreeMap<PathBuf, &str> = BTreeMap::new();
        for (name, path) in named {
            let key = normalize(path);
            if let Some(prev) = seen.insert(key, name) {
                bail!("paths.{prev} and paths.{name} both refer to {}", path.display());
            }
        }
        Ok(())
    }
}

fn normalize(path: &Path) -> PathBuf {
    let abs = std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf());
    let mut out = PathBuf::new();
    for c in abs.components() {
        match c {
            std::path::Component::CurDir => {}
            std::path::Component::ParentDir => {
                out.pop();
            }
            other => out.push(other),
        }
    }
    out
}

/// Sibling of `output` named `<stem>.<suffix>`.
fn sibling(output: &Path, suffix: &str) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into());
    output.with_file_name(format!("{stem}.{suffix}"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub provider: Provider,
    pub backend: BackendConfig,
    pub corruption_rate: f64,
    pub taxonomy: String,
    pub seed_examples: Option<PathBuf>,
    pub seeds_per_request: usize,
    pub regenerate: bool,
    pub kinds: KindSet,
    pub sample_fraction: Option<f64>,
    pub seed: u64,
    pub paths: Paths,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub provider: Option<Provider>,
    pub endpoint: Option<String>,
    pub model_name: Option<String>,
    pub max_in_flight: Option<usize>,
    pub corruption_rate: Option<f64>,
    pub taxonomy: Option<String>,
    pub seed_examples: Option<PathBuf>,
    pub seeds_per_request: Option<usize>,
    pub no_regenerate: bool,
    pub kinds: Option<Vec<Kind>>,
    pub sample_fraction: Option<f64>,
    pub seed: Option<u64>,
    pub attributes: Option<PathBuf>,
    pub captions: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub completions_log: Option<PathBuf>,
    pub quarantine: Option<PathBuf>,
}

impl RunConfig {
    pub fn resolve(file: FileConfig, o: Overrides) -> anyhow::Result<Self> {
        let b = file.backend;
        let provider = o.provider.or(b.provider).unwrap_or_default();
        let defaults = BackendConfig::default();
        let default_model = match provider {
            Provider::Mock => emoforge_core::llm::mock::MOCK_MODEL.to_string(),
            Provider::Http => defaults.model_name,
        };
        let backend = BackendConfig {
            endpoint: o.endpoint.or(b.endpoint).unwrap_or(defaults.endpoint),
            model_name: o.model_name.or(b.model_name).unwrap_or(default_model),
            max_in_flight: o.max_in_flight.or(b.max_in_flight).unwrap_or(defaults.max_in_flight),
            max_retries: b.max_retries.unwrap_or(defaults.max_retries),
            base_backoff: b.base_backoff_ms.map(Duration::from_millis).unwrap_or(defaults.base_backoff),
            temperature: b.temperature.unwrap_or(defaults.temperature),
            timeout: b.timeout_secs.map(Duration::from_secs).unwrap_or(defaults.timeout),
        };
        backend.validate()?;

        let corruption_rate = o.corruption_rate.or(b.corruption_rate).unwrap_or(0.0);
        if !(0.0..=1.0).contains(&corruption_rate) {
            bail!("backend.corruption_rate must be in [0, 1], got {corruption_rate}");
        }
        let seeds_per_request = o
            .seeds_per_request
            .or(file.prompt_builder.seeds_per_request)
            .unwrap_or(DEFAULT_SEEDS_PER_REQUEST);
        let kinds = match o.kinds.or(file.dataset_store.kinds) {
            Some(k) => KindSet::new(k).map_err(|_| anyhow::anyhow!("dataset_store.kinds must not be empty"))?,
            None => KindSet::all(),
        };
        let sample_fraction = o.sample_fraction.or(file.dataset_store.sample_fraction);
        if let Some(f) = sample_fraction {
            emoforge_core::sampling::check_fraction(f)?;
        }

        let p = file.paths;
        let need = |v: Option<PathBuf>, name: &str| v.with_context(|| format!("paths.{name} is required (or pass --{name})"));
        let output = need(o.output.or(p.output), "output")?;
        let paths = Paths {
            attributes: need(o.attributes.or(p.attributes), "attributes")?,
            captions: need(o.captions.or(p.captions), "captions")?,
            completions_log: o
                .completions_log
                .or(p.completions_log)
                .unwrap_or_else(|| sibling(&output, "completions.jsonl")),
            quarantine: o.quarantine.or(p.quarantine).unwrap_or_else(|| sibling(&output, "quarantine.jsonl")),
            output,
        };
        paths.check_distinct()?;

        Ok(RunConfig {
            provider,
            backend,
            corruption_rate,
            taxonomy: o.taxonomy.or(file.attribute_schema.taxonomy).unwrap_or_else(|| "emoset".into()),
            seed_examples: o.seed_examples.or(file.prompt_builder.seed_examples),
            seeds_per_request,
            regenerate: !o.no_regenerate && file.instruction_parser.regenerate.unwrap_or(true),
            kinds,
            sample_fraction,
            seed: o.seed.or(file.dataset_store.seed).unwrap_or(0),
            paths,
        })
    }
}
