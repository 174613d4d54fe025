use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sqltrack::embedding::{EmbeddingProvider, HashEmbedder, HttpEmbedder};
use sqltrack::llm::ChatClientConfig;
use sqltrack::pipeline::PipelineConfig;
use sqltrack::sese::TrainConfig;

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Benchmark `tables.json`.
    pub catalogs: PathBuf,
    /// Benchmark interactions file.
    pub interactions: PathBuf,
    /// Output of `annotate`, attached to the catalogs. Commands other than
    /// `annotate` fail if it is set but missing.
    pub annotations: Option<PathBuf>,
    /// Root holding `<db_id>/<db_id>.sqlite`, used for value samples and
    /// execution match.
    pub databases: Option<PathBuf>,
    pub checkpoint: PathBuf,
    pub output: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            catalogs: "tables.json".into(),
            interactions: "dev.json".into(),
            annotations: None,
            databases: None,
            checkpoint: "out/extractor.json".into(),
            output: "out".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Hash,
    /// OpenAI-compatible `/embeddings` endpoint configured by `[llm]`.
    Http,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub provider: ProviderKind,
    pub dim: usize,
    pub seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            provider: ProviderKind::Hash,
            dim: 64,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides `model.seed`; also seeds value sampling.
    pub seed: u64,
    pub workers: usize,
    /// Trailing share of interactions held out for F1 logging during `train`.
    pub held_out_fraction: f64,
    /// Ask the generator for SQL on every turn during `run`.
    pub generator: bool,
    pub paths: Paths,
    pub embedding: EmbeddingConfig,
    pub model: TrainConfig,
    pub pipeline: PipelineConfig,
    pub llm: ChatClientConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            workers: 4,
            held_out_fraction: 0.2,
            generator: false,
            paths: Paths::default(),
            embedding: EmbeddingConfig::default(),
            model: TrainConfig::default(),
            pipeline: PipelineConfig::default(),
            llm: ChatClientConfig::default(),
        }
    }
}

/// Command-line values that win over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub threshold: Option<f64>,
    pub window: Option<usize>,
    pub workers: Option<usize>,
    pub online: bool,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    /// Reads the file (or defaults), applies overrides and resolves relative
    /// paths against the file's directory.
    pub fn load(path: Option<&Path>, ov: &Overrides) -> Result<Self, CliError> {
        let (mut cfg, base) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                let cfg: RunConfig =
                    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                (cfg, p.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (RunConfig::default(), PathBuf::from(".")),
        };
        if let Some(s) = ov.seed {
            cfg.seed = s;
        }
        if let Some(o) = &ov.output {
            cfg.paths.output = o.clone();
        }
        if let Some(c) = &ov.checkpoint {
            cfg.paths.checkpoint = c.clone();
        }
        if let Some(s) = ov.threshold {
            cfg.model.threshold_s = s;
        }
        if let Some(w) = ov.window {
            cfg.pipeline.window = w;
        }
        if let Some(w) = ov.workers {
            cfg.workers = w;
        }
        if ov.online {
            cfg.llm.offline_stub = false;
        }
        cfg.model.seed = cfg.seed;

        let p = &mut cfg.paths;
        for path in [&mut p.catalogs, &mut p.interactions, &mut p.checkpoint, &mut p.output] {
            resolve(&base, path);
        }
        for path in [&mut p.annotations, &mut p.databases, &mut cfg.llm.cache_dir].into_iter().flatten() {
            resolve(&base, path);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.workers == 0 {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.held_out_fraction) {
            return Err(CliError::Config("held_out_fraction must be in [0, 1)".into()));
        }
        if self.embedding.dim == 0 {
            return Err(CliError::Config("embedding.dim must be positive".into()));
        }
        if self.pipeline.window == 0 {
            return Err(CliError::Config("pipeline.window must be positive".into()));
        }
        self.model.validate()?;
        Ok(())
    }

    pub fn provider(&self) -> Box<dyn EmbeddingProvider> {
        match self.embedding.provider {
            ProviderKind::Hash => Box::new(HashEmbedder::new(self.embedding.dim, self.embedding.seed)),
            ProviderKind::Http => Box::new(HttpEmbedder::new(self.llm.clone(), self.embedding.dim)),
        }
    }
}
