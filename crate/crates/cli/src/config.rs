//! Benchmark configuration files.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use layoutbench::closed::{GenerationPlan, PlanCell};
use layoutbench::layout::LayoutConfig;
use layoutbench::metrics::EvalMode;
use layoutbench::prompt::ComposeOptions;
use layoutbench::Vocabulary;

/// Either a total spread evenly over scenarios and object counts, or
/// explicit cells.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanConfig {
    pub total: Option<usize>,
    pub cells: Option<Vec<PlanCell>>,
}

impl PlanConfig {
    pub fn resolve(&self) -> Result<GenerationPlan> {
        match (self.total, &self.cells) {
            (Some(_), Some(_)) => bail!("plan sets both `total` and `cells`"),
            (Some(total), None) => Ok(GenerationPlan::balanced(total)),
            (None, Some(cells)) => Ok(GenerationPlan { cells: cells.clone() }),
            (None, None) => Ok(GenerationPlan::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub enabled: bool,
    pub endpoint: String,
    /// Bearer token; `token_env` names an environment variable to read it from instead.
    pub token: Option<String>,
    pub token_env: Option<String>,
    pub timeout_secs: u64,
    pub retries: u32,
    pub max_attempts: u32,
    pub max_length: u32,
    /// Overrides the built-in few-shot instruction.
    pub instruction: Option<String>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        let compose = ComposeOptions::default();
        LlmConfig {
            enabled: false,
            endpoint: String::new(),
            token: None,
            token_env: None,
            timeout_secs: 30,
            retries: compose.client_retries,
            max_attempts: compose.max_attempts,
            max_length: compose.max_length,
            instruction: None,
        }
    }
}

impl LlmConfig {
    pub fn compose_options(&self) -> ComposeOptions {
        let mut opts = ComposeOptions {
            client_retries: self.retries,
            max_attempts: self.max_attempts,
            max_length: self.max_length,
            ..ComposeOptions::default()
        };
        if let Some(text) = &self.instruction {
            opts.instruction = text.clone();
        }
        opts
    }

    pub fn resolve_token(&self) -> Result<Option<String>> {
        match (&self.token, &self.token_env) {
            (Some(t), _) => Ok(Some(t.clone())),
            (None, Some(var)) => std::env::var(var)
                .map(Some)
                .with_context(|| format!("environment variable {var} is not set")),
            (None, None) => Ok(None),
        }
    }
}

/// On-disk layout of a config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: u64,
    vocabulary: PathBuf,
    #[serde(default)]
    plan: PlanConfig,
    #[serde(default)]
    layout: LayoutConfig,
    #[serde(default)]
    llm: LlmConfig,
    #[serde(default)]
    mode: EvalMode,
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub seed: u64,
    pub vocabulary_path: PathBuf,
    pub vocabulary: Vocabulary,
    pub plan: GenerationPlan,
    pub layout: LayoutConfig,
    pub llm: LlmConfig,
    pub mode: EvalMode,
}

/// Reads a vocabulary from TOML, or from JSON when the extension is `.json`.
pub fn load_vocabulary(path: &Path) -> Result<Vocabulary> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read vocabulary {}", path.display()))?;
    let vocab: Vocabulary = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).with_context(|| format!("{}", path.display()))?
    } else {
        toml::from_str(&text).with_context(|| format!("{}", path.display()))?
    };
    vocab
        .validate()
        .with_context(|| format!("invalid vocabulary {}", path.display()))?;
    Ok(vocab)
}

impl BenchConfig {
    /// Loads a config; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let raw: RawConfig =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let vocabulary_path = base.join(&raw.vocabulary);
        let vocabulary = load_vocabulary(&vocabulary_path)?;
        let plan = raw.plan.resolve()?;
        plan.check()?;
        if raw.llm.enabled && raw.llm.endpoint.is_empty() {
            bail!("llm.enabled is set but llm.endpoint is empty");
        }
        Ok(BenchConfig {
            seed: raw.seed,
            vocabulary_path,
            vocabulary,
            plan,
            layout: raw.layout,
            llm: raw.llm,
            mode: raw.mode,
        })
    }

    /// SHA-256 over every field that influences generated instructions.
    /// Credentials, timeouts and the evaluation mode are excluded.
    pub fn digest(&self) -> String {
        #[derive(Serialize)]
        struct Relevant<'a> {
            seed: u64,
            vocabulary: &'a Vocabulary,
            plan: &'a GenerationPlan,
            layout: &'a LayoutConfig,
            llm_enabled: bool,
            llm_endpoint: Option<&'a str>,
            compose: Option<ComposeOptions>,
        }
        let enabled = self.llm.enabled;
        let relevant = Relevant {
            seed: self.seed,
            vocabulary: &self.vocabulary,
            plan: &self.plan,
            layout: &self.layout,
            llm_enabled: enabled,
            llm_endpoint: enabled.then_some(self.llm.endpoint.as_str()),
            compose: enabled.then(|| self.llm.compose_options()),
        };
        let bytes = serde_json::to_vec(&relevant).expect("config serializes");
        hex_digest(&bytes)
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
