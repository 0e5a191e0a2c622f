use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use profdenoise::dataset::InteractionFormat;
use profdenoise::eval::DEFAULT_CUTOFFS;
use profdenoise::llm::{PromptVariant, RetryPolicy};
use profdenoise::synth::{MockMode, SynthSpec};
use profdenoise::TrainConfig;
use regex::{Captures, Regex};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub data: DataConfig,
    #[serde(default)]
    pub synth: SynthSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub denoise: DenoiseConfig,
    #[serde(default)]
    pub denoisers: BTreeMap<String, DenoiserConfig>,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/default")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    /// Use the output of the `synth` stage.
    Synth,
    File,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    pub interactions: Option<PathBuf>,
    pub titles: Option<PathBuf>,
    #[serde(default = "default_format")]
    pub format: InteractionFormat,
    pub kcore: Option<KcoreConfig>,
    /// Word used in prompts, e.g. "movie".
    #[serde(default = "default_domain")]
    pub domain_label: String,
}

fn default_format() -> InteractionFormat {
    InteractionFormat::Csv
}

fn default_domain() -> String {
    "item".into()
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KcoreConfig {
    pub user_min: usize,
    pub item_min: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiseConfig {
    pub k: usize,
    pub runs: u32,
    pub seed: u64,
    pub max_in_flight: usize,
    /// Stratified user sample size; all users when unset.
    pub sample: Option<usize>,
    pub top_recs: usize,
    pub model_name: String,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        DenoiseConfig {
            k: 1,
            runs: 3,
            seed: 0,
            max_in_flight: 8,
            sample: None,
            top_recs: 10,
            model_name: "MultiVAE".into(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DenoiserKind {
    Random,
    TopPop,
    Semantic,
    UpperBound,
    Mock {
        mode: MockMode,
        variant: Option<PromptVariant>,
        /// JSONL transcript for the scripted mode.
        script: Option<PathBuf>,
    },
    Llm {
        model: String,
        variant: Option<PromptVariant>,
        base_url: Option<String>,
        api_key: Option<String>,
        #[serde(default)]
        retry: RetryPolicy,
        /// Extra request fields such as temperature.
        #[serde(default)]
        params: serde_json::Map<String, serde_json::Value>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DenoiserConfig {
    /// Overrides `denoise.k`.
    pub k: Option<usize>,
    #[serde(flatten)]
    pub kind: DenoiserKind,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub cutoffs: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            cutoffs: DEFAULT_CUTOFFS.to_vec(),
        }
    }
}

/// Replaces `${NAME}` with the environment value; a missing variable is an
/// error. `$${` escapes a literal `${`.
pub fn interpolate(text: &str, lookup: impl Fn(&str) -> Option<String>) -> Result<String> {
    let re = Regex::new(r"\$\$\{|\$\{([A-Za-z_][A-Za-z0-9_]*)\}").unwrap();
    let mut missing = Vec::new();
    let out = re.replace_all(text, |c: &Captures| match c.get(1) {
        None => "${".to_string(),
        Some(name) => lookup(name.as_str()).unwrap_or_else(|| {
            missing.push(name.as_str().to_string());
            String::new()
        }),
    });
    if !missing.is_empty() {
        bail!("unset environment variable(s) referenced in config: {}", missing.join(", "));
    }
    Ok(out.into_owned())
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let text = interpolate(text, |k| std::env::var(k).ok())?;
        let cfg: Config = toml::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Config::parse(&text).with_context(|| format!("in config {}", path.display()))?;
        // relative data paths are relative to the config file
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.data.interactions, &mut cfg.data.titles].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        for d in cfg.denoisers.values_mut() {
            if let DenoiserKind::Mock { script: Some(p), .. } = &mut d.kind {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.data.source == DataSource::File && self.data.interactions.is_none() {
            bail!("data.interactions is required when data.source = \"file\"");
        }
        self.synth.validate()?;
        self.train.validate()?;
        if self.eval.cutoffs.is_empty() || self.eval.cutoffs.contains(&0) {
            bail!("eval.cutoffs must be non-empty and positive");
        }
        for (id, d) in &self.denoisers {
            let k = d.k.unwrap_or(self.denoise.k);
            if !(1..=2).contains(&k) {
                bail!("denoiser `{id}`: k must be 1 or 2, got {k}");
            }
            if let DenoiserKind::Mock { mode: MockMode::Scripted, script: None, .. } = d.kind {
                bail!("denoiser `{id}`: scripted mock needs `script`");
            }
        }
        Ok(())
    }

    pub fn override_seed(&mut self, seed: u64) {
        self.synth.seed = seed;
        self.train.seed = seed;
        self.denoise.seed = seed;
    }

    pub fn denoiser(&self, id: &str) -> Result<&DenoiserConfig> {
        self.denoisers.get(id).ok_or_else(|| {
            anyhow!(
                "unknown denoiser `{id}`; configured: {}",
                self.denoisers.keys().cloned().collect::<Vec<_>>().join(", ")
            )
        })
    }

    /// Hash of the configuration one stage depends on. Secrets are left
    /// out so rotating a key does not invalidate artifacts.
    pub fn stage_hash(&self, stage: &Stage) -> String {
        let value = match stage {
            Stage::Synth => serde_json::json!({ "synth": self.synth }),
            Stage::Prepare => match self.data.source {
                DataSource::Synth => serde_json::json!({ "data": self.data, "synth": self.synth }),
                DataSource::File => serde_json::json!({ "data": self.data }),
            },
            Stage::Train => serde_json::json!({ "train": self.train }),
            Stage::Denoise(id) => {
                let mut d = serde_json::to_value(self.denoisers.get(id)).unwrap();
                if let Some(obj) = d.as_object_mut() {
                    obj.remove("api_key");
                }
                serde_json::json!({ "denoise": self.denoise, "denoiser": d, "domain": self.data.domain_label })
            }
            Stage::Evaluate => serde_json::json!({}),
            Stage::Report => serde_json::json!({ "eval": self.eval }),
        };
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Synth,
    Prepare,
    Train,
    Denoise(String),
    Evaluate,
    Report,
}

impl Stage {
    pub fn key(&self) -> String {
        match self {
            Stage::Synth => "synth".into(),
            Stage::Prepare => "prepare".into(),
            Stage::Train => "train".into(),
            Stage::Denoise(id) => format!("denoise/{id}"),
            Stage::Evaluate => "evaluate".into(),
            Stage::Report => "report".into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[data]
source = "synth"

[denoisers.ub1]
kind = "upper-bound"

[denoisers.gpt]
kind = "llm"
model = "gpt-4o-mini"
api_key = "${TEST_KEY}"
k = 2
params = { temperature = 0.0 }
"#;

    #[test]
    fn interpolation() {
        let env = |k: &str| (k == "A").then(|| "x".to_string());
        assert_eq!(interpolate("a=${A} b=$${A}", env).unwrap(), "a=x b=${A}");
        let err = interpolate("${MISSING_ONE}", env).unwrap_err().to_string();
        assert!(err.contains("MISSING_ONE"), "{err}");
    }

    #[test]
    fn parses_denoisers() {
        let text = interpolate(MINIMAL, |_| Some("sk-test".into())).unwrap();
        let cfg: Config = toml::from_str(&text).unwrap();
        cfg.validate().unwrap();
        match &cfg.denoiser("gpt").unwrap().kind {
            DenoiserKind::Llm { api_key, params, .. } => {
                assert_eq!(api_key.as_deref(), Some("sk-test"));
                assert_eq!(params["temperature"], 0.0);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(cfg.denoiser("gpt").unwrap().k, Some(2));
        assert!(cfg.denoiser("nope").is_err());
    }

    #[test]
    fn key_does_not_affect_hash() {
        let a: Config = toml::from_str(&MINIMAL.replace("${TEST_KEY}", "one")).unwrap();
        let b: Config = toml::from_str(&MINIMAL.replace("${TEST_KEY}", "two")).unwrap();
        let s = Stage::Denoise("gpt".into());
        assert_eq!(a.stage_hash(&s), b.stage_hash(&s));
        let mut c = a.clone();
        c.denoise.seed = 5;
        assert_ne!(a.stage_hash(&s), c.stage_hash(&s));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(Config::parse("[data]\nsource = \"file\"").is_err());
        assert!(Config::parse("[data]\nsource = \"synth\"\n[eval]\ncutoffs = []").is_err());
        assert!(Config::parse("[data]\nsource = \"synth\"\nbogus = 1").is_err());
    }
}
