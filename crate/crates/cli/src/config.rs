use std::path::{Path, PathBuf};

use serde::Deserialize;
use storylens::corpus::WriterGroup;

use crate::CliError;

/// The pipeline configuration file. Relative paths resolve against the
/// directory holding the file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub workdir: PathBuf,
    /// Root seed; every stage derives its own stream from it.
    pub seed: u64,
    pub corpus: CorpusSection,
    pub pov: PovSection,
    pub attributes: AttributeSection,
    pub lexicons: LexiconSection,
    pub embeddings: EmbeddingSection,
    pub scoring: ScoringSection,
    pub evaluate: EvaluateSection,
    pub analysis: AnalysisSection,
    pub generate: GenerateSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            workdir: PathBuf::from("storylens-out"),
            seed: 20_231,
            corpus: CorpusSection::default(),
            pov: PovSection::default(),
            attributes: AttributeSection::default(),
            lexicons: LexiconSection::default(),
            embeddings: EmbeddingSection::default(),
            scoring: ScoringSection::default(),
            evaluate: EvaluateSection::default(),
            analysis: AnalysisSection::default(),
            generate: GenerateSection::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSection {
    pub inputs: Vec<InputFile>,
    /// Fail on the first malformed line instead of skipping it.
    pub strict: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputFile {
    pub path: PathBuf,
    /// Writer group for story records without a `writer` field.
    #[serde(default)]
    pub writer: Option<WriterGroup>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PovSection {
    /// Coreference clusters (JSONL). Stories without a record fall back to
    /// the rule-based resolver.
    pub clusters: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttributeSection {
    pub conllu: Option<PathBuf>,
    pub inference: Option<PathBuf>,
    /// `lemma` or `surface`.
    pub form: String,
    pub object_verbs: bool,
    /// Count each attribute type once per story.
    pub type_level: bool,
}

impl Default for AttributeSection {
    fn default() -> Self {
        Self {
            conllu: None,
            inference: None,
            form: "lemma".into(),
            object_verbs: false,
            type_level: false,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LexiconSection {
    pub vad: Option<PathBuf>,
    pub appearance: Vec<PathBuf>,
    pub intellect: Vec<PathBuf>,
    pub power_low: Option<PathBuf>,
    pub power_high: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingSection {
    pub path: Option<PathBuf>,
    /// `auto`, `text` or `binary`.
    pub format: String,
    /// `f32` or `f64`.
    pub precision: String,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        Self {
            path: None,
            format: "auto".into(),
            precision: "f64".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoringSection {
    /// `default` (axis_emb for bipolar dimensions, emb_sim otherwise) or
    /// `full` (every valid dimension/method pair).
    pub plan: String,
    pub low_percentile: f64,
    pub high_percentile: f64,
}

impl Default for ScoringSection {
    fn default() -> Self {
        Self {
            plan: "default".into(),
            low_percentile: 25.0,
            high_percentile: 75.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateSection {
    pub train_ratio: f64,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self { train_ratio: 0.8 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub k: usize,
    pub runs: usize,
    pub bins: usize,
    /// `z` or `raw`.
    pub value: String,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            k: 2,
            runs: 5,
            bins: 20,
            value: "z".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateSection {
    pub model: String,
    pub endpoint: String,
    pub n_per_prompt: u32,
    pub temperature: f64,
    /// `alternate`, `author` or `redditor`.
    pub roles: String,
    pub user_template: String,
    pub api_key_env: String,
    pub concurrency: usize,
    pub max_attempts: u32,
    /// Output JSONL, relative to the work directory.
    pub output: PathBuf,
}

impl Default for GenerateSection {
    fn default() -> Self {
        let d = storylens_genclient::GenerationConfig::default();
        Self {
            model: d.model_name,
            endpoint: d.endpoint_url,
            n_per_prompt: d.n_per_prompt,
            temperature: d.temperature,
            roles: "alternate".into(),
            user_template: d.user_template,
            api_key_env: d.api_key_env,
            concurrency: d.concurrency,
            max_attempts: d.max_attempts,
            output: PathBuf::from("generated.jsonl"),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: Config = toml::from_str(&text)
            .map_err(|e| CliError(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve(base);
        Ok(config)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.workdir);
        for input in &mut self.corpus.inputs {
            fix(&mut input.path);
        }
        for p in [
            &mut self.pov.clusters,
            &mut self.attributes.conllu,
            &mut self.attributes.inference,
            &mut self.lexicons.vad,
            &mut self.lexicons.power_low,
            &mut self.lexicons.power_high,
            &mut self.embeddings.path,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        for p in self.lexicons.appearance.iter_mut().chain(&mut self.lexicons.intellect) {
            fix(p);
        }
    }
}
