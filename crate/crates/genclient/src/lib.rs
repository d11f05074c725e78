//! Machine story generation against a chat-completions endpoint.
//!
//! Each prompt gets `n_per_prompt` single-completion requests. The system
//! message is one of two fixed writer personas; the user message fills the
//! prompt into a template. Generated stories are appended to a corpus JSONL
//! file and a rerun skips what is already there.

use std::time::Duration;

use serde::{Deserialize, Serialize};

mod collect;
pub mod mock;

pub use collect::{collect_stories, existing_jobs, CollectReport, Job};

pub const AUTHOR_TEXT: &str = "You are an award winning creative short story writer.";
pub const REDDITOR_TEXT: &str =
    "You're writing a Reddit story and you want other reddit users to like and upvote your story.";
pub const PLACEHOLDER: &str = "{prompt}";
pub const DEFAULT_USER_TEMPLATE: &str = "Write a 500 word story for the following prompt: {prompt}";
pub const DEFAULT_TEMPERATURE: f64 = 0.95;
pub const DEFAULT_API_KEY_ENV: &str = "OPENAI_API_KEY";

#[derive(Debug, thiserror::Error)]
pub enum GenError {
    #[error("invalid generation config: {0}")]
    Config(String),
    #[error("environment variable {0} holding the API credential is not set")]
    MissingCredential(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Output {
        path: String,
        line: usize,
        message: String,
    },
    #[error("HTTP client setup failed: {0}")]
    Client(String),
    #[error(transparent)]
    Core(#[from] storylens::Error),
}

pub type Result<T, E = GenError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemRole {
    Author,
    Redditor,
}

impl SystemRole {
    pub fn text(self) -> &'static str {
        match self {
            SystemRole::Author => AUTHOR_TEXT,
            SystemRole::Redditor => REDDITOR_TEXT,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SystemRole::Author => "author",
            SystemRole::Redditor => "redditor",
        }
    }
}

impl std::str::FromStr for SystemRole {
    type Err = GenError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "author" => Ok(SystemRole::Author),
            "redditor" => Ok(SystemRole::Redditor),
            _ => Err(GenError::Config(format!("unknown system role `{s}`"))),
        }
    }
}

/// Which persona each of a prompt's requests uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoleSchedule {
    /// Author for even request indices, redditor for odd ones.
    #[default]
    Alternate,
    Author,
    Redditor,
}

impl RoleSchedule {
    pub fn role_for(self, index: u32) -> SystemRole {
        match self {
            RoleSchedule::Alternate if index.is_multiple_of(2) => SystemRole::Author,
            RoleSchedule::Alternate => SystemRole::Redditor,
            RoleSchedule::Author => SystemRole::Author,
            RoleSchedule::Redditor => SystemRole::Redditor,
        }
    }
}

impl std::str::FromStr for RoleSchedule {
    type Err = GenError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alternate" => Ok(RoleSchedule::Alternate),
            "author" => Ok(RoleSchedule::Author),
            "redditor" => Ok(RoleSchedule::Redditor),
            _ => Err(GenError::Config(format!("unknown role schedule `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig {
    pub roles: RoleSchedule,
    pub user_template: String,
    pub temperature: f64,
    pub n_per_prompt: u32,
    pub model_name: String,
    pub endpoint_url: String,
    /// Name of the environment variable holding the bearer token. Empty
    /// sends no credential.
    pub api_key_env: String,
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    pub concurrency: usize,
    pub timeout: Duration,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            roles: RoleSchedule::Alternate,
            user_template: DEFAULT_USER_TEMPLATE.to_string(),
            temperature: DEFAULT_TEMPERATURE,
            n_per_prompt: 2,
            model_name: "gpt-3.5-turbo".to_string(),
            endpoint_url: "https://api.openai.com/v1/chat/completions".to_string(),
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
            max_attempts: 5,
            initial_backoff: Duration::from_secs(1),
            max_backoff: Duration::from_secs(60),
            concurrency: 4,
            timeout: Duration::from_secs(120),
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(GenError::Config(m));
        if !(self.temperature > 0.0 && self.temperature <= 2.0) {
            return fail(format!("temperature {} outside (0, 2]", self.temperature));
        }
        if self.n_per_prompt == 0 {
            return fail("n_per_prompt must be at least 1".into());
        }
        let placeholders = self.user_template.matches(PLACEHOLDER).count();
        if placeholders != 1 {
            return fail(format!(
                "user template must contain {PLACEHOLDER} exactly once, found {placeholders}"
            ));
        }
        if self.model_name.is_empty() || self.endpoint_url.is_empty() {
            return fail("model name and endpoint URL are required".into());
        }
        if self.max_attempts == 0 || self.concurrency == 0 {
            return fail("max_attempts and concurrency must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Message {
    pub role: &'static str,
    pub content: String,
}

/// Request body. Field order is the serialized order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub n: u32,
}

impl ChatRequest {
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("request serializes")
    }
}

/// The request for one completion of `prompt_text` under `role`.
pub fn build_request(prompt_text: &str, role: SystemRole, config: &GenerationConfig) -> Result<ChatRequest> {
    config.validate()?;
    Ok(ChatRequest {
        model: config.model_name.clone(),
        messages: vec![
            Message {
                role: "system",
                content: role.text().to_string(),
            },
            Message {
                role: "user",
                content: config.user_template.replacen(PLACEHOLDER, prompt_text, 1),
            },
        ],
        temperature: config.temperature,
        n: 1,
    })
}
