use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::VlmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provider {
    #[serde(alias = "anthropic-style")]
    Anthropic,
    #[serde(alias = "openai-style")]
    Openai,
    #[serde(alias = "google-style")]
    Google,
    Mock,
}

impl Provider {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provider::Anthropic => "anthropic",
            Provider::Openai => "openai",
            Provider::Google => "google",
            Provider::Mock => "mock",
        }
    }

    pub fn default_endpoint(&self) -> &'static str {
        match self {
            Provider::Anthropic => "https://api.anthropic.com/v1/messages",
            Provider::Openai => "https://api.openai.com/v1/chat/completions",
            Provider::Google => "https://generativelanguage.googleapis.com/v1beta/models/{model}:generateContent",
            Provider::Mock => "mock://local",
        }
    }

    pub fn default_key_env(&self) -> &'static str {
        match self {
            Provider::Anthropic => "ANTHROPIC_API_KEY",
            Provider::Openai => "OPENAI_API_KEY",
            Provider::Google => "GOOGLE_API_KEY",
            Provider::Mock => "",
        }
    }
}

impl fmt::Display for Provider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Provider {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().trim_end_matches("-style") {
            "anthropic" => Ok(Provider::Anthropic),
            "openai" => Ok(Provider::Openai),
            "google" => Ok(Provider::Google),
            "mock" => Ok(Provider::Mock),
            other => Err(format!("unknown provider `{other}`")),
        }
    }
}

/// Settings for the mock backend. Lookup order: transcript entry for the image hash,
/// then `reply`, then a 404.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockSettings {
    pub reply: Option<String>,
    /// JSON file mapping image sha256 (hex) to a reply string or `{"status": N}`.
    pub transcript: Option<PathBuf>,
    /// Statuses returned, in order, before normal replies resume.
    pub script: Vec<u16>,
    /// Every numeric body cell of the reply is multiplied by `1 + perturb`.
    pub perturb: Option<f64>,
    /// Simulated latency per request, in milliseconds.
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    #[serde(default)]
    pub name: String,
    pub provider: Provider,
    pub model_id: String,
    #[serde(default)]
    pub endpoint_url: String,
    #[serde(default)]
    pub api_key_env: String,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// Seconds.
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    /// Client-side pacing; `None` leaves requests unthrottled.
    #[serde(default)]
    pub requests_per_minute: Option<u32>,
    /// Apply the 2x upscale before sending.
    #[serde(default = "default_true")]
    pub upscale: bool,
    #[serde(default)]
    pub mock: Option<MockSettings>,
    /// JSON-lines attempt log.
    #[serde(default)]
    pub log_path: Option<PathBuf>,
}

fn default_retries() -> u32 {
    3
}
fn default_timeout() -> f64 {
    60.0
}
fn default_max_tokens() -> u32 {
    4096
}
fn default_true() -> bool {
    true
}

impl BackendConfig {
    /// A config with provider defaults filled in.
    pub fn new(provider: Provider, model_id: &str) -> Self {
        BackendConfig {
            name: model_id.to_string(),
            provider,
            model_id: model_id.to_string(),
            endpoint_url: provider.default_endpoint().to_string(),
            api_key_env: provider.default_key_env().to_string(),
            max_retries: default_retries(),
            timeout: default_timeout(),
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            requests_per_minute: None,
            upscale: true,
            mock: None,
            log_path: None,
        }
    }

    pub fn mock_reply(reply: &str) -> Self {
        let mut c = BackendConfig::new(Provider::Mock, "mock");
        c.mock = Some(MockSettings {
            reply: Some(reply.to_string()),
            ..Default::default()
        });
        c
    }

    pub fn validate(&self) -> Result<(), VlmError> {
        if !(self.timeout > 0.0 && self.timeout.is_finite()) {
            return Err(VlmError::Config(format!("timeout must be positive, got {}", self.timeout)));
        }
        if self.model_id.trim().is_empty() {
            return Err(VlmError::Config("model_id is empty".into()));
        }
        if self.provider != Provider::Mock && self.api_key_env.trim().is_empty() {
            return Err(VlmError::Config(format!(
                "backend `{}`: api_key_env must name an environment variable",
                self.name
            )));
        }
        if let Some(p) = self.mock.as_ref().and_then(|m| m.perturb) {
            if !p.is_finite() || p <= -1.0 {
                return Err(VlmError::Config(format!("perturb must be finite and > -1, got {p}")));
            }
        }
        Ok(())
    }

    /// Endpoint with `{model}` substituted; provider default when unset.
    pub fn endpoint(&self) -> String {
        let base = if self.endpoint_url.is_empty() {
            self.provider.default_endpoint()
        } else {
            &self.endpoint_url
        };
        base.replace("{model}", &self.model_id)
    }

    fn fill_defaults(&mut self, name: &str) {
        if self.name.is_empty() {
            self.name = name.to_string();
        }
        if self.endpoint_url.is_empty() {
            self.endpoint_url = self.provider.default_endpoint().to_string();
        }
        if self.api_key_env.is_empty() {
            self.api_key_env = self.provider.default_key_env().to_string();
        }
    }

    /// Makes a relative transcript path relative to `dir`.
    fn resolve_paths(&mut self, dir: &Path) {
        if let Some(t) = self.mock.as_mut().and_then(|m| m.transcript.as_mut()) {
            if t.is_relative() {
                *t = dir.join(&*t);
            }
        }
    }
}

/// Named backends loaded from a TOML or JSON file:
///
/// ```toml
/// default = "sonnet"
/// [backends.sonnet]
/// provider = "anthropic"
/// model_id = "claude-sonnet-4-5"
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BackendRegistry {
    #[serde(default)]
    pub default: Option<String>,
    #[serde(default)]
    pub backends: BTreeMap<String, BackendConfig>,
}

impl BackendRegistry {
    pub fn from_toml(text: &str) -> Result<Self, VlmError> {
        let reg: BackendRegistry = toml::from_str(text).map_err(|e| VlmError::Config(e.to_string()))?;
        reg.finish()
    }

    pub fn from_json(text: &str) -> Result<Self, VlmError> {
        let reg: BackendRegistry = serde_json::from_str(text).map_err(|e| VlmError::Config(e.to_string()))?;
        reg.finish()
    }

    /// Chooses the parser by extension (`.json`, otherwise TOML).
    pub fn load(path: &Path) -> Result<Self, VlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| VlmError::Config(format!("{}: {e}", path.display())))?;
        let mut reg = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Self::from_json(&text)?
        } else {
            Self::from_toml(&text)?
        };
        let dir = path.parent().unwrap_or(Path::new("."));
        for b in reg.backends.values_mut() {
            b.resolve_paths(dir);
        }
        Ok(reg)
    }

    fn finish(mut self) -> Result<Self, VlmError> {
        for (name, b) in self.backends.iter_mut() {
            b.fill_defaults(name);
            b.validate()?;
        }
        if let Some(d) = &self.default {
            if !self.backends.contains_key(d) {
                return Err(VlmError::Config(format!("default backend `{d}` is not defined")));
            }
        }
        Ok(self)
    }

    /// Used when no backends are configured: one entry per provider, defaulting to the
    /// low-cost Anthropic model. Keys still come from each provider's environment variable.
    pub fn builtin() -> Self {
        let entries = [
            ("haiku", Provider::Anthropic, "claude-haiku-4-5"),
            ("sonnet", Provider::Anthropic, "claude-sonnet-4-5"),
            ("gpt-4o", Provider::Openai, "gpt-4o"),
            ("gemini-flash", Provider::Google, "gemini-2.0-flash"),
        ];
        let backends = entries
            .into_iter()
            .map(|(name, provider, model)| {
                let mut c = BackendConfig::new(provider, model);
                c.name = name.to_string();
                (name.to_string(), c)
            })
            .collect();
        BackendRegistry {
            default: Some("haiku".to_string()),
            backends,
        }
    }

    pub fn get(&self, name: &str) -> Option<&BackendConfig> {
        self.backends.get(name)
    }

    /// The named backend, or the default when `name` is `None`.
    pub fn resolve(&self, name: Option<&str>) -> Result<&BackendConfig, VlmError> {
        let key = match name.or(self.default.as_deref()) {
            Some(k) => k,
            None if self.backends.len() == 1 => self.backends.keys().next().map(String::as_str).unwrap_or(""),
            None => return Err(VlmError::Config("no backend named and no default set".into())),
        };
        self.backends
            .get(key)
            .ok_or_else(|| VlmError::Config(format!("unknown backend `{key}`")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.backends.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_defaults_to_haiku() {
        let reg = BackendRegistry::builtin();
        let d = reg.resolve(None).unwrap();
        assert_eq!((d.provider, d.model_id.as_str()), (Provider::Anthropic, "claude-haiku-4-5"));
        assert_eq!(d.api_key_env, "ANTHROPIC_API_KEY");
        assert!(reg.backends.values().all(|b| b.validate().is_ok()));
    }

    #[test]
    fn toml_registry_with_defaults() {
        let reg = BackendRegistry::from_toml(
            r#"
default = "gpt"
[backends.gpt]
provider = "openai-style"
model_id = "gpt-4o"
max_retries = 5

[backends.replay]
provider = "mock"
model_id = "mock"
[backends.replay.mock]
reply = "A\tB"
"#,
        )
        .unwrap();
        let gpt = reg.resolve(None).unwrap();
        assert_eq!(gpt.provider, Provider::Openai);
        assert_eq!(gpt.api_key_env, "OPENAI_API_KEY");
        assert_eq!(gpt.max_retries, 5);
        assert_eq!(gpt.timeout, 60.0);
        assert_eq!(gpt.name, "gpt");
        assert_eq!(reg.get("replay").unwrap().mock.as_ref().unwrap().reply.as_deref(), Some("A\tB"));
    }

    #[test]
    fn json_registry() {
        let reg = BackendRegistry::from_json(
            r#"{"backends": {"g": {"provider": "google", "model_id": "gemini-2.0-flash", "timeout": 12.5}}}"#,
        )
        .unwrap();
        let g = reg.resolve(None).unwrap();
        assert_eq!(g.endpoint(), "https://generativelanguage.googleapis.com/v1beta/models/gemini-2.0-flash:generateContent");
        assert_eq!(g.timeout, 12.5);
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(BackendRegistry::from_toml("[backends.x]\nprovider = \"openai\"\nmodel_id = \"m\"\ntimeout = 0\n").is_err());
        assert!(BackendRegistry::from_toml("[backends.x]\nprovider = \"openai\"\nmodel_id = \"m\"\nmax_retries = -1\n").is_err());
        assert!(BackendRegistry::from_toml("default = \"y\"\n[backends.x]\nprovider = \"mock\"\nmodel_id = \"m\"\n").is_err());
        let mut c = BackendConfig::new(Provider::Anthropic, "m");
        c.api_key_env.clear();
        assert!(c.validate().is_err());
        c.provider = Provider::Mock;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn provider_parse() {
        assert_eq!("Anthropic-style".parse::<Provider>().unwrap(), Provider::Anthropic);
        assert!("llama".parse::<Provider>().is_err());
    }
}
