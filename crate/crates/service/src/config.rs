use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use figtab::pdf::DEFAULT_DPI;
use figtab::vlm::{BackendConfig, BackendRegistry};
use serde::Deserialize;

use crate::ServiceError;

/// On-disk form of the service config (TOML).
///
/// ```toml
/// storage_root = "/var/lib/figtab"
/// backends_file = "backends.toml"   # or inline [backends.<name>] tables
/// default_backend = "haiku"
/// ```
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfigFile {
    pub storage_root: Option<PathBuf>,
    pub backends_file: Option<PathBuf>,
    #[serde(default)]
    pub backends: BTreeMap<String, BackendConfig>,
    pub default_backend: Option<String>,
    pub session_ttl_hours: Option<f64>,
    pub max_upload_mb: Option<usize>,
    pub dpi: Option<u32>,
    /// `tracing` filter, e.g. `info` or `figtab=debug`.
    pub log_level: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub storage_root: PathBuf,
    pub registry: BackendRegistry,
    pub session_ttl: Duration,
    pub max_upload_bytes: usize,
    pub dpi: u32,
    pub log_level: Option<String>,
}

pub const DEFAULT_TTL: Duration = Duration::from_secs(24 * 3600);
pub const DEFAULT_MAX_UPLOAD: usize = 64 * 1024 * 1024;

impl ServiceConfig {
    /// Built-in backends, 24h TTL, storage under `root`.
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            storage_root: root.into(),
            registry: BackendRegistry::builtin(),
            session_ttl: DEFAULT_TTL,
            max_upload_bytes: DEFAULT_MAX_UPLOAD,
            dpi: DEFAULT_DPI,
            log_level: None,
        }
    }

    pub fn with_registry(mut self, registry: BackendRegistry) -> Self {
        self.registry = registry;
        self
    }

    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Relative paths in the file resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, ServiceError> {
        let file: ServiceConfigFile = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        let resolve = |p: PathBuf| if p.is_relative() { base.join(p) } else { p };
        let mut registry = match file.backends_file {
            Some(p) => BackendRegistry::load(&resolve(p)).map_err(|e| ServiceError::Config(e.to_string()))?,
            None => BackendRegistry::default(),
        };
        if !file.backends.is_empty() {
            let inline = toml::to_string(&BackendRegistry {
                default: None,
                backends: file.backends,
            })
            .map_err(|e| ServiceError::Config(e.to_string()))?;
            let inline = BackendRegistry::from_toml(&inline).map_err(|e| ServiceError::Config(e.to_string()))?;
            registry.backends.extend(inline.backends);
        }
        if registry.backends.is_empty() {
            registry = BackendRegistry::builtin();
        }
        if let Some(d) = file.default_backend {
            registry.default = Some(d);
        }
        if let Some(d) = &registry.default {
            if registry.get(d).is_none() {
                return Err(ServiceError::Config(format!("default backend `{d}` is not defined")));
            }
        }
        let ttl_hours = file.session_ttl_hours.unwrap_or(24.0);
        if !(ttl_hours > 0.0 && ttl_hours.is_finite()) {
            return Err(ServiceError::Config(format!("session_ttl_hours must be positive, got {ttl_hours}")));
        }
        Ok(ServiceConfig {
            storage_root: resolve(file.storage_root.unwrap_or_else(|| PathBuf::from("figtab-data"))),
            registry,
            session_ttl: Duration::from_secs_f64(ttl_hours * 3600.0),
            max_upload_bytes: file.max_upload_mb.map_or(DEFAULT_MAX_UPLOAD, |m| m * 1024 * 1024),
            dpi: file.dpi.unwrap_or(DEFAULT_DPI),
            log_level: file.log_level,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use figtab::vlm::Provider;

    #[test]
    fn empty_file_uses_builtin_backends() {
        let c = ServiceConfig::from_toml("", Path::new("/srv")).unwrap();
        assert_eq!(c.storage_root, PathBuf::from("/srv/figtab-data"));
        assert_eq!(c.registry.resolve(None).unwrap().model_id, "claude-haiku-4-5");
        assert_eq!(c.session_ttl, DEFAULT_TTL);
    }

    #[test]
    fn inline_backends_and_default() {
        let c = ServiceConfig::from_toml(
            r#"
storage_root = "/tmp/s"
default_backend = "echo"
session_ttl_hours = 1
[backends.echo]
provider = "mock"
model_id = "echo"
mock = { reply = "a\tb\n1\t2" }
"#,
            Path::new("."),
        )
        .unwrap();
        let b = c.registry.resolve(None).unwrap();
        assert_eq!((b.name.as_str(), b.provider), ("echo", Provider::Mock));
        assert_eq!(c.session_ttl, Duration::from_secs(3600));
    }

    #[test]
    fn rejects_unknown_default_and_keys_in_config() {
        assert!(ServiceConfig::from_toml("default_backend = \"nope\"", Path::new(".")).is_err());
        // Keys are never configured inline; only the env var name is.
        assert!(ServiceConfig::from_toml("api_key = \"sk-1\"", Path::new(".")).is_err());
    }

    #[test]
    fn shipped_example_loads() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/figtab.example.toml");
        let c = ServiceConfig::load(&path).unwrap();
        assert_eq!(c.registry.resolve(None).unwrap().name, "haiku");
        assert_eq!(c.registry.names().count(), 5);
        assert_eq!(c.max_upload_bytes, 64 * 1024 * 1024);
    }
}
