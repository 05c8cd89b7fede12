//! Launcher configuration: one JSON document, overridable from the command line.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use holoviz_core::engine::EngineConfig;
use holoviz_core::plugins::{AssetRegistry, PluginDescriptor, PluginType, Registry, SettingValue};
use holoviz_core::{FrameId, Transform};
use holoviz_net::Endpoint;
use serde::{Deserialize, Serialize};

const LOG_LEVELS: [&str; 6] = ["off", "error", "warn", "info", "debug", "trace"];

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    /// `field` is a path into the document, like `plugins[2].id`.
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
}

impl ConfigError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// The offending field, if the error is about the document's content.
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::Invalid { field, .. } => Some(field),
            ConfigError::Io { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub bridge_url: String,
    /// 0 picks a free port.
    pub session_port: u16,
    pub fixed_frame: String,
    /// Where the fiducial marker physically sits in the real world.
    pub marker_in_rwcs: Transform,
    pub tick_hz: f64,
    pub log_level: String,
    pub tf_topics: Vec<String>,
    /// Mesh names the pose displays may reference, beyond the built-in ones.
    pub assets: Vec<String>,
    /// Static files served to browsers on the session port.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assets_dir: Option<PathBuf>,
    pub plugins: Vec<PluginDescriptor>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            bridge_url: "ws://localhost:9090".into(),
            session_port: holoviz_net::session::DEFAULT_SESSION_PORT,
            fixed_frame: "map".into(),
            marker_in_rwcs: Transform::identity(),
            tick_hz: 20.0,
            log_level: "info".into(),
            tf_topics: vec!["/tf".into(), "/tf_static".into()],
            assets: Vec::new(),
            assets_dir: None,
            plugins: default_plugins(),
        }
    }
}

/// The plugin set the bundled scenarios expect.
pub fn default_plugins() -> Vec<PluginDescriptor> {
    let keywords = BTreeMap::from([("start".to_string(), "start".to_string())]);
    vec![
        PluginDescriptor::new("tf", PluginType::TfDisplay, ""),
        PluginDescriptor::new("markers", PluginType::MarkerArrayDisplay, "/visualization_marker_array"),
        PluginDescriptor::new("robot", PluginType::StampedPoseDisplay, "/robot_pose")
            .with_setting("mesh", SettingValue::Text("fetch_base".into())),
        PluginDescriptor::new("grasp", PluginType::StampedPoseDisplay, "/grasp_pose")
            .with_setting("mesh", SettingValue::Text("panda_hand".into())),
        PluginDescriptor::new("nav_goal", PluginType::Arrow2dTool, "/move_base_simple/goal"),
        PluginDescriptor::new("voice", PluginType::CommandTool, "/handover/command")
            .with_setting("keywords", SettingValue::Map(keywords)),
    ]
}

/// Command-line values that replace what the file says.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub bridge_url: Option<String>,
    pub session_port: Option<u16>,
    pub log_level: Option<String>,
}

impl Config {
    /// Parses and validates a document.
    pub fn from_json(text: &str) -> Result<Config, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = match e.path().to_string() {
                p if p == "." => "(document)".to_string(),
                p => p,
            };
            ConfigError::invalid(field, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Config::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), ConfigError> {
        if let Some(url) = &o.bridge_url {
            self.bridge_url = url.clone();
        }
        if let Some(port) = o.session_port {
            self.session_port = port;
        }
        if let Some(level) = &o.log_level {
            self.log_level = level.clone();
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.bridge_url
            .parse::<Endpoint>()
            .map_err(|e| ConfigError::invalid("bridge_url", e.reason))?;
        let fixed = FrameId::new(&self.fixed_frame).map_err(|e| ConfigError::invalid("fixed_frame", e.to_string()))?;
        if !(self.tick_hz.is_finite() && self.tick_hz > 0.0) {
            return Err(ConfigError::invalid(
                "tick_hz",
                format!("must be positive, got {}", self.tick_hz),
            ));
        }
        if !self
            .log_level
            .parse::<log::LevelFilter>()
            .is_ok_and(|_| LOG_LEVELS.contains(&self.log_level.as_str()))
        {
            return Err(ConfigError::invalid(
                "log_level",
                format!("expected one of {}, got {:?}", LOG_LEVELS.join(", "), self.log_level),
            ));
        }
        for (i, t) in self.tf_topics.iter().enumerate() {
            if !t.starts_with('/') {
                return Err(ConfigError::invalid(
                    format!("tf_topics[{i}]"),
                    format!("topic {t:?} must start with '/'"),
                ));
            }
        }
        let mut seen = BTreeMap::new();
        for (i, p) in self.plugins.iter().enumerate() {
            if let Some(first) = seen.insert(p.id.as_str(), i) {
                return Err(ConfigError::invalid(
                    format!("plugins[{i}].id"),
                    format!("duplicate plugin id {:?} (first at plugins[{first}])", p.id),
                ));
            }
        }
        // registering into a scratch registry runs every per-plugin check
        let mut scratch = Registry::new(fixed, self.asset_registry());
        for (i, p) in self.plugins.iter().enumerate() {
            scratch
                .register(p.clone())
                .map_err(|e| ConfigError::invalid(format!("plugins[{i}]"), e.to_string()))?;
        }
        Ok(())
    }

    pub fn asset_registry(&self) -> AssetRegistry {
        let mut r = AssetRegistry::with_defaults();
        for a in &self.assets {
            r.add(a.clone());
        }
        r
    }

    /// Engine settings derived from this config. Call after [`validate`](Self::validate).
    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            fixed_frame: FrameId::new(&self.fixed_frame).expect("validated"),
            marker_in_rwcs: self.marker_in_rwcs,
            tf_topics: self.tf_topics.clone(),
            assets: self.asset_registry(),
            ..EngineConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        Config::default().validate().unwrap();
    }

    #[test]
    fn empty_document_means_defaults() {
        assert_eq!(Config::from_json("{}").unwrap(), Config::default());
    }

    #[test]
    fn type_errors_name_the_field() {
        let e = Config::from_json(r#"{"tick_hz": "fast"}"#).unwrap_err();
        assert_eq!(e.field(), Some("tick_hz"));
        let e =
            Config::from_json(r#"{"plugins": [{"id": "x", "kind": "display", "plugin_type": "Nope"}]}"#).unwrap_err();
        assert_eq!(e.field(), Some("plugins[0].plugin_type"));
        let e = Config::from_json(r#"{"tick_rate": 5}"#).unwrap_err();
        assert!(e.to_string().contains("tick_rate"), "{e}");
    }
}
