//! Per-type plugin settings and their schemas.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::PluginType;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SettingValue {
    Bool(bool),
    Number(f64),
    Text(String),
    Map(BTreeMap<String, String>),
}

pub type Settings = BTreeMap<String, SettingValue>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SettingKind {
    Bool,
    Number,
    Text,
    Map,
}

impl SettingValue {
    pub fn kind(&self) -> SettingKind {
        match self {
            SettingValue::Bool(_) => SettingKind::Bool,
            SettingValue::Number(_) => SettingKind::Number,
            SettingValue::Text(_) => SettingKind::Text,
            SettingValue::Map(_) => SettingKind::Map,
        }
    }
}

pub fn schema_for(plugin_type: PluginType) -> &'static [(&'static str, SettingKind)] {
    use SettingKind::*;
    match plugin_type {
        PluginType::TfDisplay => &[
            ("axis_length", Number),
            ("axis_width", Number),
            ("show_axes", Bool),
            ("show_names", Bool),
            ("show_arrows", Bool),
        ],
        PluginType::MarkerArrayDisplay => &[],
        PluginType::StampedPoseDisplay => &[("mesh", Text), ("opacity", Number), ("arrow_length", Number)],
        PluginType::Arrow2dTool => &[("frame_id", Text)],
        PluginType::CommandTool => &[("keywords", Map)],
    }
}

pub(crate) fn validate(plugin_type: PluginType, settings: &Settings) -> Result<(), String> {
    let schema = schema_for(plugin_type);
    for (key, value) in settings {
        match schema.iter().find(|(k, _)| k == key) {
            None => return Err(format!("unknown setting {key:?} for {plugin_type}")),
            Some((_, kind)) if *kind != value.kind() => {
                return Err(format!("setting {key:?} must be {kind:?}"));
            }
            Some(_) => {}
        }
        if let SettingValue::Number(n) = value {
            if !n.is_finite() || *n < 0.0 {
                return Err(format!("setting {key:?} must be a finite non-negative number"));
            }
        }
    }
    Ok(())
}

pub(crate) fn number(settings: &Settings, key: &str, default: f64) -> f64 {
    match settings.get(key) {
        Some(SettingValue::Number(n)) => *n,
        _ => default,
    }
}

pub(crate) fn flag(settings: &Settings, key: &str, default: bool) -> bool {
    match settings.get(key) {
        Some(SettingValue::Bool(b)) => *b,
        _ => default,
    }
}

pub(crate) fn text<'a>(settings: &'a Settings, key: &str) -> Option<&'a str> {
    match settings.get(key) {
        Some(SettingValue::Text(s)) => Some(s),
        _ => None,
    }
}
