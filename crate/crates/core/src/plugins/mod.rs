//! Plugin framework: display plugins turn subscribed data into scene nodes every tick, tool
//! plugins turn user input into published messages.

mod arrow_tool;
mod command_tool;
mod marker_display;
mod pose_display;
mod registry;
mod settings;
mod tf_display;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::msgs::{DecodeError, EncodeError, MessageKind, StatusLevel};
use crate::scene::SceneNode;
use crate::time::Stamp;
use crate::txgraph::{FrameId, FrameTree, LookupTime, TfError};
use crate::{Transform, Vec3};

pub use arrow_tool::{Arrow2dTool, ArrowState};
pub use command_tool::CommandTool;
pub use marker_display::MarkerArrayDisplay;
pub use pose_display::StampedPoseDisplay;
pub use registry::{PluginInfo, Registry};
pub use settings::{schema_for, SettingKind, SettingValue, Settings};
pub use tf_display::TfDisplay;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PluginKind {
    Display,
    Tool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PluginType {
    TfDisplay,
    MarkerArrayDisplay,
    StampedPoseDisplay,
    Arrow2dTool,
    CommandTool,
}

impl PluginType {
    pub const ALL: [PluginType; 5] = [
        PluginType::TfDisplay,
        PluginType::MarkerArrayDisplay,
        PluginType::StampedPoseDisplay,
        PluginType::Arrow2dTool,
        PluginType::CommandTool,
    ];

    pub fn kind(self) -> PluginKind {
        match self {
            PluginType::TfDisplay | PluginType::MarkerArrayDisplay | PluginType::StampedPoseDisplay => {
                PluginKind::Display
            }
            PluginType::Arrow2dTool | PluginType::CommandTool => PluginKind::Tool,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PluginType::TfDisplay => "TfDisplay",
            PluginType::MarkerArrayDisplay => "MarkerArrayDisplay",
            PluginType::StampedPoseDisplay => "StampedPoseDisplay",
            PluginType::Arrow2dTool => "Arrow2dTool",
            PluginType::CommandTool => "CommandTool",
        }
    }

    /// Topic-less plugins read the transform tree directly.
    pub fn needs_topic(self) -> bool {
        self != PluginType::TfDisplay
    }
}

impl FromStr for PluginType {
    type Err = RegistryError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| RegistryError::UnknownType(s.to_owned()))
    }
}

impl fmt::Display for PluginType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn enabled_by_default() -> bool {
    true
}

/// Registry entry as it appears in configuration and in the viewer's plugin panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PluginDescriptor {
    pub id: String,
    pub kind: PluginKind,
    pub plugin_type: PluginType,
    #[serde(default)]
    pub topic: String,
    #[serde(default = "enabled_by_default")]
    pub enabled: bool,
    #[serde(default)]
    pub settings: Settings,
}

impl PluginDescriptor {
    pub fn new(id: impl Into<String>, plugin_type: PluginType, topic: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            kind: plugin_type.kind(),
            plugin_type,
            topic: topic.into(),
            enabled: true,
            settings: Settings::new(),
        }
    }

    pub fn with_setting(mut self, key: impl Into<String>, value: SettingValue) -> Self {
        self.settings.insert(key.into(), value);
        self
    }

    pub fn disabled(mut self) -> Self {
        self.enabled = false;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MenuVerb {
    /// `value`: bool.
    SetEnabled,
    /// `value`: `{"element": string, "visible": bool}`.
    SetVisibility,
    /// `value`: topic string.
    SetTopic,
    /// Return a tool to its idle state. `value` ignored.
    Reset,
}

/// User input, drained by the engine at the start of each tick.
///
/// Rays are expressed in the world frame of the scene the viewer is showing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InputEvent {
    RayMove {
        origin: Vec3,
        direction: Vec3,
    },
    Tap {
        origin: Vec3,
        direction: Vec3,
    },
    Command {
        text: String,
    },
    MenuAction {
        plugin: String,
        action: MenuVerb,
        #[serde(default)]
        value: Value,
    },
}

impl InputEvent {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            InputEvent::RayMove { origin, direction } | InputEvent::Tap { origin, direction } => {
                if !origin.is_finite() || !direction.is_finite() {
                    Err("ray has non-finite components".into())
                } else if direction.norm_squared() == 0.0 {
                    Err("ray direction is zero".into())
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// The same event with rays mapped through `tf`.
    pub fn transformed(&self, tf: &Transform) -> InputEvent {
        match self {
            InputEvent::RayMove { origin, direction } => InputEvent::RayMove {
                origin: tf.transform_point(origin),
                direction: tf.transform_vector(direction),
            },
            InputEvent::Tap { origin, direction } => InputEvent::Tap {
                origin: tf.transform_point(origin),
                direction: tf.transform_vector(direction),
            },
            other => other.clone(),
        }
    }
}

/// A message a tool wants published.
#[derive(Debug, Clone, PartialEq)]
pub struct Outgoing {
    pub topic: String,
    pub kind: MessageKind,
    pub msg: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusNotice {
    pub level: StatusLevel,
    pub source: String,
    pub message: String,
}

impl StatusNotice {
    pub fn new(level: StatusLevel, source: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            level,
            source: source.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PluginError {
    #[error("unknown element {0:?}")]
    UnknownElement(String),
    #[error("render failed: {0}")]
    Render(String),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegistryError {
    #[error("plugin id {0:?} already registered")]
    DuplicateId(String),
    #[error("unknown plugin type {0:?}")]
    UnknownType(String),
    #[error("no plugin with id {0:?}")]
    UnknownId(String),
    #[error("plugin id must be nonempty")]
    EmptyId,
    #[error("plugin {0:?} needs a nonempty topic")]
    EmptyTopic(String),
    #[error("plugin {0:?} has no topic to change")]
    TopicNotApplicable(String),
    #[error("plugin {id:?}: kind {declared:?} does not match {plugin_type}")]
    KindMismatch {
        id: String,
        declared: PluginKind,
        plugin_type: PluginType,
    },
    #[error("plugin {id:?}: {reason}")]
    InvalidSettings { id: String, reason: String },
    #[error("plugin {id:?}: bad menu value: {reason}")]
    InvalidAction { id: String, reason: String },
    #[error("plugin {id:?}: {source}")]
    Plugin { id: String, source: PluginError },
}

/// Meshes a display may reference by name.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AssetRegistry {
    meshes: std::collections::BTreeSet<String>,
}

impl AssetRegistry {
    /// Mobile base and gripper meshes used by the bundled scenarios.
    pub fn with_defaults() -> Self {
        let mut r = Self::default();
        r.add("fetch_base");
        r.add("panda_hand");
        r
    }

    pub fn add(&mut self, name: impl Into<String>) {
        self.meshes.insert(name.into());
    }

    pub fn contains(&self, name: &str) -> bool {
        self.meshes.contains(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.meshes.iter().map(String::as_str)
    }
}

/// Read-only inputs available while rendering.
pub struct RenderContext<'a> {
    pub now: Stamp,
    pub tree: &'a FrameTree<f64>,
    pub fixed_frame: &'a FrameId,
}

impl RenderContext<'_> {
    /// Pose of `frame` in the fixed frame at the newest mutually valid time.
    pub fn resolve(&self, frame: &FrameId) -> Result<Transform, TfError> {
        if frame == self.fixed_frame {
            return Ok(Transform::identity());
        }
        self.tree.lookup(self.fixed_frame, frame, LookupTime::Latest)
    }
}

/// Collects one plugin's nodes, namespacing ids as `<plugin id>/<key>`.
#[derive(Debug)]
pub struct NodeSink {
    prefix: String,
    nodes: BTreeMap<String, SceneNode>,
}

impl NodeSink {
    pub fn new(plugin_id: &str) -> Self {
        Self {
            prefix: plugin_id.to_owned(),
            nodes: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, key: &str, mut node: SceneNode) {
        node.node_id = format!("{}/{}", self.prefix, key);
        self.nodes.insert(node.node_id.clone(), node);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn into_nodes(self) -> impl Iterator<Item = SceneNode> {
        self.nodes.into_values()
    }
}

/// Inputs available to a tool while it handles an event.
pub struct ToolContext<'a> {
    pub now: Stamp,
    pub topic: &'a str,
    pub fixed_frame: &'a FrameId,
}

/// Behaviour shared by display and tool plugins. The registry owns the descriptor; a plugin
/// only holds its runtime state and parsed settings.
pub trait Plugin: Send {
    /// Message type this plugin consumes from its topic, if any.
    fn message_kind(&self) -> Option<MessageKind> {
        None
    }

    /// Message type this plugin publishes to its topic, if any.
    fn publishes(&self) -> Option<MessageKind> {
        None
    }

    /// Stores a received message. Returns warnings worth surfacing to the user.
    fn on_message(&mut self, _msg: &Value, _now: Stamp) -> Result<Vec<String>, DecodeError> {
        Ok(Vec::new())
    }

    fn render(&mut self, ctx: &RenderContext<'_>, out: &mut NodeSink) -> Result<(), PluginError>;

    fn on_input(&mut self, _ev: &InputEvent, _ctx: &ToolContext<'_>) -> Result<Option<Outgoing>, PluginError> {
        Ok(None)
    }

    fn set_visibility(&mut self, element: &str, _visible: bool) -> Result<(), PluginError> {
        Err(PluginError::UnknownElement(element.to_owned()))
    }

    /// Drops cached data, e.g. after a topic change.
    fn clear(&mut self) {}

    /// Returns interactive state to idle.
    fn reset(&mut self) {}
}

/// Builds the plugin behind a validated descriptor.
pub fn instantiate(desc: &PluginDescriptor, assets: &AssetRegistry) -> Result<Box<dyn Plugin>, RegistryError> {
    let invalid = |reason: String| RegistryError::InvalidSettings {
        id: desc.id.clone(),
        reason,
    };
    settings::validate(desc.plugin_type, &desc.settings).map_err(invalid)?;
    Ok(match desc.plugin_type {
        PluginType::TfDisplay => Box::new(TfDisplay::from_settings(&desc.settings)),
        PluginType::MarkerArrayDisplay => Box::new(MarkerArrayDisplay::from_settings(&desc.settings)),
        PluginType::StampedPoseDisplay => {
            Box::new(StampedPoseDisplay::from_settings(&desc.settings, assets).map_err(invalid)?)
        }
        PluginType::Arrow2dTool => Box::new(Arrow2dTool::from_settings(&desc.settings).map_err(invalid)?),
        PluginType::CommandTool => Box::new(CommandTool::from_settings(&desc.settings)),
    })
}
