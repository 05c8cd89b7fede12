use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    instantiate, AssetRegistry, InputEvent, MenuVerb, NodeSink, Outgoing, Plugin, PluginDescriptor, PluginError,
    PluginKind, PluginType, RegistryError, RenderContext, StatusNotice, ToolContext,
};
use crate::msgs::{MessageKind, StatusLevel};
use crate::scene::SceneNode;
use crate::time::Stamp;
use crate::txgraph::{FrameId, FrameTree};

struct Entry {
    desc: PluginDescriptor,
    plugin: Box<dyn Plugin>,
    dropped: u64,
}

/// Registry state as reported to viewers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PluginInfo {
    #[serde(flatten)]
    pub descriptor: PluginDescriptor,
    /// Messages on this plugin's topic that failed to decode.
    pub dropped: u64,
}

/// Owns every plugin instance. Driven from the tick loop only.
pub struct Registry {
    entries: Vec<Entry>,
    fixed_frame: FrameId,
    assets: AssetRegistry,
    outbox: Vec<Outgoing>,
    statuses: Vec<StatusNotice>,
    revision: u64,
}

impl Registry {
    pub fn new(fixed_frame: FrameId, assets: AssetRegistry) -> Self {
        Self {
            entries: Vec::new(),
            fixed_frame,
            assets,
            outbox: Vec::new(),
            statuses: Vec::new(),
            revision: 0,
        }
    }

    pub fn fixed_frame(&self) -> &FrameId {
        &self.fixed_frame
    }

    /// Bumped by every change visible in [`Registry::plugins`].
    pub fn revision(&self) -> u64 {
        self.revision
    }

    fn entry_mut(&mut self, id: &str) -> Result<&mut Entry, RegistryError> {
        self.entries
            .iter_mut()
            .find(|e| e.desc.id == id)
            .ok_or_else(|| RegistryError::UnknownId(id.to_owned()))
    }

    pub fn register(&mut self, desc: PluginDescriptor) -> Result<(), RegistryError> {
        if desc.id.is_empty() {
            return Err(RegistryError::EmptyId);
        }
        if self.entries.iter().any(|e| e.desc.id == desc.id) {
            return Err(RegistryError::DuplicateId(desc.id));
        }
        if desc.kind != desc.plugin_type.kind() {
            return Err(RegistryError::KindMismatch {
                id: desc.id,
                declared: desc.kind,
                plugin_type: desc.plugin_type,
            });
        }
        if desc.plugin_type.needs_topic() && desc.topic.is_empty() {
            return Err(RegistryError::EmptyTopic(desc.id));
        }
        let plugin = instantiate(&desc, &self.assets)?;
        self.entries.push(Entry {
            desc,
            plugin,
            dropped: 0,
        });
        self.revision += 1;
        Ok(())
    }

    pub fn plugins(&self) -> Vec<PluginInfo> {
        self.entries
            .iter()
            .map(|e| PluginInfo {
                descriptor: e.desc.clone(),
                dropped: e.dropped,
            })
            .collect()
    }

    pub fn descriptor(&self, id: &str) -> Option<&PluginDescriptor> {
        self.entries.iter().find(|e| e.desc.id == id).map(|e| &e.desc)
    }

    pub fn set_enabled(&mut self, id: &str, enabled: bool) -> Result<(), RegistryError> {
        let entry = self.entry_mut(id)?;
        if entry.desc.enabled != enabled {
            entry.desc.enabled = enabled;
            if !enabled {
                entry.plugin.reset();
            }
            self.revision += 1;
        }
        Ok(())
    }

    pub fn set_visibility(&mut self, id: &str, element: &str, visible: bool) -> Result<(), RegistryError> {
        let entry = self.entry_mut(id)?;
        entry
            .plugin
            .set_visibility(element, visible)
            .map_err(|source| RegistryError::Plugin {
                id: id.to_owned(),
                source,
            })?;
        self.revision += 1;
        Ok(())
    }

    /// Moves a plugin to another topic and drops everything it cached from the old one.
    pub fn set_topic(&mut self, id: &str, topic: &str) -> Result<(), RegistryError> {
        let entry = self.entry_mut(id)?;
        if !entry.desc.plugin_type.needs_topic() {
            return Err(RegistryError::TopicNotApplicable(id.to_owned()));
        }
        if topic.is_empty() {
            return Err(RegistryError::EmptyTopic(id.to_owned()));
        }
        if entry.desc.topic == topic {
            return Ok(());
        }
        entry.desc.topic = topic.to_owned();
        entry.plugin.clear();
        self.revision += 1;
        Ok(())
    }

    /// Topics the enabled display plugins currently want.
    pub fn subscriptions(&self) -> BTreeSet<(String, MessageKind)> {
        self.entries
            .iter()
            .filter(|e| e.desc.enabled)
            .filter_map(|e| e.plugin.message_kind().map(|k| (e.desc.topic.clone(), k)))
            .collect()
    }

    /// Topics the tools publish on.
    pub fn advertisements(&self) -> BTreeSet<(String, MessageKind)> {
        self.entries
            .iter()
            .filter_map(|e| e.plugin.publishes().map(|k| (e.desc.topic.clone(), k)))
            .collect()
    }

    /// Hands a raw payload received on `topic` to every enabled display listening there.
    pub fn deliver(&mut self, topic: &str, msg: &Value, now: Stamp) {
        for entry in self.entries.iter_mut() {
            if !entry.desc.enabled || entry.desc.topic != topic || entry.plugin.message_kind().is_none() {
                continue;
            }
            match entry.plugin.on_message(msg, now) {
                Ok(warnings) => {
                    for w in warnings {
                        self.statuses
                            .push(StatusNotice::new(StatusLevel::Warning, &entry.desc.id, w));
                    }
                }
                Err(e) => {
                    entry.dropped += 1;
                    log::debug!("{}: dropped message on {topic}: {e}", entry.desc.id);
                    if entry.dropped == 1 {
                        self.statuses.push(StatusNotice::new(
                            StatusLevel::Warning,
                            &entry.desc.id,
                            format!("dropping undecodable messages on {topic}: {e}"),
                        ));
                    }
                }
            }
        }
    }

    /// Applies one input event. Menu errors are returned and also queued as a status.
    pub fn handle_input(&mut self, ev: &InputEvent, now: Stamp) -> Result<(), RegistryError> {
        if let Err(reason) = ev.validate() {
            self.statuses
                .push(StatusNotice::new(StatusLevel::Warning, "input", reason));
            return Ok(());
        }
        let result = match ev {
            InputEvent::MenuAction { plugin, action, value } => self.menu_action(plugin, *action, value),
            InputEvent::RayMove { .. } | InputEvent::Tap { .. } => {
                self.dispatch_tool(PluginType::Arrow2dTool, ev, now);
                Ok(())
            }
            InputEvent::Command { .. } => {
                self.dispatch_tool(PluginType::CommandTool, ev, now);
                Ok(())
            }
        };
        if let Err(e) = &result {
            let source = match ev {
                InputEvent::MenuAction { plugin, .. } => plugin.as_str(),
                _ => "input",
            };
            self.statuses
                .push(StatusNotice::new(StatusLevel::Error, source, e.to_string()));
        }
        result
    }

    fn menu_action(&mut self, id: &str, verb: MenuVerb, value: &Value) -> Result<(), RegistryError> {
        let bad = |reason: &str| RegistryError::InvalidAction {
            id: id.to_owned(),
            reason: reason.to_owned(),
        };
        match verb {
            MenuVerb::SetEnabled => {
                let flag = value.as_bool().ok_or_else(|| bad("expected a boolean"))?;
                self.set_enabled(id, flag)
            }
            MenuVerb::SetVisibility => {
                let element = value
                    .get("element")
                    .and_then(Value::as_str)
                    .ok_or_else(|| bad("expected {element, visible}"))?;
                let visible = value
                    .get("visible")
                    .and_then(Value::as_bool)
                    .ok_or_else(|| bad("expected {element, visible}"))?;
                self.set_visibility(id, element, visible)
            }
            MenuVerb::SetTopic => {
                let topic = value.as_str().ok_or_else(|| bad("expected a topic string"))?;
                self.set_topic(id, topic)
            }
            MenuVerb::Reset => {
                self.entry_mut(id)?.plugin.reset();
                Ok(())
            }
        }
    }

    fn dispatch_tool(&mut self, plugin_type: PluginType, ev: &InputEvent, now: Stamp) {
        for entry in self.entries.iter_mut() {
            if !entry.desc.enabled || entry.desc.plugin_type != plugin_type {
                continue;
            }
            let ctx = ToolContext {
                now,
                topic: &entry.desc.topic,
                fixed_frame: &self.fixed_frame,
            };
            match entry.plugin.on_input(ev, &ctx) {
                Ok(Some(out)) => self.outbox.push(out),
                Ok(None) => {}
                Err(e) => self
                    .statuses
                    .push(StatusNotice::new(StatusLevel::Error, &entry.desc.id, e.to_string())),
            }
        }
    }

    /// Renders every enabled plugin. A plugin that errors or panics is disabled and reported;
    /// the rest of the frame is unaffected.
    pub fn render(&mut self, now: Stamp, tree: &FrameTree<f64>) -> Vec<SceneNode> {
        let ctx = RenderContext {
            now,
            tree,
            fixed_frame: &self.fixed_frame,
        };
        let mut nodes = Vec::new();
        let mut failed = false;
        for entry in self.entries.iter_mut() {
            if !entry.desc.enabled {
                continue;
            }
            let mut sink = NodeSink::new(&entry.desc.id);
            let plugin = &mut entry.plugin;
            let outcome = catch_unwind(AssertUnwindSafe(|| plugin.render(&ctx, &mut sink)));
            let err = match outcome {
                Ok(Ok(())) => {
                    nodes.extend(sink.into_nodes());
                    continue;
                }
                Ok(Err(e)) => e,
                Err(panic) => PluginError::Render(panic_message(&panic)),
            };
            entry.desc.enabled = false;
            failed = true;
            self.statuses.push(StatusNotice::new(
                StatusLevel::Error,
                &entry.desc.id,
                format!("disabled after failure: {err}"),
            ));
        }
        if failed {
            self.revision += 1;
        }
        nodes
    }

    pub fn drain_outbox(&mut self) -> Vec<Outgoing> {
        std::mem::take(&mut self.outbox)
    }

    pub fn drain_statuses(&mut self) -> Vec<StatusNotice> {
        std::mem::take(&mut self.statuses)
    }

    /// Registers an already-built plugin; for plugins outside the built-in set.
    pub fn register_custom(&mut self, desc: PluginDescriptor, plugin: Box<dyn Plugin>) -> Result<(), RegistryError> {
        if self.entries.iter().any(|e| e.desc.id == desc.id) {
            return Err(RegistryError::DuplicateId(desc.id));
        }
        self.entries.push(Entry {
            desc,
            plugin,
            dropped: 0,
        });
        self.revision += 1;
        Ok(())
    }

    pub fn kind_of(&self, id: &str) -> Option<PluginKind> {
        self.descriptor(id).map(|d| d.kind)
    }
}

fn panic_message(panic: &Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = panic.downcast_ref::<&str>() {
        (*s).to_owned()
    } else if let Some(s) = panic.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic".to_owned()
    }
}
