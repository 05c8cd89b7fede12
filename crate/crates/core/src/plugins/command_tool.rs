use std::collections::BTreeMap;

use super::{InputEvent, NodeSink, Outgoing, Plugin, PluginError, RenderContext, SettingValue, Settings, ToolContext};
use crate::msgs::{CommandString, MessageKind, RosMessage};

/// Maps spoken (here: typed) keywords to command strings published on the tool's topic.
/// Matching ignores case and surrounding whitespace.
#[derive(Debug, Clone, Default)]
pub struct CommandTool {
    keywords: BTreeMap<String, String>,
}

impl CommandTool {
    pub fn from_settings(s: &Settings) -> Self {
        let keywords = match s.get("keywords") {
            Some(SettingValue::Map(m)) => m
                .iter()
                .map(|(k, v)| (k.trim().to_lowercase(), v.clone()))
                .filter(|(k, v)| !k.is_empty() && !v.is_empty())
                .collect(),
            _ => BTreeMap::new(),
        };
        Self { keywords }
    }

    pub fn lookup(&self, spoken: &str) -> Option<&str> {
        self.keywords.get(&spoken.trim().to_lowercase()).map(String::as_str)
    }
}

impl Plugin for CommandTool {
    fn publishes(&self) -> Option<MessageKind> {
        Some(MessageKind::String)
    }

    fn render(&mut self, _ctx: &RenderContext<'_>, _out: &mut NodeSink) -> Result<(), PluginError> {
        Ok(())
    }

    fn on_input(&mut self, ev: &InputEvent, ctx: &ToolContext<'_>) -> Result<Option<Outgoing>, PluginError> {
        let InputEvent::Command { text } = ev else {
            return Ok(None);
        };
        let Some(code) = self.lookup(text) else {
            return Ok(None);
        };
        Ok(Some(Outgoing {
            topic: ctx.topic.to_owned(),
            kind: MessageKind::String,
            msg: CommandString::new(code).to_json()?,
        }))
    }
}
