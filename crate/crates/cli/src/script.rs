//! Recorded input for deterministic replays: one JSON event per line.
//!
//! ```text
//! # comments and blank lines are skipped
//! {"t": 0.5, "input": {"type": "tap", "origin": {"x": 0, "y": 0, "z": 3}, "direction": {"x": 2, "y": 0, "z": -3}}}
//! {"t": 0.6, "detection": {"marker_in_device": {...}, "device_in_vwcs": {...}}}
//! {"t": 1.0, "end": {"pose_topic": "/robot_pose", "tolerance": 0.05, "timeout": 20}}
//! ```
//!
//! `t` is in script seconds from startup and must not decrease. An `end` event stops a
//! headless run, either at once (`"end": true`) or once the robot pose reported on
//! `pose_topic` is within `tolerance` of the last goal the engine published.

use std::path::Path;

use holoviz_core::align::MarkerDetection;
use holoviz_core::plugins::InputEvent;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error("cannot read script: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    Line { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Input(InputEvent),
    Detection(MarkerDetection<f64>),
    End(EndWhen),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EndWhen {
    Now(bool),
    GoalReached(GoalReached),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalReached {
    pub pose_topic: String,
    pub tolerance: f64,
    /// Script seconds after the `end` event before giving up.
    pub timeout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEvent {
    pub t: f64,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Script {
    pub events: Vec<ScriptEvent>,
}

impl Script {
    pub fn parse(text: &str) -> Result<Script, ScriptError> {
        let mut events: Vec<ScriptEvent> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let ev: ScriptEvent = serde_json::from_str(raw).map_err(|e| ScriptError::Line {
                line,
                reason: e.to_string(),
            })?;
            let bad = |reason: String| Err(ScriptError::Line { line, reason });
            if !(ev.t.is_finite() && ev.t >= 0.0) {
                return bad(format!("t must be a non-negative number, got {}", ev.t));
            }
            if let Some(prev) = events.last() {
                if ev.t < prev.t {
                    return bad(format!("t went backwards ({} after {})", ev.t, prev.t));
                }
                if matches!(prev.action, Action::End(_)) {
                    return bad("events after end".into());
                }
            }
            match &ev.action {
                Action::Input(input) => {
                    if let Err(e) = input.validate() {
                        return bad(e);
                    }
                }
                Action::End(EndWhen::Now(false)) => return bad("\"end\": false is not meaningful".into()),
                Action::End(EndWhen::GoalReached(g)) if !(g.tolerance > 0.0 && g.timeout > 0.0) => {
                    return bad("tolerance and timeout must be positive".into());
                }
                _ => {}
            }
            events.push(ev);
        }
        Ok(Script { events })
    }

    pub fn load(path: &Path) -> Result<Script, ScriptError> {
        Script::parse(&std::fs::read_to_string(path)?)
    }

    pub fn end(&self) -> Option<&ScriptEvent> {
        self.events.last().filter(|e| matches!(e.action, Action::End(_)))
    }
}

/// Hands out script events as their time comes.
#[derive(Debug, Clone)]
pub struct Player {
    events: std::vec::IntoIter<ScriptEvent>,
    pending: Option<ScriptEvent>,
}

impl Player {
    pub fn new(script: Script) -> Self {
        let mut events = script.events.into_iter();
        let pending = events.next();
        Self { events, pending }
    }

    /// Events with `t <= now`, in order.
    pub fn due(&mut self, now: f64) -> Vec<ScriptEvent> {
        let mut out = Vec::new();
        while self.pending.as_ref().is_some_and(|e| e.t <= now) {
            out.extend(self.pending.take());
            self.pending = self.events.next();
        }
        out
    }

    pub fn is_done(&self) -> bool {
        self.pending.is_none()
    }
}
