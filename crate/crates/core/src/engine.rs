//! Tick-loop composition of transform tree, plugins, alignment and scene.
//!
//! Everything that arrives between ticks (bridge messages, viewer input, marker detections)
//! goes through an [`EngineInbox`] and is applied at the start of the next tick, so plugin
//! code never runs concurrently with itself.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;
use serde_json::Value;

use crate::align::{MarkerDetection, WorldAlignment};
use crate::msgs::{DecodeError, MessageKind, Rgba, RosMessage, TfMessage};
use crate::plugins::{AssetRegistry, InputEvent, Outgoing, PluginDescriptor, Registry, RegistryError, StatusNotice};
use crate::scene::{Primitive, Scene, SceneDiff, SceneNode};
use crate::time::Stamp;
use crate::txgraph::{FrameId, FrameTree, SharedFrameTree};
use crate::{Transform, Vec3};

/// Node id of the detected fiducial marker.
pub const FIDUCIAL_NODE_ID: &str = "align/fiducial";
const FIDUCIAL_SIZE: f64 = 0.15;

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub fixed_frame: FrameId,
    pub marker_in_rwcs: Transform,
    pub tf_topics: Vec<String>,
    pub assets: AssetRegistry,
    pub buffer_window: Duration,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            fixed_frame: FrameId::new("map").expect("static frame name"),
            marker_in_rwcs: Transform::identity(),
            tf_topics: vec!["/tf".into(), "/tf_static".into()],
            assets: AssetRegistry::with_defaults(),
            buffer_window: crate::txgraph::DEFAULT_BUFFER_WINDOW,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Inbound {
    Message { topic: String, msg: Value },
    Input(InputEvent),
    Detection(MarkerDetection<f64>),
}

/// Thread-safe queue feeding the next tick.
#[derive(Debug, Clone, Default)]
pub struct EngineInbox(Arc<Mutex<Vec<Inbound>>>);

impl EngineInbox {
    pub fn post(&self, item: Inbound) {
        self.0.lock().push(item);
    }

    pub fn post_message(&self, topic: impl Into<String>, msg: Value) {
        self.post(Inbound::Message {
            topic: topic.into(),
            msg,
        });
    }

    pub fn post_input(&self, ev: InputEvent) {
        self.post(Inbound::Input(ev));
    }

    pub fn post_detection(&self, det: MarkerDetection<f64>) {
        self.post(Inbound::Detection(det));
    }

    /// Takes everything posted so far. The engine does this at the start of each tick.
    pub fn drain(&self) -> Vec<Inbound> {
        std::mem::take(&mut *self.0.lock())
    }
}

#[derive(Debug, Clone)]
pub struct TickOutput {
    pub diff: SceneDiff,
    /// Messages the tools want published, in order.
    pub outgoing: Vec<Outgoing>,
    pub statuses: Vec<StatusNotice>,
    /// The plugin listing changed during this tick.
    pub registry_changed: bool,
}

pub struct Engine {
    tree: SharedFrameTree<f64>,
    registry: Registry,
    scene: Scene,
    alignment: WorldAlignment<f64>,
    alignment_pending: bool,
    inbox: EngineInbox,
    tf_topics: Vec<String>,
    seen_revision: u64,
}

impl Engine {
    pub fn new(config: EngineConfig) -> Self {
        Self {
            tree: SharedFrameTree::new(FrameTree::with_window(config.buffer_window)),
            registry: Registry::new(config.fixed_frame, config.assets),
            scene: Scene::new(),
            alignment: WorldAlignment::new(config.marker_in_rwcs),
            alignment_pending: false,
            inbox: EngineInbox::default(),
            tf_topics: config.tf_topics,
            seen_revision: 0,
        }
    }

    pub fn register(&mut self, desc: PluginDescriptor) -> Result<(), RegistryError> {
        self.registry.register(desc)
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn registry_mut(&mut self) -> &mut Registry {
        &mut self.registry
    }

    pub fn tree(&self) -> SharedFrameTree<f64> {
        self.tree.clone()
    }

    pub fn inbox(&self) -> EngineInbox {
        self.inbox.clone()
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn alignment(&self) -> &WorldAlignment<f64> {
        &self.alignment
    }

    pub fn is_tf_topic(&self, topic: &str) -> bool {
        self.tf_topics.iter().any(|t| t == topic)
    }

    pub fn tf_topics(&self) -> &[String] {
        &self.tf_topics
    }

    /// Decodes a transform message straight into the tree. Returns how many were accepted.
    pub fn ingest_tf(tree: &SharedFrameTree<f64>, msg: &Value) -> Result<usize, DecodeError> {
        let tf = TfMessage::from_json(msg)?;
        Ok(tree.insert_all(tf.transforms))
    }

    /// Everything the engine wants to receive: transform topics plus the enabled displays.
    pub fn subscriptions(&self) -> BTreeSet<(String, MessageKind)> {
        let mut subs = self.registry.subscriptions();
        for t in &self.tf_topics {
            subs.insert((t.clone(), MessageKind::Tf));
        }
        subs
    }

    pub fn advertisements(&self) -> BTreeSet<(String, MessageKind)> {
        self.registry.advertisements()
    }

    pub fn tick(&mut self, now: Stamp) -> TickOutput {
        let mut statuses = Vec::new();
        for item in self.inbox.drain() {
            match item {
                Inbound::Message { topic, msg } => {
                    if self.is_tf_topic(&topic) {
                        if let Err(e) = Self::ingest_tf(&self.tree, &msg) {
                            log::debug!("dropping transform message on {topic}: {e}");
                        }
                    } else {
                        self.registry.deliver(&topic, &msg, now);
                    }
                }
                Inbound::Input(ev) => {
                    let local = ev.transformed(&self.scene.world_root().inverse());
                    // errors are already queued as statuses by the registry
                    let _ = self.registry.handle_input(&local, now);
                }
                Inbound::Detection(det) => {
                    self.alignment.update(det);
                    self.alignment_pending = true;
                }
            }
        }
        if self.alignment_pending {
            self.alignment.apply(&mut self.scene);
            self.alignment_pending = false;
            statuses.push(StatusNotice::new(
                crate::msgs::StatusLevel::Info,
                "align",
                "world alignment updated",
            ));
        }

        let mut nodes = {
            let tree = self.tree.read();
            self.registry.render(now, &tree)
        };
        if let Some(det) = self.alignment.last_detection() {
            nodes.push(SceneNode::new(
                FIDUCIAL_NODE_ID,
                Primitive::Cube,
                det.marker_in_vwcs(),
                Vec3::new(FIDUCIAL_SIZE, FIDUCIAL_SIZE, 0.002),
                Rgba::new(1.0, 1.0, 1.0, 0.6),
            ));
        }
        let diff = self.scene.commit(nodes);

        statuses.extend(self.registry.drain_statuses());
        let revision = self.registry.revision();
        let registry_changed = revision != self.seen_revision;
        self.seen_revision = revision;
        TickOutput {
            diff,
            outgoing: self.registry.drain_outbox(),
            statuses,
            registry_changed,
        }
    }

    /// Full scene as a reset diff at the current epoch.
    pub fn snapshot_diff(&self) -> SceneDiff {
        self.scene.snapshot().to_reset_diff(true)
    }
}
