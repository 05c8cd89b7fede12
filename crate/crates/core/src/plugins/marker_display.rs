use std::collections::{BTreeMap, BTreeSet};

use serde_json::Value;

use super::{NodeSink, Plugin, PluginError, RenderContext, Settings};
use crate::geom::UnitQuat;
use crate::msgs::{DecodeError, Marker, MarkerAction, MarkerArray, MarkerType, MessageKind, RosMessage};
use crate::scene::{Primitive, SceneNode};
use crate::time::Stamp;
use crate::{Transform, Vec3};

#[derive(Debug, Clone)]
struct LiveMarker {
    marker: Marker,
    received: Stamp,
}

/// Renders `visualization_msgs/MarkerArray` with ROS marker semantics: ADD replaces by
/// `(ns, id)`, DELETE removes one, DELETEALL clears the display, and a nonzero lifetime
/// expires the marker that long after it was received.
#[derive(Debug, Clone, Default)]
pub struct MarkerArrayDisplay {
    live: BTreeMap<(String, i32), LiveMarker>,
    warned: BTreeSet<i32>,
}

impl MarkerArrayDisplay {
    pub fn from_settings(_s: &Settings) -> Self {
        Self::default()
    }

    /// Applies markers in order.
    pub fn apply(&mut self, markers: impl IntoIterator<Item = Marker>, now: Stamp) -> Vec<String> {
        let mut warnings = Vec::new();
        for m in markers {
            match m.action {
                MarkerAction::Add => {
                    if let MarkerType::Unsupported(code) = m.marker_type {
                        if self.warned.insert(code) {
                            warnings.push(format!("marker type {code} is not rendered"));
                        }
                    }
                    self.live.insert(
                        (m.ns.clone(), m.id),
                        LiveMarker {
                            marker: m,
                            received: now,
                        },
                    );
                }
                MarkerAction::Delete => {
                    self.live.remove(&(m.ns.clone(), m.id));
                }
                MarkerAction::DeleteAll => self.live.clear(),
            }
        }
        warnings
    }

    fn expire(&mut self, now: Stamp) {
        self.live
            .retain(|_, lm| lm.marker.lifetime.is_zero() || now < lm.received.add(lm.marker.lifetime));
    }

    /// Live `(ns, id)` keys after expiring markers at `now`.
    pub fn live_keys(&mut self, now: Stamp) -> Vec<(String, i32)> {
        self.expire(now);
        self.live.keys().cloned().collect()
    }
}

fn segment(from: Vec3, to: Vec3, width: f64, color: crate::msgs::Rgba) -> SceneNode {
    let d = to - from;
    let rot = UnitQuat::rotation_between(&Vec3::new(1.0, 0.0, 0.0), &d).unwrap_or_default();
    SceneNode::new(
        "",
        Primitive::Segment,
        Transform::new(from, rot),
        Vec3::new(d.norm(), width, width),
        color,
    )
}

/// Scene nodes for one marker whose frame resolves to `frame_pose`, keyed by local suffix.
pub(crate) fn marker_nodes(m: &Marker, frame_pose: &Transform) -> Vec<(String, SceneNode)> {
    let base = format!("{}/{}", m.ns, m.id);
    let world = *frame_pose * m.pose;
    let solid = |p: Primitive| vec![(base.clone(), SceneNode::new("", p, world, m.scale, m.color))];
    match m.marker_type {
        MarkerType::Cube => solid(Primitive::Cube),
        MarkerType::Sphere => solid(Primitive::Sphere),
        MarkerType::Cylinder => solid(Primitive::Cylinder),
        MarkerType::Arrow if m.points.len() == 2 => {
            let tail = world.transform_point(&m.points[0]);
            let tip = world.transform_point(&m.points[1]);
            let d = tip - tail;
            let rot = UnitQuat::rotation_between(&Vec3::new(1.0, 0.0, 0.0), &d).unwrap_or_default();
            vec![(
                base,
                SceneNode::new(
                    "",
                    Primitive::ArrowMesh,
                    Transform::new(tail, rot),
                    Vec3::new(d.norm(), m.scale.x, m.scale.y),
                    m.color,
                ),
            )]
        }
        MarkerType::Arrow => solid(Primitive::ArrowMesh),
        MarkerType::LineList => m
            .points
            .chunks_exact(2)
            .enumerate()
            .map(|(i, pair)| {
                let a = world.transform_point(&pair[0]);
                let b = world.transform_point(&pair[1]);
                (format!("{base}/{i}"), segment(a, b, m.scale.x, m.color))
            })
            .collect(),
        MarkerType::LineStrip => m
            .points
            .windows(2)
            .enumerate()
            .map(|(i, pair)| {
                let a = world.transform_point(&pair[0]);
                let b = world.transform_point(&pair[1]);
                (format!("{base}/{i}"), segment(a, b, m.scale.x, m.color))
            })
            .collect(),
        MarkerType::Text => vec![(
            base,
            SceneNode::new("", Primitive::Label, world, m.scale, m.color).with_text(m.text.clone()),
        )],
        MarkerType::Unsupported(_) => Vec::new(),
    }
}

impl Plugin for MarkerArrayDisplay {
    fn message_kind(&self) -> Option<MessageKind> {
        Some(MessageKind::MarkerArray)
    }

    fn on_message(&mut self, msg: &Value, now: Stamp) -> Result<Vec<String>, DecodeError> {
        let array = MarkerArray::from_json(msg)?;
        Ok(self.apply(array.markers, now))
    }

    fn render(&mut self, ctx: &RenderContext<'_>, out: &mut NodeSink) -> Result<(), PluginError> {
        self.expire(ctx.now);
        for lm in self.live.values() {
            let Some(frame) = lm.marker.frame_id.as_ref() else {
                continue;
            };
            let Ok(frame_pose) = ctx.resolve(frame) else {
                continue;
            };
            for (key, node) in marker_nodes(&lm.marker, &frame_pose) {
                out.push(&key, node);
            }
        }
        Ok(())
    }

    fn clear(&mut self) {
        self.live.clear();
    }
}
