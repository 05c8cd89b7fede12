use super::settings::text;
use super::{InputEvent, NodeSink, Outgoing, Plugin, PluginError, RenderContext, Settings, ToolContext};
use crate::geom::{ray_ground_intersect, yaw_quat};
use crate::msgs::{MessageKind, PoseStamped, Rgba, RosMessage};
use crate::scene::{Primitive, SceneNode};
use crate::txgraph::FrameId;
use crate::{Transform, Vec3};

const PREVIEW_COLOR: Rgba = Rgba::new(0.1, 0.9, 0.3, 0.8);
const TAIL_MARKER_DIAMETER: f64 = 0.08;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArrowState {
    Idle,
    /// Tail fixed; the tip follows the ray until the next tap.
    Orienting {
        tail: Vec3,
        tip: Option<Vec3>,
    },
}

/// Places a 2D goal on the ground plane: tap fixes the tail, moving the ray swings the tip,
/// a second tap publishes the pose.
#[derive(Debug, Clone)]
pub struct Arrow2dTool {
    frame_override: Option<FrameId>,
    state: ArrowState,
}

impl Arrow2dTool {
    pub fn from_settings(s: &Settings) -> Result<Self, String> {
        let frame_override = match text(s, "frame_id") {
            Some(f) => Some(FrameId::new(f).map_err(|e| e.to_string())?),
            None => None,
        };
        Ok(Self {
            frame_override,
            state: ArrowState::Idle,
        })
    }

    pub fn state(&self) -> ArrowState {
        self.state
    }
}

impl Plugin for Arrow2dTool {
    fn publishes(&self) -> Option<MessageKind> {
        Some(MessageKind::PoseStamped)
    }

    fn render(&mut self, _ctx: &RenderContext<'_>, out: &mut NodeSink) -> Result<(), PluginError> {
        let ArrowState::Orienting { tail, tip } = self.state else {
            return Ok(());
        };
        out.push(
            "tail",
            SceneNode::new(
                "",
                Primitive::Sphere,
                Transform::from_translation(tail),
                Vec3::new(TAIL_MARKER_DIAMETER, TAIL_MARKER_DIAMETER, TAIL_MARKER_DIAMETER),
                PREVIEW_COLOR,
            ),
        );
        if let Some(tip) = tip {
            if let Ok(rot) = yaw_quat(tail, tip) {
                let len = Vec3::new(tip.x - tail.x, tip.y - tail.y, 0.0).norm();
                out.push(
                    "preview",
                    SceneNode::new(
                        "",
                        Primitive::ArrowMesh,
                        Transform::new(tail, rot),
                        Vec3::new(len, 0.05, 0.1),
                        PREVIEW_COLOR,
                    ),
                );
            }
        }
        Ok(())
    }

    fn on_input(&mut self, ev: &InputEvent, ctx: &ToolContext<'_>) -> Result<Option<Outgoing>, PluginError> {
        match (*ev).clone() {
            InputEvent::Tap { origin, direction } => {
                let hit = ray_ground_intersect(origin, direction);
                match self.state {
                    ArrowState::Idle => {
                        if let Some(tail) = hit {
                            self.state = ArrowState::Orienting { tail, tip: None };
                        }
                        Ok(None)
                    }
                    ArrowState::Orienting { tail, tip } => {
                        let Some(tip) = hit.or(tip) else {
                            return Ok(None);
                        };
                        let Ok(yaw) = yaw_quat(tail, tip) else {
                            self.state = ArrowState::Orienting { tail, tip: Some(tip) };
                            return Ok(None);
                        };
                        let frame = self.frame_override.clone().unwrap_or_else(|| ctx.fixed_frame.clone());
                        let goal = PoseStamped {
                            frame_id: frame,
                            stamp: ctx.now,
                            pose: Transform::new(Vec3::new(tail.x, tail.y, 0.0), yaw),
                        };
                        let msg = goal.to_json()?;
                        self.state = ArrowState::Idle;
                        Ok(Some(Outgoing {
                            topic: ctx.topic.to_owned(),
                            kind: MessageKind::PoseStamped,
                            msg,
                        }))
                    }
                }
            }
            InputEvent::RayMove { origin, direction } => {
                if let ArrowState::Orienting { tail, .. } = self.state {
                    if let Some(hit) = ray_ground_intersect(origin, direction) {
                        self.state = ArrowState::Orienting { tail, tip: Some(hit) };
                    }
                }
                Ok(None)
            }
            _ => Ok(None),
        }
    }

    fn reset(&mut self) {
        self.state = ArrowState::Idle;
    }

    fn clear(&mut self) {
        self.state = ArrowState::Idle;
    }
}
