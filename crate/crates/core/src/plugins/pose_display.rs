use serde_json::Value;

use super::settings::{number, text};
use super::{AssetRegistry, NodeSink, Plugin, PluginError, RenderContext, Settings};
use crate::msgs::{DecodeError, MessageKind, PoseStamped, Rgba, RosMessage};
use crate::scene::{Primitive, SceneNode};
use crate::time::Stamp;
use crate::Vec3;

pub const DEFAULT_ARROW_LENGTH: f64 = 0.6;
const ARROW_COLOR: Rgba = Rgba::new(1.0, 0.1, 0.1, 1.0);
const MESH_COLOR: Rgba = Rgba::new(0.8, 0.8, 0.85, 1.0);

/// Shows the latest `geometry_msgs/PoseStamped` as an arrow or as a preloaded mesh.
#[derive(Debug, Clone)]
pub struct StampedPoseDisplay {
    mesh: Option<String>,
    opacity: f32,
    arrow_length: f64,
    latest: Option<PoseStamped>,
}

impl StampedPoseDisplay {
    pub fn from_settings(s: &Settings, assets: &AssetRegistry) -> Result<Self, String> {
        let mesh = text(s, "mesh").map(str::to_owned);
        if let Some(name) = &mesh {
            if !assets.contains(name) {
                return Err(format!("mesh {name:?} is not in the asset registry"));
            }
        }
        let opacity = number(s, "opacity", 1.0);
        if opacity > 1.0 {
            return Err("opacity must be within [0, 1]".into());
        }
        Ok(Self {
            mesh,
            opacity: opacity as f32,
            arrow_length: number(s, "arrow_length", DEFAULT_ARROW_LENGTH),
            latest: None,
        })
    }

    pub fn latest(&self) -> Option<&PoseStamped> {
        self.latest.as_ref()
    }
}

impl Plugin for StampedPoseDisplay {
    fn message_kind(&self) -> Option<MessageKind> {
        Some(MessageKind::PoseStamped)
    }

    fn on_message(&mut self, msg: &Value, _now: Stamp) -> Result<Vec<String>, DecodeError> {
        self.latest = Some(PoseStamped::from_json(msg)?);
        Ok(Vec::new())
    }

    fn render(&mut self, ctx: &RenderContext<'_>, out: &mut NodeSink) -> Result<(), PluginError> {
        let Some(pose) = &self.latest else {
            return Ok(());
        };
        let Ok(frame_pose) = ctx.resolve(&pose.frame_id) else {
            return Ok(());
        };
        let world = frame_pose * pose.pose;
        let node = match &self.mesh {
            Some(mesh) => SceneNode::new(
                "",
                Primitive::MeshRef,
                world,
                Vec3::new(1.0, 1.0, 1.0),
                MESH_COLOR.with_alpha(self.opacity),
            )
            .with_mesh(mesh.clone()),
            None => SceneNode::new(
                "",
                Primitive::ArrowMesh,
                world,
                Vec3::new(self.arrow_length, 0.05, 0.1),
                ARROW_COLOR.with_alpha(self.opacity),
            ),
        };
        out.push("pose", node);
        Ok(())
    }

    fn clear(&mut self) {
        self.latest = None;
    }
}
