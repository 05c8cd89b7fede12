use std::collections::BTreeSet;
use std::f64::consts::FRAC_PI_2;

use super::settings::{flag, number};
use super::{NodeSink, Plugin, PluginError, RenderContext, Settings};
use crate::geom::UnitQuat;
use crate::msgs::Rgba;
use crate::scene::{Primitive, SceneNode};
use crate::txgraph::FrameId;
use crate::{Transform, Vec3};

pub const DEFAULT_AXIS_LENGTH: f64 = 0.15;
const DEFAULT_AXIS_WIDTH: f64 = 0.01;
const LABEL_HEIGHT: f64 = 0.05;
const LINK_ARROW_DIAMETER: f64 = 0.01;

const RED: Rgba = Rgba::new(1.0, 0.0, 0.0, 1.0);
const GREEN: Rgba = Rgba::new(0.0, 1.0, 0.0, 1.0);
const BLUE: Rgba = Rgba::new(0.0, 0.0, 1.0, 1.0);
const LABEL_COLOR: Rgba = Rgba::new(1.0, 1.0, 1.0, 1.0);
const LINK_COLOR: Rgba = Rgba::new(1.0, 0.85, 0.2, 1.0);

/// One red/green/blue axis triad per frame, plus optional frame-name labels and arrows from
/// each frame to its parent.
///
/// Visibility elements: `axes`, `names`, `arrows`, `all` (every frame) and `frame:<name>`.
#[derive(Debug, Clone)]
pub struct TfDisplay {
    axis_length: f64,
    axis_width: f64,
    show_axes: bool,
    show_names: bool,
    show_arrows: bool,
    show_all: bool,
    hidden: BTreeSet<FrameId>,
}

impl TfDisplay {
    pub fn from_settings(s: &Settings) -> Self {
        Self {
            axis_length: number(s, "axis_length", DEFAULT_AXIS_LENGTH),
            axis_width: number(s, "axis_width", DEFAULT_AXIS_WIDTH),
            show_axes: flag(s, "show_axes", true),
            show_names: flag(s, "show_names", true),
            show_arrows: flag(s, "show_arrows", true),
            show_all: true,
            hidden: BTreeSet::new(),
        }
    }

    fn frame_visible(&self, f: &FrameId) -> bool {
        self.show_all && !self.hidden.contains(f)
    }
}

/// Rotations taking +x onto the local y and z axes.
fn axis_rotations() -> [UnitQuat<f64>; 3] {
    [
        UnitQuat::identity(),
        UnitQuat::from_yaw(FRAC_PI_2),
        UnitQuat::from_axis_angle(Vec3::new(0.0, 1.0, 0.0), -FRAC_PI_2),
    ]
}

impl Plugin for TfDisplay {
    fn render(&mut self, ctx: &RenderContext<'_>, out: &mut NodeSink) -> Result<(), PluginError> {
        let axes = axis_rotations();
        for info in ctx.tree.all_frames() {
            if !self.frame_visible(&info.frame) {
                continue;
            }
            let Ok(pose) = ctx.resolve(&info.frame) else {
                continue;
            };
            let name = info.frame.as_str();
            if self.show_axes {
                for ((rot, color), axis) in axes.iter().zip([RED, GREEN, BLUE]).zip(["x", "y", "z"]) {
                    out.push(
                        &format!("{name}/{axis}"),
                        SceneNode::new(
                            "",
                            Primitive::Segment,
                            Transform::new(pose.translation, pose.rotation * *rot),
                            Vec3::new(self.axis_length, self.axis_width, self.axis_width),
                            color,
                        ),
                    );
                }
            }
            if self.show_names {
                out.push(
                    &format!("{name}/label"),
                    SceneNode::new(
                        "",
                        Primitive::Label,
                        Transform::from_translation(pose.translation),
                        Vec3::new(LABEL_HEIGHT, LABEL_HEIGHT, LABEL_HEIGHT),
                        LABEL_COLOR,
                    )
                    .with_text(name),
                );
            }
            if self.show_arrows {
                let Some(parent) = info.parent.as_ref() else {
                    continue;
                };
                let Ok(parent_pose) = ctx.resolve(parent) else {
                    continue;
                };
                let span = parent_pose.translation - pose.translation;
                if let Some(rot) = UnitQuat::rotation_between(&Vec3::new(1.0, 0.0, 0.0), &span) {
                    out.push(
                        &format!("{name}/parent"),
                        SceneNode::new(
                            "",
                            Primitive::ArrowMesh,
                            Transform::new(pose.translation, rot),
                            Vec3::new(span.norm(), LINK_ARROW_DIAMETER, 2.0 * LINK_ARROW_DIAMETER),
                            LINK_COLOR,
                        ),
                    );
                }
            }
        }
        Ok(())
    }

    fn set_visibility(&mut self, element: &str, visible: bool) -> Result<(), PluginError> {
        match element {
            "axes" => self.show_axes = visible,
            "names" => self.show_names = visible,
            "arrows" => self.show_arrows = visible,
            "all" => {
                self.show_all = visible;
                if visible {
                    self.hidden.clear();
                }
            }
            other => {
                let frame = other
                    .strip_prefix("frame:")
                    .and_then(|f| FrameId::new(f).ok())
                    .ok_or_else(|| PluginError::UnknownElement(other.to_owned()))?;
                if visible {
                    self.hidden.remove(&frame);
                } else {
                    self.hidden.insert(frame);
                }
            }
        }
        Ok(())
    }
}
