use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{from_value, DecodeError, EncodeError, RosMessage};
use crate::geom::{UnitQuat, RENORMALIZE_TOLERANCE};
use crate::time::Stamp;
use crate::txgraph::{FrameId, StampedTransform};
use crate::{Transform, Vec3};

// ---- wire layouts (ROS1 field names) ----

#[derive(Debug, Serialize, Deserialize)]
struct HeaderWire {
    #[serde(default)]
    seq: u32,
    stamp: Stamp,
    frame_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct XyzWire {
    x: f64,
    y: f64,
    z: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct QuatWire {
    x: f64,
    y: f64,
    z: f64,
    w: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct TransformWire {
    translation: XyzWire,
    rotation: QuatWire,
}

#[derive(Debug, Serialize, Deserialize)]
struct PoseWire {
    position: XyzWire,
    orientation: QuatWire,
}

#[derive(Debug, Serialize, Deserialize)]
struct TransformStampedWire {
    header: HeaderWire,
    child_frame_id: String,
    transform: TransformWire,
}

#[derive(Debug, Serialize, Deserialize)]
struct TfMessageWire {
    transforms: Vec<TransformStampedWire>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ColorWire {
    r: f64,
    g: f64,
    b: f64,
    a: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct DurationWire {
    #[serde(alias = "sec")]
    secs: i32,
    #[serde(alias = "nanosec")]
    nsecs: i32,
}

#[derive(Debug, Serialize, Deserialize)]
struct MarkerWire {
    header: HeaderWire,
    ns: String,
    id: i32,
    #[serde(rename = "type")]
    marker_type: i32,
    action: i32,
    pose: PoseWire,
    scale: XyzWire,
    color: ColorWire,
    lifetime: DurationWire,
    #[serde(default)]
    frame_locked: bool,
    #[serde(default)]
    points: Vec<XyzWire>,
    #[serde(default)]
    colors: Vec<ColorWire>,
    #[serde(default)]
    text: String,
    #[serde(default)]
    mesh_resource: String,
    #[serde(default)]
    mesh_use_embedded_materials: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct MarkerArrayWire {
    markers: Vec<MarkerWire>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PoseStampedWire {
    header: HeaderWire,
    pose: PoseWire,
}

#[derive(Debug, Serialize, Deserialize)]
struct StringWire {
    data: String,
}

// ---- conversions ----

fn finite(v: f64, what: &'static str) -> Result<f64, EncodeError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EncodeError::NonFinite(what))
    }
}

fn vec_out(v: &Vec3, what: &'static str) -> Result<XyzWire, EncodeError> {
    Ok(XyzWire {
        x: finite(v.x, what)?,
        y: finite(v.y, what)?,
        z: finite(v.z, what)?,
    })
}

fn quat_out(q: &UnitQuat<f64>, what: &'static str) -> Result<QuatWire, EncodeError> {
    Ok(QuatWire {
        x: finite(q.x(), what)?,
        y: finite(q.y(), what)?,
        z: finite(q.z(), what)?,
        w: finite(q.w(), what)?,
    })
}

/// Widens through the shortest decimal form so `0.1f32` is written as `0.1`.
fn channel_out(c: f32) -> f64 {
    c.to_string().parse().unwrap_or(0.0)
}

fn vec_in(v: &XyzWire) -> Vec3 {
    Vec3::new(v.x, v.y, v.z)
}

fn quat_in(q: &QuatWire, path: &str) -> Result<UnitQuat<f64>, DecodeError> {
    UnitQuat::from_xyzw_checked(q.x, q.y, q.z, q.w, RENORMALIZE_TOLERANCE).map_err(|e| DecodeError::Schema {
        path: path.to_owned(),
        reason: e.to_string(),
    })
}

fn frame_in(name: &str, path: &str) -> Result<FrameId, DecodeError> {
    FrameId::new(name).map_err(|e| DecodeError::Schema {
        path: path.to_owned(),
        reason: e.to_string(),
    })
}

fn header_out(frame: &str, stamp: Stamp) -> HeaderWire {
    HeaderWire {
        seq: 0,
        stamp,
        frame_id: frame.to_owned(),
    }
}

fn to_value<T: Serialize>(w: &T) -> Result<Value, EncodeError> {
    serde_json::to_value(w).map_err(|e| EncodeError::Invalid(e.to_string()))
}

// ---- tf2_msgs/TFMessage ----

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TfMessage {
    pub transforms: Vec<StampedTransform<f64>>,
}

impl RosMessage for TfMessage {
    const TYPE: &'static str = "tf2_msgs/TFMessage";

    fn to_json(&self) -> Result<Value, EncodeError> {
        let transforms = self
            .transforms
            .iter()
            .map(|st| {
                if st.parent == st.child {
                    return Err(EncodeError::Invalid(format!("{} is its own parent", st.child)));
                }
                Ok(TransformStampedWire {
                    header: header_out(st.parent.as_str(), st.stamp),
                    child_frame_id: st.child.as_str().to_owned(),
                    transform: TransformWire {
                        translation: vec_out(&st.transform.translation, "transform.translation")?,
                        rotation: quat_out(&st.transform.rotation, "transform.rotation")?,
                    },
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        to_value(&TfMessageWire { transforms })
    }

    fn from_json(value: &Value) -> Result<Self, DecodeError> {
        let wire: TfMessageWire = from_value(value)?;
        let transforms = wire
            .transforms
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let parent = frame_in(&w.header.frame_id, &format!("transforms[{i}].header.frame_id"))?;
                let child = frame_in(&w.child_frame_id, &format!("transforms[{i}].child_frame_id"))?;
                if parent == child {
                    return Err(DecodeError::Schema {
                        path: format!("transforms[{i}]"),
                        reason: "parent equals child".into(),
                    });
                }
                Ok(StampedTransform {
                    parent,
                    child,
                    stamp: w.header.stamp,
                    transform: Transform::new(
                        vec_in(&w.transform.translation),
                        quat_in(&w.transform.rotation, &format!("transforms[{i}].transform.rotation"))?,
                    ),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TfMessage { transforms })
    }
}

// ---- visualization_msgs/Marker(Array) ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MarkerType {
    Arrow,
    Cube,
    Sphere,
    Cylinder,
    LineStrip,
    LineList,
    Text,
    /// Valid ROS marker type this engine does not render (lists, points, meshes, triangles).
    Unsupported(i32),
}

impl MarkerType {
    pub fn code(self) -> i32 {
        match self {
            MarkerType::Arrow => 0,
            MarkerType::Cube => 1,
            MarkerType::Sphere => 2,
            MarkerType::Cylinder => 3,
            MarkerType::LineStrip => 4,
            MarkerType::LineList => 5,
            MarkerType::Text => 9,
            MarkerType::Unsupported(c) => c,
        }
    }

    pub fn from_code(code: i32) -> Option<Self> {
        Some(match code {
            0 => MarkerType::Arrow,
            1 => MarkerType::Cube,
            2 => MarkerType::Sphere,
            3 => MarkerType::Cylinder,
            4 => MarkerType::LineStrip,
            5 => MarkerType::LineList,
            9 => MarkerType::Text,
            6..=8 | 10 | 11 => MarkerType::Unsupported(code),
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MarkerAction {
    Add,
    Delete,
    DeleteAll,
}

impl MarkerAction {
    pub fn code(self) -> i32 {
        match self {
            MarkerAction::Add => 0,
            MarkerAction::Delete => 2,
            MarkerAction::DeleteAll => 3,
        }
    }

    pub fn from_code(code: i32) -> Option<Self> {
        match code {
            0 => Some(MarkerAction::Add),
            2 => Some(MarkerAction::Delete),
            3 => Some(MarkerAction::DeleteAll),
            _ => None,
        }
    }
}

/// Color with every channel in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rgba {
    pub r: f32,
    pub g: f32,
    pub b: f32,
    pub a: f32,
}

impl Rgba {
    pub const fn new(r: f32, g: f32, b: f32, a: f32) -> Self {
        Self { r, g, b, a }
    }

    /// Clamps each channel into `[0, 1]`; NaN becomes 0.
    pub fn clamped(self) -> Self {
        let c = |v: f32| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        Self::new(c(self.r), c(self.g), c(self.b), c(self.a))
    }

    pub fn with_alpha(self, a: f32) -> Self {
        Self { a, ..self }.clamped()
    }
}

impl Default for Rgba {
    fn default() -> Self {
        Self::new(1.0, 1.0, 1.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Marker {
    pub ns: String,
    pub id: i32,
    pub marker_type: MarkerType,
    pub action: MarkerAction,
    /// Required for `Add`; delete actions often leave it blank.
    pub frame_id: Option<FrameId>,
    pub stamp: Stamp,
    pub pose: Transform,
    pub scale: Vec3,
    pub color: Rgba,
    pub points: Vec<Vec3>,
    pub text: String,
    /// Zero means the marker never expires.
    pub lifetime: Duration,
}

impl Default for Marker {
    fn default() -> Self {
        Self {
            ns: String::new(),
            id: 0,
            marker_type: MarkerType::Cube,
            action: MarkerAction::Add,
            frame_id: None,
            stamp: Stamp::ZERO,
            pose: Transform::identity(),
            scale: Vec3::new(1.0, 1.0, 1.0),
            color: Rgba::default(),
            points: Vec::new(),
            text: String::new(),
            lifetime: Duration::ZERO,
        }
    }
}

impl Marker {
    /// Checks the per-type rules for an `Add` marker.
    ///
    /// Only the scale components a type actually uses must be positive: line types read
    /// `scale.x` (width), text reads `scale.z` (height), point-defined arrows read `x` and `y`.
    pub fn validate(&self) -> Result<(), String> {
        if self.action != MarkerAction::Add {
            return Ok(());
        }
        if self.frame_id.is_none() {
            return Err("frame_id is required for ADD".into());
        }
        let s = self.scale;
        if !(s.is_finite() && s.x >= 0.0 && s.y >= 0.0 && s.z >= 0.0) {
            return Err("scale must be finite and non-negative".into());
        }
        let positive = |v: f64| v > 0.0;
        let ok = match self.marker_type {
            MarkerType::LineStrip | MarkerType::LineList => positive(s.x),
            MarkerType::Text => positive(s.z),
            MarkerType::Arrow if !self.points.is_empty() => positive(s.x) && positive(s.y),
            MarkerType::Unsupported(_) => true,
            _ => positive(s.x) && positive(s.y) && positive(s.z),
        };
        if !ok {
            return Err(format!("scale must be positive for {:?}", self.marker_type));
        }
        if self.marker_type == MarkerType::LineList && !self.points.len().is_multiple_of(2) {
            return Err("LINE_LIST needs an even number of points".into());
        }
        if self.marker_type == MarkerType::Arrow && !self.points.is_empty() && self.points.len() != 2 {
            return Err("ARROW takes either zero or two points".into());
        }
        if !self.pose.is_finite() || self.points.iter().any(|p| !p.is_finite()) {
            return Err("non-finite geometry".into());
        }
        Ok(())
    }

    fn to_wire(&self) -> Result<MarkerWire, EncodeError> {
        self.validate().map_err(EncodeError::Invalid)?;
        Ok(MarkerWire {
            header: header_out(self.frame_id.as_ref().map(FrameId::as_str).unwrap_or(""), self.stamp),
            ns: self.ns.clone(),
            id: self.id,
            marker_type: self.marker_type.code(),
            action: self.action.code(),
            pose: PoseWire {
                position: vec_out(&self.pose.translation, "marker.pose")?,
                orientation: quat_out(&self.pose.rotation, "marker.pose")?,
            },
            scale: vec_out(&self.scale, "marker.scale")?,
            color: ColorWire {
                r: channel_out(self.color.r),
                g: channel_out(self.color.g),
                b: channel_out(self.color.b),
                a: channel_out(self.color.a),
            },
            lifetime: DurationWire {
                secs: self.lifetime.as_secs().min(i32::MAX as u64) as i32,
                nsecs: self.lifetime.subsec_nanos() as i32,
            },
            frame_locked: false,
            points: self
                .points
                .iter()
                .map(|p| vec_out(p, "marker.points"))
                .collect::<Result<_, _>>()?,
            colors: Vec::new(),
            text: self.text.clone(),
            mesh_resource: String::new(),
            mesh_use_embedded_materials: false,
        })
    }

    fn from_wire(w: &MarkerWire, path: &str) -> Result<Self, DecodeError> {
        let schema = |field: &str, reason: String| DecodeError::Schema {
            path: format!("{path}.{field}"),
            reason,
        };
        let marker_type = MarkerType::from_code(w.marker_type)
            .ok_or_else(|| schema("type", format!("unknown code {}", w.marker_type)))?;
        let action =
            MarkerAction::from_code(w.action).ok_or_else(|| schema("action", format!("unknown code {}", w.action)))?;
        let frame_id = FrameId::new(&w.header.frame_id).ok();
        if w.lifetime.secs < 0 || w.lifetime.nsecs < 0 {
            return Err(schema("lifetime", "negative duration".into()));
        }
        let marker = Marker {
            ns: w.ns.clone(),
            id: w.id,
            marker_type,
            action,
            frame_id,
            stamp: w.header.stamp,
            pose: Transform::new(
                vec_in(&w.pose.position),
                quat_in(&w.pose.orientation, &format!("{path}.pose.orientation"))?,
            ),
            scale: vec_in(&w.scale),
            color: Rgba::new(w.color.r as f32, w.color.g as f32, w.color.b as f32, w.color.a as f32).clamped(),
            points: w.points.iter().map(vec_in).collect(),
            text: w.text.clone(),
            lifetime: Duration::new(w.lifetime.secs as u64, 0) + Duration::from_nanos(w.lifetime.nsecs as u64),
        };
        marker.validate().map_err(|reason| DecodeError::Schema {
            path: path.to_owned(),
            reason,
        })?;
        Ok(marker)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MarkerArray {
    pub markers: Vec<Marker>,
}

impl RosMessage for MarkerArray {
    const TYPE: &'static str = "visualization_msgs/MarkerArray";

    fn to_json(&self) -> Result<Value, EncodeError> {
        let markers = self
            .markers
            .iter()
            .map(Marker::to_wire)
            .collect::<Result<Vec<_>, _>>()?;
        to_value(&MarkerArrayWire { markers })
    }

    fn from_json(value: &Value) -> Result<Self, DecodeError> {
        let wire: MarkerArrayWire = from_value(value)?;
        let markers = wire
            .markers
            .iter()
            .enumerate()
            .map(|(i, m)| Marker::from_wire(m, &format!("markers[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(MarkerArray { markers })
    }
}

// ---- geometry_msgs/PoseStamped ----

#[derive(Debug, Clone, PartialEq)]
pub struct PoseStamped {
    pub frame_id: FrameId,
    pub stamp: Stamp,
    pub pose: Transform,
}

impl RosMessage for PoseStamped {
    const TYPE: &'static str = "geometry_msgs/PoseStamped";

    fn to_json(&self) -> Result<Value, EncodeError> {
        to_value(&PoseStampedWire {
            header: header_out(self.frame_id.as_str(), self.stamp),
            pose: PoseWire {
                position: vec_out(&self.pose.translation, "pose.position")?,
                orientation: quat_out(&self.pose.rotation, "pose.orientation")?,
            },
        })
    }

    fn from_json(value: &Value) -> Result<Self, DecodeError> {
        let wire: PoseStampedWire = from_value(value)?;
        Ok(PoseStamped {
            frame_id: frame_in(&wire.header.frame_id, "header.frame_id")?,
            stamp: wire.header.stamp,
            pose: Transform::new(
                vec_in(&wire.pose.position),
                quat_in(&wire.pose.orientation, "pose.orientation")?,
            ),
        })
    }
}

// ---- std_msgs/String ----

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandString {
    pub data: String,
}

impl CommandString {
    pub fn new(data: impl Into<String>) -> Self {
        Self { data: data.into() }
    }
}

impl RosMessage for CommandString {
    const TYPE: &'static str = "std_msgs/String";

    fn to_json(&self) -> Result<Value, EncodeError> {
        if self.data.is_empty() {
            return Err(EncodeError::Invalid("command string is empty".into()));
        }
        to_value(&StringWire {
            data: self.data.clone(),
        })
    }

    fn from_json(value: &Value) -> Result<Self, DecodeError> {
        let wire: StringWire = from_value(value)?;
        if wire.data.is_empty() {
            return Err(DecodeError::Schema {
                path: "data".into(),
                reason: "empty command".into(),
            });
        }
        Ok(CommandString { data: wire.data })
    }
}
