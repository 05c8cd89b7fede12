//! The canonical envelope set checked byte-for-byte against `tests/golden/`.

use std::path::{Path, PathBuf};
use std::time::Duration;

use holoviz_core::geom::UnitQuat;
use holoviz_core::msgs::{
    BridgeOp, CommandString, Marker, MarkerAction, MarkerArray, MarkerType, PoseStamped, Rgba, RosMessage, StatusLevel,
    TfMessage,
};
use holoviz_core::{FrameId, Stamp, StampedTransform, Transform, Vec3};

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden")
}

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn frame(s: &str) -> FrameId {
    FrameId::new(s).unwrap()
}

pub fn cases() -> Vec<(&'static str, BridgeOp)> {
    let stamp = Stamp::new(12, 500_000_000);
    let tf = TfMessage {
        transforms: vec![StampedTransform {
            parent: frame("map"),
            child: frame("odom"),
            stamp,
            transform: Transform::new(
                Vec3::new(1.0, 2.0, 0.0),
                UnitQuat::from_xyzw(0.0, 0.0, 1.0, 0.0).unwrap(),
            ),
        }],
    };
    let grid = MarkerArray {
        markers: vec![Marker {
            ns: "grid".into(),
            id: 3,
            marker_type: MarkerType::LineList,
            action: MarkerAction::Add,
            frame_id: Some(frame("map")),
            stamp,
            pose: Transform::identity(),
            scale: Vec3::new(0.01, 0.0, 0.0),
            color: Rgba::new(0.5, 0.5, 0.5, 1.0),
            points: vec![Vec3::zero(), Vec3::new(1.0, 0.0, 0.0)],
            text: String::new(),
            lifetime: Duration::ZERO,
        }],
    };
    let goal = PoseStamped {
        frame_id: frame("map"),
        stamp: Stamp::new(3, 250_000_000),
        pose: Transform::from_translation(Vec3::new(1.0, 2.0, 0.0)),
    };

    let mut sub_pose = BridgeOp::subscribe("/grasp_pose", PoseStamped::TYPE);
    if let BridgeOp::Subscribe(s) = &mut sub_pose {
        s.queue_length = Some(64);
    }
    let mut adv_cmd = BridgeOp::advertise("/handover/command", CommandString::TYPE);
    if let BridgeOp::Advertise(a) = &mut adv_cmd {
        a.id = Some("advertise:/handover/command".into());
    }
    let mut info = BridgeOp::status(StatusLevel::Info, "subscribed");
    if let BridgeOp::Status(s) = &mut info {
        s.id = Some("subscribe:/tf".into());
    }

    vec![
        ("01_subscribe_tf.json", BridgeOp::subscribe("/tf", TfMessage::TYPE)),
        (
            "02_subscribe_marker_array.json",
            BridgeOp::subscribe("/visualization_marker_array", MarkerArray::TYPE),
        ),
        ("03_subscribe_pose_stamped.json", sub_pose),
        (
            "04_advertise_pose_stamped.json",
            BridgeOp::advertise("/move_base_simple/goal", PoseStamped::TYPE),
        ),
        ("05_advertise_string.json", adv_cmd),
        ("06_publish_tf.json", BridgeOp::publish("/tf", tf.to_json().unwrap())),
        (
            "07_publish_marker_array.json",
            BridgeOp::publish("/visualization_marker_array", grid.to_json().unwrap()),
        ),
        (
            "08_publish_pose_stamped.json",
            BridgeOp::publish("/move_base_simple/goal", goal.to_json().unwrap()),
        ),
        (
            "09_publish_string.json",
            BridgeOp::publish("/handover/command", CommandString::new("start").to_json().unwrap()),
        ),
        (
            "10_status_error.json",
            BridgeOp::status(StatusLevel::Error, "unsupported op: call_service"),
        ),
        (
            "11_status_warning.json",
            BridgeOp::status(StatusLevel::Warning, "dropping undecodable messages on /viz"),
        ),
        ("12_status_info.json", info),
    ]
}
