use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use holoviz_core::engine::{Engine, EngineConfig};
use holoviz_core::geom::UnitQuat;
use holoviz_core::msgs::{
    CommandString, Marker, MarkerAction, MarkerArray, MarkerType, MessageKind, PoseStamped, Rgba, RosMessage,
    StatusLevel, TfMessage,
};
use holoviz_core::plugins::{
    InputEvent, MenuVerb, NodeSink, Plugin, PluginDescriptor, PluginError, PluginType, RegistryError, RenderContext,
    SettingValue,
};
use holoviz_core::scene::{Primitive, SceneNode, Snapshot};
use holoviz_core::{FrameId, Stamp, StampedTransform, Transform, Vec3};
use proptest::prelude::*;
use serde_json::json;

fn f(s: &str) -> FrameId {
    FrameId::new(s).unwrap()
}

fn secs(t: f64) -> Stamp {
    Stamp::from_secs_f64(t)
}

fn three_frame_tf() -> serde_json::Value {
    let edge = |p: &str, c: &str, x: f64| StampedTransform {
        parent: f(p),
        child: f(c),
        stamp: Stamp::new(1, 0),
        transform: Transform::from_translation(Vec3::new(x, 0.0, 0.0)),
    };
    TfMessage {
        transforms: vec![edge("map", "odom", 1.0), edge("odom", "base_link", 0.5)],
    }
    .to_json()
    .unwrap()
}

struct Harness {
    engine: Engine,
    view: Snapshot,
    t: f64,
}

impl Harness {
    fn new(plugins: Vec<PluginDescriptor>) -> Self {
        let mut engine = Engine::new(EngineConfig::default());
        for p in plugins {
            engine.register(p).unwrap();
        }
        Self {
            engine,
            view: Snapshot::new(),
            t: 1.0,
        }
    }

    fn post(&self, topic: &str, msg: serde_json::Value) {
        self.engine.inbox().post_message(topic, msg);
    }

    fn input(&self, ev: InputEvent) {
        self.engine.inbox().post_input(ev);
    }

    fn tick(&mut self) -> holoviz_core::engine::TickOutput {
        self.t += 0.05;
        let out = self.engine.tick(secs(self.t));
        self.view.apply_diff(&out.diff).unwrap();
        out
    }

    fn ids_with_prefix(&self, prefix: &str) -> BTreeSet<String> {
        self.view
            .nodes
            .keys()
            .filter(|k| k.starts_with(prefix))
            .cloned()
            .collect()
    }

    fn menu(&self, plugin: &str, action: MenuVerb, value: serde_json::Value) {
        self.input(InputEvent::MenuAction {
            plugin: plugin.into(),
            action,
            value,
        });
    }
}

fn tf_display() -> PluginDescriptor {
    PluginDescriptor::new("tf", PluginType::TfDisplay, "")
}

#[test]
fn three_frame_tree_renders_fourteen_nodes() {
    let mut h = Harness::new(vec![tf_display()]);
    h.post("/tf", three_frame_tf());
    h.tick();
    let ids = h.ids_with_prefix("tf/");
    // 3 triads of 3 segments, 3 labels, and arrows for the 2 frames that have a parent
    assert_eq!(ids.len(), 3 * 3 + 3 + 2, "{ids:?}");
    let count = |p: Primitive| h.view.nodes.values().filter(|n| n.primitive == p).count();
    assert_eq!(count(Primitive::Segment), 9);
    assert_eq!(count(Primitive::Label), 3);
    assert_eq!(count(Primitive::ArrowMesh), 2);
    // the odom->map arrow runs from odom back to map
    let arrow = &h.view.nodes["tf/odom/parent"];
    assert!(arrow.pose_world.translation.max_abs_diff(&Vec3::new(1.0, 0.0, 0.0)) < 1e-12);
    assert!(arrow.tip().max_abs_diff(&Vec3::zero()) < 1e-12);
    // axis colors follow x/y/z = red/green/blue
    assert_eq!(h.view.nodes["tf/base_link/x"].color, Rgba::new(1.0, 0.0, 0.0, 1.0));
    assert_eq!(h.view.nodes["tf/base_link/y"].color, Rgba::new(0.0, 1.0, 0.0, 1.0));
    assert_eq!(h.view.nodes["tf/base_link/z"].color, Rgba::new(0.0, 0.0, 1.0, 1.0));
    let z_tip = h.view.nodes["tf/base_link/z"].tip();
    assert!(z_tip.max_abs_diff(&Vec3::new(1.5, 0.0, 0.15)) < 1e-12);
}

#[test]
fn unchanged_data_gives_empty_diff() {
    let mut h = Harness::new(vec![tf_display()]);
    h.post("/tf", three_frame_tf());
    h.tick();
    let out = h.tick();
    assert!(out.diff.is_empty());
    assert_eq!(out.diff.epoch, 2);
}

#[test]
fn hiding_names_keeps_triads() {
    let mut h = Harness::new(vec![tf_display()]);
    h.post("/tf", three_frame_tf());
    h.tick();
    h.menu(
        "tf",
        MenuVerb::SetVisibility,
        json!({"element": "names", "visible": false}),
    );
    h.tick();
    let ids = h.ids_with_prefix("tf/");
    assert_eq!(ids.len(), 9 + 2);
    assert!(ids.iter().all(|i| !i.ends_with("/label")));

    h.menu(
        "tf",
        MenuVerb::SetVisibility,
        json!({"element": "frame:odom", "visible": false}),
    );
    h.tick();
    assert!(h.ids_with_prefix("tf/odom/").is_empty());
    assert_eq!(h.ids_with_prefix("tf/").len(), 6 + 1);

    h.menu(
        "tf",
        MenuVerb::SetVisibility,
        json!({"element": "all", "visible": false}),
    );
    h.tick();
    assert!(h.ids_with_prefix("tf/").is_empty());
    h.menu(
        "tf",
        MenuVerb::SetVisibility,
        json!({"element": "all", "visible": true}),
    );
    h.menu(
        "tf",
        MenuVerb::SetVisibility,
        json!({"element": "names", "visible": true}),
    );
    h.tick();
    assert_eq!(h.ids_with_prefix("tf/").len(), 14);
}

#[test]
fn disable_and_reenable_display() {
    let mut h = Harness::new(vec![tf_display()]);
    h.post("/tf", three_frame_tf());
    h.tick();
    h.menu("tf", MenuVerb::SetEnabled, json!(false));
    let out = h.tick();
    assert_eq!(out.diff.deletes.len(), 14);
    assert!(h.ids_with_prefix("tf/").is_empty());
    assert!(out.registry_changed);
    h.menu("tf", MenuVerb::SetEnabled, json!(true));
    h.tick();
    assert_eq!(h.ids_with_prefix("tf/").len(), 14);
}

#[test]
fn unknown_plugin_in_menu_reports_status() {
    let mut h = Harness::new(vec![tf_display()]);
    h.menu("nope", MenuVerb::SetEnabled, json!(false));
    let out = h.tick();
    assert!(out
        .statuses
        .iter()
        .any(|s| s.level == StatusLevel::Error && s.source == "nope" && s.message.contains("nope")));
}

fn cube(ns: &str, id: i32, x: f64, lifetime: Duration) -> Marker {
    Marker {
        ns: ns.into(),
        id,
        marker_type: MarkerType::Cube,
        action: MarkerAction::Add,
        frame_id: Some(f("map")),
        pose: Transform::from_translation(Vec3::new(x, 0.0, 0.0)),
        scale: Vec3::new(0.1, 0.1, 0.1),
        lifetime,
        ..Marker::default()
    }
}

fn array(markers: Vec<Marker>) -> serde_json::Value {
    MarkerArray { markers }.to_json().unwrap()
}

fn marker_display(id: &str, topic: &str) -> PluginDescriptor {
    PluginDescriptor::new(id, PluginType::MarkerArrayDisplay, topic)
}

#[test]
fn marker_lifetime_expires_within_a_tick() {
    let mut h = Harness::new(vec![marker_display("viz", "/viz")]);
    h.post("/viz", array(vec![cube("a", 1, 0.0, Duration::from_millis(200))]));
    h.tick();
    let added = h.t;
    assert!(h.view.nodes.contains_key("viz/a/1"));
    while h.t < added + 0.2 - 1e-9 {
        h.tick();
        if h.t < added + 0.2 - 1e-9 {
            assert!(h.view.nodes.contains_key("viz/a/1"), "gone early at {}", h.t);
        }
    }
    assert!(!h.view.nodes.contains_key("viz/a/1"));
}

#[test]
fn marker_actions_follow_ros_semantics() {
    let mut h = Harness::new(vec![marker_display("viz", "/viz")]);
    h.post(
        "/viz",
        array(vec![
            cube("a", 1, 0.0, Duration::ZERO),
            cube("a", 2, 1.0, Duration::ZERO),
            cube("b", 1, 2.0, Duration::ZERO),
        ]),
    );
    h.tick();
    assert_eq!(h.ids_with_prefix("viz/").len(), 3);
    // re-ADD replaces in place
    h.post("/viz", array(vec![cube("a", 1, 5.0, Duration::ZERO)]));
    h.tick();
    assert_eq!(h.view.nodes["viz/a/1"].pose_world.translation.x, 5.0);
    let mut del = cube("a", 2, 0.0, Duration::ZERO);
    del.action = MarkerAction::Delete;
    del.frame_id = None;
    h.post("/viz", array(vec![del]));
    h.tick();
    assert_eq!(
        h.ids_with_prefix("viz/"),
        BTreeSet::from(["viz/a/1".to_string(), "viz/b/1".to_string()])
    );
    let all = Marker {
        action: MarkerAction::DeleteAll,
        ..Marker::default()
    };
    h.post("/viz", array(vec![all, cube("c", 0, 0.0, Duration::ZERO)]));
    h.tick();
    assert_eq!(h.ids_with_prefix("viz/"), BTreeSet::from(["viz/c/0".to_string()]));
}

#[test]
fn line_list_and_text_markers() {
    let mut h = Harness::new(vec![marker_display("viz", "/viz")]);
    let lines = Marker {
        ns: "grid".into(),
        id: 0,
        marker_type: MarkerType::LineList,
        frame_id: Some(f("map")),
        scale: Vec3::new(0.01, 0.0, 0.0),
        points: vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(0.0, 2.0, 0.0),
        ],
        ..Marker::default()
    };
    let label = Marker {
        ns: "txt".into(),
        id: 0,
        marker_type: MarkerType::Text,
        frame_id: Some(f("map")),
        scale: Vec3::new(0.0, 0.0, 0.1),
        text: "hello".into(),
        ..Marker::default()
    };
    h.post("/viz", array(vec![lines, label]));
    h.tick();
    let seg = &h.view.nodes["viz/grid/0/1"];
    assert_eq!(seg.primitive, Primitive::Segment);
    assert!(seg.tip().max_abs_diff(&Vec3::new(0.0, 2.0, 0.0)) < 1e-12);
    assert_eq!(h.ids_with_prefix("viz/grid/").len(), 2);
    assert_eq!(h.view.nodes["viz/txt/0"].text, "hello");
}

#[test]
fn unsupported_marker_type_warns_once() {
    let mut h = Harness::new(vec![marker_display("viz", "/viz")]);
    let mesh = json!({"markers": [{
        "header": {"seq": 0, "stamp": {"secs": 1, "nsecs": 0}, "frame_id": "map"},
        "ns": "m", "id": 0, "type": 10, "action": 0,
        "pose": {"position": {"x": 0.0, "y": 0.0, "z": 0.0}, "orientation": {"x": 0.0, "y": 0.0, "z": 0.0, "w": 1.0}},
        "scale": {"x": 1.0, "y": 1.0, "z": 1.0}, "color": {"r": 1.0, "g": 1.0, "b": 1.0, "a": 1.0},
        "lifetime": {"secs": 0, "nsecs": 0}, "mesh_resource": "package://robot/mesh.dae"
    }]});
    h.post("/viz", mesh.clone());
    let first = h.tick();
    h.post("/viz", mesh);
    let second = h.tick();
    assert_eq!(
        first
            .statuses
            .iter()
            .filter(|s| s.level == StatusLevel::Warning)
            .count(),
        1
    );
    assert!(second.statuses.is_empty());
    assert!(h.ids_with_prefix("viz/").is_empty());
}

#[test]
fn undecodable_messages_are_counted() {
    let mut h = Harness::new(vec![marker_display("viz", "/viz")]);
    h.post("/viz", json!({"markers": "nope"}));
    h.post("/viz", json!({"markers": 3}));
    let out = h.tick();
    assert_eq!(out.statuses.len(), 1);
    assert_eq!(h.engine.registry().plugins()[0].dropped, 2);
}

#[test]
fn two_marker_displays_are_independent() {
    let mut h = Harness::new(vec![marker_display("a", "/vizA"), marker_display("b", "/vizB")]);
    h.post("/vizA", array(vec![cube("n", 1, 0.0, Duration::ZERO)]));
    h.post(
        "/vizB",
        array(vec![
            cube("n", 1, 1.0, Duration::ZERO),
            cube("n", 2, 2.0, Duration::ZERO),
        ]),
    );
    h.tick();
    assert_eq!(h.ids_with_prefix("a/").len(), 1);
    assert_eq!(h.ids_with_prefix("b/").len(), 2);
    let subs = h.engine.subscriptions();
    assert!(subs.contains(&("/vizA".into(), MessageKind::MarkerArray)));
    assert!(subs.contains(&("/vizB".into(), MessageKind::MarkerArray)));
    assert!(subs.contains(&("/tf".into(), MessageKind::Tf)));
}

#[test]
fn set_topic_switches_source() {
    let mut h = Harness::new(vec![marker_display("viz", "/vizA")]);
    h.post("/vizA", array(vec![cube("a", 1, 0.0, Duration::ZERO)]));
    h.tick();
    assert_eq!(h.ids_with_prefix("viz/").len(), 1);

    h.menu("viz", MenuVerb::SetTopic, json!("/vizB"));
    h.post("/vizA", array(vec![cube("a", 2, 0.0, Duration::ZERO)]));
    h.post("/vizB", array(vec![cube("b", 1, 0.0, Duration::ZERO)]));
    h.tick();
    assert_eq!(h.ids_with_prefix("viz/"), BTreeSet::from(["viz/b/1".to_string()]));
    assert!(h
        .engine
        .subscriptions()
        .contains(&("/vizB".into(), MessageKind::MarkerArray)));
    assert!(!h.engine.subscriptions().iter().any(|(t, _)| t == "/vizA"));

    let rev = h.engine.registry().revision();
    h.engine.registry_mut().set_topic("viz", "/vizB").unwrap();
    assert_eq!(h.engine.registry().revision(), rev);
    assert!(matches!(
        h.engine.registry_mut().set_topic("viz", ""),
        Err(RegistryError::EmptyTopic(_))
    ));
    assert_eq!(h.engine.registry().descriptor("viz").unwrap().topic, "/vizB");
    assert!(matches!(
        h.engine.registry_mut().set_topic("ghost", "/x"),
        Err(RegistryError::UnknownId(_))
    ));
}

#[test]
fn registration_errors() {
    let mut h = Harness::new(vec![tf_display()]);
    assert!(matches!(
        h.engine.register(tf_display()),
        Err(RegistryError::DuplicateId(_))
    ));
    assert!(matches!(
        "LaserScanDisplay".parse::<PluginType>(),
        Err(RegistryError::UnknownType(_))
    ));
    let bad = tf_display();
    let bad = PluginDescriptor {
        id: "tf2".into(),
        ..bad
    }
    .with_setting("colour", SettingValue::Bool(true));
    assert!(matches!(
        h.engine.register(bad),
        Err(RegistryError::InvalidSettings { .. })
    ));
    assert!(matches!(
        h.engine.register(marker_display("m", "")),
        Err(RegistryError::EmptyTopic(_))
    ));
    let pose = PluginDescriptor::new("p", PluginType::StampedPoseDisplay, "/pose")
        .with_setting("mesh", SettingValue::Text("teapot".into()));
    assert!(matches!(
        h.engine.register(pose),
        Err(RegistryError::InvalidSettings { .. })
    ));
    let from_json: Result<PluginDescriptor, _> =
        serde_json::from_value(json!({"id": "x", "kind": "display", "plugin_type": "Nope"}));
    assert!(from_json.is_err());
}

fn arrow_tool() -> PluginDescriptor {
    PluginDescriptor::new("goal", PluginType::Arrow2dTool, "/move_base_simple/goal")
}

fn down_at(x: f64, y: f64) -> (Vec3, Vec3) {
    (Vec3::new(x, y, 1.5), Vec3::new(0.0, 0.0, -1.0))
}

#[test]
fn arrow_tool_places_goal() {
    let mut h = Harness::new(vec![arrow_tool()]);
    let (o, d) = down_at(1.0, 2.0);
    h.input(InputEvent::Tap {
        origin: o,
        direction: d,
    });
    h.tick();
    assert!(h.view.nodes.contains_key("goal/tail"));
    let (o2, d2) = down_at(2.0, 2.0);
    h.input(InputEvent::RayMove {
        origin: o2,
        direction: d2,
    });
    h.tick();
    let preview = &h.view.nodes["goal/preview"];
    assert!(preview.tip().max_abs_diff(&Vec3::new(2.0, 2.0, 0.0)) < 1e-12);
    h.input(InputEvent::Tap {
        origin: o2,
        direction: d2,
    });
    let out = h.tick();
    assert_eq!(out.outgoing.len(), 1);
    assert_eq!(out.outgoing[0].topic, "/move_base_simple/goal");
    let goal = PoseStamped::from_json(&out.outgoing[0].msg).unwrap();
    assert_eq!(goal.frame_id, f("map"));
    assert!(goal.pose.translation.max_abs_diff(&Vec3::new(1.0, 2.0, 0.0)) < 1e-12);
    assert!(goal.pose.rotation.same_rotation(&UnitQuat::identity(), 1e-12));
    assert!(h.ids_with_prefix("goal/").is_empty());
    assert!(h
        .engine
        .advertisements()
        .contains(&("/move_base_simple/goal".into(), MessageKind::PoseStamped)));
}

#[test]
fn arrow_tool_ignores_sky_and_degenerate_taps() {
    let mut h = Harness::new(vec![arrow_tool()]);
    h.input(InputEvent::Tap {
        origin: Vec3::new(0.0, 0.0, 1.0),
        direction: Vec3::new(0.0, 0.0, 1.0),
    });
    h.tick();
    assert!(h.ids_with_prefix("goal/").is_empty());
    let (o, d) = down_at(1.0, 1.0);
    h.input(InputEvent::Tap {
        origin: o,
        direction: d,
    });
    h.input(InputEvent::Tap {
        origin: o,
        direction: d,
    });
    let out = h.tick();
    assert!(out.outgoing.is_empty());
    assert!(h.view.nodes.contains_key("goal/tail"));
    // escape returns the tool to idle
    h.menu("goal", MenuVerb::Reset, serde_json::Value::Null);
    h.tick();
    assert!(h.ids_with_prefix("goal/").is_empty());
}

#[test]
fn arrow_tool_respects_frame_override() {
    let desc = arrow_tool().with_setting("frame_id", SettingValue::Text("odom".into()));
    let mut h = Harness::new(vec![desc]);
    for (x, y) in [(0.0, 0.0), (0.0, 1.0)] {
        let (o, d) = down_at(x, y);
        h.input(InputEvent::Tap {
            origin: o,
            direction: d,
        });
    }
    let out = h.tick();
    let goal = PoseStamped::from_json(&out.outgoing[0].msg).unwrap();
    assert_eq!(goal.frame_id, f("odom"));
    assert!((goal.pose.rotation.yaw() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
}

fn command_tool() -> PluginDescriptor {
    let mut map = BTreeMap::new();
    map.insert("start".to_string(), "start".to_string());
    map.insert("Stop Now".to_string(), "halt".to_string());
    PluginDescriptor::new("cmd", PluginType::CommandTool, "/handover/command")
        .with_setting("keywords", SettingValue::Map(map))
}

#[test]
fn command_tool_publishes_mapped_keywords() {
    let mut h = Harness::new(vec![command_tool()]);
    h.input(InputEvent::Command { text: "start".into() });
    h.input(InputEvent::Command { text: "unknown".into() });
    h.input(InputEvent::Command {
        text: "  stop now ".into(),
    });
    let out = h.tick();
    let sent: Vec<String> = out
        .outgoing
        .iter()
        .map(|o| CommandString::from_json(&o.msg).unwrap().data)
        .collect();
    assert_eq!(sent, ["start", "halt"]);
    assert!(out.statuses.is_empty());
}

#[test]
fn disabled_tool_does_nothing() {
    let mut h = Harness::new(vec![command_tool().disabled()]);
    h.input(InputEvent::Command { text: "start".into() });
    assert!(h.tick().outgoing.is_empty());
}

#[test]
fn pose_display_arrow_and_mesh() {
    let arrow = PluginDescriptor::new("grasp", PluginType::StampedPoseDisplay, "/grasp_pose")
        .with_setting("opacity", SettingValue::Number(0.3));
    let mesh = PluginDescriptor::new("hand", PluginType::StampedPoseDisplay, "/grasp_pose")
        .with_setting("mesh", SettingValue::Text("panda_hand".into()));
    let mut h = Harness::new(vec![arrow, mesh]);
    h.post("/tf", three_frame_tf());
    let pose = PoseStamped {
        frame_id: f("base_link"),
        stamp: Stamp::new(1, 0),
        pose: Transform::from_translation(Vec3::new(0.0, 1.0, 0.0)),
    };
    h.post("/grasp_pose", pose.to_json().unwrap());
    h.tick();
    let a = &h.view.nodes["grasp/pose"];
    assert_eq!(a.primitive, Primitive::ArrowMesh);
    assert!((a.color.a - 0.3).abs() < 1e-6);
    assert!(a.pose_world.translation.max_abs_diff(&Vec3::new(1.5, 1.0, 0.0)) < 1e-12);
    assert!((a.scale.x - 0.6).abs() < 1e-12);
    let m = &h.view.nodes["hand/pose"];
    assert_eq!(m.primitive, Primitive::MeshRef);
    assert_eq!(m.mesh, "panda_hand");
}

struct Exploding {
    after: u32,
    panic: bool,
}

impl Plugin for Exploding {
    fn render(&mut self, _ctx: &RenderContext<'_>, out: &mut NodeSink) -> Result<(), PluginError> {
        if self.after == 0 {
            if self.panic {
                panic!("boom");
            }
            return Err(PluginError::Render("bad state".into()));
        }
        self.after -= 1;
        out.push(
            "n",
            SceneNode::new(
                "",
                Primitive::Sphere,
                Transform::identity(),
                Vec3::new(1.0, 1.0, 1.0),
                Rgba::default(),
            ),
        );
        Ok(())
    }
}

#[test]
fn failing_plugins_are_isolated() {
    let mut h = Harness::new(vec![tf_display()]);
    h.post("/tf", three_frame_tf());
    let reg = h.engine.registry_mut();
    reg.register_custom(
        PluginDescriptor::new("bad", PluginType::MarkerArrayDisplay, "/x"),
        Box::new(Exploding { after: 1, panic: true }),
    )
    .unwrap();
    reg.register_custom(
        PluginDescriptor::new("worse", PluginType::MarkerArrayDisplay, "/y"),
        Box::new(Exploding { after: 0, panic: false }),
    )
    .unwrap();
    h.tick();
    assert!(h.view.nodes.contains_key("bad/n"));
    let prev = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    let out = h.tick();
    std::panic::set_hook(prev);
    assert!(!h.view.nodes.contains_key("bad/n"));
    assert_eq!(h.ids_with_prefix("tf/").len(), 14);
    let errors: Vec<_> = out.statuses.iter().filter(|s| s.level == StatusLevel::Error).collect();
    assert_eq!(errors.len(), 1, "{errors:?}");
    assert!(errors[0].message.contains("boom"));
    let plugins = h.engine.registry().plugins();
    assert!(
        !plugins
            .iter()
            .find(|p| p.descriptor.id == "bad")
            .unwrap()
            .descriptor
            .enabled
    );
    assert!(
        !plugins
            .iter()
            .find(|p| p.descriptor.id == "worse")
            .unwrap()
            .descriptor
            .enabled
    );
    // later ticks keep running
    h.tick();
    assert_eq!(h.ids_with_prefix("tf/").len(), 14);
}

// ---- marker display vs. a replay of the action log ----

#[derive(Debug, Clone)]
enum Action {
    Add { ns: u8, id: u8, lifetime_ms: u64 },
    Delete { ns: u8, id: u8 },
    DeleteAll,
}

fn arb_log() -> impl Strategy<Value = Vec<Vec<Action>>> {
    let action = prop_oneof![
        6 => (0u8..2, 0u8..3, prop::sample::select(vec![0u64, 60, 120, 300]))
            .prop_map(|(ns, id, lifetime_ms)| Action::Add { ns, id, lifetime_ms }),
        3 => (0u8..2, 0u8..3).prop_map(|(ns, id)| Action::Delete { ns, id }),
        1 => Just(Action::DeleteAll),
    ];
    prop::collection::vec(prop::collection::vec(action, 0..4), 1..40)
}

/// Live keys at `now`: for each key, the latest event touching it decides, and an ADD
/// survives only until its lifetime has passed.
fn replay(log: &[(f64, Action)], now: f64) -> BTreeSet<String> {
    let mut keys = BTreeSet::new();
    for ns in 0..2u8 {
        for id in 0..3u8 {
            let last = log.iter().rev().find(|(_, a)| match a {
                Action::Add { ns: n, id: i, .. } | Action::Delete { ns: n, id: i } => *n == ns && *i == id,
                Action::DeleteAll => true,
            });
            if let Some((t, Action::Add { lifetime_ms, .. })) = last {
                if *lifetime_ms == 0 || now < t + *lifetime_ms as f64 / 1000.0 - 1e-9 {
                    keys.insert(format!("viz/n{ns}/{id}"));
                }
            }
        }
    }
    keys
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn marker_display_matches_replay(batches in arb_log()) {
        let mut h = Harness::new(vec![marker_display("viz", "/viz")]);
        let mut log: Vec<(f64, Action)> = Vec::new();
        for batch in batches {
            let markers: Vec<Marker> = batch
                .iter()
                .map(|a| match a {
                    Action::Add { ns, id, lifetime_ms } => {
                        cube(&format!("n{ns}"), *id as i32, 0.0, Duration::from_millis(*lifetime_ms))
                    }
                    Action::Delete { ns, id } => Marker {
                        ns: format!("n{ns}"),
                        id: *id as i32,
                        action: MarkerAction::Delete,
                        ..Marker::default()
                    },
                    Action::DeleteAll => Marker { action: MarkerAction::DeleteAll, ..Marker::default() },
                })
                .collect();
            h.post("/viz", array(markers));
            h.tick();
            let now = h.t;
            log.extend(batch.into_iter().map(|a| (now, a)));
            prop_assert_eq!(h.ids_with_prefix("viz/"), replay(&log, now));
        }
    }

    #[test]
    fn published_goals_are_flat(
        a in prop::array::uniform2(-5.0f64..5.0),
        b in prop::array::uniform2(-5.0f64..5.0),
        height in 0.5f64..3.0,
    ) {
        let mut h = Harness::new(vec![arrow_tool()]);
        for p in [a, b] {
            h.input(InputEvent::Tap {
                origin: Vec3::new(0.0, 0.0, height),
                direction: Vec3::new(p[0], p[1], -height),
            });
        }
        let out = h.tick();
        let moved = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        if moved > 1e-6 {
            prop_assert_eq!(out.outgoing.len(), 1);
            let goal = PoseStamped::from_json(&out.outgoing[0].msg).unwrap();
            prop_assert_eq!(goal.pose.translation.z, 0.0);
            prop_assert_eq!(goal.pose.rotation.x(), 0.0);
            prop_assert_eq!(goal.pose.rotation.y(), 0.0);
        }
    }
}
