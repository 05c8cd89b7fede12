//! Scripted robot scenarios, stepped by the server loop.
//!
//! A [`Scenario`] is a pure state machine: feed it client publishes with
//! [`on_publish`](Scenario::on_publish), advance it with [`step`](Scenario::step), and send
//! out whatever it returns. Nothing in here touches the network or the wall clock.

use std::fmt;
use std::str::FromStr;

use holoviz_core::geom::UnitQuat;
use holoviz_core::msgs::{
    CommandString, EncodeError, Marker, MarkerAction, MarkerArray, MarkerType, MessageKind, PoseStamped, Rgba,
    RosMessage, TfMessage,
};
use holoviz_core::{FrameId, Stamp, StampedTransform, Transform, Vec3};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::robot::{nav_step, Pose2, RobotParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    /// Drive to goals sent by the user.
    Nav,
    /// Patrol a waypoint loop while broadcasting motion intent.
    OccludedIntent,
    /// Show an object wireframe and grasp pose once the user says "start".
    Handover,
}

impl FromStr for ScenarioName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nav" => Ok(ScenarioName::Nav),
            "occluded_intent" => Ok(ScenarioName::OccludedIntent),
            "handover" => Ok(ScenarioName::Handover),
            other => Err(format!(
                "unknown scenario {other:?} (expected nav, occluded_intent or handover)"
            )),
        }
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioName::Nav => "nav",
            ScenarioName::OccludedIntent => "occluded_intent",
            ScenarioName::Handover => "handover",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topics {
    pub tf: String,
    pub markers: String,
    pub goal: String,
    pub robot_pose: String,
    pub command: String,
    pub grasp: String,
}

impl Default for Topics {
    fn default() -> Self {
        Self {
            tf: "/tf".into(),
            markers: "/visualization_marker_array".into(),
            goal: "/move_base_simple/goal".into(),
            robot_pose: "/robot_pose".into(),
            command: "/handover/command".into(),
            grasp: "/grasp_pose".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    pub name: ScenarioName,
    pub robot: RobotParams,
    pub tf_rate_hz: f64,
    pub marker_rate_hz: f64,
    /// Wireframe and grasp update rate during a handover.
    pub handover_rate_hz: f64,
    /// How long one handover runs before the wireframe is cleared.
    pub handover_secs: f64,
    pub topics: Topics,
    /// Patrol loop for `occluded_intent`, in map coordinates.
    pub waypoints: Vec<[f64; 2]>,
    /// Half-extent of the floor grid in metres.
    pub grid_half_extent: u32,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid scenario script: {0}")]
pub struct ScriptError(pub String);

impl ScenarioScript {
    pub fn new(name: ScenarioName) -> Self {
        Self {
            name,
            robot: RobotParams::default(),
            tf_rate_hz: 30.0,
            marker_rate_hz: 10.0,
            handover_rate_hz: 10.0,
            handover_secs: 20.0,
            topics: Topics::default(),
            waypoints: vec![[3.0, 0.0], [3.0, 2.0], [-1.0, 2.0], [-1.0, -1.0]],
            grid_half_extent: 5,
        }
    }

    pub fn validate(&self) -> Result<(), ScriptError> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        for (name, v) in [
            ("robot.speed", self.robot.speed),
            ("robot.max_yaw_rate", self.robot.max_yaw_rate),
            ("tf_rate_hz", self.tf_rate_hz),
            ("marker_rate_hz", self.marker_rate_hz),
            ("handover_rate_hz", self.handover_rate_hz),
            ("handover_secs", self.handover_secs),
        ] {
            if !positive(v) {
                return Err(ScriptError(format!("{name} must be positive, got {v}")));
            }
        }
        if self.name == ScenarioName::OccludedIntent && self.waypoints.len() < 2 {
            return Err(ScriptError("occluded_intent needs at least two waypoints".into()));
        }
        if self.waypoints.iter().flatten().any(|c| !c.is_finite()) {
            return Err(ScriptError("waypoints must be finite".into()));
        }
        Ok(())
    }

    /// The wireframe's edges as point pairs in the object frame.
    pub fn wireframe_edges(&self) -> Vec<[Vec3; 2]> {
        box_edges(Vec3::new(0.12, 0.08, 0.20))
    }
}

/// The 12 edges of a box with the given full size, centred on the origin.
pub fn box_edges(size: Vec3) -> Vec<[Vec3; 2]> {
    let h = size * 0.5;
    let corner = |i: usize| {
        Vec3::new(
            if i & 1 == 0 { -h.x } else { h.x },
            if i & 2 == 0 { -h.y } else { h.y },
            if i & 4 == 0 { -h.z } else { h.z },
        )
    };
    let mut edges = Vec::with_capacity(12);
    for a in 0..8 {
        for bit in [1, 2, 4] {
            if a & bit == 0 {
                edges.push([corner(a), corner(a | bit)]);
            }
        }
    }
    edges
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandoverPhase {
    Idle,
    /// "start" received; the first update goes out on the next step.
    Starting,
    Active,
    Done,
}

/// One message the scenario wants published.
#[derive(Debug, Clone, PartialEq)]
pub struct Emit {
    pub topic: String,
    pub kind: MessageKind,
    pub msg: Value,
}

/// What a test or the server can observe about the scenario, copied out each step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioStatus {
    pub name: ScenarioName,
    /// Simulated seconds since the scenario started.
    pub sim_time: f64,
    pub robot: Pose2,
    pub goal: Option<Pose2>,
    /// Every goal the robot has adopted, with the simulated time it did so.
    pub goal_history: Vec<(f64, Pose2)>,
    pub goals_reached: u32,
    pub handover: HandoverPhase,
    pub handovers_started: u32,
    pub starts_ignored: u32,
    /// Number of wireframe LINE markers in each wireframe update.
    pub wireframe_lines: usize,
    pub rejected_publishes: u32,
}

const FIXED: &str = "map";
const ROBOT: &str = "base_link";
const ARM: &str = "panda_link0";
const OBJECT: &str = "handover_object";
/// Distance at which a goal counts as reached.
pub const GOAL_TOLERANCE: f64 = 1e-3;

struct Rate {
    period: f64,
    next: f64,
}

impl Rate {
    fn new(hz: f64) -> Self {
        Self {
            period: 1.0 / hz,
            next: 0.0,
        }
    }

    /// True when a tick is due at `t`. A late caller gets one tick, not a burst.
    fn due(&mut self, t: f64) -> bool {
        if t + 1e-12 < self.next {
            return false;
        }
        self.next += self.period;
        if self.next <= t {
            self.next = t + self.period;
        }
        true
    }
}

pub struct Scenario {
    script: ScenarioScript,
    base: Stamp,
    t: f64,
    robot: Pose2,
    goal: Option<Pose2>,
    waypoint: usize,
    intent_shown: bool,
    intent_dirty: bool,
    tf_rate: Rate,
    marker_rate: Rate,
    handover_rate: Rate,
    handover_started_at: f64,
    status: ScenarioStatus,
}

fn f(name: &str) -> FrameId {
    FrameId::new(name).expect("static frame names are valid")
}

fn to_tf(p: &Pose2) -> Transform {
    Transform::new(Vec3::new(p.x, p.y, 0.0), UnitQuat::from_yaw(p.yaw))
}

impl Scenario {
    /// `base` is the stamp of simulated time zero.
    pub fn new(script: ScenarioScript, base: Stamp) -> Result<Self, ScriptError> {
        script.validate()?;
        let status = ScenarioStatus {
            name: script.name,
            sim_time: 0.0,
            robot: Pose2::default(),
            goal: None,
            goal_history: Vec::new(),
            goals_reached: 0,
            handover: HandoverPhase::Idle,
            handovers_started: 0,
            starts_ignored: 0,
            wireframe_lines: script.wireframe_edges().len(),
            rejected_publishes: 0,
        };
        let mut s = Self {
            tf_rate: Rate::new(script.tf_rate_hz),
            marker_rate: Rate::new(script.marker_rate_hz),
            handover_rate: Rate::new(script.handover_rate_hz),
            script,
            base,
            t: 0.0,
            robot: Pose2::default(),
            goal: None,
            waypoint: 0,
            intent_shown: false,
            intent_dirty: false,
            handover_started_at: 0.0,
            status,
        };
        if s.script.name == ScenarioName::OccludedIntent {
            let [x, y] = s.script.waypoints[0];
            s.set_goal(Pose2::new(x, y, 0.0));
        }
        Ok(s)
    }

    pub fn script(&self) -> &ScenarioScript {
        &self.script
    }

    pub fn status(&self) -> &ScenarioStatus {
        &self.status
    }

    pub fn robot(&self) -> Pose2 {
        self.robot
    }

    /// Topics this scenario listens to, with their types.
    pub fn inputs(&self) -> Vec<(String, MessageKind)> {
        match self.script.name {
            ScenarioName::Nav | ScenarioName::OccludedIntent => {
                vec![(self.script.topics.goal.clone(), MessageKind::PoseStamped)]
            }
            ScenarioName::Handover => vec![(self.script.topics.command.clone(), MessageKind::String)],
        }
    }

    fn stamp(&self) -> Stamp {
        Stamp::from_nanos(self.base.as_nanos() + (self.t * 1e9).round() as u64)
    }

    fn set_goal(&mut self, goal: Pose2) {
        self.goal = Some(goal);
        self.intent_dirty = true;
        self.status.goal = Some(goal);
        self.status.goal_history.push((self.t, goal));
    }

    /// Handles a message a client published. Messages on other topics are ignored.
    pub fn on_publish(&mut self, topic: &str, msg: &Value) -> Result<(), String> {
        let t = &self.script.topics;
        let result = if topic == t.goal && self.script.name != ScenarioName::Handover {
            PoseStamped::from_json(msg).map_err(|e| e.to_string()).and_then(|goal| {
                if goal.frame_id.as_str() != FIXED {
                    return Err(format!("goal must be in {FIXED}, got {}", goal.frame_id));
                }
                let p = goal.pose.translation;
                self.set_goal(Pose2::new(p.x, p.y, goal.pose.rotation.yaw()));
                Ok(())
            })
        } else if topic == t.command && self.script.name == ScenarioName::Handover {
            CommandString::from_json(msg).map_err(|e| e.to_string()).map(|cmd| {
                if cmd.data == "start" {
                    self.start_handover();
                }
            })
        } else {
            Ok(())
        };
        if result.is_err() {
            self.status.rejected_publishes += 1;
        }
        result
    }

    fn start_handover(&mut self) {
        match self.status.handover {
            HandoverPhase::Idle | HandoverPhase::Done => {
                self.status.handover = HandoverPhase::Starting;
                self.status.handovers_started += 1;
            }
            HandoverPhase::Starting | HandoverPhase::Active => self.status.starts_ignored += 1,
        }
    }

    /// Advances to simulated time `t` (seconds since start) and returns what to publish.
    pub fn step(&mut self, t: f64) -> Result<Vec<Emit>, EncodeError> {
        let dt = (t - self.t).max(0.0);
        self.t = self.t.max(t);
        self.status.sim_time = self.t;
        let mut out = Vec::new();
        match self.script.name {
            ScenarioName::Nav | ScenarioName::OccludedIntent => self.step_nav(dt, &mut out)?,
            ScenarioName::Handover => self.step_handover(&mut out)?,
        }
        Ok(out)
    }

    fn emit<M: RosMessage>(
        &self,
        out: &mut Vec<Emit>,
        topic: &str,
        kind: MessageKind,
        msg: &M,
    ) -> Result<(), EncodeError> {
        out.push(Emit {
            topic: topic.to_string(),
            kind,
            msg: msg.to_json()?,
        });
        Ok(())
    }

    fn step_nav(&mut self, dt: f64, out: &mut Vec<Emit>) -> Result<(), EncodeError> {
        if let Some(goal) = self.goal {
            self.robot = nav_step(self.robot, &goal, dt, &self.script.robot);
            self.status.robot = self.robot;
            let yaw_done = crate::robot::wrap_angle(goal.yaw - self.robot.yaw).abs() < 1e-6;
            if self.robot.distance_to(&goal) < GOAL_TOLERANCE
                && (yaw_done || self.script.name == ScenarioName::OccludedIntent)
            {
                self.status.goals_reached += 1;
                if self.script.name == ScenarioName::OccludedIntent {
                    self.waypoint = (self.waypoint + 1) % self.script.waypoints.len();
                    let [x, y] = self.script.waypoints[self.waypoint];
                    self.set_goal(Pose2::new(x, y, 0.0));
                } else {
                    self.goal = None;
                    self.status.goal = None;
                    self.intent_dirty = true;
                }
            }
        }
        let stamp = self.stamp();
        if self.tf_rate.due(self.t) {
            let tf = TfMessage {
                transforms: vec![StampedTransform {
                    parent: f(FIXED),
                    child: f(ROBOT),
                    stamp,
                    transform: to_tf(&self.robot),
                }],
            };
            self.emit(out, &self.script.topics.tf, MessageKind::Tf, &tf)?;
            let pose = PoseStamped {
                frame_id: f(FIXED),
                stamp,
                pose: to_tf(&self.robot),
            };
            self.emit(out, &self.script.topics.robot_pose, MessageKind::PoseStamped, &pose)?;
        }
        if self.marker_rate.due(self.t) || self.intent_dirty {
            self.intent_dirty = false;
            let mut markers = self.grid(stamp);
            match self.goal {
                Some(goal) => {
                    markers.push(intent_arrow(stamp, &self.robot, &goal));
                    self.intent_shown = true;
                }
                None if self.intent_shown => {
                    markers.push(Marker {
                        ns: "intent".into(),
                        id: 0,
                        action: MarkerAction::Delete,
                        ..Marker::default()
                    });
                    self.intent_shown = false;
                }
                None => {}
            }
            self.emit(
                out,
                &self.script.topics.markers,
                MessageKind::MarkerArray,
                &MarkerArray { markers },
            )?;
        }
        Ok(())
    }

    fn grid(&self, stamp: Stamp) -> Vec<Marker> {
        let n = self.script.grid_half_extent as i32;
        let e = n as f64;
        let mut points = Vec::new();
        for i in -n..=n {
            let c = i as f64;
            points.extend([Vec3::new(c, -e, 0.0), Vec3::new(c, e, 0.0)]);
            points.extend([Vec3::new(-e, c, 0.0), Vec3::new(e, c, 0.0)]);
        }
        vec![Marker {
            ns: "grid".into(),
            id: 0,
            marker_type: MarkerType::LineList,
            frame_id: Some(f(FIXED)),
            stamp,
            scale: Vec3::new(0.01, 0.0, 0.0),
            color: Rgba::new(0.6, 0.6, 0.6, 0.5),
            points,
            ..Marker::default()
        }]
    }

    /// Where the held object is at the current time: drifting slowly in front of the arm.
    fn object_pose(&self) -> Transform {
        let s = self.t - self.handover_started_at;
        Transform::new(
            Vec3::new(0.6 + 0.05 * (0.5 * s).sin(), 0.1 * (0.3 * s).sin(), 0.4),
            UnitQuat::from_yaw(0.2 * (0.4 * s).sin()),
        )
    }

    fn step_handover(&mut self, out: &mut Vec<Emit>) -> Result<(), EncodeError> {
        let stamp = self.stamp();
        if self.tf_rate.due(self.t) {
            let mut transforms = vec![StampedTransform {
                parent: f(FIXED),
                child: f(ARM),
                stamp,
                transform: Transform::identity(),
            }];
            if self.status.handover == HandoverPhase::Active {
                transforms.push(StampedTransform {
                    parent: f(ARM),
                    child: f(OBJECT),
                    stamp,
                    transform: self.object_pose(),
                });
            }
            self.emit(out, &self.script.topics.tf, MessageKind::Tf, &TfMessage { transforms })?;
        }
        match self.status.handover {
            HandoverPhase::Idle | HandoverPhase::Done => {}
            HandoverPhase::Starting => {
                self.status.handover = HandoverPhase::Active;
                self.handover_started_at = self.t;
                self.handover_rate.next = self.t;
                self.handover_update(stamp, out)?;
            }
            HandoverPhase::Active if self.t - self.handover_started_at >= self.script.handover_secs => {
                self.status.handover = HandoverPhase::Done;
                let clear = MarkerArray {
                    markers: vec![Marker {
                        action: MarkerAction::DeleteAll,
                        ..Marker::default()
                    }],
                };
                self.emit(out, &self.script.topics.markers, MessageKind::MarkerArray, &clear)?;
            }
            HandoverPhase::Active => self.handover_update(stamp, out)?,
        }
        Ok(())
    }

    fn handover_update(&mut self, stamp: Stamp, out: &mut Vec<Emit>) -> Result<(), EncodeError> {
        if !self.handover_rate.due(self.t) {
            return Ok(());
        }
        let object = self.object_pose();
        let markers = self
            .script
            .wireframe_edges()
            .into_iter()
            .enumerate()
            .map(|(i, [a, b])| Marker {
                ns: "wireframe".into(),
                id: i as i32,
                marker_type: MarkerType::LineList,
                frame_id: Some(f(ARM)),
                stamp,
                scale: Vec3::new(0.004, 0.0, 0.0),
                color: Rgba::new(0.1, 0.9, 0.3, 1.0),
                points: vec![object.transform_point(&a), object.transform_point(&b)],
                ..Marker::default()
            })
            .collect();
        self.emit(
            out,
            &self.script.topics.markers,
            MessageKind::MarkerArray,
            &MarkerArray { markers },
        )?;
        // approach from above, gripper pointing down
        let grasp = PoseStamped {
            frame_id: f(ARM),
            stamp,
            pose: object.compose(&Transform::new(
                Vec3::new(0.0, 0.0, 0.15),
                UnitQuat::from_axis_angle(Vec3::new(1.0, 0.0, 0.0), std::f64::consts::PI),
            )),
        };
        self.emit(out, &self.script.topics.grasp, MessageKind::PoseStamped, &grasp)
    }
}

fn intent_arrow(stamp: Stamp, robot: &Pose2, goal: &Pose2) -> Marker {
    Marker {
        ns: "intent".into(),
        id: 0,
        marker_type: MarkerType::Arrow,
        frame_id: Some(f(FIXED)),
        stamp,
        scale: Vec3::new(0.05, 0.1, 0.15),
        color: Rgba::new(0.0, 0.9, 0.9, 1.0),
        points: vec![Vec3::new(robot.x, robot.y, 0.0), Vec3::new(goal.x, goal.y, 0.0)],
        ..Marker::default()
    }
}

/// Sets `header.seq` on every header in a payload, so receivers can check ordering.
pub fn set_seq(msg: &mut Value, seq: u64) {
    if let Some(h) = msg.get_mut("header").and_then(Value::as_object_mut) {
        h.insert("seq".into(), seq.into());
    }
    for key in ["transforms", "markers"] {
        if let Some(items) = msg.get_mut(key).and_then(Value::as_array_mut) {
            for item in items {
                set_seq(item, seq);
            }
        }
    }
}

/// Reads back the sequence number written by [`set_seq`].
pub fn seq_of(msg: &Value) -> Option<u64> {
    msg.pointer("/header/seq")
        .or_else(|| msg.pointer("/transforms/0/header/seq"))
        .or_else(|| msg.pointer("/markers/0/header/seq"))
        .and_then(Value::as_u64)
}
