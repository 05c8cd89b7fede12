use holoviz_core::msgs::{CommandString, MarkerAction, MarkerArray, MarkerType, MessageKind, PoseStamped, RosMessage};
use holoviz_core::{FrameId, Stamp, Transform, UnitQuat, Vec3};
use holoviz_mockros::scenario::{seq_of, set_seq, Emit, HandoverPhase, GOAL_TOLERANCE};
use holoviz_mockros::{nav_step, Pose2, RobotParams, Scenario, ScenarioName, ScenarioScript};
use proptest::prelude::*;
use serde_json::Value;

const DT: f64 = 0.01;

fn params(speed: f64) -> RobotParams {
    RobotParams {
        speed,
        ..RobotParams::default()
    }
}

fn goal_msg(x: f64, y: f64, yaw: f64) -> Value {
    PoseStamped {
        frame_id: FrameId::new("map").unwrap(),
        stamp: Stamp::new(1, 0),
        pose: Transform::new(Vec3::new(x, y, 0.0), UnitQuat::from_yaw(yaw)),
    }
    .to_json()
    .unwrap()
}

fn start_msg() -> Value {
    CommandString::new("start").to_json().unwrap()
}

fn on<'a>(out: &'a [Emit], topic: &str) -> impl Iterator<Item = &'a Emit> + 'a {
    let topic = topic.to_string();
    out.iter().filter(move |e| e.topic == topic)
}

#[test]
fn nav_step_moves_at_speed_toward_goal() {
    let s = nav_step(Pose2::default(), &Pose2::new(1.0, 0.0, 0.0), 0.1, &params(0.5));
    assert!((s.x - 0.05).abs() < 1e-12 && s.y.abs() < 1e-12, "{s:?}");
    assert_eq!(s.yaw, 0.0);
}

#[test]
fn nav_step_at_goal_is_a_fixed_point() {
    let p = Pose2::new(1.5, -2.0, 0.7);
    assert_eq!(nav_step(p, &p, 0.1, &params(0.5)), p);
}

#[test]
fn nav_step_does_not_overshoot() {
    let s = nav_step(Pose2::default(), &Pose2::new(0.01, 0.0, 0.0), 1.0, &params(0.5));
    assert_eq!((s.x, s.y), (0.01, 0.0));
}

#[test]
fn nav_step_turns_toward_heading_at_limited_rate() {
    let s = nav_step(Pose2::default(), &Pose2::new(0.0, 5.0, 0.0), 0.1, &params(0.5));
    // heading is +90 degrees; 1.5 rad/s for 0.1 s
    assert!((s.yaw - 0.15).abs() < 1e-12, "{}", s.yaw);
    assert!((s.y - 0.05).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn nav_converges(
        gx in -5.0..5.0f64, gy in -5.0..5.0f64, gyaw in -3.1..3.1f64,
        sx in -5.0..5.0f64, sy in -5.0..5.0f64, syaw in -3.1..3.1f64,
        speed in 0.1..2.0f64,
    ) {
        let goal = Pose2::new(gx, gy, gyaw);
        let mut s = Pose2::new(sx, sy, syaw);
        let p = params(speed);
        let budget = s.distance_to(&goal) / speed + 2.0;
        let mut prev = s.distance_to(&goal);
        let mut t = 0.0;
        while t < budget && prev >= 0.05 {
            s = nav_step(s, &goal, DT, &p);
            let d = s.distance_to(&goal);
            prop_assert!(d <= prev + 1e-12, "distance grew from {prev} to {d}");
            prev = d;
            t += DT;
        }
        prop_assert!(prev < 0.05, "still {prev} m away after {t} s");
    }
}

fn intent_tips(out: &[Emit]) -> Vec<(MarkerAction, Option<Vec3>)> {
    on(out, "/visualization_marker_array")
        .flat_map(|e| MarkerArray::from_json(&e.msg).unwrap().markers)
        .filter(|m| m.ns == "intent")
        .map(|m| (m.action, m.points.last().copied()))
        .collect()
}

#[test]
fn intent_arrow_tip_is_the_goal_while_en_route() {
    let mut sc = Scenario::new(ScenarioScript::new(ScenarioName::Nav), Stamp::new(100, 0)).unwrap();
    let out = sc.step(0.0).unwrap();
    assert!(intent_tips(&out).is_empty(), "no goal yet, no arrow");
    let grid: Vec<_> = on(&out, "/visualization_marker_array")
        .flat_map(|e| MarkerArray::from_json(&e.msg).unwrap().markers)
        .filter(|m| m.ns == "grid")
        .collect();
    assert_eq!(grid.len(), 1);
    assert_eq!(grid[0].marker_type, MarkerType::LineList);

    sc.on_publish("/move_base_simple/goal", &goal_msg(2.0, 0.0, 0.0))
        .unwrap();
    let mut arrows = 0;
    let mut t = 0.0;
    while sc.status().goal.is_some() {
        t += DT;
        assert!(t < 10.0, "never arrived");
        let out = sc.step(t).unwrap();
        for (action, tip) in intent_tips(&out) {
            if sc.status().goal.is_some() {
                assert_eq!(action, MarkerAction::Add);
                assert_eq!(tip, Some(Vec3::new(2.0, 0.0, 0.0)));
                arrows += 1;
            }
        }
    }
    assert!(arrows >= 30, "only {arrows} arrow updates in {t} s");
    assert!((t - 4.0).abs() < 0.1, "2 m at 0.5 m/s took {t} s");
    let out = sc.step(t + DT).unwrap();
    assert!(out.iter().all(|e| e.topic != "/visualization_marker_array") || intent_tips(&out).is_empty());
    assert_eq!(sc.status().goals_reached, 1);
}

#[test]
fn new_goal_republishes_the_arrow_immediately() {
    let mut sc = Scenario::new(ScenarioScript::new(ScenarioName::Nav), Stamp::new(100, 0)).unwrap();
    sc.step(0.0).unwrap();
    sc.step(0.02).unwrap();
    sc.on_publish("/move_base_simple/goal", &goal_msg(-1.0, 1.0, 0.0))
        .unwrap();
    let tips = intent_tips(&sc.step(0.03).unwrap());
    assert_eq!(tips, vec![(MarkerAction::Add, Some(Vec3::new(-1.0, 1.0, 0.0)))]);
}

#[test]
fn arrival_deletes_the_arrow() {
    let mut sc = Scenario::new(ScenarioScript::new(ScenarioName::Nav), Stamp::new(100, 0)).unwrap();
    sc.on_publish("/move_base_simple/goal", &goal_msg(0.1, 0.0, 0.0))
        .unwrap();
    let mut seen_delete = false;
    for i in 1..200 {
        let out = sc.step(i as f64 * DT).unwrap();
        if intent_tips(&out).iter().any(|(a, _)| *a == MarkerAction::Delete) {
            seen_delete = true;
            break;
        }
    }
    assert!(seen_delete);
    assert!(sc.status().goal.is_none());
    assert!(sc.robot().distance_to(&Pose2::new(0.1, 0.0, 0.0)) < GOAL_TOLERANCE);
}

#[test]
fn goals_outside_the_map_frame_are_rejected() {
    let mut sc = Scenario::new(ScenarioScript::new(ScenarioName::Nav), Stamp::new(100, 0)).unwrap();
    let mut bad = goal_msg(1.0, 0.0, 0.0);
    bad["header"]["frame_id"] = "base_link".into();
    assert!(sc.on_publish("/move_base_simple/goal", &bad).is_err());
    assert!(sc
        .on_publish("/move_base_simple/goal", &serde_json::json!({"x": 1}))
        .is_err());
    assert_eq!(sc.status().rejected_publishes, 2);
    assert!(sc.status().goal.is_none());
}

#[test]
fn occluded_intent_cycles_through_waypoints() {
    let script = ScenarioScript::new(ScenarioName::OccludedIntent);
    let wps = script.waypoints.clone();
    let mut sc = Scenario::new(script, Stamp::new(100, 0)).unwrap();
    let mut t = 0.0;
    while sc.status().goals_reached < 3 {
        t += 0.02;
        assert!(t < 60.0);
        let out = sc.step(t).unwrap();
        let goal = sc.status().goal.expect("occluded_intent always has a goal");
        for (action, tip) in intent_tips(&out) {
            assert_eq!(action, MarkerAction::Add);
            assert_eq!(tip, Some(Vec3::new(goal.x, goal.y, 0.0)));
        }
    }
    let adopted: Vec<[f64; 2]> = sc.status().goal_history.iter().map(|(_, g)| [g.x, g.y]).collect();
    assert_eq!(&adopted[..4], &wps[..4]);
}

#[test]
fn tf_is_broadcast_at_the_script_rate() {
    let mut sc = Scenario::new(ScenarioScript::new(ScenarioName::Nav), Stamp::new(100, 0)).unwrap();
    let mut tf = 0;
    for i in 0..=1000 {
        tf += on(&sc.step(i as f64 * 0.001).unwrap(), "/tf").count();
    }
    // t in [0, 1] at 30 Hz
    assert!((30..=31).contains(&tf), "{tf}");
}

#[test]
fn handover_waits_for_start() {
    let mut sc = Scenario::new(ScenarioScript::new(ScenarioName::Handover), Stamp::new(100, 0)).unwrap();
    for i in 0..300 {
        let out = sc.step(i as f64 * DT).unwrap();
        assert!(
            out.iter().all(|e| e.topic == "/tf"),
            "published before start: {:?}",
            out
        );
    }
    assert_eq!(sc.status().handover, HandoverPhase::Idle);
    // other commands are not the keyword
    sc.on_publish("/handover/command", &CommandString::new("stop").to_json().unwrap())
        .unwrap();
    assert!(sc.step(3.0).unwrap().iter().all(|e| e.topic == "/tf"));
}

#[test]
fn handover_publishes_wireframe_and_grasp_after_start() {
    let script = ScenarioScript::new(ScenarioName::Handover);
    let period = 1.0 / script.handover_rate_hz;
    let edges = script.wireframe_edges().len();
    let mut sc = Scenario::new(script, Stamp::new(100, 0)).unwrap();
    sc.step(0.5).unwrap();
    sc.on_publish("/handover/command", &start_msg()).unwrap();
    let out = sc.step(0.5 + DT).unwrap();
    let grasp: Vec<_> = on(&out, "/grasp_pose").collect();
    assert_eq!(grasp.len(), 1, "first grasp pose goes out on the first step");
    let g = PoseStamped::from_json(&grasp[0].msg).unwrap();
    assert_eq!(g.frame_id.as_str(), "panda_link0");
    let wire: Vec<_> = on(&out, "/visualization_marker_array")
        .flat_map(|e| MarkerArray::from_json(&e.msg).unwrap().markers)
        .collect();
    assert_eq!(wire.len(), edges);
    assert_eq!(edges, 12);
    assert!(wire
        .iter()
        .all(|m| m.marker_type == MarkerType::LineList && m.points.len() == 2 && m.ns == "wireframe"));

    // updates keep coming at the handover rate
    let mut grasps = 0;
    let mut t = 0.5 + DT;
    while t < 1.5 + DT / 2.0 {
        t += DT;
        grasps += on(&sc.step(t).unwrap(), "/grasp_pose").count();
    }
    let expected = (1.0 / period).round() as usize;
    assert!(
        grasps.abs_diff(expected) <= 1,
        "{grasps} grasps in 1 s, expected {expected}"
    );
}

#[test]
fn repeated_start_is_ignored() {
    let mut sc = Scenario::new(ScenarioScript::new(ScenarioName::Handover), Stamp::new(100, 0)).unwrap();
    sc.on_publish("/handover/command", &start_msg()).unwrap();
    sc.step(0.1).unwrap();
    sc.on_publish("/handover/command", &start_msg()).unwrap();
    sc.on_publish("/handover/command", &start_msg()).unwrap();
    let mut grasps = 0;
    for i in 11..=30 {
        grasps += on(&sc.step(i as f64 * 0.01).unwrap(), "/grasp_pose").count();
    }
    let st = sc.status();
    assert_eq!(st.handovers_started, 1);
    assert_eq!(st.starts_ignored, 2);
    assert_eq!(st.handover, HandoverPhase::Active);
    // 0.2 s at 10 Hz, a single schedule
    assert!(grasps <= 3, "{grasps}");
}

#[test]
fn handover_ends_with_deleteall() {
    let mut script = ScenarioScript::new(ScenarioName::Handover);
    script.handover_secs = 1.0;
    let mut sc = Scenario::new(script, Stamp::new(100, 0)).unwrap();
    sc.on_publish("/handover/command", &start_msg()).unwrap();
    let mut cleared = false;
    for i in 0..200 {
        let out = sc.step(i as f64 * DT).unwrap();
        cleared |= on(&out, "/visualization_marker_array")
            .flat_map(|e| MarkerArray::from_json(&e.msg).unwrap().markers)
            .any(|m| m.action == MarkerAction::DeleteAll);
    }
    assert!(cleared);
    assert_eq!(sc.status().handover, HandoverPhase::Done);
    // a new start is accepted once done
    sc.on_publish("/handover/command", &start_msg()).unwrap();
    assert_eq!(sc.status().handovers_started, 2);
}

#[test]
fn every_emitted_message_validates() {
    for name in [ScenarioName::Nav, ScenarioName::OccludedIntent, ScenarioName::Handover] {
        let mut sc = Scenario::new(ScenarioScript::new(name), Stamp::new(1_700_000_000, 0)).unwrap();
        let kinds: std::collections::BTreeMap<String, MessageKind> = sc.inputs().into_iter().collect();
        sc.on_publish("/move_base_simple/goal", &goal_msg(1.0, 1.0, 0.5))
            .unwrap();
        sc.on_publish("/handover/command", &start_msg()).unwrap();
        let mut count = 0;
        for i in 0..2000 {
            for mut e in sc.step(i as f64 * DT).unwrap() {
                e.kind
                    .validate(&e.msg)
                    .unwrap_or_else(|err| panic!("{name} {}: {err}", e.topic));
                set_seq(&mut e.msg, 7);
                e.kind.validate(&e.msg).unwrap();
                assert_eq!(seq_of(&e.msg), Some(7), "{}", e.topic);
                assert!(
                    !kinds.contains_key(&e.topic),
                    "{name} publishes on its own input {}",
                    e.topic
                );
                count += 1;
            }
        }
        assert!(count > 100, "{name}: {count}");
    }
}

#[test]
fn script_validation() {
    let mut s = ScenarioScript::new(ScenarioName::Nav);
    assert!(s.validate().is_ok());
    s.robot.speed = 0.0;
    assert!(Scenario::new(s.clone(), Stamp::ZERO).is_err());
    s.robot.speed = 0.5;
    s.tf_rate_hz = -1.0;
    assert!(s.validate().is_err());
    assert!(ScenarioScript::new(ScenarioName::OccludedIntent).validate().is_ok());
    assert!("handover".parse::<ScenarioName>().is_ok());
    assert!("occluded_intent".parse::<ScenarioName>().is_ok());
    assert!("fly".parse::<ScenarioName>().is_err());
}
