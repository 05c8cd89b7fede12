//! Point-robot kinematics.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotParams {
    /// Linear speed in m/s.
    pub speed: f64,
    /// Yaw rate limit in rad/s.
    pub max_yaw_rate: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            speed: 0.5,
            max_yaw_rate: 1.5,
        }
    }
}

/// Planar pose in the map frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw }
    }

    pub fn distance_to(&self, other: &Pose2) -> f64 {
        (other.x - self.x).hypot(other.y - self.y)
    }
}

/// Wraps an angle into (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

fn turn_toward(yaw: f64, target: f64, max_step: f64) -> f64 {
    let err = wrap_angle(target - yaw);
    if err.abs() <= max_step {
        target
    } else {
        wrap_angle(yaw + max_step * err.signum())
    }
}

/// Advances `state` by `dt` seconds toward `goal`.
///
/// The robot translates straight at `speed` (holonomic), turning toward its direction of
/// travel at the yaw-rate limit; once on the goal point it turns to the goal heading.
pub fn nav_step(state: Pose2, goal: &Pose2, dt: f64, params: &RobotParams) -> Pose2 {
    if dt <= 0.0 {
        return state;
    }
    let dist = state.distance_to(goal);
    let max_turn = params.max_yaw_rate * dt;
    if dist == 0.0 {
        return Pose2 {
            yaw: turn_toward(state.yaw, goal.yaw, max_turn),
            ..state
        };
    }
    let travel = (params.speed * dt).min(dist);
    let (dx, dy) = (goal.x - state.x, goal.y - state.y);
    let heading = dy.atan2(dx);
    if travel == dist {
        return Pose2 {
            x: goal.x,
            y: goal.y,
            yaw: turn_toward(state.yaw, heading, max_turn),
        };
    }
    Pose2 {
        x: state.x + dx / dist * travel,
        y: state.y + dy / dist * travel,
        yaw: turn_toward(state.yaw, heading, max_turn),
    }
}
