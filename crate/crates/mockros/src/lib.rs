//! A mock rosbridge server with scripted robots, for exercising the engine without ROS.

pub mod clock;
pub mod robot;
pub mod scenario;
pub mod server;

pub use robot::{nav_step, Pose2, RobotParams};
pub use scenario::{Scenario, ScenarioName, ScenarioScript, ScenarioStatus};
pub use server::{MockServer, ServeError, ServerConfig};
