//! Engine core for an AR-style robot visualization platform.
//!
//! * [`geom`]: rigid-body pose math, generic over [`Scalar`] (`f32` or `f64`).
//! * [`txgraph`]: time-buffered transform tree with interpolated lookups.
//! * [`align`]: virtual-to-real world alignment from a fiducial marker detection.
//! * [`msgs`]: rosbridge envelopes and the ROS message schemas the plugins use.
//! * [`plugins`]: display and tool plugins plus their registry.
//! * [`scene`]: scene nodes, epoch-tagged diffs and snapshot folding.
//! * [`engine`]: the per-tick composition of all of the above.
//!
//! The aliases at the crate root fix the scalar to `f64`, which is what the wire formats carry.

pub mod align;
pub mod engine;
pub mod geom;
pub mod msgs;
pub mod plugins;
pub mod scalar;
pub mod scene;
pub mod time;
pub mod txgraph;

pub use scalar::Scalar;
pub use time::Stamp;
pub use txgraph::FrameId;

pub type Vec3 = geom::Vec3<f64>;
pub type UnitQuat = geom::UnitQuat<f64>;
pub type Transform = geom::Transform<f64>;
pub type FrameTree = txgraph::FrameTree<f64>;
pub type SharedFrameTree = txgraph::SharedFrameTree<f64>;
pub type StampedTransform = txgraph::StampedTransform<f64>;
pub type MarkerDetection = align::MarkerDetection<f64>;
pub type WorldAlignment = align::WorldAlignment<f64>;

pub type Vec3f = geom::Vec3<f32>;
pub type UnitQuatf = geom::UnitQuat<f32>;
pub type Transformf = geom::Transform<f32>;
pub type FrameTreef = txgraph::FrameTree<f32>;
