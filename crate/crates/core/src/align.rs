//! Virtual-to-real world alignment from a fiducial marker detection.
//!
//! The headset tracks itself in a virtual world frame whose origin is wherever the app
//! started. A physical marker sits at a configured pose in the real world frame; detecting it
//! from the device gives the marker's pose in the virtual frame, and the difference between
//! the two is the correction that re-bases the scene.

use serde::{Deserialize, Serialize};

use crate::geom::Transform;
use crate::scalar::Scalar;
use crate::scene::Scene;
use crate::time::Stamp;

/// One sighting of the fiducial marker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + serde::de::DeserializeOwned"
))]
pub struct MarkerDetection<T> {
    /// Marker pose in the device (camera) frame.
    pub marker_in_device: Transform<T>,
    /// Tracked device pose in the virtual world frame.
    pub device_in_vwcs: Transform<T>,
    #[serde(default)]
    pub stamp: Stamp,
}

impl<T: Scalar> MarkerDetection<T> {
    /// Where the detected marker sits in the virtual world frame.
    pub fn marker_in_vwcs(&self) -> Transform<T> {
        self.device_in_vwcs * self.marker_in_device
    }
}

/// Correction mapping virtual-world coordinates into real-world coordinates.
///
/// Mapping the detected marker's virtual pose through the result yields `marker_in_rwcs`.
pub fn solve_alignment<T: Scalar>(det: &MarkerDetection<T>, marker_in_rwcs: &Transform<T>) -> Transform<T> {
    *marker_in_rwcs * det.marker_in_vwcs().inverse()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldAlignment<T> {
    pub marker_in_rwcs: Transform<T>,
    pub vwcs_to_rwcs: Transform<T>,
    pub aligned: bool,
    last_detection: Option<MarkerDetection<T>>,
}

impl<T: Scalar> WorldAlignment<T> {
    pub fn new(marker_in_rwcs: Transform<T>) -> Self {
        Self {
            marker_in_rwcs,
            vwcs_to_rwcs: Transform::identity(),
            aligned: false,
            last_detection: None,
        }
    }

    /// Solves the correction for `det`, replacing any earlier one. Takes effect on [`apply`](Self::apply).
    pub fn update(&mut self, det: MarkerDetection<T>) -> Transform<T> {
        self.vwcs_to_rwcs = solve_alignment(&det, &self.marker_in_rwcs);
        self.last_detection = Some(det);
        self.vwcs_to_rwcs
    }

    pub fn last_detection(&self) -> Option<&MarkerDetection<T>> {
        self.last_detection.as_ref()
    }
}

impl WorldAlignment<f64> {
    /// Re-bases the scene root onto the solved correction. Every node is re-emitted in real
    /// world coordinates on the scene's next commit.
    pub fn apply(&mut self, scene: &mut Scene) {
        if self.last_detection.is_none() {
            return;
        }
        scene.set_world_root(self.vwcs_to_rwcs);
        self.aligned = true;
    }
}
