//! Scene graph state and the epoch-tagged diff stream sent to viewers.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::msgs::Rgba;
use crate::{Transform, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Primitive {
    /// Line segment starting at the node origin along its +x axis; `scale.x` is the length,
    /// `scale.y` the width.
    Segment,
    Cube,
    Sphere,
    Cylinder,
    /// Arrow with its tail at the node origin pointing along +x; `scale.x` is the length,
    /// `scale.y` the shaft diameter and `scale.z` the head diameter.
    ArrowMesh,
    /// View-facing text; `scale.z` is the text height.
    Label,
    /// Preloaded mesh named by `mesh`.
    MeshRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneNode {
    pub node_id: String,
    pub primitive: Primitive,
    pub pose_world: Transform,
    pub scale: Vec3,
    pub color: Rgba,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub text: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub mesh: String,
    pub visible: bool,
}

impl SceneNode {
    pub fn new(
        node_id: impl Into<String>,
        primitive: Primitive,
        pose_world: Transform,
        scale: Vec3,
        color: Rgba,
    ) -> Self {
        Self {
            node_id: node_id.into(),
            primitive,
            pose_world,
            scale,
            color: color.clamped(),
            text: String::new(),
            mesh: String::new(),
            visible: true,
        }
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.text = text.into();
        self
    }

    pub fn with_mesh(mut self, mesh: impl Into<String>) -> Self {
        self.mesh = mesh.into();
        self
    }

    /// Arrow tip for [`Primitive::ArrowMesh`], segment end for [`Primitive::Segment`].
    pub fn tip(&self) -> Vec3 {
        self.pose_world.transform_point(&Vec3::new(self.scale.x, 0.0, 0.0))
    }
}

/// Changes between two consecutive epochs, or a full snapshot when `reset` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDiff {
    pub epoch: u64,
    /// Replace the receiver's scene instead of patching it.
    #[serde(default)]
    pub reset: bool,
    pub upserts: Vec<SceneNode>,
    pub deletes: Vec<String>,
    /// Digest of the full scene after this diff; see [`Snapshot::digest`].
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub digest: String,
}

impl SceneDiff {
    pub fn is_empty(&self) -> bool {
        self.upserts.is_empty() && self.deletes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SceneError {
    #[error("expected epoch {expected}, got {got}; resync required")]
    EpochGap { expected: u64, got: u64 },
}

/// A scene folded from diffs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Snapshot {
    pub epoch: u64,
    pub nodes: BTreeMap<String, SceneNode>,
}

impl Snapshot {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn apply_diff(&mut self, diff: &SceneDiff) -> Result<(), SceneError> {
        if diff.reset {
            self.nodes.clear();
        } else if diff.epoch != self.epoch + 1 {
            return Err(SceneError::EpochGap {
                expected: self.epoch + 1,
                got: diff.epoch,
            });
        }
        for id in &diff.deletes {
            self.nodes.remove(id);
        }
        for node in &diff.upserts {
            self.nodes.insert(node.node_id.clone(), node.clone());
        }
        self.epoch = diff.epoch;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Hex SHA-256 over the compact JSON array of nodes in id order. Viewers compare it
    /// against their own fold to detect divergence.
    pub fn digest(&self) -> String {
        let nodes: Vec<&SceneNode> = self.nodes.values().collect();
        let json = serde_json::to_vec(&nodes).expect("scene nodes serialize");
        hex::encode(Sha256::digest(&json))
    }

    /// The whole scene as a `reset` diff at the current epoch.
    pub fn to_reset_diff(&self, with_digest: bool) -> SceneDiff {
        SceneDiff {
            epoch: self.epoch,
            reset: true,
            upserts: self.nodes.values().cloned().collect(),
            deletes: Vec::new(),
            digest: if with_digest { self.digest() } else { String::new() },
        }
    }
}

/// Engine-side authoritative scene.
///
/// Plugins render node poses in the engine's fixed frame; the scene maps them through the
/// world root (identity until an alignment is applied) and emits the difference from the
/// previous epoch.
#[derive(Debug, Clone)]
pub struct Scene {
    root: Transform,
    published: Snapshot,
    with_digest: bool,
}

impl Default for Scene {
    fn default() -> Self {
        Self::new()
    }
}

impl Scene {
    pub fn new() -> Self {
        Self {
            root: Transform::identity(),
            published: Snapshot::new(),
            with_digest: true,
        }
    }

    /// Skip the per-diff digest (saves a serialization pass per tick).
    pub fn without_digest(mut self) -> Self {
        self.with_digest = false;
        self
    }

    pub fn world_root(&self) -> Transform {
        self.root
    }

    pub fn set_world_root(&mut self, root: Transform) {
        self.root = root;
    }

    pub fn epoch(&self) -> u64 {
        self.published.epoch
    }

    pub fn snapshot(&self) -> &Snapshot {
        &self.published
    }

    /// Replaces the scene contents with `rendered` and returns the diff for the new epoch.
    pub fn commit(&mut self, rendered: impl IntoIterator<Item = SceneNode>) -> SceneDiff {
        let mut next: BTreeMap<String, SceneNode> = BTreeMap::new();
        for mut node in rendered {
            node.pose_world = self.root * node.pose_world;
            next.insert(node.node_id.clone(), node);
        }
        let deletes: Vec<String> = self
            .published
            .nodes
            .keys()
            .filter(|id| !next.contains_key(*id))
            .cloned()
            .collect();
        let upserts: Vec<SceneNode> = next
            .values()
            .filter(|n| self.published.nodes.get(&n.node_id) != Some(n))
            .cloned()
            .collect();
        let mut diff = SceneDiff {
            epoch: self.published.epoch + 1,
            reset: false,
            upserts,
            deletes,
            digest: String::new(),
        };
        self.published
            .apply_diff(&diff)
            .expect("authoritative scene advances one epoch at a time");
        if self.with_digest {
            diff.digest = self.published.digest();
        }
        diff
    }
}

/// Checks a diff's structural rules against the snapshot it will be applied to: ids appear at
/// most once, and every delete names a node that exists.
pub fn check_diff(before: &Snapshot, diff: &SceneDiff) -> Result<(), String> {
    let mut seen = BTreeSet::new();
    for id in diff.upserts.iter().map(|n| &n.node_id).chain(&diff.deletes) {
        if !seen.insert(id) {
            return Err(format!("{id} appears twice in epoch {}", diff.epoch));
        }
    }
    if !diff.reset {
        if let Some(id) = diff.deletes.iter().find(|id| !before.nodes.contains_key(*id)) {
            return Err(format!("dangling delete of {id} in epoch {}", diff.epoch));
        }
    }
    Ok(())
}
