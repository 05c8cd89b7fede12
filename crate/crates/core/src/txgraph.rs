//! Time-buffered transform tree.
//!
//! Each child frame keeps one parent and a short, time-sorted history of its pose in that
//! parent. Lookups walk both frames up to their lowest common ancestor and compose the edges,
//! interpolating every edge at the requested time.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::geom::Transform;
use crate::scalar::Scalar;
use crate::time::Stamp;

pub const DEFAULT_BUFFER_WINDOW: Duration = Duration::from_secs(10);
pub const DEFAULT_EXTRAPOLATION_LIMIT: Duration = Duration::from_millis(100);

/// Name of a coordinate frame. Never empty, never starts with `/`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FrameId(String);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("frame id must be nonempty")]
pub struct EmptyFrameId;

impl FrameId {
    /// Strips leading slashes (legacy tf names like `/map`).
    pub fn new(name: impl AsRef<str>) -> Result<Self, EmptyFrameId> {
        let name = name.as_ref().trim_start_matches('/');
        if name.is_empty() {
            return Err(EmptyFrameId);
        }
        Ok(Self(name.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for FrameId {
    type Error = EmptyFrameId;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        FrameId::new(value)
    }
}

impl From<FrameId> for String {
    fn from(f: FrameId) -> Self {
        f.0
    }
}

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Pose of `child` expressed in `parent` at `stamp`.
#[derive(Debug, Clone, PartialEq)]
pub struct StampedTransform<T> {
    pub parent: FrameId,
    pub child: FrameId,
    pub stamp: Stamp,
    pub transform: Transform<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LookupTime {
    Latest,
    At(Stamp),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TfError {
    #[error("unknown frame {0}")]
    UnknownFrame(FrameId),
    #[error("frames {target} and {source_frame} share no common ancestor")]
    Disconnected { target: FrameId, source_frame: FrameId },
    #[error("edge {parent}->{child} has no data near {requested} (buffered {first}..{last})")]
    ExtrapolationTooFar {
        parent: FrameId,
        child: FrameId,
        requested: Stamp,
        first: Stamp,
        last: Stamp,
    },
    #[error("inserting {parent}->{child} would create a cycle")]
    CycleRejected { parent: FrameId, child: FrameId },
    #[error("invalid transform {parent}->{child}: {reason}")]
    InvalidTransform {
        parent: FrameId,
        child: FrameId,
        reason: &'static str,
    },
}

/// Topology entry reported by [`FrameTree::frames`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameInfo {
    pub frame: FrameId,
    pub parent: Option<FrameId>,
    pub latest: Option<Stamp>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TreeDiagnostics {
    pub inserted: u64,
    pub cycles_rejected: u64,
    pub invalid_rejected: u64,
    pub reparented: u64,
}

#[derive(Debug, Clone)]
struct EdgeBuffer<T> {
    parent: FrameId,
    samples: VecDeque<(Stamp, Transform<T>)>,
}

impl<T: Scalar> EdgeBuffer<T> {
    fn newest(&self) -> Option<Stamp> {
        self.samples.back().map(|(s, _)| *s)
    }

    fn insert(&mut self, stamp: Stamp, tf: Transform<T>) {
        match self.samples.binary_search_by(|(s, _)| s.cmp(&stamp)) {
            Ok(i) => self.samples[i].1 = tf,
            Err(i) => self.samples.insert(i, (stamp, tf)),
        }
    }

    fn prune(&mut self, window: Duration) {
        if let Some(newest) = self.newest() {
            let oldest_kept = newest.saturating_sub(window);
            while self.samples.front().is_some_and(|(s, _)| *s < oldest_kept) {
                self.samples.pop_front();
            }
        }
    }

    fn sample(&self, child: &FrameId, at: Stamp, limit: Duration) -> Result<Transform<T>, TfError> {
        let (first, last) = match (self.samples.front(), self.samples.back()) {
            (Some(f), Some(l)) => (f, l),
            _ => unreachable!("edge buffers are never empty"),
        };
        let too_far = || TfError::ExtrapolationTooFar {
            parent: self.parent.clone(),
            child: child.clone(),
            requested: at,
            first: first.0,
            last: last.0,
        };
        if at <= first.0 {
            return if first.0.abs_diff(&at) <= limit {
                Ok(first.1)
            } else {
                Err(too_far())
            };
        }
        if at >= last.0 {
            return if at.abs_diff(&last.0) <= limit {
                Ok(last.1)
            } else {
                Err(too_far())
            };
        }
        // first < at < last, so a bracketing pair exists
        let hi = self.samples.partition_point(|(s, _)| *s < at);
        let (t1, tf1) = self.samples[hi];
        if t1 == at {
            return Ok(tf1);
        }
        let (t0, tf0) = self.samples[hi - 1];
        let span = (t1.as_nanos() - t0.as_nanos()) as f64;
        let u = (at.as_nanos() - t0.as_nanos()) as f64 / span;
        Ok(tf0.interpolate(&tf1, T::lit(u)))
    }
}

/// Buffer of stamped transforms between named frames.
#[derive(Debug, Clone)]
pub struct FrameTree<T> {
    edges: HashMap<FrameId, EdgeBuffer<T>>,
    window: Duration,
    extrapolation_limit: Duration,
    diagnostics: TreeDiagnostics,
}

impl<T: Scalar> Default for FrameTree<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> FrameTree<T> {
    pub fn new() -> Self {
        Self::with_window(DEFAULT_BUFFER_WINDOW)
    }

    pub fn with_window(window: Duration) -> Self {
        Self {
            edges: HashMap::new(),
            window,
            extrapolation_limit: DEFAULT_EXTRAPOLATION_LIMIT,
            diagnostics: TreeDiagnostics::default(),
        }
    }

    pub fn set_extrapolation_limit(&mut self, limit: Duration) {
        self.extrapolation_limit = limit;
    }

    pub fn window(&self) -> Duration {
        self.window
    }

    pub fn diagnostics(&self) -> TreeDiagnostics {
        self.diagnostics
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn parent_of(&self, frame: &FrameId) -> Option<&FrameId> {
        self.edges.get(frame).map(|e| &e.parent)
    }

    pub fn contains(&self, frame: &FrameId) -> bool {
        self.edges.contains_key(frame) || self.edges.values().any(|e| &e.parent == frame)
    }

    /// Walks parent links from `start`. Stops after `edges.len()` hops, which the acyclic
    /// invariant makes unreachable.
    fn ancestors(&self, start: &FrameId) -> Vec<FrameId> {
        let mut chain = vec![start.clone()];
        let mut cur = start;
        while let Some(edge) = self.edges.get(cur) {
            if chain.len() > self.edges.len() {
                break;
            }
            chain.push(edge.parent.clone());
            cur = &edge.parent;
        }
        chain
    }

    pub fn insert(&mut self, st: StampedTransform<T>) -> Result<(), TfError> {
        let StampedTransform {
            parent,
            child,
            stamp,
            transform,
        } = st;
        if parent == child {
            self.diagnostics.invalid_rejected += 1;
            return Err(TfError::InvalidTransform {
                parent,
                child,
                reason: "parent equals child",
            });
        }
        if !transform.is_finite() {
            self.diagnostics.invalid_rejected += 1;
            return Err(TfError::InvalidTransform {
                parent,
                child,
                reason: "non-finite component",
            });
        }
        let same_parent = self.edges.get(&child).is_some_and(|e| e.parent == parent);
        if !same_parent && self.ancestors(&parent).contains(&child) {
            self.diagnostics.cycles_rejected += 1;
            log::debug!("dropping {parent}->{child}: cycle");
            return Err(TfError::CycleRejected { parent, child });
        }
        let window = self.window;
        let edge = self.edges.entry(child).or_insert_with(|| EdgeBuffer {
            parent: parent.clone(),
            samples: VecDeque::new(),
        });
        if edge.parent != parent {
            edge.parent = parent;
            edge.samples.clear();
            self.diagnostics.reparented += 1;
        }
        edge.insert(stamp, transform);
        edge.prune(window);
        self.diagnostics.inserted += 1;
        Ok(())
    }

    /// Current child edges, sorted by frame name.
    pub fn frames(&self) -> Vec<FrameInfo> {
        let mut out: Vec<FrameInfo> = self
            .edges
            .iter()
            .map(|(child, e)| FrameInfo {
                frame: child.clone(),
                parent: Some(e.parent.clone()),
                latest: e.newest(),
            })
            .collect();
        out.sort_by(|a, b| a.frame.cmp(&b.frame));
        out
    }

    /// Every known frame including roots (reported with no parent), sorted by name.
    pub fn all_frames(&self) -> Vec<FrameInfo> {
        let mut all: BTreeMap<FrameId, FrameInfo> = BTreeMap::new();
        for info in self.frames() {
            all.insert(info.frame.clone(), info);
        }
        let roots: BTreeSet<FrameId> = self
            .edges
            .values()
            .map(|e| e.parent.clone())
            .filter(|p| !self.edges.contains_key(p))
            .collect();
        for root in roots {
            all.insert(
                root.clone(),
                FrameInfo {
                    frame: root,
                    parent: None,
                    latest: None,
                },
            );
        }
        all.into_values().collect()
    }

    /// Pose of `source` expressed in `target`, i.e. maps source coordinates into target.
    pub fn lookup(&self, target: &FrameId, source: &FrameId, at: LookupTime) -> Result<Transform<T>, TfError> {
        for f in [target, source] {
            if !self.contains(f) {
                return Err(TfError::UnknownFrame(f.clone()));
            }
        }
        if target == source {
            return Ok(Transform::identity());
        }
        let source_chain = self.ancestors(source);
        let target_chain = self.ancestors(target);
        let lca = target_chain
            .iter()
            .find(|f| source_chain.contains(f))
            .cloned()
            .ok_or_else(|| TfError::Disconnected {
                target: target.clone(),
                source_frame: source.clone(),
            })?;
        let source_path = &source_chain[..source_chain.iter().position(|f| *f == lca).unwrap()];
        let target_path = &target_chain[..target_chain.iter().position(|f| *f == lca).unwrap()];

        let stamp = match at {
            LookupTime::At(s) => s,
            LookupTime::Latest => source_path
                .iter()
                .chain(target_path)
                .filter_map(|c| self.edges[c].newest())
                .min()
                .unwrap_or(Stamp::ZERO),
        };

        let lca_from = |path: &[FrameId]| -> Result<Transform<T>, TfError> {
            // path runs child-first; compose from the ancestor end
            let mut acc = Transform::identity();
            for child in path.iter().rev() {
                let edge = &self.edges[child];
                acc = acc * edge.sample(child, stamp, self.extrapolation_limit)?;
            }
            Ok(acc)
        };
        let lca_source = lca_from(source_path)?;
        let lca_target = lca_from(target_path)?;
        Ok(lca_target.inverse() * lca_source)
    }

    /// Checks the structural invariants; used by tests after every mutation.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (child, edge) in &self.edges {
            if edge.samples.is_empty() {
                return Err(format!("empty buffer for {child}"));
            }
            if !edge
                .samples
                .iter()
                .zip(edge.samples.iter().skip(1))
                .all(|(a, b)| a.0 < b.0)
            {
                return Err(format!("buffer for {child} not strictly sorted"));
            }
            let (first, last) = (edge.samples.front().unwrap().0, edge.samples.back().unwrap().0);
            if last.abs_diff(&first) > self.window {
                return Err(format!("buffer for {child} spans more than the window"));
            }
            let chain = self.ancestors(child);
            if chain.len() > self.edges.len() + 1 || chain[1..].contains(child) {
                return Err(format!("cycle through {child}"));
            }
        }
        Ok(())
    }
}

/// Single-writer, many-reader handle around a [`FrameTree`].
#[derive(Debug, Clone)]
pub struct SharedFrameTree<T>(Arc<RwLock<FrameTree<T>>>);

impl<T: Scalar> Default for SharedFrameTree<T> {
    fn default() -> Self {
        Self::new(FrameTree::new())
    }
}

impl<T: Scalar> SharedFrameTree<T> {
    pub fn new(tree: FrameTree<T>) -> Self {
        Self(Arc::new(RwLock::new(tree)))
    }

    pub fn insert(&self, st: StampedTransform<T>) -> Result<(), TfError> {
        self.0.write().insert(st)
    }

    pub fn insert_all(&self, items: impl IntoIterator<Item = StampedTransform<T>>) -> usize {
        let mut tree = self.0.write();
        items.into_iter().filter(|st| tree.insert(st.clone()).is_ok()).count()
    }

    pub fn read(&self) -> parking_lot::RwLockReadGuard<'_, FrameTree<T>> {
        self.0.read()
    }

    pub fn lookup(&self, target: &FrameId, source: &FrameId, at: LookupTime) -> Result<Transform<T>, TfError> {
        self.0.read().lookup(target, source, at)
    }
}
