//! Spanning tree of the overlay with diameter close to the template's.
//!
//! Leaders, one per occupied label, are wired together along a breadth-first
//! tree of the template; every other peer hangs off its label's leader as a
//! leaf. Joins attach a leaf, departures of a leaf need nothing, and a
//! departing leader is replaced by the lowest-id remaining member of its
//! clique. When a departure leaves a label empty the tree is rebuilt from
//! scratch as soon as the template is fully covered again.

use std::collections::{HashMap, VecDeque};

use thiserror::Error;

use crate::overlay::{OverlayState, PeerId};
use crate::template::{self, VertexLabel};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    /// Building needs every template vertex covered at a single dimension.
    #[error("cannot build the tree: {0}")]
    RebuildImpossible(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeViolation {
    #[error("tree is awaiting a rebuild")]
    NotBuilt,
    #[error("live peer {0} is missing from the tree")]
    MissingPeer(PeerId),
    #[error("tree holds {tree} peers but {live} are live")]
    SizeMismatch { tree: usize, live: usize },
    #[error("expected one root, found {0}")]
    RootCount(usize),
    #[error("tree edge {0} - {1} is not an overlay edge")]
    NotOverlayEdge(PeerId, PeerId),
    #[error("peer {child} hangs off non-leader {parent}")]
    ParentNotLeader { child: PeerId, parent: PeerId },
    #[error("label {0} has no valid leader")]
    BadLeader(VertexLabel),
    #[error("only {reached} of {live} peers reachable from the root")]
    Disconnected { reached: usize, live: usize },
}

/// Cost of one tree update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RepairReport {
    pub messages: usize,
    pub became_leader: bool,
    pub promoted: Option<PeerId>,
    /// The update left the tree broken; a rebuild is pending.
    pub needs_rebuild: bool,
}

/// Result of a successful validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeCheck {
    pub peers: usize,
    pub diameter: usize,
}

#[derive(Debug, Clone)]
pub struct SpanningTreeState {
    dim: u8,
    template_bfs_parent: Vec<Option<usize>>,
    template_children: Vec<Vec<usize>>,
    leader: Vec<Option<PeerId>>,
    tree_parent: HashMap<PeerId, Option<PeerId>>,
    broken: bool,
    ever_built: bool,
    pub rebuild_count: u64,
    pub repair_message_count: u64,
    pub rebuild_message_count: u64,
}

/// Root of the template BFS tree: all-zero word, cycle position 1.
pub fn bfs_root(dim: u8) -> VertexLabel {
    VertexLabel::new(0, 1, dim).expect("root label is valid")
}

impl SpanningTreeState {
    /// An empty tree over the template at `dim`, awaiting its first build.
    pub fn new(dim: u8) -> Self {
        let mut tree = Self {
            dim,
            template_bfs_parent: Vec::new(),
            template_children: Vec::new(),
            leader: Vec::new(),
            tree_parent: HashMap::new(),
            broken: true,
            ever_built: false,
            rebuild_count: 0,
            repair_message_count: 0,
            rebuild_message_count: 0,
        };
        tree.set_template(dim);
        tree
    }

    fn set_template(&mut self, dim: u8) {
        self.dim = dim;
        self.template_bfs_parent = template::bfs_tree(bfs_root(dim));
        let mut children = vec![Vec::new(); self.template_bfs_parent.len()];
        for (child, parent) in self.template_bfs_parent.iter().enumerate() {
            if let Some(p) = parent {
                children[*p].push(child);
            }
        }
        self.template_children = children;
        self.leader = vec![None; self.template_bfs_parent.len()];
    }

    /// Builds the tree from scratch.
    pub fn build(overlay: &OverlayState) -> Result<Self, TreeError> {
        let dim = overlay.single_dim().ok_or_else(|| {
            TreeError::RebuildImpossible("peers disagree on the dimension or none are live".into())
        })?;
        let mut tree = Self::new(dim);
        tree.rebuild(overlay)?;
        Ok(tree)
    }

    fn rebuild(&mut self, overlay: &OverlayState) -> Result<(), TreeError> {
        let dim = overlay.single_dim().ok_or_else(|| {
            TreeError::RebuildImpossible("peers disagree on the dimension or none are live".into())
        })?;
        let total = template::vertex_count(dim);
        let occupied = overlay.occupied_labels(dim);
        if occupied != total {
            return Err(TreeError::RebuildImpossible(format!(
                "{} of {total} template vertices are holes",
                total - occupied
            )));
        }
        if dim != self.dim {
            self.set_template(dim);
        }
        self.tree_parent.clear();
        for index in 0..total {
            let label = VertexLabel::from_index(index, dim).expect("valid index");
            let members = overlay.coverers(label);
            self.leader[index] = Some(members[0]);
        }
        for index in 0..total {
            let label = VertexLabel::from_index(index, dim).expect("valid index");
            let leader = self.leader[index].expect("every label has a leader");
            let up = self.template_bfs_parent[index].map(|p| self.leader[p].expect("leader"));
            self.tree_parent.insert(leader, up);
            for &p in &overlay.coverers(label)[1..] {
                self.tree_parent.insert(p, Some(leader));
            }
        }
        self.broken = false;
        if self.ever_built {
            self.rebuild_count += 1;
        }
        self.ever_built = true;
        self.rebuild_message_count += overlay.len() as u64;
        Ok(())
    }

    /// Rebuilds a broken tree once the overlay allows it. Returns true if a
    /// rebuild happened.
    pub fn maintain(&mut self, overlay: &OverlayState) -> bool {
        if !self.broken || overlay.is_empty() {
            return false;
        }
        match overlay.single_dim() {
            Some(d) if overlay.occupied_labels(d) == template::vertex_count(d) => {
                self.rebuild(overlay).is_ok()
            }
            _ => false,
        }
    }

    pub fn dim(&self) -> u8 {
        self.dim
    }

    pub fn is_broken(&self) -> bool {
        self.broken
    }

    pub fn has_been_built(&self) -> bool {
        self.ever_built
    }

    pub fn leader_of(&self, label: VertexLabel) -> Option<PeerId> {
        if label.dim() != self.dim {
            return None;
        }
        self.leader[label.index()]
    }

    pub fn is_leader(&self, overlay: &OverlayState, peer: PeerId) -> bool {
        overlay
            .peer(peer)
            .is_some_and(|p| self.leader_of(p.node_id) == Some(peer))
    }

    /// Tree parent of `peer`: `Some(None)` for the root, `None` if absent.
    pub fn parent(&self, peer: PeerId) -> Option<Option<PeerId>> {
        self.tree_parent.get(&peer).copied()
    }

    fn mark_broken(&mut self) {
        self.broken = true;
    }

    /// Attaches a peer that has just joined the overlay.
    pub fn on_insert(&mut self, overlay: &OverlayState, peer: PeerId) -> RepairReport {
        let Some(node) = overlay.peer(peer) else {
            return RepairReport::default();
        };
        let label = node.node_id;
        let mut report = RepairReport::default();
        if label.dim() != self.dim {
            self.mark_broken();
            report.needs_rebuild = true;
            return report;
        }
        let index = label.index();
        if self.broken {
            // Membership is re-read from the overlay at the next rebuild.
            if self.leader[index].is_none() {
                self.leader[index] = Some(peer);
                report.became_leader = true;
            }
            report.needs_rebuild = true;
            return report;
        }
        match self.leader[index] {
            Some(leader) => {
                self.tree_parent.insert(peer, Some(leader));
                report.messages = 1;
            }
            None => {
                // First coverer of the label: lead it and hook onto the
                // leader of the template parent label.
                self.leader[index] = Some(peer);
                report.became_leader = true;
                match self.template_bfs_parent[index].map(|p| self.leader[p]) {
                    Some(Some(parent)) => {
                        self.tree_parent.insert(peer, Some(parent));
                        report.messages = 1;
                    }
                    _ => {
                        self.mark_broken();
                        report.needs_rebuild = true;
                    }
                }
            }
        }
        self.repair_message_count += report.messages as u64;
        report
    }

    /// Detaches a peer that has just left; `label` is the node-id it had.
    pub fn on_delete(
        &mut self,
        overlay: &OverlayState,
        peer: PeerId,
        label: VertexLabel,
    ) -> RepairReport {
        let mut report = RepairReport::default();
        self.tree_parent.remove(&peer);
        if label.dim() != self.dim {
            report.needs_rebuild = self.broken;
            return report;
        }
        let index = label.index();
        if self.leader[index] != Some(peer) {
            report.needs_rebuild = self.broken;
            return report;
        }
        let remaining = overlay.coverers(label);
        let Some(&successor) = remaining.first() else {
            self.leader[index] = None;
            self.mark_broken();
            report.needs_rebuild = true;
            return report;
        };
        self.leader[index] = Some(successor);
        report.promoted = Some(successor);
        if self.broken {
            report.needs_rebuild = true;
            return report;
        }
        // The successor takes the departed leader's place: its parent, its
        // clique leaves and the leaders of the template child labels.
        let up = self.template_bfs_parent[index]
            .map(|p| self.leader[p].expect("leader of parent label"));
        self.tree_parent.insert(successor, up);
        for &p in &remaining[1..] {
            self.tree_parent.insert(p, Some(successor));
        }
        for &c in &self.template_children[index] {
            if let Some(child) = self.leader[c] {
                self.tree_parent.insert(child, Some(successor));
            }
        }
        // One election round over the clique.
        report.messages = remaining.len();
        self.repair_message_count += report.messages as u64;
        report
    }

    /// A live peer moved to another node-id.
    pub fn on_relabel(
        &mut self,
        overlay: &OverlayState,
        peer: PeerId,
        old: VertexLabel,
    ) -> RepairReport {
        let removed = self.on_delete(overlay, peer, old);
        let inserted = self.on_insert(overlay, peer);
        RepairReport {
            messages: removed.messages + inserted.messages,
            became_leader: inserted.became_leader,
            promoted: removed.promoted,
            needs_rebuild: removed.needs_rebuild || inserted.needs_rebuild,
        }
    }

    /// Full structural check against the overlay; returns the tree diameter.
    pub fn validate(&self, overlay: &OverlayState) -> Result<TreeCheck, TreeViolation> {
        if self.broken {
            return Err(TreeViolation::NotBuilt);
        }
        let live = overlay.len();
        for &p in overlay.live_peers() {
            if !self.tree_parent.contains_key(&p) {
                return Err(TreeViolation::MissingPeer(p));
            }
        }
        if self.tree_parent.len() != live {
            return Err(TreeViolation::SizeMismatch {
                tree: self.tree_parent.len(),
                live,
            });
        }
        for index in 0..self.leader.len() {
            let label = VertexLabel::from_index(index, self.dim).expect("valid index");
            match self.leader[index] {
                Some(l) if overlay.peer(l).is_some_and(|p| p.node_id == label) => {}
                _ => return Err(TreeViolation::BadLeader(label)),
            }
        }
        let mut children: HashMap<PeerId, Vec<PeerId>> = HashMap::new();
        let mut roots = Vec::new();
        for &p in overlay.live_peers() {
            match self.tree_parent[&p] {
                None => roots.push(p),
                Some(parent) => {
                    if !overlay.are_adjacent(p, parent) {
                        return Err(TreeViolation::NotOverlayEdge(p, parent));
                    }
                    if !self.is_leader(overlay, parent) {
                        return Err(TreeViolation::ParentNotLeader { child: p, parent });
                    }
                    children.entry(parent).or_default().push(p);
                }
            }
        }
        if roots.len() != 1 {
            return Err(TreeViolation::RootCount(roots.len()));
        }
        let mut adjacency: HashMap<PeerId, Vec<PeerId>> = children.clone();
        for (parent, kids) in &children {
            for k in kids {
                adjacency.entry(*k).or_default().push(*parent);
            }
        }
        let (far, reached, _) = tree_bfs(&adjacency, roots[0]);
        if reached != live {
            return Err(TreeViolation::Disconnected { reached, live });
        }
        let (_, _, diameter) = tree_bfs(&adjacency, far);
        Ok(TreeCheck {
            peers: live,
            diameter,
        })
    }
}

/// Returns the farthest node, the number reached and the farthest distance.
fn tree_bfs(adjacency: &HashMap<PeerId, Vec<PeerId>>, start: PeerId) -> (PeerId, usize, usize) {
    let mut dist: HashMap<PeerId, usize> = HashMap::new();
    let mut queue = VecDeque::new();
    dist.insert(start, 0);
    queue.push_back(start);
    let mut far = (start, 0);
    while let Some(v) = queue.pop_front() {
        let d = dist[&v];
        if d > far.1 {
            far = (v, d);
        }
        for &u in adjacency.get(&v).map(Vec::as_slice).unwrap_or(&[]) {
            if !dist.contains_key(&u) {
                dist.insert(u, d + 1);
                queue.push_back(u);
            }
        }
    }
    (far.0, dist.len(), far.1)
}
