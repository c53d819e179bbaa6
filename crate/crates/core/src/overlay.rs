//! The dynamic peer network built on top of the template.
//!
//! Every peer covers one template label (its node-id). Two peers are overlay
//! neighbors when they cover the same label or template-adjacent labels. While
//! a resize is in flight peers may sit at different dimensions; labels are
//! then compared after projecting both onto the smaller dimension (see
//! [`VertexLabel::project_to`]), which reduces to the plain rule when all
//! peers agree on the dimension.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::template::{self, TemplateParams, VertexLabel};
use crate::Time;

/// Largest dimension the overlay keeps a dense occupancy index for.
pub const MAX_OVERLAY_DIM: u8 = 16;

/// Largest dimension gap for which cross-dimension adjacency is resolved.
const MAX_DIM_GAP: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PeerId(pub u64);

impl fmt::Display for PeerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// An opaque data key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DataKey(Vec<u8>);

impl DataKey {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Result<Self> {
        let bytes = bytes.into();
        if bytes.is_empty() {
            return Err(Error::Structural("empty data key".into()));
        }
        Ok(Self(bytes))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn home_label(&self, dim: u8) -> Result<VertexLabel> {
        hash_key(self, dim)
    }
}

/// Maps a key onto a label of dimension `dim`.
///
/// The word is the first `dim` bits of the SHA-256 digest, so the label at
/// `dim - 1` agrees with it on every word bit but the last. The cycle position
/// is the next 64 digest bits reduced modulo `dim`, plus one.
pub fn hash_key(key: &DataKey, dim: u8) -> Result<VertexLabel> {
    if !(2..=template::MAX_LABEL_DIM).contains(&dim) {
        return Err(Error::Structural(format!("cannot hash to dimension {dim}")));
    }
    let digest = Sha256::digest(key.as_bytes());
    let head = u64::from_be_bytes(digest[0..8].try_into().expect("digest is 32 bytes"));
    let tail = u64::from_be_bytes(digest[8..16].try_into().expect("digest is 32 bytes"));
    let word = head >> (64 - dim as u32);
    let pos = (tail % dim as u64) as u8 + 1;
    VertexLabel::new(word, pos, dim)
}

/// Dimension used for a network of expected stable size `n`:
/// `ceil(log2(n / log2(n)^2))`.
pub fn dimension_for(n: f64) -> Result<u8> {
    if !(n >= 16.0) || !n.is_finite() {
        return Err(Error::Config(format!("stable size {n} is below 16")));
    }
    let lg = n.log2();
    let r = (n / (lg * lg)).log2().ceil();
    if r < 2.0 {
        return Err(Error::Config(format!(
            "stable size {n} is too small for a dimension of at least 2"
        )));
    }
    if r > MAX_OVERLAY_DIM as f64 {
        return Err(Error::Config(format!(
            "stable size {n} needs dimension {r}, above the supported {MAX_OVERLAY_DIM}"
        )));
    }
    Ok(r as u8)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeerNode {
    pub peer_id: PeerId,
    pub node_id: VertexLabel,
    pub arrival_time: Time,
    pub scheduled_departure: Time,
    pub stored_keys: BTreeSet<DataKey>,
    slot: usize,
}

impl PeerNode {
    pub fn new(
        peer_id: PeerId,
        node_id: VertexLabel,
        arrival_time: Time,
        scheduled_departure: Time,
    ) -> Self {
        Self {
            peer_id,
            node_id,
            arrival_time,
            scheduled_departure,
            stored_keys: BTreeSet::new(),
            slot: usize::MAX,
        }
    }

    #[inline]
    pub fn dim(&self) -> u8 {
        self.node_id.dim()
    }
}

/// A bucket of the occupancy index: one label at one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BucketRef {
    pub dim: u8,
    pub index: usize,
}

impl BucketRef {
    pub fn of(label: VertexLabel) -> Self {
        Self {
            dim: label.dim(),
            index: label.index(),
        }
    }

    pub fn label(&self) -> VertexLabel {
        VertexLabel::from_index(self.index, self.dim).expect("bucket refers to a valid label")
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    buckets: Vec<Vec<PeerId>>,
    occupied: usize,
    peers: usize,
}

impl Layer {
    fn new(dim: u8) -> Self {
        Self {
            buckets: vec![Vec::new(); template::vertex_count(dim)],
            occupied: 0,
            peers: 0,
        }
    }

    fn insert(&mut self, index: usize, id: PeerId) {
        let bucket = &mut self.buckets[index];
        if bucket.is_empty() {
            self.occupied += 1;
        }
        match bucket.binary_search(&id) {
            Ok(_) => unreachable!("peer {id} indexed twice"),
            Err(at) => bucket.insert(at, id),
        }
        self.peers += 1;
    }

    fn remove(&mut self, index: usize, id: PeerId) {
        let bucket = &mut self.buckets[index];
        let at = bucket
            .binary_search(&id)
            .expect("peer present in its bucket");
        bucket.remove(at);
        if bucket.is_empty() {
            self.occupied -= 1;
        }
        self.peers -= 1;
    }
}

/// Cumulative message and hop accounting, split by cause.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CostCounters {
    pub join_routing_messages: u64,
    pub join_table_messages: u64,
    /// Routing messages charged to departures. Departures never route.
    pub departure_routing_messages: u64,
    pub handoff_messages: u64,
    pub insert_messages: u64,
    pub search_messages: u64,
    pub rehome_messages: u64,
    pub hops: u64,
    pub join_failures: u64,
    pub insert_failures: u64,
    pub search_hole_failures: u64,
    pub search_data_lost: u64,
    pub cross_dim_search_failures: u64,
    pub holes_formed: u64,
    pub orphaned_keys: u64,
}

impl CostCounters {
    pub fn total_messages(&self) -> u64 {
        self.join_routing_messages
            + self.join_table_messages
            + self.departure_routing_messages
            + self.handoff_messages
            + self.insert_messages
            + self.search_messages
            + self.rehome_messages
    }
}

/// Result of forwarding along a bit-fixing route over live coverers.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteOutcome {
    /// Forwarding peers, one per route vertex after the source.
    pub forwarders: Vec<PeerId>,
    pub hops: usize,
    /// First route vertex without a live coverer.
    pub hole: Option<VertexLabel>,
    /// The route passed through a peer of a different dimension.
    pub crossed_dims: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JoinReport {
    pub hops: usize,
    pub messages: usize,
    /// Neighbor discovery reached the new peer's label.
    pub routed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeaveReport {
    pub node_id: VertexLabel,
    pub keys_moved: usize,
    pub recipient: Option<PeerId>,
    pub hole_formed: bool,
    pub orphaned: usize,
    /// Always zero.
    pub routing_messages: usize,
    pub handoff_messages: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertStatus {
    Stored(PeerId),
    HoleOnRoute,
    HoleAtHome,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InsertReport {
    pub status: InsertStatus,
    pub hops: usize,
    pub home: VertexLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchStatus {
    Found(PeerId),
    HoleOnRoute,
    /// The home label is covered but no coverer holds the key.
    DataLost,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchResult {
    pub status: SearchStatus,
    pub hops: usize,
    pub messages: usize,
    pub path: Vec<PeerId>,
    pub crossed_dims: bool,
}

impl SearchResult {
    pub fn found(&self) -> bool {
        matches!(self.status, SearchStatus::Found(_))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RehomeReport {
    pub kept: usize,
    pub moved: usize,
    /// Keys with no holder yet; they stay put until a later attempt.
    pub pending: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlayState {
    peers: HashMap<PeerId, PeerNode>,
    live: Vec<PeerId>,
    layers: Vec<Option<Layer>>,
    params: TemplateParams,
    pub counters: CostCounters,
}

impl OverlayState {
    /// An empty overlay whose peers start at dimension `dim`.
    pub fn new(dim: u8) -> Result<Self> {
        if dim < 2 || dim > MAX_OVERLAY_DIM {
            return Err(Error::Config(format!(
                "overlay dimension {dim} outside 2..={MAX_OVERLAY_DIM}"
            )));
        }
        Ok(Self {
            peers: HashMap::new(),
            live: Vec::new(),
            layers: vec![None; MAX_OVERLAY_DIM as usize + 1],
            params: TemplateParams::new(dim)?,
            counters: CostCounters::default(),
        })
    }

    pub fn params(&self) -> &TemplateParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.live.len()
    }

    pub fn is_empty(&self) -> bool {
        self.live.is_empty()
    }

    pub fn contains(&self, id: PeerId) -> bool {
        self.peers.contains_key(&id)
    }

    pub fn peer(&self, id: PeerId) -> Option<&PeerNode> {
        self.peers.get(&id)
    }

    fn live_peer(&self, id: PeerId) -> Result<&PeerNode> {
        self.peers.get(&id).ok_or(Error::UnknownPeer(id))
    }

    /// Live peers in an arbitrary but deterministic order.
    pub fn live_peers(&self) -> &[PeerId] {
        &self.live
    }

    pub fn random_live_peer<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<PeerId> {
        if self.live.is_empty() {
            None
        } else {
            Some(self.live[rng.random_range(0..self.live.len())])
        }
    }

    /// Dimensions that currently have at least one live peer, ascending.
    pub fn dims_present(&self) -> impl Iterator<Item = u8> + '_ {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.as_ref().is_some_and(|l| l.peers > 0))
            .map(|(d, _)| d as u8)
    }

    /// The shared dimension when every live peer agrees on one.
    pub fn single_dim(&self) -> Option<u8> {
        let mut dims = self.dims_present();
        let first = dims.next()?;
        dims.next().is_none().then_some(first)
    }

    pub fn peers_at_dim(&self, dim: u8) -> usize {
        self.layer(dim).map_or(0, |l| l.peers)
    }

    /// Dimension held by the most live peers; ties go to the smaller one.
    pub fn majority_dim(&self) -> u8 {
        let mut best = (0, self.params.dim);
        for d in self.dims_present() {
            let n = self.peers_at_dim(d);
            if n > best.0 {
                best = (n, d);
            }
        }
        best.1
    }

    pub fn mean_dim(&self) -> f64 {
        if self.live.is_empty() {
            return self.params.dim as f64;
        }
        let total: usize = self
            .dims_present()
            .map(|d| d as usize * self.peers_at_dim(d))
            .sum();
        total as f64 / self.live.len() as f64
    }

    fn layer(&self, dim: u8) -> Option<&Layer> {
        self.layers.get(dim as usize).and_then(|l| l.as_ref())
    }

    /// True when every live peer sits at `dim` (and there is at least one).
    #[inline]
    fn uniform_at(&self, dim: u8) -> bool {
        self.layer(dim)
            .is_some_and(|l| l.peers > 0 && l.peers == self.live.len())
    }

    /// Peers whose node-id is exactly `label`, ascending by id.
    pub fn coverers(&self, label: VertexLabel) -> &[PeerId] {
        self.layer(label.dim())
            .map_or(&[], |l| &l.buckets[label.index()])
    }

    pub fn bucket(&self, b: BucketRef) -> &[PeerId] {
        self.layer(b.dim).map_or(&[], |l| &l.buckets[b.index])
    }

    /// Buckets at other dimensions whose peers cover `label` once labels are
    /// projected onto the smaller dimension. Includes the exact bucket.
    fn covering_buckets(&self, label: VertexLabel, out: &mut Vec<BucketRef>) {
        let d = label.dim();
        for dp in self.dims_present() {
            if dp <= d {
                out.push(BucketRef::of(label.project_to(dp)));
            } else if dp - d <= MAX_DIM_GAP {
                preimages(label, dp, out);
            }
        }
    }

    /// Live peers covering `label`, allowing for peers at other dimensions.
    pub fn general_coverers(&self, label: VertexLabel) -> Vec<PeerId> {
        if self.uniform_at(label.dim()) {
            return self.coverers(label).to_vec();
        }
        let mut buckets = Vec::new();
        self.covering_buckets(label, &mut buckets);
        let mut out: Vec<PeerId> = buckets
            .iter()
            .flat_map(|b| self.bucket(*b).iter().copied())
            .collect();
        out.sort_unstable();
        out
    }

    /// Lowest-id live peer covering `label`.
    pub fn lowest_coverer(&self, label: VertexLabel) -> Option<PeerId> {
        if self.uniform_at(label.dim()) {
            return self.coverers(label).first().copied();
        }
        let mut buckets = Vec::new();
        self.covering_buckets(label, &mut buckets);
        buckets
            .iter()
            .filter_map(|b| self.bucket(*b).first().copied())
            .min()
    }

    pub fn is_occupied(&self, label: VertexLabel) -> bool {
        self.lowest_coverer(label).is_some()
    }

    /// Number of occupied labels at `dim`, counting only peers at that dimension.
    pub fn occupied_labels(&self, dim: u8) -> usize {
        self.layer(dim).map_or(0, |l| l.occupied)
    }

    /// Occupied buckets adjacent to or equal to `label` under the projection rule.
    pub fn neighbor_buckets(&self, label: VertexLabel, out: &mut Vec<BucketRef>) {
        out.clear();
        let d = label.dim();
        let mut closed = [label; 4];
        let mut n = 1;
        for u in template::neighbors(label) {
            closed[n] = u;
            n += 1;
        }
        let closed = &closed[..n];
        let push = |out: &mut Vec<BucketRef>, b: BucketRef| {
            if !self.bucket(b).is_empty() {
                out.push(b);
            }
        };
        for dp in self.dims_present() {
            if dp == d {
                for &v in closed {
                    push(out, BucketRef::of(v));
                }
            } else if dp < d {
                let p = label.project_to(dp);
                push(out, BucketRef::of(p));
                for u in template::neighbors(p) {
                    push(out, BucketRef::of(u));
                }
            } else if dp - d <= MAX_DIM_GAP {
                let mut pre = Vec::new();
                for &v in closed {
                    preimages(v, dp, &mut pre);
                }
                for b in pre {
                    push(out, b);
                }
            }
        }
    }

    /// Overlay degree of a live peer.
    pub fn degree(&self, id: PeerId) -> Result<usize> {
        let label = self.live_peer(id)?.node_id;
        Ok(self.label_degree(label) - 1)
    }

    /// Number of live peers adjacent to or covering `label`, the covering peer included.
    fn label_degree(&self, label: VertexLabel) -> usize {
        if self.uniform_at(label.dim()) {
            let layer = self.layer(label.dim()).expect("layer of a live peer");
            let mut total = layer.buckets[label.index()].len();
            for u in template::neighbors(label) {
                total += layer.buckets[u.index()].len();
            }
            return total;
        }
        let mut buckets = Vec::new();
        self.neighbor_buckets(label, &mut buckets);
        buckets.iter().map(|b| self.bucket(*b).len()).sum()
    }

    /// Overlay neighbors of a live peer, ascending by id.
    pub fn overlay_neighbors(&self, id: PeerId) -> Result<Vec<PeerId>> {
        let label = self.live_peer(id)?.node_id;
        let mut buckets = Vec::new();
        self.neighbor_buckets(label, &mut buckets);
        let mut out: Vec<PeerId> = buckets
            .iter()
            .flat_map(|b| self.bucket(*b).iter().copied())
            .filter(|&p| p != id)
            .collect();
        out.sort_unstable();
        Ok(out)
    }

    /// Uniformly random overlay neighbor of a live peer.
    pub fn random_neighbor<R: Rng + ?Sized>(
        &self,
        id: PeerId,
        rng: &mut R,
    ) -> Result<Option<PeerId>> {
        let label = self.live_peer(id)?.node_id;
        let mut buckets = Vec::new();
        self.neighbor_buckets(label, &mut buckets);
        let total: usize = buckets.iter().map(|b| self.bucket(*b).len()).sum();
        if total <= 1 {
            return Ok(None);
        }
        // The peer itself sits in one of the buckets; draw among the others.
        let own = BucketRef::of(label);
        let mut pick = rng.random_range(0..total - 1);
        for b in &buckets {
            let peers = self.bucket(*b);
            let usable = if *b == own {
                peers.len() - 1
            } else {
                peers.len()
            };
            if pick < usable {
                if *b == own {
                    let others = peers.iter().copied().filter(|&p| p != id);
                    return Ok(others.into_iter().nth(pick));
                }
                return Ok(Some(peers[pick]));
            }
            pick -= usable;
        }
        unreachable!("neighbor draw within total")
    }

    /// Whether two peers share an overlay edge.
    pub fn are_adjacent(&self, a: PeerId, b: PeerId) -> bool {
        match (self.peers.get(&a), self.peers.get(&b)) {
            (Some(pa), Some(pb)) if a != b => labels_adjacent(pa.node_id, pb.node_id),
            _ => false,
        }
    }

    fn index_peer(&mut self, id: PeerId, label: VertexLabel) {
        let layer =
            self.layers[label.dim() as usize].get_or_insert_with(|| Layer::new(label.dim()));
        layer.insert(label.index(), id);
    }

    fn unindex_peer(&mut self, id: PeerId, label: VertexLabel) {
        let layer = self.layers[label.dim() as usize]
            .as_mut()
            .expect("layer of an indexed peer");
        layer.remove(label.index(), id);
    }

    fn register(&mut self, mut peer: PeerNode) -> Result<()> {
        if self.peers.contains_key(&peer.peer_id) {
            return Err(Error::Structural(format!(
                "peer {} registered twice",
                peer.peer_id
            )));
        }
        if peer.dim() > MAX_OVERLAY_DIM || peer.dim() < 2 {
            return Err(Error::Structural(format!(
                "peer dimension {} unsupported",
                peer.dim()
            )));
        }
        if !(peer.scheduled_departure >= peer.arrival_time) {
            return Err(Error::Structural(format!(
                "peer {} departs at {} before arriving at {}",
                peer.peer_id, peer.scheduled_departure, peer.arrival_time
            )));
        }
        peer.slot = self.live.len();
        self.live.push(peer.peer_id);
        self.index_peer(peer.peer_id, peer.node_id);
        self.peers.insert(peer.peer_id, peer);
        Ok(())
    }

    fn unregister(&mut self, id: PeerId) -> Result<PeerNode> {
        let peer = self.peers.remove(&id).ok_or(Error::UnknownPeer(id))?;
        let slot = peer.slot;
        self.live.swap_remove(slot);
        if let Some(&moved) = self.live.get(slot) {
            self.peers.get_mut(&moved).expect("live peer").slot = slot;
        }
        self.unindex_peer(id, peer.node_id);
        Ok(peer)
    }

    /// Forwards from `src` towards `dst` along the bit-fixing route at the
    /// dimension of `src`, picking the lowest-id live coverer at each vertex.
    /// With `check_last == false` the final vertex may be a hole.
    pub fn route(&self, src: VertexLabel, dst: VertexLabel, check_last: bool) -> RouteOutcome {
        let dst = dst.project_to(src.dim());
        let path = template::bit_fix_route(src, dst).expect("equal dimensions after projection");
        let mut out = RouteOutcome {
            forwarders: Vec::with_capacity(path.len()),
            hops: path.len() - 1,
            hole: None,
            crossed_dims: false,
        };
        let last = path.len() - 1;
        let mixed = !self.uniform_at(src.dim());
        for (k, v) in path.iter().enumerate().skip(1) {
            if k == last && !check_last {
                break;
            }
            match self.lowest_coverer(*v) {
                Some(p) => {
                    if mixed && self.peers[&p].dim() != src.dim() {
                        out.crossed_dims = true;
                    }
                    out.forwarders.push(p);
                }
                None => {
                    out.hole = Some(*v);
                    out.hops = k - 1;
                    return out;
                }
            }
        }
        out
    }

    /// Adds `peer` to the network through `entry`.
    ///
    /// The joining peer routes from the entry point's label to its own to
    /// discover its neighbors, then sends one table update to each neighbor.
    /// If the route hits a hole the peer is still indexed under its label but
    /// the report says it was not routed; callers retry discovery with
    /// [`OverlayState::rediscover`].
    pub fn join(&mut self, peer: PeerNode, entry: Option<PeerId>) -> Result<JoinReport> {
        let id = peer.peer_id;
        let label = peer.node_id;
        let entry_label = match entry {
            Some(e) => Some(self.live_peer(e)?.node_id),
            None if self.live.is_empty() => None,
            None => {
                return Err(Error::Structural(
                    "join into a non-empty network needs an entry point".into(),
                ))
            }
        };
        self.register(peer)?;
        match entry_label {
            None => Ok(JoinReport {
                hops: 0,
                messages: 0,
                routed: true,
            }),
            Some(from) => Ok(self.discover(id, label, from.project_to(label.dim()))),
        }
    }

    /// Retries neighbor discovery for a peer whose join route failed.
    pub fn rediscover(&mut self, id: PeerId, entry: PeerId) -> Result<JoinReport> {
        let label = self.live_peer(id)?.node_id;
        let from = self.live_peer(entry)?.node_id.project_to(label.dim());
        Ok(self.discover(id, label, from))
    }

    fn discover(&mut self, id: PeerId, label: VertexLabel, from: VertexLabel) -> JoinReport {
        let route = self.route(from, label, false);
        self.counters.join_routing_messages += route.hops as u64;
        self.counters.hops += route.hops as u64;
        if route.hole.is_some() {
            self.counters.join_failures += 1;
            return JoinReport {
                hops: route.hops,
                messages: route.hops,
                routed: false,
            };
        }
        let table = self.degree(id).expect("peer just registered");
        self.counters.join_table_messages += table as u64;
        JoinReport {
            hops: route.hops,
            messages: route.hops + table,
            routed: true,
        }
    }

    /// Removes a peer and hands its keys to a random peer with the same node-id.
    ///
    /// While dimensions are mixed and no peer shares the node-id, each key
    /// goes to a random holder of its home at another dimension instead.
    pub fn leave<R: Rng + ?Sized>(&mut self, id: PeerId, rng: &mut R) -> Result<LeaveReport> {
        let peer = self.unregister(id)?;
        let label = peer.node_id;
        let keys = peer.stored_keys;
        let mut report = LeaveReport {
            node_id: label,
            keys_moved: 0,
            recipient: None,
            hole_formed: false,
            orphaned: 0,
            routing_messages: 0,
            handoff_messages: 0,
        };
        if self.coverers(label).is_empty() && self.general_coverers(label).is_empty() {
            report.hole_formed = true;
            self.counters.holes_formed += 1;
        }
        let same = self.coverers(label);
        if keys.is_empty() {
            return Ok(report);
        }
        if !same.is_empty() {
            let to = same[rng.random_range(0..same.len())];
            report.keys_moved = keys.len();
            report.recipient = Some(to);
            report.handoff_messages = 1;
            self.peers
                .get_mut(&to)
                .expect("recipient is live")
                .stored_keys
                .extend(keys);
            self.counters.handoff_messages += 1;
            return Ok(report);
        }
        let mut recipients = BTreeSet::new();
        for key in keys {
            let mut holders = self.key_holders(&key)?;
            if holders.is_empty() {
                holders = self.projected_holders(&key)?;
            }
            if holders.is_empty() {
                report.orphaned += 1;
                continue;
            }
            let to = holders[rng.random_range(0..holders.len())];
            recipients.insert(to);
            report.keys_moved += 1;
            self.peers
                .get_mut(&to)
                .expect("holder is live")
                .stored_keys
                .insert(key);
        }
        report.recipient = recipients.iter().next().copied();
        report.handoff_messages = recipients.len();
        self.counters.handoff_messages += recipients.len() as u64;
        self.counters.orphaned_keys += report.orphaned as u64;
        Ok(report)
    }

    /// Live peers entitled to hold `key`: those whose node-id is the key's
    /// hash at their own dimension. Ascending by id.
    pub fn key_holders(&self, key: &DataKey) -> Result<Vec<PeerId>> {
        let mut out = Vec::new();
        for d in self.dims_present() {
            out.extend_from_slice(self.coverers(hash_key(key, d)?));
        }
        out.sort_unstable();
        Ok(out)
    }

    /// Live peers covering the key's home at some present dimension under
    /// the projection rule. Ascending by id.
    pub fn projected_holders(&self, key: &DataKey) -> Result<Vec<PeerId>> {
        let mut out = Vec::new();
        for d in self.dims_present() {
            out.extend(self.general_coverers(hash_key(key, d)?));
        }
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    /// Every stored key sits at a peer entitled to hold it. With a single
    /// dimension present that is the key's home; while dimensions are mixed
    /// a peer covering some home by projection also qualifies.
    pub fn misplaced_key(&self) -> Option<(PeerId, DataKey)> {
        let mixed = self.single_dim().is_none();
        for id in &self.live {
            let peer = &self.peers[id];
            for key in &peer.stored_keys {
                if hash_key(key, peer.dim()).ok() == Some(peer.node_id) {
                    continue;
                }
                let held = mixed
                    && self
                        .projected_holders(key)
                        .is_ok_and(|h| h.binary_search(id).is_ok());
                if !held {
                    return Some((*id, key.clone()));
                }
            }
        }
        None
    }

    /// Other dimensions present, nearest to `dim` first.
    fn other_dims(&self, dim: u8) -> Vec<u8> {
        let mut dims: Vec<u8> = self.dims_present().filter(|&d| d != dim).collect();
        dims.sort_by_key(|&d| (d.abs_diff(dim), d));
        dims
    }

    /// Routes `key` from `origin` to its home label and stores it at a random coverer.
    ///
    /// The home is the key's hash at the origin's dimension. If no peer at
    /// that dimension covers it exactly (possible only while dimensions are
    /// mixed), the insert continues to the key's home at the other
    /// dimensions present, nearest first.
    pub fn insert_data<R: Rng + ?Sized>(
        &mut self,
        key: DataKey,
        origin: PeerId,
        rng: &mut R,
    ) -> Result<InsertReport> {
        let from = self.live_peer(origin)?.node_id;
        let home = hash_key(&key, from.dim())?;
        let route = self.route(from, home, true);
        let mut hops = route.hops;
        let mut status = if route.hole.is_some() {
            InsertStatus::HoleOnRoute
        } else {
            InsertStatus::HoleAtHome
        };
        if route.hole.is_none() {
            let mut target = self.pick(self.coverers(home), rng);
            if target.is_none() {
                for d in self.other_dims(from.dim()) {
                    let alt = hash_key(&key, d)?;
                    let detour = self.route(home.project_to(d), alt, true);
                    hops += detour.hops;
                    if detour.hole.is_some() {
                        continue;
                    }
                    target = self.pick(self.coverers(alt), rng);
                    if target.is_some() {
                        break;
                    }
                }
            }
            if let Some(t) = target {
                self.peers
                    .get_mut(&t)
                    .expect("coverer is live")
                    .stored_keys
                    .insert(key);
                status = InsertStatus::Stored(t);
            }
        }
        self.counters.insert_messages += hops as u64;
        self.counters.hops += hops as u64;
        if !matches!(status, InsertStatus::Stored(_)) {
            self.counters.insert_failures += 1;
        }
        Ok(InsertReport { status, hops, home })
    }

    fn pick<R: Rng + ?Sized>(&self, peers: &[PeerId], rng: &mut R) -> Option<PeerId> {
        (!peers.is_empty()).then(|| peers[rng.random_range(0..peers.len())])
    }

    /// Looks `key` up from `origin`.
    ///
    /// Forwards along the bit-fixing route, then asks the home label's
    /// coverers in ascending id order until one holds the key. `hops` counts
    /// routing hops only; the clique query shows up in `messages` and as the
    /// last entry of `path` when the holder is not the final forwarder.
    ///
    /// While peers disagree on the dimension, a key may be homed at another
    /// dimension's hash. If the home clique does not hold it, the search
    /// continues from the home label to the key's home at every other
    /// dimension present, nearest dimension first.
    pub fn search(&mut self, origin: PeerId, key: &DataKey) -> Result<SearchResult> {
        let from = self.live_peer(origin)?.node_id;
        let home = hash_key(key, from.dim())?;
        let route = self.route(from, home, true);
        let mut result = SearchResult {
            status: SearchStatus::HoleOnRoute,
            hops: route.hops,
            messages: route.hops,
            path: route.forwarders,
            crossed_dims: route.crossed_dims,
        };
        if route.hole.is_none() {
            let last = *result.path.last().unwrap_or(&origin);
            result.status = self.ask_clique(home, key, last, from.dim(), &mut result);
            if result.status == SearchStatus::DataLost && self.single_dim().is_none() {
                let mut saw_hole = false;
                for d in self.other_dims(from.dim()) {
                    let alt = hash_key(key, d)?;
                    let start = home.project_to(d);
                    let detour = self.route(start, alt, true);
                    result.hops += detour.hops;
                    result.messages += detour.hops;
                    result.crossed_dims = true;
                    let last = *detour
                        .forwarders
                        .last()
                        .unwrap_or(result.path.last().unwrap_or(&origin));
                    result.path.extend(detour.forwarders);
                    if detour.hole.is_some() {
                        saw_hole = true;
                        continue;
                    }
                    result.status = self.ask_clique(alt, key, last, from.dim(), &mut result);
                    if result.found() {
                        break;
                    }
                }
                if !result.found() && saw_hole {
                    result.status = SearchStatus::HoleOnRoute;
                }
            }
        }
        self.counters.hops += result.hops as u64;
        self.counters.search_messages += result.messages as u64;
        match result.status {
            SearchStatus::Found(_) => {}
            SearchStatus::HoleOnRoute => self.counters.search_hole_failures += 1,
            SearchStatus::DataLost => self.counters.search_data_lost += 1,
        }
        if !result.found() && (result.crossed_dims || self.single_dim().is_none()) {
            self.counters.cross_dim_search_failures += 1;
        }
        Ok(result)
    }

    /// Asks the peers on `home` for `key` in ascending id order: exact
    /// coverers, then while dimensions are mixed those covering by projection.
    fn ask_clique(
        &self,
        home: VertexLabel,
        key: &DataKey,
        last: PeerId,
        dim: u8,
        result: &mut SearchResult,
    ) -> SearchStatus {
        let mut coverers = self.coverers(home).to_vec();
        if self.single_dim().is_none() {
            let exact = coverers.len();
            for p in self.general_coverers(home) {
                if !coverers[..exact].contains(&p) {
                    coverers.push(p);
                }
            }
        }
        for (asked, p) in coverers.iter().enumerate() {
            if self.peers[p].stored_keys.contains(key) {
                if *p != last {
                    result.messages += asked + 1;
                    result.path.push(*p);
                }
                if self.peers[p].dim() != dim {
                    result.crossed_dims = true;
                }
                return SearchStatus::Found(*p);
            }
        }
        result.messages += coverers.len();
        SearchStatus::DataLost
    }

    /// Moves a live peer to a new node-id (used by dimension changes).
    pub fn relabel(&mut self, id: PeerId, label: VertexLabel) -> Result<VertexLabel> {
        if label.dim() > MAX_OVERLAY_DIM || label.dim() < 2 {
            return Err(Error::Structural(format!(
                "peer dimension {} unsupported",
                label.dim()
            )));
        }
        let old = self.live_peer(id)?.node_id;
        self.unindex_peer(id, old);
        self.index_peer(id, label);
        self.peers.get_mut(&id).expect("live peer").node_id = label;
        Ok(old)
    }

    /// Re-hashes a peer's keys at its current dimension and moves every key
    /// whose home the peer no longer is to a random peer on that home,
    /// falling back to the key's home at other dimensions. Keys with
    /// neither stay with the peer.
    pub fn rehome_keys<R: Rng + ?Sized>(
        &mut self,
        id: PeerId,
        rng: &mut R,
    ) -> Result<RehomeReport> {
        let peer = self.peers.get_mut(&id).ok_or(Error::UnknownPeer(id))?;
        let label = peer.node_id;
        let keys = std::mem::take(&mut peer.stored_keys);
        let mut report = RehomeReport::default();
        let mut keep = BTreeSet::new();
        for key in keys {
            let home = hash_key(&key, label.dim())?;
            if home == label {
                report.kept += 1;
                keep.insert(key);
                continue;
            }
            let mut to = self.pick(self.coverers(home), rng);
            if to.is_none() {
                let holders = self.key_holders(&key)?;
                to = self.pick(&holders, rng);
            }
            match to {
                None => {
                    report.pending += 1;
                    keep.insert(key);
                }
                Some(to) => {
                    self.peers
                        .get_mut(&to)
                        .expect("holder is live")
                        .stored_keys
                        .insert(key);
                    report.moved += 1;
                    self.counters.rehome_messages += 1;
                }
            }
        }
        self.peers.get_mut(&id).expect("live peer").stored_keys = keep;
        Ok(report)
    }

    /// Rebuilds the occupancy index from the peer table and returns the first
    /// label whose stored bucket disagrees with the rebuilt one.
    pub fn occupancy_mismatch(&self) -> Option<VertexLabel> {
        let mut rebuilt: Vec<Option<Layer>> = vec![None; self.layers.len()];
        for id in &self.live {
            let label = self.peers[id].node_id;
            rebuilt[label.dim() as usize]
                .get_or_insert_with(|| Layer::new(label.dim()))
                .insert(label.index(), *id);
        }
        for (d, (stored, fresh)) in self.layers.iter().zip(&rebuilt).enumerate() {
            let dim = d as u8;
            let n = if d == 0 {
                0
            } else {
                template::vertex_count(dim)
            };
            for index in 0..n {
                let a = stored.as_ref().map_or(&[][..], |l| &l.buckets[index][..]);
                let b = fresh.as_ref().map_or(&[][..], |l| &l.buckets[index][..]);
                if a != b {
                    return Some(VertexLabel::from_index(index, dim).expect("valid index"));
                }
            }
            let counts = |l: &Option<Layer>| l.as_ref().map_or((0, 0), |l| (l.occupied, l.peers));
            if counts(stored) != counts(fresh) {
                return Some(VertexLabel::from_index(0, dim).expect("valid index"));
            }
        }
        None
    }

    /// Adds a phantom entry to a bucket so index checks have something to find.
    #[cfg(any(test, feature = "test-hooks"))]
    pub fn inject_occupancy_fault(&mut self, label: VertexLabel) {
        let layer =
            self.layers[label.dim() as usize].get_or_insert_with(|| Layer::new(label.dim()));
        layer.buckets[label.index()].push(PeerId(u64::MAX));
    }
}

/// Overlay adjacency between two node-ids, after projecting both onto the
/// smaller dimension.
pub fn labels_adjacent(a: VertexLabel, b: VertexLabel) -> bool {
    let d = a.dim().min(b.dim());
    let (pa, pb) = (a.project_to(d), b.project_to(d));
    pa == pb || template::adjacent(pa, pb)
}

/// Buckets at dimension `dp > label.dim()` whose labels project onto `label`.
fn preimages(label: VertexLabel, dp: u8, out: &mut Vec<BucketRef>) {
    let d = label.dim();
    let gap = dp - d;
    let positions = if label.cycle_pos() == d {
        d..=dp
    } else {
        label.cycle_pos()..=label.cycle_pos()
    };
    for suffix in 0..(1u64 << gap) {
        let word = (label.word() << gap) | suffix;
        for pos in positions.clone() {
            let v = VertexLabel::new(word, pos, dp).expect("preimage label is valid");
            out.push(BucketRef::of(v));
        }
    }
}
