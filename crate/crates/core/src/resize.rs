//! Decentralized adjustment of the template dimension.
//!
//! Each peer periodically samples the overlay degree of a few nearby peers.
//! An average well below the stable degree means the network shrank and the
//! peer drops the last bit of its node-id; well above means it grew and the
//! peer appends a random bit. Either way it tells its neighbors, and a peer
//! that hears the same suggestion from enough distinct neighbors follows it
//! regardless of its own sample.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;

use crate::error::{Error, Result};
use crate::overlay::{OverlayState, PeerId, RehomeReport};
use crate::template::VertexLabel;
use crate::Time;

/// What happens to the cycle position when the dimension changes by one.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum BoundaryRule {
    /// Position r is clamped to r-1 on decrease; increase keeps the position.
    Clamp,
    /// Position r moves to a uniform position in [1, r-1] on decrease; on
    /// increase the new position r+1 is taken with probability 1/(r+1).
    /// Keeps positions uniform, so no cycle position ends up doubled or empty.
    #[default]
    Spread,
}

impl BoundaryRule {
    /// `label` with its last bit dropped.
    pub fn shrink<R: Rng + ?Sized>(self, label: VertexLabel, rng: &mut R) -> Result<VertexLabel> {
        let next = label.drop_last_bit()?;
        if self == BoundaryRule::Spread && label.cycle_pos() == label.dim() {
            return VertexLabel::new(next.word(), rng.random_range(1..=next.dim()), next.dim());
        }
        Ok(next)
    }

    /// `label` with one fair random bit appended.
    pub fn grow<R: Rng + ?Sized>(self, label: VertexLabel, rng: &mut R) -> Result<VertexLabel> {
        let next = label.append_bit(rng.random::<bool>())?;
        if self == BoundaryRule::Spread && rng.random_range(0..next.dim()) == 0 {
            return VertexLabel::new(next.word(), next.dim(), next.dim());
        }
        Ok(next)
    }
}

impl std::str::FromStr for BoundaryRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clamp" => Ok(BoundaryRule::Clamp),
            "spread" => Ok(BoundaryRule::Spread),
            _ => Err(Error::Config(format!(
                "unknown boundary rule {s:?}; expected clamp or spread"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResizePolicy {
    /// Target average overlay degree.
    pub stable_degree: f64,
    /// Half-width of the dead band around `stable_degree`.
    pub buffer: f64,
    /// Time between two inspections by the same peer.
    pub inspect_interval: Time,
    /// Distinct senders needed before a suggestion is adopted.
    pub suggestion_threshold: usize,
    /// Peers whose degree is sampled per inspection.
    pub sample_size: usize,
    pub boundary: BoundaryRule,
}

impl Default for ResizePolicy {
    fn default() -> Self {
        Self {
            stable_degree: 100.0,
            buffer: 65.0,
            inspect_interval: 250.0,
            suggestion_threshold: 5,
            sample_size: 8,
            boundary: BoundaryRule::Spread,
        }
    }
}

impl ResizePolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.buffer >= 0.0 && self.buffer < self.stable_degree) {
            return Err(Error::Config(format!(
                "buffer {} must lie in [0, stable_degree = {})",
                self.buffer, self.stable_degree
            )));
        }
        if self.suggestion_threshold == 0 {
            return Err(Error::Config(
                "suggestion_threshold must be at least 1".into(),
            ));
        }
        if self.sample_size == 0 {
            return Err(Error::Config("sample_size must be at least 1".into()));
        }
        if !(self.inspect_interval > 0.0 && self.inspect_interval.is_finite()) {
            return Err(Error::Config(format!(
                "inspect_interval must be positive, got {}",
                self.inspect_interval
            )));
        }
        Ok(())
    }

    /// Threshold decision for a sampled average degree.
    pub fn decide(&self, average_degree: f64) -> ResizeDecision {
        if average_degree < self.stable_degree - self.buffer {
            ResizeDecision::Decrease
        } else if average_degree > self.stable_degree + self.buffer {
            ResizeDecision::Increase
        } else {
            ResizeDecision::None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResizeDecision {
    Increase,
    Decrease,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuggestionMsg {
    pub from: PeerId,
    pub suggested_dim: u8,
}

/// Average degree over `sample_size` peers two random overlay steps away
/// from `peer`. With no more live peers than `sample_size`, all of them are
/// averaged instead.
pub fn sample_average_degree<R: Rng + ?Sized>(
    peer: PeerId,
    overlay: &OverlayState,
    policy: &ResizePolicy,
    rng: &mut R,
) -> Result<f64> {
    if overlay.peer(peer).is_none() {
        return Err(Error::UnknownPeer(peer));
    }
    if overlay.len() <= policy.sample_size {
        let total: usize = overlay
            .live_peers()
            .iter()
            .map(|&p| overlay.degree(p).expect("live peer"))
            .sum();
        return Ok(total as f64 / overlay.len() as f64);
    }
    let mut total = 0usize;
    for _ in 0..policy.sample_size {
        let first = overlay.random_neighbor(peer, rng)?;
        let sampled = match first {
            Some(n) => overlay.random_neighbor(n, rng)?.unwrap_or(n),
            None => overlay.random_live_peer(rng).expect("network is not empty"),
        };
        total += overlay.degree(sampled)?;
    }
    Ok(total as f64 / policy.sample_size as f64)
}

/// One inspection: sample, then apply the threshold rule.
pub fn inspect<R: Rng + ?Sized>(
    peer: PeerId,
    overlay: &OverlayState,
    policy: &ResizePolicy,
    rng: &mut R,
) -> Result<ResizeDecision> {
    let average = sample_average_degree(peer, overlay, policy, rng)?;
    Ok(policy.decide(average))
}

/// Drops the last node-id bit of `peer` and re-homes its keys.
pub fn apply_decrease<R: Rng + ?Sized>(
    overlay: &mut OverlayState,
    peer: PeerId,
    rule: BoundaryRule,
    rng: &mut R,
) -> Result<VertexLabel> {
    let label = overlay.peer(peer).ok_or(Error::UnknownPeer(peer))?.node_id;
    if label.dim() < 3 {
        return Err(Error::Structural(format!(
            "peer {peer} is at dimension {} and cannot shrink below 2",
            label.dim()
        )));
    }
    let next = rule.shrink(label, rng)?;
    overlay.relabel(peer, next)?;
    overlay.rehome_keys(peer, rng)?;
    Ok(next)
}

/// Appends one fair random bit to the node-id of `peer` and re-homes its keys.
pub fn apply_increase<R: Rng + ?Sized>(
    overlay: &mut OverlayState,
    peer: PeerId,
    rule: BoundaryRule,
    rng: &mut R,
) -> Result<VertexLabel> {
    let label = overlay.peer(peer).ok_or(Error::UnknownPeer(peer))?.node_id;
    let next = rule.grow(label, rng)?;
    overlay.relabel(peer, next)?;
    overlay.rehome_keys(peer, rng)?;
    Ok(next)
}

/// Dimension for a peer joining at `label` while a resize may be under way:
/// the mean dimension of the peers covering it, rounded half up.
pub fn join_dimension(overlay: &OverlayState, label: VertexLabel, fallback: u8) -> u8 {
    let coverers = overlay.general_coverers(label);
    if coverers.is_empty() {
        return fallback;
    }
    let dims: Vec<u8> = coverers
        .iter()
        .map(|p| overlay.peer(*p).expect("coverer is live").dim())
        .collect();
    round_mean_dim(&dims)
}

/// Mean of `dims` rounded half up.
pub fn round_mean_dim(dims: &[u8]) -> u8 {
    let sum: u64 = dims.iter().map(|&d| d as u64).sum();
    let n = dims.len() as u64;
    // floor(sum / n + 1/2) in integers.
    ((2 * sum + n) / (2 * n)) as u8
}

/// Moves `label` one step towards dimension `target`.
pub fn step_towards<R: Rng + ?Sized>(
    label: VertexLabel,
    target: u8,
    rule: BoundaryRule,
    rng: &mut R,
) -> Result<VertexLabel> {
    use std::cmp::Ordering;
    match target.cmp(&label.dim()) {
        Ordering::Less => rule.shrink(label, rng),
        Ordering::Greater => rule.grow(label, rng),
        Ordering::Equal => Ok(label),
    }
}

/// What a dimension change did.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionChange {
    pub peer: PeerId,
    pub old: VertexLabel,
    pub new: VertexLabel,
    pub rehome: RehomeReport,
    /// Suggestions to deliver, one per overlay neighbor after the change.
    pub suggestions: Vec<(PeerId, SuggestionMsg)>,
}

/// Per-peer suggestion bookkeeping plus protocol counters.
#[derive(Debug, Clone, Default)]
pub struct ResizeState {
    inbox: HashMap<PeerId, BTreeMap<u8, BTreeSet<PeerId>>>,
    changed_at: HashMap<PeerId, Time>,
    pub inspections: u64,
    pub self_triggered_changes: u64,
    pub adopted_changes: u64,
    pub suggestion_messages: u64,
    pub refused_changes: u64,
    /// Suggestions dropped because the receiver changed dimension less than
    /// one inspection interval earlier.
    pub held_suggestions: u64,
    /// Time of the first suggestion-driven change.
    pub first_adoption: Option<Time>,
}

impl ResizeState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forget(&mut self, peer: PeerId) {
        self.inbox.remove(&peer);
        self.changed_at.remove(&peer);
    }

    /// A peer keeps a new dimension for one inspection interval before it
    /// changes again, so opposite suggestion waves cannot flip it back and
    /// forth within one instant.
    fn holding(&self, peer: PeerId, policy: &ResizePolicy, now: Time) -> bool {
        self.changed_at
            .get(&peer)
            .is_some_and(|&t| now < t + policy.inspect_interval)
    }

    /// Number of distinct senders suggesting `dim` to `peer`.
    pub fn pending(&self, peer: PeerId, dim: u8) -> usize {
        self.inbox
            .get(&peer)
            .and_then(|m| m.get(&dim))
            .map_or(0, BTreeSet::len)
    }

    fn change<R: Rng + ?Sized>(
        &mut self,
        overlay: &mut OverlayState,
        peer: PeerId,
        next: VertexLabel,
        now: Time,
        rng: &mut R,
    ) -> Result<DimensionChange> {
        let old = overlay.peer(peer).ok_or(Error::UnknownPeer(peer))?.node_id;
        overlay.relabel(peer, next)?;
        let rehome = overlay.rehome_keys(peer, rng)?;
        self.inbox.remove(&peer);
        self.changed_at.insert(peer, now);
        let msg = SuggestionMsg {
            from: peer,
            suggested_dim: next.dim(),
        };
        let suggestions: Vec<_> = overlay
            .overlay_neighbors(peer)?
            .into_iter()
            .map(|n| (n, msg))
            .collect();
        self.suggestion_messages += suggestions.len() as u64;
        Ok(DimensionChange {
            peer,
            old,
            new: next,
            rehome,
            suggestions,
        })
    }

    /// Runs one inspection for `peer` and applies a non-trivial decision.
    pub fn inspect_and_apply<R: Rng + ?Sized>(
        &mut self,
        overlay: &mut OverlayState,
        peer: PeerId,
        policy: &ResizePolicy,
        now: Time,
        rng: &mut R,
    ) -> Result<Option<DimensionChange>> {
        self.inspections += 1;
        let label = overlay.peer(peer).ok_or(Error::UnknownPeer(peer))?.node_id;
        if self.holding(peer, policy, now) {
            return Ok(None);
        }
        let next = match inspect(peer, overlay, policy, rng)? {
            ResizeDecision::None => return Ok(None),
            ResizeDecision::Decrease if label.dim() < 3 => {
                self.refused_changes += 1;
                return Ok(None);
            }
            ResizeDecision::Decrease => policy.boundary.shrink(label, rng)?,
            ResizeDecision::Increase if label.dim() >= crate::overlay::MAX_OVERLAY_DIM => {
                self.refused_changes += 1;
                return Ok(None);
            }
            ResizeDecision::Increase => policy.boundary.grow(label, rng)?,
        };
        self.self_triggered_changes += 1;
        self.change(overlay, peer, next, now, rng).map(Some)
    }

    /// Records a suggestion; once `suggestion_threshold` distinct senders
    /// agree, moves `peer` one step towards the suggested dimension and
    /// returns the change (whose suggestions the caller should deliver).
    pub fn handle_suggestion<R: Rng + ?Sized>(
        &mut self,
        overlay: &mut OverlayState,
        peer: PeerId,
        msg: SuggestionMsg,
        policy: &ResizePolicy,
        now: Time,
        rng: &mut R,
    ) -> Result<Option<DimensionChange>> {
        let label = match overlay.peer(peer) {
            Some(p) => p.node_id,
            None => return Ok(None),
        };
        if msg.suggested_dim == label.dim() || msg.suggested_dim < 2 {
            return Ok(None);
        }
        if self.holding(peer, policy, now) {
            self.held_suggestions += 1;
            return Ok(None);
        }
        let senders = self
            .inbox
            .entry(peer)
            .or_default()
            .entry(msg.suggested_dim)
            .or_default();
        senders.insert(msg.from);
        if senders.len() < policy.suggestion_threshold {
            return Ok(None);
        }
        let next = step_towards(label, msg.suggested_dim, policy.boundary, rng)?;
        if next.dim() < 2 || next.dim() > crate::overlay::MAX_OVERLAY_DIM {
            self.refused_changes += 1;
            return Ok(None);
        }
        self.adopted_changes += 1;
        self.first_adoption.get_or_insert(now);
        self.change(overlay, peer, next, now, rng).map(Some)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::overlay::PeerNode;
    use crate::template;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn l(bits: &str, pos: u8) -> VertexLabel {
        VertexLabel::from_bits(bits, pos).unwrap()
    }

    #[test]
    fn dead_band() {
        let p = ResizePolicy::default();
        assert_eq!(p.decide(100.0), ResizeDecision::None);
        assert_eq!(p.decide(30.0), ResizeDecision::Decrease);
        assert_eq!(p.decide(180.0), ResizeDecision::Increase);
        assert_eq!(p.decide(35.0), ResizeDecision::None);
        assert_eq!(p.decide(165.0), ResizeDecision::None);
    }

    #[test]
    fn policy_validation() {
        assert!(ResizePolicy::default().validate().is_ok());
        let bad = ResizePolicy {
            buffer: 100.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ResizePolicy {
            suggestion_threshold: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn rounding_half_up() {
        assert_eq!(round_mean_dim(&[8, 8, 8]), 8);
        assert_eq!(round_mean_dim(&[7, 7, 8]), 7);
        assert_eq!(round_mean_dim(&[7, 8]), 8);
        assert_eq!(round_mean_dim(&[6, 7, 7, 8]), 7);
    }

    fn overlay_with(labels: &[VertexLabel]) -> OverlayState {
        let mut o = OverlayState::new(labels[0].dim()).unwrap();
        for (i, label) in labels.iter().enumerate() {
            let entry = o.live_peers().first().copied();
            o.join(PeerNode::new(PeerId(i as u64), *label, 0.0, 1.0), entry)
                .unwrap();
        }
        o
    }

    #[test]
    fn siblings_merge_on_decrease() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut o = overlay_with(&[l("1010", 3), l("1011", 3)]);
        let a = apply_decrease(&mut o, PeerId(0), BoundaryRule::Clamp, &mut rng).unwrap();
        let b = apply_decrease(&mut o, PeerId(1), BoundaryRule::Clamp, &mut rng).unwrap();
        assert_eq!(a, l("101", 3));
        assert_eq!(a, b);
        assert_eq!(o.coverers(a), &[PeerId(0), PeerId(1)]);
    }

    #[test]
    fn decrease_clamps_last_position() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut o = overlay_with(&[l("0110", 4)]);
        assert_eq!(
            apply_decrease(&mut o, PeerId(0), BoundaryRule::Clamp, &mut rng).unwrap(),
            l("011", 3)
        );
    }

    #[test]
    fn decrease_refused_at_dimension_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut o = overlay_with(&[l("01", 1)]);
        assert!(apply_decrease(&mut o, PeerId(0), BoundaryRule::Clamp, &mut rng).is_err());
    }

    #[test]
    fn decrease_then_increase_with_same_bit_restores_label() {
        let v = l("10110", 2);
        let dropped = v.drop_last_bit().unwrap();
        assert_eq!(dropped.append_bit(false).unwrap(), v);
    }

    #[test]
    fn increase_splits_clique_evenly() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let label = l("0110", 2);
        let n = 2000;
        let mut o = overlay_with(&vec![label; n]);
        for i in 0..n {
            apply_increase(&mut o, PeerId(i as u64), BoundaryRule::Clamp, &mut rng).unwrap();
        }
        let zero = o.coverers(label.append_bit(false).unwrap()).len() as f64;
        let one = o.coverers(label.append_bit(true).unwrap()).len() as f64;
        assert_eq!(zero + one, n as f64);
        // Binomial(2000, 1/2): sd ~ 22.4, allow 4 sd.
        assert!((zero - 1000.0).abs() < 90.0, "split {zero}/{one}");
    }

    #[test]
    fn increase_is_deterministic_under_seed() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let mut o = overlay_with(&[l("011", 1), l("011", 1), l("101", 2)]);
            (0..3)
                .map(|i| apply_increase(&mut o, PeerId(i), BoundaryRule::Spread, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    fn dense_overlay(dim: u8, per_label: usize) -> OverlayState {
        let labels: Vec<_> = (0..per_label)
            .flat_map(|_| {
                (0..template::vertex_count(dim))
                    .map(move |i| VertexLabel::from_index(i, dim).unwrap())
            })
            .collect();
        overlay_with(&labels)
    }

    #[test]
    fn suggestion_threshold_and_distinct_senders() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut o = dense_overlay(4, 2);
        let policy = ResizePolicy::default();
        let mut state = ResizeState::new();
        let target = PeerId(0);
        let msg = |from| SuggestionMsg {
            from: PeerId(from),
            suggested_dim: 3,
        };
        // The same sender twice counts once.
        for _ in 0..3 {
            assert!(state
                .handle_suggestion(&mut o, target, msg(10), &policy, 0.0, &mut rng)
                .unwrap()
                .is_none());
        }
        for from in 11..14 {
            assert!(state
                .handle_suggestion(&mut o, target, msg(from), &policy, 0.0, &mut rng)
                .unwrap()
                .is_none());
        }
        assert_eq!(state.pending(target, 3), 4);
        let change = state
            .handle_suggestion(&mut o, target, msg(14), &policy, 1.0, &mut rng)
            .unwrap()
            .expect("fifth distinct sender adopts");
        assert_eq!(change.new.dim(), 3);
        assert_eq!(state.pending(target, 3), 0);
        assert!(!change.suggestions.is_empty());
        assert_eq!(state.first_adoption, Some(1.0));
    }

    #[test]
    fn suggestion_for_current_dimension_is_ignored() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut o = dense_overlay(3, 1);
        let mut state = ResizeState::new();
        let policy = ResizePolicy {
            suggestion_threshold: 1,
            ..Default::default()
        };
        let msg = SuggestionMsg {
            from: PeerId(3),
            suggested_dim: 3,
        };
        assert!(state
            .handle_suggestion(&mut o, PeerId(0), msg, &policy, 0.0, &mut rng)
            .unwrap()
            .is_none());
        assert_eq!(state.pending(PeerId(0), 3), 0);
    }

    #[test]
    fn join_dimension_follows_coverers() {
        let mut o = overlay_with(&[l("1010", 2), l("1010", 2), l("1010", 2)]);
        assert_eq!(join_dimension(&o, l("1010", 2), 6), 4);
        // A dimension-3 peer covering the projection joins the average.
        o.join(
            PeerNode::new(PeerId(50), l("101", 2), 0.0, 1.0),
            Some(PeerId(0)),
        )
        .unwrap();
        assert_eq!(join_dimension(&o, l("1010", 2), 6), 4);
        assert_eq!(join_dimension(&o, l("0000", 1), 6), 6);
    }

    #[test]
    fn inspection_in_dead_band_changes_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // 25 peers per label at dimension 3: degree 24 + 75 = 99.
        let mut o = dense_overlay(3, 25);
        let policy = ResizePolicy::default();
        let mut state = ResizeState::new();
        for i in 0..50 {
            assert!(state
                .inspect_and_apply(&mut o, PeerId(i), &policy, 0.0, &mut rng)
                .unwrap()
                .is_none());
        }
    }

    #[test]
    fn sparse_inspection_decreases() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut o = dense_overlay(4, 2);
        let policy = ResizePolicy::default();
        let mut state = ResizeState::new();
        let change = state
            .inspect_and_apply(&mut o, PeerId(0), &policy, 0.0, &mut rng)
            .unwrap()
            .expect("degree 7 is far below the band");
        assert_eq!(change.new.dim(), 3);
        assert_eq!(state.suggestion_messages as usize, change.suggestions.len());
    }

    #[test]
    fn spread_keeps_positions_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 6000;
        let mut counts = [0usize; 5];
        for _ in 0..n {
            let v = template::random_label(6, &mut rng);
            let w = BoundaryRule::Spread.shrink(v, &mut rng).unwrap();
            assert_eq!(w.word(), v.word() >> 1);
            if v.cycle_pos() < 6 {
                assert_eq!(w.cycle_pos(), v.cycle_pos());
            }
            counts[w.cycle_pos() as usize - 1] += 1;
        }
        // Multinomial(6000, 1/5 each): sd ~ 31, allow 4 sd.
        for c in counts {
            assert!((c as f64 - 1200.0).abs() < 124.0, "{counts:?}");
        }
        let mut counts = [0usize; 7];
        for _ in 0..n {
            let v = template::random_label(6, &mut rng);
            let w = BoundaryRule::Spread.grow(v, &mut rng).unwrap();
            assert_eq!(w.word() >> 1, v.word());
            counts[w.cycle_pos() as usize - 1] += 1;
        }
        // Multinomial(6000, 1/7 each): sd ~ 27, allow 4 sd.
        for c in counts {
            assert!((c as f64 - 857.0).abs() < 108.0, "{counts:?}");
        }
    }

    #[test]
    fn clamp_keeps_position_on_increase() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let v = template::random_label(5, &mut rng);
            assert_eq!(
                BoundaryRule::Clamp.grow(v, &mut rng).unwrap().cycle_pos(),
                v.cycle_pos()
            );
        }
    }

    #[test]
    fn recent_change_holds_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut o = dense_overlay(4, 2);
        let policy = ResizePolicy {
            suggestion_threshold: 1,
            ..Default::default()
        };
        let mut state = ResizeState::new();
        let down = SuggestionMsg {
            from: PeerId(7),
            suggested_dim: 3,
        };
        let up = SuggestionMsg {
            from: PeerId(8),
            suggested_dim: 4,
        };
        let first = state
            .handle_suggestion(&mut o, PeerId(0), down, &policy, 10.0, &mut rng)
            .unwrap();
        assert_eq!(first.unwrap().new.dim(), 3);
        let back = state
            .handle_suggestion(&mut o, PeerId(0), up, &policy, 10.0, &mut rng)
            .unwrap();
        assert!(back.is_none());
        assert_eq!(state.held_suggestions, 1);
        let later = state
            .handle_suggestion(
                &mut o,
                PeerId(0),
                up,
                &policy,
                10.0 + policy.inspect_interval,
                &mut rng,
            )
            .unwrap();
        assert_eq!(later.unwrap().new.dim(), 4);
    }
}
