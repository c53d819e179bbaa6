//! The single-threaded event loop.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use super::config::ChurnConfig;
use crate::error::{Error, Result};
use crate::metrics::MetricsSnapshot;
use crate::overlay::{
    DataKey, InsertStatus, OverlayState, PeerId, PeerNode, RehomeReport, MAX_OVERLAY_DIM,
};
use crate::resize::{self, DimensionChange, ResizeState, SuggestionMsg};
use crate::template::{self, VertexLabel};
use crate::tree::{RepairReport, SpanningTreeState};
use crate::Time;

/// Longest wait between two join retries of the same peer.
const MAX_RETRY_DELAY: Time = 64.0;
/// Delay before a peer retries keys left pending by a dimension change;
/// suggestion cascades complete within one instant, so their homes exist by then.
const REHOME_DELAY: Time = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    /// Next continuous-time arrival. Stale once the arrival rate changes.
    Arrival {
        generation: u32,
    },
    /// All arrivals of one unit cycle.
    CycleArrivals,
    Departure(PeerId),
    MetricsSample,
    /// Begins periodic inspections for every live peer.
    ResizeStart,
    ResizeTick(PeerId),
    /// Retry for keys a dimension change left without a holder.
    Rehome(PeerId),
    Suggestion {
        to: PeerId,
        msg: SuggestionMsg,
    },
    JoinRetry {
        peer: PeerId,
        attempt: u32,
    },
    RateChange,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChurnEvent {
    pub time: Time,
    pub kind: EventKind,
    pub sequence: u64,
}

impl Eq for ChurnEvent {}

impl Ord for ChurnEvent {
    // Reversed so the max-heap pops the earliest (time, sequence) first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.sequence.cmp(&self.sequence))
    }
}

impl PartialOrd for ChurnEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// What one executed event did.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub event: ChurnEvent,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Joined {
        peer: PeerId,
        routed: bool,
        messages: usize,
        tree: Option<RepairReport>,
    },
    /// Several joins from one cycle batch.
    Batch {
        joined: usize,
    },
    Departed {
        peer: PeerId,
        routing_messages: usize,
        handoff_messages: usize,
        hole_formed: bool,
        tree: Option<RepairReport>,
    },
    Sampled,
    DimensionChanged(Box<DimensionChange>),
    Retried {
        peer: PeerId,
        routed: bool,
    },
    Rehomed {
        peer: PeerId,
        report: RehomeReport,
    },
    /// The event referred to a peer that is gone, or changed nothing.
    Nothing,
    RateChanged,
}

/// Running totals over a whole simulation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub events: u64,
    pub arrivals: u64,
    pub departures: u64,
    /// Departures of peers that were no longer live.
    pub stale_events: u64,
    pub join_retries: u64,
    pub inserts: u64,
    pub insert_failures: u64,
    pub searches: u64,
    pub searches_found: u64,
    pub search_hops: u64,
    pub tree_insert_repairs: u64,
    pub tree_delete_repairs: u64,
    pub self_checks: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub snapshots: Vec<MetricsSnapshot>,
    pub summary: RunSummary,
}

pub struct Simulation {
    config: ChurnConfig,
    overlay: OverlayState,
    tree: Option<SpanningTreeState>,
    resize: ResizeState,
    queue: BinaryHeap<ChurnEvent>,
    sequence: u64,
    now: Time,
    lambda: f64,
    mean_session: f64,
    generation: u32,
    next_peer: u64,
    resize_active: bool,
    rng: ChaCha8Rng,
    metrics_rng: ChaCha8Rng,
    data_rng: ChaCha8Rng,
    keys: Vec<DataKey>,
    next_key: u64,
    snapshots: Vec<MetricsSnapshot>,
    summary: RunSummary,
    interval_joins: u64,
    interval_join_messages: u64,
    interval_searches: u64,
    interval_found: u64,
}

impl Simulation {
    pub fn new(config: ChurnConfig) -> Result<Self> {
        config.validate()?;
        let dim = config.dimension()?;
        let stream = |s: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(config.seed);
            r.set_stream(s);
            r
        };
        let mut sim = Self {
            overlay: OverlayState::new(dim)?,
            tree: config.track_tree.then(|| SpanningTreeState::new(dim)),
            resize: ResizeState::new(),
            queue: BinaryHeap::new(),
            sequence: 0,
            now: 0.0,
            lambda: config.lambda,
            mean_session: config.mean_session,
            generation: 0,
            next_peer: 0,
            resize_active: false,
            rng: stream(0),
            metrics_rng: stream(1),
            data_rng: stream(2),
            keys: Vec::new(),
            next_key: 0,
            snapshots: Vec::new(),
            summary: RunSummary::default(),
            interval_joins: 0,
            interval_join_messages: 0,
            interval_searches: 0,
            interval_found: 0,
            config,
        };
        sim.schedule_initial();
        Ok(sim)
    }

    fn schedule_initial(&mut self) {
        let horizon = self.config.horizon;
        if horizon <= 0.0 {
            return;
        }
        if self.config.per_cycle {
            self.schedule(0.0, EventKind::CycleArrivals);
        } else {
            self.schedule_arrival();
        }
        let interval = self.config.sample_interval;
        let mut k = 1u64;
        loop {
            let t = k as f64 * interval;
            if t > horizon {
                break;
            }
            self.schedule(t, EventKind::MetricsSample);
            k += 1;
        }
        if (k - 1) as f64 * interval < horizon {
            self.schedule(horizon, EventKind::MetricsSample);
        }
        if let Some(rc) = &self.config.rate_change {
            let at = rc.at;
            self.schedule(at, EventKind::RateChange);
        }
        if self.config.resize.is_some() {
            let start = self.config.resize_start_time();
            if start <= horizon {
                self.schedule(start, EventKind::ResizeStart);
            }
        }
    }

    fn schedule(&mut self, time: Time, kind: EventKind) {
        self.sequence += 1;
        self.queue.push(ChurnEvent {
            time,
            kind,
            sequence: self.sequence,
        });
    }

    fn schedule_arrival(&mut self) {
        let gap = -(1.0 - self.rng.random::<f64>()).ln() / self.lambda;
        let generation = self.generation;
        self.schedule(self.now + gap, EventKind::Arrival { generation });
    }

    pub fn config(&self) -> &ChurnConfig {
        &self.config
    }

    pub fn overlay(&self) -> &OverlayState {
        &self.overlay
    }

    pub fn tree(&self) -> Option<&SpanningTreeState> {
        self.tree.as_ref()
    }

    pub fn resize_state(&self) -> &ResizeState {
        &self.resize
    }

    pub fn now(&self) -> Time {
        self.now
    }

    pub fn summary(&self) -> &RunSummary {
        &self.summary
    }

    pub fn snapshots(&self) -> &[MetricsSnapshot] {
        &self.snapshots
    }

    /// Time of the next pending event within the horizon.
    pub fn peek_time(&self) -> Option<Time> {
        self.queue
            .peek()
            .map(|e| e.time)
            .filter(|&t| t <= self.config.horizon)
    }

    /// Executes the earliest pending event. Returns `None` once nothing is
    /// left before the horizon.
    pub fn step(&mut self) -> Result<Option<StepReport>> {
        let Some(event) = self.queue.peek().copied() else {
            return Ok(None);
        };
        if event.time > self.config.horizon {
            return Ok(None);
        }
        self.queue.pop();
        self.now = event.time;
        self.summary.events += 1;
        let outcome = match event.kind {
            EventKind::Arrival { generation } => {
                if generation != self.generation {
                    Outcome::Nothing
                } else {
                    self.schedule_arrival();
                    self.arrive()?
                }
            }
            EventKind::CycleArrivals => {
                let count = if self.lambda > 0.0 {
                    Poisson::new(self.lambda)
                        .expect("positive rate")
                        .sample(&mut self.rng) as usize
                } else {
                    0
                };
                for _ in 0..count {
                    self.arrive()?;
                }
                self.schedule(self.now + 1.0, EventKind::CycleArrivals);
                Outcome::Batch { joined: count }
            }
            EventKind::Departure(peer) => self.depart(peer)?,
            EventKind::MetricsSample => {
                self.sample()?;
                Outcome::Sampled
            }
            EventKind::ResizeStart => {
                self.resize_active = true;
                let peers = self.overlay.live_peers().to_vec();
                for p in peers {
                    self.schedule_first_tick(p);
                }
                Outcome::Nothing
            }
            EventKind::ResizeTick(peer) => self.resize_tick(peer)?,
            EventKind::Suggestion { to, msg } => self.deliver(to, msg)?,
            EventKind::Rehome(peer) => {
                if self.overlay.contains(peer) {
                    let report = self.overlay.rehome_keys(peer, &mut self.rng)?;
                    Outcome::Rehomed { peer, report }
                } else {
                    Outcome::Nothing
                }
            }
            EventKind::JoinRetry { peer, attempt } => self.retry_join(peer, attempt)?,
            EventKind::RateChange => {
                let rc = self
                    .config
                    .rate_change
                    .clone()
                    .expect("rate change configured");
                self.lambda = rc.lambda;
                self.mean_session = rc.mean_session;
                if !self.config.per_cycle {
                    self.generation += 1;
                    self.schedule_arrival();
                }
                Outcome::RateChanged
            }
        };
        if let Some(tree) = &mut self.tree {
            tree.maintain(&self.overlay);
        }
        if let Some(every) = self.config.self_check_every {
            if self.summary.events % every == 0 {
                self.self_check()?;
            }
        }
        Ok(Some(StepReport { event, outcome }))
    }

    /// Runs to the horizon.
    pub fn run(mut self) -> Result<RunOutput> {
        while self.step()?.is_some() {}
        Ok(self.finish())
    }

    pub fn finish(self) -> RunOutput {
        RunOutput {
            snapshots: self.snapshots,
            summary: self.summary,
        }
    }

    /// Checks the occupancy index and, when built, the spanning tree.
    pub fn self_check(&mut self) -> Result<()> {
        self.summary.self_checks += 1;
        if let Some(label) = self.overlay.occupancy_mismatch() {
            return Err(Error::InvariantViolation(format!(
                "occupancy index disagrees with the peer table at {label} (t = {})",
                self.now
            )));
        }
        if let Some(tree) = &self.tree {
            if !tree.is_broken() {
                tree.validate(&self.overlay).map_err(|v| {
                    Error::InvariantViolation(format!("spanning tree at t = {}: {v}", self.now))
                })?;
            }
        }
        // Under resizing a key may wait up to one inspection for its new home.
        if self.config.resize.is_none() {
            if let Some((peer, key)) = self.overlay.misplaced_key() {
                return Err(Error::InvariantViolation(format!(
                    "peer {peer} holds {key:?} away from its home (t = {})",
                    self.now
                )));
            }
        }
        if self.overlay.counters.departure_routing_messages != 0 {
            return Err(Error::InvariantViolation(
                "departures were charged routing messages".into(),
            ));
        }
        Ok(())
    }

    /// Label for a new peer. Outside a resize it is a uniform label at the
    /// configured dimension; during one, the peer takes the rounded mean
    /// dimension of the peers covering its label.
    fn new_label(&mut self) -> VertexLabel {
        let base = self.overlay.params().dim;
        if self.config.resize.is_none() {
            return template::random_label(base, &mut self.rng);
        }
        let rule = self
            .config
            .resize
            .as_ref()
            .map_or(Default::default(), |p| p.boundary);
        let at = self.overlay.majority_dim();
        let mut label = template::random_label(at, &mut self.rng);
        let target = resize::join_dimension(&self.overlay, label, at).clamp(2, MAX_OVERLAY_DIM);
        while label.dim() != target {
            label = resize::step_towards(label, target, rule, &mut self.rng)
                .expect("dimension within range");
        }
        label
    }

    fn arrive(&mut self) -> Result<Outcome> {
        self.summary.arrivals += 1;
        let id = PeerId(self.next_peer);
        self.next_peer += 1;
        let label = self.new_label();
        let session = self
            .config
            .session
            .sample(self.mean_session, &mut self.rng)?;
        let departs = if self.config.per_cycle {
            // Cycles add first, then remove.
            (self.now + session).floor() + 0.5
        } else {
            self.now + session
        };
        let entry = self.overlay.random_live_peer(&mut self.rng);
        let report = self
            .overlay
            .join(PeerNode::new(id, label, self.now, departs), entry)?;
        self.schedule(departs, EventKind::Departure(id));
        self.interval_joins += 1;
        self.interval_join_messages += report.messages as u64;
        if !report.routed {
            self.schedule(
                self.now + 1.0,
                EventKind::JoinRetry {
                    peer: id,
                    attempt: 1,
                },
            );
        }
        if self.resize_active {
            self.schedule_first_tick(id);
        }
        let tree = self.tree.as_mut().map(|t| t.on_insert(&self.overlay, id));
        if tree.is_some() {
            self.summary.tree_insert_repairs += 1;
        }
        Ok(Outcome::Joined {
            peer: id,
            routed: report.routed,
            messages: report.messages,
            tree,
        })
    }

    fn retry_join(&mut self, peer: PeerId, attempt: u32) -> Result<Outcome> {
        if !self.overlay.contains(peer) {
            return Ok(Outcome::Nothing);
        }
        self.summary.join_retries += 1;
        let entry = loop {
            let e = self
                .overlay
                .random_live_peer(&mut self.rng)
                .expect("peer itself is live");
            if e != peer || self.overlay.len() == 1 {
                break e;
            }
        };
        let routed = if entry == peer {
            true
        } else {
            let report = self.overlay.rediscover(peer, entry)?;
            self.interval_join_messages += report.messages as u64;
            report.routed
        };
        if !routed {
            let delay = (2f64.powi(attempt as i32)).min(MAX_RETRY_DELAY);
            self.schedule(
                self.now + delay,
                EventKind::JoinRetry {
                    peer,
                    attempt: attempt + 1,
                },
            );
        }
        Ok(Outcome::Retried { peer, routed })
    }

    fn depart(&mut self, peer: PeerId) -> Result<Outcome> {
        if !self.overlay.contains(peer) {
            self.summary.stale_events += 1;
            return Ok(Outcome::Nothing);
        }
        self.summary.departures += 1;
        let report = self.overlay.leave(peer, &mut self.rng)?;
        self.resize.forget(peer);
        let tree = self
            .tree
            .as_mut()
            .map(|t| t.on_delete(&self.overlay, peer, report.node_id));
        if tree.is_some() {
            self.summary.tree_delete_repairs += 1;
        }
        Ok(Outcome::Departed {
            peer,
            routing_messages: report.routing_messages,
            handoff_messages: report.handoff_messages,
            hole_formed: report.hole_formed,
            tree,
        })
    }

    fn schedule_first_tick(&mut self, peer: PeerId) {
        let interval = self
            .config
            .resize
            .as_ref()
            .expect("resize enabled")
            .inspect_interval;
        let phase = self.rng.random::<f64>() * interval;
        self.schedule(self.now + phase, EventKind::ResizeTick(peer));
    }

    fn resize_tick(&mut self, peer: PeerId) -> Result<Outcome> {
        if !self.overlay.contains(peer) {
            return Ok(Outcome::Nothing);
        }
        let policy = self.config.resize.clone().expect("resize enabled");
        self.schedule(
            self.now + policy.inspect_interval,
            EventKind::ResizeTick(peer),
        );
        self.overlay.rehome_keys(peer, &mut self.rng)?;
        let change = self.resize.inspect_and_apply(
            &mut self.overlay,
            peer,
            &policy,
            self.now,
            &mut self.rng,
        )?;
        Ok(self.after_change(change))
    }

    fn deliver(&mut self, to: PeerId, msg: SuggestionMsg) -> Result<Outcome> {
        let policy = self.config.resize.clone().expect("resize enabled");
        let change = self.resize.handle_suggestion(
            &mut self.overlay,
            to,
            msg,
            &policy,
            self.now,
            &mut self.rng,
        )?;
        Ok(self.after_change(change))
    }

    fn after_change(&mut self, change: Option<DimensionChange>) -> Outcome {
        let Some(change) = change else {
            return Outcome::Nothing;
        };
        if let Some(tree) = &mut self.tree {
            tree.on_relabel(&self.overlay, change.peer, change.old);
        }
        for &(to, msg) in &change.suggestions {
            self.schedule(self.now, EventKind::Suggestion { to, msg });
        }
        if change.rehome.pending > 0 {
            self.schedule(self.now + REHOME_DELAY, EventKind::Rehome(change.peer));
        }
        Outcome::DimensionChanged(Box::new(change))
    }

    fn stable(&self) -> bool {
        self.now >= self.config.warmup_time()
    }

    /// Issues the configured data workload: fresh inserts, then searches for
    /// uniformly chosen previously stored keys from random origins.
    fn data_workload(&mut self) -> Result<()> {
        let ops = self.config.data_ops_per_sample;
        if ops == 0 || self.overlay.is_empty() {
            return Ok(());
        }
        for _ in 0..ops {
            let key = DataKey::new(format!("key-{}", self.next_key))?;
            self.next_key += 1;
            let origin = self
                .overlay
                .random_live_peer(&mut self.data_rng)
                .expect("non-empty");
            self.summary.inserts += 1;
            let report = self
                .overlay
                .insert_data(key.clone(), origin, &mut self.data_rng)?;
            match report.status {
                InsertStatus::Stored(_) => self.keys.push(key),
                _ => self.summary.insert_failures += 1,
            }
        }
        if self.keys.is_empty() {
            return Ok(());
        }
        for _ in 0..ops {
            let key = self.keys[self.data_rng.random_range(0..self.keys.len())].clone();
            let origin = self
                .overlay
                .random_live_peer(&mut self.data_rng)
                .expect("non-empty");
            let result = self.overlay.search(origin, &key)?;
            self.summary.searches += 1;
            self.summary.search_hops += result.hops as u64;
            self.interval_searches += 1;
            if result.found() {
                self.summary.searches_found += 1;
                self.interval_found += 1;
            }
        }
        Ok(())
    }

    fn sample(&mut self) -> Result<()> {
        let stable = self.stable();
        if stable {
            self.data_workload()?;
        }
        let mut snap =
            MetricsSnapshot::capture(&self.overlay, self.now, stable, &mut self.metrics_rng);
        snap.searches = self.interval_searches;
        if self.interval_searches > 0 {
            snap.search_success_rate = self.interval_found as f64 / self.interval_searches as f64;
        }
        if self.interval_joins > 0 {
            snap.join_messages_mean =
                self.interval_join_messages as f64 / self.interval_joins as f64;
        }
        if let Some(tree) = &self.tree {
            snap.tree_repair_messages = tree.repair_message_count;
            snap.rebuilds = tree.rebuild_count;
        }
        snap.suggestion_messages = self.resize.suggestion_messages;
        self.interval_searches = 0;
        self.interval_found = 0;
        self.interval_joins = 0;
        self.interval_join_messages = 0;
        self.snapshots.push(snap);
        Ok(())
    }
}

/// Runs `config` from an empty network to its horizon.
pub fn run(config: ChurnConfig) -> Result<RunOutput> {
    Simulation::new(config)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics;

    fn small(seed: u64) -> ChurnConfig {
        let mut c = ChurnConfig::steady(300.0, 3.0, 3000.0, seed);
        c.sample_interval = 100.0;
        c.warmup_multiple = 2.0;
        c
    }

    #[test]
    fn zero_horizon_is_empty() {
        let mut c = small(1);
        c.horizon = 0.0;
        let out = run(c).unwrap();
        assert!(out.snapshots.is_empty());
        assert_eq!(out.summary.events, 0);
    }

    #[test]
    fn final_snapshot_at_horizon() {
        let mut c = small(1);
        c.horizon = 1050.0;
        let out = run(c).unwrap();
        assert_eq!(out.snapshots.len(), 11);
        assert_eq!(out.snapshots.last().unwrap().time, 1050.0);
    }

    #[test]
    fn same_seed_same_series() {
        let a = run(small(4)).unwrap();
        let b = run(small(4)).unwrap();
        let csv = |o: &RunOutput| o.snapshots.iter().map(metrics::csv_row).collect::<Vec<_>>();
        assert_eq!(csv(&a), csv(&b));
        let c = run(small(5)).unwrap();
        assert_ne!(csv(&a), csv(&c));
    }

    #[test]
    fn events_run_in_time_order() {
        let mut sim = Simulation::new(small(2)).unwrap();
        let mut last = (0.0, 0);
        while let Some(step) = sim.step().unwrap() {
            let key = (step.event.time, step.event.sequence);
            assert!(key.0 > last.0 || (key.0 == last.0 && key.1 > last.1));
            last = key;
        }
    }

    #[test]
    fn departures_never_route() {
        let mut sim = Simulation::new(small(3)).unwrap();
        while let Some(step) = sim.step().unwrap() {
            if let Outcome::Departed {
                routing_messages, ..
            } = step.outcome
            {
                assert_eq!(routing_messages, 0);
            }
        }
        assert_eq!(sim.overlay().counters.departure_routing_messages, 0);
        assert!(sim.summary().departures > 0);
    }

    #[test]
    fn size_settles_near_stable_size() {
        let out = run(small(6)).unwrap();
        let tail: Vec<f64> = out
            .snapshots
            .iter()
            .filter(|s| s.stable)
            .map(|s| s.live_peers as f64)
            .collect();
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        assert!((mean - 300.0).abs() < 60.0, "mean size {mean}");
    }

    #[test]
    fn per_cycle_departures_follow_arrivals() {
        let mut c = small(7);
        c.per_cycle = true;
        let mut sim = Simulation::new(c).unwrap();
        while let Some(step) = sim.step().unwrap() {
            match step.event.kind {
                EventKind::CycleArrivals => assert_eq!(step.event.time.fract(), 0.0),
                EventKind::Departure(_) => assert_eq!(step.event.time.fract(), 0.5),
                _ => {}
            }
        }
        assert!(sim.summary().arrivals > 0);
    }

    #[test]
    fn self_check_passes_with_tree() {
        let mut c = small(8);
        c.track_tree = true;
        c.self_check_every = Some(50);
        c.data_ops_per_sample = 20;
        let out = run(c).unwrap();
        assert!(out.summary.self_checks > 0);
        assert!(out.summary.searches > 0);
    }

    #[test]
    fn rate_change_shrinks_network() {
        let mut c = ChurnConfig::steady(400.0, 4.0, 6000.0, 9);
        c.sample_interval = 100.0;
        c.rate_change = Some(super::super::config::RateChange {
            at: 2000.0,
            lambda: 2.0,
            mean_session: 100.0,
        });
        let out = run(c).unwrap();
        let late: Vec<f64> = out
            .snapshots
            .iter()
            .filter(|s| s.time > 4000.0)
            .map(|s| s.live_peers as f64)
            .collect();
        let mean = late.iter().sum::<f64>() / late.len() as f64;
        assert!((mean - 200.0).abs() < 40.0, "mean size {mean}");
    }
}
