use ccc_dht::churn::{self, ChurnConfig, Simulation};
use ccc_dht::metrics::csv_row;
use ccc_dht::{MetricsSnapshot, ResizePolicy};

fn rows(snaps: &[MetricsSnapshot]) -> Vec<String> {
    snaps.iter().map(csv_row).collect()
}

fn small(seed: u64) -> ChurnConfig {
    let mut c = ChurnConfig::steady(600.0, 6.0, 12.0 * 600.0, seed);
    c.data_ops_per_sample = 40;
    c
}

#[test]
fn same_seed_same_trace() {
    let a = churn::run(small(3)).unwrap();
    let b = churn::run(small(3)).unwrap();
    assert_eq!(rows(&a.snapshots), rows(&b.snapshots));
    assert_eq!(a.summary, b.summary);
    let c = churn::run(small(4)).unwrap();
    assert_ne!(rows(&a.snapshots), rows(&c.snapshots));
}

#[test]
fn invariants_hold_with_tree_and_data() {
    let mut c = small(5);
    c.track_tree = true;
    c.self_check_every = Some(200);
    let out = churn::run(c).unwrap();
    assert!(out.summary.self_checks > 0);
    assert!(out.summary.searches > 0);
    assert_eq!(out.summary.searches, out.summary.searches_found);
}

#[test]
fn invariants_hold_while_resizing() {
    let mut c = small(6);
    c.resize = Some(ResizePolicy::default());
    c.track_tree = true;
    c.self_check_every = Some(500);
    let out = churn::run(c).unwrap();
    assert!(out.summary.self_checks > 0);
}

#[test]
fn stepping_matches_run() {
    let mut sim = Simulation::new(small(8)).unwrap();
    let mut last = 0.0;
    while let Some(r) = sim.step().unwrap() {
        assert!(r.event.time >= last);
        last = r.event.time;
    }
    let stepped = sim.finish();
    assert_eq!(
        rows(&stepped.snapshots),
        rows(&churn::run(small(8)).unwrap().snapshots)
    );
}
