//! Per-sample network statistics and their CSV encoding.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt::Write as _;
use std::io::{self, Write};

use rand::Rng;

use crate::overlay::{BucketRef, OverlayState};
use crate::template;
use crate::Time;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSnapshot {
    pub time: Time,
    pub live_peers: usize,
    /// Majority dimension; coverage figures are taken at this dimension.
    pub dimension: u8,
    pub coverage: f64,
    pub avg_coverage: f64,
    pub avg_degree: f64,
    pub max_degree: usize,
    pub bfs_diameter_est: u32,
    pub disconnected: bool,
    /// Mean hops over successful sampled routes; NaN when none succeeded.
    pub random_path_len: f64,
    pub random_path_failures: usize,
    /// Fraction of searches since the previous sample that found their key;
    /// NaN when there were none.
    pub search_success_rate: f64,
    pub searches: u64,
    /// Mean join messages since the previous sample; NaN when nobody joined.
    pub join_messages_mean: f64,
    pub tree_repair_messages: u64,
    pub rebuilds: u64,
    pub holes: u64,
    pub orphaned_keys: u64,
    pub avg_dimension: f64,
    pub fraction_at_majority_dim: f64,
    pub suggestion_messages: u64,
    pub cross_dim_search_failures: u64,
    /// Past the warm-up period.
    pub stable: bool,
    /// Live peers per dimension.
    pub dims: BTreeMap<u8, usize>,
}

impl MetricsSnapshot {
    /// Structural statistics of `overlay`; protocol counters are left at zero
    /// for the caller to fill in.
    pub fn capture<R: Rng + ?Sized>(
        overlay: &OverlayState,
        time: Time,
        stable: bool,
        rng: &mut R,
    ) -> Self {
        let dimension = overlay.majority_dim();
        let (avg_degree, max_degree) = degree_stats(overlay);
        let bfs = bfs_diameter_estimate(overlay, rng);
        let paths = random_path_length(overlay, rng);
        let dims: BTreeMap<u8, usize> = overlay
            .dims_present()
            .map(|d| (d, overlay.peers_at_dim(d)))
            .collect();
        let fraction_at_majority_dim = if overlay.is_empty() {
            0.0
        } else {
            overlay.peers_at_dim(dimension) as f64 / overlay.len() as f64
        };
        Self {
            time,
            live_peers: overlay.len(),
            dimension,
            coverage: coverage(overlay),
            avg_coverage: avg_coverage(overlay),
            avg_degree,
            max_degree,
            bfs_diameter_est: bfs.estimate,
            disconnected: bfs.disconnected,
            random_path_len: paths.mean.unwrap_or(f64::NAN),
            random_path_failures: paths.failures,
            search_success_rate: f64::NAN,
            searches: 0,
            join_messages_mean: f64::NAN,
            tree_repair_messages: 0,
            rebuilds: 0,
            holes: overlay.counters.holes_formed,
            orphaned_keys: overlay.counters.orphaned_keys,
            avg_dimension: overlay.mean_dim(),
            fraction_at_majority_dim,
            suggestion_messages: 0,
            cross_dim_search_failures: overlay.counters.cross_dim_search_failures,
            stable,
            dims,
        }
    }
}

/// Fraction of labels at the majority dimension with a live coverer.
pub fn coverage(overlay: &OverlayState) -> f64 {
    if overlay.is_empty() {
        return 0.0;
    }
    let dim = overlay.majority_dim();
    let total = template::vertex_count(dim);
    let occupied = if overlay.single_dim() == Some(dim) {
        overlay.occupied_labels(dim)
    } else {
        labels(dim).filter(|v| overlay.is_occupied(*v)).count()
    };
    occupied as f64 / total as f64
}

/// Mean number of live coverers per label at the majority dimension, holes
/// included as zero.
pub fn avg_coverage(overlay: &OverlayState) -> f64 {
    if overlay.is_empty() {
        return 0.0;
    }
    let dim = overlay.majority_dim();
    let total = template::vertex_count(dim);
    let covering = if overlay.single_dim() == Some(dim) {
        overlay.len()
    } else {
        labels(dim).map(|v| overlay.general_coverers(v).len()).sum()
    };
    covering as f64 / total as f64
}

fn labels(dim: u8) -> impl Iterator<Item = template::VertexLabel> {
    (0..template::vertex_count(dim))
        .map(move |i| template::VertexLabel::from_index(i, dim).expect("valid index"))
}

/// Mean and maximum overlay degree over live peers.
pub fn degree_stats(overlay: &OverlayState) -> (f64, usize) {
    if overlay.is_empty() {
        return (0.0, 0);
    }
    // Degree depends only on the label, so compute it once per occupied bucket.
    let mut per_label: HashMap<BucketRef, usize> = HashMap::new();
    let mut total = 0usize;
    let mut max = 0usize;
    for &p in overlay.live_peers() {
        let peer = overlay.peer(p).expect("live peer");
        let d = *per_label
            .entry(BucketRef::of(peer.node_id))
            .or_insert_with(|| overlay.degree(p).expect("live peer"));
        total += d;
        max = max.max(d);
    }
    (total as f64 / overlay.len() as f64, max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BfsEstimate {
    /// Twice the height of a BFS tree grown from a random live peer.
    pub estimate: u32,
    pub height: u32,
    /// The BFS did not reach every live peer.
    pub disconnected: bool,
}

/// BFS from a uniformly random live peer; reports twice the tree height.
///
/// Adjacency depends only on node-ids, so the search runs over occupied
/// labels: a peer's distance is its label's distance from the start label,
/// except that other peers on the start label sit at distance 1.
pub fn bfs_diameter_estimate<R: Rng + ?Sized>(overlay: &OverlayState, rng: &mut R) -> BfsEstimate {
    let Some(start) = overlay.random_live_peer(rng) else {
        return BfsEstimate {
            estimate: 0,
            height: 0,
            disconnected: false,
        };
    };
    let origin = BucketRef::of(overlay.peer(start).expect("live peer").node_id);
    let mut dist: HashMap<BucketRef, u32> = HashMap::new();
    let mut queue = VecDeque::new();
    dist.insert(origin, 0);
    queue.push_back(origin);
    let mut reached = 0usize;
    let mut height = if overlay.bucket(origin).len() > 1 {
        1
    } else {
        0
    };
    let mut scratch = Vec::new();
    while let Some(b) = queue.pop_front() {
        let d = dist[&b];
        reached += overlay.bucket(b).len();
        height = height.max(d);
        overlay.neighbor_buckets(b.label(), &mut scratch);
        for &n in &scratch {
            if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(n) {
                e.insert(d + 1);
                queue.push_back(n);
            }
        }
    }
    BfsEstimate {
        estimate: 2 * height,
        height,
        disconnected: reached < overlay.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub mean: Option<f64>,
    pub samples: usize,
    pub failures: usize,
}

/// Mean bit-fixing hop count over ceil(log2 N) random ordered pairs of
/// distinct live peers. Routes that hit a hole are left out of the mean and
/// counted as failures.
pub fn random_path_length<R: Rng + ?Sized>(overlay: &OverlayState, rng: &mut R) -> PathSample {
    let n = overlay.len();
    if n < 2 {
        return PathSample {
            mean: None,
            samples: 0,
            failures: 0,
        };
    }
    let pairs = (n as f64).log2().ceil().max(1.0) as usize;
    let live = overlay.live_peers();
    let mut total = 0usize;
    let mut ok = 0usize;
    let mut failures = 0usize;
    for _ in 0..pairs {
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let src = overlay.peer(live[a]).expect("live peer").node_id;
        let dst = overlay.peer(live[b]).expect("live peer").node_id;
        let route = overlay.route(src, dst, true);
        if route.hole.is_some() {
            failures += 1;
        } else {
            total += route.hops;
            ok += 1;
        }
    }
    PathSample {
        mean: (ok > 0).then(|| total as f64 / ok as f64),
        samples: pairs,
        failures,
    }
}

pub const CSV_COLUMNS: &[&str] = &[
    "time",
    "live_peers",
    "dimension",
    "coverage",
    "avg_coverage",
    "avg_degree",
    "max_degree",
    "bfs_diameter_est",
    "disconnected",
    "random_path_len",
    "random_path_failures",
    "search_success_rate",
    "searches",
    "join_messages_mean",
    "tree_repair_messages",
    "rebuilds",
    "holes",
    "orphaned_keys",
    "avg_dimension",
    "fraction_at_majority_dim",
    "suggestion_messages",
    "cross_dim_search_failures",
    "stable",
];

pub fn csv_header() -> String {
    CSV_COLUMNS.join(",")
}

pub fn csv_row(s: &MetricsSnapshot) -> String {
    let mut row = String::new();
    let fields = [
        fmt_g(s.time),
        s.live_peers.to_string(),
        s.dimension.to_string(),
        fmt_g(s.coverage),
        fmt_g(s.avg_coverage),
        fmt_g(s.avg_degree),
        s.max_degree.to_string(),
        s.bfs_diameter_est.to_string(),
        (s.disconnected as u8).to_string(),
        fmt_g(s.random_path_len),
        s.random_path_failures.to_string(),
        fmt_g(s.search_success_rate),
        s.searches.to_string(),
        fmt_g(s.join_messages_mean),
        s.tree_repair_messages.to_string(),
        s.rebuilds.to_string(),
        s.holes.to_string(),
        s.orphaned_keys.to_string(),
        fmt_g(s.avg_dimension),
        fmt_g(s.fraction_at_majority_dim),
        s.suggestion_messages.to_string(),
        s.cross_dim_search_failures.to_string(),
        (s.stable as u8).to_string(),
    ];
    for (i, f) in fields.iter().enumerate() {
        if i > 0 {
            row.push(',');
        }
        row.push_str(f);
    }
    row
}

pub fn write_csv<W: Write>(out: &mut W, rows: &[MetricsSnapshot]) -> io::Result<()> {
    writeln!(out, "{}", csv_header())?;
    for r in rows {
        writeln!(out, "{}", csv_row(r))?;
    }
    Ok(())
}

/// Formats like C's `%g` with six significant digits.
pub fn fmt_g(x: f64) -> String {
    const PRECISION: i32 = 6;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", (PRECISION - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..PRECISION).contains(&exp) {
        let decimals = (PRECISION - 1 - exp).max(0) as usize;
        strip_zeros(&format!("{:.*}", decimals, x))
    } else {
        let mut s = strip_zeros(mantissa);
        let _ = write!(s, "e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
        s
    }
}

fn strip_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::overlay::{PeerId, PeerNode};
    use crate::template::VertexLabel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn overlay_with(labels: &[VertexLabel]) -> OverlayState {
        let mut o = OverlayState::new(labels[0].dim()).unwrap();
        for (i, label) in labels.iter().enumerate() {
            let entry = o.live_peers().first().copied();
            o.join(PeerNode::new(PeerId(i as u64), *label, 0.0, 1.0), entry)
                .unwrap();
        }
        o
    }

    fn random_overlay(dim: u8, n: usize, seed: u64) -> OverlayState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<_> = (0..n)
            .map(|_| template::random_label(dim, &mut rng))
            .collect();
        overlay_with(&labels)
    }

    /// Exact diameter of the peer graph and its connectivity, by BFS from every peer.
    fn exact_diameter(o: &OverlayState) -> (u32, bool) {
        let peers = o.live_peers().to_vec();
        let index: HashMap<_, _> = peers.iter().enumerate().map(|(i, p)| (*p, i)).collect();
        let adj: Vec<Vec<usize>> = peers
            .iter()
            .map(|p| {
                o.overlay_neighbors(*p)
                    .unwrap()
                    .iter()
                    .map(|q| index[q])
                    .collect()
            })
            .collect();
        let mut diameter = 0;
        let mut connected = true;
        for s in 0..peers.len() {
            let mut dist = vec![u32::MAX; peers.len()];
            dist[s] = 0;
            let mut q = VecDeque::from([s]);
            while let Some(u) = q.pop_front() {
                for &v in &adj[u] {
                    if dist[v] == u32::MAX {
                        dist[v] = dist[u] + 1;
                        q.push_back(v);
                    }
                }
            }
            for &d in &dist {
                if d == u32::MAX {
                    connected = false;
                } else {
                    diameter = diameter.max(d);
                }
            }
        }
        (diameter, connected)
    }

    #[test]
    fn empty_network() {
        let o = OverlayState::new(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(coverage(&o), 0.0);
        assert_eq!(avg_coverage(&o), 0.0);
        assert_eq!(degree_stats(&o), (0.0, 0));
        assert_eq!(bfs_diameter_estimate(&o, &mut rng).estimate, 0);
        assert_eq!(random_path_length(&o, &mut rng).mean, None);
    }

    #[test]
    fn single_peer() {
        let o = overlay_with(&[VertexLabel::from_bits("0101", 2).unwrap()]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(degree_stats(&o), (0.0, 0));
        assert_eq!(bfs_diameter_estimate(&o, &mut rng).estimate, 0);
        assert_eq!(coverage(&o), 1.0 / 64.0);
    }

    #[test]
    fn clique_estimates() {
        let o = overlay_with(&[VertexLabel::from_bits("0101", 2).unwrap(); 5]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bfs = bfs_diameter_estimate(&o, &mut rng);
        assert_eq!(bfs.estimate, 2);
        assert!(!bfs.disconnected);
        assert_eq!(degree_stats(&o), (4.0, 4));
        assert_eq!(random_path_length(&o, &mut rng).mean, Some(0.0));
    }

    #[test]
    fn full_coverage() {
        let labels: Vec<_> = labels(3).collect();
        let o = overlay_with(&labels);
        assert_eq!(coverage(&o), 1.0);
        assert_eq!(avg_coverage(&o), 1.0);
        assert_eq!(degree_stats(&o), (3.0, 3));
    }

    #[test]
    fn degree_matches_neighbor_enumeration() {
        let o = random_overlay(4, 300, 2);
        let (mean, max) = degree_stats(&o);
        let degrees: Vec<usize> = o
            .live_peers()
            .iter()
            .map(|p| o.overlay_neighbors(*p).unwrap().len())
            .collect();
        assert_eq!(max, *degrees.iter().max().unwrap());
        let exact = degrees.iter().sum::<usize>() as f64 / degrees.len() as f64;
        assert!((mean - exact).abs() < 1e-12);
        // Clique edges alone give at least avg_coverage - 1.
        assert!(mean >= avg_coverage(&o) - 1.0);
    }

    #[test]
    fn bfs_estimate_brackets_exact_diameter() {
        for seed in 0..6 {
            let o = random_overlay(4, 400, seed);
            let (exact, connected) = exact_diameter(&o);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..5 {
                let bfs = bfs_diameter_estimate(&o, &mut rng);
                assert_eq!(bfs.disconnected, !connected);
                if connected {
                    assert!(bfs.height <= exact);
                    assert!(
                        bfs.estimate >= exact,
                        "estimate {} < exact {exact}",
                        bfs.estimate
                    );
                    assert!(bfs.estimate <= 2 * exact);
                }
            }
        }
    }

    #[test]
    fn disconnected_is_flagged() {
        // Two far-apart labels at dimension 4 with nothing in between.
        let o = overlay_with(&[
            VertexLabel::from_bits("0000", 1).unwrap(),
            VertexLabel::from_bits("1111", 3).unwrap(),
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(bfs_diameter_estimate(&o, &mut rng).disconnected);
        let paths = random_path_length(&o, &mut rng);
        assert_eq!(paths.mean, None);
        assert_eq!(paths.failures, paths.samples);
    }

    #[test]
    fn metrics_do_not_mutate_state() {
        let o = random_overlay(4, 200, 9);
        let before = o.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let _ = MetricsSnapshot::capture(&o, 0.0, false, &mut rng);
        assert_eq!(o, before);
    }

    #[test]
    fn random_path_within_route_bounds() {
        let o = random_overlay(5, 3000, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_path_length(&o, &mut rng);
        assert_eq!(p.samples, 12);
        let mean = p.mean.unwrap();
        assert!(mean <= 3.0 * 5.0 - 1.0);
    }

    #[test]
    fn g_format() {
        assert_eq!(fmt_g(0.0), "0");
        assert_eq!(fmt_g(1.0), "1");
        assert_eq!(fmt_g(100.0), "100");
        assert_eq!(fmt_g(0.5), "0.5");
        assert_eq!(fmt_g(1.0 / 3.0), "0.333333");
        assert_eq!(fmt_g(123456.0), "123456");
        assert_eq!(fmt_g(1234567.0), "1.23457e+06");
        assert_eq!(fmt_g(0.0001), "0.0001");
        assert_eq!(fmt_g(0.00001234), "1.234e-05");
        assert_eq!(fmt_g(-2.5), "-2.5");
        assert_eq!(fmt_g(99.99999), "100");
        assert_eq!(fmt_g(f64::NAN), "nan");
    }

    #[test]
    fn csv_has_one_field_per_column() {
        let o = random_overlay(3, 50, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = MetricsSnapshot::capture(&o, 10.0, true, &mut rng);
        assert_eq!(csv_row(&s).split(',').count(), CSV_COLUMNS.len());
        let mut buf = Vec::new();
        write_csv(&mut buf, &[s]).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("time,live_peers,"));
    }
}
