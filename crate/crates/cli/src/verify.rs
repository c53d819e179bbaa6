//! Brute-force oracle checks at small dimensions.

use std::fmt;

use ccc_dht::churn::{ChurnConfig, Simulation};
use ccc_dht::template::{self, VertexLabel};
use ccc_dht::OverlayState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dimensions up to this one get exhaustive all-pairs route checks.
const EXHAUSTIVE_ROUTE_DIM: u8 = 4;
const RANDOM_ROUTE_PAIRS: usize = 10_000;
pub const MAX_VERIFY_DIM: u8 = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {}: {}", self.name, self.detail)
    }
}

fn pass(name: &'static str, detail: String) -> CheckResult {
    CheckResult {
        name,
        passed: true,
        detail,
    }
}

fn fail(name: &'static str, detail: String) -> CheckResult {
    CheckResult {
        name,
        passed: false,
        detail,
    }
}

fn all_labels(dim: u8) -> Vec<VertexLabel> {
    (0..template::vertex_count(dim))
        .map(|i| VertexLabel::from_index(i, dim).expect("valid index"))
        .collect()
}

/// Every label lists each neighbor once, neighbors list it back, and the
/// degree is 3 (2 at dimension 2, 1 at dimension 1).
pub fn check_symmetry(dim: u8) -> CheckResult {
    let expected = match dim {
        1 => 1,
        2 => 2,
        _ => 3,
    };
    for v in all_labels(dim) {
        let ns = template::neighbors(v);
        if ns.len() != expected {
            return fail(
                "symmetry",
                format!("{v} has {} neighbors, expected {expected}", ns.len()),
            );
        }
        for (i, u) in ns.iter().enumerate() {
            if ns[..i].contains(u) || *u == v {
                return fail("symmetry", format!("{v} lists {u} twice or itself"));
            }
            if !template::neighbors(*u).contains(&v) {
                return fail(
                    "symmetry",
                    format!("{u} is a neighbor of {v} but not vice versa"),
                );
            }
        }
    }
    pass(
        "symmetry",
        format!("{} labels, degree {expected}", template::vertex_count(dim)),
    )
}

fn check_route(src: VertexLabel, dst: VertexLabel, bfs: &[u32]) -> Result<usize, String> {
    let path = template::bit_fix_route(src, dst).map_err(|e| e.to_string())?;
    if path.first() != Some(&src) || path.last() != Some(&dst) {
        return Err(format!("route {src} -> {dst} does not join its endpoints"));
    }
    for w in path.windows(2) {
        if !template::adjacent(w[0], w[1]) {
            return Err(format!(
                "route {src} -> {dst} steps {} -> {} off an edge",
                w[0], w[1]
            ));
        }
    }
    let hops = path.len() - 1;
    let dim = src.dim() as usize;
    if hops > 3 * dim {
        return Err(format!("route {src} -> {dst} has {hops} hops > 3*{dim}"));
    }
    let shortest = bfs[dst.index()] as usize;
    if hops < shortest {
        return Err(format!(
            "route {src} -> {dst} has {hops} hops < BFS distance {shortest}"
        ));
    }
    Ok(hops)
}

/// Bit-fixing routes against BFS distances.
pub fn check_routes(dim: u8, seed: u64) -> CheckResult {
    let labels = all_labels(dim);
    let mut checked = 0usize;
    let mut longest = 0usize;
    if dim <= EXHAUSTIVE_ROUTE_DIM {
        for &src in &labels {
            let bfs = template::bfs_distances(src);
            for &dst in &labels {
                match check_route(src, dst, &bfs) {
                    Ok(h) => longest = longest.max(h),
                    Err(e) => return fail("routes", e),
                }
                checked += 1;
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..RANDOM_ROUTE_PAIRS {
            let src = labels[rng.random_range(0..labels.len())];
            let dst = labels[rng.random_range(0..labels.len())];
            let bfs = template::bfs_distances(src);
            match check_route(src, dst, &bfs) {
                Ok(h) => longest = longest.max(h),
                Err(e) => return fail("routes", e),
            }
            checked += 1;
        }
    }
    pass(
        "routes",
        format!("{checked} pairs valid, longest route {longest} hops"),
    )
}

pub fn check_diameter(dim: u8) -> CheckResult {
    let exact = match template::bfs_diameter(dim) {
        Ok(d) => d,
        Err(e) => return fail("diameter", e.to_string()),
    };
    let formula = template::ccc_diameter(dim).expect("dimension validated");
    if dim >= 4 {
        let closed = 2 * dim as u32 + dim as u32 / 2 - 2;
        if closed != exact || formula != exact {
            return fail(
                "diameter",
                format!("closed form {closed}, ccc_diameter {formula}, BFS {exact}"),
            );
        }
        pass("diameter", format!("closed form matches BFS: {exact}"))
    } else if formula != exact {
        fail("diameter", format!("ccc_diameter {formula}, BFS {exact}"))
    } else {
        pass("diameter", format!("BFS diameter {exact}"))
    }
}

/// The stored occupancy index equals one rebuilt from the peer table.
pub fn check_occupancy(overlay: &OverlayState) -> CheckResult {
    match overlay.occupancy_mismatch() {
        None => pass(
            "occupancy",
            format!("index matches {} live peers", overlay.len()),
        ),
        Some(label) => fail(
            "occupancy",
            format!("index disagrees with the peer table at {label}"),
        ),
    }
}

/// A short churn trace at `dim`, for the occupancy check.
pub fn churned_overlay(dim: u8, seed: u64) -> OverlayState {
    let n = (template::vertex_count(dim) * 8) as f64;
    let mut config = ChurnConfig::steady(n, (n / 50.0).max(1.0), 10.0 * 50.0, seed);
    config.dim = Some(dim);
    config.sample_interval = 50.0;
    let mut sim = Simulation::new(config).expect("valid trace configuration");
    while sim.step().expect("trace runs").is_some() {}
    sim.overlay().clone()
}

pub fn run_verify(dim: u8, seed: u64) -> Vec<CheckResult> {
    let mut out = vec![
        check_symmetry(dim),
        check_routes(dim, seed),
        check_diameter(dim),
    ];
    if dim >= 2 {
        out.push(check_occupancy(&churned_overlay(dim, seed)));
    }
    out
}
