//! The static cube-connected-cycles (CCC) template graph.
//!
//! A vertex of the `r`-dimensional CCC is a pair `<w, i>`: an `r`-bit hypercube
//! word `w` and a position `i` in `1..=r` on the cycle that replaces that
//! hypercube corner. Bits of `w` are numbered `1..=r` from the left, and the
//! hypercube edge at position `i` flips bit `i`.
//!
//! Words are stored in the low `r` bits of a `u64`, bit 1 being the most
//! significant of those. Dropping the last bit is therefore `w >> 1` and a
//! hash digest prefix of length `r` is simply its top `r` bits.

use std::collections::VecDeque;
use std::fmt;

use arrayvec::ArrayVec;
use rand::Rng;

use crate::error::{Error, Result};

/// Largest dimension the label arithmetic supports.
pub const MAX_LABEL_DIM: u8 = 32;

/// Maximum degree of the CCC.
pub const CCC_MAX_DEGREE: usize = 3;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexLabel {
    word: u64,
    cycle_pos: u8,
    dim: u8,
}

impl VertexLabel {
    pub fn new(word: u64, cycle_pos: u8, dim: u8) -> Result<Self> {
        if dim == 0 || dim > MAX_LABEL_DIM {
            return Err(Error::Structural(format!(
                "dimension {dim} outside 1..={MAX_LABEL_DIM}"
            )));
        }
        if cycle_pos == 0 || cycle_pos > dim {
            return Err(Error::Structural(format!(
                "cycle position {cycle_pos} outside 1..={dim}"
            )));
        }
        if word >> dim != 0 {
            return Err(Error::Structural(format!(
                "word {word:#b} is wider than {dim} bits"
            )));
        }
        Ok(Self {
            word,
            cycle_pos,
            dim,
        })
    }

    /// Parses a word written as a bit string, e.g. `VertexLabel::from_bits("010", 2)`.
    pub fn from_bits(bits: &str, cycle_pos: u8) -> Result<Self> {
        let dim = u8::try_from(bits.len())
            .map_err(|_| Error::Structural(format!("word `{bits}` is too long")))?;
        let word = u64::from_str_radix(bits, 2)
            .map_err(|_| Error::Structural(format!("word `{bits}` is not a bit string")))?;
        Self::new(word, cycle_pos, dim)
    }

    /// Inverse of [`VertexLabel::index`].
    pub fn from_index(index: usize, dim: u8) -> Result<Self> {
        let d = dim as usize;
        if dim == 0 || dim > MAX_LABEL_DIM || index >= vertex_count(dim) {
            return Err(Error::Structural(format!(
                "index {index} outside dimension {dim}"
            )));
        }
        Ok(Self {
            word: (index / d) as u64,
            cycle_pos: (index % d) as u8 + 1,
            dim,
        })
    }

    #[inline]
    pub fn word(&self) -> u64 {
        self.word
    }

    #[inline]
    pub fn cycle_pos(&self) -> u8 {
        self.cycle_pos
    }

    #[inline]
    pub fn dim(&self) -> u8 {
        self.dim
    }

    /// Dense index in `0..dim * 2^dim`.
    #[inline]
    pub fn index(&self) -> usize {
        self.word as usize * self.dim as usize + (self.cycle_pos as usize - 1)
    }

    /// Bit `i` of the word, `i` in `1..=dim`.
    #[inline]
    pub fn bit(&self, i: u8) -> u64 {
        debug_assert!(i >= 1 && i <= self.dim);
        (self.word >> (self.dim - i)) & 1
    }

    /// The label across the hypercube edge at this label's position.
    #[inline]
    pub fn hypercube_neighbor(&self) -> Self {
        Self {
            word: self.word ^ (1 << (self.dim - self.cycle_pos)),
            ..*self
        }
    }

    #[inline]
    fn at_pos(&self, cycle_pos: u8) -> Self {
        Self { cycle_pos, ..*self }
    }

    /// Maps the label onto another dimension: the word is truncated (dropping
    /// trailing bits) or zero-extended, and the cycle position is clamped.
    pub fn project_to(&self, dim: u8) -> Self {
        debug_assert!(dim >= 1 && dim <= MAX_LABEL_DIM);
        let word = if dim <= self.dim {
            self.word >> (self.dim - dim)
        } else {
            self.word << (dim - self.dim)
        };
        Self {
            word,
            cycle_pos: self.cycle_pos.min(dim),
            dim,
        }
    }

    /// Drops the last word bit; the cycle position is clamped to the new range.
    pub fn drop_last_bit(&self) -> Result<Self> {
        if self.dim < 2 {
            return Err(Error::Structural(
                "cannot shrink a 1-dimensional label".into(),
            ));
        }
        Ok(self.project_to(self.dim - 1))
    }

    /// Appends `bit` to the word; the cycle position is unchanged.
    pub fn append_bit(&self, bit: bool) -> Result<Self> {
        if self.dim >= MAX_LABEL_DIM {
            return Err(Error::Structural(format!(
                "cannot grow beyond dimension {MAX_LABEL_DIM}"
            )));
        }
        Ok(Self {
            word: (self.word << 1) | bit as u64,
            cycle_pos: self.cycle_pos,
            dim: self.dim + 1,
        })
    }
}

impl fmt::Display for VertexLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "<{:0width$b},{}>",
            self.word,
            self.cycle_pos,
            width = self.dim as usize
        )
    }
}

impl fmt::Debug for VertexLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Size, diameter and degree of the template at one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TemplateParams {
    pub dim: u8,
    pub vertex_count: usize,
    pub diameter: u32,
    pub max_degree: usize,
}

impl TemplateParams {
    pub fn new(dim: u8) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self {
            dim,
            vertex_count: vertex_count(dim),
            diameter: ccc_diameter(dim)?,
            max_degree: CCC_MAX_DEGREE,
        })
    }
}

fn check_dim(dim: u8) -> Result<()> {
    if dim == 0 || dim > MAX_LABEL_DIM {
        Err(Error::Structural(format!(
            "dimension {dim} outside 1..={MAX_LABEL_DIM}"
        )))
    } else {
        Ok(())
    }
}

/// `dim * 2^dim`.
#[inline]
pub fn vertex_count(dim: u8) -> usize {
    (dim as usize) << dim
}

/// Template neighbors of `v`: previous and next cycle position, then the
/// hypercube edge. Duplicates (dimension 2) and self loops (dimension 1) are
/// removed.
pub fn neighbors(v: VertexLabel) -> ArrayVec<VertexLabel, 3> {
    let r = v.dim;
    let mut out = ArrayVec::new();
    if r >= 2 {
        let prev = if v.cycle_pos == 1 { r } else { v.cycle_pos - 1 };
        let next = if v.cycle_pos == r { 1 } else { v.cycle_pos + 1 };
        out.push(v.at_pos(prev));
        if next != prev {
            out.push(v.at_pos(next));
        }
    }
    out.push(v.hypercube_neighbor());
    out
}

/// True when `a` and `b` share a template edge.
pub fn adjacent(a: VertexLabel, b: VertexLabel) -> bool {
    a.dim == b.dim && a != b && neighbors(a).contains(&b)
}

/// Appends the cycle walk from `from.cycle_pos` to `to_pos` (exclusive of the
/// start) to `path`, taking the shorter arc and going up on ties.
fn walk_cycle(path: &mut Vec<VertexLabel>, from: VertexLabel, to_pos: u8) -> VertexLabel {
    let r = from.dim as i32;
    let up = (to_pos as i32 - from.cycle_pos as i32).rem_euclid(r);
    let down = r - up;
    let mut cur = from;
    if up == 0 {
        return cur;
    }
    let (steps, delta) = if up <= down { (up, 1) } else { (down, -1) };
    for _ in 0..steps {
        let p = (cur.cycle_pos as i32 - 1 + delta).rem_euclid(r) + 1;
        cur = cur.at_pos(p as u8);
        path.push(cur);
    }
    cur
}

/// Bit-fixing route from `src` to `dst`.
///
/// Word bits are fixed in ascending position order; between two fixes the
/// route moves along the cycle by the shorter arc. The returned path starts at
/// `src`, ends at `dst` and has at most `3 * dim - 1` hops.
pub fn bit_fix_route(src: VertexLabel, dst: VertexLabel) -> Result<Vec<VertexLabel>> {
    if src.dim != dst.dim {
        return Err(Error::DimensionMismatch {
            left: src.dim,
            right: dst.dim,
        });
    }
    let mut path = Vec::with_capacity(3 * src.dim as usize);
    path.push(src);
    let mut cur = src;
    let diff = src.word ^ dst.word;
    for i in 1..=src.dim {
        if (diff >> (src.dim - i)) & 1 == 1 {
            cur = walk_cycle(&mut path, cur, i);
            cur = cur.hypercube_neighbor();
            path.push(cur);
        }
    }
    walk_cycle(&mut path, cur, dst.cycle_pos);
    Ok(path)
}

/// Number of hops [`bit_fix_route`] takes, without materialising the path.
pub fn route_len(src: VertexLabel, dst: VertexLabel) -> Result<usize> {
    Ok(bit_fix_route(src, dst)?.len() - 1)
}

/// Breadth-first distances from `src` to every label of its dimension,
/// indexed by [`VertexLabel::index`].
pub fn bfs_distances(src: VertexLabel) -> Vec<u32> {
    let n = vertex_count(src.dim);
    let mut dist = vec![u32::MAX; n];
    let mut queue = VecDeque::new();
    dist[src.index()] = 0;
    queue.push_back(src);
    while let Some(v) = queue.pop_front() {
        let d = dist[v.index()];
        for u in neighbors(v) {
            if dist[u.index()] == u32::MAX {
                dist[u.index()] = d + 1;
                queue.push_back(u);
            }
        }
    }
    dist
}

/// Exact diameter by breadth-first search from every vertex.
pub fn bfs_diameter(dim: u8) -> Result<u32> {
    check_dim(dim)?;
    let n = vertex_count(dim);
    let mut diameter = 0;
    for idx in 0..n {
        let src = VertexLabel::from_index(idx, dim)?;
        let ecc = bfs_distances(src).into_iter().max().unwrap_or(0);
        diameter = diameter.max(ecc);
    }
    Ok(diameter)
}

/// Diameter of the CCC: `2r + floor(r/2) - 2` for `r >= 4`, exhaustive search below.
pub fn ccc_diameter(dim: u8) -> Result<u32> {
    check_dim(dim)?;
    if dim >= 4 {
        let r = dim as u32;
        Ok(2 * r + r / 2 - 2)
    } else {
        bfs_diameter(dim)
    }
}

/// Breadth-first spanning tree of the template rooted at `root`; entry `i` is
/// the parent index of the label with index `i` (`None` for the root).
pub fn bfs_tree(root: VertexLabel) -> Vec<Option<usize>> {
    let n = vertex_count(root.dim);
    let mut parent = vec![None; n];
    let mut seen = vec![false; n];
    let mut queue = VecDeque::new();
    seen[root.index()] = true;
    queue.push_back(root);
    while let Some(v) = queue.pop_front() {
        for u in neighbors(v) {
            if !seen[u.index()] {
                seen[u.index()] = true;
                parent[u.index()] = Some(v.index());
                queue.push_back(u);
            }
        }
    }
    parent
}

/// Uniformly random label: `dim` fair bits and a uniform cycle position.
pub fn random_label<R: Rng + ?Sized>(dim: u8, rng: &mut R) -> VertexLabel {
    assert!(
        dim >= 1 && dim <= MAX_LABEL_DIM,
        "dimension {dim} out of range"
    );
    let word = rng.random::<u64>() & ((1u64 << dim) - 1);
    VertexLabel {
        word,
        cycle_pos: rng.random_range(1..=dim),
        dim,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn l(bits: &str, pos: u8) -> VertexLabel {
        VertexLabel::from_bits(bits, pos).unwrap()
    }

    #[test]
    fn neighbors_of_middle_position() {
        let got: Vec<_> = neighbors(l("010", 2)).into_iter().collect();
        assert_eq!(got, vec![l("010", 1), l("010", 3), l("000", 2)]);
    }

    #[test]
    fn neighbors_wrap_around() {
        let got: Vec<_> = neighbors(l("000", 1)).into_iter().collect();
        assert_eq!(got, vec![l("000", 3), l("000", 2), l("100", 1)]);
    }

    #[test]
    fn dimension_two_cycle_is_single_edge() {
        let got: Vec<_> = neighbors(l("00", 1)).into_iter().collect();
        assert_eq!(got, vec![l("00", 2), l("10", 1)]);
    }

    #[test]
    fn invalid_labels_rejected() {
        assert!(VertexLabel::new(0, 0, 3).is_err());
        assert!(VertexLabel::new(0, 4, 3).is_err());
        assert!(VertexLabel::new(0b1000, 1, 3).is_err());
        assert!(VertexLabel::from_bits("01x", 1).is_err());
        assert!(VertexLabel::from_bits("", 1).is_err());
    }

    #[test]
    fn symmetric_and_cubic_exhaustive() {
        for dim in 2..=6u8 {
            for idx in 0..vertex_count(dim) {
                let v = VertexLabel::from_index(idx, dim).unwrap();
                let ns = neighbors(v);
                if dim >= 3 {
                    assert_eq!(ns.len(), 3, "{v}");
                }
                for u in ns {
                    assert_ne!(u, v);
                    assert!(neighbors(u).contains(&v), "{u} -/- {v}");
                }
            }
        }
    }

    #[test]
    fn route_dim2_example() {
        let path = bit_fix_route(l("00", 1), l("11", 2)).unwrap();
        assert_eq!(path, vec![l("00", 1), l("10", 1), l("10", 2), l("11", 2)]);
        // Matches the BFS distance on the 8-vertex CCC.
        assert_eq!(bfs_distances(l("00", 1))[l("11", 2).index()], 3);
    }

    #[test]
    fn route_to_self_is_trivial() {
        let v = l("1011", 3);
        assert_eq!(bit_fix_route(v, v).unwrap(), vec![v]);
    }

    #[test]
    fn route_dimension_mismatch() {
        assert!(matches!(
            bit_fix_route(l("10", 1), l("100", 1)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn route_exhaustive_dim4_against_bfs() {
        let dim = 4;
        for s in 0..vertex_count(dim) {
            let src = VertexLabel::from_index(s, dim).unwrap();
            let dist = bfs_distances(src);
            for t in 0..vertex_count(dim) {
                let dst = VertexLabel::from_index(t, dim).unwrap();
                let path = bit_fix_route(src, dst).unwrap();
                assert_eq!(path[0], src);
                assert_eq!(*path.last().unwrap(), dst);
                for w in path.windows(2) {
                    assert!(adjacent(w[0], w[1]), "{} -> {}", w[0], w[1]);
                }
                let hops = path.len() as u32 - 1;
                assert!(hops <= 3 * dim as u32);
                assert!(hops >= dist[t]);
            }
        }
    }

    #[test]
    fn diameter_formula_instances() {
        assert_eq!(ccc_diameter(4).unwrap(), 8);
        assert_eq!(ccc_diameter(5).unwrap(), 10);
        assert!(ccc_diameter(0).is_err());
    }

    #[test]
    fn small_diameters_by_search() {
        // dim 3 from the exhaustive search: 24 vertices.
        assert_eq!(ccc_diameter(3).unwrap(), bfs_diameter(3).unwrap());
        assert_eq!(ccc_diameter(3).unwrap(), 6);
        assert_eq!(ccc_diameter(2).unwrap(), 4);
        assert_eq!(ccc_diameter(1).unwrap(), 1);
    }

    #[test]
    fn bfs_tree_is_rooted() {
        let root = VertexLabel::new(0, 1, 4).unwrap();
        let parent = bfs_tree(root);
        assert_eq!(parent.iter().filter(|p| p.is_none()).count(), 1);
        assert!(parent[root.index()].is_none());
    }

    #[test]
    fn random_label_deterministic_and_degenerate() {
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert_eq!(random_label(5, &mut a), random_label(5, &mut b));
        }
        for _ in 0..100 {
            let v = random_label(1, &mut a);
            assert_eq!(v.cycle_pos(), 1);
            assert!(v.word() <= 1);
        }
    }

    #[test]
    fn projection_drop_and_append_are_inverse() {
        let v = l("10110", 5);
        let down = v.drop_last_bit().unwrap();
        assert_eq!(down, l("1011", 4));
        assert_eq!(down.append_bit(false).unwrap().cycle_pos(), 4);
        let w = l("10110", 3);
        assert_eq!(w.drop_last_bit().unwrap().append_bit(false).unwrap(), w);
        assert_eq!(l("1", 1).project_to(3), l("100", 1));
    }

    #[test]
    fn display_pads_word() {
        assert_eq!(l("001", 2).to_string(), "<001,2>");
    }
}
