use ccc_dht::template::{self, VertexLabel};
use proptest::prelude::*;

fn label(dim: u8) -> impl Strategy<Value = VertexLabel> {
    (0..template::vertex_count(dim)).prop_map(move |i| VertexLabel::from_index(i, dim).unwrap())
}

fn pair() -> impl Strategy<Value = (VertexLabel, VertexLabel)> {
    (2u8..=10).prop_flat_map(|d| (label(d), label(d)))
}

proptest! {
    #[test]
    fn route_walks_edges_to_destination((src, dst) in pair()) {
        let path = template::bit_fix_route(src, dst).unwrap();
        prop_assert_eq!(path[0], src);
        prop_assert_eq!(*path.last().unwrap(), dst);
        for w in path.windows(2) {
            prop_assert!(template::adjacent(w[0], w[1]), "{} -> {}", w[0], w[1]);
        }
        prop_assert!(path.len() - 1 <= 3 * src.dim() as usize);
    }

    #[test]
    fn route_is_never_shorter_than_bfs((src, dst) in pair()) {
        let hops = template::route_len(src, dst).unwrap();
        let bfs = template::bfs_distances(src)[dst.index()] as usize;
        prop_assert!(hops >= bfs);
        prop_assert_eq!(hops == 0, src == dst);
    }

    #[test]
    fn neighbors_are_symmetric(v in (2u8..=12).prop_flat_map(label)) {
        for u in template::neighbors(v) {
            prop_assert!(template::neighbors(u).contains(&v));
        }
    }
}

#[test]
fn bfs_diameter_matches_closed_form() {
    for dim in 4..=7u8 {
        let d = dim as u32;
        assert_eq!(
            template::bfs_diameter(dim).unwrap(),
            2 * d + d / 2 - 2,
            "dim {dim}"
        );
        assert_eq!(template::ccc_diameter(dim).unwrap(), 2 * d + d / 2 - 2);
    }
}

#[test]
fn dimension_two_is_an_eight_cycle() {
    assert_eq!(template::vertex_count(2), 8);
    assert_eq!(template::bfs_diameter(2).unwrap(), 4);
    for i in 0..8 {
        let v = VertexLabel::from_index(i, 2).unwrap();
        assert_eq!(template::neighbors(v).len(), 2);
    }
}
