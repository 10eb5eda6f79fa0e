mod common;

use std::collections::BTreeSet;

use bulkcast::steiner::{min_weight_steiner_tree, shortest_path_union, EdgeWeights};
use bulkcast::topology::{bundled, Topology};
use bulkcast::NodeId;
use proptest::prelude::*;
use rand::Rng;

use common::{random_connected, random_terminals, rng};

/// All-pairs hop counts by Floyd-Warshall over the link list.
fn floyd_warshall(topo: &Topology<f64>) -> Vec<Vec<u32>> {
    let n = topo.node_count();
    let inf = u32::MAX / 2;
    let mut d = vec![vec![inf; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for e in topo.edges() {
        d[e.src.index()][e.dst.index()] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

/// Shortest-path distance by Bellman-Ford relaxation.
fn bellman_ford(topo: &Topology<f64>, w: &[f64], root: NodeId) -> Vec<f64> {
    let mut d = vec![f64::INFINITY; topo.node_count()];
    d[root.index()] = 0.0;
    for _ in 0..topo.node_count() {
        for (i, e) in topo.edges().iter().enumerate() {
            let cand = d[e.src.index()] + w[i];
            if cand < d[e.dst.index()] {
                d[e.dst.index()] = cand;
            }
        }
    }
    d
}

fn random_weights(r: &mut impl Rng, m: usize) -> Vec<f64> {
    (0..m).map(|_| if r.random_bool(0.1) { 0.0 } else { r.random_range(0.01..5.0) }).collect()
}

#[test]
fn bundled_topologies_have_expected_sizes() {
    for (text, nodes, links) in [(bundled::ANS, 18, 25), (bundled::GEANT, 34, 52), (bundled::UNINETT, 69, 98)] {
        let topo: Topology<f64> = Topology::from_json_str(text).unwrap();
        assert_eq!((topo.node_count(), topo.link_count()), (nodes, links), "{}", topo.name());
        assert_eq!(topo.edge_count(), 2 * links);
        assert_eq!(topo.max_capacity(), 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn hop_distances_match_floyd_warshall(seed in any::<u64>(), nodes in 2usize..14, extra in 0usize..12) {
        let topo = random_connected(&mut rng(seed), nodes, extra);
        let hops = topo.hop_distances();
        let oracle = floyd_warshall(&topo);
        for a in topo.node_ids() {
            for b in topo.node_ids() {
                let d = hops.get(a, b);
                prop_assert_eq!(d, oracle[a.index()][b.index()]);
                prop_assert_eq!(d, hops.get(b, a));
                for c in topo.node_ids() {
                    prop_assert!(d <= hops.get(a, c) + hops.get(c, b));
                }
            }
        }
    }

    #[test]
    fn serialization_round_trips(seed in any::<u64>(), nodes in 2usize..14, extra in 0usize..12) {
        let mut r = rng(seed);
        let mut file = random_connected(&mut r, nodes, extra).to_file();
        for link in &mut file.links {
            link.capacity = r.random_range(0.5..100.0);
        }
        let topo: Topology<f64> = Topology::from_file(file, true).unwrap();
        let again: Topology<f64> = Topology::from_json_str(&topo.to_json_string()).unwrap();
        prop_assert_eq!(&again, &topo);
        prop_assert_eq!(again.node_names(), topo.node_names());
        for (a, b) in again.edges().iter().zip(topo.edges()) {
            prop_assert_eq!((a.src, a.dst), (b.src, b.dst));
            prop_assert_eq!(a.capacity, b.capacity);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn steiner_trees_are_valid_and_bounded(seed in any::<u64>(), nodes in 2usize..10, extra in 0usize..10) {
        let mut r = rng(seed);
        let topo = random_connected(&mut r, nodes, extra);
        let w = random_weights(&mut r, topo.edge_count());
        let weights = EdgeWeights::new(w.clone()).unwrap();
        let root = NodeId::from(r.random_range(0..nodes));
        let terminals = random_terminals(&mut r, nodes, root.index(), 5);

        let tree = min_weight_steiner_tree(&topo, &weights, root, &terminals).unwrap();
        prop_assert_eq!(tree.validate(&topo), Ok(()));
        prop_assert_eq!(tree.root, root);
        prop_assert_eq!(&tree.terminals, &terminals);
        let recomputed: f64 = tree.edges.iter().map(|&e| w[e.index()]).sum();
        prop_assert!((tree.weight - recomputed).abs() <= 1e-9 * recomputed.max(1.0));

        let spu = shortest_path_union(&topo, &weights, root, &terminals).unwrap();
        prop_assert!(tree.weight <= spu.weight + 1e-12);

        let again = min_weight_steiner_tree(&topo, &weights, root, &terminals).unwrap();
        prop_assert_eq!(again, tree);
    }

    #[test]
    fn single_terminal_is_a_shortest_path(seed in any::<u64>(), nodes in 2usize..10, extra in 0usize..10) {
        let mut r = rng(seed);
        let topo = random_connected(&mut r, nodes, extra);
        let w = random_weights(&mut r, topo.edge_count());
        let weights = EdgeWeights::new(w.clone()).unwrap();
        let root = NodeId::from(r.random_range(0..nodes));
        let target = loop {
            let t = r.random_range(0..nodes);
            if t != root.index() {
                break NodeId::from(t);
            }
        };
        let tree = min_weight_steiner_tree(&topo, &weights, root, &BTreeSet::from([target])).unwrap();
        let oracle = bellman_ford(&topo, &w, root)[target.index()];
        prop_assert!((tree.weight - oracle).abs() <= 1e-9 * oracle.max(1.0), "{} vs {}", tree.weight, oracle);
    }
}
