use super::*;
use crate::kg::{build_merged_graph, AnchorSet, KnowledgeGraph};
use crate::synth::{random_merged_graph, RandomGraphSpec};
use proptest::prelude::*;

fn e1(i: u32) -> EntityId {
    EntityId::new(Side::Kg1, i)
}
fn e2(i: u32) -> EntityId {
    EntityId::new(Side::Kg2, i)
}

/// G1: u -r1-> x, G2: v -r2-> y, anchor (x, y).
fn four_node() -> (MergedGraph, KnowledgeGraph, KnowledgeGraph) {
    let mut g1 = KnowledgeGraph::new(Side::Kg1);
    g1.add_triple("u", "r1", "x");
    let mut g2 = KnowledgeGraph::new(Side::Kg2);
    g2.add_triple("v", "r2", "y");
    let a = AnchorSet::new(vec![(g1.entity("x").unwrap(), g2.entity("y").unwrap())]);
    (build_merged_graph(&g1, &g2, &a).unwrap(), g1, g2)
}

fn oracle_edges(g: &MergedGraph, u: EntityId, v: EntityId, k: usize) -> BTreeSet<Edge> {
    enumerate_paths_oracle(g, u, v, k)
        .unwrap()
        .into_iter()
        .flat_map(|p| p.edges)
        .collect()
}

fn opposite(g: &MergedGraph, u: EntityId) -> Vec<EntityId> {
    g.side_range(u.side.opposite()).map(|n| g.entity(n)).collect()
}

#[test]
fn single_anchor_edge_k1() {
    let mut g1 = KnowledgeGraph::new(Side::Kg1);
    g1.entities.intern("u");
    let mut g2 = KnowledgeGraph::new(Side::Kg2);
    g2.entities.intern("v");
    let g = build_merged_graph(&g1, &g2, &AnchorSet::new(vec![(e1(0), e2(0))])).unwrap();
    let asg = extract_pair_asg(&g, e1(0), e2(0), 1).unwrap();
    let expected: BTreeSet<Edge> = [Edge::new(0, g.anchor_relation(), 1)].into();
    assert_eq!(asg.edge_set(), expected);
    assert_eq!(asg.targets, vec![1]);
}

#[test]
fn four_node_chain_k3() {
    let (g, g1, g2) = four_node();
    let u = g1.entity("u").unwrap();
    let v = g2.entity("v").unwrap();
    let asg = extract_pair_asg(&g, u, v, 3).unwrap();
    let (nu, nx) = (g.node(u), g.node(g1.entity("x").unwrap()));
    let (nv, ny) = (g.node(v), g.node(g2.entity("y").unwrap()));
    // r1 = 0, r2 = 1 (forward), r2' = 3, anchor = 4
    let expected: BTreeSet<Edge> = [
        Edge::new(nu, 0, nx),
        Edge::new(nx, g.anchor_relation(), ny),
        Edge::new(ny, 3, nv),
    ]
    .into();
    assert_eq!(asg.edge_set(), expected);
    assert_eq!(asg.edge_set(), oracle_edges(&g, u, v, 3));
    assert_eq!(asg.layers[0], vec![Edge::new(nu, 0, nx)]);

    let paths = enumerate_paths_oracle(&g, u, v, 3).unwrap();
    assert_eq!(paths.len(), 1);
    assert_eq!(paths[0].len(), 3);
    assert_eq!(paths[0].anchor_position(), Some(1));
    assert!(paths[0].is_symmetric());
}

#[test]
fn directed_by_director_chain() {
    let mut g1 = KnowledgeGraph::new(Side::Kg1);
    g1.add_triple("A", "directed_by", "X");
    let mut g2 = KnowledgeGraph::new(Side::Kg2);
    g2.add_triple("B", "director", "Y");
    let a = AnchorSet::new(vec![(g1.entity("A").unwrap(), g2.entity("B").unwrap())]);
    let g = build_merged_graph(&g1, &g2, &a).unwrap();
    let x = g1.entity("X").unwrap();
    let y = g2.entity("Y").unwrap();
    let asg = extract_pair_asg(&g, x, y, 3).unwrap();
    let labels: Vec<String> = asg
        .layers
        .iter()
        .flatten()
        .map(|e| g.relation_label(e.rel))
        .collect();
    assert_eq!(labels, vec!["directed_by'", "anchor", "director"]);
}

#[test]
fn pair_extraction_preconditions() {
    let (g, _, _) = four_node();
    assert!(matches!(extract_pair_asg(&g, e1(0), e2(0), 0), Err(Error::Precondition(_))));
    assert!(matches!(extract_pair_asg(&g, e1(0), e1(1), 2), Err(Error::Precondition(_))));
    assert!(matches!(extract_merged_asg(&g, e1(0), 0), Err(Error::Precondition(_))));
    assert!(matches!(extract_symmetric_asg(&g, e1(0), 0), Err(Error::Precondition(_))));
}

#[test]
fn unreachable_pair_is_empty() {
    let (g, g1, g2) = four_node();
    let asg = extract_pair_asg(&g, g1.entity("u").unwrap(), g2.entity("v").unwrap(), 2).unwrap();
    assert!(asg.is_empty());
    assert!(asg.targets.is_empty());
}

#[test]
fn merged_with_singleton_opposite_side_equals_pair() {
    let mut g1 = KnowledgeGraph::new(Side::Kg1);
    g1.add_triple("u", "r", "x");
    g1.add_triple("x", "s", "w");
    let mut g2 = KnowledgeGraph::new(Side::Kg2);
    g2.entities.intern("v");
    let a = AnchorSet::new(vec![(g1.entity("x").unwrap(), e2(0))]);
    let g = build_merged_graph(&g1, &g2, &a).unwrap();
    let u = g1.entity("u").unwrap();
    for k in 1..=5 {
        let merged = extract_merged_asg(&g, u, k).unwrap();
        let pair = extract_pair_asg(&g, u, e2(0), k).unwrap();
        assert_eq!(merged, pair, "k = {k}");
    }
}

#[test]
fn isolated_source_gives_empty_asg() {
    let mut g1 = KnowledgeGraph::new(Side::Kg1);
    g1.add_triple("a", "r", "b");
    g1.entities.intern("lonely");
    let mut g2 = KnowledgeGraph::new(Side::Kg2);
    g2.add_triple("c", "r", "d");
    let a = AnchorSet::new(vec![(e1(0), e2(0))]);
    let g = build_merged_graph(&g1, &g2, &a).unwrap();
    let asg = extract_merged_asg(&g, g1.entity("lonely").unwrap(), 4).unwrap();
    assert!(asg.is_empty());
    assert!(asg.targets.is_empty());
}

#[test]
fn symmetric_keeps_one_to_one_and_drops_two_to_one() {
    let (g, g1, _) = four_node();
    let u = g1.entity("u").unwrap();
    let sym = extract_symmetric_asg(&g, u, 3).unwrap();
    assert_eq!(sym.edge_set().len(), 3);

    // u -a-> i -b-> x, anchor (x, y), v -c-> y: a 2:1 walk of length 4
    let mut g1 = KnowledgeGraph::new(Side::Kg1);
    g1.add_triple("u", "a", "i");
    g1.add_triple("i", "b", "x");
    let mut g2 = KnowledgeGraph::new(Side::Kg2);
    g2.add_triple("v", "c", "y");
    let a = AnchorSet::new(vec![(g1.entity("x").unwrap(), g2.entity("y").unwrap())]);
    let g = build_merged_graph(&g1, &g2, &a).unwrap();
    let u = g1.entity("u").unwrap();
    let v = g2.entity("v").unwrap();
    let full = extract_merged_asg(&g, u, 4).unwrap();
    assert!(full.targets.contains(&g.node(v)));
    let sym = extract_symmetric_asg(&g, u, 4).unwrap();
    assert!(!sym.targets.contains(&g.node(v)));
    assert!(sym.edge_set().is_empty());
}

#[test]
fn oracle_edge_cases() {
    let (g, g1, g2) = four_node();
    let u = g1.entity("u").unwrap();
    let mut g1b = KnowledgeGraph::new(Side::Kg1);
    g1b.add_triple("u", "r", "w");
    let mut g2b = KnowledgeGraph::new(Side::Kg2);
    g2b.add_triple("v", "r", "z");
    let disconnected = build_merged_graph(&g1b, &g2b, &AnchorSet::default()).unwrap();
    assert!(enumerate_paths_oracle(&disconnected, e1(0), e2(0), 4).unwrap().is_empty());
    assert!(matches!(
        enumerate_paths_oracle(&g, u, u, 3),
        Err(Error::Precondition(_))
    ));
    assert!(enumerate_paths_oracle(&g, u, g2.entity("v").unwrap(), 3).is_ok());
}

#[test]
fn oracle_budget_is_enforced() {
    let spec = RandomGraphSpec {
        entities_per_side: 4,
        relations: 2,
        triples_per_side: 16,
        anchors: 4,
    };
    let g = random_merged_graph(&spec, 1).unwrap();
    let err = enumerate_paths_oracle(&g, e1(0), e2(0), 12);
    assert!(matches!(err, Err(Error::Budget { .. })));
}

#[test]
fn self_loops_pad_short_walks() {
    let (g, g1, g2) = four_node();
    let u = g1.entity("u").unwrap();
    let asg = extract_merged_asg(&g, u, 5).unwrap().with_self_loops(&g);
    asg.validate().unwrap();
    let v = g.node(g2.entity("v").unwrap());
    let last = &asg.layers[4];
    assert!(last.contains(&Edge::new(v, g.self_loop_relation(), v)));
    assert_eq!(asg.edge_set(), extract_merged_asg(&g, u, 5).unwrap().edge_set());
}

#[test]
fn validate_rejects_orphan_heads() {
    let asg = LayeredAsg {
        source: 0,
        depth: 2,
        layers: vec![vec![Edge::new(0, 0, 1)], vec![Edge::new(5, 0, 2)]],
        targets: vec![2],
        self_loop: Some(9),
    };
    assert!(matches!(asg.validate(), Err(Error::Precondition(_))));
}

fn small_spec() -> impl Strategy<Value = (RandomGraphSpec, u64, usize)> {
    (2usize..9, 1usize..4, 0usize..12, 0usize..4, any::<u64>(), 1usize..=5).prop_map(
        |(n, r, t, a, seed, k)| {
            (
                RandomGraphSpec {
                    entities_per_side: n,
                    relations: r,
                    triples_per_side: t,
                    anchors: a,
                },
                seed,
                k,
            )
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pair_matches_oracle((spec, seed, k) in small_spec()) {
        let g = random_merged_graph(&spec, seed).unwrap();
        for u in (0..spec.entities_per_side as u32).take(3).map(e1) {
            for v in opposite(&g, u).into_iter().take(4) {
                let asg = extract_pair_asg(&g, u, v, k).unwrap();
                prop_assert_eq!(asg.edge_set(), oracle_edges(&g, u, v, k));
                prop_assert!(asg.validate().is_ok());
            }
        }
    }

    #[test]
    fn merged_is_union_of_pairs_and_monotone((spec, seed, k) in small_spec()) {
        let g = random_merged_graph(&spec, seed).unwrap();
        for u in [e1(0), e2(1 % spec.entities_per_side as u32)] {
            let merged = extract_merged_asg(&g, u, k).unwrap();
            let mut union: Vec<BTreeSet<Edge>> = vec![BTreeSet::new(); k];
            for v in opposite(&g, u) {
                let pair = extract_pair_asg(&g, u, v, k).unwrap();
                for (i, layer) in pair.layers.iter().enumerate() {
                    union[i].extend(layer.iter().copied());
                }
            }
            for (i, layer) in merged.layers.iter().enumerate() {
                let layer: BTreeSet<Edge> = layer.iter().copied().collect();
                prop_assert_eq!(&layer, &union[i]);
            }
            let bigger = extract_merged_asg(&g, u, k + 1).unwrap();
            prop_assert!(merged.edge_set().is_subset(&bigger.edge_set()));
        }
    }

    #[test]
    fn symmetric_is_contained_and_symmetric((spec, seed, k) in small_spec()) {
        let g = random_merged_graph(&spec, seed).unwrap();
        let u = e1(0);
        let sym = extract_symmetric_asg(&g, u, k).unwrap();
        let full = extract_merged_asg(&g, u, k).unwrap();
        for (a, b) in sym.layers.iter().zip(&full.layers) {
            prop_assert!(a.iter().all(|e| b.contains(e)));
        }
        let mut expected = BTreeSet::new();
        for v in opposite(&g, u) {
            for p in enumerate_paths_oracle(&g, u, v, k).unwrap() {
                if p.is_symmetric() {
                    expected.extend(p.edges);
                }
            }
        }
        prop_assert_eq!(sym.edge_set(), expected);
    }

    #[test]
    fn layers_are_sound((spec, seed, k) in small_spec()) {
        let g = random_merged_graph(&spec, seed).unwrap();
        let u = e1(0);
        let asg = extract_merged_asg(&g, u, k).unwrap();
        let dist_from_source = {
            let mut d = vec![u32::MAX; g.num_nodes()];
            let within = reach_within(&g, g.node(u), k);
            for i in (0..=k).rev() {
                for n in within[i].ones() {
                    d[n] = i as u32;
                }
            }
            d
        };
        for (i, layer) in asg.layers.iter().enumerate() {
            for e in layer {
                prop_assert!(dist_from_source[e.head as usize] as usize <= i);
            }
        }
        prop_assert!(asg.with_self_loops(&g).validate().is_ok());
    }
}
