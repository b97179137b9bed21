use super::*;
use crate::extract::{extract, ExtractionMode};
use crate::kg::{build_merged_graph, AnchorSet, KnowledgeGraph, UNREACHABLE};
use std::collections::HashSet;

fn small(seed: u64) -> SynthSpec {
    SynthSpec {
        entities_per_side: 80,
        noise_edges: 60,
        seed,
        ..SynthSpec::default()
    }
}

/// Entities `x` with a chain of `rels` from `x` to `end`.
fn back(g: &KnowledgeGraph, end: u32, rels: &[String]) -> HashSet<u32> {
    let mut cur: HashSet<u32> = [end].into();
    for name in rels.iter().rev() {
        let r = g.relations.get(name).unwrap();
        cur = g
            .triples()
            .iter()
            .filter(|t| t.rel == r && cur.contains(&t.tail))
            .map(|t| t.head)
            .collect();
    }
    cur
}

#[test]
fn every_rule_instance_is_gold() {
    for seed in 0..3 {
        let s = generate(&small(seed)).unwrap();
        let d = &s.dataset;
        let gold: HashSet<_> = d.seeds.iter().chain(&d.test).map(|p| (p.left, p.right)).collect();
        for rule in &s.rules {
            for a in &d.seeds {
                for x in back(&d.g1, a.left, &rule.source_relations) {
                    for y in back(&d.g2, a.right, &rule.target_relations) {
                        assert!(gold.contains(&(x, y)), "{} derives ({x}, {y})", rule.template.label());
                    }
                }
            }
        }
    }
}

#[test]
fn test_pairs_sit_at_their_planted_length() {
    let s = generate(&small(4)).unwrap();
    let d = &s.dataset;
    let g = build_merged_graph(&d.g1, &d.g2, &AnchorSet::from_aligned(&d.seeds)).unwrap();
    for p in &d.test {
        let len = s.planted_length(*p).expect("every test pair is planted");
        let dist = g.distances_to(g.node(p.right_entity()), 8);
        let du = dist[g.node(p.left_entity()) as usize];
        assert_ne!(du, UNREACHABLE);
        assert_eq!(du as usize, len, "pair {p:?}");
    }
}

#[test]
fn symmetric_two_needs_depth_five() {
    let spec = SynthSpec {
        templates: vec![RuleTemplate::Symmetric { k: 2 }],
        seed_ratio: 0.6,
        ..small(7)
    };
    let s = generate(&spec).unwrap();
    let d = &s.dataset;
    let g = build_merged_graph(&d.g1, &d.g2, &AnchorSet::from_aligned(&d.seeds)).unwrap();
    for p in &d.test {
        let gold = g.node(p.right_entity());
        let at = |k| extract(&g, p.left_entity(), k, ExtractionMode::Merged).unwrap().targets.contains(&gold);
        assert!(at(5) && !at(4), "pair {p:?}");
    }
}

#[test]
fn one_hop_reachable_at_three() {
    let spec = SynthSpec {
        templates: vec![RuleTemplate::OneHop],
        seed_ratio: 0.6,
        ..small(8)
    };
    let s = generate(&spec).unwrap();
    let d = &s.dataset;
    let g = build_merged_graph(&d.g1, &d.g2, &AnchorSet::from_aligned(&d.seeds)).unwrap();
    for p in &d.test {
        let asg = extract(&g, p.left_entity(), 3, ExtractionMode::Merged).unwrap();
        assert!(asg.targets.contains(&g.node(p.right_entity())));
    }
}

#[test]
fn generation_is_deterministic() {
    let spec = SynthSpec {
        attributes: Some(AttributeSpec { dim: 4, noise: 0.1, distractors: 1 }),
        decoy: Some(DecoySpec { fraction: 0.2, group_size: 3 }),
        ..small(11)
    };
    let a = generate(&spec).unwrap();
    let b = generate(&spec).unwrap();
    assert_eq!(a.dataset, b.dataset);
    assert_eq!(a.instances, b.instances);
    let fa = a.features.unwrap();
    let fb = b.features.unwrap();
    assert_eq!(fa.matrices.len(), 2);
    for (x, y) in fa.matrices.iter().zip(&fb.matrices) {
        assert_eq!(x.keys(), y.keys());
    }
    let c = generate(&SynthSpec { seed: 12, ..spec }).unwrap();
    assert_ne!(a.dataset, c.dataset);
}

#[test]
fn decoy_groups_share_an_anchor() {
    let spec = SynthSpec {
        decoy: Some(DecoySpec { fraction: 0.3, group_size: 3 }),
        ..small(5)
    };
    let s = generate(&spec).unwrap();
    let decoys: Vec<_> = s.instances.iter().filter(|i| i.rule.is_none()).collect();
    assert!(!decoys.is_empty());
    let anchors: HashSet<_> = decoys.iter().map(|i| i.anchor).collect();
    assert!(anchors.len() < decoys.len());
}

#[test]
fn bad_specs_are_config_errors() {
    let cases = [
        SynthSpec { relations: 2, ..small(0) },
        SynthSpec { seed_ratio: 1.0, ..small(0) },
        SynthSpec { templates: vec![RuleTemplate::Symmetric { k: 4 }], ..small(0) },
        SynthSpec { entities_per_side: 2, ..small(0) },
        SynthSpec { templates: vec![RuleTemplate::OneHop], ..small(0) },
    ];
    for spec in cases {
        assert!(matches!(generate(&spec), Err(crate::Error::Config(_))), "{spec:?}");
    }
}

#[test]
fn writes_a_loadable_dataset() {
    let spec = SynthSpec {
        attributes: Some(AttributeSpec { dim: 3, noise: 0.1, distractors: 0 }),
        ..small(2)
    };
    let s = generate(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    s.write(&spec, dir.path()).unwrap();
    let back = crate::kg::Dataset::load_dir(dir.path()).unwrap();
    assert_eq!(back.seeds, s.dataset.seeds);
    assert_eq!(back.test, s.dataset.test);
    assert_eq!(back.g1.triples().len(), s.dataset.g1.triples().len());
    assert!(dir.path().join(RULES_FILE).exists());
    assert!(dir.path().join("vision.bin").exists());
}
