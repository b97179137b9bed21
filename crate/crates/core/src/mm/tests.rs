use super::*;
use crate::kg::{AnchorSet, EntityId, Side};
use crate::nn::gradcheck::max_relative_error;
use crate::nn::init::uniform;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn item(attr: u32, row: u32) -> AttrItem {
    AttrItem { attr, modality: 0, row }
}

/// Nodes 0.. with the given attribute lists over one `dim`-wide modality.
fn data(items: Vec<Vec<AttrItem>>, rows: usize, dim: usize, types: usize, seed: u64) -> ModalData<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = uniform(rows, dim, 1.0, &mut rng);
    ModalData::from_parts((0..types).map(|i| format!("t{i}")).collect(), items, vec![f]).unwrap()
}

fn head(d: &ModalData<f64>, variant: MmVariant, dim: usize, seed: u64) -> (ParamStore<f64>, ModalHead) {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = ModalHead::register(&mut store, variant, d, dim, &mut rng).unwrap();
    for id in [h.head.b1, h.head.b2] {
        let s = store.get(id).shape().to_vec();
        *store.get_mut(id) = uniform(s[0], s[1], 0.3, &mut rng);
    }
    (store, h)
}

fn scores(store: &ParamStore<f64>, h: &ModalHead, d: &ModalData<f64>, src: u32, cands: &[u32]) -> Vec<f64> {
    let mut tape = Tape::new(store);
    let s = h.score(&mut tape, d, src, cands).unwrap();
    tape.value(s).data().to_vec()
}

fn mlp_m(store: &ParamStore<f64>, h: &ModalHead, x: &[f64]) -> f64 {
    let mut tape = Tape::new(store);
    let v = tape.constant(Tensor::row(x.to_vec()));
    let o = h.head.apply(&mut tape, v);
    tape.value(o).item()
}

fn project(store: &ParamStore<f64>, h: &ModalHead, d: &ModalData<f64>, row: usize) -> Vec<f64> {
    let w = store.get(h.projections[0]);
    let f = d.feature_row(0, row);
    (0..w.cols()).map(|j| (0..f.len()).map(|i| f[i] * w.get(i, j)).sum()).collect()
}

#[test]
fn singleton_attributes_use_full_weight() {
    let d = data(vec![vec![item(0, 0)], vec![item(1, 1)]], 2, 5, 2, 1);
    let (store, h) = head(&d, MmVariant::Full, 4, 2);
    let (wu, wv) = h.attention_weights(&store, &d, 0, 1);
    assert_eq!((wu, wv), (vec![1.0], vec![1.0]));
    let (a, b) = (project(&store, &h, &d, 0), project(&store, &h, &d, 1));
    let joint: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
    let got = scores(&store, &h, &d, 0, &[1])[0];
    assert!((got - mlp_m(&store, &h, &joint)).abs() < 1e-12);
}

#[test]
fn identical_type_gets_softmax_one_zero_weights() {
    let d = data(vec![vec![item(0, 0), item(1, 1)], vec![item(0, 2)]], 3, 5, 2, 1);
    let (mut store, h) = head(&d, MmVariant::Full, 2, 2);
    *store.get_mut(h.types) = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let (wu, wv) = h.attention_weights(&store, &d, 0, 1);
    let e = std::f64::consts::E;
    assert!((wu[0] - e / (e + 1.0)).abs() < 1e-12);
    assert!((wu[0] - 0.7310585786).abs() < 1e-9 && (wu[1] - 0.2689414214).abs() < 1e-9);
    assert_eq!(wv, vec![1.0]);
    let hu: Vec<f64> = {
        let (p0, p1) = (project(&store, &h, &d, 0), project(&store, &h, &d, 1));
        p0.iter().zip(&p1).map(|(x, y)| wu[0] * x + wu[1] * y).collect()
    };
    let hv = project(&store, &h, &d, 2);
    let joint: Vec<f64> = hu.iter().zip(&hv).map(|(x, y)| x * y).collect();
    assert!((scores(&store, &h, &d, 0, &[1])[0] - mlp_m(&store, &h, &joint)).abs() < 1e-12);
}

#[test]
fn swapping_roles_with_identical_attributes_keeps_score() {
    let attrs = vec![item(0, 0), item(2, 1), item(1, 2)];
    let d = data(vec![attrs.clone(), attrs], 3, 4, 3, 5);
    let (store, h) = head(&d, MmVariant::Full, 4, 6);
    let a = scores(&store, &h, &d, 0, &[1])[0];
    let b = scores(&store, &h, &d, 1, &[0])[0];
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn attribute_less_entities_score_zero() {
    let d = data(vec![vec![item(0, 0)], vec![], vec![item(1, 1)]], 2, 3, 2, 1);
    let (store, h) = head(&d, MmVariant::Full, 3, 2);
    let s = scores(&store, &h, &d, 0, &[1, 2]);
    assert_eq!(s[0], 0.0);
    assert_ne!(s[1], 0.0);
    assert_eq!(scores(&store, &h, &d, 1, &[0, 2]), vec![0.0, 0.0]);
}

#[test]
fn combined_score_adds_and_absorbs() {
    assert!((combined_score(0.4, 0.1) - 0.5f64).abs() < 1e-15);
    assert_eq!(combined_score(f64::NEG_INFINITY, 0.9), f64::NEG_INFINITY);
}

#[test]
fn modal_gradients_match_finite_differences() {
    for variant in [MmVariant::Full, MmVariant::NoValue, MmVariant::NoAttention] {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let items: Vec<Vec<AttrItem>> = (0..5)
                .map(|_| (0..rng.gen_range(1..4)).map(|_| item(rng.gen_range(0..3), rng.gen_range(0..6))).collect())
                .collect();
            let d = data(items, 6, 4, 3, seed);
            let (store, h) = head(&d, variant, 3, seed + 1);
            let w: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let err = max_relative_error(&store, 1e-6, |tape| {
                let s = h.score(tape, &d, 0, &[1, 2, 3, 4]).unwrap();
                let w = tape.constant(Tensor::column(w.clone()));
                let p = tape.mul(s, w);
                tape.sum(p)
            });
            assert!(err < 1e-4, "{variant:?} seed {seed}: {err}");
        }
    }
}

#[test]
fn encode_attribute_cases() {
    let mut fm = FeatureMatrix::new("text", 3);
    fm.push("k", &[0.5, -1.0, 2.0]).unwrap();
    let mut fs = FeatureStore::new();
    fs.add(fm).unwrap();
    let d = ModalData::<f64>::from_parts(vec!["a".into()], vec![], vec![Tensor::zeros(&[1, 3])]).unwrap();
    let (mut store, h) = head(&d, MmVariant::Full, 3, 0);
    let eye = Tensor::matrix(3, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
    *store.get_mut(h.projections[0]) = eye;
    assert_eq!(h.encode_attribute(&store, &fs, "k").unwrap(), vec![0.5, -1.0, 2.0]);
    *store.get_mut(h.projections[0]) = Tensor::zeros(&[3, 3]);
    assert_eq!(h.encode_attribute(&store, &fs, "k").unwrap(), vec![0.0; 3]);
    assert!(matches!(h.encode_attribute(&store, &fs, "missing"), Err(Error::Data(_))));

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let feat: Vec<f32> = (0..768).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut big = FeatureMatrix::new("text", 768);
    big.push("x", &feat).unwrap();
    let mut fs = FeatureStore::new();
    fs.add(big).unwrap();
    let d = ModalData::<f64>::from_parts(vec!["a".into()], vec![], vec![Tensor::zeros(&[1, 768])]).unwrap();
    let (store, h) = head(&d, MmVariant::Full, 64, 1);
    let w = store.get(h.projections[0]);
    let got = h.encode_attribute(&store, &fs, "x").unwrap();
    for j in 0..64 {
        let want: f64 = (0..768).map(|i| feat[i] as f64 * w.get(i, j)).sum();
        assert!((got[j] - want).abs() < 1e-9);
    }
}

fn vision_graphs(vectors1: &[Vec<f32>], vectors2: &[Vec<f32>]) -> (FeatureStore, KnowledgeGraph, KnowledgeGraph) {
    let dim = vectors1[0].len();
    let mut fm = FeatureMatrix::new("vision", dim);
    let mut g1 = KnowledgeGraph::new(Side::Kg1);
    let mut g2 = KnowledgeGraph::new(Side::Kg2);
    for (i, v) in vectors1.iter().enumerate() {
        fm.push(format!("img1/{i}"), v).unwrap();
        g1.add_attribute(&format!("a{i}"), "image", &format!("img1/{i}"));
    }
    for (i, v) in vectors2.iter().enumerate() {
        fm.push(format!("img2/{i}"), v).unwrap();
        g2.add_attribute(&format!("b{i}"), "image", &format!("img2/{i}"));
    }
    let mut fs = FeatureStore::new();
    fs.add(fm).unwrap();
    (fs, g1, g2)
}

#[test]
fn identical_vectors_become_anchors() {
    let (fs, g1, g2) = vision_graphs(&[vec![1.0, 2.0, 0.0], vec![0.0, 0.0, 1.0]], &[vec![-1.0, 0.3, 0.2], vec![1.0, 2.0, 0.0]]);
    let got = generate_modal_anchors(&fs, &g1, &g2, 1.0, &AnchorSet::default(), AnchorFusion::VisionOnly).unwrap();
    assert_eq!(got, vec![(EntityId::new(Side::Kg1, 0), EntityId::new(Side::Kg2, 1))]);
    let existing = AnchorSet::new(got.clone());
    assert!(generate_modal_anchors(&fs, &g1, &g2, 0.5, &existing, AnchorFusion::VisionOnly)
        .unwrap()
        .iter()
        .all(|p| !got.contains(p)));
    assert!(generate_modal_anchors(&fs, &g1, &g2, 0.0, &existing, AnchorFusion::VisionOnly).is_err());
    assert!(generate_modal_anchors(&fs, &g1, &g2, 1.5, &existing, AnchorFusion::VisionOnly).is_err());
}

#[test]
fn strict_threshold_without_identical_vectors_is_empty() {
    let (fs, g1, g2) = vision_graphs(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[vec![1.0, 0.1], vec![0.1, 1.0]]);
    let got = generate_modal_anchors(&fs, &g1, &g2, 1.0, &AnchorSet::default(), AnchorFusion::VisionOnly).unwrap();
    assert!(got.is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn modal_anchors_match_brute_force(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gen = |n: usize| -> Vec<Vec<f32>> {
            (0..n).map(|_| (0..4).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).collect()
        };
        let (v1, v2) = (gen(10), gen(10));
        let (fs, g1, g2) = vision_graphs(&v1, &v2);
        let got = generate_modal_anchors(&fs, &g1, &g2, 0.8, &AnchorSet::default(), AnchorFusion::VisionOnly).unwrap();
        let cos = |a: &[f32], b: &[f32]| {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
            let n = |v: &[f32]| v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
            dot / (n(a) * n(b))
        };
        let mut want = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                let s = cos(&v1[i], &v2[j]);
                let best_j = (0..10).all(|k| cos(&v1[i], &v2[k]) <= s);
                let best_i = (0..10).all(|k| cos(&v1[k], &v2[j]) <= s);
                if best_i && best_j && s >= 0.8 {
                    want.push((EntityId::new(Side::Kg1, i as u32), EntityId::new(Side::Kg2, j as u32)));
                }
            }
        }
        prop_assert_eq!(&got, &want);
        // mirrored inputs give the mirrored set
        let (fs2, h1, h2) = vision_graphs(&v2, &v1);
        let swapped = generate_modal_anchors(&fs2, &h1, &h2, 0.8, &AnchorSet::default(), AnchorFusion::VisionOnly).unwrap();
        let mirrored: Vec<_> = swapped.iter().map(|&(a, b)| (EntityId::new(Side::Kg1, b.index), EntityId::new(Side::Kg2, a.index))).collect();
        let mut mirrored_sorted = mirrored;
        mirrored_sorted.sort();
        prop_assert_eq!(got, mirrored_sorted);
    }

    #[test]
    fn weights_are_distributions_and_ignore_partner_values(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mk = |n: usize| -> Vec<AttrItem> { (0..n).map(|_| item(rng.gen_range(0..4), rng.gen_range(0..8))).collect() };
        let (a, b) = (mk(3), mk(4));
        let mut b_perm = b.clone();
        let rows: Vec<u32> = b.iter().map(|x| x.row).rev().collect();
        for (x, r) in b_perm.iter_mut().zip(rows) {
            x.row = r;
        }
        let d = data(vec![a.clone(), b, a, b_perm], 8, 3, 4, seed);
        let (store, h) = head(&d, MmVariant::Full, 3, seed);
        let (wu, wv) = h.attention_weights(&store, &d, 0, 1);
        prop_assert!((wu.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!((wv.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(wu.iter().chain(&wv).all(|&w| w >= 0.0));
        let (wu2, _) = h.attention_weights(&store, &d, 2, 3);
        prop_assert_eq!(wu, wu2);
    }

    #[test]
    fn batched_scores_equal_single_candidate_scores(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let items: Vec<Vec<AttrItem>> = (0..6)
            .map(|_| (0..rng.gen_range(0..4)).map(|_| item(rng.gen_range(0..3), rng.gen_range(0..5))).collect())
            .collect();
        let d = data(items, 5, 3, 3, seed);
        for variant in [MmVariant::Full, MmVariant::NoValue, MmVariant::NoAttention] {
            let (store, h) = head(&d, variant, 3, seed);
            let cands = [1, 2, 3, 4, 5];
            let batch = scores(&store, &h, &d, 0, &cands);
            for (k, &c) in cands.iter().enumerate() {
                let one = scores(&store, &h, &d, 0, &[c])[0];
                prop_assert!((one - batch[k]).abs() < 1e-12);
            }
        }
    }
}
