mod common;

use irsegrn::data::{shuffle_paragraph, unshuffle};
use irsegrn::eval::{kendall_tau, pairwise_counts};
use irsegrn::graph::{build_graph, invert_permutation, seeded_permutation};
use irsegrn::refine::{construct_irse_graph_observed, normalize_pair, RefineConfig, Refiner};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{random_record, tiny_model};

/// Merge-sort inversion count.
fn inversions(v: &mut [usize]) -> usize {
    if v.len() < 2 {
        return 0;
    }
    let mid = v.len() / 2;
    let mut count = inversions(&mut v[..mid]) + inversions(&mut v[mid..]);
    let (left, right) = (v[..mid].to_vec(), v[mid..].to_vec());
    let (mut a, mut b, mut k) = (0, 0, 0);
    while a < left.len() && b < right.len() {
        if left[a] <= right[b] {
            v[k] = left[a];
            a += 1;
        } else {
            v[k] = right[b];
            b += 1;
            count += left.len() - a;
        }
        k += 1;
    }
    v[k..].copy_from_slice(if a < left.len() { &left[a..] } else { &right[b..] });
    count
}

fn tau_by_merge(pred: &[usize], gold: &[usize]) -> f64 {
    let gp = invert_permutation(gold);
    let mut seq: Vec<usize> = pred.iter().map(|&s| gp[s]).collect();
    let n = pred.len();
    1.0 - 2.0 * inversions(&mut seq) as f64 / (n * (n - 1) / 2) as f64
}

proptest! {
    #[test]
    fn tau_matches_merge_count(n in 2usize..11, a in any::<u64>(), b in any::<u64>()) {
        let pred = seeded_permutation(n, a);
        let gold = seeded_permutation(n, b);
        prop_assert_eq!(kendall_tau(&pred, &gold).unwrap(), tau_by_merge(&pred, &gold));
        let rev: Vec<usize> = gold.iter().rev().copied().collect();
        prop_assert_eq!(kendall_tau(&gold, &gold).unwrap(), 1.0);
        prop_assert_eq!(kendall_tau(&rev, &gold).unwrap(), -1.0);
    }

    #[test]
    fn tau_is_symmetric(n in 2usize..9, a in any::<u64>(), b in any::<u64>()) {
        let p = seeded_permutation(n, a);
        let q = seeded_permutation(n, b);
        prop_assert_eq!(kendall_tau(&p, &q).unwrap(), kendall_tau(&q, &p).unwrap());
    }

    #[test]
    fn shuffle_then_unshuffle_is_identity(seed in any::<u64>(), n in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rec = random_record(&mut rng, n, 1);
        let (presented, gold_positions) = shuffle_paragraph(&rec, seed);
        prop_assert_eq!(unshuffle(&presented, &gold_positions), rec.sentences.clone());
    }

    #[test]
    fn complement_identity_after_any_writes(seed in any::<u64>(), eta in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rec = random_record(&mut rng, 6, 2);
        let (mut g, presented) = build_graph(&rec, seed).unwrap();
        g.assign_gold_weights(&presented).unwrap();
        g.inject_noise(eta, &mut rng);
        for (i, k) in g.pairs().collect::<Vec<_>>() {
            if rng.gen_bool(0.3) {
                g.set_pair_weight(k, i, rng.gen_range(0.0..=1.0)).unwrap();
            }
        }
        for (i, k) in g.pairs() {
            let s = g.weight(i, k).unwrap() + g.weight(k, i).unwrap();
            prop_assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn gold_weights_score_perfect_pairwise(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rec = random_record(&mut rng, 5, 2);
        let (mut g, presented) = build_graph(&rec, seed).unwrap();
        g.assign_gold_weights(&presented).unwrap();
        let (correct, total) = pairwise_counts(&g, &presented);
        prop_assert_eq!(correct, total);
        prop_assert_eq!(total, g.num_pairs());
    }

    #[test]
    fn normalized_pair_is_complementary(a in 1e-9f64..1.0, b in 1e-9f64..1.0) {
        let (w, wb) = normalize_pair(a, b);
        prop_assert!((0.0..=1.0).contains(&w));
        prop_assert!((w + wb - 1.0).abs() < 1e-12);
    }
}

#[test]
fn refinement_fuzz() {
    let cfg = RefineConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..200u64 {
        let mut model = tiny_model(1, case);
        let scale = rng.gen_range(1.0..30.0);
        for id in model.ids_with_prefixes(&["cls_"]) {
            model.store.values_mut(id).iter_mut().for_each(|v| *v *= scale);
        }
        let refiner = Refiner::from_model(&model);
        let n = rng.gen_range(2..7);
        let rec = random_record(&mut rng, n, 2);
        let (mut g, _) = build_graph(&rec, case).unwrap();
        let mut complement_ok = true;
        let trace = construct_irse_graph_observed(&mut g, &refiner, &cfg, |g, vp| {
            for (i, k) in g.pairs() {
                complement_ok &= (g.weight(i, k).unwrap() + g.weight(k, i).unwrap() - 1.0).abs() < 1e-12;
            }
            for &(i, k) in vp {
                complement_ok &= g.weight(i, k) == Some(0.5);
            }
        })
        .unwrap();
        assert!(complement_ok, "case {case}");
        let mut prev = &trace.initial_vp;
        for next in &trace.trajectory {
            assert!(next.is_subset(prev), "case {case}: uncertain set grew");
            prev = next;
        }
        assert!(trace.iterations <= trace.initial_vp.len() + 1);
        assert!(trace.iterations <= cfg.k_max);
    }
}
