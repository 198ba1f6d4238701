mod common;

use common::{moments, random_atom, random_model, rng};
use proptest::prelude::*;
use sgmoe::dendrogram::{build_path, dissimilarity, merge_pair, merge_step};
use sgmoe::{Atom, Model, Tree};

fn assert_conserved(p: &Atom, q: &Atom) {
    let merged = merge_pair(p, q);
    let (before, scale) = moments(&[p, q]);
    let (after, _) = moments(&[&merged]);
    for i in 0..before.len() {
        let err = (before[i] - after[i]).abs() / scale[i].max(f64::MIN_POSITIVE);
        assert!(err < 1e-10, "moment {i}: {} vs {} (relative {err:e})", before[i], after[i]);
    }
}

#[test]
fn merge_conserves_moments_on_random_pairs() {
    let mut r = rng(11);
    for dim in [1, 2, 5] {
        for _ in 0..2000 {
            let p = random_atom(&mut r, dim);
            let q = random_atom(&mut r, dim);
            assert_conserved(&p, &q);
        }
    }
}

#[test]
fn merge_of_equal_weights_is_the_midpoint_in_gate_and_bias() {
    let p = Atom::new(0.0, vec![1.0], vec![2.0], 3.0, 0.5).unwrap();
    let q = Atom::new(0.0, vec![3.0], vec![0.0], 1.0, 1.5).unwrap();
    let m = merge_pair(&p, &q);
    assert!((m.omega0 - 2f64.ln()).abs() < 1e-15);
    assert!((m.omega1[0] - 2.0).abs() < 1e-15);
    assert!((m.b - 2.0).abs() < 1e-15);
    // 0.5 * [(-1)(1) + 2] + 0.5 * [(1)(-1) + 0]
    assert!((m.a[0] - 0.0).abs() < 1e-15);
    // 0.5 * (1 + 0.5) + 0.5 * (1 + 1.5)
    assert!((m.sigma - 2.0).abs() < 1e-15);
}

#[test]
fn dissimilarity_hand_value() {
    // weights 1 and e: prefactor e / (1 + e); distances: |(2, 1)|^2 = 5 and |(0, 1)| = 1
    let p = Atom::new(0.0, vec![0.0], vec![1.0], 0.0, 1.0).unwrap();
    let q = Atom::new(1.0, vec![2.0], vec![1.0], 1.0, 2.0).unwrap();
    let e = 1f64.exp();
    let expect = e / (1.0 + e) * 6.0;
    assert!((dissimilarity(&p, &q) - expect).abs() < 1e-14);
    assert_eq!(dissimilarity(&p, &q), dissimilarity(&q, &p));
}

fn brute_merge_choice(g: &Model) -> (usize, usize, f64) {
    let mut best = (0, 1, f64::INFINITY);
    for i in 0..g.len() {
        for j in i + 1..g.len() {
            let d = dissimilarity(&g.atoms()[i], &g.atoms()[j]);
            if d < best.2 {
                best = (i, j, d);
            }
        }
    }
    best
}

fn check_path(g: &Model, tree: &Tree) {
    let k = g.len();
    assert_eq!(tree.top(), k);
    assert_eq!(tree.levels.len(), k);
    assert_eq!(tree.merges.len(), k - 1);
    assert_eq!(tree.level(k).unwrap(), g);
    let total = |m: &Model| m.atoms().iter().map(|a| a.omega0.exp()).sum::<f64>();
    for kappa in (2..=k).rev() {
        let upper = tree.level(kappa).unwrap();
        let lower = tree.level(kappa - 1).unwrap();
        assert_eq!(lower.len(), kappa - 1);
        let (i, j, d) = brute_merge_choice(upper);
        let h = tree.height(kappa).unwrap();
        assert!((h - d).abs() <= 1e-12 * d.abs().max(1.0), "level {kappa}: height {h} vs brute {d}");
        let record = &tree.merges[k - kappa];
        assert_eq!(record.level, kappa);
        assert_eq!(record.pair, (i, j));
        assert!(
            (total(upper) - total(lower)).abs() <= 1e-10 * total(upper),
            "total weight must be conserved"
        );
        // Merged atom replaces the first of the pair; the second is dropped.
        assert_eq!(lower.atoms()[i], merge_pair(&upper.atoms()[i], &upper.atoms()[j]));
        let survivors: Vec<&Atom> = (0..kappa).filter(|&l| l != i && l != j).map(|l| &upper.atoms()[l]).collect();
        let rest: Vec<&Atom> = (0..kappa - 1).filter(|&l| l != i).map(|l| &lower.atoms()[l]).collect();
        assert_eq!(survivors, rest);
    }
}

#[test]
fn path_matches_exhaustive_pair_search() {
    let mut r = rng(5);
    for &(k, dim) in &[(2, 1), (4, 1), (6, 2), (8, 3)] {
        for _ in 0..20 {
            let g = random_model(&mut r, k, dim);
            check_path(&g, &build_path(&g));
        }
    }
}

#[test]
fn merge_step_on_a_single_atom_is_rejected() {
    let mut r = rng(1);
    let g = random_model(&mut r, 1, 2);
    assert!(merge_step(&g).is_err());
    let tree = build_path(&g);
    assert_eq!(tree.top(), 1);
    assert!(tree.merges.is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn conservation_holds_for_arbitrary_atoms(
        w0 in -6.0f64..6.0, w1 in -6.0f64..6.0,
        s0 in prop::collection::vec(-10.0f64..10.0, 2),
        a in prop::collection::vec(-10.0f64..10.0, 2),
        b in prop::collection::vec(-10.0f64..10.0, 2),
        sig in prop::collection::vec(0.01f64..5.0, 2),
    ) {
        let p = Atom::new(w0, vec![s0[0]], vec![a[0]], b[0], sig[0]).unwrap();
        let q = Atom::new(w1, vec![s0[1]], vec![a[1]], b[1], sig[1]).unwrap();
        assert_conserved(&p, &q);
        let m = merge_pair(&p, &q);
        prop_assert!(m.sigma > 0.0);
        prop_assert!(dissimilarity(&p, &q) >= 0.0);
    }

    #[test]
    fn dendrogram_json_round_trip(seed in 0u64..1000, k in 2usize..6) {
        let mut r = rng(seed);
        let g = random_model(&mut r, k, 2);
        let tree = build_path(&g);
        let text = serde_json::to_string(&tree).unwrap();
        let back: Tree = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, tree);
    }
}
