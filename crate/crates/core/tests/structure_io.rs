mod common;

use std::collections::BTreeSet;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rna_invfold::featurizer::{
    add_noise, build_multigraph, dihedral, featurize, featurize_ensemble, knn_edges, FeaturizerConfig,
};
use rna_invfold::rna_io::{
    cluster_structures, kabsch_rmsd, make_multi_state_split, make_single_state_split, parse_pdb, superpose, tm_d0,
    tm_score, validate_manifest, write_pdb, Ensemble, RnaStructure, SplitOptions, BEAD_C4, TM_THRESHOLD,
};
use rna_invfold::synth::{hairpin, random_coil, random_ensemble, random_rotation, random_sequence, rigid_motion, HelixGeometry};

fn points(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 3]> {
    (0..n).map(|_| [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)]).collect()
}

fn rmsd_under(r: &[[f64; 3]; 3], a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    let centre = |x: &[[f64; 3]]| {
        let n = x.len() as f64;
        (0..3).map(|d| x.iter().map(|p| p[d]).sum::<f64>() / n).collect::<Vec<_>>()
    };
    let (ca, cb) = (centre(a), centre(b));
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(p, q)| {
            let p = [p[0] - ca[0], p[1] - ca[1], p[2] - ca[2]];
            (0..3)
                .map(|i| (r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2] - (q[i] - cb[i])).powi(2))
                .sum::<f64>()
        })
        .sum();
    (sum / a.len() as f64).sqrt()
}

fn compose(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Small rotation about a random axis.
fn nudge(rng: &mut ChaCha8Rng, angle: f64) -> [[f64; 3]; 3] {
    let axis: Vec<f64> = (0..3).map(|_| StandardNormal.sample(rng)).collect();
    let len = axis.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (x, y, z) = (axis[0] / len, axis[1] / len, axis[2] / len);
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

#[test]
fn kabsch_matches_rotation_search() {
    let mut rng = rng(31);
    for _ in 0..5 {
        let a = points(&mut rng, 12);
        let b = points(&mut rng, 12);
        let k = kabsch_rmsd(&a, &b).unwrap();
        // Dense random sampling, then shrinking local refinement.
        let mut best = random_rotation(&mut rng);
        let mut best_val = rmsd_under(&best, &a, &b);
        for _ in 0..20_000 {
            let r = random_rotation(&mut rng);
            let v = rmsd_under(&r, &a, &b);
            assert!(v >= k - 1e-9);
            if v < best_val {
                (best, best_val) = (r, v);
            }
        }
        let mut step = 0.2;
        while step > 1e-7 {
            let mut improved = false;
            for _ in 0..200 {
                let r = compose(&nudge(&mut rng, step), &best);
                let v = rmsd_under(&r, &a, &b);
                if v < best_val {
                    (best, best_val, improved) = (r, v, true);
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        assert!((best_val - k).abs() < 1e-3, "search {best_val} kabsch {k}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn kabsch_is_symmetric_and_rigid_invariant(seed in 0u64..10_000, n in 3usize..30) {
        let mut rng = rng(seed);
        let a = points(&mut rng, n);
        let b = points(&mut rng, n);
        let ab = kabsch_rmsd(&a, &b).unwrap();
        prop_assert!((ab - kabsch_rmsd(&b, &a).unwrap()).abs() < 1e-9);
        let rot = random_rotation(&mut rng);
        let motion = rigid_motion(&rot, [3.0, -7.0, 1.5]);
        let moved: Vec<[f64; 3]> = a.iter().map(|&p| motion(p)).collect();
        prop_assert!((kabsch_rmsd(&moved, &b).unwrap() - ab).abs() < 1e-9);
        prop_assert!(kabsch_rmsd(&moved, &a).unwrap() < 1e-9);
    }

    #[test]
    fn pdb_round_trip_is_a_fixed_point(seed in 0u64..10_000, n in 10usize..40) {
        let mut rng = rng(seed);
        let seq = random_sequence(n, &mut rng);
        let s = random_coil("rt", &seq, &mut rng);
        let once = parse_pdb(&write_pdb(&[s.clone()]), "rt").unwrap();
        prop_assert_eq!(once.len(), 1);
        for (p, q) in once[0].beads.iter().flatten().zip(s.beads.iter().flatten()) {
            for d in 0..3 {
                prop_assert!((p[d] - q[d]).abs() <= 1e-3);
            }
        }
        let twice = parse_pdb(&write_pdb(&once), "rt").unwrap();
        prop_assert_eq!(&twice[0].beads, &once[0].beads);
    }
}

#[test]
fn tm_score_matches_direct_formula() {
    let mut rng = rng(32);
    for n in [8, 30, 75] {
        let a = points(&mut rng, n);
        let b: Vec<[f64; 3]> = a.iter().map(|p| [p[0] + rng.random_range(-3.0..3.0), p[1], p[2] - 1.0]).collect();
        let sup = superpose(&a, &b).unwrap();
        let d0 = (0.6 * (n as f64 - 0.5).sqrt() - 2.5).max(0.3);
        assert_eq!(tm_d0(n), d0);
        let want: f64 = a
            .iter()
            .zip(&b)
            .map(|(p, q)| {
                let m = sup.apply(*p);
                let d2: f64 = (0..3).map(|i| (m[i] - q[i]).powi(2)).sum();
                1.0 / (1.0 + d2 / (d0 * d0))
            })
            .sum::<f64>()
            / n as f64;
        assert!((tm_score(&a, &b).unwrap() - want).abs() < 1e-9);
        assert!((tm_score(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }
}

fn c4_coords(s: &RnaStructure) -> Vec<[f64; 3]> {
    s.beads.iter().map(|b| b[BEAD_C4]).collect()
}

#[test]
fn clustering_separates_unrelated_coils() {
    let mut rng = rng(33);
    let a = random_ensemble("a", 30, 1, 1.0, &mut rng);
    let b = random_ensemble("b", 30, 1, 1.0, &mut rng);
    let tm = tm_score(&c4_coords(&a.states[0]), &c4_coords(&b.states[0])).unwrap();
    assert!(tm < TM_THRESHOLD, "coils too similar: {tm}");
    let mut copy = a.clone();
    copy.id = "a_copy".into();
    let clusters = cluster_structures(&[a, b, copy], TM_THRESHOLD);
    assert_eq!(clusters["a"], clusters["a_copy"]);
    assert_ne!(clusters["a"], clusters["b"]);
    let single = cluster_structures(&[random_ensemble("s", 20, 1, 1.0, &mut rng)], TM_THRESHOLD);
    assert_eq!(single.len(), 1);
}

fn toy_corpus() -> Vec<Ensemble> {
    let mut rng = rng(34);
    let geom = HelixGeometry::default();
    let mut out = Vec::new();
    for i in 0..3 {
        let (s, _) = hairpin(&format!("hp{i}_A"), "GGCGCA", "AAAA", &geom);
        let rot = random_rotation(&mut rng);
        out.push(Ensemble::new(format!("hp{i}"), vec![s.map_coords(rigid_motion(&rot, [i as f64; 3]))]).unwrap());
    }
    for i in 0..9 {
        out.push(random_ensemble(&format!("coil{i}"), 20 + 3 * i, 1, 1.0, &mut rng));
    }
    out.push(random_ensemble("short", 8, 1, 1.0, &mut rng));
    out
}

#[test]
fn single_state_split_keeps_test_clusters_whole() {
    let corpus = toy_corpus();
    let clusters = cluster_structures(&corpus, TM_THRESHOLD);
    assert_eq!(clusters["hp0"], clusters["hp1"]);
    assert_eq!(clusters["hp0"], clusters["hp2"]);
    let opts = SplitOptions { val_size: 3, ..SplitOptions::default() };
    let m = make_single_state_split(&corpus, &clusters, &["hp1".to_string()], &opts).unwrap();
    for id in ["hp0", "hp1", "hp2"] {
        assert!(m.test.iter().any(|t| t == id), "{id} not in test");
    }
    let all: Vec<&String> = m.train.iter().chain(&m.val).chain(&m.test).collect();
    let unique: BTreeSet<&String> = all.iter().copied().collect();
    assert_eq!(all.len(), unique.len(), "splits overlap");
    assert_eq!(unique.len(), 12);
    assert!(!unique.iter().any(|id| id.as_str() == "short"));
    validate_manifest(&m, &corpus, &opts).unwrap();
    for split in [&m.train, &m.val, &m.test] {
        let cs: BTreeSet<usize> = split.iter().map(|id| m.cluster_assignments[id]).collect();
        for other in [&m.train, &m.val, &m.test] {
            if !std::ptr::eq(split, other) {
                assert!(other.iter().all(|id| !cs.contains(&m.cluster_assignments[id])));
            }
        }
    }
}

#[test]
fn multi_state_split_ranks_flexible_cluster_first() {
    let mut rng = rng(35);
    let mut corpus: Vec<Ensemble> = (0..6).map(|i| random_ensemble(&format!("rigid{i}"), 20 + 2 * i, 1, 1.0, &mut rng)).collect();
    let seq = random_sequence(24, &mut rng);
    let base = random_coil("flex_0", &seq, &mut rng);
    let moved = {
        // Shifting half the chain by 15 Å leaves several Å after superposition.
        let mut s = base.clone();
        s.id = "flex_1".into();
        for beads in s.beads.iter_mut().skip(12) {
            for b in beads.iter_mut() {
                b[0] += 15.0;
            }
        }
        s
    };
    let rmsd = kabsch_rmsd(&c4_coords(&base), &c4_coords(&moved)).unwrap();
    assert!(rmsd > 2.0, "rmsd {rmsd}");
    corpus.push(Ensemble::new("flex", vec![base, moved]).unwrap());
    let mut jittered = random_ensemble("jitter", 22, 2, 0.3, &mut rng);
    jittered.id = "jitter".into();
    corpus.push(jittered);

    let clusters = cluster_structures(&corpus, TM_THRESHOLD);
    let opts = SplitOptions { val_size: 1, test_size: 1, ..SplitOptions::default() };
    let m = make_multi_state_split(&corpus, &clusters, &opts).unwrap();
    assert_eq!(m.test, vec!["flex".to_string()]);
    let flex_cluster = clusters["flex"];
    assert!((m.cluster_flexibility[&flex_cluster] - rmsd).abs() < 1e-9);
    assert!(m.val.iter().all(|id| id != "flex"));
    validate_manifest(&m, &corpus, &opts).unwrap();
    for id in ["rigid0", "rigid3"] {
        assert!(m.train.iter().any(|t| t == id));
    }
}

fn mat_vec(r: &[[f64; 3]; 3], v: &[f64]) -> [f64; 3] {
    [0, 1, 2].map(|i| r[i][0] * v[0] + r[i][1] * v[1] + r[i][2] * v[2])
}

#[test]
fn features_are_rotation_invariant_and_vectors_rotate() {
    let mut rng = rng(36);
    let cfg = FeaturizerConfig::default();
    let seq = random_sequence(40, &mut rng);
    let s = random_coil("f", &seq, &mut rng);
    let all: Vec<usize> = (0..s.len()).collect();
    let g = featurize(&s, &all, &cfg);
    for _ in 0..5 {
        let r = random_rotation(&mut rng);
        let h = featurize(&s.map_coords(rigid_motion(&r, [4.0, -2.0, 9.0])), &all, &cfg);
        assert_eq!(h.edges, g.edges);
        assert!(max_abs_diff(h.node_s.data(), g.node_s.data()) < 1e-9);
        assert!(max_abs_diff(h.edge_s.data(), g.edge_s.data()) < 1e-9);
        for (src, dst) in [(&g.node_v, &h.node_v), (&g.edge_v, &h.edge_v)] {
            for (a, b) in src.data().chunks_exact(3).zip(dst.data().chunks_exact(3)) {
                let ra = mat_vec(&r, a);
                assert!((0..3).all(|i| (ra[i] - b[i]).abs() < 1e-9));
            }
        }
    }
    for u in g.node_v.data().chunks_exact(3).chain(g.edge_v.data().chunks_exact(3)) {
        let len = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
        assert!(len == 0.0 || (len - 1.0).abs() < 1e-6);
    }
}

#[test]
fn reflection_negates_torsion_sines() {
    let mut rng = rng(37);
    let cfg = FeaturizerConfig::default();
    let seq = random_sequence(20, &mut rng);
    let s = random_coil("m", &seq, &mut rng);
    let all: Vec<usize> = (0..s.len()).collect();
    let g = featurize(&s, &all, &cfg);
    let h = featurize(&s.map_coords(|p| [-p[0], -p[1], -p[2]]), &all, &cfg);
    let fs = cfg.node_scalar_dim();
    let torsions = 2 * cfg.node_rbf + 2;
    for (a, b) in g.node_s.data().chunks_exact(fs).zip(h.node_s.data().chunks_exact(fs)) {
        for t in [torsions, torsions + 2] {
            assert!((a[t] + b[t]).abs() < 1e-9, "sin");
            assert!((a[t + 1] - b[t + 1]).abs() < 1e-9, "cos");
        }
    }
}

#[test]
fn right_angle_dihedral() {
    let d = dihedral([1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 1.0]);
    assert!((d.sin().abs() - 1.0).abs() < 1e-9);
    assert!(d.cos().abs() < 1e-9);
}

#[test]
fn collinear_neighbours_match_full_sort() {
    let coords: Vec<[f64; 3]> = (0..40).map(|i| [1.5 * i as f64, 0.0, 0.0]).collect();
    let edges = knn_edges(&coords, 32);
    for i in 0..coords.len() {
        let mut order: Vec<usize> = (0..coords.len()).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| {
            let da = (coords[a][0] - coords[i][0]).abs();
            let db = (coords[b][0] - coords[i][0]).abs();
            da.total_cmp(&db).then(a.cmp(&b))
        });
        let want: BTreeSet<usize> = order.into_iter().take(32).collect();
        let got: BTreeSet<usize> = edges.iter().filter(|e| e.1 == i).map(|e| e.0).collect();
        assert_eq!(got, want, "node {i}");
    }
}

#[test]
fn noise_has_requested_spread() {
    let mut coords = vec![[0.0; 3]; 100_000 / 3 + 1];
    add_noise(&mut coords, 0.1, &mut rng(38));
    let xs: Vec<f64> = coords.iter().flatten().copied().collect();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt();
    assert!((0.098..=0.102).contains(&sd), "sd {sd}");
    let mut again = vec![[0.0; 3]; 10];
    let mut once = vec![[0.0; 3]; 10];
    add_noise(&mut again, 0.1, &mut rng(39));
    add_noise(&mut once, 0.1, &mut rng(39));
    assert_eq!(again, once);
}

#[test]
fn union_adjacency_ignores_state_order() {
    let e = random_ensemble("u", 45, 3, 2.0, &mut rng(40));
    let cfg = FeaturizerConfig::default();
    let a = featurize_ensemble::<ChaCha8Rng>(&e, &[0, 1, 2], &cfg, None).unwrap();
    let b = featurize_ensemble::<ChaCha8Rng>(&e, &[2, 0, 1], &cfg, None).unwrap();
    assert_eq!(a.edges, b.edges);
    let all: Vec<usize> = (0..e.len()).collect();
    let per_state: BTreeSet<(usize, usize)> =
        e.states.iter().flat_map(|s| featurize(s, &all, &cfg).edges).collect();
    assert_eq!(a.edges.iter().copied().collect::<BTreeSet<_>>(), per_state);
    let single = build_multigraph(&[featurize(&e.states[0], &all, &cfg)]).unwrap();
    assert_eq!(single.edges.iter().copied().collect::<BTreeSet<_>>(), featurize(&e.states[0], &all, &cfg).edges.into_iter().collect());
    let fs = a.node_s.shape()[2];
    for node in 0..a.n {
        let row = |mg: &rna_invfold::featurizer::MultiGraph, c: usize| {
            mg.node_s.data()[(node * 3 + c) * fs..(node * 3 + c + 1) * fs].to_vec()
        };
        assert_eq!(row(&b, 0), row(&a, 2));
        assert_eq!(row(&b, 1), row(&a, 0));
    }
}
