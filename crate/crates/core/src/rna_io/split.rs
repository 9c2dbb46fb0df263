//! Cluster-aware train/validation/test splits.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{align::kabsch_rmsd, Ensemble, BEAD_C4};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    SingleState,
    MultiState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub split_name: SplitKind,
    pub seed: u64,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub cluster_assignments: BTreeMap<String, usize>,
    /// Median intra-sequence RMSD per cluster (multi-state splits only).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub cluster_flexibility: BTreeMap<usize, f64>,
    #[serde(default)]
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitOptions {
    pub seed: u64,
    pub val_size: usize,
    pub test_size: usize,
    /// Largest cluster (in unique sequences) eligible for val/test.
    pub max_cluster_sequences: usize,
    /// Shorter RNAs are dropped.
    pub min_len: usize,
    /// Longer RNAs always go to train.
    pub max_len: usize,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            val_size: 100,
            test_size: 100,
            max_cluster_sequences: 5,
            min_len: 10,
            max_len: 1000,
        }
    }
}

struct Partition<'a> {
    /// Cluster id -> member ensembles (sorted by id), only eligible lengths.
    clusters: BTreeMap<usize, Vec<&'a Ensemble>>,
    unclustered: Vec<String>,
}

fn partition<'a>(
    ensembles: &'a [Ensemble],
    clusters: &BTreeMap<String, usize>,
    opts: &SplitOptions,
) -> Partition<'a> {
    let mut out = Partition {
        clusters: BTreeMap::new(),
        unclustered: Vec::new(),
    };
    for e in ensembles.iter().filter(|e| e.len() >= opts.min_len) {
        match clusters.get(&e.id) {
            Some(&c) => out.clusters.entry(c).or_default().push(e),
            None => out.unclustered.push(e.id.clone()),
        }
    }
    for members in out.clusters.values_mut() {
        members.sort_by(|a, b| a.id.cmp(&b.id));
    }
    out
}

fn eligible(members: &[&Ensemble], opts: &SplitOptions) -> bool {
    let unique: BTreeSet<&str> = members.iter().map(|e| e.sequence.as_str()).collect();
    unique.len() <= opts.max_cluster_sequences && members.iter().all(|e| e.len() <= opts.max_len)
}

fn ids<'a>(members: &'a [&Ensemble]) -> impl Iterator<Item = String> + 'a {
    members.iter().map(|e| e.id.clone())
}

fn finish(mut m: SplitManifest) -> SplitManifest {
    m.train.sort();
    m.val.sort();
    m.test.sort();
    m
}

/// Every cluster containing a listed test RNA goes to test; the remaining
/// clusters are shuffled and fill validation up to `val_size`, the rest
/// train. Unclustered, over-long and ineligible clusters go to train.
pub fn make_single_state_split(
    ensembles: &[Ensemble],
    clusters: &BTreeMap<String, usize>,
    test_ids: &[String],
    opts: &SplitOptions,
) -> Result<SplitManifest> {
    let part = partition(ensembles, clusters, opts);
    let mut test_clusters = BTreeSet::new();
    for id in test_ids {
        let found = part
            .clusters
            .iter()
            .find(|(_, m)| m.iter().any(|e| &e.id == id))
            .map(|(&c, _)| c);
        match found {
            Some(c) => {
                test_clusters.insert(c);
            }
            None => return Err(Error::UnknownTestId(id.clone())),
        }
    }
    let mut manifest = SplitManifest {
        split_name: SplitKind::SingleState,
        seed: opts.seed,
        train: part.unclustered.clone(),
        val: Vec::new(),
        test: Vec::new(),
        cluster_assignments: clusters.clone(),
        cluster_flexibility: BTreeMap::new(),
        notes: vec![
            "clusters containing a listed test RNA are assigned to test whole".into(),
            format!("remaining clusters shuffled with seed {}", opts.seed),
        ],
    };
    let mut rest = Vec::new();
    for (c, members) in &part.clusters {
        if test_clusters.contains(c) {
            manifest.test.extend(ids(members));
        } else {
            rest.push(*c);
        }
    }
    if manifest.test.is_empty() {
        return Err(Error::EmptySplit("test"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rest.shuffle(&mut rng);
    for c in rest {
        let members = &part.clusters[&c];
        if eligible(members, opts) && manifest.val.len() + members.len() <= opts.val_size {
            manifest.val.extend(ids(members));
        } else {
            manifest.train.extend(ids(members));
        }
    }
    Ok(finish(manifest))
}

/// Mean pairwise C4' RMSD among the states of one sequence (0 for one state).
pub fn intra_sequence_rmsd(e: &Ensemble) -> f64 {
    let k = e.states.len();
    if k < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut count = 0;
    for a in 0..k {
        for b in a + 1..k {
            let (sa, sb) = (&e.states[a], &e.states[b]);
            let idx: Vec<usize> = (0..sa.len().min(sb.len()))
                .filter(|&i| sa.bead_present(i, BEAD_C4) && sb.bead_present(i, BEAD_C4))
                .collect();
            let ca: Vec<_> = idx.iter().map(|&i| sa.beads[i][BEAD_C4]).collect();
            let cb: Vec<_> = idx.iter().map(|&i| sb.beads[i][BEAD_C4]).collect();
            if let Ok(r) = kabsch_rmsd(&ca, &cb) {
                total += r;
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    match n {
        0 => 0.0,
        _ if n % 2 == 1 => values[n / 2],
        _ => 0.5 * (values[n / 2 - 1] + values[n / 2]),
    }
}

/// Clusters ordered by descending median intra-sequence RMSD; ties by the
/// smallest member id.
pub fn rank_clusters_by_flexibility(
    ensembles: &[Ensemble],
    clusters: &BTreeMap<String, usize>,
    opts: &SplitOptions,
) -> Vec<(usize, f64)> {
    let part = partition(ensembles, clusters, opts);
    let mut ranked: Vec<(usize, f64, String)> = part
        .clusters
        .iter()
        .map(|(&c, members)| {
            let mut r: Vec<f64> = members.iter().map(|e| intra_sequence_rmsd(e)).collect();
            (c, median(&mut r), members[0].id.clone())
        })
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.2.cmp(&b.2)));
    ranked.into_iter().map(|(c, m, _)| (c, m)).collect()
}

/// Most conformationally variable clusters fill test, the next fill
/// validation; everything else trains. Only clusters with a nonzero median
/// are eligible for val/test.
pub fn make_multi_state_split(
    ensembles: &[Ensemble],
    clusters: &BTreeMap<String, usize>,
    opts: &SplitOptions,
) -> Result<SplitManifest> {
    let part = partition(ensembles, clusters, opts);
    let ranked = rank_clusters_by_flexibility(ensembles, clusters, opts);
    let mut manifest = SplitManifest {
        split_name: SplitKind::MultiState,
        seed: opts.seed,
        train: part.unclustered.clone(),
        val: Vec::new(),
        test: Vec::new(),
        cluster_assignments: clusters.clone(),
        cluster_flexibility: ranked.iter().copied().collect(),
        notes: vec![
            "clusters ranked by median intra-sequence C4' RMSD (per-sequence mean over state pairs)".into(),
            "ties in median RMSD broken by smallest ensemble id".into(),
        ],
    };
    for (c, med) in ranked {
        let members = &part.clusters[&c];
        let ok = med > 0.0 && eligible(members, opts);
        if ok && manifest.test.len() + members.len() <= opts.test_size {
            manifest.test.extend(ids(members));
        } else if ok && manifest.val.len() + members.len() <= opts.val_size {
            manifest.val.extend(ids(members));
        } else {
            manifest.train.extend(ids(members));
        }
    }
    Ok(finish(manifest))
}

/// Checks disjointness, that no cluster straddles two splits, and the
/// unique-sequence cap on validation (and multi-state test) clusters.
pub fn validate_manifest(m: &SplitManifest, ensembles: &[Ensemble], opts: &SplitOptions) -> std::result::Result<(), Vec<String>> {
    let mut problems = Vec::new();
    let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
    for (name, list) in [("train", &m.train), ("val", &m.val), ("test", &m.test)] {
        for id in list {
            if let Some(prev) = owner.insert(id, name) {
                problems.push(format!("{id} appears in both {prev} and {name}"));
            }
        }
    }
    let mut cluster_split: BTreeMap<usize, &str> = BTreeMap::new();
    for (id, split) in &owner {
        if let Some(&c) = m.cluster_assignments.get(*id) {
            if let Some(prev) = cluster_split.insert(c, split) {
                if prev != *split {
                    problems.push(format!("cluster {c} straddles {prev} and {split}"));
                }
            }
        }
    }
    let seqs: BTreeMap<&str, &str> = ensembles.iter().map(|e| (e.id.as_str(), e.sequence.as_str())).collect();
    let capped: Vec<(&str, &Vec<String>)> = match m.split_name {
        SplitKind::SingleState => vec![("val", &m.val)],
        SplitKind::MultiState => vec![("val", &m.val), ("test", &m.test)],
    };
    for (name, list) in capped {
        let mut per_cluster: BTreeMap<usize, BTreeSet<&str>> = BTreeMap::new();
        for id in list {
            let c = m.cluster_assignments.get(id).copied().unwrap_or(usize::MAX);
            per_cluster.entry(c).or_default().insert(seqs.get(id.as_str()).copied().unwrap_or(id));
        }
        for (c, s) in per_cluster {
            if s.len() > opts.max_cluster_sequences {
                problems.push(format!("{name} cluster {c} has {} unique sequences", s.len()));
            }
        }
    }
    for e in ensembles {
        if e.len() < opts.min_len && owner.contains_key(e.id.as_str()) {
            problems.push(format!("{} is shorter than {} nt", e.id, opts.min_len));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(problems)
    }
}
