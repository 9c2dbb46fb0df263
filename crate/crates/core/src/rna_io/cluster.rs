use std::collections::BTreeMap;

use super::{align::tm_score, Ensemble, BEAD_C4};

pub const TM_THRESHOLD: f64 = 0.45;
pub const SEQUENCE_IDENTITY_THRESHOLD: f64 = 0.8;

/// Identity over the shorter sequence at the best ungapped offset.
pub fn sequence_identity(a: &str, b: &str) -> f64 {
    let (a, b): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
    let (short, long) = if a.len() <= b.len() { (&a, &b) } else { (&b, &a) };
    if short.is_empty() {
        return 0.0;
    }
    let mut best = 0;
    for offset in -(short.len() as isize - 1)..long.len() as isize {
        let matches = short
            .iter()
            .enumerate()
            .filter(|&(i, c)| {
                let j = i as isize + offset;
                j >= 0 && (j as usize) < long.len() && long[j as usize] == *c
            })
            .count();
        best = best.max(matches);
    }
    best as f64 / short.len() as f64
}

/// C4' TM-score between the first states, over residues observed in both.
fn structural_similarity(a: &Ensemble, b: &Ensemble) -> Option<f64> {
    let (sa, sb) = (&a.states[0], &b.states[0]);
    let idx: Vec<usize> = (0..sa.len())
        .filter(|&i| sa.bead_present(i, BEAD_C4) && sb.bead_present(i, BEAD_C4))
        .collect();
    if idx.len() < 3 {
        return None;
    }
    let ca: Vec<_> = idx.iter().map(|&i| sa.beads[i][BEAD_C4]).collect();
    let cb: Vec<_> = idx.iter().map(|&i| sb.beads[i][BEAD_C4]).collect();
    tm_score(&ca, &cb).ok()
}

fn similar(a: &Ensemble, b: &Ensemble, threshold: f64) -> bool {
    if a.len() == b.len() {
        if let Some(tm) = structural_similarity(a, b) {
            return tm > threshold;
        }
    }
    sequence_identity(&a.sequence, &b.sequence) >= SEQUENCE_IDENTITY_THRESHOLD
}

/// Greedy leader clustering. Ensembles are visited by descending length
/// (ties by id); each joins the first cluster whose leader is similar,
/// otherwise it founds a new cluster. Cluster indices follow founding order.
pub fn cluster_structures(ensembles: &[Ensemble], threshold: f64) -> BTreeMap<String, usize> {
    let mut order: Vec<&Ensemble> = ensembles.iter().collect();
    order.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.id.cmp(&b.id)));
    let mut leaders: Vec<&Ensemble> = Vec::new();
    let mut out = BTreeMap::new();
    for e in order {
        let cluster = match leaders.iter().position(|l| similar(l, e, threshold)) {
            Some(c) => c,
            None => {
                leaders.push(e);
                leaders.len() - 1
            }
        };
        out.insert(e.id.clone(), cluster);
    }
    out
}
