use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::rna_io::{can_pair, RnaStructure, BEAD_N};
use crate::{Error, Result};

/// Shortest allowed span `j - i` of a base pair (hairpin loops of >= 3).
pub const MIN_PAIR_SPAN: usize = 4;
/// Glycosidic nitrogen distance of a canonical pair, Å.
pub const PAIR_N_DISTANCE: f64 = 8.9;
pub const PAIR_N_TOLERANCE: f64 = 1.0;

/// Base pairs `(i, j)`, `i < j`, over `n` positions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecondaryStructure {
    pub n: usize,
    pub pairs: BTreeSet<(usize, usize)>,
}

impl SecondaryStructure {
    pub fn empty(n: usize) -> Self {
        Self { n, pairs: BTreeSet::new() }
    }

    /// Validates span, range and single-partner constraints.
    pub fn new(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut seen = vec![false; n];
        let mut set = BTreeSet::new();
        for (a, b) in pairs {
            let (i, j) = (a.min(b), a.max(b));
            if j >= n {
                return Err(Error::InvalidArgument(format!("pair ({i}, {j}) outside length {n}")));
            }
            if j - i < MIN_PAIR_SPAN {
                return Err(Error::InvalidArgument(format!("pair ({i}, {j}) closes a loop shorter than 3")));
            }
            if seen[i] || seen[j] {
                return Err(Error::InvalidArgument(format!("position in pair ({i}, {j}) is already paired")));
            }
            seen[i] = true;
            seen[j] = true;
            set.insert((i, j));
        }
        Ok(Self { n, pairs: set })
    }

    /// Parses dot-bracket notation; `()[]{}<>` bracket families may cross.
    pub fn from_dot_bracket(s: &str) -> Result<Self> {
        let chars: Vec<char> = s.trim().chars().collect();
        let families = [('(', ')'), ('[', ']'), ('{', '}'), ('<', '>')];
        let mut stacks: Vec<Vec<usize>> = vec![Vec::new(); families.len()];
        let mut pairs = Vec::new();
        for (p, &c) in chars.iter().enumerate() {
            if c == '.' || c == '-' {
                continue;
            }
            if let Some(f) = families.iter().position(|&(o, _)| o == c) {
                stacks[f].push(p);
            } else if let Some(f) = families.iter().position(|&(_, cl)| cl == c) {
                let i = stacks[f]
                    .pop()
                    .ok_or_else(|| Error::InvalidArgument(format!("unbalanced '{c}' at {p}")))?;
                pairs.push((i, p));
            } else {
                return Err(Error::InvalidArgument(format!("unexpected character '{c}' in dot-bracket")));
            }
        }
        if stacks.iter().any(|s| !s.is_empty()) {
            return Err(Error::InvalidArgument("unbalanced opening bracket".into()));
        }
        Self::new(chars.len(), pairs)
    }

    /// Dot-bracket string, or `None` if pairs cross.
    pub fn to_dot_bracket(&self) -> Option<String> {
        let mut out = vec!['.'; self.n];
        let mut stack: Vec<usize> = Vec::new();
        let partner = self.partners();
        for p in 0..self.n {
            match partner[p] {
                Some(q) if q > p => {
                    out[p] = '(';
                    stack.push(p);
                }
                Some(q) => {
                    if stack.pop() != Some(q) {
                        return None;
                    }
                    out[p] = ')';
                }
                None => {}
            }
        }
        Some(out.into_iter().collect())
    }

    pub fn partners(&self) -> Vec<Option<usize>> {
        let mut p = vec![None; self.n];
        for &(i, j) in &self.pairs {
            p[i] = Some(j);
            p[j] = Some(i);
        }
        p
    }

    /// Re-indexes onto the listed positions, dropping pairs that leave the
    /// subset or fall below the minimum span.
    pub fn restrict(&self, positions: &[usize]) -> Self {
        let mut index = vec![None; self.n];
        for (new, &old) in positions.iter().enumerate() {
            if old < self.n {
                index[old] = Some(new);
            }
        }
        let pairs = self
            .pairs
            .iter()
            .filter_map(|&(i, j)| Some((index[i]?, index[j]?)))
            .filter(|&(a, b)| b >= a + MIN_PAIR_SPAN)
            .collect();
        Self {
            n: positions.len(),
            pairs,
        }
    }
}

/// Pairs with maximal count over AU/GC/GU with span >= 4. Traceback prefers
/// `i` unpaired, then `j` unpaired, then `(i, j)` paired, then the leftmost
/// bifurcation.
pub fn nussinov_fold(sequence: &str) -> SecondaryStructure {
    let s: Vec<char> = sequence.chars().collect();
    let n = s.len();
    if n == 0 {
        return SecondaryStructure::empty(0);
    }
    let mut best = vec![vec![0u32; n]; n];
    let pair = |i: usize, j: usize| j >= i + MIN_PAIR_SPAN && can_pair(s[i], s[j]);
    for span in MIN_PAIR_SPAN..n {
        for i in 0..n - span {
            let j = i + span;
            let mut v = best[i + 1][j].max(best[i][j - 1]);
            if pair(i, j) {
                v = v.max(best[i + 1][j - 1] + 1);
            }
            for k in i + 1..j {
                v = v.max(best[i][k] + best[k + 1][j]);
            }
            best[i][j] = v;
        }
    }
    let mut pairs = Vec::new();
    let mut stack = vec![(0, n - 1)];
    while let Some((i, j)) = stack.pop() {
        if i >= j || best[i][j] == 0 {
            continue;
        }
        let v = best[i][j];
        if best[i + 1][j] == v {
            stack.push((i + 1, j));
        } else if best[i][j - 1] == v {
            stack.push((i, j - 1));
        } else if pair(i, j) && best[i + 1][j - 1] + 1 == v {
            pairs.push((i, j));
            stack.push((i + 1, j - 1));
        } else {
            let k = (i + 1..j)
                .find(|&k| best[i][k] + best[k + 1][j] == v)
                .expect("some decomposition attains the optimum");
            stack.push((k + 1, j));
            stack.push((i, k));
        }
    }
    SecondaryStructure::new(n, pairs).expect("fold respects constraints")
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Greedy pairing of complementary bases whose N beads lie within
/// `8.9 ± 1.0` Å, closest to 8.9 first, each nucleotide at most once.
pub fn pairs_from_structure(structure: &RnaStructure) -> SecondaryStructure {
    let s: Vec<char> = structure.sequence.chars().collect();
    let n = s.len();
    let mut cands = Vec::new();
    for i in 0..n {
        if !structure.bead_present(i, BEAD_N) {
            continue;
        }
        for j in i + MIN_PAIR_SPAN..n {
            if !structure.bead_present(j, BEAD_N) || !can_pair(s[i], s[j]) {
                continue;
            }
            let dev = (dist(structure.beads[i][BEAD_N], structure.beads[j][BEAD_N]) - PAIR_N_DISTANCE).abs();
            if dev <= PAIR_N_TOLERANCE {
                cands.push((dev, i, j));
            }
        }
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut used = vec![false; n];
    let mut pairs = Vec::new();
    for (_, i, j) in cands {
        if !used[i] && !used[j] {
            used[i] = true;
            used[j] = true;
            pairs.push((i, j));
        }
    }
    SecondaryStructure::new(n, pairs).expect("greedy pairing respects constraints")
}

/// Matthews correlation over position pairs `i < j` with span >= 4.
/// A zero denominator gives 0.
pub fn mcc(pred: &SecondaryStructure, truth: &SecondaryStructure) -> Result<f64> {
    if pred.n != truth.n {
        return Err(Error::LengthMismatch {
            expected: truth.n,
            found: pred.n,
        });
    }
    let n = truth.n;
    let total = if n > MIN_PAIR_SPAN {
        let m = n - MIN_PAIR_SPAN;
        m * (m + 1) / 2
    } else {
        0
    };
    let tp = pred.pairs.intersection(&truth.pairs).count();
    let fp = pred.pairs.len() - tp;
    let fn_ = truth.pairs.len() - tp;
    let tn = total - tp - fp - fn_;
    let (tp, fp, fn_, tn) = (tp as f64, fp as f64, fn_ as f64, tn as f64);
    let denom = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    Ok(if denom == 0.0 { 0.0 } else { (tp * tn - fp * fn_) / denom })
}
