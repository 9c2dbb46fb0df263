//! RNA backbone ingestion: PDB parsing, rigid superposition, structural
//! clustering and train/validation/test splits.

mod align;
mod cluster;
mod corpus;
mod fasta;
mod pdb;
mod split;

pub use align::{kabsch_rmsd, superpose, tm_d0, tm_score, tm_score_from_distances, Superposition};
pub use cluster::{cluster_structures, sequence_identity, SEQUENCE_IDENTITY_THRESHOLD, TM_THRESHOLD};
pub use corpus::{group_ensembles, load_corpus};
pub use fasta::{read_fasta, write_fasta, FastaRecord};
pub use pdb::{parse_pdb, write_pdb};
pub use split::{
    intra_sequence_rmsd, make_multi_state_split, make_single_state_split, rank_clusters_by_flexibility,
    validate_manifest, SplitKind, SplitManifest, SplitOptions,
};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Nucleotide alphabet in index order used for logits and embeddings.
pub const BASES: [char; 4] = ['A', 'C', 'G', 'U'];

/// Bead order inside [`RnaStructure::beads`].
pub const BEAD_P: usize = 0;
pub const BEAD_C4: usize = 1;
pub const BEAD_N: usize = 2;

pub fn base_index(c: char) -> Option<usize> {
    BASES.iter().position(|&b| b == c.to_ascii_uppercase())
}

/// Watson-Crick and G-U wobble pairs.
pub fn can_pair(a: char, b: char) -> bool {
    matches!(
        (a, b),
        ('A', 'U') | ('U', 'A') | ('G', 'C') | ('C', 'G') | ('G', 'U') | ('U', 'G')
    )
}

/// Converts a sequence over `ACGU` into base indices.
pub fn encode_sequence(seq: &str) -> Result<Vec<usize>> {
    seq.chars()
        .map(|c| base_index(c).ok_or_else(|| Error::InvalidSequence(format!("{c:?} in {seq}"))))
        .collect()
}

pub fn decode_sequence(idx: &[usize]) -> String {
    idx.iter().map(|&i| BASES[i]).collect()
}

/// One chain in 3-bead coarse-grained form: P, C4' and the glycosidic
/// nitrogen (N9 for purines, N1 for pyrimidines), in Å.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RnaStructure {
    pub id: String,
    /// Bases over `ACGU`; `N` marks an unknown identity at design time.
    pub sequence: String,
    pub beads: Vec<[[f64; 3]; 3]>,
    /// True when all three beads were observed.
    pub mask: Vec<bool>,
    /// Per-bead presence; missing beads hold zeros in `beads`.
    #[serde(default)]
    pub present: Vec<[bool; 3]>,
}

impl RnaStructure {
    /// Builds a fully observed structure.
    pub fn new(id: impl Into<String>, sequence: impl Into<String>, beads: Vec<[[f64; 3]; 3]>) -> Result<Self> {
        let sequence = sequence.into();
        if sequence.chars().count() != beads.len() {
            return Err(Error::LengthMismatch {
                expected: sequence.chars().count(),
                found: beads.len(),
            });
        }
        if beads.iter().flatten().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite bead coordinate".into()));
        }
        let n = beads.len();
        Ok(Self {
            id: id.into(),
            sequence,
            beads,
            mask: vec![true; n],
            present: vec![[true; 3]; n],
        })
    }

    pub fn len(&self) -> usize {
        self.beads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beads.is_empty()
    }

    /// Indices of nucleotides with all three beads.
    pub fn valid_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.mask[i]).collect()
    }

    pub fn bead_present(&self, i: usize, bead: usize) -> bool {
        self.present.get(i).map(|p| p[bead]).unwrap_or(self.mask[i])
    }

    /// Applies `f` to every coordinate (rigid motions, noise).
    pub fn map_coords(&self, mut f: impl FnMut([f64; 3]) -> [f64; 3]) -> Self {
        let mut out = self.clone();
        for (i, res) in out.beads.iter_mut().enumerate() {
            for (b, x) in res.iter_mut().enumerate() {
                if self.bead_present(i, b) {
                    *x = f(*x);
                }
            }
        }
        out
    }
}

/// All known conformations of one sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub id: String,
    pub sequence: String,
    pub states: Vec<RnaStructure>,
}

impl Ensemble {
    pub fn new(id: impl Into<String>, states: Vec<RnaStructure>) -> Result<Self> {
        let first = states
            .first()
            .ok_or_else(|| Error::InvalidArgument("ensemble needs at least one state".into()))?;
        let sequence = first.sequence.clone();
        if let Some(bad) = states.iter().find(|s| s.sequence != sequence) {
            return Err(Error::MismatchedStates(format!(
                "{} has sequence {} but {} has {}",
                first.id, sequence, bad.id, bad.sequence
            )));
        }
        Ok(Self {
            id: id.into(),
            sequence,
            states,
        })
    }

    pub fn len(&self) -> usize {
        self.sequence.chars().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    /// Nucleotides observed completely in every state.
    pub fn common_valid_indices(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.states.iter().all(|s| s.mask[i]))
            .collect()
    }

    /// Base indices of the native sequence at the given residues.
    pub fn bases_at(&self, residues: &[usize]) -> Result<Vec<usize>> {
        let seq: Vec<char> = self.sequence.chars().collect();
        residues
            .iter()
            .map(|&r| {
                seq.get(r)
                    .and_then(|&c| base_index(c))
                    .ok_or_else(|| Error::InvalidSequence(format!("{} has no standard base at residue {r}", self.id)))
            })
            .collect()
    }
}
