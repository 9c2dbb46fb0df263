//! Geometric graph featurization of 3-bead RNA backbones and stacking of
//! conformations into a multi-graph.
//!
//! Node scalar channels, in order:
//!
//! | range | content |
//! |-------|---------|
//! | `0..16`  | RBF of the C4'-P distance |
//! | `16..32` | RBF of the C4'-N distance |
//! | `32, 33` | sin, cos of the P-C4'-N angle |
//! | `34, 35` | sin, cos of the eta pseudotorsion `C4'(i-1), P(i), C4'(i), P(i+1)` |
//! | `36, 37` | sin, cos of the theta pseudotorsion `P(i), C4'(i), P(i+1), C4'(i+1)` |
//!
//! Node vector channels: forward backbone direction, reverse backbone
//! direction, unit C4'->P, unit C4'->N. Edge scalars are 32 distance RBFs
//! followed by 32 sinusoidal encodings of the sequence offset `j - i`; the
//! single edge vector channel is the unit vector from destination to source.

mod geometry;
mod multigraph;

pub use geometry::{dihedral, unit};
pub use multigraph::{build_multigraph, featurize_ensemble, MultiGraph};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rna_io::{RnaStructure, BEAD_C4, BEAD_N, BEAD_P};
use crate::tensor::Tensor;
use geometry::{angle_sin_cos, norm, sub};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeaturizerConfig {
    pub top_k: usize,
    pub edge_rbf: usize,
    pub node_rbf: usize,
    pub posenc: usize,
    /// RBF centers span `[0, rbf_max]` Å.
    pub rbf_max: f64,
    pub posenc_base: f64,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        Self {
            top_k: 32,
            edge_rbf: 32,
            node_rbf: 16,
            posenc: 32,
            rbf_max: 20.0,
            posenc_base: 10000.0,
        }
    }
}

impl FeaturizerConfig {
    pub fn node_scalar_dim(&self) -> usize {
        2 * self.node_rbf + 6
    }

    pub const NODE_VECTOR_DIM: usize = 4;
    pub const EDGE_VECTOR_DIM: usize = 1;

    pub fn edge_scalar_dim(&self) -> usize {
        self.edge_rbf + self.posenc
    }
}

/// Gaussian radial basis expansion with `count` centers evenly spaced over
/// `[0, max]` and width equal to the spacing.
pub fn rbf(d: f64, count: usize, max: f64) -> Vec<f64> {
    if count == 1 {
        return vec![(-(d / max.max(1e-12)).powi(2)).exp()];
    }
    let width = max / (count - 1) as f64;
    (0..count)
        .map(|m| {
            let c = m as f64 * width;
            (-((d - c) / width).powi(2)).exp()
        })
        .collect()
}

/// 32 Gaussian bases over `[0, 20]` Å.
pub fn rbf32(d: f64) -> Vec<f64> {
    rbf(d, 32, 20.0)
}

/// Interleaved `[sin(x w_0), cos(x w_0), sin(x w_1), ...]` with
/// `w_m = base^(-2m / dim)`.
pub fn posenc(offset: i64, dim: usize, base: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(dim);
    for m in 0..dim / 2 {
        let freq = base.powf(-(2.0 * m as f64) / dim as f64);
        let a = offset as f64 * freq;
        out.push(a.sin());
        out.push(a.cos());
    }
    out
}

pub fn posenc32(offset: i64) -> Vec<f64> {
    posenc(offset, 32, 10000.0)
}

/// Per-nucleotide mean of the three beads for the given residues.
pub fn centroid_coords(structure: &RnaStructure, residues: &[usize]) -> Vec<[f64; 3]> {
    residues
        .iter()
        .map(|&i| {
            let b = &structure.beads[i];
            [0, 1, 2].map(|x| (b[0][x] + b[1][x] + b[2][x]) / 3.0)
        })
        .collect()
}

/// I.i.d. Gaussian noise on every coordinate component.
pub fn add_noise<R: Rng + ?Sized>(coords: &mut [[f64; 3]], sigma: f64, rng: &mut R) {
    if sigma <= 0.0 {
        return;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is positive");
    for p in coords.iter_mut() {
        for x in p.iter_mut() {
            *x += normal.sample(rng);
        }
    }
}

/// Copy of `structure` with noise added to every observed bead.
pub fn noisy_structure<R: Rng + ?Sized>(structure: &RnaStructure, sigma: f64, rng: &mut R) -> RnaStructure {
    if sigma <= 0.0 {
        return structure.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is positive");
    structure.map_coords(|x| x.map(|c| c + normal.sample(rng)))
}

/// Directed edges `(j, i)` from each node's `min(kmax, n - 1)` nearest
/// neighbours, ordered by destination then distance; ties go to the smaller
/// index.
pub fn knn_edges(coords: &[[f64; 3]], kmax: usize) -> Vec<(usize, usize)> {
    let n = coords.len();
    let k = kmax.min(n.saturating_sub(1));
    let mut edges = Vec::with_capacity(n * k);
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        cand.clear();
        cand.extend((0..n).filter(|&j| j != i).map(|j| {
            let d = sub(coords[j], coords[i]);
            (d[0] * d[0] + d[1] * d[1] + d[2] * d[2], j)
        }));
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < cand.len() {
            cand.select_nth_unstable_by(k, cmp);
            cand.truncate(k);
        }
        cand.sort_by(cmp);
        edges.extend(cand.iter().map(|&(_, j)| (j, i)));
    }
    edges
}

/// Scalar and vector node features for the residues in `residues`, whose
/// centroids are `coords`. Returns `([n, 2*node_rbf + 6], [n, 4, 3])`.
pub fn node_features(
    structure: &RnaStructure,
    residues: &[usize],
    coords: &[[f64; 3]],
    cfg: &FeaturizerConfig,
) -> (Tensor, Tensor) {
    let n = residues.len();
    let fs = cfg.node_scalar_dim();
    let mut s = Vec::with_capacity(n * fs);
    let mut v = Vec::with_capacity(n * 12);
    let bead = |a: usize, b: usize| structure.beads[residues[a]][b];
    for a in 0..n {
        let p = bead(a, BEAD_P);
        let c4 = bead(a, BEAD_C4);
        let nn = bead(a, BEAD_N);
        let to_p = sub(p, c4);
        let to_n = sub(nn, c4);

        let forward = if a + 1 < n { unit(sub(coords[a + 1], coords[a])) } else { [0.0; 3] };
        let reverse = if a > 0 { unit(sub(coords[a], coords[a - 1])) } else { [0.0; 3] };
        for u in [forward, reverse, unit(to_p), unit(to_n)] {
            v.extend_from_slice(&u);
        }

        s.extend(rbf(norm(to_p), cfg.node_rbf, cfg.rbf_max));
        s.extend(rbf(norm(to_n), cfg.node_rbf, cfg.rbf_max));
        let (sa, ca) = angle_sin_cos(to_p, to_n);
        s.extend([sa, ca]);
        let eta = (a > 0 && a + 1 < n).then(|| {
            dihedral(bead(a - 1, BEAD_C4), p, c4, bead(a + 1, BEAD_P))
        });
        let theta = (a + 1 < n).then(|| dihedral(p, c4, bead(a + 1, BEAD_P), bead(a + 1, BEAD_C4)));
        for t in [eta, theta] {
            match t {
                Some(x) if x.is_finite() => s.extend([x.sin(), x.cos()]),
                _ => s.extend([0.0, 0.0]),
            }
        }
    }
    (
        Tensor::new(vec![n, fs], s).expect("node scalar shape"),
        Tensor::new(vec![n, FeaturizerConfig::NODE_VECTOR_DIM, 3], v).expect("node vector shape"),
    )
}

/// Edge features for `(j, i)` pairs: `([E, edge_rbf + posenc], [E, 1, 3])`.
pub fn edge_features(
    coords: &[[f64; 3]],
    edges: &[(usize, usize)],
    positions: &[i64],
    cfg: &FeaturizerConfig,
) -> (Tensor, Tensor) {
    let fe = cfg.edge_scalar_dim();
    let mut s = Vec::with_capacity(edges.len() * fe);
    let mut v = Vec::with_capacity(edges.len() * 3);
    for &(j, i) in edges {
        let d = sub(coords[j], coords[i]);
        v.extend_from_slice(&unit(d));
        s.extend(rbf(norm(d), cfg.edge_rbf, cfg.rbf_max));
        s.extend(posenc(positions[j] - positions[i], cfg.posenc, cfg.posenc_base));
    }
    (
        Tensor::new(vec![edges.len(), fe], s).expect("edge scalar shape"),
        Tensor::new(vec![edges.len(), FeaturizerConfig::EDGE_VECTOR_DIM, 3], v).expect("edge vector shape"),
    )
}

/// One featurized conformation.
#[derive(Clone, Debug, PartialEq)]
pub struct GeometricGraph {
    pub n: usize,
    pub coords: Vec<[f64; 3]>,
    /// Residue index of each node in the source chain.
    pub positions: Vec<i64>,
    pub node_s: Tensor,
    pub node_v: Tensor,
    /// Directed `(source j, destination i)` pairs.
    pub edges: Vec<(usize, usize)>,
    pub edge_s: Tensor,
    pub edge_v: Tensor,
}

/// Featurizes the given residues (all must be fully observed).
pub fn featurize(structure: &RnaStructure, residues: &[usize], cfg: &FeaturizerConfig) -> GeometricGraph {
    let coords = centroid_coords(structure, residues);
    let positions: Vec<i64> = residues.iter().map(|&r| r as i64).collect();
    let edges = knn_edges(&coords, cfg.top_k);
    let (node_s, node_v) = node_features(structure, residues, &coords, cfg);
    let (edge_s, edge_v) = edge_features(&coords, &edges, &positions, cfg);
    GeometricGraph {
        n: residues.len(),
        coords,
        positions,
        node_s,
        node_v,
        edges,
        edge_s,
        edge_v,
    }
}
