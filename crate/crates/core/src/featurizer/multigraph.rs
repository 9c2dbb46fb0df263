use std::collections::BTreeMap;

use rand::Rng;
use serde_json::json;

use super::{featurize, noisy_structure, FeaturizerConfig, GeometricGraph};
use crate::rna_io::Ensemble;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// `k` conformations of one sequence stacked along a state axis over the
/// union of their adjacencies.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiGraph {
    pub n: usize,
    pub k: usize,
    /// Residue index of each node; decoding follows this order.
    pub positions: Vec<i64>,
    /// `[n, k, fs]`
    pub node_s: Tensor,
    /// `[n, k, fv, 3]`
    pub node_v: Tensor,
    /// Union edges `(j, i)`, sorted by destination then source.
    pub edges: Vec<(usize, usize)>,
    /// `[E, k, fe]`, zero where the edge is absent in a state.
    pub edge_s: Tensor,
    /// `[E, k, 1, 3]`
    pub edge_v: Tensor,
    /// `[E * k]`, edge-major: true if edge `e` exists in state `c`.
    pub edge_mask: Vec<bool>,
}

/// Stacks per-state graphs that share node count and ordering.
pub fn build_multigraph(graphs: &[GeometricGraph]) -> Result<MultiGraph> {
    let first = graphs
        .first()
        .ok_or_else(|| Error::InvalidArgument("multigraph needs at least one state".into()))?;
    let (n, k) = (first.n, graphs.len());
    if let Some(g) = graphs.iter().find(|g| g.n != n || g.positions != first.positions) {
        return Err(Error::MismatchedStates(format!(
            "state with {} nodes does not match {} nodes",
            g.n, n
        )));
    }
    let fs = first.node_s.shape()[1];
    let fv = first.node_v.shape()[1];
    let fe = first.edge_s.shape()[1];
    let fev = first.edge_v.shape()[1];

    let mut node_s = vec![0.0; n * k * fs];
    let mut node_v = vec![0.0; n * k * fv * 3];
    for (c, g) in graphs.iter().enumerate() {
        for i in 0..n {
            node_s[(i * k + c) * fs..(i * k + c + 1) * fs].copy_from_slice(&g.node_s.data()[i * fs..(i + 1) * fs]);
            let w = fv * 3;
            node_v[(i * k + c) * w..(i * k + c + 1) * w].copy_from_slice(&g.node_v.data()[i * w..(i + 1) * w]);
        }
    }

    // union keyed by (dst, src) so the edge order is independent of state order
    let mut union: BTreeMap<(usize, usize), Vec<Option<usize>>> = BTreeMap::new();
    for (c, g) in graphs.iter().enumerate() {
        for (e, &(j, i)) in g.edges.iter().enumerate() {
            union.entry((i, j)).or_insert_with(|| vec![None; k])[c] = Some(e);
        }
    }
    let m = union.len();
    let mut edges = Vec::with_capacity(m);
    let mut edge_s = vec![0.0; m * k * fe];
    let mut edge_v = vec![0.0; m * k * fev * 3];
    let mut edge_mask = vec![false; m * k];
    for (u, (&(i, j), per_state)) in union.iter().enumerate() {
        edges.push((j, i));
        for (c, slot) in per_state.iter().enumerate() {
            if let Some(e) = *slot {
                let g = &graphs[c];
                let row = u * k + c;
                edge_mask[row] = true;
                edge_s[row * fe..(row + 1) * fe].copy_from_slice(&g.edge_s.data()[e * fe..(e + 1) * fe]);
                let w = fev * 3;
                edge_v[row * w..(row + 1) * w].copy_from_slice(&g.edge_v.data()[e * w..(e + 1) * w]);
            }
        }
    }
    Ok(MultiGraph {
        n,
        k,
        positions: first.positions.clone(),
        node_s: Tensor::new(vec![n, k, fs], node_s)?,
        node_v: Tensor::new(vec![n, k, fv, 3], node_v)?,
        edges,
        edge_s: Tensor::new(vec![m, k, fe], edge_s)?,
        edge_v: Tensor::new(vec![m, k, fev, 3], edge_v)?,
        edge_mask,
    })
}

/// Featurizes the chosen states of an ensemble over the residues observed
/// in all of them. With `noise = Some((sigma, rng))` every bead is jittered
/// before featurization.
pub fn featurize_ensemble<R: Rng + ?Sized>(
    ensemble: &Ensemble,
    states: &[usize],
    cfg: &FeaturizerConfig,
    mut noise: Option<(f64, &mut R)>,
) -> Result<MultiGraph> {
    let residues: Vec<usize> = (0..ensemble.len())
        .filter(|&i| states.iter().all(|&s| ensemble.states[s].mask[i]))
        .collect();
    if residues.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "{} has fewer than 2 fully observed nucleotides",
            ensemble.id
        )));
    }
    let graphs: Vec<GeometricGraph> = states
        .iter()
        .map(|&s| {
            let st = &ensemble.states[s];
            match noise.as_mut() {
                Some((sigma, rng)) => featurize(&noisy_structure(st, *sigma, *rng), &residues, cfg),
                None => featurize(st, &residues, cfg),
            }
        })
        .collect();
    build_multigraph(&graphs)
}

fn permute_rows(data: &[f64], rows: usize, perm: impl Fn(usize) -> usize) -> Vec<f64> {
    let w = if rows == 0 { 0 } else { data.len() / rows };
    let mut out = Vec::with_capacity(data.len());
    for r in 0..rows {
        let src = perm(r);
        out.extend_from_slice(&data[src * w..(src + 1) * w]);
    }
    out
}

impl MultiGraph {
    /// Residue indices (as `usize`) of the nodes.
    pub fn residues(&self) -> Vec<usize> {
        self.positions.iter().map(|&p| p as usize).collect()
    }

    /// Reorders states: new state `c` is old state `perm[c]`.
    pub fn permute_states(&self, perm: &[usize]) -> MultiGraph {
        let k = self.k;
        let remap = |t: &Tensor, rows: usize| {
            let d = permute_rows(t.data(), rows * k, |r| (r / k) * k + perm[r % k]);
            Tensor::new(t.shape().to_vec(), d).expect("same shape")
        };
        let m = self.edges.len();
        MultiGraph {
            node_s: remap(&self.node_s, self.n),
            node_v: remap(&self.node_v, self.n),
            edge_s: remap(&self.edge_s, m),
            edge_v: remap(&self.edge_v, m),
            edge_mask: (0..m * k).map(|r| self.edge_mask[(r / k) * k + perm[r % k]]).collect(),
            ..self.clone()
        }
    }

    /// Relabels nodes: new node `a` is old node `perm[a]`. Residue positions
    /// travel with their nodes, so decoding order is unchanged.
    pub fn permute_nodes(&self, perm: &[usize]) -> MultiGraph {
        let mut inverse = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let node = |t: &Tensor| {
            Tensor::new(t.shape().to_vec(), permute_rows(t.data(), self.n, |r| perm[r])).expect("same shape")
        };
        MultiGraph {
            positions: perm.iter().map(|&o| self.positions[o]).collect(),
            node_s: node(&self.node_s),
            node_v: node(&self.node_v),
            edges: self.edges.iter().map(|&(j, i)| (inverse[j], inverse[i])).collect(),
            ..self.clone()
        }
    }

    /// Shapes and row-major data of every tensor, for golden files.
    pub fn to_json(&self) -> serde_json::Value {
        let t = |x: &Tensor| json!({ "shape": x.shape(), "data": x.data() });
        json!({
            "n": self.n,
            "k": self.k,
            "positions": self.positions,
            "edges": self.edges,
            "edge_mask": self.edge_mask,
            "node_s": t(&self.node_s),
            "node_v": t(&self.node_v),
            "edge_s": t(&self.edge_s),
            "edge_v": t(&self.edge_v),
        })
    }
}
