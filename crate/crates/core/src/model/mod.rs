//! Multi-state GVP-GNN encoder with conformer pooling and an autoregressive
//! (or one-shot) base decoder.
//!
//! Rows of per-state tensors are `(node, state)` pairs laid out as
//! `node * k + state`. Parameters live in a [`ParamStore`]; a [`Session`]
//! binds them to a fresh tape for one forward (and optionally backward) pass.

mod checkpoint;
mod layers;
mod params;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, OptimizerMoments};
pub use layers::{ConvLayer, Dropout, Embed, Gvp, LayerInputs, Linear, Mlp, TupleNorm};
pub use params::{ParamId, ParamStore};

use crate::featurizer::{FeaturizerConfig, MultiGraph};
use crate::tensor::{Tape, Var};
use crate::{Error, Result};
use params::Init;

/// Trainable parameter count of the published configuration, for comparison.
pub const REFERENCE_PARAMETER_COUNT: usize = 2_147_944;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecoderKind {
    #[serde(rename = "AR")]
    Autoregressive,
    #[serde(rename = "NAR")]
    NonAutoregressive,
}

impl std::str::FromStr for DecoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "AR" => Ok(Self::Autoregressive),
            "NAR" => Ok(Self::NonAutoregressive),
            _ => Err(Error::InvalidArgument(format!("unknown decoder kind {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// (scalar, vector) channels of node embeddings.
    pub node_hidden: (usize, usize),
    /// (scalar, vector) channels of edge embeddings.
    pub edge_hidden: (usize, usize),
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub dropout: f64,
    /// Width of the base embedding concatenated onto decoder edges.
    pub seq_embed_dim: usize,
    pub decoder: DecoderKind,
    pub featurizer: FeaturizerConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            node_hidden: (128, 16),
            edge_hidden: (64, 4),
            encoder_layers: 4,
            decoder_layers: 4,
            dropout: 0.5,
            seq_embed_dim: 4,
            decoder: DecoderKind::Autoregressive,
            featurizer: FeaturizerConfig::default(),
        }
    }
}

impl ModelConfig {
    /// Small dimensions that train in seconds on one core.
    pub fn small() -> Self {
        Self {
            node_hidden: (32, 4),
            edge_hidden: (16, 2),
            encoder_layers: 2,
            decoder_layers: 2,
            dropout: 0.1,
            ..Self::default()
        }
    }

    pub fn node_in(&self) -> (usize, usize) {
        (self.featurizer.node_scalar_dim(), FeaturizerConfig::NODE_VECTOR_DIM)
    }

    pub fn edge_in(&self) -> (usize, usize) {
        (self.featurizer.edge_scalar_dim(), FeaturizerConfig::EDGE_VECTOR_DIM)
    }

    pub fn validate(&self) -> Result<()> {
        let (ns, nv) = self.node_hidden;
        let (es, ev) = self.edge_hidden;
        if ns == 0 || nv == 0 || es == 0 || ev == 0 || self.encoder_layers == 0 {
            return Err(Error::InvalidArgument("model dimensions and layer counts must be positive".into()));
        }
        if self.decoder == DecoderKind::Autoregressive && (self.decoder_layers == 0 || self.seq_embed_dim == 0) {
            return Err(Error::InvalidArgument("autoregressive decoder needs layers and a base embedding".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum Head {
    Autoregressive {
        seq_embed: ParamId,
        layers: Vec<ConvLayer>,
        out: Gvp,
    },
    OneShot(Mlp),
}

#[derive(Clone, Debug)]
struct Layout {
    node_embed: Embed,
    edge_embed: Embed,
    encoder: Vec<ConvLayer>,
    head: Head,
}

impl Layout {
    fn build(cfg: &ModelConfig, init: &mut Init) -> Self {
        let node = cfg.node_hidden;
        let edge = cfg.edge_hidden;
        let node_embed = Embed::new(init, "node_embed", cfg.node_in(), node);
        let edge_embed = Embed::new(init, "edge_embed", cfg.edge_in(), edge);
        let encoder = (0..cfg.encoder_layers)
            .map(|l| ConvLayer::new(init, &format!("encoder.{l}"), node, edge))
            .collect();
        let head = match cfg.decoder {
            DecoderKind::Autoregressive => {
                let seq_embed = init.normal("decoder.seq_embed".into(), &[4, cfg.seq_embed_dim]);
                let dec_edge = (edge.0 + cfg.seq_embed_dim, edge.1);
                let layers = (0..cfg.decoder_layers)
                    .map(|l| ConvLayer::new(init, &format!("decoder.{l}"), node, dec_edge))
                    .collect();
                let out = Gvp::build(init, "decoder.out", node, (4, 0), false, true);
                Head::Autoregressive { seq_embed, layers, out }
            }
            DecoderKind::NonAutoregressive => Head::OneShot(Mlp {
                hidden: Linear::new(init, "decoder.mlp.0", node.0, node.0, false),
                out: Linear::new(init, "decoder.mlp.1", node.0, 4, true),
            }),
        };
        Self {
            node_embed,
            edge_embed,
            encoder,
            head,
        }
    }
}

/// Scale applied to the fan-in bound of the last projection onto base logits.
pub const OUTPUT_INIT_GAIN: f64 = 0.1;
const OUTPUT_WEIGHTS: [&str; 2] = ["decoder.out.w_m.weight", "decoder.mlp.1.weight"];

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    layout: Layout,
}

impl Model {
    /// Fresh parameters drawn from a stream seeded by `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = Layout::build(
            &config,
            &mut Init {
                store: &mut params,
                rng: &mut rng,
            },
        );
        // Near-uniform logits at step zero keep the first loss close to ln 4.
        for (name, t) in params.names().to_vec().iter().zip(params.tensors_mut()) {
            if OUTPUT_WEIGHTS.contains(&name.as_str()) {
                t.data_mut().iter_mut().for_each(|w| *w *= OUTPUT_INIT_GAIN);
            }
        }
        Ok(Self { config, params, layout })
    }

    /// Rebuilds the layout for `config` and adopts `params`, which must match
    /// its manifest name for name and shape for shape.
    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        if model.params.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                model.params.len(),
                params.len()
            )));
        }
        for ((name, t), (other, u)) in model.params.iter().zip(params.iter()) {
            if name != other || t.shape() != u.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {other} {:?} does not match {name} {:?}",
                    u.shape(),
                    t.shape()
                )));
            }
        }
        model.params = params;
        Ok(model)
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }

    /// Binds parameters for one pass. Dropout is active iff `dropout_seed`
    /// is given.
    pub fn session(&self, with_grad: bool, dropout_seed: Option<u64>) -> Session<'_> {
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape, with_grad);
        Session {
            model: self,
            tape,
            vars,
            drop: Dropout {
                rate: self.config.dropout,
                rng: dropout_seed.map(ChaCha8Rng::seed_from_u64),
            },
        }
    }

    /// Inference session: no gradients, no dropout.
    pub fn eval_session(&self) -> Session<'_> {
        self.session(false, None)
    }
}

/// Encoder outputs.
#[derive(Clone, Copy, Debug)]
pub struct Encoded {
    /// Pooled node scalars `[n, ns]`.
    pub node_s: Var,
    /// Pooled node vectors `[n, nv, 3]`.
    pub node_v: Var,
    /// Per-state node scalars `[n * k, ns]` before pooling.
    pub state_s: Var,
    /// Per-state node vectors `[n * k, nv, 3]`.
    pub state_v: Var,
    /// Union edges averaged over the states they appear in, `[E, es]`.
    pub edge_s: Var,
    /// `[E, ev, 3]`
    pub edge_v: Var,
}

pub struct Session<'m> {
    model: &'m Model,
    pub tape: Tape,
    vars: Vec<Var>,
    drop: Dropout,
}

fn rows_of(data: &[f64], width: usize, rows: impl Iterator<Item = usize>) -> Vec<f64> {
    let mut out = Vec::new();
    for r in rows {
        out.extend_from_slice(&data[r * width..(r + 1) * width]);
    }
    out
}

/// Mean over the state axis: `[n * k, rest..]` -> `[n, rest..]`.
pub fn pool_conformers(tape: &mut Tape, x: Var, n: usize, k: usize) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    let mut split = vec![n, k];
    split.extend_from_slice(&shape[1..]);
    let x = tape.reshape(x, split)?;
    Ok(tape.mean(x, 1)?)
}

impl Session<'_> {
    pub fn model(&self) -> &Model {
        self.model
    }

    pub fn param_vars(&self) -> &[Var] {
        &self.vars
    }

    /// Gradients of every parameter from the last backward pass, zero-filled
    /// for parameters off the loss path.
    pub fn param_grads(&self) -> Vec<Vec<f64>> {
        self.vars
            .iter()
            .zip(self.model.params.tensors())
            .map(|(&v, t)| self.tape.grad(v).map_or_else(|| vec![0.0; t.numel()], <[f64]>::to_vec))
            .collect()
    }

    fn constant(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<Var> {
        Ok(self.tape.constant(shape, data)?)
    }

    /// Embeds a multigraph, runs the encoder layers on every state over the
    /// union edge list (masked per state) and pools over states.
    pub fn encode(&mut self, mg: &MultiGraph) -> Result<Encoded> {
        let layout = &self.model.layout;
        let (n, k) = (mg.n, mg.k);
        let rows = n * k;
        let (fs, fv) = (mg.node_s.shape()[2], mg.node_v.shape()[2]);
        let s0 = self.constant(vec![rows, fs], mg.node_s.data().to_vec())?;
        let v0 = self.constant(vec![rows, fv, 3], mg.node_v.data().to_vec())?;
        let (mut s, mut v) = layout.node_embed.apply(&mut self.tape, &self.vars, s0, v0)?;

        let present: Vec<usize> = (0..mg.edge_mask.len()).filter(|&p| mg.edge_mask[p]).collect();
        let (fe, fev) = (mg.edge_s.shape()[2], mg.edge_v.shape()[2]);
        let es0 = rows_of(mg.edge_s.data(), fe, present.iter().copied());
        let ev0 = rows_of(mg.edge_v.data(), fev * 3, present.iter().copied());
        let es0 = self.constant(vec![present.len(), fe], es0)?;
        let ev0 = self.constant(vec![present.len(), fev, 3], ev0)?;
        let (es, ev) = layout.edge_embed.apply(&mut self.tape, &self.vars, es0, ev0)?;

        let src_rows: Vec<usize> = present.iter().map(|&p| mg.edges[p / k].0 * k + p % k).collect();
        let dst_rows: Vec<usize> = present.iter().map(|&p| mg.edges[p / k].1 * k + p % k).collect();
        for layer in &layout.encoder {
            let t = &mut self.tape;
            let inputs = LayerInputs {
                src_s: t.gather_rows(s, &src_rows)?,
                src_v: t.gather_rows(v, &src_rows)?,
                dst_s: t.gather_rows(s, &dst_rows)?,
                dst_v: t.gather_rows(v, &dst_rows)?,
                edge_s: es,
                edge_v: ev,
                agg_rows: dst_rows.clone(),
                cur_s: s,
                cur_v: v,
            };
            (s, v) = layer.apply(t, &self.vars, &mut self.drop, inputs)?;
        }

        let node_s = pool_conformers(&mut self.tape, s, n, k)?;
        let node_v = pool_conformers(&mut self.tape, v, n, k)?;

        let m = mg.edges.len();
        let mut count = vec![0usize; m];
        for &p in &present {
            count[p / k] += 1;
        }
        let weights: Vec<f64> = present.iter().map(|&p| 1.0 / count[p / k] as f64).collect();
        let edge_of: Vec<usize> = present.iter().map(|&p| p / k).collect();
        let t = &mut self.tape;
        let es_w = t.mul_const(es, &weights)?;
        let ev_w = t.mul_const(ev, &weights)?;
        Ok(Encoded {
            node_s,
            node_v,
            state_s: s,
            state_v: v,
            edge_s: t.scatter_add_rows(es_w, &edge_of, m)?,
            edge_v: t.scatter_add_rows(ev_w, &edge_of, m)?,
        })
    }

    /// Base logits `[n, 4]`. The autoregressive head is teacher-forced on
    /// `sequence` (one base index per node); the one-shot head ignores it.
    pub fn logits(&mut self, mg: &MultiGraph, enc: &Encoded, sequence: &[usize]) -> Result<Var> {
        match self.model.config.decoder {
            DecoderKind::Autoregressive => self.decode_logits_ar(mg, enc, sequence),
            DecoderKind::NonAutoregressive => self.decode_logits_nar(enc),
        }
    }

    /// Per-node MLP on pooled scalars.
    pub fn decode_logits_nar(&mut self, enc: &Encoded) -> Result<Var> {
        match &self.model.layout.head {
            Head::OneShot(mlp) => mlp.apply(&mut self.tape, &self.vars, enc.node_s),
            Head::Autoregressive { .. } => Err(Error::InvalidArgument("model has an autoregressive decoder".into())),
        }
    }

    fn ar_head(&self) -> Result<(ParamId, &[ConvLayer], &Gvp)> {
        match &self.model.layout.head {
            Head::Autoregressive { seq_embed, layers, out } => Ok((*seq_embed, layers, out)),
            Head::OneShot(_) => Err(Error::InvalidArgument("model has a one-shot decoder".into())),
        }
    }

    /// Decoder edge scalars: pooled edge features with the source base
    /// embedding appended on causal edges and zeros elsewhere.
    fn decoder_edges(&mut self, mg: &MultiGraph, enc: &Encoded, ids: &[usize], sequence: &[usize]) -> Result<(Var, Var)> {
        let (seq_embed, _, _) = self.ar_head()?;
        let causal = |e: usize| {
            let (j, i) = mg.edges[e];
            mg.positions[j] < mg.positions[i]
        };
        let bases: Vec<usize> = ids.iter().map(|&e| if causal(e) { sequence[mg.edges[e].0] } else { 0 }).collect();
        let on: Vec<f64> = ids.iter().map(|&e| if causal(e) { 1.0 } else { 0.0 }).collect();
        let t = &mut self.tape;
        let es = t.gather_rows(enc.edge_s, ids)?;
        let ev = t.gather_rows(enc.edge_v, ids)?;
        let h = t.gather_rows(self.vars[seq_embed.0], &bases)?;
        let h = t.mul_const(h, &on)?;
        Ok((t.concat(&[es, h], 1)?, ev))
    }

    /// Teacher-forced autoregressive logits in one parallel pass.
    pub fn decode_logits_ar(&mut self, mg: &MultiGraph, enc: &Encoded, sequence: &[usize]) -> Result<Var> {
        if sequence.len() != mg.n {
            return Err(Error::LengthMismatch {
                expected: mg.n,
                found: sequence.len(),
            });
        }
        let (_, layers, out) = self.ar_head()?;
        let (layers, out) = (layers.to_vec(), out.clone());
        let causal = |e: &usize| {
            let (j, i) = mg.edges[*e];
            mg.positions[j] < mg.positions[i]
        };
        let fwd: Vec<usize> = (0..mg.edges.len()).filter(causal).collect();
        let bwd: Vec<usize> = (0..mg.edges.len()).filter(|e| !causal(e)).collect();
        let order: Vec<usize> = fwd.iter().chain(&bwd).copied().collect();
        let (edge_s, edge_v) = self.decoder_edges(mg, enc, &order, sequence)?;
        let src = |ids: &[usize]| ids.iter().map(|&e| mg.edges[e].0).collect::<Vec<_>>();
        let dst = |ids: &[usize]| ids.iter().map(|&e| mg.edges[e].1).collect::<Vec<_>>();
        let agg_rows = dst(&order);

        let (mut s, mut v) = (enc.node_s, enc.node_v);
        for layer in &layers {
            let t = &mut self.tape;
            let mut pick = |cur: Var, enc_x: Var, f: &[usize], b: &[usize]| -> Result<Var> {
                let a = t.gather_rows(cur, f)?;
                let c = t.gather_rows(enc_x, b)?;
                Ok(t.concat(&[a, c], 0)?)
            };
            let inputs = LayerInputs {
                src_s: pick(s, enc.node_s, &src(&fwd), &src(&bwd))?,
                src_v: pick(v, enc.node_v, &src(&fwd), &src(&bwd))?,
                dst_s: pick(s, enc.node_s, &dst(&fwd), &dst(&bwd))?,
                dst_v: pick(v, enc.node_v, &dst(&fwd), &dst(&bwd))?,
                edge_s,
                edge_v,
                agg_rows: agg_rows.clone(),
                cur_s: s,
                cur_v: v,
            };
            (s, v) = layer.apply(t, &self.vars, &mut self.drop, inputs)?;
        }
        let (logits, _) = out.apply(&mut self.tape, &self.vars, s, Some(v))?;
        Ok(logits)
    }

    /// Mean label-smoothed cross-entropy of the native sequence.
    pub fn loss(&mut self, mg: &MultiGraph, sequence: &[usize], smoothing: f64) -> Result<Var> {
        let enc = self.encode(mg)?;
        let logits = self.logits(mg, &enc, sequence)?;
        Ok(self.tape.softmax_cross_entropy(logits, sequence, smoothing)?)
    }

    /// Prepares node-by-node decoding. Each call to
    /// [`Session::decode_next`] runs the decoder layers for one node only.
    pub fn incremental(&mut self, mg: &MultiGraph, enc: &Encoded) -> Result<IncrementalDecoder> {
        let (_, layers, _) = self.ar_head()?;
        let depth = layers.len();
        let (ns, nv) = self.model.config.node_hidden;
        let n = mg.n;
        let mut in_edges = vec![Vec::new(); n];
        for (e, &(_, i)) in mg.edges.iter().enumerate() {
            in_edges[i].push(e);
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&a| (mg.positions[a], a));
        let enc_s = self.tape.value(enc.node_s).to_vec();
        let enc_v = self.tape.value(enc.node_v).to_vec();
        let mut states_s = vec![enc_s];
        let mut states_v = vec![enc_v];
        for _ in 0..depth {
            states_s.push(vec![0.0; n * ns]);
            states_v.push(vec![0.0; n * nv * 3]);
        }
        Ok(IncrementalDecoder {
            enc: *enc,
            order,
            in_edges,
            states_s,
            states_v,
            sequence: vec![0; n],
            decoded: vec![false; n],
        })
    }

    /// Logits for node `a`, given bases already fixed for every node that
    /// precedes it in decoding order.
    pub fn decode_next(&mut self, mg: &MultiGraph, dec: &mut IncrementalDecoder, a: usize) -> Result<[f64; 4]> {
        let mark = self.tape.len();
        let result = self.decode_next_inner(mg, dec, a);
        self.tape.truncate(mark);
        result
    }

    fn decode_next_inner(&mut self, mg: &MultiGraph, dec: &mut IncrementalDecoder, a: usize) -> Result<[f64; 4]> {
        let (_, layers, out) = self.ar_head()?;
        let (layers, out) = (layers.to_vec(), out.clone());
        let (ns, nv) = self.model.config.node_hidden;
        let ids = &dec.in_edges[a];
        let causal = |e: usize| mg.positions[mg.edges[e].0] < mg.positions[a];
        if let Some(&e) = ids.iter().find(|&&e| causal(e) && !dec.decoded[mg.edges[e].0]) {
            return Err(Error::InvalidArgument(format!(
                "node {} precedes node {a} but has not been decoded",
                mg.edges[e].0
            )));
        }
        let fwd: Vec<usize> = ids.iter().copied().filter(|&e| causal(e)).collect();
        let bwd: Vec<usize> = ids.iter().copied().filter(|&e| !causal(e)).collect();
        let order: Vec<usize> = fwd.iter().chain(&bwd).copied().collect();
        let (edge_s, edge_v) = self.decoder_edges(mg, &dec.enc, &order, &dec.sequence)?;
        let agg_rows = vec![0; order.len()];
        let src_f: Vec<usize> = fwd.iter().map(|&e| mg.edges[e].0).collect();
        let src_b: Vec<usize> = bwd.iter().map(|&e| mg.edges[e].0).collect();
        let (nf, nb) = (fwd.len(), bwd.len());

        let mut result = None;
        for (l, layer) in layers.iter().enumerate() {
            let (hs, hv) = (&dec.states_s[l], &dec.states_v[l]);
            let (es, ev) = (&dec.states_s[0], &dec.states_v[0]);
            let t = &mut self.tape;
            let cur_s = t.constant(vec![1, ns], rows_of(hs, ns, [a].into_iter()))?;
            let cur_v = t.constant(vec![1, nv, 3], rows_of(hv, nv * 3, [a].into_iter()))?;
            let enc_a_s = t.constant(vec![1, ns], rows_of(es, ns, [a].into_iter()))?;
            let enc_a_v = t.constant(vec![1, nv, 3], rows_of(ev, nv * 3, [a].into_iter()))?;
            let mut table = |data_cur: &[f64], data_enc: &[f64], w: usize, shape: &[usize]| -> Result<Var> {
                let mut d = rows_of(data_cur, w, src_f.iter().copied());
                d.extend(rows_of(data_enc, w, src_b.iter().copied()));
                let mut sh = vec![nf + nb];
                sh.extend_from_slice(shape);
                Ok(t.constant(sh, d)?)
            };
            let src_s = table(hs, es, ns, &[ns])?;
            let src_v = table(hv, ev, nv * 3, &[nv, 3])?;
            let dst_s = t.gather_rows(cur_s, &vec![0; nf])?;
            let dst_s_b = t.gather_rows(enc_a_s, &vec![0; nb])?;
            let dst_s = t.concat(&[dst_s, dst_s_b], 0)?;
            let dst_v = t.gather_rows(cur_v, &vec![0; nf])?;
            let dst_v_b = t.gather_rows(enc_a_v, &vec![0; nb])?;
            let dst_v = t.concat(&[dst_v, dst_v_b], 0)?;
            let inputs = LayerInputs {
                src_s,
                src_v,
                dst_s,
                dst_v,
                edge_s,
                edge_v,
                agg_rows: agg_rows.clone(),
                cur_s,
                cur_v,
            };
            let (s, v) = layer.apply(t, &self.vars, &mut self.drop, inputs)?;
            dec.states_s[l + 1][a * ns..(a + 1) * ns].copy_from_slice(t.value(s));
            dec.states_v[l + 1][a * nv * 3..(a + 1) * nv * 3].copy_from_slice(t.value(v));
            result = Some((s, v));
        }
        let (s, v) = result.ok_or_else(|| Error::InvalidArgument("decoder has no layers".into()))?;
        let (logits, _) = out.apply(&mut self.tape, &self.vars, s, Some(v))?;
        let l = self.tape.value(logits);
        Ok([l[0], l[1], l[2], l[3]])
    }
}

/// Cached decoder states for node-by-node sampling.
#[derive(Clone, Debug)]
pub struct IncrementalDecoder {
    enc: Encoded,
    /// Nodes in decoding order.
    pub order: Vec<usize>,
    in_edges: Vec<Vec<usize>>,
    /// Layer `l` node scalars, `states_s[0]` being the encoder output.
    states_s: Vec<Vec<f64>>,
    states_v: Vec<Vec<f64>>,
    sequence: Vec<usize>,
    decoded: Vec<bool>,
}

impl IncrementalDecoder {
    /// Fixes the base at node `a`, making it visible to later nodes.
    pub fn set_base(&mut self, a: usize, base: usize) {
        self.sequence[a] = base;
        self.decoded[a] = true;
    }

    pub fn sequence(&self) -> &[usize] {
        &self.sequence
    }
}
