use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{Init, ParamId};
use crate::tensor::{Tape, Var};
use crate::Result;

/// Dense map `x @ W + b` with `W: [in, out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub(crate) fn new(init: &mut Init, name: &str, fan_in: usize, fan_out: usize, zero_bias: bool) -> Self {
        let weight = init.uniform(format!("{name}.weight"), &[fan_in, fan_out], fan_in);
        let bias = if zero_bias {
            init.constant(format!("{name}.bias"), &[fan_out], 0.0)
        } else {
            init.uniform(format!("{name}.bias"), &[fan_out], fan_in)
        };
        Self { weight, bias }
    }

    pub fn apply(&self, tape: &mut Tape, p: &[Var], x: Var) -> Result<Var> {
        let y = tape.matmul(x, p[self.weight.0])?;
        Ok(tape.add(y, p[self.bias.0])?)
    }
}

/// Geometric vector perceptron on `(s [r, si], v [r, vi, 3])`.
#[derive(Clone, Debug)]
pub struct Gvp {
    pub dims_in: (usize, usize),
    pub dims_out: (usize, usize),
    /// `[vi, h]`
    pub w_h: Option<ParamId>,
    /// Scalar map over `[s ++ |W_h v|]`.
    pub w_m: Linear,
    /// `[h, vo]`
    pub w_mu: Option<ParamId>,
    /// Gate from output scalars to vector channels.
    pub w_g: Option<Linear>,
    pub scalar_act: bool,
}

impl Gvp {
    pub(crate) fn new(init: &mut Init, name: &str, dims_in: (usize, usize), dims_out: (usize, usize), scalar_act: bool) -> Self {
        Self::build(init, name, dims_in, dims_out, scalar_act, false)
    }

    pub(crate) fn build(
        init: &mut Init,
        name: &str,
        dims_in: (usize, usize),
        dims_out: (usize, usize),
        scalar_act: bool,
        zero_bias: bool,
    ) -> Self {
        let (si, vi) = dims_in;
        let (so, vo) = dims_out;
        assert!(vi > 0 || vo == 0, "vector outputs need vector inputs");
        let h = vi.max(vo);
        let w_h = (vi > 0).then(|| init.uniform(format!("{name}.w_h"), &[vi, h], vi));
        let w_m = Linear::new(init, &format!("{name}.w_m"), si + if vi > 0 { h } else { 0 }, so, zero_bias);
        let (w_mu, w_g) = if vo > 0 {
            (
                Some(init.uniform(format!("{name}.w_mu"), &[h, vo], h)),
                Some(Linear::new(init, &format!("{name}.w_g"), so, vo, false)),
            )
        } else {
            (None, None)
        };
        Self {
            dims_in,
            dims_out,
            w_h,
            w_m,
            w_mu,
            w_g,
            scalar_act,
        }
    }

    pub fn apply(&self, tape: &mut Tape, p: &[Var], s: Var, v: Option<Var>) -> Result<(Var, Option<Var>)> {
        let (vh, s_in) = match (self.w_h, v) {
            (Some(w_h), Some(v)) => {
                let vh = tape.channel_mix(v, p[w_h.0])?;
                let norms = tape.safe_norm(vh)?;
                (Some(vh), tape.concat(&[s, norms], 1)?)
            }
            _ => (None, s),
        };
        let mut s_out = self.w_m.apply(tape, p, s_in)?;
        if self.scalar_act {
            s_out = tape.relu(s_out);
        }
        let v_out = match (self.w_mu, &self.w_g, vh) {
            (Some(w_mu), Some(w_g), Some(vh)) => {
                let vmu = tape.channel_mix(vh, p[w_mu.0])?;
                let gate = w_g.apply(tape, p, s_out)?;
                let gate = tape.sigmoid(gate);
                Some(tape.scale_channels(vmu, gate)?)
            }
            _ => None,
        };
        Ok((s_out, v_out))
    }
}

/// Affine layer norm on scalars plus parameter-free RMS norm on vectors.
#[derive(Clone, Debug)]
pub struct TupleNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl TupleNorm {
    pub(crate) fn new(init: &mut Init, name: &str, dim: usize) -> Self {
        Self {
            gamma: init.constant(format!("{name}.gamma"), &[dim], 1.0),
            beta: init.constant(format!("{name}.beta"), &[dim], 0.0),
        }
    }

    pub fn apply(&self, tape: &mut Tape, p: &[Var], s: Var, v: Option<Var>) -> Result<(Var, Option<Var>)> {
        let n = tape.layer_norm(s)?;
        let n = tape.mul(n, p[self.gamma.0])?;
        let n = tape.add(n, p[self.beta.0])?;
        let v = match v {
            Some(v) => Some(tape.vector_norm(v)?),
            None => None,
        };
        Ok((n, v))
    }
}

/// Input embedding: norm, then a GVP without scalar activation.
#[derive(Clone, Debug)]
pub struct Embed {
    pub norm: TupleNorm,
    pub gvp: Gvp,
}

impl Embed {
    pub(crate) fn new(init: &mut Init, name: &str, dims_in: (usize, usize), dims_out: (usize, usize)) -> Self {
        Self {
            norm: TupleNorm::new(init, &format!("{name}.norm"), dims_in.0),
            gvp: Gvp::new(init, &format!("{name}.gvp"), dims_in, dims_out, false),
        }
    }

    pub fn apply(&self, tape: &mut Tape, p: &[Var], s: Var, v: Var) -> Result<(Var, Var)> {
        let (s, v) = self.norm.apply(tape, p, s, Some(v))?;
        let (s, v) = self.gvp.apply(tape, p, s, v)?;
        Ok((s, v.expect("embedding has vector outputs")))
    }
}

/// One message-passing layer: a 3-GVP message function, sum aggregation,
/// residual + norm, then a 2-GVP feed-forward update with residual + norm.
#[derive(Clone, Debug)]
pub struct ConvLayer {
    pub message: [Gvp; 3],
    pub norm0: TupleNorm,
    pub ff: [Gvp; 2],
    pub norm1: TupleNorm,
}

impl ConvLayer {
    pub(crate) fn new(init: &mut Init, name: &str, node: (usize, usize), edge: (usize, usize)) -> Self {
        let msg_in = (2 * node.0 + edge.0, 2 * node.1 + edge.1);
        let hidden = (4 * node.0, 2 * node.1);
        Self {
            message: [
                Gvp::new(init, &format!("{name}.message.0"), msg_in, node, true),
                Gvp::new(init, &format!("{name}.message.1"), node, node, true),
                Gvp::new(init, &format!("{name}.message.2"), node, node, false),
            ],
            norm0: TupleNorm::new(init, &format!("{name}.norm0"), node.0),
            ff: [
                Gvp::new(init, &format!("{name}.ff.0"), node, hidden, true),
                Gvp::new(init, &format!("{name}.ff.1"), hidden, node, false),
            ],
            norm1: TupleNorm::new(init, &format!("{name}.norm1"), node.0),
        }
    }
}

/// Gathered inputs to a [`ConvLayer`]: one row per message, plus the current
/// state of every destination row.
pub struct LayerInputs {
    pub src_s: Var,
    pub src_v: Var,
    pub dst_s: Var,
    pub dst_v: Var,
    pub edge_s: Var,
    pub edge_v: Var,
    /// Destination row of each message, in `0..cur rows`.
    pub agg_rows: Vec<usize>,
    pub cur_s: Var,
    pub cur_v: Var,
}

/// Dropout with rate `p`. Vector channels are zeroed whole.
pub struct Dropout {
    pub rate: f64,
    pub rng: Option<ChaCha8Rng>,
}

impl Dropout {
    fn mask(&mut self, count: usize) -> Option<Vec<f64>> {
        let rng = self.rng.as_mut()?;
        if self.rate <= 0.0 {
            return None;
        }
        let keep = 1.0 / (1.0 - self.rate);
        Some(
            (0..count)
                .map(|_| if rng.random::<f64>() < self.rate { 0.0 } else { keep })
                .collect(),
        )
    }

    pub fn scalars(&mut self, tape: &mut Tape, s: Var) -> Result<Var> {
        let n: usize = tape.shape(s).iter().product();
        match self.mask(n) {
            Some(m) => Ok(tape.mul_const(s, &m)?),
            None => Ok(s),
        }
    }

    pub fn vectors(&mut self, tape: &mut Tape, v: Var) -> Result<Var> {
        let shape = tape.shape(v).to_vec();
        match self.mask(shape[0] * shape[1]) {
            Some(m) => {
                let full: Vec<f64> = m.iter().flat_map(|&x| [x, x, x]).collect();
                Ok(tape.mul_const(v, &full)?)
            }
            None => Ok(v),
        }
    }
}

impl ConvLayer {
    pub fn apply(&self, tape: &mut Tape, p: &[Var], drop: &mut Dropout, x: LayerInputs) -> Result<(Var, Var)> {
        let rows = tape.shape(x.cur_s)[0];
        let ms = tape.concat(&[x.src_s, x.edge_s, x.dst_s], 1)?;
        let mv = tape.concat(&[x.src_v, x.edge_v, x.dst_v], 1)?;
        let (mut ms, mut mv) = (ms, Some(mv));
        for g in &self.message {
            (ms, mv) = g.apply(tape, p, ms, mv)?;
        }
        let agg_s = tape.scatter_add_rows(ms, &x.agg_rows, rows)?;
        let agg_v = tape.scatter_add_rows(mv.expect("vector messages"), &x.agg_rows, rows)?;

        let ds = drop.scalars(tape, agg_s)?;
        let dv = drop.vectors(tape, agg_v)?;
        let s = tape.add(x.cur_s, ds)?;
        let v = tape.add(x.cur_v, dv)?;
        let (s, v) = self.norm0.apply(tape, p, s, Some(v))?;
        let v = v.expect("vectors");

        let (fs, fv) = self.ff[0].apply(tape, p, s, Some(v))?;
        let (fs, fv) = self.ff[1].apply(tape, p, fs, fv)?;
        let ds = drop.scalars(tape, fs)?;
        let dv = drop.vectors(tape, fv.expect("vectors"))?;
        let s2 = tape.add(s, ds)?;
        let v2 = tape.add(v, dv)?;
        let (s2, v2) = self.norm1.apply(tape, p, s2, Some(v2))?;
        Ok((s2, v2.expect("vectors")))
    }
}

/// Two-layer per-node MLP for one-shot decoding.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub hidden: Linear,
    pub out: Linear,
}

impl Mlp {
    pub fn apply(&self, tape: &mut Tape, p: &[Var], x: Var) -> Result<Var> {
        let h = self.hidden.apply(tape, p, x)?;
        let h = tape.relu(h);
        self.out.apply(tape, p, h)
    }
}
