#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rna_invfold::featurizer::{featurize_ensemble, MultiGraph};
use rna_invfold::model::{Model, ModelConfig};
use rna_invfold::rna_io::Ensemble;
use rna_invfold::tensor::{Tape, Tensor, Var};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Smallest model that still exercises every layer.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        node_hidden: (8, 2),
        edge_hidden: (4, 1),
        encoder_layers: 1,
        decoder_layers: 1,
        dropout: 0.0,
        ..ModelConfig::small()
    }
}

/// Multigraph over every state, with the native bases per node.
pub fn full_graph(e: &Ensemble, cfg: &ModelConfig) -> (MultiGraph, Vec<usize>) {
    let states: Vec<usize> = (0..e.num_states()).collect();
    let mg = featurize_ensemble::<ChaCha8Rng>(e, &states, &cfg.featurizer, None).unwrap();
    let native = e.bases_at(&mg.residues()).unwrap();
    (mg, native)
}

/// Teacher-forced logits `[n * 4]`.
pub fn logits(model: &Model, mg: &MultiGraph, seq: &[usize]) -> Vec<f64> {
    let mut s = model.eval_session();
    let enc = s.encode(mg).unwrap();
    let l = s.logits(mg, &enc, seq).unwrap();
    s.tape.value(l).to_vec()
}

pub struct EncoderValues {
    pub node_s: Vec<f64>,
    pub state_s: Vec<f64>,
    pub node_v: Vec<f64>,
}

pub fn encoder_values(model: &Model, mg: &MultiGraph) -> EncoderValues {
    let mut s = model.eval_session();
    let enc = s.encode(mg).unwrap();
    EncoderValues {
        node_s: s.tape.value(enc.node_s).to_vec(),
        state_s: s.tape.value(enc.state_s).to_vec(),
        node_v: s.tape.value(enc.node_v).to_vec(),
    }
}

/// `max |a - b| / max |b|`.
pub fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|y| y.abs()).fold(0.0, f64::max).max(1e-12);
    diff / scale
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn rotate_rows(data: &[f64], r: &[[f64; 3]; 3]) -> Vec<f64> {
    data.chunks_exact(3)
        .flat_map(|v| (0..3).map(move |i| r[i][0] * v[0] + r[i][1] * v[1] + r[i][2] * v[2]))
        .collect()
}

/// `|analytic - numeric| / (|numeric| + 1e-8)`.
pub fn grad_rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (numeric.abs() + 1e-8)
}

pub const FD_STEP: f64 = 1e-5;

/// Largest relative error between reverse-mode and central-difference
/// gradients of `sum(w * build(inputs))` over every input coordinate.
pub fn fd_check<F>(inputs: &[Tensor], build: F, rng: &mut ChaCha8Rng) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut weights: Option<Vec<f64>> = None;
    let mut eval = |tape: &mut Tape, vars: &[Var], weights: &mut Option<Vec<f64>>| -> Var {
        let out = build(tape, vars);
        let n = tape.value(out).len();
        let w = weights.get_or_insert_with(|| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
        let weighted = tape.mul_const(out, w).unwrap();
        tape.sum_all(weighted).unwrap()
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(&t.clone().with_grad())).collect();
    let loss = eval(&mut tape, &vars, &mut weights);
    tape.backward(loss).unwrap();
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| tape.grad(v).map_or(vec![0.0; t.numel()], <[f64]>::to_vec))
        .collect();
    let mut worst: f64 = 0.0;
    for (i, t) in inputs.iter().enumerate() {
        for j in 0..t.numel() {
            let mut value_at = |delta: f64| {
                let mut shifted: Vec<Tensor> = inputs.to_vec();
                shifted[i].data_mut()[j] += delta;
                let mut tape = Tape::new();
                let vars: Vec<Var> = shifted.iter().map(|t| tape.leaf(t)).collect();
                let l = eval(&mut tape, &vars, &mut weights);
                tape.value(l)[0]
            };
            let numeric = (value_at(FD_STEP) - value_at(-FD_STEP)) / (2.0 * FD_STEP);
            worst = worst.max(grad_rel_err(analytic[i][j], numeric));
        }
    }
    worst
}

/// Uniform tensor in `[-1, 1)` with entries kept at least `gap` from zero.
pub fn random_tensor(shape: &[usize], gap: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let x: f64 = rng.random_range(-1.0..1.0);
            if x.abs() >= gap {
                break x;
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}
