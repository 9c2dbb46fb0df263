//! Sequence sampling and the design metrics: native sequence recovery,
//! perplexity and secondary-structure self-consistency.

mod structure;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use structure::{
    mcc, nussinov_fold, pairs_from_structure, SecondaryStructure, MIN_PAIR_SPAN, PAIR_N_DISTANCE, PAIR_N_TOLERANCE,
};

use crate::featurizer::MultiGraph;
use crate::model::{DecoderKind, Encoded, Model, Session};
use crate::rna_io::decode_sequence;
use crate::tensor::log_sum_exp;
use crate::{Error, Result};

/// Below this temperature sampling is greedy.
pub const GREEDY_TEMPERATURE: f64 = 1e-4;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SamplingOptions {
    pub temperature: f64,
    /// Base forced at each node (empty: none fixed).
    pub fixed: Vec<Option<usize>>,
    /// Added to the logits before tempering (empty: no bias).
    pub logit_bias: Vec<[f64; 4]>,
}

impl SamplingOptions {
    pub fn with_temperature(temperature: f64) -> Self {
        Self {
            temperature,
            ..Self::default()
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        for (what, len) in [("fixed positions", self.fixed.len()), ("logit bias", self.logit_bias.len())] {
            if len != 0 && len != n {
                return Err(Error::InvalidArgument(format!("{what} cover {len} of {n} nodes")));
            }
        }
        if self.fixed.iter().flatten().any(|&b| b >= 4) {
            return Err(Error::InvalidArgument("fixed base index out of range".into()));
        }
        Ok(())
    }

    fn fixed_at(&self, a: usize) -> Option<usize> {
        self.fixed.get(a).copied().flatten()
    }
}

/// One sampled sequence over graph nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub bases: Vec<usize>,
    /// Log-probability of each chosen base under the model's untempered,
    /// unbiased distribution.
    pub logprobs: Vec<f64>,
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let z = log_sum_exp(logits);
    logits.iter().map(|x| x - z).collect()
}

/// Chooses a base from `logits`, returning it with its untempered log-probability.
fn choose<R: Rng + ?Sized>(logits: [f64; 4], a: usize, opts: &SamplingOptions, rng: &mut R) -> (usize, f64) {
    let lp = log_softmax(&logits);
    if let Some(b) = opts.fixed_at(a) {
        return (b, lp[b]);
    }
    let bias = opts.logit_bias.get(a).copied().unwrap_or([0.0; 4]);
    let z: Vec<f64> = (0..4).map(|b| logits[b] + bias[b]).collect();
    let b = if opts.temperature < GREEDY_TEMPERATURE {
        let mut best = 0;
        for c in 1..4 {
            if z[c] > z[best] {
                best = c;
            }
        }
        best
    } else {
        let scaled: Vec<f64> = z.iter().map(|x| x / opts.temperature).collect();
        let probs: Vec<f64> = log_softmax(&scaled).iter().map(|x| x.exp()).collect();
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = 3;
        for (c, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = c;
                break;
            }
        }
        pick
    };
    (b, lp[b])
}

/// Tempered sampling distribution of one position, exposed for checks.
pub fn sampling_distribution(logits: [f64; 4], bias: [f64; 4], temperature: f64) -> [f64; 4] {
    let scaled: Vec<f64> = (0..4).map(|b| (logits[b] + bias[b]) / temperature).collect();
    let p = log_softmax(&scaled);
    [p[0].exp(), p[1].exp(), p[2].exp(), p[3].exp()]
}

/// Samples one sequence 5' to 3' on an already-encoded graph.
pub fn sample_with_session<R: Rng + ?Sized>(
    session: &mut Session,
    mg: &MultiGraph,
    enc: &Encoded,
    opts: &SamplingOptions,
    rng: &mut R,
) -> Result<Sample> {
    opts.check(mg.n)?;
    let n = mg.n;
    let mut bases = vec![0; n];
    let mut logprobs = vec![0.0; n];
    match session.model().config.decoder {
        DecoderKind::Autoregressive => {
            let mut dec = session.incremental(mg, enc)?;
            for a in dec.order.clone() {
                let logits = session.decode_next(mg, &mut dec, a)?;
                let (b, lp) = choose(logits, a, opts, rng);
                dec.set_base(a, b);
                bases[a] = b;
                logprobs[a] = lp;
            }
        }
        DecoderKind::NonAutoregressive => {
            let mark = session.tape.len();
            let logits = session.decode_logits_nar(enc)?;
            let all = session.tape.value(logits).to_vec();
            session.tape.truncate(mark);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by_key(|&a| (mg.positions[a], a));
            for a in order {
                let l = [all[a * 4], all[a * 4 + 1], all[a * 4 + 2], all[a * 4 + 3]];
                let (b, lp) = choose(l, a, opts, rng);
                bases[a] = b;
                logprobs[a] = lp;
            }
        }
    }
    Ok(Sample { bases, logprobs })
}

/// `n_samples` designs; sample `s` draws from a generator seeded with
/// `base_seed + s`, so results do not depend on the thread count.
pub fn sample_many(model: &Model, mg: &MultiGraph, opts: &SamplingOptions, n_samples: usize, base_seed: u64) -> Result<Vec<Sample>> {
    opts.check(mg.n)?;
    if n_samples == 0 {
        return Ok(Vec::new());
    }
    let chunk = n_samples.div_ceil(rayon::current_num_threads().max(1));
    let indices: Vec<usize> = (0..n_samples).collect();
    let chunks: Vec<Result<Vec<Sample>>> = indices
        .par_chunks(chunk)
        .map(|ids| {
            let mut session = model.eval_session();
            let enc = session.encode(mg)?;
            ids.iter()
                .map(|&s| {
                    let mut rng = ChaCha8Rng::seed_from_u64(base_seed.wrapping_add(s as u64));
                    sample_with_session(&mut session, mg, &enc, opts, &mut rng)
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(n_samples);
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

/// Per-node log-probabilities of `sequence` from one teacher-forced pass.
pub fn teacher_forced_logprobs(session: &mut Session, mg: &MultiGraph, enc: &Encoded, sequence: &[usize]) -> Result<Vec<f64>> {
    if sequence.len() != mg.n {
        return Err(Error::LengthMismatch {
            expected: mg.n,
            found: sequence.len(),
        });
    }
    if let Some(&b) = sequence.iter().find(|&&b| b >= 4) {
        return Err(Error::InvalidArgument(format!("base index {b} out of range")));
    }
    let mark = session.tape.len();
    let logits = session.logits(mg, enc, sequence)?;
    let values = session.tape.value(logits).to_vec();
    session.tape.truncate(mark);
    Ok(values
        .chunks_exact(4)
        .zip(sequence)
        .map(|(row, &b)| row[b] - log_sum_exp(row))
        .collect())
}

/// `exp(-mean(logprobs))`, natural log.
pub fn perplexity_from_logprobs(logprobs: &[f64]) -> f64 {
    if logprobs.is_empty() {
        return f64::NAN;
    }
    (-logprobs.iter().sum::<f64>() / logprobs.len() as f64).exp()
}

/// Teacher-forced perplexity of `sequence` (base indices per node).
pub fn perplexity(model: &Model, mg: &MultiGraph, sequence: &[usize]) -> Result<f64> {
    let mut session = model.eval_session();
    let enc = session.encode(mg)?;
    Ok(perplexity_from_logprobs(&teacher_forced_logprobs(&mut session, mg, &enc, sequence)?))
}

/// Fraction of positions where `designed` matches `native`, over positions
/// with `mask[i] == true` (all when `mask` is `None`).
pub fn recovery(designed: &str, native: &str, mask: Option<&[bool]>) -> Result<f64> {
    let d: Vec<char> = designed.chars().collect();
    let t: Vec<char> = native.chars().collect();
    if d.len() != t.len() {
        return Err(Error::LengthMismatch {
            expected: t.len(),
            found: d.len(),
        });
    }
    if let Some(m) = mask {
        if m.len() != d.len() {
            return Err(Error::LengthMismatch {
                expected: d.len(),
                found: m.len(),
            });
        }
    }
    let counted = |i: usize| mask.is_none_or(|m| m[i]);
    let total = (0..d.len()).filter(|&i| counted(i)).count();
    if total == 0 {
        return Ok(f64::NAN);
    }
    let hits = (0..d.len()).filter(|&i| counted(i) && d[i] == t[i]).count();
    Ok(hits as f64 / total as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    pub sequence: String,
    pub per_position_logprob: Vec<f64>,
    pub perplexity: f64,
    /// Over designed (not fixed) positions; all positions if every one is fixed.
    pub recovery: Option<f64>,
    /// Mean over the ground-truth structures of the folded design.
    pub mcc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DesignOptions {
    pub n_samples: usize,
    pub sampling: SamplingOptions,
    pub seed: u64,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            n_samples: 16,
            sampling: SamplingOptions::with_temperature(0.1),
            seed: 0,
        }
    }
}

/// Mean MCC of `fold(design)` against each ground-truth structure.
pub fn design_mcc(design: &str, truths: &[SecondaryStructure]) -> Result<Option<f64>> {
    if truths.is_empty() {
        return Ok(None);
    }
    let folded = nussinov_fold(design);
    let mut total = 0.0;
    for t in truths {
        total += mcc(&folded, t)?;
    }
    Ok(Some(total / truths.len() as f64))
}

/// Samples designs and scores them against the native bases and the
/// ground-truth structures (all indexed by graph node).
pub fn design(
    model: &Model,
    mg: &MultiGraph,
    native: Option<&[usize]>,
    truths: &[SecondaryStructure],
    opts: &DesignOptions,
) -> Result<Vec<DesignResult>> {
    if let Some(t) = truths.iter().find(|t| t.n != mg.n) {
        return Err(Error::LengthMismatch {
            expected: mg.n,
            found: t.n,
        });
    }
    let samples = sample_many(model, mg, &opts.sampling, opts.n_samples, opts.seed)?;
    let designed_mask: Vec<bool> = (0..mg.n).map(|a| opts.sampling.fixed_at(a).is_none()).collect();
    let any_designed = designed_mask.iter().any(|&d| d);
    samples
        .into_iter()
        .map(|s| {
            let sequence = decode_sequence(&s.bases);
            let recovery = match native {
                Some(nat) => {
                    let nat = decode_sequence(nat);
                    Some(recovery(&sequence, &nat, any_designed.then_some(designed_mask.as_slice()))?)
                }
                None => None,
            };
            Ok(DesignResult {
                mcc: design_mcc(&sequence, truths)?,
                perplexity: perplexity_from_logprobs(&s.logprobs),
                per_position_logprob: s.logprobs,
                recovery,
                sequence,
            })
        })
        .collect()
}

/// Mean over `n_samples` designs of [`design_mcc`].
pub fn self_consistency(
    model: &Model,
    mg: &MultiGraph,
    truths: &[SecondaryStructure],
    n_samples: usize,
    temperature: f64,
    seed: u64,
) -> Result<f64> {
    let opts = DesignOptions {
        n_samples,
        sampling: SamplingOptions::with_temperature(temperature),
        seed,
    };
    let results = design(model, mg, None, truths, &opts)?;
    let scores: Vec<f64> = results.iter().filter_map(|r| r.mcc).collect();
    if scores.is_empty() {
        return Ok(0.0);
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Per-ensemble evaluation summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub n: usize,
    pub states: usize,
    /// Mean recovery of the sampled designs.
    pub recovery: f64,
    /// Teacher-forced perplexity of the native sequence.
    pub perplexity: f64,
    /// Mean perplexity of the sampled designs.
    pub sample_perplexity: f64,
    pub mcc: Option<f64>,
}

/// Scores one graph against its native bases and structures.
pub fn evaluate(
    model: &Model,
    id: &str,
    mg: &MultiGraph,
    native: &[usize],
    truths: &[SecondaryStructure],
    opts: &DesignOptions,
) -> Result<EvalRecord> {
    let results = design(model, mg, Some(native), truths, opts)?;
    let mean = |xs: Vec<f64>| if xs.is_empty() { f64::NAN } else { xs.iter().sum::<f64>() / xs.len() as f64 };
    let mccs: Vec<f64> = results.iter().filter_map(|r| r.mcc).collect();
    Ok(EvalRecord {
        id: id.to_string(),
        n: mg.n,
        states: mg.k,
        recovery: mean(results.iter().filter_map(|r| r.recovery).collect()),
        perplexity: perplexity(model, mg, native)?,
        sample_perplexity: mean(results.iter().map(|r| r.perplexity).collect()),
        mcc: (!mccs.is_empty()).then(|| mean(mccs)),
    })
}
