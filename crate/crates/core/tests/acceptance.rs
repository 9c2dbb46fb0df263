//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rna_invfold::design::{
    design, nussinov_fold, pairs_from_structure, perplexity, perplexity_from_logprobs, DesignOptions, SamplingOptions,
};
use rna_invfold::fitness::{evaluate_strategies, rank_by_perplexity, simulate_baseline, FitnessRecord, Pool, Strategy};
use rna_invfold::model::{Checkpoint, DecoderKind, Model, ModelConfig};
use rna_invfold::rna_io::{cluster_structures, make_multi_state_split, Ensemble, SplitOptions, BASES, TM_THRESHOLD};
use rna_invfold::synth::{hairpin_corpus, random_ensemble, random_rotation, random_sequence, rigid_motion, write_corpus};
use rna_invfold::tensor::{Tape, Tensor, Var};
use rna_invfold::training::{eval_graph, TrainConfig, Trainer};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

const INSTANCES: usize = 20;

// ---------------------------------------------------------------- gradients

type Builder = Box<dyn Fn(&mut Tape, &[Var]) -> Var>;

/// Random input shapes and a graph builder for one op instance.
fn op_instance(op: &str, rng: &mut rand_chacha::ChaCha8Rng) -> (Vec<Tensor>, Builder) {
    let mut values = common::rng(rng.random());
    let mut d = |lo: usize, hi: usize| rng.random_range(lo..=hi);
    let (r, c, h) = (d(1, 4), d(1, 4), d(1, 4));
    let mut t = |shape: &[usize], gap: f64| random_tensor(shape, gap, &mut values);
    match op {
        "matmul" => (vec![t(&[r, c], 0.0), t(&[c, h], 0.0)], Box::new(|tp, v| tp.matmul(v[0], v[1]).unwrap())),
        "add" => (vec![t(&[r, c], 0.0), t(&[r, c], 0.0)], Box::new(|tp, v| tp.add(v[0], v[1]).unwrap())),
        "add_broadcast" => (vec![t(&[r, c], 0.0), t(&[c], 0.0)], Box::new(|tp, v| tp.add(v[0], v[1]).unwrap())),
        "sub" => (vec![t(&[r, c], 0.0), t(&[r, c], 0.0)], Box::new(|tp, v| tp.sub(v[0], v[1]).unwrap())),
        "mul" => (vec![t(&[r, c], 0.0), t(&[r, c], 0.0)], Box::new(|tp, v| tp.mul(v[0], v[1]).unwrap())),
        "mul_broadcast" => (vec![t(&[r, c], 0.0), t(&[c], 0.0)], Box::new(|tp, v| tp.mul(v[0], v[1]).unwrap())),
        "relu" => (vec![t(&[r, c], 1e-2)], Box::new(|tp, v| tp.relu(v[0]))),
        "sigmoid" => (vec![t(&[r, c], 0.0)], Box::new(|tp, v| tp.sigmoid(v[0]))),
        "scale" => {
            let k = d(1, 7) as f64 - 3.5;
            (vec![t(&[r, c], 0.0)], Box::new(move |tp, v| tp.scale(v[0], k)))
        }
        "sum" | "mean" => {
            let axis = d(0, 2);
            let mean = op == "mean";
            (
                vec![t(&[r, c, h], 0.0)],
                Box::new(move |tp, v| if mean { tp.mean(v[0], axis).unwrap() } else { tp.sum(v[0], axis).unwrap() }),
            )
        }
        "sum_all" => (vec![t(&[r, c], 0.0)], Box::new(|tp, v| tp.sum_all(v[0]).unwrap())),
        "safe_norm" => (vec![t(&[r, c, 3], 0.0)], Box::new(|tp, v| tp.safe_norm(v[0]).unwrap())),
        "softmax_cross_entropy" => {
            let targets: Vec<usize> = (0..r).map(|_| d(0, 3)).collect();
            let smoothing = d(0, 4) as f64 * 0.05;
            (
                vec![t(&[r, 4], 0.0)],
                Box::new(move |tp, v| tp.softmax_cross_entropy(v[0], &targets, smoothing).unwrap()),
            )
        }
        "reshape" => (vec![t(&[r, c], 0.0)], Box::new(move |tp, v| tp.reshape(v[0], vec![c, r]).unwrap())),
        "concat" => {
            let axis = d(0, 1);
            let other = if axis == 0 { [h, c] } else { [r, h] };
            (
                vec![t(&[r, c], 0.0), t(&other, 0.0)],
                Box::new(move |tp, v| tp.concat(&[v[0], v[1]], axis).unwrap()),
            )
        }
        "gather_rows" => {
            let rows: Vec<usize> = (0..d(1, 6)).map(|_| d(0, r - 1)).collect();
            (vec![t(&[r, c], 0.0)], Box::new(move |tp, v| tp.gather_rows(v[0], &rows).unwrap()))
        }
        "scatter_add_rows" => {
            let out_rows = d(1, 4);
            let rows: Vec<usize> = (0..r).map(|_| d(0, out_rows - 1)).collect();
            (
                vec![t(&[r, c], 0.0)],
                Box::new(move |tp, v| tp.scatter_add_rows(v[0], &rows, out_rows).unwrap()),
            )
        }
        "mul_const" => {
            let per_row = d(0, 1) == 1;
            let n = if per_row { r } else { r * c };
            let factors: Vec<f64> = (0..n).map(|_| d(0, 8) as f64 * 0.25 - 1.0).collect();
            (vec![t(&[r, c], 0.0)], Box::new(move |tp, v| tp.mul_const(v[0], &factors).unwrap()))
        }
        "channel_mix" => (
            vec![t(&[r, c, 3], 0.0), t(&[c, h], 0.0)],
            Box::new(|tp, v| tp.channel_mix(v[0], v[1]).unwrap()),
        ),
        "scale_channels" => (
            vec![t(&[r, h, 3], 0.0), t(&[r, h], 0.0)],
            Box::new(|tp, v| tp.scale_channels(v[0], v[1]).unwrap()),
        ),
        "layer_norm" => (vec![t(&[r, c + 1], 0.0)], Box::new(|tp, v| tp.layer_norm(v[0]).unwrap())),
        "vector_norm" => (vec![t(&[r, c, 3], 0.0)], Box::new(|tp, v| tp.vector_norm(v[0]).unwrap())),
        _ => unreachable!("unknown op {op}"),
    }
}

const OPS: [&str; 23] = [
    "matmul",
    "add",
    "add_broadcast",
    "sub",
    "mul",
    "mul_broadcast",
    "relu",
    "sigmoid",
    "scale",
    "sum",
    "mean",
    "sum_all",
    "safe_norm",
    "softmax_cross_entropy",
    "reshape",
    "concat",
    "gather_rows",
    "scatter_add_rows",
    "mul_const",
    "channel_mix",
    "scale_channels",
    "layer_norm",
    "vector_norm",
];

struct ModelFd {
    /// `|analytic - FD| / (|FD| + 1e-8)` with `|.|` the norm over every parameter.
    normwise: f64,
    /// Same formula per coordinate, for the report only.
    elementwise: f64,
    params: usize,
}

/// Full loss gradient against central differences on every parameter coordinate.
fn model_fd(decoder: DecoderKind, instance: u64) -> ModelFd {
    let mut rng = rng(1000 + instance);
    let cfg = ModelConfig { decoder, node_hidden: (4, 1), edge_hidden: (2, 1), ..tiny_config() };
    let mut model = Model::new(cfg.clone(), instance).unwrap();
    let n = rng.random_range(4..=8);
    let k = rng.random_range(1..=3);
    let e = random_ensemble("fd", n, k, 1.0, &mut rng);
    let (mg, native) = full_graph(&e, &cfg);
    let loss_of = |m: &Model| {
        let mut s = m.session(false, None);
        let l = s.loss(&mg, &native, 0.05).unwrap();
        s.tape.value(l)[0]
    };
    let grads = {
        let mut s = model.session(true, None);
        let l = s.loss(&mg, &native, 0.05).unwrap();
        s.tape.backward(l).unwrap();
        s.param_grads()
    };
    let (mut diff2, mut fd2, mut elementwise, mut params) = (0.0, 0.0, 0.0f64, 0);
    for (t, grad) in grads.iter().enumerate() {
        for (j, &analytic) in grad.iter().enumerate() {
            let orig = model.params.tensors()[t].data()[j];
            model.params.tensors_mut()[t].data_mut()[j] = orig + FD_STEP;
            let up = loss_of(&model);
            model.params.tensors_mut()[t].data_mut()[j] = orig - FD_STEP;
            let down = loss_of(&model);
            model.params.tensors_mut()[t].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            diff2 += (analytic - numeric).powi(2);
            fd2 += numeric * numeric;
            elementwise = elementwise.max(grad_rel_err(analytic, numeric));
            params += 1;
        }
    }
    ModelFd { normwise: diff2.sqrt() / (fd2.sqrt() + 1e-8), elementwise, params }
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = rng(11);
    let mut failures = Vec::new();
    let mut worst_all: f64 = 0.0;
    let mut model_notes = Vec::new();
    for op in OPS {
        let mut worst: f64 = 0.0;
        for _ in 0..INSTANCES {
            let (inputs, build) = op_instance(op, &mut rng);
            worst = worst.max(fd_check(&inputs, build, &mut rng));
        }
        worst_all = worst_all.max(worst);
        if worst >= 1e-4 {
            failures.push(format!("{op} {worst:.1e}"));
        }
    }
    for decoder in [DecoderKind::Autoregressive, DecoderKind::NonAutoregressive] {
        let checks: Vec<ModelFd> = (0..INSTANCES as u64).map(|i| model_fd(decoder, i)).collect();
        let worst = checks.iter().map(|c| c.normwise).fold(0.0, f64::max);
        let coords: usize = checks.iter().map(|c| c.params).sum();
        let elementwise = checks.iter().map(|c| c.elementwise).fold(0.0, f64::max);
        model_notes.push(format!(
            "{decoder:?} {coords} coords normwise {worst:.1e} (per coord {elementwise:.1e})"
        ));
        worst_all = worst_all.max(worst);
        if worst >= 1e-4 {
            failures.push(format!("{decoder:?} model loss {worst:.1e}"));
        }
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(120);
    Outcome::new(
        pass,
        format!(
            "{} ops + AR/NAR model loss x {INSTANCES} instances, worst rel err {worst_all:.1e}, {}, {:.1}s{}",
            OPS.len(),
            model_notes.join(", "),
            elapsed.as_secs_f64(),
            if failures.is_empty() { String::new() } else { format!(", failed: {}", failures.join("; ")) }
        ),
    )
}

// ------------------------------------------------------------- equivariance

fn equivariance_suite() -> Outcome {
    let mut rng = rng(22);
    let (mut worst_s, mut worst_l, mut worst_v) = (0.0f64, 0.0f64, 0.0f64);
    let mut min_reflection = f64::INFINITY;
    for g in 0..5u64 {
        let n = rng.random_range(20..=50);
        let k = rng.random_range(1..=3);
        let e = random_ensemble("eq", n, k, 1.0, &mut rng);
        let model = Model::new(ModelConfig::small(), g).unwrap();
        let (mg, native) = full_graph(&e, &model.config);
        let base = encoder_values(&model, &mg);
        let base_logits = logits(&model, &mg, &native);
        for _ in 0..10 {
            let rot = random_rotation(&mut rng);
            let shift = [rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0)];
            let motion = rigid_motion(&rot, shift);
            let moved = Ensemble::new("eq", e.states.iter().map(|s| s.map_coords(&motion)).collect()).unwrap();
            let (mg2, _) = full_graph(&moved, &model.config);
            let vals = encoder_values(&model, &mg2);
            worst_s = worst_s.max(max_rel(&vals.node_s, &base.node_s)).max(max_rel(&vals.state_s, &base.state_s));
            worst_l = worst_l.max(max_rel(&logits(&model, &mg2, &native), &base_logits));
            worst_v = worst_v.max(max_rel(&vals.node_v, &rotate_rows(&base.node_v, &rot)));
        }
        let mirrored = Ensemble::new("eq", e.states.iter().map(|s| s.map_coords(|x| [-x[0], x[1], x[2]])).collect()).unwrap();
        let (mg3, _) = full_graph(&mirrored, &model.config);
        min_reflection = min_reflection.min(max_abs_diff(&logits(&model, &mg3, &native), &base_logits));
    }
    let pass = worst_s < 1e-5 && worst_l < 1e-5 && worst_v < 1e-5 && min_reflection > 1e-3;
    Outcome::new(
        pass,
        format!(
            "5 graphs x 10 motions: scalars {worst_s:.1e}, logits {worst_l:.1e}, pooled vectors {worst_v:.1e}; smallest reflection change {min_reflection:.1e}"
        ),
    )
}

// ----------------------------------------------------------------- symmetry

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, left: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..left.len() {
            let x = left.remove(i);
            prefix.push(x);
            go(prefix, left, out);
            prefix.pop();
            left.insert(i, x);
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut (0..n).collect(), &mut out);
    out
}

fn symmetry_suite() -> Outcome {
    let mut rng = rng(33);
    let model = Model::new(ModelConfig::small(), 3).unwrap();
    let (mut worst_state, mut worst_node) = (0.0f64, 0.0f64);
    let (mut state_perms, mut node_perms) = (0usize, 0usize);
    for k in 1..=3 {
        for n in 3..=6 {
            let e = random_ensemble("sym", n, k, 1.5, &mut rng);
            let (mg, native) = full_graph(&e, &model.config);
            let base = logits(&model, &mg, &native);
            for perm in permutations(k) {
                let l = logits(&model, &mg.permute_states(&perm), &native);
                worst_state = worst_state.max(max_abs_diff(&l, &base));
                state_perms += 1;
            }
            for perm in permutations(n) {
                let seq: Vec<usize> = perm.iter().map(|&o| native[o]).collect();
                let l = logits(&model, &mg.permute_nodes(&perm), &seq);
                let expected: Vec<f64> = perm.iter().flat_map(|&o| base[o * 4..o * 4 + 4].to_vec()).collect();
                worst_node = worst_node.max(max_abs_diff(&l, &expected));
                node_perms += 1;
            }
        }
    }
    Outcome::new(
        worst_state < 1e-6 && worst_node < 1e-6,
        format!(
            "{state_perms} conformer permutations max diff {worst_state:.1e}; {node_perms} node permutations max diff {worst_node:.1e}"
        ),
    )
}

// ---------------------------------------------------------------- causality

fn causality() -> Outcome {
    let mut rng = rng(44);
    let mut checked = 0;
    let mut violations = 0;
    for trial in 0..6u64 {
        let n = rng.random_range(4..=8);
        let e = random_ensemble("causal", n, rng.random_range(1..=3), 1.0, &mut rng);
        let model = Model::new(ModelConfig::small(), trial).unwrap();
        let (mg, native) = full_graph(&e, &model.config);
        let base = logits(&model, &mg, &native);
        for p in 0..mg.n {
            for b in (0..4).filter(|&b| b != native[p]) {
                let mut seq = native.clone();
                seq[p] = b;
                let l = logits(&model, &mg, &seq);
                for a in (0..mg.n).filter(|&a| mg.positions[a] <= mg.positions[p]) {
                    checked += 1;
                    if l[a * 4..a * 4 + 4] != base[a * 4..a * 4 + 4] {
                        violations += 1;
                    }
                }
            }
        }
    }
    Outcome::new(
        violations == 0,
        format!("{checked} (perturbation, earlier-or-same position) rows compared exactly, {violations} differ"),
    )
}

// ------------------------------------------------------- perplexity anchors

fn perplexity_anchors() -> Outcome {
    let mut rng = rng(55);
    let e = random_ensemble("ppl", 20, 2, 1.0, &mut rng);
    let mut model = Model::new(ModelConfig::small(), 5).unwrap();
    let heads: Vec<usize> = model
        .params
        .names()
        .iter()
        .enumerate()
        .filter(|(_, n)| n.starts_with("decoder.out"))
        .map(|(i, _)| i)
        .collect();
    for &i in &heads {
        model.params.tensors_mut()[i].data_mut().fill(0.0);
    }
    let (mg, native) = full_graph(&e, &model.config);
    let uniform_model = perplexity(&model, &mg, &native).unwrap();
    let uniform_lp = perplexity_from_logprobs(&vec![0.25f64.ln(); 20]);

    let n = 20;
    let targets: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
    let certain: Vec<f64> = targets
        .iter()
        .flat_map(|&t| (0..4).map(move |j| if j == t { 30.0 } else { 0.0 }))
        .collect();
    let mut tape = Tape::new();
    let l = tape.constant(vec![n, 4], certain).unwrap();
    let ce = tape.softmax_cross_entropy(l, &targets, 0.0).unwrap();
    let certain_ppl = tape.value(ce)[0].exp();

    let pass = format!("{uniform_model:.6}") == "4.000000" && format!("{uniform_lp:.6}") == "4.000000" && certain_ppl <= 1.001;
    Outcome::new(
        pass,
        format!(
            "uniform head {uniform_model:.6}, uniform log-probs {uniform_lp:.6}, certain logits {certain_ppl:.6} (zeroed {} head tensors)",
            heads.len()
        ),
    )
}

// ------------------------------------------------------------------ overfit

struct OverfitRun {
    outcome: Outcome,
    losses: Vec<f64>,
}

fn mean_design_recovery(model: &Model, data: &[Ensemble], seed: u64) -> f64 {
    let mut total = 0.0;
    for (i, e) in data.iter().enumerate() {
        let (mg, native) = eval_graph(e, 1, &model.config).unwrap();
        let opts = DesignOptions {
            n_samples: 16,
            sampling: SamplingOptions::with_temperature(0.1),
            seed: seed + i as u64,
        };
        let results = design(model, &mg, Some(&native), &[], &opts).unwrap();
        total += results.iter().filter_map(|r| r.recovery).sum::<f64>() / results.len() as f64;
    }
    total / data.len() as f64
}

fn overfit() -> OverfitRun {
    let mut rng = rng(7);
    let data: Vec<Ensemble> = (0..5).map(|i| random_ensemble(&format!("c{i}"), 40 + 4 * i, 1, 0.0, &mut rng)).collect();

    let untrained = Model::new(ModelConfig::small(), 0).unwrap();
    let chance = mean_design_recovery(&untrained, &data, 100);

    let cfg = TrainConfig {
        lr: 1e-3,
        noise_sigma: 0.0,
        model: ModelConfig { dropout: 0.0, ..ModelConfig::small() },
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let mut trainer = Trainer::new(cfg).unwrap();
    let mut losses = Vec::with_capacity(500);
    for _ in 0..500 {
        losses.push(trainer.step_batch(&data, &mut rng).unwrap());
    }
    let elapsed = start.elapsed();
    let recovery = mean_design_recovery(&trainer.model, &data, 200);
    let ppl = data
        .iter()
        .map(|e| {
            let (mg, native) = eval_graph(e, 1, &trainer.model.config).unwrap();
            perplexity(&trainer.model, &mg, &native).unwrap()
        })
        .sum::<f64>()
        / data.len() as f64;
    let pass = recovery >= 0.95 && ppl < 1.2 && elapsed < Duration::from_secs(600) && (chance - 0.25).abs() <= 0.10;
    OverfitRun {
        outcome: Outcome::new(
            pass,
            format!(
                "5 coils (40-56 nt), 500 steps in {:.0}s: recovery {recovery:.3}, perplexity {ppl:.3}; untrained recovery {chance:.3}",
                elapsed.as_secs_f64()
            ),
        ),
        losses,
    }
}

fn moving_average_invariant(losses: &[f64]) -> Outcome {
    let ma: Vec<f64> = losses.windows(50).map(|w| w.iter().sum::<f64>() / 50.0).collect();
    let rises: Vec<f64> = ma.windows(2).filter(|w| w[1] > w[0]).map(|w| w[1] - w[0]).collect();
    Outcome::new(
        rises.is_empty(),
        format!(
            "{} of {} consecutive 50-step averages rise (largest {:.1e}); first {:.3}, last {:.3}",
            rises.len(),
            ma.len().saturating_sub(1),
            rises.iter().cloned().fold(0.0, f64::max),
            ma.first().copied().unwrap_or(f64::NAN),
            ma.last().copied().unwrap_or(f64::NAN)
        ),
    )
}

// ----------------------------------------------------------- generalization

struct SmokeScores {
    recovery: f64,
    mcc: f64,
}

fn train_and_score(decoder: DecoderKind, train: &[Ensemble], val: &[Ensemble], test: &[Ensemble], dir: &Path) -> SmokeScores {
    let cfg = TrainConfig {
        lr: 1e-3,
        max_epochs: 100,
        max_states: 3,
        seed: 1,
        model: ModelConfig { decoder, ..ModelConfig::small() },
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(cfg).unwrap();
    trainer.fit(train, val, Some(dir)).unwrap();
    let model = Checkpoint::load(&dir.join("best.ckpt")).unwrap().into_model().unwrap();
    let (mut rec, mut mcc) = (0.0, 0.0);
    for (i, e) in test.iter().enumerate() {
        let (mg, native) = eval_graph(e, 3, &model.config).unwrap();
        let truths: Vec<_> = e.states.iter().take(3).map(|s| pairs_from_structure(s).restrict(&mg.residues())).collect();
        let opts = DesignOptions {
            n_samples: 16,
            sampling: SamplingOptions::with_temperature(0.1),
            seed: 500 + i as u64,
        };
        let results = design(&model, &mg, Some(&native), &truths, &opts).unwrap();
        let k = results.len() as f64;
        rec += results.iter().filter_map(|r| r.recovery).sum::<f64>() / k;
        mcc += results.iter().filter_map(|r| r.mcc).sum::<f64>() / k;
    }
    SmokeScores {
        recovery: rec / test.len() as f64,
        mcc: mcc / test.len() as f64,
    }
}

fn generalization_smoke() -> Outcome {
    let mut rng = rng(66);
    let corpus: Vec<Ensemble> = hairpin_corpus(40, 3, &mut rng).into_iter().map(|s| s.ensemble).collect();
    let clusters = cluster_structures(&corpus, TM_THRESHOLD);
    let opts = SplitOptions {
        val_size: 4,
        test_size: 8,
        seed: 3,
        ..SplitOptions::default()
    };
    let manifest = make_multi_state_split(&corpus, &clusters, &opts).unwrap();
    let pick = |ids: &[String]| -> Vec<Ensemble> { corpus.iter().filter(|e| ids.contains(&e.id)).cloned().collect() };
    let (train, val, test) = (pick(&manifest.train), pick(&manifest.val), pick(&manifest.test));
    let train_clusters: BTreeSet<usize> = manifest.train.iter().map(|id| clusters[id]).collect();
    let held_out = manifest.test.iter().all(|id| !train_clusters.contains(&clusters[id]));
    let tmp = tempfile::tempdir().unwrap();
    let ar_dir = tmp.path().join("ar");
    let nar_dir = tmp.path().join("nar");
    std::fs::create_dir_all(&ar_dir).unwrap();
    std::fs::create_dir_all(&nar_dir).unwrap();
    let ar = train_and_score(DecoderKind::Autoregressive, &train, &val, &test, &ar_dir);
    let nar = train_and_score(DecoderKind::NonAutoregressive, &train, &val, &test, &nar_dir);
    Outcome::new(
        held_out && ar.recovery > 0.35 && nar.mcc < ar.mcc,
        format!(
            "{}/{}/{} ensembles, test clusters held out: {held_out}; AR recovery {:.3} MCC {:.3}; NAR recovery {:.3} MCC {:.3}",
            train.len(),
            val.len(),
            test.len(),
            ar.recovery,
            ar.mcc,
            nar.recovery,
            nar.mcc
        ),
    )
}

// ----------------------------------------------------------- folding oracle

fn pairs_ok(a: u8, b: u8) -> bool {
    matches!((a, b), (b'A', b'U') | (b'U', b'A') | (b'G', b'C') | (b'C', b'G') | (b'G', b'U') | (b'U', b'G'))
}

/// Largest non-crossing set of allowed pairs, by branch-and-bound over the
/// candidate pair list.
fn exhaustive_max_pairs(seq: &[u8]) -> usize {
    let n = seq.len();
    let candidates: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 4..n).map(move |j| (i, j)))
        .filter(|&(i, j)| pairs_ok(seq[i], seq[j]))
        .collect();
    fn compatible(chosen: &[(usize, usize)], (i, j): (usize, usize)) -> bool {
        chosen.iter().all(|&(a, b)| {
            let disjoint = a != i && a != j && b != i && b != j;
            let nested_or_apart = (a < i && j < b) || (i < a && b < j) || b < i || j < a;
            disjoint && nested_or_apart
        })
    }
    fn search(c: &[(usize, usize)], idx: usize, chosen: &mut Vec<(usize, usize)>, best: &mut usize) {
        if chosen.len() + (c.len() - idx) <= *best {
            return;
        }
        if idx == c.len() {
            *best = chosen.len();
            return;
        }
        if compatible(chosen, c[idx]) {
            chosen.push(c[idx]);
            search(c, idx + 1, chosen, best);
            chosen.pop();
        }
        search(c, idx + 1, chosen, best);
    }
    let mut best = 0;
    search(&candidates, 0, &mut Vec::new(), &mut best);
    best
}

fn structure_valid(seq: &[u8], pairs: &BTreeSet<(usize, usize)>) -> bool {
    let mut used = BTreeSet::new();
    for &(i, j) in pairs {
        if j < i + 4 || !pairs_ok(seq[i], seq[j]) || !used.insert(i) || !used.insert(j) {
            return false;
        }
    }
    pairs.iter().all(|&(a, b)| pairs.iter().all(|&(c, d)| !(a < c && c < b && b < d)))
}

fn folding_oracle() -> Outcome {
    let mut mismatches = 0;
    let mut invalid = 0;
    let mut total = 0;
    let mut check = |seq: &[u8]| {
        let s = std::str::from_utf8(seq).unwrap();
        let folded = nussinov_fold(s);
        total += 1;
        if !structure_valid(seq, &folded.pairs) {
            invalid += 1;
        }
        if folded.pairs.len() != exhaustive_max_pairs(seq) {
            mismatches += 1;
        }
    };
    for code in 0..4usize.pow(8) {
        let seq: Vec<u8> = (0..8).map(|p| BASES[(code >> (2 * p)) & 3] as u8).collect();
        check(&seq);
    }
    let mut rng = rng(77);
    for _ in 0..200 {
        check(random_sequence(12, &mut rng).as_bytes());
    }
    Outcome::new(
        mismatches == 0 && invalid == 0,
        format!("{total} sequences (all of length 8, 200 of length 12): {mismatches} pair-count mismatches, {invalid} invalid structures"),
    )
}

// ---------------------------------------------------------------- fitness

/// Exact median of the maximum of `b` draws without replacement from the
/// grid `(i + 0.5) / n`, with the large-sample standard error of a median.
fn order_statistic_median(n: usize, b: usize, sims: usize) -> (f64, f64) {
    let log_cdf = |m: usize| -> f64 {
        if m < b {
            return f64::NEG_INFINITY;
        }
        (0..b).map(|i| ((m - i) as f64 / (n - i) as f64).ln()).sum()
    };
    let m = (b..=n).find(|&m| log_cdf(m) >= 0.5f64.ln()).unwrap();
    let x = (m as f64 - 0.5) / n as f64;
    let density = b as f64 * x.powi(b as i32 - 1);
    (x, 0.5 / (sims as f64).sqrt() / density)
}

fn fitness_study() -> Outcome {
    let n = 200_000;
    let sims = 10_000;
    let records: Vec<FitnessRecord> = (0..n)
        .map(|i| FitnessRecord {
            sequence: String::new(),
            fitness: (i as f64 + 0.5) / n as f64,
            mutation_order: 1,
        })
        .collect();
    let mut closed_form = Vec::new();
    let mut closed_ok = true;
    for (idx, b) in [1usize, 10, 50, 100].into_iter().enumerate() {
        let report = simulate_baseline(&records, 0.0, Pool::All, b, sims, idx as u64).unwrap();
        let (exact, se) = order_statistic_median(n, b, sims);
        let z = (report.median_max_improvement - exact).abs() / se;
        closed_ok &= z < 3.0;
        closed_form.push(format!("b={b} {z:.2}SE"));
    }

    let mut rng = rng(88);
    let (wt_structure, _) = rna_invfold::synth::hairpin("wt_0", "GGCGCGC", "AAAAA", &Default::default());
    let wt = wt_structure.sequence.clone();
    let mut seqs = BTreeSet::new();
    while seqs.len() < 1000 {
        let mut c: Vec<char> = wt.chars().collect();
        for _ in 0..rng.random_range(1..=3) {
            let i = rng.random_range(0..c.len());
            c[i] = BASES[rng.random_range(0..4)];
        }
        let s: String = c.into_iter().collect();
        if s != wt {
            seqs.insert(s);
        }
    }
    let model = Model::new(ModelConfig::small(), 8).unwrap();
    let (mg, _) = eval_graph(&Ensemble::new("wt", vec![wt_structure]).unwrap(), 1, &model.config).unwrap();
    let candidates: Vec<String> = seqs.into_iter().collect();
    let ranked = rank_by_perplexity(&model, &mg, &candidates).unwrap();
    let ppl: BTreeMap<&str, f64> = ranked.iter().map(|c| (c.sequence.as_str(), c.perplexity)).collect();
    let mean = ranked.iter().map(|c| c.perplexity).sum::<f64>() / ranked.len() as f64;
    let sd = (ranked.iter().map(|c| (c.perplexity - mean).powi(2)).sum::<f64>() / ranked.len() as f64).sqrt();
    let noise = Normal::new(0.0, 0.1 * sd).unwrap();
    let budgets = [10, 50, 100];
    let mut wins = 0;
    for run in 0..20u64 {
        let mut nrng = common::rng(9000 + run);
        let recs: Vec<FitnessRecord> = candidates
            .iter()
            .map(|s| FitnessRecord::new(s, -ppl[s.as_str()] + noise.sample(&mut nrng), &wt).unwrap())
            .collect();
        let reports = evaluate_strategies(&recs, -mean, &ranked, &budgets, 1000, run).unwrap();
        let gain = |s: Strategy, b: usize| {
            reports.iter().find(|r| r.strategy == s && r.budget == b).map(|r| r.median_max_improvement).unwrap()
        };
        if budgets.iter().all(|&b| gain(Strategy::Perplexity, b) > gain(Strategy::RandomAll, b)) {
            wins += 1;
        }
    }
    Outcome::new(
        closed_ok && wins >= 18,
        format!(
            "order statistics at {sims} sims: {}; rigged landscape (1000 mutants, noise sd {:.1e}): perplexity beats random_all at budgets 10/50/100 in {wins}/20 runs",
            closed_form.join(", "),
            0.1 * sd
        ),
    )
}

// ---------------------------------------------------------- reproducibility

fn run_cli(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_rna-invfold"))
        .args(args)
        .env("RUST_LOG", "error")
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn tree_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn reproducibility() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let corpus_dir = tmp.path().join("corpus");
    let mut rng = rng(99);
    let corpus: Vec<Ensemble> = hairpin_corpus(16, 3, &mut rng).into_iter().map(|s| s.ensemble).collect();
    write_corpus(&corpus_dir, &corpus).unwrap();
    let test_ids = tmp.path().join("test_ids.txt");
    std::fs::write(&test_ids, format!("{}_A\n", corpus[0].id)).unwrap();
    let landscape = tmp.path().join("landscape.csv");
    let wt = &corpus[1].sequence;
    let mut csv = String::from("sequence,fitness\n");
    for (i, b) in BASES.iter().enumerate() {
        for p in 0..wt.len() {
            let mut c: Vec<char> = wt.chars().collect();
            if c[p] != *b {
                c[p] = *b;
                csv.push_str(&format!("{},{}\n", c.iter().collect::<String>(), (p * 7 + i * 3) % 11));
            }
        }
    }
    std::fs::write(&landscape, csv).unwrap();
    let s = |p: &Path| p.to_string_lossy().into_owned();
    let (corpus_s, ids_s, land_s) = (s(&corpus_dir), s(&test_ids), s(&landscape));
    let pdb = s(&corpus_dir.join(format!("{}.pdb", corpus[1].id)));

    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let o = |name: &str| s(&out.join(name));
        let ckpt = o("train/seed_5/best.ckpt");
        let steps: [Vec<String>; 7] = [
            vec!["split".into(), "--corpus".into(), corpus_s.clone(), "--test-ids".into(), ids_s.clone(), "--val-size".into(), "2".into(), "--out".into(), o("split.json")],
            vec!["split".into(), "--corpus".into(), corpus_s.clone(), "--kind".into(), "multi-state".into(), "--val-size".into(), "2".into(), "--test-size".into(), "2".into(), "--out".into(), o("msplit.json")],
            vec!["train".into(), "--corpus".into(), corpus_s.clone(), "--split".into(), o("split.json"), "--out".into(), o("train"), "--small".into(), "--max-epochs".into(), "2".into(), "--seed".into(), "5".into()],
            vec!["design".into(), "--checkpoint".into(), ckpt.clone(), "--pdb".into(), pdb.clone(), "--out".into(), o("design"), "--n-samples".into(), "4".into()],
            vec!["eval".into(), "--checkpoint".into(), ckpt.clone(), "--split".into(), o("split.json"), "--corpus".into(), corpus_s.clone(), "--out".into(), o("eval.csv"), "--n-samples".into(), "4".into()],
            vec!["rank".into(), "--checkpoint".into(), ckpt.clone(), "--pdb".into(), pdb.clone(), "--landscape".into(), land_s.clone(), "--wild-type-fitness".into(), "3".into(), "--budgets".into(), "1,10".into(), "--n-sims".into(), "200".into(), "--out".into(), o("rank")],
            vec!["featurize".into(), "--pdb".into(), pdb.clone(), "--out".into(), o("features.json")],
        ];
        for args in &steps {
            let refs: Vec<&str> = args.iter().map(String::as_str).collect();
            if !run_cli(&refs) {
                return Outcome::new(false, format!("`{}` failed in run {run}", args[0]));
            }
        }
        outputs.push(tree_bytes(&out));
    }
    let (a, b) = (&outputs[0], &outputs[1]);
    let differing: Vec<&String> = a.keys().filter(|k| b.get(*k) != a.get(*k)).collect();
    let subcommands: BTreeSet<&str> = ["split", "train", "design", "eval", "rank", "featurize"].into_iter().collect();
    Outcome::new(
        differing.is_empty() && a.len() == b.len(),
        format!(
            "{} subcommands, {} output files compared byte for byte, {} differ",
            subcommands.len(),
            a.len(),
            differing.len()
        ),
    )
}

fn main() {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).is_test(true).try_init();
    // Optional substring filters, e.g. `cargo test --test acceptance -- fitness`.
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut report = |name: &str, f: &mut dyn FnMut() -> Outcome| {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            return;
        }
        let start = Instant::now();
        let outcome = f();
        if !outcome.pass {
            failed += 1;
        }
        println!(
            "{} {name:<22} [{:>6.1}s] {}",
            if outcome.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            outcome.detail
        );
    };
    report("gradient suite", &mut gradient_suite);
    report("equivariance suite", &mut equivariance_suite);
    report("symmetry suite", &mut symmetry_suite);
    report("causality", &mut causality);
    report("perplexity anchors", &mut perplexity_anchors);
    let mut losses = Vec::new();
    report("overfit check", &mut || {
        let run = overfit();
        losses = run.losses;
        run.outcome
    });
    report("generalization smoke", &mut generalization_smoke);
    report("folding oracle", &mut folding_oracle);
    report("fitness study", &mut fitness_study);
    report("reproducibility", &mut reproducibility);
    if !losses.is_empty() {
        report("invariant: loss MA", &mut || moving_average_invariant(&losses));
    }
    if failed > 0 {
        println!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
    println!("all acceptance checks passed");
}
