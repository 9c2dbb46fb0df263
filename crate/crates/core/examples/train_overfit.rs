//! Overfits a small model on five random coils with full-batch steps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rna_invfold::design::{perplexity, recovery};
use rna_invfold::model::ModelConfig;
use rna_invfold::rna_io::decode_sequence;
use rna_invfold::synth::random_ensemble;
use rna_invfold::training::{eval_graph, TrainConfig, Trainer};

fn main() -> rna_invfold::Result<()> {
    let steps: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(200);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let data: Vec<_> = (0..5).map(|i| random_ensemble(&format!("c{i}"), 40 + 4 * i, 1, 0.0, &mut rng)).collect();
    let cfg = TrainConfig {
        lr: 1e-3,
        noise_sigma: 0.0,
        model: ModelConfig { dropout: 0.0, ..ModelConfig::small() },
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(cfg)?;
    for step in 0..steps {
        let loss = trainer.step_batch(&data, &mut rng)?;
        if step % 25 == 0 || step + 1 == steps {
            println!("step {step:>4} loss {loss:.4}");
        }
    }
    for e in &data {
        let (mg, native) = eval_graph(e, 1, &trainer.model.config)?;
        let mut s = trainer.model.eval_session();
        let enc = s.encode(&mg)?;
        let l = s.logits(&mg, &enc, &native)?;
        let argmax: Vec<usize> = s
            .tape
            .value(l)
            .chunks(4)
            .map(|r| (0..4).fold(0, |b, j| if r[j] > r[b] { j } else { b }))
            .collect();
        let rec = recovery(&decode_sequence(&argmax), &decode_sequence(&native), None)?;
        let ppl = perplexity(&trainer.model, &mg, &native)?;
        println!("{}: teacher-forced recovery {rec:.3} perplexity {ppl:.3}", e.id);
    }
    Ok(())
}
