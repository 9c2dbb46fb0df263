//! Compares random-selection baselines with a perplexity ranking on a toy
//! landscape where fitness rewards stem complementarity plus a random
//! per-position preference.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rna_invfold::fitness::{evaluate_strategies, rank_by_perplexity, FitnessRecord};
use rna_invfold::model::{Model, ModelConfig};
use rna_invfold::rna_io::{can_pair, Ensemble, BASES};
use rna_invfold::synth::{hairpin, HelixGeometry};
use rna_invfold::training::eval_graph;

fn main() -> rna_invfold::Result<()> {
    let (structure, pairs) = hairpin("wt_0", "GGCGC", "AAAA", &HelixGeometry::default());
    let wt = structure.sequence.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let preference: Vec<[f64; 4]> = (0..wt.len()).map(|_| std::array::from_fn(|_| rng.random_range(0.0..0.3))).collect();
    let fitness = |s: &str| {
        let c: Vec<char> = s.chars().collect();
        let paired = pairs.iter().filter(|&&(i, j)| can_pair(c[i], c[j])).count() as f64;
        let pref: f64 = c.iter().zip(&preference).map(|(&b, p)| p[BASES.iter().position(|&x| x == b).unwrap_or(0)]).sum();
        paired + pref
    };
    let mut seqs = std::collections::BTreeSet::new();
    while seqs.len() < 300 {
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
    let records: Vec<FitnessRecord> = seqs.iter().map(|s| FitnessRecord::new(s, fitness(s), &wt)).collect::<Result<_, _>>()?;
    let model = Model::new(ModelConfig::small(), 0)?;
    let (mg, _) = eval_graph(&Ensemble::new("wt", vec![structure])?, 1, &model.config)?;
    let candidates: Vec<String> = records.iter().map(|r| r.sequence.clone()).collect();
    let ranked = rank_by_perplexity(&model, &mg, &candidates)?;
    let reports = evaluate_strategies(&records, fitness(&wt), &ranked, &[1, 10, 50], 2000, 9)?;
    for r in reports {
        println!(
            "{:<22} budget {:>3} median improvement {:+.2}",
            r.strategy.name(),
            r.budget,
            r.median_max_improvement
        );
    }
    Ok(())
}
