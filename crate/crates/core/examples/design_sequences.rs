//! Samples designs for a hairpin with part of the stem pinned.

use rna_invfold::design::{design, pairs_from_structure, DesignOptions, SamplingOptions};
use rna_invfold::model::{Model, ModelConfig};
use rna_invfold::rna_io::{base_index, Ensemble};
use rna_invfold::synth::{hairpin, HelixGeometry};
use rna_invfold::training::eval_graph;

fn main() -> rna_invfold::Result<()> {
    let (structure, _) = hairpin("hp_0", "GGCGCG", "AAAA", &HelixGeometry::default());
    let truth = pairs_from_structure(&structure);
    let ensemble = Ensemble::new("hp", vec![structure])?;
    let model = Model::new(ModelConfig::small(), 0)?;
    let (mg, native) = eval_graph(&ensemble, 1, &model.config)?;
    let mut fixed = vec![None; mg.n];
    fixed[0] = base_index('G');
    fixed[mg.n - 1] = base_index('C');
    let opts = DesignOptions {
        n_samples: 4,
        sampling: SamplingOptions { fixed, ..SamplingOptions::with_temperature(0.1) },
        seed: 11,
    };
    println!("native   {}  {}", ensemble.sequence, truth.to_dot_bracket().unwrap_or_default());
    for r in design(&model, &mg, Some(&native), &[truth.restrict(&mg.residues())], &opts)? {
        println!(
            "designed {}  perplexity {:.3} recovery {:.3} mcc {:.3}",
            r.sequence,
            r.perplexity,
            r.recovery.unwrap_or(f64::NAN),
            r.mcc.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
