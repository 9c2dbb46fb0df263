//! Logits are invariant to one rotation and translation applied to every
//! state but not to reflections.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rna_invfold::featurizer::featurize_ensemble;
use rna_invfold::model::{Model, ModelConfig};
use rna_invfold::rna_io::Ensemble;
use rna_invfold::synth::{random_ensemble, random_rotation, rigid_motion};

fn logits(model: &Model, e: &Ensemble) -> rna_invfold::Result<Vec<f64>> {
    let states: Vec<usize> = (0..e.num_states()).collect();
    let mg = featurize_ensemble::<ChaCha8Rng>(e, &states, &model.config.featurizer, None)?;
    let native = e.bases_at(&mg.residues())?;
    let mut s = model.eval_session();
    let enc = s.encode(&mg)?;
    let l = s.logits(&mg, &enc, &native)?;
    Ok(s.tape.value(l).to_vec())
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn main() -> rna_invfold::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = Model::new(ModelConfig::small(), 0)?;
    let e = random_ensemble("coil", 30, 3, 1.0, &mut rng);
    let base = logits(&model, &e)?;
    for trial in 0..3 {
        let rot = random_rotation(&mut rng);
        let motion = rigid_motion(&rot, [10.0 * trial as f64, -5.0, 2.0]);
        let moved: Vec<_> = e.states.iter().map(|s| s.map_coords(&motion)).collect();
        let d = max_diff(&base, &logits(&model, &Ensemble::new("coil", moved)?)?);
        println!("rigid motion {trial}: max logit change {d:.2e}");
    }
    let mirrored: Vec<_> = e.states.iter().map(|s| s.map_coords(|x| [-x[0], x[1], x[2]])).collect();
    let d = max_diff(&base, &logits(&model, &Ensemble::new("coil", mirrored)?)?);
    println!("reflection: max logit change {d:.2e}");
    Ok(())
}
