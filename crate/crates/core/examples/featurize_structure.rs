//! Featurizes a synthetic two-state hairpin and prints the multigraph shapes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rna_invfold::featurizer::{featurize_ensemble, FeaturizerConfig};
use rna_invfold::rna_io::Ensemble;
use rna_invfold::synth::{hairpin, HelixGeometry};

fn main() -> rna_invfold::Result<()> {
    let states = [32.7, 36.0]
        .iter()
        .enumerate()
        .map(|(c, &twist)| {
            let geom = HelixGeometry { twist, ..HelixGeometry::default() };
            hairpin(&format!("demo_{c}"), "GGCGC", "AAAA", &geom).0
        })
        .collect();
    let ensemble = Ensemble::new("demo", states)?;
    let cfg = FeaturizerConfig::default();
    let mg = featurize_ensemble::<ChaCha8Rng>(&ensemble, &[0, 1], &cfg, None)?;
    println!("sequence     {}", ensemble.sequence);
    println!("nodes        {} x {} states", mg.n, mg.k);
    println!("node scalars {}  node vectors {}", cfg.node_scalar_dim(), mg.node_v.shape()[2]);
    println!("edges        {}  edge scalars {}", mg.edges.len(), cfg.edge_scalar_dim());
    let present = mg.edge_mask.iter().filter(|&&m| m).count();
    println!("present (edge, state) pairs {present} of {}", mg.edges.len() * mg.k);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let noisy = featurize_ensemble(&ensemble, &[0, 1], &cfg, Some((0.1, &mut rng)))?;
    let shift = mg.node_s.data().iter().zip(noisy.node_s.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("max node-scalar change under 0.1 A noise {shift:.4}");
    Ok(())
}
