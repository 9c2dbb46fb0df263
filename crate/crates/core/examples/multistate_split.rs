//! Clusters a synthetic corpus and builds a multi-state split.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rna_invfold::rna_io::{cluster_structures, make_multi_state_split, validate_manifest, SplitOptions, TM_THRESHOLD};
use rna_invfold::synth::hairpin_corpus;

fn main() -> rna_invfold::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let corpus: Vec<_> = hairpin_corpus(30, 4, &mut rng).into_iter().map(|s| s.ensemble).collect();
    let clusters = cluster_structures(&corpus, TM_THRESHOLD);
    let n_clusters = clusters.values().collect::<std::collections::BTreeSet<_>>().len();
    println!("{} ensembles in {n_clusters} clusters", corpus.len());
    let opts = SplitOptions { val_size: 5, test_size: 5, ..SplitOptions::default() };
    let manifest = make_multi_state_split(&corpus, &clusters, &opts)?;
    println!("train {} val {} test {}", manifest.train.len(), manifest.val.len(), manifest.test.len());
    println!("test: {:?}", manifest.test);
    match validate_manifest(&manifest, &corpus, &opts) {
        Ok(()) => println!("manifest valid"),
        Err(problems) => problems.iter().for_each(|p| println!("problem: {p}")),
    }
    Ok(())
}
