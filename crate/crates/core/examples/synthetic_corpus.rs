//! Writes a corpus of synthetic hairpin ensembles as PDB files.
//!
//! cargo run --example synthetic_corpus -- OUT_DIR [COUNT] [MAX_STATES]

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rna_invfold::synth::{hairpin_corpus, write_corpus};

fn main() -> rna_invfold::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "synthetic_corpus".into()));
    let count = args.next().and_then(|a| a.parse().ok()).unwrap_or(40);
    let max_states = args.next().and_then(|a| a.parse().ok()).unwrap_or(3);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let corpus: Vec<_> = hairpin_corpus(count, max_states, &mut rng).into_iter().map(|s| s.ensemble).collect();
    write_corpus(&out, &corpus)?;
    // Parsed ids carry the chain of the first state, e.g. hp000_A.
    for e in &corpus {
        println!("{}_A\t{}\t{} states", e.id, e.sequence, e.num_states());
    }
    Ok(())
}
