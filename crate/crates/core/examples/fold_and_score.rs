//! Folds sequences with the max-pairing oracle and scores them against a
//! structure read from 3D geometry.

use rna_invfold::design::{mcc, nussinov_fold, pairs_from_structure};
use rna_invfold::synth::{hairpin, HelixGeometry};

fn main() -> rna_invfold::Result<()> {
    let (structure, _) = hairpin("hp", "GGGCGC", "AAAAA", &HelixGeometry::default());
    let truth = pairs_from_structure(&structure);
    println!("geometry  {}  {}", structure.sequence, truth.to_dot_bracket().unwrap_or_default());
    for seq in [structure.sequence.as_str(), "GGGCGCAAAAACCCCCC", "AAAAAAAAAAAAAAAAA"] {
        let folded = nussinov_fold(seq);
        println!(
            "fold      {seq}  {}  mcc {:.3}",
            folded.to_dot_bracket().unwrap_or_default(),
            mcc(&folded, &truth)?
        );
    }
    Ok(())
}
