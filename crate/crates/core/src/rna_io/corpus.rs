use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{parse_pdb, Ensemble, RnaStructure};
use crate::{Error, Result};

/// Groups structures by identical sequence. Each ensemble takes the smallest
/// member id; states and ensembles are ordered by id.
pub fn group_ensembles(structures: Vec<RnaStructure>) -> Vec<Ensemble> {
    let mut by_seq: BTreeMap<String, Vec<RnaStructure>> = BTreeMap::new();
    for s in structures {
        by_seq.entry(s.sequence.clone()).or_default().push(s);
    }
    let mut out: Vec<Ensemble> = by_seq
        .into_values()
        .map(|mut states| {
            states.sort_by(|a, b| a.id.cmp(&b.id));
            let id = states[0].id.clone();
            Ensemble::new(id, states).expect("grouped by sequence")
        })
        .collect();
    out.sort_by(|a, b| a.id.cmp(&b.id));
    out
}

fn parse_cached(text: &str, name: &str, cache: Option<&Path>) -> Result<Vec<RnaStructure>> {
    let Some(dir) = cache else {
        return parse_pdb(text, name);
    };
    let mut h = Sha256::new();
    h.update(name.as_bytes());
    h.update([0]);
    h.update(text.as_bytes());
    let path = dir.join(format!("{}.json", hex::encode(h.finalize())));
    if let Ok(bytes) = fs::read(&path) {
        if let Ok(s) = serde_json::from_slice(&bytes) {
            return Ok(s);
        }
    }
    let parsed = parse_pdb(text, name)?;
    fs::create_dir_all(dir)?;
    fs::write(&path, serde_json::to_vec(&parsed)?)?;
    Ok(parsed)
}

/// Reads every `*.pdb` file in `dir` (sorted by file name). Structure ids
/// are prefixed with the file stem. `cache` optionally stores parsed files
/// keyed by content hash.
pub fn load_corpus(dir: &Path, cache: Option<&Path>) -> Result<Vec<RnaStructure>> {
    if !dir.is_dir() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("corpus directory {} not found", dir.display()),
        )));
    }
    let mut files: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pdb")))
        .collect();
    files.sort();
    let mut out = Vec::new();
    for f in files {
        let text = fs::read_to_string(&f)?;
        let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or("structure");
        out.extend(parse_cached(&text, stem, cache)?);
    }
    Ok(out)
}
