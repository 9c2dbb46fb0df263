//! Fixed-column PDB ATOM/HETATM records reduced to 3 beads per nucleotide.

use std::fmt::Write as _;

use super::{RnaStructure, BEAD_C4, BEAD_N, BEAD_P};
use crate::{Error, Result};

fn residue_base(name: &str) -> Option<char> {
    match name {
        "A" | "RA" | "ADE" => Some('A'),
        "C" | "RC" | "CYT" => Some('C'),
        "G" | "RG" | "GUA" => Some('G'),
        "U" | "RU" | "URA" => Some('U'),
        "N" => Some('N'),
        _ => None,
    }
}

#[derive(Default)]
struct ResidueAcc {
    key: (i64, char),
    base: char,
    p: Option<[f64; 3]>,
    c4: Option<[f64; 3]>,
    n1: Option<[f64; 3]>,
    n9: Option<[f64; 3]>,
}

impl ResidueAcc {
    fn nitrogen(&self) -> Option<[f64; 3]> {
        match self.base {
            'A' | 'G' => self.n9,
            'C' | 'U' => self.n1,
            _ => self.n9.or(self.n1),
        }
    }
}

struct ChainAcc {
    model: usize,
    chain: char,
    residues: Vec<ResidueAcc>,
}

fn field(line: &str, start: usize, end: usize) -> &str {
    let end = end.min(line.len());
    if start >= end {
        ""
    } else {
        line.get(start..end).unwrap_or("")
    }
}

fn coord(line: &str, lineno: usize, start: usize, name: &str) -> Result<f64> {
    let raw = field(line, start, start + 8).trim();
    raw.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::MalformedRecord {
            line: lineno,
            reason: format!("bad {name} coordinate {raw:?}"),
        })
}

/// Parses every RNA chain (per model) into a [`RnaStructure`].
///
/// Residues whose names are not nucleotides are skipped. Residues missing
/// any of the three beads are kept in the sequence but masked out.
pub fn parse_pdb(text: &str, name: &str) -> Result<Vec<RnaStructure>> {
    let mut chains: Vec<ChainAcc> = Vec::new();
    let mut model = 0usize;
    let mut models_seen = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let record = field(line, 0, 6);
        if record.starts_with("MODEL") {
            model = field(line, 6, 80).trim().parse().unwrap_or(models_seen + 1);
            models_seen += 1;
            continue;
        }
        if record != "ATOM  " && record != "HETATM" {
            continue;
        }
        let alt = field(line, 16, 17);
        if !(alt.is_empty() || alt == " " || alt == "A") {
            continue;
        }
        let Some(base) = residue_base(field(line, 17, 20).trim()) else {
            continue;
        };
        let atom = field(line, 12, 16).trim().replace('*', "'");
        let chain = field(line, 21, 22).chars().next().unwrap_or(' ');
        let res_seq: i64 = field(line, 22, 26).trim().parse().map_err(|_| Error::MalformedRecord {
            line: lineno,
            reason: "bad residue number".into(),
        })?;
        let icode = field(line, 26, 27).chars().next().unwrap_or(' ');
        let slot = match atom.as_str() {
            "P" | "C4'" | "N1" | "N9" => atom,
            _ => continue,
        };
        let xyz = [
            coord(line, lineno, 30, "x")?,
            coord(line, lineno, 38, "y")?,
            coord(line, lineno, 46, "z")?,
        ];

        let idx = match chains.iter().position(|c| c.model == model && c.chain == chain) {
            Some(i) => i,
            None => {
                chains.push(ChainAcc {
                    model,
                    chain,
                    residues: Vec::new(),
                });
                chains.len() - 1
            }
        };
        let residues = &mut chains[idx].residues;
        let key = (res_seq, icode);
        if residues.last().map(|r| r.key) != Some(key) {
            residues.push(ResidueAcc {
                key,
                base,
                ..Default::default()
            });
        }
        let res = residues.last_mut().expect("just pushed");
        let target = match slot.as_str() {
            "P" => &mut res.p,
            "C4'" => &mut res.c4,
            "N1" => &mut res.n1,
            _ => &mut res.n9,
        };
        target.get_or_insert(xyz);
    }

    let multi_model = chains.iter().any(|c| c.model != chains[0].model);
    let mut out = Vec::new();
    for c in chains.into_iter().filter(|c| !c.residues.is_empty()) {
        let chain_label = if c.chain == ' ' { '_' } else { c.chain };
        let id = if multi_model {
            format!("{name}_m{}_{chain_label}", c.model)
        } else {
            format!("{name}_{chain_label}")
        };
        let mut sequence = String::with_capacity(c.residues.len());
        let mut beads = Vec::with_capacity(c.residues.len());
        let mut present = Vec::with_capacity(c.residues.len());
        for r in &c.residues {
            sequence.push(r.base);
            let slots = [r.p, r.c4, r.nitrogen()];
            present.push([slots[0].is_some(), slots[1].is_some(), slots[2].is_some()]);
            beads.push([
                slots[BEAD_P].unwrap_or_default(),
                slots[BEAD_C4].unwrap_or_default(),
                slots[BEAD_N].unwrap_or_default(),
            ]);
        }
        let mask = present.iter().map(|p| p.iter().all(|&b| b)).collect();
        out.push(RnaStructure {
            id,
            sequence,
            beads,
            mask,
            present,
        });
    }
    if out.is_empty() {
        return Err(Error::NoRnaResidues(name.to_string()));
    }
    Ok(out)
}

fn atom_line(out: &mut String, serial: usize, atom: &str, res: char, chain: char, seq: usize, x: [f64; 3]) {
    let name = if atom.len() < 4 { format!(" {atom:<3}") } else { atom.to_string() };
    let element = &atom[..1];
    let _ = writeln!(
        out,
        "ATOM  {serial:>5} {name:<4} {res:>3} {chain}{seq:>4}    {:>8.3}{:>8.3}{:>8.3}{:>6.2}{:>6.2}          {element:>2}",
        x[0], x[1], x[2], 1.0, 0.0
    );
}

/// Writes structures as bead-only ATOM records, one chain per structure
/// (chain ids `A`, `B`, ...).
pub fn write_pdb(structures: &[RnaStructure]) -> String {
    let mut out = String::new();
    let mut serial = 1;
    for (s_idx, s) in structures.iter().enumerate() {
        let chain = (b'A' + (s_idx % 26) as u8) as char;
        for (i, (base, res)) in s.sequence.chars().zip(&s.beads).enumerate() {
            let n_name = match base {
                'A' | 'G' | 'N' => "N9",
                _ => "N1",
            };
            for (b, atom) in ["P", "C4'", n_name].iter().enumerate() {
                if s.bead_present(i, b) {
                    atom_line(&mut out, serial, atom, base, chain, i + 1, res[b]);
                    serial += 1;
                }
            }
        }
        let _ = writeln!(out, "TER");
    }
    out.push_str("END\n");
    out
}
