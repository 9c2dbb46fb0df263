use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FastaRecord {
    pub header: String,
    pub sequence: String,
}

/// One record per entry, sequence on a single line.
pub fn write_fasta(records: &[FastaRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push('>');
        out.push_str(&r.header);
        out.push('\n');
        out.push_str(&r.sequence);
        out.push('\n');
    }
    out
}

pub fn read_fasta(text: &str) -> Result<Vec<FastaRecord>> {
    let mut out: Vec<FastaRecord> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(h) = line.strip_prefix('>') {
            out.push(FastaRecord {
                header: h.trim().to_string(),
                sequence: String::new(),
            });
        } else {
            let rec = out.last_mut().ok_or_else(|| Error::MalformedRecord {
                line: i + 1,
                reason: "sequence before the first header".into(),
            })?;
            rec.sequence.push_str(&line.to_ascii_uppercase());
        }
    }
    Ok(out)
}
