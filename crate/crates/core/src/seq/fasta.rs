//! Multi-record FASTA reading and 60-column writing.

use std::io::{self, BufRead, Write};

use super::{NucleotideSequence, SeqError};

pub const LINE_WIDTH: usize = 60;

/// Reads every record. The identifier is the first word of the header line;
/// anything after it is kept under the `description` metadata key.
pub fn read_fasta<R: BufRead>(reader: R) -> Result<Vec<NucleotideSequence>, SeqError> {
    let mut records = Vec::new();
    let mut header: Option<String> = None;
    let mut body: Vec<u8> = Vec::new();

    let finish = |header: Option<String>, body: &mut Vec<u8>, records: &mut Vec<NucleotideSequence>| {
        if let Some(h) = header {
            let mut seq = NucleotideSequence::from_bytes(body).map_err(|e| match e {
                SeqError::InvalidSymbol { position, byte } => SeqError::MalformedFasta(format!(
                    "record {h:?}: invalid symbol {:?} at position {position}",
                    char::from(byte)
                )),
                other => other,
            })?;
            let mut parts = h.splitn(2, char::is_whitespace);
            seq.id = Some(parts.next().unwrap_or("").to_string());
            if let Some(desc) = parts.next().map(str::trim).filter(|d| !d.is_empty()) {
                seq.meta.insert("description".into(), desc.to_string());
            }
            records.push(seq);
        }
        body.clear();
        Ok::<(), SeqError>(())
    };

    for (line_no, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| SeqError::MalformedFasta(e.to_string()))?;
        let line = line.trim_end();
        if let Some(h) = line.strip_prefix('>') {
            finish(header.take(), &mut body, &mut records)?;
            header = Some(h.trim().to_string());
        } else if line.is_empty() || line.starts_with(';') {
            continue;
        } else if header.is_none() {
            return Err(SeqError::MalformedFasta(format!(
                "line {}: sequence data before the first header",
                line_no + 1
            )));
        } else {
            body.extend_from_slice(line.as_bytes());
        }
    }
    finish(header.take(), &mut body, &mut records)?;
    Ok(records)
}

pub fn parse_fasta(text: &str) -> Result<Vec<NucleotideSequence>, SeqError> {
    read_fasta(text.as_bytes())
}

/// Writes records wrapped at 60 columns. Records without an identifier get
/// `seq<index>`.
pub fn write_fasta<'a, W, I>(mut writer: W, records: I) -> io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a NucleotideSequence>,
{
    for (i, rec) in records.into_iter().enumerate() {
        match (&rec.id, rec.meta.get("description")) {
            (Some(id), Some(desc)) => writeln!(writer, ">{id} {desc}")?,
            (Some(id), None) => writeln!(writer, ">{id}")?,
            (None, _) => writeln!(writer, ">seq{i}")?,
        }
        for chunk in rec.as_bytes().chunks(LINE_WIDTH) {
            writer.write_all(chunk)?;
            writer.write_all(b"\n")?;
        }
    }
    Ok(())
}
