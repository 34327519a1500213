//! Embedding block readers and writers.
//!
//! Two interchange formats carry column embeddings:
//!
//! * CSV: a header line `m,<dim>`, then one row per column of
//!   comma-separated decimal floats, with an optional trailing
//!   `,label=<string>` bucket tag.
//! * Binary: magic `SGMA`, version byte 0x01, little-endian u32 dim,
//!   little-endian u64 count, then `count·dim` little-endian f64 values in
//!   column-major order, no padding.
//!
//! CSV floats are written in Rust's shortest round-trip form, so a
//! write/read cycle reproduces the block exactly; the binary format is
//! bit-exact by construction.

use super::{EmbeddingBlock, GramError};
use std::fmt;
use std::io::{BufRead, Read, Write};

pub const BINARY_MAGIC: [u8; 4] = *b"SGMA";
pub const BINARY_VERSION: u8 = 0x01;

#[derive(Debug)]
pub enum FormatError {
    Io(std::io::Error),
    BadHeader(String),
    BadMagic([u8; 4]),
    BadVersion(u8),
    Truncated { expected: usize, got: usize },
    BadField { line: usize, field: usize, text: String },
    WrongArity { line: usize, expected: usize, got: usize },
    Block(GramError),
}

impl fmt::Display for FormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FormatError::Io(e) => write!(f, "io error: {e}"),
            FormatError::BadHeader(h) => write!(f, "bad header line {h:?} (expected `m,<int>`)"),
            FormatError::BadMagic(m) => write!(f, "bad magic bytes {m:?} (expected `SGMA`)"),
            FormatError::BadVersion(v) => write!(f, "unsupported format version {v:#04x}"),
            FormatError::Truncated { expected, got } => {
                write!(f, "truncated payload: expected {expected} bytes, got {got}")
            }
            FormatError::BadField { line, field, text } => {
                write!(f, "line {line}, field {field}: cannot parse {text:?} as a float")
            }
            FormatError::WrongArity { line, expected, got } => {
                write!(f, "line {line}: expected {expected} values, got {got}")
            }
            FormatError::Block(e) => write!(f, "invalid block: {e}"),
        }
    }
}

impl std::error::Error for FormatError {}

impl From<std::io::Error> for FormatError {
    fn from(e: std::io::Error) -> Self {
        FormatError::Io(e)
    }
}

impl From<GramError> for FormatError {
    fn from(e: GramError) -> Self {
        FormatError::Block(e)
    }
}

/// Parse a CSV embedding stream. Rows become columns of the block in file
/// order; blank lines are skipped.
pub fn read_csv<R: BufRead>(reader: R) -> Result<EmbeddingBlock, FormatError> {
    let mut lines = reader.lines();
    let header = loop {
        match lines.next() {
            Some(line) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break line;
                }
            }
            None => return Err(FormatError::BadHeader(String::new())),
        }
    };
    let dim = parse_header(&header)?;

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut any_label = false;
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let line_no = idx + 2;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields: Vec<&str> = line.split(',').collect();
        let label = match fields.last() {
            Some(last) if last.trim_start().starts_with("label=") => {
                let tag = fields.pop().unwrap().trim_start();
                Some(tag["label=".len()..].to_string())
            }
            _ => None,
        };
        if fields.len() != dim {
            return Err(FormatError::WrongArity { line: line_no, expected: dim, got: fields.len() });
        }
        for (k, field) in fields.iter().enumerate() {
            let x: f64 = field.trim().parse().map_err(|_| FormatError::BadField {
                line: line_no,
                field: k + 1,
                text: field.to_string(),
            })?;
            data.push(x);
        }
        any_label |= label.is_some();
        labels.push(label);
    }
    let block = EmbeddingBlock::from_columns(dim, data)?;
    if any_label {
        Ok(block.with_labels(labels)?)
    } else {
        Ok(block)
    }
}

fn parse_header(line: &str) -> Result<usize, FormatError> {
    let mut parts = line.trim().split(',');
    match (parts.next(), parts.next(), parts.next()) {
        (Some("m"), Some(dim), None) => {
            let dim: usize = dim
                .trim()
                .parse()
                .map_err(|_| FormatError::BadHeader(line.to_string()))?;
            if dim == 0 {
                return Err(FormatError::BadHeader(line.to_string()));
            }
            Ok(dim)
        }
        _ => Err(FormatError::BadHeader(line.to_string())),
    }
}

/// Write a block as CSV; floats use the shortest round-trip form.
pub fn write_csv<W: Write>(writer: &mut W, block: &EmbeddingBlock) -> Result<(), FormatError> {
    writeln!(writer, "m,{}", block.dim())?;
    let mut row = String::new();
    for j in 0..block.count() {
        row.clear();
        for (i, x) in block.column(j).iter().enumerate() {
            if i > 0 {
                row.push(',');
            }
            row.push_str(&x.to_string());
        }
        if let Some(label) = &block.labels()[j] {
            row.push_str(",label=");
            row.push_str(label);
        }
        writeln!(writer, "{row}")?;
    }
    Ok(())
}

/// Parse the binary embedding format.
pub fn read_binary<R: Read>(reader: &mut R) -> Result<EmbeddingBlock, FormatError> {
    let mut buf = Vec::new();
    reader.read_to_end(&mut buf)?;
    if buf.len() < 17 {
        return Err(FormatError::Truncated { expected: 17, got: buf.len() });
    }
    let magic: [u8; 4] = buf[0..4].try_into().unwrap();
    if magic != BINARY_MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    if buf[4] != BINARY_VERSION {
        return Err(FormatError::BadVersion(buf[4]));
    }
    let dim = u32::from_le_bytes(buf[5..9].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(buf[9..17].try_into().unwrap()) as usize;
    let expected = 17 + dim
        .checked_mul(count)
        .and_then(|c| c.checked_mul(8))
        .ok_or(FormatError::BadHeader("dim*count overflows".into()))?;
    if buf.len() != expected {
        return Err(FormatError::Truncated { expected, got: buf.len() });
    }
    let mut data = Vec::with_capacity(dim * count);
    for chunk in buf[17..].chunks_exact(8) {
        data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    Ok(EmbeddingBlock::from_columns(dim, data)?)
}

/// Write the binary embedding format; bit-exact round trip.
pub fn write_binary<W: Write>(writer: &mut W, block: &EmbeddingBlock) -> Result<(), FormatError> {
    writer.write_all(&BINARY_MAGIC)?;
    writer.write_all(&[BINARY_VERSION])?;
    writer.write_all(&(block.dim() as u32).to_le_bytes())?;
    writer.write_all(&(block.count() as u64).to_le_bytes())?;
    for j in 0..block.count() {
        for &x in block.column(j) {
            writer.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}
