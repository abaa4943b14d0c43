//! CSV ingestion and persistence for relations.
//!
//! Comma separated, RFC-4180 quoting. Empty numeric fields are rejected;
//! an empty text field is the empty string.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::relation::{ColumnType, Relation, Schema, Tuple, Value};

pub fn read_csv(path: impl AsRef<Path>, schema: &Schema, has_header: bool) -> Result<Relation> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    read_csv_from(file, schema, has_header)
}

/// True when the first record of the file spells out the schema's column
/// names.
pub fn detect_header(path: impl AsRef<Path>, schema: &Schema) -> Result<bool> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file);
    match rdr.records().next() {
        Some(Ok(rec)) => Ok(rec.iter().map(str::trim).eq(schema.names())),
        Some(Err(e)) => Err(Error::Csv {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        }),
        None => Ok(false),
    }
}

/// Reads CSV records from any byte source.
pub fn read_csv_from<R: Read>(reader: R, schema: &Schema, has_header: bool) -> Result<Relation> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .from_reader(reader);
    let mut rel = Relation::new(schema.clone());
    let mut record = csv::StringRecord::new();
    loop {
        let more = rdr.read_record(&mut record).map_err(|e| Error::Csv {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        if !more {
            break;
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != schema.arity() {
            return Err(Error::Csv {
                line,
                message: format!("expected {} fields, found {}", schema.arity(), record.len()),
            });
        }
        let row = record
            .iter()
            .zip(schema.columns())
            .map(|(field, col)| {
                if field.trim().is_empty() && col.ty != ColumnType::String {
                    return Err(Error::Csv {
                        line,
                        message: format!("empty value in column `{}`", col.name),
                    });
                }
                Value::parse_as(field, col.ty).map_err(|e| Error::Csv {
                    line,
                    message: format!("column `{}`: {e}", col.name),
                })
            })
            .collect::<Result<Tuple>>()?;
        rel.insert_unchecked(row);
    }
    Ok(rel)
}

/// Writes a header line and then every row in lexicographic order.
pub fn write_csv(rel: &Relation, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    write_csv_to(rel, file).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path.display().to_string(), source),
        other => other,
    })
}

pub fn write_csv_to<W: Write>(rel: &Relation, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let to_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io("<csv output>", io),
        other => Error::Internal(format!("{other:?}")),
    };
    w.write_record(rel.schema().names()).map_err(to_err)?;
    for row in rel.rows() {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}
