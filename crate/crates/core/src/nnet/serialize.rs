//! Parameter container: a text header followed by raw little-endian `f64`s.
//!
//! ```text
//! gradfield-params 1
//! tensors <count>
//! <name> <byte offset> <rank> <dim_0> ... <dim_{rank-1}>   (count lines)
//! end
//! <binary payload>
//! ```
//!
//! Offsets are relative to the first byte after the `end\n` line. Names are
//! dot-separated paths without whitespace. Tensors are laid out back to back
//! in header order.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use super::layers::Module;
use super::tensor::Tensor;
use crate::{Error, Result};

const MAGIC: &str = "gradfield-params 1";

pub fn write_tensors<W: Write>(mut w: W, tensors: &[(String, &Tensor)]) -> std::io::Result<()> {
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "tensors {}", tensors.len())?;
    let mut offset = 0usize;
    for (name, t) in tensors {
        let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        writeln!(w, "{name} {offset} {} {}", t.shape().len(), dims.join(" "))?;
        offset += t.len() * 8;
    }
    writeln!(w, "end")?;
    for (_, t) in tensors {
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn parse_err(line: usize, detail: impl Into<String>) -> Error {
    Error::Parse {
        path: "<params>".into(),
        line,
        detail: detail.into(),
    }
}

pub fn read_tensors<R: BufRead>(mut r: R) -> Result<Vec<(String, Tensor)>> {
    let mut line = String::new();
    let mut next_line = |r: &mut R, no: usize| -> Result<String> {
        line.clear();
        let n = r
            .read_line(&mut line)
            .map_err(|e| parse_err(no, e.to_string()))?;
        if n == 0 {
            return Err(parse_err(no, "unexpected end of header"));
        }
        Ok(line.trim_end_matches(['\n', '\r']).to_string())
    };

    if next_line(&mut r, 1)? != MAGIC {
        return Err(parse_err(1, format!("expected '{MAGIC}'")));
    }
    let count_line = next_line(&mut r, 2)?;
    let count: usize = count_line
        .strip_prefix("tensors ")
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| parse_err(2, "expected 'tensors <count>'"))?;

    let mut entries = Vec::with_capacity(count);
    let mut expected_offset = 0usize;
    for i in 0..count {
        let no = 3 + i;
        let text = next_line(&mut r, no)?;
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() < 3 {
            return Err(parse_err(no, "expected '<name> <offset> <rank> <dims...>'"));
        }
        let num = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| parse_err(no, format!("invalid integer '{s}'")))
        };
        let offset = num(fields[1])?;
        let rank = num(fields[2])?;
        if fields.len() != 3 + rank {
            return Err(parse_err(no, format!("rank {rank} but {} dims", fields.len() - 3)));
        }
        let shape = fields[3..]
            .iter()
            .map(|s| num(s))
            .collect::<Result<Vec<_>>>()?;
        if offset != expected_offset {
            return Err(parse_err(no, format!("offset {offset}, expected {expected_offset}")));
        }
        expected_offset += shape.iter().product::<usize>() * 8;
        entries.push((fields[0].to_string(), shape));
    }
    if next_line(&mut r, 3 + count)? != "end" {
        return Err(parse_err(3 + count, "expected 'end'"));
    }

    let mut out = Vec::with_capacity(count);
    let mut buf = [0u8; 8];
    for (name, shape) in entries {
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut buf)
                .map_err(|_| parse_err(0, format!("payload truncated in '{name}'")))?;
            data.push(f64::from_le_bytes(buf));
        }
        out.push((name, Tensor::from_vec(shape, data)?));
    }
    Ok(out)
}

/// Copies tensors into a module, matching by name and shape.
pub fn load_into<M: Module + ?Sized>(
    module: &mut M,
    prefix: &str,
    tensors: &HashMap<String, Tensor>,
) -> Result<()> {
    for (name, slot) in module.named_tensors_mut(prefix) {
        let t = tensors
            .get(&name)
            .ok_or_else(|| Error::invalid(format!("parameter '{name}' missing from file")))?;
        if t.shape() != slot.shape() {
            return Err(Error::shape(
                name,
                format!("file has {:?}, model expects {:?}", t.shape(), slot.shape()),
            ));
        }
        *slot = t.clone();
    }
    Ok(())
}

pub fn save_file(path: &Path, tensors: &[(String, &Tensor)]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_tensors(&mut w, tensors).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_file(path: &Path) -> Result<HashMap<String, Tensor>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let tensors = read_tensors(std::io::BufReader::new(f)).map_err(|e| match e {
        Error::Parse { line, detail, .. } => Error::Parse {
            path: path.to_path_buf(),
            line,
            detail,
        },
        other => other,
    })?;
    Ok(tensors.into_iter().collect())
}
