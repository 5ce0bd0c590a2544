//! word2vec-style text embeddings: an optional `count dim` header line,
//! then one `token v1 ... vd` line per vector.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::kernel::Embedding;

pub fn load_embeddings(path: &Path) -> Result<BTreeMap<String, Embedding>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(file, path)
}

pub fn parse_embeddings<R: Read>(reader: R, path: &Path) -> Result<BTreeMap<String, Embedding>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_owned(),
        line,
        message,
    };
    let mut out = BTreeMap::new();
    let mut header: Option<(usize, usize)> = None;
    let mut dim: Option<usize> = None;
    let mut first_content = true;

    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if std::mem::take(&mut first_content) && tokens.len() == 2 {
            if let (Ok(count), Ok(d)) = (tokens[0].parse::<usize>(), tokens[1].parse::<usize>()) {
                header = Some((count, d));
                dim = Some(d);
                continue;
            }
        }
        let (token, values) = tokens.split_first().expect("nonempty");
        if values.is_empty() {
            return Err(parse_err(lineno, format!("token `{token}` has no vector")));
        }
        let vector = values
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| parse_err(lineno, format!("bad number for `{token}`: {e}")))?;
        match dim {
            Some(d) if d != vector.len() => {
                return Err(parse_err(
                    lineno,
                    format!("`{token}` has dimension {}, expected {d}", vector.len()),
                ))
            }
            _ => dim = Some(vector.len()),
        }
        let emb = Embedding::new(vector).map_err(|e| parse_err(lineno, e.to_string()))?;
        if out.insert((*token).to_owned(), emb).is_some() {
            return Err(parse_err(lineno, format!("duplicate token `{token}`")));
        }
    }

    if out.is_empty() {
        return Err(parse_err(0, "no embedding vectors found".into()));
    }
    if let Some((count, _)) = header {
        if count != out.len() {
            return Err(parse_err(
                1,
                format!("header declares {count} vectors, found {}", out.len()),
            ));
        }
    }
    Ok(out)
}

/// Write with a `count dim` header, tokens in map order.
pub fn write_embeddings<W: Write>(embeddings: &BTreeMap<String, Embedding>, mut w: W) -> Result<()> {
    let dim = embeddings.values().next().map_or(0, Embedding::dim);
    let io = |e| Error::io("<embeddings>", e);
    writeln!(w, "{} {dim}", embeddings.len()).map_err(io)?;
    for (token, e) in embeddings {
        write!(w, "{token}").map_err(io)?;
        for v in e.as_slice() {
            write!(w, " {v:?}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    Ok(())
}
