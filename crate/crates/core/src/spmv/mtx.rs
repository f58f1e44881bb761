//! Matrix Market coordinate reader.

use std::path::{Path, PathBuf};

use super::CsrMatrix;
use crate::error::{SimError, SimResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Real,
    Integer,
    Pattern,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

pub fn load_matrix_market(path: &Path) -> SimResult<CsrMatrix> {
    let text = std::fs::read_to_string(path)?;
    parse_matrix_market(&text, path)
}

/// Parses coordinate-format text. `path` is only used in error messages.
pub fn parse_matrix_market(text: &str, path: &Path) -> SimResult<CsrMatrix> {
    let err = |line: usize, msg: String| SimError::Parse {
        path: PathBuf::from(path),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (ln, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let tokens: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(err(ln, format!("bad header `{header}`")));
    }
    if tokens[2] != "coordinate" {
        return Err(err(ln, format!("`{}` storage is not supported, only coordinate", tokens[2])));
    }
    let field = match tokens[3].as_str() {
        "real" | "double" => Field::Real,
        "integer" => Field::Integer,
        "pattern" => Field::Pattern,
        other => return Err(err(ln, format!("unsupported field `{other}`"))),
    };
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => return Err(err(ln, format!("unsupported symmetry `{other}`"))),
    };

    let mut body = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (ln, size) = body.next().ok_or_else(|| err(ln, "missing size line".into()))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| err(ln, format!("bad size line: {e}")))?;
    let [nrows, ncols, nentries] = dims[..] else {
        return Err(err(ln, format!("size line needs 3 integers, got `{size}`")));
    };

    let mut triplets = Vec::with_capacity(nentries * 2);
    let mut seen = 0usize;
    for (ln, line) in body {
        let t: Vec<&str> = line.split_whitespace().collect();
        let want = if field == Field::Pattern { 2 } else { 3 };
        if t.len() < want {
            return Err(err(ln, format!("expected {want} fields, got {}", t.len())));
        }
        let index = |s: &str, bound: usize, what: &str| -> SimResult<usize> {
            let i: usize = s.parse().map_err(|e| err(ln, format!("bad {what} index `{s}`: {e}")))?;
            if i == 0 || i > bound {
                return Err(err(ln, format!("{what} index {i} outside 1..={bound}")));
            }
            Ok(i - 1)
        };
        let r = index(t[0], nrows, "row")?;
        let c = index(t[1], ncols, "column")?;
        let v = match field {
            Field::Pattern => 1.0,
            _ => t[2].parse::<f64>().map_err(|e| err(ln, format!("bad value `{}`: {e}", t[2])))?,
        };
        triplets.push((r, c, v));
        if symmetry == Symmetry::Symmetric && r != c {
            triplets.push((c, r, v));
        }
        seen += 1;
    }
    if seen != nentries {
        return Err(err(0, format!("size line promises {nentries} entries, found {seen}")));
    }
    CsrMatrix::from_triplets(nrows, ncols, &triplets)
}
