//! Matrix Market coordinate text (`real`/`integer`, `general`/`symmetric`).

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use super::CsrMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

/// Parses a square coordinate-format matrix.
///
/// Symmetric storage is expanded to both triangles, 1-based indices become
/// 0-based, and duplicate coordinates are summed.
pub fn parse_matrix_market(text: &str) -> Result<CsrMatrix> {
    let mut lines = text.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::MalformedHeader("empty input".into()))?;
    let symmetry = parse_banner(header)?;

    let (size_line_no, size_line) = lines
        .by_ref()
        .find(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('%')
        })
        .ok_or_else(|| Error::MalformedHeader("missing size line".into()))?;
    let dims: Vec<&str> = size_line.split_whitespace().collect();
    if dims.len() != 3 {
        return Err(Error::MalformedHeader(format!(
            "size line {} must hold rows, cols and entries",
            size_line_no + 1
        )));
    }
    let parse_dim = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::MalformedHeader(format!("bad size field '{s}'")))
    };
    let (rows, cols, declared) = (parse_dim(dims[0])?, parse_dim(dims[1])?, parse_dim(dims[2])?);
    if rows != cols {
        return Err(Error::NonSquare { rows, cols });
    }
    if rows == 0 {
        return Err(Error::MalformedHeader("matrix order must be positive".into()));
    }

    let mut triplets = Vec::with_capacity(declared * 2);
    let mut seen = 0usize;
    for (line_no, line) in lines {
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let line = line_no + 1;
        let malformed = |reason: String| Error::MalformedEntry { line, reason };
        if seen == declared {
            return Err(malformed("more entries than declared".into()));
        }
        let mut fields = t.split_whitespace();
        let mut index = |name: &str| -> Result<usize> {
            let raw = fields.next().ok_or_else(|| malformed(format!("missing {name}")))?;
            let i = raw
                .parse::<usize>()
                .map_err(|_| malformed(format!("bad {name} '{raw}'")))?;
            if i == 0 || i > rows {
                return Err(malformed(format!("{name} {i} outside 1..={rows}")));
            }
            Ok(i - 1)
        };
        let r = index("row")?;
        let c = index("column")?;
        let raw = fields.next().ok_or_else(|| malformed("missing value".into()))?;
        let v = raw
            .parse::<f64>()
            .map_err(|_| malformed(format!("bad value '{raw}'")))?;
        if fields.next().is_some() {
            return Err(malformed("trailing fields".into()));
        }
        triplets.push((r, c, v));
        if symmetry == Symmetry::Symmetric && r != c {
            triplets.push((c, r, v));
        }
        seen += 1;
    }
    if seen != declared {
        return Err(Error::MalformedEntry {
            line: text.lines().count(),
            reason: format!("declared {declared} entries, found {seen}"),
        });
    }
    CsrMatrix::from_triplets(rows, triplets)
}

fn parse_banner(line: &str) -> Result<Symmetry> {
    let tokens: Vec<String> = line.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(Error::MalformedHeader(format!("unrecognized banner '{line}'")));
    }
    if tokens[2] != "coordinate" {
        return Err(Error::UnsupportedField(format!("format '{}'", tokens[2])));
    }
    match tokens[3].as_str() {
        "real" | "integer" | "double" => {}
        other => return Err(Error::UnsupportedField(other.to_string())),
    }
    match tokens[4].as_str() {
        "general" => Ok(Symmetry::General),
        "symmetric" => Ok(Symmetry::Symmetric),
        other => Err(Error::UnsupportedField(format!("symmetry '{other}'"))),
    }
}

/// Writes every stored entry as a `real general` coordinate file.
pub fn write_matrix_market(matrix: &CsrMatrix) -> String {
    let mut out = String::with_capacity(32 * matrix.nnz() + 64);
    out.push_str("%%MatrixMarket matrix coordinate real general\n");
    let n = matrix.order();
    let _ = writeln!(out, "{n} {n} {}", matrix.nnz());
    for (r, c, v) in matrix.iter() {
        let _ = writeln!(out, "{} {} {:e}", r + 1, c + 1, v);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_general() {
        let text = "%%MatrixMarket matrix coordinate real general\n% comment\n2 2 2\n1 1 5.0\n2 2 7.0\n";
        let a = parse_matrix_market(text).unwrap();
        assert_eq!(a.order(), 2);
        assert_eq!(a.values(), &[5.0, 7.0]);
        assert_eq!(a.col_indices(), &[0, 1]);
    }

    #[test]
    fn symmetric_is_expanded() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 4.0\n2 1 1.0\n";
        let a = parse_matrix_market(text).unwrap();
        let entries: Vec<_> = a.iter().collect();
        assert_eq!(entries, [(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0)]);
    }

    #[test]
    fn integer_field_accepted() {
        let text = "%%MatrixMarket matrix coordinate integer general\n1 1 1\n1 1 3\n";
        assert_eq!(parse_matrix_market(text).unwrap().values(), &[3.0]);
    }

    #[test]
    fn non_square_rejected() {
        let text = "%%MatrixMarket matrix coordinate real general\n2 3 1\n1 1 1.0\n";
        assert_eq!(
            parse_matrix_market(text).unwrap_err(),
            Error::NonSquare { rows: 2, cols: 3 }
        );
    }

    #[test]
    fn unsupported_fields_rejected() {
        for field in ["complex", "pattern"] {
            let text = format!("%%MatrixMarket matrix coordinate {field} general\n1 1 1\n1 1\n");
            assert!(matches!(
                parse_matrix_market(&text),
                Err(Error::UnsupportedField(_))
            ));
        }
        let text = "%%MatrixMarket matrix array real general\n1 1\n1.0\n";
        assert!(matches!(parse_matrix_market(text), Err(Error::UnsupportedField(_))));
    }

    #[test]
    fn out_of_bounds_index_rejected() {
        let text = "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n";
        assert!(matches!(
            parse_matrix_market(text),
            Err(Error::MalformedEntry { line: 3, .. })
        ));
        let text = "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n";
        assert!(matches!(parse_matrix_market(text), Err(Error::MalformedEntry { .. })));
    }

    #[test]
    fn missing_banner_rejected() {
        assert!(matches!(
            parse_matrix_market("2 2 1\n1 1 1.0\n"),
            Err(Error::MalformedHeader(_))
        ));
    }
}
