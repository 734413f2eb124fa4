//! Matrix Market coordinate files for sparse operands and whitespace
//! delimited text for small dense fixtures.

use std::io::{BufRead, Write};

use super::matrix::Matrix;
use crate::error::{Error, Result};

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

/// Reads an `integer` (or `pattern`) coordinate file; `general` and
/// `symmetric` layouts are accepted. Indices are 1-based.
pub fn read_matrix_market<R: BufRead>(r: R) -> Result<Matrix> {
    let mut lines = r.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let header = header?.to_ascii_lowercase();
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() < 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(parse_err(1, "missing %%MatrixMarket matrix header"));
    }
    if fields[2] != "coordinate" {
        return Err(parse_err(1, "only coordinate format is supported"));
    }
    let pattern = match fields[3] {
        "integer" => false,
        "pattern" => true,
        f => return Err(parse_err(1, format!("unsupported field type {f}"))),
    };
    let symmetric = match fields[4] {
        "general" => false,
        "symmetric" => true,
        s => return Err(parse_err(1, format!("unsupported symmetry {s}"))),
    };
    let mut m: Option<Matrix> = None;
    let mut expected = 0usize;
    let mut seen = 0usize;
    for (i, line) in lines {
        let ln = i + 1;
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let nums: Vec<i64> = t
            .split_whitespace()
            .map(|w| w.parse::<i64>().map_err(|_| parse_err(ln, format!("bad number {w}"))))
            .collect::<Result<_>>()?;
        match &mut m {
            None => {
                if nums.len() != 3 || nums.iter().any(|&v| v < 0) {
                    return Err(parse_err(ln, "size line needs rows cols nnz"));
                }
                m = Some(Matrix::zeros(nums[0] as usize, nums[1] as usize));
                expected = nums[2] as usize;
            }
            Some(mat) => {
                let want = if pattern { 2 } else { 3 };
                if nums.len() != want {
                    return Err(parse_err(ln, format!("entry needs {want} fields")));
                }
                let (r, c) = (nums[0] as usize, nums[1] as usize);
                if r == 0 || c == 0 || r > mat.rows || c > mat.cols {
                    return Err(parse_err(ln, format!("index ({r},{c}) out of range")));
                }
                let v = if pattern { 1 } else { nums[2] };
                let v = i32::try_from(v).map_err(|_| parse_err(ln, "value overflows i32"))?;
                mat.set(r - 1, c - 1, v);
                if symmetric && r != c {
                    mat.set(c - 1, r - 1, v);
                }
                seen += 1;
            }
        }
    }
    let m = m.ok_or_else(|| parse_err(0, "missing size line"))?;
    if seen != expected {
        return Err(parse_err(0, format!("expected {expected} entries, found {seen}")));
    }
    Ok(m)
}

pub fn write_matrix_market<W: Write>(m: &Matrix, mut w: W) -> Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate integer general")?;
    writeln!(w, "{} {} {}", m.rows, m.cols, m.nnz())?;
    for r in 0..m.rows {
        for c in 0..m.cols {
            let v = m.get(r, c);
            if v != 0 {
                writeln!(w, "{} {} {}", r + 1, c + 1, v)?;
            }
        }
    }
    Ok(())
}

/// One matrix row per line, entries separated by whitespace. `#` starts a
/// comment.
pub fn read_dense_text<R: BufRead>(r: R) -> Result<Matrix> {
    let mut rows = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let row = body
            .split_whitespace()
            .map(|w| w.parse::<i32>().map_err(|_| parse_err(i + 1, format!("bad number {w}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Matrix::from_rows(&rows)
}

pub fn write_dense_text<W: Write>(m: &Matrix, mut w: W) -> Result<()> {
    for r in 0..m.rows {
        let line: Vec<String> = m.row(r).iter().map(i32::to_string).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn read_matrix_file(path: &std::path::Path) -> Result<Matrix> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    if path.extension().is_some_and(|e| e == "mtx") {
        read_matrix_market(f)
    } else {
        read_dense_text(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workloads::{gen_matrix, SparsitySpec};

    #[test]
    fn matrix_market_roundtrip() {
        let m = gen_matrix(9, 13, &SparsitySpec::uniform(0.7, 5)).unwrap();
        let mut buf = Vec::new();
        write_matrix_market(&m, &mut buf).unwrap();
        assert_eq!(read_matrix_market(&buf[..]).unwrap(), m);
    }

    #[test]
    fn symmetric_and_pattern() {
        let text = "%%MatrixMarket matrix coordinate pattern symmetric\n% c\n3 3 2\n2 1\n3 3\n";
        let m = read_matrix_market(text.as_bytes()).unwrap();
        assert_eq!(m.data, vec![0, 1, 0, 1, 0, 0, 0, 0, 1]);
    }

    #[test]
    fn rejects_bad_counts() {
        let text = "%%MatrixMarket matrix coordinate integer general\n2 2 3\n1 1 4\n";
        assert!(read_matrix_market(text.as_bytes()).is_err());
    }

    #[test]
    fn dense_text_roundtrip() {
        let m = Matrix::from_fn(3, 4, |r, c| r as i32 - c as i32);
        let mut buf = Vec::new();
        write_dense_text(&m, &mut buf).unwrap();
        assert_eq!(read_dense_text(&buf[..]).unwrap(), m);
    }
}
