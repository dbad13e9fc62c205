//! Matrix Market readers and writers.
//!
//! Sparse matrices use the `coordinate real` format with `general` or
//! `symmetric` headers; symmetric input is expanded to full storage. Dense
//! matrices (near-kernel blocks) use the `array real general` format. Values
//! are written with shortest round-trip formatting, so write/read round trips
//! are bit-exact.

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Coordinate,
    Array,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

fn parse_header(line: &str, lineno: usize) -> Result<(Layout, Symmetry)> {
    let mut it = line.split_whitespace();
    let bad = |msg: &str| Error::MatrixMarket {
        line: lineno,
        msg: msg.to_string(),
    };
    if it.next() != Some("%%MatrixMarket") {
        return Err(bad("missing %%MatrixMarket banner"));
    }
    if it.next() != Some("matrix") {
        return Err(bad("object must be 'matrix'"));
    }
    let layout = match it.next() {
        Some("coordinate") => Layout::Coordinate,
        Some("array") => Layout::Array,
        _ => return Err(bad("format must be 'coordinate' or 'array'")),
    };
    match it.next() {
        Some("real") => {}
        _ => return Err(bad("field must be 'real'")),
    }
    let sym = match it.next() {
        Some("general") => Symmetry::General,
        Some("symmetric") => Symmetry::Symmetric,
        _ => return Err(bad("symmetry must be 'general' or 'symmetric'")),
    };
    Ok((layout, sym))
}

struct Lines<R: BufRead> {
    reader: R,
    lineno: usize,
    buf: String,
}

impl<R: BufRead> Lines<R> {
    fn new(reader: R) -> Self {
        Lines {
            reader,
            lineno: 0,
            buf: String::new(),
        }
    }

    /// Next line that is neither blank nor a % comment.
    fn next_data(&mut self) -> Result<Option<(usize, String)>> {
        loop {
            self.buf.clear();
            let n = self.reader.read_line(&mut self.buf)?;
            if n == 0 {
                return Ok(None);
            }
            self.lineno += 1;
            let t = self.buf.trim();
            if t.is_empty() || t.starts_with('%') {
                continue;
            }
            return Ok(Some((self.lineno, t.to_string())));
        }
    }
}

/// Read a sparse matrix in Matrix Market coordinate format. One-based file
/// indices become zero-based; a symmetric header expands the stored triangle
/// to full storage.
pub fn mm_read(path: impl AsRef<Path>) -> Result<SparseMatrix> {
    let file = File::open(path.as_ref())?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let (layout, sym) = parse_header(first.trim(), 1)?;
    if layout != Layout::Coordinate {
        return Err(Error::MatrixMarket {
            line: 1,
            msg: "expected coordinate format for sparse read".into(),
        });
    }
    let mut lines = Lines::new(reader);
    lines.lineno = 1;
    let (szline_no, szline) = lines.next_data()?.ok_or(Error::MatrixMarket {
        line: 1,
        msg: "missing size line".into(),
    })?;
    let dims: Vec<usize> = szline
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::MatrixMarket {
            line: szline_no,
            msg: format!("bad size line: {e}"),
        })?;
    if dims.len() != 3 {
        return Err(Error::MatrixMarket {
            line: szline_no,
            msg: "size line needs nrows ncols nnz".into(),
        });
    }
    let (nrows, ncols, nnz) = (dims[0], dims[1], dims[2]);
    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(nnz * 2);
    for _ in 0..nnz {
        let (no, line) = lines.next_data()?.ok_or(Error::MatrixMarket {
            line: szline_no,
            msg: "fewer entries than the size line declares".into(),
        })?;
        let mut it = line.split_whitespace();
        let parse_idx = |tok: Option<&str>| -> Result<usize> {
            tok.ok_or(Error::MatrixMarket {
                line: no,
                msg: "missing index".into(),
            })?
            .parse::<usize>()
            .map_err(|e| Error::MatrixMarket {
                line: no,
                msg: format!("bad index: {e}"),
            })
        };
        let i = parse_idx(it.next())?;
        let j = parse_idx(it.next())?;
        let v: f64 = it
            .next()
            .ok_or(Error::MatrixMarket {
                line: no,
                msg: "missing value".into(),
            })?
            .parse()
            .map_err(|e| Error::MatrixMarket {
                line: no,
                msg: format!("bad value: {e}"),
            })?;
        if i < 1 || i > nrows || j < 1 || j > ncols {
            return Err(Error::MatrixMarket {
                line: no,
                msg: format!("index ({i}, {j}) outside {nrows}x{ncols}"),
            });
        }
        if !v.is_finite() {
            return Err(Error::MatrixMarket {
                line: no,
                msg: format!("non-finite value {v}"),
            });
        }
        triplets.push((i - 1, j - 1, v));
        if sym == Symmetry::Symmetric && i != j {
            triplets.push((j - 1, i - 1, v));
        }
    }
    SparseMatrix::from_triplets(nrows, ncols, &triplets)
}

/// Write a sparse matrix in coordinate real general format.
pub fn mm_write(path: impl AsRef<Path>, a: &SparseMatrix) -> Result<()> {
    let file = File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", a.nrows(), a.ncols(), a.nnz())?;
    for i in 0..a.nrows() {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            writeln!(w, "{} {} {}", i + 1, j + 1, v)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a dense matrix in Matrix Market array format (column-major values).
pub fn mm_read_dense(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let file = File::open(path.as_ref())?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let (layout, sym) = parse_header(first.trim(), 1)?;
    if layout != Layout::Array || sym != Symmetry::General {
        return Err(Error::MatrixMarket {
            line: 1,
            msg: "expected 'array real general' for dense read".into(),
        });
    }
    let mut lines = Lines::new(reader);
    lines.lineno = 1;
    let (szline_no, szline) = lines.next_data()?.ok_or(Error::MatrixMarket {
        line: 1,
        msg: "missing size line".into(),
    })?;
    let dims: Vec<usize> = szline
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::MatrixMarket {
            line: szline_no,
            msg: format!("bad size line: {e}"),
        })?;
    if dims.len() != 2 {
        return Err(Error::MatrixMarket {
            line: szline_no,
            msg: "size line needs nrows ncols".into(),
        });
    }
    let (nrows, ncols) = (dims[0], dims[1]);
    let mut values = Vec::with_capacity(nrows * ncols);
    while values.len() < nrows * ncols {
        let (no, line) = lines.next_data()?.ok_or(Error::MatrixMarket {
            line: szline_no,
            msg: "fewer values than nrows*ncols".into(),
        })?;
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|e| Error::MatrixMarket {
                line: no,
                msg: format!("bad value: {e}"),
            })?;
            if !v.is_finite() {
                return Err(Error::MatrixMarket {
                    line: no,
                    msg: format!("non-finite value {v}"),
                });
            }
            values.push(v);
        }
    }
    DenseMatrix::from_column_major(nrows, ncols, values)
}

/// Write a dense matrix in array real general format.
pub fn mm_write_dense(path: impl AsRef<Path>, a: &DenseMatrix) -> Result<()> {
    let file = File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    writeln!(w, "%%MatrixMarket matrix array real general")?;
    writeln!(w, "{} {}", a.nrows(), a.ncols())?;
    for v in a.values() {
        writeln!(w, "{v}")?;
    }
    w.flush()?;
    Ok(())
}
