//! Benchmark system generation and Matrix Market I/O.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Interior grid for the 27-point Poisson operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoissonSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl PoissonSpec {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::InvalidParameter(format!(
                "grid dimensions must be >= 1, got {nx}x{ny}x{nz}"
            )));
        }
        Ok(Self { nx, ny, nz })
    }

    pub fn cube(p: usize) -> Result<Self> {
        Self::new(p, p, p)
    }

    pub fn n(&self) -> Option<usize> {
        self.nx.checked_mul(self.ny)?.checked_mul(self.nz)
    }
}

/// HPCG-style 27-point stencil: 26 on the diagonal, -1 for every neighbour in
/// the surrounding 3x3x3 cube. Unknowns are ordered x-fastest. The right-hand
/// side is all ones.
pub fn poisson27(spec: &PoissonSpec) -> Result<(CsrMatrix, Vec<f64>)> {
    let PoissonSpec { nx, ny, nz } = *spec;
    if nx == 0 || ny == 0 || nz == 0 {
        return Err(Error::InvalidParameter("grid dimensions must be >= 1".into()));
    }
    let n = spec
        .n()
        .ok_or_else(|| Error::InvalidParameter("grid size overflows usize".into()))?;
    let nnz_cap = n
        .checked_mul(27)
        .ok_or_else(|| Error::InvalidParameter("nonzero count overflows usize".into()))?;

    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::with_capacity(nnz_cap);
    let mut values = Vec::with_capacity(nnz_cap);
    row_offsets.push(0);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let row = x + nx * (y + ny * z);
                // ascending column order falls out of (dz, dy, dx) lexicographic order
                for dz in -1i64..=1 {
                    for dy in -1i64..=1 {
                        for dx in -1i64..=1 {
                            let (xx, yy, zz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                            if xx < 0
                                || yy < 0
                                || zz < 0
                                || xx >= nx as i64
                                || yy >= ny as i64
                                || zz >= nz as i64
                            {
                                continue;
                            }
                            let col = xx as usize + nx * (yy as usize + ny * zz as usize);
                            col_indices.push(col);
                            values.push(if col == row { 26.0 } else { -1.0 });
                        }
                    }
                }
                row_offsets.push(col_indices.len());
            }
        }
    }
    let a = CsrMatrix::new(n, row_offsets, col_indices, values)?;
    Ok((a, vec![1.0; n]))
}

/// Reads a symmetric real Matrix Market coordinate file and checks for a
/// strictly positive diagonal.
pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<CsrMatrix> {
    let f = File::open(path)?;
    parse_matrix_market(BufReader::new(f), true)
}

/// Parses Matrix Market text. Symmetric storage is expanded to full CSR.
pub fn parse_matrix_market<R: BufRead>(reader: R, require_spd: bool) -> Result<CsrMatrix> {
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let header = header?;
    let tokens: Vec<String> = header
        .split_whitespace()
        .map(|t| t.to_ascii_lowercase())
        .collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(Error::Parse {
            line: 1,
            msg: format!("bad header: {header}"),
        });
    }
    if tokens[2] != "coordinate" || tokens[3] != "real" {
        return Err(Error::Parse {
            line: 1,
            msg: "only 'coordinate real' matrices are supported".into(),
        });
    }
    if tokens[4] != "symmetric" {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected symmetric storage, found '{}'", tokens[4]),
        });
    }

    let mut size: Option<(usize, usize)> = None;
    let mut triplets = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let lineno = idx + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = t.split_whitespace().collect();
        let parse_usize = |s: &str| {
            s.parse::<usize>().map_err(|e| Error::Parse {
                line: lineno,
                msg: format!("{s}: {e}"),
            })
        };
        match size {
            None => {
                if parts.len() != 3 {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: "size line must have three fields".into(),
                    });
                }
                let (rows, cols) = (parse_usize(parts[0])?, parse_usize(parts[1])?);
                if rows != cols {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("matrix is {rows}x{cols}, expected square"),
                    });
                }
                let nnz = parse_usize(parts[2])?;
                size = Some((rows, nnz));
                triplets.reserve(2 * nnz);
            }
            Some((n, _)) => {
                if parts.len() != 3 {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: "entry line must have three fields".into(),
                    });
                }
                let (i, j) = (parse_usize(parts[0])?, parse_usize(parts[1])?);
                let v: f64 = parts[2].parse().map_err(|e| Error::Parse {
                    line: lineno,
                    msg: format!("{}: {e}", parts[2]),
                })?;
                if i == 0 || j == 0 || i > n || j > n {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("index ({i}, {j}) out of range"),
                    });
                }
                let (i, j) = (i - 1, j - 1);
                triplets.push((i, j, v));
                if i != j {
                    triplets.push((j, i, v));
                }
            }
        }
    }
    let (n, nnz) = size.ok_or(Error::Parse {
        line: 0,
        msg: "missing size line".into(),
    })?;
    if triplets.is_empty() {
        return Err(Error::Parse {
            line: 0,
            msg: "empty coordinate section".into(),
        });
    }
    let stored = triplets.iter().filter(|t| t.0 >= t.1).count();
    if stored != nnz {
        return Err(Error::Parse {
            line: 0,
            msg: format!("header announces {nnz} entries, found {stored}"),
        });
    }
    triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    if triplets.windows(2).any(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
        return Err(Error::Parse {
            line: 0,
            msg: "duplicate entry (both triangles stored?)".into(),
        });
    }
    let a = CsrMatrix::from_triplets(n, &triplets)?;
    if require_spd {
        a.check_positive_diagonal()?;
    }
    Ok(a)
}

/// Writes the lower triangle in Matrix Market symmetric coordinate format.
pub fn write_matrix_market(a: &CsrMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_matrix_market_to(a, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_matrix_market_to<W: Write>(a: &CsrMatrix, w: &mut W) -> Result<()> {
    let lower = (0..a.n())
        .map(|i| a.row(i).0.iter().filter(|&&j| j <= i).count())
        .sum::<usize>();
    writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?;
    writeln!(w, "{} {} {}", a.n(), a.n(), lower)?;
    for i in 0..a.n() {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            if j <= i {
                // `{:e}` is the shortest representation that round-trips
                writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
            }
        }
    }
    Ok(())
}
