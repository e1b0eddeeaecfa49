//! Sparse CSR storage, column blocks and small dense kernels.
//!
//! Every reduction runs in a fixed ascending order so that identical inputs
//! give bitwise-identical outputs.

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};

/// Largest row/column count a [`SmallDense`] may have.
pub const SMALL_DENSE_MAX: usize = 64;

/// Symmetric sparse matrix in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from raw CSR arrays, validating structure and symmetry.
    pub fn new(
        n: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n + 1 {
            return Err(Error::InvalidMatrix(format!(
                "row_offsets has length {}, expected {}",
                row_offsets.len(),
                n + 1
            )));
        }
        if row_offsets[0] != 0 {
            return Err(Error::InvalidMatrix("row_offsets[0] must be 0".into()));
        }
        if col_indices.len() != values.len() || row_offsets[n] != values.len() {
            return Err(Error::InvalidMatrix(
                "row_offsets[n], col_indices and values disagree on nnz".into(),
            ));
        }
        for i in 0..n {
            let (lo, hi) = (row_offsets[i], row_offsets[i + 1]);
            if hi < lo {
                return Err(Error::InvalidMatrix(format!(
                    "row_offsets decreases at row {i}"
                )));
            }
            let cols = &col_indices[lo..hi];
            for (k, &c) in cols.iter().enumerate() {
                if c >= n {
                    return Err(Error::InvalidMatrix(format!(
                        "column index {c} out of range in row {i}"
                    )));
                }
                if k > 0 && cols[k - 1] >= c {
                    return Err(Error::InvalidMatrix(format!(
                        "column indices not strictly increasing in row {i}"
                    )));
                }
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix values"));
        }
        let a = Self {
            n,
            row_offsets,
            col_indices,
            values,
        };
        if !a.is_symmetric() {
            return Err(Error::InvalidMatrix("matrix is not symmetric".into()));
        }
        Ok(a)
    }

    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        for &(i, j, _) in &sorted {
            if i >= n || j >= n {
                return Err(Error::InvalidMatrix(format!(
                    "triplet ({i}, {j}) out of range for n = {n}"
                )));
            }
        }
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_offsets = vec![0usize; n + 1];
        let mut col_indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in sorted {
            if last == Some((i, j)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            row_offsets[i + 1] += 1;
            col_indices.push(j);
            values.push(v);
            last = Some((i, j));
        }
        for i in 0..n {
            row_offsets[i + 1] += row_offsets[i];
        }
        Self::new(n, row_offsets, col_indices, values)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n]).expect("identity is valid")
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        let n = diag.len();
        Self::new(n, (0..=n).collect(), (0..n).collect(), diag.to_vec())
    }

    /// Converts a symmetric dense matrix, dropping exact zeros.
    pub fn from_dense(a: &DMatrix<f64>) -> Result<Self> {
        check_dim("from_dense", a.nrows(), a.ncols())?;
        let mut triplets = Vec::new();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                if a[(i, j)] != 0.0 {
                    triplets.push((i, j, a[(i, j)]));
                }
            }
        }
        Self::from_triplets(a.nrows(), &triplets)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    /// Entry `(i, j)`, zero when not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).all(|(&j, &v)| {
                let (cj, vj) = self.row(j);
                matches!(cj.binary_search(&i), Ok(k) if vj[k] == v)
            })
        })
    }

    /// Diagonal entries (zero where absent).
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Checks that every diagonal entry is present and strictly positive.
    pub fn check_positive_diagonal(&self) -> Result<()> {
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            match cols.binary_search(&i) {
                Ok(k) if vals[k] > 0.0 => {}
                Ok(k) => {
                    return Err(Error::NotSpd {
                        index: i,
                        value: vals[k],
                    })
                }
                Err(_) => {
                    return Err(Error::InvalidMatrix(format!("missing diagonal in row {i}")))
                }
            }
        }
        Ok(())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `y = A x`, row by row in stored column order.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.n];
        self.spmv_into(x, &mut y)?;
        Ok(y)
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        check_dim("spmv", self.n, x.len())?;
        check_dim("spmv", self.n, y.len())?;
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                acc += v * x[j];
            }
            *yi = acc;
        }
        Ok(())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                d[(i, j)] = v;
            }
        }
        d
    }
}

/// An `n x k` block of column vectors, stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorBlock {
    n: usize,
    k: usize,
    data: Vec<f64>,
}

impl VectorBlock {
    pub fn zeros(n: usize, k: usize) -> Self {
        Self {
            n,
            k,
            data: vec![0.0; n * k],
        }
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * columns.len());
        for c in columns {
            check_dim("VectorBlock::from_columns", n, c.len())?;
            data.extend_from_slice(c);
        }
        Self::from_col_major(n, columns.len(), data)
    }

    pub fn from_col_major(n: usize, k: usize, data: Vec<f64>) -> Result<Self> {
        check_dim("VectorBlock::from_col_major", n * k, data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("vector block"));
        }
        Ok(Self { n, k, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.n..(j + 1) * self.n]
    }

    pub(crate) fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.n..(j + 1) * self.n]
    }

    /// Overwrites column `j`; all other columns are untouched.
    pub fn set_col(&mut self, j: usize, v: &[f64]) -> Result<()> {
        check_dim("VectorBlock::set_col", self.n, v.len())?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("vector block column"));
        }
        self.col_mut(j).copy_from_slice(v);
        Ok(())
    }

    /// Copies columns `start..end` into a new block.
    pub fn columns(&self, start: usize, end: usize) -> VectorBlock {
        VectorBlock {
            n: self.n,
            k: end - start,
            data: self.data[start * self.n..end * self.n].to_vec(),
        }
    }

    /// `out = B c` for a coefficient vector `c` of length `k`.
    pub fn mul_vec(&self, c: &[f64]) -> Result<Vec<f64>> {
        check_dim("VectorBlock::mul_vec", self.k, c.len())?;
        let mut out = vec![0.0; self.n];
        for (j, &cj) in c.iter().enumerate() {
            for (o, &v) in out.iter_mut().zip(self.col(j)) {
                *o += v * cj;
            }
        }
        Ok(out)
    }

    /// `B^T v`, one ascending dot product per column.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim("VectorBlock::tr_mul_vec", self.n, v.len())?;
        Ok((0..self.k).map(|j| dot(self.col(j), v)).collect())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Small column-major dense matrix (at most 64 x 64).
#[derive(Debug, Clone, PartialEq)]
pub struct SmallDense {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl SmallDense {
    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        if rows > SMALL_DENSE_MAX || cols > SMALL_DENSE_MAX {
            return Err(Error::TooLarge {
                n: rows.max(cols),
                limit: SMALL_DENSE_MAX,
            });
        }
        Ok(Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        })
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut m = Self::zeros(n, n)?;
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        Ok(m)
    }

    /// Builds from row slices; convenient for literals.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut m = Self::zeros(r, c)?;
        for (i, row) in rows.iter().enumerate() {
            check_dim("SmallDense::from_rows", c, row.len())?;
            for (j, &v) in row.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        m.check_finite()?;
        Ok(m)
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim("SmallDense::from_col_major", rows * cols, data.len())?;
        let mut m = Self::zeros(rows, cols)?;
        m.data = data;
        m.check_finite()?;
        Ok(m)
    }

    /// A single column.
    pub fn column_vector(v: &[f64]) -> Result<Self> {
        Self::from_col_major(v.len(), 1, v.to_vec())
    }

    fn check_finite(&self) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("small dense matrix"))
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.rows + i] = v;
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub(crate) fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn transpose(&self) -> SmallDense {
        let mut t = SmallDense::zeros(self.cols, self.rows).expect("same size bound");
        for j in 0..self.cols {
            for i in 0..self.rows {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// Bitwise symmetry.
    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn matmul(&self, other: &SmallDense) -> Result<SmallDense> {
        check_dim("SmallDense::matmul", self.cols, other.rows)?;
        let mut out = SmallDense::zeros(self.rows, other.cols)?;
        for j in 0..other.cols {
            for i in 0..self.rows {
                let mut acc = 0.0;
                for l in 0..self.cols {
                    acc += self.get(i, l) * other.get(l, j);
                }
                out.set(i, j, acc);
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim("SmallDense::mul_vec", self.cols, v.len())?;
        Ok((0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j) * v[j]).sum())
            .collect())
    }

    /// `self - other`
    pub fn sub(&self, other: &SmallDense) -> Result<SmallDense> {
        check_dim("SmallDense::sub", self.rows, other.rows)?;
        check_dim("SmallDense::sub", self.cols, other.cols)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(SmallDense {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scaled(&self, factor: f64) -> SmallDense {
        SmallDense {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_nalgebra(m: &DMatrix<f64>) -> Result<SmallDense> {
        Self::from_col_major(m.nrows(), m.ncols(), m.as_slice().to_vec())
    }
}

/// Inner product used by orthogonalization routines.
#[derive(Debug, Clone, Copy)]
pub enum InnerProduct<'a> {
    Euclidean,
    /// `<u, v>_A = u^T A v`
    Energy(&'a CsrMatrix),
}

impl InnerProduct<'_> {
    pub fn apply(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        match self {
            InnerProduct::Euclidean => {
                check_dim("inner product", u.len(), v.len())?;
                Ok(dot(u, v))
            }
            InnerProduct::Energy(a) => {
                let av = a.spmv(v)?;
                check_dim("inner product", u.len(), av.len())?;
                Ok(dot(u, &av))
            }
        }
    }

    /// Gram matrix `U^T U` or `U^T A U`.
    pub fn gram(&self, u: &VectorBlock) -> Result<SmallDense> {
        match self {
            InnerProduct::Euclidean => block_gram(u, u),
            InnerProduct::Energy(a) => {
                let au = apply_to_block(a, u)?;
                block_gram(u, &au)
            }
        }
    }
}

/// Ascending-order dot product.
#[inline]
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in x.iter().zip(y) {
        acc += a * b;
    }
    acc
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// `y += a x`
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `A B` column by column.
pub fn apply_to_block(a: &CsrMatrix, b: &VectorBlock) -> Result<VectorBlock> {
    check_dim("apply_to_block", a.n(), b.n())?;
    let mut out = VectorBlock::zeros(b.n(), b.k());
    for j in 0..b.k() {
        a.spmv_into(b.col(j), out.col_mut(j))?;
    }
    Ok(out)
}

/// `G = U^T V` with `G_ij = sum_l u[l,i] v[l,j]`, summed in ascending `l`.
pub fn block_gram(u: &VectorBlock, v: &VectorBlock) -> Result<SmallDense> {
    check_dim("block_gram", u.n(), v.n())?;
    let mut g = SmallDense::zeros(u.k(), v.k())?;
    for j in 0..v.k() {
        for i in 0..u.k() {
            g.set(i, j, dot(u.col(i), v.col(j)));
        }
    }
    Ok(g)
}

/// `out = Y + X C`.
pub fn block_update(y: &VectorBlock, x: &VectorBlock, c: &SmallDense) -> Result<VectorBlock> {
    check_dim("block_update", x.k(), c.rows())?;
    check_dim("block_update", y.k(), c.cols())?;
    check_dim("block_update", y.n(), x.n())?;
    let mut out = y.clone();
    for j in 0..c.cols() {
        let oj = out.col_mut(j);
        for l in 0..c.rows() {
            axpy(c.get(l, j), x.col(l), oj);
        }
    }
    if out.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("block_update"));
    }
    Ok(out)
}

/// Lower Cholesky factor of an SPD matrix; errors on the first non-positive pivot.
pub(crate) fn cholesky_factor(w: &SmallDense) -> Result<SmallDense> {
    let n = w.rows();
    check_dim("cholesky", n, w.cols())?;
    let mut l = SmallDense::zeros(n, n)?;
    for j in 0..n {
        let mut d = w.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if !(d > 0.0) {
            return Err(Error::NotSpd { index: j, value: d });
        }
        let ljj = d.sqrt();
        l.set(j, j, ljj);
        for i in j + 1..n {
            let mut v = w.get(i, j);
            for k in 0..j {
                v -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, v / ljj);
        }
    }
    Ok(l)
}

/// Solves `L L^T x = b` in place for a factor produced by [`cholesky_factor`].
pub(crate) fn cholesky_substitute(l: &SmallDense, b: &mut [f64]) {
    let n = l.rows();
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= l.get(i, k) * b[k];
        }
        b[i] = v / l.get(i, i);
    }
    for i in (0..n).rev() {
        let mut v = b[i];
        for k in i + 1..n {
            v -= l.get(k, i) * b[k];
        }
        b[i] = v / l.get(i, i);
    }
}

/// Solves `W X = rhs` for SPD `W` by Cholesky factorization.
pub fn small_cholesky_solve(w: &SmallDense, rhs: &SmallDense) -> Result<SmallDense> {
    check_dim("small_cholesky_solve", w.rows(), rhs.rows())?;
    let l = cholesky_factor(w)?;
    let mut x = rhs.clone();
    for j in 0..x.cols() {
        cholesky_substitute(&l, x.col_mut(j));
    }
    x.check_finite()?;
    Ok(x)
}

/// One modified Gram-Schmidt pass of `p_1` against `p_2, ..., p_s`.
///
/// The running vector is projected in order `j = 2..s`:
/// `v <- v - <p_j, v> p_j`, starting from `v = p_1`.
pub fn mgs_orthogonalize_first(p: &VectorBlock, inner: InnerProduct<'_>) -> Result<Vec<f64>> {
    if p.k() == 0 {
        return Err(Error::InvalidParameter("empty block".into()));
    }
    for j in 0..p.k() {
        if p.col(j).iter().all(|&v| v == 0.0) {
            return Err(Error::ZeroNorm { column: j });
        }
    }
    let mut v = p.col(0).to_vec();
    for j in 1..p.k() {
        let c = inner.apply(p.col(j), &v)?;
        axpy(-c, p.col(j), &mut v);
    }
    Ok(v)
}
