//! Dense complex matrices and block partitioning.
//!
//! Matrices are stored row-major in double precision. The text serialization
//! format is one header line `dim_rows dim_cols` followed by one `re im` line
//! per entry in row-major order; floats are printed with Rust's shortest
//! round-trip formatting so write/read cycles are bit exact.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::ops::Range;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::EntryCount {
                rows,
                cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m.data[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    /// Build from a function of (row, col).
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.data[row * self.cols + col] = value;
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[Complex64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, row: usize) -> &mut [Complex64] {
        &mut self.data[row * self.cols..(row + 1) * self.cols]
    }

    /// Elementwise sum.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                op: "mat_add",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Standard matrix product.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch {
                op: "mat_mul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        mul_acc(&mut out, self, other);
        Ok(out)
    }

    /// Scale every entry by `factor`.
    pub fn scale(&self, factor: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    /// `self += factor * other`, shapes must match.
    pub fn add_scaled_assign(&mut self, other: &Self, factor: Complex64) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
    }

    pub fn conj_transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    pub fn trace(&self) -> Complex64 {
        debug_assert!(self.is_square());
        (0..self.rows).map(|i| self.get(i, i)).sum()
    }

    /// Max over entries of |a_ij - conj(a_ji)|. Zero for exactly Hermitian input.
    pub fn hermiticity_defect(&self) -> f64 {
        debug_assert!(self.is_square());
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in i..self.cols {
                let d = (self.get(i, j) - self.get(j, i).conj()).norm();
                if d > worst {
                    worst = d;
                }
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Serialize in the documented text format.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = String::new();
        writeln!(buf, "{} {}", self.rows, self.cols).expect("string write");
        for z in &self.data {
            writeln!(buf, "{} {}", z.re, z.im).expect("string write");
        }
        w.write_all(buf.as_bytes())?;
        Ok(())
    }

    /// Parse the text format written by [`ComplexMatrix::write_text`].
    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty matrix file".into()))??;
        let mut parts = header.split_whitespace();
        let rows: usize = parse_field(parts.next(), "dim_rows")?;
        let cols: usize = parse_field(parts.next(), "dim_cols")?;
        let mut data = Vec::with_capacity(rows * cols);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let re: f64 = parse_field(parts.next(), "re")?;
            let im: f64 = parse_field(parts.next(), "im")?;
            data.push(Complex64::new(re, im));
        }
        Self::new(rows, cols, data)
    }
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, name: &str) -> Result<T> {
    field
        .ok_or_else(|| Error::Parse(format!("missing field {name}")))?
        .parse()
        .map_err(|_| Error::Parse(format!("malformed field {name}")))
}

/// `acc += a * b`. Shapes must already agree.
///
/// The k-middle loop order keeps both `b` and `acc` accesses sequential, and
/// the accumulation order per output entry is fixed, so results are
/// reproducible regardless of caller scheduling.
pub fn mul_acc(acc: &mut ComplexMatrix, a: &ComplexMatrix, b: &ComplexMatrix) {
    debug_assert_eq!(a.cols, b.rows);
    debug_assert_eq!((acc.rows, acc.cols), (a.rows, b.cols));
    let n = b.cols;
    for i in 0..a.rows {
        let arow = a.row(i);
        let crow = &mut acc.data[i * n..(i + 1) * n];
        for (k, &aik) in arow.iter().enumerate() {
            let brow = &b.data[k * n..(k + 1) * n];
            for (c, &bv) in crow.iter_mut().zip(brow) {
                *c += aik * bv;
            }
        }
    }
}

/// Block partition of an `N x N` matrix over a `side x side` grid.
///
/// When `side` does not divide `N`, the first `N mod side` block rows and
/// columns take `ceil(N/side)` entries and the rest take `floor(N/side)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    dim: usize,
    side: usize,
    extents: Vec<usize>,
    offsets: Vec<usize>,
}

impl BlockPartition {
    pub fn new(dim: usize, side: usize) -> Result<Self> {
        if side == 0 {
            return Err(Error::EmptyGrid);
        }
        if side > dim {
            return Err(Error::GridExceedsDim {
                grid_side: side,
                dim,
            });
        }
        let base = dim / side;
        let rem = dim % side;
        let mut extents = Vec::with_capacity(side);
        let mut offsets = Vec::with_capacity(side);
        let mut off = 0;
        for k in 0..side {
            let ext = if k < rem { base + 1 } else { base };
            offsets.push(off);
            extents.push(ext);
            off += ext;
        }
        debug_assert_eq!(off, dim);
        Ok(Self {
            dim,
            side,
            extents,
            offsets,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn extent(&self, block: usize) -> usize {
        self.extents[block]
    }

    pub fn offset(&self, block: usize) -> usize {
        self.offsets[block]
    }

    /// Global index range covered by block row/col `block`.
    pub fn range(&self, block: usize) -> Range<usize> {
        self.offsets[block]..self.offsets[block] + self.extents[block]
    }

    /// Which block row/col owns global index `idx`.
    pub fn block_of(&self, idx: usize) -> usize {
        debug_assert!(idx < self.dim);
        let base = self.dim / self.side;
        let rem = self.dim % self.side;
        let boundary = rem * (base + 1);
        if idx < boundary {
            idx / (base + 1)
        } else {
            rem + (idx - boundary) / base
        }
    }
}

/// A block together with its (block_row, block_col) coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacedBlock {
    pub row: usize,
    pub col: usize,
    pub matrix: ComplexMatrix,
}

/// Cut `m` into `side x side` blocks under the partition rule.
pub fn partition(m: &ComplexMatrix, side: usize) -> Result<Vec<PlacedBlock>> {
    let part_rows = BlockPartition::new(m.rows(), side)?;
    let part_cols = BlockPartition::new(m.cols(), side)?;
    let mut blocks = Vec::with_capacity(side * side);
    for br in 0..side {
        for bc in 0..side {
            let rr = part_rows.range(br);
            let cr = part_cols.range(bc);
            let block = ComplexMatrix::from_fn(rr.len(), cr.len(), |i, j| {
                m.get(rr.start + i, cr.start + j)
            });
            blocks.push(PlacedBlock {
                row: br,
                col: bc,
                matrix: block,
            });
        }
    }
    Ok(blocks)
}

/// Rebuild the dense matrix from a full tile set. Exact inverse of
/// [`partition`]: no arithmetic is performed, entries are copied.
pub fn reassemble(blocks: &[PlacedBlock], part: &BlockPartition) -> Result<ComplexMatrix> {
    let side = part.side();
    let mut seen = vec![false; side * side];
    let mut out = ComplexMatrix::zeros(part.dim(), part.dim());
    for b in blocks {
        if b.row >= side || b.col >= side {
            return Err(Error::MissingBlock {
                row: b.row,
                col: b.col,
            });
        }
        let slot = b.row * side + b.col;
        if seen[slot] {
            return Err(Error::DuplicateBlock {
                row: b.row,
                col: b.col,
            });
        }
        seen[slot] = true;
        let rr = part.range(b.row);
        let cr = part.range(b.col);
        if b.matrix.shape() != (rr.len(), cr.len()) {
            return Err(Error::ShapeMismatch {
                op: "reassemble",
                left: b.matrix.shape(),
                right: (rr.len(), cr.len()),
            });
        }
        for i in 0..rr.len() {
            for j in 0..cr.len() {
                out.set(rr.start + i, cr.start + j, b.matrix.get(i, j));
            }
        }
    }
    if let Some(slot) = seen.iter().position(|s| !s) {
        return Err(Error::MissingBlock {
            row: slot / side,
            col: slot % side,
        });
    }
    Ok(out)
}
