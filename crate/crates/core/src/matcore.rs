//! Dense complex linear algebra shared by every other module.
//!
//! [`CMat`] is a row-major dense matrix. Arithmetic operators panic on shape
//! mismatch (a programming error); the named operations that take user data
//! (`tensor`, `pinch`, `partial_trace`, `complete_isometry`) return
//! [`Result`].

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Range, Sub};

use nalgebra::DMatrix;
pub use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::tol;

/// Largest ambient dimension any constructed matrix may have by default.
pub const DEFAULT_MAX_DIM: usize = 4096;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[derive(Clone, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("empty matrix {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::from_vec(r, c, rows.concat())
    }

    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::from_vec(rows, cols, data.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn diag(entries: &[C64]) -> Self {
        let mut m = Self::zeros(entries.len(), entries.len());
        for (i, &e) in entries.iter().enumerate() {
            m[(i, i)] = e;
        }
        m
    }

    /// Matrix unit `|i⟩⟨j|` on an `n`-dimensional space.
    pub fn unit(n: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(n, n);
        m[(i, j)] = ONE;
        m
    }

    /// Projector `|i⟩⟨i|`.
    pub fn projector(n: usize, i: usize) -> Self {
        Self::unit(n, i, i)
    }

    /// Column vector from amplitudes.
    pub fn ket(amps: &[C64]) -> Self {
        Self {
            rows: amps.len(),
            cols: 1,
            data: amps.to_vec(),
        }
    }

    /// The density matrix `|ψ⟩⟨ψ|`.
    pub fn pure_state(amps: &[C64]) -> Self {
        let k = Self::ket(amps);
        &k * &k.adjoint()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn trace(&self) -> C64 {
        assert!(self.is_square(), "trace of a non-square matrix");
        (0..self.rows).map(|i| self[(i, i)]).sum()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(C64::norm_sqr).sum::<f64>().sqrt()
    }

    /// Trace inner product `tr(self* other)`.
    pub fn inner(&self, other: &CMat) -> C64 {
        assert_eq!(self.shape(), other.shape(), "inner product shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `tr(self · other)` without forming the product.
    pub fn trace_product(&self, other: &CMat) -> C64 {
        assert_eq!(self.cols, other.rows);
        assert_eq!(self.rows, other.cols);
        let mut acc = ZERO;
        for i in 0..self.rows {
            for k in 0..self.cols {
                acc += self[(i, k)] * other[(k, i)];
            }
        }
        acc
    }

    pub fn commutator(&self, other: &CMat) -> CMat {
        &(self * other) - &(other * self)
    }

    /// `self · m · self*`.
    pub fn sandwich(&self, m: &CMat) -> CMat {
        &(self * m) * &self.adjoint()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square() && (self - &self.adjoint()).norm() <= tol
    }

    /// Copies the `rows × cols` submatrix starting at `(r0, c0)`.
    pub fn submatrix(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> CMat {
        assert!(r0 + rows <= self.rows && c0 + cols <= self.cols);
        Self::from_fn(rows, cols, |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn set_submatrix(&mut self, r0: usize, c0: usize, block: &CMat) {
        assert!(r0 + block.rows <= self.rows && c0 + block.cols <= self.cols);
        for i in 0..block.rows {
            for j in 0..block.cols {
                self[(r0 + i, c0 + j)] = block[(i, j)];
            }
        }
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &CMat) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub(crate) fn from_nalgebra(m: &DMatrix<C64>) -> CMat {
        CMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

impl Index<(usize, usize)> for CMat {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &CMat {
    type Output = CMat;
    fn mul(self, rhs: &CMat) -> CMat {
        assert_eq!(
            self.cols, rhs.rows,
            "matmul {}x{} by {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = CMat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        out
    }
}

impl Add for &CMat {
    type Output = CMat;
    fn add(self, rhs: &CMat) -> CMat {
        assert_eq!(self.shape(), rhs.shape(), "add shape mismatch");
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMat {
    type Output = CMat;
    fn sub(self, rhs: &CMat) -> CMat {
        assert_eq!(self.shape(), rhs.shape(), "sub shape mismatch");
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl AddAssign<&CMat> for CMat {
    fn add_assign(&mut self, rhs: &CMat) {
        assert_eq!(self.shape(), rhs.shape(), "add shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

impl Neg for &CMat {
    type Output = CMat;
    fn neg(self) -> CMat {
        self.scale_real(-1.0)
    }
}

impl fmt::Debug for CMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Sector decomposition of `0..total_dim` into labelled contiguous ranges.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisPartition {
    total_dim: usize,
    blocks: Vec<(String, Range<usize>)>,
}

impl BasisPartition {
    pub fn new(total_dim: usize, blocks: Vec<(String, Range<usize>)>) -> Result<Self> {
        let mut next = 0;
        for (label, range) in &blocks {
            if range.start != next || range.end <= range.start {
                return Err(Error::Shape(format!(
                    "block `{label}` ({range:?}) does not continue the partition at {next}"
                )));
            }
            next = range.end;
        }
        if next != total_dim {
            return Err(Error::Shape(format!(
                "partition covers 0..{next}, expected 0..{total_dim}"
            )));
        }
        Ok(Self { total_dim, blocks })
    }

    /// `count` equally sized sectors labelled by their index.
    pub fn uniform(count: usize, block_dim: usize) -> Result<Self> {
        let blocks = (0..count)
            .map(|i| (i.to_string(), i * block_dim..(i + 1) * block_dim))
            .collect();
        Self::new(count * block_dim, blocks)
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn blocks(&self) -> &[(String, Range<usize>)] {
        &self.blocks
    }

    fn block_of(&self) -> Vec<usize> {
        let mut owner = vec![0; self.total_dim];
        for (b, (_, range)) in self.blocks.iter().enumerate() {
            for i in range.clone() {
                owner[i] = b;
            }
        }
        owner
    }
}

fn check_cap(dim: usize, cap: usize) -> Result<()> {
    if dim > cap {
        Err(Error::Size { dim, cap })
    } else {
        Ok(())
    }
}

/// Kronecker product with the default dimension cap.
pub fn tensor(a: &CMat, b: &CMat) -> Result<CMat> {
    tensor_capped(a, b, DEFAULT_MAX_DIM)
}

/// Kronecker product; entry `((i,k),(j,l))` is `a(i,j)·b(k,l)`.
pub fn tensor_capped(a: &CMat, b: &CMat, cap: usize) -> Result<CMat> {
    let rows = a.rows.checked_mul(b.rows).unwrap_or(usize::MAX);
    let cols = a.cols.checked_mul(b.cols).unwrap_or(usize::MAX);
    check_cap(rows, cap)?;
    check_cap(cols, cap)?;
    let mut out = CMat::zeros(rows, cols);
    for i in 0..a.rows {
        for j in 0..a.cols {
            let s = a[(i, j)];
            if s == ZERO {
                continue;
            }
            for k in 0..b.rows {
                for l in 0..b.cols {
                    out[(i * b.rows + k, j * b.cols + l)] = s * b[(k, l)];
                }
            }
        }
    }
    Ok(out)
}

/// Kronecker product of a sequence, left to right.
pub fn tensor_all<'a>(factors: impl IntoIterator<Item = &'a CMat>) -> Result<CMat> {
    let mut acc = CMat::identity(1);
    for f in factors {
        acc = tensor(&acc, f)?;
    }
    Ok(acc)
}

/// `Σ_x Π_x m Π_x`: zeroes every entry connecting two different sectors.
pub fn pinch(m: &CMat, p: &BasisPartition) -> Result<CMat> {
    if !m.is_square() || m.rows != p.total_dim {
        return Err(Error::Shape(format!(
            "cannot pinch a {}x{} matrix with a partition of {}",
            m.rows, m.cols, p.total_dim
        )));
    }
    let owner = p.block_of();
    Ok(CMat::from_fn(m.rows, m.cols, |i, j| {
        if owner[i] == owner[j] {
            m[(i, j)]
        } else {
            ZERO
        }
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Keep {
    First,
    Second,
}

/// Partial trace of an operator on `C^dA ⊗ C^dB`, keeping one factor.
pub fn partial_trace(m: &CMat, (da, db): (usize, usize), keep: Keep) -> Result<CMat> {
    if !m.is_square() || m.rows != da * db {
        return Err(Error::Shape(format!(
            "partial trace of {}x{} over {da}x{db}",
            m.rows, m.cols
        )));
    }
    Ok(match keep {
        Keep::First => CMat::from_fn(da, da, |i, j| {
            (0..db).map(|k| m[(i * db + k, j * db + k)]).sum()
        }),
        Keep::Second => CMat::from_fn(db, db, |k, l| {
            (0..da).map(|i| m[(i * db + k, i * db + l)]).sum()
        }),
    })
}

/// `‖V*V - I‖` for a matrix with orthonormal columns.
pub fn isometry_defect(v: &CMat) -> f64 {
    residual(&(&(&v.adjoint() * v) - &CMat::identity(v.cols)))
}

/// `‖U*U - I‖` for a square matrix.
pub fn unitarity_defect(u: &CMat) -> f64 {
    if !u.is_square() {
        return f64::INFINITY;
    }
    isometry_defect(u)
}

/// Extends an isometry to a unitary whose leading columns are exactly `v`.
///
/// The completion is canonical: standard basis vectors are orthogonalised
/// against the columns gathered so far in index order, and a candidate is
/// kept when its residual exceeds `1/(2√n)`. Because the squared residuals
/// of all candidates sum to the missing dimension, the scan always collects
/// enough vectors.
pub fn complete_isometry(v: &CMat) -> Result<CMat> {
    let (n, k) = v.shape();
    if n < k {
        return Err(Error::Shape(format!("isometry {n}x{k} has more columns than rows")));
    }
    let defect = isometry_defect(v);
    if defect > tol::SOLVED {
        return Err(Error::NotIsometry { residual: defect });
    }
    let mut basis: Vec<Vec<C64>> = (0..k).map(|j| v.column(j)).collect();
    let keep = 0.5 / (n as f64).sqrt();
    for i in 0..n {
        if basis.len() == n {
            break;
        }
        let mut w = vec![ZERO; n];
        w[i] = ONE;
        // Two passes of classical Gram-Schmidt restore orthogonality lost to
        // cancellation.
        for _ in 0..2 {
            for b in &basis {
                let c: C64 = b.iter().zip(&w).map(|(x, y)| x.conj() * y).sum();
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= c * bi;
                }
            }
        }
        let norm = w.iter().map(C64::norm_sqr).sum::<f64>().sqrt();
        if norm > keep {
            w.iter_mut().for_each(|z| *z /= norm);
            basis.push(w);
        }
    }
    debug_assert_eq!(basis.len(), n);
    let mut u = CMat::from_fn(n, n, |i, j| basis[j][i]);
    // Leading columns are copied verbatim.
    for j in 0..k {
        for i in 0..n {
            u[(i, j)] = v[(i, j)];
        }
    }
    Ok(u)
}

/// The Frobenius norm, used uniformly as the measure of "= 0".
pub fn residual(m: &CMat) -> f64 {
    m.norm()
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    assert!(m.is_square());
    let herm = (m + &m.adjoint()).scale_real(0.5);
    let mut ev: Vec<f64> = herm.to_nalgebra().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// `½‖a − b‖₁` for Hermitian `a`, `b`.
pub fn trace_distance(a: &CMat, b: &CMat) -> f64 {
    0.5 * hermitian_eigenvalues(&(a - b)).iter().map(|x| x.abs()).sum::<f64>()
}

/// Orthonormal basis (as columns) of the nullspace of `m`, i.e. the right
/// singular vectors whose singular value is at most `cutoff`.
pub fn nullspace(m: &CMat, cutoff: f64) -> Vec<Vec<C64>> {
    let (r, c) = m.shape();
    // Pad to at least square so the SVD returns a full right basis.
    let padded = if r < c {
        let mut p = CMat::zeros(c, c);
        p.set_submatrix(0, 0, m);
        p
    } else {
        m.clone()
    };
    let svd = padded.to_nalgebra().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors were requested");
    svd.singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= cutoff)
        .map(|(idx, _)| (0..c).map(|j| v_t[(idx, j)].conj()).collect())
        .collect()
}
