//! Dense complex linear algebra substrate: operators, Hermitian
//! eigendecompositions with a deterministic ordering contract, operator
//! functions, norms, and tensor-leg utilities.
//!
//! Charge observables built from sums of single-site Z terms are diagonal in
//! the computational basis, so [`Operator`] also carries a real-diagonal
//! storage variant. All public operations accept either storage and agree
//! with the densified reference; densification past [`crate::tol::DENSE_DIM_CAP`]
//! is refused rather than attempted.

use num_complex::Complex64;
use thiserror::Error;

use crate::tol::{DENSE_DIM_CAP, HERM_TOL};

pub type C64 = Complex64;

pub const ONE: C64 = C64::new(1.0, 0.0);
pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("operator shape {found_rows}x{found_cols} does not match expected {rows}x{cols}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        found_rows: usize,
        found_cols: usize,
    },
    #[error("dimension mismatch in {op}: left is {lhs_rows}x{lhs_cols}, right is {rhs_rows}x{rhs_cols}")]
    DimMismatch {
        op: &'static str,
        lhs_rows: usize,
        lhs_cols: usize,
        rhs_rows: usize,
        rhs_cols: usize,
    },
    #[error("operator is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("operator is not hermitian: max |A - A^dag| = {residual:.3e}")]
    NotHermitian { residual: f64 },
    #[error("operator is not an isometry: max |V^dag V - 1| = {residual:.3e}")]
    NotIsometry { residual: f64 },
    #[error("operator is not positive semidefinite: min eigenvalue {eigenvalue:.3e}")]
    NotPsd { eigenvalue: f64 },
    #[error("function domain error at eigenvalue {eigenvalue:.6e}: {reason}")]
    Domain { eigenvalue: f64, reason: &'static str },
    #[error("refusing to densify a {rows}x{cols} operator (cap {cap})")]
    TooLarge { rows: usize, cols: usize, cap: usize },
    #[error("invalid tensor legs: dims product {product} != dimension {dim}")]
    BadLegs { product: usize, dim: usize },
    #[error("data length {len} does not fill a {rows}x{cols} operator")]
    BadLength { rows: usize, cols: usize, len: usize },
}

type Result<T> = std::result::Result<T, SpectralError>;

/// Verified structural properties, set only by the checking constructors.
/// Any arithmetic on an operator drops its tags.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tags {
    pub hermitian: bool,
    pub isometry: bool,
    pub unitary: bool,
    pub psd: bool,
}

#[derive(Debug, Clone)]
enum Storage {
    /// Row-major complex entries.
    Dense(Vec<C64>),
    /// Real diagonal; rows == cols.
    Diag(Vec<f64>),
}

/// A finite-dimensional linear map `C^{cols} -> C^{rows}` with dense or
/// real-diagonal storage. Columns double as state vectors (`cols == 1`).
#[derive(Debug, Clone)]
pub struct Operator {
    rows: usize,
    cols: usize,
    data: Storage,
    tags: Tags,
}

impl Operator {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Operator {
            rows,
            cols,
            data: Storage::Dense(vec![ZERO; rows * cols]),
            tags: Tags::default(),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Operator {
            rows: dim,
            cols: dim,
            data: Storage::Diag(vec![1.0; dim]),
            tags: Tags {
                hermitian: true,
                isometry: true,
                unitary: true,
                psd: true,
            },
        }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(SpectralError::BadLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Operator {
            rows,
            cols,
            data: Storage::Dense(data),
            tags: Tags::default(),
        })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Operator {
            rows,
            cols,
            data: Storage::Dense(data),
            tags: Tags::default(),
        }
    }

    /// Real diagonal operator; hermitian by construction.
    pub fn diagonal(diag: Vec<f64>) -> Self {
        let dim = diag.len();
        let psd = diag.iter().all(|&d| d >= 0.0);
        Operator {
            rows: dim,
            cols: dim,
            data: Storage::Diag(diag),
            tags: Tags {
                hermitian: true,
                psd,
                ..Tags::default()
            },
        }
    }

    /// Column vector from amplitudes.
    pub fn col_vector(amplitudes: Vec<C64>) -> Self {
        let rows = amplitudes.len();
        Operator {
            rows,
            cols: 1,
            data: Storage::Dense(amplitudes),
            tags: Tags::default(),
        }
    }

    /// Checking constructor: verifies `max |A - A^dag| <= HERM_TOL` and tags.
    pub fn hermitian(op: Operator) -> Result<Self> {
        let residual = op.hermiticity_residual()?;
        if residual > HERM_TOL {
            return Err(SpectralError::NotHermitian { residual });
        }
        let mut op = op;
        op.tags.hermitian = true;
        Ok(op)
    }

    /// Checking constructor: verifies `max |V^dag V - 1| <= tol` and tags.
    pub fn isometry(op: Operator, tol: f64) -> Result<Self> {
        let gram = op.adjoint().mul(&op)?;
        let residual = gram.sub(&Operator::identity(op.cols))?.max_abs();
        if residual > tol {
            return Err(SpectralError::NotIsometry { residual });
        }
        let mut op = op;
        op.tags.isometry = true;
        if op.rows == op.cols {
            op.tags.unitary = true;
        }
        Ok(op)
    }

    /// Checking constructor: hermitian with min eigenvalue >= -tol.
    pub fn psd(op: Operator, tol: f64) -> Result<Self> {
        let mut op = Operator::hermitian(op)?;
        let (lo, _) = spectral_bounds(&op)?;
        if lo < -tol {
            return Err(SpectralError::NotPsd { eigenvalue: lo });
        }
        op.tags.psd = true;
        Ok(op)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn tags(&self) -> Tags {
        self.tags
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_diag_storage(&self) -> bool {
        matches!(self.data, Storage::Diag(_))
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        debug_assert!(i < self.rows && j < self.cols);
        match &self.data {
            Storage::Dense(d) => d[i * self.cols + j],
            Storage::Diag(d) => {
                if i == j {
                    C64::new(d[i], 0.0)
                } else {
                    ZERO
                }
            }
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.tags = Tags::default();
        match &mut self.data {
            Storage::Dense(d) => d[i * self.cols + j] = v,
            Storage::Diag(_) => {
                self.densify_in_place();
                self.set(i, j, v);
            }
        }
    }

    fn densify_in_place(&mut self) {
        if let Storage::Diag(d) = &self.data {
            let mut dense = vec![ZERO; self.rows * self.cols];
            for (i, &v) in d.iter().enumerate() {
                dense[i * self.cols + i] = C64::new(v, 0.0);
            }
            self.data = Storage::Dense(dense);
        }
    }

    /// Dense copy; refuses square dimensions past the cap.
    pub fn to_dense(&self) -> Result<Operator> {
        if self.rows > DENSE_DIM_CAP && self.cols > DENSE_DIM_CAP {
            return Err(SpectralError::TooLarge {
                rows: self.rows,
                cols: self.cols,
                cap: DENSE_DIM_CAP,
            });
        }
        let mut out = self.clone();
        out.densify_in_place();
        Ok(out)
    }

    pub(crate) fn dense_slice(&self) -> Option<&[C64]> {
        match &self.data {
            Storage::Dense(d) => Some(d),
            Storage::Diag(_) => None,
        }
    }

    pub fn diag_slice(&self) -> Option<&[f64]> {
        match &self.data {
            Storage::Diag(d) => Some(d),
            Storage::Dense(_) => None,
        }
    }

    pub fn adjoint(&self) -> Operator {
        match &self.data {
            Storage::Diag(_) => self.clone(),
            Storage::Dense(d) => {
                let mut out = vec![ZERO; self.rows * self.cols];
                for i in 0..self.rows {
                    for j in 0..self.cols {
                        out[j * self.rows + i] = d[i * self.cols + j].conj();
                    }
                }
                Operator {
                    rows: self.cols,
                    cols: self.rows,
                    data: Storage::Dense(out),
                    tags: Tags {
                        hermitian: self.tags.hermitian,
                        ..Tags::default()
                    },
                }
            }
        }
    }

    pub fn transpose(&self) -> Operator {
        match &self.data {
            Storage::Diag(_) => self.clone(),
            Storage::Dense(d) => {
                let mut out = vec![ZERO; self.rows * self.cols];
                for i in 0..self.rows {
                    for j in 0..self.cols {
                        out[j * self.rows + i] = d[i * self.cols + j];
                    }
                }
                Operator {
                    rows: self.cols,
                    cols: self.rows,
                    data: Storage::Dense(out),
                    tags: Tags::default(),
                }
            }
        }
    }

    pub fn conj(&self) -> Operator {
        match &self.data {
            Storage::Diag(_) => self.clone(),
            Storage::Dense(d) => Operator {
                rows: self.rows,
                cols: self.cols,
                data: Storage::Dense(d.iter().map(|z| z.conj()).collect()),
                tags: Tags::default(),
            },
        }
    }

    pub fn mul(&self, rhs: &Operator) -> Result<Operator> {
        if self.cols != rhs.rows {
            return Err(SpectralError::DimMismatch {
                op: "mul",
                lhs_rows: self.rows,
                lhs_cols: self.cols,
                rhs_rows: rhs.rows,
                rhs_cols: rhs.cols,
            });
        }
        let out = match (&self.data, &rhs.data) {
            (Storage::Diag(a), Storage::Diag(b)) => {
                let d: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| x * y).collect();
                return Ok(Operator::diagonal(d));
            }
            (Storage::Diag(a), Storage::Dense(b)) => {
                let mut out = vec![ZERO; self.rows * rhs.cols];
                for i in 0..self.rows {
                    let scale = a[i];
                    for j in 0..rhs.cols {
                        out[i * rhs.cols + j] = b[i * rhs.cols + j] * scale;
                    }
                }
                out
            }
            (Storage::Dense(a), Storage::Diag(b)) => {
                let mut out = vec![ZERO; self.rows * rhs.cols];
                for i in 0..self.rows {
                    for j in 0..rhs.cols {
                        out[i * rhs.cols + j] = a[i * self.cols + j] * b[j];
                    }
                }
                out
            }
            (Storage::Dense(a), Storage::Dense(b)) => {
                let mut out = vec![ZERO; self.rows * rhs.cols];
                for i in 0..self.rows {
                    for k in 0..self.cols {
                        let aik = a[i * self.cols + k];
                        if aik == ZERO {
                            continue;
                        }
                        let brow = &b[k * rhs.cols..(k + 1) * rhs.cols];
                        let orow = &mut out[i * rhs.cols..(i + 1) * rhs.cols];
                        for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                            *o += aik * bv;
                        }
                    }
                }
                out
            }
        };
        Ok(Operator {
            rows: self.rows,
            cols: rhs.cols,
            data: Storage::Dense(out),
            tags: Tags::default(),
        })
    }

    pub fn add(&self, rhs: &Operator) -> Result<Operator> {
        self.zip(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Operator) -> Result<Operator> {
        self.zip(rhs, "sub", |a, b| a - b)
    }

    fn zip(&self, rhs: &Operator, op: &'static str, f: impl Fn(C64, C64) -> C64) -> Result<Operator> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(SpectralError::DimMismatch {
                op,
                lhs_rows: self.rows,
                lhs_cols: self.cols,
                rhs_rows: rhs.rows,
                rhs_cols: rhs.cols,
            });
        }
        if let (Storage::Diag(a), Storage::Diag(b)) = (&self.data, &rhs.data) {
            let d: Vec<f64> = a
                .iter()
                .zip(b.iter())
                .map(|(&x, &y)| f(C64::new(x, 0.0), C64::new(y, 0.0)).re)
                .collect();
            return Ok(Operator::diagonal(d));
        }
        let a = self.to_dense()?;
        let b = rhs.to_dense()?;
        let (da, db) = (a.dense_slice().unwrap(), b.dense_slice().unwrap());
        let out: Vec<C64> = da.iter().zip(db.iter()).map(|(&x, &y)| f(x, y)).collect();
        Ok(Operator {
            rows: self.rows,
            cols: self.cols,
            data: Storage::Dense(out),
            tags: Tags::default(),
        })
    }

    pub fn scale(&self, s: C64) -> Operator {
        match &self.data {
            Storage::Diag(d) if s.im == 0.0 => Operator::diagonal(d.iter().map(|&x| x * s.re).collect()),
            Storage::Diag(_) => {
                let mut dense = self.clone();
                dense.densify_in_place();
                dense.scale(s)
            }
            Storage::Dense(d) => Operator {
                rows: self.rows,
                cols: self.cols,
                data: Storage::Dense(d.iter().map(|&x| x * s).collect()),
                tags: Tags::default(),
            },
        }
    }

    pub fn scale_re(&self, s: f64) -> Operator {
        self.scale(C64::new(s, 0.0))
    }

    pub fn trace(&self) -> C64 {
        match &self.data {
            Storage::Diag(d) => C64::new(d.iter().sum(), 0.0),
            Storage::Dense(d) => {
                let n = self.rows.min(self.cols);
                (0..n).map(|i| d[i * self.cols + i]).sum()
            }
        }
    }

    /// Hilbert-Schmidt inner product `Tr(A^dag B)`.
    pub fn hs_inner(&self, rhs: &Operator) -> Result<C64> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(SpectralError::DimMismatch {
                op: "hs_inner",
                lhs_rows: self.rows,
                lhs_cols: self.cols,
                rhs_rows: rhs.rows,
                rhs_cols: rhs.cols,
            });
        }
        match (&self.data, &rhs.data) {
            (Storage::Dense(a), Storage::Dense(b)) => {
                Ok(a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum())
            }
            _ => {
                let a = self.to_dense()?;
                let b = rhs.to_dense()?;
                a.hs_inner(&b)
            }
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        match &self.data {
            Storage::Diag(d) => d.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Storage::Dense(d) => d.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        match &self.data {
            Storage::Diag(d) => d.iter().fold(0.0, |m, x| m.max(x.abs())),
            Storage::Dense(d) => d.iter().fold(0.0, |m, z| m.max(z.norm())),
        }
    }

    pub fn hermiticity_residual(&self) -> Result<f64> {
        if !self.is_square() {
            return Err(SpectralError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        match &self.data {
            Storage::Diag(_) => Ok(0.0),
            Storage::Dense(d) => {
                let mut worst = 0.0f64;
                for i in 0..self.rows {
                    for j in i..self.cols {
                        let r = (d[i * self.cols + j] - d[j * self.cols + i].conj()).norm();
                        worst = worst.max(r);
                    }
                }
                Ok(worst)
            }
        }
    }

    /// Column `j` as a vector operator.
    pub fn column(&self, j: usize) -> Operator {
        Operator::from_fn(self.rows, 1, |i, _| self.get(i, j))
    }

    /// Approximate entrywise equality within `tol`.
    pub fn approx_eq(&self, rhs: &Operator, tol: f64) -> bool {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return false;
        }
        match self.sub(rhs) {
            Ok(d) => d.max_abs() <= tol,
            Err(_) => false,
        }
    }
}

/// Kronecker product. Diagonal storage is preserved when both factors are
/// diagonal.
pub fn kron(a: &Operator, b: &Operator) -> Operator {
    if let (Some(da), Some(db)) = (a.diag_slice(), b.diag_slice()) {
        let mut d = Vec::with_capacity(da.len() * db.len());
        for &x in da {
            for &y in db {
                d.push(x * y);
            }
        }
        return Operator::diagonal(d);
    }
    let (ar, ac, br, bc) = (a.rows(), a.cols(), b.rows(), b.cols());
    Operator::from_fn(ar * br, ac * bc, |i, j| {
        a.get(i / br, j / bc) * b.get(i % br, j % bc)
    })
}

/// Partial trace of a square operator over the tensor legs not in `keep`.
/// `dims` lists the leg dimensions in tensor order; `keep` must be strictly
/// increasing leg indices.
pub fn partial_trace(a: &Operator, dims: &[usize], keep: &[usize]) -> Result<Operator> {
    let total: usize = dims.iter().product();
    if a.rows() != total || a.cols() != total {
        return Err(SpectralError::BadLegs {
            product: total,
            dim: a.rows(),
        });
    }
    debug_assert!(keep.windows(2).all(|w| w[0] < w[1]));
    let kept_dims: Vec<usize> = keep.iter().map(|&k| dims[k]).collect();
    let traced: Vec<usize> = (0..dims.len()).filter(|k| !keep.contains(k)).collect();
    let traced_dims: Vec<usize> = traced.iter().map(|&k| dims[k]).collect();
    let dk: usize = kept_dims.iter().product();
    let dt: usize = traced_dims.iter().product();

    // strides of each leg in the full index
    let mut strides = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    let encode = |legs: &[usize], idx: &[usize]| -> usize {
        legs.iter().zip(idx.iter()).map(|(&l, &i)| strides[l] * i).sum()
    };
    let decode = |mut x: usize, ds: &[usize]| -> Vec<usize> {
        let mut out = vec![0; ds.len()];
        for k in (0..ds.len()).rev() {
            out[k] = x % ds[k];
            x /= ds[k];
        }
        out
    };

    let mut out = Operator::zeros(dk, dk);
    for ik in 0..dk {
        let ik_idx = decode(ik, &kept_dims);
        let row_base = encode(keep, &ik_idx);
        for jk in 0..dk {
            let jk_idx = decode(jk, &kept_dims);
            let col_base = encode(keep, &jk_idx);
            let mut acc = ZERO;
            for t in 0..dt {
                let t_idx = decode(t, &traced_dims);
                let off = encode(&traced, &t_idx);
                acc += a.get(row_base + off, col_base + off);
            }
            out.set(ik, jk, acc);
        }
    }
    Ok(out)
}

/// Eigendecomposition of a hermitian operator with deterministic ordering:
/// eigenvalues ascending; exact ties broken by lexicographic comparison of
/// the phase-normalized eigenvector entries (first entry of significant
/// magnitude made real positive).
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vec<f64>,
    /// Columns are the ordered eigenvectors.
    pub vectors: Operator,
}

impl Spectrum {
    /// Reassemble `V f(Lambda) V^dag` for a complex-valued spectral function.
    pub fn assemble(&self, f: impl Fn(f64) -> C64) -> Operator {
        let n = self.values.len();
        let v = &self.vectors;
        let mut out = Operator::zeros(n, n);
        for k in 0..n {
            let fk = f(self.values[k]);
            if fk == ZERO {
                continue;
            }
            for i in 0..n {
                let vik = v.get(i, k);
                if vik == ZERO {
                    continue;
                }
                for j in 0..n {
                    let cur = out.get(i, j);
                    out.set(i, j, cur + fk * vik * v.get(j, k).conj());
                }
            }
        }
        out
    }
}

fn phase_normalize(col: &mut [C64]) {
    let maxmag = col.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if maxmag == 0.0 {
        return;
    }
    let thresh = maxmag * 1e-12;
    if let Some(z) = col.iter().find(|z| z.norm() > thresh) {
        let phase = z.conj() / z.norm();
        for v in col.iter_mut() {
            *v *= phase;
        }
    }
}

fn lex_less(a: &[C64], b: &[C64]) -> bool {
    for (x, y) in a.iter().zip(b.iter()) {
        if x.re != y.re {
            return x.re < y.re;
        }
        if x.im != y.im {
            return x.im < y.im;
        }
    }
    false
}

/// Hermitian eigendecomposition. The input must be square with hermiticity
/// residual within `HERM_TOL`; diagonal storage takes an exact path. Dense
/// input is split into connected components of its numerical support
/// pattern and each component is solved by the QL iteration; a component
/// whose eigenpairs fail the residual check `H v = lambda v` is re-solved
/// by cyclic Jacobi rotations, which are slower but unconditionally
/// convergent (the QL path can silently mispair vectors on structured
/// degenerate spectra).
pub fn eigh(h: &Operator) -> Result<Spectrum> {
    let residual = h.hermiticity_residual()?;
    if residual > HERM_TOL {
        return Err(SpectralError::NotHermitian { residual });
    }
    let n = h.rows();
    if let Some(d) = h.diag_slice() {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap().then(a.cmp(&b)));
        let values: Vec<f64> = order.iter().map(|&i| d[i]).collect();
        let vectors = Operator::from_fn(n, n, |i, j| if i == order[j] { ONE } else { ZERO });
        return Ok(Spectrum { values, vectors });
    }

    let dense = h.to_dense()?;
    let slice = dense.dense_slice().unwrap();
    let scale = slice.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let mut cols: Vec<(f64, Vec<C64>)> = Vec::with_capacity(n);
    if scale == 0.0 {
        for k in 0..n {
            let mut col = vec![ZERO; n];
            col[k] = ONE;
            cols.push((0.0, col));
        }
    } else {
        for comp in support_components(slice, n, scale * 1e-13) {
            solve_component(slice, n, &comp, scale, &mut cols);
        }
    }
    for (_, col) in cols.iter_mut() {
        phase_normalize(col);
    }
    cols.sort_by(|a, b| {
        a.0.partial_cmp(&b.0).unwrap().then_with(|| {
            if lex_less(&a.1, &b.1) {
                std::cmp::Ordering::Less
            } else if lex_less(&b.1, &a.1) {
                std::cmp::Ordering::Greater
            } else {
                std::cmp::Ordering::Equal
            }
        })
    });

    let values: Vec<f64> = cols.iter().map(|c| c.0).collect();
    let vectors = Operator::from_fn(n, n, |i, j| cols[j].1[i]);
    Ok(Spectrum { values, vectors })
}

/// Connected components of the support graph `|H[i,j]| > tol`, each sorted
/// ascending, emitted in order of their smallest index.
fn support_components(slice: &[C64], n: usize, tol: f64) -> Vec<Vec<usize>> {
    let mut seen = vec![false; n];
    let mut comps = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut comp = Vec::new();
        while let Some(i) = stack.pop() {
            comp.push(i);
            for j in 0..n {
                if !seen[j] && slice[i * n + j].norm() > tol {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps
}

fn solve_component(
    slice: &[C64],
    n: usize,
    comp: &[usize],
    scale: f64,
    out: &mut Vec<(f64, Vec<C64>)>,
) {
    let m = comp.len();
    if m == 1 {
        let mut col = vec![ZERO; n];
        col[comp[0]] = ONE;
        out.push((slice[comp[0] * n + comp[0]].re, col));
        return;
    }
    let sub = nalgebra::DMatrix::<C64>::from_fn(m, m, |i, j| slice[comp[i] * n + comp[j]]);
    let se = sub.clone().symmetric_eigen();
    let hv = &sub * &se.eigenvectors;
    let mut worst = 0.0f64;
    for k in 0..m {
        for i in 0..m {
            worst = worst.max((hv[(i, k)] - se.eigenvectors[(i, k)].scale(se.eigenvalues[k])).norm());
        }
    }
    if worst <= (1.0 + scale) * 1e-8 {
        for k in 0..m {
            let mut col = vec![ZERO; n];
            for i in 0..m {
                col[comp[i]] = se.eigenvectors[(i, k)];
            }
            out.push((se.eigenvalues[k], col));
        }
        return;
    }
    let (vals, vecs) = jacobi_eigh(&sub);
    for k in 0..m {
        let mut col = vec![ZERO; n];
        for i in 0..m {
            col[comp[i]] = vecs[i * m + k];
        }
        out.push((vals[k], col));
    }
}

/// Cyclic Jacobi diagonalization of a hermitian matrix: two-sided unitary
/// plane rotations annihilate the largest off-diagonal entries each sweep.
/// Returns unsorted eigenvalues and the matching eigenvector columns
/// (row-major `m x m`).
fn jacobi_eigh(sub: &nalgebra::DMatrix<C64>) -> (Vec<f64>, Vec<C64>) {
    let m = sub.nrows();
    let mut a: Vec<C64> = (0..m * m).map(|idx| sub[(idx / m, idx % m)]).collect();
    let mut v = vec![ZERO; m * m];
    for i in 0..m {
        v[i * m + i] = ONE;
    }
    let scale = a.iter().fold(0.0f64, |mx, z| mx.max(z.norm()));
    if scale > 0.0 {
        for _sweep in 0..128 {
            let mut off = 0.0f64;
            for p in 0..m {
                for q in (p + 1)..m {
                    off = off.max(a[p * m + q].norm());
                }
            }
            if off <= scale * 1e-14 {
                break;
            }
            let thresh = (off * 1e-2).max(scale * 1e-14);
            for p in 0..m {
                for q in (p + 1)..m {
                    let apq = a[p * m + q];
                    let mag = apq.norm();
                    if mag < thresh {
                        continue;
                    }
                    let phase = apq.unscale(mag);
                    let theta = (a[q * m + q].re - a[p * m + p].re) / (2.0 * mag);
                    // Smaller-magnitude root of t^2 - 2 theta t - 1 = 0, the value
                    // that makes this rotation convention annihilate a[p][q].
                    let t = if theta >= 0.0 {
                        -1.0 / (theta + (theta * theta + 1.0).sqrt())
                    } else {
                        1.0 / (-theta + (theta * theta + 1.0).sqrt())
                    };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    let spc = phase.conj().scale(s);
                    let sp = phase.scale(s);
                    for i in 0..m {
                        let aip = a[i * m + p];
                        let aiq = a[i * m + q];
                        a[i * m + p] = aip.scale(c) + aiq * spc;
                        a[i * m + q] = aiq.scale(c) * phase.conj() - aip.scale(s);
                        let vip = v[i * m + p];
                        let viq = v[i * m + q];
                        v[i * m + p] = vip.scale(c) + viq * spc;
                        v[i * m + q] = viq.scale(c) * phase.conj() - vip.scale(s);
                    }
                    for j in 0..m {
                        let apj = a[p * m + j];
                        let aqj = a[q * m + j];
                        a[p * m + j] = apj.scale(c) + aqj * sp;
                        a[q * m + j] = aqj.scale(c) * phase - apj.scale(s);
                    }
                    a[p * m + q] = ZERO;
                    a[q * m + p] = ZERO;
                    a[p * m + p] = C64::new(a[p * m + p].re, 0.0);
                    a[q * m + q] = C64::new(a[q * m + q].re, 0.0);
                }
            }
        }
    }
    let vals = (0..m).map(|k| a[k * m + k].re).collect();
    (vals, v)
}

/// Min and max eigenvalue of a hermitian operator.
pub fn spectral_bounds(h: &Operator) -> Result<(f64, f64)> {
    if let Some(d) = h.diag_slice() {
        if d.is_empty() {
            return Ok((0.0, 0.0));
        }
        let lo = d.iter().fold(f64::INFINITY, |m, &x| m.min(x));
        let hi = d.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        return Ok((lo, hi));
    }
    let s = eigh(h)?;
    Ok((s.values[0], s.values[s.values.len() - 1]))
}

/// Spectral range `lambda_max - lambda_min` of a hermitian operator.
pub fn spectral_range(h: &Operator) -> Result<f64> {
    let (lo, hi) = spectral_bounds(h)?;
    Ok(hi - lo)
}

/// Apply a real scalar function through the eigendecomposition:
/// `herm_func(H, f) = V f(Lambda) V^dag`.
pub fn herm_func(h: &Operator, f: impl Fn(f64) -> f64) -> Result<Operator> {
    let s = eigh(h)?;
    if h.is_diag_storage() {
        let d = h.diag_slice().unwrap();
        return Ok(Operator::diagonal(d.iter().map(|&x| f(x)).collect()));
    }
    Ok(s.assemble(|x| C64::new(f(x), 0.0)))
}

/// Principal square root of a positive semidefinite operator. Eigenvalues in
/// `[-1e-10, 0)` are clipped to zero; anything below is a domain error that
/// reports the offending eigenvalue.
pub fn sqrt_psd(h: &Operator) -> Result<Operator> {
    let s = eigh(h)?;
    for &v in &s.values {
        if v < -1e-10 {
            return Err(SpectralError::Domain {
                eigenvalue: v,
                reason: "square root of a negative eigenvalue",
            });
        }
    }
    Ok(s.assemble(|x| C64::new(x.max(0.0).sqrt(), 0.0)))
}

/// Moore-Penrose pseudoinverse of a hermitian operator. Eigenvalues with
/// magnitude at most `rel_tol * max|eig|` are treated as zero.
pub fn pinv_herm(h: &Operator, rel_tol: f64) -> Result<Operator> {
    let s = eigh(h)?;
    let scale = s.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let cut = scale * rel_tol;
    Ok(s.assemble(|x| {
        if x.abs() <= cut {
            ZERO
        } else {
            C64::new(1.0 / x, 0.0)
        }
    }))
}

/// `exp(i t H)` for hermitian `H`.
pub fn herm_unitary_exp(h: &Operator, t: f64) -> Result<Operator> {
    if let Some(d) = h.diag_slice() {
        return Ok(Operator::from_fn(h.rows(), h.rows(), |i, j| {
            if i == j {
                C64::from_polar(1.0, t * d[i])
            } else {
                ZERO
            }
        }));
    }
    let s = eigh(h)?;
    Ok(s.assemble(|x| C64::from_polar(1.0, t * x)))
}

/// Singular values of an arbitrary operator, descending. Computed from the
/// hermitian block embedding `[[0, A], [A^dag, 0]]`, whose spectrum is the
/// +/- singular value pairs; this keeps full precision for small singular
/// values where the `A^dag A` route loses half the digits.
pub fn singular_values(a: &Operator) -> Result<Vec<f64>> {
    let (r, c) = (a.rows(), a.cols());
    let n = r + c;
    let mut block = Operator::zeros(n, n);
    for i in 0..r {
        for j in 0..c {
            let v = a.get(i, j);
            block.set(i, r + j, v);
            block.set(r + j, i, v.conj());
        }
    }
    let s = eigh(&Operator::hermitian(symmetrize(&block))?)?;
    let mut sv: Vec<f64> = s.values.iter().rev().filter(|&&v| v > 0.0).copied().collect();
    sv.resize(r.min(c), 0.0);
    Ok(sv)
}

/// Trace norm (sum of singular values).
pub fn trace_norm(a: &Operator) -> Result<f64> {
    Ok(singular_values(a)?.iter().sum())
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(a: &Operator) -> Result<f64> {
    Ok(singular_values(a)?.first().copied().unwrap_or(0.0))
}

/// Force exact hermiticity by averaging with the adjoint. Used to absorb
/// roundoff before checking constructors.
pub fn symmetrize(a: &Operator) -> Operator {
    a.add(&a.adjoint()).expect("square operator").scale_re(0.5)
}

/// Select the rows of `a` whose multi-index over `dims` (row-major, leftmost
/// factor most significant) has value `idx` on tensor leg `leg`. The result
/// is `<idx|_leg a` with the remaining legs kept in order, so row count
/// shrinks by a factor of `dims[leg]`.
pub fn fix_row_leg(a: &Operator, dims: &[usize], leg: usize, idx: usize) -> Result<Operator> {
    let total: usize = dims.iter().product();
    if a.rows() != total || leg >= dims.len() || idx >= dims[leg] {
        return Err(SpectralError::BadLegs {
            product: total,
            dim: a.rows(),
        });
    }
    let inner: usize = dims[leg + 1..].iter().product();
    let outer_stride = inner * dims[leg];
    let kept = total / dims[leg];
    let mut out = Operator::zeros(kept, a.cols());
    for r_out in 0..kept {
        let hi = r_out / inner;
        let lo = r_out % inner;
        let r_in = hi * outer_stride + idx * inner + lo;
        for c in 0..a.cols() {
            let v = a.get(r_in, c);
            if v != ZERO {
                out.set(r_out, c, v);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mul_diag_paths_agree_with_dense() {
        let d = Operator::diagonal(vec![2.0, -1.0, 0.5]);
        let a = Operator::from_fn(3, 3, |i, j| C64::new((i + 2 * j) as f64, (i * j) as f64));
        let dd = d.to_dense().unwrap();
        let left = d.mul(&a).unwrap();
        let left_ref = dd.mul(&a).unwrap();
        assert!(left.approx_eq(&left_ref, 1e-14));
        let right = a.mul(&d).unwrap();
        let right_ref = a.mul(&dd).unwrap();
        assert!(right.approx_eq(&right_ref, 1e-14));
    }

    #[test]
    fn eigh_orders_ascending_and_deterministically() {
        let h = Operator::diagonal(vec![3.0, 1.0, 2.0]);
        let s = eigh(&h).unwrap();
        assert_eq!(s.values, vec![1.0, 2.0, 3.0]);
        // identity has a fully degenerate spectrum; two calls must agree bitwise
        let id = Operator::identity(4).to_dense().unwrap();
        let s1 = eigh(&id).unwrap();
        let s2 = eigh(&id).unwrap();
        assert!(s1.vectors.approx_eq(&s2.vectors, 0.0));
    }

    #[test]
    fn partial_trace_of_kron_factorizes() {
        let a = Operator::from_fn(2, 2, |i, j| C64::new((i + j) as f64, 1.0 - j as f64));
        let b = Operator::from_fn(3, 3, |i, j| C64::new((2 * i) as f64 - j as f64, 0.5));
        let ab = kron(&a, &b);
        let got = partial_trace(&ab, &[2, 3], &[0]).unwrap();
        let want = a.scale(b.trace());
        assert!(got.approx_eq(&want, 1e-12));
        let got_b = partial_trace(&ab, &[2, 3], &[1]).unwrap();
        let want_b = b.scale(a.trace());
        assert!(got_b.approx_eq(&want_b, 1e-12));
    }
}
