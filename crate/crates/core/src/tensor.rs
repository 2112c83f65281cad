//! Dense complex matrices over tensor-product index structures.
//!
//! Factors of a multipartite operator are always ordered site-major,
//! setting-minor: `H_1^(1), …, H_1^(S_1), H_2^(1), …, H_N^(S_N)`. All slot
//! arithmetic goes through [`FactorShape`].

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Default cap on the row/column count of any operator built by the crate.
pub const DEFAULT_DIM_CAP: usize = 4096;

/// Relative tolerance for the Hermiticity check.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Relative off-diagonal mass at which the Jacobi sweep stops.
const JACOBI_TOL: f64 = 1e-13;
const JACOBI_MAX_SWEEPS: usize = 80;

/// Dimension cap, read once from `LQHV_DIM_CAP` (falls back to
/// [`DEFAULT_DIM_CAP`]).
pub fn dim_cap() -> usize {
    static CAP: OnceLock<usize> = OnceLock::new();
    *CAP.get_or_init(|| {
        std::env::var("LQHV_DIM_CAP")
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&v| v > 0)
            .unwrap_or(DEFAULT_DIM_CAP)
    })
}

/// Product of `dims` with overflow and cap checking.
pub(crate) fn checked_product(what: &'static str, dims: &[usize]) -> Result<usize> {
    let cap = dim_cap();
    let mut acc: usize = 1;
    for &d in dims {
        acc = acc.checked_mul(d).ok_or(Error::Size {
            what,
            size: usize::MAX,
            cap,
        })?;
        if acc > cap {
            return Err(Error::Size {
                what,
                size: acc,
                cap,
            });
        }
    }
    Ok(acc)
}

/// Dense row-major complex matrix.
#[derive(Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "crate::io::MatrixJson", into = "crate::io::MatrixJson")]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(16) {
            write!(f, "  ")?;
            for c in 0..self.cols.min(16) {
                let z = self[(r, c)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("matrix must be non-empty, got {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

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
            m.data[i * n + i] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_real(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        Self::new(rows, cols, values.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    pub fn diag_real(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * n + i] = C64::new(v, 0.0);
        }
        m
    }

    /// `|v⟩⟨w|`.
    pub fn outer(v: &[C64], w: &[C64]) -> Self {
        Self::from_fn(v.len(), w.len(), |r, c| v[r] * w[c].conj())
    }

    /// `|v⟩⟨v|`, without normalization.
    pub fn projector(v: &[C64]) -> Self {
        Self::outer(v, v)
    }

    /// Matrix unit `|a⟩⟨b|` in dimension `d`.
    pub fn unit(d: usize, a: usize, b: usize) -> Self {
        let mut m = Self::zeros(d, d);
        m.data[a * d + b] = ONE;
        m
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

    /// Row count of a square matrix.
    pub fn dim(&self) -> usize {
        self.rows
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn scale(&self, k: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * k).collect(),
        }
    }

    pub fn scale_real(&self, k: f64) -> Self {
        self.scale(C64::new(k, 0.0))
    }

    /// `self += k · other`.
    pub fn add_scaled(&mut self, other: &Self, k: C64) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch in add_scaled");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b * k;
        }
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let orow = &mut out.data[r * other.cols..(r + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn apply(&self, v: &[C64]) -> Result<Vec<C64>> {
        if v.len() != self.cols {
            return Err(Error::Shape(format!(
                "vector of length {} for {}x{} matrix",
                v.len(),
                self.rows,
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|r| {
                self.data[r * self.cols..(r + 1) * self.cols]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect())
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self.data[i * self.cols + i]).sum()
    }

    /// `tr[self · other]` without forming the product.
    pub fn trace_product(&self, other: &Self) -> Result<C64> {
        if self.cols != other.rows || self.rows != other.cols {
            return Err(Error::Shape(format!(
                "tr[AB] needs matching shapes, got {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut acc = ZERO;
        for r in 0..self.rows {
            for c in 0..self.cols {
                acc += self.data[r * self.cols + c] * other.data[c * other.cols + r];
            }
        }
        Ok(acc)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `max |A - A†|`.
    pub fn hermitian_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut dev: f64 = 0.0;
        for r in 0..n {
            for c in r..n {
                dev = dev.max((self.data[r * n + c] - self.data[c * n + r].conj()).norm());
            }
        }
        dev
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian_deviation() <= HERMITIAN_TOL * self.max_abs().max(1.0)
    }

    /// `(A + A†)/2`.
    pub fn hermitian_part(&self) -> Self {
        let n = self.rows;
        Self::from_fn(n, n, |r, c| (self.data[r * n + c] + self.data[c * n + r].conj()) * 0.5)
    }

    /// Symmetrized copy after checking the relative Hermiticity tolerance.
    pub fn checked_hermitian(&self) -> Result<Self> {
        let tolerance = HERMITIAN_TOL * self.max_abs().max(1.0);
        let deviation = self.hermitian_deviation();
        if !(deviation <= tolerance) {
            return Err(Error::Hermiticity {
                deviation,
                tolerance,
            });
        }
        Ok(self.hermitian_part())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `⟨v|A|v⟩`.
    pub fn expectation(&self, v: &[C64]) -> Result<C64> {
        let av = self.apply(v)?;
        Ok(v.iter().zip(&av).map(|(a, b)| a.conj() * b).sum())
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.cols + c]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        let mut out = self.clone();
        out.add_scaled(rhs, ONE);
        out
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        let mut out = self.clone();
        out.add_scaled(rhs, -ONE);
        out
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs).expect("shape mismatch in matrix product")
    }
}

/// Hilbert dimension per site and number of copies (settings) per site.
#[derive(Debug, Clone, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "crate::io::ShapeJson", into = "crate::io::ShapeJson")]
pub struct FactorShape {
    site_dims: Vec<usize>,
    multiplicities: Vec<usize>,
}

impl FactorShape {
    pub fn new(site_dims: Vec<usize>, multiplicities: Vec<usize>) -> Result<Self> {
        if site_dims.is_empty() {
            return Err(Error::Shape("a factor shape needs at least one site".into()));
        }
        if site_dims.len() != multiplicities.len() {
            return Err(Error::Shape(format!(
                "{} site dimensions but {} multiplicities",
                site_dims.len(),
                multiplicities.len()
            )));
        }
        if site_dims.iter().chain(&multiplicities).any(|&x| x == 0) {
            return Err(Error::Shape("site dimensions and multiplicities must be >= 1".into()));
        }
        Ok(Self {
            site_dims,
            multiplicities,
        })
    }

    /// One copy of each site.
    pub fn single(site_dims: Vec<usize>) -> Result<Self> {
        let n = site_dims.len();
        Self::new(site_dims, vec![1; n])
    }

    pub fn site_dims(&self) -> &[usize] {
        &self.site_dims
    }

    pub fn multiplicities(&self) -> &[usize] {
        &self.multiplicities
    }

    pub fn num_sites(&self) -> usize {
        self.site_dims.len()
    }

    pub fn num_slots(&self) -> usize {
        self.multiplicities.iter().sum()
    }

    /// Hilbert dimension of each slot, site-major.
    pub fn slot_dims(&self) -> Vec<usize> {
        self.site_dims
            .iter()
            .zip(&self.multiplicities)
            .flat_map(|(&d, &s)| std::iter::repeat_n(d, s))
            .collect()
    }

    /// Flat slot index of `(site, setting)`.
    pub fn slot(&self, site: usize, setting: usize) -> Result<usize> {
        if site >= self.num_sites() || setting >= self.multiplicities[site] {
            return Err(Error::Shape(format!(
                "slot (site {site}, setting {setting}) outside shape {:?}/{:?}",
                self.site_dims, self.multiplicities
            )));
        }
        Ok(self.multiplicities[..site].iter().sum::<usize>() + setting)
    }

    /// `∏ d_n^{S_n}`, checked against the dimension cap.
    pub fn total_dim(&self) -> Result<usize> {
        checked_product("factor shape dimension", &self.slot_dims())
    }
}

/// Strides of a row-major multi-index with the given factor dimensions.
fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

/// Flat offsets of every multi-index over `which` factors, embedded in the
/// full index with `full_strides`.
fn sub_offsets(dims: &[usize], full_strides: &[usize], which: &[usize]) -> Vec<usize> {
    let mut offsets = vec![0usize];
    for &f in which {
        let mut next = Vec::with_capacity(offsets.len() * dims[f]);
        for &o in &offsets {
            for a in 0..dims[f] {
                next.push(o + a * full_strides[f]);
            }
        }
        offsets = next;
    }
    offsets
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let rows = checked_product("Kronecker product", &[a.rows, b.rows])?;
    let cols = checked_product("Kronecker product", &[a.cols, b.cols])?;
    let mut out = ComplexMatrix::zeros(rows, cols);
    for ar in 0..a.rows {
        for ac in 0..a.cols {
            let x = a[(ar, ac)];
            if x == ZERO {
                continue;
            }
            for br in 0..b.rows {
                let row = ar * b.rows + br;
                let dst = &mut out.data[row * cols + ac * b.cols..row * cols + (ac + 1) * b.cols];
                let src = &b.data[br * b.cols..(br + 1) * b.cols];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = x * s;
                }
            }
        }
    }
    Ok(out)
}

pub fn kron_all<'a>(factors: impl IntoIterator<Item = &'a ComplexMatrix>) -> Result<ComplexMatrix> {
    let mut acc: Option<ComplexMatrix> = None;
    for f in factors {
        acc = Some(match acc {
            None => f.clone(),
            Some(m) => kron(&m, f)?,
        });
    }
    acc.ok_or_else(|| Error::Argument("empty Kronecker product".into()))
}

/// `a^{⊗k}`; the 0-th power is the 1×1 identity.
pub fn kron_power(a: &ComplexMatrix, k: usize) -> Result<ComplexMatrix> {
    let mut acc = ComplexMatrix::identity(1);
    for _ in 0..k {
        acc = kron(&acc, a)?;
    }
    Ok(acc)
}

/// Identity-padded operator carrying `x` at slot `(site, setting)`.
pub fn embed_at_slot(
    x: &ComplexMatrix,
    shape: &FactorShape,
    site: usize,
    setting: usize,
) -> Result<ComplexMatrix> {
    let slot = shape.slot(site, setting)?;
    let dims = shape.slot_dims();
    if x.rows() != dims[slot] || x.cols() != dims[slot] {
        return Err(Error::Shape(format!(
            "slot ({site}, {setting}) has dimension {}, operator is {}x{}",
            dims[slot],
            x.rows(),
            x.cols()
        )));
    }
    shape.total_dim()?;
    let left: usize = dims[..slot].iter().product();
    let right: usize = dims[slot + 1..].iter().product();
    let inner = kron(x, &ComplexMatrix::identity(right))?;
    kron(&ComplexMatrix::identity(left), &inner)
}

fn check_square_dims(w: &ComplexMatrix, dims: &[usize]) -> Result<()> {
    let total: usize = dims.iter().product();
    if !w.is_square() || w.rows() != total {
        return Err(Error::Shape(format!(
            "operator is {}x{}, factor dimensions {:?} give {}",
            w.rows(),
            w.cols(),
            dims,
            total
        )));
    }
    Ok(())
}

/// Partial trace over every slot not in `keep`; kept slots stay in order.
pub fn partial_trace(w: &ComplexMatrix, shape: &FactorShape, keep: &[usize]) -> Result<ComplexMatrix> {
    partial_trace_dims(w, &shape.slot_dims(), keep)
}

/// [`partial_trace`] over an explicit list of factor dimensions.
pub fn partial_trace_dims(w: &ComplexMatrix, dims: &[usize], keep: &[usize]) -> Result<ComplexMatrix> {
    check_square_dims(w, dims)?;
    if keep.is_empty() {
        return Err(Error::Argument("partial trace needs a nonempty keep set".into()));
    }
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if let Some(&bad) = kept.iter().find(|&&k| k >= dims.len()) {
        return Err(Error::Argument(format!("slot {bad} out of range for {} slots", dims.len())));
    }
    let traced: Vec<usize> = (0..dims.len()).filter(|i| !kept.contains(i)).collect();
    let st = strides(dims);
    let keep_off = sub_offsets(dims, &st, &kept);
    let trace_off = sub_offsets(dims, &st, &traced);
    let n = keep_off.len();
    let full = w.cols();
    let mut out = ComplexMatrix::zeros(n, n);
    for (r, &ro) in keep_off.iter().enumerate() {
        for (c, &co) in keep_off.iter().enumerate() {
            let mut acc = ZERO;
            for &t in &trace_off {
                acc += w.data[(ro + t) * full + co + t];
            }
            out.data[r * n + c] = acc;
        }
    }
    Ok(out)
}

/// `tr_slot[W (I ⊗ K ⊗ I)]`: contracts one factor against `k`, removing it.
pub fn contract_slot(w: &ComplexMatrix, dims: &[usize], slot: usize, k: &ComplexMatrix) -> Result<ComplexMatrix> {
    check_square_dims(w, dims)?;
    if slot >= dims.len() {
        return Err(Error::Argument(format!("slot {slot} out of range for {} slots", dims.len())));
    }
    let d = dims[slot];
    if k.rows() != d || k.cols() != d {
        return Err(Error::Shape(format!(
            "slot {slot} has dimension {d}, contraction operator is {}x{}",
            k.rows(),
            k.cols()
        )));
    }
    let st = strides(dims);
    let rest: Vec<usize> = (0..dims.len()).filter(|&i| i != slot).collect();
    let rest_off = sub_offsets(dims, &st, &rest);
    let s = st[slot];
    let full = w.cols();
    let n = rest_off.len();
    let mut out = ComplexMatrix::zeros(n, n);
    for (r, &ro) in rest_off.iter().enumerate() {
        for (c, &co) in rest_off.iter().enumerate() {
            let mut acc = ZERO;
            for a in 0..d {
                let row = (ro + a * s) * full + co;
                for b in 0..d {
                    let kv = k.data[b * d + a];
                    if kv != ZERO {
                        acc += w.data[row + b * s] * kv;
                    }
                }
            }
            out.data[r * n + c] = acc;
        }
    }
    Ok(out)
}

/// `tr[W (E_1(k_1) ⊗ … ⊗ E_m(k_m))]` for every index tuple, row-major with
/// the first factor most significant. `effects[j]` lists the operators
/// available on factor `j`.
pub fn effect_table(w: &ComplexMatrix, dims: &[usize], effects: &[&[ComplexMatrix]]) -> Result<Vec<C64>> {
    check_square_dims(w, dims)?;
    if effects.len() != dims.len() {
        return Err(Error::Shape(format!("{} effect lists for {} factors", effects.len(), dims.len())));
    }
    if dims.is_empty() {
        return Ok(vec![w[(0, 0)]]);
    }
    let last = dims.len() - 1;
    let k = effects[last].len();
    let mut out = Vec::new();
    for (idx, e) in effects[last].iter().enumerate() {
        let sub = contract_slot(w, dims, last, e)?;
        let table = effect_table(&sub, &dims[..last], &effects[..last])?;
        if out.is_empty() {
            out = vec![ZERO; table.len() * k];
        }
        for (i, v) in table.into_iter().enumerate() {
            out[i * k + idx] = v;
        }
    }
    Ok(out)
}

/// Reorders tensor factors: factor `i` of the result is factor `perm[i]` of `m`.
pub fn permute_factors(m: &ComplexMatrix, dims: &[usize], perm: &[usize]) -> Result<ComplexMatrix> {
    check_square_dims(m, dims)?;
    let mut seen = vec![false; dims.len()];
    if perm.len() != dims.len() || perm.iter().any(|&p| p >= dims.len() || std::mem::replace(&mut seen[p], true)) {
        return Err(Error::Argument(format!("{perm:?} is not a permutation of {} factors", dims.len())));
    }
    let st = strides(dims);
    let map = sub_offsets(dims, &st, perm);
    let n = m.rows();
    Ok(ComplexMatrix::from_fn(n, n, |r, c| m.data[map[r] * n + map[c]]))
}

/// Eigenvalues (descending) and matching eigenvector columns.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    pub fn vector(&self, i: usize) -> Vec<C64> {
        let n = self.vectors.rows();
        (0..n).map(|r| self.vectors[(r, i)]).collect()
    }

    /// `V f(Λ) V†`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let n = self.vectors.rows();
        let fv: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let v = &self.vectors;
        ComplexMatrix::from_fn(n, n, |r, c| {
            let mut acc = ZERO;
            for (k, &w) in fv.iter().enumerate() {
                if w != 0.0 {
                    acc += v[(r, k)] * v[(c, k)].conj() * w;
                }
            }
            acc
        })
    }
}

/// Cyclic Jacobi sweeps on a Hermitian matrix. Returns unsorted eigenvalues
/// and, when requested, the accumulated rotation matrix.
fn jacobi(a: &ComplexMatrix, want_vectors: bool) -> (Vec<f64>, Option<ComplexMatrix>) {
    let n = a.rows();
    let mut m = a.data.clone();
    let mut v = want_vectors.then(|| ComplexMatrix::identity(n).data);
    let scale = a.frobenius_norm();
    if n == 1 || scale == 0.0 {
        let vals = (0..n).map(|i| m[i * n + i].re).collect();
        return (vals, v.map(|d| ComplexMatrix { rows: n, cols: n, data: d }));
    }
    let off_mass = |m: &[C64]| -> f64 {
        let mut s = 0.0;
        for r in 0..n {
            for c in 0..n {
                if r != c {
                    s += m[r * n + c].norm_sqr();
                }
            }
        }
        s.sqrt()
    };
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        if off_mass(&m) <= JACOBI_TOL * scale {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let b = m[p * n + q];
                let r = b.norm();
                if r <= f64::MIN_POSITIVE || r <= 1e-300 * scale {
                    continue;
                }
                let app = m[p * n + p].re;
                let aqq = m[q * n + q].re;
                // Skip rotations that cannot change the diagonal at working precision.
                if r < f64::EPSILON * 1e-3 * (app.abs() + aqq.abs()) {
                    m[p * n + q] = ZERO;
                    m[q * n + p] = ZERO;
                    continue;
                }
                let phase = b / r;
                let theta = (aqq - app) / (2.0 * r);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let upp = C64::new(c, 0.0);
                let upq = C64::new(s, 0.0);
                let uqp = -phase.conj() * s;
                let uqq = phase.conj() * c;
                // A <- A U
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = akp * upp + akq * uqp;
                    m[k * n + q] = akp * upq + akq * uqq;
                }
                // A <- U† A
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = upp.conj() * apk + uqp.conj() * aqk;
                    m[q * n + k] = upq.conj() * apk + uqq.conj() * aqk;
                }
                m[p * n + q] = ZERO;
                m[q * n + p] = ZERO;
                m[p * n + p] = C64::new(m[p * n + p].re, 0.0);
                m[q * n + q] = C64::new(m[q * n + q].re, 0.0);
                if let Some(v) = v.as_mut() {
                    for k in 0..n {
                        let vkp = v[k * n + p];
                        let vkq = v[k * n + q];
                        v[k * n + p] = vkp * upp + vkq * uqp;
                        v[k * n + q] = vkp * upq + vkq * uqq;
                    }
                }
            }
        }
    }
    let vals = (0..n).map(|i| m[i * n + i].re).collect();
    (vals, v.map(|d| ComplexMatrix { rows: n, cols: n, data: d }))
}

/// Eigendecomposition `A = V diag(λ) V†` of a Hermitian matrix, eigenvalues
/// in descending order.
pub fn eig_hermitian(a: &ComplexMatrix) -> Result<HermitianEigen> {
    let h = a.checked_hermitian()?;
    let (vals, vecs) = jacobi(&h, true);
    let vecs = vecs.expect("vectors requested");
    let n = h.rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| vals[j].total_cmp(&vals[i]));
    let values = order.iter().map(|&i| vals[i]).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |r, c| vecs[(r, order[c])]);
    Ok(HermitianEigen { values, vectors })
}

/// Eigenvalues only, descending.
pub fn eigvals_hermitian(a: &ComplexMatrix) -> Result<Vec<f64>> {
    let h = a.checked_hermitian()?;
    let (mut vals, _) = jacobi(&h, false);
    vals.sort_by(|x, y| y.total_cmp(x));
    Ok(vals)
}

/// `‖A‖₁ = Σ|λ_i|`.
pub fn trace_norm(a: &ComplexMatrix) -> Result<f64> {
    Ok(eigvals_hermitian(a)?.iter().map(|l| l.abs()).sum())
}

/// `|A| = √(A²)`.
pub fn abs_hermitian(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    Ok(eig_hermitian(a)?.reconstruct_with(f64::abs))
}
