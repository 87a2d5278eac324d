//! Dense complex tensors.
//!
//! Amplitudes are stored row-major over `shape`. When a tensor stands for an
//! operator on qubits, qubit 0 is the most significant bit of the basis index.

use faer::Mat;
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape {shape:?} holds {expected} amplitudes, got {got}")]
    ShapeMismatch {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("non-finite amplitude at flat index {0}")]
    NonFinite(usize),
    #[error("axis {axis} out of range for rank {rank}")]
    AxisOutOfRange { axis: usize, rank: usize },
    #[error("contracted axes have different extents: {a} vs {b}")]
    ExtentMismatch { a: usize, b: usize },
    #[error("axis list must be a non-empty proper subset of the tensor axes")]
    BadAxisSet,
    #[error("expected a square matrix, got shape {0:?}")]
    NotSquare(Vec<usize>),
    #[error("matrix is rank deficient (numerical rank {rank} of {dim}); polar factor is not unique")]
    RankDeficient { rank: usize, dim: usize },
}

pub type Result<T> = std::result::Result<T, TensorError>;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<C64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<C64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() || shape.contains(&0) {
            return Err(TensorError::ShapeMismatch {
                shape,
                expected,
                got: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(TensorError::NonFinite(pos));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![ZERO; len],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut t = Self::zeros(vec![dim, dim]);
        for i in 0..dim {
            t.data[i * dim + i] = ONE;
        }
        t
    }

    /// Builds a matrix from a closure over (row, col).
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self {
            shape: vec![rows, cols],
            data,
        }
    }

    pub fn vector(data: Vec<C64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn strides(shape: &[usize]) -> Vec<usize> {
        let mut strides = vec![1; shape.len()];
        for k in (0..shape.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * shape[k + 1];
        }
        strides
    }

    pub fn get(&self, index: &[usize]) -> C64 {
        let strides = Self::strides(&self.shape);
        self.data[index.iter().zip(&strides).map(|(i, s)| i * s).sum::<usize>()]
    }

    /// Matrix entry for a rank-2 tensor.
    #[inline]
    pub fn at(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.shape[1] + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: C64) {
        let cols = self.shape[1];
        self.data[r * cols + c] = v;
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(TensorError::ShapeMismatch {
                shape,
                expected,
                got: self.data.len(),
            });
        }
        self.shape = shape;
        Ok(self)
    }

    /// Reorders axes so that output axis `k` is input axis `axes[k]`.
    pub fn permute(&self, axes: &[usize]) -> Result<Self> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if axes.len() != rank {
            return Err(TensorError::BadAxisSet);
        }
        for &a in axes {
            if a >= rank {
                return Err(TensorError::AxisOutOfRange { axis: a, rank });
            }
            if seen[a] {
                return Err(TensorError::BadAxisSet);
            }
            seen[a] = true;
        }
        let new_shape: Vec<usize> = axes.iter().map(|&a| self.shape[a]).collect();
        let old_strides = Self::strides(&self.shape);
        let src_strides: Vec<usize> = axes.iter().map(|&a| old_strides[a]).collect();
        let mut data = Vec::with_capacity(self.data.len());
        let mut idx = vec![0usize; rank];
        let mut offset = 0usize;
        for _ in 0..self.data.len() {
            data.push(self.data[offset]);
            // odometer increment over the new shape
            for k in (0..rank).rev() {
                idx[k] += 1;
                offset += src_strides[k];
                if idx[k] < new_shape[k] {
                    break;
                }
                offset -= src_strides[k] * new_shape[k];
                idx[k] = 0;
            }
        }
        Ok(Self {
            shape: new_shape,
            data,
        })
    }

    pub fn conj(&self) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Conjugate transpose of a matrix.
    pub fn adjoint(&self) -> Self {
        let (r, c) = (self.shape[0], self.shape[1]);
        Self::from_fn(c, r, |i, j| self.at(j, i).conj())
    }

    pub fn transpose(&self) -> Self {
        let (r, c) = (self.shape[0], self.shape[1]);
        Self::from_fn(c, r, |i, j| self.at(j, i))
    }

    pub fn trace(&self) -> C64 {
        let d = self.shape[0].min(self.shape[1]);
        (0..d).map(|i| self.at(i, i)).sum()
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        contract(self, other, &[(1, 0)])
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        let (r, c) = (self.shape[0], self.shape[1]);
        (0..r)
            .map(|i| {
                let row = &self.data[i * c..(i + 1) * c];
                row.iter().zip(v).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    /// Kronecker product of two matrices, `self` on the more significant index.
    pub fn kron(&self, other: &Tensor) -> Tensor {
        let (ar, ac) = (self.shape[0], self.shape[1]);
        let (br, bc) = (other.shape[0], other.shape[1]);
        Tensor::from_fn(ar * br, ac * bc, |r, c| {
            self.at(r / br, c / bc) * other.at(r % br, c % bc)
        })
    }

    fn to_faer(&self) -> Mat<C64> {
        let cols = self.shape[1];
        Mat::from_fn(self.shape[0], cols, |r, c| self.data[r * cols + c])
    }

    /// Views the tensor as a matrix with rows = `row_axes` and columns = the rest,
    /// both in ascending axis order.
    fn matricize(&self, row_axes: &[usize]) -> Result<(Tensor, Vec<usize>, Vec<usize>)> {
        let rank = self.rank();
        for &a in row_axes {
            if a >= rank {
                return Err(TensorError::AxisOutOfRange { axis: a, rank });
            }
        }
        let col_axes: Vec<usize> = (0..rank).filter(|a| !row_axes.contains(a)).collect();
        let order: Vec<usize> = row_axes.iter().chain(&col_axes).copied().collect();
        let row_shape: Vec<usize> = row_axes.iter().map(|&a| self.shape[a]).collect();
        let col_shape: Vec<usize> = col_axes.iter().map(|&a| self.shape[a]).collect();
        let rows = row_shape.iter().product::<usize>();
        let cols = col_shape.iter().product::<usize>();
        let m = self.permute(&order)?.reshape(vec![rows, cols])?;
        Ok((m, row_shape, col_shape))
    }
}

/// Contracts `a` and `b` over the listed axis pairs. The result carries the
/// free axes of `a` followed by the free axes of `b`.
pub fn contract(a: &Tensor, b: &Tensor, axis_pairs: &[(usize, usize)]) -> Result<Tensor> {
    for &(x, y) in axis_pairs {
        if x >= a.rank() {
            return Err(TensorError::AxisOutOfRange { axis: x, rank: a.rank() });
        }
        if y >= b.rank() {
            return Err(TensorError::AxisOutOfRange { axis: y, rank: b.rank() });
        }
        if a.shape[x] != b.shape[y] {
            return Err(TensorError::ExtentMismatch {
                a: a.shape[x],
                b: b.shape[y],
            });
        }
    }
    let a_pair: Vec<usize> = axis_pairs.iter().map(|p| p.0).collect();
    let b_pair: Vec<usize> = axis_pairs.iter().map(|p| p.1).collect();
    let a_free: Vec<usize> = (0..a.rank()).filter(|x| !a_pair.contains(x)).collect();
    let b_free: Vec<usize> = (0..b.rank()).filter(|x| !b_pair.contains(x)).collect();

    let inner: usize = a_pair.iter().map(|&x| a.shape[x]).product();
    let rows: usize = a_free.iter().map(|&x| a.shape[x]).product();
    let cols: usize = b_free.iter().map(|&x| b.shape[x]).product();

    let a_order: Vec<usize> = a_free.iter().chain(&a_pair).copied().collect();
    let b_order: Vec<usize> = b_pair.iter().chain(&b_free).copied().collect();
    let am = a.permute(&a_order)?;
    let bm = b.permute(&b_order)?;

    let mut out = vec![ZERO; rows * cols];
    for r in 0..rows {
        let arow = &am.data[r * inner..(r + 1) * inner];
        let orow = &mut out[r * cols..(r + 1) * cols];
        for (k, &av) in arow.iter().enumerate() {
            if av == ZERO {
                continue;
            }
            let brow = &bm.data[k * cols..(k + 1) * cols];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    let mut shape: Vec<usize> = a_free.iter().map(|&x| a.shape[x]).collect();
    shape.extend(b_free.iter().map(|&x| b.shape[x]));
    if shape.is_empty() {
        shape.push(1);
    }
    Ok(Tensor { shape, data: out })
}

#[derive(Debug, Clone)]
pub struct SvdResult {
    /// Shape: extents of the left axes, then the kept rank.
    pub left_isometry: Tensor,
    /// Descending, non-negative.
    pub singular_values: Vec<f64>,
    /// Shape: kept rank, then extents of the remaining axes.
    pub right_factor: Tensor,
    /// Dropped squared singular values over the total squared weight.
    pub discarded_weight: f64,
}

impl SvdResult {
    pub fn kept(&self) -> usize {
        self.singular_values.len()
    }

    /// `diag(s) · R`, same shape as `right_factor`.
    pub fn weighted_right(&self) -> Tensor {
        let k = self.kept();
        let mut r = self.right_factor.clone();
        let cols = r.data.len() / k;
        for (idx, z) in r.data.iter_mut().enumerate() {
            *z *= self.singular_values[idx / cols];
        }
        r
    }

    /// `L · diag(s)`, same shape as `left_isometry`.
    pub fn weighted_left(&self) -> Tensor {
        let k = self.kept();
        let mut l = self.left_isometry.clone();
        for (idx, z) in l.data.iter_mut().enumerate() {
            *z *= self.singular_values[idx % k];
        }
        l
    }

    /// Contracts `L · diag(s) · R` back into a tensor with axes (left..., rest...).
    pub fn reconstruct(&self) -> Tensor {
        let left = self.weighted_left();
        let last = left.rank() - 1;
        contract(&left, &self.right_factor, &[(last, 0)]).expect("factor shapes agree")
    }
}

/// Sorted thin SVD of a matrix: (U columns, singular values, V† rows).
pub(crate) fn svd_sorted(m: &Tensor) -> (Tensor, Vec<f64>, Tensor) {
    let (rows, cols) = (m.shape[0], m.shape[1]);
    let svd = m.to_faer().thin_svd().expect("SVD converges");
    let (u, v) = (svd.U(), svd.V());
    let s: Vec<f64> = svd.S().column_vector().iter().map(|z| z.re.max(0.0)).collect();
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&x, &y| s[y].partial_cmp(&s[x]).unwrap_or(std::cmp::Ordering::Equal).then(x.cmp(&y)));
    let k = s.len();
    let sv: Vec<f64> = order.iter().map(|&i| s[i]).collect();
    let ut = Tensor::from_fn(rows, k, |r, c| u[(r, order[c])]);
    let vtt = Tensor::from_fn(k, cols, |r, c| v[(c, order[r])].conj());
    (ut, sv, vtt)
}

/// Splits `t` across `left_axes | rest` with a truncated SVD. The kept rank is
/// `min(max_kept, #{s_i / s_0 > rel_cutoff})`, and at least one.
pub fn svd_split(
    t: &Tensor,
    left_axes: &[usize],
    max_kept: Option<usize>,
    rel_cutoff: f64,
) -> Result<SvdResult> {
    if left_axes.is_empty() || left_axes.len() >= t.rank() {
        return Err(TensorError::BadAxisSet);
    }
    let mut sorted = left_axes.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != left_axes.len() {
        return Err(TensorError::BadAxisSet);
    }
    let (m, row_shape, col_shape) = t.matricize(left_axes)?;
    let (u, s, vt) = svd_sorted(&m);
    let total: f64 = s.iter().map(|x| x * x).sum();
    let s0 = s.first().copied().unwrap_or(0.0);
    let mut keep = s
        .iter()
        .take_while(|&&x| s0 > 0.0 && x / s0 > rel_cutoff)
        .count()
        .max(1);
    if let Some(cap) = max_kept {
        keep = keep.min(cap.max(1));
    }
    let dropped: f64 = s[keep..].iter().map(|x| x * x).sum();
    let discarded_weight = if total > 0.0 { dropped / total } else { 0.0 };

    let rows = u.shape[0];
    let cols = vt.shape[1];
    let left = Tensor::from_fn(rows, keep, |r, c| u.at(r, c));
    let right = Tensor::from_fn(keep, cols, |r, c| vt.at(r, c));
    let mut lshape = row_shape;
    lshape.push(keep);
    let mut rshape = vec![keep];
    rshape.extend(col_shape);
    Ok(SvdResult {
        left_isometry: left.reshape(lshape)?,
        singular_values: s[..keep].to_vec(),
        right_factor: right.reshape(rshape)?,
        discarded_weight,
    })
}

/// Unitary factor of the polar decomposition `m = U·P`, i.e. the unitary closest
/// to `m` in Frobenius norm.
pub fn polar_unitary(m: &Tensor) -> Result<Tensor> {
    if m.rank() != 2 || m.shape[0] != m.shape[1] {
        return Err(TensorError::NotSquare(m.shape.clone()));
    }
    let dim = m.shape[0];
    let (u, s, vt) = svd_sorted(m);
    let tol = 1e-12 * s[0].max(f64::MIN_POSITIVE);
    let rank = s.iter().filter(|&&x| x > tol).count();
    if rank < dim {
        return Err(TensorError::RankDeficient { rank, dim });
    }
    Ok(u.matmul(&vt).expect("square factors"))
}

/// Result of an isometry check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsometryReport {
    pub is_isometry: bool,
    pub max_deviation: f64,
}

/// Checks `M†M = I` where `M` maps the `domain_axes` into the remaining axes.
pub fn is_isometry(t: &Tensor, domain_axes: &[usize], tol: f64) -> IsometryReport {
    let rank = t.rank();
    let codomain: Vec<usize> = (0..rank).filter(|a| !domain_axes.contains(a)).collect();
    let Ok((m, _, _)) = t.matricize(&codomain) else {
        return IsometryReport {
            is_isometry: false,
            max_deviation: f64::INFINITY,
        };
    };
    let gram = m.adjoint().matmul(&m).expect("square gram");
    let dev = gram.max_abs_diff(&Tensor::identity(gram.shape[0]));
    IsometryReport {
        is_isometry: dev <= tol,
        max_deviation: dev,
    }
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues descending.
pub fn hermitian_eigen(m: &Tensor) -> (Vec<f64>, Tensor) {
    let n = m.shape[0];
    let herm = Mat::<C64>::from_fn(n, n, |r, c| (m.at(r, c) + m.at(c, r).conj()) * 0.5);
    let eig = herm.self_adjoint_eigen(faer::Side::Lower).expect("eigensolver converges");
    let vals: Vec<f64> = eig.S().column_vector().iter().map(|z| z.re).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| vals[y].partial_cmp(&vals[x]).unwrap_or(std::cmp::Ordering::Equal));
    let u = eig.U();
    let vecs = Tensor::from_fn(n, n, |r, c| u[(r, order[c])]);
    (order.iter().map(|&i| vals[i]).collect(), vecs)
}

/// Inverse of a square matrix plus its 2-norm condition number. `None` when
/// the smallest singular value vanishes.
pub fn inverse_with_condition(m: &Tensor) -> Option<(Tensor, f64)> {
    let (u, s, vt) = svd_sorted(m);
    let smin = *s.last()?;
    if smin <= 0.0 || !smin.is_finite() {
        return None;
    }
    let cond = s[0] / smin;
    let d = s.len();
    let inv = Tensor::from_fn(vt.shape[1], u.shape[0], |r, c| {
        (0..d).map(|j| vt.at(j, r).conj() * u.at(c, j).conj() / s[j]).sum()
    });
    Some((inv, cond))
}

/// Extends the orthonormal rows of `rows` (k × d) to a full d × d unitary whose
/// first k rows are the given ones. Completion vectors come from Gram–Schmidt
/// against the standard basis in order.
pub fn complete_rows(rows: &Tensor) -> Tensor {
    let (k, d) = (rows.shape[0], rows.shape[1]);
    let mut basis: Vec<Vec<C64>> = (0..k)
        .map(|r| rows.data[r * d..(r + 1) * d].to_vec())
        .collect();
    for e in 0..d {
        if basis.len() == d {
            break;
        }
        let mut v = vec![ZERO; d];
        v[e] = ONE;
        // two passes of modified Gram–Schmidt
        for _ in 0..2 {
            for b in &basis {
                let proj: C64 = b.iter().zip(&v).map(|(x, y)| x.conj() * y).sum();
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= proj * bi;
                }
            }
        }
        let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if n > 1e-6 {
            basis.push(v.into_iter().map(|z| z / n).collect());
        }
    }
    Tensor {
        shape: vec![d, d],
        data: basis.into_iter().flatten().collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
        let len = shape.iter().product();
        let data = (0..len)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        Tensor::new(shape, data).unwrap()
    }

    #[test]
    fn rejects_bad_shapes_and_nan() {
        assert!(Tensor::new(vec![2, 2], vec![ONE; 3]).is_err());
        let mut d = vec![ONE; 4];
        d[2] = C64::new(f64::NAN, 0.0);
        assert_eq!(Tensor::new(vec![2, 2], d), Err(TensorError::NonFinite(2)));
    }

    #[test]
    fn identity_contraction_returns_vector() {
        let v = Tensor::vector(vec![C64::new(0.3, 0.1), C64::new(-0.2, 0.9)]);
        let out = contract(&Tensor::identity(2), &v, &[(1, 0)]).unwrap();
        assert_eq!(out, v);
    }

    #[test]
    fn matrix_product_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_tensor(vec![2, 3], &mut rng);
        let b = random_tensor(vec![3, 4], &mut rng);
        let c = contract(&a, &b, &[(1, 0)]).unwrap();
        assert_eq!(c.shape(), &[2, 4]);
        for i in 0..2 {
            for j in 0..4 {
                let mut s = ZERO;
                for k in 0..3 {
                    s += a.at(i, k) * b.at(k, j);
                }
                assert!((c.at(i, j) - s).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn empty_pairing_is_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_tensor(vec![2, 3], &mut rng);
        let b = random_tensor(vec![4], &mut rng);
        let c = contract(&a, &b, &[]).unwrap();
        assert_eq!(c.shape(), &[2, 3, 4]);
        assert!((c.get(&[1, 2, 3]) - a.at(1, 2) * b.data()[3]).norm() < 1e-15);
    }

    #[test]
    fn extent_mismatch_is_an_error() {
        let a = Tensor::zeros(vec![2, 3]);
        let b = Tensor::zeros(vec![2, 3]);
        assert!(matches!(
            contract(&a, &b, &[(1, 0)]),
            Err(TensorError::ExtentMismatch { a: 3, b: 2 })
        ));
    }

    #[test]
    fn svd_of_identity() {
        let r = svd_split(&Tensor::identity(4), &[0], None, 1e-12).unwrap();
        assert_eq!(r.kept(), 4);
        for s in &r.singular_values {
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert_eq!(r.discarded_weight, 0.0);
    }

    #[test]
    fn svd_rank_one_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_tensor(vec![3], &mut rng);
        let v = random_tensor(vec![5], &mut rng);
        let t = contract(&u, &v, &[]).unwrap();
        let r = svd_split(&t, &[0], Some(1), 1e-12).unwrap();
        assert!(r.discarded_weight < 1e-28);
        assert!(r.reconstruct().max_abs_diff(&t) < 1e-10);
    }

    #[test]
    fn svd_empty_axes_is_error() {
        let t = Tensor::identity(2);
        assert!(matches!(svd_split(&t, &[], None, 0.0), Err(TensorError::BadAxisSet)));
        assert!(matches!(svd_split(&t, &[0, 1], None, 0.0), Err(TensorError::BadAxisSet)));
    }

    /// Singular values from the eigenvalues of M†M, an independent route.
    fn reference_singular_values(m: &Tensor) -> Vec<f64> {
        let gram = m.adjoint().matmul(m).unwrap();
        let (vals, _) = hermitian_eigen(&gram);
        vals.into_iter().map(|x| x.max(0.0).sqrt()).collect()
    }

    #[test]
    fn truncated_discarded_weight_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_tensor(vec![8, 8], &mut rng);
        let s = reference_singular_values(&m);
        let total: f64 = s.iter().map(|x| x * x).sum();
        let expected: f64 = s[4..].iter().map(|x| x * x).sum::<f64>() / total;
        let r = svd_split(&m, &[0], Some(4), 1e-12).unwrap();
        assert!((r.discarded_weight - expected).abs() < 1e-12);
    }

    #[test]
    fn polar_of_scaled_identity() {
        let u = polar_unitary(&Tensor::identity(3).scale(C64::new(2.0, 0.0))).unwrap();
        assert!(u.max_abs_diff(&Tensor::identity(3)) < 1e-12);
    }

    #[test]
    fn polar_rejects_rank_deficient() {
        let mut m = Tensor::identity(3);
        m.set(2, 2, ZERO);
        assert_eq!(
            polar_unitary(&m),
            Err(TensorError::RankDeficient { rank: 2, dim: 3 })
        );
        assert!(matches!(
            polar_unitary(&Tensor::zeros(vec![2, 3])),
            Err(TensorError::NotSquare(_))
        ));
    }

    #[test]
    fn column_vector_is_isometry() {
        let t = Tensor::new(vec![2, 1], vec![ONE, ZERO]).unwrap();
        assert!(is_isometry(&t, &[1], 1e-12).is_isometry);
        let t = Tensor::new(vec![2, 1], vec![ONE, ONE]).unwrap();
        let rep = is_isometry(&t, &[1], 1e-12);
        assert!(!rep.is_isometry);
        assert!((rep.max_deviation - 1.0).abs() < 1e-12);
    }

    #[test]
    fn completed_rows_form_unitary() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let rows = Tensor::new(vec![1, 4], vec![C64::new(s, 0.0), ZERO, ZERO, C64::new(0.0, s)]).unwrap();
        let u = complete_rows(&rows);
        assert!(is_isometry(&u, &[1], 1e-12).is_isometry);
        assert_eq!(u.at(0, 3), C64::new(0.0, s));
    }

    #[test]
    fn permute_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = random_tensor(vec![2, 3, 4], &mut rng);
        let p = t.permute(&[2, 0, 1]).unwrap();
        assert_eq!(p.shape(), &[4, 2, 3]);
        assert_eq!(p.get(&[3, 1, 2]), t.get(&[1, 2, 3]));
        assert_eq!(p.permute(&[1, 2, 0]).unwrap(), t);
    }
}
