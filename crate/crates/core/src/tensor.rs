//! Dense complex multi-index tensors in row-major layout, with contraction,
//! truncated SVD, Hermitian eigendecomposition and regularized linear solves.
//!
//! Everything here is value-semantic; operations allocate fresh tensors.

use faer::linalg::solvers::Solve;
use faer::Mat;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const C_ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const C_I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<Complex64>,
}

fn product(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl DenseTensor {
    pub fn zeros(shape: &[usize]) -> Self {
        DenseTensor {
            shape: shape.to_vec(),
            data: vec![C_ZERO; product(shape)],
        }
    }

    pub fn from_data(shape: &[usize], data: Vec<Complex64>) -> Result<Self> {
        if product(shape) != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {:?} implies {} values, got {}",
                shape,
                product(shape),
                data.len()
            )));
        }
        let t = DenseTensor {
            shape: shape.to_vec(),
            data,
        };
        t.check_finite()?;
        Ok(t)
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> Complex64) -> Self {
        let n = product(shape);
        let mut data = Vec::with_capacity(n);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..n {
            data.push(f(&idx));
            for ax in (0..shape.len()).rev() {
                idx[ax] += 1;
                if idx[ax] < shape[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        DenseTensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn scalar(z: Complex64) -> Self {
        DenseTensor {
            shape: vec![],
            data: vec![z],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = C_ONE;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn scalar_value(&self) -> Complex64 {
        debug_assert_eq!(self.len(), 1);
        self.data[0]
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1usize; self.shape.len()];
        for ax in (0..self.shape.len().saturating_sub(1)).rev() {
            s[ax] = s[ax + 1] * self.shape[ax + 1];
        }
        s
    }

    pub fn get(&self, idx: &[usize]) -> Complex64 {
        self.data[self.flat_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: Complex64) {
        let k = self.flat_index(idx);
        self.data[k] = v;
    }

    fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let strides = self.strides();
        idx.iter().zip(&strides).map(|(i, s)| i * s).sum()
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            Ok(())
        } else {
            Err(Error::Validation("tensor contains non-finite values".into()))
        }
    }

    pub fn conj(&self) -> Self {
        DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scaled(&self, alpha: Complex64) -> Self {
        DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|z| z * alpha).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "add: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(DenseTensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scaled(-C_ONE))
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        if product(shape) != self.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "reshape {:?} -> {:?}",
                self.shape, shape
            )));
        }
        Ok(DenseTensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn into_reshaped(mut self, shape: &[usize]) -> Result<Self> {
        if product(shape) != self.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "reshape {:?} -> {:?}",
                self.shape, shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Reorder axes; `perm[k]` is the original axis that lands at position `k`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        debug_assert_eq!(perm.len(), self.shape.len());
        let old_strides = self.strides();
        let new_shape: Vec<usize> = perm.iter().map(|&ax| self.shape[ax]).collect();
        let n = self.data.len();
        let mut out = vec![C_ZERO; n];
        if n == 0 {
            return DenseTensor {
                shape: new_shape,
                data: out,
            };
        }
        // Walk the output in row-major order, tracking the source flat offset.
        let rank = new_shape.len();
        let src_strides: Vec<usize> = perm.iter().map(|&ax| old_strides[ax]).collect();
        let mut idx = vec![0usize; rank];
        let mut src = 0usize;
        for slot in out.iter_mut() {
            *slot = self.data[src];
            for ax in (0..rank).rev() {
                idx[ax] += 1;
                src += src_strides[ax];
                if idx[ax] < new_shape[ax] {
                    break;
                }
                idx[ax] = 0;
                src -= src_strides[ax] * new_shape[ax];
            }
        }
        DenseTensor {
            shape: new_shape,
            data: out,
        }
    }

    fn to_mat(&self, rows: usize, cols: usize) -> Mat<Complex64> {
        debug_assert_eq!(rows * cols, self.data.len());
        Mat::from_fn(rows, cols, |i, j| self.data[i * cols + j])
    }

    fn from_mat(m: &Mat<Complex64>) -> Self {
        let (rows, cols) = (m.nrows(), m.ncols());
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(m[(i, j)]);
            }
        }
        DenseTensor {
            shape: vec![rows, cols],
            data,
        }
    }
}

/// Pairwise tensor contraction. `pairs` lists `(axis_of_a, axis_of_b)` to sum
/// over; result axes are the unpaired axes of `a` followed by those of `b`.
pub fn contract(a: &DenseTensor, b: &DenseTensor, pairs: &[(usize, usize)]) -> Result<DenseTensor> {
    let mut seen_a = vec![false; a.rank()];
    let mut seen_b = vec![false; b.rank()];
    for &(pa, pb) in pairs {
        if pa >= a.rank() || pb >= b.rank() {
            return Err(Error::InvalidArgument(format!(
                "contract: axis pair ({pa}, {pb}) out of range for ranks ({}, {})",
                a.rank(),
                b.rank()
            )));
        }
        if seen_a[pa] || seen_b[pb] {
            return Err(Error::InvalidArgument(format!(
                "contract: axis repeated in pair ({pa}, {pb})"
            )));
        }
        seen_a[pa] = true;
        seen_b[pb] = true;
        if a.shape[pa] != b.shape[pb] {
            return Err(Error::ContractAxes {
                a_axis: pa,
                b_axis: pb,
                a_extent: a.shape[pa],
                b_extent: b.shape[pb],
            });
        }
    }
    let free_a: Vec<usize> = (0..a.rank()).filter(|&ax| !seen_a[ax]).collect();
    let free_b: Vec<usize> = (0..b.rank()).filter(|&ax| !seen_b[ax]).collect();

    let mut perm_a = free_a.clone();
    perm_a.extend(pairs.iter().map(|p| p.0));
    let mut perm_b: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    perm_b.extend(free_b.iter().copied());

    let am = a.permute(&perm_a);
    let bm = b.permute(&perm_b);

    let rows: usize = free_a.iter().map(|&ax| a.shape[ax]).product();
    let mid: usize = pairs.iter().map(|&(pa, _)| a.shape[pa]).product();
    let cols: usize = free_b.iter().map(|&ax| b.shape[ax]).product();

    let ma = am.to_mat(rows, mid);
    let mb = bm.to_mat(mid, cols);
    let mc = &ma * &mb;

    let mut shape: Vec<usize> = free_a.iter().map(|&ax| a.shape[ax]).collect();
    shape.extend(free_b.iter().map(|&ax| b.shape[ax]));
    DenseTensor::from_mat(&mc).into_reshaped(&shape)
}

/// Result of a truncated SVD across an axis bipartition.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// Row-group axes followed by the new rank axis.
    pub u: DenseTensor,
    /// Singular values, descending.
    pub s: Vec<f64>,
    /// New rank axis followed by the column-group axes.
    pub v: DenseTensor,
    /// Sum of dropped squared singular values over the total.
    pub discarded_weight: f64,
}

/// Truncated SVD of `t` split into `row_axes` vs the remaining axes.
///
/// Keeps the largest singular values subject to `max_rank` and to the cutoff
/// rule: smallest values are dropped while the cumulative relative squared
/// weight stays within `cutoff`. At least one singular value is always kept.
pub fn svd_truncate(
    t: &DenseTensor,
    row_axes: &[usize],
    max_rank: usize,
    cutoff: f64,
) -> Result<SvdResult> {
    if max_rank < 1 {
        return Err(Error::InvalidArgument("svd_truncate: max_rank < 1".into()));
    }
    if cutoff < 0.0 {
        return Err(Error::InvalidArgument("svd_truncate: cutoff < 0".into()));
    }
    let mut in_rows = vec![false; t.rank()];
    for &ax in row_axes {
        if ax >= t.rank() || in_rows[ax] {
            return Err(Error::InvalidArgument(format!(
                "svd_truncate: bad row axis {ax}"
            )));
        }
        in_rows[ax] = true;
    }
    let col_axes: Vec<usize> = (0..t.rank()).filter(|&ax| !in_rows[ax]).collect();
    if row_axes.is_empty() || col_axes.is_empty() {
        return Err(Error::InvalidArgument(
            "svd_truncate: both axis groups must be nonempty".into(),
        ));
    }

    let mut perm: Vec<usize> = row_axes.to_vec();
    perm.extend(col_axes.iter().copied());
    let tp = t.permute(&perm);
    let rows: usize = row_axes.iter().map(|&ax| t.shape[ax]).product();
    let cols: usize = col_axes.iter().map(|&ax| t.shape[ax]).product();
    let m = tp.to_mat(rows, cols);

    let svd = m
        .thin_svd()
        .map_err(|e| Error::Validation(format!("svd failed to converge: {e:?}")))?;
    let k = rows.min(cols);
    let sv: Vec<f64> = (0..k).map(|i| svd.S()[i].re).collect();

    let total: f64 = sv.iter().map(|s| s * s).sum();
    let mut keep = k.min(max_rank);
    // Trailing values beyond max_rank are dropped unconditionally; then keep
    // shrinking while the discarded relative weight stays within cutoff.
    if total > 0.0 {
        let mut dropped: f64 = sv[keep..].iter().map(|s| s * s).sum();
        while keep > 1 {
            let cand = sv[keep - 1] * sv[keep - 1];
            if (dropped + cand) / total <= cutoff {
                dropped += cand;
                keep -= 1;
            } else {
                break;
            }
        }
    }
    let discarded_weight = if total > 0.0 {
        sv[keep..].iter().map(|s| s * s).sum::<f64>() / total
    } else {
        0.0
    };

    let mut u = DenseTensor::zeros(&[rows, keep]);
    for i in 0..rows {
        for j in 0..keep {
            u.data[i * keep + j] = svd.U()[(i, j)];
        }
    }
    let mut v = DenseTensor::zeros(&[keep, cols]);
    for i in 0..keep {
        for j in 0..cols {
            v.data[i * cols + j] = svd.V()[(j, i)].conj();
        }
    }

    let mut u_shape: Vec<usize> = row_axes.iter().map(|&ax| t.shape[ax]).collect();
    u_shape.push(keep);
    let mut v_shape = vec![keep];
    v_shape.extend(col_axes.iter().map(|&ax| t.shape[ax]));

    Ok(SvdResult {
        u: u.into_reshaped(&u_shape)?,
        s: sv[..keep].to_vec(),
        v: v.into_reshaped(&v_shape)?,
        discarded_weight,
    })
}

/// `exp(factor * H)` for Hermitian `H`, via eigendecomposition.
pub fn expm_hermitian_times(h: &DenseTensor, factor: Complex64) -> Result<DenseTensor> {
    let (vals, vecs) = eigh_small(h)?;
    let n = vals.len();
    let mut phases = DenseTensor::zeros(&[n, n]);
    for (k, e) in vals.iter().enumerate() {
        phases.set(&[k, k], (factor * e).exp());
    }
    let tmp = contract(&vecs, &phases, &[(1, 0)])?;
    contract(&tmp, &vecs.conj(), &[(1, 1)])
}

fn hermitian_defect(m: &DenseTensor) -> f64 {
    let n = m.shape[0];
    let mut defect: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = (m.data[i * n + j] - m.data[j * n + i].conj()).norm();
            defect = defect.max(d);
        }
    }
    defect
}

/// Eigendecomposition of a Hermitian matrix; eigenvalues ascending,
/// eigenvectors as columns of the returned tensor.
pub fn eigh_small(h: &DenseTensor) -> Result<(Vec<f64>, DenseTensor)> {
    if h.rank() != 2 || h.shape[0] != h.shape[1] {
        return Err(Error::InvalidArgument(format!(
            "eigh_small: expected square matrix, got {:?}",
            h.shape
        )));
    }
    let n = h.shape[0];
    let tol = 1e-10 * h.max_abs().max(1.0);
    let defect = hermitian_defect(h);
    if defect > tol {
        return Err(Error::NotHermitian { defect, tol });
    }
    let m = h.to_mat(n, n);
    let eig = m
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Validation(format!("eigh failed: {e:?}")))?;
    let vals: Vec<f64> = (0..n).map(|i| eig.S()[i].re).collect();
    let mut vecs = DenseTensor::zeros(&[n, n]);
    for i in 0..n {
        for j in 0..n {
            vecs.data[i * n + j] = eig.U()[(i, j)];
        }
    }
    Ok((vals, vecs))
}

/// Solve `(A + eta·1) x = b`; falls back to the minimum-norm least-squares
/// solution when the shifted matrix is numerically singular.
pub fn solve_regularized(a: &DenseTensor, b: &DenseTensor, eta: f64) -> Result<DenseTensor> {
    if a.rank() != 2 || a.shape[0] != a.shape[1] {
        return Err(Error::InvalidArgument(format!(
            "solve_regularized: expected square matrix, got {:?}",
            a.shape
        )));
    }
    let n = a.shape[0];
    if b.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "solve_regularized: rhs has {} values, expected {n}",
            b.len()
        )));
    }
    if eta < 0.0 {
        return Err(Error::InvalidArgument("solve_regularized: eta < 0".into()));
    }
    a.check_finite()?;
    b.check_finite()?;
    if !eta.is_finite() {
        return Err(Error::Validation("solve_regularized: eta not finite".into()));
    }

    let mut m = a.to_mat(n, n);
    for i in 0..n {
        m[(i, i)] += Complex64::new(eta, 0.0);
    }
    let rhs = Mat::from_fn(n, 1, |i, _| b.data[i]);
    let x = m.partial_piv_lu().solve(&rhs);

    // Accept the LU solution if it is finite and the residual is small at
    // working precision; otherwise use an SVD pseudo-inverse (minimum norm).
    let mut finite = true;
    let mut res: f64 = 0.0;
    let mut xnorm: f64 = 0.0;
    let bnorm: f64 = b.norm();
    for i in 0..n {
        let xi = x[(i, 0)];
        if !(xi.re.is_finite() && xi.im.is_finite()) {
            finite = false;
            break;
        }
        xnorm += xi.norm_sqr();
    }
    let mnorm = {
        let mut acc: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += m[(i, j)].norm_sqr();
            }
        }
        acc.sqrt()
    };
    if finite {
        for i in 0..n {
            let mut acc = C_ZERO;
            for j in 0..n {
                acc += m[(i, j)] * x[(j, 0)];
            }
            res += (acc - rhs[(i, 0)]).norm_sqr();
        }
        let scale = mnorm * xnorm.sqrt() + bnorm;
        if res.sqrt() <= 1e-9 * scale.max(f64::MIN_POSITIVE) {
            let data: Vec<Complex64> = (0..n).map(|i| x[(i, 0)]).collect();
            return Ok(DenseTensor {
                shape: vec![n],
                data,
            });
        }
    }

    let svd = m
        .svd()
        .map_err(|e| Error::Validation(format!("svd failed: {e:?}")))?;
    let smax = if n > 0 { svd.S()[0].re } else { 0.0 };
    let thresh = smax * (n as f64) * f64::EPSILON;
    let mut xv = vec![C_ZERO; n];
    for k in 0..n {
        let sk = svd.S()[k].re;
        if sk <= thresh {
            continue;
        }
        let mut uk_b = C_ZERO;
        for i in 0..n {
            uk_b += svd.U()[(i, k)].conj() * rhs[(i, 0)];
        }
        let coeff = uk_b / Complex64::new(sk, 0.0);
        for i in 0..n {
            xv[i] += svd.V()[(i, k)] * coeff;
        }
    }
    Ok(DenseTensor {
        shape: vec![n],
        data: xv,
    })
}
