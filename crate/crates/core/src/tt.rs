//! Shared tensor-train machinery for MPS and MPO types.
//!
//! Site tensors have shape `(left bond, site dim, right bond)`; MPOs flatten
//! their two physical legs into one site dim of 4 before sweeping.

use crate::error::Result;
use crate::tensor::{contract, svd_truncate, DenseTensor};

/// Singular values at or below `NUMERICAL_RANK_FLOOR * s_max` are always
/// dropped during sweeps; they carry no information at double precision.
pub(crate) const NUMERICAL_RANK_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Default)]
pub struct TruncationReport {
    /// Relative squared weight dropped at each internal bond, left to right.
    pub discarded: Vec<f64>,
    /// Set when a bond was cut by `max_bond` rather than by the cutoff alone.
    pub capped: bool,
}

impl TruncationReport {
    pub fn total_discarded(&self) -> f64 {
        self.discarded.iter().sum()
    }
}

pub(crate) fn dims(t: &DenseTensor) -> (usize, usize, usize) {
    let s = t.shape();
    debug_assert_eq!(s.len(), 3);
    (s[0], s[1], s[2])
}

/// Truncated split of one site tensor; returns the new site (left-orthogonal)
/// and the `S·V` remainder to absorb into the right neighbour.
fn split_left(
    t: &DenseTensor,
    max_bond: usize,
    cutoff: f64,
) -> Result<(DenseTensor, DenseTensor, f64, bool)> {
    let (l, d, r) = dims(t);
    let svd = svd_truncate(&t.reshape(&[l * d, r])?, &[0], max_bond, cutoff)?;
    let keep = svd.s.len();
    // Apply the numerical-rank floor on top of the caller's cutoff.
    let smax = svd.s.first().copied().unwrap_or(0.0);
    let mut keep_f = keep;
    while keep_f > 1 && svd.s[keep_f - 1] <= NUMERICAL_RANK_FLOOR * smax {
        keep_f -= 1;
    }
    let capped = (l * d).min(r) > max_bond && svd.discarded_weight > 0.0;
    let u = truncate_cols(&svd.u, keep_f);
    let mut sv = truncate_rows(&svd.v, keep_f);
    scale_rows(&mut sv, &svd.s[..keep_f]);
    Ok((
        u.into_reshaped(&[l, d, keep_f])?,
        sv,
        svd.discarded_weight,
        capped,
    ))
}

/// Mirror of `split_left`: new site is right-orthogonal, `U·S` goes left.
fn split_right(
    t: &DenseTensor,
    max_bond: usize,
    cutoff: f64,
) -> Result<(DenseTensor, DenseTensor, f64, bool)> {
    let (l, d, r) = dims(t);
    let svd = svd_truncate(&t.reshape(&[l, d * r])?, &[0], max_bond, cutoff)?;
    let keep = svd.s.len();
    let smax = svd.s.first().copied().unwrap_or(0.0);
    let mut keep_f = keep;
    while keep_f > 1 && svd.s[keep_f - 1] <= NUMERICAL_RANK_FLOOR * smax {
        keep_f -= 1;
    }
    let capped = l.min(d * r) > max_bond && svd.discarded_weight > 0.0;
    let v = truncate_rows(&svd.v, keep_f);
    let mut us = truncate_cols(&svd.u, keep_f);
    scale_cols(&mut us, &svd.s[..keep_f]);
    Ok((
        v.into_reshaped(&[keep_f, d, r])?,
        us,
        svd.discarded_weight,
        capped,
    ))
}

fn truncate_cols(m: &DenseTensor, k: usize) -> DenseTensor {
    let rows = m.shape()[0];
    let cols = m.shape()[1];
    if k == cols {
        return m.clone();
    }
    DenseTensor::from_fn(&[rows, k], |idx| m.get(&[idx[0], idx[1]]))
}

fn truncate_rows(m: &DenseTensor, k: usize) -> DenseTensor {
    let cols = m.shape()[1];
    if k == m.shape()[0] {
        return m.clone();
    }
    DenseTensor::from_fn(&[k, cols], |idx| m.get(&[idx[0], idx[1]]))
}

fn scale_rows(m: &mut DenseTensor, s: &[f64]) {
    let cols = m.shape()[1];
    let data = m.data_mut();
    for (i, si) in s.iter().enumerate() {
        for j in 0..cols {
            data[i * cols + j] *= *si;
        }
    }
}

fn scale_cols(m: &mut DenseTensor, s: &[f64]) {
    let rows = m.shape()[0];
    let cols = m.shape()[1];
    let data = m.data_mut();
    for i in 0..rows {
        for (j, sj) in s.iter().enumerate() {
            data[i * cols + j] *= *sj;
        }
    }
}

/// Left-to-right orthogonalization sweep without truncation. Afterwards all
/// sites except the last are left-orthogonal and the norm sits at the end.
pub(crate) fn sweep_left_canonical(ts: &mut [DenseTensor]) -> Result<()> {
    let n = ts.len();
    for i in 0..n - 1 {
        let (u, sv, _, _) = split_left(&ts[i], usize::MAX, 0.0)?;
        ts[i] = u;
        ts[i + 1] = absorb_from_left(&sv, &ts[i + 1])?;
    }
    Ok(())
}

/// Right-to-left truncation sweep; afterwards all sites except the first are
/// right-orthogonal. Call after `sweep_left_canonical` for a proper compress.
pub(crate) fn sweep_right_truncate(
    ts: &mut [DenseTensor],
    max_bond: usize,
    cutoff: f64,
) -> Result<TruncationReport> {
    let n = ts.len();
    let mut report = TruncationReport {
        discarded: vec![0.0; n - 1],
        capped: false,
    };
    for i in (1..n).rev() {
        let (v, us, w, capped) = split_right(&ts[i], max_bond, cutoff)?;
        ts[i] = v;
        ts[i - 1] = absorb_from_right(&ts[i - 1], &us)?;
        report.discarded[i - 1] = w;
        report.capped |= capped;
    }
    Ok(report)
}

pub(crate) fn absorb_from_left(m: &DenseTensor, site: &DenseTensor) -> Result<DenseTensor> {
    contract(m, site, &[(1, 0)])
}

pub(crate) fn absorb_from_right(site: &DenseTensor, m: &DenseTensor) -> Result<DenseTensor> {
    contract(site, m, &[(2, 0)])
}

/// Compress in place: orthogonalize, then truncate. Returns the report.
pub(crate) fn compress(
    ts: &mut [DenseTensor],
    max_bond: usize,
    cutoff: f64,
) -> Result<TruncationReport> {
    if ts.len() == 1 {
        return Ok(TruncationReport::default());
    }
    sweep_left_canonical(ts)?;
    sweep_right_truncate(ts, max_bond, cutoff)
}

/// Direct sum of two trains over their internal bonds (operator/state sum).
pub(crate) fn direct_sum(a: &[DenseTensor], b: &[DenseTensor]) -> Result<Vec<DenseTensor>> {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let (la, da, ra) = dims(&a[i]);
        let (lb, db, rb) = dims(&b[i]);
        debug_assert_eq!(da, db);
        let left = if i == 0 { 1 } else { la + lb };
        let right = if i == n - 1 { 1 } else { ra + rb };
        // Writes accumulate so the single-site case (shared boundary bonds on
        // both ends) degenerates to a plain sum of site matrices.
        let mut t = DenseTensor::zeros(&[left, da, right]);
        for sig in 0..da {
            for al in 0..la {
                for ar in 0..ra {
                    let prev = t.get(&[al, sig, ar]);
                    t.set(&[al, sig, ar], prev + a[i].get(&[al, sig, ar]));
                }
            }
            for bl in 0..lb {
                for br in 0..rb {
                    let dst_l = if i == 0 { bl } else { la + bl };
                    let dst_r = if i == n - 1 { br } else { ra + br };
                    let prev = t.get(&[dst_l, sig, dst_r]);
                    t.set(&[dst_l, sig, dst_r], prev + b[i].get(&[bl, sig, br]));
                }
            }
        }
        out.push(t);
    }
    Ok(out)
}

pub(crate) fn bond_dims(ts: &[DenseTensor]) -> Vec<usize> {
    ts.iter().skip(1).map(|t| t.shape()[0]).collect()
}

pub(crate) fn max_bond(ts: &[DenseTensor]) -> usize {
    bond_dims(ts).into_iter().max().unwrap_or(1)
}
