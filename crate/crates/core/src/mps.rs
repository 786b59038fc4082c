//! Open-boundary matrix product states with canonical-form bookkeeping.
//!
//! Site tensors have shape `(left bond, physical, right bond)`. Physical
//! dimension is 2 for qubit states; the gauge-potential solver reuses the
//! same type with physical dimension 4 for vectorized operators.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tensor::{contract, svd_truncate, DenseTensor, C_ONE, C_ZERO};
use crate::tt;
pub use crate::tt::TruncationReport;

#[derive(Debug, Clone)]
pub struct Mps {
    tensors: Vec<DenseTensor>,
    center: Option<usize>,
}

impl Mps {
    pub fn from_site_tensors(tensors: Vec<DenseTensor>) -> Result<Self> {
        if tensors.is_empty() {
            return Err(Error::InvalidArgument("mps: no site tensors".into()));
        }
        for (i, t) in tensors.iter().enumerate() {
            if t.rank() != 3 {
                return Err(Error::ShapeMismatch(format!(
                    "mps site {i}: expected rank 3, got {:?}",
                    t.shape()
                )));
            }
        }
        if tensors[0].shape()[0] != 1 || tensors[tensors.len() - 1].shape()[2] != 1 {
            return Err(Error::ShapeMismatch("mps: boundary bonds must be 1".into()));
        }
        for i in 0..tensors.len() - 1 {
            if tensors[i].shape()[2] != tensors[i + 1].shape()[0] {
                return Err(Error::ShapeMismatch(format!(
                    "mps: bond mismatch between sites {i} and {}",
                    i + 1
                )));
            }
        }
        Ok(Mps {
            tensors,
            center: None,
        })
    }

    /// Product state from one amplitude vector per site.
    pub fn product_state(amps: &[Vec<Complex64>]) -> Result<Self> {
        let tensors = amps
            .iter()
            .map(|a| DenseTensor::from_data(&[1, a.len(), 1], a.clone()))
            .collect::<Result<Vec<_>>>()?;
        let mut s = Self::from_site_tensors(tensors)?;
        s.center = Some(0);
        Ok(s)
    }

    /// Computational basis state |b_0 b_1 ... b_{N-1}>.
    pub fn basis_state(bits: &[u8]) -> Result<Self> {
        let amps: Vec<Vec<Complex64>> = bits
            .iter()
            .map(|&b| {
                let mut v = vec![C_ZERO; 2];
                v[(b & 1) as usize] = C_ONE;
                v
            })
            .collect();
        Self::product_state(&amps)
    }

    /// Uniform single-qubit product state, e.g. |->^N for the gap-traversal
    /// initial state.
    pub fn uniform_qubit_product(n: usize, amp: [Complex64; 2]) -> Result<Self> {
        Self::product_state(&vec![amp.to_vec(); n])
    }

    pub fn n_sites(&self) -> usize {
        self.tensors.len()
    }

    pub fn phys_dim(&self, site: usize) -> usize {
        self.tensors[site].shape()[1]
    }

    pub fn tensor(&self, site: usize) -> &DenseTensor {
        &self.tensors[site]
    }

    pub fn tensors(&self) -> &[DenseTensor] {
        &self.tensors
    }

    pub(crate) fn set_center(&mut self, center: Option<usize>) {
        self.center = center;
    }

    pub(crate) fn set_tensor(&mut self, site: usize, t: DenseTensor) {
        self.tensors[site] = t;
    }

    pub fn center(&self) -> Option<usize> {
        self.center
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        tt::bond_dims(&self.tensors)
    }

    pub fn max_bond(&self) -> usize {
        tt::max_bond(&self.tensors)
    }

    pub fn inner(&self, other: &Mps) -> Result<Complex64> {
        if self.n_sites() != other.n_sites() {
            return Err(Error::InvalidArgument(format!(
                "inner: {} vs {} sites",
                self.n_sites(),
                other.n_sites()
            )));
        }
        let mut env = DenseTensor::from_data(&[1, 1], vec![C_ONE])?;
        for (a, b) in self.tensors.iter().zip(&other.tensors) {
            if a.shape()[1] != b.shape()[1] {
                return Err(Error::ShapeMismatch("inner: physical dims differ".into()));
            }
            let e1 = contract(&env, &a.conj(), &[(0, 0)])?; // (b_bond, phys, a_r)
            env = contract(&e1, b, &[(0, 0), (1, 1)])?; // (a_r, b_r)
        }
        Ok(env.scalar_value())
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).map(|z| z.re.max(0.0).sqrt()).unwrap_or(0.0)
    }

    pub fn normalize(&mut self) -> Result<f64> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::Validation("cannot normalize zero state".into()));
        }
        let site = self.center.unwrap_or(0);
        self.tensors[site] = self.tensors[site].scaled(Complex64::new(1.0 / n, 0.0));
        Ok(n)
    }

    pub fn scaled(&self, alpha: Complex64) -> Self {
        let mut out = self.clone();
        out.tensors[0] = out.tensors[0].scaled(alpha);
        out
    }

    /// State sum via bond direct sum (no truncation).
    pub fn add(&self, other: &Mps) -> Result<Mps> {
        if self.n_sites() != other.n_sites() {
            return Err(Error::InvalidArgument("mps add: site count mismatch".into()));
        }
        for i in 0..self.n_sites() {
            if self.phys_dim(i) != other.phys_dim(i) {
                return Err(Error::ShapeMismatch("mps add: physical dims differ".into()));
            }
        }
        let summed = crate::tt::direct_sum(self.tensors(), other.tensors())?;
        Mps::from_site_tensors(summed)
    }

    /// Mixed-canonical form with the norm-carrying tensor at `center`.
    pub fn canonicalize(&mut self, center: usize) -> Result<()> {
        let n = self.n_sites();
        if center >= n {
            return Err(Error::InvalidArgument(format!(
                "canonicalize: center {center} out of range"
            )));
        }
        for i in 0..center {
            self.orthogonalize_step_right(i)?;
        }
        for i in (center + 1..n).rev() {
            self.orthogonalize_step_left(i)?;
        }
        self.center = Some(center);
        Ok(())
    }

    fn orthogonalize_step_right(&mut self, i: usize) -> Result<()> {
        let (l, d, r) = tt::dims(&self.tensors[i]);
        let svd = svd_truncate(&self.tensors[i].reshape(&[l * d, r])?, &[0], usize::MAX, 0.0)?;
        let k = svd.s.len();
        self.tensors[i] = svd.u.into_reshaped(&[l, d, k])?;
        let mut sv = svd.v;
        let data = sv.data_mut();
        for (row, s) in svd.s.iter().enumerate() {
            for c in 0..r {
                data[row * r + c] *= *s;
            }
        }
        self.tensors[i + 1] = tt::absorb_from_left(&sv, &self.tensors[i + 1])?;
        Ok(())
    }

    fn orthogonalize_step_left(&mut self, i: usize) -> Result<()> {
        let (l, d, r) = tt::dims(&self.tensors[i]);
        let svd = svd_truncate(&self.tensors[i].reshape(&[l, d * r])?, &[0], usize::MAX, 0.0)?;
        let k = svd.s.len();
        self.tensors[i] = svd.v.into_reshaped(&[k, d, r])?;
        let mut us = svd.u;
        let data = us.data_mut();
        for row in 0..l {
            for (c, s) in svd.s.iter().enumerate() {
                data[row * k + c] *= *s;
            }
        }
        self.tensors[i - 1] = tt::absorb_from_right(&self.tensors[i - 1], &us)?;
        Ok(())
    }

    pub fn move_center_to(&mut self, site: usize) -> Result<()> {
        match self.center {
            None => self.canonicalize(site),
            Some(mut c) => {
                while c < site {
                    self.orthogonalize_step_right(c)?;
                    c += 1;
                }
                while c > site {
                    self.orthogonalize_step_left(c)?;
                    c -= 1;
                }
                self.center = Some(site);
                Ok(())
            }
        }
    }

    pub fn compress(&mut self, max_bond: usize, cutoff: f64) -> Result<TruncationReport> {
        let report = tt::compress(&mut self.tensors, max_bond, cutoff)?;
        self.center = Some(0);
        Ok(report)
    }

    pub fn apply_one_site_gate(&mut self, site: usize, gate: &DenseTensor) -> Result<()> {
        let d = self.phys_dim(site);
        if gate.shape() != [d, d] {
            return Err(Error::ShapeMismatch(format!(
                "one-site gate shape {:?} at site {site} (dim {d})",
                gate.shape()
            )));
        }
        // (o,i) x (l,i,r) -> (o,l,r) -> (l,o,r)
        let t = contract(gate, &self.tensors[site], &[(1, 1)])?;
        self.tensors[site] = t.permute(&[1, 0, 2]);
        Ok(())
    }

    /// Apply a two-site gate with legs `(o1, o2, i1, i2)` on `(site, site+1)`,
    /// splitting with the given truncation. Returns the discarded weight.
    pub fn apply_two_site_gate(
        &mut self,
        site: usize,
        gate: &DenseTensor,
        max_bond: usize,
        cutoff: f64,
    ) -> Result<f64> {
        if site + 1 >= self.n_sites() {
            return Err(Error::InvalidArgument(format!(
                "two-site gate at ({site}, {}) out of range",
                site + 1
            )));
        }
        self.move_center_to(site)?;
        let theta = contract(&self.tensors[site], &self.tensors[site + 1], &[(2, 0)])?;
        // gate (o1,o2,i1,i2) x theta (l,i1,i2,r) -> (o1,o2,l,r)
        let theta = contract(gate, &theta, &[(2, 1), (3, 2)])?.permute(&[2, 0, 1, 3]);
        let svd = svd_truncate(&theta, &[0, 1], max_bond, cutoff)?;
        let k = svd.s.len();
        self.tensors[site] = svd.u; // (l, o1, k), left-orthogonal
        let mut sv = svd.v; // (k, o2, r)
        let cols: usize = sv.shape()[1] * sv.shape()[2];
        let data = sv.data_mut();
        for (row, s) in svd.s.iter().enumerate() {
            for c in 0..cols {
                data[row * cols + c] *= *s;
            }
        }
        self.tensors[site + 1] = sv;
        self.center = Some(site + 1);
        let _ = k;
        Ok(svd.discarded_weight)
    }

    /// Schmidt values across the bond between sites `bond` and `bond + 1`.
    pub fn schmidt_values(&self, bond: usize) -> Result<Vec<f64>> {
        if bond + 1 >= self.n_sites() {
            return Err(Error::InvalidArgument(format!(
                "schmidt_values: bond {bond} out of range"
            )));
        }
        let mut work = self.clone();
        work.canonicalize(bond)?;
        let (l, d, r) = tt::dims(&work.tensors[bond]);
        let svd = svd_truncate(
            &work.tensors[bond].reshape(&[l * d, r])?,
            &[0],
            usize::MAX,
            0.0,
        )?;
        Ok(svd.s)
    }

    /// Von Neumann entropy from squared Schmidt coefficients at `bond`.
    pub fn entanglement_entropy(&self, bond: usize) -> Result<f64> {
        let norm = self.norm();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::Validation(format!(
                "entanglement_entropy: state norm {norm} is not 1"
            )));
        }
        let s = self.schmidt_values(bond)?;
        let mut entropy = 0.0;
        for sv in s {
            let p = sv * sv;
            if p > 1e-16 {
                entropy -= p * p.ln();
            }
        }
        Ok(entropy)
    }

    pub fn to_dense_state(&self) -> Result<DenseTensor> {
        let mut acc = DenseTensor::from_data(&[1, 1], vec![C_ONE])?;
        for t in &self.tensors {
            let (_, d, r) = tt::dims(t);
            let merged = contract(&acc, t, &[(1, 0)])?; // (P, d, r)
            let p = merged.shape()[0];
            acc = merged.into_reshaped(&[p * d, r])?;
        }
        let n = acc.shape()[0];
        acc.into_reshaped(&[n])
    }

    /// Exact tensor-train factorization of a dense state with `n` sites of
    /// dimension `d`.
    pub fn from_dense_state(v: &DenseTensor, n: usize, d: usize) -> Result<Self> {
        if v.len() != d.pow(n as u32) {
            return Err(Error::ShapeMismatch(format!(
                "from_dense_state: {} values for {n} sites of dim {d}",
                v.len()
            )));
        }
        let mut tensors = Vec::with_capacity(n);
        let mut rest = v.reshape(&[1, v.len()])?;
        for _ in 0..n - 1 {
            let l = rest.shape()[0];
            let cols = rest.shape()[1] / d;
            let m = rest.reshape(&[l * d, cols])?;
            let svd = svd_truncate(&m, &[0], usize::MAX, 0.0)?;
            let k = svd.s.len();
            tensors.push(svd.u.into_reshaped(&[l, d, k])?);
            let mut sv = svd.v;
            let data = sv.data_mut();
            for (row, s) in svd.s.iter().enumerate() {
                for c in 0..cols {
                    data[row * cols + c] *= *s;
                }
            }
            rest = sv;
        }
        let l = rest.shape()[0];
        tensors.push(rest.into_reshaped(&[l, d, 1])?);
        let mut out = Self::from_site_tensors(tensors)?;
        out.center = Some(n - 1);
        Ok(out)
    }

    /// Max deviation from left-orthogonality at `site` (diagnostic).
    pub fn left_ortho_defect(&self, site: usize) -> f64 {
        let t = &self.tensors[site];
        let gram = contract(&t.conj(), t, &[(0, 0), (1, 1)]).expect("gram");
        let r = gram.shape()[0];
        let mut defect: f64 = 0.0;
        for i in 0..r {
            for j in 0..r {
                let want = if i == j { C_ONE } else { C_ZERO };
                defect = defect.max((gram.get(&[i, j]) - want).norm());
            }
        }
        defect
    }
}

/// `<a|b>` as a free function mirroring the operation table.
pub fn inner(a: &Mps, b: &Mps) -> Result<Complex64> {
    a.inner(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::random_mps;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn product_state_norm_and_dense() {
        let s = Mps::basis_state(&[0, 1, 0]).unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-14);
        let dense = s.to_dense_state().unwrap();
        assert!((dense.get(&[0b010]) - C_ONE).norm() < 1e-14);
    }

    #[test]
    fn inner_of_normalized_state_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut s = random_mps(5, 2, 4, &mut rng);
        s.canonicalize(2).unwrap();
        s.normalize().unwrap();
        assert!((s.inner(&s).unwrap().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn canonicalization_preserves_inner_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let a = random_mps(6, 2, 5, &mut rng);
        let b = random_mps(6, 2, 3, &mut rng);
        let before = a.inner(&b).unwrap();
        let mut a2 = a.clone();
        a2.canonicalize(3).unwrap();
        let mut b2 = b.clone();
        b2.canonicalize(0).unwrap();
        let after = a2.inner(&b2).unwrap();
        assert!((before - after).norm() < 1e-12 * (1.0 + before.norm()));
    }

    #[test]
    fn canonical_form_orthogonality() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let mut s = random_mps(6, 2, 6, &mut rng);
        s.canonicalize(3).unwrap();
        for i in 0..3 {
            assert!(s.left_ortho_defect(i) < 1e-10, "site {i}");
        }
    }

    #[test]
    fn compress_never_increases_bond() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let mut s = random_mps(7, 2, 8, &mut rng);
        let before = s.max_bond();
        let report = s.compress(4, 0.0).unwrap();
        assert!(s.max_bond() <= before.min(4));
        assert!(report.discarded.iter().all(|w| *w >= 0.0));
    }

    #[test]
    fn compress_exact_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let s = random_mps(6, 2, 4, &mut rng);
        let dense = s.to_dense_state().unwrap();
        let mut c = s.clone();
        c.compress(usize::MAX, 0.0).unwrap();
        let dense2 = c.to_dense_state().unwrap();
        assert!(dense.sub(&dense2).unwrap().norm() < 1e-11 * dense.norm());
    }

    #[test]
    fn two_site_gate_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let mut s = random_mps(4, 2, 3, &mut rng);
        s.canonicalize(0).unwrap();
        s.normalize().unwrap();
        let dense_before = s.to_dense_state().unwrap();
        // CNOT on sites (1, 2).
        let mut g = DenseTensor::zeros(&[2, 2, 2, 2]);
        for (o1, o2, i1, i2) in [(0, 0, 0, 0), (0, 1, 0, 1), (1, 1, 1, 0), (1, 0, 1, 1)] {
            g.set(&[o1, o2, i1, i2], C_ONE);
        }
        s.apply_two_site_gate(1, &g, usize::MAX, 0.0).unwrap();
        let dense_after = s.to_dense_state().unwrap();
        let n = 4;
        let dim = 1usize << n;
        let mut want = DenseTensor::zeros(&[dim]);
        for idx in 0..dim {
            // bit of site k counted from the left (site 0 is most significant)
            let b1 = (idx >> (n - 2)) & 1;
            let target_flip = if b1 == 1 { idx ^ (1 << (n - 3)) } else { idx };
            want.set(&[target_flip], dense_before.get(&[idx]));
        }
        assert!(dense_after.sub(&want).unwrap().norm() < 1e-12);
    }

    #[test]
    fn entropy_of_product_state_is_zero() {
        let s = Mps::basis_state(&[1, 0, 1, 1]).unwrap();
        assert!(s.entanglement_entropy(1).unwrap().abs() < 1e-12);
    }

    #[test]
    fn entropy_of_bell_pair_is_ln2() {
        let inv = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let mut v = DenseTensor::zeros(&[4]);
        v.set(&[0], inv);
        v.set(&[3], inv);
        let s = Mps::from_dense_state(&v, 2, 2).unwrap();
        let ent = s.entanglement_entropy(0).unwrap();
        assert!((ent - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn entropy_rejects_unnormalized() {
        let mut s = Mps::basis_state(&[0, 0]).unwrap();
        s.tensors[0] = s.tensors[0].scaled(Complex64::new(2.0, 0.0));
        assert!(matches!(
            s.entanglement_entropy(0),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn dense_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let s = random_mps(5, 2, 4, &mut rng);
        let dense = s.to_dense_state().unwrap();
        let back = Mps::from_dense_state(&dense, 5, 2).unwrap();
        let dense2 = back.to_dense_state().unwrap();
        assert!(dense.sub(&dense2).unwrap().norm() < 1e-12 * dense.norm());
    }
}
