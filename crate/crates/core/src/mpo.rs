//! Matrix product operators: construction from Pauli sums, Ising Hamiltonian
//! builders, arithmetic, compression, short-time propagators and exact trace
//! contractions.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::mps::Mps;
use crate::pauli::PauliSum;
use crate::tensor::{contract, DenseTensor, C_ONE, C_ZERO};
use crate::tt::{self, TruncationReport};

#[derive(Debug, Clone)]
pub struct Mpo {
    tensors: Vec<DenseTensor>,
}

impl Mpo {
    pub fn from_site_tensors(tensors: Vec<DenseTensor>) -> Result<Self> {
        if tensors.is_empty() {
            return Err(Error::InvalidArgument("mpo: no site tensors".into()));
        }
        for (i, t) in tensors.iter().enumerate() {
            if t.rank() != 4 {
                return Err(Error::ShapeMismatch(format!(
                    "mpo site {i}: expected rank 4, got {:?}",
                    t.shape()
                )));
            }
        }
        if tensors[0].shape()[0] != 1 || tensors[tensors.len() - 1].shape()[3] != 1 {
            return Err(Error::ShapeMismatch("mpo: boundary bonds must be 1".into()));
        }
        for i in 0..tensors.len() - 1 {
            if tensors[i].shape()[3] != tensors[i + 1].shape()[0] {
                return Err(Error::ShapeMismatch(format!(
                    "mpo: bond mismatch between sites {i} and {}",
                    i + 1
                )));
            }
        }
        Ok(Mpo { tensors })
    }

    pub fn identity(n: usize) -> Self {
        Self::identity_with_dims(&vec![2; n])
    }

    pub fn identity_with_dims(dims: &[usize]) -> Self {
        let tensors = dims
            .iter()
            .map(|&d| {
                let mut t = DenseTensor::zeros(&[1, d, d, 1]);
                for s in 0..d {
                    t.set(&[0, s, s, 0], C_ONE);
                }
                t
            })
            .collect();
        Mpo { tensors }
    }

    pub fn zero(n: usize) -> Self {
        let tensors = (0..n).map(|_| DenseTensor::zeros(&[1, 2, 2, 1])).collect();
        Mpo { tensors }
    }

    pub fn n_sites(&self) -> usize {
        self.tensors.len()
    }

    pub fn phys_dim_out(&self, site: usize) -> usize {
        self.tensors[site].shape()[1]
    }

    pub fn phys_dim_in(&self, site: usize) -> usize {
        self.tensors[site].shape()[2]
    }

    pub fn tensor(&self, site: usize) -> &DenseTensor {
        &self.tensors[site]
    }

    pub fn tensors(&self) -> &[DenseTensor] {
        &self.tensors
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        self.tensors.iter().skip(1).map(|t| t.shape()[0]).collect()
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    pub fn scaled(&self, alpha: Complex64) -> Self {
        let mut out = self.clone();
        out.tensors[0] = out.tensors[0].scaled(alpha);
        out
    }

    /// Conjugate transpose (swap physical legs, conjugate entries).
    pub fn adjoint(&self) -> Self {
        Mpo {
            tensors: self
                .tensors
                .iter()
                .map(|t| t.conj().permute(&[0, 2, 1, 3]))
                .collect(),
        }
    }

    /// Transpose without conjugation.
    pub fn transpose_phys(&self) -> Self {
        Mpo {
            tensors: self.tensors.iter().map(|t| t.permute(&[0, 2, 1, 3])).collect(),
        }
    }

    fn flatten(&self) -> Vec<DenseTensor> {
        self.tensors
            .iter()
            .map(|t| {
                let s = t.shape();
                t.reshape(&[s[0], s[1] * s[2], s[3]]).expect("flatten")
            })
            .collect()
    }

    fn unflatten(flat: Vec<DenseTensor>, dims: &[(usize, usize)]) -> Result<Self> {
        let tensors = flat
            .into_iter()
            .zip(dims)
            .map(|(t, &(dout, din))| {
                let s = t.shape().to_vec();
                t.into_reshaped(&[s[0], dout, din, s[2]])
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_site_tensors(tensors)
    }

    fn phys_dims(&self) -> Vec<(usize, usize)> {
        self.tensors
            .iter()
            .map(|t| (t.shape()[1], t.shape()[2]))
            .collect()
    }

    pub fn compress(&mut self, max_bond: usize, cutoff: f64) -> Result<TruncationReport> {
        let dims = self.phys_dims();
        let mut flat = self.flatten();
        let report = tt::compress(&mut flat, max_bond, cutoff)?;
        *self = Self::unflatten(flat, &dims)?;
        Ok(report)
    }

    pub fn add(&self, other: &Mpo) -> Result<Mpo> {
        if self.n_sites() != other.n_sites() {
            return Err(Error::InvalidArgument(format!(
                "mpo add: {} vs {} sites",
                self.n_sites(),
                other.n_sites()
            )));
        }
        if self.phys_dims() != other.phys_dims() {
            return Err(Error::ShapeMismatch("mpo add: physical dims differ".into()));
        }
        let summed = tt::direct_sum(&self.flatten(), &other.flatten())?;
        Self::unflatten(summed, &self.phys_dims())
    }

    /// Operator product `self * other` with compression.
    pub fn mul(
        &self,
        other: &Mpo,
        max_bond: usize,
        cutoff: f64,
    ) -> Result<(Mpo, TruncationReport)> {
        if self.n_sites() != other.n_sites() {
            return Err(Error::InvalidArgument(format!(
                "mpo mul: {} vs {} sites",
                self.n_sites(),
                other.n_sites()
            )));
        }
        let n = self.n_sites();
        let mut tensors = Vec::with_capacity(n);
        for i in 0..n {
            let a = &self.tensors[i]; // (l, o, m, r)
            let b = &other.tensors[i]; // (l2, m, i, r2)
            if a.shape()[2] != b.shape()[1] {
                return Err(Error::ShapeMismatch(format!(
                    "mpo mul: inner physical dims differ at site {i}"
                )));
            }
            let t = contract(a, b, &[(2, 1)])?; // (l, o, r, l2, i, r2)
            let t = t.permute(&[0, 3, 1, 4, 2, 5]); // (l, l2, o, i, r, r2)
            let s = t.shape().to_vec();
            tensors.push(t.into_reshaped(&[s[0] * s[1], s[2], s[3], s[4] * s[5]])?);
        }
        let mut out = Self::from_site_tensors(tensors)?;
        let report = out.compress(max_bond, cutoff)?;
        Ok((out, report))
    }

    /// Apply to a state: `self * s` with truncation.
    pub fn apply(
        &self,
        s: &Mps,
        max_bond: usize,
        cutoff: f64,
    ) -> Result<(Mps, TruncationReport)> {
        if self.n_sites() != s.n_sites() {
            return Err(Error::InvalidArgument(format!(
                "mpo apply: {} vs {} sites",
                self.n_sites(),
                s.n_sites()
            )));
        }
        let n = self.n_sites();
        let mut tensors = Vec::with_capacity(n);
        for i in 0..n {
            let w = &self.tensors[i]; // (l, o, i, r)
            let t = s.tensor(i); // (ls, i, rs)
            if w.shape()[2] != t.shape()[1] {
                return Err(Error::ShapeMismatch(format!(
                    "mpo apply: physical dims differ at site {i}"
                )));
            }
            let c = contract(w, t, &[(2, 1)])?; // (l, o, r, ls, rs)
            let c = c.permute(&[0, 3, 1, 2, 4]); // (l, ls, o, r, rs)
            let sshape = c.shape().to_vec();
            tensors.push(c.into_reshaped(&[sshape[0] * sshape[1], sshape[2], sshape[3] * sshape[4]])?);
        }
        let report = tt::compress(&mut tensors, max_bond, cutoff)?;
        let mut out = Mps::from_site_tensors(tensors)?;
        out.set_center(Some(0));
        Ok((out, report))
    }

    /// Trace of the operator.
    pub fn trace(&self) -> Result<Complex64> {
        let mut env = DenseTensor::from_data(&[1], vec![C_ONE])?;
        for t in &self.tensors {
            let (dout, din) = (t.shape()[1], t.shape()[2]);
            if dout != din {
                return Err(Error::ShapeMismatch("trace: non-square site".into()));
            }
            let id = DenseTensor::identity(dout);
            let closed = contract(t, &id, &[(1, 0), (2, 1)])?; // (l, r)
            env = contract(&env, &closed, &[(0, 0)])?;
        }
        Ok(env.scalar_value())
    }

    /// Exact `tr[O_1 O_2 ... O_k]` by boundary contraction; no truncation.
    pub fn trace_product(ops: &[&Mpo]) -> Result<Complex64> {
        if ops.is_empty() {
            return Err(Error::InvalidArgument("trace_product: empty list".into()));
        }
        let n = ops[0].n_sites();
        for o in ops {
            if o.n_sites() != n {
                return Err(Error::InvalidArgument(
                    "trace_product: site count mismatch".into(),
                ));
            }
        }
        let k = ops.len();
        // env axes: one left-bond axis per operator.
        let mut env = DenseTensor::from_data(&[1; 1], vec![C_ONE])?
            .reshape(&vec![1usize; k])
            .expect("env");
        for site in 0..n {
            // Contract operator 1..k at this site; physical legs chain
            // through, with the first out leg left dangling until the end.
            //
            // env axes before: (a_1 ... a_k); after op j the layout is
            // (a_{j+1} ... a_k, sigma0, b_1 ... b_j, sigma_j).
            let mut cur = env;
            for (j, op) in ops.iter().enumerate() {
                let t = &op.tensors[site]; // (a_j, out, in, b_j)
                if j == 0 {
                    // contract over a_1 (axis 0 of env)
                    cur = contract(&cur, t, &[(0, 0)])?;
                    // now: (a_2..a_k, out0, in0(->sigma1), b_1)
                    // reorder to (a_2..a_k, sigma0=out0, b_1, sigma1=in0)
                    let r = cur.rank();
                    let mut perm: Vec<usize> = (0..r - 3).collect();
                    perm.push(r - 3); // out0
                    perm.push(r - 1); // b_1
                    perm.push(r - 2); // in0 -> dangling sigma1
                    cur = cur.permute(&perm);
                } else {
                    // cur: (a_{j+1}..a_k, sigma0, b_1..b_j, sigma_j)
                    // contract a_{j+1} (axis 0) and sigma_j (last) with t's
                    // (left bond, out).
                    let last = cur.rank() - 1;
                    cur = contract(&cur, t, &[(0, 0), (last, 1)])?;
                    // result: (a_{j+2}..a_k, sigma0, b_1..b_j, in_j, b_{j+1})
                    let r = cur.rank();
                    let mut perm: Vec<usize> = (0..r - 2).collect();
                    perm.push(r - 1); // b_{j+1}
                    perm.push(r - 2); // in_j -> dangling sigma_{j+1}
                    cur = cur.permute(&perm);
                }
            }
            // cur: (sigma0, b_1..b_k, sigma_k); close the physical loop.
            let d = cur.shape()[0];
            let id = DenseTensor::identity(d);
            let last = cur.rank() - 1;
            env = contract(&cur, &id, &[(0, 0), (last, 1)])?;
        }
        Ok(env.scalar_value())
    }

    pub fn frobenius_norm(&self) -> Result<f64> {
        let adj = self.adjoint();
        let t = Self::trace_product(&[&adj, self])?;
        Ok(t.re.max(0.0).sqrt())
    }

    /// `<bra_bits| O |ket_bits>` for computational basis states.
    pub fn matrix_element(&self, bra_bits: &[u8], ket_bits: &[u8]) -> Result<Complex64> {
        if bra_bits.len() != self.n_sites() || ket_bits.len() != self.n_sites() {
            return Err(Error::InvalidArgument(
                "matrix_element: bit-string length mismatch".into(),
            ));
        }
        let mut env = DenseTensor::from_data(&[1], vec![C_ONE])?;
        for (i, t) in self.tensors.iter().enumerate() {
            let (l, _, _, r) = (
                t.shape()[0],
                t.shape()[1],
                t.shape()[2],
                t.shape()[3],
            );
            let slice = DenseTensor::from_fn(&[l, r], |idx| {
                t.get(&[idx[0], bra_bits[i] as usize, ket_bits[i] as usize, idx[1]])
            });
            env = contract(&env, &slice, &[(0, 0)])?;
        }
        Ok(env.scalar_value())
    }

    /// Dense matrix; intended for small `N`.
    pub fn to_dense(&self) -> Result<DenseTensor> {
        let n = self.n_sites();
        if n > 10 {
            return Err(Error::ResourceCap {
                what: "dense mpo sites",
                got: n,
                cap: 10,
            });
        }
        let mut acc = DenseTensor::from_data(&[1, 1, 1], vec![C_ONE])?; // (out, in, bond)
        for t in &self.tensors {
            let (_, dout, din, r) = (
                t.shape()[0],
                t.shape()[1],
                t.shape()[2],
                t.shape()[3],
            );
            let merged = contract(&acc, t, &[(2, 0)])?; // (O, I, o, i, r)
            let (bo, bi) = (merged.shape()[0], merged.shape()[1]);
            let merged = merged.permute(&[0, 2, 1, 3, 4]); // (O, o, I, i, r)
            acc = merged.into_reshaped(&[bo * dout, bi * din, r])?;
        }
        let d = acc.shape()[0];
        acc.into_reshaped(&[d, d])
    }

    /// Vectorize into an MPS with physical dimension `d_out * d_in`
    /// (row-major pairing: combined index = out * d_in + in).
    pub fn to_choi_mps(&self) -> Mps {
        let tensors = self.flatten();
        let mut out = Mps::from_site_tensors(tensors).expect("choi mps");
        out.set_center(None);
        out
    }

    /// Inverse of `to_choi_mps` for square physical dimensions.
    pub fn from_choi_mps(s: &Mps) -> Result<Mpo> {
        let tensors = s
            .tensors()
            .iter()
            .map(|t| {
                let (l, d, r) = (t.shape()[0], t.shape()[1], t.shape()[2]);
                let side = (d as f64).sqrt().round() as usize;
                if side * side != d {
                    return Err(Error::ShapeMismatch(format!(
                        "from_choi_mps: physical dim {d} is not a square"
                    )));
                }
                t.reshape(&[l, side, side, r])
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_site_tensors(tensors)
    }

    /// Exact MPO factorization of a dense operator on `n` qubits.
    pub fn from_dense(mat: &DenseTensor, n: usize) -> Result<Mpo> {
        let dim = 1usize << n;
        if mat.shape() != [dim, dim] {
            return Err(Error::ShapeMismatch(format!(
                "from_dense: expected {dim}x{dim}, got {:?}",
                mat.shape()
            )));
        }
        // Regroup (rows x cols) into per-site (out, in) pairs, then factorize
        // as a physical-dimension-4 state.
        let mut axes = Vec::with_capacity(2 * n);
        for k in 0..n {
            axes.push(k);
            axes.push(n + k);
        }
        let paired = mat
            .reshape(&vec![2; 2 * n])?
            .permute(&axes)
            .into_reshaped(&[1 << (2 * n)])?;
        let choi = Mps::from_dense_state(&paired, n, 4)?;
        Self::from_choi_mps(&choi)
    }

    pub fn from_pauli_sum(p: &PauliSum, cutoff: f64) -> Result<Mpo> {
        if p.is_zero() {
            return Err(Error::InvalidArgument(
                "from_pauli_sum: empty sum (use Mpo::zero for the zero operator)".into(),
            ));
        }
        let terms = p.terms();
        let n = p.nsites();
        let mpo = Self::build_term_tree(&terms, n, cutoff)?;
        Ok(mpo)
    }

    fn build_term_tree(
        terms: &[(crate::pauli::PauliString, Complex64)],
        n: usize,
        cutoff: f64,
    ) -> Result<Mpo> {
        if terms.len() == 1 {
            let (string, coeff) = &terms[0];
            let tensors: Vec<DenseTensor> = string
                .ops()
                .iter()
                .enumerate()
                .map(|(site, op)| {
                    let m = op.matrix();
                    let scale = if site == 0 { *coeff } else { C_ONE };
                    DenseTensor::from_fn(&[1, 2, 2, 1], |idx| {
                        m.get(&[idx[1], idx[2]]) * scale
                    })
                })
                .collect();
            return Self::from_site_tensors(tensors);
        }
        let mid = terms.len() / 2;
        let left = Self::build_term_tree(&terms[..mid], n, cutoff)?;
        let right = Self::build_term_tree(&terms[mid..], n, cutoff)?;
        let mut sum = left.add(&right)?;
        sum.compress(usize::MAX, cutoff)?;
        Ok(sum)
    }
}

/// `<s| O |s>` by exact sandwich contraction.
pub fn expval(s: &Mps, o: &Mpo) -> Result<Complex64> {
    sandwich(s, &[o], s)
}

/// Spot-check Hermiticity through expectation values on random states.
pub fn hermitian_spot_check(h: &Mpo) -> Result<()> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..3 {
        let mut s = crate::testutil::random_mps(h.n_sites(), h.phys_dim_in(0), 2, &mut rng);
        s.canonicalize(0)?;
        s.normalize()?;
        let e = expval(&s, h)?;
        if e.im.abs() > 1e-8 * (1.0 + e.re.abs()) {
            return Err(Error::NotHermitian {
                defect: e.im.abs(),
                tol: 1e-8,
            });
        }
    }
    Ok(())
}

/// `<bra| O_1 O_2 ... O_k |ket>` exactly.
pub fn sandwich(bra: &Mps, ops: &[&Mpo], ket: &Mps) -> Result<Complex64> {
    let n = bra.n_sites();
    if ket.n_sites() != n || ops.iter().any(|o| o.n_sites() != n) {
        return Err(Error::InvalidArgument("sandwich: site count mismatch".into()));
    }
    let k = ops.len();
    let mut env = DenseTensor::from_data(&[1], vec![C_ONE])?
        .reshape(&vec![1usize; k + 2])
        .expect("env");
    for site in 0..n {
        // env axes: (bra_bond, w_1..w_k, ket_bond)
        let bt = bra.tensor(site).conj();
        let mut cur = contract(&env, &bt, &[(0, 0)])?;
        // (w_1..w_k, ket, sigma_bra, r_bra) -> keep sigma chained through ops
        let r = cur.rank();
        let perm: Vec<usize> = {
            let mut p: Vec<usize> = (0..r - 2).collect();
            p.push(r - 1); // r_bra
            p.push(r - 2); // sigma (dangling, to be eaten by first op's out)
            p
        };
        cur = cur.permute(&perm);
        for op in ops {
            let t = op.tensor(site); // (w, out, in, w')
            let last = cur.rank() - 1;
            cur = contract(&cur, t, &[(0, 0), (last, 1)])?;
            // (..., in, w') -> move w' before the dangling leg
            let rr = cur.rank();
            let mut p: Vec<usize> = (0..rr - 2).collect();
            p.push(rr - 1);
            p.push(rr - 2);
            cur = cur.permute(&p);
        }
        // (ket_bond_old, r_bra, w'_1..w'_k, sigma_ket)
        let kt = ket.tensor(site);
        let last = cur.rank() - 1;
        cur = contract(&cur, kt, &[(0, 0), (last, 1)])?;
        // (r_bra, w'_1..w'_k, r_ket) -> put bra bond first already true
        env = cur;
    }
    Ok(env.scalar_value())
}

/// Couplings and fields of the nearest-neighbour quantum Ising chain.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IsingParams {
    pub j: Vec<f64>,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

impl IsingParams {
    pub fn new(j: Vec<f64>, g: Vec<f64>, h: Vec<f64>) -> Result<Self> {
        let n = g.len();
        if n == 0 {
            return Err(Error::InvalidArgument("ising: empty chain".into()));
        }
        if h.len() != n || j.len() + 1 != n {
            return Err(Error::InvalidArgument(format!(
                "ising: lengths J={}, g={}, h={} are inconsistent",
                j.len(),
                g.len(),
                h.len()
            )));
        }
        Ok(IsingParams { j, g, h })
    }

    pub fn uniform(n: usize, j: f64, g: f64, h: f64) -> Result<Self> {
        Self::new(vec![j; n.saturating_sub(1)], vec![g; n], vec![h; n])
    }

    pub fn nsites(&self) -> usize {
        self.g.len()
    }

    /// Elementwise `(1 - lambda) * a + lambda * b`.
    pub fn interpolate(a: &IsingParams, b: &IsingParams, lambda: f64) -> Result<Self> {
        if a.nsites() != b.nsites() {
            return Err(Error::InvalidArgument("interpolate: size mismatch".into()));
        }
        let mix = |x: &[f64], y: &[f64]| -> Vec<f64> {
            x.iter()
                .zip(y)
                .map(|(xa, xb)| (1.0 - lambda) * xa + lambda * xb)
                .collect()
        };
        Ok(IsingParams {
            j: mix(&a.j, &b.j),
            g: mix(&a.g, &b.g),
            h: mix(&a.h, &b.h),
        })
    }

    /// Elementwise `b - a`; the lambda-derivative of the interpolating path.
    pub fn difference(a: &IsingParams, b: &IsingParams) -> Result<Self> {
        if a.nsites() != b.nsites() {
            return Err(Error::InvalidArgument("difference: size mismatch".into()));
        }
        let diff = |x: &[f64], y: &[f64]| -> Vec<f64> {
            x.iter().zip(y).map(|(xa, xb)| xb - xa).collect()
        };
        Ok(IsingParams {
            j: diff(&a.j, &b.j),
            g: diff(&a.g, &b.g),
            h: diff(&a.h, &b.h),
        })
    }

    pub fn to_pauli_sum(&self) -> Result<PauliSum> {
        use crate::pauli::Pauli;
        let n = self.nsites();
        let mut sum = PauliSum::zero(n)?;
        for (k, jk) in self.j.iter().enumerate() {
            if *jk != 0.0 {
                sum.add_term(
                    Complex64::new(*jk, 0.0),
                    &[(k, Pauli::Z), (k + 1, Pauli::Z)],
                )?;
            }
        }
        for (k, gk) in self.g.iter().enumerate() {
            if *gk != 0.0 {
                sum.add_term(Complex64::new(*gk, 0.0), &[(k, Pauli::X)])?;
            }
        }
        for (k, hk) in self.h.iter().enumerate() {
            if *hk != 0.0 {
                sum.add_term(Complex64::new(*hk, 0.0), &[(k, Pauli::Z)])?;
            }
        }
        Ok(sum)
    }
}

/// Exact bond-3 MPO of the quantum Ising Hamiltonian.
pub fn ising_hamiltonian(p: &IsingParams) -> Result<Mpo> {
    let n = p.nsites();
    let x = crate::pauli::Pauli::X.matrix();
    let z = crate::pauli::Pauli::Z.matrix();
    let id = DenseTensor::identity(2);
    if n == 1 {
        let field = x.scaled(Complex64::new(p.g[0], 0.0))
            .add(&z.scaled(Complex64::new(p.h[0], 0.0)))?;
        let t = DenseTensor::from_fn(&[1, 2, 2, 1], |idx| field.get(&[idx[1], idx[2]]));
        return Mpo::from_site_tensors(vec![t]);
    }
    let mut tensors = Vec::with_capacity(n);
    for k in 0..n {
        let field = x.scaled(Complex64::new(p.g[k], 0.0))
            .add(&z.scaled(Complex64::new(p.h[k], 0.0)))?;
        let coupling_z = if k < n - 1 {
            z.scaled(Complex64::new(p.j[k], 0.0))
        } else {
            DenseTensor::zeros(&[2, 2])
        };
        // Lower-triangular transfer block:
        //   [ 1        0      0 ]
        //   [ Z        0      0 ]
        //   [ field  J_k Z    1 ]
        // with left boundary row 2 and right boundary column 0.
        let block = |a: usize, b: usize| -> Option<&DenseTensor> {
            match (a, b) {
                (0, 0) => Some(&id),
                (1, 0) => Some(&z),
                (2, 0) => Some(&field),
                (2, 1) => Some(&coupling_z),
                (2, 2) => Some(&id),
                _ => None,
            }
        };
        let (lmin, lmax) = if k == 0 { (2, 3) } else { (0, 3) };
        let (rmin, rmax) = if k == n - 1 { (0, 1) } else { (0, 3) };
        let t = DenseTensor::from_fn(
            &[lmax - lmin, 2, 2, rmax - rmin],
            |idx| match block(idx[0] + lmin, idx[3] + rmin) {
                Some(m) => m.get(&[idx[1], idx[2]]),
                None => C_ZERO,
            },
        );
        tensors.push(t);
    }
    Mpo::from_site_tensors(tensors)
}

/// Short-time propagator `1 - i tau H (+ (i tau)^2 H^2 / 2)` in compressed
/// MPO form.
pub fn taylor_propagator(h: &Mpo, tau: f64, order: u8, cutoff: f64) -> Result<Mpo> {
    if tau <= 0.0 {
        return Err(Error::InvalidArgument("taylor_propagator: tau <= 0".into()));
    }
    if order != 1 && order != 2 {
        return Err(Error::InvalidArgument(
            "taylor_propagator: order must be 1 or 2".into(),
        ));
    }
    let minus_i_tau = Complex64::new(0.0, -tau);
    let mut w = Mpo::identity(h.n_sites()).add(&h.scaled(minus_i_tau))?;
    if order == 2 {
        let (h2, _) = h.mul(h, usize::MAX, 0.0)?;
        w = w.add(&h2.scaled(minus_i_tau * minus_i_tau * 0.5))?;
    }
    w.compress(usize::MAX, cutoff)?;
    Ok(w)
}

/// Second-order Trotter step `exp(-i tau/2 Hx) exp(-i tau (Hzz + Hz))
/// exp(-i tau/2 Hx)` as a bond-2 MPO.
pub fn trotter2_propagator(p: &IsingParams, tau: f64) -> Result<Mpo> {
    if tau <= 0.0 {
        return Err(Error::InvalidArgument("trotter2_propagator: tau <= 0".into()));
    }
    let n = p.nsites();
    let spin = |s: usize| 1.0 - 2.0 * s as f64;
    // Diagonal part: bond carries the previous site's spin.
    let mut diag = Vec::with_capacity(n);
    for k in 0..n {
        let l = if k == 0 { 1 } else { 2 };
        let r = if k == n - 1 { 1 } else { 2 };
        let t = DenseTensor::from_fn(&[l, 2, 2, r], |idx| {
            let (a, so, si, b) = (idx[0], idx[1], idx[2], idx[3]);
            if so != si {
                return C_ZERO;
            }
            if k < n - 1 && b != so {
                return C_ZERO;
            }
            let mut phase = -tau * p.h[k] * spin(so);
            if k > 0 {
                phase -= tau * p.j[k - 1] * spin(a) * spin(so);
            }
            Complex64::from_polar(1.0, phase)
        });
        diag.push(t);
    }
    let diag = Mpo::from_site_tensors(diag)?;

    // Half-step transverse field: product of single-site rotations.
    let xhalf_tensors: Vec<DenseTensor> = (0..n)
        .map(|k| {
            let theta = tau * p.g[k] / 2.0;
            let (c, s) = (theta.cos(), theta.sin());
            DenseTensor::from_data(
                &[1, 2, 2, 1],
                vec![
                    Complex64::new(c, 0.0),
                    Complex64::new(0.0, -s),
                    Complex64::new(0.0, -s),
                    Complex64::new(c, 0.0),
                ],
            )
            .expect("xhalf")
        })
        .collect();
    let xhalf = Mpo::from_site_tensors(xhalf_tensors)?;

    let (inner, _) = diag.mul(&xhalf, usize::MAX, 0.0)?;
    let (full, _) = xhalf.mul(&inner, usize::MAX, 0.0)?;
    Ok(full)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::{self, Pauli, PauliSum};
    use crate::tensor::expm_hermitian_times;
    use crate::testutil::{random_mpo, random_mps};
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sum_x(n: usize) -> PauliSum {
        let mut s = PauliSum::zero(n).unwrap();
        for k in 0..n {
            s.add_term(C_ONE, &[(k, Pauli::X)]).unwrap();
        }
        s
    }

    #[test]
    fn from_pauli_sum_sum_x_bond_two() {
        let p = sum_x(3);
        let mpo = Mpo::from_pauli_sum(&p, 1e-24).unwrap();
        assert_eq!(mpo.max_bond(), 2);
        let dense = mpo.to_dense().unwrap();
        let want = p.to_dense().unwrap();
        assert!(dense.sub(&want).unwrap().norm() < 1e-10 * want.norm());
    }

    #[test]
    fn from_pauli_sum_single_term_bond_one() {
        let p = PauliSum::from_terms(4, [(C_ONE, vec![(0, Pauli::Z), (1, Pauli::Z)])]).unwrap();
        let mpo = Mpo::from_pauli_sum(&p, 1e-24).unwrap();
        assert_eq!(mpo.max_bond(), 1);
    }

    #[test]
    fn from_pauli_sum_ising_bond_three() {
        let _n = 6;
        let params = IsingParams::new(
            vec![0.7, -1.1, 0.4, 0.9, -0.3],
            vec![0.5, 0.2, -0.8, 0.1, 0.6, -0.4],
            vec![0.3, -0.2, 0.9, 0.0, -0.5, 0.7],
        )
        .unwrap();
        let p = params.to_pauli_sum().unwrap();
        let mpo = Mpo::from_pauli_sum(&p, 1e-24).unwrap();
        assert_eq!(mpo.max_bond(), 3);
        let dense = mpo.to_dense().unwrap();
        let want = p.to_dense().unwrap();
        assert!(dense.sub(&want).unwrap().norm() < 1e-10 * want.norm());
    }

    #[test]
    fn ising_mpo_diagonal_expectation() {
        let _n = 5;
        let params = IsingParams::new(
            vec![1.0, -0.5, 0.25, 2.0],
            vec![0.3; 5],
            vec![0.1, 0.2, -0.3, 0.4, -0.5],
        )
        .unwrap();
        let h = ising_hamiltonian(&params).unwrap();
        let zeros = Mps::basis_state(&[0; 5]).unwrap();
        let got = expval(&zeros, &h).unwrap();
        let want: f64 = params.j.iter().sum::<f64>() + params.h.iter().sum::<f64>();
        assert!((got - Complex64::new(want, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn ising_mpo_matches_pauli_dense() {
        let params = IsingParams::new(
            vec![1.2, -0.4, 0.8, 0.5, -1.0],
            vec![0.9, -0.3, 0.2, 0.0, 0.7, -0.6],
            vec![-0.1, 0.4, 0.3, -0.9, 0.2, 0.5],
        )
        .unwrap();
        let h = ising_hamiltonian(&params).unwrap();
        assert_eq!(h.max_bond(), 3);
        let dense = h.to_dense().unwrap();
        let want = params.to_pauli_sum().unwrap().to_dense().unwrap();
        assert!(dense.sub(&want).unwrap().norm() < 1e-11 * want.norm());
    }

    #[test]
    fn ising_mpo_sampled_elements_large_n() {
        // Uniform J=1, g=h=0.3 at N=14, checked against the Pauli-term rule
        // on sampled basis pairs.
        let n = 14;
        let params = IsingParams::uniform(n, 1.0, 0.3, 0.3).unwrap();
        let h = ising_hamiltonian(&params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let ket: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
            let flip_one = rng.random_range(0..2u8) == 1;
            let mut bra = ket.clone();
            if flip_one {
                let site = rng.random_range(0..n);
                bra[site] ^= 1;
            }
            let got = h.matrix_element(&bra, &ket).unwrap();
            // Diagonal: sum of J for aligned neighbours minus anti-aligned,
            // plus longitudinal fields; one-flip: transverse field.
            let want = if bra == ket {
                let mut e = 0.0;
                for k in 0..n - 1 {
                    let sa = 1.0 - 2.0 * ket[k] as f64;
                    let sb = 1.0 - 2.0 * ket[k + 1] as f64;
                    e += params.j[k] * sa * sb;
                }
                for k in 0..n {
                    e += params.h[k] * (1.0 - 2.0 * ket[k] as f64);
                }
                e
            } else {
                let diff: Vec<usize> = (0..n).filter(|&k| bra[k] != ket[k]).collect();
                if diff.len() == 1 {
                    params.g[diff[0]]
                } else {
                    0.0
                }
            };
            assert!(
                (got - Complex64::new(want, 0.0)).norm() < 1e-10,
                "element mismatch: got {got}, want {want}"
            );
        }
    }

    #[test]
    fn transverse_only_ground_energy() {
        // H = g* sum X has product ground state |->^N with energy -N g*.
        let n = 4;
        let gstar = 0.48;
        let params = IsingParams::uniform(n, 0.0, gstar, 0.0).unwrap();
        let h = ising_hamiltonian(&params).unwrap();
        let inv = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let minus = Mps::uniform_qubit_product(n, [inv, -inv]).unwrap();
        let e = expval(&minus, &h).unwrap();
        assert!((e.re - (-(n as f64) * gstar)).abs() < 1e-12);
    }

    #[test]
    fn apply_identity_preserves_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let mut s = random_mps(4, 2, 3, &mut rng);
        s.canonicalize(0).unwrap();
        s.normalize().unwrap();
        let id = Mpo::identity(4);
        let (out, _) = id.apply(&s, usize::MAX, 0.0).unwrap();
        let fid = s.inner(&out).unwrap().norm();
        assert!((fid - 1.0).abs() < 1e-12);
    }

    #[test]
    fn apply_sum_x_on_zeros() {
        let p = sum_x(2);
        let mpo = Mpo::from_pauli_sum(&p, 1e-24).unwrap();
        let zeros = Mps::basis_state(&[0, 0]).unwrap();
        let (out, _) = mpo.apply(&zeros, usize::MAX, 0.0).unwrap();
        let dense = out.to_dense_state().unwrap();
        // |10> + |01>
        assert!((dense.get(&[1]) - C_ONE).norm() < 1e-12);
        assert!((dense.get(&[2]) - C_ONE).norm() < 1e-12);
        assert!(dense.get(&[0]).norm() < 1e-12 && dense.get(&[3]).norm() < 1e-12);
    }

    #[test]
    fn apply_random_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let o = random_mpo(6, 3, &mut rng);
        let mut s = random_mps(6, 2, 4, &mut rng);
        s.canonicalize(0).unwrap();
        s.normalize().unwrap();
        let (out, _) = o.apply(&s, usize::MAX, 0.0).unwrap();
        let got = out.to_dense_state().unwrap();
        let want = contract(&o.to_dense().unwrap(), &s.to_dense_state().unwrap(), &[(1, 0)]).unwrap();
        assert!(got.sub(&want).unwrap().norm() < 1e-11 * want.norm().max(1.0));
    }

    #[test]
    fn mul_identity_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let a = random_mpo(4, 3, &mut rng);
        let id = Mpo::identity(4);
        let (prod, _) = a.mul(&id, usize::MAX, 1e-30).unwrap();
        let d1 = prod.to_dense().unwrap();
        let d2 = a.to_dense().unwrap();
        assert!(d1.sub(&d2).unwrap().norm() < 1e-10 * d2.norm());
    }

    #[test]
    fn add_cancellation_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let a = random_mpo(4, 3, &mut rng);
        let s = a.add(&a.scaled(-C_ONE)).unwrap();
        assert!(s.frobenius_norm().unwrap() < 1e-12 * a.frobenius_norm().unwrap());
    }

    #[test]
    fn add_bond_is_at_most_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(54);
        let a = random_mpo(5, 3, &mut rng);
        let b = random_mpo(5, 4, &mut rng);
        let s = a.add(&b).unwrap();
        assert!(s.max_bond() <= a.max_bond() + b.max_bond());
    }

    #[test]
    fn commutator_mpo_vs_pauli_route() {
        let n = 5;
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let mut pa = PauliSum::zero(n).unwrap();
        let mut pb = PauliSum::zero(n).unwrap();
        for k in 0..n - 1 {
            pa.add_term(
                Complex64::new(rng.random::<f64>() - 0.5, 0.0),
                &[(k, Pauli::Z), (k + 1, Pauli::Z)],
            )
            .unwrap();
        }
        for k in 0..n {
            pb.add_term(Complex64::new(rng.random::<f64>() - 0.5, 0.0), &[(k, Pauli::X)])
                .unwrap();
        }
        let ma = Mpo::from_pauli_sum(&pa, 1e-24).unwrap();
        let mb = Mpo::from_pauli_sum(&pb, 1e-24).unwrap();
        let (ab, _) = ma.mul(&mb, usize::MAX, 1e-30).unwrap();
        let (ba, _) = mb.mul(&ma, usize::MAX, 1e-30).unwrap();
        let comm_mpo = ab.add(&ba.scaled(-C_ONE)).unwrap();
        let comm_pauli = pauli::commutator(&pa, &pb).unwrap();
        let comm_ref = Mpo::from_pauli_sum(&comm_pauli, 1e-24).unwrap();
        let d = comm_mpo.to_dense().unwrap();
        let want = comm_ref.to_dense().unwrap();
        assert!(d.sub(&want).unwrap().norm() < 1e-10 * want.norm());
    }

    #[test]
    fn taylor_propagator_small_tau_is_identity() {
        let params = IsingParams::uniform(4, 1.0, 0.5, 0.3).unwrap();
        let h = ising_hamiltonian(&params).unwrap();
        let w = taylor_propagator(&h, 1e-8, 1, 0.0).unwrap();
        let d = w.to_dense().unwrap();
        let id = DenseTensor::identity(16);
        assert!(d.sub(&id).unwrap().norm() < 1e-7);
    }

    #[test]
    fn taylor_first_order_error_scaling() {
        let params = IsingParams::uniform(2, 1.0, 0.0, 0.0).unwrap();
        let h = ising_hamiltonian(&params).unwrap();
        let hd = h.to_dense().unwrap();
        let mut errs = Vec::new();
        for tau in [0.02, 0.01, 0.005] {
            let w = taylor_propagator(&h, tau, 1, 0.0).unwrap().to_dense().unwrap();
            let exact = expm_hermitian_times(&hd, Complex64::new(0.0, -tau)).unwrap();
            let err = w.sub(&exact).unwrap().norm() / exact.norm();
            errs.push(err);
        }
        assert!(errs[1] < 1e-3);
        let slope = (errs[0] / errs[1]).log2();
        assert!((slope - 2.0).abs() < 0.2, "slope {slope}");
    }

    #[test]
    fn taylor_second_order_error_scaling() {
        let params = IsingParams::uniform(3, 1.0, 0.4, 0.2).unwrap();
        let h = ising_hamiltonian(&params).unwrap();
        let hd = h.to_dense().unwrap();
        let mut errs = Vec::new();
        for tau in [0.02, 0.01] {
            let w = taylor_propagator(&h, tau, 2, 0.0).unwrap().to_dense().unwrap();
            let exact = expm_hermitian_times(&hd, Complex64::new(0.0, -tau)).unwrap();
            errs.push(w.sub(&exact).unwrap().norm() / exact.norm());
        }
        let ratio = errs[0] / errs[1];
        assert!((ratio - 8.0).abs() <= 1.6, "ratio {ratio}");
    }

    #[test]
    fn trotter2_commuting_terms_exact() {
        // Pure ZZ chain: the diagonal part is the whole Hamiltonian.
        let params = IsingParams::uniform(4, 0.9, 0.0, 0.0).unwrap();
        let h = ising_hamiltonian(&params).unwrap().to_dense().unwrap();
        let tau = 0.3;
        let u = trotter2_propagator(&params, tau).unwrap().to_dense().unwrap();
        let exact = expm_hermitian_times(&h, Complex64::new(0.0, -tau)).unwrap();
        assert!(u.sub(&exact).unwrap().norm() < 1e-12 * exact.norm());
    }

    #[test]
    fn trotter2_transverse_only_exact() {
        let params = IsingParams::uniform(3, 0.0, 0.7, 0.0).unwrap();
        let h = ising_hamiltonian(&params).unwrap().to_dense().unwrap();
        let tau = 0.25;
        let u = trotter2_propagator(&params, tau).unwrap().to_dense().unwrap();
        let exact = expm_hermitian_times(&h, Complex64::new(0.0, -tau)).unwrap();
        assert!(u.sub(&exact).unwrap().norm() < 1e-12 * exact.norm());
    }

    #[test]
    fn trotter2_bond_dimension_two() {
        let params = IsingParams::uniform(6, 0.5, -1.0, 0.0).unwrap();
        let u = trotter2_propagator(&params, 0.125).unwrap();
        assert!(u.max_bond() <= 2, "bond {}", u.max_bond());
    }

    #[test]
    fn trotter2_third_order_per_step_error() {
        // Interpolated transverse-field chain at lambda = 0.5.
        let pi = IsingParams::uniform(4, 0.0, -1.0, 0.0).unwrap();
        let pf = IsingParams::uniform(4, 1.0, -1.0, 0.0).unwrap();
        let p = IsingParams::interpolate(&pi, &pf, 0.5).unwrap();
        let h = ising_hamiltonian(&p).unwrap().to_dense().unwrap();
        let mut errs = Vec::new();
        for tau in [0.125, 0.0625, 0.03125] {
            let u = trotter2_propagator(&p, tau).unwrap().to_dense().unwrap();
            let exact = expm_hermitian_times(&h, Complex64::new(0.0, -tau)).unwrap();
            errs.push(u.sub(&exact).unwrap().norm());
        }
        let s1 = (errs[0] / errs[1]).log2();
        let s2 = (errs[1] / errs[2]).log2();
        assert!((s1 - 3.0).abs() < 0.3, "slope {s1}");
        assert!((s2 - 3.0).abs() < 0.3, "slope {s2}");
    }

    #[test]
    fn trace_of_identity() {
        for n in [2usize, 3, 5] {
            let t = Mpo::identity(n).trace().unwrap();
            assert!((t.re - 2f64.powi(n as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn trace_product_pauli_orthogonality() {
        let n = 3;
        let z1 = Mpo::from_pauli_sum(
            &PauliSum::from_terms(n, [(C_ONE, vec![(0, Pauli::Z)])]).unwrap(),
            1e-24,
        )
        .unwrap();
        let x1 = Mpo::from_pauli_sum(
            &PauliSum::from_terms(n, [(C_ONE, vec![(0, Pauli::X)])]).unwrap(),
            1e-24,
        )
        .unwrap();
        let zz = Mpo::trace_product(&[&z1, &z1]).unwrap();
        let zx = Mpo::trace_product(&[&z1, &x1]).unwrap();
        assert!((zz.re - 2f64.powi(n as i32)).abs() < 1e-12);
        assert!(zx.norm() < 1e-12);
    }

    #[test]
    fn trace_product_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(56);
        let a = random_mpo(4, 3, &mut rng);
        let b = random_mpo(4, 2, &mut rng);
        let c = random_mpo(4, 2, &mut rng);
        let got = Mpo::trace_product(&[&a, &b, &c]).unwrap();
        let d = contract(
            &contract(&a.to_dense().unwrap(), &b.to_dense().unwrap(), &[(1, 0)]).unwrap(),
            &c.to_dense().unwrap(),
            &[(1, 0)],
        )
        .unwrap();
        let mut want = C_ZERO;
        let dim = d.shape()[0];
        for i in 0..dim {
            want += d.get(&[i, i]);
        }
        assert!((got - want).norm() < 1e-10 * want.norm().max(1.0));
    }

    #[test]
    fn sandwich_expval_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(57);
        let o = random_mpo(5, 3, &mut rng);
        let mut s = random_mps(5, 2, 4, &mut rng);
        s.canonicalize(0).unwrap();
        s.normalize().unwrap();
        let got = expval(&s, &o).unwrap();
        let sd = s.to_dense_state().unwrap();
        let od = o.to_dense().unwrap();
        let want = contract(&sd.conj(), &contract(&od, &sd, &[(1, 0)]).unwrap(), &[(0, 0)])
            .unwrap()
            .scalar_value();
        assert!((got - want).norm() < 1e-11);
    }

    #[test]
    fn entropy_matches_dense_reduced_density_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(58);
        let mut s = random_mps(6, 2, 5, &mut rng);
        s.canonicalize(0).unwrap();
        s.normalize().unwrap();
        let bond = 2; // between sites 2 and 3
        let got = s.entanglement_entropy(bond).unwrap();
        let dense = s.to_dense_state().unwrap();
        let dl = 1usize << (bond + 1);
        let dr = 1usize << (6 - bond - 1);
        let psi = dense.reshape(&[dl, dr]).unwrap();
        let rho = contract(&psi, &psi.conj(), &[(1, 1)]).unwrap();
        let (vals, _) = crate::tensor::eigh_small(&rho).unwrap();
        let want: f64 = vals
            .iter()
            .filter(|p| **p > 1e-16)
            .map(|p| -p * p.ln())
            .sum();
        assert!((got - want).abs() < 1e-10, "got {got} want {want}");
    }
}
