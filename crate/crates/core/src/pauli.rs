//! Symbolic Pauli-string arithmetic: weighted sums, products and nested
//! commutators.
//!
//! Strings are stored in the symplectic form `X^x Z^z` with one bit per site,
//! so products and commutators reduce to XORs and popcount parities. The
//! `i`-factors of `Y = i X Z` are folded into the coefficients and restored
//! when strings are presented site-by-site.

use std::fmt::Write as _;

use num_complex::Complex64;
use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, C_ONE, C_ZERO};

/// Term-count cap for nested commutators; growth beyond this aborts.
pub const DEFAULT_TERM_CAP: usize = 8_000_000;

/// Coefficients below this magnitude are pruned after every operation.
pub const COEFF_PRUNE_THRESHOLD: f64 = 1e-14;

pub const MAX_SITES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    pub fn from_char(c: char) -> Option<Pauli> {
        match c {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    /// Dense 2x2 matrix.
    pub fn matrix(self) -> DenseTensor {
        let i = Complex64::new(0.0, 1.0);
        let rows = match self {
            Pauli::I => [C_ONE, C_ZERO, C_ZERO, C_ONE],
            Pauli::X => [C_ZERO, C_ONE, C_ONE, C_ZERO],
            Pauli::Y => [C_ZERO, -i, i, C_ZERO],
            Pauli::Z => [C_ONE, C_ZERO, C_ZERO, -C_ONE],
        };
        DenseTensor::from_data(&[2, 2], rows.to_vec()).expect("static pauli matrix")
    }

    fn sort_code(self) -> u8 {
        match self {
            Pauli::I => 0,
            Pauli::X => 1,
            Pauli::Y => 2,
            Pauli::Z => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Key {
    x: u64,
    z: u64,
}

impl Key {
    const IDENTITY: Key = Key { x: 0, z: 0 };

    fn op_at(self, site: usize) -> Pauli {
        match ((self.x >> site) & 1, (self.z >> site) & 1) {
            (0, 0) => Pauli::I,
            (1, 0) => Pauli::X,
            (1, 1) => Pauli::Y,
            (0, 1) => Pauli::Z,
            _ => unreachable!(),
        }
    }

    /// Count of sites where the stored operator is `XZ` (presented as Y).
    fn y_count(self) -> u32 {
        (self.x & self.z).count_ones()
    }
}

/// One Pauli operator per site.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PauliString {
    ops: Vec<Pauli>,
}

impl PauliString {
    pub fn new(ops: Vec<Pauli>) -> Result<Self> {
        if ops.is_empty() || ops.len() > MAX_SITES {
            return Err(Error::InvalidArgument(format!(
                "pauli string length {} outside 1..={MAX_SITES}",
                ops.len()
            )));
        }
        Ok(PauliString { ops })
    }

    pub fn identity(nsites: usize) -> Self {
        PauliString {
            ops: vec![Pauli::I; nsites],
        }
    }

    pub fn ops(&self) -> &[Pauli] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn key(&self) -> (Key, u32) {
        let mut key = Key { x: 0, z: 0 };
        let mut ycount = 0;
        for (site, op) in self.ops.iter().enumerate() {
            match op {
                Pauli::I => {}
                Pauli::X => key.x |= 1 << site,
                Pauli::Y => {
                    key.x |= 1 << site;
                    key.z |= 1 << site;
                    ycount += 1;
                }
                Pauli::Z => key.z |= 1 << site,
            }
        }
        (key, ycount)
    }

    fn from_key(key: Key, nsites: usize) -> Self {
        PauliString {
            ops: (0..nsites).map(|s| key.op_at(s)).collect(),
        }
    }
}

impl std::fmt::Display for PauliString {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for op in &self.ops {
            f.write_char(op.as_char())?;
        }
        Ok(())
    }
}

/// Weighted sum of Pauli strings on a fixed number of sites.
#[derive(Debug, Clone)]
pub struct PauliSum {
    nsites: usize,
    terms: FxHashMap<Key, Complex64>,
}

const POWERS_OF_I: [Complex64; 4] = [
    Complex64::new(1.0, 0.0),
    Complex64::new(0.0, 1.0),
    Complex64::new(-1.0, 0.0),
    Complex64::new(0.0, -1.0),
];

impl PauliSum {
    pub fn zero(nsites: usize) -> Result<Self> {
        if nsites == 0 || nsites > MAX_SITES {
            return Err(Error::InvalidArgument(format!(
                "nsites {nsites} outside 1..={MAX_SITES}"
            )));
        }
        Ok(PauliSum {
            nsites,
            terms: FxHashMap::default(),
        })
    }

    pub fn identity(nsites: usize) -> Result<Self> {
        let mut s = Self::zero(nsites)?;
        s.terms.insert(Key::IDENTITY, C_ONE);
        Ok(s)
    }

    pub fn nsites(&self) -> usize {
        self.nsites
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Add `coeff * string` where the string is given sparsely as
    /// `(site, op)` pairs; unlisted sites carry the identity.
    pub fn add_term(&mut self, coeff: Complex64, ops: &[(usize, Pauli)]) -> Result<()> {
        let mut key = Key { x: 0, z: 0 };
        let mut ycount = 0u32;
        for &(site, op) in ops {
            if site >= self.nsites {
                return Err(Error::InvalidArgument(format!(
                    "site {site} out of range for {} sites",
                    self.nsites
                )));
            }
            let bit = 1u64 << site;
            if (key.x | key.z) & bit != 0 {
                return Err(Error::InvalidArgument(format!(
                    "site {site} listed twice in term"
                )));
            }
            match op {
                Pauli::I => {}
                Pauli::X => key.x |= bit,
                Pauli::Y => {
                    key.x |= bit;
                    key.z |= bit;
                    ycount += 1;
                }
                Pauli::Z => key.z |= bit,
            }
        }
        // Y = i·XZ, so each Y contributes a factor i to the stored coefficient.
        let stored = coeff * POWERS_OF_I[(ycount % 4) as usize];
        let entry = self.terms.entry(key).or_insert(C_ZERO);
        *entry += stored;
        if entry.norm() < COEFF_PRUNE_THRESHOLD {
            self.terms.remove(&key);
        }
        Ok(())
    }

    pub fn from_terms(
        nsites: usize,
        terms: impl IntoIterator<Item = (Complex64, Vec<(usize, Pauli)>)>,
    ) -> Result<Self> {
        let mut s = Self::zero(nsites)?;
        for (c, ops) in terms {
            s.add_term(c, &ops)?;
        }
        Ok(s)
    }

    pub fn from_string(coeff: Complex64, string: &PauliString) -> Result<Self> {
        let mut s = Self::zero(string.len())?;
        let (key, ycount) = string.key();
        let stored = coeff * POWERS_OF_I[(ycount % 4) as usize];
        if stored.norm() >= COEFF_PRUNE_THRESHOLD {
            s.terms.insert(key, stored);
        }
        Ok(s)
    }

    /// Terms as `(string, coefficient)` in canonical lexicographic order
    /// (`I < X < Y < Z` sitewise).
    pub fn terms(&self) -> Vec<(PauliString, Complex64)> {
        let mut out: Vec<(PauliString, Complex64)> = self
            .terms
            .iter()
            .map(|(&key, &c)| {
                let disp = c * POWERS_OF_I[((4 - key.y_count() % 4) % 4) as usize];
                (PauliString::from_key(key, self.nsites), disp)
            })
            .collect();
        out.sort_by(|a, b| {
            let ka: Vec<u8> = a.0.ops().iter().map(|p| p.sort_code()).collect();
            let kb: Vec<u8> = b.0.ops().iter().map(|p| p.sort_code()).collect();
            ka.cmp(&kb)
        });
        out
    }

    pub fn coefficient(&self, string: &PauliString) -> Complex64 {
        let (key, ycount) = string.key();
        match self.terms.get(&key) {
            Some(&c) => c * POWERS_OF_I[((4 - ycount % 4) % 4) as usize],
            None => C_ZERO,
        }
    }

    pub fn scaled(&self, alpha: Complex64) -> Self {
        let mut out = self.clone();
        out.terms.values_mut().for_each(|c| *c *= alpha);
        out.prune();
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_sites(other)?;
        let mut out = self.clone();
        for (&k, &c) in &other.terms {
            let entry = out.terms.entry(k).or_insert(C_ZERO);
            *entry += c;
        }
        out.prune();
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scaled(-C_ONE))
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self {
            nsites: self.nsites,
            terms: FxHashMap::default(),
        };
        for (&k, &c) in &self.terms {
            // (X^x Z^z)^dag = Z^z X^x = (-1)^{|x & z|} X^x Z^z.
            let sign = if (k.x & k.z).count_ones() % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            out.terms.insert(k, c.conj() * sign);
        }
        out
    }

    fn prune(&mut self) {
        self.terms.retain(|_, c| c.norm() >= COEFF_PRUNE_THRESHOLD);
    }

    fn check_sites(&self, other: &Self) -> Result<()> {
        if self.nsites != other.nsites {
            return Err(Error::InvalidArgument(format!(
                "site count mismatch: {} vs {}",
                self.nsites, other.nsites
            )));
        }
        Ok(())
    }

    /// Trace of the operator (not normalized by dimension).
    pub fn trace(&self) -> Complex64 {
        let dim = 2f64.powi(self.nsites as i32);
        self.terms
            .get(&Key::IDENTITY)
            .map_or(C_ZERO, |&c| c * dim)
    }

    /// Hilbert-Schmidt inner product `tr[self^dag other]`.
    pub fn hs_inner(&self, other: &Self) -> Result<Complex64> {
        self.check_sites(other)?;
        let dim = 2f64.powi(self.nsites as i32);
        let (small, big, conj_small) = if self.terms.len() <= other.terms.len() {
            (&self.terms, &other.terms, true)
        } else {
            (&other.terms, &self.terms, false)
        };
        let mut acc = C_ZERO;
        for (k, &c) in small {
            if let Some(&d) = big.get(k) {
                acc += if conj_small { c.conj() * d } else { d.conj() * c };
            }
        }
        Ok(acc * dim)
    }

    /// Frobenius norm `sqrt(tr[A^dag A])`.
    pub fn frobenius_norm(&self) -> f64 {
        let dim = 2f64.powi(self.nsites as i32);
        (self.terms.values().map(|c| c.norm_sqr()).sum::<f64>() * dim).sqrt()
    }

    /// Dense matrix representation; intended for small site counts.
    /// Site 0 maps to the most significant bit, matching the MPS/MPO fold.
    pub fn to_dense(&self) -> Result<DenseTensor> {
        if self.nsites > 14 {
            return Err(Error::ResourceCap {
                what: "dense pauli-sum sites",
                got: self.nsites,
                cap: 14,
            });
        }
        let n = self.nsites;
        let dim = 1usize << n;
        let reverse = |mask: u64| -> usize {
            let mut out = 0usize;
            for s in 0..n {
                if (mask >> s) & 1 == 1 {
                    out |= 1 << (n - 1 - s);
                }
            }
            out
        };
        let mut out = DenseTensor::zeros(&[dim, dim]);
        let data = out.data_mut();
        for (&k, &c) in &self.terms {
            let x = reverse(k.x);
            let z = reverse(k.z);
            for col in 0..dim {
                let sign = if ((z & col).count_ones()) % 2 == 0 {
                    1.0
                } else {
                    -1.0
                };
                let row = col ^ x;
                data[row * dim + col] += c * sign;
            }
        }
        Ok(out)
    }
}

/// Product of two sums, distributing termwise with the symplectic phase rule.
pub fn pauli_mul(a: &PauliSum, b: &PauliSum) -> Result<PauliSum> {
    a.check_sites(b)?;
    let mut out = PauliSum::zero(a.nsites)?;
    for (&ka, &ca) in &a.terms {
        for (&kb, &cb) in &b.terms {
            // (X^xa Z^za)(X^xb Z^zb) = (-1)^{|za & xb|} X^{xa^xb} Z^{za^zb}.
            let sign = if (ka.z & kb.x).count_ones() % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            let key = Key {
                x: ka.x ^ kb.x,
                z: ka.z ^ kb.z,
            };
            let entry = out.terms.entry(key).or_insert(C_ZERO);
            *entry += ca * cb * sign;
        }
    }
    out.prune();
    Ok(out)
}

/// `ab - ba`, evaluated pairwise so commuting term pairs never enter the map.
pub fn commutator(a: &PauliSum, b: &PauliSum) -> Result<PauliSum> {
    a.check_sites(b)?;
    let mut out = PauliSum::zero(a.nsites)?;
    for (&ka, &ca) in &a.terms {
        for (&kb, &cb) in &b.terms {
            let sign_ab = (ka.z & kb.x).count_ones() % 2;
            let sign_ba = (kb.z & ka.x).count_ones() % 2;
            if sign_ab == sign_ba {
                continue;
            }
            let factor = if sign_ab == 0 { 2.0 } else { -2.0 };
            let key = Key {
                x: ka.x ^ kb.x,
                z: ka.z ^ kb.z,
            };
            let entry = out.terms.entry(key).or_insert(C_ZERO);
            *entry += ca * cb * factor;
        }
    }
    out.prune();
    Ok(out)
}

/// Depth-fold left-nested commutator `[h, [h, ... [h, dh]]]`.
pub fn nested_commutator(h: &PauliSum, dh: &PauliSum, depth: usize) -> Result<PauliSum> {
    nested_commutator_capped(h, dh, depth, DEFAULT_TERM_CAP)
}

pub fn nested_commutator_capped(
    h: &PauliSum,
    dh: &PauliSum,
    depth: usize,
    term_cap: usize,
) -> Result<PauliSum> {
    if depth < 1 {
        return Err(Error::InvalidArgument(
            "nested_commutator: depth must be >= 1".into(),
        ));
    }
    let mut acc = dh.clone();
    for _ in 0..depth {
        acc = commutator(h, &acc)?;
        if acc.num_terms() > term_cap {
            return Err(Error::ResourceCap {
                what: "nested-commutator terms",
                got: acc.num_terms(),
                cap: term_cap,
            });
        }
    }
    Ok(acc)
}

/// One term per line: `coeff_re coeff_im PAULI_STRING`, canonical order.
pub fn to_text(sum: &PauliSum) -> String {
    let mut out = String::new();
    for (string, coeff) in sum.terms() {
        let _ = writeln!(out, "{:.17e} {:.17e} {}", coeff.re, coeff.im, string);
    }
    out
}

pub fn from_text(text: &str) -> Result<PauliSum> {
    let mut nsites = None;
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Serde(format!(
                "pauli text line {}: expected `re im STRING`",
                lineno + 1
            )));
        }
        let re: f64 = fields[0]
            .parse()
            .map_err(|e| Error::Serde(format!("line {}: {e}", lineno + 1)))?;
        let im: f64 = fields[1]
            .parse()
            .map_err(|e| Error::Serde(format!("line {}: {e}", lineno + 1)))?;
        let ops: Option<Vec<Pauli>> = fields[2].chars().map(Pauli::from_char).collect();
        let ops = ops.ok_or_else(|| {
            Error::Serde(format!("line {}: bad pauli character", lineno + 1))
        })?;
        match nsites {
            None => nsites = Some(ops.len()),
            Some(n) if n != ops.len() => {
                return Err(Error::Serde(format!(
                    "line {}: string length {} != {}",
                    lineno + 1,
                    ops.len(),
                    n
                )));
            }
            _ => {}
        }
        entries.push((Complex64::new(re, im), PauliString::new(ops)?));
    }
    let nsites = nsites.ok_or_else(|| Error::Serde("empty pauli text".into()))?;
    let mut sum = PauliSum::zero(nsites)?;
    for (c, s) in entries {
        let single = PauliSum::from_string(c, &s)?;
        sum = sum.add(&single)?;
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::contract;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single(nsites: usize, site: usize, op: Pauli) -> PauliSum {
        PauliSum::from_terms(nsites, [(C_ONE, vec![(site, op)])]).unwrap()
    }

    fn random_sum(nsites: usize, nterms: usize, rng: &mut ChaCha8Rng) -> PauliSum {
        let mut s = PauliSum::zero(nsites).unwrap();
        for _ in 0..nterms {
            let coeff = Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            let ops: Vec<(usize, Pauli)> = (0..nsites)
                .filter_map(|site| {
                    match rng.random_range(0..4u8) {
                        0 => None,
                        1 => Some((site, Pauli::X)),
                        2 => Some((site, Pauli::Y)),
                        _ => Some((site, Pauli::Z)),
                    }
                })
                .collect();
            s.add_term(coeff, &ops).unwrap();
        }
        s
    }

    #[test]
    fn x_times_x_is_identity() {
        let x = single(1, 0, Pauli::X);
        let prod = pauli_mul(&x, &x).unwrap();
        let terms = prod.terms();
        assert_eq!(terms.len(), 1);
        assert_eq!(terms[0].0.ops(), &[Pauli::I]);
        assert!((terms[0].1 - C_ONE).norm() < 1e-15);
    }

    #[test]
    fn x_times_y_is_i_z() {
        let x = single(1, 0, Pauli::X);
        let y = single(1, 0, Pauli::Y);
        let prod = pauli_mul(&x, &y).unwrap();
        let terms = prod.terms();
        assert_eq!(terms.len(), 1);
        assert_eq!(terms[0].0.ops(), &[Pauli::Z]);
        assert!((terms[0].1 - Complex64::new(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn zz_times_x1() {
        let zz = PauliSum::from_terms(2, [(C_ONE, vec![(0, Pauli::Z), (1, Pauli::Z)])]).unwrap();
        let x1 = single(2, 0, Pauli::X);
        let prod = pauli_mul(&zz, &x1).unwrap();
        let terms = prod.terms();
        assert_eq!(terms.len(), 1);
        assert_eq!(terms[0].0.ops(), &[Pauli::Y, Pauli::Z]);
        assert!((terms[0].1 - Complex64::new(0.0, 1.0)).norm() < 1e-14);
    }

    #[test]
    fn commutator_z_x() {
        let z = single(1, 0, Pauli::Z);
        let x = single(1, 0, Pauli::X);
        let c = commutator(&z, &x).unwrap();
        let terms = c.terms();
        assert_eq!(terms.len(), 1);
        assert_eq!(terms[0].0.ops(), &[Pauli::Y]);
        assert!((terms[0].1 - Complex64::new(0.0, 2.0)).norm() < 1e-14);
    }

    #[test]
    fn self_commutator_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = random_sum(3, 6, &mut rng);
        let c = commutator(&h, &h).unwrap();
        assert!(c.is_zero(), "got {} terms", c.num_terms());
    }

    #[test]
    fn commutator_zz_with_transverse() {
        let zz = PauliSum::from_terms(2, [(C_ONE, vec![(0, Pauli::Z), (1, Pauli::Z)])]).unwrap();
        let xs = PauliSum::from_terms(
            2,
            [
                (C_ONE, vec![(0, Pauli::X)]),
                (C_ONE, vec![(1, Pauli::X)]),
            ],
        )
        .unwrap();
        let c = commutator(&zz, &xs).unwrap();
        let want = PauliSum::from_terms(
            2,
            [
                (Complex64::new(0.0, 2.0), vec![(0, Pauli::Y), (1, Pauli::Z)]),
                (Complex64::new(0.0, 2.0), vec![(0, Pauli::Z), (1, Pauli::Y)]),
            ],
        )
        .unwrap();
        assert!(c.sub(&want).unwrap().is_zero());
    }

    #[test]
    fn commutator_antisymmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..8 {
            let a = random_sum(4, 5, &mut rng);
            let b = random_sum(4, 5, &mut rng);
            let ab = commutator(&a, &b).unwrap();
            let ba = commutator(&b, &a).unwrap();
            assert!(ab.add(&ba).unwrap().frobenius_norm() < 1e-12);
        }
    }

    #[test]
    fn jacobi_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..5 {
            let a = random_sum(4, 4, &mut rng);
            let b = random_sum(4, 4, &mut rng);
            let c = random_sum(4, 4, &mut rng);
            let t1 = commutator(&a, &commutator(&b, &c).unwrap()).unwrap();
            let t2 = commutator(&b, &commutator(&c, &a).unwrap()).unwrap();
            let t3 = commutator(&c, &commutator(&a, &b).unwrap()).unwrap();
            let total = t1.add(&t2).unwrap().add(&t3).unwrap();
            assert!(total.frobenius_norm() < 1e-12 * (1.0 + t1.frobenius_norm()));
        }
    }

    #[test]
    fn mul_matches_dense_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for n in [2usize, 4, 6] {
            let a = random_sum(n, 5, &mut rng);
            let b = random_sum(n, 5, &mut rng);
            let prod = pauli_mul(&a, &b).unwrap().to_dense().unwrap();
            let dense = contract(&a.to_dense().unwrap(), &b.to_dense().unwrap(), &[(1, 0)]).unwrap();
            let err = prod.sub(&dense).unwrap().norm() / dense.norm().max(1.0);
            assert!(err < 1e-12, "N={n} err={err}");
        }
    }

    #[test]
    fn nested_depth_one_is_commutator() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let h = random_sum(3, 5, &mut rng);
        let dh = random_sum(3, 4, &mut rng);
        let nested = nested_commutator(&h, &dh, 1).unwrap();
        let direct = commutator(&h, &dh).unwrap();
        assert!(nested.sub(&direct).unwrap().is_zero());
    }

    #[test]
    fn nested_zero_driving_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let h = random_sum(3, 5, &mut rng);
        let dh = PauliSum::zero(3).unwrap();
        for depth in [1, 2, 5] {
            assert!(nested_commutator(&h, &dh, depth).unwrap().is_zero());
        }
    }

    #[test]
    fn nested_matches_sequential_calls() {
        // Uniform chain with transverse and longitudinal fields at full
        // coupling, N=4, depth 3.
        let n = 4;
        let mut h = PauliSum::zero(n).unwrap();
        for k in 0..n - 1 {
            h.add_term(C_ONE, &[(k, Pauli::Z), (k + 1, Pauli::Z)]).unwrap();
        }
        for k in 0..n {
            h.add_term(Complex64::new(0.3, 0.0), &[(k, Pauli::X)]).unwrap();
            h.add_term(Complex64::new(0.3, 0.0), &[(k, Pauli::Z)]).unwrap();
        }
        let mut dh = PauliSum::zero(n).unwrap();
        for k in 0..n {
            dh.add_term(Complex64::new(0.3, 0.0), &[(k, Pauli::X)]).unwrap();
            dh.add_term(Complex64::new(0.3, 0.0), &[(k, Pauli::Z)]).unwrap();
        }
        let nested = nested_commutator(&h, &dh, 3).unwrap();
        let seq = commutator(&h, &commutator(&h, &commutator(&h, &dh).unwrap()).unwrap()).unwrap();
        assert!(nested.sub(&seq).unwrap().frobenius_norm() < 1e-12 * seq.frobenius_norm());
    }

    #[test]
    fn nested_term_cap_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let h = random_sum(6, 12, &mut rng);
        let dh = random_sum(6, 12, &mut rng);
        match nested_commutator_capped(&h, &dh, 4, 3) {
            Err(Error::ResourceCap { cap, .. }) => assert_eq!(cap, 3),
            other => panic!("expected resource cap error, got {other:?}"),
        }
    }

    #[test]
    fn size_mismatch_rejected() {
        let a = PauliSum::zero(2).unwrap();
        let b = PauliSum::zero(3).unwrap();
        assert!(pauli_mul(&a, &b).is_err());
        assert!(commutator(&a, &b).is_err());
    }

    #[test]
    fn hs_inner_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let a = random_sum(4, 6, &mut rng);
        let b = random_sum(4, 6, &mut rng);
        let got = a.hs_inner(&b).unwrap();
        let ad = a.to_dense().unwrap();
        let bd = b.to_dense().unwrap();
        let want = contract(&ad.conj(), &bd, &[(0, 0), (1, 1)]).unwrap().scalar_value();
        assert!((got - want).norm() < 1e-10);
    }

    #[test]
    fn adjoint_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let a = random_sum(3, 6, &mut rng);
        let adj = a.adjoint().to_dense().unwrap();
        let dense_adj = a.to_dense().unwrap().conj().permute(&[1, 0]);
        assert!(adj.sub(&dense_adj).unwrap().norm() < 1e-12);
    }

    #[test]
    fn text_roundtrip_canonical() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let a = random_sum(5, 8, &mut rng);
        let text = to_text(&a);
        let b = from_text(&text).unwrap();
        assert!(a.sub(&b).unwrap().frobenius_norm() < 1e-10);
        assert_eq!(text, to_text(&b));
    }

    #[test]
    fn text_example_line_format() {
        let sum = PauliSum::from_terms(
            5,
            [(C_ONE, vec![(0, Pauli::Z), (1, Pauli::Z)])],
        )
        .unwrap();
        let text = to_text(&sum);
        let line = text.lines().next().unwrap();
        assert!(line.ends_with("ZZIII"), "got {line}");
    }
}
