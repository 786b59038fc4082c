//! Seeded random tensor-network objects for tests and benchmarks.

use num_complex::Complex64;
use rand::RngExt;
use rand_chacha::ChaCha8Rng;

use crate::mpo::Mpo;
use crate::mps::Mps;
use crate::tensor::DenseTensor;

fn rand_c(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
}

/// Random MPS with the given physical dimension and internal bond dimension.
pub fn random_mps(n: usize, phys: usize, bond: usize, rng: &mut ChaCha8Rng) -> Mps {
    let tensors: Vec<DenseTensor> = (0..n)
        .map(|i| {
            let l = if i == 0 { 1 } else { bond };
            let r = if i == n - 1 { 1 } else { bond };
            DenseTensor::from_fn(&[l, phys, r], |_| rand_c(rng))
        })
        .collect();
    Mps::from_site_tensors(tensors).expect("random mps")
}

/// Random qubit MPO with the given internal bond dimension.
pub fn random_mpo(n: usize, bond: usize, rng: &mut ChaCha8Rng) -> Mpo {
    let tensors: Vec<DenseTensor> = (0..n)
        .map(|i| {
            let l = if i == 0 { 1 } else { bond };
            let r = if i == n - 1 { 1 } else { bond };
            DenseTensor::from_fn(&[l, 2, 2, r], |_| rand_c(rng))
        })
        .collect();
    Mpo::from_site_tensors(tensors).expect("random mpo")
}

/// Random Hermitian qubit MPO: `(M + M^dag) / 2`.
pub fn random_hermitian_mpo(n: usize, bond: usize, rng: &mut ChaCha8Rng) -> Mpo {
    let m = random_mpo(n, bond, rng);
    let half = Complex64::new(0.5, 0.0);
    m.scaled(half).add(&m.adjoint().scaled(half)).expect("hermitian mpo")
}
