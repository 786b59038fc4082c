//! Boundary-environment updates shared by the DMRG and gauge-potential
//! sweepers. Sandwich environments carry axes `(bra bond, mpo bond, ket
//! bond)`; overlap environments carry `(bra bond, ket bond)`.

use crate::error::Result;
use crate::tensor::{contract, DenseTensor, C_ONE};

pub(crate) fn boundary3() -> DenseTensor {
    DenseTensor::from_data(&[1, 1, 1], vec![C_ONE]).expect("boundary")
}

pub(crate) fn boundary2() -> DenseTensor {
    DenseTensor::from_data(&[1, 1], vec![C_ONE]).expect("boundary")
}

pub(crate) fn sandwich_push_left(
    env: &DenseTensor,
    bra: &DenseTensor,
    w: &DenseTensor,
    ket: &DenseTensor,
) -> Result<DenseTensor> {
    let t = contract(env, &bra.conj(), &[(0, 0)])?; // (w, k, d_bra, b')
    let t = contract(&t, w, &[(0, 0), (2, 1)])?; // (k, b', d_in, w')
    let t = contract(&t, ket, &[(0, 0), (2, 1)])?; // (b', w', k')
    Ok(t)
}

pub(crate) fn sandwich_push_right(
    env: &DenseTensor,
    bra: &DenseTensor,
    w: &DenseTensor,
    ket: &DenseTensor,
) -> Result<DenseTensor> {
    let t = contract(env, &bra.conj(), &[(0, 2)])?; // (w, k, b', d_bra)
    let t = contract(&t, w, &[(0, 3), (3, 1)])?; // (k, b', w', d_in)
    let t = contract(&t, ket, &[(0, 2), (3, 1)])?; // (b', w', k')
    Ok(t)
}

pub(crate) fn overlap_push_left(
    env: &DenseTensor,
    bra: &DenseTensor,
    ket: &DenseTensor,
) -> Result<DenseTensor> {
    let t = contract(env, &bra.conj(), &[(0, 0)])?; // (k, d, b')
    contract(&t, ket, &[(0, 0), (1, 1)])
}

pub(crate) fn overlap_push_right(
    env: &DenseTensor,
    bra: &DenseTensor,
    ket: &DenseTensor,
) -> Result<DenseTensor> {
    let t = contract(env, &bra.conj(), &[(0, 2)])?; // (k, b', d)
    contract(&t, ket, &[(0, 2), (2, 1)])
}
