//! Adiabatic gauge potential solvers: the variational MPO route (regularized
//! alternating least squares on the vectorized commutator equation
//! `[H, A] = -i dH`), the nested-commutator baseline, and the normalized
//! cost/error quality metrics.

use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{
    boundary2, boundary3, overlap_push_left, overlap_push_right, sandwich_push_left,
    sandwich_push_right,
};
use crate::error::{Error, Result};
use crate::mpo::{hermitian_spot_check, Mpo};
use crate::mps::Mps;
use crate::pauli::{self, PauliSum};
use crate::tensor::{contract, eigh_small, solve_regularized, DenseTensor, C_ONE, C_ZERO};

#[derive(Debug, Clone)]
pub enum AgpInit {
    /// Small seeded random perturbation of the zero operator.
    ZeroPerturbed { seed: u64, magnitude: f64 },
    /// Warm start from a previous solution (padded or truncated to chi).
    Warm(Box<Mpo>),
}

impl Default for AgpInit {
    fn default() -> Self {
        AgpInit::ZeroPerturbed {
            seed: 7,
            magnitude: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AgpSolverConfig {
    /// MPO bond dimension of the ansatz.
    pub chi: usize,
    /// Regularization added to each local system.
    pub eta: f64,
    pub sweeps: usize,
    pub init: AgpInit,
    /// Local systems up to this dimension are solved spectrally (exact
    /// eigendecomposition with the minimum-norm kernel convention); larger
    /// ones go through an LU solve of the same system.
    pub direct_dim_cap: usize,
}

impl AgpSolverConfig {
    pub fn new(chi: usize, eta: f64) -> Self {
        AgpSolverConfig {
            chi,
            eta,
            sweeps: 8,
            init: AgpInit::default(),
            direct_dim_cap: 1100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AgpSolution {
    pub a_tilde: Mpo,
    pub chi: usize,
    pub eta: f64,
    pub normalized_cost: f64,
    pub normalized_error: f64,
    /// `|A - A^dag|_F / |A|_F`.
    pub hermitian_defect: f64,
    /// Raw cost at the end of each sweep.
    pub cost_trace: Vec<f64>,
    /// Set when the driving term vanished and the zero solution was returned.
    pub zero_driving: bool,
}

/// The commutator superoperator `H (x) 1 - 1 (x) H^T` as an MPO acting on
/// vectorized operators (physical dimension `d^2`, combined index
/// `out * d + in`).
pub fn commutator_superop(h: &Mpo) -> Result<Mpo> {
    let n = h.n_sites();
    let mut left = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n);
    for site in 0..n {
        let w = h.tensor(site);
        let (wb, d, _, wr) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
        let d2 = d * d;
        let k1 = DenseTensor::from_fn(&[wb, d2, d2, wr], |idx| {
            let (a, row, col, b) = (idx[0], idx[1], idx[2], idx[3]);
            let (ao, ai) = (row / d, row % d);
            let (bo, bi) = (col / d, col % d);
            if ai == bi {
                w.get(&[a, ao, bo, b])
            } else {
                C_ZERO
            }
        });
        let k2 = DenseTensor::from_fn(&[wb, d2, d2, wr], |idx| {
            let (a, row, col, b) = (idx[0], idx[1], idx[2], idx[3]);
            let (ao, ai) = (row / d, row % d);
            let (bo, bi) = (col / d, col % d);
            if ao == bo {
                w.get(&[a, bi, ai, b])
            } else {
                C_ZERO
            }
        });
        left.push(k1);
        right.push(k2);
    }
    let k1 = Mpo::from_site_tensors(left)?;
    let k2 = Mpo::from_site_tensors(right)?;
    k1.add(&k2.scaled(-C_ONE))
}

fn mps_norm_sqr(s: &Mps) -> Result<f64> {
    Ok(s.inner(s)?.re.max(0.0))
}

/// `tr[(dH)^2]` through the Choi inner product.
fn dh_weight(dh: &Mpo) -> Result<f64> {
    let b = dh.to_choi_mps();
    mps_norm_sqr(&b)
}

/// Raw cost `|K|a> - b|^2` with `b = -i |dh>`.
fn raw_cost(a_choi: &Mps, k2: &Mpo, kb: &Mps, bb: f64) -> Result<f64> {
    let aka = crate::mpo::sandwich(a_choi, &[k2], a_choi)?.re;
    let akb = a_choi.inner(kb)?.re;
    Ok((aka - 2.0 * akb + bb).max(0.0))
}

/// Normalized cost `tr[G^dag G] / tr[dH^2]` with `G = dH + i [A, H]`,
/// evaluated by exact contraction.
pub fn normalized_cost(a: &Mpo, h: &Mpo, dh: &Mpo) -> Result<f64> {
    let dh2 = dh_weight(dh)?;
    if dh2 <= 0.0 {
        return Err(Error::UndefinedMetric("tr[(dH)^2] = 0".into()));
    }
    let k = commutator_superop(h)?;
    let (k2, _) = k.mul(&k, usize::MAX, 0.0)?;
    let b = dh.to_choi_mps().scaled(Complex64::new(0.0, -1.0));
    let (kb, _) = k.apply(&b, usize::MAX, 0.0)?;
    let bb = mps_norm_sqr(&b)?;
    Ok(raw_cost(&a.to_choi_mps(), &k2, &kb, bb)? / dh2)
}

/// Normalized error `tr[[G,H]^dag [G,H]] / tr[dH^2]`, exact contraction.
pub fn normalized_error(a: &Mpo, h: &Mpo, dh: &Mpo) -> Result<f64> {
    let dh2 = dh_weight(dh)?;
    if dh2 <= 0.0 {
        return Err(Error::UndefinedMetric("tr[(dH)^2] = 0".into()));
    }
    let k = commutator_superop(h)?;
    let (k2, _) = k.mul(&k, usize::MAX, 0.0)?;
    let b = dh.to_choi_mps().scaled(Complex64::new(0.0, -1.0));
    // |G> = i (b - K|a>); the phase drops out of the quadratic form.
    let (ka, _) = k.apply(&a.to_choi_mps(), usize::MAX, 0.0)?;
    let g = b.add(&ka.scaled(-C_ONE))?;
    Ok(crate::mpo::sandwich(&g, &[&k2], &g)?.re.max(0.0) / dh2)
}

/// `|A - A^dag|_F / |A|_F`, exact.
pub fn hermitian_defect(a: &Mpo) -> Result<f64> {
    let ca = a.to_choi_mps();
    let norm_sqr = mps_norm_sqr(&ca)?;
    if norm_sqr <= 0.0 {
        return Ok(0.0);
    }
    let cadj = a.adjoint().to_choi_mps();
    // |A - A^dag|^2 = 2 |A|^2 - 2 Re <choi(A^dag)|choi(A)>.
    let cross = cadj.inner(&ca)?.re;
    let defect_sqr = (2.0 * norm_sqr - 2.0 * cross).max(0.0);
    Ok((defect_sqr / norm_sqr).sqrt())
}

fn bond_profile(n: usize, chi: usize, phys: usize) -> Vec<usize> {
    // internal bonds 0..n-1 between sites i and i+1
    (0..n.saturating_sub(1))
        .map(|i| {
            let left = (phys as f64).powi((i + 1) as i32);
            let right = (phys as f64).powi((n - 1 - i) as i32);
            let cap = left.min(right).min(chi as f64);
            cap as usize
        })
        .collect()
}

/// Small random perturbation of the zero operator, kept in the Hermitian
/// sector: the commutator equation never couples the Hermitian and
/// anti-Hermitian parts of the ansatz, so a Hermitian start keeps the flat
/// (cost-invisible) anti-Hermitian commutant directions empty.
fn random_choi(n: usize, chi: usize, seed: u64, magnitude: f64) -> Mps {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bond = chi.min(8);
    let m = crate::testutil::random_mpo(n, bond, &mut rng);
    let half = Complex64::new(0.5 * magnitude, 0.0);
    let herm = m
        .scaled(half)
        .add(&m.adjoint().scaled(half))
        .expect("hermitian init");
    let mut x = herm.to_choi_mps();
    let _ = x.compress(chi, 0.0);
    x = pad_to_profile(&x, chi, seed, magnitude * 1e-5).expect("pad init");
    x
}

/// Pad bond dimensions up to the chi profile, filling new blocks with small
/// seeded noise so later sweeps can rotate weight into them.
fn pad_to_profile(x: &Mps, chi: usize, seed: u64, noise: f64) -> Result<Mps> {
    let n = x.n_sites();
    let profile = bond_profile(n, chi, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
    let scale = {
        let mut m: f64 = 0.0;
        for t in x.tensors() {
            m = m.max(t.max_abs());
        }
        if m == 0.0 {
            noise
        } else {
            m * noise
        }
    };
    let tensors: Vec<DenseTensor> = (0..n)
        .map(|i| {
            let t = x.tensor(i);
            let (l, d, r) = (t.shape()[0], t.shape()[1], t.shape()[2]);
            let lt = if i == 0 { 1 } else { profile[i - 1].max(l) };
            let rt = if i == n - 1 { 1 } else { profile[i].max(r) };
            DenseTensor::from_fn(&[lt, d, rt], |idx| {
                if idx[0] < l && idx[2] < r {
                    t.get(idx)
                } else {
                    Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * scale
                }
            })
        })
        .collect();
    Mps::from_site_tensors(tensors)
}

struct LocalSystem<'a> {
    lk: &'a DenseTensor,
    wk: &'a DenseTensor,
    rk: &'a DenseTensor,
    lb: &'a DenseTensor,
    bsite: &'a DenseTensor,
    rb: &'a DenseTensor,
}

fn local_rhs(sys: &LocalSystem<'_>) -> Result<DenseTensor> {
    let t = contract(sys.lb, sys.bsite, &[(1, 0)])?; // (l, d, a')
    contract(&t, sys.rb, &[(2, 1)])
}

/// Spectral solve of the local PSD system `(M^2)_loc x = (M b)_loc` with
/// the minimum-norm convention on the (numerically) singular directions.
fn local_solve_direct(sys: &LocalSystem<'_>) -> Result<DenseTensor> {
    let (kmat, rhs_vec, shape) = local_dense_system(sys)?;
    let dim = rhs_vec.len();
    // Hermitize against contraction round-off before the spectral solve.
    let kherm = kmat
        .add(&kmat.conj().permute(&[1, 0]))?
        .scaled(Complex64::new(0.5, 0.0));
    let (vals, vecs) = crate::tensor::eigh_small(&kherm)?;
    let proj = contract(&vecs.conj(), &rhs_vec, &[(0, 0)])?; // (k)
    let floor = 64.0 * f64::EPSILON * rhs_vec.norm();
    let lam_max = vals.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let kernel_tol = 1e-13 * lam_max.max(1e-300);
    let mut coeffs = vec![C_ZERO; dim];
    for kk in 0..dim {
        let p = proj.get(&[kk]);
        if p.norm() <= floor || vals[kk] <= kernel_tol {
            continue;
        }
        coeffs[kk] = p / Complex64::new(vals[kk], 0.0);
    }
    let coeff_t = DenseTensor::from_data(&[dim], coeffs)?;
    let sol = contract(&vecs, &coeff_t, &[(1, 0)])?;
    sol.into_reshaped(&shape)
}

/// LU solve of the same local system for dimensions where the spectral
/// route is too slow; `solve_regularized` supplies the minimum-norm
/// fallback when the matrix is numerically singular.
fn local_solve_lu(sys: &LocalSystem<'_>) -> Result<DenseTensor> {
    let (kmat, rhs_vec, shape) = local_dense_system(sys)?;
    let sol = solve_regularized(&kmat, &rhs_vec, 0.0)?;
    sol.into_reshaped(&shape)
}

fn local_dense_system(sys: &LocalSystem<'_>) -> Result<(DenseTensor, DenseTensor, Vec<usize>)> {
    let rhs = local_rhs(sys)?;
    let shape = rhs.shape().to_vec();
    let dim: usize = shape.iter().product();
    let x = contract(sys.lk, sys.wk, &[(1, 0)])?; // (bl, kl, o, i, w')
    let kmat = contract(&x, sys.rk, &[(4, 1)])?; // (bl, kl, o, i, br, kr)
    let kmat = kmat.permute(&[0, 2, 4, 1, 3, 5]).into_reshaped(&[dim, dim])?;
    let rhs_vec = rhs.reshape(&[dim])?;
    Ok((kmat, rhs_vec, shape))
}

pub fn solve_variational_agp(h: &Mpo, dh: &Mpo, cfg: &AgpSolverConfig) -> Result<AgpSolution> {
    if h.n_sites() != dh.n_sites() {
        return Err(Error::InvalidArgument("agp: H and dH sizes differ".into()));
    }
    if cfg.chi < 1 {
        return Err(Error::InvalidArgument("agp: chi must be >= 1".into()));
    }
    if cfg.eta < 0.0 {
        return Err(Error::InvalidArgument("agp: eta must be >= 0".into()));
    }
    hermitian_spot_check(h)?;
    let n = h.n_sites();
    let dh2 = dh_weight(dh)?;
    if dh2 < 1e-28 {
        return Ok(AgpSolution {
            a_tilde: Mpo::zero(n),
            chi: cfg.chi,
            eta: cfg.eta,
            normalized_cost: 0.0,
            normalized_error: 0.0,
            hermitian_defect: 0.0,
            cost_trace: vec![],
            zero_driving: true,
        });
    }

    let k = commutator_superop(h)?;
    let (k2, _) = k.mul(&k, usize::MAX, 0.0)?;
    let b = dh.to_choi_mps().scaled(Complex64::new(0.0, -1.0));
    let (kb, _) = k.apply(&b, usize::MAX, 0.0)?;
    let bb = mps_norm_sqr(&b)?;

    // Regularized operator M = K + eta; the sweeps minimize |M x - b|^2, whose
    // stationary point is the regularized solution (K + eta)^{-1} b.
    let ident = Mpo::identity_with_dims(&vec![4; n]);
    let m_op = k.add(&ident.scaled(Complex64::new(cfg.eta, 0.0)))?;
    let (m2, _) = m_op.mul(&m_op, usize::MAX, 0.0)?;
    let (mb, _) = m_op.apply(&b, usize::MAX, 0.0)?;

    let mut x = match &cfg.init {
        AgpInit::ZeroPerturbed { seed, magnitude } => random_choi(n, cfg.chi, *seed, *magnitude),
        AgpInit::Warm(prev) => {
            let mut warm = prev.to_choi_mps();
            warm.compress(cfg.chi, 0.0)?;
            pad_to_profile(&warm, cfg.chi, 11, 1e-6)?
        }
    };
    x.canonicalize(0)?;

    // Track the best-cost iterate; a warm start counts as a candidate.
    let mut best_cost = raw_cost(&x, &k2, &kb, bb)?;
    let mut best_x = x.clone();
    let mut prev_cost = best_cost;
    let mut cost_trace = Vec::with_capacity(cfg.sweeps);

    // Right/left environments of the normal equations of M: sandwiches of
    // M^2 and overlaps against |M b>, indexed by site (entry i covers sites
    // beyond i).
    let mut rightk = vec![boundary3(); n];
    let mut rightb = vec![boundary2(); n];
    for i in (1..n).rev() {
        let prevk = if i == n - 1 { boundary3() } else { rightk[i + 1].clone() };
        let prevb = if i == n - 1 { boundary2() } else { rightb[i + 1].clone() };
        rightk[i] = sandwich_push_right(&prevk, x.tensor(i), m2.tensor(i), x.tensor(i))?;
        rightb[i] = overlap_push_right(&prevb, x.tensor(i), mb.tensor(i))?;
    }
    let mut leftk = vec![boundary3(); n];
    let mut leftb = vec![boundary2(); n];

    for _sweep in 0..cfg.sweeps {
        // left-to-right
        for i in 0..n {
            let lk = if i == 0 { boundary3() } else { leftk[i].clone() };
            let lb = if i == 0 { boundary2() } else { leftb[i].clone() };
            let rk = if i == n - 1 { boundary3() } else { rightk[i + 1].clone() };
            let rb = if i == n - 1 { boundary2() } else { rightb[i + 1].clone() };
            let sys = LocalSystem {
                lk: &lk,
                wk: m2.tensor(i),
                rk: &rk,
                lb: &lb,
                bsite: mb.tensor(i),
                rb: &rb,
            };
            let dim = x.tensor(i).len();
            let solved = if dim <= cfg.direct_dim_cap {
                local_solve_direct(&sys)?
            } else {
                local_solve_lu(&sys)?
            };
            x.set_tensor(i, solved);
            x.set_center(Some(i));
            if i + 1 < n {
                x.move_center_to(i + 1)?;
                let prevk = if i == 0 { boundary3() } else { leftk[i].clone() };
                let prevb = if i == 0 { boundary2() } else { leftb[i].clone() };
                leftk[i + 1] = sandwich_push_left(&prevk, x.tensor(i), m2.tensor(i), x.tensor(i))?;
                leftb[i + 1] = overlap_push_left(&prevb, x.tensor(i), mb.tensor(i))?;
            }
        }
        // right-to-left
        for i in (0..n).rev() {
            let lk = if i == 0 { boundary3() } else { leftk[i].clone() };
            let lb = if i == 0 { boundary2() } else { leftb[i].clone() };
            let rk = if i == n - 1 { boundary3() } else { rightk[i + 1].clone() };
            let rb = if i == n - 1 { boundary2() } else { rightb[i + 1].clone() };
            let sys = LocalSystem {
                lk: &lk,
                wk: m2.tensor(i),
                rk: &rk,
                lb: &lb,
                bsite: mb.tensor(i),
                rb: &rb,
            };
            let dim = x.tensor(i).len();
            let solved = if dim <= cfg.direct_dim_cap {
                local_solve_direct(&sys)?
            } else {
                local_solve_lu(&sys)?
            };
            x.set_tensor(i, solved);
            x.set_center(Some(i));
            if i > 0 {
                x.move_center_to(i - 1)?;
                let prevk = if i == n - 1 { boundary3() } else { rightk[i + 1].clone() };
                let prevb = if i == n - 1 { boundary2() } else { rightb[i + 1].clone() };
                rightk[i] = sandwich_push_right(&prevk, x.tensor(i), m2.tensor(i), x.tensor(i))?;
                rightb[i] = overlap_push_right(&prevb, x.tensor(i), mb.tensor(i))?;
            }
        }

        let cost = raw_cost(&x, &k2, &kb, bb)?;
        if !cost.is_finite() {
            return Err(Error::SolverDiverged(format!(
                "agp sweep: non-finite cost (chi={}, eta={:.1e})",
                cfg.chi, cfg.eta
            )));
        }
        cost_trace.push(cost / dh2);
        if cost < best_cost {
            best_cost = cost;
            best_x = x.clone();
        }
        // The Galerkin local solves do not descend a global functional;
        // transient cost rises are routine, so only a stall ends the loop
        // early. The best iterate seen is what gets returned.
        let stalled = (prev_cost - cost).abs() <= 1e-12 * cost.abs().max(1e-30);
        prev_cost = cost;
        if stalled {
            break;
        }
    }

    let a_tilde = Mpo::from_choi_mps(&best_x)?;
    let normalized_cost = best_cost / dh2;
    // Error metric on the returned iterate.
    let (ka, _) = k.apply(&best_x, usize::MAX, 0.0)?;
    let g = b.add(&ka.scaled(-C_ONE))?;
    let normalized_error = crate::mpo::sandwich(&g, &[&k2], &g)?.re.max(0.0) / dh2;
    let defect = hermitian_defect(&a_tilde)?;

    Ok(AgpSolution {
        a_tilde,
        chi: cfg.chi,
        eta: cfg.eta,
        normalized_cost,
        normalized_error,
        hermitian_defect: defect,
        cost_trace,
        zero_driving: false,
    })
}


// ---------------------------------------------------------------------------
// Nested-commutator ansatz
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct NcAnsatz {
    pub order: usize,
    pub alphas: Vec<f64>,
    /// Odd-depth nested commutators `O_1, O_3, ..., O_{2l-1}`.
    pub basis: Vec<PauliSum>,
    /// Set when the normal matrix was singular and a pseudo-solution was
    /// taken.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NcRoute {
    /// Evaluate the nested commutators by MPO multiplication and addition.
    MpoArithmetic,
    /// Expand into Pauli strings, then build one MPO from the sum.
    PauliStrings,
}

/// `[O_0 = dH, O_1 = [H, O_0], ..., O_depth]`.
pub fn nc_operator_tower(
    h: &PauliSum,
    dh: &PauliSum,
    depth: usize,
    term_cap: usize,
) -> Result<Vec<PauliSum>> {
    let mut tower = Vec::with_capacity(depth + 1);
    tower.push(dh.clone());
    for m in 1..=depth {
        let next = pauli::commutator(h, &tower[m - 1])?;
        if next.num_terms() > term_cap {
            return Err(Error::ResourceCap {
                what: "nested-commutator terms",
                got: next.num_terms(),
                cap: term_cap,
            });
        }
        tower.push(next);
    }
    Ok(tower)
}

/// Least-squares fit of the NC prefactors: minimizes
/// `tr[G^2]` with `G = dH + sum_k alpha_k O_{2k}`.
pub fn fit_nc_coefficients(h: &PauliSum, dh: &PauliSum, order: usize) -> Result<NcAnsatz> {
    fit_nc_coefficients_capped(h, dh, order, pauli::DEFAULT_TERM_CAP)
}

pub fn fit_nc_coefficients_capped(
    h: &PauliSum,
    dh: &PauliSum,
    order: usize,
    term_cap: usize,
) -> Result<NcAnsatz> {
    if order < 1 {
        return Err(Error::InvalidArgument("nc fit: order must be >= 1".into()));
    }
    let tower = nc_operator_tower(h, dh, 2 * order, term_cap)?;
    let l = order;
    let mut gram = DenseTensor::zeros(&[l, l]);
    let mut rhs = DenseTensor::zeros(&[l]);
    for j in 0..l {
        for kk in 0..l {
            let v = tower[2 * (j + 1)].hs_inner(&tower[2 * (kk + 1)])?.re;
            gram.set(&[j, kk], Complex64::new(v, 0.0));
        }
        let v = tower[2 * (j + 1)].hs_inner(&tower[0])?.re;
        rhs.set(&[j], Complex64::new(-v, 0.0));
    }
    // Pseudo-solve through the eigendecomposition of the Gram matrix; tiny
    // eigenvalues are dropped (minimum-norm solution) and flagged.
    let (vals, vecs) = eigh_small(&gram)?;
    let vmax = vals.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let mut alphas = vec![0.0; l];
    let mut degenerate = vmax <= 0.0;
    if vmax > 0.0 {
        let thresh = vmax * 1e-12;
        for k in 0..l {
            if vals[k].abs() <= thresh {
                degenerate = true;
                continue;
            }
            let mut proj = C_ZERO;
            for j in 0..l {
                proj += vecs.get(&[j, k]).conj() * rhs.get(&[j]);
            }
            let coeff = proj / Complex64::new(vals[k], 0.0);
            for j in 0..l {
                alphas[j] += (vecs.get(&[j, k]) * coeff).re;
            }
        }
    }
    let basis = (0..l).map(|k| tower[2 * k + 1].clone()).collect();
    Ok(NcAnsatz {
        order,
        alphas,
        basis,
        degenerate,
    })
}

/// Raw cost of an arbitrary coefficient vector (diagnostic; same functional
/// the fit minimizes), normalized by `tr[dH^2]`.
pub fn nc_cost_of_alphas(
    h: &PauliSum,
    dh: &PauliSum,
    alphas: &[f64],
    term_cap: usize,
) -> Result<f64> {
    let tower = nc_operator_tower(h, dh, 2 * alphas.len(), term_cap)?;
    let mut g = tower[0].clone();
    for (k, a) in alphas.iter().enumerate() {
        g = g.add(&tower[2 * (k + 1)].scaled(Complex64::new(*a, 0.0)))?;
    }
    let dh2 = dh.hs_inner(dh)?.re;
    if dh2 <= 0.0 {
        return Err(Error::UndefinedMetric("tr[(dH)^2] = 0".into()));
    }
    Ok(g.hs_inner(&g)?.re / dh2)
}

/// Normalized cost and error of a fitted NC ansatz, evaluated symbolically.
pub fn nc_normalized_metrics(
    h: &PauliSum,
    dh: &PauliSum,
    ansatz: &NcAnsatz,
    term_cap: usize,
) -> Result<(f64, f64)> {
    let dh2 = dh.hs_inner(dh)?.re;
    if dh2 <= 0.0 {
        return Err(Error::UndefinedMetric("tr[(dH)^2] = 0".into()));
    }
    // G = dH + sum alpha_k O_2k ; [G, H] = -(O_1 + sum alpha_k O_{2k+1}).
    let mut g = dh.clone();
    let mut gh = PauliSum::zero(dh.nsites())?;
    for (k, a) in ansatz.alphas.iter().enumerate() {
        let even = pauli::commutator(h, &ansatz.basis[k])?;
        if even.num_terms() > term_cap {
            return Err(Error::ResourceCap {
                what: "nested-commutator terms",
                got: even.num_terms(),
                cap: term_cap,
            });
        }
        g = g.add(&even.scaled(Complex64::new(*a, 0.0)))?;
        let odd_next = pauli::commutator(h, &even)?;
        gh = gh.add(&odd_next.scaled(Complex64::new(*a, 0.0)))?;
    }
    let o1 = pauli::commutator(h, dh)?;
    gh = gh.add(&o1)?;
    let cost = g.hs_inner(&g)?.re / dh2;
    let error = gh.hs_inner(&gh)?.re / dh2;
    Ok((cost, error))
}

/// The NC gauge potential as a Pauli sum: `i sum_k alpha_k O_{2k-1}`.
pub fn nc_ansatz_pauli_sum(ansatz: &NcAnsatz) -> Result<PauliSum> {
    let n = ansatz
        .basis
        .first()
        .map(|b| b.nsites())
        .ok_or_else(|| Error::InvalidArgument("nc ansatz with empty basis".into()))?;
    let mut acc = PauliSum::zero(n)?;
    for (a, o) in ansatz.alphas.iter().zip(&ansatz.basis) {
        acc = acc.add(&o.scaled(Complex64::new(0.0, *a)))?;
    }
    Ok(acc)
}

pub const NC_MPO_BOND_CAP: usize = 4096;

/// Build the NC gauge potential as an MPO along one of the two routes;
/// returns the operator and its maximum bond dimension.
pub fn nc_to_mpo(
    ansatz: &NcAnsatz,
    h: &Mpo,
    dh: &Mpo,
    route: NcRoute,
    cutoff: f64,
) -> Result<(Mpo, usize)> {
    let n = h.n_sites();
    match route {
        NcRoute::PauliStrings => {
            let sum = nc_ansatz_pauli_sum(ansatz)?;
            if sum.is_zero() {
                return Ok((Mpo::zero(n), 1));
            }
            let mpo = Mpo::from_pauli_sum(&sum, cutoff)?;
            let bond = mpo.max_bond();
            Ok((mpo, bond))
        }
        NcRoute::MpoArithmetic => {
            let mut acc = Mpo::zero(n);
            let mut cur = dh.clone(); // O_0
            let mut depth = 0usize;
            for (k, alpha) in ansatz.alphas.iter().enumerate() {
                let target = 2 * k + 1;
                while depth < target {
                    let (ho, _) = h.mul(&cur, usize::MAX, cutoff)?;
                    let (oh, _) = cur.mul(h, usize::MAX, cutoff)?;
                    let mut next = ho.add(&oh.scaled(-C_ONE))?;
                    next.compress(usize::MAX, cutoff)?;
                    if next.max_bond() > NC_MPO_BOND_CAP {
                        return Err(Error::ResourceCap {
                            what: "nc mpo bond",
                            got: next.max_bond(),
                            cap: NC_MPO_BOND_CAP,
                        });
                    }
                    cur = next;
                    depth += 1;
                }
                acc = acc.add(&cur.scaled(Complex64::new(0.0, *alpha)))?;
                acc.compress(usize::MAX, cutoff)?;
            }
            let bond = acc.max_bond();
            Ok((acc, bond))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpo::{expval, ising_hamiltonian, IsingParams};
    use crate::oracle::{exact_agp, DenseOperator, DEFAULT_DEGENERACY_TOL};
    use crate::pauli::Pauli;

    fn single_qubit_h_dh(lambda: f64) -> (Mpo, Mpo) {
        let p_i = IsingParams::new(vec![], vec![1.0], vec![0.0]).unwrap();
        let p_f = IsingParams::new(vec![], vec![0.0], vec![1.0]).unwrap();
        let p = IsingParams::interpolate(&p_i, &p_f, lambda).unwrap();
        let h = ising_hamiltonian(&p).unwrap();
        let dparams = IsingParams::difference(&p_i, &p_f).unwrap();
        let dh = ising_hamiltonian(&dparams).unwrap();
        (h, dh)
    }

    #[test]
    fn commutator_superop_matches_dense() {
        use crate::testutil::{random_hermitian_mpo, random_mpo};
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        let n = 3;
        let h = random_hermitian_mpo(n, 3, &mut rng);
        let a = random_mpo(n, 2, &mut rng);
        let k = commutator_superop(&h).unwrap();
        let ka = k.apply(&a.to_choi_mps(), usize::MAX, 0.0).unwrap().0;
        let got = Mpo::from_choi_mps(&ka).unwrap().to_dense().unwrap();
        let hd = h.to_dense().unwrap();
        let ad = a.to_dense().unwrap();
        let want = contract(&hd, &ad, &[(1, 0)])
            .unwrap()
            .sub(&contract(&ad, &hd, &[(1, 0)]).unwrap())
            .unwrap();
        assert!(got.sub(&want).unwrap().norm() < 1e-10 * want.norm().max(1.0));
    }

    #[test]
    fn single_qubit_variational_agp_is_minus_y() {
        let (h, dh) = single_qubit_h_dh(0.5);
        let mut cfg = AgpSolverConfig::new(1, 1e-12);
        cfg.sweeps = 6;
        let sol = solve_variational_agp(&h, &dh, &cfg).unwrap();
        let a = sol.a_tilde.to_dense().unwrap();
        let minus_y = Pauli::Y.matrix().scaled(-C_ONE);
        assert!(
            a.sub(&minus_y).unwrap().max_abs() < 1e-6,
            "got {:?}",
            a.data()
        );
        assert!(sol.normalized_error < 1e-9, "error {}", sol.normalized_error);
    }

    #[test]
    fn zero_driving_returns_zero_solution() {
        let (h, _) = single_qubit_h_dh(0.5);
        let dh = Mpo::zero(1);
        let sol = solve_variational_agp(&h, &dh, &AgpSolverConfig::new(1, 1e-10)).unwrap();
        assert!(sol.zero_driving);
        assert_eq!(sol.normalized_cost, 0.0);
        assert!(sol.a_tilde.frobenius_norm().unwrap() < 1e-14);
    }

    #[test]
    fn cost_of_zero_ansatz_is_one() {
        let (h, dh) = single_qubit_h_dh(0.3);
        let zero = Mpo::zero(1);
        let c = normalized_cost(&zero, &h, &dh).unwrap();
        assert!((c - 1.0).abs() < 1e-12, "cost {c}");
    }

    #[test]
    fn exact_agp_has_negligible_error_metric() {
        let n = 3;
        let p_i = IsingParams::uniform(n, 0.0, 0.48, 0.0).unwrap();
        let p_f = IsingParams::uniform(n, 1.0, 0.48, 1.0).unwrap();
        let lam = 0.4;
        let p = IsingParams::interpolate(&p_i, &p_f, lam).unwrap();
        let h_dense = DenseOperator::from_pauli_sum(&p.to_pauli_sum().unwrap()).unwrap();
        let dh_params = IsingParams::difference(&p_i, &p_f).unwrap();
        let dh_dense = DenseOperator::from_pauli_sum(&dh_params.to_pauli_sum().unwrap()).unwrap();
        let a_dense = exact_agp(&h_dense, &dh_dense, DEFAULT_DEGENERACY_TOL).unwrap();
        let a_mpo = Mpo::from_dense(a_dense.matrix(), n).unwrap();
        let h = ising_hamiltonian(&p).unwrap();
        let dh = ising_hamiltonian(&dh_params).unwrap();
        let err = normalized_error(&a_mpo, &h, &dh).unwrap();
        assert!(err < 1e-10, "error {err}");
        let defect = hermitian_defect(&a_mpo).unwrap();
        assert!(defect < 1e-10, "defect {defect}");
    }

    #[test]
    fn metrics_match_dense_traces() {
        use crate::testutil::random_hermitian_mpo;
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(92);
        let n = 3;
        let h = random_hermitian_mpo(n, 3, &mut rng);
        let dh = random_hermitian_mpo(n, 2, &mut rng);
        let a = crate::testutil::random_mpo(n, 2, &mut rng);
        let got_cost = normalized_cost(&a, &h, &dh).unwrap();
        let got_err = normalized_error(&a, &h, &dh).unwrap();

        let hd = h.to_dense().unwrap();
        let dhd = dh.to_dense().unwrap();
        let ad = a.to_dense().unwrap();
        let mm = |x: &DenseTensor, y: &DenseTensor| contract(x, y, &[(1, 0)]).unwrap();
        let comm = mm(&ad, &hd).sub(&mm(&hd, &ad)).unwrap();
        let g = dhd
            .add(&comm.scaled(Complex64::new(0.0, 1.0)))
            .unwrap();
        let gh = mm(&g, &hd).sub(&mm(&hd, &g)).unwrap();
        let tr_norm = dhd.norm() * dhd.norm();
        let want_cost = g.norm() * g.norm() / tr_norm;
        let want_err = gh.norm() * gh.norm() / tr_norm;
        assert!(
            (got_cost - want_cost).abs() < 1e-10 * want_cost.max(1.0),
            "cost {got_cost} vs {want_cost}"
        );
        assert!(
            (got_err - want_err).abs() < 1e-10 * want_err.max(1.0),
            "err {got_err} vs {want_err}"
        );
    }

    #[test]
    fn variational_matches_exact_at_full_rank() {
        // N=2 with chi=4 spans the full operator space; the converged cost
        // must match the exact-AGP cost computed densely.
        let n = 2;
        let p_i = IsingParams::uniform(n, 0.0, 0.48, 0.0).unwrap();
        let p_f = IsingParams::uniform(n, 1.0, 0.48, 1.0).unwrap();
        let lam = 0.6;
        let p = IsingParams::interpolate(&p_i, &p_f, lam).unwrap();
        let h = ising_hamiltonian(&p).unwrap();
        let dh_params = IsingParams::difference(&p_i, &p_f).unwrap();
        let dh = ising_hamiltonian(&dh_params).unwrap();
        let mut cfg = AgpSolverConfig::new(4, 1e-12);
        cfg.sweeps = 16;
        let sol = solve_variational_agp(&h, &dh, &cfg).unwrap();

        let h_dense = DenseOperator::from_pauli_sum(&p.to_pauli_sum().unwrap()).unwrap();
        let dh_dense = DenseOperator::from_pauli_sum(&dh_params.to_pauli_sum().unwrap()).unwrap();
        let a_exact = exact_agp(&h_dense, &dh_dense, DEFAULT_DEGENERACY_TOL).unwrap();
        let a_exact_mpo = Mpo::from_dense(a_exact.matrix(), n).unwrap();
        let c_exact = normalized_cost(&a_exact_mpo, &h, &dh).unwrap();
        assert!(
            sol.normalized_cost <= c_exact + 1e-8,
            "variational {} vs exact {}",
            sol.normalized_cost,
            c_exact
        );
        assert!(sol.normalized_error < 1e-8, "error {}", sol.normalized_error);
    }

    #[test]
    fn returned_cost_dominates_sweep_trace() {
        // Galerkin sweeps are not monotone, but the returned iterate is the
        // best one seen: its cost lower-bounds the whole recorded trace.
        let n = 4;
        let p_i = IsingParams::uniform(n, 0.0, 0.48, 0.0).unwrap();
        let p_f = IsingParams::uniform(n, 1.0, 0.48, 1.0).unwrap();
        let p = IsingParams::interpolate(&p_i, &p_f, 0.5).unwrap();
        let h = ising_hamiltonian(&p).unwrap();
        let dh = ising_hamiltonian(&IsingParams::difference(&p_i, &p_f).unwrap()).unwrap();
        let mut cfg = AgpSolverConfig::new(4, 1e-8);
        cfg.sweeps = 8;
        let sol = solve_variational_agp(&h, &dh, &cfg).unwrap();
        assert!(!sol.cost_trace.is_empty());
        for c in &sol.cost_trace {
            assert!(
                sol.normalized_cost <= c + 1e-12,
                "returned {} above trace point {c}",
                sol.normalized_cost
            );
        }
        // and the solve makes real progress on this problem
        assert!(sol.normalized_cost < 0.9, "cost {}", sol.normalized_cost);
    }

    #[test]
    fn nc_fit_single_qubit_order_one_is_exact() {
        // H = 0.5 (X + Z), dH = Z - X: the order-1 NC ansatz reproduces the
        // exact gauge potential -Y with alpha = -1/2.
        let mut h = PauliSum::zero(1).unwrap();
        h.add_term(Complex64::new(0.5, 0.0), &[(0, Pauli::X)]).unwrap();
        h.add_term(Complex64::new(0.5, 0.0), &[(0, Pauli::Z)]).unwrap();
        let mut dh = PauliSum::zero(1).unwrap();
        dh.add_term(Complex64::new(-1.0, 0.0), &[(0, Pauli::X)]).unwrap();
        dh.add_term(Complex64::new(1.0, 0.0), &[(0, Pauli::Z)]).unwrap();
        let ansatz = fit_nc_coefficients(&h, &dh, 1).unwrap();
        assert!((ansatz.alphas[0] + 0.5).abs() < 1e-12, "alpha {:?}", ansatz.alphas);
        let a = nc_ansatz_pauli_sum(&ansatz).unwrap().to_dense().unwrap();
        let minus_y = Pauli::Y.matrix().scaled(-C_ONE);
        assert!(a.sub(&minus_y).unwrap().max_abs() < 1e-12);
        let (_, err) = nc_normalized_metrics(&h, &dh, &ansatz, 1_000_000).unwrap();
        assert!(err < 1e-12);
    }

    #[test]
    fn nc_fit_commuting_case_gives_zero() {
        // H and dH both diagonal: every commutator vanishes.
        let mut h = PauliSum::zero(2).unwrap();
        h.add_term(C_ONE, &[(0, Pauli::Z), (1, Pauli::Z)]).unwrap();
        let mut dh = PauliSum::zero(2).unwrap();
        dh.add_term(C_ONE, &[(0, Pauli::Z)]).unwrap();
        let ansatz = fit_nc_coefficients(&h, &dh, 2).unwrap();
        assert!(ansatz.degenerate);
        assert!(ansatz.alphas.iter().all(|a| a.abs() < 1e-14));
    }

    #[test]
    fn nc_fit_beats_manual_alphas() {
        let n = 4;
        let p = IsingParams::uniform(n, 1.0, 0.3, 0.3).unwrap();
        let h = p.to_pauli_sum().unwrap();
        let dh = IsingParams::uniform(n, 0.0, 0.3, 0.3)
            .unwrap()
            .to_pauli_sum()
            .unwrap();
        let ansatz = fit_nc_coefficients(&h, &dh, 2).unwrap();
        let fitted = nc_cost_of_alphas(&h, &dh, &ansatz.alphas, 1_000_000).unwrap();
        for delta in [[0.01, 0.0], [0.0, -0.02], [-0.03, 0.01]] {
            let manual = [
                ansatz.alphas[0] + delta[0],
                ansatz.alphas[1] + delta[1],
            ];
            let c = nc_cost_of_alphas(&h, &dh, &manual, 1_000_000).unwrap();
            assert!(fitted <= c + 1e-12, "fitted {fitted} vs manual {c}");
        }
    }

    #[test]
    fn nc_routes_agree_small() {
        let n = 6;
        let p = IsingParams::uniform(n, 1.0, 0.3, 0.3).unwrap();
        let hp = p.to_pauli_sum().unwrap();
        let dhp = IsingParams::uniform(n, 0.0, 0.3, 0.3)
            .unwrap()
            .to_pauli_sum()
            .unwrap();
        let ansatz = fit_nc_coefficients(&hp, &dhp, 1).unwrap();
        let h = ising_hamiltonian(&p).unwrap();
        let dh = Mpo::from_pauli_sum(&dhp, 1e-24).unwrap();
        let (m1, b1) = nc_to_mpo(&ansatz, &h, &dh, NcRoute::PauliStrings, 1e-24).unwrap();
        let (m2, b2) = nc_to_mpo(&ansatz, &h, &dh, NcRoute::MpoArithmetic, 1e-24).unwrap();
        let d1 = m1.to_dense().unwrap();
        let d2 = m2.to_dense().unwrap();
        assert!(
            d1.sub(&d2).unwrap().norm() < 1e-10 * d1.norm().max(1.0),
            "routes disagree"
        );
        assert!(b1 <= b2, "strings bond {b1} vs arithmetic bond {b2}");
    }

    #[test]
    fn nc_zero_ansatz_to_mpo_is_zero() {
        let n = 3;
        let p = IsingParams::uniform(n, 1.0, 0.3, 0.3).unwrap();
        let hp = p.to_pauli_sum().unwrap();
        let mut dhp = PauliSum::zero(n).unwrap();
        dhp.add_term(C_ONE, &[(0, Pauli::Z)]).unwrap();
        let mut ansatz = fit_nc_coefficients(&hp, &dhp, 1).unwrap();
        ansatz.alphas[0] = 0.0;
        let h = ising_hamiltonian(&p).unwrap();
        let dh = Mpo::from_pauli_sum(&dhp, 1e-24).unwrap();
        let (m, b) = nc_to_mpo(&ansatz, &h, &dh, NcRoute::PauliStrings, 1e-24).unwrap();
        assert_eq!(b, 1);
        assert!(m.frobenius_norm().unwrap() < 1e-14);
    }

    #[test]
    fn nc_metrics_match_dense_single_qubit() {
        let mut h = PauliSum::zero(1).unwrap();
        h.add_term(Complex64::new(0.5, 0.0), &[(0, Pauli::X)]).unwrap();
        h.add_term(Complex64::new(0.5, 0.0), &[(0, Pauli::Z)]).unwrap();
        let mut dh = PauliSum::zero(1).unwrap();
        dh.add_term(Complex64::new(-1.0, 0.0), &[(0, Pauli::X)]).unwrap();
        dh.add_term(Complex64::new(1.0, 0.0), &[(0, Pauli::Z)]).unwrap();
        let ansatz = fit_nc_coefficients(&h, &dh, 1).unwrap();
        let (cost, err) = nc_normalized_metrics(&h, &dh, &ansatz, 1_000_000).unwrap();
        // dense route through the MPO metrics
        let a_pauli = nc_ansatz_pauli_sum(&ansatz).unwrap();
        let a_mpo = Mpo::from_pauli_sum(&a_pauli, 1e-24).unwrap();
        let h_mpo = Mpo::from_pauli_sum(&h, 1e-24).unwrap();
        let dh_mpo = Mpo::from_pauli_sum(&dh, 1e-24).unwrap();
        let cost_mpo = normalized_cost(&a_mpo, &h_mpo, &dh_mpo).unwrap();
        let err_mpo = normalized_error(&a_mpo, &h_mpo, &dh_mpo).unwrap();
        assert!((cost - cost_mpo).abs() < 1e-10);
        assert!((err - err_mpo).abs() < 1e-10);
    }

    #[test]
    fn warm_start_from_smaller_chi_does_not_regress() {
        let n = 4;
        let p_i = IsingParams::uniform(n, 0.0, 0.48, 0.0).unwrap();
        let p_f = IsingParams::uniform(n, 1.0, 0.48, 1.0).unwrap();
        let p = IsingParams::interpolate(&p_i, &p_f, 0.5).unwrap();
        let h = ising_hamiltonian(&p).unwrap();
        let dh = ising_hamiltonian(&IsingParams::difference(&p_i, &p_f).unwrap()).unwrap();
        let eta = 1e-6;
        let mut cfg2 = AgpSolverConfig::new(2, eta);
        cfg2.sweeps = 10;
        let sol2 = solve_variational_agp(&h, &dh, &cfg2).unwrap();
        let mut cfg4 = AgpSolverConfig::new(4, eta);
        cfg4.sweeps = 10;
        cfg4.init = AgpInit::Warm(Box::new(sol2.a_tilde.clone()));
        let sol4 = solve_variational_agp(&h, &dh, &cfg4).unwrap();
        assert!(
            sol4.normalized_cost <= sol2.normalized_cost + 1e-10,
            "chi=4 cost {} vs chi=2 cost {}",
            sol4.normalized_cost,
            sol2.normalized_cost
        );
    }

    #[test]
    fn variational_beats_nc_on_small_chain() {
        // chi large enough to express more than the low-order NC ansatz.
        let n = 4;
        let p = IsingParams::uniform(n, 1.0, 0.3, 0.3).unwrap();
        let h = ising_hamiltonian(&p).unwrap();
        let dhp = IsingParams::uniform(n, 0.0, 0.3, 0.3).unwrap();
        let dh = Mpo::from_pauli_sum(&dhp.to_pauli_sum().unwrap(), 1e-24).unwrap();
        // "tuned eta": take the best error over a small regularization scan
        let mut best: Option<AgpSolution> = None;
        for eta in [1e-6, 1e-4, 1e-2] {
            let mut cfg = AgpSolverConfig::new(8, eta);
            cfg.sweeps = 12;
            let sol = solve_variational_agp(&h, &dh, &cfg).unwrap();
            if best
                .as_ref()
                .map(|b| sol.normalized_error < b.normalized_error)
                .unwrap_or(true)
            {
                best = Some(sol);
            }
        }
        let sol = best.unwrap();
        let ansatz = fit_nc_coefficients(
            &p.to_pauli_sum().unwrap(),
            &dhp.to_pauli_sum().unwrap(),
            2,
        )
        .unwrap();
        let (_, nc_err) =
            nc_normalized_metrics(&p.to_pauli_sum().unwrap(), &dhp.to_pauli_sum().unwrap(), &ansatz, 1_000_000)
                .unwrap();
        assert!(
            sol.normalized_error < nc_err,
            "variational {} vs nc {}",
            sol.normalized_error,
            nc_err
        );
        let e = expval(
            &Mps::basis_state(&[0; 4]).unwrap(),
            &sol.a_tilde,
        )
        .unwrap();
        assert!(e.norm().is_finite());
    }
}
