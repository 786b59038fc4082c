//! Two-site DMRG ground-state and first-excited-state solver, plus spectral
//! gap scans along an adiabatic path.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::{boundary3 as boundary_env, overlap_push_left, overlap_push_right, sandwich_push_left as env_push_left, sandwich_push_right as env_push_right};
use crate::error::{Error, Result};
use crate::mpo::{expval, sandwich, Mpo};
use crate::mps::Mps;
use crate::tensor::{contract, eigh_small, svd_truncate, DenseTensor};
use crate::testutil::random_mps;

#[derive(Debug, Clone)]
pub struct DmrgConfig {
    pub max_bond: usize,
    pub cutoff: f64,
    pub sweeps: usize,
    /// Energy change per sweep below which the run counts as converged.
    pub convergence_tol: f64,
    /// Weight of the `|gs><gs|` penalty for excited-state targeting;
    /// 0 selects an automatic estimate.
    pub penalty_weight: f64,
    /// Local Lanczos iteration cap.
    pub local_iters: usize,
}

impl Default for DmrgConfig {
    fn default() -> Self {
        DmrgConfig {
            max_bond: 64,
            cutoff: 1e-12,
            sweeps: 30,
            convergence_tol: 1e-10,
            penalty_weight: 0.0,
            local_iters: 40,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DmrgResult {
    pub energy: f64,
    pub state: Mps,
    pub variance: f64,
    pub converged: bool,
    pub sweeps_used: usize,
    /// Energy at the end of each sweep.
    pub energy_trace: Vec<f64>,
}

struct Envs {
    /// left[i]: contraction of sites < i, axes (bra, mpo, ket).
    left: Vec<DenseTensor>,
    /// right[i]: contraction of sites > i, axes (bra, mpo, ket).
    right: Vec<DenseTensor>,
}

/// Effective two-site matvec: `y = H_eff x` with x of shape (l, d, d, r).
fn local_matvec(
    left: &DenseTensor,
    w1: &DenseTensor,
    w2: &DenseTensor,
    right: &DenseTensor,
    x: &DenseTensor,
) -> Result<DenseTensor> {
    let t = contract(left, x, &[(2, 0)])?; // (b, w, d1, d2, rk)
    let t = contract(&t, w1, &[(1, 0), (2, 2)])?; // (b, d2, rk, o1, w')
    let t = contract(&t, w2, &[(4, 0), (1, 2)])?; // (b, rk, o1, o2, w'')
    let t = contract(&t, right, &[(1, 2), (4, 1)])?; // (b, o1, o2, b_r)
    Ok(t)
}

struct PenaltyTerm {
    weight: f64,
    /// Local representation of the penalized state, shape (l, d, d, r).
    local: DenseTensor,
}

/// Lanczos for the lowest eigenpair of a Hermitian operator given by matvec.
fn lanczos_lowest(
    matvec: &mut dyn FnMut(&DenseTensor) -> Result<DenseTensor>,
    v0: &DenseTensor,
    max_iter: usize,
    tol: f64,
) -> Result<(f64, DenseTensor)> {
    let norm0 = v0.norm();
    if norm0 == 0.0 {
        return Err(Error::SolverDiverged("lanczos: zero start vector".into()));
    }
    let mut basis: Vec<DenseTensor> = vec![v0.scaled(Complex64::new(1.0 / norm0, 0.0))];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut last_eval = f64::INFINITY;
    for it in 0..max_iter {
        let mut w = matvec(&basis[it])?;
        let alpha = contract(&basis[it].conj(), &w, &[(0, 0), (1, 1), (2, 2), (3, 3)])?
            .scalar_value()
            .re;
        alphas.push(alpha);
        // full reorthogonalization
        for b in &basis {
            let ov = contract(&b.conj(), &w, &[(0, 0), (1, 1), (2, 2), (3, 3)])?.scalar_value();
            w = w.add(&b.scaled(-ov))?;
        }
        for b in &basis {
            let ov = contract(&b.conj(), &w, &[(0, 0), (1, 1), (2, 2), (3, 3)])?.scalar_value();
            w = w.add(&b.scaled(-ov))?;
        }
        let beta = w.norm();
        // Tridiagonal eigenproblem of the current Krylov space.
        let m = alphas.len();
        let mut tri = DenseTensor::zeros(&[m, m]);
        for i in 0..m {
            tri.set(&[i, i], Complex64::new(alphas[i], 0.0));
            if i + 1 < m {
                tri.set(&[i, i + 1], Complex64::new(betas[i], 0.0));
                tri.set(&[i + 1, i], Complex64::new(betas[i], 0.0));
            }
        }
        let (evals, evecs) = eigh_small(&tri)?;
        let e0 = evals[0];
        let done = beta < 1e-13 || (last_eval - e0).abs() < tol || it + 1 == max_iter;
        if done {
            let mut out = DenseTensor::zeros(v0.shape());
            for (i, b) in basis.iter().enumerate() {
                out = out.add(&b.scaled(evecs.get(&[i, 0])))?;
            }
            let n = out.norm();
            return Ok((e0, out.scaled(Complex64::new(1.0 / n, 0.0))));
        }
        last_eval = e0;
        betas.push(beta);
        basis.push(w.scaled(Complex64::new(1.0 / beta, 0.0)));
    }
    unreachable!("lanczos loop always returns");
}

fn solve_with_penalty(
    envs: (&DenseTensor, &DenseTensor),
    ws: (&DenseTensor, &DenseTensor),
    penalty: Option<&PenaltyTerm>,
    theta0: &DenseTensor,
    max_iter: usize,
) -> Result<(f64, DenseTensor)> {
    let (left, right) = envs;
    let (w1, w2) = ws;
    let mut matvec = |x: &DenseTensor| -> Result<DenseTensor> {
        let mut y = local_matvec(left, w1, w2, right, x)?;
        if let Some(p) = penalty {
            let ov = contract(&p.local.conj(), x, &[(0, 0), (1, 1), (2, 2), (3, 3)])?
                .scalar_value();
            y = y.add(&p.local.scaled(ov * p.weight))?;
        }
        Ok(y)
    };
    lanczos_lowest(&mut matvec, theta0, max_iter, 1e-10)
}

fn init_envs(psi: &Mps, h: &Mpo) -> Result<Envs> {
    let n = psi.n_sites();
    let mut left = vec![boundary_env(); n];
    let mut right = vec![boundary_env(); n];
    for i in (2..n).rev() {
        let prev = if i == n - 1 {
            boundary_env()
        } else {
            right[i + 1].clone()
        };
        right[i] = env_push_right(&prev, psi.tensor(i), h.tensor(i), psi.tensor(i))?;
    }
    left[0] = boundary_env();
    Ok(Envs { left, right })
}

fn split_theta(
    theta: &DenseTensor,
    max_bond: usize,
    cutoff: f64,
    to_right: bool,
) -> Result<(DenseTensor, DenseTensor)> {
    let svd = svd_truncate(theta, &[0, 1], max_bond, cutoff)?;
    let k = svd.s.len();
    if to_right {
        // left site is the orthogonal factor, S goes right
        let mut sv = svd.v.clone();
        let cols = sv.shape()[1] * sv.shape()[2];
        let data = sv.data_mut();
        for (row, s) in svd.s.iter().enumerate() {
            for c in 0..cols {
                data[row * cols + c] *= *s;
            }
        }
        Ok((svd.u, sv))
    } else {
        let mut us = svd.u.clone();
        let (lu, du) = (us.shape()[0], us.shape()[1]);
        let data = us.data_mut();
        for i in 0..lu * du {
            for (c, s) in svd.s.iter().enumerate() {
                data[i * k + c] *= *s;
            }
        }
        Ok((us, svd.v))
    }
}

fn run_sweeps(
    h: &Mpo,
    cfg: &DmrgConfig,
    init: Mps,
    penalized: Option<(&Mps, f64)>,
) -> Result<DmrgResult> {
    let n = h.n_sites();
    if n < 2 {
        return Err(Error::InvalidArgument("dmrg: need at least 2 sites".into()));
    }
    let mut psi = init;
    psi.canonicalize(0)?;
    psi.normalize()?;
    let mut envs = init_envs(&psi, h)?;

    // Overlap environments against the penalized state, when present.
    let mut pen_left: Vec<DenseTensor> = Vec::new();
    let mut pen_right: Vec<DenseTensor> = Vec::new();
    let pen_boundary = crate::env::boundary2();
    if let Some((gs, _)) = penalized {
        pen_left = vec![pen_boundary.clone(); n];
        pen_right = vec![pen_boundary.clone(); n];
        for i in (2..n).rev() {
            let prev = if i == n - 1 {
                pen_boundary.clone()
            } else {
                pen_right[i + 1].clone()
            };
            // bra = psi side, ket = gs side
            pen_right[i] = overlap_push_right(&prev, psi.tensor(i), gs.tensor(i))?;
        }
    }

    let mut energy = f64::INFINITY;
    let mut energy_trace = Vec::new();
    let mut converged = false;
    let mut sweeps_used = 0;

    for sweep in 0..cfg.sweeps {
        let mut sweep_energy = energy;
        // left-to-right
        for i in 0..n - 1 {
            let left = if i == 0 { boundary_env() } else { envs.left[i].clone() };
            let right = if i + 1 == n - 1 {
                boundary_env()
            } else {
                envs.right[i + 2].clone()
            };
            let theta0 = contract(psi.tensor(i), psi.tensor(i + 1), &[(2, 0)])?;
            let penalty = match penalized {
                Some((gs, w)) => {
                    let pl = if i == 0 { pen_boundary.clone() } else { pen_left[i].clone() };
                    let pr = if i + 1 == n - 1 {
                        pen_boundary.clone()
                    } else {
                        pen_right[i + 2].clone()
                    };
                    let gtheta = contract(gs.tensor(i), gs.tensor(i + 1), &[(2, 0)])?;
                    // (b_l, k_l) x (k_l, d, d, k_r) -> (b_l, d, d, k_r)
                    let t = contract(&pl, &gtheta, &[(1, 0)])?;
                    let local = contract(&t, &pr, &[(3, 1)])?; // (b_l, d, d, b_r)
                    Some(PenaltyTerm { weight: w, local })
                }
                None => None,
            };
            let (e, theta) = solve_with_penalty(
                (&left, &right),
                (h.tensor(i), h.tensor(i + 1)),
                penalty.as_ref(),
                &theta0,
                cfg.local_iters,
            )?;
            sweep_energy = e;
            let (a, b) = split_theta(&theta, cfg.max_bond, cfg.cutoff, true)?;
            psi.set_tensor(i, a);
            psi.set_tensor(i + 1, b);
            psi.set_center(Some(i + 1));
            let lprev = if i == 0 { boundary_env() } else { envs.left[i].clone() };
            envs.left[i + 1] = env_push_left(&lprev, psi.tensor(i), h.tensor(i), psi.tensor(i))?;
            if let Some((gs, _)) = penalized {
                let prev = if i == 0 { pen_boundary.clone() } else { pen_left[i].clone() };
                pen_left[i + 1] = overlap_push_left(&prev, psi.tensor(i), gs.tensor(i))?;
            }
        }
        // right-to-left
        for i in (0..n - 1).rev() {
            let left = if i == 0 { boundary_env() } else { envs.left[i].clone() };
            let right = if i + 1 == n - 1 {
                boundary_env()
            } else {
                envs.right[i + 2].clone()
            };
            let theta0 = contract(psi.tensor(i), psi.tensor(i + 1), &[(2, 0)])?;
            let penalty = match penalized {
                Some((gs, w)) => {
                    let pl = if i == 0 { pen_boundary.clone() } else { pen_left[i].clone() };
                    let pr = if i + 1 == n - 1 {
                        pen_boundary.clone()
                    } else {
                        pen_right[i + 2].clone()
                    };
                    let gtheta = contract(gs.tensor(i), gs.tensor(i + 1), &[(2, 0)])?;
                    let t = contract(&pl, &gtheta, &[(1, 0)])?;
                    let local = contract(&t, &pr, &[(3, 1)])?;
                    Some(PenaltyTerm { weight: w, local })
                }
                None => None,
            };
            let (e, theta) = solve_with_penalty(
                (&left, &right),
                (h.tensor(i), h.tensor(i + 1)),
                penalty.as_ref(),
                &theta0,
                cfg.local_iters,
            )?;
            sweep_energy = e;
            let (a, b) = split_theta(&theta, cfg.max_bond, cfg.cutoff, false)?;
            psi.set_tensor(i, a);
            psi.set_tensor(i + 1, b);
            psi.set_center(Some(i));
            let rprev = if i + 1 == n - 1 {
                boundary_env()
            } else {
                envs.right[i + 2].clone()
            };
            envs.right[i + 1] =
                env_push_right(&rprev, psi.tensor(i + 1), h.tensor(i + 1), psi.tensor(i + 1))?;
            if let Some((gs, _)) = penalized {
                let prev = if i + 1 == n - 1 {
                    pen_boundary.clone()
                } else {
                    pen_right[i + 2].clone()
                };
                pen_right[i + 1] =
                    overlap_push_right(&prev, psi.tensor(i + 1), gs.tensor(i + 1))?;
            }
        }
        sweeps_used = sweep + 1;
        energy_trace.push(sweep_energy);
        let delta = (energy - sweep_energy).abs();
        energy = sweep_energy;
        if delta < cfg.convergence_tol {
            converged = true;
            break;
        }
    }

    psi.canonicalize(0)?;
    psi.normalize()?;
    // Energy and variance from exact sandwiches (penalty-free).
    let e_final = expval(&psi, h)?.re;
    let h2 = sandwich(&psi, &[h, h], &psi)?.re;
    let variance = (h2 - e_final * e_final).max(0.0);
    Ok(DmrgResult {
        energy: e_final,
        state: psi,
        variance,
        converged,
        sweeps_used,
        energy_trace,
    })
}

pub fn ground_state(h: &Mpo, cfg: &DmrgConfig) -> Result<DmrgResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xd312);
    let init = random_mps(h.n_sites(), 2, 2, &mut rng);
    ground_state_with_init(h, cfg, &init)
}

pub fn ground_state_with_init(h: &Mpo, cfg: &DmrgConfig, init: &Mps) -> Result<DmrgResult> {
    crate::mpo::hermitian_spot_check(h)?;
    run_sweeps(h, cfg, init.clone(), None)
}

/// First excited state via a `w |gs><gs|` penalty added to the local problem.
pub fn first_excited(h: &Mpo, gs: &Mps, cfg: &DmrgConfig) -> Result<DmrgResult> {
    crate::mpo::hermitian_spot_check(h)?;
    let e_gs = expval(gs, h)?.re;
    let weight = if cfg.penalty_weight > 0.0 {
        cfg.penalty_weight
    } else {
        10.0 * (e_gs.abs() + 1.0)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0xe5c1);
    let init = random_mps(h.n_sites(), 2, 2.min(cfg.max_bond), &mut rng);
    let result = run_sweeps(h, cfg, init, Some((gs, weight)))?;
    let overlap = result.state.inner(gs)?.norm();
    if overlap > 1e-4 {
        return Err(Error::SolverDiverged(format!(
            "first_excited: overlap with ground state is {overlap}"
        )));
    }
    Ok(result)
}

#[derive(Debug, Clone, Copy)]
pub struct GapPoint {
    pub lambda: f64,
    pub gap: f64,
    pub e0: f64,
    pub e1: f64,
    pub converged: bool,
}

/// Ground/first-excited scan over a uniform lambda grid, warm-starting the
/// ground state across grid points.
pub fn gap_scan(
    hbuilder: &dyn Fn(f64) -> Result<Mpo>,
    points: usize,
    cfg: &DmrgConfig,
) -> Result<Vec<GapPoint>> {
    if points < 2 {
        return Err(Error::InvalidArgument("gap_scan: points must be >= 2".into()));
    }
    let mut rows = Vec::with_capacity(points);
    let mut warm: Option<Mps> = None;
    for p in 0..points {
        let lambda = p as f64 / (points - 1) as f64;
        let h = hbuilder(lambda)?;
        let gs = match &warm {
            Some(prev) => ground_state_with_init(&h, cfg, prev)?,
            None => ground_state(&h, cfg)?,
        };
        let ex = first_excited(&h, &gs.state, cfg)?;
        let gap = ex.energy - gs.energy;
        if gap < -1e-8 {
            return Err(Error::SolverDiverged(format!(
                "gap_scan: negative gap {gap} at lambda {lambda}"
            )));
        }
        rows.push(GapPoint {
            lambda,
            gap,
            e0: gs.energy,
            e1: ex.energy,
            converged: gs.converged && ex.converged,
        });
        warm = Some(gs.state);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpo::{ising_hamiltonian, IsingParams};
    use crate::oracle::DenseOperator;
    use crate::pauli::{Pauli, PauliSum};

    fn sum_z(n: usize, coeff: f64) -> Mpo {
        let mut p = PauliSum::zero(n).unwrap();
        for k in 0..n {
            p.add_term(Complex64::new(coeff, 0.0), &[(k, Pauli::Z)]).unwrap();
        }
        Mpo::from_pauli_sum(&p, 1e-24).unwrap()
    }

    #[test]
    fn ground_state_diagonal_hamiltonian() {
        let n = 4;
        let h = sum_z(n, 1.0);
        let r = ground_state(&h, &DmrgConfig::default()).unwrap();
        assert!((r.energy + n as f64).abs() < 1e-9, "energy {}", r.energy);
        // state is |1...1>
        let dense = r.state.to_dense_state().unwrap();
        let last = (1usize << n) - 1;
        assert!((dense.get(&[last]).norm() - 1.0).abs() < 1e-8);
        assert!(r.variance < 1e-8);
    }

    #[test]
    fn ground_state_product_transverse() {
        let n = 5;
        let params = IsingParams::uniform(n, 0.0, -1.0, 0.0).unwrap();
        let h = ising_hamiltonian(&params).unwrap();
        let r = ground_state(&h, &DmrgConfig::default()).unwrap();
        assert!((r.energy + n as f64).abs() < 1e-9);
    }

    #[test]
    fn ground_state_matches_dense_critical_chain() {
        let n = 10;
        let params = IsingParams::uniform(n, 1.0, -1.0, 0.0).unwrap();
        let h = ising_hamiltonian(&params).unwrap();
        let r = ground_state(&h, &DmrgConfig::default()).unwrap();
        let dense = DenseOperator::from_pauli_sum(&params.to_pauli_sum().unwrap()).unwrap();
        let (e0, _) = dense.ground_state().unwrap();
        assert!((r.energy - e0).abs() < 1e-9, "dmrg {} dense {e0}", r.energy);
        assert!(r.converged);
    }

    #[test]
    fn energy_trace_monotone() {
        let n = 8;
        let params = IsingParams::uniform(n, 1.0, -0.7, 0.3).unwrap();
        let h = ising_hamiltonian(&params).unwrap();
        let r = ground_state(&h, &DmrgConfig::default()).unwrap();
        for w in r.energy_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-10, "trace not monotone: {:?}", r.energy_trace);
        }
    }

    #[test]
    fn first_excited_diagonal() {
        let n = 3;
        let h = sum_z(n, 1.0);
        let cfg = DmrgConfig::default();
        let gs = ground_state(&h, &cfg).unwrap();
        let ex = first_excited(&h, &gs.state, &cfg).unwrap();
        assert!((ex.energy - (-(n as f64) + 2.0)).abs() < 1e-7, "E1 {}", ex.energy);
        assert!(ex.state.inner(&gs.state).unwrap().norm() < 1e-6);
    }

    #[test]
    fn first_excited_matches_dense_gap() {
        let n = 8;
        // Gap-traversal path at lambda = 0.5.
        let p_i = IsingParams::uniform(n, 0.0, 0.48, 0.0).unwrap();
        let p_f = IsingParams::uniform(n, 1.0, 0.48, 1.0).unwrap();
        let params = IsingParams::interpolate(&p_i, &p_f, 0.5).unwrap();
        let h = ising_hamiltonian(&params).unwrap();
        let cfg = DmrgConfig::default();
        let gs = ground_state(&h, &cfg).unwrap();
        let ex = first_excited(&h, &gs.state, &cfg).unwrap();
        let dense = DenseOperator::from_pauli_sum(&params.to_pauli_sum().unwrap()).unwrap();
        let (e0, e1) = dense.gap().unwrap();
        assert!((gs.energy - e0).abs() < 1e-8);
        assert!((ex.energy - e1).abs() < 1e-6, "dmrg {} dense {}", ex.energy, e1);
    }

    #[test]
    fn degenerate_ground_space_gap_zero() {
        let n = 4;
        let params = IsingParams::uniform(n, 1.0, 0.0, 0.0).unwrap();
        let h = ising_hamiltonian(&params).unwrap();
        let cfg = DmrgConfig::default();
        let gs = ground_state(&h, &cfg).unwrap();
        let ex = first_excited(&h, &gs.state, &cfg).unwrap();
        let dense = DenseOperator::from_pauli_sum(&params.to_pauli_sum().unwrap()).unwrap();
        let (e0, e1) = dense.gap().unwrap();
        assert!((gs.energy - e0).abs() < 1e-8);
        assert!((ex.energy - e1).abs() < 1e-6);
        assert!((ex.energy - gs.energy).abs() < 1e-6, "degenerate sector gap");
    }

    #[test]
    fn gap_scan_free_spins() {
        // lambda = 0 end of the GT problem: H = g* sum X has gap 2 g*.
        let gstar = 0.48;
        let n = 5;
        let p_i = IsingParams::uniform(n, 0.0, gstar, 0.0).unwrap();
        let p_f = IsingParams::uniform(n, 1.0, gstar, 1.0).unwrap();
        let rows = gap_scan(
            &|lambda| ising_hamiltonian(&IsingParams::interpolate(&p_i, &p_f, lambda)?),
            3,
            &DmrgConfig::default(),
        )
        .unwrap();
        assert!((rows[0].gap - 2.0 * gstar).abs() < 1e-6, "gap {}", rows[0].gap);
        for r in &rows {
            assert!(r.gap >= -1e-8);
        }
    }
}
