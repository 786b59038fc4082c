//! Slice-by-slice compression of adiabatic (counterdiabatic) evolution into
//! fixed-depth parameterized circuits, plus the fixed-angle Trotter baseline
//! circuits used for gate-count-matched comparisons.

use num_complex::Complex64;

use crate::agp::{solve_variational_agp, AgpInit, AgpSolution, AgpSolverConfig};
use crate::circuit::{
    apply_circuit_with, build_brickwork, build_sequential, cost_and_gradient, Circuit,
    CircuitLayout, CostContext, CostMode, GateKind, LayoutStyle, ParamRef,
};
use crate::error::{Error, Result};
use crate::lbfgs::{lbfgs_minimize, LbfgsOutcome, OptimizerConfig};
use crate::mpo::{taylor_propagator, trotter2_propagator, IsingParams, Mpo};
use crate::mps::Mps;
use crate::schedule::{Schedule, SlicePoint};

pub use crate::schedule::PathKind;

/// Midpoint table of a schedule (`(t_s, lambda_s, lambda_dot_s)` rows).
pub fn slice_midpoints(sched: &Schedule) -> Vec<SlicePoint> {
    sched.midpoints()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhoMode {
    /// `rho = |psi_i><psi_i|`; chunks after the first use the state
    /// propagated through the frozen earlier chunks (equivalent reading of
    /// the pure-state cost once the previous chunks are folded in).
    PureState,
    /// `rho = 1`: Hilbert-Schmidt (trace) cost on the vectorized operators.
    Trace,
    /// Explicit name for the chunk-propagated pure-state behaviour.
    PropagatedState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlicePropagator {
    /// `1 - i tau H` built from the interpolated Hamiltonian MPO.
    Taylor1,
    /// Second-order Taylor expansion.
    Taylor2,
    /// Second-order Trotter step (bond-2 MPO) from Ising parameters.
    Trotter2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnsatzKind {
    Brickwork,
    Sequential,
}

#[derive(Debug, Clone)]
pub struct CompressionConfig {
    pub ansatz: AnsatzKind,
    /// Layers per chunk.
    pub layers: usize,
    pub propagator: SlicePropagator,
    pub rho_mode: RhoMode,
    pub opt: OptimizerConfig,
    pub max_bond: usize,
    pub cutoff: f64,
    /// A final slice cost above this value flags a warning on the run.
    pub cost_warn_threshold: f64,
    pub keep_snapshots: bool,
}

impl Default for CompressionConfig {
    fn default() -> Self {
        CompressionConfig {
            ansatz: AnsatzKind::Brickwork,
            layers: 4,
            propagator: SlicePropagator::Taylor1,
            rho_mode: RhoMode::PureState,
            opt: OptimizerConfig::default(),
            max_bond: 64,
            cutoff: 1e-12,
            cost_warn_threshold: -0.5,
            keep_snapshots: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SliceRecord {
    pub slice: usize,
    pub t: f64,
    pub lambda: f64,
    pub lambda_dot: f64,
    pub chunk: usize,
    pub cost: f64,
    pub iterations: usize,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct CompressionRun {
    /// One optimized circuit per chunk.
    pub circuits: Vec<Circuit>,
    pub slice_records: Vec<SliceRecord>,
    /// `U(theta_q) |psi_i>` after every slice (pure-state modes and, for
    /// reporting, trace mode when an initial state is supplied).
    pub snapshots: Vec<Mps>,
    pub warnings: Vec<String>,
}

impl CompressionRun {
    /// Apply all frozen chunk circuits to a state.
    pub fn apply_all(&self, s: &Mps, max_bond: usize, cutoff: f64) -> Result<Mps> {
        let mut cur = s.clone();
        for c in &self.circuits {
            cur = apply_circuit_with(c, &c.theta, &cur, max_bond, cutoff)?.0;
        }
        Ok(cur)
    }
}

/// Interpolating-Hamiltonian problem shared by the compression experiments.
#[derive(Debug, Clone)]
pub struct IsingPath {
    pub p_i: IsingParams,
    pub p_f: IsingParams,
}

impl IsingPath {
    pub fn new(p_i: IsingParams, p_f: IsingParams) -> Result<Self> {
        if p_i.nsites() != p_f.nsites() {
            return Err(Error::InvalidArgument("path: size mismatch".into()));
        }
        Ok(IsingPath { p_i, p_f })
    }

    pub fn n_sites(&self) -> usize {
        self.p_i.nsites()
    }

    pub fn params_at(&self, lambda: f64) -> Result<IsingParams> {
        IsingParams::interpolate(&self.p_i, &self.p_f, lambda)
    }

    pub fn h_mpo_at(&self, lambda: f64) -> Result<Mpo> {
        crate::mpo::ising_hamiltonian(&self.params_at(lambda)?)
    }

    pub fn dh_mpo(&self) -> Result<Mpo> {
        let d = IsingParams::difference(&self.p_i, &self.p_f)?;
        let p = d.to_pauli_sum()?;
        if p.is_zero() {
            Ok(Mpo::zero(self.n_sites()))
        } else {
            Mpo::from_pauli_sum(&p, 1e-24)
        }
    }
}

/// Warm-started per-slice variational gauge potentials along a schedule.
pub fn solve_slice_agps(
    path: &IsingPath,
    sched: &Schedule,
    chi: usize,
    eta: f64,
    sweeps: usize,
) -> Result<Vec<AgpSolution>> {
    let dh = path.dh_mpo()?;
    let mut out = Vec::with_capacity(sched.n_slices());
    let mut prev: Option<Mpo> = None;
    for p in sched.midpoints() {
        let h = path.h_mpo_at(p.lambda)?;
        let mut cfg = AgpSolverConfig::new(chi, eta);
        cfg.sweeps = sweeps;
        if let Some(w) = prev.take() {
            cfg.init = AgpInit::Warm(Box::new(w));
        }
        let sol = solve_variational_agp(&h, &dh, &cfg)?;
        prev = Some(sol.a_tilde.clone());
        out.push(sol);
    }
    Ok(out)
}

fn build_chunk_circuit(kind: AnsatzKind, n: usize, layers: usize) -> Result<Circuit> {
    match kind {
        AnsatzKind::Brickwork => build_brickwork(n, layers, 1),
        AnsatzKind::Sequential => build_sequential(n, layers),
    }
}

/// One slice evolution operator `W_q - i tau lam_dot_q A_q`.
fn slice_operator(
    path: &IsingPath,
    p: &SlicePoint,
    tau: f64,
    prop: SlicePropagator,
    agp: Option<&Mpo>,
    cutoff: f64,
) -> Result<Mpo> {
    let w = match prop {
        SlicePropagator::Taylor1 => taylor_propagator(&path.h_mpo_at(p.lambda)?, tau, 1, cutoff)?,
        SlicePropagator::Taylor2 => taylor_propagator(&path.h_mpo_at(p.lambda)?, tau, 2, cutoff)?,
        SlicePropagator::Trotter2 => trotter2_propagator(&path.params_at(p.lambda)?, tau)?,
    };
    match agp {
        Some(a) if p.lambda_dot != 0.0 => {
            // The propagator generator must be Hermitian; the variational
            // ansatz can carry an anti-Hermitian commutant component that the
            // cost functional cannot see. Use the Hermitian part.
            let half = Complex64::new(0.5, 0.0);
            let mut a_h = a.scaled(half).add(&a.adjoint().scaled(half))?;
            a_h.compress(usize::MAX, 1e-28)?;
            let term = a_h.scaled(Complex64::new(0.0, -tau * p.lambda_dot));
            let mut v = w.add(&term)?;
            v.compress(usize::MAX, 1e-28)?;
            Ok(v)
        }
        _ => Ok(w),
    }
}

/// Optimize one circuit per chunk, slice after slice, warm-starting each
/// slice from the previous optimum.
pub fn compress_chunks(
    path: &IsingPath,
    sched: &Schedule,
    agps: Option<&[AgpSolution]>,
    psi_i: &Mps,
    cfg: &CompressionConfig,
) -> Result<CompressionRun> {
    let n = path.n_sites();
    if psi_i.n_sites() != n {
        return Err(Error::InvalidArgument("compress: psi_i size mismatch".into()));
    }
    let points = sched.midpoints();
    if let Some(a) = agps {
        if a.len() != points.len() {
            return Err(Error::InvalidArgument(format!(
                "compress: {} gauge potentials for {} slices",
                a.len(),
                points.len()
            )));
        }
    }
    let tau = sched.tau();
    let boundaries = sched.chunk_boundaries();

    let mut circuits = Vec::with_capacity(sched.chunks);
    let mut slice_records = Vec::with_capacity(points.len());
    let mut snapshots = Vec::new();
    let mut warnings = Vec::new();

    // State entering the current chunk (pure-state modes).
    let mut chunk_input = psi_i.clone();
    chunk_input.canonicalize(0)?;

    let mut circuit = build_chunk_circuit(cfg.ansatz, n, cfg.layers)?;
    let mut theta = circuit.theta.clone();
    let mut chunk_idx = 0usize;

    for p in &points {
        let agp_op = agps.map(|a| &a[p.index].a_tilde);
        let v = slice_operator(path, p, tau, cfg.propagator, agp_op, cfg.cutoff)?;

        let trace_mode = cfg.rho_mode == RhoMode::Trace;
        let outcome: LbfgsOutcome = if trace_mode {
            let v_choi = v.to_choi_mps();
            let target =
                crate::circuit::apply_circuit_choi_right(&circuit, &theta, &v_choi, cfg.max_bond, cfg.cutoff)?;
            let ctx = CostContext {
                mode: CostMode::Trace,
                input: None,
                target: &target,
                max_bond: cfg.max_bond,
                cutoff: cfg.cutoff,
            };
            let mut eval = |th: &[f64]| cost_and_gradient(&circuit, th, &ctx);
            lbfgs_minimize(&mut eval, &theta, &cfg.opt)
        } else {
            let prev_state = apply_circuit_with(&circuit, &theta, &chunk_input, cfg.max_bond, cfg.cutoff)?.0;
            let (target, _) = v.apply(&prev_state, cfg.max_bond, cfg.cutoff)?;
            let ctx = CostContext {
                mode: CostMode::PureState,
                input: Some(&chunk_input),
                target: &target,
                max_bond: cfg.max_bond,
                cutoff: cfg.cutoff,
            };
            let mut eval = |th: &[f64]| cost_and_gradient(&circuit, th, &ctx);
            lbfgs_minimize(&mut eval, &theta, &cfg.opt)
        }
        .map_err(|e| e.in_stage(format!("slice {} optimization", p.index)))?;

        if !outcome.cost.is_finite() {
            return Err(Error::OptimizerFailure(format!(
                "slice {}: non-finite cost",
                p.index
            )));
        }
        theta = outcome.theta.clone();
        if outcome.cost > cfg.cost_warn_threshold {
            warnings.push(format!(
                "slice {}: final cost {:.6} above threshold {:.6}",
                p.index, outcome.cost, cfg.cost_warn_threshold
            ));
        }
        slice_records.push(SliceRecord {
            slice: p.index,
            t: p.t,
            lambda: p.lambda,
            lambda_dot: p.lambda_dot,
            chunk: chunk_idx,
            cost: outcome.cost,
            iterations: outcome.iterations,
            grad_norm: outcome.grad_norm,
        });
        if cfg.keep_snapshots {
            let mut snap = apply_circuit_with(&circuit, &theta, &chunk_input, cfg.max_bond, cfg.cutoff)?.0;
            // Truncation can shave a sliver of norm; metrics expect states.
            let _ = snap.normalize();
            snapshots.push(snap);
        }

        // Chunk boundary: freeze and start the next circuit.
        if p.index + 1 == boundaries[chunk_idx] {
            let mut frozen = circuit.clone();
            frozen.theta = theta.clone();
            let next_input = apply_circuit_with(&frozen, &theta, &chunk_input, cfg.max_bond, cfg.cutoff)?.0;
            circuits.push(frozen);
            chunk_idx += 1;
            if chunk_idx < sched.chunks {
                chunk_input = next_input;
                let _ = chunk_input.normalize();
                circuit = build_chunk_circuit(cfg.ansatz, n, cfg.layers)?;
                theta = circuit.theta.clone();
            }
        }
    }
    Ok(CompressionRun {
        circuits,
        slice_records,
        snapshots,
        warnings,
    })
}

/// Fixed-angle second-order Trotter circuit over `r_chunks` chunks, sampling
/// the interpolated Hamiltonian at each chunk midpoint. Matches the
/// optimized circuits' two-qubit gate budget `R (N - 1)`.
pub fn trotter_adiabatic_circuit(
    path: &IsingPath,
    total_time: f64,
    r_chunks: usize,
    pathkind: PathKind,
) -> Result<Circuit> {
    if r_chunks < 1 {
        return Err(Error::InvalidArgument("trotter circuit: R >= 1".into()));
    }
    if total_time <= 0.0 {
        return Err(Error::InvalidArgument("trotter circuit: T > 0".into()));
    }
    let n = path.n_sites();
    if n < 2 {
        return Err(Error::InvalidArgument("trotter circuit: need n >= 2".into()));
    }
    let dt = total_time / r_chunks as f64;
    let mut gates = Vec::new();
    let mut blocks = Vec::new();
    let mut row = 0usize;
    for r in 0..r_chunks {
        let t_mid = (r as f64 + 0.5) * dt;
        let lambda = pathkind.lambda(t_mid, total_time);
        let p = path.params_at(lambda)?;
        // half transverse step
        for q in 0..n {
            blocks.push(crate::circuit::BlockSpec {
                row,
                lo: q,
                width: 1,
                gate_start: gates.len(),
                gate_end: gates.len() + 1,
            });
            gates.push(crate::circuit::Gate {
                kind: GateKind::Rx,
                sites: vec![q],
                param: ParamRef::Fixed(dt * p.g[q]),
            });
        }
        row += 1;
        // full diagonal step: ZZ on all bonds (even then odd), Z on all sites
        for parity in 0..2usize {
            let mut a = parity;
            let mut placed = false;
            while a + 1 < n {
                blocks.push(crate::circuit::BlockSpec {
                    row,
                    lo: a,
                    width: 2,
                    gate_start: gates.len(),
                    gate_end: gates.len() + 1,
                });
                gates.push(crate::circuit::Gate {
                    kind: GateKind::Uzz,
                    sites: vec![a, a + 1],
                    param: ParamRef::Fixed(2.0 * dt * p.j[a]),
                });
                a += 2;
                placed = true;
            }
            if placed {
                row += 1;
            }
        }
        for q in 0..n {
            blocks.push(crate::circuit::BlockSpec {
                row,
                lo: q,
                width: 1,
                gate_start: gates.len(),
                gate_end: gates.len() + 1,
            });
            gates.push(crate::circuit::Gate {
                kind: GateKind::Rz,
                sites: vec![q],
                param: ParamRef::Fixed(2.0 * dt * p.h[q]),
            });
        }
        row += 1;
        // second half transverse step
        for q in 0..n {
            blocks.push(crate::circuit::BlockSpec {
                row,
                lo: q,
                width: 1,
                gate_start: gates.len(),
                gate_end: gates.len() + 1,
            });
            gates.push(crate::circuit::Gate {
                kind: GateKind::Rx,
                sites: vec![q],
                param: ParamRef::Fixed(dt * p.g[q]),
            });
        }
        row += 1;
    }
    let c = Circuit {
        layout: CircuitLayout {
            style: LayoutStyle::TrotterChunks,
            n_sites: n,
            layers: r_chunks,
            chunks: r_chunks,
            include_initial_1q_layer: false,
        },
        gates,
        blocks,
        theta: vec![],
    };
    c.validate()?;
    Ok(c)
}
