//! Parameterized quantum circuits: brickwork and sequential layouts, their
//! action on MPS, and analytic parameter gradients of the slice cost
//! `-Re tr[U^dag(theta) V U(theta_prev) rho^2] / tr[rho^2]`.
//!
//! Circuits are organized as rows of one- and two-site blocks. Within a row
//! the blocks ascend in site order, so a single bidirectional sweep yields
//! every block environment; gradients per parameter then reduce to 4x4 (or
//! 16x16 in trace mode) algebra inside the owning block.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mps::Mps;
use crate::tensor::{contract, svd_truncate, DenseTensor, C_ONE, C_ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateKind {
    Rx,
    Rz,
    Uzz,
    Cnot,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ParamRef {
    /// Index into the flat parameter vector.
    Slot(usize),
    /// Fixed angle (radians); not optimized.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    /// One site for Rx/Rz; `[control, target]` for Cnot; the two (adjacent)
    /// sites for Uzz.
    pub sites: Vec<usize>,
    pub param: ParamRef,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayoutStyle {
    Brickwork,
    Sequential,
    /// Fixed-angle Trotter chunks; kept for gate-count parity bookkeeping.
    TrotterChunks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitLayout {
    pub style: LayoutStyle,
    pub n_sites: usize,
    /// Layers per chunk (brickwork) or total layers (sequential).
    pub layers: usize,
    pub chunks: usize,
    pub include_initial_1q_layer: bool,
}

/// A contiguous run of gates acting inside a 1- or 2-site window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub row: usize,
    pub lo: usize,
    pub width: u8,
    pub gate_start: usize,
    pub gate_end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub layout: CircuitLayout,
    pub gates: Vec<Gate>,
    pub blocks: Vec<BlockSpec>,
    pub theta: Vec<f64>,
}

/// Identity-valued parameter assignment for one sequential two-qubit block:
/// three pi/2 middle angles undo the CNOT staircase and the corner triplets
/// absorb the leftover local rotations.
pub const SEQ_BLOCK_IDENTITY: [f64; 15] = [
    0.0,
    0.0,
    0.0,
    0.0,
    0.0,
    0.0,
    std::f64::consts::FRAC_PI_2,
    std::f64::consts::FRAC_PI_2,
    std::f64::consts::FRAC_PI_2,
    -std::f64::consts::FRAC_PI_4,
    std::f64::consts::PI,
    std::f64::consts::FRAC_PI_4,
    3.0 * std::f64::consts::FRAC_PI_4,
    std::f64::consts::PI,
    -3.0 * std::f64::consts::FRAC_PI_4,
];

impl Circuit {
    pub fn n_sites(&self) -> usize {
        self.layout.n_sites
    }

    pub fn param_count(&self) -> usize {
        self.theta.len()
    }

    pub fn uzz_count(&self) -> usize {
        self.gates.iter().filter(|g| g.kind == GateKind::Uzz).count()
    }

    pub fn cnot_count(&self) -> usize {
        self.gates.iter().filter(|g| g.kind == GateKind::Cnot).count()
    }

    pub fn two_qubit_gate_count(&self) -> usize {
        self.uzz_count() + self.cnot_count()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Circuit> {
        let c: Circuit = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.layout.n_sites;
        for (gi, g) in self.gates.iter().enumerate() {
            match g.kind {
                GateKind::Rx | GateKind::Rz => {
                    if g.sites.len() != 1 || g.sites[0] >= n {
                        return Err(Error::Validation(format!("gate {gi}: bad 1q sites")));
                    }
                }
                GateKind::Uzz | GateKind::Cnot => {
                    if g.sites.len() != 2
                        || g.sites[0].abs_diff(g.sites[1]) != 1
                        || g.sites[0].max(g.sites[1]) >= n
                    {
                        return Err(Error::Validation(format!(
                            "gate {gi}: two-qubit gates must span adjacent sites"
                        )));
                    }
                }
            }
            if let ParamRef::Slot(s) = g.param {
                if s >= self.theta.len() {
                    return Err(Error::Validation(format!(
                        "gate {gi}: slot {s} out of range"
                    )));
                }
            }
            if g.kind == GateKind::Cnot && !matches!(g.param, ParamRef::Fixed(_)) {
                return Err(Error::Validation(format!("gate {gi}: CNOT takes no slot")));
            }
        }
        for b in &self.blocks {
            if b.gate_end > self.gates.len() || b.gate_start >= b.gate_end {
                return Err(Error::Validation("block with bad gate range".into()));
            }
            let hi = b.lo + b.width as usize - 1;
            if hi >= n {
                return Err(Error::Validation("block out of range".into()));
            }
            for g in &self.gates[b.gate_start..b.gate_end] {
                if g.sites.iter().any(|&s| s < b.lo || s > hi) {
                    return Err(Error::Validation("gate outside its block window".into()));
                }
            }
        }
        Ok(())
    }

    fn rows(&self) -> Vec<Vec<BlockSpec>> {
        let nrows = self.blocks.iter().map(|b| b.row + 1).max().unwrap_or(0);
        let mut rows = vec![Vec::new(); nrows];
        for b in &self.blocks {
            rows[b.row].push(*b);
        }
        for r in &mut rows {
            r.sort_by_key(|b| b.lo);
        }
        rows
    }
}

struct Builder {
    gates: Vec<Gate>,
    blocks: Vec<BlockSpec>,
    theta: Vec<f64>,
    row: usize,
}

impl Builder {
    fn new() -> Self {
        Builder {
            gates: Vec::new(),
            blocks: Vec::new(),
            theta: Vec::new(),
            row: 0,
        }
    }

    fn slot(&mut self, init: f64) -> ParamRef {
        self.theta.push(init);
        ParamRef::Slot(self.theta.len() - 1)
    }

    fn begin_block(&mut self, lo: usize, width: u8) -> usize {
        self.blocks.push(BlockSpec {
            row: self.row,
            lo,
            width,
            gate_start: self.gates.len(),
            gate_end: self.gates.len(),
        });
        self.blocks.len() - 1
    }

    fn end_block(&mut self, id: usize) {
        self.blocks[id].gate_end = self.gates.len();
    }

    fn gate(&mut self, kind: GateKind, sites: Vec<usize>, param: ParamRef) {
        self.gates.push(Gate { kind, sites, param });
    }

    fn next_row(&mut self) {
        self.row += 1;
    }
}

/// Brickwork PQC: per chunk, one layer of single-qubit ZXZ blocks followed by
/// `l` brick layers; each brick layer covers all `n - 1` bonds with one Uzz
/// plus four single-qubit rotations per block. All parameters start at zero
/// (identity circuit).
pub fn build_brickwork(n: usize, l: usize, m: usize) -> Result<Circuit> {
    if n < 2 || l < 1 || m < 1 {
        return Err(Error::InvalidArgument(format!(
            "brickwork: need n >= 2, l >= 1, m >= 1 (got {n}, {l}, {m})"
        )));
    }
    let mut b = Builder::new();
    for _chunk in 0..m {
        for q in 0..n {
            let id = b.begin_block(q, 1);
            let p0 = b.slot(0.0);
            b.gate(GateKind::Rz, vec![q], p0);
            let p1 = b.slot(0.0);
            b.gate(GateKind::Rx, vec![q], p1);
            let p2 = b.slot(0.0);
            b.gate(GateKind::Rz, vec![q], p2);
            b.end_block(id);
        }
        b.next_row();
        for _layer in 0..l {
            for parity in 0..2usize {
                let mut placed = false;
                let mut a = parity;
                while a + 1 < n {
                    let id = b.begin_block(a, 2);
                    let p = b.slot(0.0);
                    b.gate(GateKind::Uzz, vec![a, a + 1], p);
                    let p = b.slot(0.0);
                    b.gate(GateKind::Rx, vec![a], p);
                    let p = b.slot(0.0);
                    b.gate(GateKind::Rz, vec![a], p);
                    let p = b.slot(0.0);
                    b.gate(GateKind::Rx, vec![a + 1], p);
                    let p = b.slot(0.0);
                    b.gate(GateKind::Rz, vec![a + 1], p);
                    b.end_block(id);
                    placed = true;
                    a += 2;
                }
                if placed {
                    b.next_row();
                }
            }
        }
    }
    let c = Circuit {
        layout: CircuitLayout {
            style: LayoutStyle::Brickwork,
            n_sites: n,
            layers: l,
            chunks: m,
            include_initial_1q_layer: true,
        },
        gates: b.gates,
        blocks: b.blocks,
        theta: b.theta,
    };
    c.validate()?;
    Ok(c)
}

/// Sequential PQC: `l` staircase layers of universal two-qubit blocks, each
/// block made of three CNOTs and fifteen rotations. Parameters start at the
/// identity assignment.
pub fn build_sequential(n: usize, l: usize) -> Result<Circuit> {
    if n < 2 || l < 1 {
        return Err(Error::InvalidArgument(format!(
            "sequential: need n >= 2, l >= 1 (got {n}, {l})"
        )));
    }
    let mut b = Builder::new();
    for _layer in 0..l {
        for a in 0..n - 1 {
            let q1 = a;
            let q2 = a + 1;
            let id = b.begin_block(a, 2);
            let init = SEQ_BLOCK_IDENTITY;
            // pre triplets (Z X Z, applied in list order)
            for (site, base) in [(q1, 0), (q2, 3)] {
                let p = b.slot(init[base]);
                b.gate(GateKind::Rz, vec![site], p);
                let p = b.slot(init[base + 1]);
                b.gate(GateKind::Rx, vec![site], p);
                let p = b.slot(init[base + 2]);
                b.gate(GateKind::Rz, vec![site], p);
            }
            b.gate(GateKind::Cnot, vec![q2, q1], ParamRef::Fixed(0.0));
            let p = b.slot(init[6]);
            b.gate(GateKind::Rz, vec![q1], p);
            b.gate(
                GateKind::Rz,
                vec![q2],
                ParamRef::Fixed(-std::f64::consts::FRAC_PI_2),
            );
            let p = b.slot(init[7]);
            b.gate(GateKind::Rx, vec![q2], p);
            b.gate(
                GateKind::Rz,
                vec![q2],
                ParamRef::Fixed(std::f64::consts::FRAC_PI_2),
            );
            b.gate(GateKind::Cnot, vec![q1, q2], ParamRef::Fixed(0.0));
            b.gate(
                GateKind::Rz,
                vec![q2],
                ParamRef::Fixed(-std::f64::consts::FRAC_PI_2),
            );
            let p = b.slot(init[8]);
            b.gate(GateKind::Rx, vec![q2], p);
            b.gate(
                GateKind::Rz,
                vec![q2],
                ParamRef::Fixed(std::f64::consts::FRAC_PI_2),
            );
            b.gate(GateKind::Cnot, vec![q2, q1], ParamRef::Fixed(0.0));
            // post triplets
            for (site, base) in [(q1, 9), (q2, 12)] {
                let p = b.slot(init[base]);
                b.gate(GateKind::Rz, vec![site], p);
                let p = b.slot(init[base + 1]);
                b.gate(GateKind::Rx, vec![site], p);
                let p = b.slot(init[base + 2]);
                b.gate(GateKind::Rz, vec![site], p);
            }
            b.end_block(id);
        }
        b.next_row();
    }
    let c = Circuit {
        layout: CircuitLayout {
            style: LayoutStyle::Sequential,
            n_sites: n,
            layers: l,
            chunks: 1,
            include_initial_1q_layer: false,
        },
        gates: b.gates,
        blocks: b.blocks,
        theta: b.theta,
    };
    c.validate()?;
    Ok(c)
}

// ---------------------------------------------------------------------------
// Gate matrices
// ---------------------------------------------------------------------------

fn rx_matrix(t: f64) -> DenseTensor {
    let (c, s) = ((t / 2.0).cos(), (t / 2.0).sin());
    DenseTensor::from_data(
        &[2, 2],
        vec![
            Complex64::new(c, 0.0),
            Complex64::new(0.0, -s),
            Complex64::new(0.0, -s),
            Complex64::new(c, 0.0),
        ],
    )
    .expect("rx")
}

fn rz_matrix(t: f64) -> DenseTensor {
    DenseTensor::from_data(
        &[2, 2],
        vec![
            Complex64::from_polar(1.0, -t / 2.0),
            C_ZERO,
            C_ZERO,
            Complex64::from_polar(1.0, t / 2.0),
        ],
    )
    .expect("rz")
}

fn uzz_matrix(t: f64) -> DenseTensor {
    let mut m = DenseTensor::zeros(&[4, 4]);
    for (k, zz) in [(0usize, 1.0), (1, -1.0), (2, -1.0), (3, 1.0)] {
        m.set(&[k, k], Complex64::from_polar(1.0, -t / 2.0 * zz));
    }
    m
}

fn cnot_matrix(control_first: bool) -> DenseTensor {
    let mut m = DenseTensor::zeros(&[4, 4]);
    for i in 0..2usize {
        for j in 0..2usize {
            let (c, t) = if control_first { (i, j) } else { (j, i) };
            let t_out = if c == 1 { t ^ 1 } else { t };
            let (o1, o2) = if control_first { (c, t_out) } else { (t_out, c) };
            m.set(&[o1 * 2 + o2, i * 2 + j], C_ONE);
        }
    }
    m
}

fn generator_matrix(kind: GateKind) -> DenseTensor {
    match kind {
        GateKind::Rx => crate::pauli::Pauli::X.matrix(),
        GateKind::Rz => crate::pauli::Pauli::Z.matrix(),
        GateKind::Uzz => {
            let mut m = DenseTensor::zeros(&[4, 4]);
            for (k, zz) in [(0usize, 1.0), (1, -1.0), (2, -1.0), (3, 1.0)] {
                m.set(&[k, k], Complex64::new(zz, 0.0));
            }
            m
        }
        GateKind::Cnot => unreachable!("cnot has no generator"),
    }
}

fn kron(a: &DenseTensor, b: &DenseTensor) -> DenseTensor {
    let (ra, ca) = (a.shape()[0], a.shape()[1]);
    let (rb, cb) = (b.shape()[0], b.shape()[1]);
    DenseTensor::from_fn(&[ra * rb, ca * cb], |idx| {
        a.get(&[idx[0] / rb, idx[1] / cb]) * b.get(&[idx[0] % rb, idx[1] % cb])
    })
}

/// Embed a gate matrix into the block window (width 1 or 2 sites, qubit
/// space).
fn embed_in_block(g: &Gate, theta: &[f64], lo: usize, width: u8) -> DenseTensor {
    let angle = match g.param {
        ParamRef::Slot(s) => theta[s],
        ParamRef::Fixed(f) => f,
    };
    let raw = match g.kind {
        GateKind::Rx => rx_matrix(angle),
        GateKind::Rz => rz_matrix(angle),
        GateKind::Uzz => uzz_matrix(angle),
        GateKind::Cnot => cnot_matrix(g.sites[0] < g.sites[1]),
    };
    if width == 1 {
        return raw;
    }
    match g.kind {
        GateKind::Rx | GateKind::Rz => {
            let id = DenseTensor::identity(2);
            if g.sites[0] == lo {
                kron(&raw, &id)
            } else {
                kron(&id, &raw)
            }
        }
        _ => raw,
    }
}

/// Generator embedded the same way (for `dG = -(i/2) gen G`).
fn embed_generator(g: &Gate, lo: usize, width: u8) -> DenseTensor {
    let gen = generator_matrix(g.kind);
    if width == 1 {
        return gen;
    }
    match g.kind {
        GateKind::Rx | GateKind::Rz => {
            let id = DenseTensor::identity(2);
            if g.sites[0] == lo {
                kron(&gen, &id)
            } else {
                kron(&id, &gen)
            }
        }
        _ => gen,
    }
}

/// Lift an operator matrix to the vectorized (Choi) space: `G -> G (x) 1`
/// acting on combined per-site indices `out * 2 + in`.
fn lift_matrix(m: &DenseTensor, width: u8) -> DenseTensor {
    if width == 1 {
        let id = DenseTensor::identity(2);
        kron(m, &id)
    } else {
        DenseTensor::from_fn(&[16, 16], |idx| {
            let (row, col) = (idx[0], idx[1]);
            let (c1, c2) = (row / 4, row % 4);
            let (d1, d2) = (col / 4, col % 4);
            let (o1, i1) = (c1 / 2, c1 % 2);
            let (o2, i2) = (c2 / 2, c2 % 2);
            let (o1p, i1p) = (d1 / 2, d1 % 2);
            let (o2p, i2p) = (d2 / 2, d2 % 2);
            if i1 == i1p && i2 == i2p {
                m.get(&[o1 * 2 + o2, o1p * 2 + o2p])
            } else {
                C_ZERO
            }
        })
    }
}

struct BlockMatrices {
    /// Full block unitary in the evaluation space (2^w or 4^w).
    total: DenseTensor,
    /// Per parameterized gate: (slot, dBlock/dtheta).
    derivs: Vec<(usize, DenseTensor)>,
}

fn block_matrices(
    c: &Circuit,
    b: &BlockSpec,
    theta: &[f64],
    lifted: bool,
    with_derivs: bool,
) -> BlockMatrices {
    let gates = &c.gates[b.gate_start..b.gate_end];
    let prims: Vec<DenseTensor> = gates
        .iter()
        .map(|g| {
            let m = embed_in_block(g, theta, b.lo, b.width);
            if lifted {
                lift_matrix(&m, b.width)
            } else {
                m
            }
        })
        .collect();
    let dim = prims[0].shape()[0];
    let mm = |x: &DenseTensor, y: &DenseTensor| contract(x, y, &[(1, 0)]).expect("matmul");
    // total = P_last ... P_0
    let mut total = DenseTensor::identity(dim);
    for p in &prims {
        total = mm(p, &total);
    }
    let mut derivs = Vec::new();
    if with_derivs {
        // prefix[j] = P_{j-1} ... P_0 ; suffix built by peeling from the left.
        let mut prefix = DenseTensor::identity(dim);
        let mut suffixes = vec![DenseTensor::identity(dim); prims.len() + 1];
        for j in (0..prims.len()).rev() {
            suffixes[j] = mm(&suffixes[j + 1], &prims[j]);
        }
        for (j, g) in gates.iter().enumerate() {
            if let ParamRef::Slot(slot) = g.param {
                let gen = {
                    let m = embed_generator(g, b.lo, b.width);
                    if lifted {
                        lift_matrix(&m, b.width)
                    } else {
                        m
                    }
                };
                // dB = suffix_{j+1} * (-i/2) gen * P_j * prefix_j
                let half = Complex64::new(0.0, -0.5);
                let inner = mm(&gen, &mm(&prims[j], &prefix)).scaled(half);
                derivs.push((slot, mm(&suffixes[j + 1], &inner)));
            }
            prefix = mm(&prims[j], &prefix);
        }
    }
    BlockMatrices { total, derivs }
}

// ---------------------------------------------------------------------------
// Application and cost/gradient engine
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
pub struct ApplyReport {
    pub discarded_total: f64,
    pub capped: bool,
}

fn apply_block_matrix(
    state: &mut Mps,
    lo: usize,
    width: u8,
    m: &DenseTensor,
    max_bond: usize,
    cutoff: f64,
    report: &mut ApplyReport,
) -> Result<()> {
    let d = state.phys_dim(lo);
    if width == 1 {
        state.move_center_to(lo)?;
        state.apply_one_site_gate(lo, m)?;
        return Ok(());
    }
    state.move_center_to(lo)?;
    let gate = m.reshape(&[d, d, d, d])?;
    let w = state.apply_two_site_gate(lo, &gate, max_bond, cutoff)?;
    report.discarded_total += w;
    Ok(())
}

fn apply_block_matrix_backward(
    state: &mut Mps,
    lo: usize,
    width: u8,
    m_adj: &DenseTensor,
    max_bond: usize,
    cutoff: f64,
    report: &mut ApplyReport,
) -> Result<()> {
    let d = state.phys_dim(lo);
    if width == 1 {
        state.move_center_to(lo)?;
        state.apply_one_site_gate(lo, m_adj)?;
        return Ok(());
    }
    // Apply on (lo, lo+1) but leave the center on the left for the next
    // (descending) block.
    state.move_center_to(lo + 1)?;
    let theta = contract(state.tensor(lo), state.tensor(lo + 1), &[(2, 0)])?;
    let gate = m_adj.reshape(&[d, d, d, d])?;
    let theta = contract(&gate, &theta, &[(2, 1), (3, 2)])?.permute(&[2, 0, 1, 3]);
    let svd = svd_truncate(&theta, &[0, 1], max_bond, cutoff)?;
    let k = svd.s.len();
    let mut us = svd.u; // (l, d, k): scale columns by s -> center at lo
    let (lu, du) = (us.shape()[0], us.shape()[1]);
    {
        let data = us.data_mut();
        for i in 0..lu * du {
            for (col, s) in svd.s.iter().enumerate() {
                data[i * k + col] *= *s;
            }
        }
    }
    state.set_tensor(lo, us);
    state.set_tensor(lo + 1, svd.v);
    state.set_center(Some(lo));
    report.discarded_total += svd.discarded_weight;
    Ok(())
}

/// Apply the circuit to a state with truncation at each two-site block.
pub fn apply_circuit(
    c: &Circuit,
    s: &Mps,
    max_bond: usize,
    cutoff: f64,
) -> Result<(Mps, ApplyReport)> {
    apply_circuit_with(c, &c.theta, s, max_bond, cutoff)
}

pub fn apply_circuit_with(
    c: &Circuit,
    theta: &[f64],
    s: &Mps,
    max_bond: usize,
    cutoff: f64,
) -> Result<(Mps, ApplyReport)> {
    if s.n_sites() != c.n_sites() {
        return Err(Error::InvalidArgument("apply_circuit: size mismatch".into()));
    }
    if theta.len() != c.theta.len() {
        return Err(Error::InvalidArgument(format!(
            "apply_circuit: {} parameters supplied, {} expected",
            theta.len(),
            c.theta.len()
        )));
    }
    let lifted = s.phys_dim(0) == 4;
    let mut out = s.clone();
    let mut report = ApplyReport::default();
    for row in c.rows() {
        for b in &row {
            let mats = block_matrices(c, b, theta, lifted, false);
            apply_block_matrix(
                &mut out,
                b.lo,
                b.width,
                &mats.total,
                max_bond,
                cutoff,
                &mut report,
            )?;
        }
    }
    Ok((out, report))
}

/// Lift for right multiplication: `X -> X G`, i.e. `1 (x) G^T` on the
/// vectorized operand.
fn lift_matrix_right(m: &DenseTensor, width: u8) -> DenseTensor {
    if width == 1 {
        let id = DenseTensor::identity(2);
        kron(&id, &m.permute(&[1, 0]))
    } else {
        DenseTensor::from_fn(&[16, 16], |idx| {
            let (row, col) = (idx[0], idx[1]);
            let (c1, c2) = (row / 4, row % 4);
            let (d1, d2) = (col / 4, col % 4);
            let (o1, i1) = (c1 / 2, c1 % 2);
            let (o2, i2) = (c2 / 2, c2 % 2);
            let (o1p, i1p) = (d1 / 2, d1 % 2);
            let (o2p, i2p) = (d2 / 2, d2 % 2);
            if o1 == o1p && o2 == o2p {
                m.get(&[i1p * 2 + i2p, i1 * 2 + i2])
            } else {
                C_ZERO
            }
        })
    }
}

/// Apply the circuit as a right factor to a vectorized operator:
/// `choi(X) -> choi(X U(theta))`.
pub fn apply_circuit_choi_right(
    c: &Circuit,
    theta: &[f64],
    x: &Mps,
    max_bond: usize,
    cutoff: f64,
) -> Result<Mps> {
    if x.n_sites() != c.n_sites() || x.phys_dim(0) != 4 {
        return Err(Error::InvalidArgument(
            "apply_circuit_choi_right: expects a vectorized operand".into(),
        ));
    }
    let mut out = x.clone();
    let mut report = ApplyReport::default();
    // Right multiplication composes in reverse: X U = X (G_last ... G_1)
    // applies G_last's lift first... it does not: (X G_1 G_2) needs G_1's
    // right-lift applied first, and U = G_last ... G_1 means gates act on X
    // starting from the last one.
    for row in c.rows().iter().rev() {
        for b in row.iter().rev() {
            let mats = block_matrices(c, b, theta, false, false);
            let lifted = lift_matrix_right(&mats.total, b.width);
            apply_block_matrix(&mut out, b.lo, b.width, &lifted, max_bond, cutoff, &mut report)?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostMode {
    /// `rho = |input><input|`: cost is an overlap of evolved pure states.
    PureState,
    /// `rho = 1`: Hilbert-Schmidt overlap of the circuit with the target
    /// channel, evaluated in the vectorized (physical dimension 4) space.
    Trace,
}

pub struct CostContext<'a> {
    pub mode: CostMode,
    /// Pure-state mode: the chunk input state (physical dimension 2).
    /// Trace mode: ignored.
    pub input: Option<&'a Mps>,
    /// Pure-state mode: `(W - i tau lam_dot A) U(theta_prev) |input>`.
    /// Trace mode: the vectorized target operator (physical dimension 4).
    pub target: &'a Mps,
    pub max_bond: usize,
    pub cutoff: f64,
}

fn choi_identity(n: usize) -> Mps {
    let amp = vec![C_ONE, C_ZERO, C_ZERO, C_ONE];
    Mps::product_state(&vec![amp; n]).expect("choi identity")
}

fn prepare_io(c: &Circuit, ctx: &CostContext<'_>) -> Result<(Mps, f64, bool)> {
    match ctx.mode {
        CostMode::PureState => {
            let input = ctx.input.ok_or_else(|| {
                Error::InvalidArgument("pure-state mode requires an input state".into())
            })?;
            if input.phys_dim(0) != 2 || ctx.target.phys_dim(0) != 2 {
                return Err(Error::InvalidArgument(
                    "pure-state mode expects qubit states".into(),
                ));
            }
            let n2 = input.inner(input)?.re;
            Ok((input.clone(), n2 * n2, false))
        }
        CostMode::Trace => {
            if ctx.target.phys_dim(0) != 4 {
                return Err(Error::InvalidArgument(
                    "trace mode expects a vectorized target".into(),
                ));
            }
            let norm = 2f64.powi(c.n_sites() as i32);
            Ok((choi_identity(c.n_sites()), norm, true))
        }
    }
}

/// Cost only (one forward pass).
pub fn cost_value(c: &Circuit, theta: &[f64], ctx: &CostContext<'_>) -> Result<f64> {
    let (input, norm, _lifted) = prepare_io(c, ctx)?;
    let (applied, _) = apply_circuit_with(c, theta, &input, ctx.max_bond, ctx.cutoff)?;
    let ov = ctx.target.inner(&applied)?;
    Ok(-ov.re / norm)
}

/// Cost and the full analytic gradient via block environments.
pub fn cost_and_gradient(
    c: &Circuit,
    theta: &[f64],
    ctx: &CostContext<'_>,
) -> Result<(f64, Vec<f64>)> {
    let (input, norm, lifted) = prepare_io(c, ctx)?;
    let rows = c.rows();
    // Forward boundaries per row.
    let mut fwd = Vec::with_capacity(rows.len() + 1);
    let mut state = input;
    state.canonicalize(0)?;
    fwd.push(state.clone());
    let mut report = ApplyReport::default();
    for row in &rows {
        for b in row {
            let mats = block_matrices(c, b, theta, lifted, false);
            apply_block_matrix(
                &mut state,
                b.lo,
                b.width,
                &mats.total,
                ctx.max_bond,
                ctx.cutoff,
                &mut report,
            )?;
        }
        fwd.push(state.clone());
    }
    let ov = ctx.target.inner(&state)?;
    let cost = -ov.re / norm;

    let mut grad = vec![0.0; theta.len()];
    let mut bra = ctx.target.clone();
    bra.canonicalize(bra.n_sites() - 1)?;
    for (r, row) in rows.iter().enumerate().rev() {
        bra = row_gradients(c, row, theta, lifted, &fwd[r], bra, norm, ctx, &mut grad)?;
    }
    Ok((cost, grad))
}

/// Process one row: returns the bra state with the row's adjoint applied, and
/// accumulates parameter gradients.
#[allow(clippy::too_many_arguments)]
fn row_gradients(
    c: &Circuit,
    row: &[BlockSpec],
    theta: &[f64],
    lifted: bool,
    row_input: &Mps,
    row_output_bra: Mps,
    norm: f64,
    ctx: &CostContext<'_>,
    grad: &mut [f64],
) -> Result<Mps> {
    let kblocks = row.len();
    let n = c.n_sites();
    let mats: Vec<BlockMatrices> = row
        .iter()
        .map(|b| block_matrices(c, b, theta, lifted, true))
        .collect();

    // Forward partials through the row (f[b] = state before block b, with
    // the orthogonality center parked at the block's first site).
    let mut f = Vec::with_capacity(kblocks + 1);
    let mut st = row_input.clone();
    let mut rep = ApplyReport::default();
    for (bi, b) in row.iter().enumerate() {
        st.move_center_to(b.lo)?;
        f.push(st.clone());
        apply_block_matrix(
            &mut st,
            b.lo,
            b.width,
            &mats[bi].total,
            ctx.max_bond,
            ctx.cutoff,
            &mut rep,
        )?;
    }
    f.push(st);

    // Backward partials g[b] = bra with adjoints of blocks > b applied, plus
    // the right environments R_b over sites > hi_b against the row input.
    let mut g: Vec<Option<Mps>> = vec![None; kblocks + 1];
    let mut renvs: Vec<DenseTensor> = vec![DenseTensor::scalar(C_ONE); kblocks];
    let mut bra = row_output_bra;
    let mut renv = crate::env::boundary2();
    let mut rpos = n; // sites >= rpos are folded into renv
    for bi in (0..kblocks).rev() {
        let b = &row[bi];
        let hi = b.lo + b.width as usize - 1;
        if bi + 1 < kblocks {
            // apply adjoint of block bi+1 first (descending order)
            let bnext = &row[bi + 1];
            let adj = mats[bi + 1]
                .total
                .conj()
                .permute(&[1, 0]);
            apply_block_matrix_backward(
                &mut bra,
                bnext.lo,
                bnext.width,
                &adj,
                ctx.max_bond,
                ctx.cutoff,
                &mut rep,
            )?;
        } else {
            bra.move_center_to(hi)?;
        }
        bra.move_center_to(hi)?;
        // extend the right environment down to hi + 1
        while rpos > hi + 1 {
            rpos -= 1;
            renv = crate::env::overlap_push_right(&renv, bra.tensor(rpos), row_input_tensor(&f, row, rpos))?;
        }
        renvs[bi] = renv.clone();
        g[bi] = Some(bra.clone());
    }
    // finish the bra: adjoint of block 0
    {
        let b0 = &row[0];
        let adj = mats[0].total.conj().permute(&[1, 0]);
        apply_block_matrix_backward(
            &mut bra,
            b0.lo,
            b0.width,
            &adj,
            ctx.max_bond,
            ctx.cutoff,
            &mut rep,
        )?;
    }

    // Left-to-right environment sweep computing each block environment.
    let mut lenv = crate::env::boundary2();
    let mut lpos = 0usize; // sites < lpos folded into lenv
    for (bi, b) in row.iter().enumerate() {
        let hi = b.lo + b.width as usize - 1;
        let gb = g[bi].as_ref().expect("backward partial");
        while lpos < b.lo {
            lenv = crate::env::overlap_push_left(&lenv, gb.tensor(lpos), f[bi].tensor(lpos))?;
            lpos += 1;
        }
        // block environment with open legs
        let env = if b.width == 1 {
            // L (by,bx); bra site (by, o, by'); ket site (bx, i, bx'); R
            let t = contract(&lenv, &gb.tensor(b.lo).conj(), &[(0, 0)])?; // (bx, o, by')
            let t = contract(&t, f[bi].tensor(b.lo), &[(0, 0)])?; // (o, by', i, bx')
            contract(&t, &renvs[bi], &[(1, 0), (3, 1)])? // (o, i)
        } else {
            let ya = gb.tensor(b.lo).conj();
            let yb = gb.tensor(hi).conj();
            let xa = f[bi].tensor(b.lo);
            let xb = f[bi].tensor(hi);
            let t = contract(&lenv, &ya, &[(0, 0)])?; // (bx, o1, p1)
            let t = contract(&t, &yb, &[(2, 0)])?; // (bx, o1, o2, p2)
            let t = contract(&t, xa, &[(0, 0)])?; // (o1, o2, p2, i1, q1)
            let t = contract(&t, xb, &[(4, 0)])?; // (o1, o2, p2, i1, i2, q2)
            contract(&t, &renvs[bi], &[(2, 0), (5, 1)])? // (o1, o2, i1, i2)
        };
        let d = env.shape()[0];
        let dim = if b.width == 1 { d } else { d * d };
        let env_mat = if b.width == 1 {
            env
        } else {
            env.reshape(&[dim, dim])?
        };
        for (slot, db) in &mats[bi].derivs {
            // dC/dtheta = -Re sum_{o,i} E[o,i] dB[o,i] / norm
            let mut acc = C_ZERO;
            for (e, m) in env_mat.data().iter().zip(db.data()) {
                acc += e * m;
            }
            grad[*slot] += -acc.re / norm;
        }
    }
    Ok(bra)
}

fn row_input_tensor<'a>(f: &'a [Mps], row: &[BlockSpec], site: usize) -> &'a DenseTensor {
    // Sites right of every block keep the row input's tensors; f[0] is the
    // row input parked at the first block.
    let _ = row;
    f[0].tensor(site)
}

/// Dense unitary of the whole circuit (small N); independent reference for
/// the MPS path.
pub fn dense_unitary(c: &Circuit, theta: &[f64]) -> Result<DenseTensor> {
    let n = c.n_sites();
    if n > 10 {
        return Err(Error::ResourceCap {
            what: "dense circuit sites",
            got: n,
            cap: 10,
        });
    }
    let dim = 1usize << n;
    let mut total = DenseTensor::identity(dim);
    for g in &c.gates {
        let angle = match g.param {
            ParamRef::Slot(s) => theta[s],
            ParamRef::Fixed(f) => f,
        };
        let raw = match g.kind {
            GateKind::Rx => rx_matrix(angle),
            GateKind::Rz => rz_matrix(angle),
            GateKind::Uzz => uzz_matrix(angle),
            GateKind::Cnot => cnot_matrix(g.sites[0] < g.sites[1]),
        };
        let lo = *g.sites.iter().min().unwrap();
        let gate_sites = if g.kind == GateKind::Rx || g.kind == GateKind::Rz {
            1
        } else {
            2
        };
        let left = DenseTensor::identity(1 << lo);
        let right = DenseTensor::identity(1 << (n - lo - gate_sites));
        let embedded = kron(&kron(&left, &raw), &right);
        total = contract(&embedded, &total, &[(1, 0)])?;
    }
    Ok(total)
}
