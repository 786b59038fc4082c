//! C ABI over the cdqc tensor-network engine: opaque handles for states and
//! operators, status codes, and a thread-local last-error message.
//!
//! Ownership: every `*_new`-style constructor hands ownership to the caller,
//! who must release it with the matching `*_free`. Output parameters are
//! written only on `CDQC_STATUS_OK`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use cdqc_core::agp::{solve_variational_agp, AgpSolverConfig};
use cdqc_core::bench::config::ExperimentConfig;
use cdqc_core::bench::run_experiment;
use cdqc_core::dmrg::{ground_state, DmrgConfig};
use cdqc_core::error::Error;
use cdqc_core::mpo::{expval, ising_hamiltonian, IsingParams, Mpo};
use cdqc_core::mps::Mps;
use cdqc_core::pauli;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum CdqcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Validation = 3,
    ResourceCap = 4,
    Solver = 5,
    Io = 6,
    Unknown = 7,
}

fn set_error(msg: &str) {
    let cleaned: String = msg.chars().filter(|c| *c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(cleaned).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> CdqcStatus {
    match err {
        Error::InvalidArgument(_) | Error::ShapeMismatch(_) | Error::ContractAxes { .. } => {
            CdqcStatus::InvalidArgument
        }
        Error::Validation(_) | Error::NotHermitian { .. } | Error::UndefinedMetric(_) => {
            CdqcStatus::Validation
        }
        Error::ResourceCap { .. } => CdqcStatus::ResourceCap,
        Error::SolverDiverged(_) | Error::OptimizerFailure(_) => CdqcStatus::Solver,
        Error::Io(_) | Error::Serde(_) => CdqcStatus::Io,
        Error::Stage { source, .. } => status_of(source),
    }
}

fn fail(err: Error) -> CdqcStatus {
    let code = status_of(&err);
    set_error(&err.to_string());
    code
}

/// Opaque matrix product operator handle.
pub struct CdqcMpo(Mpo);

/// Opaque matrix product state handle.
pub struct CdqcMps(Mps);

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cdqc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copy the last error message (NUL-terminated, possibly truncated) into
/// `buf`; returns the full message length in bytes.
#[no_mangle]
pub unsafe extern "C" fn cdqc_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            // always terminate
            *buf.add(n.saturating_sub(1)) = 0;
        }
        bytes.len()
    })
}

unsafe fn slice_arg<'a, T>(ptr_: *const T, len: usize) -> Option<&'a [T]> {
    if len == 0 {
        Some(&[])
    } else if ptr_.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(ptr_, len))
    }
}

/// Build the nearest-neighbour quantum Ising Hamiltonian MPO:
/// couplings `j` (length `n - 1`), transverse fields `g` and longitudinal
/// fields `h` (length `n`).
#[no_mangle]
pub unsafe extern "C" fn cdqc_ising_hamiltonian(
    n: usize,
    j: *const f64,
    g: *const f64,
    h: *const f64,
    out: *mut *mut CdqcMpo,
) -> CdqcStatus {
    if out.is_null() {
        set_error("output pointer is null");
        return CdqcStatus::NullPointer;
    }
    let (j, g, h) = match (
        slice_arg(j, n.saturating_sub(1)),
        slice_arg(g, n),
        slice_arg(h, n),
    ) {
        (Some(j), Some(g), Some(h)) => (j, g, h),
        _ => {
            set_error("parameter array pointer is null");
            return CdqcStatus::NullPointer;
        }
    };
    let params = match IsingParams::new(j.to_vec(), g.to_vec(), h.to_vec()) {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    match ising_hamiltonian(&params) {
        Ok(mpo) => {
            *out = Box::into_raw(Box::new(CdqcMpo(mpo)));
            CdqcStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Parse the one-term-per-line Pauli text format (`re im STRING`) into an
/// MPO compressed at `cutoff`.
#[no_mangle]
pub unsafe extern "C" fn cdqc_pauli_sum_to_mpo(
    text: *const c_char,
    cutoff: f64,
    out: *mut *mut CdqcMpo,
) -> CdqcStatus {
    if text.is_null() || out.is_null() {
        set_error("null pointer argument");
        return CdqcStatus::NullPointer;
    }
    let text = match CStr::from_ptr(text).to_str() {
        Ok(t) => t,
        Err(_) => {
            set_error("pauli text is not valid UTF-8");
            return CdqcStatus::InvalidArgument;
        }
    };
    let sum = match pauli::from_text(text) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    match Mpo::from_pauli_sum(&sum, cutoff) {
        Ok(mpo) => {
            *out = Box::into_raw(Box::new(CdqcMpo(mpo)));
            CdqcStatus::Ok
        }
        Err(e) => fail(e),
    }
}

#[no_mangle]
pub unsafe extern "C" fn cdqc_mpo_free(mpo: *mut CdqcMpo) {
    if !mpo.is_null() {
        drop(Box::from_raw(mpo));
    }
}

#[no_mangle]
pub unsafe extern "C" fn cdqc_mpo_n_sites(mpo: *const CdqcMpo) -> usize {
    if mpo.is_null() {
        return 0;
    }
    (*mpo).0.n_sites()
}

#[no_mangle]
pub unsafe extern "C" fn cdqc_mpo_max_bond(mpo: *const CdqcMpo) -> usize {
    if mpo.is_null() {
        return 0;
    }
    (*mpo).0.max_bond()
}

/// Save an MPO as a JSON manifest plus packed float64 payload.
#[no_mangle]
pub unsafe extern "C" fn cdqc_mpo_save(
    mpo: *const CdqcMpo,
    manifest_path: *const c_char,
) -> CdqcStatus {
    if mpo.is_null() || manifest_path.is_null() {
        set_error("null pointer argument");
        return CdqcStatus::NullPointer;
    }
    let path = match CStr::from_ptr(manifest_path).to_str() {
        Ok(p) => p,
        Err(_) => {
            set_error("path is not valid UTF-8");
            return CdqcStatus::InvalidArgument;
        }
    };
    match cdqc_core::tnio::save_mpo(Path::new(path), &(*mpo).0) {
        Ok(()) => CdqcStatus::Ok,
        Err(e) => fail(e),
    }
}

#[no_mangle]
pub unsafe extern "C" fn cdqc_mpo_load(
    manifest_path: *const c_char,
    out: *mut *mut CdqcMpo,
) -> CdqcStatus {
    if manifest_path.is_null() || out.is_null() {
        set_error("null pointer argument");
        return CdqcStatus::NullPointer;
    }
    let path = match CStr::from_ptr(manifest_path).to_str() {
        Ok(p) => p,
        Err(_) => {
            set_error("path is not valid UTF-8");
            return CdqcStatus::InvalidArgument;
        }
    };
    match cdqc_core::tnio::load_mpo(Path::new(path)) {
        Ok(m) => {
            *out = Box::into_raw(Box::new(CdqcMpo(m)));
            CdqcStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Computational basis state from one bit per site.
#[no_mangle]
pub unsafe extern "C" fn cdqc_basis_state(
    n: usize,
    bits: *const u8,
    out: *mut *mut CdqcMps,
) -> CdqcStatus {
    if out.is_null() {
        set_error("output pointer is null");
        return CdqcStatus::NullPointer;
    }
    let bits = match slice_arg(bits, n) {
        Some(b) => b,
        None => {
            set_error("bits pointer is null");
            return CdqcStatus::NullPointer;
        }
    };
    match Mps::basis_state(bits) {
        Ok(s) => {
            *out = Box::into_raw(Box::new(CdqcMps(s)));
            CdqcStatus::Ok
        }
        Err(e) => fail(e),
    }
}

#[no_mangle]
pub unsafe extern "C" fn cdqc_mps_free(mps: *mut CdqcMps) {
    if !mps.is_null() {
        drop(Box::from_raw(mps));
    }
}

#[no_mangle]
pub unsafe extern "C" fn cdqc_mps_n_sites(mps: *const CdqcMps) -> usize {
    if mps.is_null() {
        return 0;
    }
    (*mps).0.n_sites()
}

#[no_mangle]
pub unsafe extern "C" fn cdqc_mps_max_bond(mps: *const CdqcMps) -> usize {
    if mps.is_null() {
        return 0;
    }
    (*mps).0.max_bond()
}

/// DMRG ground state; writes the energy and hands back the state.
#[no_mangle]
pub unsafe extern "C" fn cdqc_ground_state(
    h: *const CdqcMpo,
    max_bond: usize,
    sweeps: usize,
    energy_out: *mut f64,
    state_out: *mut *mut CdqcMps,
) -> CdqcStatus {
    if h.is_null() || energy_out.is_null() || state_out.is_null() {
        set_error("null pointer argument");
        return CdqcStatus::NullPointer;
    }
    let cfg = DmrgConfig {
        max_bond: max_bond.max(1),
        sweeps: sweeps.max(1),
        ..Default::default()
    };
    match ground_state(&(*h).0, &cfg) {
        Ok(r) => {
            *energy_out = r.energy;
            *state_out = Box::into_raw(Box::new(CdqcMps(r.state)));
            CdqcStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// `<s|O|s>` split into real and imaginary parts.
#[no_mangle]
pub unsafe extern "C" fn cdqc_expectation(
    s: *const CdqcMps,
    o: *const CdqcMpo,
    re: *mut f64,
    im: *mut f64,
) -> CdqcStatus {
    if s.is_null() || o.is_null() || re.is_null() || im.is_null() {
        set_error("null pointer argument");
        return CdqcStatus::NullPointer;
    }
    match expval(&(*s).0, &(*o).0) {
        Ok(v) => {
            *re = v.re;
            *im = v.im;
            CdqcStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// `<a|b>` split into real and imaginary parts.
#[no_mangle]
pub unsafe extern "C" fn cdqc_overlap(
    a: *const CdqcMps,
    b: *const CdqcMps,
    re: *mut f64,
    im: *mut f64,
) -> CdqcStatus {
    if a.is_null() || b.is_null() || re.is_null() || im.is_null() {
        set_error("null pointer argument");
        return CdqcStatus::NullPointer;
    }
    match (*a).0.inner(&(*b).0) {
        Ok(v) => {
            *re = v.re;
            *im = v.im;
            CdqcStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Von Neumann entanglement entropy across the bond between `bond` and
/// `bond + 1`.
#[no_mangle]
pub unsafe extern "C" fn cdqc_entanglement_entropy(
    s: *const CdqcMps,
    bond: usize,
    out: *mut f64,
) -> CdqcStatus {
    if s.is_null() || out.is_null() {
        set_error("null pointer argument");
        return CdqcStatus::NullPointer;
    }
    match (*s).0.entanglement_entropy(bond) {
        Ok(v) => {
            *out = v;
            CdqcStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Variational MPO gauge potential for `[H, A] = -i dH`; returns the solved
/// operator and its quality metrics.
#[no_mangle]
pub unsafe extern "C" fn cdqc_solve_agp(
    h: *const CdqcMpo,
    dh: *const CdqcMpo,
    chi: usize,
    eta: f64,
    sweeps: usize,
    a_out: *mut *mut CdqcMpo,
    cost_out: *mut f64,
    error_out: *mut f64,
    defect_out: *mut f64,
) -> CdqcStatus {
    if h.is_null() || dh.is_null() || a_out.is_null() {
        set_error("null pointer argument");
        return CdqcStatus::NullPointer;
    }
    let mut cfg = AgpSolverConfig::new(chi, eta);
    if sweeps > 0 {
        cfg.sweeps = sweeps;
    }
    match solve_variational_agp(&(*h).0, &(*dh).0, &cfg) {
        Ok(sol) => {
            if !cost_out.is_null() {
                *cost_out = sol.normalized_cost;
            }
            if !error_out.is_null() {
                *error_out = sol.normalized_error;
            }
            if !defect_out.is_null() {
                *defect_out = sol.hermitian_defect;
            }
            *a_out = Box::into_raw(Box::new(CdqcMpo(sol.a_tilde)));
            CdqcStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Run one experiment from a TOML config file into `out_dir`.
#[no_mangle]
pub unsafe extern "C" fn cdqc_run_experiment(
    config_path: *const c_char,
    out_dir: *const c_char,
) -> CdqcStatus {
    if config_path.is_null() || out_dir.is_null() {
        set_error("null pointer argument");
        return CdqcStatus::NullPointer;
    }
    let (config_path, out_dir) = match (
        CStr::from_ptr(config_path).to_str(),
        CStr::from_ptr(out_dir).to_str(),
    ) {
        (Ok(c), Ok(o)) => (c, o),
        _ => {
            set_error("path is not valid UTF-8");
            return CdqcStatus::InvalidArgument;
        }
    };
    let cfg = match ExperimentConfig::from_toml_file(config_path) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    match run_experiment(&cfg, Path::new(out_dir)) {
        Ok(_) => CdqcStatus::Ok,
        Err(e) => fail(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_is_nul_terminated() {
        let v = cdqc_version();
        let s = unsafe { CStr::from_ptr(v) }.to_str().unwrap();
        assert!(!s.is_empty());
    }

    #[test]
    fn ising_ground_state_through_ffi() {
        unsafe {
            let n = 4usize;
            let j = vec![0.0; n - 1];
            let g = vec![-1.0; n];
            let h = vec![0.0; n];
            let mut mpo: *mut CdqcMpo = ptr::null_mut();
            let st = cdqc_ising_hamiltonian(n, j.as_ptr(), g.as_ptr(), h.as_ptr(), &mut mpo);
            assert!(st == CdqcStatus::Ok);
            assert_eq!(cdqc_mpo_n_sites(mpo), 4);
            let mut energy = 0.0;
            let mut state: *mut CdqcMps = ptr::null_mut();
            let st = cdqc_ground_state(mpo, 16, 10, &mut energy, &mut state);
            assert!(st == CdqcStatus::Ok);
            assert!((energy + 4.0).abs() < 1e-8, "energy {energy}");
            let mut re = 0.0;
            let mut im = 0.0;
            assert!(cdqc_expectation(state, mpo, &mut re, &mut im) == CdqcStatus::Ok);
            assert!((re - energy).abs() < 1e-8);
            cdqc_mps_free(state);
            cdqc_mpo_free(mpo);
        }
    }

    #[test]
    fn error_message_roundtrip() {
        unsafe {
            let mut mpo: *mut CdqcMpo = ptr::null_mut();
            // inconsistent lengths: n = 0
            let st = cdqc_ising_hamiltonian(0, ptr::null(), ptr::null(), ptr::null(), &mut mpo);
            assert!(st != CdqcStatus::Ok);
            let mut buf = vec![0i8; 256];
            let len = cdqc_last_error_message(buf.as_mut_ptr(), buf.len());
            assert!(len > 1);
            let msg = CStr::from_ptr(buf.as_ptr()).to_str().unwrap();
            assert!(!msg.is_empty());
        }
    }

    #[test]
    fn pauli_text_to_mpo_and_agp() {
        unsafe {
            // H = 0.5 X + 0.5 Z on one qubit, dH = Z - X.
            let h_text = CString::new("0.5 0.0 X\n0.5 0.0 Z\n").unwrap();
            let dh_text = CString::new("-1.0 0.0 X\n1.0 0.0 Z\n").unwrap();
            let mut h: *mut CdqcMpo = ptr::null_mut();
            let mut dh: *mut CdqcMpo = ptr::null_mut();
            assert!(cdqc_pauli_sum_to_mpo(h_text.as_ptr(), 1e-24, &mut h) == CdqcStatus::Ok);
            assert!(cdqc_pauli_sum_to_mpo(dh_text.as_ptr(), 1e-24, &mut dh) == CdqcStatus::Ok);
            let mut a: *mut CdqcMpo = ptr::null_mut();
            let (mut c, mut e, mut d) = (0.0, 0.0, 0.0);
            let st = cdqc_solve_agp(h, dh, 1, 1e-12, 8, &mut a, &mut c, &mut e, &mut d);
            assert!(st == CdqcStatus::Ok);
            assert!(e < 1e-8, "error metric {e}");
            assert_eq!(cdqc_mpo_n_sites(a), 1);
            cdqc_mpo_free(a);
            cdqc_mpo_free(dh);
            cdqc_mpo_free(h);
        }
    }

    #[test]
    fn save_load_roundtrip() {
        unsafe {
            let n = 3usize;
            let j = vec![1.0; n - 1];
            let g = vec![0.5; n];
            let h = vec![0.25; n];
            let mut mpo: *mut CdqcMpo = ptr::null_mut();
            assert!(
                cdqc_ising_hamiltonian(n, j.as_ptr(), g.as_ptr(), h.as_ptr(), &mut mpo)
                    == CdqcStatus::Ok
            );
            let dir = std::env::temp_dir().join("cdqc_ffi_io");
            std::fs::create_dir_all(&dir).unwrap();
            let path = CString::new(dir.join("h.json").to_str().unwrap()).unwrap();
            assert!(cdqc_mpo_save(mpo, path.as_ptr()) == CdqcStatus::Ok);
            let mut loaded: *mut CdqcMpo = ptr::null_mut();
            assert!(cdqc_mpo_load(path.as_ptr(), &mut loaded) == CdqcStatus::Ok);
            assert_eq!(cdqc_mpo_n_sites(loaded), n);
            assert_eq!(cdqc_mpo_max_bond(loaded), 3);
            cdqc_mpo_free(loaded);
            cdqc_mpo_free(mpo);
        }
    }
}
