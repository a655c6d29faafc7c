//! C ABI over the core library: opaque handles, dense row-major buffers
//! split into real/imag parts, and integer status codes.
//!
//! Conventions: every fallible call returns a `QmStatus`; on failure the
//! thread-local message retrieved by `qm_last_error_message` explains what
//! went wrong. Matrix buffers are row-major with caller-owned storage;
//! superoperator buffers have `dim^2 * dim^2` entries.

use std::cell::RefCell;
use std::os::raw::{c_char, c_int};

use num_complex::Complex64 as C64;
use qmarkov::davies::{build_davies, cpt_report, DaviesGenerator};
use qmarkov::dynamics::Propagator;
use qmarkov::equilibrium::gibbs;
use qmarkov::linalg::{unvectorize, vectorize, CMat};
use qmarkov::model::{sigma_x, sigma_z, BathSpec, SystemSpec};
use qmarkov::resonance::{bohr_decompose, level_shift, resonance_energies, BOHR_TOL};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum QmStatus {
    /// Success.
    QmOk = 0,
    /// A required pointer argument was null.
    QmNullPointer = 1,
    /// Invalid argument or configuration.
    QmInvalid = 2,
    /// Numerical failure inside the library.
    QmNumeric = 3,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &qmarkov::Error) -> QmStatus {
    match err {
        qmarkov::Error::Config(_) | qmarkov::Error::Domain(_) => QmStatus::QmInvalid,
        _ => QmStatus::QmNumeric,
    }
}

/// Copy the last error message into `buf` (NUL-terminated, truncated to
/// `len` bytes). Returns the untruncated length.
#[no_mangle]
pub unsafe extern "C" fn qm_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Opaque N-level system handle.
pub struct QmSystem {
    inner: SystemSpec,
}

/// Opaque bath handle.
pub struct QmBath {
    inner: BathSpec,
}

/// Opaque generator handle holding the Davies construction at one coupling.
pub struct QmGenerator {
    dav: DaviesGenerator,
    beta: f64,
}

unsafe fn slice_mat(n: usize, re: *const f64, im: *const f64) -> Option<CMat> {
    if re.is_null() || im.is_null() {
        return None;
    }
    let re = std::slice::from_raw_parts(re, n * n);
    let im = std::slice::from_raw_parts(im, n * n);
    Some(CMat::from_fn(n, n, |i, j| {
        C64::new(re[i * n + j], im[i * n + j])
    }))
}

unsafe fn write_mat(m: &CMat, re: *mut f64, im: *mut f64) {
    let (rows, cols) = (m.nrows(), m.ncols());
    let re = std::slice::from_raw_parts_mut(re, rows * cols);
    let im = std::slice::from_raw_parts_mut(im, rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            re[i * cols + j] = m[(i, j)].re;
            im[i * cols + j] = m[(i, j)].im;
        }
    }
}

/// Build a system from dense hermitian matrices (row-major, length dim*dim).
/// Returns null on failure.
#[no_mangle]
pub unsafe extern "C" fn qm_system_new(
    dim: usize,
    h_re: *const f64,
    h_im: *const f64,
    g_re: *const f64,
    g_im: *const f64,
) -> *mut QmSystem {
    let (Some(h), Some(g)) = (slice_mat(dim, h_re, h_im), slice_mat(dim, g_re, g_im)) else {
        set_error("null matrix buffer".into());
        return std::ptr::null_mut();
    };
    match SystemSpec::new(h, g) {
        Ok(inner) => Box::into_raw(Box::new(QmSystem { inner })),
        Err(e) => {
            set_error(e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Two-level system with splitting `delta`; `coupling`: 0 = sigma_x,
/// 1 = sigma_z.
#[no_mangle]
pub extern "C" fn qm_system_new_qubit(delta: f64, coupling: c_int) -> *mut QmSystem {
    let g = match coupling {
        0 => sigma_x(),
        1 => sigma_z(),
        _ => {
            set_error(format!("unknown coupling code {coupling}"));
            return std::ptr::null_mut();
        }
    };
    match SystemSpec::qubit(delta, g) {
        Ok(inner) => Box::into_raw(Box::new(QmSystem { inner })),
        Err(e) => {
            set_error(e.to_string());
            std::ptr::null_mut()
        }
    }
}

#[no_mangle]
pub unsafe extern "C" fn qm_system_free(sys: *mut QmSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

#[no_mangle]
pub unsafe extern "C" fn qm_system_dim(sys: *const QmSystem) -> c_int {
    if sys.is_null() {
        return -1;
    }
    (*sys).inner.dim() as c_int
}

/// Analytic form-factor bath: J(w) = (pi/2) c1 w^{1+2n} e^{-2 w^m}.
#[no_mangle]
pub extern "C" fn qm_bath_new_analytic(beta: f64, n: u32, m: u32, c1: f64) -> *mut QmBath {
    match BathSpec::new_analytic(beta, n, m, c1) {
        Ok(inner) => Box::into_raw(Box::new(QmBath { inner })),
        Err(e) => {
            set_error(e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Tabulated spectral density on an ascending grid starting at (0, 0).
#[no_mangle]
pub unsafe extern "C" fn qm_bath_new_tabulated(
    beta: f64,
    omegas: *const f64,
    j: *const f64,
    len: usize,
) -> *mut QmBath {
    if omegas.is_null() || j.is_null() {
        set_error("null sample buffer".into());
        return std::ptr::null_mut();
    }
    let omegas = std::slice::from_raw_parts(omegas, len).to_vec();
    let j = std::slice::from_raw_parts(j, len).to_vec();
    match BathSpec::new_tabulated(beta, omegas, j) {
        Ok(inner) => Box::into_raw(Box::new(QmBath { inner })),
        Err(e) => {
            set_error(e.to_string());
            std::ptr::null_mut()
        }
    }
}

#[no_mangle]
pub unsafe extern "C" fn qm_bath_free(bath: *mut QmBath) {
    if !bath.is_null() {
        drop(Box::from_raw(bath));
    }
}

/// Spectral density J(omega).
#[no_mangle]
pub unsafe extern "C" fn qm_bath_spectral_density(
    bath: *const QmBath,
    omega: f64,
    out: *mut f64,
) -> QmStatus {
    if bath.is_null() || out.is_null() {
        return QmStatus::QmNullPointer;
    }
    match (*bath).inner.spectral_density(omega) {
        Ok(v) => {
            *out = v;
            QmStatus::QmOk
        }
        Err(e) => {
            set_error(e.to_string());
            status_of(&e)
        }
    }
}

/// Thermally weighted rate function h_hat(u).
#[no_mangle]
pub unsafe extern "C" fn qm_bath_h_hat(bath: *const QmBath, u: f64, out: *mut f64) -> QmStatus {
    if bath.is_null() || out.is_null() {
        return QmStatus::QmNullPointer;
    }
    *out = (*bath).inner.h_hat(u);
    QmStatus::QmOk
}

/// Full complex two-point function C(t).
#[no_mangle]
pub unsafe extern "C" fn qm_bath_correlation(
    bath: *const QmBath,
    t: f64,
    out_re: *mut f64,
    out_im: *mut f64,
) -> QmStatus {
    if bath.is_null() || out_re.is_null() || out_im.is_null() {
        return QmStatus::QmNullPointer;
    }
    match (*bath).inner.correlation_function(t) {
        Ok(c) => {
            *out_re = c.re;
            *out_im = c.im;
            QmStatus::QmOk
        }
        Err(e) => {
            set_error(e.to_string());
            status_of(&e)
        }
    }
}

/// Build the weak-coupling generator for (system, bath, lambda).
#[no_mangle]
pub unsafe extern "C" fn qm_generator_build(
    sys: *const QmSystem,
    bath: *const QmBath,
    lambda: f64,
) -> *mut QmGenerator {
    if sys.is_null() || bath.is_null() {
        set_error("null handle".into());
        return std::ptr::null_mut();
    }
    match build_davies(&(*sys).inner, &(*bath).inner, lambda) {
        Ok(dav) => Box::into_raw(Box::new(QmGenerator {
            dav,
            beta: (*bath).inner.beta(),
        })),
        Err(e) => {
            set_error(e.to_string());
            std::ptr::null_mut()
        }
    }
}

#[no_mangle]
pub unsafe extern "C" fn qm_generator_free(gen: *mut QmGenerator) {
    if !gen.is_null() {
        drop(Box::from_raw(gen));
    }
}

/// Which superoperator matrix to export.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum QmMatrixKind {
    /// The dissipative generator K.
    QmMatrixK = 0,
    /// The free part -i[H_S, .].
    QmMatrixLiouvilleS = 1,
    /// The total generator L_S + lambda^2 K.
    QmMatrixTotal = 2,
}

/// Copy a dim^2 x dim^2 superoperator matrix (row-major) into the buffers.
#[no_mangle]
pub unsafe extern "C" fn qm_generator_matrix(
    gen: *const QmGenerator,
    kind: QmMatrixKind,
    out_re: *mut f64,
    out_im: *mut f64,
) -> QmStatus {
    if gen.is_null() || out_re.is_null() || out_im.is_null() {
        return QmStatus::QmNullPointer;
    }
    let dav = &(*gen).dav;
    let m = match kind {
        QmMatrixKind::QmMatrixK => dav.k_super().matrix().clone(),
        QmMatrixKind::QmMatrixLiouvilleS => dav.liouville_s().matrix().clone(),
        QmMatrixKind::QmMatrixTotal => dav.generator().matrix().clone(),
    };
    write_mat(&m, out_re, out_im);
    QmStatus::QmOk
}

/// Copy the Lamb-shift Hamiltonian (dim x dim).
#[no_mangle]
pub unsafe extern "C" fn qm_generator_lamb_shift(
    gen: *const QmGenerator,
    out_re: *mut f64,
    out_im: *mut f64,
) -> QmStatus {
    if gen.is_null() || out_re.is_null() || out_im.is_null() {
        return QmStatus::QmNullPointer;
    }
    write_mat((*gen).dav.lamb_shift(), out_re, out_im);
    QmStatus::QmOk
}

#[no_mangle]
pub unsafe extern "C" fn qm_generator_jump_count(gen: *const QmGenerator) -> c_int {
    if gen.is_null() {
        return -1;
    }
    (*gen).dav.jumps().len() as c_int
}

/// Copy jump channel `idx`: its rate and its dim x dim operator.
#[no_mangle]
pub unsafe extern "C" fn qm_generator_jump(
    gen: *const QmGenerator,
    idx: usize,
    out_rate: *mut f64,
    out_re: *mut f64,
    out_im: *mut f64,
) -> QmStatus {
    if gen.is_null() || out_rate.is_null() || out_re.is_null() || out_im.is_null() {
        return QmStatus::QmNullPointer;
    }
    let jumps = (*gen).dav.jumps();
    let Some(jump) = jumps.get(idx) else {
        set_error(format!("jump index {idx} out of range {}", jumps.len()));
        return QmStatus::QmInvalid;
    };
    *out_rate = jump.rate;
    write_mat(&jump.operator, out_re, out_im);
    QmStatus::QmOk
}

/// Numerical CPT diagnostics of exp(t G).
#[no_mangle]
pub unsafe extern "C" fn qm_generator_cpt_report(
    gen: *const QmGenerator,
    t: f64,
    seed: u64,
    out_min_choi: *mut f64,
    out_trace_dev: *mut f64,
    out_herm_dev: *mut f64,
) -> QmStatus {
    if gen.is_null() || out_min_choi.is_null() || out_trace_dev.is_null() || out_herm_dev.is_null()
    {
        return QmStatus::QmNullPointer;
    }
    let prop = match Propagator::new(&(*gen).dav.generator()) {
        Ok(p) => p,
        Err(e) => {
            set_error(e.to_string());
            return status_of(&e);
        }
    };
    let rep = cpt_report(&prop.exp_t(t), seed);
    *out_min_choi = rep.min_choi_eig;
    *out_trace_dev = rep.trace_dev;
    *out_herm_dev = rep.herm_dev;
    QmStatus::QmOk
}

/// Propagate a density matrix on a time grid. `out_re`/`out_im` hold
/// n_times stacked dim x dim matrices (row-major).
#[no_mangle]
pub unsafe extern "C" fn qm_generator_propagate(
    gen: *const QmGenerator,
    rho_re: *const f64,
    rho_im: *const f64,
    times: *const f64,
    n_times: usize,
    out_re: *mut f64,
    out_im: *mut f64,
) -> QmStatus {
    if gen.is_null() || times.is_null() || out_re.is_null() || out_im.is_null() {
        return QmStatus::QmNullPointer;
    }
    let dav = &(*gen).dav;
    let n = dav.sys().dim();
    let Some(rho0) = slice_mat(n, rho_re, rho_im) else {
        return QmStatus::QmNullPointer;
    };
    if let Err(e) = qmarkov::dynamics::validate_density(&rho0) {
        set_error(e.to_string());
        return status_of(&e);
    }
    let times = std::slice::from_raw_parts(times, n_times);
    let prop = match Propagator::new(&dav.generator()) {
        Ok(p) => p,
        Err(e) => {
            set_error(e.to_string());
            return status_of(&e);
        }
    };
    let v0 = vectorize(&rho0);
    let out_re = std::slice::from_raw_parts_mut(out_re, n_times * n * n);
    let out_im = std::slice::from_raw_parts_mut(out_im, n_times * n * n);
    for (ti, &t) in times.iter().enumerate() {
        let state = unvectorize(&prop.apply_exp_t(t, &v0));
        for i in 0..n {
            for j in 0..n {
                out_re[ti * n * n + i * n + j] = state[(i, j)].re;
                out_im[ti * n * n + i * n + j] = state[(i, j)].im;
            }
        }
    }
    QmStatus::QmOk
}

/// Stationary state of the bare system at the bath temperature.
#[no_mangle]
pub unsafe extern "C" fn qm_generator_gibbs_state(
    gen: *const QmGenerator,
    out_re: *mut f64,
    out_im: *mut f64,
) -> QmStatus {
    if gen.is_null() || out_re.is_null() || out_im.is_null() {
        return QmStatus::QmNullPointer;
    }
    match gibbs((*gen).dav.sys().h_sys(), (*gen).beta) {
        Ok(g) => {
            write_mat(g.rho(), out_re, out_im);
            QmStatus::QmOk
        }
        Err(e) => {
            set_error(e.to_string());
            status_of(&e)
        }
    }
}

/// Resonance spectrum: fills up to dim^2 entries of Bohr energies, s labels,
/// and second-order corrections, plus the decay-rate summary.
#[no_mangle]
pub unsafe extern "C" fn qm_resonances(
    sys: *const QmSystem,
    bath: *const QmBath,
    lambda: f64,
    out_e: *mut f64,
    out_s: *mut c_int,
    out_a_re: *mut f64,
    out_a_im: *mut f64,
    out_gamma_lambda: *mut f64,
    out_gamma_fgr: *mut f64,
    out_fgr_holds: *mut c_int,
) -> QmStatus {
    if sys.is_null()
        || bath.is_null()
        || out_e.is_null()
        || out_s.is_null()
        || out_a_re.is_null()
        || out_a_im.is_null()
        || out_gamma_lambda.is_null()
        || out_gamma_fgr.is_null()
        || out_fgr_holds.is_null()
    {
        return QmStatus::QmNullPointer;
    }
    let sys = &(*sys).inner;
    let bath = &(*bath).inner;
    let run = || -> qmarkov::Result<qmarkov::resonance::ResonanceData> {
        let dav = build_davies(sys, bath, lambda)?;
        let sectors = bohr_decompose(sys, BOHR_TOL)?;
        let ls = level_shift(&dav, &sectors)?;
        resonance_energies(&dav, &ls, lambda)
    };
    match run() {
        Ok(rd) => {
            let nn = sys.dim() * sys.dim();
            let out_e = std::slice::from_raw_parts_mut(out_e, nn);
            let out_s = std::slice::from_raw_parts_mut(out_s, nn);
            let out_a_re = std::slice::from_raw_parts_mut(out_a_re, nn);
            let out_a_im = std::slice::from_raw_parts_mut(out_a_im, nn);
            for (i, ent) in rd.entries.iter().enumerate() {
                out_e[i] = ent.e;
                out_s[i] = ent.s as c_int;
                out_a_re[i] = ent.a.re;
                out_a_im[i] = ent.a.im;
            }
            *out_gamma_lambda = rd.gamma_lambda;
            *out_gamma_fgr = rd.gamma_fgr;
            *out_fgr_holds = rd.fgr_holds as c_int;
            QmStatus::QmOk
        }
        Err(e) => {
            set_error(e.to_string());
            status_of(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qubit_generator_through_the_c_surface() {
        unsafe {
            let sys = qm_system_new_qubit(1.0, 0);
            assert!(!sys.is_null());
            assert_eq!(qm_system_dim(sys), 2);
            let bath = qm_bath_new_analytic(1.0, 0, 1, 1.0);
            assert!(!bath.is_null());
            let gen = qm_generator_build(sys, bath, 0.1);
            assert!(!gen.is_null());

            // h_hat values appear among the jump rates
            let mut h_down = 0.0;
            assert!(matches!(
                qm_bath_h_hat(bath, 1.0, &mut h_down),
                QmStatus::QmOk
            ));
            let count = qm_generator_jump_count(gen);
            assert_eq!(count, 3);
            let mut found = false;
            for idx in 0..count as usize {
                let mut rate = 0.0;
                let mut re = [0.0; 4];
                let mut im = [0.0; 4];
                let st = qm_generator_jump(gen, idx, &mut rate, re.as_mut_ptr(), im.as_mut_ptr());
                assert!(matches!(st, QmStatus::QmOk));
                if (rate - h_down).abs() < 1e-14 {
                    found = true;
                }
            }
            assert!(found, "downward rate not among jump channels");

            qm_generator_free(gen);
            qm_bath_free(bath);
            qm_system_free(sys);
        }
    }

    #[test]
    fn propagation_preserves_trace_through_the_c_surface() {
        unsafe {
            let sys = qm_system_new_qubit(1.0, 0);
            let bath = qm_bath_new_analytic(1.0, 0, 1, 1.0);
            let gen = qm_generator_build(sys, bath, 0.2);
            let rho_re = [0.0, 0.0, 0.0, 1.0];
            let rho_im = [0.0; 4];
            let times = [0.0, 2.0, 40.0];
            let mut out_re = [0.0; 12];
            let mut out_im = [0.0; 12];
            let st = qm_generator_propagate(
                gen,
                rho_re.as_ptr(),
                rho_im.as_ptr(),
                times.as_ptr(),
                3,
                out_re.as_mut_ptr(),
                out_im.as_mut_ptr(),
            );
            assert!(matches!(st, QmStatus::QmOk));
            for ti in 0..3 {
                let trace = out_re[ti * 4] + out_re[ti * 4 + 3];
                assert!((trace - 1.0).abs() < 1e-10, "trace {trace} at step {ti}");
            }
            // t = 0 returns the input
            assert!((out_re[3] - 1.0).abs() < 1e-12);
            qm_generator_free(gen);
            qm_bath_free(bath);
            qm_system_free(sys);
        }
    }

    #[test]
    fn resonances_match_direct_rate_computation() {
        unsafe {
            let sys = qm_system_new_qubit(1.0, 0);
            let bath = qm_bath_new_analytic(1.0, 0, 1, 1.0);
            let mut e = [0.0; 4];
            let mut s = [0; 4];
            let mut a_re = [0.0; 4];
            let mut a_im = [0.0; 4];
            let (mut gl, mut gf, mut holds) = (0.0, 0.0, 0);
            let st = qm_resonances(
                sys,
                bath,
                0.1,
                e.as_mut_ptr(),
                s.as_mut_ptr(),
                a_re.as_mut_ptr(),
                a_im.as_mut_ptr(),
                &mut gl,
                &mut gf,
                &mut holds,
            );
            assert!(matches!(st, QmStatus::QmOk));
            assert_eq!(holds, 1);
            let mut h_up = 0.0;
            let mut h_down = 0.0;
            qm_bath_h_hat(bath, 1.0, &mut h_down);
            qm_bath_h_hat(bath, -1.0, &mut h_up);
            let expect = (h_down + h_up) / 2.0;
            assert!((gf - expect).abs() < 1e-12, "{gf} vs {expect}");
            assert!((gl - 0.01 * gf).abs() < 1e-15);
            qm_bath_free(bath);
            qm_system_free(sys);
        }
    }

    #[test]
    fn errors_surface_with_messages() {
        unsafe {
            // non-hermitian input must fail with a named invariant
            let h_re = [0.0, 1.0, 0.0, 0.0];
            let h_im = [0.0; 4];
            let g_re = [0.0; 4];
            let g_im = [0.0; 4];
            let sys = qm_system_new(
                2,
                h_re.as_ptr(),
                h_im.as_ptr(),
                g_re.as_ptr(),
                g_im.as_ptr(),
            );
            assert!(sys.is_null());
            let mut buf = [0i8; 256];
            let len = qm_last_error_message(buf.as_mut_ptr(), 256);
            assert!(len > 0);
            let msg = std::ffi::CStr::from_ptr(buf.as_ptr()).to_string_lossy();
            assert!(msg.contains("hermitian"), "message was: {msg}");

            // null pointers are caught
            let st = qm_bath_h_hat(std::ptr::null(), 0.0, std::ptr::null_mut());
            assert!(matches!(st, QmStatus::QmNullPointer));
        }
    }
}
