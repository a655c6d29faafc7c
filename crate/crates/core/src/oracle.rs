//! Brute-force ground truth: an n-mode reservoir on truncated Fock space,
//! exact reduced dynamics tr_R e^{-itH} rho e^{itH} and exact reduced Gibbs
//! states tr_R e^{-beta H} / Z.
//!
//! Two engines sit behind the same interface. Small problems use a dense
//! eigendecomposition of the full Hamiltonian (deterministic; every sampled
//! time costs one phase rotation). Problems beyond the dense cap switch to
//! a matrix-free Chebyshev propagation over an enumerated set of thermal
//! Fock configurations; the enumeration threshold is driven by the same
//! tail-mass budget that controls the Fock truncation itself, so the
//! dropped weight never dominates the oracle's error floor.

use faer::{Mat, Side};

use crate::dynamics::{GeneratorTag, Trajectory};
use crate::equilibrium::{GibbsSource, GibbsState};
use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};
use crate::model::{gauss_legendre_16, BathSpec, SystemSpec};

/// Discretized bath: mode frequencies, couplings, Fock truncation.
#[derive(Debug, Clone)]
pub struct FiniteModeReservoir {
    pub omegas: Vec<f64>,
    /// g_k >= 0, fixed by g_k^2 = (1/pi) Int_bin J so the discrete free
    /// correlation converges to the continuum one.
    pub couplings: Vec<f64>,
    /// Max occupation per mode; local dimension is cutoff + 1.
    pub cutoff: usize,
    pub beta: f64,
}

/// Knobs of the oracle engines.
#[derive(Debug, Clone)]
pub struct OracleConfig {
    /// Full Hilbert dimensions up to this use the dense eigendecomposition.
    pub dense_dim_cap: usize,
    /// Hard cap for the matrix-free engine.
    pub matrix_free_dim_cap: usize,
    /// Maximum tolerated thermal tail mass lost to the Fock truncation.
    pub max_tail_mass: f64,
    /// Relative h_hat tail allowed beyond omega_max when discretizing.
    pub support_tail_tol: f64,
    /// Cap on enumerated thermal configurations.
    pub max_thermal_configs: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            dense_dim_cap: 4096,
            matrix_free_dim_cap: 1 << 18,
            max_tail_mass: 1e-6,
            support_tail_tol: 1e-10,
            max_thermal_configs: 65536,
        }
    }
}

/// Frequency axis cutoff covering the support of h_hat to the configured
/// relative tail.
pub fn auto_omega_max(bath: &BathSpec, support_tail_tol: f64) -> Result<f64> {
    let grid = bath.grid()?;
    let total: f64 = grid.integral();
    if total <= 0.0 {
        return Err(Error::Domain("bath carries no spectral weight".into()));
    }
    // walk down from the grid edge until the excluded mass crosses the tol
    let mut cut = grid.u_max;
    let step = grid.u_max / 4096.0;
    loop {
        let next = cut - step;
        if next <= step {
            break;
        }
        let mut tail = 0.0;
        for i in 0..grid.nodes.len() {
            if grid.nodes[i].abs() >= next {
                tail += grid.weights[i] * grid.h_vals[i];
            }
        }
        if tail / total > support_tail_tol {
            break;
        }
        cut = next;
    }
    Ok(cut)
}

/// Deterministic equal-width bin discretization of the bath on
/// (0, omega_max], with integral-preserving coupling weights.
pub fn discretize_bath(
    bath: &BathSpec,
    n_modes: usize,
    omega_max: f64,
    cutoff: usize,
    cfg: &OracleConfig,
) -> Result<FiniteModeReservoir> {
    if n_modes == 0 {
        return Err(Error::Domain("need at least one mode".into()));
    }
    if omega_max <= 0.0 {
        return Err(Error::Domain(format!("omega_max must be positive, got {omega_max}")));
    }
    // tail-mass precondition on the support coverage
    let grid = bath.grid()?;
    let total: f64 = grid.integral();
    if total > 0.0 {
        let mut tail = 0.0;
        for i in 0..grid.nodes.len() {
            if grid.nodes[i].abs() >= omega_max {
                tail += grid.weights[i] * grid.h_vals[i];
            }
        }
        if tail / total > cfg.support_tail_tol {
            return Err(Error::TailMass {
                mass: tail / total,
                threshold: cfg.support_tail_tol,
                suggested: cutoff,
            });
        }
    }
    let width = omega_max / n_modes as f64;
    let (gl_x, gl_w) = gauss_legendre_16();
    let mut omegas = Vec::with_capacity(n_modes);
    let mut couplings = Vec::with_capacity(n_modes);
    for k in 0..n_modes {
        let lo = k as f64 * width;
        let mid = lo + 0.5 * width;
        omegas.push(mid);
        // weight by the emission-side h_hat mass of the bin:
        //   g^2 (1 + mu(mid)) / 2 = (1/2pi) Int_bin h_hat
        // which reduces to g^2 = (1/pi) Int_bin J as bins refine but keeps
        // the thermally enhanced low-frequency mass right at coarse bins
        let mut integral = 0.0;
        let half = 0.5 * width;
        for q in 0..16 {
            let w = mid + half * gl_x[q];
            integral += half * gl_w[q] * bath.h_hat(w);
        }
        let mu_mid = 1.0 / ((bath.beta() * mid).exp() - 1.0);
        couplings.push((integral / (std::f64::consts::PI * (1.0 + mu_mid))).max(0.0).sqrt());
    }
    Ok(FiniteModeReservoir {
        omegas,
        couplings,
        cutoff,
        beta: bath.beta(),
    })
}

impl FiniteModeReservoir {
    pub fn n_modes(&self) -> usize {
        self.omegas.len()
    }

    pub fn local_dim(&self) -> usize {
        self.cutoff + 1
    }

    pub fn bath_dim(&self) -> usize {
        self.local_dim().pow(self.n_modes() as u32)
    }

    pub fn total_dim(&self, sys_dim: usize) -> usize {
        sys_dim * self.bath_dim()
    }

    /// Per-mode Bose occupations of the untruncated thermal state.
    pub fn occupation(&self, k: usize) -> f64 {
        1.0 / ((self.beta * self.omegas[k]).exp() - 1.0)
    }

    /// Thermal weight table per mode for the truncated, renormalized state.
    pub fn thermal_weights(&self) -> Vec<Vec<f64>> {
        self.omegas
            .iter()
            .map(|&w| {
                let x = (-self.beta * w).exp();
                let raw: Vec<f64> = (0..=self.cutoff).map(|j| x.powi(j as i32)).collect();
                let z: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / z).collect()
            })
            .collect()
    }

    /// Thermal mass living beyond the per-mode cutoff: the quantity the
    /// truncation throws away before renormalization.
    pub fn truncation_leak(&self) -> f64 {
        let mut kept = 1.0;
        for &w in &self.omegas {
            kept *= 1.0 - (-self.beta * w * (self.cutoff as f64 + 1.0)).exp();
        }
        1.0 - kept
    }

    /// Smallest cutoff whose leak stays below the threshold.
    pub fn suggest_cutoff(&self, threshold: f64) -> usize {
        let omega_min = self.omegas.iter().cloned().fold(f64::INFINITY, f64::min);
        let per_mode = threshold / self.n_modes() as f64;
        let d = (-(per_mode.ln()) / (self.beta * omega_min) - 1.0).ceil();
        d.max(1.0) as usize
    }

    fn check_leak(&self, cfg: &OracleConfig) -> Result<()> {
        let leak = self.truncation_leak();
        if leak > cfg.max_tail_mass {
            return Err(Error::TailMass {
                mass: leak,
                threshold: cfg.max_tail_mass,
                suggested: self.suggest_cutoff(cfg.max_tail_mass),
            });
        }
        Ok(())
    }

    /// Discrete two-point function
    /// sum_k (g_k^2/2) [(1+mu_k) e^{i w_k t} + mu_k e^{-i w_k t}];
    /// converges to the continuum correlation function as bins refine.
    pub fn discrete_correlation(&self, t: f64) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..self.n_modes() {
            let mu = self.occupation(k);
            let g2 = self.couplings[k] * self.couplings[k];
            let up = C64::from_polar(1.0, self.omegas[k] * t);
            acc += (up * (1.0 + mu) + up.conj() * mu) * (0.5 * g2);
        }
        acc
    }

    /// 2 pi over the smallest gap among the frequencies and their pairwise
    /// differences; phase alignment (recurrence) happens on this scale.
    pub fn recurrence_window(&self) -> f64 {
        let mut vals: Vec<f64> = self.omegas.clone();
        for i in 0..self.omegas.len() {
            for j in 0..i {
                vals.push((self.omegas[i] - self.omegas[j]).abs());
            }
        }
        let min_gap = vals
            .into_iter()
            .filter(|v| *v > 1e-300)
            .fold(f64::INFINITY, f64::min);
        2.0 * std::f64::consts::PI / min_gap
    }
}

// ---------------------------------------------------------------------------
// full-space Hamiltonian, matrix-free
// ---------------------------------------------------------------------------

/// H = H_S (x) 1 + 1 (x) sum_k w_k a†a + lambda G (x) phi(g) applied in
/// factored form. State layout: index = m * N + s with m the bath
/// configuration (mode-0 fastest) and s the system index.
pub struct FockHamiltonian {
    n: usize,
    bath_dim: usize,
    local_dim: usize,
    strides: Vec<usize>,
    bath_energy: Vec<f64>,
    h_sys: CMat,
    g_scaled: CMat,
    couplings: Vec<f64>,
    sqrt_table: Vec<f64>,
}

impl FockHamiltonian {
    pub fn new(sys: &SystemSpec, fm: &FiniteModeReservoir, lambda: f64) -> Self {
        let n = sys.dim();
        let modes = fm.n_modes();
        let local = fm.local_dim();
        let bath_dim = fm.bath_dim();
        let mut strides = Vec::with_capacity(modes);
        let mut s = 1usize;
        for _ in 0..modes {
            strides.push(s);
            s *= local;
        }
        let mut bath_energy = vec![0.0f64; bath_dim];
        for m in 0..bath_dim {
            let mut e = 0.0;
            let mut rem = m;
            for k in 0..modes {
                let occ = rem % local;
                rem /= local;
                e += occ as f64 * fm.omegas[k];
            }
            bath_energy[m] = e;
        }
        let sqrt_table: Vec<f64> = (0..=local).map(|j| (j as f64).sqrt()).collect();
        Self {
            n,
            bath_dim,
            local_dim: local,
            strides,
            bath_energy,
            h_sys: sys.h_sys().clone(),
            g_scaled: sys.coupling().scale(C64::new(lambda, 0.0)),
            couplings: fm.couplings.clone(),
            sqrt_table,
        }
    }

    pub fn dim(&self) -> usize {
        self.n * self.bath_dim
    }

    /// out = H v. `scratch` must have length dim.
    pub fn apply(&self, v: &[C64], out: &mut [C64], scratch: &mut [C64]) {
        let n = self.n;
        let local = self.local_dim;
        // free part: (H_S (x) 1 + 1 (x) H_R) v
        for m in 0..self.bath_dim {
            let base = m * n;
            let eb = self.bath_energy[m];
            for s in 0..n {
                let mut acc = C64::new(eb, 0.0) * v[base + s];
                for s2 in 0..n {
                    let h = self.h_sys[(s, s2)];
                    if h != C64::new(0.0, 0.0) {
                        acc += h * v[base + s2];
                    }
                }
                out[base + s] = acc;
            }
        }
        // u = (1 (x) phi) v with phi = sum_k g_k (a_k + a_k†)/sqrt(2)
        scratch.fill(C64::new(0.0, 0.0));
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        for k in 0..self.couplings.len() {
            let g = self.couplings[k] * inv_sqrt2;
            if g == 0.0 {
                continue;
            }
            let stride = self.strides[k];
            for m in 0..self.bath_dim {
                let occ = (m / stride) % local;
                // annihilation: |occ> -> sqrt(occ) |occ-1>, contributes to
                // target m - stride from source m
                if occ > 0 {
                    let amp = g * self.sqrt_table[occ];
                    let src = m * n;
                    let dst = (m - stride) * n;
                    for s in 0..n {
                        scratch[dst + s] += v[src + s] * amp;
                    }
                }
                // creation: |occ> -> sqrt(occ+1) |occ+1>
                if occ + 1 < local {
                    let amp = g * self.sqrt_table[occ + 1];
                    let src = m * n;
                    let dst = (m + stride) * n;
                    for s in 0..n {
                        scratch[dst + s] += v[src + s] * amp;
                    }
                }
            }
        }
        // out += (lambda G (x) 1) u
        for m in 0..self.bath_dim {
            let base = m * n;
            for s in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for s2 in 0..n {
                    let gmat = self.g_scaled[(s, s2)];
                    if gmat != C64::new(0.0, 0.0) {
                        acc += gmat * scratch[base + s2];
                    }
                }
                out[base + s] += acc;
            }
        }
    }

    /// Gershgorin-style spectral enclosure [a, b].
    pub fn spectral_bounds(&self) -> (f64, f64) {
        let e_max = self
            .bath_energy
            .iter()
            .cloned()
            .fold(0.0f64, f64::max);
        let mut hs_max: f64 = 0.0;
        let mut hs_min: f64 = 0.0;
        for s in 0..self.n {
            let mut row = 0.0;
            for s2 in 0..self.n {
                if s2 != s {
                    row += self.h_sys[(s, s2)].norm();
                }
            }
            hs_max = hs_max.max(self.h_sys[(s, s)].re + row);
            hs_min = hs_min.min(self.h_sys[(s, s)].re - row);
        }
        let g_norm: f64 = (0..self.n)
            .map(|s| (0..self.n).map(|s2| self.g_scaled[(s, s2)].norm()).sum::<f64>())
            .fold(0.0f64, f64::max);
        let phi_norm: f64 = self
            .couplings
            .iter()
            .map(|g| g * std::f64::consts::SQRT_2 * self.sqrt_table[self.local_dim - 1].max(1.0))
            .sum();
        let pad = g_norm * phi_norm + 1e-9;
        (hs_min - pad, e_max + hs_max + pad)
    }

    pub fn dense_matrix(&self) -> Mat<C64> {
        let dim = self.dim();
        let mut h = Mat::<C64>::zeros(dim, dim);
        let mut v = vec![C64::new(0.0, 0.0); dim];
        let mut col = vec![C64::new(0.0, 0.0); dim];
        let mut scratch = vec![C64::new(0.0, 0.0); dim];
        for j in 0..dim {
            v[j] = C64::new(1.0, 0.0);
            self.apply(&v, &mut col, &mut scratch);
            for i in 0..dim {
                h[(i, j)] = col[i];
            }
            v[j] = C64::new(0.0, 0.0);
        }
        h
    }
}

// ---------------------------------------------------------------------------
// thermal configuration enumeration
// ---------------------------------------------------------------------------

/// Bath configurations with their (renormalized, truncated) thermal weights,
/// enumerated in decreasing weight until the dropped mass is below target.
fn enumerate_thermal_configs(
    fm: &FiniteModeReservoir,
    target_drop: f64,
    cap: usize,
) -> Result<Vec<(usize, f64)>> {
    let weights = fm.thermal_weights();
    let modes = fm.n_modes();
    let local = fm.local_dim();
    let bath_dim = fm.bath_dim();
    if bath_dim <= 64 {
        // small spaces: take everything, exactly
        let mut out = Vec::with_capacity(bath_dim);
        for m in 0..bath_dim {
            let mut w = 1.0;
            let mut rem = m;
            for k in 0..modes {
                w *= weights[k][rem % local];
                rem /= local;
            }
            out.push((m, w));
        }
        return Ok(out);
    }
    let mut floor = target_drop * 1e-2;
    for _ in 0..8 {
        let mut out: Vec<(usize, f64)> = Vec::new();
        // DFS with pruning against the best possible completion (all zeros,
        // weight per mode = weights[k][0] which is maximal)
        let mut max_tail = vec![1.0f64; modes + 1];
        for k in (0..modes).rev() {
            max_tail[k] = max_tail[k + 1] * weights[k][0];
        }
        let mut stack: Vec<(usize, usize, f64)> = vec![(0, 0, 1.0)];
        // (mode index, bath index so far, weight so far)
        while let Some((k, m, w)) = stack.pop() {
            if k == modes {
                out.push((m, w));
                continue;
            }
            for j in 0..local {
                let w2 = w * weights[k][j];
                if w2 * max_tail[k + 1] >= floor {
                    stack.push((k + 1, m + j * fm.stride(k), w2));
                } else {
                    break; // weights decrease in j
                }
            }
            if out.len() > cap {
                break;
            }
        }
        let kept: f64 = out.iter().map(|(_, w)| w).sum();
        if 1.0 - kept <= target_drop && out.len() <= cap {
            out.sort_by_key(|(m, _)| *m);
            return Ok(out);
        }
        if out.len() > cap {
            return Err(Error::Numeric(format!(
                "thermal configuration enumeration exceeds cap {cap} before reaching \
                 dropped mass {target_drop:.1e}; raise the tail budget or the cap"
            )));
        }
        floor *= 0.1;
    }
    Err(Error::Numeric(
        "thermal configuration enumeration failed to reach its mass target".into(),
    ))
}

impl FiniteModeReservoir {
    fn stride(&self, k: usize) -> usize {
        self.local_dim().pow(k as u32)
    }
}

// ---------------------------------------------------------------------------
// Chebyshev propagation kernels
// ---------------------------------------------------------------------------

/// Regular Bessel J_0..J_kmax at x by Miller's downward recurrence.
fn bessel_j_sequence(x: f64, k_max: usize) -> Vec<f64> {
    if x.abs() < 1e-14 {
        let mut out = vec![0.0; k_max + 1];
        out[0] = 1.0;
        return out;
    }
    let start = k_max + 20 + (40.0 * (k_max as f64 + 10.0)).sqrt() as usize;
    let mut jp = 0.0f64; // J_{start+1}
    let mut jc = 1e-300f64; // J_{start}
    let mut out = vec![0.0; k_max + 1];
    let mut norm = 0.0f64; // J_0 + 2 sum J_{2m}
    for k in (0..=start).rev() {
        let jm = (2.0 * (k as f64 + 1.0) / x) * jc - jp;
        jp = jc;
        jc = jm;
        // jc now holds J_k
        if k <= k_max {
            out[k] = jc;
        }
        if k % 2 == 0 {
            norm += if k == 0 { jc } else { 2.0 * jc };
        }
        if jc.abs() > 1e250 {
            jp /= 1e250;
            jc /= 1e250;
            norm /= 1e250;
            for v in &mut out {
                *v /= 1e250;
            }
        }
    }
    for v in &mut out {
        *v /= norm;
    }
    out
}

/// e^{-s} I_0..I_kmax at s > 0 by downward recurrence with the
/// e^{s} = I_0 + 2 sum I_k normalization.
fn bessel_i_scaled_sequence(s: f64, k_max: usize) -> Vec<f64> {
    if s < 1e-14 {
        let mut out = vec![0.0; k_max + 1];
        out[0] = 1.0;
        return out;
    }
    let start = k_max + 20 + (40.0 * (k_max as f64 + 10.0)).sqrt() as usize;
    let mut ip = 0.0f64;
    let mut ic = 1e-300f64;
    let mut out = vec![0.0; k_max + 1];
    let mut norm = 0.0f64;
    for k in (0..=start).rev() {
        let im = ip + (2.0 * (k as f64 + 1.0) / s) * ic;
        ip = ic;
        ic = im;
        if k <= k_max {
            out[k] = ic;
        }
        norm += if k == 0 { ic } else { 2.0 * ic };
        if ic.abs() > 1e250 {
            ip /= 1e250;
            ic /= 1e250;
            norm /= 1e250;
            for v in &mut out {
                *v /= 1e250;
            }
        }
    }
    for v in &mut out {
        *v /= norm;
    }
    out
}

/// Workspace for Chebyshev propagation.
struct ChebyWork {
    t0: Vec<C64>,
    t1: Vec<C64>,
    t2: Vec<C64>,
    scratch: Vec<C64>,
    acc: Vec<C64>,
}

impl ChebyWork {
    fn new(dim: usize) -> Self {
        Self {
            t0: vec![C64::new(0.0, 0.0); dim],
            t1: vec![C64::new(0.0, 0.0); dim],
            t2: vec![C64::new(0.0, 0.0); dim],
            scratch: vec![C64::new(0.0, 0.0); dim],
            acc: vec![C64::new(0.0, 0.0); dim],
        }
    }
}

/// v <- e^{-i dt H} v by a Chebyshev expansion on the spectral enclosure.
fn chebyshev_step_real_time(
    h: &FockHamiltonian,
    bounds: (f64, f64),
    dt: f64,
    v: &mut Vec<C64>,
    work: &mut ChebyWork,
) {
    let (a, b) = bounds;
    let c = 0.5 * (b + a);
    let r = 0.5 * (b - a);
    let x = dt * r;
    let k_max = (x.abs() + 12.0 * (x.abs().powf(1.0 / 3.0) + 1.0) + 20.0) as usize;
    let j = bessel_j_sequence(x, k_max);

    // T_0 v = v, T_1 v = H~ v
    work.t0.copy_from_slice(v);
    apply_scaled(h, c, r, &work.t0, &mut work.t1, &mut work.scratch);
    let minus_i = C64::new(0.0, -1.0);
    // acc = J_0 T_0 + 2 sum (-i)^k J_k T_k
    for i in 0..v.len() {
        work.acc[i] = work.t0[i] * j[0] + work.t1[i] * (2.0 * j[1]) * minus_i;
    }
    let mut phase = minus_i;
    let mut idle = 0usize;
    for k in 2..=k_max {
        // T_k = 2 H~ T_{k-1} - T_{k-2}
        apply_scaled(h, c, r, &work.t1, &mut work.t2, &mut work.scratch);
        for i in 0..v.len() {
            work.t2[i] = work.t2[i] * 2.0 - work.t0[i];
        }
        std::mem::swap(&mut work.t0, &mut work.t1);
        std::mem::swap(&mut work.t1, &mut work.t2);
        phase *= minus_i;
        let coef = 2.0 * j[k];
        if coef.abs() > 1e-16 {
            for i in 0..v.len() {
                work.acc[i] += work.t1[i] * coef * phase;
            }
            idle = 0;
        } else if k as f64 > x.abs() {
            // coefficients decay super-exponentially past the turning point
            idle += 1;
            if idle >= 3 {
                break;
            }
        }
    }
    let global = (minus_i * c * dt).exp();
    for i in 0..v.len() {
        v[i] = work.acc[i] * global;
    }
}

/// v <- e^{-tau H} v (imaginary time) by the modified-Bessel expansion.
fn chebyshev_step_imag_time(
    h: &FockHamiltonian,
    bounds: (f64, f64),
    tau: f64,
    v: &mut Vec<C64>,
    work: &mut ChebyWork,
) {
    let (a, b) = bounds;
    let c = 0.5 * (b + a);
    let r = 0.5 * (b - a);
    let s = tau * r;
    let k_max = (s + 12.0 * (s.powf(1.0 / 3.0) + 1.0) + 20.0) as usize;
    let iv = bessel_i_scaled_sequence(s, k_max);

    work.t0.copy_from_slice(v);
    apply_scaled(h, c, r, &work.t0, &mut work.t1, &mut work.scratch);
    for i in 0..v.len() {
        work.acc[i] = work.t0[i] * iv[0] - work.t1[i] * (2.0 * iv[1]);
    }
    let mut sign = -1.0f64;
    let mut idle = 0usize;
    for k in 2..=k_max {
        apply_scaled(h, c, r, &work.t1, &mut work.t2, &mut work.scratch);
        for i in 0..v.len() {
            work.t2[i] = work.t2[i] * 2.0 - work.t0[i];
        }
        std::mem::swap(&mut work.t0, &mut work.t1);
        std::mem::swap(&mut work.t1, &mut work.t2);
        sign = -sign;
        let coef = 2.0 * iv[k] * sign;
        if coef.abs() > 1e-18 {
            for i in 0..v.len() {
                work.acc[i] += work.t1[i] * coef;
            }
            idle = 0;
        } else if k as f64 > s {
            idle += 1;
            if idle >= 3 {
                break;
            }
        }
    }
    // e^{-tau H} = e^{-tau a} [scaled series]
    let global = (-tau * a).exp();
    for i in 0..v.len() {
        v[i] = work.acc[i] * global;
    }
}

/// out = (H - c)/r applied to v.
fn apply_scaled(
    h: &FockHamiltonian,
    c: f64,
    r: f64,
    v: &[C64],
    out: &mut [C64],
    scratch: &mut [C64],
) {
    h.apply(v, out, scratch);
    let inv_r = 1.0 / r;
    for i in 0..v.len() {
        out[i] = (out[i] - v[i] * c) * inv_r;
    }
}

// ---------------------------------------------------------------------------
// public oracle operations
// ---------------------------------------------------------------------------

/// Exact reduced dynamics tr_R e^{-itH} (rho_s0 (x) rho_th) e^{itH} on the
/// supplied time grid.
pub fn exact_reduced_dynamics(
    sys: &SystemSpec,
    fm: &FiniteModeReservoir,
    lambda: f64,
    rho_s0: &CMat,
    times: &[f64],
    cfg: &OracleConfig,
) -> Result<Trajectory> {
    crate::dynamics::validate_density(rho_s0)?;
    fm.check_leak(cfg)?;
    let n = sys.dim();
    let dim = fm.total_dim(n);
    if dim > cfg.matrix_free_dim_cap {
        return Err(Error::DimensionCap {
            dim,
            cap: cfg.matrix_free_dim_cap,
        });
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("time grid must be ascending".into()));
    }

    // spectral decompositions of the system input state
    let (q_weights, q_vecs) = {
        let (evals, vecs) = rho_s0.hermitize().eigh();
        let mut ws = Vec::new();
        let mut vs = Vec::new();
        for (j, &w) in evals.iter().enumerate() {
            if w > 1e-14 {
                ws.push(w);
                vs.push(vecs.col(j));
            }
        }
        (ws, vs)
    };

    let target_drop = (cfg.max_tail_mass * 0.1).max(1e-12);
    let configs = enumerate_thermal_configs(fm, target_drop, cfg.max_thermal_configs)?;
    let kept_mass: f64 = configs.iter().map(|(_, w)| w).sum();

    let h = FockHamiltonian::new(sys, fm, lambda);

    // task list: one propagation per (bath configuration, input eigenvector)
    let tasks: Vec<(usize, f64, usize)> = configs
        .iter()
        .flat_map(|&(m, w_th)| (0..q_weights.len()).map(move |qi| (m, w_th, qi)))
        .collect();
    let chunk = tasks.len().div_ceil(4 * rayon::current_num_threads()).max(1);

    let partials: Vec<Vec<CMat>> = if dim <= cfg.dense_dim_cap {
        // dense spectral engine
        let hmat = h.dense_matrix();
        let evd = hmat
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Numeric(format!("dense oracle eigendecomposition failed: {e:?}")))?;
        let evals: Vec<f64> = (0..dim).map(|i| evd.S()[i].re).collect();
        let w = evd.U();
        use rayon::prelude::*;
        tasks
            .par_chunks(chunk)
            .map(|block| {
                let mut reduced: Vec<CMat> = times.iter().map(|_| CMat::zeros(n, n)).collect();
                let mut coeff = vec![C64::new(0.0, 0.0); dim];
                let mut state = vec![C64::new(0.0, 0.0); dim];
                for &(m_idx, w_th, qi) in block {
                    let weight = w_th * q_weights[qi] / kept_mass;
                    let q_v = &q_vecs[qi];
                    for e in 0..dim {
                        let mut acc = C64::new(0.0, 0.0);
                        for s in 0..n {
                            acc += w[(m_idx * n + s, e)].conj() * q_v[s];
                        }
                        coeff[e] = acc;
                    }
                    for (ti, &t) in times.iter().enumerate() {
                        for x in state.iter_mut() {
                            *x = C64::new(0.0, 0.0);
                        }
                        for e in 0..dim {
                            let ce = coeff[e] * C64::from_polar(1.0, -evals[e] * t);
                            if ce.norm_sqr() < 1e-64 {
                                continue;
                            }
                            for i in 0..dim {
                                state[i] += w[(i, e)] * ce;
                            }
                        }
                        accumulate_reduced(&mut reduced[ti], &state, n, weight);
                    }
                }
                reduced
            })
            .collect()
    } else {
        // matrix-free Chebyshev engine
        let bounds = h.spectral_bounds();
        use rayon::prelude::*;
        tasks
            .par_chunks(chunk)
            .map(|block| {
                let mut reduced: Vec<CMat> = times.iter().map(|_| CMat::zeros(n, n)).collect();
                let mut work = ChebyWork::new(dim);
                let mut psi = vec![C64::new(0.0, 0.0); dim];
                for &(m_idx, w_th, qi) in block {
                    let weight = w_th * q_weights[qi] / kept_mass;
                    psi.fill(C64::new(0.0, 0.0));
                    for s in 0..n {
                        psi[m_idx * n + s] = q_vecs[qi][s];
                    }
                    let mut t_prev = 0.0;
                    for (ti, &t) in times.iter().enumerate() {
                        let dt = t - t_prev;
                        if dt > 0.0 {
                            chebyshev_step_real_time(&h, bounds, dt, &mut psi, &mut work);
                        }
                        t_prev = t;
                        accumulate_reduced(&mut reduced[ti], &psi, n, weight);
                    }
                }
                reduced
            })
            .collect()
    };

    // ordered sequential reduction keeps results independent of scheduling
    let mut reduced: Vec<CMat> = times.iter().map(|_| CMat::zeros(n, n)).collect();
    for part in partials {
        for (ti, p) in part.into_iter().enumerate() {
            reduced[ti] = reduced[ti].add(&p);
        }
    }

    Ok(Trajectory {
        times: times.to_vec(),
        states: reduced,
        tag: GeneratorTag::Oracle,
    })
}

fn accumulate_reduced(target: &mut CMat, psi: &[C64], n: usize, weight: f64) {
    let bath_dim = psi.len() / n;
    for m in 0..bath_dim {
        let base = m * n;
        for s in 0..n {
            let vs = psi[base + s];
            if vs.norm_sqr() < 1e-64 {
                continue;
            }
            for s2 in 0..n {
                target[(s, s2)] += vs * psi[base + s2].conj() * weight;
            }
        }
    }
}

/// Exact reduced Gibbs state tr_R e^{-beta H} / Z.
pub fn exact_reduced_gibbs(
    sys: &SystemSpec,
    fm: &FiniteModeReservoir,
    lambda: f64,
    cfg: &OracleConfig,
) -> Result<GibbsState> {
    fm.check_leak(cfg)?;
    let n = sys.dim();
    let dim = fm.total_dim(n);
    if dim > cfg.matrix_free_dim_cap {
        return Err(Error::DimensionCap {
            dim,
            cap: cfg.matrix_free_dim_cap,
        });
    }
    let h = FockHamiltonian::new(sys, fm, lambda);
    let beta = fm.beta;
    let mut reduced = CMat::zeros(n, n);

    if dim <= cfg.dense_dim_cap {
        let hmat = h.dense_matrix();
        let evd = hmat
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Numeric(format!("dense oracle eigendecomposition failed: {e:?}")))?;
        let e0 = (0..dim).map(|i| evd.S()[i].re).fold(f64::INFINITY, f64::min);
        let w = evd.U();
        // A = W e^{-beta (L - e0)/2}; reduced = sum_m A_m A_m†
        for m in 0..dim / n {
            let mut block = CMat::zeros(n, dim);
            for e in 0..dim {
                let damp = (-0.5 * beta * (evd.S()[e].re - e0)).exp();
                for s in 0..n {
                    block[(s, e)] = w[(m * n + s, e)] * damp;
                }
            }
            for s in 0..n {
                for s2 in 0..n {
                    let mut acc = C64::new(0.0, 0.0);
                    for e in 0..dim {
                        acc += block[(s, e)] * block[(s2, e)].conj();
                    }
                    reduced[(s, s2)] += acc;
                }
            }
        }
    } else {
        // matrix-free: reduced_{s s'} = sum_n <w_{s n}, w_{s' n}> with
        // w = e^{-beta H / 2} |s, n>, over configurations carrying
        // non-negligible unnormalized weight e^{-beta E_bath}
        let bounds = h.spectral_bounds();
        // enumeration by thermal weight of the decoupled bath (the coupling
        // shifts energies by O(lambda), harmless for the drop threshold)
        let target_drop = (cfg.max_tail_mass * 0.1).max(1e-12);
        let configs = enumerate_thermal_configs(fm, target_drop, cfg.max_thermal_configs)?;
        let chunk = configs.len().div_ceil(4 * rayon::current_num_threads()).max(1);
        use rayon::prelude::*;
        let partials: Vec<CMat> = configs
            .par_chunks(chunk)
            .map(|block| {
                let mut part = CMat::zeros(n, n);
                let mut work = ChebyWork::new(dim);
                for &(m_idx, _) in block {
                    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(n);
                    for s in 0..n {
                        let mut v = vec![C64::new(0.0, 0.0); dim];
                        v[m_idx * n + s] = C64::new(1.0, 0.0);
                        chebyshev_step_imag_time(&h, bounds, 0.5 * beta, &mut v, &mut work);
                        cols.push(v);
                    }
                    for s in 0..n {
                        for s2 in 0..n {
                            let mut acc = C64::new(0.0, 0.0);
                            for i in 0..dim {
                                acc += cols[s][i].conj() * cols[s2][i];
                            }
                            part[(s, s2)] += acc;
                        }
                    }
                }
                part
            })
            .collect();
        for p in partials {
            reduced = reduced.add(&p);
        }
    }

    let tr = reduced.trace().re;
    if !(tr > 0.0) {
        return Err(Error::Numeric("reduced Gibbs trace not positive".into()));
    }
    let rho = reduced.scale(C64::new(1.0 / tr, 0.0)).hermitize();
    GibbsState::new(rho, beta, GibbsSource::ExactReduced)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::gibbs;
    use crate::model::{sigma_x, BathSpec, SystemSpec};

    fn qubit() -> (SystemSpec, BathSpec) {
        (
            SystemSpec::qubit(1.0, sigma_x()).unwrap(),
            BathSpec::new_analytic(1.0, 0, 1, 1.0).unwrap(),
        )
    }

    fn lenient_cfg() -> OracleConfig {
        OracleConfig {
            max_tail_mass: 0.2,
            ..OracleConfig::default()
        }
    }

    #[test]
    fn discretize_single_mode_carries_full_weight() {
        let (_, bath) = qubit();
        let cfg = OracleConfig::default();
        let omega_max = auto_omega_max(&bath, cfg.support_tail_tol).unwrap();
        let fm = discretize_bath(&bath, 1, omega_max, 2, &cfg).unwrap();
        assert_eq!(fm.n_modes(), 1);
        assert!((fm.omegas[0] - omega_max / 2.0).abs() < 1e-12);
        // the single mode carries the full emission-mass weight:
        // g^2 (1 + mu(mid)) = (1/pi) Int_0^omega_max h_hat
        let mass = {
            let (gx, gw) = gauss_legendre_16();
            let mut acc = 0.0;
            let panels = 200;
            let w = omega_max / panels as f64;
            for p in 0..panels {
                for q in 0..16 {
                    let x = w * (p as f64 + 0.5 + 0.5 * gx[q]);
                    acc += 0.5 * w * gw[q] * bath.h_hat(x);
                }
            }
            acc / std::f64::consts::PI
        };
        let mu = 1.0 / ((fm.beta * fm.omegas[0]).exp() - 1.0);
        let g2 = fm.couplings[0] * fm.couplings[0];
        assert!((g2 * (1.0 + mu) - mass).abs() < 1e-9);
    }

    #[test]
    fn discretize_zero_bath_gives_zero_couplings() {
        let omegas: Vec<f64> = (0..16).map(|k| k as f64 * 0.25).collect();
        let j = vec![0.0; 16];
        let bath = BathSpec::new_tabulated(1.0, omegas, j).unwrap();
        let cfg = OracleConfig::default();
        let fm = discretize_bath(&bath, 4, 4.0, 2, &cfg).unwrap();
        assert!(fm.couplings.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn discretize_rejects_insufficient_omega_max() {
        let (_, bath) = qubit();
        let cfg = OracleConfig::default();
        let r = discretize_bath(&bath, 4, 2.0, 2, &cfg);
        assert!(matches!(r, Err(Error::TailMass { .. })));
    }

    #[test]
    fn discrete_correlation_converges_to_continuum() {
        let (_, bath) = qubit();
        let cfg = OracleConfig::default();
        let omega_max = auto_omega_max(&bath, cfg.support_tail_tol).unwrap();
        let c_exact = bath.correlation_function(0.0).unwrap();
        let mut errs = Vec::new();
        for &nm in &[4usize, 8, 16] {
            let fm = discretize_bath(&bath, nm, omega_max, 2, &cfg).unwrap();
            errs.push((fm.discrete_correlation(0.0) - c_exact).norm());
        }
        assert!(
            errs[1] <= errs[0] * 0.6 && errs[2] <= errs[1] * 0.6,
            "correlation errors not shrinking: {errs:?}"
        );
        // sup over the early window also shrinks monotonically
        let mut sups = Vec::new();
        for &nm in &[4usize, 8, 16] {
            let fm = discretize_bath(&bath, nm, omega_max, 2, &cfg).unwrap();
            let t_win = fm.recurrence_window() / 4.0;
            let mut sup: f64 = 0.0;
            for k in 0..=32 {
                let t = t_win * k as f64 / 32.0;
                let d = (fm.discrete_correlation(t) - bath.correlation_function(t).unwrap()).norm();
                sup = sup.max(d);
            }
            sups.push(sup);
        }
        assert!(
            sups[1] < sups[0] && sups[2] < sups[1],
            "sup errors not monotone: {sups:?}"
        );
    }

    #[test]
    fn recurrence_window_formulas() {
        let fm = FiniteModeReservoir {
            omegas: vec![0.5, 1.0, 1.5],
            couplings: vec![0.1, 0.1, 0.1],
            cutoff: 1,
            beta: 1.0,
        };
        assert!((fm.recurrence_window() - 2.0 * std::f64::consts::PI / 0.5).abs() < 1e-12);
        let single = FiniteModeReservoir {
            omegas: vec![0.7],
            couplings: vec![0.2],
            cutoff: 1,
            beta: 1.0,
        };
        assert!(
            (single.recurrence_window() - 2.0 * std::f64::consts::PI / 0.7).abs() < 1e-12
        );

        // doubling the mode count at fixed omega_max halves the spacing and
        // doubles the window
        let (_, bath) = qubit();
        let cfg = OracleConfig::default();
        let fm4 = discretize_bath(&bath, 4, 13.0, 1, &cfg).unwrap();
        let fm8 = discretize_bath(&bath, 8, 13.0, 1, &cfg).unwrap();
        assert!((fm8.recurrence_window() - 2.0 * fm4.recurrence_window()).abs() < 1e-9);
    }

    #[test]
    fn cutoff_leak_check_fires_with_suggestion() {
        let fm = FiniteModeReservoir {
            omegas: vec![0.4, 1.2],
            couplings: vec![0.1, 0.1],
            cutoff: 1,
            beta: 1.0,
        };
        let cfg = OracleConfig::default();
        match fm.check_leak(&cfg) {
            Err(Error::TailMass { suggested, .. }) => {
                assert!(suggested > 1);
            }
            other => panic!("expected tail-mass error, got {other:?}"),
        }
    }

    #[test]
    fn zero_coupling_dynamics_is_unitary_system_evolution() {
        let (sys, _) = qubit();
        let fm = FiniteModeReservoir {
            omegas: vec![0.9, 2.3],
            couplings: vec![0.3, 0.2],
            cutoff: 2,
            beta: 1.0,
        };
        let cfg = lenient_cfg();
        let mut rho0 = CMat::zeros(2, 2);
        rho0[(0, 0)] = C64::new(0.3, 0.0);
        rho0[(1, 1)] = C64::new(0.7, 0.0);
        rho0[(0, 1)] = C64::new(0.2, 0.1);
        rho0[(1, 0)] = C64::new(0.2, -0.1);
        let times = [0.0, 0.7, 1.9];
        let traj = exact_reduced_dynamics(&sys, &fm, 0.0, &rho0, &times, &cfg).unwrap();
        for (k, &t) in times.iter().enumerate() {
            // free qubit evolution rotates the coherence by e^{-i delta t}
            let expect01 = rho0[(0, 1)] * C64::from_polar(1.0, 1.0 * t);
            assert!((traj.states[k][(0, 1)] - expect01).norm() < 1e-10);
            assert!((traj.states[k][(0, 0)] - rho0[(0, 0)]).norm() < 1e-10);
        }
    }

    #[test]
    fn decoupled_oracle_matches_free_propagation_in_trace_distance() {
        let (sys, bath) = qubit();
        let cfg = lenient_cfg();
        let fm = discretize_bath(&bath, 3, 13.0, 2, &cfg).unwrap();
        let mut rng = crate::util::SplitMix64::new(19);
        let rho0 = crate::util::random_density(2, &mut rng);
        let times = [0.0, 0.6, 1.4, 2.2];
        let oracle = exact_reduced_dynamics(&sys, &fm, 0.0, &rho0, &times, &cfg).unwrap();
        let dav = crate::davies::build_davies(&sys, &bath, 0.0).unwrap();
        let free = crate::dynamics::propagate(dav.liouville_s(), &rho0, &times).unwrap();
        let rep = crate::dynamics::compare(&oracle, &free).unwrap();
        assert!(rep.sup <= 1e-10, "free-dynamics distance {}", rep.sup);
    }

    #[test]
    fn initial_time_returns_initial_state() {
        let (sys, bath) = qubit();
        let cfg = lenient_cfg();
        let fm = discretize_bath(&bath, 3, 13.0, 2, &cfg).unwrap();
        let rho0 = gibbs(sys.h_sys(), 1.0).unwrap();
        let traj =
            exact_reduced_dynamics(&sys, &fm, 0.2, rho0.rho(), &[0.0], &cfg).unwrap();
        assert!(traj.states[0].sub(rho0.rho()).max_abs() < 1e-12);
    }

    /// Independent oracle for the oracle: dense RK4 integration of the full
    /// Liouville-von Neumann equation.
    fn rk4_reference(
        sys: &SystemSpec,
        fm: &FiniteModeReservoir,
        lambda: f64,
        rho_s0: &CMat,
        t_end: f64,
    ) -> CMat {
        let n = sys.dim();
        let h = FockHamiltonian::new(sys, fm, lambda);
        let dim = h.dim();
        let hm = h.dense_matrix();
        let hc = CMat::from_fn(dim, dim, |i, j| hm[(i, j)]);
        // rho_full(0) = rho_s0 (x) thermal
        let weights = fm.thermal_weights();
        let mut rho = CMat::zeros(dim, dim);
        for m in 0..fm.bath_dim() {
            let mut w = 1.0;
            let mut rem = m;
            for k in 0..fm.n_modes() {
                w *= weights[k][rem % fm.local_dim()];
                rem /= fm.local_dim();
            }
            for s in 0..n {
                for s2 in 0..n {
                    rho[(m * n + s, m * n + s2)] = rho_s0[(s, s2)] * w;
                }
            }
        }
        let rhs = |r: &CMat| -> CMat {
            hc.matmul(r).sub(&r.matmul(&hc)).scale(C64::new(0.0, -1.0))
        };
        let steps = 2000usize;
        let dt = t_end / steps as f64;
        for _ in 0..steps {
            let k1 = rhs(&rho);
            let k2 = rhs(&rho.add(&k1.scale(C64::new(dt / 2.0, 0.0))));
            let k3 = rhs(&rho.add(&k2.scale(C64::new(dt / 2.0, 0.0))));
            let k4 = rhs(&rho.add(&k3.scale(C64::new(dt, 0.0))));
            let incr = k1
                .add(&k2.scale(C64::new(2.0, 0.0)))
                .add(&k3.scale(C64::new(2.0, 0.0)))
                .add(&k4)
                .scale(C64::new(dt / 6.0, 0.0));
            rho = rho.add(&incr);
        }
        // partial trace
        let mut red = CMat::zeros(n, n);
        for m in 0..fm.bath_dim() {
            for s in 0..n {
                for s2 in 0..n {
                    red[(s, s2)] += rho[(m * n + s, m * n + s2)];
                }
            }
        }
        red
    }

    #[test]
    fn oracle_matches_independent_ode_integration() {
        let (sys, _) = qubit();
        let fm = FiniteModeReservoir {
            omegas: vec![1.1],
            couplings: vec![0.6],
            cutoff: 2,
            beta: 1.0,
        };
        let cfg = lenient_cfg();
        let mut rho0 = CMat::zeros(2, 2);
        rho0[(1, 1)] = C64::new(1.0, 0.0);
        let t_end = 2.0;
        let traj =
            exact_reduced_dynamics(&sys, &fm, 0.15, &rho0, &[0.0, t_end], &cfg).unwrap();
        let reference = rk4_reference(&sys, &fm, 0.15, &rho0, t_end);
        let dev = traj.states[1].sub(&reference).max_abs();
        assert!(dev < 1e-8, "oracle vs RK4 deviation {dev}");
    }

    #[test]
    fn dense_and_matrix_free_engines_agree() {
        let (sys, bath) = qubit();
        let mut cfg = lenient_cfg();
        let fm = discretize_bath(&bath, 3, 13.0, 2, &cfg).unwrap();
        let mut rho0 = CMat::zeros(2, 2);
        rho0[(1, 1)] = C64::new(1.0, 0.0);
        let times = [0.0, 0.8, 1.7];
        let dense = exact_reduced_dynamics(&sys, &fm, 0.2, &rho0, &times, &cfg).unwrap();
        cfg.dense_dim_cap = 1; // force the Chebyshev engine
        let mfree = exact_reduced_dynamics(&sys, &fm, 0.2, &rho0, &times, &cfg).unwrap();
        for k in 0..times.len() {
            let dev = dense.states[k].sub(&mfree.states[k]).max_abs();
            assert!(dev < 1e-10, "engine mismatch {dev} at t={}", times[k]);
        }
    }

    #[test]
    fn trajectory_states_are_physical() {
        let (sys, bath) = qubit();
        let cfg = lenient_cfg();
        let fm = discretize_bath(&bath, 3, 13.0, 3, &cfg).unwrap();
        let rho0 = gibbs(sys.h_sys(), 1.0).unwrap();
        let t_rec = fm.recurrence_window();
        let times: Vec<f64> = (0..6).map(|k| t_rec / 2.0 * k as f64 / 5.0).collect();
        let traj =
            exact_reduced_dynamics(&sys, &fm, 0.1, rho0.rho(), &times, &cfg).unwrap();
        let (trace_dev, herm_dev, min_eig) = traj.state_quality();
        assert!(trace_dev < 1e-10, "trace dev {trace_dev}");
        assert!(herm_dev < 1e-10);
        assert!(min_eig > -1e-12, "min eig {min_eig}");
    }

    #[test]
    fn reduced_gibbs_zero_coupling_is_bare_gibbs() {
        let (sys, bath) = qubit();
        let cfg = lenient_cfg();
        let fm = discretize_bath(&bath, 3, 13.0, 2, &cfg).unwrap();
        let exact = exact_reduced_gibbs(&sys, &fm, 0.0, &cfg).unwrap();
        let bare = gibbs(sys.h_sys(), 1.0).unwrap();
        assert!(exact.rho().sub(bare.rho()).max_abs() < 1e-12);
    }

    #[test]
    fn reduced_gibbs_dense_and_matrix_free_agree() {
        let (sys, bath) = qubit();
        let mut cfg = lenient_cfg();
        let fm = discretize_bath(&bath, 2, 13.0, 2, &cfg).unwrap();
        let dense = exact_reduced_gibbs(&sys, &fm, 0.25, &cfg).unwrap();
        cfg.dense_dim_cap = 1;
        cfg.max_tail_mass = 0.2;
        let mfree = exact_reduced_gibbs(&sys, &fm, 0.25, &cfg).unwrap();
        let dev = dense.rho().sub(mfree.rho()).max_abs();
        assert!(dev < 1e-9, "gibbs engine mismatch {dev}");
    }

    #[test]
    fn full_state_purity_is_conserved_by_the_dense_engine() {
        // evolve a pure full state directly through the dense spectral route
        let (sys, _) = qubit();
        let fm = FiniteModeReservoir {
            omegas: vec![1.3],
            couplings: vec![0.5],
            cutoff: 2,
            beta: 1.0,
        };
        let h = FockHamiltonian::new(&sys, &fm, 0.3);
        let hm = h.dense_matrix();
        let evd = hm.self_adjoint_eigen(Side::Lower).unwrap();
        let dim = h.dim();
        let mut psi = vec![C64::new(0.0, 0.0); dim];
        psi[1] = C64::new(0.8, 0.0);
        psi[2] = C64::new(0.0, 0.6);
        for &t in &[0.9f64, 3.7] {
            let mut evolved = vec![C64::new(0.0, 0.0); dim];
            for e in 0..dim {
                let mut c = C64::new(0.0, 0.0);
                for i in 0..dim {
                    c += evd.U()[(i, e)].conj() * psi[i];
                }
                c *= C64::from_polar(1.0, -evd.S()[e].re * t);
                for i in 0..dim {
                    evolved[i] += evd.U()[(i, e)] * c;
                }
            }
            let norm: f64 = evolved.iter().map(|z| z.norm_sqr()).sum();
            assert!((norm - 1.0).abs() < 1e-10, "norm drift {norm}");
        }
    }

    #[test]
    fn dimension_cap_is_enforced() {
        let (sys, bath) = qubit();
        let mut cfg = lenient_cfg();
        cfg.matrix_free_dim_cap = 100;
        let fm = discretize_bath(&bath, 4, 13.0, 3, &cfg).unwrap();
        let rho0 = gibbs(sys.h_sys(), 1.0).unwrap();
        let r = exact_reduced_dynamics(&sys, &fm, 0.1, rho0.rho(), &[0.0], &cfg);
        assert!(matches!(r, Err(Error::DimensionCap { .. })));
    }
}
