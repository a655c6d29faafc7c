//! Gibbs states, the second-order interacting reduced equilibrium, the
//! renormalized system Hamiltonian defined by inverting the Gibbs map, and
//! the renormalized generators M(lambda), M_d(lambda) whose fixed point is
//! the interacting equilibrium rather than the bare one.

use crate::davies::{build_davies, DaviesGenerator, Superoperator};
use crate::error::{Error, Result};
use crate::linalg::{kron, vectorize, CMat, C64};
use crate::model::{BathSpec, SystemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GibbsSource {
    /// e^{-beta H_S} / Z of the bare system Hamiltonian.
    Bare,
    /// Gibbs state of a renormalized Hamiltonian.
    Renormalized,
    /// Reduction of the coupled equilibrium, through second order.
    SecondOrderReduced,
    /// Partial trace of an exact finite-mode Gibbs state.
    ExactReduced,
}

/// A validated density matrix tagged with its provenance.
#[derive(Debug, Clone)]
pub struct GibbsState {
    rho: CMat,
    beta: f64,
    source: GibbsSource,
}

impl GibbsState {
    pub fn new(rho: CMat, beta: f64, source: GibbsSource) -> Result<Self> {
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > 1e-12 || tr.im.abs() > 1e-12 {
            return Err(Error::Invariant {
                name: "gibbs state trace 1",
                dev: (tr - C64::new(1.0, 0.0)).norm(),
                tol: 1e-12,
            });
        }
        let hd = rho.herm_dev();
        if hd > 1e-12 {
            return Err(Error::Invariant {
                name: "gibbs state hermitian",
                dev: hd,
                tol: 1e-12,
            });
        }
        let (evals, _) = rho.eigh();
        if evals[0] < -1e-12 {
            return Err(Error::Invariant {
                name: "gibbs state positive semidefinite",
                dev: -evals[0],
                tol: 1e-12,
            });
        }
        Ok(Self { rho, beta, source })
    }

    pub fn rho(&self) -> &CMat {
        &self.rho
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn source(&self) -> GibbsSource {
        self.source
    }
}

/// e^{-beta h} / tr e^{-beta h} for hermitian h.
pub fn gibbs(h: &CMat, beta: f64) -> Result<GibbsState> {
    if beta <= 0.0 {
        return Err(Error::Domain(format!("beta must be positive, got {beta}")));
    }
    let (evals, vecs) = h.hermitize().eigh();
    let e0 = evals[0];
    let weights: Vec<f64> = evals.iter().map(|&e| (-beta * (e - e0)).exp()).collect();
    let z: f64 = weights.iter().sum();
    let n = h.nrows();
    let mut rho = CMat::zeros(n, n);
    for j in 0..n {
        let col = vecs.col(j);
        let w = weights[j] / z;
        for a in 0..n {
            for b in 0..n {
                rho[(a, b)] += col[a] * col[b].conj() * w;
            }
        }
    }
    GibbsState::new(rho.hermitize(), beta, GibbsSource::Bare)
}

/// Gauss-Legendre panel count for the imaginary-time double integral.
const IMAG_TIME_ORDERS: [usize; 3] = [48, 96, 192];

/// Reduced equilibrium state of the coupled system through second order:
/// rho_lambda = rho_0 + lambda^2 rho2, where rho2 comes from the
/// second-order imaginary-time Dyson expansion of the reduced Gibbs
/// operator, with the bath kernel h(tau) from the model module.
pub fn reduced_gibbs_second_order(
    sys: &SystemSpec,
    bath: &BathSpec,
    lambda: f64,
) -> Result<GibbsState> {
    let rho0 = gibbs(sys.h_sys(), bath.beta())?;
    if lambda == 0.0 {
        return Ok(rho0);
    }
    let rho2 = second_order_correction(sys, bath)?;
    let rho = rho0
        .rho()
        .add(&rho2.scale(C64::new(lambda * lambda, 0.0)));
    GibbsState::new(rho.hermitize(), bath.beta(), GibbsSource::SecondOrderReduced)
}

/// The lambda^2 coefficient rho2 of the reduced equilibrium expansion.
/// Traceless and hermitian by construction.
pub fn second_order_correction(sys: &SystemSpec, bath: &BathSpec) -> Result<CMat> {
    // h(tau) tabulated once on a fine uniform grid and interpolated by a
    // local 4-point Lagrange rule; the kernel is analytic on [0, beta]
    let kernel = KernelTable::build(bath)?;
    second_order_correction_with_kernel(sys, bath.beta(), &|tau| kernel.eval(tau))
}

/// Same expansion with a caller-supplied imaginary-time kernel; used to
/// cross-check the continuum kernel against exactly solvable discrete baths.
pub fn second_order_correction_with_kernel(
    sys: &SystemSpec,
    beta: f64,
    kernel: &dyn Fn(f64) -> f64,
) -> Result<CMat> {
    let n = sys.dim();
    let evals = sys.eigvals();
    let g_eig = sys.to_eigenbasis(sys.coupling());

    let g_tau = |tau: f64| -> CMat {
        CMat::from_fn(n, n, |a, b| g_eig[(a, b)] * C64::new((tau * (evals[a] - evals[b])).exp(), 0.0))
    };

    let (gl_x, gl_w) = crate::model::gauss_legendre_16();
    let double_integral = |panels: usize| -> CMat {
        // outer integral over tau1 in [0, beta], inner over tau2 in [0, tau1]
        let mut total = CMat::zeros(n, n);
        let w_out = beta / panels as f64;
        for p_out in 0..panels {
            for k_out in 0..16 {
                let tau1 = w_out * (p_out as f64 + 0.5 + 0.5 * gl_x[k_out]);
                let weight1 = 0.5 * w_out * gl_w[k_out];
                let g1 = g_tau(tau1);
                // inner rule scaled to [0, tau1]
                let inner_panels = ((panels as f64 * tau1 / beta).ceil() as usize).max(1);
                let w_in = tau1 / inner_panels as f64;
                let mut inner = CMat::zeros(n, n);
                for p_in in 0..inner_panels {
                    for k_in in 0..16 {
                        let tau2 = w_in * (p_in as f64 + 0.5 + 0.5 * gl_x[k_in]);
                        let weight2 = 0.5 * w_in * gl_w[k_in];
                        let h = kernel(tau1 - tau2);
                        inner = inner.add(&g_tau(tau2).scale(C64::new(weight2 * h, 0.0)));
                    }
                }
                total = total.add(&g1.matmul(&inner).scale(C64::new(weight1, 0.0)));
            }
        }
        total
    };

    let mut t_mat = double_integral(IMAG_TIME_ORDERS[0]);
    let mut converged = false;
    for &order in &IMAG_TIME_ORDERS[1..] {
        let refined = double_integral(order);
        let change = refined.sub(&t_mat).max_abs();
        let scale = refined.max_abs().max(1e-30);
        t_mat = refined;
        if change <= 1e-10 * scale.max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        // the last refinement is retained; only fail when it moved a lot
        let check = double_integral(IMAG_TIME_ORDERS[2] + 96);
        if check.sub(&t_mat).max_abs() > 1e-7 * t_mat.max_abs().max(1.0) {
            return Err(Error::Quadrature(
                "imaginary-time double integral did not converge".into(),
            ));
        }
        t_mat = check;
    }

    // rho2 (eigenbasis) = [e^{-beta D} T - rho0 tr(e^{-beta D} T)] / Z
    let e0 = evals[0];
    let weights: Vec<f64> = evals.iter().map(|&e| (-beta * (e - e0)).exp()).collect();
    let z: f64 = weights.iter().sum();
    let mut a = CMat::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            a[(r, c)] = t_mat[(r, c)] * C64::new(weights[r] / z, 0.0);
        }
    }
    let tr_a = a.trace();
    for j in 0..n {
        a[(j, j)] -= tr_a * C64::new(weights[j] / z, 0.0);
    }
    let rho2 = a.hermitize();
    Ok(sys.from_eigenbasis(&rho2))
}

/// Uniformly tabulated imaginary-time kernel with cubic interpolation.
struct KernelTable {
    values: Vec<f64>,
    step: f64,
    beta: f64,
}

impl KernelTable {
    fn build(bath: &BathSpec) -> Result<Self> {
        let beta = bath.beta();
        let m = 2048usize;
        let step = beta / m as f64;
        let mut values = Vec::with_capacity(m + 1);
        for k in 0..=m {
            values.push(bath.imag_time_kernel(k as f64 * step)?);
        }
        Ok(Self { values, step, beta })
    }

    fn eval(&self, tau: f64) -> f64 {
        let t = tau.clamp(0.0, self.beta);
        let x = t / self.step;
        let m = self.values.len() - 1;
        let i = (x.floor() as usize).clamp(1, m - 2);
        let s = x - i as f64;
        // 4-point Lagrange on nodes i-1, i, i+1, i+2
        let (f0, f1, f2, f3) = (
            self.values[i - 1],
            self.values[i],
            self.values[i + 1],
            self.values[i + 2],
        );
        let c0 = -s * (s - 1.0) * (s - 2.0) / 6.0;
        let c1 = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0;
        let c2 = -(s + 1.0) * s * (s - 2.0) / 2.0;
        let c3 = (s + 1.0) * s * (s - 1.0) / 6.0;
        c0 * f0 + c1 * f1 + c2 * f2 + c3 * f3
    }
}

/// Renormalized system data: the Hamiltonian whose Gibbs state is the
/// supplied density matrix, normalized so its smallest eigenvalue is 0,
/// together with its Gibbs purification on the doubled space.
#[derive(Debug, Clone)]
pub struct RenormalizedSystem {
    h_tilde: CMat,
    e_tilde: Vec<f64>,
    phi_tilde: CMat,
    /// Purification matrix W with vec(W) the purification vector and
    /// W W† = rho; built as sum_j sqrt(p_j) phi_j (C phi_j)^T.
    w_mat: CMat,
    lambda: f64,
    beta: f64,
}

impl RenormalizedSystem {
    pub fn h_tilde(&self) -> &CMat {
        &self.h_tilde
    }

    pub fn e_tilde(&self) -> &[f64] {
        &self.e_tilde
    }

    pub fn phi_tilde(&self) -> &CMat {
        &self.phi_tilde
    }

    pub fn w_mat(&self) -> &CMat {
        &self.w_mat
    }

    /// Purification vector in C^N (x) C^N.
    pub fn purification(&self) -> Vec<C64> {
        vectorize(&self.w_mat)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Invert the Gibbs map: H_tilde = -(1/beta) ln(rho / ||rho||), with the
/// smallest eigenvalue normalized to 0. The conjugation entering the
/// purification acts on coordinates in the eigenbasis of the original H_S.
pub fn renormalize(
    rho_lambda: &GibbsState,
    sys: &SystemSpec,
    lambda: f64,
) -> Result<RenormalizedSystem> {
    let beta = rho_lambda.beta();
    let (p, vecs) = rho_lambda.rho().eigh();
    let n = p.len();
    if p[0] <= 0.0 {
        return Err(Error::Domain(format!(
            "renormalization needs a strictly positive density matrix; min eigenvalue {}",
            p[0]
        )));
    }
    let p_max = p[n - 1];
    // eigh sorts p ascending, so E_tilde comes out descending; reverse both
    let mut e_tilde: Vec<f64> = p.iter().map(|&pj| -(pj / p_max).ln() / beta).collect();
    e_tilde.reverse();
    let mut phi = CMat::zeros(n, n);
    for j in 0..n {
        phi.set_col(j, &vecs.col(n - 1 - j));
    }
    let mut d = CMat::zeros(n, n);
    for j in 0..n {
        d[(j, j)] = C64::new(e_tilde[j], 0.0);
    }
    let h_tilde = phi.matmul(&d).matmul(&phi.adjoint()).hermitize();

    // conjugation C in the eigenbasis of the original H_S
    let u = sys.eigvecs();
    let conj_in_basis = |v: &[C64]| -> Vec<C64> {
        let coords = u.adjoint().apply(v);
        let conj_coords: Vec<C64> = coords.iter().map(|z| z.conj()).collect();
        u.apply(&conj_coords)
    };
    let mut w = CMat::zeros(n, n);
    let mut p_desc: Vec<f64> = p.clone();
    p_desc.reverse();
    for j in 0..n {
        let col = phi.col(j);
        let c_col = conj_in_basis(&col);
        let wj = p_desc[j].sqrt();
        for a in 0..n {
            for b in 0..n {
                w[(a, b)] += col[a] * c_col[b] * wj;
            }
        }
    }

    Ok(RenormalizedSystem {
        h_tilde,
        e_tilde,
        phi_tilde: phi,
        w_mat: w,
        lambda,
        beta,
    })
}

/// Output of the renormalized pipeline.
#[derive(Debug, Clone)]
pub struct RenormalizedGenerators {
    /// M_d(lambda): the dissipative generator with the interacting
    /// equilibrium as fixed point; M_d(0) is the bare Davies K.
    pub m_d: Superoperator,
    /// M(lambda) = -i[H_tilde, .] + lambda^2 M_d(lambda).
    pub m_full: Superoperator,
    /// Davies construction at the renormalized spectral data.
    pub davies_tilde: DaviesGenerator,
    /// Level-shift operator on the doubled space C^N (x) C^N.
    pub level_shift_doubled: CMat,
    pub renormalized: RenormalizedSystem,
    pub rho_lambda: GibbsState,
}

/// Maximum condition number tolerated for the purification transport map.
pub const PHI_COND_CAP: f64 = 1e12;

/// Build M(lambda) and M_d(lambda).
///
/// Pipeline: renormalize the reduced second-order equilibrium, rebuild the
/// Davies construction at the renormalized spectral data (rates h_hat at
/// renormalized Bohr frequencies), transport its Heisenberg form onto the
/// doubled space through the purification map Phi(X) = (X (x) 1) Omega to
/// obtain the level-shift operator, and dualize back to density matrices.
/// At lambda = 0 every step is the identity transport of the bare Davies
/// generator, so that path returns K itself.
pub fn renormalized_generators(
    sys: &SystemSpec,
    bath: &BathSpec,
    lambda: f64,
) -> Result<RenormalizedGenerators> {
    let n = sys.dim();
    if lambda == 0.0 {
        let dav = build_davies(sys, bath, 0.0)?;
        let rho0 = gibbs(sys.h_sys(), bath.beta())?;
        let rn = renormalize(&rho0, sys, 0.0)?;
        let phi_map = kron(&CMat::identity(n), &rn.w_mat().transpose());
        let k_heis = dav.k_super().heisenberg_dual();
        let level_shift_doubled = phi_map
            .matmul(k_heis.matrix())
            .matmul(&phi_map.inverse())
            .scale(C64::new(0.0, -1.0));
        let m_d = dav.k_super().clone();
        let m_full = Superoperator::hamiltonian_part(sys.h_sys());
        return Ok(RenormalizedGenerators {
            m_d,
            m_full,
            davies_tilde: dav,
            level_shift_doubled,
            renormalized: rn,
            rho_lambda: rho0,
        });
    }

    let rho_lambda = reduced_gibbs_second_order(sys, bath, lambda)?;
    let rn = renormalize(&rho_lambda, sys, lambda)?;
    let sys_tilde = SystemSpec::new(rn.h_tilde().clone(), sys.coupling().clone())?;
    let davies_tilde = build_davies(&sys_tilde, bath, lambda)?;

    // Phi: X -> (X (x) 1) Omega = vec(X W), an invertible map by cyclicity
    let w = rn.w_mat();
    let cond = w.cond2();
    if cond > PHI_COND_CAP {
        return Err(Error::Numeric(format!(
            "purification transport map nearly singular: cond(W) = {cond:.3e}"
        )));
    }
    let phi_map = kron(&CMat::identity(n), &w.transpose());
    let phi_inv = phi_map.inverse();

    let k_heis = davies_tilde.k_super().heisenberg_dual();
    // level shift on the doubled space: i Lambda = Phi K_heis Phi^{-1}
    let level_shift_doubled = phi_map
        .matmul(k_heis.matrix())
        .matmul(&phi_inv)
        .scale(C64::new(0.0, -1.0));

    // Heisenberg generator of the dissipative group: Phi^{-1} (i Lambda) Phi
    let md_heis = phi_inv
        .matmul(&level_shift_doubled.scale(C64::new(0.0, 1.0)))
        .matmul(&phi_map);
    let m_d = Superoperator::from_matrix(n, md_heis).heisenberg_dual();

    let m_full = Superoperator::hamiltonian_part(rn.h_tilde())
        .add(&m_d.scale(C64::new(lambda * lambda, 0.0)));

    Ok(RenormalizedGenerators {
        m_d,
        m_full,
        davies_tilde,
        level_shift_doubled,
        renormalized: rn,
        rho_lambda,
    })
}
