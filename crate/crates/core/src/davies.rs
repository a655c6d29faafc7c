//! Weak-coupling generator for an N-level system in a thermal Bose field:
//! the dissipator built from spectral-projection jump operators with rates
//! h_hat evaluated at Bohr frequencies, the principal-value Lamb shift, and
//! the total generator G = -i[H_S, .] + lambda^2 K as a superoperator.
//!
//! Also houses the numerical complete-positivity machinery (Choi matrix,
//! trace/hermiticity preservation report) used to certify every semigroup
//! this crate produces.

use crate::error::{Error, Result};
use crate::linalg::{kron, unvectorize, vectorize, CMat, C64};
use crate::model::{principal_value_with_breaks, BathSpec, SystemSpec};
use crate::util::{random_hermitian, SplitMix64};

/// Dense N^2 x N^2 linear map on vectorized density matrices.
///
/// Vectorization is row-major: vec(|i><j|) sits at index i*N + j, and the
/// map rho -> A rho B has matrix A (x) B^T.
#[derive(Debug, Clone)]
pub struct Superoperator {
    dim: usize,
    matrix: CMat,
}

impl Superoperator {
    pub fn from_matrix(dim: usize, matrix: CMat) -> Self {
        assert_eq!(matrix.nrows(), dim * dim);
        assert_eq!(matrix.ncols(), dim * dim);
        Self { dim, matrix }
    }

    pub fn zero(dim: usize) -> Self {
        Self::from_matrix(dim, CMat::zeros(dim * dim, dim * dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_matrix(dim, CMat::identity(dim * dim))
    }

    /// rho -> a rho b.
    pub fn left_right(a: &CMat, b: &CMat) -> Self {
        let dim = a.nrows();
        Self::from_matrix(dim, kron(a, &b.transpose()))
    }

    /// -i [h, .]
    pub fn hamiltonian_part(h: &CMat) -> Self {
        let n = h.nrows();
        let id = CMat::identity(n);
        let m = kron(h, &id).sub(&kron(&id, &h.transpose()));
        Self::from_matrix(n, m.scale(C64::new(0.0, -1.0)))
    }

    /// GKSL dissipator of a single jump operator:
    /// rho -> L rho L† - (1/2){L†L, rho}.
    pub fn dissipator(l: &CMat) -> Self {
        let n = l.nrows();
        let id = CMat::identity(n);
        let ldl = l.adjoint().matmul(l);
        let jump = kron(l, &l.conj());
        let anti = kron(&ldl, &id).add(&kron(&id, &ldl.transpose()));
        Self::from_matrix(n, jump.sub(&anti.scale(C64::new(0.5, 0.0))))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn apply_vec(&self, v: &[C64]) -> Vec<C64> {
        self.matrix.apply(v)
    }

    pub fn apply_to(&self, rho: &CMat) -> CMat {
        unvectorize(&self.matrix.apply(&vectorize(rho)))
    }

    /// Composition self ∘ other (apply `other` first).
    pub fn compose(&self, other: &Self) -> Self {
        Self::from_matrix(self.dim, self.matrix.matmul(&other.matrix))
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::from_matrix(self.dim, self.matrix.add(&other.matrix))
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::from_matrix(self.dim, self.matrix.sub(&other.matrix))
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::from_matrix(self.dim, self.matrix.scale(s))
    }

    /// Transport across the bilinear trace pairing: the unique map D' with
    /// tr((D rho) X) = tr(rho D'(X)) for all rho, X. For hermiticity
    /// preserving maps this coincides with the Hilbert-Schmidt adjoint.
    pub fn heisenberg_dual(&self) -> Self {
        let n = self.dim;
        let m = &self.matrix;
        let out = CMat::from_fn(n * n, n * n, |row, col| {
            let (i, j) = (row / n, row % n);
            let (k, l) = (col / n, col % n);
            m[(l * n + k, j * n + i)]
        });
        Self::from_matrix(n, out)
    }

    /// Max over the matrix-unit basis of |tr(S E_ij) - tr(E_ij)|; zero for
    /// trace-preserving maps.
    pub fn trace_preservation_dev(&self) -> f64 {
        let n = self.dim;
        let mut dev: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let mut tr = C64::new(0.0, 0.0);
                for a in 0..n {
                    tr += self.matrix[(a * n + a, i * n + j)];
                }
                let expect = if i == j {
                    C64::new(1.0, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                };
                dev = dev.max((tr - expect).norm());
            }
        }
        dev
    }

    /// Max over the matrix-unit basis of |tr(S E_ij)|; zero exactly when the
    /// left trace vector annihilates every column, i.e. when `self` generates
    /// a trace-preserving semigroup.
    pub fn trace_annihilation_dev(&self) -> f64 {
        let n = self.dim;
        let mut dev: f64 = 0.0;
        for col in 0..n * n {
            let mut tr = C64::new(0.0, 0.0);
            for a in 0..n {
                tr += self.matrix[(a * n + a, col)];
            }
            dev = dev.max(tr.norm());
        }
        dev
    }

    /// Max hermiticity defect of images of seeded random hermitian inputs.
    pub fn hermiticity_preservation_dev(&self, seed: u64, samples: usize) -> f64 {
        let mut rng = SplitMix64::new(seed);
        let mut dev: f64 = 0.0;
        for _ in 0..samples {
            let h = random_hermitian(self.dim, &mut rng);
            dev = dev.max(self.apply_to(&h).herm_dev());
        }
        dev
    }

    /// Frobenius norm of the commutator with another superoperator, relative
    /// to the product of their norms.
    pub fn commutator_rel_dev(&self, other: &Self) -> f64 {
        let ab = self.matrix.matmul(&other.matrix);
        let ba = other.matrix.matmul(&self.matrix);
        let denom = self.matrix.fro_norm() * other.matrix.fro_norm();
        if denom == 0.0 {
            return 0.0;
        }
        ab.sub(&ba).fro_norm() / denom
    }
}

/// Choi matrix of a superoperator: C = sum_ij S(|i><j|) (x) |i><j|.
/// The map is completely positive iff C is positive semidefinite.
pub fn to_choi(s: &Superoperator) -> CMat {
    let n = s.dim();
    let m = s.matrix();
    CMat::from_fn(n * n, n * n, |row, col| {
        let (a, i) = (row / n, row % n);
        let (b, j) = (col / n, col % n);
        m[(a * n + b, i * n + j)]
    })
}

/// Numerical CPT diagnostics for a superoperator.
#[derive(Debug, Clone, Copy)]
pub struct CptReport {
    /// Smallest eigenvalue of the (hermitized) Choi matrix; >= -tol means CP.
    pub min_choi_eig: f64,
    /// Trace-preservation defect over the matrix-unit basis.
    pub trace_dev: f64,
    /// Hermiticity-preservation defect on seeded random hermitian inputs.
    pub herm_dev: f64,
}

pub fn cpt_report(s: &Superoperator, seed: u64) -> CptReport {
    let choi = to_choi(s);
    let (evals, _) = choi.hermitize().eigh();
    CptReport {
        min_choi_eig: evals[0],
        trace_dev: s.trace_preservation_dev(),
        herm_dev: s.hermiticity_preservation_dev(seed, 8),
    }
}

/// One GKSL jump channel.
#[derive(Debug, Clone)]
pub struct Jump {
    pub rate: f64,
    pub operator: CMat,
}

/// Relative tolerance for grouping near-degenerate eigenvalues of H_S.
pub const DEGENERACY_REL_TOL: f64 = 1e-9;

/// The weak-coupling generator: K (dissipator + Lamb shift commutator) with
/// its ingredients, the free part, and total G = L_S + lambda^2 K.
#[derive(Debug, Clone)]
pub struct DaviesGenerator {
    sys: SystemSpec,
    lambda: f64,
    beta: f64,
    k_super: Superoperator,
    liouville_s: Superoperator,
    lamb_shift: CMat,
    jumps: Vec<Jump>,
    /// Distinct eigenvalue groups: (energy, member eigenindices).
    groups: Vec<(f64, Vec<usize>)>,
    /// Rates actually used, keyed by Bohr frequency: (e, h_hat(e)).
    rates: Vec<(f64, f64)>,
}

impl DaviesGenerator {
    pub fn sys(&self) -> &SystemSpec {
        &self.sys
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Inverse temperature of the bath the rates were drawn from.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// The operator K.
    pub fn k_super(&self) -> &Superoperator {
        &self.k_super
    }

    /// L_S = -i[H_S, .]
    pub fn liouville_s(&self) -> &Superoperator {
        &self.liouville_s
    }

    /// Total generator G = L_S + lambda^2 K.
    pub fn generator(&self) -> Superoperator {
        self.liouville_s
            .add(&self.k_super.scale(C64::new(self.lambda * self.lambda, 0.0)))
    }

    pub fn lamb_shift(&self) -> &CMat {
        &self.lamb_shift
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn groups(&self) -> &[(f64, Vec<usize>)] {
        &self.groups
    }

    pub fn rates(&self) -> &[(f64, f64)] {
        &self.rates
    }

    /// Re-assemble K from the stored jumps and Lamb shift by direct action
    /// on the matrix-unit basis. Independent of the Kronecker-product
    /// assembly used at construction; the two must agree to ~1e-10.
    pub fn reassemble_k(&self) -> Superoperator {
        let n = self.sys.dim();
        let mut m = CMat::zeros(n * n, n * n);
        for i in 0..n {
            for j in 0..n {
                let mut e = CMat::zeros(n, n);
                e[(i, j)] = C64::new(1.0, 0.0);
                let mut img = CMat::zeros(n, n);
                for jump in &self.jumps {
                    if jump.rate == 0.0 || jump.operator.max_abs() == 0.0 {
                        continue;
                    }
                    let l = &jump.operator;
                    let ldag = l.adjoint();
                    let ldl = ldag.matmul(l);
                    let t1 = l.matmul(&e).matmul(&ldag);
                    let t2 = ldl
                        .matmul(&e)
                        .add(&e.matmul(&ldl))
                        .scale(C64::new(0.5, 0.0));
                    img = img.add(&t1.sub(&t2).scale(C64::new(jump.rate, 0.0)));
                }
                let comm = self
                    .lamb_shift
                    .matmul(&e)
                    .sub(&e.matmul(&self.lamb_shift))
                    .scale(C64::new(0.0, -1.0));
                img = img.add(&comm);
                m.set_col(i * n + j, &vectorize(&img));
            }
        }
        Superoperator::from_matrix(n, m)
    }
}

/// Group near-degenerate eigenvalues; tolerance is relative to the spectral
/// range so exact ties and 1e-12 noise collapse onto one projection.
pub fn group_eigenvalues(eigvals: &[f64], rel_tol: f64) -> Vec<(f64, Vec<usize>)> {
    let scale = eigvals.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1.0);
    let tol = rel_tol * scale;
    let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
    for (idx, &e) in eigvals.iter().enumerate() {
        match groups.last_mut() {
            Some((ge, members)) if (e - *ge).abs() <= tol => {
                let m = members.len() as f64;
                *ge = (*ge * m + e) / (m + 1.0);
                members.push(idx);
            }
            _ => groups.push((e, vec![idx])),
        }
    }
    groups
}

/// Build the Davies generator for the given system, bath and coupling.
pub fn build_davies(sys: &SystemSpec, bath: &BathSpec, lambda: f64) -> Result<DaviesGenerator> {
    let n = sys.dim();
    let groups = group_eigenvalues(sys.eigvals(), DEGENERACY_REL_TOL);

    // spectral projections P_g in the computational basis
    let projections: Vec<CMat> = groups
        .iter()
        .map(|(_, members)| {
            let mut p = CMat::zeros(n, n);
            for &j in members {
                let col = sys.eigvecs().col(j);
                for a in 0..n {
                    for b in 0..n {
                        p[(a, b)] += col[a] * col[b].conj();
                    }
                }
            }
            p
        })
        .collect();

    let g_op = sys.coupling();
    let grid = bath.grid()?;
    let u_max = grid.u_max;

    // jumps: P_h G P_g with rate h_hat(E_g - E_h) for g != h, plus the
    // zero-frequency channel sum_g P_g G P_g at rate h_hat(0)
    let mut jumps = Vec::new();
    let mut rates = Vec::new();
    let mut k_mat = CMat::zeros(n * n, n * n);
    for (gi, (eg, _)) in groups.iter().enumerate() {
        for (hi, (eh, _)) in groups.iter().enumerate() {
            if gi == hi {
                continue;
            }
            let e = eg - eh;
            let rate = bath.h_hat(e);
            if rate < 0.0 || !rate.is_finite() {
                return Err(Error::Numeric(format!(
                    "h_hat({e}) = {rate} is not a valid GKSL rate"
                )));
            }
            let op = projections[hi].matmul(g_op).matmul(&projections[gi]);
            rates.push((e, rate));
            if rate > 0.0 && op.max_abs() > 0.0 {
                k_mat = k_mat.add(
                    Superoperator::dissipator(&op)
                        .scale(C64::new(rate, 0.0))
                        .matrix(),
                );
            }
            jumps.push(Jump { rate, operator: op });
        }
    }
    let rate0 = bath.h_hat_zero();
    let mut a0 = CMat::zeros(n, n);
    for p in &projections {
        a0 = a0.add(&p.matmul(g_op).matmul(p));
    }
    rates.push((0.0, rate0));
    if rate0 > 0.0 && a0.max_abs() > 0.0 {
        k_mat = k_mat.add(
            Superoperator::dissipator(&a0)
                .scale(C64::new(rate0, 0.0))
                .matrix(),
        );
    }
    jumps.push(Jump {
        rate: rate0,
        operator: a0,
    });

    // Lamb shift:
    // (1/pi) sum_{g,h} [P.V. Int h_hat(u)/(e_gh - u) du] P_g G P_h G P_g
    let mut lamb = CMat::zeros(n, n);
    let mut pv_cache: Vec<(f64, f64)> = Vec::new();
    if g_op.max_abs() > 0.0 {
        for (gi, (eg, _)) in groups.iter().enumerate() {
            for (hi, (eh, _)) in groups.iter().enumerate() {
                let e = eg - eh;
                let coeff = match pv_cache.iter().find(|(ee, _)| (ee - e).abs() < 1e-14) {
                    Some((_, c)) => *c,
                    None => {
                        let c = principal_value_with_breaks(
                            |u| bath.h_hat(u),
                            e,
                            (-u_max, u_max),
                            &[0.0],
                        )? / std::f64::consts::PI;
                        pv_cache.push((e, c));
                        c
                    }
                };
                let op = projections[gi]
                    .matmul(g_op)
                    .matmul(&projections[hi])
                    .matmul(g_op)
                    .matmul(&projections[gi]);
                lamb = lamb.add(&op.scale(C64::new(coeff, 0.0)));
            }
        }
        lamb = lamb.hermitize();
        k_mat = k_mat.add(Superoperator::hamiltonian_part(&lamb).matrix());
    }

    let k_super = Superoperator::from_matrix(n, k_mat);
    let liouville_s = Superoperator::hamiltonian_part(sys.h_sys());

    // trace annihilation is structural for GKSL form; catches assembly bugs
    let tp = k_super.trace_annihilation_dev();
    let scale = k_super.matrix().fro_norm().max(1.0);
    if tp > 1e-10 * scale {
        return Err(Error::Invariant {
            name: "K trace-preserving (left trace vector annihilation)",
            dev: tp,
            tol: 1e-10 * scale,
        });
    }

    Ok(DaviesGenerator {
        sys: sys.clone(),
        lambda,
        beta: bath.beta(),
        k_super,
        liouville_s,
        lamb_shift: lamb,
        jumps,
        groups,
        rates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::gibbs;
    use crate::linalg::expm;
    use crate::model::{sigma_x, BathSpec, SystemSpec};

    fn qubit_model() -> (SystemSpec, BathSpec) {
        let sys = SystemSpec::qubit(1.0, sigma_x()).unwrap();
        let bath = BathSpec::new_analytic(1.0, 0, 1, 1.0).unwrap();
        (sys, bath)
    }

    #[test]
    fn zero_coupling_gives_free_generator() {
        let sys = SystemSpec::qubit(1.0, CMat::zeros(2, 2)).unwrap();
        let bath = BathSpec::new_analytic(1.0, 0, 1, 1.0).unwrap();
        let dav = build_davies(&sys, &bath, 0.3).unwrap();
        assert_eq!(dav.k_super().matrix().max_abs(), 0.0);
        assert_eq!(dav.lamb_shift().max_abs(), 0.0);
        let g = dav.generator();
        assert!(g.matrix().sub(dav.liouville_s().matrix()).max_abs() == 0.0);
    }

    #[test]
    fn qubit_rates_and_k_spectrum() {
        let (sys, bath) = qubit_model();
        let dav = build_davies(&sys, &bath, 0.1).unwrap();
        let delta = 1.0;
        let h_down = bath.h_hat(delta);
        let h_up = bath.h_hat(-delta);

        let mut found_down = false;
        let mut found_up = false;
        for j in dav.jumps() {
            if (j.rate - h_down).abs() < 1e-14 && j.operator[(0, 1)].norm() > 0.9 {
                found_down = true;
            }
            if (j.rate - h_up).abs() < 1e-14 && j.operator[(1, 0)].norm() > 0.9 {
                found_up = true;
            }
        }
        assert!(found_down && found_up);

        // spectrum of K: {0, -(h_down+h_up)} on populations and a conjugate
        // pair of coherence eigenvalues with real part -(h_down+h_up)/2
        let (mut evals, _) = dav.k_super().matrix().eig().unwrap();
        evals.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        let total = h_down + h_up;
        assert!(evals[3].norm() < 1e-12, "stationary eigenvalue");
        assert!(
            (evals[0].re + total).abs() < 1e-12,
            "population relaxation eigenvalue"
        );
        assert!((evals[1].re + total / 2.0).abs() < 1e-12);
        assert!((evals[2].re + total / 2.0).abs() < 1e-12);
    }

    #[test]
    fn k_annihilates_gibbs_state() {
        let (sys, bath) = qubit_model();
        let dav = build_davies(&sys, &bath, 0.1).unwrap();
        let rho = gibbs(sys.h_sys(), bath.beta()).unwrap();
        let residual = dav.k_super().apply_to(rho.rho());
        let kf = dav.k_super().matrix().fro_norm();
        assert!(
            residual.fro_norm() <= 1e-9 * kf,
            "K gibbs residual {} vs {}",
            residual.fro_norm(),
            kf
        );
    }

    #[test]
    fn k_commutes_with_free_liouvillian() {
        let (sys, bath) = qubit_model();
        let dav = build_davies(&sys, &bath, 0.1).unwrap();
        assert!(dav.liouville_s().commutator_rel_dev(dav.k_super()) < 1e-9);

        // also for a degenerate 3-level system with a generic coupling
        let mut g = CMat::zeros(3, 3);
        g[(0, 1)] = C64::new(1.0, 0.2);
        g[(1, 0)] = C64::new(1.0, -0.2);
        g[(1, 2)] = C64::new(0.7, 0.0);
        g[(2, 1)] = C64::new(0.7, 0.0);
        g[(0, 0)] = C64::new(0.4, 0.0);
        let mut h = CMat::zeros(3, 3);
        h[(2, 2)] = C64::new(1.3, 0.0); // E = {0, 0, 1.3}: degenerate pair
        let sys3 = SystemSpec::new(h, g).unwrap();
        let bath3 = BathSpec::new_analytic(0.8, 0, 1, 0.5).unwrap();
        let dav3 = build_davies(&sys3, &bath3, 0.2).unwrap();
        assert_eq!(dav3.groups().len(), 2);
        assert!(dav3.liouville_s().commutator_rel_dev(dav3.k_super()) < 1e-9);
    }

    #[test]
    fn gksl_reassembly_matches_assembled_k() {
        let (sys, bath) = qubit_model();
        let dav = build_davies(&sys, &bath, 0.1).unwrap();
        let re = dav.reassemble_k();
        let dev = re.matrix().sub(dav.k_super().matrix()).max_abs();
        assert!(dev <= 1e-10, "reassembly deviation {dev}");
    }

    #[test]
    fn lamb_shift_is_hermitian_and_commutes_with_h() {
        let mut g = sigma_x();
        g[(0, 0)] = C64::new(0.5, 0.0); // engage the zero-frequency channel
        let sys = SystemSpec::qubit(1.0, g).unwrap();
        let bath = BathSpec::new_analytic(1.0, 0, 1, 1.0).unwrap();
        let dav = build_davies(&sys, &bath, 0.1).unwrap();
        assert!(dav.lamb_shift().herm_dev() < 1e-12);
        let h = sys.h_sys();
        let com = dav.lamb_shift().matmul(h).sub(&h.matmul(dav.lamb_shift()));
        assert!(com.max_abs() < 1e-10);
        assert!(dav.lamb_shift().max_abs() > 0.0);
    }

    #[test]
    fn choi_of_identity_map() {
        let s = Superoperator::identity(2);
        let choi = to_choi(&s);
        let (evals, _) = choi.hermitize().eigh();
        assert!((evals[3] - 2.0).abs() < 1e-12, "top eigenvalue is N");
        for e in &evals[..3] {
            assert!(e.abs() < 1e-12);
        }
    }

    #[test]
    fn choi_detects_transpose_as_not_cp() {
        // transpose map on a qubit: M[(i,j),(k,l)] = delta_il delta_jk
        let n = 2;
        let m = CMat::from_fn(n * n, n * n, |row, col| {
            let (i, j) = (row / n, row % n);
            let (k, l) = (col / n, col % n);
            if i == l && j == k {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let s = Superoperator::from_matrix(n, m);
        let rep = cpt_report(&s, 7);
        assert!(rep.min_choi_eig < -0.9, "transpose must fail CP");
        assert!(rep.trace_dev < 1e-14, "transpose preserves trace");
    }

    #[test]
    fn exp_generator_is_cp_at_unit_time() {
        let (sys, bath) = qubit_model();
        let dav = build_davies(&sys, &bath, 0.1).unwrap();
        let et = expm(dav.generator().matrix());
        let rep = cpt_report(&Superoperator::from_matrix(2, et), 11);
        assert!(rep.min_choi_eig >= -1e-9, "min choi {}", rep.min_choi_eig);
        assert!(rep.trace_dev <= 1e-10);
        assert!(rep.herm_dev <= 1e-10);
    }

    #[test]
    fn cpt_report_identity_and_zero_time_semigroup() {
        let s = Superoperator::identity(3);
        let rep = cpt_report(&s, 3);
        assert!(rep.min_choi_eig >= -1e-14);
        assert!(rep.trace_dev == 0.0);
        assert!(rep.herm_dev == 0.0);

        let (sys, bath) = qubit_model();
        let dav = build_davies(&sys, &bath, 0.1).unwrap();
        let e0 = expm(&dav.k_super().matrix().scale(C64::new(0.0, 0.0)));
        assert!(e0.sub(&CMat::identity(4)).max_abs() < 1e-15);
    }

    #[test]
    fn heisenberg_dual_satisfies_trace_pairing() {
        let mut rng = SplitMix64::new(23);
        let n = 3;
        let m = CMat::from_fn(n * n, n * n, |_, _| rng.next_c64());
        let s = Superoperator::from_matrix(n, m);
        let d = s.heisenberg_dual();
        for _ in 0..5 {
            let rho = CMat::from_fn(n, n, |_, _| rng.next_c64());
            let x = CMat::from_fn(n, n, |_, _| rng.next_c64());
            let lhs = s.apply_to(&rho).matmul(&x).trace();
            let rhs = rho.matmul(&d.apply_to(&x)).trace();
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn exp_generator_preserves_hermiticity_over_time() {
        let (sys, bath) = qubit_model();
        let dav = build_davies(&sys, &bath, 0.1).unwrap();
        for &t in &[0.5, 3.0, 20.0] {
            let et = expm(&dav.generator().matrix().scale(C64::new(t, 0.0)));
            let s = Superoperator::from_matrix(2, et);
            assert!(s.hermiticity_preservation_dev(5, 6) <= 1e-10);
        }
    }

    #[test]
    fn superoperator_vectorization_matches_direct_action() {
        let mut rng = SplitMix64::new(31);
        let a = CMat::from_fn(3, 3, |_, _| rng.next_c64());
        let b = CMat::from_fn(3, 3, |_, _| rng.next_c64());
        let s = Superoperator::left_right(&a, &b);
        for _ in 0..4 {
            let rho = CMat::from_fn(3, 3, |_, _| rng.next_c64());
            let direct = a.matmul(&rho).matmul(&b);
            let via_vec = s.apply_to(&rho);
            assert!(direct.sub(&via_vec).max_abs() < 1e-12);
        }
    }

    #[test]
    fn composition_equals_matrix_product() {
        let mut rng = SplitMix64::new(37);
        let s1 = Superoperator::from_matrix(2, CMat::from_fn(4, 4, |_, _| rng.next_c64()));
        let s2 = Superoperator::from_matrix(2, CMat::from_fn(4, 4, |_, _| rng.next_c64()));
        let rho = CMat::from_fn(2, 2, |_, _| rng.next_c64());
        let lhs = s1.compose(&s2).apply_to(&rho);
        let rhs = s1.apply_to(&s2.apply_to(&rho));
        assert!(lhs.sub(&rhs).max_abs() < 1e-13);
    }
}
