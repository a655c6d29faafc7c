//! Bohr-sector decomposition of the Liouville space, level-shift operators
//! extracted from the sector blocks of the Davies generator, resonance
//! energies eps = e + lambda^2 a with their spectral projections, and the
//! decaying map W_t built from them.
//!
//! Picture convention: level shifts live in the Heisenberg (observable)
//! picture, where the free generator acts as +i[H_S, .] and sector `e`
//! is spanned by |phi_j><phi_k| with E_j - E_k = e. Positive imaginary part
//! of a resonance energy means decay of e^{i t eps}. Density-matrix
//! projections are obtained by transport across the trace pairing.

use crate::davies::{DaviesGenerator, Superoperator};
use crate::equilibrium::gibbs;
use crate::error::{Error, Result};
use crate::linalg::{vectorize, CMat, C64};
use crate::model::SystemSpec;

/// One Bohr sector: all ordered eigenindex pairs sharing the energy
/// difference E_j - E_k = e (within the decomposition tolerance).
#[derive(Debug, Clone)]
pub struct BohrSector {
    pub e: f64,
    /// Ordered pairs (j, k) of original eigenindices.
    pub pairs: Vec<(usize, usize)>,
}

impl BohrSector {
    pub fn dim(&self) -> usize {
        self.pairs.len()
    }
}

/// Partition all N^2 ordered eigenindex pairs into Bohr sectors.
pub fn bohr_decompose(sys: &SystemSpec, tol: f64) -> Result<Vec<BohrSector>> {
    if tol <= 0.0 {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let n = sys.dim();
    let ev = sys.eigvals();
    let mut diffs: Vec<(f64, (usize, usize))> = Vec::with_capacity(n * n);
    for j in 0..n {
        for k in 0..n {
            diffs.push((ev[j] - ev[k], (j, k)));
        }
    }
    diffs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    // ambiguity check against the raw spectrum: the minimal gap between
    // genuinely distinct Bohr values must exceed the clustering tolerance
    let scale = ev.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
    let fine = 1e-12 * scale;
    let mut min_gap = f64::INFINITY;
    for w in diffs.windows(2) {
        let gap = w[1].0 - w[0].0;
        if gap > fine {
            min_gap = min_gap.min(gap);
        }
    }
    if tol >= min_gap {
        return Err(Error::Structural(format!(
            "Bohr tolerance {tol} is not below the minimal nonzero Bohr gap {min_gap}; \
             sectors would be ambiguous"
        )));
    }
    let mut sectors: Vec<BohrSector> = Vec::new();
    for (e, pair) in diffs {
        match sectors.last_mut() {
            Some(s) if (e - s.e).abs() <= tol => {
                let m = s.pairs.len() as f64;
                s.e = (s.e * m + e) / (m + 1.0);
                s.pairs.push(pair);
            }
            _ => sectors.push(BohrSector { e, pairs: vec![pair] }),
        }
    }
    // canonical pair ordering within each sector
    for s in &mut sectors {
        s.pairs.sort();
        if s.e.abs() <= tol {
            s.e = 0.0;
        }
    }
    Ok(sectors)
}

/// Default Bohr tolerance used by the pipeline entry points.
pub const BOHR_TOL: f64 = 1e-8;

/// Level-shift operators: one dense block per Bohr sector, acting on the
/// sector coordinates (pair order as in the sector's `pairs`).
#[derive(Debug, Clone)]
pub struct LevelShift {
    pub sectors: Vec<BohrSector>,
    pub blocks: Vec<CMat>,
}

/// Extract the level-shift operators from the sector blocks of the Davies
/// generator: Lambda_e = -i (Heisenberg dual of K) restricted to sector e.
///
/// K commutes with the free Liouvillian, so its Heisenberg dual is exactly
/// block diagonal over Bohr sectors; a violation signals an over-coarse
/// decomposition tolerance or a broken generator.
pub fn level_shift(dav: &DaviesGenerator, sectors: &[BohrSector]) -> Result<LevelShift> {
    let comm = dav.liouville_s().commutator_rel_dev(dav.k_super());
    if comm > 1e-9 {
        return Err(Error::Structural(format!(
            "K does not commute with the free Liouvillian (relative deviation {comm:.3e})"
        )));
    }
    let n = dav.sys().dim();
    let k_heis_eig = to_eig_vec_coords(dav.sys(), &dav.k_super().heisenberg_dual());

    let k_scale = k_heis_eig.max_abs().max(1e-300);
    let mut blocks = Vec::with_capacity(sectors.len());
    // block-diagonality audit while slicing
    let sector_of = {
        let mut map = vec![usize::MAX; n * n];
        for (si, s) in sectors.iter().enumerate() {
            for &(j, k) in &s.pairs {
                map[j * n + k] = si;
            }
        }
        map
    };
    let mut off_block: f64 = 0.0;
    for row in 0..n * n {
        for col in 0..n * n {
            if sector_of[row] != sector_of[col] {
                off_block = off_block.max(k_heis_eig[(row, col)].norm());
            }
        }
    }
    if off_block > 1e-10 * k_scale {
        return Err(Error::Structural(format!(
            "Heisenberg generator is not block diagonal over Bohr sectors \
             (off-block magnitude {off_block:.3e} vs scale {k_scale:.3e}); \
             the Bohr tolerance is probably too coarse"
        )));
    }
    for s in sectors {
        let m = s.dim();
        let block = CMat::from_fn(m, m, |r, c| {
            let (jr, kr) = s.pairs[r];
            let (jc, kc) = s.pairs[c];
            k_heis_eig[(jr * n + kr, jc * n + kc)] * C64::new(0.0, -1.0)
        });
        blocks.push(block);
    }
    Ok(LevelShift {
        sectors: sectors.to_vec(),
        blocks,
    })
}

/// Superoperator conjugated into eigenbasis vec coordinates.
fn to_eig_vec_coords(sys: &SystemSpec, s: &Superoperator) -> CMat {
    let u = sys.eigvecs();
    let t = crate::linalg::kron(&u.adjoint(), &u.transpose());
    let t_inv = crate::linalg::kron(u, &u.conj());
    t.matmul(s.matrix()).matmul(&t_inv)
}

/// One resonance: sector energy e, label s, second-order correction a, and
/// the spectral projections in both pictures (computational-basis vec
/// coordinates).
#[derive(Debug, Clone)]
pub struct ResonanceEntry {
    pub e: f64,
    pub s: usize,
    pub a: C64,
    /// Heisenberg-picture spectral projection Q (acts on observables).
    pub q_heis: Superoperator,
    /// Schrodinger-picture dual projection P (acts on density matrices).
    pub p_schr: Superoperator,
    /// Marks the (e = 0, s = 1) entry carrying the stationary state.
    pub is_stationary: bool,
}

impl ResonanceEntry {
    /// eps(lambda) = e + lambda^2 a.
    pub fn epsilon(&self, lambda: f64) -> C64 {
        C64::new(self.e, 0.0) + self.a * (lambda * lambda)
    }
}

/// Resonance spectrum of a Davies generator.
#[derive(Debug, Clone)]
pub struct ResonanceData {
    pub entries: Vec<ResonanceEntry>,
    pub lambda: f64,
    /// Slowest strictly-decaying rate of W_t: min Im eps over non-stationary
    /// entries with nonnegative imaginary part.
    pub gamma_lambda: f64,
    /// min Im a over non-stationary entries.
    pub gamma_fgr: f64,
    pub fgr_holds: bool,
    pub sectors: Vec<BohrSector>,
    dim: usize,
    rho0_vec: Vec<C64>,
}

/// Condition-number cap above which a level-shift block is treated as
/// non-diagonalizable.
pub const EIGENVECTOR_COND_CAP: f64 = 1e10;

/// Diagonalize every level-shift block and assemble the resonance data.
pub fn resonance_energies(
    dav: &DaviesGenerator,
    ls: &LevelShift,
    lambda: f64,
) -> Result<ResonanceData> {
    let sys = dav.sys();
    let n = sys.dim();
    let rho0 = gibbs(sys.h_sys(), dav.beta())?;
    let rho0_vec = vectorize(rho0.rho());

    let u = sys.eigvecs();
    let t_fwd = crate::linalg::kron(&u.adjoint(), &u.transpose());
    let t_bwd = crate::linalg::kron(u, &u.conj());

    let k_scale = dav.k_super().matrix().max_abs().max(1e-300);
    let mut entries = Vec::new();
    for (si, sector) in ls.sectors.iter().enumerate() {
        let block = &ls.blocks[si];
        let m = sector.dim();
        let (evals, vecs, vecs_inv) = if block.max_abs() <= 1e-13 * k_scale {
            // zero block: eigenvectors are arbitrary; for the zero-energy
            // sector pick the Gibbs-adapted family so that the projections
            // reproduce the stationary structure exactly
            if sector.e == 0.0 {
                gibbs_adapted_zero_sector(sector, sys, &rho0_vec)
            } else {
                let id = CMat::identity(m);
                (vec![C64::new(0.0, 0.0); m], id.clone(), id)
            }
        } else {
            let (evals, vecs) = block.eig()?;
            let cond = vecs.cond2();
            if cond > EIGENVECTOR_COND_CAP {
                return Err(Error::Numeric(format!(
                    "level-shift block at e = {} is numerically non-diagonalizable \
                     (eigenvector condition number {cond:.3e})",
                    sector.e
                )));
            }
            let vinv = vecs.inverse();
            (evals, vecs, vinv)
        };

        // embed the rank-one sector projections into the full space
        let mut sector_entries: Vec<(C64, Superoperator)> = Vec::with_capacity(m);
        for s_idx in 0..m {
            let mut q_eig = CMat::zeros(n * n, n * n);
            for (r, &(jr, kr)) in sector.pairs.iter().enumerate() {
                for (c, &(jc, kc)) in sector.pairs.iter().enumerate() {
                    q_eig[(jr * n + kr, jc * n + kc)] = vecs[(r, s_idx)] * vecs_inv[(s_idx, c)];
                }
            }
            let q_comp = t_bwd.matmul(&q_eig).matmul(&t_fwd);
            sector_entries.push((evals[s_idx], Superoperator::from_matrix(n, q_comp)));
        }
        // deterministic s-labeling: ascending Im a, then ascending Re a
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&x, &y| {
            let (ax, ay) = (sector_entries[x].0, sector_entries[y].0);
            (ax.im, ax.re)
                .partial_cmp(&(ay.im, ay.re))
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        for (rank, &idx) in order.iter().enumerate() {
            let (a, q) = sector_entries[idx].clone();
            let p = q.heisenberg_dual();
            entries.push(ResonanceEntry {
                e: sector.e,
                s: rank + 1,
                a,
                q_heis: q,
                p_schr: p,
                is_stationary: false,
            });
        }
    }

    // stationary entry: within the zero sector, the projection that retains
    // the Gibbs direction
    let mut best = None;
    let mut best_overlap = -1.0;
    for (i, ent) in entries.iter().enumerate() {
        if ent.e != 0.0 {
            continue;
        }
        let img = ent.p_schr.apply_vec(&rho0_vec);
        let overlap = img.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if overlap > best_overlap {
            best_overlap = overlap;
            best = Some(i);
        }
    }
    let stationary_idx =
        best.ok_or_else(|| Error::Structural("no zero-energy Bohr sector found".into()))?;
    entries[stationary_idx].is_stationary = true;
    // relabel the zero sector so the stationary entry carries s = 1
    {
        let mut zero_rank = 1usize;
        let order: Vec<usize> = {
            let mut idxs: Vec<usize> = (0..entries.len()).filter(|&i| entries[i].e == 0.0).collect();
            idxs.sort_by_key(|&i| (!entries[i].is_stationary) as u8);
            idxs
        };
        for i in order {
            entries[i].s = zero_rank;
            zero_rank += 1;
        }
    }

    let mut gamma_fgr = f64::INFINITY;
    let mut gamma_lambda = f64::INFINITY;
    for ent in &entries {
        if ent.is_stationary {
            continue;
        }
        gamma_fgr = gamma_fgr.min(ent.a.im);
        let im_eps = ent.epsilon(lambda).im;
        if im_eps >= 0.0 {
            gamma_lambda = gamma_lambda.min(im_eps);
        }
    }
    if !gamma_fgr.is_finite() {
        gamma_fgr = 0.0;
    }
    if !gamma_lambda.is_finite() {
        gamma_lambda = 0.0;
    }
    let a_scale = entries
        .iter()
        .map(|e| e.a.norm())
        .fold(0.0f64, f64::max)
        .max(1e-300);
    let fgr_holds = gamma_fgr > 1e-10 * a_scale;

    Ok(ResonanceData {
        entries,
        lambda,
        gamma_lambda,
        gamma_fgr,
        fgr_holds,
        sectors: ls.sectors.clone(),
        dim: n,
        rho0_vec,
    })
}

/// Gibbs-adapted eigenbasis of an exactly-zero zero-energy block: the first
/// direction is the identity observable (whose dual is the Gibbs trace
/// projection), the rest complete the block biorthogonally.
fn gibbs_adapted_zero_sector(
    sector: &BohrSector,
    sys: &SystemSpec,
    rho0_vec: &[C64],
) -> (Vec<C64>, CMat, CMat) {
    let m = sector.dim();
    // coordinates of the identity observable and Gibbs state in sector basis
    // (eigenbasis coordinates: identity -> 1 at diagonal pairs, Gibbs ->
    // populations)
    let u = sys.eigvecs();
    let rho_eig = u
        .adjoint()
        .matmul(&crate::linalg::unvectorize(rho0_vec))
        .matmul(u);
    let mut right = vec![C64::new(0.0, 0.0); m];
    let mut left = vec![C64::new(0.0, 0.0); m];
    for (idx, &(j, k)) in sector.pairs.iter().enumerate() {
        if j == k {
            right[idx] = C64::new(1.0, 0.0);
        }
        left[idx] = rho_eig[(k, j)].conj();
    }
    // V: first column `right`, remaining columns an orthonormal basis of the
    // orthogonal complement of `left`
    let mut v = CMat::zeros(m, m);
    v.set_col(0, &right);
    let mut basis: Vec<Vec<C64>> = Vec::new();
    for seed in 0..m {
        if basis.len() == m - 1 {
            break;
        }
        let mut cand = vec![C64::new(0.0, 0.0); m];
        cand[seed] = C64::new(1.0, 0.0);
        // project out `left` and previous basis vectors
        let lp: C64 = left.iter().zip(&cand).map(|(l, c)| l.conj() * c).sum();
        let ln: f64 = left.iter().map(|l| l.norm_sqr()).sum();
        for i in 0..m {
            cand[i] -= left[i] * (lp / ln);
        }
        for b in &basis {
            let bp: C64 = b.iter().zip(&cand).map(|(x, c)| x.conj() * c).sum();
            for i in 0..m {
                cand[i] -= b[i] * bp;
            }
        }
        let norm: f64 = cand.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-8 {
            for c in &mut cand {
                *c /= norm;
            }
            basis.push(cand);
        }
    }
    for (col, b) in basis.iter().enumerate() {
        v.set_col(col + 1, b);
    }
    let vinv = v.inverse();
    (vec![C64::new(0.0, 0.0); m], v, vinv)
}

impl ResonanceData {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rho0_vec(&self) -> &[C64] {
        &self.rho0_vec
    }

    /// W_t = sum over non-stationary entries of e^{i t eps} P.
    pub fn w_map(&self, t: f64) -> Superoperator {
        let nn = self.dim * self.dim;
        let mut m = CMat::zeros(nn, nn);
        for ent in &self.entries {
            if ent.is_stationary {
                continue;
            }
            let phase = (C64::new(0.0, 1.0) * ent.epsilon(self.lambda) * t).exp();
            m = m.add(&ent.p_schr.matrix().scale(phase));
        }
        Superoperator::from_matrix(self.dim, m)
    }

    /// Full resonance approximation rho_inf tr(rho) + W_t rho.
    pub fn full_approximation(&self, rho_inf: &CMat, t: f64, rho: &CMat) -> CMat {
        let w = self.w_map(t);
        let tr = rho.trace();
        w.apply_to(rho).add(&rho_inf.scale(tr))
    }

    /// The spectral set { i eps_j } that must reproduce spec(G).
    pub fn generator_spectrum(&self) -> Vec<C64> {
        self.entries
            .iter()
            .map(|ent| C64::new(0.0, 1.0) * ent.epsilon(self.lambda))
            .collect()
    }
}

/// Max over `a` of the distance to the closest remaining element of `b`
/// (greedy multiset matching; adequate for well-separated spectra).
pub fn multiset_match_dev(a: &[C64], b: &[C64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut used = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for &x in a {
        let mut best = f64::INFINITY;
        let mut best_i = 0;
        for (i, &y) in b.iter().enumerate() {
            if !used[i] {
                let d = (x - y).norm();
                if d < best {
                    best = d;
                    best_i = i;
                }
            }
        }
        used[best_i] = true;
        worst = worst.max(best);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::davies::build_davies;
    use crate::model::{sigma_x, BathSpec, SystemSpec};
    use crate::util::SplitMix64;

    fn qubit() -> (SystemSpec, BathSpec) {
        (
            SystemSpec::qubit(1.0, sigma_x()).unwrap(),
            BathSpec::new_analytic(1.0, 0, 1, 1.0).unwrap(),
        )
    }

    #[test]
    fn bohr_decompose_qubit() {
        let (sys, _) = qubit();
        let sectors = bohr_decompose(&sys, BOHR_TOL).unwrap();
        let dims: Vec<(f64, usize)> = sectors.iter().map(|s| (s.e, s.dim())).collect();
        assert_eq!(dims.len(), 3);
        assert_eq!(dims[0], (-1.0, 1));
        assert_eq!(dims[1], (0.0, 2));
        assert_eq!(dims[2], (1.0, 1));
    }

    #[test]
    fn bohr_decompose_trivial_hamiltonian() {
        let sys = SystemSpec::new(CMat::zeros(3, 3), CMat::zeros(3, 3)).unwrap();
        let sectors = bohr_decompose(&sys, BOHR_TOL).unwrap();
        assert_eq!(sectors.len(), 1);
        assert_eq!(sectors[0].dim(), 9);
        assert_eq!(sectors[0].e, 0.0);
    }

    #[test]
    fn bohr_decompose_three_level_enumeration() {
        let sys = SystemSpec::three_level(1.0, 3.0, CMat::zeros(3, 3)).unwrap();
        let sectors = bohr_decompose(&sys, BOHR_TOL).unwrap();
        let got: Vec<(f64, usize)> = sectors.iter().map(|s| (s.e, s.dim())).collect();
        let expect = vec![
            (-3.0, 1),
            (-2.0, 1),
            (-1.0, 1),
            (0.0, 3),
            (1.0, 1),
            (2.0, 1),
            (3.0, 1),
        ];
        assert_eq!(got, expect);
    }

    #[test]
    fn bohr_decompose_rejects_coarse_tolerance() {
        let (sys, _) = qubit();
        let r = bohr_decompose(&sys, 1.5);
        assert!(matches!(r, Err(Error::Structural(_))));
    }

    #[test]
    fn level_shift_zero_for_decoupled_system() {
        let sys = SystemSpec::qubit(1.0, CMat::zeros(2, 2)).unwrap();
        let bath = BathSpec::new_analytic(1.0, 0, 1, 1.0).unwrap();
        let dav = build_davies(&sys, &bath, 0.1).unwrap();
        let sectors = bohr_decompose(&sys, BOHR_TOL).unwrap();
        let ls = level_shift(&dav, &sectors).unwrap();
        for b in &ls.blocks {
            assert_eq!(b.max_abs(), 0.0);
        }
    }

    #[test]
    fn qubit_zero_sector_eigenvalues() {
        let (sys, bath) = qubit();
        let dav = build_davies(&sys, &bath, 0.1).unwrap();
        let sectors = bohr_decompose(&sys, BOHR_TOL).unwrap();
        let ls = level_shift(&dav, &sectors).unwrap();
        let zero_idx = ls.sectors.iter().position(|s| s.e == 0.0).unwrap();
        let (evals, _) = ls.blocks[zero_idx].eig().unwrap();
        let total = bath.h_hat(1.0) + bath.h_hat(-1.0);
        // {0, i (h(D) + h(-D))}
        let mut sorted = evals.clone();
        sorted.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        assert!(sorted[0].norm() < 1e-12);
        assert!((sorted[1] - C64::new(0.0, total)).norm() < 1e-12);
    }

    #[test]
    fn spectrum_reassembly_matches_generator() {
        let (sys, bath) = qubit();
        let lambda = 0.1;
        let dav = build_davies(&sys, &bath, lambda).unwrap();
        let sectors = bohr_decompose(&sys, BOHR_TOL).unwrap();
        let ls = level_shift(&dav, &sectors).unwrap();
        let rd = resonance_energies(&dav, &ls, lambda).unwrap();
        let (gen_evals, _) = dav.generator().matrix().eig().unwrap();
        let dev = multiset_match_dev(&rd.generator_spectrum(), &gen_evals);
        assert!(dev < 1e-8, "spectrum mismatch {dev}");
    }

    #[test]
    fn resonances_at_zero_coupling_are_bohr_energies() {
        let (sys, bath) = qubit();
        let dav = build_davies(&sys, &bath, 0.0).unwrap();
        let sectors = bohr_decompose(&sys, BOHR_TOL).unwrap();
        let ls = level_shift(&dav, &sectors).unwrap();
        let rd = resonance_energies(&dav, &ls, 0.0).unwrap();
        for ent in &rd.entries {
            let eps = ent.epsilon(0.0);
            assert!((eps - C64::new(ent.e, 0.0)).norm() < 1e-14);
        }
        assert_eq!(rd.gamma_lambda, 0.0);
    }

    #[test]
    fn decoupled_system_fails_fermi_golden_rule() {
        let sys = SystemSpec::qubit(1.0, CMat::zeros(2, 2)).unwrap();
        let bath = BathSpec::new_analytic(1.0, 0, 1, 1.0).unwrap();
        let dav = build_davies(&sys, &bath, 0.1).unwrap();
        let sectors = bohr_decompose(&sys, BOHR_TOL).unwrap();
        let ls = level_shift(&dav, &sectors).unwrap();
        let rd = resonance_energies(&dav, &ls, 0.1).unwrap();
        assert_eq!(rd.gamma_fgr, 0.0);
        assert!(!rd.fgr_holds);
    }

    #[test]
    fn qubit_fgr_rate_is_half_total_rate() {
        let (sys, bath) = qubit();
        let dav = build_davies(&sys, &bath, 0.1).unwrap();
        let sectors = bohr_decompose(&sys, BOHR_TOL).unwrap();
        let ls = level_shift(&dav, &sectors).unwrap();
        let rd = resonance_energies(&dav, &ls, 0.1).unwrap();
        let expect = (bath.h_hat(1.0) + bath.h_hat(-1.0)) / 2.0;
        assert!(
            (rd.gamma_fgr - expect).abs() < 1e-12,
            "{} vs {}",
            rd.gamma_fgr,
            expect
        );
        assert!(rd.fgr_holds);
        // attained on the coherence sectors
        let attained: Vec<f64> = rd
            .entries
            .iter()
            .filter(|e| !e.is_stationary && (e.a.im - rd.gamma_fgr).abs() < 1e-12)
            .map(|e| e.e)
            .collect();
        assert!(attained.iter().all(|&e| e != 0.0));
        // gamma(lambda) = lambda^2 gamma_fgr for the exactly-quadratic family
        assert!((rd.gamma_lambda - 0.01 * rd.gamma_fgr).abs() < 1e-15);
    }

    #[test]
    fn projections_are_disjoint_and_sum_to_w0() {
        let (sys, bath) = qubit();
        let dav = build_davies(&sys, &bath, 0.1).unwrap();
        let sectors = bohr_decompose(&sys, BOHR_TOL).unwrap();
        let ls = level_shift(&dav, &sectors).unwrap();
        let rd = resonance_energies(&dav, &ls, 0.1).unwrap();

        for (i, a) in rd.entries.iter().enumerate() {
            for (j, b) in rd.entries.iter().enumerate() {
                let prod = a.p_schr.compose(&b.p_schr);
                let expect = if i == j {
                    a.p_schr.matrix().clone()
                } else {
                    CMat::zeros(4, 4)
                };
                let dev = prod.matrix().sub(&expect).max_abs();
                assert!(dev < 1e-9, "projection algebra dev {dev} at ({i},{j})");
            }
        }

        // sum over non-stationary = identity - rho0 <tr|
        let mut sum = CMat::zeros(4, 4);
        for ent in rd.entries.iter().filter(|e| !e.is_stationary) {
            sum = sum.add(ent.p_schr.matrix());
        }
        let w0_expect = w0_matrix(&rd);
        assert!(sum.sub(&w0_expect).max_abs() < 1e-9);

        // and W_0 itself matches
        let w0 = rd.w_map(0.0);
        assert!(w0.matrix().sub(&w0_expect).max_abs() < 1e-9);

        // per sector, the Heisenberg projections sum to the sector projector
        let n = 2;
        let u = sys.eigvecs();
        let t_fwd = crate::linalg::kron(&u.adjoint(), &u.transpose());
        let t_bwd = crate::linalg::kron(u, &u.conj());
        for sector in &rd.sectors {
            let mut q_sum = CMat::zeros(n * n, n * n);
            for ent in rd.entries.iter().filter(|p| p.e == sector.e) {
                q_sum = q_sum.add(ent.q_heis.matrix());
            }
            let mut expect = CMat::zeros(n * n, n * n);
            for &(j, k) in &sector.pairs {
                expect[(j * n + k, j * n + k)] = C64::new(1.0, 0.0);
            }
            let expect = t_bwd.matmul(&expect).matmul(&t_fwd);
            assert!(
                q_sum.sub(&expect).max_abs() < 1e-9,
                "sector {} projector sum",
                sector.e
            );
        }
    }

    fn w0_matrix(rd: &ResonanceData) -> CMat {
        let n = rd.dim();
        let rho0 = rd.rho0_vec();
        let mut m = CMat::identity(n * n);
        // subtract rho0 <tr|: column (i,i) loses rho0
        for col_i in 0..n {
            let col = col_i * n + col_i;
            for row in 0..n * n {
                m[(row, col)] -= rho0[row];
            }
        }
        m
    }

    #[test]
    fn w_map_is_a_semigroup_and_dies_at_long_times() {
        let (sys, bath) = qubit();
        let lambda = 0.1;
        let dav = build_davies(&sys, &bath, lambda).unwrap();
        let sectors = bohr_decompose(&sys, BOHR_TOL).unwrap();
        let ls = level_shift(&dav, &sectors).unwrap();
        let rd = resonance_energies(&dav, &ls, lambda).unwrap();

        let mut rng = SplitMix64::new(9);
        for _ in 0..3 {
            let t = 5.0 * rng.next_f64();
            let s = 5.0 * rng.next_f64();
            let lhs = rd.w_map(t + s);
            let rhs = rd.w_map(t).compose(&rd.w_map(s));
            let dev = lhs.matrix().sub(rhs.matrix()).max_abs();
            assert!(dev < 1e-9, "semigroup dev {dev}");
        }

        let t_dead = 50.0 / (lambda * lambda * rd.gamma_fgr);
        let w = rd.w_map(t_dead);
        assert!(w.matrix().max_abs() <= 1e-12);
    }

    #[test]
    fn conjugate_sectors_carry_conjugate_resonances() {
        let (sys, bath) = qubit();
        let dav = build_davies(&sys, &bath, 0.1).unwrap();
        let sectors = bohr_decompose(&sys, BOHR_TOL).unwrap();
        let ls = level_shift(&dav, &sectors).unwrap();
        let rd = resonance_energies(&dav, &ls, 0.1).unwrap();
        for ent in &rd.entries {
            if ent.e <= 0.0 {
                continue;
            }
            // find the partner sector at -e
            let partner: Vec<&ResonanceEntry> =
                rd.entries.iter().filter(|p| p.e == -ent.e).collect();
            let target = -ent.a.conj();
            let best = partner
                .iter()
                .map(|p| (p.a - target).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-9, "pairing deviation {best}");
        }
    }

    #[test]
    fn trivial_hamiltonian_still_yields_resonance_data() {
        // single Bohr sector of dimension N^2; only the zero-frequency
        // channel is active
        let sys = SystemSpec::new(CMat::zeros(2, 2), sigma_x()).unwrap();
        let bath = BathSpec::new_analytic(1.0, 0, 1, 1.0).unwrap();
        let dav = build_davies(&sys, &bath, 0.1).unwrap();
        let sectors = bohr_decompose(&sys, BOHR_TOL).unwrap();
        assert_eq!(sectors.len(), 1);
        let ls = level_shift(&dav, &sectors).unwrap();
        let rd = resonance_energies(&dav, &ls, 0.1).unwrap();
        assert_eq!(rd.entries.len(), 4);
        assert!(rd.entries.iter().any(|e| e.is_stationary));
    }

    #[test]
    fn defective_level_shift_block_is_rejected() {
        let (sys, bath) = qubit();
        let dav = build_davies(&sys, &bath, 0.1).unwrap();
        let sectors = bohr_decompose(&sys, BOHR_TOL).unwrap();
        let mut ls = level_shift(&dav, &sectors).unwrap();
        // replace the zero sector with a Jordan block: not diagonalizable
        let zero_idx = ls.sectors.iter().position(|s| s.e == 0.0).unwrap();
        let mut jordan = CMat::zeros(2, 2);
        jordan[(0, 1)] = C64::new(1.0, 0.0);
        ls.blocks[zero_idx] = jordan;
        match resonance_energies(&dav, &ls, 0.1) {
            Err(Error::Numeric(msg)) => assert!(msg.contains("non-diagonalizable"), "{msg}"),
            other => panic!("expected non-diagonalizable error, got {other:?}"),
        }
    }

    #[test]
    fn stationary_projection_is_gibbs_times_trace() {
        let (sys, bath) = qubit();
        let dav = build_davies(&sys, &bath, 0.1).unwrap();
        let sectors = bohr_decompose(&sys, BOHR_TOL).unwrap();
        let ls = level_shift(&dav, &sectors).unwrap();
        let rd = resonance_energies(&dav, &ls, 0.1).unwrap();
        let stat = rd.entries.iter().find(|e| e.is_stationary).unwrap();
        assert!(stat.a.norm() < 1e-12, "stationary correction {}", stat.a);
        assert_eq!(stat.s, 1);
        // P_(0,1) rho = rho0 tr(rho) for random rho
        let mut rng = SplitMix64::new(77);
        let rho = crate::util::random_density(2, &mut rng);
        let img = stat.p_schr.apply_to(&rho);
        let expect = crate::linalg::unvectorize(rd.rho0_vec());
        assert!(img.sub(&expect).max_abs() < 1e-10);
    }
}
