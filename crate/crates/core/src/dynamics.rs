//! Time propagation under any constructed generator, population tracks in
//! the energy basis, and quantitative trajectory comparison in trace norm.

use crate::davies::Superoperator;
use crate::error::{Error, Result};
use crate::linalg::{expm, unvectorize, vectorize, CMat, C64};

/// Which pipeline produced a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorTag {
    Davies,
    ResonanceWt,
    MFull,
    MdPopulations,
    Oracle,
}

impl GeneratorTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            GeneratorTag::Davies => "davies",
            GeneratorTag::ResonanceWt => "wt",
            GeneratorTag::MFull => "m",
            GeneratorTag::MdPopulations => "md",
            GeneratorTag::Oracle => "oracle",
        }
    }
}

/// A propagated state sequence on an ascending time grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<CMat>,
    pub tag: GeneratorTag,
}

impl Trajectory {
    /// Worst trace defect, hermiticity defect and most negative eigenvalue
    /// across all states: (trace_dev, herm_dev, min_eig).
    pub fn state_quality(&self) -> (f64, f64, f64) {
        let mut trace_dev: f64 = 0.0;
        let mut herm_dev: f64 = 0.0;
        let mut min_eig = f64::INFINITY;
        for s in &self.states {
            trace_dev = trace_dev.max((s.trace() - C64::new(1.0, 0.0)).norm());
            herm_dev = herm_dev.max(s.herm_dev());
            let (evals, _) = s.hermitize().eigh();
            min_eig = min_eig.min(evals[0]);
        }
        (trace_dev, herm_dev, min_eig)
    }
}

/// Eigendecomposition cap above which exponentials fall back to scaling
/// and squaring.
pub const PROPAGATOR_COND_CAP: f64 = 1e8;

/// Precomputed exponential engine for one generator. Uses the spectral
/// decomposition when the eigenvector basis is well conditioned, otherwise
/// a Pade scaling-and-squaring exponential per time point (the generator is
/// non-normal, so defective or nearly-defective cases do occur).
#[derive(Debug, Clone)]
pub struct Propagator {
    dim: usize,
    gen: CMat,
    spectral: Option<SpectralForm>,
}

#[derive(Debug, Clone)]
struct SpectralForm {
    evals: Vec<C64>,
    vecs: CMat,
    vecs_inv: CMat,
}

impl Propagator {
    pub fn new(gen: &Superoperator) -> Result<Self> {
        let m = gen.matrix();
        let spectral = match m.eig() {
            Ok((evals, vecs)) => {
                let cond = vecs.cond2();
                if cond.is_finite() && cond <= PROPAGATOR_COND_CAP {
                    Some(SpectralForm {
                        evals,
                        vecs_inv: vecs.inverse(),
                        vecs,
                    })
                } else {
                    None
                }
            }
            Err(_) => None,
        };
        Ok(Self {
            dim: gen.dim(),
            gen: m.clone(),
            spectral,
        })
    }

    pub fn uses_spectral_form(&self) -> bool {
        self.spectral.is_some()
    }

    /// e^{t G} as a superoperator.
    pub fn exp_t(&self, t: f64) -> Superoperator {
        match &self.spectral {
            Some(sf) => {
                let nn = self.gen.nrows();
                let mut phased = CMat::zeros(nn, nn);
                for (j, &mu) in sf.evals.iter().enumerate() {
                    let w = (mu * t).exp();
                    for i in 0..nn {
                        phased[(i, j)] = sf.vecs[(i, j)] * w;
                    }
                }
                Superoperator::from_matrix(self.dim, phased.matmul(&sf.vecs_inv))
            }
            None => Superoperator::from_matrix(self.dim, expm(&self.gen.scale(C64::new(t, 0.0)))),
        }
    }

    /// e^{t G} v for a vectorized state.
    pub fn apply_exp_t(&self, t: f64, v: &[C64]) -> Vec<C64> {
        match &self.spectral {
            Some(sf) => {
                let mut c = sf.vecs_inv.apply(v);
                for (j, &mu) in sf.evals.iter().enumerate() {
                    c[j] *= (mu * t).exp();
                }
                sf.vecs.apply(&c)
            }
            None => self.exp_t(t).apply_vec(v),
        }
    }
}

const DENSITY_TOL: f64 = 1e-9;

/// Check that `rho` is a density matrix within propagation tolerances.
pub fn validate_density(rho: &CMat) -> Result<()> {
    if (rho.trace() - C64::new(1.0, 0.0)).norm() > 1e-9 {
        return Err(Error::Domain(format!(
            "initial state must have unit trace, got {}",
            rho.trace()
        )));
    }
    if rho.herm_dev() > 1e-9 {
        return Err(Error::Domain("initial state must be hermitian".into()));
    }
    let (evals, _) = rho.hermitize().eigh();
    if evals[0] < -DENSITY_TOL {
        return Err(Error::Domain(format!(
            "initial state must be positive semidefinite; min eigenvalue {}",
            evals[0]
        )));
    }
    Ok(())
}

/// Propagate rho0 through e^{t gen} on the given time grid.
pub fn propagate(gen: &Superoperator, rho0: &CMat, times: &[f64]) -> Result<Trajectory> {
    propagate_tagged(gen, rho0, times, GeneratorTag::Davies)
}

pub fn propagate_tagged(
    gen: &Superoperator,
    rho0: &CMat,
    times: &[f64],
    tag: GeneratorTag,
) -> Result<Trajectory> {
    validate_density(rho0)?;
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("time grid must be ascending".into()));
    }
    let prop = Propagator::new(gen)?;
    let v0 = vectorize(rho0);
    let states: Vec<CMat> = times
        .iter()
        .map(|&t| unvectorize(&prop.apply_exp_t(t, &v0)))
        .collect();
    Ok(Trajectory {
        times: times.to_vec(),
        states,
        tag,
    })
}

/// Diagonal entries of each state in the given orthonormal basis
/// (columns), i.e. the energy populations when handed the H_S eigenbasis.
pub fn populations(traj: &Trajectory, basis: &CMat) -> Result<Vec<Vec<f64>>> {
    let n = basis.nrows();
    let ortho_dev = basis
        .adjoint()
        .matmul(basis)
        .sub(&CMat::identity(n))
        .max_abs();
    if ortho_dev > 1e-10 {
        return Err(Error::Domain(format!(
            "population basis must be orthonormal (deviation {ortho_dev:.3e})"
        )));
    }
    Ok(traj
        .states
        .iter()
        .map(|rho| {
            let in_basis = basis.adjoint().matmul(rho).matmul(basis);
            (0..n).map(|k| in_basis[(k, k)].re).collect()
        })
        .collect())
}

/// Per-time trace-norm distances and their supremum.
#[derive(Debug, Clone)]
pub struct CompareReport {
    pub per_time: Vec<f64>,
    pub sup: f64,
}

/// Trace-norm distance between two trajectories on a shared grid.
pub fn compare(a: &Trajectory, b: &Trajectory) -> Result<CompareReport> {
    if a.times.len() != b.times.len()
        || a.times
            .iter()
            .zip(&b.times)
            .any(|(x, y)| (x - y).abs() > 1e-12 * x.abs().max(1.0))
    {
        return Err(Error::GridMismatch(format!(
            "lengths {} vs {}",
            a.times.len(),
            b.times.len()
        )));
    }
    let per_time: Vec<f64> = a
        .states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| x.sub(y).trace_norm())
        .collect();
    let sup = per_time.iter().fold(0.0f64, |acc, &d| acc.max(d));
    Ok(CompareReport { per_time, sup })
}

/// Default time grid: 0 followed by log-spaced points up to
/// t_max = horizon_factor / (lambda^2 gamma_fgr), resolving both the free
/// oscillation scale and the relaxation scale.
pub fn default_time_grid(lambda: f64, gamma_fgr: f64, points: usize, horizon_factor: f64) -> Vec<f64> {
    let rate = (lambda * lambda * gamma_fgr).max(1e-12);
    let t_max = horizon_factor / rate;
    log_time_grid(t_max, points)
}

/// 0 followed by (points - 1) log-spaced times in [t_max * 1e-3, t_max].
pub fn log_time_grid(t_max: f64, points: usize) -> Vec<f64> {
    assert!(points >= 2);
    let mut ts = Vec::with_capacity(points);
    ts.push(0.0);
    let lo = (t_max * 1e-3).ln();
    let hi = t_max.ln();
    for k in 0..points - 1 {
        let x = lo + (hi - lo) * k as f64 / (points - 2).max(1) as f64;
        ts.push(x.exp());
    }
    ts
}
