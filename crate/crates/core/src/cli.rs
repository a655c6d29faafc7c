//! Command implementations behind the binary: each takes a validated
//! configuration and an output directory, writes CSV/JSON artifacts with
//! fixed 17-significant-digit float formatting (identical configs produce
//! byte-identical files), and returns human-readable summary lines.

use std::path::Path;

use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::davies::{build_davies, cpt_report, DaviesGenerator, Superoperator};
use crate::dynamics::{self, log_time_grid, propagate_tagged, GeneratorTag, Trajectory};
use crate::equilibrium::{gibbs, reduced_gibbs_second_order, renormalized_generators};
use crate::error::{Error, Result};
use crate::linalg::{vectorize, CMat, C64};
use crate::oracle::{auto_omega_max, discretize_bath, exact_reduced_dynamics, OracleConfig};
use crate::resonance::{bohr_decompose, level_shift, multiset_match_dev, resonance_energies, ResonanceData};
use crate::util::{fmt_f64, loglog_slope, random_density, random_hermitian, SplitMix64};

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), contents)?;
    Ok(())
}

fn mat_json(m: &CMat) -> Value {
    let re: Vec<Vec<f64>> = (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].re).collect())
        .collect();
    let im: Vec<Vec<f64>> = (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].im).collect())
        .collect();
    json!({ "re": re, "im": im })
}

fn mat_from_json(v: &Value) -> Result<CMat> {
    let parse = |key: &str| -> Result<Vec<Vec<f64>>> {
        serde_json::from_value(v[key].clone())
            .map_err(|e| Error::Config(format!("matrix field {key}: {e}")))
    };
    let re = parse("re")?;
    let im = parse("im")?;
    let rows = re.len();
    let cols = re.first().map(|r| r.len()).unwrap_or(0);
    if im.len() != rows || im.iter().any(|r| r.len() != cols) {
        return Err(Error::Config("matrix re/im shape mismatch".into()));
    }
    Ok(CMat::from_fn(rows, cols, |i, j| C64::new(re[i][j], im[i][j])))
}

/// Resonance pipeline for one coupling value.
fn resonances_for(cfg: &RunConfig, lambda: f64) -> Result<(DaviesGenerator, ResonanceData)> {
    let dav = build_davies(&cfg.sys, &cfg.bath, lambda)?;
    let sectors = bohr_decompose(&cfg.sys, cfg.bohr_tol)?;
    let ls = level_shift(&dav, &sectors)?;
    let rd = resonance_energies(&dav, &ls, lambda)?;
    Ok((dav, rd))
}

fn time_grid(cfg: &RunConfig, lambda: f64, gamma_fgr: f64) -> Vec<f64> {
    let t_max = if cfg.time.t_max > 0.0 {
        cfg.time.t_max
    } else {
        let rate = (lambda * lambda * gamma_fgr).max(1e-6);
        20.0 / rate
    };
    match cfg.time.kind.as_str() {
        "linear" => (0..cfg.time.points)
            .map(|k| t_max * k as f64 / (cfg.time.points - 1) as f64)
            .collect(),
        _ => log_time_grid(t_max, cfg.time.points),
    }
}

/// `generator`: write generator.json and cpt_report.csv.
pub fn cmd_generator(cfg: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let lambda = cfg.lambdas[0];
    let (dav, rd) = resonances_for(cfg, lambda)?;

    let jumps: Vec<Value> = dav
        .jumps()
        .iter()
        .map(|j| json!({ "rate": j.rate, "operator": mat_json(&j.operator) }))
        .collect();
    let rates: Vec<Value> = dav
        .rates()
        .iter()
        .map(|(e, r)| json!({ "bohr_frequency": e, "h_hat": r }))
        .collect();
    let doc = json!({
        "dim": cfg.sys.dim(),
        "lambda": lambda,
        "beta": cfg.bath.beta(),
        "h_sys": mat_json(cfg.sys.h_sys()),
        "coupling": mat_json(cfg.sys.coupling()),
        "k_super": mat_json(dav.k_super().matrix()),
        "liouville_s": mat_json(dav.liouville_s().matrix()),
        "generator": mat_json(dav.generator().matrix()),
        "lamb_shift": mat_json(dav.lamb_shift()),
        "jumps": jumps,
        "rates": rates,
    });
    write_file(out, "generator.json", &serde_json::to_string_pretty(&doc).unwrap())?;

    let times = time_grid(cfg, lambda, rd.gamma_fgr);
    let prop = dynamics::Propagator::new(&dav.generator())?;
    let mut csv = String::from("t,min_choi_eig,trace_dev\n");
    for &t in &times {
        let et = prop.exp_t(t);
        let rep = cpt_report(&et, cfg.seed);
        csv.push_str(&format!(
            "{},{},{}\n",
            fmt_f64(t),
            fmt_f64(rep.min_choi_eig),
            fmt_f64(rep.trace_dev)
        ));
    }
    write_file(out, "cpt_report.csv", &csv)?;

    Ok(vec![
        format!(
            "generator: dim {}, lambda {}, {} jump channels, gamma_FGR {:.6e}",
            cfg.sys.dim(),
            lambda,
            dav.jumps().len(),
            rd.gamma_fgr
        ),
        format!("wrote generator.json, cpt_report.csv to {}", out.display()),
    ])
}

/// Re-ingest generator.json; used by the round-trip check.
pub fn load_generator_json(path: &Path) -> Result<(usize, f64, CMat, CMat, CMat)> {
    let text = std::fs::read_to_string(path)?;
    let doc: Value =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("generator.json: {e}")))?;
    let dim = doc["dim"]
        .as_u64()
        .ok_or_else(|| Error::Config("generator.json: missing dim".into()))? as usize;
    let lambda = doc["lambda"]
        .as_f64()
        .ok_or_else(|| Error::Config("generator.json: missing lambda".into()))?;
    let k = mat_from_json(&doc["k_super"])?;
    let gen = mat_from_json(&doc["generator"])?;
    let lamb = mat_from_json(&doc["lamb_shift"])?;
    Ok((dim, lambda, k, gen, lamb))
}

/// `resonances`: one row per (e, s) plus a summary line.
pub fn cmd_resonances(cfg: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let lambda = cfg.lambdas[0];
    let (_, rd) = resonances_for(cfg, lambda)?;
    let mut rows: Vec<&crate::resonance::ResonanceEntry> = rd.entries.iter().collect();
    rows.sort_by(|a, b| {
        (a.e, a.s)
            .partial_cmp(&(b.e, b.s))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut csv = String::from("e,s,re_a,im_a,re_eps,im_eps\n");
    for ent in &rows {
        let eps = ent.epsilon(lambda);
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_f64(ent.e),
            ent.s,
            fmt_f64(ent.a.re),
            fmt_f64(ent.a.im),
            fmt_f64(eps.re),
            fmt_f64(eps.im)
        ));
    }
    csv.push_str(&format!(
        "# gamma_lambda={} gamma_fgr={} fgr_holds={}\n",
        fmt_f64(rd.gamma_lambda),
        fmt_f64(rd.gamma_fgr),
        rd.fgr_holds
    ));
    write_file(out, "resonances.csv", &csv)?;
    Ok(vec![
        format!(
            "resonances: {} entries, gamma(lambda) {:.6e}, gamma_FGR {:.6e}, FGR holds: {}",
            rd.entries.len(),
            rd.gamma_lambda,
            rd.gamma_fgr,
            rd.fgr_holds
        ),
        format!("wrote resonances.csv to {}", out.display()),
    ])
}

/// Default initial state: the highest-energy eigenstate (deterministic and
/// maximally off-equilibrium).
fn initial_state(cfg: &RunConfig) -> CMat {
    let n = cfg.sys.dim();
    let top = cfg.sys.eigvecs().col(n - 1);
    let mut rho = CMat::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            rho[(a, b)] = top[a] * top[b].conj();
        }
    }
    rho
}

/// `propagate`: trajectory.csv under the configured generator.
pub fn cmd_propagate(cfg: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let lambda = cfg.lambdas[0];
    let (dav, rd) = resonances_for(cfg, lambda)?;
    let rho0 = initial_state(cfg);
    let mut messages = Vec::new();

    let mut times = time_grid(cfg, lambda, rd.gamma_fgr);
    let traj: Trajectory = match cfg.generator_tag.as_str() {
        "davies" => propagate_tagged(&dav.generator(), &rho0, &times, GeneratorTag::Davies)?,
        "m" => {
            let gens = renormalized_generators(&cfg.sys, &cfg.bath, lambda)?;
            propagate_tagged(&gens.m_full, &rho0, &times, GeneratorTag::MFull)?
        }
        "md" => {
            let gens = renormalized_generators(&cfg.sys, &cfg.bath, lambda)?;
            let scaled = gens.m_d.scale(C64::new(lambda * lambda, 0.0));
            propagate_tagged(&scaled, &rho0, &times, GeneratorTag::MdPopulations)?
        }
        "wt" => {
            let rho_inf = reduced_gibbs_second_order(&cfg.sys, &cfg.bath, lambda)?;
            let states: Vec<CMat> = times
                .iter()
                .map(|&t| rd.full_approximation(rho_inf.rho(), t, &rho0))
                .collect();
            Trajectory {
                times: times.clone(),
                states,
                tag: GeneratorTag::ResonanceWt,
            }
        }
        "oracle" => {
            let ocfg = cfg.oracle_config();
            let omega_max = if cfg.oracle.omega_max > 0.0 {
                cfg.oracle.omega_max
            } else {
                auto_omega_max(&cfg.bath, ocfg.support_tail_tol)?
            };
            let fm = discretize_bath(&cfg.bath, cfg.oracle.n_modes, omega_max, cfg.oracle.cutoff, &ocfg)?;
            let t_rec = fm.recurrence_window();
            if times.last().copied().unwrap_or(0.0) > t_rec / 2.0 {
                messages.push(format!(
                    "warning: time grid clipped to the recurrence half-window {:.4}",
                    t_rec / 2.0
                ));
                times = (0..cfg.time.points)
                    .map(|k| t_rec / 2.0 * k as f64 / (cfg.time.points - 1) as f64)
                    .collect();
            }
            exact_reduced_dynamics(&cfg.sys, &fm, lambda, &rho0, &times, &ocfg)?
        }
        other => return Err(Error::Config(format!("unknown generator tag {other}"))),
    };

    let n = cfg.sys.dim();
    let mut header = String::from("t");
    for i in 0..n {
        for j in 0..n {
            header.push_str(&format!(",re_{i}_{j},im_{i}_{j}"));
        }
    }
    for k in 0..n {
        header.push_str(&format!(",pop_{k}"));
    }
    let mut csv = header + "\n";
    let pops = dynamics::populations(&traj, cfg.sys.eigvecs())?;
    for (ti, &t) in traj.times.iter().enumerate() {
        let mut row = fmt_f64(t);
        let s = &traj.states[ti];
        for i in 0..n {
            for j in 0..n {
                row.push_str(&format!(",{},{}", fmt_f64(s[(i, j)].re), fmt_f64(s[(i, j)].im)));
            }
        }
        for k in 0..n {
            row.push_str(&format!(",{}", fmt_f64(pops[ti][k])));
        }
        csv.push_str(&row);
        csv.push('\n');
    }
    write_file(out, "trajectory.csv", &csv)?;
    messages.push(format!(
        "propagated {} states under `{}` up to t = {:.4}",
        traj.times.len(),
        cfg.generator_tag,
        traj.times.last().copied().unwrap_or(0.0)
    ));
    messages.push(format!("wrote trajectory.csv to {}", out.display()));
    Ok(messages)
}

/// `equilibrium`: equilibrium.json with the bare, second-order and
/// renormalized data.
pub fn cmd_equilibrium(cfg: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let lambda = cfg.lambdas[0];
    let rho0 = gibbs(cfg.sys.h_sys(), cfg.bath.beta())?;
    let gens = renormalized_generators(&cfg.sys, &cfg.bath, lambda)?;
    let k_bare = build_davies(&cfg.sys, &cfg.bath, lambda)?;
    let md_minus_k = gens
        .m_d
        .matrix()
        .sub(k_bare.k_super().matrix())
        .fro_norm();
    let h_shift = gens.renormalized.h_tilde().sub(cfg.sys.h_sys()).fro_norm();
    let rho_l = &gens.rho_lambda;
    let m_residual = {
        let v = vectorize(rho_l.rho());
        let r = gens.m_full.apply_vec(&v);
        r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    };
    let doc = json!({
        "lambda": lambda,
        "beta": cfg.bath.beta(),
        "rho_bare": mat_json(rho0.rho()),
        "rho_lambda": mat_json(rho_l.rho()),
        "h_tilde": mat_json(gens.renormalized.h_tilde()),
        "e_tilde": gens.renormalized.e_tilde(),
        "h_tilde_shift_fro": h_shift,
        "m_d_minus_k_fro": md_minus_k,
        "m_annihilates_rho_lambda_residual": m_residual,
    });
    write_file(out, "equilibrium.json", &serde_json::to_string_pretty(&doc).unwrap())?;
    Ok(vec![
        format!(
            "equilibrium: ||H~ - H||_F = {h_shift:.6e}, ||M_d - K||_F = {md_minus_k:.6e}, \
             M rho_lambda residual = {m_residual:.3e}"
        ),
        format!("wrote equilibrium.json to {}", out.display()),
    ])
}

/// `compare-oracle`: trace distances of every approximant against the exact
/// finite-mode dynamics, with a discretization-floor estimate, plus fitted
/// scaling exponents.
pub fn cmd_compare_oracle(cfg: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let ocfg = cfg.oracle_config();
    let omega_max = if cfg.oracle.omega_max > 0.0 {
        cfg.oracle.omega_max
    } else {
        auto_omega_max(&cfg.bath, ocfg.support_tail_tol)?
    };
    let fm = discretize_bath(&cfg.bath, cfg.oracle.n_modes, omega_max, cfg.oracle.cutoff, &ocfg)?;
    // the floor rerun is an error estimator; it gets a free tail budget
    let floor_cfg = OracleConfig {
        max_tail_mass: 1.0,
        ..ocfg.clone()
    };
    let fm_floor = discretize_bath(
        &cfg.bath,
        cfg.oracle.floor_modes,
        omega_max,
        cfg.oracle.floor_cutoff,
        &floor_cfg,
    )?;
    let t_max = fm.recurrence_window() / 2.0;
    let points = cfg.oracle.points.max(2);
    let times: Vec<f64> = (0..points)
        .map(|k| t_max * (k as f64 + 1.0) / points as f64)
        .collect();
    let rho0 = gibbs(cfg.sys.h_sys(), cfg.bath.beta())?;

    let mut csv = String::from("lambda,t,dist_davies,dist_wt,dist_m,dist_md_pop\n");
    let mut sup_davies = Vec::new();
    let mut sup_wt = Vec::new();
    let mut sup_m = Vec::new();
    let mut floors = Vec::new();
    let mut late_time_summary = Vec::new();

    for &lambda in &cfg.lambdas {
        let oracle = exact_reduced_dynamics(&cfg.sys, &fm, lambda, rho0.rho(), &times, &ocfg)?;
        let oracle_floor =
            exact_reduced_dynamics(&cfg.sys, &fm_floor, lambda, rho0.rho(), &times, &floor_cfg)?;
        let (dav, rd) = resonances_for(cfg, lambda)?;
        let dav_traj = propagate_tagged(&dav.generator(), rho0.rho(), &times, GeneratorTag::Davies)?;
        let rho_inf = reduced_gibbs_second_order(&cfg.sys, &cfg.bath, lambda)?;
        let wt_states: Vec<CMat> = times
            .iter()
            .map(|&t| rd.full_approximation(rho_inf.rho(), t, rho0.rho()))
            .collect();
        let wt_traj = Trajectory {
            times: times.clone(),
            states: wt_states,
            tag: GeneratorTag::ResonanceWt,
        };
        let gens = renormalized_generators(&cfg.sys, &cfg.bath, lambda)?;
        let m_traj = propagate_tagged(&gens.m_full, rho0.rho(), &times, GeneratorTag::MFull)?;
        let md_scaled = gens.m_d.scale(C64::new(lambda * lambda, 0.0));
        let md_traj = propagate_tagged(&md_scaled, rho0.rho(), &times, GeneratorTag::MdPopulations)?;

        let d_dav = dynamics::compare(&oracle, &dav_traj)?;
        let d_wt = dynamics::compare(&oracle, &wt_traj)?;
        let d_m = dynamics::compare(&oracle, &m_traj)?;
        let floor = dynamics::compare(&oracle, &oracle_floor)?;
        let pop_or = dynamics::populations(&oracle, cfg.sys.eigvecs())?;
        let pop_md = dynamics::populations(&md_traj, cfg.sys.eigvecs())?;
        let pop_dav = dynamics::populations(&dav_traj, cfg.sys.eigvecs())?;

        for (ti, &t) in times.iter().enumerate() {
            let md_pop_dist: f64 = pop_or[ti]
                .iter()
                .zip(&pop_md[ti])
                .map(|(a, b)| (a - b).abs())
                .sum();
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                fmt_f64(lambda),
                fmt_f64(t),
                fmt_f64(d_dav.per_time[ti]),
                fmt_f64(d_wt.per_time[ti]),
                fmt_f64(d_m.per_time[ti]),
                fmt_f64(md_pop_dist)
            ));
        }
        sup_davies.push(d_dav.sup);
        sup_wt.push(d_wt.sup);
        sup_m.push(d_m.sup);
        floors.push(floor.sup);

        // asymptotic-exactness bookkeeping at the latest sampled times
        let last = times.len() - 1;
        let md_pop_last: f64 = pop_or[last]
            .iter()
            .zip(&pop_md[last])
            .map(|(a, b)| (a - b).abs())
            .sum();
        let dav_pop_last: f64 = pop_or[last]
            .iter()
            .zip(&pop_dav[last])
            .map(|(a, b)| (a - b).abs())
            .sum();
        late_time_summary.push(json!({
            "lambda": lambda,
            "dist_davies_late": d_dav.per_time[last],
            "dist_m_late": d_m.per_time[last],
            "pop_err_md_late": md_pop_last,
            "pop_err_davies_late": dav_pop_last,
        }));
    }
    write_file(out, "comparison.csv", &csv)?;

    let corrected: Vec<f64> = sup_davies
        .iter()
        .zip(&floors)
        .map(|(d, f)| (d - f).max(1e-14))
        .collect();
    let slope_raw = if cfg.lambdas.len() >= 2 {
        loglog_slope(&cfg.lambdas, &sup_davies)
    } else {
        f64::NAN
    };
    let slope_corrected = if cfg.lambdas.len() >= 2 {
        loglog_slope(&cfg.lambdas, &corrected)
    } else {
        f64::NAN
    };
    let doc = json!({
        "lambda": cfg.lambdas,
        "sup_dist_davies": sup_davies,
        "sup_dist_wt": sup_wt,
        "sup_dist_m": sup_m,
        "floor": floors,
        "davies_slope_raw": slope_raw,
        "davies_slope_floor_corrected": slope_corrected,
        "late_times": late_time_summary,
        "t_max": t_max,
        "omega_max": omega_max,
        "truncation_leak": fm.truncation_leak(),
    });
    write_file(out, "scaling.json", &serde_json::to_string_pretty(&doc).unwrap())?;
    Ok(vec![
        format!(
            "compare-oracle: sup distances {:?} (floor {:?})",
            sup_davies, floors
        ),
        format!("davies slope raw {slope_raw:.3}, floor-corrected {slope_corrected:.3}"),
        format!("wrote comparison.csv, scaling.json to {}", out.display()),
    ])
}

struct Check {
    name: &'static str,
    value: f64,
    threshold: f64,
    pass: bool,
}

impl Check {
    fn le(name: &'static str, value: f64, threshold: f64) -> Self {
        Self {
            name,
            value,
            threshold,
            pass: value <= threshold,
        }
    }

    fn ge(name: &'static str, value: f64, threshold: f64) -> Self {
        Self {
            name,
            value,
            threshold,
            pass: value >= threshold,
        }
    }
}

/// `validate`: run the full invariant suite; returns (report lines, all_pass).
pub fn cmd_validate(cfg: &RunConfig, out: &Path) -> Result<(Vec<String>, bool)> {
    let lambda = cfg.lambdas[0];
    let bath = &cfg.bath;
    let mut checks: Vec<Check> = Vec::new();
    let mut rng = SplitMix64::new(cfg.seed);

    // detailed balance on a 200-point grid
    let u_max = bath.grid()?.u_max.min(8.0 / bath.beta() + 4.0);
    let mut kms_dev: f64 = 0.0;
    let mut h_min: f64 = 0.0;
    for k in 1..=200 {
        let u = u_max * k as f64 / 200.0;
        let h_plus = bath.h_hat(u);
        let h_minus = bath.h_hat(-u);
        if h_plus > 0.0 {
            kms_dev = kms_dev.max((h_minus - (-bath.beta() * u).exp() * h_plus).abs() / h_plus);
        }
        h_min = h_min.min(h_plus).min(h_minus);
    }
    checks.push(Check::le("kms_detailed_balance_rel", kms_dev, 1e-10));
    checks.push(Check::ge("h_hat_nonnegative_min", h_min, -0.0));

    // correlation conjugation symmetry
    let mut conj_dev: f64 = 0.0;
    for &t in &[0.4, 1.3, 3.7] {
        let cp = bath.correlation_function(t)?;
        let cm = bath.correlation_function(-t)?;
        conj_dev = conj_dev.max((cm - cp.conj()).norm());
    }
    checks.push(Check::le("correlation_conjugation_symmetry", conj_dev, 1e-10));

    let (dav, rd) = resonances_for(cfg, lambda)?;
    let kf = dav.k_super().matrix().fro_norm().max(1e-300);
    checks.push(Check::le(
        "k_trace_annihilation",
        dav.k_super().trace_annihilation_dev() / kf.max(1.0),
        1e-10,
    ));
    checks.push(Check::le(
        "k_commutes_with_liouville_s",
        dav.liouville_s().commutator_rel_dev(dav.k_super()),
        1e-9,
    ));
    checks.push(Check::le(
        "gksl_reassembly",
        dav.reassemble_k().matrix().sub(dav.k_super().matrix()).max_abs(),
        1e-10 * kf.max(1.0),
    ));
    let rho0 = gibbs(cfg.sys.h_sys(), bath.beta())?;
    let gibbs_res = dav.k_super().apply_to(rho0.rho()).fro_norm();
    checks.push(Check::le("k_gibbs_stationarity", gibbs_res, 1e-9 * kf.max(1e-12)));
    let h = cfg.sys.h_sys();
    let lamb = dav.lamb_shift();
    checks.push(Check::le(
        "lamb_shift_commutes_with_h",
        lamb.matmul(h).sub(&h.matmul(lamb)).max_abs(),
        1e-10,
    ));
    let (gen_evals, _) = dav.generator().matrix().eig()?;
    checks.push(Check::le(
        "spectrum_reassembly",
        multiset_match_dev(&rd.generator_spectrum(), &gen_evals),
        1e-8,
    ));

    // projection algebra
    let nn = cfg.sys.dim() * cfg.sys.dim();
    let mut proj_dev: f64 = 0.0;
    for (i, a) in rd.entries.iter().enumerate() {
        for (j, b) in rd.entries.iter().enumerate() {
            let prod = a.p_schr.compose(&b.p_schr);
            let expect = if i == j {
                a.p_schr.matrix().clone()
            } else {
                CMat::zeros(nn, nn)
            };
            proj_dev = proj_dev.max(prod.matrix().sub(&expect).max_abs());
        }
    }
    checks.push(Check::le("projection_algebra", proj_dev, 1e-9));

    // W semigroup on random times
    let mut semi_dev: f64 = 0.0;
    for _ in 0..3 {
        let t = 4.0 * rng.next_f64();
        let s = 4.0 * rng.next_f64();
        let lhs = rd.w_map(t + s);
        let rhs = rd.w_map(t).compose(&rd.w_map(s));
        semi_dev = semi_dev.max(lhs.matrix().sub(rhs.matrix()).max_abs());
    }
    checks.push(Check::le("w_map_semigroup", semi_dev, 1e-9));

    // CPT of the propagated semigroup on a short log grid
    let prop = dynamics::Propagator::new(&dav.generator())?;
    let times = dynamics::default_time_grid(lambda, rd.gamma_fgr.max(1e-3), 8, 20.0);
    let mut min_choi = f64::INFINITY;
    let mut trace_dev: f64 = 0.0;
    let mut herm_dev: f64 = 0.0;
    for &t in &times {
        let rep = cpt_report(&prop.exp_t(t), cfg.seed);
        min_choi = min_choi.min(rep.min_choi_eig);
        trace_dev = trace_dev.max(rep.trace_dev);
        herm_dev = herm_dev.max(rep.herm_dev);
    }
    checks.push(Check::ge("exp_generator_min_choi_eig", min_choi, -1e-9));
    checks.push(Check::le("exp_generator_trace_dev", trace_dev, 1e-10));
    checks.push(Check::le("exp_generator_herm_dev", herm_dev, 1e-10));

    // the CP detector itself must flag the transpose map
    let n = cfg.sys.dim();
    let transpose = Superoperator::from_matrix(
        n,
        CMat::from_fn(nn, nn, |row, col| {
            let (i, j) = (row / n, row % n);
            let (k, l) = (col / n, col % n);
            if i == l && j == k {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        }),
    );
    let transpose_rep = cpt_report(&transpose, cfg.seed);
    checks.push(Check::le(
        "choi_detects_non_cp_transpose",
        transpose_rep.min_choi_eig,
        -0.5,
    ));

    // renormalized pipeline
    let gens = renormalized_generators(&cfg.sys, &cfg.bath, lambda)?;
    let m_res = {
        let v = vectorize(gens.rho_lambda.rho());
        let r = gens.m_full.apply_vec(&v);
        r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    };
    checks.push(Check::le("m_annihilates_rho_lambda", m_res, 1e-9));
    let omega = gens.renormalized.purification();
    let lam_res = {
        let img = gens.level_shift_doubled.apply(&omega);
        img.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    };
    checks.push(Check::le("doubled_level_shift_annihilates_purification", lam_res, 1e-9));

    // propagated-state quality from a random density matrix
    let rho_rand = random_density(n, &mut rng);
    let traj = propagate_tagged(
        &dav.generator(),
        &rho_rand,
        &times,
        GeneratorTag::Davies,
    )?;
    let (tdev, hdev, min_eig) = traj.state_quality();
    checks.push(Check::le("trajectory_trace_dev", tdev, 1e-10));
    checks.push(Check::le("trajectory_herm_dev", hdev, 1e-10));
    checks.push(Check::ge("trajectory_min_eigenvalue", min_eig, -1e-9));

    // hermitian inputs stay hermitian under the semigroup
    let mut herm_prop: f64 = 0.0;
    for _ in 0..3 {
        let x = random_hermitian(n, &mut rng);
        let img = prop.exp_t(1.7).apply_to(&x);
        herm_prop = herm_prop.max(img.herm_dev());
    }
    checks.push(Check::le("semigroup_hermiticity_preservation", herm_prop, 1e-10));

    let all_pass = checks.iter().all(|c| c.pass);
    let mut lines = Vec::new();
    lines.push(format!("{:<48} {:>14} {:>14} {:>6}", "invariant", "value", "threshold", "pass"));
    let mut csv = String::from("invariant,value,threshold,pass\n");
    for c in &checks {
        lines.push(format!(
            "{:<48} {:>14.4e} {:>14.4e} {:>6}",
            c.name,
            c.value,
            c.threshold,
            if c.pass { "ok" } else { "FAIL" }
        ));
        csv.push_str(&format!(
            "{},{},{},{}\n",
            c.name,
            fmt_f64(c.value),
            fmt_f64(c.threshold),
            c.pass
        ));
    }
    write_file(out, "validate.csv", &csv)?;
    lines.push(format!(
        "{} of {} invariants hold",
        checks.iter().filter(|c| c.pass).count(),
        checks.len()
    ));
    Ok((lines, all_pass))
}
