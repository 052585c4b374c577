//! Implementations of the experiment commands.

use std::f64::consts::PI;
use std::sync::Arc;

use magschro::carleman::{build_weights, carleman_check, check_beta_conditions, CarlemanWeights};
use magschro::coeffs::{coefficient_distance, sample_admissible, CoefficientSet};
use magschro::dynamics::{
    check_selfadjoint, compatibility_boundary_data, save_trajectory, solve_ibvp, BoundaryData,
    HamiltonianOperator,
};
use magschro::fields::{scalar_l2, Grid, Region, ScalarField, TwoStateField};
use magschro::inversion::{
    add_trace_noise, algebraic_reconstruct, h_s_functional, lsq_reconstruct,
    simulate_measurements, stability_report, v0_exact, Channel, CoefficientDiff, LsqOptions,
    MeasurementRecord,
};
use magschro::probing::{build_probe_set, ProbeSet};

use crate::config::ExperimentConfig;
use crate::reports::{cell, OutputSet};
use crate::AppError;

type CmdResult = Result<(), AppError>;

/// Everything the commands share: the grid, the coefficient sample drawn
/// from the configured seed, the Carleman weights and the probe set.
struct Setup {
    grid: Arc<Grid>,
    coeffs: CoefficientSet,
    weights: CarlemanWeights,
    probes: ProbeSet,
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup, magschro::Error> {
    let grid = Grid::build(cfg.lx, cfg.ly, cfg.nx, cfg.ny)?;
    let zero = CoefficientSet::zero(grid.clone(), cfg.bound_m, cfg.flatness_order);
    let coeffs = sample_admissible(
        cfg.seed,
        grid.clone(),
        cfg.bound_m,
        &zero,
        cfg.flatness_order,
        cfg.amplitude,
    )?;
    let mut weights = build_weights(
        grid.clone(),
        cfg.x0,
        cfg.lambda,
        cfg.t_final,
        cfg.nt,
        cfg.strict,
    )?;
    weights.s_grid = cfg.s_grid.clone();
    let probes = build_probe_set(grid.clone(), 2)?;
    Ok(Setup {
        grid,
        coeffs,
        weights,
        probes,
    })
}

fn num(e: magschro::Error) -> AppError {
    AppError::Numerical(e.to_string())
}

pub fn forward(cfg: &ExperimentConfig, out: &mut OutputSet) -> CmdResult {
    let s = setup(cfg).map_err(num)?;
    let g = &s.grid;
    let u0 = TwoStateField::new(
        ScalarField::from_real_fn(g.clone(), |x, y| {
            (PI * x / g.lx).sin() * (PI * y / g.ly).sin()
        }),
        ScalarField::zeros(g.clone()),
    )
    .map_err(num)?;
    let h = HamiltonianOperator::new(&s.coeffs);
    let times: Vec<f64> = (0..=cfg.nt)
        .map(|k| cfg.t_final * k as f64 / cfg.nt as f64)
        .collect();
    let bd = compatibility_boundary_data(&h, &u0, 2, &times).map_err(num)?;
    let traj = solve_ibvp(&h, &u0, &bd, cfg.t_final, cfg.nt).map_err(num)?;

    let dir = out.subdir("trajectory")?;
    save_trajectory(&dir, &traj).map_err(num)?;
    let rows: Vec<String> = traj
        .states
        .iter()
        .enumerate()
        .map(|(k, st)| {
            let np = scalar_l2(&st.plus, Region::All).unwrap_or(0.0);
            let nm = scalar_l2(&st.minus, Region::All).unwrap_or(0.0);
            let norm = (np * np + nm * nm).sqrt();
            format!("{k},{},{}", cell(times[k]), cell(norm))
        })
        .collect();
    out.csv("forward_norms.csv", &["t_index", "t", "l2_norm"], rows)?;
    Ok(())
}

pub fn carleman_check_cmd(cfg: &ExperimentConfig, out: &mut OutputSet) -> CmdResult {
    let s = setup(cfg).map_err(num)?;
    let report = carleman_check(&s.weights, cfg.samples, cfg.seed).map_err(num)?;
    let rows: Vec<String> = report
        .rows
        .iter()
        .map(|r| {
            [
                r.sample.to_string(),
                cell(r.s),
                cell(r.r1_sq),
                cell(r.r2_sq),
                cell(r.grad_term),
                cell(r.cube_term),
                cell(r.cube_term_frozen),
                cell(r.lu_sq),
                cell(r.neumann_sq),
                cell(r.trace_term),
                cell(r.lhs),
                cell(r.rhs),
            ]
            .join(",")
        })
        .collect();
    out.csv(
        "carleman_rows.csv",
        &[
            "sample",
            "s",
            "r1_sq",
            "r2_sq",
            "grad_term",
            "cube_term",
            "cube_term_frozen",
            "lu_sq",
            "neumann_sq",
            "trace_term",
            "lhs",
            "rhs",
        ],
        rows,
    )?;
    let fit_rows: Vec<String> = report
        .c_fit
        .iter()
        .map(|&(s_val, fit)| {
            let fit_cell = fit.map(cell).unwrap_or_default();
            format!(
                "{},{},{},{},{}",
                cell(s_val),
                fit_cell,
                report.stabilized,
                cell(report.lambda),
                cell(report.strict_lambda_bound)
            )
        })
        .collect();
    out.csv(
        "carleman_fit.csv",
        &["s", "c_fit", "stabilized", "lambda", "strict_lambda_bound"],
        fit_rows,
    )?;
    if !report.stabilized {
        return Err(AppError::Numerical(
            "estimate constant did not stabilize over the s grid".into(),
        ));
    }
    Ok(())
}

pub fn probe_check(cfg: &ExperimentConfig, out: &mut OutputSet) -> CmdResult {
    let s = setup(cfg).map_err(num)?;
    let dir = out.subdir("probes")?;
    s.probes.save(&dir).map_err(num)?;
    let row = format!(
        "{},{},{}",
        s.probes.d,
        s.probes.probes.len(),
        cell(s.probes.upsilon0)
    );
    out.csv("probe_check.csv", &["d", "n_probes", "upsilon0"], vec![row])?;
    Ok(())
}

fn measurement_rows(rec: &MeasurementRecord) -> Vec<String> {
    let mut rows = Vec::new();
    for (kappa, traces) in [("plus", &rec.plus), ("minus", &rec.minus)] {
        for (t_index, frame) in traces.iter().enumerate() {
            for (j, z) in frame.iter().enumerate() {
                rows.push(format!(
                    "{},{},{},{},{},{}",
                    rec.probe,
                    kappa,
                    rec.gamma0[j],
                    t_index,
                    cell(z.re),
                    cell(z.im)
                ));
            }
        }
    }
    rows
}

const MEASUREMENT_COLUMNS: &[&str] =
    &["probe", "kappa", "boundary_node_index", "t_index", "re", "im"];

pub fn simulate(cfg: &ExperimentConfig, out: &mut OutputSet) -> CmdResult {
    let s = setup(cfg).map_err(num)?;
    let mut records =
        simulate_measurements(&s.coeffs, &s.probes, &s.weights, cfg.t_final, cfg.nt)
            .map_err(num)?;
    if cfg.noise_level > 0.0 {
        add_trace_noise(&mut records, cfg.noise_level, cfg.seed ^ 0x6e01_5e5e);
    }
    for rec in &records {
        out.csv(
            &format!("measurements_probe_{}.csv", rec.probe),
            MEASUREMENT_COLUMNS,
            measurement_rows(rec),
        )?;
    }
    Ok(())
}

pub fn stability(cfg: &ExperimentConfig, out: &mut OutputSet) -> CmdResult {
    let s = setup(cfg).map_err(num)?;
    let zero = CoefficientSet::zero(s.grid.clone(), cfg.bound_m, cfg.flatness_order);
    let mut rows = Vec::new();
    for pair in 0..cfg.pair_count {
        let base_seed = cfg.seed.wrapping_add(2 * pair as u64);
        let c2 = sample_admissible(
            base_seed,
            s.grid.clone(),
            cfg.bound_m,
            &zero,
            cfg.flatness_order,
            cfg.amplitude,
        )
        .map_err(num)?;
        let c1 = sample_admissible(
            base_seed.wrapping_add(1),
            s.grid.clone(),
            cfg.bound_m,
            &c2,
            cfg.flatness_order,
            cfg.truth_amplitude,
        )
        .map_err(num)?;
        let run = |c: &CoefficientSet| -> Result<Vec<MeasurementRecord>, magschro::Error> {
            let mut m =
                simulate_measurements(c, &s.probes, &s.weights, cfg.t_final, cfg.nt)?;
            if cfg.noise_level > 0.0 {
                add_trace_noise(&mut m, cfg.noise_level, base_seed ^ 0x6e01_5e5e);
            }
            Ok(m)
        };
        let m1 = run(&c1)
            .map_err(|e| AppError::Numerical(format!("pair {pair}, perturbed side: {e}")))?;
        let m2 = run(&c2)
            .map_err(|e| AppError::Numerical(format!("pair {pair}, reference side: {e}")))?;
        let rep = stability_report(&c1, &c2, &m1, &m2, &s.weights, &s.probes)
            .map_err(|e| AppError::Numerical(format!("pair {pair}: {e}")))?;
        let mu_joined = rep
            .mu
            .iter()
            .map(|&m| cell(m))
            .collect::<Vec<_>>()
            .join(";");
        for (i, &(s_val, hs)) in rep.h_s.iter().enumerate() {
            let lemma = rep.lemma_lm0_ratio[i].1;
            rows.push(format!(
                "{pair},{},{},{},{},{},{},{}",
                cell(s_val),
                cell(rep.lhs),
                cell(rep.rhs),
                cell(rep.ratio),
                cell(hs),
                cell(lemma),
                mu_joined
            ));
        }
    }
    out.csv(
        "stability.csv",
        &["pair", "s", "lhs", "rhs", "ratio", "h_s", "lemma_lm0_ratio", "mu_per_probe"],
        rows,
    )?;
    Ok(())
}

fn channel_from_name(name: &str) -> Channel {
    match name {
        "q_plus" => Channel::QPlus,
        "q_minus" => Channel::QMinus,
        "phi_scal" => Channel::PhiScal,
        "a_plus" => Channel::APlus,
        "a_minus" => Channel::AMinus,
        "phi_vec" => Channel::PhiVec,
        other => unreachable!("config validation admits no channel named {other}"),
    }
}

pub fn reconstruct(cfg: &ExperimentConfig, out: &mut OutputSet) -> CmdResult {
    let s = setup(cfg).map_err(num)?;
    let known = s.coeffs;
    let truth = sample_admissible(
        cfg.truth_seed,
        s.grid.clone(),
        cfg.bound_m,
        &known,
        cfg.flatness_order,
        cfg.truth_amplitude,
    )
    .map_err(num)?;
    let mut obs = simulate_measurements(&truth, &s.probes, &s.weights, cfg.t_final, cfg.nt)
        .map_err(num)?;
    if cfg.noise_level > 0.0 {
        add_trace_noise(&mut obs, cfg.noise_level, cfg.seed ^ 0x6e01_5e5e);
    }
    let opts = LsqOptions {
        basis_size: cfg.basis_size,
        iterations: cfg.iterations,
        reg: cfg.reg,
        channels: cfg.channels.iter().map(|c| channel_from_name(c)).collect(),
        fd_step: cfg.fd_step,
    };
    let fit = lsq_reconstruct(&obs, &known, &opts, &s.probes, &s.weights).map_err(num)?;

    let dir = out.subdir("recovered")?;
    fit.recovered.save(&dir).map_err(num)?;
    let history: Vec<String> = fit
        .objective_history
        .iter()
        .enumerate()
        .map(|(k, &obj)| format!("{k},{}", cell(obj)))
        .collect();
    out.csv("reconstruct_history.csv", &["iteration", "objective"], history)?;
    let truth_delta = CoefficientDiff::from_sets(&truth, &known);
    let rel_error = fit.delta.rel_l2_error(&truth_delta);
    let coeff_joined = fit
        .coefficients
        .iter()
        .map(|&c| cell(c))
        .collect::<Vec<_>>()
        .join(";");
    let row = format!(
        "{},{},{},{}",
        fit.iterations_used,
        cell(fit.final_objective),
        cell(rel_error),
        coeff_joined
    );
    out.csv(
        "reconstruct_summary.csv",
        &["iterations_used", "final_objective", "rel_error_vs_truth", "coefficients"],
        vec![row],
    )?;
    Ok(())
}

/// The invariant suite behind `selftest`: cheap, deterministic checks of the
/// pillars every experiment relies on. Returns the per-check report lines and
/// whether everything passed.
pub fn selftest(cfg: &ExperimentConfig, out: &mut OutputSet) -> CmdResult {
    let mut lines: Vec<String> = Vec::new();
    let mut all_ok = true;
    let mut check = |name: &str, result: Result<(), String>| match result {
        Ok(()) => lines.push(format!("selftest: {name} ... ok")),
        Err(msg) => {
            all_ok = false;
            lines.push(format!("selftest: {name} ... FAIL ({msg})"));
        }
    };

    let grid = Grid::build(cfg.lx, cfg.ly, cfg.nx, cfg.ny).map_err(num)?;
    let zero = CoefficientSet::zero(grid.clone(), cfg.bound_m, cfg.flatness_order);
    let coeffs = sample_admissible(
        cfg.seed,
        grid.clone(),
        cfg.bound_m,
        &zero,
        cfg.flatness_order,
        0.2,
    )
    .map_err(num)?;

    // 1. The sampled Hamiltonian is self-adjoint on interior states.
    let h = HamiltonianOperator::new(&coeffs);
    let asym = check_selfadjoint(&h);
    check(
        "hamiltonian symmetry",
        if asym <= 1e-10 {
            Ok(())
        } else {
            Err(format!("asymmetry {asym:.3e}"))
        },
    );

    // 2. The propagator conserves the L2 norm with static boundary data.
    let u0 = TwoStateField::new(
        ScalarField::from_real_fn(grid.clone(), |x, y| {
            (PI * x / grid.lx).sin() * (PI * y / grid.ly).sin()
        }),
        ScalarField::zeros(grid.clone()),
    )
    .map_err(num)?;
    let nt = 16;
    let t_final = 0.1;
    let bd = BoundaryData::zeros(
        grid.clone(),
        (0..=nt).map(|k| t_final * k as f64 / nt as f64).collect(),
    );
    let traj = solve_ibvp(&h, &u0, &bd, t_final, nt).map_err(num)?;
    let norm = |st: &TwoStateField| {
        let a = scalar_l2(&st.plus, Region::All).unwrap_or(0.0);
        let b = scalar_l2(&st.minus, Region::All).unwrap_or(0.0);
        (a * a + b * b).sqrt()
    };
    let drift = (norm(traj.states.last().unwrap()) - norm(&traj.states[0])).abs();
    check(
        "norm conservation",
        if drift <= 1e-8 {
            Ok(())
        } else {
            Err(format!("drift {drift:.3e}"))
        },
    );

    // 3. The weight profile satisfies its convexity and slope conditions.
    let weights_check = build_weights(
        grid.clone(),
        cfg.x0,
        cfg.lambda,
        cfg.t_final,
        cfg.nt.min(64),
        cfg.strict,
    )
    .and_then(|w| check_beta_conditions(&w).map(|_| ()));
    check(
        "weight profile conditions",
        weights_check.map_err(|e| e.to_string()),
    );

    // 4. The probe matrix is injective with the expected constant.
    let probes = build_probe_set(grid.clone(), 2).map_err(num)?;
    let gap = (probes.upsilon0 - 2f64.sqrt()).abs();
    check(
        "probe injectivity constant",
        if gap <= 1e-12 {
            Ok(())
        } else {
            Err(format!("off by {gap:.3e}"))
        },
    );

    // 5. Algebraic reconstruction inverts the exact initial-value records.
    let truth = sample_admissible(
        cfg.seed.wrapping_add(1),
        grid.clone(),
        cfg.bound_m,
        &coeffs,
        cfg.flatness_order,
        0.05,
    )
    .map_err(num)?;
    let roundtrip = (|| -> Result<f64, magschro::Error> {
        let records: Result<Vec<TwoStateField>, _> = probes
            .probes
            .iter()
            .map(|u0| v0_exact(&truth, &coeffs, u0))
            .collect();
        let rec = algebraic_reconstruct(&records?, &truth.a_plus, &truth.a_minus, &probes)?;
        Ok(rec
            .delta
            .rel_l2_error(&CoefficientDiff::from_sets(&truth, &coeffs)))
    })();
    check(
        "algebraic round trip",
        match roundtrip {
            Ok(e) if e <= 1e-10 => Ok(()),
            Ok(e) => Err(format!("relative error {e:.3e}")),
            Err(e) => Err(e.to_string()),
        },
    );

    // 6. The weighted coefficient functional reduces to the plain distance
    //    at s = 0.
    let h0_check = build_weights(grid.clone(), cfg.x0, cfg.lambda, 0.2, 8, false)
        .and_then(|w| h_s_functional(&truth, &coeffs, &w, 0.0))
        .map_err(|e| e.to_string())
        .and_then(|h0| {
            let d = coefficient_distance(&truth, &coeffs);
            if (h0 - d).abs() <= 1e-12 * (1.0 + d) {
                Ok(())
            } else {
                Err(format!("h0 {h0:.6e} vs distance {d:.6e}"))
            }
        });
    check("weighted functional baseline", h0_check);

    for line in &lines {
        println!("{line}");
    }
    out.text("selftest.txt", &(lines.join("\n") + "\n"))?;
    if all_ok {
        Ok(())
    } else {
        Err(AppError::Selftest("one or more selftest checks failed".into()))
    }
}
