use anyhow::{Context, Result};
use nalgebra::DVector;
use serde_json::{json, Value};

use pseudolind::dynamics::{
    integrate_master, pauli_evolve, rates_from_weight_difference, rwa_rates, FnGenerator, Generator, RateMatrix,
};
use pseudolind::hpz::{
    brownian_limit_pair, hpz_convolved, hpz_generator, hpz_generator_redfield_form, hpz_jump_pair,
    hpz_lamb_shift, hpz_coherent, hpz_minimal_weights, hpz_operators, hpz_optimal_pair, hpz_optimal_params,
    truncation_convergence, truncation_identities, HpzSnapshot,
};
use pseudolind::hubbard::{benchmark_generator, ground_projector, occupation_state};
use pseudolind::opcore::{self, frobenius_norm_sq, Operator, SpectralBasis, StateVector, C64};
use pseudolind::plform::{kossakowski_from_table, ChannelInvariants, PseudoLindbladForm, TransformParams};
use pseudolind::plqt::{run_ensemble, sign_statistics, EnsembleConfig, EnsembleEstimate, PlqtSystem};
use pseudolind::redfield::{ChannelMode, RedfieldGenerator};

use crate::config::{Format, HpzCoefficientConfig, RunConfig, SystemConfig};
use crate::output::{Cell, OutDir};

/// Everything the dynamics commands need, for either system.
struct Model {
    reference: Box<dyn Generator>,
    optimized: PseudoLindbladForm,
    unoptimized: PseudoLindbladForm,
    psi0: StateVector,
    /// `p₀` observable (ground level for Hubbard, Fock vacuum for HPZ).
    observable: Operator,
    basis: Option<SpectralBasis>,
    redfield: Option<RedfieldGenerator>,
}

fn build_model(cfg: &RunConfig) -> Result<Model> {
    if let Some(spec) = cfg.hubbard_spec()? {
        let SystemConfig::Hubbard(h) = &cfg.system else { unreachable!() };
        let (gen, basis) = benchmark_generator(&spec, cfg.channel_mode(), cfg.run.include_lamb_shift)?;
        let psi0 = occupation_state(&spec, &basis, &h.initial_occupation)?;
        return Ok(Model {
            optimized: PseudoLindbladForm::optimized(&gen)?,
            unoptimized: PseudoLindbladForm::unoptimized(&gen)?,
            observable: ground_projector(&basis),
            reference: Box::new(gen.clone()),
            psi0,
            basis: Some(basis),
            redfield: Some(gen),
        });
    }
    let (c, h) = cfg.hpz_snapshot()?.context("system: unsupported")?;
    let (q, p) = hpz_operators(h.dim, c.mass, c.omega)?;
    let hamiltonian = hpz_coherent(&c, &q, &p) + hpz_lamb_shift(&c, &q, &p)?.full();
    let optimized = PseudoLindbladForm {
        hamiltonian: hamiltonian.clone(),
        pairs: vec![hpz_optimal_pair(&c, &q, &p)?],
    };
    let unoptimized = PseudoLindbladForm {
        hamiltonian,
        pairs: vec![hpz_jump_pair(&c, &q, &p, TransformParams::identity())?],
    };
    let mut psi0 = StateVector::zeros(h.dim);
    psi0[h.initial_fock] = C64::from(1.0);
    let dim = h.dim;
    let reference = FnGenerator {
        dim,
        f: move |rho: &Operator| hpz_generator(&c, &q, &p, rho).expect("dimensions fixed at construction"),
    };
    Ok(Model {
        reference: Box::new(reference),
        optimized,
        unoptimized,
        psi0,
        observable: opcore::ketbra(dim, 0, 0),
        basis: None,
        redfield: None,
    })
}

fn expectation(o: &Operator, rho: &Operator) -> f64 {
    opcore::trace(&(o * rho)).re
}

pub fn optimize(cfg: &RunConfig, out: &mut OutDir) -> Result<Value> {
    let report = match &cfg.system {
        SystemConfig::Hubbard(_) => {
            let model = build_model(cfg)?;
            let gen = model.redfield.as_ref().expect("hubbard");
            let basis = model.basis.as_ref().expect("hubbard");
            let spec = cfg.hubbard_spec()?.expect("hubbard");
            let table = spec.bath.density_table(basis, cfg.channel_mode() == ChannelMode::Full)?;
            let kossakowski = kossakowski_from_table(&table).ok();
            let mut channels = Vec::new();
            for ch in &gen.channels {
                let inv = ChannelInvariants::of(&ch.s_op, &ch.s_conv)?;
                let entry = match (inv.optimal_params(), inv.minimal_weights()) {
                    (Ok(opt), Ok((wp, wm))) => {
                        let (up, um) = inv.weights(TransformParams::identity());
                        let estimate = kossakowski.as_ref().map(|k| {
                            let (ep, em) = k.weight_estimate(inv.s_norm_sq);
                            let at = k.params().ok().map(|p| inv.weights(p));
                            json!({
                                "lambda0": k.lam0,
                                "phi0": k.phi0,
                                "estimated_weights": [ep, em],
                                "weights_at_lambda0_phi0": at.map(|(a, b)| vec![a, b]),
                            })
                        });
                        json!({
                            "channel": ch.label,
                            "lambda_min": opt.lam(),
                            "phi_min": opt.phi(),
                            "weight_plus": wp,
                            "weight_minus": wm,
                            "weight_difference": inv.weight_difference(),
                            "unoptimized_weights": [up, um],
                            "kossakowski_estimate": estimate,
                        })
                    }
                    (Err(e), _) | (_, Err(e)) => json!({ "channel": ch.label, "error": e.to_string() }),
                };
                channels.push(entry);
            }
            let (tp, tm) = model.optimized.total_weights();
            let (up, um) = model.unoptimized.total_weights();
            json!({
                "system": "hubbard",
                "channels": channels,
                "total_weights_optimized": [tp, tm],
                "total_weights_unoptimized": [up, um],
                "kossakowski_eigenvalues": kossakowski.as_ref().map(|k| vec![k.g_plus, k.g_minus]),
            })
        }
        SystemConfig::Hpz(_) => {
            let (c, h) = cfg.hpz_snapshot()?.expect("hpz");
            let (q, p) = hpz_operators(h.dim, c.mass, c.omega)?;
            let opt = hpz_optimal_params(&c)?;
            let (wp, wm) = hpz_minimal_weights(&c, frobenius_norm_sq(&q))?;
            let pair = hpz_optimal_pair(&c, &q, &p)?;
            json!({
                "system": "hpz",
                "lambda_min": opt.lam(),
                "phi_min": opt.phi(),
                "weight_plus": wp,
                "weight_minus": wm,
                "weight_ratio": wm / wp,
                "weights_from_operators": [frobenius_norm_sq(&pair.a_plus), frobenius_norm_sq(&pair.a_minus)],
            })
        }
    };
    out.json("optimize.json", &report)?;
    Ok(report)
}

fn series_rows(grid: &[f64], states: &[Operator], obs: &Operator) -> Vec<Vec<Cell>> {
    grid.iter()
        .zip(states)
        .map(|(&t, rho)| {
            vec![
                t.into(),
                expectation(obs, rho).into(),
                opcore::trace(rho).re.into(),
                opcore::trace(&(rho * rho)).re.into(),
            ]
        })
        .collect()
}

pub fn evolve(cfg: &RunConfig, out: &mut OutDir) -> Result<Value> {
    let model = build_model(cfg)?;
    let grid = cfg.time_grid();
    let rho0 = &model.psi0 * model.psi0.adjoint();
    let header = ["t", "p_0", "tr_rho", "purity"];
    let states = integrate_master(model.reference.as_ref(), &rho0, &grid, cfg.run.dt).context("direct integration")?;
    let rows = series_rows(&grid, &states, &model.observable);
    let last = |s: &[Operator]| expectation(&model.observable, s.last().expect("nonempty grid"));
    let mut summary = json!({ "final_p_0": last(&states) });
    if cfg.wants(Format::Csv) {
        out.csv("evolve.csv", &header, rows)?;
    }
    if cfg.wants(Format::Json) {
        out.json("evolve.json", &json!({ "t": grid, "p_0": states.iter().map(|r| expectation(&model.observable, r)).collect::<Vec<_>>() }))?;
    }
    if cfg.run.truncate_negative {
        let form = if cfg.run.optimize { &model.optimized } else { &model.unoptimized };
        let truncated = form.truncate_negative();
        let tstates = integrate_master(&truncated, &rho0, &grid, cfg.run.dt).context("truncated GKSL integration")?;
        summary["final_p_0_truncated"] = json!(last(&tstates));
        if cfg.wants(Format::Csv) {
            out.csv("evolve_truncated.csv", &header, series_rows(&grid, &tstates, &model.observable))?;
        }
    }
    Ok(summary)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Mean over groups of the time-averaged `|p̂ − p|/p` on `t > 0`.
fn time_avg_rel_error(groups: &[Vec<EnsembleEstimate>], reference: &[f64]) -> f64 {
    let mut total = 0.0;
    for g in groups {
        let (mut acc, mut n) = (0.0, 0usize);
        for (e, &p) in g.iter().zip(reference).skip(1) {
            if p.abs() > 0.0 {
                acc += (e.mean[0] - p).abs() / p.abs();
                n += 1;
            }
        }
        total += acc / n.max(1) as f64;
    }
    total / groups.len().max(1) as f64
}

pub fn plqt(cfg: &RunConfig, out: &mut OutDir) -> Result<Value> {
    let model = build_model(cfg)?;
    let grid = cfg.time_grid();
    let form = if cfg.run.optimize { &model.optimized } else { &model.unoptimized };
    let system = PlqtSystem::new(form, cfg.run.dt)?;
    let mut ens = EnsembleConfig::new(cfg.run.n_trajectories, grid.clone(), cfg.run.master_seed);
    if !cfg.run.n_ladder.is_empty() {
        ens.block_size = cfg.run.n_ladder.iter().fold(cfg.run.n_trajectories, |a, &b| gcd(a, b));
    }
    let output = run_ensemble(&system, &model.psi0, std::slice::from_ref(&model.observable), &ens)?;
    let est = output.estimates();
    let signs = sign_statistics(&output);
    if cfg.wants(Format::Csv) {
        let rows = est
            .iter()
            .map(|e| {
                vec![
                    e.t.into(),
                    e.mean[0].into(),
                    e.stderr[0].into(),
                    e.negative_fraction.into(),
                    e.n_eff.into(),
                    e.collapsed.into(),
                ]
            })
            .collect();
        out.csv(
            "plqt.csv",
            &["t", "p_0_mean", "p_0_stderr", "neg_sign_fraction", "N_eff", "anomalies"],
            rows,
        )?;
    }
    if cfg.wants(Format::Json) {
        out.json(
            "plqt.json",
            &json!({
                "t": grid,
                "p_0_mean": est.iter().map(|e| e.mean[0]).collect::<Vec<_>>(),
                "p_0_stderr": est.iter().map(|e| e.stderr[0]).collect::<Vec<_>>(),
            }),
        )?;
    }
    let mut summary = json!({
        "form": if cfg.run.optimize { "optimized" } else { "unoptimized" },
        "total_weights": form.total_weights(),
        "mean_first_negative_jump_time": signs.tau_hat,
        "censored_trajectories": signs.censored,
        "final_negative_fraction": signs.negative_fraction.last(),
        "collapsed_times": est.iter().filter(|e| e.collapsed).map(|e| e.t).collect::<Vec<_>>(),
    });
    if !cfg.run.n_ladder.is_empty() {
        let rho0 = &model.psi0 * model.psi0.adjoint();
        let reference: Vec<f64> = integrate_master(model.reference.as_ref(), &rho0, &grid, cfg.run.dt)?
            .iter()
            .map(|r| expectation(&model.observable, r))
            .collect();
        let mut rows = Vec::new();
        let mut table = Vec::new();
        for &n in &cfg.run.n_ladder {
            let err = time_avg_rel_error(&output.group_estimates(n / ens.block_size), &reference);
            rows.push(vec![n.into(), err.into()]);
            table.push(json!({ "N": n, "time_avg_rel_error": err }));
        }
        if cfg.wants(Format::Csv) {
            out.csv("convergence.csv", &["N", "time_avg_rel_error"], rows)?;
        }
        summary["convergence"] = json!(table);
    }
    Ok(summary)
}

pub fn rates(cfg: &RunConfig, out: &mut OutDir) -> Result<Value> {
    let model = build_model(cfg)?;
    let spec = cfg.hubbard_spec()?.context("system: the rates command needs a hubbard system")?;
    let gen = model.redfield.as_ref().expect("hubbard");
    let basis = model.basis.as_ref().expect("hubbard");
    let d = basis.dim();
    let mut total = RateMatrix::zeros(d);
    let mut agreement: f64 = 0.0;
    for (ch, pair) in gen.channels.iter().zip(&model.optimized.pairs) {
        let r = rwa_rates(&ch.s_op, basis, &spec.bath)?;
        let from_pair = rates_from_weight_difference(pair)?;
        let scale = r.rates.amax().max(f64::MIN_POSITIVE);
        agreement = agreement.max((&from_pair.rates - &r.rates).amax() / scale);
        total.add(&r)?;
    }
    let beta = spec.bath.beta;
    if cfg.wants(Format::Csv) {
        let mut rows = Vec::new();
        for to in 0..d {
            for from in 0..d {
                if to != from {
                    rows.push(vec![to.into(), from.into(), basis.splitting(to, from).into(), total.rate(to, from).into()]);
                }
            }
        }
        out.csv("rates.csv", &["to", "from", "delta", "rate"], rows)?;
        let grid = cfg.time_grid();
        let p0 = DVector::from_iterator(d, model.psi0.iter().map(|z| z.norm_sqr()));
        let pops = pauli_evolve(&total, &p0, &grid)?;
        let ground: Vec<usize> = (0..d).filter(|&i| model.observable[(i, i)].re > 0.5).collect();
        let rows = grid
            .iter()
            .zip(&pops)
            .map(|(&t, p)| vec![t.into(), ground.iter().map(|&i| p[i]).sum::<f64>().into()])
            .collect();
        out.csv("pauli.csv", &["t", "p_0"], rows)?;
    }
    Ok(json!({
        "detailed_balance_residual": total.detailed_balance_residual(basis, beta, 1e-300),
        "weight_difference_vs_rwa": agreement,
        "energies": basis.energies(),
    }))
}

/// Fixed test state with coherences between all Fock levels.
fn probe_state(dim: usize) -> Operator {
    let v = StateVector::from_fn(dim, |n, _| C64::from(1.0 / ((n + 1) as f64).sqrt()));
    let v = &v / C64::from(v.norm());
    &v * v.adjoint()
}

pub fn hpz_check(cfg: &RunConfig, out: &mut OutDir) -> Result<Value> {
    let (c, h): (HpzSnapshot, _) = cfg.hpz_snapshot()?.context("system: hpz-check needs an hpz system")?;
    let (q, p) = hpz_operators(h.dim, c.mass, c.omega)?;
    let rho = probe_state(h.dim);
    let a = hpz_generator(&c, &q, &p, &rho)?;
    let rel = |x: &Operator| (x - &a).norm() / a.norm().max(f64::MIN_POSITIVE);
    let dual = rel(&hpz_generator_redfield_form(&c, &q, &p, &rho)?);
    let ids = truncation_identities(h.dim, c.mass, c.omega)?;
    let mut report = json!({
        "dim": h.dim,
        "dual_form_residual": dual,
        "trace_commutator": ids.trace_commutator,
        "trace_qp": ids.trace_qp,
        "norm_ratio_residual": ids.norm_ratio_residual,
        "convolved_norm_sq": frobenius_norm_sq(&hpz_convolved(&c, &q, &p)?),
    });
    match hpz_optimal_params(&c) {
        Ok(opt) => {
            let form = PseudoLindbladForm {
                hamiltonian: hpz_coherent(&c, &q, &p) + hpz_lamb_shift(&c, &q, &p)?.full(),
                pairs: vec![hpz_optimal_pair(&c, &q, &p)?],
            };
            let (wp, wm) = hpz_minimal_weights(&c, frobenius_norm_sq(&q))?;
            report["pseudo_lindblad_residual"] = json!(rel(&form.apply(&rho)?));
            report["lambda_min"] = json!(opt.lam());
            report["phi_min"] = json!(opt.phi());
            report["phi_min_is_zero"] = json!(opt.phi() == 0.0);
            report["weights"] = json!([wp, wm]);
            report["truncation_doubling_change"] = json!(truncation_convergence(&c, h.dim)?);
            if let HpzCoefficientConfig::Brownian { gamma } = h.coefficients {
                let beta = cfg.beta().expect("validated");
                let shown = brownian_limit_pair(c.mass, gamma, beta, &q, &p);
                let pair = &form.pairs[0];
                let r = |x: &Operator, y: &Operator| (x - y).norm() / y.norm().max(f64::MIN_POSITIVE);
                report["brownian_limit_residual"] =
                    json!(r(&pair.a_plus, &shown.a_plus).max(r(&pair.a_minus, &shown.a_minus)));
                report["brownian_expected_order"] = json!(beta * c.omega / 4.0);
            }
        }
        Err(e) => report["optimum_error"] = json!(e.to_string()),
    }
    out.json("hpz_check.json", &report)?;
    Ok(report)
}
