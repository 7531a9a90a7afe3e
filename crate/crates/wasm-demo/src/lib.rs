//! Browser bindings for the interactive demo page in `www/`.
//!
//! All three operations use the four-site, two-particle ring with Ohmic-Drude
//! baths on every site; the page varies the coupling, temperature and cutoff.

use std::f64::consts::FRAC_PI_2;

use pseudolind::bath::BathSpec;
use pseudolind::dynamics::integrate_master;
use pseudolind::hubbard::{benchmark_generator, ground_projector, occupation_state, HubbardSpec};
use pseudolind::opcore::{self, Operator};
use pseudolind::plform::{ChannelInvariants, PseudoLindbladForm, TransformParams};
use pseudolind::plqt::{run_ensemble, EnsembleConfig, PlqtSystem};
use pseudolind::redfield::ChannelMode;
use wasm_bindgen::prelude::*;

const MAX_TRAJECTORIES: usize = 20_000;

fn spec(gamma: f64, temperature: f64, cutoff: f64) -> Result<HubbardSpec, String> {
    if !(temperature > 0.0) {
        return Err(format!("temperature must be positive, got {temperature}"));
    }
    let mut s = HubbardSpec::benchmark();
    s.gamma = gamma;
    s.bath = BathSpec::ohmic_drude(cutoff, 1.0 / temperature, gamma).map_err(|e| e.to_string())?;
    s.validate().map_err(|e| e.to_string())?;
    Ok(s)
}

fn js(e: String) -> JsValue {
    JsValue::from_str(&e)
}

/// Negative weight `‖A₋‖²` of one site channel on an `n × n` grid of
/// `(ln λ, φ)`, `ln λ ∈ [−3, 3]`, `φ ∈ (−π/2, π/2)`.
#[wasm_bindgen]
pub struct Landscape {
    n: usize,
    values: Vec<f64>,
    lam_opt: f64,
    phi_opt: f64,
    w_min: f64,
    w_redfield: f64,
}

#[wasm_bindgen]
impl Landscape {
    pub fn n(&self) -> usize {
        self.n
    }
    /// Row-major, rows indexed by `φ`, columns by `ln λ`.
    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }
    pub fn lam_opt(&self) -> f64 {
        self.lam_opt
    }
    pub fn phi_opt(&self) -> f64 {
        self.phi_opt
    }
    pub fn w_min(&self) -> f64 {
        self.w_min
    }
    /// Weight at `λ = 1, φ = 0`.
    pub fn w_redfield(&self) -> f64 {
        self.w_redfield
    }
}

pub const LN_LAMBDA_RANGE: f64 = 3.0;

pub fn landscape_native(gamma: f64, temperature: f64, cutoff: f64, n: usize) -> Result<Landscape, String> {
    if n < 2 {
        return Err("grid needs at least 2 points per axis".into());
    }
    let (gen, _) = benchmark_generator(&spec(gamma, temperature, cutoff)?, ChannelMode::Full, true)
        .map_err(|e| e.to_string())?;
    let ch = &gen.channels[0];
    let inv = ChannelInvariants::of(&ch.s_op, &ch.s_conv).map_err(|e| e.to_string())?;
    let mut values = Vec::with_capacity(n * n);
    for i in 0..n {
        // Cell centres keep |φ| strictly below π/2.
        let phi = -FRAC_PI_2 + (i as f64 + 0.5) * std::f64::consts::PI / n as f64;
        for j in 0..n {
            let x = -LN_LAMBDA_RANGE + 2.0 * LN_LAMBDA_RANGE * j as f64 / (n - 1) as f64;
            let p = TransformParams::new(x.exp(), phi).map_err(|e| e.to_string())?;
            values.push(inv.weights(p).1);
        }
    }
    let opt = inv.optimal_params().map_err(|e| e.to_string())?;
    let (_, w_min) = inv.minimal_weights().map_err(|e| e.to_string())?;
    Ok(Landscape {
        n,
        values,
        lam_opt: opt.lam(),
        phi_opt: opt.phi(),
        w_min,
        w_redfield: inv.weights(TransformParams::identity()).1,
    })
}

#[wasm_bindgen]
pub fn landscape(gamma: f64, temperature: f64, cutoff: f64, n: usize) -> Result<Landscape, JsValue> {
    landscape_native(gamma, temperature, cutoff, n).map_err(js)
}

/// `[Δ, G′(Δ), G″(Δ)]` triplets on `n` points of `[−Δ_max, Δ_max]`.
pub fn coupling_density_native(temperature: f64, cutoff: f64, delta_max: f64, n: usize) -> Result<Vec<f64>, String> {
    if n < 2 || !(delta_max > 0.0) {
        return Err("need n ≥ 2 and a positive range".into());
    }
    let bath = BathSpec::ohmic_drude(cutoff, 1.0 / temperature, 1.0).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(3 * n);
    for k in 0..n {
        let d = -delta_max + 2.0 * delta_max * k as f64 / (n - 1) as f64;
        out.extend([d, bath.g_real(d), bath.g_imag(d).map_err(|e| e.to_string())?]);
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn coupling_density(temperature: f64, cutoff: f64, delta_max: f64, n: usize) -> Result<Vec<f64>, JsValue> {
    coupling_density_native(temperature, cutoff, delta_max, n).map_err(js)
}

/// Ground-level population from direct integration and from a sign-bit
/// trajectory ensemble.
#[wasm_bindgen]
pub struct Trajectories {
    times: Vec<f64>,
    direct: Vec<f64>,
    mean: Vec<f64>,
    stderr: Vec<f64>,
    negative_fraction: Vec<f64>,
    w_minus: f64,
}

#[wasm_bindgen]
impl Trajectories {
    pub fn times(&self) -> Vec<f64> {
        self.times.clone()
    }
    pub fn direct(&self) -> Vec<f64> {
        self.direct.clone()
    }
    pub fn mean(&self) -> Vec<f64> {
        self.mean.clone()
    }
    pub fn stderr(&self) -> Vec<f64> {
        self.stderr.clone()
    }
    pub fn negative_fraction(&self) -> Vec<f64> {
        self.negative_fraction.clone()
    }
    /// Total `Σ‖A₋‖²` of the form that was sampled.
    pub fn w_minus(&self) -> f64 {
        self.w_minus
    }
}

pub fn trajectories_native(
    gamma: f64,
    temperature: f64,
    cutoff: f64,
    n_trajectories: usize,
    t_max: f64,
    optimize: bool,
    seed: u64,
) -> Result<Trajectories, String> {
    if n_trajectories == 0 || n_trajectories > MAX_TRAJECTORIES {
        return Err(format!("trajectories must be in 1..={MAX_TRAJECTORIES}"));
    }
    if !(t_max > 0.0 && t_max <= 100.0) {
        return Err("t_max must be in (0, 100]".into());
    }
    let s = spec(gamma, temperature, cutoff)?;
    let (gen, basis) = benchmark_generator(&s, ChannelMode::Full, true).map_err(|e| e.to_string())?;
    let form = if optimize {
        PseudoLindbladForm::optimized(&gen)
    } else {
        PseudoLindbladForm::unoptimized(&gen)
    }
    .map_err(|e| e.to_string())?;

    let dt: f64 = 0.01;
    let out_dt = 0.25;
    let stride = (out_dt / dt).round() as usize;
    let n_out = (t_max / out_dt).floor() as usize;
    let grid: Vec<f64> = (0..=n_out).map(|k| (k * stride) as f64 * dt).collect();

    let psi0 = occupation_state(&s, &basis, &[0, 1]).map_err(|e| e.to_string())?;
    let obs = ground_projector(&basis);
    let rho0 = &psi0 * psi0.adjoint();
    let direct = integrate_master(&gen, &rho0, &grid, dt).map_err(|e| e.to_string())?;
    let p = |r: &Operator| opcore::trace(&(&obs * r)).re;

    let system = PlqtSystem::new(&form, dt).map_err(|e| e.to_string())?;
    let cfg = EnsembleConfig::new(n_trajectories, grid.clone(), seed);
    let est = run_ensemble(&system, &psi0, std::slice::from_ref(&obs), &cfg)
        .map_err(|e| e.to_string())?
        .estimates();
    Ok(Trajectories {
        direct: direct.iter().map(p).collect(),
        mean: est.iter().map(|e| e.mean[0]).collect(),
        stderr: est.iter().map(|e| e.stderr[0]).collect(),
        negative_fraction: est.iter().map(|e| e.negative_fraction).collect(),
        w_minus: form.total_weights().1,
        times: grid,
    })
}

#[wasm_bindgen]
pub fn trajectories(
    gamma: f64,
    temperature: f64,
    cutoff: f64,
    n_trajectories: usize,
    t_max: f64,
    optimize: bool,
    seed: u64,
) -> Result<Trajectories, JsValue> {
    trajectories_native(gamma, temperature, cutoff, n_trajectories, t_max, optimize, seed).map_err(js)
}
