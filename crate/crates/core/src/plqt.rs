//! Pseudo-Lindblad quantum trajectories: unnormalized state vectors with a
//! sign bit that flips on every `A₋`-type jump. The ensemble reconstructs
//! `ρ ≈ Σ s_n|ψ_n⟩⟨ψ_n| / 𝒩` with `𝒩 = Σ s_n⟨ψ_n|ψ_n⟩`.
//!
//! One step of length `dt` from `ψ`:
//!
//! 1. `ψ ← K ψ` with `K = exp(−i dt/2 · H_eff)` and
//!    `H_eff = H − (i/2) Σ_pairs (A₊†A₊ − A₋†A₋)`.
//! 2. With `p_j = dt ⟨ψ̂|A_j†A_j|ψ̂⟩` and `P = Σ p_j < 0.1`, jump with
//!    probability `p_j`: `ψ ← A_j ψ ‖ψ‖/‖A_j ψ‖`, `s ← σ_j s`. Otherwise
//!    `ψ ← ψ/√(1 − P)`.
//! 3. `ψ ← K ψ`.
//!
//! In expectation this is `e^{dt/2 ℒ₀}(1 + dt 𝒥)e^{dt/2 ℒ₀}` with `ℒ₀` the
//! no-jump part and `𝒥ρ = Σ σ_j A_j ρ A_j†`, i.e. the pseudo-Lindblad
//! generator to first order in `dt` with the coherent part treated exactly.
//!
//! Each trajectory draws from its own `ChaCha8` stream: seed `master_seed`,
//! stream number = trajectory index. Trajectories are grouped into fixed-size
//! blocks whose statistics are reduced in block order, so results do not
//! depend on the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::opcore::{self, Operator, StateVector, C64, I};
use crate::plform::PseudoLindbladForm;

/// Upper bound on the total jump probability per step.
pub const MAX_STEP_PROBABILITY: f64 = 0.1;
/// `|𝒩(t)|/N` below this marks an estimate as unusable.
pub const COLLAPSE_THRESHOLD: f64 = 1e-6;

const RESCALE_HI: f64 = 1e150;
const RESCALE_LO: f64 = 1e-150;

/// Dense row-major complex matrix used in the inner loop.
#[derive(Debug, Clone)]
struct Dense {
    d: usize,
    v: Vec<C64>,
}

impl Dense {
    fn from_op(m: &Operator) -> Self {
        let d = m.nrows();
        let mut v = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                v.push(m[(i, j)]);
            }
        }
        Self { d, v }
    }

    #[inline]
    fn mul_into(&self, x: &[C64], out: &mut [C64]) {
        for (row, o) in self.v.chunks_exact(self.d).zip(out.iter_mut()) {
            let mut acc = C64::new(0.0, 0.0);
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            *o = acc;
        }
    }

    /// `⟨x|M|x⟩`, real part (M Hermitian).
    #[inline]
    fn quad(&self, x: &[C64]) -> f64 {
        let mut total = 0.0;
        for (row, xi) in self.v.chunks_exact(self.d).zip(x) {
            let mut acc = C64::new(0.0, 0.0);
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            total += (xi.conj() * acc).re;
        }
        total
    }
}

#[inline]
fn norm_sq(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

#[derive(Debug, Clone)]
struct Jump {
    a: Dense,
    ada: Dense,
    sign: i8,
}

/// Precomputed propagators and jump operators for one `(form, dt)`.
#[derive(Debug, Clone)]
pub struct PlqtSystem {
    dim: usize,
    dt: f64,
    k_half: Dense,
    k_full: Dense,
    b_total: Dense,
    jumps: Vec<Jump>,
    k_half_op: Operator,
    jump_ops: Vec<(Operator, i8)>,
}

impl PlqtSystem {
    pub fn new(form: &PseudoLindbladForm, dt: f64) -> Result<Self> {
        let d = opcore::check_square(&form.hamiltonian)?;
        opcore::check_hermitian(&form.hamiltonian)?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!("must be positive, got {dt}"),
            });
        }
        let mut drift = opcore::zeros(d);
        let mut b_total = opcore::zeros(d);
        let mut jumps = Vec::new();
        let mut jump_ops = Vec::new();
        for pair in &form.pairs {
            if pair.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: pair.dim(),
                });
            }
            for (a, sign) in [(&pair.a_plus, 1i8), (&pair.a_minus, -1i8)] {
                if opcore::frobenius_norm_sq(a) == 0.0 {
                    continue;
                }
                let ada = opcore::hermitize(&(a.adjoint() * a));
                drift += &ada * C64::from(f64::from(sign));
                b_total += &ada;
                jump_ops.push((a.clone(), sign));
                jumps.push(Jump {
                    a: Dense::from_op(a),
                    ada: Dense::from_op(&ada),
                    sign,
                });
            }
        }
        let h_eff = &form.hamiltonian - drift * (I * 0.5);
        let k_half = (h_eff.clone() * (-I * (dt / 2.0))).exp();
        let k_full = &k_half * &k_half;
        Ok(Self {
            dim: d,
            dt,
            k_half: Dense::from_op(&k_half),
            k_full: Dense::from_op(&k_full),
            b_total: Dense::from_op(&b_total),
            jumps,
            k_half_op: k_half,
            jump_ops,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn has_negative_jumps(&self) -> bool {
        self.jumps.iter().any(|j| j.sign < 0)
    }

    /// Exact ensemble mean `E[s ψψ†]` after `steps` steps from `rho0`, i.e.
    /// the `N → ∞` limit of the scheme, including its `dt` error.
    pub fn expected_density(&self, rho0: &Operator, steps: usize) -> Result<Operator> {
        opcore::check_same_dim(rho0, &self.k_half_op)?;
        let k = &self.k_half_op;
        let kd = k.adjoint();
        let mut rho = rho0.clone();
        for _ in 0..steps {
            let mid = k * &rho * &kd;
            let mut next = mid.clone();
            for (a, sign) in &self.jump_ops {
                next += a * &mid * a.adjoint() * C64::from(self.dt * f64::from(*sign));
            }
            rho = k * next * &kd;
        }
        Ok(rho)
    }

    /// Jump decision at the midpoint state `mid` (in place).
    #[inline]
    fn decide<R: Rng>(&self, mid: &mut [C64], buf: &mut [C64], sign: &mut i8, rng: &mut R) -> Result<Decision> {
        let n2 = norm_sq(mid);
        let total = self.b_total.quad(mid);
        let p_total = self.dt * total / n2;
        if p_total >= MAX_STEP_PROBABILITY {
            return Err(Error::StepTooLarge {
                prob: p_total,
                suggested_dt: self.dt * 0.5 * MAX_STEP_PROBABILITY / p_total,
            });
        }
        let u: f64 = rng.random();
        if u >= p_total {
            let f = C64::from(1.0 / (1.0 - p_total).sqrt());
            mid.iter_mut().for_each(|z| *z *= f);
            return Ok(Decision::NoJump);
        }
        // Select the jump by cumulative individual probabilities.
        let target = u / self.dt * n2;
        let mut acc = 0.0;
        let last = self.jumps.len() - 1;
        for (idx, j) in self.jumps.iter().enumerate() {
            let w = j.ada.quad(mid);
            acc += w;
            if target < acc || idx == last {
                if w <= 0.0 {
                    // Rounding put us on a zero-weight operator at the end.
                    let f = C64::from(1.0 / (1.0 - p_total).sqrt());
                    mid.iter_mut().for_each(|z| *z *= f);
                    return Ok(Decision::NoJump);
                }
                j.a.mul_into(mid, buf);
                let f = C64::from((n2 / w).sqrt());
                for (m, b) in mid.iter_mut().zip(buf.iter()) {
                    *m = b * f;
                }
                *sign *= j.sign;
                return Ok(Decision::Jump { negative: j.sign < 0 });
            }
        }
        unreachable!("jump list is nonempty when p_total > 0")
    }

    /// One full step of `traj` (half propagation, decision, half propagation).
    pub fn step<R: Rng>(&self, traj: &mut Trajectory, rng: &mut R) -> Result<StepOutcome> {
        if traj.psi.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: traj.psi.len(),
            });
        }
        let mut mid = vec![C64::new(0.0, 0.0); self.dim];
        let mut buf = mid.clone();
        self.k_half.mul_into(traj.psi.as_slice(), &mut mid);
        let decision = if self.jumps.is_empty() {
            Decision::NoJump
        } else {
            self.decide(&mut mid, &mut buf, &mut traj.sign, rng)?
        };
        self.k_half.mul_into(&mid, traj.psi.as_mut_slice());
        traj.t += self.dt;
        Ok(match decision {
            Decision::NoJump => StepOutcome::NoJump,
            Decision::Jump { negative } => {
                if negative && traj.first_negative.is_none() {
                    traj.first_negative = Some(traj.t);
                }
                StepOutcome::Jump { negative }
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Decision {
    NoJump,
    Jump { negative: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    NoJump,
    Jump { negative: bool },
}

/// Unnormalized state, sign bit and clock of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub psi: StateVector,
    pub sign: i8,
    pub t: f64,
    pub rng_stream: u64,
    pub first_negative: Option<f64>,
}

impl Trajectory {
    pub fn new(psi0: StateVector, rng_stream: u64) -> Self {
        Self {
            psi: psi0,
            sign: 1,
            t: 0.0,
            rng_stream,
            first_negative: None,
        }
    }
}

/// Random stream of trajectory `index` under `master_seed`.
pub fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Run parameters of an ensemble.
#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub n_trajectories: usize,
    /// Output times, ascending multiples of `dt` starting at or after 0.
    pub t_grid: Vec<f64>,
    pub master_seed: u64,
    /// Trajectories per reduction block.
    pub block_size: usize,
    /// Accumulate `Σ s ψψ†` at every output time.
    pub track_density: bool,
}

impl EnsembleConfig {
    pub fn new(n_trajectories: usize, t_grid: Vec<f64>, master_seed: u64) -> Self {
        Self {
            n_trajectories,
            t_grid,
            master_seed,
            block_size: 100,
            track_density: false,
        }
    }
}

/// Sums over the trajectories of one block, per output time.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockStats {
    pub count: usize,
    /// `Σ s‖ψ‖²`
    pub norm_sum: Vec<f64>,
    /// `Σ ‖ψ‖⁴`
    pub norm_sq_sum: Vec<f64>,
    /// `Σ s⟨ψ|O_k|ψ⟩` per observable.
    pub obs_sum: Vec<Vec<f64>>,
    /// `Σ (s⟨ψ|O_k|ψ⟩)²` per observable.
    pub obs_sq_sum: Vec<Vec<f64>>,
    pub negative_count: Vec<usize>,
    pub rho_sum: Option<Vec<Operator>>,
}

impl BlockStats {
    fn new(n_times: usize, n_obs: usize, dim: usize, track_density: bool) -> Self {
        Self {
            count: 0,
            norm_sum: vec![0.0; n_times],
            norm_sq_sum: vec![0.0; n_times],
            obs_sum: vec![vec![0.0; n_times]; n_obs],
            obs_sq_sum: vec![vec![0.0; n_times]; n_obs],
            negative_count: vec![0; n_times],
            rho_sum: track_density.then(|| vec![opcore::zeros(dim); n_times]),
        }
    }

    fn merge(&mut self, other: &BlockStats) {
        self.count += other.count;
        for (a, b) in self.norm_sum.iter_mut().zip(&other.norm_sum) {
            *a += b;
        }
        for (a, b) in self.norm_sq_sum.iter_mut().zip(&other.norm_sq_sum) {
            *a += b;
        }
        for (xs, ys) in self.obs_sum.iter_mut().zip(&other.obs_sum) {
            for (a, b) in xs.iter_mut().zip(ys) {
                *a += b;
            }
        }
        for (xs, ys) in self.obs_sq_sum.iter_mut().zip(&other.obs_sq_sum) {
            for (a, b) in xs.iter_mut().zip(ys) {
                *a += b;
            }
        }
        for (a, b) in self.negative_count.iter_mut().zip(&other.negative_count) {
            *a += b;
        }
        if let (Some(r), Some(o)) = (self.rho_sum.as_mut(), other.rho_sum.as_ref()) {
            for (a, b) in r.iter_mut().zip(o) {
                *a += b;
            }
        }
    }
}

/// Raw ensemble output: block statistics in trajectory order plus the first
/// negative-jump time of every trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleOutput {
    pub times: Vec<f64>,
    pub blocks: Vec<BlockStats>,
    pub first_negative: Vec<Option<f64>>,
    pub n_observables: usize,
}

/// Observables `|α⟩⟨α|`-style are passed as Hermitian operators; their
/// expectation values are tracked per trajectory.
pub fn run_ensemble(
    system: &PlqtSystem,
    psi0: &StateVector,
    observables: &[Operator],
    cfg: &EnsembleConfig,
) -> Result<EnsembleOutput> {
    let d = system.dim;
    if psi0.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: psi0.len(),
        });
    }
    if (psi0.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidParameter {
            name: "psi0",
            reason: format!("must be normalized, has norm {}", psi0.norm()),
        });
    }
    if cfg.n_trajectories == 0 || cfg.block_size == 0 {
        return Err(Error::InvalidParameter {
            name: "n_trajectories",
            reason: "ensemble and block size must be positive".into(),
        });
    }
    for o in observables {
        if o.nrows() != d || o.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: o.nrows(),
            });
        }
    }
    let steps = output_steps(&cfg.t_grid, system.dt)?;
    let obs: Vec<Dense> = observables.iter().map(|o| Dense::from_op(&opcore::hermitize(o))).collect();
    let n_blocks = cfg.n_trajectories.div_ceil(cfg.block_size);

    let run_block = |b: usize| -> Result<(BlockStats, Vec<Option<f64>>)> {
        let lo = b * cfg.block_size;
        let hi = (lo + cfg.block_size).min(cfg.n_trajectories);
        let mut stats = BlockStats::new(steps.len(), obs.len(), d, cfg.track_density);
        let mut first = Vec::with_capacity(hi - lo);
        let mut work = Workspace::new(d);
        for idx in lo..hi {
            first.push(run_one(system, psi0, &obs, &steps, cfg.master_seed, idx as u64, &mut stats, &mut work)?);
        }
        stats.count = hi - lo;
        Ok((stats, first))
    };

    #[cfg(feature = "parallel")]
    let results: Vec<Result<(BlockStats, Vec<Option<f64>>)>> = {
        use rayon::prelude::*;
        (0..n_blocks).into_par_iter().map(run_block).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<(BlockStats, Vec<Option<f64>>)>> = (0..n_blocks).map(run_block).collect();

    let mut blocks = Vec::with_capacity(n_blocks);
    let mut first_negative = Vec::with_capacity(cfg.n_trajectories);
    for r in results {
        let (s, f) = r?;
        blocks.push(s);
        first_negative.extend(f);
    }
    Ok(EnsembleOutput {
        times: cfg.t_grid.clone(),
        blocks,
        first_negative,
        n_observables: obs.len(),
    })
}

/// Step indices of the output times.
fn output_steps(t_grid: &[f64], dt: f64) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(t_grid.len());
    let mut prev = 0usize;
    for (i, &t) in t_grid.iter().enumerate() {
        let k = (t / dt).round();
        if !(t >= 0.0) || (t / dt - k).abs() > 1e-6 || (i > 0 && (k as usize) < prev) {
            return Err(Error::InvalidParameter {
                name: "t_grid",
                reason: format!("output time {t} is not an ascending multiple of dt = {dt}"),
            });
        }
        prev = k as usize;
        out.push(prev);
    }
    Ok(out)
}

struct Workspace {
    psi: Vec<C64>,
    mid: Vec<C64>,
    buf: Vec<C64>,
}

impl Workspace {
    fn new(d: usize) -> Self {
        let z = vec![C64::new(0.0, 0.0); d];
        Self {
            psi: z.clone(),
            mid: z.clone(),
            buf: z,
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_one(
    sys: &PlqtSystem,
    psi0: &StateVector,
    obs: &[Dense],
    steps: &[usize],
    seed: u64,
    index: u64,
    stats: &mut BlockStats,
    w: &mut Workspace,
) -> Result<Option<f64>> {
    let mut rng = trajectory_rng(seed, index);
    let mut sign: i8 = 1;
    let mut log_scale = 0.0f64;
    let mut first_negative = None;
    w.psi.copy_from_slice(psi0.as_slice());

    let record = |k: usize, psi: &[C64], sign: i8, log_scale: f64, stats: &mut BlockStats| {
        let scale = (2.0 * log_scale).exp();
        let s = f64::from(sign) * scale;
        let w = s * norm_sq(psi);
        stats.norm_sum[k] += w;
        stats.norm_sq_sum[k] += w * w;
        for (o, dense) in obs.iter().enumerate() {
            let x = s * dense.quad(psi);
            stats.obs_sum[o][k] += x;
            stats.obs_sq_sum[o][k] += x * x;
        }
        if sign < 0 {
            stats.negative_count[k] += 1;
        }
        if let Some(r) = stats.rho_sum.as_mut() {
            let v = StateVector::from_column_slice(psi);
            r[k] += v.clone() * v.adjoint() * C64::from(s);
        }
    };

    let mut out = 0;
    while out < steps.len() && steps[out] == 0 {
        record(out, &w.psi, sign, log_scale, stats);
        out += 1;
    }
    if out == steps.len() {
        return Ok(None);
    }
    let last = *steps.last().expect("nonempty");
    sys.k_half.mul_into(&w.psi, &mut w.mid);
    for step in 1..=last {
        if !sys.jumps.is_empty() {
            let d = sys.decide(&mut w.mid, &mut w.buf, &mut sign, &mut rng)?;
            if d == (Decision::Jump { negative: true }) && first_negative.is_none() {
                first_negative = Some(step as f64 * sys.dt);
            }
        }
        let n2 = norm_sq(&w.mid);
        if !(RESCALE_LO..=RESCALE_HI).contains(&n2) {
            let f = 1.0 / n2.sqrt();
            w.mid.iter_mut().for_each(|z| *z *= f);
            log_scale += 0.5 * n2.ln();
        }
        if steps[out] == step {
            sys.k_half.mul_into(&w.mid, &mut w.psi);
            while out < steps.len() && steps[out] == step {
                record(out, &w.psi, sign, log_scale, stats);
                out += 1;
            }
            if out == steps.len() {
                break;
            }
            sys.k_half.mul_into(&w.psi, &mut w.mid);
        } else {
            sys.k_full.mul_into(&w.mid, &mut w.buf);
            std::mem::swap(&mut w.mid, &mut w.buf);
        }
    }
    Ok(first_negative)
}

/// Sample estimate at one output time.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleEstimate {
    pub t: f64,
    pub n: usize,
    /// `𝒩(t) = Σ s‖ψ‖²`
    pub normalization: f64,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub negative_fraction: f64,
    /// Kish effective sample size `𝒩²/Σ‖ψ‖⁴`.
    pub n_eff: f64,
    pub rho_sample: Option<Operator>,
    /// `|𝒩|/N` below [`COLLAPSE_THRESHOLD`].
    pub collapsed: bool,
}

impl EnsembleOutput {
    pub fn n_trajectories(&self) -> usize {
        self.blocks.iter().map(|b| b.count).sum()
    }

    /// Merge consecutive blocks `range`.
    pub fn merged(&self, range: std::ops::Range<usize>) -> BlockStats {
        let mut it = self.blocks[range].iter();
        let mut acc = it.next().expect("nonempty block range").clone();
        for b in it {
            acc.merge(b);
        }
        acc
    }

    /// Estimates over all trajectories.
    pub fn estimates(&self) -> Vec<EnsembleEstimate> {
        estimates_of(&self.merged(0..self.blocks.len()), &self.times)
    }

    /// Estimates from disjoint groups of `group_blocks` consecutive blocks.
    pub fn group_estimates(&self, group_blocks: usize) -> Vec<Vec<EnsembleEstimate>> {
        (0..self.blocks.len() / group_blocks)
            .map(|g| estimates_of(&self.merged(g * group_blocks..(g + 1) * group_blocks), &self.times))
            .collect()
    }
}

/// Ratio estimator `Σx/𝒩` with standard error `σ(p^(n))/√N`,
/// `p^(n) = x_n N/𝒩`.
pub fn estimates_of(s: &BlockStats, times: &[f64]) -> Vec<EnsembleEstimate> {
    let n = s.count as f64;
    times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let norm = s.norm_sum[k];
            let collapsed = norm.abs() < COLLAPSE_THRESHOLD * n;
            let mut mean = Vec::with_capacity(s.obs_sum.len());
            let mut stderr = Vec::with_capacity(s.obs_sum.len());
            for o in 0..s.obs_sum.len() {
                let m = s.obs_sum[o][k] / norm;
                let second = s.obs_sq_sum[o][k] * (n / norm).powi(2);
                let var = if s.count > 1 {
                    ((second - n * m * m) / (n - 1.0)).max(0.0)
                } else {
                    0.0
                };
                mean.push(m);
                stderr.push((var / n).sqrt());
            }
            EnsembleEstimate {
                t,
                n: s.count,
                normalization: norm,
                mean,
                stderr,
                negative_fraction: s.negative_count[k] as f64 / n,
                n_eff: if s.norm_sq_sum[k] > 0.0 { norm * norm / s.norm_sq_sum[k] } else { 0.0 },
                rho_sample: s.rho_sum.as_ref().map(|r| &r[k] / C64::from(norm)),
                collapsed,
            }
        })
        .collect()
}

/// `(mean(t), stderr(t))` of observable `index`.
pub fn observable_series(out: &EnsembleOutput, index: usize) -> (Vec<f64>, Vec<f64>) {
    let est = out.estimates();
    (
        est.iter().map(|e| e.mean[index]).collect(),
        est.iter().map(|e| e.stderr[index]).collect(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignStatistics {
    pub negative_fraction: Vec<f64>,
    /// Mean first negative-jump time over trajectories that had one.
    pub tau_hat: Option<f64>,
    /// Trajectories without any negative jump.
    pub censored: usize,
}

pub fn sign_statistics(out: &EnsembleOutput) -> SignStatistics {
    let s = out.merged(0..out.blocks.len());
    let n = s.count as f64;
    let hits: Vec<f64> = out.first_negative.iter().flatten().copied().collect();
    SignStatistics {
        negative_fraction: s.negative_count.iter().map(|&c| c as f64 / n).collect(),
        tau_hat: (!hits.is_empty()).then(|| hits.iter().sum::<f64>() / hits.len() as f64),
        censored: out.first_negative.len() - hits.len(),
    }
}
