//! Deterministic solvers and ultraweak-coupling quantities: RK4 integration,
//! steady states, rotating-wave rates, the Pauli rate equation and Gibbs
//! states.
//!
//! Rate matrices are stored as `rates[(to, from)]`: entry `(q, k)` is the rate
//! of the jump `|k⟩ → |q⟩`. With this layout the rotating-wave rate is
//! `rates[(q, k)] = 2 G′(Δ_qk) |S_qk|²`, it coincides with the weight
//! difference `|A₊,qk|² − |A₋,qk|²`, and detailed balance reads
//! `rates[(q, k)] / rates[(k, q)] = e^{−βΔ_qk}`.

use nalgebra::{DMatrix, DVector};

use crate::bath::BathSpec;
use crate::error::{Error, Result};
use crate::opcore::{self, Operator, SpectralBasis, C64, I};
use crate::plform::{JumpPair, PseudoLindbladForm, TransformParams};
use crate::redfield::RedfieldGenerator;

/// Trace deviation that aborts [`integrate_master`].
pub const TRACE_ABORT: f64 = 1e-6;
/// Weight-difference rates in `[−RATE_CLAMP, 0)` are set to zero.
pub const RATE_CLAMP: f64 = 1e-10;

/// A linear master-equation right-hand side `ρ ↦ ∂_t ρ`.
pub trait Generator {
    fn dim(&self) -> usize;
    fn apply(&self, rho: &Operator) -> Operator;
}

impl Generator for RedfieldGenerator {
    fn dim(&self) -> usize {
        RedfieldGenerator::dim(self)
    }
    fn apply(&self, rho: &Operator) -> Operator {
        self.apply_unchecked(rho)
    }
}

impl Generator for PseudoLindbladForm {
    fn dim(&self) -> usize {
        PseudoLindbladForm::dim(self)
    }
    fn apply(&self, rho: &Operator) -> Operator {
        self.apply_unchecked(rho)
    }
}

/// Wraps a closure as a [`Generator`].
pub struct FnGenerator<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&Operator) -> Operator> Generator for FnGenerator<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, rho: &Operator) -> Operator {
        (self.f)(rho)
    }
}

/// Fixed-step RK4 from `t_grid[0]`, returning `ρ` at each grid time. Steps
/// between grid points are shortened uniformly so grid times are hit exactly.
pub fn integrate_master<G: Generator + ?Sized>(
    gen: &G,
    rho0: &Operator,
    t_grid: &[f64],
    dt: f64,
) -> Result<Vec<Operator>> {
    let d = opcore::check_square(rho0)?;
    if d != gen.dim() {
        return Err(Error::DimensionMismatch {
            expected: gen.dim(),
            got: d,
        });
    }
    opcore::check_hermitian(rho0)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "dt",
            reason: format!("must be positive, got {dt}"),
        });
    }
    if (opcore::trace(rho0).re - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidParameter {
            name: "rho0",
            reason: format!("trace must be 1, got {}", opcore::trace(rho0).re),
        });
    }
    check_ascending(t_grid)?;

    let mut out = Vec::with_capacity(t_grid.len());
    let mut rho = rho0.clone();
    let mut t = match t_grid.first() {
        Some(&t0) => t0,
        None => return Ok(out),
    };
    for &target in t_grid {
        let span = target - t;
        if span > 0.0 {
            let n = (span / dt - 1e-9).ceil().max(1.0) as usize;
            let h = span / n as f64;
            for i in 0..n {
                rho = rk4_step(gen, &rho, h);
                let tr = opcore::trace(&rho).re;
                if (tr - 1.0).abs() > TRACE_ABORT {
                    return Err(Error::TraceDrift {
                        t: t + (i + 1) as f64 * h,
                        trace: tr,
                    });
                }
            }
            t = target;
        }
        out.push(rho.clone());
    }
    Ok(out)
}

fn rk4_step<G: Generator + ?Sized>(gen: &G, rho: &Operator, h: f64) -> Operator {
    let hc = C64::from(h);
    let k1 = gen.apply(rho);
    let k2 = gen.apply(&(rho + &k1 * (hc * 0.5)));
    let k3 = gen.apply(&(rho + &k2 * (hc * 0.5)));
    let k4 = gen.apply(&(rho + &k3 * hc));
    let next = rho + (k1 + (k2 + k3) * C64::from(2.0) + k4) * (hc / 6.0);
    opcore::hermitize(&next)
}

fn check_ascending(t: &[f64]) -> Result<()> {
    if t.windows(2).any(|w| !(w[1] >= w[0])) || t.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "t_grid",
            reason: "must be finite and ascending".into(),
        });
    }
    Ok(())
}

/// `D² × D²` matrix of a generator acting on column-stacked `vec(ρ)`.
pub fn generator_matrix<G: Generator + ?Sized>(gen: &G) -> Operator {
    opcore::superoperator_matrix(gen.dim(), |rho| gen.apply(rho))
}

/// Unique fixed point of a generator, Hermitized and trace-normalized.
pub fn steady_state<G: Generator + ?Sized>(gen: &G) -> Result<Operator> {
    let d = gen.dim();
    let m = generator_matrix(gen);
    let svd = m.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested V†");
    let smax = svd.singular_values.max();
    // Numerical-rank tolerance n·ε·σ_max: slow but physical modes (thermally
    // activated rates ~e^{−βΔ}) must not be mistaken for extra null vectors.
    let tol = (d * d) as f64 * f64::EPSILON * smax.max(f64::MIN_POSITIVE);
    let null: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= tol)
        .collect();
    if null.len() != 1 {
        return Err(Error::DegenerateSteadyState(null.len()));
    }
    let v: DVector<C64> = v_t.row(null[0]).adjoint();
    let rho = opcore::hermitize(&opcore::unvectorize(&v, d));
    let tr = opcore::trace(&rho);
    Ok(rho / tr)
}

/// Jump rates, `rates[(to, from)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix {
    pub rates: DMatrix<f64>,
}

impl RateMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            rates: DMatrix::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.rates.nrows()
    }

    /// Rate of `|from⟩ → |to⟩`.
    pub fn rate(&self, to: usize, from: usize) -> f64 {
        self.rates[(to, from)]
    }

    pub fn add(&mut self, other: &RateMatrix) -> Result<()> {
        if other.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        self.rates += &other.rates;
        Ok(())
    }

    /// `max |rates[(q,k)]/rates[(k,q)] − e^{−βΔ_qk}| / e^{−βΔ_qk}` over pairs
    /// with both rates above `floor`.
    pub fn detailed_balance_residual(&self, basis: &SpectralBasis, beta: f64, floor: f64) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for q in 0..d {
            for k in 0..d {
                let (a, b) = (self.rates[(q, k)], self.rates[(k, q)]);
                if q == k || a <= floor || b <= floor {
                    continue;
                }
                let expected = (-beta * basis.splitting(q, k)).exp();
                worst = worst.max((a / b - expected).abs() / expected);
            }
        }
        worst
    }

    /// Pauli generator `K` with `ṗ = K p`; columns sum to zero.
    pub fn pauli_generator(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut k = self.rates.clone();
        for q in 0..d {
            k[(q, q)] = 0.0;
        }
        for q in 0..d {
            let out: f64 = (0..d).filter(|&j| j != q).map(|j| self.rates[(j, q)]).sum();
            k[(q, q)] = -out;
        }
        k
    }
}

/// `rates[(q, k)] = 2 G′(Δ_qk) |S_qk|²` for `S` in the energy basis.
pub fn rwa_rates(s_op: &Operator, basis: &SpectralBasis, bath: &BathSpec) -> Result<RateMatrix> {
    let d = opcore::check_square(s_op)?;
    check_basis(basis, d)?;
    Ok(RateMatrix {
        rates: DMatrix::from_fn(d, d, |q, k| 2.0 * bath.g_real(basis.splitting(q, k)) * s_op[(q, k)].norm_sqr()),
    })
}

/// `H_LS^RWA = Σ_qk G″(Δ_qk) |S_qk|² |k⟩⟨k|`
pub fn rwa_lamb_shift(s_op: &Operator, basis: &SpectralBasis, bath: &BathSpec) -> Result<Operator> {
    rwa_lamb_shift_with(s_op, basis, |d| bath.g_imag(d))
}

/// [`rwa_lamb_shift`] for an arbitrary `G″`.
pub fn rwa_lamb_shift_with<F>(s_op: &Operator, basis: &SpectralBasis, g_imag: F) -> Result<Operator>
where
    F: Fn(f64) -> Result<f64>,
{
    let d = opcore::check_square(s_op)?;
    check_basis(basis, d)?;
    let mut out = opcore::zeros(d);
    for q in 0..d {
        for k in 0..d {
            let w = s_op[(q, k)].norm_sqr();
            if w != 0.0 {
                out[(k, k)] += C64::from(g_imag(basis.splitting(q, k))? * w);
            }
        }
    }
    Ok(out)
}

fn check_basis(basis: &SpectralBasis, d: usize) -> Result<()> {
    if basis.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            got: d,
        });
    }
    Ok(())
}

/// `rates[(q, k)] = |A₊,qk|² − |A₋,qk|²`, independent of the pair's
/// symmetry parameters.
pub fn rates_from_weight_difference(pair: &JumpPair) -> Result<RateMatrix> {
    let d = pair.dim();
    let mut rates = DMatrix::zeros(d, d);
    for q in 0..d {
        for k in 0..d {
            let r = pair.a_plus[(q, k)].norm_sqr() - pair.a_minus[(q, k)].norm_sqr();
            rates[(q, k)] = if r >= 0.0 {
                r
            } else if r >= -RATE_CLAMP {
                0.0
            } else {
                return Err(Error::NegativeRate {
                    row: q,
                    col: k,
                    value: r,
                });
            };
        }
    }
    Ok(RateMatrix { rates })
}

/// Populations `p(t)` of `ṗ_q = Σ_k [R_qk p_k − R_kq p_q]` at each grid time,
/// via the matrix exponential of the Pauli generator.
pub fn pauli_evolve(r: &RateMatrix, p0: &DVector<f64>, t_grid: &[f64]) -> Result<Vec<DVector<f64>>> {
    let d = r.dim();
    if p0.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: p0.len(),
        });
    }
    for q in 0..d {
        for k in 0..d {
            if q != k && r.rates[(q, k)] < 0.0 {
                return Err(Error::NegativeRate {
                    row: q,
                    col: k,
                    value: r.rates[(q, k)],
                });
            }
        }
    }
    let total: f64 = p0.sum();
    if (total - 1.0).abs() > 1e-10 || p0.iter().any(|&x| x < 0.0) {
        return Err(Error::InvalidParameter {
            name: "p0",
            reason: format!("must be a probability vector (sum {total})"),
        });
    }
    check_ascending(t_grid)?;
    let k = r.pauli_generator();
    let t0 = t_grid.first().copied().unwrap_or(0.0);
    Ok(t_grid
        .iter()
        .map(|&t| {
            let p = (&k * (t - t0)).exp() * p0;
            // The generator's columns sum to zero; remove rounding residue.
            let s = p.sum();
            p / s
        })
        .collect())
}

/// Canonical populations `e^{−βE_q}/Σ_k e^{−βE_k}`.
pub fn gibbs_populations(basis: &SpectralBasis, beta: f64) -> Result<DVector<f64>> {
    if !(beta >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "beta",
            reason: format!("must be nonnegative, got {beta}"),
        });
    }
    let e = basis.energies();
    let e0 = e.iter().copied().fold(f64::INFINITY, f64::min);
    let w = DVector::from_iterator(
        e.len(),
        e.iter().map(|&x| if beta.is_infinite() { f64::from(x == e0) } else { (-beta * (x - e0)).exp() }),
    );
    let z = w.sum();
    Ok(w / z)
}

/// Gibbs state, diagonal in the energy basis.
pub fn gibbs_state(basis: &SpectralBasis, beta: f64) -> Result<Operator> {
    let p = gibbs_populations(basis, beta)?;
    Ok(Operator::from_diagonal(&p.map(C64::from)))
}

/// Diagonal of `ρ` as real populations.
pub fn populations(rho: &Operator) -> DVector<f64> {
    DVector::from_iterator(rho.nrows(), rho.diagonal().iter().map(|z| z.re))
}

/// Redfield generator with every negative jump term dropped.
pub fn truncated_gksl_generator(gen: &RedfieldGenerator, params: &[TransformParams]) -> Result<PseudoLindbladForm> {
    Ok(PseudoLindbladForm::from_redfield(gen, params)?.truncate_negative())
}

/// `−i[H, ρ]`
pub fn coherent(h: &Operator) -> impl Fn(&Operator) -> Operator + '_ {
    move |rho| opcore::commutator(h, rho) * (-I)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opcore::{c, gksl_apply, ketbra};
    use crate::redfield::CouplingChannel;

    fn decay_gen(gamma: f64) -> PseudoLindbladForm {
        let a = ketbra(2, 0, 1) * c(gamma.sqrt());
        PseudoLindbladForm {
            hamiltonian: Operator::from_diagonal(&DVector::from_vec(vec![c(0.0), c(1.0)])),
            pairs: vec![JumpPair::new(a, opcore::zeros(2)).unwrap()],
        }
    }

    #[test]
    fn amplitude_damping_decay() {
        let g = 0.7;
        let gen = decay_gen(g);
        let rho0 = ketbra(2, 1, 1);
        let t = [0.0, 1.0 / g];
        let out = integrate_master(&gen, &rho0, &t, 0.01).unwrap();
        assert!((out[1][(1, 1)].re - (-1f64).exp()).abs() < 1e-9);
        assert!((opcore::trace(&out[1]).re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unitary_diagonal_hamiltonian_keeps_populations() {
        let h = Operator::from_diagonal(&DVector::from_vec(vec![c(-1.0), c(0.3), c(2.0)]));
        let gen = FnGenerator { dim: 3, f: coherent(&h) };
        let rho0 = Operator::from_fn(3, 3, |i, j| C64::new(if i == j { 1.0 / 3.0 } else { 0.1 }, 0.0));
        let out = integrate_master(&gen, &rho0, &[0.0, 0.5, 2.0], 0.01).unwrap();
        for r in &out {
            for q in 0..3 {
                assert!((r[(q, q)].re - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn trace_drift_aborts() {
        let gen = FnGenerator {
            dim: 2,
            f: |rho: &Operator| rho * c(1.0),
        };
        let err = integrate_master(&gen, &ketbra(2, 0, 0), &[0.0, 1.0], 0.1).unwrap_err();
        assert!(matches!(err, Error::TraceDrift { .. }));
    }

    #[test]
    fn unital_channel_steady_state_is_maximally_mixed() {
        let s = Operator::from_row_slice(3, 3, &[c(1.0), c(0.5), c(0.0), c(0.5), c(0.0), c(0.2), c(0.0), c(0.2), c(-1.0)]);
        let ch = CouplingChannel::new("s", s.clone(), s).unwrap();
        let h = Operator::from_diagonal(&DVector::from_vec(vec![c(0.0), c(1.0), c(3.0)]));
        let gen = RedfieldGenerator::new(h, vec![ch], true).unwrap();
        let rho = steady_state(&gen).unwrap();
        assert!(opcore::max_abs_diff(&rho, &(opcore::identity(3) / c(3.0))) < 1e-10);
    }

    #[test]
    fn degenerate_steady_state_reported() {
        let gen = FnGenerator {
            dim: 2,
            f: |rho: &Operator| rho * c(0.0),
        };
        assert_eq!(steady_state(&gen), Err(Error::DegenerateSteadyState(4)));
    }

    #[test]
    fn two_level_pauli_relaxation() {
        let mut r = RateMatrix::zeros(2);
        r.rates[(0, 1)] = 0.3;
        r.rates[(1, 0)] = 0.1;
        let p0 = DVector::from_vec(vec![0.0, 1.0]);
        let out = pauli_evolve(&r, &p0, &[0.0, 2.0]).unwrap();
        let pinf = 0.3 / 0.4;
        let expected = pinf + (0.0 - pinf) * (-0.4f64 * 2.0).exp();
        assert!((out[1][0] - expected).abs() < 1e-13);
        assert!((out[1].sum() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn symmetric_rates_give_uniform_distribution() {
        let mut r = RateMatrix::zeros(3);
        for (a, b, v) in [(0, 1, 0.2), (1, 2, 0.5), (0, 2, 0.1)] {
            r.rates[(a, b)] = v;
            r.rates[(b, a)] = v;
        }
        let out = pauli_evolve(&r, &DVector::from_vec(vec![1.0, 0.0, 0.0]), &[0.0, 200.0]).unwrap();
        for q in 0..3 {
            assert!((out[1][q] - 1.0 / 3.0).abs() < 1e-10);
        }
        r.rates[(0, 1)] = -0.1;
        assert!(pauli_evolve(&r, &DVector::from_vec(vec![1.0, 0.0, 0.0]), &[0.0]).is_err());
    }

    #[test]
    fn gibbs_limits() {
        let basis = SpectralBasis::from_energies(&[-1.0, 0.0, 2.0]);
        let p = gibbs_populations(&basis, 0.0).unwrap();
        assert!(p.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
        let p = gibbs_populations(&basis, f64::INFINITY).unwrap();
        assert_eq!(p.as_slice(), &[1.0, 0.0, 0.0]);
        let p = gibbs_populations(&basis, 2.0).unwrap();
        assert!((p[1] / p[0] - (-2f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn rwa_rates_diagonal_s_has_no_transfer() {
        let basis = SpectralBasis::from_energies(&[0.0, 1.0]);
        let bath = BathSpec::ohmic_drude(1.0, 5.0, 0.1).unwrap();
        let s = Operator::from_diagonal(&DVector::from_vec(vec![c(1.0), c(-1.0)]));
        let r = rwa_rates(&s, &basis, &bath).unwrap();
        assert_eq!(r.rates[(0, 1)], 0.0);
        assert_eq!(r.rates[(1, 0)], 0.0);
        assert!(r.rates[(0, 0)] > 0.0);
    }

    #[test]
    fn rwa_upward_rate_suppressed_at_low_temperature() {
        let basis = SpectralBasis::from_energies(&[0.0, 1.0]);
        let s = Operator::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]);
        let cold = BathSpec::ohmic_drude(1.0, 200.0, 0.1).unwrap();
        let r = rwa_rates(&s, &basis, &cold).unwrap();
        assert!(r.rate(1, 0) < 1e-80);
        assert!(r.rate(0, 1) > 0.5);
        assert!(r.detailed_balance_residual(&basis, 200.0, 0.0) < 1e-8);
    }

    #[test]
    fn weight_difference_rates_for_gksl_pair() {
        let a = Operator::from_fn(3, 3, |i, j| C64::new(i as f64 - j as f64, 0.5));
        let pair = JumpPair::new(a.clone(), opcore::zeros(3)).unwrap();
        let r = rates_from_weight_difference(&pair).unwrap();
        for q in 0..3 {
            for k in 0..3 {
                assert_eq!(r.rates[(q, k)], a[(q, k)].norm_sqr());
            }
        }
        let bad = JumpPair::new(opcore::zeros(3), a).unwrap();
        assert!(matches!(rates_from_weight_difference(&bad), Err(Error::NegativeRate { .. })));
    }

    #[test]
    fn rwa_lamb_shift_examples() {
        let basis = SpectralBasis::from_energies(&[0.0, 1.0]);
        let s = Operator::from_diagonal(&DVector::from_vec(vec![c(2.0), c(-1.0)]));
        let h = rwa_lamb_shift_with(&s, &basis, |_| Ok(0.5)).unwrap();
        assert!((h[(0, 0)].re - 2.0).abs() < 1e-15 && (h[(1, 1)].re - 0.5).abs() < 1e-15);
        let z = rwa_lamb_shift_with(&s, &basis, |_| Ok(0.0)).unwrap();
        assert_eq!(opcore::frobenius_norm_sq(&z), 0.0);
    }

    #[test]
    fn truncated_flat_density_is_exact() {
        let s = Operator::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]);
        let ch = CouplingChannel::new("s", s.clone(), &s * c(0.4)).unwrap();
        let gen = RedfieldGenerator::new(Operator::from_diagonal(&DVector::from_vec(vec![c(0.0), c(1.0)])), vec![ch], true).unwrap();
        let p = crate::plform::optimal_params(&gen.channels[0].s_op, &gen.channels[0].s_conv).unwrap();
        let trunc = truncated_gksl_generator(&gen, &[p]).unwrap();
        let rho = Operator::from_row_slice(2, 2, &[c(0.7), C64::new(0.1, 0.2), C64::new(0.1, -0.2), c(0.3)]);
        let a = Generator::apply(&gen, &rho);
        let b = Generator::apply(&trunc, &rho);
        assert!(opcore::max_abs_diff(&a, &b) < 1e-14);
        let _ = gksl_apply(&s, &rho);
    }
}
