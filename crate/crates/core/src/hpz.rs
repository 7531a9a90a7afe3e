//! Hu-Paz-Zhang master equation for a damped oscillator, written in Redfield
//! form with coupling operator `S = q` and
//! `𝕊^HPZ = M²D_p q + (iγ_p/2 − M D_q) p`, then in pseudo-Lindblad form.
//!
//! Operators live in a Fock space truncated at dimension `D`, where
//! `[a, a†] = diag(1, …, 1, 1 − D)` is traceless.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::opcore::{self, anticommutator, commutator, frobenius_norm_sq, Operator, C64, I};
use crate::plform::{self, JumpPair, PseudoLindbladForm, TransformParams};

/// Default Fock-space truncation.
pub const DEFAULT_TRUNCATION: usize = 30;

/// A time-dependent coefficient.
pub type Coefficient = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

pub fn constant(v: f64) -> Coefficient {
    Arc::new(move |_| v)
}

/// Oscillator parameters plus the four HPZ coefficient functions.
#[derive(Clone)]
pub struct HpzCoefficients {
    pub mass: f64,
    pub omega: f64,
    pub beta: Option<f64>,
    pub gamma_q: Coefficient,
    pub gamma_p: Coefficient,
    pub d_q: Coefficient,
    pub d_p: Coefficient,
}

impl fmt::Debug for HpzCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HpzCoefficients")
            .field("mass", &self.mass)
            .field("omega", &self.omega)
            .field("beta", &self.beta)
            .field("at_t0", &self.at(0.0))
            .finish()
    }
}

/// Coefficients frozen at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HpzSnapshot {
    pub mass: f64,
    pub omega: f64,
    pub gamma_q: f64,
    pub gamma_p: f64,
    pub d_q: f64,
    pub d_p: f64,
}

impl HpzCoefficients {
    pub fn new(
        mass: f64,
        omega: f64,
        gamma_q: Coefficient,
        gamma_p: Coefficient,
        d_q: Coefficient,
        d_p: Coefficient,
    ) -> Result<Self> {
        for (name, v) in [("mass", mass), ("omega", omega)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive, got {v}"),
                });
            }
        }
        Ok(Self {
            mass,
            omega,
            beta: None,
            gamma_q,
            gamma_p,
            d_q,
            d_p,
        })
    }

    /// Static coefficients.
    pub fn constant(mass: f64, omega: f64, gamma_q: f64, gamma_p: f64, d_q: f64, d_p: f64) -> Result<Self> {
        Self::new(mass, omega, constant(gamma_q), constant(gamma_p), constant(d_q), constant(d_p))
    }

    /// Quantum Brownian motion: `γ_q = Ω²`, `γ_p = γ`, `D_q = 0`, `D_p = γ/(Mβ)`.
    pub fn brownian(mass: f64, omega: f64, gamma: f64, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "beta",
                reason: format!("must be positive, got {beta}"),
            });
        }
        let mut c = Self::constant(mass, omega, omega * omega, gamma, 0.0, gamma / (mass * beta))?;
        c.beta = Some(beta);
        Ok(c)
    }

    pub fn at(&self, t: f64) -> HpzSnapshot {
        HpzSnapshot {
            mass: self.mass,
            omega: self.omega,
            gamma_q: (self.gamma_q)(t),
            gamma_p: (self.gamma_p)(t),
            d_q: (self.d_q)(t),
            d_p: (self.d_p)(t),
        }
    }
}

impl HpzSnapshot {
    /// Coefficient of `p` in `𝕊^HPZ`: `iγ_p/2 − M D_q`.
    pub fn p_coefficient(&self) -> C64 {
        C64::new(-self.mass * self.d_q, self.gamma_p / 2.0)
    }

    /// Coefficient of `q` in `𝕊^HPZ`: `M² D_p`.
    pub fn q_coefficient(&self) -> f64 {
        self.mass * self.mass * self.d_p
    }

    /// `x = Ω²γ_p²/(4M²D_p²) + Ω²D_q²/D_p²`
    fn root_excess(&self) -> f64 {
        let (m, w) = (self.mass, self.omega);
        (w * self.gamma_p / (2.0 * m * self.d_p)).powi(2) + (w * self.d_q / self.d_p).powi(2)
    }

    /// `√(1 + x)`
    fn root(&self) -> f64 {
        (1.0 + self.root_excess()).sqrt()
    }
}

/// `q = (a† + a)/√(2MΩ)` and `p = i√(MΩ/2)(a† − a)`.
pub fn hpz_operators(dim: usize, mass: f64, omega: f64) -> Result<(Operator, Operator)> {
    let (a, ad) = opcore::truncated_boson_ops(dim)?;
    let q = (&ad + &a) * C64::from((1.0 / (2.0 * mass * omega)).sqrt());
    let p = (&ad - &a) * (I * (mass * omega / 2.0).sqrt());
    Ok((q, p))
}

/// `𝕊^HPZ = M²D_p q + (iγ_p/2 − M D_q) p`
pub fn hpz_convolved(c: &HpzSnapshot, q: &Operator, p: &Operator) -> Result<Operator> {
    opcore::check_same_dim(q, p)?;
    Ok(q * C64::from(c.q_coefficient()) + p * c.p_coefficient())
}

/// `p²/2M + Mγ_q q²/2`
pub fn hpz_coherent(c: &HpzSnapshot, q: &Operator, p: &Operator) -> Operator {
    p * p * C64::from(1.0 / (2.0 * c.mass)) + q * q * C64::from(c.mass * c.gamma_q / 2.0)
}

/// HPZ right-hand side as the sum of double commutators.
pub fn hpz_generator(c: &HpzSnapshot, q: &Operator, p: &Operator, rho: &Operator) -> Result<Operator> {
    opcore::check_same_dim(q, p)?;
    opcore::check_same_dim(q, rho)?;
    let h = hpz_coherent(c, q, p);
    let m = c.mass;
    Ok(commutator(&h, rho) * (-I) - commutator(q, &commutator(q, rho)) * C64::from(m * m * c.d_p)
        - commutator(q, &anticommutator(p, rho)) * (I * (c.gamma_p / 2.0))
        + commutator(q, &commutator(p, rho)) * C64::from(m * c.d_q))
}

/// HPZ right-hand side as `−i[H, ρ] + (𝕊ρq − q𝕊ρ + h.c.)`.
pub fn hpz_generator_redfield_form(c: &HpzSnapshot, q: &Operator, p: &Operator, rho: &Operator) -> Result<Operator> {
    let sc = hpz_convolved(c, q, p)?;
    opcore::check_same_dim(q, rho)?;
    let h = hpz_coherent(c, q, p);
    let x = &sc * rho * q - q * &sc * rho;
    Ok(commutator(&h, rho) * (-I) + &x + x.adjoint())
}

/// `H_LS^HPZ = (γ_p/4){q, p} − (M D_q/2i)[q, p]`, split into the
/// anticommutator operator and the commutator piece.
#[derive(Debug, Clone, PartialEq)]
pub struct HpzLambShift {
    /// `(γ_p/4){q, p}`
    pub anticommutator_part: Operator,
    /// `−(M D_q/2i)[q, p]` on the truncated space, `−(M D_q/2)[a, a†]`.
    pub commutator_part: Operator,
    /// The constant the commutator piece reduces to below the cutoff,
    /// `−M D_q/2`.
    pub energy_offset: f64,
}

impl HpzLambShift {
    pub fn full(&self) -> Operator {
        &self.anticommutator_part + &self.commutator_part
    }
}

pub fn hpz_lamb_shift(c: &HpzSnapshot, q: &Operator, p: &Operator) -> Result<HpzLambShift> {
    opcore::check_same_dim(q, p)?;
    let anti = anticommutator(q, p) * C64::from(c.gamma_p / 4.0);
    let comm = commutator(q, p) * (C64::from(-c.mass * c.d_q) / (I * 2.0));
    Ok(HpzLambShift {
        anticommutator_part: opcore::hermitize(&anti),
        commutator_part: opcore::hermitize(&comm),
        energy_offset: -c.mass * c.d_q / 2.0,
    })
}

/// `A_σ^HPZ = e^{iσφ/2} λ⁻¹[(σλ²e^{−iσφ} + M²D_p) q + (iγ_p/2 − M D_q) p]/√(2 cos φ)`,
/// i.e. [`plform::lambda_phi_jumps`] for `(q, 𝕊^HPZ)` assembled from the scalar
/// coefficients.
pub fn hpz_jump_pair(c: &HpzSnapshot, q: &Operator, p: &Operator, params: TransformParams) -> Result<JumpPair> {
    let (lam, phi) = (params.lam(), params.phi());
    let md = c.q_coefficient();
    let qc = |sigma: f64| C64::from_polar(sigma * lam * lam, -sigma * phi) + md;
    build_pair(c, q, p, lam, phi, qc(1.0), qc(-1.0))
}

/// [`hpz_jump_pair`] at the closed-form optimum. The `q` coefficient of
/// `A₋`, `M²D_p − λ² = −M²D_p x/(1 + √(1 + x))`, is evaluated without
/// cancellation, which matters deep in the Brownian limit (`x ~ (βΩ)²`).
pub fn hpz_optimal_pair(c: &HpzSnapshot, q: &Operator, p: &Operator) -> Result<JumpPair> {
    let params = hpz_optimal_params(c)?;
    let md = c.q_coefficient();
    let r = c.root();
    let plus = C64::from(md * (1.0 + r));
    let minus = C64::from(-md * c.root_excess() / (1.0 + r));
    build_pair(c, q, p, params.lam(), 0.0, plus, minus)
}

fn build_pair(
    c: &HpzSnapshot,
    q: &Operator,
    p: &Operator,
    lam: f64,
    phi: f64,
    q_plus: C64,
    q_minus: C64,
) -> Result<JumpPair> {
    opcore::check_hermitian(q)?;
    if p.shape() != q.shape() {
        return Err(Error::DimensionMismatch {
            expected: q.nrows(),
            got: p.nrows(),
        });
    }
    let norm = 1.0 / (lam * (2.0 * phi.cos()).sqrt());
    let pc = c.p_coefficient();
    let op = |sigma: f64, qc: C64| (q * qc + p * pc) * (C64::from_polar(norm, sigma * phi / 2.0));
    JumpPair::new(op(1.0, q_plus), op(-1.0, q_minus))
}

/// Closed-form optimum: `φ = 0` and
/// `λ² = M²D_p √(1 + Ω²γ_p²/(4M²D_p²) + Ω²D_q²/D_p²)`.
pub fn hpz_optimal_params(c: &HpzSnapshot) -> Result<TransformParams> {
    if !(c.d_p > 0.0 && c.d_p.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "d_p",
            reason: format!("optimal λ needs D_p > 0, got {}", c.d_p),
        });
    }
    TransformParams::new((c.q_coefficient() * c.root()).sqrt(), 0.0)
}

/// Closed-form minimal weights `M²D_p(σ + √(…))‖q‖²`.
pub fn hpz_minimal_weights(c: &HpzSnapshot, q_norm_sq: f64) -> Result<(f64, f64)> {
    hpz_optimal_params(c)?;
    let r = c.root();
    let base = c.q_coefficient() * q_norm_sq;
    Ok((base * (1.0 + r), base * (r - 1.0)))
}

/// Closed-form weights at arbitrary `(λ, φ)`.
pub fn hpz_weights(c: &HpzSnapshot, q_norm_sq: f64, p_norm_sq: f64, params: TransformParams) -> (f64, f64) {
    let (lam2, phi) = (params.lam() * params.lam(), params.phi());
    let md = c.q_coefficient();
    let b2 = c.p_coefficient().norm_sqr();
    let w = |sigma: f64| {
        ((lam2 * lam2 + sigma * lam2 * md * 2.0 * phi.cos() + md * md) * q_norm_sq + b2 * p_norm_sq)
            / (lam2 * 2.0 * phi.cos())
    };
    (w(1.0), w(-1.0))
}

/// The displayed leading-order Brownian-limit operators
/// `A₊ ≃ √(γ/2)[√(4M/β) q + i√(β/4M) p]`, `A₋ ≃ i√(γ/2)√(β/4M) p`.
pub fn brownian_limit_pair(mass: f64, gamma: f64, beta: f64, q: &Operator, p: &Operator) -> JumpPair {
    let g = (gamma / 2.0).sqrt();
    let cp = I * (g * (beta / (4.0 * mass)).sqrt());
    JumpPair {
        a_plus: q * C64::from(g * (4.0 * mass / beta).sqrt()) + p * cp,
        a_minus: p * cp,
    }
}

/// Pseudo-Lindblad form of the HPZ equation at one time.
pub fn hpz_pseudo_lindblad(
    c: &HpzSnapshot,
    q: &Operator,
    p: &Operator,
    params: TransformParams,
) -> Result<PseudoLindbladForm> {
    let h = hpz_coherent(c, q, p) + hpz_lamb_shift(c, q, p)?.full();
    Ok(PseudoLindbladForm {
        hamiltonian: h,
        pairs: vec![hpz_jump_pair(c, q, p, params)?],
    })
}

/// Truncation identities: `tr[a, a†]`, `tr(qp)`, and `‖p‖² − M²Ω²‖q‖²`
/// (relative).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationIdentities {
    pub trace_commutator: f64,
    pub trace_qp: f64,
    pub norm_ratio_residual: f64,
}

pub fn truncation_identities(dim: usize, mass: f64, omega: f64) -> Result<TruncationIdentities> {
    let (a, ad) = opcore::truncated_boson_ops(dim)?;
    let (q, p) = hpz_operators(dim, mass, omega)?;
    let (nq, np) = (frobenius_norm_sq(&q), frobenius_norm_sq(&p));
    Ok(TruncationIdentities {
        trace_commutator: opcore::trace(&commutator(&a, &ad)).norm(),
        trace_qp: opcore::trace(&(&q * &p)).norm(),
        norm_ratio_residual: (np - mass * mass * omega * omega * nq).abs() / np,
    })
}

/// Relative change of the `D`-independent optimum data (`λ²`, `w₋/w₊`) when
/// the truncation is doubled.
pub fn truncation_convergence(c: &HpzSnapshot, dim: usize) -> Result<f64> {
    let probe = |d: usize| -> Result<(f64, f64)> {
        let (q, p) = hpz_operators(d, c.mass, c.omega)?;
        let sc = hpz_convolved(c, &q, &p)?;
        let opt = plform::optimal_params(&q, &sc)?;
        let (wp, wm) = plform::minimal_weights(&q, &sc)?;
        Ok((opt.lam().powi(2), wm / wp))
    };
    let (l1, r1) = probe(dim)?;
    let (l2, r2) = probe(2 * dim)?;
    Ok(((l2 - l1).abs() / l1).max((r2 - r1).abs() / r1.abs().max(f64::MIN_POSITIVE)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opcore::{c, max_abs_diff};

    fn random_rho(d: usize, seed: u64) -> Operator {
        let a = Operator::from_fn(d, d, |i, j| {
            let x = ((i * 31 + j * 17) as f64 + seed as f64 * 0.37).sin();
            let y = ((i * 7 + j * 13) as f64 * 1.3 + seed as f64).cos();
            C64::new(x, y)
        });
        let r = &a * a.adjoint();
        let t = r.trace();
        r / t
    }

    #[test]
    fn two_level_operators() {
        let (q, p) = hpz_operators(2, 1.0, 2.0).unwrap();
        let cq = (1.0f64 / 4.0).sqrt();
        assert!(max_abs_diff(&q, &Operator::from_row_slice(2, 2, &[c(0.0), c(cq), c(cq), c(0.0)])) < 1e-15);
        let cp = 1.0;
        let expected = Operator::from_row_slice(2, 2, &[c(0.0), -I * cp, I * cp, c(0.0)]);
        assert!(max_abs_diff(&p, &expected) < 1e-15);
    }

    #[test]
    fn truncation_identities_hold() {
        for d in [2, 5, 30] {
            let t = truncation_identities(d, 1.3, 0.7).unwrap();
            assert_eq!(t.trace_commutator, 0.0);
            assert!(t.trace_qp < 1e-12);
            assert!(t.norm_ratio_residual < 1e-14);
        }
    }

    #[test]
    fn convolved_examples() {
        let (q, p) = hpz_operators(6, 1.0, 1.0).unwrap();
        let s = HpzCoefficients::constant(1.0, 1.0, 1.0, 0.0, 0.0, 0.3).unwrap().at(0.0);
        assert!(max_abs_diff(&hpz_convolved(&s, &q, &p).unwrap(), &(&q * c(0.3))) < 1e-15);
        let b = HpzCoefficients::brownian(2.0, 1.0, 0.1, 4.0).unwrap().at(0.0);
        let expected = &q * c(2.0 * 0.1 / 4.0) + &p * (I * 0.05);
        assert!(max_abs_diff(&hpz_convolved(&b, &q, &p).unwrap(), &expected) < 1e-15);
    }

    #[test]
    fn generator_forms_agree() {
        let (q, p) = hpz_operators(12, 1.2, 0.8).unwrap();
        let s = HpzCoefficients::constant(1.2, 0.8, 0.5, 0.3, 0.07, 0.4).unwrap().at(0.0);
        let rho = random_rho(12, 3);
        let a = hpz_generator(&s, &q, &p, &rho).unwrap();
        let b = hpz_generator_redfield_form(&s, &q, &p, &rho).unwrap();
        let scale = frobenius_norm_sq(&a).sqrt();
        assert!(max_abs_diff(&a, &b) < 1e-12 * scale);
        let plf = hpz_pseudo_lindblad(&s, &q, &p, TransformParams::new(0.9, 0.2).unwrap()).unwrap();
        let cc = plf.apply(&rho).unwrap();
        assert!(max_abs_diff(&a, &cc) < 1e-12 * scale);
    }

    #[test]
    fn zero_coefficients_give_oscillator() {
        let (q, p) = hpz_operators(5, 1.0, 1.0).unwrap();
        let s = HpzCoefficients::constant(1.0, 1.0, 1.0, 0.0, 0.0, 0.0).unwrap().at(0.0);
        let rho = random_rho(5, 1);
        let out = hpz_generator(&s, &q, &p, &rho).unwrap();
        let h = hpz_coherent(&s, &q, &p);
        assert!(max_abs_diff(&out, &(commutator(&h, &rho) * (-I))) < 1e-14);
        let ls = hpz_lamb_shift(&s, &q, &p).unwrap();
        assert_eq!(frobenius_norm_sq(&ls.full()), 0.0);
    }

    #[test]
    fn dephasing_only() {
        let (q, p) = hpz_operators(5, 1.0, 1.0).unwrap();
        let s = HpzCoefficients::constant(1.0, 1.0, 0.0, 0.0, 0.0, 0.2).unwrap().at(0.0);
        let rho = random_rho(5, 2);
        let h = hpz_coherent(&s, &q, &p);
        let out = hpz_generator(&s, &q, &p, &rho).unwrap() - commutator(&h, &rho) * (-I);
        let expected = commutator(&q, &commutator(&q, &rho)) * c(-0.2);
        assert!(max_abs_diff(&out, &expected) < 1e-14);
    }

    #[test]
    fn optimal_params_closed_form_matches_generic() {
        let s = HpzCoefficients::constant(1.1, 0.9, 0.8, 0.3, 0.05, 0.6).unwrap().at(0.0);
        let (q, p) = hpz_operators(30, s.mass, s.omega).unwrap();
        let sc = hpz_convolved(&s, &q, &p).unwrap();
        let closed = hpz_optimal_params(&s).unwrap();
        let generic = plform::optimal_params(&q, &sc).unwrap();
        assert_eq!(closed.phi(), 0.0);
        assert!((closed.lam() - generic.lam()).abs() < 1e-8 * closed.lam());
        assert!(generic.phi().abs() < 1e-8);
        let (wp, wm) = hpz_minimal_weights(&s, frobenius_norm_sq(&q)).unwrap();
        let (gp, gm) = plform::minimal_weights(&q, &sc).unwrap();
        assert!((wp - gp).abs() < 1e-10 * wp && (wm - gm).abs() < 1e-10 * wp);
    }

    #[test]
    fn jump_pair_matches_generic_mixing() {
        let s = HpzCoefficients::constant(1.1, 0.9, 0.8, 0.3, 0.05, 0.6).unwrap().at(0.0);
        let (q, p) = hpz_operators(12, s.mass, s.omega).unwrap();
        let sc = hpz_convolved(&s, &q, &p).unwrap();
        for (lam, phi) in [(1.0, 0.0), (0.7, 0.4), (1.9, -1.1)] {
            let params = TransformParams::new(lam, phi).unwrap();
            let ours = hpz_jump_pair(&s, &q, &p, params).unwrap();
            let generic = plform::lambda_phi_jumps(&q, &sc, params).unwrap();
            assert!(max_abs_diff(&ours.a_plus, &generic.a_plus) < 1e-13);
            assert!(max_abs_diff(&ours.a_minus, &generic.a_minus) < 1e-13);
        }
        let opt = hpz_optimal_pair(&s, &q, &p).unwrap();
        let direct = hpz_jump_pair(&s, &q, &p, hpz_optimal_params(&s).unwrap()).unwrap();
        assert!(max_abs_diff(&opt.a_plus, &direct.a_plus) < 1e-13);
        assert!(max_abs_diff(&opt.a_minus, &direct.a_minus) < 1e-13);
    }

    #[test]
    fn gksl_point_without_gamma_p_and_d_q() {
        let s = HpzCoefficients::constant(1.0, 1.0, 1.0, 0.0, 0.0, 0.4).unwrap().at(0.0);
        let p = hpz_optimal_params(&s).unwrap();
        assert!((p.lam().powi(2) - 0.4).abs() < 1e-15);
        let (wp, wm) = hpz_minimal_weights(&s, 3.0).unwrap();
        assert!((wp - 2.0 * 0.4 * 3.0).abs() < 1e-15 && wm == 0.0);
    }

    #[test]
    fn rejects_nonpositive_d_p() {
        let s = HpzCoefficients::constant(1.0, 1.0, 1.0, 0.2, 0.0, 0.0).unwrap().at(0.0);
        assert!(hpz_optimal_params(&s).is_err());
    }

    #[test]
    fn closed_form_weights_match_norms() {
        let s = HpzCoefficients::constant(0.7, 1.4, 0.8, 0.3, 0.05, 0.6).unwrap().at(0.0);
        let (q, p) = hpz_operators(20, s.mass, s.omega).unwrap();
        let params = TransformParams::new(1.3, -0.4).unwrap();
        let pair = hpz_jump_pair(&s, &q, &p, params).unwrap();
        let (np, nm) = pair.weights();
        let (wp, wm) = hpz_weights(&s, frobenius_norm_sq(&q), frobenius_norm_sq(&p), params);
        assert!((np - wp).abs() < 1e-12 * np && (nm - wm).abs() < 1e-12 * np);
        assert!(((np - nm) - 2.0 * s.q_coefficient() * frobenius_norm_sq(&q)).abs() < 1e-12 * np);
    }

    #[test]
    fn truncation_doubling_is_stable() {
        let s = HpzCoefficients::brownian(1.0, 1.0, 0.1, 0.5).unwrap().at(0.0);
        assert!(truncation_convergence(&s, DEFAULT_TRUNCATION).unwrap() < 1e-3);
    }
}
