//! Pseudo-Lindblad forms `𝒟(A₊) − 𝒟(A₋)` and their symmetry group.
//!
//! Phase convention: the `(λ, φ)` jump operators are
//!
//! ```text
//! A_σ = [σ λ e^{−iσφ/2} S + λ⁻¹ e^{iσφ/2} 𝕊] / √(2 cos φ)
//! ```
//!
//! which gives `‖A_σ‖² = σ Re tr(𝕊S) − tan φ Im tr(𝕊S) + (λ²‖S‖² + λ⁻²‖𝕊‖²)/(2 cos φ)`
//! and puts the minimum at `sin φ = Im tr(𝕊S)/(‖𝕊‖‖S‖)`. The opposite phase
//! sign merely mirrors `φ → −φ`; the dissipator is the same for both.

use nalgebra::{Matrix2, SymmetricEigen};

use crate::bath::BathSpec;
use crate::error::{Error, Result};
use crate::opcore::{self, check_same_dim, frobenius_norm_sq, gksl_apply, Operator, SpectralBasis, C64, I};
use crate::redfield::RedfieldGenerator;

/// Relative slack before `|Im tr(𝕊S)| > ‖𝕊‖‖S‖` is treated as corruption.
const CAUCHY_SCHWARZ_SLACK: f64 = 1e-12;
/// `|sin φ|` at or above this is the boundary with no finite optimum.
const BOUNDARY_SIN: f64 = 1.0 - 1e-12;

/// Point `(λ, φ)` of the symmetry group, `λ > 0`, `|φ| < π/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformParams {
    lam: f64,
    phi: f64,
}

impl TransformParams {
    pub fn new(lam: f64, phi: f64) -> Result<Self> {
        if !(lam > 0.0 && lam.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "lambda",
                reason: format!("must be positive and finite, got {lam}"),
            });
        }
        if !(phi.abs() < std::f64::consts::FRAC_PI_2) || phi.cos() <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "phi",
                reason: format!("requires |φ| < π/2, got {phi}"),
            });
        }
        Ok(Self { lam, phi })
    }

    /// Untransformed Redfield frame `λ = 1, φ = 0`.
    pub fn identity() -> Self {
        Self { lam: 1.0, phi: 0.0 }
    }

    /// Hyperbolic chart: `λ = cosh w − sinh w = e^{−w}`. The two charts agree
    /// on `λ` and coincide exactly at `φ = 0`.
    pub fn from_w(w: f64, phi: f64) -> Result<Self> {
        Self::new((-w).exp(), phi)
    }

    pub fn lam(&self) -> f64 {
        self.lam
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }
}

/// One positive- and one negative-weight jump operator.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpPair {
    pub a_plus: Operator,
    pub a_minus: Operator,
}

impl JumpPair {
    pub fn new(a_plus: Operator, a_minus: Operator) -> Result<Self> {
        check_same_dim(&a_plus, &a_minus)?;
        Ok(Self { a_plus, a_minus })
    }

    pub fn dim(&self) -> usize {
        self.a_plus.nrows()
    }

    /// `𝒟(A₊)[ρ] − 𝒟(A₋)[ρ]`
    pub fn dissipator(&self, rho: &Operator) -> Result<Operator> {
        check_same_dim(&self.a_plus, rho)?;
        Ok(self.apply(rho))
    }

    pub(crate) fn apply(&self, rho: &Operator) -> Operator {
        gksl_apply(&self.a_plus, rho) - gksl_apply(&self.a_minus, rho)
    }

    /// `(‖A₊‖², ‖A₋‖²)`
    pub fn weights(&self) -> (f64, f64) {
        (frobenius_norm_sq(&self.a_plus), frobenius_norm_sq(&self.a_minus))
    }

    /// `A₊A₊† − A₋A₋†`, invariant under [`transform_pair`].
    pub fn outer_combination(&self) -> Operator {
        &self.a_plus * self.a_plus.adjoint() - &self.a_minus * self.a_minus.adjoint()
    }

    /// `A₊†A₊ − A₋†A₋`, the signed drift operator.
    pub fn inner_combination(&self) -> Operator {
        self.a_plus.adjoint() * &self.a_plus - self.a_minus.adjoint() * &self.a_minus
    }
}

/// `(X₁, X₂) · M`, i.e. `X₁' = M₁₁X₁ + M₂₁X₂`, `X₂' = M₁₂X₁ + M₂₂X₂`.
fn mix(x1: &Operator, x2: &Operator, m: &Matrix2<C64>) -> (Operator, Operator) {
    (x1 * m[(0, 0)] + x2 * m[(1, 0)], x1 * m[(0, 1)] + x2 * m[(1, 1)])
}

/// Pseudo-unitary `W` with `W σᶻ W† = σᶻ`.
pub fn symmetry_matrix_w(w: f64, phi: f64, alpha: f64, beta: f64) -> Matrix2<C64> {
    let (ch, sh) = (w.cosh(), w.sinh());
    let ph = |x: f64| C64::from_polar(1.0, x);
    Matrix2::new(
        ph((phi + beta) / 2.0) * ch,
        ph((phi - beta) / 2.0) * sh,
        ph(-(phi - beta) / 2.0) * sh,
        ph(-(phi + beta) / 2.0) * ch,
    ) * ph(alpha)
}

/// `(A₊, A₋) → (A₊, A₋) · W(w, φ, 0, 0)`; the dissipator is unchanged.
pub fn transform_pair(pair: &JumpPair, w: f64, phi: f64) -> Result<JumpPair> {
    check_same_dim(&pair.a_plus, &pair.a_minus)?;
    let (a, b) = mix(&pair.a_plus, &pair.a_minus, &symmetry_matrix_w(w, phi, 0.0, 0.0));
    Ok(JumpPair {
        a_plus: a,
        a_minus: b,
    })
}

/// Rotate `(S, 𝕊)` with `U = [[1, −1], [1, 1]]/√2` so the Kossakowski matrix
/// becomes `σᶻ`: `A₊ = (S + 𝕊)/√2`, `A₋ = (𝕊 − S)/√2`.
pub fn diagonalize_channel(s_op: &Operator, s_conv: &Operator) -> Result<JumpPair> {
    check_same_dim(s_op, s_conv)?;
    let r = std::f64::consts::FRAC_1_SQRT_2;
    Ok(JumpPair {
        a_plus: (s_op + s_conv) * C64::from(r),
        a_minus: (s_conv - s_op) * C64::from(r),
    })
}

/// Jump operators `A_σ^(λ,φ)` for the channel `(S, 𝕊)`.
pub fn lambda_phi_jumps(s_op: &Operator, s_conv: &Operator, p: TransformParams) -> Result<JumpPair> {
    check_same_dim(s_op, s_conv)?;
    let norm = 1.0 / (2.0 * p.phi.cos()).sqrt();
    let e = C64::from_polar(1.0, p.phi / 2.0);
    let a_plus = s_op * (e.conj() * p.lam * norm) + s_conv * (e * (norm / p.lam));
    let a_minus = s_op * (-e * p.lam * norm) + s_conv * (e.conj() * (norm / p.lam));
    Ok(JumpPair { a_plus, a_minus })
}

/// `tr(𝕊S)`, `‖S‖²` and `‖𝕊‖²` for a channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelInvariants {
    pub tr_conv_s: C64,
    pub s_norm_sq: f64,
    pub conv_norm_sq: f64,
}

impl ChannelInvariants {
    pub fn of(s_op: &Operator, s_conv: &Operator) -> Result<Self> {
        check_same_dim(s_op, s_conv)?;
        Ok(Self {
            tr_conv_s: (s_conv * s_op).trace(),
            s_norm_sq: frobenius_norm_sq(s_op),
            conv_norm_sq: frobenius_norm_sq(s_conv),
        })
    }

    /// Closed-form `(‖A₊‖², ‖A₋‖²)` at `p`.
    pub fn weights(&self, p: TransformParams) -> (f64, f64) {
        let (x, y) = (self.tr_conv_s.re, self.tr_conv_s.im);
        let common = -p.phi.tan() * y
            + (p.lam * p.lam * self.s_norm_sq + self.conv_norm_sq / (p.lam * p.lam)) / (2.0 * p.phi.cos());
        (x + common, -x + common)
    }

    /// `w₊ − w₋ = 2 Re tr(𝕊S)`
    pub fn weight_difference(&self) -> f64 {
        2.0 * self.tr_conv_s.re
    }

    pub fn optimal_params(&self) -> Result<TransformParams> {
        let (sin_phi, _) = self.checked_sin_phi()?;
        let lam = (self.conv_norm_sq.sqrt() / self.s_norm_sq.sqrt()).sqrt();
        TransformParams::new(lam, sin_phi.asin())
    }

    /// `w_σ = σ Re tr(𝕊S) + √(‖S‖²‖𝕊‖² − Im²tr(𝕊S))`
    pub fn minimal_weights(&self) -> Result<(f64, f64)> {
        let (_, root) = self.checked_sin_phi()?;
        let x = self.tr_conv_s.re;
        Ok((x + root, -x + root))
    }

    fn checked_sin_phi(&self) -> Result<(f64, f64)> {
        if self.s_norm_sq == 0.0 {
            return Err(Error::ZeroOperator("S"));
        }
        if self.conv_norm_sq == 0.0 {
            return Err(Error::ZeroOperator("convolved S"));
        }
        let bound = (self.s_norm_sq * self.conv_norm_sq).sqrt();
        let im = self.tr_conv_s.im;
        if im.abs() > bound * (1.0 + CAUCHY_SCHWARZ_SLACK) {
            return Err(Error::CauchySchwarz { im: im.abs(), bound });
        }
        let sin_phi = (im / bound).clamp(-1.0, 1.0);
        if sin_phi.abs() >= BOUNDARY_SIN {
            return Err(Error::BoundaryPhase { sin_phi });
        }
        let root = (bound * bound - im * im).max(0.0).sqrt();
        Ok((sin_phi, root))
    }
}

pub fn weights(s_op: &Operator, s_conv: &Operator, p: TransformParams) -> Result<(f64, f64)> {
    Ok(ChannelInvariants::of(s_op, s_conv)?.weights(p))
}

/// `λ_min² = ‖𝕊‖/‖S‖`, `sin φ_min = Im tr(𝕊S)/(‖𝕊‖‖S‖)`
pub fn optimal_params(s_op: &Operator, s_conv: &Operator) -> Result<TransformParams> {
    ChannelInvariants::of(s_op, s_conv)?.optimal_params()
}

pub fn minimal_weights(s_op: &Operator, s_conv: &Operator) -> Result<(f64, f64)> {
    ChannelInvariants::of(s_op, s_conv)?.minimal_weights()
}

/// `⟨x⟩_S = Σ_qk |S_qk|² x(Δ_qk) / ‖S‖²`
pub fn weighted_average<F>(s_op: &Operator, basis: &SpectralBasis, f: F) -> Result<C64>
where
    F: Fn(f64) -> C64,
{
    let d = opcore::check_square(s_op)?;
    if basis.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            got: d,
        });
    }
    let norm = frobenius_norm_sq(s_op);
    if norm == 0.0 {
        return Err(Error::ZeroOperator("S"));
    }
    let mut acc = C64::new(0.0, 0.0);
    for q in 0..d {
        for k in 0..d {
            let w = s_op[(q, k)].norm_sqr();
            if w != 0.0 {
                acc += f(basis.splitting(q, k)) * w;
            }
        }
    }
    Ok(acc / norm)
}

/// `V[x]_S = ⟨x²⟩_S − ⟨x⟩_S²` for a real function.
pub fn weighted_variance<F>(s_op: &Operator, basis: &SpectralBasis, f: F) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let m = weighted_average(s_op, basis, |d| C64::from(f(d)))?.re;
    let m2 = weighted_average(s_op, basis, |d| C64::from(f(d).powi(2)))?.re;
    Ok(m2 - m * m)
}

/// Mean/variance form `‖S‖²⟨G′⟩(σ + √(1 + (V[G′] + V[G″])/⟨G′⟩²))` of the
/// minimal weights, for S-weighted or bare statistics alike.
pub fn minimal_weights_from_moments(s_norm_sq: f64, m: &DensityMoments) -> (f64, f64) {
    let root = (m.mean_re * m.mean_re + m.var_re + m.var_im).max(0.0).sqrt();
    (s_norm_sq * (m.mean_re + root), s_norm_sq * (-m.mean_re + root))
}

/// First and second moments of a complex density over a set of splittings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMoments {
    pub mean_re: f64,
    pub mean_im: f64,
    pub mean_abs_sq: f64,
    pub var_re: f64,
    pub var_im: f64,
}

impl DensityMoments {
    /// Moments with weights `w_i ≥ 0` (normalized internally).
    pub fn weighted(samples: impl IntoIterator<Item = (f64, C64)>) -> Self {
        let (mut sw, mut re, mut im, mut re2, mut im2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (w, g) in samples {
            sw += w;
            re += w * g.re;
            im += w * g.im;
            re2 += w * g.re * g.re;
            im2 += w * g.im * g.im;
        }
        let (re, im, re2, im2) = (re / sw, im / sw, re2 / sw, im2 / sw);
        Self {
            mean_re: re,
            mean_im: im,
            mean_abs_sq: re2 + im2,
            var_re: re2 - re * re,
            var_im: im2 - im * im,
        }
    }

    /// S-weighted moments `⟨·⟩_S` of a density table.
    pub fn s_weighted(s_op: &Operator, table: &nalgebra::DMatrix<C64>) -> Self {
        Self::weighted(s_op.iter().zip(table.iter()).map(|(s, g)| (s.norm_sqr(), *g)))
    }

    /// Bare moments `⟨·⟩ = D⁻² Σ_qk` of a density table.
    pub fn bare(table: &nalgebra::DMatrix<C64>) -> Self {
        Self::weighted(table.iter().map(|g| (1.0, *g)))
    }
}

/// Closed-form eigensystem of the `D² × D²` Kossakowski matrix
/// `M_(qk),(q'k') = G(Δ_qk) + G(Δ_q'k')*`.
#[derive(Debug, Clone, PartialEq)]
pub struct KossakowskiEigensystem {
    pub g_plus: f64,
    pub g_minus: f64,
    pub lam0: f64,
    pub phi0: f64,
    pub bare_averages: DensityMoments,
    pub dim: usize,
}

impl KossakowskiEigensystem {
    pub fn params(&self) -> Result<TransformParams> {
        TransformParams::new(self.lam0, self.phi0)
    }

    /// Bare-average estimate of the minimal weights for a channel with `‖S‖²`.
    pub fn weight_estimate(&self, s_norm_sq: f64) -> (f64, f64) {
        minimal_weights_from_moments(s_norm_sq, &self.bare_averages)
    }
}

/// Eigenvalues `g_σ = D²(⟨G′⟩ + σ√(⟨G′⟩² + V[G′] + V[G″]))` and
/// `λ₀² = √⟨|G|²⟩`, `sin φ₀ = ⟨G″⟩/√⟨|G|²⟩` from bare averages.
pub fn kossakowski_from_table(table: &nalgebra::DMatrix<C64>) -> Result<KossakowskiEigensystem> {
    let d = table.nrows();
    let m = DensityMoments::bare(table);
    if !(m.mean_re > 0.0) {
        return Err(Error::NonPositiveDensity(m.mean_re));
    }
    let n = (d * d) as f64;
    let root = (m.mean_re * m.mean_re + m.var_re + m.var_im).max(0.0).sqrt();
    let abs_rms = m.mean_abs_sq.sqrt();
    let sin_phi = (m.mean_im / abs_rms).clamp(-1.0, 1.0);
    if sin_phi.abs() >= BOUNDARY_SIN {
        return Err(Error::BoundaryPhase { sin_phi });
    }
    Ok(KossakowskiEigensystem {
        g_plus: n * (m.mean_re + root),
        g_minus: n * (m.mean_re - root),
        lam0: abs_rms.sqrt(),
        phi0: sin_phi.asin(),
        bare_averages: m,
        dim: d,
    })
}

pub fn kossakowski_eigensystem(basis: &SpectralBasis, bath: &BathSpec) -> Result<KossakowskiEigensystem> {
    kossakowski_from_table(&bath.density_table(basis, true)?)
}

/// Explicit `D² × D²` Kossakowski matrix, indexed by `q + D·k`.
pub fn kossakowski_matrix(table: &nalgebra::DMatrix<C64>) -> Operator {
    let g: Vec<C64> = table.iter().copied().collect();
    let n = g.len();
    Operator::from_fn(n, n, |i, j| g[i] + g[j].conj())
}

/// `Λ` with `Λ σˣ Λ† = σˣ`, normalized so that `(S, 𝕊) Λ U` reproduces
/// [`lambda_phi_jumps`] when `α = β = 0`.
pub fn lambda_matrix(lam: f64, phi: f64, alpha: f64, beta: f64) -> Matrix2<C64> {
    let (x, y) = ((phi - beta) / 2.0, (phi + beta) / 2.0);
    let pre = C64::from_polar(1.0 / phi.cos().sqrt(), alpha);
    Matrix2::new(
        C64::from(lam * x.cos()),
        -I * (lam * x.sin()),
        I * (y.sin() / lam),
        C64::from(y.cos() / lam),
    ) * pre
}

/// `U = [[1, −1], [1, 1]]/√2`
pub fn diagonalizing_unitary() -> Matrix2<C64> {
    let r = C64::from(std::f64::consts::FRAC_1_SQRT_2);
    Matrix2::new(r, -r, r, r)
}

/// Residuals of the `Λ` construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaCheck {
    /// `max |Λ σˣ Λ† − σˣ|`
    pub sigma_x_residual: f64,
    /// `max |(S, 𝕊) Λ U − A^(λ,φ)|` relative to `max(1, ‖S‖, ‖𝕊‖)`, with `α = β = 0`.
    pub jump_residual: f64,
}

pub fn lambda_symmetry_check(
    lam: f64,
    phi: f64,
    alpha: f64,
    beta: f64,
    s_op: &Operator,
    s_conv: &Operator,
) -> Result<LambdaCheck> {
    let p = TransformParams::new(lam, phi)?;
    let sx = Matrix2::new(C64::from(0.0), C64::from(1.0), C64::from(1.0), C64::from(0.0));
    let l = lambda_matrix(lam, phi, alpha, beta);
    let sigma_x_residual = (l * sx * l.adjoint() - sx).iter().map(|z| z.norm()).fold(0.0, f64::max);

    let lu = lambda_matrix(lam, phi, 0.0, 0.0) * diagonalizing_unitary();
    let (a_plus, a_minus) = mix(s_op, s_conv, &lu);
    let reference = lambda_phi_jumps(s_op, s_conv, p)?;
    let scale = 1f64
        .max(frobenius_norm_sq(s_op).sqrt())
        .max(frobenius_norm_sq(s_conv).sqrt());
    let jump_residual = opcore::max_abs_diff(&a_plus, &reference.a_plus)
        .max(opcore::max_abs_diff(&a_minus, &reference.a_minus))
        / scale;
    Ok(LambdaCheck {
        sigma_x_residual,
        jump_residual,
    })
}

/// Coherent part plus one jump pair per channel.
#[derive(Debug, Clone)]
pub struct PseudoLindbladForm {
    pub hamiltonian: Operator,
    pub pairs: Vec<JumpPair>,
}

impl PseudoLindbladForm {
    /// Rewrite a Redfield generator with per-channel parameters.
    pub fn from_redfield(gen: &RedfieldGenerator, params: &[TransformParams]) -> Result<Self> {
        if params.len() != gen.channels.len() {
            return Err(Error::DimensionMismatch {
                expected: gen.channels.len(),
                got: params.len(),
            });
        }
        let pairs = gen
            .channels
            .iter()
            .zip(params)
            .map(|(ch, p)| lambda_phi_jumps(&ch.s_op, &ch.s_conv, *p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            hamiltonian: gen.h_total(),
            pairs,
        })
    }

    /// Redfield frame `λ = 1, φ = 0` for every channel.
    pub fn unoptimized(gen: &RedfieldGenerator) -> Result<Self> {
        Self::from_redfield(gen, &vec![TransformParams::identity(); gen.channels.len()])
    }

    /// Each channel at its own optimum. Channels with `S = 0` or `𝕊 = 0`
    /// have no optimum and keep the identity frame.
    pub fn optimized(gen: &RedfieldGenerator) -> Result<Self> {
        let params = gen
            .channels
            .iter()
            .map(|ch| match optimal_params(&ch.s_op, &ch.s_conv) {
                Err(Error::ZeroOperator(_)) => Ok(TransformParams::identity()),
                other => other,
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_redfield(gen, &params)
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    pub fn apply(&self, rho: &Operator) -> Result<Operator> {
        check_same_dim(&self.hamiltonian, rho)?;
        Ok(self.apply_unchecked(rho))
    }

    pub(crate) fn apply_unchecked(&self, rho: &Operator) -> Operator {
        let mut out = opcore::commutator(&self.hamiltonian, rho) * (-I);
        for p in &self.pairs {
            out += p.apply(rho);
        }
        out
    }

    /// Drop every `A₋`, leaving a GKSL generator.
    pub fn truncate_negative(&self) -> Self {
        let d = self.dim();
        Self {
            hamiltonian: self.hamiltonian.clone(),
            pairs: self
                .pairs
                .iter()
                .map(|p| JumpPair {
                    a_plus: p.a_plus.clone(),
                    a_minus: opcore::zeros(d),
                })
                .collect(),
        }
    }

    /// `(Σ‖A₊‖², Σ‖A₋‖²)`
    pub fn total_weights(&self) -> (f64, f64) {
        self.pairs.iter().map(|p| p.weights()).fold((0.0, 0.0), |a, w| (a.0 + w.0, a.1 + w.1))
    }
}

/// Eigenvalues of a Hermitian operator in ascending order (test and report
/// helper; no eigenvector bookkeeping).
pub fn hermitian_eigenvalues(m: &Operator) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(opcore::hermitize(m)).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}
