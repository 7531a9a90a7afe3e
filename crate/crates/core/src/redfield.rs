//! Redfield generator in the energy eigenbasis.
//!
//! For a Hermitian coupling operator `S` the convolved operator `𝕊` has
//! entries `𝕊_qk = G(Δ_qk) S_qk`. The generator is
//! `∂ρ = −i[H_S + H_LS, ρ] + Σ_channels 𝒟^Red[ρ]` with
//! `H_LS = (S𝕊 − 𝕊†S)/(2i)` and the σˣ-paired dissipator
//! `𝒟^Red[ρ] = 𝕊ρS + Sρ𝕊† − ½{S𝕊 + 𝕊†S, ρ}`.

use nalgebra::DMatrix;

use crate::bath::BathSpec;
use crate::error::{Error, Result};
use crate::opcore::{self, check_hermitian, check_same_dim, Operator, SpectralBasis, C64, I};

/// Whether `𝕊` uses the full complex `G(Δ)` or only `G′(Δ) = J(Δ)n_β(Δ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChannelMode {
    #[default]
    Full,
    RealPartOnly,
}

/// `𝕊_qk = G_qk · S_qk` for a precomputed density table.
pub fn convolve_with_table(s_op: &Operator, table: &DMatrix<C64>) -> Result<Operator> {
    let d = opcore::check_square(s_op)?;
    if table.nrows() != d || table.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: table.nrows(),
        });
    }
    Ok(s_op.component_mul(table))
}

/// `𝕊_qk = g(Δ_qk) · S_qk` for an arbitrary coupling density `g`.
pub fn convolve_with<F>(s_op: &Operator, basis: &SpectralBasis, g: F) -> Result<Operator>
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
    Ok(Operator::from_fn(d, d, |q, k| g(basis.splitting(q, k)) * s_op[(q, k)]))
}

/// Convolved coupling operator of `s_op` (given in the energy basis).
///
/// Coupling-strength prefactors such as `√γ` belong inside `s_op`.
pub fn convolved_coupling(
    s_op: &Operator,
    basis: &SpectralBasis,
    bath: &BathSpec,
    mode: ChannelMode,
) -> Result<Operator> {
    let d = opcore::check_square(s_op)?;
    if basis.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            got: d,
        });
    }
    let table = bath.density_table(basis, mode == ChannelMode::Full)?;
    convolve_with_table(s_op, &table)
}

/// `H_LS = (S𝕊 − 𝕊†S)/(2i)`, Hermitian for Hermitian `S`.
pub fn lamb_shift(s_op: &Operator, s_conv: &Operator) -> Result<Operator> {
    check_same_dim(s_op, s_conv)?;
    let raw = (s_op * s_conv - s_conv.adjoint() * s_op) / (I * 2.0);
    let scale = opcore::frobenius_norm_sq(&raw).sqrt().max(f64::MIN_POSITIVE);
    let asym = opcore::hermiticity_residual(&raw);
    if asym > 1e-12 * scale.max(1.0) {
        return Err(Error::NotHermitian { asymmetry: asym });
    }
    Ok(opcore::hermitize(&raw))
}

/// `Σ_ij σˣ_ij [S_i ρ S_j† − ½{S_j† S_i, ρ}]` with `(S_1, S_2) = (S, 𝕊)`.
pub fn redfield_dissipator(s_op: &Operator, s_conv: &Operator, rho: &Operator) -> Result<Operator> {
    check_same_dim(s_op, s_conv)?;
    check_same_dim(s_op, rho)?;
    Ok(redfield_apply(s_op, s_conv, rho))
}

pub(crate) fn redfield_apply(s: &Operator, sc: &Operator, rho: &Operator) -> Operator {
    let sd = s.adjoint();
    let scd = sc.adjoint();
    let cross = &scd * s + &sd * sc;
    s * rho * &scd + sc * rho * &sd - opcore::anticommutator(&cross, rho) * C64::from(0.5)
}

/// One coupling channel: Hermitian `S` and its convolved partner `𝕊`, both
/// in the energy basis.
#[derive(Debug, Clone)]
pub struct CouplingChannel {
    pub label: String,
    pub s_op: Operator,
    pub s_conv: Operator,
    pub bath: Option<BathSpec>,
}

impl CouplingChannel {
    pub fn new(label: impl Into<String>, s_op: Operator, s_conv: Operator) -> Result<Self> {
        check_same_dim(&s_op, &s_conv)?;
        check_hermitian(&s_op)?;
        Ok(Self {
            label: label.into(),
            s_op,
            s_conv,
            bath: None,
        })
    }

    /// Channel for `s_op` (energy basis) with `𝕊` built from `bath`.
    pub fn from_bath(
        label: impl Into<String>,
        s_op: Operator,
        basis: &SpectralBasis,
        bath: &BathSpec,
        mode: ChannelMode,
    ) -> Result<Self> {
        let s_conv = convolved_coupling(&s_op, basis, bath, mode)?;
        let mut ch = Self::new(label, s_op, s_conv)?;
        ch.bath = Some(*bath);
        Ok(ch)
    }

    pub fn dim(&self) -> usize {
        self.s_op.nrows()
    }

    pub fn lamb_shift(&self) -> Result<Operator> {
        lamb_shift(&self.s_op, &self.s_conv)
    }

    pub fn dissipator(&self, rho: &Operator) -> Result<Operator> {
        redfield_dissipator(&self.s_op, &self.s_conv, rho)
    }
}

/// `∂ρ = −i[H_S + H_LS, ρ] + Σ 𝒟^Red_channel[ρ]`
#[derive(Debug, Clone)]
pub struct RedfieldGenerator {
    pub h_sys: Operator,
    pub h_lamb: Operator,
    pub channels: Vec<CouplingChannel>,
}

impl RedfieldGenerator {
    /// Assemble from a Hamiltonian and channels sharing its basis. The Lamb
    /// shift is the sum of the per-channel shifts, or zero when excluded.
    pub fn new(h_sys: Operator, channels: Vec<CouplingChannel>, include_lamb_shift: bool) -> Result<Self> {
        let d = opcore::check_square(&h_sys)?;
        check_hermitian(&h_sys)?;
        let mut h_lamb = opcore::zeros(d);
        for ch in &channels {
            if ch.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: ch.dim(),
                });
            }
            if include_lamb_shift {
                h_lamb += ch.lamb_shift()?;
            }
        }
        Ok(Self {
            h_sys,
            h_lamb,
            channels,
        })
    }

    /// Build in the energy eigenbasis from a Hamiltonian and coupling
    /// operators given in some other (e.g. lattice) basis.
    pub fn from_lattice(
        h_lattice: &Operator,
        couplings: &[Operator],
        bath: &BathSpec,
        mode: ChannelMode,
        include_lamb_shift: bool,
    ) -> Result<(Self, SpectralBasis)> {
        let basis = opcore::eigendecompose(h_lattice)?;
        let table = bath.density_table(&basis, mode == ChannelMode::Full)?;
        let channels = couplings
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let s_e = opcore::hermitize(&basis.to_energy_basis(s));
                let s_conv = convolve_with_table(&s_e, &table)?;
                let mut ch = CouplingChannel::new(format!("channel-{i}"), s_e, s_conv)?;
                ch.bath = Some(*bath);
                Ok(ch)
            })
            .collect::<Result<Vec<_>>>()?;
        let gen = Self::new(basis.diagonal_hamiltonian(), channels, include_lamb_shift)?;
        Ok((gen, basis))
    }

    pub fn dim(&self) -> usize {
        self.h_sys.nrows()
    }

    pub fn h_total(&self) -> Operator {
        &self.h_sys + &self.h_lamb
    }

    pub fn apply(&self, rho: &Operator) -> Result<Operator> {
        check_same_dim(&self.h_sys, rho)?;
        Ok(self.apply_unchecked(rho))
    }

    pub(crate) fn apply_unchecked(&self, rho: &Operator) -> Operator {
        let h = self.h_total();
        let mut out = opcore::commutator(&h, rho) * (-I);
        for ch in &self.channels {
            out += redfield_apply(&ch.s_op, &ch.s_conv, rho);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opcore::{c, frobenius_norm_sq, gksl_apply, max_abs_diff};

    fn herm3() -> Operator {
        Operator::from_row_slice(
            3,
            3,
            &[
                c(1.0),
                C64::new(0.3, -0.2),
                C64::new(0.0, 0.5),
                C64::new(0.3, 0.2),
                c(-0.4),
                c(0.7),
                C64::new(0.0, -0.5),
                c(0.7),
                c(0.2),
            ],
        )
    }

    fn rho3() -> Operator {
        let a = Operator::from_fn(3, 3, |i, j| C64::new(0.3 * i as f64 + 0.1, 0.2 * j as f64 - 0.1 * i as f64));
        let r = &a * a.adjoint();
        let t = r.trace();
        r / t
    }

    #[test]
    fn flat_density_scales_s() {
        let basis = SpectralBasis::from_energies(&[-1.0, 0.2, 1.5]);
        let s = herm3();
        let sc = convolve_with(&s, &basis, |_| c(0.7)).unwrap();
        assert!(max_abs_diff(&sc, &(&s * c(0.7))) < 1e-15);
    }

    #[test]
    fn diagonal_s_uses_zero_frequency() {
        let basis = SpectralBasis::from_energies(&[-1.0, 0.2, 1.5]);
        let s = Operator::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0), c(-2.0), c(0.5)]));
        let sc = convolve_with(&s, &basis, |d| C64::new(1.0 + d, d * d)).unwrap();
        for q in 0..3 {
            assert!((sc[(q, q)] - s[(q, q)]).norm() < 1e-15);
        }
        assert!(frobenius_norm_sq(&(sc - &s)) < 1e-30);
    }

    #[test]
    fn lamb_shift_examples() {
        let s = herm3();
        let h = lamb_shift(&s, &(&s * c(0.8))).unwrap();
        assert!(frobenius_norm_sq(&h) < 1e-28);
        let h = lamb_shift(&s, &(&s * C64::new(0.0, 0.8))).unwrap();
        assert!(max_abs_diff(&h, &(&s * &s * c(0.8))) < 1e-14);
    }

    #[test]
    fn dissipator_gksl_point_and_zero() {
        let s = herm3();
        let rho = rho3();
        let d = redfield_dissipator(&s, &s, &rho).unwrap();
        assert!(max_abs_diff(&d, &(gksl_apply(&s, &rho) * c(2.0))) < 1e-14);
        let z = redfield_dissipator(&s, &opcore::zeros(3), &rho).unwrap();
        assert!(frobenius_norm_sq(&z) < 1e-30);
    }

    #[test]
    fn generator_maximally_mixed_fixed_point_of_unital_channel() {
        let s = herm3();
        let h = Operator::from_diagonal(&nalgebra::DVector::from_vec(vec![c(-1.0), c(0.0), c(1.0)]));
        let ch = CouplingChannel::new("x", s.clone(), &s * c(0.4)).unwrap();
        let gen = RedfieldGenerator::new(h, vec![ch], true).unwrap();
        let out = gen.apply(&(opcore::identity(3) / c(3.0))).unwrap();
        assert!(frobenius_norm_sq(&out) < 1e-28);
    }

    #[test]
    fn generator_without_channels_is_commutator() {
        let h = herm3();
        let rho = rho3();
        let gen = RedfieldGenerator::new(h.clone(), vec![], true).unwrap();
        let out = gen.apply(&rho).unwrap();
        assert!(max_abs_diff(&out, &(opcore::commutator(&h, &rho) * (-I))) < 1e-15);
    }

    #[test]
    fn dimension_checks() {
        let s = herm3();
        assert!(redfield_dissipator(&s, &opcore::zeros(2), &rho3()).is_err());
        assert!(lamb_shift(&s, &opcore::zeros(4)).is_err());
        let basis = SpectralBasis::from_energies(&[0.0, 1.0]);
        assert!(convolve_with(&s, &basis, |_| c(1.0)).is_err());
    }
}
