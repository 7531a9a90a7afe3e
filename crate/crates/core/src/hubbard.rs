//! Extended Hubbard chain of spinless fermions in a fixed particle-number
//! sector, coupled site-wise to identical thermal baths through the local
//! densities.
//!
//! Basis states are bitmasks (bit `ℓ` = site `ℓ` occupied) with exactly `n`
//! bits set, in ascending integer order. Fermionic signs follow a
//! site-ascending Jordan-Wigner ordering.

use crate::bath::BathSpec;
use crate::error::{Error, Result};
use crate::opcore::{self, Operator, SpectralBasis, StateVector, C64};
use crate::redfield::{ChannelMode, CouplingChannel, RedfieldGenerator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    #[default]
    Periodic,
    Open,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HubbardSpec {
    pub sites: usize,
    pub particles: usize,
    pub tunneling: f64,
    pub interaction: f64,
    pub boundary: Boundary,
    pub gamma: f64,
    pub bath: BathSpec,
}

impl HubbardSpec {
    /// `M = 4`, `n = 2`, `V = J = 1`, `γ = 0.25`, `T = 0.1`, `ω_D = 1`, periodic.
    pub fn benchmark() -> Self {
        Self {
            sites: 4,
            particles: 2,
            tunneling: 1.0,
            interaction: 1.0,
            boundary: Boundary::Periodic,
            gamma: 0.25,
            bath: BathSpec::ohmic_drude(1.0, 10.0, 0.25).expect("valid benchmark bath"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sites == 0 || self.sites > 30 {
            return Err(Error::InvalidParameter {
                name: "sites",
                reason: format!("must be in 1..=30, got {}", self.sites),
            });
        }
        if self.particles > self.sites {
            return Err(Error::InvalidParameter {
                name: "particles",
                reason: format!("{} particles do not fit on {} sites", self.particles, self.sites),
            });
        }
        if !(self.tunneling > 0.0 && self.tunneling.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "tunneling",
                reason: format!("must be positive, got {}", self.tunneling),
            });
        }
        if !self.interaction.is_finite() {
            return Err(Error::InvalidParameter {
                name: "interaction",
                reason: "must be finite".into(),
            });
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "gamma",
                reason: format!("must be nonnegative, got {}", self.gamma),
            });
        }
        Ok(())
    }

    /// Occupation bitmasks of the sector, ascending.
    pub fn sector_states(&self) -> Vec<u32> {
        (0u32..(1u32 << self.sites))
            .filter(|s| s.count_ones() as usize == self.particles)
            .collect()
    }

    pub fn dim(&self) -> usize {
        binomial(self.sites, self.particles)
    }

    fn bonds(&self) -> Vec<(usize, usize)> {
        let m = self.sites;
        let last = match self.boundary {
            Boundary::Periodic => m,
            Boundary::Open => m.saturating_sub(1),
        };
        (0..last).map(|l| (l, (l + 1) % m)).filter(|&(a, b)| a != b).collect()
    }
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k.min(n - k)).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// `c_i† c_j |s⟩ = sign |s'⟩` for `i ≠ j`, or `None` if it vanishes.
fn hop(state: u32, i: usize, j: usize) -> Option<(u32, f64)> {
    let (bi, bj) = (1u32 << i, 1u32 << j);
    if state & bj == 0 || state & bi != 0 {
        return None;
    }
    let (lo, hi) = (i.min(j), i.max(j));
    let between = if hi > lo + 1 {
        ((1u32 << hi) - 1) & !((1u32 << (lo + 1)) - 1)
    } else {
        0
    };
    let sign = if (state & between).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
    Some(((state & !bj) | bi, sign))
}

/// `H = −J Σ_ℓ (a_ℓ†a_{ℓ+1} + h.c.) + V Σ_ℓ n_ℓ n_{ℓ+1}` in the occupation basis.
pub fn build_hamiltonian(spec: &HubbardSpec) -> Result<Operator> {
    spec.validate()?;
    let states = spec.sector_states();
    let index = |s: u32| states.binary_search(&s).expect("hopping stays in the sector");
    let d = states.len();
    let mut h = opcore::zeros(d);
    for (col, &s) in states.iter().enumerate() {
        for &(a, b) in &spec.bonds() {
            if s & (1 << a) != 0 && s & (1 << b) != 0 {
                h[(col, col)] += C64::from(spec.interaction);
            }
            for (i, j) in [(a, b), (b, a)] {
                if let Some((t, sign)) = hop(s, i, j) {
                    h[(index(t), col)] += C64::from(-spec.tunneling * sign);
                }
            }
        }
    }
    Ok(h)
}

/// `√γ n_ℓ` for every site, in the occupation basis.
pub fn site_density_operators(spec: &HubbardSpec) -> Result<Vec<Operator>> {
    spec.validate()?;
    let states = spec.sector_states();
    let g = spec.gamma.sqrt();
    Ok((0..spec.sites)
        .map(|l| {
            Operator::from_diagonal(&StateVector::from_iterator(
                states.len(),
                states.iter().map(|&s| C64::from(if s & (1 << l) != 0 { g } else { 0.0 })),
            ))
        })
        .collect())
}

/// `√γ n_ℓ` rotated into the energy basis of `basis`.
pub fn site_coupling_operators(spec: &HubbardSpec, basis: &SpectralBasis) -> Result<Vec<Operator>> {
    Ok(site_density_operators(spec)?
        .iter()
        .map(|s| opcore::hermitize(&basis.to_energy_basis(s)))
        .collect())
}

/// Sector eigenbasis of the chain Hamiltonian.
pub fn spectral_basis(spec: &HubbardSpec) -> Result<SpectralBasis> {
    opcore::eigendecompose(&build_hamiltonian(spec)?)
}

/// One Redfield channel per site.
pub fn benchmark_channels(spec: &HubbardSpec, basis: &SpectralBasis, mode: ChannelMode) -> Result<Vec<CouplingChannel>> {
    let table = spec.bath.density_table(basis, mode == ChannelMode::Full)?;
    site_coupling_operators(spec, basis)?
        .into_iter()
        .enumerate()
        .map(|(l, s)| {
            let sc = crate::redfield::convolve_with_table(&s, &table)?;
            let mut ch = CouplingChannel::new(format!("site-{l}"), s, sc)?;
            ch.bath = Some(spec.bath);
            Ok(ch)
        })
        .collect()
}

/// Full Redfield generator in the energy basis.
pub fn benchmark_generator(
    spec: &HubbardSpec,
    mode: ChannelMode,
    include_lamb_shift: bool,
) -> Result<(RedfieldGenerator, SpectralBasis)> {
    let basis = spectral_basis(spec)?;
    let channels = benchmark_channels(spec, &basis, mode)?;
    let gen = RedfieldGenerator::new(basis.diagonal_hamiltonian(), channels, include_lamb_shift)?;
    Ok((gen, basis))
}

/// Relative energy tolerance for grouping degenerate levels.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Projector (energy basis) onto the lowest energy level, including all of
/// its degenerate partners. For the periodic benchmark chain the ground
/// level is a doublet, so "ground-state population" is the population of
/// this level rather than of one solver-chosen eigenvector.
pub fn ground_projector(basis: &SpectralBasis) -> Operator {
    let e = basis.energies();
    let e0 = e.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = e.iter().fold(1.0f64, |a, x| a.max(x.abs()));
    let d = basis.dim();
    Operator::from_fn(d, d, |i, j| {
        if i == j && e[i] - e0 <= DEGENERACY_TOL * scale {
            C64::from(1.0)
        } else {
            C64::from(0.0)
        }
    })
}

/// Occupation-basis product state with the given sites filled, as an
/// energy-basis state vector.
pub fn occupation_state(spec: &HubbardSpec, basis: &SpectralBasis, occupied: &[usize]) -> Result<StateVector> {
    let mut mask = 0u32;
    for &l in occupied {
        if l >= spec.sites || mask & (1 << l) != 0 {
            return Err(Error::InvalidParameter {
                name: "initial_occupation",
                reason: format!("site {l} out of range or repeated"),
            });
        }
        mask |= 1 << l;
    }
    let states = spec.sector_states();
    let idx = states.binary_search(&mask).map_err(|_| Error::InvalidParameter {
        name: "initial_occupation",
        reason: format!("needs exactly {} distinct sites", spec.particles),
    })?;
    if basis.dim() != states.len() {
        return Err(Error::DimensionMismatch {
            expected: states.len(),
            got: basis.dim(),
        });
    }
    Ok(basis.vectors().row(idx).adjoint())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opcore::{c, commutator, frobenius_norm_sq, max_abs_diff};

    fn spec(m: usize, n: usize, boundary: Boundary) -> HubbardSpec {
        HubbardSpec {
            sites: m,
            particles: n,
            boundary,
            ..HubbardSpec::benchmark()
        }
    }

    #[test]
    fn two_site_hopping() {
        let h = build_hamiltonian(&spec(2, 1, Boundary::Open)).unwrap();
        let expected = Operator::from_row_slice(2, 2, &[c(0.0), c(-1.0), c(-1.0), c(0.0)]);
        assert!(max_abs_diff(&h, &expected) < 1e-15);
    }

    #[test]
    fn sector_dimension() {
        assert_eq!(spec(4, 2, Boundary::Periodic).dim(), 6);
        assert_eq!(build_hamiltonian(&spec(4, 2, Boundary::Periodic)).unwrap().nrows(), 6);
        assert_eq!(binomial(6, 3), 20);
        assert!(build_hamiltonian(&spec(3, 4, Boundary::Open)).is_err());
    }

    #[test]
    fn hamiltonian_is_hermitian_and_translation_invariant() {
        let s = spec(5, 2, Boundary::Periodic);
        let h = build_hamiltonian(&s).unwrap();
        assert_eq!(opcore::hermiticity_residual(&h), 0.0);
        // Relabel sites ℓ → ℓ + 1 and rebuild the matrix in the permuted basis.
        let states = s.sector_states();
        let shift = |st: u32| ((st << 1) | (st >> (s.sites - 1))) & ((1 << s.sites) - 1);
        let perm: Vec<usize> = states.iter().map(|&st| states.binary_search(&shift(st)).unwrap()).collect();
        let ev = crate::plform::hermitian_eigenvalues(&h);
        let hp = Operator::from_fn(h.nrows(), h.ncols(), |i, j| h[(perm[i], perm[j])]);
        let evp = crate::plform::hermitian_eigenvalues(&hp);
        for (a, b) in ev.iter().zip(&evp) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_particle_ring_spectrum() {
        // One fermion on a ring: E_k = −2J cos(2πk/M).
        let h = build_hamiltonian(&spec(5, 1, Boundary::Periodic)).unwrap();
        let ev = crate::plform::hermitian_eigenvalues(&h);
        let mut exact: Vec<f64> = (0..5).map(|k| -2.0 * (2.0 * std::f64::consts::PI * k as f64 / 5.0).cos()).collect();
        exact.sort_by(f64::total_cmp);
        for (a, b) in ev.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn wrap_bond_sign_for_two_fermions() {
        // Three sites, two fermions: the wrap hop crosses one occupied site.
        let (r, sign) = hop(0b011, 2, 0).unwrap();
        assert_eq!(r, 0b110);
        assert_eq!(sign, -1.0);
        assert!(hop(0b011, 1, 0).is_none());
    }

    #[test]
    fn densities_sum_to_particle_number() {
        let s = spec(4, 2, Boundary::Periodic);
        let ops = site_density_operators(&s).unwrap();
        let total = ops.iter().fold(opcore::zeros(6), |a, b| a + b);
        assert!(max_abs_diff(&total, &(opcore::identity(6) * c(2.0 * s.gamma.sqrt()))) < 1e-15);
        let h = build_hamiltonian(&s).unwrap();
        assert!(frobenius_norm_sq(&commutator(&h, &total)) < 1e-28);
        let zero = site_density_operators(&HubbardSpec { gamma: 0.0, ..s }).unwrap();
        assert!(zero.iter().all(|o| frobenius_norm_sq(o) == 0.0));
    }

    #[test]
    fn occupation_state_is_normalized() {
        let s = spec(4, 2, Boundary::Periodic);
        let basis = spectral_basis(&s).unwrap();
        let v = occupation_state(&s, &basis, &[0, 1]).unwrap();
        assert!((v.norm() - 1.0).abs() < 1e-14);
        assert!(occupation_state(&s, &basis, &[0]).is_err());
        assert!(occupation_state(&s, &basis, &[0, 0]).is_err());
    }

    #[test]
    fn benchmark_ground_level_is_a_doublet() {
        let basis = spectral_basis(&HubbardSpec::benchmark()).unwrap();
        let p = ground_projector(&basis);
        assert_eq!(opcore::trace(&p).re, 2.0);
        let open = spectral_basis(&spec(4, 2, Boundary::Open)).unwrap();
        assert_eq!(opcore::trace(&ground_projector(&open)).re, 1.0);
    }
}
