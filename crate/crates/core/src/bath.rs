//! Bath spectral densities and the complex coupling density
//! `G(Δ) = J(Δ) n_β(Δ) + i PV∫ J(ω) n_β(ω)/(ω − Δ) dω/π`.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::opcore::{SpectralBasis, C64};
use crate::quad::{self, Estimate, Tolerance};

/// Relative quadrature error above which a coupling density is rejected.
pub const MAX_QUAD_REL_ERR: f64 = 1e-6;

/// Antisymmetric bath spectral density `J(ω) = −J(−ω)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpectralDensity {
    /// `J(ω) = ω / (1 + ω²/ω_D²)`
    OhmicDrude { cutoff: f64 },
}

impl SpectralDensity {
    pub fn ohmic_drude(cutoff: f64) -> Result<Self> {
        if !(cutoff > 0.0 && cutoff.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "cutoff",
                reason: format!("must be positive and finite, got {cutoff}"),
            });
        }
        Ok(Self::OhmicDrude { cutoff })
    }

    pub fn eval(&self, w: f64) -> f64 {
        w * self.over_omega(w)
    }

    /// `J(ω)/ω`, continuous through `ω = 0`.
    pub fn over_omega(&self, w: f64) -> f64 {
        match *self {
            Self::OhmicDrude { cutoff } => 1.0 / (1.0 + (w / cutoff).powi(2)),
        }
    }

    /// Characteristic frequency scale of the model.
    pub fn scale(&self) -> f64 {
        match *self {
            Self::OhmicDrude { cutoff } => cutoff,
        }
    }
}

/// Spectral density, inverse temperature and coupling strength of one bath.
///
/// `gamma` is not used by the coupling density; it scales the coupling
/// operators (`S = √γ · …`) where the channels are built.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathSpec {
    pub model: SpectralDensity,
    pub beta: f64,
    pub gamma: f64,
}

/// The three parts of `G″(Δ)`: reorganization energy, zero-point part and
/// thermal part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GppParts {
    pub reorganization: f64,
    pub zero_point: f64,
    pub thermal: f64,
}

impl GppParts {
    pub fn sum(&self) -> f64 {
        self.reorganization + self.zero_point + self.thermal
    }
}

/// `n_β(Δ) = 1/(e^{βΔ} − 1)`; the pole at `Δ = 0` is an error.
pub fn bose_occupation(delta: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter {
            name: "beta",
            reason: format!("must be positive, got {beta}"),
        });
    }
    if delta == 0.0 {
        return Err(Error::BosePole);
    }
    Ok(1.0 / (beta * delta).exp_m1())
}

/// `y / (e^y − 1)`, equal to 1 at `y = 0`.
fn x_over_expm1(y: f64) -> f64 {
    if y.abs() < 1e-8 {
        1.0 - 0.5 * y
    } else {
        y / y.exp_m1()
    }
}

impl BathSpec {
    pub fn new(model: SpectralDensity, beta: f64, gamma: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "beta",
                reason: format!("must be positive and finite, got {beta}"),
            });
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "gamma",
                reason: format!("must be nonnegative, got {gamma}"),
            });
        }
        Ok(Self { model, beta, gamma })
    }

    pub fn ohmic_drude(cutoff: f64, beta: f64, gamma: f64) -> Result<Self> {
        Self::new(SpectralDensity::ohmic_drude(cutoff)?, beta, gamma)
    }

    /// `J(Δ) n_β(Δ)`, with its analytic limit `J′(0)/β` at `Δ = 0`.
    pub fn jn(&self, delta: f64) -> f64 {
        self.model.over_omega(delta) * x_over_expm1(self.beta * delta) / self.beta
    }

    /// Real part `G′(Δ)`.
    pub fn g_real(&self, delta: f64) -> f64 {
        self.jn(delta)
    }

    fn tol() -> Tolerance {
        Tolerance {
            abs: 1e-15,
            rel: 1e-12,
            max_intervals: 4000,
        }
    }

    fn window(&self, delta: f64) -> f64 {
        self.model.scale().max(1.0 / self.beta).max(delta.abs())
    }

    /// Imaginary part `G″(Δ)` with its quadrature error estimate.
    pub fn g_imag_estimate(&self, delta: f64) -> Estimate {
        let pv = quad::principal_value(
            |w| self.jn(w),
            delta,
            f64::NEG_INFINITY,
            f64::INFINITY,
            self.window(delta),
            Self::tol(),
        );
        pv * (1.0 / PI)
    }

    pub fn g_imag(&self, delta: f64) -> Result<f64> {
        checked(self.g_imag_estimate(delta), "G″(Δ)")
    }

    /// Complex coupling density `G(Δ)`.
    pub fn coupling_density(&self, delta: f64) -> Result<C64> {
        Ok(C64::new(self.g_real(delta), self.g_imag(delta)?))
    }

    /// Split of `G″(Δ)` into reorganization, zero-point and thermal parts,
    /// each computed by its own half-line integral.
    pub fn gpp_decomposition(&self, delta: f64) -> Result<GppParts> {
        let tol = Self::tol();
        let model = self.model;
        let rn = quad::integrate_to_inf(|w| model.over_omega(w), 0.0, tol) * (-1.0 / PI);
        let reorganization = checked(rn, "reorganization energy")?;

        if delta == 0.0 {
            return Ok(GppParts {
                reorganization,
                zero_point: 0.0,
                thermal: 0.0,
            });
        }
        let c = delta.abs();
        let window = self.window(delta);

        // J(ω)/(ω² − Δ²)·[Δ − Δ²/ω] = Δ·(J(ω)/ω)/(ω + Δ)
        let zp = if delta > 0.0 {
            quad::integrate_to_inf(|w| model.over_omega(w) / (w + delta), 0.0, tol)
        } else {
            quad::principal_value(|w| model.over_omega(w), c, 0.0, f64::INFINITY, window, tol)
        } * (delta / PI);
        let zero_point = checked_abs(zp, "zero-point part of G″", reorganization)?;

        let th = quad::principal_value(
            |w| if w > 0.0 { self.jn(w) / (w + c) } else { 0.0 },
            c,
            0.0,
            f64::INFINITY,
            window,
            tol,
        ) * (2.0 * delta / PI);
        let thermal = checked_abs(th, "thermal part of G″", reorganization)?;

        Ok(GppParts {
            reorganization,
            zero_point,
            thermal,
        })
    }

    /// `G(Δ_qk)` (or `G′(Δ_qk)` when `with_imag` is false) over the full
    /// splitting table. Each distinct splitting is evaluated once.
    pub fn density_table(&self, basis: &SpectralBasis, with_imag: bool) -> Result<DMatrix<C64>> {
        let d = basis.dim();
        let mut memo: HashMap<u64, C64> = HashMap::new();
        let mut out = DMatrix::zeros(d, d);
        for q in 0..d {
            for k in 0..d {
                let delta = basis.splitting(q, k);
                let key = delta.to_bits();
                let g = match memo.get(&key) {
                    Some(g) => *g,
                    None => {
                        let g = if with_imag {
                            self.coupling_density(delta)?
                        } else {
                            C64::new(self.g_real(delta), 0.0)
                        };
                        memo.insert(key, g);
                        g
                    }
                };
                out[(q, k)] = g;
            }
        }
        Ok(out)
    }
}

fn checked(e: Estimate, what: &'static str) -> Result<f64> {
    if !e.value.is_finite() || e.rel_err() > MAX_QUAD_REL_ERR {
        return Err(Error::QuadratureNonConvergence {
            what,
            rel_error: e.rel_err(),
        });
    }
    Ok(e.value)
}

/// Like [`checked`] but relative to a reference magnitude, for parts that may
/// legitimately be close to zero.
fn checked_abs(e: Estimate, what: &'static str, reference: f64) -> Result<f64> {
    let scale = e.value.abs().max(reference.abs());
    let rel = if scale > 0.0 { e.abs_err / scale } else { e.abs_err };
    if !e.value.is_finite() || rel > MAX_QUAD_REL_ERR {
        return Err(Error::QuadratureNonConvergence { what, rel_error: rel });
    }
    Ok(e.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bath() -> BathSpec {
        BathSpec::ohmic_drude(1.0, 10.0, 0.25).unwrap()
    }

    #[test]
    fn bose_examples() {
        let beta = 2.0;
        let n = bose_occupation(2f64.ln() / beta, beta).unwrap();
        assert!((n - 1.0).abs() < 1e-14);
        assert!(bose_occupation(1e3, 1.0).unwrap() < 1e-300);
        assert_eq!(bose_occupation(0.0, 1.0), Err(Error::BosePole));
        for &x in &[0.1, 0.7, 2.3, -1.4] {
            let n = bose_occupation(x, 1.0).unwrap();
            let m = bose_occupation(-x, 1.0).unwrap();
            assert!((m + 1.0 + n).abs() < 1e-13);
        }
    }

    #[test]
    fn drude_is_antisymmetric() {
        let j = SpectralDensity::ohmic_drude(1.3).unwrap();
        for i in -20..=20 {
            let w = 0.37 * i as f64;
            assert_eq!(j.eval(-w), -j.eval(w));
        }
        assert!((j.eval(1.3) - 0.65).abs() < 1e-15);
    }

    #[test]
    fn g_real_zero_limit_is_temperature() {
        let b = bath();
        assert!((b.g_real(0.0) - 0.1).abs() < 1e-15);
        assert!((b.g_real(1e-12) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn g_real_positive() {
        let b = bath();
        for i in -50..50 {
            assert!(b.g_real(0.1 * i as f64 + 0.05) > 0.0);
        }
    }

    #[test]
    fn reorganization_energy() {
        for &wd in &[0.5, 1.0, 3.0] {
            let b = BathSpec::ohmic_drude(wd, 2.0, 0.1).unwrap();
            let p = b.gpp_decomposition(0.0).unwrap();
            assert!((p.reorganization + wd / 2.0).abs() < 1e-6 * wd);
            assert_eq!(p.zero_point, 0.0);
            assert_eq!(p.thermal, 0.0);
        }
    }

    #[test]
    fn thermal_part_vanishes_at_low_temperature() {
        let hot = BathSpec::ohmic_drude(1.0, 1.0, 0.1).unwrap().gpp_decomposition(0.5).unwrap();
        let cold = BathSpec::ohmic_drude(1.0, 1e4, 0.1).unwrap().gpp_decomposition(0.5).unwrap();
        assert!(cold.thermal.abs() < 1e-7);
        assert!(hot.thermal.abs() > 1e-2);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(BathSpec::ohmic_drude(-1.0, 1.0, 0.1).is_err());
        assert!(BathSpec::ohmic_drude(1.0, 0.0, 0.1).is_err());
        assert!(BathSpec::ohmic_drude(1.0, 1.0, -0.1).is_err());
    }
}
