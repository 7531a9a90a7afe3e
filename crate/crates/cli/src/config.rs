//! JSON run configuration. Unknown keys anywhere are rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use pseudolind::bath::BathSpec;
use pseudolind::hpz::{HpzCoefficients, HpzSnapshot};
use pseudolind::hubbard::{Boundary, HubbardSpec};
use pseudolind::redfield::ChannelMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Optimize,
    Evolve,
    Plqt,
    Rates,
    HpzCheck,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Optimize => "optimize",
            Mode::Evolve => "evolve",
            Mode::Plqt => "plqt",
            Mode::Rates => "rates",
            Mode::HpzCheck => "hpz-check",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Optional; must match the subcommand when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    pub system: SystemConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bath: Option<BathConfig>,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    Hubbard(HubbardConfig),
    Hpz(HpzConfig),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HubbardConfig {
    pub sites: usize,
    pub particles: usize,
    #[serde(default = "one")]
    pub tunneling: f64,
    pub interaction: f64,
    #[serde(default)]
    pub boundary: BoundaryConfig,
    pub gamma: f64,
    /// Sites filled in the initial occupation product state.
    #[serde(default = "default_occupation")]
    pub initial_occupation: Vec<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryConfig {
    #[default]
    Periodic,
    Open,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HpzConfig {
    pub mass: f64,
    pub omega: f64,
    #[serde(default = "default_truncation")]
    pub dim: usize,
    pub coefficients: HpzCoefficientConfig,
    /// Fock state the oscillator starts in.
    #[serde(default)]
    pub initial_fock: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum HpzCoefficientConfig {
    /// Quantum Brownian motion; `β` comes from the bath section.
    Brownian { gamma: f64 },
    Constant {
        gamma_q: f64,
        gamma_p: f64,
        d_q: f64,
        d_p: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathConfig {
    #[serde(default)]
    pub spectral_density: SpectralDensityConfig,
    pub cutoff: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralDensityConfig {
    #[default]
    OhmicDrude,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelModeConfig {
    #[default]
    Full,
    RealPartOnly,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_output_dt")]
    pub output_dt: f64,
    #[serde(default = "default_trajectories")]
    pub n_trajectories: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub channel_mode: ChannelModeConfig,
    #[serde(default = "yes")]
    pub include_lamb_shift: bool,
    #[serde(default = "yes")]
    pub optimize: bool,
    /// Also evolve the GKSL generator obtained by dropping every `A₋`.
    #[serde(default)]
    pub truncate_negative: bool,
    /// Ensemble sizes for the convergence table (each must divide
    /// `n_trajectories`).
    #[serde(default)]
    pub n_ladder: Vec<usize>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            t_max: default_t_max(),
            dt: default_dt(),
            output_dt: default_output_dt(),
            n_trajectories: default_trajectories(),
            master_seed: 0,
            channel_mode: ChannelModeConfig::Full,
            include_lamb_shift: true,
            optimize: true,
            truncate_negative: false,
            n_ladder: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
            formats: default_formats(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_occupation() -> Vec<usize> {
    vec![0, 1]
}
fn default_truncation() -> usize {
    pseudolind::hpz::DEFAULT_TRUNCATION
}
fn default_t_max() -> f64 {
    30.0
}
fn default_dt() -> f64 {
    0.01
}
fn default_output_dt() -> f64 {
    0.5
}
fn default_trajectories() -> usize {
    10_000
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_formats() -> Vec<Format> {
    vec![Format::Csv]
}

fn positive(field: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        bail!("{field}: must be positive and finite, got {v}");
    }
    Ok(())
}

fn nonnegative(field: &str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        bail!("{field}: must be nonnegative and finite, got {v}");
    }
    Ok(())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut value: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        // A run manifest carries its full config under "config"; accept it
        // directly so any manifest can be re-run.
        if value.get("command").is_some() && value.get("summary").is_some() {
            if let Some(inner) = value.get_mut("config") {
                value = inner.take();
            }
        }
        let cfg: RunConfig =
            serde_json::from_value(value).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    /// Field-level checks before any computation.
    pub fn validate(&self, mode: Mode) -> Result<()> {
        if let Some(m) = self.mode {
            if m != mode {
                bail!("mode: config says {:?} but the subcommand is {}", m.name(), mode.name());
            }
        }
        if let Some(b) = &self.bath {
            positive("bath.cutoff", b.cutoff)?;
            match (b.temperature, b.beta) {
                (Some(t), None) => positive("bath.temperature", t)?,
                (None, Some(beta)) => positive("bath.beta", beta)?,
                _ => bail!("bath: give exactly one of temperature and beta"),
            }
        }
        match &self.system {
            SystemConfig::Hubbard(h) => {
                if self.bath.is_none() {
                    bail!("bath: required for the hubbard system");
                }
                if h.sites == 0 || h.sites > 16 {
                    bail!("system.hubbard.sites: must be in 1..=16, got {}", h.sites);
                }
                if h.particles > h.sites {
                    bail!("system.hubbard.particles: {} exceeds sites {}", h.particles, h.sites);
                }
                positive("system.hubbard.tunneling", h.tunneling)?;
                if !h.interaction.is_finite() {
                    bail!("system.hubbard.interaction: must be finite");
                }
                nonnegative("system.hubbard.gamma", h.gamma)?;
                if h.initial_occupation.len() != h.particles {
                    bail!(
                        "system.hubbard.initial_occupation: needs {} sites, got {}",
                        h.particles,
                        h.initial_occupation.len()
                    );
                }
            }
            SystemConfig::Hpz(h) => {
                positive("system.hpz.mass", h.mass)?;
                positive("system.hpz.omega", h.omega)?;
                if h.dim < 2 {
                    bail!("system.hpz.dim: must be at least 2, got {}", h.dim);
                }
                if h.initial_fock >= h.dim {
                    bail!("system.hpz.initial_fock: must be below dim {}", h.dim);
                }
                match &h.coefficients {
                    HpzCoefficientConfig::Brownian { gamma } => {
                        nonnegative("system.hpz.coefficients.brownian.gamma", *gamma)?;
                        if self.bath.is_none() {
                            bail!("bath: the brownian preset takes its temperature from the bath section");
                        }
                    }
                    HpzCoefficientConfig::Constant { gamma_q, gamma_p, d_q, d_p } => {
                        for (f, v) in [("gamma_q", gamma_q), ("gamma_p", gamma_p), ("d_q", d_q), ("d_p", d_p)] {
                            if !v.is_finite() {
                                bail!("system.hpz.coefficients.constant.{f}: must be finite");
                            }
                        }
                    }
                }
                if mode == Mode::Rates {
                    bail!("system: the rates command needs a hubbard system");
                }
            }
        }
        let r = &self.run;
        positive("run.t_max", r.t_max)?;
        positive("run.dt", r.dt)?;
        positive("run.output_dt", r.output_dt)?;
        let ratio = r.output_dt / r.dt;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            bail!("run.output_dt: must be a positive multiple of run.dt");
        }
        if r.n_trajectories == 0 {
            bail!("run.n_trajectories: must be positive");
        }
        for &n in &r.n_ladder {
            if n == 0 || r.n_trajectories % n != 0 {
                bail!("run.n_ladder: {n} must be positive and divide run.n_trajectories = {}", r.n_trajectories);
            }
        }
        if self.output.formats.is_empty() {
            bail!("output.formats: at least one format is required");
        }
        Ok(())
    }

    pub fn beta(&self) -> Option<f64> {
        self.bath.as_ref().map(|b| b.beta.unwrap_or_else(|| 1.0 / b.temperature.expect("validated")))
    }

    pub fn bath_spec(&self, gamma: f64) -> Result<BathSpec> {
        let b = self.bath.as_ref().context("bath: section missing")?;
        Ok(BathSpec::ohmic_drude(b.cutoff, self.beta().expect("bath present"), gamma)?)
    }

    pub fn hubbard_spec(&self) -> Result<Option<HubbardSpec>> {
        let SystemConfig::Hubbard(h) = &self.system else {
            return Ok(None);
        };
        let spec = HubbardSpec {
            sites: h.sites,
            particles: h.particles,
            tunneling: h.tunneling,
            interaction: h.interaction,
            boundary: match h.boundary {
                BoundaryConfig::Periodic => Boundary::Periodic,
                BoundaryConfig::Open => Boundary::Open,
            },
            gamma: h.gamma,
            bath: self.bath_spec(h.gamma)?,
        };
        spec.validate()?;
        Ok(Some(spec))
    }

    pub fn hpz_snapshot(&self) -> Result<Option<(HpzSnapshot, &HpzConfig)>> {
        let SystemConfig::Hpz(h) = &self.system else {
            return Ok(None);
        };
        let coeffs = match &h.coefficients {
            HpzCoefficientConfig::Brownian { gamma } => {
                HpzCoefficients::brownian(h.mass, h.omega, *gamma, self.beta().context("bath: section missing")?)?
            }
            HpzCoefficientConfig::Constant { gamma_q, gamma_p, d_q, d_p } => {
                HpzCoefficients::constant(h.mass, h.omega, *gamma_q, *gamma_p, *d_q, *d_p)?
            }
        };
        Ok(Some((coeffs.at(0.0), h)))
    }

    pub fn channel_mode(&self) -> ChannelMode {
        match self.run.channel_mode {
            ChannelModeConfig::Full => ChannelMode::Full,
            ChannelModeConfig::RealPartOnly => ChannelMode::RealPartOnly,
        }
    }

    /// Output grid `0, output_dt, …` up to `t_max`.
    pub fn time_grid(&self) -> Vec<f64> {
        let n = (self.run.t_max / self.run.output_dt + 1e-9).floor() as usize;
        let step = (self.run.output_dt / self.run.dt).round();
        (0..=n).map(|k| k as f64 * step * self.run.dt).collect()
    }

    pub fn wants(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }
}
