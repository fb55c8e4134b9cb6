//! The JSON run configuration.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use skewpulse::evolve::EvolveOptions;
use skewpulse::index::{SfOptions, TauScan};
use skewpulse::model::{build_fhn, build_scalar_bistable, fhn_relaxed, Monomial, PolynomialPotential, SkewGradientModel};
use skewpulse::pulse::{Seed, SolveOptions};
use skewpulse::spectrum::SpectrumOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub pulse: PulseSection,
    #[serde(default)]
    pub hypotheses: HypothesesSection,
    #[serde(default)]
    pub index: IndexSection,
    #[serde(default)]
    pub spectrum: SpectrumOptions,
    #[serde(default)]
    pub evolve: EvolveSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSection {
    Fhn {
        d: f64,
        tau: f64,
        gamma: f64,
        beta: f64,
    },
    Scalar,
    PolynomialPotential {
        /// Number of leading components with `Q = +1`.
        activators: usize,
        m: Vec<f64>,
        d: Vec<f64>,
        terms: Vec<Monomial>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseSection {
    pub half_width: Option<f64>,
    pub step: f64,
    pub tol: f64,
    pub tail_tol: f64,
    pub max_iter: usize,
    pub seed_amplitude: f64,
    pub seed_width: f64,
    /// Profile CSV used as the Newton seed instead of the built-in bump;
    /// relative paths are resolved against the config file.
    pub seed_path: Option<PathBuf>,
}

impl Default for PulseSection {
    fn default() -> Self {
        let s = SolveOptions::default();
        Self {
            half_width: s.half_width,
            step: s.step,
            tol: s.tol,
            tail_tol: s.tail_tol,
            max_iter: s.max_iter,
            seed_amplitude: 1.5,
            seed_width: 1.0,
            seed_path: None,
        }
    }
}

impl PulseSection {
    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            half_width: self.half_width,
            step: self.step,
            tol: self.tol,
            tail_tol: self.tail_tol,
            max_iter: self.max_iter,
        }
    }

    pub fn builtin_seed(&self) -> Seed<'static> {
        Seed::Builtin { amplitude: self.seed_amplitude, width: self.seed_width }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HypothesesSection {
    /// Box `|w_i| <= r` for the pulse-dependent bounds when no profile is
    /// available.
    pub amplitude_bound: f64,
}

impl Default for HypothesesSection {
    fn default() -> Self {
        Self { amplitude_bound: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IndexSection {
    /// Upper end of the spectral-flow interval; defaults to `lambda_hat`.
    pub lambda_max: Option<f64>,
    pub tau_scan: TauScan,
    pub sf: SfOptions,
    /// Largest admissible `|lambda - eigenvalue|` when matching Evans zeros
    /// against the discretised spectrum.
    pub match_tol: f64,
}

impl Default for IndexSection {
    fn default() -> Self {
        Self {
            lambda_max: None,
            tau_scan: TauScan::default(),
            sf: SfOptions::default(),
            match_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveSection {
    pub dt: f64,
    pub t_final: f64,
    pub snapshot_every: f64,
    pub amplitude: f64,
    pub seed: u64,
    /// Fit window `[t0, t1]`; automatic when absent.
    pub window: Option<(f64, f64)>,
}

impl Default for EvolveSection {
    fn default() -> Self {
        let e = EvolveOptions::default();
        Self { dt: e.dt, t_final: e.t_final, snapshot_every: e.snapshot_every, amplitude: 1e-4, seed: 0, window: None }
    }
}

impl EvolveSection {
    pub fn options(&self) -> EvolveOptions {
        EvolveOptions { dt: self.dt, t_final: self.t_final, snapshot_every: self.snapshot_every }
    }
}

impl ModelSection {
    pub fn build(&self) -> Result<SkewGradientModel> {
        Ok(match self {
            ModelSection::Fhn { d, tau, gamma, beta } => build_fhn(*d, *tau, *gamma, *beta)?,
            ModelSection::Scalar => build_scalar_bistable(),
            ModelSection::PolynomialPotential { activators, m, d, terms } => {
                let potential = PolynomialPotential::new(m.len(), terms.clone())?;
                SkewGradientModel::new(*activators, m.clone(), d.clone(), Arc::new(potential))?
            }
        })
    }

    /// Like [`ModelSection::build`], but accepts FitzHugh-Nagumo parameters
    /// outside the pulse regime.
    pub fn build_relaxed(&self) -> Result<SkewGradientModel> {
        match self {
            ModelSection::Fhn { d, tau, gamma, beta } => Ok(fhn_relaxed(*d, *tau, *gamma, *beta)?),
            _ => self.build(),
        }
    }
}

/// A parsed configuration together with the hash of its bytes.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub sha256: String,
    pub path: PathBuf,
}

impl LoadedConfig {
    pub fn seed_path(&self) -> Option<PathBuf> {
        let p = self.config.pulse.seed_path.as_ref()?;
        Some(match self.path.parent() {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.clone(),
        })
    }
}

pub fn load(path: &Path) -> Result<LoadedConfig> {
    let bytes = std::fs::read(path).with_context(|| format!("reading config {}", path.display()))?;
    let config = parse(&bytes).with_context(|| format!("invalid config {}", path.display()))?;
    let sha256 = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
    Ok(LoadedConfig { config, sha256, path: path.to_path_buf() })
}

pub fn parse(bytes: &[u8]) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    match serde_path_to_error::deserialize(de) {
        Ok(c) => Ok(c),
        Err(e) => {
            let at = e.path().to_string();
            let inner = e.into_inner();
            bail!("at `{at}` (line {}, column {}): {inner}", inner.line(), inner.column())
        }
    }
}
