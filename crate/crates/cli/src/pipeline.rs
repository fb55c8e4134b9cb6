//! The stages behind each subcommand.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use skewpulse::evolve::{
    discrete_equilibrium, evolve, growth_rate_fit, perturbed, smooth_perturbation, EvolutionRun, EvolutionSummary,
    Field, GrowthFit,
};
use skewpulse::hamiltonian::{hyperbolicity_probes, HyperbolicityProbe};
use skewpulse::index::{
    criterion, kernel_drift, spectral_flow, stability_index, verdict, Criterion, IndexReport, KernelDrift,
    SpectralFlow, StabilityIndex, VerdictInputs,
};
use skewpulse::model::{check_hypotheses, HypothesisReport, ModelKind, PulseBound, SkewGradientModel};
use skewpulse::pulse::{load_profile, save_profile, solve_pulse, PulseProfile, Seed};
use skewpulse::spectrum::{analyze_spectrum, write_eigenvalues_csv, SpectrumReport};
use skewpulse::symplectic::write_crossings_csv;

use crate::config::LoadedConfig;

/// Every JSON document the tool writes.
#[derive(Debug, Serialize)]
pub struct Envelope<'a, T> {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_sha256: &'a str,
    pub kind: &'static str,
    pub report: T,
}

pub fn envelope<'a, T>(cfg: &'a LoadedConfig, kind: &'static str, report: T) -> Envelope<'a, T> {
    Envelope { tool: "skewpulse", version: env!("CARGO_PKG_VERSION"), config_sha256: &cfg.sha256, kind, report }
}

pub fn profile(cfg: &LoadedConfig, model: &SkewGradientModel, path: Option<&Path>) -> Result<PulseProfile> {
    let profile = match path {
        Some(p) => load_profile(p).with_context(|| format!("loading profile {}", p.display()))?,
        None => solve(cfg, model)?,
    };
    anyhow::ensure!(
        profile.dim() == model.dim(),
        "profile has {} components but the model has {}",
        profile.dim(),
        model.dim()
    );
    Ok(profile)
}

pub fn solve(cfg: &LoadedConfig, model: &SkewGradientModel) -> Result<PulseProfile> {
    let opts = cfg.config.pulse.solve_options();
    let seed_profile = match cfg.seed_path() {
        Some(p) => Some(load_profile(&p).with_context(|| format!("loading seed profile {}", p.display()))?),
        None => None,
    };
    let seed = match &seed_profile {
        Some(p) => Seed::Profile(p),
        None => cfg.config.pulse.builtin_seed(),
    };
    Ok(solve_pulse(model, &opts, seed)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct PulseSummary {
    pub points: usize,
    pub half_width: f64,
    pub amplitude: f64,
    pub residual_norm: f64,
    pub decay_rate: f64,
    pub model: Option<ModelKind>,
}

pub fn pulse_summary(p: &PulseProfile) -> PulseSummary {
    PulseSummary {
        points: p.len(),
        half_width: p.half_width(),
        amplitude: p.amplitude(),
        residual_norm: p.residual_norm(),
        decay_rate: p.decay_rate(),
        model: p.model().cloned(),
    }
}

pub fn hypotheses(cfg: &LoadedConfig, model: &SkewGradientModel, profile: Option<&PulseProfile>) -> Result<HypothesisReport> {
    let bound = match profile {
        Some(p) => PulseBound::Profile(p),
        None => PulseBound::Amplitude(cfg.config.hypotheses.amplitude_bound),
    };
    Ok(check_hypotheses(model, Some(bound))?)
}

pub fn lambda_max(cfg: &LoadedConfig, hyp: &HypothesisReport) -> f64 {
    cfg.config.index.lambda_max.unwrap_or(hyp.lambda_hat)
}

pub fn maslov(cfg: &LoadedConfig, model: &SkewGradientModel, profile: &PulseProfile) -> Result<StabilityIndex> {
    Ok(stability_index(model, profile, &cfg.config.index.tau_scan)?)
}

pub fn sf(cfg: &LoadedConfig, model: &SkewGradientModel, profile: &PulseProfile, lmax: f64) -> Result<SpectralFlow> {
    Ok(spectral_flow(model, profile, 0.0, (0.0, lmax), &cfg.config.index.sf)?)
}

pub fn criterion_of(model: &SkewGradientModel, profile: &PulseProfile) -> Result<Criterion> {
    Ok(criterion(model, profile)?)
}

pub fn spectrum(cfg: &LoadedConfig, model: &SkewGradientModel, profile: &PulseProfile) -> Result<SpectrumReport> {
    Ok(analyze_spectrum(model, profile, &cfg.config.spectrum)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct EvolutionReport {
    pub seed: u64,
    pub amplitude: f64,
    pub summary: EvolutionSummary,
    pub fit: Option<GrowthFit>,
    pub fit_error: Option<String>,
}

pub fn evolution(
    cfg: &LoadedConfig,
    model: &SkewGradientModel,
    profile: &PulseProfile,
    seed: u64,
) -> Result<(EvolutionRun, EvolutionReport)> {
    let ev = &cfg.config.evolve;
    let start = Field::from_profile(profile)?;
    let reference = discrete_equilibrium(model, &start, 1e-10, 20)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = smooth_perturbation(&reference, ev.amplitude, &mut rng);
    let mut run = evolve(model, &perturbed(&reference, &p), &ev.options())?;
    let (fit, fit_error) = match growth_rate_fit(&run, &reference, ev.window) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    run.fit = fit.clone();
    let report = EvolutionReport { seed, amplitude: ev.amplitude, summary: run.summary(), fit, fit_error };
    Ok((run, report))
}

/// Results of the full pipeline.
#[derive(Debug, Clone, Serialize)]
pub struct FullReport {
    pub model: ModelKind,
    pub pulse: PulseSummary,
    pub hypotheses: HypothesisReport,
    pub lambda_max: f64,
    pub index: IndexReport,
    pub tau_crossing_trace_points: usize,
    pub spectrum: SpectrumReport,
    pub cross_check: CrossCheck,
    pub hyperbolicity: Vec<HyperbolicityProbe>,
    pub kernel_drift: Option<KernelDrift>,
    pub evolution: Option<EvolutionReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossCheck {
    pub index_equals_sf: bool,
    /// `None` when the sufficiency conditions fail and no equality is implied.
    pub index_equals_n_plus: Option<bool>,
    pub evans_zeros: Vec<f64>,
    pub real_eigenvalues: Vec<f64>,
    pub zeros_match_eigenvalues: bool,
    pub failures: Vec<String>,
}

impl CrossCheck {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn cross_check(i_w0: usize, sf: &SpectralFlow, spec: &SpectrumReport, lmax: f64, tol: f64) -> CrossCheck {
    let mut failures = Vec::new();
    let index_equals_sf = i_w0 as i64 == sf.value;
    if !index_equals_sf {
        failures.push(format!("i(w0) = {i_w0} but sf = {}", sf.value));
    }
    let index_equals_n_plus = spec.sufficiency_ok.then_some(i_w0 == spec.n_plus);
    if index_equals_n_plus == Some(false) {
        failures.push(format!("sufficiency holds but i(w0) = {i_w0} and N+ = {}", spec.n_plus));
    }
    let mut evans_zeros = Vec::new();
    for c in sf.crossings.iter().filter(|c| c.location > 0.0) {
        evans_zeros.extend(std::iter::repeat_n(c.location, c.intersection_dim));
    }
    let radius = spec.tolerances.zero_radius;
    let candidates: Vec<_> = if spec.refined.is_empty() {
        spec.eigenvalues.clone()
    } else {
        spec.refined.iter().map(|r| r.extrapolated).collect()
    };
    let mut real_eigenvalues: Vec<f64> = candidates
        .iter()
        .filter(|z| z.im.abs() <= spec.tolerances.im_tol && z.re > radius && z.re < lmax)
        .map(|z| z.re)
        .collect();
    real_eigenvalues.sort_by(f64::total_cmp);
    let zeros_match_eigenvalues = evans_zeros.len() == real_eigenvalues.len()
        && evans_zeros.iter().zip(&real_eigenvalues).all(|(a, b)| (a - b).abs() <= tol);
    if !zeros_match_eigenvalues {
        failures.push(format!("Evans zeros {evans_zeros:?} do not match real eigenvalues {real_eigenvalues:?}"));
    }
    CrossCheck { index_equals_sf, index_equals_n_plus, evans_zeros, real_eigenvalues, zeros_match_eigenvalues, failures }
}

/// What `verdict` and `report all` compute, plus the raw traces for the plot
/// files.
pub struct Pipeline {
    pub report: FullReport,
    pub profile: PulseProfile,
    pub index: StabilityIndex,
    pub sf: SpectralFlow,
    pub evolution: Option<EvolutionRun>,
}

pub enum Outcome {
    HypothesesFail(HypothesisReport),
    Done(Box<Pipeline>),
}

pub fn run_all(
    cfg: &LoadedConfig,
    profile_path: Option<&Path>,
    with_extras: bool,
    seed: u64,
) -> Result<Outcome> {
    let model = cfg.config.model.build()?;
    let profile = profile(cfg, &model, profile_path)?;
    let hyp = hypotheses(cfg, &model, Some(&profile))?;
    if !hyp.holds() {
        return Ok(Outcome::HypothesesFail(hyp));
    }
    let lmax = lambda_max(cfg, &hyp);
    let index = maslov(cfg, &model, &profile)?;
    let flow = sf(cfg, &model, &profile, lmax)?;
    let crit = criterion_of(&model, &profile)?;
    let spec = spectrum(cfg, &model, &profile)?;
    let v = verdict(&VerdictInputs {
        i_w0: index.i_w0,
        criterion_integral: crit.integral.value,
        sufficiency_ok: spec.sufficiency_ok,
        zero_simple: spec.zero_simple,
    });
    let check = cross_check(index.i_w0, &flow, &spec, lmax, cfg.config.index.match_tol);
    let index_report = IndexReport {
        i_w0: index.i_w0,
        crossings: index.crossings.clone(),
        spectral_flow: flow.value,
        sf_crossings: flow.crossings.clone(),
        criterion_integral: crit.integral.value,
        tau0: crit.tau0,
        verdict: v,
    };
    let (hyperbolicity, drift, evo) = if with_extras {
        let probes = hyperbolicity_probes(&model, hyp.lambda_hat, hyp.epsilon_max)?;
        let drift = kernel_drift(&model, &profile, 1e-3 * hyp.epsilon_max, &cfg.config.index.sf.frames)?;
        let (run, rep) = evolution(cfg, &model, &profile, seed)?;
        (probes, Some(drift), Some((run, rep)))
    } else {
        (Vec::new(), None, None)
    };
    let (evolution_run, evolution_report) = match evo {
        Some((run, rep)) => (Some(run), Some(rep)),
        None => (None, None),
    };
    let report = FullReport {
        model: model.kind().clone(),
        pulse: pulse_summary(&profile),
        hypotheses: hyp,
        lambda_max: lmax,
        index: index_report,
        tau_crossing_trace_points: index.angle_trace.len(),
        spectrum: spec,
        cross_check: check,
        hyperbolicity,
        kernel_drift: drift,
        evolution: evolution_report,
    };
    Ok(Outcome::Done(Box::new(Pipeline { report, profile, index, sf: flow, evolution: evolution_run })))
}

fn csv_file(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

/// Writes the plot-ready CSV files of a full run into `dir`.
pub fn write_plot_files(dir: &Path, p: &Pipeline) -> Result<()> {
    use std::io::Write;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    save_profile(&p.profile, &dir.join("profile.csv"))?;

    let mut out = csv_file(dir, "angle_trace.csv")?;
    writeln!(out, "tau,min_sine")?;
    for (t, s) in &p.index.angle_trace {
        writeln!(out, "{t:.15e},{s:.15e}")?;
    }
    out.flush()?;

    let mut out = csv_file(dir, "evans_gap.csv")?;
    writeln!(out, "lambda,evans_gap")?;
    for (l, g) in &p.sf.evans_trace {
        writeln!(out, "{l:.15e},{g:.15e}")?;
    }
    out.flush()?;

    write_eigenvalues_csv(&p.report.spectrum.eigenvalues, csv_file(dir, "eigenvalues.csv")?)?;
    write_crossings_csv(&p.index.crossings, csv_file(dir, "tau_crossings.csv")?)?;
    write_crossings_csv(&p.sf.crossings, csv_file(dir, "sf_crossings.csv")?)?;

    if let Some(run) = &p.evolution {
        let mut out = csv_file(dir, "evolution.csv")?;
        writeln!(out, "t,l2,max_abs")?;
        for (t, s) in run.times.iter().zip(&run.snapshots) {
            writeln!(out, "{t:.15e},{:.15e},{:.15e}", s.l2(), s.max_abs())?;
        }
        out.flush()?;
    }
    Ok(())
}
