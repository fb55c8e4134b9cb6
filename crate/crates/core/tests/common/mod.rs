#![allow(dead_code)]

pub mod symplectic;

use std::sync::OnceLock;

use skewpulse::index::*;
use skewpulse::model::{build_fhn, build_scalar_bistable, check_hypotheses, HypothesisReport, PulseBound, SkewGradientModel};
use skewpulse::pulse::{solve_pulse, tau0, PulseProfile, Seed, SolveOptions};
use skewpulse::spectrum::{analyze_spectrum, SpectrumOptions, SpectrumReport};

/// A model, its pulse and everything downstream that the tests share.
pub struct Fixture {
    pub name: String,
    pub model: SkewGradientModel,
    pub profile: PulseProfile,
    pub hyp: HypothesisReport,
    pub tau0: Option<f64>,
    pub index: StabilityIndex,
    pub sf: SpectralFlow,
    pub spectrum: SpectrumReport,
    pub criterion: f64,
}

impl Fixture {
    fn build(name: &str, model: SkewGradientModel, profile: PulseProfile, spectrum: SpectrumOptions) -> Self {
        let hyp = check_hypotheses(&model, Some(PulseBound::Profile(&profile))).unwrap();
        let index = stability_index(&model, &profile, &TauScan::default()).unwrap();
        let sf = spectral_flow(&model, &profile, 0.0, (0.0, hyp.lambda_hat), &SfOptions::default()).unwrap();
        let spectrum = analyze_spectrum(&model, &profile, &spectrum).unwrap();
        let criterion = criterion_integral(&model, &profile).unwrap().value;
        let tau0 = tau0(&profile).ok();
        Fixture { name: name.into(), model, profile, hyp, tau0, index, sf, spectrum, criterion }
    }

    pub fn verdict(&self) -> Verdict {
        verdict(&VerdictInputs {
            i_w0: self.index.i_w0,
            criterion_integral: self.criterion,
            sufficiency_ok: self.spectrum.sufficiency_ok,
            zero_simple: self.spectrum.zero_simple,
        })
    }
}

pub fn scalar_profile() -> PulseProfile {
    let model = build_scalar_bistable();
    let opts = SolveOptions { half_width: Some(30.0), ..SolveOptions::default() };
    solve_pulse(&model, &opts, Seed::Builtin { amplitude: 1.0, width: 1.5 }).unwrap()
}

/// FHN-A: narrow activator, `d = 0.015`, `gamma = 13.2`, `beta = 0.3`.
/// The pulse does not depend on `tau`.
pub fn fhn_a_base() -> &'static (SkewGradientModel, PulseProfile, f64) {
    static CELL: OnceLock<(SkewGradientModel, PulseProfile, f64)> = OnceLock::new();
    CELL.get_or_init(|| {
        let base = build_fhn(0.015, 1.0, 13.2, 0.3).unwrap();
        let opts = SolveOptions { half_width: Some(6.0), ..SolveOptions::default() };
        let profile = solve_pulse(&base, &opts, Seed::Builtin { amplitude: 0.9, width: 0.5 }).unwrap();
        let t0 = tau0(&profile).unwrap();
        (base, profile, t0)
    })
}

/// FHN-B: `d = 1`, `gamma = 10`, `beta = 0.1`.
pub fn fhn_b_base() -> &'static (SkewGradientModel, PulseProfile, f64) {
    static CELL: OnceLock<(SkewGradientModel, PulseProfile, f64)> = OnceLock::new();
    CELL.get_or_init(|| {
        let base = build_fhn(1.0, 1.0, 10.0, 0.1).unwrap();
        let profile = solve_pulse(&base, &SolveOptions::default(), Seed::Builtin { amplitude: 0.5, width: 2.0 }).unwrap();
        let t0 = tau0(&profile).unwrap();
        (base, profile, t0)
    })
}

pub fn scalar() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let spectrum = SpectrumOptions { intervals: 2000, half_width: Some(30.0), ..SpectrumOptions::default() };
        Fixture::build("scalar", build_scalar_bistable(), scalar_profile(), spectrum)
    })
}

fn fhn(name: &str, base: &(SkewGradientModel, PulseProfile, f64), tau: f64) -> Fixture {
    let model = base.0.with_tau(tau).unwrap();
    Fixture::build(name, model, base.1.clone(), SpectrumOptions::default())
}

pub fn fhn_a_stable() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| fhn("FHN-A 0.5 tau0", fhn_a_base(), 0.5 * fhn_a_base().2))
}

pub fn fhn_a_unstable() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| fhn("FHN-A 1.5 tau0", fhn_a_base(), 1.5 * fhn_a_base().2))
}

pub fn fhn_b_slow() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| fhn("FHN-B tau 1", fhn_b_base(), 1.0))
}

pub fn fhn_b_unstable() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| fhn("FHN-B 1.5 tau0", fhn_b_base(), 1.5 * fhn_b_base().2))
}

pub fn all() -> Vec<&'static Fixture> {
    vec![scalar(), fhn_a_stable(), fhn_a_unstable(), fhn_b_slow(), fhn_b_unstable()]
}

/// Growth rate of a seeded perturbation of the discrete equilibrium near
/// `profile`.
pub fn growth_rate(
    model: &SkewGradientModel,
    profile: &PulseProfile,
    dt: f64,
    t_final: f64,
    seed: u64,
) -> skewpulse::evolve::GrowthFit {
    use rand::SeedableRng;
    use skewpulse::evolve::*;
    let start = Field::from_profile(profile).unwrap();
    let eq = discrete_equilibrium(model, &start, 1e-10, 10).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let p = smooth_perturbation(&eq, 1e-4, &mut rng);
    let opts = EvolveOptions { dt, t_final, snapshot_every: t_final / 200.0 };
    let run = evolve(model, &perturbed(&eq, &p), &opts).unwrap();
    growth_rate_fit(&run, &eq, None).unwrap()
}
