mod common;

use common::Fixture;
use skewpulse::hamiltonian::{hyperbolicity_probes, FrameOptions, HamiltonianFamily};
use skewpulse::index::*;

fn expected_index(f: &Fixture) -> usize {
    match f.name.as_str() {
        "scalar" | "FHN-B tau 1" | "FHN-B 1.5 tau0" => 1,
        _ => 0,
    }
}

#[test]
fn index_equality_chain() {
    for f in common::all() {
        eprintln!(
            "{}: i {} sf {} n_plus {} sufficiency {} crit {}",
            f.name, f.index.i_w0, f.sf.value, f.spectrum.n_plus, f.spectrum.sufficiency_ok, f.criterion
        );
        assert_eq!(f.index.i_w0, expected_index(f), "{}", f.name);
        assert_eq!(f.index.i_w0 as i64, f.sf.value, "{}", f.name);
        if f.spectrum.sufficiency_ok {
            assert_eq!(f.index.i_w0, f.spectrum.n_plus, "{}", f.name);
        }
    }
    assert!(common::fhn_a_stable().spectrum.sufficiency_ok);
    assert!(common::fhn_b_slow().spectrum.sufficiency_ok);
}

#[test]
fn tau_crossings_are_positive() {
    for f in common::all() {
        for c in &f.index.crossings {
            assert!(c.form_eigenvalues.iter().all(|&e| e > 0.0), "{}: {c:?}", f.name);
            assert_eq!(c.signature, c.intersection_dim as i64, "{}", f.name);
        }
    }
}

/// Nonzero sf crossings and the refined positive real eigenvalues of the
/// discretised operator are the same set.
#[test]
fn evans_zeros_are_eigenvalues() {
    for f in common::all() {
        let radius = f.spectrum.tolerances.zero_radius;
        let mut zeros: Vec<f64> = Vec::new();
        for c in f.sf.crossings.iter().filter(|c| c.location > 0.0) {
            zeros.extend(std::iter::repeat_n(c.location, c.intersection_dim));
        }
        let mut eigs: Vec<f64> = f
            .spectrum
            .refined
            .iter()
            .map(|r| r.extrapolated)
            .filter(|z| z.im.abs() <= f.spectrum.tolerances.im_tol && z.re > radius)
            .map(|z| z.re)
            .collect();
        eigs.sort_by(f64::total_cmp);
        eprintln!("{}: zeros {zeros:?} eigenvalues {eigs:?}", f.name);
        assert_eq!(zeros.len(), eigs.len(), "{}", f.name);
        for (z, e) in zeros.iter().zip(&eigs) {
            assert!((z - e).abs() < 1e-4, "{}: {z} vs {e}", f.name);
        }
    }
}

#[test]
fn asymptotic_hyperbolicity() {
    for f in [common::fhn_a_stable(), common::fhn_a_unstable(), common::fhn_b_slow(), common::fhn_b_unstable()] {
        for p in hyperbolicity_probes(&f.model, f.hyp.lambda_hat, f.hyp.epsilon_max).unwrap() {
            assert!(p.spectral_gap > 1e-6, "{}: {p:?}", f.name);
            assert!(p.angle_plus > 1e-3 && p.angle_minus > 1e-3, "{}: {p:?}", f.name);
        }
    }
}

#[test]
fn criterion_threshold_verdicts() {
    let unstable = common::fhn_a_unstable();
    assert!(unstable.criterion < 0.0);
    assert_eq!(unstable.verdict(), Verdict::Unstable("criterion integral negative".into()));
    assert!(!unstable.spectrum.real_eigenvalues_in(unstable.spectrum.tolerances.re_tol, f64::INFINITY).is_empty());

    let stable = common::fhn_a_stable();
    let gamma = stable.model.fhn_params().unwrap().gamma;
    assert!(stable.model.fhn_params().unwrap().tau < gamma * gamma);
    assert_eq!(stable.index.i_w0, 0);
    assert!(matches!(stable.verdict(), Verdict::StableSufficient(_)));
}

#[test]
fn spectral_flow_additivity_and_bound() {
    for f in [common::fhn_a_unstable(), common::fhn_b_unstable()] {
        let b = f.hyp.lambda_hat;
        let c = 0.5 * b;
        let opts = SfOptions::default();
        let left = spectral_flow(&f.model, &f.profile, 0.0, (0.0, c), &opts).unwrap();
        let right = spectral_flow(&f.model, &f.profile, 0.0, (c, b), &opts).unwrap();
        assert_eq!(left.value + right.value, f.sf.value, "{}", f.name);
        let dims: usize = f.sf.crossings.iter().map(|c| c.intersection_dim).sum();
        assert!(f.sf.value.unsigned_abs() as usize <= dims, "{}", f.name);
    }
}

#[test]
fn spectral_flow_epsilon_invariance() {
    for f in [common::scalar(), common::fhn_a_unstable()] {
        for eps in [0.5 * f.hyp.epsilon_max, f.hyp.epsilon_max] {
            let sf = spectral_flow(&f.model, &f.profile, eps, (0.0, f.hyp.lambda_hat), &SfOptions::default()).unwrap();
            eprintln!("{} eps {eps}: {} {:?}", f.name, sf.value, sf.crossings.iter().map(|c| c.location).collect::<Vec<_>>());
            assert_eq!(sf.value, f.sf.value, "{} eps {eps}", f.name);
        }
    }
}

#[test]
fn kernel_leaves_zero_in_predicted_direction() {
    for f in [common::scalar(), common::fhn_a_stable(), common::fhn_a_unstable()] {
        let opts = FrameOptions::default();
        let full = HamiltonianFamily::probe(&f.model, &f.profile, 0.0, f.hyp.epsilon_max).evans_gap(&opts).unwrap();
        let small = kernel_drift(&f.model, &f.profile, 1e-3 * f.hyp.epsilon_max, &opts).unwrap();
        eprintln!("{}: {full:?}\n  {small:?}", f.name);
        assert!(full > 1e-6, "{}", f.name);
        assert!(small.direction_matches(), "{}", f.name);
        assert_eq!(small.predicted.signum(), -f.criterion.signum());
    }
}
