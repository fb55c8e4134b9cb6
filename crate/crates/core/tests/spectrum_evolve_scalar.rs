use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use skewpulse::evolve::*;
use skewpulse::model::build_scalar_bistable;
use skewpulse::pulse::{solve_pulse, PulseProfile, Seed, SolveOptions};
use skewpulse::spectrum::*;

fn scalar_pulse() -> PulseProfile {
    let model = build_scalar_bistable();
    let opts = SolveOptions { half_width: Some(30.0), ..SolveOptions::default() };
    solve_pulse(&model, &opts, Seed::Builtin { amplitude: 1.0, width: 1.5 }).unwrap()
}

fn nearest(eigs: &[Eigenvalue], target: f64) -> f64 {
    eigs.iter().map(|z| z.re).min_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs())).unwrap()
}

#[test]
fn scalar_spectrum_oracle() {
    let model = build_scalar_bistable();
    let profile = scalar_pulse();
    let t = std::time::Instant::now();
    let opts = SpectrumOptions { intervals: 2000, half_width: Some(30.0), ..SpectrumOptions::default() };
    let rep = analyze_spectrum(&model, &profile, &opts).unwrap();
    eprintln!("spectrum in {:?}: top {:?}", t.elapsed(), &rep.eigenvalues[..4]);
    eprintln!("refined {:?}", rep.refined);
    eprintln!("tols {:?} zero_mode_error {:e}", rep.tolerances, rep.zero_mode_error);
    for target in [1.25, 0.0, -0.75] {
        assert!((nearest(&rep.eigenvalues, target) - target).abs() < 2e-3, "{target}");
    }
    assert_eq!(rep.n_plus, 1);
    assert!(rep.zero_simple);
    assert!(rep.ess_bound_ok);
    assert!(rep.sufficiency_ok);

    // second order: doubling N shrinks the dense error about fourfold
    let coarse = SpectrumGrid::new(500, 30.0).unwrap();
    let e1 = dense_eigenvalues(&discretize_l(&model, &profile, &coarse).unwrap()).unwrap();
    let e2 = dense_eigenvalues(&discretize_l(&model, &profile, &coarse.refined()).unwrap()).unwrap();
    for target in [1.25, 0.0, -0.75] {
        let r = (nearest(&e1, target) - target).abs() / (nearest(&e2, target) - target).abs();
        eprintln!("ratio at {target}: {r}");
        assert!(r > 3.5, "{target}: {r}");
    }
}

#[test]
fn scalar_growth_rate() {
    let model = build_scalar_bistable();
    let profile = scalar_pulse();
    let start = Field::from_profile(&profile).unwrap();
    let eq = discrete_equilibrium(&model, &start, 1e-10, 10).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = smooth_perturbation(&eq, 1e-4, &mut rng);
    let t = std::time::Instant::now();
    let mut rates = Vec::new();
    for dt in [0.01, 0.005] {
        let run = evolve(&model, &perturbed(&eq, &p), &EvolveOptions { dt, t_final: 8.0, snapshot_every: 0.1 })
            .unwrap();
        let fit = growth_rate_fit(&run, &eq, None).unwrap();
        eprintln!("dt {dt}: {fit:?} drift {} in {:?}", run.drift, t.elapsed());
        rates.push(fit.rate);
    }
    assert!((rates[0] - 1.25).abs() < 0.125);
    assert!(((rates[0] - rates[1]) / rates[1]).abs() < 0.01);
}

#[test]
fn translation_mode_residual_is_second_order() {
    let model = build_scalar_bistable();
    let profile = scalar_pulse();
    let residual = |intervals: usize| {
        let grid = SpectrumGrid::new(intervals, 30.0).unwrap();
        let l = discretize_l(&model, &profile, &grid).unwrap();
        let v = translation_mode(&model, &profile, &grid);
        (&l * &v).amax() / v.amax()
    };
    let errs: Vec<f64> = [200, 400, 800].iter().map(|&n| residual(n)).collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.5..4.5).contains(&ratio), "{errs:?}");
    }
}
