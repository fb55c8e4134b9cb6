//! One PASS/FAIL line per acceptance criterion. Run with
//! `cargo test --test acceptance`.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::symplectic as sp;
use skewpulse::hamiltonian::{hyperbolicity_probes, FrameOptions, HamiltonianFamily};
use skewpulse::index::*;
use skewpulse::spectrum::Eigenvalue;

type Check = fn() -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn mark(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAIL"
    }
}

fn nearest(eigs: &[Eigenvalue], target: f64) -> f64 {
    eigs.iter().map(|z| z.re).min_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs())).unwrap()
}

fn scalar_oracle() -> Outcome {
    let start = Instant::now();
    let f = common::scalar();
    let pulse_err = f
        .profile
        .grid()
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let s = 1.0 / (x / 2.0).cosh();
            (f.profile.w()[(i, 0)] - 1.5 * s * s).abs()
        })
        .fold(0.0, f64::max);
    let eig_err = [1.25, 0.0, -0.75]
        .iter()
        .map(|&t| (nearest(&f.spectrum.eigenvalues, t) - t).abs())
        .fold(0.0, f64::max);
    let rate = common::growth_rate(&f.model, &f.profile, 0.01, 8.0, 7).rate;
    let elapsed = start.elapsed().as_secs_f64();
    let checks = [
        pulse_err < 1e-8,
        eig_err < 2e-3,
        f.index.i_w0 == 1,
        f.sf.value == 1,
        f.spectrum.n_plus == 1,
        (rate - 1.25).abs() < 0.125,
        elapsed < 60.0,
    ];
    outcome(
        checks.iter().all(|&c| c),
        format!(
            "pulse error {pulse_err:.1e} {}, eigenvalue error {eig_err:.1e} {}, i {} sf {} N+ {} {}, growth {rate:.4} {}, {elapsed:.1} s {}",
            mark(checks[0]),
            mark(checks[1]),
            f.index.i_w0,
            f.sf.value,
            f.spectrum.n_plus,
            mark(checks[2] && checks[3] && checks[4]),
            mark(checks[5]),
            mark(checks[6])
        ),
    )
}

fn equality_chain() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for f in common::all() {
        let sf_ok = f.index.i_w0 as i64 == f.sf.value;
        let np_ok = !f.spectrum.sufficiency_ok || f.index.i_w0 == f.spectrum.n_plus;
        pass &= sf_ok && np_ok;
        let np = if f.spectrum.sufficiency_ok { format!("N+ {}", f.spectrum.n_plus) } else { "no sufficiency".into() };
        parts.push(format!("{}: i {} sf {} {np} {}", f.name, f.index.i_w0, f.sf.value, mark(sf_ok && np_ok)));
    }
    outcome(pass, parts.join("; "))
}

fn crossing_positivity() -> Outcome {
    let mut pass = true;
    let mut total = 0;
    let mut min_form = f64::INFINITY;
    for f in common::all() {
        for c in &f.index.crossings {
            total += 1;
            pass &= c.signature == c.intersection_dim as i64;
            min_form = c.form_eigenvalues.iter().copied().fold(min_form, f64::min);
        }
    }
    pass &= min_form > 0.0 || total == 0;
    outcome(pass, format!("{total} tau-crossings over all fixtures, smallest form eigenvalue {min_form:.4e}"))
}

fn hyperbolicity() -> Outcome {
    let mut pass = true;
    let (mut gap, mut angle) = (f64::INFINITY, f64::INFINITY);
    let mut probes = 0;
    for f in [common::fhn_a_stable(), common::fhn_a_unstable(), common::fhn_b_slow(), common::fhn_b_unstable()] {
        for p in hyperbolicity_probes(&f.model, f.hyp.lambda_hat, f.hyp.epsilon_max).unwrap() {
            probes += 1;
            gap = gap.min(p.spectral_gap);
            angle = angle.min(p.angle_plus).min(p.angle_minus);
        }
    }
    pass &= gap > 1e-6 && angle > 1e-3;
    outcome(pass, format!("{probes} probes, min |Re mu| {gap:.4e}, min angle to Lambda_R {angle:.4e} rad"))
}

fn criterion_threshold() -> Outcome {
    let up = common::fhn_a_unstable();
    let down = common::fhn_a_stable();
    let (_, _, t0) = common::fhn_a_base();
    let up_verdict = up.verdict() == Verdict::Unstable("criterion integral negative".into());
    let top = up.spectrum.real_eigenvalues_in(up.spectrum.tolerances.re_tol, f64::INFINITY);
    let up_rate = common::growth_rate(&up.model, &up.profile, 0.05, 400.0, 5).rate;
    let p = down.model.fhn_params().unwrap();
    let down_pre = p.tau < p.gamma * p.gamma && down.index.i_w0 == 0;
    let down_verdict = matches!(down.verdict(), Verdict::StableSufficient(_));
    let down_rate = common::growth_rate(&down.model, &down.profile, 0.05, 1500.0, 5).rate;
    let checks = [up_verdict, !top.is_empty(), up_rate > 0.0, down_pre, down_verdict, down_rate < 0.0];
    outcome(
        checks.iter().all(|&c| c),
        format!(
            "tau0 {t0:.4}; 1.5 tau0: {} {}, largest real eigenvalue {:.4e} {}, growth {up_rate:.4e} {}; \
             0.5 tau0: tau < gamma^2 and i = 0 {}, {} {}, growth {down_rate:.4e} {}",
            up.verdict(),
            mark(checks[0]),
            top.last().copied().unwrap_or(f64::NAN),
            mark(checks[1]),
            mark(checks[2]),
            mark(checks[3]),
            down.verdict(),
            mark(checks[4]),
            mark(checks[5])
        ),
    )
}

fn symplectic_suite() -> Outcome {
    let start = Instant::now();
    let iso = sp::isotropy(11);
    let hom = sp::homotopy(21, 50);
    let (inv, rev, cat, _) = sp::invariance_reversal_concatenation(31, 30);
    let trip = sp::triple_relations(41, 200);
    let horm = sp::hormander_relations(61, 50);
    let elapsed = start.elapsed().as_secs_f64();
    let subs = [
        ("isotropy", &iso),
        ("homotopy", &hom),
        ("symplectic invariance", &inv),
        ("reversal", &rev),
        ("concatenation", &cat),
        ("trip1 = trip2", &trip.agreement),
        ("Hormander two formulas", &horm.two_formula),
        ("path difference", &horm.path_difference),
    ];
    let pass = subs.iter().all(|(_, t)| t.passed()) && elapsed < 120.0;
    let parts: Vec<String> = subs.iter().map(|(n, t)| format!("{n} {}", t.summary())).collect();
    outcome(pass, format!("{}; {elapsed:.1} s", parts.join("; ")))
}

fn sf_properties() -> Outcome {
    let opts = SfOptions::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for f in [common::fhn_a_unstable(), common::fhn_b_unstable()] {
        let b = f.hyp.lambda_hat;
        let left = spectral_flow(&f.model, &f.profile, 0.0, (0.0, 0.5 * b), &opts).unwrap().value;
        let right = spectral_flow(&f.model, &f.profile, 0.0, (0.5 * b, b), &opts).unwrap().value;
        let dims: usize = f.sf.crossings.iter().map(|c| c.intersection_dim).sum();
        let add = left + right == f.sf.value;
        let bound = f.sf.value.unsigned_abs() as usize <= dims;
        pass &= add && bound;
        parts.push(format!(
            "{}: {left} + {right} = {} {}, |sf| <= {dims} {}",
            f.name,
            f.sf.value,
            mark(add),
            mark(bound)
        ));
    }
    for f in [common::scalar(), common::fhn_a_unstable()] {
        let mut vals = Vec::new();
        for eps in [0.5 * f.hyp.epsilon_max, f.hyp.epsilon_max] {
            let v = spectral_flow(&f.model, &f.profile, eps, (0.0, f.hyp.lambda_hat), &opts).unwrap().value;
            pass &= v == f.sf.value;
            vals.push(v);
        }
        parts.push(format!("{}: sf at eps 0, eps_max/2, eps_max = {}, {}, {}", f.name, f.sf.value, vals[0], vals[1]));
    }
    outcome(pass, parts.join("; "))
}

fn kernel_regularity() -> Outcome {
    let opts = FrameOptions::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for f in common::all() {
        let gap = HamiltonianFamily::probe(&f.model, &f.profile, 0.0, f.hyp.epsilon_max).evans_gap(&opts).unwrap();
        let drift = kernel_drift(&f.model, &f.profile, 1e-3 * f.hyp.epsilon_max, &opts).unwrap();
        let side = drift.predicted.signum() == -f.criterion.signum();
        let ok = gap > 0.0 && drift.direction_matches() && side;
        pass &= ok;
        let located = drift.located.map(|l| format!("{:.4e}", l.0)).unwrap_or_else(|| "none".into());
        parts.push(format!(
            "{}: gap(0, eps_max) {gap:.3e}, zero moves to {located} (predicted {:.4e}) {}",
            f.name,
            drift.predicted,
            mark(ok)
        ));
    }
    outcome(pass, parts.join("; "))
}

fn main() {
    let criteria: [(&str, Check); 8] = [
        ("scalar oracle", scalar_oracle),
        ("index equality chain", equality_chain),
        ("crossing positivity", crossing_positivity),
        ("hyperbolicity and transversality", hyperbolicity),
        ("FHN criterion threshold", criterion_threshold),
        ("symplectic toolkit suite", symplectic_suite),
        ("spectral-flow properties", sf_properties),
        ("epsilon-perturbation regularity", kernel_regularity),
    ];
    let mut passed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                outcome(false, format!("panicked: {msg}"))
            });
        if out.pass {
            passed += 1;
        }
        println!(
            "criterion {} [{name}]: {} ({:.1} s) | {}",
            k + 1,
            if out.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            out.detail
        );
    }
    println!("acceptance: {passed}/{} criteria pass", criteria.len());
}
