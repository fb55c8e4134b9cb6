//! Stability index, spectral flow, criterion integral and the verdict.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{FlowPath, FrameOptions, HamiltonianFamily};
use crate::model::SkewGradientModel;
use crate::pulse::{profile_quadrature, tau0, Quadrature, PulseProfile};
use crate::symplectic::{
    crossing_form_flow, frame_sines, intersection_basis, lambda_r, locate_crossings, maslov_index_pair, pair_form,
    ConstantPath, CrossingRecord, CrossingScan, FnPath, LagrangianPath, DEFAULT_TOL,
};

/// Options for the scan of `E^u(tau)` against `Lambda_R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TauScan {
    /// Samples per unit of `1 / decay_rate`.
    pub points_per_decay: f64,
    /// Right end of the scan; chosen automatically when `None`.
    pub t_cap: Option<f64>,
    /// Largest automatic extension of the scan, in half-widths past the profile.
    pub max_extensions: usize,
    /// Angle change over the last tenth of the scan below which `E^u` counts
    /// as stationary.
    pub stationarity: f64,
    pub tol: f64,
    pub frames: FrameOptions,
}

impl Default for TauScan {
    fn default() -> Self {
        Self {
            points_per_decay: 4.0,
            t_cap: None,
            max_extensions: 8,
            stationarity: 1e-6,
            tol: DEFAULT_TOL,
            frames: FrameOptions::default(),
        }
    }
}

/// Result of [`stability_index`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityIndex {
    pub i_w0: usize,
    pub crossings: Vec<CrossingRecord>,
    pub t_cap: f64,
    /// `(tau, smallest principal sine against Lambda_R)` on the scan grid.
    pub angle_trace: Vec<(f64, f64)>,
}

fn uniform(a: f64, b: f64, step: f64) -> Vec<f64> {
    let m = ((b - a) / step).ceil().max(1.0) as usize;
    (0..=m).map(|k| a + (b - a) * k as f64 / m as f64).collect()
}

fn max_step_angle(frames: &[crate::symplectic::LagrangianFrame]) -> f64 {
    frames
        .windows(2)
        .map(|w| *frame_sines(&w[0], &w[1]).last().expect("n >= 1"))
        .fold(0.0, f64::max)
}

/// Counts conjugate points: `i(w0) = sum over tau of dim(Lambda_R ∩ E^u(tau))`
/// at `lambda = 0`.
pub fn stability_index(model: &SkewGradientModel, profile: &PulseProfile, scan: &TauScan) -> Result<StabilityIndex> {
    let family = HamiltonianFamily::new(model, profile, 0.0)?;
    let reference = lambda_r(model.dim(), model.activators())?;
    let left = profile.left();
    let unit = 1.0 / profile.decay_rate().max(1e-12);
    let mut step = unit / scan.points_per_decay;
    let mut right = scan.t_cap.unwrap_or(profile.right());
    if !(right > left) {
        return Err(Error::param("t_cap", format!("must exceed the left end {left}")));
    }
    let mut extensions = 0;
    let samples = loop {
        let grid = uniform(left, right, step);
        let path = family.integrate_unstable(&grid, &scan.frames)?;
        if max_step_angle(&path.frames) > 0.2 {
            step /= 2.0;
            continue;
        }
        if scan.t_cap.is_some() {
            break path;
        }
        let m = path.frames.len();
        let k = ((m as f64) * 0.9).floor() as usize;
        let tail_change = *frame_sines(&path.frames[k.min(m - 1)], &path.frames[m - 1]).last().expect("n >= 1");
        let tail_transversal =
            path.frames[k..].iter().all(|f| frame_sines(f, &reference)[0] > 10.0 * scan.tol.max(1e-6));
        if (tail_change < scan.stationarity && tail_transversal) || extensions >= scan.max_extensions {
            break path;
        }
        extensions += 1;
        right += profile.half_width();
    };
    let angle_trace: Vec<(f64, f64)> = samples
        .grid
        .iter()
        .zip(&samples.frames)
        .map(|(&t, f)| (t, frame_sines(f, &reference)[0]))
        .collect();
    let grid = samples.grid.clone();
    let (a, b) = (grid[0], grid[grid.len() - 1]);
    let path = FlowPath::new(family, samples, scan.frames);
    let fixed = ConstantPath { frame: reference.clone(), domain: (a, b) };
    let opts = CrossingScan { tol: scan.tol, ..CrossingScan::default() };
    let mut crossings = Vec::new();
    let mut i_w0 = 0;
    for (t, _) in locate_crossings(&fixed, &path, &grid, &opts)? {
        if t <= a || t >= b {
            return Err(Error::CrossingAtBoundary(t));
        }
        let frame = path.frame_at(t)?;
        let rec = crossing_form_flow(&family.assemble_a(t), &frame, &reference, scan.tol)?.at(t);
        if let Some(e) = rec.form_eigenvalues.iter().find(|&&e| !(e > 0.0)) {
            return Err(Error::H2Inconsistent { location: t, eigenvalue: *e });
        }
        i_w0 += rec.intersection_dim;
        crossings.push(rec);
    }
    Ok(StabilityIndex { i_w0, crossings, t_cap: b, angle_trace })
}

/// Options for [`spectral_flow`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SfOptions {
    /// Uniform samples on the interval.
    pub grid_points: usize,
    /// Extra geometric samples between the zero radius and the first uniform
    /// sample.
    pub log_points: usize,
    /// With `eps = 0` the translation kernel sits at `lambda = 0`; crossings
    /// within this radius of zero are attributed to it. `None` uses
    /// `1e-6 * lambda_max`.
    pub zero_radius: Option<f64>,
    pub tol: f64,
    /// Principal sines below this at a located crossing are treated as one
    /// cluster.
    pub cluster_tol: f64,
    /// Finite-difference step relative to the interval length.
    pub fd_rel: f64,
    /// Geometric samples per decade searched next to each crossing for a
    /// second, nearly coincident one.
    pub neighbourhood_per_decade: usize,
    pub frames: FrameOptions,
}

impl Default for SfOptions {
    fn default() -> Self {
        Self {
            grid_points: 200,
            log_points: 40,
            zero_radius: None,
            tol: DEFAULT_TOL,
            cluster_tol: 1e-5,
            fd_rel: 1e-5,
            neighbourhood_per_decade: 6,
            frames: FrameOptions::default(),
        }
    }
}

/// Result of [`spectral_flow`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralFlow {
    pub value: i64,
    pub crossings: Vec<CrossingRecord>,
    /// `(lambda, evans gap)` on the scan grid.
    pub evans_trace: Vec<(f64, f64)>,
}

/// Spectral flow of `F_{lambda,eps}` over `[a, b]`, computed as
/// `-i_CLM(E^s_lambda(0), E^u_lambda(0))`.
///
/// When `eps = 0` and `a = 0`, the translation crossing at `lambda = 0` is
/// counted by the endpoint rule from the sign of the criterion integral and
/// the scan proper starts at the zero radius.
pub fn spectral_flow(
    model: &SkewGradientModel,
    profile: &PulseProfile,
    epsilon: f64,
    interval: (f64, f64),
    opts: &SfOptions,
) -> Result<SpectralFlow> {
    let (a, b) = interval;
    if !(a >= 0.0) || !(b >= a) {
        return Err(Error::param("interval", format!("need 0 <= a <= b, got [{a}, {b}]")));
    }
    if a == b {
        return Ok(SpectralFlow { value: 0, crossings: Vec::new(), evans_trace: Vec::new() });
    }
    HamiltonianFamily::new(model, profile, a)?;
    let fo = opts.frames;
    let stable = FnPath::new((a, b), move |l| HamiltonianFamily::probe(model, profile, l, epsilon).stable_at(0.0, &fo));
    let unstable =
        FnPath::new((a, b), move |l| HamiltonianFamily::probe(model, profile, l, epsilon).unstable_at(0.0, &fo));

    let mut value = 0;
    let mut crossings = Vec::new();
    let mut start = a;
    if epsilon == 0.0 && a == 0.0 {
        let radius = opts.zero_radius.unwrap_or(1e-6 * b).min(0.5 * b);
        let rec = zero_crossing(model, profile, &stable, &unstable, radius, opts)?;
        if let Some(rec) = rec {
            value -= rec.negative(0.0) as i64;
            crossings.push(rec);
        }
        start = radius;
    }

    let grid = sf_grid(start, b, start > a, opts);
    let evans_trace: Vec<(f64, f64)> = grid
        .iter()
        .map(|&l| Ok((l, crate::hamiltonian::evans_gap_of(&stable.frame_at(l)?, &unstable.frame_at(l)?))))
        .collect::<Result<_>>()?;
    let scan = CrossingScan {
        tol: opts.tol,
        cluster_tol: opts.cluster_tol,
        fd_step: Some(opts.fd_rel * (b - a)),
        neighbourhood_per_decade: opts.neighbourhood_per_decade,
        ..CrossingScan::default()
    };
    let (idx, recs) = maslov_index_pair(&stable, &unstable, &grid, &scan)?;
    for r in &recs {
        if r.location == b && epsilon == 0.0 {
            return Err(Error::RaiseLambdaMax(b));
        }
        if r.location == start && start > a {
            return Err(Error::UnresolvedCrossings(start));
        }
    }
    value -= idx;
    crossings.extend(recs.into_iter().map(|mut r| {
        r.form_eigenvalues.iter_mut().for_each(|e| *e = -*e);
        r.form_eigenvalues.sort_by(f64::total_cmp);
        r.signature = -r.signature;
        r
    }));
    crossings.sort_by(|x, y| x.location.total_cmp(&y.location));
    Ok(SpectralFlow { value, crossings, evans_trace })
}

fn sf_grid(a: f64, b: f64, geometric: bool, opts: &SfOptions) -> Vec<f64> {
    let m = opts.grid_points.max(2);
    let mut g: Vec<f64> = (0..=m).map(|k| a + (b - a) * k as f64 / m as f64).collect();
    if geometric && opts.log_points > 0 {
        let first = g[1];
        let ratio = (first / a).powf(1.0 / (opts.log_points + 1) as f64);
        let extra: Vec<f64> = (1..=opts.log_points).map(|k| a * ratio.powi(k as i32)).collect();
        g.extend(extra);
        g.sort_by(f64::total_cmp);
        g.dedup();
    }
    g
}

/// The crossing at `lambda = 0` in sf sign convention: its form is minus the
/// pair form, whose co-index is decided by the sign of
/// `int <Q M w0', w0'>`. Returns `None` when the pair is transversal at zero.
fn zero_crossing(
    model: &SkewGradientModel,
    profile: &PulseProfile,
    stable: &dyn LagrangianPath,
    unstable: &dyn LagrangianPath,
    radius: f64,
    opts: &SfOptions,
) -> Result<Option<CrossingRecord>> {
    let s0 = stable.frame_at(0.0)?;
    let u0 = unstable.frame_at(0.0)?;
    let sines = frame_sines(&s0, &u0);
    let cut = 1e-4;
    if sines[0] >= cut {
        return Ok(None);
    }
    let basis: DMatrix<f64> = intersection_basis(&u0, &s0, cut);
    let h = opts.fd_rel * radius.max(1e-3);
    let form = pair_form(stable, unstable, 0.0, &basis, h)?;
    let integral = criterion_integral(model, profile)?.value;
    let mut rec = CrossingRecord::from_form(0.0, &(-form), 0.0);
    if rec.intersection_dim == 1 {
        // the sign is fixed by the integral; the finite-difference value is kept for reference
        let mag = rec.form_eigenvalues[0].abs();
        rec.form_eigenvalues = vec![if integral < 0.0 { -mag } else { mag }];
        rec.signature = if integral < 0.0 { -1 } else { 1 };
    }
    Ok(Some(rec))
}

/// `int <Q M w0', w0'> dx`.
pub fn criterion_integral(model: &SkewGradientModel, profile: &PulseProfile) -> Result<Quadrature> {
    let m: Vec<f64> = model.rates().iter().copied().collect();
    let q: Vec<f64> = model.signature().iter().copied().collect();
    profile_quadrature(profile, &m, &q)
}

/// Criterion integral plus `tau0` for two-component models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub integral: Quadrature,
    pub tau0: Option<f64>,
}

pub fn criterion(model: &SkewGradientModel, profile: &PulseProfile) -> Result<Criterion> {
    let integral = criterion_integral(model, profile)?;
    let tau0 = if model.dim() == 2 && model.activators() == 1 { Some(tau0(profile)?) } else { None };
    Ok(Criterion { integral, tau0 })
}

/// How the translation kernel leaves `lambda = 0` once `eps > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelDrift {
    pub epsilon: f64,
    /// First-order rate `d lambda / d eps = -int |w0'|^2 / int <Q M w0', w0'>`.
    pub predicted_slope: f64,
    pub predicted: f64,
    /// `(lambda, gap)` minimising the Evans gap between `predicted / 4` and
    /// `4 predicted`, cut short before the essential spectrum. `None` when the
    /// prediction itself is not hyperbolic, which happens for large `eps`.
    pub located: Option<(f64, f64)>,
    pub gap_at_zero: f64,
}

impl KernelDrift {
    /// The located crossing lies on the predicted side of zero and the gap
    /// there is small compared with the gap at zero.
    pub fn direction_matches(&self) -> bool {
        self.located
            .is_some_and(|(l, g)| l.signum() == self.predicted.signum() && g < 1e-2 * self.gap_at_zero)
    }
}

pub fn kernel_drift(
    model: &SkewGradientModel,
    profile: &PulseProfile,
    epsilon: f64,
    opts: &FrameOptions,
) -> Result<KernelDrift> {
    if !(epsilon > 0.0) {
        return Err(Error::param("epsilon", format!("must be positive, got {epsilon}")));
    }
    let n = model.dim();
    let norm = profile_quadrature(profile, &vec![1.0; n], &vec![1.0; n])?.value;
    let integral = criterion_integral(model, profile)?.value;
    if integral == 0.0 {
        return Err(Error::param("profile", "criterion integral vanishes"));
    }
    let predicted_slope = -norm / integral;
    let predicted = predicted_slope * epsilon;
    let gap = |l: f64| HamiltonianFamily::probe(model, profile, l, epsilon).evans_gap(opts);
    let gap_at_zero = gap(0.0)?;
    let hyperbolic = |l: f64| crate::hamiltonian::asymptotic_split_of(model, l, epsilon).is_ok();
    let mut located = None;
    if hyperbolic(predicted) {
        let mut far = 4.0 * predicted;
        while !hyperbolic(far) {
            far = 0.5 * (far + predicted);
        }
        let near = 0.25 * predicted;
        let (lo, hi) = if predicted > 0.0 { (near, far) } else { (far, near) };
        located = Some(crate::symplectic::golden_min(lo, hi, 1e-6 * predicted.abs(), gap)?);
    }
    Ok(KernelDrift { epsilon, predicted_slope, predicted, located, gap_at_zero })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "reason", rename_all = "kebab-case")]
pub enum Verdict {
    Unstable(String),
    StableSufficient(String),
    Inconclusive(String),
}

impl Verdict {
    /// Exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Verdict::Unstable(_) => 10,
            Verdict::StableSufficient(_) => 0,
            Verdict::Inconclusive(_) => 2,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Unstable(r) => write!(f, "unstable: {r}"),
            Verdict::StableSufficient(r) => write!(f, "stable: {r}"),
            Verdict::Inconclusive(r) => write!(f, "inconclusive: {r}"),
        }
    }
}

/// Inputs of [`verdict`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerdictInputs {
    pub i_w0: usize,
    pub criterion_integral: f64,
    pub sufficiency_ok: bool,
    pub zero_simple: bool,
}

pub fn verdict(inputs: &VerdictInputs) -> Verdict {
    if inputs.i_w0 > 0 {
        return Verdict::Unstable(format!("stability index positive (i(w0) = {})", inputs.i_w0));
    }
    if inputs.criterion_integral < 0.0 {
        return Verdict::Unstable("criterion integral negative".into());
    }
    match (inputs.sufficiency_ok, inputs.zero_simple) {
        (true, true) => Verdict::StableSufficient("i(w0) = 0, sufficiency conditions hold and zero is simple".into()),
        (false, _) => Verdict::Inconclusive("i(w0) = 0 but the sufficiency conditions fail".into()),
        (true, false) => Verdict::Inconclusive("i(w0) = 0 but the zero eigenvalue is not simple".into()),
    }
}

/// Everything the index module computes for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexReport {
    pub i_w0: usize,
    pub crossings: Vec<CrossingRecord>,
    pub spectral_flow: i64,
    pub sf_crossings: Vec<CrossingRecord>,
    pub criterion_integral: f64,
    pub tau0: Option<f64>,
    pub verdict: Verdict,
}
