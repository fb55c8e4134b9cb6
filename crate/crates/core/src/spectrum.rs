//! Direct eigenvalue computation for the linearised operator
//! `L = M^{-1/2} (D d^2/dx^2 + Q B(x)) M^{-1/2}` on a truncated interval.
//!
//! The dense spectrum at moderate resolution gives the global picture; real
//! eigenvalues near the closed right half-plane are then refined by sparse
//! block inverse iteration on two nested grids and Richardson extrapolation.

use std::io::Write;

use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::asymptotic_split_of;
use crate::linalg::{eigenvalues, orthonormalize};
use crate::model::{check_hypotheses, PulseBound, SkewGradientModel};
use crate::pulse::PulseProfile;
use crate::sparse::TripletBuilder;

/// Smallest admissible number of intervals.
pub const MIN_INTERVALS: usize = 50;

/// Uniform grid `x_i = -X + i h`, `h = 2X / N`; the `N - 1` interior nodes
/// carry the unknowns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumGrid {
    pub intervals: usize,
    pub half_width: f64,
}

impl SpectrumGrid {
    pub fn new(intervals: usize, half_width: f64) -> Result<Self> {
        if intervals < MIN_INTERVALS {
            return Err(Error::GridTooCoarse(intervals));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::param("half_width", "must be positive"));
        }
        Ok(Self { intervals, half_width })
    }

    pub fn step(&self) -> f64 {
        2.0 * self.half_width / self.intervals as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        let h = self.step();
        (1..self.intervals).map(|i| -self.half_width + i as f64 * h).collect()
    }

    pub fn refined(&self) -> Self {
        Self { intervals: 2 * self.intervals, half_width: self.half_width }
    }
}

/// A complex eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

impl Eigenvalue {
    pub fn real(re: f64) -> Self {
        Self { re, im: 0.0 }
    }

    pub fn norm(&self) -> f64 {
        self.re.hypot(self.im)
    }
}

/// Thresholds used when classifying a computed spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumTolerances {
    pub re_tol: f64,
    pub im_tol: f64,
    pub zero_radius: f64,
}

impl SpectrumTolerances {
    /// `re_tol = im_tol = rel * scale`; the zero cluster radius is the larger
    /// of `re_tol` and `50 * pulse_tol`.
    pub fn scaled(scale: f64, rel: f64, pulse_tol: f64) -> Self {
        let t = rel * scale;
        Self { re_tol: t, im_tol: t, zero_radius: t.max(50.0 * pulse_tol) }
    }
}

/// Real eigenvalues near the imaginary axis after refinement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedEigenvalue {
    pub coarse: Eigenvalue,
    pub fine: Eigenvalue,
    pub extrapolated: Eigenvalue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficiencyDetails {
    /// Smallest eigenvalue of `-G2`; `None` without inhibitors.
    pub min_neg_g2: Option<f64>,
    /// Largest eigenvalue of `G3 (-G2)^{-2} G3^T`; `None` without coupling.
    pub coupling_norm: Option<f64>,
    pub operator_checks_pass: bool,
    /// `tau < gamma^2` for FitzHugh-Nagumo models.
    pub fhn_tau_below_gamma_sq: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub grid: SpectrumGrid,
    pub eigenvalues: Vec<Eigenvalue>,
    pub refined: Vec<RefinedEigenvalue>,
    pub tolerances: SpectrumTolerances,
    pub n_plus: usize,
    /// `|L v|_inf / |v|_inf` for `v = M^{1/2} w0'` on the grid.
    pub zero_mode_error: f64,
    pub zero_cluster: usize,
    pub zero_simple: bool,
    pub ess_bound_ok: bool,
    pub sufficiency_ok: bool,
    pub sufficiency: Option<SufficiencyDetails>,
}

impl SpectrumReport {
    /// Real eigenvalues (refined where available) in `[lo, hi]`, ascending.
    pub fn real_eigenvalues_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .eigenvalues
            .iter()
            .filter(|z| z.im.abs() < self.tolerances.im_tol && z.re >= lo && z.re <= hi)
            .map(|z| z.re)
            .collect();
        out.sort_by(f64::total_cmp);
        out
    }

    /// Largest real part in the computed spectrum.
    pub fn spectral_abscissa(&self) -> f64 {
        self.eigenvalues.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumOptions {
    /// Intervals of the dense discretisation.
    pub intervals: usize,
    /// Defaults to the profile half-width.
    pub half_width: Option<f64>,
    /// Relative factor for `re_tol` and `im_tol`.
    pub rel_tol: f64,
    /// Pulse-solver tolerance, used for the zero-cluster radius.
    pub pulse_tol: f64,
    /// Refine real eigenvalues with real part above `-refine_below`.
    pub refine_below: f64,
    pub refine: bool,
    pub sufficiency_tol: f64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self {
            intervals: 600,
            half_width: None,
            rel_tol: 1e-6,
            pulse_tol: 1e-8,
            refine_below: 0.05,
            refine: true,
            sufficiency_tol: 1e-8,
        }
    }
}

fn b_at(model: &SkewGradientModel, profile: &PulseProfile, x: f64) -> DMatrix<f64> {
    if x < profile.left() || x > profile.right() {
        return model.b_inf().clone();
    }
    let (w, _) = profile.interpolate(x);
    model.hess_v(w.as_slice())
}

/// Sparse form of the discretised operator, unknown `(i, k)` at `i * n + k`.
pub fn l_triplets(model: &SkewGradientModel, profile: &PulseProfile, grid: &SpectrumGrid) -> Result<TripletBuilder> {
    if profile.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: profile.dim() });
    }
    let grid = SpectrumGrid::new(grid.intervals, grid.half_width)?;
    let n = model.dim();
    let q = model.signature();
    let m = model.rates();
    let d = model.diffusion();
    let inv_sqrt_m: Vec<f64> = m.iter().map(|v| 1.0 / v.sqrt()).collect();
    let nodes = grid.nodes();
    let h2 = grid.step() * grid.step();
    let size = n * nodes.len();
    let mut t = TripletBuilder::with_capacity(size, size * (n + 2));
    for (i, &x) in nodes.iter().enumerate() {
        let b = b_at(model, profile, x);
        for k in 0..n {
            let row = i * n + k;
            let c = d[k] / (m[k] * h2);
            t.push(row, row, -2.0 * c);
            if i > 0 {
                t.push(row, row - n, c);
            }
            if i + 1 < nodes.len() {
                t.push(row, row + n, c);
            }
            for l in 0..n {
                t.push(row, i * n + l, inv_sqrt_m[k] * q[k] * b[(k, l)] * inv_sqrt_m[l]);
            }
        }
    }
    Ok(t)
}

/// Second-order finite-difference matrix of `L` with homogeneous Dirichlet
/// conditions, of size `n (N - 1)`.
pub fn discretize_l(model: &SkewGradientModel, profile: &PulseProfile, grid: &SpectrumGrid) -> Result<DMatrix<f64>> {
    let t = l_triplets(model, profile, grid)?;
    Ok(to_dense(&t))
}

fn to_dense(t: &TripletBuilder) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(t.dim(), t.dim());
    for (r, c, v) in t.entries() {
        out[(r, c)] += v;
    }
    out
}

fn is_symmetric(a: &DMatrix<f64>) -> bool {
    (0..a.nrows()).all(|i| (0..i).all(|j| a[(i, j)] == a[(j, i)]))
}

/// All eigenvalues of a dense real matrix.
pub fn dense_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Eigenvalue>> {
    let n = a.nrows();
    let fa = Mat::<f64>::from_fn(n, n, |i, j| a[(i, j)]);
    let mut out: Vec<Eigenvalue> = if is_symmetric(a) {
        fa.self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::Eigensolver(format!("{e:?}")))?
            .into_iter()
            .map(Eigenvalue::real)
            .collect()
    } else {
        fa.eigenvalues()
            .map_err(|e| Error::Eigensolver(format!("{e:?}")))?
            .into_iter()
            .map(|z| Eigenvalue { re: z.re, im: z.im })
            .collect()
    };
    if out.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Eigensolver("non-finite eigenvalue".into()));
    }
    out.sort_by(|a, b| b.re.total_cmp(&a.re).then(a.im.total_cmp(&b.im)));
    Ok(out)
}

fn max_row_sum(a: &DMatrix<f64>) -> f64 {
    a.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Eigenvalues of one matrix with their classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseSpectrum {
    pub eigenvalues: Vec<Eigenvalue>,
    pub tolerances: SpectrumTolerances,
    pub n_plus: usize,
    pub zero_mode_error: f64,
    pub zero_cluster: usize,
}

/// Classifies a dense spectrum. `zero_mode`, when given, is the candidate
/// kernel vector whose residual is reported (NaN otherwise).
pub fn eigen_report(
    matrix: &DMatrix<f64>,
    tols: Option<SpectrumTolerances>,
    zero_mode: Option<&DVector<f64>>,
) -> Result<DenseSpectrum> {
    let eigenvalues = dense_eigenvalues(matrix)?;
    let tols = tols.unwrap_or_else(|| SpectrumTolerances::scaled(max_row_sum(matrix), 1e-6, 1e-8));
    let n_plus = count_positive(&eigenvalues, &tols);
    let zero_cluster = count_zero(&eigenvalues, &tols);
    let zero_mode_error = match zero_mode {
        Some(v) => {
            let r = matrix * v;
            r.amax() / v.amax()
        }
        None => f64::NAN,
    };
    Ok(DenseSpectrum { eigenvalues, tolerances: tols, n_plus, zero_mode_error, zero_cluster })
}

fn count_positive(eigs: &[Eigenvalue], tols: &SpectrumTolerances) -> usize {
    eigs.iter()
        .filter(|z| z.re > tols.re_tol && z.im.abs() < tols.im_tol && z.norm() >= tols.zero_radius)
        .count()
}

fn count_zero(eigs: &[Eigenvalue], tols: &SpectrumTolerances) -> usize {
    eigs.iter().filter(|z| z.norm() < tols.zero_radius).count()
}

/// `M^{1/2} w0'` sampled at the interior nodes.
pub fn translation_mode(model: &SkewGradientModel, profile: &PulseProfile, grid: &SpectrumGrid) -> DVector<f64> {
    let n = model.dim();
    let nodes = grid.nodes();
    let m = model.rates();
    let mut v = DVector::zeros(n * nodes.len());
    for (i, &x) in nodes.iter().enumerate() {
        let (_, dw) = profile.interpolate(x);
        for k in 0..n {
            v[i * n + k] = m[k].sqrt() * dw[k];
        }
    }
    v
}

/// True iff `J A_lambda(inf)` is hyperbolic for every probe `lambda >= 0`.
pub fn essential_spectrum_ok(model: &SkewGradientModel, probes: &[f64]) -> Result<bool> {
    if let Some(&bad) = probes.iter().find(|&&l| !(l >= 0.0)) {
        return Err(Error::param("lambda", format!("probe {bad} is negative")));
    }
    for &lambda in probes {
        match asymptotic_split_of(model, lambda, 0.0) {
            Ok(_) => {}
            Err(Error::NonHyperbolic(_)) => return Ok(false),
            Err(e) => return Err(e),
        }
    }
    Ok(true)
}

/// The real-spectrum conditions on the blocks of `G = -Q L`: `-G2 > 0` and
/// `G3 (-G2)^{-2} G3^T < I`, plus `tau < gamma^2` for FitzHugh-Nagumo.
pub fn sufficiency_check(
    model: &SkewGradientModel,
    profile: &PulseProfile,
    grid: &SpectrumGrid,
    tol: f64,
) -> Result<(bool, SufficiencyDetails)> {
    let l = discretize_l(model, profile, grid)?;
    let n = model.dim();
    let q = model.signature();
    let size = l.nrows();
    let mut g = l;
    for r in 0..size {
        let s = -q[r % n];
        g.row_mut(r).scale_mut(s);
    }
    let act: Vec<usize> = (0..size).filter(|r| q[r % n] > 0.0).collect();
    let inh: Vec<usize> = (0..size).filter(|r| q[r % n] < 0.0).collect();
    let fhn = model.fhn_params().map(|p| p.tau < p.gamma * p.gamma);

    if inh.is_empty() {
        let details = SufficiencyDetails {
            min_neg_g2: None,
            coupling_norm: None,
            operator_checks_pass: true,
            fhn_tau_below_gamma_sq: fhn,
        };
        return Ok((fhn.unwrap_or(true), details));
    }
    let neg_g2 = DMatrix::from_fn(inh.len(), inh.len(), |i, j| -0.5 * (g[(inh[i], inh[j])] + g[(inh[j], inh[i])]));
    let g3 = DMatrix::from_fn(act.len(), inh.len(), |i, j| g[(act[i], inh[j])]);
    let min_neg_g2 = sym_eigs(&neg_g2)?.first().copied().unwrap_or(f64::INFINITY);
    let coupling_norm = if act.is_empty() || g3.amax() == 0.0 {
        None
    } else if min_neg_g2 <= 0.0 {
        Some(f64::INFINITY)
    } else {
        let lu = neg_g2.clone().lu();
        let y = lu.solve(&g3.transpose()).ok_or(Error::Singular("-G2"))?;
        let k = y.transpose() * &y;
        sym_eigs(&k)?.last().copied()
    };
    if min_neg_g2.abs() < f64::EPSILON * neg_g2.amax() {
        return Err(Error::Singular("-G2"));
    }
    let operator_checks_pass = min_neg_g2 > tol && coupling_norm.is_none_or(|c| c < 1.0 - tol);
    let ok = operator_checks_pass && fhn.unwrap_or(true);
    Ok((
        ok,
        SufficiencyDetails {
            min_neg_g2: Some(min_neg_g2),
            coupling_norm,
            operator_checks_pass,
            fhn_tau_below_gamma_sq: fhn,
        },
    ))
}

fn sym_eigs(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = a.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let fa = Mat::<f64>::from_fn(n, n, |i, j| a[(i, j)]);
    fa.self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::Eigensolver(format!("{e:?}")))
}

/// Ritz values of the invariant subspace of the sparse operator `t` closest
/// to `shift`, by block inverse iteration with `k` vectors.
pub fn block_inverse_iteration(t: &TripletBuilder, shift: f64, k: usize, iterations: usize) -> Result<Vec<Eigenvalue>> {
    let size = t.dim();
    let mut shifted = t.clone();
    for i in 0..size {
        shifted.push(i, i, -shift);
    }
    let lu = shifted.factor()?;
    let mut v = DMatrix::from_fn(size, k, |i, j| {
        let x = (i as f64 + 1.0) / size as f64;
        ((j + 1) as f64 * std::f64::consts::PI * x).sin() + 0.1 * ((7 * i + 3 * j) % 11) as f64 / 11.0
    });
    v = orthonormalize(&v);
    for _ in 0..iterations {
        let mut next = DMatrix::zeros(size, k);
        for j in 0..k {
            let col: Vec<f64> = v.column(j).iter().copied().collect();
            next.set_column(j, &DVector::from_vec(lu.solve(&col)?));
        }
        v = orthonormalize(&next);
    }
    let mut lv = DMatrix::zeros(size, k);
    for j in 0..k {
        let col: Vec<f64> = v.column(j).iter().copied().collect();
        lv.set_column(j, &DVector::from_vec(t.apply(&col)));
    }
    let ritz = v.transpose() * lv;
    let mut out: Vec<Eigenvalue> =
        eigenvalues(&ritz)?.iter().map(|z| Eigenvalue { re: z.re, im: z.im }).collect();
    out.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(out)
}

/// Groups ascending values whose consecutive gaps are below `gap`.
fn clusters(values: &[f64], gap: f64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for &v in values {
        match out.last_mut() {
            Some(c) if v - c.last().copied().unwrap_or(v) < gap => c.push(v),
            _ => out.push(vec![v]),
        }
    }
    out
}

const CLUSTER_GAP: f64 = 1e-2;
const INVERSE_ITERATIONS: usize = 12;

/// Refines the real eigenvalues above `-floor` on the dense grid and its
/// refinement, and Richardson-extrapolates assuming second-order convergence.
pub fn refine_real_eigenvalues(
    model: &SkewGradientModel,
    profile: &PulseProfile,
    grid: &SpectrumGrid,
    coarse: &[Eigenvalue],
    tols: &SpectrumTolerances,
    floor: f64,
) -> Result<Vec<RefinedEigenvalue>> {
    let mut reals: Vec<f64> =
        coarse.iter().filter(|z| z.im.abs() < tols.im_tol && z.re > -floor).map(|z| z.re).collect();
    reals.sort_by(f64::total_cmp);
    if reals.is_empty() {
        return Ok(Vec::new());
    }
    let t_coarse = l_triplets(model, profile, grid)?;
    let t_fine = l_triplets(model, profile, &grid.refined())?;
    let mut out = Vec::new();
    for cluster in clusters(&reals, CLUSTER_GAP) {
        let k = cluster.len();
        let centre = cluster.iter().sum::<f64>() / k as f64;
        let spread = cluster.last().unwrap() - cluster[0];
        let shift = centre + 0.25 * spread.max(1e-6) + 1e-9;
        let a = block_inverse_iteration(&t_coarse, shift, k, INVERSE_ITERATIONS)?;
        let b = block_inverse_iteration(&t_fine, shift, k, INVERSE_ITERATIONS)?;
        for (c, f) in a.iter().zip(&b) {
            let extrapolated = Eigenvalue { re: (4.0 * f.re - c.re) / 3.0, im: (4.0 * f.im - c.im) / 3.0 };
            out.push(RefinedEigenvalue { coarse: *c, fine: *f, extrapolated });
        }
    }
    Ok(out)
}

/// Full spectral analysis of the pulse: dense eigenvalues, refinement of the
/// real eigenvalues near the imaginary axis, essential-spectrum bound and the
/// sufficiency conditions.
pub fn analyze_spectrum(
    model: &SkewGradientModel,
    profile: &PulseProfile,
    opts: &SpectrumOptions,
) -> Result<SpectrumReport> {
    let grid = SpectrumGrid::new(opts.intervals, opts.half_width.unwrap_or_else(|| profile.half_width()))?;
    let l = discretize_l(model, profile, &grid)?;
    let tols = SpectrumTolerances::scaled(max_row_sum(&l), opts.rel_tol, opts.pulse_tol);
    let v = translation_mode(model, profile, &grid);
    let dense = eigen_report(&l, Some(tols), Some(&v))?;
    let zero_mode_error = dense.zero_mode_error;
    let mut eigenvalues = dense.eigenvalues;

    let refined = if opts.refine {
        refine_real_eigenvalues(model, profile, &grid, &eigenvalues, &tols, opts.refine_below)?
    } else {
        Vec::new()
    };
    for r in &refined {
        if let Some(slot) = eigenvalues.iter_mut().min_by(|a, b| {
            let da = (a.re - r.coarse.re).hypot(a.im - r.coarse.im);
            let db = (b.re - r.coarse.re).hypot(b.im - r.coarse.im);
            da.total_cmp(&db)
        }) {
            *slot = r.extrapolated;
        }
    }
    eigenvalues.sort_by(|a, b| b.re.total_cmp(&a.re).then(a.im.total_cmp(&b.im)));

    let n_plus = count_positive(&eigenvalues, &tols);
    let zero_cluster = count_zero(&eigenvalues, &tols);

    let hyp = check_hypotheses(model, Some(PulseBound::Profile(profile)))?;
    let ess_bound_ok = if hyp.lambda_hat.is_finite() {
        let probes: Vec<f64> = (0..=4).map(|k| hyp.lambda_hat * k as f64 / 4.0).collect();
        essential_spectrum_ok(model, &probes)?
    } else {
        essential_spectrum_ok(model, &[0.0])?
    };
    let (sufficiency_ok, details) = sufficiency_check(model, profile, &grid, opts.sufficiency_tol)?;

    Ok(SpectrumReport {
        grid,
        eigenvalues,
        refined,
        tolerances: tols,
        n_plus,
        zero_mode_error,
        zero_cluster,
        zero_simple: zero_cluster == 1,
        ess_bound_ok,
        sufficiency_ok,
        sufficiency: Some(details),
    })
}

/// `re,im` rows.
pub fn write_eigenvalues_csv<W: Write>(eigs: &[Eigenvalue], mut out: W) -> Result<()> {
    writeln!(out, "re,im")?;
    for z in eigs {
        writeln!(out, "{:.15e},{:.15e}", z.re, z.im)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_fhn, build_scalar_bistable};

    fn flat_profile(n: usize) -> PulseProfile {
        let grid: Vec<f64> = (0..=400).map(|i| -10.0 + 0.05 * i as f64).collect();
        PulseProfile::from_values(grid, DMatrix::zeros(401, n), 1.0).unwrap()
    }

    #[test]
    fn coarse_grid_rejected() {
        let m = build_scalar_bistable();
        let p = flat_profile(1);
        let err = discretize_l(&m, &p, &SpectrumGrid { intervals: 49, half_width: 10.0 }).unwrap_err();
        assert!(matches!(err, Error::GridTooCoarse(49)));
    }

    #[test]
    fn constant_coefficients_match_dirichlet_laplacian() {
        // B == B(inf) = -1: eigenvalues -(k pi / 2X)^2 - 1 up to the O(h^2)
        // discretisation error of the second difference, which has the
        // closed form -(4 / h^2) sin^2(k pi h / 4X) - 1.
        let m = build_scalar_bistable();
        let p = flat_profile(1);
        let grid = SpectrumGrid::new(400, 10.0).unwrap();
        let l = discretize_l(&m, &p, &grid).unwrap();
        assert!(is_symmetric(&l));
        let eigs = dense_eigenvalues(&l).unwrap();
        let h = grid.step();
        for k in 1..=5 {
            let exact = -(k as f64 * std::f64::consts::PI / 20.0).powi(2) - 1.0;
            let discrete = -(4.0 / (h * h)) * (k as f64 * std::f64::consts::PI * h / 40.0).sin().powi(2) - 1.0;
            assert!((eigs[k - 1].re - discrete).abs() < 1e-10);
            assert!((eigs[k - 1].re - exact).abs() < 1e-4);
        }
        assert!(eigs.iter().all(|z| z.re < 0.0));
    }

    #[test]
    fn fhn_matrix_is_not_symmetric() {
        let m = build_fhn(1.0, 0.5, 1.0, 0.5).unwrap();
        let l = discretize_l(&m, &flat_profile(2), &SpectrumGrid::new(60, 5.0).unwrap()).unwrap();
        assert!(!is_symmetric(&l));
    }

    #[test]
    fn sufficiency_fhn_tau_rule() {
        let p = flat_profile(2);
        let grid = SpectrumGrid::new(200, 10.0).unwrap();
        let stable = build_fhn(1.0, 0.5, 1.0, 0.5).unwrap();
        let (ok, d) = sufficiency_check(&stable, &p, &grid, 1e-8).unwrap();
        assert!(ok, "{d:?}");
        assert_eq!(d.fhn_tau_below_gamma_sq, Some(true));
        // coupling bound tau / gamma^2 attained only as k -> 0
        assert!(d.coupling_norm.unwrap() <= 0.5 + 1e-9);

        let slow = build_fhn(1.0, 2.0, 1.0, 0.5).unwrap();
        let (ok, d) = sufficiency_check(&slow, &p, &grid, 1e-8).unwrap();
        assert!(!ok);
        assert_eq!(d.fhn_tau_below_gamma_sq, Some(false));
    }

    #[test]
    fn essential_spectrum_probes() {
        let m = build_fhn(1.0, 0.5, 1.0, 0.5).unwrap();
        assert!(essential_spectrum_ok(&m, &[0.0, 0.5, 1.0]).unwrap());
        assert!(essential_spectrum_ok(&m, &[-0.1]).is_err());
    }

    #[test]
    fn richardson_on_constant_coefficients() {
        let m = build_scalar_bistable();
        let p = flat_profile(1);
        let grid = SpectrumGrid::new(100, 10.0).unwrap();
        let t = l_triplets(&m, &p, &grid).unwrap();
        let top = block_inverse_iteration(&t, -1.0, 2, 20).unwrap();
        let exact = |k: f64| -(k * std::f64::consts::PI / 20.0).powi(2) - 1.0;
        assert!((top[1].re - exact(1.0)).abs() < 1e-4);
        assert!((top[0].re - exact(2.0)).abs() < 1e-3);
    }
}
