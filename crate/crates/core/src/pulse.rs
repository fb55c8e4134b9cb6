//! Standing pulses `D w'' + Q grad V(w) = 0`, `w(x) -> 0` as `|x| -> inf`.
//!
//! The boundary-value problem is discretised on a uniform grid with the
//! fourth-order Numerov scheme. At both ends the solution is projected onto
//! the decaying eigenspace of the asymptotic linearisation, and the
//! translation degeneracy is removed by a phase condition together with an
//! unfolding parameter that must vanish at convergence.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sqrtm;
use crate::model::{ModelKind, SkewGradientModel};
use crate::sparse::TripletBuilder;

/// Multiple of `1 / decay_rate` used when no half-width is given.
pub const DEFAULT_WIDTH_FACTOR: f64 = 21.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PulseProfile {
    grid: Vec<f64>,
    w: DMatrix<f64>,
    w_prime: DMatrix<f64>,
    residual_norm: f64,
    decay_rate: f64,
    model: Option<ModelKind>,
}

impl PulseProfile {
    /// Builds a profile from sampled values; `w` and `w_prime` hold one row
    /// per grid point.
    pub fn new(
        grid: Vec<f64>,
        w: DMatrix<f64>,
        w_prime: DMatrix<f64>,
        residual_norm: f64,
        decay_rate: f64,
    ) -> Result<Self> {
        if grid.len() < 5 {
            return Err(Error::param("grid", "need at least 5 points"));
        }
        if grid.windows(2).any(|p| !(p[1] > p[0])) {
            return Err(Error::param("grid", "must be strictly increasing"));
        }
        if w.nrows() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: w.nrows() });
        }
        if w_prime.shape() != w.shape() {
            return Err(Error::DimensionMismatch { expected: w.ncols(), got: w_prime.ncols() });
        }
        Ok(Self { grid, w, w_prime, residual_norm, decay_rate, model: None })
    }

    /// Profile from values only; derivatives by fourth-order differences on a
    /// uniform grid.
    pub fn from_values(grid: Vec<f64>, w: DMatrix<f64>, decay_rate: f64) -> Result<Self> {
        let h = uniform_step(&grid).ok_or(Error::param("grid", "must be uniform"))?;
        let w_prime = derivative4(&w, h);
        Self::new(grid, w, w_prime, f64::NAN, decay_rate)
    }

    pub fn with_model(mut self, kind: ModelKind) -> Self {
        self.model = Some(kind);
        self
    }

    pub fn with_decay_rate(mut self, rate: f64) -> Self {
        self.decay_rate = rate;
        self
    }

    pub fn model(&self) -> Option<&ModelKind> {
        self.model.as_ref()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn w_prime(&self) -> &DMatrix<f64> {
        &self.w_prime
    }

    pub fn w_at(&self, i: usize) -> DVector<f64> {
        self.w.row(i).transpose()
    }

    pub fn w_prime_at(&self, i: usize) -> DVector<f64> {
        self.w_prime.row(i).transpose()
    }

    /// `w''` at grid point `i`, read off the pulse equation.
    pub fn w_second_at(&self, model: &SkewGradientModel, i: usize) -> DVector<f64> {
        let w: Vec<f64> = self.w.row(i).iter().copied().collect();
        -model.reaction(&w).component_div(model.diffusion())
    }

    pub fn residual_norm(&self) -> f64 {
        self.residual_norm
    }

    pub fn decay_rate(&self) -> f64 {
        self.decay_rate
    }

    pub fn left(&self) -> f64 {
        self.grid[0]
    }

    pub fn right(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }

    pub fn half_width(&self) -> f64 {
        self.left().abs().max(self.right().abs())
    }

    /// Grid step when the grid is uniform.
    pub fn step(&self) -> Option<f64> {
        uniform_step(&self.grid)
    }

    pub fn amplitude(&self) -> f64 {
        self.w.amax()
    }

    /// Cubic Hermite interpolation of `(w, w')` at `x`; zero outside the grid.
    pub fn interpolate(&self, x: f64) -> (DVector<f64>, DVector<f64>) {
        let n = self.dim();
        if x < self.left() || x > self.right() {
            return (DVector::zeros(n), DVector::zeros(n));
        }
        let i = self.locate(x);
        let (x0, x1) = (self.grid[i], self.grid[i + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let d00 = (6.0 * t2 - 6.0 * t) / h;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = (-6.0 * t2 + 6.0 * t) / h;
        let d11 = 3.0 * t2 - 2.0 * t;
        let mut w = DVector::zeros(n);
        let mut wp = DVector::zeros(n);
        for k in 0..n {
            let (y0, y1) = (self.w[(i, k)], self.w[(i + 1, k)]);
            let (m0, m1) = (self.w_prime[(i, k)], self.w_prime[(i + 1, k)]);
            w[k] = h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1;
            wp[k] = d00 * y0 + d10 * m0 + d01 * y1 + d11 * m1;
        }
        (w, wp)
    }

    fn locate(&self, x: f64) -> usize {
        let n = self.grid.len();
        match self.grid.binary_search_by(|g| g.total_cmp(&x)) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        }
    }
}

fn uniform_step(grid: &[f64]) -> Option<f64> {
    let n = grid.len();
    if n < 2 {
        return None;
    }
    let h = (grid[n - 1] - grid[0]) / (n - 1) as f64;
    let ok = grid.windows(2).all(|p| ((p[1] - p[0]) - h).abs() <= 1e-9 * h.max(1.0));
    ok.then_some(h)
}

/// Fourth-order finite-difference derivative of each column.
pub(crate) fn derivative4(w: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    let (m, n) = w.shape();
    let mut d = DMatrix::zeros(m, n);
    if m < 5 {
        return d;
    }
    for k in 0..n {
        let c = |i: usize| w[(i, k)];
        for i in 0..m {
            d[(i, k)] = if i >= 2 && i + 2 < m {
                (c(i - 2) - 8.0 * c(i - 1) + 8.0 * c(i + 1) - c(i + 2)) / (12.0 * h)
            } else if i < 2 {
                let s = i;
                let coeffs: [[f64; 5]; 2] =
                    [[-25.0, 48.0, -36.0, 16.0, -3.0], [-3.0, -10.0, 18.0, -6.0, 1.0]];
                (0..5).map(|j| coeffs[s][j] * c(j)).sum::<f64>() / (12.0 * h)
            } else {
                let s = m - 1 - i;
                let coeffs: [[f64; 5]; 2] =
                    [[-25.0, 48.0, -36.0, 16.0, -3.0], [-3.0, -10.0, 18.0, -6.0, 1.0]];
                -(0..5).map(|j| coeffs[s][j] * c(m - 1 - j)).sum::<f64>() / (12.0 * h)
            };
        }
    }
    d
}

/// Slowest decay exponent of the linearisation at the rest state, i.e. the
/// smallest real part among the square roots of the eigenvalues of
/// `-D^{-1} Q B(inf)`.
pub fn asymptotic_decay_rate(model: &SkewGradientModel) -> Result<f64> {
    let s = tail_matrix(model);
    let scale = s.norm().max(1.0);
    let mut rate = f64::INFINITY;
    for z in crate::linalg::eigenvalues(&s)?.iter() {
        if z.re <= 0.0 && z.im.abs() <= 1e-12 * scale {
            return Err(Error::NonHyperbolic(z.im.abs().max(z.re.abs()).sqrt()));
        }
        rate = rate.min(z.sqrt().re);
    }
    if !(rate > 1e-10) {
        return Err(Error::NonHyperbolic(rate));
    }
    Ok(rate)
}

fn tail_matrix(model: &SkewGradientModel) -> DMatrix<f64> {
    let mut s = -model.reaction_jacobian(&vec![0.0; model.dim()]);
    for (k, mut row) in s.row_iter_mut().enumerate() {
        row /= model.diffusion()[k];
    }
    s
}

/// Initial guess for the Newton iteration.
#[derive(Debug, Clone, Copy)]
pub enum Seed<'a> {
    /// A previously computed profile, interpolated onto the new grid.
    Profile(&'a PulseProfile),
    /// `amplitude * sech^2(x / (2 width))` in every activator; inhibitors are
    /// slaved to it by solving their own equations.
    Builtin { amplitude: f64, width: f64 },
}

impl Default for Seed<'_> {
    fn default() -> Self {
        Seed::Builtin { amplitude: 1.5, width: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveOptions {
    /// Half-width `X` of the domain `[-X, X]`; defaults to `21 / decay_rate`.
    pub half_width: Option<f64>,
    /// Target grid spacing.
    pub step: f64,
    /// Max-norm tolerance on the discrete residual.
    pub tol: f64,
    /// Bound on `|w(+-X)|` and `|w'(+-X)|`.
    pub tail_tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { half_width: None, step: 0.01, tol: 1e-8, tail_tol: 1e-7, max_iter: 60 }
    }
}

struct Bvp<'m> {
    model: &'m SkewGradientModel,
    n: usize,
    intervals: usize,
    h: f64,
    sqrt_tail: DMatrix<f64>,
    seed_w: DMatrix<f64>,
    seed_dw: DMatrix<f64>,
}

const LEFT_D1: [f64; 5] = [-25.0, 48.0, -36.0, 16.0, -3.0];

impl Bvp<'_> {
    fn unknowns(&self) -> usize {
        (self.intervals + 1) * self.n + 1
    }

    fn point(&self, y: &[f64], i: usize) -> Vec<f64> {
        y[i * self.n..(i + 1) * self.n].to_vec()
    }

    /// Residual (and optionally the Jacobian) of the discrete system.
    fn evaluate(&self, y: &[f64], jac: Option<&mut TripletBuilder>) -> Vec<f64> {
        let (n, big_n, h) = (self.n, self.intervals, self.h);
        let c = y[self.unknowns() - 1];
        let q = self.model.signature();
        let d = self.model.diffusion();
        let mut r = vec![0.0; self.unknowns()];
        let grads: Vec<DVector<f64>> =
            (0..=big_n).map(|i| self.model.grad_v(&self.point(y, i))).collect();
        let hess: Option<Vec<DMatrix<f64>>> = jac
            .as_ref()
            .map(|_| (0..=big_n).map(|i| self.model.hess_v(&self.point(y, i))).collect());
        let mut jac = jac;
        let h2 = h * h;
        for i in 1..big_n {
            for k in 0..n {
                let row = i * n + k;
                let lap = (y[(i + 1) * n + k] - 2.0 * y[i * n + k] + y[(i - 1) * n + k]) / h2;
                let mut src = 0.0;
                let mut dc = 0.0;
                for (j, wt) in [(i - 1, 1.0), (i, 10.0), (i + 1, 1.0)] {
                    src += wt * q[k] * (grads[j][k] + c * self.seed_dw[(j, k)]);
                    dc += wt * q[k] * self.seed_dw[(j, k)];
                }
                r[row] = d[k] * lap + src / 12.0;
                if let (Some(jb), Some(hs)) = (jac.as_deref_mut(), hess.as_ref()) {
                    for (j, wt, lw) in [(i - 1, 1.0, 1.0), (i, 10.0, -2.0), (i + 1, 1.0, 1.0)] {
                        jb.push(row, j * n + k, d[k] * lw / h2);
                        for l in 0..n {
                            jb.push(row, j * n + l, wt / 12.0 * q[k] * hs[j][(k, l)]);
                        }
                    }
                    jb.push(row, self.unknowns() - 1, dc / 12.0);
                }
            }
        }
        // Projection conditions: w' = R w at -X and w' = -R w at +X.
        for k in 0..n {
            let mut left = 0.0;
            let mut right = 0.0;
            for (m, a) in LEFT_D1.iter().enumerate() {
                left += a * y[m * n + k] / (12.0 * h);
                right -= a * y[(big_n - m) * n + k] / (12.0 * h);
            }
            for l in 0..n {
                left -= self.sqrt_tail[(k, l)] * y[l];
                right += self.sqrt_tail[(k, l)] * y[big_n * n + l];
            }
            r[k] = left;
            r[big_n * n + k] = right;
            if let Some(jb) = jac.as_deref_mut() {
                for (m, a) in LEFT_D1.iter().enumerate() {
                    jb.push(k, m * n + k, a / (12.0 * h));
                    jb.push(big_n * n + k, (big_n - m) * n + k, -a / (12.0 * h));
                }
                for l in 0..n {
                    jb.push(k, l, -self.sqrt_tail[(k, l)]);
                    jb.push(big_n * n + k, big_n * n + l, self.sqrt_tail[(k, l)]);
                }
            }
        }
        // Phase condition against the seed.
        let last = self.unknowns() - 1;
        let mut phase = 0.0;
        for i in 0..=big_n {
            for k in 0..n {
                phase += h * self.seed_dw[(i, k)] * (y[i * n + k] - self.seed_w[(i, k)]);
                if let Some(jb) = jac.as_deref_mut() {
                    jb.push(last, i * n + k, h * self.seed_dw[(i, k)]);
                }
            }
        }
        r[last] = phase;
        r
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}

fn builtin_seed(
    model: &SkewGradientModel,
    grid: &[f64],
    amplitude: f64,
    width: f64,
) -> Result<DMatrix<f64>> {
    if !(width > 0.0) {
        return Err(Error::param("seed width", "must be positive"));
    }
    let n = model.dim();
    let j = model.activators();
    let m = grid.len();
    let mut w = DMatrix::zeros(m, n);
    for (i, &x) in grid.iter().enumerate() {
        let s = 1.0 / (x / (2.0 * width)).cosh();
        for k in 0..j {
            w[(i, k)] = amplitude * s * s;
        }
    }
    if j < n && amplitude != 0.0 {
        slave_inhibitors(model, grid, &mut w)?;
    }
    Ok(w)
}

/// Solves the inhibitor equations for fixed activators by damped Newton on a
/// second-order grid with homogeneous Dirichlet ends.
fn slave_inhibitors(model: &SkewGradientModel, grid: &[f64], w: &mut DMatrix<f64>) -> Result<()> {
    let n = model.dim();
    let j = model.activators();
    let k_inh = n - j;
    let m = grid.len();
    let h = grid[1] - grid[0];
    let d = model.diffusion();
    let q = model.signature();
    let idx = |i: usize, k: usize| i * k_inh + (k - j);
    for _ in 0..50 {
        let mut res = vec![0.0; m * k_inh];
        let mut jb = TripletBuilder::new(m * k_inh);
        for i in 0..m {
            let wi: Vec<f64> = w.row(i).iter().copied().collect();
            let g = model.grad_v(&wi);
            let hs = model.hess_v(&wi);
            for k in j..n {
                let row = idx(i, k);
                if i == 0 || i == m - 1 {
                    res[row] = w[(i, k)];
                    jb.push(row, row, 1.0);
                    continue;
                }
                let lap = (w[(i + 1, k)] - 2.0 * w[(i, k)] + w[(i - 1, k)]) / (h * h);
                res[row] = d[k] * lap + q[k] * g[k];
                jb.push(row, idx(i - 1, k), d[k] / (h * h));
                jb.push(row, idx(i + 1, k), d[k] / (h * h));
                jb.push(row, row, -2.0 * d[k] / (h * h));
                for l in j..n {
                    jb.push(row, idx(i, l), q[k] * hs[(k, l)]);
                }
            }
        }
        let norm = max_abs(&res);
        let step = jb.solve(&res.iter().map(|r| -r).collect::<Vec<_>>())?;
        let scale = (1.0_f64).min(0.5 / max_abs(&step).max(1e-300));
        for i in 0..m {
            for k in j..n {
                w[(i, k)] += scale * step[idx(i, k)];
            }
        }
        if norm < 1e-10 || max_abs(&step) < 1e-12 {
            break;
        }
    }
    Ok(())
}

/// Computes a standing pulse by Newton's method on the Numerov discretisation.
pub fn solve_pulse(
    model: &SkewGradientModel,
    opts: &SolveOptions,
    seed: Seed<'_>,
) -> Result<PulseProfile> {
    if !(opts.tol > 0.0) {
        return Err(Error::param("tol", "must be positive"));
    }
    if !(opts.step > 0.0) {
        return Err(Error::param("step", "must be positive"));
    }
    let decay = asymptotic_decay_rate(model)?;
    let half_width = opts.half_width.unwrap_or(DEFAULT_WIDTH_FACTOR / decay);
    if !(half_width > 0.0) {
        return Err(Error::param("half_width", "must be positive"));
    }
    let intervals = ((2.0 * half_width / opts.step).ceil() as usize).max(50);
    let h = 2.0 * half_width / intervals as f64;
    let grid: Vec<f64> = (0..=intervals).map(|i| -half_width + i as f64 * h).collect();
    let n = model.dim();

    let seed_w = match seed {
        Seed::Profile(p) => {
            if p.dim() != n {
                return Err(Error::DimensionMismatch { expected: n, got: p.dim() });
            }
            let mut w = DMatrix::zeros(grid.len(), n);
            for (i, &x) in grid.iter().enumerate() {
                w.set_row(i, &p.interpolate(x).0.transpose());
            }
            w
        }
        Seed::Builtin { amplitude, width } => builtin_seed(model, &grid, amplitude, width)?,
    };
    if seed_w.amax() < 1e-12 {
        return Err(Error::TrivialSolution);
    }
    let seed_dw = derivative4(&seed_w, h);
    let bvp = Bvp {
        model,
        n,
        intervals,
        h,
        sqrt_tail: sqrtm(&tail_matrix(model))?,
        seed_w: seed_w.clone(),
        seed_dw,
    };

    let mut y = vec![0.0; bvp.unknowns()];
    for i in 0..=intervals {
        for k in 0..n {
            y[i * n + k] = seed_w[(i, k)];
        }
    }
    let mut res = bvp.evaluate(&y, None);
    let mut norm = max_abs(&res);
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut jb = TripletBuilder::with_capacity(bvp.unknowns(), bvp.unknowns() * (3 * n + 4));
        bvp.evaluate(&y, Some(&mut jb));
        let step = jb.solve(&res.iter().map(|r| -r).collect::<Vec<_>>())?;
        let mut alpha = 1.0;
        let mut accepted = false;
        while alpha >= 1.0 / 1024.0 {
            let trial: Vec<f64> = y.iter().zip(&step).map(|(a, s)| a + alpha * s).collect();
            let trial_res = bvp.evaluate(&trial, None);
            let trial_norm = max_abs(&trial_res);
            if trial_norm < norm || trial_norm <= 0.1 * opts.tol {
                y = trial;
                res = trial_res;
                norm = trial_norm;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        let step_norm = alpha * max_abs(&step);
        if !accepted {
            break;
        }
        if norm <= 1e-3 * opts.tol || (norm <= opts.tol && step_norm < 1e-13) {
            break;
        }
    }
    if !(norm <= opts.tol) {
        return Err(Error::NewtonStagnation { iterations, residual: norm });
    }

    let mut w = DMatrix::zeros(intervals + 1, n);
    for i in 0..=intervals {
        for k in 0..n {
            w[(i, k)] = y[i * n + k];
        }
    }
    if w.amax() < 1e-6 {
        return Err(Error::TrivialSolution);
    }
    let c = y[bvp.unknowns() - 1];
    if c.abs() > 1e-6 {
        return Err(Error::NotStationary(c));
    }
    let w_prime = derivative4(&w, h);
    let tail = [w.row(0).amax(), w.row(intervals).amax(), w_prime.row(0).amax(), w_prime.row(intervals).amax()]
        .into_iter()
        .fold(0.0, f64::max);
    if tail > opts.tail_tol {
        return Err(Error::HalfWidthTooSmall { tail, tol: opts.tail_tol });
    }
    let profile = PulseProfile::new(grid, w, w_prime, norm, decay)?;
    Ok(profile.with_model(model.kind().clone()))
}

/// Result of [`profile_quadrature`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    /// Composite Simpson value.
    pub value: f64,
    /// Trapezoidal value on the same grid.
    pub trapezoid: f64,
    /// Set when Simpson on the grid and on every other point disagree by more
    /// than 1% of the integral of the absolute integrand.
    pub coarse_grid_warning: bool,
}

fn simpson(x: &[f64], f: &[f64], stride: usize) -> f64 {
    let idx: Vec<usize> = (0..x.len()).step_by(stride).collect();
    let m = idx.len();
    if m < 2 {
        return 0.0;
    }
    let mut s = 0.0;
    let mut k = 0;
    while k + 2 < m {
        let (a, b, c) = (idx[k], idx[k + 1], idx[k + 2]);
        let (h0, h1) = (x[b] - x[a], x[c] - x[b]);
        let hs = h0 + h1;
        s += hs / 6.0
            * ((2.0 - h1 / h0) * f[a] + hs * hs / (h0 * h1) * f[b] + (2.0 - h0 / h1) * f[c]);
        k += 2;
    }
    if k + 1 < m {
        let (a, b) = (idx[k], idx[k + 1]);
        s += 0.5 * (x[b] - x[a]) * (f[a] + f[b]);
    }
    s
}

fn trapezoid(x: &[f64], f: &[f64]) -> f64 {
    x.windows(2).zip(f.windows(2)).map(|(xs, fs)| 0.5 * (xs[1] - xs[0]) * (fs[0] + fs[1])).sum()
}

/// `int <Q W w', w'> dx` with `W = diag(weight)` and `Q = diag(signs)`.
pub fn profile_quadrature(profile: &PulseProfile, weight: &[f64], signs: &[f64]) -> Result<Quadrature> {
    let n = profile.dim();
    if weight.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: weight.len() });
    }
    if signs.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: signs.len() });
    }
    let wp = profile.w_prime();
    let f: Vec<f64> = (0..profile.len())
        .map(|i| (0..n).map(|k| signs[k] * weight[k] * wp[(i, k)] * wp[(i, k)]).sum())
        .collect();
    let abs_f: Vec<f64> = f.iter().map(|v| v.abs()).collect();
    let x = profile.grid();
    let value = simpson(x, &f, 1);
    let coarse = simpson(x, &f, 2);
    let scale = simpson(x, &abs_f, 1);
    Ok(Quadrature {
        value,
        trapezoid: trapezoid(x, &f),
        coarse_grid_warning: (value - coarse).abs() > 0.01 * scale,
    })
}

/// `tau0 = int |u'|^2 / int |v'|^2` for a two-component pulse.
pub fn tau0(profile: &PulseProfile) -> Result<f64> {
    Ok(tau0_rules(profile)?.0)
}

/// `tau0` by Simpson and by the trapezoidal rule.
pub fn tau0_rules(profile: &PulseProfile) -> Result<(f64, f64)> {
    if profile.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: profile.dim() });
    }
    let num = profile_quadrature(profile, &[1.0, 0.0], &[1.0, 1.0])?;
    let den = profile_quadrature(profile, &[0.0, 1.0], &[1.0, 1.0])?;
    if den.value.abs() < 1e-14 {
        return Err(Error::FlatInhibitor(den.value));
    }
    Ok((num.value / den.value, num.trapezoid / den.trapezoid))
}

/// Metadata written next to a saved profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileMeta {
    pub n: usize,
    pub points: usize,
    pub half_width: f64,
    pub residual_norm: Option<f64>,
    pub decay_rate: Option<f64>,
    pub model: Option<ModelKind>,
}

/// Path of the JSON sidecar belonging to a profile CSV.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Writes the profile CSV (`x,w1..wn,dw1..dwn`) and its JSON sidecar.
pub fn save_profile(profile: &PulseProfile, path: &Path) -> Result<()> {
    let n = profile.dim();
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    let mut header = vec!["x".to_string()];
    header.extend((1..=n).map(|k| format!("w{k}")));
    header.extend((1..=n).map(|k| format!("dw{k}")));
    writeln!(out, "{}", header.join(","))?;
    for i in 0..profile.len() {
        let mut row = vec![format!("{:e}", profile.grid[i])];
        row.extend((0..n).map(|k| format!("{:e}", profile.w[(i, k)])));
        row.extend((0..n).map(|k| format!("{:e}", profile.w_prime[(i, k)])));
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    let meta = ProfileMeta {
        n,
        points: profile.len(),
        half_width: profile.half_width(),
        residual_norm: finite(profile.residual_norm),
        decay_rate: finite(profile.decay_rate),
        model: profile.model.clone(),
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

/// Reads a profile CSV; the sidecar is optional and supplies the residual,
/// decay rate and model description when present.
pub fn load_profile(path: &Path) -> Result<PulseProfile> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(l) => l?,
        None => return Err(Error::Parse { line: 1, msg: "empty file".into() }),
    };
    let cols: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    if cols.len() < 3 || cols.len().is_multiple_of(2) || cols[0] != "x" {
        return Err(Error::Parse { line: 1, msg: format!("bad header `{}`", header.trim()) });
    }
    let n = (cols.len() - 1) / 2;
    for k in 1..=n {
        if cols[k] != format!("w{k}") || cols[n + k] != format!("dw{k}") {
            return Err(Error::Parse { line: 1, msg: format!("bad header `{}`", header.trim()) });
        }
    }
    let mut grid = Vec::new();
    let mut vals: Vec<f64> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line_no = lineno + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 * n + 1 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected {} columns, found {}", 2 * n + 1, fields.len()),
            });
        }
        let mut row = Vec::with_capacity(fields.len());
        for f in fields {
            let v: f64 = f.trim().parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("not a number: `{}`", f.trim()),
            })?;
            row.push(v);
        }
        if let Some(&last) = grid.last() {
            if !(row[0] > last) {
                return Err(Error::Parse { line: line_no, msg: "grid is not strictly increasing".into() });
            }
        }
        grid.push(row[0]);
        vals.extend_from_slice(&row[1..]);
    }
    let m = grid.len();
    if m < 5 {
        return Err(Error::Parse { line: m + 1, msg: "need at least 5 grid points".into() });
    }
    let w = DMatrix::from_fn(m, n, |i, k| vals[i * 2 * n + k]);
    let w_prime = DMatrix::from_fn(m, n, |i, k| vals[i * 2 * n + n + k]);
    let mut profile = PulseProfile::new(grid, w, w_prime, f64::NAN, f64::NAN)?;
    let side = sidecar_path(path);
    if side.exists() {
        let meta: ProfileMeta = serde_json::from_str(&fs::read_to_string(&side)?)?;
        if meta.n != n {
            return Err(Error::Parse {
                line: 1,
                msg: format!("sidecar declares n = {}, columns give n = {n}", meta.n),
            });
        }
        profile.residual_norm = meta.residual_norm.unwrap_or(f64::NAN);
        profile.decay_rate = meta.decay_rate.unwrap_or(f64::NAN);
        profile.model = meta.model;
    }
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_scalar_bistable;

    fn exact(x: f64) -> f64 {
        let s = 1.0 / (x / 2.0).cosh();
        1.5 * s * s
    }

    #[test]
    fn derivative4_is_fourth_order() {
        let errs: Vec<f64> = [0.1, 0.05]
            .iter()
            .map(|&h| {
                let m = (4.0 / h) as usize + 1;
                let w = DMatrix::from_fn(m, 1, |i, _| (i as f64 * h).sin());
                let d = derivative4(&w, h);
                (0..m).map(|i| (d[(i, 0)] - (i as f64 * h).cos()).abs()).fold(0.0, f64::max)
            })
            .collect();
        assert!(errs[0] / errs[1] > 14.0, "{errs:?}");
    }

    #[test]
    fn scalar_decay_rate_is_one() {
        let r = asymptotic_decay_rate(&build_scalar_bistable()).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn interpolation_reproduces_cubics() {
        let grid: Vec<f64> = (0..11).map(|i| i as f64 * 0.3).collect();
        let w = DMatrix::from_fn(11, 1, |i, _| grid[i].powi(3) - grid[i]);
        let wp = DMatrix::from_fn(11, 1, |i, _| 3.0 * grid[i].powi(2) - 1.0);
        let p = PulseProfile::new(grid, w, wp, 0.0, 1.0).unwrap();
        let (v, d) = p.interpolate(1.37);
        assert!((v[0] - (1.37f64.powi(3) - 1.37)).abs() < 1e-12);
        assert!((d[0] - (3.0 * 1.37f64.powi(2) - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn scalar_pulse_matches_closed_form() {
        let model = build_scalar_bistable();
        let opts = SolveOptions { half_width: Some(30.0), ..Default::default() };
        let p = solve_pulse(&model, &opts, Seed::Builtin { amplitude: 1.0, width: 1.5 }).unwrap();
        let err = p.grid().iter().enumerate().map(|(i, &x)| (p.w()[(i, 0)] - exact(x)).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "max error {err}");
    }
}
