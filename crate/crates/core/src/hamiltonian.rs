//! The linear Hamiltonian system `z' = J A_{lambda,eps}(x) z` along a pulse
//! and the Lagrangian frames `E^u(tau)`, `E^s(tau)` it transports.
//!
//! Coordinates are `z = (p, q) = (Q D psi', psi)`, so that
//! `A = [[(QD)^{-1}, 0], [0, B(x) - eps I - lambda Q M]]` with
//! `B(x) = hess V(w0(x))`.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hyperbolic_split, orthonormalize};
use crate::model::SkewGradientModel;
use crate::pulse::PulseProfile;
use crate::symplectic::{j_matrix, LagrangianFrame, LagrangianPath};

/// Eigenvalues of `J A(inf)` closer than this to the imaginary axis are
/// treated as non-hyperbolic.
pub const HYPERBOLICITY_TOL: f64 = 1e-10;

/// Isotropy defect after a step beyond which integration is abandoned.
pub const DRIFT_LIMIT: f64 = 1e-8;

/// The family `A_{lambda,eps}` over a fixed model and pulse.
#[derive(Debug, Clone, Copy)]
pub struct HamiltonianFamily<'a> {
    model: &'a SkewGradientModel,
    profile: &'a PulseProfile,
    lambda: f64,
    epsilon: f64,
}

/// Asymptotic invariant subspaces of `J A(inf)`.
#[derive(Debug, Clone)]
pub struct AsymptoticSplit {
    pub v_plus: LagrangianFrame,
    pub v_minus: LagrangianFrame,
    pub spectral_gap: f64,
}

/// Tolerances for the frame integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameOptions {
    pub rtol: f64,
    pub atol: f64,
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for FrameOptions {
    fn default() -> Self {
        Self { rtol: 1e-11, atol: 1e-12, initial_step: 1e-3, min_step: 1e-12, max_step: 0.25, max_steps: 1_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// Forward from the left end, starting on `V^+`.
    Unstable,
    /// Backward from the right end, starting on `V^-`.
    Stable,
}

/// Frames sampled along `x`.
#[derive(Debug, Clone)]
pub struct FramePath {
    pub grid: Vec<f64>,
    pub frames: Vec<LagrangianFrame>,
    pub direction: Direction,
}

impl FramePath {
    /// CSV with `tau` followed by the frame entries column by column.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let Some(first) = self.frames.first() else {
            writeln!(out, "tau")?;
            return Ok(());
        };
        let (rows, cols) = first.columns().shape();
        let mut header = vec!["tau".to_string()];
        for c in 0..cols {
            for r in 0..rows {
                header.push(format!("z{r}_{c}"));
            }
        }
        writeln!(out, "{}", header.join(","))?;
        for (t, f) in self.grid.iter().zip(&self.frames) {
            let vals: Vec<String> = f.columns().iter().map(|v| format!("{v:e}")).collect();
            writeln!(out, "{t:e},{}", vals.join(","))?;
        }
        Ok(())
    }
}

impl<'a> HamiltonianFamily<'a> {
    /// The family at `lambda >= 0` and `eps = 0`.
    pub fn new(model: &'a SkewGradientModel, profile: &'a PulseProfile, lambda: f64) -> Result<Self> {
        if profile.dim() != model.dim() {
            return Err(Error::DimensionMismatch { expected: model.dim(), got: profile.dim() });
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::param("lambda", format!("must be finite and >= 0, got {lambda}")));
        }
        Ok(Self { model, profile, lambda, epsilon: 0.0 })
    }

    /// Sets `eps`, which must lie in `[0, eps_max]`.
    pub fn with_epsilon(mut self, epsilon: f64, eps_max: f64) -> Result<Self> {
        if !(0.0..=eps_max).contains(&epsilon) {
            return Err(Error::param("epsilon", format!("must lie in [0, {eps_max}], got {epsilon}")));
        }
        self.epsilon = epsilon;
        Ok(self)
    }

    /// Unchecked parameters, including `lambda < 0`; used to probe the
    /// family on both sides of a crossing.
    pub fn probe(model: &'a SkewGradientModel, profile: &'a PulseProfile, lambda: f64, epsilon: f64) -> Self {
        Self { model, profile, lambda, epsilon }
    }

    pub fn at_lambda(&self, lambda: f64) -> Self {
        Self { lambda, ..*self }
    }

    pub fn model(&self) -> &'a SkewGradientModel {
        self.model
    }

    pub fn profile(&self) -> &'a PulseProfile {
        self.profile
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    fn assemble(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        assemble_a_with(self.model, b, self.lambda, self.epsilon)
    }

    /// `B(x)`, the Hessian along the interpolated pulse; `B(inf)` outside the
    /// profile grid.
    pub fn b_at(&self, x: f64) -> DMatrix<f64> {
        if x < self.profile.left() || x > self.profile.right() {
            return self.model.b_inf().clone();
        }
        let (w, _) = self.profile.interpolate(x);
        self.model.hess_v(w.as_slice())
    }

    /// The symmetric matrix `A_{lambda,eps}(x)`.
    pub fn assemble_a(&self, x: f64) -> DMatrix<f64> {
        self.assemble(&self.b_at(x))
    }

    pub fn a_infinity(&self) -> DMatrix<f64> {
        self.assemble(self.model.b_inf())
    }

    /// `J A_{lambda,eps}(inf)`.
    pub fn ja_infinity(&self) -> DMatrix<f64> {
        j_matrix(self.dim()) * self.a_infinity()
    }

    /// Expanding and contracting subspaces of `J A(inf)`.
    pub fn asymptotic_split(&self) -> Result<AsymptoticSplit> {
        asymptotic_split_of(self.model, self.lambda, self.epsilon)
    }

    /// Transports `frame` from `x0` to `x1` (either direction).
    pub fn propagate(&self, frame: &LagrangianFrame, x0: f64, x1: f64, opts: &FrameOptions) -> Result<LagrangianFrame> {
        let mut z = frame.columns().clone();
        let mut h = opts.initial_step.min(opts.max_step);
        self.advance(&mut z, x0, x1, &mut h, opts)?;
        Ok(LagrangianFrame::project(&z)?.0)
    }

    /// `E^u(tau)` on an increasing grid, integrated forward from the left end
    /// of the profile (or from the first grid point if that lies further left).
    pub fn integrate_unstable(&self, grid: &[f64], opts: &FrameOptions) -> Result<FramePath> {
        check_grid(grid)?;
        let start = self.profile.left().min(grid[0]);
        let mut z = self.asymptotic_split()?.v_plus.columns().clone();
        let mut x = start;
        let mut h = opts.initial_step.min(opts.max_step);
        let mut frames = Vec::with_capacity(grid.len());
        for &t in grid {
            self.advance(&mut z, x, t, &mut h, opts)?;
            x = t;
            frames.push(LagrangianFrame::project(&z)?.0);
        }
        Ok(FramePath { grid: grid.to_vec(), frames, direction: Direction::Unstable })
    }

    /// `E^s(tau)` on an increasing grid, integrated backward from the right
    /// end of the profile.
    pub fn integrate_stable(&self, grid: &[f64], opts: &FrameOptions) -> Result<FramePath> {
        check_grid(grid)?;
        let start = self.profile.right().max(grid[grid.len() - 1]);
        let mut z = self.asymptotic_split()?.v_minus.columns().clone();
        let mut x = start;
        let mut h = opts.initial_step.min(opts.max_step);
        let mut frames = Vec::with_capacity(grid.len());
        for &t in grid.iter().rev() {
            self.advance(&mut z, x, t, &mut h, opts)?;
            x = t;
            frames.push(LagrangianFrame::project(&z)?.0);
        }
        frames.reverse();
        Ok(FramePath { grid: grid.to_vec(), frames, direction: Direction::Stable })
    }

    pub fn unstable_at(&self, tau: f64, opts: &FrameOptions) -> Result<LagrangianFrame> {
        Ok(self.integrate_unstable(&[tau], opts)?.frames.remove(0))
    }

    pub fn stable_at(&self, tau: f64, opts: &FrameOptions) -> Result<LagrangianFrame> {
        Ok(self.integrate_stable(&[tau], opts)?.frames.remove(0))
    }

    /// Smallest singular value of `[E^s(0) | E^u(0)]` with orthonormal
    /// frames; it vanishes exactly when `lambda` is an eigenvalue.
    pub fn evans_gap(&self, opts: &FrameOptions) -> Result<f64> {
        let u = self.unstable_at(0.0, opts)?;
        let s = self.stable_at(0.0, opts)?;
        Ok(evans_gap_of(&s, &u))
    }

    /// Integrates the projected flow `Z' = (I - Z Z^T) J A Z` from `x0` to `x1`
    /// with a Dormand-Prince 5(4) pair, re-orthonormalising after each step.
    fn advance(&self, z: &mut DMatrix<f64>, x0: f64, x1: f64, h: &mut f64, opts: &FrameOptions) -> Result<()> {
        let span = x1 - x0;
        if span == 0.0 {
            return Ok(());
        }
        let dir = span.signum();
        let n = self.dim();
        let mut x = x0;
        let mut steps = 0;
        let rhs = |x: f64, z: &DMatrix<f64>| -> DMatrix<f64> {
            let a = self.assemble_a(x);
            let jaz = apply_j(&(a * z));
            let proj = z * (z.transpose() * &jaz);
            jaz - proj
        };
        let mut k1 = rhs(x, z);
        while (x1 - x) * dir > 0.0 {
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::StepRejection { x });
            }
            let remaining = (x1 - x).abs();
            let hh = h.min(remaining).min(opts.max_step);
            let hs = hh * dir;
            let k2 = rhs(x + hs * C2, &(&*z + &k1 * (hs * A21)));
            let k3 = rhs(x + hs * C3, &(&*z + (&k1 * A31 + &k2 * A32) * hs));
            let k4 = rhs(x + hs * C4, &(&*z + (&k1 * A41 + &k2 * A42 + &k3 * A43) * hs));
            let k5 = rhs(x + hs * C5, &(&*z + (&k1 * A51 + &k2 * A52 + &k3 * A53 + &k4 * A54) * hs));
            let k6 = rhs(x + hs, &(&*z + (&k1 * A61 + &k2 * A62 + &k3 * A63 + &k4 * A64 + &k5 * A65) * hs));
            let y5 = &*z + (&k1 * B1 + &k3 * B3 + &k4 * B4 + &k5 * B5 + &k6 * B6) * hs;
            let k7 = rhs(x + hs, &y5);
            let err_vec = (&k1 * E1 + &k3 * E3 + &k4 * E4 + &k5 * E5 + &k6 * E6 + &k7 * E7) * hs;
            let mut err: f64 = 0.0;
            for (e, (y0, y1)) in err_vec.iter().zip(z.iter().zip(y5.iter())) {
                let sc = opts.atol + opts.rtol * y0.abs().max(y1.abs());
                err = err.max(e.abs() / sc);
            }
            if err <= 1.0 {
                x = if hh == remaining { x1 } else { x + hs };
                let q = orthonormalize(&y5);
                let drift = crate::symplectic::isotropy_defect(&q);
                if drift > DRIFT_LIMIT {
                    return Err(Error::IsotropyDrift { x, drift });
                }
                *z = if drift > 1e-13 { LagrangianFrame::project(&q)?.0.columns().clone() } else { q };
                debug_assert_eq!(z.ncols(), n);
                k1 = rhs(x, z);
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                *h = (hh * fac).min(opts.max_step);
            } else {
                let fac = (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                *h = hh * fac;
                if *h < opts.min_step {
                    return Err(Error::StepRejection { x });
                }
            }
        }
        Ok(())
    }
}

/// `A_{lambda,eps}` for an arbitrary Hessian block `b`.
pub fn assemble_a_with(model: &SkewGradientModel, b: &DMatrix<f64>, lambda: f64, epsilon: f64) -> DMatrix<f64> {
    let n = model.dim();
    let q = model.signature();
    let d = model.diffusion();
    let m = model.rates();
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        a[(i, i)] = 1.0 / (q[i] * d[i]);
    }
    let mut lower = b.clone();
    for i in 0..n {
        lower[(i, i)] -= epsilon + lambda * q[i] * m[i];
    }
    a.view_mut((n, n), (n, n)).copy_from(&lower);
    a
}

/// Hyperbolic splitting of `J A_{lambda,eps}(inf)`; needs no pulse profile.
pub fn asymptotic_split_of(model: &SkewGradientModel, lambda: f64, epsilon: f64) -> Result<AsymptoticSplit> {
    let ja = j_matrix(model.dim()) * assemble_a_with(model, model.b_inf(), lambda, epsilon);
    let split = hyperbolic_split(&ja, HYPERBOLICITY_TOL)?;
    let v_plus = LagrangianFrame::new(split.plus)?;
    let v_minus = LagrangianFrame::new(split.minus)?;
    Ok(AsymptoticSplit { v_plus, v_minus, spectral_gap: split.gap })
}

/// Hyperbolicity margins of `J A_{lambda,eps}(inf)` at one parameter pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicityProbe {
    pub lambda: f64,
    pub epsilon: f64,
    /// `min |Re mu|` over the asymptotic eigenvalues.
    pub spectral_gap: f64,
    /// Smallest principal angle between `Lambda_R` and `V^+`.
    pub angle_plus: f64,
    pub angle_minus: f64,
}

/// Probes the corners and midpoint of `[0, lambda_hat] x [0, eps_max]`.
pub fn hyperbolicity_probes(model: &SkewGradientModel, lambda_hat: f64, eps_max: f64) -> Result<Vec<HyperbolicityProbe>> {
    let reference = crate::symplectic::lambda_r(model.dim(), model.activators())?;
    let angle = |f: &LagrangianFrame| crate::symplectic::frame_sines(&reference, f)[0].clamp(0.0, 1.0).asin();
    let mut out = Vec::new();
    for lambda in [0.0, 0.5 * lambda_hat, lambda_hat] {
        for epsilon in [0.0, eps_max] {
            let split = asymptotic_split_of(model, lambda, epsilon)?;
            out.push(HyperbolicityProbe {
                lambda,
                epsilon,
                spectral_gap: split.spectral_gap,
                angle_plus: angle(&split.v_plus),
                angle_minus: angle(&split.v_minus),
            });
        }
    }
    Ok(out)
}

/// Smallest singular value of `[E^s | E^u]`.
pub fn evans_gap_of(stable: &LagrangianFrame, unstable: &LagrangianFrame) -> f64 {
    let n = stable.dim_n();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (2 * n, n)).copy_from(stable.columns());
    m.view_mut((0, n), (2 * n, n)).copy_from(unstable.columns());
    crate::linalg::singular_values(&m).last().copied().unwrap_or(0.0)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::param("tau_grid", "must be non-empty, finite and strictly increasing"));
    }
    Ok(())
}

fn apply_j(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows() / 2;
    DMatrix::from_fn(2 * n, m.ncols(), |i, c| if i < n { -m[(n + i, c)] } else { m[(i - n, c)] })
}

/// A frame path that evaluates arbitrary parameters by transporting the
/// nearest stored sample in the stable direction of integration.
pub struct FlowPath<'a> {
    family: HamiltonianFamily<'a>,
    samples: FramePath,
    opts: FrameOptions,
}

impl<'a> FlowPath<'a> {
    pub fn new(family: HamiltonianFamily<'a>, samples: FramePath, opts: FrameOptions) -> Self {
        Self { family, samples, opts }
    }

    pub fn samples(&self) -> &FramePath {
        &self.samples
    }

    pub fn family(&self) -> &HamiltonianFamily<'a> {
        &self.family
    }
}

impl LagrangianPath for FlowPath<'_> {
    fn domain(&self) -> (f64, f64) {
        let g = &self.samples.grid;
        (g[0], g[g.len() - 1])
    }

    fn frame_at(&self, t: f64) -> Result<LagrangianFrame> {
        let g = &self.samples.grid;
        let idx = match g.binary_search_by(|p| p.total_cmp(&t)) {
            Ok(i) => return Ok(self.samples.frames[i].clone()),
            Err(i) => i,
        };
        match self.samples.direction {
            Direction::Unstable => {
                if idx == 0 {
                    return Err(Error::param("tau", format!("{t} lies left of the sampled range")));
                }
                self.family.propagate(&self.samples.frames[idx - 1], g[idx - 1], t, &self.opts)
            }
            Direction::Stable => {
                if idx == g.len() {
                    return Err(Error::param("tau", format!("{t} lies right of the sampled range")));
                }
                self.family.propagate(&self.samples.frames[idx], g[idx], t, &self.opts)
            }
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_scalar_bistable;
    use crate::symplectic::frame_sines;

    fn scalar_profile(x: f64, h: f64) -> PulseProfile {
        let m = (2.0 * x / h).round() as usize;
        let grid: Vec<f64> = (0..=m).map(|k| -x + h * k as f64).collect();
        let w = DMatrix::from_fn(grid.len(), 1, |i, _| 1.5 / (grid[i] / 2.0).cosh().powi(2));
        PulseProfile::from_values(grid, w, 1.0).unwrap()
    }

    #[test]
    fn scalar_asymptotics() {
        let model = build_scalar_bistable();
        let prof = scalar_profile(20.0, 0.01);
        let fam = HamiltonianFamily::new(&model, &prof, 0.0).unwrap();
        let a = fam.a_infinity();
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]));
        let sp = fam.asymptotic_split().unwrap();
        assert!((sp.spectral_gap - 1.0).abs() < 1e-12);
        let s = 0.5f64.sqrt();
        let plus = LagrangianFrame::new(DMatrix::from_column_slice(2, 1, &[s, s])).unwrap();
        let minus = LagrangianFrame::new(DMatrix::from_column_slice(2, 1, &[s, -s])).unwrap();
        assert!(frame_sines(&sp.v_plus, &plus)[0] < 1e-12);
        assert!(frame_sines(&sp.v_minus, &minus)[0] < 1e-12);
    }

    #[test]
    fn epsilon_shift() {
        let model = build_scalar_bistable();
        let prof = scalar_profile(20.0, 0.01);
        let f0 = HamiltonianFamily::new(&model, &prof, 0.3).unwrap();
        let f1 = f0.with_epsilon(0.2, 0.5).unwrap();
        let diff = f1.assemble_a(0.7) - f0.assemble_a(0.7);
        assert!((diff - DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -0.2])).amax() < 1e-14);
        assert!(f0.with_epsilon(0.6, 0.5).is_err());
        assert!(HamiltonianFamily::new(&model, &prof, -1.0).is_err());
    }

    #[test]
    fn scalar_translation_mode_and_eigenvalue() {
        let model = build_scalar_bistable();
        let prof = scalar_profile(20.0, 0.01);
        let opts = FrameOptions::default();
        let fam = HamiltonianFamily::new(&model, &prof, 0.0).unwrap();
        assert!(fam.evans_gap(&opts).unwrap() < 1e-6);
        let ground = HamiltonianFamily::new(&model, &prof, 1.25).unwrap();
        assert!(ground.evans_gap(&opts).unwrap() < 1e-6);
        let off = HamiltonianFamily::new(&model, &prof, 0.6).unwrap();
        assert!(off.evans_gap(&opts).unwrap() > 1e-3);
    }
}
