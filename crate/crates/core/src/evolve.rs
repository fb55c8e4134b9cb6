//! Time integration of `M w_t = D w_xx + Q grad V(w)` on a bounded interval
//! with homogeneous Neumann conditions, used to corroborate linear verdicts.
//!
//! The scheme is Crank-Nicolson for diffusion and second-order
//! Adams-Bashforth for the reaction (CNAB2); the first step uses forward Euler
//! for the reaction.

use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SkewGradientModel;
use crate::pulse::PulseProfile;
use crate::sparse::{SparseLu, TripletBuilder};

/// Field norm above which a run is declared blown up.
pub const BLOW_UP: f64 = 1e6;

/// Values of all components on a uniform grid; row `i` is the state at
/// `grid[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Vec<f64>,
    pub values: DMatrix<f64>,
}

impl Field {
    pub fn new(grid: Vec<f64>, values: DMatrix<f64>) -> Result<Self> {
        if grid.len() < 3 {
            return Err(Error::param("grid", "needs at least three points"));
        }
        if values.nrows() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: values.nrows() });
        }
        let h = grid[1] - grid[0];
        let uniform = grid.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs().max(1.0));
        if !(h > 0.0) || !uniform {
            return Err(Error::param("grid", "must be uniform and increasing"));
        }
        Ok(Self { grid, values })
    }

    pub fn from_profile(profile: &PulseProfile) -> Result<Self> {
        Self::new(profile.grid().to_vec(), profile.w().clone())
    }

    pub fn step(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    /// Discrete `L^2` norm.
    pub fn l2(&self) -> f64 {
        (self.step() * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Location of the maximum of `|component|`, refined by a parabola
    /// through the three nearest samples.
    pub fn peak(&self, component: usize) -> f64 {
        let col = self.values.column(component);
        let (i, _) = col
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .expect("non-empty field");
        if i == 0 || i + 1 == col.len() {
            return self.grid[i];
        }
        let (a, b, c) = (col[i - 1].abs(), col[i].abs(), col[i + 1].abs());
        let denom = a - 2.0 * b + c;
        let off = if denom.abs() > 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
        self.grid[i] + off.clamp(-0.5, 0.5) * self.step()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveOptions {
    pub dt: f64,
    pub t_final: f64,
    /// Spacing of stored snapshots.
    pub snapshot_every: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { dt: 0.01, t_final: 10.0, snapshot_every: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub rate: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub points: usize,
    /// Set when the log distance is not monotone or the fit is poor.
    pub low_confidence: bool,
}

#[derive(Debug, Clone)]
pub struct EvolutionRun {
    pub dt: f64,
    pub t_final: f64,
    /// Time actually reached; smaller than `t_final` after a blow-up.
    pub t_reached: f64,
    pub blew_up: bool,
    pub times: Vec<f64>,
    pub snapshots: Vec<Field>,
    /// Peak displacement of the first component between the first and last
    /// snapshot.
    pub drift: f64,
    pub fit: Option<GrowthFit>,
}

/// The JSON-facing part of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionSummary {
    pub dt: f64,
    pub t_final: f64,
    pub t_reached: f64,
    pub blew_up: bool,
    pub snapshots: usize,
    pub drift: f64,
    pub growth_rate: Option<f64>,
    pub r_squared: Option<f64>,
    pub low_confidence: Option<bool>,
}

impl EvolutionRun {
    pub fn growth_rate(&self) -> Option<f64> {
        self.fit.as_ref().map(|f| f.rate)
    }

    pub fn summary(&self) -> EvolutionSummary {
        EvolutionSummary {
            dt: self.dt,
            t_final: self.t_final,
            t_reached: self.t_reached,
            blew_up: self.blew_up,
            snapshots: self.snapshots.len(),
            drift: self.drift,
            growth_rate: self.fit.as_ref().map(|f| f.rate),
            r_squared: self.fit.as_ref().map(|f| f.r_squared),
            low_confidence: self.fit.as_ref().map(|f| f.low_confidence),
        }
    }

    pub fn last(&self) -> &Field {
        self.snapshots.last().expect("runs keep the initial snapshot")
    }

    /// One CSV per snapshot: `x,w1,...,wn`.
    pub fn write_snapshot_csv<W: Write>(&self, index: usize, mut out: W) -> Result<()> {
        let f = self.snapshots.get(index).ok_or_else(|| Error::param("index", "no such snapshot"))?;
        write!(out, "x")?;
        for k in 0..f.dim() {
            write!(out, ",w{}", k + 1)?;
        }
        writeln!(out)?;
        for (i, x) in f.grid.iter().enumerate() {
            write!(out, "{x:.10e}")?;
            for k in 0..f.dim() {
                write!(out, ",{:.15e}", f.values[(i, k)])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Neumann second difference with ghost-point reflection.
fn neumann_laplacian(points: usize, h: f64) -> TripletBuilder {
    let c = 1.0 / (h * h);
    let mut t = TripletBuilder::with_capacity(points, 3 * points);
    for i in 0..points {
        t.push(i, i, -2.0 * c);
        if i == 0 {
            t.push(i, 1, 2.0 * c);
        } else if i + 1 == points {
            t.push(i, i - 1, 2.0 * c);
        } else {
            t.push(i, i - 1, c);
            t.push(i, i + 1, c);
        }
    }
    t
}

fn reaction(model: &SkewGradientModel, w: &DMatrix<f64>) -> DMatrix<f64> {
    let m = model.rates();
    let mut out = DMatrix::zeros(w.nrows(), w.ncols());
    for i in 0..w.nrows() {
        let state: Vec<f64> = w.row(i).iter().copied().collect();
        let r = model.reaction(&state);
        for k in 0..w.ncols() {
            out[(i, k)] = r[k] / m[k];
        }
    }
    out
}

struct Stepper {
    lap: TripletBuilder,
    kappa: Vec<f64>,
    implicit: Vec<SparseLu>,
    dt: f64,
}

impl Stepper {
    fn new(model: &SkewGradientModel, points: usize, h: f64, dt: f64) -> Result<Self> {
        let lap = neumann_laplacian(points, h);
        let kappa: Vec<f64> = model.diffusion().iter().zip(model.rates().iter()).map(|(d, m)| d / m).collect();
        let implicit = kappa
            .iter()
            .map(|&k| {
                let mut a = TripletBuilder::with_capacity(points, 4 * points);
                for i in 0..points {
                    a.push(i, i, 1.0);
                }
                for (r, c, v) in lap.entries() {
                    a.push(r, c, -0.5 * dt * k * v);
                }
                a.factor()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { lap, kappa, implicit, dt })
    }

    fn step(&self, w: &mut DMatrix<f64>, r_now: &DMatrix<f64>, r_prev: Option<&DMatrix<f64>>) -> Result<()> {
        for k in 0..w.ncols() {
            let col: Vec<f64> = w.column(k).iter().copied().collect();
            let lw = self.lap.apply(&col);
            let rhs: Vec<f64> = (0..col.len())
                .map(|i| {
                    let explicit = match r_prev {
                        Some(p) => 1.5 * r_now[(i, k)] - 0.5 * p[(i, k)],
                        None => r_now[(i, k)],
                    };
                    col[i] + 0.5 * self.dt * self.kappa[k] * lw[i] + self.dt * explicit
                })
                .collect();
            let next = self.implicit[k].solve(&rhs)?;
            for (i, v) in next.into_iter().enumerate() {
                w[(i, k)] = v;
            }
        }
        Ok(())
    }
}

/// Integrates from `initial` up to `t_final`, storing snapshots every
/// `snapshot_every`. A blow-up truncates the run and sets `blew_up`.
pub fn evolve(model: &SkewGradientModel, initial: &Field, opts: &EvolveOptions) -> Result<EvolutionRun> {
    if initial.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: initial.dim() });
    }
    if !(opts.dt > 0.0) || !(opts.t_final > 0.0) || !(opts.snapshot_every > 0.0) {
        return Err(Error::param("dt/t_final/snapshot_every", "must be positive"));
    }
    let steps = (opts.t_final / opts.dt).round().max(1.0) as usize;
    let dt = opts.t_final / steps as f64;
    let every = ((opts.snapshot_every / dt).round() as usize).max(1);
    let stepper = Stepper::new(model, initial.grid.len(), initial.step(), dt)?;

    let mut w = initial.values.clone();
    let mut times = vec![0.0];
    let mut snapshots = vec![initial.clone()];
    let mut r_prev: Option<DMatrix<f64>> = None;
    let mut blew_up = false;
    let mut t_reached = 0.0;
    for s in 1..=steps {
        let r_now = reaction(model, &w);
        stepper.step(&mut w, &r_now, r_prev.as_ref())?;
        r_prev = Some(r_now);
        t_reached = s as f64 * dt;
        let bad = w.iter().any(|v| !v.is_finite() || v.abs() > BLOW_UP);
        if bad {
            blew_up = true;
            break;
        }
        if s % every == 0 || s == steps {
            times.push(t_reached);
            snapshots.push(Field { grid: initial.grid.clone(), values: w.clone() });
        }
    }
    let drift = snapshots.last().expect("initial snapshot").peak(0) - initial.peak(0);
    Ok(EvolutionRun { dt, t_final: opts.t_final, t_reached, blew_up, times, snapshots, drift, fit: None })
}

/// Newton iteration for a stationary state of the same spatial
/// discretisation used by [`evolve`], started from `guess`.
pub fn discrete_equilibrium(model: &SkewGradientModel, guess: &Field, tol: f64, max_iter: usize) -> Result<Field> {
    let n = model.dim();
    let points = guess.grid.len();
    let lap = neumann_laplacian(points, guess.step());
    let d = model.diffusion();
    let mut w = guess.values.clone();
    let residual = |w: &DMatrix<f64>| -> Vec<f64> {
        let mut f = vec![0.0; n * points];
        for k in 0..n {
            let col: Vec<f64> = w.column(k).iter().copied().collect();
            let lw = lap.apply(&col);
            for i in 0..points {
                f[i * n + k] = d[k] * lw[i];
            }
        }
        for i in 0..points {
            let state: Vec<f64> = w.row(i).iter().copied().collect();
            let r = model.reaction(&state);
            for k in 0..n {
                f[i * n + k] += r[k];
            }
        }
        f
    };
    for _ in 0..max_iter {
        let f = residual(&w);
        let norm = f.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if norm <= tol {
            return Ok(Field { grid: guess.grid.clone(), values: w });
        }
        let mut jac = TripletBuilder::with_capacity(n * points, n * points * (n + 3));
        for (r, c, v) in lap.entries() {
            for k in 0..n {
                jac.push(r * n + k, c * n + k, d[k] * v);
            }
        }
        for i in 0..points {
            let state: Vec<f64> = w.row(i).iter().copied().collect();
            let jr = model.reaction_jacobian(&state);
            for k in 0..n {
                for l in 0..n {
                    jac.push(i * n + k, i * n + l, jr[(k, l)]);
                }
            }
        }
        let neg: Vec<f64> = f.iter().map(|v| -v).collect();
        let delta = jac.solve(&neg)?;
        for i in 0..points {
            for k in 0..n {
                w[(i, k)] += delta[i * n + k];
            }
        }
    }
    let f = residual(&w);
    let norm = f.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if norm <= tol {
        Ok(Field { grid: guess.grid.clone(), values: w })
    } else {
        Err(Error::NewtonStagnation { iterations: max_iter, residual: norm })
    }
}

/// A smooth random perturbation: a few Gaussian bumps of random sign and
/// width in every component, scaled to max-norm `amplitude` and supported
/// where the reference field is not negligible.
pub fn smooth_perturbation<R: Rng>(reference: &Field, amplitude: f64, rng: &mut R) -> Field {
    let n = reference.dim();
    let peak = reference.peak(0);
    let spread = {
        let max = reference.max_abs().max(f64::MIN_POSITIVE);
        let col = reference.values.column(0);
        let inside: Vec<f64> = reference
            .grid
            .iter()
            .zip(col.iter())
            .filter(|(_, v)| v.abs() > 1e-3 * max)
            .map(|(x, _)| (x - peak).abs())
            .collect();
        inside.into_iter().fold(1.0, f64::max)
    };
    let mut values = DMatrix::<f64>::zeros(reference.grid.len(), n);
    for k in 0..n {
        for _ in 0..4 {
            let c = peak + rng.gen_range(-1.0..1.0) * spread;
            let width = rng.gen_range(0.3..1.0) * spread;
            let a = rng.gen_range(-1.0..1.0);
            for (i, x) in reference.grid.iter().enumerate() {
                values[(i, k)] += a * (-((x - c) / width).powi(2)).exp();
            }
        }
    }
    let max = values.iter().fold(0.0_f64, |m, v: &f64| m.max(v.abs())).max(f64::MIN_POSITIVE);
    values *= amplitude / max;
    Field { grid: reference.grid.clone(), values }
}

/// `reference + perturbation`.
pub fn perturbed(reference: &Field, perturbation: &Field) -> Field {
    Field { grid: reference.grid.clone(), values: &reference.values + &perturbation.values }
}

fn shifted_distance_sq(w: &Field, reference: &Field, shift: isize) -> f64 {
    let len = w.grid.len() as isize;
    let mut acc = 0.0;
    for i in 0..len {
        let j = (i - shift).clamp(0, len - 1) as usize;
        for k in 0..w.dim() {
            let e = w.values[(i as usize, k)] - reference.values[(j, k)];
            acc += e * e;
        }
    }
    acc * w.step()
}

/// `min_s |w - reference(. - s)|_2`, minimising over grid shifts and
/// interpolating the minimum by a parabola through the neighbouring shifts.
pub fn distance_mod_translation(w: &Field, reference: &Field) -> f64 {
    let max_shift = (w.grid.len() / 4) as isize;
    let mut best = (0isize, shifted_distance_sq(w, reference, 0));
    // Descend from zero shift; the distance is unimodal near the pulse.
    for dir in [-1isize, 1] {
        let mut s = best.0 + dir;
        while s.abs() <= max_shift {
            let v = shifted_distance_sq(w, reference, s);
            if v < best.1 {
                best = (s, v);
                s += dir;
            } else {
                break;
            }
        }
    }
    let (s, c) = best;
    let a = shifted_distance_sq(w, reference, s - 1);
    let b = shifted_distance_sq(w, reference, s + 1);
    let curv = a - 2.0 * c + b;
    let min = if curv > 0.0 { c - (b - a).powi(2) / (8.0 * curv) } else { c };
    min.max(0.0).sqrt()
}

/// Least-squares slope of `log d(t)` against `t`. Without a window the fit
/// uses snapshots after the first tenth of the run whose distance is below
/// one percent of the reference norm (linear regime).
pub fn growth_rate_fit(run: &EvolutionRun, reference: &Field, window: Option<(f64, f64)>) -> Result<GrowthFit> {
    let dist: Vec<(f64, f64)> = run
        .times
        .iter()
        .zip(&run.snapshots)
        .map(|(&t, f)| (t, distance_mod_translation(f, reference)))
        .collect();
    growth_rate_fit_distances(&dist, reference.l2(), run.t_reached, window)
}

/// As [`growth_rate_fit`], from precomputed `(t, distance)` pairs.
pub fn growth_rate_fit_distances(
    dist: &[(f64, f64)],
    reference_norm: f64,
    t_end: f64,
    window: Option<(f64, f64)>,
) -> Result<GrowthFit> {
    let cap = 1e-2 * reference_norm;
    let pts: Vec<(f64, f64)> = match window {
        Some((a, b)) => dist.iter().copied().filter(|&(t, d)| t >= a && t <= b && d > 0.0).collect(),
        None => {
            let t0 = 0.1 * t_end;
            dist.iter()
                .copied()
                .filter(|&(t, _)| t >= t0)
                .take_while(|&(_, d)| d <= cap)
                .filter(|&(_, d)| d > 0.0)
                .collect()
        }
    };
    if pts.len() < 10 {
        return Err(Error::param("window", format!("{} snapshots in the fit window, need 10", pts.len())));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let rate = sxy / sxx;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - my - rate * (x - mx)).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    let diffs: Vec<f64> = ys.windows(2).map(|w| w[1] - w[0]).collect();
    let noise = 1e-9;
    let monotone = diffs.iter().all(|&d| d >= -noise) || diffs.iter().all(|&d| d <= noise);
    Ok(GrowthFit {
        rate,
        r_squared,
        window: (xs[0], *xs.last().expect("non-empty")),
        points: pts.len(),
        low_confidence: !monotone || r_squared < 0.99,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_scalar_bistable;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn synthetic_exponential() {
        let d: Vec<(f64, f64)> = (0..50).map(|i| (0.1 * i as f64, 1e-6 * (0.05 * i as f64).exp())).collect();
        let fit = growth_rate_fit_distances(&d, 1.0, 4.9, Some((0.0, 5.0))).unwrap();
        assert!((fit.rate - 0.5).abs() < 1e-10);
        assert!(fit.r_squared > 0.999);
        assert!(!fit.low_confidence);

        let d: Vec<(f64, f64)> = (0..50).map(|i| (0.1 * i as f64, (-0.1 * i as f64).exp())).collect();
        let fit = growth_rate_fit_distances(&d, 1.0, 4.9, Some((0.0, 5.0))).unwrap();
        assert!(fit.rate < 0.0);
    }

    #[test]
    fn oscillating_distance_is_flagged() {
        let d: Vec<(f64, f64)> =
            (0..50).map(|i| (0.1 * i as f64, (0.3 * i as f64).cos().abs() + 0.1)).collect();
        let fit = growth_rate_fit_distances(&d, 1.0, 4.9, Some((0.0, 5.0))).unwrap();
        assert!(fit.low_confidence);
    }

    #[test]
    fn too_few_points_rejected() {
        let d: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 1.0)).collect();
        assert!(growth_rate_fit_distances(&d, 1.0, 5.0, None).is_err());
    }

    #[test]
    fn rest_state_perturbation_decays() {
        let model = build_scalar_bistable();
        let grid: Vec<f64> = (0..=400).map(|i| -20.0 + 0.1 * i as f64).collect();
        let zero = Field::new(grid.clone(), DMatrix::from_fn(401, 1, |i, _| (-(grid[i] / 3.0).powi(2)).exp()))
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = smooth_perturbation(&zero, 1e-3, &mut rng);
        let run = evolve(&model, &p, &EvolveOptions { dt: 0.02, t_final: 5.0, snapshot_every: 0.1 }).unwrap();
        let norms: Vec<f64> = run.snapshots.iter().map(|f| f.l2()).collect();
        assert!(norms.windows(2).skip(5).all(|w| w[1] <= w[0]));
        assert!(norms.last().unwrap() < &(0.05 * norms[0]));
    }

    #[test]
    fn shift_is_modded_out() {
        let grid: Vec<f64> = (0..=600).map(|i| -15.0 + 0.05 * i as f64).collect();
        let f = |s: f64| {
            Field::new(grid.clone(), DMatrix::from_fn(601, 1, |i, _| 1.5 / (0.5 * (grid[i] - s)).cosh().powi(2)))
                .unwrap()
        };
        let d = distance_mod_translation(&f(0.13), &f(0.0));
        assert!(d < 5e-3, "{d}");
        let plain = ((&f(0.13).values - &f(0.0).values).norm_squared() * 0.05).sqrt();
        assert!(plain > 50.0 * d);
    }
}
