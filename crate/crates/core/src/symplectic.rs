//! Lagrangian Grassmannian toolkit on `(R^{2n}, omega)`.
//!
//! Conventions: coordinates are `(p_1..p_n, q_1..q_n)`,
//! `J = [[0, -I], [I, 0]]` and `omega(u, v) = <J u, v>`. With this choice a
//! Lagrangian plane moving under `z' = J A(t) z` has crossing form
//! `xi -> <A xi, xi>`.

use std::io::Write;

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    inertia, null_space, orthonormalize, principal_sines, singular_values, svd, sym, sym_eigenvalues, unitary_polar,
};

/// Bound on `max |Z^T J Z|` for frames handed out by this module.
pub const ISOTROPY_TOL: f64 = 1e-10;

/// Default threshold on principal sines for deciding intersections.
pub const DEFAULT_TOL: f64 = 1e-8;

pub fn j_matrix(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        j[(k, n + k)] = -1.0;
        j[(n + k, k)] = 1.0;
    }
    j
}

/// `J v` without forming `J`.
pub fn apply_j(v: &DVector<f64>) -> DVector<f64> {
    let n = v.len() / 2;
    DVector::from_fn(2 * n, |i, _| if i < n { -v[n + i] } else { v[i - n] })
}

fn apply_j_mat(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows() / 2;
    DMatrix::from_fn(2 * n, m.ncols(), |i, c| if i < n { -m[(n + i, c)] } else { m[(i - n, c)] })
}

/// `omega(u, v) = <J u, v>`.
pub fn symplectic_form(u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch { expected: u.len(), got: v.len() });
    }
    if !u.len().is_multiple_of(2) {
        return Err(Error::param("u", "length must be even"));
    }
    Ok(apply_j(u).dot(v))
}

/// Gram matrix `omega(a_i, b_j)`.
fn omega_gram(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    apply_j_mat(a).transpose() * b
}

/// `max |Z^T J Z|` for a `2n x k` matrix.
pub fn isotropy_defect(z: &DMatrix<f64>) -> f64 {
    omega_gram(z, z).amax()
}

pub fn is_lagrangian(z: &DMatrix<f64>, tol: f64) -> bool {
    let n2 = z.nrows();
    if !n2.is_multiple_of(2) || z.ncols() != n2 / 2 {
        return false;
    }
    let q = orthonormalize(z);
    let sv = singular_values(z);
    let smax = sv[0];
    smax > 0.0 && sv[sv.len() - 1] > 1e-12 * smax && isotropy_defect(&q) <= tol
}

/// Orthonormal basis of a Lagrangian subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianFrame {
    n: usize,
    columns: DMatrix<f64>,
}

impl LagrangianFrame {
    /// Orthonormalises `columns` and checks that the span is Lagrangian.
    pub fn new(columns: DMatrix<f64>) -> Result<Self> {
        Self::with_tolerance(columns, ISOTROPY_TOL)
    }

    /// Like [`LagrangianFrame::new`] with an explicit isotropy tolerance.
    pub fn with_tolerance(columns: DMatrix<f64>, tol: f64) -> Result<Self> {
        let (rows, cols) = columns.shape();
        if rows % 2 != 0 || cols != rows / 2 || cols == 0 {
            return Err(Error::param("frame", format!("expected a 2n x n matrix, got {rows} x {cols}")));
        }
        let sv = singular_values(&columns);
        if !(sv[sv.len() - 1] > 1e-12 * sv[0]) {
            return Err(Error::param("frame", "columns are rank deficient"));
        }
        let q = orthonormalize(&columns);
        let defect = isotropy_defect(&q);
        if !(defect <= tol) {
            return Err(Error::param("frame", format!("span is not Lagrangian (isotropy {defect:.3e})")));
        }
        Ok(Self { n: cols, columns: q })
    }

    /// Nearest Lagrangian to the span of `columns`: the orthonormal frame
    /// `[X; Y]` is read as the complex matrix `X + iY`, whose unitary polar
    /// factor defines the corrected frame. Returns the frame and the isotropy
    /// defect that was removed.
    pub fn project(columns: &DMatrix<f64>) -> Result<(Self, f64)> {
        let (rows, cols) = columns.shape();
        if rows % 2 != 0 || cols != rows / 2 || cols == 0 {
            return Err(Error::param("frame", format!("expected a 2n x n matrix, got {rows} x {cols}")));
        }
        let n = cols;
        let q = orthonormalize(columns);
        let defect = isotropy_defect(&q);
        if defect <= 1e-15 {
            return Ok((Self { n, columns: q }, defect));
        }
        let u = DMatrix::from_fn(n, n, |i, j| Complex::new(q[(i, j)], q[(n + i, j)]));
        let w = unitary_polar(&u);
        let z = DMatrix::from_fn(2 * n, n, |i, j| if i < n { w[(i, j)].re } else { w[(i - n, j)].im });
        Ok((Self { n, columns: orthonormalize(&z) }, defect))
    }

    pub fn dim_n(&self) -> usize {
        self.n
    }

    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn isotropy(&self) -> f64 {
        isotropy_defect(&self.columns)
    }

    /// Orthogonal projector onto the span.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.columns * self.columns.transpose()
    }

    /// Re-orthonormalises the basis (the span is unchanged).
    pub fn normalize(&mut self) {
        self.columns = orthonormalize(&self.columns);
    }

    /// Image under a linear map; for symplectic `s` the result is Lagrangian.
    pub fn transform(&self, s: &DMatrix<f64>) -> Result<Self> {
        Self::new(s * &self.columns)
    }

    /// `span{(p, 0)}`.
    pub fn horizontal(n: usize) -> Self {
        let mut z = DMatrix::zeros(2 * n, n);
        for k in 0..n {
            z[(k, k)] = 1.0;
        }
        Self { n, columns: z }
    }

    /// `span{(0, q)}`.
    pub fn vertical(n: usize) -> Self {
        let mut z = DMatrix::zeros(2 * n, n);
        for k in 0..n {
            z[(n + k, k)] = 1.0;
        }
        Self { n, columns: z }
    }

    /// Graph `{(x, S x)}` of a symmetric matrix.
    pub fn graph(s: &DMatrix<f64>) -> Result<Self> {
        let n = s.nrows();
        let mut z = DMatrix::zeros(2 * n, n);
        z.view_mut((0, 0), (n, n)).fill_with_identity();
        z.view_mut((n, 0), (n, n)).copy_from(&sym(s));
        Self::new(z)
    }

    /// A random Lagrangian: the graph of a random symmetric matrix rotated by
    /// a random element of `U(n)`.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let s = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-2.0..2.0));
        let g = Self::graph(&s).expect("graphs are Lagrangian");
        let m = random_symplectic_orthogonal(n, rng);
        Self::project(&(m * g.columns)).expect("valid shape").0
    }

    /// Symplectic basis completion: `[Z, J Z]` is orthogonal and symplectic.
    pub fn complement(&self) -> DMatrix<f64> {
        apply_j_mat(&self.columns)
    }
}

/// Real form `[[X, -Y], [Y, X]]` of a complex matrix `X + iY`.
pub fn realify(u: &DMatrix<Complex<f64>>) -> DMatrix<f64> {
    let n = u.nrows();
    DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let z = u[(i % n, j % n)];
        match (i / n, j / n) {
            (0, 0) | (1, 1) => z.re,
            (0, 1) => -z.im,
            _ => z.im,
        }
    })
}

/// Random matrix `[[X, -Y], [Y, X]]` with `X + iY` unitary; it is both
/// orthogonal and symplectic.
pub fn random_symplectic_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    realify(&g.qr().q())
}

/// Orthogonal symplectic matrix `exp(iH)` with `H` Hermitian of Frobenius
/// norm `scale`.
pub fn symplectic_orthogonal_nudge<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let h = (&g + g.adjoint()) * Complex::new(0.5, 0.0);
    let norm: f64 = h.norm();
    let h = &h * Complex::new(scale / norm.max(1e-300), 0.0);
    realify(&(h * Complex::new(0.0, 1.0)).exp())
}

/// Random symplectic matrix `exp(J S)` with `S` symmetric of norm `scale`.
pub fn random_symplectic<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> DMatrix<f64> {
    let s = sym(&DMatrix::from_fn(2 * n, 2 * n, |_, _| rng.gen_range(-1.0..1.0)));
    let s = &s * (scale / s.norm().max(1e-300));
    (j_matrix(n) * s).exp()
}

/// The reference plane `{(p, q) : p in V+(Q), q in V-(Q)}` for
/// `Q = diag(I_j, -I_{n-j})`.
pub fn lambda_r(n: usize, j: usize) -> Result<LagrangianFrame> {
    if n == 0 || j == 0 || j > n {
        return Err(Error::param("j", format!("need 1 <= j <= n, got j = {j}, n = {n}")));
    }
    let mut z = DMatrix::zeros(2 * n, n);
    for k in 0..n {
        if k < j {
            z[(k, k)] = 1.0;
        } else {
            z[(n + k, k)] = 1.0;
        }
    }
    Ok(LagrangianFrame { n, columns: z })
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0 && tol < 0.1) {
        return Err(Error::param("tol", format!("must lie in (0, 0.1), got {tol}")));
    }
    Ok(())
}

fn check_same_dim(a: &LagrangianFrame, b: &LagrangianFrame) -> Result<()> {
    if a.n != b.n {
        return Err(Error::DimensionMismatch { expected: a.n, got: b.n });
    }
    Ok(())
}

/// Number of principal angles between the two planes with sine below `tol`.
pub fn intersection_dim(l1: &LagrangianFrame, l2: &LagrangianFrame, tol: f64) -> Result<usize> {
    check_tol(tol)?;
    check_same_dim(l1, l2)?;
    Ok(principal_sines(&l1.columns, &l2.columns).iter().filter(|&&s| s < tol).count())
}

/// Sines of the principal angles, ascending.
pub fn frame_sines(l1: &LagrangianFrame, l2: &LagrangianFrame) -> Vec<f64> {
    principal_sines(&l1.columns, &l2.columns)
}

/// Orthonormal vectors of `l1` whose principal sine against `l2` is below
/// `tol` (a basis of the numerical intersection).
pub fn intersection_basis(l1: &LagrangianFrame, l2: &LagrangianFrame, tol: f64) -> DMatrix<f64> {
    let a = &l1.columns;
    let b = &l2.columns;
    let resid = a - b * (b.transpose() * a);
    let dec = svd(&resid);
    let cols: Vec<DVector<f64>> = dec
        .s
        .iter()
        .enumerate()
        .filter(|(_, &s)| s < tol)
        .map(|(i, _)| a * dec.v.column(i))
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(a.nrows(), 0)
    } else {
        orthonormalize(&DMatrix::from_columns(&cols))
    }
}

/// A located crossing and the spectrum of its crossing form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingRecord {
    pub location: f64,
    pub intersection_dim: usize,
    pub form_eigenvalues: Vec<f64>,
    pub signature: i64,
}

impl CrossingRecord {
    /// Builds a record from a symmetric form matrix; eigenvalues with modulus
    /// below `zero_tol` count as zero.
    pub fn from_form(location: f64, form: &DMatrix<f64>, zero_tol: f64) -> Self {
        let eig = sym_eigenvalues(form);
        let (pos, neg) = inertia(&eig, zero_tol);
        Self {
            location,
            intersection_dim: form.nrows(),
            form_eigenvalues: eig,
            signature: pos as i64 - neg as i64,
        }
    }

    pub fn positive(&self, zero_tol: f64) -> usize {
        inertia(&self.form_eigenvalues, zero_tol).0
    }

    pub fn negative(&self, zero_tol: f64) -> usize {
        inertia(&self.form_eigenvalues, zero_tol).1
    }

    pub fn at(mut self, location: f64) -> Self {
        self.location = location;
        self
    }
}

/// Writes crossings as CSV: `location,dim,signature,form_eigenvalues` with
/// the eigenvalues separated by `;`.
pub fn write_crossings_csv<W: Write>(records: &[CrossingRecord], mut out: W) -> Result<()> {
    writeln!(out, "location,dim,signature,form_eigenvalues")?;
    for r in records {
        let eig: Vec<String> = r.form_eigenvalues.iter().map(|e| format!("{e:e}")).collect();
        writeln!(out, "{:e},{},{},{}", r.location, r.intersection_dim, r.signature, eig.join(";"))?;
    }
    Ok(())
}

fn form_zero_tol(m: &DMatrix<f64>) -> f64 {
    1e-10 * m.amax().max(1.0)
}

/// Crossing form of `z' = J A z` at a crossing of the moving plane `frame`
/// with the fixed plane `v`: `xi -> <A xi, xi>` on the intersection.
pub fn crossing_form_flow(
    a: &DMatrix<f64>,
    frame: &LagrangianFrame,
    v: &LagrangianFrame,
    tol: f64,
) -> Result<CrossingRecord> {
    check_tol(tol)?;
    check_same_dim(frame, v)?;
    if a.shape() != (2 * frame.n, 2 * frame.n) {
        return Err(Error::DimensionMismatch { expected: 2 * frame.n, got: a.nrows() });
    }
    let basis = intersection_basis(frame, v, tol);
    if basis.ncols() == 0 {
        let s = frame_sines(frame, v);
        return Err(Error::NoCrossing(s[0]));
    }
    let form = sym(&(basis.transpose() * sym(a) * &basis));
    Ok(CrossingRecord::from_form(0.0, &form, form_zero_tol(a)))
}

/// A continuous family of Lagrangian planes over a closed interval.
pub trait LagrangianPath {
    fn domain(&self) -> (f64, f64);
    fn frame_at(&self, t: f64) -> Result<LagrangianFrame>;
}

/// A path that does not move.
#[derive(Debug, Clone)]
pub struct ConstantPath {
    pub frame: LagrangianFrame,
    pub domain: (f64, f64),
}

impl LagrangianPath for ConstantPath {
    fn domain(&self) -> (f64, f64) {
        self.domain
    }

    fn frame_at(&self, _t: f64) -> Result<LagrangianFrame> {
        Ok(self.frame.clone())
    }
}

/// A path given by a closure.
pub struct FnPath<F> {
    domain: (f64, f64),
    f: F,
}

impl<F> FnPath<F>
where
    F: Fn(f64) -> Result<LagrangianFrame>,
{
    pub fn new(domain: (f64, f64), f: F) -> Self {
        Self { domain, f }
    }
}

impl<F> LagrangianPath for FnPath<F>
where
    F: Fn(f64) -> Result<LagrangianFrame>,
{
    fn domain(&self) -> (f64, f64) {
        self.domain
    }

    fn frame_at(&self, t: f64) -> Result<LagrangianFrame> {
        (self.f)(t)
    }
}

/// Piecewise path through sampled frames. Between samples the plane moves
/// along the straight line of the graph chart `Z0 + t J Z0 S`, which stays
/// Lagrangian.
#[derive(Debug, Clone)]
pub struct SampledPath {
    params: Vec<f64>,
    frames: Vec<LagrangianFrame>,
    charts: Vec<DMatrix<f64>>,
}

impl SampledPath {
    pub fn new(params: Vec<f64>, frames: Vec<LagrangianFrame>) -> Result<Self> {
        if params.len() != frames.len() || params.len() < 2 {
            return Err(Error::param("path", "need at least two samples, one per parameter"));
        }
        if params.windows(2).any(|p| !(p[1] > p[0])) {
            return Err(Error::param("path", "parameters must be strictly increasing"));
        }
        let mut charts = Vec::with_capacity(frames.len() - 1);
        for w in frames.windows(2) {
            check_same_dim(&w[0], &w[1])?;
            let z0 = &w[0].columns;
            let a = z0.transpose() * &w[1].columns;
            let b = w[0].complement().transpose() * &w[1].columns;
            let ai = a.try_inverse().ok_or(Error::param("path", "consecutive samples too far apart"))?;
            charts.push(sym(&(b * ai)));
        }
        Ok(Self { params, frames, charts })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn frames(&self) -> &[LagrangianFrame] {
        &self.frames
    }

    /// Replaces one sample (used for perturbation tests).
    pub fn with_sample(&self, k: usize, frame: LagrangianFrame) -> Result<Self> {
        let mut frames = self.frames.clone();
        frames[k] = frame;
        Self::new(self.params.clone(), frames)
    }
}

impl LagrangianPath for SampledPath {
    fn domain(&self) -> (f64, f64) {
        (self.params[0], self.params[self.params.len() - 1])
    }

    fn frame_at(&self, t: f64) -> Result<LagrangianFrame> {
        let m = self.params.len();
        let t = t.clamp(self.params[0], self.params[m - 1]);
        let i = match self.params.binary_search_by(|p| p.total_cmp(&t)) {
            Ok(i) => return Ok(self.frames[i].clone()),
            Err(i) => i.saturating_sub(1).min(m - 2),
        };
        let s = (t - self.params[i]) / (self.params[i + 1] - self.params[i]);
        let z0 = &self.frames[i].columns;
        let z = z0 + self.frames[i].complement() * (&self.charts[i] * s);
        Ok(LagrangianFrame::project(&z)?.0)
    }
}

/// Options for locating crossings along a pair of paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrossingScan {
    /// Principal-sine threshold for an intersection.
    pub tol: f64,
    /// Width to which crossing locations are refined.
    pub refine_width: f64,
    /// Finite-difference step for crossing forms; `None` picks `1e-5` times
    /// the interval length.
    pub fd_step: Option<f64>,
    /// Interior form eigenvalues below this (relative) size make the
    /// crossing irregular.
    pub form_tol: f64,
    /// Principal sines below this at a located crossing are grouped into one
    /// cluster whose form is evaluated jointly.
    pub cluster_tol: f64,
    /// Points used to subsample each bracket around a minimum.
    pub subsamples: usize,
    /// Geometric samples per decade of distance used to look for further
    /// crossings next to each located one; 0 disables the search.
    pub neighbourhood_per_decade: usize,
}

impl Default for CrossingScan {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, refine_width: 1e-10, fd_step: None, form_tol: 1e-6, cluster_tol: 0.0, subsamples: 16, neighbourhood_per_decade: 0 }
    }
}

/// Smallest principal sine between two paths at `t`.
fn min_sine(l1: &dyn LagrangianPath, l2: &dyn LagrangianPath, t: f64) -> Result<f64> {
    Ok(frame_sines(&l1.frame_at(t)?, &l2.frame_at(t)?)[0])
}

/// Golden-section minimisation of `f` on `[a, b]`.
pub(crate) fn golden_min<F>(mut a: f64, mut b: f64, width: f64, mut f: F) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    let mut iters = 0;
    while (b - a) > width && iters < 200 {
        iters += 1;
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    let (fa, fb) = (f(a)?, f(b)?);
    let mut best = if fc <= fd { (c, fc) } else { (d, fd) };
    if fa < best.1 {
        best = (a, fa);
    }
    if fb < best.1 {
        best = (b, fb);
    }
    Ok(best)
}

/// Finds parameters in `grid` where the two paths intersect, refining each
/// local minimum of the smallest principal sine. Returns the sorted
/// locations and the sines there.
pub fn locate_crossings(
    l1: &dyn LagrangianPath,
    l2: &dyn LagrangianPath,
    grid: &[f64],
    opts: &CrossingScan,
) -> Result<Vec<(f64, f64)>> {
    let f = |t: f64| min_sine(l1, l2, t);
    let vals: Vec<f64> = grid.iter().map(|&t| f(t)).collect::<Result<_>>()?;
    let m = grid.len();
    let (a, b) = (grid[0], grid[m - 1]);
    let mut found: Vec<(f64, f64)> = Vec::new();
    let mut brackets = Vec::new();
    for i in 0..m {
        let left_ok = i == 0 || vals[i] <= vals[i - 1];
        let right_ok = i + 1 == m || vals[i] <= vals[i + 1];
        if left_ok && right_ok {
            brackets.push((grid[i.saturating_sub(1)], grid[(i + 1).min(m - 1)]));
        }
    }
    let sub = opts.subsamples.max(4);
    let accept = |t: f64, found: &mut Vec<(f64, f64)>| -> Result<()> {
        let (mut t, mut s) = (t, f(t)?);
        if (t - a).abs() <= 10.0 * opts.refine_width {
            t = a;
            s = f(a)?;
        } else if (b - t).abs() <= 10.0 * opts.refine_width {
            t = b;
            s = f(b)?;
        }
        if s < opts.tol && !found.iter().any(|&(u, _)| (u - t).abs() <= 100.0 * opts.refine_width) {
            found.push((t, s));
        }
        Ok(())
    };
    for &(lo, hi) in &brackets {
        // Subsample the bracket so that two minima inside one grid cell are
        // still seen separately.
        let ts: Vec<f64> = (0..=sub).map(|k| lo + (hi - lo) * k as f64 / sub as f64).collect();
        let vs: Vec<f64> = ts.iter().map(|&t| f(t)).collect::<Result<_>>()?;
        for k in 0..=sub {
            let left_ok = k == 0 || vs[k] <= vs[k - 1];
            let right_ok = k == sub || vs[k] <= vs[k + 1];
            if !(left_ok && right_ok) {
                continue;
            }
            let (x0, x1) = (ts[k.saturating_sub(1)], ts[(k + 1).min(sub)]);
            let (t, s) = golden_min(x0, x1, opts.refine_width, f)?;
            if s < opts.tol {
                accept(t, &mut found)?;
            }
        }
    }
    if opts.neighbourhood_per_decade > 0 {
        let first: Vec<f64> = found.iter().map(|p| p.0).collect();
        let reach = brackets.iter().map(|(lo, hi)| hi - lo).fold(0.0, f64::max);
        for t0 in first {
            for (x0, x1) in neighbourhood_minima(&f, t0, reach, (a, b), opts)? {
                let (t, s) = golden_min(x0, x1, opts.refine_width, f)?;
                if s < opts.tol {
                    accept(t, &mut found)?;
                }
            }
        }
    }
    found.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(found)
}

/// Brackets of local minima of `f` on geometric offsets from a crossing at
/// `t0`, between `1e3 * refine_width` and `reach` on either side.
fn neighbourhood_minima<F>(f: &F, t0: f64, reach: f64, domain: (f64, f64), opts: &CrossingScan) -> Result<Vec<(f64, f64)>>
where
    F: Fn(f64) -> Result<f64>,
{
    let inner = 1e3 * opts.refine_width;
    if !(reach > inner) {
        return Ok(Vec::new());
    }
    let decades = (reach / inner).log10();
    let count = (decades * opts.neighbourhood_per_decade as f64).ceil() as usize;
    let mut out = Vec::new();
    for dir in [-1.0, 1.0] {
        let ts: Vec<f64> = (0..=count)
            .map(|k| t0 + dir * inner * (reach / inner).powf(k as f64 / count as f64))
            .filter(|&t| t >= domain.0 && t <= domain.1)
            .collect();
        if ts.len() < 3 {
            continue;
        }
        let vs: Vec<f64> = ts.iter().map(|&t| f(t)).collect::<Result<_>>()?;
        for k in 1..ts.len() - 1 {
            if vs[k] <= vs[k - 1] && vs[k] <= vs[k + 1] {
                let (p, q) = (ts[k - 1], ts[k + 1]);
                out.push((p.min(q), p.max(q)));
            }
        }
    }
    Ok(out)
}

/// Derivative of the orthogonal projector onto `path(t)` by finite
/// differences (central inside the domain, one-sided at the ends).
fn projector_rate(path: &dyn LagrangianPath, t: f64, h: f64) -> Result<DMatrix<f64>> {
    let (a, b) = path.domain();
    let p = |s: f64| -> Result<DMatrix<f64>> { Ok(path.frame_at(s)?.projector()) };
    if t - h >= a && t + h <= b {
        Ok((p(t + h)? - p(t - h)?) / (2.0 * h))
    } else if t + 2.0 * h <= b {
        Ok((p(t)? * -3.0 + p(t + h)? * 4.0 - p(t + 2.0 * h)?) / (2.0 * h))
    } else {
        Ok((p(t)? * 3.0 - p(t - h)? * 4.0 + p(t - 2.0 * h)?) / (2.0 * h))
    }
}

/// Matrix of the Robbin-Salamon form `v -> omega(v, P'(t) v)` of a path on
/// the columns of `basis`.
pub fn path_form(path: &dyn LagrangianPath, t: f64, basis: &DMatrix<f64>, h: f64) -> Result<DMatrix<f64>> {
    let pdot = projector_rate(path, t, h)?;
    Ok(sym(&omega_gram(basis, &(pdot * basis))))
}

/// Crossing form of the pair `(l1, l2)` at `t` on `basis`:
/// `Q_{l2} - Q_{l1}`.
pub fn pair_form(
    l1: &dyn LagrangianPath,
    l2: &dyn LagrangianPath,
    t: f64,
    basis: &DMatrix<f64>,
    h: f64,
) -> Result<DMatrix<f64>> {
    Ok(path_form(l2, t, basis, h)? - path_form(l1, t, basis, h)?)
}

/// Maslov index `i_CLM(l1, l2)` over the sampled parameter grid: co-index of
/// the crossing form at the left end, signatures inside, minus the index at
/// the right end.
pub fn maslov_index_pair(
    l1: &dyn LagrangianPath,
    l2: &dyn LagrangianPath,
    grid: &[f64],
    opts: &CrossingScan,
) -> Result<(i64, Vec<CrossingRecord>)> {
    check_tol(opts.tol)?;
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::param("grid", "need at least two strictly increasing samples"));
    }
    let (a, b) = (grid[0], grid[grid.len() - 1]);
    let h = opts.fd_step.unwrap_or(1e-5 * (b - a));
    let mut total = 0;
    let mut records = Vec::new();
    for (t, _) in locate_crossings(l1, l2, grid, opts)? {
        let f1 = l1.frame_at(t)?;
        let f2 = l2.frame_at(t)?;
        let cut = opts.tol.max(opts.cluster_tol);
        let basis = intersection_basis(&f2, &f1, cut);
        if basis.ncols() == 0 {
            continue;
        }
        let form = pair_form(l1, l2, t, &basis, h)?;
        let scale = form.amax().max(1e-300);
        let rec = CrossingRecord::from_form(t, &form, opts.form_tol * scale);
        let endpoint = t == a || t == b;
        if !endpoint {
            if let Some(e) = rec.form_eigenvalues.iter().find(|e| e.abs() <= opts.form_tol * scale) {
                return Err(Error::IrregularCrossing { location: t, eigenvalue: *e });
            }
        }
        let (pos, neg) = (rec.positive(opts.form_tol * scale), rec.negative(opts.form_tol * scale));
        total += if t == a {
            pos as i64
        } else if t == b {
            -(neg as i64)
        } else {
            rec.signature
        };
        records.push(rec);
    }
    Ok((total, records))
}

/// The form `Q(alpha, beta; delta)` on `alpha ∩ (beta + delta)`; returns an
/// orthonormal basis of the domain and the symmetric matrix of the form.
pub fn quadratic_form_q(
    alpha: &LagrangianFrame,
    beta: &LagrangianFrame,
    delta: &LagrangianFrame,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let dim = 2 * alpha.n;
    let bd = DMatrix::from_fn(dim, 2 * alpha.n, |i, j| {
        if j < alpha.n {
            beta.columns[(i, j)]
        } else {
            delta.columns[(i, j - alpha.n)]
        }
    });
    // alpha ∩ range(bd): vectors alpha c with (I - P_bd) alpha c = 0.
    let dec = svd(&bd);
    let u = dec.u.clone();
    let smax = dec.s[0];
    let rank_cols: Vec<DVector<f64>> = dec
        .s
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 1e-9 * smax.max(1.0))
        .map(|(i, _)| u.column(i).into_owned())
        .collect();
    let range = DMatrix::from_columns(&rank_cols);
    let resid = &alpha.columns - &range * (range.transpose() * &alpha.columns);
    let coeffs = null_space(&resid, 1e-9);
    if coeffs.ncols() == 0 {
        return (DMatrix::zeros(dim, 0), DMatrix::zeros(0, 0));
    }
    let basis = orthonormalize(&(&alpha.columns * coeffs));
    let pinv = dec.pseudo_inverse(1e-9 * smax.max(1.0));
    let split = pinv * &basis;
    let ys = &beta.columns * split.rows(0, alpha.n);
    let zs = &delta.columns * split.rows(alpha.n, alpha.n);
    let form = sym(&omega_gram(&ys, &zs));
    (basis, form)
}

fn morse_index(form: &DMatrix<f64>) -> usize {
    if form.nrows() == 0 {
        return 0;
    }
    inertia(&sym_eigenvalues(form), 1e-9 * form.amax().max(1.0)).1
}

fn triple_dim(a: &LagrangianFrame, b: &LagrangianFrame, c: &LagrangianFrame) -> usize {
    let ab = intersection_basis(a, b, DEFAULT_TOL);
    if ab.ncols() == 0 {
        return 0;
    }
    let resid = &ab - c.columns() * (c.columns().transpose() * &ab);
    singular_values(&resid).iter().filter(|&&s| s < DEFAULT_TOL).count()
}

/// Triple index `m^-(Q(alpha, beta; kappa)) + dim(alpha ∩ kappa) - dim(alpha ∩ beta ∩ kappa)`.
pub fn triple_index(alpha: &LagrangianFrame, beta: &LagrangianFrame, kappa: &LagrangianFrame) -> i64 {
    let (_, form) = quadratic_form_q(alpha, beta, kappa);
    let ak = frame_sines(alpha, kappa).iter().filter(|&&s| s < DEFAULT_TOL).count();
    morse_index(&form) as i64 + ak as i64 - triple_dim(alpha, beta, kappa) as i64
}

/// Triple index through a common transversal `delta`:
/// `m^-(Q(alpha, delta; beta)) + m^-(Q(beta, delta; kappa)) - m^-(Q(alpha, delta; kappa))`.
pub fn triple_index_via(
    alpha: &LagrangianFrame,
    beta: &LagrangianFrame,
    kappa: &LagrangianFrame,
    delta: &LagrangianFrame,
) -> Result<i64> {
    for (name, l) in [("alpha", alpha), ("beta", beta), ("kappa", kappa)] {
        let s = frame_sines(delta, l)[0];
        if s < 1e-6 {
            return Err(Error::param("delta", format!("not transversal to {name} (sine {s:.3e})")));
        }
    }
    let m = |x: &LagrangianFrame, y: &LagrangianFrame| morse_index(&quadratic_form_q(x, delta, y).1) as i64;
    Ok(m(alpha, beta) + m(beta, kappa) - m(alpha, kappa))
}

/// A random Lagrangian transversal to every frame in `frames` (minimum
/// principal sine at least `0.05`).
pub fn common_transversal<R: Rng + ?Sized>(frames: &[&LagrangianFrame], rng: &mut R) -> LagrangianFrame {
    let n = frames[0].n;
    loop {
        let d = LagrangianFrame::random(n, rng);
        if frames.iter().all(|f| frame_sines(&d, f)[0] > 0.05) {
            return d;
        }
    }
}

/// Hörmander index `s(l1, l2; k1, k2)`, evaluated by both triple-index
/// expressions; they must agree.
pub fn hormander_index(
    l1: &LagrangianFrame,
    l2: &LagrangianFrame,
    k1: &LagrangianFrame,
    k2: &LagrangianFrame,
) -> Result<i64> {
    let first = triple_index(l1, l2, k2) - triple_index(l1, l2, k1);
    let second = triple_index(l1, k1, k2) - triple_index(l2, k1, k2);
    if first != second {
        return Err(Error::HormanderMismatch { first, second });
    }
    Ok(first)
}

/// Hörmander index from the transversal form of the triple index, with
/// `delta` transversal to all four planes; both expressions must agree.
pub fn hormander_index_via(
    l1: &LagrangianFrame,
    l2: &LagrangianFrame,
    k1: &LagrangianFrame,
    k2: &LagrangianFrame,
    delta: &LagrangianFrame,
) -> Result<i64> {
    let t = |a, b, c| triple_index_via(a, b, c, delta);
    let first = t(l1, l2, k2)? - t(l1, l2, k1)?;
    let second = t(l1, k1, k2)? - t(l2, k1, k2)?;
    if first != second {
        return Err(Error::HormanderMismatch { first, second });
    }
    Ok(first)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line(a: f64, b: f64) -> LagrangianFrame {
        LagrangianFrame::new(DMatrix::from_column_slice(2, 1, &[a, b])).unwrap()
    }

    #[test]
    fn omega_basics() {
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let e2 = DVector::from_vec(vec![0.0, 1.0]);
        assert_eq!(symplectic_form(&e1, &e2).unwrap(), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let u = DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
            let v = DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
            assert!(symplectic_form(&u, &u).unwrap().abs() < 1e-15);
            let lhs = symplectic_form(&apply_j(&u), &apply_j(&v)).unwrap();
            assert!((lhs - symplectic_form(&u, &v).unwrap()).abs() < 1e-14);
        }
        assert!(symplectic_form(&e1, &DVector::zeros(4)).is_err());
    }

    #[test]
    fn reference_plane() {
        let l = lambda_r(2, 1).unwrap();
        let expected = DMatrix::from_column_slice(4, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(l.columns(), &expected);
        assert_eq!(lambda_r(1, 1).unwrap().columns(), &DMatrix::from_column_slice(2, 1, &[1.0, 0.0]));
        for n in 1..=4 {
            for j in 1..=n {
                assert!(is_lagrangian(lambda_r(n, j).unwrap().columns(), 1e-14));
            }
        }
        assert!(lambda_r(2, 0).is_err());
    }

    #[test]
    fn intersections() {
        let l = lambda_r(1, 1).unwrap();
        assert_eq!(intersection_dim(&l, &l, 1e-8).unwrap(), 1);
        assert_eq!(intersection_dim(&l, &line(0.0, 1.0), 1e-8).unwrap(), 0);
        assert!(intersection_dim(&l, &l, 0.5).is_err());
        assert!(intersection_dim(&l, &l, 0.0).is_err());
    }

    #[test]
    fn non_lagrangian_rejected() {
        let z = DMatrix::from_column_slice(4, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert!(LagrangianFrame::new(z).is_err());
    }

    #[test]
    fn q_form_hand_example() {
        let (basis, form) = quadratic_form_q(&line(1.0, 0.0), &line(0.0, 1.0), &line(1.0, 1.0));
        assert_eq!(basis.ncols(), 1);
        assert!((form[(0, 0)] - 1.0).abs() < 1e-12);
        let a = line(0.3, 0.7);
        let (_, f) = quadratic_form_q(&a, &a, &line(1.0, 1.0));
        assert!(f.amax() < 1e-12);
    }

    #[test]
    fn triple_and_hormander_hand_examples() {
        let (h, v) = (line(1.0, 0.0), line(0.0, 1.0));
        let (d1, d2) = (line(1.0, 1.0), line(1.0, -1.0));
        assert_eq!(triple_index(&h, &v, &d1), 0);
        assert_eq!(triple_index(&h, &v, &d2), 1);
        assert_eq!(hormander_index(&h, &v, &d1, &d2).unwrap(), 1);
        assert_eq!(hormander_index(&h, &h, &d1, &d2).unwrap(), 0);
    }

    #[test]
    fn flow_form_scalar_example() {
        // (QD)^{-1} = 1, so the form on xi = (-3/4, 0) is 9/16.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5]);
        let frame = line(-0.75, 0.0);
        let rec = crossing_form_flow(&a, &frame, &lambda_r(1, 1).unwrap(), 1e-8).unwrap();
        assert_eq!(rec.signature, 1);
        assert!((rec.form_eigenvalues[0] - 1.0).abs() < 1e-12);
        let zero = crossing_form_flow(&DMatrix::zeros(2, 2), &frame, &lambda_r(1, 1).unwrap(), 1e-8).unwrap();
        assert_eq!(zero.signature, 0);
        assert!(matches!(
            crossing_form_flow(&a, &line(0.0, 1.0), &lambda_r(1, 1).unwrap(), 1e-8),
            Err(Error::NoCrossing(_))
        ));
    }

    #[test]
    fn projection_restores_isotropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = LagrangianFrame::random(3, &mut rng);
        let noisy = f.columns() + DMatrix::from_fn(6, 3, |_, _| rng.gen_range(-1e-7..1e-7));
        let (p, before) = LagrangianFrame::project(&noisy).unwrap();
        assert!(before > 1e-9);
        assert!(p.isotropy() < 1e-14);
        assert!(frame_sines(&p, &f).iter().all(|&s| s < 1e-6));
    }
}
