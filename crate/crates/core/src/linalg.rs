//! Small dense helpers shared by the frame and index code.
//!
//! Everything here works on `nalgebra` matrices of modest size (at most
//! `2n x 2n` with `n <= 4` in practice).

use faer::Mat;
use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigenvalues of a general real matrix. Uses `faer`, whose Schur iteration
/// is bounded; `nalgebra`'s unbounded variant can cycle on some inputs.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let fm = Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)]);
    let eig = fm.eigenvalues().map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    Ok(eig.into_iter().map(|z| Complex::new(z.re, z.im)).collect())
}

/// Full singular value decomposition `m = U diag(s) V^T`, `s` descending.
/// Backed by `faer`; `nalgebra`'s SVD returns wrong factors for some small
/// non-normal matrices.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v: DMatrix<f64>,
}

impl Svd {
    /// `V diag(1/s) U^T` with singular values at or below `tol` dropped.
    pub fn pseudo_inverse(&self, tol: f64) -> DMatrix<f64> {
        let (r, c) = (self.u.nrows(), self.v.nrows());
        let mut out = DMatrix::zeros(c, r);
        for (i, &sv) in self.s.iter().enumerate() {
            if sv > tol {
                out += self.v.column(i) * self.u.column(i).transpose() / sv;
            }
        }
        out
    }
}

pub fn svd(m: &DMatrix<f64>) -> Svd {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return Svd { u: DMatrix::identity(r, r), s: Vec::new(), v: DMatrix::identity(c, c) };
    }
    let fm = Mat::<f64>::from_fn(r, c, |i, j| m[(i, j)]);
    let dec = fm.svd().expect("SVD of a finite matrix converges");
    let sd = dec.S().column_vector();
    let s: Vec<f64> = (0..r.min(c)).map(|i| sd[i]).collect();
    let u = DMatrix::from_fn(r, r, |i, j| dec.U()[(i, j)]);
    let v = DMatrix::from_fn(c, c, |i, j| dec.V()[(i, j)]);
    Svd { u, s, v }
}

/// Singular values, descending.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return Vec::new();
    }
    let fm = Mat::<f64>::from_fn(r, c, |i, j| m[(i, j)]);
    let mut s = fm.singular_values().expect("SVD of a finite matrix converges");
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Eigen-decomposition of the symmetric part of `m`: eigenvalues ascending
/// and the matching orthonormal eigenvectors as columns.
pub fn sym_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let a = sym(m);
    let fm = Mat::<f64>::from_fn(n, n, |i, j| a[(i, j)]);
    let dec = fm.self_adjoint_eigen(faer::Side::Lower).expect("symmetric eigensolver converges");
    let sd = dec.S().column_vector();
    let vals: Vec<f64> = (0..n).map(|i| sd[i]).collect();
    let vecs = DMatrix::from_fn(n, n, |i, j| dec.U()[(i, j)]);
    (vals, vecs)
}

/// Unitary polar factor of a complex square matrix.
pub fn unitary_polar(m: &DMatrix<Complex<f64>>) -> DMatrix<Complex<f64>> {
    let n = m.nrows();
    let fm = Mat::<faer::c64>::from_fn(n, n, |i, j| faer::c64::new(m[(i, j)].re, m[(i, j)].im));
    let dec = fm.svd().expect("SVD of a finite matrix converges");
    let w = dec.U() * dec.V().adjoint();
    DMatrix::from_fn(n, n, |i, j| Complex::new(w[(i, j)].re, w[(i, j)].im))
}

/// Thin QR orthonormalisation with a positive-diagonal `R` convention, so the
/// result depends continuously on the input.
pub fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let k = m.ncols();
    let qr = m.clone().qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..k.min(q.ncols()) {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Symmetric part `(m + m^T) / 2`.
pub fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Sines of the principal angles between `span(a)` and `span(b)`, ascending.
///
/// Both inputs must have orthonormal columns. Computed from the residual of
/// projecting `a` onto `span(b)`, which keeps small angles accurate.
pub fn principal_sines(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let proj = b * (b.transpose() * a);
    let resid = a - proj;
    let mut s = singular_values(&resid);
    s.sort_by(f64::total_cmp);
    s
}

/// Orthonormal basis of the right null space of `m` at relative tolerance
/// `rel_tol` (singular values below `rel_tol * max(1, sigma_max)` count as zero).
pub fn null_space(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (r, c) = m.shape();
    let padded = if r < c {
        let mut p = DMatrix::zeros(c, c);
        p.view_mut((0, 0), (r, c)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let dec = svd(&padded);
    let smax = dec.s.iter().copied().fold(0.0, f64::max);
    let thresh = rel_tol * smax.max(1.0);
    let cols: Vec<DVector<f64>> = dec
        .s
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= thresh)
        .map(|(i, _)| dec.v.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(c, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    sym_eigen(m).0
}

/// `(positive, negative)` counts of a list of eigenvalues at tolerance `tol`.
pub fn inertia(eigs: &[f64], tol: f64) -> (usize, usize) {
    let pos = eigs.iter().filter(|&&e| e > tol).count();
    let neg = eigs.iter().filter(|&&e| e < -tol).count();
    (pos, neg)
}

/// Stable/unstable invariant subspaces of a hyperbolic matrix.
#[derive(Debug, Clone)]
pub struct HyperbolicSplit {
    /// Orthonormal basis of the span of eigenvectors with `Re > 0`.
    pub plus: DMatrix<f64>,
    /// Orthonormal basis of the span of eigenvectors with `Re < 0`.
    pub minus: DMatrix<f64>,
    /// `min |Re mu|` over the spectrum.
    pub gap: f64,
}

/// Splits `h` into its expanding and contracting invariant subspaces.
///
/// Complex pairs come out realified because the subspaces are read off the
/// range of the spectral projector `(I +- sign(h)) / 2`, which is real.
pub fn hyperbolic_split(h: &DMatrix<f64>, min_gap: f64) -> Result<HyperbolicSplit> {
    let dim = h.nrows();
    let eig = eigenvalues(h)?;
    let gap = eig.iter().map(|z| z.re.abs()).fold(f64::INFINITY, f64::min);
    let scale = h.norm().max(1.0);
    if !(gap > min_gap * scale) {
        return Err(Error::NonHyperbolic(gap));
    }
    let n_plus = eig.iter().filter(|z| z.re > 0.0).count();
    let sign = matrix_sign(h)?;
    let id = DMatrix::<f64>::identity(dim, dim);
    let p_plus = (&id + &sign) * 0.5;
    let p_minus = (&id - &sign) * 0.5;
    Ok(HyperbolicSplit {
        plus: dominant_range(&p_plus, n_plus),
        minus: dominant_range(&p_minus, dim - n_plus),
        gap,
    })
}

fn dominant_range(p: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    if k == 0 {
        return DMatrix::zeros(p.nrows(), 0);
    }
    orthonormalize(&svd(p).u.columns(0, k).into_owned())
}

/// Matrix sign function by the determinant-scaled Newton iteration.
pub fn matrix_sign(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let dim = h.nrows();
    let mut s = h.clone();
    for _ in 0..100 {
        let inv = s.clone().try_inverse().ok_or(Error::Singular("matrix sign iteration"))?;
        let det = s.determinant().abs();
        let c = if det > 0.0 && det.is_finite() { det.powf(-1.0 / dim as f64) } else { 1.0 };
        let next = (&s * c + inv / c) * 0.5;
        let delta = (&next - &s).norm();
        s = next;
        if delta <= 1e-14 * s.norm() {
            break;
        }
    }
    // A couple of unscaled steps polish the converged iterate.
    for _ in 0..2 {
        let inv = s.clone().try_inverse().ok_or(Error::Singular("matrix sign iteration"))?;
        s = (&s + inv) * 0.5;
    }
    Ok(s)
}

/// Principal square root by the Denman-Beavers iteration. Requires that `a`
/// has no eigenvalues on the closed negative real axis.
pub fn sqrtm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = DMatrix::<f64>::identity(n, n);
    for _ in 0..100 {
        let yi = y.clone().try_inverse().ok_or(Error::Singular("matrix square root"))?;
        let zi = z.clone().try_inverse().ok_or(Error::Singular("matrix square root"))?;
        let y_next = (&y + zi) * 0.5;
        let z_next = (&z + yi) * 0.5;
        let delta = (&y_next - &y).norm();
        y = y_next;
        z = z_next;
        if delta <= 1e-15 * y.norm() {
            break;
        }
    }
    Ok(y)
}
