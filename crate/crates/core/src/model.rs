//! Skew-gradient reaction-diffusion models `M w_t = D w_xx + Q grad V(w)`.
//!
//! A model bundles the diagonal rate and diffusion matrices, the signature
//! matrix `Q = diag(Id_j, -Id_{n-j})` and a potential supplying `grad V` and
//! `hess V`. [`check_hypotheses`] measures how comfortably (H1) and (H2)
//! hold and derives the constants the index machinery needs.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym, sym_eigenvalues};
use crate::pulse::PulseProfile;

/// Safety factor applied to the grid maximum defining `c1`.
pub const C1_SAFETY: f64 = 1.05;

/// A smooth potential `V: R^n -> R` with analytic gradient and Hessian.
pub trait Potential: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn gradient(&self, w: &[f64]) -> DVector<f64>;
    fn hessian(&self, w: &[f64]) -> DMatrix<f64>;
}

/// `V(u, v) = gamma v^2/2 + v^4/4 - u v - u^4/4 + (1+beta) u^3/3 - beta u^2/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FhnPotential {
    pub gamma: f64,
    pub beta: f64,
}

impl FhnPotential {
    /// Activator nonlinearity `f(u) = u (1 - u) (u - beta)`.
    pub fn f(&self, u: f64) -> f64 {
        u * (1.0 - u) * (u - self.beta)
    }

    pub fn f_prime(&self, u: f64) -> f64 {
        -3.0 * u * u + 2.0 * (1.0 + self.beta) * u - self.beta
    }
}

impl Potential for FhnPotential {
    fn dim(&self) -> usize {
        2
    }

    fn gradient(&self, w: &[f64]) -> DVector<f64> {
        let (u, v) = (w[0], w[1]);
        // dV/du = -u^3 + (1+beta) u^2 - beta u - v = f(u) - v
        DVector::from_vec(vec![self.f(u) - v, self.gamma * v + v * v * v - u])
    }

    fn hessian(&self, w: &[f64]) -> DMatrix<f64> {
        let (u, v) = (w[0], w[1]);
        DMatrix::from_row_slice(2, 2, &[self.f_prime(u), -1.0, -1.0, self.gamma + 3.0 * v * v])
    }
}

/// `V(u) = u^3/3 - u^2/2`, so the pulse equation is `u'' - u + u^2 = 0`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ScalarBistablePotential;

impl Potential for ScalarBistablePotential {
    fn dim(&self) -> usize {
        1
    }

    fn gradient(&self, w: &[f64]) -> DVector<f64> {
        DVector::from_element(1, w[0] * w[0] - w[0])
    }

    fn hessian(&self, w: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 2.0 * w[0] - 1.0)
    }
}

/// One term `coeff * prod_i w_i^powers[i]` of a polynomial potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

/// A polynomial potential given as a sum of monomials.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialPotential {
    n: usize,
    terms: Vec<Monomial>,
}

impl PolynomialPotential {
    pub fn new(n: usize, terms: Vec<Monomial>) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("n", "must be at least 1"));
        }
        for t in &terms {
            if t.powers.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: t.powers.len() });
            }
        }
        Ok(Self { n, terms })
    }
}

fn powi(x: f64, k: u32) -> f64 {
    x.powi(k as i32)
}

impl Potential for PolynomialPotential {
    fn dim(&self) -> usize {
        self.n
    }

    fn gradient(&self, w: &[f64]) -> DVector<f64> {
        let mut g = DVector::zeros(self.n);
        for t in &self.terms {
            for i in 0..self.n {
                let pi = t.powers[i];
                if pi == 0 {
                    continue;
                }
                let mut val = t.coeff * pi as f64 * powi(w[i], pi - 1);
                for (k, &pk) in t.powers.iter().enumerate() {
                    if k != i {
                        val *= powi(w[k], pk);
                    }
                }
                g[i] += val;
            }
        }
        g
    }

    fn hessian(&self, w: &[f64]) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.n, self.n);
        for t in &self.terms {
            for i in 0..self.n {
                for j in i..self.n {
                    let mut p = t.powers.clone();
                    let mut c = t.coeff;
                    c *= p[i] as f64;
                    if p[i] == 0 {
                        continue;
                    }
                    p[i] -= 1;
                    c *= p[j] as f64;
                    if p[j] == 0 {
                        continue;
                    }
                    p[j] -= 1;
                    let val = c * p.iter().zip(w).map(|(&k, &x)| powi(x, k)).product::<f64>();
                    h[(i, j)] += val;
                    if i != j {
                        h[(j, i)] += val;
                    }
                }
            }
        }
        h
    }
}

/// Which family a model was built from; carried along for reports and for the
/// closed-form FitzHugh-Nagumo criteria.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelKind {
    Fhn { d: f64, tau: f64, gamma: f64, beta: f64 },
    Scalar,
    Polynomial,
}

/// Parameters of a FitzHugh-Nagumo model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FhnParams {
    pub d: f64,
    pub tau: f64,
    pub gamma: f64,
    pub beta: f64,
}

#[derive(Debug, Clone)]
pub struct SkewGradientModel {
    kind: ModelKind,
    activators: usize,
    m: DVector<f64>,
    d: DVector<f64>,
    potential: Arc<dyn Potential>,
    b_inf: DMatrix<f64>,
}

impl SkewGradientModel {
    /// Generic constructor; `m` and `d` are the diagonals of `M` and `D`, the
    /// first `activators` components carry `Q = +1`.
    pub fn new(
        activators: usize,
        m: Vec<f64>,
        d: Vec<f64>,
        potential: Arc<dyn Potential>,
    ) -> Result<Self> {
        let n = potential.dim();
        if m.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: m.len() });
        }
        if d.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: d.len() });
        }
        if activators == 0 || activators > n {
            return Err(Error::param("j", format!("activator count must lie in 1..={n}")));
        }
        if m.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::param("m", "rates must be positive"));
        }
        if d.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::param("d", "diffusion coefficients must be positive"));
        }
        let b_inf = potential.hessian(&vec![0.0; n]);
        Ok(Self {
            kind: ModelKind::Polynomial,
            activators,
            m: DVector::from_vec(m),
            d: DVector::from_vec(d),
            potential,
            b_inf,
        })
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    pub fn activators(&self) -> usize {
        self.activators
    }

    /// Diagonal of `M`.
    pub fn rates(&self) -> &DVector<f64> {
        &self.m
    }

    /// Diagonal of `D`.
    pub fn diffusion(&self) -> &DVector<f64> {
        &self.d
    }

    /// Diagonal of `Q` (`+1` for activators, `-1` for inhibitors).
    pub fn signature(&self) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| if i < self.activators { 1.0 } else { -1.0 })
    }

    pub fn q_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.signature())
    }

    pub fn m_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.m)
    }

    pub fn d_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.d)
    }

    pub fn grad_v(&self, w: &[f64]) -> DVector<f64> {
        self.potential.gradient(w)
    }

    pub fn hess_v(&self, w: &[f64]) -> DMatrix<f64> {
        self.potential.hessian(w)
    }

    /// Reaction term `Q grad V(w)`.
    pub fn reaction(&self, w: &[f64]) -> DVector<f64> {
        self.grad_v(w).component_mul(&self.signature())
    }

    /// Jacobian of the reaction term, `Q hess V(w)`.
    pub fn reaction_jacobian(&self, w: &[f64]) -> DMatrix<f64> {
        let q = self.signature();
        let mut h = self.hess_v(w);
        for (i, mut row) in h.row_iter_mut().enumerate() {
            row *= q[i];
        }
        h
    }

    /// Hessian limit `B(inf) = hess V(0)` at the rest state.
    pub fn b_inf(&self) -> &DMatrix<f64> {
        &self.b_inf
    }

    /// `l`, the smallest entry of `M`.
    pub fn min_rate(&self) -> f64 {
        self.m.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn fhn_params(&self) -> Option<FhnParams> {
        match self.kind {
            ModelKind::Fhn { d, tau, gamma, beta } => Some(FhnParams { d, tau, gamma, beta }),
            _ => None,
        }
    }

    /// Same model with different temporal rates. The pulse equation does not
    /// see `M`, so profiles remain valid.
    pub fn with_rates(&self, m: Vec<f64>) -> Result<Self> {
        if m.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: m.len() });
        }
        if m.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::param("m", "rates must be positive"));
        }
        let mut out = self.clone();
        out.m = DVector::from_vec(m);
        if let ModelKind::Fhn { d, gamma, beta, .. } = self.kind {
            out.kind = ModelKind::Fhn { d, tau: out.m[1], gamma, beta };
        }
        Ok(out)
    }

    /// FitzHugh-Nagumo model with inhibitor time constant `tau`.
    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        match self.kind {
            ModelKind::Fhn { .. } => {
                if !(tau > 0.0) {
                    return Err(Error::param("tau", "must be positive"));
                }
                self.with_rates(vec![self.m[0], tau])
            }
            _ => Err(Error::param("tau", "only FitzHugh-Nagumo models have tau")),
        }
    }
}

/// FitzHugh-Nagumo `u_t = d u_xx + f(u) - v`, `tau v_t = v_xx - gamma v - v^3 + u`.
pub fn build_fhn(d: f64, tau: f64, gamma: f64, beta: f64) -> Result<SkewGradientModel> {
    for (name, val) in [("d", d), ("tau", tau), ("gamma", gamma), ("beta", beta)] {
        if !(val > 0.0 && val.is_finite()) {
            return Err(Error::param(name, format!("must be positive, got {val}")));
        }
    }
    if beta >= 1.0 {
        return Err(Error::param("beta", format!("must lie in (0, 1), got {beta}")));
    }
    fhn_relaxed(d, tau, gamma, beta)
}

/// [`build_fhn`] without the range check on `beta`, so that hypothesis checks
/// can report on parameters outside the pulse regime. Only `d`, `tau` and
/// `gamma` must be positive.
pub fn fhn_relaxed(d: f64, tau: f64, gamma: f64, beta: f64) -> Result<SkewGradientModel> {
    for (name, val) in [("d", d), ("tau", tau), ("gamma", gamma)] {
        if !(val > 0.0 && val.is_finite()) {
            return Err(Error::param(name, format!("must be positive, got {val}")));
        }
    }
    if !beta.is_finite() {
        return Err(Error::param("beta", "must be finite"));
    }
    let mut model = SkewGradientModel::new(
        1,
        vec![1.0, tau],
        vec![d, 1.0],
        Arc::new(FhnPotential { gamma, beta }),
    )?;
    model.kind = ModelKind::Fhn { d, tau, gamma, beta };
    Ok(model)
}

/// The scalar oracle `u_t = u_xx - u + u^2`.
pub fn build_scalar_bistable() -> SkewGradientModel {
    let mut model =
        SkewGradientModel::new(1, vec![1.0], vec![1.0], Arc::new(ScalarBistablePotential))
            .expect("scalar model is valid");
    model.kind = ModelKind::Scalar;
    model
}

/// Source of the `x`-dependent bounds: a computed pulse, or a box `|w_i| <= r`.
#[derive(Debug, Clone, Copy)]
pub enum PulseBound<'a> {
    Profile(&'a PulseProfile),
    Amplitude(f64),
}

/// Where a hypothesis fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// `None` for the limit `B(inf)`.
    pub position: Option<f64>,
    pub direction: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub h1_holds: bool,
    /// Minus the largest eigenvalue of `sym(Q B(inf))`; positive iff (H1) holds.
    pub c2: f64,
    pub h1_violation: Option<Violation>,
    pub h2_holds: bool,
    /// Smallest eigenvalue of `B(x)` on `V^-(Q)` over the grid and `B(inf)`;
    /// `None` when there are no inhibitors.
    pub c3_h2: Option<f64>,
    pub h2_violation: Option<Violation>,
    pub h2_grid_only: bool,
    pub c1: f64,
    pub lambda_hat: f64,
    pub epsilon_max: f64,
}

impl HypothesisReport {
    pub fn holds(&self) -> bool {
        self.h1_holds && self.h2_holds
    }
}

fn qb(model: &SkewGradientModel, b: &DMatrix<f64>) -> DMatrix<f64> {
    let q = model.signature();
    let mut out = b.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= q[i];
    }
    out
}

fn spectral_norm_sym(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).iter().fold(0.0_f64, |acc, e| acc.max(e.abs()))
}

fn inhibitor_block(model: &SkewGradientModel, b: &DMatrix<f64>) -> DMatrix<f64> {
    let j = model.activators();
    let k = model.dim() - j;
    b.view((j, j), (k, k)).into_owned()
}

fn min_eigenpair(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let (vals, vecs) = crate::linalg::sym_eigen(m);
    (vals[0], vecs.column(0).into_owned())
}

fn sample_states(model: &SkewGradientModel, bound: PulseBound<'_>) -> Vec<(Option<f64>, Vec<f64>)> {
    let n = model.dim();
    match bound {
        PulseBound::Profile(p) => (0..p.len())
            .map(|i| (Some(p.grid()[i]), p.w_at(i).iter().copied().collect()))
            .collect(),
        PulseBound::Amplitude(r) => {
            let per_axis: usize = match n {
                1 => 201,
                2 => 61,
                3 => 21,
                _ => 11,
            };
            let total = per_axis.pow(n as u32);
            (0..total)
                .map(|mut idx| {
                    let w: Vec<f64> = (0..n)
                        .map(|_| {
                            let k = idx % per_axis;
                            idx /= per_axis;
                            -r + 2.0 * r * k as f64 / (per_axis - 1) as f64
                        })
                        .collect();
                    (None, w)
                })
                .collect()
        }
    }
}

/// Checks (H1) and (H2) and derives `c1`, `c2`, `c3`, `lambda_hat` and the
/// admissible `epsilon` range.
///
/// `bound` supplies the pulse states for the `x`-dependent quantities; when it
/// is `None` the call fails because `c1` cannot be bounded.
pub fn check_hypotheses(
    model: &SkewGradientModel,
    bound: Option<PulseBound<'_>>,
) -> Result<HypothesisReport> {
    let bound = bound.ok_or(Error::MissingProfile("c1 and the (H2) infimum depend on the pulse"))?;
    if let PulseBound::Amplitude(r) = bound {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::param("amplitude", "must be non-negative"));
        }
    }
    let b_inf = model.b_inf();

    // (H1): sym(Q B(inf)) negative definite.
    let (top, top_vec) = {
        let (e, v) = min_eigenpair(&(-sym(&qb(model, b_inf))));
        (-e, v)
    };
    let h1_holds = top < 0.0;
    let c2 = -top;
    let h1_violation = (!h1_holds)
        .then(|| Violation { position: None, direction: top_vec.iter().copied().collect() });

    let states = sample_states(model, bound);
    let mut c1 = spectral_norm_sym(&qb(model, b_inf));
    let inhibitors = model.dim() - model.activators();
    let mut c3: Option<(f64, Option<f64>, DVector<f64>)> = None;
    if inhibitors > 0 {
        let (e, v) = min_eigenpair(&inhibitor_block(model, b_inf));
        c3 = Some((e, None, v));
    }
    for (pos, w) in &states {
        let b = model.hess_v(w);
        c1 = c1.max(spectral_norm_sym(&qb(model, &b)));
        if inhibitors > 0 {
            let (e, v) = min_eigenpair(&inhibitor_block(model, &b));
            if let Some((cur, _, _)) = &c3 {
                if e < *cur {
                    c3 = Some((e, *pos, v));
                }
            }
        }
    }
    c1 *= C1_SAFETY;

    let (h2_holds, c3_h2, h2_violation) = match c3 {
        None => (true, None, None),
        Some((e, pos, v)) => {
            let holds = e > 0.0;
            let mut dir = vec![0.0; model.dim()];
            for (k, x) in v.iter().enumerate() {
                dir[model.activators() + k] = *x;
            }
            (holds, Some(e), (!holds).then_some(Violation { position: pos, direction: dir }))
        }
    };

    let lambda_hat = c1 / model.min_rate();
    let epsilon_max = if !(h1_holds && h2_holds) {
        0.0
    } else {
        match c3_h2 {
            Some(c3) => c2.min(c3) / 2.0,
            None => c2 / 2.0,
        }
    };
    Ok(HypothesisReport {
        h1_holds,
        c2,
        h1_violation,
        h2_holds,
        c3_h2,
        h2_violation,
        h2_grid_only: matches!(bound, PulseBound::Profile(_)),
        c1,
        lambda_hat,
        epsilon_max,
    })
}
