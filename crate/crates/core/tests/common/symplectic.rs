//! Random Lagrangian paths and the property checks run by both the
//! symplectic tests and the acceptance report.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skewpulse::symplectic::*;

pub fn sym_rand(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> DMatrix<f64> {
    let m = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
    (&m + m.transpose()) * (0.5 * scale)
}

/// Smooth random path `exp(J (t S1 + t^2 S2)) L0` over `[0, 1]`.
pub fn random_path(rng: &mut ChaCha8Rng, n: usize) -> (LagrangianFrame, DMatrix<f64>, DMatrix<f64>) {
    let l0 = LagrangianFrame::random(n, rng);
    (l0, sym_rand(rng, 2 * n, 2.5), sym_rand(rng, 2 * n, 1.0))
}

pub fn eval_path(l0: &LagrangianFrame, s1: &DMatrix<f64>, s2: &DMatrix<f64>, t: f64) -> LagrangianFrame {
    let n = l0.dim_n();
    let m = (j_matrix(n) * (s1 * t + s2 * (t * t))).exp();
    LagrangianFrame::project(&(m * l0.columns())).unwrap().0
}

pub fn grid(a: f64, b: f64, m: usize) -> Vec<f64> {
    (0..=m).map(|k| a + (b - a) * k as f64 / m as f64).collect()
}

/// Integer-entry graphs so that intersections are frequently non-trivial.
pub fn integer_frame(rng: &mut ChaCha8Rng, n: usize, rot: &DMatrix<f64>) -> LagrangianFrame {
    let s = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1i32..=1) as f64);
    let s = (&s + s.transpose()) * 0.5;
    let g = LagrangianFrame::graph(&s).unwrap();
    LagrangianFrame::project(&(rot * g.columns())).unwrap().0
}

/// Outcome of one sub-check: number of instances and the failures among them.
#[derive(Debug, Clone, Default)]
pub struct Tally {
    pub instances: usize,
    pub failures: Vec<String>,
}

impl Tally {
    pub fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.instances += 1;
        if !ok {
            self.failures.push(what());
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn summary(&self) -> String {
        match self.failures.first() {
            None => format!("{}/{} ok", self.instances, self.instances),
            Some(f) => format!("{} of {} fail, first: {f}", self.failures.len(), self.instances),
        }
    }
}

pub fn isotropy(seed: u64) -> Tally {
    let mut t = Tally::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for n in 1..=4 {
        for _ in 0..25 {
            let f = LagrangianFrame::random(n, &mut rng);
            t.check(f.isotropy() <= ISOTROPY_TOL, || format!("random frame n = {n}: {:e}", f.isotropy()));
            let s = random_symplectic(n, 1.0, &mut rng);
            let g = f.transform(&s).unwrap();
            t.check(g.isotropy() <= ISOTROPY_TOL, || format!("transformed n = {n}: {:e}", g.isotropy()));
        }
    }
    let (l0, s1, s2) = random_path(&mut rng, 2);
    let ts = grid(0.0, 1.0, 20);
    let frames: Vec<_> = ts.iter().map(|&t| eval_path(&l0, &s1, &s2, t)).collect();
    let path = SampledPath::new(ts, frames).unwrap();
    for k in 0..200 {
        let f = path.frame_at(k as f64 / 199.0).unwrap();
        t.check(f.isotropy() <= ISOTROPY_TOL, || format!("interpolated sample {k}: {:e}", f.isotropy()));
    }
    t
}

/// Nudging one sample of a sampled path by a small symplectic-orthogonal map
/// keeps its Maslov index against a fixed plane.
pub fn homotopy(seed: u64, instances: usize) -> Tally {
    let mut t = Tally::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = CrossingScan::default();
    while t.instances < instances {
        let n = 1 + t.instances % 2;
        let (l0, s1, s2) = random_path(&mut rng, n);
        let ts = grid(0.0, 1.0, 40);
        let frames: Vec<_> = ts.iter().map(|&t| eval_path(&l0, &s1, &s2, t)).collect();
        let path = SampledPath::new(ts.clone(), frames.clone()).unwrap();
        let v = ConstantPath { frame: LagrangianFrame::random(n, &mut rng), domain: (0.0, 1.0) };
        let fine = grid(0.0, 1.0, 400);
        let Ok((base, _)) = maslov_index_pair(&v, &path, &fine, &opts) else { continue };
        let k = rng.gen_range(1..ts.len() - 1);
        let nudge = symplectic_orthogonal_nudge(n, 1e-3, &mut rng);
        let moved = frames[k].transform(&nudge).unwrap();
        let perturbed = path.with_sample(k, moved).unwrap();
        let idx = maslov_index_pair(&v, &perturbed, &fine, &opts).map(|r| r.0);
        let case = t.instances;
        t.check(idx.as_ref().ok() == Some(&base), || format!("instance {case}: {base} -> {idx:?}"));
    }
    t
}

/// Symplectic invariance, reversal antisymmetry and concatenation additivity
/// on the same random paths.
pub fn invariance_reversal_concatenation(seed: u64, cases: usize) -> (Tally, Tally, Tally, usize) {
    let (mut inv, mut rev, mut cat) = (Tally::default(), Tally::default(), Tally::default());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = CrossingScan::default();
    let mut nonzero = 0;
    for case in 0..cases {
        let n = 1 + case % 2;
        let (l0, s1, s2) = random_path(&mut rng, n);
        let v = LagrangianFrame::random(n, &mut rng);
        let path = FnPath::new((0.0, 1.0), |t| Ok(eval_path(&l0, &s1, &s2, t)));
        let vp = ConstantPath { frame: v.clone(), domain: (0.0, 1.0) };
        let g = grid(0.0, 1.0, 300);
        let idx = maslov_index_pair(&vp, &path, &g, &opts).unwrap().0;
        if idx != 0 {
            nonzero += 1;
        }

        let s = random_symplectic(n, 1.0, &mut rng);
        let moved = FnPath::new((0.0, 1.0), |t| eval_path(&l0, &s1, &s2, t).transform(&s));
        let vs = ConstantPath { frame: v.transform(&s).unwrap(), domain: (0.0, 1.0) };
        let got = maslov_index_pair(&vs, &moved, &g, &opts).unwrap().0;
        inv.check(got == idx, || format!("case {case}: {idx} vs {got}"));

        let back = FnPath::new((0.0, 1.0), |t| Ok(eval_path(&l0, &s1, &s2, 1.0 - t)));
        let got = maslov_index_pair(&vp, &back, &g, &opts).unwrap().0;
        rev.check(got == -idx, || format!("case {case}: {idx} reversed to {got}"));

        // split at a grid point where the pair is transversal
        let mid = (100..200)
            .map(|k| g[k])
            .find(|&t| frame_sines(&eval_path(&l0, &s1, &s2, t), &v)[0] > 1e-2)
            .unwrap();
        let left: Vec<f64> = g.iter().copied().filter(|&t| t <= mid).collect();
        let right: Vec<f64> = g.iter().copied().filter(|&t| t >= mid).collect();
        let a = maslov_index_pair(&vp, &path, &left, &opts).unwrap().0;
        let b = maslov_index_pair(&vp, &path, &right, &opts).unwrap().0;
        cat.check(a + b == idx, || format!("case {case}: {a} + {b} != {idx}"));
    }
    (inv, rev, cat, nonzero)
}

/// The two triple-index formulas on random integer-graph triples.
pub struct TripleRelations {
    /// `triple_index_via == triple_index` (the two formulas as written).
    pub agreement: Tally,
    /// `triple_index_via(a, b, k) == triple_index(k, b, a)`.
    pub reversed: Tally,
    /// Independence of the transversal in `triple_index_via`.
    pub transversal_independence: Tally,
    pub degenerate: usize,
}

pub fn triple_relations(seed: u64, cases: usize) -> TripleRelations {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agreement = Tally::default();
    let mut reversed = Tally::default();
    let mut transversal_independence = Tally::default();
    let mut degenerate = 0;
    for case in 0..cases {
        let n = 1 + case % 3;
        let rot = random_symplectic_orthogonal(n, &mut rng);
        let a = integer_frame(&mut rng, n, &rot);
        let b = integer_frame(&mut rng, n, &rot);
        let k = integer_frame(&mut rng, n, &rot);
        if intersection_dim(&a, &b, 1e-8).unwrap() + intersection_dim(&a, &k, 1e-8).unwrap() > 0 {
            degenerate += 1;
        }
        let d = common_transversal(&[&a, &b, &k], &mut rng);
        let via = triple_index_via(&a, &b, &k, &d).unwrap();
        let d2 = common_transversal(&[&a, &b, &k], &mut rng);
        let via2 = triple_index_via(&a, &b, &k, &d2).unwrap();
        transversal_independence.check(via == via2, || format!("case {case}: {via} vs {via2}"));
        let direct = triple_index(&a, &b, &k);
        agreement.check(via == direct, || format!("case {case} (n = {n}): trip1 {via}, trip2 {direct}"));
        let rev = triple_index(&k, &b, &a);
        reversed.check(via == rev, || format!("case {case}: {via} vs {rev}"));
    }
    TripleRelations { agreement, reversed, transversal_independence, degenerate }
}

pub struct HormanderRelations {
    /// Both expressions inside `hormander_index` and `hormander_index_via`
    /// agree (they return an error otherwise).
    pub two_formula: Tally,
    /// `s(L0, L1; V0, V1) == i(V1, L) - i(V0, L)` with `s` from `hormander_index`.
    pub path_difference: Tally,
    /// The same identity with `s` from `hormander_index_via`.
    pub path_difference_via: Tally,
    pub nonzero: usize,
}

pub fn hormander_relations(seed: u64, cases: usize) -> HormanderRelations {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = CrossingScan::default();
    let mut two_formula = Tally::default();
    let mut path_difference = Tally::default();
    let mut path_difference_via = Tally::default();
    let mut nonzero = 0;
    for case in 0..cases {
        let n = 1 + case % 2;
        let (l0, s1, s2) = random_path(&mut rng, n);
        let path = FnPath::new((0.0, 1.0), |t| Ok(eval_path(&l0, &s1, &s2, t)));
        let v0 = LagrangianFrame::random(n, &mut rng);
        let v1 = LagrangianFrame::random(n, &mut rng);
        let lam0 = eval_path(&l0, &s1, &s2, 0.0);
        let lam1 = eval_path(&l0, &s1, &s2, 1.0);
        let s = hormander_index(&lam0, &lam1, &v0, &v1);
        let d = common_transversal(&[&lam0, &lam1, &v0, &v1], &mut rng);
        let s_via = hormander_index_via(&lam0, &lam1, &v0, &v1, &d);
        two_formula.check(s.is_ok() && s_via.is_ok(), || format!("case {case}: {s:?} / {s_via:?}"));
        let g = grid(0.0, 1.0, 300);
        let i1 = maslov_index_pair(&ConstantPath { frame: v1, domain: (0.0, 1.0) }, &path, &g, &opts).unwrap().0;
        let i0 = maslov_index_pair(&ConstantPath { frame: v0, domain: (0.0, 1.0) }, &path, &g, &opts).unwrap().0;
        let diff = i1 - i0;
        let s = s.unwrap_or(i64::MIN);
        let s_via = s_via.unwrap_or(i64::MIN);
        if diff != 0 {
            nonzero += 1;
        }
        path_difference.check(s == diff, || format!("case {case}: s = {s}, i(V1) - i(V0) = {diff}"));
        path_difference_via.check(s_via == diff, || format!("case {case}: s = {s_via}, i(V1) - i(V0) = {diff}"));
    }
    HormanderRelations { two_formula, path_difference, path_difference_via, nonzero }
}
