//! Norms on `R^d`: evaluation, dual norms, and multivalued gradient sets.
//!
//! A covector `xi` is paired with the set of primal vectors
//! `{ w : <xi,w> >= 0.5*|xi|*^2 + 0.5*|w|^2 }`, the subdifferential of the
//! half squared dual norm at `xi`. The set is a singleton exactly where the
//! dual norm is differentiable; otherwise it is a polytope and is stored by
//! its extreme points.

use crate::{Error, Result};

/// Absolute tolerance for merging extreme points of a gradient set.
pub const MERGE_TOL: f64 = 1e-10;

/// Relative tolerance used to detect ties between active generators or
/// maximal coordinates when assembling a polytope of extreme points.
const TIE_REL_TOL: f64 = 1e-12;

/// The supported families of norms.
#[derive(Clone, Debug)]
pub enum NormKind {
    /// `|v|_p`, `p` in `[1, inf]` (`f64::INFINITY` for the max norm).
    Lp { p: f64 },
    /// `|W v|_p` with positive per-coordinate weights `W = diag(weights)`.
    WeightedLp { p: f64, weights: Vec<f64> },
    /// `sqrt(v^T A v)` for a symmetric positive definite `A` (row-major).
    Ellipsoidal { matrix: Vec<f64> },
    /// Minkowski functional of the convex hull of a finite symmetric set of
    /// unit-ball vertices.
    Polyhedral { generators: Vec<Vec<f64>> },
}

/// A norm on `R^d` with evaluators for the norm, its dual, and the gradient
/// set of covectors.
#[derive(Clone, Debug)]
pub struct NormSpec {
    dim: usize,
    kind: NormKind,
    /// Lower Cholesky factor of `A` (ellipsoidal only).
    chol: Option<Vec<f64>>,
    /// Vertices of the dual unit ball (polyhedral only).
    dual_vertices: Option<Vec<Vec<f64>>>,
}

/// Gradient set of a covector: singleton where the dual norm is
/// differentiable, polytope of extreme points elsewhere.
#[derive(Clone, Debug)]
pub enum GradientSet {
    Singleton(Vec<f64>),
    Polytope(Vec<Vec<f64>>),
}

impl GradientSet {
    /// All extreme points (a singleton yields one point).
    pub fn points(&self) -> &[Vec<f64>] {
        match self {
            GradientSet::Singleton(w) => std::slice::from_ref(w),
            GradientSet::Polytope(ws) => ws,
        }
    }

    /// `(min, max)` of `<df, w>` over the set. Linear functionals attain
    /// their extrema at extreme points, so scanning them is exact.
    pub fn support_interval(&self, df: &[f64]) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for w in self.points() {
            let d = dot(df, w);
            if d < lo {
                lo = d;
            }
            if d > hi {
                hi = d;
            }
        }
        (lo, hi)
    }

    /// True when all extreme points coincide within `tol` componentwise.
    pub fn is_singleton(&self, tol: f64) -> bool {
        let pts = self.points();
        pts.iter().all(|w| points_close(w, &pts[0], tol))
    }
}

impl NormSpec {
    /// The `l^p` norm; `p` may be `f64::INFINITY`.
    pub fn lp(dim: usize, p: f64) -> Result<Self> {
        check_exponent(p)?;
        check_dim(dim)?;
        Ok(NormSpec { dim, kind: NormKind::Lp { p }, chol: None, dual_vertices: None })
    }

    /// Weighted `l^p`: `|diag(w) v|_p` with strictly positive weights.
    pub fn weighted_lp(dim: usize, p: f64, weights: Vec<f64>) -> Result<Self> {
        check_exponent(p)?;
        check_dim(dim)?;
        if weights.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: weights.len() });
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidNorm("weights must be positive and finite".into()));
        }
        Ok(NormSpec { dim, kind: NormKind::WeightedLp { p, weights }, chol: None, dual_vertices: None })
    }

    /// Ellipsoidal norm `sqrt(v^T A v)`; `matrix` is `A` row-major, SPD.
    pub fn ellipsoidal(dim: usize, matrix: Vec<f64>) -> Result<Self> {
        check_dim(dim)?;
        if matrix.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, got: matrix.len() });
        }
        for i in 0..dim {
            for j in 0..i {
                if (matrix[i * dim + j] - matrix[j * dim + i]).abs() > 1e-12 {
                    return Err(Error::InvalidNorm("matrix is not symmetric".into()));
                }
            }
        }
        let chol = cholesky(dim, &matrix)
            .ok_or_else(|| Error::InvalidNorm("matrix is not positive definite".into()))?;
        Ok(NormSpec { dim, kind: NormKind::Ellipsoidal { matrix }, chol: Some(chol), dual_vertices: None })
    }

    /// Polyhedral norm from unit-ball vertices. The set is symmetrized
    /// (closed under negation) and must span `R^d`.
    pub fn polyhedral(dim: usize, generators: Vec<Vec<f64>>) -> Result<Self> {
        check_dim(dim)?;
        let mut gens: Vec<Vec<f64>> = Vec::new();
        for g in &generators {
            if g.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: g.len() });
            }
            if g.iter().all(|&c| c == 0.0) {
                return Err(Error::InvalidNorm("zero generator".into()));
            }
            for cand in [g.clone(), g.iter().map(|&c| -c).collect()] {
                if !gens.iter().any(|h| points_close(h, &cand, 1e-14)) {
                    gens.push(cand);
                }
            }
        }
        let dual_vertices = enumerate_dual_vertices(dim, &gens)?;
        Ok(NormSpec {
            dim,
            kind: NormKind::Polyhedral { generators: gens },
            chol: None,
            dual_vertices: Some(dual_vertices),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &NormKind {
        &self.kind
    }

    /// `|v|`.
    pub fn eval(&self, v: &[f64]) -> Result<f64> {
        self.check_len(v)?;
        Ok(match &self.kind {
            NormKind::Lp { p } => lp_norm(*p, v),
            NormKind::WeightedLp { p, weights } => {
                let scaled: Vec<f64> = v.iter().zip(weights).map(|(a, w)| a * w).collect();
                lp_norm(*p, &scaled)
            }
            NormKind::Ellipsoidal { matrix } => {
                let av = mat_vec(self.dim, matrix, v);
                dot(v, &av).max(0.0).sqrt()
            }
            NormKind::Polyhedral { .. } => {
                // Minkowski functional as the support function of the dual
                // ball; the maximum over its vertices solves the defining
                // linear program exactly at this scale.
                let verts = self.dual_vertices.as_ref().expect("cached dual vertices");
                verts.iter().map(|xi| dot(xi, v)).fold(0.0, f64::max)
            }
        })
    }

    /// `|xi|_* = max { <xi,v> : |v| <= 1 }`.
    pub fn eval_dual(&self, xi: &[f64]) -> Result<f64> {
        self.check_len(xi)?;
        Ok(match &self.kind {
            NormKind::Lp { p } => lp_norm(dual_exponent(*p), xi),
            NormKind::WeightedLp { p, weights } => {
                let scaled: Vec<f64> = xi.iter().zip(weights).map(|(a, w)| a / w).collect();
                lp_norm(dual_exponent(*p), &scaled)
            }
            NormKind::Ellipsoidal { .. } => {
                let l = self.chol.as_ref().expect("cached factor");
                let w = chol_solve(self.dim, l, xi);
                dot(xi, &w).max(0.0).sqrt()
            }
            NormKind::Polyhedral { generators } => {
                generators.iter().map(|g| dot(xi, g)).fold(0.0, f64::max)
            }
        })
    }

    /// The gradient set of `xi`: all `w` with
    /// `<xi,w> >= 0.5*|xi|*^2 + 0.5*|w|^2`. Returns `{0}` for `xi = 0`.
    pub fn gradient_set(&self, xi: &[f64]) -> Result<GradientSet> {
        self.check_len(xi)?;
        if xi.iter().all(|&c| c == 0.0) {
            return Ok(GradientSet::Singleton(vec![0.0; self.dim]));
        }
        Ok(match &self.kind {
            NormKind::Lp { p } => lp_gradient_set(*p, xi),
            NormKind::WeightedLp { p, weights } => {
                // |xi|_* = |W^{-1} xi|_q, so the subdifferential is the
                // W^{-1}-image of the plain l^p set at W^{-1} xi.
                let eta: Vec<f64> = xi.iter().zip(weights).map(|(a, w)| a / w).collect();
                match lp_gradient_set(*p, &eta) {
                    GradientSet::Singleton(w) => GradientSet::Singleton(unscale(&w, weights)),
                    GradientSet::Polytope(ws) => {
                        GradientSet::Polytope(ws.iter().map(|w| unscale(w, weights)).collect())
                    }
                }
            }
            NormKind::Ellipsoidal { .. } => {
                let l = self.chol.as_ref().expect("cached factor");
                GradientSet::Singleton(chol_solve(self.dim, l, xi))
            }
            NormKind::Polyhedral { generators } => {
                let s = self.eval_dual(xi)?;
                let mut pts: Vec<Vec<f64>> = Vec::new();
                for g in generators {
                    if dot(xi, g) >= s * (1.0 - TIE_REL_TOL) {
                        let p: Vec<f64> = g.iter().map(|&c| s * c).collect();
                        if !pts.iter().any(|q| points_close(q, &p, MERGE_TOL)) {
                            pts.push(p);
                        }
                    }
                }
                if pts.len() == 1 {
                    GradientSet::Singleton(pts.pop().expect("one point"))
                } else {
                    GradientSet::Polytope(pts)
                }
            }
        })
    }

    /// True iff the dual norm is differentiable at `xi`, i.e. the gradient
    /// set is a singleton within the merge tolerance.
    pub fn is_dual_differentiable(&self, xi: &[f64]) -> Result<bool> {
        Ok(self.gradient_set(xi)?.is_singleton(MERGE_TOL))
    }

    /// Whether the norm is strictly convex (equivalently, its dual is
    /// differentiable away from the origin). Decidable per kind.
    pub fn is_strictly_convex(&self) -> bool {
        match &self.kind {
            NormKind::Lp { p } | NormKind::WeightedLp { p, .. } => p.is_finite() && *p > 1.0,
            NormKind::Ellipsoidal { .. } => true,
            NormKind::Polyhedral { .. } => false,
        }
    }

    /// Whether the norm comes from an inner product.
    pub fn is_quadratic(&self) -> bool {
        matches!(
            &self.kind,
            NormKind::Lp { p } | NormKind::WeightedLp { p, .. } if *p == 2.0
        ) || matches!(&self.kind, NormKind::Ellipsoidal { .. })
    }

    /// The exponent of the dual `l^q` norm, when the norm is an `l^p` kind.
    pub fn dual_exponent(&self) -> Option<f64> {
        match &self.kind {
            NormKind::Lp { p } | NormKind::WeightedLp { p, .. } => Some(dual_exponent(*p)),
            _ => None,
        }
    }

    /// Cancellation-free evaluation of `|dir - s*u| - |dir|` for small `s`.
    ///
    /// The direct evaluation loses all digits below `eps * |dir|`, which is
    /// fatal when the defect itself is `O(s)`; each kind has a formulation
    /// whose absolute error is `O(eps * s)` instead.
    pub fn ray_defect(&self, dir: &[f64], u: &[f64], s: f64) -> Result<f64> {
        self.check_len(dir)?;
        self.check_len(u)?;
        Ok(match &self.kind {
            NormKind::Lp { p } => lp_ray_defect(*p, dir, u, s),
            NormKind::WeightedLp { p, weights } => {
                let d: Vec<f64> = dir.iter().zip(weights).map(|(a, w)| a * w).collect();
                let uu: Vec<f64> = u.iter().zip(weights).map(|(a, w)| a * w).collect();
                lp_ray_defect(*p, &d, &uu, s)
            }
            NormKind::Ellipsoidal { matrix } => {
                // (|dir-su|^2 - |dir|^2) / (|dir-su| + |dir|) with the
                // quadratic expanded exactly in the small terms.
                let au = mat_vec(self.dim, matrix, u);
                let q = s * s * dot(u, &au) - 2.0 * s * dot(dir, &au);
                let shifted: Vec<f64> = dir.iter().zip(u).map(|(a, b)| a - s * b).collect();
                let n1 = self.eval(&shifted)?;
                let n0 = self.eval(dir)?;
                q / (n1 + n0)
            }
            NormKind::Polyhedral { .. } => {
                let verts = self.dual_vertices.as_ref().expect("cached dual vertices");
                let vals: Vec<f64> = verts.iter().map(|xi| dot(xi, dir)).collect();
                let m = vals.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                verts
                    .iter()
                    .zip(&vals)
                    .map(|(xi, &v)| (v - m) - s * dot(xi, u))
                    .fold(f64::NEG_INFINITY, f64::max)
            }
        })
    }

    /// Cancellation-free evaluation of `|xi + s*eta|_* - |xi|_*`.
    ///
    /// Difference quotients of the half squared dual norm divide this
    /// quantity by `s`; computing the two norms separately would cap the
    /// quotient's accuracy at `eps * |xi|_* / s`, which ruins monotonicity
    /// checks at small steps.
    pub fn dual_ray_defect(&self, xi: &[f64], eta: &[f64], s: f64) -> Result<f64> {
        self.check_len(xi)?;
        self.check_len(eta)?;
        Ok(match &self.kind {
            NormKind::Lp { p } => {
                let neg: Vec<f64> = eta.iter().map(|c| -c).collect();
                lp_ray_defect(dual_exponent(*p), xi, &neg, s)
            }
            NormKind::WeightedLp { p, weights } => {
                let xs: Vec<f64> = xi.iter().zip(weights).map(|(a, w)| a / w).collect();
                let es: Vec<f64> = eta.iter().zip(weights).map(|(a, w)| -a / w).collect();
                lp_ray_defect(dual_exponent(*p), &xs, &es, s)
            }
            NormKind::Ellipsoidal { .. } => {
                let l = self.chol.as_ref().expect("cached factor");
                let inv_eta = chol_solve(self.dim, l, eta);
                let q = s * s * dot(eta, &inv_eta) + 2.0 * s * dot(xi, &inv_eta);
                let shifted: Vec<f64> = xi.iter().zip(eta).map(|(a, b)| a + s * b).collect();
                let denom = self.eval_dual(&shifted)? + self.eval_dual(xi)?;
                if denom == 0.0 {
                    0.0
                } else {
                    q / denom
                }
            }
            NormKind::Polyhedral { generators } => {
                let vals: Vec<f64> = generators.iter().map(|g| dot(xi, g)).collect();
                let m = vals.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                generators
                    .iter()
                    .zip(&vals)
                    .map(|(g, &v)| (v - m) + s * dot(eta, g))
                    .fold(f64::NEG_INFINITY, f64::max)
            }
        })
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            Err(Error::DimensionMismatch { expected: self.dim, got: v.len() })
        } else {
            Ok(())
        }
    }
}

fn check_exponent(p: f64) -> Result<()> {
    if p >= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidNorm(format!("lp exponent must satisfy p >= 1, got {p}")))
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        Err(Error::InvalidNorm("dimension must be positive".into()))
    } else {
        Ok(())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unscale(v: &[f64], weights: &[f64]) -> Vec<f64> {
    v.iter().zip(weights).map(|(a, w)| a / w).collect()
}

fn points_close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

fn dual_exponent(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

fn lp_norm(p: f64, v: &[f64]) -> f64 {
    if p.is_infinite() {
        v.iter().fold(0.0, |a, &b| a.max(b.abs()))
    } else if p == 1.0 {
        v.iter().map(|c| c.abs()).sum()
    } else if p == 2.0 {
        dot(v, v).sqrt()
    } else {
        v.iter().map(|c| c.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// Subdifferential of `0.5 * |.|_q^2` at `xi != 0`, `q` dual to `p`.
fn lp_gradient_set(p: f64, xi: &[f64]) -> GradientSet {
    let q = dual_exponent(p);
    if p == 2.0 {
        return GradientSet::Singleton(xi.to_vec());
    }
    if p.is_infinite() {
        // Dual l^1: the set is |xi|_1 times a box over the zero coordinates.
        let s: f64 = xi.iter().map(|c| c.abs()).sum();
        let zeros: Vec<usize> =
            (0..xi.len()).filter(|&i| xi[i] == 0.0).collect();
        let mut pts = Vec::with_capacity(1 << zeros.len());
        for mask in 0..(1usize << zeros.len()) {
            let mut w: Vec<f64> = xi.iter().map(|&c| s * sign(c)).collect();
            for (k, &i) in zeros.iter().enumerate() {
                w[i] = if mask >> k & 1 == 1 { s } else { -s };
            }
            pts.push(w);
        }
        return if pts.len() == 1 {
            GradientSet::Singleton(pts.pop().expect("one point"))
        } else {
            GradientSet::Polytope(pts)
        };
    }
    if p == 1.0 {
        // Dual l^inf: extreme points sit on the maximal coordinates.
        let s = xi.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let mut pts = Vec::new();
        for (i, &c) in xi.iter().enumerate() {
            if c.abs() >= s * (1.0 - TIE_REL_TOL) {
                let mut w = vec![0.0; xi.len()];
                w[i] = s * sign(c);
                pts.push(w);
            }
        }
        return if pts.len() == 1 {
            GradientSet::Singleton(pts.pop().expect("one point"))
        } else {
            GradientSet::Polytope(pts)
        };
    }
    // Smooth dual: gradient of 0.5*|.|_q^2.
    let nq = lp_norm(q, xi);
    let w: Vec<f64> =
        xi.iter().map(|&c| nq.powf(2.0 - q) * c.abs().powf(q - 1.0) * sign(c)).collect();
    GradientSet::Singleton(w)
}

fn sign(c: f64) -> f64 {
    if c > 0.0 {
        1.0
    } else if c < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Accurate `|dir - s*u|_p - |dir|_p` for small `s`.
fn lp_ray_defect(p: f64, dir: &[f64], u: &[f64], s: f64) -> f64 {
    if p.is_infinite() {
        let m = dir.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let mut best = f64::NEG_INFINITY;
        for (&d, &uu) in dir.iter().zip(u) {
            let su = s * uu;
            let c = if d != 0.0 && su.abs() <= 0.5 * d.abs() {
                (d.abs() - m) - su * sign(d)
            } else {
                (d - su).abs() - m
            };
            best = best.max(c);
        }
        return best;
    }
    if p == 1.0 {
        let mut acc = 0.0;
        for (&d, &uu) in dir.iter().zip(u) {
            let su = s * uu;
            acc += if d == 0.0 {
                su.abs()
            } else if su.abs() <= 0.5 * d.abs() {
                -su * sign(d)
            } else {
                (d - su).abs() - d.abs()
            };
        }
        return acc;
    }
    if p == 2.0 {
        let q = s * s * dot(u, u) - 2.0 * s * dot(dir, u);
        let shifted: Vec<f64> = dir.iter().zip(u).map(|(a, b)| a - s * b).collect();
        return q / (lp_norm(2.0, &shifted) + lp_norm(2.0, dir));
    }
    // General finite p: accumulate the exact increment of sum(|.|^p), then
    // take the p-th root difference through expm1/ln_1p.
    let mut t = 0.0; // |dir|_p^p
    let mut e = 0.0; // |dir - s u|_p^p - |dir|_p^p
    for (&d, &uu) in dir.iter().zip(u) {
        let a = d.abs();
        t += a.powf(p);
        let su = s * uu;
        e += if d == 0.0 {
            su.abs().powf(p)
        } else if su.abs() <= 0.5 * a {
            a.powf(p) * (p * (-su * sign(d) / a).ln_1p()).exp_m1()
        } else {
            (d - su).abs().powf(p) - a.powf(p)
        };
    }
    if t == 0.0 {
        return e.max(0.0).powf(1.0 / p);
    }
    t.powf(1.0 / p) * ((e / t).ln_1p() / p).exp_m1()
}

/// Dense Cholesky `A = L L^T`; returns the lower factor, or `None` when the
/// matrix is not positive definite.
fn cholesky(dim: usize, a: &[f64]) -> Option<Vec<f64>> {
    let mut l = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let mut sum = a[i * dim + j];
            for k in 0..j {
                sum -= l[i * dim + k] * l[j * dim + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l[i * dim + i] = sum.sqrt();
            } else {
                l[i * dim + j] = sum / l[j * dim + j];
            }
        }
    }
    Some(l)
}

/// Solves `A x = b` given the lower Cholesky factor of `A`.
fn chol_solve(dim: usize, l: &[f64], b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; dim];
    for i in 0..dim {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * dim + k] * y[k];
        }
        y[i] = sum / l[i * dim + i];
    }
    let mut x = vec![0.0; dim];
    for i in (0..dim).rev() {
        let mut sum = y[i];
        for k in (i + 1)..dim {
            sum -= l[k * dim + i] * x[k];
        }
        x[i] = sum / l[i * dim + i];
    }
    x
}

fn mat_vec(dim: usize, a: &[f64], v: &[f64]) -> Vec<f64> {
    (0..dim).map(|i| (0..dim).map(|j| a[i * dim + j] * v[j]).sum()).collect()
}

/// Vertices of the dual unit ball `{ xi : <xi,g> <= 1 for all generators }`,
/// found by enumerating basic solutions of d-subsets of active constraints.
fn enumerate_dual_vertices(dim: usize, gens: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = gens.len();
    if n < 2 * dim {
        return Err(Error::InvalidNorm("generators do not span the space".into()));
    }
    let mut verts: Vec<Vec<f64>> = Vec::new();
    let mut subset: Vec<usize> = (0..dim).collect();
    loop {
        if let Some(xi) = solve_active(dim, gens, &subset) {
            let feasible = gens.iter().all(|g| dot(&xi, g) <= 1.0 + 1e-9);
            if feasible && !verts.iter().any(|v| points_close(v, &xi, MERGE_TOL)) {
                verts.push(xi);
            }
        }
        // next combination
        let mut i = dim;
        loop {
            if i == 0 {
                if verts.is_empty() {
                    return Err(Error::InvalidNorm(
                        "generators do not span the space (dual ball unbounded)".into(),
                    ));
                }
                verts.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
                return Ok(verts);
            }
            i -= 1;
            if subset[i] != i + n - dim {
                subset[i] += 1;
                for j in (i + 1)..dim {
                    subset[j] = subset[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Solves `<xi, g_k> = 1` for the chosen subset; `None` when singular.
fn solve_active(dim: usize, gens: &[Vec<f64>], subset: &[usize]) -> Option<Vec<f64>> {
    let mut m = vec![0.0; dim * dim];
    let mut rhs = vec![1.0; dim];
    for (r, &k) in subset.iter().enumerate() {
        m[r * dim..(r + 1) * dim].copy_from_slice(&gens[k]);
    }
    // Gaussian elimination with partial pivoting.
    for col in 0..dim {
        let (piv, mag) = (col..dim)
            .map(|r| (r, m[r * dim + col].abs()))
            .max_by(|a, b| a.1.partial_cmp(&b.1).expect("finite"))?;
        if mag < 1e-12 {
            return None;
        }
        if piv != col {
            for j in 0..dim {
                m.swap(col * dim + j, piv * dim + j);
            }
            rhs.swap(col, piv);
        }
        for r in (col + 1)..dim {
            let f = m[r * dim + col] / m[col * dim + col];
            for j in col..dim {
                m[r * dim + j] -= f * m[col * dim + j];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut xi = vec![0.0; dim];
    for r in (0..dim).rev() {
        let mut sum = rhs[r];
        for j in (r + 1)..dim {
            sum -= m[r * dim + j] * xi[j];
        }
        xi[r] = sum / m[r * dim + r];
    }
    Some(xi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l1_ball() -> NormSpec {
        NormSpec::polyhedral(2, vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()
    }

    #[test]
    fn eval_examples() {
        let e = NormSpec::lp(2, 2.0).unwrap();
        assert_eq!(e.eval(&[3.0, 4.0]).unwrap(), 5.0);
        let linf = NormSpec::lp(2, f64::INFINITY).unwrap();
        assert_eq!(linf.eval(&[1.0, -2.0]).unwrap(), 2.0);
        assert!((l1_ball().eval(&[1.0, 1.0]).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn dual_examples() {
        let linf = NormSpec::lp(2, f64::INFINITY).unwrap();
        assert_eq!(linf.eval_dual(&[1.0, 1.0]).unwrap(), 2.0);
        let e = NormSpec::lp(2, 2.0).unwrap();
        assert_eq!(e.eval_dual(&[3.0, 4.0]).unwrap(), 5.0);
        let l3 = NormSpec::lp(2, 3.0).unwrap();
        let expect = 2.0f64.powf(1.0 / 1.5);
        assert!((l3.eval_dual(&[1.0, 1.0]).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn dual_of_polyhedral_l1_ball_is_linf() {
        let n = l1_ball();
        assert!((n.eval_dual(&[3.0, -4.0]).unwrap() - 4.0).abs() < 1e-12);
        assert!((n.eval(&[3.0, -4.0]).unwrap() - 7.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_set_linf_primal_axis_covector() {
        let linf = NormSpec::lp(2, f64::INFINITY).unwrap();
        let set = linf.gradient_set(&[1.0, 0.0]).unwrap();
        let pts = set.points();
        assert_eq!(pts.len(), 2);
        assert!(pts.iter().any(|w| w == &vec![1.0, -1.0]));
        assert!(pts.iter().any(|w| w == &vec![1.0, 1.0]));
        assert!(!linf.is_dual_differentiable(&[1.0, 0.0]).unwrap());
    }

    #[test]
    fn gradient_set_euclidean_is_identity() {
        let e = NormSpec::lp(2, 2.0).unwrap();
        match e.gradient_set(&[3.0, 4.0]).unwrap() {
            GradientSet::Singleton(w) => assert_eq!(w, vec![3.0, 4.0]),
            _ => panic!("expected singleton"),
        }
        assert!(e.is_dual_differentiable(&[3.0, 4.0]).unwrap());
    }

    #[test]
    fn gradient_set_linf_primal_generic_covector() {
        // The dual l^1 norm is differentiable at (2,1); the maximizer of the
        // Fenchel coupling is |xi|_1 * sign(xi) = (3,3). A grid search over w
        // confirming this lives in the oracle test suite.
        let linf = NormSpec::lp(2, f64::INFINITY).unwrap();
        match linf.gradient_set(&[2.0, 1.0]).unwrap() {
            GradientSet::Singleton(w) => {
                assert!((w[0] - 3.0).abs() < 1e-12 && (w[1] - 3.0).abs() < 1e-12)
            }
            _ => panic!("expected singleton"),
        }
    }

    #[test]
    fn polyhedral_l1_primal_not_differentiable_on_diagonal() {
        let n = l1_ball();
        let set = n.gradient_set(&[1.0, 1.0]).unwrap();
        assert!(set.points().len() >= 2);
        assert!(!n.is_dual_differentiable(&[1.0, 1.0]).unwrap());
        assert!(n.is_dual_differentiable(&[2.0, 1.0]).unwrap());
    }

    #[test]
    fn fenchel_equality_on_members() {
        let norms = [
            NormSpec::lp(3, 1.5).unwrap(),
            NormSpec::lp(3, 2.0).unwrap(),
            NormSpec::lp(3, 3.0).unwrap(),
            NormSpec::lp(3, 1.0).unwrap(),
            NormSpec::lp(3, f64::INFINITY).unwrap(),
            NormSpec::ellipsoidal(3, vec![2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 1.5]).unwrap(),
            NormSpec::weighted_lp(3, 3.0, vec![0.5, 1.0, 2.0]).unwrap(),
        ];
        let xis = [
            vec![1.0, 0.0, 0.0],
            vec![1.0, -2.0, 0.5],
            vec![0.0, 0.0, -1.0],
            vec![0.3, 0.3, 0.3],
        ];
        for n in &norms {
            for xi in &xis {
                let nd = n.eval_dual(xi).unwrap();
                for w in n.gradient_set(xi).unwrap().points() {
                    let lhs = dot(xi, w);
                    let rhs = 0.5 * nd * nd + 0.5 * n.eval(w).unwrap().powi(2);
                    assert!(
                        (lhs - rhs).abs() <= 1e-9 * (1.0 + nd * nd),
                        "fenchel gap {} for xi {xi:?}",
                        lhs - rhs
                    );
                    assert!((n.eval(w).unwrap() - nd).abs() <= 1e-9 * (1.0 + nd));
                }
            }
        }
    }

    #[test]
    fn lp_duality_involution() {
        for p in [1.5, 2.0, 3.0, 7.0] {
            let n = NormSpec::lp(2, p).unwrap();
            let q = n.dual_exponent().unwrap();
            let dual = NormSpec::lp(2, q).unwrap();
            for v in [[0.7, -0.2], [1.0, 3.0], [0.0, 2.0]] {
                let a = n.eval(&v).unwrap();
                let b = dual.eval_dual(&v).unwrap();
                assert!((a - b).abs() <= 1e-12 * (1.0 + a));
            }
        }
    }

    #[test]
    fn gradient_set_positive_homogeneity() {
        let linf = NormSpec::lp(2, f64::INFINITY).unwrap();
        let s1 = linf.gradient_set(&[1.0, 0.0]).unwrap();
        let s3 = linf.gradient_set(&[3.0, 0.0]).unwrap();
        for w in s1.points() {
            let scaled: Vec<f64> = w.iter().map(|c| 3.0 * c).collect();
            assert!(s3.points().iter().any(|v| points_close(v, &scaled, 1e-10)));
        }
        assert_eq!(s1.points().len(), s3.points().len());
    }

    #[test]
    fn zero_covector_maps_to_zero() {
        for n in [NormSpec::lp(2, f64::INFINITY).unwrap(), l1_ball()] {
            match n.gradient_set(&[0.0, 0.0]).unwrap() {
                GradientSet::Singleton(w) => assert_eq!(w, vec![0.0, 0.0]),
                _ => panic!("zero covector must give the singleton {{0}}"),
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let n = NormSpec::lp(3, 2.0).unwrap();
        assert!(matches!(n.eval(&[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn ray_defect_matches_closed_forms() {
        // Euclidean: |e1 - s*u| - 1 with u=(a,b) equals
        // sqrt((1-sa)^2 + (sb)^2) - 1; compare against the series at tiny s.
        let e = NormSpec::lp(2, 2.0).unwrap();
        let u = [0.3, -1.7];
        for s in [1e-6, 1e-9, 1e-12] {
            let d = e.ray_defect(&[1.0, 0.0], &u, s).unwrap();
            let expect = -s * u[0] + 0.5 * s * s * u[1] * u[1];
            assert!((d - expect).abs() < 1e-3 * s * s + 1e-22, "s={s} d={d} expect={expect}");
        }
        // l1 with sign-preserving shift is exactly linear in s.
        let l1 = NormSpec::lp(2, 1.0).unwrap();
        let d = l1.ray_defect(&[1.0, 0.0], &[0.25, 0.0], 1e-9).unwrap();
        assert_eq!(d, -0.25e-9);
        // lp(3): defect (|1-sa|^3 + |sb|^3)^(1/3) - 1 ~ -s*a.
        let l3 = NormSpec::lp(2, 3.0).unwrap();
        let d = l3.ray_defect(&[1.0, 0.0], &[0.5, 2.0], 1e-9).unwrap();
        assert!((d + 0.5e-9).abs() < 1e-20);
    }

    #[test]
    fn exponent_below_one_rejected() {
        assert!(NormSpec::lp(2, 0.5).is_err());
    }
}
