//! The one-sided pairings `D+f(grad g)` and `D-f(grad g)`.
//!
//! Pointwise, `plus`/`minus` are the max/min of `<df, w>` over the gradient
//! set of `dg`; equivalently the one-sided derivatives at `eps = 0` of
//! `eps -> 0.5 * |dg + eps df|_*^2`. Both routes are implemented; the
//! difference-quotient route serves as the independent oracle for the
//! gradient-set route. Field-level verifiers check the calculus rules the
//! pairings obey (chain rules, Leibniz inequalities, Lipschitz bounds,
//! homogeneity and convexity) and classify models by strict convexity and
//! Hilbertianity.

use crate::norm::NormSpec;
use crate::report::VerifierReport;
use crate::space::{CovectorField, Domain, GraphDomain, GridDomain, ScalarField};
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Absolute tolerance (per unit scale) for pointwise identities on the
/// gradient-set route.
pub const IDENTITY_TOL: f64 = 1e-9;

/// Guard band around non-differentiability points of scalar maps.
pub const KINK_GUARD: f64 = 1e-12;

/// Below this modulus a site counts as `{|Dg|_w = 0}` and degenerate
/// weights are hard zeros.
pub const ZERO_MODULUS: f64 = 1e-13;

/// Paired per-site values `(D+f(grad g), D-f(grad g))`.
#[derive(Clone, Debug)]
pub struct DpmField {
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
}

impl DpmField {
    pub fn len(&self) -> usize {
        self.plus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plus.is_empty()
    }

    /// Largest violation of `minus <= plus`.
    pub fn order_defect(&self) -> f64 {
        self.minus
            .iter()
            .zip(&self.plus)
            .map(|(mi, pl)| mi - pl)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Strictly decreasing positive schedule of difference-quotient steps.
#[derive(Clone, Debug)]
pub struct EpsSchedule {
    values: Vec<f64>,
}

impl EpsSchedule {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("empty eps schedule".into()));
        }
        for w in values.windows(2) {
            if !(w[1] < w[0]) {
                return Err(Error::InvalidInput("eps schedule must strictly decrease".into()));
            }
        }
        if values.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::InvalidInput("eps schedule must be positive".into()));
        }
        Ok(EpsSchedule { values })
    }

    /// Geometric schedule, `steps` terms from `start` with the given ratio.
    pub fn geometric(start: f64, ratio: f64, steps: usize) -> Result<Self> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::InvalidInput("ratio must be in (0,1)".into()));
        }
        let mut v = Vec::with_capacity(steps);
        let mut e = start;
        for _ in 0..steps {
            v.push(e);
            e *= ratio;
        }
        EpsSchedule::new(v)
    }

    /// The default schedule: ratio 1/4, 12 steps from 1e-1 down.
    pub fn default_schedule() -> Self {
        EpsSchedule::geometric(1e-1, 0.25, 12).expect("valid default")
    }

    /// Same shape, rescaled so the last step equals `last`.
    pub fn rescaled_to(&self, last: f64) -> Result<Self> {
        let cur = *self.values.last().expect("nonempty");
        let f = last / cur;
        EpsSchedule::new(self.values.iter().map(|e| e * f).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Max/min of `<df, w>` over the gradient set of `dg`; `(0,0)` when
/// `dg = 0`.
pub fn dpm_pointwise(n: &NormSpec, df: &[f64], dg: &[f64]) -> Result<(f64, f64)> {
    let set = n.gradient_set(dg)?;
    if df.len() != n.dim() {
        return Err(Error::DimensionMismatch { expected: n.dim(), got: df.len() });
    }
    let (lo, hi) = set.support_interval(df);
    Ok((hi, lo))
}

/// Difference quotients of `eps -> 0.5 |dg + eps df|_*^2` along a
/// decreasing schedule, for both signs of `eps`.
#[derive(Clone, Debug)]
pub struct QuotientTrace {
    pub plus: f64,
    pub minus: f64,
    pub plus_quotients: Vec<f64>,
    pub minus_quotients: Vec<f64>,
}

/// The quotient route. Convexity makes the positive quotients nonincreasing
/// along the schedule and the negative ones nondecreasing; a violation past
/// `1e-9 * scale` is reported as an error since it can only come from a
/// broken norm implementation.
pub fn dpm_quotient_oracle(
    n: &NormSpec,
    df: &[f64],
    dg: &[f64],
    schedule: &EpsSchedule,
) -> Result<QuotientTrace> {
    if df.iter().all(|&c| c == 0.0) {
        return Ok(QuotientTrace {
            plus: 0.0,
            minus: 0.0,
            plus_quotients: vec![0.0; schedule.values().len()],
            minus_quotients: vec![0.0; schedule.values().len()],
        });
    }
    let base = n.eval_dual(dg)?;
    let scale = (n.eval_dual(df)? * base).max(1.0);
    // 0.5*|dg+eps df|*^2 - 0.5*|dg|*^2 = 0.5 * defect * (defect + 2 base)
    let quotient = |eps: f64| -> Result<f64> {
        let d = n.dual_ray_defect(dg, df, eps)?;
        Ok(d * (d + 2.0 * base) / (2.0 * eps))
    };
    let mut plus_quotients = Vec::with_capacity(schedule.values().len());
    let mut minus_quotients = Vec::with_capacity(schedule.values().len());
    for &e in schedule.values() {
        plus_quotients.push(quotient(e)?);
        minus_quotients.push(quotient(-e)?);
    }
    for w in plus_quotients.windows(2) {
        if w[1] > w[0] + 1e-9 * scale {
            return Err(Error::NonMonotoneQuotient(w[1] - w[0]));
        }
    }
    for w in minus_quotients.windows(2) {
        if w[1] < w[0] - 1e-9 * scale {
            return Err(Error::NonMonotoneQuotient(w[0] - w[1]));
        }
    }
    Ok(QuotientTrace {
        plus: *plus_quotients.last().expect("nonempty"),
        minus: *minus_quotients.last().expect("nonempty"),
        plus_quotients,
        minus_quotients,
    })
}

/// A grid function carrying both its values and a covector field. The
/// covectors are the discrete differential by default, or analytically
/// supplied when exactness at kinks matters.
#[derive(Clone, Debug)]
pub struct GridFunction {
    pub values: ScalarField,
    pub covectors: CovectorField,
}

impl GridFunction {
    pub fn from_values(grid: &GridDomain, values: ScalarField) -> Result<Self> {
        let covectors = grid.differential(&values)?;
        Ok(GridFunction { values, covectors })
    }

    pub fn from_parts(values: ScalarField, covectors: CovectorField) -> Result<Self> {
        if values.len() != covectors.sites() {
            return Err(Error::FieldLength { expected: values.len(), got: covectors.sites() });
        }
        Ok(GridFunction { values, covectors })
    }

    pub fn sites(&self) -> usize {
        self.values.len()
    }

    /// Composition with a scalar map: values `phi(f)`, covectors
    /// `phi'(f) * df` (the exact chain-rule covector).
    pub fn compose(&self, map: &ScalarMap) -> GridFunction {
        let values = self.values.map(|t| map.eval(t));
        let mut covectors = self.covectors.clone();
        for site in 0..self.sites() {
            let c = map.derivative(self.values.get(site));
            for v in covectors.at_mut(site) {
                *v *= c;
            }
        }
        GridFunction { values: ScalarField::new(values.values().to_vec()).expect("finite"), covectors }
    }

    /// Product with the exact Leibniz covector `f1 df2 + f2 df1`.
    pub fn product(&self, other: &GridFunction) -> GridFunction {
        let n = self.sites();
        let dim = self.covectors.dim();
        let mut covectors = CovectorField::zeros(dim, n);
        let mut values = Vec::with_capacity(n);
        for site in 0..n {
            let (a, b) = (self.values.get(site), other.values.get(site));
            values.push(a * b);
            let (da, db) = (self.covectors.at(site), other.covectors.at(site));
            let row = covectors.at_mut(site);
            for k in 0..dim {
                row[k] = a * db[k] + b * da[k];
            }
        }
        GridFunction {
            values: ScalarField::new(values).expect("finite"),
            covectors,
        }
    }
}

/// Per-site pairings on the grid (gradient-set route), zero on
/// `{|Dg|_w = 0}`.
pub fn dpm_field_grid(grid: &GridDomain, f: &GridFunction, g: &GridFunction) -> Result<DpmField> {
    let n = grid.site_count();
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];
    for site in 0..n {
        let dg = g.covectors.at(site);
        if dg.iter().all(|&c| c == 0.0) {
            continue;
        }
        let (p, m) = dpm_pointwise(grid.norm(), f.covectors.at(site), dg)?;
        plus[site] = p;
        minus[site] = m;
    }
    Ok(DpmField { plus, minus })
}

/// Per-site pairings on a graph via one-sided quotients of
/// `eps -> 0.5 |D(g + eps f)|_w^2`; the quotient route is the only route on
/// graph models.
///
/// At each vertex the modulus is the weighted `l^{p_model}` norm of the
/// edge-difference vector, so the half-square increments are evaluated
/// through the cancellation-free `l^p` ray defect.
pub fn dpm_field_graph(
    graph: &GraphDomain,
    f: &ScalarField,
    g: &ScalarField,
    schedule: &EpsSchedule,
) -> Result<DpmField> {
    let n = graph.vertex_count();
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];
    for site in 0..n {
        let (p, m) = graph_site_dpm(graph, f, g, site, schedule)?;
        plus[site] = p;
        minus[site] = m;
    }
    Ok(DpmField { plus, minus })
}

/// One-sided quotients of `0.5 |D(g + eps f)|_w^2` at a single vertex,
/// walked along the schedule with monotonicity checks; `(0,0)` on
/// `{|Dg|_w = 0}`.
pub(crate) fn graph_site_dpm(
    graph: &GraphDomain,
    f: &ScalarField,
    g: &ScalarField,
    site: usize,
    schedule: &EpsSchedule,
) -> Result<(f64, f64)> {
    let pm = graph.p_model();
    let w_pow = 1.0 / pm;
    let nbrs = graph.neighbors(site);
    let dir: Vec<f64> =
        nbrs.iter().map(|&(y, c)| c.powf(w_pow) * (g.get(y) - g.get(site))).collect();
    let shift: Vec<f64> =
        nbrs.iter().map(|&(y, c)| -c.powf(w_pow) * (f.get(y) - f.get(site))).collect();
    let base = lp_norm_of(pm, &dir);
    if base <= ZERO_MODULUS {
        return Ok((0.0, 0.0));
    }
    let quotient = |eps: f64| -> f64 {
        let d = lp_edge_defect(pm, &dir, &shift, eps);
        d * (d + 2.0 * base) / (2.0 * eps)
    };
    let scale = (lp_norm_of(pm, &shift) * base).max(1.0);
    let mut qp_prev = f64::INFINITY;
    let mut qm_prev = f64::NEG_INFINITY;
    let (mut qp, mut qm) = (0.0, 0.0);
    for &eps in schedule.values() {
        qp = quotient(eps);
        qm = quotient(-eps);
        if qp > qp_prev + 1e-9 * scale {
            return Err(Error::NonMonotoneQuotient(qp - qp_prev));
        }
        if qm < qm_prev - 1e-9 * scale {
            return Err(Error::NonMonotoneQuotient(qm_prev - qm));
        }
        qp_prev = qp;
        qm_prev = qm;
    }
    Ok((qp, qm))
}

fn lp_norm_of(p: f64, v: &[f64]) -> f64 {
    if p == 2.0 {
        dir_dot(v, v).sqrt()
    } else {
        v.iter().map(|c| c.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// `|dir - s*shift|_p - |dir|_p` on edge vectors; mirrors the norm-level
/// ray defect.
pub(crate) fn lp_edge_defect(p: f64, dir: &[f64], shift: &[f64], s: f64) -> f64 {
    if p == 2.0 {
        let q = s * s * dir_dot(shift, shift) - 2.0 * s * dir_dot(dir, shift);
        let n1 = {
            let shifted: Vec<f64> = dir.iter().zip(shift).map(|(a, b)| a - s * b).collect();
            dir_dot(&shifted, &shifted).sqrt()
        };
        let n0 = dir_dot(dir, dir).sqrt();
        let denom = n1 + n0;
        return if denom == 0.0 { 0.0 } else { q / denom };
    }
    let mut t = 0.0;
    let mut e = 0.0;
    for (&d, &u) in dir.iter().zip(shift) {
        let a = d.abs();
        t += a.powf(p);
        let su = s * u;
        e += if d == 0.0 {
            su.abs().powf(p)
        } else if su.abs() <= 0.5 * a {
            a.powf(p) * (p * (-su * d.signum() / a).ln_1p()).exp_m1()
        } else {
            (d - su).abs().powf(p) - a.powf(p)
        };
    }
    if t == 0.0 {
        return e.max(0.0).powf(1.0 / p);
    }
    t.powf(1.0 / p) * ((e / t).ln_1p() / p).exp_m1()
}

fn dir_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Pairings on either model from plain value fields (grid covectors are the
/// discrete differentials).
pub fn dpm_field(
    dom: &Domain,
    f: &ScalarField,
    g: &ScalarField,
    schedule: &EpsSchedule,
) -> Result<DpmField> {
    match dom {
        Domain::Grid(grid) => {
            let ff = GridFunction::from_values(grid, f.clone())?;
            let gg = GridFunction::from_values(grid, g.clone())?;
            dpm_field_grid(grid, &ff, &gg)
        }
        Domain::Graph(graph) => dpm_field_graph(graph, f, g, schedule),
    }
}

/// A Lipschitz scalar map with a pointwise derivative and an explicit list
/// of non-differentiability points.
pub struct ScalarMap {
    value: Box<dyn Fn(f64) -> f64>,
    derivative: Box<dyn Fn(f64) -> f64>,
    kinks: Vec<f64>,
}

impl ScalarMap {
    pub fn new(
        value: impl Fn(f64) -> f64 + 'static,
        derivative: impl Fn(f64) -> f64 + 'static,
        kinks: Vec<f64>,
    ) -> Self {
        ScalarMap { value: Box::new(value), derivative: Box::new(derivative), kinks }
    }

    pub fn linear(a: f64, b: f64) -> Self {
        ScalarMap::new(move |t| a * t + b, move |_| a, vec![])
    }

    pub fn abs() -> Self {
        ScalarMap::new(f64::abs, f64::signum, vec![0.0])
    }

    pub fn relu() -> Self {
        ScalarMap::new(|t| t.max(0.0), |t| if t > 0.0 { 1.0 } else { 0.0 }, vec![0.0])
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.value)(t)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        (self.derivative)(t)
    }

    /// True when `t` lies in the guard band of a non-differentiability point.
    pub fn near_kink(&self, t: f64) -> bool {
        self.kinks.iter().any(|&k| (t - k).abs() < KINK_GUARD)
    }
}

fn select_signed(plus: f64, minus: f64, sign: f64) -> f64 {
    if sign > 0.0 {
        plus
    } else if sign < 0.0 {
        minus
    } else {
        0.0
    }
}

/// Checks the chain rules `D±(phi∘f)(grad g) = phi'∘f · D^{±sign} f(grad g)`
/// and `D±f(grad(psi∘g)) = psi'∘g · D^{±sign} f(grad g)` sitewise on the
/// gradient-set route, skipping guard-band sites.
pub fn verify_chain_rules(
    grid: &GridDomain,
    f: &GridFunction,
    g: &GridFunction,
    phi: &ScalarMap,
    psi: &ScalarMap,
) -> Result<Vec<VerifierReport>> {
    let norm = grid.norm();
    let mut rep_f = VerifierReport::new("chain_rule_post", IDENTITY_TOL);
    let mut rep_g = VerifierReport::new("chain_rule_pre", IDENTITY_TOL);
    for site in 0..grid.site_count() {
        let df = f.covectors.at(site);
        let dg = g.covectors.at(site);
        let (plus, minus) = dpm_pointwise(norm, df, dg)?;
        if !phi.near_kink(f.values.get(site)) {
            let c = phi.derivative(f.values.get(site));
            let scaled: Vec<f64> = df.iter().map(|&v| c * v).collect();
            let (lp, lm) = dpm_pointwise(norm, &scaled, dg)?;
            let rp = c * select_signed(plus, minus, c);
            let rm = c * select_signed(minus, plus, c);
            let scale = 1.0 + c.abs() * plus.abs().max(minus.abs());
            rep_f.observe((lp - rp).abs().max((lm - rm).abs()) / scale, site);
        }
        if !psi.near_kink(g.values.get(site)) {
            let c = psi.derivative(g.values.get(site));
            let scaled: Vec<f64> = dg.iter().map(|&v| c * v).collect();
            let (lp, lm) = dpm_pointwise(norm, df, &scaled)?;
            let rp = c * select_signed(plus, minus, c);
            let rm = c * select_signed(minus, plus, c);
            let scale = 1.0 + c.abs() * plus.abs().max(minus.abs());
            rep_g.observe((lp - rp).abs().max((lm - rm).abs()) / scale, site);
        }
    }
    Ok(vec![rep_f, rep_g])
}

/// Checks the Leibniz inequalities for products,
/// `D+(f1 f2)(grad g) <= f1 D^{s1} f2(grad g) + f2 D^{s2} f1(grad g)` and
/// the mirrored bound for `D-`, with the product covector supplied
/// analytically. Also records the largest strict slack and its site.
pub fn verify_leibniz(
    grid: &GridDomain,
    f1: &GridFunction,
    f2: &GridFunction,
    g: &GridFunction,
) -> Result<VerifierReport> {
    let norm = grid.norm();
    let prod = f1.product(f2);
    let mut rep = VerifierReport::new("leibniz_product", IDENTITY_TOL);
    let mut max_slack = 0.0f64;
    let mut slack_site = 0usize;
    for site in 0..grid.site_count() {
        let dg = g.covectors.at(site);
        let (lp, lm) = dpm_pointwise(norm, prod.covectors.at(site), dg)?;
        let (p1, m1) = dpm_pointwise(norm, f1.covectors.at(site), dg)?;
        let (p2, m2) = dpm_pointwise(norm, f2.covectors.at(site), dg)?;
        let (a, b) = (f1.values.get(site), f2.values.get(site));
        let rhs_plus = a * select_signed(p2, m2, a) + b * select_signed(p1, m1, b);
        let rhs_minus = a * select_signed(m2, p2, a) + b * select_signed(m1, p1, b);
        let scale = 1.0 + rhs_plus.abs().max(rhs_minus.abs());
        rep.observe((lp - rhs_plus).max(rhs_minus - lm).max(0.0) / scale, site);
        let slack = (rhs_plus - lp).max(lm - rhs_minus);
        if slack > max_slack {
            max_slack = slack;
            slack_site = site;
        }
    }
    rep = rep.with_param("max_strict_slack", max_slack).with_param("slack_site", slack_site);
    Ok(rep)
}

/// Checks the 1-Lipschitz bound
/// `|D±f1(grad g) - D±f2(grad g)| <= |D(f1-f2)|_w |Dg|_w` and the
/// Cauchy-Schwarz-type bound `|D±f(grad g)| <= |Df|_w |Dg|_w` sitewise.
pub fn verify_lipschitz_bound(
    grid: &GridDomain,
    f1: &GridFunction,
    f2: &GridFunction,
    g: &GridFunction,
) -> Result<VerifierReport> {
    let norm = grid.norm();
    let mut rep = VerifierReport::new("lipschitz_bound", IDENTITY_TOL);
    for site in 0..grid.site_count() {
        let dg = g.covectors.at(site);
        let mod_g = norm.eval_dual(dg)?;
        let d1 = f1.covectors.at(site);
        let d2 = f2.covectors.at(site);
        let (p1, m1) = dpm_pointwise(norm, d1, dg)?;
        let (p2, m2) = dpm_pointwise(norm, d2, dg)?;
        let diff: Vec<f64> = d1.iter().zip(d2).map(|(a, b)| a - b).collect();
        let bound = norm.eval_dual(&diff)? * mod_g;
        let scale = 1.0 + bound;
        rep.observe(((p1 - p2).abs() - bound).max((m1 - m2).abs() - bound).max(0.0) / scale, site);
        let schwartz = norm.eval_dual(d1)? * mod_g;
        rep.observe(
            (p1.abs() - schwartz).max(m1.abs() - schwartz).max(0.0) / (1.0 + schwartz),
            site,
        );
    }
    Ok(rep)
}

/// Report of a strict-convexity probe.
#[derive(Clone, Debug)]
pub struct ConvexityReport {
    pub strictly_convex: bool,
    pub worst_gap: f64,
    pub witness_df: Vec<f64>,
    pub witness_dg: Vec<f64>,
}

/// Samples covector pairs (a structured battery of axis/diagonal directions
/// plus seeded random pairs) and reports the largest `plus - minus` gap.
/// Purely random covectors miss the non-differentiable sets of polyhedral
/// duals, which have measure zero; the structured battery is what catches
/// them.
pub fn detect_strict_convexity(n: &NormSpec, samples: usize, seed: u64) -> Result<ConvexityReport> {
    let d = n.dim();
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        dirs.push(e.clone());
        let mut ne = vec![0.0; d];
        ne[i] = -1.0;
        dirs.push(ne);
        for j in (i + 1)..d {
            for (si, sj) in [(1.0, 1.0), (1.0, -1.0)] {
                let mut v = vec![0.0; d];
                v[i] = si;
                v[j] = sj;
                dirs.push(v);
            }
        }
    }
    let mut pairs: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for dg in &dirs {
        for df in &dirs {
            pairs.push((df.clone(), dg.clone()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while pairs.len() < samples {
        let rand_vec = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()
        };
        pairs.push((rand_vec(&mut rng), rand_vec(&mut rng)));
    }
    let mut worst = 0.0f64;
    let mut witness = (vec![0.0; d], vec![0.0; d]);
    let mut strictly_convex = true;
    for (df, dg) in &pairs {
        if dg.iter().all(|&c| c == 0.0) {
            continue;
        }
        let (plus, minus) = dpm_pointwise(n, df, dg)?;
        let scale = (n.eval_dual(df)? * n.eval_dual(dg)?).max(1e-30);
        let gap = plus - minus;
        if gap > 1e-8 * scale {
            strictly_convex = false;
        }
        if gap > worst {
            worst = gap;
            witness = (df.clone(), dg.clone());
        }
    }
    Ok(ConvexityReport {
        strictly_convex,
        worst_gap: worst,
        witness_df: witness.0,
        witness_dg: witness.1,
    })
}

/// Report of a Hilbertianity probe.
#[derive(Clone, Debug)]
pub struct HilbertReport {
    pub hilbertian: bool,
    pub parallelogram_defect: f64,
    pub symmetry_defect: f64,
}

/// Checks the parallelogram identity of `E(f) = sum |Df|_w^2 m` and the
/// symmetry `D f(grad g) = D g(grad f)` over coordinate fields and seeded
/// random field pairs.
pub fn detect_hilbertianity(dom: &Domain, samples: usize, seed: u64) -> Result<HilbertReport> {
    let energy = |f: &ScalarField| -> Result<f64> {
        let m = dom.modulus(f)?;
        Ok((0..dom.site_count()).map(|i| m.get(i) * m.get(i) * dom.measure(i)).sum())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs: Vec<(ScalarField, ScalarField)> = Vec::new();
    if let Domain::Grid(grid) = dom {
        if grid.dim() >= 2 {
            pairs.push((grid.field_from(|x| x[0]), grid.field_from(|x| x[1])));
        } else {
            pairs.push((grid.field_from(|x| x[0]), grid.field_from(|x| x[0] * x[0])));
        }
    }
    while pairs.len() < samples.max(2) {
        let rand_field = |rng: &mut ChaCha8Rng| {
            ScalarField::new((0..dom.site_count()).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .expect("finite")
        };
        pairs.push((rand_field(&mut rng), rand_field(&mut rng)));
    }
    let schedule = EpsSchedule::default_schedule();
    let mut para = 0.0f64;
    let mut sym = 0.0f64;
    for (f, g) in &pairs {
        let ef = energy(f)?;
        let eg = energy(g)?;
        let esum = energy(&f.axpy(1.0, g))?;
        let ediff = energy(&f.axpy(-1.0, g))?;
        let scale = (ef + eg).max(1e-30);
        para = para.max((esum + ediff - 2.0 * ef - 2.0 * eg).abs() / scale);
        let fg = dpm_field(dom, f, g, &schedule)?;
        let gf = dpm_field(dom, g, f, &schedule)?;
        for i in 0..dom.site_count() {
            sym = sym
                .max((fg.plus[i] - gf.plus[i]).abs() / scale)
                .max((fg.minus[i] - gf.minus[i]).abs() / scale)
                .max((fg.plus[i] - fg.minus[i]).abs() / scale);
        }
    }
    // The quotient route on graphs carries its last-step truncation, so the
    // symmetry threshold sits above the schedule floor.
    let tol = 1e-6;
    Ok(HilbertReport {
        hilbertian: para <= tol && sym <= tol,
        parallelogram_defect: para,
        symmetry_defect: sym,
    })
}

/// Integrated upper-semicontinuity check along `g_n = g + pert/n`:
/// `limsup_n sum D+f(grad g_n) |Dg_n|^{p-2} m <= sum D+f(grad g) |Dg|^{p-2} m`.
pub fn verify_semicontinuity(
    grid: &GridDomain,
    f: &ScalarField,
    g: &ScalarField,
    perturbation: &ScalarField,
    p: f64,
    steps: usize,
) -> Result<VerifierReport> {
    let dom = Domain::Grid(grid.clone());
    let schedule = EpsSchedule::default_schedule();
    let weighted_sum = |gv: &ScalarField| -> Result<f64> {
        let pair = dpm_field(&dom, f, gv, &schedule)?;
        let modulus = grid.modulus(gv)?;
        Ok((0..grid.site_count())
            .map(|i| {
                let m = modulus.get(i);
                if m <= ZERO_MODULUS {
                    0.0
                } else {
                    pair.plus[i] * m.powf(p - 2.0) * grid.measure(i)
                }
            })
            .sum())
    };
    let limit = weighted_sum(g)?;
    let mut tail_max = f64::NEG_INFINITY;
    for k in 1..=steps {
        let gn = g.axpy(1.0 / k as f64, perturbation);
        let s = weighted_sum(&gn)?;
        if k > steps / 2 {
            tail_max = tail_max.max(s);
        }
    }
    let scale = 1.0 + limit.abs();
    let mut rep = VerifierReport::new("semicontinuity_integrated", 1e-6);
    rep.observe((tail_max - limit).max(0.0) / scale, 0);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norm::NormSpec;

    fn linf() -> NormSpec {
        NormSpec::lp(2, f64::INFINITY).unwrap()
    }

    #[test]
    fn linf_axis_pair() {
        // gradient set of (1,0) is {(1,t): t in [-1,1]}, so df=(a,b) pairs to
        // a +/- |b|.
        let n = linf();
        let (p, m) = dpm_pointwise(&n, &[0.7, -0.3], &[1.0, 0.0]).unwrap();
        assert!((p - 1.0).abs() < 1e-12 && (m - 0.4).abs() < 1e-12);
    }

    #[test]
    fn pairing_with_self_is_squared_dual_norm() {
        for n in [
            NormSpec::lp(2, 1.5).unwrap(),
            NormSpec::lp(2, 2.0).unwrap(),
            NormSpec::lp(2, 3.0).unwrap(),
            linf(),
            NormSpec::lp(2, 1.0).unwrap(),
        ] {
            for dg in [[1.0, 0.0], [0.4, -2.0], [1.0, 1.0]] {
                let (p, m) = dpm_pointwise(&n, &dg, &dg).unwrap();
                let nd = n.eval_dual(&dg).unwrap();
                assert!((p - nd * nd).abs() <= 1e-9 * (1.0 + nd * nd));
                assert!((m - nd * nd).abs() <= 1e-9 * (1.0 + nd * nd));
            }
        }
    }

    #[test]
    fn euclidean_orthogonal_pair_vanishes() {
        let n = NormSpec::lp(2, 2.0).unwrap();
        let (p, m) = dpm_pointwise(&n, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!((p, m), (0.0, 0.0));
    }

    #[test]
    fn sign_antisymmetry_is_bitwise() {
        let n = linf();
        for (df, dg) in [([0.3, -1.2], [1.0, 0.0]), ([0.5, 0.7], [0.2, -0.9])] {
            let (p, m) = dpm_pointwise(&n, &df, &dg).unwrap();
            let neg: Vec<f64> = df.iter().map(|c| -c).collect();
            let (pn, mn) = dpm_pointwise(&n, &neg, &dg).unwrap();
            assert_eq!(pn, -m);
            assert_eq!(mn, -p);
        }
    }

    #[test]
    fn quotient_oracle_euclidean_matches_inner_product() {
        let n = NormSpec::lp(2, 2.0).unwrap();
        let t = dpm_quotient_oracle(&n, &[1.0, 0.0], &[3.0, 4.0], &EpsSchedule::default_schedule())
            .unwrap();
        assert!((t.plus - 3.0).abs() < 1e-6);
        assert!((t.minus - 3.0).abs() < 1e-6);
    }

    #[test]
    fn quotient_oracle_linf_one_sided() {
        // 0.5*(1+|eps|)^2 has one-sided derivatives +1 / -1 at 0.
        let n = linf();
        let t = dpm_quotient_oracle(&n, &[0.0, 1.0], &[1.0, 0.0], &EpsSchedule::default_schedule())
            .unwrap();
        assert!((t.plus - 1.0).abs() < 1e-6, "plus {}", t.plus);
        assert!((t.minus + 1.0).abs() < 1e-6, "minus {}", t.minus);
    }

    #[test]
    fn quotient_oracle_zero_direction() {
        let n = linf();
        let t = dpm_quotient_oracle(&n, &[0.0, 0.0], &[1.0, 0.0], &EpsSchedule::default_schedule())
            .unwrap();
        assert_eq!((t.plus, t.minus), (0.0, 0.0));
    }

    #[test]
    fn graph_pairing_is_dirichlet_form() {
        let graph = GraphDomain::lattice(4, 4).unwrap();
        let f = ScalarField::new((0..16).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let g = ScalarField::new((0..16).map(|i| (i as f64 * 0.11).cos()).collect()).unwrap();
        let pair = dpm_field_graph(&graph, &f, &g, &EpsSchedule::default_schedule()).unwrap();
        for x in 0..16 {
            let exact: f64 = graph
                .neighbors(x)
                .iter()
                .map(|&(y, c)| c * (f.get(y) - f.get(x)) * (g.get(y) - g.get(x)))
                .sum();
            let mg = graph.modulus(&g).unwrap();
            if mg.get(x) <= ZERO_MODULUS {
                continue;
            }
            assert!((pair.plus[x] - exact).abs() < 1e-5 * (1.0 + exact.abs()), "site {x}");
            assert!((pair.plus[x] - pair.minus[x]).abs() < 1e-5 * (1.0 + exact.abs()));
        }
    }

    #[test]
    fn chain_rule_battery() {
        let grid = GridDomain::new(linf(), &[(0.0, 1.0), (0.0, 1.0)], 0.25).unwrap();
        let f = GridFunction::from_values(&grid, grid.field_from(|x| x[0] - 0.4)).unwrap();
        let g = GridFunction::from_values(&grid, grid.field_from(|x| x[0] + 0.5 * x[1])).unwrap();
        for (phi, psi) in [
            (ScalarMap::linear(2.0, 0.0), ScalarMap::linear(1.0, 0.0)),
            (ScalarMap::linear(-1.0, 0.0), ScalarMap::linear(-2.0, 1.0)),
            (ScalarMap::abs(), ScalarMap::relu()),
        ] {
            for rep in verify_chain_rules(&grid, &f, &g, &phi, &psi).unwrap() {
                assert!(rep.pass(), "{}: {}", rep.identity, rep.max_violation);
            }
        }
    }

    #[test]
    fn leibniz_inequality_and_strictness_witness() {
        let grid = GridDomain::new(linf(), &[(0.0, 1.0), (0.0, 1.0)], 0.2).unwrap();
        let f1 =
            GridFunction::from_values(&grid, grid.field_from(|x| 0.5 + 0.4 * (x[0] * 3.0).sin()))
                .unwrap();
        let f2 = GridFunction::from_values(&grid, grid.field_from(|x| 0.7 + 0.2 * x[1])).unwrap();
        let g = GridFunction::from_values(&grid, grid.field_from(|x| x[0])).unwrap();
        let rep = verify_leibniz(&grid, &f1, &f2, &g).unwrap();
        assert!(rep.pass(), "violation {}", rep.max_violation);
    }

    #[test]
    fn leibniz_equality_for_unit_factor() {
        let grid =
            GridDomain::new(NormSpec::lp(2, 2.0).unwrap(), &[(0.0, 1.0), (0.0, 1.0)], 0.25).unwrap();
        let one = GridFunction::from_values(&grid, ScalarField::constant(grid.site_count(), 1.0))
            .unwrap();
        let f2 = GridFunction::from_values(&grid, grid.field_from(|x| x[0] * x[1])).unwrap();
        let g = GridFunction::from_values(&grid, grid.field_from(|x| x[0] - x[1])).unwrap();
        let prod = one.product(&f2);
        for site in 0..grid.site_count() {
            let (lp, lm) = dpm_pointwise(grid.norm(), prod.covectors.at(site), g.covectors.at(site))
                .unwrap();
            let (p2, m2) = dpm_pointwise(grid.norm(), f2.covectors.at(site), g.covectors.at(site))
                .unwrap();
            assert!((lp - p2).abs() < 1e-12 && (lm - m2).abs() < 1e-12);
        }
    }

    #[test]
    fn lipschitz_bound_holds() {
        let grid = GridDomain::new(linf(), &[(0.0, 1.0), (0.0, 1.0)], 0.2).unwrap();
        let f1 = GridFunction::from_values(&grid, grid.field_from(|x| (x[0] * 2.0).sin())).unwrap();
        let f2 = GridFunction::from_values(&grid, grid.field_from(|x| x[1] * x[1])).unwrap();
        let g = GridFunction::from_values(&grid, grid.field_from(|x| x[0] + x[1])).unwrap();
        let rep = verify_lipschitz_bound(&grid, &f1, &f2, &g).unwrap();
        assert!(rep.pass(), "violation {}", rep.max_violation);
    }

    #[test]
    fn strict_convexity_classification() {
        let r2 = detect_strict_convexity(&NormSpec::lp(2, 2.0).unwrap(), 200, 1).unwrap();
        assert!(r2.strictly_convex);
        let rinf = detect_strict_convexity(&linf(), 200, 1).unwrap();
        assert!(!rinf.strictly_convex);
        assert!((rinf.worst_gap - 2.0).abs() <= 1e-9);
        let r4 = detect_strict_convexity(&NormSpec::lp(2, 4.0).unwrap(), 10_000, 1).unwrap();
        assert!(r4.strictly_convex, "worst gap {}", r4.worst_gap);
    }

    #[test]
    fn hilbertianity_classification() {
        let euclid = Domain::Grid(
            GridDomain::new(NormSpec::lp(2, 2.0).unwrap(), &[(0.0, 1.0), (0.0, 1.0)], 0.25)
                .unwrap(),
        );
        let rep = detect_hilbertianity(&euclid, 4, 3).unwrap();
        assert!(rep.hilbertian, "defects {} {}", rep.parallelogram_defect, rep.symmetry_defect);

        let anis = Domain::Grid(GridDomain::new(linf(), &[(0.0, 1.0), (0.0, 1.0)], 0.25).unwrap());
        let rep = detect_hilbertianity(&anis, 4, 3).unwrap();
        assert!(!rep.hilbertian);
        assert!(rep.parallelogram_defect > 1e-3);

        let graph = Domain::Graph(GraphDomain::lattice(5, 5).unwrap());
        let rep = detect_hilbertianity(&graph, 4, 3).unwrap();
        assert!(rep.hilbertian, "defects {} {}", rep.parallelogram_defect, rep.symmetry_defect);
    }

    #[test]
    fn field_self_pairing_equals_squared_modulus() {
        let grid =
            GridDomain::new(NormSpec::lp(2, 2.0).unwrap(), &[(0.0, 1.0), (0.0, 1.0)], 0.125)
                .unwrap();
        let g = grid.field_from(|x| (2.0 * x[0]).sin() + x[1] * x[1]);
        let gg = GridFunction::from_values(&grid, g.clone()).unwrap();
        let pair = dpm_field_grid(&grid, &gg, &gg).unwrap();
        let modulus = grid.modulus(&g).unwrap();
        for i in 0..grid.site_count() {
            let sq = modulus.get(i) * modulus.get(i);
            assert!((pair.plus[i] - sq).abs() <= 1e-9 * (1.0 + sq));
            assert!((pair.minus[i] - sq).abs() <= 1e-9 * (1.0 + sq));
        }
    }

    #[test]
    fn graph_route_with_cubic_modulus_exponent() {
        let graph = GraphDomain::lattice(4, 4).unwrap().with_p_model(3.0).unwrap();
        let f = ScalarField::new((0..16).map(|i| (0.71 * i as f64).sin()).collect()).unwrap();
        let g = ScalarField::new((0..16).map(|i| (0.29 * i as f64).cos()).collect()).unwrap();
        // modulus matches its defining sum
        let m = graph.modulus(&g).unwrap();
        for x in 0..16 {
            let expect: f64 = graph
                .neighbors(x)
                .iter()
                .map(|&(y, c)| c * (g.get(y) - g.get(x)).abs().powi(3))
                .sum::<f64>()
                .powf(1.0 / 3.0);
            assert!((m.get(x) - expect).abs() < 1e-12);
        }
        // the quotient route agrees with an independent two-norm quotient at
        // a moderate step, and stays single valued (smooth modulus)
        let pair = dpm_field_graph(&graph, &f, &g, &EpsSchedule::default_schedule()).unwrap();
        for x in 0..16 {
            if m.get(x) <= ZERO_MODULUS {
                continue;
            }
            let eps = 1e-6;
            let up = graph.modulus(&g.axpy(eps, &f)).unwrap();
            let q = (0.5 * up.get(x) * up.get(x) - 0.5 * m.get(x) * m.get(x)) / eps;
            assert!((pair.plus[x] - q).abs() < 1e-4 * (1.0 + q.abs()), "site {x}");
            assert!((pair.plus[x] - pair.minus[x]).abs() < 1e-6 * (1.0 + q.abs()));
        }
        // single valued but nonlinear: unique extraction stays refused
        let dom = Domain::Graph(graph);
        assert!(dom.is_strictly_convex_model());
        assert!(!dom.supports_unique_extraction());
    }

    #[test]
    fn semicontinuity_integrated_form() {
        let grid =
            GridDomain::new(NormSpec::lp(2, 3.0).unwrap(), &[(0.0, 1.0), (0.0, 1.0)], 0.125)
                .unwrap();
        let f = grid.field_from(|x| (x[0] * 2.2).sin() * x[1]);
        let g = grid.field_from(|x| x[0] * x[0] - x[1]);
        let pert = grid.field_from(|x| (7.0 * x[0]).cos() * (3.0 * x[1]).sin());
        let rep = verify_semicontinuity(&grid, &f, &g, &pert, 2.0, 8).unwrap();
        assert!(rep.pass(), "violation {}", rep.max_violation);
    }
}
