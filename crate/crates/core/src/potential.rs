//! Potential-theoretic experiments: sheaf property of minimizers,
//! composition of sub/superminimizers with monotone convex maps, the strong
//! maximum principle, Busemann functions of lines, and a Poincaré-constant
//! diagnostic.

use crate::dcalc::{detect_hilbertianity, ScalarMap};
use crate::divergence::extract_divergence;
use crate::minimize::{
    certify_minimizer, certify_subminimizer, certify_superminimizer, modulus_weight, CertifyReport,
    EnergySpec,
};
use crate::norm::NormSpec;
use crate::space::{Domain, GridDomain, Mask, ScalarField, SignedMeasure};
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A unit-speed line `t -> base + t * direction`, with the direction
/// normalized in the domain norm.
#[derive(Clone, Debug)]
pub struct LineSpec {
    pub base: Vec<f64>,
    pub direction: Vec<f64>,
}

impl LineSpec {
    pub fn new(norm: &NormSpec, base: Vec<f64>, direction: Vec<f64>) -> Result<Self> {
        let speed = norm.eval(&direction)?;
        if (speed - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "line direction must have unit norm (got {speed})"
            )));
        }
        if base.len() != norm.dim() {
            return Err(Error::DimensionMismatch { expected: norm.dim(), got: base.len() });
        }
        Ok(LineSpec { base, direction })
    }

    /// Normalizes the direction in the given norm.
    pub fn through(norm: &NormSpec, base: Vec<f64>, direction: Vec<f64>) -> Result<Self> {
        let speed = norm.eval(&direction)?;
        if speed == 0.0 {
            return Err(Error::InvalidInput("zero direction".into()));
        }
        let scaled = direction.iter().map(|c| c / speed).collect();
        LineSpec::new(norm, base, scaled)
    }
}

/// The Busemann value `inf_{t >= 0} |x - (base + t dir)| - t` truncated at
/// `t_max`.
///
/// The profile is nonincreasing in `t` (triangle inequality), so the
/// truncated value is an upper bound whose remaining error is measured by
/// the tail increment between `t_max/2` and `t_max`. Evaluation goes
/// through the cancellation-free `ray_defect`: with `sigma = |dir| / t`,
/// `|x - t dir| - t = D(sigma) / sigma` where
/// `D(s) = |dir - s (x - base)| - |dir|`.
pub fn busemann_value(
    norm: &NormSpec,
    line: &LineSpec,
    x: &[f64],
    t_max: f64,
) -> Result<f64> {
    if !(t_max > 0.0) {
        return Err(Error::InvalidInput("t_max must be positive".into()));
    }
    let u: Vec<f64> = x.iter().zip(&line.base).map(|(a, b)| a - b).collect();
    let speed = norm.eval(&line.direction)?;
    let value_at = |t: f64| -> Result<f64> {
        let sigma = speed / t;
        Ok(norm.ray_defect(&line.direction, &u, sigma)? / sigma)
    };
    let tail = value_at(0.5 * t_max)? - value_at(t_max)?;
    if tail > 1e-9 {
        return Err(Error::TruncationTooShort(tail));
    }
    // The profile is nonincreasing, so the minimum over the sampled ladder
    // is the value at the largest t; the early samples only matter when the
    // infimum is attained at small t (x close to the ray's start).
    let mut best = value_at(t_max)?;
    let mut t = t_max;
    for _ in 0..40 {
        t *= 0.5;
        if t < 1e-3 {
            break;
        }
        best = best.min(value_at(t)?);
    }
    // t = 0 endpoint
    best = best.min(norm.eval(&u)?);
    Ok(best)
}

/// Busemann field of the forward ray on all grid sites.
pub fn busemann(grid: &GridDomain, line: &LineSpec, t_max: f64) -> Result<ScalarField> {
    let norm = grid.norm();
    ScalarField::new(
        (0..grid.site_count())
            .map(|i| busemann_value(norm, line, &grid.coords(i), t_max))
            .collect::<Result<Vec<f64>>>()?,
    )
}

/// The sampled profile `t -> |x - gamma_t| - t` on a geometric ladder up to
/// `t_max`, for convergence reporting: the profile is nonincreasing, so the
/// rows expose how fast the truncated value settles.
pub fn busemann_profile(
    norm: &NormSpec,
    line: &LineSpec,
    x: &[f64],
    t_max: f64,
) -> Result<Vec<(f64, f64)>> {
    let u: Vec<f64> = x.iter().zip(&line.base).map(|(a, b)| a - b).collect();
    let speed = norm.eval(&line.direction)?;
    let mut rows = Vec::new();
    let mut t = t_max;
    while t > 1e-3 {
        let sigma = speed / t;
        rows.push((t, norm.ray_defect(&line.direction, &u, sigma)? / sigma));
        t *= 0.25;
    }
    rows.reverse();
    Ok(rows)
}

/// The pair `b+`, `b-` of Busemann fields of a line.
#[derive(Clone, Debug)]
pub struct BusemannPair {
    pub bplus: ScalarField,
    pub bminus: ScalarField,
}

impl BusemannPair {
    pub fn compute(grid: &GridDomain, line: &LineSpec, t_max: f64) -> Result<Self> {
        let bplus = busemann(grid, line, t_max)?;
        let reversed = LineSpec {
            base: line.base.clone(),
            direction: line.direction.iter().map(|c| -c).collect(),
        };
        let bminus = busemann(grid, &reversed, t_max)?;
        // triangle inequality: the sum is nonnegative, and vanishes along
        // the line itself (each field alone equals -t / +t there)
        for i in 0..grid.site_count() {
            if bplus.get(i) + bminus.get(i) < -1e-9 {
                return Err(Error::InvalidInput(format!(
                    "busemann sum dropped below zero at site {i}"
                )));
            }
        }
        let norm = grid.norm();
        for t in [-0.7, -0.3, 0.0, 0.3, 0.7] {
            let point: Vec<f64> =
                line.base.iter().zip(&line.direction).map(|(b, d)| b + t * d).collect();
            let plus = busemann_value(norm, line, &point, t_max)?;
            let minus = busemann_value(norm, &reversed, &point, t_max)?;
            if (plus + minus).abs() > 1e-7 || (plus + t).abs() > 1e-7 {
                return Err(Error::InvalidInput(format!(
                    "busemann fields do not vanish along the line (t = {t})"
                )));
            }
        }
        Ok(BusemannPair { bplus, bminus })
    }

    pub fn sum(&self) -> ScalarField {
        self.bplus.axpy(1.0, &self.bminus)
    }
}

/// Outcome of the Busemann harmonicity experiment.
#[derive(Clone, Debug)]
pub struct HarmonicityReport {
    pub hilbertian: bool,
    /// `max |b+ + b-|` over the grid.
    pub sum_sup: f64,
    /// Largest density of the extracted measures (expect `<= tol`:
    /// the fields have nonpositive divergence), when extraction applies.
    pub mu_plus_max: Option<f64>,
    pub mu_minus_max: Option<f64>,
    /// The extracted measures themselves, when the model is strictly
    /// convex.
    pub mu_plus: Option<SignedMeasure>,
    pub mu_minus: Option<SignedMeasure>,
    pub plus_certified: Option<bool>,
    pub minus_certified: Option<bool>,
    pub pass: bool,
}

/// On Hilbertian models asserts `b+ = -b-` and certifies both fields as
/// 2-minimizers on an interior subdomain; on strictly convex models checks
/// the extracted divergences are nonpositive; on flat norms only reports
/// the (generally nonzero) sum.
pub fn busemann_harmonicity_experiment(
    grid: &GridDomain,
    line: &LineSpec,
    t_max: f64,
) -> Result<(BusemannPair, HarmonicityReport)> {
    let pair = BusemannPair::compute(grid, line, t_max)?;
    let dom = Domain::Grid(grid.clone());
    let sum = pair.sum();
    let sum_sup = sum.values().iter().fold(0.0f64, |a, &v| a.max(v.abs()));

    let mut mu_plus_max = None;
    let mut mu_minus_max = None;
    let mut mu_plus = None;
    let mut mu_minus = None;
    if grid.norm().is_strictly_convex() {
        let strict = grid.strict_interior(grid.omega());
        let max_density = |mu: &SignedMeasure| {
            (0..grid.site_count())
                .filter(|&i| strict[i])
                .map(|i| mu.density(i))
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let one = ScalarField::constant(grid.site_count(), 1.0);
        let mp = extract_divergence(&dom, &one, &pair.bplus)?;
        let mm = extract_divergence(&dom, &one, &pair.bminus)?;
        mu_plus_max = Some(max_density(&mp));
        mu_minus_max = Some(max_density(&mm));
        mu_plus = Some(mp);
        mu_minus = Some(mm);
    }

    let hilbertian = detect_hilbertianity(&dom, 4, 2024)?.hilbertian;
    let mut plus_certified = None;
    let mut minus_certified = None;
    let mut pass = true;
    if hilbertian {
        pass &= sum_sup <= 1e-7;
        // certify on an interior subdomain (one erosion of the default)
        let inner = grid.strict_interior(grid.omega());
        for (field, slot) in [(&pair.bplus, &mut plus_certified), (&pair.bminus, &mut minus_certified)]
        {
            let spec = EnergySpec::new(&dom, 2.0, field.clone())?.with_omega(inner.clone());
            let fns = dom.make_test_functions(&inner, 8, 31)?;
            let cert = certify_minimizer(&dom, &spec, field, &fns)?;
            *slot = Some(cert.pass);
            pass &= cert.pass;
        }
    }
    if let (Some(mp), Some(mm)) = (mu_plus_max, mu_minus_max) {
        pass &= mp <= 1e-7 && mm <= 1e-7;
    }
    Ok((
        pair,
        HarmonicityReport {
            hilbertian,
            sum_sup,
            mu_plus_max,
            mu_minus_max,
            mu_plus,
            mu_minus,
            plus_certified,
            minus_certified,
            pass,
        },
    ))
}

/// Outcome of a sheaf experiment.
#[derive(Clone, Debug)]
pub struct SheafReport {
    pub global: CertifyReport,
    pub locals: Vec<CertifyReport>,
    /// Worst density of the glued divergence measure when all local
    /// certificates pass (the local-to-global route back).
    pub glued_density_max: Option<f64>,
    pub pass: bool,
}

/// Certifies the restriction direction (global minimizer is locally a
/// minimizer on every part) and the gluing direction (locally certified on
/// an overlapping cover implies the glued divergence vanishes globally).
pub fn sheaf_experiment(
    dom: &Domain,
    spec: &EnergySpec,
    omegas: &[Mask],
    g: &ScalarField,
    seed: u64,
) -> Result<SheafReport> {
    if !dom.supports_unique_extraction() {
        return Err(Error::NotStrictlyConvex);
    }
    let strict_global = dom.strict_interior(&spec.omega);
    let strict_parts: Vec<Mask> = omegas.iter().map(|o| dom.strict_interior(o)).collect();
    for i in 0..dom.site_count() {
        if strict_global[i] && !strict_parts.iter().any(|s| s[i]) {
            return Err(Error::InvalidDomain(
                "cover does not overlap enough: a strict-interior site is seen by no part".into(),
            ));
        }
    }
    let fns = dom.make_test_functions(&spec.omega, 8, seed)?;
    let global = certify_minimizer(dom, spec, g, &fns)?;
    let mut locals = Vec::with_capacity(omegas.len());
    for omega in omegas {
        let local_spec = EnergySpec::new(dom, spec.p, g.clone())?.with_omega(omega.clone());
        let local_fns = dom.make_test_functions(omega, 8, seed)?;
        locals.push(certify_minimizer(dom, &local_spec, g, &local_fns)?);
    }
    let mut glued_density_max = None;
    if locals.iter().all(|c| c.pass) {
        // glue the extracted divergences of |Dg|^{p-2} grad g over the cover
        let weight = modulus_weight(dom, g, spec.p)?;
        let mut glued = vec![0.0f64; dom.site_count()];
        let mut seen = vec![false; dom.site_count()];
        for omega in omegas {
            let mu = match dom {
                Domain::Grid(grid) => {
                    let gg = crate::dcalc::GridFunction::from_values(grid, g.clone())?;
                    crate::divergence::GridPairing::with_omega(grid, &weight, &gg, omega.clone())?
                        .extract()?
                }
                Domain::Graph(graph) => crate::divergence::GraphPairing::with_omega(
                    graph,
                    &weight,
                    g,
                    omega.clone(),
                )?
                .extract()?,
            };
            let strict = dom.strict_interior(omega);
            for i in 0..dom.site_count() {
                if strict[i] && !seen[i] {
                    glued[i] = mu.density(i);
                    seen[i] = true;
                }
            }
        }
        glued_density_max =
            Some(glued.iter().fold(0.0f64, |a, &d| a.max(d.abs())));
    }
    let pass = match glued_density_max {
        Some(d) => global.pass && d <= 1e-7 * (1.0 + 1.0),
        None => false,
    };
    Ok(SheafReport { global, locals, glued_density_max, pass })
}

/// Declared shape of a composition map.
#[derive(Clone, Copy, Debug)]
pub struct MapShape {
    pub convex: bool,
    pub nondecreasing: bool,
}

/// The four composition cases: the premise side of `g` and the map shape
/// determine the certified side of `phi o g`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ComposeCase {
    /// superminimizer + convex nonincreasing -> subminimizer
    SuperConvexNonincreasing,
    /// superminimizer + concave nondecreasing -> superminimizer
    SuperConcaveNondecreasing,
    /// subminimizer + convex nondecreasing -> subminimizer
    SubConvexNondecreasing,
    /// subminimizer + concave nonincreasing -> superminimizer
    SubConcaveNonincreasing,
}

impl ComposeCase {
    pub fn expected_shape(self) -> MapShape {
        match self {
            ComposeCase::SuperConvexNonincreasing => {
                MapShape { convex: true, nondecreasing: false }
            }
            ComposeCase::SuperConcaveNondecreasing => {
                MapShape { convex: false, nondecreasing: true }
            }
            ComposeCase::SubConvexNondecreasing => MapShape { convex: true, nondecreasing: true },
            ComposeCase::SubConcaveNonincreasing => {
                MapShape { convex: false, nondecreasing: false }
            }
        }
    }

    pub fn premise_is_super(self) -> bool {
        matches!(
            self,
            ComposeCase::SuperConvexNonincreasing | ComposeCase::SuperConcaveNondecreasing
        )
    }

    pub fn conclusion_is_sub(self) -> bool {
        matches!(
            self,
            ComposeCase::SuperConvexNonincreasing | ComposeCase::SubConvexNondecreasing
        )
    }
}

#[derive(Clone, Debug)]
pub struct ComposeReport {
    pub premise: CertifyReport,
    pub conclusion: CertifyReport,
    pub pass: bool,
}

/// Validates the declared shape of `phi` on the range of `g` by sampling.
fn check_shape(phi: &ScalarMap, shape: MapShape, lo: f64, hi: f64) -> Result<()> {
    let n = 64;
    let span = (hi - lo).max(1e-6);
    let at = |k: usize| lo + span * k as f64 / n as f64;
    for k in 0..n {
        let (a, b) = (at(k), at(k + 1));
        let (fa, fb) = (phi.eval(a), phi.eval(b));
        if shape.nondecreasing && fb < fa - 1e-12 {
            return Err(Error::InvalidInput("map is not nondecreasing on the range".into()));
        }
        if !shape.nondecreasing && fb > fa + 1e-12 {
            return Err(Error::InvalidInput("map is not nonincreasing on the range".into()));
        }
    }
    for k in 0..(n - 1) {
        let (a, b) = (at(k), at(k + 2));
        let mid = phi.eval(0.5 * (a + b));
        let chord = 0.5 * (phi.eval(a) + phi.eval(b));
        if shape.convex && mid > chord + 1e-12 {
            return Err(Error::InvalidInput("map is not convex on the range".into()));
        }
        if !shape.convex && mid < chord - 1e-12 {
            return Err(Error::InvalidInput("map is not concave on the range".into()));
        }
    }
    Ok(())
}

/// Certifies `phi o g` on the side the case calls for, after certifying the
/// premise side of `g` and validating the declared shape of `phi` on the
/// range of `g`.
pub fn compose_experiment(
    dom: &Domain,
    spec: &EnergySpec,
    g: &ScalarField,
    phi: &ScalarMap,
    case: ComposeCase,
    seed: u64,
) -> Result<ComposeReport> {
    let lo = g.values().iter().fold(f64::INFINITY, |a, &v| a.min(v));
    let hi = g.values().iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
    check_shape(phi, case.expected_shape(), lo, hi)?;

    let fns = dom.make_test_functions(&spec.omega, 8, seed)?;
    let neg: Vec<ScalarField> = fns.iter().map(|f| f.scale(-1.0)).collect();
    let premise = if case.premise_is_super() {
        certify_superminimizer(dom, spec, g, &fns)?
    } else {
        certify_subminimizer(dom, spec, g, &neg)?
    };

    let composed = g.map(|t| phi.eval(t));
    let composed_spec = EnergySpec::new(dom, spec.p, composed.clone())?.with_omega(spec.omega.clone());
    let conclusion = if case.conclusion_is_sub() {
        certify_subminimizer(dom, &composed_spec, &composed, &neg)?
    } else {
        certify_superminimizer(dom, &composed_spec, &composed, &fns)?
    };
    let pass = premise.pass && conclusion.pass;
    Ok(ComposeReport { premise, conclusion, pass })
}

/// Verdict of the maximum-principle experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaxPrincipleVerdict {
    /// Premise held (interior minimum, superminimizer) and the field is
    /// constant on the subdomain.
    ConstantPass,
    /// Premise failed: the minimum sits on the ring only, or the field is
    /// not a certified superminimizer. Recorded explicitly.
    VacuousPass,
    /// Premise held on a nonconstant field: rigidity violated.
    Violation,
}

#[derive(Clone, Debug)]
pub struct MaxPrincipleReport {
    pub verdict: MaxPrincipleVerdict,
    pub superminimizer: bool,
    pub interior_minimum: bool,
    pub oscillation: f64,
}

/// Tests the rigidity statement at `p = 2`: a superminimizer (certified on
/// a nested family of subdomains) attaining its minimum at a strict
/// interior site must be constant.
pub fn maximum_principle_experiment(
    dom: &Domain,
    g: &ScalarField,
    seed: u64,
) -> Result<MaxPrincipleReport> {
    let omega = dom.omega().clone();
    // nested family: the subdomain and its erosion
    let mut masks = vec![omega.clone()];
    let eroded = dom.strict_interior(&omega);
    if dom.strict_interior(&eroded).iter().any(|&b| b) {
        masks.push(eroded);
    }
    let mut superminimizer = true;
    for mask in &masks {
        let spec = EnergySpec::new(dom, 2.0, g.clone())?.with_omega(mask.clone());
        let fns = dom.make_test_functions(mask, 8, seed)?;
        superminimizer &= certify_superminimizer(dom, &spec, g, &fns)?.pass;
    }

    let omega_sites: Vec<usize> = (0..dom.site_count()).filter(|&i| omega[i]).collect();
    let min =
        omega_sites.iter().map(|&i| g.get(i)).fold(f64::INFINITY, f64::min);
    let max =
        omega_sites.iter().map(|&i| g.get(i)).fold(f64::NEG_INFINITY, f64::max);
    let scale = max.abs().max(min.abs()).max(1.0);
    let strict = dom.strict_interior(&omega);
    let interior_minimum =
        omega_sites.iter().any(|&i| strict[i] && g.get(i) <= min + 1e-12 * scale);
    let oscillation = max - min;

    let verdict = if superminimizer && interior_minimum {
        if oscillation <= 1e-8 * scale {
            MaxPrincipleVerdict::ConstantPass
        } else {
            MaxPrincipleVerdict::Violation
        }
    } else {
        MaxPrincipleVerdict::VacuousPass
    };
    Ok(MaxPrincipleReport { verdict, superminimizer, interior_minimum, oscillation })
}

/// One sampled ball/field row of the Poincaré diagnostic.
#[derive(Clone, Debug)]
pub struct PoincareRow {
    pub center: usize,
    pub radius: f64,
    pub field: usize,
    pub ratio: f64,
}

#[derive(Clone, Debug)]
pub struct PoincareReport {
    pub max_ratio: f64,
    pub rows: Vec<PoincareRow>,
}

/// Max over sampled balls and fields of
/// `(mean oscillation) / (2 r (mean |Df|^{p0})^{1/p0})`, with the same ball
/// on both sides. Stable values over smooth fields diagnose the validity of
/// the scale-invariant oscillation bound on the model; fields oscillating
/// at stencil scale blow the ratio up and are flagged by magnitude.
pub fn poincare_diagnostic(
    grid: &GridDomain,
    p0: f64,
    fields: &[ScalarField],
    ball_count: usize,
    seed: u64,
) -> Result<PoincareReport> {
    if !(p0 >= 1.0) {
        return Err(Error::ExponentRange(p0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let strict = grid.strict_interior(grid.omega());
    let interior: Vec<usize> = (0..grid.site_count()).filter(|&i| strict[i]).collect();
    if interior.is_empty() {
        return Err(Error::EmptyStrictInterior);
    }
    let max_extent = grid
        .shape()
        .iter()
        .map(|&n| (n - 1) as f64 * grid.spacing())
        .fold(0.0, f64::max);
    let mut rows = Vec::new();
    let mut max_ratio = 0.0f64;
    for _ in 0..ball_count {
        let center = interior[rng.gen_range(0..interior.len())];
        let radius = rng.gen_range(2.0 * grid.spacing()..=(max_extent / 3.0).max(2.5 * grid.spacing()));
        let c = grid.coords(center);
        let ball: Vec<usize> = (0..grid.site_count())
            .filter(|&i| {
                let x = grid.coords(i);
                let d: Vec<f64> = x.iter().zip(&c).map(|(a, b)| a - b).collect();
                grid.norm().eval(&d).map(|v| v <= radius).unwrap_or(false)
            })
            .collect();
        if ball.len() < 2 {
            continue;
        }
        let mass: f64 = ball.iter().map(|&i| grid.measure(i)).sum();
        for (fid, f) in fields.iter().enumerate() {
            let mean: f64 = ball.iter().map(|&i| f.get(i) * grid.measure(i)).sum::<f64>() / mass;
            let osc: f64 =
                ball.iter().map(|&i| (f.get(i) - mean).abs() * grid.measure(i)).sum::<f64>() / mass;
            let modulus = grid.modulus(f)?;
            let avg_mod: f64 = ball
                .iter()
                .map(|&i| modulus.get(i).powf(p0) * grid.measure(i))
                .sum::<f64>()
                / mass;
            let rhs = 2.0 * radius * avg_mod.powf(1.0 / p0);
            let ratio = if osc <= 1e-15 { 0.0 } else { osc / rhs.max(1e-300) };
            max_ratio = max_ratio.max(ratio);
            rows.push(PoincareRow { center, radius, field: fid, ratio });
        }
    }
    Ok(PoincareReport { max_ratio, rows })
}
