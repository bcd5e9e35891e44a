//! The divergence `div(h grad g)` as a convex set of signed measures.
//!
//! A measure `mu` belongs to the set when for every test function `f`
//! supported in the strict interior of the subdomain
//!
//! ```text
//!   -A(f) <= mu(f) <= -B(f),
//!   A(f) = sum D^{sign h} f(grad g) h m,   B(f) = sum D^{-sign h} f(grad g) h m.
//! ```
//!
//! On models where the pairing is single valued and linear in `f` the set is
//! a single measure, recovered exactly from hat evaluations. Otherwise the
//! set is the subdifferential at zero of the sublinear functional
//! `f -> -B(f)`, and face measures are produced by sitewise selection of
//! extreme points of the gradient sets.

use crate::dcalc::{dpm_pointwise, EpsSchedule, GridFunction, ScalarMap};
use crate::norm::GradientSet;
use crate::space::{Domain, GraphDomain, GridDomain, Mask, ScalarField, SignedMeasure};
use crate::{Error, Result};

/// Interval `[lo, hi]` that `mu(f)` must hit for one test function.
#[derive(Clone, Debug)]
pub struct DivergenceInterval {
    pub testfn: Option<usize>,
    pub lo: f64,
    pub hi: f64,
}

impl DivergenceInterval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Result of a membership test. The hat-plus-bumps family pins the measure
/// down completely only when the model pairing is single valued; otherwise
/// the check is sound but necessary-only, and `complete` says which case
/// applies.
#[derive(Clone, Debug)]
pub struct MembershipReport {
    pub member: bool,
    pub worst_violation: f64,
    pub worst_testfn: usize,
    pub complete: bool,
}

/// Membership tolerance.
pub const MEMBERSHIP_TOL: f64 = 1e-8;

/// Pairing context on a grid: fixed `h`, fixed `g` (values + covectors),
/// gradient sets precomputed per site, sums taken over `omega`.
pub struct GridPairing<'a> {
    grid: &'a GridDomain,
    h: &'a ScalarField,
    omega: Mask,
    strict: Mask,
    sets: Vec<GradientSet>,
}

impl<'a> GridPairing<'a> {
    pub fn new(grid: &'a GridDomain, h: &'a ScalarField, g: &GridFunction) -> Result<Self> {
        Self::with_omega(grid, h, g, grid.omega().clone())
    }

    pub fn with_omega(
        grid: &'a GridDomain,
        h: &'a ScalarField,
        g: &GridFunction,
        omega: Mask,
    ) -> Result<Self> {
        if h.len() != grid.site_count() || g.sites() != grid.site_count() {
            return Err(Error::FieldLength { expected: grid.site_count(), got: h.len() });
        }
        if omega.len() != grid.site_count() {
            return Err(Error::FieldLength { expected: grid.site_count(), got: omega.len() });
        }
        for site in 0..grid.site_count() {
            if omega[site] && grid.is_grid_boundary(site) {
                return Err(Error::InvalidDomain(
                    "divergence subdomain must avoid the grid boundary (one-sided stencils break \
                     the summation by parts)"
                        .into(),
                ));
            }
        }
        let sets = (0..grid.site_count())
            .map(|i| grid.norm().gradient_set(g.covectors.at(i)))
            .collect::<Result<Vec<_>>>()?;
        let strict = grid.strict_interior(&omega);
        Ok(GridPairing { grid, h, omega, strict, sets })
    }

    pub fn strict_interior(&self) -> &Mask {
        &self.strict
    }

    fn site_interval(&self, site: usize, df: &[f64]) -> (f64, f64) {
        if df.iter().all(|&c| c == 0.0) {
            return (0.0, 0.0);
        }
        let (lo, hi) = self.sets[site].support_interval(df);
        (hi, lo) // (plus, minus)
    }

    /// `(A(f), B(f))` for a test function given by values (covectors are the
    /// discrete differential) or by an explicit covector field.
    fn sign_split_sums(&self, f: &GridFunction) -> (f64, f64) {
        let mut a = 0.0;
        let mut b = 0.0;
        for site in 0..self.grid.site_count() {
            if !self.omega[site] {
                continue;
            }
            let hv = self.h.get(site);
            if hv == 0.0 {
                continue;
            }
            let (plus, minus) = self.site_interval(site, f.covectors.at(site));
            let w = hv * self.grid.measure(site);
            if hv > 0.0 {
                a += plus * w;
                b += minus * w;
            } else {
                a += minus * w;
                b += plus * w;
            }
        }
        (a, b)
    }

    fn check_support(&self, f: &ScalarField) -> Result<()> {
        for site in 0..f.len() {
            if f.get(site) != 0.0 && !self.strict[site] {
                return Err(Error::SupportViolation);
            }
        }
        Ok(())
    }

    /// `[-A(f), -B(f)]` for a test function supported in the strict
    /// interior.
    pub fn bounds(&self, f: &ScalarField) -> Result<DivergenceInterval> {
        self.check_support(f)?;
        let ff = GridFunction::from_values(self.grid, f.clone())?;
        let (a, b) = self.sign_split_sums(&ff);
        Ok(DivergenceInterval { testfn: None, lo: -a, hi: -b })
    }

    /// Same, with an analytically supplied covector field for `f`.
    pub fn bounds_with_covectors(&self, f: &GridFunction) -> Result<DivergenceInterval> {
        self.check_support(&f.values)?;
        let (a, b) = self.sign_split_sums(f);
        Ok(DivergenceInterval { testfn: None, lo: -a, hi: -b })
    }

    /// Fast `[-A, -B]` for the hat at `site`; the hat differential touches
    /// only the stencil neighbors.
    pub fn hat_bounds(&self, site: usize) -> Result<DivergenceInterval> {
        if !self.strict[site] {
            return Err(Error::SupportViolation);
        }
        let grid = self.grid;
        let two_h = 2.0 * grid.spacing();
        let mut a = 0.0;
        let mut b = 0.0;
        for axis in 0..grid.dim() {
            for step in [-1isize, 1] {
                let y = grid.neighbor(site, axis, step).expect("strict interior");
                if !self.omega[y] {
                    continue;
                }
                let hv = self.h.get(y);
                if hv == 0.0 {
                    continue;
                }
                // d hat_site at y = -step/(2h) along this axis
                let coeff = -(step as f64) / two_h;
                let mut df = vec![0.0; grid.dim()];
                df[axis] = coeff;
                let (plus, minus) = self.site_interval(y, &df);
                let w = hv * grid.measure(y);
                if hv > 0.0 {
                    a += plus * w;
                    b += minus * w;
                } else {
                    a += minus * w;
                    b += plus * w;
                }
            }
        }
        Ok(DivergenceInterval { testfn: None, lo: -a, hi: -b })
    }

    /// The unique measure, when the pairing is single valued and linear.
    pub fn extract(&self) -> Result<SignedMeasure> {
        if !self.grid.norm().is_strictly_convex() {
            return Err(Error::NotStrictlyConvex);
        }
        let mut mu = SignedMeasure::zero(self.grid.site_count());
        for site in 0..self.grid.site_count() {
            if self.strict[site] {
                let iv = self.hat_bounds(site)?;
                *mu.density_mut(site) = iv.lo / self.grid.measure(site);
            }
        }
        Ok(mu)
    }

    /// A measure attaining the upper face `-B` in the given direction,
    /// produced by sitewise selection of extreme points (ties resolved by
    /// the canonical extreme-point order).
    pub fn witness(&self, direction: &ScalarField) -> Result<SignedMeasure> {
        self.check_support(direction)?;
        let grid = self.grid;
        let ff = GridFunction::from_values(grid, direction.clone())?;
        // Per-site selection maximizing <df, -h w>.
        let mut selection: Vec<Vec<f64>> = Vec::with_capacity(grid.site_count());
        for site in 0..grid.site_count() {
            let df = ff.covectors.at(site);
            let hv = self.h.get(site);
            let pts = self.sets[site].points();
            let mut best = 0usize;
            let mut best_val = f64::NEG_INFINITY;
            for (k, w) in pts.iter().enumerate() {
                let v: f64 = df.iter().zip(w).map(|(d, c)| d * (-hv) * c).sum();
                if v > best_val + 1e-15 {
                    best_val = v;
                    best = k;
                }
            }
            selection.push(pts[best].clone());
        }
        // Hat evaluations of the linear functional fixed by the selection.
        let two_h = 2.0 * grid.spacing();
        let mut mu = SignedMeasure::zero(grid.site_count());
        for site in 0..grid.site_count() {
            if !self.strict[site] {
                continue;
            }
            let mut val = 0.0;
            for axis in 0..grid.dim() {
                for step in [-1isize, 1] {
                    let y = grid.neighbor(site, axis, step).expect("strict interior");
                    if !self.omega[y] {
                        continue;
                    }
                    let coeff = -(step as f64) / two_h;
                    val -= grid.measure(y) * self.h.get(y) * coeff * selection[y][axis];
                }
            }
            *mu.density_mut(site) = val / grid.measure(site);
        }
        Ok(mu)
    }
}

/// Pairing context on a graph. With modulus exponent 2 the pairing is the
/// exact Dirichlet bilinear form; otherwise one-sided difference quotients
/// of the modulus are used.
pub struct GraphPairing<'a> {
    graph: &'a GraphDomain,
    h: &'a ScalarField,
    g: &'a ScalarField,
    omega: Mask,
    strict: Mask,
    schedule: EpsSchedule,
}

impl<'a> GraphPairing<'a> {
    pub fn new(graph: &'a GraphDomain, h: &'a ScalarField, g: &'a ScalarField) -> Result<Self> {
        Self::with_omega(graph, h, g, graph.omega().clone())
    }

    pub fn with_omega(
        graph: &'a GraphDomain,
        h: &'a ScalarField,
        g: &'a ScalarField,
        omega: Mask,
    ) -> Result<Self> {
        if h.len() != graph.vertex_count() || g.len() != graph.vertex_count() {
            return Err(Error::FieldLength { expected: graph.vertex_count(), got: h.len() });
        }
        let strict = graph.strict_interior(&omega);
        Ok(GraphPairing { graph, h, g, omega, strict, schedule: EpsSchedule::default_schedule() })
    }

    pub fn strict_interior(&self) -> &Mask {
        &self.strict
    }

    /// `(plus, minus)` of the pairing with `f` at vertex `x`: the exact
    /// Dirichlet bilinear form when the modulus exponent is 2 (the quotient
    /// is exactly linear in `eps` there), the quotient route otherwise.
    fn site_dpm(&self, f: &ScalarField, x: usize) -> Result<(f64, f64)> {
        let g = self.g;
        let graph = self.graph;
        if graph.p_model() == 2.0 {
            let v: f64 = graph
                .neighbors(x)
                .iter()
                .map(|&(y, c)| c * (f.get(y) - f.get(x)) * (g.get(y) - g.get(x)))
                .sum();
            return Ok((v, v));
        }
        crate::dcalc::graph_site_dpm(graph, f, g, x, &self.schedule)
    }

    fn check_support(&self, f: &ScalarField) -> Result<()> {
        for site in 0..f.len() {
            if f.get(site) != 0.0 && !self.strict[site] {
                return Err(Error::SupportViolation);
            }
        }
        Ok(())
    }

    pub fn bounds(&self, f: &ScalarField) -> Result<DivergenceInterval> {
        self.check_support(f)?;
        let mut a = 0.0;
        let mut b = 0.0;
        for x in 0..self.graph.vertex_count() {
            if !self.omega[x] {
                continue;
            }
            let hv = self.h.get(x);
            if hv == 0.0 {
                continue;
            }
            let touched =
                f.get(x) != 0.0 || self.graph.neighbors(x).iter().any(|&(y, _)| f.get(y) != 0.0);
            if !touched {
                continue;
            }
            let (plus, minus) = self.site_dpm(f, x)?;
            let w = hv * self.graph.measure(x);
            if hv > 0.0 {
                a += plus * w;
                b += minus * w;
            } else {
                a += minus * w;
                b += plus * w;
            }
        }
        Ok(DivergenceInterval { testfn: None, lo: -a, hi: -b })
    }

    pub fn hat_bounds(&self, site: usize) -> Result<DivergenceInterval> {
        if !self.strict[site] {
            return Err(Error::SupportViolation);
        }
        let mut hat = ScalarField::constant(self.graph.vertex_count(), 0.0);
        hat = ScalarField::new({
            let mut v = hat.values().to_vec();
            v[site] = 1.0;
            v
        })?;
        self.bounds(&hat)
    }

    pub fn extract(&self) -> Result<SignedMeasure> {
        if self.graph.p_model() != 2.0 {
            return Err(Error::NotStrictlyConvex);
        }
        let mut mu = SignedMeasure::zero(self.graph.vertex_count());
        for site in 0..self.graph.vertex_count() {
            if self.strict[site] {
                let iv = self.hat_bounds(site)?;
                *mu.density_mut(site) = iv.lo / self.graph.measure(site);
            }
        }
        Ok(mu)
    }
}

/// `[-A(f), -B(f)]` for one test function, on either model (grid covectors
/// are discrete differentials of the supplied values).
pub fn divergence_bounds(
    dom: &Domain,
    h: &ScalarField,
    g: &ScalarField,
    f: &ScalarField,
) -> Result<DivergenceInterval> {
    match dom {
        Domain::Grid(grid) => {
            let gg = GridFunction::from_values(grid, g.clone())?;
            GridPairing::new(grid, h, &gg)?.bounds(f)
        }
        Domain::Graph(graph) => GraphPairing::new(graph, h, g)?.bounds(f),
    }
}

/// Checks `lo(f) <= mu(f) <= hi(f)` for every supplied test function.
pub fn membership(
    dom: &Domain,
    mu: &SignedMeasure,
    h: &ScalarField,
    g: &ScalarField,
    testfns: &[ScalarField],
) -> Result<MembershipReport> {
    let mut worst = 0.0f64;
    let mut worst_idx = 0usize;
    match dom {
        Domain::Grid(grid) => {
            let gg = GridFunction::from_values(grid, g.clone())?;
            let pairing = GridPairing::new(grid, h, &gg)?;
            for (k, f) in testfns.iter().enumerate() {
                let iv = pairing.bounds(f)?;
                let val = mu.pair(dom, f);
                let scale = 1.0 + iv.lo.abs().max(iv.hi.abs());
                let viol = ((iv.lo - val).max(val - iv.hi)).max(0.0) / scale;
                if viol > worst {
                    worst = viol;
                    worst_idx = k;
                }
            }
        }
        Domain::Graph(graph) => {
            let pairing = GraphPairing::new(graph, h, g)?;
            for (k, f) in testfns.iter().enumerate() {
                let iv = pairing.bounds(f)?;
                let val = mu.pair(dom, f);
                let scale = 1.0 + iv.lo.abs().max(iv.hi.abs());
                let viol = ((iv.lo - val).max(val - iv.hi)).max(0.0) / scale;
                if viol > worst {
                    worst = viol;
                    worst_idx = k;
                }
            }
        }
    }
    Ok(MembershipReport {
        member: worst <= MEMBERSHIP_TOL,
        worst_violation: worst,
        worst_testfn: worst_idx,
        complete: dom.supports_unique_extraction(),
    })
}

/// The unique measure in `div(h grad g)` on models with single-valued
/// linear pairings. Refuses otherwise.
pub fn extract_divergence(dom: &Domain, h: &ScalarField, g: &ScalarField) -> Result<SignedMeasure> {
    if !dom.supports_unique_extraction() {
        return Err(Error::NotStrictlyConvex);
    }
    match dom {
        Domain::Grid(grid) => {
            let gg = GridFunction::from_values(grid, g.clone())?;
            GridPairing::new(grid, h, &gg)?.extract()
        }
        Domain::Graph(graph) => GraphPairing::new(graph, h, g)?.extract(),
    }
}

/// Grid extraction with an analytically supplied covector field for `g`.
pub fn extract_divergence_grid(
    grid: &GridDomain,
    h: &ScalarField,
    g: &GridFunction,
) -> Result<SignedMeasure> {
    GridPairing::new(grid, h, g)?.extract()
}

/// Face measures of the divergence set, one per direction. Distinct outputs
/// certify multivaluedness; on single-valued models all witnesses coincide
/// with the unique measure.
pub fn subdifferential_witnesses(
    dom: &Domain,
    h: &ScalarField,
    g: &ScalarField,
    directions: &[ScalarField],
) -> Result<Vec<SignedMeasure>> {
    match dom {
        Domain::Grid(grid) => {
            let gg = GridFunction::from_values(grid, g.clone())?;
            let pairing = GridPairing::new(grid, h, &gg)?;
            directions.iter().map(|f| pairing.witness(f)).collect()
        }
        Domain::Graph(graph) => {
            if graph.p_model() != 2.0 {
                return Err(Error::NotStrictlyConvex);
            }
            let pairing = GraphPairing::new(graph, h, g)?;
            let mu = pairing.extract()?;
            Ok(vec![mu; directions.len()])
        }
    }
}

/// One rule of the divergence calculus: name, worst density gap, verdict,
/// and the two side-by-side measures for density-level rules.
#[derive(Clone, Debug)]
pub struct CalculusRuleReport {
    pub rule: String,
    pub max_gap: f64,
    pub tolerance: f64,
    pub skipped: Option<String>,
    pub sides: Option<(SignedMeasure, SignedMeasure)>,
}

impl CalculusRuleReport {
    pub fn pass(&self) -> bool {
        self.skipped.is_some() || self.max_gap <= self.tolerance
    }

    fn skipped(rule: &str, reason: &str) -> Self {
        CalculusRuleReport {
            rule: rule.into(),
            max_gap: 0.0,
            tolerance: RULE_TOL,
            skipped: Some(reason.into()),
            sides: None,
        }
    }
}

/// Density comparison tolerance, per unit density scale.
pub const RULE_TOL: f64 = 1e-7;

fn density_gap(a: &SignedMeasure, b: &SignedMeasure, strict: &Mask) -> f64 {
    let scale = 1.0
        + a.densities()
            .iter()
            .chain(b.densities())
            .fold(0.0f64, |acc, &d| acc.max(d.abs()));
    a.densities()
        .iter()
        .zip(b.densities())
        .zip(strict)
        .filter(|&(_, &s)| s)
        .map(|((x, y), _)| (x - y).abs())
        .fold(0.0, f64::max)
        / scale
}

/// Chain rule `div(h grad(phi o g)) = div(h (phi' o g) grad g)`, verified as
/// interval equality per test function (all norms), and as density equality
/// on single-valued models.
pub fn verify_chain_rule_divergence(
    grid: &GridDomain,
    h: &ScalarField,
    g: &GridFunction,
    phi: &ScalarMap,
    testfns: &[ScalarField],
) -> Result<CalculusRuleReport> {
    let composed = g.compose(phi);
    let scaled_h = ScalarField::new(
        (0..grid.site_count())
            .map(|i| h.get(i) * phi.derivative(g.values.get(i)))
            .collect(),
    )?;
    let left = GridPairing::new(grid, h, &composed)?;
    let right = GridPairing::new(grid, &scaled_h, g)?;
    let mut gap = 0.0f64;
    for f in testfns {
        let a = left.bounds(f)?;
        let b = right.bounds(f)?;
        let scale = 1.0 + a.lo.abs().max(a.hi.abs());
        gap = gap.max((a.lo - b.lo).abs() / scale).max((a.hi - b.hi).abs() / scale);
    }
    Ok(CalculusRuleReport {
        rule: "chain_rule".into(),
        max_gap: gap,
        tolerance: RULE_TOL,
        skipped: None,
        sides: None,
    })
}

/// Leibniz rule for the divergence on single-valued models:
/// the measure of `div(h1 h2 grad g)` equals
/// `Dh1(grad g) h2 m + h1 * div(h2 grad g)`.
pub fn verify_leibniz_divergence(
    grid: &GridDomain,
    h1: &GridFunction,
    h2: &ScalarField,
    g: &GridFunction,
) -> Result<CalculusRuleReport> {
    if !grid.norm().is_strictly_convex() {
        return Ok(CalculusRuleReport::skipped(
            "leibniz_divergence",
            "requires a strictly convex norm",
        ));
    }
    let h1h2 = ScalarField::new(
        (0..grid.site_count()).map(|i| h1.values.get(i) * h2.get(i)).collect(),
    )?;
    let lhs = GridPairing::new(grid, &h1h2, g)?.extract()?;
    let mu = GridPairing::new(grid, h2, g)?.extract()?;
    let strict = grid.strict_interior(grid.omega());
    let mut rhs = SignedMeasure::zero(grid.site_count());
    for site in 0..grid.site_count() {
        if !strict[site] {
            continue; // measures are pinned by hats on the strict interior
        }
        let dg = g.covectors.at(site);
        let (plus, _minus) = dpm_pointwise(grid.norm(), h1.covectors.at(site), dg)?;
        // single valued: plus == minus
        *rhs.density_mut(site) = plus * h2.get(site) + h1.values.get(site) * mu.density(site);
    }
    Ok(CalculusRuleReport {
        rule: "leibniz_divergence".into(),
        max_gap: density_gap(&lhs, &rhs, &strict),
        tolerance: RULE_TOL,
        skipped: None,
        sides: Some((lhs, rhs)),
    })
}

/// Linearity in `h` on single-valued models:
/// `div((a h1 + b h2) grad g) = a div(h1 grad g) + b div(h2 grad g)`.
pub fn verify_linearity_in_h(
    dom: &Domain,
    h1: &ScalarField,
    h2: &ScalarField,
    coeffs: (f64, f64),
    g: &ScalarField,
) -> Result<CalculusRuleReport> {
    if !dom.supports_unique_extraction() {
        return Ok(CalculusRuleReport::skipped(
            "linearity_in_h",
            "requires single-valued pairings",
        ));
    }
    let (a, b) = coeffs;
    let combined = ScalarField::new(
        h1.values().iter().zip(h2.values()).map(|(x, y)| a * x + b * y).collect(),
    )?;
    let lhs = extract_divergence(dom, &combined, g)?;
    let m1 = extract_divergence(dom, h1, g)?;
    let m2 = extract_divergence(dom, h2, g)?;
    let rhs = SignedMeasure::from_densities(
        m1.densities().iter().zip(m2.densities()).map(|(x, y)| a * x + b * y).collect(),
    );
    let strict = dom.strict_interior(dom.omega());
    Ok(CalculusRuleReport {
        rule: "linearity_in_h".into(),
        max_gap: density_gap(&lhs, &rhs, &strict),
        tolerance: RULE_TOL,
        skipped: None,
        sides: Some((lhs, rhs)),
    })
}

/// Linearity in `g` on Hilbertian models:
/// `div(h grad(b1 g1 + b2 g2)) = b1 div(h grad g1) + b2 div(h grad g2)`.
pub fn verify_linearity_in_g(
    dom: &Domain,
    h: &ScalarField,
    g1: &ScalarField,
    g2: &ScalarField,
    coeffs: (f64, f64),
) -> Result<CalculusRuleReport> {
    if !dom.is_hilbertian_model() {
        return Ok(CalculusRuleReport::skipped(
            "linearity_in_g",
            "requires a Hilbertian model",
        ));
    }
    let (b1, b2) = coeffs;
    let combined =
        ScalarField::new(g1.values().iter().zip(g2.values()).map(|(x, y)| b1 * x + b2 * y).collect())?;
    let lhs = extract_divergence(dom, h, &combined)?;
    let m1 = extract_divergence(dom, h, g1)?;
    let m2 = extract_divergence(dom, h, g2)?;
    let rhs = SignedMeasure::from_densities(
        m1.densities().iter().zip(m2.densities()).map(|(x, y)| b1 * x + b2 * y).collect(),
    );
    let strict = dom.strict_interior(dom.omega());
    Ok(CalculusRuleReport {
        rule: "linearity_in_g".into(),
        max_gap: density_gap(&lhs, &rhs, &strict),
        tolerance: RULE_TOL,
        skipped: None,
        sides: Some((lhs, rhs)),
    })
}

/// Leibniz rule for gradients on Hilbertian models:
/// `div(h grad(g1 g2)) = div(h g1 grad g2) + div(h g2 grad g1)`.
/// The product field carries its exact Leibniz covector.
pub fn verify_leibniz_gradients(
    grid: &GridDomain,
    h: &ScalarField,
    g1: &GridFunction,
    g2: &GridFunction,
) -> Result<CalculusRuleReport> {
    if !grid.norm().is_quadratic() {
        return Ok(CalculusRuleReport::skipped(
            "leibniz_gradients",
            "requires a Hilbertian model",
        ));
    }
    let prod = g1.product(g2);
    let lhs = GridPairing::new(grid, h, &prod)?.extract()?;
    let hg1 =
        ScalarField::new((0..grid.site_count()).map(|i| h.get(i) * g1.values.get(i)).collect())?;
    let hg2 =
        ScalarField::new((0..grid.site_count()).map(|i| h.get(i) * g2.values.get(i)).collect())?;
    let m1 = GridPairing::new(grid, &hg1, g2)?.extract()?;
    let m2 = GridPairing::new(grid, &hg2, g1)?.extract()?;
    let rhs = SignedMeasure::from_densities(
        m1.densities().iter().zip(m2.densities()).map(|(x, y)| x + y).collect(),
    );
    let strict = grid.strict_interior(grid.omega());
    Ok(CalculusRuleReport {
        rule: "leibniz_gradients".into(),
        max_gap: density_gap(&lhs, &rhs, &strict),
        tolerance: RULE_TOL,
        skipped: None,
        sides: Some((lhs, rhs)),
    })
}

/// Runs the whole rule battery on one dataset: chain rule (all models),
/// Leibniz for the divergence, linearity in the weight, local-to-global
/// gluing (single-valued models), and linearity in the function plus the
/// Leibniz rule for gradients (Hilbertian models). Rules whose hypotheses
/// the model does not meet come back marked skipped.
#[allow(clippy::too_many_arguments)]
pub fn verify_divergence_calculus(
    grid: &GridDomain,
    h: &ScalarField,
    h1: &GridFunction,
    h2: &ScalarField,
    g: &GridFunction,
    g1: &GridFunction,
    g2: &GridFunction,
    phi: &ScalarMap,
    testfns: &[ScalarField],
    cover: (&Mask, &Mask),
) -> Result<Vec<CalculusRuleReport>> {
    let dom = Domain::Grid(grid.clone());
    let mut reports = vec![verify_chain_rule_divergence(grid, h, g, phi, testfns)?];
    reports.push(verify_leibniz_divergence(grid, h1, h2, g)?);
    reports.push(verify_linearity_in_h(&dom, &h1.values, h2, (2.0, -0.7), &g.values)?);
    reports.push(verify_local_to_global(&dom, h, &g.values, cover.0, cover.1)?);
    reports.push(verify_linearity_in_g(&dom, h, &g1.values, &g2.values, (1.5, -2.0))?);
    reports.push(verify_leibniz_gradients(grid, h, g1, g2)?);
    Ok(reports)
}

/// Local-to-global gluing on single-valued models: measures extracted on an
/// overlapping cover agree on overlaps and reassemble the global measure.
pub fn verify_local_to_global(
    dom: &Domain,
    h: &ScalarField,
    g: &ScalarField,
    omega_a: &Mask,
    omega_b: &Mask,
) -> Result<CalculusRuleReport> {
    if !dom.supports_unique_extraction() {
        return Ok(CalculusRuleReport::skipped(
            "local_to_global",
            "requires single-valued pairings",
        ));
    }
    let strict_global = dom.strict_interior(dom.omega());
    let strict_a = dom.strict_interior(omega_a);
    let strict_b = dom.strict_interior(omega_b);
    for i in 0..dom.site_count() {
        if strict_global[i] && !strict_a[i] && !strict_b[i] {
            return Err(Error::InvalidDomain(
                "cover does not overlap enough: a strict-interior site is seen by neither part"
                    .into(),
            ));
        }
    }
    let (mu_a, mu_b, global) = match dom {
        Domain::Grid(grid) => {
            let gg = GridFunction::from_values(grid, g.clone())?;
            (
                GridPairing::with_omega(grid, h, &gg, omega_a.clone())?.extract()?,
                GridPairing::with_omega(grid, h, &gg, omega_b.clone())?.extract()?,
                GridPairing::new(grid, h, &gg)?.extract()?,
            )
        }
        Domain::Graph(graph) => (
            GraphPairing::with_omega(graph, h, g, omega_a.clone())?.extract()?,
            GraphPairing::with_omega(graph, h, g, omega_b.clone())?.extract()?,
            GraphPairing::new(graph, h, g)?.extract()?,
        ),
    };
    let scale = 1.0 + global.densities().iter().fold(0.0f64, |a, &d| a.max(d.abs()));
    let mut gap = 0.0f64;
    // consistency on the overlap
    for i in 0..dom.site_count() {
        if strict_a[i] && strict_b[i] {
            gap = gap.max((mu_a.density(i) - mu_b.density(i)).abs() / scale);
        }
    }
    // glued reconstruction
    for i in 0..dom.site_count() {
        if strict_global[i] {
            let glued = if strict_a[i] { mu_a.density(i) } else { mu_b.density(i) };
            gap = gap.max((glued - global.density(i)).abs() / scale);
        }
    }
    Ok(CalculusRuleReport {
        rule: "local_to_global".into(),
        max_gap: gap,
        tolerance: RULE_TOL,
        skipped: None,
        sides: None,
    })
}
