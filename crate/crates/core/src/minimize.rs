//! p-energy functionals, Dirichlet minimization and certification of
//! minimizers, subminimizers and superminimizers.
//!
//! The energy is `E_p(g) = sum_{x in Omega} |Dg|_w(x)^p m(x) / p` with the
//! ring of the subdomain carrying hard boundary constraints. A field is
//! certified as a minimizer when for every test function `f` the one-sided
//! sums `sum D±f(grad g) |Dg|^{p-2} m` bracket zero; sub/superminimizers are
//! certified on sign-constrained test families, plus a sign check of the
//! extracted divergence measure on models where it is unique.

use crate::dcalc::ZERO_MODULUS;
use crate::divergence::{DivergenceInterval, GraphPairing, GridPairing};
use crate::dcalc::GridFunction;
use crate::space::{Domain, Mask, ScalarField};
use crate::{Error, Result};

/// Energy exponent, subdomain and boundary data.
#[derive(Clone, Debug)]
pub struct EnergySpec {
    pub p: f64,
    pub omega: Mask,
    /// Values read on the ring `omega \ strict_interior(omega)`.
    pub boundary: ScalarField,
}

impl EnergySpec {
    pub fn new(dom: &Domain, p: f64, boundary: ScalarField) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::ExponentRange(p));
        }
        if boundary.len() != dom.site_count() {
            return Err(Error::FieldLength { expected: dom.site_count(), got: boundary.len() });
        }
        Ok(EnergySpec { p, omega: dom.omega().clone(), boundary })
    }

    pub fn with_omega(mut self, omega: Mask) -> Self {
        self.omega = omega;
        self
    }

    /// The constrained ring: subdomain sites outside the strict interior.
    pub fn ring(&self, dom: &Domain) -> Mask {
        let strict = dom.strict_interior(&self.omega);
        self.omega.iter().zip(&strict).map(|(&o, &s)| o && !s).collect()
    }

    /// Errors unless `g` matches the boundary data on the ring to 1e-12.
    pub fn check_boundary(&self, dom: &Domain, g: &ScalarField) -> Result<()> {
        let ring = self.ring(dom);
        for site in 0..dom.site_count() {
            if ring[site] && (g.get(site) - self.boundary.get(site)).abs() > 1e-12 {
                return Err(Error::BoundaryMismatch {
                    site,
                    got: g.get(site),
                    expected: self.boundary.get(site),
                });
            }
        }
        Ok(())
    }
}

/// `sum_{x in Omega} |Dg|_w(x)^p m(x) / p`.
pub fn p_energy(dom: &Domain, spec: &EnergySpec, g: &ScalarField) -> Result<f64> {
    spec.check_boundary(dom, g)?;
    energy_unchecked(dom, &spec.omega, spec.p, g)
}

fn energy_unchecked(dom: &Domain, omega: &Mask, p: f64, g: &ScalarField) -> Result<f64> {
    let modulus = dom.modulus(g)?;
    Ok((0..dom.site_count())
        .filter(|&i| omega[i])
        .map(|i| modulus.get(i).powf(p) * dom.measure(i))
        .sum::<f64>()
        / p)
}

/// `|Dg|^{p-2}` with the hard-zero convention on `{|Dg|_w = 0}`.
pub fn modulus_weight(dom: &Domain, g: &ScalarField, p: f64) -> Result<ScalarField> {
    let modulus = dom.modulus(g)?;
    ScalarField::new(
        modulus
            .values()
            .iter()
            .map(|&m| if m <= ZERO_MODULUS { 0.0 } else { m.powf(p - 2.0) })
            .collect(),
    )
}

/// Certification outcome.
#[derive(Clone, Debug)]
pub struct CertifyReport {
    pub pass: bool,
    /// Worst violation of the one-sided integral inequalities.
    pub worst_margin: f64,
    pub tolerance: f64,
    pub worst_testfn: Option<usize>,
    /// Worst sign violation of the extracted measure, on models where the
    /// divergence is unique (the PDE-side check).
    pub measure_sign_defect: Option<f64>,
}

fn certify_tolerance(energy: f64) -> f64 {
    1e-6 * energy.abs().max(1.0)
}

fn pairing_intervals(
    dom: &Domain,
    weight: &ScalarField,
    g: &ScalarField,
    omega: &Mask,
    testfns: &[ScalarField],
) -> Result<Vec<DivergenceInterval>> {
    match dom {
        Domain::Grid(grid) => {
            let gg = GridFunction::from_values(grid, g.clone())?;
            let pairing = GridPairing::with_omega(grid, weight, &gg, omega.clone())?;
            testfns.iter().map(|f| pairing.bounds(f)).collect()
        }
        Domain::Graph(graph) => {
            let pairing = GraphPairing::with_omega(graph, weight, g, omega.clone())?;
            testfns.iter().map(|f| pairing.bounds(f)).collect()
        }
    }
}

/// PASS iff for every test `f` the interval `[-A(f), -B(f)]` of
/// `div(|Dg|^{p-2} grad g)` contains zero within tolerance; equivalently
/// `sum D+f |Dg|^{p-2} m >= -tol` and `sum D-f |Dg|^{p-2} m <= tol`.
pub fn certify_minimizer(
    dom: &Domain,
    spec: &EnergySpec,
    g: &ScalarField,
    testfns: &[ScalarField],
) -> Result<CertifyReport> {
    spec.check_boundary(dom, g)?;
    let weight = modulus_weight(dom, g, spec.p)?;
    let tol = certify_tolerance(energy_unchecked(dom, &spec.omega, spec.p, g)?);
    let mut worst = 0.0f64;
    let mut worst_idx = None;
    for (k, iv) in pairing_intervals(dom, &weight, g, &spec.omega, testfns)?.iter().enumerate() {
        let margin = iv.lo.max(-iv.hi).max(0.0);
        if margin > worst {
            worst = margin;
            worst_idx = Some(k);
        }
    }
    Ok(CertifyReport {
        pass: worst <= tol,
        worst_margin: worst,
        tolerance: tol,
        worst_testfn: worst_idx,
        measure_sign_defect: None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Super,
    Sub,
}

/// One-sided certification on a sign-constrained family: nonnegative test
/// functions for superminimizers, nonpositive for subminimizers. On models
/// with a unique divergence the extracted measure must also have the right
/// sign (`<= 0` for super, `>= 0` for sub) sitewise.
pub fn certify_one_sided(
    dom: &Domain,
    spec: &EnergySpec,
    g: &ScalarField,
    testfns: &[ScalarField],
    side: Side,
) -> Result<CertifyReport> {
    spec.check_boundary(dom, g)?;
    for f in testfns {
        let ok = match side {
            Side::Super => f.values().iter().all(|&v| v >= 0.0),
            Side::Sub => f.values().iter().all(|&v| v <= 0.0),
        };
        if !ok {
            return Err(Error::InvalidInput(
                "test family must be sign-constrained for one-sided certification".into(),
            ));
        }
    }
    let weight = modulus_weight(dom, g, spec.p)?;
    let tol = certify_tolerance(energy_unchecked(dom, &spec.omega, spec.p, g)?);
    // Both sides reduce to sum D+ f |Dg|^{p-2} m >= -tol on their family,
    // i.e. the lower interval end -A(f) stays below tol.
    let mut worst = 0.0f64;
    let mut worst_idx = None;
    for (k, iv) in pairing_intervals(dom, &weight, g, &spec.omega, testfns)?.iter().enumerate() {
        let margin = iv.lo.max(0.0);
        if margin > worst {
            worst = margin;
            worst_idx = Some(k);
        }
    }
    let mut measure_sign_defect = None;
    let mut measure_ok = true;
    if dom.supports_unique_extraction() {
        let mu = crate::divergence::extract_divergence(dom, &weight, g)?;
        let strict = dom.strict_interior(&spec.omega);
        let scale =
            1.0 + mu.densities().iter().fold(0.0f64, |a, &d| a.max(d.abs()));
        let defect = (0..dom.site_count())
            .filter(|&i| strict[i])
            .map(|i| match side {
                Side::Super => mu.density(i).max(0.0),
                Side::Sub => (-mu.density(i)).max(0.0),
            })
            .fold(0.0, f64::max);
        measure_sign_defect = Some(defect);
        // The defect is a density; the pairing tolerance expressed as a
        // density bound adds tol / m_min (a solver output carries residual
        // noise of exactly that size on its hat measures).
        let m_min = (0..dom.site_count())
            .filter(|&i| strict[i])
            .map(|i| dom.measure(i))
            .fold(f64::INFINITY, f64::min);
        measure_ok = defect <= 1e-7 * scale + tol / m_min;
    }
    Ok(CertifyReport {
        pass: worst <= tol && measure_ok,
        worst_margin: worst,
        tolerance: tol,
        worst_testfn: worst_idx,
        measure_sign_defect,
    })
}

pub fn certify_superminimizer(
    dom: &Domain,
    spec: &EnergySpec,
    g: &ScalarField,
    nonneg_testfns: &[ScalarField],
) -> Result<CertifyReport> {
    certify_one_sided(dom, spec, g, nonneg_testfns, Side::Super)
}

pub fn certify_subminimizer(
    dom: &Domain,
    spec: &EnergySpec,
    g: &ScalarField,
    nonpos_testfns: &[ScalarField],
) -> Result<CertifyReport> {
    certify_one_sided(dom, spec, g, nonpos_testfns, Side::Sub)
}

/// One-sided difference quotients of `eps -> E_p(g + eps f)`; the positive
/// branch must be nonincreasing along the schedule (convexity of the
/// energy), and its last value estimates `sum D+f |Dg|^{p-2} m`.
#[derive(Clone, Debug)]
pub struct PerturbationTrace {
    pub plus: f64,
    pub minus: f64,
    pub plus_quotients: Vec<f64>,
    pub minus_quotients: Vec<f64>,
}

pub fn energy_perturbation_oracle(
    dom: &Domain,
    spec: &EnergySpec,
    g: &ScalarField,
    f: &ScalarField,
    schedule: &crate::dcalc::EpsSchedule,
) -> Result<PerturbationTrace> {
    spec.check_boundary(dom, g)?;
    let strict = dom.strict_interior(&spec.omega);
    for site in 0..dom.site_count() {
        if f.get(site) != 0.0 && !strict[site] {
            return Err(Error::SupportViolation);
        }
    }
    let base = energy_unchecked(dom, &spec.omega, spec.p, g)?;
    let scale = base.abs().max(1.0);
    let mut plus_quotients = Vec::new();
    let mut minus_quotients = Vec::new();
    for &eps in schedule.values() {
        let up = energy_unchecked(dom, &spec.omega, spec.p, &g.axpy(eps, f))?;
        let dn = energy_unchecked(dom, &spec.omega, spec.p, &g.axpy(-eps, f))?;
        plus_quotients.push((up - base) / eps);
        minus_quotients.push((dn - base) / (-eps));
    }
    // The energies are evaluated independently, so each quotient carries a
    // rounding floor of eps_machine * |E| / eps on top of the 1e-9 slack.
    for (w, e) in plus_quotients.windows(2).zip(schedule.values().windows(2)) {
        let noise = 8.0 * f64::EPSILON * scale / e[1];
        if w[1] > w[0] + 1e-9 * scale + noise {
            return Err(Error::NonMonotoneQuotient(w[1] - w[0]));
        }
    }
    Ok(PerturbationTrace {
        plus: *plus_quotients.last().expect("nonempty"),
        minus: *minus_quotients.last().expect("nonempty"),
        plus_quotients,
        minus_quotients,
    })
}

/// Solver configuration.
#[derive(Clone, Debug)]
pub struct SolverOptions {
    /// Smoothing levels for the nonsmooth path; the modulus is replaced by
    /// `sqrt(|Dg|^2 + delta^2)` and re-solved at each level.
    pub delta_schedule: Vec<f64>,
    pub max_iterations: usize,
    /// Unsmoothed first-order residual target; `None` resolves to
    /// `1e-8 * max(E,1) / h` (grids) or `1e-8 * max(E,1)` (graphs).
    pub residual_tol: Option<f64>,
    /// Relative residual target of the conjugate-gradient path.
    pub cg_tol: f64,
    /// Seed of the test family used for the report's certificates.
    pub certify_seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            delta_schedule: (2..=8).map(|k| 10f64.powi(-k)).collect(),
            max_iterations: 4000,
            residual_tol: None,
            cg_tol: 1e-12,
            certify_seed: 0,
        }
    }
}

impl SolverOptions {
    /// Geometric delta schedule from `start` down to `floor` (factor 10).
    pub fn with_delta_range(mut self, start: f64, floor: f64) -> Self {
        let mut schedule = Vec::new();
        let mut d = start.max(floor);
        while d > floor {
            schedule.push(d);
            d *= 0.1;
        }
        schedule.push(floor);
        self.delta_schedule = schedule;
        self
    }
}

/// Solver outcome. `energy_trace` is the per-iteration energy of the level
/// being solved (levels only lower the smoothed energy, so the whole trace
/// is nonincreasing). `certification` holds the three certificates of the
/// returned field against the default hat-plus-bumps family.
#[derive(Clone, Debug)]
pub struct MinimizeReport {
    pub minimizer: ScalarField,
    pub final_energy: f64,
    pub iterations: usize,
    pub first_order_residual: f64,
    pub converged: bool,
    pub energy_trace: Vec<f64>,
    pub certification: CertificationVerdicts,
}

/// Certification verdicts of one field: minimizer / superminimizer /
/// subminimizer.
#[derive(Clone, Debug)]
pub struct CertificationVerdicts {
    pub minimizer: CertifyReport,
    pub superminimizer: CertifyReport,
    pub subminimizer: CertifyReport,
}

/// All three certificates against a given nonnegative test family.
pub fn certify_all(
    dom: &Domain,
    spec: &EnergySpec,
    g: &ScalarField,
    nonneg_testfns: &[ScalarField],
) -> Result<CertificationVerdicts> {
    let neg: Vec<ScalarField> = nonneg_testfns.iter().map(|f| f.scale(-1.0)).collect();
    Ok(CertificationVerdicts {
        minimizer: certify_minimizer(dom, spec, g, nonneg_testfns)?,
        superminimizer: certify_superminimizer(dom, spec, g, nonneg_testfns)?,
        subminimizer: certify_subminimizer(dom, spec, g, &neg)?,
    })
}

struct Problem<'a> {
    dom: &'a Domain,
    omega: Mask,
    unknowns: Vec<usize>,
    p: f64,
}

impl<'a> Problem<'a> {
    fn new(dom: &'a Domain, spec: &EnergySpec) -> Result<Self> {
        if let Domain::Grid(grid) = dom {
            for site in 0..grid.site_count() {
                if spec.omega[site] && grid.is_grid_boundary(site) {
                    return Err(Error::InvalidDomain(
                        "minimization subdomain must avoid the grid boundary".into(),
                    ));
                }
            }
        }
        let strict = dom.strict_interior(&spec.omega);
        let unknowns: Vec<usize> = (0..dom.site_count()).filter(|&i| strict[i]).collect();
        if unknowns.is_empty() {
            return Err(Error::EmptyStrictInterior);
        }
        Ok(Problem { dom, omega: spec.omega.clone(), unknowns, p: spec.p })
    }

    fn smoothed_energy(&self, g: &ScalarField, delta: f64) -> Result<f64> {
        let modulus = self.dom.modulus(g)?;
        Ok((0..self.dom.site_count())
            .filter(|&i| self.omega[i])
            .map(|i| {
                let m2 = modulus.get(i) * modulus.get(i) + delta * delta;
                m2.powf(0.5 * self.p) * self.dom.measure(i)
            })
            .sum::<f64>()
            / self.p)
    }

    /// Gradient of the smoothed energy with respect to the unknowns.
    fn smoothed_gradient(&self, g: &ScalarField, delta: f64) -> Result<Vec<f64>> {
        match self.dom {
            Domain::Grid(grid) => {
                let cov = grid.differential(g)?;
                let n = grid.site_count();
                let dim = grid.dim();
                // per-site K * m * w, with w the gradient of 0.5|.|_*^2
                // (averaged over extreme points when multivalued)
                let mut kw = vec![0.0; n * dim];
                for site in 0..n {
                    if !self.omega[site] {
                        continue;
                    }
                    let xi = cov.at(site);
                    if xi.iter().all(|&c| c == 0.0) && self.p >= 2.0 {
                        continue;
                    }
                    let modulus = grid.norm().eval_dual(xi)?;
                    let k = (modulus * modulus + delta * delta).powf(0.5 * self.p - 1.0);
                    let set = grid.norm().gradient_set(xi)?;
                    let pts = set.points();
                    let scale = k * grid.measure(site) / pts.len() as f64;
                    for w in pts {
                        for d in 0..dim {
                            kw[site * dim + d] += scale * w[d];
                        }
                    }
                }
                let two_h = 2.0 * grid.spacing();
                let grad = self
                    .unknowns
                    .iter()
                    .map(|&z| {
                        let mut acc = 0.0;
                        for axis in 0..dim {
                            for step in [-1isize, 1] {
                                if let Some(y) = grid.neighbor(z, axis, step) {
                                    if self.omega[y] {
                                        // d(Dg(y))_axis / d g(z) = -step/(2h)
                                        acc += kw[y * dim + axis] * (-(step as f64)) / two_h;
                                    }
                                }
                            }
                        }
                        acc
                    })
                    .collect();
                Ok(grad)
            }
            Domain::Graph(graph) => {
                if graph.p_model() != 2.0 {
                    return Err(Error::InvalidInput(
                        "graph solver supports modulus exponent 2".into(),
                    ));
                }
                let modulus = graph.modulus(g)?;
                let n = graph.vertex_count();
                let mut k = vec![0.0; n];
                for x in 0..n {
                    if self.omega[x] {
                        let m2 = modulus.get(x) * modulus.get(x) + delta * delta;
                        k[x] = m2.powf(0.5 * self.p - 1.0) * graph.measure(x);
                    }
                }
                let grad = self
                    .unknowns
                    .iter()
                    .map(|&z| {
                        let mut acc = 0.0;
                        if self.omega[z] {
                            for &(y, c) in graph.neighbors(z) {
                                acc -= k[z] * c * (g.get(y) - g.get(z));
                            }
                        }
                        for &(y, c) in graph.neighbors(z) {
                            if self.omega[y] {
                                acc += k[y] * c * (g.get(z) - g.get(y));
                            }
                        }
                        acc
                    })
                    .collect();
                Ok(grad)
            }
        }
    }

    fn set_unknowns(&self, base: &ScalarField, u: &[f64]) -> ScalarField {
        let mut v = base.values().to_vec();
        for (k, &z) in self.unknowns.iter().enumerate() {
            v[z] = u[k];
        }
        ScalarField::new(v).expect("finite")
    }

    fn get_unknowns(&self, g: &ScalarField) -> Vec<f64> {
        self.unknowns.iter().map(|&z| g.get(z)).collect()
    }

    /// Whether the p=2 stationarity system is linear on this model.
    fn direct_path(&self) -> bool {
        self.p == 2.0
            && match self.dom {
                Domain::Grid(grid) => grid.norm().is_quadratic(),
                Domain::Graph(graph) => graph.p_model() == 2.0,
            }
    }
}

/// Minimizes the p-energy over fields matching `init` outside the strict
/// interior of the subdomain. Quadratic cases (p = 2 with an inner-product
/// norm, or graph models) are solved by conjugate gradients on the linear
/// stationarity system; general exponents run smoothed descent over the
/// delta schedule with a final unsmoothed certification residual.
pub fn minimize_p_energy(
    dom: &Domain,
    spec: &EnergySpec,
    init: &ScalarField,
    options: &SolverOptions,
) -> Result<MinimizeReport> {
    spec.check_boundary(dom, init)?;
    let problem = Problem::new(dom, spec)?;
    let mut trace = Vec::new();
    let mut iterations = 0usize;
    let mut current = init.clone();

    if problem.direct_path() {
        let (g, its) = solve_linear(&problem, init, None, options.cg_tol)?;
        iterations = its;
        trace.push(energy_unchecked(dom, &spec.omega, spec.p, init)?);
        trace.push(energy_unchecked(dom, &spec.omega, spec.p, &g)?);
        current = g;
    } else {
        for (level, &delta) in options.delta_schedule.iter().enumerate() {
            let last = level + 1 == options.delta_schedule.len();
            let level_tol = if last {
                1e-12
            } else {
                1e-4 * delta
            };
            let (g, its, mut level_trace) =
                descend(&problem, &current, delta, level_tol, options.max_iterations)?;
            iterations += its;
            trace.append(&mut level_trace);
            current = g;
        }
    }

    // keep the better of init and solver output in unsmoothed energy
    let e_init = energy_unchecked(dom, &spec.omega, spec.p, init)?;
    let mut final_energy = energy_unchecked(dom, &spec.omega, spec.p, &current)?;
    if final_energy > e_init {
        current = init.clone();
        final_energy = e_init;
    }

    let residual = first_order_residual(dom, spec, &current)?;
    let default_tol = match dom {
        Domain::Grid(grid) => 1e-8 * final_energy.max(1.0) / grid.spacing(),
        Domain::Graph(_) => 1e-8 * final_energy.max(1.0),
    };
    let tol = options.residual_tol.unwrap_or(default_tol);
    let fns = dom.make_test_functions(&spec.omega, 8, options.certify_seed)?;
    let certification = certify_all(dom, spec, &current, &fns)?;
    Ok(MinimizeReport {
        minimizer: current,
        final_energy,
        iterations,
        first_order_residual: residual,
        converged: residual <= tol,
        energy_trace: trace,
        certification,
    })
}

/// Worst hat-certificate margin of the unsmoothed energy: zero exactly when
/// the field is first-order stationary against every hat direction.
pub fn first_order_residual(dom: &Domain, spec: &EnergySpec, g: &ScalarField) -> Result<f64> {
    let weight = modulus_weight(dom, g, spec.p)?;
    let strict = dom.strict_interior(&spec.omega);
    let mut worst = 0.0f64;
    match dom {
        Domain::Grid(grid) => {
            let gg = GridFunction::from_values(grid, g.clone())?;
            let pairing = GridPairing::with_omega(grid, &weight, &gg, spec.omega.clone())?;
            for site in 0..dom.site_count() {
                if strict[site] {
                    let iv = pairing.hat_bounds(site)?;
                    worst = worst.max(iv.lo.max(-iv.hi).max(0.0));
                }
            }
        }
        Domain::Graph(graph) => {
            let pairing = GraphPairing::with_omega(graph, &weight, g, spec.omega.clone())?;
            for site in 0..dom.site_count() {
                if strict[site] {
                    let iv = pairing.hat_bounds(site)?;
                    worst = worst.max(iv.lo.max(-iv.hi).max(0.0));
                }
            }
        }
    }
    Ok(worst)
}

/// Conjugate gradients on the linear stationarity system of the quadratic
/// path: finds the field whose energy gradient at the unknowns equals
/// `target` (zero for plain minimization). The operator is applied
/// matrix-free through the energy gradient, which is affine in the field
/// values.
fn solve_linear(
    problem: &Problem,
    init: &ScalarField,
    target: Option<&[f64]>,
    cg_tol: f64,
) -> Result<(ScalarField, usize)> {
    let zero_fixed = {
        // fixed values kept, unknowns zeroed: the constant part
        let u0 = vec![0.0; problem.unknowns.len()];
        problem.set_unknowns(init, &u0)
    };
    let c = problem.smoothed_gradient(&zero_fixed, 0.0)?;
    let all_zero = ScalarField::constant(init.len(), 0.0);
    let apply = |v: &[f64]| -> Result<Vec<f64>> {
        let field = problem.set_unknowns(&all_zero, v);
        problem.smoothed_gradient(&field, 0.0)
    };
    let nb: f64 = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut x = problem.get_unknowns(init);
    let ax = apply(&x)?;
    let mut r: Vec<f64> = match target {
        Some(t) => c.iter().zip(&ax).zip(t).map(|((ci, ai), ti)| ti - ci - ai).collect(),
        None => c.iter().zip(&ax).map(|(ci, ai)| -ci - ai).collect(),
    };
    let mut p = r.clone();
    let mut rs: f64 = r.iter().map(|v| v * v).sum();
    let target = (cg_tol * nb.max(1.0)).powi(2);
    let maxit = 20 * problem.unknowns.len() + 100;
    let mut its = 0;
    while rs > target && its < maxit {
        let ap = apply(&p)?;
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            break;
        }
        let alpha = rs / pap;
        for k in 0..x.len() {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rs_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rs_new / rs;
        for k in 0..p.len() {
            p[k] = r[k] + beta * p[k];
        }
        rs = rs_new;
        its += 1;
    }
    Ok((problem.set_unknowns(init, &x), its))
}

/// Solves `div(grad g) = -source * m` with the given boundary values: the
/// field whose hat pairings equal `source(z) m(z)`, so the extracted
/// divergence has density `-source`. Linear (p = 2) models only.
pub fn solve_poisson(
    dom: &Domain,
    source: &ScalarField,
    boundary: &ScalarField,
) -> Result<ScalarField> {
    let spec = EnergySpec::new(dom, 2.0, boundary.clone())?;
    let problem = Problem::new(dom, &spec)?;
    if !problem.direct_path() {
        return Err(Error::InvalidInput(
            "source solve needs a linear stationarity system (p = 2, inner-product norm)".into(),
        ));
    }
    let target: Vec<f64> =
        problem.unknowns.iter().map(|&z| source.get(z) * dom.measure(z)).collect();
    let (g, _) = solve_linear(&problem, boundary, Some(&target), 1e-13)?;
    Ok(g)
}

/// Monotone backtracking descent on the smoothed energy at one level.
fn descend(
    problem: &Problem,
    start: &ScalarField,
    delta: f64,
    grad_tol: f64,
    max_iterations: usize,
) -> Result<(ScalarField, usize, Vec<f64>)> {
    let mut g = start.clone();
    let mut u = problem.get_unknowns(&g);
    let mut energy = problem.smoothed_energy(&g, delta)?;
    let mut trace = vec![energy];
    let mut step = 1.0f64;
    let mut its = 0usize;
    while its < max_iterations {
        let grad = problem.smoothed_gradient(&g, delta)?;
        let gnorm_inf = grad.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        if gnorm_inf <= grad_tol {
            break;
        }
        let gsq: f64 = grad.iter().map(|v| v * v).sum();
        let mut t = step;
        let mut accepted = false;
        while t > 1e-20 {
            let cand: Vec<f64> = u.iter().zip(&grad).map(|(x, d)| x - t * d).collect();
            let cand_field = problem.set_unknowns(&g, &cand);
            let cand_energy = problem.smoothed_energy(&cand_field, delta)?;
            if cand_energy <= energy - 1e-4 * t * gsq {
                u = cand;
                g = cand_field;
                energy = cand_energy;
                step = (t * 2.0).min(1e6);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        its += 1;
        trace.push(energy);
        if !accepted {
            break;
        }
    }
    Ok((g, its, trace))
}
