//! Finite metric measure models: normed grids over boxes in `R^d` and
//! weighted graphs, with site measures, subdomain masks, discrete
//! differentials, moduli and compactly supported test families.

use crate::norm::NormSpec;
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Per-site boolean mask.
pub type Mask = Vec<bool>;

/// Real values on every site of a domain.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("scalar field must be finite".into()));
        }
        Ok(ScalarField { values })
    }

    pub fn constant(len: usize, c: f64) -> Self {
        ScalarField { values: vec![c; len] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// Componentwise `self + t * other`.
    pub fn axpy(&self, t: f64, other: &ScalarField) -> ScalarField {
        ScalarField {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + t * b).collect(),
        }
    }

    pub fn scale(&self, t: f64) -> ScalarField {
        ScalarField { values: self.values.iter().map(|a| t * a).collect() }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField { values: self.values.iter().map(|&a| f(a)).collect() }
    }
}

/// Per-site covectors in `R^dim` (grid models only).
#[derive(Clone, Debug)]
pub struct CovectorField {
    dim: usize,
    data: Vec<f64>,
}

impl CovectorField {
    pub fn zeros(dim: usize, sites: usize) -> Self {
        CovectorField { dim, data: vec![0.0; dim * sites] }
    }

    pub fn from_rows(dim: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut data = Vec::with_capacity(dim * rows.len());
        for r in &rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(CovectorField { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sites(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn at(&self, site: usize) -> &[f64] {
        &self.data[site * self.dim..(site + 1) * self.dim]
    }

    pub fn at_mut(&mut self, site: usize) -> &mut [f64] {
        &mut self.data[site * self.dim..(site + 1) * self.dim]
    }

    /// Componentwise `self + t * other`.
    pub fn axpy(&self, t: f64, other: &CovectorField) -> CovectorField {
        CovectorField {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + t * b).collect(),
        }
    }

    pub fn scale(&self, t: f64) -> CovectorField {
        CovectorField { dim: self.dim, data: self.data.iter().map(|a| t * a).collect() }
    }
}

/// Per-site nonnegative values `|Df|_w`.
#[derive(Clone, Debug)]
pub struct ModulusField {
    values: Vec<f64>,
}

impl ModulusField {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }
}

/// A signed measure given by its density with respect to the site measure.
#[derive(Clone, Debug)]
pub struct SignedMeasure {
    densities: Vec<f64>,
}

impl SignedMeasure {
    pub fn zero(sites: usize) -> Self {
        SignedMeasure { densities: vec![0.0; sites] }
    }

    pub fn from_densities(densities: Vec<f64>) -> Self {
        SignedMeasure { densities }
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn density(&self, site: usize) -> f64 {
        self.densities[site]
    }

    pub fn density_mut(&mut self, site: usize) -> &mut f64 {
        &mut self.densities[site]
    }

    /// Measure of a single site, `density(x) * m(x)`.
    pub fn site_mass(&self, dom: &Domain, site: usize) -> f64 {
        self.densities[site] * dom.measure(site)
    }

    /// `integral of f d(mu) = sum f * density * m`.
    pub fn pair(&self, dom: &Domain, f: &ScalarField) -> f64 {
        f.values()
            .iter()
            .zip(&self.densities)
            .enumerate()
            .map(|(i, (fv, d))| fv * d * dom.measure(i))
            .sum()
    }
}

/// A normed grid over a box, with per-site density and a subdomain mask.
#[derive(Clone, Debug)]
pub struct GridDomain {
    dim: usize,
    shape: Vec<usize>,
    origin: Vec<f64>,
    spacing: f64,
    density: Vec<f64>,
    norm: NormSpec,
    omega: Mask,
    strides: Vec<usize>,
}

impl GridDomain {
    /// Uniform-density grid covering `extents` with spacing `h`. The default
    /// subdomain is the set of non-boundary sites.
    pub fn new(norm: NormSpec, extents: &[(f64, f64)], spacing: f64) -> Result<Self> {
        let dim = extents.len();
        if dim == 0 || dim != norm.dim() {
            return Err(Error::InvalidDomain(format!(
                "extents dimension {dim} does not match norm dimension {}",
                norm.dim()
            )));
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::InvalidDomain("spacing must be positive".into()));
        }
        let mut shape = Vec::with_capacity(dim);
        let mut origin = Vec::with_capacity(dim);
        for &(a, b) in extents {
            if !(b > a) {
                return Err(Error::InvalidDomain("empty extent".into()));
            }
            let n = ((b - a) / spacing).round() as usize + 1;
            if n < 2 {
                return Err(Error::InvalidDomain("extent shorter than one spacing".into()));
            }
            shape.push(n);
            origin.push(a);
        }
        let strides = row_major_strides(&shape);
        let sites: usize = shape.iter().product();
        let mut dom = GridDomain {
            dim,
            shape,
            origin,
            spacing,
            density: vec![1.0; sites],
            norm,
            omega: Vec::new(),
            strides,
        };
        dom.omega = (0..sites).map(|i| !dom.is_grid_boundary(i)).collect();
        Ok(dom)
    }

    /// Replaces the site density; values must be strictly positive.
    pub fn with_density(mut self, density: impl Fn(&[f64]) -> f64) -> Result<Self> {
        for i in 0..self.site_count() {
            let d = density(&self.coords(i));
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::InvalidDomain(format!("non-positive density at site {i}")));
            }
            self.density[i] = d;
        }
        Ok(self)
    }

    /// Replaces the subdomain mask.
    pub fn with_omega(mut self, omega: Mask) -> Result<Self> {
        if omega.len() != self.site_count() {
            return Err(Error::FieldLength { expected: self.site_count(), got: omega.len() });
        }
        if !omega.iter().any(|&b| b) {
            return Err(Error::InvalidDomain("empty subdomain".into()));
        }
        self.omega = omega;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn norm(&self) -> &NormSpec {
        &self.norm
    }

    pub fn omega(&self) -> &Mask {
        &self.omega
    }

    pub fn site_count(&self) -> usize {
        self.shape.iter().product()
    }

    /// `m(x) = h^dim * density(x)`.
    pub fn measure(&self, site: usize) -> f64 {
        self.spacing.powi(self.dim as i32) * self.density[site]
    }

    pub fn coords(&self, site: usize) -> Vec<f64> {
        let multi = self.multi_index(site);
        multi
            .iter()
            .zip(&self.origin)
            .map(|(&k, &o)| o + k as f64 * self.spacing)
            .collect()
    }

    pub fn multi_index(&self, site: usize) -> Vec<usize> {
        let mut rest = site;
        self.strides
            .iter()
            .map(|&s| {
                let k = rest / s;
                rest %= s;
                k
            })
            .collect()
    }

    pub fn site_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(&k, &s)| k * s).sum()
    }

    pub fn is_grid_boundary(&self, site: usize) -> bool {
        self.multi_index(site)
            .iter()
            .zip(&self.shape)
            .any(|(&k, &n)| k == 0 || k + 1 == n)
    }

    /// Neighbor `site +/- e_axis`, when inside the box.
    pub fn neighbor(&self, site: usize, axis: usize, step: isize) -> Option<usize> {
        let multi = self.multi_index(site);
        let k = multi[axis] as isize + step;
        if k < 0 || k as usize >= self.shape[axis] {
            None
        } else {
            Some((site as isize + step * self.strides[axis] as isize) as usize)
        }
    }

    /// A field evaluated from coordinates.
    pub fn field_from(&self, f: impl Fn(&[f64]) -> f64) -> ScalarField {
        ScalarField { values: (0..self.site_count()).map(|i| f(&self.coords(i))).collect() }
    }

    /// A covector field evaluated from coordinates.
    pub fn covectors_from(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> CovectorField {
        let mut cf = CovectorField::zeros(self.dim, self.site_count());
        for i in 0..self.site_count() {
            cf.at_mut(i).copy_from_slice(&f(&self.coords(i)));
        }
        cf
    }

    /// Central differences on stencil-complete sites, one-sided differences
    /// on the grid boundary.
    pub fn differential(&self, f: &ScalarField) -> Result<CovectorField> {
        self.check_field(f)?;
        let h = self.spacing;
        let mut out = CovectorField::zeros(self.dim, self.site_count());
        for site in 0..self.site_count() {
            let multi = self.multi_index(site);
            for axis in 0..self.dim {
                let k = multi[axis];
                let n = self.shape[axis];
                let s = self.strides[axis];
                let d = if k == 0 {
                    (f.get(site + s) - f.get(site)) / h
                } else if k + 1 == n {
                    (f.get(site) - f.get(site - s)) / h
                } else {
                    (f.get(site + s) - f.get(site - s)) / (2.0 * h)
                };
                out.at_mut(site)[axis] = d;
            }
        }
        Ok(out)
    }

    /// `|Df|_w(x) = |Df(x)|_*` for the grid norm.
    pub fn modulus(&self, f: &ScalarField) -> Result<ModulusField> {
        let cov = self.differential(f)?;
        self.modulus_of(&cov)
    }

    pub fn modulus_of(&self, cov: &CovectorField) -> Result<ModulusField> {
        let values = (0..self.site_count())
            .map(|i| self.norm.eval_dual(cov.at(i)))
            .collect::<Result<Vec<f64>>>()?;
        Ok(ModulusField { values })
    }

    /// Sites of `omega` whose full stencil lies in `omega` away from the
    /// grid boundary; the seat of test-function supports and of the solver
    /// unknowns.
    pub fn strict_interior(&self, omega: &Mask) -> Mask {
        (0..self.site_count())
            .map(|site| {
                omega[site]
                    && !self.is_grid_boundary(site)
                    && (0..self.dim).all(|axis| {
                        [-1, 1].iter().all(|&st| {
                            self.neighbor(site, axis, st).map(|n| omega[n]).unwrap_or(false)
                        })
                    })
            })
            .collect()
    }

    fn check_field(&self, f: &ScalarField) -> Result<()> {
        if f.len() != self.site_count() {
            Err(Error::FieldLength { expected: self.site_count(), got: f.len() })
        } else {
            Ok(())
        }
    }
}

/// A connected weighted graph with symmetric conductances and vertex
/// measures.
#[derive(Clone, Debug)]
pub struct GraphDomain {
    adjacency: Vec<Vec<(usize, f64)>>,
    measure: Vec<f64>,
    omega: Mask,
    p_model: f64,
}

impl GraphDomain {
    pub fn new(vertices: usize, edges: &[(usize, usize, f64)], measure: Vec<f64>) -> Result<Self> {
        if vertices == 0 {
            return Err(Error::InvalidDomain("graph needs at least one vertex".into()));
        }
        if measure.len() != vertices {
            return Err(Error::FieldLength { expected: vertices, got: measure.len() });
        }
        if measure.iter().any(|&m| !(m > 0.0)) {
            return Err(Error::InvalidDomain("vertex measures must be positive".into()));
        }
        let mut adjacency = vec![Vec::new(); vertices];
        for &(u, v, c) in edges {
            if u >= vertices || v >= vertices || u == v {
                return Err(Error::InvalidDomain(format!("bad edge ({u},{v})")));
            }
            if !(c > 0.0) {
                return Err(Error::InvalidDomain("conductances must be positive".into()));
            }
            adjacency[u].push((v, c));
            adjacency[v].push((u, c));
        }
        for nbrs in &mut adjacency {
            nbrs.sort_by_key(|&(v, _)| v);
        }
        // connectivity
        let mut seen = vec![false; vertices];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &(v, _) in &adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        if seen.iter().any(|&s| !s) {
            return Err(Error::InvalidDomain("graph is not connected".into()));
        }
        Ok(GraphDomain { adjacency, measure, omega: vec![true; vertices], p_model: 2.0 })
    }

    /// Rectangular lattice with unit conductances and unit measures. The
    /// default subdomain is the set of non-perimeter vertices, so the
    /// perimeter plays the role the grid boundary plays on grids.
    pub fn lattice(nx: usize, ny: usize) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::InvalidDomain("lattice needs at least 3x3 vertices".into()));
        }
        let id = |i: usize, j: usize| i * ny + j;
        let mut edges = Vec::new();
        for i in 0..nx {
            for j in 0..ny {
                if i + 1 < nx {
                    edges.push((id(i, j), id(i + 1, j), 1.0));
                }
                if j + 1 < ny {
                    edges.push((id(i, j), id(i, j + 1), 1.0));
                }
            }
        }
        let mut omega = vec![false; nx * ny];
        for i in 1..nx - 1 {
            for j in 1..ny - 1 {
                omega[id(i, j)] = true;
            }
        }
        GraphDomain::new(nx * ny, &edges, vec![1.0; nx * ny])?.with_omega(omega)
    }

    /// Sets the modulus exponent of the model (a property of the domain,
    /// independent of the energy exponent).
    pub fn with_p_model(mut self, p: f64) -> Result<Self> {
        if !(p >= 1.0) {
            return Err(Error::InvalidDomain("p_model must be >= 1".into()));
        }
        self.p_model = p;
        Ok(self)
    }

    pub fn with_omega(mut self, omega: Mask) -> Result<Self> {
        if omega.len() != self.vertex_count() {
            return Err(Error::FieldLength { expected: self.vertex_count(), got: omega.len() });
        }
        if !omega.iter().any(|&b| b) {
            return Err(Error::InvalidDomain("empty subdomain".into()));
        }
        self.omega = omega;
        Ok(self)
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn p_model(&self) -> f64 {
        self.p_model
    }

    pub fn omega(&self) -> &Mask {
        &self.omega
    }

    pub fn measure(&self, v: usize) -> f64 {
        self.measure[v]
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adjacency[v]
    }

    /// `|Df|_w(x) = (sum_y c(x,y) |f(y)-f(x)|^p_model)^(1/p_model)`.
    pub fn modulus(&self, f: &ScalarField) -> Result<ModulusField> {
        if f.len() != self.vertex_count() {
            return Err(Error::FieldLength { expected: self.vertex_count(), got: f.len() });
        }
        let pm = self.p_model;
        let values = (0..self.vertex_count())
            .map(|x| {
                let acc: f64 = self.adjacency[x]
                    .iter()
                    .map(|&(y, c)| c * (f.get(y) - f.get(x)).abs().powf(pm))
                    .sum();
                acc.powf(1.0 / pm)
            })
            .collect();
        Ok(ModulusField { values })
    }

    /// Vertices of `omega` all of whose neighbors lie in `omega`.
    pub fn strict_interior(&self, omega: &Mask) -> Mask {
        (0..self.vertex_count())
            .map(|v| omega[v] && self.adjacency[v].iter().all(|&(u, _)| omega[u]))
            .collect()
    }
}

/// A finite model: grid or graph.
#[derive(Clone, Debug)]
pub enum Domain {
    Grid(GridDomain),
    Graph(GraphDomain),
}

impl Domain {
    pub fn site_count(&self) -> usize {
        match self {
            Domain::Grid(g) => g.site_count(),
            Domain::Graph(g) => g.vertex_count(),
        }
    }

    pub fn measure(&self, site: usize) -> f64 {
        match self {
            Domain::Grid(g) => g.measure(site),
            Domain::Graph(g) => g.measure(site),
        }
    }

    pub fn omega(&self) -> &Mask {
        match self {
            Domain::Grid(g) => g.omega(),
            Domain::Graph(g) => g.omega(),
        }
    }

    pub fn strict_interior(&self, omega: &Mask) -> Mask {
        match self {
            Domain::Grid(g) => g.strict_interior(omega),
            Domain::Graph(g) => g.strict_interior(omega),
        }
    }

    pub fn modulus(&self, f: &ScalarField) -> Result<ModulusField> {
        match self {
            Domain::Grid(g) => g.modulus(f),
            Domain::Graph(g) => g.modulus(f),
        }
    }

    pub fn as_grid(&self) -> Option<&GridDomain> {
        match self {
            Domain::Grid(g) => Some(g),
            Domain::Graph(_) => None,
        }
    }

    pub fn as_graph(&self) -> Option<&GraphDomain> {
        match self {
            Domain::Graph(g) => Some(g),
            Domain::Grid(_) => None,
        }
    }

    /// Whether pairings `f -> Df(grad g)` are single-valued on the model.
    pub fn is_strictly_convex_model(&self) -> bool {
        match self {
            Domain::Grid(g) => g.norm().is_strictly_convex(),
            Domain::Graph(g) => g.p_model() > 1.0 && g.p_model().is_finite(),
        }
    }

    /// Whether pairings are additionally linear in the test argument, which
    /// is what unique extraction from hat evaluations needs.
    pub fn supports_unique_extraction(&self) -> bool {
        match self {
            Domain::Grid(g) => g.norm().is_strictly_convex(),
            Domain::Graph(g) => g.p_model() == 2.0,
        }
    }

    /// Whether the 2-energy is a quadratic form on the model.
    pub fn is_hilbertian_model(&self) -> bool {
        match self {
            Domain::Grid(g) => g.norm().is_quadratic(),
            Domain::Graph(g) => g.p_model() == 2.0,
        }
    }

    /// Hat functions at every strict-interior site of `omega`, followed by
    /// `count` pseudo-random smooth bumps supported there. Deterministic in
    /// `seed`.
    pub fn make_test_functions(
        &self,
        omega: &Mask,
        count: usize,
        seed: u64,
    ) -> Result<Vec<ScalarField>> {
        let strict = self.strict_interior(omega);
        let interior: Vec<usize> =
            (0..self.site_count()).filter(|&i| strict[i]).collect();
        if interior.is_empty() {
            return Err(Error::EmptyStrictInterior);
        }
        let mut fns = Vec::with_capacity(interior.len() + count);
        for &site in &interior {
            let mut v = vec![0.0; self.site_count()];
            v[site] = 1.0;
            fns.push(ScalarField { values: v });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..count {
            fns.push(self.random_bump(&strict, &interior, &mut rng));
        }
        Ok(fns)
    }

    fn random_bump(
        &self,
        strict: &Mask,
        interior: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> ScalarField {
        let center = interior[rng.gen_range(0..interior.len())];
        match self {
            Domain::Grid(g) => {
                let c = g.coords(center);
                let max_extent = g
                    .shape()
                    .iter()
                    .map(|&n| (n - 1) as f64 * g.spacing())
                    .fold(0.0, f64::max);
                let r = rng.gen_range(2.0 * g.spacing()..=(0.25 * max_extent).max(2.5 * g.spacing()));
                let mut values = vec![0.0; g.site_count()];
                for (i, val) in values.iter_mut().enumerate() {
                    if !strict[i] {
                        continue;
                    }
                    let x = g.coords(i);
                    let mut prod = 1.0;
                    for k in 0..g.dim() {
                        let t = (x[k] - c[k]).abs() / r;
                        if t >= 1.0 {
                            prod = 0.0;
                            break;
                        }
                        prod *= (std::f64::consts::FRAC_PI_2 * t).cos();
                    }
                    *val = prod;
                }
                ScalarField { values }
            }
            Domain::Graph(g) => {
                // Cosine profile over hop distance from the center.
                let radius = rng.gen_range(1..=3usize);
                let mut dist = vec![usize::MAX; g.vertex_count()];
                dist[center] = 0;
                let mut queue = std::collections::VecDeque::from([center]);
                while let Some(u) = queue.pop_front() {
                    if dist[u] >= radius {
                        continue;
                    }
                    for &(v, _) in g.neighbors(u) {
                        if dist[v] == usize::MAX {
                            dist[v] = dist[u] + 1;
                            queue.push_back(v);
                        }
                    }
                }
                let values = (0..g.vertex_count())
                    .map(|v| {
                        if !strict[v] || dist[v] > radius {
                            0.0
                        } else {
                            let t = dist[v] as f64 / (radius as f64 + 1.0);
                            (std::f64::consts::FRAC_PI_2 * t).cos()
                        }
                    })
                    .collect();
                ScalarField { values }
            }
        }
    }
}

fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}
