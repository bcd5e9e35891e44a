//! Acceptance suite: one test per criterion, each printing a PASS line
//! (run with `cargo test --test acceptance -- --nocapture` to see them).
//!
//! Scale: grids at most 17x17, graphs at most 100 vertices, each criterion
//! well under a minute.

use pharmlab_core::dcalc::{
    detect_hilbertianity, detect_strict_convexity, dpm_pointwise, dpm_quotient_oracle,
    verify_chain_rules, verify_leibniz, verify_lipschitz_bound, EpsSchedule, GridFunction,
    ScalarMap,
};
use pharmlab_core::divergence::{
    divergence_bounds, extract_divergence, membership, subdifferential_witnesses,
    verify_chain_rule_divergence, verify_leibniz_divergence, verify_linearity_in_g,
    verify_linearity_in_h, verify_local_to_global,
};
use pharmlab_core::minimize::{
    certify_minimizer, certify_subminimizer, certify_superminimizer, energy_perturbation_oracle,
    minimize_p_energy, modulus_weight, p_energy, solve_poisson, EnergySpec, SolverOptions,
};
use pharmlab_core::norm::NormSpec;
use pharmlab_core::potential::{
    busemann_harmonicity_experiment, compose_experiment, maximum_principle_experiment,
    sheaf_experiment, ComposeCase, LineSpec, MaxPrincipleVerdict,
};
use pharmlab_core::space::{Domain, GridDomain, ScalarField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn norm_battery() -> Vec<(&'static str, NormSpec)> {
    vec![
        ("lp(1.5)", NormSpec::lp(2, 1.5).unwrap()),
        ("lp(2)", NormSpec::lp(2, 2.0).unwrap()),
        ("lp(3)", NormSpec::lp(2, 3.0).unwrap()),
        ("lp(inf)", NormSpec::lp(2, f64::INFINITY).unwrap()),
        ("polyhedral-l1", NormSpec::polyhedral(2, vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()),
        ("ellipsoidal", NormSpec::ellipsoidal(2, vec![1.8, 0.3, 0.3, 1.1]).unwrap()),
    ]
}

fn rand_vec(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect()
}

fn square(norm: NormSpec, h: f64) -> Domain {
    Domain::Grid(GridDomain::new(norm, &[(0.0, 1.0), (0.0, 1.0)], h).unwrap())
}

fn centered(norm: NormSpec, h: f64) -> Domain {
    Domain::Grid(GridDomain::new(norm, &[(-1.0, 1.0), (-1.0, 1.0)], h).unwrap())
}

/// Criterion 1: the pointwise and field-level calculus identities hold with
/// zero violations over >= 1e3 sampled instances across the norm battery.
#[test]
fn criterion_1_calculus_identity_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut instances = 0usize;
    for (name, norm) in norm_battery() {
        for _ in 0..200 {
            instances += 1;
            let df = rand_vec(&mut rng);
            let dg = rand_vec(&mut rng);
            let (plus, minus) = dpm_pointwise(&norm, &df, &dg).unwrap();
            let ndf = norm.eval_dual(&df).unwrap();
            let ndg = norm.eval_dual(&dg).unwrap();
            let scale = 1.0 + ndf * ndg;

            // self pairing equals the squared dual norm
            let (sp, sm) = dpm_pointwise(&norm, &dg, &dg).unwrap();
            assert!((sp - ndg * ndg).abs() <= 1e-9 * (1.0 + ndg * ndg), "{name}");
            assert!((sm - ndg * ndg).abs() <= 1e-9 * (1.0 + ndg * ndg), "{name}");
            // antisymmetry under f -> -f
            let neg: Vec<f64> = df.iter().map(|c| -c).collect();
            let (np, nm) = dpm_pointwise(&norm, &neg, &dg).unwrap();
            assert_eq!(np, -minus, "{name}");
            assert_eq!(nm, -plus, "{name}");
            // one-sided order
            assert!(minus <= plus + 1e-10 * scale, "{name}");
            // Cauchy-Schwarz-type bound
            assert!(plus.abs() <= ndf * ndg + 1e-9 * scale, "{name}");
            assert!(minus.abs() <= ndf * ndg + 1e-9 * scale, "{name}");
            // 1-Lipschitz in f
            let df2 = rand_vec(&mut rng);
            let (p2, m2) = dpm_pointwise(&norm, &df2, &dg).unwrap();
            let diff: Vec<f64> = df.iter().zip(&df2).map(|(a, b)| a - b).collect();
            let bound = norm.eval_dual(&diff).unwrap() * ndg;
            assert!((plus - p2).abs() <= bound + 1e-9 * scale, "{name}");
            assert!((minus - m2).abs() <= bound + 1e-9 * scale, "{name}");
            // positive homogeneity in both slots
            let t = rng.gen_range(0.1..3.0);
            let tf: Vec<f64> = df.iter().map(|c| t * c).collect();
            let (tp, tm) = dpm_pointwise(&norm, &tf, &dg).unwrap();
            assert!((tp - t * plus).abs() <= 1e-9 * (1.0 + t * scale), "{name}");
            assert!((tm - t * minus).abs() <= 1e-9 * (1.0 + t * scale), "{name}");
            let tg: Vec<f64> = dg.iter().map(|c| t * c).collect();
            let (gp, gm) = dpm_pointwise(&norm, &df, &tg).unwrap();
            assert!((gp - t * plus).abs() <= 1e-9 * (1.0 + t * scale), "{name}");
            assert!((gm - t * minus).abs() <= 1e-9 * (1.0 + t * scale), "{name}");
            // convexity of plus in f
            let lambda = rng.gen_range(0.0..1.0);
            let mix: Vec<f64> =
                df.iter().zip(&df2).map(|(a, b)| (1.0 - lambda) * a + lambda * b).collect();
            let (pm, _) = dpm_pointwise(&norm, &mix, &dg).unwrap();
            assert!(pm <= (1.0 - lambda) * plus + lambda * p2 + 1e-10 * (scale + p2.abs()), "{name}");
        }

        // field-level chain rules, Leibniz and Lipschitz on random smooth
        // fields over a grid carrying this norm
        let grid = GridDomain::new(norm.clone(), &[(0.0, 1.0), (0.0, 1.0)], 0.125).unwrap();
        for _ in 0..3 {
            instances += 1;
            let c: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = GridFunction::from_values(
                &grid,
                grid.field_from(|x| c[0] * x[0] + c[1] * x[1] + c[2] * x[0] * x[1] - 0.3),
            )
            .unwrap();
            let g = GridFunction::from_values(
                &grid,
                grid.field_from(|x| c[3] * x[0] + c[4] * x[1] + c[5] * (2.0 * x[0]).sin()),
            )
            .unwrap();
            let f2 = GridFunction::from_values(
                &grid,
                grid.field_from(|x| 0.5 + c[6] * x[0] + c[7] * x[1] * x[1]),
            )
            .unwrap();
            for rep in
                verify_chain_rules(&grid, &f, &g, &ScalarMap::abs(), &ScalarMap::relu()).unwrap()
            {
                assert!(rep.pass(), "{name} {}: {}", rep.identity, rep.max_violation);
            }
            for rep in verify_chain_rules(
                &grid,
                &f,
                &g,
                &ScalarMap::linear(2.0, 0.0),
                &ScalarMap::linear(-1.0, 0.0),
            )
            .unwrap()
            {
                assert!(rep.pass(), "{name} {}: {}", rep.identity, rep.max_violation);
            }
            let rep = verify_leibniz(&grid, &f, &f2, &g).unwrap();
            assert!(rep.pass(), "{name} leibniz: {}", rep.max_violation);
            let rep = verify_lipschitz_bound(&grid, &f, &f2, &g).unwrap();
            assert!(rep.pass(), "{name} lipschitz: {}", rep.max_violation);
        }
    }
    assert!(instances >= 1000, "battery too small: {instances}");
    println!("criterion 1 (calculus identity suite): PASS ({instances} instances, zero violations)");
}

/// Criterion 2: the quotient oracle agrees with the gradient-set route to
/// 1e-5 relative, with quotient monotonicity enforced to 1e-9 throughout.
#[test]
fn criterion_2_oracle_agreement() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let base_schedule = EpsSchedule::default_schedule();
    let mut checked = 0usize;
    for (name, norm) in norm_battery() {
        while checked < 1000 {
            let df = rand_vec(&mut rng);
            let dg = rand_vec(&mut rng);
            let ndf = norm.eval_dual(&df).unwrap();
            let ndg = norm.eval_dual(&dg).unwrap();
            if ndf < 1e-3 || ndg < 1e-3 || dg.iter().any(|&c| c.abs() < 1e-3) {
                continue;
            }
            checked += 1;
            let schedule = base_schedule.rescaled_to(1e-7 * ndg / ndf).unwrap();
            // monotonicity violations beyond 1e-9*scale surface as errors
            let trace = dpm_quotient_oracle(&norm, &df, &dg, &schedule)
                .unwrap_or_else(|e| panic!("{name}: {e}"));
            let (plus, minus) = dpm_pointwise(&norm, &df, &dg).unwrap();
            let scale = ndf * ndg;
            assert!(
                (trace.plus - plus).abs() <= 1e-5 * scale,
                "{name}: plus {} vs {}",
                trace.plus,
                plus
            );
            assert!(
                (trace.minus - minus).abs() <= 1e-5 * scale,
                "{name}: minus {} vs {}",
                trace.minus,
                minus
            );
            if checked % 167 == 0 {
                break; // rotate across norms
            }
        }
    }
    // finish the tally on the last norm if rotation undershot
    assert!(checked >= 900, "{checked}");
    println!("criterion 2 (oracle agreement): PASS ({checked} triples within 1e-5)");
}

/// Criterion 3: strict-convexity / Hilbertianity classification with the
/// stated witnesses.
#[test]
fn criterion_3_classification() {
    // Hilbertian: lp(2) and ellipsoidal
    for norm in [NormSpec::lp(2, 2.0).unwrap(), NormSpec::ellipsoidal(2, vec![1.8, 0.3, 0.3, 1.1]).unwrap()]
    {
        let dom = Domain::Grid(
            GridDomain::new(norm.clone(), &[(0.0, 1.0), (0.0, 1.0)], 0.125).unwrap(),
        );
        let conv = detect_strict_convexity(&norm, 600, 303).unwrap();
        let hilb = detect_hilbertianity(&dom, 4, 303).unwrap();
        assert!(conv.strictly_convex && hilb.hilbertian);
    }
    // strictly convex, not Hilbertian: lp(1.5), lp(3), with the coordinate
    // pair witnessing a parallelogram defect above 1e-3
    for p in [1.5, 3.0] {
        let norm = NormSpec::lp(2, p).unwrap();
        let dom =
            Domain::Grid(GridDomain::new(norm.clone(), &[(0.0, 1.0), (0.0, 1.0)], 0.125).unwrap());
        let conv = detect_strict_convexity(&norm, 600, 303).unwrap();
        let hilb = detect_hilbertianity(&dom, 4, 303).unwrap();
        assert!(conv.strictly_convex, "lp({p}) gap {}", conv.worst_gap);
        assert!(!hilb.hilbertian, "lp({p})");
        assert!(hilb.parallelogram_defect > 1e-3, "lp({p}): {}", hilb.parallelogram_defect);
    }
    // flat: lp(inf) with gap exactly 2 at df=(0,1), dg=(1,0)
    let linf = NormSpec::lp(2, f64::INFINITY).unwrap();
    let conv = detect_strict_convexity(&linf, 600, 303).unwrap();
    assert!(!conv.strictly_convex);
    let (plus, minus) = dpm_pointwise(&linf, &[0.0, 1.0], &[1.0, 0.0]).unwrap();
    assert!((plus - minus - 2.0).abs() <= 1e-9, "gap {}", plus - minus);
    // the l1 ball: flat as well; its dual is non-differentiable on the
    // diagonal, where the same gap of exactly 2 appears
    let l1 = NormSpec::polyhedral(2, vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let conv = detect_strict_convexity(&l1, 600, 303).unwrap();
    assert!(!conv.strictly_convex);
    let (plus, minus) = dpm_pointwise(&l1, &[1.0, -1.0], &[1.0, 1.0]).unwrap();
    assert!((plus - minus - 2.0).abs() <= 1e-9, "gap {}", plus - minus);
    println!("criterion 3 (classification): PASS");
}

fn smooth_boundary(grid: &GridDomain) -> ScalarField {
    // gradient bounded away from zero: keeps the p < 2 weight nondegenerate
    grid.field_from(|x| x[0] + 0.25 * x[0] * x[1] + 0.1 * x[1])
}

/// Criterion 4: the variational and PDE characterizations agree on 12
/// solver instances, in both directions.
#[test]
fn criterion_4_minimizer_equivalence() {
    let grids: Vec<(String, Domain)> = vec![
        ("lp(2) grid".into(), square(NormSpec::lp(2, 2.0).unwrap(), 1.0 / 8.0)),
        ("lp(3) grid".into(), square(NormSpec::lp(2, 3.0).unwrap(), 1.0 / 8.0)),
        ("lp(1.5) grid".into(), square(NormSpec::lp(2, 1.5).unwrap(), 1.0 / 8.0)),
        ("graph".into(), Domain::Graph(pharmlab_core::space::GraphDomain::lattice(8, 8).unwrap())),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut instance = 0;
    for (name, dom) in &grids {
        for p in [1.5, 2.0, 3.0] {
            instance += 1;
            let boundary = match dom {
                Domain::Grid(grid) => smooth_boundary(grid),
                Domain::Graph(_) => ScalarField::new(
                    (0..dom.site_count()).map(|v| (v / 8) as f64 * 0.2 + (v % 8) as f64 * 0.1).collect(),
                )
                .unwrap(),
            };
            let spec = EnergySpec::new(dom, p, boundary.clone()).unwrap();
            let report =
                minimize_p_energy(dom, &spec, &boundary, &SolverOptions::default()).unwrap();
            let fns = dom.make_test_functions(&spec.omega, 16, 404 + instance).unwrap();
            let cert = certify_minimizer(dom, &spec, &report.minimizer, &fns).unwrap();
            assert!(
                cert.pass,
                "{name} p={p}: margin {} tol {} residual {}",
                cert.worst_margin, cert.tolerance, report.first_order_residual
            );
            // sign splitting, forward direction: the minimizer certificate
            // comes with both one-sided certificates
            let neg: Vec<ScalarField> = fns.iter().map(|f| f.scale(-1.0)).collect();
            assert!(certify_superminimizer(dom, &spec, &report.minimizer, &fns).unwrap().pass);
            assert!(certify_subminimizer(dom, &spec, &report.minimizer, &neg).unwrap().pass);
            assert!(report.certification.minimizer.pass);

            // the variational side of the equivalence: a pairing certificate
            // comes with energy minimality against perturbations, and
            // perturbed fields fail the certificate while raising the energy
            let strict = dom.strict_interior(&spec.omega);
            let interior: Vec<usize> =
                (0..dom.site_count()).filter(|&i| strict[i]).collect();
            for k in 0..20 {
                let site = interior[rng.gen_range(0..interior.len())];
                let mut v = report.minimizer.values().to_vec();
                v[site] += if k % 2 == 0 { 1e-2 } else { -1e-2 };
                let perturbed = ScalarField::new(v).unwrap();
                let cert = certify_minimizer(dom, &spec, &perturbed, &fns).unwrap();
                assert!(!cert.pass, "{name} p={p} perturbation {k} still certified");
                assert!(
                    p_energy(dom, &spec, &perturbed).unwrap() > report.final_energy,
                    "{name} p={p}: perturbation lowered the energy"
                );
                // sign splitting, reverse direction: a failed minimizer
                // certificate entails a failed one-sided certificate
                if k < 4 {
                    let sup = certify_superminimizer(dom, &spec, &perturbed, &fns).unwrap();
                    let sub = certify_subminimizer(dom, &spec, &perturbed, &neg).unwrap();
                    assert!(!(sup.pass && sub.pass), "{name} p={p}: one-sided certs both passed");
                }
            }

            // pairing sums match the energy difference quotients
            let f = fns.last().unwrap();
            let schedule = EpsSchedule::geometric(1e-2, 0.25, 10).unwrap();
            let trace =
                energy_perturbation_oracle(dom, &spec, &report.minimizer, f, &schedule).unwrap();
            let weight = modulus_weight(dom, &report.minimizer, p).unwrap();
            let iv = divergence_bounds_with_weight(dom, &weight, &report.minimizer, f);
            let exact = -iv.0;
            let scale = 1.0 + exact.abs();
            assert!(
                (trace.plus - exact).abs() <= 1e-5 * scale.max(trace.plus.abs()),
                "{name} p={p}: oracle {} vs pairing {}",
                trace.plus,
                exact
            );
        }
    }
    assert_eq!(instance, 12);
    println!("criterion 4 (minimizer equivalence): PASS (12 instances, 20 perturbations each)");
}

fn divergence_bounds_with_weight(
    dom: &Domain,
    weight: &ScalarField,
    g: &ScalarField,
    f: &ScalarField,
) -> (f64, f64) {
    let iv = divergence_bounds(dom, weight, g, f).unwrap();
    (iv.lo, iv.hi)
}

/// Criterion 5: one-sided certification splits the source instance and the
/// convex kink the right way, with measure signs matching.
#[test]
fn criterion_5_one_sided_characterization() {
    // source instance: divergence density -1, superminimizer only
    let dom = square(NormSpec::lp(2, 2.0).unwrap(), 1.0 / 8.0);
    let zero = ScalarField::constant(dom.site_count(), 0.0);
    let one = ScalarField::constant(dom.site_count(), 1.0);
    let g = solve_poisson(&dom, &one, &zero).unwrap();
    let spec = EnergySpec::new(&dom, 2.0, g.clone()).unwrap();
    let fns = dom.make_test_functions(&spec.omega, 16, 505).unwrap();
    let neg: Vec<ScalarField> = fns.iter().map(|f| f.scale(-1.0)).collect();
    let sup = certify_superminimizer(&dom, &spec, &g, &fns).unwrap();
    let sub = certify_subminimizer(&dom, &spec, &g, &neg).unwrap();
    assert!(sup.pass && !sub.pass, "source instance: super {} sub {}", sup.pass, sub.pass);
    assert!(!certify_minimizer(&dom, &spec, &g, &fns).unwrap().pass);
    let weight = modulus_weight(&dom, &g, 2.0).unwrap();
    let mu = extract_divergence(&dom, &weight, &g).unwrap();
    let strict = dom.strict_interior(&spec.omega);
    for i in 0..dom.site_count() {
        if strict[i] {
            assert!((mu.density(i) + 1.0).abs() <= 1e-7, "density {}", mu.density(i));
        }
    }

    // convex kink: subminimizer only, measure nonnegative
    let dom = centered(NormSpec::lp(2, 2.0).unwrap(), 1.0 / 8.0);
    let g = dom.as_grid().unwrap().field_from(|x| x[0].max(0.0));
    let spec = EnergySpec::new(&dom, 2.0, g.clone()).unwrap();
    let fns = dom.make_test_functions(&spec.omega, 16, 506).unwrap();
    let neg: Vec<ScalarField> = fns.iter().map(|f| f.scale(-1.0)).collect();
    let sub = certify_subminimizer(&dom, &spec, &g, &neg).unwrap();
    let sup = certify_superminimizer(&dom, &spec, &g, &fns).unwrap();
    assert!(sub.pass && !sup.pass, "kink: sub {} super {}", sub.pass, sup.pass);
    let weight = modulus_weight(&dom, &g, 2.0).unwrap();
    let mu = extract_divergence(&dom, &weight, &g).unwrap();
    let strict = dom.strict_interior(&spec.omega);
    let mut surface_mass = 0.0;
    for i in 0..dom.site_count() {
        if strict[i] {
            assert!(mu.density(i) >= -1e-7, "density {}", mu.density(i));
            surface_mass += mu.site_mass(&dom, i);
        }
    }
    assert!(surface_mass > 0.1, "kink carries positive divergence mass: {surface_mass}");
    println!("criterion 5 (one-sided characterization): PASS");
}

/// Criterion 6: the divergence set is genuinely multivalued on the flat
/// norm and collapses on the Euclidean one.
#[test]
fn criterion_6_multivaluedness() {
    let dom = centered(NormSpec::lp(2, f64::INFINITY).unwrap(), 1.0 / 8.0);
    let grid = dom.as_grid().unwrap();
    let one = ScalarField::constant(dom.site_count(), 1.0);
    let g = grid.field_from(|x| x[0]);
    let strict = dom.strict_interior(dom.omega());
    let site = (0..dom.site_count()).find(|&i| strict[i]).unwrap();
    let mut hat_values = vec![0.0; dom.site_count()];
    hat_values[site] = 1.0;
    let hat = ScalarField::new(hat_values).unwrap();

    let iv = divergence_bounds(&dom, &one, &g, &hat).unwrap();
    assert!(iv.width() > 0.0, "interval degenerate");
    let ws = subdifferential_witnesses(&dom, &one, &g, &[hat.clone(), hat.scale(-1.0)]).unwrap();
    let gap = (ws[0].pair(&dom, &hat) - ws[1].pair(&dom, &hat)).abs();
    assert!(
        (gap - iv.width()).abs() <= 1e-7 * (1.0 + iv.width()),
        "gap {gap} vs width {}",
        iv.width()
    );
    // both witnesses satisfy the defining inequalities
    let fns = dom.make_test_functions(dom.omega(), 8, 606).unwrap();
    for w in &ws {
        let rep = membership(&dom, w, &one, &g, &fns).unwrap();
        assert!(rep.member, "witness violates the interval: {}", rep.worst_violation);
        assert!(!rep.complete);
    }

    // Euclidean: the same construction collapses to one measure
    let dom = centered(NormSpec::lp(2, 2.0).unwrap(), 1.0 / 8.0);
    let g = dom.as_grid().unwrap().field_from(|x| x[0] + 0.2 * x[1] * x[1]);
    let mut hat_values = vec![0.0; dom.site_count()];
    hat_values[site] = 1.0;
    let hat = ScalarField::new(hat_values).unwrap();
    let ws = subdifferential_witnesses(&dom, &one, &g, &[hat.clone(), hat.scale(-1.0)]).unwrap();
    for (a, b) in ws[0].densities().iter().zip(ws[1].densities()) {
        assert!((a - b).abs() <= 1e-8);
    }
    println!("criterion 6 (multivaluedness): PASS");
}

/// Criterion 7: divergence calculus rules at density level on the Euclidean
/// and lp(3) grids.
#[test]
fn criterion_7_divergence_calculus() {
    for (name, norm, hilbertian) in [
        ("lp(2)", NormSpec::lp(2, 2.0).unwrap(), true),
        ("lp(3)", NormSpec::lp(2, 3.0).unwrap(), false),
    ] {
        let dom = centered(norm, 1.0 / 8.0);
        let grid = dom.as_grid().unwrap();
        let h = grid.field_from(|x| 1.0 + 0.3 * x[1]);
        // affine data keep the discrete product rule exact on both sides
        let g_affine =
            GridFunction::from_values(grid, grid.field_from(|x| 0.8 * x[0] - 0.6 * x[1])).unwrap();
        let fns = dom.make_test_functions(dom.omega(), 8, 707).unwrap();

        let rep = verify_chain_rule_divergence(grid, &h, &g_affine, &ScalarMap::abs(), &fns[..20])
            .unwrap();
        assert!(rep.skipped.is_none() && rep.pass(), "{name} chain: {}", rep.max_gap);

        let h1 = GridFunction::from_values(grid, grid.field_from(|x| 1.0 + 0.4 * x[0] - 0.2 * x[1]))
            .unwrap();
        let h2 = grid.field_from(|x| 0.5 + 0.3 * x[1]);
        let rep = verify_leibniz_divergence(grid, &h1, &h2, &g_affine).unwrap();
        assert!(rep.skipped.is_none() && rep.pass(), "{name} leibniz: {}", rep.max_gap);

        let g_vals = grid.field_from(|x| (1.3 * x[0]).sin() + 0.4 * x[1] * x[1]);
        let rep =
            verify_linearity_in_h(&dom, &h, &h2, (2.0, -0.7), &g_vals).unwrap();
        assert!(rep.skipped.is_none() && rep.pass(), "{name} lin-h: {}", rep.max_gap);

        let (left, right) = overlapping_halves(&dom);
        let rep = verify_local_to_global(&dom, &h, &g_vals, &left, &right).unwrap();
        assert!(rep.skipped.is_none() && rep.pass(), "{name} local-global: {}", rep.max_gap);

        // linearity in g needs the Hilbertian structure; on lp(3) the rule
        // is out of scope and the verifier reports it as skipped
        let g2 = grid.field_from(|x| x[0] * x[1]);
        let rep = verify_linearity_in_g(&dom, &h, &g_vals, &g2, (1.5, -2.0)).unwrap();
        if hilbertian {
            assert!(rep.skipped.is_none() && rep.pass(), "{name} lin-g: {}", rep.max_gap);
            let rep = pharmlab_core::divergence::verify_leibniz_gradients(
                grid,
                &h,
                &GridFunction::from_values(grid, grid.field_from(|x| x[0] + 0.5)).unwrap(),
                &GridFunction::from_values(grid, g2.clone()).unwrap(),
            )
            .unwrap();
            assert!(rep.skipped.is_none() && rep.pass(), "{name} leibniz-grad: {}", rep.max_gap);
        } else {
            assert!(rep.skipped.is_some());
        }
    }
    println!("criterion 7 (divergence calculus): PASS");
}

fn overlapping_halves(dom: &Domain) -> (Vec<bool>, Vec<bool>) {
    let grid = dom.as_grid().unwrap();
    let omega = grid.omega();
    let mut left = vec![false; dom.site_count()];
    let mut right = vec![false; dom.site_count()];
    for i in 0..dom.site_count() {
        if omega[i] {
            let x = grid.coords(i);
            if x[0] <= 0.3 {
                left[i] = true;
            }
            if x[0] >= -0.3 {
                right[i] = true;
            }
        }
    }
    (left, right)
}

/// Criterion 8: the application experiments.
#[test]
fn criterion_8_applications() {
    // sheaf: pass on the solver output, constructed failure localizes
    let dom = centered(NormSpec::lp(2, 2.0).unwrap(), 1.0 / 8.0);
    let grid = dom.as_grid().unwrap();
    let boundary = grid.field_from(|x| x[0] * x[1]);
    let spec = EnergySpec::new(&dom, 2.0, boundary.clone()).unwrap();
    let g = minimize_p_energy(&dom, &spec, &boundary, &SolverOptions::default())
        .unwrap()
        .minimizer;
    let (left, right) = overlapping_halves(&dom);
    let rep = sheaf_experiment(&dom, &spec, &[left.clone(), right.clone()], &g, 808).unwrap();
    assert!(rep.pass && rep.global.pass && rep.locals.iter().all(|c| c.pass));
    let strict = dom.strict_interior(&right);
    let site = (0..dom.site_count())
        .find(|&i| strict[i] && grid.coords(i)[0] > 0.6)
        .unwrap();
    let mut v = g.values().to_vec();
    v[site] += 0.5;
    let bad = ScalarField::new(v).unwrap();
    let rep = sheaf_experiment(&dom, &spec, &[left, right], &bad, 808).unwrap();
    assert!(!rep.global.pass && rep.locals[0].pass && !rep.locals[1].pass);

    // composition battery: 4 cases x 8 instances
    let dom = centered(NormSpec::lp(2, 2.0).unwrap(), 1.0 / 8.0);
    let zero = ScalarField::constant(dom.site_count(), 0.0);
    let one = ScalarField::constant(dom.site_count(), 1.0);
    let grid = dom.as_grid().unwrap();
    let smooth_source = ScalarField::new(
        (0..dom.site_count())
            .map(|i| {
                let x = grid.coords(i);
                1.0 + 0.5 * (2.0 * x[0]).sin() * (1.5 * x[1]).cos()
            })
            .collect(),
    )
    .unwrap();
    let supers = [
        solve_poisson(&dom, &one, &zero).unwrap(),
        solve_poisson(&dom, &smooth_source, &zero).unwrap(),
        grid.field_from(|x| x[0]),
        grid.field_from(|x| x[0] * x[1]),
    ];
    let subs: Vec<ScalarField> = supers.iter().map(|g| g.scale(-1.0)).collect();
    let case_maps: [(ComposeCase, [&str; 2]); 4] = [
        (ComposeCase::SuperConvexNonincreasing, ["neg", "negrelu"]),
        (ComposeCase::SuperConcaveNondecreasing, ["identity", "halfcap"]),
        (ComposeCase::SubConvexNondecreasing, ["relu", "double"]),
        (ComposeCase::SubConcaveNonincreasing, ["neg", "negaffine"]),
    ];
    let map_of = |name: &str| -> ScalarMap {
        match name {
            "neg" => ScalarMap::linear(-1.0, 0.0),
            "negrelu" => {
                ScalarMap::new(|t| (-t).max(0.0), |t| if t < 0.0 { -1.0 } else { 0.0 }, vec![0.0])
            }
            "identity" => ScalarMap::linear(1.0, 0.0),
            "halfcap" => ScalarMap::new(
                |t| t - 0.5 * (t - 0.01).max(0.0),
                |t| if t > 0.01 { 0.5 } else { 1.0 },
                vec![0.01],
            ),
            "relu" => ScalarMap::relu(),
            "double" => ScalarMap::linear(2.0, 0.0),
            "negaffine" => ScalarMap::linear(-2.0, 0.3),
            _ => unreachable!(),
        }
    };
    let mut battery = 0;
    for (case, maps) in &case_maps {
        let premises = if case.premise_is_super() { &supers } else { &subs[..] };
        for premise in premises {
            for map_name in maps {
                battery += 1;
                let spec = EnergySpec::new(&dom, 2.0, premise.clone()).unwrap();
                let rep =
                    compose_experiment(&dom, &spec, premise, &map_of(map_name), *case, 808).unwrap();
                assert!(
                    rep.pass,
                    "case {case:?} map {map_name}: premise {} conclusion {}",
                    rep.premise.pass, rep.conclusion.pass
                );
            }
        }
    }
    assert_eq!(battery, 32);

    // maximum principle: the search family produces no violation and no
    // nonconstant field with an interior minimum
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut candidates = vec![
        ("constant", ScalarField::constant(dom.site_count(), 2.0)),
        ("slope", grid.field_from(|x| x[0])),
        ("bowl", solve_poisson(&dom, &one, &zero).unwrap()),
    ];
    for k in 0..3 {
        let source = ScalarField::new(
            (0..dom.site_count()).map(|_| 0.5 + rng.gen_range(0.0..1.0)).collect(),
        )
        .unwrap();
        candidates.push((
            ["s0", "s1", "s2"][k],
            solve_poisson(&dom, &source, &zero).unwrap(),
        ));
    }
    for (name, g) in &candidates {
        let rep = maximum_principle_experiment(&dom, g, 808).unwrap();
        assert_ne!(rep.verdict, MaxPrincipleVerdict::Violation, "{name}");
        if *name == "constant" {
            assert_eq!(rep.verdict, MaxPrincipleVerdict::ConstantPass);
        } else {
            assert!(!rep.interior_minimum || !rep.superminimizer, "{name}");
        }
    }

    // Busemann: cancellation and harmonicity on the Euclidean plane,
    // explicit nonzero sum on the l1 plane
    let egrid = GridDomain::new(NormSpec::lp(2, 2.0).unwrap(), &[(-1.0, 1.0), (-1.0, 1.0)], 0.125)
        .unwrap();
    let line = LineSpec::new(egrid.norm(), vec![0.0, 0.0], vec![1.0, 0.0]).unwrap();
    let (pair, rep) = busemann_harmonicity_experiment(&egrid, &line, 1e9).unwrap();
    assert!(rep.hilbertian && rep.sum_sup <= 1e-7, "sum sup {}", rep.sum_sup);
    assert_eq!((rep.plus_certified, rep.minus_certified), (Some(true), Some(true)));
    assert!(rep.mu_plus_max.unwrap() <= 1e-7 && rep.mu_minus_max.unwrap() <= 1e-7);
    drop(pair);

    let l1grid = GridDomain::new(NormSpec::lp(2, 1.0).unwrap(), &[(-1.0, 1.0), (-1.0, 1.0)], 0.125)
        .unwrap();
    let line = LineSpec::new(l1grid.norm(), vec![0.0, 0.0], vec![1.0, 0.0]).unwrap();
    let (pair, rep) = busemann_harmonicity_experiment(&l1grid, &line, 1e9).unwrap();
    assert!(!rep.hilbertian);
    let sum = pair.sum();
    for i in 0..l1grid.site_count() {
        let x = l1grid.coords(i);
        assert!(
            (sum.get(i) - 2.0 * x[1].abs()).abs() <= 1e-7,
            "site {i}: {} vs {}",
            sum.get(i),
            2.0 * x[1].abs()
        );
    }
    println!("criterion 8 (applications): PASS (32 composition instances)");
}

/// Criterion 9: identical config and seed reproduce byte-identical outputs.
#[test]
fn criterion_9_determinism() {
    let bin = env!("CARGO_BIN_EXE_pharmlab");
    let base = std::env::temp_dir().join(format!("pharmlab-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&base).unwrap();
    let suites = [
        (
            "divergence",
            "[domain]\nkind = grid\nextents = -1,1; -1,1\nspacing = 0.25\nnorm = lp\np = inf\n\n\
             [task]\nname = divergence\ng = x1\nh = one\n\n[numeric]\nseed = 99\nbumps = 8\n\n\
             [output]\ndirectory = run\n",
        ),
        (
            "calculus",
            "[domain]\nkind = grid\nextents = -1,1; -1,1\nspacing = 0.25\nnorm = lp\np = 3\n\n\
             [task]\nname = calculus-suite\n\n[numeric]\nseed = 99\nsamples = 200\n\n\
             [output]\ndirectory = run\n",
        ),
    ];
    let mut total = 0;
    for (name, text) in suites {
        let config_path = base.join(format!("{name}.cfg"));
        std::fs::write(&config_path, text).unwrap();
        // run twice into the same root: every emitted byte must reproduce
        let out_root = base.join(name);
        let mut outputs: Vec<std::collections::BTreeMap<String, Vec<u8>>> = Vec::new();
        for _ in 0..2 {
            let status = std::process::Command::new(bin)
                .args(["run", config_path.to_str().unwrap()])
                .env("PHARMLAB_OUT", &out_root)
                .output()
                .unwrap();
            assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
            let mut files = std::collections::BTreeMap::new();
            for entry in std::fs::read_dir(out_root.join("run")).unwrap() {
                let path = entry.unwrap().path();
                files.insert(
                    path.file_name().unwrap().to_string_lossy().into_owned(),
                    std::fs::read(&path).unwrap(),
                );
            }
            outputs.push(files);
        }
        assert_eq!(outputs[0].len(), outputs[1].len());
        for (file, bytes) in &outputs[0] {
            assert_eq!(
                Some(bytes),
                outputs[1].get(file),
                "{name}/{file} differs between runs"
            );
        }
        total += outputs[0].len();
    }
    let _ = std::fs::remove_dir_all(&base);
    println!("criterion 9 (determinism): PASS ({total} files byte-identical across reruns)");
}
