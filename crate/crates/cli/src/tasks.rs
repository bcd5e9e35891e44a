//! Task runners: each executes one experiment against the configured
//! domain, writes its CSV outputs and reports an overall pass/fail.

use crate::config::{ExperimentConfig, NumericConfig};
use anyhow::{anyhow, bail, Context, Result};
use pharmlab_core::dcalc::{
    self, detect_hilbertianity, detect_strict_convexity, dpm_pointwise, EpsSchedule, GridFunction,
    ScalarMap,
};
use pharmlab_core::divergence::{
    self, divergence_bounds, extract_divergence, membership, subdifferential_witnesses,
};
use pharmlab_core::minimize::{
    certify_minimizer, certify_subminimizer, certify_superminimizer, minimize_p_energy,
    solve_poisson, EnergySpec, SolverOptions,
};
use pharmlab_core::potential::{
    busemann_harmonicity_experiment, compose_experiment, maximum_principle_experiment,
    poincare_diagnostic, sheaf_experiment, ComposeCase, LineSpec, MaxPrincipleVerdict,
};
use pharmlab_core::report::{csv_text, fmt_f64, VerifierReport};
use pharmlab_core::space::{Domain, GridDomain, Mask, ScalarField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

pub struct TaskOutcome {
    pub pass: bool,
    pub summary: Vec<String>,
}

pub fn run(cfg: &ExperimentConfig) -> Result<TaskOutcome> {
    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    write_provenance(cfg)?;
    match cfg.task.as_str() {
        "calculus-suite" => calculus_suite(cfg),
        "divergence" => divergence_task(cfg),
        "minimize" => minimize_task(cfg),
        "certify" => certify_task(cfg),
        "sheaf" => sheaf_task(cfg),
        "compose" => compose_task(cfg),
        "maxprinciple" => maxprinciple_task(cfg),
        "busemann" => busemann_task(cfg),
        "poincare" => poincare_task(cfg),
        other => bail!("unknown task `{other}`"),
    }
}

fn write_provenance(cfg: &ExperimentConfig) -> Result<()> {
    let mut lines = vec![
        format!("pharmlab.version = {}", env!("CARGO_PKG_VERSION")),
        format!("task = {}", cfg.task),
    ];
    for (k, v) in &cfg.resolved {
        lines.push(format!("{k} = {v}"));
    }
    std::fs::write(cfg.out_dir.join("provenance.txt"), lines.join("\n") + "\n")?;
    Ok(())
}

fn write(cfg: &ExperimentConfig, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    std::fs::write(cfg.out_dir.join(name), csv_text(header, rows))?;
    Ok(())
}

/// CSV of one field: site index, coordinates (grids), value.
fn field_rows(dom: &Domain, f: &ScalarField) -> Vec<Vec<String>> {
    (0..dom.site_count())
        .map(|i| {
            let mut row = vec![i.to_string()];
            if let Domain::Grid(g) = dom {
                row.extend(g.coords(i).iter().map(|c| fmt_f64(*c)));
            }
            row.push(fmt_f64(f.get(i)));
            row
        })
        .collect()
}

fn field_header(dom: &Domain) -> Vec<&'static str> {
    match dom {
        Domain::Grid(g) => {
            let mut h = vec!["site"];
            h.extend(["x1", "x2", "x3", "x4"][..g.dim()].iter());
            h.push("value");
            h
        }
        Domain::Graph(_) => vec!["site", "value"],
    }
}

/// Named fields used by config files.
pub fn field_by_name(dom: &Domain, name: &str) -> Result<ScalarField> {
    let n = dom.site_count();
    if let Some(f) = match name {
        "zero" => Some(ScalarField::constant(n, 0.0)),
        "one" => Some(ScalarField::constant(n, 1.0)),
        _ => None,
    } {
        return Ok(f);
    }
    match dom {
        Domain::Grid(g) => Ok(match name {
            "x1" => g.field_from(|x| x[0]),
            "x2" if g.dim() >= 2 => g.field_from(|x| x[1]),
            "xy" => {
                if g.dim() >= 2 {
                    g.field_from(|x| x[0] * x[1])
                } else {
                    g.field_from(|x| x[0])
                }
            }
            "relu-x1" => g.field_from(|x| x[0].max(0.0)),
            "abs-x1" => g.field_from(|x| x[0].abs()),
            "quad" => g.field_from(|x| 0.5 * x.iter().map(|c| c * c).sum::<f64>()),
            "sinmix" => g.field_from(|x| (2.0 * x[0]).sin() + x.get(1).copied().unwrap_or(0.0)),
            "bowl" => {
                let zero = ScalarField::constant(n, 0.0);
                solve_poisson(dom, &ScalarField::constant(n, 1.0), &zero)?
            }
            "negbowl" => {
                let zero = ScalarField::constant(n, 0.0);
                solve_poisson(dom, &ScalarField::constant(n, 1.0), &zero)?.scale(-1.0)
            }
            other => bail!("unknown field name `{other}` for grid domains"),
        }),
        Domain::Graph(_) => Ok(match name {
            "ramp" => ScalarField::new((0..n).map(|i| i as f64 / n as f64).collect())?,
            "wave" => ScalarField::new((0..n).map(|i| (0.37 * i as f64).sin()).collect())?,
            "bowl" => {
                let zero = ScalarField::constant(n, 0.0);
                solve_poisson(dom, &ScalarField::constant(n, 1.0), &zero)?
            }
            other => bail!("unknown field name `{other}` for graph domains"),
        }),
    }
}

fn map_by_name(name: &str) -> Result<(ScalarMap, &'static str)> {
    Ok(match name {
        "neg" => (ScalarMap::linear(-1.0, 0.0), "neg"),
        "double" => (ScalarMap::linear(2.0, 0.0), "double"),
        "identity" => (ScalarMap::linear(1.0, 0.0), "identity"),
        "abs" => (ScalarMap::abs(), "abs"),
        "relu" => (ScalarMap::relu(), "relu"),
        "negrelu" => (
            ScalarMap::new(|t| (-t).max(0.0), |t| if t < 0.0 { -1.0 } else { 0.0 }, vec![0.0]),
            "negrelu",
        ),
        "halfcap" => (
            ScalarMap::new(
                |t| t - 0.5 * (t - 0.01).max(0.0),
                |t| if t > 0.01 { 0.5 } else { 1.0 },
                vec![0.01],
            ),
            "halfcap",
        ),
        "negaffine" => (ScalarMap::linear(-2.0, 0.3), "negaffine"),
        other => bail!("unknown map name `{other}`"),
    })
}

fn schedule(numeric: &NumericConfig) -> Result<EpsSchedule> {
    Ok(EpsSchedule::geometric(numeric.eps_start, numeric.eps_ratio, numeric.eps_steps)?)
}

fn grid_of(dom: &Domain) -> Result<&GridDomain> {
    dom.as_grid().ok_or_else(|| anyhow!("this task needs a grid domain"))
}

fn rand_covector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect()
}

// ---------------------------------------------------------------- calculus

fn calculus_suite(cfg: &ExperimentConfig) -> Result<TaskOutcome> {
    let grid = grid_of(&cfg.domain)?;
    let norm = grid.norm();
    let dim = norm.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.numeric.seed);
    let sched = schedule(&cfg.numeric)?;

    let mut self_pairing = VerifierReport::new("self_pairing_squared_norm", 1e-9);
    let mut antisym = VerifierReport::new("sign_antisymmetry", 0.0);
    let mut order = VerifierReport::new("one_sided_order", 1e-10);
    let mut schwartz = VerifierReport::new("schwartz_bound", 1e-9);
    let mut homog = VerifierReport::new("positive_homogeneity", 1e-9);
    let mut convexity = VerifierReport::new("convexity_in_f", 1e-10);
    let mut oracle = VerifierReport::new("quotient_oracle_agreement", 1e-5);

    for k in 0..cfg.numeric.samples {
        let df = rand_covector(&mut rng, dim);
        let dg = rand_covector(&mut rng, dim);
        let (plus, minus) = dpm_pointwise(norm, &df, &dg)?;
        let ndf = norm.eval_dual(&df)?;
        let ndg = norm.eval_dual(&dg)?;
        let scale = 1.0 + ndf * ndg;

        let (sp, sm) = dpm_pointwise(norm, &dg, &dg)?;
        let sq = ndg * ndg;
        self_pairing.observe((sp - sq).abs().max((sm - sq).abs()) / (1.0 + sq), k);

        let neg: Vec<f64> = df.iter().map(|c| -c).collect();
        let (np, nm) = dpm_pointwise(norm, &neg, &dg)?;
        antisym.observe((np + minus).abs().max((nm + plus).abs()), k);

        order.observe((minus - plus) / scale, k);
        schwartz.observe((plus.abs().max(minus.abs()) - ndf * ndg).max(0.0) / scale, k);

        let t = rng.gen_range(0.1..3.0);
        let tf: Vec<f64> = df.iter().map(|c| t * c).collect();
        let (tp, tm) = dpm_pointwise(norm, &tf, &dg)?;
        homog.observe((tp - t * plus).abs().max((tm - t * minus).abs()) / (1.0 + t * scale), k);
        let tg: Vec<f64> = dg.iter().map(|c| t * c).collect();
        let (gp, _) = dpm_pointwise(norm, &df, &tg)?;
        homog.observe((gp - t * plus).abs() / (1.0 + t * scale), k);

        let df2 = rand_covector(&mut rng, dim);
        let lambda = rng.gen_range(0.0..1.0);
        let mix: Vec<f64> =
            df.iter().zip(&df2).map(|(a, b)| (1.0 - lambda) * a + lambda * b).collect();
        let (pmix, _) = dpm_pointwise(norm, &mix, &dg)?;
        let (p2, _) = dpm_pointwise(norm, &df2, &dg)?;
        convexity
            .observe((pmix - (1.0 - lambda) * plus - lambda * p2).max(0.0) / scale, k);

        if ndg > 1e-3 && ndf > 1e-3 && dg.iter().all(|&c| c.abs() > 1e-3) {
            let tr = dcalc::dpm_quotient_oracle(
                norm,
                &df,
                &dg,
                &sched.rescaled_to(1e-7 * ndg / ndf)?,
            )?;
            oracle.observe(
                (tr.plus - plus).abs().max((tr.minus - minus).abs()) / (ndf * ndg),
                k,
            );
        }
    }

    // field-level verifiers on smooth random fields
    let coefs: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let f = GridFunction::from_values(
        grid,
        grid.field_from(|x| {
            coefs[0] * x[0] + coefs[1] * x.get(1).copied().unwrap_or(0.0) + coefs[2] * x[0] * x[0]
        }),
    )?;
    let g = GridFunction::from_values(
        grid,
        grid.field_from(|x| {
            coefs[3] * x[0] + coefs[4] * x.get(1).copied().unwrap_or(0.0)
                + coefs[5] * (2.0 * x[0]).sin()
        }),
    )?;
    let mut reports = vec![self_pairing, antisym, order, schwartz, homog, convexity, oracle];
    reports.extend(dcalc::verify_chain_rules(grid, &f, &g, &ScalarMap::abs(), &ScalarMap::relu())?);
    reports.push(dcalc::verify_leibniz(grid, &f, &g, &g)?);
    reports.push(dcalc::verify_lipschitz_bound(grid, &f, &g, &g)?);

    let conv = detect_strict_convexity(norm, cfg.numeric.samples.max(500), cfg.numeric.seed)?;
    let hilb = detect_hilbertianity(&cfg.domain, 4, cfg.numeric.seed)?;
    let mut class_rows = vec![
        vec![
            "strictly_convex".into(),
            conv.strictly_convex.to_string(),
            fmt_f64(conv.worst_gap),
            format!("df={:?} dg={:?}", conv.witness_df, conv.witness_dg).replace(',', " "),
        ],
        vec![
            "hilbertian".into(),
            hilb.hilbertian.to_string(),
            fmt_f64(hilb.parallelogram_defect),
            format!("symmetry_defect={}", fmt_f64(hilb.symmetry_defect)),
        ],
    ];
    class_rows.iter_mut().for_each(|r| r.truncate(4));
    write(cfg, "classification.csv", &["property", "value", "worst_defect", "witness"], &class_rows)?;

    let rows: Vec<Vec<String>> = reports.iter().map(|r| r.csv_row()).collect();
    write(cfg, "identities.csv", &VerifierReport::CSV_HEADER, &rows)?;

    let pass = reports.iter().all(|r| r.pass());
    let summary = reports
        .iter()
        .map(|r| format!("{} max_violation={} {}", r.identity, fmt_f64(r.max_violation), if r.pass() { "PASS" } else { "FAIL" }))
        .collect();
    Ok(TaskOutcome { pass, summary })
}

// --------------------------------------------------------------- divergence

fn divergence_task(cfg: &ExperimentConfig) -> Result<TaskOutcome> {
    let dom = &cfg.domain;
    let g = field_by_name(dom, &cfg.task_keys.field)?;
    let h = field_by_name(dom, &cfg.task_keys.weight)?;
    let omega = dom.omega().clone();
    let fns = dom.make_test_functions(&omega, cfg.numeric.bumps, cfg.numeric.seed)?;

    let mut rows = Vec::new();
    let mut consistent = true;
    for (k, f) in fns.iter().enumerate() {
        let iv = divergence_bounds(dom, &h, &g, f)?;
        consistent &= iv.width() >= -1e-12;
        rows.push(vec![
            k.to_string(),
            fmt_f64(iv.lo),
            fmt_f64(iv.hi),
            fmt_f64(iv.width()),
        ]);
    }
    write(cfg, "intervals.csv", &["testfn", "lo", "hi", "width"], &rows)?;

    let mut summary = vec![format!("intervals computed: {}", fns.len())];
    let mut pass = consistent;

    let direction = fns[0].clone();
    let ws = subdifferential_witnesses(dom, &h, &g, &[direction.clone(), direction.scale(-1.0)]);
    match ws {
        Ok(ws) => {
            let iv = divergence_bounds(dom, &h, &g, &direction)?;
            let gap = (ws[0].pair(dom, &direction) - ws[1].pair(dom, &direction)).abs();
            summary.push(format!(
                "witness pairing gap {} vs interval width {}",
                fmt_f64(gap),
                fmt_f64(iv.width())
            ));
            pass &= (gap - iv.width()).abs() <= 1e-7 * (1.0 + iv.width());
            write(cfg, "witness_a.csv", &["site", "density"], &measure_rows(&ws[0]))?;
            write(cfg, "witness_b.csv", &["site", "density"], &measure_rows(&ws[1]))?;
        }
        Err(e) => summary.push(format!("witnesses unavailable: {e}")),
    }

    if dom.supports_unique_extraction() {
        let mu = extract_divergence(dom, &h, &g)?;
        write(cfg, "measure.csv", &["site", "density"], &measure_rows(&mu))?;
        let rep = membership(dom, &mu, &h, &g, &fns)?;
        summary.push(format!(
            "membership: {} worst_violation={} complete={}",
            if rep.member { "PASS" } else { "FAIL" },
            fmt_f64(rep.worst_violation),
            rep.complete
        ));
        pass &= rep.member;
    } else {
        summary.push("extraction skipped: pairings are multivalued on this model".into());
    }

    // calculus rules
    let mut rule_rows = Vec::new();
    let mut density_rows: Vec<Vec<String>> = Vec::new();
    let mut record = |rep: &divergence::CalculusRuleReport, rule_rows: &mut Vec<Vec<String>>| {
        rule_rows.push(vec![
            rep.rule.clone(),
            fmt_f64(rep.max_gap),
            fmt_f64(rep.tolerance),
            rep.skipped.clone().unwrap_or_else(|| {
                if rep.pass() { "pass".into() } else { "fail".into() }
            }),
        ]);
        if let Some((lhs, rhs)) = &rep.sides {
            for (site, (a, b)) in lhs.densities().iter().zip(rhs.densities()).enumerate() {
                if *a != 0.0 || *b != 0.0 {
                    density_rows.push(vec![
                        rep.rule.clone(),
                        site.to_string(),
                        fmt_f64(*a),
                        fmt_f64(*b),
                        fmt_f64((a - b).abs()),
                    ]);
                }
            }
        }
        rep.pass()
    };
    if let Domain::Grid(grid) = dom {
        let gg = GridFunction::from_values(grid, g.clone())?;
        let chain = divergence::verify_chain_rule_divergence(
            grid,
            &h,
            &gg,
            &ScalarMap::abs(),
            &fns[..fns.len().min(24)],
        )?;
        pass &= record(&chain, &mut rule_rows);
        let h1 = GridFunction::from_values(grid, grid.field_from(|x| 1.0 + 0.4 * x[0]))?;
        let h2 = grid.field_from(|x| 0.5 + 0.25 * x.get(1).copied().unwrap_or(0.0));
        let aff = GridFunction::from_values(
            grid,
            grid.field_from(|x| 0.8 * x[0] - 0.6 * x.get(1).copied().unwrap_or(0.0)),
        )?;
        pass &= record(&divergence::verify_leibniz_divergence(grid, &h1, &h2, &aff)?, &mut rule_rows);
        pass &= record(
            &divergence::verify_linearity_in_h(dom, &h1.values, &h2, (2.0, -0.7), &g)?,
            &mut rule_rows,
        );
        let g2 = field_by_name(dom, "quad")?;
        pass &= record(
            &divergence::verify_linearity_in_g(dom, &h, &g, &g2, (1.5, -2.0))?,
            &mut rule_rows,
        );
        pass &= record(
            &divergence::verify_leibniz_gradients(
                grid,
                &h,
                &GridFunction::from_values(grid, field_by_name(dom, "x1")?)?,
                &GridFunction::from_values(grid, g2.clone())?,
            )?,
            &mut rule_rows,
        );
    }
    let (left, right) = split_omega(dom, &omega)?;
    match divergence::verify_local_to_global(dom, &h, &g, &left, &right) {
        Ok(rep) => {
            pass &= record(&rep, &mut rule_rows);
        }
        Err(e) => summary.push(format!("local-to-global skipped: {e}")),
    }
    write(cfg, "rules.csv", &["rule", "max_gap", "tolerance", "verdict"], &rule_rows)?;
    write(
        cfg,
        "rule_densities.csv",
        &["rule", "site", "lhs_density", "rhs_density", "gap"],
        &density_rows,
    )?;
    summary.push(format!("rules checked: {}", rule_rows.len()));
    Ok(TaskOutcome { pass, summary })
}

fn measure_rows(mu: &pharmlab_core::space::SignedMeasure) -> Vec<Vec<String>> {
    mu.densities()
        .iter()
        .enumerate()
        .map(|(i, d)| vec![i.to_string(), fmt_f64(*d)])
        .collect()
}

/// Overlapping halves of a subdomain: split on the first coordinate
/// (grids) or the vertex index (graphs).
fn split_omega(dom: &Domain, omega: &Mask) -> Result<(Mask, Mask)> {
    let n = dom.site_count();
    let mut left = vec![false; n];
    let mut right = vec![false; n];
    match dom {
        Domain::Grid(grid) => {
            let xs: Vec<f64> =
                (0..n).filter(|&i| omega[i]).map(|i| grid.coords(i)[0]).collect();
            let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mid = 0.5 * (lo + hi);
            let pad = 0.2 * (hi - lo) + 2.0 * grid.spacing();
            for i in 0..n {
                if omega[i] {
                    let x = grid.coords(i)[0];
                    if x <= mid + pad {
                        left[i] = true;
                    }
                    if x >= mid - pad {
                        right[i] = true;
                    }
                }
            }
        }
        Domain::Graph(_) => {
            let sites: Vec<usize> = (0..n).filter(|&i| omega[i]).collect();
            let cut = sites.len() / 2;
            let pad = sites.len() / 4 + 2;
            for (k, &i) in sites.iter().enumerate() {
                if k <= cut + pad {
                    left[i] = true;
                }
                if k + pad >= cut {
                    right[i] = true;
                }
            }
        }
    }
    Ok((left, right))
}

// ----------------------------------------------------------------- minimize

fn minimize_task(cfg: &ExperimentConfig) -> Result<TaskOutcome> {
    let dom = &cfg.domain;
    let boundary = field_by_name(dom, &cfg.task_keys.boundary)?;
    let spec = EnergySpec::new(dom, cfg.numeric.p, boundary.clone())?;
    let options = SolverOptions {
        max_iterations: cfg.numeric.max_iterations,
        residual_tol: cfg.numeric.residual_tol,
        certify_seed: cfg.numeric.seed,
        ..SolverOptions::default()
    }
    .with_delta_range(cfg.numeric.delta_start, cfg.numeric.delta_floor);
    let report = minimize_p_energy(dom, &spec, &boundary, &options)?;
    write(cfg, "minimizer.csv", &field_header(dom), &field_rows(dom, &report.minimizer))?;
    let trace_rows: Vec<Vec<String>> = report
        .energy_trace
        .iter()
        .enumerate()
        .map(|(k, e)| vec![k.to_string(), fmt_f64(*e)])
        .collect();
    write(cfg, "energy_trace.csv", &["step", "energy"], &trace_rows)?;
    let fns = dom.make_test_functions(&spec.omega, cfg.numeric.bumps, cfg.numeric.seed)?;
    let cert = certify_minimizer(dom, &spec, &report.minimizer, &fns)?;
    write(
        cfg,
        "summary.csv",
        &["final_energy", "iterations", "first_order_residual", "converged", "certified"],
        &[vec![
            fmt_f64(report.final_energy),
            report.iterations.to_string(),
            fmt_f64(report.first_order_residual),
            report.converged.to_string(),
            cert.pass.to_string(),
        ]],
    )?;
    let pass = report.converged && cert.pass;
    Ok(TaskOutcome {
        pass,
        summary: vec![
            format!("final energy {}", fmt_f64(report.final_energy)),
            format!("first-order residual {}", fmt_f64(report.first_order_residual)),
            format!("certified: {}", if cert.pass { "PASS" } else { "FAIL" }),
        ],
    })
}

// ------------------------------------------------------------------ certify

fn certify_task(cfg: &ExperimentConfig) -> Result<TaskOutcome> {
    let dom = &cfg.domain;
    let g = field_by_name(dom, &cfg.task_keys.field)?;
    let spec = EnergySpec::new(dom, cfg.numeric.p, g.clone())?;
    let fns = dom.make_test_functions(&spec.omega, cfg.numeric.bumps, cfg.numeric.seed)?;
    let neg: Vec<ScalarField> = fns.iter().map(|f| f.scale(-1.0)).collect();
    let as_min = certify_minimizer(dom, &spec, &g, &fns)?;
    let as_super = certify_superminimizer(dom, &spec, &g, &fns)?;
    let as_sub = certify_subminimizer(dom, &spec, &g, &neg)?;
    let row = |name: &str, c: &pharmlab_core::minimize::CertifyReport| {
        vec![
            name.to_string(),
            c.pass.to_string(),
            fmt_f64(c.worst_margin),
            fmt_f64(c.tolerance),
            c.measure_sign_defect.map(fmt_f64).unwrap_or_default(),
        ]
    };
    write(
        cfg,
        "verdicts.csv",
        &["certificate", "pass", "worst_margin", "tolerance", "measure_sign_defect"],
        &[row("minimizer", &as_min), row("superminimizer", &as_super), row("subminimizer", &as_sub)],
    )?;
    Ok(TaskOutcome {
        pass: as_min.pass,
        summary: vec![
            format!("minimizer: {}", if as_min.pass { "PASS" } else { "FAIL" }),
            format!("superminimizer: {}", if as_super.pass { "PASS" } else { "FAIL" }),
            format!("subminimizer: {}", if as_sub.pass { "PASS" } else { "FAIL" }),
        ],
    })
}

// -------------------------------------------------------------------- sheaf

fn sheaf_task(cfg: &ExperimentConfig) -> Result<TaskOutcome> {
    let dom = &cfg.domain;
    let boundary = field_by_name(dom, &cfg.task_keys.boundary)?;
    let spec = EnergySpec::new(dom, cfg.numeric.p, boundary.clone())?;
    let g = minimize_p_energy(dom, &spec, &boundary, &SolverOptions::default())?.minimizer;
    let (left, right) = split_omega(dom, &spec.omega)?;
    let rep = sheaf_experiment(dom, &spec, &[left, right], &g, cfg.numeric.seed)?;
    let mut rows = vec![vec![
        "global".to_string(),
        rep.global.pass.to_string(),
        fmt_f64(rep.global.worst_margin),
    ]];
    for (k, c) in rep.locals.iter().enumerate() {
        rows.push(vec![format!("part_{k}"), c.pass.to_string(), fmt_f64(c.worst_margin)]);
    }
    rows.push(vec![
        "glued_divergence".into(),
        rep.pass.to_string(),
        rep.glued_density_max.map(fmt_f64).unwrap_or_default(),
    ]);
    write(cfg, "sheaf.csv", &["scope", "pass", "margin_or_density"], &rows)?;
    Ok(TaskOutcome {
        pass: rep.pass,
        summary: vec![format!(
            "sheaf: global {} / locals {} / glued max density {}",
            rep.global.pass,
            rep.locals.iter().all(|c| c.pass),
            rep.glued_density_max.map(fmt_f64).unwrap_or_default()
        )],
    })
}

// ------------------------------------------------------------------ compose

fn compose_task(cfg: &ExperimentConfig) -> Result<TaskOutcome> {
    let dom = &cfg.domain;
    let case = match cfg.task_keys.case.as_str() {
        "i" => ComposeCase::SuperConvexNonincreasing,
        "ii" => ComposeCase::SuperConcaveNondecreasing,
        "iii" => ComposeCase::SubConvexNondecreasing,
        "iv" => ComposeCase::SubConcaveNonincreasing,
        other => bail!("compose case must be i|ii|iii|iv, got `{other}`"),
    };
    let g = field_by_name(dom, &cfg.task_keys.field)?;
    let (phi, phi_name) = map_by_name(&cfg.task_keys.map)?;
    let spec = EnergySpec::new(dom, cfg.numeric.p, g.clone())?;
    let rep = compose_experiment(dom, &spec, &g, &phi, case, cfg.numeric.seed)?;
    write(
        cfg,
        "compose.csv",
        &["case", "phi", "premise_pass", "conclusion_pass", "premise_margin", "conclusion_margin"],
        &[vec![
            cfg.task_keys.case.clone(),
            phi_name.to_string(),
            rep.premise.pass.to_string(),
            rep.conclusion.pass.to_string(),
            fmt_f64(rep.premise.worst_margin),
            fmt_f64(rep.conclusion.worst_margin),
        ]],
    )?;
    Ok(TaskOutcome {
        pass: rep.pass,
        summary: vec![format!(
            "case {} with {}: premise {} conclusion {}",
            cfg.task_keys.case, phi_name, rep.premise.pass, rep.conclusion.pass
        )],
    })
}

// ------------------------------------------------------------- maxprinciple

fn maxprinciple_task(cfg: &ExperimentConfig) -> Result<TaskOutcome> {
    let dom = &cfg.domain;
    let mut candidates: Vec<(String, ScalarField)> = vec![
        ("constant".into(), ScalarField::constant(dom.site_count(), 1.0)),
        ("slope".into(), field_by_name(dom, if dom.as_grid().is_some() { "x1" } else { "ramp" })?),
    ];
    if dom.is_hilbertian_model() {
        candidates.push(("bowl".into(), field_by_name(dom, "bowl")?));
        // strictly positive random sources keep both stencil parities
        // sourced, which the rigidity check needs
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.numeric.seed);
        for k in 0..2 {
            let source = ScalarField::new(
                (0..dom.site_count()).map(|_| 0.5 + rng.gen_range(0.0..1.0)).collect(),
            )?;
            let zero = ScalarField::constant(dom.site_count(), 0.0);
            candidates.push((format!("random_source_{k}"), solve_poisson(dom, &source, &zero)?));
        }
    }
    let mut rows = Vec::new();
    let mut pass = true;
    let mut summary = Vec::new();
    for (name, g) in &candidates {
        let rep = maximum_principle_experiment(dom, g, cfg.numeric.seed)?;
        let verdict = match rep.verdict {
            MaxPrincipleVerdict::ConstantPass => "constant-pass",
            MaxPrincipleVerdict::VacuousPass => "vacuous-pass",
            MaxPrincipleVerdict::Violation => "VIOLATION",
        };
        pass &= rep.verdict != MaxPrincipleVerdict::Violation;
        rows.push(vec![
            name.clone(),
            verdict.to_string(),
            rep.superminimizer.to_string(),
            rep.interior_minimum.to_string(),
            fmt_f64(rep.oscillation),
        ]);
        summary.push(format!("{name}: {verdict}"));
    }
    write(
        cfg,
        "maxprinciple.csv",
        &["candidate", "verdict", "superminimizer", "interior_minimum", "oscillation"],
        &rows,
    )?;
    Ok(TaskOutcome { pass, summary })
}

// ----------------------------------------------------------------- busemann

fn busemann_task(cfg: &ExperimentConfig) -> Result<TaskOutcome> {
    let grid = grid_of(&cfg.domain)?;
    let line = LineSpec::through(
        grid.norm(),
        cfg.task_keys.line_base.clone(),
        cfg.task_keys.line_dir.clone(),
    )?;
    let (pair, rep) = busemann_harmonicity_experiment(grid, &line, cfg.task_keys.t_max)?;
    let dom = &cfg.domain;
    write(cfg, "bplus.csv", &field_header(dom), &field_rows(dom, &pair.bplus))?;
    write(cfg, "bminus.csv", &field_header(dom), &field_rows(dom, &pair.bminus))?;
    write(cfg, "bsum.csv", &field_header(dom), &field_rows(dom, &pair.sum()))?;
    if let Some(mu) = &rep.mu_plus {
        write(cfg, "mu_plus.csv", &["site", "density"], &measure_rows(mu))?;
    }
    if let Some(mu) = &rep.mu_minus {
        write(cfg, "mu_minus.csv", &["site", "density"], &measure_rows(mu))?;
    }
    // convergence profile of the truncated ray at a probe point off the line
    let probe: Vec<f64> = (0..grid.dim())
        .map(|k| cfg.task_keys.line_base[k] + if k == grid.dim() - 1 { 0.5 } else { 0.1 })
        .collect();
    let profile =
        pharmlab_core::potential::busemann_profile(grid.norm(), &line, &probe, cfg.task_keys.t_max)?;
    let profile_rows: Vec<Vec<String>> =
        profile.iter().map(|(t, v)| vec![fmt_f64(*t), fmt_f64(*v)]).collect();
    write(cfg, "profile.csv", &["t", "value"], &profile_rows)?;
    write(
        cfg,
        "busemann.csv",
        &["hilbertian", "sum_sup", "mu_plus_max", "mu_minus_max", "plus_certified", "minus_certified", "pass"],
        &[vec![
            rep.hilbertian.to_string(),
            fmt_f64(rep.sum_sup),
            rep.mu_plus_max.map(fmt_f64).unwrap_or_default(),
            rep.mu_minus_max.map(fmt_f64).unwrap_or_default(),
            rep.plus_certified.map(|b| b.to_string()).unwrap_or_default(),
            rep.minus_certified.map(|b| b.to_string()).unwrap_or_default(),
            rep.pass.to_string(),
        ]],
    )?;
    write_plot_script(&cfg.out_dir, grid.dim())?;
    Ok(TaskOutcome {
        pass: rep.pass,
        summary: vec![
            format!("hilbertian: {}", rep.hilbertian),
            format!("max |b+ + b-| = {}", fmt_f64(rep.sum_sup)),
        ],
    })
}

/// Emits a plot script for the Busemann CSVs so the binary itself needs no
/// graphics dependencies.
fn write_plot_script(dir: &Path, dim: usize) -> Result<()> {
    let script = if dim == 2 {
        r#"#!/usr/bin/env python3
"""Heatmaps of the Busemann fields, their sum, and the extracted divergence
densities emitted next to this script."""
import csv
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(__file__).parent

def load_field(name):
    xs, ys, vs = [], [], []
    with open(here / name) as fh:
        for row in csv.DictReader(fh):
            xs.append(float(row["x1"]))
            ys.append(float(row["x2"]))
            vs.append(float(row["value"]))
    return xs, ys, vs

def load_measure(name, coords):
    vs = []
    with open(here / name) as fh:
        for row in csv.DictReader(fh):
            vs.append(float(row["density"]))
    return coords[0], coords[1], vs

panels = [("bplus.csv", "field"), ("bminus.csv", "field"), ("bsum.csv", "field")]
for mu in ["mu_plus.csv", "mu_minus.csv"]:
    if (here / mu).exists():
        panels.append((mu, "measure"))

coords = load_field("bplus.csv")[:2]
fig, axes = plt.subplots(1, len(panels), figsize=(5 * len(panels), 4))
for ax, (name, kind) in zip(axes, panels):
    xs, ys, vs = load_field(name) if kind == "field" else load_measure(name, coords)
    sc = ax.tricontourf(xs, ys, vs, levels=32)
    ax.set_title(name.removesuffix(".csv"))
    fig.colorbar(sc, ax=ax)
out = here / "busemann.png"
fig.savefig(out, dpi=150, bbox_inches="tight")
print(f"wrote {out}")
"#
    } else {
        r#"#!/usr/bin/env python3
"""Line plots of the Busemann fields emitted next to this script."""
import csv
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(__file__).parent
for name in ["bplus.csv", "bminus.csv", "bsum.csv"]:
    xs, vs = [], []
    with open(here / name) as fh:
        for row in csv.DictReader(fh):
            xs.append(float(row["x1"]))
            vs.append(float(row["value"]))
    plt.plot(xs, vs, label=name.removesuffix(".csv"))
plt.legend()
plt.savefig(here / "busemann.png", dpi=150, bbox_inches="tight")
"#
    };
    std::fs::write(dir.join("plot_busemann.py"), script)?;
    Ok(())
}

// ----------------------------------------------------------------- poincare

fn poincare_task(cfg: &ExperimentConfig) -> Result<TaskOutcome> {
    let grid = grid_of(&cfg.domain)?;
    let dom = &cfg.domain;
    let mut fields = vec![field_by_name(dom, "x1")?];
    if grid.dim() >= 2 {
        fields.push(field_by_name(dom, "xy")?);
    }
    let bumps = dom.make_test_functions(dom.omega(), 2, cfg.numeric.seed)?;
    fields.extend(bumps.into_iter().skip(bumps_offset(dom)));
    let smooth_count = fields.len();
    // stencil-scale checkerboard, expected to blow the ratio up
    fields.push(ScalarField::new(
        (0..grid.site_count())
            .map(|i| {
                let m = grid.multi_index(i);
                if m.iter().sum::<usize>() % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect(),
    )?);
    let rep = poincare_diagnostic(grid, cfg.numeric.p0, &fields, cfg.numeric.balls, cfg.numeric.seed)?;
    let smooth_max = rep
        .rows
        .iter()
        .filter(|r| r.field < smooth_count)
        .map(|r| r.ratio)
        .fold(0.0f64, f64::max);
    let flag_threshold = 10.0 * smooth_max.max(1e-9);
    let rows: Vec<Vec<String>> = rep
        .rows
        .iter()
        .map(|r| {
            vec![
                r.center.to_string(),
                fmt_f64(r.radius),
                r.field.to_string(),
                fmt_f64(r.ratio),
                (r.ratio > flag_threshold).to_string(),
            ]
        })
        .collect();
    write(cfg, "poincare.csv", &["center", "radius", "field", "ratio", "sub_resolution_flag"], &rows)?;
    Ok(TaskOutcome {
        pass: smooth_max.is_finite(),
        summary: vec![format!(
            "estimated constant over smooth fields: {}",
            fmt_f64(smooth_max)
        )],
    })
}

fn bumps_offset(dom: &Domain) -> usize {
    // make_test_functions returns hats first; skip them
    let strict = dom.strict_interior(dom.omega());
    strict.iter().filter(|&&b| b).count()
}
