//! Independent oracles for the norm algebra: brute-force maximization of
//! the Fenchel coupling, a basis-enumeration linear program for the
//! polyhedral Minkowski functional, and numeric dual-norm maximization.
//! These recompute expected values through routes that share no code with
//! the library paths they check.

use pharmlab_core::norm::NormSpec;

/// Maximizes `<xi, w> - 0.5 |w|^2` over a fine grid of `w`; the maximizer
/// set is the gradient set of `xi` and the value is `0.5 |xi|_*^2`.
fn brute_force_coupling(norm: &NormSpec, xi: &[f64], span: f64, steps: usize) -> (Vec<f64>, f64) {
    let mut best = (vec![0.0; xi.len()], f64::NEG_INFINITY);
    let mut w = vec![0.0; xi.len()];
    let mut idx = vec![0usize; xi.len()];
    loop {
        for (k, &i) in idx.iter().enumerate() {
            w[k] = -span + 2.0 * span * i as f64 / steps as f64;
        }
        let nv = norm.eval(&w).unwrap();
        let val = xi.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() - 0.5 * nv * nv;
        if val > best.1 {
            best = (w.clone(), val);
        }
        let mut k = 0;
        loop {
            if k == idx.len() {
                return best;
            }
            idx[k] += 1;
            if idx[k] <= steps {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

#[test]
fn fenchel_grid_search_confirms_max_norm_gradients() {
    let linf = NormSpec::lp(2, f64::INFINITY).unwrap();

    // At (2,1) the dual l^1 norm is differentiable; the grid search lands on
    // |xi|_1 * sign(xi) = (3,3), pinning the singleton the library returns.
    let (w, val) = brute_force_coupling(&linf, &[2.0, 1.0], 4.0, 160);
    assert!((w[0] - 3.0).abs() <= 0.06 && (w[1] - 3.0).abs() <= 0.06, "argmax {w:?}");
    let dual = linf.eval_dual(&[2.0, 1.0]).unwrap();
    assert!((val - 0.5 * dual * dual).abs() < 1e-2);
    match linf.gradient_set(&[2.0, 1.0]).unwrap() {
        pharmlab_core::norm::GradientSet::Singleton(s) => {
            assert!((s[0] - 3.0).abs() < 1e-12 && (s[1] - 3.0).abs() < 1e-12)
        }
        _ => panic!("expected a singleton at a smooth point"),
    }

    // At (1,0) the coupling value is attained along the whole segment
    // {(1,t)}; both library extreme points must reach the brute-force value.
    let (_, val) = brute_force_coupling(&linf, &[1.0, 0.0], 2.0, 200);
    for w in linf.gradient_set(&[1.0, 0.0]).unwrap().points() {
        let nv = linf.eval(w).unwrap();
        let lib_val = w[0] - 0.5 * nv * nv;
        assert!((lib_val - val).abs() < 1e-2, "{lib_val} vs {val}");
    }
}

/// Minimizes `sum k_i` subject to `sum k_i g_i = v`, `k >= 0` by
/// enumerating all basis pairs in the plane: the Minkowski functional of
/// the generator hull.
fn minkowski_lp_2d(gens: &[[f64; 2]], v: [f64; 2]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, a) in gens.iter().enumerate() {
        for b in gens.iter().skip(i + 1) {
            let det = a[0] * b[1] - a[1] * b[0];
            if det.abs() < 1e-12 {
                continue;
            }
            let ka = (v[0] * b[1] - v[1] * b[0]) / det;
            let kb = (a[0] * v[1] - a[1] * v[0]) / det;
            if ka >= -1e-12 && kb >= -1e-12 {
                best = best.min(ka.max(0.0) + kb.max(0.0));
            }
        }
    }
    best
}

#[test]
fn minkowski_lp_oracle_matches_polyhedral_eval() {
    let gens = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]];
    let norm = NormSpec::polyhedral(2, vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    assert!((minkowski_lp_2d(&gens, [1.0, 1.0]) - 2.0).abs() < 1e-12);
    for v in [[1.0, 1.0], [0.3, -0.7], [-2.0, 0.5], [0.0, 1.3]] {
        let lp = minkowski_lp_2d(&gens, v);
        let lib = norm.eval(&v).unwrap();
        assert!((lp - lib).abs() < 1e-10, "v {v:?}: {lp} vs {lib}");
    }

    // a hexagonal ball
    let hex: Vec<Vec<f64>> =
        vec![vec![1.0, 0.0], vec![0.5, 1.0], vec![-0.5, 1.0]];
    let norm = NormSpec::polyhedral(2, hex.clone()).unwrap();
    let mut gens6: Vec<[f64; 2]> = Vec::new();
    for g in &hex {
        gens6.push([g[0], g[1]]);
        gens6.push([-g[0], -g[1]]);
    }
    for v in [[1.0, 0.2], [0.0, 1.0], [-0.7, -0.4], [0.9, 0.9]] {
        let lp = minkowski_lp_2d(&gens6, v);
        let lib = norm.eval(&v).unwrap();
        assert!((lp - lib).abs() < 1e-10, "v {v:?}: {lp} vs {lib}");
    }
}

#[test]
fn dual_norm_by_numeric_maximization() {
    // maximize <xi, v> over |v|_3 = 1, parameterized by angle with radial
    // correction; the closed form is |xi|_{3/2}.
    let l3 = NormSpec::lp(2, 3.0).unwrap();
    let xi = [1.0, 1.0];
    let mut best = 0.0f64;
    let n = 400_000;
    for k in 0..n {
        let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
        let raw = [t.cos(), t.sin()];
        let scale = l3.eval(&raw).unwrap();
        best = best.max((xi[0] * raw[0] + xi[1] * raw[1]) / scale);
    }
    let closed = 2.0f64.powf(1.0 / 1.5);
    assert!((best - closed).abs() < 1e-9, "numeric {best} vs closed {closed}");
    assert!((l3.eval_dual(&xi).unwrap() - closed).abs() < 1e-12);
}

#[test]
fn quotient_route_agrees_with_independent_quotients() {
    // plain two-norm quotients (no shared defect code) at a moderate step,
    // compared against the gradient-set route
    let norms = [
        NormSpec::lp(2, 1.5).unwrap(),
        NormSpec::lp(2, 2.0).unwrap(),
        NormSpec::lp(2, 3.0).unwrap(),
        NormSpec::lp(2, f64::INFINITY).unwrap(),
        NormSpec::lp(2, 1.0).unwrap(),
    ];
    // generic covectors (no vanishing coordinates): the quotients are
    // eps-linear and the Richardson estimate is sharp
    let pairs = [
        ([0.7, -0.2], [1.0, 0.3]),
        ([0.5, 0.5], [0.4, -1.0]),
        ([1.0, 2.0], [3.0, 4.0]),
    ];
    for norm in &norms {
        for (df, dg) in &pairs {
            let (plus, minus) = pharmlab_core::dcalc::dpm_pointwise(norm, df, dg).unwrap();
            let base = norm.eval_dual(dg).unwrap();
            let q = |eps: f64| {
                let shifted: Vec<f64> = dg.iter().zip(df).map(|(a, b)| a + eps * b).collect();
                let nv = norm.eval_dual(&shifted).unwrap();
                (0.5 * nv * nv - 0.5 * base * base) / eps
            };
            // extrapolate the linear-in-eps tail: 2 q(e) - q(2e)
            let e = 1e-5;
            let plus_est = 2.0 * q(e) - q(2.0 * e);
            let minus_est = 2.0 * q(-e) - q(-2.0 * e);
            let scale = 1.0 + norm.eval_dual(df).unwrap() * base;
            assert!((plus - plus_est).abs() < 1e-5 * scale, "plus {plus} vs {plus_est}");
            assert!((minus - minus_est).abs() < 1e-5 * scale, "minus {minus} vs {minus_est}");
        }
    }
    // an axis pair: one-sided values are still bracketed by raw quotients
    for norm in &norms {
        let (df, dg) = ([0.0, 1.0], [1.0, 0.0]);
        let (plus, minus) = pharmlab_core::dcalc::dpm_pointwise(norm, &df, &dg).unwrap();
        let base = norm.eval_dual(&dg).unwrap();
        let q = |eps: f64| {
            let shifted: Vec<f64> = dg.iter().zip(df).map(|(a, b)| a + eps * b).collect();
            let nv = norm.eval_dual(&shifted).unwrap();
            (0.5 * nv * nv - 0.5 * base * base) / eps
        };
        assert!(q(1e-4) >= plus - 1e-10 && q(-1e-4) <= minus + 1e-10);
    }
}
