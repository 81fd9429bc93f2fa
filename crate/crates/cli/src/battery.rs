//! Scenario builders for the acceptance battery and the checks `rbsde battery` runs on them.
//!
//! Builders are public so external test suites can run their own oracles on the same data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rbsde_core::bsde::{
    solve_bsde, solve_bsde_sequence, Forcing, KappaOffset, ScenarioConfig, SchemeConfig, SequenceKind,
    SolutionTriple,
};
use rbsde_core::generators::certify::{certify_declared, SamplerConfig};
use rbsde_core::generators::library::{
    abs_z, cubic, from_id, h2w_zsin, linear, osgood_log, uniform_z, zero, UniformVariant, LIBRARY,
};
use rbsde_core::generators::{implied_closure, inf_convolution, sup_convolution, Coefficient, GeneratorSpec, Hypothesis};
use rbsde_core::lattice::{solve_bsde_lattice, Lattice};
use rbsde_core::rbsde::{
    check_h6, penalization_sweep, solve_penalized, solve_reflected_projection,
    strictly_decreasing, theorem3_necessity,
};
use rbsde_core::theorems::{
    compare_increments, compare_rbsde, estimate_diagnostic, extremal_reflected, proposition7_bound,
    EstimateId, EstimateInput, Side,
};
use rbsde_core::tree::{
    hp_norm, martingale_representation, sp_norm, stochastic_integral, variation_norm, AdaptedProcess, Node,
    NormParams, TreeModel,
};
use rbsde_core::LabError;

use crate::error::{CliError, CliResult};
use crate::report::Report;

pub const COMMAND: &str = "battery";

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct Criterion {
    pub id: usize,
    pub name: &'static str,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct BatteryOutcome {
    pub report: Report,
    pub criteria: Vec<Criterion>,
}

fn lab(what: impl Into<String>) -> impl FnOnce(LabError) -> CliError {
    let what = what.into();
    move |e| CliError::lab(what, e)
}

fn tree(horizon: f64, depth: usize) -> TreeModel {
    TreeModel::new(horizon, depth, 1).expect("battery trees fit the size limit")
}

fn leaf_values(tree: &TreeModel, f: impl Fn(f64) -> f64) -> Vec<f64> {
    tree.brownian().terminal().iter().map(|&b| f(b)).collect()
}

fn process(tree: TreeModel, f: impl Fn(f64, f64) -> f64) -> AdaptedProcess {
    let b = tree.brownian();
    AdaptedProcess::from_fn(tree, tree.depth() + 1, |n| f(tree.time(n.level), b.at(n)))
}

/// Default exponents of the battery.
pub fn battery_norms() -> [NormParams; 3] {
    NormParams::battery()
}

// ---------------------------------------------------------------- exactness

/// A leaf function and an adapted integrand on one tree.
#[derive(Debug, Clone)]
pub struct ExactnessCase {
    pub id: String,
    pub tree: TreeModel,
    pub leaf: Vec<f64>,
    pub z: AdaptedProcess,
}

/// Twenty one-dimensional trees with varying depth, horizon and leaf function.
pub fn exactness_cases() -> Vec<ExactnessCase> {
    let horizons = [1.0, 0.5, 2.0, 1.5];
    (0..20)
        .map(|s| {
            let depth = 1 + s % 12;
            let tr = tree(horizons[s % 4], depth);
            let fs = s as f64;
            let leaf: Vec<f64> = (0..tr.leaves())
                .map(|i| (1.3 * i as f64 + 0.7 * fs).sin() + 0.1 * (i % 7) as f64)
                .collect();
            let z = AdaptedProcess::from_fn(tr, depth, |n| (0.3 * n.index as f64 + n.level as f64 + 0.1 * fs).cos());
            ExactnessCase {
                id: format!("c1-{s:02}"),
                tree: tr,
                leaf,
                z,
            }
        })
        .collect()
}

/// `(tower, isometry, representation)` errors of one case.
pub fn exactness_errors(case: &ExactnessCase) -> Result<(f64, f64, f64), LabError> {
    let tr = case.tree;
    let n = tr.depth();
    let mut tower = 0.0f64;
    for k in 0..n {
        let fine = tr.condition_leaves(&case.leaf, k + 1)?;
        let twice = tr.conditional_expectation(&fine, k)?;
        let once = tr.condition_leaves(&case.leaf, k)?;
        for (a, b) in twice.iter().zip(&once) {
            tower = tower.max((a - b).abs());
        }
    }
    let m = stochastic_integral(&case.z)?;
    let h = tr.step();
    let second_moment = tr.expectation(&m.terminal().iter().map(|x| x * x).collect::<Vec<_>>());
    let qv: Vec<f64> = (0..tr.leaves())
        .map(|leaf| (0..n).map(|k| case.z.magnitude(k, tr.ancestor(leaf, k)).powi(2) * h).sum())
        .collect();
    let isometry = (second_moment - tr.expectation(&qv)).abs();
    let (y, z) = martingale_representation(tr, &case.leaf)?;
    let mz = stochastic_integral(&z)?;
    let representation = case
        .leaf
        .iter()
        .zip(mz.terminal())
        .map(|(x, m)| (y.value(0, 0) + m - x).abs())
        .fold(0.0, f64::max);
    Ok((tower, isometry, representation))
}

fn criterion_exactness(r: &mut Report) -> CliResult<bool> {
    let mut pass = true;
    for case in exactness_cases() {
        let (t, i, m) = exactness_errors(&case).map_err(lab(&case.id))?;
        let ok = t <= 1e-12 && i <= 1e-12 && m <= 1e-12;
        pass &= ok;
        let mut c = Report::new(&case.id, COMMAND);
        c.push(0, None, "tower_error", t);
        c.push(0, None, "isometry_error", i);
        c.push(0, None, "representation_error", m);
        r.merge(c);
    }
    Ok(pass)
}

// ---------------------------------------------------------------- closed form

pub const CLOSED_FORM_A: f64 = 0.5;
pub const CLOSED_FORM_DEPTHS: [usize; 5] = [4, 8, 16, 32, 64];
/// Depths at which the tree solver is run alongside the lattice.
pub const CLOSED_FORM_TREE_DEPTHS: [usize; 3] = [4, 8, 16];

pub fn closed_form_generator() -> GeneratorSpec {
    linear(CLOSED_FORM_A, 0.0, 0.0, 1)
}

pub fn closed_form_terminal(b: f64) -> f64 {
    b * b
}

/// `Y_0` of `g = a y`, `xi = B_T^2` on the tree; defined for depths within the size limit.
pub fn closed_form_tree_y0(depth: usize) -> Result<f64, LabError> {
    let tr = TreeModel::new(1.0, depth, 1)?;
    let sc = ScenarioConfig::new(tr, leaf_values(&tr, closed_form_terminal), closed_form_generator())?;
    Ok(solve_bsde(&sc)?.y0())
}

pub fn closed_form_lattice_y0(depth: usize) -> Result<f64, LabError> {
    let lat = Lattice::new(1.0, depth)?;
    let sol = solve_bsde_lattice(&lat, closed_form_terminal, &closed_form_generator(), &SchemeConfig::explicit(), None)?;
    Ok(sol.y0())
}

fn criterion_closed_form(r: &mut Report) -> CliResult<bool> {
    let exact = CLOSED_FORM_A.exp();
    let mut c = Report::new("c2-exponential", COMMAND);
    let mut errors = Vec::new();
    let mut pass = true;
    for (j, &n) in CLOSED_FORM_DEPTHS.iter().enumerate() {
        let y0 = closed_form_lattice_y0(n).map_err(lab("c2 lattice"))?;
        c.push(j, None, "N", n as f64);
        c.push(j, None, "Y0", y0);
        c.push(j, None, "error", (y0 - exact).abs());
        errors.push((y0 - exact).abs());
        if CLOSED_FORM_TREE_DEPTHS.contains(&n) {
            let t0 = closed_form_tree_y0(n).map_err(lab("c2 tree"))?;
            let d = (t0 - y0).abs();
            c.push(j, None, "tree_minus_lattice", d);
            pass &= d <= 1e-12 * y0.abs().max(1.0);
        }
    }
    for (j, w) in errors.windows(2).enumerate() {
        let ratio = w[0] / w[1];
        c.push(j + 1, None, "halving_ratio", ratio);
        pass &= (1.6..=2.4).contains(&ratio);
    }
    r.merge(c);
    Ok(pass)
}

// ---------------------------------------------------------------- Snell

pub const SNELL_SEED: u64 = 0x5E11;

/// Ten barrier scenarios with `g = 0`, `V = 0` and seeded random barriers of the form
/// `a + b B + c sin(w B + phi) + e t`; the terminal value is `L_N + u |B_T|`.
pub fn snell_scenarios(depth: usize) -> Vec<ScenarioConfig> {
    let tr = tree(1.0, depth);
    (0..10)
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(SNELL_SEED + s);
            let a = rng.gen_range(-0.5..0.5);
            let b = rng.gen_range(-1.0..1.0);
            let c = rng.gen_range(0.0..0.5);
            let w = rng.gen_range(0.5..3.0);
            let phi = rng.gen_range(0.0..std::f64::consts::TAU);
            let e = rng.gen_range(-0.5..0.5);
            let u = rng.gen_range(0.0..1.0);
            let barrier = move |t: f64, x: f64| a + b * x + c * (w * x + phi).sin() + e * t;
            let l = process(tr, barrier);
            let xi = leaf_values(&tr, |x| barrier(1.0, x) + u * x.abs());
            ScenarioConfig::new(tr, xi, zero(1))
                .and_then(|sc| sc.with_barrier(l))
                .expect("terminal dominates barrier")
                .with_id(format!("c3-{s:02}-N{depth}"))
        })
        .collect()
}

/// `U_N = xi`, `U_k = max(L_k, E[U_{k+1} | F_k])`.
pub fn snell_envelope(sc: &ScenarioConfig) -> Result<AdaptedProcess, LabError> {
    let tr = sc.tree;
    let l = sc.barrier().expect("Snell scenarios carry a barrier");
    let mut levels = vec![Vec::new(); tr.depth() + 1];
    levels[tr.depth()] = sc.terminal().to_vec();
    for k in (0..tr.depth()).rev() {
        let ce = tr.conditional_expectation(&levels[k + 1], k)?;
        levels[k] = ce.iter().zip(l.level(k)).map(|(c, l)| c.max(*l)).collect();
    }
    AdaptedProcess::from_levels(tr, 1, levels)
}

fn criterion_snell(r: &mut Report) -> CliResult<bool> {
    let mut pass = true;
    for sc in snell_scenarios(10) {
        let sol = solve_reflected_projection(&sc).map_err(lab(&sc.id))?;
        let u = snell_envelope(&sc).map_err(lab(&sc.id))?;
        let err = sol.y.sub(&u).map_err(lab(&sc.id))?.max_over_nodes(f64::abs);
        pass &= err <= 1e-12;
        let mut c = Report::new(&sc.id, COMMAND);
        c.push(0, None, "max_abs_Y_minus_snell", err);
        c.push(0, None, "Y0", sol.y0());
        r.merge(c);
    }
    Ok(pass)
}

// ---------------------------------------------------------------- comparison

fn pair(
    id: String,
    tr: TreeModel,
    g: (GeneratorSpec, GeneratorSpec),
    xi: (fn(f64) -> f64, f64),
    barrier: Option<(fn(f64, f64) -> f64, f64)>,
    forcing: Option<f64>,
    scheme: SchemeConfig,
) -> (ScenarioConfig, ScenarioConfig) {
    let make = |g: GeneratorSpec, shift: f64, lshift: f64, vrate: f64, tag: &str| {
        let x = leaf_values(&tr, |b| (xi.0)(b) + shift * (1.0 + b.abs()));
        let mut sc = ScenarioConfig::new(tr, x, g)
            .expect("battery scenario")
            .with_scheme(scheme.clone())
            .with_id(format!("{id}-{tag}"));
        if let Some(rate) = forcing {
            let h = tr.step();
            let inc = AdaptedProcess::from_fn(tr, tr.depth(), |n| h * (rate + vrate) * (1.0 + 0.5 * (n.index % 3) as f64));
            sc = sc.with_forcing(Forcing::from_increments(inc).expect("finite forcing")).expect("same tree");
        }
        if let Some((l, _)) = barrier {
            let lp = process(tr, |t, b| l(t, b) + lshift);
            let lp = AdaptedProcess::from_fn(tr, tr.depth() + 1, |n| {
                if n.level == tr.depth() {
                    lp.at(n).min(sc.terminal()[n.index])
                } else {
                    lp.at(n)
                }
            });
            sc = sc.with_barrier(lp).expect("barrier capped by terminal");
        }
        sc
    };
    let lshift = barrier.map(|b| b.1).unwrap_or(0.0);
    let s1 = make(g.0, 0.0, 0.0, 0.0, "1");
    let s2 = make(g.1, xi.1, lshift, 0.3, "2");
    (s1, s2)
}

/// Ordered pairs over Lipschitz, one-sided Osgood and uniformly continuous drivers.
///
/// Every pair satisfies `xi^1 <= xi^2`, `dV^1 <= dV^2`, `L^1 <= L^2` and `g^1 <= g^2`; the
/// scheme of each `g^2` is monotone on the visited region.
pub fn comparison_pairs() -> Vec<(ScenarioConfig, ScenarioConfig)> {
    let tr = tree(1.0, 10);
    let um = |c, a, e| uniform_z(c, a, e, UniformVariant::Min, 1);
    let families: Vec<(&str, GeneratorSpec, GeneratorSpec, SchemeConfig)> = vec![
        ("lin-shift", linear(0.2, 0.4, 0.0, 1), linear(0.2, 0.4, 0.3, 1), SchemeConfig::explicit()),
        ("lin-absz", linear(-0.3, 0.5, 0.1, 1), abs_z(0.5, -0.3, 0.1, 1), SchemeConfig::explicit()),
        ("absz-c", abs_z(0.2, 0.1, 0.0, 1), abs_z(0.8, 0.1, 0.0, 1), SchemeConfig::fixed_point()),
        ("osgood-e", osgood_log(0.5, 0.3, 0.0, 1).unwrap(), osgood_log(0.5, 0.3, 0.2, 1).unwrap(), SchemeConfig::explicit()),
        ("osgood-c", osgood_log(0.2, -0.4, 0.1, 1).unwrap(), osgood_log(0.9, -0.4, 0.1, 1).unwrap(), SchemeConfig::explicit()),
        ("cubic-c", cubic(1.0, 0.5, -0.2, 1).unwrap(), cubic(1.0, 0.5, 0.2, 1).unwrap(), SchemeConfig::fixed_point()),
        ("unif-e", um(0.8, 0.1, 0.0), um(0.8, 0.1, 0.25), SchemeConfig::explicit()),
        ("unif-c", um(0.3, -0.2, 0.0), um(1.2, -0.2, 0.0), SchemeConfig::fixed_point()),
    ];
    let terminals: [fn(f64) -> f64; 3] = [|b| (2.0 * b).sin() * 0.5, |b| (0.4 - b).max(0.0), |b| 0.3 * b];
    let barriers: [fn(f64, f64) -> f64; 2] = [|_t, b| 0.2 - b.abs(), |t, b| 0.1 * t - 0.5 * b];
    let mut out = Vec::new();
    for (j, (name, g1, g2, scheme)) in families.into_iter().enumerate() {
        let xi = terminals[j % 3];
        out.push(pair(
            format!("c4-{name}-plain"),
            tr,
            (g1.clone(), g2.clone()),
            (xi, 0.0),
            None,
            None,
            scheme.clone(),
        ));
        out.push(pair(
            format!("c4-{name}-barrier"),
            tr,
            (g1.clone(), g2.clone()),
            (xi, 0.1),
            Some((barriers[j % 2], 0.05)),
            None,
            scheme.clone(),
        ));
        out.push(pair(
            format!("c4-{name}-forced"),
            tr,
            (g1, g2),
            (xi, 0.05),
            Some((barriers[(j + 1) % 2], 0.0)),
            Some(0.1),
            scheme,
        ));
    }
    out
}

pub fn solve_any(sc: &ScenarioConfig) -> Result<SolutionTriple, LabError> {
    if sc.barrier().is_some() {
        solve_reflected_projection(sc)
    } else {
        solve_bsde(sc)
    }
}

fn criterion_comparison(r: &mut Report, solved: &mut Vec<(ScenarioConfig, SolutionTriple)>) -> CliResult<bool> {
    let mut pass = true;
    for (sc1, sc2) in comparison_pairs() {
        let s1 = solve_any(&sc1).map_err(lab(&sc1.id))?;
        let s2 = solve_any(&sc2).map_err(lab(&sc2.id))?;
        let v = compare_rbsde(&s1, &s2, &sc1, &sc2, 1e-10).map_err(lab(&sc1.id))?;
        pass &= v.pass;
        let mut c = Report::new(format!("{}_vs_{}", sc1.id, sc2.id), COMMAND);
        c.push(0, None, "max_Y1_minus_Y2_pos", v.y_violation);
        c.push(0, None, "indicator_residual", v.indicator_residual);
        r.merge(c);
        solved.push((sc1, s1));
        solved.push((sc2, s2));
    }
    Ok(pass)
}

// ---------------------------------------------------------------- penalization

pub fn penalization_schedule() -> Vec<f64> {
    (0..=10).map(|j| 2f64.powi(j)).collect()
}

/// Put-like barrier `(0.3 - B)^+`, `xi = L_N`, `g = -0.2 y + 0.5 z + 0.1`, `N = 10`.
pub fn penalization_scenario() -> ScenarioConfig {
    let tr = tree(1.0, 10);
    let l = process(tr, |_t, b| (0.3 - b).max(0.0));
    let xi = l.terminal().to_vec();
    ScenarioConfig::new(tr, xi, linear(-0.2, 0.5, 0.1, 1))
        .and_then(|sc| sc.with_barrier(l))
        .expect("penalization scenario")
        .with_id("c5-put")
}

fn criterion_penalization(r: &mut Report, solved: &mut Vec<(ScenarioConfig, SolutionTriple)>) -> CliResult<bool> {
    let sc = penalization_scenario();
    let schedule = penalization_schedule();
    let rep = penalization_sweep(&sc, &schedule).map_err(lab(&sc.id))?;
    let mut c = Report::new(&sc.id, COMMAND);
    let mut pass = rep.monotone_violation <= 1e-12;
    c.push(0, None, "monotone_violation", rep.monotone_violation);
    c.push(0, None, "domination_violation", rep.domination_violation);
    for p in battery_norms() {
        let (y, z, k) = rep.gaps_for(p.p()).expect("battery exponents are reported");
        for (j, ((yv, zv), kv)) in y.iter().zip(z).zip(k).enumerate() {
            c.push(j, Some(p.p()), "Y_gap", *yv);
            c.push(j, Some(p.p()), "Z_gap", *zv);
            c.push(j, Some(p.p()), "K_gap", *kv);
        }
        pass &= strictly_decreasing(y) && *y.last().expect("nonempty") <= 1e-2;
    }
    let deficits: Vec<f64> = rep.residuals.iter().map(|s| s.deficit_sup).collect();
    for (j, d) in deficits.iter().enumerate() {
        c.push(j, None, "deficit_sup", *d);
        c.push(j, None, "complementarity", rep.residuals[j].complementarity);
    }
    pass &= strictly_decreasing(&deficits);
    let direct = solve_penalized(&sc, schedule[schedule.len() - 1]).map_err(lab(&sc.id))?;
    c.push(0, None, "direct_minus_sweep", direct.y.sub(&rep.solutions[schedule.len() - 1].y).map_err(lab(&sc.id))?.max_over_nodes(f64::abs));
    r.merge(c);
    solved.push((sc.clone(), rep.reference.clone()));
    solved.push((sc, direct));
    Ok(pass)
}

// ---------------------------------------------------------------- increments

/// Pairs with a common barrier and `g^1 <= g^2`.
pub fn increment_pairs() -> Vec<(ScenarioConfig, ScenarioConfig)> {
    let tr = tree(1.0, 10);
    let um = |c, a, e| uniform_z(c, a, e, UniformVariant::Min, 1);
    let families: Vec<(&str, GeneratorSpec, GeneratorSpec)> = vec![
        ("lin", linear(0.1, 0.3, 0.0, 1), linear(0.1, 0.3, 0.5, 1)),
        ("absz", abs_z(0.3, -0.2, 0.0, 1), abs_z(0.9, -0.2, 0.0, 1)),
        ("unif", um(0.5, 0.0, -0.1), um(0.5, 0.0, 0.3)),
        ("osgood", osgood_log(0.3, 0.2, 0.0, 1).unwrap(), osgood_log(0.8, 0.2, 0.0, 1).unwrap()),
        ("cubic", cubic(0.5, 0.2, 0.0, 1).unwrap(), cubic(0.5, 0.2, 0.4, 1).unwrap()),
        ("zsin", h2w_zsin(-0.1, 0.3, 1.0, Coefficient::Constant(0.0), 1).unwrap(), h2w_zsin(-0.1, 0.3, 1.0, Coefficient::Constant(0.4), 1).unwrap()),
    ];
    let barriers: [fn(f64, f64) -> f64; 2] = [|_t, b| 0.6 - b.abs(), |t, b| (0.3 - b).max(0.0) - 0.1 * t];
    families
        .into_iter()
        .enumerate()
        .map(|(j, (name, g1, g2))| {
            let lf = barriers[j % 2];
            let l = process(tr, lf);
            let xi1 = leaf_values(&tr, |b| lf(1.0, b) + 0.2 * (b * 3.0).sin().abs());
            let xi2: Vec<f64> = xi1.iter().zip(tr.brownian().terminal()).map(|(x, b)| x + 0.1 * b.abs()).collect();
            let mk = |xi: Vec<f64>, g: GeneratorSpec, tag: &str| {
                ScenarioConfig::new(tr, xi, g)
                    .and_then(|sc| sc.with_barrier(l.clone()))
                    .expect("increment scenario")
                    .with_id(format!("c6-{name}-{tag}"))
            };
            (mk(xi1, g1, "1"), mk(xi2, g2, "2"))
        })
        .collect()
}

fn criterion_increments(r: &mut Report, solved: &mut Vec<(ScenarioConfig, SolutionTriple)>) -> CliResult<bool> {
    let mut pass = true;
    for (sc1, sc2) in increment_pairs() {
        let s1 = solve_reflected_projection(&sc1).map_err(lab(&sc1.id))?;
        let s2 = solve_reflected_projection(&sc2).map_err(lab(&sc2.id))?;
        let v = compare_increments(&s1, &s2, &sc1, &sc2, 1e-10).map_err(lab(&sc1.id))?;
        pass &= v.pass;
        let mut c = Report::new(format!("{}_vs_{}", sc1.id, sc2.id), COMMAND);
        c.push(0, None, "max_dK2_minus_dK1_pos", v.k_violation.unwrap_or(0.0));
        c.push(0, None, "max_Y1_minus_Y2_pos", v.y_violation);
        r.merge(c);
        solved.push((sc1, s1));
        solved.push((sc2, s2));
    }
    Ok(pass)
}

// ---------------------------------------------------------------- extremal

pub fn extremal_schedule() -> Vec<f64> {
    vec![1.0, 2.0, 4.0, 8.0]
}

fn extremal_scenario(id: &str, g: GeneratorSpec, xi: fn(f64) -> f64, l: fn(f64, f64) -> f64) -> ScenarioConfig {
    let tr = tree(1.0, 10);
    let x = leaf_values(&tr, xi);
    let lp = process(tr, l);
    let lp = AdaptedProcess::from_fn(tr, 11, |n| if n.level == 10 { lp.at(n).min(x[n.index]) } else { lp.at(n) });
    ScenarioConfig::new(tr, x, g)
        .and_then(|sc| sc.with_barrier(lp))
        .expect("extremal scenario")
        .with_id(id)
}

/// Drivers with linear growth in `z` that are not uniformly continuous in `z`.
pub fn extremal_h2w_scenarios() -> Vec<ScenarioConfig> {
    let g = |lambda, omega| h2w_zsin(-0.1, lambda, omega, Coefficient::Constant(0.1), 1).unwrap();
    vec![
        extremal_scenario("c7-zsin-a", g(0.5, 2.0), |b| 0.5 * (2.0 * b).sin(), |_t, b| 0.2 - b.abs()),
        extremal_scenario("c7-zsin-b", g(0.4, 3.0), |b| 0.4 * (b - 0.2).abs(), |t, b| 0.3 - b - 0.2 * t),
        extremal_scenario("c7-zsin-c", g(0.6, 1.5), |b| 0.3 * (1.5 * b).cos(), |_t, b| 0.1 - 0.5 * b),
    ]
}

pub fn extremal_lipschitz_scenarios() -> Vec<ScenarioConfig> {
    vec![
        extremal_scenario("c7-lin", linear(0.1, 0.5, 0.0, 1), |b| b.abs(), |_t, b| 0.7 - b),
        extremal_scenario("c7-absz", abs_z(0.6, -0.2, 0.1, 1), |b| (b - 0.1).max(0.0), |_t, b| 0.2 - b),
    ]
}

fn criterion_extremal(r: &mut Report, solved: &mut Vec<(ScenarioConfig, SolutionTriple)>) -> CliResult<bool> {
    let schedule = extremal_schedule();
    let mut pass = true;
    let lipschitz: Vec<String> = extremal_lipschitz_scenarios().into_iter().map(|s| s.id).collect();
    for sc in extremal_h2w_scenarios().into_iter().chain(extremal_lipschitz_scenarios()) {
        let proj = solve_reflected_projection(&sc).map_err(lab(&sc.id))?;
        let (lo, lo_rep) = extremal_reflected(&sc, Side::Min, &schedule).map_err(lab(&sc.id))?;
        let (hi, hi_rep) = extremal_reflected(&sc, Side::Max, &schedule).map_err(lab(&sc.id))?;
        let first_lo = proj.y.sub(&lo_rep.solutions[0].y).map_err(lab(&sc.id))?.max_over_nodes(f64::abs);
        let first_hi = hi_rep.solutions[0].y.sub(&proj.y).map_err(lab(&sc.id))?.max_over_nodes(f64::abs);
        let below = lo.y.sub(&proj.y).map_err(lab(&sc.id))?.max_over_nodes(|x| x).max(0.0);
        let above = proj.y.sub(&hi.y).map_err(lab(&sc.id))?.max_over_nodes(|x| x).max(0.0);
        pass &= below <= 1e-10 && above <= 1e-10;
        let spread = hi.y.sub(&lo.y).map_err(lab(&sc.id))?;
        let mut c = Report::new(&sc.id, COMMAND);
        c.push(0, None, "max_Ymin_minus_Yproj_pos", below);
        c.push(0, None, "max_Yproj_minus_Ymax_pos", above);
        c.push(0, None, "first_member_gap_min", first_lo);
        c.push(0, None, "first_member_gap_max", first_hi);
        for p in battery_norms() {
            let s = sp_norm(&spread, p);
            c.push(0, Some(p.p()), "spread_S", s);
            if lipschitz.contains(&sc.id) {
                pass &= s <= 1e-6;
            }
        }
        r.merge(c);
        solved.push((sc.clone(), proj));
    }
    Ok(pass)
}

// ---------------------------------------------------------------- convolution

/// Drivers probed on the convolution grid; `true` marks the uniformly continuous family
/// whose sup-gap must vanish at the largest parameter.
pub fn convolution_families() -> Vec<(GeneratorSpec, bool)> {
    vec![
        (uniform_z(1.0, 0.0, 0.0, UniformVariant::Max, 1), true),
        (uniform_z(1.0, 0.3, 0.1, UniformVariant::Min, 1), true),
        (abs_z(1.0, 0.2, 0.0, 1), false),
        (linear(-0.5, 0.8, 0.2, 1), false),
    ]
}

/// `n` schedule; the parameter is `kappa = n + 2 lambda`.
pub fn convolution_schedule() -> Vec<f64> {
    (0..=10).map(|j| 2f64.powi(j)).collect()
}

/// `z` grid: 121 uniform points on `[-3, 3]` plus logarithmic points near the origin.
pub fn convolution_grid() -> Vec<f64> {
    let mut zs: Vec<f64> = (0..=120).map(|i| -3.0 + 0.05 * i as f64).collect();
    for i in 0..=12 {
        let v = 10f64.powf(-6.0 + 0.5 * i as f64);
        zs.push(v);
        zs.push(-v);
    }
    zs.sort_by(f64::total_cmp);
    zs.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    zs
}

pub const CONVOLUTION_Y: [f64; 3] = [-1.0, 0.0, 1.0];

/// Largest violations of ordering, monotonicity in `kappa`, the `kappa`-Lipschitz bound,
/// and the sup-gap at the largest `kappa`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ConvolutionSummary {
    pub order: f64,
    pub monotone: f64,
    pub lipschitz: f64,
    pub gap: f64,
}

pub fn convolution_summary(g: &GeneratorSpec) -> Result<ConvolutionSummary, LabError> {
    let zs = convolution_grid();
    let kappas: Vec<f64> = convolution_schedule().iter().map(|n| KappaOffset::Lambda.kappa(g, *n)).collect();
    let node = Node::root();
    let mut s = ConvolutionSummary::default();
    for &y in &CONVOLUTION_Y {
        let base: Vec<f64> = zs.iter().map(|&z| g.eval(0.0, y, &[z], node)).collect::<Result<_, _>>()?;
        let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
        for (j, &kappa) in kappas.iter().enumerate() {
            let lo: Vec<f64> = zs.iter().map(|&z| inf_convolution(g, kappa, 0.0, y, &[z], node)).collect::<Result<_, _>>()?;
            let hi: Vec<f64> = zs.iter().map(|&z| sup_convolution(g, kappa, 0.0, y, &[z], node)).collect::<Result<_, _>>()?;
            for i in 0..zs.len() {
                s.order = s.order.max(lo[i] - base[i]).max(base[i] - hi[i]);
            }
            for i in 1..zs.len() {
                let dz = zs[i] - zs[i - 1];
                s.lipschitz = s
                    .lipschitz
                    .max((lo[i] - lo[i - 1]).abs() - kappa * dz)
                    .max((hi[i] - hi[i - 1]).abs() - kappa * dz);
            }
            if let Some((plo, phi)) = &prev {
                for i in 0..zs.len() {
                    s.monotone = s.monotone.max(plo[i] - lo[i]).max(hi[i] - phi[i]);
                }
            }
            if j + 1 == kappas.len() {
                for i in 0..zs.len() {
                    s.gap = s.gap.max(base[i] - lo[i]).max(hi[i] - base[i]);
                }
            }
            prev = Some((lo, hi));
        }
    }
    Ok(s)
}

fn criterion_convolution(r: &mut Report) -> CliResult<bool> {
    let mut pass = true;
    for (j, (g, uniform)) in convolution_families().into_iter().enumerate() {
        let s = convolution_summary(&g).map_err(lab(&g.name))?;
        pass &= s.order <= 1e-12 && s.monotone <= 1e-12 && s.lipschitz <= 1e-8;
        if uniform {
            pass &= s.gap <= 1e-3;
        }
        let mut c = Report::new(format!("c8-{j}"), COMMAND);
        c.push(0, None, "order_violation", s.order.max(0.0));
        c.push(0, None, "kappa_monotone_violation", s.monotone.max(0.0));
        c.push(0, None, "lipschitz_excess", s.lipschitz.max(0.0));
        c.push(0, None, "sup_gap_last", s.gap.max(0.0));
        r.merge(c);
    }
    Ok(pass)
}

// ---------------------------------------------------------------- estimates

pub const ESTIMATE_DEPTHS: [usize; 2] = [8, 16];

pub fn estimate_schedule() -> Vec<f64> {
    penalization_schedule()
}

/// Scenarios covering every diagnostic: two reflected, two without barrier.
pub fn estimate_scenarios(depth: usize) -> Vec<ScenarioConfig> {
    let tr = tree(1.0, depth);
    let zsin = h2w_zsin(-0.1, 0.2, 1.0, Coefficient::Constant(0.1), 1).unwrap();
    let reflected = |id: &str, g: GeneratorSpec, l: fn(f64, f64) -> f64, xi: fn(f64) -> f64| {
        let x = leaf_values(&tr, xi);
        let lp = process(tr, l);
        let lp = AdaptedProcess::from_fn(tr, depth + 1, |n| if n.level == depth { lp.at(n).min(x[n.index]) } else { lp.at(n) });
        ScenarioConfig::new(tr, x, g)
            .and_then(|sc| sc.with_barrier(lp))
            .expect("estimate scenario")
            .with_id(format!("{id}-N{depth}"))
    };
    let plain = |id: &str, g: GeneratorSpec, xi: fn(f64) -> f64| {
        ScenarioConfig::new(tr, leaf_values(&tr, xi), g)
            .expect("estimate scenario")
            .with_id(format!("{id}-N{depth}"))
    };
    vec![
        reflected("c9-zsin", zsin, |_t, b| 0.3 - b, |b| (0.3 - b).max(0.0) + 0.2 * b.sin().abs()),
        reflected("c9-lin", linear(-0.2, 0.3, 0.1, 1), |t, b| 0.5 - b.abs() - 0.2 * t, |b| 0.5 * b.abs()),
        plain("c9-plain-lin", linear(0.2, 0.3, 0.1, 1), |b| b),
        plain("c9-plain-absz", abs_z(0.4, -0.1, 0.05, 1), |b| (b * 1.2).sin()),
    ]
}

/// Worst ratio per diagnostic over the scenarios at one depth; `None` when every scenario gates it.
pub fn estimate_ratios(
    depth: usize,
    solved: &mut Vec<(ScenarioConfig, SolutionTriple)>,
    rows: &mut Report,
) -> Result<Vec<(EstimateId, Option<f64>)>, LabError> {
    let mut worst: Vec<(EstimateId, Option<f64>)> = EstimateId::ALL.iter().map(|&id| (id, None)).collect();
    let mut record = |id: EstimateId, ratio: f64, sc: &ScenarioConfig, rows: &mut Report| {
        let slot = worst.iter_mut().find(|(i, _)| *i == id).expect("id listed");
        slot.1 = Some(slot.1.map_or(ratio, |r: f64| r.max(ratio)));
        let mut c = Report::new(&sc.id, COMMAND);
        c.push(0, None, format!("{id}.ratio"), ratio);
        rows.merge(c);
    };
    for sc in estimate_scenarios(depth) {
        let sol = solve_any(&sc)?;
        for id in EstimateId::ALL {
            if matches!(id, EstimateId::Prop2 | EstimateId::Prop7) {
                continue;
            }
            match estimate_diagnostic(id, &EstimateInput::new(&sc, &sol), 0) {
                Ok(d) => record(id, d.ratio, &sc, rows),
                Err(LabError::HypothesisNotSatisfied(_)) => {}
                Err(e) => return Err(e),
            }
        }
        if sc.barrier().is_some() {
            let (sweep, rep) = proposition7_bound(&sc, &estimate_schedule(), None)?;
            record(EstimateId::Prop7, rep.ratio, &sc, rows);
            let mut prop2 = 0.0f64;
            for s in &sweep.solutions {
                let input = EstimateInput::new(&sc, s).with_first(&sweep.solutions[0]).with_dominator(&rep.xbar.y);
                prop2 = prop2.max(estimate_diagnostic(EstimateId::Prop2, &input, 0)?.ratio);
            }
            record(EstimateId::Prop2, prop2, &sc, rows);
            let (_, h6) = check_h6(&sc, None)?;
            let mut c = Report::new(&sc.id, COMMAND);
            c.push(0, None, "h6_domination_violation", h6.domination_violation.max(0.0));
            c.push(0, None, "h6_g_x0_norm", h6.g_x0_norm);
            c.push(0, None, "h6_decomposition_residual", h6.decomposition_residual);
            rows.merge(c);
        }
        solved.push((sc, sol));
    }
    Ok(worst)
}

/// Relative change of a ratio between two depths; zero when both vanish.
pub fn relative_change(coarse: f64, fine: f64) -> f64 {
    if coarse == 0.0 && fine == 0.0 {
        0.0
    } else {
        (fine - coarse).abs() / coarse
    }
}

fn criterion_estimates(r: &mut Report, solved: &mut Vec<(ScenarioConfig, SolutionTriple)>) -> CliResult<bool> {
    let coarse = estimate_ratios(ESTIMATE_DEPTHS[0], solved, r).map_err(lab("c9 coarse"))?;
    let fine = estimate_ratios(ESTIMATE_DEPTHS[1], solved, r).map_err(lab("c9 fine"))?;
    let mut pass = true;
    let mut c = Report::new("c9-stability", COMMAND);
    for ((id, a), (_, b)) in coarse.iter().zip(&fine) {
        match (a, b) {
            (Some(a), Some(b)) => {
                let change = relative_change(*a, *b);
                pass &= a.is_finite() && b.is_finite() && change < 0.5;
                c.push(0, None, format!("{id}.ratio_N8"), *a);
                c.push(0, None, format!("{id}.ratio_N16"), *b);
                if change.is_finite() {
                    c.push(0, None, format!("{id}.relative_change"), change);
                }
            }
            _ => pass = false,
        }
    }
    r.merge(c);
    Ok(pass)
}

/// The necessity inequality on every solved scenario whose driver qualifies.
fn necessity_everywhere(r: &mut Report, solved: &[(ScenarioConfig, SolutionTriple)]) -> CliResult<bool> {
    let mut pass = true;
    let mut checked = 0.0;
    let mut worst = 0.0f64;
    for (sc, sol) in solved {
        let closure = implied_closure(&sc.generator.hypotheses);
        if !(closure.contains(&Hypothesis::H1) && closure.contains(&Hypothesis::H2w)) {
            continue;
        }
        let n = theorem3_necessity(sc, sol).map_err(lab(&sc.id))?;
        pass &= n.pass;
        checked += 1.0;
        if n.rhs > 0.0 {
            worst = worst.max(n.lhs / n.rhs);
        }
    }
    let mut c = Report::new("c9-necessity", COMMAND);
    c.push(0, None, "scenarios_checked", checked);
    c.push(0, None, "max_lhs_over_rhs", worst);
    r.merge(c);
    Ok(pass && checked > 0.0)
}

// ---------------------------------------------------------------- coverage

/// Library parameters used for certification of every identifier.
pub fn certification_params(id: &str) -> Vec<f64> {
    match id {
        "constant" => vec![0.5],
        "linear" => vec![-0.3, 0.5, 0.1],
        "abs_z" => vec![0.7, 0.2, 0.1],
        "cubic" => vec![1.0, 0.5, 0.1],
        "osgood_log" => vec![0.5, 0.3, 0.1],
        "uniform_z_min" | "uniform_z_max" => vec![0.8, 0.1, 0.1],
        "h2w_sin" => vec![0.1, 0.5, 0.2],
        "h2w_zsin" => vec![-0.1, 0.5, 2.0, 0.1],
        _ => Vec::new(),
    }
}

fn coverage(r: &mut Report) -> CliResult<()> {
    let cfg = SamplerConfig::default();
    for (id, _) in LIBRARY {
        let g = from_id(id, &certification_params(id), 1).map_err(lab(id))?;
        let mut c = Report::new(format!("certify-{id}"), COMMAND);
        for (i, rep) in certify_declared(&g, &cfg).iter().enumerate() {
            let h = rep.hypothesis.as_str();
            c.check(i, format!("{h}.pass"), if rep.pass { 1.0 } else { 0.0 }, rep.pass, format!("{id} fails {h}"));
        }
        r.merge(c);
    }
    let tr = tree(1.0, 8);
    let xi = leaf_values(&tr, |b| (b * 1.3).sin());
    let sc = ScenarioConfig::new(tr, xi, cubic(1.0, 0.5, 0.1, 1).map_err(lab("cubic"))?)
        .map_err(lab("truncation"))?
        .with_id("coverage-truncation");
    let mut c = Report::new(&sc.id, COMMAND);
    for kind in [SequenceKind::TruncAbove, SequenceKind::TruncBelow] {
        let rep = solve_bsde_sequence(&sc, kind, &[0.25, 0.5, 1.0, 2.0]).map_err(lab(&sc.id))?;
        c.check(
            0,
            format!("{}.monotone_violation", kind.as_str()),
            rep.monotone_violation,
            rep.monotone,
            "truncation family not monotone",
        );
        let sol = rep.last();
        for p in battery_norms() {
            c.push(0, Some(p.p()), format!("{}.H_norm_drift", kind.as_str()), hp_norm(&sol.drift, p));
        }
    }
    let pen = penalization_scenario();
    let sol = solve_reflected_projection(&pen).map_err(lab(&pen.id))?;
    for p in battery_norms() {
        c.push(0, Some(p.p()), "put.V_norm_K", variation_norm(&sol.k, p));
    }
    r.merge(c);
    Ok(())
}

// ---------------------------------------------------------------- driver

pub const CRITERIA: [&str; 9] = [
    "exactness core",
    "closed-form convergence",
    "Snell equivalence",
    "comparison",
    "penalization",
    "increment comparison",
    "extremal solutions",
    "convolution algebra",
    "estimate diagnostics",
];

/// Runs criteria 1 to 9 and the coverage checks.
pub fn run_battery() -> CliResult<BatteryOutcome> {
    let mut r = Report::new("summary", COMMAND);
    let mut solved = Vec::new();
    let results = [
        criterion_exactness(&mut r)?,
        criterion_closed_form(&mut r)?,
        criterion_snell(&mut r)?,
        criterion_comparison(&mut r, &mut solved)?,
        criterion_penalization(&mut r, &mut solved)?,
        criterion_increments(&mut r, &mut solved)?,
        criterion_extremal(&mut r, &mut solved)?,
        criterion_convolution(&mut r)?,
        criterion_estimates(&mut r, &mut solved)? & necessity_everywhere(&mut r, &solved)?,
    ];
    coverage(&mut r)?;
    let mut criteria = Vec::new();
    let mut summary = Report::new("summary", COMMAND);
    for (j, (&pass, &name)) in results.iter().zip(CRITERIA.iter()).enumerate() {
        summary.check(j + 1, "pass", if pass { 1.0 } else { 0.0 }, pass, format!("criterion {} ({name}) failed", j + 1));
        criteria.push(Criterion { id: j + 1, name, pass });
    }
    r.merge(summary);
    Ok(BatteryOutcome { report: r, criteria })
}
