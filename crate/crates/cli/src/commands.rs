//! One function per subcommand; each returns a report whose failures decide the exit code.

use rbsde_core::bsde::{backward_residual, solve_bsde, ScenarioConfig, SolutionTriple};
use rbsde_core::generators::certify::{certify_declared, SamplerConfig};
use rbsde_core::rbsde::{
    penalization_sweep_tol, skorokhod_residual, solve_reflected_projection, theorem3_necessity,
};
use rbsde_core::theorems::{
    check_data_ordering, compare_increments, compare_rbsde, driver_ordering_violation,
    estimate_diagnostic, extremal_reflected, proposition7_bound, EstimateId, EstimateInput, Side,
};
use rbsde_core::tree::{mp_norm, sp_norm, variation_norm, NormParams};
use rbsde_core::LabError;

use crate::error::{CliError, CliResult};
use crate::report::Report;
use crate::scenario_file::Scenario;

/// Flags shared by every command.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub tol: Option<f64>,
    pub p: Option<Vec<NormParams>>,
    pub seed: Option<u64>,
}

impl Options {
    fn tol_or(&self, default: f64) -> f64 {
        self.tol.unwrap_or(default)
    }

    fn norms<'a>(&'a self, sc: &'a Scenario) -> &'a [NormParams] {
        self.p.as_deref().unwrap_or(&sc.norms)
    }

    /// Scenario configuration with the `--p` override applied.
    fn config(&self, sc: &Scenario) -> ScenarioConfig {
        let cfg = sc.config.clone();
        match &self.p {
            Some(ps) => cfg.with_p(ps[0]),
            None => cfg,
        }
    }
}

pub const DEFAULT_PENALTY_SCHEDULE: [f64; 11] =
    [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0, 1024.0];
pub const DEFAULT_EXTREMAL_SCHEDULE: [f64; 4] = [1.0, 2.0, 4.0, 8.0];
pub const DEFAULT_ESTIMATE_SCHEDULE: [f64; 7] = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0];

fn lab(sc: &ScenarioConfig, what: &str) -> impl FnOnce(LabError) -> CliError {
    let context = format!("{}: {what}", sc.id);
    move |e| CliError::lab(context, e)
}

/// Projection solution when a barrier is present, plain solution otherwise.
pub fn solve_any(sc: &ScenarioConfig) -> Result<SolutionTriple, LabError> {
    if sc.barrier().is_some() {
        solve_reflected_projection(sc)
    } else {
        solve_bsde(sc)
    }
}

pub fn cmd_solve(scenario: &Scenario, opts: &Options) -> CliResult<Report> {
    let sc = opts.config(scenario);
    let sol = solve_any(&sc).map_err(lab(&sc, "solve"))?;
    let mut r = Report::new(&sc.id, "solve");
    r.push(0, None, "Y0", sol.y0());
    let d = sc.tree.dim();
    for j in 0..d {
        let name = if d == 1 { "Z0".to_string() } else { format!("Z0_{}", j + 1) };
        r.push(0, None, name, sol.z.vector(0, 0)[j]);
    }
    r.push(0, None, "E_K_T", sc.tree.expectation(sol.k.terminal()));
    let tol = opts.tol_or(1e-10);
    let res = backward_residual(&sol, &sc);
    r.check(0, "backward_residual", res, res <= tol, "backward equation residual above tolerance");
    for &p in opts.norms(scenario) {
        r.push(0, Some(p.p()), "S_norm_Y", sp_norm(&sol.y, p));
        r.push(0, Some(p.p()), "M_norm_Z", mp_norm(&sol.z, p));
        r.push(0, Some(p.p()), "V_norm_K", variation_norm(&sol.k, p));
    }
    if let Some(l) = sc.barrier() {
        let s = skorokhod_residual(&sol, l, sc.p).map_err(lab(&sc, "skorokhod residual"))?;
        r.check(0, "complementarity", s.complementarity, s.complementarity <= tol, "Skorokhod condition violated");
        r.check(0, "deficit_sup", s.deficit_sup, s.deficit_sup <= tol, "solution below barrier");
    }
    Ok(r)
}

pub fn cmd_penalize(scenario: &Scenario, opts: &Options) -> CliResult<Report> {
    let sc = opts.config(scenario);
    if sc.barrier().is_none() {
        return Err(CliError::input(&scenario.file, "barrier", "expr", "penalization needs a barrier"));
    }
    let schedule = scenario.run.schedule.clone().unwrap_or_else(|| DEFAULT_PENALTY_SCHEDULE.to_vec());
    let tol = opts.tol_or(1e-12);
    let rep = penalization_sweep_tol(&sc, &schedule, tol).map_err(lab(&sc, "penalization sweep"))?;
    let mut r = Report::new(&sc.id, "penalize");
    for (j, (n, s)) in schedule.iter().zip(&rep.solutions).enumerate() {
        r.push(j, None, "n", *n);
        r.push(j, None, "Y0", s.y0());
        r.push(j, None, "deficit_sup", rep.residuals[j].deficit_sup);
        r.push(j, None, "complementarity", rep.residuals[j].complementarity);
        for &p in opts.norms(scenario) {
            let y = sp_norm(&s.y.sub(&rep.reference.y).map_err(lab(&sc, "gap"))?, p);
            let z = mp_norm(&s.z.sub(&rep.reference.z).map_err(lab(&sc, "gap"))?, p);
            let k = sp_norm(&s.k.sub(&rep.reference.k).map_err(lab(&sc, "gap"))?, p);
            r.push(j, Some(p.p()), "Y_gap", y);
            r.push(j, Some(p.p()), "Z_gap", z);
            r.push(j, Some(p.p()), "K_gap", k);
        }
    }
    r.push(0, None, "Y0_reference", rep.reference.y0());
    r.check(
        0,
        "monotone_violation",
        rep.monotone_violation,
        rep.monotone_violation <= tol,
        "penalized solutions not nondecreasing in n",
    );
    let dom_tol = opts.tol_or(1e-10);
    r.check(
        0,
        "domination_violation",
        rep.domination_violation,
        rep.domination_violation <= dom_tol,
        "penalized solution above the reflected solution",
    );
    Ok(r)
}

pub fn cmd_compare(first: &Scenario, second: &Scenario, opts: &Options) -> CliResult<Report> {
    let (sc1, sc2) = (opts.config(first), opts.config(second));
    let name = format!("{}_vs_{}", sc1.id, sc2.id);
    check_data_ordering(&sc1, &sc2).map_err(|e| CliError::lab(name.clone(), e))?;
    let s1 = solve_any(&sc1).map_err(lab(&sc1, "solve"))?;
    let s2 = solve_any(&sc2).map_err(lab(&sc2, "solve"))?;
    let tol = opts.tol_or(1e-10);
    let v = compare_rbsde(&s1, &s2, &sc1, &sc2, tol).map_err(|e| CliError::lab(name.clone(), e))?;
    let mut r = Report::new(&name, "compare");
    r.check(0, "max_Y1_minus_Y2_pos", v.y_violation, v.pass, "comparison verdict failed");
    r.push(0, None, "indicator_residual", v.indicator_residual);
    let same_barrier = matches!((sc1.barrier(), sc2.barrier()), (Some(a), Some(b)) if a == b);
    let drivers_ordered =
        same_barrier && driver_ordering_violation(&sc1.generator, &sc2.generator, &sc1.tree, &[]) <= tol;
    let inc = if drivers_ordered {
        match compare_increments(&s1, &s2, &sc1, &sc2, tol) {
            Ok(v) => Some(v),
            Err(LabError::DataOrderingViolation(_)) => None,
            Err(e) => return Err(CliError::lab(name, e)),
        }
    } else {
        None
    };
    match inc {
        Some(v) => {
            let k = v.k_violation.unwrap_or(0.0);
            r.check(0, "max_dK2_minus_dK1_pos", k, v.pass, "increment comparison failed");
        }
        None => {
            r.push(0, None, "increments.skipped", 1.0);
        }
    }
    Ok(r)
}

pub fn cmd_extremal(scenario: &Scenario, opts: &Options) -> CliResult<Report> {
    let sc = opts.config(scenario);
    let schedule = scenario.run.schedule.clone().unwrap_or_else(|| DEFAULT_EXTREMAL_SCHEDULE.to_vec());
    let sides = match scenario.run.side {
        Some(s) => vec![s],
        None => vec![Side::Min, Side::Max],
    };
    let tol = opts.tol_or(1e-10);
    let reference = solve_any(&sc).map_err(lab(&sc, "solve"))?;
    let mut r = Report::new(&sc.id, "extremal");
    r.push(0, None, "Y0_reference", reference.y0());
    let mut lo = None;
    let mut hi = None;
    for side in sides {
        let (sol, rep) = extremal_reflected(&sc, side, &schedule).map_err(lab(&sc, "extremal solution"))?;
        let tag = side.as_str();
        r.push(0, None, format!("{tag}.Y0"), sol.y0());
        r.check(
            0,
            format!("{tag}.monotone_violation"),
            rep.monotone_violation,
            rep.monotone_violation <= tol,
            "convolution family not monotone",
        );
        let gap = match side {
            Side::Min => sol.y.sub(&reference.y),
            Side::Max => reference.y.sub(&sol.y),
        }
        .map_err(lab(&sc, "sandwich"))?
        .max_over_nodes(|x| x);
        let metric = match side {
            Side::Min => "max_Ymin_minus_Yref_pos",
            Side::Max => "max_Yref_minus_Ymax_pos",
        };
        r.check(0, metric, gap.max(0.0), gap <= tol, "extremal sandwich violated");
        match side {
            Side::Min => lo = Some(sol),
            Side::Max => hi = Some(sol),
        }
    }
    if let (Some(lo), Some(hi)) = (lo, hi) {
        let spread = hi.y.sub(&lo.y).map_err(lab(&sc, "spread"))?;
        for &p in opts.norms(scenario) {
            r.push(0, Some(p.p()), "spread_S", sp_norm(&spread, p));
        }
    }
    Ok(r)
}

fn push_diagnostic(r: &mut Report, id: EstimateId, lhs: f64, rhs: f64, ratio: f64) {
    r.push(0, None, format!("{id}.lhs"), lhs);
    r.push(0, None, format!("{id}.rhs"), rhs);
    r.check(0, format!("{id}.ratio"), ratio, ratio.is_finite(), "estimate ratio not finite");
}

pub fn cmd_estimate(scenario: &Scenario, opts: &Options) -> CliResult<Report> {
    let sc = opts.config(scenario);
    let ids = scenario.run.estimates.clone().unwrap_or_else(|| EstimateId::ALL.to_vec());
    let level = scenario.run.level;
    let sol = solve_any(&sc).map_err(lab(&sc, "solve"))?;
    let mut r = Report::new(&sc.id, "estimate");
    let needs_family = ids.iter().any(|id| matches!(id, EstimateId::Prop2 | EstimateId::Prop7));
    let family = if needs_family && sc.barrier().is_some() {
        let schedule = scenario.run.schedule.clone().unwrap_or_else(|| DEFAULT_ESTIMATE_SCHEDULE.to_vec());
        match proposition7_bound(&sc, &schedule, None) {
            Ok(v) => Some(v),
            Err(LabError::HypothesisNotSatisfied(_)) => None,
            Err(e) => return Err(lab(&sc, "uniform bound")(e)),
        }
    } else {
        None
    };
    for id in ids {
        let result = match id {
            EstimateId::Prop7 => match &family {
                Some((_, rep)) => {
                    r.check(0, "Prop7.barrier_excess", rep.barrier_excess, rep.barrier_excess <= 1e-10, "dominator below barrier");
                    r.check(0, "Prop7.family_excess", rep.family_excess, rep.family_excess <= 1e-10, "dominator below penalized family");
                    r.push(0, None, "Prop7.eta0", rep.eta0);
                    r.check(0, "Prop7.ratio", rep.ratio, rep.ratio.is_finite(), "estimate ratio not finite");
                    continue;
                }
                None => None,
            },
            EstimateId::Prop2 => match &family {
                Some((sweep, rep)) => {
                    let first = &sweep.solutions[0];
                    let mut worst = (0.0, 0.0, 0.0f64);
                    let mut gated = false;
                    for s in &sweep.solutions {
                        let input = EstimateInput::new(&sc, s).with_first(first).with_dominator(&rep.xbar.y);
                        match estimate_diagnostic(id, &input, level) {
                            Ok(d) => {
                                if d.ratio >= worst.2 {
                                    worst = (d.lhs, d.rhs, d.ratio);
                                }
                            }
                            Err(LabError::HypothesisNotSatisfied(_)) => {
                                gated = true;
                                break;
                            }
                            Err(e) => return Err(lab(&sc, "estimate")(e)),
                        }
                    }
                    if gated {
                        None
                    } else {
                        Some(worst)
                    }
                }
                None => None,
            },
            _ => match estimate_diagnostic(id, &EstimateInput::new(&sc, &sol), level) {
                Ok(d) => Some((d.lhs, d.rhs, d.ratio)),
                Err(LabError::HypothesisNotSatisfied(_)) => None,
                Err(e) => return Err(lab(&sc, "estimate")(e)),
            },
        };
        match result {
            Some((lhs, rhs, ratio)) => push_diagnostic(&mut r, id, lhs, rhs, ratio),
            None => {
                r.push(0, None, format!("{id}.skipped"), 1.0);
            }
        }
    }
    match theorem3_necessity(&sc, &sol) {
        Ok(n) => {
            r.push(0, None, "necessity.lhs", n.lhs);
            r.check(0, "necessity.rhs", n.rhs, n.pass, "necessity inequality violated");
        }
        Err(LabError::HypothesisNotSatisfied(_)) => {
            r.push(0, None, "necessity.skipped", 1.0);
        }
        Err(e) => return Err(lab(&sc, "necessity")(e)),
    }
    Ok(r)
}

pub fn cmd_certify(scenario: &Scenario, opts: &Options) -> CliResult<Report> {
    let sc = opts.config(scenario);
    let defaults = SamplerConfig::default();
    let cfg = SamplerConfig {
        seed: opts.seed.unwrap_or(defaults.seed),
        tol: opts.tol_or(defaults.tol),
        horizon: sc.tree.horizon(),
        ..defaults
    };
    let mut r = Report::new(&sc.id, "certify");
    for (i, rep) in certify_declared(&sc.generator, &cfg).iter().enumerate() {
        let h = rep.hypothesis.as_str();
        r.push(i, None, format!("{h}.declared"), if rep.declared { 1.0 } else { 0.0 });
        for c in rep.checks.iter().filter(|c| c.max_violation.is_finite()) {
            r.push(i, None, format!("{h}.{}.max_violation", slug(&c.name)), c.max_violation);
        }
        r.check(
            i,
            format!("{h}.pass"),
            if rep.pass { 1.0 } else { 0.0 },
            rep.pass,
            format!("{h} failed certification"),
        );
    }
    Ok(r)
}

/// Lowercase metric fragment: alphanumerics kept, runs of anything else become `_`.
fn slug(name: &str) -> String {
    let mut out = String::new();
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}
