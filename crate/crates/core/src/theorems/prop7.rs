//! Uniform bound for the penalized family, built from a process dominating every member.

use crate::bsde::{solve_bsde, Forcing, ScenarioConfig, SchemeConfig, SolutionTriple};
use crate::error::{LabError, Result};
use crate::rbsde::{check_h6, penalization_sweep, BarrierDominator, PenalizationReport};
use crate::theorems::estimates::{estimate_diagnostic, EstimateId, EstimateInput};
use crate::tree::{AdaptedProcess, Node};

/// Solution `X^bar` of the plain equation with terminal `X_N v xi` and forcing
/// `dV + h g^-(t, E[X_{k+1}|F_k], H_k) + dC^- + dV^-`; it dominates `X`, the barrier
/// and every penalized solution whenever the scheme is monotone.
pub fn dominating_solution(sc: &ScenarioConfig, dom: &BarrierDominator) -> Result<SolutionTriple> {
    let tree = sc.tree;
    let h = tree.step();
    let terminal: Vec<f64> = sc
        .terminal()
        .iter()
        .zip(dom.x.terminal())
        .map(|(a, b)| a.max(*b))
        .collect();
    let inc = AdaptedProcess::from_fn(tree, tree.depth(), |node: Node| {
        let (k, i) = (node.level, node.index);
        let b = tree.branching();
        let next = dom.x.level(k + 1);
        let xt = next[i * b..(i + 1) * b].iter().sum::<f64>() / b as f64;
        let g = sc.generator.value(tree.time(k), xt, dom.h.vector(k, i), node);
        let dv = sc.forcing().increment(k, i);
        dv + h * (-g).max(0.0) + (-dom.dc.value(k, i)).max(0.0) + (-dv).max(0.0)
    });
    let aux = ScenarioConfig::new(tree, terminal, sc.generator.clone())?
        .with_id(format!("{}-dominator", sc.id))
        .with_p(sc.p)
        .with_scheme(SchemeConfig::explicit())
        .with_forcing(Forcing::from_increments(inc)?)?;
    solve_bsde(&aux)
}

#[derive(Debug, Clone)]
pub struct Prop7Report {
    pub schedule: Vec<f64>,
    pub dominator: BarrierDominator,
    pub xbar: SolutionTriple,
    /// `max (L - X^bar)^+`.
    pub barrier_excess: f64,
    /// `max over n and nodes of (Y^n - X^bar)^+`.
    pub family_excess: f64,
    /// Per-`n` worst ratio over all levels and nodes.
    pub per_n_ratio: Vec<f64>,
    /// The single constant covering every `n`, level and node.
    pub ratio: f64,
    /// `E[eta]` without the constant.
    pub eta0: f64,
    pub pass: bool,
}

/// Sweeps the penalized family and measures the constant needed for a uniform conditional bound.
pub fn proposition7_bound(
    sc: &ScenarioConfig,
    schedule: &[f64],
    dominator: Option<&BarrierDominator>,
) -> Result<(PenalizationReport, Prop7Report)> {
    let (dom, _) = check_h6(sc, dominator)?;
    let xbar = dominating_solution(sc, &dom)?;
    let sweep = penalization_sweep(sc, schedule)?;
    let barrier = sc
        .barrier()
        .ok_or_else(|| LabError::InvalidParameter("scenario has no barrier".into()))?;
    let barrier_excess = barrier.sub(&xbar.y)?.max_over_nodes(|v| v);
    let mut family_excess = 0.0f64;
    for s in &sweep.solutions {
        family_excess = family_excess.max(s.y.sub(&xbar.y)?.max_over_nodes(|v| v));
    }
    let first = &sweep.solutions[0];
    let mut per_n_ratio = Vec::with_capacity(schedule.len());
    let mut eta0 = 0.0;
    for s in &sweep.solutions {
        let input = EstimateInput::new(sc, s)
            .with_first(first)
            .with_dominator(&xbar.y);
        let mut worst = 0.0f64;
        for k in 0..=sc.tree.depth() {
            let d = estimate_diagnostic(EstimateId::Prop7, &input, k)?;
            if k == 0 {
                eta0 = d.rhs;
            }
            worst = worst.max(d.ratio);
        }
        per_n_ratio.push(worst);
    }
    let ratio = per_n_ratio.iter().cloned().fold(0.0, f64::max);
    let report = Prop7Report {
        schedule: schedule.to_vec(),
        dominator: dom,
        xbar,
        barrier_excess,
        family_excess,
        per_n_ratio,
        ratio,
        eta0,
        pass: ratio.is_finite() && barrier_excess <= 1e-10 && family_excess <= 1e-10,
    };
    Ok((sweep, report))
}
