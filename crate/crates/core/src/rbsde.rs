//! Reflected solvers: per-step projection, penalization, the penalization sweep,
//! Skorokhod residuals, barrier dominators and the necessity inequality.

use rayon::prelude::*;

use crate::bsde::{
    accumulate, backward_sweep, check_terminal_barrier, gaps_to_last, sequence_monotone_violation,
    validate_schedule, Reflection, ScenarioConfig, SolutionTriple,
};
use crate::error::{LabError, Result};
use crate::generators::{implied_closure, norm, Hypothesis};
use crate::tree::{
    hp_norm, integrand_into, path_variation, sp_norm, AdaptedProcess, NormParams, Node,
    TreeModel,
};

fn barrier_of(sc: &ScenarioConfig) -> Result<&AdaptedProcess> {
    sc.barrier()
        .ok_or_else(|| LabError::InvalidParameter("scenario has no barrier".into()))
}

/// Reference reflected solution: `Y_k = max(c_k, L_k)`, `dK_k = (c_k - L_k)^-`.
pub fn solve_reflected_projection(sc: &ScenarioConfig) -> Result<SolutionTriple> {
    let l = barrier_of(sc)?;
    check_terminal_barrier(sc.terminal(), l)?;
    backward_sweep(sc, &sc.generator, Reflection::Project(l))
}

/// Penalized equation with driver `g + n (y - L)^-`, the penalty taken at the new value `Y_k`.
///
/// Without a barrier the penalty vanishes and the result is the non-reflected solution.
pub fn solve_penalized(sc: &ScenarioConfig, n: f64) -> Result<SolutionTriple> {
    if !(n >= 0.0 && n.is_finite()) {
        return Err(LabError::InvalidParameter(format!(
            "penalization level must be finite and nonnegative, got {n}"
        )));
    }
    match sc.barrier() {
        Some(l) if n > 0.0 => backward_sweep(sc, &sc.generator, Reflection::Penalize(l, n)),
        _ => backward_sweep(sc, &sc.generator, Reflection::None),
    }
}

/// Discrete Skorokhod condition diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkorokhodResidual {
    /// `E[|sum_k (Y_k - L_k) dK_k|]`.
    pub complementarity: f64,
    /// `max over nodes of (Y - L)^-`.
    pub deficit_sup: f64,
    /// `||sup_k (Y_k - L_k)^-||_{L^p}`.
    pub deficit_norm: f64,
}

pub fn skorokhod_residual(
    sol: &SolutionTriple,
    barrier: &AdaptedProcess,
    p: NormParams,
) -> Result<SkorokhodResidual> {
    if !sol.tree().same_shape(barrier.tree()) {
        return Err(LabError::TreeMismatch);
    }
    let tree = *sol.tree();
    let gap = sol.y.sub(barrier)?;
    let deficit = gap.map(|x| (-x).max(0.0));
    let comp: f64 = (0..tree.leaves())
        .map(|leaf| {
            (0..tree.depth())
                .map(|k| {
                    let i = tree.ancestor(leaf, k);
                    gap.value(k, i) * sol.dk.value(k, i)
                })
                .sum::<f64>()
                .abs()
        })
        .sum::<f64>()
        * tree.leaf_weight();
    Ok(SkorokhodResidual {
        complementarity: comp,
        deficit_sup: deficit.max_over_nodes(|x| x),
        deficit_norm: sp_norm(&deficit, p),
    })
}

/// Penalized family along a schedule, measured against the projection reference.
#[derive(Debug, Clone)]
pub struct PenalizationReport {
    pub schedule: Vec<f64>,
    pub solutions: Vec<SolutionTriple>,
    pub reference: SolutionTriple,
    pub y0: Vec<f64>,
    /// Largest decrease `Y^{n_j} - Y^{n_{j+1}}` over nodes and consecutive pairs.
    pub monotone_violation: f64,
    pub monotone: bool,
    /// Largest excess `Y^n - Y^ref` over nodes and schedule.
    pub domination_violation: f64,
    /// `(p, ||Y^n - Y^ref||_S^p per n)`.
    pub y_gaps: Vec<(f64, Vec<f64>)>,
    pub z_gaps: Vec<(f64, Vec<f64>)>,
    pub k_gaps: Vec<(f64, Vec<f64>)>,
    pub residuals: Vec<SkorokhodResidual>,
    /// Per-`n` value at level 0 of
    /// `E[sup|Y|^p + (int|Z|^2)^{p/2} + |K_T|^p + (int|g|)^p]` for the scenario exponent.
    pub uniform_bound: Vec<f64>,
    pub tol: f64,
}

impl PenalizationReport {
    pub fn gaps_for(&self, p: f64) -> Option<(&[f64], &[f64], &[f64])> {
        let idx = self.y_gaps.iter().position(|(q, _)| *q == p)?;
        Some((&self.y_gaps[idx].1, &self.z_gaps[idx].1, &self.k_gaps[idx].1))
    }

    pub fn eta_surrogate(&self) -> f64 {
        self.uniform_bound.iter().cloned().fold(0.0, f64::max)
    }
}

/// `true` if every entry is strictly below its predecessor.
pub fn strictly_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] < w[0])
}

/// `true` if no entry exceeds its predecessor by more than `tol`.
pub fn nonincreasing(values: &[f64], tol: f64) -> bool {
    values.windows(2).all(|w| w[1] <= w[0] + tol)
}

/// Per-path functionals of a reflected solution started at level `from`.
pub(crate) struct PathTotals {
    pub sup_y: f64,
    pub qv: f64,
    pub k_inc: f64,
    pub g_int: f64,
}

pub(crate) fn path_totals(sol: &SolutionTriple, leaf: usize, from: usize) -> PathTotals {
    let tree = sol.tree();
    let h = tree.step();
    let n = tree.depth();
    let mut out = PathTotals {
        sup_y: 0.0,
        qv: 0.0,
        k_inc: 0.0,
        g_int: 0.0,
    };
    for k in from..=n {
        let i = tree.ancestor(leaf, k);
        out.sup_y = out.sup_y.max(sol.y.value(k, i).abs());
        if k < n {
            out.qv += sol.z.magnitude(k, i).powi(2) * h;
            out.k_inc += sol.dk.value(k, i);
            out.g_int += sol.drift.value(k, i).abs() * h;
        }
    }
    out
}

fn uniform_quantity(sol: &SolutionTriple, p: f64) -> f64 {
    let tree = sol.tree();
    (0..tree.leaves())
        .map(|leaf| {
            let t = path_totals(sol, leaf, 0);
            t.sup_y.powf(p) + t.qv.powf(p / 2.0) + t.k_inc.powf(p) + t.g_int.powf(p)
        })
        .sum::<f64>()
        * tree.leaf_weight()
}

/// Penalized solutions for each `n`, with gaps to the projection reference.
pub fn penalization_sweep(sc: &ScenarioConfig, schedule: &[f64]) -> Result<PenalizationReport> {
    penalization_sweep_tol(sc, schedule, 1e-12)
}

pub fn penalization_sweep_tol(
    sc: &ScenarioConfig,
    schedule: &[f64],
    tol: f64,
) -> Result<PenalizationReport> {
    let l = barrier_of(sc)?;
    validate_schedule(schedule)?;
    let reference = solve_reflected_projection(sc)?;
    let solutions: Vec<SolutionTriple> = schedule
        .par_iter()
        .map(|&n| solve_penalized(sc, n))
        .collect::<Result<_>>()?;
    let monotone_violation = sequence_monotone_violation(&solutions, 1.0);
    let mut domination_violation = 0.0f64;
    for s in &solutions {
        domination_violation =
            domination_violation.max(s.y.sub(&reference.y)?.max_over_nodes(|x| x));
    }
    let battery = sc.norm_battery();
    let mut with_ref = solutions.clone();
    with_ref.push(reference.clone());
    let (mut y_gaps, mut z_gaps) = gaps_to_last(&with_ref, &battery)?;
    for (_, v) in y_gaps.iter_mut().chain(z_gaps.iter_mut()) {
        v.pop();
    }
    let mut k_gaps = Vec::with_capacity(battery.len());
    for p in &battery {
        let v = solutions
            .iter()
            .map(|s| Ok(sp_norm(&s.k.sub(&reference.k)?, *p)))
            .collect::<Result<Vec<f64>>>()?;
        k_gaps.push((p.p(), v));
    }
    let residuals = solutions
        .iter()
        .map(|s| skorokhod_residual(s, l, sc.p))
        .collect::<Result<Vec<_>>>()?;
    let uniform_bound = solutions.iter().map(|s| uniform_quantity(s, sc.p.p())).collect();
    Ok(PenalizationReport {
        schedule: schedule.to_vec(),
        y0: solutions.iter().map(|s| s.y0()).collect(),
        solutions,
        reference,
        monotone_violation,
        monotone: monotone_violation <= tol,
        domination_violation,
        y_gaps,
        z_gaps,
        k_gaps,
        residuals,
        uniform_bound,
        tol,
    })
}

/// A process dominating the barrier with its decomposition `X_k = E[X_{k+1} | F_k] - dC_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierDominator {
    /// Levels `0..=N`.
    pub x: AdaptedProcess,
    /// Martingale integrand on levels `0..N`.
    pub h: AdaptedProcess,
    /// Drift increments `dC_k` on levels `0..N`.
    pub dc: AdaptedProcess,
    /// `C_k = sum_{j<k} dC_j`.
    pub c: AdaptedProcess,
}

impl BarrierDominator {
    pub fn new(x: AdaptedProcess) -> Result<Self> {
        let tree = *x.tree();
        if !x.is_full() || x.dim() != 1 {
            return Err(LabError::LevelMismatch {
                expected: tree.depth() + 1,
                got: x.num_levels(),
            });
        }
        let b = tree.branching();
        let mut hl = Vec::with_capacity(tree.depth());
        let mut cl = Vec::with_capacity(tree.depth());
        for k in 0..tree.depth() {
            let next = x.level(k + 1);
            let mut hk = vec![0.0; tree.nodes(k) * tree.dim()];
            let mut ck = vec![0.0; tree.nodes(k)];
            for i in 0..tree.nodes(k) {
                let children = &next[i * b..(i + 1) * b];
                integrand_into(&tree, children, &mut hk[i * tree.dim()..(i + 1) * tree.dim()]);
                ck[i] = children.iter().sum::<f64>() / b as f64 - x.value(k, i);
            }
            hl.push(hk);
            cl.push(ck);
        }
        let dc = AdaptedProcess::from_levels(tree, 1, cl)?;
        Ok(Self {
            h: AdaptedProcess::from_levels(tree, tree.dim(), hl)?,
            c: accumulate(&dc),
            dc,
            x,
        })
    }

    /// `X_k = max_{j<=k} L_j^+` path-wise; `X = 0` without a barrier.
    pub fn auto(tree: TreeModel, barrier: Option<&AdaptedProcess>) -> Result<Self> {
        let x = match barrier {
            None => AdaptedProcess::zeros(tree, tree.depth() + 1, 1),
            Some(l) => {
                let mut levels: Vec<Vec<f64>> = Vec::with_capacity(tree.depth() + 1);
                levels.push(vec![l.value(0, 0).max(0.0)]);
                for k in 1..=tree.depth() {
                    let prev = &levels[k - 1];
                    let lv = (0..tree.nodes(k))
                        .map(|j| prev[tree.parent(j)].max(l.value(k, j)))
                        .collect();
                    levels.push(lv);
                }
                AdaptedProcess::from_levels(tree, 1, levels)?
            }
        };
        Self::new(x)
    }

    /// Largest deviation of `X_k - E[X_{k+1} | F_k] + dC_k` and of the integrand rule.
    pub fn decomposition_residual(&self) -> f64 {
        let tree = *self.x.tree();
        let b = tree.branching();
        let mut worst = 0.0f64;
        let mut hz = vec![0.0; tree.dim()];
        for k in 0..tree.depth() {
            let next = self.x.level(k + 1);
            for i in 0..tree.nodes(k) {
                let children = &next[i * b..(i + 1) * b];
                let mean = children.iter().sum::<f64>() / b as f64;
                worst = worst.max((self.x.value(k, i) - mean + self.dc.value(k, i)).abs());
                integrand_into(&tree, children, &mut hz);
                for (a, bb) in hz.iter().zip(self.h.vector(k, i)) {
                    worst = worst.max((a - bb).abs());
                }
            }
        }
        worst
    }
}

/// Barrier-growth condition diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct H6Report {
    pub auto: bool,
    /// `max over nodes of (L - X)^+`.
    pub domination_violation: f64,
    pub dominated: bool,
    /// `||g(., X, 0)||_H^p` for the scenario exponent.
    pub g_x0_norm: f64,
    /// `||L^+||_S^p`.
    pub barrier_plus_norm: f64,
    pub decomposition_residual: f64,
}

/// Checks domination of the barrier by `X` (provided or built automatically) and
/// integrability of `g(., X, 0)`.
pub fn check_h6(sc: &ScenarioConfig, x: Option<&BarrierDominator>) -> Result<(BarrierDominator, H6Report)> {
    let tree = sc.tree;
    let auto = x.is_none();
    let dom = match x {
        Some(d) => {
            if !d.x.tree().same_shape(&tree) {
                return Err(LabError::TreeMismatch);
            }
            d.clone()
        }
        None => BarrierDominator::auto(tree, sc.barrier())?,
    };
    let mut violation = 0.0f64;
    let mut plus_norm = 0.0;
    if let Some(l) = sc.barrier() {
        for k in 0..=tree.depth() {
            for i in 0..tree.nodes(k) {
                let v = l.value(k, i) - dom.x.value(k, i);
                if v > 0.0 && !auto {
                    return Err(LabError::DominationFailure { level: k, node: i });
                }
                violation = violation.max(v);
            }
        }
        plus_norm = sp_norm(&l.map(|v| v.max(0.0)), sc.p);
    }
    let zero = vec![0.0; tree.dim()];
    let gx = AdaptedProcess::from_fn(tree, tree.depth(), |node| {
        sc.generator
            .value(tree.time(node.level), dom.x.at(node), &zero, node)
    });
    let report = H6Report {
        auto,
        domination_violation: violation,
        dominated: violation <= 0.0,
        g_x0_norm: hp_norm(&gx, sc.p),
        barrier_plus_norm: plus_norm,
        decomposition_residual: dom.decomposition_residual(),
    };
    Ok((dom, report))
}

/// Both sides of
/// `E[(int|g(Y,0)|)^p] <= 4^p E[(int|g(Y,Z)|)^p] + 4^p E[(int f)^p]
///  + (4 mu T)^p E[sup|Y|^p] + (4 lambda max(1, sqrt T))^p E[(int|Z|^2)^{p/2}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NecessityReport {
    pub lhs: f64,
    pub rhs: f64,
    /// The four right-hand terms in order.
    pub terms: [f64; 4],
    pub pass: bool,
}

pub fn theorem3_necessity(sc: &ScenarioConfig, sol: &SolutionTriple) -> Result<NecessityReport> {
    let closure = implied_closure(&sc.generator.hypotheses);
    for h in [Hypothesis::H1, Hypothesis::H2w] {
        if !closure.contains(&h) {
            return Err(LabError::HypothesisNotSatisfied(format!(
                "necessity inequality needs {h}"
            )));
        }
    }
    if !sol.tree().same_shape(&sc.tree) {
        return Err(LabError::TreeMismatch);
    }
    let tree = sc.tree;
    let p = sc.p.p();
    let h = tree.step();
    let (f, mu, lambda) = sc.generator.h2w_constants();
    let zero = vec![0.0; tree.dim()];
    let mut sums = [0.0f64; 5];
    for leaf in 0..tree.leaves() {
        let mut g0 = 0.0;
        let mut gz = 0.0;
        let mut fi = 0.0;
        let mut sup = 0.0f64;
        let mut qv = 0.0;
        for k in 0..=tree.depth() {
            let i = tree.ancestor(leaf, k);
            let y = sol.y.value(k, i);
            sup = sup.max(y.abs());
            if k < tree.depth() {
                let node = Node::new(k, i);
                let t = tree.time(k);
                let z = sol.z.vector(k, i);
                g0 += sc.generator.value(t, y, &zero, node).abs() * h;
                gz += sc.generator.value(t, y, z, node).abs() * h;
                fi += f.at(node) * h;
                qv += norm(z).powi(2) * h;
            }
        }
        sums[0] += g0.powf(p);
        sums[1] += gz.powf(p);
        sums[2] += fi.powf(p);
        sums[3] += sup.powf(p);
        sums[4] += qv.powf(p / 2.0);
    }
    let w = tree.leaf_weight();
    let big_t = tree.horizon();
    let terms = [
        4f64.powf(p) * sums[1] * w,
        4f64.powf(p) * sums[2] * w,
        (4.0 * mu * big_t).powf(p) * sums[3] * w,
        (4.0 * lambda * big_t.sqrt().max(1.0)).powf(p) * sums[4] * w,
    ];
    let lhs = sums[0] * w;
    let rhs: f64 = terms.iter().sum();
    Ok(NecessityReport {
        lhs,
        rhs,
        terms,
        pass: lhs <= rhs,
    })
}

/// Total variation of `V` on the whole horizon along one path.
pub fn forcing_total_variation(sc: &ScenarioConfig, leaf: usize) -> f64 {
    path_variation(&sc.forcing().path(), leaf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::library::{constant, linear, zero};

    fn scenario(tree: TreeModel, xi: Vec<f64>, l: AdaptedProcess) -> ScenarioConfig {
        ScenarioConfig::new(tree, xi, zero(1))
            .unwrap()
            .with_barrier(l)
            .unwrap()
    }

    #[test]
    fn one_step_snell() {
        let tree = TreeModel::new(1.0, 1, 1).unwrap();
        let l = AdaptedProcess::constant(tree, 2, 0.5);
        let sc = scenario(tree, vec![0.5, 1.0], l.clone());
        let sol = solve_reflected_projection(&sc).unwrap();
        assert!((sol.y0() - 0.75).abs() < 1e-15);
        let r = skorokhod_residual(&sol, &l, NormParams::new(2.0).unwrap()).unwrap();
        assert_eq!(r.deficit_sup, 0.0);
        assert!(r.complementarity < 1e-15);
    }

    #[test]
    fn touching_barrier() {
        let tree = TreeModel::new(1.0, 4, 1).unwrap();
        let xi: Vec<f64> = tree.brownian().terminal().to_vec();
        let l = AdaptedProcess::martingale_of(tree, &xi).unwrap();
        let sc = scenario(tree, xi, l.clone());
        let sol = solve_reflected_projection(&sc).unwrap();
        assert!(sol.y.sub(&l).unwrap().max_over_nodes(f64::abs) < 1e-15);
        assert_eq!(sol.k.max_over_nodes(f64::abs), 0.0);
    }

    #[test]
    fn penalized_zero_is_plain_solution() {
        let tree = TreeModel::new(1.0, 4, 1).unwrap();
        let xi: Vec<f64> = tree.brownian().terminal().iter().map(|b| b.abs()).collect();
        let l = AdaptedProcess::constant(tree, 5, 0.0);
        let sc = ScenarioConfig::new(tree, xi, linear(0.3, 0.2, 0.1, 1))
            .unwrap()
            .with_barrier(l)
            .unwrap();
        let plain = crate::bsde::solve_bsde(&sc.clone().without_barrier()).unwrap();
        assert_eq!(solve_penalized(&sc, 0.0).unwrap(), plain);
        assert!(solve_penalized(&sc, -1.0).is_err());
    }

    #[test]
    fn one_step_penalized_approaches_projection() {
        let tree = TreeModel::new(1.0, 1, 1).unwrap();
        let l = AdaptedProcess::constant(tree, 2, 0.8);
        let sc = scenario(tree, vec![0.8, 1.0], l);
        let proj = solve_reflected_projection(&sc).unwrap();
        let pen = solve_penalized(&sc, 1e3).unwrap();
        assert!((pen.y0() - proj.y0()).abs() < 1e-2);
        assert!(pen.y0() <= proj.y0());
    }

    #[test]
    fn sweep_on_active_barrier() {
        let tree = TreeModel::new(1.0, 6, 1).unwrap();
        let b = tree.brownian();
        let xi: Vec<f64> = b.terminal().iter().map(|x| (1.0 - x).max(0.2)).collect();
        let l = b.map(|x| 0.2f64.max(1.0 - x) - 0.05);
        let l = AdaptedProcess::from_fn(tree, 7, |n| {
            if n.level == 6 {
                l.at(n).min(xi[n.index])
            } else {
                l.at(n)
            }
        });
        let sc = ScenarioConfig::new(tree, xi, constant(-0.3, 1))
            .unwrap()
            .with_barrier(l)
            .unwrap();
        let sched: Vec<f64> = (0..8).map(|j| 2f64.powi(j)).collect();
        let rep = penalization_sweep(&sc, &sched).unwrap();
        assert!(rep.monotone, "{}", rep.monotone_violation);
        assert!(rep.domination_violation <= 1e-12);
        let (yg, _, _) = rep.gaps_for(2.0).unwrap();
        assert!(strictly_decreasing(yg), "{yg:?}");
    }

    #[test]
    fn auto_dominator() {
        let tree = TreeModel::new(1.0, 3, 1).unwrap();
        let l = tree.brownian();
        let dom = BarrierDominator::auto(tree, Some(&l)).unwrap();
        for k in 0..=3 {
            for i in 0..tree.nodes(k) {
                assert!(dom.x.value(k, i) >= l.value(k, i));
            }
        }
        assert!(dom.decomposition_residual() < 1e-14);
        let neg = AdaptedProcess::constant(tree, 4, -1.0);
        let zero_dom = BarrierDominator::auto(tree, Some(&neg)).unwrap();
        assert_eq!(zero_dom.x.max_over_nodes(f64::abs), 0.0);
    }

    #[test]
    fn provided_dominator_must_dominate() {
        let tree = TreeModel::new(1.0, 2, 1).unwrap();
        let l = AdaptedProcess::constant(tree, 3, 0.0);
        let sc = scenario(tree, vec![0.0; 4], l);
        let x = BarrierDominator::new(AdaptedProcess::constant(tree, 3, -0.1)).unwrap();
        assert!(matches!(check_h6(&sc, Some(&x)), Err(LabError::DominationFailure { .. })));
    }

    #[test]
    fn necessity_on_linear_driver() {
        let tree = TreeModel::new(1.0, 5, 1).unwrap();
        let xi: Vec<f64> = tree.brownian().terminal().iter().map(|b| b * b).collect();
        let l = AdaptedProcess::constant(tree, 6, 0.1);
        let sc = ScenarioConfig::new(tree, xi, linear(-0.5, 1.5, 0.3, 1))
            .unwrap()
            .with_barrier(l)
            .unwrap();
        let sol = solve_reflected_projection(&sc).unwrap();
        let rep = theorem3_necessity(&sc, &sol).unwrap();
        assert!(rep.pass, "{rep:?}");
    }
}
