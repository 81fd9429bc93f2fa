//! Node-wise comparison of solutions with ordered data.

use crate::bsde::{ScenarioConfig, SolutionTriple};
use crate::error::{LabError, Result};
use crate::generators::GeneratorSpec;
use crate::tree::{Node, TreeModel};

/// Outcome of a comparison check.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonVerdict {
    /// `max over nodes of (Y^1 - Y^2)^+`.
    pub y_violation: f64,
    /// `max over nodes of (dK^2 - dK^1)^+`, for increment comparisons.
    pub k_violation: Option<f64>,
    /// `max over nodes of 1{Y^1 > Y^2} (g^1 - g^2)^+` at the first solution's evaluation points.
    pub indicator_residual: f64,
    pub tol: f64,
    pub pass: bool,
}

fn ordering_err(what: &str, level: usize, node: usize, a: f64, b: f64) -> LabError {
    LabError::DataOrderingViolation(format!(
        "{what} not ordered at level {level}, node {node}: {a} > {b}"
    ))
}

/// `xi^1 <= xi^2`, `dV^1 <= dV^2` per node, `L^1 <= L^2` (an absent barrier is `-inf`).
pub fn check_data_ordering(sc1: &ScenarioConfig, sc2: &ScenarioConfig) -> Result<()> {
    if !sc1.tree.same_shape(&sc2.tree) {
        return Err(LabError::TreeMismatch);
    }
    let tree = sc1.tree;
    let n = tree.depth();
    for (i, (a, b)) in sc1.terminal().iter().zip(sc2.terminal()).enumerate() {
        if a > b {
            return Err(ordering_err("terminal values", n, i, *a, *b));
        }
    }
    for k in 0..n {
        for i in 0..tree.nodes(k) {
            let (a, b) = (sc1.forcing().increment(k, i), sc2.forcing().increment(k, i));
            if a > b {
                return Err(ordering_err("forcing increments", k, i, a, b));
            }
        }
    }
    match (sc1.barrier(), sc2.barrier()) {
        (Some(_), None) => Err(LabError::DataOrderingViolation(
            "first scenario has a barrier but the second does not".into(),
        )),
        (Some(l1), Some(l2)) => {
            for k in 0..=n {
                for i in 0..tree.nodes(k) {
                    let (a, b) = (l1.value(k, i), l2.value(k, i));
                    if a > b {
                        return Err(ordering_err("barriers", k, i, a, b));
                    }
                }
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

/// `max (g^1 - g^2)^+` over every node and a `9^d`-point grid of `(y, z)` in `[-3, 3]`,
/// plus the extra points supplied.
pub fn driver_ordering_violation(
    g1: &GeneratorSpec,
    g2: &GeneratorSpec,
    tree: &TreeModel,
    extra: &[(Node, f64, Vec<f64>)],
) -> f64 {
    let d = tree.dim();
    let grid: Vec<f64> = (0..9).map(|i| -3.0 + 0.75 * i as f64).collect();
    let mut zs: Vec<Vec<f64>> = vec![Vec::new()];
    for _ in 0..d {
        zs = zs
            .into_iter()
            .flat_map(|z| {
                grid.iter().map(move |&v| {
                    let mut w = z.clone();
                    w.push(v);
                    w
                })
            })
            .collect();
    }
    let mut worst = 0.0f64;
    for k in 0..tree.depth() {
        let t = tree.time(k);
        for i in 0..tree.nodes(k) {
            let node = Node::new(k, i);
            for &y in &grid {
                for z in &zs {
                    worst = worst.max(g1.value(t, y, z, node) - g2.value(t, y, z, node));
                }
            }
        }
    }
    for (node, y, z) in extra {
        let t = tree.time(node.level);
        worst = worst.max(g1.value(t, *y, z, *node) - g2.value(t, *y, z, *node));
    }
    worst
}

fn solution_points(sol: &SolutionTriple) -> Vec<(Node, f64, Vec<f64>)> {
    let tree = sol.tree();
    let mut out = Vec::new();
    for k in 0..tree.depth() {
        for i in 0..tree.nodes(k) {
            out.push((Node::new(k, i), sol.eval_point.value(k, i), sol.z.vector(k, i).to_vec()));
        }
    }
    out
}

fn y_and_indicator(
    sol1: &SolutionTriple,
    sol2: &SolutionTriple,
    sc1: &ScenarioConfig,
    sc2: &ScenarioConfig,
) -> Result<(f64, f64)> {
    let diff = sol1.y.sub(&sol2.y)?;
    let y_violation = diff.max_over_nodes(|x| x);
    let tree = sc1.tree;
    let mut indicator = 0.0f64;
    for k in 0..tree.depth() {
        for i in 0..tree.nodes(k) {
            if diff.value(k, i) > 0.0 {
                let node = Node::new(k, i);
                let (y, z) = (sol1.eval_point.value(k, i), sol1.z.vector(k, i));
                let t = tree.time(k);
                indicator = indicator
                    .max(sc1.generator.value(t, y, z, node) - sc2.generator.value(t, y, z, node));
            }
        }
    }
    Ok((y_violation, indicator))
}

/// Comparison of two (reflected or not) solutions after validating the data ordering.
pub fn compare_rbsde(
    sol1: &SolutionTriple,
    sol2: &SolutionTriple,
    sc1: &ScenarioConfig,
    sc2: &ScenarioConfig,
    tol: f64,
) -> Result<ComparisonVerdict> {
    check_data_ordering(sc1, sc2)?;
    if !sol1.tree().same_shape(&sc1.tree) || !sol2.tree().same_shape(&sc2.tree) {
        return Err(LabError::TreeMismatch);
    }
    let (y_violation, indicator_residual) = y_and_indicator(sol1, sol2, sc1, sc2)?;
    Ok(ComparisonVerdict {
        y_violation,
        k_violation: None,
        indicator_residual,
        tol,
        pass: y_violation <= tol,
    })
}

/// Reflection increments for a common barrier: `dK^1 >= dK^2` when `g^1 <= g^2`.
pub fn compare_increments(
    sol1: &SolutionTriple,
    sol2: &SolutionTriple,
    sc1: &ScenarioConfig,
    sc2: &ScenarioConfig,
    tol: f64,
) -> Result<ComparisonVerdict> {
    check_data_ordering(sc1, sc2)?;
    if sc1.barrier() != sc2.barrier() {
        return Err(LabError::DataOrderingViolation(
            "increment comparison needs identical barriers".into(),
        ));
    }
    let mut extra = solution_points(sol1);
    extra.extend(solution_points(sol2));
    let g_gap = driver_ordering_violation(&sc1.generator, &sc2.generator, &sc1.tree, &extra);
    if g_gap > tol {
        return Err(LabError::DataOrderingViolation(format!(
            "drivers not ordered: max (g1 - g2)^+ = {g_gap}"
        )));
    }
    let (y_violation, indicator_residual) = y_and_indicator(sol1, sol2, sc1, sc2)?;
    let k_violation = sol2.dk.sub(&sol1.dk)?.max_over_nodes(|x| x);
    Ok(ComparisonVerdict {
        y_violation,
        k_violation: Some(k_violation),
        indicator_residual,
        tol,
        pass: k_violation <= tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bsde::solve_bsde;
    use crate::generators::library::{constant, linear};
    use crate::rbsde::solve_reflected_projection;
    use crate::tree::AdaptedProcess;

    fn base(tree: TreeModel, shift: f64, g: GeneratorSpec) -> ScenarioConfig {
        let xi = tree.brownian().terminal().iter().map(|b| b.sin() + shift).collect();
        ScenarioConfig::new(tree, xi, g).unwrap()
    }

    #[test]
    fn reflexive() {
        let tree = TreeModel::new(1.0, 5, 1).unwrap();
        let sc = base(tree, 0.0, linear(0.2, 0.3, 0.0, 1));
        let sol = solve_bsde(&sc).unwrap();
        let v = compare_rbsde(&sol, &sol, &sc, &sc, 1e-10).unwrap();
        assert_eq!(v.y_violation, 0.0);
        assert!(v.pass);
    }

    #[test]
    fn shifted_terminal_and_driver() {
        let tree = TreeModel::new(1.0, 5, 1).unwrap();
        let sc1 = base(tree, 0.0, linear(0.2, 0.3, 0.0, 1));
        let sc2 = base(tree, 1.0, linear(0.2, 0.3, 0.5, 1));
        let (s1, s2) = (solve_bsde(&sc1).unwrap(), solve_bsde(&sc2).unwrap());
        let v = compare_rbsde(&s1, &s2, &sc1, &sc2, 1e-10).unwrap();
        assert!(v.pass);
        assert!(s2.y0() - s1.y0() > 1.0);
        assert!(matches!(
            compare_rbsde(&s2, &s1, &sc2, &sc1, 1e-10),
            Err(LabError::DataOrderingViolation(_))
        ));
    }

    #[test]
    fn increments_on_shared_barrier() {
        let tree = TreeModel::new(1.0, 5, 1).unwrap();
        let l = tree.brownian().map(|b| 0.6 - b.abs());
        let l = AdaptedProcess::from_fn(tree, 6, |n| if n.level == 5 { -10.0 } else { l.at(n) });
        let sc1 = base(tree, 0.0, constant(-0.4, 1)).with_barrier(l.clone()).unwrap();
        let sc2 = base(tree, 0.0, constant(0.1, 1)).with_barrier(l).unwrap();
        let s1 = solve_reflected_projection(&sc1).unwrap();
        let s2 = solve_reflected_projection(&sc2).unwrap();
        let v = compare_increments(&s1, &s2, &sc1, &sc2, 1e-10).unwrap();
        assert!(v.pass, "{v:?}");
        assert!(s1.k.terminal().iter().any(|&k| k > 0.0));
        assert!(compare_increments(&s2, &s1, &sc2, &sc1, 1e-10).is_err());
    }
}
