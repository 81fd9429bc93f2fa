//! Minimal and maximal solutions through convolution schedules.

use crate::bsde::{solve_sequence, ApproximationReport, KappaOffset, ScenarioConfig, SequenceKind, SolutionTriple};
use crate::error::{LabError, Result};
use crate::generators::{implied_closure, Hypothesis};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Min,
    Max,
}

impl Side {
    pub fn as_str(&self) -> &'static str {
        match self {
            Side::Min => "min",
            Side::Max => "max",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(Side::Min),
            "max" => Ok(Side::Max),
            other => Err(LabError::InvalidParameter(format!("unknown side `{other}`"))),
        }
    }
}

/// Solves along `g_n = inf/sup_u [g(u) +/- (n + 2 lambda)|u - z|]` and returns the last member.
///
/// With a barrier every member uses the projection solver; without one the plain solver.
/// The report's monotonicity verdict is at tolerance `1e-10`.
pub fn extremal_reflected(
    sc: &ScenarioConfig,
    side: Side,
    schedule: &[f64],
) -> Result<(SolutionTriple, ApproximationReport)> {
    let closure = implied_closure(&sc.generator.hypotheses);
    for h in [Hypothesis::H1, Hypothesis::H2w, Hypothesis::H3, Hypothesis::H4s] {
        if !closure.contains(&h) {
            return Err(LabError::HypothesisNotSatisfied(format!(
                "extremal solutions need {h}"
            )));
        }
    }
    let kind = match side {
        Side::Min => SequenceKind::InfConv,
        Side::Max => SequenceKind::SupConv,
    };
    let report = solve_sequence(
        sc,
        kind,
        schedule,
        KappaOffset::Lambda,
        sc.barrier().is_some(),
        1e-10,
    )?;
    Ok((report.last().clone(), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::library::{linear, zero};
    use crate::rbsde::solve_reflected_projection;
    use crate::tree::{sp_norm, AdaptedProcess, NormParams, TreeModel};

    fn scenario(g: crate::generators::GeneratorSpec) -> ScenarioConfig {
        let tree = TreeModel::new(1.0, 6, 1).unwrap();
        let b = tree.brownian();
        let xi: Vec<f64> = b.terminal().iter().map(|x| x.abs()).collect();
        let l = AdaptedProcess::from_fn(tree, 7, |n| if n.level == 6 { 0.0 } else { 0.7 - b.at(n) });
        ScenarioConfig::new(tree, xi, g).unwrap().with_barrier(l).unwrap()
    }

    #[test]
    fn zero_driver_gives_snell_envelope() {
        let sc = scenario(zero(1));
        let proj = solve_reflected_projection(&sc).unwrap();
        for side in [Side::Min, Side::Max] {
            let (sol, rep) = extremal_reflected(&sc, side, &[1.0, 4.0]).unwrap();
            assert_eq!(sol.y, proj.y);
            assert!(rep.monotone);
        }
    }

    #[test]
    fn lipschitz_extremes_coincide() {
        let sc = scenario(linear(0.1, 0.5, 0.0, 1));
        let (lo, _) = extremal_reflected(&sc, Side::Min, &[1.0, 2.0]).unwrap();
        let (hi, _) = extremal_reflected(&sc, Side::Max, &[1.0, 2.0]).unwrap();
        let gap = sp_norm(&hi.y.sub(&lo.y).unwrap(), NormParams::new(2.0).unwrap());
        assert!(gap <= 1e-6);
    }
}
