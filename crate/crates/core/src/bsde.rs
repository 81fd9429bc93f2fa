//! Backward solver for the non-reflected equation and the shared backward sweep
//! used by the reflected solvers.
//!
//! One step at a level-`k` node with children values `Y_{k+1}`:
//! `y~ = E[Y_{k+1} | F_k]`, `Z_k = E[Y_{k+1} dB | F_k] / h`, then
//! `Y_k = y~ + h g(t_k, y*, Z_k) + dV_k + dK_k` where `y* = y~` (explicit)
//! or `y* = Y_k` (fixed point), and `dK_k` comes from the reflection rule.

use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::generators::{
    inf_convolved, sup_convolved, truncate_above, truncate_below, GeneratorSpec,
};
use crate::tree::{integrand_into, mp_norm, sp_norm, AdaptedProcess, NormParams, Node, TreeModel};

/// Time discretization of the driver term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SchemeKind {
    Explicit,
    FixedPoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    pub tol: f64,
    pub max_iter: usize,
    /// Relaxation weight of the damped iteration.
    pub damping: f64,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            kind: SchemeKind::Explicit,
            tol: 1e-12,
            max_iter: 100,
            damping: 0.5,
        }
    }
}

impl SchemeConfig {
    pub fn explicit() -> Self {
        Self::default()
    }

    pub fn fixed_point() -> Self {
        Self {
            kind: SchemeKind::FixedPoint,
            ..Self::default()
        }
    }
}

/// Predictable finite-variation forcing: `dV_k` is known at level `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Forcing {
    increments: AdaptedProcess,
}

impl Forcing {
    pub fn zero(tree: TreeModel) -> Self {
        Self {
            increments: AdaptedProcess::zeros(tree, tree.depth(), 1),
        }
    }

    /// Increments on levels `0..N`.
    pub fn from_increments(increments: AdaptedProcess) -> Result<Self> {
        let tree = *increments.tree();
        if increments.num_levels() != tree.depth() || increments.dim() != 1 {
            return Err(LabError::LevelMismatch {
                expected: tree.depth(),
                got: increments.num_levels(),
            });
        }
        check_finite(&increments)?;
        Ok(Self { increments })
    }

    /// From a path `V` on `0..=N` with `V_0 = 0` whose value at `k + 1` is shared by siblings.
    pub fn from_path(v: &AdaptedProcess) -> Result<Self> {
        let tree = *v.tree();
        if !v.is_full() || v.dim() != 1 {
            return Err(LabError::LevelMismatch {
                expected: tree.depth() + 1,
                got: v.num_levels(),
            });
        }
        if v.value(0, 0) != 0.0 {
            return Err(LabError::InvalidParameter("forcing path must start at V_0 = 0".into()));
        }
        let mut levels = Vec::with_capacity(tree.depth());
        for k in 0..tree.depth() {
            let next = v.level(k + 1);
            let mut inc = vec![0.0; tree.nodes(k)];
            for (i, slot) in inc.iter_mut().enumerate() {
                let first = next[tree.child(i, 0)];
                if (1..tree.branching()).any(|c| next[tree.child(i, c)] != first) {
                    return Err(LabError::InvalidParameter(format!(
                        "forcing path is not predictable at level {}, node {i}",
                        k + 1
                    )));
                }
                *slot = first - v.value(k, i);
            }
            levels.push(inc);
        }
        Self::from_increments(AdaptedProcess::from_levels(tree, 1, levels)?)
    }

    pub fn increments(&self) -> &AdaptedProcess {
        &self.increments
    }

    pub fn increment(&self, k: usize, i: usize) -> f64 {
        self.increments.value(k, i)
    }

    /// The path `V_k = sum_{j<k} dV_j` on `0..=N`.
    pub fn path(&self) -> AdaptedProcess {
        accumulate(&self.increments)
    }

    pub fn is_zero(&self) -> bool {
        self.increments.max_over_nodes(f64::abs) == 0.0
    }
}

/// `X_0 = 0`, `X_{k+1} = X_k + dX_k` for a level-`k` increment process.
pub fn accumulate(increments: &AdaptedProcess) -> AdaptedProcess {
    let tree = *increments.tree();
    let mut levels = Vec::with_capacity(tree.depth() + 1);
    levels.push(vec![0.0]);
    for k in 0..increments.num_levels() {
        let prev: &Vec<f64> = &levels[k];
        let mut next = vec![0.0; tree.nodes(k + 1)];
        for (j, slot) in next.iter_mut().enumerate() {
            let parent = tree.parent(j);
            *slot = prev[parent] + increments.value(k, parent);
        }
        levels.push(next);
    }
    AdaptedProcess::from_levels(tree, 1, levels).expect("accumulated levels have tree shape")
}

fn check_finite(p: &AdaptedProcess) -> Result<()> {
    for k in 0..p.num_levels() {
        if let Some(i) = p.level(k).iter().position(|x| !x.is_finite()) {
            return Err(LabError::NonFiniteValue {
                level: k,
                node: i / p.dim(),
            });
        }
    }
    Ok(())
}

/// One problem instance: terminal value, forcing, optional barrier, driver, exponent, scheme.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub id: String,
    pub tree: TreeModel,
    terminal: Vec<f64>,
    forcing: Forcing,
    barrier: Option<AdaptedProcess>,
    pub generator: GeneratorSpec,
    pub p: NormParams,
    pub scheme: SchemeConfig,
}

impl ScenarioConfig {
    pub fn new(tree: TreeModel, terminal: Vec<f64>, generator: GeneratorSpec) -> Result<Self> {
        if terminal.len() != tree.leaves() {
            return Err(LabError::LevelMismatch {
                expected: tree.leaves(),
                got: terminal.len(),
            });
        }
        if let Some(i) = terminal.iter().position(|x| !x.is_finite()) {
            return Err(LabError::NonFiniteValue {
                level: tree.depth(),
                node: i,
            });
        }
        if generator.dim != tree.dim() {
            return Err(LabError::InvalidParameter(format!(
                "generator dimension {} does not match tree dimension {}",
                generator.dim,
                tree.dim()
            )));
        }
        Ok(Self {
            id: "scenario".into(),
            tree,
            terminal,
            forcing: Forcing::zero(tree),
            barrier: None,
            generator,
            p: NormParams::new(2.0)?,
            scheme: SchemeConfig::default(),
        })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn with_forcing(mut self, forcing: Forcing) -> Result<Self> {
        if !forcing.increments().tree().same_shape(&self.tree) {
            return Err(LabError::TreeMismatch);
        }
        self.forcing = forcing;
        Ok(self)
    }

    /// Attaches a barrier on `0..=N`; the terminal value must dominate it at every leaf.
    pub fn with_barrier(mut self, barrier: AdaptedProcess) -> Result<Self> {
        if !barrier.tree().same_shape(&self.tree) {
            return Err(LabError::TreeMismatch);
        }
        if !barrier.is_full() || barrier.dim() != 1 {
            return Err(LabError::LevelMismatch {
                expected: self.tree.depth() + 1,
                got: barrier.num_levels(),
            });
        }
        check_finite(&barrier)?;
        check_terminal_barrier(&self.terminal, &barrier)?;
        self.barrier = Some(barrier);
        Ok(self)
    }

    pub fn without_barrier(mut self) -> Self {
        self.barrier = None;
        self
    }

    pub fn with_generator(mut self, generator: GeneratorSpec) -> Self {
        self.generator = generator;
        self
    }

    pub fn with_p(mut self, p: NormParams) -> Self {
        self.p = p;
        self
    }

    pub fn with_scheme(mut self, scheme: SchemeConfig) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn terminal(&self) -> &[f64] {
        &self.terminal
    }

    pub fn forcing(&self) -> &Forcing {
        &self.forcing
    }

    pub fn barrier(&self) -> Option<&AdaptedProcess> {
        self.barrier.as_ref()
    }

    /// Scenario exponent followed by the fixed battery, without duplicates.
    pub fn norm_battery(&self) -> Vec<NormParams> {
        let mut out = vec![self.p];
        for q in NormParams::battery() {
            if q.p() != self.p.p() {
                out.push(q);
            }
        }
        out
    }
}

pub(crate) fn check_terminal_barrier(xi: &[f64], barrier: &AdaptedProcess) -> Result<()> {
    let last = barrier.terminal();
    for (leaf, (&x, &l)) in xi.iter().zip(last).enumerate() {
        if x < l {
            return Err(LabError::BarrierViolation {
                leaf,
                xi: x,
                barrier: l,
            });
        }
    }
    Ok(())
}

/// `(Y, Z, K)` with the evaluation data of the scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionTriple {
    /// Levels `0..=N`.
    pub y: AdaptedProcess,
    /// Levels `0..N`, `d` components.
    pub z: AdaptedProcess,
    /// Levels `0..=N`, `K_0 = 0`, nondecreasing.
    pub k: AdaptedProcess,
    /// Reflection increments `dK_k` on levels `0..N`.
    pub dk: AdaptedProcess,
    /// Driver values `g(t_k, y*_k, Z_k)` on levels `0..N`.
    pub drift: AdaptedProcess,
    /// Evaluation points `y*_k` on levels `0..N`.
    pub eval_point: AdaptedProcess,
}

impl SolutionTriple {
    pub fn y0(&self) -> f64 {
        self.y.value(0, 0)
    }

    pub fn tree(&self) -> &TreeModel {
        self.y.tree()
    }
}

/// Reflection rule applied after the driver step.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Reflection<'a> {
    None,
    Project(&'a AdaptedProcess),
    Penalize(&'a AdaptedProcess, f64),
}

impl Reflection<'_> {
    /// Returns `(Y_k, dK_k)` for the candidate `c = y~ + h g + dV`.
    #[inline]
    fn apply(&self, c: f64, k: usize, i: usize, h: f64) -> (f64, f64) {
        match *self {
            Reflection::None => (c, 0.0),
            Reflection::Project(l) => {
                let lk = l.value(k, i);
                if c >= lk {
                    (c, 0.0)
                } else {
                    (lk, lk - c)
                }
            }
            Reflection::Penalize(l, n) => {
                let lk = l.value(k, i);
                if c >= lk || n == 0.0 {
                    (c, 0.0)
                } else {
                    // closed-form root of y = c + h n (y - L)^-
                    let y = (c + h * n * lk) / (1.0 + h * n);
                    (y, h * n * (lk - y))
                }
            }
        }
    }
}

struct NodeOut {
    y: f64,
    z: Vec<f64>,
    g: f64,
    ystar: f64,
    dk: f64,
}

/// Full backward sweep; node updates within a level run in parallel.
pub(crate) fn backward_sweep(
    sc: &ScenarioConfig,
    generator: &GeneratorSpec,
    reflection: Reflection<'_>,
) -> Result<SolutionTriple> {
    let tree = sc.tree;
    let n = tree.depth();
    let d = tree.dim();
    let h = tree.step();
    let b = tree.branching();
    let mut y_levels: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
    let mut z_levels: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut g_levels: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut s_levels: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut dk_levels: Vec<Vec<f64>> = vec![Vec::new(); n];
    y_levels[n] = sc.terminal.clone();
    for k in (0..n).rev() {
        let next = &y_levels[k + 1];
        let t = tree.time(k);
        let outs: Vec<Result<NodeOut>> = (0..tree.nodes(k))
            .into_par_iter()
            .map(|i| {
                let children = &next[i * b..(i + 1) * b];
                let ytilde = children.iter().sum::<f64>() / b as f64;
                let mut z = vec![0.0; d];
                integrand_into(&tree, children, &mut z);
                let dv = sc.forcing.increment(k, i);
                let node = Node::new(k, i);
                let (ystar, g) = match sc.scheme.kind {
                    SchemeKind::Explicit => (ytilde, generator.value(t, ytilde, &z, node)),
                    SchemeKind::FixedPoint => {
                        fixed_point(sc, generator, reflection, t, ytilde, &z, dv, node, h)?
                    }
                };
                let c = ytilde + h * g + dv;
                let (y, dk) = reflection.apply(c, k, i, h);
                if !(y.is_finite() && g.is_finite() && z.iter().all(|v| v.is_finite())) {
                    return Err(LabError::NonFiniteValue { level: k, node: i });
                }
                Ok(NodeOut { y, z, g, ystar, dk })
            })
            .collect();
        let count = tree.nodes(k);
        let mut yl = Vec::with_capacity(count);
        let mut zl = Vec::with_capacity(count * d);
        let mut gl = Vec::with_capacity(count);
        let mut sl = Vec::with_capacity(count);
        let mut dl = Vec::with_capacity(count);
        for out in outs {
            let out = out?;
            yl.push(out.y);
            zl.extend(out.z);
            gl.push(out.g);
            sl.push(out.ystar);
            dl.push(out.dk);
        }
        y_levels[k] = yl;
        z_levels[k] = zl;
        g_levels[k] = gl;
        s_levels[k] = sl;
        dk_levels[k] = dl;
    }
    let dk = AdaptedProcess::from_levels(tree, 1, dk_levels)?;
    Ok(SolutionTriple {
        y: AdaptedProcess::from_levels(tree, 1, y_levels)?,
        z: AdaptedProcess::from_levels(tree, d, z_levels)?,
        k: accumulate(&dk),
        dk,
        drift: AdaptedProcess::from_levels(tree, 1, g_levels)?,
        eval_point: AdaptedProcess::from_levels(tree, 1, s_levels)?,
    })
}

/// Damped iteration `y <- (1 - w) y + w R(y~ + h g(y) + dV)` with `R` the reflection rule.
#[allow(clippy::too_many_arguments)]
fn fixed_point(
    sc: &ScenarioConfig,
    generator: &GeneratorSpec,
    reflection: Reflection<'_>,
    t: f64,
    ytilde: f64,
    z: &[f64],
    dv: f64,
    node: Node,
    h: f64,
) -> Result<(f64, f64)> {
    let w = sc.scheme.damping;
    let map = |y: f64| {
        let c = ytilde + h * generator.value(t, y, z, node) + dv;
        reflection.apply(c, node.level, node.index, h).0
    };
    let mut y = map(ytilde);
    let mut residual = f64::INFINITY;
    for _ in 0..sc.scheme.max_iter {
        let next = (1.0 - w) * y + w * map(y);
        residual = (next - y).abs();
        y = next;
        if !y.is_finite() {
            return Err(LabError::NonFiniteValue {
                level: node.level,
                node: node.index,
            });
        }
        if residual <= sc.scheme.tol * y.abs().max(1.0) {
            return Ok((y, generator.value(t, y, z, node)));
        }
    }
    Err(LabError::FixedPointDivergence {
        level: node.level,
        node: node.index,
        residual,
    })
}

/// Solves the non-reflected equation with driver `g + dV`.
pub fn solve_bsde(sc: &ScenarioConfig) -> Result<SolutionTriple> {
    if sc.barrier.is_some() {
        return Err(LabError::InvalidParameter(
            "scenario has a barrier; use the reflected solvers".into(),
        ));
    }
    backward_sweep(sc, &sc.generator, Reflection::None)
}

/// Largest deviation from the backward identity and from the `Z` extraction rule,
/// with the driver re-evaluated at the recorded points.
pub fn backward_residual(sol: &SolutionTriple, sc: &ScenarioConfig) -> f64 {
    let tree = sc.tree;
    let h = tree.step();
    let b = tree.branching();
    let d = tree.dim();
    let mut worst = 0.0f64;
    let mut z = vec![0.0; d];
    for k in 0..tree.depth() {
        let next = sol.y.level(k + 1);
        for i in 0..tree.nodes(k) {
            let children = &next[i * b..(i + 1) * b];
            let ytilde = children.iter().sum::<f64>() / b as f64;
            integrand_into(&tree, children, &mut z);
            let zk = sol.z.vector(k, i);
            for j in 0..d {
                worst = worst.max((z[j] - zk[j]).abs());
            }
            let g = sc
                .generator
                .value(tree.time(k), sol.eval_point.value(k, i), zk, Node::new(k, i));
            let rhs = ytilde + h * g + sc.forcing.increment(k, i) + sol.dk.value(k, i);
            worst = worst.max((sol.y.value(k, i) - rhs).abs());
        }
    }
    for (a, b) in sol.y.terminal().iter().zip(sc.terminal()) {
        worst = worst.max((a - b).abs());
    }
    worst
}

/// Approximating driver families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequenceKind {
    TruncAbove,
    TruncBelow,
    InfConv,
    SupConv,
}

impl SequenceKind {
    /// `+1` if the solutions should increase in `n`, `-1` if they should decrease.
    pub fn direction(&self) -> f64 {
        match self {
            SequenceKind::TruncAbove | SequenceKind::InfConv => 1.0,
            SequenceKind::TruncBelow | SequenceKind::SupConv => -1.0,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SequenceKind::TruncAbove => "trunc-above",
            SequenceKind::TruncBelow => "trunc-below",
            SequenceKind::InfConv => "inf-conv",
            SequenceKind::SupConv => "sup-conv",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "trunc-above" => Ok(SequenceKind::TruncAbove),
            "trunc-below" => Ok(SequenceKind::TruncBelow),
            "inf-conv" => Ok(SequenceKind::InfConv),
            "sup-conv" => Ok(SequenceKind::SupConv),
            other => Err(LabError::InvalidParameter(format!("unknown sequence `{other}`"))),
        }
    }
}

/// How the schedule value `n` maps to the convolution parameter `kappa`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KappaOffset {
    /// `kappa = n + 2A`.
    GrowthA,
    /// `kappa = n + 2 lambda`.
    Lambda,
    /// `kappa = n`.
    Raw,
}

impl KappaOffset {
    pub fn kappa(&self, g: &GeneratorSpec, n: f64) -> f64 {
        match self {
            KappaOffset::GrowthA => n + 2.0 * g.growth_a,
            KappaOffset::Lambda => n + 2.0 * g.lambda,
            KappaOffset::Raw => n,
        }
    }

    /// Default offset per family: `2A` for the inf side, `2 lambda` for the sup side.
    pub fn default_for(kind: SequenceKind) -> Self {
        match kind {
            SequenceKind::SupConv => KappaOffset::Lambda,
            _ => KappaOffset::GrowthA,
        }
    }
}

/// The `n`-th member of an approximating family.
pub fn approximating_generator(
    g: &GeneratorSpec,
    kind: SequenceKind,
    n: f64,
    offset: KappaOffset,
) -> Result<GeneratorSpec> {
    match kind {
        SequenceKind::TruncAbove => Ok(truncate_above(g, n)),
        SequenceKind::TruncBelow => Ok(truncate_below(g, n)),
        SequenceKind::InfConv => inf_convolved(g, offset.kappa(g, n)),
        SequenceKind::SupConv => sup_convolved(g, offset.kappa(g, n)),
    }
}

/// Per-`n` solutions of an approximating family with monotonicity and gap diagnostics.
#[derive(Debug, Clone)]
pub struct ApproximationReport {
    pub kind: SequenceKind,
    pub schedule: Vec<f64>,
    pub solutions: Vec<SolutionTriple>,
    /// Largest step against the expected direction, over consecutive pairs and nodes.
    pub monotone_violation: f64,
    pub monotone: bool,
    /// `(p, ||Y^n - Y^{n_m}||_S^p for each n)`.
    pub y_gaps: Vec<(f64, Vec<f64>)>,
    /// `(p, ||Z^n - Z^{n_m}||_M^p for each n)`.
    pub z_gaps: Vec<(f64, Vec<f64>)>,
}

impl ApproximationReport {
    pub fn last(&self) -> &SolutionTriple {
        self.solutions.last().expect("schedule is nonempty")
    }
}

/// Largest violation of `direction * (Y^{j+1} - Y^j) >= 0` over nodes and consecutive pairs.
pub fn sequence_monotone_violation(solutions: &[SolutionTriple], direction: f64) -> f64 {
    let mut worst = 0.0f64;
    for pair in solutions.windows(2) {
        for k in 0..pair[0].y.num_levels() {
            for (a, b) in pair[0].y.level(k).iter().zip(pair[1].y.level(k)) {
                worst = worst.max(direction * (a - b));
            }
        }
    }
    worst
}

pub(crate) fn gaps_to_last(
    solutions: &[SolutionTriple],
    battery: &[NormParams],
) -> Result<(Vec<(f64, Vec<f64>)>, Vec<(f64, Vec<f64>)>)> {
    let last = solutions.last().ok_or_else(|| {
        LabError::InvalidParameter("schedule must contain at least one value".into())
    })?;
    let mut yg = Vec::new();
    let mut zg = Vec::new();
    for p in battery {
        let mut ys = Vec::with_capacity(solutions.len());
        let mut zs = Vec::with_capacity(solutions.len());
        for s in solutions {
            ys.push(sp_norm(&s.y.sub(&last.y)?, *p));
            zs.push(mp_norm(&s.z.sub(&last.z)?, *p));
        }
        yg.push((p.p(), ys));
        zg.push((p.p(), zs));
    }
    Ok((yg, zg))
}

pub(crate) fn validate_schedule(schedule: &[f64]) -> Result<()> {
    if schedule.is_empty() {
        return Err(LabError::InvalidParameter("schedule must be nonempty".into()));
    }
    if schedule.windows(2).any(|w| !(w[0] < w[1])) || schedule.iter().any(|x| !x.is_finite()) {
        return Err(LabError::InvalidParameter(
            "schedule must be finite and strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Solves along an approximating family; `reflected` selects the projection solver.
pub fn solve_sequence(
    sc: &ScenarioConfig,
    kind: SequenceKind,
    schedule: &[f64],
    offset: KappaOffset,
    reflected: bool,
    tol: f64,
) -> Result<ApproximationReport> {
    validate_schedule(schedule)?;
    let generators: Vec<GeneratorSpec> = schedule
        .iter()
        .map(|&n| approximating_generator(&sc.generator, kind, n, offset))
        .collect::<Result<_>>()?;
    let solutions: Vec<SolutionTriple> = generators
        .par_iter()
        .map(|g| match (reflected, sc.barrier()) {
            (true, Some(l)) => backward_sweep(sc, g, Reflection::Project(l)),
            (true, None) => Err(LabError::InvalidParameter(
                "reflected sequence needs a barrier".into(),
            )),
            (false, _) => backward_sweep(sc, g, Reflection::None),
        })
        .collect::<Result<_>>()?;
    let monotone_violation = sequence_monotone_violation(&solutions, kind.direction());
    let (y_gaps, z_gaps) = gaps_to_last(&solutions, &sc.norm_battery())?;
    Ok(ApproximationReport {
        kind,
        schedule: schedule.to_vec(),
        solutions,
        monotone_violation,
        monotone: monotone_violation <= tol,
        y_gaps,
        z_gaps,
    })
}

/// Non-reflected approximation along `kind` with the default `kappa` offsets.
pub fn solve_bsde_sequence(
    sc: &ScenarioConfig,
    kind: SequenceKind,
    schedule: &[f64],
) -> Result<ApproximationReport> {
    if sc.barrier.is_some() {
        return Err(LabError::InvalidParameter(
            "scenario has a barrier; use the reflected solvers".into(),
        ));
    }
    solve_sequence(sc, kind, schedule, KappaOffset::default_for(kind), false, 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::library::{abs_z, constant, cubic, linear, zero};

    fn walk_terminal(tree: &TreeModel, f: impl Fn(f64) -> f64) -> Vec<f64> {
        tree.brownian().level(tree.depth()).iter().map(|&b| f(b)).collect()
    }

    #[test]
    fn martingale_case() {
        let tree = TreeModel::new(1.0, 6, 1).unwrap();
        let xi = walk_terminal(&tree, |b| b * b + b);
        let sc = ScenarioConfig::new(tree, xi.clone(), zero(1)).unwrap();
        let sol = solve_bsde(&sc).unwrap();
        assert!((sol.y0() - tree.expectation(&xi)).abs() < 1e-12);
        assert_eq!(sol.k.max_over_nodes(f64::abs), 0.0);
        assert!(backward_residual(&sol, &sc) < 1e-12);
    }

    #[test]
    fn constant_driver_shifts_by_ct() {
        let tree = TreeModel::new(2.0, 5, 1).unwrap();
        let xi = walk_terminal(&tree, |b| b.abs());
        let sc = ScenarioConfig::new(tree, xi.clone(), constant(0.7, 1)).unwrap();
        let sol = solve_bsde(&sc).unwrap();
        assert!((sol.y0() - tree.expectation(&xi) - 1.4).abs() < 1e-12);
    }

    #[test]
    fn linear_driver_matches_compound_factor() {
        let a = 0.5;
        for n in [4, 8] {
            let tree = TreeModel::new(1.0, n, 1).unwrap();
            let xi = walk_terminal(&tree, |b| b * b);
            let sc = ScenarioConfig::new(tree, xi, linear(a, 0.0, 0.0, 1)).unwrap();
            let sol = solve_bsde(&sc).unwrap();
            let exact = (1.0 + a * tree.step()).powi(n as i32);
            assert!((sol.y0() - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn fixed_point_scheme_is_implicit_euler() {
        let a = 0.5;
        let tree = TreeModel::new(1.0, 8, 1).unwrap();
        let xi = walk_terminal(&tree, |b| b * b);
        let sc = ScenarioConfig::new(tree, xi, linear(a, 0.0, 0.0, 1))
            .unwrap()
            .with_scheme(SchemeConfig::fixed_point());
        let sol = solve_bsde(&sc).unwrap();
        let exact = (1.0 - a * tree.step()).powi(-8);
        assert!((sol.y0() - exact).abs() < 1e-10);
        assert!(backward_residual(&sol, &sc) < 1e-10);
    }

    #[test]
    fn fixed_point_divergence_is_reported() {
        let tree = TreeModel::new(1.0, 2, 1).unwrap();
        let xi = walk_terminal(&tree, |b| b);
        let scheme = SchemeConfig {
            max_iter: 2,
            ..SchemeConfig::fixed_point()
        };
        let sc = ScenarioConfig::new(tree, xi, linear(3.0, 0.0, 0.0, 1))
            .unwrap()
            .with_scheme(scheme);
        assert!(matches!(
            solve_bsde(&sc),
            Err(LabError::FixedPointDivergence { .. })
        ));
    }

    #[test]
    fn cubic_overflow_is_reported() {
        let tree = TreeModel::new(10.0, 5, 1).unwrap();
        let xi = walk_terminal(&tree, |b| 1e6 * b);
        let sc = ScenarioConfig::new(tree, xi, cubic(1.0, 0.0, 0.0, 1).unwrap()).unwrap();
        assert!(matches!(solve_bsde(&sc), Err(LabError::NonFiniteValue { .. })));
    }

    #[test]
    fn predictable_forcing() {
        let tree = TreeModel::new(1.0, 3, 1).unwrap();
        let inc = AdaptedProcess::from_fn(tree, 3, |n| 0.1 * (n.level + 1) as f64);
        let forcing = Forcing::from_increments(inc).unwrap();
        let path = forcing.path();
        assert!((path.value(3, 5) - 0.6).abs() < 1e-15);
        let back = Forcing::from_path(&path).unwrap();
        let diff = back.increments().sub(forcing.increments()).unwrap();
        assert!(diff.max_over_nodes(f64::abs) < 1e-15);
        let xi = vec![0.0; 8];
        let sc = ScenarioConfig::new(tree, xi, zero(1))
            .unwrap()
            .with_forcing(forcing)
            .unwrap();
        let sol = solve_bsde(&sc).unwrap();
        assert!((sol.y0() - 0.6).abs() < 1e-15);
        let b = tree.brownian().map(|x| x);
        assert!(Forcing::from_path(&b).is_err());
    }

    #[test]
    fn convolution_sequence_fixes_lipschitz_driver() {
        let tree = TreeModel::new(1.0, 6, 1).unwrap();
        let xi = walk_terminal(&tree, |b| b.sin());
        let sc = ScenarioConfig::new(tree, xi.clone(), abs_z(0.8, 0.1, 0.0, 1)).unwrap();
        let rep = solve_bsde_sequence(&sc, SequenceKind::InfConv, &[1.0, 2.0, 4.0]).unwrap();
        let direct = solve_bsde(&sc).unwrap();
        for s in &rep.solutions {
            let gap = s.y.sub(&direct.y).unwrap().max_over_nodes(f64::abs);
            assert!(gap < 1e-9, "gap {gap}");
        }
        assert!(rep.monotone);
    }

    #[test]
    fn inactive_truncation_is_constant() {
        let tree = TreeModel::new(1.0, 5, 1).unwrap();
        let xi = walk_terminal(&tree, |b| b.cos());
        let g = crate::generators::library::h2w_zsin(0.0, 0.3, 1.0, crate::generators::Coefficient::Constant(0.0), 1).unwrap();
        let sc = ScenarioConfig::new(tree, xi, g).unwrap();
        let rep = solve_bsde_sequence(&sc, SequenceKind::TruncBelow, &[50.0, 60.0]).unwrap();
        assert_eq!(rep.solutions[0].y, rep.solutions[1].y);
        assert_eq!(rep.monotone_violation, 0.0);
    }

    #[test]
    fn barrier_must_be_dominated() {
        let tree = TreeModel::new(1.0, 2, 1).unwrap();
        let xi = vec![0.0, 0.0, 0.0, 0.0];
        let l = AdaptedProcess::constant(tree, 3, 0.5);
        let sc = ScenarioConfig::new(tree, xi, zero(1)).unwrap();
        assert!(matches!(sc.with_barrier(l), Err(LabError::BarrierViolation { leaf: 0, .. })));
    }
}
