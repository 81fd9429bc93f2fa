//! Recombining binomial lattice for Markovian one-dimensional scenarios.
//!
//! When the terminal value is a function of `B_T`, the barrier a function of `(t, B_t)`
//! and the driver ignores the node, the tree solution at a node depends only on its
//! number of up-moves. The lattice keeps `k + 1` nodes at level `k`, so depths far
//! beyond the tree size limit stay cheap.

use crate::bsde::{SchemeConfig, SchemeKind};
use crate::error::{LabError, Result};
use crate::generators::GeneratorSpec;
use crate::tree::Node;

/// Largest supported depth.
pub const MAX_DEPTH: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    horizon: f64,
    depth: usize,
    step: f64,
    sqrt_step: f64,
}

impl Lattice {
    pub fn new(horizon: f64, depth: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(LabError::InvalidParameter(format!("horizon must be positive, got {horizon}")));
        }
        if depth == 0 || depth > MAX_DEPTH {
            return Err(LabError::InvalidParameter(format!(
                "lattice depth must lie in 1..={MAX_DEPTH}, got {depth}"
            )));
        }
        let step = horizon / depth as f64;
        Ok(Self {
            horizon,
            depth,
            step,
            sqrt_step: step.sqrt(),
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    /// `B` at level `k` after `j` up-moves.
    pub fn brownian(&self, k: usize, j: usize) -> f64 {
        (2.0 * j as f64 - k as f64) * self.sqrt_step
    }
}

/// `y[k][j]` and `z[k][j]` indexed by level and number of up-moves.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeSolution {
    pub y: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub dk: Vec<Vec<f64>>,
}

impl LatticeSolution {
    pub fn y0(&self) -> f64 {
        self.y[0][0]
    }
}

/// Backward sweep on the lattice with the same scheme as the tree solver.
///
/// With a barrier `L(t, b)` the projection rule `Y = max(c, L)` is applied.
/// Drivers with node-dependent coefficients are rejected.
pub fn solve_bsde_lattice(
    lattice: &Lattice,
    terminal: impl Fn(f64) -> f64,
    g: &GeneratorSpec,
    scheme: &SchemeConfig,
    barrier: Option<&dyn Fn(f64, f64) -> f64>,
) -> Result<LatticeSolution> {
    if g.dim != 1 {
        return Err(LabError::InvalidParameter("lattice solver needs d = 1".into()));
    }
    if g.tree.is_some() {
        return Err(LabError::InvalidParameter(
            "lattice solver needs a node-independent driver".into(),
        ));
    }
    let n = lattice.depth;
    let h = lattice.step;
    let last: Vec<f64> = (0..=n).map(|j| terminal(lattice.brownian(n, j))).collect();
    if let Some(j) = last.iter().position(|v| !v.is_finite()) {
        return Err(LabError::NonFiniteValue { level: n, node: j });
    }
    if let Some(l) = barrier {
        for (j, &x) in last.iter().enumerate() {
            let lv = l(lattice.horizon, lattice.brownian(n, j));
            if x < lv {
                return Err(LabError::BarrierViolation { leaf: j, xi: x, barrier: lv });
            }
        }
    }
    let mut y = vec![Vec::new(); n + 1];
    let mut z = vec![Vec::new(); n];
    let mut dk = vec![Vec::new(); n];
    y[n] = last;
    for k in (0..n).rev() {
        let t = lattice.time(k);
        let mut yl = Vec::with_capacity(k + 1);
        let mut zl = Vec::with_capacity(k + 1);
        let mut dl = Vec::with_capacity(k + 1);
        for j in 0..=k {
            let (down, up) = (y[k + 1][j], y[k + 1][j + 1]);
            let ytilde = (down + up) / 2.0;
            let zj = (-down + up) / (2.0 * lattice.sqrt_step);
            let zv = [zj];
            let node = Node::new(k, j);
            let lk = barrier.map(|l| l(t, lattice.brownian(k, j)));
            let reflect = |c: f64| match lk {
                Some(l) if c < l => (l, l - c),
                _ => (c, 0.0),
            };
            let g_at = match scheme.kind {
                SchemeKind::Explicit => g.value(t, ytilde, &zv, node),
                SchemeKind::FixedPoint => {
                    let map = |v: f64| reflect(ytilde + h * g.value(t, v, &zv, node)).0;
                    let w = scheme.damping;
                    let mut v = map(ytilde);
                    let mut converged = false;
                    let mut residual = f64::INFINITY;
                    for _ in 0..scheme.max_iter {
                        let next = (1.0 - w) * v + w * map(v);
                        residual = (next - v).abs();
                        v = next;
                        if !v.is_finite() {
                            return Err(LabError::NonFiniteValue { level: k, node: j });
                        }
                        if residual <= scheme.tol * v.abs().max(1.0) {
                            converged = true;
                            break;
                        }
                    }
                    if !converged {
                        return Err(LabError::FixedPointDivergence { level: k, node: j, residual });
                    }
                    g.value(t, v, &zv, node)
                }
            };
            let (yv, dkv) = reflect(ytilde + h * g_at);
            if !(yv.is_finite() && zj.is_finite()) {
                return Err(LabError::NonFiniteValue { level: k, node: j });
            }
            yl.push(yv);
            zl.push(zj);
            dl.push(dkv);
        }
        y[k] = yl;
        z[k] = zl;
        dk[k] = dl;
    }
    Ok(LatticeSolution { y, z, dk })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bsde::{solve_bsde, ScenarioConfig};
    use crate::generators::library::{abs_z, linear};
    use crate::rbsde::solve_reflected_projection;
    use crate::tree::{AdaptedProcess, TreeModel};

    fn up_moves(k: usize, i: usize) -> usize {
        (0..k).filter(|b| (i >> b) & 1 == 1).count()
    }

    #[test]
    fn matches_tree_solver() {
        for scheme in [SchemeConfig::explicit(), SchemeConfig::fixed_point()] {
            let tree = TreeModel::new(1.0, 8, 1).unwrap();
            let lat = Lattice::new(1.0, 8).unwrap();
            let g = abs_z(0.4, 0.3, 0.1, 1);
            let xi: Vec<f64> = tree.brownian().terminal().iter().map(|b| (b * 1.5).sin()).collect();
            let sc = ScenarioConfig::new(tree, xi, g.clone()).unwrap().with_scheme(scheme.clone());
            let ts = solve_bsde(&sc).unwrap();
            let ls = solve_bsde_lattice(&lat, |b| (b * 1.5).sin(), &g, &scheme, None).unwrap();
            for k in 0..=8 {
                for i in 0..tree.nodes(k) {
                    let j = up_moves(k, i);
                    assert!((ts.y.value(k, i) - ls.y[k][j]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn projection_matches_tree() {
        let tree = TreeModel::new(1.0, 7, 1).unwrap();
        let lat = Lattice::new(1.0, 7).unwrap();
        let b = tree.brownian();
        let l = AdaptedProcess::from_fn(tree, 8, |n| (0.2 - b.at(n)).max(0.0));
        let xi = l.terminal().to_vec();
        let g = linear(-0.1, 0.2, 0.05, 1);
        let sc = ScenarioConfig::new(tree, xi, g.clone()).unwrap().with_barrier(l).unwrap();
        let ts = solve_reflected_projection(&sc).unwrap();
        let bar = |_t: f64, x: f64| (0.2 - x).max(0.0);
        let ls = solve_bsde_lattice(&lat, |x| (0.2 - x).max(0.0), &g, &SchemeConfig::explicit(), Some(&bar)).unwrap();
        assert!((ts.y0() - ls.y0()).abs() < 1e-12);
    }

    #[test]
    fn linear_driver_compounds() {
        let lat = Lattice::new(1.0, 64).unwrap();
        let g = linear(0.5, 0.0, 0.0, 1);
        let s = solve_bsde_lattice(&lat, |b| b * b, &g, &SchemeConfig::explicit(), None).unwrap();
        let exact = (1.0 + 0.5 / 64.0f64).powi(64);
        assert!((s.y0() - exact).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Lattice::new(1.0, 0).is_err());
        assert!(Lattice::new(-1.0, 4).is_err());
        let lat = Lattice::new(1.0, 4).unwrap();
        let g = linear(0.0, 0.0, 0.0, 2);
        assert!(solve_bsde_lattice(&lat, |b| b, &g, &SchemeConfig::explicit(), None).is_err());
    }
}
