//! Exact finite probability model: a full, non-recombining 2^d-ary tree of
//! scaled random-walk increments, with adapted processes on its nodes.
//!
//! Node addressing: a level-`k` node is an integer in `0..2^(d k)` whose bits
//! record the sign history, earliest step in the highest bits. Child `c` of
//! node `i` is `(i << d) | c`; bit `j` of `c` set means coordinate `j` moved
//! by `+sqrt(h)`, clear means `-sqrt(h)`. All leaves carry weight `2^(-d N)`.

use crate::error::{LabError, Result};

/// Default cap on `d * N`. Overridden by the `RBSDE_SIZE_LIMIT` environment variable.
pub const DEFAULT_SIZE_LIMIT: usize = 22;

/// Reads the size limit from `RBSDE_SIZE_LIMIT`, falling back to [`DEFAULT_SIZE_LIMIT`].
pub fn size_limit() -> usize {
    std::env::var("RBSDE_SIZE_LIMIT")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .unwrap_or(DEFAULT_SIZE_LIMIT)
}

/// A node of the tree: its level (time index) and its index within the level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Node {
    pub level: usize,
    pub index: usize,
}

impl Node {
    pub fn new(level: usize, index: usize) -> Self {
        Self { level, index }
    }

    pub fn root() -> Self {
        Self { level: 0, index: 0 }
    }
}

/// Depth-`N` binary (per coordinate) tree approximating `d`-dimensional Brownian motion on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeModel {
    horizon: f64,
    depth: usize,
    dim: usize,
    step: f64,
    sqrt_step: f64,
}

impl TreeModel {
    /// Builds a tree, enforcing the size limit from [`size_limit`].
    pub fn new(horizon: f64, depth: usize, dim: usize) -> Result<Self> {
        Self::with_limit(horizon, depth, dim, size_limit())
    }

    pub fn with_limit(horizon: f64, depth: usize, dim: usize, limit: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(LabError::InvalidParameter(format!(
                "horizon T must be positive, got {horizon}"
            )));
        }
        if depth == 0 {
            return Err(LabError::InvalidParameter("depth N must be at least 1".into()));
        }
        if dim == 0 {
            return Err(LabError::InvalidParameter("dimension d must be at least 1".into()));
        }
        let requested = dim.saturating_mul(depth);
        // usize shifts beyond 62 bits are meaningless regardless of the configured limit
        if requested > limit || requested > 40 {
            return Err(LabError::SizeLimit { requested, limit });
        }
        let step = horizon / depth as f64;
        Ok(Self {
            horizon,
            depth,
            dim,
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

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Time step `h = T / N`.
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn sqrt_step(&self) -> f64 {
        self.sqrt_step
    }

    /// Grid time `t_k`.
    pub fn time(&self, level: usize) -> f64 {
        self.horizon * level as f64 / self.depth as f64
    }

    /// Number of children per node, `2^d`.
    pub fn branching(&self) -> usize {
        1 << self.dim
    }

    pub fn nodes(&self, level: usize) -> usize {
        1 << (self.dim * level)
    }

    pub fn leaves(&self) -> usize {
        self.nodes(self.depth)
    }

    pub fn leaf_weight(&self) -> f64 {
        1.0 / self.leaves() as f64
    }

    pub fn child(&self, index: usize, branch: usize) -> usize {
        (index << self.dim) | branch
    }

    pub fn parent(&self, index: usize) -> usize {
        index >> self.dim
    }

    /// Index at `level` of the ancestor of `leaf`.
    pub fn ancestor(&self, leaf: usize, level: usize) -> usize {
        leaf >> (self.dim * (self.depth - level))
    }

    /// Sign (`+1` or `-1`) of coordinate `coord` along branch `branch`.
    pub fn sign(&self, branch: usize, coord: usize) -> f64 {
        if (branch >> coord) & 1 == 1 {
            1.0
        } else {
            -1.0
        }
    }

    /// Increment `Delta B` of coordinate `coord` along branch `branch`.
    pub fn increment(&self, branch: usize, coord: usize) -> f64 {
        self.sign(branch, coord) * self.sqrt_step
    }

    pub fn same_shape(&self, other: &TreeModel) -> bool {
        self.depth == other.depth && self.dim == other.dim && self.horizon == other.horizon
    }

    /// The driving walk `B` as a `d`-vector process on levels `0..=N`.
    pub fn brownian(&self) -> AdaptedProcess {
        let d = self.dim;
        let mut levels = Vec::with_capacity(self.depth + 1);
        levels.push(vec![0.0; d]);
        for k in 0..self.depth {
            let prev = &levels[k];
            let mut next = vec![0.0; self.nodes(k + 1) * d];
            for i in 0..self.nodes(k) {
                for c in 0..self.branching() {
                    let child = self.child(i, c);
                    for j in 0..d {
                        next[child * d + j] = prev[i * d + j] + self.increment(c, j);
                    }
                }
            }
            levels.push(next);
        }
        AdaptedProcess {
            tree: *self,
            dim: d,
            levels,
        }
    }

    /// Equal-weight average over the `2^d` children of each level-`level` node.
    ///
    /// `values` holds one scalar per level-`(level + 1)` node.
    pub fn conditional_expectation(&self, values: &[f64], level: usize) -> Result<Vec<f64>> {
        if level >= self.depth {
            return Err(LabError::InvalidParameter(format!(
                "cannot condition level {} values onto level {level}",
                level + 1
            )));
        }
        let expected = self.nodes(level + 1);
        if values.len() != expected {
            return Err(LabError::LevelMismatch {
                expected,
                got: values.len(),
            });
        }
        let b = self.branching();
        let inv = 1.0 / b as f64;
        Ok(values
            .chunks_exact(b)
            .map(|children| children.iter().sum::<f64>() * inv)
            .collect())
    }

    /// Discrete martingale integrand `E[X_{k+1} Delta B_{k+1} | F_k] / h` per coordinate.
    ///
    /// Returns `nodes(level) * d` values, node-major.
    pub fn martingale_integrand(&self, next: &[f64], level: usize) -> Result<Vec<f64>> {
        let expected = self.nodes(level + 1);
        if level >= self.depth || next.len() != expected {
            return Err(LabError::LevelMismatch {
                expected,
                got: next.len(),
            });
        }
        let d = self.dim;
        let b = self.branching();
        let mut out = vec![0.0; self.nodes(level) * d];
        for (i, children) in next.chunks_exact(b).enumerate() {
            integrand_into(self, children, &mut out[i * d..(i + 1) * d]);
        }
        Ok(out)
    }

    /// Conditional expectation of a leaf functional onto every level-`level` node.
    pub fn condition_leaves(&self, leaf_values: &[f64], level: usize) -> Result<Vec<f64>> {
        if leaf_values.len() != self.leaves() {
            return Err(LabError::LevelMismatch {
                expected: self.leaves(),
                got: leaf_values.len(),
            });
        }
        if level > self.depth {
            return Err(LabError::InvalidParameter(format!("level {level} beyond depth")));
        }
        let block = 1usize << (self.dim * (self.depth - level));
        let inv = 1.0 / block as f64;
        Ok(leaf_values
            .chunks_exact(block)
            .map(|chunk| chunk.iter().sum::<f64>() * inv)
            .collect())
    }

    /// Expectation of a leaf functional (left-to-right summation).
    pub fn expectation(&self, leaf_values: &[f64]) -> f64 {
        leaf_values.iter().sum::<f64>() * self.leaf_weight()
    }
}

/// Shared kernel for the integrand of one node given its children's values.
pub(crate) fn integrand_into(tree: &TreeModel, children: &[f64], out: &mut [f64]) {
    let b = tree.branching() as f64;
    for (j, slot) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (c, v) in children.iter().enumerate() {
            acc += v * tree.sign(c, j);
        }
        *slot = acc / (b * tree.sqrt_step());
    }
}

/// Lp exponent for the process norms; restricted to `p > 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormParams {
    p: f64,
}

impl NormParams {
    pub fn new(p: f64) -> Result<Self> {
        if !(p.is_finite() && p > 1.0) {
            return Err(LabError::InvalidParameter(format!(
                "norm exponent must satisfy p > 1, got {p}"
            )));
        }
        Ok(Self { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Fixed reporting battery `p in {1.5, 2, 3}`.
    pub fn battery() -> [NormParams; 3] {
        [
            NormParams { p: 1.5 },
            NormParams { p: 2.0 },
            NormParams { p: 3.0 },
        ]
    }
}

/// A real- or vector-valued process indexed by `(level, node)`.
///
/// `levels[k]` holds `nodes(k) * dim` values, node-major. Processes such as
/// `Z` or driver samples live on levels `0..N`; `Y`, `K`, `L`, `V` on `0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedProcess {
    tree: TreeModel,
    dim: usize,
    levels: Vec<Vec<f64>>,
}

impl AdaptedProcess {
    pub fn zeros(tree: TreeModel, num_levels: usize, dim: usize) -> Self {
        let levels = (0..num_levels)
            .map(|k| vec![0.0; tree.nodes(k) * dim])
            .collect();
        Self { tree, dim, levels }
    }

    pub fn constant(tree: TreeModel, num_levels: usize, value: f64) -> Self {
        let levels = (0..num_levels).map(|k| vec![value; tree.nodes(k)]).collect();
        Self {
            tree,
            dim: 1,
            levels,
        }
    }

    /// Scalar process from a node function.
    pub fn from_fn(tree: TreeModel, num_levels: usize, f: impl Fn(Node) -> f64) -> Self {
        let levels = (0..num_levels)
            .map(|k| (0..tree.nodes(k)).map(|i| f(Node::new(k, i))).collect())
            .collect();
        Self {
            tree,
            dim: 1,
            levels,
        }
    }

    pub fn from_levels(tree: TreeModel, dim: usize, levels: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 || levels.is_empty() || levels.len() > tree.depth() + 1 {
            return Err(LabError::InvalidParameter(format!(
                "process needs 1..={} levels and positive dimension",
                tree.depth() + 1
            )));
        }
        for (k, values) in levels.iter().enumerate() {
            let expected = tree.nodes(k) * dim;
            if values.len() != expected {
                return Err(LabError::LevelMismatch {
                    expected,
                    got: values.len(),
                });
            }
        }
        Ok(Self { tree, dim, levels })
    }

    /// Scalar process on `0..=N` built from leaf values by conditioning (`E[xi | F_k]`).
    pub fn martingale_of(tree: TreeModel, leaf_values: &[f64]) -> Result<Self> {
        let mut levels = vec![Vec::new(); tree.depth() + 1];
        if leaf_values.len() != tree.leaves() {
            return Err(LabError::LevelMismatch {
                expected: tree.leaves(),
                got: leaf_values.len(),
            });
        }
        levels[tree.depth()] = leaf_values.to_vec();
        for k in (0..tree.depth()).rev() {
            levels[k] = tree.conditional_expectation(&levels[k + 1], k)?;
        }
        Ok(Self {
            tree,
            dim: 1,
            levels,
        })
    }

    pub fn tree(&self) -> &TreeModel {
        &self.tree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, k: usize) -> &[f64] {
        &self.levels[k]
    }

    pub fn level_mut(&mut self, k: usize) -> &mut Vec<f64> {
        &mut self.levels[k]
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    /// First component at a node.
    pub fn value(&self, k: usize, index: usize) -> f64 {
        self.levels[k][index * self.dim]
    }

    pub fn at(&self, node: Node) -> f64 {
        self.value(node.level, node.index)
    }

    pub fn vector(&self, k: usize, index: usize) -> &[f64] {
        &self.levels[k][index * self.dim..(index + 1) * self.dim]
    }

    /// Euclidean magnitude at a node.
    pub fn magnitude(&self, k: usize, index: usize) -> f64 {
        let v = self.vector(k, index);
        if v.len() == 1 {
            v[0].abs()
        } else {
            v.iter().map(|x| x * x).sum::<f64>().sqrt()
        }
    }

    pub fn terminal(&self) -> &[f64] {
        &self.levels[self.levels.len() - 1]
    }

    pub fn is_full(&self) -> bool {
        self.levels.len() == self.tree.depth() + 1
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            tree: self.tree,
            dim: self.dim,
            levels: self
                .levels
                .iter()
                .map(|lv| lv.iter().map(|&x| f(x)).collect())
                .collect(),
        }
    }

    /// Pointwise combination; both processes must share tree, dimension and level count.
    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if !self.tree.same_shape(&other.tree) {
            return Err(LabError::TreeMismatch);
        }
        if self.dim != other.dim || self.levels.len() != other.levels.len() {
            return Err(LabError::LevelMismatch {
                expected: self.levels.len(),
                got: other.levels.len(),
            });
        }
        let levels = self
            .levels
            .iter()
            .zip(&other.levels)
            .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect())
            .collect();
        Ok(Self {
            tree: self.tree,
            dim: self.dim,
            levels,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Maximum over all nodes of `f(value)`, scalar processes only.
    pub fn max_over_nodes(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.levels
            .iter()
            .flat_map(|lv| lv.iter())
            .map(|&x| f(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Magnitude along the path of `leaf` at every stored level.
    pub fn path_magnitudes(&self, leaf: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.levels.len()).map(move |k| self.magnitude(k, self.tree.ancestor(leaf, k)))
    }
}

/// Discrete stochastic integral `M_k = sum_{j<k} Z_j . Delta B_{j+1}`, `M_0 = 0`.
pub fn stochastic_integral(z: &AdaptedProcess) -> Result<AdaptedProcess> {
    let tree = *z.tree();
    let d = tree.dim();
    if z.dim() != d {
        return Err(LabError::InvalidParameter(format!(
            "integrand dimension {} does not match tree dimension {d}",
            z.dim()
        )));
    }
    if z.num_levels() < tree.depth() {
        return Err(LabError::LevelMismatch {
            expected: tree.depth(),
            got: z.num_levels(),
        });
    }
    let mut levels = Vec::with_capacity(tree.depth() + 1);
    levels.push(vec![0.0]);
    for k in 0..tree.depth() {
        let mut next = vec![0.0; tree.nodes(k + 1)];
        for i in 0..tree.nodes(k) {
            let zi = z.vector(k, i);
            for c in 0..tree.branching() {
                let inc: f64 = (0..d).map(|j| zi[j] * tree.increment(c, j)).sum();
                next[tree.child(i, c)] = levels[k][i] + inc;
            }
        }
        levels.push(next);
    }
    AdaptedProcess::from_levels(tree, 1, levels)
}

/// Martingale representation of a leaf function: `(Y, Z)` with `Y_k = E[xi | F_k]`
/// and `Z_k` the discrete integrand, so that `Y_{k+1} = Y_k + Z_k Delta B_{k+1}` for `d = 1`.
pub fn martingale_representation(
    tree: TreeModel,
    xi: &[f64],
) -> Result<(AdaptedProcess, AdaptedProcess)> {
    let y = AdaptedProcess::martingale_of(tree, xi)?;
    let mut zl = Vec::with_capacity(tree.depth());
    for k in 0..tree.depth() {
        zl.push(tree.martingale_integrand(y.level(k + 1), k)?);
    }
    let z = AdaptedProcess::from_levels(tree, tree.dim(), zl)?;
    Ok((y, z))
}

fn lp(mean: f64, p: NormParams) -> f64 {
    mean.powf(1.0 / p.p())
}

/// `(E[sup_k |Y_k|^p])^{1/p}` over the stored levels.
pub fn sp_norm(y: &AdaptedProcess, p: NormParams) -> f64 {
    let tree = y.tree();
    let sum: f64 = (0..tree.leaves())
        .map(|leaf| y.path_magnitudes(leaf).fold(0.0, f64::max).powf(p.p()))
        .sum();
    lp(sum * tree.leaf_weight(), p)
}

/// `(E[(sum_{k<N} |Z_k|^2 h)^{p/2}])^{1/p}`.
pub fn mp_norm(z: &AdaptedProcess, p: NormParams) -> f64 {
    let tree = z.tree();
    let h = tree.step();
    let levels = z.num_levels().min(tree.depth());
    let sum: f64 = (0..tree.leaves())
        .map(|leaf| {
            let qv: f64 = (0..levels)
                .map(|k| z.magnitude(k, tree.ancestor(leaf, k)).powi(2) * h)
                .sum();
            qv.powf(p.p() / 2.0)
        })
        .sum();
    lp(sum * tree.leaf_weight(), p)
}

/// `(E[(sum_{k<N} |X_k| h)^p])^{1/p}`.
pub fn hp_norm(x: &AdaptedProcess, p: NormParams) -> f64 {
    let tree = x.tree();
    let h = tree.step();
    let levels = x.num_levels().min(tree.depth());
    let sum: f64 = (0..tree.leaves())
        .map(|leaf| {
            let integral: f64 = (0..levels)
                .map(|k| x.magnitude(k, tree.ancestor(leaf, k)) * h)
                .sum();
            integral.powf(p.p())
        })
        .sum();
    lp(sum * tree.leaf_weight(), p)
}

/// Total variation `|V|_T = sum_k |V_{k+1} - V_k|` along one path.
pub fn path_variation(v: &AdaptedProcess, leaf: usize) -> f64 {
    let tree = v.tree();
    (0..v.num_levels().saturating_sub(1))
        .map(|k| (v.value(k + 1, tree.ancestor(leaf, k + 1)) - v.value(k, tree.ancestor(leaf, k))).abs())
        .sum()
}

/// `(E[|V|_T^p])^{1/p}`.
pub fn variation_norm(v: &AdaptedProcess, p: NormParams) -> f64 {
    let tree = v.tree();
    let sum: f64 = (0..tree.leaves())
        .map(|leaf| path_variation(v, leaf).powf(p.p()))
        .sum();
    lp(sum * tree.leaf_weight(), p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(t: f64, n: usize) -> TreeModel {
        TreeModel::new(t, n, 1).unwrap()
    }

    #[test]
    fn one_step_walk() {
        let t = tree(1.0, 1);
        let b = t.brownian();
        assert_eq!(t.leaves(), 2);
        assert_eq!(b.level(1), &[-1.0, 1.0]);
        assert_eq!(t.leaf_weight(), 0.5);
    }

    #[test]
    fn two_step_walk_terminal_values() {
        let t = tree(1.0, 2);
        let b = t.brownian();
        let s = 0.5f64.sqrt();
        let mut leaves = b.level(2).to_vec();
        leaves.sort_by(f64::total_cmp);
        let expected = [-2.0 * s, 0.0, 0.0, 2.0 * s];
        for (a, e) in leaves.iter().zip(expected) {
            assert!((a - e).abs() < 1e-15);
        }
        assert!((leaves[3] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn second_moment_of_terminal_walk() {
        let t = tree(2.0, 10);
        let b = t.brownian();
        let sq: Vec<f64> = b.level(10).iter().map(|x| x * x).collect();
        assert!((t.expectation(&sq) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(
            TreeModel::new(0.0, 3, 1),
            Err(LabError::InvalidParameter(_))
        ));
        assert!(matches!(
            TreeModel::with_limit(1.0, 12, 2, 22),
            Err(LabError::SizeLimit { requested: 24, limit: 22 })
        ));
        assert!(TreeModel::with_limit(1.0, 12, 2, 24).is_ok());
        assert!(NormParams::new(1.0).is_err());
        assert!(NormParams::new(0.5).is_err());
    }

    #[test]
    fn averaging_children() {
        let t = tree(1.0, 1);
        assert_eq!(t.conditional_expectation(&[3.0, 1.0], 0).unwrap(), vec![2.0]);
        assert!(matches!(
            t.conditional_expectation(&[1.0, 2.0, 3.0], 0),
            Err(LabError::LevelMismatch { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn walk_is_a_martingale() {
        let t = tree(1.0, 6);
        let b = t.brownian();
        for k in 0..6 {
            let cond = t.conditional_expectation(b.level(k + 1), k).unwrap();
            for (c, v) in cond.iter().zip(b.level(k)) {
                assert!((c - v).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn iterated_conditioning_of_squared_walk() {
        let t = tree(1.5, 8);
        let b = t.brownian();
        let sq: Vec<f64> = b.level(8).iter().map(|x| x * x).collect();
        let y = AdaptedProcess::martingale_of(t, &sq).unwrap();
        assert!((y.value(0, 0) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn stochastic_integral_special_cases() {
        let t = tree(1.0, 5);
        let ones = AdaptedProcess::constant(t, 5, 1.0);
        let m = stochastic_integral(&ones).unwrap();
        let b = t.brownian();
        for (a, e) in m.level(5).iter().zip(b.level(5)) {
            assert!((a - e).abs() < 1e-14);
        }
        let sq: Vec<f64> = m.level(5).iter().map(|x| x * x).collect();
        assert!((t.expectation(&sq) - 1.0).abs() < 1e-12);

        let zero = AdaptedProcess::zeros(t, 5, 1);
        let m0 = stochastic_integral(&zero).unwrap();
        assert_eq!(m0.max_over_nodes(f64::abs), 0.0);
    }

    #[test]
    fn integral_of_walk_on_two_steps() {
        // Z_k = B_k: E[M_2^2] = h (E[B_0^2] + E[B_1^2]) = h * h
        let t = tree(1.0, 2);
        let b = t.brownian();
        let z = AdaptedProcess::from_levels(t, 1, vec![b.level(0).to_vec(), b.level(1).to_vec()])
            .unwrap();
        let m = stochastic_integral(&z).unwrap();
        let sq: Vec<f64> = m.level(2).iter().map(|x| x * x).collect();
        // enumerate the four paths by hand: M_2 = B_1 * (B_2 - B_1)
        let s = 0.5f64.sqrt();
        let paths = [(-s, -s), (-s, s), (s, -s), (s, s)];
        let brute: f64 = paths.iter().map(|(a, b)| (a * b).powi(2)).sum::<f64>() / 4.0;
        assert!((t.expectation(&sq) - brute).abs() < 1e-15);
        assert!((brute - 0.25).abs() < 1e-15);
    }

    #[test]
    fn norms_on_simple_processes() {
        let t = tree(1.0, 1);
        let p2 = NormParams::new(2.0).unwrap();
        let c = AdaptedProcess::constant(t, 2, -3.0);
        assert!((sp_norm(&c, p2) - 3.0).abs() < 1e-15);
        let b = t.brownian();
        assert!((sp_norm(&b, p2) - 1.0).abs() < 1e-15);

        let t4 = tree(4.0, 8);
        let ones = AdaptedProcess::constant(t4, 8, 1.0);
        assert!((mp_norm(&ones, p2) - 2.0).abs() < 1e-14);
        assert!((hp_norm(&ones, p2) - 4.0).abs() < 1e-14);
        let lin = AdaptedProcess::from_fn(t4, 9, |n| n.level as f64 * 0.5);
        assert!((variation_norm(&lin, p2) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn multi_dimensional_moments() {
        let t = TreeModel::new(1.0, 3, 2).unwrap();
        let b = t.brownian();
        for k in 0..3 {
            for i in 0..t.nodes(k) {
                for j in 0..2 {
                    let mut mean = 0.0;
                    let mut cross = [0.0; 2];
                    for c in 0..t.branching() {
                        let child = t.child(i, c);
                        let inc = b.vector(k + 1, child)[j] - b.vector(k, i)[j];
                        mean += inc;
                        for (jj, slot) in cross.iter_mut().enumerate() {
                            let inc2 = b.vector(k + 1, child)[jj] - b.vector(k, i)[jj];
                            *slot += inc * inc2;
                        }
                    }
                    assert!(mean.abs() < 1e-14);
                    let h = t.step();
                    assert!((cross[j] / 4.0 - h).abs() < 1e-14);
                    assert!((cross[1 - j] / 4.0).abs() < 1e-14);
                }
            }
        }
        let w: f64 = (0..t.leaves()).map(|_| t.leaf_weight()).sum();
        assert!((w - 1.0).abs() < 1e-15);
    }
}
