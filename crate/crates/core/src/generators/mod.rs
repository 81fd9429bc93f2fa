//! Drivers `g(t, y, z)` as evaluable objects carrying their declared moduli,
//! constants and hypothesis set.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{LabError, Result};
use crate::tree::{AdaptedProcess, Node, TreeModel};

pub mod certify;
pub mod library;
pub mod regularize;

pub use certify::{
    certify_declared, certify_hypothesis, check_modulus, CertificationReport, CheckResult,
    ModulusReport, SamplerConfig,
};
pub use library::from_id;
pub use regularize::{
    inf_convolution, inf_convolved, sup_convolution, sup_convolved, truncate_above,
    truncate_below,
};

/// Evaluator signature: `(t, y, z, node) -> g`.
pub type Driver = Arc<dyn Fn(f64, f64, &[f64], Node) -> f64 + Send + Sync>;

/// Scalar function of one nonnegative variable.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Structural assumptions a driver may claim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Hypothesis {
    H1,
    H1s,
    H2,
    H2s,
    H2w,
    H3,
    H3s,
    H4,
    H4s,
    H4w,
    HH,
    A,
    B,
}

impl Hypothesis {
    pub const ALL: [Hypothesis; 13] = [
        Hypothesis::H1,
        Hypothesis::H1s,
        Hypothesis::H2,
        Hypothesis::H2s,
        Hypothesis::H2w,
        Hypothesis::H3,
        Hypothesis::H3s,
        Hypothesis::H4,
        Hypothesis::H4s,
        Hypothesis::H4w,
        Hypothesis::HH,
        Hypothesis::A,
        Hypothesis::B,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Hypothesis::H1 => "H1",
            Hypothesis::H1s => "H1s",
            Hypothesis::H2 => "H2",
            Hypothesis::H2s => "H2s",
            Hypothesis::H2w => "H2w",
            Hypothesis::H3 => "H3",
            Hypothesis::H3s => "H3s",
            Hypothesis::H4 => "H4",
            Hypothesis::H4s => "H4s",
            Hypothesis::H4w => "H4w",
            Hypothesis::HH => "HH",
            Hypothesis::A => "A",
            Hypothesis::B => "B",
        }
    }
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Hypothesis {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Hypothesis::ALL
            .iter()
            .copied()
            .find(|h| h.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| LabError::InvalidParameter(format!("unknown hypothesis `{s}`")))
    }
}

/// Adds every hypothesis implied by the set through the standard implication lattice.
pub fn implied_closure(set: &BTreeSet<Hypothesis>) -> BTreeSet<Hypothesis> {
    use Hypothesis::*;
    let mut out = set.clone();
    loop {
        let before = out.len();
        let has = |h: Hypothesis, s: &BTreeSet<Hypothesis>| s.contains(&h);
        let mut add = Vec::new();
        if has(H1s, &out) {
            add.push(H1);
        }
        if has(H2s, &out) {
            add.push(H2);
        }
        if has(H2, &out) {
            add.push(H2w);
        }
        if has(H3s, &out) {
            add.push(H3);
        }
        if has(H4s, &out) {
            add.push(H4);
        }
        if has(H4, &out) {
            add.push(H4w);
        }
        if has(H2w, &out) && has(H3, &out) {
            add.push(HH);
        }
        if has(HH, &out) {
            add.push(H3);
        }
        if has(H2, &out) && has(H4w, &out) {
            add.push(H4);
        }
        if has(H1, &out) && (has(H2w, &out) || has(HH, &out)) {
            add.push(A);
        }
        out.extend(add);
        if out.len() == before {
            return out;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModulusKind {
    /// Concave one-sided Osgood modulus in `y`.
    Osgood,
    /// Continuity modulus in `z`.
    Continuity,
}

/// A modulus `R_+ -> R_+` with its linear-growth constant `A`.
#[derive(Clone)]
pub struct Modulus {
    pub kind: ModulusKind,
    pub name: String,
    pub growth: f64,
    func: ScalarFn,
}

impl Modulus {
    pub fn new(kind: ModulusKind, name: impl Into<String>, growth: f64, func: ScalarFn) -> Self {
        Self {
            kind,
            name: name.into(),
            growth,
            func,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.func)(x)
    }

    pub fn linear(kind: ModulusKind, slope: f64) -> Self {
        Self::new(kind, format!("{slope}*u"), slope, Arc::new(move |u| slope * u))
    }

    /// `u (1 - ln u)` below 1, then `1`: the classical non-Lipschitz Osgood modulus.
    pub fn osgood_log(scale: f64) -> Self {
        Self::new(
            ModulusKind::Osgood,
            format!("{scale}*u(1-ln u)"),
            scale,
            Arc::new(move |u| scale * osgood_log_fn(u)),
        )
    }

    pub fn zero(kind: ModulusKind) -> Self {
        Self::new(kind, "0", 0.0, Arc::new(|_| 0.0))
    }
}

impl fmt::Debug for Modulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Modulus")
            .field("kind", &self.kind)
            .field("name", &self.name)
            .field("growth", &self.growth)
            .finish()
    }
}

pub fn osgood_log_fn(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u < 1.0 {
        u * (1.0 - u.ln())
    } else {
        1.0
    }
}

/// A nonnegative coefficient process such as `f_t`, either constant or node-indexed.
#[derive(Debug, Clone, PartialEq)]
pub enum Coefficient {
    Constant(f64),
    Process(AdaptedProcess),
}

impl Coefficient {
    pub fn at(&self, node: Node) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Process(p) => {
                let k = node.level.min(p.num_levels() - 1);
                // beyond the stored levels, read the ancestor at the last one
                let index = node.index >> (p.tree().dim() * (node.level - k));
                p.value(k, index)
            }
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        match self {
            Coefficient::Constant(c) => *c >= 0.0,
            Coefficient::Process(p) => p.max_over_nodes(|x| -x) <= 0.0,
        }
    }

    /// Upper bound over all nodes.
    pub fn sup(&self) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Process(p) => p.max_over_nodes(|x| x),
        }
    }

    pub fn plus(&self, c: f64) -> Coefficient {
        match self {
            Coefficient::Constant(x) => Coefficient::Constant(x + c),
            Coefficient::Process(p) => Coefficient::Process(p.map(|x| x + c)),
        }
    }
}

/// Linear bound `f + mu |y| + lambda |z|`, used for assumptions (A) and (B).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearBound {
    pub f: Coefficient,
    pub mu: f64,
    pub lambda: f64,
}

impl LinearBound {
    pub fn new(f: Coefficient, mu: f64, lambda: f64) -> Self {
        Self { f, mu, lambda }
    }

    pub fn eval(&self, node: Node, y: f64, znorm: f64) -> f64 {
        self.f.at(node) + self.mu * y.abs() + self.lambda * znorm
    }
}

/// One-sided growth of `u -> g(y, u)`:
/// `-(offset + mu|y| + below|u|) <= g(y,u) - g(y,0) <= offset + mu|y| + above|u|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZGrowth {
    pub offset: f64,
    pub mu: f64,
    pub below: f64,
    pub above: f64,
}

impl ZGrowth {
    pub fn lipschitz(lambda: f64) -> Self {
        Self {
            offset: 0.0,
            mu: 0.0,
            below: lambda,
            above: lambda,
        }
    }
}

/// A driver together with everything the theorems need to know about it.
#[derive(Clone)]
pub struct GeneratorSpec {
    pub name: String,
    pub dim: usize,
    driver: Driver,
    pub hypotheses: BTreeSet<Hypothesis>,
    pub rho: Option<Modulus>,
    pub phi: Option<Modulus>,
    /// Linear-growth constant `A` of the moduli.
    pub growth_a: f64,
    /// Monotonicity constant of (H1s).
    pub monotone_mu: f64,
    /// Shared `mu` of (H2w) / (H3s) and Lipschitz constant `lambda` of (H2s) / (H2w) / (HH).
    pub mu: f64,
    pub lambda: f64,
    pub f: Coefficient,
    /// Growth field `psi(r)` of (HH).
    pub psi: Option<ScalarFn>,
    pub bar: Option<LinearBound>,
    pub tilde: Option<LinearBound>,
    pub z_growth: ZGrowth,
    /// Tree the node-dependent coefficients live on, if any.
    pub tree: Option<TreeModel>,
}

impl fmt::Debug for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneratorSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("hypotheses", &self.hypotheses)
            .field("rho", &self.rho)
            .field("phi", &self.phi)
            .field("growth_a", &self.growth_a)
            .field("mu", &self.mu)
            .field("lambda", &self.lambda)
            .finish_non_exhaustive()
    }
}

impl GeneratorSpec {
    /// A bare driver with no declared hypotheses and zero constants.
    pub fn new(name: impl Into<String>, dim: usize, driver: Driver) -> Self {
        Self {
            name: name.into(),
            dim,
            driver,
            hypotheses: BTreeSet::new(),
            rho: None,
            phi: None,
            growth_a: 0.0,
            monotone_mu: 0.0,
            mu: 0.0,
            lambda: 0.0,
            f: Coefficient::Constant(0.0),
            psi: None,
            bar: None,
            tilde: None,
            z_growth: ZGrowth::lipschitz(0.0),
            tree: None,
        }
    }

    pub fn with_hypotheses(mut self, hyps: impl IntoIterator<Item = Hypothesis>) -> Self {
        self.hypotheses = hyps.into_iter().collect();
        self
    }

    pub fn declares(&self, h: Hypothesis) -> bool {
        self.hypotheses.contains(&h)
    }

    /// Unchecked evaluation on the hot path.
    #[inline]
    pub fn value(&self, t: f64, y: f64, z: &[f64], node: Node) -> f64 {
        (self.driver)(t, y, z, node)
    }

    /// Checked evaluation: `z` must have length `d` and `node` must exist on the attached tree.
    pub fn eval(&self, t: f64, y: f64, z: &[f64], node: Node) -> Result<f64> {
        if z.len() != self.dim {
            return Err(LabError::LevelMismatch {
                expected: self.dim,
                got: z.len(),
            });
        }
        if let Some(tree) = &self.tree {
            if node.level > tree.depth() || node.index >= tree.nodes(node.level) {
                return Err(LabError::LevelMismatch {
                    expected: tree.nodes(node.level.min(tree.depth())),
                    got: node.index + 1,
                });
            }
        }
        Ok(self.value(t, y, z, node))
    }

    pub fn driver(&self) -> &Driver {
        &self.driver
    }

    /// Replaces the evaluator, keeping metadata.
    pub fn with_driver(mut self, driver: Driver) -> Self {
        self.driver = driver;
        self
    }

    /// `psi(r)` if declared, otherwise the sampled surrogate
    /// `sup_{|y|<=r} |g(t,y,0)| + mu r` on a 65-point grid.
    pub fn psi_value(&self, t: f64, r: f64, node: Node) -> f64 {
        if let Some(psi) = &self.psi {
            return psi(r);
        }
        let zero = vec![0.0; self.dim];
        let mut best = 0.0f64;
        for i in 0..=64 {
            let y = -r + 2.0 * r * i as f64 / 64.0;
            best = best.max(self.value(t, y, &zero, node).abs());
        }
        best + self.mu * r
    }

    /// Constants of assumption (A): declared, or derived from (H1)+(H2w) or (H1)+(HH).
    pub fn bar_bound(&self) -> Option<LinearBound> {
        if let Some(b) = &self.bar {
            return Some(b.clone());
        }
        let closure = implied_closure(&self.hypotheses);
        if !closure.contains(&Hypothesis::H1) {
            return None;
        }
        if closure.contains(&Hypothesis::H2w) {
            let zero = vec![0.0; self.dim];
            let g00 = self.g00_sup(&zero);
            return Some(LinearBound::new(
                self.f.plus(g00 + self.growth_a),
                self.mu + self.growth_a,
                self.lambda,
            ));
        }
        if closure.contains(&Hypothesis::HH) {
            return Some(LinearBound::new(
                self.f.plus(self.growth_a),
                self.growth_a,
                self.lambda,
            ));
        }
        None
    }

    fn g00_sup(&self, zero: &[f64]) -> f64 {
        match &self.tree {
            None => self.value(0.0, 0.0, zero, Node::root()).abs(),
            Some(tree) => {
                let mut best = 0.0f64;
                for k in 0..=tree.depth() {
                    for i in 0..tree.nodes(k) {
                        best = best.max(self.value(tree.time(k), 0.0, zero, Node::new(k, i)).abs());
                    }
                }
                best
            }
        }
    }

    /// Effective (H1) modulus: declared `rho`, else `monotone_mu^+ u` under (H1s).
    pub fn rho_effective(&self) -> Option<Modulus> {
        if let Some(r) = &self.rho {
            return Some(r.clone());
        }
        if self.declares(Hypothesis::H1s) {
            let slope = if self.monotone_mu > 0.0 { self.monotone_mu } else { 1.0 };
            return Some(Modulus::linear(ModulusKind::Osgood, slope));
        }
        None
    }

    /// Effective (H2) modulus: declared `phi`, else `lambda x` under (H2s).
    pub fn phi_effective(&self) -> Option<Modulus> {
        if let Some(p) = &self.phi {
            return Some(p.clone());
        }
        if self.declares(Hypothesis::H2s) {
            return Some(Modulus::linear(ModulusKind::Continuity, self.lambda));
        }
        None
    }

    /// `(f, mu, lambda)` for (H2w): declared, or `(A, 0, A)` derived from (H2).
    pub fn h2w_constants(&self) -> (Coefficient, f64, f64) {
        if !self.declares(Hypothesis::H2w) && self.declares(Hypothesis::H2) {
            let a = self.phi_effective().map(|m| m.growth).unwrap_or(self.growth_a);
            return (Coefficient::Constant(a), 0.0, a);
        }
        (self.f.clone(), self.mu, self.lambda)
    }
}

/// Euclidean norm.
pub fn norm(z: &[f64]) -> f64 {
    if z.len() == 1 {
        z[0].abs()
    } else {
        z.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

pub fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closure_follows_lattice() {
        use Hypothesis::*;
        let set: BTreeSet<_> = [H1s, H2s, H3s, H4s].into_iter().collect();
        let c = implied_closure(&set);
        for h in [H1, H2, H2w, H3, H4, H4w, HH, A] {
            assert!(c.contains(&h), "{h} missing");
        }
        assert!(!c.contains(&B));
        let only: BTreeSet<_> = [H2w, H3].into_iter().collect();
        let c = implied_closure(&only);
        assert!(c.contains(&HH));
        assert!(!c.contains(&A));
    }

    #[test]
    fn parses_hypothesis_names() {
        assert_eq!("h2w".parse::<Hypothesis>().unwrap(), Hypothesis::H2w);
        assert_eq!("HH".parse::<Hypothesis>().unwrap(), Hypothesis::HH);
        assert!("H7".parse::<Hypothesis>().is_err());
    }

    #[test]
    fn osgood_log_shape() {
        assert_eq!(osgood_log_fn(0.0), 0.0);
        assert!((osgood_log_fn(1.0) - 1.0).abs() < 1e-15);
        assert_eq!(osgood_log_fn(5.0), 1.0);
        assert!(osgood_log_fn(0.01) > 0.01);
    }
}
