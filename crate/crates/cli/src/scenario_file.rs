//! TOML scenario files.
//!
//! ```toml
//! [tree]
//! T = 1.0
//! N = 10
//! d = 1
//!
//! [terminal]
//! expr = "max(0.3 - B, 0)"
//!
//! [barrier]
//! expr = "0.3 - B"          # or "none"
//!
//! [forcing]
//! rate = "zero"             # dV_k = h * rate at level k
//!
//! [generator]
//! id = "linear"
//! params = [-0.2, 0.5, 0.1]
//!
//! [scheme]
//! kind = "explicit"         # or "fixed-point"
//!
//! [norms]
//! p = [1.5, 2.0, 3.0]
//!
//! [run]
//! schedule = [1.0, 2.0, 4.0]
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rbsde_core::bsde::{Forcing, KappaOffset, ScenarioConfig, SchemeConfig, SequenceKind};
use rbsde_core::generators::{from_id, Hypothesis};
use rbsde_core::theorems::{EstimateId, Side};
use rbsde_core::tree::{AdaptedProcess, Node, NormParams, TreeModel};
use rbsde_core::LabError;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::expr::{parse, Expr, PathContext};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub tree: TreeSection,
    pub terminal: TerminalSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub barrier: Option<BarrierSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forcing: Option<ForcingSection>,
    pub generator: GeneratorSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<SchemeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norms: Option<NormsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeSection {
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "N")]
    pub depth: usize,
    #[serde(default = "one")]
    pub d: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalSection {
    pub expr: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierSection {
    pub expr: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingSection {
    pub rate: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSection {
    pub id: String,
    #[serde(default)]
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypotheses: Option<Vec<String>>,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub growth_a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    #[serde(default = "explicit")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damping: Option<f64>,
}

fn explicit() -> String {
    "explicit".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormsSection {
    pub p: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimates: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_offset: Option<String>,
}

/// Command-specific settings after validation.
#[derive(Debug, Clone, Default)]
pub struct RunSpec {
    pub schedule: Option<Vec<f64>>,
    pub side: Option<Side>,
    pub estimates: Option<Vec<EstimateId>>,
    pub sequence: Option<SequenceKind>,
    pub level: usize,
    pub kappa_offset: Option<KappaOffset>,
}

/// A validated scenario ready for the solvers.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: PathBuf,
    pub config: ScenarioConfig,
    pub norms: Vec<NormParams>,
    pub run: RunSpec,
}

fn section_of(text: &str, offset: usize) -> String {
    let head = &text[..offset.min(text.len())];
    for line in head.lines().rev() {
        let l = line.trim();
        if l.starts_with('[') {
            return l.trim_matches(|c| c == '[' || c == ']').trim().to_string();
        }
    }
    String::from("-")
}

fn backticked(message: &str) -> Option<String> {
    let start = message.find('`')? + 1;
    let end = message[start..].find('`')? + start;
    Some(message[start..end].to_string())
}

fn locate(text: &str, err: &toml::de::Error) -> (String, String) {
    let message = err.message();
    let Some(span) = err.span() else {
        return ("-".into(), backticked(message).unwrap_or_else(|| "-".into()));
    };
    let section = section_of(text, span.start);
    if message.contains("missing field") || message.contains("unknown field") {
        if let Some(k) = backticked(message) {
            return (section, k);
        }
    }
    let line_start = text[..span.start.min(text.len())].rfind('\n').map_or(0, |i| i + 1);
    let line = text[line_start..].lines().next().unwrap_or("");
    let key = match line.split_once('=') {
        Some((k, _)) if !line.trim_start().starts_with('[') => k.trim().to_string(),
        _ => backticked(message).unwrap_or_else(|| "-".into()),
    };
    (section, key)
}

fn canonical_expr(file: &Path, section: &str, key: &str, src: &str, dim: usize) -> CliResult<String> {
    parse(src, dim)
        .map(|e| e.to_string())
        .map_err(|e| CliError::input(file, section, key, format!("`{src}`: {e}")))
}

fn is_keyword(src: &str, word: &str) -> bool {
    src.trim().eq_ignore_ascii_case(word)
}

impl ScenarioFile {
    /// Parses TOML text and canonicalizes every expression and enumerated value.
    pub fn parse_str(file: &Path, text: &str) -> CliResult<Self> {
        let mut sf: ScenarioFile = toml::from_str(text).map_err(|e| {
            let (section, key) = locate(text, &e);
            CliError::input(file, section, key, e.message().to_string())
        })?;
        sf.canonicalize(file)?;
        Ok(sf)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_str(path, &text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario files serialize")
    }

    fn canonicalize(&mut self, file: &Path) -> CliResult<()> {
        let d = self.tree.d;
        self.terminal.expr = canonical_expr(file, "terminal", "expr", &self.terminal.expr, d)?;
        if let Some(b) = &mut self.barrier {
            b.expr = if is_keyword(&b.expr, "none") {
                "none".into()
            } else {
                canonical_expr(file, "barrier", "expr", &b.expr, d)?
            };
        }
        if let Some(f) = &mut self.forcing {
            f.rate = if is_keyword(&f.rate, "zero") {
                "zero".into()
            } else {
                canonical_expr(file, "forcing", "rate", &f.rate, d)?
            };
        }
        if let Some(hyps) = &mut self.generator.hypotheses {
            for h in hyps.iter_mut() {
                let parsed: Hypothesis = h
                    .parse()
                    .map_err(|e: LabError| CliError::input(file, "generator", "hypotheses", e.to_string()))?;
                *h = parsed.as_str().to_string();
            }
        }
        if let Some(s) = &mut self.scheme {
            s.kind = parse_scheme_kind(file, &s.kind)?.to_string();
        }
        if let Some(run) = &mut self.run {
            if let Some(side) = &mut run.side {
                *side = Side::parse(&side.trim().to_ascii_lowercase())
                    .map_err(|e| CliError::input(file, "run", "side", e.to_string()))?
                    .as_str()
                    .to_string();
            }
            if let Some(seq) = &mut run.sequence {
                *seq = SequenceKind::parse(&seq.trim().to_ascii_lowercase())
                    .map_err(|e| CliError::input(file, "run", "sequence", e.to_string()))?
                    .as_str()
                    .to_string();
            }
            if let Some(ids) = &mut run.estimates {
                for id in ids.iter_mut() {
                    let parsed: EstimateId = id
                        .parse()
                        .map_err(|e: LabError| CliError::input(file, "run", "estimates", e.to_string()))?;
                    *id = parsed.as_str().to_string();
                }
            }
            if let Some(k) = &mut run.kappa_offset {
                *k = kappa_name(parse_kappa_offset(file, k)?).to_string();
            }
        }
        Ok(())
    }

    /// Builds the solver configuration.
    pub fn build(&self, file: &Path) -> CliResult<Scenario> {
        let t = &self.tree;
        let tree = TreeModel::new(t.horizon, t.depth, t.d).map_err(|e| {
            let key = match e {
                LabError::SizeLimit { .. } => "N",
                _ => "T",
            };
            CliError::input(file, "tree", key, e.to_string())
        })?;
        let paths = PathFunctionals::new(tree);
        let gen = &self.generator;
        let mut g = from_id(&gen.id, &gen.params, t.d).map_err(|e| {
            let key = match e {
                LabError::UnknownGenerator(_) => "id",
                _ => "params",
            };
            CliError::input(file, "generator", key, e.to_string())
        })?;
        if let Some(hyps) = &gen.hypotheses {
            let set: BTreeSet<Hypothesis> = hyps
                .iter()
                .map(|h| h.parse())
                .collect::<Result<_, LabError>>()
                .map_err(|e| CliError::input(file, "generator", "hypotheses", e.to_string()))?;
            g.hypotheses = set;
        }
        for (key, value, slot) in [
            ("A", gen.growth_a, &mut g.growth_a),
            ("mu", gen.mu, &mut g.mu),
            ("lambda", gen.lambda, &mut g.lambda),
        ] {
            if let Some(v) = value {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(CliError::input(file, "generator", key, "must be finite and nonnegative"));
                }
                *slot = v;
            }
        }

        let xi_expr = parse(&self.terminal.expr, t.d)
            .map_err(|e| CliError::input(file, "terminal", "expr", e.to_string()))?;
        let xi = paths.eval_level(&xi_expr, tree.depth());
        let mut sc = ScenarioConfig::new(tree, xi, g)
            .map_err(|e| CliError::input(file, "terminal", "expr", e.to_string()))?;

        if let Some(f) = &self.forcing {
            if !is_keyword(&f.rate, "zero") {
                let rate = parse(&f.rate, t.d)
                    .map_err(|e| CliError::input(file, "forcing", "rate", e.to_string()))?;
                let h = tree.step();
                let inc = AdaptedProcess::from_fn(tree, tree.depth(), |n: Node| h * paths.eval(&rate, n));
                let forcing = Forcing::from_increments(inc)
                    .map_err(|e| CliError::input(file, "forcing", "rate", e.to_string()))?;
                sc = sc
                    .with_forcing(forcing)
                    .map_err(|e| CliError::input(file, "forcing", "rate", e.to_string()))?;
            }
        }
        if let Some(b) = &self.barrier {
            if !is_keyword(&b.expr, "none") {
                let l = parse(&b.expr, t.d)
                    .map_err(|e| CliError::input(file, "barrier", "expr", e.to_string()))?;
                let barrier = AdaptedProcess::from_fn(tree, tree.depth() + 1, |n: Node| paths.eval(&l, n));
                sc = sc
                    .with_barrier(barrier)
                    .map_err(|e| CliError::input(file, "barrier", "expr", e.to_string()))?;
            }
        }

        if let Some(s) = &self.scheme {
            let kind = parse_scheme_kind(file, &s.kind)?;
            let mut scheme = if kind == "fixed-point" {
                SchemeConfig::fixed_point()
            } else {
                SchemeConfig::explicit()
            };
            if let Some(tol) = s.tol {
                if !(tol.is_finite() && tol > 0.0) {
                    return Err(CliError::input(file, "scheme", "tol", "must be positive"));
                }
                scheme.tol = tol;
            }
            if let Some(m) = s.max_iter {
                if m == 0 {
                    return Err(CliError::input(file, "scheme", "max_iter", "must be positive"));
                }
                scheme.max_iter = m;
            }
            if let Some(w) = s.damping {
                if !(w > 0.0 && w <= 1.0) {
                    return Err(CliError::input(file, "scheme", "damping", "must lie in (0, 1]"));
                }
                scheme.damping = w;
            }
            sc = sc.with_scheme(scheme);
        }

        let norms = match &self.norms {
            Some(n) => parse_norms(&n.p).map_err(|m| CliError::input(file, "norms", "p", m))?,
            None => NormParams::battery().to_vec(),
        };
        sc = sc.with_p(norms[0]);

        let mut run = RunSpec::default();
        let mut id = file
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scenario".into());
        if let Some(r) = &self.run {
            if let Some(i) = &r.id {
                id = i.clone();
            }
            if let Some(s) = &r.schedule {
                if s.is_empty() || s.iter().any(|x| !x.is_finite()) || s.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(CliError::input(
                        file,
                        "run",
                        "schedule",
                        "must be nonempty, finite and strictly increasing",
                    ));
                }
                run.schedule = Some(s.clone());
            }
            if let Some(side) = &r.side {
                run.side = Some(Side::parse(side).map_err(|e| CliError::input(file, "run", "side", e.to_string()))?);
            }
            if let Some(seq) = &r.sequence {
                run.sequence = Some(
                    SequenceKind::parse(seq).map_err(|e| CliError::input(file, "run", "sequence", e.to_string()))?,
                );
            }
            if let Some(ids) = &r.estimates {
                run.estimates = Some(
                    ids.iter()
                        .map(|s| s.parse())
                        .collect::<Result<_, LabError>>()
                        .map_err(|e| CliError::input(file, "run", "estimates", e.to_string()))?,
                );
            }
            if let Some(level) = r.level {
                if level > tree.depth() {
                    return Err(CliError::input(file, "run", "level", "exceeds the tree depth"));
                }
                run.level = level;
            }
            if let Some(k) = &r.kappa_offset {
                run.kappa_offset = Some(parse_kappa_offset(file, k)?);
            }
        }
        Ok(Scenario {
            file: file.to_path_buf(),
            config: sc.with_id(id),
            norms,
            run,
        })
    }
}

fn parse_scheme_kind(file: &Path, s: &str) -> CliResult<&'static str> {
    match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
        "explicit" => Ok("explicit"),
        "fixed-point" => Ok("fixed-point"),
        other => Err(CliError::input(
            file,
            "scheme",
            "kind",
            format!("unknown scheme `{other}`, expected explicit or fixed-point"),
        )),
    }
}

fn parse_kappa_offset(file: &Path, s: &str) -> CliResult<KappaOffset> {
    match s.trim().to_ascii_lowercase().as_str() {
        "a" | "growth_a" => Ok(KappaOffset::GrowthA),
        "lambda" => Ok(KappaOffset::Lambda),
        "raw" | "none" => Ok(KappaOffset::Raw),
        other => Err(CliError::input(
            file,
            "run",
            "kappa_offset",
            format!("unknown offset `{other}`, expected growth_a, lambda or raw"),
        )),
    }
}

fn kappa_name(k: KappaOffset) -> &'static str {
    match k {
        KappaOffset::GrowthA => "growth_a",
        KappaOffset::Lambda => "lambda",
        KappaOffset::Raw => "raw",
    }
}

/// Validates a list of norm exponents.
pub fn parse_norms(ps: &[f64]) -> Result<Vec<NormParams>, String> {
    if ps.is_empty() {
        return Err("needs at least one exponent".into());
    }
    ps.iter()
        .map(|&p| NormParams::new(p).map_err(|e| e.to_string()))
        .collect()
}

/// `B`, its running sup/inf and left-point integral of the first coordinate, per node.
#[derive(Debug, Clone)]
pub struct PathFunctionals {
    tree: TreeModel,
    b: AdaptedProcess,
    sup: Vec<Vec<f64>>,
    inf: Vec<Vec<f64>>,
    int: Vec<Vec<f64>>,
}

impl PathFunctionals {
    pub fn new(tree: TreeModel) -> Self {
        let b = tree.brownian();
        let d = tree.dim();
        let h = tree.step();
        let mut sup = vec![vec![0.0f64]];
        let mut inf = vec![vec![0.0f64]];
        let mut int = vec![vec![0.0]];
        for k in 1..=tree.depth() {
            let n = tree.nodes(k);
            let (mut s, mut lo, mut it) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
            for i in 0..n {
                let parent = tree.parent(i);
                let b1 = b.level(k)[i * d];
                s[i] = sup[k - 1][parent].max(b1);
                lo[i] = inf[k - 1][parent].min(b1);
                it[i] = int[k - 1][parent] + h * b.level(k - 1)[parent * d];
            }
            sup.push(s);
            inf.push(lo);
            int.push(it);
        }
        Self { tree, b, sup, inf, int }
    }

    pub fn eval(&self, e: &Expr, n: Node) -> f64 {
        let ctx = PathContext {
            t: self.tree.time(n.level),
            horizon: self.tree.horizon(),
            step: self.tree.step(),
            b: self.b.vector(n.level, n.index),
            sup_b: self.sup[n.level][n.index],
            inf_b: self.inf[n.level][n.index],
            int_b: self.int[n.level][n.index],
        };
        e.eval(&ctx)
    }

    pub fn eval_level(&self, e: &Expr, k: usize) -> Vec<f64> {
        (0..self.tree.nodes(k)).map(|i| self.eval(e, Node::new(k, i))).collect()
    }
}
