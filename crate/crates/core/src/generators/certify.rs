//! Sampled certification of the structural hypotheses.
//!
//! Each hypothesis is turned into one or more inequalities evaluated on a
//! seeded battery of `(t, node, y1, y2, z1, z2)` tuples drawn from a box.
//! The verdict is the largest violation over the battery.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{implied_closure, norm, sgn, GeneratorSpec, Hypothesis, Modulus, ModulusKind};
use crate::tree::Node;

/// Sampling box and battery size.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub samples: usize,
    pub seed: u64,
    pub y_range: (f64, f64),
    pub z_range: (f64, f64),
    pub horizon: f64,
    pub tol: f64,
    /// Step used by the continuity probes.
    pub probe: f64,
    /// Largest change tolerated across a probe step.
    pub continuity_tol: f64,
    pub modulus_points: usize,
    pub modulus_max: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            samples: 4096,
            seed: 0x5EED,
            y_range: (-3.0, 3.0),
            z_range: (-3.0, 3.0),
            horizon: 1.0,
            tol: 1e-9,
            probe: 1e-8,
            continuity_tol: 1e-3,
            modulus_points: 1024,
            modulus_max: 10.0,
        }
    }
}

/// One sampled inequality and its worst violation.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub samples: usize,
    pub max_violation: f64,
    pub pass: bool,
}

/// Outcome of certifying one hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificationReport {
    pub generator: String,
    pub hypothesis: Hypothesis,
    /// Whether the hypothesis was declared, or only reached through implications.
    pub declared: bool,
    pub checks: Vec<CheckResult>,
    pub config: SamplerConfig,
    pub pass: bool,
}

impl CertificationReport {
    pub fn max_violation(&self) -> f64 {
        self.checks
            .iter()
            .map(|c| c.max_violation)
            .fold(0.0, f64::max)
    }
}

/// Grid checks on a modulus.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulusReport {
    pub value_at_zero: f64,
    pub monotone_violation: f64,
    pub concavity_violation: f64,
    pub growth_violation: f64,
    pub positivity_violation: f64,
    pub pass: bool,
}

/// `value(0) = 0`, nondecreasing, `<= A(x+1)`, positive off 0 and, for Osgood moduli,
/// midpoint-concave, all on a uniform grid of `[0, max]`.
pub fn check_modulus(m: &Modulus, points: usize, max: f64, tol: f64) -> ModulusReport {
    let points = points.max(3);
    let xs: Vec<f64> = (0..points)
        .map(|i| max * i as f64 / (points - 1) as f64)
        .collect();
    let vals: Vec<f64> = xs.iter().map(|&x| m.eval(x)).collect();
    let value_at_zero = vals[0];
    let monotone_violation = vals
        .windows(2)
        .map(|w| (w[0] - w[1]).max(0.0))
        .fold(0.0, f64::max);
    let growth_violation = xs
        .iter()
        .zip(&vals)
        .map(|(&x, &v)| (v - m.growth * (x + 1.0)).max(0.0))
        .fold(0.0, f64::max);
    let mut concavity_violation = 0.0f64;
    let mut positivity_violation = 0.0f64;
    if m.kind == ModulusKind::Osgood {
        for i in 0..points {
            for j in (i + 2..points).step_by(2) {
                let mid = (i + j) / 2;
                let v = 0.5 * (vals[i] + vals[j]) - vals[mid];
                concavity_violation = concavity_violation.max(v);
            }
        }
        positivity_violation = vals[1..]
            .iter()
            .map(|&v| if v > 0.0 { 0.0 } else { 1.0 })
            .fold(0.0, f64::max);
    }
    let pass = value_at_zero.abs() <= tol
        && monotone_violation <= tol
        && growth_violation <= tol
        && concavity_violation <= tol
        && positivity_violation == 0.0;
    ModulusReport {
        value_at_zero,
        monotone_violation,
        concavity_violation,
        growth_violation,
        positivity_violation,
        pass,
    }
}

#[derive(Debug, Clone)]
struct Sample {
    t: f64,
    node: Node,
    y1: f64,
    y2: f64,
    z1: Vec<f64>,
    z2: Vec<f64>,
}

fn draw(g: &GeneratorSpec, cfg: &SamplerConfig) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (ylo, yhi) = cfg.y_range;
    let (zlo, zhi) = cfg.z_range;
    (0..cfg.samples)
        .map(|i| {
            let (t, node) = match &g.tree {
                Some(tree) => {
                    let k = rng.gen_range(0..=tree.depth());
                    let idx = rng.gen_range(0..tree.nodes(k));
                    (tree.time(k), Node::new(k, idx))
                }
                None => (rng.gen_range(0.0..=cfg.horizon), Node::root()),
            };
            let mut y1 = rng.gen_range(ylo..=yhi);
            let mut y2 = rng.gen_range(ylo..=yhi);
            let mut z1: Vec<f64> = (0..g.dim).map(|_| rng.gen_range(zlo..=zhi)).collect();
            let mut z2: Vec<f64> = (0..g.dim).map(|_| rng.gen_range(zlo..=zhi)).collect();
            // every eighth tuple probes nearby pairs and the origin, where moduli bite
            match i % 8 {
                1 => y2 = y1 + (y2 - y1) * 1e-3,
                2 => {
                    for (a, b) in z2.iter_mut().zip(&z1) {
                        *a = b + (*a - b) * 1e-3;
                    }
                }
                3 => z1.iter_mut().for_each(|x| *x = 0.0),
                4 => y1 = 0.0,
                5 => {
                    y1 *= 1e-3;
                    y2 *= 1e-3;
                    z1.iter_mut().for_each(|x| *x *= 1e-3);
                    z2.iter_mut().for_each(|x| *x *= 1e-3);
                }
                _ => {}
            }
            Sample {
                t,
                node,
                y1,
                y2,
                z1,
                z2,
            }
        })
        .collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    norm(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>())
}

fn sampled_check(
    name: &str,
    samples: &[Sample],
    tol: f64,
    f: impl Fn(&Sample) -> f64 + Sync,
) -> CheckResult {
    // per-sample violations in parallel, reduced in fixed order
    let violations: Vec<f64> = samples
        .par_iter()
        .map(|s| {
            let v = f(s);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v.max(0.0)
            }
        })
        .collect();
    let max_violation = violations.iter().fold(0.0f64, |m, &v| m.max(v));
    CheckResult {
        name: name.to_string(),
        samples: samples.len(),
        max_violation,
        pass: max_violation <= tol,
    }
}

fn missing(name: &str) -> CheckResult {
    CheckResult {
        name: format!("{name}: constant not declared"),
        samples: 0,
        max_violation: f64::INFINITY,
        pass: false,
    }
}

fn modulus_check(name: &str, m: &Modulus, cfg: &SamplerConfig) -> CheckResult {
    let r = check_modulus(m, cfg.modulus_points, cfg.modulus_max, 1e-9);
    let worst = r
        .value_at_zero
        .abs()
        .max(r.monotone_violation)
        .max(r.concavity_violation)
        .max(r.growth_violation)
        .max(r.positivity_violation);
    CheckResult {
        name: name.to_string(),
        samples: cfg.modulus_points,
        max_violation: worst,
        pass: r.pass,
    }
}

fn checks_for(g: &GeneratorSpec, h: Hypothesis, s: &[Sample], cfg: &SamplerConfig) -> Vec<CheckResult> {
    use Hypothesis::*;
    let tol = cfg.tol;
    let zero = vec![0.0; g.dim];
    let v = |t: f64, y: f64, z: &[f64], n: Node| g.value(t, y, z, n);
    let finite = |name: &str, f: &(dyn Fn(&Sample) -> f64 + Sync)| {
        sampled_check(name, s, 0.0, |x| if f(x).is_finite() { 0.0 } else { 1.0 })
    };
    match h {
        H1 => match g.rho_effective() {
            None => vec![missing("rho")],
            Some(rho) => vec![
                modulus_check("rho modulus", &rho, cfg),
                sampled_check("one-sided Osgood in y", s, tol, |x| {
                    (v(x.t, x.y1, &x.z1, x.node) - v(x.t, x.y2, &x.z1, x.node)) * sgn(x.y1 - x.y2)
                        - rho.eval((x.y1 - x.y2).abs())
                }),
            ],
        },
        H1s => vec![sampled_check("monotone in y", s, tol, |x| {
            (v(x.t, x.y1, &x.z1, x.node) - v(x.t, x.y2, &x.z1, x.node)) * sgn(x.y1 - x.y2)
                - g.monotone_mu * (x.y1 - x.y2).abs()
        })],
        H2 => match g.phi_effective() {
            None => vec![missing("phi")],
            Some(phi) => vec![
                modulus_check("phi modulus", &phi, cfg),
                sampled_check("uniform continuity in z", s, tol, |x| {
                    (v(x.t, x.y1, &x.z1, x.node) - v(x.t, x.y1, &x.z2, x.node)).abs()
                        - phi.eval(dist(&x.z1, &x.z2))
                }),
            ],
        },
        H2s => vec![sampled_check("Lipschitz in z", s, tol, |x| {
            (v(x.t, x.y1, &x.z1, x.node) - v(x.t, x.y1, &x.z2, x.node)).abs()
                - g.lambda * dist(&x.z1, &x.z2)
        })],
        H2w => {
            let (f, mu, lambda) = g.h2w_constants();
            vec![sampled_check("linear growth in z", s, tol, |x| {
                (v(x.t, x.y1, &x.z1, x.node) - v(x.t, x.y1, &zero, x.node)).abs()
                    - (f.at(x.node) + mu * x.y1.abs() + lambda * norm(&x.z1))
            })]
        }
        H3 => vec![finite("g(t,y,0) finite on the box", &|x: &Sample| {
            v(x.t, x.y1, &zero, x.node) - v(x.t, 0.0, &zero, x.node)
        })],
        H3s => vec![sampled_check("linear growth in y", s, tol, |x| {
            v(x.t, x.y1, &zero, x.node).abs() - (g.f.at(x.node) + g.mu * x.y1.abs())
        })],
        H4 => vec![sampled_check("joint continuity", s, cfg.continuity_tol, |x| {
            let zp: Vec<f64> = x.z1.iter().map(|a| a + cfg.probe).collect();
            (v(x.t, x.y1 + cfg.probe, &zp, x.node) - v(x.t, x.y1, &x.z1, x.node)).abs()
        })],
        H4s => {
            // continuity in y, uniformly over a 33-point grid of the z box
            let grid: Vec<Vec<f64>> = (0..33)
                .map(|i| {
                    let c = cfg.z_range.0 + (cfg.z_range.1 - cfg.z_range.0) * i as f64 / 32.0;
                    vec![c; g.dim]
                })
                .collect();
            vec![
                sampled_check("continuity in z", s, cfg.continuity_tol, |x| {
                    let zp: Vec<f64> = x.z1.iter().map(|a| a + cfg.probe).collect();
                    (v(x.t, x.y1, &zp, x.node) - v(x.t, x.y1, &x.z1, x.node)).abs()
                }),
                sampled_check("continuity in y uniform over the z box", s, cfg.continuity_tol, |x| {
                    grid.iter()
                        .map(|z| (v(x.t, x.y1 + cfg.probe, z, x.node) - v(x.t, x.y1, z, x.node)).abs())
                        .fold(0.0, f64::max)
                }),
            ]
        }
        H4w => vec![sampled_check("continuity in y", s, cfg.continuity_tol, |x| {
            (v(x.t, x.y1 + cfg.probe, &x.z1, x.node) - v(x.t, x.y1, &x.z1, x.node)).abs()
        })],
        HH => vec![sampled_check("general growth in (y,z)", s, tol, |x| {
            v(x.t, x.y1, &x.z1, x.node).abs()
                - (g.f.at(x.node) + g.psi_value(x.t, x.y1.abs(), x.node) + g.lambda * norm(&x.z1))
        })],
        A => match g.bar_bound() {
            None => vec![missing("(A) bound")],
            Some(b) => vec![sampled_check("sign-weighted growth", s, tol, |x| {
                v(x.t, x.y1, &x.z1, x.node) * sgn(x.y1) - b.eval(x.node, x.y1, norm(&x.z1))
            })],
        },
        B => match &g.tilde {
            None => vec![missing("(B) bound")],
            Some(b) => vec![sampled_check("lower linear growth", s, tol, |x| {
                -v(x.t, x.y1, &x.z1, x.node) - b.eval(x.node, x.y1, norm(&x.z1))
            })],
        },
    }
}

/// Certifies a single hypothesis on the sampled battery.
pub fn certify_hypothesis(g: &GeneratorSpec, h: Hypothesis, cfg: &SamplerConfig) -> CertificationReport {
    let samples = draw(g, cfg);
    report(g, h, &samples, cfg)
}

fn report(g: &GeneratorSpec, h: Hypothesis, samples: &[Sample], cfg: &SamplerConfig) -> CertificationReport {
    let mut checks = checks_for(g, h, samples, cfg);
    if matches!(h, Hypothesis::H2w | Hypothesis::H3s | Hypothesis::HH) && !g.f.is_nonnegative() {
        checks.push(CheckResult {
            name: "f nonnegative".into(),
            samples: 0,
            max_violation: -g.f.sup().min(0.0),
            pass: false,
        });
    }
    let pass = checks.iter().all(|c| c.pass);
    CertificationReport {
        generator: g.name.clone(),
        hypothesis: h,
        declared: g.declares(h),
        checks,
        config: cfg.clone(),
        pass,
    }
}

/// Certifies every declared hypothesis and everything they imply, in lattice order.
pub fn certify_declared(g: &GeneratorSpec, cfg: &SamplerConfig) -> Vec<CertificationReport> {
    let samples = draw(g, cfg);
    implied_closure(&g.hypotheses)
        .into_iter()
        .map(|h| report(g, h, &samples, cfg))
        .collect()
}
