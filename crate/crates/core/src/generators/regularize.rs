//! Truncations `g ^ n`, `g v (-n)` and the inf/sup convolutions in `z`.
//!
//! The convolutions restrict the search over `u` to a ball around `z` whose
//! radius follows from the one-sided growth of `u -> g(y, u)`: outside it the
//! objective provably exceeds its value at `u = z`.

use std::collections::BTreeSet;
use std::sync::Arc;

use super::{implied_closure, norm, GeneratorSpec, Hypothesis, LinearBound, Modulus, ModulusKind, ZGrowth};
use crate::error::{LabError, Result};
use crate::tree::Node;

/// Grid points per coordinate in the coarse search.
pub const GRID_POINTS: usize = 257;
/// Target bracket width of the golden-section refinement.
pub const REFINE_TOL: f64 = 1e-10;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// `min(g, n)`.
pub fn truncate_above(g: &GeneratorSpec, n: f64) -> GeneratorSpec {
    truncate(g, n, true)
}

/// `max(g, -n)`.
pub fn truncate_below(g: &GeneratorSpec, n: f64) -> GeneratorSpec {
    truncate(g, n, false)
}

fn truncate(g: &GeneratorSpec, n: f64, above: bool) -> GeneratorSpec {
    let base = g.driver().clone();
    let driver: super::Driver = if above {
        Arc::new(move |t, y, z: &[f64], node| base(t, y, z, node).min(n))
    } else {
        Arc::new(move |t, y, z: &[f64], node| base(t, y, z, node).max(-n))
    };
    let tag = if above { "trunc_above" } else { "trunc_below" };
    let mut out = g.clone().with_driver(driver);
    out.name = format!("{tag}({};{n})", g.name);
    if n < 1.0 {
        // the preservation arguments need n >= 1
        out.hypotheses = BTreeSet::new();
    }
    out
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Inf,
    Sup,
}

fn check_kappa(g: &GeneratorSpec, kappa: f64, side: Side) -> Result<()> {
    let bound = match side {
        Side::Inf => g.z_growth.below,
        Side::Sup => g.z_growth.above,
    };
    if !(kappa.is_finite() && kappa > bound) {
        return Err(LabError::RegularizationParameterTooSmall { kappa, bound });
    }
    Ok(())
}

/// `inf_u [g(t,y,u) + kappa |u - z|]`.
pub fn inf_convolution(
    g: &GeneratorSpec,
    kappa: f64,
    t: f64,
    y: f64,
    z: &[f64],
    node: Node,
) -> Result<f64> {
    check_kappa(g, kappa, Side::Inf)?;
    if z.len() != g.dim {
        return Err(LabError::LevelMismatch {
            expected: g.dim,
            got: z.len(),
        });
    }
    Ok(convolve(g.driver(), &g.z_growth, kappa, t, y, z, node, Side::Inf))
}

/// `sup_u [g(t,y,u) - kappa |u - z|]`.
pub fn sup_convolution(
    g: &GeneratorSpec,
    kappa: f64,
    t: f64,
    y: f64,
    z: &[f64],
    node: Node,
) -> Result<f64> {
    check_kappa(g, kappa, Side::Sup)?;
    if z.len() != g.dim {
        return Err(LabError::LevelMismatch {
            expected: g.dim,
            got: z.len(),
        });
    }
    Ok(convolve(g.driver(), &g.z_growth, kappa, t, y, z, node, Side::Sup))
}

/// Search radius around `z` outside of which the objective exceeds its value at `u = z`.
fn radius(growth: &ZGrowth, kappa: f64, side: Side, y: f64, zn: f64, gz: f64, g0: f64) -> f64 {
    let (slope, s) = match side {
        Side::Inf => (growth.below, 1.0),
        Side::Sup => (growth.above, -1.0),
    };
    let num = s * (gz - g0) + growth.offset + growth.mu * y.abs() + slope * zn;
    (num / (kappa - slope)).max(0.0)
}

#[allow(clippy::too_many_arguments)]
fn convolve(
    driver: &super::Driver,
    growth: &ZGrowth,
    kappa: f64,
    t: f64,
    y: f64,
    z: &[f64],
    node: Node,
    side: Side,
) -> f64 {
    let s = match side {
        Side::Inf => 1.0,
        Side::Sup => -1.0,
    };
    let d = z.len();
    let zero = vec![0.0; d];
    let gz = driver(t, y, z, node);
    let g0 = driver(t, y, &zero, node);
    let r = radius(growth, kappa, side, y, norm(z), gz, g0);
    // minimized objective; the convolution is s * min
    let obj = |u: &[f64]| {
        let dist: f64 = norm(&u.iter().zip(z).map(|(a, b)| a - b).collect::<Vec<_>>());
        s * driver(t, y, u, node) + kappa * dist
    };
    let mut best = s * gz;
    if !(r > 0.0) || !r.is_finite() {
        return s * best;
    }
    if d == 1 {
        let (_, v) = line_search(|x| obj(&[x]), z[0] - r, z[0] + r, &[z[0], 0.0]);
        return s * best.min(v);
    }
    // cyclic coordinate descent from the better of u = z and u = 0
    let mut u = z.to_vec();
    let at_zero = obj(&zero);
    if at_zero < best {
        best = at_zero;
        u = zero.clone();
    }
    for _sweep in 0..20 {
        let start = best;
        for j in 0..d {
            let mut trial = u.clone();
            let (x, v) = line_search(
                |x| {
                    trial[j] = x;
                    obj(&trial)
                },
                u[j] - r,
                u[j] + r,
                &[u[j], 0.0, z[j]],
            );
            if v < best {
                best = v;
                u[j] = x;
            }
        }
        if start - best <= 1e-14 * (1.0 + best.abs()) {
            break;
        }
    }
    s * best
}

/// Grid search on `[lo, hi]` plus exact candidates, then golden-section refinement
/// in the grid cells adjacent to the best point.
fn line_search(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, candidates: &[f64]) -> (f64, f64) {
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    let mut best_x = lo;
    let mut best = f(lo);
    for i in 1..GRID_POINTS {
        let x = lo + step * i as f64;
        let v = f(x);
        if v < best {
            best = v;
            best_x = x;
        }
    }
    for &x in candidates {
        if x >= lo && x <= hi {
            let v = f(x);
            if v < best {
                best = v;
                best_x = x;
            }
        }
    }
    let (mut a, mut b) = ((best_x - step).max(lo), (best_x + step).min(hi));
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > REFINE_TOL {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    for (x, v) in [(c, fc), (d, fd)] {
        if v < best {
            best = v;
            best_x = x;
        }
    }
    (best_x, best)
}

fn convolved(g: &GeneratorSpec, kappa: f64, side: Side) -> Result<GeneratorSpec> {
    check_kappa(g, kappa, side)?;
    let base = g.driver().clone();
    let growth = g.z_growth;
    let driver: super::Driver =
        Arc::new(move |t, y, z: &[f64], node| convolve(&base, &growth, kappa, t, y, z, node, side));
    let tag = match side {
        Side::Inf => "inf_conv",
        Side::Sup => "sup_conv",
    };
    let mut out = g.clone().with_driver(driver);
    out.name = format!("{tag}({};{kappa})", g.name);
    let closure = implied_closure(&g.hypotheses);
    use Hypothesis::*;
    let mut hyps: BTreeSet<Hypothesis> = [H2, H2s, H2w].into_iter().collect();
    for h in [H1, H1s, H3] {
        if closure.contains(&h) {
            hyps.insert(h);
        }
    }
    if closure.contains(&H4s) {
        hyps.extend([H4, H4w]);
    }
    out.hypotheses = hyps;
    out.phi = Some(Modulus::linear(ModulusKind::Continuity, kappa));
    out.lambda = kappa;
    out.growth_a = g.growth_a.max(kappa);
    out.psi = None;
    out.tilde = None;
    // one side of (A) is inherited, the other follows from the z-growth of g
    out.bar = g.bar_bound().map(|b| {
        LinearBound::new(
            b.f.plus(growth.offset),
            b.mu + growth.mu,
            b.lambda.max(growth.below.max(growth.above)),
        )
    });
    out.z_growth = ZGrowth::lipschitz(kappa);
    Ok(out)
}

/// The driver `z -> inf_u [g(u) + kappa |u - z|]` as a generator.
pub fn inf_convolved(g: &GeneratorSpec, kappa: f64) -> Result<GeneratorSpec> {
    convolved(g, kappa, Side::Inf)
}

/// The driver `z -> sup_u [g(u) - kappa |u - z|]` as a generator.
pub fn sup_convolved(g: &GeneratorSpec, kappa: f64) -> Result<GeneratorSpec> {
    convolved(g, kappa, Side::Sup)
}

#[cfg(test)]
mod tests {
    use super::super::library::{abs_z, constant, cubic, uniform_z, UniformVariant};
    use super::*;

    const ROOT: Node = Node { level: 0, index: 0 };

    #[test]
    fn truncation_examples() {
        let five = constant(5.0, 1);
        assert_eq!(truncate_above(&five, 3.0).value(0.0, 0.0, &[0.0], ROOT), 3.0);
        let minus_five = constant(-5.0, 1);
        assert_eq!(truncate_below(&minus_five, 3.0).value(0.0, 0.0, &[0.0], ROOT), -3.0);
        let cube = cubic(1.0, 0.0, 0.0, 1).unwrap();
        assert_eq!(truncate_above(&cube, 2.0).value(0.0, -2.0, &[0.0], ROOT), 2.0);
    }

    #[test]
    fn inf_convolution_examples() {
        let absz = abs_z(1.0, 0.0, 0.0, 1);
        let v = inf_convolution(&absz, 2.0, 0.0, 0.0, &[4.0], ROOT).unwrap();
        assert!((v - 4.0).abs() < 1e-12);
        let two = abs_z(2.0, 0.0, 0.0, 1);
        let v = inf_convolution(&two, 1.0, 0.0, 0.0, &[4.0], ROOT).unwrap();
        assert!((v - 4.0).abs() < 1e-12);
        let root = uniform_z(1.0, 0.0, 0.0, UniformVariant::Max, 1);
        let v = inf_convolution(&root, 3.0, 0.0, 0.0, &[0.0], ROOT).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn sup_convolution_examples() {
        let absz = abs_z(1.0, 0.0, 0.0, 1);
        let v = sup_convolution(&absz, 2.0, 0.0, 0.0, &[4.0], ROOT).unwrap();
        assert!((v - 4.0).abs() < 1e-12);
        let neg = abs_z(-2.0, 0.0, 0.0, 1);
        let v = sup_convolution(&neg, 1.0, 0.0, 0.0, &[4.0], ROOT).unwrap();
        assert!((v + 4.0).abs() < 1e-12);
        let c = constant(1.7, 1);
        let v = sup_convolution(&c, 0.5, 0.0, 0.0, &[-2.0], ROOT).unwrap();
        assert!((v - 1.7).abs() < 1e-15);
    }

    #[test]
    fn kappa_below_growth_is_rejected() {
        let neg = abs_z(-2.0, 0.0, 0.0, 1);
        assert!(matches!(
            inf_convolution(&neg, 1.0, 0.0, 0.0, &[4.0], ROOT),
            Err(LabError::RegularizationParameterTooSmall { .. })
        ));
        let pos = abs_z(2.0, 0.0, 0.0, 1);
        assert!(matches!(
            sup_convolved(&pos, 2.0),
            Err(LabError::RegularizationParameterTooSmall { .. })
        ));
    }

    #[test]
    fn square_root_gap_shrinks_like_inverse_kappa() {
        let root = uniform_z(1.0, 0.0, 0.0, UniformVariant::Max, 1);
        for kappa in [4.0, 16.0, 64.0] {
            let mut gap = 0.0f64;
            for i in 0..=400 {
                // log-spaced so that the maximizer 1 / (4 kappa^2) is resolved
                let z = 10f64.powf(-6.0 + 6.0 * i as f64 / 400.0);
                let g = root.value(0.0, 0.0, &[z], ROOT);
                let v = inf_convolution(&root, kappa, 0.0, 0.0, &[z], ROOT).unwrap();
                assert!(v <= g + 1e-12);
                gap = gap.max(g - v);
            }
            assert!((gap - 0.25 / kappa).abs() < 0.02 / kappa, "kappa {kappa}: gap {gap}");
        }
    }

    #[test]
    fn two_dimensional_convolution() {
        let two = abs_z(2.0, 0.0, 0.0, 2);
        let v = inf_convolution(&two, 1.0, 0.0, 0.0, &[3.0, 4.0], ROOT).unwrap();
        assert!((v - 5.0).abs() < 1e-9);
    }
}
