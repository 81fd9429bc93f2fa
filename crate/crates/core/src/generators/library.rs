//! Canonical driver library. Each constructor declares exactly the hypotheses
//! its driver satisfies, with constants valid for all of them at once.

use std::sync::Arc;

use super::{
    norm, osgood_log_fn, Coefficient, GeneratorSpec, Hypothesis, LinearBound, Modulus,
    ModulusKind, ZGrowth,
};
use crate::error::{LabError, Result};

use Hypothesis::*;

const ALL_LIPSCHITZ: [Hypothesis; 13] = [H1, H1s, H2, H2s, H2w, H3, H3s, H4, H4s, H4w, HH, A, B];

/// Slope of a linear (H1) modulus: the natural one when positive, else 1.
fn rho_slope(natural: f64) -> f64 {
    if natural > 0.0 {
        natural
    } else {
        1.0
    }
}

/// `g = 0`.
pub fn zero(dim: usize) -> GeneratorSpec {
    constant(0.0, dim)
}

/// `g = c`.
pub fn constant(c: f64, dim: usize) -> GeneratorSpec {
    linear(0.0, 0.0, c, dim)
}

/// `g = a y + b (z_1 + ... + z_d) + c`.
pub fn linear(a: f64, b: f64, c: f64, dim: usize) -> GeneratorSpec {
    let lambda = b.abs() * (dim as f64).sqrt();
    let driver = Arc::new(move |_t: f64, y: f64, z: &[f64], _n| a * y + b * z.iter().sum::<f64>() + c);
    let slope = rho_slope(a);
    let mut g = GeneratorSpec::new(format!("linear({a},{b},{c})"), dim, driver)
        .with_hypotheses(ALL_LIPSCHITZ);
    g.rho = Some(Modulus::linear(ModulusKind::Osgood, slope));
    g.phi = Some(Modulus::linear(ModulusKind::Continuity, lambda));
    g.growth_a = slope.max(lambda);
    g.monotone_mu = a;
    g.mu = a.abs();
    g.lambda = lambda;
    g.f = Coefficient::Constant(c.abs());
    g.psi = Some(Arc::new(move |r| a.abs() * r));
    g.bar = Some(LinearBound::new(Coefficient::Constant(c.abs()), a.max(0.0), lambda));
    g.tilde = Some(LinearBound::new(Coefficient::Constant(c.abs()), a.abs(), lambda));
    g.z_growth = ZGrowth::lipschitz(lambda);
    g
}

/// `g = c |z| + a y + e`.
pub fn abs_z(c: f64, a: f64, e: f64, dim: usize) -> GeneratorSpec {
    let lambda = c.abs();
    let driver = Arc::new(move |_t: f64, y: f64, z: &[f64], _n| c * norm(z) + a * y + e);
    let slope = rho_slope(a);
    let mut g = GeneratorSpec::new(format!("abs_z({c},{a},{e})"), dim, driver)
        .with_hypotheses(ALL_LIPSCHITZ);
    g.rho = Some(Modulus::linear(ModulusKind::Osgood, slope));
    g.phi = Some(Modulus::linear(ModulusKind::Continuity, lambda));
    g.growth_a = slope.max(lambda);
    g.monotone_mu = a;
    g.mu = a.abs();
    g.lambda = lambda;
    g.f = Coefficient::Constant(e.abs());
    g.psi = Some(Arc::new(move |r| a.abs() * r));
    g.bar = Some(LinearBound::new(Coefficient::Constant(e.abs()), a.max(0.0), lambda));
    g.tilde = Some(LinearBound::new(Coefficient::Constant(e.abs()), a.abs(), lambda));
    g.z_growth = ZGrowth {
        offset: 0.0,
        mu: 0.0,
        below: (-c).max(0.0),
        above: c.max(0.0),
    };
    g
}

/// `g = -a y^3 + s sin y + c` with `a >= 0`: one-sided Lipschitz, super-linear growth.
pub fn cubic(a: f64, s: f64, c: f64, dim: usize) -> Result<GeneratorSpec> {
    if a < 0.0 {
        return Err(LabError::InvalidParameter(format!(
            "cubic driver needs a >= 0, got {a}"
        )));
    }
    let driver = Arc::new(move |_t: f64, y: f64, _z: &[f64], _n| -a * y * y * y + s * y.sin() + c);
    let slope = rho_slope(s.abs());
    let mut hyps = vec![H1, H1s, H2, H2s, H2w, H3, H4, H4s, H4w, HH, A];
    if a == 0.0 {
        hyps.extend([H3s, B]);
    }
    let mut g = GeneratorSpec::new(format!("cubic({a},{s},{c})"), dim, driver).with_hypotheses(hyps);
    g.rho = Some(Modulus::linear(ModulusKind::Osgood, slope));
    g.phi = Some(Modulus::zero(ModulusKind::Continuity));
    g.growth_a = slope;
    g.monotone_mu = s.abs();
    g.mu = s.abs();
    g.lambda = 0.0;
    g.f = Coefficient::Constant(c.abs());
    g.psi = Some(Arc::new(move |r| a * r * r * r + s.abs() * r));
    g.bar = Some(LinearBound::new(Coefficient::Constant(c.abs()), s.abs(), 0.0));
    if a == 0.0 {
        g.tilde = Some(LinearBound::new(Coefficient::Constant(c.abs()), s.abs(), 0.0));
    }
    g.z_growth = ZGrowth::lipschitz(0.0);
    Ok(g)
}

/// `g = c rho(y^+) + b (z_1 + ... + z_d) + e`, `rho(u) = u (1 - ln u)` below 1 and 1 above.
///
/// Osgood but not Lipschitz in `y` at 0; nondecreasing in `y`.
pub fn osgood_log(c: f64, b: f64, e: f64, dim: usize) -> Result<GeneratorSpec> {
    if c < 0.0 {
        return Err(LabError::InvalidParameter(format!(
            "osgood_log driver needs c >= 0, got {c}"
        )));
    }
    let lambda = b.abs() * (dim as f64).sqrt();
    let driver = Arc::new(move |_t: f64, y: f64, z: &[f64], _n| {
        c * osgood_log_fn(y.max(0.0)) + b * z.iter().sum::<f64>() + e
    });
    let scale = if c > 0.0 { c } else { 1.0 };
    let mut g = GeneratorSpec::new(format!("osgood_log({c},{b},{e})"), dim, driver)
        .with_hypotheses([H1, H2, H2s, H2w, H3, H3s, H4, H4s, H4w, HH, A, B]);
    g.rho = Some(Modulus::osgood_log(scale));
    g.phi = Some(Modulus::linear(ModulusKind::Continuity, lambda));
    g.growth_a = scale.max(lambda);
    g.mu = 0.0;
    g.lambda = lambda;
    g.f = Coefficient::Constant(e.abs() + c);
    g.psi = Some(Arc::new(|_| 0.0));
    g.bar = Some(LinearBound::new(Coefficient::Constant(e.abs() + c), 0.0, lambda));
    g.tilde = Some(LinearBound::new(Coefficient::Constant(e.abs()), 0.0, lambda));
    g.z_growth = ZGrowth::lipschitz(lambda);
    Ok(g)
}

/// Shape of the continuity modulus in [`uniform_z`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UniformVariant {
    /// `min(sqrt x, x)`: concave, 1-Lipschitz.
    Min,
    /// `max(sqrt x, x)`: square-root cusp at 0, not Lipschitz.
    Max,
}

pub fn uniform_phi(variant: UniformVariant, x: f64) -> f64 {
    match variant {
        UniformVariant::Min => x.sqrt().min(x),
        UniformVariant::Max => x.sqrt().max(x),
    }
}

/// `g = c phi(|z|) + a y + e`.
pub fn uniform_z(c: f64, a: f64, e: f64, variant: UniformVariant, dim: usize) -> GeneratorSpec {
    let driver = Arc::new(move |_t: f64, y: f64, z: &[f64], _n| {
        c * uniform_phi(variant, norm(z)) + a * y + e
    });
    let slope = rho_slope(a);
    let lambda = c.abs();
    // phi(x) <= x for Min, phi(x) <= x + 1/4 for Max
    let offset = match variant {
        UniformVariant::Min => 0.0,
        UniformVariant::Max => 0.25 * c.abs(),
    };
    let mut hyps = vec![H1, H1s, H2, H2w, H3, H3s, H4, H4s, H4w, HH, A, B];
    if variant == UniformVariant::Min {
        hyps.push(H2s);
    }
    let tag = match variant {
        UniformVariant::Min => "uniform_z_min",
        UniformVariant::Max => "uniform_z_max",
    };
    let mut g = GeneratorSpec::new(format!("{tag}({c},{a},{e})"), dim, driver).with_hypotheses(hyps);
    g.rho = Some(Modulus::linear(ModulusKind::Osgood, slope));
    g.phi = Some(Modulus::new(
        ModulusKind::Continuity,
        format!("{}*{:?}(sqrt x, x)", c.abs(), variant),
        c.abs(),
        Arc::new(move |x| c.abs() * uniform_phi(variant, x)),
    ));
    g.growth_a = slope.max(c.abs());
    g.monotone_mu = a;
    g.mu = a.abs();
    g.lambda = lambda;
    g.f = Coefficient::Constant(e.abs() + offset);
    g.psi = Some(Arc::new(move |r| a.abs() * r));
    g.bar = Some(LinearBound::new(Coefficient::Constant(e.abs() + offset), a.max(0.0), lambda));
    g.tilde = Some(LinearBound::new(Coefficient::Constant(e.abs() + offset), a.abs(), lambda));
    g.z_growth = ZGrowth {
        offset,
        mu: 0.0,
        below: (-c).max(0.0),
        above: c.max(0.0),
    };
    g
}

/// `g = a y + lambda |z| sin(y) + f_t`.
///
/// Lipschitz in `z`, but the `y`-slope grows with `|z|`, so neither (H1) nor (H4s) holds.
pub fn h2w_sin(a: f64, lambda: f64, f: Coefficient, dim: usize) -> Result<GeneratorSpec> {
    if lambda < 0.0 || !f.is_nonnegative() {
        return Err(LabError::InvalidParameter(
            "h2w_sin needs lambda >= 0 and f >= 0".into(),
        ));
    }
    let fc = f.clone();
    let driver = Arc::new(move |_t: f64, y: f64, z: &[f64], n| {
        a * y + lambda * norm(z) * y.sin() + fc.at(n)
    });
    let mut g = GeneratorSpec::new(format!("h2w_sin({a},{lambda})"), dim, driver)
        .with_hypotheses([H2, H2s, H2w, H3, H3s, H4, H4w, HH, A, B]);
    g.phi = Some(Modulus::linear(ModulusKind::Continuity, lambda));
    g.growth_a = lambda.max(rho_slope(a));
    g.monotone_mu = a;
    g.mu = a.abs();
    g.lambda = lambda;
    g.f = f.clone();
    g.psi = Some(Arc::new(move |r| a.abs() * r));
    g.bar = Some(LinearBound::new(f.clone(), a.max(0.0), lambda));
    g.tilde = Some(LinearBound::new(f, a.abs(), lambda));
    g.z_growth = ZGrowth::lipschitz(lambda);
    Ok(g)
}

/// `g = a y + lambda |z| sin(omega |z|^2) + f_t`.
///
/// Linear growth in `z` without uniform continuity: satisfies (H1), (H2w), (H3), (H4s) but not (H2).
pub fn h2w_zsin(
    a: f64,
    lambda: f64,
    omega: f64,
    f: Coefficient,
    dim: usize,
) -> Result<GeneratorSpec> {
    if lambda < 0.0 || !f.is_nonnegative() {
        return Err(LabError::InvalidParameter(
            "h2w_zsin needs lambda >= 0 and f >= 0".into(),
        ));
    }
    let fc = f.clone();
    let driver = Arc::new(move |_t: f64, y: f64, z: &[f64], n| {
        let r = norm(z);
        a * y + lambda * r * (omega * r * r).sin() + fc.at(n)
    });
    let slope = rho_slope(a);
    let mut g = GeneratorSpec::new(format!("h2w_zsin({a},{lambda},{omega})"), dim, driver)
        .with_hypotheses([H1, H1s, H2w, H3, H3s, H4, H4s, H4w, HH, A, B]);
    g.rho = Some(Modulus::linear(ModulusKind::Osgood, slope));
    g.growth_a = slope;
    g.monotone_mu = a;
    g.mu = a.abs();
    g.lambda = lambda;
    g.f = f.clone();
    g.psi = Some(Arc::new(move |r| a.abs() * r));
    g.bar = Some(LinearBound::new(f.clone(), a.max(0.0), lambda));
    g.tilde = Some(LinearBound::new(f, a.abs(), lambda));
    g.z_growth = ZGrowth::lipschitz(lambda);
    Ok(g)
}

/// Identifiers accepted by [`from_id`], with their parameter names.
pub const LIBRARY: [(&str, &[&str]); 10] = [
    ("zero", &[]),
    ("constant", &["c"]),
    ("linear", &["a", "b", "c"]),
    ("abs_z", &["c", "a", "e"]),
    ("cubic", &["a", "s", "c"]),
    ("osgood_log", &["c", "b", "e"]),
    ("uniform_z_min", &["c", "a", "e"]),
    ("uniform_z_max", &["c", "a", "e"]),
    ("h2w_sin", &["a", "lambda", "f"]),
    ("h2w_zsin", &["a", "lambda", "omega", "f"]),
];

/// Looks up a library driver by identifier. Missing trailing parameters default to 0
/// (`omega` defaults to 1).
pub fn from_id(id: &str, params: &[f64], dim: usize) -> Result<GeneratorSpec> {
    let names = LIBRARY
        .iter()
        .find(|(name, _)| *name == id)
        .map(|(_, p)| *p)
        .ok_or_else(|| LabError::UnknownGenerator(id.to_string()))?;
    if params.len() > names.len() {
        return Err(LabError::InvalidParameter(format!(
            "generator `{id}` takes at most {} parameters ({}), got {}",
            names.len(),
            names.join(", "),
            params.len()
        )));
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(LabError::InvalidParameter(format!(
            "generator `{id}` parameters must be finite"
        )));
    }
    let p = |i: usize| params.get(i).copied().unwrap_or(0.0);
    match id {
        "zero" => Ok(zero(dim)),
        "constant" => Ok(constant(p(0), dim)),
        "linear" => Ok(linear(p(0), p(1), p(2), dim)),
        "abs_z" => Ok(abs_z(p(0), p(1), p(2), dim)),
        "cubic" => cubic(p(0), p(1), p(2), dim),
        "osgood_log" => osgood_log(p(0), p(1), p(2), dim),
        "uniform_z_min" => Ok(uniform_z(p(0), p(1), p(2), UniformVariant::Min, dim)),
        "uniform_z_max" => Ok(uniform_z(p(0), p(1), p(2), UniformVariant::Max, dim)),
        "h2w_sin" => h2w_sin(p(0), p(1), Coefficient::Constant(p(2)), dim),
        "h2w_zsin" => {
            let omega = params.get(2).copied().unwrap_or(1.0);
            h2w_zsin(p(0), p(1), omega, Coefficient::Constant(p(3)), dim)
        }
        _ => unreachable!("library table and dispatch disagree"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::Node;

    #[test]
    fn evaluation_examples() {
        let root = Node::root();
        let minus_y = linear(-1.0, 0.0, 0.0, 1);
        assert_eq!(minus_y.eval(0.0, 2.0, &[0.0], root).unwrap(), -2.0);
        let absz = abs_z(1.0, 0.0, 0.0, 1);
        assert_eq!(absz.eval(0.0, 0.0, &[-3.0], root).unwrap(), 3.0);
        let cub = cubic(1.0, 1.0, 0.0, 1).unwrap();
        let v = cub.eval(0.0, 1.0, &[0.0], root).unwrap();
        assert!((v - (-1.0 + 1f64.sin())).abs() < 1e-15);
    }

    #[test]
    fn dimension_is_checked() {
        let g = linear(1.0, 1.0, 0.0, 2);
        assert!(matches!(
            g.eval(0.0, 0.0, &[1.0], Node::root()),
            Err(LabError::LevelMismatch { expected: 2, got: 1 })
        ));
        assert_eq!(g.eval(0.0, 1.0, &[1.0, 2.0], Node::root()).unwrap(), 4.0);
    }

    #[test]
    fn lookup_by_id() {
        assert!(matches!(from_id("nope", &[], 1), Err(LabError::UnknownGenerator(_))));
        assert!(from_id("linear", &[1.0, 2.0, 3.0, 4.0], 1).is_err());
        let g = from_id("h2w_zsin", &[0.0, 0.5], 1).unwrap();
        let expected = 0.5 * 2.0 * (4.0f64).sin();
        assert!((g.value(0.0, 0.0, &[2.0], Node::root()) - expected).abs() < 1e-15);
        for (id, _) in LIBRARY {
            assert!(from_id(id, &[], 1).is_ok(), "{id}");
        }
    }

    #[test]
    fn uniform_variants() {
        assert_eq!(uniform_phi(UniformVariant::Min, 4.0), 2.0);
        assert_eq!(uniform_phi(UniformVariant::Min, 0.25), 0.25);
        assert_eq!(uniform_phi(UniformVariant::Max, 0.25), 0.5);
        assert_eq!(uniform_phi(UniformVariant::Max, 4.0), 4.0);
    }
}
