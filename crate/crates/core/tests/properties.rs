//! Structural invariants of the tree calculus, the solvers and the driver regularizations.

use proptest::prelude::*;
use rbsde_core::bsde::{solve_bsde, Forcing, ScenarioConfig, SchemeConfig};
use rbsde_core::generators::library::{abs_z, linear, uniform_z, zero, UniformVariant};
use rbsde_core::generators::{inf_convolution, sup_convolution, GeneratorSpec};
use rbsde_core::lattice::{solve_bsde_lattice, Lattice};
use rbsde_core::rbsde::{penalization_sweep, solve_reflected_projection};
use rbsde_core::tree::{martingale_representation, sp_norm, AdaptedProcess, Node, NormParams, TreeModel};

fn leaves(tree: &TreeModel, coef: &[f64]) -> Vec<f64> {
    tree.brownian()
        .terminal()
        .iter()
        .enumerate()
        .map(|(i, b)| coef[0] + coef[1] * b + coef[2] * (coef[3] * b).sin() + 0.01 * (i % 5) as f64)
        .collect()
}

fn coefficients() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 4)
}

fn barrier_below(tree: TreeModel, xi: &[f64], shift: f64) -> AdaptedProcess {
    let b = tree.brownian();
    let n = tree.depth();
    AdaptedProcess::from_fn(tree, n + 1, |node| {
        let l = shift - 0.5 * b.at(node).abs();
        if node.level == n {
            l.min(xi[node.index])
        } else {
            l
        }
    })
}

fn max_excess(a: &AdaptedProcess, b: &AdaptedProcess) -> f64 {
    a.sub(b).unwrap().max_over_nodes(|v| v)
}

/// Drivers whose explicit scheme is monotone for `N >= 4` on the unit horizon.
fn monotone_driver() -> impl Strategy<Value = GeneratorSpec> {
    prop_oneof![
        (-0.5f64..0.5, -1.0f64..1.0, -0.5f64..0.5).prop_map(|(a, b, c)| linear(a, b, c, 1)),
        (0.0f64..1.0, -0.5f64..0.5, -0.5f64..0.5).prop_map(|(c, a, e)| abs_z(c, a, e, 1)),
        (0.0f64..0.5, -0.5f64..0.5, -0.5f64..0.5).prop_map(|(c, a, e)| uniform_z(c, a, e, UniformVariant::Min, 1)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn conditioning_twice_equals_conditioning_once(depth in 1usize..10, dim in 1usize..3, coef in coefficients()) {
        prop_assume!(depth * dim <= 12);
        let tree = TreeModel::new(1.0, depth, dim).unwrap();
        let x: Vec<f64> = (0..tree.leaves()).map(|i| coef[0] + coef[1] * (i as f64 * coef[3]).cos()).collect();
        for k in 0..depth {
            let fine = tree.condition_leaves(&x, k + 1).unwrap();
            let twice = tree.conditional_expectation(&fine, k).unwrap();
            let once = tree.condition_leaves(&x, k).unwrap();
            for (a, b) in twice.iter().zip(&once) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
        prop_assert!((tree.condition_leaves(&x, 0).unwrap()[0] - tree.expectation(&x)).abs() <= 1e-12);
    }

    #[test]
    fn representation_rebuilds_every_leaf(depth in 1usize..10, coef in coefficients()) {
        let tree = TreeModel::new(1.5, depth, 1).unwrap();
        let xi = leaves(&tree, &coef);
        let (y, z) = martingale_representation(tree, &xi).unwrap();
        for k in 0..depth {
            let next = y.level(k + 1);
            for i in 0..tree.nodes(k) {
                for c in 0..2 {
                    let rebuilt = y.value(k, i) + z.value(k, i) * tree.increment(c, 0);
                    prop_assert!((rebuilt - next[tree.child(i, c)]).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn running_supremum_norm_grows_with_exponent(depth in 1usize..9, coef in coefficients()) {
        let tree = TreeModel::new(1.0, depth, 1).unwrap();
        let y = AdaptedProcess::martingale_of(tree, &leaves(&tree, &coef)).unwrap();
        let ps = [1.1, 1.5, 2.0, 3.0, 5.0];
        let norms: Vec<f64> = ps.iter().map(|&p| sp_norm(&y, NormParams::new(p).unwrap())).collect();
        for w in norms.windows(2) {
            prop_assert!(w[0] <= w[1] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn ordered_data_give_ordered_solutions(
        depth in 4usize..10,
        g in monotone_driver(),
        coef in coefficients(),
        dxi in 0.0f64..0.5,
        dc in 0.0f64..0.5,
        with_barrier in any::<bool>(),
    ) {
        let tree = TreeModel::new(1.0, depth, 1).unwrap();
        let xi1 = leaves(&tree, &coef);
        let xi2: Vec<f64> = xi1.iter().map(|x| x + dxi).collect();
        let inc = AdaptedProcess::constant(tree, depth, dc * tree.step());
        let mut s1 = ScenarioConfig::new(tree, xi1.clone(), g.clone()).unwrap();
        let mut s2 = ScenarioConfig::new(tree, xi2, g)
            .unwrap()
            .with_forcing(Forcing::from_increments(inc).unwrap())
            .unwrap();
        if with_barrier {
            let l = barrier_below(tree, &xi1, coef[0]);
            s1 = s1.with_barrier(l.clone()).unwrap();
            s2 = s2.with_barrier(l).unwrap();
        }
        let (y1, y2) = if with_barrier {
            (solve_reflected_projection(&s1).unwrap().y, solve_reflected_projection(&s2).unwrap().y)
        } else {
            (solve_bsde(&s1).unwrap().y, solve_bsde(&s2).unwrap().y)
        };
        prop_assert!(max_excess(&y1, &y2) <= 1e-10);
    }

    #[test]
    fn penalized_family_rises_to_projection(depth in 4usize..9, g in monotone_driver(), coef in coefficients()) {
        let tree = TreeModel::new(1.0, depth, 1).unwrap();
        let xi = leaves(&tree, &coef);
        let sc = ScenarioConfig::new(tree, xi.clone(), g)
            .unwrap()
            .with_barrier(barrier_below(tree, &xi, coef[1].abs()))
            .unwrap();
        let schedule: Vec<f64> = (0..8).map(|j| 2f64.powi(j)).collect();
        let rep = penalization_sweep(&sc, &schedule).unwrap();
        prop_assert!(rep.monotone_violation <= 1e-12);
        prop_assert!(rep.domination_violation <= 1e-12);
        for s in &rep.solutions {
            prop_assert!(max_excess(&s.y, &rep.reference.y) <= 1e-12);
        }
    }

    #[test]
    fn zero_driver_reflection_is_snell_envelope(depth in 1usize..10, coef in coefficients()) {
        let tree = TreeModel::new(1.0, depth, 1).unwrap();
        let xi = leaves(&tree, &coef);
        let l = barrier_below(tree, &xi, coef[2]);
        let sc = ScenarioConfig::new(tree, xi.clone(), zero(1)).unwrap().with_barrier(l.clone()).unwrap();
        let y = solve_reflected_projection(&sc).unwrap().y;
        let mut u = xi;
        for k in (0..depth).rev() {
            u = u.chunks(2).zip(l.level(k)).map(|(c, l)| (0.5 * (c[0] + c[1])).max(*l)).collect();
            for (a, b) in u.iter().zip(y.level(k)) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn convolutions_bracket_and_tighten(
        g in monotone_driver(),
        y in -2.0f64..2.0,
        z in -3.0f64..3.0,
        n in 1.0f64..50.0,
    ) {
        let node = Node::root();
        let base = g.value(0.0, y, &[z], node);
        let k1 = n + 2.0 * g.lambda;
        let k2 = 2.0 * k1;
        let lo1 = inf_convolution(&g, k1, 0.0, y, &[z], node).unwrap();
        let lo2 = inf_convolution(&g, k2, 0.0, y, &[z], node).unwrap();
        let hi1 = sup_convolution(&g, k1, 0.0, y, &[z], node).unwrap();
        let hi2 = sup_convolution(&g, k2, 0.0, y, &[z], node).unwrap();
        prop_assert!(lo1 <= lo2 + 1e-12 && lo2 <= base + 1e-12);
        prop_assert!(base <= hi2 + 1e-12 && hi2 <= hi1 + 1e-12);
        let dz = 1e-3;
        let shifted = inf_convolution(&g, k1, 0.0, y, &[z + dz], node).unwrap();
        prop_assert!((shifted - lo1).abs() <= k1 * dz + 1e-8);
    }

    #[test]
    fn lattice_recombination_matches_full_tree(depth in 1usize..12, a in -0.5f64..0.5, b in -1.0f64..1.0, c in -1.0f64..1.0) {
        prop_assume!(1.0 + a / depth as f64 >= (b.abs()) / (depth as f64).sqrt());
        let tree = TreeModel::new(1.0, depth, 1).unwrap();
        let g = linear(a, b, c, 1);
        let terminal = |x: f64| (x - 0.2).max(0.0) + 0.3 * x * x;
        let xi: Vec<f64> = tree.brownian().terminal().iter().map(|&x| terminal(x)).collect();
        let sc = ScenarioConfig::new(tree, xi, g.clone()).unwrap();
        let on_tree = solve_bsde(&sc).unwrap();
        let lat = Lattice::new(1.0, depth).unwrap();
        let on_lattice = solve_bsde_lattice(&lat, terminal, &g, &SchemeConfig::explicit(), None).unwrap();
        prop_assert!((on_tree.y0() - on_lattice.y0()).abs() <= 1e-12 * on_tree.y0().abs().max(1.0));
    }
}
