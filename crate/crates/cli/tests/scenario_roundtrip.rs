//! Scenario files and expressions survive a print/parse cycle unchanged.

use std::path::Path;

use proptest::prelude::*;
use rbsde_cli::expr::{parse, PathContext};
use rbsde_cli::scenario_file::ScenarioFile;

fn atom() -> impl Strategy<Value = String> {
    prop_oneof![
        (0u32..50).prop_map(|v| format!("{}", v as f64 / 4.0)),
        Just("B".to_string()),
        Just("t".to_string()),
        Just("T".to_string()),
        Just("supB".to_string()),
        Just("infB".to_string()),
        Just("intB".to_string()),
    ]
}

fn expression() -> impl Strategy<Value = String> {
    atom().prop_recursive(4, 32, 3, |inner| {
        prop_oneof![
            (inner.clone(), prop::sample::select(vec!["+", "-", "*"]), inner.clone())
                .prop_map(|(a, op, b)| format!("({a}) {op} ({b})")),
            inner.clone().prop_map(|a| format!("-({a})")),
            (prop::sample::select(vec!["abs", "sin", "cos", "pos", "neg"]), inner.clone())
                .prop_map(|(f, a)| format!("{f}({a})")),
            (prop::sample::select(vec!["max", "min"]), inner.clone(), inner)
                .prop_map(|(f, a, b)| format!("{f}({a}, {b})")),
        ]
    })
}

fn context(b: &[f64]) -> PathContext<'_> {
    PathContext {
        t: 0.3,
        horizon: 1.0,
        step: 0.1,
        b,
        sup_b: b[0].abs() + 0.2,
        inf_b: -b[0].abs() - 0.1,
        int_b: 0.05 * b[0],
    }
}

proptest! {
    #[test]
    fn canonical_expression_reparses_identically(src in expression(), b in -2.0f64..2.0) {
        let e = parse(&src, 1).unwrap();
        let printed = e.to_string();
        let again = parse(&printed, 1).unwrap();
        prop_assert_eq!(&printed, &again.to_string());
        let bs = [b];
        let ctx = context(&bs);
        let (x, y) = (e.eval(&ctx), again.eval(&ctx));
        prop_assert!(x == y || (x.is_nan() && y.is_nan()));
    }

    #[test]
    fn scenario_file_round_trips(
        terminal in expression(),
        barrier in prop::option::of(expression()),
        depth in 1usize..12,
        c in -1.0f64..1.0,
        fixed in any::<bool>(),
        schedule in prop::option::of(prop::collection::vec(1u32..100, 1..5)),
    ) {
        let mut text = format!(
            "[tree]\nT = 1.0\nN = {depth}\n\n[terminal]\nexpr = \"{terminal}\"\n\n[generator]\nid = \"linear\"\nparams = [0.1, 0.2, {c}]\n"
        );
        if let Some(b) = &barrier {
            text.push_str(&format!("\n[barrier]\nexpr = \"{b}\"\n"));
        }
        if fixed {
            text.push_str("\n[scheme]\nkind = \"FIXED_POINT\"\n");
        }
        if let Some(s) = &schedule {
            let items: Vec<String> = s.iter().map(|v| v.to_string()).collect();
            text.push_str(&format!("\n[run]\nschedule = [{}]\nside = \" Max \"\n", items.join(", ")));
        }
        let file = Path::new("prop.toml");
        let first = ScenarioFile::parse_str(file, &text).unwrap();
        let second = ScenarioFile::parse_str(file, &first.to_toml()).unwrap();
        prop_assert_eq!(&first, &second);
        prop_assert_eq!(first.to_toml(), second.to_toml());
    }
}
