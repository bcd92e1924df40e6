//! Discrete-stochastic automata: the `.anm` modeling language, its parser,
//! and the execution engine that runs both the feedback-loop models and the
//! predictive quality models.
//!
//! The language is documented in `docs/model-format.md`. Networks are
//! immutable after parsing and safe to share across threads; each simulation
//! run owns its [`NetState`] and rng stream.

pub mod ast;
pub mod eval;
pub mod lexer;
pub mod parser;
pub mod pretty;
pub mod sim;

pub use ast::{AutomatonNetwork, Expr, Value};
pub use eval::{EvalCtx, RuntimeError};
pub use lexer::Diagnostic;
pub use parser::parse_model;
pub use pretty::pretty_print;
pub use sim::{
    enumerate_moves, run_to_stop, simulate, step, Move, NetState, RunOutcome, SimError,
    StepReport, Trace,
};

use std::collections::HashMap;

/// Parse a standalone expression against an existing network's symbols.
/// Used by tests and by the property language of the verifier.
pub fn parse_expression(source: &str, net: &AutomatonNetwork) -> Result<Expr, Diagnostic> {
    parser::parse_expr_in(source, net)
}

/// Stable content hash of a network's canonical form.
pub fn network_hash(net: &AutomatonNetwork) -> u64 {
    crate::stats::fnv1a64(pretty_print(net).as_bytes())
}

/// Collect per-automaton `(visited, total)` location names, for diagnostics.
pub fn location_names(net: &AutomatonNetwork) -> HashMap<String, Vec<String>> {
    net.automata
        .iter()
        .map(|a| (a.name.clone(), a.locations.iter().map(|l| l.name.clone()).collect()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;
    use ast::*;

    fn eval_str(net: &AutomatonNetwork, expr: &str) -> Result<Value, RuntimeError> {
        let e = parse_expression(expr, net).expect("expression parses");
        let store = net.initial_store();
        EvalCtx::new(net, &store).eval(&e)
    }

    #[test]
    fn minimal_model_parses() {
        let net = parse_model("automaton A { init location Only; }").unwrap();
        assert_eq!(net.automata.len(), 1);
        assert_eq!(net.automata[0].edges.len(), 0);
        assert_eq!(net.automata[0].locations.len(), 1);
    }

    #[test]
    fn out_of_bounds_initializer_rejected() {
        let err = parse_model("int[0,5] x = 7;").unwrap_err();
        assert!(err.message.contains("initializer out of bounds"), "{err}");
    }

    #[test]
    fn duplicate_channel_rejected() {
        let err = parse_model("chan a; chan a;").unwrap_err();
        assert!(err.message.contains("duplicate"), "{err}");
    }

    #[test]
    fn undeclared_identifier_rejected() {
        let err = parse_model("automaton A { init location L; edge L -> L { guard: zz > 0; } }")
            .unwrap_err();
        assert!(err.message.contains("undeclared identifier"), "{err}");
        assert!(err.line >= 1 && err.col >= 1);
    }

    #[test]
    fn division_by_constant_zero_is_parse_error() {
        let err = parse_model("int[0,9] x = 1; automaton A { init location L; edge L -> L { do: x = 1 / 0; } }")
            .unwrap_err();
        assert!(err.message.contains("division by constant zero"), "{err}");
    }

    #[test]
    fn arithmetic_precedence() {
        let net = parse_model("").unwrap();
        assert_eq!(eval_str(&net, "1+2*3").unwrap(), Value::Int(7));
        assert_eq!(eval_str(&net, "(1+2)*3").unwrap(), Value::Int(9));
        assert_eq!(eval_str(&net, "7/2").unwrap(), Value::Int(3));
        assert_eq!(eval_str(&net, "7.0/2").unwrap(), Value::Real(3.5));
        assert_eq!(eval_str(&net, "1 < 2 && 2 < 3").unwrap(), Value::Int(1));
    }

    #[test]
    fn ternary_failure_rate_shape() {
        // the piecewise linear shape used by the link models, at snr = -10
        let net = parse_model("real x = -10.0;").unwrap();
        let v = eval_str(&net, "x >= 0 ? 0 : -x/20").unwrap();
        assert_eq!(v, Value::Real(0.5));
    }

    #[test]
    fn array_indexing() {
        let net = parse_model("int[0,9] a[3] = {4,5,6};").unwrap();
        assert_eq!(eval_str(&net, "a[2]").unwrap(), Value::Int(6));
        assert!(matches!(
            eval_str(&net, "a[3]"),
            Err(RuntimeError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn runtime_division_by_zero() {
        let net = parse_model("int[0,5] x = 0;").unwrap();
        assert_eq!(eval_str(&net, "3 / x"), Err(RuntimeError::DivisionByZero));
    }

    #[test]
    fn helper_functions_run() {
        let src = r#"
            func int clampsum(int a, int b) {
                var int s = a + b;
                if (s > 10) { s = 10; }
                return s;
            }
            func real mean3(real a, real b, real c) {
                var real acc = 0.0;
                acc = a + b + c;
                return acc / 3;
            }
            func int sumto(int n) {
                var int acc = 0;
                for i in 0..5 { if (i < n) { acc = acc + i; } }
                return acc;
            }
        "#;
        let net = parse_model(src).unwrap();
        assert_eq!(eval_str(&net, "clampsum(4, 9)").unwrap(), Value::Int(10));
        assert_eq!(eval_str(&net, "mean3(1.0, 2.0, 6.0)").unwrap(), Value::Real(3.0));
        assert_eq!(eval_str(&net, "sumto(4)").unwrap(), Value::Int(6));
    }

    #[test]
    fn functions_cannot_touch_globals_or_recurse() {
        let err = parse_model("int[0,5] g = 0; func int f() { g = 1; return 0; }").unwrap_err();
        assert!(err.message.contains("only assign to their locals"), "{err}");
        let err = parse_model("func int f(int n) { return f(n); }").unwrap_err();
        assert!(err.message.contains("undeclared function"), "{err}");
    }

    fn two_edge_coin() -> AutomatonNetwork {
        parse_model(
            r#"
            int[0,1] outcome = 0;
            automaton Coin {
                init location Flip;
                location Done;
                edge Flip -> Done { weight: 1; do: outcome = 0; }
                edge Flip -> Done { weight: 1; do: outcome = 1; }
            }
            "#,
        )
        .unwrap()
    }

    #[test]
    fn single_enabled_edge_fires() {
        let net = parse_model(
            r#"
            int[0,9] x = 0;
            automaton A {
                init location S;
                location T;
                edge S -> T { do: x = 5; }
            }
            "#,
        )
        .unwrap();
        let mut state = NetState::initial(&net);
        let mut rng = StreamRng::new(1);
        let report = step(&net, &mut state, &mut rng).unwrap();
        assert_eq!(report, StepReport::Fired(vec![(0, 0)]));
        assert_eq!(state.value(&net, "x"), Some(Value::Int(5)));
        assert_eq!(state.locations[0], 1);
    }

    #[test]
    fn tick_when_nothing_enabled() {
        let net = parse_model("automaton A { init location Only; }").unwrap();
        let mut state = NetState::initial(&net);
        let mut rng = StreamRng::new(1);
        let report = step(&net, &mut state, &mut rng).unwrap();
        assert_eq!(report, StepReport::Tick);
        assert_eq!(state.ticks, 1);
        assert_eq!(state.locations[0], 0);
    }

    #[test]
    fn fair_branch_split_within_two_percent() {
        let net = two_edge_coin();
        let mut ones = 0u32;
        let root = StreamRng::new(2024);
        for i in 0..10_000u64 {
            let mut rng = root.split(i);
            let trace = simulate(&net, 1, &|n, s| s.is_at(0, n.locate("Coin", "Done").unwrap().1), &mut rng)
                .unwrap();
            if trace.final_state().value(&net, "outcome") == Some(Value::Int(1)) {
                ones += 1;
            }
        }
        let frac = ones as f64 / 10_000.0;
        assert!((frac - 0.5).abs() < 0.02, "split {frac}");
    }

    #[test]
    fn horizon_zero_yields_initial_only() {
        let net = two_edge_coin();
        let mut rng = StreamRng::new(3);
        let trace = simulate(&net, 0, &|_, _| false, &mut rng).unwrap();
        assert_eq!(trace.len(), 1);
    }

    #[test]
    fn same_seed_identical_traces() {
        let net = two_edge_coin();
        let run = |seed: u64| {
            let mut rng = StreamRng::new(seed);
            simulate(&net, 5, &|_, _| false, &mut rng).unwrap()
        };
        let a = run(77);
        let b = run(77);
        assert_eq!(a.states.len(), b.states.len());
        for (sa, sb) in a.states.iter().zip(&b.states) {
            assert_eq!(sa, sb);
        }
    }

    #[test]
    fn binary_sync_fires_pairs_with_sender_first() {
        let net = parse_model(
            r#"
            int[0,9] x = 0;
            int[0,9] y = 0;
            chan c;
            automaton S {
                init location A;
                location B;
                edge A -> B { sync: c!; do: x = 3; }
            }
            automaton R {
                init location A;
                location B;
                edge A -> B { sync: c?; do: y = x; }
            }
            "#,
        )
        .unwrap();
        let mut state = NetState::initial(&net);
        let mut rng = StreamRng::new(4);
        let report = step(&net, &mut state, &mut rng).unwrap();
        assert_eq!(report, StepReport::Fired(vec![(0, 0), (1, 0)]));
        // receiver's update ran after the sender's
        assert_eq!(state.value(&net, "y"), Some(Value::Int(3)));
    }

    #[test]
    fn sender_blocks_without_receiver_on_binary_channel() {
        let net = parse_model(
            r#"
            chan c;
            automaton S {
                init location A;
                location B;
                edge A -> B { sync: c!; }
            }
            "#,
        )
        .unwrap();
        let mut state = NetState::initial(&net);
        let mut rng = StreamRng::new(4);
        assert_eq!(step(&net, &mut state, &mut rng).unwrap(), StepReport::Tick);
    }

    #[test]
    fn broadcast_reaches_all_ready_receivers_and_never_blocks() {
        let net = parse_model(
            r#"
            int[0,9] n = 0;
            broadcast chan b;
            automaton S {
                init location A;
                location B;
                edge A -> B { sync: b!; }
            }
            automaton R1 {
                init location A;
                location B;
                edge A -> B { sync: b?; do: n = n + 1; }
            }
            automaton R2 {
                init location A;
                location B;
                edge A -> B { sync: b?; do: n = n + 1; }
            }
            automaton Deaf {
                init location A;
            }
            "#,
        )
        .unwrap();
        let mut state = NetState::initial(&net);
        let mut rng = StreamRng::new(5);
        let report = step(&net, &mut state, &mut rng).unwrap();
        assert_eq!(
            report,
            StepReport::Fired(vec![(0, 0), (1, 0), (2, 0)])
        );
        assert_eq!(state.value(&net, "n"), Some(Value::Int(2)));

        // with every receiver consumed, the send still fires alone
        let net2 = parse_model(
            r#"
            broadcast chan b;
            automaton S {
                init location A;
                location B;
                edge A -> B { sync: b!; }
            }
            "#,
        )
        .unwrap();
        let mut state2 = NetState::initial(&net2);
        let report2 = step(&net2, &mut state2, &mut rng).unwrap();
        assert_eq!(report2, StepReport::Fired(vec![(0, 0)]));
    }

    #[test]
    fn committed_locations_take_priority() {
        let net = parse_model(
            r#"
            int[0,9] who = 0;
            automaton Urgent {
                init location S;
                committed location C;
                location D;
                edge S -> C { }
                edge C -> D { do: who = 1; }
            }
            automaton Lazy {
                init location S;
                edge S -> S { do: who = 2; }
            }
            "#,
        )
        .unwrap();
        // after Urgent enters C (committed), the next fired edge must be C -> D
        let mut rng = StreamRng::new(6);
        for seed in 0..50u64 {
            let mut rng2 = rng.split(seed);
            let mut state = NetState::initial(&net);
            // force the first step until Urgent reaches C
            loop {
                let committed_now = state.locations[0] == 1;
                let report = step(&net, &mut state, &mut rng2).unwrap();
                if committed_now {
                    assert_eq!(report, StepReport::Fired(vec![(0, 1)]), "committed edge must fire");
                    break;
                }
            }
        }
        let _ = rng.next_u64();
    }

    #[test]
    fn bound_violation_is_an_error_not_a_wrap() {
        let net = parse_model(
            r#"
            int[0,3] x = 3;
            automaton A {
                init location S;
                edge S -> S { do: x = x + 1; }
            }
            "#,
        )
        .unwrap();
        let mut state = NetState::initial(&net);
        let mut rng = StreamRng::new(7);
        let err = step(&net, &mut state, &mut rng).unwrap_err();
        assert!(matches!(err, RuntimeError::BoundViolation { .. }));
    }

    #[test]
    fn guard_groups_by_structural_equality() {
        // two weighted edges with identical guards form one group; the guard
        // being false disables the whole group
        let net = parse_model(
            r#"
            int[0,9] x = 0;
            automaton A {
                init location S;
                location T;
                edge S -> T { guard: x > 4; weight: 1; }
                edge S -> T { guard: x > 4; weight: 3; }
            }
            "#,
        )
        .unwrap();
        assert_eq!(net.automata[0].units[0].len(), 1);
        assert_eq!(net.automata[0].units[0][0].edges.len(), 2);
        let state = NetState::initial(&net);
        assert!(enumerate_moves(&net, &state).unwrap().is_empty());
    }

    #[test]
    fn zero_weight_edges_never_fire() {
        let net = parse_model(
            r#"
            int[0,1] hit = 0;
            automaton A {
                init location S;
                location T;
                edge S -> T { weight: 0; do: hit = 1; }
                edge S -> T { weight: 5; }
            }
            "#,
        )
        .unwrap();
        for seed in 0..200u64 {
            let mut rng = StreamRng::new(seed);
            let mut state = NetState::initial(&net);
            step(&net, &mut state, &mut rng).unwrap();
            assert_eq!(state.value(&net, "hit"), Some(Value::Int(0)));
        }
    }

    #[test]
    fn zero_total_weight_group_rejected() {
        let err = parse_model(
            r#"
            automaton A {
                init location S;
                location T;
                edge S -> T { weight: 0; }
            }
            "#,
        )
        .unwrap_err();
        assert!(err.message.contains("zero total weight"), "{err}");
    }

    #[test]
    fn two_init_locations_rejected() {
        let err = parse_model("automaton A { init location S; init location T; }").unwrap_err();
        assert!(err.message.contains("more than one init"), "{err}");
        let err = parse_model("automaton A { location S; }").unwrap_err();
        assert!(err.message.contains("no init location"), "{err}");
    }

    #[test]
    fn pretty_print_round_trip() {
        let src = r#"
            const int N = 3;
            const real RATE = 0.25;
            int[0,10] x = 2;
            real acc = 0.0;
            int[0,7] arr[3] = {1, 2, 3};
            chan ping;
            broadcast chan all;
            func real scale(real v, int k) {
                var real r = v;
                for i in 0..3 { if (i < k) { r = r * 2; } }
                return r;
            }
            automaton P {
                init location S;
                committed location Mid;
                location Done;
                edge S -> Mid { guard: x > 0 && acc < 5.0; sync: ping!; do: x = x - 1; }
                edge Mid -> Done { weight: 2; do: acc = scale(acc, 1) + RATE; }
                edge Mid -> S { weight: 1; do: arr[x] = N; }
            }
            automaton Q {
                init location S;
                edge S -> S { sync: ping?; }
                edge S -> S { sync: all?; }
            }
            "#;
        let net = parse_model(src).unwrap();
        let printed = pretty_print(&net);
        let reparsed = parse_model(&printed).unwrap_or_else(|e| panic!("reparse failed: {e}\n{printed}"));
        assert_eq!(net, reparsed, "round-tripped network differs");
        // idempotence: printing the reparse gives the same text
        assert_eq!(printed, pretty_print(&reparsed));
    }

    #[test]
    fn deep_nesting_reports_instead_of_overflowing() {
        let mut src = String::from("int[0,1] x = ");
        for _ in 0..10_000 {
            src.push('(');
        }
        src.push('1');
        for _ in 0..10_000 {
            src.push(')');
        }
        src.push(';');
        let err = parse_model(&src).unwrap_err();
        assert!(err.message.contains("nested"), "{err}");
    }
}
