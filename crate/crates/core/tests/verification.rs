//! Design-time verification end to end: the shipped stub suite against the
//! composed loop models, fault injection, coverage, and the differential
//! between the native loop and its model form.

use selfadapt_core::engine::{parse_model, simulate, NetState};
use selfadapt_core::mape::default_goals;
use selfadapt_core::rng::StreamRng;
use selfadapt_core::verify::{
    compose_model, default_stub_suite, explore, reachable_keys, run_model_stub_loop,
    run_native_stub_loop, standard_properties, state_key, ExploreLimits, Fault,
};

#[test]
fn shipped_suite_satisfies_all_properties() {
    let goals = default_goals();
    for scenario in default_stub_suite() {
        let src = compose_model(&scenario, &goals, Fault::None).unwrap();
        let net = parse_model(&src)
            .unwrap_or_else(|e| panic!("{}: composed model does not parse: {e}", scenario.name));
        let props = standard_properties(&net, &goals).unwrap();
        let exploration = explore(&net, &props, &ExploreLimits::default()).unwrap();
        for verdict in &exploration.verdicts {
            assert!(
                verdict.holds,
                "{}: property `{}` failed:\n{}",
                scenario.name,
                verdict.property,
                verdict.counterexample.as_deref().unwrap_or_default().join("\n")
            );
        }
        assert!(
            exploration.states_explored < 1_000_000,
            "{} blew the desk-scale budget",
            scenario.name
        );
    }
}

#[test]
fn faulted_planner_produces_a_counterexample() {
    let goals = default_goals();
    let scenario = &default_stub_suite()[0];
    let src = compose_model(scenario, &goals, Fault::PlannerPicksWorst).unwrap();
    let net = parse_model(&src).unwrap();
    let props = standard_properties(&net, &goals).unwrap();
    let exploration = explore(&net, &props, &ExploreLimits::default()).unwrap();
    let incorrect = exploration
        .verdicts
        .iter()
        .find(|v| v.property == "no-incorrect-adaptation")
        .expect("property present");
    assert!(!incorrect.holds, "fault injection must be detected");
    let trace = incorrect.counterexample.as_ref().expect("counterexample trace");
    assert!(trace.len() > 2);
    assert!(
        trace.iter().any(|l| l.contains("Planner")),
        "trace should pass through the planner: {trace:?}"
    );
}

#[test]
fn mape_locations_fully_covered_by_the_suite() {
    let goals = default_goals();
    let mut visited: std::collections::HashMap<String, std::collections::HashSet<String>> =
        std::collections::HashMap::new();
    let mut totals: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
    for scenario in default_stub_suite() {
        let src = compose_model(&scenario, &goals, Fault::None).unwrap();
        let net = parse_model(&src).unwrap();
        let exploration = explore(&net, &[], &ExploreLimits::default()).unwrap();
        for automaton in ["Monitor", "Analyzer", "Planner", "Executor"] {
            let c = exploration.coverage_of(automaton).unwrap();
            totals.insert(automaton.to_string(), c.locations_total);
            let seen = visited.entry(automaton.to_string()).or_default();
            let net_automaton =
                &net.automata[net.automaton_index(automaton).expect("automaton exists")];
            for (i, loc) in net_automaton.locations.iter().enumerate() {
                let was_visited = !c.unvisited_locations.contains(&loc.name);
                if was_visited {
                    seen.insert(loc.name.clone());
                }
                let _ = i;
            }
        }
    }
    for (automaton, total) in totals {
        let seen = visited.get(&automaton).map_or(0, |s| s.len());
        assert_eq!(
            seen, total,
            "{automaton}: suite covers {seen}/{total} locations; unvisited: {:?}",
            visited.get(&automaton)
        );
    }
}

#[test]
fn native_loop_and_model_form_agree_on_every_scenario() {
    let goals = default_goals();
    for scenario in default_stub_suite() {
        if scenario.samples.iter().any(|s| s.observed_alt.is_some()) {
            // nondeterministic scenarios are exercised by exploration, not
            // by the trace differential
            continue;
        }
        let native = run_native_stub_loop(&scenario, &goals).unwrap();
        let model = run_model_stub_loop(&scenario, &goals, 42).unwrap();
        assert_eq!(
            native, model,
            "decision traces diverge on scenario `{}`",
            scenario.name
        );
    }
}

#[test]
fn scenario_expectations_hold() {
    // spot-check the scripted intent of the shipped suite
    let goals = default_goals();
    let suite = default_stub_suite();

    let adaptation = run_native_stub_loop(&suite[0], &goals).unwrap();
    assert!(adaptation[0].analysis_ran && adaptation[0].adaptation_needed);
    assert_eq!(adaptation[0].chosen, Some(3), "filter-then-minimize winner");
    assert!(adaptation[0].plan_nonempty);
    assert!(adaptation[1].analysis_ran, "settings changed, so analysis reruns");
    assert!(!adaptation[1].adaptation_needed);
    assert_eq!(adaptation[1].chosen, Some(3));
    assert!(!adaptation[1].plan_nonempty, "winner equals current: empty plan");

    let steady = run_native_stub_loop(&suite[1], &goals).unwrap();
    assert!(steady[0].analysis_ran, "first probe always analyzes");
    assert_eq!(steady[0].chosen, Some(2));
    assert!(!steady[1].analysis_ran, "identical repeat skips analysis");

    let partial = run_native_stub_loop(&suite[2], &goals).unwrap();
    assert_eq!(partial[0].chosen, Some(2), "partial results stay usable");

    let hopeless = run_native_stub_loop(&suite[3], &goals).unwrap();
    assert!(hopeless[0].failsafe);
    assert_eq!(hopeless[0].chosen, None);
    assert!(hopeless[0].plan_nonempty, "failsafe plan carries a step");
    assert_eq!(hopeless[1].chosen, Some(4), "recovers from failsafe");
}

#[test]
fn seeded_simulation_stays_inside_the_explored_set() {
    // the uncertain-probe scenario branches; every simulated path must visit
    // only explored states
    let goals = default_goals();
    let scenario = default_stub_suite().into_iter().find(|s| s.name == "uncertain-probe").unwrap();
    let src = compose_model(&scenario, &goals, Fault::None).unwrap();
    let net = parse_model(&src).unwrap();
    let explored = reachable_keys(&net, &ExploreLimits::default()).unwrap();
    let done = net.locate("Probe", "ScenarioDone").unwrap();
    for seed in 0..50 {
        let mut rng = StreamRng::new(seed);
        let trace = simulate(&net, 4, &|_, st: &NetState| st.is_at(done.0, done.1), &mut rng)
            .unwrap();
        for state in &trace.states {
            assert!(
                explored.contains(&state_key(state)),
                "seed {seed}: simulation reached a state outside the explored set"
            );
        }
    }
}

#[test]
fn exploration_is_deterministic() {
    let goals = default_goals();
    let scenario = &default_stub_suite()[0];
    let src = compose_model(scenario, &goals, Fault::None).unwrap();
    let net = parse_model(&src).unwrap();
    let props = standard_properties(&net, &goals).unwrap();
    let a = explore(&net, &props, &ExploreLimits::default()).unwrap();
    let b = explore(&net, &props, &ExploreLimits::default()).unwrap();
    assert_eq!(a.states_explored, b.states_explored);
    assert_eq!(a.verdicts, b.verdicts);
}
