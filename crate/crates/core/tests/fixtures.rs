//! The shipped fixture files stay in sync with the built-in constructs and
//! all parse cleanly.

use std::fs;
use std::path::PathBuf;

use selfadapt_core::deltaiot::{deltaiot15, parse_scenario, parse_topology};
use selfadapt_core::engine::parse_model;
use selfadapt_core::healthsvc::{parse_catalog, ServiceCatalog, WorkflowParams};
use selfadapt_core::mape::{default_goals, parse_goals};
use selfadapt_core::verify::{default_stub_suite, parse_properties, parse_stub_scenario};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn read(rel: &str) -> String {
    fs::read_to_string(root().join(rel)).unwrap_or_else(|e| panic!("reading {rel}: {e}"))
}

#[test]
fn default_topology_file_matches_the_builtin() {
    let parsed = parse_topology(&read("fixtures/topology_default.toml")).unwrap();
    assert_eq!(parsed, deltaiot15());
}

#[test]
fn scenario_files_parse_against_the_default_topology() {
    let t = deltaiot15();
    for file in
        ["fixtures/scenario_default.toml", "fixtures/scenario_snr_drift.toml", "fixtures/scenario_blackout.toml"]
    {
        let scenario = parse_scenario(&read(file), &t)
            .unwrap_or_else(|e| panic!("{file}: {e}"));
        assert_eq!(scenario.initial.load_probability.len(), t.mote_count());
    }
}

#[test]
fn goals_file_matches_the_default_goals() {
    assert_eq!(parse_goals(&read("fixtures/goals_default.toml")).unwrap(), default_goals());
}

#[test]
fn health_catalog_file_matches_the_builtin() {
    let (catalog, params) = parse_catalog(&read("fixtures/health_catalog_default.toml")).unwrap();
    assert_eq!(catalog, ServiceCatalog::default_fixture());
    assert_eq!(params, WorkflowParams::default());
}

#[test]
fn stub_scenario_files_match_the_builtin_suite() {
    let suite = default_stub_suite();
    let files = [
        ("fixtures/stubs/adaptation_needed.toml", "adaptation-needed"),
        ("fixtures/stubs/no_adaptation.toml", "no-adaptation"),
        ("fixtures/stubs/partial_verification.toml", "partial-verification"),
        ("fixtures/stubs/none_satisfying.toml", "none-satisfying"),
        ("fixtures/stubs/uncertain_probe.toml", "uncertain-probe"),
    ];
    assert_eq!(files.len(), suite.len());
    for (file, name) in files {
        let parsed = parse_stub_scenario(&read(file)).unwrap_or_else(|e| panic!("{file}: {e}"));
        let builtin = suite.iter().find(|s| s.name == name).expect("suite contains scenario");
        assert_eq!(&parsed, builtin, "{file} drifted from the built-in scenario");
    }
}

#[test]
fn update_package_file_parses() {
    let (pkg, _) = selfadapt_core::evolve::parse_package(&read("fixtures/update_latency.toml")).unwrap();
    assert_eq!(pkg.name, "latency-goal");
    assert_eq!(pkg.models, vec!["latency".to_string()]);
}

#[test]
fn anm_fixtures_parse_and_match_their_generators() {
    use selfadapt_core::deltaiot::{min_power_for_link, NetworkSettings, UncertaintyState};
    use selfadapt_core::qmodels::anm;
    use selfadapt_core::verify::{compose_model, Fault};

    for file in [
        "models/fair_coin.anm",
        "models/packet_loss_default.anm",
        "models/energy_default.anm",
        "models/latency_default.anm",
        "models/mape_default.anm",
    ] {
        parse_model(&read(file)).unwrap_or_else(|e| panic!("{file}: {e}"));
    }

    // the generated fixtures reproduce bit-identically from their inputs
    let t = deltaiot15();
    let mut settings = NetworkSettings::failsafe(&t);
    for (i, link) in t.links.iter().enumerate() {
        settings.power[i] = min_power_for_link(link.alpha, link.beta);
    }
    for m in t.split_motes() {
        let p = t.parent_links(m);
        settings.distribution[p[0]] = 60;
        settings.distribution[p[1]] = 40;
    }
    let u = UncertaintyState::baseline(&t, 0.5);
    let strip_header = |text: &str| -> String {
        text.lines().filter(|l| !l.starts_with("//")).collect::<Vec<_>>().join("\n") + "\n"
    };
    assert_eq!(
        strip_header(&read("models/packet_loss_default.anm")),
        anm::packet_loss_source(&t, &settings, &u).unwrap()
    );
    assert_eq!(strip_header(&read("models/energy_default.anm")), anm::energy_source(&t, &settings, &u));
    assert_eq!(
        strip_header(&read("models/latency_default.anm")),
        anm::latency_source(&t, &settings, &u)
    );
    let suite = default_stub_suite();
    assert_eq!(
        strip_header(&read("models/mape_default.anm")),
        compose_model(&suite[0], &default_goals(), Fault::None).unwrap()
    );
}

#[test]
fn props_file_parses_against_the_composed_model() {
    use selfadapt_core::verify::{compose_model, Fault};
    let suite = default_stub_suite();
    let net =
        parse_model(&compose_model(&suite[0], &default_goals(), Fault::None).unwrap()).unwrap();
    let props = parse_properties(&read("fixtures/props/mape_props.toml"), &net).unwrap();
    assert_eq!(props.len(), 3);
}
