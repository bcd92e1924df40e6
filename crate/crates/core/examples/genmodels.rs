// Regenerate the checked-in .anm fixtures under models/ and the standard
// properties file. Run from the workspace root:
//   cargo run -p selfadapt-core --example genmodels
use std::fs;

use selfadapt_core::deltaiot::{deltaiot15, min_power_for_link, NetworkSettings, UncertaintyState};
use selfadapt_core::mape::default_goals;
use selfadapt_core::qmodels::anm;
use selfadapt_core::verify::{compose_model, default_stub_suite, stub_property_text, Fault};

fn main() {
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
    let header = "// Generated for the default 15-node fixture (min powers, 60/40 splits,\n// event probability 0.5). Regenerate with: cargo run -p selfadapt-core --example genmodels\n";
    fs::write(
        "models/packet_loss_default.anm",
        format!("{header}{}", anm::packet_loss_source(&t, &settings, &u).unwrap()),
    )
    .unwrap();
    fs::write(
        "models/energy_default.anm",
        format!("{header}{}", anm::energy_source(&t, &settings, &u)),
    )
    .unwrap();
    fs::write(
        "models/latency_default.anm",
        format!("{header}{}", anm::latency_source(&t, &settings, &u)),
    )
    .unwrap();
    let goals = default_goals();
    let suite = default_stub_suite();
    let composed = compose_model(&suite[0], &goals, Fault::None).unwrap();
    fs::write(
        "models/mape_default.anm",
        format!("// Feedback loop composed with the `adaptation-needed` stub scenario\n// under the default goals. Regenerate with: cargo run -p selfadapt-core --example genmodels\n{composed}"),
    )
    .unwrap();
    fs::write("fixtures/props/mape_props.toml", stub_property_text(&goals).unwrap()).unwrap();
    println!("regenerated models/ and fixtures/props/");
}
