//! Command implementations. Each returns `Ok(true)` for success, `Ok(false)`
//! for a property/validation failure (exit code 1), or an error for
//! operational failures.

use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use selfadapt_core::deltaiot::{
    deltaiot15, min_power_for_link, parse_scenario, parse_topology, NetworkSettings, Scenario,
    Simulator, Topology,
};
use selfadapt_core::engine::parse_model;
use selfadapt_core::evolve::{parse_package, UpdateManager};
use selfadapt_core::healthsvc::{
    analyze_combinations, parse_catalog, HealthAnalysis, ServiceCatalog, WorkflowParams,
};
use selfadapt_core::mape::{
    decision_log_csv, default_goals, parse_goals, select, Comparator, Direction, Goal, Knowledge,
    MapeLoop, RegistryVerifier,
};
use selfadapt_core::qmodels::{EstimatorKind, ModelRegistry, QualityModel};
use selfadapt_core::rng::StreamRng;
use selfadapt_core::smc::{Estimate, MeanOpts};
use selfadapt_core::stats::fnv1a64;
use selfadapt_core::verify::{
    compose_model, explore, parse_properties, parse_stub_scenario, standard_properties,
    ExploreLimits, Fault,
};

use crate::outputs::{
    health_csv, sim_csv, tradeoff_summary_csv, HealthRow, SettingSummary, SimRow,
    TRADEOFF_TIMINGS_HEADER,
};
use crate::Format;

fn read(path: &str) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {path}"))
}

fn load_topology(path: Option<&str>) -> Result<Topology> {
    match path {
        None => Ok(deltaiot15()),
        Some(p) => parse_topology(&read(p)?).with_context(|| format!("topology {p}")),
    }
}

fn load_scenario(path: Option<&str>, topology: &Topology) -> Result<Scenario> {
    match path {
        None => Ok(Scenario::baseline(topology, 0.5)),
        Some(p) => parse_scenario(&read(p)?, topology).with_context(|| format!("scenario {p}")),
    }
}

fn load_goals(path: Option<&str>) -> Result<Vec<Goal>> {
    match path {
        None => Ok(default_goals()),
        Some(p) => parse_goals(&read(p)?).with_context(|| format!("goals {p}")),
    }
}

pub fn check_model(file: &str) -> Result<bool> {
    let text = read(file)?;
    match parse_model(&text) {
        Ok(net) => {
            println!(
                "{file}: ok ({} automata, {} variables, {} channels, {} functions)",
                net.automata.len(),
                net.vars.len(),
                net.channels.len(),
                net.funcs.len()
            );
            Ok(true)
        }
        Err(diag) => {
            eprintln!("{file}: {diag}");
            Ok(false)
        }
    }
}

pub fn sim(
    topology_path: &str,
    scenario_path: Option<&str>,
    cycles: u64,
    seed: u64,
    out: &str,
    format: Format,
    min_power: bool,
) -> Result<bool> {
    let topology = load_topology(Some(topology_path))?;
    let scenario = load_scenario(scenario_path, &topology)?;
    let settings = if min_power {
        let mut s = NetworkSettings::failsafe(&topology);
        for (i, link) in topology.links.iter().enumerate() {
            s.power[i] = min_power_for_link(link.alpha, link.beta);
        }
        s
    } else {
        NetworkSettings::failsafe(&topology)
    };
    let mut sim = Simulator::with_settings(topology, scenario, settings, seed)
        .map_err(|e| anyhow::anyhow!("settings: {e}"))?;
    let rows: Vec<SimRow> = (0..cycles)
        .map(|c| {
            let stats = sim.run_cycle();
            SimRow::new(c, &stats, sim.settings().content_hash())
        })
        .collect();
    let rendered = match format {
        Format::Csv => sim_csv(&rows),
        Format::Json => serde_json::to_string_pretty(&rows)? + "\n",
    };
    fs::write(out, rendered).with_context(|| format!("writing {out}"))?;
    println!("wrote {out} ({cycles} cycles)");
    Ok(true)
}

pub fn verify(
    model: Option<&str>,
    scenario: Option<&str>,
    props: Option<&str>,
    goals_path: Option<&str>,
    out: Option<&str>,
    _seed: u64,
) -> Result<bool> {
    let goals = load_goals(goals_path)?;
    let model_text = match (model, scenario) {
        (Some(m), None) => read(m)?,
        (None, Some(s)) => {
            let stub = parse_stub_scenario(&read(s)?)?;
            compose_model(&stub, &goals, Fault::None)?
        }
        (Some(_), Some(_)) => bail!("pass either --model or --scenario, not both"),
        (None, None) => bail!("one of --model or --scenario is required"),
    };
    let net = parse_model(&model_text).map_err(|e| anyhow::anyhow!("model: {e}"))?;
    let properties = match props {
        Some(p) => parse_properties(&read(p)?, &net)?,
        None => standard_properties(&net, &goals)?,
    };
    let exploration = explore(&net, &properties, &ExploreLimits::default())?;
    let mut all_hold = true;
    let mut traces = String::new();
    for v in &exploration.verdicts {
        println!("{}: {}", v.property, if v.holds { "holds" } else { "FAILS" });
        all_hold &= v.holds;
        if let Some(trace) = &v.counterexample {
            traces.push_str(&format!("counterexample for {}:\n  {}\n", v.property, trace.join("\n  ")));
        }
    }
    println!("explored {} states", exploration.states_explored);
    for c in &exploration.coverage {
        println!(
            "coverage {}: {}/{} locations, {}/{} edges",
            c.automaton, c.locations_visited, c.locations_total, c.edges_visited, c.edges_total
        );
    }
    if !traces.is_empty() {
        match out {
            Some(path) => {
                fs::write(path, &traces).with_context(|| format!("writing {path}"))?;
                println!("counterexamples written to {path}");
            }
            None => eprint!("{traces}"),
        }
    }
    Ok(all_hold)
}

#[allow(clippy::too_many_arguments)]
pub fn health(
    catalog_path: &str,
    cycles: u64,
    seed: u64,
    out: &str,
    format: Format,
    threshold: f64,
    response_time: bool,
) -> Result<bool> {
    let (catalog, params): (ServiceCatalog, WorkflowParams) = parse_catalog(&read(catalog_path)?)?;
    let mut goals = vec![
        Goal::satisfaction("failureRate", Comparator::Below, threshold, 1),
        Goal::optimization("cost", Direction::Minimize, 3),
    ];
    if response_time {
        goals.push(Goal::satisfaction("responseTime", Comparator::Below, 5.0, 2));
    }
    let analysis = HealthAnalysis {
        include_response_time: response_time,
        ..HealthAnalysis::default()
    };
    let root = StreamRng::new(seed);
    let mut rows = Vec::new();
    for cycle in 0..cycles {
        let estimates =
            analyze_combinations(&catalog, &params, &analysis, root.split(cycle).next_u64())?;
        let refs: Vec<&std::collections::BTreeMap<String, Estimate>> = estimates.iter().collect();
        let decision = select(&goals, &refs);
        let chosen = decision.chosen;
        let get = |q: &str| chosen.and_then(|i| estimates[i].get(q)).map(|e| e.point);
        rows.push(HealthRow {
            cycle,
            combos_total: estimates.len(),
            chosen_index: chosen,
            failure_rate_est: get("failureRate"),
            cost_est: get("cost"),
            response_time_est: get("responseTime"),
            failsafe: chosen.is_none(),
        });
    }
    let rendered = match format {
        Format::Csv => health_csv(&rows),
        Format::Json => serde_json::to_string_pretty(&rows)? + "\n",
    };
    fs::write(out, rendered).with_context(|| format!("writing {out}"))?;
    println!("wrote {out} ({cycles} cycles over {} combinations)", rows[0].combos_total);
    Ok(true)
}

#[allow(clippy::too_many_arguments)]
pub fn evolve(
    package_path: &str,
    validate_only: bool,
    topology_path: Option<&str>,
    scenario_path: Option<&str>,
    cycles: u64,
    activate_at: u64,
    seed: u64,
    out: &str,
) -> Result<bool> {
    let (mut package, scenario_files) = parse_package(&read(package_path)?)?;
    if scenario_files.is_empty() {
        // no scenarios listed: validate against the shipped suite, extended
        // for the latency quality when the package introduces it
        package.validation_scenarios = if package.models.iter().any(|m| m == "latency") {
            selfadapt_core::evolve::latency_validation_suite()
        } else {
            selfadapt_core::verify::default_stub_suite()
        };
    } else {
        let base = Path::new(package_path).parent().unwrap_or_else(|| Path::new("."));
        for rel in &scenario_files {
            let path = base.join(rel);
            let text = fs::read_to_string(&path)
                .with_context(|| format!("validation scenario {}", path.display()))?;
            package.validation_scenarios.push(parse_stub_scenario(&text)?);
        }
    }

    let topology = load_topology(topology_path)?;
    let scenario = load_scenario(scenario_path, &topology)?;
    let sim = Simulator::new(topology, scenario, seed);
    let knowledge = Knowledge::new(default_goals(), ModelRegistry::standard(), u64::MAX / 2)
        .map_err(|e| anyhow::anyhow!("knowledge: {e}"))?;
    let mut looper = MapeLoop::new(sim, RegistryVerifier, knowledge, seed ^ 0x5eed);
    let mut manager = UpdateManager::new(looper.mailbox());
    manager.stage(package).map_err(|e| anyhow::anyhow!("stage: {e}"))?;
    let report = manager
        .validate(&looper.knowledge.goals.clone(), &looper.knowledge.registry.clone(), seed)
        .map_err(|e| anyhow::anyhow!("validate: {e}"))?;
    for item in &report.items {
        println!(
            "validation {} / {}: {}",
            item.scenario,
            item.property,
            if item.holds { "holds" } else { "FAILS" }
        );
    }
    println!("validation: {}", if report.passed { "passed" } else { "FAILED" });
    if validate_only || !report.passed {
        return Ok(report.passed);
    }
    let mut activated = false;
    let records = looper.run_cycles_with(cycles, |cycle, _| {
        if cycle + 1 == activate_at && !activated {
            manager.activate().expect("validated package activates");
            activated = true;
        }
    });
    fs::write(out, decision_log_csv(&records)).with_context(|| format!("writing {out}"))?;
    println!("wrote {out}; activation at the cycle-{activate_at} boundary");
    Ok(true)
}

#[derive(Deserialize)]
struct GridFile {
    setting: Vec<GridSetting>,
}

#[derive(Deserialize, Clone, Copy)]
struct GridSetting {
    epsilon: f64,
    alpha: f64,
    rsem: f64,
}

fn default_grid() -> Vec<GridSetting> {
    vec![
        GridSetting { epsilon: 0.05, alpha: 0.05, rsem: 0.05 },
        GridSetting { epsilon: 0.01, alpha: 0.05, rsem: 0.05 },
        GridSetting { epsilon: 0.05, alpha: 0.01, rsem: 0.05 },
        GridSetting { epsilon: 0.05, alpha: 0.05, rsem: 0.02 },
    ]
}

pub fn tradeoff(
    grid: &str,
    topology_path: Option<&str>,
    scenario_path: Option<&str>,
    cycles: u64,
    seed: u64,
    out_dir: &str,
) -> Result<bool> {
    let settings: Vec<GridSetting> = if grid == "default" {
        default_grid()
    } else {
        let file: GridFile = toml::from_str(&read(grid)?).with_context(|| format!("grid {grid}"))?;
        if file.setting.is_empty() {
            bail!("grid file lists no settings");
        }
        file.setting
    };
    fs::create_dir_all(out_dir).with_context(|| format!("creating {out_dir}"))?;

    let mut summaries = Vec::new();
    let mut timings = String::from(TRADEOFF_TIMINGS_HEADER);
    timings.push('\n');
    for (i, gs) in settings.iter().enumerate() {
        let topology = load_topology(topology_path)?;
        let scenario = load_scenario(scenario_path, &topology)?;
        let sim = Simulator::new(topology, scenario, seed);
        let mut registry = ModelRegistry::empty();
        let mut pl = QualityModel::packet_loss();
        pl.estimator = EstimatorKind::Probability { epsilon: gs.epsilon, alpha: gs.alpha };
        registry.register(pl).expect("fresh registry");
        let mut energy = QualityModel::energy();
        energy.estimator = EstimatorKind::Mean(
            MeanOpts::new(gs.rsem, 5, 2000).map_err(|e| anyhow::anyhow!("grid rsem: {e}"))?,
        );
        registry.register(energy).expect("fresh registry");
        let knowledge = Knowledge::new(default_goals(), registry, u64::MAX / 2)
            .map_err(|e| anyhow::anyhow!("knowledge: {e}"))?;
        let mut looper = MapeLoop::new(sim, RegistryVerifier, knowledge, seed ^ 0xacc);
        let started = Instant::now();
        let records = looper.run_cycles(cycles);
        let elapsed = started.elapsed().as_millis();
        timings.push_str(&format!("{i},{elapsed},{:.3}\n", elapsed as f64 / cycles as f64));
        fs::write(
            Path::new(out_dir).join(format!("decisions_{i}.csv")),
            decision_log_csv(&records),
        )?;
        summaries.push(SettingSummary::from_records(
            i,
            (gs.epsilon, gs.alpha, gs.rsem),
            &records,
        ));
    }
    fs::write(Path::new(out_dir).join("summary.csv"), tradeoff_summary_csv(&summaries))?;
    fs::write(Path::new(out_dir).join("timings.csv"), timings)?;

    let grid_json: Vec<serde_json::Value> = settings
        .iter()
        .map(|g| {
            serde_json::json!({ "epsilon": g.epsilon, "alpha": g.alpha, "rsem": g.rsem })
        })
        .collect();
    let config_desc = format!(
        "grid={:?} cycles={cycles} seed={seed} topology={topology_path:?} scenario={scenario_path:?}",
        settings.iter().map(|g| (g.epsilon, g.alpha, g.rsem)).collect::<Vec<_>>()
    );
    let manifest = serde_json::json!({
        "seed": seed,
        "cycles": cycles,
        "version": env!("CARGO_PKG_VERSION"),
        "configHash": format!("{:016x}", fnv1a64(config_desc.as_bytes())),
        "grid": grid_json,
    });
    fs::write(
        Path::new(out_dir).join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    println!("wrote {out_dir}/summary.csv, timings.csv, manifest.json, decisions_*.csv");
    Ok(true)
}
