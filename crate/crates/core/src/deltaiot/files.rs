//! Topology and scenario file formats (TOML), plus the scenario engine that
//! drives per-cycle uncertainty changes. Schemas are documented in
//! `docs/file-formats.md`.

use std::collections::BTreeMap;

use serde::Deserialize;
use thiserror::Error;

use super::{LinkSpec, MoteSpec, Topology, TrafficClass, UncertaintyState};
use crate::rng::StreamRng;

/// Default generation probability for event-driven motes when a scenario
/// does not pin one.
pub const DEFAULT_EVENT_PROBABILITY: f64 = 0.5;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FileError {
    #[error("parse error: {0}")]
    Toml(String),
    #[error("{0}")]
    Topology(#[from] super::TopologyError),
    #[error("scenario: {0}")]
    Scenario(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologyFile {
    gateway: u16,
    #[serde(rename = "turn-order")]
    turn_order: Option<Vec<u16>>,
    #[serde(default)]
    mote: Vec<MoteFile>,
    #[serde(default)]
    link: Vec<LinkFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MoteFile {
    id: u16,
    traffic: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkFile {
    source: u16,
    dest: u16,
    alpha: f64,
    beta: f64,
}

/// Parse a topology file.
pub fn parse_topology(text: &str) -> Result<Topology, FileError> {
    let file: TopologyFile = toml::from_str(text).map_err(|e| FileError::Toml(e.to_string()))?;
    let motes = file
        .mote
        .into_iter()
        .map(|m| {
            let traffic = match m.traffic.as_deref() {
                None | Some("event-driven") => TrafficClass::EventDriven,
                Some("periodic") => TrafficClass::Periodic,
                Some(other) => {
                    return Err(FileError::Scenario(format!(
                        "mote {}: unknown traffic class `{other}`",
                        m.id
                    )))
                }
            };
            Ok(MoteSpec { id: m.id, traffic })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let links = file
        .link
        .into_iter()
        .map(|l| LinkSpec { source: l.source, dest: l.dest, alpha: l.alpha, beta: l.beta })
        .collect();
    Ok(Topology::new(file.gateway, motes, links, file.turn_order)?)
}

/// A scheduled uncertainty change.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioEvent {
    pub cycle: u64,
    pub set_alpha: Vec<(usize, f64)>,
    pub set_load: Vec<(usize, f64)>,
}

/// A bounded random walk on one link's SNR offset: each cycle the offset
/// moves by ±step, clamped to `[min, max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrWalk {
    pub link: usize,
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

/// Per-cycle environment dynamics: a baseline uncertainty state, scheduled
/// events, and optional SNR random walks.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub initial: UncertaintyState,
    pub events: Vec<ScenarioEvent>,
    pub walks: Vec<SnrWalk>,
}

impl Scenario {
    /// Baseline scenario for a topology: calibrated link values, no events,
    /// no walks. Event-driven motes generate with `event_probability`.
    pub fn baseline(topology: &Topology, event_probability: f64) -> Scenario {
        Scenario {
            initial: UncertaintyState::baseline(topology, event_probability),
            events: Vec::new(),
            walks: Vec::new(),
        }
    }

    /// Apply cycle `k`'s scheduled events, then the random walks (walks start
    /// moving after cycle 0 so cycle 0 observes the configured baseline).
    pub fn advance(&self, cycle: u64, state: &mut UncertaintyState, rng: &mut StreamRng) {
        for event in self.events.iter().filter(|e| e.cycle == cycle) {
            for &(link, alpha) in &event.set_alpha {
                state.link_alpha[link] = alpha;
            }
            for &(mote, p) in &event.set_load {
                state.load_probability[mote] = p;
            }
        }
        if cycle >= 1 {
            for walk in &self.walks {
                let delta = if rng.bernoulli(0.5) { walk.step } else { -walk.step };
                let a = state.link_alpha[walk.link] + delta;
                state.link_alpha[walk.link] = a.clamp(walk.min, walk.max);
            }
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(rename = "event-load-probability")]
    event_load_probability: Option<f64>,
    #[serde(default)]
    load: BTreeMap<String, f64>,
    #[serde(default)]
    alpha: BTreeMap<String, f64>,
    #[serde(default)]
    event: Vec<EventFile>,
    #[serde(default)]
    walk: Vec<WalkFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EventFile {
    cycle: u64,
    #[serde(default)]
    alpha: BTreeMap<String, f64>,
    #[serde(default)]
    load: BTreeMap<String, f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WalkFile {
    link: String,
    min: f64,
    max: f64,
    step: f64,
}

fn link_key(topology: &Topology, key: &str) -> Result<usize, FileError> {
    let parts: Vec<&str> = key.split('-').collect();
    let parsed: Option<usize> = (|| {
        if parts.len() != 2 {
            return None;
        }
        let source = parts[0].parse().ok()?;
        let dest = parts[1].parse().ok()?;
        topology.link_index(source, dest)
    })();
    parsed.ok_or_else(|| FileError::Scenario(format!("unknown link `{key}` (expected `src-dst`)")))
}

fn mote_key(topology: &Topology, key: &str) -> Result<usize, FileError> {
    key.parse::<u16>()
        .ok()
        .and_then(|id| topology.mote_index(id))
        .ok_or_else(|| FileError::Scenario(format!("unknown mote `{key}`")))
}

/// Parse a scenario file against its topology.
pub fn parse_scenario(text: &str, topology: &Topology) -> Result<Scenario, FileError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| FileError::Toml(e.to_string()))?;
    let event_p = file.event_load_probability.unwrap_or(DEFAULT_EVENT_PROBABILITY);
    if !(0.0..=1.0).contains(&event_p) {
        return Err(FileError::Scenario(format!(
            "event-load-probability {event_p} outside [0,1]"
        )));
    }
    let mut initial = UncertaintyState::baseline(topology, event_p);
    for (key, p) in &file.load {
        if !(0.0..=1.0).contains(p) {
            return Err(FileError::Scenario(format!("load probability {p} outside [0,1]")));
        }
        initial.load_probability[mote_key(topology, key)?] = *p;
    }
    for (key, a) in &file.alpha {
        if !a.is_finite() {
            return Err(FileError::Scenario(format!("alpha for `{key}` is not finite")));
        }
        initial.link_alpha[link_key(topology, key)?] = *a;
    }
    let mut events = Vec::new();
    for e in &file.event {
        let mut set_alpha = Vec::new();
        for (key, a) in &e.alpha {
            if !a.is_finite() {
                return Err(FileError::Scenario(format!("alpha for `{key}` is not finite")));
            }
            set_alpha.push((link_key(topology, key)?, *a));
        }
        let mut set_load = Vec::new();
        for (key, p) in &e.load {
            if !(0.0..=1.0).contains(p) {
                return Err(FileError::Scenario(format!("load probability {p} outside [0,1]")));
            }
            set_load.push((mote_key(topology, key)?, *p));
        }
        events.push(ScenarioEvent { cycle: e.cycle, set_alpha, set_load });
    }
    events.sort_by_key(|e| e.cycle);
    let walks = file
        .walk
        .into_iter()
        .map(|w| {
            if w.min > w.max || !w.step.is_finite() || w.step < 0.0 {
                return Err(FileError::Scenario(format!(
                    "walk on `{}` has invalid bounds or step",
                    w.link
                )));
            }
            Ok(SnrWalk { link: link_key(topology, &w.link)?, min: w.min, max: w.max, step: w.step })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Scenario { initial, events, walks })
}

#[cfg(test)]
mod tests {
    use super::super::deltaiot15;
    use super::*;

    #[test]
    fn topology_round_trip_through_toml() {
        let text = r#"
            gateway = 1
            [[mote]]
            id = 2
            traffic = "periodic"
            [[mote]]
            id = 3
            [[link]]
            source = 2
            dest = 1
            alpha = -3.0
            beta = 1.0
            [[link]]
            source = 3
            dest = 1
            alpha = 0.5
            beta = 0.2
        "#;
        let t = parse_topology(text).unwrap();
        assert_eq!(t.mote_count(), 2);
        assert_eq!(t.links.len(), 2);
        assert_eq!(t.motes[0].traffic, TrafficClass::Periodic);
        assert_eq!(t.motes[1].traffic, TrafficClass::EventDriven);
    }

    #[test]
    fn malformed_topology_field_reported() {
        let err = parse_topology("gateway = 1\n[[link]]\nsource = \"x\"").unwrap_err();
        assert!(matches!(err, FileError::Toml(_)));
    }

    #[test]
    fn scenario_events_and_walks_parse() {
        let t = deltaiot15();
        let text = r#"
            event-load-probability = 0.6
            [load]
            "4" = 0.9
            [alpha]
            "11-7" = -20.0
            [[event]]
            cycle = 5
            [event.alpha]
            "12-7" = -36.0
            [[walk]]
            link = "2-4"
            min = -9.0
            max = 3.0
            step = 2.0
        "#;
        let s = parse_scenario(text, &t).unwrap();
        let mote4 = t.mote_index(4).unwrap();
        assert_eq!(s.initial.load_probability[mote4], 0.9);
        let link117 = t.link_index(11, 7).unwrap();
        assert_eq!(s.initial.link_alpha[link117], -20.0);
        assert_eq!(s.events.len(), 1);
        assert_eq!(s.walks.len(), 1);
        // periodic motes stay at 1.0 regardless of the event default
        let mote12 = t.mote_index(12).unwrap();
        assert_eq!(s.initial.load_probability[mote12], 1.0);
    }

    #[test]
    fn unknown_link_rejected() {
        let t = deltaiot15();
        let err = parse_scenario("[alpha]\n\"1-99\" = -3.0", &t).unwrap_err();
        assert!(matches!(err, FileError::Scenario(_)));
    }

    #[test]
    fn events_fire_at_their_cycle_and_walks_stay_bounded() {
        let t = deltaiot15();
        let link = t.link_index(2, 4).unwrap();
        let s = Scenario {
            initial: UncertaintyState::baseline(&t, 0.5),
            events: vec![ScenarioEvent { cycle: 3, set_alpha: vec![(link, -30.0)], set_load: vec![] }],
            walks: vec![SnrWalk { link, min: -35.0, max: -25.0, step: 2.0 }],
        };
        let mut state = s.initial.clone();
        let mut rng = StreamRng::new(1);
        s.advance(0, &mut state, &mut rng);
        assert_eq!(state.link_alpha[link], t.links[link].alpha, "cycle 0 keeps the baseline");
        for cycle in 1..20 {
            s.advance(cycle, &mut state, &mut rng);
            if cycle >= 3 {
                assert!((-35.0..=-25.0).contains(&state.link_alpha[link]));
            }
        }
    }
}
