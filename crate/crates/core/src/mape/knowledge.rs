//! Knowledge types shared by the feedback-loop stages: configurations,
//! adaptation options, goals, and plans.

use std::collections::BTreeMap;

use serde::Deserialize;
use thiserror::Error;

use crate::deltaiot::{NetworkSettings, Topology, UncertaintyState, MOTE_LOAD};
use crate::smc::Estimate;

/// Observed quality values, in goal units (loss and latency as percentages,
/// energy in Coulomb).
#[derive(Debug, Clone, PartialEq)]
pub struct QualitySnapshot {
    pub packet_loss_pct: f64,
    pub energy: f64,
    pub latency_pct: f64,
}

/// Environment observations: expected per-mote load (packets per cycle, from
/// the gateway's traffic statistics) and per-link SNR at the applied power.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentSnapshot {
    pub motes_load: Vec<f64>,
    pub links_snr: Vec<f64>,
}

/// A probe snapshot of the managed system: its settings, the qualities of
/// the last cycle, and the relevant environment state.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub settings: NetworkSettings,
    pub qualities: QualitySnapshot,
    pub environment: EnvironmentSnapshot,
}

/// Reconstruct the uncertainty state from a probe snapshot: load
/// probabilities from the expected loads, per-link SNR offsets from the
/// observed SNR at the applied power and the calibrated slope.
pub fn uncertainty_from_probe(topology: &Topology, config: &Configuration) -> UncertaintyState {
    let load_probability = config
        .environment
        .motes_load
        .iter()
        .map(|l| (l / MOTE_LOAD as f64).clamp(0.0, 1.0))
        .collect();
    let link_alpha = config
        .environment
        .links_snr
        .iter()
        .enumerate()
        .map(|(l, snr)| snr - topology.links[l].beta * config.settings.power[l] as f64)
        .collect();
    UncertaintyState { load_probability, link_alpha }
}

/// One candidate configuration plus its verification results (one estimate
/// per quality, filled in by the analyzer).
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationOption {
    pub settings: NetworkSettings,
    pub estimates: BTreeMap<String, Estimate>,
}

impl AdaptationOption {
    pub fn new(settings: NetworkSettings) -> Self {
        AdaptationOption { settings, estimates: BTreeMap::new() }
    }

    /// Fully verified against a set of qualities.
    pub fn verified_for(&self, qualities: &[String]) -> bool {
        qualities.iter().all(|q| self.estimates.contains_key(q))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<")]
    Below,
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">")]
    Above,
    #[serde(rename = ">=")]
    AtLeast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum Direction {
    #[serde(rename = "min")]
    Minimize,
    #[serde(rename = "max")]
    Maximize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GoalKind {
    Satisfaction { comparator: Comparator, threshold: f64 },
    Optimization { direction: Direction },
}

/// An adaptation goal over one quality, ordered into the decision sequence by
/// rank (lower rank applies first).
#[derive(Debug, Clone, PartialEq)]
pub struct Goal {
    pub quality: String,
    pub kind: GoalKind,
    pub rank: u32,
}

impl Goal {
    pub fn satisfaction(quality: &str, comparator: Comparator, threshold: f64, rank: u32) -> Self {
        Goal {
            quality: quality.to_string(),
            kind: GoalKind::Satisfaction { comparator, threshold },
            rank,
        }
    }

    pub fn optimization(quality: &str, direction: Direction, rank: u32) -> Self {
        Goal { quality: quality.to_string(), kind: GoalKind::Optimization { direction }, rank }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GoalError {
    #[error("goal set is empty")]
    Empty,
    #[error("duplicate rank {0}")]
    DuplicateRank(u32),
    #[error("goal on `{0}`: threshold is not finite")]
    NonFiniteThreshold(String),
    #[error("goal file: {0}")]
    Parse(String),
}

/// Validate and sort a goal set by rank.
pub fn normalize_goals(mut goals: Vec<Goal>) -> Result<Vec<Goal>, GoalError> {
    if goals.is_empty() {
        return Err(GoalError::Empty);
    }
    let mut ranks = std::collections::HashSet::new();
    for g in &goals {
        if !ranks.insert(g.rank) {
            return Err(GoalError::DuplicateRank(g.rank));
        }
        if let GoalKind::Satisfaction { threshold, .. } = &g.kind {
            if !threshold.is_finite() {
                return Err(GoalError::NonFiniteThreshold(g.quality.clone()));
            }
        }
    }
    goals.sort_by_key(|g| g.rank);
    Ok(goals)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GoalsFile {
    #[serde(default)]
    goal: Vec<GoalEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GoalEntry {
    quality: String,
    kind: String,
    comparator: Option<Comparator>,
    threshold: Option<f64>,
    direction: Option<Direction>,
    rank: u32,
}

/// Parse a goal configuration file (TOML; see `docs/file-formats.md`).
pub fn parse_goals(text: &str) -> Result<Vec<Goal>, GoalError> {
    let file: GoalsFile = toml::from_str(text).map_err(|e| GoalError::Parse(e.to_string()))?;
    let goals = file
        .goal
        .into_iter()
        .map(|e| {
            let kind = match e.kind.as_str() {
                "satisfaction" => {
                    let comparator = e.comparator.ok_or_else(|| {
                        GoalError::Parse(format!("goal `{}`: missing comparator", e.quality))
                    })?;
                    let threshold = e.threshold.ok_or_else(|| {
                        GoalError::Parse(format!("goal `{}`: missing threshold", e.quality))
                    })?;
                    GoalKind::Satisfaction { comparator, threshold }
                }
                "optimization" => {
                    let direction = e.direction.ok_or_else(|| {
                        GoalError::Parse(format!("goal `{}`: missing direction", e.quality))
                    })?;
                    GoalKind::Optimization { direction }
                }
                other => {
                    return Err(GoalError::Parse(format!(
                        "goal `{}`: unknown kind `{other}`",
                        e.quality
                    )))
                }
            };
            Ok(Goal { quality: e.quality, kind, rank: e.rank })
        })
        .collect::<Result<Vec<_>, _>>()?;
    normalize_goals(goals)
}

/// The default goal pair: keep packet loss below 10%, then minimize energy.
pub fn default_goals() -> Vec<Goal> {
    vec![
        Goal::satisfaction("packetLoss", Comparator::Below, 10.0, 1),
        Goal::optimization("energy", Direction::Minimize, 2),
    ]
}

/// An ordered adaptation plan; an empty step list means "no adaptation".
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Plan {
    pub steps: Vec<PlanStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanStep {
    SetPower { link: usize, value: u8 },
    SetDistribution { link: usize, value: u8 },
    Failsafe,
}

impl Plan {
    pub fn failsafe() -> Self {
        Plan { steps: vec![PlanStep::Failsafe] }
    }

    pub fn is_failsafe(&self) -> bool {
        self.steps.iter().any(|s| matches!(s, PlanStep::Failsafe))
    }

    /// Diff two settings into the minimal step list turning `from` into `to`.
    pub fn diff(from: &NetworkSettings, to: &NetworkSettings) -> Self {
        let mut steps = Vec::new();
        for (link, (&a, &b)) in from.power.iter().zip(&to.power).enumerate() {
            if a != b {
                steps.push(PlanStep::SetPower { link, value: b });
            }
        }
        for (link, (&a, &b)) in from.distribution.iter().zip(&to.distribution).enumerate() {
            if a != b {
                steps.push(PlanStep::SetDistribution { link, value: b });
            }
        }
        Plan { steps }
    }

    /// Apply the plan to a settings copy.
    pub fn apply_to(&self, topology: &Topology, base: &NetworkSettings) -> NetworkSettings {
        let mut s = base.clone();
        for step in &self.steps {
            match step {
                PlanStep::SetPower { link, value } => s.power[*link] = *value,
                PlanStep::SetDistribution { link, value } => s.distribution[*link] = *value,
                PlanStep::Failsafe => s = NetworkSettings::failsafe(topology),
            }
        }
        s
    }
}
