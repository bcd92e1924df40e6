//! Design-time verification: exhaustive bounded exploration of the feedback
//! loop composed with scripted probe/verifier/effector stubs.
//!
//! Exploration expands every nondeterministic alternative and treats
//! probabilistic branch groups as nondeterminism (weight-zero edges stay
//! excluded), which over-approximates the stochastic semantics soundly for
//! safety properties. The tick counter is excluded from state identity, so a
//! state with no enabled moves is terminal.

pub mod props;
pub mod stub;

pub use props::{parse_predicate, parse_properties, PropError, PropExpr, Property, PropertyKind};
pub use stub::{
    compose_model, default_stub_suite, extract_model_decisions, micro_topology,
    parse_stub_scenario, run_model_stub_loop, run_native_stub_loop, standard_properties,
    stub_property_text, DecisionTuple, Fault, StubError, StubManaged, StubSample, StubScenario,
    StubVerifier,
};

use std::collections::{HashMap, VecDeque};

use thiserror::Error;

use crate::engine::ast::Value;
use crate::engine::sim::{apply_move, enumerate_moves, move_choice_space};
use crate::engine::{AutomatonNetwork, NetState, RuntimeError};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ExploreError {
    #[error("state-space budget of {budget} states exceeded")]
    BudgetExceeded { budget: usize },
    #[error("runtime error during exploration: {0}")]
    Runtime(#[from] RuntimeError),
}

#[derive(Debug, Clone, Copy)]
pub struct ExploreLimits {
    pub max_states: usize,
}

impl Default for ExploreLimits {
    fn default() -> Self {
        ExploreLimits { max_states: 1_000_000 }
    }
}

/// One property's verdict; failures carry a step-by-step counterexample.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub property: String,
    pub holds: bool,
    pub counterexample: Option<Vec<String>>,
}

/// Location and edge coverage for one automaton.
#[derive(Debug, Clone, PartialEq)]
pub struct AutomatonCoverage {
    pub automaton: String,
    pub locations_visited: usize,
    pub locations_total: usize,
    pub edges_visited: usize,
    pub edges_total: usize,
    pub unvisited_locations: Vec<String>,
}

impl AutomatonCoverage {
    pub fn full_location_coverage(&self) -> bool {
        self.locations_visited == self.locations_total
    }
}

/// Result of an exhaustive exploration.
#[derive(Debug, Clone)]
pub struct Exploration {
    pub states_explored: usize,
    pub verdicts: Vec<Verdict>,
    pub coverage: Vec<AutomatonCoverage>,
}

impl Exploration {
    pub fn all_hold(&self) -> bool {
        self.verdicts.iter().all(|v| v.holds)
    }

    pub fn coverage_of(&self, automaton: &str) -> Option<&AutomatonCoverage> {
        self.coverage.iter().find(|c| c.automaton == automaton)
    }
}

/// Identity of a state for exploration: locations and store, excluding the
/// tick counter.
pub fn state_key(state: &NetState) -> Vec<u64> {
    let mut key = Vec::with_capacity(state.locations.len() + state.store.len());
    for &l in &state.locations {
        key.push(l as u64);
    }
    for v in &state.store {
        match v {
            Value::Int(i) => key.push(*i as u64),
            Value::Real(r) => key.push(r.to_bits()),
        }
    }
    key
}

struct Space {
    states: Vec<NetState>,
    /// parent id and the fired-edge label that produced each state
    parents: Vec<Option<(usize, String)>>,
    /// successor ids per state (filled on expansion)
    successors: Vec<Vec<usize>>,
    index: HashMap<Vec<u64>, usize>,
}

fn edge_label(net: &AutomatonNetwork, fired: &[(usize, usize)]) -> String {
    fired
        .iter()
        .map(|&(a, e)| {
            let automaton = &net.automata[a];
            let edge = &automaton.edges[e];
            format!(
                "{}:{}->{}",
                automaton.name,
                automaton.locations[edge.source].name,
                automaton.locations[edge.target].name
            )
        })
        .collect::<Vec<_>>()
        .join(" + ")
}

fn expand(
    net: &AutomatonNetwork,
    state: &NetState,
) -> Result<Vec<(NetState, String)>, RuntimeError> {
    let moves = enumerate_moves(net, state)?;
    let mut out = Vec::new();
    for m in &moves {
        for choices in move_choice_space(net, m) {
            let mut next = state.clone();
            let fired = apply_move(net, &mut next, m, &choices)?;
            out.push((next, edge_label(net, &fired)));
        }
    }
    Ok(out)
}

fn trace_to(space: &Space, target: usize) -> Vec<String> {
    let mut rev = Vec::new();
    let mut cur = target;
    while let Some((parent, label)) = &space.parents[cur] {
        rev.push(label.clone());
        cur = *parent;
    }
    rev.reverse();
    let mut lines: Vec<String> =
        rev.into_iter().enumerate().map(|(i, l)| format!("step {}: {l}", i + 1)).collect();
    lines.insert(0, "initial state".to_string());
    lines
}

/// Explore the full reachable space of `net` and check the properties.
pub fn explore(
    net: &AutomatonNetwork,
    properties: &[Property],
    limits: &ExploreLimits,
) -> Result<Exploration, ExploreError> {
    let initial = NetState::initial(net);
    let mut space = Space {
        states: vec![initial.clone()],
        parents: vec![None],
        successors: vec![Vec::new()],
        index: HashMap::new(),
    };
    space.index.insert(state_key(&initial), 0);

    let mut visited_locations: Vec<Vec<bool>> =
        net.automata.iter().map(|a| vec![false; a.locations.len()]).collect();
    let mut visited_edges: Vec<Vec<bool>> =
        net.automata.iter().map(|a| vec![false; a.edges.len()]).collect();
    for (ai, &loc) in initial.locations.iter().enumerate() {
        visited_locations[ai][loc] = true;
    }

    let mut frontier = VecDeque::from([0usize]);
    while let Some(id) = frontier.pop_front() {
        let successors = expand(net, &space.states[id])?;
        for (next, label) in successors {
            // record edge coverage from the label-producing move
            let key = state_key(&next);
            let next_id = match space.index.get(&key) {
                Some(&existing) => existing,
                None => {
                    if space.states.len() >= limits.max_states {
                        return Err(ExploreError::BudgetExceeded { budget: limits.max_states });
                    }
                    let new_id = space.states.len();
                    for (ai, &loc) in next.locations.iter().enumerate() {
                        visited_locations[ai][loc] = true;
                    }
                    space.states.push(next);
                    space.parents.push(Some((id, label.clone())));
                    space.successors.push(Vec::new());
                    space.index.insert(key, new_id);
                    frontier.push_back(new_id);
                    new_id
                }
            };
            space.successors[id].push(next_id);
        }
    }

    // recompute edge coverage exactly: re-expand each state and mark fired edges
    for state in &space.states {
        let moves = enumerate_moves(net, state)?;
        for m in &moves {
            for choices in move_choice_space(net, m) {
                let mut next = state.clone();
                let fired = apply_move(net, &mut next, m, &choices)?;
                for (a, e) in fired {
                    visited_edges[a][e] = true;
                }
            }
        }
    }

    let mut verdicts = Vec::new();
    for property in properties {
        let verdict = match &property.kind {
            PropertyKind::NeverReach { predicate } => {
                match space.states.iter().position(|s| predicate.holds(s)) {
                    None => Verdict { property: property.name.clone(), holds: true, counterexample: None },
                    Some(bad) => Verdict {
                        property: property.name.clone(),
                        holds: false,
                        counterexample: Some(trace_to(&space, bad)),
                    },
                }
            }
            PropertyKind::LeadsTo { premise, conclusion, bound } => {
                check_leads_to(&space, premise, conclusion, *bound, &property.name)
            }
        };
        verdicts.push(verdict);
    }

    let coverage = net
        .automata
        .iter()
        .enumerate()
        .map(|(ai, a)| {
            let unvisited: Vec<String> = a
                .locations
                .iter()
                .enumerate()
                .filter(|(li, _)| !visited_locations[ai][*li])
                .map(|(_, l)| l.name.clone())
                .collect();
            AutomatonCoverage {
                automaton: a.name.clone(),
                locations_visited: visited_locations[ai].iter().filter(|&&v| v).count(),
                locations_total: a.locations.len(),
                edges_visited: visited_edges[ai].iter().filter(|&&v| v).count(),
                edges_total: a.edges.len(),
                unvisited_locations: unvisited,
            }
        })
        .collect();

    Ok(Exploration { states_explored: space.states.len(), verdicts, coverage })
}

/// All reachable state keys (for containment checks against simulation).
pub fn reachable_keys(
    net: &AutomatonNetwork,
    limits: &ExploreLimits,
) -> Result<std::collections::HashSet<Vec<u64>>, ExploreError> {
    let initial = NetState::initial(net);
    let mut seen = std::collections::HashSet::from([state_key(&initial)]);
    let mut frontier = VecDeque::from([initial]);
    while let Some(state) = frontier.pop_front() {
        for (next, _) in expand(net, &state)? {
            if seen.len() >= limits.max_states {
                return Err(ExploreError::BudgetExceeded { budget: limits.max_states });
            }
            if seen.insert(state_key(&next)) {
                frontier.push_back(next);
            }
        }
    }
    Ok(seen)
}

/// Leads-to check over the explored graph: from every premise state, every
/// path must reach a conclusion state within `bound` steps; a dead end or an
/// exhausted bound without the conclusion is a violation.
fn check_leads_to(
    space: &Space,
    premise: &PropExpr,
    conclusion: &PropExpr,
    bound: u64,
    name: &str,
) -> Verdict {
    for (start, state) in space.states.iter().enumerate() {
        if !premise.holds(state) {
            continue;
        }
        if conclusion.holds(state) {
            continue;
        }
        // BFS from start avoiding conclusion states, tracking local paths
        let mut depth: HashMap<usize, u64> = HashMap::from([(start, 0)]);
        let mut local_parent: HashMap<usize, usize> = HashMap::new();
        let mut queue = VecDeque::from([start]);
        while let Some(id) = queue.pop_front() {
            let d = depth[&id];
            if d >= bound {
                return violation(space, name, start, id, &local_parent);
            }
            if space.successors[id].is_empty() {
                return violation(space, name, start, id, &local_parent);
            }
            for &next in &space.successors[id] {
                if conclusion.holds(&space.states[next]) {
                    continue;
                }
                let nd = d + 1;
                let better = depth.get(&next).map_or(true, |&old| nd < old);
                if better {
                    depth.insert(next, nd);
                    local_parent.insert(next, id);
                    if nd >= bound || space.successors[next].is_empty() {
                        return violation(space, name, start, next, &local_parent);
                    }
                    queue.push_back(next);
                }
            }
        }
    }
    Verdict { property: name.to_string(), holds: true, counterexample: None }
}

fn violation(
    space: &Space,
    name: &str,
    premise_state: usize,
    end: usize,
    local_parent: &HashMap<usize, usize>,
) -> Verdict {
    let mut lines = trace_to(space, premise_state);
    lines.push("-- premise state reached; path avoiding the conclusion: --".to_string());
    let mut rev = Vec::new();
    let mut cur = end;
    while cur != premise_state {
        let p = local_parent[&cur];
        let label = space.parents[cur]
            .as_ref()
            .map(|(_, l)| l.clone())
            .unwrap_or_else(|| "?".to_string());
        rev.push(label);
        cur = p;
    }
    rev.reverse();
    for (i, l) in rev.into_iter().enumerate() {
        lines.push(format!("avoid {}: {l}", i + 1));
    }
    Verdict { property: name.to_string(), holds: false, counterexample: Some(lines) }
}
