//! Execution semantics for automaton networks.
//!
//! One `step` fires exactly one of:
//!
//! 1. an edge move while some automaton sits in a committed location (only
//!    moves that involve a committed location are eligible then),
//! 2. a matched send/receive pair on a binary channel,
//! 3. a broadcast send together with every ready receiver,
//! 4. an enabled internal edge, or
//! 5. a unit time tick when nothing is enabled.
//!
//! Among eligible moves the choice is uniform from the rng stream; inside a
//! probabilistic branch group the edge is chosen weight-proportionally
//! (weight-zero edges are never taken). Updates run in declared order,
//! sender before receivers. The same move enumeration drives both stochastic
//! simulation and exhaustive exploration, so the two agree on reachability.

use thiserror::Error;

use super::ast::*;
use super::eval::{EvalCtx, RuntimeError};
use crate::rng::StreamRng;

/// Default cap on edge firings within one simulation run. Models with an
/// always-enabled edge cycle would otherwise spin forever without consuming
/// horizon ticks.
pub const DEFAULT_STEP_BUDGET: u64 = 10_000_000;

/// Dynamic state of a network: one current location per automaton, the
/// variable store, and the tick counter.
#[derive(Debug, Clone, PartialEq)]
pub struct NetState {
    pub locations: Vec<usize>,
    pub store: Vec<Value>,
    pub ticks: u64,
}

impl NetState {
    pub fn initial(net: &AutomatonNetwork) -> Self {
        NetState {
            locations: net.automata.iter().map(|a| a.initial).collect(),
            store: net.initial_store(),
            ticks: 0,
        }
    }

    pub fn is_at(&self, automaton: usize, location: usize) -> bool {
        self.locations[automaton] == location
    }

    pub fn value(&self, net: &AutomatonNetwork, name: &str) -> Option<Value> {
        net.scalar_slot(name).map(|s| self.store[s])
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SimError {
    #[error("runtime error: {0}")]
    Runtime(#[from] RuntimeError),
    #[error("step budget of {budget} edge firings exceeded (model may livelock)")]
    StepBudgetExceeded { budget: u64 },
}

/// A unit reference: source location's choice-unit index within an automaton.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnitRef {
    pub automaton: usize,
    pub location: usize,
    pub unit: usize,
}

/// One eligible move.
#[derive(Debug, Clone, PartialEq)]
pub enum Move {
    Internal(UnitRef),
    Binary { sender: UnitRef, receiver: UnitRef },
    /// Receivers are the per-automaton ready receive units on the channel.
    Broadcast { sender: UnitRef, receivers: Vec<Vec<UnitRef>> },
}

/// What a step did.
#[derive(Debug, Clone, PartialEq)]
pub enum StepReport {
    /// No move was enabled; the tick counter advanced.
    Tick,
    /// Fired edges as `(automaton, edge index)`, in update order.
    Fired(Vec<(usize, usize)>),
}

fn unit<'n>(net: &'n AutomatonNetwork, r: UnitRef) -> &'n ChoiceUnit {
    &net.automata[r.automaton].units[r.location][r.unit]
}

/// Enumerate the eligible moves of `state` in deterministic order.
pub fn enumerate_moves(net: &AutomatonNetwork, state: &NetState) -> Result<Vec<Move>, RuntimeError> {
    let ctx = EvalCtx::new(net, &state.store);
    let n = net.automata.len();
    // ready units per automaton, split by kind
    let mut internal: Vec<Vec<UnitRef>> = vec![Vec::new(); n];
    let mut send: Vec<Vec<Vec<UnitRef>>> = vec![vec![Vec::new(); net.channels.len()]; n];
    let mut recv: Vec<Vec<Vec<UnitRef>>> = vec![vec![Vec::new(); net.channels.len()]; n];
    for (ai, automaton) in net.automata.iter().enumerate() {
        let loc = state.locations[ai];
        for (ui, u) in automaton.units[loc].iter().enumerate() {
            if let Some(g) = &u.guard {
                if !ctx.truth(ctx.eval(g)?)? {
                    continue;
                }
            }
            let r = UnitRef { automaton: ai, location: loc, unit: ui };
            match &u.sync {
                None => internal[ai].push(r),
                Some(s) => match s.dir {
                    SyncDir::Send => send[ai][s.channel].push(r),
                    SyncDir::Receive => recv[ai][s.channel].push(r),
                },
            }
        }
    }

    let committed_active = (0..n).any(|ai| {
        net.automata[ai].locations[state.locations[ai]].committed
    });
    let is_committed =
        |r: &UnitRef| net.automata[r.automaton].locations[r.location].committed;

    let mut moves = Vec::new();
    for ai in 0..n {
        for &r in &internal[ai] {
            moves.push(Move::Internal(r));
        }
    }
    for (ci, chan) in net.channels.iter().enumerate() {
        if chan.broadcast {
            for ai in 0..n {
                for &sender in &send[ai][ci] {
                    let receivers: Vec<Vec<UnitRef>> = (0..n)
                        .filter(|&aj| aj != ai && !recv[aj][ci].is_empty())
                        .map(|aj| recv[aj][ci].clone())
                        .collect();
                    moves.push(Move::Broadcast { sender, receivers });
                }
            }
        } else {
            for ai in 0..n {
                for &sender in &send[ai][ci] {
                    for aj in 0..n {
                        if aj == ai {
                            continue;
                        }
                        for &receiver in &recv[aj][ci] {
                            moves.push(Move::Binary { sender, receiver });
                        }
                    }
                }
            }
        }
    }

    if committed_active {
        moves.retain(|m| match m {
            Move::Internal(r) => is_committed(r),
            Move::Binary { sender, receiver } => is_committed(sender) || is_committed(receiver),
            Move::Broadcast { sender, receivers } => {
                is_committed(sender)
                    || receivers.iter().any(|rs| rs.iter().any(is_committed))
            }
        });
    }
    Ok(moves)
}

/// Edge choices that resolve a move: one edge per participating unit, plus
/// the chosen receive unit for each broadcast receiver. Weight-zero edges are
/// excluded (they are probabilistically unreachable).
pub fn move_choice_space(net: &AutomatonNetwork, m: &Move) -> Vec<Vec<usize>> {
    fn unit_edges(net: &AutomatonNetwork, r: UnitRef) -> Vec<usize> {
        let u = unit(net, r);
        u.edges
            .iter()
            .copied()
            .filter(|&e| net.automata[r.automaton].edges[e].weight.map_or(true, |w| w > 0))
            .collect()
    }
    match m {
        Move::Internal(r) => unit_edges(net, *r).into_iter().map(|e| vec![e]).collect(),
        Move::Binary { sender, receiver } => {
            let mut out = Vec::new();
            for se in unit_edges(net, *sender) {
                for re in unit_edges(net, *receiver) {
                    out.push(vec![se, re]);
                }
            }
            out
        }
        Move::Broadcast { sender, receivers } => {
            // choices: [send_edge, (unit_idx, edge) per receiving automaton...]
            let mut out: Vec<Vec<usize>> = unit_edges(net, *sender)
                .into_iter()
                .map(|e| vec![e])
                .collect();
            for units in receivers {
                let mut next = Vec::new();
                for prefix in &out {
                    for (uidx, &r) in units.iter().enumerate() {
                        for e in unit_edges(net, r) {
                            let mut c = prefix.clone();
                            c.push(uidx);
                            c.push(e);
                            next.push(c);
                        }
                    }
                }
                out = next;
            }
            out
        }
    }
}

/// Pick the edge of a unit weight-proportionally (uniform if unweighted —
/// unweighted units are singletons by construction).
fn pick_edge(net: &AutomatonNetwork, r: UnitRef, rng: &mut StreamRng) -> usize {
    let u = unit(net, r);
    if u.edges.len() == 1 {
        return u.edges[0];
    }
    let weights: Vec<u64> = u
        .edges
        .iter()
        .map(|&e| net.automata[r.automaton].edges[e].weight.unwrap_or(1))
        .collect();
    u.edges[rng.weighted_index(&weights)]
}

/// Apply a fully resolved move. `choices` follows [`move_choice_space`]'s
/// layout. Returns the fired edges in update order.
pub fn apply_move(
    net: &AutomatonNetwork,
    state: &mut NetState,
    m: &Move,
    choices: &[usize],
) -> Result<Vec<(usize, usize)>, RuntimeError> {
    let mut fired = Vec::new();
    match m {
        Move::Internal(r) => {
            fire_edge(net, state, r.automaton, choices[0])?;
            fired.push((r.automaton, choices[0]));
        }
        Move::Binary { sender, receiver } => {
            fire_edge(net, state, sender.automaton, choices[0])?;
            fired.push((sender.automaton, choices[0]));
            fire_edge(net, state, receiver.automaton, choices[1])?;
            fired.push((receiver.automaton, choices[1]));
        }
        Move::Broadcast { sender, receivers } => {
            fire_edge(net, state, sender.automaton, choices[0])?;
            fired.push((sender.automaton, choices[0]));
            let mut k = 1;
            for units in receivers {
                let uidx = choices[k];
                let edge = choices[k + 1];
                k += 2;
                let automaton = units[uidx].automaton;
                fire_edge(net, state, automaton, edge)?;
                fired.push((automaton, edge));
            }
        }
    }
    Ok(fired)
}

fn fire_edge(
    net: &AutomatonNetwork,
    state: &mut NetState,
    automaton: usize,
    edge_idx: usize,
) -> Result<(), RuntimeError> {
    let edge = &net.automata[automaton].edges[edge_idx];
    for upd in &edge.updates {
        let value = {
            let ctx = EvalCtx::new(net, &state.store);
            ctx.eval(&upd.value)?
        };
        let slot = match &upd.index {
            None => {
                let VarScope::Global(vi) = upd.var.scope else {
                    unreachable!("updates target globals")
                };
                net.vars[vi].base_slot
            }
            Some(idx_expr) => {
                let ctx = EvalCtx::new(net, &state.store);
                let idx = ctx.eval(idx_expr)?;
                ctx.array_slot(&upd.var, idx)?
            }
        };
        let VarScope::Global(vi) = upd.var.scope else {
            unreachable!("updates target globals")
        };
        let decl = &net.vars[vi];
        let stored = match (decl.kind, value) {
            (VarKind::Real, v) => Value::Real(v.as_f64()),
            (VarKind::BoundedInt { lo, hi }, Value::Int(i)) => {
                if i < lo || i > hi {
                    return Err(RuntimeError::BoundViolation {
                        name: decl.name.clone(),
                        value: i,
                        lo,
                        hi,
                    });
                }
                Value::Int(i)
            }
            (VarKind::BoundedInt { .. }, Value::Real(_)) => {
                return Err(RuntimeError::RealToInt { name: decl.name.clone() })
            }
        };
        state.store[slot] = stored;
    }
    state.locations[automaton] = edge.target;
    Ok(())
}

/// Advance the state by one step. A uniform draw is consumed only when more
/// than one move (or more than one in-unit edge) is eligible, so traces are a
/// pure function of the seed.
pub fn step(
    net: &AutomatonNetwork,
    state: &mut NetState,
    rng: &mut StreamRng,
) -> Result<StepReport, RuntimeError> {
    let moves = enumerate_moves(net, state)?;
    if moves.is_empty() {
        state.ticks += 1;
        return Ok(StepReport::Tick);
    }
    let pick = if moves.len() == 1 { 0 } else { rng.next_below(moves.len() as u64) as usize };
    let m = &moves[pick];
    let choices = match m {
        Move::Internal(r) => vec![pick_edge(net, *r, rng)],
        Move::Binary { sender, receiver } => {
            vec![pick_edge(net, *sender, rng), pick_edge(net, *receiver, rng)]
        }
        Move::Broadcast { sender, receivers } => {
            let mut c = vec![pick_edge(net, *sender, rng)];
            for units in receivers {
                let uidx = if units.len() == 1 {
                    0
                } else {
                    rng.next_below(units.len() as u64) as usize
                };
                c.push(uidx);
                c.push(pick_edge(net, units[uidx], rng));
            }
            c
        }
    };
    let fired = apply_move(net, state, m, &choices)?;
    Ok(StepReport::Fired(fired))
}

/// A recorded simulation: `states[0]` is the initial state and `states[i+1]`
/// is the state after `fired[i]`.
#[derive(Debug, Clone)]
pub struct Trace {
    pub states: Vec<NetState>,
    pub fired: Vec<StepReport>,
}

impl Trace {
    pub fn final_state(&self) -> &NetState {
        self.states.last().expect("trace holds at least the initial state")
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Run until `stop` holds or `horizon` ticks elapsed, recording every state.
pub fn simulate(
    net: &AutomatonNetwork,
    horizon: u64,
    stop: &dyn Fn(&AutomatonNetwork, &NetState) -> bool,
    rng: &mut StreamRng,
) -> Result<Trace, SimError> {
    let mut state = NetState::initial(net);
    let mut trace = Trace { states: vec![state.clone()], fired: Vec::new() };
    let mut budget = DEFAULT_STEP_BUDGET;
    while state.ticks < horizon && !stop(net, &state) {
        if budget == 0 {
            return Err(SimError::StepBudgetExceeded { budget: DEFAULT_STEP_BUDGET });
        }
        budget -= 1;
        let report = step(net, &mut state, rng)?;
        trace.fired.push(report);
        trace.states.push(state.clone());
    }
    Ok(trace)
}

/// Outcome of a lean run that keeps only the final state.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: NetState,
    /// Total `step` calls (edge firings plus ticks) — the work measure.
    pub steps: u64,
    pub stopped: bool,
}

/// Like [`simulate`] but without recording intermediate states.
pub fn run_to_stop(
    net: &AutomatonNetwork,
    horizon: u64,
    stop: &dyn Fn(&AutomatonNetwork, &NetState) -> bool,
    rng: &mut StreamRng,
) -> Result<RunOutcome, SimError> {
    let mut state = NetState::initial(net);
    let mut steps: u64 = 0;
    loop {
        if stop(net, &state) {
            return Ok(RunOutcome { state, steps, stopped: true });
        }
        if state.ticks >= horizon {
            return Ok(RunOutcome { state, steps, stopped: false });
        }
        if steps >= DEFAULT_STEP_BUDGET {
            return Err(SimError::StepBudgetExceeded { budget: DEFAULT_STEP_BUDGET });
        }
        step(net, &mut state, rng)?;
        steps += 1;
    }
}
