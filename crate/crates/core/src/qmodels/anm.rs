//! `.anm` twins of the quality models: generators that bake a concrete
//! (settings, uncertainty) pair into model source, plus runners that execute
//! the parsed models on the engine. Probabilities are quantized to integer
//! branch weights at 1e-6 resolution, which is far below every tolerance the
//! differential tests use.

use std::fmt::Write;

use crate::deltaiot::{
    link_failure_probability, receive_energy_per_cycle, NetworkSettings, Topology,
    UncertaintyState, COULOMB_UNIT, PCR, SF_TIME,
};
use crate::engine::{run_to_stop, AutomatonNetwork, NetState, Value};
use crate::rng::StreamRng;
use crate::smc::{RunSample, SmcError};

use super::native::LATENCY_CYCLES;

const WEIGHT_SCALE: f64 = 1_000_000.0;

fn weight(p: f64) -> u64 {
    (p * WEIGHT_SCALE).round().clamp(0.0, WEIGHT_SCALE) as u64
}

fn real(x: f64) -> String {
    let s = format!("{x}");
    if s.contains('.') || s.contains('e') || s.contains('E') {
        s
    } else {
        format!("{s}.0")
    }
}

/// Energy cost per packet on a link at its configured power, as a baked
/// literal.
fn packet_cost(power: u8) -> f64 {
    SF_TIME * PCR[power as usize] / COULOMB_UNIT
}

/// Generate the packet-loss episode model: a `Topology` automaton routing a
/// packet hop by hop and a `Network` automaton deciding per-hop loss, paired
/// over `data`/`done` channels.
pub fn packet_loss_source(
    topology: &Topology,
    settings: &NetworkSettings,
    uncertainty: &UncertaintyState,
) -> Result<String, SmcError> {
    let load_weights: Vec<u64> =
        uncertainty.load_probability.iter().map(|&p| weight(p)).collect();
    if load_weights.iter().sum::<u64>() == 0 {
        return Err(SmcError::Model("no mote generates traffic".into()));
    }
    let max_id = topology.motes.iter().map(|m| m.id).max().unwrap_or(0).max(topology.gateway);
    let nlinks = topology.links.len();
    let mut s = String::new();
    let _ = writeln!(s, "int[0,{max_id}] currentMote = 0;");
    let _ = writeln!(s, "int[0,{max_id}] nextMote = 0;");
    let _ = writeln!(s, "int[0,{nlinks}] linkIdx = {nlinks};");
    let _ = writeln!(s, "int[0,1] ok = 0;");
    let _ = writeln!(s, "chan data;");
    let _ = writeln!(s, "chan done;");

    let _ = writeln!(s, "automaton Topology {{");
    let _ = writeln!(s, "    init location PickSource;");
    let _ = writeln!(s, "    location ChooseLink;");
    let _ = writeln!(s, "    location AwaitHop;");
    let _ = writeln!(s, "    location Gateway;");
    for (i, mote) in topology.motes.iter().enumerate() {
        let _ = writeln!(
            s,
            "    edge PickSource -> ChooseLink {{ weight: {}; do: currentMote = {}; }}",
            load_weights[i], mote.id
        );
    }
    let _ = writeln!(
        s,
        "    edge ChooseLink -> Gateway {{ guard: currentMote == {}; }}",
        topology.gateway
    );
    for mote in &topology.motes {
        let parents = topology.parent_links(mote.id);
        for &l in &parents {
            let link = &topology.links[l];
            let weight_clause = if parents.len() == 2 {
                format!(" weight: {};", settings.distribution[l])
            } else {
                String::new()
            };
            let _ = writeln!(
                s,
                "    edge ChooseLink -> AwaitHop {{ guard: currentMote == {};{weight_clause} sync: data!; do: linkIdx = {l}, nextMote = {}; }}",
                mote.id, link.dest
            );
        }
    }
    let _ = writeln!(
        s,
        "    edge AwaitHop -> ChooseLink {{ guard: ok == 1; sync: done?; do: currentMote = nextMote; }}"
    );
    let _ = writeln!(s, "}}");

    let _ = writeln!(s, "automaton Network {{");
    let _ = writeln!(s, "    init location Start;");
    let _ = writeln!(s, "    committed location Decide;");
    let _ = writeln!(s, "    committed location Report;");
    let _ = writeln!(s, "    location PacketLoss;");
    let _ = writeln!(s, "    edge Start -> Decide {{ sync: data?; }}");
    for l in 0..nlinks {
        let snr = uncertainty.snr(topology, l, settings.power[l]);
        let w_fail = weight(link_failure_probability(snr));
        let w_ok = WEIGHT_SCALE as u64 - w_fail;
        let _ = writeln!(
            s,
            "    edge Decide -> Report {{ guard: linkIdx == {l}; weight: {w_fail}; do: ok = 0; }}"
        );
        let _ = writeln!(
            s,
            "    edge Decide -> Report {{ guard: linkIdx == {l}; weight: {w_ok}; do: ok = 1; }}"
        );
    }
    let _ = writeln!(s, "    edge Report -> Start {{ guard: ok == 1; sync: done!; }}");
    let _ = writeln!(s, "    edge Report -> PacketLoss {{ guard: ok == 0; }}");
    let _ = writeln!(s, "}}");
    Ok(s)
}

/// Run one parsed packet-loss episode; true means the packet was lost.
pub fn run_packet_loss_model(
    net: &AutomatonNetwork,
    rng: &mut StreamRng,
) -> Result<RunSample<bool>, SmcError> {
    let lost_at = net
        .locate("Network", "PacketLoss")
        .ok_or_else(|| SmcError::Model("model lacks Network.PacketLoss".into()))?;
    let delivered_at = net
        .locate("Topology", "Gateway")
        .ok_or_else(|| SmcError::Model("model lacks Topology.Gateway".into()))?;
    let stop = move |_: &AutomatonNetwork, st: &NetState| {
        st.is_at(lost_at.0, lost_at.1) || st.is_at(delivered_at.0, delivered_at.1)
    };
    let out = run_to_stop(net, 8, &stop, rng)?;
    if !out.stopped {
        return Err(SmcError::Model("episode did not terminate".into()));
    }
    Ok(RunSample { value: out.state.is_at(lost_at.0, lost_at.1), work: out.steps })
}

struct MoteGen<'t> {
    topology: &'t Topology,
}

impl<'t> MoteGen<'t> {
    fn has_queue(&self, mi: usize) -> bool {
        let id = self.topology.motes[mi].id;
        self.topology.links.iter().any(|l| l.dest == id)
    }

    fn queue_var(&self, id: u16) -> String {
        format!("q{id}")
    }

    /// `window = ...` and queue drain for one mote's turn, as `do:` parts.
    fn window_updates(&self, mi: usize, generates: bool) -> String {
        let id = self.topology.motes[mi].id;
        if !self.has_queue(mi) {
            return if generates { "window = 10".into() } else { "window = 0".into() };
        }
        let q = self.queue_var(id);
        if generates {
            format!("window = ({q} <= 30 ? {q} + 10 : 40), {q} = ({q} <= 30 ? 0 : {q} - 30)")
        } else {
            format!("window = ({q} <= 40 ? {q} : 40), {q} = ({q} <= 40 ? 0 : {q} - 40)")
        }
    }
}

/// Generate the energy model: one `Cycle` automaton that walks the turn
/// order, branches on load, splits the window by distribution factors, and
/// accumulates send energy (reception energy is the initial value of
/// `energyAcc`). Loss is not modeled, matching the energy semantics.
pub fn energy_source(
    topology: &Topology,
    settings: &NetworkSettings,
    uncertainty: &UncertaintyState,
) -> String {
    let gen = MoteGen { topology };
    let mut s = String::new();
    for m in &topology.motes {
        if gen.has_queue(topology.mote_index(m.id).expect("own mote")) {
            let _ = writeln!(s, "int[0,60] q{} = 0;", m.id);
        }
    }
    let _ = writeln!(s, "int[0,40] window = 0;");
    let _ = writeln!(s, "int[0,40] s1 = 0;");
    let _ = writeln!(s, "int[0,40] s2 = 0;");
    let _ = writeln!(s, "real energyAcc = {};", real(receive_energy_per_cycle(topology)));
    let _ = writeln!(s, "automaton Cycle {{");
    let order = topology.turn_order();
    for (pos, &mi) in order.iter().enumerate() {
        let id = topology.motes[mi].id;
        let init = if pos == 0 { "init " } else { "" };
        let _ = writeln!(s, "    {init}location Gen{id};");
        let _ = writeln!(s, "    location Send{id};");
    }
    let _ = writeln!(s, "    location Done;");
    for (pos, &mi) in order.iter().enumerate() {
        let id = topology.motes[mi].id;
        let next = match order.get(pos + 1) {
            Some(&nj) => format!("Gen{}", topology.motes[nj].id),
            None => "Done".to_string(),
        };
        let w_gen = weight(uncertainty.load_probability[mi]);
        let w_skip = WEIGHT_SCALE as u64 - w_gen;
        let _ = writeln!(
            s,
            "    edge Gen{id} -> Send{id} {{ weight: {w_gen}; do: {}; }}",
            gen.window_updates(mi, true)
        );
        let _ = writeln!(
            s,
            "    edge Gen{id} -> Send{id} {{ weight: {w_skip}; do: {}; }}",
            gen.window_updates(mi, false)
        );
        let parents = topology.parent_links(id);
        let mut updates: Vec<String> = Vec::new();
        match parents.len() {
            1 => {
                let l = parents[0];
                updates.push(format!(
                    "energyAcc = energyAcc + window * {}",
                    real(packet_cost(settings.power[l]))
                ));
                let dest = topology.links[l].dest;
                if dest != topology.gateway {
                    let q = gen.queue_var(dest);
                    updates.push(format!("{q} = ({q} + window > 60 ? 60 : {q} + window)"));
                }
            }
            2 => {
                let (l1, l2) = (parents[0], parents[1]);
                let (df1, df2) =
                    (settings.distribution[l1] as u64, settings.distribution[l2] as u64);
                updates.push(format!("s1 = window * {df1} / 100"));
                updates.push(format!("s2 = (window * {df2} + 99) / 100"));
                updates.push(format!(
                    "energyAcc = energyAcc + s1 * {} + s2 * {}",
                    real(packet_cost(settings.power[l1])),
                    real(packet_cost(settings.power[l2]))
                ));
                for (l, count) in [(l1, "s1"), (l2, "s2")] {
                    let dest = topology.links[l].dest;
                    if dest != topology.gateway {
                        let q = gen.queue_var(dest);
                        updates.push(format!("{q} = ({q} + {count} > 60 ? 60 : {q} + {count})"));
                    }
                }
            }
            _ => unreachable!("validated parent count"),
        }
        let _ = writeln!(s, "    edge Send{id} -> {next} {{ do: {}; }}", updates.join(", "));
    }
    let _ = writeln!(s, "}}");
    s
}

/// Run one parsed energy-model cycle; the value is the cycle's energy.
pub fn run_energy_model(
    net: &AutomatonNetwork,
    rng: &mut StreamRng,
) -> Result<RunSample<f64>, SmcError> {
    let done = net
        .locate("Cycle", "Done")
        .ok_or_else(|| SmcError::Model("model lacks Cycle.Done".into()))?;
    let stop = move |_: &AutomatonNetwork, st: &NetState| st.is_at(done.0, done.1);
    let out = run_to_stop(net, 4, &stop, rng)?;
    if !out.stopped {
        return Err(SmcError::Model("cycle did not complete".into()));
    }
    match out.state.value(net, "energyAcc") {
        Some(Value::Real(e)) => Ok(RunSample { value: e, work: out.steps }),
        _ => Err(SmcError::Model("model lacks energyAcc".into())),
    }
}

/// Generate the latency model: like the energy model but with per-packet
/// loss branches and queue carryover across `LATENCY_CYCLES` cycles; the
/// reward is the mean end-of-cycle backlog percentage in `latAcc / cycles`.
pub fn latency_source(
    topology: &Topology,
    settings: &NetworkSettings,
    uncertainty: &UncertaintyState,
) -> String {
    let gen = MoteGen { topology };
    let cycles = LATENCY_CYCLES;
    let mut s = String::new();
    let mut queue_vars = Vec::new();
    for m in &topology.motes {
        if gen.has_queue(topology.mote_index(m.id).expect("own mote")) {
            let _ = writeln!(s, "int[0,60] q{} = 0;", m.id);
            queue_vars.push(format!("q{}", m.id));
        }
    }
    let _ = writeln!(s, "int[0,40] window = 0;");
    let _ = writeln!(s, "int[0,40] snd = 0;");
    let _ = writeln!(s, "int[0,40] k = 0;");
    let _ = writeln!(s, "int[0,40] arrive = 0;");
    let _ = writeln!(s, "int[0,200] genCycle = 0;");
    let _ = writeln!(s, "int[0,{cycles}] cycleIdx = 0;");
    let _ = writeln!(s, "real latAcc = 0.0;");
    let backlog_expr = if queue_vars.is_empty() { "0".to_string() } else { queue_vars.join(" + ") };
    let _ = writeln!(s, "func int backlog() {{ return {backlog_expr}; }}");
    let _ = writeln!(s, "automaton Cycle {{");
    let order = topology.turn_order();
    for (pos, &mi) in order.iter().enumerate() {
        let id = topology.motes[mi].id;
        let init = if pos == 0 { "init " } else { "" };
        let _ = writeln!(s, "    {init}location Gen{id};");
        for &l in &topology.parent_links(id) {
            let _ = writeln!(s, "    location Set{id}x{l};");
            let _ = writeln!(s, "    location Loss{id}x{l};");
        }
    }
    let _ = writeln!(s, "    location CycleEnd;");
    let _ = writeln!(s, "    location Done;");

    let first_gen = format!("Gen{}", topology.motes[order[0]].id);
    for (pos, &mi) in order.iter().enumerate() {
        let id = topology.motes[mi].id;
        let parents = topology.parent_links(id);
        let entry = format!("Set{id}x{}", parents[0]);
        let w_gen = weight(uncertainty.load_probability[mi]);
        let w_skip = WEIGHT_SCALE as u64 - w_gen;
        let _ = writeln!(
            s,
            "    edge Gen{id} -> {entry} {{ weight: {w_gen}; do: {}, genCycle = genCycle + 10; }}",
            gen.window_updates(mi, true)
        );
        let _ = writeln!(
            s,
            "    edge Gen{id} -> {entry} {{ weight: {w_skip}; do: {}; }}",
            gen.window_updates(mi, false)
        );
        let after_mote = match order.get(pos + 1) {
            Some(&nj) => format!("Gen{}", topology.motes[nj].id),
            None => "CycleEnd".to_string(),
        };
        for (pi, &l) in parents.iter().enumerate() {
            let snd_expr = match parents.len() {
                1 => "window".to_string(),
                2 => {
                    let df = settings.distribution[l] as u64;
                    if pi == 0 {
                        format!("window * {df} / 100")
                    } else {
                        format!("(window * {df} + 99) / 100")
                    }
                }
                _ => unreachable!("validated parent count"),
            };
            let loss = format!("Loss{id}x{l}");
            let _ = writeln!(
                s,
                "    edge Set{id}x{l} -> {loss} {{ do: snd = {snd_expr}, k = 0, arrive = 0; }}"
            );
            let snr = uncertainty.snr(topology, l, settings.power[l]);
            let w_fail = weight(link_failure_probability(snr));
            let w_ok = WEIGHT_SCALE as u64 - w_fail;
            let _ = writeln!(
                s,
                "    edge {loss} -> {loss} {{ guard: k < snd; weight: {w_fail}; do: k = k + 1; }}"
            );
            let _ = writeln!(
                s,
                "    edge {loss} -> {loss} {{ guard: k < snd; weight: {w_ok}; do: k = k + 1, arrive = arrive + 1; }}"
            );
            let next = match parents.get(pi + 1) {
                Some(&nl) => format!("Set{id}x{nl}"),
                None => after_mote.clone(),
            };
            let dest = topology.links[l].dest;
            let deliver = if dest == topology.gateway {
                String::new()
            } else {
                let q = gen.queue_var(dest);
                format!(" do: {q} = ({q} + arrive > 60 ? 60 : {q} + arrive);")
            };
            let _ = writeln!(s, "    edge {loss} -> {next} {{ guard: k >= snd;{deliver} }}");
        }
    }
    let lat_update = "latAcc = latAcc + 100.0 * backlog() / (genCycle > 0 ? genCycle : 1)";
    let _ = writeln!(
        s,
        "    edge CycleEnd -> {first_gen} {{ guard: cycleIdx < {}; do: {lat_update}, cycleIdx = cycleIdx + 1, genCycle = 0; }}",
        cycles - 1
    );
    let _ = writeln!(
        s,
        "    edge CycleEnd -> Done {{ guard: cycleIdx >= {}; do: {lat_update}; }}",
        cycles - 1
    );
    let _ = writeln!(s, "}}");
    s
}

/// Run one parsed latency-model run; the value is the mean backlog
/// percentage per cycle.
pub fn run_latency_model(
    net: &AutomatonNetwork,
    rng: &mut StreamRng,
) -> Result<RunSample<f64>, SmcError> {
    let done = net
        .locate("Cycle", "Done")
        .ok_or_else(|| SmcError::Model("model lacks Cycle.Done".into()))?;
    let stop = move |_: &AutomatonNetwork, st: &NetState| st.is_at(done.0, done.1);
    let out = run_to_stop(net, 4, &stop, rng)?;
    if !out.stopped {
        return Err(SmcError::Model("latency run did not complete".into()));
    }
    match out.state.value(net, "latAcc") {
        Some(Value::Real(acc)) => {
            Ok(RunSample { value: acc / LATENCY_CYCLES as f64, work: out.steps })
        }
        _ => Err(SmcError::Model("model lacks latAcc".into())),
    }
}
