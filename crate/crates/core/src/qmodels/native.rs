//! Native fast-path implementations of the quality models. Each has a
//! behaviorally equivalent `.anm` twin in [`super::anm`]; the test suite
//! checks the two forms agree distributionally.

use crate::deltaiot::{
    link_failure_probability, receive_energy_per_cycle, run_cycle_raw, send_energy,
    NetworkSettings, Topology, UncertaintyState, MAX_QUEUE, MAX_SLOTS, MOTE_LOAD,
};
use crate::rng::StreamRng;
use crate::smc::{RunSample, SmcError};

/// Cycles simulated per latency-model run (queues carry over within a run).
pub const LATENCY_CYCLES: u64 = 3;

/// One packet episode: pick a source mote proportionally to load
/// probability, route hop by hop choosing parent links proportionally to the
/// distribution factors, and fail each hop with the link failure
/// probability. Returns whether the packet was lost.
pub fn packet_loss_episode(
    topology: &Topology,
    settings: &NetworkSettings,
    uncertainty: &UncertaintyState,
    rng: &mut StreamRng,
) -> Result<RunSample<bool>, SmcError> {
    let total_load: f64 = uncertainty.load_probability.iter().sum();
    if total_load <= 0.0 {
        return Err(SmcError::Model("no mote generates traffic".into()));
    }
    let mut x = rng.next_f64() * total_load;
    let mut mote = topology.motes[topology.mote_count() - 1].id;
    for (i, m) in topology.motes.iter().enumerate() {
        x -= uncertainty.load_probability[i];
        if x < 0.0 {
            mote = m.id;
            break;
        }
    }
    let mut work = 1u64;
    while mote != topology.gateway {
        let parents = topology.parent_links(mote);
        let link = match parents.len() {
            1 => parents[0],
            2 => {
                let w1 = settings.distribution[parents[0]] as f64;
                let w2 = settings.distribution[parents[1]] as f64;
                let total = w1 + w2;
                if total <= 0.0 {
                    return Err(SmcError::Model(format!(
                        "mote {mote} has all-zero distribution factors"
                    )));
                }
                if rng.next_f64() * total < w1 {
                    parents[0]
                } else {
                    parents[1]
                }
            }
            _ => unreachable!("validated parent count"),
        };
        work += 1;
        let snr = uncertainty.snr(topology, link, settings.power[link]);
        if rng.bernoulli(link_failure_probability(snr)) {
            return Ok(RunSample { value: true, work });
        }
        mote = topology.links[link].dest;
    }
    Ok(RunSample { value: false, work })
}

/// One cycle of loss-free packet flow, mirroring the energy model: queues
/// start empty, every transmitted packet reaches its parent (queue capacity
/// still applies), and the reward is the cycle's total energy.
pub fn cycle_energy(
    topology: &Topology,
    settings: &NetworkSettings,
    uncertainty: &UncertaintyState,
    rng: &mut StreamRng,
) -> RunSample<f64> {
    let mut queues = vec![0u64; topology.mote_count()];
    let mut energy = receive_energy_per_cycle(topology);
    for &mi in topology.turn_order() {
        let mote = &topology.motes[mi];
        let generates = rng.bernoulli(uncertainty.load_probability[mi]);
        let window = if generates {
            if queues[mi] <= MAX_SLOTS - MOTE_LOAD {
                let w = queues[mi] + MOTE_LOAD;
                queues[mi] = 0;
                w
            } else {
                queues[mi] -= MAX_SLOTS - MOTE_LOAD;
                MAX_SLOTS
            }
        } else if queues[mi] <= MAX_SLOTS {
            let w = queues[mi];
            queues[mi] = 0;
            w
        } else {
            queues[mi] -= MAX_SLOTS;
            MAX_SLOTS
        };
        let parents = topology.parent_links(mote.id);
        let sends: Vec<(usize, u64)> = match parents.len() {
            1 => vec![(parents[0], window)],
            2 => {
                let df1 = settings.distribution[parents[0]] as u64;
                let df2 = settings.distribution[parents[1]] as u64;
                vec![
                    (parents[0], window * df1 / 100),
                    (parents[1], (window * df2).div_ceil(100)),
                ]
            }
            _ => unreachable!("validated parent count"),
        };
        for (link, count) in sends {
            energy += send_energy(count, settings.power[link]);
            let dest = topology.links[link].dest;
            if dest != topology.gateway {
                let j = topology.mote_index(dest).expect("validated link destination");
                queues[j] = (queues[j] + count).min(MAX_QUEUE);
            }
        }
    }
    RunSample { value: energy, work: topology.links.len() as u64 }
}

/// One latency-model run: [`LATENCY_CYCLES`] full cycles with loss and queue
/// carryover; the reward is the mean end-of-cycle backlog percentage.
pub fn latency_run(
    topology: &Topology,
    settings: &NetworkSettings,
    uncertainty: &UncertaintyState,
    rng: &mut StreamRng,
) -> RunSample<f64> {
    let mut queues = vec![0u64; topology.mote_count()];
    let mut acc = 0.0;
    for _ in 0..LATENCY_CYCLES {
        let stats = run_cycle_raw(topology, settings, uncertainty, &mut queues, rng);
        acc += stats.latency_pct;
    }
    RunSample {
        value: acc / LATENCY_CYCLES as f64,
        work: LATENCY_CYCLES * topology.links.len() as u64,
    }
}
