//! Cycle-by-cycle network simulation with probe and effector interfaces.

use thiserror::Error;

use super::files::Scenario;
use super::*;
use crate::mape::{Configuration, EnvironmentSnapshot, QualitySnapshot};
use crate::rng::StreamRng;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProbeError {
    #[error("probe called before the first completed cycle")]
    NoCompletedCycle,
}

/// The managed IoT network. Single-owner and single-threaded; probes return
/// immutable snapshots.
#[derive(Debug, Clone)]
pub struct Simulator {
    topology: Topology,
    settings: NetworkSettings,
    pending: Option<NetworkSettings>,
    queues: Vec<u64>,
    uncertainty: UncertaintyState,
    scenario: Scenario,
    root_rng: StreamRng,
    cycle_index: u64,
    last_stats: Option<CycleStats>,
}

impl Simulator {
    /// New simulator with the reference (failsafe) settings active.
    pub fn new(topology: Topology, scenario: Scenario, seed: u64) -> Self {
        let settings = NetworkSettings::failsafe(&topology);
        Self::with_settings(topology, scenario, settings, seed)
            .expect("failsafe settings are valid for any topology")
    }

    pub fn with_settings(
        topology: Topology,
        scenario: Scenario,
        settings: NetworkSettings,
        seed: u64,
    ) -> Result<Self, SettingsError> {
        settings.validate(&topology)?;
        let uncertainty = scenario.initial.clone();
        let queues = vec![0; topology.mote_count()];
        Ok(Simulator {
            topology,
            settings,
            pending: None,
            queues,
            uncertainty,
            scenario,
            root_rng: StreamRng::new(seed),
            cycle_index: 0,
            last_stats: None,
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn settings(&self) -> &NetworkSettings {
        &self.settings
    }

    pub fn cycle_index(&self) -> u64 {
        self.cycle_index
    }

    /// The environment state the next (or just-completed) cycle runs under.
    pub fn uncertainty(&self) -> &UncertaintyState {
        &self.uncertainty
    }

    /// Replace the network settings at the next cycle boundary. The running
    /// cycle (if any) is never affected.
    pub fn apply_settings(&mut self, settings: NetworkSettings) -> Result<(), SettingsError> {
        settings.validate(&self.topology)?;
        self.pending = Some(settings);
        Ok(())
    }

    /// Settings that will be active in the next cycle.
    pub fn effective_settings(&self) -> &NetworkSettings {
        self.pending.as_ref().unwrap_or(&self.settings)
    }

    /// Advance one communication cycle and return its statistics.
    pub fn run_cycle(&mut self) -> CycleStats {
        if let Some(p) = self.pending.take() {
            self.settings = p;
        }
        let k = self.cycle_index;
        let mut scenario_rng = self.root_rng.split(2 * k + 1);
        self.scenario.advance(k, &mut self.uncertainty, &mut scenario_rng);
        let mut rng = self.root_rng.split(2 * k);
        let stats = run_cycle_raw(
            &self.topology,
            &self.settings,
            &self.uncertainty,
            &mut self.queues,
            &mut rng,
        );
        self.cycle_index += 1;
        self.last_stats = Some(stats.clone());
        stats
    }

    /// Snapshot of settings, last-cycle qualities, and current environment.
    pub fn probe(&self) -> Result<Configuration, ProbeError> {
        let stats = self.last_stats.as_ref().ok_or(ProbeError::NoCompletedCycle)?;
        let motes_load: Vec<f64> = self
            .uncertainty
            .load_probability
            .iter()
            .map(|p| p * MOTE_LOAD as f64)
            .collect();
        let links_snr: Vec<f64> = (0..self.topology.links.len())
            .map(|l| self.uncertainty.snr(&self.topology, l, self.settings.power[l]))
            .collect();
        Ok(Configuration {
            settings: self.settings.clone(),
            qualities: QualitySnapshot {
                packet_loss_pct: stats.packet_loss * 100.0,
                energy: stats.energy_consumed,
                latency_pct: stats.latency_pct,
            },
            environment: EnvironmentSnapshot { motes_load, links_snr },
        })
    }
}

/// One communication cycle over explicit state: motes take turns children
/// before parents, fill their send window from buffer and queue, split across
/// parents by distribution factor (floor on the first parent, ceil on the
/// second), and lose each packet independently per link failure probability.
pub fn run_cycle_raw(
    topology: &Topology,
    settings: &NetworkSettings,
    uncertainty: &UncertaintyState,
    queues: &mut [u64],
    rng: &mut StreamRng,
) -> CycleStats {
    let carried_in: u64 = queues.iter().sum();
    let mut generated_total: u64 = 0;
    let mut delivered: u64 = 0;
    let mut dropped_link: u64 = 0;
    let mut dropped_overflow: u64 = 0;
    let mut duplicated: u64 = 0;
    let mut energy = receive_energy_per_cycle(topology);

    for &mi in topology.turn_order() {
        let mote = &topology.motes[mi];
        let generates = rng.bernoulli(uncertainty.load_probability[mi]);
        let window = if generates {
            generated_total += MOTE_LOAD;
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
                let first = window * df1 / 100;
                let second = (window * df2).div_ceil(100);
                vec![(parents[0], first), (parents[1], second)]
            }
            _ => unreachable!("validated parent count"),
        };
        let sent_total: u64 = sends.iter().map(|(_, c)| c).sum();
        duplicated += sent_total.saturating_sub(window);

        for (link, count) in sends {
            energy += send_energy(count, settings.power[link]);
            let snr = uncertainty.snr(topology, link, settings.power[link]);
            let p_fail = link_failure_probability(snr);
            let mut survived = 0u64;
            for _ in 0..count {
                if !rng.bernoulli(p_fail) {
                    survived += 1;
                }
            }
            dropped_link += count - survived;
            let dest = topology.links[link].dest;
            if dest == topology.gateway {
                delivered += survived;
            } else {
                let j = topology.mote_index(dest).expect("validated link destination");
                let space = MAX_QUEUE - queues[j];
                let accepted = survived.min(space);
                dropped_overflow += survived - accepted;
                queues[j] += accepted;
            }
        }
    }

    let carried_out: u64 = queues.iter().sum();
    let in_play = (generated_total + carried_in + duplicated).max(1);
    CycleStats {
        packets_generated: generated_total,
        packets_delivered: delivered,
        packet_loss: (dropped_link + dropped_overflow) as f64 / in_play as f64,
        energy_consumed: energy,
        latency_pct: 100.0 * carried_out as f64 / generated_total.max(1) as f64,
        dropped_link,
        dropped_overflow,
        duplicated,
        carried_in,
        carried_out,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain2() -> Topology {
        Topology::new(
            1,
            vec![MoteSpec { id: 2, traffic: TrafficClass::Periodic }],
            vec![LinkSpec { source: 2, dest: 1, alpha: 5.0, beta: 1.0 }],
            None,
        )
        .unwrap()
    }

    #[test]
    fn healthy_chain_delivers_everything() {
        let t = chain2();
        let scenario = Scenario::baseline(&t, 0.5);
        let mut sim = Simulator::new(t, scenario, 1);
        let stats = sim.run_cycle();
        assert_eq!(stats.packets_generated, 10);
        assert_eq!(stats.packets_delivered, 10);
        assert_eq!(stats.packet_loss, 0.0);
        assert_eq!(stats.latency_pct, 0.0);
    }

    #[test]
    fn dead_link_loses_everything() {
        let t = Topology::new(
            1,
            vec![MoteSpec { id: 2, traffic: TrafficClass::Periodic }],
            vec![LinkSpec { source: 2, dest: 1, alpha: -50.0, beta: 0.0 }],
            None,
        )
        .unwrap();
        let scenario = Scenario::baseline(&t, 0.5);
        let mut sim = Simulator::new(t, scenario, 1);
        let stats = sim.run_cycle();
        assert_eq!(stats.packet_loss, 1.0);
        assert_eq!(stats.packets_delivered, 0);
    }

    #[test]
    fn probe_before_first_cycle_errors() {
        let t = chain2();
        let scenario = Scenario::baseline(&t, 0.5);
        let sim = Simulator::new(t, scenario, 1);
        assert_eq!(sim.probe().unwrap_err(), ProbeError::NoCompletedCycle);
    }

    #[test]
    fn probe_reflects_applied_settings_and_is_a_snapshot() {
        let t = deltaiot15();
        let mut sim = Simulator::new(t.clone(), Scenario::baseline(&t, 0.5), 3);
        sim.run_cycle();
        let mut low = NetworkSettings::failsafe(&t);
        for (i, link) in t.links.iter().enumerate() {
            low.power[i] = min_power_for_link(link.alpha, link.beta);
        }
        // restore a valid split for two-parent motes
        sim.apply_settings(low.clone()).unwrap();
        // current cycle's probe still shows the old settings
        assert_eq!(sim.probe().unwrap().settings.power[0], MAX_POWER);
        sim.run_cycle();
        let config = sim.probe().unwrap();
        assert_eq!(config.settings.power, low.power);

        let mut stolen = config.clone();
        stolen.environment.motes_load[0] = -1.0;
        assert_eq!(sim.probe().unwrap(), config, "probe snapshots are immutable");
    }

    #[test]
    fn seeded_reruns_are_identical() {
        let t = deltaiot15();
        let run = |seed| {
            let mut sim = Simulator::new(t.clone(), Scenario::baseline(&t, 0.5), seed);
            (0..10).map(|_| sim.run_cycle()).collect::<Vec<_>>()
        };
        assert_eq!(run(99), run(99));
        assert_ne!(run(99), run(100));
    }

    #[test]
    fn conservation_holds_every_cycle() {
        let t = deltaiot15();
        // mixed settings: min power, uneven splits
        let mut settings = NetworkSettings::failsafe(&t);
        for (i, link) in t.links.iter().enumerate() {
            settings.power[i] = min_power_for_link(link.alpha, link.beta);
        }
        for m in t.split_motes() {
            let p = t.parent_links(m);
            settings.distribution[p[0]] = 60;
            settings.distribution[p[1]] = 40;
        }
        let mut sim =
            Simulator::with_settings(t.clone(), Scenario::baseline(&t, 0.5), settings, 7).unwrap();
        for _ in 0..50 {
            let s = sim.run_cycle();
            assert_eq!(
                s.packets_generated + s.carried_in + s.duplicated,
                s.packets_delivered + s.dropped_link + s.dropped_overflow + s.carried_out,
                "conservation violated: {s:?}"
            );
        }
    }

    #[test]
    fn failsafe_spends_more_energy_than_min_power() {
        let t = deltaiot15();
        let mut min_settings = NetworkSettings::failsafe(&t);
        for (i, link) in t.links.iter().enumerate() {
            min_settings.power[i] = min_power_for_link(link.alpha, link.beta);
        }
        // only the periodic motes (12, 13) generate: flows stay deterministic
        // and no queue can overflow even with failsafe duplication
        let mut fail_sim = Simulator::new(t.clone(), Scenario::baseline(&t, 0.0), 5);
        let mut min_sim =
            Simulator::with_settings(t.clone(), Scenario::baseline(&t, 0.0), min_settings, 5)
                .unwrap();
        let fs: f64 = (0..20).map(|_| fail_sim.run_cycle().energy_consumed).sum();
        let ms: f64 = (0..20).map(|_| min_sim.run_cycle().energy_consumed).sum();
        assert!(fs > ms, "failsafe energy {fs} not above min-power energy {ms}");
        // and with benign SNR everywhere, loss is zero in both
        assert_eq!(fail_sim.run_cycle().packet_loss, 0.0);
        assert_eq!(min_sim.run_cycle().packet_loss, 0.0);
    }

    #[test]
    fn raising_one_links_power_raises_energy() {
        let t = deltaiot15();
        let mut base = NetworkSettings::failsafe(&t);
        for (i, link) in t.links.iter().enumerate() {
            base.power[i] = min_power_for_link(link.alpha, link.beta);
        }
        let mut bumped = base.clone();
        bumped.power[1] += 1; // 3 -> 1 always carries traffic
        let energy_of = |settings: NetworkSettings| {
            let mut sim =
                Simulator::with_settings(t.clone(), Scenario::baseline(&t, 0.5), settings, 11)
                    .unwrap();
            sim.run_cycle().energy_consumed
        };
        // benign SNR at both powers: flows are identical, energy strictly higher
        assert!(energy_of(bumped) > energy_of(base));
    }

    #[test]
    fn mid_cycle_apply_waits_for_the_boundary() {
        let t = deltaiot15();
        let mut sim = Simulator::new(t.clone(), Scenario::baseline(&t, 0.5), 13);
        sim.run_cycle();
        let before = sim.settings().clone();
        let mut next = before.clone();
        next.power[0] = 3;
        sim.apply_settings(next.clone()).unwrap();
        assert_eq!(sim.settings(), &before, "active settings unchanged until boundary");
        assert_eq!(sim.effective_settings(), &next);
        sim.run_cycle();
        assert_eq!(sim.settings(), &next);
    }

    #[test]
    fn invalid_settings_rejected_by_effector() {
        let t = deltaiot15();
        let mut sim = Simulator::new(t.clone(), Scenario::baseline(&t, 0.5), 17);
        let mut bad = NetworkSettings::failsafe(&t);
        let p = t.parent_links(10);
        bad.distribution[p[0]] = 60;
        bad.distribution[p[1]] = 60;
        assert!(matches!(sim.apply_settings(bad), Err(SettingsError::FactorSum { .. })));
    }

    #[test]
    fn congestion_produces_latency() {
        // four children all feed one relay: 40 forwarded + 10 own exceeds
        // the relay's 40-slot window every cycle
        let motes = vec![
            MoteSpec { id: 2, traffic: TrafficClass::Periodic },
            MoteSpec { id: 3, traffic: TrafficClass::Periodic },
            MoteSpec { id: 4, traffic: TrafficClass::Periodic },
            MoteSpec { id: 5, traffic: TrafficClass::Periodic },
            MoteSpec { id: 6, traffic: TrafficClass::Periodic },
        ];
        let links = vec![
            LinkSpec { source: 3, dest: 2, alpha: 5.0, beta: 1.0 },
            LinkSpec { source: 4, dest: 2, alpha: 5.0, beta: 1.0 },
            LinkSpec { source: 5, dest: 2, alpha: 5.0, beta: 1.0 },
            LinkSpec { source: 6, dest: 2, alpha: 5.0, beta: 1.0 },
            LinkSpec { source: 2, dest: 1, alpha: 5.0, beta: 1.0 },
        ];
        let t = Topology::new(1, motes, links, None).unwrap();
        let scenario = Scenario::baseline(&t, 0.5);
        let mut sim = Simulator::new(t, scenario, 19);
        let mut saw_latency = false;
        for _ in 0..5 {
            let s = sim.run_cycle();
            saw_latency |= s.latency_pct > 0.0;
        }
        assert!(saw_latency, "expected backlog under offered load above slot capacity");
    }
}
