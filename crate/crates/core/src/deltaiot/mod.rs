//! Ground-truth simulator of a multi-hop IoT network: motes, links, duty
//! cycles, queues, SNR-driven packet loss, and energy accounting. Exposes the
//! probe/effector surface the feedback loop adapts through.

mod files;
mod sim;

pub use files::{parse_scenario, parse_topology, Scenario, ScenarioEvent, SnrWalk};
pub use sim::{run_cycle_raw, ProbeError, Simulator};

use thiserror::Error;

/// Power consumption rate (mC per packet-slot) per transmission power 0..=15.
pub const PCR: [f64; 16] = [
    20.2, 21.2, 22.3, 23.7, 24.7, 26.1, 27.5, 28.8, 30.0, 31.2, 32.4, 33.7, 35.1, 36.5, 38.0,
    38.9,
];

/// Slot-frame time factor in the send-energy formula.
pub const SF_TIME: f64 = 0.258;
/// Divisor turning milli-coulomb rates into Coulomb.
pub const COULOMB_UNIT: f64 = 1000.0;
/// Listening time units per slot.
pub const RECEPTION_TIME: f64 = 2.0;
/// Listening cost per time unit (mC).
pub const RECEPTION_COST: f64 = 14.2;
/// Communication slots per cycle: a mote sends at most this many packets per turn.
pub const MAX_SLOTS: u64 = 40;
/// Receive-queue capacity per mote; arrivals beyond this are dropped.
pub const MAX_QUEUE: u64 = 60;
/// Packets a mote generates when its sensor fires.
pub const MOTE_LOAD: u64 = 10;
/// Maximum transmission power setting.
pub const MAX_POWER: u8 = 15;
/// SNR values are clamped to `[-SNR_CLAMP, SNR_CLAMP]` dB.
pub const SNR_CLAMP: f64 = 50.0;

pub type MoteId = u16;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TopologyError {
    #[error("cycle detected involving mote {0}")]
    CycleDetected(MoteId),
    #[error("mote {0} cannot reach the gateway")]
    Unreachable(MoteId),
    #[error("mote {0} has {1} parent links; only 1 or 2 are supported")]
    ParentCount(MoteId, usize),
    #[error("malformed topology: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SettingsError {
    #[error("settings cover {got} links, topology has {want}")]
    LinkCount { got: usize, want: usize },
    #[error("link {link}: power {power} outside [0,{MAX_POWER}]")]
    PowerRange { link: usize, power: u8 },
    #[error("link {link}: distribution factor {factor} must be a multiple of 20 in [0,100]")]
    FactorStep { link: usize, factor: u8 },
    #[error("mote {mote}: distribution factors must sum to 100 (or duplicate at 100/100), got {a}+{b}")]
    FactorSum { mote: MoteId, a: u8, b: u8 },
    #[error("mote {mote}: single-parent motes use distribution factor 100, got {factor}")]
    SingleParent { mote: MoteId, factor: u8 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrafficClass {
    /// Generates its load every cycle.
    Periodic,
    /// Generates per cycle with a scenario-driven probability.
    EventDriven,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoteSpec {
    pub id: MoteId,
    pub traffic: TrafficClass,
}

/// A directed link from a child mote to one of its parents.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub source: MoteId,
    pub dest: MoteId,
    /// SNR offset at power 0, from field calibration.
    pub alpha: f64,
    /// SNR gain per power step.
    pub beta: f64,
}

/// Static network structure: motes, the gateway, and calibrated links.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub gateway: MoteId,
    pub motes: Vec<MoteSpec>,
    pub links: Vec<LinkSpec>,
    turn_order: Vec<usize>,
}

impl Topology {
    /// Build and validate a topology. `turn_order` (mote ids, children before
    /// parents) may be supplied; otherwise a topological order with ties
    /// broken by ascending id is computed.
    pub fn new(
        gateway: MoteId,
        motes: Vec<MoteSpec>,
        links: Vec<LinkSpec>,
        turn_order: Option<Vec<MoteId>>,
    ) -> Result<Self, TopologyError> {
        if motes.iter().any(|m| m.id == gateway) {
            return Err(TopologyError::Malformed(format!(
                "gateway id {gateway} also appears as a mote"
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for m in &motes {
            if !seen.insert(m.id) {
                return Err(TopologyError::Malformed(format!("duplicate mote id {}", m.id)));
            }
        }
        let mote_index = |id: MoteId| motes.iter().position(|m| m.id == id);
        let mut link_pairs = std::collections::HashSet::new();
        for l in &links {
            if !link_pairs.insert((l.source, l.dest)) {
                return Err(TopologyError::Malformed(format!(
                    "duplicate link {}->{}",
                    l.source, l.dest
                )));
            }
            if mote_index(l.source).is_none() {
                return Err(TopologyError::Malformed(format!(
                    "link source {} is not a declared mote",
                    l.source
                )));
            }
            if l.dest != gateway && mote_index(l.dest).is_none() {
                return Err(TopologyError::Malformed(format!(
                    "link destination {} is not a declared mote or the gateway",
                    l.dest
                )));
            }
            if !l.beta.is_finite() || !l.alpha.is_finite() {
                return Err(TopologyError::Malformed(format!(
                    "link {}->{}: non-finite SNR coefficients",
                    l.source, l.dest
                )));
            }
        }
        for m in &motes {
            let n = links.iter().filter(|l| l.source == m.id).count();
            if n == 0 || n > 2 {
                return Err(TopologyError::ParentCount(m.id, n));
            }
        }

        // children-before-parents order by Kahn's algorithm; also detects
        // cycles and unreachable motes
        let n = motes.len();
        let idx_of = |id: MoteId| mote_index(id).expect("validated above");
        // out-degree toward unprocessed parents
        let computed = {
            let mut remaining: Vec<usize> = (0..n).collect();
            let mut done = vec![false; n];
            let mut order = Vec::with_capacity(n);
            while !remaining.is_empty() {
                // ready: every child of this mote is done
                let ready: Vec<usize> = remaining
                    .iter()
                    .copied()
                    .filter(|&i| {
                        links
                            .iter()
                            .filter(|l| l.dest == motes[i].id)
                            .all(|l| done[idx_of(l.source)])
                    })
                    .collect();
                if ready.is_empty() {
                    let stuck = motes[remaining[0]].id;
                    return Err(TopologyError::CycleDetected(stuck));
                }
                let mut ready = ready;
                ready.sort_by_key(|&i| motes[i].id);
                for i in ready {
                    done[i] = true;
                    order.push(i);
                    remaining.retain(|&r| r != i);
                }
            }
            order
        };

        // reachability: walk parent links to the gateway
        for m in &motes {
            let mut cur = m.id;
            let mut hops = 0;
            while cur != gateway {
                let Some(l) = links.iter().find(|l| l.source == cur) else {
                    return Err(TopologyError::Unreachable(m.id));
                };
                cur = l.dest;
                hops += 1;
                if hops > n + 1 {
                    return Err(TopologyError::CycleDetected(m.id));
                }
            }
        }

        let turn_order = match turn_order {
            None => computed,
            Some(ids) => {
                if ids.len() != n {
                    return Err(TopologyError::Malformed(format!(
                        "turn order lists {} motes, topology has {n}",
                        ids.len()
                    )));
                }
                let mut order = Vec::with_capacity(n);
                for id in ids {
                    let i = mote_index(id).ok_or_else(|| {
                        TopologyError::Malformed(format!("turn order references unknown mote {id}"))
                    })?;
                    if order.contains(&i) {
                        return Err(TopologyError::Malformed(format!(
                            "turn order repeats mote {id}"
                        )));
                    }
                    order.push(i);
                }
                // verify children-before-parents
                for (pos, &i) in order.iter().enumerate() {
                    for l in links.iter().filter(|l| l.dest == motes[i].id) {
                        let child_pos = order
                            .iter()
                            .position(|&j| motes[j].id == l.source)
                            .expect("validated above");
                        if child_pos > pos {
                            return Err(TopologyError::Malformed(format!(
                                "turn order puts mote {} before its child {}",
                                motes[i].id, l.source
                            )));
                        }
                    }
                }
                order
            }
        };

        Ok(Topology { gateway, motes, links, turn_order })
    }

    pub fn mote_count(&self) -> usize {
        self.motes.len()
    }

    pub fn mote_index(&self, id: MoteId) -> Option<usize> {
        self.motes.iter().position(|m| m.id == id)
    }

    pub fn link_index(&self, source: MoteId, dest: MoteId) -> Option<usize> {
        self.links.iter().position(|l| l.source == source && l.dest == dest)
    }

    /// Parent link indices of a mote, in declaration order (the first link is
    /// the floor side of a two-way split).
    pub fn parent_links(&self, id: MoteId) -> Vec<usize> {
        self.links
            .iter()
            .enumerate()
            .filter(|(_, l)| l.source == id)
            .map(|(i, _)| i)
            .collect()
    }

    /// Motes with two parent links, in mote order.
    pub fn split_motes(&self) -> Vec<MoteId> {
        self.motes
            .iter()
            .filter(|m| self.parent_links(m.id).len() == 2)
            .map(|m| m.id)
            .collect()
    }

    /// Mote indices in communication turn order (children before parents).
    pub fn turn_order(&self) -> &[usize] {
        &self.turn_order
    }
}

/// Per-link power and distribution-factor settings, indexed like
/// `Topology::links`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NetworkSettings {
    pub power: Vec<u8>,
    pub distribution: Vec<u8>,
}

impl NetworkSettings {
    /// The reference setting: maximum power everywhere, every factor 100
    /// (two-parent motes duplicate their packets).
    pub fn failsafe(topology: &Topology) -> Self {
        NetworkSettings {
            power: vec![MAX_POWER; topology.links.len()],
            distribution: vec![100; topology.links.len()],
        }
    }

    pub fn validate(&self, topology: &Topology) -> Result<(), SettingsError> {
        if self.power.len() != topology.links.len() || self.distribution.len() != topology.links.len()
        {
            return Err(SettingsError::LinkCount {
                got: self.power.len().min(self.distribution.len()),
                want: topology.links.len(),
            });
        }
        for (i, &p) in self.power.iter().enumerate() {
            if p > MAX_POWER {
                return Err(SettingsError::PowerRange { link: i, power: p });
            }
        }
        for (i, &d) in self.distribution.iter().enumerate() {
            if d > 100 || d % 20 != 0 {
                return Err(SettingsError::FactorStep { link: i, factor: d });
            }
        }
        for m in &topology.motes {
            let parents = topology.parent_links(m.id);
            match parents.len() {
                1 => {
                    let d = self.distribution[parents[0]];
                    if d != 100 {
                        return Err(SettingsError::SingleParent { mote: m.id, factor: d });
                    }
                }
                2 => {
                    let (a, b) = (self.distribution[parents[0]], self.distribution[parents[1]]);
                    let duplicating = a == 100 && b == 100;
                    if !duplicating && a as u16 + b as u16 != 100 {
                        return Err(SettingsError::FactorSum { mote: m.id, a, b });
                    }
                }
                _ => unreachable!("topology validation bounds parent count"),
            }
        }
        Ok(())
    }

    /// Stable hash of the settings for output artifacts.
    pub fn content_hash(&self) -> u64 {
        let mut bytes = Vec::with_capacity(self.power.len() * 2);
        bytes.extend_from_slice(&self.power);
        bytes.extend_from_slice(&self.distribution);
        crate::stats::fnv1a64(&bytes)
    }
}

/// Current environment uncertainties: per-mote load probability and the
/// effective per-link SNR offset (the slope stays calibrated in the
/// topology). `snr(link, power) = alpha[link] + beta[link] * power`, clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyState {
    pub load_probability: Vec<f64>,
    pub link_alpha: Vec<f64>,
}

impl UncertaintyState {
    /// Baseline state: topology alphas, periodic motes at probability 1,
    /// event-driven motes at `event_probability`.
    pub fn baseline(topology: &Topology, event_probability: f64) -> Self {
        UncertaintyState {
            load_probability: topology
                .motes
                .iter()
                .map(|m| match m.traffic {
                    TrafficClass::Periodic => 1.0,
                    TrafficClass::EventDriven => event_probability,
                })
                .collect(),
            link_alpha: topology.links.iter().map(|l| l.alpha).collect(),
        }
    }

    pub fn snr(&self, topology: &Topology, link: usize, power: u8) -> f64 {
        let raw = self.link_alpha[link] + topology.links[link].beta * power as f64;
        raw.clamp(-SNR_CLAMP, SNR_CLAMP)
    }
}

/// Probability that one packet transmission fails at the given SNR: zero at
/// non-negative SNR, then `-snr/20` clamped to 1.
pub fn link_failure_probability(snr: f64) -> f64 {
    if snr >= 0.0 {
        0.0
    } else {
        (-snr / 20.0).min(1.0)
    }
}

/// Smallest power in `0..=15` that lifts the link SNR to at least zero; 15
/// when no setting suffices.
pub fn min_power_for_link(alpha: f64, beta: f64) -> u8 {
    for p in 0..=MAX_POWER {
        if alpha + beta * p as f64 >= 0.0 {
            return p;
        }
    }
    MAX_POWER
}

/// Energy (Coulomb) to transmit `packets` at a power setting.
pub fn send_energy(packets: u64, power: u8) -> f64 {
    packets as f64 * SF_TIME * PCR[power as usize] / COULOMB_UNIT
}

/// Constant listening energy (Coulomb) per cycle for `mote_count` non-gateway
/// motes over `slots` slots.
pub fn receive_energy(mote_count: usize, slots: u64) -> f64 {
    mote_count as f64 * slots as f64 * RECEPTION_TIME * RECEPTION_COST / COULOMB_UNIT
}

/// Listening energy per cycle for the default 15-mote network.
pub fn receive_energy_per_cycle(topology: &Topology) -> f64 {
    receive_energy(topology.mote_count(), MAX_SLOTS)
}

/// Quality observations for one completed cycle, plus the packet accounting
/// that backs the conservation checks.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleStats {
    pub packets_generated: u64,
    pub packets_delivered: u64,
    /// Fraction of in-play packets (generated + carried-in + duplicated)
    /// lost to link failures or queue overflow this cycle.
    pub packet_loss: f64,
    pub energy_consumed: f64,
    /// Backlog at cycle end as a percentage of this cycle's generated load.
    pub latency_pct: f64,
    pub dropped_link: u64,
    pub dropped_overflow: u64,
    pub duplicated: u64,
    pub carried_in: u64,
    pub carried_out: u64,
}

/// The default 15-mote network (gateway 1, motes 2..=15, 17 links) with
/// calibration values for the deployment fixture. Motes 12 and 13 sample
/// periodically; the rest are event-driven.
pub fn deltaiot15() -> Topology {
    let periodic = [12u16, 13];
    let motes = (2u16..=15)
        .map(|id| MoteSpec {
            id,
            traffic: if periodic.contains(&id) {
                TrafficClass::Periodic
            } else {
                TrafficClass::EventDriven
            },
        })
        .collect();
    let l = |source, dest, alpha, beta| LinkSpec { source, dest, alpha, beta };
    let links = vec![
        l(2, 4, -4.8, 0.8),
        l(3, 1, -2.1, 0.7),
        l(4, 1, -6.6, 1.1),
        l(5, 9, -1.5, 0.5),
        l(6, 4, -9.0, 0.9),
        l(7, 2, -3.6, 1.2),
        l(7, 3, -5.0, 1.0),
        l(8, 1, -12.0, 1.0),
        l(9, 1, -2.4, 0.6),
        l(10, 6, -4.2, 0.7),
        l(10, 5, -6.0, 1.5),
        l(11, 7, -5.6, 0.8),
        l(12, 7, -3.0, 0.6),
        l(12, 3, -7.2, 0.9),
        l(13, 11, -1.8, 0.9),
        l(14, 12, -4.0, 0.5),
        l(15, 12, -6.5, 1.3),
    ];
    let turn = vec![8, 10, 13, 14, 15, 5, 6, 11, 12, 9, 7, 2, 3, 4];
    Topology::new(1, motes, links, Some(turn)).expect("default topology is valid")
}

/// The RSEM calibration fixture: the default network at minimum powers with
/// a 60/40 split and every mote event-driven at probability 0.57. The
/// associated reward is the load-driven send-energy component of a cycle
/// (total energy minus the constant listening term, which carries no
/// information for a relative stopping rule). The load probability is
/// calibrated so RSEM-5% stopping lands near 30 runs.
pub fn energy_rsem_fixture() -> (Topology, NetworkSettings, UncertaintyState) {
    let topology = deltaiot15();
    let mut settings = NetworkSettings::failsafe(&topology);
    for (i, link) in topology.links.iter().enumerate() {
        settings.power[i] = min_power_for_link(link.alpha, link.beta);
    }
    for mote in topology.split_motes() {
        let parents = topology.parent_links(mote);
        settings.distribution[parents[0]] = 60;
        settings.distribution[parents[1]] = 40;
    }
    let mut uncertainty = UncertaintyState::baseline(&topology, 0.57);
    for p in uncertainty.load_probability.iter_mut() {
        *p = 0.57;
    }
    (topology, settings, uncertainty)
}
