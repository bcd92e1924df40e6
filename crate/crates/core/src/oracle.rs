//! Independent reference computations used by the test suites.
//!
//! Everything here is computed by exhaustive enumeration or closed-form
//! algebra and never calls the simulators or estimators it is used to check.

use crate::deltaiot::{link_failure_probability, NetworkSettings, Topology, UncertaintyState};
use crate::healthsvc::{ServiceCatalog, ServiceCombination, WorkflowParams};

/// Exact probability that one packet episode is lost, by exhaustive
/// enumeration of every routing path and failure position.
///
/// The episode model: the source mote is drawn proportionally to load
/// probability, each hop picks a parent link proportionally to the
/// distribution factors, and each transmission fails independently with the
/// link failure probability at the configured power. Intended for small
/// topologies; the path count is exponential in principle.
pub fn packet_loss_exact(
    topology: &Topology,
    settings: &NetworkSettings,
    uncertainty: &UncertaintyState,
) -> f64 {
    let total_load: f64 = uncertainty.load_probability.iter().sum();
    assert!(total_load > 0.0, "packet_loss_exact needs at least one generating mote");

    // enumerate all (path, fail-at-hop) outcomes from one source
    fn loss_from(
        topology: &Topology,
        settings: &NetworkSettings,
        uncertainty: &UncertaintyState,
        mote: u16,
        prefix_prob: f64,
    ) -> f64 {
        if mote == topology.gateway {
            return 0.0;
        }
        let parents = topology.parent_links(mote);
        let weights: Vec<f64> =
            parents.iter().map(|&l| settings.distribution[l] as f64).collect();
        let total: f64 = weights.iter().sum();
        assert!(total > 0.0, "mote {mote} has all-zero distribution factors");
        let mut lost = 0.0;
        for (&link, w) in parents.iter().zip(&weights) {
            if *w == 0.0 {
                continue;
            }
            let p_route = prefix_prob * w / total;
            let snr = uncertainty.snr(topology, link, settings.power[link]);
            let p_fail = link_failure_probability(snr);
            lost += p_route * p_fail;
            lost += loss_from(
                topology,
                settings,
                uncertainty,
                topology.links[link].dest,
                p_route * (1.0 - p_fail),
            );
        }
        lost
    }

    topology
        .motes
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let p_source = uncertainty.load_probability[i] / total_load;
            if p_source == 0.0 {
                0.0
            } else {
                p_source * loss_from(topology, settings, uncertainty, m.id, 1.0)
            }
        })
        .sum()
}

/// Expected outcome of the health-assistance workflow for one service
/// combination, from the independence assumption:
///
/// - a run takes the direct-emergency path with probability `p_EMERGENCY`
///   (alarm only), otherwise medical analysis runs and is followed by either
///   the drug service or the alarm service;
/// - the run fails iff any invoked service fails, independently.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkflowExpectation {
    pub failure_rate: f64,
    pub cost: f64,
    pub response_time: f64,
}

pub fn workflow_exact(
    combo: &ServiceCombination,
    params: &WorkflowParams,
    catalog: &ServiceCatalog,
) -> WorkflowExpectation {
    let p_e = params.p_emergency as f64 / 100.0;
    let p_a = params.p_analysis as f64 / 100.0;
    let p_cm = params.p_change_medication as f64 / 100.0;
    let p_ie = params.p_indirect_emergency as f64 / 100.0;

    let med = &catalog.medical_analysis[combo.medical_analysis];
    let drug = &catalog.drug[combo.drug];
    let alarm = &catalog.alarm[combo.alarm];

    let survive_analysis_path =
        (1.0 - med.failure_rate) * (p_cm * (1.0 - drug.failure_rate) + p_ie * (1.0 - alarm.failure_rate));
    let failure_rate = p_e * alarm.failure_rate + p_a * (1.0 - survive_analysis_path);

    let cost = p_e * alarm.cost + p_a * (med.cost + p_cm * drug.cost + p_ie * alarm.cost);
    let response_time = p_e * alarm.response_time
        + p_a * (med.response_time + p_cm * drug.response_time + p_ie * alarm.response_time);

    WorkflowExpectation { failure_rate, cost, response_time }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deltaiot::{LinkSpec, MoteSpec, TrafficClass};

    fn single_link(alpha: f64) -> (Topology, NetworkSettings, UncertaintyState) {
        let t = Topology::new(
            1,
            vec![MoteSpec { id: 2, traffic: TrafficClass::Periodic }],
            vec![LinkSpec { source: 2, dest: 1, alpha, beta: 0.0 }],
            None,
        )
        .unwrap();
        let s = NetworkSettings::failsafe(&t);
        let u = UncertaintyState::baseline(&t, 1.0);
        (t, s, u)
    }

    #[test]
    fn single_link_loss_is_the_failure_probability() {
        let (t, s, u) = single_link(-10.0);
        assert!((packet_loss_exact(&t, &s, &u) - 0.5).abs() < 1e-12);
        let (t, s, u) = single_link(3.0);
        assert_eq!(packet_loss_exact(&t, &s, &u), 0.0);
    }

    #[test]
    fn two_hop_chain_composes_failures() {
        // loss = 1 - 0.5 * 0.5 at snr -10 on both hops
        let t = Topology::new(
            1,
            vec![
                MoteSpec { id: 2, traffic: TrafficClass::Periodic },
                MoteSpec { id: 3, traffic: TrafficClass::EventDriven },
            ],
            vec![
                LinkSpec { source: 2, dest: 1, alpha: -10.0, beta: 0.0 },
                LinkSpec { source: 3, dest: 2, alpha: -10.0, beta: 0.0 },
            ],
            None,
        )
        .unwrap();
        let s = NetworkSettings::failsafe(&t);
        let mut u = UncertaintyState::baseline(&t, 1.0);
        // only mote 3 generates: episodes start at 3 and take two hops
        u.load_probability = vec![0.0, 1.0];
        assert!((packet_loss_exact(&t, &s, &u) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn split_routes_mix_by_distribution() {
        // mote 4 routes to 2 (dead) or 3 (perfect); both relay to gateway
        let t = Topology::new(
            1,
            vec![
                MoteSpec { id: 2, traffic: TrafficClass::EventDriven },
                MoteSpec { id: 3, traffic: TrafficClass::EventDriven },
                MoteSpec { id: 4, traffic: TrafficClass::Periodic },
            ],
            vec![
                LinkSpec { source: 2, dest: 1, alpha: -50.0, beta: 0.0 },
                LinkSpec { source: 3, dest: 1, alpha: 10.0, beta: 0.0 },
                LinkSpec { source: 4, dest: 2, alpha: 10.0, beta: 0.0 },
                LinkSpec { source: 4, dest: 3, alpha: 10.0, beta: 0.0 },
            ],
            None,
        )
        .unwrap();
        let mut s = NetworkSettings::failsafe(&t);
        let p = t.parent_links(4);
        s.distribution[p[0]] = 20;
        s.distribution[p[1]] = 80;
        let mut u = UncertaintyState::baseline(&t, 0.0);
        u.load_probability = vec![0.0, 0.0, 1.0];
        // 20% via dead mote 2 -> lost at 2->1; 80% via 3 -> delivered
        assert!((packet_loss_exact(&t, &s, &u) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn workflow_default_combo_matches_hand_expansion() {
        let params = WorkflowParams::default();
        let catalog = ServiceCatalog::default_fixture();
        let combo = ServiceCombination { medical_analysis: 0, drug: 0, alarm: 0 };
        let e = workflow_exact(&combo, &params, &catalog);
        let (f_m, f_d, f_a) = (0.11, 0.12, 0.01);
        let expect = 0.22 * f_a + 0.78 * (1.0 - (1.0 - f_m) * (0.66 * (1.0 - f_d) + 0.34 * (1.0 - f_a)));
        assert!((e.failure_rate - expect).abs() < 1e-12);
    }
}
