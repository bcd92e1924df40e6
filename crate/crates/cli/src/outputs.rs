//! Output artifact rendering. Schemas are versioned in `docs/outputs.md`
//! and pinned by golden tests.

use selfadapt_core::deltaiot::CycleStats;
use selfadapt_core::mape::DecisionRecord;
use serde::Serialize;

/// Schema v1 of the per-cycle simulation stats.
pub const SIM_STATS_HEADER: &str = "cycle,packetLoss,energy,latencyPct,settingsHash";

#[derive(Serialize)]
pub struct SimRow {
    pub cycle: u64,
    #[serde(rename = "packetLoss")]
    pub packet_loss: f64,
    pub energy: f64,
    #[serde(rename = "latencyPct")]
    pub latency_pct: f64,
    #[serde(rename = "settingsHash")]
    pub settings_hash: String,
}

impl SimRow {
    pub fn new(cycle: u64, stats: &CycleStats, settings_hash: u64) -> Self {
        SimRow {
            cycle,
            packet_loss: stats.packet_loss,
            energy: stats.energy_consumed,
            latency_pct: stats.latency_pct,
            settings_hash: format!("{settings_hash:016x}"),
        }
    }
}

pub fn sim_csv(rows: &[SimRow]) -> String {
    let mut out = String::from(SIM_STATS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{}\n",
            r.cycle, r.packet_loss, r.energy, r.latency_pct, r.settings_hash
        ));
    }
    out
}

/// Schema v1 of the health decision log.
pub const HEALTH_HEADER: &str =
    "cycle,combosTotal,chosenIndex,failureRateEst,costEst,responseTimeEst,failsafe";

#[derive(Serialize)]
pub struct HealthRow {
    pub cycle: u64,
    #[serde(rename = "combosTotal")]
    pub combos_total: usize,
    #[serde(rename = "chosenIndex")]
    pub chosen_index: Option<usize>,
    #[serde(rename = "failureRateEst")]
    pub failure_rate_est: Option<f64>,
    #[serde(rename = "costEst")]
    pub cost_est: Option<f64>,
    #[serde(rename = "responseTimeEst")]
    pub response_time_est: Option<f64>,
    pub failsafe: bool,
}

fn opt(v: &Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn health_csv(rows: &[HealthRow]) -> String {
    let mut out = String::from(HEALTH_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.cycle,
            r.combos_total,
            r.chosen_index.map(|i| i.to_string()).unwrap_or_else(|| "-1".into()),
            opt(&r.failure_rate_est),
            opt(&r.cost_est),
            opt(&r.response_time_est),
            r.failsafe as u8,
        ));
    }
    out
}

/// Schema v1 of the tradeoff summary (wall-clock measurements live in
/// `timings.csv`, never here).
pub const TRADEOFF_SUMMARY_HEADER: &str = "setting,epsilon,alpha,rsem,lossQ1,lossMedian,lossQ3,energyMean,energyQ1,energyMedian,energyQ3,meanPacketLossRuns,meanEnergyRuns";

pub const TRADEOFF_TIMINGS_HEADER: &str = "setting,wallClockMsTotal,wallClockMsPerCycle";

/// Quartiles by the nearest-rank method over a sorted copy.
pub fn quartiles(values: &[f64]) -> (f64, f64, f64) {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let pick = |q: f64| v[((v.len() as f64 * q).ceil() as usize).clamp(1, v.len()) - 1];
    (pick(0.25), pick(0.5), pick(0.75))
}

pub struct SettingSummary {
    pub index: usize,
    pub epsilon: f64,
    pub alpha: f64,
    pub rsem: f64,
    pub loss_quartiles: (f64, f64, f64),
    pub energy_mean: f64,
    pub energy_quartiles: (f64, f64, f64),
    pub mean_packet_loss_runs: f64,
    pub mean_energy_runs: f64,
}

impl SettingSummary {
    pub fn from_records(
        index: usize,
        (epsilon, alpha, rsem): (f64, f64, f64),
        records: &[DecisionRecord],
    ) -> Self {
        let losses: Vec<f64> = records.iter().map(|r| r.realized.packet_loss).collect();
        let energies: Vec<f64> = records.iter().map(|r| r.realized.energy_consumed).collect();
        let mean_runs = |quality: &str| {
            let runs: Vec<f64> = records
                .iter()
                .filter_map(|r| r.estimates.get(quality).map(|e| e.runs as f64))
                .collect();
            if runs.is_empty() { 0.0 } else { runs.iter().sum::<f64>() / runs.len() as f64 }
        };
        SettingSummary {
            index,
            epsilon,
            alpha,
            rsem,
            loss_quartiles: quartiles(&losses),
            energy_mean: energies.iter().sum::<f64>() / energies.len() as f64,
            energy_quartiles: quartiles(&energies),
            mean_packet_loss_runs: mean_runs("packetLoss"),
            mean_energy_runs: mean_runs("energy"),
        }
    }
}

pub fn tradeoff_summary_csv(rows: &[SettingSummary]) -> String {
    let mut out = String::from(TRADEOFF_SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.2},{:.2}\n",
            r.index,
            r.epsilon,
            r.alpha,
            r.rsem,
            r.loss_quartiles.0,
            r.loss_quartiles.1,
            r.loss_quartiles.2,
            r.energy_mean,
            r.energy_quartiles.0,
            r.energy_quartiles.1,
            r.energy_quartiles.2,
            r.mean_packet_loss_runs,
            r.mean_energy_runs,
        ));
    }
    out
}
