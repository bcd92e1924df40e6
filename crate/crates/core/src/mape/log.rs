//! Decision-log CSV rendering. The column set is schema v1, pinned by
//! golden tests and documented in `docs/outputs.md`.

use super::runner::DecisionRecord;

/// Schema v1 header. Estimate columns hold the chosen option's values in
/// goal units; `event` records activations and fallbacks.
pub const DECISION_LOG_HEADER: &str = "cycle,optionsTotal,optionsVerified,chosenOptionIndex,packetLossEst,energyEst,latencyEst,planSteps,failsafe,event";

fn fmt_est(record: &DecisionRecord, quality: &str) -> String {
    match record.estimates.get(quality) {
        Some(e) => format!("{:.6}", e.point),
        None => String::new(),
    }
}

/// Render records to CSV. Qualities beyond the three standard columns are
/// appended as extra `<quality>Est` columns after `event`, in sorted order.
pub fn decision_log_csv(records: &[DecisionRecord]) -> String {
    let mut extra: Vec<String> = Vec::new();
    for r in records {
        for q in r.estimates.keys() {
            if !matches!(q.as_str(), "packetLoss" | "energy" | "latency")
                && !extra.contains(q)
            {
                extra.push(q.clone());
            }
        }
    }
    extra.sort();
    let mut out = String::from(DECISION_LOG_HEADER);
    for q in &extra {
        out.push_str(&format!(",{q}Est"));
    }
    out.push('\n');
    for r in records {
        let chosen = match r.chosen_option {
            Some(i) => i.to_string(),
            None if r.analysis_ran => "-1".to_string(),
            None => String::new(),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}",
            r.cycle,
            r.options_total,
            r.options_verified,
            chosen,
            fmt_est(r, "packetLoss"),
            fmt_est(r, "energy"),
            fmt_est(r, "latency"),
            r.plan_steps,
            r.failsafe as u8,
            r.event,
        ));
        for q in &extra {
            out.push(',');
            out.push_str(&fmt_est(r, q));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deltaiot::CycleStats;
    use crate::smc::Estimate;
    use std::collections::BTreeMap;

    fn blank_stats() -> CycleStats {
        CycleStats {
            packets_generated: 0,
            packets_delivered: 0,
            packet_loss: 0.0,
            energy_consumed: 0.0,
            latency_pct: 0.0,
            dropped_link: 0,
            dropped_overflow: 0,
            duplicated: 0,
            carried_in: 0,
            carried_out: 0,
        }
    }

    #[test]
    fn header_is_pinned() {
        assert_eq!(
            DECISION_LOG_HEADER,
            "cycle,optionsTotal,optionsVerified,chosenOptionIndex,packetLossEst,energyEst,latencyEst,planSteps,failsafe,event"
        );
    }

    #[test]
    fn rows_render_deterministically() {
        let mut estimates = BTreeMap::new();
        estimates.insert("packetLoss".to_string(), Estimate::exact(3.25));
        estimates.insert("energy".to_string(), Estimate::exact(16.5));
        let record = DecisionRecord {
            cycle: 4,
            options_total: 216,
            options_verified: 216,
            chosen_option: Some(17),
            estimates,
            plan_steps: 2,
            failsafe: false,
            analysis_ran: true,
            adaptation_needed: true,
            partial: false,
            event: String::new(),
            realized: blank_stats(),
        };
        let csv = decision_log_csv(&[record.clone()]);
        let expect = format!(
            "{DECISION_LOG_HEADER}\n4,216,216,17,3.250000,16.500000,,2,0,\n"
        );
        assert_eq!(csv, expect);
        assert_eq!(csv, decision_log_csv(&[record]));
    }

    #[test]
    fn failsafe_rows_mark_minus_one() {
        let record = DecisionRecord {
            cycle: 0,
            options_total: 10,
            options_verified: 10,
            chosen_option: None,
            estimates: BTreeMap::new(),
            plan_steps: 1,
            failsafe: true,
            analysis_ran: true,
            adaptation_needed: true,
            partial: false,
            event: String::new(),
            realized: blank_stats(),
        };
        let csv = decision_log_csv(&[record]);
        assert!(csv.lines().nth(1).unwrap().starts_with("0,10,10,-1,,,,1,1,"));
    }

    #[test]
    fn extra_qualities_append_columns() {
        let mut estimates = BTreeMap::new();
        estimates.insert("responseTime".to_string(), Estimate::exact(2.5));
        let record = DecisionRecord {
            cycle: 1,
            options_total: 1,
            options_verified: 1,
            chosen_option: Some(0),
            estimates,
            plan_steps: 0,
            failsafe: false,
            analysis_ran: true,
            adaptation_needed: false,
            partial: false,
            event: String::new(),
            realized: blank_stats(),
        };
        let csv = decision_log_csv(&[record]);
        assert!(csv.starts_with(&format!("{DECISION_LOG_HEADER},responseTimeEst\n")));
        assert!(csv.contains(",2.500000\n"));
    }
}
