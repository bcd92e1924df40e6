//! Service-based health-assistance workflow: the second managed system.
//!
//! A run of the workflow either invokes the alarm service directly (panic
//! button) or runs a medical analysis followed by a drug notification or an
//! indirect alarm. Each invoked service fails independently with its
//! provider's failure rate; cost and response time add up over the invoked
//! services. Adaptation picks one provider per service type.

use serde::Deserialize;
use thiserror::Error;

use crate::mape::decision::{select, Decision};
use crate::mape::knowledge::Goal;
use crate::rng::StreamRng;
use crate::smc::{
    estimate_mean, estimate_probability, Estimate, MeanOpts, RunSample, SmcError,
};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CatalogError {
    #[error("catalog parse error: {0}")]
    Parse(String),
    #[error("{service} provider {index}: {problem}")]
    Invalid { service: &'static str, index: usize, problem: String },
    #[error("workflow probabilities must pair to 100: {0}")]
    Probabilities(String),
}

/// One provider's offer for a service type.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ServiceProvider {
    #[serde(rename = "failure-rate")]
    pub failure_rate: f64,
    pub cost: f64,
    #[serde(rename = "response-time")]
    pub response_time: f64,
}

/// Available providers per service type.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceCatalog {
    pub medical_analysis: Vec<ServiceProvider>,
    pub drug: Vec<ServiceProvider>,
    pub alarm: Vec<ServiceProvider>,
}

const FIXTURE_MEDICAL_FAILURES: [f64; 4] = [0.11, 0.04, 0.18, 0.08];
const FIXTURE_DRUG_FAILURES: [f64; 5] = [0.12, 0.07, 0.18, 0.10, 0.15];
const FIXTURE_ALARM_FAILURES: [f64; 5] = [0.01, 0.03, 0.05, 0.07, 0.02];

// Costs and response times are fixture data for the default catalog; only
// the failure rates above are calibrated values.
const FIXTURE_MEDICAL_COSTS: [f64; 4] = [8.0, 6.0, 11.0, 9.0];
const FIXTURE_DRUG_COSTS: [f64; 5] = [5.0, 7.0, 4.0, 6.0, 8.0];
const FIXTURE_ALARM_COSTS: [f64; 5] = [10.0, 6.0, 14.0, 9.0, 12.0];
const FIXTURE_MEDICAL_TIMES: [f64; 4] = [3.1, 4.0, 2.2, 3.6];
const FIXTURE_DRUG_TIMES: [f64; 5] = [1.5, 2.0, 1.2, 1.8, 2.5];
const FIXTURE_ALARM_TIMES: [f64; 5] = [0.8, 1.6, 0.5, 1.1, 2.0];

fn build_providers(failures: &[f64], costs: &[f64], times: &[f64]) -> Vec<ServiceProvider> {
    failures
        .iter()
        .zip(costs)
        .zip(times)
        .map(|((&failure_rate, &cost), &response_time)| ServiceProvider {
            failure_rate,
            cost,
            response_time,
        })
        .collect()
}

impl ServiceCatalog {
    /// Default catalog: 4 medical-analysis, 5 drug, and 5 alarm providers.
    pub fn default_fixture() -> Self {
        ServiceCatalog {
            medical_analysis: build_providers(
                &FIXTURE_MEDICAL_FAILURES,
                &FIXTURE_MEDICAL_COSTS,
                &FIXTURE_MEDICAL_TIMES,
            ),
            drug: build_providers(&FIXTURE_DRUG_FAILURES, &FIXTURE_DRUG_COSTS, &FIXTURE_DRUG_TIMES),
            alarm: build_providers(
                &FIXTURE_ALARM_FAILURES,
                &FIXTURE_ALARM_COSTS,
                &FIXTURE_ALARM_TIMES,
            ),
        }
    }

    /// Same providers with doubled failure rates (degraded-conditions
    /// fixture).
    pub fn doubled_failure_rates() -> Self {
        let mut c = Self::default_fixture();
        for list in [&mut c.medical_analysis, &mut c.drug, &mut c.alarm] {
            for p in list.iter_mut() {
                p.failure_rate = (p.failure_rate * 2.0).min(1.0);
            }
        }
        c
    }

    pub fn validate(&self) -> Result<(), CatalogError> {
        for (service, list) in [
            ("medical-analysis", &self.medical_analysis),
            ("drug", &self.drug),
            ("alarm", &self.alarm),
        ] {
            if list.is_empty() {
                return Err(CatalogError::Invalid {
                    service,
                    index: 0,
                    problem: "no providers".into(),
                });
            }
            for (index, p) in list.iter().enumerate() {
                if !(0.0..=1.0).contains(&p.failure_rate) {
                    return Err(CatalogError::Invalid {
                        service,
                        index,
                        problem: format!("failure rate {} outside [0,1]", p.failure_rate),
                    });
                }
                if p.cost < 0.0 || !p.cost.is_finite() {
                    return Err(CatalogError::Invalid {
                        service,
                        index,
                        problem: format!("negative or non-finite cost {}", p.cost),
                    });
                }
                if p.response_time < 0.0 || !p.response_time.is_finite() {
                    return Err(CatalogError::Invalid {
                        service,
                        index,
                        problem: format!("negative or non-finite response time {}", p.response_time),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogFile {
    #[serde(default)]
    params: Option<ParamsFile>,
    #[serde(rename = "medical-analysis")]
    medical_analysis: Vec<ServiceProvider>,
    drug: Vec<ServiceProvider>,
    alarm: Vec<ServiceProvider>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsFile {
    #[serde(rename = "p-emergency")]
    p_emergency: u8,
    #[serde(rename = "p-change-medication")]
    p_change_medication: u8,
}

/// Parse a catalog file (TOML), optionally carrying workflow parameters.
pub fn parse_catalog(text: &str) -> Result<(ServiceCatalog, WorkflowParams), CatalogError> {
    let file: CatalogFile = toml::from_str(text).map_err(|e| CatalogError::Parse(e.to_string()))?;
    let catalog = ServiceCatalog {
        medical_analysis: file.medical_analysis,
        drug: file.drug,
        alarm: file.alarm,
    };
    catalog.validate()?;
    let params = match file.params {
        None => WorkflowParams::default(),
        Some(p) => WorkflowParams::new(p.p_emergency, p.p_change_medication)?,
    };
    Ok((catalog, params))
}

/// Workflow path probabilities, in integer percent. Complementary pairs are
/// enforced: emergency + analysis = 100 and change-medication +
/// indirect-emergency = 100.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkflowParams {
    pub p_emergency: u8,
    pub p_analysis: u8,
    pub p_change_medication: u8,
    pub p_indirect_emergency: u8,
}

impl Default for WorkflowParams {
    fn default() -> Self {
        WorkflowParams {
            p_emergency: 22,
            p_analysis: 78,
            p_change_medication: 66,
            p_indirect_emergency: 34,
        }
    }
}

impl WorkflowParams {
    pub fn new(p_emergency: u8, p_change_medication: u8) -> Result<Self, CatalogError> {
        if p_emergency > 100 || p_change_medication > 100 {
            return Err(CatalogError::Probabilities(format!(
                "percentages above 100: {p_emergency}, {p_change_medication}"
            )));
        }
        Ok(WorkflowParams {
            p_emergency,
            p_analysis: 100 - p_emergency,
            p_change_medication,
            p_indirect_emergency: 100 - p_change_medication,
        })
    }
}

/// Chosen provider index per service type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServiceCombination {
    pub medical_analysis: usize,
    pub drug: usize,
    pub alarm: usize,
}

impl ServiceCombination {
    pub fn validate(&self, catalog: &ServiceCatalog) -> Result<(), CatalogError> {
        for (service, index, len) in [
            ("medical-analysis", self.medical_analysis, catalog.medical_analysis.len()),
            ("drug", self.drug, catalog.drug.len()),
            ("alarm", self.alarm, catalog.alarm.len()),
        ] {
            if index >= len {
                return Err(CatalogError::Invalid {
                    service,
                    index,
                    problem: format!("only {len} providers available"),
                });
            }
        }
        Ok(())
    }
}

/// Outcome of one workflow run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkflowOutcome {
    pub failed: bool,
    pub cost: f64,
    pub response_time: f64,
}

/// Simulate one workflow run.
pub fn run_workflow(
    combo: &ServiceCombination,
    params: &WorkflowParams,
    catalog: &ServiceCatalog,
    rng: &mut StreamRng,
) -> WorkflowOutcome {
    let mut failed = false;
    let mut cost = 0.0;
    let mut response_time = 0.0;
    let mut invoke = |p: &ServiceProvider, rng: &mut StreamRng| {
        failed |= rng.bernoulli(p.failure_rate);
        cost += p.cost;
        response_time += p.response_time;
    };
    let direct_emergency = rng.next_below(100) < params.p_emergency as u64;
    if direct_emergency {
        invoke(&catalog.alarm[combo.alarm], rng);
    } else {
        invoke(&catalog.medical_analysis[combo.medical_analysis], rng);
        let change_medication = rng.next_below(100) < params.p_change_medication as u64;
        if change_medication {
            invoke(&catalog.drug[combo.drug], rng);
        } else {
            invoke(&catalog.alarm[combo.alarm], rng);
        }
    }
    WorkflowOutcome { failed, cost, response_time }
}

/// All provider combinations, lexicographic over (medical, drug, alarm).
pub fn enumerate_combinations(catalog: &ServiceCatalog) -> Vec<ServiceCombination> {
    let mut out = Vec::with_capacity(
        catalog.medical_analysis.len() * catalog.drug.len() * catalog.alarm.len(),
    );
    for medical_analysis in 0..catalog.medical_analysis.len() {
        for drug in 0..catalog.drug.len() {
            for alarm in 0..catalog.alarm.len() {
                out.push(ServiceCombination { medical_analysis, drug, alarm });
            }
        }
    }
    out
}

/// Monte-Carlo estimate of the workflow failure probability.
pub fn predict_failure_rate(
    combo: &ServiceCombination,
    params: &WorkflowParams,
    catalog: &ServiceCatalog,
    epsilon: f64,
    alpha: f64,
    seed: u64,
) -> Result<Estimate, SmcError> {
    combo.validate(catalog).map_err(|e| SmcError::Model(e.to_string()))?;
    estimate_probability(
        |mut rng| {
            let out = run_workflow(combo, params, catalog, &mut rng);
            Ok(RunSample { value: out.failed, work: 1 })
        },
        epsilon,
        alpha,
        seed,
        None,
    )
}

/// Mean workflow cost with RSEM stopping.
pub fn predict_cost(
    combo: &ServiceCombination,
    params: &WorkflowParams,
    catalog: &ServiceCatalog,
    opts: MeanOpts,
    seed: u64,
) -> Result<Estimate, SmcError> {
    combo.validate(catalog).map_err(|e| SmcError::Model(e.to_string()))?;
    estimate_mean(
        |mut rng| {
            let out = run_workflow(combo, params, catalog, &mut rng);
            Ok(RunSample { value: out.cost, work: 1 })
        },
        opts,
        seed,
    )
}

/// Mean workflow response time with RSEM stopping; registered at runtime as
/// a new quality when the response-time goal is introduced.
pub fn response_time_model(
    combo: &ServiceCombination,
    params: &WorkflowParams,
    catalog: &ServiceCatalog,
    opts: MeanOpts,
    seed: u64,
) -> Result<Estimate, SmcError> {
    combo.validate(catalog).map_err(|e| SmcError::Model(e.to_string()))?;
    estimate_mean(
        |mut rng| {
            let out = run_workflow(combo, params, catalog, &mut rng);
            Ok(RunSample { value: out.response_time, work: 1 })
        },
        opts,
        seed,
    )
}

/// Estimation parameters for a combination sweep.
#[derive(Debug, Clone, Copy)]
pub struct HealthAnalysis {
    pub epsilon: f64,
    pub alpha: f64,
    pub cost_opts: MeanOpts,
    /// Estimate response time as well (after the response-time goal is
    /// introduced).
    pub include_response_time: bool,
    pub time_opts: MeanOpts,
}

impl Default for HealthAnalysis {
    fn default() -> Self {
        HealthAnalysis {
            epsilon: 0.02,
            alpha: 0.05,
            cost_opts: MeanOpts::new(0.005, 100, 20_000).expect("static options are valid"),
            include_response_time: false,
            time_opts: MeanOpts::new(0.01, 50, 10_000).expect("static options are valid"),
        }
    }
}

/// Verify every combination and apply the goal sequence; the quality names
/// are `failureRate` (percent), `cost`, and `responseTime`.
pub fn analyze_combinations(
    catalog: &ServiceCatalog,
    params: &WorkflowParams,
    analysis: &HealthAnalysis,
    seed: u64,
) -> Result<Vec<BTreeMap<String, Estimate>>, SmcError> {
    let combos = enumerate_combinations(catalog);
    let root = StreamRng::new(seed);
    combos
        .iter()
        .enumerate()
        .map(|(i, combo)| {
            let mut estimates = BTreeMap::new();
            let fail = predict_failure_rate(
                combo,
                params,
                catalog,
                analysis.epsilon,
                analysis.alpha,
                root.split(3 * i as u64).next_u64(),
            )?;
            // failure rate is tracked in percent, like the other goal units
            estimates.insert(
                "failureRate".to_string(),
                Estimate {
                    point: fail.point * 100.0,
                    lo: fail.lo * 100.0,
                    hi: fail.hi * 100.0,
                    ..fail
                },
            );
            let cost = predict_cost(
                combo,
                params,
                catalog,
                analysis.cost_opts,
                root.split(3 * i as u64 + 1).next_u64(),
            )?;
            estimates.insert("cost".to_string(), cost);
            if analysis.include_response_time {
                let time = response_time_model(
                    combo,
                    params,
                    catalog,
                    analysis.time_opts,
                    root.split(3 * i as u64 + 2).next_u64(),
                )?;
                estimates.insert("responseTime".to_string(), time);
            }
            Ok(estimates)
        })
        .collect()
}

/// Run the decision pipeline over all combinations: verify, filter by the
/// satisfaction goals, and pick the optimization winner.
pub fn select_combination(
    catalog: &ServiceCatalog,
    params: &WorkflowParams,
    goals: &[Goal],
    analysis: &HealthAnalysis,
    seed: u64,
) -> Result<(Decision, Vec<BTreeMap<String, Estimate>>), SmcError> {
    let estimates = analyze_combinations(catalog, params, analysis, seed)?;
    let refs: Vec<&BTreeMap<String, Estimate>> = estimates.iter().collect();
    let decision = select(goals, &refs);
    Ok((decision, estimates))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::workflow_exact;

    #[test]
    fn catalog_shape_and_validation() {
        let c = ServiceCatalog::default_fixture();
        c.validate().unwrap();
        assert_eq!(c.medical_analysis.len(), 4);
        assert_eq!(c.drug.len(), 5);
        assert_eq!(c.alarm.len(), 5);
        assert_eq!(enumerate_combinations(&c).len(), 100);

        let mut bad = c.clone();
        bad.alarm[0].failure_rate = 1.5;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn single_provider_catalog_has_one_combination() {
        let one = |f| vec![ServiceProvider { failure_rate: f, cost: 1.0, response_time: 1.0 }];
        let c = ServiceCatalog { medical_analysis: one(0.0), drug: one(0.0), alarm: one(0.0) };
        assert_eq!(enumerate_combinations(&c).len(), 1);
        // repeated calls give the same order
        assert_eq!(enumerate_combinations(&c), enumerate_combinations(&c));
    }

    #[test]
    fn zero_failure_catalog_never_fails() {
        let mut c = ServiceCatalog::default_fixture();
        for list in [&mut c.medical_analysis, &mut c.drug, &mut c.alarm] {
            for p in list.iter_mut() {
                p.failure_rate = 0.0;
            }
        }
        let params = WorkflowParams::default();
        let combo = ServiceCombination { medical_analysis: 0, drug: 0, alarm: 0 };
        let mut rng = StreamRng::new(1);
        for _ in 0..1000 {
            assert!(!run_workflow(&combo, &params, &c, &mut rng).failed);
        }
        let est = predict_failure_rate(&combo, &params, &c, 0.05, 0.05, 1).unwrap();
        assert_eq!(est.point, 0.0);
    }

    #[test]
    fn emergency_only_reduces_to_alarm_provider() {
        let params = WorkflowParams::new(100, 66).unwrap();
        let catalog = ServiceCatalog::default_fixture();
        let combo = ServiceCombination { medical_analysis: 0, drug: 0, alarm: 2 };
        let est = predict_failure_rate(&combo, &params, &catalog, 0.02, 0.05, 7).unwrap();
        let truth = catalog.alarm[2].failure_rate;
        assert!(
            (est.point - truth).abs() <= 0.02,
            "estimate {} vs alarm failure {truth}",
            est.point
        );
        // deterministic response time: stops at the first batch
        let t = response_time_model(
            &combo,
            &params,
            &catalog,
            MeanOpts::new(0.05, 2, 100).unwrap(),
            3,
        )
        .unwrap();
        assert_eq!(t.point, catalog.alarm[2].response_time);
        assert_eq!(t.runs, crate::smc::MEAN_BATCH);
    }

    #[test]
    fn default_combo_matches_the_closed_form() {
        let params = WorkflowParams::default();
        let catalog = ServiceCatalog::default_fixture();
        let combo = ServiceCombination { medical_analysis: 0, drug: 0, alarm: 0 };
        let exact = workflow_exact(&combo, &params, &catalog);
        let est = predict_failure_rate(&combo, &params, &catalog, 0.02, 0.05, 11).unwrap();
        assert!(
            (est.point - exact.failure_rate).abs() <= 0.02,
            "estimate {} vs oracle {}",
            est.point,
            exact.failure_rate
        );
        let cost =
            predict_cost(&combo, &params, &catalog, MeanOpts::new(0.01, 50, 20_000).unwrap(), 13)
                .unwrap();
        assert!(
            (cost.point - exact.cost).abs() <= 0.02 * exact.cost,
            "cost {} vs oracle {}",
            cost.point,
            exact.cost
        );
        let time = response_time_model(
            &combo,
            &params,
            &catalog,
            MeanOpts::new(0.01, 50, 20_000).unwrap(),
            17,
        )
        .unwrap();
        assert!(
            (time.point - exact.response_time).abs() <= 0.02 * exact.response_time,
            "time {} vs oracle {}",
            time.point,
            exact.response_time
        );
    }

    #[test]
    fn doubled_failure_rates_raise_the_estimate() {
        let params = WorkflowParams::default();
        let regular = ServiceCatalog::default_fixture();
        let doubled = ServiceCatalog::doubled_failure_rates();
        let combo = ServiceCombination { medical_analysis: 0, drug: 0, alarm: 0 };
        let a = predict_failure_rate(&combo, &params, &regular, 0.02, 0.05, 21).unwrap();
        let b = predict_failure_rate(&combo, &params, &doubled, 0.02, 0.05, 21).unwrap();
        assert!(b.point > a.point, "doubled rates {} vs regular {}", b.point, a.point);
    }

    #[test]
    fn catalog_file_parses() {
        let text = r#"
            [params]
            p-emergency = 30
            p-change-medication = 50

            [[medical-analysis]]
            failure-rate = 0.1
            cost = 5.0
            response-time = 2.0

            [[drug]]
            failure-rate = 0.05
            cost = 3.0
            response-time = 1.0

            [[alarm]]
            failure-rate = 0.01
            cost = 8.0
            response-time = 0.5
        "#;
        let (catalog, params) = parse_catalog(text).unwrap();
        assert_eq!(catalog.medical_analysis.len(), 1);
        assert_eq!(params.p_emergency, 30);
        assert_eq!(params.p_analysis, 70);
        assert_eq!(params.p_indirect_emergency, 50);
    }
}
