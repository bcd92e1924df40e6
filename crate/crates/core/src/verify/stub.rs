//! Stub scenarios for design-time verification of the feedback loop.
//!
//! A stub scenario scripts the probe (a sequence of observed samples, each
//! optionally with an alternative observation explored as nondeterminism),
//! the verifier (per-option quality estimates, possibly partial), and the
//! effector check (an independent re-derivation of the expected decision).
//! [`compose_model`] bakes a scenario and a goal sequence into a closed
//! `.anm` network of Probe/Monitor/Analyzer/Verifier/Planner/Executor/
//! Effector automata; the same scenario also drives the native loop through
//! [`run_native_stub_loop`], and a differential test holds the two to the
//! same decision trace.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::Deserialize;
use thiserror::Error;

use crate::deltaiot::{
    CycleStats, LinkSpec, MoteSpec, NetworkSettings, ProbeError, Topology, TrafficClass,
    UncertaintyState, MOTE_LOAD,
};
use crate::engine::{parse_model, simulate, AutomatonNetwork, Value};
use crate::mape::{
    enumerate_options, Comparator, Configuration, EnvironmentSnapshot, Goal, GoalKind, Knowledge,
    ManagedSystem, MapeLoop, OptionVerifier, QualitySnapshot,
};
use crate::qmodels::{builtin_model, ModelRegistry};
use crate::rng::StreamRng;
use crate::smc::{Estimate, SmcError};

use super::props::{parse_properties, Property};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum StubError {
    #[error("stub scenario: {0}")]
    Invalid(String),
    #[error("stub scenario parse error: {0}")]
    Parse(String),
    #[error("model composition: {0}")]
    Compose(String),
}

/// Quality names a stub scenario may script.
const STUB_QUALITIES: [&str; 3] = ["packetLoss", "energy", "latency"];

/// One scripted probe sample plus the verifier's outputs for it.
#[derive(Debug, Clone, PartialEq)]
pub struct StubSample {
    /// Observed quality values (integer goal units) for the current config.
    pub observed: BTreeMap<String, i64>,
    /// Optional alternative observation, explored as nondeterminism.
    pub observed_alt: Option<BTreeMap<String, i64>>,
    /// Options the verifier manages to verify (< option count = partial).
    pub verified_count: usize,
    /// Scripted per-option estimates, quality -> one value per option.
    pub estimates: BTreeMap<String, Vec<i64>>,
}

/// A finite scripted scenario over a fixed option count.
#[derive(Debug, Clone, PartialEq)]
pub struct StubScenario {
    pub name: String,
    pub option_count: usize,
    pub initial_option: usize,
    pub samples: Vec<StubSample>,
}

impl StubScenario {
    pub fn validate(&self) -> Result<(), StubError> {
        if self.samples.is_empty() {
            return Err(StubError::Invalid(format!("scenario `{}` has no samples", self.name)));
        }
        if self.option_count == 0 || self.initial_option >= self.option_count {
            return Err(StubError::Invalid(format!(
                "scenario `{}`: initial option {} outside 0..{}",
                self.name, self.initial_option, self.option_count
            )));
        }
        for (si, sample) in self.samples.iter().enumerate() {
            if sample.verified_count > self.option_count {
                return Err(StubError::Invalid(format!(
                    "scenario `{}` sample {si}: verified count {} exceeds option count",
                    self.name, sample.verified_count
                )));
            }
            for observed in
                std::iter::once(&sample.observed).chain(sample.observed_alt.iter())
            {
                for (q, v) in observed {
                    if !STUB_QUALITIES.contains(&q.as_str()) {
                        return Err(StubError::Invalid(format!(
                            "scenario `{}` sample {si}: unknown quality `{q}`",
                            self.name
                        )));
                    }
                    if !(0..=10_000).contains(v) {
                        return Err(StubError::Invalid(format!(
                            "scenario `{}` sample {si}: observed {q} = {v} outside [0,10000]",
                            self.name
                        )));
                    }
                }
            }
            for (q, vals) in &sample.estimates {
                if !STUB_QUALITIES.contains(&q.as_str()) {
                    return Err(StubError::Invalid(format!(
                        "scenario `{}` sample {si}: unknown quality `{q}`",
                        self.name
                    )));
                }
                if vals.len() != self.option_count {
                    return Err(StubError::Invalid(format!(
                        "scenario `{}` sample {si}: {q} lists {} estimates for {} options",
                        self.name,
                        vals.len(),
                        self.option_count
                    )));
                }
                if vals.iter().any(|v| !(0..=10_000).contains(v)) {
                    return Err(StubError::Invalid(format!(
                        "scenario `{}` sample {si}: {q} estimate outside [0,10000]",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Every quality referenced by a sample's verifier script.
    pub fn qualities(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in &self.samples {
            for q in s.estimates.keys() {
                if !out.contains(q) {
                    out.push(q.clone());
                }
            }
        }
        out.sort();
        out
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    options: usize,
    #[serde(rename = "initial-option")]
    initial_option: usize,
    #[serde(default)]
    sample: Vec<SampleFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleFile {
    observed: BTreeMap<String, i64>,
    #[serde(rename = "observed-alt")]
    observed_alt: Option<BTreeMap<String, i64>>,
    verified: usize,
    #[serde(rename = "packet-loss")]
    packet_loss: Option<Vec<i64>>,
    energy: Option<Vec<i64>>,
    latency: Option<Vec<i64>>,
}

/// Parse a stub scenario file (TOML).
pub fn parse_stub_scenario(text: &str) -> Result<StubScenario, StubError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| StubError::Parse(e.to_string()))?;
    let samples = file
        .sample
        .into_iter()
        .map(|s| {
            let mut estimates = BTreeMap::new();
            if let Some(v) = s.packet_loss {
                estimates.insert("packetLoss".to_string(), v);
            }
            if let Some(v) = s.energy {
                estimates.insert("energy".to_string(), v);
            }
            if let Some(v) = s.latency {
                estimates.insert("latency".to_string(), v);
            }
            StubSample {
                observed: s.observed,
                observed_alt: s.observed_alt,
                verified_count: s.verified,
                estimates,
            }
        })
        .collect();
    let scenario = StubScenario {
        name: file.name,
        option_count: file.options,
        initial_option: file.initial_option,
        samples,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Planner faults injectable for counterexample tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    None,
    /// The planner picks the worst optimization value instead of the best.
    PlannerPicksWorst,
}

struct QualityNames;

impl QualityNames {
    fn observed_var(q: &str) -> &'static str {
        match q {
            "packetLoss" => "qPacketLoss",
            "energy" => "qEnergy",
            "latency" => "qLatency",
            _ => unreachable!("validated stub quality"),
        }
    }

    fn last_var(q: &str) -> &'static str {
        match q {
            "packetLoss" => "lastPl",
            "energy" => "lastEn",
            "latency" => "lastLat",
            _ => unreachable!("validated stub quality"),
        }
    }

    fn array(q: &str) -> &'static str {
        match q {
            "packetLoss" => "pl",
            "energy" => "en",
            "latency" => "lat",
            _ => unreachable!("validated stub quality"),
        }
    }

    fn obs_array(q: &str) -> &'static str {
        match q {
            "packetLoss" => "obsPl",
            "energy" => "obsEn",
            "latency" => "obsLat",
            _ => unreachable!("validated stub quality"),
        }
    }

    fn accessor(q: &str) -> &'static str {
        match q {
            "packetLoss" => "plAt",
            "energy" => "enAt",
            "latency" => "latAt",
            _ => unreachable!("validated stub quality"),
        }
    }
}

fn fmt_threshold(threshold: f64) -> String {
    let s = format!("{threshold}");
    if s.contains('.') || s.contains('e') || s.contains('E') {
        s
    } else {
        format!("{s}.0")
    }
}

/// `!(value CMP threshold)` texts for a satisfaction goal over an expression.
fn violation_cond(value_expr: &str, comparator: Comparator, threshold: f64) -> String {
    let cmp = match comparator {
        Comparator::Below => "<",
        Comparator::AtMost => "<=",
        Comparator::Above => ">",
        Comparator::AtLeast => ">=",
    };
    format!("!({value_expr} {cmp} {})", fmt_threshold(threshold))
}

fn satisfaction_goals(goals: &[Goal]) -> Vec<(&Goal, Comparator, f64)> {
    goals
        .iter()
        .filter_map(|g| match &g.kind {
            GoalKind::Satisfaction { comparator, threshold } => Some((g, *comparator, *threshold)),
            GoalKind::Optimization { .. } => None,
        })
        .collect()
}

fn optimization_goal(goals: &[Goal]) -> Result<&Goal, StubError> {
    let opts: Vec<&Goal> = goals
        .iter()
        .filter(|g| matches!(g.kind, GoalKind::Optimization { .. }))
        .collect();
    match opts.as_slice() {
        [g] => Ok(g),
        _ => Err(StubError::Compose(format!(
            "stub models support exactly one optimization goal, found {}",
            opts.len()
        ))),
    }
}

/// The Monitor/Analyzer leads-to properties and the no-incorrect-adaptation
/// reachability property, generated to match a goal sequence (TOML text,
/// parseable against the composed model).
pub fn stub_property_text(goals: &[Goal]) -> Result<String, StubError> {
    let sats = satisfaction_goals(goals);
    if sats.is_empty() {
        return Err(StubError::Compose("goal sequence has no satisfaction goal".into()));
    }
    let violated: Vec<String> = sats
        .iter()
        .map(|(g, c, t)| violation_cond(QualityNames::observed_var(&g.quality), *c, *t))
        .collect();
    let violated = violated.join(" || ");
    let mut out = String::new();
    let _ = writeln!(out, "[[property]]");
    let _ = writeln!(out, "name = \"no-incorrect-adaptation\"");
    let _ = writeln!(out, "kind = \"never-reach\"");
    let _ = writeln!(out, "predicate = \"at(Probe, AdaptationIncorrect)\"");
    let _ = writeln!(out);
    let _ = writeln!(out, "[[property]]");
    let _ = writeln!(out, "name = \"violation-triggers-adaptation-needed\"");
    let _ = writeln!(out, "kind = \"leads-to\"");
    let _ = writeln!(
        out,
        "premise = \"at(Monitor, MonitorCompleted) && analysisReq == 1 && ({violated})\""
    );
    let _ = writeln!(out, "conclusion = \"at(Analyzer, AdaptationNeeded)\"");
    let _ = writeln!(out, "bound = 8");
    let _ = writeln!(out);
    let _ = writeln!(out, "[[property]]");
    let _ = writeln!(out, "name = \"compliance-triggers-no-adaptation\"");
    let _ = writeln!(out, "kind = \"leads-to\"");
    let _ = writeln!(
        out,
        "premise = \"at(Monitor, MonitorCompleted) && analysisReq == 1 && !({violated})\""
    );
    let _ = writeln!(out, "conclusion = \"at(Analyzer, NoAdaptationNeeded)\"");
    let _ = writeln!(out, "bound = 8");
    Ok(out)
}

/// Parse the generated standard properties against a composed model.
pub fn standard_properties(
    net: &AutomatonNetwork,
    goals: &[Goal],
) -> Result<Vec<Property>, StubError> {
    let text = stub_property_text(goals)?;
    parse_properties(&text, net).map_err(|e| StubError::Compose(e.to_string()))
}

fn int_array(name: &str, bound: i64, values: &[i64]) -> String {
    let vals: Vec<String> = values.iter().map(|v| v.to_string()).collect();
    format!("int[0,{bound}] {name}[{}] = {{{}}};\n", values.len(), vals.join(", "))
}

/// Compose a scenario and a goal sequence into a closed `.anm` model of the
/// full loop plus stubs.
pub fn compose_model(
    scenario: &StubScenario,
    goals: &[Goal],
    fault: Fault,
) -> Result<String, StubError> {
    scenario.validate()?;
    let sats = satisfaction_goals(goals);
    if sats.is_empty() {
        return Err(StubError::Compose("goal sequence has no satisfaction goal".into()));
    }
    let opt_goal = optimization_goal(goals)?;
    let qualities = scenario.qualities();
    for (g, _, _) in &sats {
        if !qualities.contains(&g.quality) {
            return Err(StubError::Compose(format!(
                "goal quality `{}` has no estimate script in scenario `{}`",
                g.quality, scenario.name
            )));
        }
    }
    if !qualities.contains(&opt_goal.quality) {
        return Err(StubError::Compose(format!(
            "optimization quality `{}` has no estimate script in scenario `{}`",
            opt_goal.quality, scenario.name
        )));
    }
    let nopt = scenario.option_count;
    let nsamples = scenario.samples.len();

    let mut s = String::new();
    let _ = writeln!(s, "const int NOPT = {nopt};");
    let _ = writeln!(s, "const int NSAMPLES = {nsamples};");
    let _ = writeln!(s, "int[0,{nsamples}] sampleIdx = 0;");
    for q in &qualities {
        let _ = writeln!(s, "int[0,10000] {} = 0;", QualityNames::observed_var(q));
        let _ = writeln!(s, "int[0,10000] {} = 0;", QualityNames::last_var(q));
    }
    let _ = writeln!(s, "int[0,{nopt}] currentOpt = {};", scenario.initial_option);
    let _ = writeln!(s, "int[0,{nopt}] startOpt = 0;");
    let _ = writeln!(s, "int[0,{nopt}] lastOpt = 0;");
    let _ = writeln!(s, "int[0,1] first = 1;");
    let _ = writeln!(s, "int[0,1] analysisReq = 0;");
    let _ = writeln!(s, "int[0,{nopt}] nVerified = 0;");
    let _ = writeln!(s, "int[0,{nopt}] bestOpt = 0;");

    // scripted data
    for q in &qualities {
        let obs: Vec<i64> = scenario
            .samples
            .iter()
            .map(|smp| smp.observed.get(q).copied().unwrap_or(0))
            .collect();
        s.push_str(&int_array(QualityNames::obs_array(q), 10_000, &obs));
        let mut flat = Vec::with_capacity(nsamples * nopt);
        for smp in &scenario.samples {
            match smp.estimates.get(q) {
                Some(vals) => flat.extend_from_slice(vals),
                None => flat.extend(std::iter::repeat(0).take(nopt)),
            }
        }
        s.push_str(&int_array(QualityNames::array(q), 10_000, &flat));
    }
    let vc: Vec<i64> = scenario.samples.iter().map(|smp| smp.verified_count as i64).collect();
    s.push_str(&int_array("vc", nopt as i64, &vc));
    s.push_str(&int_array("analyzedHist", 1, &vec![0; nsamples]));
    s.push_str(&int_array("neededHist", 1, &vec![0; nsamples]));
    s.push_str(&int_array("chosenHist", nopt as i64, &vec![0; nsamples]));
    s.push_str(&int_array("planHist", 1, &vec![0; nsamples]));
    s.push_str(&int_array("failsafeHist", 1, &vec![0; nsamples]));
    let _ = writeln!(s, "chan probe, analyze, verifyq, results, planq, execute, effect, loopDone;");

    // accessors
    for q in &qualities {
        let _ = writeln!(
            s,
            "func int {}(int smp, int i) {{ return {}[smp * NOPT + i]; }}",
            QualityNames::accessor(q),
            QualityNames::array(q)
        );
    }
    // satisfaction test per option
    let mut passes_body = String::from("    var int ok = 1;\n");
    for (g, c, t) in &sats {
        let cond = violation_cond(&format!("{}(smp, i)", QualityNames::accessor(&g.quality)), *c, *t);
        passes_body.push_str(&format!("    if ({cond}) {{ ok = 0; }}\n"));
    }
    passes_body.push_str("    return ok;\n");
    let _ = writeln!(s, "func int passes(int smp, int i) {{\n{passes_body}}}");

    let GoalKind::Optimization { direction } = &opt_goal.kind else {
        unreachable!("optimization_goal filtered")
    };
    let correct_cmp = match direction {
        crate::mape::Direction::Minimize => "<",
        crate::mape::Direction::Maximize => ">",
    };
    let faulted_cmp = match (direction, fault) {
        (_, Fault::None) => correct_cmp,
        (crate::mape::Direction::Minimize, Fault::PlannerPicksWorst) => ">",
        (crate::mape::Direction::Maximize, Fault::PlannerPicksWorst) => "<",
    };
    let opt_acc = QualityNames::accessor(&opt_goal.quality);
    for (fname, cmp) in [("findBest", faulted_cmp), ("findExpected", correct_cmp)] {
        let _ = writeln!(
            s,
            "func int {fname}(int smp, int n) {{\n    var int best = -1;\n    for i in 0..NOPT {{\n        if (i < n) {{\n            if (passes(smp, i) == 1) {{\n                if (best < 0) {{ best = i; }}\n                else {{ if ({opt_acc}(smp, i) {cmp} {opt_acc}(smp, best)) {{ best = i; }} }}\n            }}\n        }}\n    }}\n    return best;\n}}"
        );
    }
    let _ = writeln!(
        s,
        "func int correct() {{\n    if (analysisReq == 0) {{\n        if (currentOpt == startOpt) {{ return 1; }}\n        return 0;\n    }}\n    var int e = findExpected(sampleIdx, nVerified);\n    if (e < 0) {{\n        if (currentOpt == NOPT) {{ return 1; }}\n        return 0;\n    }}\n    if (currentOpt == e) {{ return 1; }}\n    return 0;\n}}"
    );

    // Probe stub: emits samples, checks the adaptation afterwards
    let _ = writeln!(s, "automaton Probe {{");
    let _ = writeln!(s, "    init location Idle;");
    let _ = writeln!(s, "    location Await;");
    let _ = writeln!(s, "    committed location Check;");
    let _ = writeln!(s, "    location ScenarioDone;");
    let _ = writeln!(s, "    location AdaptationIncorrect;");
    let emit_updates = |observed_key: &dyn Fn(&str) -> String| -> String {
        let mut parts = vec!["startOpt = currentOpt".to_string()];
        for q in &qualities {
            parts.push(format!("{} = {}", QualityNames::observed_var(q), observed_key(q)));
        }
        parts.join(", ")
    };
    let has_alt = scenario.samples.iter().any(|smp| smp.observed_alt.is_some());
    if has_alt {
        // per-sample emission edges so alternatives can be scripted per index
        for (si, smp) in scenario.samples.iter().enumerate() {
            let base = emit_updates(&|q: &str| {
                format!("{}", smp.observed.get(q).copied().unwrap_or(0))
            });
            match &smp.observed_alt {
                None => {
                    let _ = writeln!(
                        s,
                        "    edge Idle -> Await {{ guard: sampleIdx == {si}; sync: probe!; do: {base}; }}"
                    );
                }
                Some(alt) => {
                    let alt_updates = emit_updates(&|q: &str| {
                        format!("{}", alt.get(q).copied().unwrap_or(0))
                    });
                    let _ = writeln!(
                        s,
                        "    edge Idle -> Await {{ guard: sampleIdx == {si}; sync: probe!; weight: 1; do: {base}; }}"
                    );
                    let _ = writeln!(
                        s,
                        "    edge Idle -> Await {{ guard: sampleIdx == {si}; sync: probe!; weight: 1; do: {alt_updates}; }}"
                    );
                }
            }
        }
    } else {
        let updates = emit_updates(&|q: &str| {
            format!("{}[sampleIdx]", QualityNames::obs_array(q))
        });
        let _ = writeln!(
            s,
            "    edge Idle -> Await {{ guard: sampleIdx < NSAMPLES; sync: probe!; do: {updates}; }}"
        );
    }
    let _ = writeln!(s, "    edge Idle -> ScenarioDone {{ guard: sampleIdx >= NSAMPLES; }}");
    let _ = writeln!(s, "    edge Await -> Check {{ sync: loopDone?; }}");
    let _ = writeln!(
        s,
        "    edge Check -> Idle {{ guard: correct() == 1; do: sampleIdx = sampleIdx + 1; }}"
    );
    let _ = writeln!(s, "    edge Check -> AdaptationIncorrect {{ guard: correct() == 0; }}");
    let _ = writeln!(s, "}}");

    // Monitor
    let diff_terms: Vec<String> = qualities
        .iter()
        .map(|q| {
            format!("{} != {}", QualityNames::observed_var(q), QualityNames::last_var(q))
        })
        .collect();
    let save_terms: Vec<String> = qualities
        .iter()
        .map(|q| {
            format!("{} = {}", QualityNames::last_var(q), QualityNames::observed_var(q))
        })
        .collect();
    let _ = writeln!(s, "automaton Monitor {{");
    let _ = writeln!(s, "    init location Idle;");
    let _ = writeln!(s, "    committed location Updating;");
    let _ = writeln!(s, "    location MonitorCompleted;");
    let _ = writeln!(s, "    edge Idle -> Updating {{ sync: probe?; }}");
    let _ = writeln!(
        s,
        "    edge Updating -> MonitorCompleted {{ do: analysisReq = (first == 1 || currentOpt != lastOpt || {}) ? 1 : 0, first = 0, lastOpt = currentOpt, {}, analyzedHist[sampleIdx] = analysisReq; }}",
        diff_terms.join(" || "),
        save_terms.join(", ")
    );
    let _ = writeln!(
        s,
        "    edge MonitorCompleted -> Idle {{ guard: analysisReq == 1; sync: analyze!; }}"
    );
    let _ = writeln!(
        s,
        "    edge MonitorCompleted -> Idle {{ guard: analysisReq == 0; sync: loopDone!; }}"
    );
    let _ = writeln!(s, "}}");

    // Analyzer: classification over observed qualities, then verification
    let needed_cond: Vec<String> = sats
        .iter()
        .map(|(g, c, t)| violation_cond(QualityNames::observed_var(&g.quality), *c, *t))
        .collect();
    let needed_cond = needed_cond.join(" || ");
    let _ = writeln!(s, "automaton Analyzer {{");
    let _ = writeln!(s, "    init location Idle;");
    let _ = writeln!(s, "    committed location Classify;");
    let _ = writeln!(s, "    location AdaptationNeeded;");
    let _ = writeln!(s, "    location NoAdaptationNeeded;");
    let _ = writeln!(s, "    location AwaitResults;");
    let _ = writeln!(s, "    committed location Collected;");
    let _ = writeln!(s, "    edge Idle -> Classify {{ sync: analyze?; }}");
    let _ = writeln!(
        s,
        "    edge Classify -> AdaptationNeeded {{ guard: {needed_cond}; do: neededHist[sampleIdx] = 1; }}"
    );
    let _ = writeln!(
        s,
        "    edge Classify -> NoAdaptationNeeded {{ guard: !({needed_cond}); do: neededHist[sampleIdx] = 0; }}"
    );
    let _ = writeln!(s, "    edge AdaptationNeeded -> AwaitResults {{ sync: verifyq!; }}");
    let _ = writeln!(s, "    edge NoAdaptationNeeded -> AwaitResults {{ sync: verifyq!; }}");
    let _ = writeln!(s, "    edge AwaitResults -> Collected {{ sync: results?; }}");
    let _ = writeln!(s, "    edge Collected -> Idle {{ sync: planq!; }}");
    let _ = writeln!(s, "}}");

    // Verifier stub
    let _ = writeln!(s, "automaton Verifier {{");
    let _ = writeln!(s, "    init location Idle;");
    let _ = writeln!(s, "    location Working;");
    let _ = writeln!(s, "    edge Idle -> Working {{ sync: verifyq?; }}");
    let _ = writeln!(
        s,
        "    edge Working -> Idle {{ sync: results!; do: nVerified = vc[sampleIdx]; }}"
    );
    let _ = writeln!(s, "}}");

    // Planner
    let _ = writeln!(s, "automaton Planner {{");
    let _ = writeln!(s, "    init location Idle;");
    let _ = writeln!(s, "    committed location Planning;");
    let _ = writeln!(s, "    location PlanCreated;");
    let _ = writeln!(s, "    edge Idle -> Planning {{ sync: planq?; }}");
    let _ = writeln!(
        s,
        "    edge Planning -> PlanCreated {{ do: bestOpt = (findBest(sampleIdx, nVerified) < 0 ? NOPT : findBest(sampleIdx, nVerified)), failsafeHist[sampleIdx] = (findBest(sampleIdx, nVerified) < 0 ? 1 : 0), chosenHist[sampleIdx] = bestOpt, planHist[sampleIdx] = (failsafeHist[sampleIdx] == 1 || bestOpt != currentOpt ? 1 : 0); }}"
    );
    let _ = writeln!(s, "    edge PlanCreated -> Idle {{ sync: execute!; }}");
    let _ = writeln!(s, "}}");

    // Executor and effector stub
    let _ = writeln!(s, "automaton Executor {{");
    let _ = writeln!(s, "    init location Idle;");
    let _ = writeln!(s, "    location Applying;");
    let _ = writeln!(s, "    location Applied;");
    let _ = writeln!(s, "    edge Idle -> Applying {{ sync: execute?; }}");
    let _ = writeln!(
        s,
        "    edge Applying -> Applied {{ guard: planHist[sampleIdx] == 1; sync: effect!; }}"
    );
    let _ = writeln!(s, "    edge Applying -> Applied {{ guard: planHist[sampleIdx] == 0; }}");
    let _ = writeln!(s, "    edge Applied -> Idle {{ sync: loopDone!; }}");
    let _ = writeln!(s, "}}");
    let _ = writeln!(s, "automaton Effector {{");
    let _ = writeln!(s, "    init location Idle;");
    let _ = writeln!(s, "    edge Idle -> Idle {{ sync: effect?; do: currentOpt = bestOpt; }}");
    let _ = writeln!(s, "}}");

    Ok(s)
}

/// One sample's decision summary, comparable between the native loop and the
/// model execution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionTuple {
    pub analysis_ran: bool,
    pub adaptation_needed: bool,
    /// Winning option index; `None` when failsafe or when analysis was
    /// skipped.
    pub chosen: Option<usize>,
    pub plan_nonempty: bool,
    pub failsafe: bool,
}

/// Read the per-sample decision history out of a finished model state.
pub fn extract_model_decisions(
    net: &AutomatonNetwork,
    state: &crate::engine::NetState,
    nsamples: usize,
) -> Result<Vec<DecisionTuple>, StubError> {
    let read_array = |name: &str| -> Result<Vec<i64>, StubError> {
        let decl = net
            .var_decl(name)
            .ok_or_else(|| StubError::Compose(format!("model lacks array `{name}`")))?;
        Ok((0..decl.slot_count())
            .map(|i| match state.store[decl.base_slot + i] {
                Value::Int(v) => v,
                Value::Real(r) => r as i64,
            })
            .collect())
    };
    let nopt = match net.consts.iter().find(|(n, _)| n == "NOPT") {
        Some((_, Value::Int(n))) => *n,
        _ => return Err(StubError::Compose("model lacks NOPT".into())),
    };
    let analyzed = read_array("analyzedHist")?;
    let needed = read_array("neededHist")?;
    let chosen = read_array("chosenHist")?;
    let plans = read_array("planHist")?;
    let failsafe = read_array("failsafeHist")?;
    Ok((0..nsamples)
        .map(|i| {
            let ran = analyzed[i] == 1;
            let fs = ran && failsafe[i] == 1;
            DecisionTuple {
                analysis_ran: ran,
                adaptation_needed: ran && needed[i] == 1,
                chosen: if ran && !fs && chosen[i] < nopt { Some(chosen[i] as usize) } else { None },
                plan_nonempty: ran && plans[i] == 1,
                failsafe: fs,
            }
        })
        .collect())
}

/// Simulate the composed model to completion and return its decisions.
pub fn run_model_stub_loop(
    scenario: &StubScenario,
    goals: &[Goal],
    seed: u64,
) -> Result<Vec<DecisionTuple>, StubError> {
    let src = compose_model(scenario, goals, Fault::None)?;
    let net = parse_model(&src).map_err(|e| StubError::Compose(e.to_string()))?;
    let done = net
        .locate("Probe", "ScenarioDone")
        .ok_or_else(|| StubError::Compose("model lacks Probe.ScenarioDone".into()))?;
    let incorrect = net
        .locate("Probe", "AdaptationIncorrect")
        .ok_or_else(|| StubError::Compose("model lacks Probe.AdaptationIncorrect".into()))?;
    let mut rng = StreamRng::new(seed);
    let trace = simulate(
        &net,
        4,
        &|_, st| st.is_at(done.0, done.1) || st.is_at(incorrect.0, incorrect.1),
        &mut rng,
    )
    .map_err(|e| StubError::Compose(e.to_string()))?;
    extract_model_decisions(&net, trace.final_state(), scenario.samples.len())
}

/// The small topology native stub runs use: motes 2 and 3 relay to the
/// gateway, mote 4 splits across both — six distribution options.
pub fn micro_topology() -> Topology {
    Topology::new(
        1,
        vec![
            MoteSpec { id: 2, traffic: TrafficClass::Periodic },
            MoteSpec { id: 3, traffic: TrafficClass::Periodic },
            MoteSpec { id: 4, traffic: TrafficClass::Periodic },
        ],
        vec![
            LinkSpec { source: 2, dest: 1, alpha: -2.0, beta: 1.0 },
            LinkSpec { source: 3, dest: 1, alpha: -4.0, beta: 1.0 },
            LinkSpec { source: 4, dest: 2, alpha: -1.0, beta: 1.0 },
            LinkSpec { source: 4, dest: 3, alpha: -3.0, beta: 1.0 },
        ],
        None,
    )
    .expect("micro topology is valid")
}

/// Scripted managed system replaying a stub scenario's samples.
pub struct StubManaged {
    topology: Topology,
    baseline: UncertaintyState,
    scenario: StubScenario,
    cycle: usize,
    current: NetworkSettings,
}

impl StubManaged {
    pub fn new(scenario: StubScenario) -> Result<Self, StubError> {
        scenario.validate()?;
        let topology = micro_topology();
        let baseline = UncertaintyState::baseline(&topology, 1.0);
        let options = enumerate_options(&topology, &baseline);
        if options.len() != scenario.option_count {
            return Err(StubError::Invalid(format!(
                "scenario `{}` scripts {} options; the stub topology enumerates {}",
                scenario.name,
                scenario.option_count,
                options.len()
            )));
        }
        let current = options[scenario.initial_option].settings.clone();
        Ok(StubManaged { topology, baseline, scenario, cycle: 0, current })
    }

    fn environment(&self) -> EnvironmentSnapshot {
        EnvironmentSnapshot {
            motes_load: self
                .baseline
                .load_probability
                .iter()
                .map(|p| p * MOTE_LOAD as f64)
                .collect(),
            links_snr: (0..self.topology.links.len())
                .map(|l| self.baseline.snr(&self.topology, l, self.current.power[l]))
                .collect(),
        }
    }
}

impl ManagedSystem for StubManaged {
    fn run_cycle(&mut self) -> CycleStats {
        self.cycle += 1;
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

    fn probe(&self) -> Result<Configuration, ProbeError> {
        if self.cycle == 0 {
            return Err(ProbeError::NoCompletedCycle);
        }
        let sample = &self.scenario.samples[self.cycle - 1];
        let get = |q: &str| sample.observed.get(q).copied().unwrap_or(0) as f64;
        Ok(Configuration {
            settings: self.current.clone(),
            qualities: QualitySnapshot {
                packet_loss_pct: get("packetLoss"),
                energy: get("energy"),
                latency_pct: get("latency"),
            },
            environment: self.environment(),
        })
    }

    fn apply(&mut self, settings: NetworkSettings) -> Result<(), String> {
        settings.validate(&self.topology).map_err(|e| e.to_string())?;
        self.current = settings;
        Ok(())
    }

    fn topology(&self) -> &Topology {
        &self.topology
    }
}

/// Scripted verifier serving a scenario's per-option estimates by cycle.
pub struct StubVerifier {
    scenario: StubScenario,
}

impl StubVerifier {
    pub fn new(scenario: StubScenario) -> Self {
        StubVerifier { scenario }
    }
}

impl OptionVerifier for StubVerifier {
    fn verify_options(
        &mut self,
        registry: &ModelRegistry,
        options: &mut [crate::mape::AdaptationOption],
        _topology: &Topology,
        _uncertainty: &UncertaintyState,
        _budget: u64,
        cycle: u64,
        _seed: u64,
    ) -> Result<crate::mape::AnalysisOutcome, SmcError> {
        let sample = self
            .scenario
            .samples
            .get(cycle as usize)
            .ok_or_else(|| SmcError::Model(format!("no scripted sample for cycle {cycle}")))?;
        let count = sample.verified_count.min(options.len());
        for (i, option) in options.iter_mut().take(count).enumerate() {
            for (q, vals) in &sample.estimates {
                option.estimates.insert(q.clone(), Estimate::exact(vals[i] as f64));
            }
        }
        let names = registry.names();
        let fully = options.iter().filter(|o| o.verified_for(&names)).count();
        Ok(crate::mape::AnalysisOutcome {
            fully_verified: fully,
            partial: count < options.len(),
            work: 0,
        })
    }
}

/// Run the native loop against a stub scenario and return its decisions.
pub fn run_native_stub_loop(
    scenario: &StubScenario,
    goals: &[Goal],
) -> Result<Vec<DecisionTuple>, StubError> {
    let managed = StubManaged::new(scenario.clone())?;
    let mut registry = ModelRegistry::empty();
    for q in scenario.qualities() {
        let model = builtin_model(&q)
            .map_err(|e| StubError::Invalid(format!("scenario quality: {e}")))?;
        registry.register(model).map_err(|e| StubError::Invalid(e.to_string()))?;
    }
    let knowledge = Knowledge::new(goals.to_vec(), registry, u64::MAX / 2)
        .map_err(|e| StubError::Invalid(e.to_string()))?;
    let mut looper =
        MapeLoop::new(managed, StubVerifier::new(scenario.clone()), knowledge, 1);
    let records = looper.run_cycles(scenario.samples.len() as u64);
    Ok(records
        .into_iter()
        .map(|r| DecisionTuple {
            analysis_ran: r.analysis_ran,
            adaptation_needed: r.adaptation_needed,
            chosen: r.chosen_option,
            plan_nonempty: r.plan_steps > 0,
            failsafe: r.failsafe,
        })
        .collect())
}

fn sample(
    observed: &[(&str, i64)],
    verified: usize,
    pl: &[i64],
    en: &[i64],
) -> StubSample {
    StubSample {
        observed: observed.iter().map(|(q, v)| (q.to_string(), *v)).collect(),
        observed_alt: None,
        verified_count: verified,
        estimates: BTreeMap::from([
            ("packetLoss".to_string(), pl.to_vec()),
            ("energy".to_string(), en.to_vec()),
        ]),
    }
}

/// The scenario suite shipped with the repository. Together the scenarios
/// cover every location of the Monitor, Analyzer, Planner, and Executor.
pub fn default_stub_suite() -> Vec<StubScenario> {
    let mut suite = Vec::new();
    suite.push(StubScenario {
        name: "adaptation-needed".into(),
        option_count: 6,
        initial_option: 0,
        samples: vec![
            sample(
                &[("packetLoss", 12), ("energy", 30)],
                6,
                &[9, 12, 8, 7, 11, 13],
                &[20, 10, 25, 18, 5, 40],
            ),
            sample(
                &[("packetLoss", 4), ("energy", 18)],
                6,
                &[9, 12, 8, 7, 11, 13],
                &[20, 10, 25, 18, 5, 40],
            ),
        ],
    });
    suite.push(StubScenario {
        name: "no-adaptation".into(),
        option_count: 6,
        initial_option: 2,
        samples: vec![
            sample(
                &[("packetLoss", 5), ("energy", 25)],
                6,
                &[8, 9, 6, 9, 9, 9],
                &[12, 14, 9, 30, 22, 16],
            ),
            // identical repeat: the monitor skips analysis
            sample(
                &[("packetLoss", 5), ("energy", 25)],
                6,
                &[8, 9, 6, 9, 9, 9],
                &[12, 14, 9, 30, 22, 16],
            ),
        ],
    });
    suite.push(StubScenario {
        name: "partial-verification".into(),
        option_count: 6,
        initial_option: 0,
        samples: vec![
            sample(
                &[("packetLoss", 15), ("energy", 33)],
                3,
                &[11, 8, 9, 0, 0, 0],
                &[7, 12, 9, 0, 0, 0],
            ),
            sample(
                &[("packetLoss", 6), ("energy", 9)],
                6,
                &[11, 8, 9, 7, 20, 20],
                &[7, 12, 9, 8, 1, 1],
            ),
        ],
    });
    suite.push(StubScenario {
        name: "none-satisfying".into(),
        option_count: 6,
        initial_option: 1,
        samples: vec![
            sample(
                &[("packetLoss", 30), ("energy", 20)],
                6,
                &[30, 25, 40, 99, 12, 11],
                &[20, 20, 20, 20, 20, 20],
            ),
            sample(
                &[("packetLoss", 2), ("energy", 50)],
                6,
                &[9, 9, 9, 9, 9, 9],
                &[5, 4, 3, 2, 1, 6],
            ),
        ],
    });
    let mut uncertain = StubScenario {
        name: "uncertain-probe".into(),
        option_count: 6,
        initial_option: 0,
        samples: vec![sample(
            &[("packetLoss", 11), ("energy", 20)],
            6,
            &[8, 9, 7, 12, 13, 14],
            &[9, 12, 4, 1, 1, 1],
        )],
    };
    uncertain.samples[0].observed_alt = Some(BTreeMap::from([
        ("packetLoss".to_string(), 9),
        ("energy".to_string(), 20),
    ]));
    suite.push(uncertain);
    suite
}
