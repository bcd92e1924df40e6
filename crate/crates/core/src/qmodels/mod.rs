//! Predictive quality models: the "what-if" layer that estimates packet
//! loss, energy, and latency of a candidate configuration under the current
//! uncertainties.
//!
//! Each model exists in two equivalent forms: a native fast path and an
//! `.anm` model generated for the engine. The registry assigns each quality
//! its estimator: packet loss uses probability estimation (accuracy and
//! confidence), energy and latency use RSEM mean estimation.

pub mod anm;
pub mod native;

use std::sync::atomic::AtomicBool;

use thiserror::Error;

use crate::deltaiot::{NetworkSettings, Topology, UncertaintyState};
use crate::engine::parse_model;
use crate::smc::{
    estimate_mean, estimate_probability, simulate_series, Estimate, MeanOpts, SmcError,
};

pub use native::LATENCY_CYCLES;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RegistryError {
    #[error("quality `{0}` is already registered")]
    Duplicate(String),
    #[error("unknown built-in quality model `{0}`")]
    UnknownBuiltin(String),
}

/// How a quality's estimates are produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorKind {
    Probability { epsilon: f64, alpha: f64 },
    Mean(MeanOpts),
}

/// Which simulation backs the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    PacketLoss,
    Energy,
    Latency,
}

/// Which of the two equivalent forms to execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelForm {
    Native,
    Dsl,
}

/// A registered quality model. `scale` converts raw estimates into goal
/// units (packet loss fraction -> percent).
#[derive(Debug, Clone, PartialEq)]
pub struct QualityModel {
    pub name: String,
    pub estimator: EstimatorKind,
    pub scale: f64,
    pub kind: ModelKind,
}

fn scaled(est: Estimate, scale: f64) -> Estimate {
    Estimate { point: est.point * scale, lo: est.lo * scale, hi: est.hi * scale, ..est }
}

impl QualityModel {
    /// Built-in packet-loss model: probability estimation, reported in
    /// percent.
    pub fn packet_loss() -> Self {
        QualityModel {
            name: "packetLoss".into(),
            estimator: EstimatorKind::Probability { epsilon: 0.05, alpha: 0.05 },
            scale: 100.0,
            kind: ModelKind::PacketLoss,
        }
    }

    /// Built-in per-cycle energy model: RSEM mean estimation in Coulomb.
    pub fn energy() -> Self {
        QualityModel {
            name: "energy".into(),
            estimator: EstimatorKind::Mean(
                MeanOpts::new(0.05, 5, 200).expect("static options are valid"),
            ),
            scale: 1.0,
            kind: ModelKind::Energy,
        }
    }

    /// Built-in latency model: RSEM mean estimation of the backlog
    /// percentage.
    pub fn latency() -> Self {
        QualityModel {
            name: "latency".into(),
            estimator: EstimatorKind::Mean(
                MeanOpts::new(0.05, 5, 200).expect("static options are valid"),
            ),
            scale: 1.0,
            kind: ModelKind::Latency,
        }
    }

    /// Estimate this quality for one candidate configuration.
    pub fn predict(
        &self,
        topology: &Topology,
        settings: &NetworkSettings,
        uncertainty: &UncertaintyState,
        seed: u64,
        stop: Option<&AtomicBool>,
    ) -> Result<Estimate, SmcError> {
        self.predict_with(ModelForm::Native, topology, settings, uncertainty, seed, stop)
    }

    /// Estimate via a chosen model form (the analyzer uses the native fast
    /// path; the differential tests run both).
    pub fn predict_with(
        &self,
        form: ModelForm,
        topology: &Topology,
        settings: &NetworkSettings,
        uncertainty: &UncertaintyState,
        seed: u64,
        stop: Option<&AtomicBool>,
    ) -> Result<Estimate, SmcError> {
        settings.validate(topology).map_err(|e| SmcError::Model(e.to_string()))?;
        let raw = match (self.kind, form) {
            (ModelKind::PacketLoss, ModelForm::Native) => {
                let EstimatorKind::Probability { epsilon, alpha } = self.estimator else {
                    return Err(SmcError::InvalidQuery(
                        "packet loss requires probability estimation".into(),
                    ));
                };
                estimate_probability(
                    |mut rng| native::packet_loss_episode(topology, settings, uncertainty, &mut rng),
                    epsilon,
                    alpha,
                    seed,
                    stop,
                )?
            }
            (ModelKind::PacketLoss, ModelForm::Dsl) => {
                let EstimatorKind::Probability { epsilon, alpha } = self.estimator else {
                    return Err(SmcError::InvalidQuery(
                        "packet loss requires probability estimation".into(),
                    ));
                };
                let src = anm::packet_loss_source(topology, settings, uncertainty)?;
                let net = parse_model(&src).map_err(|e| SmcError::Model(e.to_string()))?;
                estimate_probability(
                    |mut rng| anm::run_packet_loss_model(&net, &mut rng),
                    epsilon,
                    alpha,
                    seed,
                    stop,
                )?
            }
            (ModelKind::Energy, form) => {
                let EstimatorKind::Mean(opts) = self.estimator else {
                    return Err(SmcError::InvalidQuery("energy requires mean estimation".into()));
                };
                match form {
                    ModelForm::Native => estimate_mean(
                        |mut rng| Ok(native::cycle_energy(topology, settings, uncertainty, &mut rng)),
                        opts,
                        seed,
                    )?,
                    ModelForm::Dsl => {
                        let src = anm::energy_source(topology, settings, uncertainty);
                        let net =
                            parse_model(&src).map_err(|e| SmcError::Model(e.to_string()))?;
                        estimate_mean(
                            |mut rng| anm::run_energy_model(&net, &mut rng),
                            opts,
                            seed,
                        )?
                    }
                }
            }
            (ModelKind::Latency, form) => {
                let EstimatorKind::Mean(opts) = self.estimator else {
                    return Err(SmcError::InvalidQuery("latency requires mean estimation".into()));
                };
                match form {
                    ModelForm::Native => estimate_mean(
                        |mut rng| Ok(native::latency_run(topology, settings, uncertainty, &mut rng)),
                        opts,
                        seed,
                    )?,
                    ModelForm::Dsl => {
                        let src = anm::latency_source(topology, settings, uncertainty);
                        let net =
                            parse_model(&src).map_err(|e| SmcError::Model(e.to_string()))?;
                        estimate_mean(
                            |mut rng| anm::run_latency_model(&net, &mut rng),
                            opts,
                            seed,
                        )?
                    }
                }
            }
        };
        Ok(scaled(raw, self.scale))
    }

    /// Per-run raw samples of the quality (for distributional comparisons).
    pub fn sample(
        &self,
        form: ModelForm,
        topology: &Topology,
        settings: &NetworkSettings,
        uncertainty: &UncertaintyState,
        n: u64,
        seed: u64,
    ) -> Result<Vec<f64>, SmcError> {
        settings.validate(topology).map_err(|e| SmcError::Model(e.to_string()))?;
        match (self.kind, form) {
            (ModelKind::PacketLoss, ModelForm::Native) => simulate_series(
                |mut rng| {
                    native::packet_loss_episode(topology, settings, uncertainty, &mut rng)
                        .map(|s| crate::smc::RunSample { value: s.value as u8 as f64, work: s.work })
                },
                n,
                seed,
            ),
            (ModelKind::PacketLoss, ModelForm::Dsl) => {
                let src = anm::packet_loss_source(topology, settings, uncertainty)?;
                let net = parse_model(&src).map_err(|e| SmcError::Model(e.to_string()))?;
                simulate_series(
                    |mut rng| {
                        anm::run_packet_loss_model(&net, &mut rng).map(|s| crate::smc::RunSample {
                            value: s.value as u8 as f64,
                            work: s.work,
                        })
                    },
                    n,
                    seed,
                )
            }
            (ModelKind::Energy, ModelForm::Native) => simulate_series(
                |mut rng| Ok(native::cycle_energy(topology, settings, uncertainty, &mut rng)),
                n,
                seed,
            ),
            (ModelKind::Energy, ModelForm::Dsl) => {
                let src = anm::energy_source(topology, settings, uncertainty);
                let net = parse_model(&src).map_err(|e| SmcError::Model(e.to_string()))?;
                simulate_series(|mut rng| anm::run_energy_model(&net, &mut rng), n, seed)
            }
            (ModelKind::Latency, ModelForm::Native) => simulate_series(
                |mut rng| Ok(native::latency_run(topology, settings, uncertainty, &mut rng)),
                n,
                seed,
            ),
            (ModelKind::Latency, ModelForm::Dsl) => {
                let src = anm::latency_source(topology, settings, uncertainty);
                let net = parse_model(&src).map_err(|e| SmcError::Model(e.to_string()))?;
                simulate_series(|mut rng| anm::run_latency_model(&net, &mut rng), n, seed)
            }
        }
    }
}

/// A built-in model by quality name (the names update packages may
/// reference).
pub fn builtin_model(name: &str) -> Result<QualityModel, RegistryError> {
    match name {
        "packetLoss" => Ok(QualityModel::packet_loss()),
        "energy" => Ok(QualityModel::energy()),
        "latency" => Ok(QualityModel::latency()),
        other => Err(RegistryError::UnknownBuiltin(other.to_string())),
    }
}

/// Ordered registry of quality models, keyed by unique quality name.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelRegistry {
    models: Vec<QualityModel>,
}

impl ModelRegistry {
    pub fn empty() -> Self {
        ModelRegistry { models: Vec::new() }
    }

    /// The initial registry: packet loss and energy.
    pub fn standard() -> Self {
        let mut r = ModelRegistry::empty();
        r.register(QualityModel::packet_loss()).expect("fresh registry");
        r.register(QualityModel::energy()).expect("fresh registry");
        r
    }

    pub fn register(&mut self, model: QualityModel) -> Result<(), RegistryError> {
        if self.models.iter().any(|m| m.name == model.name) {
            return Err(RegistryError::Duplicate(model.name));
        }
        self.models.push(model);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&QualityModel> {
        self.models.iter().find(|m| m.name == name)
    }

    pub fn models(&self) -> &[QualityModel] {
        &self.models
    }

    pub fn names(&self) -> Vec<String> {
        self.models.iter().map(|m| m.name.clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deltaiot::{
        deltaiot15, min_power_for_link, receive_energy_per_cycle, LinkSpec, MoteSpec,
        TrafficClass,
    };
    use crate::stats::{ks_critical, ks_statistic};

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
    fn healthy_link_predicts_zero_loss() {
        let (t, s, u) = single_link(4.0);
        let m = QualityModel::packet_loss();
        let est = m.predict(&t, &s, &u, 1, None).unwrap();
        assert_eq!(est.point, 0.0);
    }

    #[test]
    fn half_dead_link_predicts_half_loss() {
        let (t, s, u) = single_link(-10.0);
        let m = QualityModel::packet_loss();
        let est = m.predict(&t, &s, &u, 2, None).unwrap();
        // scale is percent; epsilon 0.05 -> 5 percentage points
        assert!((est.point - 50.0).abs() <= 5.0, "point {}", est.point);
    }

    #[test]
    fn two_hop_chain_composes() {
        let t = Topology::new(
            1,
            vec![
                MoteSpec { id: 2, traffic: TrafficClass::EventDriven },
                MoteSpec { id: 3, traffic: TrafficClass::Periodic },
            ],
            vec![
                LinkSpec { source: 2, dest: 1, alpha: -10.0, beta: 0.0 },
                LinkSpec { source: 3, dest: 2, alpha: -10.0, beta: 0.0 },
            ],
            None,
        )
        .unwrap();
        let s = NetworkSettings::failsafe(&t);
        let mut u = UncertaintyState::baseline(&t, 0.0);
        u.load_probability = vec![0.0, 1.0];
        let est = QualityModel::packet_loss().predict(&t, &s, &u, 3, None).unwrap();
        assert!((est.point - 75.0).abs() <= 5.0, "point {}", est.point);
    }

    #[test]
    fn prediction_matches_exhaustive_enumeration_on_small_topologies() {
        // the oracle-equivalence check on a 3-mote topology with a split
        let t = Topology::new(
            1,
            vec![
                MoteSpec { id: 2, traffic: TrafficClass::EventDriven },
                MoteSpec { id: 3, traffic: TrafficClass::EventDriven },
                MoteSpec { id: 4, traffic: TrafficClass::Periodic },
            ],
            vec![
                LinkSpec { source: 2, dest: 1, alpha: -6.0, beta: 0.0 },
                LinkSpec { source: 3, dest: 1, alpha: -14.0, beta: 0.0 },
                LinkSpec { source: 4, dest: 2, alpha: -4.0, beta: 0.0 },
                LinkSpec { source: 4, dest: 3, alpha: 2.0, beta: 0.0 },
            ],
            None,
        )
        .unwrap();
        let mut s = NetworkSettings::failsafe(&t);
        let p = t.parent_links(4);
        s.distribution[p[0]] = 40;
        s.distribution[p[1]] = 60;
        let mut u = UncertaintyState::baseline(&t, 0.3);
        u.load_probability = vec![0.4, 0.2, 1.0];
        let exact = crate::oracle::packet_loss_exact(&t, &s, &u);
        let est = QualityModel::packet_loss().predict(&t, &s, &u, 5, None).unwrap();
        assert!(
            (est.point / 100.0 - exact).abs() <= 0.05,
            "estimate {} vs oracle {exact}",
            est.point / 100.0
        );
    }

    #[test]
    fn zero_traffic_energy_is_exactly_the_reception_term() {
        let t = deltaiot15();
        let s = NetworkSettings::failsafe(&t);
        let u = UncertaintyState::baseline(&t, 0.0);
        let mut quiet = u.clone();
        for p in quiet.load_probability.iter_mut() {
            *p = 0.0;
        }
        let est = QualityModel::energy().predict(&t, &s, &quiet, 7, None).unwrap();
        assert_eq!(est.point, receive_energy_per_cycle(&t));
        assert_eq!(est.lo, est.hi);
    }

    #[test]
    fn energy_interval_respects_the_rsem_contract() {
        let t = deltaiot15();
        let s = NetworkSettings::failsafe(&t);
        let u = UncertaintyState::baseline(&t, 0.5);
        let est = QualityModel::energy().predict(&t, &s, &u, 8, None).unwrap();
        let half = (est.hi - est.lo) / 2.0;
        assert!(half <= 0.05 * est.point, "half width {half} vs point {}", est.point);
    }

    #[test]
    fn raising_power_raises_predicted_energy() {
        let t = deltaiot15();
        let mut base = NetworkSettings::failsafe(&t);
        for (i, link) in t.links.iter().enumerate() {
            base.power[i] = min_power_for_link(link.alpha, link.beta);
        }
        let mut bumped = base.clone();
        bumped.power[1] += 1;
        let u = UncertaintyState::baseline(&t, 0.5);
        let m = QualityModel::energy();
        let a = m.predict(&t, &base, &u, 9, None).unwrap();
        let b = m.predict(&t, &bumped, &u, 9, None).unwrap();
        assert!(b.point > a.point, "bumped {} vs base {}", b.point, a.point);
    }

    #[test]
    fn latency_zero_when_capacity_suffices_and_deterministic() {
        let t = deltaiot15();
        let s = NetworkSettings::failsafe(&t);
        // only the periodic motes generate: every window fits in the slots
        let u = UncertaintyState::baseline(&t, 0.0);
        let m = QualityModel::latency();
        let a = m.predict(&t, &s, &u, 10, None).unwrap();
        let b = m.predict(&t, &s, &u, 10, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.point, 0.0);
    }

    #[test]
    fn congestion_shows_up_as_latency() {
        let t = deltaiot15();
        // all traffic from mote 12's subtree through 12->7, overloading 7
        let mut s = NetworkSettings::failsafe(&t);
        for (i, link) in t.links.iter().enumerate() {
            s.power[i] = min_power_for_link(link.alpha, link.beta);
        }
        let p12 = t.parent_links(12);
        s.distribution[p12[0]] = 100;
        s.distribution[p12[1]] = 0;
        let u = UncertaintyState::baseline(&t, 1.0);
        let est = QualityModel::latency().predict(&t, &s, &u, 11, None).unwrap();
        assert!(est.point > 0.0, "expected backlog, got {}", est.point);
    }

    #[test]
    fn registry_lifecycle() {
        let mut r = ModelRegistry::standard();
        assert_eq!(r.names(), vec!["packetLoss".to_string(), "energy".to_string()]);
        r.register(QualityModel::latency()).unwrap();
        assert_eq!(r.names().len(), 3);
        let err = r.register(QualityModel::packet_loss()).unwrap_err();
        assert_eq!(err, RegistryError::Duplicate("packetLoss".into()));
        assert!(builtin_model("latency").is_ok());
        assert!(builtin_model("nosuch").is_err());
    }

    #[test]
    fn dsl_twins_agree_with_native_forms() {
        // distributional agreement at modest n; the acceptance suite runs
        // the full-size comparison
        let t = deltaiot15();
        let mut s = NetworkSettings::failsafe(&t);
        for (i, link) in t.links.iter().enumerate() {
            s.power[i] = min_power_for_link(link.alpha, link.beta);
        }
        let p7 = t.parent_links(7);
        s.distribution[p7[0]] = 60;
        s.distribution[p7[1]] = 40;
        let mut u = UncertaintyState::baseline(&t, 0.5);
        // degrade one link so loss is non-trivial
        let l = t.link_index(11, 7).unwrap();
        u.link_alpha[l] = -6.0 - t.links[l].beta * 15.0;
        let n = 400;
        for model in [QualityModel::packet_loss(), QualityModel::energy(), QualityModel::latency()]
        {
            let a = model.sample(ModelForm::Native, &t, &s, &u, n, 42).unwrap();
            let b = model.sample(ModelForm::Dsl, &t, &s, &u, n, 43).unwrap();
            let d = ks_statistic(&a, &b);
            let crit = ks_critical(n as usize, n as usize, 0.001);
            assert!(d < crit, "{}: KS {d} above critical {crit}", model.name);
        }
    }
}
