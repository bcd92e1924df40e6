//! Goal management: staged, validated, atomic online updates of adaptation
//! goals and quality models.
//!
//! An update package is staged without touching the running loop, validated
//! in a sandbox by re-running the stub verification suite under the updated
//! goal set, and only then activated. Activation goes through a single-slot
//! mailbox the loop drains at the quiescent point between Execute and the
//! next Monitor, so every cycle decides under one coherent (goals, registry)
//! snapshot. A staged package that is discarded leaves the loop untouched.

use serde::Deserialize;
use thiserror::Error;

use crate::mape::{normalize_goals, Goal, GoalError, GoalKind, Mailbox, ValidatedUpdate};
use crate::qmodels::{builtin_model, ModelRegistry, QualityModel, RegistryError};
use crate::verify::{
    compose_model, explore, standard_properties, ExploreLimits, Fault, StubScenario,
};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvolveError {
    #[error("an update is already staged")]
    AlreadyStaged,
    #[error("no update is staged")]
    NothingStaged,
    #[error("staged update has not passed validation")]
    NotValidated,
    #[error("empty update: no goals, models, or parameter changes")]
    EmptyUpdate,
    #[error("update references unknown model: {0}")]
    UnknownModel(#[from] RegistryError),
    #[error("resulting goals invalid: {0}")]
    Goals(#[from] GoalError),
    #[error("goal on `{0}` has no quality model after the update")]
    UnresolvedQuality(String),
    #[error("activation mailbox is occupied")]
    MailboxOccupied,
    #[error("package parse error: {0}")]
    Parse(String),
    #[error("validation could not run: {0}")]
    Sandbox(String),
}

/// A proposed change to the running loop: goal upserts (matched by quality),
/// new quality models (built-in names), a budget change, and the scenarios
/// to validate against.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdatePackage {
    pub name: String,
    pub goals: Vec<Goal>,
    pub models: Vec<String>,
    pub budget: Option<u64>,
    pub validation_scenarios: Vec<StubScenario>,
}

impl UpdatePackage {
    pub fn is_empty(&self) -> bool {
        self.goals.is_empty() && self.models.is_empty() && self.budget.is_none()
    }
}

/// One property outcome from validation.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationItem {
    pub scenario: String,
    pub property: String,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub package: String,
    pub items: Vec<ValidationItem>,
    pub passed: bool,
}

enum Staged {
    Unvalidated(UpdatePackage),
    Validated { package: UpdatePackage, update: ValidatedUpdate },
}

/// Drives the stage/validate/activate protocol against one loop's mailbox.
pub struct UpdateManager {
    mailbox: Mailbox,
    staged: Option<Staged>,
}

impl UpdateManager {
    pub fn new(mailbox: Mailbox) -> Self {
        UpdateManager { mailbox, staged: None }
    }

    /// Hold a package inactive. The running loop is unaffected.
    pub fn stage(&mut self, package: UpdatePackage) -> Result<(), EvolveError> {
        if self.staged.is_some() {
            return Err(EvolveError::AlreadyStaged);
        }
        if package.is_empty() {
            return Err(EvolveError::EmptyUpdate);
        }
        self.staged = Some(Staged::Unvalidated(package));
        Ok(())
    }

    pub fn discard(&mut self) -> Result<(), EvolveError> {
        if self.staged.take().is_none() {
            return Err(EvolveError::NothingStaged);
        }
        Ok(())
    }

    /// Validate the staged package against the live goal set and registry:
    /// structural checks first, then the stub verification suite re-run under
    /// the updated goals in a sandbox. Deterministic given the seed.
    pub fn validate(
        &mut self,
        live_goals: &[Goal],
        live_registry: &ModelRegistry,
        _seed: u64,
    ) -> Result<ValidationReport, EvolveError> {
        let package = match &self.staged {
            None => return Err(EvolveError::NothingStaged),
            Some(Staged::Unvalidated(p)) | Some(Staged::Validated { package: p, .. }) => p.clone(),
        };
        let update = build_update(&package, live_goals, live_registry)?;
        let mut items = Vec::new();
        let mut passed = true;
        for scenario in &package.validation_scenarios {
            let src = compose_model(scenario, &update.goals, Fault::None)
                .map_err(|e| EvolveError::Sandbox(e.to_string()))?;
            let net = crate::engine::parse_model(&src)
                .map_err(|e| EvolveError::Sandbox(e.to_string()))?;
            let props = standard_properties(&net, &update.goals)
                .map_err(|e| EvolveError::Sandbox(e.to_string()))?;
            let exploration = explore(&net, &props, &ExploreLimits::default())
                .map_err(|e| EvolveError::Sandbox(e.to_string()))?;
            for verdict in exploration.verdicts {
                passed &= verdict.holds;
                items.push(ValidationItem {
                    scenario: scenario.name.clone(),
                    property: verdict.property,
                    holds: verdict.holds,
                });
            }
        }
        let report = ValidationReport { package: package.name.clone(), items, passed };
        if report.passed {
            self.staged = Some(Staged::Validated { package, update });
        }
        Ok(report)
    }

    /// Hand the validated update to the loop; it takes effect atomically at
    /// the next quiescent point.
    pub fn activate(&mut self) -> Result<(), EvolveError> {
        match self.staged.take() {
            None => Err(EvolveError::NothingStaged),
            Some(Staged::Unvalidated(p)) => {
                self.staged = Some(Staged::Unvalidated(p));
                Err(EvolveError::NotValidated)
            }
            Some(Staged::Validated { update, .. }) => {
                let mut slot = self.mailbox.lock().expect("mailbox lock");
                if slot.is_some() {
                    return Err(EvolveError::MailboxOccupied);
                }
                *slot = Some(update);
                Ok(())
            }
        }
    }
}

/// Merge the package into the live goal set and registry, checking every
/// invariant that must hold after activation.
fn build_update(
    package: &UpdatePackage,
    live_goals: &[Goal],
    live_registry: &ModelRegistry,
) -> Result<ValidatedUpdate, EvolveError> {
    if package.is_empty() {
        return Err(EvolveError::EmptyUpdate);
    }
    // goal upserts by quality name
    let mut goals: Vec<Goal> = live_goals.to_vec();
    for g in &package.goals {
        if let GoalKind::Satisfaction { threshold, .. } = &g.kind {
            if !threshold.is_finite() {
                return Err(EvolveError::Goals(GoalError::NonFiniteThreshold(
                    g.quality.clone(),
                )));
            }
        }
        match goals.iter_mut().find(|lg| lg.quality == g.quality) {
            Some(existing) => *existing = g.clone(),
            None => goals.push(g.clone()),
        }
    }
    let goals = normalize_goals(goals)?;
    // models, instantiated from the built-in catalog
    let mut new_models: Vec<QualityModel> = Vec::new();
    for name in &package.models {
        let model = builtin_model(name)?;
        if live_registry.get(name).is_some() || new_models.iter().any(|m| &m.name == name) {
            return Err(EvolveError::UnknownModel(RegistryError::Duplicate(name.clone())));
        }
        new_models.push(model);
    }
    // every goal quality must resolve to a model after the update
    let mut names = live_registry.names();
    names.extend(new_models.iter().map(|m| m.name.clone()));
    for g in &goals {
        if !names.contains(&g.quality) {
            return Err(EvolveError::UnresolvedQuality(g.quality.clone()));
        }
    }
    if let Some(b) = package.budget {
        if b == 0 {
            return Err(EvolveError::Sandbox("budget must be positive".into()));
        }
    }
    Ok(ValidatedUpdate {
        name: package.name.clone(),
        goals,
        new_models,
        budget: package.budget,
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PackageFile {
    name: String,
    #[serde(default)]
    models: Vec<String>,
    budget: Option<u64>,
    #[serde(default)]
    goal: Vec<PackageGoal>,
    #[serde(default, rename = "validation-scenarios")]
    validation_scenarios: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PackageGoal {
    quality: String,
    kind: String,
    comparator: Option<crate::mape::Comparator>,
    threshold: Option<f64>,
    direction: Option<crate::mape::Direction>,
    rank: u32,
}

/// Parse an update-package file (TOML). Validation scenarios are referenced
/// by path and returned for the caller to load; an empty list means "use the
/// shipped suite".
pub fn parse_package(text: &str) -> Result<(UpdatePackage, Vec<String>), EvolveError> {
    let file: PackageFile = toml::from_str(text).map_err(|e| EvolveError::Parse(e.to_string()))?;
    let goals = file
        .goal
        .into_iter()
        .map(|g| {
            let kind = match g.kind.as_str() {
                "satisfaction" => crate::mape::GoalKind::Satisfaction {
                    comparator: g.comparator.ok_or_else(|| {
                        EvolveError::Parse(format!("goal `{}`: missing comparator", g.quality))
                    })?,
                    threshold: g.threshold.ok_or_else(|| {
                        EvolveError::Parse(format!("goal `{}`: missing threshold", g.quality))
                    })?,
                },
                "optimization" => crate::mape::GoalKind::Optimization {
                    direction: g.direction.ok_or_else(|| {
                        EvolveError::Parse(format!("goal `{}`: missing direction", g.quality))
                    })?,
                },
                other => {
                    return Err(EvolveError::Parse(format!(
                        "goal `{}`: unknown kind `{other}`",
                        g.quality
                    )))
                }
            };
            Ok(Goal { quality: g.quality, kind, rank: g.rank })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((
        UpdatePackage {
            name: file.name,
            goals,
            models: file.models,
            budget: file.budget,
            validation_scenarios: Vec::new(),
        },
        file.validation_scenarios,
    ))
}

/// The standard mid-run update: add the latency goal between the loss and
/// energy goals, registering the latency quality model.
pub fn latency_update_package(threshold: f64) -> UpdatePackage {
    UpdatePackage {
        name: "latency-goal".into(),
        goals: vec![
            Goal::satisfaction("latency", crate::mape::Comparator::Below, threshold, 2),
            Goal::optimization("energy", crate::mape::Direction::Minimize, 3),
        ],
        models: vec!["latency".into()],
        budget: None,
        validation_scenarios: latency_validation_suite(),
    }
}

/// Validation scenarios for the latency update: the shipped suite extended
/// with latency estimate scripts.
pub fn latency_validation_suite() -> Vec<StubScenario> {
    let mut suite = crate::verify::default_stub_suite();
    for scenario in &mut suite {
        for s in &mut scenario.samples {
            // compliant latency everywhere except one option per sample, so
            // the latency filter is exercised without changing the winners
            let mut lat = vec![1i64; scenario.option_count];
            lat[scenario.option_count - 1] = 9;
            s.estimates.insert("latency".to_string(), lat);
            s.observed.entry("latency".to_string()).or_insert(1);
            if let Some(alt) = &mut s.observed_alt {
                alt.entry("latency".to_string()).or_insert(1);
            }
        }
    }
    suite
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mape::{default_goals, Comparator, Direction};

    fn mailbox() -> Mailbox {
        std::sync::Arc::new(std::sync::Mutex::new(None))
    }

    #[test]
    fn stage_validate_activate_protocol() {
        let mb = mailbox();
        let mut mgr = UpdateManager::new(mb.clone());
        let pkg = latency_update_package(5.0);
        mgr.stage(pkg.clone()).unwrap();
        assert_eq!(mgr.stage(pkg).unwrap_err(), EvolveError::AlreadyStaged);
        assert_eq!(mgr.activate().unwrap_err(), EvolveError::NotValidated);
        let report = mgr
            .validate(&default_goals(), &ModelRegistry::standard(), 7)
            .unwrap();
        assert!(report.passed, "{report:?}");
        assert!(!report.items.is_empty());
        mgr.activate().unwrap();
        let update = mb.lock().unwrap().take().expect("mailbox filled");
        assert_eq!(update.name, "latency-goal");
        assert_eq!(update.goals.len(), 3);
        assert_eq!(update.new_models.len(), 1);
        assert_eq!(mgr.activate().unwrap_err(), EvolveError::NothingStaged);
    }

    #[test]
    fn empty_package_rejected() {
        let mut mgr = UpdateManager::new(mailbox());
        let pkg = UpdatePackage {
            name: "noop".into(),
            goals: vec![],
            models: vec![],
            budget: None,
            validation_scenarios: vec![],
        };
        assert_eq!(mgr.stage(pkg).unwrap_err(), EvolveError::EmptyUpdate);
    }

    #[test]
    fn nan_threshold_fails_validation() {
        let mut mgr = UpdateManager::new(mailbox());
        let mut pkg = latency_update_package(f64::NAN);
        pkg.validation_scenarios.clear();
        mgr.stage(pkg).unwrap();
        let err = mgr
            .validate(&default_goals(), &ModelRegistry::standard(), 1)
            .unwrap_err();
        assert!(matches!(err, EvolveError::Goals(GoalError::NonFiniteThreshold(_))), "{err:?}");
    }

    #[test]
    fn goal_without_model_fails_validation() {
        let mut mgr = UpdateManager::new(mailbox());
        let pkg = UpdatePackage {
            name: "dangling".into(),
            goals: vec![Goal::satisfaction("throughput", Comparator::Below, 1.0, 9)],
            models: vec![],
            budget: None,
            validation_scenarios: vec![],
        };
        mgr.stage(pkg).unwrap();
        let err = mgr
            .validate(&default_goals(), &ModelRegistry::standard(), 1)
            .unwrap_err();
        assert_eq!(err, EvolveError::UnresolvedQuality("throughput".into()));
    }

    #[test]
    fn duplicate_rank_fails_validation() {
        let mut mgr = UpdateManager::new(mailbox());
        let pkg = UpdatePackage {
            name: "collide".into(),
            goals: vec![Goal::optimization("latency", Direction::Minimize, 1)],
            models: vec!["latency".into()],
            budget: None,
            validation_scenarios: vec![],
        };
        mgr.stage(pkg).unwrap();
        let err = mgr
            .validate(&default_goals(), &ModelRegistry::standard(), 1)
            .unwrap_err();
        assert!(matches!(err, EvolveError::Goals(GoalError::DuplicateRank(1))));
    }

    #[test]
    fn validation_report_is_deterministic() {
        let mut mgr = UpdateManager::new(mailbox());
        mgr.stage(latency_update_package(5.0)).unwrap();
        let a = mgr.validate(&default_goals(), &ModelRegistry::standard(), 3).unwrap();
        let b = mgr.validate(&default_goals(), &ModelRegistry::standard(), 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn package_file_parses() {
        let text = r#"
            name = "latency-goal"
            models = ["latency"]
            validation-scenarios = ["stubs/adaptation_needed.toml"]

            [[goal]]
            quality = "latency"
            kind = "satisfaction"
            comparator = "<"
            threshold = 5.0
            rank = 2

            [[goal]]
            quality = "energy"
            kind = "optimization"
            direction = "min"
            rank = 3
        "#;
        let (pkg, scenario_paths) = parse_package(text).unwrap();
        assert_eq!(pkg.name, "latency-goal");
        assert_eq!(pkg.models, vec!["latency".to_string()]);
        assert_eq!(pkg.goals.len(), 2);
        assert_eq!(scenario_paths, vec!["stubs/adaptation_needed.toml".to_string()]);
    }
}
