//! Goal-sequenced decision making over verified adaptation options.
//!
//! Goals apply in rank order. Satisfaction goals filter conservatively on the
//! interval bound facing the threshold (upper bound for `<`/`<=`, lower bound
//! for `>`/`>=`), so the estimator's confidence transfers to the check.
//! Optimization goals then select by point estimate, ties broken by
//! enumeration order. An empty surviving set means failsafe.

use std::collections::BTreeMap;

use crate::smc::Estimate;

use super::knowledge::{Comparator, Direction, Goal, GoalKind};

/// Outcome of goal-sequenced selection.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    /// Index of the winning option, or `None` for failsafe.
    pub chosen: Option<usize>,
    /// Indices that survived every satisfaction goal.
    pub satisfying: Vec<usize>,
}

fn passes(goal_cmp: Comparator, threshold: f64, est: &Estimate) -> bool {
    match goal_cmp {
        Comparator::Below => est.hi < threshold,
        Comparator::AtMost => est.hi <= threshold,
        Comparator::Above => est.lo > threshold,
        Comparator::AtLeast => est.lo >= threshold,
    }
}

/// Apply the goal sequence to per-option quality estimates. `options[i]`
/// holds the estimates of the option with enumeration index `i`; options
/// missing a goal's quality fail that goal.
pub fn select(goals: &[Goal], options: &[&BTreeMap<String, Estimate>]) -> Decision {
    let mut survivors: Vec<usize> = (0..options.len()).collect();
    let mut satisfying: Option<Vec<usize>> = None;
    for goal in goals {
        match &goal.kind {
            GoalKind::Satisfaction { comparator, threshold } => {
                survivors.retain(|&i| {
                    options[i]
                        .get(&goal.quality)
                        .map_or(false, |est| passes(*comparator, *threshold, est))
                });
            }
            GoalKind::Optimization { direction } => {
                if satisfying.is_none() {
                    satisfying = Some(survivors.clone());
                }
                if survivors.is_empty() {
                    break;
                }
                let key = |i: usize| options[i].get(&goal.quality).map(|e| e.point);
                let best = survivors
                    .iter()
                    .filter_map(|&i| key(i))
                    .fold(None::<f64>, |acc, v| {
                        Some(match (acc, *direction) {
                            (None, _) => v,
                            (Some(a), Direction::Minimize) => a.min(v),
                            (Some(a), Direction::Maximize) => a.max(v),
                        })
                    });
                match best {
                    None => survivors.clear(),
                    Some(b) => survivors.retain(|&i| key(i) == Some(b)),
                }
            }
        }
    }
    let satisfying = satisfying.unwrap_or_else(|| survivors.clone());
    Decision { chosen: survivors.first().copied(), satisfying }
}

/// Derived pairwise comparator: does option `a` strictly outperform `b`
/// under the goal sequence? Ties in the deciding metric count as not
/// outperforming.
pub fn outperforms(
    goals: &[Goal],
    a: &BTreeMap<String, Estimate>,
    b: &BTreeMap<String, Estimate>,
) -> bool {
    select(goals, &[a, b]).chosen == Some(0) && select(goals, &[b, a]).chosen == Some(1)
}

/// Independent re-scan used by the correctness checks: the chosen option must
/// satisfy every satisfaction goal whenever any option does, and among those
/// must carry the minimal (or maximal) optimization point estimate.
pub fn verify_choice(goals: &[Goal], options: &[&BTreeMap<String, Estimate>], decision: &Decision) -> bool {
    let fresh = select(goals, options);
    fresh == *decision
}
