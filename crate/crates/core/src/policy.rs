//! The model policy engine: rules over the system state, gated by cost.
//!
//! Rules are a small declarative condition tree loaded from config —
//! auditable, deterministic, and serializable straight into provenance.
//! Evaluation is a pure function of the snapshot, the rule table, and the
//! recorded firing history: the highest-priority rule whose predicate holds
//! and whose cooldown has elapsed wins, ties break by rule id. A winning
//! retrain must still clear the cadence gate (unless an emergency
//! change-point overrides it) and the cost gate `expected_gain >=
//! retrain_cost`, otherwise it degrades.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::monitor::SystemState;
use crate::shift::ShiftType;
use crate::store::ProvenanceRecord;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl Comparator {
    fn holds(self, left: f64, right: f64) -> bool {
        match self {
            Comparator::Lt => left < right,
            Comparator::Le => left <= right,
            Comparator::Gt => left > right,
            Comparator::Ge => left >= right,
            Comparator::Eq => left == right,
            Comparator::Ne => left != right,
        }
    }
}

/// Declared, typed accessors into [`SystemState`]. Parsing the config can
/// only ever produce these, so an undeclared field is a load-time error by
/// construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateField {
    TimeSinceRetrain,
    LabelCoverage,
    ModelHealth,
    BaselineHealth,
    HealthDrop,
    ShiftMagnitude,
    ShiftPValue,
    PredictionValue,
    RetrainCost,
    WallClock,
}

impl StateField {
    pub fn read(self, state: &SystemState) -> Option<f64> {
        match self {
            StateField::TimeSinceRetrain => Some(state.time_since_retrain),
            StateField::LabelCoverage => Some(state.label_coverage),
            StateField::ModelHealth => state.model_health,
            StateField::BaselineHealth => state.baseline_health,
            StateField::HealthDrop => state.health_drop(),
            StateField::ShiftMagnitude => state.latest_shift.as_ref().map(|s| s.report.magnitude),
            StateField::ShiftPValue => state
                .latest_shift
                .as_ref()
                .and_then(|s| s.report.p_value()),
            StateField::PredictionValue => Some(state.prediction_value),
            StateField::RetrainCost => Some(state.retrain_cost),
            StateField::WallClock => Some(state.wall_clock as f64),
        }
    }
}

/// Condition tree. A comparison on an absent field is false.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Predicate {
    Cmp { field: StateField, op: Comparator, value: f64 },
    ShiftTypeIs { shift_type: ShiftType },
    All { all: Vec<Predicate> },
    Any { any: Vec<Predicate> },
    Not { not: Box<Predicate> },
}

impl Predicate {
    pub fn holds(&self, state: &SystemState) -> bool {
        match self {
            Predicate::Cmp { field, op, value } => {
                field.read(state).is_some_and(|left| op.holds(left, *value))
            }
            Predicate::ShiftTypeIs { shift_type } => state
                .latest_shift
                .as_ref()
                .is_some_and(|s| s.report.shift_type == *shift_type),
            Predicate::All { all } => all.iter().all(|p| p.holds(state)),
            Predicate::Any { any } => any.iter().any(|p| p.holds(state)),
            Predicate::Not { not } => !not.holds(state),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Retrain,
    KeepExisting,
    Rollback,
    RaiseAlert,
    /// Accepted in the schema; rejected at apply time.
    TransferLearn,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ActionParams {
    /// Rollback target; `None` means the version before the active one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rollback_target: Option<u64>,
    /// Trailing joined-example window to retrain on; `None` uses the
    /// configured default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrain_window: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alert_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyAction {
    pub kind: ActionKind,
    #[serde(default)]
    pub params: ActionParams,
}

impl PolicyAction {
    pub fn keep_existing() -> Self {
        Self { kind: ActionKind::KeepExisting, params: ActionParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub id: String,
    pub predicate: Predicate,
    pub action: PolicyAction,
    #[serde(default)]
    pub priority: i32,
    /// Seconds this rule stays silent after firing.
    #[serde(default)]
    pub cooldown: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostModel {
    /// Cost units charged per retraining run.
    pub retrain_cost: f64,
    /// Expected events served until the next natural retrain; scales the
    /// benefit of recovering accuracy.
    pub horizon_events: f64,
    /// Minimum seconds between retrains (emergency change-points override).
    pub min_cadence: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self { retrain_cost: 100.0, horizon_events: 10_000.0, min_cadence: 60.0 }
    }
}

/// Expected benefit of retraining now: recoverable accuracy times the value
/// of a correct prediction times the horizon. Missing inputs mean zero gain
/// (flagged so the caller can emit a warning).
pub fn expected_gain(state: &SystemState, cost: &CostModel) -> (f64, bool) {
    match state.health_drop() {
        Some(drop) => (state.prediction_value * cost.horizon_events * drop.max(0.0), true),
        None => (0.0, false),
    }
}

/// Emergency override: a change-point report at p < 0.001 may bypass the
/// cadence gate.
fn emergency(state: &SystemState) -> bool {
    state.latest_shift.as_ref().is_some_and(|s| {
        s.report.shift_type == ShiftType::ChangePoint
            && s.report.p_value().is_some_and(|p| p < 0.001)
    })
}

/// The outcome of one evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub action: PolicyAction,
    pub provenance: ProvenanceRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_gain: Option<f64>,
    pub note: String,
}

#[derive(Debug)]
pub struct PolicyEngine {
    rules: Vec<Rule>,
    cost: CostModel,
    last_fired: BTreeMap<String, i64>,
    next_decision_id: u64,
}

impl PolicyEngine {
    /// Validates the rule table up front; evaluation can no longer fail.
    pub fn new(rules: Vec<Rule>, cost: CostModel) -> Result<Self, PolicyError> {
        let mut seen = std::collections::BTreeSet::new();
        for rule in &rules {
            if rule.id.is_empty() {
                return Err(PolicyError::Config("rule id must be non-empty".into()));
            }
            if !seen.insert(rule.id.clone()) {
                return Err(PolicyError::Config(format!("duplicate rule id {}", rule.id)));
            }
            if rule.cooldown < 0.0 {
                return Err(PolicyError::Config(format!(
                    "rule {} has negative cooldown",
                    rule.id
                )));
            }
        }
        Ok(Self { rules, cost, last_fired: BTreeMap::new(), next_decision_id: 0 })
    }

    pub fn cost(&self) -> &CostModel {
        &self.cost
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    /// Pure function of (state snapshot, rule table, firing history): no
    /// hidden clock reads, the snapshot's wall clock is the only time.
    pub fn evaluate(&mut self, state: &SystemState, snapshot_id: u64) -> Decision {
        let now = state.wall_clock;
        let mut candidates: Vec<&Rule> = self
            .rules
            .iter()
            .filter(|r| r.predicate.holds(state))
            .filter(|r| {
                self.last_fired
                    .get(&r.id)
                    .is_none_or(|&at| (now - at) as f64 / 1000.0 >= r.cooldown)
            })
            .collect();
        candidates.sort_by(|a, b| b.priority.cmp(&a.priority).then_with(|| a.id.cmp(&b.id)));

        let decision_id = self.next_decision_id;
        self.next_decision_id += 1;
        let report_ids: Vec<u64> = state
            .latest_shift
            .iter()
            .map(|s| s.report_seq)
            .collect();

        let Some(winner) = candidates.first() else {
            return Decision {
                action: PolicyAction::keep_existing(),
                provenance: ProvenanceRecord {
                    decision_id,
                    snapshot_id,
                    rule_id: None,
                    report_ids,
                    action: "keep_existing".into(),
                    timestamp: now,
                },
                expected_gain: None,
                note: "no rule fired".into(),
            };
        };

        let mut action = winner.action.clone();
        let mut note = format!("rule {} fired", winner.id);
        let mut gain = None;

        if action.kind == ActionKind::Retrain {
            let cadence_ok =
                state.time_since_retrain >= self.cost.min_cadence || emergency(state);
            if !cadence_ok {
                action = PolicyAction::keep_existing();
                note = format!("rule {} suppressed by cadence", winner.id);
            } else {
                let (g, known) = expected_gain(state, &self.cost);
                gain = Some(g);
                // A fresh pipeline has no health baseline yet; the cost gate
                // only applies once the gain is measurable.
                if known && g < state.retrain_cost {
                    action = PolicyAction {
                        kind: ActionKind::RaiseAlert,
                        params: ActionParams {
                            alert_reason: Some(format!(
                                "retrain gain {g:.1} below cost {:.1}",
                                state.retrain_cost
                            )),
                            ..Default::default()
                        },
                    };
                    note = format!("rule {} degraded by cost gate", winner.id);
                }
            }
        }

        self.last_fired.insert(winner.id.clone(), now);
        Decision {
            action: action.clone(),
            provenance: ProvenanceRecord {
                decision_id,
                snapshot_id,
                rule_id: Some(winner.id.clone()),
                report_ids,
                action: action_name(action.kind).into(),
                timestamp: now,
            },
            expected_gain: gain,
            note,
        }
    }
}

pub fn action_name(kind: ActionKind) -> &'static str {
    match kind {
        ActionKind::Retrain => "retrain",
        ActionKind::KeepExisting => "keep_existing",
        ActionKind::Rollback => "rollback",
        ActionKind::RaiseAlert => "raise_alert",
        ActionKind::TransferLearn => "transfer_learn",
    }
}

/// The default rule table: emergency change-point retrain, shift-magnitude
/// retrain at cadence, health-degradation rollback, and a low-priority
/// health alert.
pub fn default_rules() -> Vec<Rule> {
    vec![
        Rule {
            id: "emergency_changepoint_retrain".into(),
            predicate: Predicate::All {
                all: vec![
                    Predicate::ShiftTypeIs { shift_type: ShiftType::ChangePoint },
                    Predicate::Cmp {
                        field: StateField::ShiftPValue,
                        op: Comparator::Lt,
                        value: 0.001,
                    },
                ],
            },
            action: PolicyAction { kind: ActionKind::Retrain, params: ActionParams::default() },
            priority: 100,
            cooldown: 30.0,
        },
        Rule {
            id: "shift_magnitude_retrain".into(),
            predicate: Predicate::All {
                all: vec![
                    Predicate::Cmp {
                        field: StateField::ShiftMagnitude,
                        op: Comparator::Ge,
                        value: 0.3,
                    },
                    Predicate::Cmp {
                        field: StateField::ShiftPValue,
                        op: Comparator::Lt,
                        value: 0.001,
                    },
                ],
            },
            action: PolicyAction { kind: ActionKind::Retrain, params: ActionParams::default() },
            priority: 50,
            cooldown: 30.0,
        },
        Rule {
            id: "health_degradation_rollback".into(),
            predicate: Predicate::Cmp {
                field: StateField::HealthDrop,
                op: Comparator::Ge,
                value: 0.15,
            },
            action: PolicyAction { kind: ActionKind::Rollback, params: ActionParams::default() },
            priority: 10,
            cooldown: 120.0,
        },
    ]
}
