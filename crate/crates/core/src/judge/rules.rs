//! Deterministic rubric heuristics over the reserved trace vocabulary.
//!
//! Each heuristic inspects only the step sequence, never the outcome, and
//! fires on the structural signature its rubric describes:
//!
//! | rubric | fires when |
//! |---|---|
//! | intent_alignment | a tool call carries a `goal` argument that differs from the goal declared in step-0 state |
//! | plan_adherence | the `plan` state entry changes between consecutive steps |
//! | tool_correctness | a registered tool is called without its required argument |
//! | tool_choice_accuracy | a call names a tool outside the registry |
//! | state_tracking_consistency | a step's `cursor` state entry disagrees with its index |
//! | error_recovery | an error observation is never followed by another tool call |
//!
//! On traces written by the synthetic environment these signatures are exact:
//! a rubric fires if and only if the corresponding fault was injected. On
//! foreign traces that adopt the reserved vocabulary they behave as ordinary
//! conservative heuristics (absent markers mean no signal, not a violation).

use serde_json::Value;

use crate::convention::{self, ARG_GOAL, STATE_CURSOR, STATE_GOAL, STATE_PLAN};
use crate::trace::{ActionKind, Trajectory};

use super::{FlagVector, Rubric, RubricId};

/// Judges one trajectory with the deterministic heuristics.
///
/// The `rubrics` slice exists for interface parity with the LLM judge; the
/// rules are defined for the canonical six and entries beyond them are
/// ignored. The result always carries all six flags.
pub fn judge_rules(t: &Trajectory, rubrics: &[Rubric]) -> FlagVector {
    let mut flags = FlagVector::clean(t.run_id.clone());
    for rubric in rubrics {
        let violated = match rubric.id {
            RubricId::IntentAlignment => intent_drift(t),
            RubricId::PlanAdherence => plan_churn(t),
            RubricId::ToolCorrectness => malformed_call(t),
            RubricId::ToolChoiceAccuracy => unregistered_tool(t),
            RubricId::StateTrackingConsistency => cursor_skew(t),
            RubricId::ErrorRecovery => unrecovered_error(t),
        };
        flags.set(rubric.id, violated);
    }
    flags
}

fn declared_goal(t: &Trajectory) -> Option<&str> {
    t.steps.first()?.state.get(STATE_GOAL)?.as_str()
}

fn intent_drift(t: &Trajectory) -> bool {
    let Some(goal) = declared_goal(t) else { return false };
    t.steps.iter().any(|step| {
        step.action.kind == ActionKind::ToolCall
            && step
                .action
                .arguments
                .as_ref()
                .and_then(|args| args.get(ARG_GOAL))
                .and_then(Value::as_str)
                .is_some_and(|claimed| claimed != goal)
    })
}

fn plan_churn(t: &Trajectory) -> bool {
    t.steps.windows(2).any(|pair| {
        match (
            pair[0].state.get(STATE_PLAN).and_then(Value::as_str),
            pair[1].state.get(STATE_PLAN).and_then(Value::as_str),
        ) {
            (Some(before), Some(after)) => before != after,
            _ => false,
        }
    })
}

fn malformed_call(t: &Trajectory) -> bool {
    t.steps.iter().any(|step| {
        if step.action.kind != ActionKind::ToolCall {
            return false;
        }
        let Some(required) = step
            .action
            .tool_name
            .as_deref()
            .and_then(convention::required_argument)
        else {
            return false;
        };
        !step
            .action
            .arguments
            .as_ref()
            .is_some_and(|args| args.contains_key(required))
    })
}

fn unregistered_tool(t: &Trajectory) -> bool {
    t.steps.iter().any(|step| {
        step.action.kind == ActionKind::ToolCall
            && step
                .action
                .tool_name
                .as_deref()
                .is_some_and(|name| !convention::is_registered_tool(name))
    })
}

fn cursor_skew(t: &Trajectory) -> bool {
    t.steps.iter().any(|step| {
        step.state
            .get(STATE_CURSOR)
            .and_then(Value::as_u64)
            .is_some_and(|cursor| cursor != step.index as u64)
    })
}

fn unrecovered_error(t: &Trajectory) -> bool {
    let Some(last_call) = t
        .steps
        .iter()
        .rposition(|s| s.action.kind == ActionKind::ToolCall)
    else {
        return false;
    };
    t.steps.iter().any(|step| {
        step.observation.as_ref().is_some_and(|o| o.is_error) && step.index >= last_call
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use serde_json::json;

    use crate::judge::rubric_registry;
    use crate::trace::{Action, Observation, ObservationKind, Outcome, Step, Trajectory};

    use super::*;

    fn base_state(index: usize) -> BTreeMap<String, Value> {
        let mut state = BTreeMap::new();
        state.insert(STATE_GOAL.into(), json!("resolve ticket 7"));
        state.insert(STATE_PLAN.into(), json!("search >> fetch >> compute >> submit"));
        state.insert(STATE_CURSOR.into(), json!(index));
        state
    }

    fn call(index: usize, tool: &str, args: &[(&str, Value)]) -> Step {
        Step {
            index,
            state: base_state(index),
            action: Action {
                kind: ActionKind::ToolCall,
                tool_name: Some(tool.into()),
                arguments: Some(args.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()),
                rationale: None,
            },
            observation: Some(Observation {
                kind: ObservationKind::ToolResult,
                payload: Some(json!({"ok": true})),
                is_error: false,
            }),
        }
    }

    fn message(index: usize) -> Step {
        Step {
            index,
            state: base_state(index),
            action: Action {
                kind: ActionKind::Message,
                tool_name: None,
                arguments: None,
                rationale: Some("thinking".into()),
            },
            observation: None,
        }
    }

    fn clean_run() -> Trajectory {
        Trajectory {
            v: crate::trace::TRACE_SCHEMA_VERSION,
            run_id: "run-x".into(),
            task_id: "task-x".into(),
            benchmark: "unit".into(),
            steps: vec![
                message(0),
                call(1, "search", &[("query", json!("ticket 7"))]),
                call(2, "fetch", &[("doc_id", json!("d-1"))]),
                call(3, "compute", &[("expr", json!("1+1"))]),
                call(
                    4,
                    "submit",
                    &[("answer", json!("2")), (ARG_GOAL, json!("resolve ticket 7"))],
                ),
            ],
            outcome: Outcome { success: true, score: Some(1.0) },
            meta: BTreeMap::new(),
        }
    }

    fn flags_of(t: &Trajectory) -> [u8; 6] {
        judge_rules(t, &rubric_registry()).as_array()
    }

    #[test]
    fn clean_run_raises_nothing() {
        assert_eq!(flags_of(&clean_run()), [0; 6]);
    }

    #[test]
    fn goal_drift_on_submit_is_intent_violation() {
        let mut t = clean_run();
        t.steps[4]
            .action
            .arguments
            .as_mut()
            .unwrap()
            .insert(ARG_GOAL.into(), json!("resolve ticket 9"));
        assert_eq!(flags_of(&t), [1, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn plan_rewrite_is_plan_violation() {
        let mut t = clean_run();
        for step in t.steps.iter_mut().skip(3) {
            step.state.insert(STATE_PLAN.into(), json!("improvise"));
        }
        assert_eq!(flags_of(&t), [0, 1, 0, 0, 0, 0]);
    }

    #[test]
    fn missing_required_argument_is_correctness_violation() {
        let mut t = clean_run();
        t.steps[2].action.arguments = Some(BTreeMap::new());
        assert_eq!(flags_of(&t), [0, 0, 1, 0, 0, 0]);
    }

    #[test]
    fn unknown_tool_is_choice_violation_only() {
        let mut t = clean_run();
        // Wrong tool, and naturally without any registry argument: must not
        // double-count as a correctness violation.
        t.steps[1].action.tool_name = Some("telnet".into());
        assert_eq!(flags_of(&t), [0, 0, 0, 1, 0, 0]);
    }

    #[test]
    fn stale_cursor_is_state_violation() {
        let mut t = clean_run();
        t.steps[3].state.insert(STATE_CURSOR.into(), json!(11));
        assert_eq!(flags_of(&t), [0, 0, 0, 0, 1, 0]);
    }

    #[test]
    fn terminal_error_without_retry_is_recovery_violation() {
        let mut t = clean_run();
        t.steps[4].observation = Some(Observation {
            kind: ObservationKind::ToolResult,
            payload: None,
            is_error: true,
        });
        assert_eq!(flags_of(&t), [0, 0, 0, 0, 0, 1]);
    }

    #[test]
    fn recovered_error_is_not_a_violation() {
        let mut t = clean_run();
        // compute errors at step 3, but the submit call at step 4 follows.
        t.steps[3].observation = Some(Observation {
            kind: ObservationKind::ToolResult,
            payload: None,
            is_error: true,
        });
        assert_eq!(flags_of(&t), [0; 6]);
    }

    #[test]
    fn traces_without_markers_raise_nothing() {
        let mut t = clean_run();
        for step in &mut t.steps {
            step.state.clear();
        }
        // Goal/plan/cursor heuristics all lose their anchors; only registry
        // checks remain possible, and these calls are well-formed.
        assert_eq!(flags_of(&t), [0; 6]);
    }

    #[test]
    fn verdict_ignores_outcome() {
        let mut bad = clean_run();
        bad.steps[3].state.insert(STATE_CURSOR.into(), json!(0));
        let mut flipped = bad.clone();
        flipped.outcome = Outcome { success: false, score: None };
        assert_eq!(flags_of(&bad), flags_of(&flipped));
    }
}
