//! Re-executes a recorded action trace against a fresh simulator. Used to
//! verify that reported crashes reproduce from their trace prefix.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::report::TraceStep;
use super::RunError;
use crate::matcher::ActionIntent;
use crate::memorizer;
use crate::simapp::{SimApp, SimEngine, StepOutcome};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayReport {
    pub steps_applied: usize,
    pub outcomes: Vec<String>,
    /// Message of the crash the replay ended in, if any.
    pub crash: Option<String>,
    /// First step that could not be applied (missing widget or activity
    /// mismatch), if any.
    pub diverged_at: Option<usize>,
}

impl ReplayReport {
    pub fn reproduced_crash(&self, message: &str) -> bool {
        self.diverged_at.is_none() && self.crash.as_deref() == Some(message)
    }
}

/// Reads the actions-log JSONL format into trace steps.
pub fn read_trace<R: BufRead>(input: R) -> Result<Vec<TraceStep>, RunError> {
    let mut steps = Vec::new();
    for line in input.lines() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let step: TraceStep = serde_json::from_str(trimmed)
            .map_err(|e| RunError::InvalidConfig(format!("bad trace line: {e}")))?;
        steps.push(step);
    }
    Ok(steps)
}

/// Applies the trace to a fresh engine. Widgets are resolved by their
/// identity key (text, else resource id, else `@index`) on the page the
/// engine is showing when the step runs.
pub fn replay(app: SimApp, trace: &[TraceStep]) -> ReplayReport {
    let mut engine = SimEngine::new(app);
    let mut report = ReplayReport {
        steps_applied: 0,
        outcomes: Vec::new(),
        crash: None,
        diverged_at: None,
    };
    for (i, step) in trace.iter().enumerate() {
        if engine.current_activity() != step.source_activity {
            report.diverged_at = Some(i);
            break;
        }
        let page = engine.page();
        let found = page
            .widgets
            .iter()
            .enumerate()
            .find(|(index, w)| {
                memorizer::widget_key(w) == step.widget_key
                    || step.widget_key == format!("@{index}")
            })
            .map(|(index, w)| (index, w.bounds));
        let Some((widget_index, bounds)) = found else {
            report.diverged_at = Some(i);
            break;
        };
        let intent = ActionIntent {
            step_text: format!("replay {}", step.widget_key),
            widget_index,
            widget_key: step.widget_key.clone(),
            action: step.action,
            payload: step.payload.clone(),
            bounds,
        };
        match engine.perform_sim(&intent) {
            Ok(outcome) => {
                report.steps_applied += 1;
                report.outcomes.push(outcome.word().to_string());
                if let StepOutcome::Crash(message) = outcome {
                    report.crash = Some(message);
                }
            }
            Err(_) => {
                report.diverged_at = Some(i);
                break;
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::ActionKind;

    fn smart_meter() -> SimApp {
        SimApp::load(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../fixtures/apps/smart_meter.sim"
        ))
        .unwrap()
    }

    fn click(source: &str, key: &str) -> TraceStep {
        TraceStep {
            source_activity: source.into(),
            widget_key: key.into(),
            action: ActionKind::Click,
            payload: None,
        }
    }

    #[test]
    fn crash_trace_reproduces() {
        let trace = vec![
            click("Devices", "Find Devices"),
            click("FindDevices", "Add Device"),
            click("Devices", "Meter A"),
            click("DeviceDetail", "Start"),
            click("DeviceDetail", "Stop"),
            click("DeviceDetail", "Back"),
            TraceStep {
                source_activity: "Devices".into(),
                widget_key: "Meter A".into(),
                action: ActionKind::LongPress,
                payload: None,
            },
            click("DeviceMenu", "Delete"),
        ];
        let report = replay(smart_meter(), &trace);
        assert_eq!(report.diverged_at, None);
        assert!(report
            .crash
            .as_deref()
            .unwrap()
            .contains("IllegalStateException"));
    }

    #[test]
    fn wrong_activity_diverges() {
        let trace = vec![click("DeviceMenu", "Delete")];
        let report = replay(smart_meter(), &trace);
        assert_eq!(report.diverged_at, Some(0));
    }

    #[test]
    fn missing_widget_diverges() {
        let trace = vec![click("Devices", "No Such Button")];
        let report = replay(smart_meter(), &trace);
        assert_eq!(report.diverged_at, Some(0));
    }
}
