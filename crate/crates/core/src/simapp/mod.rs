//! Deterministic app simulator and the device-adapter abstraction.
//!
//! A [`SimApp`] is a declarative app: activities with widget lists,
//! transition rules (optionally gated on validated inputs), input validators
//! and crash rules. [`SimEngine`] executes it; [`DeviceAdapter`] abstracts
//! the app under test so the harness can drive either the simulator or an
//! external bridge speaking the line protocol in [`bridge`].

mod format;
pub mod bridge;

pub use bridge::{BridgeAdapter, BridgeRequest, BridgeResponse, BridgeServer};

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::hierarchy::{ActionKind, AppInfo, Bounds, GuiPage, Widget};
use crate::matcher::ActionIntent;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("{path}:{line}: {detail}")]
    DefinitionInvalid { path: String, line: usize, detail: String },
    #[error("no widget {0:?} on the current page")]
    UnknownWidget(String),
}

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("adapter unreachable: {0}")]
    Unreachable(String),
    #[error("adapter protocol error: {0}")]
    Protocol(String),
    #[error("adapter io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Result of performing one action against the app under test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepOutcome {
    Ok,
    NoEffect,
    Crash(String),
}

impl StepOutcome {
    pub fn word(&self) -> &'static str {
        match self {
            StepOutcome::Ok => "ok",
            StepOutcome::NoEffect => "no_effect",
            StepOutcome::Crash(_) => "crash",
        }
    }

    pub fn crash_message(&self) -> Option<&str> {
        match self {
            StepOutcome::Crash(m) => Some(m),
            _ => None,
        }
    }
}

impl fmt::Display for StepOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.word())
    }
}

/// Interface to the app under test: the built-in simulator or an external
/// bridge. One adapter instance per session.
pub trait DeviceAdapter {
    fn app_info(&self) -> &AppInfo;
    fn current_page(&mut self) -> Result<GuiPage, AdapterError>;
    fn perform(&mut self, intent: &ActionIntent) -> Result<StepOutcome, AdapterError>;
    fn reset(&mut self) -> Result<(), AdapterError>;
}

// ---------------------------------------------------------------------------
// Definition model
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidatorKind {
    NonEmpty,
    Integer,
    Decimal,
    Date,
    Regex,
}

#[derive(Debug, Clone)]
pub struct ValidatorSpec {
    pub id: String,
    pub kind: ValidatorKind,
    pub pattern: Option<regex::Regex>,
    /// A value that satisfies the validator; used by walk generators.
    pub example: String,
}

impl ValidatorSpec {
    pub fn accepts(&self, value: &str) -> bool {
        let v = value.trim();
        match self.kind {
            ValidatorKind::NonEmpty => !v.is_empty(),
            ValidatorKind::Integer => {
                let v = v.strip_prefix('-').unwrap_or(v);
                !v.is_empty() && v.chars().all(|c| c.is_ascii_digit())
            }
            ValidatorKind::Decimal => {
                let v = v.strip_prefix('-').unwrap_or(v);
                let mut parts = v.splitn(2, '.');
                let whole = parts.next().unwrap_or("");
                let frac = parts.next();
                let digits = |s: &str| !s.is_empty() && s.chars().all(|c| c.is_ascii_digit());
                match frac {
                    Some(f) => digits(whole) && digits(f),
                    None => digits(whole),
                }
            }
            ValidatorKind::Date => {
                let parts: Vec<&str> = v.split('-').collect();
                if parts.len() != 3 {
                    return false;
                }
                let nums: Option<Vec<u32>> = parts.iter().map(|p| p.parse().ok()).collect();
                match nums.as_deref() {
                    Some([_, m, d]) if parts[0].len() == 4 => {
                        (1..=12).contains(m) && (1..=31).contains(d)
                    }
                    _ => false,
                }
            }
            ValidatorKind::Regex => self
                .pattern
                .as_ref()
                .map(|p| p.is_match(v))
                .unwrap_or(false),
        }
    }
}

/// One widget of a simulated page. The declaration key doubles as the
/// widget's resource id.
#[derive(Debug, Clone)]
pub struct SimWidget {
    pub key: String,
    pub class_name: String,
    pub text: Option<String>,
    pub hint: Option<String>,
    pub desc: Option<String>,
    pub capabilities: Vec<ActionKind>,
    pub validator: Option<String>,
    pub nearby: Vec<String>,
    pub bounds: Bounds,
}

#[derive(Debug, Clone)]
pub struct SimPage {
    pub activity: String,
    pub widgets: Vec<SimWidget>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionRule {
    pub source_activity: String,
    pub widget_key: String,
    pub action: ActionKind,
    /// (widget key, validator id) pairs that must hold validated values.
    pub required_inputs: Vec<(String, String)>,
    pub target_activity: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriggerStep {
    pub activity: String,
    pub widget_key: String,
    pub action: ActionKind,
}

/// Fires when the executed-action history ends with a match of `pattern` as
/// an ordered subsequence. A single-step rule is a pattern of length one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrashRule {
    pub pattern: Vec<TriggerStep>,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct SimApp {
    pub info: AppInfo,
    pub screen_width: i32,
    pub screen_height: i32,
    pub start_activity: String,
    pub pages: Vec<SimPage>,
    pub transitions: Vec<TransitionRule>,
    pub crash_rules: Vec<CrashRule>,
    pub validators: BTreeMap<String, ValidatorSpec>,
}

impl SimApp {
    /// Parses and validates a definition file.
    pub fn load(path: impl AsRef<Path>) -> Result<SimApp, SimError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SimError::DefinitionInvalid {
            path: path.display().to_string(),
            line: 0,
            detail: e.to_string(),
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source_name: &str) -> Result<SimApp, SimError> {
        format::parse(text, source_name)
    }

    pub fn page_for(&self, activity: &str) -> Option<&SimPage> {
        self.pages.iter().find(|p| p.activity == activity)
    }

    /// Validators attached directly to input widgets, keyed by
    /// (activity, widget key).
    pub fn input_validators(&self) -> BTreeMap<(String, String), String> {
        let mut out = BTreeMap::new();
        for page in &self.pages {
            for w in &page.widgets {
                if let Some(v) = &w.validator {
                    out.insert((page.activity.clone(), w.key.clone()), v.clone());
                }
            }
        }
        out
    }

    /// Builds the GUI-page view of an activity.
    pub fn gui_page(&self, activity: &str) -> Option<GuiPage> {
        let page = self.page_for(activity)?;
        let widgets = page
            .widgets
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let mut builder = Widget::builder(w.class_name.clone(), w.bounds)
                    .text(w.text.clone().unwrap_or_default())
                    .hint(w.hint.clone().unwrap_or_default())
                    .resource_id(w.key.clone())
                    .description(w.desc.clone().unwrap_or_default())
                    .nearby(w.nearby.clone())
                    .node_index(i);
                for &cap in &w.capabilities {
                    builder = builder.capability(cap);
                }
                builder.build()
            })
            .collect();
        Some(GuiPage::assemble(activity, widgets, self.screen_height))
    }
}

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

/// Executes a [`SimApp`]: tracks the current activity, stored input values
/// and the action history that crash-sequence rules match against.
#[derive(Debug, Clone)]
pub struct SimEngine {
    app: SimApp,
    current: String,
    /// (activity, widget key) -> last validated input value.
    slots: BTreeMap<(String, String), String>,
    history: Vec<TriggerStep>,
    last_crash: Option<String>,
}

impl SimEngine {
    pub fn new(app: SimApp) -> Self {
        let current = app.start_activity.clone();
        SimEngine { app, current, slots: BTreeMap::new(), history: Vec::new(), last_crash: None }
    }

    pub fn app(&self) -> &SimApp {
        &self.app
    }

    pub fn current_activity(&self) -> &str {
        &self.current
    }

    pub fn page(&self) -> GuiPage {
        self.app
            .gui_page(&self.current)
            .expect("current activity always has a page")
    }

    pub fn last_crash(&self) -> Option<&str> {
        self.last_crash.as_deref()
    }

    pub fn stored_value(&self, activity: &str, key: &str) -> Option<&str> {
        self.slots
            .get(&(activity.to_string(), key.to_string()))
            .map(String::as_str)
    }

    fn crash_for(&self, current: &TriggerStep) -> Option<&CrashRule> {
        self.app.crash_rules.iter().find(|rule| {
            let Some((last, prefix)) = rule.pattern.split_last() else { return false };
            if last != current {
                return false;
            }
            // prefix must be an ordered (not necessarily contiguous)
            // subsequence of the history
            let mut it = self.history.iter();
            prefix.iter().all(|step| it.any(|h| h == step))
        })
    }

    fn reset_state(&mut self) {
        self.current = self.app.start_activity.clone();
        self.slots.clear();
        self.history.clear();
    }

    /// Executes one intent against the current page. Crash rules fire first
    /// and reset the app to its start page; otherwise a matching,
    /// input-gate-satisfied transition moves to its target; anything else is
    /// inert.
    pub fn perform_sim(&mut self, intent: &ActionIntent) -> Result<StepOutcome, SimError> {
        let page = self.page();
        let widget = page
            .widgets
            .get(intent.widget_index)
            .ok_or_else(|| SimError::UnknownWidget(format!("index {}", intent.widget_index)))?;
        let key = widget
            .resource_id
            .clone()
            .ok_or_else(|| SimError::UnknownWidget(intent.widget_key.clone()))?;

        let trigger = TriggerStep {
            activity: self.current.clone(),
            widget_key: key.clone(),
            action: intent.action,
        };

        if let Some(rule) = self.crash_for(&trigger) {
            let message = rule.message.clone();
            self.last_crash = Some(message.clone());
            self.reset_state();
            return Ok(StepOutcome::Crash(message));
        }
        self.history.push(trigger);

        if !widget.supports(intent.action) {
            return Ok(StepOutcome::NoEffect);
        }

        if intent.action == ActionKind::Input {
            let value = intent.payload.clone().unwrap_or_default();
            let sim_widget = self
                .app
                .page_for(&self.current)
                .and_then(|p| p.widgets.iter().find(|w| w.key == key))
                .expect("widget exists on declared page");
            if let Some(validator_id) = &sim_widget.validator {
                let validator = &self.app.validators[validator_id];
                if !validator.accepts(&value) {
                    return Ok(StepOutcome::NoEffect);
                }
            }
            self.slots.insert((self.current.clone(), key.clone()), value);
        }

        let transition = self.app.transitions.iter().find(|t| {
            t.source_activity == self.current && t.widget_key == key && t.action == intent.action
        });
        if let Some(rule) = transition {
            let gate_holds = rule.required_inputs.iter().all(|(widget_key, validator_id)| {
                let stored = self.slots.get(&(self.current.clone(), widget_key.clone()));
                match (stored, self.app.validators.get(validator_id)) {
                    (Some(value), Some(validator)) => validator.accepts(value),
                    _ => false,
                }
            });
            if gate_holds {
                self.current = rule.target_activity.clone();
                return Ok(StepOutcome::Ok);
            }
            return Ok(StepOutcome::NoEffect);
        }

        if intent.action == ActionKind::Input {
            // Value stored; typing into a field is a successful action even
            // without a page change.
            return Ok(StepOutcome::Ok);
        }
        Ok(StepOutcome::NoEffect)
    }
}

impl DeviceAdapter for SimEngine {
    fn app_info(&self) -> &AppInfo {
        &self.app.info
    }

    fn current_page(&mut self) -> Result<GuiPage, AdapterError> {
        Ok(self.page())
    }

    fn perform(&mut self, intent: &ActionIntent) -> Result<StepOutcome, AdapterError> {
        self.perform_sim(intent).map_err(|e| AdapterError::Protocol(e.to_string()))
    }

    fn reset(&mut self) -> Result<(), AdapterError> {
        self.reset_state();
        self.last_crash = None;
        Ok(())
    }
}
