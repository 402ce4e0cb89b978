//! The operation memorizer: run-scoped visit counters for pages and widgets
//! plus the executed-action log. One memorizer per session, reset between
//! runs; `record` is the only mutator.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::hierarchy::{ActionKind, GuiPage, Widget};
use crate::prompter::DynamicContext;

/// Identity key used to find the same widget across visits: the `text`
/// field, else the resource id, else a positional key for unlabeled widgets.
pub fn widget_key(widget: &Widget) -> String {
    if let Some(t) = widget.text.as_deref().filter(|t| !t.is_empty()) {
        return t.to_string();
    }
    if let Some(id) = widget.resource_id.as_deref().filter(|id| !id.is_empty()) {
        return id.to_string();
    }
    format!("@{}", widget.node_index)
}

/// One executed widget action, as recorded in the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutedAction {
    pub step_text: String,
    pub widget_key: String,
    pub action: ActionKind,
    pub input_payload: Option<String>,
    pub source_activity: String,
    pub result_activity: String,
    /// Monotonic milliseconds since the run started.
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, Default)]
pub struct OperationMemorizer {
    /// (activity, count) in first-visit order.
    page_visits: Vec<(String, u64)>,
    widget_visits: BTreeMap<(String, String), u64>,
    action_log: Vec<ExecutedAction>,
}

impl OperationMemorizer {
    /// Initializes the memorizer standing on the start page, which counts as
    /// one visit before any action.
    pub fn start(start_page: &GuiPage) -> Self {
        let mut m = OperationMemorizer::default();
        m.bump_page(&start_page.activity_name);
        m
    }

    fn bump_page(&mut self, activity: &str) {
        for entry in &mut self.page_visits {
            if entry.0 == activity {
                entry.1 += 1;
                return;
            }
        }
        self.page_visits.push((activity.to_string(), 1));
    }

    /// Records one executed action and the page observed after it.
    pub fn record(&mut self, action: ExecutedAction, resulting_page: &GuiPage) {
        let key = (action.source_activity.clone(), action.widget_key.clone());
        *self.widget_visits.entry(key).or_insert(0) += 1;
        self.bump_page(&resulting_page.activity_name);
        self.action_log.push(action);
    }

    /// Snapshot of the page counters plus the tested widgets of the current
    /// page, matched by text then resource id, in page order.
    pub fn dynamic_context(&self, current_page: &GuiPage) -> DynamicContext {
        let mut widgets = Vec::new();
        for (_, w) in current_page.labeled() {
            let key = (current_page.activity_name.clone(), widget_key(w));
            if let Some(&count) = self.widget_visits.get(&key) {
                let label = w.display_label().unwrap_or_default().to_string();
                widgets.push((label, count));
            }
        }
        DynamicContext {
            page_visits: self.page_visits.clone(),
            current_page_widget_visits: widgets,
        }
    }

    pub fn page_visit_count(&self, activity: &str) -> u64 {
        self.page_visits
            .iter()
            .find(|(a, _)| a == activity)
            .map(|(_, c)| *c)
            .unwrap_or(0)
    }

    pub fn widget_visit_count(&self, activity: &str, key: &str) -> u64 {
        self.widget_visits
            .get(&(activity.to_string(), key.to_string()))
            .copied()
            .unwrap_or(0)
    }

    pub fn pages_visited(&self) -> impl Iterator<Item = &str> {
        self.page_visits.iter().map(|(a, _)| a.as_str())
    }

    pub fn total_page_visits(&self) -> u64 {
        self.page_visits.iter().map(|(_, c)| c).sum()
    }

    /// Number of distinct (activity, widget) pairs operated.
    pub fn distinct_widgets_operated(&self) -> usize {
        self.widget_visits.len()
    }

    pub fn log(&self) -> &[ExecutedAction] {
        &self.action_log
    }

    /// One JSON record per executed action.
    pub fn write_log<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for action in &self.action_log {
            serde_json::to_writer(&mut out, action)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}
