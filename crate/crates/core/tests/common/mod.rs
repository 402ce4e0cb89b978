//! Shared test support: an independent BFS reachability oracle over the
//! simulator definition, and a coverage-walk script generator derived from
//! it. Lives in test code so it cannot share logic with the engine under
//! test.
#![allow(dead_code)] // each test target uses a different subset

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::PathBuf;

use chatmonkey::hierarchy::ActionKind;
use chatmonkey::simapp::{SimApp, SimWidget};

pub fn fixture_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn app_fixture(name: &str) -> PathBuf {
    fixture_root().join("apps").join(name)
}

pub fn load_app(name: &str) -> SimApp {
    SimApp::load(app_fixture(name)).expect("fixture parses")
}

pub fn all_app_fixtures() -> Vec<PathBuf> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(fixture_root().join("apps"))
        .expect("fixtures/apps exists")
        .filter_map(|entry| entry.ok())
        .map(|entry| entry.path())
        .filter(|p| p.extension().map(|e| e == "sim").unwrap_or(false))
        .collect();
    paths.sort();
    paths
}

/// Abstract state of the BFS: current activity plus which (activity, widget)
/// slots hold validated values.
type State = (String, BTreeSet<(String, String)>);

#[derive(Debug, Clone, PartialEq)]
pub enum WalkAction {
    Input { label: String, value: String },
    Act { label: String, kind: ActionKind },
}

impl WalkAction {
    /// Natural-language answer line driving this action through the real
    /// matcher.
    pub fn render(&self) -> String {
        match self {
            WalkAction::Input { label, value } => format!(r#"input "{value}" into {label}"#),
            WalkAction::Act { label, kind } => match kind {
                ActionKind::Click => format!("click {label}"),
                ActionKind::LongPress => format!("long press {label}"),
                ActionKind::Scroll => format!("scroll {label}"),
                ActionKind::Input => format!(r#"input "" into {label}"#),
                ActionKind::None => label.clone(),
            },
        }
    }
}

fn display_label(widget: &SimWidget) -> String {
    widget
        .text
        .clone()
        .filter(|t| !t.is_empty())
        .or_else(|| widget.hint.clone().filter(|h| !h.is_empty()))
        .unwrap_or_else(|| widget.key.clone())
}

/// Independent successor function over the definition: input actions fill
/// slots with validator examples; actions with a gate-satisfied transition
/// rule change activity. Actions that complete a crash pattern are avoided.
fn successors(app: &SimApp, state: &State) -> Vec<(WalkAction, State)> {
    let (activity, slots) = state;
    let mut out = Vec::new();
    let page = match app.pages.iter().find(|p| &p.activity == activity) {
        Some(p) => p,
        None => return out,
    };
    let crash_finishers: Vec<(String, String, ActionKind)> = app
        .crash_rules
        .iter()
        .filter_map(|r| r.pattern.last())
        .map(|t| (t.activity.clone(), t.widget_key.clone(), t.action))
        .collect();
    for widget in &page.widgets {
        for &capability in &widget.capabilities {
            if crash_finishers.contains(&(activity.clone(), widget.key.clone(), capability)) {
                continue;
            }
            match capability {
                ActionKind::Input => {
                    let slot = (activity.clone(), widget.key.clone());
                    if slots.contains(&slot) {
                        continue;
                    }
                    let value = widget
                        .validator
                        .as_ref()
                        .and_then(|id| app.validators.get(id))
                        .map(|v| v.example.clone())
                        .unwrap_or_else(|| "x".to_string());
                    let mut next = slots.clone();
                    next.insert(slot);
                    out.push((
                        WalkAction::Input { label: display_label(widget), value },
                        (activity.clone(), next),
                    ));
                }
                kind => {
                    let rule = app.transitions.iter().find(|t| {
                        t.source_activity == *activity
                            && t.widget_key == widget.key
                            && t.action == kind
                    });
                    let Some(rule) = rule else { continue };
                    let gate_holds = rule.required_inputs.iter().all(|(w, v)| {
                        slots.contains(&(activity.clone(), w.clone()))
                            && app.validators.contains_key(v)
                    });
                    if gate_holds {
                        out.push((
                            WalkAction::Act { label: display_label(widget), kind },
                            (rule.target_activity.clone(), slots.clone()),
                        ));
                    }
                }
            }
        }
    }
    out
}

/// Exhaustive BFS closure (bounded depth) returning every reachable
/// activity.
pub fn reachable_activities(app: &SimApp, max_depth: usize) -> BTreeSet<String> {
    let start: State = (app.start_activity.clone(), BTreeSet::new());
    let mut seen: BTreeSet<State> = BTreeSet::new();
    let mut reached: BTreeSet<String> = BTreeSet::new();
    let mut queue: VecDeque<(State, usize)> = VecDeque::new();
    seen.insert(start.clone());
    reached.insert(start.0.clone());
    queue.push_back((start, 0));
    while let Some((state, depth)) = queue.pop_front() {
        if depth >= max_depth {
            continue;
        }
        for (_, next) in successors(app, &state) {
            if seen.insert(next.clone()) {
                reached.insert(next.0.clone());
                queue.push_back((next, depth + 1));
            }
        }
    }
    reached
}

/// Fraction of declared activities reachable within the depth bound.
pub fn reachable_fraction(app: &SimApp, max_depth: usize) -> f64 {
    let reached = reachable_activities(app, max_depth);
    let declared: BTreeSet<&String> = app.info.activities.iter().collect();
    let covered = declared.iter().filter(|a| reached.contains(a.as_str())).count();
    covered as f64 / declared.len() as f64
}

fn bfs_path_to_unvisited(
    app: &SimApp,
    from: &State,
    visited: &BTreeSet<String>,
) -> Option<(Vec<WalkAction>, State)> {
    let mut seen: BTreeSet<State> = BTreeSet::new();
    let mut queue: VecDeque<State> = VecDeque::new();
    let mut parent: BTreeMap<State, (State, WalkAction)> = BTreeMap::new();
    seen.insert(from.clone());
    queue.push_back(from.clone());
    while let Some(state) = queue.pop_front() {
        if !visited.contains(&state.0) {
            let mut actions = Vec::new();
            let mut cursor = state.clone();
            while let Some((prev, action)) = parent.get(&cursor) {
                actions.push(action.clone());
                cursor = prev.clone();
            }
            actions.reverse();
            return Some((actions, state));
        }
        for (action, next) in successors(app, &state) {
            if seen.insert(next.clone()) {
                parent.insert(next.clone(), (state.clone(), action));
                queue.push_back(next);
            }
        }
    }
    None
}

/// Script lines that walk every reachable activity, planned against the
/// definition only (never against the engine).
pub fn coverage_walk_script(app: &SimApp) -> Vec<String> {
    let mut visited: BTreeSet<String> = BTreeSet::new();
    visited.insert(app.start_activity.clone());
    let mut state: State = (app.start_activity.clone(), BTreeSet::new());
    let mut lines = Vec::new();
    while let Some((actions, end)) = bfs_path_to_unvisited(app, &state, &visited) {
        // Mark every activity entered along the path, not just the target.
        let mut cursor = state.clone();
        for action in &actions {
            lines.push(action.render());
            let next = successors(app, &cursor)
                .into_iter()
                .find(|(a, _)| a == action)
                .map(|(_, s)| s)
                .expect("replayed path step exists");
            visited.insert(next.0.clone());
            cursor = next;
        }
        state = end;
    }
    lines
}
