//! Decodes oracle answers into executable widget actions.
//!
//! An answer is split into atomic operation steps on `and`, `,` and `.`
//! (periods inside numeric literals and anything inside quotes survive),
//! each step is scored against every labeled widget of the page, and the
//! argmax widget wins when its score reaches the threshold (0.5 by default).
//! Below the threshold the step is a `NoMatch`, which the harness answers
//! with a feedback prompt.
//!
//! The shipped scorer is lexical: Dice overlap between preprocessed token
//! multisets, with exact label matches forced to 1.0. It sits behind
//! [`StepScorer`], so a learned scorer honoring the `[0,1]` contract can be
//! dropped in without touching the loop.

mod datagen;

pub use datagen::{
    evaluate_matcher, evaluate_pairs, generate_adversarial_cases, generate_eval_cases,
    generate_training_data, read_pairs_jsonl, write_pairs_jsonl, ActionFamily, EvalCase, EvalSet,
    LabeledPair, MatchEvalReport, OpTemplate, PairEvalReport, PairLabel, TemplateSet,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hierarchy::{ActionKind, Bounds, GuiPage, Widget};
use crate::memorizer;
use crate::prompter::Preprocessor;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum MatcherError {
    #[error("answer contains no operation steps")]
    NoSteps,
    #[error("widget {widget:?} cannot {demanded}")]
    ActionUnsupported { widget: String, demanded: ActionKind },
    #[error("no interactive labeled widgets to generate data from")]
    NoInteractiveWidgets,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
    #[error("matcher io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One atomic natural-language operation extracted from an answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationStep {
    pub raw: String,
    pub verb: Option<String>,
    pub payload: Option<String>,
    pub target_phrase: String,
}

impl OperationStep {
    pub fn from_raw(raw: impl Into<String>) -> Self {
        let raw = raw.into();
        OperationStep { target_phrase: raw.clone(), raw, verb: None, payload: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub widget_index: usize,
    pub score: f64,
    /// The widget-side text the score was computed against (text, else
    /// resource id, else description).
    pub widget_text_used: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatchOutcome {
    Match(MatchResult),
    /// All scores fell below the threshold; triggers the feedback prompt.
    NoMatch { best_score: f64 },
}

impl MatchOutcome {
    pub fn as_match(&self) -> Option<&MatchResult> {
        match self {
            MatchOutcome::Match(m) => Some(m),
            MatchOutcome::NoMatch { .. } => None,
        }
    }
}

/// Executable intent produced from a matched step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionIntent {
    pub step_text: String,
    pub widget_index: usize,
    pub widget_key: String,
    pub action: ActionKind,
    pub payload: Option<String>,
    pub bounds: Bounds,
}

// ---------------------------------------------------------------------------
// Answer splitting
// ---------------------------------------------------------------------------

/// Splits an answer into steps on word-boundary `and`, `,` and `.`,
/// preserving order and dropping empty fragments. Periods inside numeric
/// literals (`3.5`) and any delimiter inside a quoted span are not split.
pub fn split_answer(text: &str) -> Result<Vec<OperationStep>, MatcherError> {
    let chars: Vec<char> = text.chars().collect();
    let mut steps: Vec<OperationStep> = Vec::new();
    let mut segment = String::new();
    let mut in_quote: Option<char> = None;
    let mut i = 0;
    let flush = |segment: &mut String, steps: &mut Vec<OperationStep>| {
        let trimmed = segment.trim();
        if !trimmed.is_empty() {
            steps.push(OperationStep::from_raw(trimmed));
        }
        segment.clear();
    };
    while i < chars.len() {
        let c = chars[i];
        if let Some(q) = in_quote {
            segment.push(c);
            if c == q {
                in_quote = None;
            }
            i += 1;
            continue;
        }
        match c {
            '"' => {
                in_quote = Some('"');
                segment.push(c);
                i += 1;
            }
            '\'' if i == 0 || !chars[i - 1].is_alphanumeric() => {
                // Apostrophes inside words ("don't") are not quote openers.
                in_quote = Some('\'');
                segment.push(c);
                i += 1;
            }
            ',' => {
                flush(&mut segment, &mut steps);
                i += 1;
            }
            '.' => {
                let prev_digit = i > 0 && chars[i - 1].is_ascii_digit();
                let next_digit = chars.get(i + 1).map(|c| c.is_ascii_digit()).unwrap_or(false);
                if prev_digit && next_digit {
                    segment.push(c);
                } else {
                    flush(&mut segment, &mut steps);
                }
                i += 1;
            }
            'a' | 'A' => {
                let boundary_before = i == 0 || !chars[i - 1].is_alphanumeric();
                let word = chars
                    .get(i..i + 3)
                    .map(|w| w.iter().collect::<String>().eq_ignore_ascii_case("and"));
                let boundary_after = chars
                    .get(i + 3)
                    .map(|c| !c.is_alphanumeric())
                    .unwrap_or(true);
                if boundary_before && word == Some(true) && boundary_after {
                    flush(&mut segment, &mut steps);
                    i += 3;
                } else {
                    segment.push(c);
                    i += 1;
                }
            }
            _ => {
                segment.push(c);
                i += 1;
            }
        }
    }
    flush(&mut segment, &mut steps);
    if steps.is_empty() {
        return Err(MatcherError::NoSteps);
    }
    Ok(steps)
}

// ---------------------------------------------------------------------------
// Payload extraction
// ---------------------------------------------------------------------------

const CLICK_VERBS: &[&str] = &["click", "tap", "press", "select", "choose", "hit", "open", "touch", "push"];
const INPUT_VERBS: &[&str] = &["input", "enter", "type", "fill", "set", "write"];
const SCROLL_VERBS: &[&str] = &["scroll", "swipe"];
const PAYLOAD_PREPOSITIONS: &[&str] = &["into", "in", "to"];
const EDGE_CONNECTORS: &[&str] = &["into", "in", "to", "on", "onto", "at", "with", "for"];

fn norm_token(token: &str) -> String {
    token
        .trim_matches(|c: char| !c.is_alphanumeric() && c != '-')
        .to_ascii_lowercase()
}

fn is_input_verb(verb: &str) -> bool {
    INPUT_VERBS.contains(&verb)
}

fn first_quoted_span(raw: &str) -> Option<(usize, usize, char)> {
    for quote in ['"', '\''] {
        if let Some(start) = raw.find(quote) {
            if let Some(rel_end) = raw[start + 1..].find(quote) {
                return Some((start, start + 1 + rel_end, quote));
            }
        }
    }
    None
}

/// Fills the verb, payload and target phrase of a step. The payload is the
/// first quoted span when present, else the tokens following an input verb
/// up to a connecting preposition (into/in/to).
pub fn extract_payload(step: OperationStep) -> OperationStep {
    let raw = step.raw.trim().to_string();
    let mut payload: Option<String> = None;
    let mut remainder = raw.clone();
    if let Some((start, end, _)) = first_quoted_span(&raw) {
        payload = Some(raw[start + 1..end].to_string());
        remainder = format!("{} {}", &raw[..start], &raw[end + 1..]);
    }

    let tokens: Vec<String> = remainder.split_whitespace().map(str::to_string).collect();
    let mut verb: Option<String> = None;
    let mut rest_start = 0;
    if let Some(first) = tokens.first() {
        let f = norm_token(first);
        let second = tokens.get(1).map(|t| norm_token(t));
        if f == "long" && matches!(second.as_deref(), Some("press") | Some("click") | Some("tap")) {
            verb = Some("long press".into());
            rest_start = 2;
        } else if f == "long-press" || f == "longpress" {
            verb = Some("long press".into());
            rest_start = 1;
        } else if f == "hold" {
            verb = Some("hold".into());
            rest_start = 1;
        } else if CLICK_VERBS.contains(&f.as_str())
            || INPUT_VERBS.contains(&f.as_str())
            || SCROLL_VERBS.contains(&f.as_str())
        {
            verb = Some(f);
            rest_start = 1;
        }
    }

    let mut rest: Vec<String> = tokens[rest_start.min(tokens.len())..].to_vec();
    if payload.is_none() {
        if let Some(v) = verb.as_deref() {
            if is_input_verb(v) {
                if let Some(pos) = rest
                    .iter()
                    .position(|t| PAYLOAD_PREPOSITIONS.contains(&norm_token(t).as_str()))
                {
                    payload = Some(rest[..pos].join(" "));
                    rest = rest[pos + 1..].to_vec();
                } else {
                    // No connecting preposition: the whole tail is payload.
                    payload = Some(rest.join(" "));
                    rest = Vec::new();
                }
            }
        }
    }

    while rest
        .first()
        .map(|t| EDGE_CONNECTORS.contains(&norm_token(t).as_str()))
        .unwrap_or(false)
    {
        rest.remove(0);
    }
    while rest
        .last()
        .map(|t| EDGE_CONNECTORS.contains(&norm_token(t).as_str()))
        .unwrap_or(false)
    {
        rest.pop();
    }

    let target_phrase = rest
        .join(" ")
        .trim_matches(|c: char| matches!(c, '.' | ',' | '!' | '?' | ';'))
        .trim()
        .to_string();
    OperationStep {
        raw,
        verb,
        payload: payload.map(|p| p.trim().to_string()).filter(|p| !p.is_empty()),
        target_phrase,
    }
}

/// The action kind a step's verb asks for, if any.
pub fn demanded_kind(step: &OperationStep) -> Option<ActionKind> {
    match step.verb.as_deref() {
        Some("long press") | Some("hold") => Some(ActionKind::LongPress),
        Some(v) if SCROLL_VERBS.contains(&v) => Some(ActionKind::Scroll),
        Some(v) if is_input_verb(v) => Some(ActionKind::Input),
        Some(v) if CLICK_VERBS.contains(&v) => Some(ActionKind::Click),
        _ => step.payload.as_ref().map(|_| ActionKind::Input),
    }
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

/// Whether the scorer consults nearby texts in addition to the widget label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NearbyMode {
    LabelOnly,
    WithNearby,
}

pub trait StepScorer {
    /// Similarity in `[0,1]` between a step and a widget.
    fn score(&self, step: &OperationStep, widget: &Widget) -> f64;
}

/// Token-overlap baseline: Dice coefficient over preprocessed token
/// multisets, exact label matches forced to 1.0. With `WithNearby` the score
/// may also be computed against label+nearby tokens and the maximum of the
/// two is returned, so nearby text can only help sparse labels, never dilute.
#[derive(Debug, Clone)]
pub struct LexicalScorer {
    pre: Preprocessor,
    pub mode: NearbyMode,
}

impl Default for LexicalScorer {
    fn default() -> Self {
        LexicalScorer { pre: Preprocessor::default(), mode: NearbyMode::WithNearby }
    }
}

impl LexicalScorer {
    pub fn new(mode: NearbyMode) -> Self {
        LexicalScorer { pre: Preprocessor::default(), mode }
    }

    pub fn with_preprocessor(pre: Preprocessor, mode: NearbyMode) -> Self {
        LexicalScorer { pre, mode }
    }

    fn tokens_or_raw(&self, text: &str) -> Vec<String> {
        let tokens = self.pre.preprocess(text);
        if tokens.is_empty() {
            let raw = text.trim().to_lowercase();
            if raw.is_empty() {
                Vec::new()
            } else {
                vec![raw]
            }
        } else {
            tokens
        }
    }
}

fn dice(a: &[String], b: &[String]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut counts: std::collections::HashMap<&str, i64> = std::collections::HashMap::new();
    for token in a {
        *counts.entry(token.as_str()).or_insert(0) += 1;
    }
    let mut common = 0usize;
    for token in b {
        if let Some(c) = counts.get_mut(token.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    2.0 * common as f64 / (a.len() + b.len()) as f64
}

impl StepScorer for LexicalScorer {
    fn score(&self, step: &OperationStep, widget: &Widget) -> f64 {
        let Some(label) = widget.matcher_label() else { return 0.0 };
        let target = step.target_phrase.trim();
        if target.is_empty() {
            return 0.0;
        }
        let target_tokens = self.tokens_or_raw(target);
        // Exact match against any label field wins outright.
        let target_norm = target.to_lowercase();
        for candidate in widget.label_chain() {
            if candidate.trim().to_lowercase() == target_norm {
                return 1.0;
            }
            if self.tokens_or_raw(candidate) == target_tokens {
                return 1.0;
            }
        }
        let label_tokens = self.tokens_or_raw(label);
        let base = dice(&target_tokens, &label_tokens);
        match self.mode {
            NearbyMode::LabelOnly => base,
            NearbyMode::WithNearby => {
                if widget.nearby.is_empty() {
                    base
                } else {
                    let mut combined = label_tokens;
                    for text in &widget.nearby {
                        combined.extend(self.pre.preprocess(text));
                    }
                    base.max(dice(&target_tokens, &combined))
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Matching and action selection
// ---------------------------------------------------------------------------

/// Scores a step against every labeled widget of the page and returns the
/// argmax when it reaches the threshold. Ties keep the first widget in page
/// order.
pub fn match_step(
    step: &OperationStep,
    page: &GuiPage,
    scorer: &dyn StepScorer,
    threshold: f64,
) -> MatchOutcome {
    let mut best: Option<MatchResult> = None;
    for (index, widget) in page.labeled() {
        let score = scorer.score(step, widget);
        let better = match &best {
            Some(current) => score > current.score,
            None => true,
        };
        if better {
            best = Some(MatchResult {
                widget_index: index,
                score,
                widget_text_used: widget.matcher_label().unwrap_or_default().to_string(),
            });
        }
    }
    match best {
        Some(result) if result.score >= threshold => MatchOutcome::Match(result),
        Some(result) => MatchOutcome::NoMatch { best_score: result.score },
        None => MatchOutcome::NoMatch { best_score: 0.0 },
    }
}

/// Turns a matched step into an executable intent. The widget's own action
/// is the default; a verb that demands long-press, scroll or input is
/// honored only when the widget supports it.
pub fn step_to_action(
    step: &OperationStep,
    matched: &MatchResult,
    page: &GuiPage,
) -> Result<ActionIntent, MatcherError> {
    let widget = &page.widgets[matched.widget_index];
    let label = widget.display_label().unwrap_or_default().to_string();
    let kind = match demanded_kind(step) {
        Some(demanded) => {
            if widget.supports(demanded) {
                demanded
            } else {
                return Err(MatcherError::ActionUnsupported { widget: label, demanded });
            }
        }
        None => match widget.action {
            ActionKind::None => {
                return Err(MatcherError::ActionUnsupported {
                    widget: label,
                    demanded: ActionKind::Click,
                })
            }
            action => action,
        },
    };
    let payload = if kind == ActionKind::Input { step.payload.clone() } else { None };
    Ok(ActionIntent {
        step_text: step.raw.clone(),
        widget_index: matched.widget_index,
        widget_key: memorizer::widget_key(widget),
        action: kind,
        payload,
        bounds: widget.bounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::{Bounds, GuiPage, Widget};

    fn button(label: &str, index: usize) -> Widget {
        Widget::builder("Button", Bounds::new(0, index as i32 * 50, 100, index as i32 * 50 + 40).unwrap())
            .text(label)
            .capability(ActionKind::Click)
            .node_index(index)
            .build()
    }

    fn page_of(labels: &[&str]) -> GuiPage {
        let widgets = labels.iter().enumerate().map(|(i, l)| button(l, i)).collect();
        GuiPage::assemble("Test", widgets, 800)
    }

    #[test]
    fn splits_on_and_comma_period() {
        let steps = split_answer("Click the add button and input 100 into income.").unwrap();
        let raws: Vec<&str> = steps.iter().map(|s| s.raw.as_str()).collect();
        assert_eq!(raws, vec!["Click the add button", "input 100 into income"]);
    }

    #[test]
    fn single_step_passes_through() {
        let steps = split_answer("click save").unwrap();
        assert_eq!(steps.len(), 1);
        assert_eq!(steps[0].raw, "click save");
    }

    #[test]
    fn numeric_periods_do_not_split() {
        let steps = split_answer("Enter 3.5, then press OK").unwrap();
        let raws: Vec<&str> = steps.iter().map(|s| s.raw.as_str()).collect();
        assert_eq!(raws, vec!["Enter 3.5", "then press OK"]);
    }

    #[test]
    fn quoted_delimiters_do_not_split() {
        let steps = split_answer(r#"input "milk, eggs and ham" into Body"#).unwrap();
        assert_eq!(steps.len(), 1);
    }

    #[test]
    fn answer_of_only_delimiters_is_no_steps() {
        assert!(matches!(split_answer(", . ,"), Err(MatcherError::NoSteps)));
    }

    #[test]
    fn sand_is_not_and() {
        let steps = split_answer("click sandbox").unwrap();
        assert_eq!(steps[0].raw, "click sandbox");
    }

    #[test]
    fn resplitting_joined_steps_is_idempotent() {
        let steps = split_answer("click a1 and press b2, choose c3.").unwrap();
        let joined = steps.iter().map(|s| s.raw.clone()).collect::<Vec<_>>().join(", ");
        let again = split_answer(&joined).unwrap();
        assert_eq!(steps, again);
    }

    #[test]
    fn quoted_payload_extracts() {
        let step = extract_payload(OperationStep::from_raw(r#"input "2023-01-05" into date"#));
        assert_eq!(step.payload.as_deref(), Some("2023-01-05"));
        assert_eq!(step.target_phrase, "date");
        assert_eq!(step.verb.as_deref(), Some("input"));
    }

    #[test]
    fn click_step_has_no_payload() {
        let step = extract_payload(OperationStep::from_raw("click save"));
        assert_eq!(step.payload, None);
        assert_eq!(step.verb.as_deref(), Some("click"));
        assert_eq!(step.target_phrase, "save");
    }

    #[test]
    fn unquoted_payload_runs_to_preposition() {
        let step = extract_payload(OperationStep::from_raw("enter 100 into income amount"));
        assert_eq!(step.payload.as_deref(), Some("100"));
        assert_eq!(step.target_phrase, "income amount");
    }

    #[test]
    fn trailing_connector_is_stripped_from_target() {
        let step = extract_payload(OperationStep::from_raw(r#"set Amount to "100""#));
        assert_eq!(step.payload.as_deref(), Some("100"));
        assert_eq!(step.target_phrase, "Amount");
    }

    #[test]
    fn long_press_verb_is_recognized() {
        let step = extract_payload(OperationStep::from_raw("long press Meter A"));
        assert_eq!(step.verb.as_deref(), Some("long press"));
        assert_eq!(step.target_phrase, "Meter A");
        assert_eq!(demanded_kind(&step), Some(ActionKind::LongPress));
    }

    #[test]
    fn exact_match_scores_one() {
        let scorer = LexicalScorer::default();
        let step = extract_payload(OperationStep::from_raw("click add"));
        let widget = button("add", 0);
        assert_eq!(scorer.score(&step, &widget), 1.0);
    }

    #[test]
    fn best_overlap_wins() {
        // Hand-computed Dice scores for target "add account":
        //   add_account -> tokens [add, account], exact -> 1.0
        //   delete      -> 0.0
        //   Income      -> 0.0
        let scorer = LexicalScorer::default();
        let page = page_of(&["add_account", "delete", "Income"]);
        let step = extract_payload(OperationStep::from_raw("click add account"));
        let outcome = match_step(&step, &page, &scorer, DEFAULT_THRESHOLD);
        let m = outcome.as_match().expect("matched");
        assert_eq!(page.widgets[m.widget_index].text.as_deref(), Some("add_account"));
        assert_eq!(m.score, 1.0);
    }

    #[test]
    fn disjoint_tokens_score_below_threshold() {
        let scorer = LexicalScorer::default();
        let page = page_of(&["save", "cancel", "delete"]);
        let step = extract_payload(OperationStep::from_raw("click frobnicate"));
        for (_, w) in page.labeled() {
            assert!(scorer.score(&step, w) < 0.5);
        }
        assert!(matches!(
            match_step(&step, &page, &scorer, DEFAULT_THRESHOLD),
            MatchOutcome::NoMatch { .. }
        ));
    }

    #[test]
    fn all_below_threshold_is_no_match() {
        let scorer = LexicalScorer::default();
        let page = page_of(&["alpha", "beta"]);
        let step = extract_payload(OperationStep::from_raw("click gamma"));
        assert!(matches!(
            match_step(&step, &page, &scorer, DEFAULT_THRESHOLD),
            MatchOutcome::NoMatch { .. }
        ));
    }

    #[test]
    fn tie_keeps_first_in_page_order() {
        let scorer = LexicalScorer::default();
        let page = page_of(&["save", "save"]);
        let step = extract_payload(OperationStep::from_raw("click save"));
        let m = match_step(&step, &page, &scorer, DEFAULT_THRESHOLD);
        assert_eq!(m.as_match().unwrap().widget_index, 0);
    }

    #[test]
    fn match_is_deterministic() {
        let scorer = LexicalScorer::default();
        let page = page_of(&["add account", "add", "account list"]);
        let step = extract_payload(OperationStep::from_raw("tap the add account button"));
        let a = match_step(&step, &page, &scorer, DEFAULT_THRESHOLD);
        let b = match_step(&step, &page, &scorer, DEFAULT_THRESHOLD);
        assert_eq!(a, b);
    }

    #[test]
    fn score_is_reorder_invariant() {
        let scorer = LexicalScorer::default();
        let widget = button("income amount field", 0);
        let a = extract_payload(OperationStep::from_raw("tap income amount field"));
        let b = extract_payload(OperationStep::from_raw("tap field amount income"));
        assert_eq!(scorer.score(&a, &widget), scorer.score(&b, &widget));
    }

    #[test]
    fn click_intent_from_clickable_button() {
        let page = page_of(&["add"]);
        let step = extract_payload(OperationStep::from_raw("click add"));
        let m = match_step(&step, &page, &LexicalScorer::default(), 0.5);
        let intent = step_to_action(&step, m.as_match().unwrap(), &page).unwrap();
        assert_eq!(intent.action, ActionKind::Click);
        assert_eq!(intent.payload, None);
    }

    #[test]
    fn input_intent_carries_payload() {
        let widgets = vec![Widget::builder("EditText", Bounds::new(0, 0, 100, 40).unwrap())
            .hint("Amount")
            .resource_id("income_amount")
            .capability(ActionKind::Input)
            .capability(ActionKind::Click)
            .build()];
        let page = GuiPage::assemble("Test", widgets, 800);
        let step = extract_payload(OperationStep::from_raw("enter 100 into Amount"));
        let m = match_step(&step, &page, &LexicalScorer::default(), 0.5);
        let intent = step_to_action(&step, m.as_match().unwrap(), &page).unwrap();
        assert_eq!(intent.action, ActionKind::Input);
        assert_eq!(intent.payload.as_deref(), Some("100"));
    }

    #[test]
    fn unsupported_action_is_rejected() {
        let widgets = vec![Widget::builder("TextView", Bounds::new(0, 0, 100, 40).unwrap())
            .text("item")
            .build()];
        let page = GuiPage::assemble("Test", widgets, 800);
        let step = extract_payload(OperationStep::from_raw("long press item"));
        let m = match_step(&step, &page, &LexicalScorer::default(), 0.5);
        let err = step_to_action(&step, m.as_match().unwrap(), &page);
        assert!(matches!(err, Err(MatcherError::ActionUnsupported { .. })));
    }

    #[test]
    fn argmax_agrees_with_exhaustive_scoring() {
        // Independent oracle: a plain double loop over all widgets using a
        // locally re-implemented Dice, compared against match_step.
        fn naive_dice(a: &[String], b: &[String]) -> f64 {
            if a.is_empty() || b.is_empty() {
                return 0.0;
            }
            let mut b_pool: Vec<&String> = b.iter().collect();
            let mut common = 0;
            for t in a {
                if let Some(pos) = b_pool.iter().position(|x| *x == t) {
                    b_pool.remove(pos);
                    common += 1;
                }
            }
            2.0 * common as f64 / (a.len() + b.len()) as f64
        }
        let pre = crate::prompter::Preprocessor::default();
        let scorer = LexicalScorer::new(NearbyMode::LabelOnly);
        let vocabulary = ["add", "save note", "income", "profile", "search box", "go", "start import", "meter", "archive", "back"];
        let mut rng = crate::rng::SplitMix64::new(99);
        for _ in 0..50 {
            let n = 1 + rng.below(10) as usize;
            let labels: Vec<&str> = (0..n).map(|_| *rng.choose(&vocabulary)).collect();
            let page = page_of(&labels);
            let target = *rng.choose(&vocabulary);
            let step = extract_payload(OperationStep::from_raw(format!("click {target}")));
            // exhaustive argmax with first-wins ties
            let mut best_idx = None;
            let mut best_score = -1.0;
            for (i, w) in page.widgets.iter().enumerate() {
                let lt = {
                    let toks = pre.preprocess(w.text.as_deref().unwrap());
                    if toks.is_empty() { vec![w.text.clone().unwrap().to_lowercase()] } else { toks }
                };
                let tt = {
                    let toks = pre.preprocess(&step.target_phrase);
                    if toks.is_empty() { vec![step.target_phrase.to_lowercase()] } else { toks }
                };
                let mut s = naive_dice(&tt, &lt);
                if w.text.as_deref().unwrap().to_lowercase() == step.target_phrase.to_lowercase() {
                    s = 1.0;
                }
                if s > best_score {
                    best_score = s;
                    best_idx = Some(i);
                }
            }
            let outcome = match_step(&step, &page, &scorer, DEFAULT_THRESHOLD);
            match outcome {
                MatchOutcome::Match(m) => {
                    assert_eq!(Some(m.widget_index), best_idx);
                    assert!((m.score - best_score).abs() < 1e-12);
                }
                MatchOutcome::NoMatch { best_score: s } => {
                    assert!(best_score < DEFAULT_THRESHOLD);
                    assert!((s - best_score).abs() < 1e-12);
                }
            }
        }
    }
}
