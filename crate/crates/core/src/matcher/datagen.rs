//! Heuristic training/eval data generation and matcher evaluation.
//!
//! For every interactive labeled widget we instantiate operation-description
//! templates with the widget's label (three positives per widget from
//! distinct templates), and mine hard negatives: the highest-scoring other
//! widgets on the same page. The shipped template set has 31 entries across
//! the click/tap/press/select, input/enter/type/fill, long-press/hold and
//! scroll/swipe verb families; `--templates` swaps in another file with the
//! same format.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    demanded_kind, extract_payload, match_step, MatchOutcome, MatcherError, OperationStep,
    StepScorer,
};
use crate::hierarchy::{ActionKind, Bounds, GuiPage, Widget};
use crate::rng::SplitMix64;

const EMBEDDED_TEMPLATES: &str = include_str!("../../data/operation_templates.txt");

/// Payload values rotated into `{value}` slots.
const PAYLOAD_VALUES: &[&str] = &["100", "42", "2023-01-05", "hello"];

/// Verb family of a template, deciding which widget capability it exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionFamily {
    Click,
    Input,
    LongPress,
    Scroll,
}

impl ActionFamily {
    pub fn action_kind(&self) -> ActionKind {
        match self {
            ActionFamily::Click => ActionKind::Click,
            ActionFamily::Input => ActionKind::Input,
            ActionFamily::LongPress => ActionKind::LongPress,
            ActionFamily::Scroll => ActionKind::Scroll,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpTemplate {
    pub text: String,
    pub family: ActionFamily,
    /// True when the instantiated target phrase is exactly the label.
    pub exact_label: bool,
}

impl OpTemplate {
    fn classify(text: &str) -> Result<OpTemplate, MatcherError> {
        const PROBE_LABEL: &str = "zzqprobe";
        let probe = text.replace("{label}", PROBE_LABEL).replace("{value}", "7");
        let step = extract_payload(OperationStep::from_raw(probe));
        let family = match demanded_kind(&step) {
            Some(ActionKind::Click) => ActionFamily::Click,
            Some(ActionKind::Input) => ActionFamily::Input,
            Some(ActionKind::LongPress) => ActionFamily::LongPress,
            Some(ActionKind::Scroll) => ActionFamily::Scroll,
            _ => {
                return Err(MatcherError::InvalidTemplate(format!(
                    "cannot derive a verb family from {text:?}"
                )))
            }
        };
        Ok(OpTemplate {
            text: text.to_string(),
            family,
            exact_label: step.target_phrase == PROBE_LABEL,
        })
    }

    pub fn instantiate(&self, label: &str, value: &str) -> String {
        self.text.replace("{label}", label).replace("{value}", value)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet {
    pub templates: Vec<OpTemplate>,
}

impl TemplateSet {
    /// The 31-entry set shipped with the repo.
    pub fn embedded() -> Self {
        Self::parse(EMBEDDED_TEMPLATES).expect("embedded templates parse")
    }

    pub fn parse(text: &str) -> Result<Self, MatcherError> {
        let templates = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(OpTemplate::classify)
            .collect::<Result<Vec<_>, _>>()?;
        if templates.is_empty() {
            return Err(MatcherError::InvalidTemplate("template set is empty".into()));
        }
        Ok(TemplateSet { templates })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, MatcherError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    /// Templates whose verb family the widget can perform.
    pub fn applicable<'a>(&'a self, widget: &Widget) -> Vec<&'a OpTemplate> {
        self.templates
            .iter()
            .filter(|t| widget.supports(t.family.action_kind()))
            .collect()
    }

    /// Deterministic seed-fixed split into (training, held-out) subsets.
    pub fn split(&self, held_out: usize, rng: &mut SplitMix64) -> (TemplateSet, TemplateSet) {
        let mut indices: Vec<usize> = (0..self.templates.len()).collect();
        rng.shuffle(&mut indices);
        let held: Vec<OpTemplate> = indices
            .iter()
            .take(held_out.min(self.templates.len()))
            .map(|&i| self.templates[i].clone())
            .collect();
        let held_texts: Vec<&str> = held.iter().map(|t| t.text.as_str()).collect();
        let train: Vec<OpTemplate> = self
            .templates
            .iter()
            .filter(|t| !held_texts.contains(&t.text.as_str()))
            .cloned()
            .collect();
        (TemplateSet { templates: train }, TemplateSet { templates: held })
    }
}

// ---------------------------------------------------------------------------
// Training pairs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairLabel {
    Positive,
    Negative,
}

/// One (operation step, widget text) training instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub step_text: String,
    pub widget_text: String,
    pub label: PairLabel,
}

/// Three positives per interactive labeled widget from distinct templates,
/// plus up to `negatives_per_positive` hard negatives mined from the
/// highest-scoring other widgets on the same page.
pub fn generate_training_data(
    pages: &[GuiPage],
    templates: &TemplateSet,
    negatives_per_positive: usize,
    rng: &mut SplitMix64,
    scorer: &dyn StepScorer,
) -> Result<Vec<LabeledPair>, MatcherError> {
    if templates.is_empty() {
        return Err(MatcherError::InvalidTemplate("template set is empty".into()));
    }
    let mut pairs = Vec::new();
    let mut any_interactive = false;
    for page in pages {
        for (index, widget) in page.labeled() {
            if !widget.is_actionable() {
                continue;
            }
            let applicable = templates.applicable(widget);
            if applicable.is_empty() {
                continue;
            }
            any_interactive = true;
            let label = widget.display_label().unwrap_or_default().to_string();
            let own_text = widget
                .matcher_label()
                .unwrap_or(label.as_str())
                .to_string();
            for template_index in rng.sample_indices(applicable.len(), 3) {
                let template = applicable[template_index];
                let value = rng.choose(PAYLOAD_VALUES);
                let step_text = template.instantiate(&label, value);
                pairs.push(LabeledPair {
                    step_text: step_text.clone(),
                    widget_text: own_text.clone(),
                    label: PairLabel::Positive,
                });
                let step = extract_payload(OperationStep::from_raw(step_text.clone()));
                let mut others: Vec<(f64, usize)> = page
                    .labeled()
                    .filter(|(other, w)| *other != index && w.matcher_label().is_some())
                    .map(|(other, w)| (scorer.score(&step, w), other))
                    .collect();
                others.sort_by(|a, b| {
                    b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1))
                });
                for (_, other) in others.into_iter().take(negatives_per_positive) {
                    pairs.push(LabeledPair {
                        step_text: step_text.clone(),
                        widget_text: page.widgets[other]
                            .matcher_label()
                            .unwrap_or_default()
                            .to_string(),
                        label: PairLabel::Negative,
                    });
                }
            }
        }
    }
    if !any_interactive {
        return Err(MatcherError::NoInteractiveWidgets);
    }
    Ok(pairs)
}

pub fn write_pairs_jsonl<W: Write>(pairs: &[LabeledPair], mut out: W) -> std::io::Result<()> {
    for pair in pairs {
        serde_json::to_writer(&mut out, pair)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_pairs_jsonl<R: BufRead>(input: R) -> Result<Vec<LabeledPair>, MatcherError> {
    let mut pairs = Vec::new();
    for line in input.lines() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let pair: LabeledPair = serde_json::from_str(trimmed)
            .map_err(|e| MatcherError::InvalidTemplate(format!("bad dataset line: {e}")))?;
        pairs.push(pair);
    }
    Ok(pairs)
}

// ---------------------------------------------------------------------------
// Matcher evaluation
// ---------------------------------------------------------------------------

/// One evaluation case: a step matched against a page, with the expected
/// widget (`None` expects NoMatch).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCase {
    pub step_text: String,
    pub page_index: usize,
    pub gold_index: Option<usize>,
    pub exact_label: bool,
}

#[derive(Debug, Clone, Default)]
pub struct EvalSet {
    pub pages: Vec<GuiPage>,
    pub cases: Vec<EvalCase>,
}

/// Instantiates every applicable held-out template for every interactive
/// labeled widget, once with the display label and once with the resource id
/// when the two differ.
pub fn generate_eval_cases(
    pages: Vec<GuiPage>,
    held_out: &TemplateSet,
    rng: &mut SplitMix64,
) -> EvalSet {
    let mut cases = Vec::new();
    for (page_index, page) in pages.iter().enumerate() {
        for (widget_index, widget) in page.labeled() {
            if !widget.is_actionable() {
                continue;
            }
            let display = widget.display_label().unwrap_or_default().to_string();
            let mut variants = vec![display.clone()];
            if let Some(id) = widget.resource_id.as_deref() {
                if !id.is_empty() && id != display {
                    variants.push(id.to_string());
                }
            }
            for template in held_out.applicable(widget) {
                for variant in &variants {
                    let value = rng.choose(PAYLOAD_VALUES);
                    cases.push(EvalCase {
                        step_text: template.instantiate(variant, value),
                        page_index,
                        gold_index: Some(widget_index),
                        exact_label: template.exact_label,
                    });
                }
            }
        }
    }
    EvalSet { pages, cases }
}

/// Steps built from vocabulary disjoint from every fixture label; all of
/// them must come out as NoMatch.
pub fn generate_adversarial_cases(pages: &[GuiPage], count: usize, rng: &mut SplitMix64) -> Vec<EvalCase> {
    const NONSENSE: &[&str] = &[
        "frobnicate the quux",
        "defenestrate zorbly gadget",
        "click the xyzzy plugh",
        "press wibble wobble",
        "tap glorp snarf",
    ];
    (0..count)
        .map(|_| EvalCase {
            step_text: (*rng.choose(NONSENSE)).to_string(),
            page_index: rng.below(pages.len() as u64) as usize,
            gold_index: None,
            exact_label: false,
        })
        .collect()
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MatchEvalReport {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub exact_label_total: usize,
    pub exact_label_correct: usize,
    pub exact_label_accuracy: f64,
    /// NoMatch verdicts emitted / how many of them were expected.
    pub no_match_emitted: usize,
    pub no_match_correct: usize,
    pub no_match_precision: f64,
    pub expected_no_match: usize,
}

/// Top-1 accuracy of `match_step` against gold widgets, plus NoMatch
/// precision.
pub fn evaluate_matcher(
    set: &EvalSet,
    scorer: &dyn StepScorer,
    threshold: f64,
) -> Result<MatchEvalReport, MatcherError> {
    if set.cases.is_empty() {
        return Err(MatcherError::EmptyDataset);
    }
    let mut report = MatchEvalReport::default();
    for case in &set.cases {
        let page = &set.pages[case.page_index];
        let steps = super::split_answer(&case.step_text)?;
        let step = extract_payload(steps.into_iter().next().expect("non-empty split"));
        let outcome = match_step(&step, page, scorer, threshold);
        report.total += 1;
        if case.exact_label {
            report.exact_label_total += 1;
        }
        if case.gold_index.is_none() {
            report.expected_no_match += 1;
        }
        let correct = match (&outcome, case.gold_index) {
            (MatchOutcome::Match(m), Some(gold)) => m.widget_index == gold,
            (MatchOutcome::NoMatch { .. }, None) => true,
            _ => false,
        };
        if let MatchOutcome::NoMatch { .. } = outcome {
            report.no_match_emitted += 1;
            if case.gold_index.is_none() {
                report.no_match_correct += 1;
            }
        }
        if correct {
            report.correct += 1;
            if case.exact_label {
                report.exact_label_correct += 1;
            }
        }
    }
    report.accuracy = report.correct as f64 / report.total as f64;
    report.exact_label_accuracy = if report.exact_label_total == 0 {
        1.0
    } else {
        report.exact_label_correct as f64 / report.exact_label_total as f64
    };
    report.no_match_precision = if report.no_match_emitted == 0 {
        1.0
    } else {
        report.no_match_correct as f64 / report.no_match_emitted as f64
    };
    Ok(report)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PairEvalReport {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
}

/// Threshold classification accuracy of the scorer over labeled pairs.
pub fn evaluate_pairs(
    pairs: &[LabeledPair],
    scorer: &dyn StepScorer,
    threshold: f64,
) -> Result<PairEvalReport, MatcherError> {
    if pairs.is_empty() {
        return Err(MatcherError::EmptyDataset);
    }
    let mut correct = 0;
    for pair in pairs {
        let step = extract_payload(OperationStep::from_raw(pair.step_text.clone()));
        let widget = Widget::builder("Button", Bounds::new(0, 0, 1, 1).unwrap())
            .text(pair.widget_text.clone())
            .capability(ActionKind::Click)
            .build();
        let predicted_positive = scorer.score(&step, &widget) >= threshold;
        if predicted_positive == (pair.label == PairLabel::Positive) {
            correct += 1;
        }
    }
    Ok(PairEvalReport {
        total: pairs.len(),
        correct,
        accuracy: correct as f64 / pairs.len() as f64,
    })
}
