//! Text preprocessing and prompt rendering.
//!
//! Six linguistic patterns cover the static context (app, page, widgets),
//! the dynamic context (visit counts) and the operation/feedback questions.
//! Three prompt kinds are composed from them: the start prompt (once per
//! session), the routine test prompt and the feedback prompt after a failed
//! match. Rendering uses raw widget labels; `preprocess` is consumed by the
//! matcher's scorer.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;
use thiserror::Error;

use crate::hierarchy::{AppInfo, GuiPage, NEARBY_SEPARATOR};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("the start prompt was already rendered for this session")]
    AlreadyStarted,
    #[error("invalid prompt templates: {0}")]
    InvalidTemplates(String),
}

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");

/// Splits on whitespace, punctuation, underscores, camel-case and
/// letter/digit boundaries, lowercasing every token.
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if !c.is_alphanumeric() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            continue;
        }
        if !current.is_empty() {
            let prev = chars[i - 1];
            let acronym_end = prev.is_uppercase()
                && c.is_uppercase()
                && chars.get(i + 1).map(|n| n.is_lowercase()).unwrap_or(false);
            let boundary = (prev.is_lowercase() && c.is_uppercase())
                || (prev.is_alphabetic() && c.is_numeric())
                || (prev.is_numeric() && c.is_alphabetic())
                || acronym_end;
            if boundary {
                tokens.push(std::mem::take(&mut current));
            }
        }
        current.extend(c.to_lowercase());
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Tokenizer plus a content-word filter: stopwords and pure-number tokens
/// are dropped. The stopword list is swappable.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    stopwords: HashSet<String>,
}

impl Default for Preprocessor {
    fn default() -> Self {
        Preprocessor::with_stopwords(
            DEFAULT_STOPWORDS
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_string),
        )
    }
}

impl Preprocessor {
    pub fn with_stopwords(words: impl IntoIterator<Item = String>) -> Self {
        Preprocessor { stopwords: words.into_iter().collect() }
    }

    pub fn from_stopword_file(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Preprocessor::with_stopwords(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_string),
        ))
    }

    pub fn preprocess(&self, text: &str) -> Vec<String> {
        tokenize(text)
            .into_iter()
            .filter(|t| !self.stopwords.contains(t))
            .filter(|t| !t.chars().all(|c| c.is_ascii_digit()))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Contexts
// ---------------------------------------------------------------------------

/// Per-widget rendering data for pattern 3.
#[derive(Debug, Clone, PartialEq)]
pub struct WidgetDetail {
    pub label: String,
    pub category: String,
    pub action_word: String,
    pub nearby: Vec<String>,
}

/// App, page and widget description extracted from the current state.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticContext {
    pub app: AppInfo,
    pub activity_name: String,
    /// Display labels of every labeled widget, in page order.
    pub widget_labels: Vec<String>,
    pub upper_labels: Vec<String>,
    pub lower_labels: Vec<String>,
    /// Labeled, actionable widgets only.
    pub widget_details: Vec<WidgetDetail>,
}

impl StaticContext {
    pub fn from_page(app: &AppInfo, page: &GuiPage) -> Self {
        let label_at = |i: usize| {
            page.widgets[i]
                .display_label()
                .map(str::to_string)
        };
        let widget_labels: Vec<String> =
            page.labeled().filter_map(|(_, w)| w.display_label().map(str::to_string)).collect();
        let upper_labels = page.upper.iter().filter_map(|&i| label_at(i)).collect();
        let lower_labels = page.lower.iter().filter_map(|&i| label_at(i)).collect();
        let widget_details = page
            .labeled()
            .filter(|(_, w)| w.is_actionable())
            .map(|(_, w)| WidgetDetail {
                label: w.display_label().unwrap_or_default().to_string(),
                category: w.category.clone(),
                action_word: w.action.word().to_string(),
                nearby: w.nearby.clone(),
            })
            .collect();
        StaticContext {
            app: app.clone(),
            activity_name: page.activity_name.clone(),
            widget_labels,
            upper_labels,
            lower_labels,
            widget_details,
        }
    }
}

/// Visit-count history rendered into the test prompt.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DynamicContext {
    /// (activity, count) in first-visit order.
    pub page_visits: Vec<(String, u64)>,
    /// (widget label, count) for tested widgets of the current page, in page
    /// order.
    pub current_page_widget_visits: Vec<(String, u64)>,
}

// ---------------------------------------------------------------------------
// Prompts
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Start,
    Test,
    Feedback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub kind: PromptKind,
    pub text: String,
    /// Set when widget details were dropped to respect the length budget.
    pub truncated: bool,
}

/// The linguistic patterns. Every string is a template with `{slot}`
/// placeholders; the defaults are embedded and a JSON file can override them
/// for experimentation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptTemplates {
    pub app_pattern: String,
    pub page_pattern: String,
    pub widgets_header: String,
    pub widget_detail: String,
    pub nearby_suffix: String,
    pub visits_pages: String,
    pub visits_widgets: String,
    pub question: String,
    pub missing_widget: String,
    pub test_lead: String,
    pub feedback_lead: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            app_pattern: r#"We want to test "{app_name}" App. It has the following activities, including {activities}."#.into(),
            page_pattern: r#"The current page is "{activity}", it has {widgets}. The upper part of the app is "{upper}", the lower part of the app is "{lower}"."#.into(),
            widgets_header: "The widgets which can operation are {widgets}.".into(),
            widget_detail: r#""{label}" is {category} which can {action}"#.into(),
            nearby_suffix: r#" and its nearby widget is "{nearby}""#.into(),
            visits_pages: "We have tested {page_visits} with visit time.".into(),
            visits_widgets: "We have tested the {widget_visits} on the current page.".into(),
            question: "What operation is required?".into(),
            missing_widget: r#"There is no "{label}" on the current page, please reselect."#.into(),
            test_lead: "We successfully did the above operation.".into(),
            feedback_lead: "Sorry,".into(),
        }
    }
}

impl PromptTemplates {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| PromptError::InvalidTemplates(format!("{}: {e}", path.as_ref().display())))?;
        serde_json::from_str(&text).map_err(|e| PromptError::InvalidTemplates(e.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct PrompterConfig {
    /// Maximum rendered prompt length in characters.
    pub max_chars: usize,
    /// Maximum widget-detail entries before truncation kicks in.
    pub widget_cap: usize,
}

impl Default for PrompterConfig {
    fn default() -> Self {
        PrompterConfig { max_chars: 6000, widget_cap: 30 }
    }
}

/// Renders the three prompt kinds and enforces the once-per-session rule for
/// the start prompt.
#[derive(Debug, Clone)]
pub struct Prompter {
    templates: PromptTemplates,
    config: PrompterConfig,
    started: bool,
}

fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in slots {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}

fn quoted_list(items: &[String]) -> String {
    items
        .iter()
        .map(|s| format!("\"{s}\""))
        .collect::<Vec<_>>()
        .join(", ")
}

fn visit_list(items: &[(String, u64)]) -> String {
    items
        .iter()
        .map(|(label, count)| format!("\"{label}: {count}\""))
        .collect::<Vec<_>>()
        .join(", ")
}

impl Prompter {
    pub fn new(templates: PromptTemplates, config: PrompterConfig) -> Self {
        Prompter { templates, config, started: false }
    }

    pub fn started(&self) -> bool {
        self.started
    }

    /// Pattern 1 + 2 + 3 + question. Errors once a start prompt has been
    /// rendered for this session.
    pub fn render_start_prompt(&mut self, ctx: &StaticContext) -> Result<Prompt, PromptError> {
        if self.started {
            return Err(PromptError::AlreadyStarted);
        }
        self.started = true;
        let app_sentence = fill(
            &self.templates.app_pattern,
            &[
                ("app_name", &ctx.app.app_name),
                ("activities", &quoted_list(&ctx.app.activities)),
            ],
        );
        Ok(self.compose(PromptKind::Start, vec![app_sentence], ctx, true))
    }

    /// Success lead + pattern 4 + 2 + 3 + question.
    pub fn render_test_prompt(&self, dynamic: &DynamicContext, ctx: &StaticContext) -> Prompt {
        let mut sentences = vec![
            self.templates.test_lead.clone(),
            fill(
                &self.templates.visits_pages,
                &[("page_visits", &visit_list(&dynamic.page_visits))],
            ),
        ];
        if !dynamic.current_page_widget_visits.is_empty() {
            sentences.push(fill(
                &self.templates.visits_widgets,
                &[("widget_visits", &visit_list(&dynamic.current_page_widget_visits))],
            ));
        }
        self.compose(PromptKind::Test, sentences, ctx, true)
    }

    /// "Sorry," + pattern 6 (naming the unmatched label verbatim) + 3 +
    /// question.
    pub fn render_feedback_prompt(&self, missing_label: &str, ctx: &StaticContext) -> Prompt {
        let sentences = vec![
            self.templates.feedback_lead.clone(),
            fill(&self.templates.missing_widget, &[("label", missing_label)]),
        ];
        self.compose(PromptKind::Feedback, sentences, ctx, false)
    }

    fn compose(
        &self,
        kind: PromptKind,
        lead: Vec<String>,
        ctx: &StaticContext,
        include_page_pattern: bool,
    ) -> Prompt {
        let cap = self.config.widget_cap.min(ctx.widget_details.len());
        let mut keep = cap;
        loop {
            let text = self.compose_with(&lead, ctx, include_page_pattern, keep);
            if text.len() <= self.config.max_chars || keep <= 1 {
                return Prompt {
                    kind,
                    text,
                    truncated: keep < ctx.widget_details.len(),
                };
            }
            keep -= 1;
        }
    }

    fn compose_with(
        &self,
        lead: &[String],
        ctx: &StaticContext,
        include_page_pattern: bool,
        detail_count: usize,
    ) -> String {
        let details = &ctx.widget_details[..detail_count.min(ctx.widget_details.len())];
        let mut sentences: Vec<String> = lead.to_vec();
        if include_page_pattern {
            sentences.push(fill(
                &self.templates.page_pattern,
                &[
                    ("activity", &ctx.activity_name),
                    ("widgets", &quoted_list(&ctx.widget_labels)),
                    ("upper", &ctx.upper_labels.join(", ")),
                    ("lower", &ctx.lower_labels.join(", ")),
                ],
            ));
        }
        let detail_labels: Vec<String> = details.iter().map(|d| d.label.clone()).collect();
        let mut widget_sentence = fill(
            &self.templates.widgets_header,
            &[("widgets", &quoted_list(&detail_labels))],
        );
        if !details.is_empty() {
            let rendered: Vec<String> = details
                .iter()
                .map(|d| {
                    let mut s = fill(
                        &self.templates.widget_detail,
                        &[
                            ("label", d.label.as_str()),
                            ("category", d.category.as_str()),
                            ("action", d.action_word.as_str()),
                        ],
                    );
                    if !d.nearby.is_empty() {
                        s.push_str(&fill(
                            &self.templates.nearby_suffix,
                            &[("nearby", &d.nearby.join(NEARBY_SEPARATOR))],
                        ));
                    }
                    s
                })
                .collect();
            widget_sentence.push(' ');
            widget_sentence.push_str(&rendered.join(", "));
            widget_sentence.push('.');
        }
        sentences.push(widget_sentence);
        sentences.push(self.templates.question.clone());
        sentences.join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::{ActionKind, Bounds, GuiPage, Widget};

    fn pre() -> Preprocessor {
        Preprocessor::default()
    }

    #[test]
    fn camel_case_splits() {
        assert_eq!(pre().preprocess("AddAccount"), vec!["add", "account"]);
    }

    #[test]
    fn empty_text_gives_no_tokens() {
        assert!(pre().preprocess("").is_empty());
    }

    #[test]
    fn underscores_split_and_numbers_drop() {
        assert_eq!(pre().preprocess("btn_income_2"), vec!["btn", "income"]);
    }

    #[test]
    fn stopwords_are_removed() {
        assert_eq!(
            pre().preprocess("press the add button"),
            vec!["press", "add", "button"]
        );
    }

    #[test]
    fn acronym_runs_split_before_trailing_lowercase() {
        assert_eq!(tokenize("HTTPServer"), vec!["http", "server"]);
    }

    fn tiny_ctx() -> StaticContext {
        let app = AppInfo::new("Tiny", vec!["Only".into()]).unwrap();
        let widgets = vec![
            Widget::builder("Button", Bounds::new(0, 0, 100, 40).unwrap())
                .text("Go")
                .capability(ActionKind::Click)
                .build(),
        ];
        let page = GuiPage::assemble("Only", widgets, 800);
        StaticContext::from_page(&app, &page)
    }

    #[test]
    fn every_prompt_ends_with_the_question() {
        let ctx = tiny_ctx();
        let mut prompter = Prompter::new(PromptTemplates::default(), PrompterConfig::default());
        let start = prompter.render_start_prompt(&ctx).unwrap();
        let test = prompter.render_test_prompt(
            &DynamicContext {
                page_visits: vec![("Only".into(), 1)],
                current_page_widget_visits: vec![],
            },
            &ctx,
        );
        let feedback = prompter.render_feedback_prompt("Input", &ctx);
        for p in [&start, &test, &feedback] {
            assert!(p.text.ends_with("What operation is required?"));
        }
    }

    #[test]
    fn start_prompt_renders_once() {
        let ctx = tiny_ctx();
        let mut prompter = Prompter::new(PromptTemplates::default(), PrompterConfig::default());
        prompter.render_start_prompt(&ctx).unwrap();
        assert!(matches!(
            prompter.render_start_prompt(&ctx),
            Err(PromptError::AlreadyStarted)
        ));
    }

    #[test]
    fn degenerate_page_still_renders_all_patterns() {
        let app = AppInfo::new("Solo", vec!["Lonely".into()]).unwrap();
        let page = GuiPage::assemble("Lonely", Vec::new(), 800);
        let ctx = StaticContext::from_page(&app, &page);
        let mut prompter = Prompter::new(PromptTemplates::default(), PrompterConfig::default());
        let p = prompter.render_start_prompt(&ctx).unwrap();
        assert!(p.text.starts_with("We want to test \"Solo\" App."));
        assert!(p.text.contains("The current page is \"Lonely\""));
        assert!(p.text.ends_with("What operation is required?"));
    }

    #[test]
    fn feedback_quotes_label_verbatim() {
        let ctx = tiny_ctx();
        let prompter = Prompter::new(PromptTemplates::default(), PrompterConfig::default());
        let p = prompter.render_feedback_prompt(r#"say "hi""#, &ctx);
        assert!(p.text.contains(r#"There is no "say "hi"" on the current page"#));
        assert!(p.text.starts_with("Sorry,"));
    }

    #[test]
    fn rendering_is_pure() {
        let ctx = tiny_ctx();
        let prompter = Prompter::new(PromptTemplates::default(), PrompterConfig::default());
        let dynamic = DynamicContext {
            page_visits: vec![("Only".into(), 3)],
            current_page_widget_visits: vec![("Go".into(), 2)],
        };
        let a = prompter.render_test_prompt(&dynamic, &ctx);
        let b = prompter.render_test_prompt(&dynamic, &ctx);
        assert_eq!(a, b);
    }

    #[test]
    fn widget_cap_truncates_details() {
        let app = AppInfo::new("Caps", vec!["Main".into()]).unwrap();
        let widgets: Vec<Widget> = (0..5)
            .map(|i| {
                Widget::builder("Button", Bounds::new(0, i * 50, 100, i * 50 + 40).unwrap())
                    .text(format!("Button{i}"))
                    .capability(ActionKind::Click)
                    .node_index(i as usize)
                    .build()
            })
            .collect();
        let page = GuiPage::assemble("Main", widgets, 800);
        let ctx = StaticContext::from_page(&app, &page);
        let prompter = Prompter::new(
            PromptTemplates::default(),
            PrompterConfig { max_chars: 6000, widget_cap: 2 },
        );
        let p = prompter.render_test_prompt(&DynamicContext::default(), &ctx);
        assert!(p.truncated);
        assert!(p.text.contains("\"Button0\" is Button"));
        assert!(!p.text.contains("\"Button2\" is Button"));
    }

    #[test]
    fn oversized_prompt_drops_details_never_cuts() {
        let app = AppInfo::new("Caps", vec!["Main".into()]).unwrap();
        let widgets: Vec<Widget> = (0..10)
            .map(|i| {
                Widget::builder("Button", Bounds::new(0, i * 50, 100, i * 50 + 40).unwrap())
                    .text(format!("VeryLongWidgetLabelNumber{i}"))
                    .capability(ActionKind::Click)
                    .node_index(i as usize)
                    .build()
            })
            .collect();
        let page = GuiPage::assemble("Main", widgets, 800);
        let ctx = StaticContext::from_page(&app, &page);
        let prompter = Prompter::new(
            PromptTemplates::default(),
            PrompterConfig { max_chars: 900, widget_cap: 30 },
        );
        let p = prompter.render_test_prompt(&DynamicContext::default(), &ctx);
        assert!(p.truncated);
        assert!(p.text.ends_with("What operation is required?"));
    }
}
