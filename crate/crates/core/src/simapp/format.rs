//! Parser for the simulated-app definition format.
//!
//! Line oriented; `#` comments and blank lines are skipped. Directives:
//!
//! ```text
//! app "Name"
//! screen <width> <height>
//! start <Activity>
//! validator <id> <non_empty|integer|decimal|date|regex> [pattern "<re>"] example "<value>"
//! activity <Name>
//!   widget <key> class <Class> [text "<t>"] [hint "<t>"] [desc "<t>"]
//!          [action <kind>[,<kind>...]] [validate <validator>]
//!          [nearby "<t>" ...] bounds [l,t][r,b]
//! transition <src> <widget> <action> -> <target> [requires <widget>:<validator> ...]
//! crash <activity>:<widget>:<action> "<message>"
//! crash seq <activity>:<widget>:<action> ... "<message>"
//! ```
//!
//! Every reference (start activity, transition endpoints, widget keys,
//! validator ids, crash triggers) is checked after parsing; violations
//! surface as `DefinitionInvalid` with the offending file and line.

use std::collections::BTreeMap;

use super::{
    CrashRule, SimApp, SimError, SimPage, SimWidget, TransitionRule, TriggerStep, ValidatorKind,
    ValidatorSpec,
};
use crate::hierarchy::{ActionKind, AppInfo, Bounds};

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Word(String),
    Quoted(String),
}

impl Token {
    fn as_str(&self) -> &str {
        match self {
            Token::Word(w) => w,
            Token::Quoted(q) => q,
        }
    }

    fn is_quoted(&self) -> bool {
        matches!(self, Token::Quoted(_))
    }
}

fn tokenize_line(line: &str) -> Result<Vec<Token>, String> {
    let mut tokens = Vec::new();
    let mut chars = line.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '"' {
            chars.next();
            let mut value = String::new();
            loop {
                match chars.next() {
                    Some('"') => break,
                    Some(ch) => value.push(ch),
                    None => return Err("unterminated quote".into()),
                }
            }
            tokens.push(Token::Quoted(value));
        } else {
            let mut word = String::new();
            while let Some(&ch) = chars.peek() {
                if ch.is_whitespace() {
                    break;
                }
                word.push(ch);
                chars.next();
            }
            tokens.push(Token::Word(word));
        }
    }
    Ok(tokens)
}

struct LineCtx<'a> {
    path: &'a str,
    line: usize,
}

impl LineCtx<'_> {
    fn err(&self, detail: impl Into<String>) -> SimError {
        SimError::DefinitionInvalid {
            path: self.path.to_string(),
            line: self.line,
            detail: detail.into(),
        }
    }
}

fn parse_action_list(ctx: &LineCtx, s: &str) -> Result<Vec<ActionKind>, SimError> {
    s.split(',')
        .map(|part| {
            ActionKind::parse(part)
                .filter(|k| *k != ActionKind::None)
                .ok_or_else(|| ctx.err(format!("unknown action kind {part:?}")))
        })
        .collect()
}

fn parse_trigger(ctx: &LineCtx, s: &str) -> Result<TriggerStep, SimError> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(ctx.err(format!("trigger {s:?} must be activity:widget:action")));
    }
    let action = ActionKind::parse(parts[2])
        .filter(|k| *k != ActionKind::None)
        .ok_or_else(|| ctx.err(format!("unknown action kind {:?}", parts[2])))?;
    Ok(TriggerStep {
        activity: parts[0].to_string(),
        widget_key: parts[1].to_string(),
        action,
    })
}

pub(super) fn parse(text: &str, source_name: &str) -> Result<SimApp, SimError> {
    let mut app_name: Option<String> = None;
    let mut screen: Option<(i32, i32)> = None;
    let mut start: Option<(String, usize)> = None;
    let mut pages: Vec<SimPage> = Vec::new();
    let mut page_lines: Vec<usize> = Vec::new();
    let mut transitions: Vec<(TransitionRule, usize)> = Vec::new();
    let mut crash_rules: Vec<(CrashRule, usize)> = Vec::new();
    let mut validators: BTreeMap<String, ValidatorSpec> = BTreeMap::new();

    for (line_no, raw_line) in text.lines().enumerate() {
        let ctx = LineCtx { path: source_name, line: line_no + 1 };
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens = tokenize_line(line).map_err(|e| ctx.err(e))?;
        let head = tokens[0].as_str();
        match head {
            "app" => {
                let name = tokens.get(1).ok_or_else(|| ctx.err("app needs a name"))?;
                app_name = Some(name.as_str().to_string());
            }
            "screen" => {
                let w = tokens
                    .get(1)
                    .and_then(|t| t.as_str().parse().ok())
                    .ok_or_else(|| ctx.err("screen needs <width> <height>"))?;
                let h = tokens
                    .get(2)
                    .and_then(|t| t.as_str().parse().ok())
                    .ok_or_else(|| ctx.err("screen needs <width> <height>"))?;
                screen = Some((w, h));
            }
            "start" => {
                let name = tokens.get(1).ok_or_else(|| ctx.err("start needs an activity"))?;
                start = Some((name.as_str().to_string(), ctx.line));
            }
            "validator" => {
                let id = tokens
                    .get(1)
                    .ok_or_else(|| ctx.err("validator needs an id"))?
                    .as_str()
                    .to_string();
                let kind = match tokens.get(2).map(|t| t.as_str()) {
                    Some("non_empty") => ValidatorKind::NonEmpty,
                    Some("integer") => ValidatorKind::Integer,
                    Some("decimal") => ValidatorKind::Decimal,
                    Some("date") => ValidatorKind::Date,
                    Some("regex") => ValidatorKind::Regex,
                    other => return Err(ctx.err(format!("unknown validator kind {other:?}"))),
                };
                let mut pattern = None;
                let mut example = None;
                let mut i = 3;
                while i < tokens.len() {
                    match tokens[i].as_str() {
                        "pattern" => {
                            let p = tokens
                                .get(i + 1)
                                .filter(|t| t.is_quoted())
                                .ok_or_else(|| ctx.err("pattern needs a quoted regex"))?;
                            let compiled = regex::Regex::new(p.as_str())
                                .map_err(|e| ctx.err(format!("bad pattern: {e}")))?;
                            pattern = Some(compiled);
                            i += 2;
                        }
                        "example" => {
                            let e = tokens
                                .get(i + 1)
                                .filter(|t| t.is_quoted())
                                .ok_or_else(|| ctx.err("example needs a quoted value"))?;
                            example = Some(e.as_str().to_string());
                            i += 2;
                        }
                        other => return Err(ctx.err(format!("unexpected token {other:?}"))),
                    }
                }
                if kind == ValidatorKind::Regex && pattern.is_none() {
                    return Err(ctx.err("regex validator needs pattern \"...\""));
                }
                let example =
                    example.ok_or_else(|| ctx.err("validator needs example \"...\""))?;
                let spec = ValidatorSpec { id: id.clone(), kind, pattern, example };
                if !spec.accepts(&spec.example) {
                    return Err(ctx.err(format!(
                        "example {:?} does not satisfy validator {id}",
                        spec.example
                    )));
                }
                if validators.insert(id.clone(), spec).is_some() {
                    return Err(ctx.err(format!("duplicate validator {id}")));
                }
            }
            "activity" => {
                let name = tokens
                    .get(1)
                    .ok_or_else(|| ctx.err("activity needs a name"))?
                    .as_str()
                    .to_string();
                if pages.iter().any(|p| p.activity == name) {
                    return Err(ctx.err(format!("duplicate activity {name}")));
                }
                pages.push(SimPage { activity: name, widgets: Vec::new() });
                page_lines.push(ctx.line);
            }
            "widget" => {
                let page = pages
                    .last_mut()
                    .ok_or_else(|| ctx.err("widget outside of an activity block"))?;
                let key = tokens
                    .get(1)
                    .ok_or_else(|| ctx.err("widget needs a key"))?
                    .as_str()
                    .to_string();
                if page.widgets.iter().any(|w| w.key == key) {
                    return Err(ctx.err(format!("duplicate widget key {key}")));
                }
                let mut widget = SimWidget {
                    key,
                    class_name: String::new(),
                    text: None,
                    hint: None,
                    desc: None,
                    capabilities: Vec::new(),
                    validator: None,
                    nearby: Vec::new(),
                    bounds: Bounds { left: 0, top: 0, right: 0, bottom: 0 },
                };
                let mut has_bounds = false;
                let mut i = 2;
                while i < tokens.len() {
                    let attr = tokens[i].as_str();
                    match attr {
                        "class" | "text" | "hint" | "desc" | "action" | "validate" | "bounds" => {
                            let value = tokens
                                .get(i + 1)
                                .ok_or_else(|| ctx.err(format!("{attr} needs a value")))?;
                            match attr {
                                "class" => widget.class_name = value.as_str().to_string(),
                                "text" => widget.text = Some(value.as_str().to_string()),
                                "hint" => widget.hint = Some(value.as_str().to_string()),
                                "desc" => widget.desc = Some(value.as_str().to_string()),
                                "action" => {
                                    widget.capabilities = parse_action_list(&ctx, value.as_str())?
                                }
                                "validate" => {
                                    widget.validator = Some(value.as_str().to_string())
                                }
                                "bounds" => {
                                    widget.bounds = Bounds::parse(value.as_str())
                                        .map_err(|e| ctx.err(e.to_string()))?;
                                    has_bounds = true;
                                }
                                _ => unreachable!(),
                            }
                            i += 2;
                        }
                        "nearby" => {
                            i += 1;
                            let mut texts = Vec::new();
                            while let Some(t) = tokens.get(i) {
                                if !t.is_quoted() {
                                    break;
                                }
                                texts.push(t.as_str().to_string());
                                i += 1;
                            }
                            if texts.is_empty() {
                                return Err(ctx.err("nearby needs quoted texts"));
                            }
                            widget.nearby = texts;
                        }
                        other => return Err(ctx.err(format!("unexpected token {other:?}"))),
                    }
                }
                if widget.class_name.is_empty() {
                    return Err(ctx.err("widget needs class <Class>"));
                }
                if !has_bounds {
                    return Err(ctx.err("widget needs bounds [l,t][r,b]"));
                }
                if widget.class_name.contains("EditText")
                    && !widget.capabilities.contains(&ActionKind::Input)
                {
                    widget.capabilities.push(ActionKind::Input);
                }
                page.widgets.push(widget);
            }
            "transition" => {
                if tokens.len() < 6 || tokens[4].as_str() != "->" {
                    return Err(
                        ctx.err("transition is <src> <widget> <action> -> <target> [requires ...]")
                    );
                }
                let action = ActionKind::parse(tokens[3].as_str())
                    .filter(|k| *k != ActionKind::None)
                    .ok_or_else(|| ctx.err(format!("unknown action kind {:?}", tokens[3].as_str())))?;
                let mut required = Vec::new();
                if tokens.len() > 6 {
                    if tokens[6].as_str() != "requires" {
                        return Err(ctx.err(format!("unexpected token {:?}", tokens[6].as_str())));
                    }
                    for token in &tokens[7..] {
                        let (w, v) = token
                            .as_str()
                            .split_once(':')
                            .ok_or_else(|| ctx.err("requires entries are widget:validator"))?;
                        required.push((w.to_string(), v.to_string()));
                    }
                    if required.is_empty() {
                        return Err(ctx.err("requires needs at least one widget:validator"));
                    }
                }
                transitions.push((
                    TransitionRule {
                        source_activity: tokens[1].as_str().to_string(),
                        widget_key: tokens[2].as_str().to_string(),
                        action,
                        required_inputs: required,
                        target_activity: tokens[5].as_str().to_string(),
                    },
                    ctx.line,
                ));
            }
            "crash" => {
                let seq = tokens.get(1).map(|t| t.as_str()) == Some("seq");
                let trigger_tokens: Vec<&Token> = tokens[if seq { 2 } else { 1 }..]
                    .iter()
                    .take_while(|t| !t.is_quoted())
                    .collect();
                let message = tokens
                    .last()
                    .filter(|t| t.is_quoted())
                    .ok_or_else(|| ctx.err("crash needs a quoted message"))?
                    .as_str()
                    .to_string();
                if trigger_tokens.is_empty() {
                    return Err(ctx.err("crash needs at least one activity:widget:action trigger"));
                }
                if !seq && trigger_tokens.len() != 1 {
                    return Err(ctx.err("single crash takes one trigger; use `crash seq` for sequences"));
                }
                let pattern = trigger_tokens
                    .iter()
                    .map(|t| parse_trigger(&ctx, t.as_str()))
                    .collect::<Result<Vec<_>, _>>()?;
                crash_rules.push((CrashRule { pattern, message }, ctx.line));
            }
            other => return Err(ctx.err(format!("unknown directive {other:?}"))),
        }
    }

    let whole = LineCtx { path: source_name, line: 0 };
    let app_name = app_name.ok_or_else(|| whole.err("missing `app \"Name\"`"))?;
    let (width, height) = screen.ok_or_else(|| whole.err("missing `screen <w> <h>`"))?;
    if height <= 0 || width <= 0 {
        return Err(whole.err("screen dimensions must be positive"));
    }
    let (start_activity, start_line) = start.ok_or_else(|| whole.err("missing `start <Activity>`"))?;
    if pages.is_empty() {
        return Err(whole.err("no activities declared"));
    }

    let activities: Vec<String> = pages.iter().map(|p| p.activity.clone()).collect();
    let info = AppInfo::new(app_name, activities).map_err(|e| whole.err(e.to_string()))?;

    let has_activity = |name: &str| pages.iter().any(|p| p.activity == name);
    let has_widget = |activity: &str, key: &str| {
        pages
            .iter()
            .find(|p| p.activity == activity)
            .map(|p| p.widgets.iter().any(|w| w.key == key))
            .unwrap_or(false)
    };
    let widget_of = |activity: &str, key: &str| {
        pages
            .iter()
            .find(|p| p.activity == activity)
            .and_then(|p| p.widgets.iter().find(|w| w.key == key))
    };

    if !has_activity(&start_activity) {
        return Err(SimError::DefinitionInvalid {
            path: source_name.to_string(),
            line: start_line,
            detail: format!("start activity {start_activity:?} is not declared"),
        });
    }

    for page in &pages {
        for w in &page.widgets {
            if let Some(v) = &w.validator {
                if !validators.contains_key(v) {
                    return Err(whole.err(format!(
                        "widget {}:{} references unknown validator {v:?}",
                        page.activity, w.key
                    )));
                }
            }
        }
    }

    for (rule, line) in &transitions {
        let ctx = LineCtx { path: source_name, line: *line };
        if !has_activity(&rule.source_activity) {
            return Err(ctx.err(format!("source activity {:?} is not declared", rule.source_activity)));
        }
        if !has_activity(&rule.target_activity) {
            return Err(ctx.err(format!("target activity {:?} is not declared", rule.target_activity)));
        }
        if !has_widget(&rule.source_activity, &rule.widget_key) {
            return Err(ctx.err(format!(
                "widget {:?} does not exist on {:?}",
                rule.widget_key, rule.source_activity
            )));
        }
        for (widget_key, validator_id) in &rule.required_inputs {
            let widget = widget_of(&rule.source_activity, widget_key).ok_or_else(|| {
                ctx.err(format!(
                    "required input {widget_key:?} does not exist on {:?}",
                    rule.source_activity
                ))
            })?;
            if !widget.capabilities.contains(&ActionKind::Input) {
                return Err(ctx.err(format!(
                    "required input {widget_key:?} is not an input-capable widget"
                )));
            }
            if !validators.contains_key(validator_id) {
                return Err(ctx.err(format!("unknown validator {validator_id:?}")));
            }
        }
    }

    for (rule, line) in &crash_rules {
        let ctx = LineCtx { path: source_name, line: *line };
        for step in &rule.pattern {
            if !has_widget(&step.activity, &step.widget_key) {
                return Err(ctx.err(format!(
                    "crash trigger references missing widget {}:{}",
                    step.activity, step.widget_key
                )));
            }
        }
    }

    Ok(SimApp {
        info,
        screen_width: width,
        screen_height: height,
        start_activity,
        pages,
        transitions: transitions.into_iter().map(|(r, _)| r).collect(),
        crash_rules: crash_rules.into_iter().map(|(r, _)| r).collect(),
        validators,
    })
}

#[cfg(test)]
mod tests {
    use super::super::SimApp;

    #[test]
    fn transition_to_missing_activity_is_rejected_with_location() {
        let text = r#"
app "Broken"
screen 100 200
start Main
activity Main
  widget go class Button text "Go" action click bounds [0,0][10,10]
transition Main go click -> Nowhere
"#;
        let err = SimApp::parse(text, "broken.sim").unwrap_err();
        let message = err.to_string();
        assert!(message.contains("broken.sim:7"), "{message}");
        assert!(message.contains("Nowhere"), "{message}");
    }

    #[test]
    fn required_input_must_be_input_capable() {
        let text = r#"
app "Broken"
screen 100 200
start Main
validator filled non_empty example "x"
activity Main
  widget go class Button text "Go" action click bounds [0,0][10,10]
  widget next class Button text "Next" action click bounds [0,20][10,30]
transition Main next click -> Main requires go:filled
"#;
        let err = SimApp::parse(text, "broken.sim").unwrap_err();
        assert!(err.to_string().contains("not an input-capable widget"));
    }

    #[test]
    fn invalid_example_is_rejected_at_load() {
        let text = r#"
app "Broken"
screen 100 200
start Main
validator amount integer example "lots"
activity Main
  widget f class EditText hint "F" action input bounds [0,0][10,10]
"#;
        let err = SimApp::parse(text, "broken.sim").unwrap_err();
        assert!(err.to_string().contains("does not satisfy"));
    }

    #[test]
    fn crash_trigger_must_reference_existing_widget() {
        let text = r#"
app "Broken"
screen 100 200
start Main
activity Main
  widget go class Button text "Go" action click bounds [0,0][10,10]
crash Main:missing:click "boom"
"#;
        let err = SimApp::parse(text, "broken.sim").unwrap_err();
        assert!(err.to_string().contains("missing widget"));
    }

    #[test]
    fn duplicate_activity_is_rejected() {
        let text = r#"
app "Broken"
screen 100 200
start Main
activity Main
  widget go class Button text "Go" action click bounds [0,0][10,10]
activity Main
  widget go2 class Button text "Go2" action click bounds [0,0][10,10]
"#;
        let err = SimApp::parse(text, "broken.sim").unwrap_err();
        assert!(err.to_string().contains("duplicate activity"));
    }
}
