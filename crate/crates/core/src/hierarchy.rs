//! GUI page model and view-hierarchy parsing.
//!
//! The accepted dump grammar is the UIAutomator format: an XML document of
//! nested `node` elements carrying `text`, `resource-id`, `class`,
//! `clickable`, `long-clickable`, `scrollable`, `bounds` (`[l,t][r,b]`),
//! `content-desc` and an optional `hint` (or `hint-text`) attribute, usually
//! wrapped in a `hierarchy` root element. Two extensions are understood: the
//! root may carry `activity`, `width` and `height` attributes, and a node may
//! carry a precomputed `nearby` attribute (texts joined with ` [SEP] `) that
//! overrides the parent/sibling derivation. Leaf nodes become widgets;
//! container nodes only contribute text to their children's nearby lists.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use quick_xml::events::Event;
use quick_xml::Reader;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Separator used when nearby texts are joined into a single string.
pub const NEARBY_SEPARATOR: &str = " [SEP] ";

#[derive(Debug, Error)]
pub enum HierarchyError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
}

fn malformed(msg: impl Into<String>) -> HierarchyError {
    HierarchyError::MalformedDocument(msg.into())
}

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// App name plus declared activity list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppInfo {
    pub app_name: String,
    pub activities: Vec<String>,
}

impl AppInfo {
    pub fn new(
        app_name: impl Into<String>,
        activities: Vec<String>,
    ) -> Result<Self, HierarchyError> {
        let info = AppInfo { app_name: app_name.into(), activities };
        info.validate()?;
        Ok(info)
    }

    fn validate(&self) -> Result<(), HierarchyError> {
        if self.app_name.trim().is_empty() {
            return Err(HierarchyError::InvalidManifest("app name is empty".into()));
        }
        let mut seen = HashSet::new();
        for activity in &self.activities {
            if !seen.insert(activity.as_str()) {
                return Err(HierarchyError::InvalidManifest(format!(
                    "duplicate activity {activity:?}"
                )));
            }
        }
        Ok(())
    }

    /// Reads the manifest summary format: `#` comments and blank lines are
    /// skipped, the first content line is the app name, every following line
    /// names one activity.
    pub fn from_manifest_str(text: &str) -> Result<Self, HierarchyError> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let name = lines
            .next()
            .ok_or_else(|| HierarchyError::InvalidManifest("empty manifest".into()))?;
        AppInfo::new(name, lines.map(str::to_string).collect())
    }

    pub fn from_manifest_file(path: impl AsRef<Path>) -> Result<Self, HierarchyError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            HierarchyError::InvalidManifest(format!("{}: {e}", path.as_ref().display()))
        })?;
        Self::from_manifest_str(&text)
    }
}

/// Screen-coordinate rectangle of a widget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bounds {
    pub left: i32,
    pub top: i32,
    pub right: i32,
    pub bottom: i32,
}

impl Bounds {
    pub fn new(left: i32, top: i32, right: i32, bottom: i32) -> Result<Self, HierarchyError> {
        if left > right || top > bottom || left < 0 || top < 0 {
            return Err(malformed(format!(
                "invalid bounds [{left},{top}][{right},{bottom}]"
            )));
        }
        Ok(Bounds { left, top, right, bottom })
    }

    /// Parses the dump format `[l,t][r,b]`.
    pub fn parse(s: &str) -> Result<Self, HierarchyError> {
        let inner = s.trim();
        let parts: Vec<&str> = inner
            .split(['[', ']', ','])
            .filter(|p| !p.is_empty())
            .collect();
        if parts.len() != 4 || !inner.starts_with('[') || !inner.ends_with(']') {
            return Err(malformed(format!("bad bounds {s:?}")));
        }
        let mut nums = [0i32; 4];
        for (i, p) in parts.iter().enumerate() {
            nums[i] = p
                .trim()
                .parse()
                .map_err(|_| malformed(format!("bad bounds {s:?}")))?;
        }
        Bounds::new(nums[0], nums[1], nums[2], nums[3])
    }

    pub fn width(&self) -> i32 {
        self.right - self.left
    }

    pub fn height(&self) -> i32 {
        self.bottom - self.top
    }

    pub fn center(&self) -> (i32, i32) {
        ((self.left + self.right) / 2, (self.top + self.bottom) / 2)
    }

    pub fn is_zero_area(&self) -> bool {
        self.width() == 0 || self.height() == 0
    }

    pub fn contains(&self, x: i32, y: i32) -> bool {
        x >= self.left && x <= self.right && y >= self.top && y <= self.bottom
    }

    pub fn area(&self) -> i64 {
        self.width() as i64 * self.height() as i64
    }
}

impl fmt::Display for Bounds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}][{},{}]", self.left, self.top, self.right, self.bottom)
    }
}

/// Kind of action a widget supports or an intent performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Click,
    Input,
    LongPress,
    Scroll,
    None,
}

impl ActionKind {
    /// Wording used in prompts and reports.
    pub fn word(&self) -> &'static str {
        match self {
            ActionKind::Click => "click",
            ActionKind::Input => "input",
            ActionKind::LongPress => "long press",
            ActionKind::Scroll => "scroll",
            ActionKind::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<ActionKind> {
        match s.trim().to_ascii_lowercase().as_str() {
            "click" => Some(ActionKind::Click),
            "input" => Some(ActionKind::Input),
            "long_press" | "long-press" | "longpress" => Some(ActionKind::LongPress),
            "scroll" => Some(ActionKind::Scroll),
            "none" => Some(ActionKind::None),
            _ => None,
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.word())
    }
}

/// One interactive or display element of a GUI page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Widget {
    pub text: Option<String>,
    pub hint_text: Option<String>,
    pub resource_id: Option<String>,
    pub description: Option<String>,
    /// Widget class name with the package prefix stripped, e.g. `Button`.
    pub category: String,
    /// Primary action, derived from the capability set.
    pub action: ActionKind,
    /// Everything the widget can do; `action` is the first entry.
    pub capabilities: Vec<ActionKind>,
    pub bounds: Bounds,
    /// Texts of the parent node and sibling nodes, in document order.
    pub nearby: Vec<String>,
    /// Position among parsed widgets in document order.
    pub node_index: usize,
    /// True when text, hint and resource id are all empty.
    pub unlabeled: bool,
    pub zero_area: bool,
}

impl Widget {
    pub fn builder(category: impl Into<String>, bounds: Bounds) -> WidgetBuilder {
        WidgetBuilder {
            text: None,
            hint_text: None,
            resource_id: None,
            description: None,
            category: category.into(),
            capabilities: Vec::new(),
            bounds,
            nearby: Vec::new(),
            node_index: 0,
        }
    }

    /// First non-empty of text, hint text, resource id; the label widgets
    /// carry in prompts. `None` marks the widget unlabeled.
    pub fn display_label(&self) -> Option<&str> {
        non_empty(&self.text)
            .or_else(|| non_empty(&self.hint_text))
            .or_else(|| non_empty(&self.resource_id))
    }

    /// First non-empty of text, resource id, description; the label chain the
    /// matcher scores against.
    pub fn matcher_label(&self) -> Option<&str> {
        non_empty(&self.text)
            .or_else(|| non_empty(&self.resource_id))
            .or_else(|| non_empty(&self.description))
    }

    /// All non-empty label fields, for exact-match checks.
    pub fn label_chain(&self) -> impl Iterator<Item = &str> {
        [&self.text, &self.hint_text, &self.resource_id, &self.description]
            .into_iter()
            .filter_map(|f| non_empty(f))
    }

    pub fn supports(&self, kind: ActionKind) -> bool {
        self.capabilities.contains(&kind)
    }

    pub fn is_actionable(&self) -> bool {
        self.action != ActionKind::None
    }
}

fn non_empty(field: &Option<String>) -> Option<&str> {
    field.as_deref().filter(|s| !s.is_empty())
}

pub struct WidgetBuilder {
    text: Option<String>,
    hint_text: Option<String>,
    resource_id: Option<String>,
    description: Option<String>,
    category: String,
    capabilities: Vec<ActionKind>,
    bounds: Bounds,
    nearby: Vec<String>,
    node_index: usize,
}

impl WidgetBuilder {
    pub fn text(mut self, t: impl Into<String>) -> Self {
        self.text = some_non_empty(t.into());
        self
    }

    pub fn hint(mut self, t: impl Into<String>) -> Self {
        self.hint_text = some_non_empty(t.into());
        self
    }

    pub fn resource_id(mut self, t: impl Into<String>) -> Self {
        self.resource_id = some_non_empty(t.into());
        self
    }

    pub fn description(mut self, t: impl Into<String>) -> Self {
        self.description = some_non_empty(t.into());
        self
    }

    pub fn capability(mut self, kind: ActionKind) -> Self {
        if kind != ActionKind::None && !self.capabilities.contains(&kind) {
            self.capabilities.push(kind);
        }
        self
    }

    pub fn nearby(mut self, texts: Vec<String>) -> Self {
        self.nearby = texts;
        self
    }

    pub fn node_index(mut self, i: usize) -> Self {
        self.node_index = i;
        self
    }

    pub fn build(self) -> Widget {
        // Primary action precedence: input > click > long press > scroll.
        let order = [
            ActionKind::Input,
            ActionKind::Click,
            ActionKind::LongPress,
            ActionKind::Scroll,
        ];
        let capabilities: Vec<ActionKind> = order
            .into_iter()
            .filter(|k| self.capabilities.contains(k))
            .collect();
        let action = capabilities.first().copied().unwrap_or(ActionKind::None);
        let unlabeled = non_empty(&self.text).is_none()
            && non_empty(&self.hint_text).is_none()
            && non_empty(&self.resource_id).is_none();
        Widget {
            unlabeled,
            zero_area: self.bounds.is_zero_area(),
            text: self.text,
            hint_text: self.hint_text,
            resource_id: self.resource_id,
            description: self.description,
            category: self.category,
            action,
            capabilities,
            bounds: self.bounds,
            nearby: self.nearby,
            node_index: self.node_index,
        }
    }
}

fn some_non_empty(s: String) -> Option<String> {
    if s.is_empty() {
        None
    } else {
        Some(s)
    }
}

/// A parsed GUI page: ordered widgets plus the upper/lower partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuiPage {
    pub activity_name: String,
    pub widgets: Vec<Widget>,
    pub screen_height: i32,
    /// Indices into `widgets` whose vertical center is at or above the
    /// middle of the screen.
    pub upper: Vec<usize>,
    /// Indices strictly below the middle.
    pub lower: Vec<usize>,
}

impl GuiPage {
    /// Sorts widgets top-to-bottom then left-to-right (document order breaks
    /// ties) and fills the position partition.
    pub fn assemble(
        activity_name: impl Into<String>,
        mut widgets: Vec<Widget>,
        screen_height: i32,
    ) -> GuiPage {
        widgets.sort_by_key(|w| (w.bounds.top, w.bounds.left, w.node_index));
        let mut page = GuiPage {
            activity_name: activity_name.into(),
            widgets,
            screen_height,
            upper: Vec::new(),
            lower: Vec::new(),
        };
        page.partition();
        page
    }

    fn partition(&mut self) {
        self.upper.clear();
        self.lower.clear();
        for (i, w) in self.widgets.iter().enumerate() {
            // Strictly below the middle goes to lower; the exact midpoint
            // stays upper. Comparing top+bottom against screen_height avoids
            // integer-division rounding.
            if w.bounds.top + w.bounds.bottom > self.screen_height {
                self.lower.push(i);
            } else {
                self.upper.push(i);
            }
        }
    }

    /// Widgets that carry a display label, with their indices.
    pub fn labeled(&self) -> impl Iterator<Item = (usize, &Widget)> {
        self.widgets.iter().enumerate().filter(|(_, w)| !w.unlabeled)
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("page serializes")
    }
}

/// Recomputes the upper/lower partition of a page.
pub fn partition_widgets(page: GuiPage) -> GuiPage {
    GuiPage::assemble(page.activity_name, page.widgets, page.screen_height)
}

// ---------------------------------------------------------------------------
// Dump parsing
// ---------------------------------------------------------------------------

/// Root-element metadata of a dump document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DumpMeta {
    pub activity: Option<String>,
    pub width: Option<i32>,
    pub height: Option<i32>,
}

#[derive(Debug)]
struct RawNode {
    attrs: Vec<(String, String)>,
    parent: Option<usize>,
    children: Vec<usize>,
}

impl RawNode {
    fn attr(&self, name: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }

    fn text(&self) -> Option<&str> {
        self.attr("text").filter(|t| !t.is_empty())
    }
}

fn decode_element(
    e: &quick_xml::events::BytesStart<'_>,
) -> Result<(String, Vec<(String, String)>), HierarchyError> {
    let name = e.name();
    let tag = std::str::from_utf8(name.as_ref())
        .map_err(|e| malformed(e.to_string()))?
        .to_string();
    let mut attrs = Vec::new();
    for attr in e.attributes() {
        let attr = attr.map_err(|e| malformed(e.to_string()))?;
        let key = std::str::from_utf8(attr.key.as_ref())
            .map_err(|e| malformed(e.to_string()))?
            .to_string();
        let value = attr
            .unescape_value()
            .map_err(|e| malformed(e.to_string()))?
            .into_owned();
        attrs.push((key, value));
    }
    Ok((tag, attrs))
}

fn parse_tree(document: &str) -> Result<(Vec<RawNode>, DumpMeta), HierarchyError> {
    let mut reader = Reader::from_str(document);
    reader.config_mut().trim_text(true);
    let mut nodes: Vec<RawNode> = Vec::new();
    let mut stack: Vec<usize> = Vec::new();
    let mut meta = DumpMeta::default();
    let mut saw_element = false;

    let open = |tag: String,
                attrs: Vec<(String, String)>,
                nodes: &mut Vec<RawNode>,
                stack: &[usize],
                meta: &mut DumpMeta|
     -> Result<Option<usize>, HierarchyError> {
        if tag == "hierarchy" {
            let find = |k: &str| {
                attrs
                    .iter()
                    .find(|(key, _)| key == k)
                    .map(|(_, v)| v.clone())
            };
            meta.activity = find("activity").filter(|a| !a.is_empty());
            meta.width = find("width").and_then(|w| w.parse().ok());
            meta.height = find("height").and_then(|h| h.parse().ok());
            return Ok(None);
        }
        if tag != "node" {
            return Err(malformed(format!("unexpected element <{tag}>")));
        }
        let idx = nodes.len();
        let parent = stack.last().copied();
        nodes.push(RawNode { attrs, parent, children: Vec::new() });
        if let Some(p) = parent {
            nodes[p].children.push(idx);
        }
        Ok(Some(idx))
    };

    loop {
        match reader.read_event() {
            Ok(Event::Start(e)) => {
                let (tag, attrs) = decode_element(&e)?;
                saw_element = true;
                if let Some(idx) = open(tag, attrs, &mut nodes, &stack, &mut meta)? {
                    stack.push(idx);
                }
            }
            Ok(Event::Empty(e)) => {
                let (tag, attrs) = decode_element(&e)?;
                saw_element = true;
                open(tag, attrs, &mut nodes, &stack, &mut meta)?;
            }
            Ok(Event::End(e)) => {
                let name = e.name();
                let tag =
                    std::str::from_utf8(name.as_ref()).map_err(|e| malformed(e.to_string()))?;
                if tag == "node" {
                    stack.pop();
                }
            }
            Ok(Event::Eof) => break,
            Ok(_) => {}
            Err(e) => return Err(malformed(e.to_string())),
        }
    }
    if !saw_element {
        return Err(malformed("document contains no elements"));
    }
    if !stack.is_empty() {
        return Err(malformed("unbalanced node elements"));
    }
    Ok((nodes, meta))
}

fn strip_resource_id(raw: &str) -> &str {
    raw.rsplit('/').next().unwrap_or(raw)
}

fn strip_class(raw: &str) -> &str {
    raw.rsplit('.').next().unwrap_or(raw)
}

fn node_nearby(nodes: &[RawNode], idx: usize) -> Vec<String> {
    if let Some(joined) = nodes[idx].attr("nearby") {
        if joined.is_empty() {
            return Vec::new();
        }
        return joined
            .split(NEARBY_SEPARATOR)
            .map(str::to_string)
            .collect();
    }
    let mut out = Vec::new();
    match nodes[idx].parent {
        Some(p) => {
            if let Some(t) = nodes[p].text() {
                out.push(t.to_string());
            }
            for &sib in &nodes[p].children {
                if sib != idx {
                    if let Some(t) = nodes[sib].text() {
                        out.push(t.to_string());
                    }
                }
            }
        }
        None => {
            // Top-level nodes are siblings of each other and have no parent.
            for (i, n) in nodes.iter().enumerate() {
                if n.parent.is_none() && i != idx {
                    if let Some(t) = n.text() {
                        out.push(t.to_string());
                    }
                }
            }
        }
    }
    out
}

fn widget_from_node(
    nodes: &[RawNode],
    idx: usize,
    widget_ordinal: usize,
) -> Result<Widget, HierarchyError> {
    let node = &nodes[idx];
    let bounds_attr = node
        .attr("bounds")
        .ok_or_else(|| malformed(format!("node {idx} is missing bounds")))?;
    let bounds = Bounds::parse(bounds_attr)?;
    let class_raw = node.attr("class").unwrap_or("");
    let category = strip_class(class_raw).to_string();
    let flag = |name: &str| node.attr(name).map(|v| v == "true").unwrap_or(false);

    let mut builder = Widget::builder(category.clone(), bounds)
        .text(node.attr("text").unwrap_or(""))
        .hint(node.attr("hint").or_else(|| node.attr("hint-text")).unwrap_or(""))
        .resource_id(strip_resource_id(node.attr("resource-id").unwrap_or("")))
        .description(node.attr("content-desc").unwrap_or(""))
        .nearby(node_nearby(nodes, idx))
        .node_index(widget_ordinal);
    if category.contains("EditText") {
        builder = builder.capability(ActionKind::Input);
    }
    if flag("clickable") {
        builder = builder.capability(ActionKind::Click);
    }
    if flag("long-clickable") {
        builder = builder.capability(ActionKind::LongPress);
    }
    if flag("scrollable") {
        builder = builder.capability(ActionKind::Scroll);
    }
    Ok(builder.build())
}

/// Parses a view-hierarchy document into a [`GuiPage`]. A page with zero
/// widgets is valid; only unparseable input is an error.
pub fn parse_view_hierarchy(
    document: &str,
    screen_height: i32,
) -> Result<GuiPage, HierarchyError> {
    let (nodes, meta) = parse_tree(document)?;
    let mut widgets = Vec::new();
    for idx in 0..nodes.len() {
        if nodes[idx].children.is_empty() {
            widgets.push(widget_from_node(&nodes, idx, widgets.len())?);
        }
    }
    Ok(GuiPage::assemble(
        meta.activity.unwrap_or_default(),
        widgets,
        screen_height,
    ))
}

/// Like [`parse_view_hierarchy`] but takes the screen height from the root
/// element, as bridge adapters receive it over the wire.
pub fn parse_dump_auto(document: &str) -> Result<(GuiPage, DumpMeta), HierarchyError> {
    let (_, meta) = parse_tree(document)?;
    let height = meta
        .height
        .ok_or_else(|| malformed("root element carries no height attribute"))?;
    let page = parse_view_hierarchy(document, height)?;
    Ok((page, meta))
}

/// Nearby texts for the `ordinal`-th widget (leaf node) of the document:
/// parent text first, then sibling texts in document order.
pub fn extract_nearby(document: &str, ordinal: usize) -> Result<Vec<String>, HierarchyError> {
    let (nodes, _) = parse_tree(document)?;
    let leaves: Vec<usize> = (0..nodes.len())
        .filter(|&i| nodes[i].children.is_empty())
        .collect();
    let idx = *leaves
        .get(ordinal)
        .ok_or_else(|| malformed(format!("no widget with ordinal {ordinal}")))?;
    Ok(node_nearby(&nodes, idx))
}

// ---------------------------------------------------------------------------
// Dump writing
// ---------------------------------------------------------------------------

fn xml_escape(s: &str) -> String {
    quick_xml::escape::escape(s).into_owned()
}

/// Serializes a page back to the dump grammar as a single line. Widgets are
/// written flat in page order with their `nearby` lists inlined, so a
/// reparse reconstructs every widget attribute.
pub fn write_dump(page: &GuiPage, screen_width: i32) -> String {
    let mut out = String::from("<?xml version='1.0' encoding='UTF-8' standalone='yes' ?>");
    out.push_str(&format!(
        "<hierarchy rotation=\"0\" activity=\"{}\" width=\"{}\" height=\"{}\">",
        xml_escape(&page.activity_name),
        screen_width,
        page.screen_height
    ));
    for w in &page.widgets {
        let class = if w.category.contains('.') || w.category.is_empty() {
            w.category.clone()
        } else {
            format!("android.widget.{}", w.category)
        };
        out.push_str("<node");
        let mut attr = |k: &str, v: &str| {
            out.push_str(&format!(" {k}=\"{}\"", xml_escape(v)));
        };
        attr("text", w.text.as_deref().unwrap_or(""));
        if let Some(h) = &w.hint_text {
            attr("hint", h);
        }
        attr("resource-id", w.resource_id.as_deref().unwrap_or(""));
        attr("content-desc", w.description.as_deref().unwrap_or(""));
        attr("class", &class);
        attr("clickable", bool_str(w.supports(ActionKind::Click)));
        attr("long-clickable", bool_str(w.supports(ActionKind::LongPress)));
        attr("scrollable", bool_str(w.supports(ActionKind::Scroll)));
        if !w.nearby.is_empty() {
            attr("nearby", &w.nearby.join(NEARBY_SEPARATOR));
        }
        attr("bounds", &w.bounds.to_string());
        out.push_str("/>");
    }
    out.push_str("</hierarchy>");
    out
}

fn bool_str(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}
