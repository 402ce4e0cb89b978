//! Line-delimited device-bridge protocol.
//!
//! Requests, one per line: `DUMP`, `TAP <x> <y>`, `TEXT <payload>`,
//! `LONGPRESS <x> <y>`, `SWIPE <x1> <y1> <x2> <y2>`, `CRASH?`, `RESET`.
//! Responses, one per line: `OK`, `OK <data>` or `ERR <message>`. `DUMP`
//! returns a single-line view-hierarchy document whose root carries the
//! activity and screen dimensions; `CRASH?` returns the last crash signature
//! or `NONE`. Action responses may carry an `ok`/`no_effect`/`crash` outcome
//! hint; adapters wrapping real tooling can answer a bare `OK`, in which
//! case the client falls back to comparing dumps.
//!
//! [`BridgeServer`] serves a simulated app over the protocol (useful for
//! development and for exercising the full wire path); [`BridgeAdapter`] is
//! the client side the harness drives. An input intent is sent as a focus
//! `TAP` followed by `TEXT`.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::time::Duration;

use super::{AdapterError, DeviceAdapter, SimApp, SimEngine, StepOutcome};
use crate::hierarchy::{parse_dump_auto, write_dump, ActionKind, AppInfo, GuiPage};
use crate::matcher::ActionIntent;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BridgeRequest {
    Dump,
    Tap(i32, i32),
    Text(String),
    LongPress(i32, i32),
    Swipe(i32, i32, i32, i32),
    CrashQuery,
    Reset,
}

impl BridgeRequest {
    pub fn encode(&self) -> String {
        match self {
            BridgeRequest::Dump => "DUMP".into(),
            BridgeRequest::Tap(x, y) => format!("TAP {x} {y}"),
            BridgeRequest::Text(payload) => format!("TEXT {payload}"),
            BridgeRequest::LongPress(x, y) => format!("LONGPRESS {x} {y}"),
            BridgeRequest::Swipe(x1, y1, x2, y2) => format!("SWIPE {x1} {y1} {x2} {y2}"),
            BridgeRequest::CrashQuery => "CRASH?".into(),
            BridgeRequest::Reset => "RESET".into(),
        }
    }

    pub fn parse(line: &str) -> Result<BridgeRequest, String> {
        let line = line.trim_end_matches(['\r', '\n']);
        let (head, rest) = match line.split_once(' ') {
            Some((h, r)) => (h, r),
            None => (line, ""),
        };
        let ints = |n: usize| -> Result<Vec<i32>, String> {
            let parts: Vec<i32> = rest
                .split_whitespace()
                .map(|p| p.parse().map_err(|_| format!("bad integer {p:?}")))
                .collect::<Result<_, _>>()?;
            if parts.len() != n {
                return Err(format!("{head} takes {n} integers"));
            }
            Ok(parts)
        };
        match head {
            "DUMP" => Ok(BridgeRequest::Dump),
            "TAP" => ints(2).map(|v| BridgeRequest::Tap(v[0], v[1])),
            "TEXT" => Ok(BridgeRequest::Text(rest.to_string())),
            "LONGPRESS" => ints(2).map(|v| BridgeRequest::LongPress(v[0], v[1])),
            "SWIPE" => ints(4).map(|v| BridgeRequest::Swipe(v[0], v[1], v[2], v[3])),
            "CRASH?" => Ok(BridgeRequest::CrashQuery),
            "RESET" => Ok(BridgeRequest::Reset),
            other => Err(format!("unknown request {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BridgeResponse {
    Ok(Option<String>),
    Err(String),
}

impl BridgeResponse {
    pub fn encode(&self) -> String {
        match self {
            BridgeResponse::Ok(None) => "OK".into(),
            BridgeResponse::Ok(Some(data)) => format!("OK {data}"),
            BridgeResponse::Err(message) => format!("ERR {message}"),
        }
    }

    pub fn parse(line: &str) -> Result<BridgeResponse, String> {
        let line = line.trim_end_matches(['\r', '\n']);
        if line == "OK" {
            return Ok(BridgeResponse::Ok(None));
        }
        if let Some(data) = line.strip_prefix("OK ") {
            return Ok(BridgeResponse::Ok(Some(data.to_string())));
        }
        if let Some(message) = line.strip_prefix("ERR ") {
            return Ok(BridgeResponse::Err(message.to_string()));
        }
        Err(format!("unparseable response {line:?}"))
    }
}

// ---------------------------------------------------------------------------
// Server
// ---------------------------------------------------------------------------

/// Serves a simulated app over the bridge protocol. Handles one connection
/// at a time; the request handler is exposed for in-process tests.
pub struct BridgeServer {
    engine: SimEngine,
    focused: Option<usize>,
}

impl BridgeServer {
    pub fn new(app: SimApp) -> Self {
        BridgeServer { engine: SimEngine::new(app), focused: None }
    }

    fn widget_at(&self, x: i32, y: i32) -> Option<usize> {
        // Smallest containing widget wins; page order breaks ties.
        let page = self.engine.page();
        page.widgets
            .iter()
            .enumerate()
            .filter(|(_, w)| w.bounds.contains(x, y))
            .min_by_key(|(i, w)| (w.bounds.area(), *i))
            .map(|(i, _)| i)
    }

    fn act(&mut self, index: usize, action: ActionKind, payload: Option<String>) -> BridgeResponse {
        let page = self.engine.page();
        let widget = &page.widgets[index];
        let intent = ActionIntent {
            step_text: String::new(),
            widget_index: index,
            widget_key: crate::memorizer::widget_key(widget),
            action,
            payload,
            bounds: widget.bounds,
        };
        match self.engine.perform_sim(&intent) {
            Ok(outcome) => BridgeResponse::Ok(Some(outcome.word().to_string())),
            Err(e) => BridgeResponse::Err(e.to_string()),
        }
    }

    pub fn handle(&mut self, request: BridgeRequest) -> BridgeResponse {
        match request {
            BridgeRequest::Dump => {
                let dump = write_dump(&self.engine.page(), self.engine.app().screen_width);
                BridgeResponse::Ok(Some(dump))
            }
            BridgeRequest::Tap(x, y) => match self.widget_at(x, y) {
                Some(index) => {
                    let page = self.engine.page();
                    if page.widgets[index].supports(ActionKind::Input) {
                        // Tapping a field focuses it; the value arrives via TEXT.
                        self.focused = Some(index);
                        BridgeResponse::Ok(Some("ok".into()))
                    } else {
                        self.act(index, ActionKind::Click, None)
                    }
                }
                None => BridgeResponse::Ok(Some("no_effect".into())),
            },
            BridgeRequest::Text(payload) => match self.focused {
                Some(index) => self.act(index, ActionKind::Input, Some(payload)),
                None => BridgeResponse::Err("no focused field".into()),
            },
            BridgeRequest::LongPress(x, y) => match self.widget_at(x, y) {
                Some(index) => self.act(index, ActionKind::LongPress, None),
                None => BridgeResponse::Ok(Some("no_effect".into())),
            },
            BridgeRequest::Swipe(x1, y1, _x2, _y2) => match self.widget_at(x1, y1) {
                Some(index) => self.act(index, ActionKind::Scroll, None),
                None => BridgeResponse::Ok(Some("no_effect".into())),
            },
            BridgeRequest::CrashQuery => {
                let signature = self.engine.last_crash().unwrap_or("NONE").to_string();
                BridgeResponse::Ok(Some(signature))
            }
            BridgeRequest::Reset => {
                self.focused = None;
                match self.engine.reset() {
                    Ok(()) => BridgeResponse::Ok(None),
                    Err(e) => BridgeResponse::Err(e.to_string()),
                }
            }
        }
    }

    /// Accepts connections until `max_connections` have been served (forever
    /// when `None`).
    pub fn serve(mut self, listener: TcpListener, max_connections: Option<usize>) -> std::io::Result<()> {
        let mut served = 0usize;
        for stream in listener.incoming() {
            let stream = stream?;
            self.serve_stream(stream)?;
            served += 1;
            if let Some(max) = max_connections {
                if served >= max {
                    break;
                }
            }
        }
        Ok(())
    }

    fn serve_stream(&mut self, stream: TcpStream) -> std::io::Result<()> {
        stream.set_nodelay(true)?;
        let mut reader = BufReader::new(stream.try_clone()?);
        let mut writer = stream;
        let mut line = String::new();
        loop {
            line.clear();
            if reader.read_line(&mut line)? == 0 {
                return Ok(());
            }
            if line.trim().is_empty() {
                continue;
            }
            let response = match BridgeRequest::parse(&line) {
                Ok(request) => self.handle(request),
                Err(e) => BridgeResponse::Err(e),
            };
            writer.write_all(response.encode().as_bytes())?;
            writer.write_all(b"\n")?;
            writer.flush()?;
        }
    }
}

// ---------------------------------------------------------------------------
// Client adapter
// ---------------------------------------------------------------------------

/// Drives a device over the bridge protocol. App info comes from a manifest
/// summary since the wire carries only page state.
pub struct BridgeAdapter {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    info: AppInfo,
}

impl BridgeAdapter {
    pub fn connect(addr: impl ToSocketAddrs, info: AppInfo) -> Result<Self, AdapterError> {
        let addr = addr
            .to_socket_addrs()
            .map_err(|e| AdapterError::Unreachable(e.to_string()))?
            .next()
            .ok_or_else(|| AdapterError::Unreachable("address resolves to nothing".into()))?;
        let stream = TcpStream::connect_timeout(&addr, Duration::from_secs(10))
            .map_err(|e| AdapterError::Unreachable(e.to_string()))?;
        stream.set_nodelay(true)?;
        Ok(BridgeAdapter {
            reader: BufReader::new(stream.try_clone()?),
            writer: stream,
            info,
        })
    }

    fn exchange(&mut self, request: &BridgeRequest) -> Result<BridgeResponse, AdapterError> {
        self.writer.write_all(request.encode().as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Err(AdapterError::Unreachable("bridge closed the connection".into()));
        }
        BridgeResponse::parse(&line).map_err(AdapterError::Protocol)
    }

    fn expect_ok(&mut self, request: &BridgeRequest) -> Result<Option<String>, AdapterError> {
        match self.exchange(request)? {
            BridgeResponse::Ok(data) => Ok(data),
            BridgeResponse::Err(message) => Err(AdapterError::Protocol(message)),
        }
    }

    fn dump(&mut self) -> Result<(GuiPage, String), AdapterError> {
        let raw = self
            .expect_ok(&BridgeRequest::Dump)?
            .ok_or_else(|| AdapterError::Protocol("DUMP returned no document".into()))?;
        let (page, _meta) =
            parse_dump_auto(&raw).map_err(|e| AdapterError::Protocol(e.to_string()))?;
        Ok((page, raw))
    }

    fn crash_signature(&mut self) -> Result<Option<String>, AdapterError> {
        let data = self.expect_ok(&BridgeRequest::CrashQuery)?;
        Ok(data.filter(|s| s != "NONE"))
    }
}

fn outcome_from_hint(hint: &str) -> Option<StepOutcome> {
    match hint {
        "ok" => Some(StepOutcome::Ok),
        "no_effect" => Some(StepOutcome::NoEffect),
        "crash" => Some(StepOutcome::Crash(String::new())),
        _ => None,
    }
}

impl DeviceAdapter for BridgeAdapter {
    fn app_info(&self) -> &AppInfo {
        &self.info
    }

    fn current_page(&mut self) -> Result<GuiPage, AdapterError> {
        Ok(self.dump()?.0)
    }

    fn perform(&mut self, intent: &ActionIntent) -> Result<StepOutcome, AdapterError> {
        let (cx, cy) = intent.bounds.center();
        let before = self.dump()?.1;
        let hint = match intent.action {
            ActionKind::Click => self.expect_ok(&BridgeRequest::Tap(cx, cy))?,
            ActionKind::LongPress => self.expect_ok(&BridgeRequest::LongPress(cx, cy))?,
            ActionKind::Scroll => {
                let target_y = (intent.bounds.top - intent.bounds.height()).max(0);
                self.expect_ok(&BridgeRequest::Swipe(cx, cy, cx, target_y))?
            }
            ActionKind::Input => {
                self.expect_ok(&BridgeRequest::Tap(cx, cy))?;
                let payload = intent.payload.clone().unwrap_or_default();
                self.expect_ok(&BridgeRequest::Text(payload))?
            }
            ActionKind::None => return Ok(StepOutcome::NoEffect),
        };
        if let Some(message) = self.crash_signature()? {
            return Ok(StepOutcome::Crash(message));
        }
        if let Some(outcome) = hint.as_deref().and_then(outcome_from_hint) {
            return Ok(outcome);
        }
        // Bare OK from a real-device wrapper: fall back to dump comparison.
        let after = self.dump()?.1;
        Ok(if before == after { StepOutcome::NoEffect } else { StepOutcome::Ok })
    }

    fn reset(&mut self) -> Result<(), AdapterError> {
        self.expect_ok(&BridgeRequest::Reset)?;
        Ok(())
    }
}
