//! Drives the full loop over the TCP bridge protocol: a BridgeServer wraps
//! the simulator on one end, the BridgeAdapter feeds the harness on the
//! other, so the dump/tap/text wire path is exercised end to end.

mod common;

use std::net::TcpListener;
use std::thread;

use chatmonkey::harness::{self, execute, AppTarget, OracleTarget, RunConfig};
use chatmonkey::hierarchy::AppInfo;
use chatmonkey::oracle::ScriptedBackend;
use chatmonkey::simapp::{BridgeAdapter, BridgeServer, DeviceAdapter, SimApp, StepOutcome};
use chatmonkey::matcher::ActionIntent;
use chatmonkey::hierarchy::ActionKind;

fn spawn_bridge(app: SimApp) -> (String, thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let handle = thread::spawn(move || {
        BridgeServer::new(app).serve(listener, Some(1)).unwrap();
    });
    (addr, handle)
}

fn manifest() -> AppInfo {
    AppInfo::from_manifest_file(common::fixture_root().join("manifests/money_tracker.txt"))
        .unwrap()
}

#[test]
fn full_walk_over_the_wire_covers_every_activity() {
    let (addr, server) = spawn_bridge(common::load_app("money_tracker.sim"));
    let mut adapter = BridgeAdapter::connect(addr.as_str(), manifest()).unwrap();
    let script = [
        "click Add",
        r#"input "Groceries" into Account name"#,
        r#"input "100" into Amount"#,
        "click Save",
        "click Import",
        "click Back",
        "click Income",
        "click Back",
        "click Setting",
        "click Back",
    ];
    let config = RunConfig::new(
        AppTarget::Bridge(addr.clone()),
        OracleTarget::ScriptedInline(script.iter().map(|s| s.to_string()).collect()),
    );
    let backend = ScriptedBackend::from_lines(script.iter().map(|s| s.to_string()));
    let artifacts = execute(&config, &mut adapter, Box::new(backend)).unwrap();
    assert_eq!(artifacts.report.activity_coverage, 1.0, "{:?}", artifacts.report);
    // the gated save transition went through typed inputs over TEXT
    assert!(artifacts
        .actions
        .iter()
        .any(|r| r.action.action == ActionKind::Input && r.outcome == "ok"));
    drop(adapter);
    server.join().unwrap();
}

#[test]
fn crash_over_the_wire_is_detected_and_reset() {
    let (addr, server) = spawn_bridge(common::load_app("smart_meter.sim"));
    let info = AppInfo::new(
        "Smart Meter",
        vec!["Devices".into(), "FindDevices".into(), "DeviceDetail".into(), "DeviceMenu".into()],
    )
    .unwrap();
    let mut adapter = BridgeAdapter::connect(addr.as_str(), info).unwrap();
    let script: Vec<String> = std::fs::read_to_string(
        common::fixture_root().join("scripts/smart_meter_crash.txt"),
    )
    .unwrap()
    .lines()
    .map(str::trim)
    .filter(|l| !l.is_empty() && !l.starts_with('#'))
    .map(str::to_string)
    .collect();
    let config = RunConfig::new(
        AppTarget::Bridge(addr.clone()),
        OracleTarget::ScriptedInline(script.clone()),
    );
    let backend = ScriptedBackend::from_lines(script);
    let artifacts = execute(&config, &mut adapter, Box::new(backend)).unwrap();
    assert_eq!(artifacts.report.crashes.len(), 1);
    assert!(artifacts.report.crashes[0].message.contains("IllegalStateException"));
    assert_eq!(artifacts.report.adapter_resets, 1);
    drop(adapter);
    server.join().unwrap();
}

#[test]
fn adapter_surfaces_page_and_outcomes() {
    let (addr, server) = spawn_bridge(common::load_app("money_tracker.sim"));
    let mut adapter = BridgeAdapter::connect(addr.as_str(), manifest()).unwrap();
    let page = adapter.current_page().unwrap();
    assert_eq!(page.activity_name, "Main");
    assert_eq!(page.widgets.len(), 6);
    // nearby lists survive the wire
    let income = page
        .widgets
        .iter()
        .find(|w| w.display_label() == Some("Income"))
        .unwrap();
    assert_eq!(income.nearby, vec!["Your balance"]);

    let add = page
        .widgets
        .iter()
        .enumerate()
        .find(|(_, w)| w.display_label() == Some("Add"))
        .unwrap();
    let intent = ActionIntent {
        step_text: "click Add".into(),
        widget_index: add.0,
        widget_key: "Add".into(),
        action: ActionKind::Click,
        payload: None,
        bounds: add.1.bounds,
    };
    assert_eq!(adapter.perform(&intent).unwrap(), StepOutcome::Ok);
    assert_eq!(adapter.current_page().unwrap().activity_name, "AddAccount");
    adapter.reset().unwrap();
    assert_eq!(adapter.current_page().unwrap().activity_name, "Main");
    drop(adapter);
    server.join().unwrap();
}

#[test]
fn bridge_run_via_config_needs_manifest() {
    let config = RunConfig::new(
        AppTarget::Bridge("127.0.0.1:1".into()),
        OracleTarget::ScriptedInline(vec!["click Add".into()]),
    );
    let err = harness::run(&config).unwrap_err();
    assert!(err.to_string().contains("manifest"), "{err}");
}
