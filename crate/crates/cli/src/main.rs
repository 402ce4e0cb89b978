//! Command-line front end: run the testing loop, generate matcher datasets,
//! evaluate the matcher, replay recorded traces and serve a simulated app
//! over the bridge protocol.

use std::net::TcpListener;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use chatmonkey::harness::{self, parse_duration, AppTarget, OracleTarget, RunConfig};
use chatmonkey::matcher::{
    evaluate_matcher, evaluate_pairs, generate_adversarial_cases, generate_eval_cases,
    generate_training_data, read_pairs_jsonl, write_pairs_jsonl, EvalSet, LexicalScorer,
    NearbyMode, TemplateSet,
};
use chatmonkey::oracle::OracleConfig;
use chatmonkey::rng::SplitMix64;
use chatmonkey::simapp::{BridgeServer, SimApp};

#[derive(Parser)]
#[command(name = "chatmonkey", version, about = "GUI testing driven by a language-model oracle")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the testing loop against a simulated app or bridge device.
    Run(RunArgs),
    /// Generate matcher training pairs from fixture apps.
    GenData(GenDataArgs),
    /// Evaluate the matcher on held-out instantiations or a dataset file.
    EvalMatcher(EvalArgs),
    /// Re-execute a recorded action trace against a simulator.
    Replay(ReplayArgs),
    /// Serve a simulated app over the bridge protocol.
    BridgeServe(BridgeServeArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Simulated-app definition file or bridge:HOST:PORT.
    #[arg(long)]
    app: Option<String>,
    /// scripted:FILE or remote:URL.
    #[arg(long)]
    oracle: Option<String>,
    /// Manifest summary (app name + activities); required for bridge targets.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Wall-clock budget, e.g. 30m, 90s, 500ms.
    #[arg(long)]
    budget: Option<String>,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for report.json, summary.txt, actions.jsonl,
    /// transcript.jsonl.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Matching threshold in [0,1].
    #[arg(long)]
    threshold: Option<f64>,
    /// Max consecutive feedback retries before the fallback action.
    #[arg(long)]
    retries: Option<u32>,
    /// Prompt template overrides (JSON).
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Score widgets on their label only, ignoring nearby texts.
    #[arg(long)]
    label_only: bool,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    history_window: Option<usize>,
    /// Config file (JSON); flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// JSON config file shape for `run`; every field optional, flags win.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    app: Option<String>,
    oracle: Option<String>,
    manifest: Option<PathBuf>,
    budget: Option<String>,
    max_steps: Option<u64>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    threshold: Option<f64>,
    retries: Option<u32>,
    templates: Option<PathBuf>,
    label_only: Option<bool>,
    model: Option<String>,
    temperature: Option<f64>,
    history_window: Option<usize>,
}

#[derive(Args)]
struct GenDataArgs {
    /// Simulated-app definition files (repeatable).
    #[arg(long = "app", required = true)]
    apps: Vec<PathBuf>,
    /// Output JSONL file of (step_text, widget_text, label) records.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Hard negatives per positive.
    #[arg(long, default_value_t = 3)]
    negatives: usize,
    /// Operation-description templates file (one per line).
    #[arg(long)]
    templates: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Simulated-app definition files (repeatable).
    #[arg(long = "app")]
    apps: Vec<PathBuf>,
    /// Labeled-pair dataset to evaluate instead of generating cases.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of templates held out for evaluation.
    #[arg(long, default_value_t = 12)]
    holdout: usize,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Extra adversarial (no-match) cases to mix in.
    #[arg(long, default_value_t = 0)]
    adversarial: usize,
    #[arg(long)]
    label_only: bool,
    #[arg(long)]
    templates: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    /// Simulated-app definition file.
    #[arg(long)]
    app: PathBuf,
    /// Trace file (actions.jsonl from a run).
    #[arg(long)]
    trace: PathBuf,
    /// Fail unless the replay ends in a crash.
    #[arg(long)]
    expect_crash: bool,
}

#[derive(Args)]
struct BridgeServeArgs {
    /// Simulated-app definition file.
    #[arg(long)]
    app: PathBuf,
    /// Listen address, e.g. 127.0.0.1:7333.
    #[arg(long)]
    listen: String,
    /// Serve a single connection, then exit.
    #[arg(long)]
    once: bool,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => cmd_run(args),
        Command::GenData(args) => cmd_gen_data(args),
        Command::EvalMatcher(args) => cmd_eval_matcher(args),
        Command::Replay(args) => cmd_replay(args),
        Command::BridgeServe(args) => cmd_bridge_serve(args),
    }
}

fn load_templates(path: &Option<PathBuf>) -> Result<TemplateSet> {
    Ok(match path {
        Some(p) => TemplateSet::from_file(p).with_context(|| format!("loading {}", p.display()))?,
        None => TemplateSet::embedded(),
    })
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let file: FileConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => FileConfig::default(),
    };

    let app = args
        .app
        .or(file.app)
        .context("--app is required (definition file or bridge:HOST:PORT)")?;
    let oracle = args
        .oracle
        .or(file.oracle)
        .context("--oracle is required (scripted:FILE or remote:URL)")?;
    let mut config = RunConfig::new(app.parse::<AppTarget>()?, oracle.parse::<OracleTarget>()?);
    config.manifest = args.manifest.or(file.manifest);
    if let Some(budget) = args.budget.or(file.budget) {
        config.budget = Some(parse_duration(&budget)?);
    }
    config.max_steps = args.max_steps.or(file.max_steps);
    config.seed = args.seed.or(file.seed).unwrap_or(0);
    config.out_dir = args.out.or(file.out);
    if let Some(threshold) = args.threshold.or(file.threshold) {
        if !(0.0..=1.0).contains(&threshold) {
            bail!("threshold {threshold} is outside [0,1]");
        }
        config.threshold = threshold;
    }
    if let Some(retries) = args.retries.or(file.retries) {
        config.max_feedback_retries = retries;
    }
    config.prompt_templates = args.templates.or(file.templates);
    if args.label_only || file.label_only.unwrap_or(false) {
        config.nearby_mode = NearbyMode::LabelOnly;
    }
    let mut oracle_config = OracleConfig::default();
    if let Some(model) = args.model.or(file.model) {
        oracle_config.model_name = model;
    }
    if let Some(t) = args.temperature.or(file.temperature) {
        oracle_config.temperature = t;
    }
    if let Some(w) = args.history_window.or(file.history_window) {
        oracle_config.history_window = w;
    }
    config.oracle_config = oracle_config;

    let artifacts = harness::run(&config)?;
    print!("{}", artifacts.report.summary());
    if let Some(dir) = &config.out_dir {
        println!("artifacts written to {}", dir.display());
    }
    Ok(())
}

fn load_pages(apps: &[PathBuf]) -> Result<Vec<chatmonkey::GuiPage>> {
    let mut pages = Vec::new();
    for path in apps {
        let app = SimApp::load(path)?;
        for activity in &app.info.activities {
            pages.push(app.gui_page(activity).expect("declared activity has a page"));
        }
    }
    Ok(pages)
}

fn cmd_gen_data(args: GenDataArgs) -> Result<()> {
    let templates = load_templates(&args.templates)?;
    let pages = load_pages(&args.apps)?;
    let mut rng = SplitMix64::new(args.seed);
    let scorer = LexicalScorer::default();
    let pairs = generate_training_data(&pages, &templates, args.negatives, &mut rng, &scorer)?;
    let mut out = std::fs::File::create(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    write_pairs_jsonl(&pairs, &mut out)?;
    let positives = pairs
        .iter()
        .filter(|p| p.label == chatmonkey::matcher::PairLabel::Positive)
        .count();
    println!(
        "wrote {} pairs ({} positive, {} negative) to {}",
        pairs.len(),
        positives,
        pairs.len() - positives,
        args.out.display()
    );
    Ok(())
}

fn cmd_eval_matcher(args: EvalArgs) -> Result<()> {
    let mode = if args.label_only { NearbyMode::LabelOnly } else { NearbyMode::WithNearby };
    let scorer = LexicalScorer::new(mode);
    if let Some(dataset) = &args.dataset {
        let file = std::fs::File::open(dataset)
            .with_context(|| format!("opening {}", dataset.display()))?;
        let pairs = read_pairs_jsonl(std::io::BufReader::new(file))?;
        let report = evaluate_pairs(&pairs, &scorer, args.threshold)?;
        println!(
            "pair classification: {}/{} correct, accuracy {:.4}",
            report.correct, report.total, report.accuracy
        );
        return Ok(());
    }
    if args.apps.is_empty() {
        bail!("--app fixtures or --dataset required");
    }
    let templates = load_templates(&args.templates)?;
    let pages = load_pages(&args.apps)?;
    let mut rng = SplitMix64::new(args.seed);
    let (_train, held_out) = templates.split(args.holdout, &mut rng);
    let mut eval: EvalSet = generate_eval_cases(pages, &held_out, &mut rng);
    if args.adversarial > 0 {
        let extra = generate_adversarial_cases(&eval.pages, args.adversarial, &mut rng);
        eval.cases.extend(extra);
    }
    let report = evaluate_matcher(&eval, &scorer, args.threshold)?;
    println!(
        "top-1 accuracy: {:.4} ({}/{} cases)",
        report.accuracy, report.correct, report.total
    );
    println!(
        "exact-label subset: {:.4} ({}/{})",
        report.exact_label_accuracy, report.exact_label_correct, report.exact_label_total
    );
    println!(
        "no-match: emitted {}, expected {}, precision {:.4}",
        report.no_match_emitted, report.expected_no_match, report.no_match_precision
    );
    Ok(())
}

fn cmd_replay(args: ReplayArgs) -> Result<()> {
    let app = SimApp::load(&args.app)?;
    let file = std::fs::File::open(&args.trace)
        .with_context(|| format!("opening {}", args.trace.display()))?;
    let trace = harness::read_trace(std::io::BufReader::new(file))?;
    let report = harness::replay(app, &trace);
    println!(
        "applied {}/{} steps; outcomes: {}",
        report.steps_applied,
        trace.len(),
        report.outcomes.join(", ")
    );
    if let Some(at) = report.diverged_at {
        bail!("trace diverged at step {at}");
    }
    match (&report.crash, args.expect_crash) {
        (Some(message), _) => println!("crash reproduced: {message}"),
        (None, true) => bail!("expected a crash, none reproduced"),
        (None, false) => {}
    }
    Ok(())
}

fn cmd_bridge_serve(args: BridgeServeArgs) -> Result<()> {
    let app = SimApp::load(&args.app)?;
    let listener = TcpListener::bind(&args.listen)
        .with_context(|| format!("binding {}", args.listen))?;
    println!("serving {} on {}", args.app.display(), listener.local_addr()?);
    let max = if args.once { Some(1) } else { None };
    BridgeServer::new(app).serve(listener, max)?;
    Ok(())
}
