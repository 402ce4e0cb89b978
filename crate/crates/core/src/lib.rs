//! chatmonkey tests GUI applications by conversing with a language-model
//! oracle. Each iteration describes the current page in natural language,
//! asks the oracle what to do, decodes the answer into widget actions,
//! executes them through a device adapter (built-in simulator or external
//! bridge) and feeds the result back into the next prompt.

pub mod harness;
pub mod hierarchy;
pub mod matcher;
pub mod memorizer;
pub mod oracle;
pub mod prompter;
pub mod rng;
pub mod simapp;

pub use harness::{AppTarget, OracleTarget, RunArtifacts, RunConfig, RunError, TestReport};
pub use hierarchy::{ActionKind, AppInfo, Bounds, GuiPage, HierarchyError, Widget};
pub use matcher::{
    ActionIntent, LexicalScorer, MatchOutcome, MatchResult, MatcherError, NearbyMode,
    OperationStep, StepScorer, TemplateSet,
};
pub use memorizer::{ExecutedAction, OperationMemorizer};
pub use oracle::{
    OracleAnswer, OracleBackend, OracleConfig, OracleError, OracleSession, ScriptedBackend,
};
pub use prompter::{
    DynamicContext, Prompt, PromptKind, Prompter, PrompterConfig, PromptTemplates, StaticContext,
};
pub use rng::SplitMix64;
pub use simapp::{AdapterError, DeviceAdapter, SimApp, SimEngine, SimError, StepOutcome};
