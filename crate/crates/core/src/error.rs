//! Error types shared across the control plane.
//!
//! Every error carries a stable machine-readable code (`Error::code`) that
//! the CLI emits in `--json` mode and that scenario logs record verbatim.

use thiserror::Error;

use crate::manifest::ManifestViolation;

/// Control-plane error. One enum for the whole crate; variants map 1:1 onto
/// the documented error codes.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("access denied: {0}")]
    RbacDenied(String),

    #[error("duplicate node id {0}")]
    DuplicateNode(String),
    #[error("unknown hardware kind {0:?}")]
    UnknownHwKind(String),
    #[error("inventory fixture parse error: {0}")]
    FixtureParse(String),
    #[error("inventory already loaded; node composition is immutable after load")]
    InventoryAlreadyLoaded,
    #[error("node {node} already carries cluster label {existing}")]
    ConflictingClusterLabel { node: String, existing: String },
    #[error("unknown label {0}")]
    UnknownLabel(String),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("unknown site {0}")]
    UnknownSite(String),

    #[error("manifest invalid: {}", format_violations(.0))]
    ManifestInvalid(Vec<ManifestViolation>),
    #[error("unknown recipe {name}@{version}")]
    UnknownRecipe { name: String, version: String },
    #[error("dependency cycle: {}", .0.join(" -> "))]
    DependencyCycle(Vec<String>),
    #[error("recipe invalid: {0}")]
    RecipeInvalid(String),
    #[error("recipe {name}@{version} already published; registry is append-only")]
    RecipeExists { name: String, version: String },

    #[error("no members: resource-plane recipe {0} requires a non-empty membership")]
    EmptyMembership(String),
    #[error("no gated target applied to vcluster {0}")]
    UngatedTarget(String),
    #[error("node {0} is not ready")]
    NodeNotReady(String),
    #[error("node {node} vetting state is {state}, not healthy")]
    NodeVetted { node: String, state: String },
    #[error("node {0} is not a member of the vcluster")]
    NotAMember(String),
    #[error("unknown vcluster {0}")]
    UnknownVCluster(String),

    #[error("manifest digest {0} has no passed gate record")]
    UngatedManifest(String),
    #[error("another pipeline ({run_id}) is active on vcluster {vcluster}")]
    PipelineConflict { vcluster: String, run_id: String },
    #[error("not enough idle healthy nodes: requested {requested}, available {available}")]
    NoIdleNodes { requested: usize, available: usize },
    #[error("no rollback target recorded for vcluster {0}")]
    NoRollbackTarget(String),
    #[error("drain timeout on node {node} after {budget} ticks")]
    DrainTimeout { node: String, budget: u64 },

    #[error("invalid vetting state for {node}: {state}")]
    InvalidState { node: String, state: String },
    #[error("node {0} already has an open repair ticket")]
    DuplicateTicket(String),
    #[error("ticket {0} is not marked repaired")]
    TicketNotRepaired(String),
    #[error("unknown ticket {0}")]
    UnknownTicket(String),

    #[error("impossible request: {0}")]
    ImpossibleRequest(String),
    #[error("unknown fault target {0}")]
    UnknownTarget(String),
    #[error("invalid fault spec: {0}")]
    InvalidFaultSpec(String),
    #[error("scenario parse error: {0}")]
    ScenarioParse(String),

    #[error("unknown principal {0}")]
    UnknownPrincipal(String),
    #[error("unknown tenant {0}")]
    UnknownTenant(String),
    #[error("principals file invalid: {0}")]
    PrincipalsParse(String),

    #[error("state error: {0}")]
    State(String),
}

fn format_violations(violations: &[ManifestViolation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    /// Stable machine-readable code for `--json` output and logs.
    pub fn code(&self) -> &'static str {
        match self {
            Error::RbacDenied(_) => "RBAC_DENIED",
            Error::DuplicateNode(_) => "DUPLICATE_NODE",
            Error::UnknownHwKind(_) => "UNKNOWN_HW_KIND",
            Error::FixtureParse(_) => "FIXTURE_PARSE",
            Error::InventoryAlreadyLoaded => "INVENTORY_ALREADY_LOADED",
            Error::ConflictingClusterLabel { .. } => "CONFLICTING_CLUSTER_LABEL",
            Error::UnknownLabel(_) => "UNKNOWN_LABEL",
            Error::UnknownNode(_) => "UNKNOWN_NODE",
            Error::UnknownSite(_) => "UNKNOWN_SITE",
            Error::ManifestInvalid(_) => "MANIFEST_INVALID",
            Error::UnknownRecipe { .. } => "UNKNOWN_RECIPE",
            Error::DependencyCycle(_) => "DEPENDENCY_CYCLE",
            Error::RecipeInvalid(_) => "RECIPE_INVALID",
            Error::RecipeExists { .. } => "RECIPE_EXISTS",
            Error::EmptyMembership(_) => "EMPTY_MEMBERSHIP",
            Error::UngatedTarget(_) => "UNGATED_TARGET",
            Error::NodeNotReady(_) => "NODE_NOT_READY",
            Error::NodeVetted { .. } => "NODE_VETTED",
            Error::NotAMember(_) => "NOT_A_MEMBER",
            Error::UnknownVCluster(_) => "UNKNOWN_VCLUSTER",
            Error::UngatedManifest(_) => "UNGATED_MANIFEST",
            Error::PipelineConflict { .. } => "PIPELINE_CONFLICT",
            Error::NoIdleNodes { .. } => "NO_IDLE_NODES",
            Error::NoRollbackTarget(_) => "NO_ROLLBACK_TARGET",
            Error::DrainTimeout { .. } => "DRAIN_TIMEOUT",
            Error::InvalidState { .. } => "INVALID_STATE",
            Error::DuplicateTicket(_) => "DUPLICATE_TICKET",
            Error::TicketNotRepaired(_) => "TICKET_NOT_REPAIRED",
            Error::UnknownTicket(_) => "UNKNOWN_TICKET",
            Error::ImpossibleRequest(_) => "IMPOSSIBLE_REQUEST",
            Error::UnknownTarget(_) => "UNKNOWN_TARGET",
            Error::InvalidFaultSpec(_) => "INVALID_FAULT_SPEC",
            Error::ScenarioParse(_) => "SCENARIO_PARSE",
            Error::UnknownPrincipal(_) => "UNKNOWN_PRINCIPAL",
            Error::UnknownTenant(_) => "UNKNOWN_TENANT",
            Error::PrincipalsParse(_) => "PRINCIPALS_PARSE",
            Error::State(_) => "STATE",
        }
    }

    /// True for authorization failures (the CLI maps these to exit code 3).
    pub fn is_denied(&self) -> bool {
        matches!(self, Error::RbacDenied(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
