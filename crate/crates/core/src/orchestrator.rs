//! Layer-2 reconciler: desired state from a resolved manifest, drift against
//! the applied ledger, minimal transition plans, and node join/leave.
//!
//! The per-location ledger is the ground truth of "what ran". Every hook
//! execution appends entries through an API that maintains a hash chain;
//! anything that edits entries behind that API leaves a stale chain and is
//! reported as OutOfBandEdit drift on the next status check.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::canon;
use crate::error::{Error, Result};
use crate::manifest::recipe::{HookKind, VServiceRecipe};
use crate::manifest::registry::RecipeRegistry;
use crate::manifest::resolve::resolve;
use crate::manifest::VClusterManifest;
use crate::inventory::{Plane, PowerState};
use crate::state::ControlPlane;
use crate::tenancy::Principal;
use crate::vetting::VetState;

/// Pseudo-location for service-plane placements.
pub const SERVICE_PLANE: &str = "service-plane";

/// What should be (or is) deployed of one recipe: version plus the digest of
/// its manifest-level config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecipeSel {
    pub version: String,
    pub config: String,
}

impl RecipeSel {
    fn render(&self, name: &str) -> String {
        format!("{name}@{} cfg:{}", self.version, &self.config[..12.min(self.config.len())])
    }
}

pub type RecipeSet = BTreeMap<String, RecipeSel>;

/// Desired placement computed from a manifest and a member list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesiredState {
    pub vcluster_name: String,
    pub digest: String,
    pub per_node: BTreeMap<String, RecipeSet>,
    pub service_plane: RecipeSet,
}

/// Compute the desired state: resource-plane recipes fan out to every
/// member, service-plane recipes to the service plane only.
pub fn desired_state(
    manifest: &VClusterManifest,
    members: &[String],
    registry: &RecipeRegistry,
) -> Result<DesiredState> {
    desired_state_inner(manifest, members, registry, false)
}

/// Like `desired_state` but a resource-plane recipe with no members fans out
/// to nothing instead of erroring; used once a cluster legitimately shrinks
/// to zero resource nodes.
pub fn desired_state_lenient(
    manifest: &VClusterManifest,
    members: &[String],
    registry: &RecipeRegistry,
) -> Result<DesiredState> {
    desired_state_inner(manifest, members, registry, true)
}

fn desired_state_inner(
    manifest: &VClusterManifest,
    members: &[String],
    registry: &RecipeRegistry,
    allow_empty: bool,
) -> Result<DesiredState> {
    let recipes = resolve(manifest, registry)?;
    let configs: BTreeMap<&str, String> = manifest
        .refs
        .iter()
        .map(|r| (r.name.as_str(), r.config_digest()))
        .collect();

    let mut per_node: BTreeMap<String, RecipeSet> = BTreeMap::new();
    let mut service_plane = RecipeSet::new();
    for recipe in &recipes {
        let sel = RecipeSel {
            version: recipe.version.clone(),
            config: configs[recipe.name.as_str()].clone(),
        };
        if recipe.on_plane(Plane::Resource) {
            if members.is_empty() && !allow_empty {
                return Err(Error::EmptyMembership(recipe.name.clone()));
            }
            for node in members {
                per_node.entry(node.clone()).or_default().insert(recipe.name.clone(), sel.clone());
            }
        }
        if recipe.on_plane(Plane::Service) {
            service_plane.insert(recipe.name.clone(), sel.clone());
        }
    }
    Ok(DesiredState {
        vcluster_name: manifest.vcluster_name.clone(),
        digest: manifest.digest(),
        per_node,
        service_plane,
    })
}

// ---------------------------------------------------------------------------
// Applied state & ledgers
// ---------------------------------------------------------------------------

/// One executed effect, as recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub seq: u64,
    pub tick: u64,
    pub recipe: String,
    pub version: String,
    pub hook: HookKind,
    pub effect: crate::manifest::recipe::Effect,
}

/// Append-only effect ledger with a hash chain over its entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeLedger {
    entries: Vec<LedgerEntry>,
    chain: String,
}

impl Default for NodeLedger {
    fn default() -> Self {
        NodeLedger { entries: Vec::new(), chain: canon::sha256_hex(b"ledger-v1") }
    }
}

impl NodeLedger {
    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn next_seq(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn append(&mut self, entry: LedgerEntry) {
        self.chain = Self::link(&self.chain, &entry);
        self.entries.push(entry);
    }

    fn link(chain: &str, entry: &LedgerEntry) -> String {
        canon::sha256_hex(format!("{chain}|{}", canon::to_canonical_string(entry)).as_bytes())
    }

    /// Recompute the chain from the entries; false means the entries were
    /// edited outside the append API.
    pub fn verify(&self) -> bool {
        let mut chain = NodeLedger::default().chain;
        for entry in &self.entries {
            chain = Self::link(&chain, entry);
        }
        chain == self.chain
    }

    /// Derive the installed set (name -> version) by replaying install and
    /// remove hook entries.
    pub fn replay_set(&self) -> BTreeMap<String, String> {
        let mut set = BTreeMap::new();
        for entry in &self.entries {
            match entry.hook {
                HookKind::Install => {
                    set.insert(entry.recipe.clone(), entry.version.clone());
                }
                HookKind::Remove => {
                    set.remove(&entry.recipe);
                }
                _ => {}
            }
        }
        set
    }

    /// Out-of-band mutation hook for fault injection and tests: edits the
    /// entries without maintaining the chain, which is precisely what drift
    /// detection must catch.
    pub fn tamper(&mut self, edit: impl FnOnce(&mut Vec<LedgerEntry>)) {
        edit(&mut self.entries);
    }
}

/// What is actually deployed: recipe sets per location plus the effect
/// ledgers and the gated digest they were applied from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedState {
    pub vcluster_name: String,
    last_applied_digest: Option<String>,
    node_sets: BTreeMap<String, RecipeSet>,
    service_plane: RecipeSet,
    ledgers: BTreeMap<String, NodeLedger>,
}

impl AppliedState {
    pub fn new(vcluster_name: &str) -> Self {
        AppliedState {
            vcluster_name: vcluster_name.to_string(),
            last_applied_digest: None,
            node_sets: BTreeMap::new(),
            service_plane: RecipeSet::new(),
            ledgers: BTreeMap::new(),
        }
    }

    pub fn digest(&self) -> Option<&str> {
        self.last_applied_digest.as_deref()
    }

    /// Only `ControlPlane::set_applied_digest` (which checks the gate
    /// ledger) may call this.
    pub(crate) fn set_digest(&mut self, digest: &str) {
        self.last_applied_digest = Some(digest.to_string());
    }

    pub fn node_sets(&self) -> &BTreeMap<String, RecipeSet> {
        &self.node_sets
    }

    pub fn service_plane_set(&self) -> &RecipeSet {
        &self.service_plane
    }

    pub fn set_at(&self, location: &str) -> RecipeSet {
        if location == SERVICE_PLANE {
            self.service_plane.clone()
        } else {
            self.node_sets.get(location).cloned().unwrap_or_default()
        }
    }

    pub fn is_member(&self, node: &str) -> bool {
        self.node_sets.contains_key(node)
    }

    pub fn ledger(&self, location: &str) -> Option<&NodeLedger> {
        self.ledgers.get(location)
    }

    pub fn ledger_mut(&mut self, location: &str) -> &mut NodeLedger {
        self.ledgers.entry(location.to_string()).or_default()
    }

    pub fn ledgers(&self) -> &BTreeMap<String, NodeLedger> {
        &self.ledgers
    }

    pub(crate) fn record_install(&mut self, location: &str, name: &str, sel: RecipeSel) {
        if location == SERVICE_PLANE {
            self.service_plane.insert(name.to_string(), sel);
        } else {
            self.node_sets.entry(location.to_string()).or_default().insert(name.to_string(), sel);
        }
    }

    pub(crate) fn record_remove(&mut self, location: &str, name: &str) {
        if location == SERVICE_PLANE {
            self.service_plane.remove(name);
        } else if let Some(set) = self.node_sets.get_mut(location) {
            set.remove(name);
        }
    }

    pub(crate) fn record_config(&mut self, location: &str, name: &str, config: &str) {
        let set = if location == SERVICE_PLANE {
            Some(&mut self.service_plane)
        } else {
            self.node_sets.get_mut(location)
        };
        if let Some(set) = set {
            if let Some(sel) = set.get_mut(name) {
                sel.config = config.to_string();
            }
        }
    }

    /// Drop a node from the membership (ledger history is retained).
    pub(crate) fn drop_node(&mut self, node: &str) {
        self.node_sets.remove(node);
    }

    pub(crate) fn reset_ledger(&mut self, location: &str) {
        self.ledgers.insert(location.to_string(), NodeLedger::default());
    }

    /// Every location whose ledger fails verification or disagrees with the
    /// recorded recipe set.
    pub fn tampered_locations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (location, ledger) in &self.ledgers {
            let recorded: BTreeMap<String, String> = self
                .set_at(location)
                .iter()
                .map(|(name, sel)| (name.clone(), sel.version.clone()))
                .collect();
            if !ledger.verify() || ledger.replay_set() != recorded {
                out.push(location.clone());
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Drift & plans
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftClass {
    Missing,
    Unexpected,
    VersionSkew,
    OutOfBandEdit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftEntry {
    pub location: String,
    pub expected: String,
    pub found: String,
    pub classification: DriftClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub vcluster_name: String,
    pub entries: Vec<DriftEntry>,
}

impl DriftReport {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum PlannedAction {
    Install { recipe: String, version: String },
    Remove { recipe: String, version: String },
    Replace { recipe: String, from_version: String, to_version: String },
    Reconfigure { recipe: String, version: String },
    RepairLedger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocatedAction {
    pub location: String,
    #[serde(flatten)]
    pub action: PlannedAction,
}

/// Minimal effect plan transforming applied state into desired state.
/// Serializable to canonical JSON for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplyPlan {
    pub vcluster_name: String,
    pub target_digest: String,
    pub actions: Vec<LocatedAction>,
}

impl ApplyPlan {
    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn to_canonical_json(&self) -> String {
        canon::to_snapshot_string(self)
    }
}

/// Diff one location. `order` is the resolve order of recipe names; removals
/// run in reverse order, installs in forward order.
fn plan_location(
    location: &str,
    applied: &RecipeSet,
    desired: &RecipeSet,
    order: &[String],
    entries: &mut Vec<DriftEntry>,
    actions: &mut Vec<LocatedAction>,
) {
    let position = |name: &str| order.iter().position(|n| n == name).unwrap_or(usize::MAX);

    let mut removes: Vec<&String> =
        applied.keys().filter(|name| !desired.contains_key(*name)).collect();
    removes.sort_by_key(|name| std::cmp::Reverse(position(name)));
    for name in removes {
        let sel = &applied[name];
        entries.push(DriftEntry {
            location: location.to_string(),
            expected: "absent".into(),
            found: sel.render(name),
            classification: DriftClass::Unexpected,
        });
        actions.push(LocatedAction {
            location: location.to_string(),
            action: PlannedAction::Remove { recipe: name.clone(), version: sel.version.clone() },
        });
    }

    let mut fixes: Vec<&String> = desired.keys().collect();
    fixes.sort_by_key(|name| position(name));
    for name in fixes {
        let want = &desired[name];
        match applied.get(name) {
            None => {
                entries.push(DriftEntry {
                    location: location.to_string(),
                    expected: want.render(name),
                    found: "absent".into(),
                    classification: DriftClass::Missing,
                });
                actions.push(LocatedAction {
                    location: location.to_string(),
                    action: PlannedAction::Install {
                        recipe: name.clone(),
                        version: want.version.clone(),
                    },
                });
            }
            Some(have) if have.version != want.version => {
                entries.push(DriftEntry {
                    location: location.to_string(),
                    expected: want.render(name),
                    found: have.render(name),
                    classification: DriftClass::VersionSkew,
                });
                actions.push(LocatedAction {
                    location: location.to_string(),
                    action: PlannedAction::Replace {
                        recipe: name.clone(),
                        from_version: have.version.clone(),
                        to_version: want.version.clone(),
                    },
                });
            }
            Some(have) if have.config != want.config => {
                entries.push(DriftEntry {
                    location: location.to_string(),
                    expected: want.render(name),
                    found: have.render(name),
                    classification: DriftClass::VersionSkew,
                });
                actions.push(LocatedAction {
                    location: location.to_string(),
                    action: PlannedAction::Reconfigure {
                        recipe: name.clone(),
                        version: want.version.clone(),
                    },
                });
            }
            Some(_) => {}
        }
    }
}

/// Compute drift and the minimal plan. Locations are processed service
/// plane first, then nodes lexicographically.
pub fn plan_transition(
    applied: &AppliedState,
    desired: &DesiredState,
    order: &[String],
) -> (DriftReport, ApplyPlan) {
    let mut entries = Vec::new();
    let mut actions = Vec::new();
    let tampered = applied.tampered_locations();

    let mut locations: Vec<String> = vec![SERVICE_PLANE.to_string()];
    let mut node_locations: std::collections::BTreeSet<String> = std::collections::BTreeSet::new();
    node_locations.extend(desired.per_node.keys().cloned());
    node_locations.extend(applied.node_sets().keys().cloned());
    node_locations.extend(tampered.iter().filter(|l| l.as_str() != SERVICE_PLANE).cloned());
    locations.extend(node_locations);

    for location in &locations {
        if tampered.contains(location) {
            entries.push(DriftEntry {
                location: location.clone(),
                expected: "ledger chain intact".into(),
                found: "out-of-band ledger edit".into(),
                classification: DriftClass::OutOfBandEdit,
            });
            actions.push(LocatedAction {
                location: location.clone(),
                action: PlannedAction::RepairLedger,
            });
            continue;
        }
        let applied_set = applied.set_at(location);
        let desired_set = if location == SERVICE_PLANE {
            desired.service_plane.clone()
        } else {
            desired.per_node.get(location).cloned().unwrap_or_default()
        };
        plan_location(location, &applied_set, &desired_set, order, &mut entries, &mut actions);
    }

    (
        DriftReport { vcluster_name: desired.vcluster_name.clone(), entries },
        ApplyPlan {
            vcluster_name: desired.vcluster_name.clone(),
            target_digest: desired.digest.clone(),
            actions,
        },
    )
}

/// Result of a node_join / node_leave, listing the effects that ran.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplyReport {
    pub vcluster: String,
    pub node: String,
    pub effects: Vec<String>,
    pub scheduler_change: Option<String>,
}

// ---------------------------------------------------------------------------
// ControlPlane operations
// ---------------------------------------------------------------------------

impl ControlPlane {
    /// Desired state of a vcluster from its gated target and current label
    /// membership. Empty membership is allowed once the cluster exists.
    pub fn desired_for(&self, vcluster: &str) -> Result<DesiredState> {
        let vc = self.vcluster(vcluster)?;
        let digest = vc
            .applied
            .digest()
            .ok_or_else(|| Error::UngatedTarget(vcluster.to_string()))?;
        let manifest = self.manifest_of(digest)?;
        let members = self.members_of(vcluster)?;
        desired_state_lenient(manifest, &members, &self.registry)
    }

    /// Resolve order (names) of the vcluster's applied manifest.
    pub fn applied_order(&self, vcluster: &str) -> Result<Vec<String>> {
        let vc = self.vcluster(vcluster)?;
        let digest = vc
            .applied
            .digest()
            .ok_or_else(|| Error::UngatedTarget(vcluster.to_string()))?;
        let manifest = self.manifest_of(digest)?;
        Ok(resolve(manifest, &self.registry)?.into_iter().map(|r| r.name).collect())
    }

    /// Drift report plus minimal plan for a vcluster, without applying.
    pub fn compute_drift(&self, vcluster: &str) -> Result<(DriftReport, ApplyPlan)> {
        let desired = self.desired_for(vcluster)?;
        let order = self.applied_order(vcluster)?;
        let vc = self.vcluster(vcluster)?;
        Ok(plan_transition(&vc.applied, &desired, &order))
    }

    /// Reconcile: compute drift and, when `apply` is set, execute the plan
    /// under the vcluster lock.
    pub fn reconcile(
        &mut self,
        principal: &Principal,
        vcluster: &str,
        apply: bool,
    ) -> Result<(DriftReport, ApplyPlan)> {
        let (report, plan) = self.compute_drift(vcluster)?;
        if !apply {
            return Ok((report, plan));
        }
        self.check(principal, "reconcile.apply", self.vcluster_resource(vcluster))?;
        self.acquire_lock(vcluster, "reconcile")?;
        let desired = self.desired_for(vcluster)?;
        let result = self.apply_plan(vcluster, &plan, &desired);
        self.release_lock(vcluster);
        match result {
            Ok(()) => {
                self.vcluster_mut(vcluster)?.converged = true;
                self.emit(
                    "reconcile",
                    serde_json::json!({
                        "vcluster": vcluster,
                        "drift_entries": report.entries.len(),
                        "plan_actions": plan.actions.len(),
                    }),
                );
                Ok((report, plan))
            }
            Err(reason) => {
                self.vcluster_mut(vcluster)?.converged = false;
                Err(Error::State(format!("reconcile apply failed: {reason}")))
            }
        }
    }

    /// Execute one lifecycle hook at a location, appending its effects to
    /// the ledger. Fails only through injected faults.
    pub(crate) fn run_hook_at(
        &mut self,
        vcluster: &str,
        location: &str,
        recipe: &VServiceRecipe,
        hook: HookKind,
    ) -> std::result::Result<Vec<String>, String> {
        if self.fault_hook_fails(location, &recipe.name, hook) {
            self.emit(
                "hook-failed",
                serde_json::json!({
                    "vcluster": vcluster,
                    "location": location,
                    "recipe": recipe.id(),
                    "hook": hook.as_str(),
                }),
            );
            return Err(format!("{} hook of {} failed (injected fault)", hook.as_str(), recipe.id()));
        }
        let tick = self.clock.tick;
        let mut rendered = Vec::new();
        let vc = self.vclusters.get_mut(vcluster).expect("vcluster exists");
        let ledger = vc.applied.ledger_mut(location);
        for effect in recipe.hooks.get(hook) {
            rendered.push(effect.to_string());
            let entry = LedgerEntry {
                seq: ledger.next_seq(),
                tick,
                recipe: recipe.name.clone(),
                version: recipe.version.clone(),
                hook,
                effect: effect.clone(),
            };
            ledger.append(entry);
        }
        Ok(rendered)
    }

    fn install_at(
        &mut self,
        vcluster: &str,
        location: &str,
        name: &str,
        version: &str,
        desired: &DesiredState,
        effects: &mut Vec<String>,
    ) -> std::result::Result<(), String> {
        let recipe = self
            .registry
            .get(name, version)
            .map_err(|e| e.to_string())?
            .clone();
        let sel = if location == SERVICE_PLANE {
            desired.service_plane.get(name).cloned()
        } else {
            desired.per_node.get(location).and_then(|set| set.get(name).cloned())
        }
        .unwrap_or(RecipeSel { version: version.to_string(), config: canon::content_digest(&()) });
        effects.extend(self.run_hook_at(vcluster, location, &recipe, HookKind::Install)?);
        self.vclusters
            .get_mut(vcluster)
            .expect("vcluster exists")
            .applied
            .record_install(location, name, sel);
        effects.extend(self.run_hook_at(vcluster, location, &recipe, HookKind::Configure)?);
        effects.extend(self.run_hook_at(vcluster, location, &recipe, HookKind::Start)?);
        Ok(())
    }

    fn remove_at(
        &mut self,
        vcluster: &str,
        location: &str,
        name: &str,
        version: &str,
        effects: &mut Vec<String>,
    ) -> std::result::Result<(), String> {
        let recipe = self
            .registry
            .get(name, version)
            .map_err(|e| e.to_string())?
            .clone();
        effects.extend(self.run_hook_at(vcluster, location, &recipe, HookKind::Stop)?);
        effects.extend(self.run_hook_at(vcluster, location, &recipe, HookKind::Remove)?);
        self.vclusters
            .get_mut(vcluster)
            .expect("vcluster exists")
            .applied
            .record_remove(location, name);
        Ok(())
    }

    /// Execute a plan. On the first hook failure the remaining actions are
    /// abandoned and the failure reason returned.
    pub(crate) fn apply_plan(
        &mut self,
        vcluster: &str,
        plan: &ApplyPlan,
        desired: &DesiredState,
    ) -> std::result::Result<(), String> {
        let mut effects = Vec::new();
        for located in &plan.actions {
            let location = located.location.clone();
            match &located.action {
                PlannedAction::Install { recipe, version } => {
                    self.install_at(vcluster, &location, recipe, version, desired, &mut effects)?;
                }
                PlannedAction::Remove { recipe, version } => {
                    self.remove_at(vcluster, &location, recipe, version, &mut effects)?;
                }
                PlannedAction::Replace { recipe, from_version, to_version } => {
                    self.remove_at(vcluster, &location, recipe, from_version, &mut effects)?;
                    self.install_at(vcluster, &location, recipe, to_version, desired, &mut effects)?;
                }
                PlannedAction::Reconfigure { recipe, version } => {
                    let r = self.registry.get(recipe, version).map_err(|e| e.to_string())?.clone();
                    effects.extend(self.run_hook_at(vcluster, &location, &r, HookKind::Configure)?);
                    let config = if location == SERVICE_PLANE {
                        desired.service_plane.get(recipe).map(|s| s.config.clone())
                    } else {
                        desired
                            .per_node
                            .get(&location)
                            .and_then(|set| set.get(recipe))
                            .map(|s| s.config.clone())
                    };
                    if let Some(config) = config {
                        self.vclusters
                            .get_mut(vcluster)
                            .expect("vcluster exists")
                            .applied
                            .record_config(&location, recipe, &config);
                    }
                    effects.extend(self.run_hook_at(vcluster, &location, &r, HookKind::Start)?);
                }
                PlannedAction::RepairLedger => {
                    // wipe the tampered ledger, then bring the location back
                    // to its full desired set from scratch
                    {
                        let vc = self.vclusters.get_mut(vcluster).expect("vcluster exists");
                        vc.applied.reset_ledger(&location);
                        if location == SERVICE_PLANE {
                            let names: Vec<String> =
                                vc.applied.service_plane_set().keys().cloned().collect();
                            for name in names {
                                vc.applied.record_remove(&location, &name);
                            }
                        } else {
                            vc.applied.drop_node(&location);
                        }
                    }
                    let set = if location == SERVICE_PLANE {
                        desired.service_plane.clone()
                    } else {
                        desired.per_node.get(&location).cloned().unwrap_or_default()
                    };
                    let order = self.applied_order(vcluster).map_err(|e| e.to_string())?;
                    let mut names: Vec<&String> = set.keys().collect();
                    names.sort_by_key(|n| order.iter().position(|o| &o == n).unwrap_or(usize::MAX));
                    for name in names {
                        let version = set[name].version.clone();
                        self.install_at(vcluster, &location, name, &version, desired, &mut effects)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Bring a labelled, booted, healthy node up to its vcluster's applied
    /// set and register it with the scheduler.
    pub fn node_join(&mut self, vcluster: &str, node: &str) -> Result<ApplyReport> {
        let vc = self.vcluster(vcluster)?;
        let digest = vc
            .applied
            .digest()
            .ok_or_else(|| Error::UngatedTarget(vcluster.to_string()))?
            .to_string();
        let node_record = self.inventory.node(node)?;
        if node_record.power != PowerState::Ready {
            return Err(Error::NodeNotReady(node.to_string()));
        }
        match self.vetting.state_of(node) {
            Some(VetState::Healthy) => {}
            Some(state) => {
                return Err(Error::NodeVetted { node: node.to_string(), state: format!("{state:?}") })
            }
            None => return Err(Error::UnknownNode(node.to_string())),
        }
        let carries = node_record
            .vc_label()
            .map(|l| self.vcluster(vcluster).unwrap().hsm_labels.iter().any(|h| h == l))
            .unwrap_or(false);
        if !carries {
            return Err(Error::NotAMember(node.to_string()));
        }

        let manifest = self.manifest_of(&digest)?.clone();
        let desired = desired_state(&manifest, &[node.to_string()], &self.registry)?;
        let order: Vec<String> =
            resolve(&manifest, &self.registry)?.into_iter().map(|r| r.name).collect();
        let empty = desired.per_node.get(node).cloned().unwrap_or_default();

        let applied_now = self.vcluster(vcluster)?.applied.set_at(node);
        let mut effects = Vec::new();
        if applied_now != empty {
            let mut names: Vec<&String> =
                empty.keys().filter(|n| applied_now.get(*n) != empty.get(*n)).collect();
            names.sort_by_key(|n| order.iter().position(|o| &o == n).unwrap_or(usize::MAX));
            for name in names {
                let version = empty[name].version.clone();
                self.install_at(vcluster, node, name, &version, &desired, &mut effects)
                    .map_err(Error::State)?;
            }
        }

        let mut scheduler_change = None;
        let has_scheduler = self.scheduler_recipe_deployed(vcluster);
        if has_scheduler {
            let vc = self.vcluster_mut(vcluster)?;
            if let Some(sched) = vc.scheduler.as_mut() {
                if sched.registered.insert(node.to_string()) {
                    scheduler_change = Some("registered".to_string());
                }
            }
        }
        self.emit(
            "node-join",
            serde_json::json!({ "vcluster": vcluster, "node": node, "effects": effects.len() }),
        );
        Ok(ApplyReport {
            vcluster: vcluster.to_string(),
            node: node.to_string(),
            effects,
            scheduler_change,
        })
    }

    /// Tear a member down: remove hooks in reverse resolve order, scheduler
    /// deregistration, "vc:" label cleared. The cluster record persists even
    /// at zero members.
    pub fn node_leave(&mut self, vcluster: &str, node: &str, reason: &str) -> Result<ApplyReport> {
        let vc = self.vcluster(vcluster)?;
        if !vc.applied.is_member(node) {
            return Err(Error::NotAMember(node.to_string()));
        }
        self.fail_jobs_on_node(node, &format!("node-leave: {reason}"));

        let mut scheduler_change = None;
        {
            let vc = self.vcluster_mut(vcluster)?;
            if let Some(sched) = vc.scheduler.as_mut() {
                if sched.registered.remove(node) {
                    scheduler_change = Some("deregistered".to_string());
                }
                sched.draining.remove(node);
            }
        }

        let order = self.applied_order(vcluster)?;
        let set = self.vcluster(vcluster)?.applied.set_at(node);
        let mut names: Vec<&String> = set.keys().collect();
        names.sort_by_key(|n| {
            std::cmp::Reverse(order.iter().position(|o| &o == n).unwrap_or(usize::MAX))
        });
        let mut effects = Vec::new();
        for name in names {
            let version = set[name].version.clone();
            self.remove_at(vcluster, node, name, &version, &mut effects).map_err(Error::State)?;
        }
        self.vcluster_mut(vcluster)?.applied.drop_node(node);

        // clear the membership label through the facade
        if let Some(label) = self.inventory.nodes[node].vc_label().map(str::to_string) {
            let tick = self.clock.tick;
            let remaining: Vec<String> = self
                .inventory
                .group_members(&label)?
                .into_iter()
                .filter(|n| n != node)
                .collect();
            let tenant = self.inventory.label_owner(&label).map(str::to_string);
            self.inventory.assign_group(tick, &label, tenant, &remaining)?;
        }

        self.emit(
            "node-leave",
            serde_json::json!({
                "vcluster": vcluster,
                "node": node,
                "reason": reason,
                "effects": effects.len(),
            }),
        );
        Ok(ApplyReport {
            vcluster: vcluster.to_string(),
            node: node.to_string(),
            effects,
            scheduler_change,
        })
    }

    /// Whether the vcluster's applied service plane carries a scheduler-kind
    /// recipe.
    pub fn scheduler_recipe_deployed(&self, vcluster: &str) -> bool {
        let Ok(vc) = self.vcluster(vcluster) else { return false };
        vc.applied.service_plane_set().iter().any(|(name, sel)| {
            self.registry
                .get(name, &sel.version)
                .map(|r| r.kind == crate::manifest::recipe::RecipeKind::Scheduler)
                .unwrap_or(false)
        })
    }
}
