//! The control-plane state store.
//!
//! One `ControlPlane` value holds every subsystem: inventory, recipe
//! registry, manifest store, gate ledger, vclusters with applied state,
//! pipeline runs, vetting table, job table, fault specs, and the simulation
//! clock. All mutations are serialized through `&mut self`; reads see a
//! consistent snapshot. The whole value is serde-serializable, which is how
//! the CLI persists state between invocations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inventory::{Inventory, PowerState, VC_PREFIX};
use crate::manifest::registry::RecipeRegistry;
use crate::manifest::VClusterManifest;
use crate::orchestrator::AppliedState;
use crate::pipelines::{GateRecord, GateVerdict, PipelineRun};
use crate::simfleet::events::Event;
use crate::simfleet::faults::FaultSpec;
use crate::simfleet::rng::SimRng;
use crate::simfleet::scheduler::{JobState, JobTable, SchedulerSim};
use crate::tenancy::{authorize, Principal, ResourceOwner, TenantDirectory};
use crate::vetting::{VetState, VettingTable};

/// Discrete simulation clock. Every stochastic draw in the system derives
/// from `seed`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimClock {
    pub tick: u64,
    pub seed: u64,
}

impl SimClock {
    pub fn new(seed: u64) -> Self {
        SimClock { tick: 0, seed }
    }
}

/// Monotonic id counters; zero-padded ids keep map order equal to creation
/// order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub run: u64,
    pub job: u64,
    pub ticket: u64,
}

impl Counters {
    pub fn next_run(&mut self) -> String {
        self.run += 1;
        format!("run-{:04}", self.run)
    }

    pub fn next_job(&mut self) -> String {
        self.job += 1;
        format!("job-{:06}", self.job)
    }

    pub fn next_ticket(&mut self) -> String {
        self.ticket += 1;
        format!("tkt-{:04}", self.ticket)
    }
}

/// One vcluster: membership labels, applied state, rollback bookkeeping and
/// the simulated scheduler (present while a scheduler-kind recipe is
/// deployed on the service plane).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VCluster {
    pub name: String,
    pub tenant: Option<String>,
    pub hsm_labels: Vec<String>,
    pub applied: AppliedState,
    pub previous_digest: Option<String>,
    /// Batch size of the last deploy/rolling run; default for rollback.
    pub last_batch: usize,
    pub ephemeral: bool,
    /// False while a pipeline failed partway; uniformity is only asserted
    /// for converged clusters.
    pub converged: bool,
    pub scheduler: Option<SchedulerSim>,
}

impl VCluster {
    pub fn new(name: &str, tenant: Option<String>, hsm_labels: Vec<String>, ephemeral: bool) -> Self {
        VCluster {
            name: name.to_string(),
            tenant,
            hsm_labels,
            applied: AppliedState::new(name),
            previous_digest: None,
            last_batch: 1,
            ephemeral,
            converged: true,
            scheduler: None,
        }
    }
}

/// The whole control plane.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlPlane {
    pub clock: SimClock,
    pub tenants: TenantDirectory,
    pub inventory: Inventory,
    pub registry: RecipeRegistry,
    /// Content-addressed manifest store: digest -> manifest.
    pub manifests: BTreeMap<String, VClusterManifest>,
    /// At most one gate record per digest.
    pub gates: BTreeMap<String, GateRecord>,
    pub vclusters: BTreeMap<String, VCluster>,
    pub runs: Vec<PipelineRun>,
    /// vcluster -> run id holding its pipeline lock.
    pub locks: BTreeMap<String, String>,
    pub vetting: VettingTable,
    pub jobs: JobTable,
    pub faults: Vec<FaultSpec>,
    pub counters: Counters,
    rng_streams: BTreeMap<String, SimRng>,
    #[serde(skip)]
    pub events: Vec<Event>,
}

impl ControlPlane {
    pub fn new(seed: u64) -> Self {
        ControlPlane {
            clock: SimClock::new(seed),
            tenants: TenantDirectory::default(),
            inventory: Inventory::default(),
            registry: RecipeRegistry::with_builtins(),
            manifests: BTreeMap::new(),
            gates: BTreeMap::new(),
            vclusters: BTreeMap::new(),
            runs: Vec::new(),
            locks: BTreeMap::new(),
            vetting: VettingTable::default(),
            jobs: JobTable::default(),
            faults: Vec::new(),
            counters: Counters::default(),
            rng_streams: BTreeMap::new(),
            events: Vec::new(),
        }
    }

    // -- bootstrap -------------------------------------------------------------

    /// Load principals then inventory; the acting principal must exist in
    /// the principals document and hold the inventory.load privilege.
    pub fn init(
        &mut self,
        principals_text: &str,
        inventory_text: &str,
        acting_principal: &str,
    ) -> Result<crate::inventory::InventorySummary> {
        self.tenants = TenantDirectory::parse(principals_text)?;
        let principal = self.tenants.principal(acting_principal)?.clone();
        authorize(&principal, "inventory.load", &ResourceOwner::Unowned).into_result()?;
        let summary = self.inventory.load_fixture(inventory_text)?;
        for node_id in self.inventory.nodes.keys() {
            self.vetting.register_node(node_id);
        }
        self.emit(
            "inventory-loaded",
            serde_json::json!({
                "nodes": summary.total_nodes,
                "gpus": summary.total_gpus,
            }),
        );
        Ok(summary)
    }

    pub fn principal(&self, id: &str) -> Result<Principal> {
        self.tenants.principal(id).cloned()
    }

    // -- rng & events ----------------------------------------------------------

    /// The per-key random stream, forked lazily from the scenario seed.
    pub fn rng(&mut self, key: &str) -> &mut SimRng {
        let seed = self.clock.seed;
        self.rng_streams
            .entry(key.to_string())
            .or_insert_with(|| SimRng::fork(seed, key))
    }

    pub fn emit(&mut self, event: &str, data: serde_json::Value) {
        self.events.push(Event::new(self.clock.tick, event, data));
    }

    pub fn drain_events(&mut self) -> Vec<Event> {
        std::mem::take(&mut self.events)
    }

    // -- vcluster helpers --------------------------------------------------------

    pub fn vcluster(&self, name: &str) -> Result<&VCluster> {
        self.vclusters
            .get(name)
            .ok_or_else(|| Error::UnknownVCluster(name.to_string()))
    }

    pub fn vcluster_mut(&mut self, name: &str) -> Result<&mut VCluster> {
        self.vclusters
            .get_mut(name)
            .ok_or_else(|| Error::UnknownVCluster(name.to_string()))
    }

    /// Current members of a vcluster: union of its membership labels.
    pub fn members_of(&self, vcluster: &str) -> Result<Vec<String>> {
        let vc = self.vcluster(vcluster)?;
        let mut members = std::collections::BTreeSet::new();
        for label in &vc.hsm_labels {
            if let Ok(ids) = self.inventory.group_members(label) {
                members.extend(ids);
            }
        }
        Ok(members.into_iter().collect())
    }

    pub fn manifest_of(&self, digest: &str) -> Result<&VClusterManifest> {
        self.manifests
            .get(digest)
            .ok_or_else(|| Error::State(format!("manifest {digest} not in store")))
    }

    /// Store a manifest content-addressed; returns its digest.
    pub fn store_manifest(&mut self, manifest: &VClusterManifest) -> String {
        let digest = manifest.digest();
        self.manifests.entry(digest.clone()).or_insert_with(|| manifest.clone());
        digest
    }

    /// The single mutation path for `last_applied_digest`: refuses any
    /// digest lacking a Passed gate record.
    pub fn set_applied_digest(&mut self, vcluster: &str, digest: &str) -> Result<()> {
        let gated = self
            .gates
            .get(digest)
            .map(|g| g.verdict == GateVerdict::Passed)
            .unwrap_or(false);
        if !gated {
            return Err(Error::UngatedManifest(digest.to_string()));
        }
        let vc = self.vcluster_mut(vcluster)?;
        vc.applied.set_digest(digest);
        Ok(())
    }

    // -- locks -------------------------------------------------------------------

    pub fn acquire_lock(&mut self, vcluster: &str, run_id: &str) -> Result<()> {
        if let Some(holder) = self.locks.get(vcluster) {
            return Err(Error::PipelineConflict {
                vcluster: vcluster.to_string(),
                run_id: holder.clone(),
            });
        }
        self.locks.insert(vcluster.to_string(), run_id.to_string());
        Ok(())
    }

    pub fn release_lock(&mut self, vcluster: &str) {
        self.locks.remove(vcluster);
    }

    pub fn is_locked(&self, vcluster: &str) -> bool {
        self.locks.contains_key(vcluster)
    }

    // -- selection helpers ---------------------------------------------------------

    /// Idle nodes eligible for ephemeral test clusters: no "vc:" label,
    /// vetting Healthy, not mid-boot.
    pub fn idle_healthy_nodes(&self) -> Vec<String> {
        self.inventory
            .nodes
            .values()
            .filter(|n| n.is_idle())
            .filter(|n| n.power != PowerState::Booting)
            .filter(|n| self.vetting.state_of(&n.node_id) == Some(VetState::Healthy))
            .map(|n| n.node_id.clone())
            .collect()
    }

    // -- rbac helpers -----------------------------------------------------------------

    /// Authorize a mutating verb against a resource owner.
    pub fn check(&self, principal: &Principal, verb: &str, owner: ResourceOwner) -> Result<()> {
        authorize(principal, verb, &owner).into_result()
    }

    /// Owner of a label: the owning tenant of its group, if any.
    pub fn label_resource(&self, label: &str) -> ResourceOwner {
        match self.inventory.label_owner(label) {
            Some(t) => ResourceOwner::Tenant(t.to_string()),
            None => ResourceOwner::Unowned,
        }
    }

    /// Owner of a vcluster.
    pub fn vcluster_resource(&self, vcluster: &str) -> ResourceOwner {
        match self.vclusters.get(vcluster).and_then(|v| v.tenant.clone()) {
            Some(t) => ResourceOwner::Tenant(t),
            None => ResourceOwner::Unowned,
        }
    }

    /// Guard for label-wide inventory actions (power, partition, image):
    /// the label's owner must authorize, and no affected node may sit in a
    /// foreign tenant's vcluster.
    pub fn guard_label_action(&self, principal: &Principal, verb: &str, label: &str) -> Result<()> {
        self.check(principal, verb, self.label_resource(label))?;
        if principal.tenant.tenant_id().is_none() {
            return Ok(()); // "*" scope
        }
        let mine = principal.tenant.tenant_id().unwrap();
        for node_id in self.inventory.group_members(label)? {
            if let Some(vc_label) = self.inventory.nodes[&node_id].vc_label() {
                if let Some(owner) = self.inventory.label_owner(vc_label) {
                    if owner != mine {
                        return Err(Error::RbacDenied(format!(
                            "node {node_id} belongs to foreign tenant {owner}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    // -- snapshots & invariants -------------------------------------------------------

    /// Canonical snapshot of durable state: everything except the clock,
    /// rng streams, and the in-flight event buffer.
    pub fn snapshot(&self) -> String {
        #[derive(Serialize)]
        struct Snap<'a> {
            tenants: &'a TenantDirectory,
            inventory: &'a Inventory,
            registry: &'a RecipeRegistry,
            manifests: &'a BTreeMap<String, VClusterManifest>,
            gates: &'a BTreeMap<String, GateRecord>,
            vclusters: &'a BTreeMap<String, VCluster>,
            runs: &'a Vec<PipelineRun>,
            locks: &'a BTreeMap<String, String>,
            vetting: &'a VettingTable,
            jobs: &'a JobTable,
            counters: &'a Counters,
        }
        crate::canon::to_snapshot_string(&Snap {
            tenants: &self.tenants,
            inventory: &self.inventory,
            registry: &self.registry,
            manifests: &self.manifests,
            gates: &self.gates,
            vclusters: &self.vclusters,
            runs: &self.runs,
            locks: &self.locks,
            vetting: &self.vetting,
            jobs: &self.jobs,
            counters: &self.counters,
        })
    }

    /// Sweep every cross-module invariant; returns human-readable
    /// violations. Called once per tick by the scenario runner.
    pub fn check_invariants(&self) -> Vec<String> {
        let mut violations = Vec::new();

        if let Err(e) = self.inventory.check_invariants() {
            violations.push(format!("inventory: {e}"));
        }

        // gate soundness: applied digests always carry a Passed gate
        for (name, vc) in &self.vclusters {
            if let Some(digest) = vc.applied.digest() {
                let gated = self
                    .gates
                    .get(digest)
                    .map(|g| g.verdict == GateVerdict::Passed)
                    .unwrap_or(false);
                if !gated {
                    violations.push(format!("gate-soundness: {name} applied ungated {digest}"));
                }
            }
        }

        // scheduler hygiene: registered nodes are healthy members
        for (name, vc) in &self.vclusters {
            if let Some(sched) = &vc.scheduler {
                for node in &sched.registered {
                    if self.vetting.state_of(node) != Some(VetState::Healthy) {
                        violations.push(format!(
                            "scheduler-hygiene: {name} has non-healthy node {node} registered"
                        ));
                    }
                }
            }
        }

        // ticket bijection: open tickets <-> removed nodes, one-to-one
        let removed: Vec<&str> = self.vetting.nodes_in_state(VetState::Removed);
        let open_tickets: Vec<&str> = self.vetting.open_ticket_nodes();
        if removed != open_tickets {
            violations.push(format!(
                "ticket-bijection: removed nodes {removed:?} vs open tickets {open_tickets:?}"
            ));
        }

        // uniformity: converged, unlocked vclusters have identical member sets
        for (name, vc) in &self.vclusters {
            if !vc.converged || self.is_locked(name) {
                continue;
            }
            let mut reference: Option<(&String, String)> = None;
            for (node, set) in vc.applied.node_sets() {
                let rendered = format!("{set:?}");
                match &reference {
                    None => reference = Some((node, rendered)),
                    Some((first, expect)) => {
                        if *expect != rendered {
                            violations.push(format!(
                                "uniformity: {name} nodes {first} and {node} differ"
                            ));
                            break;
                        }
                    }
                }
            }
        }

        // no job occupies a non-healthy or foreign-partition node
        for job in self.jobs.jobs.values() {
            if job.state != JobState::Running {
                continue;
            }
            let mut partitions = std::collections::BTreeSet::new();
            for node in &job.placed_on {
                if self.vetting.state_of(node) != Some(VetState::Healthy) {
                    violations.push(format!(
                        "job-placement: {} occupies non-healthy node {node}",
                        job.job_id
                    ));
                }
                if let Some(n) = self.inventory.nodes.get(node) {
                    partitions.insert(n.partition_id.clone());
                }
            }
            if partitions.len() > 1 {
                violations.push(format!("job-placement: {} spans partitions", job.job_id));
            }
        }

        violations
    }

    /// Tenant-view fingerprint: everything owned by `tenant`, canonicalized.
    /// Used by the isolation property ("no op by tenant T mutates T' state").
    /// Shared (non-"vc:") labels are excluded by construction.
    pub fn tenant_view(&self, tenant: &str) -> String {
        #[derive(Serialize)]
        struct NodeView<'a> {
            power: PowerState,
            base_image: &'a Option<String>,
            partition: &'a Option<String>,
            vc_label: Option<&'a str>,
        }
        #[derive(Serialize)]
        struct View<'a> {
            groups: BTreeMap<&'a str, &'a crate::inventory::NodeGroup>,
            nodes: BTreeMap<&'a str, NodeView<'a>>,
            vclusters: BTreeMap<&'a str, &'a VCluster>,
            tickets: BTreeMap<&'a str, &'a crate::vetting::RepairTicket>,
        }
        let groups: BTreeMap<&str, &crate::inventory::NodeGroup> = self
            .inventory
            .groups
            .iter()
            .filter(|(label, g)| label.starts_with(VC_PREFIX) && g.tenant.as_deref() == Some(tenant))
            .map(|(label, g)| (label.as_str(), g))
            .collect();
        let mut nodes = BTreeMap::new();
        for group in groups.values() {
            for id in &group.member_ids {
                let n = &self.inventory.nodes[id];
                nodes.insert(
                    id.as_str(),
                    NodeView {
                        power: n.power,
                        base_image: &n.base_image,
                        partition: &n.partition_id,
                        vc_label: n.vc_label(),
                    },
                );
            }
        }
        let vclusters: BTreeMap<&str, &VCluster> = self
            .vclusters
            .iter()
            .filter(|(_, vc)| vc.tenant.as_deref() == Some(tenant))
            .map(|(name, vc)| (name.as_str(), vc))
            .collect();
        let tickets: BTreeMap<&str, &crate::vetting::RepairTicket> = self
            .vetting
            .tickets
            .iter()
            .filter(|(_, t)| {
                t.vcluster
                    .as_ref()
                    .and_then(|vc| self.vclusters.get(vc))
                    .and_then(|vc| vc.tenant.as_deref())
                    == Some(tenant)
            })
            .map(|(id, t)| (id.as_str(), t))
            .collect();
        crate::canon::to_snapshot_string(&View { groups, nodes, vclusters, tickets })
    }
}
