//! Layer-1 infrastructure: multi-site node inventory, label grouping, and
//! power/image/partition actions behind one facade over two mock backend
//! dialects.
//!
//! Node state is mutated exclusively by applying journaled backend messages
//! (plus journaled crash faults), so replaying the journal against a
//! pristine inventory reproduces the live state exactly.

pub mod backend;
pub mod fixture;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use backend::{
    validate_request, BackendRequest, BackendResponse, Dialect, DialectARequest, DialectBRequest,
    JournalEntry, MessageBuilder, PowerAction,
};

/// Reserved label namespace marking vcluster membership. A node carries at
/// most one label with this prefix.
pub const VC_PREFIX: &str = "vc:";

/// Hardware kind of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HwKind {
    CpuRome,
    GpuA100,
    GpuMi250x,
    GpuMi300a,
    GpuGh200,
    Service,
}

impl HwKind {
    pub fn parse(raw: &str) -> Result<Self> {
        match raw {
            "cpu-rome" => Ok(HwKind::CpuRome),
            "gpu-a100" => Ok(HwKind::GpuA100),
            "gpu-mi250x" => Ok(HwKind::GpuMi250x),
            "gpu-mi300a" => Ok(HwKind::GpuMi300a),
            "gpu-gh200" => Ok(HwKind::GpuGh200),
            "service" => Ok(HwKind::Service),
            other => Err(Error::UnknownHwKind(other.to_string())),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            HwKind::CpuRome => "cpu-rome",
            HwKind::GpuA100 => "gpu-a100",
            HwKind::GpuMi250x => "gpu-mi250x",
            HwKind::GpuMi300a => "gpu-mi300a",
            HwKind::GpuGh200 => "gpu-gh200",
            HwKind::Service => "service",
        }
    }
}

/// Node power state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PowerState {
    Off,
    Booting,
    Ready,
}

/// Deployment plane a node belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Plane {
    Resource,
    Service,
}

/// A compute or service endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub node_id: String,
    pub site_id: String,
    pub hw_kind: HwKind,
    pub gpus: u32,
    pub labels: BTreeSet<String>,
    pub power: PowerState,
    pub base_image: Option<String>,
    pub partition_id: Option<String>,
    pub plane: Plane,
}

impl Node {
    /// The node's "vc:" label, if any (invariant: at most one).
    pub fn vc_label(&self) -> Option<&str> {
        self.labels.iter().map(String::as_str).find(|l| l.starts_with(VC_PREFIX))
    }

    pub fn is_idle(&self) -> bool {
        self.vc_label().is_none()
    }
}

/// A managed site speaking one backend dialect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub site_id: String,
    pub backend_dialect: Dialect,
    /// Ticks until a power action issued to this site completes.
    pub power_delay: u64,
    pub node_ids: BTreeSet<String>,
}

/// A label-defined node group. `tenant` is set for "vc:" labels (owned) and
/// empty for plain shared labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeGroup {
    pub label: String,
    pub tenant: Option<String>,
    pub member_ids: BTreeSet<String>,
}

/// Per-kind node and GPU counts reported by `load_inventory`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InventorySummary {
    pub total_nodes: u64,
    pub total_gpus: u64,
    pub per_kind: BTreeMap<String, KindCount>,
    pub per_site: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindCount {
    pub nodes: u64,
    pub gpus: u64,
}

/// Per-node outcome of a label-wide action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionReport {
    pub label: String,
    pub action: String,
    pub outcomes: Vec<NodeOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeOutcome {
    pub node_id: String,
    /// "issued", "no-op", or an error tag such as "NoImage".
    pub status: String,
    /// Completion tick for power actions.
    pub ready_at: Option<u64>,
}

/// Node predicate used by `assign_group`. All criteria are conjunctive;
/// `limit` keeps the lexicographically first N matches.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeSelector {
    pub node_ids: Option<Vec<String>>,
    pub hw_kind: Option<HwKind>,
    pub site: Option<String>,
    pub label: Option<String>,
    /// Only nodes carrying no "vc:" label.
    pub idle_only: bool,
    pub limit: Option<usize>,
}

impl NodeSelector {
    pub fn ids(ids: Vec<String>) -> Self {
        NodeSelector { node_ids: Some(ids), ..Default::default() }
    }

    /// Resolve to a deterministic (lexicographic) node list.
    pub fn select(&self, inv: &Inventory) -> Result<Vec<String>> {
        let mut out = Vec::new();
        if let Some(ids) = &self.node_ids {
            let mut sorted: Vec<String> = ids.clone();
            sorted.sort();
            sorted.dedup();
            for id in sorted {
                if !inv.nodes.contains_key(&id) {
                    return Err(Error::UnknownNode(id));
                }
                out.push(id);
            }
        } else {
            for (id, node) in &inv.nodes {
                if let Some(kind) = self.hw_kind {
                    if node.hw_kind != kind {
                        continue;
                    }
                }
                if let Some(site) = &self.site {
                    if &node.site_id != site {
                        continue;
                    }
                }
                if let Some(label) = &self.label {
                    if !node.labels.contains(label) {
                        continue;
                    }
                }
                if self.idle_only && !node.is_idle() {
                    continue;
                }
                out.push(id.clone());
            }
        }
        if let Some(limit) = self.limit {
            out.truncate(limit);
        }
        Ok(out)
    }
}

/// Internal pending power completion: due tick -> node -> resulting state.
type PendingPower = BTreeMap<u64, BTreeMap<String, PowerState>>;

/// The multi-site inventory: single logical store, mutated only through the
/// backend journal.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Inventory {
    pub sites: BTreeMap<String, Site>,
    pub nodes: BTreeMap<String, Node>,
    pub groups: BTreeMap<String, NodeGroup>,
    pub journal: Vec<JournalEntry>,
    pending_power: PendingPower,
    loaded: bool,
}

impl Inventory {
    // -- loading ------------------------------------------------------------

    /// Register the fixture's nodes, all Off with no labels. Node counts are
    /// immutable afterwards.
    pub fn load_fixture(&mut self, text: &str) -> Result<InventorySummary> {
        if self.loaded {
            return Err(Error::InventoryAlreadyLoaded);
        }
        let parsed = fixture::parse_fixture(text)?;
        self.sites = parsed.sites;
        self.nodes = parsed.nodes;
        self.loaded = true;
        Ok(self.summary())
    }

    pub fn is_loaded(&self) -> bool {
        self.loaded
    }

    pub fn summary(&self) -> InventorySummary {
        let mut per_kind: BTreeMap<String, KindCount> = BTreeMap::new();
        let mut per_site: BTreeMap<String, u64> = BTreeMap::new();
        let mut total_gpus = 0u64;
        for node in self.nodes.values() {
            let entry = per_kind.entry(node.hw_kind.as_str().to_string()).or_insert(KindCount {
                nodes: 0,
                gpus: 0,
            });
            entry.nodes += 1;
            entry.gpus += u64::from(node.gpus);
            total_gpus += u64::from(node.gpus);
            *per_site.entry(node.site_id.clone()).or_insert(0) += 1;
        }
        InventorySummary {
            total_nodes: self.nodes.len() as u64,
            total_gpus,
            per_kind,
            per_site,
        }
    }

    pub fn node(&self, id: &str) -> Result<&Node> {
        self.nodes.get(id).ok_or_else(|| Error::UnknownNode(id.to_string()))
    }

    pub fn group(&self, label: &str) -> Result<&NodeGroup> {
        self.groups.get(label).ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    /// Members of a label in lexicographic order. The label must exist as a
    /// group; an empty membership is a valid answer, not an error.
    pub fn group_members(&self, label: &str) -> Result<Vec<String>> {
        Ok(self.group(label)?.member_ids.iter().cloned().collect())
    }

    /// The owning tenant of a label, if the group exists and is owned.
    pub fn label_owner(&self, label: &str) -> Option<&str> {
        self.groups.get(label).and_then(|g| g.tenant.as_deref())
    }

    // -- facade operations ----------------------------------------------------

    /// Declaratively set a label's membership to `selection`. For "vc:"
    /// labels the one-cluster-per-node rule is enforced before any message
    /// is emitted, and `tenant` names the owning tenant.
    pub fn assign_group(
        &mut self,
        tick: u64,
        label: &str,
        tenant: Option<String>,
        selection: &[String],
    ) -> Result<NodeGroup> {
        for id in selection {
            if !self.nodes.contains_key(id) {
                return Err(Error::UnknownNode(id.clone()));
            }
        }
        let desired: BTreeSet<String> = selection.iter().cloned().collect();
        if label.starts_with(VC_PREFIX) {
            for id in &desired {
                if let Some(existing) = self.nodes[id].vc_label() {
                    if existing != label {
                        return Err(Error::ConflictingClusterLabel {
                            node: id.clone(),
                            existing: existing.to_string(),
                        });
                    }
                }
            }
        }

        let current: BTreeSet<String> = self
            .groups
            .get(label)
            .map(|g| g.member_ids.clone())
            .unwrap_or_default();
        let add: BTreeSet<String> = desired.difference(&current).cloned().collect();
        let remove: BTreeSet<String> = current.difference(&desired).cloned().collect();

        for site_id in self.affected_sites(add.iter().chain(remove.iter())) {
            let site_add: Vec<String> = add
                .iter()
                .filter(|n| self.nodes[*n].site_id == site_id)
                .cloned()
                .collect();
            let site_remove: Vec<String> = remove
                .iter()
                .filter(|n| self.nodes[*n].site_id == site_id)
                .cloned()
                .collect();
            let request = self.builder(&site_id).label_change(label, site_add, site_remove);
            self.submit(tick, &site_id, request);
        }

        let group = self.groups.entry(label.to_string()).or_insert_with(|| NodeGroup {
            label: label.to_string(),
            tenant: None,
            member_ids: BTreeSet::new(),
        });
        group.member_ids = desired;
        if group.tenant.is_none() {
            group.tenant = tenant;
        }
        Ok(group.clone())
    }

    /// Issue a power action to every member of `label`. Nodes without a
    /// base image reject Boot/Reboot per node; the rest proceed.
    pub fn power(&mut self, tick: u64, label: &str, action: PowerAction) -> Result<ActionReport> {
        let members = self.group_members(label)?;
        Ok(self.power_nodes(tick, label, action, &members))
    }

    /// Power action over an explicit node list (used by pipelines and
    /// vetting, which act on single nodes or batches).
    pub fn power_nodes(
        &mut self,
        tick: u64,
        label: &str,
        action: PowerAction,
        nodes: &[String],
    ) -> ActionReport {
        let mut outcomes = Vec::new();
        for site_id in self.affected_sites(nodes.iter()) {
            let mut site_nodes = Vec::new();
            for id in nodes {
                let node = &self.nodes[id];
                if node.site_id != site_id {
                    continue;
                }
                site_nodes.push(id.clone());
            }
            let request = self.builder(&site_id).power(action, site_nodes);
            let response = self.submit(tick, &site_id, request);
            for id in &response.accepted {
                outcomes.push(NodeOutcome {
                    node_id: id.clone(),
                    status: "issued".into(),
                    ready_at: response.completes_at,
                });
            }
            for (id, reason) in &response.rejected {
                outcomes.push(NodeOutcome {
                    node_id: id.clone(),
                    status: reason.clone(),
                    ready_at: None,
                });
            }
        }
        outcomes.sort_by(|a, b| a.node_id.cmp(&b.node_id));
        ActionReport { label: label.to_string(), action: action.as_str().to_string(), outcomes }
    }

    /// Stage a base image on every member of `label`.
    pub fn stage_image(&mut self, tick: u64, label: &str, image: &str) -> Result<ActionReport> {
        let members = self.group_members(label)?;
        Ok(self.stage_image_nodes(tick, label, image, &members))
    }

    pub fn stage_image_nodes(
        &mut self,
        tick: u64,
        label: &str,
        image: &str,
        nodes: &[String],
    ) -> ActionReport {
        let mut outcomes = Vec::new();
        for site_id in self.affected_sites(nodes.iter()) {
            let site_nodes: Vec<String> = nodes
                .iter()
                .filter(|n| self.nodes[*n].site_id == site_id)
                .cloned()
                .collect();
            let request = self.builder(&site_id).stage_image(image, site_nodes.clone());
            self.submit(tick, &site_id, request);
            for id in site_nodes {
                outcomes.push(NodeOutcome { node_id: id, status: "issued".into(), ready_at: None });
            }
        }
        outcomes.sort_by(|a, b| a.node_id.cmp(&b.node_id));
        ActionReport { label: label.to_string(), action: "stage-image".into(), outcomes }
    }

    /// Tag every member of `label` with a network partition. Applying the
    /// partition a node already carries is a per-node no-op.
    pub fn set_partition(
        &mut self,
        tick: u64,
        label: &str,
        partition: Option<&str>,
    ) -> Result<ActionReport> {
        let members = self.group_members(label)?;
        let mut outcomes = Vec::new();
        let changing: Vec<String> = members
            .iter()
            .filter(|n| self.nodes[*n].partition_id.as_deref() != partition)
            .cloned()
            .collect();
        for site_id in self.affected_sites(changing.iter()) {
            let site_nodes: Vec<String> = changing
                .iter()
                .filter(|n| self.nodes[*n].site_id == site_id)
                .cloned()
                .collect();
            let request = self.builder(&site_id).set_partition(partition, site_nodes);
            self.submit(tick, &site_id, request);
        }
        for id in members {
            let status = if changing.contains(&id) { "issued" } else { "no-op" };
            outcomes.push(NodeOutcome { node_id: id, status: status.into(), ready_at: None });
        }
        Ok(ActionReport {
            label: label.to_string(),
            action: "set-partition".into(),
            outcomes,
        })
    }

    /// Whether two nodes can exchange simulated traffic: same partition tag
    /// (both untagged counts as the shared default fabric).
    pub fn can_communicate(&self, a: &str, b: &str) -> Result<bool> {
        let na = self.node(a)?;
        let nb = self.node(b)?;
        Ok(na.partition_id == nb.partition_id)
    }

    /// Journal and apply a crash fault: immediate power-off, pending power
    /// actions for the node cancelled.
    pub fn crash(&mut self, tick: u64, node_id: &str) -> Result<()> {
        if !self.nodes.contains_key(node_id) {
            return Err(Error::UnknownNode(node_id.to_string()));
        }
        self.journal.push(JournalEntry::Crash { tick, node: node_id.to_string() });
        self.apply_crash(node_id);
        Ok(())
    }

    /// Complete power actions due at or before `tick`.
    pub fn process_due(&mut self, tick: u64) -> Vec<(String, PowerState)> {
        let due: Vec<u64> = self.pending_power.range(..=tick).map(|(t, _)| *t).collect();
        let mut transitions = Vec::new();
        for t in due {
            if let Some(batch) = self.pending_power.remove(&t) {
                for (node_id, target) in batch {
                    if let Some(node) = self.nodes.get_mut(&node_id) {
                        node.power = target;
                        transitions.push((node_id, target));
                    }
                }
            }
        }
        transitions
    }

    /// Earliest pending completion tick, if any.
    pub fn next_power_completion(&self) -> Option<u64> {
        self.pending_power.keys().next().copied()
    }

    // -- backend plumbing -----------------------------------------------------

    fn builder(&self, site_id: &str) -> MessageBuilder {
        let site = &self.sites[site_id];
        MessageBuilder { dialect: site.backend_dialect, power_delay: site.power_delay }
    }

    fn affected_sites<'a>(&self, nodes: impl Iterator<Item = &'a String>) -> Vec<String> {
        let mut sites: BTreeSet<String> = BTreeSet::new();
        for id in nodes {
            if let Some(node) = self.nodes.get(id) {
                sites.insert(node.site_id.clone());
            }
        }
        sites.into_iter().collect()
    }

    fn submit(&mut self, tick: u64, site_id: &str, request: BackendRequest) -> BackendResponse {
        let dialect = self.sites[site_id].backend_dialect;
        debug_assert!(validate_request(dialect, &request).is_ok());
        let response = self.apply_request(tick, &request);
        self.journal.push(JournalEntry::Request {
            tick,
            site: site_id.to_string(),
            request,
            response: response.clone(),
        });
        response
    }

    fn apply_crash(&mut self, node_id: &str) {
        for batch in self.pending_power.values_mut() {
            batch.remove(node_id);
        }
        self.pending_power.retain(|_, batch| !batch.is_empty());
        if let Some(node) = self.nodes.get_mut(node_id) {
            node.power = PowerState::Off;
        }
    }

    fn apply_request(&mut self, tick: u64, request: &BackendRequest) -> BackendResponse {
        match request {
            BackendRequest::A(DialectARequest::SetGroup { label, add, remove })
            | BackendRequest::B(DialectBRequest::LabelApply {
                label,
                attach: add,
                detach: remove,
            }) => {
                for id in add {
                    if let Some(node) = self.nodes.get_mut(id) {
                        node.labels.insert(label.clone());
                    }
                }
                for id in remove {
                    if let Some(node) = self.nodes.get_mut(id) {
                        node.labels.remove(label);
                    }
                }
                BackendResponse {
                    accepted: add.iter().chain(remove.iter()).cloned().collect(),
                    rejected: vec![],
                    completes_at: None,
                }
            }
            BackendRequest::A(DialectARequest::PowerBatch { action, nodes }) => {
                self.apply_power(tick, *action, nodes, Dialect::DialectA.default_power_delay())
            }
            BackendRequest::B(DialectBRequest::NodeCycle { action, targets, complete_after }) => {
                self.apply_power(tick, *action, targets, *complete_after)
            }
            BackendRequest::A(DialectARequest::StageImage { image, nodes })
            | BackendRequest::B(DialectBRequest::ImageBind { image, targets: nodes }) => {
                for id in nodes {
                    if let Some(node) = self.nodes.get_mut(id) {
                        node.base_image = Some(image.clone());
                    }
                }
                BackendResponse { accepted: nodes.clone(), rejected: vec![], completes_at: None }
            }
            BackendRequest::A(DialectARequest::SetPartition { partition, nodes })
            | BackendRequest::B(DialectBRequest::PartitionBind { partition, targets: nodes }) => {
                for id in nodes {
                    if let Some(node) = self.nodes.get_mut(id) {
                        node.partition_id = partition.clone();
                    }
                }
                BackendResponse { accepted: nodes.clone(), rejected: vec![], completes_at: None }
            }
        }
    }

    fn apply_power(
        &mut self,
        tick: u64,
        action: PowerAction,
        nodes: &[String],
        delay: u64,
    ) -> BackendResponse {
        let due = tick + delay;
        let mut accepted = Vec::new();
        let mut rejected = Vec::new();
        for id in nodes {
            let Some(node) = self.nodes.get_mut(id) else {
                rejected.push((id.clone(), "UnknownNode".to_string()));
                continue;
            };
            let target = match action {
                PowerAction::Boot | PowerAction::Reboot => {
                    if node.base_image.is_none() {
                        rejected.push((id.clone(), "NoImage".to_string()));
                        continue;
                    }
                    node.power = PowerState::Booting;
                    PowerState::Ready
                }
                PowerAction::Off => PowerState::Off,
            };
            // a newer action supersedes any pending completion for the node
            for batch in self.pending_power.values_mut() {
                batch.remove(id);
            }
            self.pending_power.retain(|_, batch| !batch.is_empty());
            self.pending_power.entry(due).or_default().insert(id.clone(), target);
            accepted.push(id.clone());
        }
        BackendResponse { accepted, rejected, completes_at: Some(due) }
    }

    // -- replay & invariants ----------------------------------------------------

    /// The inventory as it was immediately after load: all nodes Off, no
    /// labels, no images, no partitions, empty journal.
    pub fn pristine(&self) -> Inventory {
        let mut fresh = Inventory {
            sites: self.sites.clone(),
            nodes: BTreeMap::new(),
            groups: BTreeMap::new(),
            journal: Vec::new(),
            pending_power: BTreeMap::new(),
            loaded: self.loaded,
        };
        for site in fresh.sites.values_mut() {
            // node_ids are load-time facts, kept as-is
            let _ = site;
        }
        for (id, node) in &self.nodes {
            fresh.nodes.insert(
                id.clone(),
                Node {
                    node_id: node.node_id.clone(),
                    site_id: node.site_id.clone(),
                    hw_kind: node.hw_kind,
                    gpus: node.gpus,
                    labels: BTreeSet::new(),
                    power: PowerState::Off,
                    base_image: None,
                    partition_id: None,
                    plane: node.plane,
                },
            );
        }
        fresh
    }

    /// Replay this inventory's journal against a pristine copy up to
    /// `final_tick`, returning the reconstructed node state.
    pub fn replayed(&self, final_tick: u64) -> Inventory {
        let mut fresh = self.pristine();
        for entry in &self.journal {
            match entry {
                JournalEntry::Request { tick, request, .. } => {
                    fresh.process_due(*tick);
                    fresh.apply_request(*tick, request);
                }
                JournalEntry::Crash { tick, node } => {
                    fresh.process_due(*tick);
                    fresh.apply_crash(node);
                }
            }
        }
        fresh.process_due(final_tick);
        fresh
    }

    /// Validate every journaled message against its site's dialect schema.
    pub fn validate_journal(&self) -> Result<()> {
        for entry in &self.journal {
            if let JournalEntry::Request { site, request, .. } = entry {
                let dialect = self
                    .sites
                    .get(site)
                    .ok_or_else(|| Error::UnknownSite(site.clone()))?
                    .backend_dialect;
                validate_request(dialect, request).map_err(Error::State)?;
            }
        }
        Ok(())
    }

    /// Check the structural invariants: vc-group disjointness, group/label
    /// agreement, one site per node, power implies image.
    pub fn check_invariants(&self) -> Result<()> {
        let mut seen_vc: BTreeMap<&str, &str> = BTreeMap::new();
        for (id, node) in &self.nodes {
            let vc: Vec<&str> = node
                .labels
                .iter()
                .map(String::as_str)
                .filter(|l| l.starts_with(VC_PREFIX))
                .collect();
            if vc.len() > 1 {
                return Err(Error::State(format!("node {id} carries {} vc labels", vc.len())));
            }
            if let Some(label) = vc.first() {
                seen_vc.insert(id, label);
            }
            if node.power == PowerState::Ready && node.base_image.is_none() {
                return Err(Error::State(format!("node {id} is ready without a base image")));
            }
            if !self.sites.get(&node.site_id).map(|s| s.node_ids.contains(id)).unwrap_or(false) {
                return Err(Error::State(format!("node {id} not registered in site {}", node.site_id)));
            }
        }
        for (label, group) in &self.groups {
            let labelled: BTreeSet<String> = self
                .nodes
                .values()
                .filter(|n| n.labels.contains(label))
                .map(|n| n.node_id.clone())
                .collect();
            if labelled != group.member_ids {
                return Err(Error::State(format!(
                    "group {label} membership out of sync with node labels"
                )));
            }
        }
        Ok(())
    }

    /// Canonical snapshot of the load-bearing inventory state (sites, nodes,
    /// groups), excluding the journal and pending queue. Byte-comparable.
    pub fn snapshot(&self) -> String {
        #[derive(Serialize)]
        struct Snap<'a> {
            sites: &'a BTreeMap<String, Site>,
            nodes: &'a BTreeMap<String, Node>,
            groups: &'a BTreeMap<String, NodeGroup>,
        }
        crate::canon::to_snapshot_string(&Snap {
            sites: &self.sites,
            nodes: &self.nodes,
            groups: &self.groups,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Inventory {
        let mut inv = Inventory::default();
        inv.load_fixture(
            r#"
            [[sites]]
            site_id = "sa"
            dialect = "dialect-a"

            [[sites]]
            site_id = "sb"
            dialect = "dialect-b"
            power_delay = 3

            [[nodes]]
            prefix = "n"
            count = 5
            hw_kind = "gpu-gh200"
            gpus_per_node = 4
            site = "sa"
            plane = "resource"

            [[nodes]]
            prefix = "m"
            count = 3
            hw_kind = "cpu-rome"
            site = "sb"
            plane = "resource"
        "#,
        )
        .unwrap();
        inv
    }

    #[test]
    fn empty_fixture_empty_summary() {
        let mut inv = Inventory::default();
        let summary = inv.load_fixture("").unwrap();
        assert_eq!(summary.total_nodes, 0);
        assert_eq!(summary.total_gpus, 0);
        assert!(summary.per_kind.is_empty());
    }

    #[test]
    fn load_registers_everything_off_and_unlabelled() {
        let inv = toy();
        assert!(inv.nodes.values().all(|n| n.power == PowerState::Off));
        assert!(inv.nodes.values().all(|n| n.labels.is_empty()));
        let summary = inv.summary();
        assert_eq!(summary.total_nodes, 8);
        assert_eq!(summary.total_gpus, 20);
        assert_eq!(summary.per_kind["gpu-gh200"].nodes, 5);
    }

    #[test]
    fn second_load_rejected() {
        let mut inv = toy();
        assert_eq!(inv.load_fixture("").unwrap_err().code(), "INVENTORY_ALREADY_LOADED");
    }

    #[test]
    fn assign_group_is_idempotent() {
        let mut inv = toy();
        let sel = vec!["n-0001".to_string(), "n-0002".to_string()];
        let g1 = inv.assign_group(0, "vc:daint", Some("mch".into()), &sel).unwrap();
        let journal_len = inv.journal.len();
        let g2 = inv.assign_group(0, "vc:daint", Some("mch".into()), &sel).unwrap();
        assert_eq!(g1, g2);
        assert_eq!(inv.journal.len(), journal_len, "idempotent re-assign emits no messages");
    }

    #[test]
    fn conflicting_vc_label_names_offender() {
        let mut inv = toy();
        inv.assign_group(0, "vc:eiger", Some("cscs".into()), &["n-0002".to_string()]).unwrap();
        let err = inv
            .assign_group(0, "vc:daint", Some("mch".into()), &["n-0001".into(), "n-0002".into()])
            .unwrap_err();
        match err {
            Error::ConflictingClusterLabel { node, existing } => {
                assert_eq!(node, "n-0002");
                assert_eq!(existing, "vc:eiger");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn vc_disjointness_brute_force_over_toy() {
        // every pair of vc groups stays disjoint across a mutation sequence
        let mut inv = toy();
        inv.assign_group(0, "vc:a", Some("t".into()), &["n-0001".into(), "n-0002".into()]).unwrap();
        inv.assign_group(0, "vc:b", Some("t".into()), &["n-0003".into()]).unwrap();
        inv.assign_group(0, "vc:a", Some("t".into()), &["n-0002".into()]).unwrap();
        inv.assign_group(0, "vc:b", Some("t".into()), &["n-0003".into(), "n-0001".into()]).unwrap();
        let groups: Vec<&NodeGroup> =
            inv.groups.values().filter(|g| g.label.starts_with(VC_PREFIX)).collect();
        for i in 0..groups.len() {
            for j in i + 1..groups.len() {
                let overlap: Vec<_> =
                    groups[i].member_ids.intersection(&groups[j].member_ids).collect();
                assert!(overlap.is_empty(), "{} and {} overlap", groups[i].label, groups[j].label);
            }
        }
        inv.check_invariants().unwrap();
    }

    #[test]
    fn group_members_sorted() {
        let mut inv = toy();
        inv.assign_group(0, "vc:daint", Some("t".into()), &["n-0003".into(), "n-0001".into()])
            .unwrap();
        assert_eq!(inv.group_members("vc:daint").unwrap(), vec!["n-0001", "n-0003"]);
        // shrink to one member: list reflects it, empty group is fine later
        inv.assign_group(0, "vc:daint", Some("t".into()), &["n-0003".into()]).unwrap();
        assert_eq!(inv.group_members("vc:daint").unwrap(), vec!["n-0003"]);
        inv.assign_group(0, "vc:daint", Some("t".into()), &[]).unwrap();
        assert_eq!(inv.group_members("vc:daint").unwrap(), Vec::<String>::new());
        assert!(inv.group_members("vc:ghost").is_err());
    }

    #[test]
    fn dialect_a_boot_ready_after_one_tick() {
        let mut inv = toy();
        let nodes: Vec<String> = (1..=4).map(|i| format!("n-{i:04}")).collect();
        inv.assign_group(0, "vc:x", Some("t".into()), &nodes).unwrap();
        inv.stage_image(0, "vc:x", "base/minimal-v1").unwrap();
        let report = inv.power(5, "vc:x", PowerAction::Boot).unwrap();
        assert!(report.outcomes.iter().all(|o| o.status == "issued" && o.ready_at == Some(6)));
        assert!(inv.nodes["n-0001"].power == PowerState::Booting);
        inv.process_due(6);
        for id in &nodes {
            assert_eq!(inv.nodes[id].power, PowerState::Ready, "{id}");
        }
    }

    #[test]
    fn dialect_b_boot_ready_after_site_delay() {
        let mut inv = toy();
        inv.assign_group(0, "vc:y", Some("t".into()), &["m-0001".to_string()]).unwrap();
        inv.stage_image(0, "vc:y", "img").unwrap();
        let report = inv.power(10, "vc:y", PowerAction::Boot).unwrap();
        assert_eq!(report.outcomes[0].ready_at, Some(13));
        inv.process_due(12);
        assert_eq!(inv.nodes["m-0001"].power, PowerState::Booting);
        inv.process_due(13);
        assert_eq!(inv.nodes["m-0001"].power, PowerState::Ready);
    }

    #[test]
    fn boot_without_image_fails_per_node() {
        let mut inv = toy();
        inv.assign_group(0, "vc:z", Some("t".into()), &["n-0001".into(), "n-0002".into()]).unwrap();
        inv.stage_image_nodes(0, "vc:z", "img", &["n-0001".to_string()]);
        let report = inv.power(0, "vc:z", PowerAction::Boot).unwrap();
        let by_node: BTreeMap<_, _> =
            report.outcomes.iter().map(|o| (o.node_id.as_str(), o.status.as_str())).collect();
        assert_eq!(by_node["n-0001"], "issued");
        assert_eq!(by_node["n-0002"], "NoImage");
        inv.process_due(1);
        assert_eq!(inv.nodes["n-0001"].power, PowerState::Ready);
        assert_eq!(inv.nodes["n-0002"].power, PowerState::Off);
    }

    #[test]
    fn partition_idempotent_and_blocks_traffic() {
        let mut inv = toy();
        inv.assign_group(0, "vc:ml", Some("t".into()), &["n-0001".into(), "n-0002".into()]).unwrap();
        inv.assign_group(0, "vc:qa", Some("t".into()), &["n-0003".into()]).unwrap();
        inv.set_partition(0, "vc:ml", Some("pkey-0x21")).unwrap();
        let journal_len = inv.journal.len();
        let second = inv.set_partition(0, "vc:ml", Some("pkey-0x21")).unwrap();
        assert!(second.outcomes.iter().all(|o| o.status == "no-op"));
        assert_eq!(inv.journal.len(), journal_len, "no-op emits no messages");
        inv.set_partition(0, "vc:qa", Some("pkey-0x22")).unwrap();

        // traffic within a partition flows, across partitions is refused
        assert!(inv.can_communicate("n-0001", "n-0002").unwrap());
        assert!(!inv.can_communicate("n-0001", "n-0003").unwrap());
        // untagged nodes share the default fabric
        assert!(inv.can_communicate("n-0004", "n-0005").unwrap());
        assert!(!inv.can_communicate("n-0004", "n-0001").unwrap());
    }

    #[test]
    fn journal_replay_reproduces_state() {
        let mut inv = toy();
        inv.assign_group(0, "vc:daint", Some("t".into()), &["n-0001".into(), "n-0002".into()])
            .unwrap();
        inv.stage_image(1, "vc:daint", "img-a").unwrap();
        inv.power(2, "vc:daint", PowerAction::Boot).unwrap();
        inv.process_due(3);
        inv.set_partition(4, "vc:daint", Some("p1")).unwrap();
        inv.crash(5, "n-0002").unwrap();
        inv.power_nodes(6, "vc:daint", PowerAction::Reboot, &["n-0002".to_string()]);
        inv.process_due(9);

        let replayed = inv.replayed(9);
        assert_eq!(replayed.nodes, inv.nodes);
        inv.validate_journal().unwrap();
    }

    #[test]
    fn conservation_under_mutations() {
        let mut inv = toy();
        let before = inv.summary();
        inv.assign_group(0, "vc:daint", Some("t".into()), &["n-0001".into()]).unwrap();
        inv.stage_image(0, "vc:daint", "img").unwrap();
        inv.power(0, "vc:daint", PowerAction::Boot).unwrap();
        inv.process_due(2);
        let after = inv.summary();
        assert_eq!(before.total_nodes, after.total_nodes);
        assert_eq!(before.per_kind, after.per_kind);
    }

    #[test]
    fn selector_is_deterministic_and_filters() {
        let inv = toy();
        let sel = NodeSelector {
            hw_kind: Some(HwKind::GpuGh200),
            limit: Some(3),
            ..Default::default()
        };
        assert_eq!(sel.select(&inv).unwrap(), vec!["n-0001", "n-0002", "n-0003"]);
        let unknown = NodeSelector::ids(vec!["ghost".into()]);
        assert!(unknown.select(&inv).is_err());
    }
}
