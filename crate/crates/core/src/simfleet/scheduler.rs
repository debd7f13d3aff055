//! Simulated batch scheduler: per-vcluster node registry with drain flags,
//! and the global job table.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

/// Per-vcluster scheduler state. Exists while a scheduler-kind recipe is
/// deployed on the vcluster's service plane.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SchedulerSim {
    /// Nodes accepting placements. Always a subset of healthy members.
    pub registered: BTreeSet<String>,
    /// Registered nodes that accept no new placements (running jobs finish).
    pub draining: BTreeSet<String>,
}

impl SchedulerSim {
    pub fn placeable(&self, node: &str) -> bool {
        self.registered.contains(node) && !self.draining.contains(node)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    FailedNode,
    Requeued,
}

/// A simulated compute job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub job_id: String,
    pub vcluster: String,
    pub nodes_requested: u32,
    pub duration: u64,
    pub state: JobState,
    pub placed_on: BTreeSet<String>,
    pub end_tick: Option<u64>,
    /// A job failed by a node is requeued exactly once.
    pub requeued_once: bool,
    pub submitted_tick: u64,
}

/// All jobs plus the FIFO queue of ids awaiting placement.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JobTable {
    pub jobs: BTreeMap<String, Job>,
    pub queue: Vec<String>,
}

impl JobTable {
    pub fn running_on(&self, node: &str) -> Vec<String> {
        self.jobs
            .values()
            .filter(|j| j.state == JobState::Running && j.placed_on.contains(node))
            .map(|j| j.job_id.clone())
            .collect()
    }

    /// Nodes currently occupied by running jobs.
    pub fn occupied_nodes(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for job in self.jobs.values() {
            if job.state == JobState::Running {
                out.extend(job.placed_on.iter().cloned());
            }
        }
        out
    }

    pub fn all_terminal(&self) -> bool {
        self.jobs
            .values()
            .all(|j| matches!(j.state, JobState::Done | JobState::FailedNode))
    }
}
