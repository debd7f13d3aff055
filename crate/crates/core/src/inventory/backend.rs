//! Mock control-plane backends behind the inventory facade.
//!
//! Two deliberately different wire dialects stand in for real management
//! planes. DialectA is verb-per-change and completes power actions on the
//! next tick; DialectB batches label add/remove into one message and
//! completes power actions only after a per-site delay. The facade emits
//! exactly one dialect-correct message per affected site; every message is
//! journaled, and replaying the journal against a pristine inventory
//! reproduces the live node state bit for bit.

use serde::{Deserialize, Serialize};

/// Backend wire dialect spoken by a site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dialect {
    DialectA,
    DialectB,
}

impl Dialect {
    /// Ticks between issuing a power action and its completion.
    pub fn default_power_delay(&self) -> u64 {
        match self {
            Dialect::DialectA => 1,
            Dialect::DialectB => 2,
        }
    }
}

/// Power action verbs accepted by both dialects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PowerAction {
    Boot,
    Reboot,
    Off,
}

impl PowerAction {
    pub fn as_str(&self) -> &'static str {
        match self {
            PowerAction::Boot => "boot",
            PowerAction::Reboot => "reboot",
            PowerAction::Off => "off",
        }
    }
}

/// DialectA message: one verb per change, node lists under `nodes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verb")]
pub enum DialectARequest {
    SetGroup {
        label: String,
        add: Vec<String>,
        #[serde(default)]
        remove: Vec<String>,
    },
    PowerBatch {
        action: PowerAction,
        nodes: Vec<String>,
    },
    StageImage {
        image: String,
        nodes: Vec<String>,
    },
    SetPartition {
        partition: Option<String>,
        nodes: Vec<String>,
    },
}

/// DialectB message: slash-namespaced verbs, node lists under `targets`,
/// power completion deferred by `complete_after` ticks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verb")]
pub enum DialectBRequest {
    #[serde(rename = "label/apply")]
    LabelApply {
        label: String,
        attach: Vec<String>,
        #[serde(default)]
        detach: Vec<String>,
    },
    #[serde(rename = "node/cycle")]
    NodeCycle {
        action: PowerAction,
        targets: Vec<String>,
        complete_after: u64,
    },
    #[serde(rename = "image/bind")]
    ImageBind { image: String, targets: Vec<String> },
    #[serde(rename = "partition/bind")]
    PartitionBind {
        partition: Option<String>,
        targets: Vec<String>,
    },
}

/// A dialect-tagged backend message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dialect", content = "body")]
pub enum BackendRequest {
    #[serde(rename = "dialect-a")]
    A(DialectARequest),
    #[serde(rename = "dialect-b")]
    B(DialectBRequest),
}

impl BackendRequest {
    pub fn dialect(&self) -> Dialect {
        match self {
            BackendRequest::A(_) => Dialect::DialectA,
            BackendRequest::B(_) => Dialect::DialectB,
        }
    }
}

/// Per-node outcome returned by a backend for one message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendResponse {
    pub accepted: Vec<String>,
    /// (node, reason) pairs; e.g. a Boot on an imageless node yields
    /// ("n003", "NoImage") here while other nodes proceed.
    pub rejected: Vec<(String, String)>,
    /// Tick at which an accepted power action completes, if any.
    pub completes_at: Option<u64>,
}

/// One journaled backend interaction. Crashes are journaled too so that
/// replay reproduces fault-driven power changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "entry")]
pub enum JournalEntry {
    Request {
        tick: u64,
        site: String,
        request: BackendRequest,
        response: BackendResponse,
    },
    Crash { tick: u64, node: String },
}

/// Schema check: the message must match the site's dialect and carry
/// well-formed fields. Returns a description of the first violation.
pub fn validate_request(site_dialect: Dialect, request: &BackendRequest) -> Result<(), String> {
    if request.dialect() != site_dialect {
        return Err(format!(
            "message dialect {:?} does not match site dialect {:?}",
            request.dialect(),
            site_dialect
        ));
    }
    let empty = |nodes: &[String]| nodes.is_empty();
    match request {
        BackendRequest::A(req) => match req {
            DialectARequest::SetGroup { label, add, remove } => {
                if label.is_empty() {
                    return Err("SetGroup: empty label".into());
                }
                if empty(add) && empty(remove) {
                    return Err("SetGroup: no nodes".into());
                }
                Ok(())
            }
            DialectARequest::PowerBatch { nodes, .. } => {
                if empty(nodes) {
                    return Err("PowerBatch: no nodes".into());
                }
                Ok(())
            }
            DialectARequest::StageImage { image, nodes } => {
                if image.is_empty() {
                    return Err("StageImage: empty image".into());
                }
                if empty(nodes) {
                    return Err("StageImage: no nodes".into());
                }
                Ok(())
            }
            DialectARequest::SetPartition { nodes, .. } => {
                if empty(nodes) {
                    return Err("SetPartition: no nodes".into());
                }
                Ok(())
            }
        },
        BackendRequest::B(req) => match req {
            DialectBRequest::LabelApply { label, attach, detach } => {
                if label.is_empty() {
                    return Err("label/apply: empty label".into());
                }
                if empty(attach) && empty(detach) {
                    return Err("label/apply: no targets".into());
                }
                Ok(())
            }
            DialectBRequest::NodeCycle { targets, complete_after, .. } => {
                if empty(targets) {
                    return Err("node/cycle: no targets".into());
                }
                if *complete_after == 0 {
                    return Err("node/cycle: complete_after must be >= 1".into());
                }
                Ok(())
            }
            DialectBRequest::ImageBind { image, targets } => {
                if image.is_empty() {
                    return Err("image/bind: empty image".into());
                }
                if empty(targets) {
                    return Err("image/bind: no targets".into());
                }
                Ok(())
            }
            DialectBRequest::PartitionBind { targets, .. } => {
                if empty(targets) {
                    return Err("partition/bind: no targets".into());
                }
                Ok(())
            }
        },
    }
}

/// Translate a facade-level change into the site's dialect.
pub struct MessageBuilder {
    pub dialect: Dialect,
    pub power_delay: u64,
}

impl MessageBuilder {
    pub fn label_change(&self, label: &str, add: Vec<String>, remove: Vec<String>) -> BackendRequest {
        match self.dialect {
            Dialect::DialectA => BackendRequest::A(DialectARequest::SetGroup {
                label: label.to_string(),
                add,
                remove,
            }),
            Dialect::DialectB => BackendRequest::B(DialectBRequest::LabelApply {
                label: label.to_string(),
                attach: add,
                detach: remove,
            }),
        }
    }

    pub fn power(&self, action: PowerAction, nodes: Vec<String>) -> BackendRequest {
        match self.dialect {
            Dialect::DialectA => {
                BackendRequest::A(DialectARequest::PowerBatch { action, nodes })
            }
            Dialect::DialectB => BackendRequest::B(DialectBRequest::NodeCycle {
                action,
                targets: nodes,
                complete_after: self.power_delay,
            }),
        }
    }

    pub fn stage_image(&self, image: &str, nodes: Vec<String>) -> BackendRequest {
        match self.dialect {
            Dialect::DialectA => BackendRequest::A(DialectARequest::StageImage {
                image: image.to_string(),
                nodes,
            }),
            Dialect::DialectB => BackendRequest::B(DialectBRequest::ImageBind {
                image: image.to_string(),
                targets: nodes,
            }),
        }
    }

    pub fn set_partition(&self, partition: Option<&str>, nodes: Vec<String>) -> BackendRequest {
        match self.dialect {
            Dialect::DialectA => BackendRequest::A(DialectARequest::SetPartition {
                partition: partition.map(str::to_string),
                nodes,
            }),
            Dialect::DialectB => BackendRequest::B(DialectBRequest::PartitionBind {
                partition: partition.map(str::to_string),
                targets: nodes,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dialect_mismatch_fails_validation() {
        let msg = BackendRequest::A(DialectARequest::PowerBatch {
            action: PowerAction::Boot,
            nodes: vec!["n1".into()],
        });
        assert!(validate_request(Dialect::DialectA, &msg).is_ok());
        assert!(validate_request(Dialect::DialectB, &msg).is_err());
    }

    #[test]
    fn builder_translates_per_dialect() {
        let a = MessageBuilder { dialect: Dialect::DialectA, power_delay: 1 };
        let b = MessageBuilder { dialect: Dialect::DialectB, power_delay: 3 };
        match a.power(PowerAction::Boot, vec!["n1".into()]) {
            BackendRequest::A(DialectARequest::PowerBatch { action, nodes }) => {
                assert_eq!(action, PowerAction::Boot);
                assert_eq!(nodes, vec!["n1".to_string()]);
            }
            other => panic!("wrong translation: {other:?}"),
        }
        match b.power(PowerAction::Boot, vec!["n1".into()]) {
            BackendRequest::B(DialectBRequest::NodeCycle { complete_after, .. }) => {
                assert_eq!(complete_after, 3);
            }
            other => panic!("wrong translation: {other:?}"),
        }
    }

    #[test]
    fn wire_forms_are_distinct() {
        let a = MessageBuilder { dialect: Dialect::DialectA, power_delay: 1 }
            .label_change("vc:daint", vec!["n1".into()], vec![]);
        let b = MessageBuilder { dialect: Dialect::DialectB, power_delay: 2 }
            .label_change("vc:daint", vec!["n1".into()], vec![]);
        let ja = serde_json::to_string(&a).unwrap();
        let jb = serde_json::to_string(&b).unwrap();
        assert!(ja.contains("SetGroup"));
        assert!(jb.contains("label/apply"));
        assert!(ja.contains("\"add\""));
        assert!(jb.contains("\"attach\""));
    }
}
